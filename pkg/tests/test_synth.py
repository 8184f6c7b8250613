import json

import numpy as np
import pytest

from crustcore.harmonics import southern_hemisphere, ynk_all
from crustcore.inverse import power_spectrum
from crustcore.quadrature import full_sphere_rule
from crustcore.synth import (REFERENCE_CORE, DatasetConfig, TrueModel, generate_dataset, load_dataset,
                             paper_model, sample_model, synthesize, verify_manifest)

from oracles import cap_crust_potential, real_ylm

SMALL = dict(data_band=12, crust_band=40, core_band=8)


def test_reference_models():
    m1, m2 = paper_model(1), paper_model(2)
    assert (m1.b1, m1.b2, m1.k_exp) == (15.0, 10.0, 3)
    assert (m1.gamma1, m1.gamma2) == (1 / 20, 1 / 2)
    assert (m2.gamma1, m2.gamma2) == (3 / 5, 3 / 5)
    assert m1.y1 == (0.0, 0.0, -1.0)
    assert np.allclose(m1.y2, (0.0, 0.5, -np.sqrt(3) / 2))
    assert m1.a_coeffs[(0, 1)] == 32.0 and m1.a_coeffs[(5, 5)] == 8.0
    assert len(REFERENCE_CORE) == 6
    with pytest.raises(ValueError):
        paper_model(3)


def test_model_validation():
    kw = dict(b1=1.0, b2=1.0, y1=(0, 0, 1), y2=(0, 0, -1), gamma1=0.5, gamma2=0.5, k_exp=3, a_coeffs={})
    TrueModel(**kw)
    with pytest.raises(ValueError):
        TrueModel(**{**kw, "y1": (0, 0, 2)})
    with pytest.raises(ValueError):
        TrueModel(**{**kw, "gamma2": 1.0})
    with pytest.raises(ValueError):
        TrueModel(**{**kw, "k_exp": -1})


def test_magnetization_values():
    m = paper_model(1)
    assert np.all(m.m_values([[0.0, 0.0, 1.0]]) == 0)
    at_y1 = m.m_values([m.y1])[0]
    t = np.sqrt(3) / 2
    expected = 15.0 + 10.0 * ((t - 0.5) / 0.5) ** 3
    assert np.allclose(at_y1, expected * np.array(m.y1), rtol=1e-14)


def test_core_density_projection():
    m = paper_model(1)
    rule = full_sphere_rule(1.0, 8)
    proj = (rule.weights * m.h_values(rule.dirs)) @ real_ylm(5, rule.dirs)
    assert proj[1 + 0] == pytest.approx(32.0, rel=1e-12)  # a_{1,1}
    assert proj[0] == pytest.approx(32.0, rel=1e-12)
    assert proj[25 + 4] == pytest.approx(8.0, rel=1e-12)
    assert abs(proj[2]) < 1e-12


def test_model_dict_round_trip():
    m = paper_model(2)
    assert TrueModel.from_dict(json.loads(json.dumps(m.to_dict()))) == m


@pytest.mark.parametrize("variant", [1, 2])
def test_support_lies_in_southern_hemisphere(variant):
    m, _ = sample_model(paper_model(variant), 1.0, 0.5, 40, 8, southern_hemisphere())
    for piece in m.pieces:
        nz = np.linalg.norm(piece.values, axis=1) > 0
        assert np.all(piece.rule.dirs[nz, 2] <= 1e-12)


def test_sample_model_validation():
    with pytest.raises(ValueError):
        sample_model(paper_model(1), 0.5, 0.8)


def test_dataset_config_validation():
    with pytest.raises(ValueError):
        DatasetConfig(R1=1.2)
    with pytest.raises(ValueError):
        DatasetConfig(data_band=0)


def test_sum_of_parts(datasets):
    ds = datasets[0.5]
    assert ds.has_truth
    scale = np.abs(ds.phi.values).max()
    assert np.abs(ds.phi.values - ds.phi0.values - ds.phi1.values).max() < 1e-12 * scale


def test_crustal_data_matches_spectral_oracle(datasets):
    ds = datasets[0.5]
    rule = ds.phi0.rule
    pick = np.linspace(0, rule.size - 1, 200).astype(int)
    ref = cap_crust_potential(ds.model, 1.0, 1.06, rule.dirs[pick])
    err = np.abs(ds.phi0.values[pick] - ref).max()
    assert err < 1e-10 * np.abs(ref).max()


def test_core_dominates_low_degrees(datasets):
    ds = datasets[0.5]
    r0 = power_spectrum(ds.phi0, 15).values
    r1 = power_spectrum(ds.phi1, 15).values
    assert np.all(r1[:2] > 2 * r0[:2])
    assert r0[3:].sum() > 0
    assert np.all(r1[6:] < 1e-20 * r1[0])


@pytest.mark.xfail(strict=True, reason="at degree 2 the crustal power (about 14) exceeds the core's (about 3.6)")
def test_core_dominates_degree_two(datasets):
    ds = datasets[0.5]
    assert power_spectrum(ds.phi1, 2).values[2] > power_spectrum(ds.phi0, 2).values[2]


def test_core_part_matches_closed_form(datasets):
    ds = datasets[0.5]
    rule = ds.phi1.rule
    pick = np.arange(0, rule.size, 97)
    d = rule.dirs[pick]
    Y = ynk_all(5, d)
    n = np.repeat(np.arange(6), 2 * np.arange(6) + 1)
    a = ds.model.core_coeffs().values
    ref = Y @ (a * (0.5 / 1.06) ** (n + 1))
    assert np.abs(ds.phi1.values[pick] - ref).max() < 1e-12 * np.abs(ref).max()


def test_deterministic_output(tmp_path):
    cfg = DatasetConfig(**SMALL)
    a = generate_dataset(paper_model(1), cfg, tmp_path / "a")
    generate_dataset(paper_model(1), cfg, tmp_path / "b")
    ma = (tmp_path / "a" / "manifest.json").read_bytes()
    assert ma == (tmp_path / "b" / "manifest.json").read_bytes()
    assert set(json.loads(ma)) == {"config.yaml", "phi.csv", "phi0.csv", "phi1.csv"}
    assert a.config["dataset"]["variant"] == 1


def test_load_and_verify(tmp_path):
    cfg = DatasetConfig(variant=2, **SMALL)
    ds = generate_dataset(paper_model(2), cfg, tmp_path / "d")
    assert all(verify_manifest(tmp_path / "d").values())
    back = load_dataset(tmp_path / "d")
    assert back.model == ds.model and back.has_truth
    assert np.array_equal(back.phi.values, ds.phi.values)
    assert np.array_equal(back.phi.rule.nodes, ds.phi.rule.nodes)
    (tmp_path / "d" / "phi0.csv").write_text("tampered\n")
    assert verify_manifest(tmp_path / "d")["phi0.csv"] is False


def test_load_without_truth(tmp_path):
    cfg = DatasetConfig(**SMALL)
    generate_dataset(paper_model(1), cfg, tmp_path / "d")
    (tmp_path / "d" / "phi0.csv").unlink()
    (tmp_path / "d" / "phi1.csv").unlink()
    back = load_dataset(tmp_path / "d")
    assert not back.has_truth
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "missing")


def test_synthesize_matches_generate(tmp_path):
    cfg = DatasetConfig(**SMALL)
    a = synthesize(paper_model(1), cfg)
    b = generate_dataset(paper_model(1), cfg, tmp_path / "x")
    assert np.array_equal(a.phi.values, b.phi.values)
