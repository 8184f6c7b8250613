import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

R1, R0, R2 = 0.5, 1.0, 1.06

# acceptance outcomes collected by test_acceptance and printed at the end
ACCEPTANCE = {}
# wall-clock seconds of the expensive session fixtures
TIMINGS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"CRITERION {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def datasets(tmp_path_factory):
    """Variant 1 datasets for R1 = 0.5 and R1 = 0.8, generated once."""
    from crustcore.synth import DatasetConfig, generate_dataset, paper_model

    root = tmp_path_factory.mktemp("datasets")
    out = {}
    for r1 in (0.5, 0.8):
        cfg = DatasetConfig(R1=r1, R0=R0, R2=R2, variant=1)
        out[r1] = generate_dataset(paper_model(1), cfg, root / f"v1_{r1}")
    return out


@pytest.fixture(scope="session")
def coeff_system():
    """Coefficient problem at desk scale: M = 2000, gamma = 0.95, southern hemisphere."""
    from crustcore.harmonics import southern_hemisphere
    from crustcore.inverse import CoeffProblemConfig, CoeffSystem, default_lambda_grid
    from crustcore.kernels import KernelSystem
    from crustcore.quadrature import uniform_centers

    t0 = time.perf_counter()
    ks = KernelSystem(0.95, uniform_centers(2000), R2)
    cfg = CoeffProblemConfig(R1, R0, R2, southern_hemisphere(), ks, default_lambda_grid(),
                             cap_band=160)
    system = CoeffSystem(cfg)
    TIMINGS["coeff_system"] = time.perf_counter() - t0
    return system


@pytest.fixture(scope="session")
def spectrum_run(datasets, coeff_system):
    """Estimated spectrum of the full variant 1 data, p <= 15, with truth."""
    from crustcore.inverse import estimated_spectrum, power_spectrum

    t0 = time.perf_counter()
    ds = datasets[0.5]
    truth = power_spectrum(ds.phi0, 15)
    est = estimated_spectrum(coeff_system.cfg, ds.phi, 15, truth, system=coeff_system)
    TIMINGS["spectrum_run"] = time.perf_counter() - t0
    return est, truth
