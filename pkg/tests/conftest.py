import pytest
from hypothesis import HealthCheck, settings

from fogdc.model import CompressionModel, Kind, SystemConfig, UserProfile
from fogdc.scenario import generate_instance

settings.register_profile("fogdc", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fogdc")


def make_profile(**kw):
    """A plain user with unit-free round numbers; fields overridable."""
    base = dict(
        c_total=2e9, c_local=2e8, c_offloadable=1.8e9, b_in=4e6, t_max=1.0, f_max=2.4e9,
        p_max=0.22, p_circuit=22e-9, alpha=1e-28, beta_lin=6.36e-21, w_t=1 / 3, w_e=2 / 3,
        rho_max=1e6,
        comp_user=CompressionModel(2e8, 0.02, 1.5, 0.3, 2.3, 2.9, Kind.COMPRESS),
        decomp_user=CompressionModel(2e8, 0.115, -0.9179, 0.046, 2.3, 2.9, Kind.DECOMPRESS),
        quality_user=CompressionModel(1.0, 0.0, 1.0, 1.0, 2.3, 2.9, Kind.QUALITY),
        comp_fog=CompressionModel(2e8, 0.076, 0.7116, 0.5794, 3.4, 11.2, Kind.COMPRESS),
    )
    base.update(kw)
    return UserProfile(**base)


@pytest.fixture
def profile():
    return make_profile()


@pytest.fixture
def config():
    return SystemConfig()


@pytest.fixture(scope="session")
def small_instance():
    return generate_instance(3, 3)


# acceptance results, printed once at the end of the session
ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
