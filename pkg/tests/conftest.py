import math
import warnings

import pytest

from levicool.cli import bundled_config
from levicool.config import load_config
from levicool.coupling import CoupledModePair, build_pairs


@pytest.fixture(scope="session")
def baseline():
    return load_config(bundled_config("baseline"))


@pytest.fixture(scope="session")
def mixture():
    return load_config(bundled_config("mixture"))


@pytest.fixture(scope="session")
def baseline_pairs(baseline):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return sorted(build_pairs(baseline), key=lambda p: p.axis)


def synthetic_pair(omega_m=2.0 * math.pi * 1e5, kappa=5e4, big_g=5e3,
                   g=1.0, detuning_offset=0.0):
    """A fast, fully resolved pair (omega/kappa ~ 12) for dynamics tests.

    ``big_g`` is the light-enhanced coupling |g alpha|; alpha is taken real.
    """
    d_eff = omega_m + detuning_offset
    return CoupledModePair(
        mode="TEM00", axis=0, omega_m=omega_m, kappa=kappa,
        omega_cav=1.2e15, g=g, detuning=d_eff,
        effective_detuning=d_eff, alpha=complex(big_g / g, 0.0),
        drive_strength=abs(big_g / g) * math.hypot(2.0 * d_eff, kappa))


@pytest.fixture
def mkpair():
    return synthetic_pair
