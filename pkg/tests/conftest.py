import os
from pathlib import Path

os.environ.setdefault('ADTCERT_ENV', 'testing')
os.environ.pop('ADTCERT_ASYNC', None)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from adtcert import kfun  # noqa: E402
from adtcert.builtins import get_mode  # noqa: E402
from adtcert.cascade_cert import compose_cascade  # noqa: E402
from adtcert.linear_synth import LinearCascadeMode, quad_cert_rates  # noqa: E402
from adtcert.utils import load_yaml  # noqa: E402

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def configs_dir():
    return CONFIGS


@pytest.fixture
def linear_record():
    return load_yaml(CONFIGS / 'linear_two_mode.yaml')


@pytest.fixture
def scalar_record():
    return load_yaml(CONFIGS / 'scalar_cascade.yaml')


@pytest.fixture
def sampled_record():
    return load_yaml(CONFIGS / 'two_mode_sampled.yaml')


@pytest.fixture
def scalar_mode():
    """x' = -x + e, e' = -2e + d with V_c = x², V_o = e²"""
    return get_mode('scalar_cascade')


@pytest.fixture
def scalar_cascade(scalar_mode):
    return compose_cascade([scalar_mode.certificate(1)])


@pytest.fixture
def linear_modes(linear_record):
    modes = linear_record['system']['modes']
    return {p: LinearCascadeMode.from_record(entry['linear'], mode=p) for p, entry in modes.items()}


@pytest.fixture
def linear_certs(linear_modes):
    return {p: quad_cert_rates(m) for p, m in linear_modes.items()}


@pytest.fixture
def square():
    return kfun.power_law(1.0, 2.0)
