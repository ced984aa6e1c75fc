import math

import numpy as np
import pytest

from orbit_averager.systems import example_s1_perturbation, example_s3_perturbation, get_scenario

TWO_PI = 2 * math.pi


@pytest.fixture
def s1():
    return get_scenario("S1")


@pytest.fixture
def s2():
    return get_scenario("S2")


@pytest.fixture
def s3():
    return get_scenario("S3")


@pytest.fixture
def example3():
    """S1 with a = b = 1."""
    return example_s1_perturbation(1.0, 1.0)


@pytest.fixture
def example8():
    """S3 with a=2, b=1, c=d=1."""
    return example_s3_perturbation(2.0, 1.0, 1.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

