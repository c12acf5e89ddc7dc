import math

import numpy as np
import pytest

from hypcones.rational import RationalMapSystem, build_preimage_cone
from hypcones.sft import SftSystem

LN2 = math.log(2)
PHI = (1 + math.sqrt(5)) / 2


@pytest.fixture(scope="session")
def golden():
    return SftSystem(np.array([[1, 1], [1, 0]]))


@pytest.fixture(scope="session")
def z2():
    return RationalMapSystem([1, 0, 0])


@pytest.fixture(scope="session")
def z2_cone(z2):
    return build_preimage_cone(z2, (1, 12 * LN2))


@pytest.fixture(scope="session")
def c02():
    return RationalMapSystem([1, 0, 0.2])


@pytest.fixture(scope="session")
def c02_cone(c02):
    return build_preimage_cone(c02, (1, 12 * LN2))


@pytest.fixture(scope="session")
def basilica():
    return RationalMapSystem([1, 0, -1])
