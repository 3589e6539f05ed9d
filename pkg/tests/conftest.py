from __future__ import annotations

import pytest

from lorentz_rings.lattice import Dims
from lorentz_rings.scatter import ScattererField


@pytest.fixture
def two_scatterer_field() -> ScattererField:
    """d=1, N=3 with scatterers at (k=0, {0,1}) and (k=1, {1,2}); one orbit of period 9."""
    return ScattererField.with_scatterers(Dims(1, 3), [(0, (0,), (1,)), (1, (1,), (2,))])


@pytest.fixture
def single_scatterer_field() -> ScattererField:
    """d=1, N=4 with one isolated scatterer at (k=0, {1,2})."""
    return ScattererField.with_scatterers(Dims(1, 4), [(0, (1,), (2,))])
