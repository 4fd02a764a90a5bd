import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import otastab as o


@pytest.fixture(scope="session")
def reference():
    return o.reference_model()


@pytest.fixture(scope="session")
def ref_load_range(reference):
    return o.load_range_exact(reference, xi_target=0.5, pm_target_deg=45.0)


@pytest.fixture()
def w1_model():
    """Worked-example parameter set: equal 10 uS / 10 M stages, 10 fF
    parasitics, 10 pF Miller cap, 200 k / 1.2 pF branch."""
    stages = [o.StageParams(gm=10e-6, ro=10e6, co=10e-15) for _ in range(4)]
    comp = o.CompensationParams(cm=10e-12, ra=200e3, ca=1.2e-12)
    return o.build_model(stages, comp, gmf=10e-6)
