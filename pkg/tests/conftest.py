import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wassfem import alg2
from wassfem.config import traveling_wave_factory, traveling_wave_fields


def run_study(d, plan, tol=1e-10):
    """plan: list of (k, levels); returns {(k, s): row} with metrics."""
    rho_ex, m_ex, _ = traveling_wave_fields(d)
    ref = alg2.refined_w2sq(rho_ex, m_ex, d, cells=96 if d == 1 else 48)
    factory = traveling_wave_factory(d, tol=tol)
    out = {}
    for k, levels in plan:
        rows = alg2.convergence_study(factory, [k], levels, w2sq_ref=ref)
        for row in rows:
            assert "error" not in row, row
            assert row["converged"], row
            out[(k, row["level"])] = row
    return out


@pytest.fixture(scope="session")
def table2_rows():
    """The d=1 benchmark family at tol 1e-10 (shared by several criteria)."""
    return run_study(1, [(0, [0, 1, 2, 3]), (1, [0, 1, 2, 3]), (3, [2, 3])])


@pytest.fixture(scope="session")
def table3_rows():
    """The d=2 benchmark spot-check: k=1 on the first three levels."""
    return run_study(2, [(1, [0, 1, 2])])
