import math

import numpy as np
import pytest
from scipy import special

from stokeslab.basis import build_basis
from stokeslab.geometry import DomainSpec, make_grid

ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str = ""):
    """Store a criterion verdict (merged over parametrised runs) and echo a PASS/FAIL line."""
    if criterion in ACCEPTANCE:
        prev_ok, prev_detail = ACCEPTANCE[criterion]
        ACCEPTANCE[criterion] = (prev_ok and bool(passed), f"{prev_detail}; {detail}")
    else:
        ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} {detail}")


def bisect_roots(f, n, k0=1e-3, step=0.25, iters=200):
    """First ``n`` sign-change roots of ``f`` on ``k > k0`` by plain bisection."""
    roots = []
    a, fa = k0, f(k0)
    while len(roots) < n:
        b, fb = a + step, f(a + step)
        if fa * fb < 0:
            lo, hi, flo = a, b, fa
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                fm = f(mid)
                if fm == 0 or hi - lo < 1e-15 * mid:
                    lo = hi = mid
                    break
                if flo * fm < 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
        a, fa = b, fb
    return np.array(roots)


def bessel_cross(order, a, b):
    return lambda k: special.jv(order, k * a) * special.yv(order, k * b) - special.jv(order, k * b) * special.yv(
        order, k * a
    )


def bessel_cross_prime(order, a, b):
    return lambda k: special.jvp(order, k * a) * special.yvp(order, k * b) - special.jvp(
        order, k * b
    ) * special.yvp(order, k * a)


@pytest.fixture(scope="session")
def annulus():
    return DomainSpec.annulus(1.0, 2.0)


@pytest.fixture(scope="session")
def cylinder():
    return DomainSpec.cylinder(1.0, 2.0, 2 * math.pi)


@pytest.fixture(scope="session")
def grid2d(annulus):
    return make_grid(annulus, 48, 12)


@pytest.fixture(scope="session")
def basis2d(grid2d):
    return build_basis(grid2d, 100)


@pytest.fixture(scope="session")
def grid3d(cylinder):
    return make_grid(cylinder, 32, 6, 3)


@pytest.fixture(scope="session")
def basis3d(grid3d):
    return build_basis(grid3d, 120)


@pytest.fixture(params=["2d", "3d"])
def basis(request, basis2d, basis3d):
    return basis2d if request.param == "2d" else basis3d
