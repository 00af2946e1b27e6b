import mpmath as mpm
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pottslab.boundary import BoundarySpec
from pottslab.boundary_opt import (AdmissiblePoint, EnumerationCapExceeded, expansion_probe,
                                   h_eval, h_max_admissible, hhat_eval, subtree_ratio_vectors,
                                   two_step_bound_check, verify_expansion)
from pottslab.maps import two_step_eval
from pottslab.model import new_params
from pottslab.recursion import ratio_of

mpm.mp.dps = 50


def mp_h(d, q, p, theta, r):
    """h from the message recursion, in high precision."""
    p, r = mpm.mpf(p), mpm.mpf(r)
    V = [mpm.mpf(1)] * q
    for row in theta:
        x = [mpm.mpf(1)] + [1 + (r - 1) * b for b in row]
        w = [sum(x) + (p - 1) * xj for xj in x]
        V = [V[j] * w[j] / w[0] for j in range(q)]
    w = [sum(V) + (p - 1) * Vj for Vj in V]
    return (w[1] / w[0]) ** d


def test_trivial_points():
    P = new_params(3, 3, 0.25)
    zero = AdmissiblePoint(((0, 0),) * 3)
    assert h_eval(P, zero, 5.0).value == pytest.approx(1.0, abs=1e-15)
    best, pts = h_max_admissible(P, 1.0)
    assert best == 1.0 and len(pts) == 64


def test_point_encoding():
    pt = AdmissiblePoint(((1, 0), (0, 1), (1, 1)))
    assert pt.index() == 0b100111
    assert AdmissiblePoint.from_index(pt.index(), 3, 3) == pt
    assert AdmissiblePoint.pattern(3, 3).to_list() == [[1, 0]] * 3
    with pytest.raises(ValueError):
        AdmissiblePoint(((1, 2),))
    with pytest.raises(ValueError):
        h_eval(new_params(4, 3, 0.25), pt, 2.0)


@pytest.mark.parametrize("d,q,p", [(3, 3, 0.25), (3, 3, 0.5), (4, 3, 0.3), (2, 4, 0.1)])
@pytest.mark.parametrize("r", [1.0 + 1e-6, 1.005, 1.3, 4.0, 50.0])
def test_pattern_gives_two_step_map(d, q, p, r):
    P = new_params(d, q, p)
    got = h_eval(P, AdmissiblePoint.pattern(d, q), r).value
    assert got == pytest.approx(float(two_step_eval(P, r)), rel=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 4), st.integers(2, 4), st.floats(0.02, 0.98),
       st.floats(1e-4, 30.0), st.data())
def test_h_against_high_precision(d, q, p, s, data):
    P = new_params(d, q, p)
    idx = data.draw(st.integers(0, 2 ** (d * (q - 1)) - 1))
    pt = AdmissiblePoint.from_index(idx, d, q)
    want = mp_h(d, q, p, pt.theta, 1 + s)
    got = h_eval(P, pt, 1 + s).value
    assert abs(got - float(want)) <= 1e-13 * float(want)
    # row order does not matter
    perm = data.draw(st.permutations(range(d)))
    other = AdmissiblePoint(tuple(pt.theta[i] for i in perm))
    assert h_eval(P, other, 1 + s).value == pytest.approx(got, rel=1e-14)


@pytest.mark.parametrize("d,q,p", [(3, 3, 0.25), (2, 3, 0.5), (3, 4, 0.4)])
def test_hhat_reduces_to_h(d, q, p):
    P = new_params(d, q, p)
    rng = np.random.default_rng(7)
    for _ in range(5):
        pt = AdmissiblePoint.from_index(int(rng.integers(2 ** (d * (q - 1)))), d, q)
        r = 1 + float(rng.exponential(2.0))
        vec = np.tile(pt.x(r), (d, 1))
        assert hhat_eval(P, vec) == pytest.approx(h_eval(P, pt, r).value, rel=1e-14)


@pytest.mark.parametrize("d,q,p,n", [(2, 3, 0.3, 1), (2, 3, 0.3, 2), (3, 3, 0.25, 1), (2, 4, 0.6, 2)])
def test_hhat_of_subtree_vectors_is_root_ratio(d, q, p, n):
    P = new_params(d, q, p)
    rng = np.random.default_rng(n)
    xi = BoundarySpec.explicit(rng.integers(1, q + 1, d ** (n + 2)).tolist())
    vec = subtree_ratio_vectors(P, n, xi)
    assert vec.shape == (d * d, q)
    assert hhat_eval(P, vec) == pytest.approx(ratio_of(P, n + 2, xi), rel=1e-10)


def test_hhat_input_checks():
    P = new_params(2, 3, 0.3)
    with pytest.raises(ValueError):
        hhat_eval(P, np.full((4, 3), 2.0))
    bad = np.ones((4, 3))
    bad[0, 1] = -1.0
    with pytest.raises(ValueError):
        hhat_eval(P, bad)


@pytest.mark.parametrize("s", [1e-3, 1e-2, 0.1, 1.0, 5.0])
def test_subcritical_expansion_holds(s):
    assert verify_expansion(new_params(3, 3, 0.5), 1 + s)


def test_subcritical_probe():
    rep = expansion_probe(new_params(3, 3, 0.5), radii=[1e-3, 1e-1, 1.0])
    assert rep.holds == [True, True, True] and rep.first_failure is None
    assert rep.last_success == 1.0


def test_critical_third_order_excess():
    # at criticality a point with a full row beats the pattern at third order
    d, q, p = 3, 3, 0.25
    P = new_params(d, q, p)
    for s in (1e-3, 1e-2):
        best, pts = h_max_admissible(P, 1 + s)
        pattern = AdmissiblePoint.pattern(d, q)
        assert pattern not in pts
        ff = mp_h(d, q, p, pattern.theta, 1 + s)
        top = mp_h(d, q, p, pts[0].theta, 1 + s)
        assert any(row == (1, 1) for row in pts[0].theta)
        excess = float((top - ff) / mpm.mpf(s) ** 3)
        assert excess == pytest.approx(0.0494, rel=0.05)
        assert not verify_expansion(P, 1 + s)


def test_enumeration_cap():
    with pytest.raises(EnumerationCapExceeded):
        h_max_admissible(new_params(7, 5, 0.5), 2.0)


def test_workers_determinism():
    P = new_params(4, 5, 0.3)  # 2^16 points, several chunks
    a = h_max_admissible(P, 1.7, workers=1)
    b = h_max_admissible(P, 1.7, workers=4)
    assert a[0] == b[0] and a[1] == b[1]


@pytest.mark.parametrize("p", [0.5, 0.8])
def test_two_step_bound(p):
    rep = two_step_bound_check(new_params(2, 3, p), n=1)
    assert rep.h_bound_holds
    assert rep.r == pytest.approx(p ** -2, rel=1e-12)
    assert rep.r_star_next <= rep.max_value * (1 + 1e-12)
    d = rep.as_dict()
    assert set(d) >= {"r", "r_star_next", "max_value", "ff_value", "argmax_patterns"}
