import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conebilliards.errors import DomainError, Escape, GrazingError
from conebilliards.geometry import (
    CircularSection,
    GeneralCone,
    OrientedLine,
    ReflectionRecord,
    alpha_theta_residuals,
    angle_between,
    angular_momenta,
    cone_next_intersection,
    cone_step,
    line_distance_sq,
    momenta3,
    momentum_pairs,
    projected_distance_sq,
    reflect_direction,
    simulate_wedge,
    unit,
    wedge_reflection_count,
)

SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# angular momenta and the distance integral
# ---------------------------------------------------------------------------

def test_momenta_direct_substitution():
    line = OrientedLine([1.0, 0.0, 1.0], [0.0, 1.0, 0.0])
    m23, m13, m12 = momenta3(line)
    assert (m23, m13, m12) == (-1.0, 0.0, 1.0)


def test_momenta_line_through_origin():
    line = OrientedLine([0.0, 0.0, 0.0], unit([0.3, -0.5, 0.81]))
    assert np.all(angular_momenta(line) == 0.0)


def test_momenta_invariant_under_slide():
    line = OrientedLine([1.0, 0.0, 1.0], [0.0, 1.0, 0.0])
    slid = OrientedLine([1.0, 5.0, 1.0], [0.0, 1.0, 0.0])
    assert np.allclose(angular_momenta(line), angular_momenta(slid), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_momenta_slide_property(seed):
    r = np.random.Generator(np.random.Philox(seed))
    base = r.uniform(-5, 5, 3)
    d = unit(r.normal(size=3))
    s = r.uniform(-10, 10)
    m1 = angular_momenta(OrientedLine(base, d))
    m2 = angular_momenta(OrientedLine(base + s * d, d))
    assert np.abs(m1 - m2).max() < 1e-12 * max(1.0, np.abs(m1).max())


def test_momentum_pairs_order():
    assert momentum_pairs(3) == [(0, 1), (0, 2), (1, 2)]
    assert len(momentum_pairs(5)) == 10


def test_distance_sq_trivial():
    assert line_distance_sq(OrientedLine([1, 0, 1], [0, 1, 0])) == pytest.approx(2.0, abs=1e-15)
    assert line_distance_sq(OrientedLine([0, 0, 0], unit([1, 2, 2]))) == 0.0


def _closest_point_distance_sq(line, lo=-100.0, hi=100.0):
    # independent oracle: ternary search on |base + t dir|^2 (strictly convex)
    f = lambda t: float(np.dot(line.point_at(t), line.point_at(t)))
    for _ in range(200):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) < f(m2):
            hi = m2
        else:
            lo = m1
    return f(0.5 * (lo + hi))


def test_distance_sq_routes_agree(rng):
    for _ in range(200):
        line = OrientedLine(rng.uniform(-3, 3, 3), unit(rng.normal(size=3)))
        a = line_distance_sq(line)
        b = projected_distance_sq(line)
        c = _closest_point_distance_sq(line)
        scale = max(1.0, a)
        assert abs(a - b) < 1e-12 * scale
        assert abs(a - c) < 1e-9 * scale


def test_distance_sq_dimension_n(rng):
    for n in (2, 4, 6):
        line = OrientedLine(rng.uniform(-2, 2, n), unit(rng.normal(size=n)))
        assert line_distance_sq(line) == pytest.approx(projected_distance_sq(line), abs=1e-12)


# ---------------------------------------------------------------------------
# reflection law
# ---------------------------------------------------------------------------

def test_reflect_45_degrees():
    v = unit([1.0, 0.0, -1.0])
    out = reflect_direction(v, [0.0, 0.0, 1.0])
    assert np.allclose(out, unit([1.0, 0.0, 1.0]), atol=1e-15)


def test_reflect_normal_incidence():
    n = unit([0.2, -0.4, 0.89])
    assert np.allclose(reflect_direction(-n, n), n, atol=1e-15)


def test_reflect_preserves_tangential(rng):
    for _ in range(100):
        n = unit(rng.normal(size=3))
        v = unit(rng.normal(size=3))
        if abs(np.dot(v, n)) < 1e-6:
            continue
        out = reflect_direction(v, n)
        for _ in range(5):
            t = rng.normal(size=3)
            t = unit(t - np.dot(t, n) * n)
            assert abs(np.dot(out, t) - np.dot(v, t)) < 1e-12
        assert np.dot(out, n) == pytest.approx(-np.dot(v, n), abs=1e-12)


def test_reflect_involution(rng):
    n = unit(rng.normal(size=3))
    v = unit(rng.normal(size=3))
    if abs(np.dot(v, n)) < 1e-6:
        v = unit(v + 0.5 * n)
    assert np.allclose(reflect_direction(reflect_direction(v, n), n), v, atol=1e-12)


def test_reflect_grazing_raises():
    v = unit([1.0, 0.0, 1e-14])
    with pytest.raises(GrazingError):
        reflect_direction(v, [0.0, 0.0, 1.0])


def test_non_unit_direction_rejected():
    with pytest.raises(DomainError):
        OrientedLine([0.0, 0.0, 1.0], [1.0, 0.0, 1e-4])


# ---------------------------------------------------------------------------
# angles
# ---------------------------------------------------------------------------

def test_angle_perpendicular_and_zero():
    assert angle_between([1, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2, abs=1e-15)
    u = unit([0.3, 0.4, 0.87])
    assert angle_between(u, u) == 0.0


def test_angle_tiny_high_precision():
    import mpmath as mp

    mp.mp.dps = 50
    w = np.array([float(mp.cos(mp.mpf(1e-9))), float(mp.sin(mp.mpf(1e-9))), 0.0])
    # reference angle of the rounded vectors, evaluated in 50-digit arithmetic
    ref = float(mp.atan2(mp.mpf(w[1]), mp.mpf(w[0])))
    assert abs(angle_between(np.array([1.0, 0.0, 0.0]), w) - ref) < 1e-15


def test_angle_near_pi():
    u = unit([1.0, 0.0, 0.0])
    w = unit([-1.0, 1e-9, 0.0])
    assert angle_between(u, w) == pytest.approx(math.pi - 1e-9, abs=1e-15)


def test_angle_general_dimension():
    u = unit([1.0, 0.0, 0.0, 0.0])
    w = unit([1.0, 1e-8, 0.0, 0.0])
    assert angle_between(u, w) == pytest.approx(1e-8, abs=1e-15)


# ---------------------------------------------------------------------------
# wedge
# ---------------------------------------------------------------------------

def test_wedge_count_values():
    assert wedge_reflection_count(math.pi / 4) == 4
    assert wedge_reflection_count(math.pi / 3) == 3
    assert wedge_reflection_count(1.0) == 4


def test_wedge_count_domain():
    with pytest.raises(DomainError):
        wedge_reflection_count(0.0)
    with pytest.raises(DomainError):
        wedge_reflection_count(math.pi)


def test_wedge_unfolding_theta_one(rng):
    counts = set()
    for _ in range(200):
        ang = rng.uniform(0.15, 0.85)
        base = np.array([math.cos(ang), math.sin(ang)]) * rng.uniform(0.5, 5.0)
        back = rng.uniform(0.1, 0.9)
        v = -np.array([math.cos(back), math.sin(back)])
        counts.add(simulate_wedge(1.0, base, v))
    assert counts <= {3, 4}
    assert 4 in counts or 3 in counts


def test_wedge_unfolding_grid(rng):
    for theta in np.linspace(0.3, 2.6, 12):
        n = wedge_reflection_count(float(theta))
        for _ in range(40):
            ang = rng.uniform(0.1, 0.9) * theta
            base = np.array([math.cos(ang), math.sin(ang)]) * rng.uniform(0.5, 3.0)
            back = rng.uniform(0.05, 0.95) * theta
            v = -np.array([math.cos(back), math.sin(back)])
            c = simulate_wedge(float(theta), base, v)
            assert c in (n, n - 1), (theta, c, n)


# ---------------------------------------------------------------------------
# alpha/theta bookkeeping
# ---------------------------------------------------------------------------

def test_alpha_theta_planar_wedge_in_r3():
    # a V-shaped two-chord path in the x1 x3 plane, embedded in R^3
    p1 = np.array([1.0, 0.0, 1.0])
    p2 = np.array([0.4, 0.0, 1.3])
    p3 = np.array([-0.8, 0.0, 2.1])
    v1 = unit(p2 - p1)
    v2 = unit(p3 - p2)
    a1 = angle_between(v1, unit(p1))
    a2 = angle_between(v2, unit(p2))
    th1 = angle_between(unit(p1), unit(p2))
    # alpha_2 = alpha_1 - theta_1 requires the chords to keep a common
    # distance from the origin; enforce it by projecting p3 onto the cone
    # of solutions: instead check the residual using the *actual* records
    rec1 = ReflectionRecord(vertex=p1, incoming=v1, outgoing=v1, alpha=a1, theta_to_next=th1)
    rec2 = ReflectionRecord(vertex=p2, incoming=v1, outgoing=v2, alpha=a2, theta_to_next=None)
    rep = alpha_theta_residuals([rec1, rec2])
    # the radius identity |p| sin alpha = dist holds for any chord pair
    assert np.abs(rep.radius).max() < 1e-12
    # and the alpha recurrence holds exactly when v2 is the reflection of v1
    # across the plane through p2: build that pair explicitly
    n = unit(np.array([p2[2], 0.0, -p2[0]]))  # normal orthogonal to p2 in the plane
    v2r = reflect_direction(v1, n)
    a2r = angle_between(v2r, unit(p2))
    rec2r = ReflectionRecord(vertex=p2, incoming=v1, outgoing=v2r, alpha=a2r, theta_to_next=None)
    rep2 = alpha_theta_residuals([rec1, rec2r])
    assert np.abs(rep2.alpha).max() < 1e-12


# ---------------------------------------------------------------------------
# circular cone stepping
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def circular_cone():
    return GeneralCone(CircularSection(1.0))


def test_circular_cone_hit(circular_cone):
    line = OrientedLine([0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    hit = cone_next_intersection(circular_cone, line)
    assert not isinstance(hit, Escape)
    assert np.allclose(hit, [1.0, 0.0, 1.0], atol=1e-12)


def test_circular_cone_ruling_escape(circular_cone):
    ruling = unit([1.0, 0.0, 1.0])
    line = OrientedLine([0.0, 0.0, 1.0], ruling)
    assert isinstance(cone_next_intersection(circular_cone, line), Escape)


def test_circular_cone_axis_escape(circular_cone):
    line = OrientedLine([0.1, 0.0, 1.0], [0.0, 0.0, 1.0])
    assert isinstance(cone_next_intersection(circular_cone, line), Escape)


def test_circular_cone_symmetric_chord(circular_cone):
    # horizontal chord through the axis plane: the 45-degree wall turns
    # (1,0,0) into (0,0,1), symmetric under x -> -x
    line = OrientedLine([-1.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    stepped = cone_step(circular_cone, line)
    assert not isinstance(stepped, Escape)
    assert np.allclose(stepped.base, [1.0, 0.0, 1.0], atol=1e-10)
    assert np.allclose(stepped.dir, [0.0, 0.0, 1.0], atol=1e-10)
    # tilted chord in the same plane: reflection swaps the (x1, x3) slots
    line = OrientedLine([-1.0, 0.0, 1.0], unit([1.0, 0.0, 0.2]))
    stepped = cone_step(circular_cone, line)
    vin, vout = line.dir, stepped.dir
    assert vout[1] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(vout, [vin[2], 0.0, vin[0]], atol=1e-10)


def test_cone_step_preserves_distance(circular_cone, rng):
    for _ in range(50):
        base = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.8, 1.5)])
        d = unit(rng.normal(size=3))
        line = OrientedLine(base, d)
        before = line_distance_sq(line)
        stepped = cone_step(circular_cone, line)
        if isinstance(stepped, Escape) or before < 1e-12:
            continue
        after = line_distance_sq(stepped)
        assert abs(after - before) < 1e-10 * max(1.0, before)


def test_escape_has_apex_flag_type():
    esc = Escape(apex=True)
    assert esc.apex
    assert not Escape().apex
