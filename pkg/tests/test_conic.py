import math

import numpy as np
import pytest

from uavcollect import conic
from uavcollect.conic import (
    ConicProgram,
    add_cubic_over_square,
    add_hypograph_log_affine,
    add_hypograph_log_chords,
    add_quad_over_lin,
    add_quartic_over_square,
)


def pinned(values, build):
    """Program with variables fixed at ``values`` plus the helper's rows; feasibility via the backend."""
    prog = ConicProgram("pinned")
    xs = [prog.add_var(f"v{i}") for i in range(len(values))]
    for x, v in zip(xs, values):
        prog.add_eq(x, v)
    build(prog, *xs)
    return conic.solve(prog).status


# ------------------------------------------------------------ reference points

def test_log_hypograph_optimum():
    prog = ConicProgram()
    r, x = prog.add_var("r"), prog.add_var("x")
    add_hypograph_log_affine(prog, r, 10.0, x)
    prog.add_le(x, 0.1)
    prog.maximize(r)
    sol = conic.solve(prog)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(1.0, abs=1e-6)


def test_log_hypograph_at_zero():
    prog = ConicProgram()
    r, x = prog.add_var("r"), prog.add_var("x")
    add_hypograph_log_affine(prog, r, 10.0, x)
    prog.add_le(x, 0.0)
    prog.maximize(r)
    assert conic.solve(prog).objective == pytest.approx(0.0, abs=1e-7)


def test_log_hypograph_boundary():
    build = lambda p, r, x: add_hypograph_log_affine(p, r, 10.0, x)
    assert pinned([0.9999, 0.1], build) == "optimal"
    assert pinned([1.0001, 0.1], build) == "infeasible"


def test_log_hypograph_needs_positive_slope():
    prog = ConicProgram()
    with pytest.raises(ValueError):
        add_hypograph_log_affine(prog, prog.add_var(), 0.0, prog.add_var())


@pytest.mark.parametrize("xyz, status", [((1, 1, 1), "optimal"), ((1.01, 1, 1), "infeasible"), ((0, 3, 0), "optimal")])
def test_quad_over_lin_points(xyz, status):
    assert pinned(xyz, lambda p, x, y, z: add_quad_over_lin(p, x, y, z)) == status


@pytest.mark.parametrize(
    "est, status", [((1, 1, 1), "optimal"), ((0.99, 1, 1), "infeasible"), ((27, 3, 1), "optimal"), ((5, 0, 2), "optimal")]
)
def test_cubic_over_square_points(est, status):
    assert pinned(est, lambda p, e, s, t: add_cubic_over_square(p, e, s, t)) == status


@pytest.mark.parametrize(
    "tob, status", [((1, 1, 1), "optimal"), ((2, 1, 16), "optimal"), ((2, 1, 15.9), "infeasible"), ((1, 1, -1), "infeasible")]
)
def test_quartic_over_square_points(tob, status):
    assert pinned(tob, lambda p, t, om, b: add_quartic_over_square(p, t, om, b)) == status


def test_hyperbolic_product_encoding():
    # S * p >= d / gamma0 written as sqrt(d / gamma0)^2 <= S * p
    rng = np.random.default_rng(1)
    for _ in range(50):
        d, g = rng.uniform(1e4, 3e5), 1e5
        p = rng.uniform(1e-3, 0.1)
        s_ok = d / (g * p) * 1.001
        s_bad = d / (g * p) * 0.999
        build = lambda prog, s, pp: add_quad_over_lin(prog, math.sqrt(d / g), s, pp)
        assert pinned([s_ok, p], build) == "optimal"
        assert pinned([s_bad, p], build) == "infeasible"


def test_trivial_programs():
    prog = ConicProgram()
    x = prog.add_var("x")
    prog.add_le(x, 1.0)
    prog.maximize(x)
    assert conic.solve(prog).objective == pytest.approx(1.0, abs=1e-7)

    prog = ConicProgram()
    x = prog.add_var("x")
    prog.add_ge(x, 1.0)
    prog.add_le(x, 0.0)
    sol = conic.solve(prog)
    assert sol.status == "infeasible" and sol.x is None and not sol.ok

    prog = ConicProgram()
    x = prog.add_var("x")
    prog.add_ge(x, 0.0)
    prog.maximize(x)
    assert conic.solve(prog).status == "unbounded"


# ------------------------------------------------------------ random round trips

def _sample(rng, helper, n):
    """Points on the feasible side and points pushed 1e-3 past the boundary."""
    if helper == "quad":
        y, z = rng.uniform(0.1, 5, (2, n))
        edge = np.sqrt(y * z)
        return [(e * rng.uniform(0, 1), y_, z_) for e, y_, z_ in zip(edge, y, z)], [
            (e + 1e-3 * max(1, e), y_, z_) for e, y_, z_ in zip(edge, y, z)
        ]
    if helper == "cubic":
        s, t = rng.uniform(0.1, 3, (2, n))
        edge = s**3 / t**2
        return [(e * rng.uniform(1, 2), s_, t_) for e, s_, t_ in zip(edge, s, t)], [
            (e - 1e-3 * max(1, e), s_, t_) for e, s_, t_ in zip(edge, s, t)
        ]
    if helper == "quartic":
        t, om = rng.uniform(0.2, 3, (2, n))
        edge = t**4 / om**2
        return [(t_, o, e * rng.uniform(1, 2)) for t_, o, e in zip(t, om, edge)], [
            (t_, o, e - 1e-3 * max(1, e)) for t_, o, e in zip(t, om, edge)
        ]
    x = rng.uniform(0, 1, n)
    edge = np.log2(1 + 10 * x)
    return [(e - rng.uniform(0, 1), x_) for e, x_ in zip(edge, x)], [(e + 1e-3, x_) for e, x_ in zip(edge, x)]


BUILDERS = {
    "quad": lambda p, x, y, z: add_quad_over_lin(p, x, y, z),
    "cubic": lambda p, e, s, t: add_cubic_over_square(p, e, s, t),
    "quartic": lambda p, t, om, b: add_quartic_over_square(p, t, om, b),
    "log": lambda p, r, x: add_hypograph_log_affine(p, r, 10.0, x),
}


@pytest.mark.parametrize("helper", list(BUILDERS))
def test_helper_round_trip(helper):
    rng = np.random.default_rng(hash(helper) % 2**32)
    inside, outside = _sample(rng, helper, 1000)
    for pt in inside:
        assert pinned(pt, BUILDERS[helper]) == "optimal", pt
    for pt in outside:
        assert pinned(pt, BUILDERS[helper]) == "infeasible", pt


def test_chords_under_approximate_log():
    prog = ConicProgram()
    r, x = prog.add_var("r"), prog.add_var("x")
    add_hypograph_log_chords(prog, r, 10.0, x, 0.1, n_chords=64)
    prog.add_le(x, 0.05)
    prog.maximize(r)
    sol = conic.solve(prog)
    assert sol.objective <= math.log2(1.5) + 1e-9
    assert sol.objective == pytest.approx(math.log2(1.5), abs=1e-4)


# ------------------------------------------------------------ structure

def test_cone_validation():
    prog = ConicProgram()
    x = prog.add_var()
    with pytest.raises(ValueError):
        prog.add_cone("psd", [x])
    with pytest.raises(ValueError):
        prog.add_cone("exp", [x, x])
    with pytest.raises(ValueError):
        prog.add_cone("pow3", [x, x, x], 1.5)
    with pytest.raises(IndexError):
        prog.add_cone("nonneg", [conic.Affine({5: 1.0})])
    with pytest.raises(TypeError):
        _ = x * x


def random_program(seed=0):
    rng = np.random.default_rng(seed)
    prog = ConicProgram("random")
    v = prog.add_vars(6, "v", lb=0.0, ub=5.0)
    add_hypograph_log_affine(prog, v[0], 3.0, v[1])
    add_quad_over_lin(prog, v[2], v[3], v[4])
    add_cubic_over_square(prog, v[5], v[2], v[4])
    add_quartic_over_square(prog, v[3], v[4], 20.0 - v[5], name="q")
    prog.add_le(conic.affine_sum(rng.uniform(0.5, 1.5) * x for x in v), 8.0)
    prog.maximize(v[0] + 0.5 * v[2] + 0.1 * v[3])
    return prog


def test_dump_round_trip():
    prog = random_program()
    text = conic.dumps(prog)
    back = conic.loads(text)
    assert conic.dumps(back) == text
    a, b = conic.solve(prog), conic.solve(back)
    assert a.status == b.status == "optimal"
    np.testing.assert_array_equal(a.x, b.x)


def test_loads_rejects_garbage():
    with pytest.raises(ValueError):
        conic.loads("hello\n")


def test_objective_certified_and_deterministic():
    prog = random_program(3)
    a, b = conic.solve(prog), conic.solve(prog)
    np.testing.assert_array_equal(a.x, b.x)
    assert abs(a.objective - prog.objective.value(a.x)) <= 1e-6 * (1 + abs(a.objective))
    assert prog.max_violation(a.x) <= 1e-7


def test_scs_cross_check():
    pytest.importorskip("scs")
    prog = random_program(5)
    ref = conic.solve(prog)
    alt = conic.solve(prog, tol=1e-7, backend=conic.ScsBackend())
    assert alt.status == "optimal"
    assert alt.objective == pytest.approx(ref.objective, rel=1e-3)
