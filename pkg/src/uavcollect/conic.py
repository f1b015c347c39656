"""A small solver-agnostic conic program representation.

A :class:`ConicProgram` holds scalar variables, a linear objective to
maximize, and a list of constraints of the form ``(e_1(x), ..., e_m(x)) in K``
where each ``e_i`` is an :class:`Affine` expression and ``K`` is one of

* ``zero``      -- every entry equals zero
* ``nonneg``    -- every entry is >= 0
* ``soc``       -- ``e_1 >= ||(e_2, ..., e_m)||``
* ``rsoc``      -- ``e_1 * e_2 >= ||(e_3, ..., e_m)||**2`` with ``e_1, e_2 >= 0``
* ``exp``       -- ``e_2 * exp(e_1 / e_2) <= e_3``, ``e_2 > 0``
* ``pow3``      -- ``e_1**a * e_2**(1 - a) >= |e_3|`` with ``e_1, e_2 >= 0``

Programs are handed to a backend (Clarabel by default) through :func:`solve`.

Text dump format (``dumps``)::

    conic 1
    vars <n>
    var <index> <name>                  (one line per variable)
    maximize <const> [<index>:<coef> ...]
    <cone> [param] | <row> | <row> ...  (one line per constraint)

where each ``<row>`` is ``<const> [<index>:<coef> ...]``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from numbers import Real

import numpy as np
import scipy.sparse as sp

CONE_TAGS = ("zero", "nonneg", "soc", "rsoc", "exp", "pow3")
LN2 = math.log(2.0)


class Affine:
    """Sparse affine function of program variables: sum(coef * x[i]) + const."""

    __slots__ = ("terms", "const")

    def __init__(self, terms=None, const=0.0):
        self.terms = dict(terms) if terms else {}
        self.const = float(const)

    @classmethod
    def lift(cls, value) -> "Affine":
        if isinstance(value, Affine):
            return value
        if isinstance(value, (Real, np.floating, np.integer)):
            return cls(const=float(value))
        raise TypeError(f"cannot use {type(value).__name__} in an affine expression")

    def is_constant(self) -> bool:
        return not any(self.terms.values())

    def __add__(self, other):
        other = Affine.lift(other)
        terms = dict(self.terms)
        for i, c in other.terms.items():
            terms[i] = terms.get(i, 0.0) + c
        return Affine(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine({i: -c for i, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) + (-self)

    def __mul__(self, scalar):
        if isinstance(scalar, Affine):
            raise TypeError("product of two affine expressions is not affine")
        s = float(scalar)
        return Affine({i: s * c for i, c in self.terms.items()}, s * self.const)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def value(self, x) -> float:
        return self.const + sum(c * x[i] for i, c in self.terms.items())

    def __repr__(self):
        body = " + ".join(f"{c:g}*x{i}" for i, c in sorted(self.terms.items()))
        return f"Affine({body or '0'} + {self.const:g})"


def affine_sum(items) -> Affine:
    out = Affine()
    for item in items:
        out = out + item
    return out


@dataclass
class Constraint:
    cone: str
    exprs: list
    param: float | None = None

    @property
    def dim(self) -> int:
        return len(self.exprs)


class ConicProgram:
    def __init__(self, name: str = ""):
        self.name = name
        self.var_names: list[str] = []
        self.constraints: list[Constraint] = []
        self.objective = Affine()
        self.start: list[float] = []

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    def add_var(self, name: str = "", lb=None, ub=None, start=math.nan) -> Affine:
        """New scalar variable; ``start`` records a reference value (e.g. the expansion point)."""
        idx = len(self.var_names)
        self.var_names.append(name or f"x{idx}")
        self.start.append(float(start))
        v = Affine({idx: 1.0})
        if lb is not None:
            self.add_ge(v, lb)
        if ub is not None:
            self.add_le(v, ub)
        return v

    def add_vars(self, shape, name: str = "", lb=None, ub=None, start=None) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        start = np.broadcast_to(np.nan if start is None else np.asarray(start, dtype=float), shape)
        out = np.empty(shape, dtype=object)
        for index in np.ndindex(*shape):
            label = f"{name}[{','.join(map(str, index))}]"
            out[index] = self.add_var(label, lb, ub, start[index])
        return out

    def start_vector(self) -> np.ndarray:
        return np.array(self.start)

    def add_cone(self, cone: str, exprs, param: float | None = None) -> None:
        if cone not in CONE_TAGS:
            raise ValueError(f"unknown cone {cone!r}")
        exprs = [Affine.lift(e) for e in exprs]
        if cone in ("exp", "pow3") and len(exprs) != 3:
            raise ValueError(f"{cone} cone needs exactly 3 entries")
        if cone == "soc" and len(exprs) < 1:
            raise ValueError("soc needs at least one entry")
        if cone == "rsoc" and len(exprs) < 2:
            raise ValueError("rsoc needs at least two entries")
        if cone == "pow3" and not (param is not None and 0 < param < 1):
            raise ValueError("pow3 exponent must lie in (0, 1)")
        for e in exprs:
            for i in e.terms:
                if not 0 <= i < self.n_vars:
                    raise IndexError(f"variable index {i} out of range")
        self.constraints.append(Constraint(cone, exprs, param))

    def add_eq(self, lhs, rhs=0.0) -> None:
        self.add_cone("zero", [Affine.lift(lhs) - rhs])

    def add_le(self, lhs, rhs) -> None:
        self.add_cone("nonneg", [Affine.lift(rhs) - lhs])

    def add_ge(self, lhs, rhs) -> None:
        self.add_cone("nonneg", [Affine.lift(lhs) - rhs])

    def maximize(self, expr) -> None:
        self.objective = Affine.lift(expr)

    def evaluate(self, expr, x) -> float:
        return Affine.lift(expr).value(x)

    def max_violation(self, x) -> float:
        """Largest cone-membership violation of point ``x`` (0 when feasible)."""
        worst = 0.0
        for con in self.constraints:
            v = np.array([e.value(x) for e in con.exprs])
            worst = max(worst, _cone_violation(con.cone, v, con.param))
        return worst


def _cone_violation(cone: str, v: np.ndarray, param) -> float:
    if cone == "zero":
        return float(np.max(np.abs(v)))
    if cone == "nonneg":
        return float(max(0.0, -np.min(v)))
    if cone == "soc":
        return float(max(0.0, np.linalg.norm(v[1:]) - v[0]))
    if cone == "rsoc":
        y, z, xs = v[0], v[1], v[2:]
        return float(max(0.0, -y, -z, np.linalg.norm(np.concatenate([2 * xs, [y - z]])) - (y + z)))
    if cone == "exp":
        x, y, z = v
        if y <= 0:
            return float(max(-y, 0.0) + max(x, 0.0) + max(-z, 0.0))
        return float(max(0.0, y * math.exp(min(x / y, 700.0)) - z))
    if cone == "pow3":
        x, y, z = v
        if x < 0 or y < 0:
            return float(max(-x, -y))
        return float(max(0.0, abs(z) - x**param * y ** (1 - param)))
    raise ValueError(cone)


# ---------------------------------------------------------------- helpers


def add_soc(prog: ConicProgram, t, xs) -> None:
    """||xs|| <= t."""
    prog.add_cone("soc", [t, *xs])


def add_rsoc(prog: ConicProgram, xs, y, z) -> None:
    """||xs||**2 <= y * z with y, z >= 0."""
    prog.add_cone("rsoc", [y, z, *xs])


def add_hypograph_log_affine(prog: ConicProgram, r, c: float, x) -> None:
    """r <= log2(1 + c * x), x >= 0."""
    if not c > 0:
        raise ValueError(f"log hypograph needs c > 0, got {c}")
    r = Affine.lift(r)
    x = Affine.lift(x)
    prog.add_cone("exp", [r * LN2, 1.0, 1.0 + c * x])
    prog.add_ge(x, 0.0)


def add_hypograph_log_chords(prog: ConicProgram, r, c: float, x, x_max: float, n_chords: int = 64) -> None:
    """Polyhedral inner version of :func:`add_hypograph_log_affine` for backends without exp cones.

    ``r`` is bounded by the chord interpolant of ``log2(1 + c x)`` on
    ``[0, x_max]``, which never exceeds the true function.
    """
    if not c > 0:
        raise ValueError(f"log hypograph needs c > 0, got {c}")
    if n_chords < 1 or not x_max > 0:
        raise ValueError("need n_chords >= 1 and x_max > 0")
    r = Affine.lift(r)
    x = Affine.lift(x)
    knots = np.linspace(0.0, x_max, n_chords + 1)
    vals = np.log2(1 + c * knots)
    for a, b, fa, fb in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
        slope = (fb - fa) / (b - a)
        prog.add_le(r, fa + slope * (x - a))
    prog.add_ge(x, 0.0)
    prog.add_le(x, x_max)


def add_quad_over_lin(prog: ConicProgram, x, y, z) -> None:
    """x**2 <= y * z with y, z >= 0 (``x`` may be a scalar or a sequence)."""
    xs = list(x) if isinstance(x, (list, tuple, np.ndarray)) else [x]
    add_rsoc(prog, xs, y, z)


def add_cubic_over_square(prog: ConicProgram, e, s, t) -> None:
    """s**3 / t**2 <= e with s, t >= 0, i.e. e**(1/3) t**(2/3) >= s."""
    prog.add_cone("pow3", [e, t, s], 1.0 / 3.0)
    if not Affine.lift(s).is_constant():
        prog.add_ge(s, 0.0)


def add_quartic_over_square(prog: ConicProgram, t, omega, beta, start=math.nan, name: str = "") -> Affine:
    """t**4 / omega**2 <= beta via t**2 <= q omega and q**2 <= beta.  Returns q."""
    q = prog.add_var(name or f"q_aux{prog.n_vars}", start=start)
    add_rsoc(prog, [t], q, omega)
    add_rsoc(prog, [q], beta, 1.0)
    return q


# ---------------------------------------------------------------- solving


@dataclass
class ConicSolution:
    status: str  # optimal | infeasible | unbounded | numerical-limit
    x: np.ndarray | None
    objective: float | None
    iterations: int
    solve_time: float
    backend: str = ""
    reduced_accuracy: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr) -> float:
        return Affine.lift(expr).value(self.x)

    def values(self, exprs) -> np.ndarray:
        arr = np.asarray(exprs, dtype=object)
        out = np.empty(arr.shape)
        for index in np.ndindex(*arr.shape):
            out[index] = Affine.lift(arr[index]).value(self.x)
        return out


_ORDER = {"zero": 0, "nonneg": 1, "soc": 2, "rsoc": 2, "exp": 3, "pow3": 4}


def compile_standard_form(prog: ConicProgram):
    """Lower to ``s = b - A x in K`` with cones ordered zero, nonneg, soc, exp, pow.

    Returns ``(A, b, cones)`` with ``cones`` a list of ``(kind, dim, param)``.
    Rotated cones are rewritten as second-order cones.
    """
    rows, cols, vals, rhs = [], [], [], []
    cones = []

    def emit(exprs):
        for e in exprs:
            r = len(rhs)
            for i, c in e.terms.items():
                if c != 0.0:
                    rows.append(r)
                    cols.append(i)
                    vals.append(-c)
            rhs.append(e.const)

    zero = [e for c in prog.constraints if c.cone == "zero" for e in c.exprs]
    nonneg = [e for c in prog.constraints if c.cone == "nonneg" for e in c.exprs]
    if zero:
        emit(zero)
        cones.append(("zero", len(zero), None))
    if nonneg:
        emit(nonneg)
        cones.append(("nonneg", len(nonneg), None))
    for kind in ("soc", "exp", "pow3"):
        for con in prog.constraints:
            if _ORDER[con.cone] != _ORDER[kind]:
                continue
            exprs = con.exprs
            if con.cone == "rsoc":
                y, z, xs = exprs[0], exprs[1], exprs[2:]
                exprs = [y + z, *(2.0 * xi for xi in xs), y - z]
            emit(exprs)
            cones.append((kind, len(exprs), con.param))
    A = sp.csc_matrix((vals, (rows, cols)), shape=(len(rhs), prog.n_vars))
    return A, np.array(rhs), cones


class ClarabelBackend:
    name = "clarabel"
    # tried in turn when the default settings stall; equilibration occasionally
    # hurts on rows whose coefficients span many decades
    FALLBACKS = ({"equilibrate_enable": False}, {"max_step_fraction": 0.9}, {"tol": 1e-6})
    STALLED = ("InsufficientProgress", "NumericalError", "MaxIterations", "MaxTime")
    STALL_FEAS_TOL = 1e-7

    def __init__(self, max_iter: int = 200):
        self.max_iter = max_iter

    def solve(self, prog: ConicProgram, tol: float) -> ConicSolution:
        import clarabel

        A, b, cones = compile_standard_form(prog)
        q = np.zeros(prog.n_vars)
        for i, c in prog.objective.terms.items():
            q[i] -= c
        kinds = {
            "zero": lambda d, p: clarabel.ZeroConeT(d),
            "nonneg": lambda d, p: clarabel.NonnegativeConeT(d),
            "soc": lambda d, p: clarabel.SecondOrderConeT(d),
            "exp": lambda d, p: clarabel.ExponentialConeT(),
            "pow3": lambda d, p: clarabel.PowerConeT(p),
        }
        start = time.perf_counter()
        res, stalled, loose = None, None, False
        for extra in ({},) + self.FALLBACKS:
            extra = dict(extra)
            loose = "tol" in extra
            step_tol = max(tol, extra.pop("tol", tol))
            settings = clarabel.DefaultSettings()
            settings.verbose = False
            settings.max_iter = self.max_iter
            settings.tol_gap_abs = step_tol
            settings.tol_gap_rel = step_tol
            settings.tol_feas = step_tol
            settings.tol_ktratio = max(step_tol, 1e-8)
            settings.max_threads = 1
            for key, value in extra.items():
                setattr(settings, key, value)
            try:
                solver = clarabel.DefaultSolver(
                    sp.csc_matrix((prog.n_vars, prog.n_vars)), q, A, b,
                    [kinds[k](d, p) for k, d, p in cones], settings,
                )
                res = solver.solve()
            except BaseException as exc:  # the Rust core may panic on degenerate input
                if isinstance(exc, KeyboardInterrupt):
                    raise
                res = None
                continue
            if str(res.status) not in self.STALLED:
                break
            x = np.array(res.x, dtype=float)
            if stalled is None and np.all(np.isfinite(x)) and prog.max_violation(x) <= self.STALL_FEAS_TOL:
                stalled = (x, int(res.iterations))
        elapsed = time.perf_counter() - start
        if res is None or str(res.status) in self.STALLED:
            if stalled is not None:
                # the last iterate is feasible and was only failing the gap test
                x, iters = stalled
                return ConicSolution("optimal", x, prog.objective.value(x), iters, elapsed, self.name, True)
            iters = 0 if res is None else int(res.iterations)
            return ConicSolution("numerical-limit", None, None, iters, elapsed, self.name, True)
        status = str(res.status)
        mapping = {
            "Solved": ("optimal", loose),
            "AlmostSolved": ("optimal", True),
            "PrimalInfeasible": ("infeasible", False),
            "AlmostPrimalInfeasible": ("infeasible", True),
            "DualInfeasible": ("unbounded", False),
            "AlmostDualInfeasible": ("unbounded", True),
        }
        kind, reduced = mapping.get(status, ("numerical-limit", True))
        if kind != "optimal":
            return ConicSolution(kind, None, None, int(res.iterations), elapsed, self.name, reduced)
        x = np.array(res.x, dtype=float)
        return ConicSolution(kind, x, prog.objective.value(x), int(res.iterations), elapsed, self.name, reduced)


class ScsBackend:
    """First-order backend; only suitable for loose cross-checks."""

    name = "scs"

    def solve(self, prog: ConicProgram, tol: float) -> ConicSolution:
        import scs

        A, b, cones = compile_standard_form(prog)
        c = np.zeros(prog.n_vars)
        for i, coef in prog.objective.terms.items():
            c[i] -= coef
        cone = {
            "z": sum(d for k, d, _ in cones if k == "zero"),
            "l": sum(d for k, d, _ in cones if k == "nonneg"),
            "q": [d for k, d, _ in cones if k == "soc"],
            "ep": sum(1 for k, _, _ in cones if k == "exp"),
            "p": [p for k, _, p in cones if k == "pow3"],
        }
        start = time.perf_counter()
        solver = scs.SCS({"A": A, "b": b, "c": c}, cone, verbose=False,
                         eps_abs=max(tol, 1e-9), eps_rel=max(tol, 1e-9), max_iters=100000)
        res = solver.solve()
        elapsed = time.perf_counter() - start
        status = res["info"]["status"]
        iters = int(res["info"]["iter"])
        if status in ("solved", "solved_inaccurate"):
            x = np.array(res["x"])
            return ConicSolution("optimal", x, prog.objective.value(x), iters, elapsed, self.name,
                                 status != "solved")
        if status.startswith("infeasible"):
            return ConicSolution("infeasible", None, None, iters, elapsed, self.name)
        if status.startswith("unbounded"):
            return ConicSolution("unbounded", None, None, iters, elapsed, self.name)
        return ConicSolution("numerical-limit", None, None, iters, elapsed, self.name, True)


DEFAULT_TOL = 1e-8
_default_backend = ClarabelBackend()


def solve(prog: ConicProgram, tol: float = DEFAULT_TOL, backend=None) -> ConicSolution:
    return (backend or _default_backend).solve(prog, tol)


def dumps(prog: ConicProgram) -> str:
    def fmt(e: Affine) -> str:
        parts = [repr(e.const)] + [f"{i}:{c!r}" for i, c in sorted(e.terms.items()) if c != 0.0]
        return " ".join(parts)

    lines = ["conic 1", f"vars {prog.n_vars}"]
    lines += [f"var {i} {name}" for i, name in enumerate(prog.var_names)]
    lines.append("maximize " + fmt(prog.objective))
    for con in prog.constraints:
        head = con.cone if con.param is None else f"{con.cone} {con.param!r}"
        lines.append(" | ".join([head] + [fmt(e) for e in con.exprs]))
    return "\n".join(lines) + "\n"


def loads(text: str) -> ConicProgram:
    """Inverse of :func:`dumps`."""
    prog = ConicProgram()

    def parse(chunk: str) -> Affine:
        tokens = chunk.split()
        terms = {}
        for tok in tokens[1:]:
            i, c = tok.split(":")
            terms[int(i)] = float(c)
        return Affine(terms, float(tokens[0]))

    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "conic 1":
        raise ValueError("not a conic dump")
    for ln in lines[1:]:
        if ln.startswith("vars "):
            continue
        if ln.startswith("var "):
            _, _, name = ln.split(" ", 2)
            prog.add_var(name)
        elif ln.startswith("maximize "):
            prog.objective = parse(ln[len("maximize "):])
        else:
            head, *rows = [part.strip() for part in ln.split("|")]
            tag, *param = head.split()
            prog.add_cone(tag, [parse(r) for r in rows], float(param[0]) if param else None)
    return prog
