"""Independent numeric checks.

Analytic test sections are differentiated by sympy, never by the symbolic
engine under test.  Grid sections use central finite-difference stencils.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from . import bundle as B
from . import expr as E
from . import variational as VA
from .errors import IntegrationFailure, StencilOutOfRange


@dataclass(frozen=True)
class Tolerances:
    """Every numeric tolerance used by the oracle, in one place."""

    derivative: float = 1e-8  # analytic section vs numeric derivative
    eval_fd: float = 1e-6  # central-difference evaluation on grids
    fd_gradient_first: float = 1e-5  # first-order Lagrangians
    fd_gradient: float = 1e-4  # higher-order Lagrangians
    null_lagrangian: float = 1e-7  # absolute, when E vanishes
    ode_rtol: float = 1e-10
    ode_atol: float = 1e-12
    conjugate: float = 1e-6
    background: float = 1e-8


TOLERANCES = Tolerances()


def _sympy_functions():
    return {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "ln": sp.log, "log": sp.log, "sqrt": sp.sqrt, "pi": sp.pi}


class AnalyticSection:
    """Section ``y^i = f^i(x)`` given by sympy expressions (or strings)."""

    def __init__(self, spec, components):
        self.spec = spec
        self.symbols = [sp.Symbol(c, real=True) for c in spec.coords]
        loc = dict(zip(spec.coords, self.symbols))
        loc.update(_sympy_functions())
        self.components = {}
        for f in spec.fields:
            c = components.get(f, 0)
            self.components[f] = sp.sympify(c, locals=loc) if isinstance(c, str) else sp.sympify(c)
        self._cache = {}

    def derivative_expr(self, field, alpha):
        key = (field, tuple(alpha))
        if key not in self._cache:
            e = self.components[field]
            for sym, k in zip(self.symbols, alpha):
                if k:
                    e = sp.diff(e, sym, k)
            self._cache[key] = (e, sp.lambdify(self.symbols, e, "numpy"))
        return self._cache[key]

    def jet(self, field, alpha, point):
        fn = self.derivative_expr(field, alpha)[1]
        out = fn(*point)
        return np.broadcast_to(np.asarray(out, dtype=float), np.shape(point[0])).copy()

    def values(self, variables, point):
        """Numeric values of coordinate and jet atoms at ``point`` (scalars
        or arrays, one per coordinate)."""
        out = {}
        for v in variables:
            if v.rank == E._COORD:
                out[v] = np.asarray(point[self.spec.index(v.name)], dtype=float)
            elif v.rank == E._JET:
                out[v] = self.jet(v.field, v.alpha, point)
            else:
                raise ValueError(f"section cannot supply {v!r}")
        return out


def _stencil(k, r):
    """Central weights for the k-th derivative on offsets -r..r (unit step)."""
    offs = np.arange(-r, r + 1, dtype=float)
    m = 2 * r + 1
    A = np.vander(offs, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[k] = math.factorial(k)
    return np.linalg.solve(A, rhs)


def stencil_radius(k, accuracy):
    """Radius of the central stencil of the given (even) accuracy."""
    if k == 0:
        return 0
    return (k + 1) // 2 - 1 + accuracy // 2


class GridSection:
    """Sampled section on a rectangular lattice (``axes`` per coordinate)."""

    def __init__(self, spec, axes, values, accuracy=6):
        self.spec = spec
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.h = [a[1] - a[0] for a in self.axes]
        self.values = {f: np.asarray(v, dtype=float) for f, v in values.items()}
        self.accuracy = accuracy

    @classmethod
    def sample(cls, spec, section, axes, accuracy=6):
        mesh = np.meshgrid(*axes, indexing="ij")
        vals = {f: section.jet(f, spec.zero(), mesh) for f in spec.fields}
        return cls(spec, axes, vals, accuracy)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    def radius(self, alpha):
        return max((stencil_radius(k, self.accuracy) for k in alpha), default=0)

    def derivative(self, field, alpha, values=None):
        """Full-grid array of ``D_alpha y``; the outer ``radius`` layers are nan."""
        u = self.values[field] if values is None else values
        out = u
        for axis, k in enumerate(alpha):
            if not k:
                continue
            r = stencil_radius(k, self.accuracy)
            w = _stencil(k, r) / self.h[axis] ** k
            out = _apply_stencil(out, w, r, axis)
        return out

    def jet_at(self, field, alpha, index):
        r = self.radius(alpha)
        for i, n in zip(index, self.shape):
            if i - r < 0 or i + r >= n:
                raise StencilOutOfRange(f"stencil of radius {r} leaves the grid at node {index}")
        return float(self.derivative(field, alpha)[tuple(index)])

    def node(self, point):
        idx = []
        for a, x in zip(self.axes, point):
            i = int(round((x - a[0]) / (a[1] - a[0])))
            if not 0 <= i < len(a) or abs(a[i] - x) > 1e-9 * max(1.0, abs(x)):
                raise StencilOutOfRange(f"point {point} is not a grid node")
            idx.append(i)
        return tuple(idx)


def _apply_stencil(u, w, r, axis):
    out = np.full(u.shape, np.nan)
    n = u.shape[axis]
    acc = np.zeros_like(np.take(u, range(r, n - r), axis=axis))
    for j, wj in enumerate(w):
        if wj != 0.0:
            acc = acc + wj * np.take(u, range(j, n - 2 * r + j), axis=axis)
    sl = [slice(None)] * u.ndim
    sl[axis] = slice(r, n - r)
    out[tuple(sl)] = acc
    return out


def eval_on_section(e, section, point, functions=None):
    """Float value of ``e`` on the jets of ``section`` at ``point``."""
    e = E.as_expr(e)
    if not e.terms:
        return 0.0
    if isinstance(section, GridSection):
        idx = section.node(point)
        vals = {}
        for v in e.free:
            if v.rank == E._COORD:
                vals[v] = float(point[section.spec.index(v.name)])
            elif v.rank == E._JET:
                vals[v] = section.jet_at(v.field, v.alpha, idx)
            else:
                raise ValueError(f"section cannot supply {v!r}")
        return E.evaluate(e, vals, functions)
    vals = section.values(e.free, [np.asarray(p, dtype=float) for p in point])
    return E.evaluate(e, {k: float(v) for k, v in vals.items()}, functions)


def eval_array(e, section, points, functions=None):
    """Vectorized evaluation of ``e`` on an analytic section at arrays of
    coordinates (one array per coordinate)."""
    e = E.as_expr(e)
    variables = sorted(e.free, key=lambda a: a.key)
    fn = E.lambdify(e, variables, functions)
    vals = section.values(variables, points)
    out = fn(*[vals[v] for v in variables])
    return np.broadcast_to(np.asarray(out, dtype=float), np.shape(points[0])).copy()


def numeric_derivative(e, section, point, sigma, h=1e-3, functions=None):
    """Richardson-extrapolated central difference of ``e`` along ``sigma``."""

    def at(dx):
        p = list(point)
        p[sigma] = p[sigma] + dx
        return eval_on_section(e, section, p, functions)

    d1 = (at(h) - at(-h)) / (2 * h)
    d2 = (at(h / 2) - at(-h / 2)) / h
    return (4 * d2 - d1) / 3


# -- action gradient -----------------------------------------------------


@dataclass
class FDReport:
    max_error: float
    relative: bool
    scale: float
    nodes: int
    h: tuple
    symbolic: dict
    numeric: dict
    mask: np.ndarray

    @property
    def error(self):
        return self.max_error


def _density_on_grid(L, grid, values, functions, fn_cache):
    variables = fn_cache["vars"]
    arrays = []
    mesh = fn_cache["mesh"]
    for v in variables:
        if v.rank == E._COORD:
            arrays.append(mesh[grid.spec.index(v.name)])
        else:
            arrays.append(grid.derivative(v.field, v.alpha, values[v.field]))
    out = fn_cache["fn"](*arrays)
    return np.broadcast_to(np.asarray(out, dtype=float), grid.shape)


def fd_gradient_check(
    lam,
    section,
    spec=None,
    box=None,
    nodes=128,
    functions=None,
    substitutions=None,
    accuracy=6,
    delta=1e-4,
    relative=True,
):
    """Compare E(lambda) at interior nodes with the finite-difference
    gradient of the Riemann-sum action ``S = sum L h^n``.

    Nodes are perturbed in colour classes spaced more than twice the
    stencil radius apart so that each node's effect on S is read off a
    private window.  The error is ``max |E - grad| / max |E|`` over
    interior nodes (absolute when ``relative`` is False).
    """
    spec = spec or lam.spec
    L = VA._density(lam)
    for name, tmpl in (substitutions or {}).items():
        L = E.substitute_function(L, name, tmpl)
    src = VA.euler_lagrange(L, spec)
    box = box or [(0.0, 2 * math.pi)] * spec.n
    nodes = nodes if isinstance(nodes, (list, tuple)) else [nodes] * spec.n
    axes = [np.linspace(a, b, k) for (a, b), k in zip(box, nodes)]
    grid = GridSection.sample(spec, section, axes, accuracy)
    mesh = np.meshgrid(*axes, indexing="ij")
    r = max(
        [grid.radius(v.alpha) for v in L.free if v.rank == E._JET] + [0]
    )
    variables = sorted(L.free, key=lambda a: a.key)
    cache = {"vars": variables, "fn": E.lambdify(L, variables, functions), "mesh": mesh}
    shape = grid.shape
    cell = float(np.prod(grid.h))
    stride = 2 * r + 1
    margin = 2 * r
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(margin, n - margin) for n in shape)] = True
    numeric = {}
    symbolic = {}
    for f in spec.fields:
        grad = np.full(shape, np.nan)
        for colour in itertools.product(range(stride), repeat=spec.n):
            sel = tuple(slice(c, None, stride) for c in colour)
            bump = np.zeros(shape)
            bump[sel] = 1.0
            diffs = []
            for sgn in (1.0, -1.0):
                vals = dict(grid.values)
                vals[f] = grid.values[f] + sgn * delta * bump
                dens = _density_on_grid(L, grid, vals, functions, cache)
                diffs.append(dens)
            dS = np.nan_to_num((diffs[0] - diffs[1]) / (2 * delta))
            # window sums of radius r around every node
            win = dS
            for axis in range(spec.n):
                win = _box_sum(win, r, axis)
            grad[sel] = win[sel] * cell
        numeric[f] = grad / cell
        symbolic[f] = eval_array(src[f], section, mesh, functions)
    err = 0.0
    scale = 0.0
    for f in spec.fields:
        d = np.abs(numeric[f][mask] - symbolic[f][mask])
        err = max(err, float(np.max(d)) if d.size else 0.0)
        scale = max(scale, float(np.max(np.abs(symbolic[f][mask]))) if d.size else 0.0)
    use_rel = relative and scale > 0.0
    max_error = err / scale if use_rel else err
    return FDReport(max_error, use_rel, scale, int(np.prod(shape)), tuple(grid.h), symbolic, numeric, mask)


def _box_sum(a, r, axis):
    if r == 0:
        return a
    n = a.shape[axis]
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    p = np.pad(a, pad)
    c = np.cumsum(p, axis=axis)
    zero_shape = list(c.shape)
    zero_shape[axis] = 1
    c = np.concatenate([np.zeros(zero_shape), c], axis=axis)
    hi = np.take(c, range(2 * r + 1, 2 * r + 1 + n), axis=axis)
    lo = np.take(c, range(0, n), axis=axis)
    return hi - lo


# -- Jacobi equation -----------------------------------------------------


@dataclass
class JacobiSolution:
    t: np.ndarray
    values: np.ndarray  # shape (len(t), fields, fields): Y(t)
    determinant: np.ndarray
    conjugate_points: list


def _coefficient_functions(J, background, spec, functions):
    from .jacobi import section_jets

    sub = section_jets(background, J.coeffs.values(), spec)
    t = E.Coord(spec.coords[0])
    out = {}
    for key, c in J.coeffs.items():
        ce = E.substitute(c, sub) if sub else c
        bad = [v for v in ce.free if v.rank != E._COORD]
        if bad:
            raise ValueError(f"coefficient still depends on {bad}")
        out[key] = E.lambdify(ce, [t], functions)
    return out


def jacobi_ode_solve(J, background=None, spec=None, interval=(0.0, 10.0), initial=None, functions=None, tol=None):
    """Integrate ``J w = 0`` along a one-dimensional background.

    Without ``initial``, the fundamental solution with ``w(t0) = 0`` and
    ``w'(t0) = e_k`` is integrated for every field and conjugate points are
    the zeros of ``det Y(t)`` after ``t0``.
    """
    from scipy.integrate import solve_ivp
    from scipy.optimize import brentq

    tol = tol or TOLERANCES
    spec = spec or J.spec
    if spec.n != 1:
        raise ValueError("Jacobi ODE needs a one-dimensional base")
    fields = list(J.rows)
    m = len(fields)
    order = J.order
    if order < 1:
        raise ValueError("operator has no derivative term")
    coeff = _coefficient_functions(J, background or {}, spec, functions)
    idx = {f: i for i, f in enumerate(fields)}

    def mats(t):
        Ms = [np.zeros((m, m)) for _ in range(order + 1)]
        for (i, j, beta), fn in coeff.items():
            Ms[beta[0]][idx[i], idx[j]] += float(fn(t))
        return Ms

    def rhs(t, z):
        Ms = mats(t)
        w = z.reshape(order, m)
        acc = np.zeros(m)
        for k in range(order):
            acc += Ms[k] @ w[k]
        top = np.linalg.solve(Ms[order], -acc)
        return np.concatenate([w[1:].ravel(), top])

    t0, t1 = interval
    if initial is None:
        starts = []
        for k in range(m):
            z = np.zeros(order * m)
            if order >= 2:
                z[m + k] = 1.0
            else:
                z[k] = 1.0
            starts.append(z)
    else:
        starts = [np.asarray(initial, dtype=float)]
    sols = []
    for z0 in starts:
        try:
            sol = solve_ivp(rhs, (t0, t1), z0, method="DOP853", rtol=tol.ode_rtol, atol=tol.ode_atol, dense_output=True)
        except np.linalg.LinAlgError as exc:
            raise IntegrationFailure(f"singular leading coefficient: {exc}") from exc
        if not sol.success or not np.all(np.isfinite(sol.y)):
            raise IntegrationFailure(sol.message)
        sols.append(sol)
    ts = np.linspace(t0, t1, 4001)

    def Y(t):
        return np.stack([s.sol(t)[:m] for s in sols], axis=-1)

    def det(t):
        return float(np.linalg.det(Y(t))) if initial is None else float(sols[0].sol(t)[0])

    dets = np.array([det(t) for t in ts])
    conj = []
    # skip the trivial zero at t0
    start = 1
    while start < len(ts) and abs(dets[start]) < 1e-14:
        start += 1
    for a, b, da, db in zip(ts[start:-1], ts[start + 1 :], dets[start:-1], dets[start + 1 :]):
        if da == 0.0:
            conj.append(float(a))
        elif da * db < 0:
            conj.append(float(brentq(det, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps)))
    vals = np.stack([Y(t) for t in ts]) if initial is None else np.array([sols[0].sol(t)[:m] for t in ts])
    return JacobiSolution(ts, vals, dets, conj)


# -- sympy route ------------------------------------------------------------


def to_sympy(e, spec):
    """Translate an Expr into sympy with jets as derivatives of applied
    functions ``u(x, ...)``; parameters become functions as well."""
    xs = [sp.Symbol(c, real=True) for c in spec.coords]
    cache = {}

    def fn(name, alpha):
        key = (name, tuple(alpha))
        if key not in cache:
            f = sp.Function(name)(*xs)
            pairs = [(x, k) for x, k in zip(xs, alpha) if k]
            cache[key] = sp.Derivative(f, *pairs) if pairs else f
        return cache[key]

    def atom(a):
        if a.rank == E._COORD:
            return xs[spec.index(a.name)]
        if a.rank in (E._JET, E._PARAM):
            return fn(a.name, a.alpha)
        if a.rank == E._PI:
            return sp.pi
        if a.rank == E._ARG:
            return sp.Symbol(f"arg{a.index}")
        if a.rank == E._FUNC:
            return _sympy_functions()[a.name](conv(a.arg))
        if a.rank == E._POW:
            return conv(a.base)
        if a.rank == E._SYM:
            args = [conv(x) for x in a.args]
            dummies = [sp.Symbol(f"_{a.name}{j}") for j in range(len(args))]
            g = sp.Function(a.name)(*dummies)
            for d, k in zip(dummies, a.derivs):
                if k:
                    g = sp.diff(g, d, k)
            return g.subs(dict(zip(dummies, args)), simultaneous=True)
        raise TypeError(a)

    def conv(expr_):
        total = sp.Integer(0)
        for m, c in expr_.terms.items():
            t = sp.Rational(c.numerator, c.denominator) if hasattr(c, "numerator") else sp.nsimplify(c)
            for a, x in m:
                t = t * atom(a) ** (sp.Rational(x.numerator, x.denominator) if hasattr(x, "numerator") else x)
            total = total + t
        return total

    return conv(E.as_expr(e))


def sympy_euler_lagrange(L, spec):
    """Euler-Lagrange expressions from ``sympy.euler_equations``."""
    from sympy.calculus.euler import euler_equations

    xs = [sp.Symbol(c, real=True) for c in spec.coords]
    funcs = [sp.Function(f)(*xs) for f in spec.fields]
    eqs = euler_equations(to_sympy(L, spec), funcs, xs)
    return {f: eq.lhs for f, eq in zip(spec.fields, eqs)}


def sympy_equal(a, b):
    """Symbolic equality of two sympy expressions (derivatives of applied
    functions are treated as independent symbols)."""
    d = sp.expand(a - b)
    if d == 0:
        return True
    return sp.simplify(d) == 0
