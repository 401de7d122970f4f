"""Residual oracles: exact symbolic substitution into the evolution equation
and high-order central finite differences on uniform grids.

Every solution produced by the library certifies against these two checks,
so this module depends only on the kernel and the model types.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from sympy import Expr

from .errors import InputError
from .kernel import (
    as_exact,
    differentiate,
    eval_numeric,
    mono_dict,
    normalize,
    solve_affine,
    t,
    x,
)
from .kernel.polyroot import rational_roots
from .model import embed_reduced


@dataclass(frozen=True)
class GridSpec:
    """Uniform space-time verification grid.

    ht and hx are requested steps; the realized grids respace to the nearest
    uniform subdivision of the ranges.  exclude lists singular x-loci the
    caller acknowledges; grids whose x-range contains a singular coefficient
    locus are refused either way, since a stencil cannot straddle a pole.
    """

    t_range: tuple
    x_range: tuple
    ht: float
    hx: float
    order: int = 6
    exclude: tuple = ()

    def __post_init__(self):
        for name in ("t_range", "x_range"):
            rg = tuple(float(v) for v in getattr(self, name))
            if len(rg) != 2 or not rg[0] < rg[1]:
                raise InputError(f"{name} must be (lo, hi) with lo < hi")
            object.__setattr__(self, name, rg)
        for name, rg in (("ht", self.t_range), ("hx", self.x_range)):
            h = float(getattr(self, name))
            if not 0.0 < h <= rg[1] - rg[0]:
                raise InputError(f"{name} must lie in (0, range span]")
            object.__setattr__(self, name, h)
        if not (
            isinstance(self.order, int) and self.order >= 2 and self.order % 2 == 0
        ):
            raise InputError("stencil order must be an even integer >= 2")
        object.__setattr__(self, "exclude", tuple(float(v) for v in self.exclude))

    def points(self):
        """Realized (t, x) grid point arrays."""
        out = []
        for (lo, hi), h in ((self.t_range, self.ht), (self.x_range, self.hx)):
            n = max(2, int(round((hi - lo) / h)) + 1)
            out.append(np.linspace(lo, hi, n))
        return tuple(out)

    def to_doc(self):
        doc = {
            "t": list(self.t_range),
            "x": list(self.x_range),
            "ht": self.ht,
            "hx": self.hx,
            "order": self.order,
        }
        if self.exclude:
            doc["exclude"] = list(self.exclude)
        return doc

    @classmethod
    def from_doc(cls, doc):
        try:
            return cls(
                tuple(doc["t"]),
                tuple(doc["x"]),
                float(doc["ht"]),
                float(doc["hx"]),
                int(doc.get("order", 6)),
                tuple(doc.get("exclude", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed grid document: {exc}") from None


@lru_cache(maxsize=None)
def stencil(d, p):
    """Central finite-difference stencil for the d-th derivative at accuracy
    order p on unit spacing: returns (m, coeffs) with integer offsets -m..m
    and exact Fraction coefficients (Vandermonde moment solve over Q)."""
    if not (isinstance(d, int) and d >= 1):
        raise InputError("derivative order must be a positive integer")
    if not (isinstance(p, int) and p >= 2 and p % 2 == 0):
        raise InputError("accuracy order must be an even integer >= 2")
    m = (d + p - 1) // 2 if d % 2 else (d + p - 2) // 2
    offs = range(-m, m + 1)
    rows = [[Fraction(k) ** j for k in offs] for j in range(2 * m + 1)]
    rhs = [
        Fraction(math.factorial(d)) if j == d else Fraction(0)
        for j in range(2 * m + 1)
    ]
    got = solve_affine(rows, rhs)
    if got is None:
        raise InputError("stencil moment system is inconsistent")
    return m, tuple(got[0])


def residual_symbolic(eq, u):
    """normalize(u_t - A^k u_k - B) with u_k the k-th x-derivative."""
    eq = embed_reduced(eq)
    u = as_exact(u)
    res = differentiate(u, t) - eq.B
    for k in range(eq.r + 1):
        res -= eq.A[k] * differentiate(u, x, k)
    return normalize(res).as_expr()


def _poly_coeffs_1d(e, var):
    """Fraction coefficient list of e as a polynomial in var alone, or None."""
    d = mono_dict(e)
    coeffs = {}
    for key, c in d.items():
        if not c.is_Rational:
            return None
        if key == ():
            coeffs[0] = Fraction(c.p, c.q)
            continue
        if len(key) != 1:
            return None
        base, expo = key[0]
        if base != var or not expo.is_Integer or expo < 0:
            return None
        coeffs[int(expo)] = Fraction(c.p, c.q)
    if not coeffs:
        return None
    deg = max(coeffs)
    return [coeffs.get(i, Fraction(0)) for i in range(deg + 1)]


def singular_loci(eq):
    """Rational zeros of coefficient denominators, per variable.

    Returns {"t": (...), "x": (...)} with Fraction loci.  Denominators that
    are not univariate polynomials are skipped; pointwise evaluation still
    raises EvalDomainError if such a locus is hit at run time.
    """
    eq = embed_reduced(eq)
    out = {"t": set(), "x": set()}
    for a in eq.A + (eq.B,):
        den = normalize(a).den
        free = den.free_symbols
        for var, name in ((t, "t"), (x, "x")):
            if free != {var}:
                continue
            coeffs = _poly_coeffs_1d(den, var)
            if coeffs is None or len(coeffs) < 2:
                continue
            roots, _rest = rational_roots(coeffs)
            out[name].update(root for root, _m in roots)
    return {k: tuple(sorted(v)) for k, v in out.items()}


def _grid_values(u, tpts, xpts):
    if isinstance(u, Expr):
        expr = u
        return np.array(
            [
                [eval_numeric(expr, {"t": tv, "x": xv}) for xv in xpts]
                for tv in tpts
            ]
        )
    if callable(u):
        return np.array([[float(u(tv, xv)) for xv in xpts] for tv in tpts])
    raise InputError("u must be an expression, a callable or grid data")


def _as_grid_data(u):
    """(tpts, xpts, values) when u carries sampled grid data, else None."""
    data = getattr(u, "grid", u if isinstance(u, dict) else None)
    if not isinstance(data, dict):
        return None
    try:
        tpts = np.array([float(v) for v in data["t"]])
        xpts = np.array([float(v) for v in data["x"]])
        vals = np.array(data["values"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed grid data: {exc}") from None
    if vals.shape != (len(tpts), len(xpts)):
        raise InputError("grid values must be shaped (len(t), len(x))")
    for pts, name in ((tpts, "t"), (xpts, "x")):
        if len(pts) < 2:
            raise InputError(f"grid needs at least two {name} points")
        h = pts[1] - pts[0]
        if h <= 0 or np.max(np.abs(np.diff(pts) - h)) > 1e-9 * abs(h):
            raise InputError(f"{name} grid points must be uniformly spaced")
    return tpts, xpts, vals


def _derivative(U, d, p, h, axis):
    m, coeffs = stencil(d, p)
    n = U.shape[axis]
    out = np.zeros_like(
        np.take(U, range(m, n - m), axis=axis), dtype=float
    )
    for idx, c in enumerate(coeffs):
        k = idx - m
        out += float(c) * np.take(U, range(m + k, n - m + k), axis=axis)
    return out / h**d, m


def _coeff_grid(a, tis, xjs):
    e = normalize(a).as_expr()
    free = e.free_symbols
    shape = (len(tis), len(xjs))
    if not free:
        return np.full(shape, eval_numeric(e, {}))
    if free == {t}:
        col = np.array([eval_numeric(e, {"t": tv}) for tv in tis])
        return np.tile(col[:, None], (1, shape[1]))
    if free == {x}:
        row = np.array([eval_numeric(e, {"x": xv}) for xv in xjs])
        return np.tile(row[None, :], (shape[0], 1))
    return np.array(
        [[eval_numeric(e, {"t": tv, "x": xv}) for xv in xjs] for tv in tis]
    )


def _level_residual(eq, U, tpts, xpts, p):
    """One grid level: (residual array, interior t points, interior x points,
    rounding-noise floor estimate), or None if the grid is too small for the
    stencil margins.  The floor estimate is the worst-case propagation of
    unit roundoff in the u samples through the stencil weights."""
    r = eq.r
    nt, nx = U.shape
    mt, ct = stencil(1, p)
    ds = [k for k in range(1, r + 1) if normalize(eq.A[k]).num != 0]
    mx = max(stencil(d, p)[0] for d in ds)
    if nt < 2 * mt + 1 or nx < 2 * mx + 1:
        return None
    ht = tpts[1] - tpts[0]
    hx = xpts[1] - xpts[0]
    tis = tpts[mt : nt - mt]
    xjs = xpts[mx : nx - mx]
    eps_u = 2.3e-16 * float(np.max(np.abs(U)))
    ut, _ = _derivative(U, 1, p, ht, axis=0)
    acc = ut[:, mx : nx - mx]
    floor = eps_u * float(sum(abs(c) for c in ct)) / ht
    for k in range(r + 1):
        if normalize(eq.A[k]).num == 0:
            continue
        if k == 0:
            uxk = U[mt : nt - mt, mx : nx - mx]
            wsum = 1.0
        else:
            full, mk = _derivative(U, k, p, hx, axis=1)
            lo = mx - mk
            uxk = full[mt : nt - mt, lo : lo + len(xjs)]
            wsum = float(sum(abs(c) for c in stencil(k, p)[1])) / hx**k
        coef = _coeff_grid(eq.A[k], tis, xjs)
        acc = acc - coef * uxk
        floor += eps_u * float(np.max(np.abs(coef))) * wsum
    if normalize(eq.B).num != 0:
        acc = acc - _coeff_grid(eq.B, tis, xjs)
    return acc, tis, xjs, floor


def residual_numeric(eq, u, g=None):
    """Max-norm finite-difference residual and empirical convergence order.

    u is a symbolic expression, a callable u(t, x), or sampled grid data (a
    dict with keys t, x, values, or an object with such a .grid).  For
    expressions and callables g is required and sets the finest grid; the
    residual is also evaluated on the twice- and four-times-coarsened grids
    (two halvings end at the requested step) and the slope of log2(residual)
    against log2(step) is reported.  Slope is None when any level sits at
    the rounding floor.
    """
    eq = embed_reduced(eq)
    data = _as_grid_data(u)
    if data is None:
        if g is None:
            raise InputError("a GridSpec is required for non-grid solutions")
        tpts, xpts = g.points()
        p = g.order
    else:
        tpts, xpts, U = data
        p = g.order if g is not None else 6

    loci = singular_loci(eq)
    ranges = {"t": (tpts[0], tpts[-1]), "x": (xpts[0], xpts[-1])}
    for name, locs in loci.items():
        lo, hi = ranges[name]
        for root in locs:
            if lo - 1e-12 <= float(root) <= hi + 1e-12:
                raise InputError(
                    f"grid crosses singular coefficient locus {name} = {root};"
                    f" restrict {name}_range to one side of it"
                )

    if data is None:
        U = _grid_values(u, tpts, xpts)

    levels = []
    for s in (4, 2, 1):
        got = _level_residual(eq, U[::s, ::s], tpts[::s], xpts[::s], p)
        if got is not None:
            levels.append((s,) + got)
    if not levels or levels[-1][0] != 1:
        raise InputError("interior region is empty after stencil margins")
    max_residual = float(np.max(np.abs(levels[-1][1])))

    # Slope: coarser levels have wider margins, so compare maxima over the
    # common interior (the coarsest level's region); levels whose residual
    # sits near the rounding floor measure noise, not truncation, and are
    # dropped from the fit.
    slope = None
    if len(levels) >= 2:
        tlo, thi = levels[0][2][0] - 1e-12, levels[0][2][-1] + 1e-12
        xlo, xhi = levels[0][3][0] - 1e-12, levels[0][3][-1] + 1e-12
        clean = []
        for s, acc, tis, xjs, floor in levels:
            sel = acc[
                np.ix_(
                    (tis >= tlo) & (tis <= thi), (xjs >= xlo) & (xjs <= xhi)
                )
            ]
            rmax = float(np.max(np.abs(sel)))
            if rmax >= 8.0 * floor:
                clean.append((math.log2(s), math.log2(rmax)))
        if len(clean) >= 2:
            mh = sum(h for h, _ in clean) / len(clean)
            mr = sum(v for _, v in clean) / len(clean)
            num = sum((h - mh) * (v - mr) for h, v in clean)
            den = sum((h - mh) ** 2 for h, _ in clean)
            slope = num / den
    return max_residual, slope
