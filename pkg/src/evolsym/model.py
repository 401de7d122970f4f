"""Equations and symmetry vector fields.

An evolution equation is u_t = A^r u_r + ... + A^1 u_1 + A^0 u + B with
u_k the k-th x-derivative, r > 2, A^r nonvanishing.  The reduced form has
A^r = 1, A^{r-1} = 0, B = 0 and stores only A^0..A^{r-2}.

Symmetry fields are spanned by

    D(tau) = tau d/dt + (1/r) tau' x d/dx     (tau, chi, phi functions of t)
    P(chi) = chi d/dx
    I(phi) = phi u d/du
    Z(eta) = eta d/du                          (eta a function of t and x)

and VectorField(tau, chi, phi, eta) realizes D(tau)+P(chi)+I(phi)+Z(eta).
"""

from dataclasses import dataclass

from sympy import Expr, Rational, S

from .errors import InputError
from .kernel import (
    Verdict,
    as_exact,
    differentiate,
    is_zero,
    normalize,
    rank,
    t,
    to_fraction,
    to_str,
    x,
)
from .kernel.normalform import dict_mul, mono_dict


@dataclass(frozen=True)
class EvolutionEquation:
    r: int
    A: tuple
    B: Expr = S.Zero

    def __post_init__(self):
        if not (isinstance(self.r, int) and self.r >= 3):
            raise InputError("order r must be an integer >= 3")
        if len(self.A) != self.r + 1:
            raise InputError(f"need {self.r + 1} coefficients A^0..A^{self.r}")
        object.__setattr__(self, "A", tuple(as_exact(a) for a in self.A))
        object.__setattr__(self, "B", as_exact(self.B))
        for a in self.A + (self.B,):
            if _has_bad_vars(a):
                raise InputError("coefficients may depend on t, x and parameters only")
        if is_zero(self.A[self.r]) is not Verdict.NONZERO:
            raise InputError("leading coefficient A^r must be certifiably nonzero")


@dataclass(frozen=True)
class ReducedEquation:
    r: int
    A: tuple

    def __post_init__(self):
        if not (isinstance(self.r, int) and self.r >= 3):
            raise InputError("order r must be an integer >= 3")
        if len(self.A) != self.r - 1:
            raise InputError(f"need {self.r - 1} coefficients A^0..A^{self.r - 2}")
        object.__setattr__(self, "A", tuple(as_exact(a) for a in self.A))
        for a in self.A:
            if _has_bad_vars(a):
                raise InputError("coefficients may depend on t, x and parameters only")


def _has_bad_vars(e):
    return any(s.name == "u" for s in e.free_symbols)


def embed_reduced(eq):
    """View a reduced equation as a full one (A^{r-1}=0, A^r=1, B=0)."""
    if isinstance(eq, EvolutionEquation):
        return eq
    return EvolutionEquation(eq.r, eq.A + (S.Zero, S.One), S.Zero)


def as_reduced(eq):
    """View a full equation in the reduced form, checking the gauges hold."""
    if isinstance(eq, ReducedEquation):
        return eq
    r = eq.r
    if (
        is_zero(eq.A[r] - 1) is not Verdict.ZERO
        or is_zero(eq.A[r - 1]) is not Verdict.ZERO
        or is_zero(eq.B) is not Verdict.ZERO
    ):
        raise InputError("equation is not reduced (needs A^r=1, A^(r-1)=0, B=0)")
    return ReducedEquation(r, eq.A[: r - 1])


@dataclass(frozen=True)
class VectorField:
    tau: Expr = S.Zero
    chi: Expr = S.Zero
    phi: Expr = S.Zero
    eta0: Expr = S.Zero

    def __post_init__(self):
        for name in ("tau", "chi", "phi", "eta0"):
            object.__setattr__(self, name, as_exact(getattr(self, name)))
        for name in ("tau", "chi", "phi"):
            if x in getattr(self, name).free_symbols:
                raise InputError(f"{name} must not depend on x")

    def describe(self):
        parts = []
        for comp, label in ((self.tau, "D"), (self.chi, "P"), (self.phi, "I")):
            c = normalize(comp).as_expr()
            if c != 0:
                parts.append(f"{label}({to_str(c)})")
        z = normalize(self.eta0).as_expr()
        if z != 0:
            parts.append(f"Z({to_str(z)})")
        return " + ".join(parts) if parts else "0"


def lie_bracket(q1, q2, r):
    """Commutator [q1, q2] for equations of order r."""
    if not (isinstance(r, int) and r >= 3):
        raise InputError("order r must be an integer >= 3")
    rr = Rational(1, r)
    t1, c1, p1, z1 = q1.tau, q1.chi, q1.phi, q1.eta0
    t2, c2, p2, z2 = q2.tau, q2.chi, q2.phi, q2.eta0
    dt = lambda f: differentiate(f, t)  # noqa: E731
    tau_b = t1 * dt(t2) - t2 * dt(t1)
    chi_b = t1 * dt(c2) - rr * dt(t1) * c2 - (t2 * dt(c1) - rr * dt(t2) * c1)
    phi_b = t1 * dt(p2) - t2 * dt(p1)
    zeta_b = S.Zero
    if z1 != 0 or z2 != 0:
        act1 = t1 * differentiate(z2, t) + (rr * dt(t1) * x + c1) * differentiate(z2, x) - p1 * z2
        act2 = t2 * differentiate(z1, t) + (rr * dt(t2) * x + c2) * differentiate(z1, x) - p2 * z1
        zeta_b = act1 - act2
    return VectorField(
        normalize(tau_b).as_expr(),
        normalize(chi_b).as_expr(),
        normalize(phi_b).as_expr(),
        normalize(zeta_b).as_expr(),
    )


# --- coordinates over a common function basis -------------------------------


def _slot_coords(funcs):
    """Monomial-coordinate vectors for a list of functions, over a common
    denominator.  Returns (keys, rows of Fractions)."""
    nfs = [normalize(f) for f in funcs]
    dens = []
    for nf in nfs:
        if nf.den != 1 and nf.den not in dens:
            dens.append(nf.den)
    dicts = []
    for nf in nfs:
        d = mono_dict(nf.num)
        for other in dens:
            if other != nf.den:
                d = dict_mul(d, mono_dict(other))
        dicts.append(d)
    keys = sorted({k for d in dicts for k in d}, key=repr)
    rows = [[to_fraction(d.get(k, S.Zero)) for k in keys] for d in dicts]
    return keys, rows


def field_coordinates(basis):
    """Stacked exact coordinate rows for (tau | chi | phi | eta0) slots."""
    blocks = []
    for slot in ("tau", "chi", "phi", "eta0"):
        _keys, rows = _slot_coords([getattr(q, slot) for q in basis])
        blocks.append(rows)
    return [sum((blocks[j][i] for j in range(4)), []) for i in range(len(basis))]


def algebra_signature(basis):
    """Signature (k0, k1, k2): dimensions of the I-part, the P-complement
    and the D-complement in the flag I <= I+P <= all."""
    basis = tuple(basis)
    if not basis:
        return (0, 0, 0)
    _kt, tau_rows = _slot_coords([q.tau for q in basis])
    _kc, chi_rows = _slot_coords([q.chi for q in basis])
    full = field_coordinates(basis)
    n = len(basis)
    if rank(full) < n:
        raise InputError("basis is linearly dependent")
    k2 = rank(tau_rows)
    k12 = rank([tr + cr for tr, cr in zip(tau_rows, chi_rows)])
    return (n - k12, k12 - k2, k2)


def in_span(field, basis):
    """Exact coordinates of field in span(basis), or None."""
    rows = field_coordinates(list(basis) + [field])
    width = len(rows[0])
    mat = [[rows[i][c] for i in range(len(basis))] for c in range(width)]
    rhs = [rows[len(basis)][c] for c in range(width)]
    from .kernel import solve_affine

    got = solve_affine(mat, rhs)
    if got is None:
        return None
    return got[0]


def bracket_closure_check(basis, r):
    """All pairwise brackets lie in span(basis); returns list of failures."""
    bad = []
    for i, qi in enumerate(basis):
        for j in range(i + 1, len(basis)):
            b = lie_bracket(qi, basis[j], r)
            if in_span(b, basis) is None:
                bad.append((i, j))
    return bad


@dataclass(frozen=True)
class SymmetryAlgebra:
    r: int
    basis: tuple
    signature: tuple
    case_label: str = ""
    ansatz: str = ""
    caveats: tuple = ()

    @property
    def dim(self):
        return len(self.basis)
