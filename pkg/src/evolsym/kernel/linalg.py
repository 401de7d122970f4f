"""Exact linear algebra over Fraction."""

from fractions import Fraction

from sympy import Rational


def to_fraction(q):
    if isinstance(q, Fraction):
        return q
    if isinstance(q, int):
        return Fraction(q)
    if isinstance(q, Rational):
        return Fraction(q.p, q.q)
    raise TypeError(f"not an exact rational: {q!r}")


def rref(rows):
    """Reduced row echelon form (in place on a copy); returns (R, pivots)."""
    m = [list(map(Fraction, r)) for r in rows]
    nr = len(m)
    nc = len(m[0]) if nr else 0
    pivots = []
    r = 0
    for c in range(nc):
        p = next((i for i in range(r, nr) if m[i][c] != 0), None)
        if p is None:
            continue
        m[r], m[p] = m[p], m[r]
        pv = m[r][c]
        m[r] = [v / pv for v in m[r]]
        for i in range(nr):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == nr:
            break
    return m, pivots


def rank(rows):
    if not rows:
        return 0
    return len(rref(rows)[1])


def nullspace(rows, ncols):
    """Basis of the right null space, one vector per free column."""
    if not rows:
        return [[Fraction(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    red, pivots = rref(rows)
    pivset = set(pivots)
    free = [c for c in range(ncols) if c not in pivset]
    basis = []
    for fc in free:
        v = [Fraction(0)] * ncols
        v[fc] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -red[i][fc]
        basis.append(v)
    return basis


def solve_affine(rows, rhs):
    """Particular solution of rows * v = rhs with free variables set to 0,
    plus the null space basis; None if inconsistent."""
    if not rows:
        return None
    nc = len(rows[0])
    aug = [list(map(Fraction, r)) + [to_fraction(b)] for r, b in zip(rows, rhs)]
    red, pivots = rref(aug)
    if nc in pivots:
        return None
    sol = [Fraction(0)] * nc
    for i, pc in enumerate(pivots):
        sol[pc] = red[i][nc]
    null = nullspace([r[:nc] for r in rows], nc)
    return sol, null


def row_canonical(vectors):
    """Canonical (RREF) spanning set of the row space, zero rows dropped."""
    if not vectors:
        return []
    red, pivots = rref(vectors)
    return [red[i] for i in range(len(pivots))]
