"""Canonical num/den normal form over the closed fragment.

A normalized expression is a ratio of two expanded polynomials in the
"generators": symbols, surd constants, and transcendental atom applications.
Canonicalization rules, applied per monomial:

  * exp factors merge:            exp(a)^p * exp(b)^q -> exp(p*a + q*b)
  * sgn(a)^n -> sgn(a)^(n mod 2)
  * abs(a)^q -> a^m * sgn(a)^(m mod 2) * abs(a)^(q-m),  m = floor(q),
    so abs carries only a fractional exponent in [0, 1)
  * cos(a)^n with n >= 2 -> (1 - sin(a)^2)^(n//2) * cos(a)^(n mod 2)

The den is cleared of rational content, its leading monomial made positive,
and the num/den gcd is cancelled exactly, so equal rational expressions get
identical normal forms.  Domain notes record denominator loci, cancelled
factors, ln positivity, fractional-power positivity and abs/sgn punctures.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from sympy import (
    Add,
    Dummy,
    Expr,
    Integer,
    Mul,
    Pow,
    Rational,
    S,
    Symbol,
    default_sort_key,
    expand,
    factor_list,
    nan,
    oo,
    together,
    zoo,
)
from sympy import div as _sym_div
from sympy import gcd as _sym_gcd

from ..errors import InputError, UnsupportedError
from .atoms import ATOM_HEADS, AbsV, Cos, Exp, Ln, Sgn, Sin, atom_heads_in
from .printer import to_str


@dataclass(frozen=True)
class NormalForm:
    num: Expr
    den: Expr
    atoms: tuple = ()
    domain_notes: tuple = ()

    def as_expr(self):
        if self.den == 1:
            return self.num
        return self.num / self.den

    def __str__(self):
        if self.den == 1:
            return to_str(self.num)
        return f"({to_str(self.num)})/({to_str(self.den)})"


def as_exact(e):
    """Coerce to an exact sympy expression; floats and infinities rejected."""
    if isinstance(e, NormalForm):
        e = e.as_expr()
    if isinstance(e, int):
        e = Integer(e)
    if isinstance(e, Fraction):
        e = Rational(e.numerator, e.denominator)
    if not isinstance(e, Expr):
        raise InputError(f"not an expression: {e!r}")
    if e.has(nan) or e.has(oo) or e.has(-oo) or e.has(zoo):
        raise InputError("expression contains an undefined value (zero denominator?)")
    if any(a.is_Float for a in e.atoms()):
        raise InputError("float literals are outside the exact fragment")
    return _adopt_foreign_heads(e)


def _adopt_foreign_heads(e):
    # sympy auto-evaluation can mint its own function heads, e.g.
    # (t**2)**(1/2) -> Abs(t) for real t; fold them into our atoms
    import sympy as _sp

    table = {
        _sp.Abs: AbsV,
        _sp.sign: Sgn,
        _sp.exp: Exp,
        _sp.log: Ln,
        _sp.sin: Sin,
        _sp.cos: Cos,
    }
    if not e.has(*table.keys()):
        return e

    def walk(n):
        if not n.args:
            return n
        args = [walk(a) for a in n.args]
        head = table.get(n.func)
        if head is not None and len(args) == 1:
            return head(args[0])
        if all(a is b for a, b in zip(args, n.args)):
            return n
        return n.func(*args)

    return walk(e)


def _canonical_atom_args(e):
    # normalize transcendental arguments bottom-up so exp(t+t) and exp(2*t)
    # agree before the monomial pass sees them
    if e.is_Atom:
        return e
    args = tuple(_canonical_atom_args(a) for a in e.args)
    if isinstance(e, ATOM_HEADS):
        return type(e)(normalize(args[0]).as_expr())
    return e.func(*args)


# --- monomial dictionaries -------------------------------------------------
# A monomial is a factor map {base: exponent} plus a Rational coefficient;
# a polynomial is {key: coeff} with key the sorted tuple of (base, exponent).


def _key(fmap):
    return tuple(sorted(fmap.items(), key=lambda be: default_sort_key(be[0])))


def _add_factor(fmap, base, e):
    cur = fmap.get(base, S.Zero) + e
    if cur == 0:
        fmap.pop(base, None)
    else:
        fmap[base] = cur


def _canon_push(fmap, base, e):
    # flatten product bases and nested powers where the rewrite is sound
    if base.is_Mul:
        for f in base.args:
            b2, e2 = f.as_base_exp()
            _canon_push(fmap, b2, e2 * e)
        return
    if base.is_Pow:
        b2, e2 = base.as_base_exp()
        sound = (
            e.is_Integer
            or b2.is_positive
            or (e2.is_Integer and e2 % 2 == 1 and e.is_Rational and e.q % 2 == 1)
        )
        if sound:
            _canon_push(fmap, b2, e2 * e)
            return
    _add_factor(fmap, base, e)


def _rat_prime_powers(q):
    """Prime factorization of a positive rational as [(prime, exponent)]."""
    from sympy import factorint

    out = []
    for p, k in factorint(q.p).items():
        out.append((int(p), int(k)))
    for p, k in factorint(q.q).items():
        out.append((int(p), -int(k)))
    return out


def _canon_monomial(coeff, factors):
    """Apply the per-monomial rules; returns (coeff, fmap)."""
    fmap = {}
    exp_arg = S.Zero
    for base, e in factors:
        if isinstance(base, Exp):
            exp_arg += e * base.args[0]
        else:
            _canon_push(fmap, base, e)
    # fixpoint cleanup: factor merging may recreate reducible powers
    while True:
        changed = False
        for base in list(fmap):
            e = fmap.get(base)
            if e is None:
                continue
            if base.is_Rational:
                if not e.is_Rational:
                    if base.is_negative:
                        raise UnsupportedError(
                            "negative base under a symbolic exponent"
                        )
                    continue
                if base.is_Integer and base.is_prime and 0 < e < 1:
                    continue
                del fmap[base]
                changed = True
                if base.is_negative:
                    if e.q % 2 == 0:
                        raise UnsupportedError(
                            "fractional power of a negative constant"
                        )
                    # real odd root: (-b)^(p/q) = (-1)^p * b^(p/q)
                    if e.p % 2:
                        coeff = -coeff
                    base = -base
                if base == 1:
                    continue
                if e.is_Integer:
                    coeff *= base**e
                    continue
                # split surds over prime bases so sqrt(2)*sqrt(3) == sqrt(6)
                for p, k in _rat_prime_powers(base):
                    ee = e * k
                    m = ee.p // ee.q
                    coeff *= Integer(p) ** Integer(m)
                    if ee - m:
                        _add_factor(fmap, Integer(p), ee - m)
            elif isinstance(base, Sgn) and e.is_Integer and not (0 <= e < 2):
                del fmap[base]
                if e % 2:
                    _add_factor(fmap, base, S.One)
                changed = True
            elif isinstance(base, AbsV) and e.is_Rational and not (0 <= e < 1):
                del fmap[base]
                m = e.p // e.q
                a = base.args[0]
                _canon_push(fmap, a, Integer(m))
                if m % 2:
                    _add_factor(fmap, Sgn(a), S.One)
                if e - m:
                    _add_factor(fmap, base, e - m)
                changed = True
            elif isinstance(base, Exp):
                del fmap[base]
                exp_arg += e * base.args[0]
                changed = True
        if not changed:
            break
    if exp_arg != 0:
        ne = Exp(normalize(exp_arg).as_expr())
        if ne != 1:
            _add_factor(fmap, ne, S.One)
    return coeff, fmap


def _term_parts(term):
    coeff = S.One
    factors = []
    for f in Mul.make_args(term):
        if f.is_Rational:
            coeff *= f
        else:
            b, e = f.as_base_exp()
            factors.append((b, e))
    return coeff, factors


def _accumulate(out, key, coeff):
    cur = out.get(key, S.Zero) + coeff
    if cur == 0:
        out.pop(key, None)
    else:
        out[key] = cur


def mono_dict(e):
    """Expand e into the canonical polynomial dict {key: Rational coeff}."""
    for _round in range(6):
        e = expand(e)
        out = {}
        for term in Add.make_args(e):
            coeff, factors = _term_parts(term)
            if coeff == 0:
                continue
            coeff, fmap = _canon_monomial(coeff, factors)
            _accumulate(out, _key(fmap), coeff)
        _reduce_cos(out)
        # the abs rule can move integer powers onto sum bases; re-expand
        if not any(
            base.is_Add and e2.is_Integer and e2 > 0 for key in out for base, e2 in key
        ):
            return out
        e = dict_to_expr(out)
    raise UnsupportedError("monomial canonicalization did not stabilize")


def _reduce_cos(out):
    # cos(a)^n (n>=2) -> (1 - sin(a)^2)^(n//2) cos(a)^(n%2), to a fixpoint
    while True:
        target = None
        for key in out:
            for base, e in key:
                if isinstance(base, Cos) and e.is_Integer and e >= 2:
                    target = (key, base, e)
                    break
            if target:
                break
        if target is None:
            return
        key, base, e = target
        coeff = out.pop(key)
        rest = {b: q for b, q in key if b is not base}
        n2, nrem = int(e) // 2, int(e) % 2
        a = base.args[0]
        for k in range(n2 + 1):
            c = coeff * Integer(math.comb(n2, k)) * Integer(-1) ** k
            fmap = dict(rest)
            if k:
                _add_factor(fmap, Sin(a), Integer(2 * k))
            if nrem:
                _add_factor(fmap, base, S.One)
            _accumulate(out, _key(fmap), c)


def dict_split(d):
    """Split {key: coeff} into (num dict, den fmap) clearing negative
    exponents of every base."""
    need = {}
    for key in d:
        for base, e in key:
            if e.is_negative:
                cur = need.get(base, S.Zero)
                if -e > cur:
                    need[base] = -e
    if not need:
        return d, {}
    out = {}
    for key, coeff in d.items():
        fmap = dict(key)
        for base, m in need.items():
            _add_factor(fmap, base, m)
        out[_key(fmap)] = coeff
    return out, need


def dict_mul(d1, d2):
    out = {}
    for k1, c1 in d1.items():
        f1 = dict(k1)
        for k2, c2 in d2.items():
            fmap = dict(f1)
            for b, e in k2:
                _add_factor(fmap, b, e)
            _accumulate(out, _key(fmap), c1 * c2)
    return out


def fmap_to_expr(fmap):
    return Mul(
        *[Pow(b, e) for b, e in sorted(fmap.items(), key=lambda be: default_sort_key(be[0]))]
    )


def dict_to_expr(d):
    terms = sorted(d.items(), key=lambda kc: default_sort_key(fmap_to_expr(dict(kc[0]))))
    return Add(*[coeff * fmap_to_expr(dict(key)) for key, coeff in terms])


# --- cancellation over dummy-encoded generators ----------------------------


def _encode(dicts):
    """Replace every non-symbol base and fractional power by integer powers
    of dummy generators so sympy polynomial routines apply."""
    denom_lcm = {}
    for d in dicts:
        for key in d:
            for base, e in key:
                if not e.is_Rational:
                    raise UnsupportedError(f"non-rational exponent on {to_str(base)}")
                q = denom_lcm.get(base, 1)
                denom_lcm[base] = q * e.q // math.gcd(q, e.q)
    gens = {}
    for base, q in denom_lcm.items():
        if isinstance(base, Symbol) and q == 1:
            gens[base] = (base, 1)
        else:
            gens[base] = (Dummy(f"g{len(gens)}", positive=True), q)
    encoded = []
    for d in dicts:
        terms = []
        for key, coeff in d.items():
            fs = [coeff]
            for base, e in key:
                g, q = gens[base]
                fs.append(Pow(g, Integer(e * q)))
            terms.append(Mul(*fs))
        encoded.append(Add(*terms))
    decode = {g: Pow(base, Rational(1, q)) for base, (g, q) in gens.items() if g is not base}
    return encoded, decode


def _decode(e, decode):
    if not decode:
        return e
    return e.xreplace(decode)


def _is_const_monomial(d):
    return len(d) == 1 and () in d


def _cancel_pair(num_d, den_d):
    if _is_const_monomial(den_d):
        return num_d, den_d, []
    if len(den_d) == 1 and len(num_d) >= 1:
        # monomial denominator: divide exponentwise
        (dkey, dc), = den_d.items()
        dmap = dict(dkey)
        out = {}
        for key, c in num_d.items():
            fmap = dict(key)
            for b, e in dmap.items():
                _add_factor(fmap, b, -e)
            out[_key(fmap)] = c / dc
        nn, need = dict_split(out)
        return nn, {_key(need): S.One}, []
    (num_e, den_e), decode = _encode([num_d, den_d])
    cancelled = []
    g = _sym_gcd(num_e, den_e)
    if g != 1 and not g.is_Rational:
        qn, rn = _sym_div(num_e, g)
        qd, rd = _sym_div(den_e, g)
        if rn == 0 and rd == 0:
            num_e, den_e = qn, qd
            _, parts = factor_list(g)
            for f, _m in parts:
                ff = _decode(f, decode)
                if not ff.is_Rational:
                    cancelled.append(ff)
    num_e = _decode(expand(num_e), decode)
    den_e = _decode(expand(den_e), decode)
    return mono_dict(num_e), mono_dict(den_e), cancelled


def _scale(num_d, den_d):
    """Make den integer-primitive with positive leading coefficient."""
    coeffs = list(den_d.values())
    l = 1
    for c in coeffs:
        l = l * c.q // math.gcd(l, c.q)
    g = 0
    for c in coeffs:
        g = math.gcd(g, abs(c.p) * (l // c.q))
    lead_key = min(den_d, key=lambda k: default_sort_key(fmap_to_expr(dict(k))))
    s = Rational(l, g)
    if den_d[lead_key] < 0:
        s = -s
    if s == 1:
        return num_d, den_d
    return {k: c * s for k, c in num_d.items()}, {k: c * s for k, c in den_d.items()}


def _domain_notes(num_d, den_d, cancelled, den_e):
    notes = set()
    for f in cancelled:
        notes.add(f"{to_str(f)} != 0")
    if len(den_d) > 1:
        notes.add(f"{to_str(den_e)} != 0")
    else:
        for key in den_d:
            for base, _e in key:
                if not base.is_Rational:
                    notes.add(f"{to_str(base)} != 0")
    for d in (num_d, den_d):
        for key in d:
            for base, e in key:
                if isinstance(base, (AbsV, Sgn)):
                    notes.add(f"{to_str(base.args[0])} != 0")
                elif not e.is_Integer and not base.is_Rational and not isinstance(base, Exp):
                    notes.add(f"{to_str(base)} > 0")
                for sub in base.atoms(Ln):
                    notes.add(f"{to_str(sub.args[0])} > 0")
    return tuple(sorted(notes))


def normalize(e):
    """Normal form of e.  Raises InputError on malformed input and
    UnsupportedError outside the fragment."""
    e = as_exact(e)
    e = _canonical_atom_args(e)
    n0, d0 = together(expand(e), deep=True).as_numer_denom()
    dn = mono_dict(n0)
    if not dn:
        return NormalForm(S.Zero, S.One)
    dd = mono_dict(d0)
    if not dd:
        raise InputError("zero denominator")
    nn, nneed = dict_split(dn)
    dnn, dneed = dict_split(dd)
    num_d = dict_mul(nn, {_key(dneed): S.One}) if dneed else nn
    den_d = dict_mul(dnn, {_key(nneed): S.One}) if nneed else dnn
    num_d, den_d, cancelled = _cancel_pair(num_d, den_d)
    if not num_d:
        return NormalForm(S.Zero, S.One)
    num_d, den_d = _scale(num_d, den_d)
    num_e = dict_to_expr(num_d)
    den_e = dict_to_expr(den_d)
    atoms = tuple(
        sorted(
            set(atom_heads_in(num_e)) | set(atom_heads_in(den_e)),
            key=default_sort_key,
        )
    )
    notes = _domain_notes(num_d, den_d, cancelled, den_e)
    return NormalForm(num_e, den_e, atoms, notes)
