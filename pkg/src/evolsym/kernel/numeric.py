"""Pointwise floating evaluation with explicit domain errors."""

import math

from sympy import Expr, Symbol

from ..errors import EvalDomainError, InputError
from .atoms import AbsV, Cos, Exp, Ln, Sgn, Sin
from .normalform import as_exact


def eval_numeric(e, point, zero_tol=1e-12):
    """Evaluate at point (a name -> float mapping).

    Raises EvalDomainError for ln of a nonpositive value, sgn/abs only at
    exact zero arguments of fractional powers, even roots of negatives,
    division by zero within zero_tol, and overflow.
    """
    e = as_exact(e)
    env = {}
    for k, v in point.items():
        env[k if isinstance(k, str) else k.name] = float(v)
    try:
        return _ev(e, env, zero_tol)
    except OverflowError:
        raise EvalDomainError("numeric overflow") from None


def _ev(e, env, zt):
    if e.is_Rational:
        return e.p / e.q
    if isinstance(e, Symbol):
        try:
            return env[e.name]
        except KeyError:
            raise EvalDomainError(f"unbound symbol {e.name!r}") from None
    if e.is_Add:
        return math.fsum(_ev(a, env, zt) for a in e.args)
    if e.is_Mul:
        v = 1.0
        for a in e.args:
            v *= _ev(a, env, zt)
        return v
    if e.is_Pow:
        base, expo = e.args
        b = _ev(base, env, zt)
        if expo.is_Integer:
            n = int(expo)
            if n < 0 and abs(b) <= zt:
                raise EvalDomainError("division by zero within tolerance")
            return b**n
        if expo.is_Rational:
            p, q = expo.p, expo.q
            if p < 0 and abs(b) <= zt:
                raise EvalDomainError("division by zero within tolerance")
            if b < 0:
                if q % 2 == 0:
                    raise EvalDomainError("even root of a negative value")
                # real odd root
                return (-1.0) ** p * abs(b) ** (p / q)
            return b ** (p / q)
        ev = _ev(expo, env, zt)
        if b < 0:
            raise EvalDomainError("negative base under symbolic exponent")
        if abs(b) <= zt and ev < 0:
            raise EvalDomainError("division by zero within tolerance")
        return b**ev
    if isinstance(e, Exp):
        return math.exp(_ev(e.args[0], env, zt))
    if isinstance(e, Ln):
        v = _ev(e.args[0], env, zt)
        if v <= zt:
            raise EvalDomainError("ln of a nonpositive value")
        return math.log(v)
    if isinstance(e, Sin):
        return math.sin(_ev(e.args[0], env, zt))
    if isinstance(e, Cos):
        return math.cos(_ev(e.args[0], env, zt))
    if isinstance(e, AbsV):
        return abs(_ev(e.args[0], env, zt))
    if isinstance(e, Sgn):
        v = _ev(e.args[0], env, zt)
        return 0.0 if v == 0 else math.copysign(1.0, v)
    raise InputError(f"cannot evaluate node of type {type(e).__name__}")
