"""Three-valued zero decision.

Zero comes only from the normal form (numerator identically 0).  NonZero
comes either from structure (a nonzero polynomial in independent power
products) or from a numeric probe exceeding tolerance.  Probing never
produces Zero.
"""

import random
from enum import Enum

from sympy import Add, Symbol

from ..errors import EvalDomainError
from .normalform import NormalForm, mono_dict, normalize
from .numeric import eval_numeric


class Verdict(str, Enum):
    ZERO = "zero"
    NONZERO = "nonzero"
    UNKNOWN = "unknown"


def _structurally_nonzero(num):
    # distinct power products of symbols and prime surds are linearly
    # independent as functions on the positive orthant
    d = mono_dict(num)
    for key in d:
        for base, _e in key:
            if isinstance(base, Symbol):
                continue
            if base.is_Rational and base > 0:
                continue
            return False
    return True


def is_zero(e, probes=8, seed=1729, tol=1e-9, assume=None):
    """Verdict for e == 0 on its domain.

    assume maps symbol names to (lo, hi) sampling intervals, e.g. restrict
    t to (-3, -1) when working on the negative half-line.
    """
    nf = e if isinstance(e, NormalForm) else normalize(e)
    if nf.num == 0:
        return Verdict.ZERO
    if _structurally_nonzero(nf.num):
        return Verdict.NONZERO
    assume = assume or {}
    rnd = random.Random(seed)
    syms = sorted(nf.num.free_symbols, key=str)
    terms = Add.make_args(nf.num)
    for _ in range(probes):
        point = None
        for _attempt in range(60):
            cand = {}
            for s in syms:
                box = assume.get(s.name, (-3.0, 3.0))
                v = box[0] + (box[1] - box[0]) * rnd.random()
                cand[s.name] = v
            try:
                val = eval_numeric(nf.num, cand)
                scale = sum(abs(eval_numeric(term, cand)) for term in terms)
            except EvalDomainError:
                continue
            point = (val, scale)
            break
        if point is None:
            return Verdict.UNKNOWN
        val, scale = point
        if abs(val) > tol * max(scale, 1.0):
            return Verdict.NONZERO
    return Verdict.UNKNOWN
