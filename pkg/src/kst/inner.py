"""The inner function: exact values on base-gamma grids, plus a
certified continuum evaluation.

Grid values are defined by a three-case recursion on the digits of a
point d = sum_l i_l * gamma**(-l). Level-1 points map to themselves,
appending a digit below gamma-1 adds i_k * gamma**(-beta_n(k)), and a
trailing digit of gamma-1 averages the two neighbouring values. The
averaging case introduces factors of two, so grid values are exact
rationals whose denominators are products of powers of gamma and 2;
they are memoized and never rounded.

Continuum evaluation truncates the base-gamma expansion of x at a
requested depth and certifies the truncation with the Hoelder bound
nu * gamma**(-alpha * k). The function extends to [1, 2) by
psi(x) = psi(x - 1) + 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BudgetError, DomainError
from .params import KstParams, beta

HOLDER_PAIR_BUDGET = 10**4   # max gamma**k for pairwise audits
PLOT_ROW_BUDGET = 10**6      # max gamma**k for grid sweeps


@dataclass(frozen=True)
class BaseGammaPoint:
    """A grid point of D_k given by its base-gamma digits i_1..i_k.

    Two points are equal iff their values agree after zero-padding to a
    common depth, so equality and hashing go through the canonical form
    with trailing zeros stripped.
    """

    digits: tuple[int, ...]
    gamma: int

    def __post_init__(self):
        if len(self.digits) < 1:
            raise DomainError("a grid point needs at least one digit")
        if any(not (0 <= i < self.gamma) for i in self.digits):
            raise DomainError(f"digits must lie in [0, {self.gamma - 1}]")

    @property
    def k(self) -> int:
        return len(self.digits)

    def canonical(self) -> tuple[int, ...]:
        d = self.digits
        end = len(d)
        while end > 1 and d[end - 1] == 0:
            end -= 1
        return d[:end]

    def value(self) -> Fraction:
        g = self.gamma
        acc = Fraction(0)
        for pos, digit in enumerate(self.digits, start=1):
            acc += Fraction(digit, g**pos)
        return acc

    def __eq__(self, other):
        if not isinstance(other, BaseGammaPoint):
            return NotImplemented
        return self.gamma == other.gamma and self.canonical() == other.canonical()

    def __hash__(self):
        return hash((self.gamma, self.canonical()))

    @staticmethod
    def from_fraction(q: Fraction, gamma: int, max_depth: int = 64) -> "BaseGammaPoint":
        """Digits of an exactly representable q in [0, 1)."""
        if not (0 <= q < 1):
            raise DomainError(f"grid points live in [0, 1), got {q}")
        digits = []
        rem = q
        for _ in range(max_depth):
            rem *= gamma
            d = int(rem)  # floor; rem >= 0
            digits.append(d)
            rem -= d
            if rem == 0:
                return BaseGammaPoint(tuple(digits), gamma)
        raise DomainError(f"{q} has no base-{gamma} expansion of depth <= {max_depth}")


@dataclass(frozen=True)
class PsiValue:
    """Continuum evaluation result with its certified truncation bound."""

    value_exact: Fraction
    err_bound: float
    k_trunc: int

    @property
    def value(self) -> float:
        return float(self.value_exact)


def _decimal_fraction(x) -> Fraction:
    """Exact rational reading of an input coordinate.

    Floats are read through their shortest decimal representation, so a
    literal like 0.3 means 3/10 rather than its binary neighbour. Exact
    types pass through unchanged.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(repr(float(x)))


class InnerEvaluator:
    """Memoized exact evaluation of the inner function.

    The memo behaves as a cache only: psi_grid is a pure function of
    (params, point). Concurrent readers should pre-warm the table for
    the grids they need and then share it read-only.
    """

    def __init__(self, params: KstParams):
        self.params = params
        self._memo: dict[tuple[int, ...], Fraction] = {}
        self._trunc_cache: dict[tuple[int, int, int], Fraction] = {}

    # -- exact values on grids -------------------------------------------

    def psi_grid(self, d) -> Fraction:
        """psi_k(d) for a grid point d of any depth, exact.

        Accepts a BaseGammaPoint, a digit tuple, or an exactly
        representable Fraction in [0, 1).
        """
        if isinstance(d, BaseGammaPoint):
            if d.gamma != self.params.gamma:
                raise DomainError("grid point base does not match params")
            key = d.canonical()
        elif isinstance(d, tuple):
            key = BaseGammaPoint(d, self.params.gamma).canonical()
        else:
            key = BaseGammaPoint.from_fraction(
                Fraction(d), self.params.gamma
            ).canonical()
        return self._psi(key)

    def _psi(self, t: tuple[int, ...]) -> Fraction:
        memo = self._memo
        got = memo.get(t)
        if got is not None:
            return got
        g = self.params.gamma
        n = self.params.n
        if len(t) == 1:
            val = Fraction(t[0], g)
        else:
            k = len(t)
            i_k = t[-1]
            if i_k < g - 1:
                prefix = BaseGammaPoint(t[:-1], g).canonical()
                val = self._psi(prefix) + i_k * Fraction(1, g ** beta(n, k))
            else:
                # Averaging case. The right neighbour is the raw length
                # (k-1) prefix plus one ulp at depth k-1; the carry can
                # reach 1.0 exactly, where the [1,2) shift rule pins the
                # value to 1.
                left = self._psi(BaseGammaPoint(t[:-1] + (g - 2,), g).canonical())
                carried = _add_ulp(t[:-1], g)
                right = Fraction(1) if carried is None else self._psi(carried)
                val = (left + right) / 2
        memo[t] = val
        return val

    def psi_exact_extended(self, q: Fraction) -> Fraction:
        """Exact psi at a gamma-adic rational q in [0, 2)."""
        if not (0 <= q < 2):
            raise DomainError(f"psi domain is [0, 2), got {q}")
        if q == 1:
            return Fraction(1)
        if q > 1:
            return 1 + self.psi_grid(q - 1)
        return self.psi_grid(q)

    # -- continuum evaluation ---------------------------------------------

    def truncate_digits(self, q: Fraction, k_trunc: int) -> tuple[int, ...]:
        """First k_trunc base-gamma digits of q in [0, 1)."""
        g = self.params.gamma
        digits = []
        rem = q
        for _ in range(k_trunc):
            rem *= g
            d = int(rem)
            digits.append(d)
            rem -= d
        return tuple(digits)

    def psi(self, x, k_trunc: int) -> PsiValue:
        """Truncated evaluation of psi at x in [0, 2) with a certificate.

        The truncation moves x by at most gamma**(-k_trunc), so the
        Hoelder property bounds the error by nu * gamma**(-alpha*k).
        """
        if k_trunc < 1:
            raise DomainError("k_trunc must be >= 1")
        q = _decimal_fraction(x)
        if not (0 <= q < 2):
            raise DomainError(f"psi domain is [0, 2), got {x}")
        shift = 0
        if q >= 1:
            shift = 1
            q -= 1
        digits = self.truncate_digits(q, k_trunc)
        exact = self._psi(BaseGammaPoint(digits, self.params.gamma).canonical()) + shift
        p = self.params
        err = p.nu * p.gamma ** (-p.alpha * k_trunc)
        return PsiValue(value_exact=exact, err_bound=err, k_trunc=k_trunc)

    def psi_trunc_float(self, q: Fraction, k_trunc: int) -> float:
        """Float of the depth-k truncated value at an exact q in [0, 2).

        Hot path for decomposition sweeps; cached per (q, depth).
        """
        key = (q.numerator, q.denominator, k_trunc)
        got = self._trunc_cache.get(key)
        if got is None:
            shift = 0
            if q >= 1:
                shift = 1
                q = q - 1
            digits = self.truncate_digits(q, k_trunc)
            got = self._psi(BaseGammaPoint(digits, self.params.gamma).canonical())
            got += shift
            self._trunc_cache[key] = got
        return float(got)

    def psi_table(self, k: int) -> np.ndarray:
        """Float values of psi on all of D_k, indexed by i of i*gamma**-k."""
        key = ("table", k)
        got = self._trunc_cache.get(key)
        if got is None:
            g = self.params.gamma
            if g**k > PLOT_ROW_BUDGET:
                raise BudgetError(f"gamma**k = {g**k} exceeds the table budget")
            got = np.asarray(
                [float(self.psi_grid(Fraction(i, g**k))) for i in range(g**k)]
            )
            self._trunc_cache[key] = got
        return got

    def psi_trunc_vector(self, u: np.ndarray, k_trunc: int) -> np.ndarray:
        """Vectorized depth-k truncated values for u in [0, 2).

        The cell index is floor(u * gamma**k + 1e-6): the small upward
        nudge makes grid-aligned floats land in their own cell, and the
        index rule carries across the integer boundary, where the value
        continues as 1 + psi(u - 1). All floating-point evaluation paths
        (audits, measurements, network knots) share this exact rule so
        they can never straddle a cell boundary differently.
        """
        g = self.params.gamma
        u = np.asarray(u, dtype=float)
        scale = g**k_trunc
        idx = np.floor(u * scale + 1e-6).astype(np.int64)
        idx = np.clip(idx, 0, 2 * scale - 1)
        table = self.psi_table(k_trunc)
        return (idx // scale) + table[idx % scale]

    # -- audits and sweeps --------------------------------------------------

    def holder_audit(self, k: int) -> dict:
        """Worst Hoelder ratio over all pairs in D_k united with D_k + 1.

        Returns max over x != y of |psi(x)-psi(y)| / (nu*|x-y|**alpha),
        which the construction promises is at most 1, plus the witness
        pair attaining it.
        """
        p = self.params
        if p.gamma**k > HOLDER_PAIR_BUDGET:
            raise BudgetError(
                f"gamma**k = {p.gamma**k} exceeds the pair budget {HOLDER_PAIR_BUDGET}"
            )
        base = self._grid_values(k)
        xs = [float(d) for d, _ in base] + [float(d) + 1.0 for d, _ in base]
        ys = [float(v) for _, v in base] + [float(v) + 1.0 for _, v in base]
        x = np.asarray(xs)
        y = np.asarray(ys)
        dx = np.abs(x[:, None] - x[None, :])
        dy = np.abs(y[:, None] - y[None, :])
        np.fill_diagonal(dx, 1.0)  # excluded pairs; dy diagonal is 0
        ratio = dy / (p.nu * dx**p.alpha)
        idx = int(np.argmax(ratio))
        i, j = divmod(idx, ratio.shape[1])
        return {
            "max_ratio": float(ratio[i, j]),
            "witness": (x[i], x[j]),
            "points": len(xs),
        }

    def psi_plot_data(self, k: int) -> list[tuple[Fraction, Fraction]]:
        """(d, psi(d)) for every d in D_k, ascending in d."""
        p = self.params
        if k < 1:
            raise DomainError("k must be >= 1")
        if p.gamma**k > PLOT_ROW_BUDGET:
            raise BudgetError(
                f"gamma**k = {p.gamma**k} exceeds the row budget {PLOT_ROW_BUDGET}"
            )
        return self._grid_values(k)

    def _grid_values(self, k: int) -> list[tuple[Fraction, Fraction]]:
        g = self.params.gamma
        out = []
        for i in range(g**k):
            d = Fraction(i, g**k)
            out.append((d, self.psi_grid(d)))
        return out


def _add_ulp(prefix: tuple[int, ...], gamma: int) -> tuple[int, ...] | None:
    """Digits of prefix + gamma**(-len(prefix)), or None on carry to 1."""
    digits = list(prefix)
    pos = len(digits) - 1
    while pos >= 0:
        if digits[pos] < gamma - 1:
            digits[pos] += 1
            return BaseGammaPoint(tuple(digits), gamma).canonical()
        digits[pos] = 0
        pos -= 1
    return None
