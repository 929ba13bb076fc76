"""Exact transition kernel of the ball-count chain, expected coalescence
times, hitting-time distributions, and the early/middle/late decomposition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .distributions import ProbabilityVector

__all__ = [
    "TransitionRow",
    "TriangularKernel",
    "transition_row",
    "uniform_row_exact",
    "tails",
    "collision_probability_bound",
    "expected_coalescence_times",
    "coalescence_time_cdf",
    "PhaseTimes",
    "phase_decomposition",
    "write_kernel_csv",
]


@dataclass(frozen=True)
class TransitionRow:
    """Next-state distribution from k balls; probs[b] = P(next count = b)."""

    k: int
    probs: np.ndarray  # length k+1, index 0 unused (always 0)

    @property
    def mean(self) -> float:
        return float(np.arange(self.k + 1) @ self.probs)

    def tail_split(self, b: int) -> tuple[float, float]:
        """(mass strictly below b, mass strictly above b)."""
        if not 1 <= b <= self.k:
            raise ValueError(f"b={b} outside [1, k={self.k}]")
        return float(self.probs[1:b].sum()), float(self.probs[b + 1 :].sum())


def tails(row: TransitionRow, b: int) -> tuple[float, float]:
    return row.tail_split(b)


_NEG_INF = float("-inf")


def _one_box_powers(
    value: float, mult: int, k: int, log_tilt: float
) -> list[tuple[np.ndarray, float]]:
    """Scaled coefficient arrays of the b-fold products of one box's series.

    A box of weight w holding e >= 1 balls contributes w^e/e!; entry b of the
    result is (coeffs, log_scale) for the choose(mult, b)-weighted b-th power
    of that series, truncated to degree k.  Coefficients carry the caller's
    exponential tilt in the ball degree (entry e scaled by exp(e*log_tilt)),
    which keeps the degree-k entry of every relevant layer representable, and
    each layer is max-normalized with a separate log scale, so nothing leaves
    the double range even at k in the thousands.
    """
    log_fact = [math.lgamma(e + 1.0) for e in range(k + 1)]
    logs = np.full(k + 1, _NEG_INF)
    lw = math.log(value) + log_tilt
    for e in range(1, k + 1):
        logs[e] = e * lw - log_fact[e]
    scale = float(logs[1:].max())
    base = np.exp(logs - scale)
    base[0] = 0.0

    out: list[tuple[np.ndarray, float]] = [(_unit(k), 0.0)]
    vec, ls = base, scale
    top = min(mult, k)
    lg_mult = math.lgamma(mult + 1.0)
    for b in range(1, top + 1):
        log_choose = lg_mult - math.lgamma(b + 1.0) - math.lgamma(mult - b + 1.0)
        out.append((vec, ls + log_choose))
        if b < top:
            vec = np.convolve(vec, base)[: k + 1]
            mx = float(vec.max())
            vec = vec / mx
            ls = ls + scale + math.log(mx)
    return out


def _unit(k: int) -> np.ndarray:
    u = np.zeros(k + 1)
    u[0] = 1.0
    return u


def _merge_groups(
    acc: list[tuple[np.ndarray, float]],
    grp: list[tuple[np.ndarray, float]],
    k: int,
) -> list[tuple[np.ndarray, float]]:
    top = min(k, len(acc) + len(grp) - 2)
    out: list[tuple[np.ndarray, float]] = []
    for b in range(top + 1):
        terms = []
        for i in range(max(0, b - len(grp) + 1), min(b, len(acc) - 1) + 1):
            va, la = acc[i]
            vg, lg = grp[b - i]
            terms.append((np.convolve(va, vg)[: k + 1], la + lg))
        ref = max(ls for _, ls in terms)
        vec = np.zeros(k + 1)
        for v, ls in terms:
            vec += v * math.exp(ls - ref)
        mx = float(vec.max())
        out.append((vec / mx, ref + math.log(mx)))
    return out


def transition_row(p: ProbabilityVector, k: int) -> TransitionRow:
    """Exact distribution of the occupied-box count after throwing k balls.

    Expands the product over boxes of the per-box occupancy series (weight
    w^e/e! for e >= 1 balls, or 1 for none) in two formal degrees: balls
    placed and boxes occupied; a final k! factor converts to probabilities.
    Boxes sharing a weight are collapsed through binomial coefficients against
    incremental powers of their common one-box series.  Ball degrees are
    tilted by k (total tilted mean degree is then k, centering every layer's
    mass on the entry that is read out) and each layer carries a separate log
    scale, so no intermediate under- or overflows occur for n and k up to the
    low thousands; entries that still underflow are below the double range as
    probabilities too.
    """
    n = p.n
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, n={n}]")
    if k == 1:
        return TransitionRow(1, np.array([0.0, 1.0]))  # absorbing, exactly
    log_tilt = math.log(k)
    acc = [(_unit(k), 0.0)]
    for value, mult in p.grouped():
        if value <= 0.0:
            continue
        acc = _merge_groups(acc, _one_box_powers(value, mult, k, log_tilt), k)
    # undo the tilt at degree k and restore the k! factor, all in log space
    log_back = math.lgamma(k + 1.0) - k * log_tilt
    probs = np.zeros(k + 1)
    for b in range(1, min(k, len(acc) - 1) + 1):
        vec, ls = acc[b]
        c = float(vec[k])
        if c > 0.0:
            probs[b] = math.exp(math.log(c) + ls + log_back)
    return TransitionRow(k, probs)


def uniform_row_exact(n: int, k: int) -> TransitionRow:
    """Uniform-weights row by surjection counting in big-integer arithmetic.

    P(next = b) = C(n,b) * b! * S(k,b) / n^k with Stirling numbers of the
    second kind; exact integer arithmetic keeps this an independent check for
    n up to a few hundred.
    """
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside [1, n={n}]")
    if n > 300:
        raise ValueError("exact integer route is kept to n <= 300")
    # S[j][b] built row by row: S(j, b) = b S(j-1, b) + S(j-1, b-1)
    stirling = [1] + [0] * k
    for j in range(1, k + 1):
        nxt = [0] * (k + 1)
        for b in range(1, j + 1):
            nxt[b] = b * stirling[b] + stirling[b - 1]
        stirling = nxt
    denom = n**k
    probs = np.zeros(k + 1)
    for b in range(1, k + 1):
        num = math.comb(n, b) * math.factorial(b) * stirling[b]
        probs[b] = float(Fraction(num, denom))
    return TransitionRow(k, probs)


def collision_probability_bound(p: ProbabilityVector, k: int) -> float:
    """Second-order Bonferroni floor on the chance of any collision.

    choose(k,2) c2 - 3 choose(k,3) c3 - choose(k,2) choose(k-2,2) c2^2 / 2.
    Two pair events overlap in one ball in three ways per ball triple, hence
    the factor 3; disjoint pairs collide independently with chance c2^2.
    May go negative for large k, which callers must tolerate.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    m = p.moments()
    return (
        math.comb(k, 2) * m.c2
        - 3.0 * math.comb(k, 3) * m.c3
        - 0.5 * math.comb(k, 2) * math.comb(k - 2, 2) * m.c2 * m.c2
    )


class TriangularKernel:
    """Lower-triangular transition kernel with lazily cached rows.

    Rows are deterministic functions of the source vector, so concurrent
    recomputation is harmless; the cache behaves as write-once per row.
    """

    def __init__(self, p: ProbabilityVector):
        self.source = p
        self._rows: dict[int, TransitionRow] = {}

    @property
    def n(self) -> int:
        return self.source.n

    def row(self, k: int) -> TransitionRow:
        row = self._rows.get(k)
        if row is None:
            row = self._rows.setdefault(k, transition_row(self.source, k))
        return row


def expected_coalescence_times(kernel: TriangularKernel) -> np.ndarray:
    """Expected rounds to reach one ball from every start count.

    Returns an array e with e[m] = expected time from m balls (e[0] unused,
    e[1] = 0), by back-substitution through the triangular kernel.
    """
    n = kernel.n
    et = np.zeros(n + 1)
    for m in range(2, n + 1):
        row = kernel.row(m).probs
        stay = float(row[m])
        if stay >= 1.0:
            raise ArithmeticError(
                f"self-loop probability is 1 at state {m}; kernel corrupted"
            )
        et[m] = (1.0 + float(row[1:m] @ et[1:m])) / (1.0 - stay)
    return et


def coalescence_time_cdf(kernel: TriangularKernel, m: int, t_max: int) -> np.ndarray:
    """P(coalescence time <= t) for t = 0..t_max, starting from m balls."""
    n = kernel.n
    if not 1 <= m <= n:
        raise ValueError(f"m={m} outside [1, n={n}]")
    dist = np.zeros(n + 1)
    dist[m] = 1.0
    cdf = np.zeros(t_max + 1)
    cdf[0] = dist[1]
    for t in range(1, t_max + 1):
        nxt = np.zeros(n + 1)
        nxt[1] = dist[1]
        for k in range(2, m + 1):
            mass = dist[k]
            if mass > 0.0:
                nxt[1 : k + 1] += mass * kernel.row(k).probs[1:]
        dist = nxt
        cdf[t] = dist[1]
    return cdf


@dataclass(frozen=True)
class PhaseTimes:
    """Expected rounds attributed to the early, middle, and late state bands."""

    early: float
    middle: float
    late: float

    @property
    def total(self) -> float:
        return self.early + self.middle + self.late


def phase_decomposition(
    kernel: TriangularKernel, k_star: float, k_1: float
) -> PhaseTimes:
    """Split the expected coalescence time from n balls across state bands.

    Expected time at state k is the visit probability (forward pass through
    the self-loop-free jump chain from state n) divided by the exit rate
    1 - P(stay).  States above k_star are early, those in (k_1, k_star] are
    middle, and those in (1, k_1] are late; the three parts add up to the
    expected coalescence time from n.
    """
    n = kernel.n
    if not 1.0 <= k_1 <= k_star <= n:
        raise ValueError(f"need 1 <= k_1 <= k_star <= n, got ({k_1}, {k_star}, {n})")
    visit = np.zeros(n + 1)
    visit[n] = 1.0
    early = middle = late = 0.0
    for k in range(n, 1, -1):
        v = visit[k]
        if v <= 0.0:
            continue
        row = kernel.row(k).probs
        stay = float(row[k])
        hold = v / (1.0 - stay)
        if k > k_star:
            early += hold
        elif k > k_1:
            middle += hold
        else:
            late += hold
        if k > 2:
            visit[1:k] += v * row[1:k] / (1.0 - stay)
    return PhaseTimes(early, middle, late)


def write_kernel_csv(kernel: TriangularKernel, path) -> None:
    """Dump all rows as k,b,prob lines for external validation."""
    with open(path, "w", newline="") as fh:
        fh.write("k,b,prob\n")
        for k in range(1, kernel.n + 1):
            probs = kernel.row(k).probs
            for b in range(1, k + 1):
                fh.write(f"{k},{b},{probs[b]:.17g}\n")
