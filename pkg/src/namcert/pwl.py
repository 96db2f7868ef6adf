"""Exact piecewise-linear propagation for univariate ReLU networks.

Propagates the function computed by a net over an interval as an explicit
piece list, inserting a breakpoint exactly where each rectified unit's
pre-activation crosses zero.  Serves as the exactness oracle for the
branch-and-bound verifier and as an optional fast backend for the
sufficiency check.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import UnivariateNet

MERGE_TOL = 1e-12  # coincident-crossing dedup / piece-merge threshold
DEFAULT_PIECE_CAP = 1_000_000


class PieceLimitError(RuntimeError):
    """Piece count exceeded the configured cap; the oracle fails loudly
    instead of approximating."""


@dataclass(frozen=True)
class PwlFunction:
    """Continuous piecewise-linear scalar function on [a, b].

    Piece j covers [breakpoints[j], breakpoints[j+1]] with value
    slope[j] * z + offset[j] in absolute coordinates.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    offsets: tuple[float, ...]

    def __post_init__(self):
        k = len(self.slopes)
        if len(self.offsets) != k or len(self.breakpoints) != k + 1 or k < 1:
            raise ValueError("inconsistent piece arrays")
        pts = self.breakpoints
        degenerate = k == 1 and pts[0] == pts[1]
        if not degenerate:
            for j in range(k):
                if not pts[j] < pts[j + 1]:
                    raise ValueError("breakpoints must be strictly increasing")

    @property
    def domain(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    @property
    def n_pieces(self) -> int:
        return len(self.slopes)

    def piece_index(self, z: float) -> int:
        a, b = self.domain
        if not (a <= z <= b):
            raise ValueError(f"{z} outside domain [{a}, {b}]")
        j = bisect_right(self.breakpoints, z) - 1
        return min(max(j, 0), self.n_pieces - 1)

    def __call__(self, z: float) -> float:
        j = self.piece_index(z)
        return self.slopes[j] * z + self.offsets[j]


@dataclass(frozen=True)
class Extrema:
    min: float
    argmin: float
    max: float
    argmax: float


def _relu_split(pieces, cap):
    """Insert zero crossings of every coordinate, then clamp negative
    coordinates to zero per sub-piece."""
    out = []
    for (ta, tb, slope, offset) in pieces:
        cuts = []
        for c in range(slope.shape[0]):
            s = slope[c]
            if s != 0:
                z = -offset[c] / s
                if ta + MERGE_TOL < z < tb - MERGE_TOL:
                    cuts.append(z)
        cuts.sort()
        knots = [ta]
        for z in cuts:
            if z - knots[-1] > MERGE_TOL:
                knots.append(z)
        knots.append(tb)
        for u, v in zip(knots[:-1], knots[1:]):
            mid = u + (v - u) / 2
            vals = slope * mid + offset
            keep = vals >= 0
            new_slope = np.where(keep, slope, 0.0)
            new_offset = np.where(keep, offset, 0.0)
            out.append((u, v, new_slope, new_offset))
            if len(out) > cap:
                raise PieceLimitError(f"piece count exceeded cap {cap}")
    return out


def _relu_split_rational(pieces, cap):
    out = []
    zero = Fraction(0)
    for (ta, tb, slope, offset) in pieces:
        cuts = []
        for s, o in zip(slope, offset):
            if s != zero:
                z = -o / s
                if ta < z < tb:
                    cuts.append(z)
        cuts = sorted(set(cuts))
        knots = [ta] + cuts + [tb]
        for u, v in zip(knots[:-1], knots[1:]):
            mid = (u + v) / 2
            keep = [s * mid + o >= zero for s, o in zip(slope, offset)]
            new_slope = [s if k else zero for s, k in zip(slope, keep)]
            new_offset = [o if k else zero for o, k in zip(offset, keep)]
            out.append((u, v, new_slope, new_offset))
            if len(out) > cap:
                raise PieceLimitError(f"piece count exceeded cap {cap}")
    return out


def propagate(
    net: UnivariateNet,
    interval: tuple[float, float],
    piece_cap: int = DEFAULT_PIECE_CAP,
    rational: bool = False,
) -> PwlFunction:
    """Exact piecewise-linear form of ``net`` restricted to ``interval``.

    With ``rational=True`` all breakpoint arithmetic runs in Fractions
    (exact continuity by construction) and is converted to float at the end.
    """
    a, b = float(interval[0]), float(interval[1])
    if a > b:
        raise ValueError(f"empty interval [{a}, {b}]")
    if a == b:
        from .model import forward_component

        v = forward_component(net, a)
        return PwlFunction((a, b), (0.0,), (v,))

    last = net.depth - 1
    if rational:
        pieces = [(Fraction(a), Fraction(b), [Fraction(1)], [Fraction(0)])]
        for k, (w, bias) in enumerate(net.layers):
            wf = [[Fraction(v) for v in row] for row in w]
            bf = [Fraction(v) for v in bias]
            nxt = []
            for (ta, tb, slope, offset) in pieces:
                new_slope = [sum(wr[j] * slope[j] for j in range(len(slope))) for wr in wf]
                new_offset = [sum(wr[j] * offset[j] for j in range(len(offset))) + bf[i] for i, wr in enumerate(wf)]
                nxt.append((ta, tb, new_slope, new_offset))
            pieces = nxt if k == last else _relu_split_rational(nxt, piece_cap)
        knots = [float(pieces[0][0])] + [float(p[1]) for p in pieces]
        slopes = [float(p[2][0]) for p in pieces]
        offsets = [float(p[3][0]) for p in pieces]
    else:
        pieces = [(a, b, np.array([1.0]), np.array([0.0]))]
        for k, (w, bias) in enumerate(net.layers):
            nxt = [(ta, tb, w @ slope, w @ offset + bias) for (ta, tb, slope, offset) in pieces]
            pieces = nxt if k == last else _relu_split(nxt, piece_cap)
        knots = [pieces[0][0]] + [p[1] for p in pieces]
        slopes = [float(p[2][0]) for p in pieces]
        offsets = [float(p[3][0]) for p in pieces]

    return PwlFunction(*_merge(knots, slopes, offsets))


def _merge(knots, slopes, offsets):
    """Fuse adjacent pieces that realize the same affine function."""
    m_knots = [knots[0], knots[1]]
    m_slopes = [slopes[0]]
    m_offsets = [offsets[0]]
    for j in range(1, len(slopes)):
        s, o = slopes[j], offsets[j]
        t = knots[j]
        scale = max(1.0, abs(m_slopes[-1]), abs(s))
        same_slope = abs(s - m_slopes[-1]) <= MERGE_TOL * scale
        vscale = max(1.0, abs(m_slopes[-1] * t + m_offsets[-1]))
        same_value = abs((s * t + o) - (m_slopes[-1] * t + m_offsets[-1])) <= MERGE_TOL * vscale
        if same_slope and same_value:
            m_knots[-1] = knots[j + 1]
        else:
            m_knots.append(knots[j + 1])
            m_slopes.append(s)
            m_offsets.append(o)
    return tuple(m_knots), tuple(m_slopes), tuple(m_offsets)


def exact_extrema(pwl: PwlFunction) -> Extrema:
    """Exact min/max with witnesses; linear pieces attain extrema at piece
    endpoints.  Ties break to the smallest coordinate."""
    candidates = [(pwl.breakpoints[j], pwl.slopes[j] * pwl.breakpoints[j] + pwl.offsets[j]) for j in range(pwl.n_pieces)]
    j = pwl.n_pieces - 1
    candidates.append((pwl.breakpoints[-1], pwl.slopes[j] * pwl.breakpoints[-1] + pwl.offsets[j]))
    best_min = best_max = candidates[0][1]
    arg_min = arg_max = candidates[0][0]
    for z, v in candidates[1:]:
        if v < best_min:
            best_min, arg_min = v, z
        if v > best_max:
            best_max, arg_max = v, z
    return Extrema(min=best_min, argmin=arg_min, max=best_max, argmax=arg_max)
