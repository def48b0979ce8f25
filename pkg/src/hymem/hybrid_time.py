"""Hybrid time domains with memory, hybrid arcs, and memory-window operators.

A hybrid time domain tracks both continuous time t and a jump counter j.
The forward part lives in t >= 0, j >= 0 and the memory part in t <= 0,
j <= 0; both are unions of closed intervals, one per jump level, with
consecutive levels sharing their boundary time.  Arcs attach sampled vector
values to such a domain and interpolate between samples (piecewise linear by
default, cubic Hermite when derivative samples are stored).

The window operator extracts the recent history of a stored solution at a
forward point (t, j): the result is a memory arc whose depth, measured in
s + k, lies between the memory size ``delta`` and ``delta + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

#: Absolute time tolerance for membership tests at segment boundaries.
#: Event location produces boundary times inexactly.
TIME_TOL = 1e-12


class DomainError(ValueError):
    """Raised when an arc is queried outside its hybrid time domain."""

    def __init__(self, message: str, t: float | None = None, j: int | None = None):
        super().__init__(message)
        self.t = t
        self.j = j


class InsufficientHistoryError(DomainError):
    """Raised when a memory lookup reaches past all stored history."""


class HybridTime(NamedTuple):
    """A point (t, j) in hybrid time."""

    t: float
    j: int


@dataclass(frozen=True)
class HybridTimeDomain:
    """Piecewise-interval set in (time, jump counter) space.

    ``forward`` holds (lo, hi, j) triples with j = 0, 1, ... starting at
    lo = 0; ``memory`` holds (lo, hi, k) triples with k = -K+1, ..., 0 in
    chronological order, ending at hi = 0.  Consecutive triples on either
    side share their boundary time and step the jump index by exactly one.
    """

    forward: tuple[tuple[float, float, int], ...]
    memory: tuple[tuple[float, float, int], ...]

    def all_segments(self) -> tuple[tuple[float, float, int], ...]:
        return self.memory + self.forward


def validate_domain(domain: HybridTimeDomain, tol: float = TIME_TOL) -> Optional[str]:
    """Check the hybrid-time-domain invariants; return None if they hold.

    On failure returns a string naming the first violated clause.
    """
    for lo, hi, _ in domain.all_segments():
        if not (np.isfinite(lo) and np.isfinite(hi)):
            return "interval endpoints must be finite"
        if hi < lo - tol:
            return "interval endpoints must be non-decreasing"

    if domain.forward:
        lo0, _, j0 = domain.forward[0]
        if abs(lo0) > tol:
            return "forward domain must start at t = 0"
        if j0 != 0:
            return "forward domain must start at jump index 0"
        for (lo_a, hi_a, j_a), (lo_b, hi_b, j_b) in zip(domain.forward, domain.forward[1:]):
            if j_b != j_a + 1:
                return "forward jump indices must increment by exactly 1"
            if abs(lo_b - hi_a) > tol:
                return "segments must share boundary time"
        for lo, hi, j in domain.forward:
            if lo < -tol or j < 0:
                return "forward points must satisfy t >= 0 and j >= 0"

    if domain.memory:
        _, hi_last, k_last = domain.memory[-1]
        if abs(hi_last) > tol:
            return "memory domain must end at t = 0"
        if k_last != 0:
            return "memory domain must end at jump index 0"
        for (lo_a, hi_a, k_a), (lo_b, hi_b, k_b) in zip(domain.memory, domain.memory[1:]):
            if k_b != k_a + 1:
                return "memory jump indices must increment by exactly 1"
            if abs(lo_b - hi_a) > tol:
                return "segments must share boundary time"
        for lo, hi, k in domain.memory:
            if hi > tol or k > 0:
                return "memory points must satisfy t <= 0 and j <= 0"

    return None


@dataclass(frozen=True)
class ArcSegment:
    """Samples of one jump level: times (increasing) and row-wise values.

    ``derivs`` optionally stores the time derivative at each sample, enabling
    cubic Hermite interpolation.
    """

    jump_index: int
    times: np.ndarray
    values: np.ndarray
    derivs: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] != times.shape[0]:
            values = values.T
        if times.ndim != 1 or values.ndim != 2 or values.shape[0] != times.shape[0]:
            raise ValueError("segment needs times of shape (m,) and values of shape (m, n)")
        if times.shape[0] == 0:
            raise ValueError("segment must contain at least one sample")
        if np.any(np.diff(times) <= 0) and times.shape[0] > 1:
            raise ValueError("segment sample times must be strictly increasing")
        derivs = self.derivs
        if derivs is not None:
            derivs = np.atleast_2d(np.asarray(derivs, dtype=float))
            if derivs.shape != values.shape:
                raise ValueError("derivative samples must match value samples in shape")
            derivs.flags.writeable = False
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "derivs", derivs)

    @property
    def lo(self) -> float:
        return float(self.times[0])

    @property
    def hi(self) -> float:
        return float(self.times[-1])

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    def contains_time(self, t: float, tol: float = TIME_TOL) -> bool:
        return self.lo - tol <= t <= self.hi + tol

    def interpolate(self, t: float, scheme: str = "linear") -> np.ndarray:
        """Evaluate the segment at time t (must lie in [lo, hi] up to tol)."""
        times = self.times
        if t <= times[0]:
            return self.values[0].copy()
        if t >= times[-1]:
            return self.values[-1].copy()
        i = int(np.searchsorted(times, t, side="right")) - 1
        t0, t1 = times[i], times[i + 1]
        h = t1 - t0
        if h <= 0:
            return self.values[i].copy()
        w = (t - t0) / h
        y0, y1 = self.values[i], self.values[i + 1]
        if scheme == "hermite" and self.derivs is not None:
            d0, d1 = self.derivs[i], self.derivs[i + 1]
            h00 = (1 + 2 * w) * (1 - w) ** 2
            h10 = w * (1 - w) ** 2
            h01 = w * w * (3 - 2 * w)
            h11 = w * w * (w - 1)
            return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
        return (1 - w) * y0 + w * y1

    def restricted(self, lo: float, hi: float, scheme: str = "linear",
                   tol: float = TIME_TOL) -> "ArcSegment | None":
        """Slice of the segment on [lo, hi], adding interpolated boundary samples."""
        lo = max(lo, self.lo)
        hi = min(hi, self.hi)
        if hi < lo - tol:
            return None
        if hi < lo:
            hi = lo
        mask = (self.times >= lo - tol) & (self.times <= hi + tol)
        times = list(self.times[mask])
        values = list(self.values[mask])
        derivs = list(self.derivs[mask]) if self.derivs is not None else None

        def deriv_at(t: float) -> np.ndarray:
            i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0,
                            len(self.times) - 2)) if len(self.times) > 1 else 0
            if len(self.times) == 1:
                return self.derivs[0]
            t0, t1 = self.times[i], self.times[i + 1]
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            return (1 - w) * self.derivs[i] + w * self.derivs[i + 1]

        if not times or times[0] > lo + tol:
            times.insert(0, lo)
            values.insert(0, self.interpolate(lo, scheme))
            if derivs is not None:
                derivs.insert(0, deriv_at(lo))
        if times[-1] < hi - tol:
            times.append(hi)
            values.append(self.interpolate(hi, scheme))
            if derivs is not None:
                derivs.append(deriv_at(hi))
        return ArcSegment(self.jump_index, np.array(times), np.array(values),
                          np.array(derivs) if derivs is not None else None)


class HybridArc:
    """A hybrid time domain with memory plus sampled vector values.

    The memory side carries the initial data, the forward side a computed
    solution.  Evaluation is defined exactly on the domain; querying off the
    domain raises :class:`DomainError`.
    """

    def __init__(self, memory_segments: Sequence[ArcSegment] = (),
                 forward_segments: Sequence[ArcSegment] = (),
                 interpolation: str = "linear", validate: bool = True):
        self.memory_segments = tuple(memory_segments)
        self.forward_segments = tuple(forward_segments)
        if interpolation not in ("linear", "hermite"):
            raise ValueError(f"unknown interpolation scheme {interpolation!r}")
        self.interpolation = interpolation
        if not self.memory_segments and not self.forward_segments:
            raise ValueError("arc must have at least one segment")
        dims = {s.dimension for s in self.memory_segments + self.forward_segments}
        if len(dims) != 1:
            raise ValueError("all segments must share one state dimension")
        self.dimension = dims.pop()
        if validate:
            msg = validate_domain(self.domain())
            if msg is not None:
                raise ValueError(f"invalid hybrid time domain: {msg}")

    def domain(self) -> HybridTimeDomain:
        return HybridTimeDomain(
            forward=tuple((s.lo, s.hi, s.jump_index) for s in self.forward_segments),
            memory=tuple((s.lo, s.hi, s.jump_index) for s in self.memory_segments),
        )

    def _find_segment(self, t: float, j: int, tol: float) -> ArcSegment | None:
        if j > 0 or (j == 0 and t > tol):
            pools: tuple[tuple[ArcSegment, ...], ...] = (self.forward_segments,)
        elif j < 0 or (j == 0 and t < -tol):
            pools = (self.memory_segments,)
        else:
            pools = (self.memory_segments, self.forward_segments)
        for pool in pools:
            for seg in pool:
                if seg.jump_index == j and seg.contains_time(t, tol):
                    return seg
        return None

    def eval(self, t: float, j: int, tol: float = TIME_TOL) -> np.ndarray:
        """Value at hybrid time (t, j); interpolates within the j segment."""
        seg = self._find_segment(t, j, tol)
        if seg is None:
            raise DomainError(f"point (t={t}, j={j}) is not in the arc domain", t, j)
        return seg.interpolate(t, self.interpolation)

    def all_segments(self) -> tuple[ArcSegment, ...]:
        return self.memory_segments + self.forward_segments


class HybridMemoryArc(HybridArc):
    """A hybrid arc restricted to the memory side, with memory size delta.

    Membership in the class of admissible memory arcs requires every domain
    point to satisfy s + k >= -delta - 1 and some point to reach
    s + k <= -delta.  A single-point domain {(0, 0)} is accepted only when
    delta = 0.
    """

    def __init__(self, segments: Sequence[ArcSegment], delta: float,
                 interpolation: str = "linear", validate: bool = True):
        if delta < 0:
            raise ValueError("memory size delta must be nonnegative")
        self.delta = float(delta)
        super().__init__(memory_segments=segments, forward_segments=(),
                         interpolation=interpolation, validate=validate)
        if validate:
            msg = self.membership_violation()
            if msg is not None:
                raise ValueError(msg)

    def membership_violation(self, tol: float = TIME_TOL) -> Optional[str]:
        """Check the two memory-class clauses; None when both hold."""
        deepest = np.inf
        for seg in self.memory_segments:
            lo_depth = seg.lo + seg.jump_index
            if lo_depth < -self.delta - 1 - tol:
                return ("memory arc reaches s + k = "
                        f"{lo_depth:.6g} < -delta - 1 = {-self.delta - 1:.6g}")
            deepest = min(deepest, lo_depth)
        if deepest > -self.delta + tol:
            return (f"memory arc only reaches s + k = {deepest:.6g}; "
                    f"some point must satisfy s + k <= -delta = {-self.delta:.6g}")
        return None

    @property
    def head(self) -> np.ndarray:
        """Value at (0, 0)."""
        return self.memory_segments[-1].values[-1]

    @property
    def time_reach(self) -> float:
        """Oldest time covered by the arc (a nonpositive number)."""
        return self.memory_segments[0].lo

    def delayed(self, s: float, tol: float = TIME_TOL) -> np.ndarray:
        """Value at (s, k(s)) where k(s) is the maximal jump index at time s."""
        return delayed_value(self, s, tol)

    def delayed_runs(self, lo: float, hi: float, tol: float = TIME_TOL
                     ) -> list[tuple[np.ndarray, np.ndarray]]:
        """Stored samples of s -> phi(s, k(s)) on [lo, hi], split at memory jumps.

        Returns one (times, values) pair per continuous piece; boundary points
        are interpolated in.  Jump instants belong to the newer (post-jump)
        piece, matching the maximal-k rule.
        """
        if hi < lo:
            raise ValueError("need lo <= hi")
        runs: list[tuple[np.ndarray, np.ndarray]] = []
        for idx in range(len(self.memory_segments) - 1, -1, -1):
            seg = self.memory_segments[idx]
            if seg.lo > hi + tol:
                continue
            if seg.hi < lo - tol:
                break
            piece_hi = min(hi, seg.hi)
            # the newer neighbour owns the shared boundary time
            if runs:
                piece_hi = min(piece_hi, runs[-1][0][0])
            piece_lo = max(lo, seg.lo)
            cut = seg.restricted(piece_lo, piece_hi, self.interpolation, tol)
            if cut is not None:
                runs.append((cut.times, cut.values))
            if seg.lo <= lo + tol:
                break
        runs.reverse()
        if not runs:
            raise DomainError(f"no stored history on [{lo}, {hi}]", lo, None)
        return runs


def eval_arc(arc: HybridArc, t: float, j: int) -> np.ndarray:
    """Evaluate a hybrid arc at (t, j); off-domain queries raise DomainError."""
    return arc.eval(t, j)


def delayed_value(phi: HybridArc, s: float, tol: float = TIME_TOL) -> np.ndarray:
    """phi(s, k(s)) with k(s) the maximal jump index whose interval contains s."""
    for seg in reversed(phi.memory_segments):
        if seg.contains_time(s, tol):
            return seg.interpolate(s, phi.interpolation)
    raise DomainError(f"time {s} is outside the stored history", s, None)


def _depth_intervals(arc: HybridArc, t: float, j: int, tol: float
                     ) -> list[tuple[float, float, ArcSegment]]:
    """Achievable depth intervals [c, d] in delta = -(s + k) per segment."""
    out = []
    for seg in arc.all_segments():
        if seg.jump_index > j:
            continue
        u_hi = min(seg.hi, t)
        if u_hi < seg.lo - tol:
            continue
        u_hi = max(u_hi, seg.lo)
        k = seg.jump_index - j
        # s + k ranges over [seg.lo - t + k, u_hi - t + k]
        c = t + j - u_hi - seg.jump_index
        d = t + j - seg.lo - seg.jump_index
        out.append((c, d, seg))
    return out


def delta_inf(arc: HybridArc, t: float, j: int, delta: float,
              tol: float = TIME_TOL) -> float:
    """Smallest d >= delta such that some (t+s, j+k) in dom arc has s + k = -d.

    Computed exactly from the piecewise-interval domain structure: each
    backward-shifted segment contributes a closed interval of achievable
    depths.
    """
    best = np.inf
    for c, d, _ in _depth_intervals(arc, t, j, tol):
        if d < delta - tol:
            continue
        best = min(best, max(c, delta))
    if not np.isfinite(best):
        raise InsufficientHistoryError(
            f"no history at depth >= {delta} behind (t={t}, j={j})", t, j)
    return float(best)


def _merge_contiguous(segments: list[ArcSegment], tol: float) -> list[ArcSegment]:
    """Merge consecutive segments that share a jump index and boundary time.

    Needed when a window spans the stored memory/forward boundary: both
    contribute pieces of the same jump level.
    """
    merged: list[ArcSegment] = []
    for seg in segments:
        if (merged and merged[-1].jump_index == seg.jump_index
                and seg.lo <= merged[-1].hi + tol):
            prev = merged[-1]
            skip = 1 if (seg.times.shape[0] and
                         seg.times[0] <= prev.times[-1] + tol) else 0
            times = np.concatenate([prev.times, seg.times[skip:]])
            values = np.concatenate([prev.values, seg.values[skip:]])
            if prev.derivs is not None and seg.derivs is not None:
                derivs = np.concatenate([prev.derivs, seg.derivs[skip:]])
            else:
                derivs = None
            merged[-1] = ArcSegment(seg.jump_index, times, values, derivs)
        else:
            merged.append(seg)
    return merged


def memory_window(arc: HybridArc, t: float, j: int, delta: float,
                  tol: float = TIME_TOL) -> HybridMemoryArc:
    """The memory window (s, k) -> arc(t+s, j+k) clipped at depth delta_inf."""
    dinf = delta_inf(arc, t, j, delta, tol)
    segments: list[ArcSegment] = []
    for seg in arc.all_segments():
        if seg.jump_index > j:
            continue
        u_hi = min(seg.hi, t)
        if u_hi < seg.lo - tol:
            continue
        k = seg.jump_index - j
        s_lo = max(seg.lo - t, -dinf - k)
        s_hi = u_hi - t
        if s_hi < s_lo - tol:
            continue
        cut = seg.restricted(s_lo + t, s_hi + t, arc.interpolation, tol)
        if cut is None:
            continue
        segments.append(ArcSegment(k, cut.times - t, cut.values, cut.derivs))
    segments = _merge_contiguous(segments, tol)
    if not segments:
        raise InsufficientHistoryError(f"empty window at (t={t}, j={j})", t, j)
    window = HybridMemoryArc(segments, delta, arc.interpolation, validate=True)
    return window


def append_jump(phi: HybridMemoryArc, g: np.ndarray,
                tol: float = TIME_TOL) -> HybridMemoryArc:
    """Memory arc after taking a jump of value g.

    The result psi satisfies psi(0,0) = g and psi(s, k-1) = phi(s, k) for all
    retained (s, k); material strictly older than s + k = -delta - 1 is
    dropped, the boundary point is kept.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (phi.dimension,):
        raise ValueError(f"jump value must have shape ({phi.dimension},)")
    floor = -phi.delta - 1
    segments: list[ArcSegment] = []
    for seg in phi.memory_segments:
        k_new = seg.jump_index - 1
        s_cut = floor - k_new
        if seg.hi < s_cut - tol:
            continue
        if seg.lo >= s_cut - tol:
            segments.append(ArcSegment(k_new, seg.times, seg.values, seg.derivs))
        else:
            cut = seg.restricted(s_cut, seg.hi, phi.interpolation, tol)
            segments.append(ArcSegment(k_new, cut.times, cut.values, cut.derivs))
    segments.append(ArcSegment(0, np.array([0.0]), g.reshape(1, -1)))
    return HybridMemoryArc(segments, phi.delta, phi.interpolation, validate=True)


def _window_extremum(phi: HybridMemoryArc, fn: Callable[[np.ndarray], float],
                     batch: Callable[[np.ndarray], np.ndarray] | None,
                     refine_tol: float, max_levels: int) -> float:
    """max of fn over the window s + k >= -delta - 1, with grid refinement.

    Stored samples and segment endpoints seed the estimate; each refinement
    level adds interval midpoints (evaluated through the arc's interpolant)
    until successive estimates agree to refine_tol (relative).
    """
    floor = -phi.delta - 1 - TIME_TOL
    best = -np.inf
    evaluate = batch if batch is not None else (
        lambda arr: np.array([fn(row) for row in arr]))
    for seg in phi.memory_segments:
        mask = (seg.times + seg.jump_index) >= floor
        if not np.any(mask):
            continue
        times = seg.times[mask]
        vals = evaluate(seg.values[mask])
        est = float(np.max(vals))
        level_times = times
        for _ in range(max_levels):
            if level_times.shape[0] < 2:
                break
            mids = 0.5 * (level_times[:-1] + level_times[1:])
            mid_vals = evaluate(np.array([seg.interpolate(t, phi.interpolation)
                                          for t in mids]))
            new_est = max(est, float(np.max(mid_vals)) if mid_vals.size else -np.inf)
            merged = np.sort(np.concatenate([level_times, mids]))
            if abs(new_est - est) <= refine_tol * max(1.0, abs(new_est)):
                est = new_est
                break
            est = new_est
            level_times = merged
        best = max(best, est)
    if not np.isfinite(best):
        raise DomainError("window is empty above the depth floor")
    return best


def sup_norm_w(phi: HybridMemoryArc, dist_w: Callable[[np.ndarray], float],
               batch: Callable[[np.ndarray], np.ndarray] | None = None,
               refine_tol: float = 1e-9, max_levels: int = 6) -> float:
    """sup of |phi(s,k)|_W over the window s + k >= -delta - 1."""
    return _window_extremum(phi, dist_w, batch, refine_tol, max_levels)


def vbar(phi: HybridMemoryArc, v: Callable[[np.ndarray], float],
         batch: Callable[[np.ndarray], np.ndarray] | None = None,
         refine_tol: float = 1e-9, max_levels: int = 6) -> float:
    """max of V over the window s + k >= -delta - 1 (samples plus refinement)."""
    return _window_extremum(phi, v, batch, refine_tol, max_levels)


def delayed_sq_integral(phi: HybridMemoryArc, lo: float, hi: float,
                        components: slice | None = None) -> float:
    """Integral over [lo, hi] of |phi(s, k(s))|^2 ds, exact for the stored
    piecewise-linear interpolant (per-interval Simpson).  ``components``
    restricts the squared norm to a slice of the state vector."""
    total = 0.0
    for times, values in phi.delayed_runs(lo, hi):
        if times.shape[0] < 2:
            continue
        if components is not None:
            values = values[:, components]
        sq = np.einsum("ij,ij->i", values, values)
        mid = 0.5 * (values[:-1] + values[1:])
        sq_mid = np.einsum("ij,ij->i", mid, mid)
        h = np.diff(times)
        total += float(np.sum(h / 6.0 * (sq[:-1] + 4.0 * sq_mid + sq[1:])))
    return total


def constant_memory_arc(value: np.ndarray, delta: float,
                        depth: float | None = None,
                        grid_step: float | None = None) -> HybridMemoryArc:
    """Single-segment memory arc holding a constant value.

    The segment spans [-depth, 0] with depth defaulting to max(delta, epsilon)
    so the arc is admissible for memory size delta.
    """
    value = np.atleast_1d(np.asarray(value, dtype=float))
    if depth is None:
        depth = max(delta, 0.0)
    if depth < delta:
        raise ValueError("depth must reach the memory size delta")
    if depth == 0.0:
        return HybridMemoryArc(
            [ArcSegment(0, np.array([0.0]), value.reshape(1, -1))], delta)
    if grid_step is None:
        grid_step = depth / 8.0
    m = max(2, int(np.ceil(depth / grid_step)) + 1)
    times = np.linspace(-depth, 0.0, m)
    values = np.tile(value, (m, 1))
    return HybridMemoryArc([ArcSegment(0, times, values)], delta)


def memory_arc_from_function(fn: Callable[[float], np.ndarray], delta: float,
                             depth: float | None = None,
                             grid_step: float | None = None) -> HybridMemoryArc:
    """Single-segment memory arc sampling fn(s) on a uniform grid of [-depth, 0]."""
    if depth is None:
        depth = max(delta, 1e-3)
    if depth < delta:
        raise ValueError("depth must reach the memory size delta")
    if grid_step is None:
        grid_step = depth / 50.0
    m = max(2, int(np.ceil(depth / grid_step)) + 1)
    times = np.linspace(-depth, 0.0, m)
    values = np.array([np.atleast_1d(np.asarray(fn(float(s)), dtype=float))
                       for s in times])
    return HybridMemoryArc([ArcSegment(0, times, values)], delta)


# ---------------------------------------------------------------------------
# CSV serialization: rows `t, j, v_1, ..., v_n`, sorted lexicographically by
# (j, t); the memory side uses t <= 0, j <= 0.  Round-trips are bit-exact on
# sample points (derivative samples are not serialized).
# ---------------------------------------------------------------------------

def arc_to_csv(arc: HybridArc) -> str:
    rows = []
    for side, segs in (("m", arc.memory_segments), ("f", arc.forward_segments)):
        for seg in segs:
            for t, v in zip(seg.times, seg.values):
                rows.append((seg.jump_index, float(t), side, v))
    rows.sort(key=lambda r: (r[0], r[1], 0 if r[2] == "m" else 1))
    lines = []
    for j, t, _, v in rows:
        lines.append(",".join([repr(t), str(j)] + [repr(float(x)) for x in v]))
    return "\n".join(lines) + "\n"


def write_arc_csv(arc: HybridArc, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(arc_to_csv(arc))


def arc_from_csv(text: str, delta: float | None = None,
                 interpolation: str = "linear") -> HybridArc:
    """Parse the CSV produced by :func:`arc_to_csv`.

    When both sides are present the shared sample at (0, 0) must appear twice
    (once per side).  If ``delta`` is given and the forward side is empty, a
    :class:`HybridMemoryArc` is returned.
    """
    rows: list[tuple[float, int, np.ndarray]] = []
    for line in text.strip().splitlines():
        parts = line.strip().split(",")
        if len(parts) < 3:
            raise ValueError(f"CSV row needs t, j and at least one component: {line!r}")
        rows.append((float(parts[0]), int(parts[1]),
                     np.array([float(x) for x in parts[2:]])))
    if not rows:
        raise ValueError("empty CSV")

    mem_rows = [r for r in rows if r[1] < 0 or (r[1] == 0 and r[0] < -TIME_TOL)]
    fwd_rows = [r for r in rows if r[1] > 0 or (r[1] == 0 and r[0] > TIME_TOL)]
    zero_rows = [r for r in rows if r[1] == 0 and abs(r[0]) <= TIME_TOL]

    has_memory = bool(mem_rows) or (bool(zero_rows) and not fwd_rows)
    has_forward = bool(fwd_rows)
    if has_memory and has_forward:
        if len(zero_rows) < 2:
            raise ValueError("arc with both sides must store the shared (0, 0) "
                             "sample once per side")
        mem_rows.append(zero_rows[0])
        fwd_rows = zero_rows[1:2] + fwd_rows
    elif has_memory:
        if not zero_rows:
            raise ValueError("memory side must end at (0, 0)")
        mem_rows.extend(zero_rows[:1])
    else:
        fwd_rows = zero_rows[:1] + fwd_rows

    def build(side_rows, is_memory):
        groups: dict[int, list[tuple[float, np.ndarray]]] = {}
        for t, j, v in side_rows:
            groups.setdefault(j, []).append((t, v))
        segs = []
        for j in sorted(groups):
            pts = sorted(groups[j], key=lambda p: p[0])
            times = np.array([p[0] for p in pts])
            values = np.array([p[1] for p in pts])
            segs.append(ArcSegment(j, times, values))
        return segs

    mem_segs = build(mem_rows, True) if mem_rows else []
    fwd_segs = build(fwd_rows, False) if fwd_rows else []
    if delta is not None and not fwd_segs:
        return HybridMemoryArc(mem_segs, delta, interpolation)
    return HybridArc(mem_segs, fwd_segs, interpolation)
