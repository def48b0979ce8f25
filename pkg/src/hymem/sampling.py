"""Random memory-arc generation for certificate falsification.

Two modes:

* ``reachable``: arcs are memory windows harvested from simulations of the
  system itself, started from random constant histories.  Flow-set windows
  come from random accepted sample points, jump-set windows from the
  pre-jump instants, and post-jump arcs from appending the selected jump
  value.  These arcs are dynamically consistent, which matters for
  certificates whose jump condition relies on the delayed state tracking the
  flow (the sampled-data example does).
* ``cover``: arcs are synthesized directly: clock components follow the
  clock structure (the guard constrains them), all other components are
  random piecewise-linear splines that may change discontinuously across
  memory jumps.  This is the adversarial surrogate for quantifying over the
  whole flow/jump set.

All randomness derives from the sampler seed through named seed sequences,
so sampling is deterministic and independent of call order.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .hybrid_time import (ArcSegment, HybridMemoryArc, append_jump,
                          constant_memory_arc, memory_window)
from .solver import SimOptions, Trajectory, simulate
from .system import SystemSpec

_REGIONS = ("C", "D", "Gplus")


@dataclass(frozen=True)
class ArcSample:
    arc: HybridMemoryArc
    region: str
    index: int
    origin: str


@dataclass
class ArcSampler:
    """Deterministic generator of memory arcs in a designated region."""

    spec: SystemSpec
    seed: int = 0
    mode: str = "reachable"  # "reachable" | "cover" | "both"
    amplitude: tuple[float, float] = (0.1, 2.0)
    segment_counts: tuple[int, ...] = (0, 1, 2, 3)
    step: float | None = None
    guard_tol: float = 1e-7

    def __post_init__(self):
        if self.mode not in ("reachable", "cover", "both"):
            raise ValueError("mode must be 'reachable', 'cover' or 'both'")
        self._pool_trajs: list[Trajectory] = []
        self._pool_jump_windows: list[tuple[HybridMemoryArc, str]] = []
        self._pool_flow_windows: list[tuple[HybridMemoryArc, str]] = []

    # -- public API ---------------------------------------------------------

    def region_supported(self, region: str) -> bool:
        if region not in _REGIONS:
            raise ValueError(f"unknown region {region!r}")
        if region in ("D", "Gplus"):
            return self.spec.meta.get("period") is not None
        return True

    def sample(self, region: str, count: int) -> list[ArcSample]:
        """Deterministic list of arcs lying in the requested region."""
        if region not in _REGIONS:
            raise ValueError(f"unknown region {region!r}")
        if count <= 0 or not self.region_supported(region):
            return []
        if self.mode == "reachable":
            plan = [("reachable", i) for i in range(count)]
        elif self.mode == "cover":
            plan = [("cover", i) for i in range(count)]
        else:
            half = (count + 1) // 2
            plan = [("reachable", i) for i in range(half)]
            plan += [("cover", i) for i in range(count - half)]

        out: list[ArcSample] = []
        n_reach = sum(1 for kind, _ in plan if kind == "reachable")
        reach_arcs = self._reachable(region, n_reach) if n_reach else []
        r_iter = iter(reach_arcs)
        for idx, (kind, sub) in enumerate(plan):
            if kind == "reachable":
                arc, origin = next(r_iter)
            else:
                arc, origin = self._cover_arc(region, sub)
            self._check_guard(arc, region)
            out.append(ArcSample(arc=arc, region=region, index=idx, origin=origin))
        return out

    # -- internals ----------------------------------------------------------

    def _rng(self, *key) -> np.random.Generator:
        # stable across processes: strings hash via crc32, ints pass through
        words = tuple(zlib.crc32(k.encode()) if isinstance(k, str) else int(k)
                      for k in key)
        ss = np.random.SeedSequence((self.seed,) + words)
        return np.random.Generator(np.random.Philox(ss))

    def _check_guard(self, arc: HybridMemoryArc, region: str) -> None:
        if region == "C":
            g = self.spec.flow_guard(arc)
        elif region == "D":
            g = self.spec.jump_guard(arc)
        else:
            return  # post-jump arcs are in C u D by construction of the clock
        if g < -self.guard_tol:
            raise RuntimeError(f"sampler emitted an arc violating its {region} "
                               f"guard (value {g:.3e})")

    def _sim_options(self) -> SimOptions:
        period = self.spec.meta.get("period")
        depth = self.spec.memory_size + 1.0
        if self.step is not None:
            step = self.step
        elif period is not None:
            step = min(period / 40.0, depth / 50.0)
        else:
            step = depth / 100.0
        horizon = 1.1 * depth + (2.5 * period if period else 0.5 * depth)
        return SimOptions(t_max=horizon, j_max=10 ** 6, step=step)

    def _random_history(self, rng: np.random.Generator):
        n = self.spec.dimension
        clock = self.spec.meta.get("clock_index")
        period = self.spec.meta.get("period")
        lo, hi = self.amplitude
        amp = rng.uniform(lo, hi)
        v = amp * rng.uniform(-1.0, 1.0, size=n)
        if clock is not None:
            v[clock] = rng.uniform(0.0, 0.95 * period)
        return constant_memory_arc(v, self.spec.memory_size,
                                   depth=self.spec.memory_size + 0.5,
                                   grid_step=self._sim_options().step * 4)

    def _extend_pool(self, traj_index: int) -> None:
        rng = self._rng("reachable-traj", traj_index)
        opts = self._sim_options()
        init = self._random_history(rng)
        traj = simulate(self.spec, init, opts)
        self._pool_trajs.append(traj)
        tag = f"reachable:traj{traj_index}"
        delta = self.spec.memory_size
        for nj, (t, j) in enumerate(traj.jumps):
            w = memory_window(traj.arc, t, j, delta)
            self._pool_jump_windows.append((w, f"{tag}:jump{nj}"))
        # flow windows at deterministic pseudo-random accepted points
        pts = [(t, j) for (t, j, _) in traj.sample_points()]
        if pts:
            clock = self.spec.meta.get("clock_index")
            period = self.spec.meta.get("period")
            order = rng.permutation(len(pts))
            taken = 0
            for i in order:
                t, j = pts[int(i)]
                w = memory_window(traj.arc, t, j, delta)
                if clock is not None:
                    tau = float(w.head[clock])
                    if not (0.0 <= tau <= 0.9 * period):
                        continue
                if self.spec.flow_guard(w) < 0.0:
                    continue
                self._pool_flow_windows.append((w, f"{tag}:flow@({t:.6g},{j})"))
                taken += 1
                if taken >= 8:
                    break

    def _reachable(self, region: str, count: int) -> list[tuple[HybridMemoryArc, str]]:
        pool = self._pool_jump_windows if region in ("D", "Gplus") \
            else self._pool_flow_windows
        traj_index = len(self._pool_trajs)
        while len(pool) < count:
            before = len(pool)
            self._extend_pool(traj_index)
            traj_index += 1
            if len(pool) == before and traj_index > 50 * (count + 1):
                raise RuntimeError(
                    f"reachable sampler cannot populate region {region!r}")
        arcs = pool[:count]
        if region == "Gplus":
            out = []
            for i, (w, origin) in enumerate(arcs):
                gs = self.spec.jump_selections(w)
                g = gs[i % len(gs)]
                out.append((append_jump(w, g), origin + ":+g"))
            return out
        return list(arcs)

    def _cover_arc(self, region: str, index: int) -> tuple[HybridMemoryArc, str]:
        rng = self._rng("cover", region, index)
        n = self.spec.dimension
        clock = self.spec.meta.get("clock_index")
        period = self.spec.meta.get("period")
        delta = self.spec.memory_size
        lo, hi = self.amplitude
        amp = rng.uniform(lo, hi)
        depth_total = delta + rng.uniform(0.05, 0.95)  # target depth in s + k

        if clock is not None:
            if region in ("D", "Gplus"):
                tau0 = period
            else:
                tau0 = rng.uniform(0.0, 0.9 * period)
            # Clock-consistent histories reach depths in unit-gapped intervals
            # (one per backward jump level); sample the cut depth from the
            # intersection of those intervals with [delta, delta + 1].
            levels = [(0, 0.0, tau0)]
            while levels[-1][1] <= delta + 1.0:
                i, top, bot = levels[-1]
                levels.append((i + 1, bot + 1.0, bot + 1.0 + period))
            cands = []
            for i, top, bot in levels:
                d_lo, d_hi = max(top, delta), min(bot, delta + 1.0)
                if d_hi >= d_lo - 1e-12:
                    cands.append((i, d_lo, max(d_hi, d_lo)))
            widths = np.array([hi_ - lo_ + 1e-6 for _, lo_, hi_ in cands])
            pick = int(rng.choice(len(cands), p=widths / widths.sum()))
            k_count, d_lo, d_hi = cands[pick]
            depth_cut = rng.uniform(d_lo, d_hi)
            bounds = [0.0] + [-tau0 - m * period for m in range(k_count)]
            bounds.append(-(depth_cut - k_count))
        else:
            max_jumps = min(max(self.segment_counts), int(np.floor(depth_total)))
            counts = [c for c in self.segment_counts if c <= max_jumps] or [0]
            k_count = int(rng.choice(counts))
            time_depth = depth_total - k_count
            cuts = np.sort(rng.uniform(-time_depth, 0.0, size=k_count))[::-1]
            bounds = [0.0] + [float(c) for c in cuts] + [-time_depth]
            tau0 = None

        segments = []
        grid = max((bounds[0] - bounds[-1]) / 60.0, 1e-4)
        for i in range(len(bounds) - 1):
            s_hi, s_lo = bounds[i], bounds[i + 1]
            k = -i
            m = max(2, int(np.ceil((s_hi - s_lo) / grid)) + 1)
            times = np.linspace(s_lo, s_hi, m)
            knots = np.sort(np.concatenate([[s_lo, s_hi],
                                            rng.uniform(s_lo, s_hi, size=3)]))
            vals = np.empty((m, n))
            for comp in range(n):
                if comp == clock:
                    continue
                kv = amp * rng.uniform(-1.0, 1.0, size=len(knots))
                vals[:, comp] = np.interp(times, knots, kv)
            if clock is not None:
                # slope-1 clock consistent with the jump placement
                if i == 0:
                    tau_hi = tau0
                else:
                    tau_hi = period
                vals[:, clock] = tau_hi + (times - s_hi)
            if s_hi == s_lo:
                times, vals = times[:1], vals[:1]
            segments.append(ArcSegment(k, times, vals))
        segments.reverse()
        arc = HybridMemoryArc(segments, delta)
        origin = f"cover:{region}{index}"
        if region == "Gplus":
            gs = self.spec.jump_selections(arc)
            return append_jump(arc, gs[index % len(gs)]), origin + ":+g"
        return arc, origin
