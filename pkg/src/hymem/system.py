"""Hybrid systems with memory: guard functions plus selection maps.

A system is described by signed guard functions (>= 0 means membership in
the flow set C or jump set D) and selection maps evaluated on memory
windows.  Windows are duck-typed: anything exposing ``head`` (the value at
(0, 0)), ``delayed(s)`` (the value at (s, k(s))), and ``delta`` works, which
lets the solver pass lightweight views instead of materialized arcs.

Builders are provided for the two stock examples (a sampled-data loop with
delayed measurements and a scalar delay system with periodic resets) and for
a general linear-delay family that subsumes both.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hybrid_time import HybridMemoryArc, constant_memory_arc, memory_arc_from_function


class ConfigError(ValueError):
    """A system configuration failed validation; the message names the field."""


@dataclass(frozen=True)
class TargetSet:
    """Point-to-set distance |z|_W; zero exactly on W."""

    dist: Callable[[np.ndarray], float]
    dist_batch: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"

    def __call__(self, z: np.ndarray) -> float:
        return self.dist(z)

    def batch(self, arr: np.ndarray) -> np.ndarray:
        if self.dist_batch is not None:
            return self.dist_batch(arr)
        return np.array([self.dist(row) for row in arr])


@dataclass(frozen=True)
class SystemSpec:
    """Flow/jump sets as signed guards plus selection maps, and memory size.

    ``flow_selection`` must be defined whenever ``flow_guard`` >= 0 and
    ``jump_selections`` must be nonempty whenever ``jump_guard`` >= 0.
    ``flow_candidates`` lists the flow selections a checker should try; it
    defaults to the single simulation selection.
    """

    dimension: int
    memory_size: float
    flow_guard: Callable
    jump_guard: Callable
    flow_selection: Callable
    jump_selections: Callable
    jump_choice: Callable = None  # type: ignore[assignment]
    flow_candidates: Callable = None  # type: ignore[assignment]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.jump_choice is None:
            object.__setattr__(self, "jump_choice", lambda gs: gs[0])
        if self.flow_candidates is None:
            object.__setattr__(self, "flow_candidates",
                               lambda w: [self.flow_selection(w)])


def origin_target(dimension: int) -> TargetSet:
    return TargetSet(
        dist=lambda z: float(np.linalg.norm(z)),
        dist_batch=lambda arr: np.linalg.norm(arr, axis=1),
        name="origin",
    )


def origin_times_clock_target(dimension: int, period: float) -> TargetSet:
    """Distance to {0}^(dimension-1) x [0, period]; the clock is the last
    component and contributes only when outside its interval."""
    d = dimension - 1

    def dist(z: np.ndarray) -> float:
        tau = z[d]
        excess = max(0.0, -tau, tau - period)
        return float(np.sqrt(np.dot(z[:d], z[:d]) + excess * excess))

    def dist_batch(arr: np.ndarray) -> np.ndarray:
        tau = arr[:, d]
        excess = np.maximum(0.0, np.maximum(-tau, tau - period))
        return np.sqrt(np.einsum("ij,ij->i", arr[:, :d], arr[:, :d]) + excess ** 2)

    return TargetSet(dist=dist, dist_batch=dist_batch, name="origin_times_clock")


@dataclass(frozen=True)
class Example1Params:
    """Sampled-data loop: plant matrix A, input matrix B, gain K, sampling
    period delta, measurement delay r (must satisfy r < delta)."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    delta: float = 0.2
    r: float = 0.01
    sigma: float | None = None  # tilt exponent; derived by the certificate builder

    def __post_init__(self):
        object.__setattr__(self, "A", np.atleast_2d(np.asarray(self.A, dtype=float)))
        object.__setattr__(self, "B", np.atleast_2d(np.asarray(self.B, dtype=float)))
        object.__setattr__(self, "K", np.atleast_2d(np.asarray(self.K, dtype=float)))
        nz = self.A.shape[0]
        if self.A.shape != (nz, nz):
            raise ConfigError("A must be square")
        if self.B.shape[0] != nz:
            raise ConfigError("B must have as many rows as A")
        m = self.B.shape[1]
        if self.K.shape != (m, nz):
            raise ConfigError(f"K must have shape ({m}, {nz})")
        if not (np.isfinite(self.delta) and np.isfinite(self.r)):
            raise ConfigError("delta and r must be finite")
        if self.r <= 0 or self.delta <= 0:
            raise ConfigError("delta and r must be positive")
        if self.r >= self.delta:
            raise ConfigError("the measurement delay r must be smaller than the "
                              "sampling period delta")

    @classmethod
    def paper(cls) -> "Example1Params":
        return cls(A=[[4.0, 1.0], [5.0, -3.0]], B=[[-3.0], [-2.0]],
                   K=[[4.0, -2.0]], delta=0.2, r=0.01)

    @property
    def nz(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class Example2Params:
    """Scalar delay system dx = a x + b x(t - r) with reset x+ = rho x every
    delta units of time; sigma and mu parameterize the stock functional."""

    a: float
    b: float
    rho: float
    r: float
    delta: float
    sigma: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.r <= 0:
            raise ConfigError("delay r must be positive")
        if self.delta <= 0:
            raise ConfigError("reset period delta must be positive")
        if self.mu < 0:
            raise ConfigError("mu must be nonnegative")

    @classmethod
    def case1(cls) -> "Example2Params":
        """Stable flow, expanding resets; feasible with a long reset period."""
        return cls(a=-1.0, b=0.25, rho=1.2, r=0.25, delta=1.0, sigma=-0.5, mu=0.5)

    @classmethod
    def case2(cls) -> "Example2Params":
        """Unstable flow, contracting resets; feasible with a short period."""
        return cls(a=0.5, b=0.25, rho=0.5, r=0.05, delta=0.1, sigma=2.0, mu=0.5)


def _clock_guards(period: float, clock_index: int):
    def flow_guard(w) -> float:
        tau = float(w.head[clock_index])
        return min(tau, period - tau)

    def jump_guard(w) -> float:
        tau = float(w.head[clock_index])
        return -abs(period - tau)

    return flow_guard, jump_guard


def build_example1(p: Example1Params) -> tuple[SystemSpec, TargetSet]:
    """Sampled-data system with delayed measurements.

    State (z, u, tau); between samples dz = A z + B u, du = 0, dtau = 1; when
    the clock reaches delta the input resets to K times the z-measurement
    taken r units of time earlier and the clock restarts.
    """
    nz, m = p.nz, p.m
    n = nz + m + 1
    A, B, K = p.A, p.B, p.K
    delta_mem = p.r  # the only delayed lookup happens at jumps, spaced delta > r
    flow_guard, jump_guard = _clock_guards(p.delta, n - 1)

    def flow_selection(w) -> np.ndarray:
        x = w.head
        out = np.empty(n)
        out[:nz] = A @ x[:nz] + B @ x[nz:nz + m]
        out[nz:nz + m] = 0.0
        out[n - 1] = 1.0
        return out

    def jump_selections(w) -> list[np.ndarray]:
        x = w.head
        zhat = w.delayed(-p.r)[:nz]
        g = np.empty(n)
        g[:nz] = x[:nz]
        g[nz:nz + m] = K @ zhat
        g[n - 1] = 0.0
        return [g]

    spec = SystemSpec(
        dimension=n, memory_size=delta_mem,
        flow_guard=flow_guard, jump_guard=jump_guard,
        flow_selection=flow_selection, jump_selections=jump_selections,
        meta={"kind": "example1", "params": p, "clock_index": n - 1,
              "period": p.delta, "delays": (p.r,)},
    )
    return spec, origin_times_clock_target(n, p.delta)


def build_example2(p: Example2Params) -> tuple[SystemSpec, TargetSet]:
    """Scalar delay flow with periodic resets.

    State (x, tau); dx = a x + b x(t - r), dtau = 1; at tau = delta the state
    resets to rho x and the clock to zero.  The memory size is r + 1 so the
    delayed lookup stays inside the window across a reset.
    """
    delta_mem = p.r + 1.0
    flow_guard, jump_guard = _clock_guards(p.delta, 1)

    def flow_selection(w) -> np.ndarray:
        x = w.head
        xd = w.delayed(-p.r)
        return np.array([p.a * x[0] + p.b * xd[0], 1.0])

    def jump_selections(w) -> list[np.ndarray]:
        x = w.head
        return [np.array([p.rho * x[0], 0.0])]

    spec = SystemSpec(
        dimension=2, memory_size=delta_mem,
        flow_guard=flow_guard, jump_guard=jump_guard,
        flow_selection=flow_selection, jump_selections=jump_selections,
        meta={"kind": "example2", "params": p, "clock_index": 1,
              "period": p.delta, "delays": (p.r,)},
    )
    return spec, origin_times_clock_target(2, p.delta)


# ---------------------------------------------------------------------------
# General linear-delay family:
#   flow  dx = A0 x + sum_i Ai x(t - r_i)
#   jump  x+ = J0 x + sum_i Ji x(-r_i), fired by a clock with the given period
# A clock component is appended exactly when a jump period is given.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayTerm:
    delay: float
    matrix: np.ndarray


@dataclass(frozen=True)
class LinearDelayConfig:
    dimension: int
    memory_size: float
    a0: np.ndarray
    flow_delayed: tuple[DelayTerm, ...] = ()
    jump_period: float | None = None
    j0: np.ndarray | None = None
    jump_delayed: tuple[DelayTerm, ...] = ()
    target_set: str = "origin"


def _check_terms(terms: Sequence[DelayTerm], n: int, memory_size: float,
                 where: str) -> tuple[DelayTerm, ...]:
    out = []
    for i, term in enumerate(terms):
        m = np.atleast_2d(np.asarray(term.matrix, dtype=float))
        if m.shape != (n, n):
            raise ConfigError(f"{where}[{i}] matrix must be {n}x{n}, got {m.shape}")
        if not (0.0 <= term.delay <= memory_size):
            raise ConfigError(f"{where}[{i}].delay must lie in [0, memory_size]")
        out.append(DelayTerm(float(term.delay), m))
    return tuple(out)


def build_linear_delay_system(cfg: LinearDelayConfig) -> tuple[SystemSpec, TargetSet]:
    n = cfg.dimension
    if n <= 0:
        raise ConfigError("dimension must be positive")
    if cfg.memory_size < 0:
        raise ConfigError("memory_size must be nonnegative")
    a0 = np.atleast_2d(np.asarray(cfg.a0, dtype=float))
    if a0.shape != (n, n):
        raise ConfigError(f"flow.A0 must be {n}x{n}, got {a0.shape}")
    flow_terms = _check_terms(cfg.flow_delayed, n, cfg.memory_size, "flow.delayed")

    has_clock = cfg.jump_period is not None
    if has_clock:
        if cfg.jump_period <= 0:
            raise ConfigError("jump.period must be positive")
        j0 = np.eye(n) if cfg.j0 is None else np.atleast_2d(np.asarray(cfg.j0, dtype=float))
        if j0.shape != (n, n):
            raise ConfigError(f"jump.J0 must be {n}x{n}, got {j0.shape}")
        jump_terms = _check_terms(cfg.jump_delayed, n, cfg.memory_size, "jump.delayed")
    elif cfg.j0 is not None or cfg.jump_delayed:
        raise ConfigError("jump.J0 and jump.delayed require jump.period")
    else:
        j0, jump_terms = None, ()

    dim = n + 1 if has_clock else n

    if has_clock:
        flow_guard, jump_guard = _clock_guards(cfg.jump_period, n)
    else:
        def flow_guard(w) -> float:
            return 1.0

        def jump_guard(w) -> float:
            return -1.0

    def flow_selection(w) -> np.ndarray:
        x = w.head
        dx = a0 @ x[:n]
        for term in flow_terms:
            dx = dx + term.matrix @ w.delayed(-term.delay)[:n]
        if has_clock:
            return np.concatenate([dx, [1.0]])
        return dx

    def jump_selections(w) -> list[np.ndarray]:
        if not has_clock:
            return []
        x = w.head
        g = j0 @ x[:n]
        for term in jump_terms:
            g = g + term.matrix @ w.delayed(-term.delay)[:n]
        return [np.concatenate([g, [0.0]])]

    if cfg.target_set == "origin":
        target = origin_target(dim)
    elif cfg.target_set == "origin_times_clock":
        if not has_clock:
            raise ConfigError("target_set origin_times_clock requires jump.period")
        target = origin_times_clock_target(dim, cfg.jump_period)
    else:
        raise ConfigError(f"target_set must be 'origin' or 'origin_times_clock', "
                          f"got {cfg.target_set!r}")

    spec = SystemSpec(
        dimension=dim, memory_size=cfg.memory_size,
        flow_guard=flow_guard, jump_guard=jump_guard,
        flow_selection=flow_selection, jump_selections=jump_selections,
        meta={"kind": "linear_delay", "config": cfg,
              "clock_index": n if has_clock else None,
              "period": cfg.jump_period,
              "delays": tuple(t.delay for t in flow_terms + jump_terms)},
    )
    return spec, target


# ---------------------------------------------------------------------------
# JSON config schema (used by the CLI).  Unknown fields are rejected with an
# error message naming the offending key.
# ---------------------------------------------------------------------------

def _reject_unknown(d: dict, allowed: set[str], where: str) -> None:
    for key in d:
        if key not in allowed:
            raise ConfigError(f"unknown field {where}{key!r}")


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing field {where}{key!r}")
    return d[key]


def _parse_terms(entries, where: str) -> tuple[DelayTerm, ...]:
    if not isinstance(entries, list):
        raise ConfigError(f"{where} must be a list")
    terms = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}[{i}] must be an object")
        _reject_unknown(entry, {"delay", "A", "J"}, f"{where}[{i}].")
        delay = _require(entry, "delay", f"{where}[{i}].")
        mat = entry.get("A", entry.get("J"))
        if mat is None:
            raise ConfigError(f"{where}[{i}] needs a matrix field ('A' or 'J')")
        terms.append(DelayTerm(float(delay), np.asarray(mat, dtype=float)))
    return tuple(terms)


def parse_linear_delay_config(doc: dict) -> tuple[LinearDelayConfig, dict]:
    """Validate the JSON document; returns the config and the leftover
    sections ('initial_history' and 'sim') for the caller."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    _reject_unknown(doc, {"dimension", "memory_size", "flow", "jump",
                          "target_set", "initial_history", "sim"}, "")
    dimension = int(_require(doc, "dimension", ""))
    memory_size = float(_require(doc, "memory_size", ""))

    flow = _require(doc, "flow", "")
    if not isinstance(flow, dict):
        raise ConfigError("flow must be an object")
    _reject_unknown(flow, {"A0", "delayed"}, "flow.")
    a0 = np.asarray(_require(flow, "A0", "flow."), dtype=float)
    flow_delayed = _parse_terms(flow.get("delayed", []), "flow.delayed")

    jump_period, j0, jump_delayed = None, None, ()
    if "jump" in doc:
        jump = doc["jump"]
        if not isinstance(jump, dict):
            raise ConfigError("jump must be an object")
        _reject_unknown(jump, {"period", "J0", "delayed"}, "jump.")
        jump_period = float(_require(jump, "period", "jump."))
        if "J0" in jump:
            j0 = np.asarray(jump["J0"], dtype=float)
        jump_delayed = _parse_terms(jump.get("delayed", []), "jump.delayed")

    target_set = doc.get("target_set", "origin")
    if target_set not in ("origin", "origin_times_clock"):
        raise ConfigError(f"target_set must be 'origin' or 'origin_times_clock', "
                          f"got {target_set!r}")

    extras = {}
    if "initial_history" in doc:
        hist = doc["initial_history"]
        if not isinstance(hist, dict):
            raise ConfigError("initial_history must be an object")
        _reject_unknown(hist, {"kind", "value", "points"}, "initial_history.")
        kind = _require(hist, "kind", "initial_history.")
        if kind not in ("constant", "samples"):
            raise ConfigError("initial_history.kind must be 'constant' or 'samples'")
        if kind == "constant" and "value" not in hist:
            raise ConfigError("missing field initial_history.'value'")
        if kind == "samples" and "points" not in hist:
            raise ConfigError("missing field initial_history.'points'")
        extras["initial_history"] = hist
    if "sim" in doc:
        sim = doc["sim"]
        if not isinstance(sim, dict):
            raise ConfigError("sim must be an object")
        _reject_unknown(sim, {"t_max", "j_max", "step", "jump_priority"}, "sim.")
        extras["sim"] = sim

    cfg = LinearDelayConfig(
        dimension=dimension, memory_size=memory_size, a0=a0,
        flow_delayed=flow_delayed, jump_period=jump_period, j0=j0,
        jump_delayed=jump_delayed, target_set=target_set,
    )
    return cfg, extras


def history_from_config(hist: dict, spec: SystemSpec,
                        grid_step: float | None = None) -> HybridMemoryArc:
    """Build the initial memory arc described by an 'initial_history' section.

    Constant histories put the given state vector on the whole window;
    sampled histories list [s, v_1, ..., v_n] rows.  The clock component, if
    the system has one, must be included in the vectors.
    """
    delta = spec.memory_size
    depth = max(delta, 1e-3)
    if grid_step is None:
        period = spec.meta.get("period")
        grid_step = (period / 50.0) if period else depth / 50.0
    kind = hist["kind"]
    if kind == "constant":
        value = np.atleast_1d(np.asarray(hist["value"], dtype=float))
        if value.shape != (spec.dimension,):
            raise ConfigError(f"initial_history.value must have length {spec.dimension}")
        return constant_memory_arc(value, delta, depth=depth, grid_step=grid_step)
    points = hist["points"]
    if not isinstance(points, list) or not points:
        raise ConfigError("initial_history.points must be a nonempty list")
    rows = np.asarray(points, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != spec.dimension + 1:
        raise ConfigError("initial_history.points rows must be [s, v_1, ..., v_n]")
    order = np.argsort(rows[:, 0])
    rows = rows[order]
    times, values = rows[:, 0], rows[:, 1:]
    if times[-1] < -1e-12 or times[0] > -delta + 1e-12:
        raise ConfigError("initial_history.points must span [-memory_size, 0]")

    def fn(s: float) -> np.ndarray:
        idx = np.clip(np.searchsorted(times, s), 1, len(times) - 1)
        t0, t1 = times[idx - 1], times[idx]
        w = 0.0 if t1 == t0 else (s - t0) / (t1 - t0)
        return (1 - w) * values[idx - 1] + w * values[idx]

    return memory_arc_from_function(fn, delta, depth=depth, grid_step=grid_step)
