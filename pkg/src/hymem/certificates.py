"""Sampling-based verification of Lyapunov stability certificates.

The checkers evaluate the hypotheses of the pointwise (threshold and Halanay
form) and functional certificates on randomly sampled memory arcs and report
every failure with a witness.  They falsify, not prove: zero violations over
a sample set is evidence, a reported violation is a certified
counterexample (re-evaluating the witness reproduces it exactly).

Default slack: 1e-9 for algebraic conditions, 1e-7 + 10 h for conditions
evaluated through an h-step finite difference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hybrid_time import HybridMemoryArc, append_jump, memory_window, sup_norm_w, vbar
from .sampling import ArcSample, ArcSampler
from .solver import PreconditionError, Trajectory, flow_window
from .system import SystemSpec, TargetSet

ALGEBRAIC_SLACK = 1e-9


def derivative_slack(h: float) -> float:
    return 1e-7 + 10.0 * h


VALIDATION_GRID = np.logspace(-8.0, 8.0, 50)


class CertificateValidationError(ValueError):
    """A certificate failed its screening (before any sampling ran)."""


# ---------------------------------------------------------------------------
# Certificate containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RazumikhinCertificate:
    """Pointwise function V with threshold p and jump contraction rho.

    v / grad_v act on state vectors; alpha1, alpha2 are class-K-infinity
    bounds, alpha3 is positive definite, p(r) > r and rho(r) < r for r > 0.
    ``v_batch`` optionally evaluates V on an (m, n) array of states at once.
    """

    v: Callable[[np.ndarray], float]
    grad_v: Callable[[np.ndarray], np.ndarray]
    alpha1: Callable[[float], float]
    alpha2: Callable[[float], float]
    alpha3: Callable[[float], float]
    p: Callable[[float], float]
    rho: Callable[[float], float]
    v_batch: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "razumikhin"


@dataclass(frozen=True)
class HalanayCertificate:
    """Linear-form variant: decay -mu V + q Vbar with mu > q > 0, jump
    contraction by a constant rho in (0, 1)."""

    v: Callable[[np.ndarray], float]
    grad_v: Callable[[np.ndarray], np.ndarray]
    alpha1: Callable[[float], float]
    alpha2: Callable[[float], float]
    mu: float
    q: float
    rho: float
    v_batch: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "halanay"


@dataclass(frozen=True)
class KrasovskiiCertificate:
    """Functional certificate: vf maps a whole memory arc to a value."""

    vf: Callable[[HybridMemoryArc], float]
    alpha1: Callable[[float], float]
    alpha2: Callable[[float], float]
    alpha3: Callable[[float], float]
    name: str = "krasovskii"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    condition: str
    region: str
    index: int
    origin: str
    lhs: float
    rhs: float
    margin: float  # rhs - lhs; a violation has margin < -slack
    arc: HybridMemoryArc = field(repr=False, compare=False)
    aux: tuple = ()

    def to_json_dict(self) -> dict:
        return {"seed": self.origin, "condition": self.condition,
                "region": self.region, "index": self.index,
                "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin}


@dataclass(frozen=True)
class CheckReport:
    certificate: str
    checked: int
    conditions_evaluated: int
    violations: tuple[Violation, ...]
    worst_margin: float
    slack_algebraic: float
    slack_derivative: float
    region_counts: dict
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json_dict(self, elapsed: float | None = None) -> dict:
        return {
            "certificate": self.certificate,
            "samples": self.checked,
            "conditions_evaluated": self.conditions_evaluated,
            "violations": [v.to_json_dict() for v in self.violations],
            "worst_margin": self.worst_margin,
            "slack": {"algebraic": self.slack_algebraic,
                      "derivative": self.slack_derivative},
            "region_counts": dict(sorted(self.region_counts.items())),
            "meta": {k: v for k, v in sorted(self.meta.items())
                     if isinstance(v, (int, float, str, bool))},
            "elapsed": elapsed,
        }

    def to_json(self, elapsed: float | None = None) -> str:
        return json.dumps(self.to_json_dict(elapsed), indent=2, sort_keys=True)


class _Recorder:
    """Accumulates condition evaluations and violations."""

    def __init__(self, slack_alg: float, slack_der: float):
        self.slack_alg = slack_alg
        self.slack_der = slack_der
        self.violations: list[Violation] = []
        self.worst = np.inf
        self.evaluated = 0

    def record(self, condition: str, sample: ArcSample, lhs: float, rhs: float,
               algebraic: bool, aux: tuple = ()) -> None:
        slack = self.slack_alg if algebraic else self.slack_der
        margin = rhs - lhs
        self.evaluated += 1
        self.worst = min(self.worst, margin)
        if margin < -slack:
            self.violations.append(Violation(
                condition=condition, region=sample.region, index=sample.index,
                origin=sample.origin, lhs=float(lhs), rhs=float(rhs),
                margin=float(margin), arc=sample.arc, aux=aux))

    def report(self, name: str, checked: int, counts: dict,
               meta: dict) -> CheckReport:
        return CheckReport(
            certificate=name, checked=checked, conditions_evaluated=self.evaluated,
            violations=tuple(self.violations),
            worst_margin=float(self.worst) if np.isfinite(self.worst) else 0.0,
            slack_algebraic=self.slack_alg, slack_derivative=self.slack_der,
            region_counts=counts, meta=meta)


# ---------------------------------------------------------------------------
# Screening
# ---------------------------------------------------------------------------

def _screen_comparison_functions(alpha1, alpha2, name: str) -> None:
    g = VALIDATION_GRID
    a1 = np.array([alpha1(float(r)) for r in g])
    a2 = np.array([alpha2(float(r)) for r in g])
    for label, vals in (("alpha1", a1), ("alpha2", a2)):
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise CertificateValidationError(f"{name}: {label} must be finite "
                                             "and nonnegative on the grid")
        if np.any(np.diff(vals) <= 0):
            raise CertificateValidationError(f"{name}: {label} must be strictly "
                                             "increasing on the validation grid")
    if np.any(a1 > a2):
        raise CertificateValidationError(f"{name}: alpha1 must not exceed alpha2")


def _screen_alpha3(alpha3, name: str) -> None:
    vals = np.array([alpha3(float(r)) for r in VALIDATION_GRID])
    if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
        raise CertificateValidationError(
            f"{name}: alpha3 must be positive for positive arguments")


def validate_razumikhin(cert: RazumikhinCertificate) -> None:
    _screen_comparison_functions(cert.alpha1, cert.alpha2, cert.name)
    _screen_alpha3(cert.alpha3, cert.name)
    for r in VALIDATION_GRID:
        if not cert.p(float(r)) > r:
            raise CertificateValidationError(
                f"{cert.name}: threshold p(r) > r fails at r = {r:.3e}")
        if not cert.rho(float(r)) < r:
            raise CertificateValidationError(
                f"{cert.name}: contraction rho(r) < r fails at r = {r:.3e}")


def validate_halanay(cert: HalanayCertificate) -> None:
    _screen_comparison_functions(cert.alpha1, cert.alpha2, cert.name)
    if not (cert.mu > cert.q > 0):
        raise CertificateValidationError(
            f"{cert.name}: needs mu > q > 0, got mu={cert.mu}, q={cert.q}")
    if not (0 < cert.rho < 1):
        raise CertificateValidationError(
            f"{cert.name}: needs 0 < rho < 1, got rho={cert.rho}")


def validate_krasovskii(cert: KrasovskiiCertificate) -> None:
    _screen_comparison_functions(cert.alpha1, cert.alpha2, cert.name)
    _screen_alpha3(cert.alpha3, cert.name)


def check_gradient(cert, points: np.ndarray, rel_tol: float = 1e-6) -> None:
    """Reject the certificate when grad_v disagrees with central finite
    differences of v beyond rel_tol (norm-relative) at any supplied point."""
    for x in points:
        g = np.asarray(cert.grad_v(x), dtype=float)
        fd = np.empty_like(g)
        for i in range(x.shape[0]):
            step = 1e-6 * max(1.0, abs(x[i]))
            e = np.zeros_like(x)
            e[i] = step
            fd[i] = (cert.v(x + e) - cert.v(x - e)) / (2 * step)
        scale = max(1.0, float(np.linalg.norm(g)), float(np.linalg.norm(fd)))
        if np.linalg.norm(fd - g) > rel_tol * scale:
            raise CertificateValidationError(
                f"{cert.name}: grad_v disagrees with finite differences at "
                f"x={x.tolist()} (|diff|={np.linalg.norm(fd - g):.3e})")


def _gradient_check_points(samples: Sequence[ArcSample], budget: int = 1000
                           ) -> np.ndarray:
    pts = [s.arc.head for s in samples]
    if not pts:
        return np.empty((0, 0))
    return np.array(pts[:budget])


def _split_counts(total: int) -> tuple[int, int, int]:
    n_c = max(1, int(round(total * 0.4)))
    n_d = max(1, int(round(total * 0.3)))
    n_g = max(0, total - n_c - n_d)
    return n_c, n_d, n_g


# ---------------------------------------------------------------------------
# Checkers
# ---------------------------------------------------------------------------

def check_razumikhin(spec: SystemSpec, cert: RazumikhinCertificate,
                     sampler: ArcSampler, slack: float | None = None,
                     samples: int = 1000, target: TargetSet | None = None
                     ) -> CheckReport:
    """Evaluate the threshold certificate's three conditions on sampled arcs.

    (i) sandwich at the window head on C, D and post-jump arcs; (ii) when
    the threshold premise p(V) >= Vbar holds on a flow arc, every flow
    candidate must descend at rate alpha3(V); (iii) every jump candidate
    must contract below rho(Vbar).
    """
    validate_razumikhin(cert)
    if target is None:
        target = spec.meta.get("target")
    if target is None:
        raise ValueError("a TargetSet is required (pass target=...)")
    rec = _Recorder(slack if slack is not None else ALGEBRAIC_SLACK,
                    slack if slack is not None else derivative_slack(0.0))
    n_c, n_d, n_g = _split_counts(samples)
    c_arcs = sampler.sample("C", n_c)
    d_arcs = sampler.sample("D", n_d)
    g_arcs = sampler.sample("Gplus", n_g)
    check_gradient(cert, _gradient_check_points(c_arcs + d_arcs))

    for s in c_arcs + d_arcs + g_arcs:
        head = s.arc.head
        dw = float(target.dist(head))
        vh = float(cert.v(head))
        rec.record(f"{cert.name}.i.lower", s, cert.alpha1(dw), vh, True)
        rec.record(f"{cert.name}.i.upper", s, vh, cert.alpha2(dw), True)

    for s in c_arcs:
        head = s.arc.head
        vh = float(cert.v(head))
        vb = vbar(s.arc, cert.v, batch=cert.v_batch)
        if cert.p(vh) < vb:
            continue  # threshold premise not met; no decay required here
        grad = np.asarray(cert.grad_v(head), dtype=float)
        for ci, f in enumerate(spec.flow_candidates(s.arc)):
            lhs = float(grad @ np.asarray(f, dtype=float))
            rec.record(f"{cert.name}.ii", s, lhs, -cert.alpha3(vh), False,
                       aux=("flow_candidate", ci))

    for s in d_arcs:
        vb = vbar(s.arc, cert.v, batch=cert.v_batch)
        for gi, g in enumerate(spec.jump_selections(s.arc)):
            rec.record(f"{cert.name}.iii", s, float(cert.v(np.asarray(g))),
                       cert.rho(vb), True, aux=("jump_candidate", gi))

    counts = {"C": len(c_arcs), "D": len(d_arcs), "Gplus": len(g_arcs)}
    return rec.report(cert.name, sum(counts.values()), counts,
                      meta={"sampler_mode": sampler.mode, "seed": sampler.seed})


def check_halanay(spec: SystemSpec, cert: HalanayCertificate,
                  sampler: ArcSampler, slack: float | None = None,
                  samples: int = 1000, target: TargetSet | None = None
                  ) -> CheckReport:
    """Linear-form conditions: (ii) grad V . f <= -mu V + q Vbar on all flow
    arcs, (iii) V(g) <= rho Vbar on all jump arcs; sandwich as in the
    threshold check."""
    validate_halanay(cert)
    if target is None:
        raise ValueError("a TargetSet is required (pass target=...)")
    rec = _Recorder(slack if slack is not None else ALGEBRAIC_SLACK,
                    slack if slack is not None else derivative_slack(0.0))
    n_c, n_d, n_g = _split_counts(samples)
    c_arcs = sampler.sample("C", n_c)
    d_arcs = sampler.sample("D", n_d)
    g_arcs = sampler.sample("Gplus", n_g)
    check_gradient(cert, _gradient_check_points(c_arcs + d_arcs))

    for s in c_arcs + d_arcs + g_arcs:
        head = s.arc.head
        dw = float(target.dist(head))
        vh = float(cert.v(head))
        rec.record(f"{cert.name}.i.lower", s, cert.alpha1(dw), vh, True)
        rec.record(f"{cert.name}.i.upper", s, vh, cert.alpha2(dw), True)

    for s in c_arcs:
        head = s.arc.head
        vh = float(cert.v(head))
        vb = vbar(s.arc, cert.v, batch=cert.v_batch)
        grad = np.asarray(cert.grad_v(head), dtype=float)
        for ci, f in enumerate(spec.flow_candidates(s.arc)):
            lhs = float(grad @ np.asarray(f, dtype=float))
            rec.record(f"{cert.name}.ii", s, lhs, -cert.mu * vh + cert.q * vb,
                       False, aux=("flow_candidate", ci))

    for s in d_arcs:
        vb = vbar(s.arc, cert.v, batch=cert.v_batch)
        for gi, g in enumerate(spec.jump_selections(s.arc)):
            rec.record(f"{cert.name}.iii", s, float(cert.v(np.asarray(g))),
                       cert.rho * vb, True, aux=("jump_candidate", gi))

    counts = {"C": len(c_arcs), "D": len(d_arcs), "Gplus": len(g_arcs)}
    return rec.report(cert.name, sum(counts.values()), counts,
                      meta={"sampler_mode": sampler.mode, "seed": sampler.seed})


def _dplus_v(spec: SystemSpec, cert: KrasovskiiCertificate,
             phi: HybridMemoryArc, h: float) -> tuple[float, float]:
    """Forward difference of the functional along the selected flow.

    Shrinks h when the flow would leave the flow set within h; errors when
    no positive duration keeps it inside.  Returns (value, h actually used).
    """
    h_eff = h
    for _ in range(30):
        try:
            w_h = flow_window(spec, phi, h_eff)
        except PreconditionError:
            raise
        if spec.flow_guard(w_h) >= -1e-7:
            base = float(cert.vf(phi))
            return (float(cert.vf(w_h)) - base) / h_eff, h_eff
        h_eff *= 0.5
    raise PreconditionError("flow leaves the flow set immediately; the "
                            "functional derivative is undefined here")


def dplus_v(spec: SystemSpec, cert: KrasovskiiCertificate,
            phi: HybridMemoryArc, h: float) -> float:
    """Finite-difference upper right-hand derivative of the functional at phi
    along the selected flow (exact for single-valued flow maps as h -> 0+)."""
    value, _ = _dplus_v(spec, cert, phi, h)
    return value


def check_krasovskii(spec: SystemSpec, cert: KrasovskiiCertificate,
                     sampler: ArcSampler, slack: float | None = None,
                     samples: int = 1000, h: float = 1e-5,
                     target: TargetSet | None = None) -> CheckReport:
    """Functional certificate conditions on sampled arcs.

    (i) alpha1(|head|_W) <= Vf(phi) <= alpha2(sup-norm); (ii) the h-step
    difference quotient descends at rate alpha3(|head|_W) on flow arcs;
    (iii) appending any jump value decreases Vf by alpha3(|head|_W).  Flow
    candidates are screened for an empirical norm bound (local boundedness).
    """
    validate_krasovskii(cert)
    if target is None:
        raise ValueError("a TargetSet is required (pass target=...)")
    rec = _Recorder(slack if slack is not None else ALGEBRAIC_SLACK,
                    slack if slack is not None else derivative_slack(h))
    n_c, n_d, n_g = _split_counts(samples)
    c_arcs = sampler.sample("C", n_c)
    d_arcs = sampler.sample("D", n_d)
    g_arcs = sampler.sample("Gplus", n_g)

    flow_bound = 0.0
    skipped_flow = 0
    for s in c_arcs + d_arcs + g_arcs:
        head = s.arc.head
        dw = float(target.dist(head))
        vf = float(cert.vf(s.arc))
        sup = sup_norm_w(s.arc, target.dist, batch=target.dist_batch)
        rec.record(f"{cert.name}.i.lower", s, cert.alpha1(dw), vf, True)
        rec.record(f"{cert.name}.i.upper", s, vf, cert.alpha2(sup), True)

    for s in c_arcs:
        dw = float(target.dist(s.arc.head))
        for f in spec.flow_candidates(s.arc):
            flow_bound = max(flow_bound, float(np.linalg.norm(f)))
        try:
            d, _ = _dplus_v(spec, cert, s.arc, h)
        except PreconditionError:
            skipped_flow += 1
            continue
        rec.record(f"{cert.name}.ii", s, d, -cert.alpha3(dw), False)

    for s in d_arcs:
        head = s.arc.head
        dw = float(target.dist(head))
        base = float(cert.vf(s.arc))
        for gi, g in enumerate(spec.jump_selections(s.arc)):
            lhs = float(cert.vf(append_jump(s.arc, np.asarray(g, dtype=float))))
            rec.record(f"{cert.name}.iii", s, lhs - base, -cert.alpha3(dw),
                       True, aux=("jump_candidate", gi))

    counts = {"C": len(c_arcs), "D": len(d_arcs), "Gplus": len(g_arcs)}
    return rec.report(cert.name, sum(counts.values()), counts,
                      meta={"sampler_mode": sampler.mode, "seed": sampler.seed,
                            "flow_bound_observed": flow_bound,
                            "flow_arcs_skipped": skipped_flow, "h": h})


# ---------------------------------------------------------------------------
# Trajectory-level conclusions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VbarMonotoneReport:
    passed: bool
    first_violation: tuple[float, int, float, float] | None  # t, j, prev, cur
    initial_value: float
    final_value: float
    points: int


def check_vbar_monotone(traj: Trajectory, v: Callable[[np.ndarray], float],
                        delta: float, tol: float,
                        v_batch=None) -> VbarMonotoneReport:
    """Windowed maximum of V must be non-increasing along the trajectory."""
    arc = traj.arc
    prev = None
    first = None
    initial = final = np.nan
    count = 0
    for seg in arc.forward_segments:
        for t in seg.times:
            w = memory_window(arc, float(t), seg.jump_index, delta)
            cur = vbar(w, v, batch=v_batch)
            count += 1
            if prev is None:
                initial = cur
            elif cur > prev + tol and first is None:
                first = (float(t), seg.jump_index, float(prev), float(cur))
            prev = cur
    final = prev if prev is not None else np.nan
    return VbarMonotoneReport(passed=first is None, first_violation=first,
                              initial_value=float(initial),
                              final_value=float(final), points=count)


@dataclass(frozen=True)
class KLEnvelopeReport:
    bounded_ok: bool
    attractive_ok: bool
    gamma_table: tuple[tuple[float, float], ...]          # (eta, sup bound)
    time_table: tuple[tuple[float, float, float | None], ...]  # (eps, eta, T)
    overshoot_cap: float
    trajectories: int

    @property
    def passed(self) -> bool:
        return self.bounded_ok and self.attractive_ok

    def to_json_dict(self, elapsed: float | None = None) -> dict:
        return {
            "bounded_ok": self.bounded_ok,
            "attractive_ok": self.attractive_ok,
            "gamma_table": [list(row) for row in self.gamma_table],
            "time_table": [list(row) for row in self.time_table],
            "overshoot_cap": self.overshoot_cap,
            "trajectories": self.trajectories,
            "elapsed": elapsed,
        }


def check_kl_envelope(trajectories: Sequence[Trajectory], target: TargetSet,
                      eps_grid: Sequence[float], eta_grid: Sequence[float],
                      overshoot_cap: float = 100.0) -> KLEnvelopeReport:
    """Empirical uniform boundedness and uniform attractivity over a bundle.

    Boundedness: within each initial-size bucket eta, the largest excursion
    must stay below overshoot_cap * eta.  Attractivity: for every grid pair
    (eps, eta) a single time T(eps, eta) must exist by which every bucket
    trajectory's distance has permanently dropped below eps; T is measured
    in t + j and must lie within the simulated horizon.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    mem = {round(t.memory_size, 12) for t in trajectories}
    dims = {t.arc.dimension for t in trajectories}
    if len(mem) > 1 or len(dims) > 1:
        raise ValueError("trajectories come from mismatched systems")

    etas, sups, drop_times = [], [], []
    for traj in trajectories:
        init = HybridMemoryArc(traj.arc.memory_segments, traj.memory_size,
                               traj.arc.interpolation, validate=False)
        etas.append(sup_norm_w(init, target.dist, batch=target.dist_batch))
        tj = []
        dist = []
        for t, j, x in traj.sample_points():
            tj.append(t + j)
            dist.append(target.dist(x))
        tj = np.asarray(tj)
        dist = np.asarray(dist)
        sups.append(float(np.max(dist)))
        drop_times.append((tj, dist))

    etas = np.asarray(etas)
    gamma_rows = []
    bounded_ok = True
    for eta in sorted(eta_grid):
        mask = etas <= eta + 1e-12
        if not np.any(mask):
            continue
        gamma = float(np.max(np.asarray(sups)[mask]))
        gamma_rows.append((float(eta), gamma))
        if gamma > overshoot_cap * max(eta, 1e-9):
            bounded_ok = False

    time_rows = []
    attractive_ok = True
    for eps in sorted(eps_grid):
        for eta in sorted(eta_grid):
            mask = etas <= eta + 1e-12
            if not np.any(mask):
                continue
            worst_T: float | None = 0.0
            for i in np.flatnonzero(mask):
                tj, dist = drop_times[i]
                above = dist > eps
                if above[-1]:
                    worst_T = None
                    break
                if np.any(above):
                    last = int(np.flatnonzero(above)[-1])
                    t_i = float(tj[last + 1]) if last + 1 < len(tj) else None
                else:
                    t_i = 0.0
                if t_i is None:
                    worst_T = None
                    break
                worst_T = max(worst_T, t_i)
            time_rows.append((float(eps), float(eta), worst_T))
            if worst_T is None:
                attractive_ok = False

    return KLEnvelopeReport(
        bounded_ok=bounded_ok, attractive_ok=attractive_ok,
        gamma_table=tuple(gamma_rows), time_table=tuple(time_rows),
        overshoot_cap=overshoot_cap, trajectories=len(trajectories))
