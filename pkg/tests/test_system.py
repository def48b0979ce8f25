"""System builders, guards, target sets, and the config schema."""

import numpy as np
import pytest

from hymem.builtin import example2_feasibility
from hymem.hybrid_time import constant_memory_arc, memory_arc_from_function
from hymem.system import (ConfigError, DelayTerm, Example1Params,
                          Example2Params, LinearDelayConfig, build_example1,
                          build_example2, build_linear_delay_system,
                          history_from_config, parse_linear_delay_config)


def const_arc(values, delta, depth=None):
    return constant_memory_arc(np.asarray(values, dtype=float), delta,
                               depth=depth if depth is not None else delta + 0.4)


class TestExample1Builder:
    def test_paper_parameters_build(self):
        spec, target = build_example1(Example1Params.paper())
        assert spec.dimension == 4
        assert spec.memory_size == pytest.approx(0.01)

    def test_delay_must_be_smaller_than_period(self):
        with pytest.raises(ConfigError):
            Example1Params(A=[[1.0]], B=[[1.0]], K=[[1.0]], delta=0.1, r=0.2)

    def test_flow_at_origin_is_clock_only(self):
        spec, _ = build_example1(Example1Params.paper())
        phi = const_arc([0.0, 0.0, 0.0, 0.0], spec.memory_size)
        f = spec.flow_selection(phi)
        assert np.array_equal(f, np.array([0.0, 0.0, 0.0, 1.0]))

    def test_jump_applies_gain_to_delayed_measurement(self):
        p = Example1Params.paper()
        spec, _ = build_example1(p)
        z0 = np.array([0.3, -1.2])
        phi = const_arc([z0[0], z0[1], 0.7, p.delta], spec.memory_size)
        (g,) = spec.jump_selections(phi)
        assert np.allclose(g[:2], z0)
        assert g[2] == pytest.approx(float((p.K @ z0)[0]))
        assert g[3] == 0.0

    def test_guard_overlap_is_clock_boundary_only(self):
        p = Example1Params.paper()
        spec, _ = build_example1(p)
        for tau in (0.0, 0.1, 0.19, p.delta):
            phi = const_arc([1.0, 1.0, 0.0, tau], spec.memory_size)
            both = (spec.flow_guard(phi) >= 0) and (spec.jump_guard(phi) >= 0)
            assert both == (tau == p.delta)

    def test_target_set_reduction(self):
        p = Example1Params.paper()
        spec, target = build_example1(p)
        x = np.array([0.3, -0.4, 1.2, 0.15])
        assert target.dist(x) == pytest.approx(np.linalg.norm(x[:3]))
        x_out = np.array([0.0, 0.0, 0.0, p.delta + 0.5])
        assert target.dist(x_out) == pytest.approx(0.5)

    def test_sup_norm_reduction_on_window(self):
        from hymem.hybrid_time import sup_norm_w
        p = Example1Params.paper()
        spec, target = build_example1(p)
        phi = const_arc([0.6, -0.8, 0.0, 0.1], spec.memory_size)
        assert sup_norm_w(phi, target.dist) == pytest.approx(1.0)


class TestExample2Builder:
    def test_delay_free_reduction(self):
        # a = -1, b = 0 and identity resets: flow is dx = -x
        spec, _ = build_example2(Example2Params(a=-1.0, b=0.0, rho=1.0,
                                                r=0.1, delta=2.0))
        phi = const_arc([3.0, 0.5], spec.memory_size)
        f = spec.flow_selection(phi)
        assert f[0] == pytest.approx(-3.0)
        assert f[1] == 1.0

    def test_delayed_term_read_through_history(self):
        p = Example2Params(a=0.0, b=1.0, rho=1.0, r=0.3, delta=1.0)
        spec, _ = build_example2(p)
        phi = memory_arc_from_function(
            lambda s: np.array([np.sin(s), 0.2 + s]), spec.memory_size,
            depth=spec.memory_size + 0.3)
        f = spec.flow_selection(phi)
        assert f[0] == pytest.approx(np.sin(-0.3), abs=1e-4)

    def test_case2_instance_feasible(self):
        info = example2_feasibility(Example2Params.case2())
        # frozen closed-form inequality values for the short-period instance
        assert info.flow_form_value == pytest.approx(-0.5)
        assert info.flow_coupling_value == pytest.approx(0.25 - 0.0625)
        assert np.exp(-2.0 * 0.1) == pytest.approx(0.8187307530779818)
        assert info.jump_condition_value == pytest.approx(0.8187307530779818 - 0.5)
        assert info.feasible

    def test_case1_instance_feasible(self):
        info = example2_feasibility(Example2Params.case1())
        # (2a - sigma) e^(-sigma delta) + mu = -1.5 e^0.5 + 0.5
        want_form = -1.5 * np.exp(0.5) + 0.5
        assert info.flow_form_value == pytest.approx(want_form)
        assert info.flow_form_value == pytest.approx(-1.973, abs=5e-4)
        # -(form) * mu > b^2 e^(-2 sigma delta)
        assert -want_form * 0.5 > 0.0625 * np.exp(1.0)
        assert info.flow_coupling_value == pytest.approx(
            -want_form * 0.5 - 0.0625 * np.exp(1.0))
        # rho = 1.2 < e^(-sigma delta) = e^0.5
        assert 1.2 < np.exp(0.5)
        assert info.feasible

    def test_enlarged_period_breaks_jump_margin(self):
        p = Example2Params(a=0.5, b=0.25, rho=0.5, r=0.05, delta=0.75,
                           sigma=2.0, mu=0.5)
        info = example2_feasibility(p)
        assert p.rho >= np.exp(-p.sigma * p.delta)
        assert info.jump_margin < 0
        assert not info.feasible

    def test_memory_size_covers_delay_across_one_jump(self):
        p = Example2Params.case2()
        spec, _ = build_example2(p)
        assert spec.memory_size == pytest.approx(p.r + 1.0)


class TestLinearDelayBuilder:
    def test_pure_decay(self):
        cfg = LinearDelayConfig(dimension=1, memory_size=0.0,
                                a0=np.array([[-1.0]]))
        spec, target = build_linear_delay_system(cfg)
        phi = const_arc([2.0], 0.0, depth=0.0)
        assert spec.flow_selection(phi)[0] == pytest.approx(-2.0)
        assert spec.jump_guard(phi) < 0
        assert target.dist(np.array([2.0])) == 2.0

    def test_reproduces_example2_flow(self):
        p = Example2Params.case2()
        spec2, _ = build_example2(p)
        cfg = LinearDelayConfig(
            dimension=1, memory_size=p.r + 1.0, a0=np.array([[p.a]]),
            flow_delayed=(DelayTerm(p.r, np.array([[p.b]])),),
            jump_period=p.delta, j0=np.array([[p.rho]]),
            target_set="origin_times_clock")
        spec_g, _ = build_linear_delay_system(cfg)
        rng = np.random.default_rng(6)
        for _ in range(100):
            vals = rng.normal(size=2)
            vals[1] = rng.uniform(0, p.delta)
            phi = memory_arc_from_function(
                lambda s, v=vals: np.array([v[0] * (1 + np.sin(3 * s)), v[1] + s]),
                spec2.memory_size, depth=spec2.memory_size + 0.2)
            assert np.allclose(spec_g.flow_selection(phi),
                               spec2.flow_selection(phi), rtol=0, atol=0)

    def test_reproduces_example1_jumps(self):
        p = Example1Params.paper()
        spec1, _ = build_example1(p)
        j0 = np.block([[np.eye(2), np.zeros((2, 1))],
                       [np.zeros((1, 3))]])
        jr = np.block([[np.zeros((2, 3))],
                       [p.K, np.zeros((1, 1))]])
        cfg = LinearDelayConfig(
            dimension=3, memory_size=p.r,
            a0=np.block([[p.A, p.B], [np.zeros((1, 3))]]),
            jump_period=p.delta, j0=j0,
            jump_delayed=(DelayTerm(p.r, jr),),
            target_set="origin_times_clock")
        spec_g, _ = build_linear_delay_system(cfg)
        rng = np.random.default_rng(7)
        for _ in range(100):
            base = rng.normal(size=3)
            phi = memory_arc_from_function(
                lambda s, v=base: np.concatenate([v * (1 + 0.3 * s), [p.delta + s]]),
                p.r, depth=p.r + 0.1)
            g1 = spec1.jump_selections(phi)[0]
            g2 = spec_g.jump_selections(phi)[0]
            assert np.allclose(g1, g2, rtol=0, atol=0)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            build_linear_delay_system(LinearDelayConfig(
                dimension=2, memory_size=0.5, a0=np.eye(3)))

    def test_delay_beyond_memory_rejected(self):
        with pytest.raises(ConfigError):
            build_linear_delay_system(LinearDelayConfig(
                dimension=1, memory_size=0.5, a0=np.array([[0.0]]),
                flow_delayed=(DelayTerm(0.8, np.array([[1.0]])),)))


class TestConfigSchema:
    def good_doc(self):
        return {
            "dimension": 1,
            "memory_size": 1.1,
            "flow": {"A0": [[0.5]], "delayed": [{"delay": 0.05, "A": [[0.25]]}]},
            "jump": {"period": 0.1, "J0": [[0.5]]},
            "target_set": "origin_times_clock",
            "initial_history": {"kind": "constant", "value": [1.0, 0.0]},
            "sim": {"t_max": 5.0, "step": 0.002},
        }

    def test_valid_document(self):
        cfg, extras = parse_linear_delay_config(self.good_doc())
        spec, target = build_linear_delay_system(cfg)
        assert spec.dimension == 2
        assert "initial_history" in extras and "sim" in extras

    def test_unknown_top_level_field(self):
        doc = self.good_doc()
        doc["frobnicate"] = 1
        with pytest.raises(ConfigError, match="frobnicate"):
            parse_linear_delay_config(doc)

    def test_unknown_nested_field(self):
        doc = self.good_doc()
        doc["flow"]["B0"] = [[1.0]]
        with pytest.raises(ConfigError, match="B0"):
            parse_linear_delay_config(doc)

    def test_missing_required_field(self):
        doc = self.good_doc()
        del doc["flow"]
        with pytest.raises(ConfigError, match="flow"):
            parse_linear_delay_config(doc)

    def test_bad_target_set(self):
        doc = self.good_doc()
        doc["target_set"] = "nowhere"
        with pytest.raises(ConfigError, match="target_set"):
            parse_linear_delay_config(doc)

    def test_history_from_config_constant(self):
        cfg, extras = parse_linear_delay_config(self.good_doc())
        spec, _ = build_linear_delay_system(cfg)
        arc = history_from_config(extras["initial_history"], spec)
        assert arc.membership_violation() is None
        assert np.array_equal(arc.head, np.array([1.0, 0.0]))

    def test_history_from_config_samples(self):
        doc = self.good_doc()
        doc["initial_history"] = {
            "kind": "samples",
            "points": [[-1.2, 0.5, 0.0], [0.0, 1.5, 0.0]],
        }
        cfg, extras = parse_linear_delay_config(doc)
        spec, _ = build_linear_delay_system(cfg)
        arc = history_from_config(extras["initial_history"], spec)
        assert arc.head[0] == pytest.approx(1.5)
        assert arc.delayed(-0.6)[0] == pytest.approx(1.0, abs=1e-6)
