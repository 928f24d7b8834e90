import numpy as np
import pytest

from glifnet.core.errors import InvalidParameterError, ShapeError, TimeIndexError
from glifnet.models.neuron import (
    SIMPLEX_MODES,
    LayerState,
    NeuronGroupConfig,
    NeuronKind,
    NeuronMode,
    RawParamSet,
    SpikeMode,
)
from glifnet.services.neuron import (
    freeze_gates,
    gate_alpha,
    gate_beta,
    gate_gamma,
    glif_f_step,
    glif_step,
    logit,
    neuron_step,
    resolve_params,
    sigmoid,
    spike,
    surrogate_grad,
    vanilla_lif_step,
)


def raw_set(value, time_steps=3):
    return RawParamSet(*([value] * 7), raw_g=[value] * time_steps)


def scalar_state(u, s):
    return LayerState(np.array(u), np.array(s))


class TestResolveParams:
    def test_zero_maps_to_half(self):
        cfg = resolve_params(raw_set(0.0))
        assert cfg.alpha == 0.5
        np.testing.assert_array_equal(cfg.g, [0.5, 0.5, 0.5])

    def test_gate_init_range_endpoints(self):
        assert sigmoid(-0.2) == pytest.approx(0.450166, abs=1e-6)
        assert sigmoid(0.2) == pytest.approx(0.549834, abs=1e-6)

    def test_logit_round_trip(self):
        assert logit(0.25) == pytest.approx(-1.0986122886681098, abs=1e-12)
        assert resolve_params(raw_set(logit(0.25))).tau_exp == pytest.approx(0.25, abs=1e-12)

    def test_output_strictly_bounded_and_monotone(self):
        raw = np.linspace(-30.0, 30.0, 201)
        values = sigmoid(raw)
        assert np.all((values > 0.0) & (values < 1.0))
        assert np.all(np.diff(values) >= 0.0)
        assert resolve_params(raw_set(-30.0)).is_bounded()

    def test_non_finite_raw_value_rejected(self):
        with pytest.raises(InvalidParameterError):
            raw_set(np.nan)
        with pytest.raises(InvalidParameterError):
            RawParamSet(0, 0, 0, 0, 0, 0, np.inf, raw_g=[0.0])

    def test_conductance_needs_time_axis(self):
        with pytest.raises(ShapeError):
            RawParamSet(0, 0, 0, 0, 0, 0, 0, raw_g=0.0)

    def test_logit_rejects_bounds(self):
        with pytest.raises(InvalidParameterError):
            logit(1.0)
        with pytest.raises(InvalidParameterError):
            logit([0.5, 0.0])


class TestGates:
    def test_alpha_hand_value(self, make_cfg):
        l_total, l_exp_part = gate_alpha(np.array(1.0), make_cfg(alpha=0.5))
        assert l_total == pytest.approx(0.59375, abs=1e-15)
        assert l_exp_part == pytest.approx(0.625, abs=1e-15)

    def test_alpha_limits(self, make_cfg):
        u = np.array([0.3, -1.2, 2.0])
        linear, _ = gate_alpha(u, make_cfg(alpha=0.0))
        exponential, _ = gate_alpha(u, make_cfg(alpha=1.0))
        np.testing.assert_allclose(linear, u - 0.0625, atol=1e-15)
        np.testing.assert_allclose(exponential, 0.25 * u, atol=1e-15)

    def test_alpha_is_affine_in_alpha(self, make_cfg):
        u = np.array(0.7)
        ends = [gate_alpha(u, make_cfg(alpha=a))[0] for a in (0.0, 1.0)]
        for a in (0.1, 0.35, 0.8):
            assert gate_alpha(u, make_cfg(alpha=a))[0] == pytest.approx((1 - a) * ends[0] + a * ends[1], abs=1e-15)

    def test_beta_hand_value_and_limits(self, make_cfg):
        assert gate_beta(np.array(2.0), 0, make_cfg(beta=0.5, g=0.5)) == pytest.approx(1.5)
        assert gate_beta(np.array(2.0), 1, make_cfg(beta=0.0, g=0.3)) == pytest.approx(2.0)
        assert gate_beta(np.array(2.0), 2, make_cfg(beta=1.0, g=0.3)) == pytest.approx(0.6)

    def test_beta_rejects_time_outside_window(self, make_cfg):
        cfg = make_cfg(time_steps=4)
        with pytest.raises(TimeIndexError):
            gate_beta(np.array(1.0), 4, cfg)
        with pytest.raises(IndexError):
            gate_beta(np.array(1.0), -1, cfg)

    def test_gamma_hand_value_and_limits(self, make_cfg):
        assert gate_gamma(np.array(0.8), make_cfg(gamma=0.5, v_re=0.5)) == pytest.approx(-0.65)
        assert gate_gamma(np.array(0.8), make_cfg(gamma=1.0)) == pytest.approx(-0.8)
        assert gate_gamma(np.array(0.8), make_cfg(gamma=0.0, v_re=0.3)) == pytest.approx(-0.3)


class TestSpike:
    def test_fires_at_threshold(self):
        assert spike(np.array(0.5), 0.5) == 1.0

    def test_relaxed_clamp(self):
        assert spike(np.array(0.25), 0.5, SpikeMode.RELAXED) == pytest.approx(0.25)
        assert spike(np.array(2.5), 0.5, SpikeMode.RELAXED) == 1.0
        assert spike(np.array(2.5), 0.5, SpikeMode.SPIKING) == 1.0

    def test_surrogate_window(self):
        assert surrogate_grad(0.0) == 1.0
        assert surrogate_grad(0.6) == 0.0
        assert surrogate_grad(0.5) == 1.0
        assert surrogate_grad(-0.5) == 1.0

    def test_surrogate_is_relaxed_derivative_off_kinks(self):
        x = np.array([-0.9, -0.4, -0.1, 0.0, 0.2, 0.49, 0.51, 1.3])
        h = 1e-7
        numeric = (spike(x + h, 0.0, SpikeMode.RELAXED) - spike(x - h, 0.0, SpikeMode.RELAXED)) / (2 * h)
        np.testing.assert_allclose(numeric, surrogate_grad(x), atol=1e-6)

    def test_spiking_output_is_binary_and_idempotent(self, rng):
        u = rng.normal(0.5, 1.0, 100)
        s = spike(u, 0.5)
        assert set(np.unique(s)) <= {0.0, 1.0}
        rethreshold = 0.5 + 10.0 * s - 10.0 * (1.0 - s)
        np.testing.assert_array_equal(spike(rethreshold, 0.5), s)


class TestGlifStep:
    def test_frozen_101_trace(self, make_cfg):
        cfg = make_cfg(tau_exp=0.5, v_th=0.5)
        state = LayerState.zeros(())
        us, ss = [], []
        for t in range(4):
            state, _ = neuron_step(state, np.array(0.3), t, cfg, NeuronMode.simplex(1, 0, 1))
            us.append(float(state.u))
            ss.append(float(state.s))
        np.testing.assert_allclose(us, [0.3, 0.45, 0.525, 0.3], atol=1e-12)
        assert ss == [0.0, 0.0, 1.0, 0.0]

    def test_pure_exponential_decay(self, make_cfg):
        cfg = freeze_gates(make_cfg(tau_exp=0.5, v_th=0.9), (1, 0, 1))
        state = scalar_state(0.8, 0.0)
        for t in range(4):
            state, _ = glif_step(state, np.array(0.0), t, cfg)
            assert float(state.u) == pytest.approx(0.8 * 0.5 ** (t + 1), rel=1e-12)

    def test_hard_reset_cancels_exponential_part(self, make_cfg):
        cfg = make_cfg(alpha=1.0, gamma=1.0, tau_exp=0.3)
        new, terms = glif_step(scalar_state(0.9, 1.0), np.array(0.0), 0, cfg)
        assert float(new.u) == 0.0
        np.testing.assert_allclose(terms.l_exp_part, 0.3 * 0.9, atol=1e-15)

    def test_linear_decay_is_arithmetic(self, make_cfg):
        cfg = make_cfg(alpha=0.0, beta=0.0, tau_lin=0.0625, v_th=2.0)
        state = scalar_state(1.0, 0.0)
        previous = 1.0
        for t in range(6):
            state, _ = glif_step(state, np.array(0.0), t, cfg)
            assert float(state.s) == 0.0
            assert previous - float(state.u) == pytest.approx(0.0625, abs=1e-15)
            previous = float(state.u)

    def test_intermediates_definition(self, make_cfg, rng):
        cfg = make_cfg(alpha=0.3, tau_exp=0.7)
        state = LayerState(rng.normal(size=5), (rng.random(5) < 0.5).astype(float))
        _, terms = glif_step(state, rng.normal(size=5), 1, cfg)
        np.testing.assert_allclose(terms.l_exp_part, (1 - 0.3 * (1 - 0.7)) * state.u, atol=1e-15)

    def test_length_mismatch(self, make_cfg):
        with pytest.raises(ShapeError):
            glif_step(LayerState.zeros(3), np.zeros(4), 0, make_cfg())
        with pytest.raises(ShapeError):
            LayerState(np.zeros(3), np.zeros(2))


class TestVanillaLif:
    def test_memoryless(self):
        new = vanilla_lif_step(scalar_state(0.7, 0.0), np.array(0.2), 0.0, 0.5)
        assert float(new.u) == pytest.approx(0.2)

    def test_reset_after_spike(self):
        new = vanilla_lif_step(scalar_state(0.8, 1.0), np.array(0.1), 0.5, 0.5)
        assert float(new.u) == pytest.approx(0.1)

    def test_frozen_glif_equivalence(self, rng):
        n = 1000
        tau = rng.uniform(0.01, 0.99, n)
        v_th = rng.uniform(0.1, 0.9, n)
        cfg = NeuronGroupConfig(alpha=np.ones(n), beta=np.zeros(n), gamma=np.ones(n),
                                tau_lin=rng.uniform(0, 1, n), tau_exp=tau, v_re=rng.uniform(0, 1, n),
                                v_th=v_th, g=rng.uniform(0, 1, (n, 1)))
        state = LayerState(rng.normal(0, 1, n), (rng.random(n) < 0.5).astype(float))
        c = rng.normal(0, 1, n)
        glif, _ = glif_step(state, c, 0, cfg)
        vanilla = vanilla_lif_step(state, c, tau, v_th)
        assert np.max(np.abs(glif.u - vanilla.u)) <= 1e-12
        np.testing.assert_array_equal(glif.s, vanilla.s)

    def test_vanilla_mode_runs_as_frozen_101(self, make_cfg):
        cfg = make_cfg(tau_exp=0.5)
        state = scalar_state(0.4, 1.0)
        a, _ = neuron_step(state, np.array(0.2), 0, cfg, NeuronMode(NeuronKind.VANILLA_LIF))
        b, _ = neuron_step(state, np.array(0.2), 0, cfg, NeuronMode.simplex(1, 0, 1))
        np.testing.assert_array_equal(a.u, b.u)


class TestGlifF:
    def test_no_reset_branch(self, make_cfg):
        cfg = make_cfg(tau_exp=0.4, tau_lin=0.1, g=0.6)
        new = glif_f_step(scalar_state(0.5, 0.0), np.array(0.7), 0, cfg)
        assert float(new.u) == pytest.approx(0.4 * 0.5 - 0.1 + 0.6 * 0.7, abs=1e-12)

    def test_reset_branch(self, make_cfg):
        cfg = make_cfg(tau_exp=0.4, tau_lin=0.1, v_re=0.3)
        new = glif_f_step(scalar_state(0.5, 1.0), np.array(0.0), 0, cfg)
        assert float(new.u) == pytest.approx(-0.1 - 0.3, abs=1e-12)

    def test_terms_match_stacked_primitives(self, rng, make_cfg):
        cfg = make_cfg(tau_exp=0.35, tau_lin=0.2, v_re=0.45, g=0.8)
        state = LayerState(rng.normal(size=6), (rng.random(6) < 0.5).astype(float))
        c = rng.normal(size=6)
        new, terms = neuron_step(state, c, 2, cfg, NeuronMode(NeuronKind.GLIF_FUSED))
        np.testing.assert_allclose(terms.l_total, 0.35 * state.u - 0.2, atol=1e-12)
        np.testing.assert_allclose(terms.i_incr, 0.8 * c, atol=1e-12)
        np.testing.assert_allclose(terms.f_reset, -0.35 * state.u - 0.45, atol=1e-12)
        np.testing.assert_allclose(new.u, terms.l_total + terms.i_incr + terms.f_reset * state.s, atol=1e-12)
        np.testing.assert_array_equal(new.s, (new.u >= cfg.v_th).astype(float))

    def test_differs_from_glif_on_random_config(self, rng):
        cfg = resolve_params(RawParamSet(*rng.normal(size=7), raw_g=rng.normal(size=2)))
        state = LayerState(rng.normal(size=4), np.array([1.0, 0.0, 1.0, 0.0]))
        c = rng.normal(size=4)
        fused = glif_f_step(state, c, 0, cfg)
        gated, _ = glif_step(state, c, 0, cfg)
        assert not np.allclose(fused.u, gated.u)


class TestNeuronMode:
    def test_eight_distinct_simplex_models(self):
        assert len({mode.tag for mode in SIMPLEX_MODES}) == 8
        assert {mode.tag for mode in SIMPLEX_MODES} == {f"{a}{b}{c}" for a in "01" for b in "01" for c in "01"}

    def test_parse_tags(self):
        assert NeuronMode.parse("101").frozen_bits == (1, 0, 1)
        assert NeuronMode.parse("glif_s").kind is NeuronKind.GLIF_STATIC_GATES
        assert NeuronMode.parse("vanilla").frozen_bits == (1, 0, 1)
        assert NeuronMode.parse("glif").learns_gates
        assert not NeuronMode.parse("glif_f").learns_gates

    @pytest.mark.parametrize("tag", ["102", "lif", "simplex", ""])
    def test_parse_rejects_unknown(self, tag):
        with pytest.raises(InvalidParameterError):
            NeuronMode.parse(tag)
