import math

import numpy as np
import pytest

from spikeflow import (DelayBuffer, NeuronGridState, NeuronParams,
                       SynapseTensor, fire_and_reset, integrate_membrane,
                       update_traces)

PARAMS = NeuronParams()  # v_th 0.5, lambda 5 ms, alpha 0.4, refr 3 ms


class TestTraces:
    def test_pure_decay_over_one_time_constant(self):
        x = np.array([1.0])
        update_traces(x, np.array([0.0]), PARAMS, dt_ms=5.0)
        assert x[0] == pytest.approx(math.exp(-1.0), abs=1e-15)

    def test_spike_adds_alpha(self):
        x = np.array([0.0])
        update_traces(x, np.array([1.0]), PARAMS, dt_ms=1.0)
        assert x[0] == pytest.approx(0.4)

    def test_saturation_under_steady_firing(self):
        # iterate the per-step map as an independent oracle
        expected = 0.4
        for _ in range(1000):
            expected = expected * math.exp(-0.2) + 0.4
        x = np.array([0.4])
        for _ in range(1000):
            update_traces(x, np.array([1.0]), PARAMS, dt_ms=1.0)
        assert x[0] == pytest.approx(expected, rel=1e-12)
        # fixed point of x * exp(-1/5) + alpha
        assert x[0] == pytest.approx(0.4 / (1 - math.exp(-0.2)), rel=1e-9)
        assert x[0] == pytest.approx(2.2067, abs=5e-5)

    def test_decay_is_multiplicative_across_steps(self):
        x = np.array([0.73])
        silent = np.array([0.0])
        for _ in range(100):
            update_traces(x, silent, PARAMS, dt_ms=1.0)
        assert x[0] == pytest.approx(0.73 * math.exp(-100 / 5.0), rel=1e-12)

    def test_trace_never_negative(self):
        rng = np.random.default_rng(0)
        x = rng.random(50)
        for step in range(200):
            spikes = (rng.random(50) < 0.3).astype(float)
            update_traces(x, spikes, PARAMS, dt_ms=1.0)
            assert np.all(x >= 0.0)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            update_traces(np.zeros(1), np.zeros(1), PARAMS, dt_ms=0.0)


class TestMembrane:
    def test_equilibrium_at_rest(self):
        state = NeuronGridState.zeros(3, PARAMS)
        integrate_membrane(state, np.zeros(3), PARAMS, 1.0, 0.0)
        assert np.all(state.v == 0.0)

    def test_euler_step_arithmetic(self):
        state = NeuronGridState.zeros(1, PARAMS)
        state.v[:] = 1.0
        integrate_membrane(state, np.zeros(1), PARAMS, 1.0, 0.0)
        assert state.v[0] == pytest.approx(0.8)

    def test_steady_state_matches_geometric_series_oracle(self):
        c = 0.3
        state = NeuronGridState.zeros(1, NeuronParams(v_th=10.0))
        n = 50
        for k in range(n):
            integrate_membrane(state, np.array([c]), PARAMS, 1.0, float(k))
        # closed form of the Euler iteration from v0 = 0
        expected = c * (1 - (1 - 1 / 5.0) ** n)
        assert state.v[0] == pytest.approx(expected, rel=1e-12)

    def test_converges_to_rest_plus_forcing(self):
        c = 0.05
        state = NeuronGridState.zeros(1, NeuronParams(v_th=10.0))
        for k in range(10 * 5):  # ten membrane time constants
            integrate_membrane(state, np.array([c]), PARAMS, 1.0, float(k))
        assert abs(state.v[0] - c) < 1e-6

    def test_decays_monotonically_without_crossing_rest(self):
        state = NeuronGridState.zeros(1, PARAMS)
        state.v[:] = 0.9
        prev = 0.9
        for k in range(100):
            integrate_membrane(state, np.zeros(1), PARAMS, 1.0, float(k))
            assert 0.0 < state.v[0] < prev
            prev = state.v[0]

    def test_refractory_neurons_ignore_input(self):
        state = NeuronGridState.zeros(2, PARAMS)
        state.refr_until[0] = 10.0
        integrate_membrane(state, np.full(2, 2.0), PARAMS, 1.0, now_ms=5.0)
        assert state.v[0] == 0.0
        assert state.v[1] > 0.0

    def test_rejects_unstable_dt(self):
        state = NeuronGridState.zeros(1, PARAMS)
        with pytest.raises(ValueError):
            integrate_membrane(state, np.zeros(1), PARAMS, 5.0, 0.0)


class TestFireAndReset:
    def test_threshold_is_inclusive(self):
        state = NeuronGridState.zeros(1, PARAMS)
        state.v[:] = 0.5
        assert fire_and_reset(state, PARAMS, 0.0)[0]
        assert state.v[0] == 0.0

    def test_just_below_threshold_does_not_fire(self):
        state = NeuronGridState.zeros(1, PARAMS)
        state.v[:] = 0.49999
        assert not fire_and_reset(state, PARAMS, 0.0)[0]

    def test_refractory_window_timing(self):
        # fire at t=10 with a 3 ms refractory period: blocked at 11 and 12,
        # eligible again at 13
        state = NeuronGridState.zeros(1, PARAMS)
        state.v[:] = 0.9
        assert fire_and_reset(state, PARAMS, 10.0)[0]
        for t in (11.0, 12.0):
            state.v[:] = 0.9
            assert not fire_and_reset(state, PARAMS, t)[0]
        state.v[:] = 0.9
        assert fire_and_reset(state, PARAMS, 13.0)[0]


class TestDelayBuffer:
    def test_returns_frame_from_exactly_tau_ago(self):
        buf = DelayBuffer((2,), max_delay_steps=3)
        for step in range(10):
            frame = np.array([step, step], dtype=bool) if step % 2 else \
                np.zeros(2, dtype=bool)
            buf.push(frame)
            if step >= 3:
                want = bool((step - 3) % 2)
                assert bool(buf.frame_at(3)[0]) == want

    def test_depth_limit_enforced(self):
        buf = DelayBuffer((1,), max_delay_steps=2)
        buf.push(np.ones(1, dtype=bool))
        with pytest.raises(IndexError):
            buf.frame_at(3)

    def test_reset_clears_history(self):
        buf = DelayBuffer((1,), max_delay_steps=1)
        buf.push(np.ones(1, dtype=bool))
        buf.reset()
        assert not buf.frame_at(0)[0]


class TestSynapseTensor:
    def test_shape_agreement_enforced(self):
        with pytest.raises(ValueError):
            SynapseTensor(w=np.zeros((2, 3)), x=np.zeros((2, 4)),
                          tau_ms=[1.0, 2.0, 3.0])

    def test_delays_strictly_increasing(self):
        with pytest.raises(ValueError):
            SynapseTensor(w=np.zeros((2, 2)), x=np.zeros((2, 2)),
                          tau_ms=[2.0, 2.0])

    def test_valid_tensor(self):
        st = SynapseTensor(w=np.full((3, 2), 0.5), x=np.zeros((3, 2)),
                           tau_ms=[1.0, 5.0])
        assert st.tau_ms.tolist() == [1.0, 5.0]
