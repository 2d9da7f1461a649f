import json
import math
from collections import Counter

import numpy as np
import pytest

from tempo_snn.adapt import AdaptMethod
from tempo_snn.harness import (
    ALL_METHODS,
    COARSE_TO_FINE,
    FINE_TO_COARSE,
    E2EConfig,
    SinExcitation,
    StudyConfig,
    class_orders,
    e2e_experiment,
    gen_sin_input,
    gen_synthetic_dataset,
    pair_traces,
    parse_direction,
    random_adlif,
    resolve_jobs,
    single_neuron_experiment,
)

TINY_E2E = E2EConfig(classes=2, train_per_class=12, test_per_class=6, channels=4, timesteps=16, hidden=(6,), epochs=2)


class TestSinInput:
    def test_length_and_grid(self):
        assert gen_sin_input(SinExcitation(T=100, seed=1)).shape == (101,)

    def test_zero_amplitude(self):
        np.testing.assert_array_equal(gen_sin_input(SinExcitation(amplitude=(0.0, 0.0), seed=3)), 0.0)

    def test_deterministic(self):
        np.testing.assert_array_equal(gen_sin_input(SinExcitation(seed=5)), gen_sin_input(SinExcitation(seed=5)))
        assert not np.array_equal(gen_sin_input(SinExcitation(seed=5)), gen_sin_input(SinExcitation(seed=6)))

    def test_triangle_bound(self):
        for seed in range(300):
            assert np.max(np.abs(gen_sin_input(SinExcitation(seed=seed)))) <= 0.6

    def test_single_component_form(self):
        # With degenerate ranges the sequence is one known sinusoid.
        cfg = SinExcitation(K=1, amplitude=(0.2, 0.2), frequency=(2.0, 2.0), phase_divisor=(4.0, 4.0), T=10)
        t = np.arange(11)
        np.testing.assert_allclose(gen_sin_input(cfg), 0.2 * np.sin(2.0 * t + math.pi / 4), atol=1e-15)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SinExcitation(amplitude=(0.3, 0.1))
        with pytest.raises(ValueError):
            SinExcitation(phase_divisor=(0.0, 1.0))


class TestRandomNeuron:
    @pytest.mark.parametrize("sampling", ["time_constant", "uniform"])
    def test_ranges(self, sampling):
        ps = [random_adlif(s, sampling) for s in range(10_000)]
        for k, (lo, hi) in (("alpha", (0.6, 0.98)), ("beta", (0.6, 0.98)), ("a", (0.2, 0.5)), ("b", (0.2, 0.5))):
            vals = np.array([getattr(p, k) for p in ps])
            assert vals.min() >= lo and vals.max() <= hi
            # the draws fill the range, not a corner of it
            assert vals.min() < lo + 0.02 * (hi - lo) and vals.max() > hi - 0.02 * (hi - lo)
        assert all(p.theta == 1.0 for p in ps)

    def test_time_constant_sampling_is_uniform_in_tau(self):
        taus = np.array([-1 / math.log(random_adlif(s).alpha) for s in range(10_000)])
        lo, hi = -1 / math.log(0.6), -1 / math.log(0.98)
        # quartiles of a uniform on [lo, hi]; standard error of a quartile is about 0.004 (hi - lo)
        np.testing.assert_allclose(np.quantile(taus, [0.25, 0.5, 0.75]), lo + (hi - lo) * np.array([0.25, 0.5, 0.75]), atol=0.02 * (hi - lo))

    def test_deterministic_and_distinct(self):
        assert random_adlif(42) == random_adlif(42)
        assert len({random_adlif(s) for s in range(1000)}) == 1000

    def test_unknown_sampling(self):
        with pytest.raises(ValueError):
            random_adlif(0, "log")


class TestPairTraces:
    @pytest.mark.parametrize("direction", [FINE_TO_COARSE, COARSE_TO_FINE])
    def test_shapes(self, direction):
        ref, cands, scales = pair_traces(3, direction)
        assert ref.shape == (50,)
        for m in ALL_METHODS:
            assert cands[m].shape == (50,)
            assert scales[m].shape == (50,)

    def test_unit_ratio_free_none_candidate(self):
        # Without adaptation the neurons are the same, only the drive differs.
        ref_f, cands_f, _ = pair_traces(8, FINE_TO_COARSE)
        ref_c, cands_c, _ = pair_traces(8, COARSE_TO_FINE)
        np.testing.assert_array_equal(cands_f[AdaptMethod.NONE], ref_c)
        np.testing.assert_array_equal(cands_c[AdaptMethod.NONE], ref_f)

    def test_sum_input_doubles_drive(self):
        ref_mean, _, _ = pair_traces(2, COARSE_TO_FINE, (AdaptMethod.NONE,), StudyConfig(theta=math.inf))
        ref_sum, _, _ = pair_traces(2, COARSE_TO_FINE, (AdaptMethod.NONE,), StudyConfig(coarse_input="sum", theta=math.inf))
        np.testing.assert_allclose(ref_sum, 2 * ref_mean, atol=1e-13)


class TestSingleNeuronStudy:
    def test_integral_equals_expectation(self):
        for direction in (FINE_TO_COARSE, COARSE_TO_FINE):
            rep = single_neuron_experiment(200, direction, seed=3)
            i, e = rep.methods["integral"], rep.methods["expectation"]
            for k in ("q1_mean", "q1_std", "q2_mean", "q2_std"):
                assert round(getattr(i, k), 6) == round(getattr(e, k), 6)

    def test_deterministic(self):
        a = single_neuron_experiment(30, FINE_TO_COARSE, seed=9)
        b = single_neuron_experiment(30, FINE_TO_COARSE, seed=9)
        assert a.to_json() == b.to_json()

    def test_jobs_invariant(self):
        a = single_neuron_experiment(24, COARSE_TO_FINE, seed=4, jobs=1)
        b = single_neuron_experiment(24, COARSE_TO_FINE, seed=4, jobs=3)
        assert a.to_json() == b.to_json()

    def test_report_fields(self):
        rep = single_neuron_experiment(20, "b1->b2", seed=1)
        assert rep.direction == FINE_TO_COARSE and rep.n == 20
        assert list(rep.methods) == [m.value for m in ALL_METHODS]
        for st in rep.methods.values():
            assert st.q1_std >= 0 and st.q2_std >= 0
            assert st.n_ok + st.n_failed == 20
        d = json.loads(rep.to_json())
        assert d["methods"]["integral"]["n_ok"] == 20
        table = rep.to_table()
        assert table.splitlines()[1].split() == ["Method", "Q1", "Q2"]
        assert len(table.splitlines()) == 2 + len(ALL_METHODS)

    def test_single_pair_std(self):
        rep = single_neuron_experiment(1, FINE_TO_COARSE, seed=0)
        assert rep.methods["integral"].q1_std == 0.0

    def test_failures_counted(self):
        # With decays sampled uniformly the defective set (alpha = beta with a = 0) is
        # still unreachable because a >= 0.2, so no pair fails.
        rep = single_neuron_experiment(50, COARSE_TO_FINE, seed=2, cfg=StudyConfig(decay_sampling="uniform"))
        assert all(st.n_failed == 0 for st in rep.methods.values())

    def test_invalid(self):
        with pytest.raises(ValueError):
            single_neuron_experiment(0, FINE_TO_COARSE)
        with pytest.raises(ValueError):
            single_neuron_experiment(1, "sideways")


class TestSyntheticData:
    def test_deterministic(self):
        a = gen_synthetic_dataset(4, 5, 8, 32, seed=3)
        b = gen_synthetic_dataset(4, 5, 8, 32, seed=3)
        assert all(x == y and la == lb for (x, la), (y, lb) in zip(a, b))

    def test_balanced(self):
        data = gen_synthetic_dataset(4, 7, 8, 32, seed=1)
        assert Counter(y for _, y in data) == {0: 7, 1: 7, 2: 7, 3: 7}
        assert all(x.channels == 8 and x.timesteps == 32 and x.dt == 1.0 for x, _ in data)

    def test_shuffled(self):
        labels = [y for _, y in gen_synthetic_dataset(2, 20, 4, 16, seed=0)]
        assert labels != sorted(labels)

    def test_class_orders_distinct(self):
        orders = class_orders(6, 4)
        assert len(set(orders)) == 6
        assert all(sorted(o) == [0, 1, 2, 3] for o in orders)
        with pytest.raises(ValueError):
            class_orders(25, 4)

    def test_class_signal_in_timing(self):
        # Each class uses every channel group equally, but in a class-specific order.
        data = gen_synthetic_dataset(2, 200, 4, 40, seed=5, groups=2, background_rate=0.0, jitter=0)
        per_class = {c: np.mean([x.counts for x, y in data if y == c], axis=0) for c in (0, 1)}
        # expected total: 2 groups x 2 channels x 10 steps x rate 0.6 = 24, Poisson SE sqrt(24/200)
        for c in (0, 1):
            assert abs(per_class[c].sum() - 24.0) < 4 * math.sqrt(24.0 / 200)
        # group g owns channels 2g and 2g+1
        first_half = {c: per_class[c][:, :20].reshape(2, 2, 20).sum(axis=(1, 2)) for c in (0, 1)}
        assert first_half[0][0] > 5 * first_half[0][1]
        assert first_half[1][1] > 5 * first_half[1][0]

    def test_invalid(self):
        with pytest.raises(ValueError):
            gen_synthetic_dataset(0, 1, 4, 16, seed=0)
        with pytest.raises(ValueError):
            gen_synthetic_dataset(2, 1, 2, 16, seed=0, groups=4)


class TestE2E:
    def test_unit_ratio(self):
        out = e2e_experiment(COARSE_TO_FINE, AdaptMethod.INTEGRAL, 2, 2, [0], TINY_E2E)
        row = out["per_seed"][0]
        assert row["integral"] == row["none"] == row["source"] == row["baseline"]

    def test_deterministic_and_jobs_invariant(self):
        a = e2e_experiment(COARSE_TO_FINE, [AdaptMethod.INTEGRAL, AdaptMethod.EULER], 2, 1, [0, 1], TINY_E2E, jobs=1)
        b = e2e_experiment(COARSE_TO_FINE, [AdaptMethod.INTEGRAL, AdaptMethod.EULER], 2, 1, [0, 1], TINY_E2E, jobs=2)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
        assert set(a["mean"]) == {"source", "none", "integral", "euler", "baseline"}
        assert all(0.0 <= v <= 1.0 for v in a["mean"].values())

    def test_fine_to_coarse_runs(self):
        out = e2e_experiment(FINE_TO_COARSE, AdaptMethod.TIME_CONSTANT, 1, 2, [3], TINY_E2E)
        assert set(out["per_seed"][0]) == {"seed", "source", "none", "time-constant", "baseline"}

    def test_direction_checked(self):
        with pytest.raises(ValueError, match="direction"):
            e2e_experiment(COARSE_TO_FINE, AdaptMethod.INTEGRAL, 1, 2, [0], TINY_E2E)
        with pytest.raises(ValueError, match="divide"):
            e2e_experiment(COARSE_TO_FINE, AdaptMethod.INTEGRAL, 3, 2, [0], TINY_E2E)


class TestPlumbing:
    def test_directions(self):
        assert parse_direction("b2->b1") == COARSE_TO_FINE
        assert parse_direction("Fine-To-Coarse") == FINE_TO_COARSE

    def test_jobs(self, monkeypatch):
        monkeypatch.delenv("TEMPO_SNN_JOBS", raising=False)
        assert resolve_jobs() == 1
        monkeypatch.setenv("TEMPO_SNN_JOBS", "3")
        assert resolve_jobs() == 3
        assert resolve_jobs(2) == 2
        with pytest.raises(ValueError):
            resolve_jobs(0)
