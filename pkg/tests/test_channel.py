import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetbeam.channel import (PathSet, Scenario, ScenarioError, active_antennas, apply_phase_error,
                             array_response, extract_partial, gen_dataset, gen_paths, load_dataset,
                             save_dataset, synth_channel, with_active)

from . import oracles

angles = st.floats(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6)


def random_paths(rng, n):
    return PathSet(rng.uniform(-1.5, 1.5, n), rng.uniform(0, 1, n), rng.uniform(0, 6.28, n),
                   rng.uniform(0, 1e-7, n))


class TestArrayResponse:
    def test_boresight(self):
        np.testing.assert_allclose(array_response(0.0, 4), 0.5 * np.ones(4))

    def test_endfire(self):
        np.testing.assert_allclose(array_response(np.pi / 2, 2), np.array([1, -1]) / np.sqrt(2), atol=1e-15)

    def test_matches_elementwise_oracle(self):
        np.testing.assert_allclose(array_response(0.3, 8), oracles.steering(0.3, 8), rtol=0, atol=1e-14)

    @given(angles, st.integers(1, 64))
    def test_unit_norm(self, phi, n):
        assert np.linalg.norm(array_response(phi, n)) == pytest.approx(1.0, abs=1e-12)


class TestPaths:
    def test_single_path_is_dominant(self):
        p = gen_paths(Scenario(N_c=1), (0, 0))
        assert len(p) == 1 and p.gains[0] == 1.0

    def test_deterministic_per_link(self):
        sc = Scenario(seed=4)
        a, b = gen_paths(sc, (1, 0)), gen_paths(sc, (1, 0))
        for x, y in zip((a.aods, a.gains, a.phases, a.delays), (b.aods, b.gains, b.phases, b.delays)):
            np.testing.assert_array_equal(x, y)
        assert not np.array_equal(a.aods, gen_paths(sc, (0, 1)).aods)

    def test_secondary_power(self):
        # 100 links x 1000 secondary paths
        sc = Scenario(N_c=1001)
        rng = np.random.default_rng(0)
        g = np.concatenate([gen_paths(sc, rng=rng).gains[1:] for _ in range(100)])
        assert g.size == 100_000
        assert np.mean(g ** 2) == pytest.approx(0.1, abs=0.01)

    def test_ranges(self):
        rng = np.random.default_rng(1)
        p = gen_paths(Scenario(N_c=500), rng=rng)
        assert np.all(np.abs(p.aods) < np.pi / 2)
        assert np.all(p.gains >= 0)
        assert np.all((p.delays >= 0) & (p.delays <= 100e-9))
        assert np.all((p.phases >= 0) & (p.phases < 2 * np.pi))
        assert len(p.aods) == len(p.gains) == len(p.phases) == len(p.delays) == 500


class TestSynth:
    def test_boresight_single_path(self):
        p = PathSet(np.zeros(1), np.ones(1), np.zeros(1), np.zeros(1))
        np.testing.assert_allclose(synth_channel(p, 4, 1e8), np.ones(4), atol=1e-15)

    def test_null_gains(self):
        p = random_paths(np.random.default_rng(0), 3)
        p = PathSet(p.aods, np.zeros(3), p.phases, p.delays)
        assert np.all(synth_channel(p, 8, 1e8) == 0)

    def test_matches_summation_oracle(self):
        p = random_paths(np.random.default_rng(2), 3)
        h = synth_channel(p, 16, 100e6)
        ref = oracles.channel(p.aods, p.gains, p.phases, p.delays, 16, 100e6)
        assert np.linalg.norm(h - ref) <= 1e-12 * np.linalg.norm(ref)

    @given(st.integers(0, 10_000), st.integers(1, 6))
    @settings(max_examples=50)
    def test_nonzero_energy(self, seed, nc):
        p = gen_paths(Scenario(N_c=nc), rng=np.random.default_rng(seed))
        assert np.linalg.norm(synth_channel(p, 8, 1e8)) ** 2 > 0

    @given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4))
    @settings(max_examples=50)
    def test_linear_in_paths(self, seed, na, nb):
        rng = np.random.default_rng(seed)
        a, b = random_paths(rng, na), random_paths(rng, nb)
        N, B = 12, 1e8
        lhs = synth_channel(a + b, N, B) * np.sqrt(na + nb)
        rhs = synth_channel(a, N, B) * np.sqrt(na) + synth_channel(b, N, B) * np.sqrt(nb)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_bands_share_direction(self):
        # with one path both bands peak at the same angle of a fine steering grid
        grid = np.linspace(-np.pi / 2, np.pi / 2, 4001)
        step = grid[1] - grid[0]
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = gen_paths(Scenario(N_c=1), rng=rng)
            est = []
            for N, B in ((64, 100e6), (32, 10e6)):
                h = synth_channel(p, N, B)
                A = np.exp(1j * np.pi * np.outer(np.sin(grid), np.arange(N)))
                est.append(grid[np.argmax(np.abs(A.conj() @ h))])
            assert abs(est[0] - est[1]) <= step + 1e-12


class TestPartial:
    def test_gather(self):
        h = np.array(["a", "b", "c", "d"])
        assert list(extract_partial(h, [0, 2])) == ["a", "c"]
        np.testing.assert_array_equal(extract_partial([1, 2j, 3, 4], [1, 3]), [2j, 4])

    def test_identity(self):
        h = np.arange(6) * 1j
        np.testing.assert_array_equal(extract_partial(h, range(6)), h)

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            extract_partial(np.zeros(4), [0, 4])

    @given(st.integers(1, 32), st.data())
    def test_idempotent(self, n, data):
        nb = data.draw(st.integers(0, n))
        idx = active_antennas(n, nb)
        h = np.arange(n) + 1j
        part = extract_partial(h, idx)
        np.testing.assert_array_equal(extract_partial(part, range(nb)), part)
        assert np.all(np.diff(idx) > 0) and (nb == 0 or (idx.min() >= 0 and idx.max() < n))

    def test_uniform_spacing(self):
        assert active_antennas(16, 4).tolist() == [0, 4, 8, 12]


class TestPhaseError:
    def test_zero_sigma(self):
        h = np.array([1 + 2j, 3 - 1j])
        np.testing.assert_array_equal(apply_phase_error(h, 0.0, np.random.default_rng(0)), h)

    @given(st.integers(0, 1000), st.floats(0, 90))
    @settings(max_examples=50)
    def test_magnitudes_kept(self, seed, sigma):
        rng = np.random.default_rng(seed)
        h = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        out = apply_phase_error(h, sigma, rng)
        np.testing.assert_allclose(np.abs(out), np.abs(h), atol=1e-12)
        # a single common rotation
        ratio = out / h
        np.testing.assert_allclose(ratio, ratio[0], atol=1e-12)

    def test_spread(self):
        rng = np.random.default_rng(0)
        theta = [np.degrees(np.angle(apply_phase_error(np.ones(1), 5.0, rng)[0])) for _ in range(10_000)]
        assert 4.8 <= np.std(theta) <= 5.2

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            apply_phase_error(np.ones(2), -1.0, np.random.default_rng(0))


class TestDataset:
    def test_single_sample(self):
        ds = gen_dataset(Scenario(), 1)
        assert len(ds) == 1
        ds.check()

    def test_deterministic(self):
        a, b = gen_dataset(Scenario(seed=3), 3), gen_dataset(Scenario(seed=3), 3)
        for x, y in zip(a.samples, b.samples):
            np.testing.assert_array_equal(x.mm_full, y.mm_full)
            np.testing.assert_array_equal(x.sub6, y.sub6)

    def test_shapes_and_partial(self):
        sc = Scenario(K=3, I=(1, 2, 3), P=(1, 2, 3), N_bar=5)
        s = gen_dataset(sc, 1).samples[0]
        assert s.sub6.shape == (6, sc.N_s) and s.mm_full.shape == (6, 3, sc.N_m)
        for u in range(6):
            for b in range(3):
                for j, a in enumerate(s.active_idx):
                    assert s.mm_partial[u, b, j] == s.mm_full[u, b, a]

    def test_sub6_shares_serving_paths(self):
        sc = Scenario(N_c=1, N_s=64, N_m=64)
        s = gen_dataset(sc, 1).samples[0]
        for u, k in enumerate(sc.serving):
            # same single path: equal magnitude profile across bands for equal arrays
            np.testing.assert_allclose(np.abs(s.sub6[u]), np.abs(s.mm_full[u, k]), atol=1e-12)

    def test_roundtrip_and_bytes(self, tmp_path):
        ds = gen_dataset(Scenario(N_bar=3), 4)
        save_dataset(ds, tmp_path / "a")
        save_dataset(gen_dataset(Scenario(N_bar=3), 4), tmp_path / "b")
        for ext in ("json", "bin"):
            assert (tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()
        back = load_dataset(tmp_path / "a")
        assert back.scenario == ds.scenario
        for x, y in zip(ds.samples, back.samples):
            np.testing.assert_array_equal(x.mm_full, y.mm_full)
            np.testing.assert_array_equal(x.mm_partial, y.mm_partial)
            np.testing.assert_array_equal(x.active_idx, y.active_idx)
        blob = (tmp_path / "a.bin").read_bytes()
        assert len(blob) % 8 == 0

    def test_with_active(self):
        ds = gen_dataset(Scenario(N_bar=4), 2)
        v = with_active(ds, 0)
        assert v.scenario.N_bar == 0 and v.samples[0].mm_partial.shape == (4, 2, 0)
        np.testing.assert_array_equal(v.samples[1].mm_full, ds.samples[1].mm_full)


class TestScenario:
    def test_defaults(self):
        sc = Scenario()
        assert sc.N_rf == sc.I == (2, 2)
        assert sc.serving.tolist() == [0, 0, 1, 1] and sc.slot.tolist() == [0, 1, 0, 1]

    def test_lists_every_problem(self):
        with pytest.raises(ScenarioError) as e:
            Scenario(N_bar=40, sigma2=0, P=(1, -1), N_c=0)
        assert len(e.value.problems) == 4

    def test_partially_needs_divisible_blocks(self):
        with pytest.raises(ScenarioError):
            Scenario(I=(3, 2), structure="partially")
        Scenario(I=(3, 2), structure="fully")
