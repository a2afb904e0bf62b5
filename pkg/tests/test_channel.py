import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cddm.chirp_zak import GridDims
from cddm.channel import (DDChannel, PathTap, add_awgn, apply_dd, apply_time, build_H, eva_channel,
                          eva_delay_taps, ls_equalize, max_doppler_tap, noise_variance,
                          read_channel_csv, write_channel_csv)
from cddm.modem import add_cp, dd_to_time, strip_cp, time_to_dd
from oracles import twisted

DIMS = GridDims(8, 4)


def random_channel(rng, dims, count):
    cells = set()
    while len(cells) < count:
        cells.add((int(rng.integers(0, dims.m_d // 2)), int(rng.integers(-dims.n_d // 2 + 1, dims.n_d // 2 + 1))))
    gains = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    return DDChannel.from_taps([(l, k, g) for (l, k), g in zip(sorted(cells), gains)], dims)


class TestEquivalence:
    @settings(max_examples=25)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
    def test_three_forms_agree_with_oracle(self, seed, count):
        rng = np.random.default_rng(seed)
        ch = random_channel(rng, DIMS, count)
        frame = rng.standard_normal(DIMS.shape) + 1j * rng.standard_normal(DIMS.shape)
        ref = twisted(frame, [(p.l, p.k, p.h) for p in ch.paths])
        assert np.max(np.abs(apply_dd(frame, ch) - ref)) < 1e-10
        assert np.max(np.abs(build_H(ch).matvec(frame.reshape(-1)).reshape(DIMS.shape) - ref)) < 1e-10
        cp = ch.max_delay
        y = strip_cp(apply_time(add_cp(dd_to_time(frame), cp), ch, cp), cp)
        assert np.max(np.abs(time_to_dd(y, DIMS) - ref)) < 1e-10

    def test_identity_and_zero(self, rng):
        frame = rng.standard_normal(DIMS.shape) + 0j
        assert np.allclose(apply_dd(frame, DDChannel.identity(DIMS)), frame)
        assert not np.any(apply_dd(np.zeros(DIMS.shape), random_channel(rng, DIMS, 2)))

    def test_time_matrix_matches_dd_matrix(self, rng):
        ch = random_channel(rng, GridDims(16, 4), 3)
        H = build_H(ch)
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        via_time = time_to_dd(H.time @ dd_to_time(x.reshape(16, 4)), ch.dims).reshape(-1)
        assert np.allclose(H.matvec(x), via_time)

    def test_block_structure(self):
        dims = GridDims(8, 4)
        ch = DDChannel.from_taps([(2, 1, 0.5 - 1j)], dims)
        H = build_H(ch).toarray()
        c1 = np.roll(np.eye(4), 1, axis=0)
        d = np.diag(np.exp(-2j * np.pi * np.arange(4) / 4))
        for m in range(8):
            src = (m - 2) % 8
            block = H[m * 4:(m + 1) * 4, src * 4:(src + 1) * 4]
            expect = (0.5 - 1j) * np.exp(2j * np.pi * (m - 2) / 32) * c1
            if m < 2:
                expect = expect @ d
            assert np.allclose(block, expect)
        assert build_H(ch).d_blocks() == {(0, 6), (1, 7)}
        assert np.count_nonzero(H) == 32

    def test_unitary_for_single_path(self, rng):
        H = build_H(DDChannel.from_taps([(3, -1, 1.0)], GridDims(8, 4))).toarray()
        assert np.allclose(H.conj().T @ H, np.eye(32))


class TestValidation:
    def test_rejects_duplicates_and_range(self):
        with pytest.raises(ValueError, match="duplicate"):
            DDChannel.from_taps([(1, 1, 1), (1, 1, 2)], DIMS)
        with pytest.raises(ValueError):
            DDChannel.from_taps([(8, 0, 1)], DIMS)
        with pytest.raises(ValueError):
            DDChannel.from_taps([(0, -2, 1)], DIMS)
        with pytest.raises(ValueError):
            apply_dd(np.zeros((4, 4)), DDChannel.identity(DIMS))

    def test_cp_too_short(self):
        ch = DDChannel.from_taps([(3, 0, 1)], DIMS)
        with pytest.raises(ValueError):
            apply_time(np.zeros(34), ch, 2)

    def test_large_matrix_not_densified(self):
        with pytest.raises(ValueError):
            build_H(DDChannel.identity(GridDims(128, 64))).toarray()


class TestEva:
    def test_delay_taps(self):
        assert eva_delay_taps(GridDims(512, 32), 66.67e-6) == [0, 2, 5, 8]

    def test_doppler_tap(self):
        dims = GridDims(512, 32)
        assert max_doppler_tap(500, 5e9, dims, 66.67e-6) == 5
        assert max_doppler_tap(0, 5e9, dims, 66.67e-6) == 0
        assert max_doppler_tap(500, 5e9, GridDims(128, 128), 66.67e-6) == 20

    def test_draws(self):
        dims = GridDims(512, 32)
        rng = np.random.default_rng(5)
        power = np.zeros(4)
        draws = 4000
        for _ in range(draws):
            ch = eva_channel(500, 5e9, dims, rng, 66.67e-6)
            assert [p.l for p in ch.paths] == [0, 2, 5, 8]
            assert all(abs(p.k) <= 5 for p in ch.paths)
            power += [abs(p.h) ** 2 for p in ch.paths]
        pdp = 10 ** (np.array([0, -3.6, -9.1, -7.0]) / 10)
        assert np.allclose(power / draws, pdp / pdp.sum(), rtol=0.1)

    def test_zero_speed_is_static(self, rng):
        ch = eva_channel(0, 5e9, GridDims(512, 32), rng, 66.67e-6)
        assert all(p.k == 0 for p in ch.paths)

    def test_collision_resolution(self, rng):
        # 64x16 maps the two late taps onto one delay bin
        dims = GridDims(64, 16)
        delays = eva_delay_taps(dims, 66.67e-6)
        assert len(set(delays)) < 4
        for _ in range(50):
            ch = eva_channel(500, 5e9, dims, rng, 66.67e-6)
            assert len({(p.l, p.k) for p in ch.paths}) == 4
        with pytest.raises(RuntimeError):
            eva_channel(0, 5e9, dims, rng, 66.67e-6)


class TestNoise:
    def test_variance_formula(self):
        assert noise_variance(1.0, 0.0, 2) == pytest.approx(0.5)
        assert noise_variance(2.0, 10.0, 2, 0.5) == pytest.approx(0.2)

    def test_measured_snr(self):
        rng = np.random.default_rng(2)
        x = np.exp(2j * np.pi * rng.random(400_000))
        y, var = add_awgn(x, 7.0, 2, 1.0, rng)
        measured = 10 * np.log10(1 / (2 * np.mean(np.abs(y - x) ** 2)))
        assert abs(measured - 7.0) < 0.05
        assert var == pytest.approx(noise_variance(1.0, 7.0, 2))
        w = y - x
        assert abs(np.mean(w.real ** 2) - np.mean(w.imag ** 2)) < 0.02 * var

    def test_reference_and_errors(self, rng):
        x = np.ones(100, dtype=complex)
        _, var = add_awgn(x, 0.0, 2, 1.0, rng, reference=2 * x)
        assert var == pytest.approx(2.0)
        with pytest.raises(ValueError):
            add_awgn(x, float("inf"), 2, 1.0, rng)


class TestEqualizer:
    def test_exact_without_noise(self, rng):
        ch = random_channel(rng, GridDims(8, 4), 3)
        H = build_H(ch)
        x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        assert np.allclose(ls_equalize(H.matvec(x), H), x, atol=1e-8)

    def test_dense_and_sparse_agree(self, rng):
        ch = random_channel(rng, GridDims(16, 8), 3)
        H = build_H(ch)
        y = rng.standard_normal(128) + 1j * rng.standard_normal(128)
        for reg in (0.0, 0.1):
            a = ls_equalize(y, H, reg, "dense")
            b = ls_equalize(y, H, reg, "sparse")
            assert np.allclose(a, b, atol=1e-9)

    @given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 10))
    def test_ridge_shrinks(self, seed, reg):
        rng = np.random.default_rng(seed)
        ch = random_channel(rng, GridDims(8, 4), 2)
        H = build_H(ch)
        y = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        small = ls_equalize(y, H, reg)
        large = ls_equalize(y, H, 2 * reg)
        assert np.linalg.norm(large) <= np.linalg.norm(small) * (1 + 1e-9)

    def test_singular_rejected(self):
        dims = GridDims(4, 2)
        ch = DDChannel.from_taps([(0, 0, 1), (0, 1, 1)], dims)  # C^0 + C^1 on two bins is singular
        for method in ("dense", "sparse"):
            with pytest.raises(np.linalg.LinAlgError):
                ls_equalize(np.ones(8), build_H(ch), method=method)
        with pytest.raises(ValueError):
            ls_equalize(np.ones(8), build_H(ch), reg=-1)


class TestChannelCsv:
    def test_roundtrip(self, tmp_path, rng):
        dims = GridDims(16, 8)
        chans = {t: random_channel(rng, dims, 3) for t in range(4)}
        path = tmp_path / "ch.csv"
        write_channel_csv(path, ((t, c.paths) for t, c in chans.items()))
        assert path.read_text().splitlines()[0] == "trial,p,l,k,re(h),im(h)"
        back = read_channel_csv(path, dims)
        assert back.keys() == chans.keys()
        for t, c in chans.items():
            for p, q in zip(c.paths, back[t].paths):
                assert (p.l, p.k) == (q.l, q.k) and abs(p.h - q.h) < 1e-8 * abs(p.h)

    def test_power(self):
        ch = DDChannel((PathTap(0, 0, 3 + 4j), PathTap(1, 0, 1)), DIMS)
        assert ch.power() == pytest.approx(26)
        assert ch.as_map() == {(0, 0): 3 + 4j, (1, 0): 1}
