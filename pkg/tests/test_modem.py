import numpy as np
import pytest
from hypothesis import given, strategies as st

from cddm.chirp_zak import ChirpKind, GridDims, czt, iczt, idfnt, precompute_basis
from cddm.modem import (BasebandSignal, PulseSpec, add_cp, dd_to_time, matched_filter, psd,
                        pulse_shape, rect_shape, srrc, strip_cp, time_to_dd, write_psd_csv)
from conftest import random_qpsk
from oracles import izak

SPEC = PulseSpec(rolloff=0.1, span_symbols=16, oversample=4)


class TestGridConversion:
    def test_matches_inverse_zak(self, rng):
        frame = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
        assert np.allclose(dd_to_time(frame), izak(frame), atol=1e-12)

    def test_czt_frame_gives_fresnel_synthesis(self, rng):
        dims = GridDims(16, 4)
        x = random_qpsk(rng, dims.n)
        assert np.allclose(dd_to_time(czt(x, precompute_basis(dims, ChirpKind.dfnt()))), idfnt(x), atol=1e-10)

    def test_impulse_and_zero(self):
        frame = np.zeros((8, 4), dtype=complex)
        assert not np.any(dd_to_time(frame))
        frame[0, 0] = 1
        s = dd_to_time(frame)
        assert np.allclose(s[::8], 0.5) and np.count_nonzero(np.abs(s) > 1e-15) == 4
        y = np.zeros(32, dtype=complex)
        y[0] = 1
        z = time_to_dd(y, GridDims(8, 4))
        assert np.allclose(z[0], 0.5) and np.allclose(z[1:], 0)

    @given(st.integers(0, 2 ** 32 - 1))
    def test_unitary_pair(self, seed):
        rng = np.random.default_rng(seed)
        dims = GridDims(16, 8)
        frame = rng.standard_normal(dims.shape) + 1j * rng.standard_normal(dims.shape)
        s = dd_to_time(frame)
        assert np.max(np.abs(time_to_dd(s, dims) - frame)) < 1e-12
        assert np.vdot(s, s).real == pytest.approx(np.vdot(frame, frame).real, rel=1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            dd_to_time(np.zeros(8))
        with pytest.raises(ValueError):
            time_to_dd(np.zeros(31), GridDims(8, 4))


class TestCyclicPrefix:
    def test_definition(self):
        x = np.array(list("abcdef"), dtype=object)
        assert "".join(add_cp(x, 3)) == "defabcdef"
        assert "".join(add_cp(x, 0)) == "abcdef"

    def test_inverse_and_bounds(self, rng):
        x = rng.standard_normal(16)
        assert np.array_equal(strip_cp(add_cp(x, 5), 5), x)
        with pytest.raises(ValueError):
            add_cp(x, 17)


class TestPulse:
    def test_energy_constraint(self):
        dims = GridDims(512, 32)
        taps = SPEC.scaled_taps(dims)
        dt = 66.67e-6 / (512 * 4)
        assert np.sum(np.abs(taps) ** 2) * dt == pytest.approx(1 / 32, rel=1e-6)

    def test_taps_close_to_srrc(self):
        plain = PulseSpec(0.1, 16, 4, nyquist_correct=False).taps()
        t = np.arange(-64, 65) / 4
        ref = srrc(t, 0.1)
        assert np.allclose(plain, ref / np.linalg.norm(ref))
        assert np.max(np.abs(SPEC.taps() - plain)) < 5e-3
        assert np.allclose(SPEC.taps(), SPEC.taps()[::-1])

    def test_srrc_special_points(self):
        # t = 0 and t = 1/(4 rolloff) use the limiting forms; compare with a nearby evaluation
        for t0 in (0.0, 2.5):
            assert srrc(np.array([t0]), 0.1)[0] == pytest.approx(srrc(np.array([t0 + 1e-7]), 0.1)[0], rel=1e-5)

    def test_impulse_response(self):
        x = np.zeros(8, dtype=complex)
        x[0] = 1
        out = pulse_shape(x, SPEC).samples
        assert np.allclose(out[:SPEC.taps().size], SPEC.taps())

    def test_linearity(self, rng):
        x, y = rng.standard_normal(64) + 0j, rng.standard_normal(64) + 1j
        a, b = 0.3 - 2j, 1.7
        lhs = pulse_shape(a * x + b * y, SPEC).samples
        rhs = a * pulse_shape(x, SPEC).samples + b * pulse_shape(y, SPEC).samples
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_energy_preserved(self, rng):
        x = random_qpsk(rng, 4096)
        out = pulse_shape(x, SPEC).samples
        assert np.vdot(out, out).real / np.vdot(x, x).real == pytest.approx(1.0, rel=1e-3)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            PulseSpec(rolloff=1.5)
        with pytest.raises(ValueError):
            PulseSpec(oversample=0)


class TestMatchedFilter:
    def test_full_loopback(self, rng):
        dims = GridDims(64, 8)
        basis = precompute_basis(dims, ChirpKind.dfnt())
        x = random_qpsk(rng, dims.n)
        frame = czt(x, basis)
        sig = pulse_shape(add_cp(dd_to_time(frame), 4), SPEC, cp_len=4)
        recovered = time_to_dd(matched_filter(sig, SPEC, dims.n), dims)
        assert np.max(np.abs(recovered - frame)) < 1e-3 * np.max(np.abs(frame))
        x_hat = iczt(recovered, basis)
        assert np.max(np.abs(x_hat - x)) < 1e-3
        assert np.array_equal(np.sign(x_hat.real), np.sign(x.real))

    def test_zero_signal(self):
        sig = pulse_shape(np.zeros(64, dtype=complex), SPEC)
        assert not np.any(matched_filter(sig, SPEC, 64))

    def test_too_short(self):
        with pytest.raises(ValueError):
            matched_filter(BasebandSignal(np.zeros(20, dtype=complex), 1.0), SPEC)

    def test_white_noise_stays_white(self):
        rng = np.random.default_rng(3)
        q = SPEC.oversample
        dims = GridDims(32, 8)
        acc = np.zeros(dims.shape)
        draws = 400
        for _ in range(draws):
            w = (rng.standard_normal(dims.n * q + 2 * SPEC.delay) + 1j * rng.standard_normal(dims.n * q + 2 * SPEC.delay))
            out = matched_filter(BasebandSignal(w, 1.0), SPEC, dims.n)
            acc += np.abs(time_to_dd(out, dims)) ** 2
        var = acc / draws
        assert np.max(var) / np.min(var) < 1.35  # per-cell estimate noise only
        assert abs(var.mean() / 2 - 1) < 0.1


class TestPsd:
    def test_tone_peak(self):
        fs, f0, n = 1000.0, 125.0, 8192
        t = np.arange(n) / fs
        f, p = psd(BasebandSignal(np.exp(2j * np.pi * f0 * t), fs), nfft=256)
        assert abs(f[np.argmax(p)] - f0) <= fs / 256
        assert p.max() == 0.0

    def test_white_noise_flat(self):
        rng = np.random.default_rng(1)
        w = rng.standard_normal(2 ** 18) + 1j * rng.standard_normal(2 ** 18)
        _, p = psd(BasebandSignal(w, 1.0), nfft=256)
        assert p.max() - p.min() < 2.0

    def test_row_count_and_errors(self, tmp_path):
        sig = BasebandSignal(np.ones(4096, dtype=complex), 1.0)
        f, p = psd(sig, nfft=512)
        assert f.shape == p.shape == (257,)
        with pytest.raises(ValueError):
            psd(sig, nfft=8192)
        path = tmp_path / "psd.csv"
        write_psd_csv(path, f, p)
        lines = path.read_text().splitlines()
        assert lines[0] == "freq_hz,power_db" and len(lines) == 258

    def test_oobe_against_hold(self, rng):
        dims = GridDims(512, 32)
        basis = precompute_basis(dims, ChirpKind.dfnt())
        s = add_cp(dd_to_time(czt(random_qpsk(rng, dims.n), basis)), 16)
        fs = dims.m_d / 66.67e-6
        f, shaped = psd(pulse_shape(s, SPEC, fs, 16), 1024)
        _, held = psd(rect_shape(s, 4, fs, 16), 1024)
        edge = 1.5 * (1 + SPEC.rolloff) / 2 * fs
        i = np.argmin(np.abs(f - edge))
        assert held[i] - shaped[i] >= 20
        beyond = f > 0.6 * fs
        assert np.all(shaped[beyond] <= held[beyond])
        inband = f < 0.45 * fs
        assert shaped[inband].max() - shaped[inband].min() < 3
