import numpy as np
import pytest

from beam3d.errors import ShapeError, SignalTooShortError
from beam3d.spectral import Spectrogram, frame_count, istft, pad_edges, sqrt_hann, stft

FS = 16000


def test_four_seconds_give_257_bins() -> None:
    spec = stft(np.zeros(4 * FS))
    assert spec.n_bins == 257
    assert spec.n_frames == frame_count(4 * FS) == 249
    assert spec.n_channels == 1


def test_zeros_in_zeros_out() -> None:
    spec = stft(np.zeros((4000, 2)))
    assert not np.any(spec.data)
    assert not np.any(istft(spec))


def test_bin_centred_tone_peaks_at_its_bin() -> None:
    n = np.arange(FS)
    spec = stft(np.cos(2 * np.pi * 10 * n / 512))
    magnitudes = np.abs(spec.channel(0))[1:-1]
    assert np.all(np.argmax(magnitudes, axis=1) == 10)


def test_window_is_constant_overlap_add() -> None:
    window = sqrt_hann(512)
    overlap = window[:256] ** 2 + window[256:] ** 2
    np.testing.assert_allclose(overlap, 1.0, atol=1e-12)
    assert window.min() > 0.0


def test_perfect_reconstruction() -> None:
    rng = np.random.default_rng(0)
    worst = 0.0
    for k in range(100):
        signal = rng.standard_normal((4 * FS + k % 7, 1 + k % 3))
        out = istft(stft(signal))
        assert out.shape == signal.shape
        worst = max(worst, float(np.max(np.abs(out - signal))))
    assert worst < 1e-6


def test_frame_energy_matches_signal_energy() -> None:
    rng = np.random.default_rng(2)
    signal = np.zeros(FS)
    # every non-zero sample is covered by two frames whose squared windows sum to one
    signal[256 : FS - 512] = rng.standard_normal(FS - 768)
    spec = stft(signal)
    fold = np.full(spec.n_bins, 2.0)
    fold[[0, -1]] = 1.0
    energy = float(np.sum(fold * np.abs(spec.channel(0)) ** 2)) / 512
    assert energy == pytest.approx(float(signal @ signal), rel=1e-10)


def test_padded_edges_resynthesise_masked_spectra_without_gain() -> None:
    rng = np.random.default_rng(4)
    signal = rng.standard_normal((FS + 100, 2))
    spec = stft(pad_edges(signal))
    assert spec.length == FS + 100 + 512
    mask = rng.uniform(0.0, 1.0, spec.data.shape[:2])
    out = istft(spec.with_data(mask[..., None] * spec.data))[256 : 256 + FS + 100]
    interior = float(np.sqrt(np.mean(out[1000:-1000] ** 2)))
    for edge in (out[:128], out[-128:]):
        assert float(np.sqrt(np.mean(edge**2))) < 2.0 * interior
    np.testing.assert_allclose(istft(stft(pad_edges(signal)))[256:-256], signal, atol=1e-9)


def test_linearity() -> None:
    rng = np.random.default_rng(1)
    signal = rng.standard_normal(3000)
    np.testing.assert_allclose(istft(stft(0.5 * signal)), 0.5 * istft(stft(signal)), atol=1e-9)


def test_delay_shows_as_positive_phase() -> None:
    rng = np.random.default_rng(2)
    x = rng.standard_normal(FS)
    delayed = np.concatenate([np.zeros(3), x[:-3]])
    spec = stft(np.stack([x, delayed], axis=-1))
    k = np.arange(spec.n_bins)
    cross = np.sum(spec.channel(1) * np.conj(spec.channel(0)), axis=0)
    expected = np.exp(1j * 2 * np.pi * k * 3 / 512)
    # cross spectrum phase of the delayed channel follows +2 pi k t / N
    assert np.mean(np.cos(np.angle(cross) - np.angle(expected))[1:200]) > 0.95


def test_short_signal_is_rejected() -> None:
    with pytest.raises(SignalTooShortError):
        stft(np.zeros(100))
    with pytest.raises(ShapeError):
        stft(np.zeros(100))


def test_inconsistent_layout_is_rejected() -> None:
    with pytest.raises(ShapeError):
        Spectrogram(np.zeros((4, 100, 2), dtype=complex))
    with pytest.raises(ShapeError):
        Spectrogram(np.zeros((4, 257), dtype=complex))
