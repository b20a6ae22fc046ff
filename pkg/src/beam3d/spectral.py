"""Short-time Fourier analysis and overlap-add synthesis.

Framing convention: frames start at sample 0 without centre padding, the last
frame is zero padded, and both analysis and synthesis use the square root of a
half-sample-shifted Hann window (``sin(pi (n + 1/2) / N)``), which is
constant-overlap-add at ``hop = n_fft / 2`` and never exactly zero, so the
first and last samples reconstruct too.

The transform kernel is ``exp(+j 2 pi k n / N)``: a propagation delay of
``t`` samples shows up as a phase of ``+2 pi k t / N``. Phase features and
steering vectors in this package follow the same sign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from beam3d.errors import ShapeError, SignalTooShortError

N_FFT = 512
HOP = 256


def sqrt_hann(n_fft: int) -> np.ndarray:
    """Return the square-root Hann analysis/synthesis window of length ``n_fft``."""
    return np.sin(np.pi * (np.arange(n_fft) + 0.5) / n_fft)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex multichannel short-time spectrum.

    Attributes:
        data: Complex array indexed ``[frame, bin, channel]``.
        fs: Sample rate in Hz.
        n_fft: Window length in samples.
        hop: Frame advance in samples.
        length: Length of the analysed signal, used to trim the synthesis.
    """

    data: np.ndarray
    fs: int = 16000
    n_fft: int = N_FFT
    hop: int = HOP
    length: int | None = None

    def __post_init__(self) -> None:
        """Check the array layout against the framing parameters."""
        if self.data.ndim != 3:
            raise ShapeError(
                f"Spectrogram data must be [frame, bin, channel], got {self.data.shape}"
            )
        if self.data.shape[1] != self.n_fft // 2 + 1:
            raise ShapeError(
                f"Expected {self.n_fft // 2 + 1} bins for n_fft={self.n_fft}, "
                f"got {self.data.shape[1]}"
            )

    @property
    def n_frames(self) -> int:
        """Number of frames T."""
        return int(self.data.shape[0])

    @property
    def n_bins(self) -> int:
        """Number of one-sided bins F."""
        return int(self.data.shape[1])

    @property
    def n_channels(self) -> int:
        """Number of channels M."""
        return int(self.data.shape[2])

    def channel(self, index: int) -> np.ndarray:
        """Return one channel as a ``[frame, bin]`` array."""
        if not -self.n_channels <= index < self.n_channels:
            raise ShapeError(f"Channel {index} out of range for {self.n_channels}")
        return self.data[:, :, index]

    def with_data(self, data: np.ndarray) -> Spectrogram:
        """Return a spectrogram with the same framing and new data."""
        return Spectrogram(data, self.fs, self.n_fft, self.hop, self.length)


def pad_edges(signal: np.ndarray, hop: int = HOP) -> np.ndarray:
    """Zero-pad ``hop`` samples before and after a ``(samples, ...)`` signal.

    With ``hop = n_fft / 2`` every original sample then lies under two frames
    whose squared windows sum to one, so a modified spectrum is resynthesised
    without the single-window gain of the outer half-frames. Undo with
    ``samples[hop : hop + length]``.
    """
    x = np.asarray(signal, dtype=float)
    widths = [(hop, hop)] + [(0, 0)] * (x.ndim - 1)
    return np.pad(x, widths)


def frame_count(length: int, n_fft: int = N_FFT, hop: int = HOP) -> int:
    """Number of frames covering ``length`` samples, including a padded tail."""
    return 1 + math.ceil((length - n_fft) / hop)


def stft(
    signal: np.ndarray, n_fft: int = N_FFT, hop: int = HOP, fs: int = 16000
) -> Spectrogram:
    """Analyse a ``(samples,)`` or ``(samples, channels)`` signal.

    Args:
        signal: Real time-domain samples, channels last.
        n_fft: Window and FFT length.
        hop: Frame advance.
        fs: Sample rate recorded on the result.

    Returns:
        One-sided spectrogram with ``n_fft // 2 + 1`` bins.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise ShapeError(f"Signal must be (samples, channels), got {x.shape}")
    length = x.shape[0]
    if length < n_fft:
        raise SignalTooShortError(
            f"Signal of {length} samples is shorter than one window ({n_fft})"
        )
    n_frames = frame_count(length, n_fft, hop)
    padded = np.zeros(((n_frames - 1) * hop + n_fft, x.shape[1]))
    padded[:length] = x
    # (frames, channels, n_fft) view, one frame every hop samples
    frames = sliding_window_view(padded, n_fft, axis=0)[::hop]
    spectra = np.conj(np.fft.rfft(frames * sqrt_hann(n_fft), axis=-1))
    return Spectrogram(
        np.ascontiguousarray(spectra.transpose(0, 2, 1)), fs, n_fft, hop, length
    )


def istft(spec: Spectrogram, length: int | None = None) -> np.ndarray:
    """Invert :func:`stft` by windowed overlap-add.

    Returns:
        Samples shaped ``(length, channels)``; ``length`` defaults to the
        analysed length stored on the spectrogram.
    """
    n_fft, hop = spec.n_fft, spec.hop
    window = sqrt_hann(n_fft)
    frames = np.fft.irfft(np.conj(spec.data), n=n_fft, axis=1) * window[None, :, None]
    total = (spec.n_frames - 1) * hop + n_fft
    out = np.zeros((total, spec.n_channels))
    norm = np.zeros(total)
    for t in range(spec.n_frames):
        start = t * hop
        out[start : start + n_fft] += frames[t]
        norm[start : start + n_fft] += window**2
    out /= np.maximum(norm, np.finfo(float).tiny)[:, None]
    target = length if length is not None else spec.length
    if target is not None:
        out = out[:target]
    return out
