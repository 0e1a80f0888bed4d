"""Image transforms feeding the classifier: Haar wavelet, FFT spectrum, resize.

The Haar decomposition is the orthonormal 2x2 filter bank: for a block
[[a, b], [c, d]] the subband samples are

    ll = (a + b + c + d) / 2      hl = (a - b + c - d) / 2
    lh = (a + b - c - d) / 2      hh = (a - b - c + d) / 2

which conserves energy exactly on even dimensions and inverts losslessly.
Odd dimensions are symmetric-padded to even before each level and cropped
again on reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError
from .render import normalize_unit
from .validation import as_image, as_image_stack


class TransformKind(Enum):
    IDENTITY = "identity"
    HAAR_WAVELET = "haar"
    FFT_SPECTRUM = "fft"

    @classmethod
    def parse(cls, value) -> "TransformKind":
        if isinstance(value, TransformKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigError(f"unknown transform {value!r} (choices: {choices})") from None


@dataclass
class WaveletDecomposition:
    """One level of Haar subbands; ``ll`` nests another level when levels > 1.

    ``input_shape`` is the (height, width) fed to this level before any
    padding, so reconstruction can crop back losslessly.
    """

    ll: Union[np.ndarray, "WaveletDecomposition"]
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray
    input_shape: tuple[int, int]

    @property
    def levels(self) -> int:
        inner = self.ll
        return 1 + (inner.levels if isinstance(inner, WaveletDecomposition) else 0)

    @property
    def ll_array(self) -> np.ndarray:
        """The deepest approximation band."""
        inner = self.ll
        return inner.ll_array if isinstance(inner, WaveletDecomposition) else inner


def _pad_even(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    if h % 2 == 0 and w % 2 == 0:
        return img
    return np.pad(img, ((0, h % 2), (0, w % 2)), mode="symmetric")


def haar_decompose(img, levels: int = 1) -> WaveletDecomposition:
    """Multi-level orthonormal Haar decomposition (recursing on the ll band)."""
    img = as_image(img)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h, w = img.shape
    if h < 2 or w < 2:
        raise ValueError(f"image dimensions must be >= 2, got {img.shape}")
    if min(h, w) < 2**levels:
        raise ValueError(f"image dimensions {img.shape} too small for {levels} levels")
    padded = _pad_even(img)
    a = padded[0::2, 0::2]
    b = padded[0::2, 1::2]
    c = padded[1::2, 0::2]
    d = padded[1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    hl = (a - b + c - d) / 2.0
    lh = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    top: Union[np.ndarray, WaveletDecomposition] = ll
    if levels > 1:
        top = haar_decompose(ll, levels - 1)
    return WaveletDecomposition(ll=top, lh=lh, hl=hl, hh=hh, input_shape=(h, w))


def haar_reconstruct(dec: WaveletDecomposition) -> np.ndarray:
    """Exact inverse of haar_decompose (up to float64 round-off)."""
    ll = haar_reconstruct(dec.ll) if isinstance(dec.ll, WaveletDecomposition) else dec.ll
    if not (ll.shape == dec.lh.shape == dec.hl.shape == dec.hh.shape):
        raise ValueError(
            f"subband shapes differ: {ll.shape}, {dec.lh.shape}, {dec.hl.shape}, {dec.hh.shape}"
        )
    sh, sw = ll.shape
    out = np.empty((2 * sh, 2 * sw), dtype=np.float64)
    out[0::2, 0::2] = (ll + dec.hl + dec.lh + dec.hh) / 2.0
    out[0::2, 1::2] = (ll - dec.hl + dec.lh - dec.hh) / 2.0
    out[1::2, 0::2] = (ll + dec.hl - dec.lh - dec.hh) / 2.0
    out[1::2, 1::2] = (ll - dec.hl - dec.lh + dec.hh) / 2.0
    h, w = dec.input_shape
    return out[:h, :w]


def wavelet_to_image(dec: WaveletDecomposition) -> np.ndarray:
    """Tile subbands into one image of the original size.

    Layout: ll top-left, hl top-right, lh bottom-left, hh bottom-right. Each
    subband is unit-normalized independently, detail bands after taking
    absolute values; a nested ll is tiled recursively.
    """
    if isinstance(dec.ll, WaveletDecomposition):
        ll_img = wavelet_to_image(dec.ll)
    else:
        ll_img = normalize_unit(dec.ll)
    top = np.hstack([ll_img, normalize_unit(np.abs(dec.hl))])
    bottom = np.hstack([normalize_unit(np.abs(dec.lh)), normalize_unit(np.abs(dec.hh))])
    full = np.vstack([top, bottom])
    h, w = dec.input_shape
    return full[:h, :w]


def dft2(img) -> np.ndarray:
    """Complex 2D discrete Fourier transform (unshifted bins)."""
    img = as_image(img)
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError(f"image dimensions must be >= 2, got {img.shape}")
    return np.fft.fft2(img)


def fft_magnitude(img) -> np.ndarray:
    """Center-shifted raw magnitudes |F(u, v)| with the DC bin at (H//2, W//2)."""
    return np.fft.fftshift(np.abs(dft2(img)))


def fft_spectrum(img) -> np.ndarray:
    """Log-compressed, unit-normalized magnitude spectrum: log(1 + |F|) shifted."""
    return normalize_unit(np.log1p(fft_magnitude(img)))


def resize_bilinear(img, out_w: int, out_h: int) -> np.ndarray:
    """Corner-aligned bilinear resampling; identity when dimensions match."""
    img = as_image(img)
    if out_w < 1 or out_h < 1:
        raise ValueError("target dimensions must be >= 1")
    h, w = img.shape
    if (out_h, out_w) == (h, w):
        return img.copy()

    def _axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))
        i0 = np.floor(pos).astype(int)
        i0 = np.minimum(i0, n_in - 1)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    x0, x1, fx = _axis_coords(w, out_w)
    y0, y1, fy = _axis_coords(h, out_h)
    rows = img[:, x0] * (1.0 - fx) + img[:, x1] * fx
    return rows[y0, :] * (1.0 - fy)[:, None] + rows[y1, :] * fy[:, None]


def apply_transform(img, kind: TransformKind, levels: int = 1) -> np.ndarray:
    """Apply one of the classifier input transforms to a single image."""
    kind = TransformKind.parse(kind)
    if kind is TransformKind.IDENTITY:
        return as_image(img).copy()
    if kind is TransformKind.HAAR_WAVELET:
        return wavelet_to_image(haar_decompose(img, levels=levels))
    return fft_spectrum(img)


class ImageTransformer(BaseEstimator, TransformerMixin):
    """Stateless transformer applying identity / Haar tiling / FFT spectrum."""

    def __init__(self, kind="identity", levels=1):
        self.kind = kind
        self.levels = levels

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        kind = TransformKind.parse(self.kind)
        stack = as_image_stack(X)
        return np.stack([apply_transform(img, kind, levels=self.levels) for img in stack])


class ImageResizer(BaseEstimator, TransformerMixin):
    """Resize every image to a fixed side and optionally unit-normalize it."""

    def __init__(self, out_width=64, out_height=64, normalize=True):
        self.out_width = out_width
        self.out_height = out_height
        self.normalize = normalize

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        stack = as_image_stack(X)
        out = [resize_bilinear(img, self.out_width, self.out_height) for img in stack]
        if self.normalize:
            out = [normalize_unit(img) for img in out]
        return np.stack(out)
