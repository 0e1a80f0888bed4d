"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np


def as_image(arr, name: str = "image") -> np.ndarray:
    """Coerce ``arr`` to a 2D float64 array, rejecting empty or non-finite input."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"{name} must be 2D, got ndim={img.ndim}")
    if img.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite values")
    return img


def as_image_stack(X, name: str = "images") -> np.ndarray:
    """Coerce ``X`` to an (n, height, width) float64 stack of equally sized images."""
    if isinstance(X, np.ndarray) and X.ndim == 3:
        stack = X.astype(np.float64, copy=False)
        if stack.size == 0:
            raise ValueError(f"{name} must be non-empty")
        if not np.all(np.isfinite(stack)):
            raise ValueError(f"{name} contains non-finite values")
        return stack
    images = [as_image(x, name=f"{name}[{i}]") for i, x in enumerate(X)]
    if not images:
        raise ValueError(f"{name} must be non-empty")
    shape = images[0].shape
    for i, img in enumerate(images):
        if img.shape != shape:
            raise ValueError(f"{name}[{i}] has shape {img.shape}, expected {shape}")
    return np.stack(images)


def check_nonneg(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Reject images with negative intensities."""
    if np.min(img) < 0:
        raise ValueError(f"{name} contains negative intensities")
    return img
