"""Reference forecasters computed directly from the data."""

from __future__ import annotations

import numpy as np

from .dataio import Windows


def persistence(inputs: np.ndarray, horizon: int) -> np.ndarray:
    """Repeat the last observed value of each channel."""
    return np.repeat(inputs[:, -1:, :], horizon, axis=1)


class LinearBaseline:
    """Per-channel least-squares map from the input window to the horizon.

    One ``(T_s + 1) x T_p`` weight matrix (with intercept) is shared by all
    channels and fitted on raw values with ``numpy.linalg.lstsq``.
    """

    def __init__(self):
        self.coef: np.ndarray | None = None

    def fit(self, data: Windows) -> "LinearBaseline":
        X = np.moveaxis(data.inputs, 2, 1).reshape(-1, data.inputs.shape[1])
        Y = np.moveaxis(data.targets, 2, 1).reshape(-1, data.targets.shape[1])
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        self.coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
        return self

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        B, T, C = inputs.shape
        X = np.moveaxis(inputs, 2, 1).reshape(-1, T)
        X = np.hstack([X, np.ones((X.shape[0], 1))])
        Y = X @ self.coef
        return np.moveaxis(Y.reshape(B, C, -1), 1, 2)
