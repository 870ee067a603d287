"""Independent oracles shared by the test suite.

Central finite differences are computed straight from repeated forward
evaluations, never through the autodiff path they are checking.
"""

from __future__ import annotations

import numpy as np

FD_STEP = 1e-5


def central_diff(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Gradient of scalar-valued f at x, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = out.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + step
        fp = f(x)
        xf[i] = orig - step
        fm = f(x)
        xf[i] = orig
        flat[i] = (fp - fm) / (2.0 * step)
    return out


def directional_diff(f, x: np.ndarray, v: np.ndarray, step: float = FD_STEP) -> float:
    """Directional derivative of scalar f at x along v via central differences."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return (f(x + step * v) - f(x - step * v)) / (2.0 * step)


def rel_err(a, b, floor: float = 1e-6) -> float:
    """Relative error with a floor so near-zero pairs compare absolutely."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def acf_reference(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Direct transcription of the biased ACF estimator."""
    x = np.asarray(x, dtype=np.float64)
    c = x - x.mean()
    denom = float(np.sum(c * c))
    return np.array([np.sum(c[: len(x) - k] * c[k:]) / denom for k in range(max_lag + 1)])


def lstm_cell_reference(Wi, Wf, Wc, Wo, bi, bf, bc, bo, x_t, h_prev, c_prev):
    """Scalar-level transcription of the four gate equations (numpy only)."""
    hx = np.concatenate([h_prev, x_t], axis=-1)

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    i_t = sig(hx @ Wi + bi)
    c_tilde = np.tanh(hx @ Wc + bc)
    f_t = sig(hx @ Wf + bf)
    o_t = sig(hx @ Wo + bo)
    c_t = f_t * c_prev + i_t * c_tilde
    h_t = o_t * np.tanh(c_t)
    return h_t, c_t
