"""Dense float64 math with hand-written backward passes.

Parameters live in plain ``dict[str, np.ndarray]`` maps and their gradients in
a parallel dict with the same keys. Every forward function that needs a
backward pass returns a cache tuple consumed by its ``*_backward`` partner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float64


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class GradCheckError(RuntimeError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator (numpy's stable bit generator).

    PCG64 streams are identical across platforms for a given 64-bit seed, which
    is what the determinism tests rely on.
    """
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape if shape is not None else (fan_in, fan_out))


def _shape(x) -> tuple:
    return tuple(np.shape(x))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim < 1 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {_shape(a)} by {_shape(b)}")
    return a @ b


def matmul_backward(a: np.ndarray, b: np.ndarray, dout: np.ndarray):
    """Gradients of ``a @ b`` given dL/dout; ``a`` may carry leading batch axes."""
    da = dout @ b.T
    a2 = a.reshape(-1, a.shape[-1])
    db = a2.T @ dout.reshape(-1, dout.shape[-1])
    return da, db


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    if x.size == 0 or x.shape[axis] == 0:
        raise DimensionError("softmax of an empty vector")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(p: np.ndarray, dp: np.ndarray, axis: int = -1) -> np.ndarray:
    return p * (dp - np.sum(p * dp, axis=axis, keepdims=True))


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


# --------------------------------------------------------------------------
# GRU cell
#
# Gate blocks are packed column-wise in the order (update z, reset r, candidate n):
#   W: [d_in, 3H], U: [H, 3H], b: [3H]
#   z = sigmoid(x W_z + h U_z + b_z)
#   r = sigmoid(x W_r + h U_r + b_r)
#   n = tanh(x W_n + (r * h) U_n + b_n)
#   h' = (1 - z) * h + z * n
# --------------------------------------------------------------------------

def gru_cell(x: np.ndarray, h_prev: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray):
    H = h_prev.shape[-1]
    if W.shape != (x.shape[-1], 3 * H) or U.shape != (H, 3 * H) or b.shape != (3 * H,):
        raise DimensionError(
            f"gru_cell: x {_shape(x)}, h {_shape(h_prev)} incompatible with "
            f"W {_shape(W)}, U {_shape(U)}, b {_shape(b)}"
        )
    gx = x @ W + b
    gh = h_prev @ U[:, : 2 * H]
    z = sigmoid(gx[..., :H] + gh[..., :H])
    r = sigmoid(gx[..., H : 2 * H] + gh[..., H:])
    rh = r * h_prev
    n = np.tanh(gx[..., 2 * H :] + rh @ U[:, 2 * H :])
    h = (1.0 - z) * h_prev + z * n
    return h, (x, h_prev, z, r, rh, n)


def gru_cell_backward(dh: np.ndarray, cache, W: np.ndarray, U: np.ndarray):
    """Returns (dx, dh_prev, dW, dU, db) for a batch of rows."""
    x, h_prev, z, r, rh, n = cache
    H = h_prev.shape[-1]
    dz = dh * (n - h_prev)
    dn = dh * z
    dh_prev = dh * (1.0 - z)

    dan = dn * (1.0 - n * n)
    drh = dan @ U[:, 2 * H :].T
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)

    da = np.concatenate([daz, dar, dan], axis=-1)
    dx = da @ W.T
    dh_prev = dh_prev + da[..., : 2 * H] @ U[:, : 2 * H].T

    x2 = x.reshape(-1, x.shape[-1])
    h2 = h_prev.reshape(-1, H)
    da2 = da.reshape(-1, 3 * H)
    dW = x2.T @ da2
    dU = np.concatenate([h2.T @ da2[:, : 2 * H], rh.reshape(-1, H).T @ da2[:, 2 * H :]], axis=1)
    db = da2.sum(axis=0)
    return dx, dh_prev, dW, dU, db


# --------------------------------------------------------------------------
# Adam
# --------------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if state.lr <= 0:
        raise ValueError(f"learning rate must be positive, got {state.lr}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(f"gradient {name!r} has shape {g.shape}, parameter {params[name].shape}")

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name in sorted(grads):
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# --------------------------------------------------------------------------
# Finite-difference gradient check
# --------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: dict
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.max_rel_error.values())

    def failures(self) -> list:
        return [k for k, e in self.max_rel_error.items() if not e < self.tolerance]

    def __str__(self) -> str:
        lines = []
        for k, e in self.max_rel_error.items():
            lines.append(f"{'ok  ' if e < self.tolerance else 'FAIL'} {k:<16s} {e:.3e}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(
    loss_fn,
    params: dict,
    grads: dict,
    tolerance: float = 1e-5,
    step: float = 1e-6,
    names=None,
    floor: float = 1e-4,
) -> GradCheckReport:
    """Compare ``grads`` against central differences of ``loss_fn()``.

    ``loss_fn`` takes no arguments and reads ``params`` (which are perturbed in
    place and restored). Entries whose analytic and numeric gradients are both
    below ``floor`` in magnitude are compared absolutely against ``floor``.
    """
    base = loss_fn()
    if loss_fn() != base:
        raise GradCheckError("loss function is not deterministic")

    report = {}
    for name in names if names is not None else list(params):
        p = params[name]
        flat = p.reshape(-1)
        numeric = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus = loss_fn()
            flat[i] = orig - step
            minus = loss_fn()
            flat[i] = orig
            numeric[i] = (plus - minus) / (2.0 * step)
        err = relative_error(np.asarray(grads[name]).reshape(-1), numeric, floor)
        report[name] = float(err.max()) if err.size else 0.0
    return GradCheckReport(report, tolerance)
