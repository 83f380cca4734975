"""Minimal float64 neural-network layer: LSTM with projection, Adam, gradient checks.

Arrays follow a time-major layout. A sequence input is ``(T, D)`` or, for a
batch of equal-length sequences, ``(T, B, D)``; outputs mirror the input rank.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping

import numpy as np

# sigmoid gates first so they are activated in one contiguous slice
GATES = ("i", "f", "o", "g")


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is stable for large |x| and cheaper than exp
    return 0.5 * np.tanh(0.5 * x) + 0.5


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class LstmLayerParams:
    """One LSTM layer whose recurrent state is its projected output.

    ``W`` maps the concatenation ``[x_t, r_{t-1}]`` to the four stacked gate
    pre-activations in ``i, f, o, g`` order; ``P`` projects the cell output
    ``h_t`` down to ``r_t = P h_t + p``.
    """

    W: np.ndarray  # (4C, input_dim + proj_dim)
    b: np.ndarray  # (4C,)
    P: np.ndarray  # (proj_dim, cell_dim)
    p: np.ndarray  # (proj_dim,)

    @property
    def cell_dim(self) -> int:
        return self.P.shape[1]

    @property
    def proj_dim(self) -> int:
        return self.P.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[1] - self.proj_dim

    @classmethod
    def zeros(cls, input_dim: int, cell_dim: int, proj_dim: int) -> "LstmLayerParams":
        return cls(
            W=np.zeros((4 * cell_dim, input_dim + proj_dim)),
            b=np.zeros(4 * cell_dim),
            P=np.zeros((proj_dim, cell_dim)),
            p=np.zeros(proj_dim),
        )

    @classmethod
    def init(
        cls,
        input_dim: int,
        cell_dim: int,
        proj_dim: int,
        rng: np.random.Generator,
        forget_bias: float = 1.0,
    ) -> "LstmLayerParams":
        W = np.concatenate(
            [xavier_uniform(rng, cell_dim, input_dim + proj_dim) for _ in GATES]
        )
        b = np.zeros(4 * cell_dim)
        b[cell_dim : 2 * cell_dim] = forget_bias
        return cls(W=W, b=b, P=xavier_uniform(rng, proj_dim, cell_dim), p=np.zeros(proj_dim))

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b, "P": self.P, "p": self.p}

    def check(self) -> None:
        C, R = self.cell_dim, self.proj_dim
        if self.W.shape[0] != 4 * C or self.b.shape != (4 * C,) or self.p.shape != (R,):
            raise ValueError(
                f"inconsistent LSTM shapes W{self.W.shape} b{self.b.shape} "
                f"P{self.P.shape} p{self.p.shape}"
            )


@dataclass
class LstmCache:
    params: LstmLayerParams
    x: np.ndarray  # (T, B, In)
    r_prev: np.ndarray  # (T, B, R) recurrent input at each step
    act: np.ndarray  # (T, B, 4C) gate activations, i f o sigmoid then g tanh
    c: np.ndarray  # (T + 1, B, C), c[0] is the zero initial state
    tanh_c: np.ndarray  # (T, B, C)
    h: np.ndarray  # (T, B, C) pre-projection cell output
    squeeze: bool


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return x[:, None, :], True
    if x.ndim == 3:
        return x, False
    raise ValueError(f"expected (T, D) or (T, B, D) input, got shape {x.shape}")


def lstm_forward(params: LstmLayerParams, inputs: np.ndarray) -> tuple[np.ndarray, LstmCache]:
    """Run the layer over a whole sequence from zero state."""
    params.check()
    x, squeeze = _as_batch(inputs)
    T, B, In = x.shape
    if In != params.input_dim:
        raise ValueError(f"input dim {In} does not match layer input dim {params.input_dim}")
    C, R = params.cell_dim, params.proj_dim

    # input contribution for every step in one matmul; activated in place below
    act = (x.reshape(T * B, In) @ params.W[:, :In].T + params.b).reshape(T, B, 4 * C)
    WrT = np.ascontiguousarray(params.W[:, In:].T)
    PT = np.ascontiguousarray(params.P.T)

    out = np.empty((T, B, R))
    r_prev = np.empty((T, B, R))
    c = np.zeros((T + 1, B, C))
    tc = np.empty((T, B, C))
    h = np.empty((T, B, C))
    r = np.zeros((B, R))
    for t in range(T):
        r_prev[t] = r
        z = act[t]
        z += r @ WrT
        s = z[:, : 3 * C]
        s *= 0.5
        np.tanh(s, out=s)
        s *= 0.5
        s += 0.5
        g = z[:, 3 * C :]
        np.tanh(g, out=g)
        ct = c[t + 1]
        np.multiply(z[:, C : 2 * C], c[t], out=ct)
        ct += z[:, :C] * g
        np.tanh(ct, out=tc[t])
        np.multiply(z[:, 2 * C : 3 * C], tc[t], out=h[t])
        r = h[t] @ PT
        r += params.p
        out[t] = r

    cache = LstmCache(params, x, r_prev, act, c, tc, h, squeeze)
    return (out[:, 0, :] if squeeze else out), cache


def lstm_backward(
    cache: LstmCache, output_grads: np.ndarray
) -> tuple[Dict[str, np.ndarray], np.ndarray]:
    """Backpropagate through time. Returns ``(param_grads, input_grads)``."""
    dout, _ = _as_batch(output_grads)
    T, B, C = cache.tanh_c.shape
    params = cache.params
    R, In = params.proj_dim, params.input_dim
    if dout.shape != (T, B, R) or params.W.shape != (4 * C, In + R):
        raise ValueError("output grads or parameters do not match the cached forward pass")

    Wr = np.ascontiguousarray(params.W[:, In:])
    P = np.ascontiguousarray(params.P)
    dz_all = np.empty((T, B, 4 * C))
    dr_all = np.empty((T, B, R))
    dr_next = np.zeros((B, R))
    dc_next = np.zeros((B, C))
    for t in range(T - 1, -1, -1):
        dr = dr_all[t]
        np.add(dout[t], dr_next, out=dr)
        dh = dr @ P
        a = cache.act[t]
        tc = cache.tanh_c[t]
        dz = dz_all[t]
        np.multiply(dh, tc, out=dz[:, 2 * C : 3 * C])
        dc = dh * a[:, 2 * C : 3 * C]
        dc *= 1.0 - tc * tc
        dc += dc_next
        np.multiply(dc, a[:, 3 * C :], out=dz[:, :C])
        np.multiply(dc, cache.c[t], out=dz[:, C : 2 * C])
        np.multiply(dc, a[:, :C], out=dz[:, 3 * C :])
        s = a[:, : 3 * C]
        dz[:, : 3 * C] *= s * (1.0 - s)
        g = a[:, 3 * C :]
        dz[:, 3 * C :] *= 1.0 - g * g
        dc_next = dc * a[:, C : 2 * C]
        dr_next = dz @ Wr

    flat_dz = dz_all.reshape(T * B, 4 * C)
    flat_dr = dr_all.reshape(T * B, R)
    xr = np.concatenate([cache.x, cache.r_prev], axis=2).reshape(T * B, In + R)
    grads = {
        "W": flat_dz.T @ xr,
        "b": flat_dz.sum(axis=0),
        "P": flat_dr.T @ cache.h.reshape(T * B, C),
        "p": flat_dr.sum(axis=0),
    }
    dx = (flat_dz @ params.W[:, :In]).reshape(T, B, In)
    return grads, (dx[:, 0, :] if cache.squeeze else dx)


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_by_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Adam update of every tensor in ``params``.

    Raises NonFiniteGradient without touching params or state if any gradient
    is NaN or infinite.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {name!r}")
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    n_checked: int = 0


def finite_diff_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    eps: float = 1e-4,
    max_coords: int = 10_000,
    seed: int = 0,
    abs_floor: float = 1e-8,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_fn`` is re-evaluated after perturbing entries of ``params`` in
    place, so it must read the same arrays. Parameters with more than
    ``max_coords`` entries in total are checked on a seeded random subset.
    The relative error per coordinate is ``|a - n| / max(|a|, |n|, abs_floor)``.
    """
    coords = [(name, idx) for name, p in params.items() for idx in np.ndindex(p.shape)]
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(coords), size=max_coords, replace=False))
        coords = [coords[k] for k in keep]

    worst, worst_name = 0.0, ""
    for name, idx in coords:
        p = params[name]
        old = p[idx]
        p[idx] = old + eps
        up = loss_fn()
        p[idx] = old - eps
        down = loss_fn()
        p[idx] = old
        numeric = (up - down) / (2.0 * eps)
        a = float(analytic[name][idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), abs_floor)
        if err > worst:
            worst, worst_name = err, f"{name}{list(idx)}"
    return GradCheckReport(worst, worst_name, len(coords))
