"""Forecasting backbones with hand-written reverse-mode gradients.

Every model maps a batch ``(B, L, M, C)`` to ``(B, T, M)``. Parameters are
shared across cells: internally each cell's history is one row of a
``(B * M, L, C)`` array. ``forward_rows`` caches what ``backward_rows``
needs, so calls must alternate.
"""

from __future__ import annotations

import math

import numpy as np

PATCH_LEN = 4


class ConfigError(ValueError):
    pass


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def to_rows(x: np.ndarray) -> np.ndarray:
    b, l, m, c = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b * m, l, c)


def from_rows(y: np.ndarray, b: int, m: int) -> np.ndarray:
    return y.reshape(b, m, -1).transpose(0, 2, 1)


class Model:
    name = "model"

    def __init__(self, lookback: int, horizon: int, channels: int):
        self.lookback = lookback
        self.horizon = horizon
        self.channels = channels
        self.params: dict[str, np.ndarray] = {}
        self._cache: tuple = ()

    def forward_rows(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward_rows(self, dy: np.ndarray) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.lookback or x.shape[3] != self.channels:
            raise ValueError(f"{self.name}: expected (B, {self.lookback}, M, {self.channels}), got {x.shape}")
        b, _, m, _ = x.shape
        return from_rows(self.forward_rows(to_rows(x)), b, m)

    def get_state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k] = state[k].copy()

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


class NLinear(Model):
    """Last-value-normalised linear map over the look-back window.

    With several input channels a learned channel combination comes first;
    it starts at the raw channel so the multi-channel model initially
    coincides with its single-channel counterpart.
    """

    name = "NLinear"

    def __init__(self, lookback, horizon, channels, rng, hidden=None):
        super().__init__(lookback, horizon, channels)
        self.params["weight"] = _uniform(rng, lookback, (horizon, lookback))
        self.params["bias"] = _uniform(rng, lookback, (horizon,))
        if channels > 1:
            mix = np.zeros(channels)
            mix[0] = 1.0
            self.params["mix"] = mix

    def _mix(self) -> np.ndarray:
        return self.params["mix"] if "mix" in self.params else np.ones(1)

    def forward_rows(self, xs):
        xm = xs @ self._mix()
        last = xm[:, -1:]
        z = xm - last
        self._cache = (xs, z)
        return z @ self.params["weight"].T + self.params["bias"] + last

    def backward_rows(self, dy):
        xs, z = self._cache
        w = self.params["weight"]
        grads = {"weight": dy.T @ z, "bias": dy.sum(axis=0)}
        dz = dy @ w
        dxm = dz.copy()
        dxm[:, -1] += dy.sum(axis=1) - dz.sum(axis=1)
        if "mix" in self.params:
            grads["mix"] = dxm.ravel() @ xs.reshape(-1, xs.shape[2])
        return grads


class MLP(Model):
    """Two affine layers with a ReLU between, on the flattened history."""

    name = "MLP"

    def __init__(self, lookback, horizon, channels, rng, hidden=128):
        super().__init__(lookback, horizon, channels)
        d_in = lookback * channels
        self.params["w1"] = _uniform(rng, d_in, (d_in, hidden))
        self.params["b1"] = _uniform(rng, d_in, (hidden,))
        self.params["w2"] = _uniform(rng, hidden, (hidden, horizon))
        self.params["b2"] = _uniform(rng, hidden, (horizon,))

    def forward_rows(self, xs):
        flat = xs.reshape(xs.shape[0], -1)
        pre = flat @ self.params["w1"] + self.params["b1"]
        h = np.maximum(pre, 0.0)
        self._cache = (flat, pre, h)
        return h @ self.params["w2"] + self.params["b2"]

    def backward_rows(self, dy):
        flat, pre, h = self._cache
        dh = dy @ self.params["w2"].T
        dpre = dh * (pre > 0)
        return {"w1": flat.T @ dpre, "b1": dpre.sum(axis=0), "w2": h.T @ dy, "b2": dy.sum(axis=0)}


def softmax(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


class PatchMini(Model):
    """Patch embedding, one single-head attention block and a flatten head.

    Non-overlapping patches of four steps become tokens; each token gets a
    learned position embedding. Attention and the ReLU feed-forward sublayer
    each sit inside a residual connection.
    """

    name = "PatchMini"

    def __init__(self, lookback, horizon, channels, rng, hidden=128):
        super().__init__(lookback, horizon, channels)
        if lookback % PATCH_LEN:
            raise ConfigError(f"lookback {lookback} is not a multiple of the patch length {PATCH_LEN}")
        self.n_tokens = lookback // PATCH_LEN
        d, p_in = hidden, PATCH_LEN * channels
        self.width = d
        self.params.update({
            "embed": _uniform(rng, p_in, (p_in, d)),
            "embed_b": _uniform(rng, p_in, (d,)),
            "pos": _uniform(rng, d, (self.n_tokens, d)),
            "wq": _uniform(rng, d, (d, d)),
            "wk": _uniform(rng, d, (d, d)),
            "wv": _uniform(rng, d, (d, d)),
            "wo": _uniform(rng, d, (d, d)),
            "ff1": _uniform(rng, d, (d, d)),
            "ff1_b": _uniform(rng, d, (d,)),
            "ff2": _uniform(rng, d, (d, d)),
            "ff2_b": _uniform(rng, d, (d,)),
            "head": _uniform(rng, self.n_tokens * d, (self.n_tokens * d, horizon)),
            "head_b": _uniform(rng, self.n_tokens * d, (horizon,)),
        })
        self.last_attention: np.ndarray | None = None

    def forward_rows(self, xs):
        p = self.params
        r = xs.shape[0]
        patches = xs.reshape(r, self.n_tokens, PATCH_LEN * self.channels)
        e = patches @ p["embed"] + p["embed_b"] + p["pos"]
        q, k, v = e @ p["wq"], e @ p["wk"], e @ p["wv"]
        a = softmax(q @ k.transpose(0, 2, 1) / math.sqrt(self.width))
        o = a @ v
        h1 = e + o @ p["wo"]
        u = h1 @ p["ff1"] + p["ff1_b"]
        g = np.maximum(u, 0.0)
        h2 = h1 + g @ p["ff2"] + p["ff2_b"]
        flat = h2.reshape(r, -1)
        self.last_attention = a
        self._cache = (patches, e, q, k, v, a, o, h1, u, g, flat)
        return flat @ p["head"] + p["head_b"]

    def backward_rows(self, dy):
        p = self.params
        patches, e, q, k, v, a, o, h1, u, g, flat = self._cache
        d = self.width

        def wgrad(x, dout):
            return x.reshape(-1, x.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])

        grads = {"head": flat.T @ dy, "head_b": dy.sum(axis=0)}
        dh2 = (dy @ p["head"].T).reshape(h1.shape)
        grads["ff2"] = wgrad(g, dh2)
        grads["ff2_b"] = dh2.sum(axis=(0, 1))
        du = (dh2 @ p["ff2"].T) * (u > 0)
        grads["ff1"] = wgrad(h1, du)
        grads["ff1_b"] = du.sum(axis=(0, 1))
        dh1 = dh2 + du @ p["ff1"].T
        grads["wo"] = wgrad(o, dh1)
        do = dh1 @ p["wo"].T
        da = do @ v.transpose(0, 2, 1)
        dv = a.transpose(0, 2, 1) @ do
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) / math.sqrt(d)
        dq = ds @ k
        dk = ds.transpose(0, 2, 1) @ q
        grads["wq"] = wgrad(e, dq)
        grads["wk"] = wgrad(e, dk)
        grads["wv"] = wgrad(e, dv)
        de = dh1 + dq @ p["wq"].T + dk @ p["wk"].T + dv @ p["wv"].T
        grads["embed"] = wgrad(patches, de)
        grads["embed_b"] = de.sum(axis=(0, 1))
        grads["pos"] = de.sum(axis=0)
        return grads


MODELS: dict[str, type[Model]] = {"NLinear": NLinear, "MLP": MLP, "PatchMini": PatchMini}


def build_model(kind: str, lookback: int, horizon: int, channels: int, rng: np.random.Generator,
                hidden: int = 128) -> Model:
    try:
        cls = MODELS[kind]
    except KeyError:
        raise ConfigError(f"unknown model {kind!r}; choose from {sorted(MODELS)}") from None
    return cls(lookback, horizon, channels, rng, hidden=hidden)
