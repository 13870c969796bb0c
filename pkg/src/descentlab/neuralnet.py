"""Policy and value networks with hand-written backpropagation.

Four layers: dense-tanh, a gated recurrent cell, dense-tanh, linear output.
Layer widths follow the observation/action dimensions: n_h1 = 10*obs_dim,
n_h3 = 10*act_dim (policy) or 5 (value), n_h2 = round(sqrt(n_h1*n_h3)).

The recurrent cell convention, with [a, b] meaning concatenation:

    z = sigmoid([x, h] Wz + bz)
    u = sigmoid([x, h] Wr + br)
    c = tanh([x, u*h] Wc + bc)
    h' = (1 - z)*h + z*c

so all-zero weights give h' = 0.5*h.  A non-recurrent variant replaces the
cell with a dense tanh layer of the same width (used by the memoryless
policies).

Gradients are exact: backpropagation through time over a segment, truncated
at the segment boundary (the incoming hidden state is treated as a
constant).  Everything is float64 numpy; forward passes on frozen weights
are safe to run concurrently.

The policy head is a Gaussian with state-independent learned log standard
deviations, one per action dimension.
"""

from __future__ import annotations

import io
import math
import struct

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def layer_sizes(obs_dim: int, act_dim: int, network_kind: str):
    """(n_h1, n_h2, n_h3, n_out) for 'policy' or 'value' networks."""
    if obs_dim < 1 or act_dim < 1:
        raise ValueError("obs_dim and act_dim must be >= 1")
    n_h1 = 10 * obs_dim
    if network_kind == "policy":
        n_h3, n_out = 10 * act_dim, act_dim
    elif network_kind == "value":
        n_h3, n_out = 5, 1
    else:
        raise ValueError(f"unknown network kind {network_kind!r}")
    n_h2 = int(round(math.sqrt(n_h1 * n_h3)))
    return n_h1, n_h2, n_h3, n_out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _dense_init(rng, fan_in, fan_out):
    s = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def _ortho_init(rng, fan_in, fan_out):
    a = rng.standard_normal((fan_in, fan_out))
    q, _ = np.linalg.qr(a)
    return q[:, :fan_out] if q.shape[1] >= fan_out else _dense_init(rng, fan_in, fan_out)


def init_params(obs_dim, act_dim, network_kind, rng, recurrent=True, log_std_init=-0.7):
    """Fresh parameter dict.  Output layer scaled down so initial outputs
    are near zero; recurrent gate matrices get orthogonal columns."""
    h1, h2, h3, n_out = layer_sizes(obs_dim, act_dim, network_kind)
    p = {
        "W1": _dense_init(rng, obs_dim, h1),
        "b1": np.zeros(h1),
        "W3": _dense_init(rng, h2, h3),
        "b3": np.zeros(h3),
        "Wo": _dense_init(rng, h3, n_out) * 0.01,
        "bo": np.zeros(n_out),
    }
    if recurrent:
        for gate in ("Wz", "Wr", "Wc"):
            p[gate] = _ortho_init(rng, h1 + h2, h2)
        p["bz"] = np.zeros(h2)
        p["br"] = np.zeros(h2)
        p["bc"] = np.zeros(h2)
    else:
        p["W2"] = _dense_init(rng, h1, h2)
        p["b2"] = np.zeros(h2)
    if network_kind == "policy":
        p["log_std"] = np.full(act_dim, float(log_std_init))
    return p


def gru_cell(x, h, w):
    """One recurrent-cell step; x (..., H1), h (..., H2) -> new hidden."""
    xh = np.concatenate([x, h], axis=-1)
    z = _sigmoid(xh @ w["Wz"] + w["bz"])
    u = _sigmoid(xh @ w["Wr"] + w["br"])
    xuh = np.concatenate([x, u * h], axis=-1)
    c = np.tanh(xuh @ w["Wc"] + w["bc"])
    return (1.0 - z) * h + z * c


class Network:
    """Four-layer network with optional recurrent second layer.

    Holds a parameter dict; forward() runs batched segments and can cache
    intermediates for backward().  Hidden states are rows of shape (B, H2).
    """

    def __init__(self, obs_dim, act_dim, network_kind, rng=None, recurrent=True,
                 log_std_init=-0.7, params=None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.kind = network_kind
        self.recurrent = recurrent
        self.sizes = layer_sizes(obs_dim, act_dim, network_kind)
        if params is not None:
            self.params = params
        else:
            if rng is None:
                raise ValueError("need an rng to initialize parameters")
            self.params = init_params(
                obs_dim, act_dim, network_kind, rng, recurrent, log_std_init
            )

    @property
    def hidden_dim(self):
        return self.sizes[1]

    def init_hidden(self, batch=1):
        return np.zeros((batch, self.hidden_dim))

    def forward(self, obs, h0, want_cache=False):
        """obs (B, T, D), h0 (B, H2) -> (out (B, T, O), hT, cache)."""
        p = self.params
        obs = np.asarray(obs, dtype=float)
        B, T, _ = obs.shape
        x1 = np.tanh(obs @ p["W1"] + p["b1"])
        hs = np.empty((B, T, self.hidden_dim))
        cache_steps = [] if want_cache else None
        if self.recurrent:
            h = np.array(h0, dtype=float)
            for t in range(T):
                xt = x1[:, t]
                xh = np.concatenate([xt, h], axis=-1)
                z = _sigmoid(xh @ p["Wz"] + p["bz"])
                u = _sigmoid(xh @ p["Wr"] + p["br"])
                xuh = np.concatenate([xt, u * h], axis=-1)
                c = np.tanh(xuh @ p["Wc"] + p["bc"])
                h_new = (1.0 - z) * h + z * c
                if want_cache:
                    cache_steps.append((xh, z, u, xuh, c, h))
                h = h_new
                hs[:, t] = h
            hT = h
        else:
            hs = np.tanh(x1 @ p["W2"] + p["b2"])
            hT = np.array(h0, dtype=float)
        x3 = np.tanh(hs @ p["W3"] + p["b3"])
        out = x3 @ p["Wo"] + p["bo"]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite network output")
        cache = None
        if want_cache:
            cache = {"obs": obs, "x1": x1, "hs": hs, "x3": x3, "steps": cache_steps}
        return out, hT, cache

    def step(self, obs_vec, h):
        """Single-step forward for rollout collection; returns (out, h')."""
        out, hT, _ = self.forward(obs_vec.reshape(1, 1, -1), h, want_cache=False)
        return out[0, 0], hT

    def backward(self, cache, dout):
        """Exact gradients of sum(dout * out) w.r.t. every parameter.

        dout has the output's shape (B, T, O).  Gradients are truncated at
        the segment boundary: nothing flows into the initial hidden state.
        """
        p = self.params
        obs, x1, hs, x3 = cache["obs"], cache["x1"], cache["hs"], cache["x3"]
        B, T, _ = obs.shape
        h1 = self.sizes[0]
        g = {k: np.zeros_like(v) for k, v in p.items()}

        dout = np.asarray(dout, dtype=float)
        g["Wo"] = x3.reshape(-1, x3.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])
        g["bo"] = dout.sum(axis=(0, 1))
        dx3 = dout @ p["Wo"].T
        dpre3 = dx3 * (1.0 - x3 * x3)
        g["W3"] = hs.reshape(-1, hs.shape[-1]).T @ dpre3.reshape(-1, dpre3.shape[-1])
        g["b3"] = dpre3.sum(axis=(0, 1))
        dhs = dpre3 @ p["W3"].T

        dx1 = np.empty_like(x1)
        if self.recurrent:
            steps = cache["steps"]
            dh = np.zeros((B, self.hidden_dim))
            for t in range(T - 1, -1, -1):
                xh, z, u, xuh, c, h_prev = steps[t]
                dh = dh + dhs[:, t]
                dz = dh * (c - h_prev)
                dc = dh * z
                dh_prev = dh * (1.0 - z)

                dpre_c = dc * (1.0 - c * c)
                g["Wc"] += xuh.T @ dpre_c
                g["bc"] += dpre_c.sum(axis=0)
                dxuh = dpre_c @ p["Wc"].T
                du = dxuh[:, h1:] * h_prev
                dh_prev = dh_prev + dxuh[:, h1:] * u

                dpre_r = du * u * (1.0 - u)
                g["Wr"] += xh.T @ dpre_r
                g["br"] += dpre_r.sum(axis=0)
                dxh = dpre_r @ p["Wr"].T

                dpre_z = dz * z * (1.0 - z)
                g["Wz"] += xh.T @ dpre_z
                g["bz"] += dpre_z.sum(axis=0)
                dxh = dxh + dpre_z @ p["Wz"].T

                dx1[:, t] = dxuh[:, :h1] + dxh[:, :h1]
                dh = dh_prev + dxh[:, h1:]
        else:
            dpre2 = dhs * (1.0 - hs * hs)
            g["W2"] = x1.reshape(-1, h1).T @ dpre2.reshape(-1, dpre2.shape[-1])
            g["b2"] = dpre2.sum(axis=(0, 1))
            dx1 = dpre2 @ p["W2"].T

        dpre1 = dx1 * (1.0 - x1 * x1)
        g["W1"] = obs.reshape(-1, self.obs_dim).T @ dpre1.reshape(-1, dpre1.shape[-1])
        g["b1"] = dpre1.sum(axis=(0, 1))
        return g


def policy_forward(net: Network, obs_vec, h):
    """Single observation -> (mean, log_std, new hidden)."""
    mean, h_new = net.step(np.asarray(obs_vec, dtype=float), h)
    return mean, net.params["log_std"], h_new


def gaussian_logp(mean, log_std, action):
    """Diagonal-Gaussian log density, summed over action dimensions.

    Broadcasts over leading axes; log_std has the action shape.
    """
    mean = np.asarray(mean, dtype=float)
    action = np.asarray(action, dtype=float)
    inv_std = np.exp(-log_std)
    zscore = (action - mean) * inv_std
    return -0.5 * (zscore * zscore).sum(axis=-1) - log_std.sum() - 0.5 * LOG_2PI * mean.shape[-1]


def sample_action(mean, log_std, rng):
    """Draw a = mean + std * xi with standard-normal xi."""
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


def gaussian_kl(mean_old, log_std_old, mean_new, log_std_new):
    """KL(old || new) per sample for diagonal Gaussians; broadcasts."""
    var_old = np.exp(2.0 * log_std_old)
    var_new = np.exp(2.0 * log_std_new)
    term = log_std_new - log_std_old + (var_old + (mean_old - mean_new) ** 2) / (2.0 * var_new) - 0.5
    return term.sum(axis=-1)


def bptt_grads(net: Network, obs_segment, h0, loss_fn):
    """Gradients of a scalar loss over one unrolled segment.

    loss_fn(outputs) must return (loss, dloss/doutputs).  The incoming
    hidden state h0 is treated as constant (truncated backpropagation).
    """
    out, _, cache = net.forward(obs_segment, h0, want_cache=True)
    loss, dout = loss_fn(out)
    grads = net.backward(cache, dout)
    return loss, grads


# ---------------------------------------------------------------------------
# checkpoint format: versioned binary container of named float64 arrays
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"DLCK"
CKPT_VERSION = 1


def save_arrays(path, meta: dict, arrays: dict):
    """Write a checkpoint: header (magic, version, obs_dim, act_dim, unroll,
    recurrent flag) then named little-endian float64 arrays."""
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(
        struct.pack(
            "<IIIIB3x",
            CKPT_VERSION,
            int(meta["obs_dim"]),
            int(meta["act_dim"]),
            int(meta["unroll"]),
            1 if meta.get("recurrent", True) else 0,
        )
    )
    names = sorted(arrays)
    buf.write(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(arr.tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_arrays(path):
    """Read a checkpoint; returns (meta dict, {name: array})."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, obs_dim, act_dim, unroll, recurrent = struct.unpack_from("<IIIIB", data, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IIIIB3x")
    (n_arrays,) = struct.unpack_from("<I", data, off)
    off += 4
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", data, off) if ndim else ()
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
        off += count * 8
        arrays[name] = arr.astype(float)
    meta = {
        "obs_dim": obs_dim,
        "act_dim": act_dim,
        "unroll": unroll,
        "recurrent": bool(recurrent),
    }
    return meta, arrays
