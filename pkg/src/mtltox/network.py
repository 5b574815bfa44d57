"""The shared network: two stacked BiLSTMs, attention pooling, dense layers,
and K+1 sigmoid heads, with forward and hand-derived backward passes in numpy.

Sequence handling: only the first ``true_length`` timesteps are processed, in
both directions. Hidden states at padded positions are left at zero and the
attention softmax runs over real positions only, so padded token ids can
never influence any output. (Running the backward-direction recurrence over
padded steps would leak their content into every real position.)

Gate layout inside the fused 4H-wide LSTM weights: input, forget, candidate,
output, in that order.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from mtltox.corpus import Comment
from mtltox.embeddings import EmbeddingTable, lookup


class NetworkError(RuntimeError):
    """Numerical failure or structural mismatch inside the network."""


@dataclass(frozen=True)
class Hyper:
    """Architecture sizes. The full-scale values are hidden=256 (per
    direction), dense1=dense2=512, max_len=220; desk-scale runs shrink them
    through config without touching the math."""

    embed_dim: int
    hidden: int = 256
    dense1: int = 512
    dense2: int = 512
    n_aux: int = 9  # K output heads beside the toxicity head
    dropout_rate: float = 0.2
    attention: bool = True  # identity propagation uses the same net without it
    max_len: int = 220


@dataclass
class ModelParams:
    """All learnable tensors, keyed by name. Embeddings live outside and are
    frozen."""

    hyper: Hyper
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.hyper, {k: v.copy() for k, v in self.tensors.items()})


@dataclass
class _LstmCache:
    """Per-direction activations needed by backpropagation through time."""

    i: np.ndarray  # (M, H) input gate
    f: np.ndarray  # forget gate
    g: np.ndarray  # candidate
    o: np.ndarray  # output gate
    c: np.ndarray  # cell state
    h: np.ndarray  # hidden state
    steps: list[int]  # processing order (reversed for the backward direction)


@dataclass
class ForwardTrace:
    """Everything backward() needs, cached by one forward pass."""

    true_length: int
    layer_inputs: list[np.ndarray]  # input sequence of each LSTM layer
    lstm: dict[tuple[int, str], _LstmCache]  # (layer, "fwd"/"bwd") -> cache
    h_seq: np.ndarray  # (M, 2H) second-layer outputs, zero at padding
    attn_tanh: np.ndarray | None  # tanh scores at real positions
    attn_weights: np.ndarray  # (M,), zero at padding
    pooled: np.ndarray  # (2H,)
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray  # final dense output h^f
    y_logit: float
    y_hat: float
    aux_logits: np.ndarray  # (K,)
    aux_hat: np.ndarray  # (K,)
    dropout_mask: np.ndarray | None


@dataclass
class ParamGrads:
    tensors: dict[str, np.ndarray]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def param_names(hyper: Hyper) -> list[str]:
    names = []
    for layer in (0, 1):
        for direction in ("fwd", "bwd"):
            prefix = f"lstm{layer}_{direction}"
            names += [f"{prefix}_Wx", f"{prefix}_Wh", f"{prefix}_b"]
    if hyper.attention:
        names.append("attn_w")
    names += ["dense1_W", "dense1_b", "dense2_W", "dense2_b", "head_tox_w", "head_tox_b"]
    if hyper.n_aux > 0:
        names += ["head_aux_W", "head_aux_b"]
    return names


def init_params(hyper: Hyper, seed: int = 0) -> ModelParams:
    """Fan-based uniform init; biases zero except the LSTM forget gate at 1."""
    rng = np.random.default_rng(seed)
    h = hyper.hidden
    tensors: dict[str, np.ndarray] = {}
    for layer in (0, 1):
        in_dim = hyper.embed_dim if layer == 0 else 2 * h
        for direction in ("fwd", "bwd"):
            prefix = f"lstm{layer}_{direction}"
            tensors[f"{prefix}_Wx"] = _glorot(rng, in_dim, 4 * h, (in_dim, 4 * h))
            tensors[f"{prefix}_Wh"] = _glorot(rng, h, 4 * h, (h, 4 * h))
            b = np.zeros(4 * h)
            b[h : 2 * h] = 1.0  # forget-gate bias
            tensors[f"{prefix}_b"] = b
    if hyper.attention:
        tensors["attn_w"] = _glorot(rng, 2 * h, 1, (2 * h,))
    tensors["dense1_W"] = _glorot(rng, 2 * h, hyper.dense1, (2 * h, hyper.dense1))
    tensors["dense1_b"] = np.zeros(hyper.dense1)
    tensors["dense2_W"] = _glorot(rng, hyper.dense1, hyper.dense2, (hyper.dense1, hyper.dense2))
    tensors["dense2_b"] = np.zeros(hyper.dense2)
    tensors["head_tox_w"] = _glorot(rng, hyper.dense2, 1, (hyper.dense2,))
    tensors["head_tox_b"] = np.zeros(1)
    if hyper.n_aux > 0:
        tensors["head_aux_W"] = _glorot(rng, hyper.dense2, hyper.n_aux, (hyper.dense2, hyper.n_aux))
        tensors["head_aux_b"] = np.zeros(hyper.n_aux)
    return ModelParams(hyper=hyper, tensors=tensors)


def spatial_dropout_mask(dim: int, rate: float, seed_or_rng) -> np.ndarray:
    """Per-channel keep mask with inverted scaling: entries are 0 or 1/(1-rate).

    The same mask is applied at every timestep, so whole embedding channels
    drop together.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return np.ones(dim)
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else np.random.default_rng(seed_or_rng)
    keep = rng.random(dim) >= rate
    return keep / (1.0 - rate)


def _run_lstm(
    x_seq: np.ndarray,
    length: int,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
    reverse: bool,
    layer: int,
    direction: str,
) -> _LstmCache:
    m, _ = x_seq.shape
    hdim = wh.shape[0]
    cache = _LstmCache(
        i=np.zeros((m, hdim)),
        f=np.zeros((m, hdim)),
        g=np.zeros((m, hdim)),
        o=np.zeros((m, hdim)),
        c=np.zeros((m, hdim)),
        h=np.zeros((m, hdim)),
        steps=list(range(length - 1, -1, -1)) if reverse else list(range(length)),
    )
    h_prev = np.zeros(hdim)
    c_prev = np.zeros(hdim)
    for t in cache.steps:
        z = x_seq[t] @ wx + h_prev @ wh + b
        i_gate = _sigmoid(z[:hdim])
        f_gate = _sigmoid(z[hdim : 2 * hdim])
        g_gate = np.tanh(z[2 * hdim : 3 * hdim])
        o_gate = _sigmoid(z[3 * hdim :])
        c_state = f_gate * c_prev + i_gate * g_gate
        h_state = o_gate * np.tanh(c_state)
        if not np.all(np.isfinite(h_state)):
            raise NetworkError(f"non-finite activation in lstm{layer}_{direction} at timestep {t}")
        cache.i[t], cache.f[t], cache.g[t], cache.o[t] = i_gate, f_gate, g_gate, o_gate
        cache.c[t], cache.h[t] = c_state, h_state
        h_prev, c_prev = h_state, c_state
    return cache


def forward(
    params: ModelParams,
    embedded: np.ndarray,
    true_length: int,
    dropout_mask: np.ndarray | None = None,
) -> ForwardTrace:
    """One example through the whole network.

    ``embedded`` is the (max_len, D) embedding matrix for the comment;
    positions at or beyond true_length are ignored entirely.
    """
    hyper = params.hyper
    m = embedded.shape[0]
    if not 1 <= true_length <= m:
        raise NetworkError(f"true_length {true_length} outside [1, {m}]")
    t = params.tensors

    x0 = embedded * dropout_mask if dropout_mask is not None else embedded

    layer_inputs = [x0]
    lstm: dict[tuple[int, str], _LstmCache] = {}
    x_in = x0
    for layer in (0, 1):
        for direction, reverse in (("fwd", False), ("bwd", True)):
            prefix = f"lstm{layer}_{direction}"
            lstm[(layer, direction)] = _run_lstm(
                x_in, true_length, t[f"{prefix}_Wx"], t[f"{prefix}_Wh"], t[f"{prefix}_b"],
                reverse, layer, direction,
            )
        x_in = np.concatenate([lstm[(layer, "fwd")].h, lstm[(layer, "bwd")].h], axis=1)
        if layer == 0:
            layer_inputs.append(x_in)
    h_seq = x_in  # (M, 2H); zero at padded positions by construction

    attn_weights = np.zeros(m)
    attn_tanh = None
    if hyper.attention:
        scores = np.tanh(h_seq[:true_length] @ t["attn_w"])
        attn_tanh = scores
        shifted = np.exp(scores - scores.max())
        attn_weights[:true_length] = shifted / shifted.sum()
        pooled = attn_weights[:true_length] @ h_seq[:true_length]
    else:
        attn_weights[:true_length] = 1.0 / true_length
        pooled = h_seq[:true_length].mean(axis=0)

    z1 = pooled @ t["dense1_W"] + t["dense1_b"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ t["dense2_W"] + t["dense2_b"]
    a2 = np.maximum(z2, 0.0)

    y_logit = float(a2 @ t["head_tox_w"] + t["head_tox_b"][0])
    y_hat = float(_sigmoid(y_logit))
    if hyper.n_aux > 0:
        aux_logits = a2 @ t["head_aux_W"] + t["head_aux_b"]
        aux_hat = _sigmoid(aux_logits)
    else:
        aux_logits = np.zeros(0)
        aux_hat = np.zeros(0)
    if not (np.isfinite(y_hat) and np.all(np.isfinite(aux_hat))):
        raise NetworkError("non-finite activation in output heads")

    return ForwardTrace(
        true_length=true_length,
        layer_inputs=layer_inputs,
        lstm=lstm,
        h_seq=h_seq,
        attn_tanh=attn_tanh,
        attn_weights=attn_weights,
        pooled=pooled,
        z1=z1,
        a1=a1,
        z2=z2,
        a2=a2,
        y_logit=y_logit,
        y_hat=y_hat,
        aux_logits=aux_logits,
        aux_hat=aux_hat,
        dropout_mask=dropout_mask,
    )


def _lstm_backward(
    cache: _LstmCache,
    x_seq: np.ndarray,
    d_h_seq: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """BPTT for one direction. Returns (dWx, dWh, db, dX)."""
    hdim = wh.shape[0]
    d_wx = np.zeros_like(wx)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros(4 * hdim)
    d_x = np.zeros_like(x_seq)
    d_h_next = np.zeros(hdim)
    d_c_next = np.zeros(hdim)
    steps = cache.steps
    for pos in range(len(steps) - 1, -1, -1):
        t = steps[pos]
        h_prev = cache.h[steps[pos - 1]] if pos > 0 else np.zeros(hdim)
        c_prev = cache.c[steps[pos - 1]] if pos > 0 else np.zeros(hdim)
        i_g, f_g, g_g, o_g, c_s = cache.i[t], cache.f[t], cache.g[t], cache.o[t], cache.c[t]
        tanh_c = np.tanh(c_s)

        d_h = d_h_seq[t] + d_h_next
        d_o = d_h * tanh_c
        d_c = d_h * o_g * (1.0 - tanh_c**2) + d_c_next
        d_i = d_c * g_g
        d_g = d_c * i_g
        d_f = d_c * c_prev
        d_c_next = d_c * f_g

        d_z = np.concatenate(
            [
                d_i * i_g * (1.0 - i_g),
                d_f * f_g * (1.0 - f_g),
                d_g * (1.0 - g_g**2),
                d_o * o_g * (1.0 - o_g),
            ]
        )
        d_wx += np.outer(x_seq[t], d_z)
        d_wh += np.outer(h_prev, d_z)
        d_b += d_z
        d_x[t] = d_z @ wx.T
        d_h_next = d_z @ wh.T
    return d_wx, d_wh, d_b, d_x


def backward(
    params: ModelParams,
    trace: ForwardTrace,
    d_y_hat: float,
    d_aux_hat: np.ndarray,
) -> ParamGrads:
    """Gradient of the loss w.r.t. every parameter tensor.

    ``d_y_hat`` and ``d_aux_hat`` are the loss gradients at the sigmoid head
    outputs (as produced by losses.loss_grad_heads). The frozen embedding has
    no gradient; padded timesteps contribute exactly zero.
    """
    hyper = params.hyper
    t = params.tensors
    d_aux_hat = np.asarray(d_aux_hat, dtype=float)
    if d_aux_hat.shape != (hyper.n_aux,):
        raise NetworkError(f"d_aux_hat shape {d_aux_hat.shape} != ({hyper.n_aux},)")
    grads = {name: np.zeros_like(t[name]) for name in t}

    # Heads: sigmoid backward to the logits, then linear layers.
    d_y_logit = d_y_hat * trace.y_hat * (1.0 - trace.y_hat)
    grads["head_tox_w"] = trace.a2 * d_y_logit
    grads["head_tox_b"] = np.array([d_y_logit])
    d_a2 = t["head_tox_w"] * d_y_logit
    if hyper.n_aux > 0:
        d_aux_logits = d_aux_hat * trace.aux_hat * (1.0 - trace.aux_hat)
        grads["head_aux_W"] = np.outer(trace.a2, d_aux_logits)
        grads["head_aux_b"] = d_aux_logits
        d_a2 = d_a2 + t["head_aux_W"] @ d_aux_logits

    # Dense stack (ReLU).
    d_z2 = d_a2 * (trace.z2 > 0)
    grads["dense2_W"] = np.outer(trace.a1, d_z2)
    grads["dense2_b"] = d_z2
    d_a1 = t["dense2_W"] @ d_z2
    d_z1 = d_a1 * (trace.z1 > 0)
    grads["dense1_W"] = np.outer(trace.pooled, d_z1)
    grads["dense1_b"] = d_z1
    d_pooled = t["dense1_W"] @ d_z1

    # Pooling back to the per-timestep hidden states.
    length = trace.true_length
    d_h_seq = np.zeros_like(trace.h_seq)
    if hyper.attention:
        h_real = trace.h_seq[:length]
        a = trace.attn_weights[:length]
        d_a = h_real @ d_pooled
        d_h_seq[:length] = a[:, None] * d_pooled[None, :]
        # softmax then tanh
        d_scores = a * (d_a - float(a @ d_a))
        d_u = d_scores * (1.0 - trace.attn_tanh**2)
        grads["attn_w"] = d_u @ h_real
        d_h_seq[:length] += np.outer(d_u, t["attn_w"])
    else:
        d_h_seq[:length] = d_pooled[None, :] / length

    # Stacked BiLSTMs, top down. Layer 1's input grads feed layer 0's outputs.
    h = hyper.hidden
    for layer in (1, 0):
        x_seq = trace.layer_inputs[layer]
        d_x_total = np.zeros_like(x_seq)
        for direction, lo in (("fwd", 0), ("bwd", h)):
            prefix = f"lstm{layer}_{direction}"
            d_wx, d_wh, d_b, d_x = _lstm_backward(
                trace.lstm[(layer, direction)],
                x_seq,
                d_h_seq[:, lo : lo + h],
                t[f"{prefix}_Wx"],
                t[f"{prefix}_Wh"],
            )
            grads[f"{prefix}_Wx"] = d_wx
            grads[f"{prefix}_Wh"] = d_wh
            grads[f"{prefix}_b"] = d_b
            d_x_total += d_x
        d_h_seq = d_x_total  # becomes the output grad of the layer below
    return ParamGrads(tensors=grads)


def predict(
    params: ModelParams,
    table: EmbeddingTable,
    comments: list[Comment],
) -> tuple[np.ndarray, np.ndarray]:
    """Inference over a batch (no dropout). Order is preserved.

    Returns (toxicity scores shape (N,), auxiliary scores shape (N, K)).
    """
    y_hat = np.zeros(len(comments))
    aux_hat = np.zeros((len(comments), params.hyper.n_aux))
    for n, comment in enumerate(comments):
        embedded = lookup(table, comment.token_ids)
        trace = forward(params, embedded, comment.true_length)
        y_hat[n] = trace.y_hat
        if params.hyper.n_aux > 0:
            aux_hat[n] = trace.aux_hat
    return y_hat, aux_hat
