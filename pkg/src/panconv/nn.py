"""Two-layer propagator-convolution network with hand-rolled gradients.

Layers compute act(M X W) where M is a propagator, with optional trainable
per-length walk weights. Everything is full-batch, single-threaded and in
64-bit reals; products are ordered M (X W) so the sparse applications run on
the narrow side. The weight-gradient of the renormalized propagator variants
(methods 1, 2, 7) is chain-ruled through their per-node normalizer z(w).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMaskError
from .propagator import RENORMALIZED_METHODS, Propagator

# When enabled, layer outputs are checked for NaN/Inf at the boundary.
DEBUG_CHECKS = False


def glorot_init(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform init on [-b, b], b = sqrt(6 / (rows + cols))."""
    if rows < 1 or cols < 1:
        raise ValueError("glorot_init needs rows, cols >= 1")
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class LayerCache:
    """Forward-pass byproducts needed by pan_layer_backward."""

    prop: Propagator
    x: np.ndarray
    q: np.ndarray                    # X @ W
    y_pre: np.ndarray                # M X W, before activation
    w: np.ndarray
    relu_mask: np.ndarray | None
    term_q: list | None              # [T_n @ Q], only when k is trainable
    trainable: bool
    name: str = "pan_layer"
    consumed: bool = field(default=False, compare=False)


def pan_layer_forward(x, prop: Propagator, k, w, activation: str | None = "relu",
                      name: str = "pan_layer"):
    """Y = act(M X W); returns (Y, cache).

    `k` reweights the propagator for this pass (and enables the dk output of
    the backward pass); pass None to use the propagator's baked-in weights.
    `activation` is "relu" or None.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape[1] != w.shape[0]:
        raise ValueError(
            f"{name}: feature dim {x.shape[1]} does not match weight rows {w.shape[0]}"
        )
    if activation not in ("relu", None):
        raise ValueError(f"unknown activation {activation!r}")
    eff = prop.reweight(k) if k is not None else prop
    q = x @ w
    if k is not None:
        term_q = eff.term_products(q)
        y_pre = np.zeros_like(q)
        for w_n, tq in zip(eff.weights, term_q):
            y_pre += w_n * tq
    else:
        term_q = None
        y_pre = eff.apply(q)
    if activation == "relu":
        relu_mask = y_pre > 0.0
        y = np.where(relu_mask, y_pre, 0.0)
    else:
        relu_mask = None
        y = y_pre
    if DEBUG_CHECKS and not np.all(np.isfinite(y)):
        raise FloatingPointError(f"non-finite output in layer {name!r}")
    cache = LayerCache(prop=eff, x=x, q=q, y_pre=y_pre, w=w, relu_mask=relu_mask,
                       term_q=term_q, trainable=k is not None, name=name)
    return y, cache


def pan_layer_backward(cache: LayerCache, dy, need_dx: bool = True):
    """Gradients (dX, dW, dk) of a pan_layer_forward pass.

    dk is None when the forward pass ran without trainable weights; dX is
    None when need_dx is False (saves the widest sparse products on the
    input layer).
    """
    if cache.consumed:
        raise ValueError(f"stale cache for layer {cache.name!r}: already consumed")
    cache.consumed = True
    dy = np.asarray(dy, dtype=np.float64)
    g = dy * cache.relu_mask if cache.relu_mask is not None else dy
    prop = cache.prop
    mt_g = prop.apply_transpose(g)
    dw = cache.x.T @ mt_g
    dx = prop.apply_transpose(g @ cache.w.T) if need_dx else None
    if not cache.trainable:
        return dx, dw, None

    dk = np.array([np.vdot(tq, g) for tq in cache.term_q])
    if prop.method in RENORMALIZED_METHODS:
        # d/dw_n of Z^-1-style normalization: subtract the z-direction part.
        ratios = prop.normalizer_ratios()
        row_yg = np.einsum("ij,ij->i", cache.y_pre, g)
        if prop.method == 2:
            row_qmg = np.einsum("ij,ij->i", cache.q, mt_g)
            for n, u in enumerate(ratios):
                dk[n] -= 0.5 * (u @ row_yg + u @ row_qmg)
        else:
            for n, u in enumerate(ratios):
                dk[n] -= u @ row_yg
    return dx, dw, dk


def dropout(x, rate: float, rng: np.random.Generator, training: bool):
    """Inverted dropout: keeps entries w.p. 1-rate and rescales by
    1/(1-rate) during training; identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    return x * dropout_mask(x.shape, rate, rng)


def dropout_mask(shape, rate: float, rng: np.random.Generator) -> np.ndarray:
    """The multiplicative mask dropout applies: kept entries carry
    1/(1-rate), dropped entries 0."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def softmax_cross_entropy(logits, labels, mask):
    """Mean negative log-softmax over masked rows.

    Returns (loss, dLogits); dLogits is zero on unmasked rows and scaled by
    1/(number of masked rows). Stable via per-row max subtraction.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    mask = np.asarray(mask, dtype=bool)
    n_masked = int(mask.sum())
    if n_masked == 0:
        raise EmptyMaskError("softmax_cross_entropy over an empty mask")
    rows = logits[mask]
    y = labels[mask]
    shifted = rows - rows.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-log_probs[np.arange(n_masked), y].mean())
    d_rows = np.exp(log_probs)
    d_rows[np.arange(n_masked), y] -= 1.0
    d_rows /= n_masked
    d_logits = np.zeros_like(logits)
    d_logits[mask] = d_rows
    return loss, d_logits


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ModelParams:
    """Trainable state of the two-layer network. k1/k2 are None when the
    walk weights are fixed in the propagator."""

    W1: np.ndarray
    W2: np.ndarray
    k1: np.ndarray | None = None
    k2: np.ndarray | None = None

    def copy(self) -> "ModelParams":
        return ModelParams(
            W1=self.W1.copy(),
            W2=self.W2.copy(),
            k1=None if self.k1 is None else self.k1.copy(),
            k2=None if self.k2 is None else self.k2.copy(),
        )

    def as_dict(self) -> dict:
        out = {"W1": self.W1, "W2": self.W2}
        if self.k1 is not None:
            out["k1"] = self.k1
        if self.k2 is not None:
            out["k2"] = self.k2
        return out


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def init(cls, params: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              weight_decay: float = 0.0, decay_keys=("W1",)):
    """Bias-corrected Adam update over a dict of named arrays.

    Weight decay enters as an L2 term added to the gradient of the keys in
    decay_keys (by default only the first dense layer); walk-weight
    parameters are never decayed.
    """
    state.step += 1
    t = state.step
    for key, p in params.items():
        g = grads[key]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {key!r}")
        if weight_decay != 0.0 and key in decay_keys:
            g = g + weight_decay * p
        state.m[key] = beta1 * state.m[key] + (1.0 - beta1) * g
        state.v[key] = beta2 * state.v[key] + (1.0 - beta2) * g * g
        m_hat = state.m[key] / (1.0 - beta1**t)
        v_hat = state.v[key] / (1.0 - beta2**t)
        params[key] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


class TwoLayerPan:
    """dropout -> pan-conv -> ReLU -> dropout -> pan-conv.

    Both layers share one propagator structure; with trainable walk weights
    each layer reweights it with its own k vector per forward pass.
    """

    def __init__(self, prop: Propagator, in_features: int, hidden: int,
                 n_classes: int, dropout_rate: float, trainable_k: bool,
                 rng: np.random.Generator):
        self.prop = prop
        self.dropout_rate = dropout_rate
        self.params = ModelParams(
            W1=glorot_init(in_features, hidden, rng),
            W2=glorot_init(hidden, n_classes, rng),
            k1=prop.weights.copy() if trainable_k else None,
            k2=prop.weights.copy() if trainable_k else None,
        )

    @classmethod
    def from_params(cls, prop: Propagator, params: ModelParams,
                    dropout_rate: float = 0.0) -> "TwoLayerPan":
        model = cls.__new__(cls)
        model.prop = prop
        model.dropout_rate = dropout_rate
        model.params = params
        return model

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Inference forward pass (no dropout)."""
        p = self.params
        h, _ = pan_layer_forward(x, self.prop, p.k1, p.W1, "relu", name="layer1")
        out, _ = pan_layer_forward(h, self.prop, p.k2, p.W2, None, name="layer2")
        return out

    def loss_and_grads(self, x, labels, mask, rng: np.random.Generator):
        """One training-mode forward/backward; returns (loss, grads dict)."""
        p = self.params
        rate = self.dropout_rate
        if rate > 0.0:
            m0 = dropout_mask(x.shape, rate, rng)
            x_in = x * m0
        else:
            x_in = x
        h, cache1 = pan_layer_forward(x_in, self.prop, p.k1, p.W1, "relu", name="layer1")
        if rate > 0.0:
            m1 = dropout_mask(h.shape, rate, rng)
            h_in = h * m1
        else:
            m1 = None
            h_in = h
        out, cache2 = pan_layer_forward(h_in, self.prop, p.k2, p.W2, None, name="layer2")
        loss, d_out = softmax_cross_entropy(out, labels, mask)
        dh_in, dw2, dk2 = pan_layer_backward(cache2, d_out)
        dh = dh_in * m1 if m1 is not None else dh_in
        _, dw1, dk1 = pan_layer_backward(cache1, dh, need_dx=False)
        grads = {"W1": dw1, "W2": dw2}
        if dk1 is not None:
            grads["k1"], grads["k2"] = dk1, dk2
        return loss, grads


def save_checkpoint(path, params: ModelParams, meta: dict) -> None:
    """JSON manifest line followed by the little-endian float64 blobs of W1
    and W2, concatenated in manifest order."""
    manifest = {
        "blobs": [
            {"name": "W1", "shape": list(params.W1.shape), "dtype": "<f8"},
            {"name": "W2", "shape": list(params.W2.shape), "dtype": "<f8"},
        ],
        "k1": None if params.k1 is None else [float(v) for v in params.k1],
        "k2": None if params.k2 is None else [float(v) for v in params.k2],
        "meta": meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(params.W1, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(params.W2, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (ModelParams, meta)."""
    with open(path, "rb") as fh:
        header = fh.readline()
        manifest = json.loads(header.decode("utf-8"))
        blob = fh.read()
    arrays = {}
    offset = 0
    for entry in manifest["blobs"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 8
        arrays[entry["name"]] = np.frombuffer(
            blob[offset:offset + nbytes], dtype="<f8"
        ).reshape(shape).astype(np.float64)
        offset += nbytes
    params = ModelParams(
        W1=arrays["W1"],
        W2=arrays["W2"],
        k1=None if manifest["k1"] is None else np.asarray(manifest["k1"]),
        k2=None if manifest["k2"] is None else np.asarray(manifest["k2"]),
    )
    return params, manifest["meta"]
