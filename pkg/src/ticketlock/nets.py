"""Forward/backward passes for the toy architectures.

ReLU hidden activations, linear output logits, softmax cross-entropy loss.
Conv layers run stride-1 'same' convolutions; a conv stack is reduced by
global average pooling before the dense head. Gradients are computed by
hand-written reverse mode; no framework involved.

All hot-loop entry points take raw arrays so the trainer can avoid
rebuilding model values every step. Masks are applied by the caller
(weights arrive pre-multiplied).
"""

from __future__ import annotations

import numpy as np

from .model import Architecture, ModelError, SparseModel


def _conv2d(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # x (n, ci, h, w), w (co, ci, kh, kw) -> (n, co, h, w), stride 1, same padding
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.zeros((n, co, h, wd), dtype=np.float32)
    for di in range(kh):
        for dj in range(kw):
            out += np.einsum(
                "oc,nchw->nohw", w[:, :, di, dj], xp[:, :, di : di + h, dj : dj + wd],
                optimize=True,
            )
    return out


def _conv2d_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for di in range(kh):
        for dj in range(kw):
            patch = xp[:, :, di : di + h, dj : dj + wd]
            gw[:, :, di, dj] = np.einsum("nohw,nchw->oc", gout, patch, optimize=True)
            gxp[:, :, di : di + h, dj : dj + wd] += np.einsum(
                "oc,nohw->nchw", w[:, :, di, dj], gout, optimize=True
            )
    gx = gxp[:, :, ph : ph + h, pw : pw + wd]
    return gx, gw


def forward_pass(
    arch: Architecture,
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    keep_cache: bool = False,
):
    """Return logits (and the activation cache when training)."""
    if x.shape[1:] != arch.input_shape:
        raise ModelError(f"input shape {x.shape[1:]} != expected {arch.input_shape}")
    a = x.astype(np.float32)
    cache = []
    n_layers = len(arch.layers)
    pooled_from = None
    for i, spec in enumerate(arch.layers):
        if spec.kind == "conv":
            z = _conv2d(a, weights[i]) + biases[i][None, :, None, None]
        else:
            if a.ndim == 4:  # conv -> dense boundary: global average pool
                pooled_from = a
                a = a.mean(axis=(2, 3))
            z = a @ weights[i].T + biases[i][None, :]
        is_last = i == n_layers - 1
        out = z if is_last else np.maximum(z, 0.0)
        if keep_cache:
            cache.append((a, z, pooled_from))
        pooled_from = None
        a = out
    return (a, cache) if keep_cache else a


def softmax_xent(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy and d(loss)/d(logits)."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    n = len(y)
    loss = -np.log(np.maximum(p[np.arange(n), y], 1e-30)).mean()
    g = p
    g[np.arange(n), y] -= 1.0
    return float(loss), (g / n).astype(np.float32)


def backward_pass(
    arch: Architecture,
    weights: list[np.ndarray],
    cache: list,
    grad_logits: np.ndarray,
):
    """Gradients w.r.t. every weight and bias."""
    gws: list = [None] * len(arch.layers)
    gbs: list = [None] * len(arch.layers)
    g = grad_logits
    for i in range(len(arch.layers) - 1, -1, -1):
        spec = arch.layers[i]
        a, z, pooled_from = cache[i]
        if i != len(arch.layers) - 1:
            g = g * (z > 0.0)  # ReLU gate of this layer's output
        if spec.kind == "dense":
            gws[i] = (g.T @ a).astype(np.float32)
            gbs[i] = g.sum(axis=0).astype(np.float32)
            g = g @ weights[i]
            if pooled_from is not None:
                # undo global average pooling at the conv->dense boundary
                n, c, h, w = pooled_from.shape
                g = (np.ones((n, c, h, w), dtype=np.float32) * g[:, :, None, None] / (h * w))
        else:
            gbs[i] = g.sum(axis=(0, 2, 3)).astype(np.float32)
            g, gw = _conv2d_backward(a, weights[i], g)
            gws[i] = gw.astype(np.float32)
    return gws, gbs


def predict(model: SparseModel, x: np.ndarray) -> np.ndarray:
    logits = forward_pass(model.arch, model.masked_weights(), list(model.biases), x)
    return logits.argmax(axis=1)


def accuracy(model: SparseModel, x: np.ndarray, y: np.ndarray) -> float:
    return float((predict(model, x) == y).mean())
