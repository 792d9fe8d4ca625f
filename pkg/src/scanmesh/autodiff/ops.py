"""Differentiable primitives.

Each primitive computes its forward value with numpy and records a closure
that maps the output gradient to input gradients. Broadcasting is limited to
what numpy does for elementwise ops; gradients are summed back to the input
shape.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("add", a.data, b.data)
    sa, sb = a.shape, b.shape
    return record(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("sub", a.data, b.data)
    sa, sb = a.shape, b.shape
    return record(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("mul", a.data, b.data)
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return record(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    _check_broadcast("div", a.data, b.data)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return record(out, (a, b), bw, "div")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def elu(x: Tensor) -> Tensor:
    """ELU with alpha = 1."""
    xd = x.data
    neg = np.expm1(np.minimum(xd, 0))
    out = np.where(xd > 0, xd, neg)
    slope = np.where(xd > 0, 1, neg + 1).astype(xd.dtype)
    return record(out, (x,), lambda g: (g * slope,), "elu")


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1 / (1 + np.exp(-xd[pos]))
    e = np.exp(xd[~pos])
    out[~pos] = e / (1 + e)
    return record(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    xd = x.data
    return record(np.log(xd), (x,), lambda g: (g / xd,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def bw(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(out > 0, g / (2 * out), 0.0).astype(out.dtype),)

    return record(out, (x,), bw, "sqrt")


def abs(x: Tensor) -> Tensor:
    s = np.sign(x.data)
    return record(np.abs(x.data), (x,), lambda g: (g * s,), "abs")


# ---------------------------------------------------------------- structural

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bw(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return record(ad @ bd, (a, b), bw, "matmul")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", old, shape) from None
    return record(out, (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return record(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                  lambda g: (g.transpose(inv),), "transpose")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    src = x.shape
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError("broadcast_to", src, shape) from None
    return record(out, (x,), lambda g: (_unbroadcast(g, src),), "broadcast_to")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.shape for t in tensors]) from None
    ax = axis % out.ndim
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=ax))

    return record(out, tensors, bw, "concat")


def index(x: Tensor, key) -> Tensor:
    """``x[key]`` with scatter-add backward (handles repeated indices)."""
    shape = x.shape
    out = x.data[key]

    def bw(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, key, g)
        return (full,)

    return record(np.array(out, copy=True), (x,), bw, "index")


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Rows ``x[idx]`` along axis 0; ``idx`` may repeat."""
    idx = np.asarray(idx, dtype=np.intp)
    n = x.shape[0]

    def bw(g):
        flat = g.reshape(len(idx), -1)
        acc = np.zeros((n, flat.shape[1]), dtype=g.dtype)
        for c in range(flat.shape[1]):
            acc[:, c] = np.bincount(idx, weights=flat[:, c], minlength=n)
        return (acc.reshape((n,) + g.shape[1:]),)

    return record(x.data[idx], (x,), bw, "gather_rows")


def sum(x: Tensor, axis=None) -> Tensor:
    shape = x.shape
    out = np.asarray(x.data.sum(axis=axis))

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return record(out, (x,), bw, "sum")


def mean(x: Tensor, axis=None) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / float(count))


def set_sum(x: Tensor, axis: int) -> Tensor:
    """Sum over ``axis`` treating its entries as an unordered set.

    The entries are sorted before reduction, so the result is bitwise
    independent of the order they arrive in.
    """
    ax = axis % x.ndim
    out = np.sort(x.data, axis=ax).sum(axis=ax)
    shape = x.shape

    def bw(g):
        return (np.broadcast_to(np.expand_dims(g, ax), shape).copy(),)

    return record(out, (x,), bw, "set_sum")


def neighbor_set_sum(x: Tensor, nbr: np.ndarray) -> Tensor:
    """Per-row unordered sum of ``x`` rows listed in ``nbr``.

    ``nbr`` is (N, max_degree) with -1 padding; every row of ``x`` may be
    referenced any number of times. Order-independent like ``set_sum``.
    """
    nbr = np.asarray(nbr, dtype=np.intp)
    n_out, width = nbr.shape
    d = x.shape[1]
    valid = nbr >= 0
    if width == 0:
        return record(np.zeros((n_out, d), dtype=x.dtype), (x,),
                      lambda g: (np.zeros_like(x.data),), "neighbor_set_sum")
    padded = np.where(valid[..., None], x.data[np.where(valid, nbr, 0)], 0)
    out = np.sort(padded, axis=1).sum(axis=1)
    rows = nbr[valid]
    owner = np.nonzero(valid)[0]
    n_in = x.shape[0]

    def bw(g):
        acc = np.zeros((n_in, d), dtype=g.dtype)
        np.add.at(acc, rows, g[owner])
        return (acc,)

    return record(out.astype(x.dtype, copy=False), (x,), bw, "neighbor_set_sum")


# ---------------------------------------------------------------- layers

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Fully-connected layer ``x @ w + b`` on row vectors."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError("linear", x.shape, w.shape)
    xd, wd = x.data, w.data
    out = xd @ wd
    if b is not None:
        if b.shape != (wd.shape[1],):
            raise ShapeError("linear", x.shape, w.shape, b.shape)
        out = out + b.data

    def bw(g):
        gx = g @ wd.T if x.requires_grad else None
        gw = xd.T @ g if w.requires_grad else None
        gb = g.sum(axis=0) if b is not None and b.requires_grad else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return record(out, parents, bw, "linear")


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def _windows(xp: np.ndarray, k: int, stride: int, out_sp: tuple[int, int, int]) -> np.ndarray:
    b, c = xp.shape[:2]
    s = xp.strides
    return as_strided(
        xp,
        shape=(b, c) + out_sp + (k, k, k),
        strides=(s[0], s[1], s[2] * stride, s[3] * stride, s[4] * stride, s[2], s[3], s[4]),
        writeable=False,
    )


def conv3d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, pad: int = 0) -> Tensor:
    """3D convolution. ``x`` is (B, C, D, H, W), ``w`` is (Cout, C, k, k, k)."""
    if x.ndim != 5 or w.ndim != 5 or x.shape[1] != w.shape[1] or len(set(w.shape[2:])) != 1:
        raise ShapeError("conv3d", x.shape, w.shape)
    bsz, cin = x.shape[:2]
    cout, k = w.shape[0], w.shape[2]
    out_sp = tuple(conv_output_size(n, k, stride, pad) for n in x.shape[2:])
    if min(out_sp) <= 0:
        raise ShapeError("conv3d", x.shape, w.shape)
    xp = np.pad(x.data, ((0, 0), (0, 0)) + ((pad, pad),) * 3) if pad else x.data
    win = _windows(np.ascontiguousarray(xp), k, stride, out_sp)
    # (B, oD, oH, oW, C, k, k, k) -> rows of receptive fields
    cols = win.transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(-1, cin * k ** 3)
    wmat = w.data.reshape(cout, -1)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    out = out.reshape((bsz,) + out_sp + (cout,)).transpose(0, 4, 1, 2, 3)
    xp_shape = xp.shape

    def bw(g):
        gcols = g.transpose(0, 2, 3, 4, 1).reshape(-1, cout)
        gw = (gcols.T @ cols).reshape(w.shape) if w.requires_grad else None
        gb = gcols.sum(axis=0) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            gwin = (gcols @ wmat).reshape((bsz,) + out_sp + (cin, k, k, k))
            gxp = np.zeros(xp_shape, dtype=g.dtype)
            od, oh, ow = out_sp
            for i in range(k):
                for j in range(k):
                    for l in range(k):
                        gxp[:, :,
                            i:i + stride * od:stride,
                            j:j + stride * oh:stride,
                            l:l + stride * ow:stride] += gwin[..., i, j, l].transpose(0, 4, 1, 2, 3)
            gx = gxp[:, :, pad:xp_shape[2] - pad, pad:xp_shape[3] - pad, pad:xp_shape[4] - pad] if pad else gxp
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return record(np.ascontiguousarray(out), parents, bw, "conv3d")


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.1,
               eps: float = 1e-5, mask: np.ndarray | None = None) -> Tensor:
    """Batch normalization over rows of a (N, C) input.

    In training mode batch statistics are used (restricted to rows where
    ``mask`` is true, if given) and the running buffers are updated in place.
    In eval mode the running statistics are used.
    """
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError("batch_norm", x.shape, gamma.shape, beta.shape)
    xd = x.data
    if not training:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = ((xd - running_mean) * inv).astype(xd.dtype)
        scale = (gamma.data * inv).astype(xd.dtype)

        def bw_eval(g):
            return (g * scale, (g * xhat).sum(axis=0), g.sum(axis=0))

        return record(xhat * gamma.data + beta.data, (x, gamma, beta), bw_eval, "batch_norm")

    rows = xd if mask is None else xd[mask]
    m = rows.shape[0]
    if m < 2:
        raise ShapeError("batch_norm(train) needs >= 2 rows", x.shape)
    mu = rows.mean(axis=0)
    var = rows.var(axis=0)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    running_mean *= 1 - momentum
    running_mean += momentum * mu
    running_var *= 1 - momentum
    running_var += momentum * var * m / (m - 1)
    in_stats = np.ones(len(xd), dtype=xd.dtype) if mask is None else mask.astype(xd.dtype)
    gd = gamma.data

    def bw(g):
        gg = (g * xhat).sum(axis=0)
        gb = g.sum(axis=0)
        # every output row depends on the statistics; only masked rows feed them
        gx = inv * (g * gd - in_stats[:, None] * (gb * gd + xhat * (gg * gd)) / m)
        return (gx.astype(xd.dtype), gg, gb)

    return record((xhat * gd + beta.data).astype(xd.dtype), (x, gamma, beta), bw, "batch_norm")


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not training or p <= 0:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1 - p)
    return record(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ---------------------------------------------------------------- losses

def log_softmax(logits: Tensor) -> Tensor:
    z = logits.data
    shifted = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def bw(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return record(out, (logits,), bw, "log_softmax")


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray,
                          weights: np.ndarray | None = None) -> Tensor:
    """Weighted mean cross entropy, ``sum(w * ce) / sum(w)``.

    ``logits`` is (N, C); ``labels`` holds class ids. Normalizing by the
    weight total keeps uniform logits at ``ln C`` whatever the weighting.
    """
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("softmax_cross_entropy", logits.shape, labels.shape)
    n, c = logits.shape
    if n == 0:
        raise ShapeError("softmax_cross_entropy (empty)", logits.shape)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    z = logits.data.astype(np.float64)
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    ce = lse - shifted[np.arange(n), labels]
    total = w.sum()
    out = np.asarray((w * ce).sum() / total, dtype=logits.dtype)
    soft = np.exp(shifted - lse[:, None])

    def bw(g):
        d = soft.copy()
        d[np.arange(n), labels] -= 1
        return ((g * d * (w / total)[:, None]).astype(logits.dtype),)

    return record(out, (logits,), bw, "softmax_cross_entropy")


def l1_loss(x: Tensor, y, normalizer: float | None = None) -> Tensor:
    """``sum(|x - y|) / normalizer`` (default: number of elements).

    The subgradient at ``x == y`` is taken as 0.
    """
    yd = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=x.dtype)
    if x.shape != yd.shape:
        raise ShapeError("l1", x.shape, yd.shape)
    norm = float(x.size if normalizer is None else normalizer)
    diff = x.data - yd
    s = np.sign(diff)
    out = np.asarray(np.abs(diff).sum() / norm, dtype=x.dtype)
    y_t = y if isinstance(y, Tensor) else None

    def bw(g):
        gx = g * s / norm
        return (gx, -gx) if y_t is not None else (gx,)

    parents = (x, y_t) if y_t is not None else (x,)
    return record(out, parents, bw, "l1")


def _nearest(src: np.ndarray, dst: np.ndarray, chunk: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Index of and squared distance to the nearest ``dst`` point for each ``src`` point."""
    idx = np.empty(len(src), dtype=np.intp)
    d2 = np.empty(len(src), dtype=np.float64)
    dst64 = dst.astype(np.float64)
    dn = (dst64 ** 2).sum(axis=1)
    for s in range(0, len(src), chunk):
        block = src[s:s + chunk].astype(np.float64)
        dist = (block ** 2).sum(axis=1)[:, None] - 2 * block @ dst64.T + dn[None, :]
        k = dist.argmin(axis=1)
        idx[s:s + chunk] = k
        d2[s:s + chunk] = ((block - dst64[k]) ** 2).sum(axis=1)
    return idx, d2


def chamfer_point_loss(p: Tensor, q: Tensor, p_weights: Tensor | None = None) -> Tensor:
    """Symmetric squared chamfer distance between point sets (a, 3) and (b, 3).

    ``mean_p min_q |p - q|^2 + mean_q min_p |p - q|^2``. With ``p_weights``
    the first term becomes a weighted mean over ``p``.
    """
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or len(p) == 0 or len(q) == 0:
        raise ShapeError("chamfer_point_loss", p.shape, q.shape)
    pd, qd = p.data, q.data
    pi, pd2 = _nearest(pd, qd)
    qi, qd2 = _nearest(qd, pd)
    if p_weights is None:
        w = np.full(len(pd), 1.0 / len(pd))
        wsum = 1.0
        wraw = None
    else:
        wraw = p_weights.data.astype(np.float64)
        wsum = wraw.sum()
        w = wraw / wsum
    term_p = (w * pd2).sum()
    term_q = qd2.mean()
    out = np.asarray(term_p + term_q, dtype=pd.dtype)

    def bw(g):
        g = float(g)
        diff_p = pd - qd[pi]
        diff_q = qd - pd[qi]
        gp = 2 * w[:, None] * diff_p
        gq = np.zeros_like(qd, dtype=np.float64)
        np.add.at(gq, pi, -gp)
        cq = 2 * diff_q / len(qd)
        gq += cq
        np.add.at(gp, qi, -cq)
        grads = [(g * gp).astype(pd.dtype), (g * gq).astype(qd.dtype)]
        if p_weights is not None:
            gw = (pd2 - term_p) / wsum
            grads.append((g * gw).astype(p_weights.dtype))
        return tuple(grads)

    parents = (p, q) if p_weights is None else (p, q, p_weights)
    return record(out, parents, bw, "chamfer_point_loss")


def directed_chamfer(p: Tensor, q: Tensor, weights: Tensor | None = None) -> Tensor:
    """One-sided squared chamfer: (weighted) mean over ``p`` of ``min_q |p - q|^2``.

    With ``weights`` the mean is ``sum(w * d) / sum(w)``, so the weights
    receive gradient as well as both point sets.
    """
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or len(p) == 0 or len(q) == 0:
        raise ShapeError("directed_chamfer", p.shape, q.shape)
    if weights is not None and weights.shape != (len(p),):
        raise ShapeError("directed_chamfer weights", p.shape, weights.shape)
    pd, qd = p.data, q.data
    pi, d2 = _nearest(pd, qd)
    if weights is None:
        wsum = float(len(pd))
        w = np.ones(len(pd))
    else:
        w = weights.data.astype(np.float64)
        wsum = w.sum()
        if not wsum > 0:
            raise ValueError("directed_chamfer: weights must have a positive sum")
    value = (w * d2).sum() / wsum
    out = np.asarray(value, dtype=pd.dtype)

    def bw(g):
        g = float(g)
        gp = 2 * (w / wsum)[:, None] * (pd - qd[pi])
        gq = np.zeros(qd.shape, dtype=np.float64)
        np.add.at(gq, pi, -gp)
        grads = [(g * gp).astype(pd.dtype), (g * gq).astype(qd.dtype)]
        if weights is not None:
            grads.append((g * (d2 - value) / wsum).astype(weights.dtype))
        return tuple(grads)

    parents = (p, q) if weights is None else (p, q, weights)
    return record(out, parents, bw, "directed_chamfer")


def expected_nearest(dist: Tensor, probs: Tensor, fallback: np.ndarray) -> Tensor:
    """Mean over rows of the expected distance to the nearest *kept* column.

    ``dist`` is (T, F): distance from each of T query points to each of F
    candidates; candidate f is kept independently with probability
    ``probs[f]``. Per row, with columns sorted by distance,
    ``E = sum_k d_k p_k prod_{j<k}(1 - p_j) + fallback * prod_j (1 - p_j)``.
    With all probabilities 1 this is the plain nearest distance.
    """
    if dist.ndim != 2 or probs.shape != (dist.shape[1],) or np.shape(fallback) != (dist.shape[0],):
        raise ShapeError("expected_nearest", dist.shape, probs.shape, np.shape(fallback))
    t, f = dist.shape
    dd = dist.data.astype(np.float64)
    pp = probs.data.astype(np.float64)
    fb = np.asarray(fallback, dtype=np.float64)
    order = np.argsort(dd, axis=1, kind="stable")
    ds = np.take_along_axis(dd, order, axis=1)
    ps = pp[order]
    q = 1 - ps
    # survival before k: prod_{j<k} (1 - p_j)
    surv = np.concatenate([np.ones((t, 1)), np.cumprod(q, axis=1)], axis=1)
    before = surv[:, :-1]
    tail = surv[:, -1]
    per_row = (ds * ps * before).sum(axis=1) + fb * tail
    out = np.asarray(per_row.mean(), dtype=dist.dtype)

    def bw(g):
        g = float(g) / t
        g_ds = g * ps * before
        # d E / d p_k = d_k before_k - sum_{m>k} d_m p_m before_m / q_k - fb tail / q_k
        # computed without dividing by q_k: suffix sums of the products excluding k
        contrib = ds * ps
        # R_k = sum_{m>k} d_m p_m prod_{k<j<m} q_j + fb prod_{j>k} q_j  (backward recursion)
        r = np.empty((t, f))
        acc = fb.copy()
        for k in range(f - 1, -1, -1):
            r[:, k] = acc
            acc = contrib[:, k] + q[:, k] * acc
        g_ps = g * before * (ds - r)
        g_dist = np.zeros((t, f))
        np.put_along_axis(g_dist, order, g_ds, axis=1)
        g_probs = np.zeros(f)
        np.add.at(g_probs, order.ravel(), g_ps.ravel())
        return (g_dist.astype(dist.dtype), g_probs.astype(probs.dtype))

    return record(out, (dist, probs), bw, "expected_nearest")
