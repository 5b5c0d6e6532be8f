"""Graph-convolution scoring model over bipartite states, written on numpy.

Architecture (all affine weights stored (out, in); h is the embedding width):

  prenorm            fixed per-feature standardization of C, E, V inputs
  C-embed            5 -> h -> h, relu after each affine          (h^2 + 7h)
  V-embed            19 -> h -> h, relu after each affine         (h^2 + 21h)
  conv V->C          per-edge affine of [source, edge, target] -> h, relu,
                     affine h -> h, value-ordered sum into target rows, then
                     affine [agg, target] -> h, relu, affine h -> h (no bias)
                                                                  (6h^2 + 4h)
  conv C->V          same shape, sources are the updated C rows   (6h^2 + 4h)
  head               h -> h, relu, h -> 1 (no bias)               (h^2 + 2h)

Total trainable parameters: 15 h^2 + 38 h. Aggregations sort message values
per target and coordinate before summing, so logits are bitwise invariant
under graph permutations in 64-bit mode.
"""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .features import BipartiteState

C_DIM, E_DIM, V_DIM = 5, 1, 19

_MAGIC = b"BLGC"
_VERSION = 1


class LayerError(RuntimeError):
    """Raised when a layer produces non-finite activations."""


@dataclass
class GcnnConfig:
    embedding_dim: int = 8

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be at least 1")


def param_shapes(h: int) -> dict[str, tuple]:
    """The documented layer inventory; iteration order is the file order."""
    return {
        "c_emb_w1": (h, C_DIM), "c_emb_b1": (h,),
        "c_emb_w2": (h, h), "c_emb_b2": (h,),
        "v_emb_w1": (h, V_DIM), "v_emb_b1": (h,),
        "v_emb_w2": (h, h), "v_emb_b2": (h,),
        "vc_src_w": (h, h), "vc_edge_w": (h, E_DIM), "vc_tgt_w": (h, h),
        "vc_msg_b": (h,), "vc_mix_w": (h, h), "vc_mix_b": (h,),
        "vc_upd_w1": (h, 2 * h), "vc_upd_b1": (h,), "vc_upd_w2": (h, h),
        "cv_src_w": (h, h), "cv_edge_w": (h, E_DIM), "cv_tgt_w": (h, h),
        "cv_msg_b": (h,), "cv_mix_w": (h, h), "cv_mix_b": (h,),
        "cv_upd_w1": (h, 2 * h), "cv_upd_b1": (h,), "cv_upd_w2": (h, h),
        "head_w1": (h, h), "head_b1": (h,), "head_w2": (h,),
    }


def param_count(config: GcnnConfig | int) -> int:
    h = config.embedding_dim if isinstance(config, GcnnConfig) else int(config)
    return sum(int(np.prod(s)) for s in param_shapes(h).values())


@dataclass
class GcnnParams:
    h: int
    tensors: dict[str, np.ndarray]
    prenorm_shift: dict[str, np.ndarray] = field(default_factory=dict)
    prenorm_scale: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "GcnnParams":
        return GcnnParams(
            h=self.h,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            prenorm_shift={k: v.copy() for k, v in self.prenorm_shift.items()},
            prenorm_scale={k: v.copy() for k, v in self.prenorm_scale.items()},
        )


def init_params(config: GcnnConfig, seed: int) -> GcnnParams:
    """Xavier-uniform weights, small uniform biases, identity prenorm until fitted."""
    rng = np.random.default_rng(seed)
    h = config.embedding_dim
    shapes = param_shapes(h)
    bias_fan_in = {
        "c_emb_b1": C_DIM, "c_emb_b2": h, "v_emb_b1": V_DIM, "v_emb_b2": h,
        "vc_msg_b": 2 * h + E_DIM, "vc_mix_b": h, "vc_upd_b1": 2 * h,
        "cv_msg_b": 2 * h + E_DIM, "cv_mix_b": h, "cv_upd_b1": 2 * h,
        "head_b1": h,
    }
    tensors = {}
    for key, shape in shapes.items():
        if key in bias_fan_in:
            bound = 1.0 / np.sqrt(bias_fan_in[key])
            tensors[key] = rng.uniform(-bound, bound, size=shape)
            continue
        if len(shape) == 1:  # head_w2 acts as an (1, h) affine
            fan_in, fan_out = shape[0], 1
        else:
            fan_out, fan_in = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[key] = rng.uniform(-bound, bound, size=shape)
    dims = {"C": C_DIM, "E": E_DIM, "V": V_DIM}
    return GcnnParams(
        h=config.embedding_dim,
        tensors=tensors,
        prenorm_shift={k: np.zeros(d) for k, d in dims.items()},
        prenorm_scale={k: np.ones(d) for k, d in dims.items()},
    )


def fit_prenorm(params: GcnnParams, states) -> GcnnParams:
    """Fit the fixed standardization to a collection of states.

    Constant features get scale 0 so they standardize to exactly zero.
    """
    states = list(states)
    if not states:
        raise ValueError("need at least one state to fit prenorm")
    C = np.vstack([s.C for s in states])
    E = np.concatenate([s.edge_val for s in states]).reshape(-1, 1)
    V = np.vstack([s.V for s in states])
    for key, data in (("C", C), ("E", E), ("V", V)):
        if len(data) == 0:
            continue
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        scale = np.zeros_like(std)
        varying = std > 1e-12
        scale[varying] = 1.0 / std[varying]
        params.prenorm_shift[key] = mean
        params.prenorm_scale[key] = scale
    return params


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _segment_sum_sorted(values: np.ndarray, seg: np.ndarray, nseg: int):
    """Sum rows of ``values`` into ``nseg`` buckets, value-sorting first.

    Sorting each bucket's entries per column and accumulating them in a fixed
    sequential order makes the result independent of edge order and of where
    a bucket sits in memory, which keeps logits bitwise stable under graph
    permutations. The gradient is a plain gather, no sort needed.
    """
    out = np.zeros((nseg, values.shape[1]), dtype=values.dtype)
    if len(seg) == 0:
        return out
    order = np.argsort(seg, kind="stable")
    sv = values[order]
    counts = np.bincount(seg, minlength=nseg)
    starts = np.concatenate([[0], np.cumsum(counts)])
    active = np.where(counts > 0)[0]
    for size in np.unique(counts[active]):
        segs = active[counts[active] == size]
        idx = starts[segs][:, None] + np.arange(size)[None, :]
        blocks = np.sort(sv[idx], axis=1)
        acc = blocks[:, 0, :].copy()
        for k in range(1, size):
            acc += blocks[:, k, :]
        out[segs] = acc
    return out


def _affine_rows(X: np.ndarray, W: np.ndarray, b: np.ndarray | None):
    """Row-wise affine X @ W.T + b with a fixed accumulation order.

    BLAS kernels may round each output differently depending on row position;
    accumulating column products sequentially keeps every row's arithmetic
    identical, so permuting rows permutes results bitwise.
    """
    n = X.shape[0]
    out_dim = W.shape[0]
    if b is None:
        out = np.zeros((n, out_dim), dtype=X.dtype)
    else:
        out = np.broadcast_to(b, (n, out_dim)).astype(X.dtype, copy=True)
    for k in range(X.shape[1]):
        out += X[:, k, None] * W[None, :, k]
    return out


def _check_finite(name: str, *arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise LayerError(f"non-finite activation in layer {name!r}")


def _pack(states: list[BipartiteState]):
    """Concatenate states into one block-diagonal graph."""
    cs, vs, evals, erows, ecols = [], [], [], [], []
    v_offsets, c_offsets = [], []
    coff = voff = 0
    for s in states:
        c_offsets.append(coff)
        v_offsets.append(voff)
        cs.append(s.C)
        vs.append(s.V)
        evals.append(s.edge_val)
        erows.append(s.edge_row + coff)
        ecols.append(s.edge_col + voff)
        coff += s.m
        voff += s.n
    return {
        "C": np.vstack(cs),
        "V": np.vstack(vs),
        "E": np.concatenate(evals).reshape(-1, 1),
        "erow": np.concatenate(erows).astype(np.int64),
        "ecol": np.concatenate(ecols).astype(np.int64),
        "v_offsets": v_offsets,
        "c_offsets": c_offsets,
    }


def _forward_graph(params: GcnnParams, C, E, V, erow, ecol, cache: dict | None):
    t = params.tensors
    dt = C.dtype

    def pre(key, data):
        return (data - params.prenorm_shift[key].astype(dt)) * \
            params.prenorm_scale[key].astype(dt)

    Cn, En, Vn = pre("C", C), pre("E", E), pre("V", V)
    C0p = _affine_rows(Cn, t["c_emb_w1"].astype(dt), t["c_emb_b1"].astype(dt))
    C0 = np.maximum(C0p, 0)
    C1p = _affine_rows(C0, t["c_emb_w2"].astype(dt), t["c_emb_b2"].astype(dt))
    C1 = np.maximum(C1p, 0)
    V0p = _affine_rows(Vn, t["v_emb_w1"].astype(dt), t["v_emb_b1"].astype(dt))
    V0 = np.maximum(V0p, 0)
    V1p = _affine_rows(V0, t["v_emb_w2"].astype(dt), t["v_emb_b2"].astype(dt))
    V1 = np.maximum(V1p, 0)
    _check_finite("embedding", C1, V1)

    def conv(prefix, src, tgt, seg, nseg):
        S = src[ecol] if prefix == "vc" else src[erow]
        T = tgt[erow] if prefix == "vc" else tgt[ecol]
        Z1p = _affine_rows(S, t[f"{prefix}_src_w"].astype(dt),
                           t[f"{prefix}_msg_b"].astype(dt))
        Z1p += _affine_rows(En, t[f"{prefix}_edge_w"].astype(dt), None)
        Z1p += _affine_rows(T, t[f"{prefix}_tgt_w"].astype(dt), None)
        Z1 = np.maximum(Z1p, 0)
        Z2 = _affine_rows(Z1, t[f"{prefix}_mix_w"].astype(dt),
                          t[f"{prefix}_mix_b"].astype(dt))
        agg = _segment_sum_sorted(Z2, seg, nseg)
        cat = np.concatenate([agg, tgt], axis=1)
        U1p = _affine_rows(cat, t[f"{prefix}_upd_w1"].astype(dt),
                           t[f"{prefix}_upd_b1"].astype(dt))
        U1 = np.maximum(U1p, 0)
        out = _affine_rows(U1, t[f"{prefix}_upd_w2"].astype(dt), None)
        _check_finite(f"conv_{prefix}", out)
        if cache is not None:
            cache[prefix] = dict(S=S, T=T, Z1p=Z1p, Z1=Z1, Z2=Z2, agg=agg,
                                 cat=cat, U1p=U1p, U1=U1)
        return out

    C2 = conv("vc", V1, C1, erow, C.shape[0])
    V2 = conv("cv", C2, V1, ecol, V.shape[0])

    H1p = _affine_rows(V2, t["head_w1"].astype(dt), t["head_b1"].astype(dt))
    H1 = np.maximum(H1p, 0)
    logits = _affine_rows(H1, t["head_w2"].astype(dt).reshape(1, -1), None)[:, 0]
    _check_finite("head", logits)

    if cache is not None:
        cache.update(Cn=Cn, En=En, Vn=Vn, C0p=C0p, C0=C0, C1p=C1p, C1=C1,
                     V0p=V0p, V0=V0, V1p=V1p, V1=V1, C2=C2, V2=V2,
                     H1p=H1p, H1=H1, erow=erow, ecol=ecol)
    return logits


def forward(params: GcnnParams, state: BipartiteState) -> np.ndarray:
    """Per-variable logits for one state."""
    if state.C.shape[1] != C_DIM or state.V.shape[1] != V_DIM:
        raise ValueError("state feature dimensions do not match the model")
    return _forward_graph(
        params,
        state.C,
        state.edge_val.reshape(-1, 1),
        state.V,
        state.edge_row.astype(np.int64),
        state.edge_col.astype(np.int64),
        cache=None,
    )


def masked_softmax(logits: np.ndarray, candidates) -> np.ndarray:
    """Softmax over the candidate subset; other entries act as minus infinity."""
    z = logits[np.asarray(candidates, dtype=np.int64)]
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _backward_graph(params: GcnnParams, cache: dict, g_logits: np.ndarray):
    t = params.tensors
    grads = {k: np.zeros_like(v) for k, v in t.items()}
    erow, ecol = cache["erow"], cache["ecol"]

    grads["head_w2"] = cache["H1"].T @ g_logits
    g_H1 = np.outer(g_logits, t["head_w2"])
    g_H1p = g_H1 * (cache["H1p"] > 0)
    grads["head_w1"] = g_H1p.T @ cache["V2"]
    grads["head_b1"] = g_H1p.sum(axis=0)
    g_V2 = g_H1p @ t["head_w1"]

    def conv_backward(prefix, g_out, n_src, src_seg, tgt_seg):
        c = cache[prefix]
        grads[f"{prefix}_upd_w2"] = g_out.T @ c["U1"]
        g_U1 = g_out @ t[f"{prefix}_upd_w2"]
        g_U1p = g_U1 * (c["U1p"] > 0)
        grads[f"{prefix}_upd_w1"] = g_U1p.T @ c["cat"]
        grads[f"{prefix}_upd_b1"] = g_U1p.sum(axis=0)
        g_cat = g_U1p @ t[f"{prefix}_upd_w1"]
        h = params.h
        g_agg, g_tgt_direct = g_cat[:, :h], g_cat[:, h:]
        g_Z2 = g_agg[tgt_seg]
        grads[f"{prefix}_mix_w"] = g_Z2.T @ c["Z1"]
        grads[f"{prefix}_mix_b"] = g_Z2.sum(axis=0)
        g_Z1 = g_Z2 @ t[f"{prefix}_mix_w"]
        g_Z1p = g_Z1 * (c["Z1p"] > 0)
        grads[f"{prefix}_src_w"] = g_Z1p.T @ c["S"]
        grads[f"{prefix}_edge_w"] = g_Z1p.T @ cache["En"]
        grads[f"{prefix}_tgt_w"] = g_Z1p.T @ c["T"]
        grads[f"{prefix}_msg_b"] = g_Z1p.sum(axis=0)
        g_src = np.zeros((n_src, h))
        np.add.at(g_src, src_seg, g_Z1p @ t[f"{prefix}_src_w"])
        g_tgt = g_tgt_direct.copy()
        np.add.at(g_tgt, tgt_seg, g_Z1p @ t[f"{prefix}_tgt_w"])
        return g_src, g_tgt

    # conv C->V: sources are C2 rows (via erow), targets V1 rows (via ecol)
    g_C2, g_V1 = conv_backward("cv", g_V2, cache["C2"].shape[0], erow, ecol)
    # conv V->C: sources are V1 rows (via ecol), targets C1 rows (via erow)
    g_V1_more, g_C1 = conv_backward("vc", g_C2, cache["V1"].shape[0], ecol, erow)
    g_V1 += g_V1_more

    g_C1p = g_C1 * (cache["C1p"] > 0)
    grads["c_emb_w2"] = g_C1p.T @ cache["C0"]
    grads["c_emb_b2"] = g_C1p.sum(axis=0)
    g_C0 = g_C1p @ t["c_emb_w2"]
    g_C0p = g_C0 * (cache["C0p"] > 0)
    grads["c_emb_w1"] = g_C0p.T @ cache["Cn"]
    grads["c_emb_b1"] = g_C0p.sum(axis=0)

    g_V1p = g_V1 * (cache["V1p"] > 0)
    grads["v_emb_w2"] = g_V1p.T @ cache["V0"]
    grads["v_emb_b2"] = g_V1p.sum(axis=0)
    g_V0 = g_V1p @ t["v_emb_w2"]
    g_V0p = g_V0 * (cache["V0p"] > 0)
    grads["v_emb_w1"] = g_V0p.T @ cache["Vn"]
    grads["v_emb_b1"] = g_V0p.sum(axis=0)
    return grads


def loss_and_grads(params: GcnnParams, samples) -> tuple[float, dict]:
    """Mean candidate-masked cross-entropy over a batch, with exact gradients.

    Each sample needs ``state``, ``candidates``, and ``expert_action``
    attributes; the expert action must be one of its candidates.
    """
    if not samples:
        raise ValueError("empty batch")
    states = [s.state for s in samples]
    packed = _pack(states)
    cache: dict = {}
    logits = _forward_graph(params, packed["C"], packed["E"], packed["V"],
                            packed["erow"], packed["ecol"], cache)
    g_logits = np.zeros_like(logits)
    total = 0.0
    for s, off in zip(samples, packed["v_offsets"]):
        cand = np.asarray(s.candidates, dtype=np.int64) + off
        pos = list(s.candidates).index(s.expert_action)
        z = logits[cand]
        z = z - z.max()
        logp = z - np.log(np.exp(z).sum())
        total += -float(logp[pos])
        p = np.exp(logp)
        p[pos] -= 1.0
        g_logits[cand] += p / len(samples)
    grads = _backward_graph(params, cache, g_logits)
    return total / len(samples), grads


def batch_loss(params: GcnnParams, samples) -> float:
    if not samples:
        raise ValueError("empty batch")
    packed = _pack([s.state for s in samples])
    logits = _forward_graph(params, packed["C"], packed["E"], packed["V"],
                            packed["erow"], packed["ecol"], cache=None)
    total = 0.0
    for s, off in zip(samples, packed["v_offsets"]):
        cand = np.asarray(s.candidates, dtype=np.int64) + off
        pos = list(s.candidates).index(s.expert_action)
        z = logits[cand]
        z = z - z.max()
        total += -float(z[pos] - np.log(np.exp(z).sum()))
    return total / len(samples)


# ---------------------------------------------------------------------------
# sizing and latency
# ---------------------------------------------------------------------------


def cast_params(params: GcnnParams, dtype) -> GcnnParams:
    return GcnnParams(
        h=params.h,
        tensors={k: v.astype(dtype) for k, v in params.tensors.items()},
        prenorm_shift={k: v.astype(dtype) for k, v in params.prenorm_shift.items()},
        prenorm_scale={k: v.astype(dtype) for k, v in params.prenorm_scale.items()},
    )


def latency_probe(params: GcnnParams, state: BipartiteState,
                  repetitions: int = 1000, dtype=np.float64) -> float:
    """Mean forward latency in milliseconds after 10 warm-up calls."""
    if dtype is not np.float64:
        params = cast_params(params, dtype)
        state = BipartiteState(
            C=state.C.astype(dtype),
            edge_row=state.edge_row,
            edge_col=state.edge_col,
            edge_val=state.edge_val.astype(dtype),
            V=state.V.astype(dtype),
        )
    for _ in range(10):
        forward(params, state)
    t0 = time.perf_counter()
    for _ in range(repetitions):
        forward(params, state)
    return (time.perf_counter() - t0) * 1000.0 / repetitions


# ---------------------------------------------------------------------------
# model file io
# ---------------------------------------------------------------------------


def save_model(params: GcnnParams, path: str):
    body = bytearray()
    body += _MAGIC
    body += struct.pack("<IIIII", _VERSION, params.h, C_DIM, E_DIM, V_DIM)
    for key in ("C", "E", "V"):
        body += params.prenorm_shift[key].astype("<f8").tobytes()
        body += params.prenorm_scale[key].astype("<f8").tobytes()
    for key in param_shapes(params.h):
        body += params.tensors[key].astype("<f8").tobytes()
    body += hashlib.sha256(bytes(body)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(body))


def load_model(path: str) -> GcnnParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 20 + 32 or blob[:4] != _MAGIC:
        raise ValueError("not a model file (bad magic)")
    if hashlib.sha256(blob[:-32]).digest() != blob[-32:]:
        raise ValueError("model file is corrupt (digest mismatch)")
    version, h, cd, ed, vd = struct.unpack_from("<IIIII", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported model version {version}")
    if (cd, ed, vd) != (C_DIM, E_DIM, V_DIM):
        raise ValueError("model feature dimensions do not match this build")
    off = 24
    shift, scale = {}, {}
    for key, dim in (("C", C_DIM), ("E", E_DIM), ("V", V_DIM)):
        shift[key] = np.frombuffer(blob, "<f8", dim, off).copy()
        off += 8 * dim
        scale[key] = np.frombuffer(blob, "<f8", dim, off).copy()
        off += 8 * dim
    tensors = {}
    for key, shape in param_shapes(h).items():
        size = int(np.prod(shape))
        tensors[key] = np.frombuffer(blob, "<f8", size, off).reshape(shape).copy()
        off += 8 * size
    if off != len(blob) - 32:
        raise ValueError("model file is truncated or oversized")
    return GcnnParams(h=h, tensors=tensors, prenorm_shift=shift,
                      prenorm_scale=scale)


def model_info(path: str) -> dict:
    params = load_model(path)
    return {
        "embedding_dim": params.h,
        "feature_dims": {"C": C_DIM, "E": E_DIM, "V": V_DIM},
        "parameters": param_count(params.h),
    }
