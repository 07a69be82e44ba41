"""Desk-scale trainable transformer over packed sequences.

Post-norm encoder stack shared by all regions; the additive visibility bias is
applied inside every attention head, so one set of weights serves both the
bidirectional source side and the causal rewrite side.  Forward, loss, and
analytic gradients are hand-written over float64 numpy; shapes follow the
[batch, length, d_model] convention throughout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import RewriterError
from .masks import NEG_BIAS, MaskVariant, build_mask, mask_to_additive
from .packing import EOS_ID, PackedSequence, append_rewrite_token, start_decode

_GELU_C = float(np.sqrt(2.0 / np.pi))
_LN_EPS = 1e-5

CHECKPOINT_MAGIC = b"SRLW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_position: int = 64
    dropout_rate: float = 0.0
    mask_variant: MaskVariant = MaskVariant.TRIPLE_MASK
    tie_embeddings: bool = False

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise RewriterError(
                "CONFIG_INVALID", f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        if self.vocab_size < 4:
            raise RewriterError("CONFIG_INVALID", "vocab_size must cover the reserved tokens")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise RewriterError("CONFIG_INVALID", f"bad dropout_rate {self.dropout_rate}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mask_variant"] = self.mask_variant.value
        return out

    @staticmethod
    def from_dict(obj: dict) -> "ModelConfig":
        obj = dict(obj)
        obj["mask_variant"] = MaskVariant(obj["mask_variant"])
        return ModelConfig(**obj)


def _parameter_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Declared parameter order; the checkpoint format serializes exactly this."""
    d, f, v, p = config.d_model, config.d_ff, config.vocab_size, config.max_position
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("tok_emb", (v, d)),
        ("seg_emb", (3, d)),
        ("pos_emb", (p, d)),
    ]
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        for name in ("Wq", "Wk", "Wv", "Wo"):
            shapes.append((pre + f"attn.{name}", (d, d)))
        for name in ("bq", "bk", "bv", "bo"):
            shapes.append((pre + f"attn.{name}", (d,)))
        shapes.append((pre + "ln1.g", (d,)))
        shapes.append((pre + "ln1.b", (d,)))
        shapes.append((pre + "ff.W1", (d, f)))
        shapes.append((pre + "ff.b1", (f,)))
        shapes.append((pre + "ff.W2", (f, d)))
        shapes.append((pre + "ff.b2", (d,)))
        shapes.append((pre + "ln2.g", (d,)))
        shapes.append((pre + "ln2.b", (d,)))
    if not config.tie_embeddings:
        shapes.append(("out.W", (d, v)))
    shapes.append(("out.b", (v,)))
    return shapes


def _init_parameter(name: str, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if name.endswith(".g"):
        return np.ones(shape)
    if name.endswith((".b", "bq", "bk", "bv", "bo", "b1", "b2")):
        return np.zeros(shape)
    fan_in = shape[-1] if name.endswith("_emb") else shape[0]
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class RewriterModel:
    """Embedding tables plus transformer stack; parameters carry gradient slots."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {
            name: _init_parameter(name, shape, rng) for name, shape in _parameter_shapes(config)
        }
        self.grads: dict[str, np.ndarray] = {
            name: np.zeros_like(p) for name, p in self.params.items()
        }

    # -- bookkeeping --------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def copy(self) -> "RewriterModel":
        clone = RewriterModel.__new__(RewriterModel)
        clone.config = self.config
        clone.params = {k: v.copy() for k, v in self.params.items()}
        clone.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        return clone

    def _out_weight(self) -> np.ndarray:
        return self.params["tok_emb"].T if self.config.tie_embeddings else self.params["out.W"]

    # -- forward ------------------------------------------------------------

    def embed_ids(self, ids: np.ndarray, segs: np.ndarray, poss: np.ndarray) -> np.ndarray:
        cfg = self.config
        if ids.max(initial=0) >= cfg.vocab_size or ids.min(initial=0) < 0:
            raise RewriterError("ID_OUT_OF_RANGE", "token id outside the embedding table")
        if segs.max(initial=0) >= 3 or segs.min(initial=0) < 0:
            raise RewriterError("ID_OUT_OF_RANGE", "segment id outside the 3-row table")
        if poss.max(initial=0) >= cfg.max_position or poss.min(initial=0) < 0:
            raise RewriterError(
                "ID_OUT_OF_RANGE",
                f"position id {poss.max(initial=0)} outside max_position {cfg.max_position}",
            )
        p = self.params
        return p["tok_emb"][ids] + p["seg_emb"][segs] + p["pos_emb"][poss]

    def forward_batch(
        self,
        batch: dict,
        need_cache: bool = False,
        train: bool = False,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> tuple[np.ndarray, Optional[list]]:
        """Logits [B, L, V] for a made batch; cache retained only when asked."""
        cfg = self.config
        p = self.params
        ids, segs, poss, bias = batch["ids"], batch["segs"], batch["poss"], batch["bias"]
        if bias.shape[-1] != ids.shape[-1] or bias.shape[-2] != ids.shape[-1]:
            raise RewriterError("SHAPE_MISMATCH", "mask side does not match sequence length")
        B, L = ids.shape
        H, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
        scale = 1.0 / np.sqrt(dh)
        rate = cfg.dropout_rate if train else 0.0
        if rate > 0.0 and dropout_rng is None:
            raise RewriterError("CONFIG_INVALID", "dropout active but no rng supplied")

        def dropout(x: np.ndarray, store: list) -> np.ndarray:
            if rate == 0.0:
                store.append(None)
                return x
            keep = dropout_rng.random(x.shape) >= rate
            store.append(keep)
            return x * keep / (1.0 - rate)

        x = self.embed_ids(ids, segs, poss)
        caches: list = []
        emb_drop: list = []
        x = dropout(x, emb_drop)
        for i in range(cfg.n_layers):
            pre = f"layers.{i}."
            q = x @ p[pre + "attn.Wq"] + p[pre + "attn.bq"]
            k = x @ p[pre + "attn.Wk"] + p[pre + "attn.bk"]
            v = x @ p[pre + "attn.Wv"] + p[pre + "attn.bv"]
            qh = q.reshape(B, L, H, dh).transpose(0, 2, 1, 3)
            kh = k.reshape(B, L, H, dh).transpose(0, 2, 1, 3)
            vh = v.reshape(B, L, H, dh).transpose(0, 2, 1, 3)
            scores = qh @ kh.transpose(0, 1, 3, 2) * scale + bias[:, None, :, :]
            scores -= scores.max(axis=-1, keepdims=True)
            attn = np.exp(scores)
            attn /= attn.sum(axis=-1, keepdims=True)
            drops: list = []
            attn_d = dropout(attn, drops)
            ctx = (attn_d @ vh).transpose(0, 2, 1, 3).reshape(B, L, cfg.d_model)
            out = ctx @ p[pre + "attn.Wo"] + p[pre + "attn.bo"]
            out = dropout(out, drops)
            res1 = x + out
            x1, ln1_cache = _layer_norm_forward(res1, p[pre + "ln1.g"], p[pre + "ln1.b"])
            h_pre = x1 @ p[pre + "ff.W1"] + p[pre + "ff.b1"]
            h_act, gelu_cache = _gelu_forward(h_pre)
            ff = h_act @ p[pre + "ff.W2"] + p[pre + "ff.b2"]
            ff = dropout(ff, drops)
            res2 = x1 + ff
            x2, ln2_cache = _layer_norm_forward(res2, p[pre + "ln2.g"], p[pre + "ln2.b"])
            if need_cache:
                caches.append(
                    dict(
                        x_in=x, attn=attn, attn_d=attn_d, qh=qh, kh=kh, vh=vh, ctx=ctx,
                        ln1=ln1_cache, x1=x1, h_pre=h_pre, h_act=h_act, gelu=gelu_cache,
                        ln2=ln2_cache, drops=drops,
                    )
                )
            x = x2
        logits = x @ self._out_weight() + p["out.b"]
        if need_cache:
            return logits, [ids, segs, poss, emb_drop, caches, x]
        return logits, None

    def loss_and_grads(
        self,
        batch: dict,
        loss_scale: float = 1.0,
        train: bool = False,
        dropout_rng: Optional[np.random.Generator] = None,
    ) -> tuple[float, int]:
        """Summed NLL over target positions; analytic gradients accumulate into
        ``self.grads`` scaled by ``loss_scale``.  Returns (loss, target count)."""
        target_mask, target_ids = batch["target_mask"], batch["target_ids"]
        n_targets = int(target_mask.sum())
        if n_targets == 0:
            raise RewriterError("NO_REFERENCE", "batch contains no loss targets")
        logits, cache = self.forward_batch(
            batch, need_cache=True, train=train, dropout_rng=dropout_rng
        )
        shifted = logits - logits.max(axis=-1, keepdims=True)
        exp = np.exp(shifted)
        norm = exp.sum(axis=-1, keepdims=True)
        probs = exp / norm
        logp = shifted - np.log(norm)
        bi, li = np.nonzero(target_mask)
        loss = float(-logp[bi, li, target_ids[bi, li]].sum())

        dlogits = probs * target_mask[:, :, None]
        dlogits[bi, li, target_ids[bi, li]] -= 1.0
        dlogits *= loss_scale
        self._backward(dlogits, batch, cache)
        return loss, n_targets

    # -- backward -----------------------------------------------------------

    def _backward(self, dlogits: np.ndarray, batch: dict, cache: list) -> None:
        cfg = self.config
        p, g = self.params, self.grads
        ids, segs, poss, emb_drop, layer_caches, x_final = cache
        B, L = ids.shape
        H, dh = cfg.n_heads, cfg.d_model // cfg.n_heads
        scale = 1.0 / np.sqrt(dh)
        rate = cfg.dropout_rate if emb_drop[0] is not None else 0.0

        def undrop(dx: np.ndarray, keep) -> np.ndarray:
            if keep is None:
                return dx
            return dx * keep / (1.0 - rate)

        g["out.b"] += dlogits.sum(axis=(0, 1))
        if cfg.tie_embeddings:
            g["tok_emb"] += np.tensordot(dlogits, x_final, axes=([0, 1], [0, 1]))
        else:
            g["out.W"] += np.tensordot(x_final, dlogits, axes=([0, 1], [0, 1]))
        dx = dlogits @ self._out_weight().T

        for i in reversed(range(cfg.n_layers)):
            pre = f"layers.{i}."
            c = layer_caches[i]
            dres2, dg2, db2 = _layer_norm_backward(dx, c["ln2"])
            g[pre + "ln2.g"] += dg2
            g[pre + "ln2.b"] += db2
            dff = undrop(dres2, c["drops"][2])
            g[pre + "ff.b2"] += dff.sum(axis=(0, 1))
            g[pre + "ff.W2"] += np.tensordot(c["h_act"], dff, axes=([0, 1], [0, 1]))
            dh_act = dff @ p[pre + "ff.W2"].T
            dh_pre = _gelu_backward(dh_act, c["gelu"])
            g[pre + "ff.b1"] += dh_pre.sum(axis=(0, 1))
            g[pre + "ff.W1"] += np.tensordot(c["x1"], dh_pre, axes=([0, 1], [0, 1]))
            dx1 = dres2 + dh_pre @ p[pre + "ff.W1"].T
            dres1, dg1, db1 = _layer_norm_backward(dx1, c["ln1"])
            g[pre + "ln1.g"] += dg1
            g[pre + "ln1.b"] += db1
            dout = undrop(dres1, c["drops"][1])
            g[pre + "attn.bo"] += dout.sum(axis=(0, 1))
            g[pre + "attn.Wo"] += np.tensordot(c["ctx"], dout, axes=([0, 1], [0, 1]))
            dctx = (dout @ p[pre + "attn.Wo"].T).reshape(B, L, H, dh).transpose(0, 2, 1, 3)
            dattn_d = dctx @ c["vh"].transpose(0, 1, 3, 2)
            dvh = c["attn_d"].transpose(0, 1, 3, 2) @ dctx
            dattn = undrop(dattn_d, c["drops"][0])
            dscores = c["attn"] * (dattn - (dattn * c["attn"]).sum(axis=-1, keepdims=True))
            dqh = dscores @ c["kh"] * scale
            dkh = dscores.transpose(0, 1, 3, 2) @ c["qh"] * scale
            dq = dqh.transpose(0, 2, 1, 3).reshape(B, L, cfg.d_model)
            dk = dkh.transpose(0, 2, 1, 3).reshape(B, L, cfg.d_model)
            dv = dvh.transpose(0, 2, 1, 3).reshape(B, L, cfg.d_model)
            x_in = c["x_in"]
            for name, dmat in (("q", dq), ("k", dk), ("v", dv)):
                g[pre + f"attn.b{name}"] += dmat.sum(axis=(0, 1))
                g[pre + f"attn.W{name}"] += np.tensordot(x_in, dmat, axes=([0, 1], [0, 1]))
            dx = (
                dres1
                + dq @ p[pre + "attn.Wq"].T
                + dk @ p[pre + "attn.Wk"].T
                + dv @ p[pre + "attn.Wv"].T
            )
        dx = undrop(dx, emb_drop[0])
        np.add.at(g["tok_emb"], ids, dx)
        np.add.at(g["seg_emb"], segs, dx)
        np.add.at(g["pos_emb"], poss, dx)


def _layer_norm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = centered * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def _layer_norm_backward(dout: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv, gamma = cache
    dgamma = (dout * xhat).sum(axis=tuple(range(dout.ndim - 1)))
    dbeta = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * gamma
    mean1 = dxhat.mean(axis=-1, keepdims=True)
    mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean1 - xhat * mean2)
    return dx, dgamma, dbeta


def _gelu_forward(x: np.ndarray):
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_backward(dout: np.ndarray, cache) -> np.ndarray:
    x, t = cache
    dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
    return dout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner)


# -- batch assembly ----------------------------------------------------------


def _raw_batch(packed_seqs: Sequence[PackedSequence], pad_to: Optional[int] = None) -> dict:
    """Id/segment/position arrays plus next-token loss targets, without masks."""
    length = max(len(s) for s in packed_seqs)
    if pad_to is not None:
        length = max(length, pad_to)
    B = len(packed_seqs)
    ids = np.zeros((B, length), dtype=np.int64)
    segs = np.zeros((B, length), dtype=np.int64)
    poss = np.zeros((B, length), dtype=np.int64)
    bias = np.full((B, length, length), NEG_BIAS, dtype=np.float64)
    target_mask = np.zeros((B, length), dtype=bool)
    target_ids = np.zeros((B, length), dtype=np.int64)
    for b, packed in enumerate(packed_seqs):
        n = len(packed)
        ids[b, :n] = packed.token_ids
        segs[b, :n] = [int(s) for s in packed.segment_ids]
        poss[b, :n] = packed.position_ids
        np.fill_diagonal(bias[b], 0.0)  # padding rows attend themselves only
        if packed.len_r > 0:
            start = packed.len_z + packed.len_c  # BOS position
            for pos in range(start, n - 1):
                target_mask[b, pos] = True
                target_ids[b, pos] = packed.token_ids[pos + 1]
    return {
        "ids": ids,
        "segs": segs,
        "poss": poss,
        "bias": bias,
        "target_mask": target_mask,
        "target_ids": target_ids,
    }


def make_batch(
    packed_seqs: Sequence[PackedSequence],
    variant: MaskVariant,
    pad_to: Optional[int] = None,
) -> dict:
    """Pad packed sequences into model-ready arrays under a mask variant.

    Padding columns are invisible to every real position, so batched and
    single-sequence execution agree exactly.
    """
    batch = _raw_batch(packed_seqs, pad_to=pad_to)
    for b, packed in enumerate(packed_seqs):
        n = len(packed)
        visible = build_mask(packed.region_tags, variant)
        batch["bias"][b, :n, :n] = mask_to_additive(visible)
    return batch


# -- single-instance operations ------------------------------------------------


@dataclass
class ForwardPass:
    """Per-position next-token distributions plus the state needed to backprop."""

    probs: np.ndarray  # [L, vocab]
    batch: dict = field(repr=False)
    logits: np.ndarray = field(repr=False)


def embed(packed: PackedSequence, model: RewriterModel) -> np.ndarray:
    """Summed word+segment+position embeddings, [len, d_model]."""
    ids = np.asarray(packed.token_ids)[None, :]
    segs = np.asarray([int(s) for s in packed.segment_ids])[None, :]
    poss = np.asarray(packed.position_ids)[None, :]
    return model.embed_ids(ids, segs, poss)[0]


def forward(packed: PackedSequence, mask: np.ndarray, model: RewriterModel) -> ForwardPass:
    """Probability distribution over the vocabulary at every position."""
    if mask.shape != (len(packed), len(packed)):
        raise RewriterError(
            "SHAPE_MISMATCH", f"mask side {mask.shape} vs packed length {len(packed)}"
        )
    batch = _raw_batch([packed])
    batch["bias"] = mask_to_additive(mask)[None, :, :]
    logits, _ = model.forward_batch(batch)
    shifted = logits[0] - logits[0].max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return ForwardPass(probs=exp / exp.sum(axis=-1, keepdims=True), batch=batch, logits=logits)


def nll_loss(fwd: ForwardPass, model: RewriterModel) -> tuple[float, dict[str, np.ndarray]]:
    """Summed NLL over the rewrite targets (terminal EOS included) with fresh
    gradients for every parameter."""
    model.zero_grads()
    loss, _ = model.loss_and_grads(fwd.batch)
    return loss, {k: v.copy() for k, v in model.grads.items()}


@dataclass
class DecodeState:
    packed: PackedSequence
    step: int = 0
    finished: bool = False


def greedy_decode(
    packed_zc: PackedSequence,
    model: RewriterModel,
    max_steps: int = 32,
    vocab=None,
) -> list:
    """Greedy argmax decoding; ties break toward the lowest token id.

    Returns emitted token ids (or tokens when a vocabulary is given) without
    BOS/EOS.  Recomputes the full forward per step; fine at desk scale.
    """
    if max_steps < 1:
        raise RewriterError("CONFIG_INVALID", "max_steps must be >= 1")
    state = DecodeState(packed=start_decode(packed_zc))
    emitted: list[int] = []
    while not state.finished:
        batch = make_batch([state.packed], model.config.mask_variant)
        logits, _ = model.forward_batch(batch)
        next_id = int(np.argmax(logits[0, len(state.packed) - 1]))
        state.step += 1
        if next_id == EOS_ID:
            state.finished = True
            break
        emitted.append(next_id)
        if state.step >= max_steps:
            state.finished = True
            break
        state.packed = append_rewrite_token(state.packed, next_id)
    if vocab is not None:
        return vocab.decode(emitted)
    return emitted


# -- checkpointing -----------------------------------------------------------


def save_checkpoint(model: RewriterModel, path: str) -> None:
    """Self-describing header plus flat little-endian float32 arrays."""
    header = {
        "config": model.config.to_dict(),
        "params": [[name, list(shape)] for name, shape in _parameter_shapes(model.config)],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(CHECKPOINT_VERSION.to_bytes(4, "little"))
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for name, _ in _parameter_shapes(model.config):
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f4").tobytes())


def load_checkpoint(path: str) -> RewriterModel:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise RewriterError("CHECKPOINT_MISMATCH", f"{path} is not a checkpoint")
        version = int.from_bytes(fh.read(4), "little")
        if version != CHECKPOINT_VERSION:
            raise RewriterError("CHECKPOINT_MISMATCH", f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(int.from_bytes(fh.read(8), "little")))
        config = ModelConfig.from_dict(header["config"])
        model = RewriterModel(config, seed=0)
        expected = _parameter_shapes(config)
        declared = [(name, tuple(shape)) for name, shape in header["params"]]
        if declared != expected:
            raise RewriterError("CHECKPOINT_MISMATCH", "parameter table does not match config")
        for name, shape in expected:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise RewriterError("CHECKPOINT_MISMATCH", f"truncated array for {name}")
            model.params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        model.zero_grads()
    return model
