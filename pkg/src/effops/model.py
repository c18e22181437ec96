"""Multi-exit transformer encoder classifier and its MAC cost model."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor_core as tc
from .tensor_core import QuantizedTensor, Tensor

PAD_ID = 0
MASK_NEG = -1e9

WEIGHT_MATMULS = "weight"
ATTENTION_MATMULS = "attention"
CLASSIFIER = "classifier"


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 4
    d_model: int = 32
    n_heads: int = 4
    d_head: int = 8
    d_ff: int = 64
    vocab_size: int = 16
    max_len: int = 32
    n_classes: int = 2

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"ModelConfig.{k} must be a positive int, got {v!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CostModel:
    kappa_weight_matmul: float = 0.4
    kappa_attention_matmul: float = 0.8

    def __post_init__(self):
        for k in (self.kappa_weight_matmul, self.kappa_attention_matmul):
            if not 0 < k <= 1:
                raise ValueError(f"kappa must lie in (0, 1], got {k}")


@dataclass(frozen=True)
class CostSnapshot:
    """Everything :func:`count_macs` needs to know about a model's shape."""

    d_model: int
    d_head: int
    n_classes: int
    heads: tuple[int, ...]
    ff: tuple[int, ...]
    has_exits: bool = False

    @property
    def n_layers(self) -> int:
        return len(self.heads)


def count_macs(snap: CostSnapshot, seq_len: int, exit_layer: int,
               quant_flags: frozenset[str] = frozenset(), cost: CostModel = CostModel(),
               n_classifiers: int = 1) -> float:
    """Multiply-accumulates for one example of padded length ``seq_len``.

    ``n_classifiers`` counts evaluated classifier heads; early-exit inference
    evaluates one per executed layer.
    """
    if not 1 <= exit_layer <= snap.n_layers:
        raise ValueError(f"exit_layer {exit_layer} outside [1, {snap.n_layers}]")
    s, d = seq_len, snap.d_model
    kw = cost.kappa_weight_matmul if WEIGHT_MATMULS in quant_flags else 1.0
    ka = cost.kappa_attention_matmul if ATTENTION_MATMULS in quant_flags else 1.0
    kc = cost.kappa_weight_matmul if CLASSIFIER in quant_flags else 1.0
    total = 0.0
    for i in range(exit_layer):
        inner = snap.heads[i] * snap.d_head
        total += kw * 4 * s * d * inner
        total += ka * 2 * s * s * inner
        total += kw * 2 * s * d * snap.ff[i]
    total += kc * n_classifiers * d * snap.n_classes
    return total


@dataclass
class ForwardOutput:
    logits: np.ndarray  # logits of the classifier each example returned from
    exit_layers: np.ndarray  # 1-based layer each example exited at
    mac_count: float  # summed over the batch
    per_example_macs: np.ndarray
    exit_logits: list[np.ndarray] = field(default_factory=list)
    wall_ns: int | None = None

    @property
    def exit_layer_used(self) -> int:
        return int(self.exit_layers.max())


@dataclass
class Hidden:
    """Differentiable intermediate states returned by :meth:`TransformerModel.encode`."""

    embedding: Tensor
    layers: list[Tensor]
    exit_logits: list[Tensor]


def _linear_init(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    return (rng.standard_normal((n_out, n_in)) / np.sqrt(n_in)).astype(tc.DTYPE)


class TransformerModel:
    """Post-LN encoder with CLS pooling and optional per-layer exit classifiers.

    Linear weights are stored ``(out, in)``; a head occupies ``d_head``
    consecutive rows of ``wq/wk/wv`` and the matching columns of ``wo``.
    """

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor | QuantizedTensor],
                 has_exits: bool = False):
        self.cfg = cfg
        self.params = params
        self.has_exits = has_exits

    # ------------------------------------------------------------ structure
    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.params if k.endswith(".wq"))

    @property
    def quantized(self) -> bool:
        return any(isinstance(v, QuantizedTensor) for v in self.params.values())

    def heads_kept(self, i: int) -> int:
        return self.params[f"layers.{i}.wq"].shape[0] // self.cfg.d_head

    def ff_kept(self, i: int) -> int:
        return self.params[f"layers.{i}.w1"].shape[0]

    def cost_snapshot(self) -> CostSnapshot:
        n = self.n_layers
        return CostSnapshot(self.cfg.d_model, self.cfg.d_head, self.cfg.n_classes,
                            tuple(self.heads_kept(i) for i in range(n)),
                            tuple(self.ff_kept(i) for i in range(n)), self.has_exits)

    def quant_flags(self) -> frozenset[str]:
        return frozenset({WEIGHT_MATMULS, ATTENTION_MATMULS}) if self.quantized else frozenset()

    def classifier_keys(self, i: int) -> tuple[str, str]:
        """Weight/bias names of layer ``i``'s classifier (0-based); the last is the main one."""
        if i == self.n_layers - 1:
            return "cls.w", "cls.b"
        return f"exit.{i}.w", f"exit.{i}.b"

    def trainable(self) -> list[Tensor]:
        return [p for p in self.params.values() if isinstance(p, Tensor)]

    def copy(self) -> "TransformerModel":
        out = {}
        for k, v in self.params.items():
            out[k] = Tensor(v.data.copy()) if isinstance(v, Tensor) else \
                QuantizedTensor(v.qdata.copy(), v.scale)
        return TransformerModel(self.cfg, out, self.has_exits)

    def astype(self, dtype) -> "TransformerModel":
        m = self.copy()
        for k, v in m.params.items():
            if isinstance(v, Tensor):
                m.params[k] = Tensor(v.data.astype(dtype))
        return m

    def requires_grad_(self, flag: bool = True) -> "TransformerModel":
        for p in self.trainable():
            p.requires_grad = flag
            p.grad = None
        return self

    # ------------------------------------------------------------- compute
    def _linear(self, x: Tensor, prefix: str, tag: str, valid: np.ndarray | None) -> Tensor:
        w, b = self.params[prefix + "w" + tag], self.params[prefix + "b" + tag]
        if isinstance(w, QuantizedTensor):
            xq = _quantize_activation(x.data, valid)
            return tc.qmatmul(xq, w.T) + b
        return tc.matmul(x, w.T) + b

    def _attention(self, x: Tensor, i: int, key_bias: np.ndarray, valid: np.ndarray,
                   head_gate: Tensor | None) -> Tensor:
        B, S, _ = x.shape
        h, dh = self.heads_kept(i), self.cfg.d_head
        p = f"layers.{i}."
        q = self._linear(x, p, "q", valid).reshape(B, S, h, dh).transpose(0, 2, 1, 3)
        k = self._linear(x, p, "k", valid).reshape(B, S, h, dh).transpose(0, 2, 1, 3)
        v = self._linear(x, p, "v", valid).reshape(B, S, h, dh).transpose(0, 2, 1, 3)
        scale = 1.0 / np.sqrt(dh)
        rows = valid[:, None, :, None]
        if isinstance(self.params[p + "wq"], QuantizedTensor):
            qq = _quantize_activation(q.data, rows)
            kq = _quantize_activation(k.data, rows)
            scores = tc.qmatmul(qq, kq.T) * scale
        else:
            scores = tc.matmul(q, k.transpose(0, 1, 3, 2)) * scale
        probs = tc.softmax(scores + key_bias, axis=-1)
        if isinstance(self.params[p + "wq"], QuantizedTensor):
            ctx = tc.qmatmul(_quantize_activation(probs.data, rows),
                             _quantize_activation(v.data, rows))
        else:
            ctx = tc.matmul(probs, v)
        if head_gate is not None:
            ctx = ctx * head_gate.reshape(-1, h, 1, 1)
        ctx = ctx.transpose(0, 2, 1, 3).reshape(B, S, h * dh)
        return self._linear(ctx, p, "o", valid)

    def _ffn(self, x: Tensor, i: int, valid: np.ndarray, ff_gate: Tensor | None) -> Tensor:
        p = f"layers.{i}."
        a = tc.relu(self._linear(x, p, "1", valid))
        if ff_gate is not None:
            a = a * ff_gate.reshape(-1, 1, a.shape[-1])
        return self._linear(a, p, "2", valid)

    def embed(self, tokens: np.ndarray) -> Tensor:
        S = tokens.shape[1]
        if S > self.cfg.max_len:
            raise ValueError(f"sequence length {S} exceeds max_len {self.cfg.max_len}")
        e = tc.take_rows(self.params["emb.tok"], tokens) + self.params["emb.pos"][:S]
        return tc.layer_norm(e, self.params["emb.ln_g"], self.params["emb.ln_b"])

    def layer(self, x: Tensor, i: int, key_bias: np.ndarray, valid: np.ndarray,
              gates: dict | None = None) -> Tensor:
        p = f"layers.{i}."
        hg = gates["heads"][i] if gates else None
        fg = gates["ff"][i] if gates else None
        x = tc.layer_norm(x + self._attention(x, i, key_bias, valid, hg),
                          self.params[p + "ln1_g"], self.params[p + "ln1_b"])
        return tc.layer_norm(x + self._ffn(x, i, valid, fg),
                             self.params[p + "ln2_g"], self.params[p + "ln2_b"])

    def classify(self, h: Tensor, i: int) -> Tensor:
        wk, bk = self.classifier_keys(i)
        return tc.matmul(h[:, 0, :], self.params[wk].T) + self.params[bk]

    def encode(self, tokens: np.ndarray, mask: np.ndarray, gates: dict | None = None,
               all_exits: bool = True) -> Hidden:
        """Full-depth pass keeping every intermediate state on the tape."""
        tokens, valid, key_bias = _prep(tokens, mask, self._dtype())
        x = self.embed(tokens)
        emb = x
        layers, exits = [], []
        n = self.n_layers
        for i in range(n):
            x = self.layer(x, i, key_bias, valid, gates)
            layers.append(x)
            if (self.has_exits and all_exits) or i == n - 1:
                exits.append(self.classify(x, i))
        return Hidden(emb, layers, exits)

    def _dtype(self):
        return self.params["emb.tok"].data.dtype


def _prep(tokens, mask, dtype):
    tokens = np.asarray(tokens)
    valid = np.asarray(mask, dtype=bool)
    if tokens.shape != valid.shape:
        raise ValueError("tokens and attention mask shapes differ")
    key_bias = np.where(valid, 0.0, MASK_NEG).astype(dtype)[:, None, None, :]
    return tokens, valid, key_bias


def _quantize_activation(x: np.ndarray, valid: np.ndarray | None) -> QuantizedTensor:
    """Dynamic per-tensor quantization whose scale ignores padding positions.

    ``valid`` broadcasts against ``x`` minus its last axis; padded entries are
    clamped with the scale taken from real tokens only, so the result on real
    tokens does not depend on how much padding the batch carries.
    """
    if valid is None:
        return tc.quantize(x)
    sel = np.broadcast_to(valid[..., None] if valid.ndim < x.ndim else valid, x.shape)
    region = np.abs(x[sel]) if sel.any() else np.zeros(1)
    return tc.quantize_with_scale(x, tc.symmetric_scale(region))


def init_model(cfg: ModelConfig, seed: int) -> TransformerModel:
    """Seeded initialization; no exits, no pruning, no quantization."""
    if not isinstance(cfg, ModelConfig):
        raise TypeError("cfg must be a ModelConfig")
    rng = np.random.default_rng(seed)
    d, inner = cfg.d_model, cfg.n_heads * cfg.d_head
    f = tc.DTYPE
    p: dict[str, Tensor] = {
        "emb.tok": Tensor((rng.standard_normal((cfg.vocab_size, d)) * 0.5).astype(f)),
        "emb.pos": Tensor((rng.standard_normal((cfg.max_len, d)) * 0.5).astype(f)),
        "emb.ln_g": Tensor(np.ones(d, f)),
        "emb.ln_b": Tensor(np.zeros(d, f)),
    }
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        for name, (n_out, n_in) in (("q", (inner, d)), ("k", (inner, d)),
                                    ("v", (inner, d)), ("o", (d, inner))):
            p[pre + "w" + name] = Tensor(_linear_init(rng, n_out, n_in))
            p[pre + "b" + name] = Tensor(np.zeros(n_out, f))
        p[pre + "w1"] = Tensor(_linear_init(rng, cfg.d_ff, d))
        p[pre + "b1"] = Tensor(np.zeros(cfg.d_ff, f))
        p[pre + "w2"] = Tensor(_linear_init(rng, d, cfg.d_ff))
        p[pre + "b2"] = Tensor(np.zeros(d, f))
        for ln in ("ln1", "ln2"):
            p[pre + ln + "_g"] = Tensor(np.ones(d, f))
            p[pre + ln + "_b"] = Tensor(np.zeros(d, f))
    p["cls.w"] = Tensor(_linear_init(rng, cfg.n_classes, d))
    p["cls.b"] = Tensor(np.zeros(cfg.n_classes, f))
    return TransformerModel(cfg, p)


def add_exit_classifiers(model: TransformerModel, seed: int) -> TransformerModel:
    """Attach a fresh d_model x n_classes classifier to every non-final layer."""
    if model.has_exits:
        raise ValueError("model already has exit classifiers")
    m = model.copy()
    rng = np.random.default_rng(seed)
    d, c = m.cfg.d_model, m.cfg.n_classes
    for i in range(m.n_layers - 1):
        m.params[f"exit.{i}.w"] = Tensor(_linear_init(rng, c, d))
        m.params[f"exit.{i}.b"] = Tensor(np.zeros(c, tc.DTYPE))
    m.has_exits = True
    return m


def forward(model: TransformerModel, tokens, attention_mask, exit_threshold: float | None = None,
            cost: CostModel = CostModel(), timed: bool = False) -> ForwardOutput:
    """Inference pass with per-example early exit on max softmax probability.

    Examples that exit leave the batch; the survivors keep the batch's padded
    length.  The final layer always returns.
    """
    if exit_threshold is not None and not model.has_exits:
        raise ValueError("exit_threshold given but the model has no exit classifiers")
    t0 = time.perf_counter_ns() if timed else 0
    tokens, valid, key_bias = _prep(tokens, attention_mask, model._dtype())
    if tokens.size and tokens.max() >= model.cfg.vocab_size:
        raise ValueError("token id out of vocabulary range")
    B, S = tokens.shape
    n = model.n_layers
    C = model.cfg.n_classes
    logits = np.zeros((B, C), dtype=model._dtype())
    exit_layers = np.full(B, n, dtype=np.int64)
    active = np.arange(B)
    exit_logits: list[np.ndarray] = []
    with tc.no_grad():
        x = model.embed(tokens)
        for i in range(n):
            x = model.layer(x, i, key_bias[active], valid[active])
            last = i == n - 1
            if exit_threshold is None and not last:
                continue
            lg = model.classify(x, i).data
            full = np.full((B, C), np.nan, dtype=lg.dtype)
            full[active] = lg
            exit_logits.append(full)
            if last:
                logits[active] = lg
                exit_layers[active] = n
                break
            z = lg - lg.max(axis=-1, keepdims=True)
            pr = np.exp(z) / np.exp(z).sum(axis=-1, keepdims=True)
            done = pr.max(axis=-1) >= exit_threshold
            if done.any():
                logits[active[done]] = lg[done]
                exit_layers[active[done]] = i + 1
                keep = ~done
                active = active[keep]
                x = Tensor(x.data[keep])
                if active.size == 0:
                    break
    snap = model.cost_snapshot()
    flags = model.quant_flags()
    per = np.array([count_macs(snap, S, int(e), flags, cost,
                               n_classifiers=int(e) if exit_threshold is not None else 1)
                    for e in exit_layers], dtype=np.float64)
    wall = time.perf_counter_ns() - t0 if timed else None
    return ForwardOutput(logits, exit_layers, float(per.sum()), per, exit_logits, wall)
