"""Hybrid text/graph edge scorer with hand-written reverse-mode gradients.

Per candidate edge ``(v, r, u)`` the network sees five inputs: the question
text embedding, text+graph embeddings of the current node, the relation and
the target node, and a 6-slot hop context. Layout of one forward pass::

    q' = W_q LN(q)
    x' = g * a + (1 - g) * b,  a = W_t,x LN(text_x),  b = W_g LN(graph_x)     x in {v, r, u}
         g = sigmoid(W_gate [a; b])
    c' = W_c hop_context
    w  = softmax(W_2 relu(W_1 [q'; v'; r'; u'; c']))                 (5 weights)
    s  = sigmoid(MLP(sum_i w_i * component_i))                        (ReLU + dropout)

Weights are stored ``(in, out)`` so a layer is ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .container import read_container, write_container

COMPONENTS = ("node", "edge", "target")
N_SLOTS = 5  # question, node, edge, target, context
MAX_HOPS = 3
LN_EPS = 1e-5
PROB_EPS = 1e-7


class NumericError(FloatingPointError):
    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"non-finite values produced by layer {layer!r}")


@dataclass(frozen=True)
class AblationMask:
    use_text: bool = True
    use_graph: bool = True
    use_hop_context: bool = True


ABLATIONS: dict[str, AblationMask] = {
    "TE+GE+HC": AblationMask(True, True, True),
    "TE+HC": AblationMask(True, False, True),
    "TE": AblationMask(True, False, False),
    "GE+HC": AblationMask(False, True, True),
    "GE": AblationMask(False, True, False),
}


@dataclass(frozen=True)
class ScorerConfig:
    text_dim: int = 1536
    graph_dim: int = 256
    latent_dim: int = 512
    context_dim: int = 6
    attention_hidden: int = 1024
    classifier_hidden: tuple[int, ...] = (512, 256)
    dropout: float = 0.3
    share_fusion_across_components: bool = True
    ablation: AblationMask = AblationMask()
    seed: int = 0

    def __post_init__(self):
        dims = (self.text_dim, self.graph_dim, self.latent_dim, self.context_dim, self.attention_hidden, *self.classifier_hidden)
        if min(dims) <= 0:
            raise ValueError("all dimensions must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.context_dim != 2 * MAX_HOPS:
            raise ValueError(f"context_dim must be {2 * MAX_HOPS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classifier_hidden"] = list(self.classifier_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerConfig":
        d = dict(d)
        d["classifier_hidden"] = tuple(d["classifier_hidden"])
        d["ablation"] = AblationMask(**d["ablation"])
        return cls(**d)

    def with_ablation(self, name_or_mask) -> "ScorerConfig":
        mask = ABLATIONS[name_or_mask] if isinstance(name_or_mask, str) else name_or_mask
        return replace(self, ablation=mask)

    def graph_proj_name(self, comp: str) -> str:
        return "graph_proj" if self.share_fusion_across_components else f"graph_proj.{comp}"

    def gate_name(self, comp: str) -> str:
        return "gate" if self.share_fusion_across_components else f"gate.{comp}"


def parameter_shapes(cfg: ScorerConfig) -> dict[str, tuple[int, ...]]:
    """Ordered ``name -> shape`` for every trainable array."""
    L = cfg.latent_dim
    shapes: dict[str, tuple[int, ...]] = {}

    def linear(name, n_in, n_out):
        shapes[f"{name}.W"] = (n_in, n_out)
        shapes[f"{name}.b"] = (n_out,)

    linear("question_proj", cfg.text_dim, L)
    for c in COMPONENTS:
        linear(f"text_proj.{c}", cfg.text_dim, L)
    for c in COMPONENTS:
        if f"{cfg.graph_proj_name(c)}.W" not in shapes:
            linear(cfg.graph_proj_name(c), cfg.graph_dim, L)
    for c in COMPONENTS:
        if f"{cfg.gate_name(c)}.W" not in shapes:
            linear(cfg.gate_name(c), 2 * L, L)
    linear("context_proj", cfg.context_dim, L)
    linear("attention.1", N_SLOTS * L, cfg.attention_hidden)
    linear("attention.2", cfg.attention_hidden, N_SLOTS)
    widths = [L, *cfg.classifier_hidden, 1]
    for i in range(len(widths) - 1):
        linear(f"classifier.{i + 1}", widths[i], widths[i + 1])
    return shapes


def parameter_group(name: str) -> str:
    head = name.split(".", 1)[0]
    return {
        "question_proj": "question_projection",
        "text_proj": "text_projection",
        "graph_proj": "graph_projection",
        "gate": "fusion_gate",
        "context_proj": "context_projection",
        "attention": "attention",
        "classifier": "classifier",
    }[head]


@dataclass
class ScorerParams:
    """Named weight arrays; iteration order matches :func:`parameter_shapes`."""

    arrays: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ScorerParams":
        return ScorerParams({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ScorerParams":
        return ScorerParams({k: np.zeros_like(v) for k, v in self.arrays.items()})

    def astype(self, dtype) -> "ScorerParams":
        return ScorerParams({k: v.astype(dtype) for k, v in self.arrays.items()})

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(np.square(v, dtype=np.float64))) for v in self.arrays.values())))


def init_params(cfg: ScorerConfig, dtype=np.float32) -> ScorerParams:
    """Xavier-uniform weights, zero biases, seeded by ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    arrays = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".W"):
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:
            arrays[name] = np.zeros(shape, dtype=dtype)
    return ScorerParams(arrays)


@dataclass(frozen=True)
class ParameterCount:
    total: int
    by_group: dict[str, int]

    @property
    def attention_fraction(self) -> float:
        return self.by_group.get("attention", 0) / self.total


def count_parameters(params_or_cfg) -> ParameterCount:
    if isinstance(params_or_cfg, ScorerConfig):
        sizes = {n: int(np.prod(s)) for n, s in parameter_shapes(params_or_cfg).items()}
    else:
        sizes = {n: int(a.size) for n, a in params_or_cfg.items()}
    groups: dict[str, int] = {}
    for n, s in sizes.items():
        g = parameter_group(n)
        groups[g] = groups.get(g, 0) + s
    return ParameterCount(sum(sizes.values()), groups)


# -- inputs --------------------------------------------------------------------


def hop_context(goal: int, hop: int) -> np.ndarray:
    """One-hot goal depth (3 slots) followed by one-hot current hop (3 slots); hops are 1-based."""
    if not 1 <= hop <= goal <= MAX_HOPS:
        raise ValueError(f"need 1 <= hop <= goal <= {MAX_HOPS}, got hop={hop} goal={goal}")
    v = np.zeros(2 * MAX_HOPS, dtype=np.float32)
    v[goal - 1] = 1.0
    v[MAX_HOPS + hop - 1] = 1.0
    return v


def hop_context_batch(goals: np.ndarray, hops: np.ndarray) -> np.ndarray:
    goals = np.asarray(goals)
    hops = np.asarray(hops)
    if np.any(hops < 1) or np.any(hops > goals) or np.any(goals > MAX_HOPS):
        raise ValueError("invalid hop/goal combination")
    out = np.zeros((len(goals), 2 * MAX_HOPS), dtype=np.float32)
    idx = np.arange(len(goals))
    out[idx, goals - 1] = 1.0
    out[idx, MAX_HOPS + hops - 1] = 1.0
    return out


@dataclass
class EdgeBatch:
    """Feature rows for ``n`` candidate edges (one row per edge)."""

    question: np.ndarray
    node_text: np.ndarray
    node_graph: np.ndarray
    edge_text: np.ndarray
    edge_graph: np.ndarray
    target_text: np.ndarray
    target_graph: np.ndarray
    hop_context: np.ndarray

    def __len__(self) -> int:
        return len(self.question)

    def text(self, comp: str) -> np.ndarray:
        return getattr(self, f"{comp}_text")

    def graph(self, comp: str) -> np.ndarray:
        return getattr(self, f"{comp}_graph")

    def take(self, idx) -> "EdgeBatch":
        return EdgeBatch(**{k: v[idx] for k, v in self.__dict__.items()})


# -- forward / backward ----------------------------------------------------------


def layer_norm(x: np.ndarray) -> np.ndarray:
    """Per-row standardization without affine parameters."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _check(name: str, x: np.ndarray) -> np.ndarray:
    if not np.isfinite(x).all():
        raise NumericError(name)
    return x


def _linear(P: ScorerParams, name: str, x: np.ndarray) -> np.ndarray:
    return _check(name, x @ P[f"{name}.W"] + P[f"{name}.b"])


def hybrid_fuse(params: ScorerParams, cfg: ScorerConfig, comp: str, text_vec: np.ndarray, graph_vec: np.ndarray, _cache: dict | None = None) -> np.ndarray:
    """Gated fusion of one component's text and graph embeddings into the latent space.

    Inputs are layer-normalized first; a disabled modality is zeroed after
    normalization.
    """
    text_vec = np.atleast_2d(text_vec)
    graph_vec = np.atleast_2d(graph_vec)
    if text_vec.shape[-1] != cfg.text_dim or graph_vec.shape[-1] != cfg.graph_dim:
        raise ValueError(f"{comp}: expected dims ({cfg.text_dim}, {cfg.graph_dim}), got ({text_vec.shape[-1]}, {graph_vec.shape[-1]})")
    t_in = layer_norm(text_vec) if cfg.ablation.use_text else np.zeros_like(text_vec)
    g_in = layer_norm(graph_vec) if cfg.ablation.use_graph else np.zeros_like(graph_vec)
    a = _linear(params, f"text_proj.{comp}", t_in)
    b = _linear(params, cfg.graph_proj_name(comp), g_in)
    ab = np.concatenate([a, b], axis=1)
    gate = sigmoid(_linear(params, cfg.gate_name(comp), ab))
    fused = gate * a + (1.0 - gate) * b
    if _cache is not None:
        _cache[comp] = (t_in, g_in, a, b, ab, gate)
    return fused


def _forward(params: ScorerParams, cfg: ScorerConfig, batch: EdgeBatch, train_mode: bool, rng: np.random.Generator | None):
    if len(batch) == 0:
        raise ValueError("empty batch")
    if batch.question.shape[-1] != cfg.text_dim:
        raise ValueError(f"question embedding has dim {batch.question.shape[-1]}, expected {cfg.text_dim}")
    cache: dict = {"fusion": {}}
    n = len(batch)
    q_in = layer_norm(batch.question) if cfg.ablation.use_text else np.zeros_like(batch.question)
    q_p = _linear(params, "question_proj", q_in)
    fused = [hybrid_fuse(params, cfg, c, batch.text(c), batch.graph(c), cache["fusion"]) for c in COMPONENTS]
    ctx_in = batch.hop_context if cfg.ablation.use_hop_context else np.zeros_like(batch.hop_context)
    ctx_in = ctx_in.astype(q_p.dtype, copy=False)
    c_p = _linear(params, "context_proj", ctx_in)
    slots = np.stack([q_p, *fused, c_p], axis=1)  # (n, 5, L)
    x_att = slots.reshape(n, -1)
    h_pre = _linear(params, "attention.1", x_att)
    h = np.maximum(h_pre, 0.0)
    logits = _linear(params, "attention.2", h)
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)
    agg = np.einsum("nk,nkl->nl", w, slots)

    acts = [agg]
    pres = []
    masks = []
    n_layers = len(cfg.classifier_hidden) + 1
    x = agg
    for i in range(1, n_layers + 1):
        pre = _linear(params, f"classifier.{i}", x)
        pres.append(pre)
        if i == n_layers:
            break
        x = np.maximum(pre, 0.0)
        if train_mode and cfg.dropout > 0.0:
            keep = 1.0 - cfg.dropout
            mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
            x = x * mask
        else:
            mask = None
        masks.append(mask)
        acts.append(x)
    out = pres[-1][:, 0]
    scores = sigmoid(out)
    cache.update(q_in=q_in, ctx_in=ctx_in, slots=slots, x_att=x_att, h_pre=h_pre, h=h, w=w, acts=acts, pres=pres, masks=masks)
    return scores, cache


def forward(params: ScorerParams, cfg: ScorerConfig, batch: EdgeBatch, train_mode: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
    """Edge-relevance scores in (0, 1), one per batch row.

    Dropout is applied only when ``train_mode`` is set (``rng`` required then).
    """
    if train_mode and rng is None:
        raise ValueError("train_mode needs an rng for dropout")
    return _forward(params, cfg, batch, train_mode, rng)[0]


def attention_weights(params: ScorerParams, cfg: ScorerConfig, batch: EdgeBatch) -> np.ndarray:
    """Per-row softmax weights over (question, node, edge, target, context)."""
    return _forward(params, cfg, batch, False, None)[1]["w"]


def bce_loss(scores: np.ndarray, labels: np.ndarray, pos_weight: float) -> float:
    """Weighted mean BCE in float64, or in the scores' dtype when that is wider."""
    dt = np.promote_types(scores.dtype, np.float64)
    s = np.clip(scores.astype(dt), PROB_EPS, 1.0 - PROB_EPS)
    y = labels.astype(dt)
    loss = np.mean(pos_weight * y * -np.log(s) + (1.0 - y) * -np.log(1.0 - s))
    return float(loss) if dt == np.float64 else loss


def loss_and_gradients(
    params: ScorerParams,
    cfg: ScorerConfig,
    batch: EdgeBatch,
    labels: np.ndarray,
    pos_weight: float = 1.0,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, ScorerParams]:
    """Weighted binary cross-entropy and its exact gradient for every parameter."""
    if train_mode and rng is None:
        raise ValueError("train_mode needs an rng for dropout")
    labels = np.asarray(labels)
    if labels.shape != (len(batch),) or not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be a 0/1 vector matching the batch")
    s, c = _forward(params, cfg, batch, train_mode, rng)
    loss = bce_loss(s, labels, pos_weight)
    n = len(batch)
    dt = s.dtype
    y = labels.astype(dt)
    sc = np.clip(s, PROB_EPS, 1.0 - PROB_EPS)
    inside = ((s > PROB_EPS) & (s < 1.0 - PROB_EPS)).astype(dt)
    d_s = (-pos_weight * y / sc + (1.0 - y) / (1.0 - sc)) * inside / n
    d_out = (d_s * s * (1.0 - s))[:, None]

    grads: dict[str, np.ndarray] = {k: np.zeros_like(v) for k, v in params.items()}

    def back_linear(name, x, d_y):
        grads[f"{name}.W"] += x.T @ d_y
        grads[f"{name}.b"] += d_y.sum(axis=0)
        return d_y @ params[f"{name}.W"].T

    # classifier
    d = d_out
    n_layers = len(c["pres"])
    for i in range(n_layers, 0, -1):
        d = back_linear(f"classifier.{i}", c["acts"][i - 1], d)
        if i > 1:
            mask = c["masks"][i - 2]
            if mask is not None:
                d = d * mask
            d = d * (c["pres"][i - 2] > 0)
    d_agg = d

    # attention-weighted aggregation
    slots, w = c["slots"], c["w"]
    d_slots = w[:, :, None] * d_agg[:, None, :]
    d_w = np.einsum("nl,nkl->nk", d_agg, slots)
    d_logits = w * (d_w - (w * d_w).sum(axis=1, keepdims=True))
    d_h = back_linear("attention.2", c["h"], d_logits)
    d_hpre = d_h * (c["h_pre"] > 0)
    d_slots = d_slots + back_linear("attention.1", c["x_att"], d_hpre).reshape(slots.shape)

    back_linear("question_proj", c["q_in"], d_slots[:, 0])
    back_linear("context_proj", c["ctx_in"], d_slots[:, 4])
    L = cfg.latent_dim
    for j, comp in enumerate(COMPONENTS):
        t_in, g_in, a, b, ab, gate = c["fusion"][comp]
        d_f = d_slots[:, 1 + j]
        d_gate = d_f * (a - b)
        d_a = d_f * gate
        d_b = d_f * (1.0 - gate)
        d_ab = back_linear(cfg.gate_name(comp), ab, d_gate * gate * (1.0 - gate))
        d_a = d_a + d_ab[:, :L]
        d_b = d_b + d_ab[:, L:]
        back_linear(f"text_proj.{comp}", t_in, d_a)
        back_linear(cfg.graph_proj_name(comp), g_in, d_b)
    return loss, ScorerParams(grads)


# -- checkpoints -----------------------------------------------------------------


def save_checkpoint(path: str | Path, params: ScorerParams, cfg: ScorerConfig, meta: dict | None = None) -> None:
    write_container(path, params.arrays, meta={"kind": "edge_scorer", "config": cfg.to_dict(), **(meta or {})})


def load_checkpoint(path: str | Path) -> tuple[ScorerParams, ScorerConfig, dict]:
    arrays, meta = read_container(path)
    cfg = ScorerConfig.from_dict(meta["config"])
    expected = parameter_shapes(cfg)
    if list(arrays) != list(expected) or any(arrays[k].shape != expected[k] for k in expected):
        raise ValueError(f"{path}: arrays do not match the stored config")
    return ScorerParams(arrays), cfg, meta
