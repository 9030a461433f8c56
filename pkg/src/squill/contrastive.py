"""Hard-negative-filtered contrastive loss, its gradient, and a projection trainer.

The loss contrasts a query embedding against one positive column document
and a set of negative documents. Negatives are filtered by a margin mask:
only negatives whose dot product with the query comes within ``margin`` of
the positive's contribute to the denominator. The trainable object is a
single linear projection, shared by queries and documents and applied as
``v -> normalize(W v)``, which stands in for fine-tuning the embedding
model at desk scale while exercising the identical loss and gradient math.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import FormatError, TrainingError
from .schema import ColumnRecord, DatabaseSchema

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.07
DEFAULT_MARGIN = 0.1
DEFAULT_NEGATIVES = 8

_UNIT_NORM_TOL = 1e-6


class BatchItem(NamedTuple):
    query: np.ndarray
    positive: np.ndarray
    negatives: np.ndarray  # (n, dim); n may be 0


@dataclass
class ContrastiveBatch:
    """A batch of (query, positive, negatives) triples with loss parameters."""

    items: list[BatchItem]
    tau: float = DEFAULT_TAU
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if not self.items:
            raise ValueError("batch must contain at least one item")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        normalized = []
        dim = None
        for i, raw in enumerate(self.items):
            query = np.asarray(raw[0], dtype=np.float64)
            positive = np.asarray(raw[1], dtype=np.float64)
            negatives = np.asarray(raw[2], dtype=np.float64)
            if negatives.size == 0:
                negatives = np.zeros((0, query.shape[0]))
            if dim is None:
                dim = query.shape[0]
            vectors = [query, positive, *negatives]
            for v in vectors:
                if v.shape != (dim,):
                    raise ValueError(f"item {i}: vectors must all have dim {dim}")
                if abs(np.linalg.norm(v) - 1.0) > _UNIT_NORM_TOL:
                    raise ValueError(f"item {i}: vectors must be unit-norm")
            normalized.append(BatchItem(query, positive, negatives))
        self.items = normalized

    @property
    def batch_size(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.items[0].query.shape[0]


def compute_mask(query, positive, negatives, margin: float = DEFAULT_MARGIN) -> list[int]:
    """Hard-negative mask: 1 iff q.n_j >= q.p - margin, else 0."""
    query = np.asarray(query, dtype=np.float64)
    positive = np.asarray(positive, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64)
    if negatives.size == 0:
        return []
    sp = float(query @ positive)
    sn = negatives @ query
    return [int(s >= sp - margin) for s in sn]


def _stack(batch: ContrastiveBatch):
    """Stack batch items into dense arrays with a validity mask for padding."""
    b = batch.batch_size
    dim = batch.dim
    max_n = max((item.negatives.shape[0] for item in batch.items), default=0)
    queries = np.stack([item.query for item in batch.items])
    positives = np.stack([item.positive for item in batch.items])
    negatives = np.zeros((b, max_n, dim))
    valid = np.zeros((b, max_n), dtype=bool)
    for i, item in enumerate(batch.items):
        n = item.negatives.shape[0]
        if n:
            negatives[i, :n] = item.negatives
            valid[i, :n] = True
    return queries, positives, negatives, valid


def _loss_terms(sp, sn, mask, tau):
    """Per-item loss and softmax weights from similarity arrays.

    sp: (B,) positive similarities; sn: (B, N) negative similarities;
    mask: (B, N) bool, True where the negative participates.

    Returns (losses (B,), weights (B, N)) where weights[i, j] is the
    softmax probability of negative j in item i's denominator. Computed
    with max-subtraction; an item with an empty mask contributes exactly 0.
    """
    d = (sn - sp[:, None]) / tau
    d = np.where(mask, d, -np.inf)
    # logsumexp over [0, d_1, ..., d_N] with max-subtraction
    with np.errstate(invalid="ignore"):
        d_max = np.max(d, axis=1, initial=0.0)
    shifted = np.where(mask, np.exp(d - d_max[:, None]), 0.0)
    denom = np.exp(-d_max) + shifted.sum(axis=1)
    losses = d_max + np.log(denom)
    weights = shifted / denom[:, None]
    if not np.all(np.isfinite(losses)):
        raise TrainingError("non-finite loss term")
    return losses, weights


def hn_supcon_loss(batch: ContrastiveBatch) -> float:
    """Mean contrastive loss with the hard-negative margin mask applied."""
    return _loss_from_batch(batch, hard_mask=True)


def supcon_loss(batch: ContrastiveBatch) -> float:
    """Mean contrastive loss with every negative participating (no mask)."""
    return _loss_from_batch(batch, hard_mask=False)


def _loss_from_batch(batch: ContrastiveBatch, hard_mask: bool) -> float:
    queries, positives, negatives, valid = _stack(batch)
    sp = np.sum(queries * positives, axis=1)
    sn = np.einsum("bnd,bd->bn", negatives, queries)
    mask = valid & (sn >= sp[:, None] - batch.margin) if hard_mask else valid
    losses, _ = _loss_terms(sp, sn, mask, batch.tau)
    return float(losses.mean())


@dataclass
class ProjectionHead:
    """Linear projection ``v -> normalize(W v)`` shared by queries and documents."""

    weight: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.weight.shape[1]:
            raise ValueError("weight must be a square matrix")
        if not np.all(np.isfinite(self.weight)):
            raise ValueError("weight must be finite")

    @classmethod
    def identity(cls, dim: int) -> "ProjectionHead":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        """Project rows and renormalize. Accepts (dim,) or (n, dim)."""
        arr = np.asarray(vectors, dtype=np.float64)
        single = arr.ndim == 1
        rows = arr[None, :] if single else arr
        projected = rows @ self.weight.T
        norms = np.linalg.norm(projected, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise TrainingError("projection produced a zero vector")
        projected = projected / norms
        return projected[0] if single else projected

    def fingerprint(self) -> str:
        digest = hashlib.sha256(self.weight.tobytes()).hexdigest()
        return f"head:{digest[:12]}"

    def save(self, path) -> None:
        header = _HEAD_MAGIC + struct.pack("<I", self.dim)
        Path(path).write_bytes(header + self.weight.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "ProjectionHead":
        blob = Path(path).read_bytes()
        if blob[: len(_HEAD_MAGIC)] != _HEAD_MAGIC:
            raise FormatError(f"{path}: not a projection head checkpoint")
        (dim,) = struct.unpack_from("<I", blob, len(_HEAD_MAGIC))
        offset = len(_HEAD_MAGIC) + 4
        expected = offset + dim * dim * 8
        if len(blob) != expected:
            raise FormatError(f"{path}: truncated checkpoint ({len(blob)} != {expected} bytes)")
        weight = np.frombuffer(blob, dtype="<f8", offset=offset).reshape(dim, dim).copy()
        return cls(weight)


_HEAD_MAGIC = b"SQPH0001"


def head_fingerprint(head: ProjectionHead | None) -> str:
    return "identity" if head is None else head.fingerprint()


def loss_and_gradient(batch: ContrastiveBatch, head: ProjectionHead,
                      hard_mask: bool = True) -> tuple[float, np.ndarray]:
    """Loss of the projected batch and its gradient w.r.t. the head weight.

    The batch holds base (unprojected) embeddings. Masks are computed on the
    projected vectors during the forward pass and treated as constants: the
    mask indicator is piecewise constant, so its subgradient is zero almost
    everywhere.
    """
    w = head.weight
    tau, margin = batch.tau, batch.margin
    q0, p0, n0, valid = _stack(batch)
    b, max_n, dim = n0.shape

    def project(rows):
        raw = rows @ w.T
        norms = np.linalg.norm(raw, axis=-1)
        if np.any(norms == 0):
            raise TrainingError("projection produced a zero vector")
        return raw / norms[..., None], norms

    qh, qn = project(q0)                     # (B, d), (B,)
    ph, pn = project(p0)
    # negatives are padded with zero rows; give those a harmless unit norm
    raw_n = n0.reshape(-1, dim) @ w.T
    nn = np.linalg.norm(raw_n, axis=1)
    if np.any((nn == 0) & valid.reshape(-1)):
        raise TrainingError("projection produced a zero vector")
    nn = np.where(nn == 0, 1.0, nn)
    nh = (raw_n / nn[:, None]).reshape(b, max_n, dim)
    nn = nn.reshape(b, max_n)

    sp = np.sum(qh * ph, axis=1)
    sn = np.einsum("bnd,bd->bn", nh, qh)
    mask = valid & (sn >= sp[:, None] - margin) if hard_mask else valid
    losses, weights = _loss_terms(sp, sn, mask, tau)
    loss = float(losses.mean())

    # dL/d sp_i = -(sum_j weights_ij) / tau ; dL/d sn_ij = weights_ij / tau
    coeff_p = -weights.sum(axis=1) / tau     # (B,)
    coeff_n = weights / tau                  # (B, N)

    # d s(x, y) / dW = ((yh - s*xh)/|x|) u^T + ((xh - s*yh)/|y|) v^T
    # where x = W u, y = W v. Accumulate A^T @ U over all similarity pairs.
    grad = np.zeros_like(w)
    a_q = coeff_p[:, None] * (ph - sp[:, None] * qh) / qn[:, None]
    a_p = coeff_p[:, None] * (qh - sp[:, None] * ph) / pn[:, None]
    grad += a_q.T @ q0 + a_p.T @ p0
    if max_n:
        flat = coeff_n.reshape(-1)
        keep = flat != 0.0
        if np.any(keep):
            qh_rep = np.repeat(qh, max_n, axis=0)[keep]
            qn_rep = np.repeat(qn, max_n)[keep]
            q0_rep = np.repeat(q0, max_n, axis=0)[keep]
            nh_flat = nh.reshape(-1, dim)[keep]
            nn_flat = nn.reshape(-1)[keep]
            n0_flat = n0.reshape(-1, dim)[keep]
            s_flat = sn.reshape(-1)[keep]
            c_flat = flat[keep]
            a_qn = c_flat[:, None] * (nh_flat - s_flat[:, None] * qh_rep) / qn_rep[:, None]
            a_nq = c_flat[:, None] * (qh_rep - s_flat[:, None] * nh_flat) / nn_flat[:, None]
            grad += a_qn.T @ q0_rep + a_nq.T @ n0_flat
    grad /= b
    return loss, grad


def loss_gradient(batch: ContrastiveBatch, head: ProjectionHead) -> np.ndarray:
    """Gradient of ``hn_supcon_loss`` of the projected batch w.r.t. the weight."""
    return loss_and_gradient(batch, head, hard_mask=True)[1]


def sample_negatives(question, gold_columns, schema: DatabaseSchema,
                     base_similarities, limit: int = DEFAULT_NEGATIVES) -> list[ColumnRecord]:
    """Pick up to ``limit`` non-gold columns most similar to the question.

    base_similarities is aligned with schema.columns. Ties break by schema
    column order. Returns fewer columns when the schema has fewer
    irrelevant ones.
    """
    if not schema.columns:
        raise ValueError(f"schema {schema.db_id} has no columns")
    if limit < 0:
        raise ValueError("limit must be non-negative")
    sims = np.asarray(base_similarities, dtype=np.float64)
    if sims.shape != (len(schema.columns),):
        raise ValueError("base_similarities must align with schema.columns")
    gold = {ref.normalized() for ref in gold_columns}
    for ref in gold:
        if schema.resolve(ref) is None:
            raise ValueError(f"gold column {ref.dotted()} not in schema {schema.db_id}")
    candidates = [
        (i, col) for i, col in enumerate(schema.columns)
        if col.ref.normalized() not in gold
    ]
    candidates.sort(key=lambda pair: (-sims[pair[0]], pair[0]))
    return [col for _i, col in candidates[:limit]]


# --- trainer ----------------------------------------------------------------

@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 1
    learning_rate: float = 5e-5
    tau: float = DEFAULT_TAU
    margin: float = DEFAULT_MARGIN
    batch_size: int = 16
    negatives_per_query: int = DEFAULT_NEGATIVES
    weight_decay: float = 0.01
    seed: int = 0
    objective: str = "hn-supcon"  # "hn-supcon" | "supcon"

    def __post_init__(self):
        if self.objective not in ("hn-supcon", "supcon"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


def load_trainer_config(path) -> TrainerConfig:
    """Parse a key=value trainer config file. Unknown keys are rejected."""
    values: dict[str, object] = {}
    types = {f.name: f.type for f in fields(TrainerConfig)}
    casts = {"int": int, "float": float, "str": str}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in types:
            raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = casts[types[key]](value.strip())
    return TrainerConfig(**values)


class TrainingExample(NamedTuple):
    query_text: str
    positive_text: str
    negative_texts: tuple[str, ...]


@dataclass
class TrainingResult:
    head: ProjectionHead
    epoch_losses: list[float]
    step_losses: list[tuple[int, int, float]]  # (epoch, step, loss)

    def trace_lines(self) -> list[str]:
        lines = []
        for epoch, step, loss in self.step_losses:
            lines.append(f"epoch={epoch} step={step} loss={loss:.10f}")
        for epoch, mean in enumerate(self.epoch_losses, 1):
            lines.append(f"epoch={epoch} mean_loss={mean:.10f}")
        return lines


class _AdamW:
    """Decoupled-weight-decay Adam on a single matrix parameter."""

    def __init__(self, shape, lr, weight_decay, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, weight, grad):
        b1, b2 = self.betas
        self.t += 1
        self.m = b1 * self.m + (1 - b1) * grad
        self.v = b2 * self.v + (1 - b2) * grad * grad
        m_hat = self.m / (1 - b1 ** self.t)
        v_hat = self.v / (1 - b2 ** self.t)
        return weight - self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                                   + self.weight_decay * weight)


def train_projection(examples, provider, config: TrainerConfig = TrainerConfig()) -> TrainingResult:
    """Train the projection head on (query, positive, negatives) text triples.

    Deterministic for a given seed: batch order is a seeded permutation per
    epoch and all arithmetic is plain float64 numpy.
    """
    if not examples:
        raise ValueError("training corpus must be non-empty")
    texts = []
    index: dict[str, int] = {}
    for ex in examples:
        for text in (ex.query_text, ex.positive_text, *ex.negative_texts):
            if text not in index:
                index[text] = len(texts)
                texts.append(text)
    vectors = provider.embed_texts(texts)
    items = [
        BatchItem(
            vectors[index[ex.query_text]],
            vectors[index[ex.positive_text]],
            vectors[[index[t] for t in ex.negative_texts]]
            if ex.negative_texts else np.zeros((0, vectors.shape[1])),
        )
        for ex in examples
    ]

    head = ProjectionHead.identity(vectors.shape[1])
    optimizer = _AdamW(head.weight.shape, config.learning_rate, config.weight_decay)
    rng = np.random.default_rng(config.seed)
    hard = config.objective == "hn-supcon"

    step_losses: list[tuple[int, int, float]] = []
    epoch_losses: list[float] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(items))
        epoch_sum = 0.0
        n_steps = 0
        for step, start in enumerate(range(0, len(items), config.batch_size), 1):
            chunk = [items[i] for i in order[start:start + config.batch_size]]
            batch = ContrastiveBatch(chunk, tau=config.tau, margin=config.margin)
            loss, grad = loss_and_gradient(batch, head, hard_mask=hard)
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", step=step)
            head = ProjectionHead(optimizer.update(head.weight, grad))
            step_losses.append((epoch, step, loss))
            epoch_sum += loss
            n_steps += 1
        epoch_losses.append(epoch_sum / n_steps)
    return TrainingResult(head=head, epoch_losses=epoch_losses, step_losses=step_losses)
