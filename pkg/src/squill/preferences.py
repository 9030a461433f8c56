"""Preference-pair construction from executed candidates, and the paired loss.

Pairs always put a failed candidate on the rejected side. The preferred
side comes from the ground truth when exactly one candidate failed, and
otherwise from distinct successful candidates (seeded order, no reuse)
with the ground truth guaranteed at least one slot; when successes run
out, the ground truth is replicated to cover the remaining failures.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass

from .errors import GoldExecutionError
from .executor import DEFAULT_TIMEOUT, ExecutionOutcome, execute_sql

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1.0
DEFAULT_BETA = 0.1

PROVENANCE_SUCCESS = "success_vs_fail"
PROVENANCE_GT = "gt_vs_fail"
PROVENANCE_REPLICATED_GT = "replicated_gt_vs_fail"


@dataclass(frozen=True)
class CandidateOutcome:
    sql: str
    outcome: ExecutionOutcome

    @property
    def ok(self) -> bool:
        return self.outcome.ok


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    provenance: str


def label_by_execution(candidates, db_path,
                       timeout: float = DEFAULT_TIMEOUT) -> list[CandidateOutcome]:
    """Execute each candidate once. Success means error-free completion;
    an empty result set still counts, and a timeout counts as failure."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    return [
        CandidateOutcome(sql=sql, outcome=execute_sql(db_path, sql, timeout=timeout))
        for sql in candidates
    ]


def build_pairs(candidates, gold_sql: str, prompt: str, seed: int = 0) -> list[PreferencePair]:
    """One pair per failed candidate, preferred side per the slotting rules.

    Failures are processed in candidate order. The preferred sources are the
    ground truth first, then the successful candidates shuffled by seed and
    used at most once each; slots beyond that replicate the ground truth.
    The caller must have verified that gold_sql executes.
    """
    candidates = list(candidates)
    failures = [c for c in candidates if not c.ok]
    successes = [c for c in candidates if c.ok]
    if not failures:
        return []
    shuffled = list(successes)
    random.Random(seed).shuffle(shuffled)
    pairs = []
    for slot, failed in enumerate(failures):
        if slot == 0:
            chosen, provenance = gold_sql, PROVENANCE_GT
        elif slot <= len(shuffled):
            chosen, provenance = shuffled[slot - 1].sql, PROVENANCE_SUCCESS
        else:
            chosen, provenance = gold_sql, PROVENANCE_REPLICATED_GT
        pairs.append(PreferencePair(prompt=prompt, chosen=chosen,
                                    rejected=failed.sql, provenance=provenance))
    return pairs


def build_pairs_for_instance(candidate_sqls, gold_sql: str, prompt: str, db_path,
                             seed: int = 0,
                             timeout: float = DEFAULT_TIMEOUT) -> list[PreferencePair]:
    """Execute gold and candidates, then build pairs.

    Raises GoldExecutionError when the gold SQL itself fails; callers skip
    the instance with a warning in that case.
    """
    gold_outcome = execute_sql(db_path, gold_sql, timeout=timeout)
    if not gold_outcome.ok:
        raise GoldExecutionError(
            f"gold SQL failed to execute: {gold_outcome.error_message}"
        )
    labeled = label_by_execution(candidate_sqls, db_path, timeout=timeout)
    return build_pairs(labeled, gold_sql, prompt, seed=seed)


@dataclass(frozen=True)
class PolicyLogProbs:
    """Log-probabilities of the chosen/rejected outputs under policy and reference."""

    logp_theta_w: float
    logp_theta_l: float
    logp_ref_w: float
    logp_ref_l: float
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        for name in ("logp_theta_w", "logp_theta_l", "logp_ref_w", "logp_ref_l"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


def _softplus(x: float) -> float:
    # log(1 + e^x) without overflow
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def rft_loss(p: PolicyLogProbs) -> float:
    """Pairwise preference loss plus weighted NLL of the chosen output.

    -log sigmoid(beta * [(logp_theta_w - logp_ref_w) - (logp_theta_l - logp_ref_l)])
    + alpha * (-logp_theta_w), with a numerically stable log-sigmoid.
    """
    margin = (p.logp_theta_w - p.logp_ref_w) - (p.logp_theta_l - p.logp_ref_l)
    return _softplus(-p.beta * margin) + p.alpha * (-p.logp_theta_w)
