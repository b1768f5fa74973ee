"""Odds-ratio preference loss over token log-probabilities.

For a chosen sequence ``w`` and a rejected sequence ``l`` of the same prompt::

    nll   = -(1/m) * sum of the chosen completion logprobs
    P(y)  = exp(mean completion logprob)      (normalized, default)
          = exp(sum of completion logprobs)   (unnormalized)
    odds  = P / (1 - P)
    or    = -log sigmoid(log odds(P_w) - log odds(P_l))
    total = nll + lambda * or

Only completion tokens count; the first ``boundary`` tokens are prompt.
Likelihoods are clamped to [1e-12, 1 - 1e-12] before taking odds.
Nothing here runs a model: log-probabilities come from a backend or a trainer.
"""

import json
import logging
import math
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from pydantic import ConfigDict, Field, ValidationError, model_validator

from mats_sql.constants import DEFAULT_ORPO_LAMBDA, LIKELIHOOD_EPSILON
from mats_sql.errors import DatasetError, OrpoDomainError
from mats_sql.models import FrozenModel

logger = logging.getLogger(__name__)


class ScoredSequence(FrozenModel):
    """Token logprobs of prompt plus completion, the first ``boundary`` are prompt."""

    token_logprobs: tuple[float, ...]
    boundary: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _valid_logprobs(self) -> "ScoredSequence":
        for x in self.token_logprobs:
            if not math.isfinite(x) or x > 0:
                raise ValueError(f"logprob {x} is not finite and <= 0")
        if self.boundary > len(self.token_logprobs):
            raise ValueError("boundary lies beyond the sequence")
        return self

    @property
    def completion(self) -> np.ndarray:
        """Completion logprobs.

        Raises:
            OrpoDomainError: the completion is empty.
        """
        values = np.asarray(self.token_logprobs[self.boundary :], dtype=float)
        if values.size == 0:
            raise OrpoDomainError("sequence has no completion tokens")
        return values


class OrpoTerms(NamedTuple):
    total: float
    nll: float
    odds_ratio: float


def completion_nll(seq: ScoredSequence) -> float:
    return float(-seq.completion.mean())


def _log_likelihood(seq: ScoredSequence, normalized: bool) -> float:
    completion = seq.completion
    return float(completion.mean() if normalized else completion.sum())


def _clamp(p: float) -> float:
    return min(max(p, LIKELIHOOD_EPSILON), 1.0 - LIKELIHOOD_EPSILON)


def sequence_likelihood(seq: ScoredSequence, normalized: bool = True) -> float:
    return _clamp(math.exp(_log_likelihood(seq, normalized)))


def odds(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise OrpoDomainError(f"probability {p} outside (0, 1)")
    return p / (1.0 - p)


def log_odds(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise OrpoDomainError(f"probability {p} outside (0, 1)")
    return math.log(p) - math.log1p(-p)


def _odds_gap(
    chosen: ScoredSequence, rejected: ScoredSequence, normalized: bool
) -> float:
    return log_odds(sequence_likelihood(chosen, normalized)) - log_odds(
        sequence_likelihood(rejected, normalized)
    )


def or_penalty(
    chosen: ScoredSequence, rejected: ScoredSequence, normalized: bool = True
) -> float:
    """-log sigmoid of the log odds ratio; ln 2 for equally likely sequences."""
    return float(np.logaddexp(0.0, -_odds_gap(chosen, rejected, normalized)))


def orpo_loss(
    chosen: ScoredSequence,
    rejected: ScoredSequence,
    lam: float = DEFAULT_ORPO_LAMBDA,
    normalized: bool = True,
) -> OrpoTerms:
    if lam < 0:
        raise OrpoDomainError("lambda must be >= 0")
    nll = completion_nll(chosen)
    penalty = or_penalty(chosen, rejected, normalized)
    return OrpoTerms(total=nll + lam * penalty, nll=nll, odds_ratio=penalty)


def _log_odds_slope(seq: ScoredSequence, normalized: bool) -> np.ndarray:
    """d log odds(P) / d logprob per token; zero for prompt tokens and clamped P."""
    slope = np.zeros(len(seq.token_logprobs))
    m = len(seq.token_logprobs) - seq.boundary
    p = math.exp(_log_likelihood(seq, normalized))
    if LIKELIHOOD_EPSILON < p < 1.0 - LIKELIHOOD_EPSILON:
        slope[seq.boundary :] = (1.0 / m if normalized else 1.0) / (1.0 - p)
    return slope


def orpo_loss_gradient(
    chosen: ScoredSequence,
    rejected: ScoredSequence,
    lam: float = DEFAULT_ORPO_LAMBDA,
    normalized: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of ``orpo_loss(...).total`` w.r.t. every token logprob.

    Returns:
        tuple[np.ndarray, np.ndarray]: gradients over the chosen and the
            rejected token logprobs, prompt positions included (as zeros).
    """
    if lam < 0:
        raise OrpoDomainError("lambda must be >= 0")
    gap = _odds_gap(chosen, rejected, normalized)
    # d/dgap of log(1 + exp(-gap)) is -sigmoid(-gap)
    weight = lam * float(np.exp(-np.logaddexp(0.0, gap)))
    m = len(chosen.token_logprobs) - chosen.boundary
    grad_chosen = -weight * _log_odds_slope(chosen, normalized)
    grad_chosen[chosen.boundary :] -= 1.0 / m
    grad_rejected = weight * _log_odds_slope(rejected, normalized)
    return grad_chosen, grad_rejected


class ScoredPairRecord(FrozenModel):
    """One line of a scored-pair file."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    chosen_logprobs: tuple[float, ...]
    rejected_logprobs: tuple[float, ...]
    boundary: int = Field(default=0, ge=0)
    lam: Optional[float] = Field(default=None, alias="lambda", ge=0)


class PairScore(FrozenModel):
    line: int
    total: float
    nll: float
    odds_ratio: float


def score_pairs_file(
    path: str | Path,
    lam: Optional[float] = None,
    normalized: bool = True,
) -> list[PairScore]:
    """Score every pair of a scored-pair JSONL file.

    Each line holds ``chosen_logprobs``, ``rejected_logprobs``, ``boundary``
    (prompt tokens at the start of both) and optionally ``lambda``.

    Args:
        path (str | Path): scored-pair file.
        lam (Optional[float]): lambda for every line, overriding the file;
            lines without ``lambda`` otherwise use 0.5.
        normalized (bool): length-normalized likelihoods.

    Raises:
        DatasetError: a line is malformed, naming its line number.

    Returns:
        list[PairScore]: one score per non-empty line.
    """
    scores = []
    with open(path, "rt", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = ScoredPairRecord.model_validate(json.loads(line))
                chosen = ScoredSequence(
                    token_logprobs=record.chosen_logprobs, boundary=record.boundary
                )
                rejected = ScoredSequence(
                    token_logprobs=record.rejected_logprobs, boundary=record.boundary
                )
                weight = lam if lam is not None else record.lam
                terms = orpo_loss(
                    chosen,
                    rejected,
                    DEFAULT_ORPO_LAMBDA if weight is None else weight,
                    normalized,
                )
            except (json.JSONDecodeError, ValidationError, OrpoDomainError) as e:
                raise DatasetError(f"{path} line {number}: {e}") from e
            scores.append(PairScore(line=number, **terms._asdict()))
    logger.info("Scored %d pairs from %s", len(scores), path)
    return scores
