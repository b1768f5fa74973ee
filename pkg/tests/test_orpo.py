import json
import math
from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError

from mats_sql.errors import DatasetError, OrpoDomainError
from mats_sql.orpo import (
    ScoredSequence,
    completion_nll,
    log_odds,
    odds,
    or_penalty,
    orpo_loss,
    orpo_loss_gradient,
    score_pairs_file,
    sequence_likelihood,
)


def _seq(*logprobs: float, boundary: int = 0) -> ScoredSequence:
    return ScoredSequence(token_logprobs=logprobs, boundary=boundary)


class TestTerms:
    def test_prompt_tokens_are_ignored(self) -> None:
        seq = _seq(-9.0, -9.0, -0.2, -0.4, boundary=2)
        assert completion_nll(seq) == pytest.approx(0.3)
        assert sequence_likelihood(seq) == pytest.approx(math.exp(-0.3))
        unnormalized = sequence_likelihood(seq, normalized=False)
        assert unnormalized == pytest.approx(math.exp(-0.6))

    def test_equally_likely_sequences(self) -> None:
        seq = _seq(-0.5, -1.5)
        assert or_penalty(seq, seq) == pytest.approx(math.log(2))

    def test_lambda_zero_is_plain_nll(self) -> None:
        terms = orpo_loss(_seq(-0.1, -0.3), _seq(-2.0), lam=0.0)
        assert terms.total == pytest.approx(terms.nll)
        assert terms.nll == pytest.approx(0.2)

    def test_total_combines_terms(self) -> None:
        chosen, rejected = _seq(-0.1, -0.3), _seq(-2.0, -1.0)
        terms = orpo_loss(chosen, rejected, lam=0.5)
        assert terms.total == pytest.approx(terms.nll + 0.5 * terms.odds_ratio)
        # the more likely chosen sequence costs less than ln 2
        assert 0 < terms.odds_ratio < math.log(2)
        swapped = orpo_loss(rejected, chosen, lam=0.5)
        assert swapped.odds_ratio > math.log(2)

    def test_certain_sequences_are_clamped(self) -> None:
        certain = _seq(0.0, 0.0)
        assert sequence_likelihood(certain) < 1.0
        assert math.isfinite(or_penalty(certain, _seq(-1.0)))
        assert math.isfinite(or_penalty(_seq(-1.0), _seq(-500.0)))

    def test_odds(self) -> None:
        assert odds(0.5) == pytest.approx(1.0)
        assert odds(0.75) == pytest.approx(3.0)
        assert log_odds(0.75) == pytest.approx(math.log(3.0))


class TestDomain:
    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_probability_outside_open_interval(self, p: float) -> None:
        with pytest.raises(OrpoDomainError):
            odds(p)
        with pytest.raises(OrpoDomainError):
            log_odds(p)

    def test_empty_completion(self) -> None:
        with pytest.raises(OrpoDomainError):
            completion_nll(_seq(-1.0, boundary=1))

    def test_negative_lambda(self) -> None:
        with pytest.raises(OrpoDomainError):
            orpo_loss(_seq(-1.0), _seq(-2.0), lam=-0.1)

    @pytest.mark.parametrize(
        "logprobs,boundary", [((0.5,), 0), ((float("nan"),), 0), ((-1.0,), 2)]
    )
    def test_invalid_sequences(
        self, logprobs: tuple[float, ...], boundary: int
    ) -> None:
        with pytest.raises(ValidationError):
            ScoredSequence(token_logprobs=logprobs, boundary=boundary)


@pytest.mark.parametrize("normalized", [True, False])
def test_gradient_matches_finite_differences(normalized: bool) -> None:
    rng = np.random.default_rng(0)
    chosen_lp = rng.uniform(-1.5, -0.2, size=5)
    rejected_lp = rng.uniform(-2.0, -0.5, size=4)
    boundary, lam, step = 2, 0.7, 1e-6

    def total(c: np.ndarray, r: np.ndarray) -> float:
        return orpo_loss(
            ScoredSequence(token_logprobs=tuple(c), boundary=boundary),
            ScoredSequence(token_logprobs=tuple(r), boundary=boundary),
            lam,
            normalized,
        ).total

    grad_c, grad_r = orpo_loss_gradient(
        ScoredSequence(token_logprobs=tuple(chosen_lp), boundary=boundary),
        ScoredSequence(token_logprobs=tuple(rejected_lp), boundary=boundary),
        lam,
        normalized,
    )
    assert np.all(grad_c[:boundary] == 0) and np.all(grad_r[:boundary] == 0)
    for i in range(len(chosen_lp)):
        up, down = chosen_lp.copy(), chosen_lp.copy()
        up[i] += step
        down[i] -= step
        numeric = (total(up, rejected_lp) - total(down, rejected_lp)) / (2 * step)
        assert grad_c[i] == pytest.approx(numeric, abs=1e-5)
    for i in range(len(rejected_lp)):
        up, down = rejected_lp.copy(), rejected_lp.copy()
        up[i] += step
        down[i] -= step
        numeric = (total(chosen_lp, up) - total(chosen_lp, down)) / (2 * step)
        assert grad_r[i] == pytest.approx(numeric, abs=1e-5)


class TestScorePairsFile:
    @staticmethod
    def _write(path: Path, *records: dict) -> Path:
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n\n")
        return path

    def test_lambda_precedence(self, tmp_path: Path) -> None:
        record = {"chosen_logprobs": [-1.0, -0.2], "rejected_logprobs": [-1.0, -2.0]}
        path = self._write(
            tmp_path / "pairs.jsonl", {**record, "boundary": 1, "lambda": 0.0}, record
        )
        from_file = score_pairs_file(path)
        assert [s.line for s in from_file] == [1, 2]
        assert from_file[0].total == pytest.approx(0.2)
        second = orpo_loss(_seq(-1.0, -0.2), _seq(-1.0, -2.0), lam=0.5)
        assert from_file[1].total == pytest.approx(second.total)

        overridden = score_pairs_file(path, lam=1.0)
        assert overridden[0].total == pytest.approx(0.2 + overridden[0].odds_ratio)

    @pytest.mark.parametrize(
        "line",
        [
            "not json",
            json.dumps({"chosen_logprobs": [-1.0]}),
            json.dumps({"chosen_logprobs": [1.0], "rejected_logprobs": [-1.0]}),
            json.dumps(
                {"chosen_logprobs": [-1.0], "rejected_logprobs": [-1.0], "x": 1}
            ),
        ],
    )
    def test_malformed_line(self, tmp_path: Path, line: str) -> None:
        path = tmp_path / "pairs.jsonl"
        good = {"chosen_logprobs": [-0.1], "rejected_logprobs": [-1.0]}
        path.write_text(json.dumps(good) + "\n" + line + "\n")
        with pytest.raises(DatasetError, match="line 2"):
            score_pairs_file(path)
