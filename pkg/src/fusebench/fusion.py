"""The three late-fusion architectures: best voting, ensemble, feature.

Voting is parameter-free over the three per-modality predictions. The
ensemble head learns a single linear 6->2 map over the concatenated rep2
logits (14 parameters). The feature head is a funnel over the concatenated
rep256 features: linear 768->96, relu, dropout, linear 96->2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import ShapeError, Tensor, add_bias, concat, dropout, matmul, relu
from .encoders import FEATURE_DIM, HEAD_CLASSES

ENSEMBLE_IN = 3 * HEAD_CLASSES       # 6
FEATURE_IN = 3 * FEATURE_DIM         # 768
FEATURE_HIDDEN = 96


def majority_vote(preds) -> bool:
    """True iff at least 2 of the 3 boolean predictions are true."""
    p = [bool(v) for v in preds]
    if len(p) != 3:
        raise ValueError(f"majority_vote expects exactly 3 predictions, got {len(p)}")
    return sum(p) >= 2


def max_vote(preds) -> bool:
    """True iff at least 1 of the 3 boolean predictions is true."""
    p = [bool(v) for v in preds]
    if len(p) != 3:
        raise ValueError(f"max_vote expects exactly 3 predictions, got {len(p)}")
    return any(p)


def vote_score(probs, rule: str) -> float:
    """Continuous voting score in [0, 1] used only for ROC curves.

    majority: fraction of models with probability above 0.5;
    max: the largest model probability.
    """
    p = [float(v) for v in probs]
    if len(p) != 3:
        raise ValueError(f"vote_score expects exactly 3 probabilities, got {len(p)}")
    if rule == "majority":
        return sum(v > 0.5 for v in p) / 3.0
    if rule == "max":
        return max(p)
    raise ValueError(f"unknown voting rule {rule!r}")


def vote_scores(prob_matrix: np.ndarray, rule: str) -> np.ndarray:
    """Vectorized ``vote_score`` over a [n, 3] probability matrix."""
    p = np.asarray(prob_matrix, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected [n, 3] probabilities, got {p.shape}")
    if rule == "majority":
        return (p > 0.5).sum(axis=1) / 3.0
    if rule == "max":
        return p.max(axis=1)
    raise ValueError(f"unknown voting rule {rule!r}")


def best_voting(rule_results: dict):
    """Pick the voting rule with the higher test AUC; ties go to majority.

    ``rule_results`` maps rule name to an object with an ``auc`` attribute
    (e.g. RunMetrics). Returns (chosen_rule, result).
    """
    if set(rule_results) != {"majority", "max"}:
        raise ValueError("best_voting needs results for both 'majority' and 'max'")
    if rule_results["max"].auc > rule_results["majority"].auc:
        return "max", rule_results["max"]
    return "majority", rule_results["majority"]


class FusionHead:
    """Base for the learned fusion heads."""

    kind = "base"

    def __init__(self):
        self._params = []

    def _register(self, name, tensor):
        self._params.append((name, tensor))
        return tensor

    def params(self):
        return list(self._params)

    def param_tensors(self):
        return [t for _, t in self._params]

    def param_count(self) -> int:
        return int(sum(t.size for t in self.param_tensors()))


class EnsembleHead(FusionHead):
    """Linear 6->2 combination of the three per-modality rep2 logits."""

    kind = "ensemble"

    def __init__(self, seed: int):
        super().__init__()
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 21]))
        self.w = self._register(
            "w", Tensor(rng.standard_normal((ENSEMBLE_IN, HEAD_CLASSES))
                        * np.sqrt(2.0 / ENSEMBLE_IN), requires_grad=True))
        self.b = self._register("b", Tensor(np.zeros(HEAD_CLASSES), requires_grad=True))

    def forward(self, rep2_text: Tensor, rep2_audio: Tensor, rep2_video: Tensor,
                train: bool = False, rng=None) -> Tensor:
        for r in (rep2_text, rep2_audio, rep2_video):
            if r.data.ndim != 2 or r.data.shape[1] != HEAD_CLASSES:
                raise ShapeError(
                    f"ensemble head expects three [b, {HEAD_CLASSES}] inputs, "
                    f"got {r.data.shape}"
                )
        combined = concat((rep2_text, rep2_audio, rep2_video), axis=1)
        return add_bias(matmul(combined, self.w), self.b)


class FeatureHead(FusionHead):
    """Funnel over concatenated rep256 features: 768 -> 96 -> 2.

    ReLU sits between the two linear layers with dropout after it; eval
    mode (or rate 0) is fully deterministic.
    """

    kind = "feature"

    def __init__(self, seed: int, dropout_rate: float = 0.5):
        super().__init__()
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.dropout_rate = dropout_rate
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 22]))
        self.w1 = self._register(
            "w1", Tensor(rng.standard_normal((FEATURE_IN, FEATURE_HIDDEN))
                         * np.sqrt(2.0 / FEATURE_IN), requires_grad=True))
        self.b1 = self._register("b1", Tensor(np.zeros(FEATURE_HIDDEN), requires_grad=True))
        self.w2 = self._register(
            "w2", Tensor(rng.standard_normal((FEATURE_HIDDEN, HEAD_CLASSES))
                         * np.sqrt(2.0 / FEATURE_HIDDEN), requires_grad=True))
        self.b2 = self._register("b2", Tensor(np.zeros(HEAD_CLASSES), requires_grad=True))

    def forward(self, rep256_text: Tensor, rep256_audio: Tensor, rep256_video: Tensor,
                train: bool = False, rng=None) -> Tensor:
        for r in (rep256_text, rep256_audio, rep256_video):
            if r.data.ndim != 2 or r.data.shape[1] != FEATURE_DIM:
                raise ShapeError(
                    f"feature head expects three [b, {FEATURE_DIM}] inputs, "
                    f"got {r.data.shape}"
                )
        combined = concat((rep256_text, rep256_audio, rep256_video), axis=1)
        h = relu(add_bias(matmul(combined, self.w1), self.b1))
        if train and self.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("feature head needs an rng for dropout in train mode")
            h = dropout(h, self.dropout_rate, rng, train=True)
        return add_bias(matmul(h, self.w2), self.b2)


def ensemble_forward(head: EnsembleHead, rep2_text, rep2_audio, rep2_video) -> Tensor:
    return head.forward(rep2_text, rep2_audio, rep2_video)


def feature_forward(head: FeatureHead, rep256_text, rep256_audio, rep256_video,
                    train: bool = False, rng=None) -> Tensor:
    return head.forward(rep256_text, rep256_audio, rep256_video, train=train, rng=rng)


def make_fusion_head(kind: str, seed: int, dropout_rate: float = 0.5) -> FusionHead:
    if kind == "ensemble":
        return EnsembleHead(seed)
    if kind == "feature":
        return FeatureHead(seed, dropout_rate=dropout_rate)
    raise ValueError(f"unknown learned fusion kind {kind!r}")
