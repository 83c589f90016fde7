import itertools

import numpy as np
import pytest

from fusebench.autograd import ShapeError, Tensor, softmax_cross_entropy
from fusebench.fusion import (
    EnsembleHead,
    FeatureHead,
    best_voting,
    ensemble_forward,
    feature_forward,
    majority_vote,
    make_fusion_head,
    max_vote,
    vote_score,
    vote_scores,
)
from fusebench.metrics import evaluate_scores

from gradcheck import check_gradients


class TestVoting:
    def test_majority_examples(self):
        assert majority_vote((1, 1, 0)) is True
        assert majority_vote((0, 0, 1)) is False

    def test_max_examples(self):
        assert max_vote((0, 0, 1)) is True
        assert max_vote((0, 0, 0)) is False

    def test_exhaustive_truth_tables(self):
        for combo in itertools.product([False, True], repeat=3):
            assert majority_vote(combo) == (sum(combo) >= 2)
            assert max_vote(combo) == any(combo)

    def test_unanimous_identity(self):
        for x in (False, True):
            assert majority_vote((x, x, x)) == x

    def test_max_vote_monotone(self):
        for combo in itertools.product([False, True], repeat=3):
            if max_vote(combo):
                continue
            for i in range(3):
                flipped = list(combo)
                flipped[i] = True
                assert max_vote(flipped)

    def test_wrong_arity_rejected(self):
        with pytest.raises(ValueError):
            majority_vote((1, 0))
        with pytest.raises(ValueError):
            max_vote((1, 0, 1, 1))


class TestVoteScore:
    def test_majority_fraction(self):
        assert vote_score((0.9, 0.9, 0.1), "majority") == pytest.approx(2 / 3)

    def test_max_rule(self):
        assert vote_score((0.1, 0.2, 0.3), "max") == pytest.approx(0.3)

    def test_threshold_reproduces_majority_label(self):
        for combo in itertools.product([0.2, 0.8], repeat=3):
            hard = majority_vote(tuple(p > 0.5 for p in combo))
            assert (vote_score(combo, "majority") > 0.5) == hard

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(0)
        probs = rng.random((20, 3))
        for rule in ("majority", "max"):
            vec = vote_scores(probs, rule)
            scalars = [vote_score(row, rule) for row in probs]
            np.testing.assert_allclose(vec, scalars)

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValueError):
            vote_score((0.1, 0.2, 0.3), "median")


class TestBestVoting:
    def _metrics(self, auc):
        m = evaluate_scores([0.9, 0.1], [1, 0])
        m.auc = auc
        return m

    def test_picks_higher_auc(self):
        rule, result = best_voting({"majority": self._metrics(0.70),
                                    "max": self._metrics(0.65)})
        assert rule == "majority" and result.auc == 0.70
        rule, _ = best_voting({"majority": self._metrics(0.60),
                               "max": self._metrics(0.65)})
        assert rule == "max"

    def test_tie_goes_to_majority(self):
        rule, _ = best_voting({"majority": self._metrics(0.70),
                               "max": self._metrics(0.70)})
        assert rule == "majority"

    def test_requires_both_rules(self):
        with pytest.raises(ValueError):
            best_voting({"majority": self._metrics(0.70)})


class TestEnsembleHead:
    def test_parameter_count_is_14(self):
        assert EnsembleHead(seed=0).param_count() == 14

    def test_zero_weights_give_uniform_probability(self):
        head = EnsembleHead(seed=0)
        head.w.data[:] = 0.0
        head.b.data[:] = 0.0
        reps = [Tensor(np.random.default_rng(i).standard_normal((4, 2)))
                for i in range(3)]
        logits = ensemble_forward(head, *reps)
        np.testing.assert_array_equal(logits.data, np.zeros((4, 2)))

    def test_identity_weights_pass_text_channel(self):
        head = EnsembleHead(seed=0)
        head.w.data[:] = 0.0
        head.b.data[:] = 0.0
        head.w.data[0, 0] = 1.0
        head.w.data[1, 1] = 1.0
        rng = np.random.default_rng(3)
        text = Tensor(rng.standard_normal((5, 2)))
        audio = Tensor(rng.standard_normal((5, 2)))
        video = Tensor(rng.standard_normal((5, 2)))
        logits = ensemble_forward(head, text, audio, video)
        np.testing.assert_allclose(logits.data, text.data, atol=1e-12)

    def test_linear_in_each_input_slot(self):
        head = EnsembleHead(seed=1)
        rng = np.random.default_rng(4)
        base = [Tensor(rng.standard_normal((3, 2))) for _ in range(3)]
        zero = [Tensor(np.zeros((3, 2))) for _ in range(3)]
        f0 = ensemble_forward(head, *zero).data
        for slot in range(3):
            a = [zero[0], zero[1], zero[2]]
            b = [zero[0], zero[1], zero[2]]
            a[slot] = base[slot]
            b[slot] = Tensor(2.0 * base[slot].data)
            fa = ensemble_forward(head, *a).data
            fb = ensemble_forward(head, *b).data
            np.testing.assert_allclose(fb - f0, 2.0 * (fa - f0), atol=1e-12)

    def test_gradient_reaches_all_parameters_and_inputs(self):
        head = EnsembleHead(seed=2)
        rng = np.random.default_rng(5)
        reps = [Tensor(rng.standard_normal((4, 2)), requires_grad=True)
                for _ in range(3)]
        targets = np.array([0, 1, 0, 1])

        def forward():
            combined = np.hstack([r.data for r in reps])
            logits = combined @ head.w.data + head.b.data
            z = logits - logits.max(axis=1, keepdims=True)
            lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return float(-lp[np.arange(4), targets].mean())

        loss = softmax_cross_entropy(ensemble_forward(head, *reps), targets)
        loss.backward()
        assert head.w.grad is not None and head.b.grad is not None
        assert all(r.grad is not None for r in reps)
        assert check_gradients(forward, [head.w, head.b, *reps]) < 1e-6

    def test_wrong_shape_rejected(self):
        head = EnsembleHead(seed=0)
        with pytest.raises(ShapeError):
            ensemble_forward(head, Tensor(np.zeros((2, 3))),
                             Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 2))))


class TestFeatureHead:
    def test_parameter_count(self):
        # 768*96 + 96 + 96*2 + 2
        assert FeatureHead(seed=0).param_count() == 74018

    def test_zero_input_zero_bias_gives_zero_logits(self):
        head = FeatureHead(seed=0)
        head.b1.data[:] = 0.0
        head.b2.data[:] = 0.0
        reps = [Tensor(np.zeros((3, 256))) for _ in range(3)]
        logits = feature_forward(head, *reps)
        np.testing.assert_array_equal(logits.data, np.zeros((3, 2)))

    def test_eval_mode_deterministic(self):
        head = FeatureHead(seed=1)
        rng = np.random.default_rng(6)
        reps = [Tensor(rng.standard_normal((2, 256))) for _ in range(3)]
        a = feature_forward(head, *reps, train=False)
        b = feature_forward(head, *reps, train=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_train_with_zero_rate_equals_eval(self):
        head = FeatureHead(seed=2, dropout_rate=0.0)
        rng = np.random.default_rng(7)
        reps = [Tensor(rng.standard_normal((2, 256))) for _ in range(3)]
        train_out = feature_forward(head, *reps, train=True,
                                    rng=np.random.default_rng(0))
        eval_out = feature_forward(head, *reps, train=False)
        np.testing.assert_array_equal(train_out.data, eval_out.data)

    def test_train_mode_requires_rng(self):
        head = FeatureHead(seed=3)
        reps = [Tensor(np.zeros((1, 256))) for _ in range(3)]
        with pytest.raises(ValueError):
            feature_forward(head, *reps, train=True)

    def test_gradient_on_all_parameters(self):
        # full finite-difference sweep over all 74,018 parameters
        head = FeatureHead(seed=4)
        rng = np.random.default_rng(8)
        reps = [Tensor(rng.standard_normal((2, 256))) for _ in range(3)]
        targets = np.array([0, 1])

        def forward():
            combined = np.hstack([r.data for r in reps])
            h = np.maximum(combined @ head.w1.data + head.b1.data, 0.0)
            logits = h @ head.w2.data + head.b2.data
            z = logits - logits.max(axis=1, keepdims=True)
            lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return float(-lp[np.arange(2), targets].mean())

        loss = softmax_cross_entropy(
            feature_forward(head, *reps, train=False), targets)
        loss.backward()
        err = check_gradients(forward, head.param_tensors())
        assert err < 1e-4

    def test_wrong_shape_rejected(self):
        head = FeatureHead(seed=0)
        with pytest.raises(ShapeError):
            feature_forward(head, Tensor(np.zeros((1, 255))),
                            Tensor(np.zeros((1, 256))), Tensor(np.zeros((1, 256))))

    def test_invalid_dropout_rate_rejected(self):
        with pytest.raises(ValueError):
            FeatureHead(seed=0, dropout_rate=1.0)


def test_make_fusion_head_dispatch():
    assert make_fusion_head("ensemble", seed=0).kind == "ensemble"
    assert make_fusion_head("feature", seed=0).kind == "feature"
    with pytest.raises(ValueError):
        make_fusion_head("majority_vote", seed=0)
