"""Training strategies: individual per-modality, joint end-to-end, and
staged (individual pre-training for half the epochs, then joint).

One run is fully deterministic given its config seed: encoder
initialization, batch shuffling, and dropout all draw from fixed
sub-streams of that seed. The optimizer steps once per ``grad_accum``
micro-batches; a shorter remainder group at the epoch end still triggers a
step. The plateau scheduler monitors the per-epoch validation AUC, and the
reported model is the epoch with the top validation AUC (final-epoch
metrics stay available in the curves).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import Tensor, no_grad, softmax, softmax_cross_entropy
from .encoders import (
    FrameStackEncoder,
    ModalityEncoder,
    PrecomputedEncoder,
    SequenceEncoder,
    VectorEncoder,
)
from .fusion import FusionHead, make_fusion_head
from .metrics import roc_auc
from .optim import Adam, PlateauScheduler
from .records import MODALITIES

LEARNED_FUSION_KINDS = ("ensemble", "feature")


@dataclass
class TrainConfig:
    """Optimization recipe; defaults follow the reference protocol except
    the learning rate, which is left to the experiment config (the
    reference 5e-6 is far too small for the toy encoders)."""

    total_epochs: int = 20
    lr: float = 5e-6
    batch_size: int = 2
    grad_accum: int = 10
    patience: int = 2
    factor: float = 0.5
    min_delta: float = 0.0
    seed: int = 0
    dropout_rate: float = 0.5
    hidden: int = 128

    def __post_init__(self):
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if self.batch_size < 1 or self.grad_accum < 1:
            raise ValueError("batch_size and grad_accum must be >= 1")

    @property
    def effective_batch(self) -> int:
        return self.batch_size * self.grad_accum


@dataclass
class ModalityData:
    """Balanced, split design matrices for one dimension."""

    kinds: dict      # modality -> encoder kind
    train_x: dict    # modality -> [n_train, ...]
    train_y: np.ndarray
    test_x: dict
    test_y: np.ndarray

    def n_train(self) -> int:
        return int(self.train_y.size)


@dataclass
class TrainedModel:
    """A finished run: final-state modules, curves, and the selected model.

    ``encoders``/``head`` hold the final-epoch parameters; ``best_params``
    snapshots the top-validation-AUC epoch (the reported model) in
    ``param_items`` order, and ``selected_scores`` are that epoch's test
    scores.
    """

    kind: str                 # text | audio | video | ensemble | feature
    strategy: str             # individual | joint | staged
    encoders: dict
    head: FusionHead | None
    losses: list
    val_aucs: list
    lrs: list
    top_auc: float
    final_auc: float
    selected_scores: np.ndarray
    best_params: list
    stage1: dict = field(default_factory=dict)  # staged: modality -> TrainedModel

    def param_items(self):
        # canonical modality order; matches the optimizer's parameter order
        items = []
        for modality in [m for m in MODALITIES if m in self.encoders]:
            for name, t in self.encoders[modality].params():
                items.append((f"{modality}.{name}", t))
        if self.head is not None:
            for name, t in self.head.params():
                items.append((f"head.{name}", t))
        return items

    def predict_scores(self, test_x, use_selected: bool = True) -> np.ndarray:
        """Positive-class probabilities; by default from the selected
        (top-AUC) parameters rather than the final ones."""
        saved = None
        if use_selected and self.best_params:
            tensors = [t for _, t in self.param_items()]
            saved = [t.data for t in tensors]
            for t, best in zip(tensors, self.best_params):
                t.data = best
        try:
            if self.kind in LEARNED_FUSION_KINDS:
                return _fusion_scores(self.encoders, self.head, self.kind, test_x)
            (modality,) = self.encoders
            x = test_x[modality] if isinstance(test_x, dict) else test_x
            return self.encoders[modality].scores(x)
        finally:
            if saved is not None:
                for t, d in zip(tensors, saved):
                    t.data = d


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *key]))


def _modality_index(modality: str) -> int:
    return MODALITIES.index(modality)


def build_encoder(kind: str, sample_x: np.ndarray, seed: int,
                  hidden: int = 128) -> ModalityEncoder:
    """Construct an encoder of ``kind`` sized to the payload array."""
    if kind == "vector":
        return VectorEncoder(input_dim=sample_x.shape[1], seed=seed, hidden=hidden)
    if kind == "sequence":
        return SequenceEncoder(seed=seed, hidden=hidden)
    if kind == "frame_stack":
        return FrameStackEncoder(frame_shape=sample_x.shape[2:] or (8, 8),
                                 seed=seed, hidden=hidden)
    if kind == "precomputed":
        return PrecomputedEncoder(seed=seed)
    raise ValueError(f"unknown encoder kind {kind!r}")


def _micro_batch_weights(chunk_size: int, batch_size: int) -> np.ndarray:
    """Per-instance loss weights making one chunk forward reproduce the
    gradient sum over its micro-batches of size ``batch_size``."""
    weights = np.empty(chunk_size)
    for start in range(0, chunk_size, batch_size):
        size = min(batch_size, chunk_size - start)
        weights[start:start + size] = 1.0 / size
    return weights


def _fit(params, loss_fn, score_fn, test_labels, config: TrainConfig,
         n_train: int, shuffle_rng: np.random.Generator):
    """Shared epoch loop: accumulate-step optimization, per-epoch
    validation AUC, plateau scheduling, and top-epoch snapshotting.

    ``loss_fn(idx, weights)`` returns the scalar loss tensor for a chunk of
    ``grad_accum`` micro-batches; ``score_fn()`` returns test scores.
    """
    optimizer = Adam(params, lr=config.lr)
    scheduler = PlateauScheduler(lr=config.lr, patience=config.patience,
                                 factor=config.factor, min_delta=config.min_delta)
    chunk = config.effective_batch
    losses, val_aucs, lrs = [], [], []
    best = (-np.inf, None, None)  # auc, params snapshot, test scores
    test_scores = None
    for _ in range(config.total_epochs):
        order = shuffle_rng.permutation(n_train)
        epoch_loss = 0.0
        n_micro = 0
        for start in range(0, n_train, chunk):
            idx = order[start:start + chunk]
            weights = _micro_batch_weights(idx.size, config.batch_size)
            loss = loss_fn(idx, weights)
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            micro_here = int(np.ceil(idx.size / config.batch_size))
            epoch_loss += loss.item()
            n_micro += micro_here
        losses.append(epoch_loss / max(n_micro, 1))
        test_scores = score_fn()
        auc = roc_auc(test_scores, test_labels)
        val_aucs.append(auc)
        if auc > best[0]:
            best = (auc, [p.data.copy() for p in params], test_scores.copy())
        new_lr = scheduler.step(auc)
        optimizer.lr = new_lr
        lrs.append(new_lr)
    return {
        "losses": losses,
        "val_aucs": val_aucs,
        "lrs": lrs,
        "top_auc": best[0],
        "final_auc": val_aucs[-1],
        "best_params": best[1],
        "selected_scores": best[2],
        "final_scores": test_scores,
    }


def _single_loss_fn(encoder, x_train, y_train):
    def loss_fn(idx, weights):
        out = encoder.forward(x_train[idx], train=True)
        return softmax_cross_entropy(out.rep2, y_train[idx].astype(np.intp), weights)
    return loss_fn


def _single_score_fn(encoder, x_test):
    def score_fn():
        return encoder.scores(x_test)
    return score_fn


def train_individual(modality: str, data: ModalityData,
                     config: TrainConfig) -> TrainedModel:
    """Train one modality's encoder with its own 2-class head."""
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}")
    if data.n_train() == 0 or data.test_y.size == 0:
        raise ValueError("train_individual requires non-empty train and test sets")
    m_idx = _modality_index(modality)
    encoder = build_encoder(data.kinds[modality], data.train_x[modality],
                            seed=_encoder_seed(config.seed, m_idx),
                            hidden=config.hidden)
    result = _fit(
        encoder.param_tensors(),
        _single_loss_fn(encoder, data.train_x[modality], data.train_y),
        _single_score_fn(encoder, data.test_x[modality]),
        data.test_y,
        config,
        data.n_train(),
        shuffle_rng=_substream(config.seed, 31, m_idx),
    )
    return TrainedModel(
        kind=modality, strategy="individual",
        encoders={modality: encoder}, head=None,
        selected_scores=result["selected_scores"],
        best_params=result["best_params"],
        **{k: result[k] for k in ("losses", "val_aucs", "lrs", "top_auc", "final_auc")},
    )


def _encoder_seed(seed: int, m_idx: int) -> int:
    # stable per-modality init seed; shared by individual and staged stage 1
    return int(np.random.SeedSequence([int(seed), 30, m_idx]).generate_state(1)[0])


def _fusion_logits(encoders, head, fusion_kind, batch_x, train, dropout_rng):
    outs = {m: encoders[m].forward(batch_x[m], train=train) for m in MODALITIES}
    if fusion_kind == "ensemble":
        return head.forward(outs["text"].rep2, outs["audio"].rep2,
                            outs["video"].rep2)
    return head.forward(outs["text"].rep256, outs["audio"].rep256,
                        outs["video"].rep256, train=train, rng=dropout_rng)


def _fusion_scores(encoders, head, fusion_kind, test_x) -> np.ndarray:
    with no_grad():
        logits = _fusion_logits(encoders, head, fusion_kind, test_x,
                                train=False, dropout_rng=None)
    return softmax(logits.data)[:, 1]


def _joint_fit(encoders, head, fusion_kind, data, config, shuffle_rng,
               dropout_rng):
    params = [t for m in MODALITIES for t in encoders[m].param_tensors()]
    params += head.param_tensors()

    def loss_fn(idx, weights):
        batch = {m: data.train_x[m][idx] for m in MODALITIES}
        logits = _fusion_logits(encoders, head, fusion_kind, batch,
                                train=True, dropout_rng=dropout_rng)
        return softmax_cross_entropy(logits, data.train_y[idx].astype(np.intp),
                                     weights)

    def score_fn():
        return _fusion_scores(encoders, head, fusion_kind, data.test_x)

    return _fit(params, loss_fn, score_fn, data.test_y, config,
                data.n_train(), shuffle_rng)


def train_joint(fusion_kind: str, data: ModalityData,
                config: TrainConfig) -> TrainedModel:
    """Train three fresh encoders and a fusion head end to end."""
    if fusion_kind not in LEARNED_FUSION_KINDS:
        raise ValueError(
            f"joint training requires a learned fusion kind, got {fusion_kind!r}"
            " (voting has no joint parameters)"
        )
    encoders = {
        m: build_encoder(data.kinds[m], data.train_x[m],
                         seed=_encoder_seed(config.seed, _modality_index(m)),
                         hidden=config.hidden)
        for m in MODALITIES
    }
    head = make_fusion_head(fusion_kind, seed=_substream_seed(config.seed, 33),
                            dropout_rate=config.dropout_rate)
    result = _joint_fit(encoders, head, fusion_kind, data, config,
                        shuffle_rng=_substream(config.seed, 34),
                        dropout_rng=_substream(config.seed, 35))
    return TrainedModel(
        kind=fusion_kind, strategy="joint",
        encoders=encoders, head=head,
        selected_scores=result["selected_scores"],
        best_params=result["best_params"],
        **{k: result[k] for k in ("losses", "val_aucs", "lrs", "top_auc", "final_auc")},
    )


def _substream_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([int(seed), *key]).generate_state(1)[0])


def staged_epoch_split(total_epochs: int) -> tuple:
    """Stage-1/stage-2 epoch counts: floor(E/2) then the remainder."""
    if total_epochs < 2:
        raise ValueError("staged training needs total_epochs >= 2")
    stage1 = total_epochs // 2
    return stage1, total_epochs - stage1


def train_staged(fusion_kind: str, data: ModalityData,
                 config: TrainConfig) -> TrainedModel:
    """Individual pre-training for half the epochs, then joint training.

    Stage 1 runs the exact individual-training code path per modality.
    Stage 2 places the pre-trained trunks (and, for ensemble fusion, their
    heads as rep2 producers) under a freshly initialized fusion head with a
    fresh optimizer and scheduler.
    """
    if fusion_kind not in LEARNED_FUSION_KINDS:
        raise ValueError(
            f"staged training requires a learned fusion kind, got {fusion_kind!r}"
        )
    stage1_epochs, stage2_epochs = staged_epoch_split(config.total_epochs)

    stage1_config = replace(config, total_epochs=stage1_epochs)
    stage1 = {m: train_individual(m, data, stage1_config) for m in MODALITIES}
    encoders = {m: stage1[m].encoders[m] for m in MODALITIES}

    head = make_fusion_head(fusion_kind, seed=_substream_seed(config.seed, 36),
                            dropout_rate=config.dropout_rate)
    stage2_config = replace(config, total_epochs=stage2_epochs)
    result = _joint_fit(encoders, head, fusion_kind, data, stage2_config,
                        shuffle_rng=_substream(config.seed, 37),
                        dropout_rng=_substream(config.seed, 38))
    return TrainedModel(
        kind=fusion_kind, strategy="staged",
        encoders=encoders, head=head,
        selected_scores=result["selected_scores"],
        best_params=result["best_params"],
        stage1=stage1,
        **{k: result[k] for k in ("losses", "val_aucs", "lrs", "top_auc", "final_auc")},
    )
