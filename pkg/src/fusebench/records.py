"""Shared record types: the five feedback dimensions, label sets, and
per-instance records carried through generation, ingestion, and training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# Canonical dimension order used everywhere (labels, priors, reports).
DIMENSIONS = ("anatomic", "procedural", "technical", "praise", "visual_aid")

MODALITIES = ("text", "audio", "video")

# Text payload channels; the transcript source picks one of the two.
TEXT_CHANNELS = ("text_manual", "text_asr")


@dataclass(frozen=True)
class FeedbackLabelSet:
    """Non-exclusive binary labels for one feedback instance."""

    anatomic: bool = False
    procedural: bool = False
    technical: bool = False
    praise: bool = False
    visual_aid: bool = False

    def get(self, dimension: str) -> bool:
        if dimension not in DIMENSIONS:
            raise KeyError(f"unknown dimension {dimension!r}")
        return getattr(self, dimension)

    def as_dict(self) -> dict:
        return {d: bool(getattr(self, d)) for d in DIMENSIONS}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackLabelSet":
        return cls(**{k: bool(d[k]) for k in DIMENSIONS})


@dataclass
class InstanceRecord:
    """One feedback event: identity, onset, labels, and payloads.

    ``payloads`` maps channel name (text_manual, text_asr, audio, video) to
    a numeric array; structural-mode text instead lives in the
    ``text_manual``/``text_asr`` string fields as whitespace-separated
    token ids. ``oracle_scores`` holds the generator's exact per-dimension
    posteriors when the data came from the analytic synthetic mode.
    """

    id: str
    case_id: str
    onset_s: float
    labels: FeedbackLabelSet
    text_manual: str | None = None
    text_asr: str | None = None
    payloads: dict = field(default_factory=dict)
    embeddings: dict = field(default_factory=dict)
    oracle_scores: list | None = None
