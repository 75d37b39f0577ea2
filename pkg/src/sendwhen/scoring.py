"""Per-user delta-effect scoring and the offline/online score split.

Scoring answers: if this user gets a notification right now, how much
more likely is a visit within the next T hours than if we stay quiet?
The answer needs the user's current feature vector, the hypothetical
post-send vector (badge up one, state clock reset), and the fitted
model, all combined through the survival layer.  Batch systems can
precompute the dot product over slowly changing slots and finish the
score at decision time with only the real-time slots; the split is
exact because the linear predictor is additive.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, NumericalError, SchemaError
from .features import FeatureSchema
from .survival import (
    StatePair,
    WeibullParams,
    delta_effect,
    prob_visit_if_not_send,
    prob_visit_if_send,
)
from .training import WeibullAftModel

__all__ = [
    "ScoringContext",
    "DeltaEffectResult",
    "PartialScore",
    "transition_features",
    "score_delta_effect",
    "score_batch",
    "partition_slots",
    "partial_score",
    "combine",
    "model_digest",
]


@dataclass(frozen=True)
class ScoringContext:
    """A user's state at the moment a send/hold question is asked."""

    features_now: tuple[float, ...]
    w0_hours: float
    horizon_T: float

    def __post_init__(self) -> None:
        x = np.asarray(self.features_now, dtype=float)
        if x.ndim != 1 or len(x) == 0:
            raise DomainError("features_now must be a non-empty vector")
        if not np.all(np.isfinite(x)):
            raise DomainError("features_now must be finite")
        if not (math.isfinite(self.w0_hours) and self.w0_hours >= 0):
            raise DomainError(f"w0_hours must be >= 0, got {self.w0_hours}")
        if not (math.isfinite(self.horizon_T) and self.horizon_T > 0):
            raise DomainError(f"horizon_T must be > 0, got {self.horizon_T}")
        object.__setattr__(self, "features_now", tuple(float(v) for v in x))


@dataclass(frozen=True)
class DeltaEffectResult:
    """Delta effect plus every intermediate needed to audit it."""

    delta: float
    p_send: float
    p_wait: float
    lambda0: float
    lambda1: float
    alpha: float

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "p_send": self.p_send,
            "p_wait": self.p_wait,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class PartialScore:
    """Offline half of the linear predictor, computed ahead of time."""

    user_id: str
    offline_dot: float
    computed_at: float
    model_version: str


def model_digest(model: WeibullAftModel) -> str:
    """Short stable digest of what the model predicts with."""
    payload = {
        "feature_names": list(model.feature_names),
        "coefficients": [repr(float(v)) for v in model.coefficients],
        "log_sigma": repr(float(model.log_sigma)),
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _schema_of(model: WeibullAftModel) -> FeatureSchema:
    if model.schema is None:
        raise SchemaError("model carries no feature schema; scoring needs one")
    return model.schema


def transition_features(
    x0: Sequence[float] | np.ndarray, schema: FeatureSchema
) -> np.ndarray:
    """Hypothetical post-send feature vector.

    Badge count up one, time-in-state slots to zero, interactions
    recomputed from updated parents; everything else carried over.  A
    schema without state slots transitions to the same vector, which
    makes the send/wait laws coincide.
    """
    return schema.transition(x0)


def score_delta_effect(
    ctx: ScoringContext, model: WeibullAftModel
) -> DeltaEffectResult:
    """Visit-probability gain of sending now versus waiting.

    The current state maps to one Weibull law, the post-send state to
    another with the same shape; the result carries both rates, the
    shape, and both conditional probabilities.
    """
    schema = _schema_of(model)
    x0 = np.asarray(ctx.features_now, dtype=float)
    if len(x0) != len(model.feature_names):
        raise SchemaError(
            f"context has {len(x0)} features, model expects "
            f"{len(model.feature_names)}"
        )
    if len(schema) != len(model.feature_names):
        raise SchemaError("model schema and coefficient vector disagree")
    x1 = transition_features(x0, schema)

    mu0 = float(x0 @ model.coefficients)
    mu1 = float(x1 @ model.coefficients)
    sigma = model.sigma
    try:
        lam0 = math.exp(-mu0 / sigma)
        lam1 = math.exp(-mu1 / sigma)
    except OverflowError:
        lam0 = lam1 = math.inf
    if not (math.isfinite(lam0) and math.isfinite(lam1)):
        raise NumericalError(
            f"non-finite rate from linear predictors ({mu0}, {mu1})"
        )
    alpha = model.alpha
    pre = WeibullParams(rate=lam0, shape=alpha)
    post = WeibullParams(rate=lam1, shape=alpha)
    pair = StatePair(pre=pre, post=post, elapsed_w0=ctx.w0_hours)

    return DeltaEffectResult(
        delta=delta_effect(pair, ctx.horizon_T),
        p_send=prob_visit_if_send(ctx.horizon_T, post),
        p_wait=prob_visit_if_not_send(ctx.horizon_T, pre, ctx.w0_hours),
        lambda0=lam0,
        lambda1=lam1,
        alpha=alpha,
    )


def score_batch(
    contexts: Iterable[ScoringContext], model: WeibullAftModel
) -> list[DeltaEffectResult]:
    return [score_delta_effect(ctx, model) for ctx in contexts]


def partition_slots(
    schema: FeatureSchema, online_names: Iterable[str] | None = None
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Disjoint (offline indices, online indices) covering every slot.

    Defaults to the schema's own online flags.  An explicit override
    must keep any interaction whose parent is online on the online
    side, otherwise the split would not be computable ahead of time.
    """
    if online_names is None:
        mask = schema.online_mask()
    else:
        names = set(online_names)
        unknown = names - set(schema.names)
        if unknown:
            raise SchemaError(f"unknown slots in partition: {sorted(unknown)}")
        mask = np.zeros(len(schema), dtype=bool)
        for n in names:
            mask[schema.index(n)] = True
        for i, s in enumerate(schema.slots):
            if s.kind == "interaction":
                parent_online = any(mask[schema.index(p)] for p in s.parents)
                if parent_online and not mask[i]:
                    raise SchemaError(
                        f"invalid partition: interaction {s.name!r} has an "
                        "online parent but was assigned offline"
                    )
    offline = tuple(int(i) for i in np.flatnonzero(~mask))
    online = tuple(int(i) for i in np.flatnonzero(mask))
    return offline, online


def partial_score(
    x: Sequence[float] | np.ndarray,
    model: WeibullAftModel,
    *,
    user_id: str = "",
    computed_at: float = 0.0,
    online_names: Iterable[str] | None = None,
) -> PartialScore:
    """Dot product over the slots that do not change in real time."""
    schema = _schema_of(model)
    xv = schema.validate_vector(x)
    offline, _ = partition_slots(schema, online_names)
    dot = float(xv[list(offline)] @ model.coefficients[list(offline)])
    return PartialScore(
        user_id=user_id,
        offline_dot=dot,
        computed_at=computed_at,
        model_version=model_digest(model),
    )


def combine(
    partial: PartialScore,
    x_now: Sequence[float] | np.ndarray,
    model: WeibullAftModel,
    online_names: Iterable[str] | None = None,
) -> float:
    """Full linear predictor from a partial score and fresh online slots.

    x_now is a full-length vector; only its online slots are read, so
    stale offline entries cannot leak into the result.  Exact by
    additivity of the dot product.
    """
    schema = _schema_of(model)
    version = model_digest(model)
    if partial.model_version != version:
        raise SchemaError(
            f"partial score was computed with model {partial.model_version}, "
            f"combining with model {version}"
        )
    xv = schema.validate_vector(x_now)
    _, online = partition_slots(schema, online_names)
    return partial.offline_dot + float(
        xv[list(online)] @ model.coefficients[list(online)]
    )
