"""Synthetic ground-truth generator: users, send schedules, visit draws.

Every user owns an independent random substream keyed by (seed, user
index), so output does not depend on generation order and parallel
implementations would produce identical logs.  Visits are drawn from the
censored Weibull AFT law implied by the true coefficients; a drawn visit
materializes only when it lands before the user's next notification,
which is exactly how right-censoring arises in the real pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .features import FeatureSchema
from .pipeline import SEND, VISIT, Event
from .survival import WeibullParams, weibull_sf

__all__ = [
    "SendProcess",
    "SimConfig",
    "default_sim_schema",
    "sample_time_to_visit",
    "generate_event_log",
]


@dataclass(frozen=True)
class SendProcess:
    """Notification arrival schedule: fixed cadence or Poisson.

    For the fixed cadence, phase_hours places the first send; None draws
    it uniformly in [0, interval) per user.  A deterministic phase equal
    to the interval, with the window a multiple of the interval, puts the
    final send exactly at the window edge where it can never resolve, so
    ingestion keeps only fully observed send gaps (no partially resolved
    tail that would bias parameter recovery short).
    """

    kind: str  # "fixed" | "poisson"
    interval_hours: float | None = None  # fixed
    rate_per_hour: float | None = None  # poisson
    phase_hours: float | None = None  # fixed only; None -> random phase

    def __post_init__(self) -> None:
        if self.kind == "fixed":
            if not (self.interval_hours and self.interval_hours > 0):
                raise ConfigError("fixed send process needs interval_hours > 0")
            if self.phase_hours is not None and not (
                math.isfinite(self.phase_hours) and self.phase_hours >= 0
            ):
                raise ConfigError(
                    f"phase_hours must be finite and >= 0, got {self.phase_hours}"
                )
        elif self.kind == "poisson":
            if not (self.rate_per_hour and self.rate_per_hour > 0):
                raise ConfigError("poisson send process needs rate_per_hour > 0")
            if self.phase_hours is not None:
                raise ConfigError("phase_hours only applies to the fixed process")
        else:
            raise ConfigError(f"unknown send process kind {self.kind!r}")

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.kind == "fixed":
            d["interval_hours"] = self.interval_hours
            if self.phase_hours is not None:
                d["phase_hours"] = self.phase_hours
        else:
            d["rate_per_hour"] = self.rate_per_hour
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SendProcess":
        try:
            return cls(
                kind=d["kind"],
                interval_hours=d.get("interval_hours"),
                rate_per_hour=d.get("rate_per_hour"),
                phase_hours=d.get("phase_hours"),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed send_process {d!r}") from exc


@dataclass(frozen=True)
class SimConfig:
    n_users: int
    n_profile_features: int
    true_coefficients: tuple[float, ...]  # aligned with default_sim_schema order
    true_sigma: float
    send_process: SendProcess
    window_hours: float
    seed: int = 0
    include_interaction: bool = True

    def __post_init__(self) -> None:
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        if self.n_profile_features < 0:
            raise ConfigError("n_profile_features must be >= 0")
        if not (math.isfinite(self.true_sigma) and self.true_sigma > 0):
            raise ConfigError(f"true_sigma must be > 0, got {self.true_sigma}")
        if self.window_hours <= 0:
            raise ConfigError("window_hours must be > 0")
        expected = len(default_sim_schema(self))
        if len(self.true_coefficients) != expected:
            raise ConfigError(
                f"true_coefficients has {len(self.true_coefficients)} entries; "
                f"the schema needs {expected} "
                "(intercept, profiles, badge_count, interaction)"
            )

    def to_dict(self) -> dict:
        return {
            "n_users": self.n_users,
            "n_profile_features": self.n_profile_features,
            "true_coefficients": list(self.true_coefficients),
            "true_sigma": self.true_sigma,
            "send_process": self.send_process.to_dict(),
            "window_hours": self.window_hours,
            "seed": self.seed,
            "include_interaction": self.include_interaction,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        try:
            return cls(
                n_users=int(d["n_users"]),
                n_profile_features=int(d["n_profile_features"]),
                true_coefficients=tuple(float(v) for v in d["true_coefficients"]),
                true_sigma=float(d["true_sigma"]),
                send_process=SendProcess.from_dict(d["send_process"]),
                window_hours=float(d["window_hours"]),
                seed=int(d.get("seed", 0)),
                include_interaction=bool(d.get("include_interaction", True)),
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed simulator config: {exc}") from exc


def default_sim_schema(cfg: SimConfig) -> FeatureSchema:
    """intercept, profile_0..k-1, badge_count, badge_count*profile_0."""
    base = [f"profile_{j}" for j in range(cfg.n_profile_features)]
    interactions = []
    if cfg.include_interaction and cfg.n_profile_features > 0:
        interactions.append(("badge_count", "profile_0"))
    return FeatureSchema.build(
        base=base, badge="badge_count", interactions=interactions
    )


def sample_time_to_visit(
    x: np.ndarray,
    coefficients: Sequence[float],
    sigma: float,
    rng: np.random.Generator,
    size: int | None = None,
) -> float | np.ndarray:
    """Draw time-to-visit hours from exp(b.x + sigma*eps).

    eps comes from the standard extreme-value law via the inverse CDF
    eps = log(-log(1-U)).  Uniform draws are nudged off exact 0 so the
    result is always strictly positive.
    """
    mu = float(np.asarray(x, dtype=float) @ np.asarray(coefficients, dtype=float))
    u = rng.uniform(size=size)
    u = np.clip(u, 1e-300, None)
    eps = np.log(-np.log1p(-u))
    t = np.exp(mu + sigma * eps)
    return float(t) if size is None else t


def _send_times(
    proc: SendProcess, window_hours: float, rng: np.random.Generator
) -> list[float]:
    times: list[float] = []
    if proc.kind == "fixed":
        if proc.phase_hours is not None:
            t = proc.phase_hours
        else:
            t = float(rng.uniform(0.0, proc.interval_hours))  # per-user phase
        while t <= window_hours:
            times.append(t)
            t += proc.interval_hours
    else:
        t = float(rng.exponential(1.0 / proc.rate_per_hour))
        while t <= window_hours:
            times.append(t)
            t += float(rng.exponential(1.0 / proc.rate_per_hour))
    return times


@dataclass(frozen=True, eq=False)
class UserEndState:
    """A user's state at the end of the window, input for decision-time scoring."""

    user_id: str
    features: Mapping[str, float]
    badge_count: int
    w0_hours: float


@dataclass(frozen=True, eq=False)
class SimResult:
    events: list[Event]
    contexts: list[UserEndState]
    truth: dict = field(default_factory=dict)


def generate_event_log(cfg: SimConfig) -> SimResult:
    """Simulate all users and return events, end-of-window contexts, truth.

    Per user: profile features are standard normal; sends follow the
    configured process; after each send the badge goes up by one and a
    visit time is drawn from the post-send law.  The visit is emitted only
    if it precedes both the next send and the window end; a visit resets
    the badge to zero.  Draw order per user is fixed (profile, schedule,
    then visit draws in send order) so streams are reproducible.
    """
    schema = default_sim_schema(cfg)
    b = np.asarray(cfg.true_coefficients, dtype=float)
    uid_width = max(6, len(str(cfg.n_users - 1)))

    events: list[Event] = []
    contexts: list[UserEndState] = []
    n_sends = n_visits = n_resolved = n_censored = 0
    expected_censored = 0.0

    for uid in range(cfg.n_users):
        rng = np.random.default_rng([cfg.seed, uid])
        user_id = f"u{uid:0{uid_width}d}"
        profile = {
            f"profile_{j}": float(v)
            for j, v in enumerate(rng.normal(size=cfg.n_profile_features))
        }
        sends = _send_times(cfg.send_process, cfg.window_hours, rng)

        badge = 0
        last_state_change = 0.0
        for k, t_send in enumerate(sends):
            badge += 1
            events.append(
                Event(user_id, t_send, SEND, badge_count=badge, features=profile)
            )
            n_sends += 1
            last_state_change = t_send
            x = schema.materialize(profile, badge_count=badge)
            t_visit_rel = sample_time_to_visit(x, b, cfg.true_sigma, rng)
            visit_at = t_send + t_visit_rel
            t_next = sends[k + 1] if k + 1 < len(sends) else None

            if t_next is not None:
                n_resolved += 1
                gap = t_next - t_send
                params = WeibullParams(
                    rate=math.exp(-float(x @ b) / cfg.true_sigma),
                    shape=1.0 / cfg.true_sigma,
                )
                expected_censored += weibull_sf(gap, params)
                if visit_at >= t_next:
                    n_censored += 1

            materializes = visit_at <= cfg.window_hours and (
                t_next is None or visit_at < t_next
            )
            if materializes:
                events.append(Event(user_id, visit_at, VISIT))
                n_visits += 1
                badge = 0
                last_state_change = visit_at

        contexts.append(
            UserEndState(
                user_id=user_id,
                features=profile,
                badge_count=badge,
                w0_hours=cfg.window_hours - last_state_change,
            )
        )

    truth = {
        "true_coefficients": dict(zip(schema.names, (float(v) for v in b))),
        "true_sigma": cfg.true_sigma,
        "seed": cfg.seed,
        "schema": schema.to_dict(),
        "n_users": cfg.n_users,
        "window_hours": cfg.window_hours,
        "send_process": cfg.send_process.to_dict(),
        "stats": {
            "n_sends": n_sends,
            "n_visits": n_visits,
            "n_resolved": n_resolved,
            "n_censored": n_censored,
            "censored_fraction": (n_censored / n_resolved) if n_resolved else None,
            "expected_censored_fraction": (
                expected_censored / n_resolved if n_resolved else None
            ),
        },
    }
    return SimResult(events=events, contexts=contexts, truth=truth)
