"""Maximum-likelihood trainers: censored Weibull AFT and logistic baseline.

The AFT objective is the exact censored log-likelihood of the log-linear
model  log T = b.x + sigma*eps  with standard extreme-value errors; the
scale is optimized as log(sigma) so the problem stays unconstrained.
Features are standardized internally (train statistics only) and the
coefficients folded back, so persisted models are in raw feature space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .errors import DataError, NumericalError, SchemaError
from .features import FeatureSchema
from .optimize import OptConfig, OptResult, minimize_smooth
from .pipeline import Observation
from .survival import WeibullParams

__all__ = [
    "DesignMatrix",
    "WeibullAftModel",
    "LogisticModel",
    "aft_negloglik_and_gradient",
    "logistic_negloglik_and_gradient",
    "fit_aft",
    "fit_logistic",
    "model_to_dict",
    "model_from_dict",
]

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Columnar view of observations, validated once."""

    X: np.ndarray  # (n, k)
    log_t: np.ndarray  # (n,)
    delta: np.ndarray  # (n,) float 0/1, 1 = uncensored

    @classmethod
    def from_observations(cls, observations: Sequence[Observation]) -> "DesignMatrix":
        if len(observations) == 0:
            raise DataError("no observations to train on")
        X = np.stack([o.x for o in observations]).astype(float)
        t = np.array([o.t_hours for o in observations], dtype=float)
        delta = np.array([1.0 if o.uncensored else 0.0 for o in observations])
        if not np.all(np.isfinite(X)):
            i = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
            raise DataError(f"non-finite feature value at observation index {i}")
        if not np.all((t > 0) & np.isfinite(t)):
            i = int(np.flatnonzero(~((t > 0) & np.isfinite(t)))[0])
            raise DataError(
                f"non-positive or non-finite duration at observation index {i}"
            )
        return cls(X=X, log_t=np.log(t), delta=delta)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


def _as_design(data) -> DesignMatrix:
    if isinstance(data, DesignMatrix):
        return data
    return DesignMatrix.from_observations(list(data))


# -- objectives ----------------------------------------------------------------


def aft_negloglik_and_gradient(
    b: np.ndarray, log_sigma: float, data
) -> tuple[float, np.ndarray]:
    """Exact censored-Weibull negative log-likelihood and its gradient.

    With z_i = (log T_i - b.x_i)/sigma, an uncensored observation
    contributes e^{z_i} - z_i + log(sigma) + log(T_i) and a censored one
    contributes e^{z_i}.  The returned gradient vector is
    [d/db_1 .. d/db_k, d/d log_sigma].
    """
    dm = _as_design(data)
    b = np.asarray(b, dtype=float)
    if b.shape != (dm.k,):
        raise DataError(f"coefficient vector has shape {b.shape}, expected ({dm.k},)")
    sigma = math.exp(float(log_sigma))
    z = (dm.log_t - dm.X @ b) / sigma
    with np.errstate(over="ignore"):
        ez = np.exp(z)
    per_obs = ez - dm.delta * (z - math.log(sigma) - dm.log_t)
    bad = ~np.isfinite(per_obs)
    if bad.any():
        raise NumericalError(
            f"non-finite likelihood term at observation index {int(np.flatnonzero(bad)[0])}"
        )
    nll = float(np.sum(per_obs))
    grad_b = dm.X.T @ (dm.delta - ez) / sigma
    grad_ls = float(np.sum(dm.delta * (1.0 + z) - z * ez))
    return nll, np.concatenate([grad_b, [grad_ls]])


def logistic_negloglik_and_gradient(
    w: np.ndarray, X: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Bernoulli negative log-likelihood log(1+e^m) - y*m and its gradient."""
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    m = X @ w
    per_obs = np.logaddexp(0.0, m) - y * m
    if not np.all(np.isfinite(per_obs)):
        raise NumericalError(
            f"non-finite likelihood term at instance index "
            f"{int(np.flatnonzero(~np.isfinite(per_obs))[0])}"
        )
    nll = float(np.sum(per_obs))
    grad = X.T @ (expit(m) - y)
    return nll, grad


# -- standardization -------------------------------------------------------------


def _standardize(X: np.ndarray, intercept_index: int | None):
    """Column means/scales computed on the given (training) matrix.

    The intercept column and any zero-variance column are left untouched
    (mean 0, scale 1) so the fold-back is well defined.
    """
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    fixed = scales < 1e-12
    if intercept_index is not None:
        fixed = fixed.copy()
        fixed[intercept_index] = True
    means = np.where(fixed, 0.0, means)
    scales = np.where(fixed, 1.0, scales)
    return (X - means) / scales, means, scales


def _fold_back(b_std: np.ndarray, means, scales, intercept_index: int | None):
    """Convert standardized-space coefficients to raw feature space."""
    b_raw = b_std / scales
    if intercept_index is not None:
        shift = float(np.sum(b_std * means / scales))
        b_raw = b_raw.copy()
        b_raw[intercept_index] = b_std[intercept_index] - shift
    return b_raw


def _find_intercept(X: np.ndarray, schema: FeatureSchema | None) -> int | None:
    if schema is not None:
        idx = schema.indices_of_kind("intercept")
        return idx[0] if idx else None
    for j in range(X.shape[1]):
        if np.all(X[:, j] == 1.0):
            return j
    return None


# -- models ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeibullAftModel:
    feature_names: tuple[str, ...]
    coefficients: np.ndarray  # raw feature space
    log_sigma: float
    diagnostics: Mapping[str, object] = field(default_factory=dict)
    schema: FeatureSchema | None = None
    standardization: Mapping[str, tuple[float, ...]] | None = None

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    @property
    def alpha(self) -> float:
        """Weibull shape implied by the AFT scale: alpha = 1/sigma."""
        return 1.0 / self.sigma

    def coefficient(self, name: str) -> float:
        try:
            return float(self.coefficients[self.feature_names.index(name)])
        except ValueError:
            raise SchemaError(f"model has no coefficient named {name!r}") from None

    def linear_predictor(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.coefficients

    def rate_of(self, x: np.ndarray) -> float:
        """Weibull rate for one feature vector: exp(-(b.x)/sigma)."""
        mu = float(np.asarray(x, dtype=float) @ self.coefficients)
        if not math.isfinite(mu):
            raise NumericalError(f"non-finite linear predictor {mu}")
        return math.exp(-mu / self.sigma)

    def weibull_of(self, x: np.ndarray) -> WeibullParams:
        return WeibullParams(rate=self.rate_of(x), shape=self.alpha)


@dataclass(frozen=True, eq=False)
class LogisticModel:
    feature_names: tuple[str, ...]
    weights: np.ndarray
    horizon_t_hours: float
    diagnostics: Mapping[str, object] = field(default_factory=dict)
    schema: FeatureSchema | None = None
    standardization: Mapping[str, tuple[float, ...]] | None = None

    def __post_init__(self) -> None:
        if not self.horizon_t_hours > 0:
            raise DataError(f"horizon must be > 0, got {self.horizon_t_hours}")

    def predict_logit(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.weights

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return expit(self.predict_logit(X))


# -- fitting -------------------------------------------------------------------


def _ridge_mask(k: int, intercept_index: int | None) -> np.ndarray:
    mask = np.ones(k, dtype=float)
    if intercept_index is not None:
        mask[intercept_index] = 0.0
    return mask


def fit_aft(
    data,
    opt_cfg: OptConfig = OptConfig(),
    *,
    schema: FeatureSchema | None = None,
    feature_names: Sequence[str] | None = None,
) -> WeibullAftModel:
    """Fit the censored Weibull AFT model by penalized maximum likelihood.

    Requires at least one uncensored observation (the scale is otherwise
    unidentifiable).  The ridge penalty applies to standardized
    non-intercept coefficients; the reported negloglik excludes it.
    """
    dm = _as_design(data)
    n_unc = int(dm.delta.sum())
    if n_unc == 0:
        raise DataError(
            "all observations are censored; sigma is unidentifiable"
        )
    if schema is not None and len(schema) != dm.k:
        raise SchemaError(
            f"schema has {len(schema)} slots but observations have {dm.k} features"
        )
    icpt = _find_intercept(dm.X, schema)
    X_std, means, scales = _standardize(dm.X, icpt)
    dm_std = DesignMatrix(X=X_std, log_t=dm.log_t, delta=dm.delta)
    mask = _ridge_mask(dm.k, icpt)

    theta0 = np.zeros(dm.k + 1)
    if icpt is not None:
        theta0[icpt] = float(np.mean(dm.log_t[dm.delta == 1.0]))

    # The optimizer sees the per-observation mean so the gradient tolerance
    # is scale-invariant in n; the public objective stays a sum.
    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        b_std, log_sigma = theta[:-1], float(theta[-1])
        nll, grad = aft_negloglik_and_gradient(b_std, log_sigma, dm_std)
        nll += 0.5 * opt_cfg.ridge * float(np.sum(mask * b_std**2))
        grad = grad.copy()
        grad[:-1] += opt_cfg.ridge * mask * b_std
        return nll / dm.n, grad / dm.n

    result = minimize_smooth(objective, theta0, opt_cfg)
    b_std, log_sigma = result.x[:-1], float(result.x[-1])
    b_raw = _fold_back(b_std, means, scales, icpt)
    data_nll, _ = aft_negloglik_and_gradient(b_std, log_sigma, dm_std)

    names = _names(feature_names, schema, dm.k)
    return WeibullAftModel(
        feature_names=names,
        coefficients=b_raw,
        log_sigma=log_sigma,
        diagnostics=_diagnostics(result, data_nll, opt_cfg, dm.n, n_unc),
        schema=schema,
        standardization={"means": tuple(means), "scales": tuple(scales)},
    )


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    horizon_t_hours: float,
    opt_cfg: OptConfig = OptConfig(),
    *,
    schema: FeatureSchema | None = None,
    feature_names: Sequence[str] | None = None,
) -> LogisticModel:
    """Fit the per-horizon logistic baseline on pre-computed binary labels.

    Training labels come from the evaluation layer's per-send labeler (a
    visit within the horizon of the send); this function only sees the
    materialized 0/1 vector.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError(f"shape mismatch: X {X.shape} vs y {y.shape}")
    if X.shape[0] == 0:
        raise DataError("no instances to train on")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature values in the design matrix")
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise DataError(f"labels must be 0/1, got values {classes}")
    if classes.size < 2:
        raise DataError(
            f"single-class labels (all {int(classes[0])}); cannot fit logistic model"
        )
    if schema is not None and len(schema) != X.shape[1]:
        raise SchemaError(
            f"schema has {len(schema)} slots but instances have {X.shape[1]} features"
        )
    icpt = _find_intercept(X, schema)
    X_std, means, scales = _standardize(X, icpt)
    mask = _ridge_mask(X.shape[1], icpt)

    w0 = np.zeros(X.shape[1])
    if icpt is not None:
        base = float(np.mean(y))
        w0[icpt] = math.log(base / (1.0 - base))

    n = X.shape[0]

    def objective(w: np.ndarray) -> tuple[float, np.ndarray]:
        nll, grad = logistic_negloglik_and_gradient(w, X_std, y)
        nll += 0.5 * opt_cfg.ridge * float(np.sum(mask * w**2))
        return nll / n, (grad + opt_cfg.ridge * mask * w) / n

    result = minimize_smooth(objective, w0, opt_cfg)
    w_raw = _fold_back(result.x, means, scales, icpt)
    data_nll, _ = logistic_negloglik_and_gradient(result.x, X_std, y)

    names = _names(feature_names, schema, X.shape[1])
    return LogisticModel(
        feature_names=names,
        weights=w_raw,
        horizon_t_hours=float(horizon_t_hours),
        diagnostics=_diagnostics(result, data_nll, opt_cfg, X.shape[0], int(y.sum())),
        schema=schema,
        standardization={"means": tuple(means), "scales": tuple(scales)},
    )


def _names(
    feature_names: Sequence[str] | None, schema: FeatureSchema | None, k: int
) -> tuple[str, ...]:
    if feature_names is not None:
        names = tuple(feature_names)
        if len(names) != k:
            raise SchemaError(f"{len(names)} names for {k} features")
        return names
    if schema is not None:
        return schema.names
    return tuple(f"x{j}" for j in range(k))


def _diagnostics(
    result: OptResult, data_nll: float, cfg: OptConfig, n: int, n_positive: int
) -> dict:
    return {
        "negloglik": data_nll,
        "grad_max_norm": result.grad_max_norm,
        "n_iters": result.n_iters,
        "converged": result.converged,
        "nll_trace": list(result.fun_trace),
        "method": cfg.method,
        "ridge": cfg.ridge,
        "n_obs": n,
        "n_events": n_positive,
    }


# -- persistence ------------------------------------------------------------------


def model_to_dict(model: WeibullAftModel | LogisticModel) -> dict:
    common = {
        "format_version": MODEL_FORMAT_VERSION,
        "coefficients": {
            name: float(v)
            for name, v in zip(
                model.feature_names,
                model.coefficients
                if isinstance(model, WeibullAftModel)
                else model.weights,
            )
        },
        "feature_order": list(model.feature_names),
        "diagnostics": dict(model.diagnostics),
        "schema": model.schema.to_dict() if model.schema is not None else None,
        "standardization": (
            {k: list(v) for k, v in model.standardization.items()}
            if model.standardization
            else None
        ),
    }
    if isinstance(model, WeibullAftModel):
        return {"model_type": "weibull_aft", "log_sigma": model.log_sigma, **common}
    return {
        "model_type": "logistic",
        "horizon_t_hours": model.horizon_t_hours,
        **common,
    }


def model_from_dict(d: Mapping) -> WeibullAftModel | LogisticModel:
    try:
        kind = d["model_type"]
        version = d["format_version"]
        names = tuple(d["feature_order"])
        coefs = np.array([float(d["coefficients"][n]) for n in names])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model document: {exc}") from exc
    if version != MODEL_FORMAT_VERSION:
        raise DataError(
            f"unsupported model format_version {version!r} "
            f"(this build reads {MODEL_FORMAT_VERSION})"
        )
    schema = (
        FeatureSchema.from_dict(d["schema"]) if d.get("schema") is not None else None
    )
    std = (
        {k: tuple(v) for k, v in d["standardization"].items()}
        if d.get("standardization")
        else None
    )
    diagnostics = dict(d.get("diagnostics") or {})
    if kind == "weibull_aft":
        return WeibullAftModel(
            feature_names=names,
            coefficients=coefs,
            log_sigma=float(d["log_sigma"]),
            diagnostics=diagnostics,
            schema=schema,
            standardization=std,
        )
    if kind == "logistic":
        return LogisticModel(
            feature_names=names,
            weights=coefs,
            horizon_t_hours=float(d["horizon_t_hours"]),
            diagnostics=diagnostics,
            schema=schema,
            standardization=std,
        )
    raise DataError(f"unknown model_type {kind!r}")
