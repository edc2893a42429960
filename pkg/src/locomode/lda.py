"""Linear discriminant analysis with a shrunk pooled covariance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .corpus import TaskCategory
from .errors import DimensionMismatch, InsufficientSamples, ModelFormatError, SingularCovariance

DEFAULT_SHRINKAGE = 1e-6
ABSENT_SCORE = -np.inf
LDA_HEADER = "LOCOMODE-LDA v1"
CATEGORIES = tuple(TaskCategory)


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Fitted discriminant parameters.

    Rows of ``means`` and entries of ``priors`` follow ``categories``; a
    category absent from training has prior 0 and a zero mean row.
    """

    means: np.ndarray
    pooled_covariance: np.ndarray
    priors: np.ndarray
    shrinkage: float = DEFAULT_SHRINKAGE
    categories: tuple = CATEGORIES
    _coef: np.ndarray = field(init=False, repr=False)
    _intercept: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cov = np.asarray(self.pooled_covariance, dtype=np.float64)
        means = np.asarray(self.means, dtype=np.float64)
        try:
            factor = linalg.cho_factor(cov, lower=True, check_finite=True)
        except linalg.LinAlgError as exc:
            raise SingularCovariance(f"pooled covariance is not positive definite: {exc}") from None
        coef = linalg.cho_solve(factor, means.T)  # D x K, columns = inv(cov) @ mean_k
        with np.errstate(divide="ignore"):
            log_prior = np.log(self.priors)
        intercept = -0.5 * np.einsum("dk,kd->k", coef, means) + log_prior
        intercept[np.asarray(self.priors) <= 0] = ABSENT_SCORE
        object.__setattr__(self, "_coef", coef)
        object.__setattr__(self, "_intercept", intercept)

    @property
    def feature_dim(self) -> int:
        return self.means.shape[1]


def lda_fit(features, labels, shrinkage: float = DEFAULT_SHRINKAGE) -> LdaModel:
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    if X.ndim != 2:
        raise DimensionMismatch(f"features must be a 2-D array of equal-length vectors, got {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} feature vectors but {y.shape[0]} labels")
    if shrinkage < 0:
        raise ValueError(f"shrinkage must be >= 0, got {shrinkage}")
    n, d = X.shape
    k = len(CATEGORIES)
    means = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    scatter = np.zeros((d, d))
    for idx, cat in enumerate(CATEGORIES):
        members = X[y == int(cat)]
        counts[idx] = members.shape[0]
        if counts[idx] == 0:
            continue
        if counts[idx] < 2:
            raise InsufficientSamples(f"category {cat.name} has {counts[idx]} sample(s), need >= 2")
        means[idx] = members.mean(axis=0)
        centred = members - means[idx]
        scatter += centred.T @ centred
    present = int((counts > 0).sum())
    if present == 0:
        raise InsufficientSamples("no training samples")
    cov = scatter / (n - present)
    cov = 0.5 * (cov + cov.T)
    if shrinkage > 0:
        cov = cov + shrinkage * (np.trace(cov) / d) * np.eye(d)
    priors = counts / n
    return LdaModel(means=means, pooled_covariance=cov, priors=priors, shrinkage=float(shrinkage))


def lda_scores(model: LdaModel, x) -> np.ndarray:
    """Discriminant values, one per category (absent categories get -inf).

    Accepts a single vector or an ``(n, D)`` batch.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.feature_dim:
        raise DimensionMismatch(f"expected {model.feature_dim} features, got {x.shape[-1]}")
    return x @ model._coef + model._intercept


def lda_predict(model: LdaModel, x):
    """Argmax category; ``np.argmax`` returns the first maximum, giving canonical tie-breaks."""
    scores = lda_scores(model, x)
    if scores.ndim == 1:
        return TaskCategory(int(np.argmax(scores)))
    return np.argmax(scores, axis=1)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_lda(model: LdaModel, path) -> None:
    d = model.feature_dim
    lines = [
        LDA_HEADER,
        str(d),
        " ".join(c.name for c in model.categories),
        repr(float(model.shrinkage)),
        _fmt(model.priors),
    ]
    lines += [_fmt(row) for row in model.means]
    lines += [_fmt(row) for row in model.pooled_covariance]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_lda(path) -> LdaModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != LDA_HEADER:
        raise ModelFormatError(f"{path}: missing {LDA_HEADER!r} header")
    try:
        d = int(lines[1])
        names = lines[2].split()
        shrinkage = float(lines[3])
        priors = np.array(lines[4].split(), dtype=np.float64)
        k = len(names)
        means = np.array([row.split() for row in lines[5:5 + k]], dtype=np.float64)
        cov = np.array([row.split() for row in lines[5 + k:5 + k + d]], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed LDA model ({exc})") from None
    if tuple(names) != tuple(c.name for c in CATEGORIES) or means.shape != (k, d) or cov.shape != (d, d):
        raise ModelFormatError(f"{path}: inconsistent LDA model dimensions")
    return LdaModel(means=means, pooled_covariance=cov, priors=priors, shrinkage=shrinkage)
