#!/usr/bin/env python3
"""
Damage detector built on the autoencoder reconstruction error.

A vector is Damaged when its reconstruction MSE is strictly above mu + sigma of
the healthy training errors. Evaluation pools every damaged case with the
held-out baseline test set and reports accuracy / F1 per case, plus the error
distributions used to track the growth of the error with damage size.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import spearmanr
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score

from autoencoder import DenseAutoencoder, forward, reconstruction_mse
from errors import EmptyCase, InvalidArgument, TooFewSamples
from features import FeatureScaler

logger = logging.getLogger(__name__)

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class Prediction(str, Enum):
    HEALTHY = "Healthy"
    DAMAGED = "Damaged"


@dataclass(frozen=True)
class ThresholdFit:
    mean: float
    std: float
    threshold: float


@dataclass(eq=False)
class AnomalyDetector:
    model: DenseAutoencoder
    scaler: FeatureScaler
    threshold: float
    train_error_mean: float
    train_error_std: float


@dataclass(frozen=True)
class Classification:
    prediction: Prediction
    error: float


def fit_threshold(train_errors: Sequence[float]) -> ThresholdFit:
    """mu + sigma of healthy training errors, sigma the population std."""
    errors = np.asarray(train_errors, dtype=np.float64).ravel()
    if len(errors) < 2:
        raise TooFewSamples(f"need at least 2 training errors, got {len(errors)}")
    if np.any(errors < 0) or not np.all(np.isfinite(errors)):
        raise InvalidArgument("training errors must be finite and >= 0")
    mu = float(np.mean(errors))
    sigma = float(np.std(errors))
    return ThresholdFit(mu, sigma, mu + sigma)


def reconstruction_errors(model: DenseAutoencoder, scaled) -> np.ndarray:
    scaled = np.atleast_2d(np.asarray(scaled, dtype=np.float64))
    return np.atleast_1d(reconstruction_mse(scaled, forward(model, scaled)))


def build_detector(model: DenseAutoencoder, scaler: FeatureScaler, train_scaled) -> AnomalyDetector:
    """Detector whose threshold comes from the model's errors on its training set."""
    fit = fit_threshold(reconstruction_errors(model, train_scaled))
    logger.info("[EVAL] threshold mu=%.6g sigma=%.6g -> %.6g", fit.mean, fit.std, fit.threshold)
    return AnomalyDetector(model, scaler, fit.threshold, fit.mean, fit.std)


def decide(detector: AnomalyDetector, error: float) -> Prediction:
    # error == threshold stays Healthy
    return Prediction.DAMAGED if error > detector.threshold else Prediction.HEALTHY


def classify(detector: AnomalyDetector, feature_vector) -> Classification:
    """Classify one vector already scaled with detector.scaler."""
    error = float(reconstruction_errors(detector.model, feature_vector)[0])
    return Classification(decide(detector, error), error)


def classify_raw(detector: AnomalyDetector, raw_features) -> Classification:
    return classify(detector, detector.scaler.transform(raw_features))


@dataclass
class ErrorSummary:
    count: int
    mean: float
    std: float
    min: float
    max: float
    quantiles: Dict[str, float]

    @classmethod
    def of(cls, errors: np.ndarray) -> "ErrorSummary":
        q = np.quantile(errors, QUANTILES)
        return cls(
            count=int(len(errors)),
            mean=float(np.mean(errors)),
            std=float(np.std(errors)),
            min=float(np.min(errors)),
            max=float(np.max(errors)),
            quantiles={f"q{int(p * 100):02d}": float(v) for p, v in zip(QUANTILES, q)},
        )

    @property
    def median(self) -> float:
        return self.quantiles["q50"]


@dataclass
class CaseMetrics:
    case: str
    condition: str
    size_mm: float
    accuracy: float  # percent
    f1: float  # percent
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class SizeTrend:
    sizes: List[float]
    medians: List[float]
    strictly_increasing: bool
    spearman: Optional[float]


@dataclass
class EvalCase:
    name: str
    condition: str
    size_mm: float
    features: np.ndarray  # scaled
    record_ids: List[str] = field(default_factory=list)


@dataclass
class EvalReport:
    threshold: float
    train_error_mean: float
    train_error_std: float
    cases: List[CaseMetrics]
    distributions: Dict[str, ErrorSummary]
    size_trends: Dict[str, SizeTrend]
    errors: Dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict:
        def clean(value):
            if isinstance(value, float) and not math.isfinite(value):
                return None
            if isinstance(value, dict):
                return {k: clean(v) for k, v in value.items()}
            if isinstance(value, list):
                return [clean(v) for v in value]
            return value

        return clean({
            "threshold": self.threshold,
            "train_error_mean": self.train_error_mean,
            "train_error_std": self.train_error_std,
            "cases": [asdict(c) for c in self.cases],
            "distributions": {k: asdict(v) for k, v in self.distributions.items()},
            "size_trends": {k: asdict(v) for k, v in self.size_trends.items()},
        })

    def case(self, name: str) -> CaseMetrics:
        return next(c for c in self.cases if c.case == name)


def _metrics(name: str, condition: str, size: float, y_true: np.ndarray, y_pred: np.ndarray,
             positive: int = 1) -> CaseMetrics:
    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[0, 1]).ravel()
    accuracy = 100.0 * accuracy_score(y_true, y_pred)
    f1 = 100.0 * f1_score(y_true, y_pred, pos_label=positive, zero_division=0)
    return CaseMetrics(name, condition, float(size), round(float(accuracy), 2), round(float(f1), 2),
                       int(tp), int(fp), int(tn), int(fn))


def size_trend(errors_by_size: Dict[float, np.ndarray]) -> SizeTrend:
    """Median error per damage size, strict monotonicity and rank correlation."""
    sizes = sorted(errors_by_size)
    medians = [float(np.median(errors_by_size[s])) for s in sizes]
    increasing = all(b > a for a, b in zip(medians, medians[1:]))
    rho = None
    if len(sizes) >= 2:
        labels = np.concatenate([np.full(len(errors_by_size[s]), s) for s in sizes])
        pooled = np.concatenate([errors_by_size[s] for s in sizes])
        value = spearmanr(labels, pooled)[0]
        rho = None if not np.isfinite(value) else float(value)
    return SizeTrend([float(s) for s in sizes], medians, increasing, rho)


def evaluate(detector: AnomalyDetector, cases: Sequence[EvalCase], negative_pool: str = "Test Baseline") -> EvalReport:
    """
    Per-case accuracy / F1 and error distributions.

    Baseline cases are scored on their own with Healthy as the positive class.
    Every damaged case is pooled with the `negative_pool` baseline case to form
    a binary task with Damaged as the positive class.
    """
    errors: Dict[str, np.ndarray] = {}
    for case in cases:
        if len(case.features) == 0:
            raise EmptyCase(f"case {case.name!r} has no vectors")
        errors[case.name] = reconstruction_errors(detector.model, case.features)
    if negative_pool not in errors:
        raise EmptyCase(f"no baseline case named {negative_pool!r} to pool damaged cases with")

    def predicted(name: str) -> np.ndarray:
        return (errors[name] > detector.threshold).astype(int)

    negatives = predicted(negative_pool)
    metrics = []
    by_kind: Dict[str, Dict[float, np.ndarray]] = {}
    for case in cases:
        pred = predicted(case.name)
        if case.condition == "Baseline":
            truth = np.zeros(len(pred), dtype=int)
            metrics.append(_metrics(case.name, case.condition, case.size_mm, truth, pred, positive=0))
            continue
        truth = np.concatenate([np.ones(len(pred), dtype=int), np.zeros(len(negatives), dtype=int)])
        metrics.append(_metrics(case.name, case.condition, case.size_mm, truth, np.concatenate([pred, negatives])))
        by_kind.setdefault(case.condition, {})[case.size_mm] = errors[case.name]

    for m in metrics:
        logger.info("[EVAL] %-20s accuracy %6.2f%%  F1 %6.2f%%", m.case, m.accuracy, m.f1)

    return EvalReport(
        threshold=detector.threshold,
        train_error_mean=detector.train_error_mean,
        train_error_std=detector.train_error_std,
        cases=metrics,
        distributions={name: ErrorSummary.of(e) for name, e in errors.items()},
        size_trends={kind: size_trend(sizes) for kind, sizes in by_kind.items()},
        errors=errors,
    )


def save_error_histogram(report: EvalReport, path: str, bins: int = 60) -> None:
    """SVG histogram of reconstruction error per case with the threshold marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 4.5))
    upper = max(float(np.quantile(e, 0.99)) for e in report.errors.values())
    edges = np.linspace(0.0, max(upper, report.threshold) * 1.1, bins + 1)
    for name, errs in report.errors.items():
        ax.hist(np.clip(errs, 0, edges[-1]), bins=edges, alpha=0.5, label=name)
    ax.axvline(report.threshold, color="black", linestyle="--", label="mu + sigma")
    ax.set_xlabel("reconstruction error (MSE)")
    ax.set_ylabel("count")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
