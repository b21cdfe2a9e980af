import json

import numpy as np
import pytest

from autoencoder import Activation, DenseAutoencoder, LayerSpec
from detector import (AnomalyDetector, EvalCase, Prediction, build_detector, classify, classify_raw, decide,
                      evaluate, fit_threshold, reconstruction_errors, save_error_histogram, size_trend)
from errors import EmptyCase, InvalidArgument, TooFewSamples
from features import FeatureScaler


def zero_model() -> DenseAutoencoder:
    """Reconstructs everything as zeros, so error = mean(x^2)."""
    return DenseAutoencoder([LayerSpec(16, activation=Activation.LINEAR)], [np.zeros((16, 16))], [np.zeros(16)])


def zero_detector(threshold: float) -> AnomalyDetector:
    scaler = FeatureScaler(np.full(16, -1.0), np.full(16, 1.0))
    return AnomalyDetector(zero_model(), scaler, threshold, threshold, 0.0)


def test_fit_threshold_hand_values():
    fit = fit_threshold([1.0, 1.0, 1.0])
    assert (fit.mean, fit.std, fit.threshold) == (1.0, 0.0, 1.0)
    fit = fit_threshold([0.0, 2.0])
    assert (fit.mean, fit.std, fit.threshold) == (1.0, 1.0, 2.0)


def test_fit_threshold_matches_mean_plus_population_std(rng):
    for _ in range(50):
        errors = rng.gamma(2.0, 0.01, size=int(rng.integers(2, 500)))
        fit = fit_threshold(errors)
        assert abs(fit.threshold - (np.mean(errors) + np.std(errors))) < 1e-12


def test_fit_threshold_input_checks():
    with pytest.raises(TooFewSamples):
        fit_threshold([0.5])
    with pytest.raises(InvalidArgument):
        fit_threshold([0.5, -0.1])


def test_boundary_error_is_healthy():
    detector = zero_detector(threshold=0.25)
    assert decide(detector, 0.25) is Prediction.HEALTHY
    assert decide(detector, np.nextafter(0.25, 1.0)) is Prediction.DAMAGED

    vector = np.full(16, 0.5)  # error exactly 0.25
    result = classify(detector, vector)
    assert result.error == 0.25
    assert result.prediction is Prediction.HEALTHY


def test_decision_is_monotone_in_error(rng):
    detector = zero_detector(threshold=0.3)
    errors = np.sort(rng.uniform(0, 1, 200))
    damaged = [decide(detector, e) is Prediction.DAMAGED for e in errors]
    first = damaged.index(True)
    assert all(damaged[first:]) and not any(damaged[:first])


def test_classify_raw_applies_the_scaler():
    detector = AnomalyDetector(zero_model(), FeatureScaler(np.zeros(16), np.full(16, 4.0)), 0.5, 0.5, 0.0)
    result = classify_raw(detector, np.full(16, 4.0))  # scales to 1.0
    assert result.error == pytest.approx(1.0)
    assert result.prediction is Prediction.DAMAGED


def test_build_detector_uses_training_errors(rng):
    train_scaled = rng.uniform(-1, 1, size=(40, 16))
    detector = build_detector(zero_model(), zero_detector(0.0).scaler, train_scaled)
    errors = np.mean(train_scaled ** 2, axis=1)
    assert detector.train_error_mean == pytest.approx(np.mean(errors))
    assert detector.threshold == pytest.approx(np.mean(errors) + np.std(errors))


def _cases(n_base=30, n_damaged=20):
    return [
        EvalCase("Test Baseline", "Baseline", 0.0, np.zeros((n_base, 16))),
        EvalCase("TRF 20mm", "TRF", 20.0, np.full((n_damaged, 16), 2.0)),
        EvalCase("LFA 20mm", "LFA", 20.0, np.full((n_damaged, 16), 3.0)),
    ]


def test_perfect_detector_scores_100():
    report = evaluate(zero_detector(threshold=1.0), _cases())
    for case in report.cases:
        assert case.accuracy == 100.0
        assert case.f1 == 100.0
    trf = report.case("TRF 20mm")
    assert (trf.tp, trf.fp, trf.tn, trf.fn) == (20, 0, 30, 0)
    base = report.case("Test Baseline")
    assert (base.tp, base.fp, base.tn, base.fn) == (0, 0, 30, 0)


def test_always_healthy_detector_has_zero_f1():
    report = evaluate(zero_detector(threshold=100.0), _cases(n_base=30, n_damaged=20))
    trf = report.case("TRF 20mm")
    assert trf.f1 == 0.0
    assert trf.accuracy == pytest.approx(60.0)
    assert report.case("Test Baseline").accuracy == 100.0


def test_reported_metrics_match_counts(rng):
    cases = [
        EvalCase("Test Baseline", "Baseline", 0.0, rng.normal(0, 0.5, size=(57, 16))),
        EvalCase("TRF 10mm", "TRF", 10.0, rng.normal(0, 0.8, size=(41, 16))),
    ]
    report = evaluate(zero_detector(threshold=0.3), cases)
    for c in report.cases:
        total = c.tp + c.tn + c.fp + c.fn
        assert abs(100.0 * (c.tp + c.tn) / total - c.accuracy) <= 0.5
    trf = report.case("TRF 10mm")
    precision = trf.tp / (trf.tp + trf.fp)
    recall = trf.tp / (trf.tp + trf.fn)
    assert abs(100.0 * 2 * precision * recall / (precision + recall) - trf.f1) <= 0.5


def test_baseline_only_report_has_one_case():
    report = evaluate(zero_detector(threshold=1.0), _cases()[:1])
    assert [c.case for c in report.cases] == ["Test Baseline"]
    assert report.size_trends == {}


def test_empty_case_and_missing_pool():
    cases = _cases()
    cases[1] = EvalCase("TRF 20mm", "TRF", 20.0, np.zeros((0, 16)))
    with pytest.raises(EmptyCase):
        evaluate(zero_detector(1.0), cases)
    with pytest.raises(EmptyCase):
        evaluate(zero_detector(1.0), _cases()[1:])


def test_size_trend_medians_and_rank_correlation():
    trend = size_trend({10.0: np.array([2.0, 3.0, 4.0]), 5.0: np.array([1.0, 2.0, 3.0]),
                        20.0: np.array([5.0, 6.0, 7.0])})
    assert trend.sizes == [5.0, 10.0, 20.0]
    assert trend.medians == [2.0, 3.0, 6.0]
    assert trend.strictly_increasing
    assert trend.spearman > 0.8

    flat = size_trend({5.0: np.array([1.0, 2.0]), 10.0: np.array([1.0, 2.0])})
    assert not flat.strictly_increasing


def test_report_serializes_and_plots(tmp_path):
    cases = _cases()
    cases.append(EvalCase("TRF 5mm", "TRF", 5.0, np.full((5, 16), 1.5)))
    report = evaluate(zero_detector(threshold=1.0), cases)
    data = json.loads(json.dumps(report.to_dict()))

    assert data["size_trends"]["TRF"]["sizes"] == [5.0, 20.0]
    assert data["distributions"]["LFA 20mm"]["quantiles"]["q50"] == pytest.approx(9.0)
    assert {c["case"] for c in data["cases"]} == {"Test Baseline", "TRF 20mm", "LFA 20mm", "TRF 5mm"}

    svg = tmp_path / "errors.svg"
    save_error_histogram(report, str(svg))
    assert svg.read_text().lstrip().startswith("<?xml")


def test_reconstruction_errors_shape():
    errors = reconstruction_errors(zero_model(), np.ones(16))
    assert errors.shape == (1,)
    assert errors[0] == 1.0
