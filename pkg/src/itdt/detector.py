"""Adversarial-example detector over the 44-feature vectors.

Backends are plain scikit-learn classifiers behind a thin contract: train with
stratified cross-validation on the cleaned feature matrix, select the
hyperparameter grid point with the best mean fold MCC, refit on everything,
and serve probability verdicts at a fixed 0.5 threshold. Logistic regression
is the reference backend; tree ensembles are optional plug-ins.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import GradientBoostingClassifier, RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import StratifiedKFold
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler
from sklearn.tree import DecisionTreeClassifier

from .errors import DegenerateLabels, FeatureSchemaMismatch
from .features import CleaningReport, FeatureVector, apply_cleaning, clean_feature_matrix, schema_hash

DETECTOR_FORMAT_VERSION = 1
DECISION_THRESHOLD = 0.5
EARLY_STOP_PATIENCE = 5

# Small fixed grids, evaluated in order with early stopping on stagnant MCC.
GRIDS: dict[str, list[dict]] = {
    "logistic-regression": [{"C": c} for c in (1.0, 0.1, 10.0, 100.0)],
    "decision-tree": [{"max_depth": d} for d in (3, 5, None)],
    "random-forest": [{"n_estimators": n, "max_depth": d}
                      for n in (100,) for d in (None, 5)],
    "gradient-boosted-trees": [{"n_estimators": n, "max_depth": d, "learning_rate": 0.1}
                               for n in (50, 100) for d in (2, 3)],
}


def _make_estimator(backend: str, grid_point: dict, seed: int):
    if backend == "logistic-regression":
        # feature magnitudes span orders of magnitude (relevance vs corpus
        # frequency), so the linear backend gets standardization built in
        return make_pipeline(StandardScaler(),
                             LogisticRegression(max_iter=2000, **grid_point))
    if backend == "decision-tree":
        return DecisionTreeClassifier(random_state=seed, **grid_point)
    if backend == "random-forest":
        return RandomForestClassifier(random_state=seed, **grid_point)
    if backend == "gradient-boosted-trees":
        return GradientBoostingClassifier(random_state=seed, **grid_point)
    raise ValueError(f"unknown backend {backend!r}")


# ------------------------------------------------------------------ metrics


@dataclass
class MetricsReport:
    mcc: float = 0.0
    acc: float = 0.0
    bal_acc: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    auc: float = 0.0
    fpr: float = 0.0
    fnr: float = 0.0
    auc_undefined: bool = False
    confusion: dict = field(default_factory=dict)  # tp/fp/tn/fn
    per_fold: list[dict] = field(default_factory=list)
    folds_used: int = 0
    folds_reduced: bool = False

    def to_dict(self) -> dict:
        return {
            "MCC": self.mcc, "ACC": self.acc, "BalACC": self.bal_acc,
            "Precision": self.precision, "Recall": self.recall, "F1": self.f1,
            "AUC": self.auc, "FPR": self.fpr, "FNR": self.fnr,
            "auc_undefined": self.auc_undefined, "confusion": self.confusion,
            "per_fold": self.per_fold, "folds_used": self.folds_used,
            "folds_reduced": self.folds_reduced,
        }


def compute_metrics(truth, predictions, scores=None) -> MetricsReport:
    """Confusion-matrix metrics; AUC by rank statistic over scores.

    Positive class is 1 (adversarial). With a single-class truth the AUC is
    flagged undefined and every other metric is still computed.
    """
    y = np.asarray(truth, dtype=int)
    p = np.asarray(predictions, dtype=int)
    if y.shape != p.shape:
        raise ValueError("truth and predictions must have equal length")
    tp = int(np.sum((y == 1) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    n = tp + tn + fp + fn

    report = MetricsReport(confusion={"tp": tp, "fp": fp, "tn": tn, "fn": fn})
    report.acc = (tp + tn) / n if n else 0.0
    tpr = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    report.bal_acc = (tpr + tnr) / 2.0
    report.precision = tp / (tp + fp) if tp + fp else 0.0
    report.recall = tpr
    report.f1 = (2 * report.precision * report.recall / (report.precision + report.recall)
                 if report.precision + report.recall else 0.0)
    report.fpr = fp / (fp + tn) if fp + tn else 0.0
    report.fnr = fn / (fn + tp) if fn + tp else 0.0
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    report.mcc = (tp * tn - fp * fn) / np.sqrt(denom) if denom else 0.0

    if scores is None or tp + fn == 0 or tn + fp == 0:
        report.auc_undefined = True
    else:
        report.auc = _rank_auc(y, np.asarray(scores, dtype=float))
    return report


def _rank_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """AUC as the normalized rank-sum of positive scores; ties get half credit."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i: j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    n_pos = int(np.sum(y == 1))
    n_neg = len(y) - n_pos
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# ------------------------------------------------------------------ training


@dataclass
class DetectorConfig:
    backend: str = "logistic-regression"
    folds: int = 10
    seed: int = 0


@dataclass
class Verdict:
    is_adversarial: bool
    adv_pcs: float
    feature_id: str = ""

    def to_dict(self) -> dict:
        return {"is_adversarial": self.is_adversarial, "adv_pcs": self.adv_pcs,
                "feature_id": self.feature_id}


class DetectorModel:
    def __init__(self, backend: str, estimator, schema: str,
                 cleaning: CleaningReport, cv_report: MetricsReport,
                 grid_point: dict, config: DetectorConfig):
        self.backend = backend
        self.estimator = estimator
        self.schema_hash = schema
        self.cleaning = cleaning
        self.cv_report = cv_report
        self.grid_point = grid_point
        self.config = config


def _combined_strata(labels: np.ndarray, tags: list[str] | None) -> np.ndarray:
    if tags is None:
        return labels.astype(str)
    return np.array([f"{lab}:{tag}" for lab, tag in zip(labels, tags)])


def train_detector(
    x,
    labels,
    feature_names: list[str],
    config: DetectorConfig | None = None,
    attack_tags: list[str] | None = None,
    cleaning: CleaningReport | None = None,
    raw_schema: str | None = None,
) -> tuple[DetectorModel, MetricsReport]:
    """Grid search over the backend's configurations by mean fold MCC.

    The fold split is stratified on label, and additionally on attack tag when
    tags are supplied, so attack-type proportions survive in every fold. Fold
    count drops below `config.folds` when the rarest class cannot fill the
    folds, and the report flags the reduction.
    """
    config = config or DetectorConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(labels, dtype=int)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise DegenerateLabels(f"detector training needs both classes, got {classes}")

    folds = min(config.folds, int(counts.min()))
    folds = max(folds, 2)
    reduced = folds < config.folds
    strata = _combined_strata(y, attack_tags)
    # strata thinner than the fold count fall back to plain label stratification
    _, strata_counts = np.unique(strata, return_counts=True)
    if strata_counts.min() < folds:
        strata = _combined_strata(y, None)

    best: tuple[float, dict, MetricsReport] | None = None
    stale = 0
    for grid_point in GRIDS[config.backend]:
        fold_reports: list[MetricsReport] = []
        oof_pred = np.zeros_like(y)
        oof_score = np.zeros(len(y), dtype=float)
        splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=config.seed)
        for train_idx, test_idx in splitter.split(x, strata):
            est = _make_estimator(config.backend, grid_point, config.seed)
            est.fit(x[train_idx], y[train_idx])
            prob = est.predict_proba(x[test_idx])[:, 1]
            pred = (prob >= DECISION_THRESHOLD).astype(int)
            oof_pred[test_idx] = pred
            oof_score[test_idx] = prob
            fold_reports.append(compute_metrics(y[test_idx], pred, prob))
        mean_mcc = float(np.mean([r.mcc for r in fold_reports]))
        if best is None or mean_mcc > best[0]:
            pooled = compute_metrics(y, oof_pred, oof_score)
            pooled.per_fold = [r.to_dict() for r in fold_reports]
            pooled.folds_used = folds
            pooled.folds_reduced = reduced
            best = (mean_mcc, grid_point, pooled)
            stale = 0
        else:
            stale += 1
            if stale >= EARLY_STOP_PATIENCE:
                break

    _, grid_point, report = best
    estimator = _make_estimator(config.backend, grid_point, config.seed)
    estimator.fit(x, y)
    model = DetectorModel(
        backend=config.backend,
        estimator=estimator,
        schema=raw_schema or schema_hash(tuple(feature_names)),
        cleaning=cleaning or CleaningReport(retained=list(feature_names)),
        cv_report=report,
        grid_point=grid_point,
        config=config,
    )
    return model, report


def train_detector_from_vectors(
    fvs: list[FeatureVector],
    config: DetectorConfig | None = None,
) -> tuple[DetectorModel, MetricsReport]:
    """Clean the stacked vectors, then train; labels come from the vectors."""
    if any(fv.class_label is None for fv in fvs):
        raise ValueError("all feature vectors need a class label for training")
    matrix = np.stack([fv.values for fv in fvs])
    names = fvs[0].names
    cleaned, retained, report = clean_feature_matrix(matrix, names=names)
    tags = [fv.attack_tag for fv in fvs] if any(fv.attack_tag for fv in fvs) else None
    return train_detector(
        cleaned,
        [fv.class_label for fv in fvs],
        retained,
        config=config,
        attack_tags=tags,
        cleaning=report,
        raw_schema=schema_hash(names),
    )


def detect(detector: DetectorModel, fv: FeatureVector) -> Verdict:
    """Deterministic verdict at the 0.5 threshold.

    The incoming vector must carry the raw schema the detector was trained
    from; training-time imputation and column selection are re-applied here.
    """
    if fv.schema_hash != detector.schema_hash:
        raise FeatureSchemaMismatch(
            f"feature schema {fv.schema_hash[:12]} does not match detector "
            f"{detector.schema_hash[:12]}"
        )
    vec = apply_cleaning(fv, detector.cleaning)
    prob = float(detector.estimator.predict_proba(vec.reshape(1, -1))[0, 1])
    return Verdict(is_adversarial=prob >= DECISION_THRESHOLD, adv_pcs=prob,
                   feature_id=fv.example_id)


def save_detector(model: DetectorModel, path: str) -> None:
    payload = {
        "format_version": DETECTOR_FORMAT_VERSION,
        "backend": model.backend,
        "schema_hash": model.schema_hash,
        "cleaning": model.cleaning.to_dict(),
        "cv_report": model.cv_report.to_dict(),
        "grid_point": model.grid_point,
        "config": {"backend": model.config.backend, "folds": model.config.folds,
                   "seed": model.config.seed},
        "estimator": pickle.dumps(model.estimator),
    }
    with open(path, "wb") as fh:
        pickle.dump(payload, fh)


def load_detector(path: str) -> DetectorModel:
    with open(path, "rb") as fh:
        payload = pickle.load(fh)
    if payload["format_version"] != DETECTOR_FORMAT_VERSION:
        raise ValueError(f"unsupported detector format {payload['format_version']}")
    report_data = payload["cv_report"]
    report = MetricsReport(
        mcc=report_data["MCC"], acc=report_data["ACC"], bal_acc=report_data["BalACC"],
        precision=report_data["Precision"], recall=report_data["Recall"],
        f1=report_data["F1"], auc=report_data["AUC"], fpr=report_data["FPR"],
        fnr=report_data["FNR"], auc_undefined=report_data["auc_undefined"],
        confusion=report_data["confusion"], per_fold=report_data["per_fold"],
        folds_used=report_data["folds_used"], folds_reduced=report_data["folds_reduced"],
    )
    cfg_data = payload["config"]
    return DetectorModel(
        backend=payload["backend"],
        estimator=pickle.loads(payload["estimator"]),
        schema=payload["schema_hash"],
        cleaning=CleaningReport.from_dict(payload["cleaning"]),
        cv_report=report,
        grid_point=payload["grid_point"],
        config=DetectorConfig(**cfg_data),
    )
