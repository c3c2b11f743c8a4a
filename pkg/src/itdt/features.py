"""Statistical feature extraction over relevance and frequency distributions.

One example yields four nonnegative distributions — per-word attention
relevance, per-word gradient relevance, per-word corpus frequency, and the
occurrence counts of attention outliers — and each is summarized by the same
eleven descriptors, giving a fixed 44-feature vector.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyFeatureSpace
from .model import Classifier
from .relevance import RelevanceMaps, relevance_maps
from .vocab import TokenSequence, Vocabulary

DESCRIPTOR_NAMES = (
    "min", "max", "mean", "median", "mode", "variance", "skewness",
    "kurtosis", "entropy", "grad_mean", "peak_sum",
)
DISTRIBUTION_NAMES = ("amap", "igrad", "freq", "outfreq")
FEATURE_NAMES = tuple(f"{d}_{s}" for d in DISTRIBUTION_NAMES for s in DESCRIPTOR_NAMES)
N_FEATURES = len(FEATURE_NAMES)  # 44

HIST_BINS = 20


def schema_hash(names: tuple[str, ...] = FEATURE_NAMES) -> str:
    return hashlib.sha256("\x00".join(names).encode()).hexdigest()


def describe(values) -> dict[str, float]:
    """The eleven descriptors of a nonnegative value vector.

    Population moments throughout. Mode and entropy are computed on a
    20-equal-width-bin histogram over [min, max] (mode = center of the fullest
    bin, ties to the lowest bin; entropy in nats). grad_mean is the mean of
    successive differences and peak_sum the sum of strict interior local
    maxima. Empty input maps to all zeros; constant input has zero variance,
    skewness, kurtosis and entropy.
    """
    v = np.asarray(values, dtype=np.float64)
    out = dict.fromkeys(DESCRIPTOR_NAMES, 0.0)
    m = v.size
    if m == 0:
        return out
    mn = float(v.min())
    mx = float(v.max())
    mean = float(v.mean())
    out["min"] = mn
    out["max"] = mx
    out["mean"] = mean
    out["median"] = float(np.median(v))
    # a constant vector is zero-variance by definition; testing mx == mn avoids
    # spurious 1e-32-scale variance from rounding in the mean
    var = float(np.mean((v - mean) ** 2)) if mx > mn else 0.0
    out["variance"] = var
    if var > 0.0:
        sd = math.sqrt(var)
        out["skewness"] = float(np.mean((v - mean) ** 3)) / sd**3
        out["kurtosis"] = float(np.mean((v - mean) ** 4)) / var**2 - 3.0
    if mx > mn:
        hist, _ = np.histogram(v, bins=HIST_BINS, range=(mn, mx))
        width = (mx - mn) / HIST_BINS
        top = int(np.argmax(hist))  # argmax takes the first (lowest) bin on ties
        out["mode"] = mn + (top + 0.5) * width
        p = hist[hist > 0] / m
        out["entropy"] = float(-(p * np.log(p)).sum())
    else:
        out["mode"] = mn
    if m >= 2:
        out["grad_mean"] = float(np.diff(v).mean())
    if m >= 3:
        interior = v[1:-1]
        peaks = (interior > v[:-2]) & (interior > v[2:])
        out["peak_sum"] = float(interior[peaks].sum())
    return out


def quartiles(values) -> tuple[float, float]:
    """q1 and q3 by linear interpolation at fractional ranks 0.25/0.75 (m-1)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    m = v.size
    if m == 0:
        return 0.0, 0.0

    def at(frac: float) -> float:
        pos = frac * (m - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, m - 1)
        t = pos - lo
        return float(v[lo] * (1.0 - t) + v[hi] * t)

    return at(0.25), at(0.75)


def outlier_frequency(a_map_scores, vocab: Vocabulary, words: list[str]) -> list[int]:
    """Occurrence counts of attention values that are IQR outliers.

    A word is an outlier when its attention score exceeds q3 + 1.5*iqr and it
    is not a stopword; for each outlier the count of its score value within
    the example's scores is emitted. No outliers gives an empty distribution.
    """
    scores = np.asarray(a_map_scores, dtype=np.float64)
    if scores.size == 0:
        return []
    q1, q3 = quartiles(scores)
    threshold = q3 + 1.5 * (q3 - q1)
    counts = []
    for score, word in zip(scores, words):
        if score > threshold and not vocab.is_stopword(word):
            counts.append(int(np.sum(scores == score)))
    return counts


@dataclass
class DistributionSet:
    a_map_scores: np.ndarray
    i_grad_scores: np.ndarray
    overall_freq: np.ndarray
    outlier_freq: np.ndarray


@dataclass
class FeatureVector:
    example_id: str
    values: np.ndarray  # (44,) in FEATURE_NAMES order
    class_label: int | None = None
    attack_tag: str = ""
    names: tuple[str, ...] = FEATURE_NAMES

    @property
    def schema_hash(self) -> str:
        return schema_hash(self.names)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


def build_distributions(seq: TokenSequence, vocab: Vocabulary, maps: RelevanceMaps) -> DistributionSet:
    words = seq.words
    a_scores = np.asarray(maps.a_map[1:], dtype=np.float64)
    i_scores = np.asarray(maps.i_grad[1:], dtype=np.float64)
    freqs = np.array([vocab.relative_frequency(w) for w in words])
    out = np.asarray(outlier_frequency(a_scores, vocab, words), dtype=np.float64)
    return DistributionSet(a_scores, i_scores, freqs, out)


def extract_features(
    seq: TokenSequence,
    model: Classifier,
    label: int | None = None,
    attack_tag: str = "",
    maps: RelevanceMaps | None = None,
) -> FeatureVector:
    """44-feature vector for one example; relevance is computed if not given."""
    if maps is None:
        maps = relevance_maps(model, seq)
    dists = build_distributions(seq, model.vocab, maps)
    values = []
    for dist in (dists.a_map_scores, dists.i_grad_scores, dists.overall_freq, dists.outlier_freq):
        desc = describe(dist)
        values.extend(desc[name] for name in DESCRIPTOR_NAMES)
    return FeatureVector(
        example_id=seq.example_id,
        values=np.asarray(values, dtype=np.float64),
        class_label=label,
        attack_tag=attack_tag,
    )


@dataclass
class CleaningReport:
    imputed_cells: int = 0
    dropped_duplicate: list[tuple[str, str]] = field(default_factory=list)  # (dropped, kept)
    dropped_constant: list[str] = field(default_factory=list)
    retained: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "imputed_cells": self.imputed_cells,
            "dropped_duplicate": [list(p) for p in self.dropped_duplicate],
            "dropped_constant": list(self.dropped_constant),
            "retained": list(self.retained),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CleaningReport":
        return cls(
            imputed_cells=int(data["imputed_cells"]),
            dropped_duplicate=[tuple(p) for p in data["dropped_duplicate"]],
            dropped_constant=list(data["dropped_constant"]),
            retained=list(data["retained"]),
        )


def clean_feature_matrix(matrix, names=FEATURE_NAMES) -> tuple[np.ndarray, list[str], CleaningReport]:
    """Impute non-finite cells to 0, drop bit-identical duplicate columns
    (keeping the first), then drop constant columns. Idempotent."""
    x = np.array(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need a 2-d matrix with at least one row")
    report = CleaningReport()
    bad = ~np.isfinite(x)
    report.imputed_cells = int(bad.sum())
    x[bad] = 0.0

    keep: list[int] = []
    for j in range(x.shape[1]):
        dup_of = None
        for i in keep:
            if np.array_equal(x[:, i], x[:, j]):
                dup_of = i
                break
        if dup_of is not None:
            report.dropped_duplicate.append((names[j], names[dup_of]))
        else:
            keep.append(j)

    final = []
    for j in keep:
        col = x[:, j]
        if np.all(col == col[0]):
            report.dropped_constant.append(names[j])
        else:
            final.append(j)
    if not final:
        raise EmptyFeatureSpace("cleaning removed every feature column")
    report.retained = [names[j] for j in final]
    return x[:, final], report.retained, report


def apply_cleaning(fv: FeatureVector, report: CleaningReport) -> np.ndarray:
    """Training-time imputation and column selection applied to one vector."""
    values = np.asarray(fv.values, dtype=np.float64).copy()
    values[~np.isfinite(values)] = 0.0
    index = {name: i for i, name in enumerate(fv.names)}
    return values[[index[name] for name in report.retained]]


def cohen_d(x, y) -> tuple[float, bool]:
    """Absolute Cohen's d with pooled sample SD; degenerate flag when SD is 0."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1, n2 = x.size, y.size
    s1 = x.var(ddof=1) if n1 > 1 else 0.0
    s2 = y.var(ddof=1) if n2 > 1 else 0.0
    pooled = math.sqrt(((n1 - 1) * s1 + (n2 - 1) * s2) / max(n1 + n2 - 2, 1))
    if pooled == 0.0:
        return 0.0, True
    return abs(float(x.mean() - y.mean())) / pooled, False


def effect_band(d: float) -> str:
    if d < 0.5:
        return "low"
    if d < 0.8:
        return "medium"
    return "high"


_LOG_FLOOR = 1e-12


def _log_sigma_profiles(examples, model) -> tuple[np.ndarray, np.ndarray]:
    a_vals, i_vals = [], []
    for seq in examples:
        maps = relevance_maps(model, seq)
        a_vals.append(math.log(max(float(np.std(maps.a_map[1:])), _LOG_FLOOR)))
        i_vals.append(math.log(max(float(np.std(maps.i_grad[1:])), _LOG_FLOOR)))
    return np.asarray(a_vals), np.asarray(i_vals)


def separation_report(clean_train, clean_test, adversarial, model) -> dict:
    """Effect sizes between the log-std relevance profiles of the three sets.

    Each argument is a list of TokenSequence. For every pair of sets and both
    maps, the report carries absolute Cohen's d, its band, and a degenerate
    flag for zero pooled SD.
    """
    sets = {"train": clean_train, "test": clean_test, "adv": adversarial}
    for name, group in sets.items():
        if len(group) < 2:
            raise ValueError(f"set {name} needs at least 2 examples")
    profiles = {name: _log_sigma_profiles(group, model) for name, group in sets.items()}
    pairs = (("train", "test"), ("train", "adv"), ("test", "adv"))
    report: dict = {"pairs": {}}
    for left, right in pairs:
        entry = {}
        for mi, map_name in enumerate(("a_map", "i_grad")):
            d, degenerate = cohen_d(profiles[left][mi], profiles[right][mi])
            entry[map_name] = {"d": d, "band": effect_band(d), "degenerate": degenerate}
        report["pairs"][f"{left}-{right}"] = entry
    return report


def save_feature_csv(fvs: list[FeatureVector], path: str) -> None:
    """CSV with header example_id,label,<44 names>; attack tags go to a sidecar."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "label", *FEATURE_NAMES])
        for fv in fvs:
            label = "" if fv.class_label is None else fv.class_label
            writer.writerow([fv.example_id, label, *(repr(float(v)) for v in fv.values)])
    tags = [fv.attack_tag for fv in fvs]
    if any(tags):
        with open(path + ".tags", "w") as fh:
            fh.write("\n".join(tags) + "\n")


def load_feature_csv(path: str) -> list[FeatureVector]:
    import os

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = tuple(header[2:])
        rows = [(r[0], r[1], np.array([float(v) for v in r[2:]])) for r in reader]
    tags = [""] * len(rows)
    if os.path.exists(path + ".tags"):
        with open(path + ".tags") as fh:
            tags = fh.read().splitlines()
    return [
        FeatureVector(example_id=ex_id, values=vals,
                      class_label=None if lab == "" else int(lab),
                      attack_tag=tags[i] if i < len(tags) else "", names=names)
        for i, (ex_id, lab, vals) in enumerate(rows)
    ]
