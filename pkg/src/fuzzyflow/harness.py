"""Evaluation metrics, MDS projection, cluster feature profiles, the
key-value pipeline config and the end-to-end ``run_pipeline`` driver.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import platform
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from fuzzyflow import __version__
from fuzzyflow import balance as bal
from fuzzyflow import fcm, fis, ingest, scenario
from fuzzyflow import reduce as red
from fuzzyflow.core import (
    ATTACK_CLASSES,
    BinaryLabel,
    DataError,
    FuzzyflowError,
    InternalError,
    ModelError,
    ParameterError,
    TrafficClass,
    class_name,
    parse_class,
)
from fuzzyflow.features import FeatureTable, extract, write_feature_csv

log = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "specificity", "sensitivity", "f1")
CLASS_LABELS = tuple(c.label for c in TrafficClass)
ATTACK_LABELS = tuple(c.label for c in ATTACK_CLASSES)
BINARY_LABELS = (BinaryLabel.BENIGN.value, BinaryLabel.MALICIOUS.value)


# -- confusion matrices and metrics -----------------------------------------

@dataclass
class ConfusionMatrix:
    """Rows are actual classes, columns predicted classes."""

    classes: tuple
    counts: np.ndarray

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if self.counts.shape != (k, k):
            raise DataError(f"confusion counts must be {k}x{k}, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def restrict(self, classes: Sequence) -> "ConfusionMatrix":
        """Sub-matrix over the given classes (rows and columns)."""
        idx = [self.classes.index(c) for c in classes]
        return ConfusionMatrix(tuple(classes), self.counts[np.ix_(idx, idx)])

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["actual\\predicted", *self.classes])
            for name, row in zip(self.classes, self.counts):
                w.writerow([name, *map(int, row)])

    @classmethod
    def from_csv(cls, path) -> "ConfusionMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if not rows:
            raise DataError(f"{path}: empty confusion matrix file")
        classes = tuple(rows[0][1:])
        if [r[0] for r in rows[1:]] != list(classes):
            raise DataError(f"{path}: row labels do not match column labels")
        try:
            counts = [[int(v) for v in r[1:]] for r in rows[1:]]
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
        return cls(classes, np.array(counts, dtype=np.int64).reshape(len(classes), len(classes)))


def confusion(actual: Sequence, predicted: Sequence, classes: Sequence | None = None) -> ConfusionMatrix:
    """Count ``(actual, predicted)`` pairs; ``classes`` fixes the row/column order."""
    actual, predicted = list(actual), list(predicted)
    if len(actual) != len(predicted):
        raise DataError(f"label sequences differ in length: {len(actual)} vs {len(predicted)}")
    if classes is None:
        classes = sorted(set(actual) | set(predicted))
    classes = tuple(classes)
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        try:
            counts[index[a], index[p]] += 1
        except KeyError as exc:
            raise DataError(f"label {exc.args[0]!r} is not one of {classes}") from None
    return ConfusionMatrix(classes, counts)


def _ratio(num: float, den: float):
    return None if den == 0 else num / den


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class MetricsReport:
    classes: tuple
    per_class: dict                 # class -> {metric: value or None}
    mean: dict                      # macro mean over defined values
    undefined: list                 # "class:metric" entries with a zero denominator
    accuracy: float                 # trace / total
    binary_accuracy: float | None = None
    fpr: float | None = None
    latency_median_ms: float | None = None
    latency_p95_ms: float | None = None

    def mean_over(self, classes: Sequence, metric: str):
        return _mean_defined(self.per_class[c][metric] for c in classes)

    def to_dict(self) -> dict:
        out = {
            "classes": list(self.classes),
            "per_class": {c: dict(v) for c, v in self.per_class.items()},
            "mean": dict(self.mean),
            "undefined": list(self.undefined),
            "accuracy": self.accuracy,
        }
        if self.binary_accuracy is not None:
            out["binary_accuracy"] = self.binary_accuracy
            out["fpr"] = self.fpr
        if self.latency_median_ms is not None:
            out["latency_median_ms"] = self.latency_median_ms
            out["latency_p95_ms"] = self.latency_p95_ms
        return out


def metrics(cm: ConfusionMatrix, positive=None) -> MetricsReport:
    """One-vs-rest metrics per class plus macro means.

    A metric whose denominator is zero is reported as ``None`` and listed in
    ``undefined``. With ``positive`` set on a two-class matrix the report
    also carries binary accuracy and the false-positive rate of that class.
    """
    C = cm.counts
    total = cm.total
    if total == 0:
        raise DataError("metrics need a non-empty confusion matrix")
    per_class, undefined = {}, []
    for i, name in enumerate(cm.classes):
        tp = int(C[i, i])
        fp = int(C[:, i].sum()) - tp
        fn = int(C[i, :].sum()) - tp
        tn = total - tp - fp - fn
        precision = _ratio(tp, tp + fp)
        sensitivity = _ratio(tp, tp + fn)
        f1 = None
        if precision is not None and sensitivity is not None:
            f1 = _ratio(2 * tp, 2 * tp + fp + fn)
        row = {
            "accuracy": (tp + tn) / total,
            "precision": precision,
            "specificity": _ratio(tn, tn + fp),
            "sensitivity": sensitivity,
            "f1": f1,
        }
        undefined += [f"{name}:{k}" for k, v in row.items() if v is None]
        per_class[name] = row
    mean = {k: _mean_defined(per_class[c][k] for c in cm.classes) for k in METRIC_NAMES}
    report = MetricsReport(cm.classes, per_class, mean, undefined, float(np.trace(C) / total))
    if positive is not None:
        if len(cm.classes) != 2 or positive not in cm.classes:
            raise ParameterError("binary metrics need a two-class matrix that contains the positive class")
        report.binary_accuracy = report.accuracy
        spec = per_class[positive]["specificity"]
        report.fpr = None if spec is None else 1.0 - spec
    return report


def binary_confusion(actual_codes, malicious_pred) -> ConfusionMatrix:
    """Benign/malicious matrix from class codes and a predicted malicious flag."""
    actual = [BINARY_LABELS[int(c != int(TrafficClass.NORMAL))] for c in np.asarray(actual_codes)]
    pred = [BINARY_LABELS[int(bool(b))] for b in np.asarray(malicious_pred)]
    return confusion(actual, pred, BINARY_LABELS)


def dominant_confusion(cm: ConfusionMatrix, classes: Sequence = ATTACK_LABELS) -> tuple:
    """Unordered class pair with the most mutual confusions: ``((a, b), count)``.

    Ties go to the pair met first in row-major order over ``classes``.
    """
    sub = cm.restrict(classes).counts
    best, pair = -1, None
    for i in range(len(classes)):
        for j in range(i + 1, len(classes)):
            v = int(sub[i, j] + sub[j, i])
            if v > best:
                best, pair = v, (classes[i], classes[j])
    return pair, best


# -- projection and profiles ------------------------------------------------

def mds_project(data, dims: int = 2) -> np.ndarray:
    """Classical (Torgerson) MDS on Euclidean distances.

    Each axis is sign-normalized so its largest-magnitude coordinate is
    positive, which makes the output deterministic.
    """
    X = np.asarray(data, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = len(X)
    if n < 3:
        raise ParameterError("MDS needs at least 3 points")
    if dims < 1:
        raise ParameterError("dims must be >= 1")
    if not np.all(np.isfinite(X)):
        raise DataError("MDS input contains non-finite values")
    sq = np.einsum("ij,ij->i", X, X)
    D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ D2 @ J
    B = (B + B.T) / 2.0
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:dims]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    if not np.any(vals > 1e-12 * max(1.0, float(np.abs(B).max()))):
        log.warning("MDS input points are all identical; returning a zero embedding")
        return np.zeros((n, dims))
    Y = vecs * np.sqrt(vals)
    if Y.shape[1] < dims:
        Y = np.hstack([Y, np.zeros((n, dims - Y.shape[1]))])
    flip = np.sign(Y[np.argmax(np.abs(Y), axis=0), np.arange(dims)])
    flip[flip == 0] = 1.0
    return Y * flip


@dataclass
class ClusterProfile:
    cluster: int
    label: str | None
    size: int
    means: np.ndarray


def feature_profile(model: fcm.ClusterModel, data) -> list:
    """Mean feature vector of each cluster's hard members.

    A cluster without hard members falls back to the ``u**m``-weighted mean.
    """
    X = np.asarray(data, dtype=float)
    U = model.memberships
    if U.shape[1] != len(X):
        raise DataError("cluster memberships do not match the data")
    hard = fcm.hard_assign(U)
    out = []
    for i in range(model.c):
        members = X[hard == i]
        if len(members):
            means = members.mean(axis=0)
        else:
            w = U[i] ** model.m
            means = w @ X / w.sum()
        label = None if model.labels is None else TrafficClass(model.labels[i]).label
        out.append(ClusterProfile(i, label, int(len(members)), means))
    return out


def write_profile_csv(profiles: Sequence[ClusterProfile], names: Sequence[str], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "label", "size", *names])
        for p in profiles:
            w.writerow([p.cluster, p.label or "", p.size, *(repr(float(v)) for v in p.means)])


# -- prediction --------------------------------------------------------------

@dataclass
class Predictor:
    """Frozen reduction + rule base, applied to raw 39-feature rows."""

    report: red.ReductionReport
    rules: fis.FuzzyRuleBase
    clusters: fcm.ClusterModel | None = None
    spread: float = fis.DEFAULT_SPREAD

    def columns(self, names: Sequence[str]) -> list:
        missing = [n for n in self.report.kept if n not in names]
        if missing:
            raise DataError(f"input lacks features required by the model: {missing}")
        return [list(names).index(n) for n in self.report.kept]

    def _normalize(self, raw) -> np.ndarray:
        lo, hi = self.report.scaler_arrays()
        return np.clip((np.asarray(raw, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    def predict_batch(self, raw_kept) -> fis.BatchInference:
        """Rows already restricted to the kept columns, in ``report.kept`` order."""
        return fis.infer_batch(self._normalize(raw_kept), self.rules)

    def predict_one(self, raw_kept) -> fis.Inference:
        return fis.infer(self._normalize(raw_kept), self.rules)

    def to_dict(self) -> dict:
        return {
            "format": "fuzzyflow-model/1",
            "reduction": self.report.to_dict(),
            "clusters": None if self.clusters is None else self.clusters.to_dict(include_memberships=False),
            "rules": self.rules.to_dict(),
            "spread": self.spread,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Predictor":
        try:
            clusters = data.get("clusters")
            return cls(
                red.ReductionReport.from_dict(data["reduction"]),
                fis.FuzzyRuleBase.from_dict(data["rules"]),
                None if clusters is None else fcm.ClusterModel.from_dict(clusters),
                float(data.get("spread", fis.DEFAULT_SPREAD)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed model file: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Predictor":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(data)


PREDICTION_COLUMNS = ("src_ip", "dst_ip", "timestamp", "actual", "predicted", "score", "binary",
                      "degree_of_maliciousness", *(f"conf_{c}" for c in CLASS_LABELS), "latency_us")


def write_predictions(path, table: FeatureTable, out: fis.BatchInference, latency_us=None) -> None:
    """One row per observation; ``latency_us`` is left blank when not measured."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        degree = out.degree
        for i, key in enumerate(table.keys):
            actual = "" if table.y[i] < 0 else class_name(int(table.y[i]))
            w.writerow([key.src_ip, key.dst_ip, repr(key.timestamp), actual,
                        class_name(int(out.predicted[i])), repr(float(out.scores[i])),
                        BINARY_LABELS[int(bool(out.binary[i]))], repr(float(degree[i])),
                        *(repr(float(v)) for v in out.confidence[i]),
                        "" if latency_us is None else repr(float(latency_us[i]))])


def read_predictions(path) -> tuple:
    """(actual codes, predicted codes, malicious flags) from a predictions CSV."""
    actual, predicted, binary = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"actual", "predicted", "binary"} <= set(reader.fieldnames):
            raise DataError(f"{path}: not a predictions file")
        for row in reader:
            if not row["actual"]:
                raise DataError(f"{path}: evaluation needs the actual label of every row")
            actual.append(int(parse_class(row["actual"])))
            predicted.append(int(parse_class(row["predicted"])))
            binary.append(row["binary"] == BinaryLabel.MALICIOUS.value)
    return np.array(actual, dtype=int), np.array(predicted, dtype=int), np.array(binary, dtype=bool)


def timed_predictions(predictor: Predictor, raw_kept) -> np.ndarray:
    """Wall-clock microseconds to classify each row on its own."""
    raw_kept = np.asarray(raw_kept, dtype=float)
    lat = np.empty(len(raw_kept))
    for i, row in enumerate(raw_kept):
        t0 = time.perf_counter_ns()
        predictor.predict_one(row)
        lat[i] = (time.perf_counter_ns() - t0) / 1000.0
    return lat


def evaluate(actual, predicted, malicious, latency_us=None) -> dict:
    """Multi-class, attack-only and binary matrices with their metric reports."""
    actual = np.asarray(actual, dtype=int)
    predicted = np.asarray(predicted, dtype=int)
    multi = confusion([CLASS_LABELS[a] for a in actual], [CLASS_LABELS[p] for p in predicted], CLASS_LABELS)
    binary = binary_confusion(actual, malicious)
    multi_report = metrics(multi)
    binary_report = metrics(binary, positive=BinaryLabel.MALICIOUS.value)
    if latency_us is not None and len(latency_us):
        binary_report.latency_median_ms = float(np.median(latency_us) / 1000.0)
        binary_report.latency_p95_ms = float(np.percentile(latency_us, 95) / 1000.0)
    pair, count = dominant_confusion(multi)
    return {
        "multiclass": multi,
        "attack": multi.restrict(ATTACK_LABELS),
        "binary": binary,
        "multiclass_report": multi_report,
        "binary_report": binary_report,
        "attack_mean_f1": multi_report.mean_over(ATTACK_LABELS, "f1"),
        "dominant_pair": pair,
        "dominant_count": count,
    }


# -- configuration ------------------------------------------------------------

STAGES = ("generate", "ingest", "extract", "reduce", "balance", "train", "predict", "evaluate")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    stages: tuple = STAGES
    # generate
    flows_per_class: int = 1000
    devices: int = 1
    port_range: tuple = (1, 1024)
    scan_subset: int = 20
    wide_scan_share: float = 0.2
    wide_scan_subset: int = 400
    open_ports: tuple = (22, 80, 443)
    auth_targets: int = 1
    auth_failure_rate: float = 0.95
    botnet_destinations: int = 2
    spy_upload_bytes: tuple = (50_000, 500_000)
    worm_hosts: int = 254
    worm_infect_rate: float = 0.3
    normal_sites: int = 40
    normal_rate: float = 0.5
    # ingest / extract
    strict_ingest: bool = False
    window: int = 100
    test_fraction: float = 0.2
    # reduce
    variance_epsilon: float = red.DEFAULT_EPSILON
    pearson_threshold: float = red.DEFAULT_PEARSON
    min_support: float = red.DEFAULT_MIN_SUPPORT
    deviation_pruning: bool = True
    # balance
    ratio: str = "7:3"
    k_neighbors: int = 5
    max_oversample: float = 2.0
    # train
    m: float = 2.0
    c_min: int = 2
    c_max: int = 12
    max_iters: int = 300
    select_max_iters: int = fcm.SELECT_MAX_ITERS
    tol: float = 1e-8
    restarts: int = 10
    wcsd_rtol: float = fcm.DEFAULT_WCSD_RTOL
    wcsd_metric: str = "cityblock"
    spread: float = fis.DEFAULT_SPREAD
    # artifacts
    mds_points: int = 1000
    timing: bool = True

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages or stages != STAGES[:len(stages)]:
            raise ParameterError(f"stages must be a prefix of {', '.join(STAGES)}; got {stages}")
        object.__setattr__(self, "stages", stages)
        if self.window < 1:
            raise ParameterError("window must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise ParameterError("test_fraction must lie in (0, 1)")
        if not 2 <= self.c_min <= self.c_max:
            raise ParameterError("need 2 <= c_min <= c_max")
        if self.wcsd_metric not in ("cityblock", "sqeuclidean"):
            raise ParameterError(f"unknown wcsd_metric {self.wcsd_metric!r}")
        if self.mds_points < 3:
            raise ParameterError("mds_points must be >= 3")
        # surface knob errors now rather than mid-run
        self.scenario_configs()
        self.balance_config()
        self.fcm_config()

    def scenario_configs(self) -> list:
        knobs = {k: getattr(self, k) for k in SCENARIO_KNOBS}
        return scenario.default_mix(self.flows_per_class, seed=self.seed, devices=self.devices, **knobs)

    def balance_config(self) -> bal.BalanceConfig:
        return bal.BalanceConfig.from_ratio(self.ratio, k_neighbors=self.k_neighbors, seed=self.seed,
                                            max_oversample=self.max_oversample)

    def fcm_config(self) -> fcm.FcmConfig:
        return fcm.FcmConfig(m=self.m, max_iters=self.max_iters, tol=self.tol,
                             restarts=self.restarts, seed=self.seed)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v, tuple) else v)
                for f in dataclasses.fields(self) for v in [getattr(self, f.name)]}


SCENARIO_KNOBS = ("port_range", "scan_subset", "wide_scan_share", "wide_scan_subset", "open_ports",
                  "auth_targets", "auth_failure_rate", "botnet_destinations", "spy_upload_bytes",
                  "worm_hosts", "worm_infect_rate", "normal_sites", "normal_rate")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(name: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.replace("..", ",").split(",") if p.strip()]
            if default and isinstance(default[0], str):
                return tuple(parts)
            return tuple(int(p) for p in parts)
        return raw
    except ValueError as exc:
        raise ParameterError(f"config key {name!r}: {exc}") from None


def parse_config(text: str, overrides: Mapping | None = None) -> PipelineConfig:
    """Parse ``key = value`` lines (``#``/``;`` comments, optional ``[section]`` headers)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text if text.lstrip().startswith("[") else "[pipeline]\n" + text)
    except configparser.Error as exc:
        raise ParameterError(f"malformed config: {exc}") from None
    defaults = {f.name: f.default for f in dataclasses.fields(PipelineConfig)}
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ParameterError(f"unknown config key {key!r}")
            values[key] = _convert(key, raw, defaults[key])
    for key, val in (overrides or {}).items():
        if key not in defaults:
            raise ParameterError(f"unknown config key {key!r}")
        values[key] = val
    return PipelineConfig(**values)


def load_config(path, overrides: Mapping | None = None) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def format_config(config: PipelineConfig) -> str:
    """Render a config in the same key-value format ``parse_config`` reads."""
    lines = []
    for f in dataclasses.fields(config):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


# -- pipeline -----------------------------------------------------------------

@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except FuzzyflowError as exc:
        exc.stage = name
        exc.args = (f"stage {name}: {exc}",)
        raise
    except OSError as exc:
        err = DataError(f"stage {name}: {exc}")
        err.stage = name
        raise err from exc
    except Exception as exc:  # anything else is a bug
        err = InternalError(f"stage {name}: {type(exc).__name__}: {exc}")
        err.stage = name
        raise err from exc
    timings[name] = time.perf_counter() - t0


def stratified_split(y, test_fraction: float, seed) -> tuple:
    """(train indices, test indices), both sorted; per class ``round(f * n)`` go to test."""
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for code in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == code))
        k = int(round(test_fraction * len(idx)))
        test.extend(idx[:k])
        train.extend(idx[k:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


@dataclass
class PipelineResult:
    out_dir: Path
    metrics: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    predictor: Predictor | None = None
    latency_us: np.ndarray | None = None


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import scipy
    return {"fuzzyflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_pipeline(config: PipelineConfig, out_dir) -> PipelineResult:
    """Run the configured stages in order, writing every artifact to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = config.seed
    timings: dict = {}
    written: list = []
    res = PipelineResult(out)
    state: dict = {}

    def path(name: str) -> Path:
        written.append(name)
        return out / name

    (out / "config.cfg").write_text(format_config(config), encoding="utf-8")
    written.append("config.cfg")

    for stage in config.stages:
        with _stage(stage, timings):
            if stage == "generate":
                flows = scenario.generate_mixed(config.scenario_configs(), interleave_seed=seed)
                ingest.write_flow_log(flows.records, path("flows.jsonl"))
            elif stage == "ingest":
                flows = ingest.parse_flow_log(out / "flows.jsonl", strict=config.strict_ingest)
                if flows.errors:
                    log.warning("%d malformed flow-log lines skipped", len(flows.errors))
                state["records"] = flows.records
            elif stage == "extract":
                table = FeatureTable.from_vectors(extract(state["records"], config.window))
                write_feature_csv(table, path("features.csv"))
                train_idx, test_idx = stratified_split(table.y, config.test_fraction, [seed, 1])
                state["train"], state["test"] = table.subset(train_idx), table.subset(test_idx)
                write_feature_csv(state["train"], path("train.csv"))
                write_feature_csv(state["test"], path("test.csv"))
            elif stage == "reduce":
                report = red.fit_reduction(state["train"], config.variance_epsilon, config.pearson_threshold,
                                           config.min_support, use_deviation=config.deviation_pruning)
                _dump_json(path("reduction.json"), report.to_dict())
                state["report"] = report
                state["train_n"] = red.transform(state["train"], report)
                write_feature_csv(state["train_n"], path("train_reduced.csv"))
            elif stage == "balance":
                balanced = bal.rebalance(state["train_n"], config.balance_config())
                write_feature_csv(balanced, path("balanced.csv"), include_synthetic=True)
                state["balanced"] = balanced
            elif stage == "train":
                balanced = state["balanced"]
                c_hi = min(config.c_max, len(balanced) - 1)
                c_star, rows = fcm.select_c(balanced.X, range(config.c_min, c_hi + 1), config.fcm_config(),
                                            max_iters=config.select_max_iters, wcsd_rtol=config.wcsd_rtol,
                                            metric=config.wcsd_metric)
                _write_selection(path("selection.csv"), rows, c_star)
                model = next(r.model for r in rows if r.c == c_star)
                fcm.label_clusters(model, balanced.y)
                rules = fis.rules_from_clusters(model, balanced.X, config.spread, state["report"].kept)
                predictor = Predictor(state["report"], rules, model, config.spread)
                predictor.save(path("model.json"))
                names = state["report"].kept
                write_profile_csv(feature_profile(model, balanced.X), names, path("feature_profile.csv"))
                _write_mds(path("mds.csv"), balanced, model, config.mds_points, [seed, 2])
                state["predictor"], state["c_star"] = predictor, c_star
                res.predictor = predictor
            elif stage == "predict":
                predictor, test = state["predictor"], state["test"]
                raw = test.X[:, predictor.columns(test.names)]
                batch = predictor.predict_batch(raw)
                lat = timed_predictions(predictor, raw) if config.timing else None
                write_predictions(path("predictions.csv"), test, batch, lat)
                state["batch"], state["latency"] = batch, lat
                res.latency_us = lat
            elif stage == "evaluate":
                test, batch = state["test"], state["batch"]
                ev = evaluate(test.y, batch.predicted, batch.binary)
                ev["multiclass"].to_csv(path("confusion_multiclass.csv"))
                ev["attack"].to_csv(path("confusion_attack.csv"))
                ev["binary"].to_csv(path("confusion_binary.csv"))
                res.metrics = _metrics_payload(config, state, ev)
                _dump_json(path("metrics.json"), res.metrics)
                lat = state.get("latency")
                if lat is not None:
                    _dump_json(path("latency.json"), {
                        "rows": int(len(lat)),
                        "median_ms": float(np.median(lat) / 1000.0),
                        "p95_ms": float(np.percentile(lat, 95) / 1000.0),
                        "max_ms": float(np.max(lat) / 1000.0),
                    })

    manifest = {
        "seed": seed,
        "stages": list(config.stages),
        "versions": _versions(),
        "config": config.to_dict(),
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
        "artifacts": {n: {"bytes": (out / n).stat().st_size, "sha256": _sha256(out / n)}
                      for n in sorted(set(written))},
    }
    _dump_json(out / "manifest.json", manifest)
    res.manifest = manifest
    return res


def _metrics_payload(config: PipelineConfig, state: dict, ev: dict) -> dict:
    # wall-clock numbers live in latency.json so this file stays reproducible
    report = state["report"]
    balanced = state["balanced"]
    counts = {c.label: int(np.sum(balanced.y == int(c))) for c in TrafficClass}
    return {
        "seed": config.seed,
        "n_train": int(len(state["train"])),
        "n_test": int(len(state["test"])),
        "n_balanced": int(len(balanced)),
        "balanced_counts": counts,
        "kept_features": list(report.kept),
        "n_kept_features": len(report.kept),
        "c_star": int(state["c_star"]),
        "cluster_labels": [TrafficClass(l).label for l in state["predictor"].clusters.labels],
        "binary": ev["binary_report"].to_dict(),
        "multiclass": ev["multiclass_report"].to_dict(),
        "attack_mean_f1": ev["attack_mean_f1"],
        "dominant_confusion": {"pair": list(ev["dominant_pair"]), "count": ev["dominant_count"]},
        "confusion": {
            "multiclass": ev["multiclass"].to_dict(),
            "binary": ev["binary"].to_dict(),
        },
    }


def _write_selection(path: Path, rows, c_star: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["c", "wcsd", "fpc", "mean_silhouette", "objective", "n_iter", "chosen"])
        for r in rows:
            w.writerow([r.c, repr(r.wcsd), repr(r.fpc), repr(r.mean_silhouette), repr(r.objective),
                        r.n_iter, int(r.c == c_star)])


def _write_mds(path: Path, table: FeatureTable, model: fcm.ClusterModel, limit: int, seed) -> None:
    idx = np.arange(len(table))
    if len(idx) > limit:
        idx = np.sort(np.random.default_rng(seed).choice(len(idx), size=limit, replace=False))
    Y = mds_project(table.X[idx])
    hard = model.hard_labels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "class", "cluster", "cluster_label", "synthetic", "x", "y"])
        for k, i in enumerate(idx):
            cl = int(hard[i])
            w.writerow([int(i), class_name(int(table.y[i])), cl, TrafficClass(model.labels[cl]).label,
                        int(table.synthetic[i]), repr(float(Y[k, 0])), repr(float(Y[k, 1]))])
