"""Stratified cross-validation of the six binary models and electrode ablation."""
from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .classify import ModelSpec, decision_scores, train_mdm, train_vector
from .cspwd import csp_fit, default_n_filters, feature_matrix, shrunk_class_covariance
from .data import ElectrodeLayout, EpochSet, Label, resolve_combination, select_electrodes
from .preprocess import augment_analogy, fit_normalization, normalize_robust
from .riemann import logeuclid_mean, tangent_vectors, trial_covariances
from .stats import chance_level, class_distinctiveness
from .wavelet import WaveletSpec

log = logging.getLogger(__name__)

__all__ = [
    "PAIRS", "PIPELINES", "pair_name", "parse_pair", "pipeline_for", "EvalError", "FoldPlan",
    "stratified_folds", "EvalConfig", "FittedPipeline", "fit_pipeline", "MetricsReport",
    "binary_metrics", "evaluate_pair", "evaluate_pair_models", "pair_class_distinctiveness",
    "AblationTable", "run_ablation", "run_grid",
]

PAIRS = tuple(combinations(tuple(Label), 2))
PIPELINES = ("CSP-WD", "Riemann")
_PIPELINE_OF = {"LDA": "CSP-WD", "SVM-linear": "CSP-WD", "SVM-RBF": "CSP-WD", "MLP": "CSP-WD",
                "MDM": "Riemann", "TS-SVM": "Riemann"}


class EvalError(ValueError):
    pass


def pair_name(pair) -> str:
    return "/".join(Label(int(p)).display for p in pair)


def parse_pair(text: str) -> tuple:
    a, b = (Label.parse(t) for t in text.split("/"))
    if a == b:
        raise EvalError(f"pair {text!r} repeats a class")
    return tuple(sorted((a, b)))


def pipeline_for(kind: str) -> str:
    try:
        return _PIPELINE_OF[kind]
    except KeyError:
        raise EvalError(f"unknown model kind {kind!r}") from None


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple  # k arrays of trial indices
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def split(self, i: int):
        test = self.folds[i]
        train = np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))
        return train, test


def stratified_folds(labels, k: int = 5, seed: int = 0) -> FoldPlan:
    """Partition trial indices into ``k`` folds with per-class counts differing by at most one."""
    labels = np.asarray(labels)
    if k < 2:
        raise EvalError(f"need k >= 2 folds, got {k}")
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in range(k)]
    offset = 0
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        if idx.size < k:
            raise EvalError(f"class {Label(int(lab)).display} has {idx.size} trials, fewer than {k} folds")
        idx = rng.permutation(idx)
        for pos, trial in enumerate(idx):
            buckets[(pos + offset) % k].append(trial)
        # rotate the start so the larger folds are not always the first ones
        offset = (offset + idx.size) % k
    return FoldPlan(tuple(np.sort(np.array(b, dtype=np.int64)) for b in buckets), seed)


@dataclass(frozen=True)
class EvalConfig:
    """Per-fold fitting options.

    ``augment_per_class`` is the per-class size of the full (all-fold) set
    after augmentation; inside a training fold the target is scaled by
    ``(k - 1) / k``. Set it to None, and ``normalize`` to False, when the
    set was augmented and normalized before splitting.
    """

    augment_per_class: int | None = None
    normalize: bool = True
    wavelet_family: str = "db4"
    wavelet_level: int | None = None  # None: 3 at >= 200 Hz, else 2
    wavelet_band: str = "approx"
    n_filters: int | None = None
    seed: int = 0

    def wavelet(self, sample_rate: float) -> WaveletSpec:
        level = self.wavelet_level
        if level is None:
            level = 3 if sample_rate >= 200 else 2
        return WaveletSpec(self.wavelet_family, level)


def _digest(arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class FittedPipeline:
    """Training-side state of one fold: normalization, spatial model and classifiers."""

    pipeline: str
    pair: tuple
    norm: object = None
    csp: object = None
    base: np.ndarray | None = None
    models: dict = field(default_factory=dict)
    wavelet: WaveletSpec | None = None
    band: str = "approx"

    def fingerprint(self) -> str:
        arrays = []
        if self.norm is not None:
            arrays += [self.norm.q5, self.norm.q50, self.norm.q95]
        if self.csp is not None:
            arrays += [self.csp.filters, self.csp.eigenvalues]
        if self.base is not None:
            arrays.append(self.base)
        for kind in sorted(self.models):
            params = self.models[kind].params
            arrays += [params[k] for k in sorted(params)]
        return _digest(arrays)

    def transform(self, epochs: EpochSet):
        """Features of ``epochs`` under the fitted state (F x n, or covariances for MDM)."""
        if self.norm is not None:
            epochs = normalize_robust(epochs, self.norm)
        if self.pipeline == "CSP-WD":
            return feature_matrix(epochs, self.csp, self.wavelet, self.band).values, None
        covs = trial_covariances(epochs.data)
        return tangent_vectors(covs, self.base).T, covs

    def scores(self, epochs: EpochSet) -> dict:
        feats, covs = self.transform(epochs)
        return {kind: decision_scores(m, covs if kind == "MDM" else feats) for kind, m in self.models.items()}


def fit_pipeline(train: EpochSet, pair, specs, config: EvalConfig = EvalConfig(), fold_seed: int = 0,
                 k: int = 5) -> FittedPipeline:
    """Fit everything trainable on ``train`` only.

    All ``specs`` must belong to the same pipeline.
    """
    pipelines = {pipeline_for(s.kind) for s in specs}
    if len(pipelines) != 1:
        raise EvalError(f"models {[s.kind for s in specs]} span more than one pipeline")
    pipeline = pipelines.pop()
    present = set(np.unique(train.labels).tolist())
    if present != {int(p) for p in pair}:
        raise EvalError(f"training fold holds classes {sorted(present)}, expected {sorted(int(p) for p in pair)}")
    if config.augment_per_class:
        target = int(np.ceil(config.augment_per_class * (k - 1) / k))
        current = max(train.class_counts().values())
        train = augment_analogy(train, max(target, current), seed=fold_seed)
    state = FittedPipeline(pipeline, tuple(pair))
    if config.normalize:
        state.norm = fit_normalization(train)
        train = normalize_robust(train, state.norm)
    y = train.labels
    if pipeline == "CSP-WD":
        ca = shrunk_class_covariance(train, pair[0])
        cb = shrunk_class_covariance(train, pair[1])
        n_filters = config.n_filters or default_n_filters(train.n_channels)
        state.csp = csp_fit(ca, cb, min(n_filters, train.n_channels), pair=tuple(pair))
        state.wavelet = config.wavelet(train.sample_rate)
        state.band = config.wavelet_band
        feats = feature_matrix(train, state.csp, state.wavelet, state.band).values
        for spec in specs:
            state.models[spec.kind] = train_vector(spec, feats, y)
    else:
        covs = trial_covariances(train.data)
        state.base = logeuclid_mean(covs)
        tvecs = None
        for spec in specs:
            if spec.kind == "MDM":
                state.models["MDM"] = train_mdm(covs, y)
            else:
                if tvecs is None:
                    tvecs = tangent_vectors(covs, state.base).T
                state.models[spec.kind] = train_vector(spec, tvecs, y)
    return state


def binary_metrics(y_true, y_pred, positive) -> dict:
    """Accuracy, precision, recall and F1 with ``positive`` as the positive class."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_pred == positive) & (y_true == positive)))
    fp = int(np.sum((y_pred == positive) & (y_true != positive)))
    fn = int(np.sum((y_pred != positive) & (y_true == positive)))
    acc = float(np.mean(y_true == y_pred)) if y_true.size else 0.0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": acc, "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn}


@dataclass
class MetricsReport:
    pair: tuple
    pipeline: str
    model: str
    accuracy: list
    f1: list
    precision: list
    n_test: list
    fingerprints: list = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracy))

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def mean_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def n_test_total(self) -> int:
        return int(sum(self.n_test))

    @property
    def chance(self) -> float:
        return chance_level(self.n_test_total, 0.05)


def evaluate_pair_models(epochs: EpochSet, pair, specs, plan: FoldPlan | None = None,
                         config: EvalConfig = EvalConfig()) -> list:
    """Cross-validate several models of one pipeline on one pair, sharing fold features.

    ``plan`` indexes the trials of ``epochs`` restricted to ``pair`` (in their
    original order); None builds a stratified 5-fold plan from ``config.seed``.
    """
    pair = tuple(sorted(int(p) for p in pair))
    sub = epochs.of_classes(pair)
    for p in pair:
        if not np.any(sub.labels == p):
            raise EvalError(f"set holds no {Label(p).display} trials")
    if plan is None:
        plan = stratified_folds(sub.labels, 5, config.seed)
    if sum(f.size for f in plan.folds) != sub.n_trials:
        raise EvalError(f"fold plan covers {sum(f.size for f in plan.folds)} trials, pair set has {sub.n_trials}")
    pipeline = pipeline_for(specs[0].kind)
    reports = {s.kind: MetricsReport(pair, pipeline, s.kind, [], [], [], []) for s in specs}
    for i in range(plan.k):
        train_idx, test_idx = plan.split(i)
        test = sub.subset(test_idx)
        if set(np.unique(test.labels).tolist()) != set(pair):
            raise EvalError(f"fold {i} is missing a class")
        state = fit_pipeline(sub.subset(train_idx), pair, specs, config,
                             fold_seed=config.seed * 1000 + i, k=plan.k)
        fingerprint = state.fingerprint()
        for kind, scores in state.scores(test).items():
            pred = np.where(scores >= 0, pair[0], pair[1])
            m = binary_metrics(test.labels, pred, pair[0])
            rep = reports[kind]
            rep.accuracy.append(m["accuracy"])
            rep.f1.append(m["f1"])
            rep.precision.append(m["precision"])
            rep.n_test.append(int(test.n_trials))
            rep.fingerprints.append(fingerprint)
    return [reports[s.kind] for s in specs]


def evaluate_pair(epochs: EpochSet, pair, pipeline: str, spec: ModelSpec, plan: FoldPlan | None = None,
                  config: EvalConfig = EvalConfig()) -> MetricsReport:
    if pipeline_for(spec.kind) != pipeline:
        raise EvalError(f"{spec.kind} does not run on the {pipeline} pipeline")
    return evaluate_pair_models(epochs, pair, [spec], plan, config)[0]


def pair_class_distinctiveness(epochs: EpochSet, pair, normalize: bool = True) -> float:
    """classDis of the two classes' shrunk trial covariances."""
    sub = epochs.of_classes(pair)
    if normalize:
        sub = normalize_robust(sub, fit_normalization(sub))
    covs = trial_covariances(sub.data)
    return class_distinctiveness(covs[sub.labels == pair[0]], covs[sub.labels == pair[1]])


# ---------------------------------------------------------------- grids


@dataclass(frozen=True)
class _Task:
    combo: int
    pair: tuple
    kinds: tuple


def _run_task(args):
    epochs, task, specs, config = args
    reports = evaluate_pair_models(epochs, task.pair, specs, None, config)
    dis = pair_class_distinctiveness(epochs, task.pair, normalize=config.normalize)
    return task, reports, dis


def run_grid(sets: dict, pairs, specs, config: EvalConfig = EvalConfig(), jobs: int = 1) -> list:
    """Evaluate every (combination, pair, model) cell.

    ``sets`` maps combination id -> EpochSet. Returns rows sorted by
    (combination, pair, model order in ``specs``); results do not depend on
    ``jobs``.
    """
    by_pipeline = {}
    for s in specs:
        by_pipeline.setdefault(pipeline_for(s.kind), []).append(s)
    work = []
    for combo in sorted(sets):
        for pair in pairs:
            for pipe in PIPELINES:
                if pipe in by_pipeline:
                    group = by_pipeline[pipe]
                    work.append((sets[combo], _Task(combo, tuple(pair), tuple(s.kind for s in group)),
                                 group, config))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, work))
    else:
        results = [_run_task(w) for w in work]
    order = {s.kind: i for i, s in enumerate(specs)}
    rows = []
    for task, reports, dis in results:
        for rep in reports:
            rows.append({"combo": task.combo, "pair": task.pair, "report": rep, "class_dis": dis})
    pair_order = {tuple(p): i for i, p in enumerate(pairs)}
    rows.sort(key=lambda r: (r["combo"], pair_order[r["pair"]], order[r["report"].model]))
    return rows


@dataclass
class AblationTable:
    rows: list  # dicts: combo, pair, model, n_channels, accuracy, class_dis, drop

    def baseline(self, pair, model) -> float:
        for r in self.rows:
            if r["combo"] == 0 and r["pair"] == tuple(pair) and r["model"] == model:
                return r["accuracy"]
        raise KeyError((pair, model))

    def mean_accuracy(self, combo: int) -> float:
        return float(np.mean([r["accuracy"] for r in self.rows if r["combo"] == combo]))


def run_ablation(epochs: EpochSet, combos, layout: ElectrodeLayout, specs, pairs=PAIRS,
                 config: EvalConfig = EvalConfig(), jobs: int = 1) -> AblationTable:
    """Refit and score every pair and model on each electrode combination.

    Combination 0 is the baseline; ``drop`` is baseline accuracy minus the
    combination's accuracy.
    """
    combos = list(combos)
    if not any(c.id == 0 for c in combos):
        raise EvalError("combination 0 (baseline) must be included")
    handedness = epochs.meta.handedness
    sets = {}
    n_channels = {}
    for combo in combos:
        names = resolve_combination(layout, combo, handedness)
        sets[combo.id] = select_electrodes(epochs, names)
        n_channels[combo.id] = len(names)
    rows = run_grid(sets, pairs, specs, config, jobs)
    table = []
    for r in rows:
        table.append({"combo": r["combo"], "pair": r["pair"], "model": r["report"].model,
                      "pipeline": r["report"].pipeline, "n_channels": n_channels[r["combo"]],
                      "accuracy": r["report"].mean_accuracy, "class_dis": r["class_dis"], "drop": 0.0})
    base = {(r["pair"], r["model"]): r["accuracy"] for r in table if r["combo"] == 0}
    for r in table:
        r["drop"] = 0.0 if r["combo"] == 0 else base[(r["pair"], r["model"])] - r["accuracy"]
    return AblationTable(table)
