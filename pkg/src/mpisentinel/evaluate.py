"""Evaluation harness: stratified k-fold cross-validation, the benchmark
metric suite, Intra/Mix/Cross scenarios for both backends, and the
excluded-label ablation protocol.

The positive class is Incorrect throughout (a true positive is a detected
error).  Fold counts are aggregated by summing before metrics are computed;
degenerate denominators surface as null metrics, never silent 0 or 1.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import embed as embed_mod
from . import gnn as gnn_mod
from . import graph as graph_mod
from . import ircore, tabular
from .corpus import CORRECT, CorpusSample, Manifest

INCORRECT = "Incorrect"
BINARY_SPACE = [CORRECT, INCORRECT]


class TooFewSamples(Exception):
    pass


class LengthMismatch(Exception):
    pass


class SuiteMissing(Exception):
    pass


class LabelAbsent(Exception):
    pass


class InvalidScenario(Exception):
    pass


# ---------------------------------------------------------------------------
# Folds

@dataclass
class FoldPlan:
    folds: list[list[str]]  # k disjoint lists of sample ids


def make_folds(samples: list[CorpusSample], k: int, seed: int) -> FoldPlan:
    """Deterministic stratified partition: per label, ids are sorted, shuffled
    from the seed, and dealt round-robin, so each fold holds that label's
    count within +/-1."""
    if k < 2:
        raise InvalidScenario("k must be >= 2")
    if len(samples) < k:
        raise TooFewSamples(f"{len(samples)} samples cannot fill {k} folds")
    by_label: dict[str, list[str]] = {}
    for s in samples:
        by_label.setdefault(s.label, []).append(s.id)
    rng = np.random.Generator(np.random.PCG64(seed))
    folds: list[list[str]] = [[] for _ in range(k)]
    offset = 0
    for label in sorted(by_label):
        ids = sorted(by_label[label])
        perm = rng.permutation(len(ids))
        for j, p in enumerate(perm):
            folds[(j + offset) % k].append(ids[p])
        offset += len(ids)
    return FoldPlan([sorted(f) for f in folds])


def to_binary(label: str) -> str:
    return CORRECT if label == CORRECT else INCORRECT


# ---------------------------------------------------------------------------
# Metrics

@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    ce: int = 0
    to: int = 0
    re: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def errors(self) -> int:
        return self.ce + self.to + self.re

    def add(self, other: "ConfusionCounts"):
        for f in ("tp", "tn", "fp", "fn", "ce", "to", "re"):
            setattr(self, f, getattr(self, f) + getattr(other, f))


@dataclass
class MetricsReport:
    recall: float | None
    precision: float | None
    f1: float | None
    accuracy: float | None
    coverage: float | None
    conclusiveness: float | None
    specificity: float | None
    overall_accuracy: float | None
    counts: ConfusionCounts


def confusion(preds: list[str], truth: list[str],
              error_counts: tuple[int, int, int] = (0, 0, 0)) -> ConfusionCounts:
    if len(preds) != len(truth):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truth)} truths")
    c = ConfusionCounts(ce=error_counts[0], to=error_counts[1], re=error_counts[2])
    for p, t in zip(preds, truth):
        if t == INCORRECT:
            if p == INCORRECT:
                c.tp += 1
            else:
                c.fn += 1
        else:
            if p == INCORRECT:
                c.fp += 1
            else:
                c.tn += 1
    return c


def _ratio(num, den) -> float | None:
    return num / den if den > 0 else None


def metrics(counts: ConfusionCounts,
            specificity_formula: str = "ratio") -> MetricsReport:
    """The eight benchmark metrics.  specificity_formula "ratio" reports
    TN/(TN+FP) (matches the published numbers); "paper-literal" reports
    1 - TN/(TN+FP) as printed in the metric table."""
    total = counts.total
    errors = counts.errors
    recall = _ratio(counts.tp, counts.tp + counts.fn)
    precision = _ratio(counts.tp, counts.tp + counts.fp)
    f1 = None
    if recall is not None and precision is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    accuracy = _ratio(counts.tp + counts.tn, total)
    coverage = 1 - counts.ce / (total + errors) if total + errors > 0 else None
    conclusiveness = 1 - errors / (total + errors) if total + errors > 0 else None
    spec = _ratio(counts.tn, counts.tn + counts.fp)
    if spec is not None and specificity_formula == "paper-literal":
        spec = 1 - spec
    overall = _ratio(counts.tp + counts.tn, total + errors)
    return MetricsReport(recall, precision, f1, accuracy, coverage,
                         conclusiveness, spec, overall, counts)


def metrics_to_dict(report: MetricsReport) -> dict:
    doc = asdict(report)
    doc["counts"] = asdict(report.counts)
    return doc


# ---------------------------------------------------------------------------
# Scenario configuration

@dataclass
class ScenarioOptions:
    backend: str = "ir2vec-dt"            # "ir2vec-dt" | "gnn"
    label_mode: str = "binary"            # "binary" | "error-type"
    normalization: str = "vector"         # "none" | "vector" | "index"
    opt_level: str | None = None          # filter; None takes every level
    ga_enabled: bool = False
    folds: int = 10
    seed: int = 0
    embed_dim: int = 256
    weights: tuple[float, float, float] = embed_mod.DEFAULT_WEIGHTS
    ga: tabular.GaConfig = field(default_factory=tabular.GaConfig)
    gnn: gnn_mod.GnnConfig = field(default_factory=gnn_mod.GnnConfig)
    specificity_formula: str = "ratio"

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["gnn"]["layer_sizes"] = list(doc["gnn"]["layer_sizes"])
        doc["weights"] = list(doc["weights"])
        return doc


@dataclass
class Scenario:
    kind: str                              # "intra" | "mix" | "cross"
    suite: str | None = None               # intra
    train_suite: str | None = None         # cross
    validate_suite: str | None = None      # cross
    options: ScenarioOptions = field(default_factory=ScenarioOptions)

    def __post_init__(self):
        if self.kind not in ("intra", "mix", "cross"):
            raise InvalidScenario(f"unknown scenario kind {self.kind!r}")
        if self.kind == "intra" and not self.suite:
            raise InvalidScenario("intra scenario needs a suite")
        if self.kind == "cross":
            if not (self.train_suite and self.validate_suite):
                raise InvalidScenario("cross scenario needs train and validate suites")
            if self.options.label_mode != "binary":
                raise InvalidScenario(
                    "cross scenarios support binary labels only: the suites "
                    "use different error-type label families")


# ---------------------------------------------------------------------------
# Backends

class _DtBackend:
    """Embedding + normalization (+ optional GA) + decision tree."""

    def __init__(self, options: ScenarioOptions, modules: dict[str, ircore.IrModule]):
        self.options = options
        vocab = embed_mod.SeedVocab(options.seed, options.embed_dim)
        self.raw: dict[str, np.ndarray] = {}
        self.failed: dict[str, str] = {}
        for sid, module in modules.items():
            try:
                self.raw[sid] = embed_mod.embed(
                    module, vocab, options.weights, source_id=sid).values
            except Exception as exc:  # propagated per sample as RE
                self.failed[sid] = str(exc)

    def train_fold(self, train_ids, labels_by_id, label_space, fold_seed: int):
        rows = [i for i in train_ids if i in self.raw]
        x = np.vstack([self.raw[i] for i in rows])
        scaler = None
        if self.options.normalization == "index":
            scaler = embed_mod.fit_index_scaler(x)
            x = embed_mod.normalize(x, scaler)
        else:
            x = embed_mod.normalize(x, self.options.normalization)
        subset = None
        data = tabular.LabeledVectors(x, [labels_by_id[i] for i in rows], label_space)
        if self.options.ga_enabled:
            ga_cfg = tabular.GaConfig(**{**asdict(self.options.ga),
                                         "rng_seed": fold_seed})
            subset = tabular.ga_select(data, ga_cfg)
            data = data.restrict(subset.indices)
        tree = tabular.train_tree(data)
        return _DtFoldModel(self, tree, scaler, subset)


class _DtFoldModel:
    def __init__(self, backend: _DtBackend, tree, scaler, subset):
        self.backend = backend
        self.tree = tree
        self.scaler = scaler
        self.subset = subset

    def predict(self, sample_id: str) -> str:
        if sample_id in self.backend.failed:
            raise RuntimeError(self.backend.failed[sample_id])
        row = self.backend.raw[sample_id]
        if self.scaler is not None:
            row = embed_mod.normalize(row, self.scaler)
        else:
            row = embed_mod.normalize(row, self.backend.options.normalization)
        if self.subset is not None:
            row = row[list(self.subset.indices)]
        return tabular.predict_tree(self.tree, row)


class _GnnBackend:
    def __init__(self, options: ScenarioOptions, modules: dict[str, ircore.IrModule]):
        self.options = options
        self.graphs: dict[str, graph_mod.ProgramGraph] = {}
        self.failed: dict[str, str] = {}
        for sid, module in modules.items():
            try:
                g = graph_mod.build_graph(module)
                if not g.nodes:
                    raise gnn_mod.EmptyGraph(f"{sid}: module produced no nodes")
                self.graphs[sid] = g
            except Exception as exc:
                self.failed[sid] = str(exc)

    def train_fold(self, train_ids, labels_by_id, label_space, fold_seed: int):
        ids = [i for i in train_ids if i in self.graphs]
        cfg_doc = asdict(self.options.gnn)
        cfg_doc.update(rng_seed=fold_seed, num_classes=len(label_space))
        cfg_doc["layer_sizes"] = tuple(cfg_doc["layer_sizes"])
        cfg = gnn_mod.GnnConfig(**cfg_doc)
        vocab = gnn_mod.build_vocab([self.graphs[i] for i in ids])
        model = gnn_mod.init_model(cfg, vocab, list(label_space))
        model, _ = gnn_mod.train(
            model, [(self.graphs[i], labels_by_id[i]) for i in ids], cfg)
        return _GnnFoldModel(self, model)


class _GnnFoldModel:
    def __init__(self, backend: _GnnBackend, model):
        self.backend = backend
        self.model = model

    def predict(self, sample_id: str) -> str:
        if sample_id in self.backend.failed:
            raise RuntimeError(self.backend.failed[sample_id])
        return gnn_mod.predict_gnn(self.model, self.backend.graphs[sample_id])


def _load_modules(samples: list[CorpusSample]) -> tuple[dict, dict]:
    modules: dict[str, ircore.IrModule] = {}
    failures: dict[str, str] = {}
    for s in samples:
        try:
            modules[s.id] = ircore.parse_ir(Path(s.ir_path).read_text(), s.id)
        except Exception as exc:
            failures[s.id] = str(exc)
    return modules, failures


def _make_backend(options: ScenarioOptions, samples: list[CorpusSample]):
    modules, parse_failures = _load_modules(samples)
    if options.backend == "ir2vec-dt":
        backend = _DtBackend(options, modules)
    elif options.backend == "gnn":
        backend = _GnnBackend(options, modules)
    else:
        raise InvalidScenario(f"unknown backend {options.backend!r}")
    backend.failed.update(parse_failures)
    return backend


# ---------------------------------------------------------------------------
# Scenario runner

def _scope_samples(manifest: Manifest, scenario: Scenario) -> list[CorpusSample]:
    opts = scenario.options
    suites_present = {s.suite for s in manifest.samples}
    wanted: set[str]
    if scenario.kind == "intra":
        wanted = {scenario.suite}
    elif scenario.kind == "mix":
        wanted = {"MBI", "CorrBench"} & suites_present
        if not wanted:
            raise SuiteMissing("manifest has no MBI or CorrBench samples")
    else:
        wanted = {scenario.train_suite, scenario.validate_suite}
    missing = wanted - suites_present
    if missing:
        raise SuiteMissing(f"manifest lacks suites: {sorted(missing)}")
    selected = [s for s in manifest.samples if s.suite in wanted]
    if opts.opt_level:
        selected = [s for s in selected if s.opt_level == opts.opt_level]
    return selected


def _label_for_mode(sample: CorpusSample, mode: str) -> str:
    return to_binary(sample.label) if mode == "binary" else sample.label


def run_scenario(manifest: Manifest, scenario: Scenario, jobs: int = 1) -> dict:
    """Full protocol run; returns the (JSON-serializable) scenario report.

    Folds are independent; jobs > 1 evaluates them on a worker pool.  Results
    are merged in fold order so the report is identical either way.
    """
    opts = scenario.options
    scope = _scope_samples(manifest, scenario)
    evaluable = [s for s in scope if not s.quarantined and s.compile_status == "ok"]
    ce_count = sum(1 for s in scope
                   if not s.quarantined and s.compile_status == "compile-error")
    by_id = {s.id: s for s in evaluable}
    labels_by_id = {s.id: _label_for_mode(s, opts.label_mode) for s in evaluable}
    if opts.label_mode == "binary":
        label_space = list(BINARY_SPACE)
    else:
        label_space = sorted({s.label for s in evaluable})

    backend = _make_backend(opts, evaluable)

    def evaluate_fold(fold_index, train_ids, val_ids, fold_seed):
        model = backend.train_fold(train_ids, labels_by_id, label_space, fold_seed)
        preds, truths = [], []
        fold_re = []
        label_hits: list[tuple[str, int]] = []
        for sid in val_ids:
            truth = labels_by_id[sid]
            try:
                pred = model.predict(sid)
            except Exception:
                fold_re.append(sid)
                continue
            preds.append(to_binary(pred) if opts.label_mode == "error-type"
                         else pred)
            truths.append(to_binary(truth) if opts.label_mode == "error-type"
                          else truth)
            label_hits.append((by_id[sid].label, int(pred == truth)))
        counts = confusion(preds, truths, (0, 0, len(fold_re)))
        entry = {
            "fold": fold_index,
            "train_ids": sorted(train_ids),
            "validation_ids": sorted(val_ids),
            "seed": fold_seed,
            "counts": asdict(counts),
            "metrics": metrics_to_dict(metrics(counts, opts.specificity_formula)),
        }
        if isinstance(model, _DtFoldModel):
            if model.subset is not None:
                entry["ga_subset"] = list(model.subset.indices)
                entry["ga_fitness"] = model.subset.fitness
            if model.scaler is not None:
                entry["index_scaler"] = {"mins": model.scaler.mins.tolist(),
                                         "maxs": model.scaler.maxs.tolist()}
        return counts, entry, label_hits, fold_re

    fold_args = []
    if scenario.kind in ("intra", "mix"):
        plan = make_folds(evaluable, opts.folds, opts.seed)
        for fi, fold in enumerate(plan.folds):
            train_ids = [s.id for s in evaluable if s.id not in set(fold)]
            fold_args.append((fi, train_ids, list(fold), opts.seed + fi))
    else:
        train_ids = [s.id for s in evaluable if s.suite == scenario.train_suite]
        val_ids = [s.id for s in evaluable if s.suite == scenario.validate_suite]
        if not train_ids or not val_ids:
            raise SuiteMissing("cross scenario needs samples in both suites")
        fold_args.append((0, train_ids, val_ids, opts.seed))

    if jobs > 1 and len(fold_args) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            fold_results = list(pool.map(lambda a: evaluate_fold(*a), fold_args))
    else:
        fold_results = [evaluate_fold(*a) for a in fold_args]

    aggregate = ConfusionCounts(ce=ce_count)
    per_label_hits: dict[str, list[int]] = {}
    re_samples: list[str] = []
    for counts, _, label_hits, fold_re in fold_results:
        aggregate.add(counts)
        for lab, hit in label_hits:
            per_label_hits.setdefault(lab, []).append(hit)
        re_samples.extend(fold_re)

    per_label = {}
    for s in evaluable:
        lab = s.label
        hits = per_label_hits.get(lab)
        per_label[lab] = (sum(hits) / len(hits)) if hits else None

    report = {
        "report_version": 1,
        "scenario": {
            "kind": scenario.kind, "suite": scenario.suite,
            "train_suite": scenario.train_suite,
            "validate_suite": scenario.validate_suite,
        },
        "options": opts.to_dict(),
        "provenance": {
            "tool": "mpisentinel",
            "samples_in_scope": len(scope),
            "evaluable": len(evaluable),
            "quarantined": sum(1 for s in scope if s.quarantined),
            "stratified_folds": True,
            "seed_vocabulary": "deterministic hash-seeded token vectors",
            "manifest_provenance": manifest.provenance,
        },
        "folds": [entry for _, entry, _, _ in fold_results],
        "aggregate": {
            "counts": asdict(aggregate),
            "metrics": metrics_to_dict(metrics(aggregate, opts.specificity_formula)),
        },
        "per_label_accuracy": per_label,
        "failures": {"compile_errors": ce_count, "runtime_errors": sorted(re_samples)},
    }
    return report


# ---------------------------------------------------------------------------
# Ablation

def ablation_fold_plan(evaluable: list[CorpusSample], excluded: set[str],
                       k: int, seed: int) -> list[tuple[list[str], list[str]]]:
    """(train_ids, validation_ids) per fold with every excluded-label sample
    removed from the training side and kept for validation."""
    plan = make_folds(evaluable, k, seed)
    excluded_ids = {s.id for s in evaluable if s.label in excluded}
    out = []
    for fold in plan.folds:
        in_fold = set(fold)
        train = [s.id for s in evaluable
                 if s.id not in in_fold and s.id not in excluded_ids]
        out.append((train, list(fold)))
    return out


def ablation(manifest: Manifest, excluded: set[str], options: ScenarioOptions,
             suite: str | None = None, jobs: int = 1) -> dict:
    """Excluded-label protocol: binary training without the excluded labels;
    reported accuracy per label = excluded-label samples predicted Incorrect
    over that label's total."""
    if not 1 <= len(excluded) <= 2:
        raise InvalidScenario("exclude one or two labels")
    if CORRECT in excluded:
        raise InvalidScenario("the correct label cannot be excluded")
    samples = [s for s in manifest.samples
               if not s.quarantined and s.compile_status == "ok"]
    if suite:
        samples = [s for s in samples if s.suite == suite]
    present = {s.label for s in samples}
    for lab in excluded:
        if lab not in present:
            raise LabelAbsent(lab)
    labels_by_id = {s.id: to_binary(s.label) for s in samples}
    orig_label = {s.id: s.label for s in samples}
    backend = _make_backend(options, samples)
    plan = ablation_fold_plan(samples, excluded, options.folds, options.seed)

    def run_fold(fi, train_ids, val_ids):
        leaked = [i for i in train_ids if orig_label[i] in excluded]
        if leaked:
            raise AssertionError(
                f"excluded-label samples leaked into training fold {fi}: {leaked}")
        model = backend.train_fold(train_ids, labels_by_id, BINARY_SPACE,
                                   options.seed + fi)
        fold_hits = []
        for sid in val_ids:
            lab = orig_label[sid]
            if lab not in excluded:
                continue
            try:
                pred = model.predict(sid)
            except Exception:
                continue
            fold_hits.append((lab, pred == INCORRECT))
        doc = {"fold": fi, "train_size": len(train_ids),
               "excluded_in_train": 0, "validation_ids": sorted(val_ids)}
        return doc, fold_hits

    args = [(fi, train, val) for fi, (train, val) in enumerate(plan)]
    if jobs > 1 and len(args) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda a: run_fold(*a), args))
    else:
        results = [run_fold(*a) for a in args]

    hits = {lab: [0, 0] for lab in excluded}
    fold_docs = []
    for doc, fold_hits in results:
        fold_docs.append(doc)
        for lab, detected in fold_hits:
            hits[lab][1] += 1
            hits[lab][0] += int(detected)
    return {
        "report_version": 1,
        "excluded": sorted(excluded),
        "options": options.to_dict(),
        "accuracy": {lab: (h[0] / h[1] if h[1] else None)
                     for lab, h in hits.items()},
        "sample_counts": {lab: h[1] for lab, h in hits.items()},
        "folds": fold_docs,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: dict) -> str:
    """Flat per-fold rows plus the aggregate, for plotting."""
    cols = ("recall", "precision", "f1", "accuracy", "coverage",
            "conclusiveness", "specificity", "overall_accuracy")
    count_cols = ("tp", "tn", "fp", "fn", "ce", "to", "re")
    lines = ["row," + ",".join(count_cols) + "," + ",".join(cols)]

    def fmt(metrics_doc, counts_doc, tag):
        vals = [str(counts_doc[c]) for c in count_cols]
        vals += ["" if metrics_doc[c] is None else repr(metrics_doc[c])
                 for c in cols]
        return f"{tag}," + ",".join(vals)

    for fold in report["folds"]:
        lines.append(fmt(fold["metrics"], fold["counts"], f"fold{fold['fold']}"))
    lines.append(fmt(report["aggregate"]["metrics"],
                     report["aggregate"]["counts"], "aggregate"))
    return "\n".join(lines) + "\n"
