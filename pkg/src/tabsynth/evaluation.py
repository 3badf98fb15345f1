"""Synthetic-data quality metrics and report emission.

Likelihood fitness: mean per-row log-likelihood of synthetic data under an
independent per-column density model fitted to the real table (mixture for
continuous columns, Laplace-smoothed frequencies for discrete ones), split
into validation (5-fold averaged) and test scores.

Machine-learning efficacy: front-end models trained on synthetic rows and
scored on held-out real rows, against the same models trained on real rows.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import AdaBoostClassifier
from sklearn.linear_model import LinearRegression
from sklearn.metrics import f1_score, r2_score
from sklearn.neural_network import MLPClassifier, MLPRegressor
from sklearn.tree import DecisionTreeClassifier

from .schema import NULL_TOKEN, RawTable, TableSchema
from .transform import ColumnVGM, fit_vgm

REPORT_FORMAT_VERSION = 1
LAPLACE_ALPHA = 1.0


@dataclass(frozen=True)
class FitnessResult:
    l_val: float
    l_test: float
    model_descriptor: str


@dataclass(frozen=True)
class EfficacyResult:
    task: str  # classification | regression
    per_frontend: dict
    aggregate: float
    ground_truth_per_frontend: dict
    ground_truth_aggregate: float


class ColumnDensityModel:
    """Independent per-column density fitted to the real table."""

    def __init__(self, real: RawTable, modes: int, seed: int):
        self.schema = real.schema
        self.vgms: dict[str, ColumnVGM] = {}
        self.medians: dict[str, float] = {}
        self.log_freqs: dict[str, dict] = {}
        for i, col in enumerate(real.schema.columns):
            values = [v for v in real.column_values(col.name) if v is not None]
            if col.is_discrete:
                vocab = list(col.categories)
                if col.nullable and NULL_TOKEN not in vocab:
                    vocab.append(NULL_TOKEN)
                counts = {cat: LAPLACE_ALPHA for cat in vocab}
                for v in real.column_values(col.name):
                    counts[NULL_TOKEN if v is None else v] = counts.get(
                        NULL_TOKEN if v is None else v, LAPLACE_ALPHA
                    ) + 1
                total = sum(counts.values())
                self.log_freqs[col.name] = {cat: np.log(c / total) for cat, c in counts.items()}
            else:
                if not values:
                    raise ValueError(f"column {col.name!r} has no non-null values")
                self.medians[col.name] = float(statistics.median(values))
                self.vgms[col.name] = fit_vgm(values, modes=modes, seed=seed + i)

    def column_log_likelihood(self, name: str, value) -> float:
        col = self.schema.column(name)
        if col.is_discrete:
            key = NULL_TOKEN if value is None else value
            freqs = self.log_freqs[name]
            if key not in freqs:
                raise ValueError(f"category {value!r} absent from schema vocabulary of {name!r}")
            return float(freqs[key])
        v = self.medians[name] if value is None else float(value)
        vgm = self.vgms[name]
        act = vgm.active
        z = (v - vgm.means[act]) / vgm.stds[act]
        log_comp = (
            np.log(np.maximum(vgm.weights[act], 1e-300))
            - 0.5 * z * z
            - np.log(vgm.stds[act])
            - 0.5 * np.log(2 * np.pi)
        )
        m = log_comp.max()
        return float(m + np.log(np.exp(log_comp - m).sum()))

    def row_log_likelihood(self, row) -> float:
        return sum(
            self.column_log_likelihood(c.name, v) for c, v in zip(self.schema.columns, row)
        )

    def mean_log_likelihood(self, rows) -> float:
        return float(np.mean([self.row_log_likelihood(r) for r in rows]))


def likelihood_fitness(
    real: RawTable,
    synth: RawTable,
    modes: int = 10,
    seed: int = 0,
    val_ratio: float = 0.7,
    folds: int = 5,
) -> FitnessResult:
    """Score synthetic rows under the real-data density model; the validation
    split is scored in `folds` folds and averaged, test in one piece."""
    if [c.name for c in real.schema.columns] != [c.name for c in synth.schema.columns]:
        raise ValueError("schema mismatch between real and synthetic tables")
    model = ColumnDensityModel(real, modes=modes, seed=seed)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(synth.rows))
    n_val = int(round(val_ratio * len(order)))
    val_rows = [synth.rows[i] for i in order[:n_val]]
    test_rows = [synth.rows[i] for i in order[n_val:]]
    fold_scores = []
    for fold in np.array_split(np.arange(len(val_rows)), folds):
        if len(fold):
            fold_scores.append(model.mean_log_likelihood([val_rows[i] for i in fold]))
    return FitnessResult(
        l_val=float(np.mean(fold_scores)),
        l_test=model.mean_log_likelihood(test_rows) if test_rows else float("nan"),
        model_descriptor=f"per-column mixture({modes}) + laplace({LAPLACE_ALPHA:g})",
    )


class FeatureEncoder:
    """Fixed feature map for front-end models: standardized continuous columns
    (real-train statistics) plus schema-vocabulary one-hots."""

    def __init__(self, schema: TableSchema, train_rows, target: str):
        self.schema = schema
        self.target = target
        self.columns = [c for c in schema.columns if c.name != target]
        self.stats = {}
        for c in self.columns:
            if not c.is_discrete:
                idx = [col.name for col in schema.columns].index(c.name)
                vals = [r[idx] for r in train_rows if r[idx] is not None]
                mu = float(np.mean(vals)) if vals else 0.0
                sd = float(np.std(vals)) if vals else 1.0
                self.stats[c.name] = (mu, sd if sd > 0 else 1.0)

    def transform(self, rows) -> np.ndarray:
        names = [c.name for c in self.schema.columns]
        out = []
        for r in rows:
            feats = []
            for c in self.columns:
                v = r[names.index(c.name)]
                if c.is_discrete:
                    onehot = [0.0] * (len(c.categories) + 1)
                    if v is None:
                        onehot[-1] = 1.0
                    else:
                        onehot[c.categories.index(v)] = 1.0
                    feats.extend(onehot)
                else:
                    mu, sd = self.stats[c.name]
                    v = mu if v is None else float(v)
                    feats.append((v - mu) / sd)
            out.append(feats)
        return np.asarray(out)

    def targets(self, rows):
        idx = [c.name for c in self.schema.columns].index(self.target)
        return [r[idx] for r in rows]


def _classification_suite(seed: int):
    return {
        "boosted_stumps_50": AdaBoostClassifier(n_estimators=50, random_state=seed),
        "tree_depth_30": DecisionTreeClassifier(max_depth=30, random_state=seed),
        "mlp_40": MLPClassifier(hidden_layer_sizes=(40,), random_state=seed, max_iter=300),
    }


def _regression_suite(seed: int):
    return {
        "linear": LinearRegression(),
        "mlp_100": MLPRegressor(hidden_layer_sizes=(100,), random_state=seed, max_iter=500),
    }


def ml_efficacy(
    real: RawTable,
    synth: RawTable,
    target: str,
    task: str,
    seed: int = 0,
    test_ratio: float = 0.3,
    frontends=None,
) -> EfficacyResult:
    """Train-on-synthetic, test-on-real protocol. Ground truth trains the same
    front-ends on the real training split with identical seeds."""
    if task not in ("classification", "regression"):
        raise ValueError(f"unknown task {task!r}")
    names = [c.name for c in real.schema.columns]
    if target not in names:
        raise ValueError(f"target column {target!r} missing")
    t_idx = names.index(target)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(real.rows))
    n_test = int(round(test_ratio * len(order)))
    test_rows = [real.rows[i] for i in order[:n_test]]
    train_rows = [real.rows[i] for i in order[n_test:]]
    synth_rows = [r for r in synth.rows if r[t_idx] is not None]
    test_rows = [r for r in test_rows if r[t_idx] is not None]
    train_rows = [r for r in train_rows if r[t_idx] is not None]
    if len(set(r[t_idx] for r in train_rows)) < 2:
        raise ValueError(f"target column {target!r} is constant in the real training split")

    enc = FeatureEncoder(real.schema, train_rows, target)
    suites = _classification_suite if task == "classification" else _regression_suite
    if frontends is not None:
        all_models = suites(seed)
        models = {k: all_models[k] for k in frontends}
    else:
        models = suites(seed)
    metric = (
        (lambda y, p: f1_score(y, p, average="macro"))
        if task == "classification"
        else r2_score
    )

    x_test, y_test = enc.transform(test_rows), enc.targets(test_rows)

    def fit_score(rows):
        scores = {}
        x, y = enc.transform(rows), enc.targets(rows)
        for name, proto in suites(seed).items():
            if name not in models:
                continue
            proto.fit(x, y)
            scores[name] = float(metric(y_test, proto.predict(x_test)))
        return scores

    synth_scores = fit_score(synth_rows)
    truth_scores = fit_score(train_rows)
    return EfficacyResult(
        task=task,
        per_frontend=synth_scores,
        aggregate=float(np.mean(list(synth_scores.values()))),
        ground_truth_per_frontend=truth_scores,
        ground_truth_aggregate=float(np.mean(list(truth_scores.values()))),
    )


# -- reporting ------------------------------------------------------------


def build_report(entries: dict) -> dict:
    """entries: dataset name -> {'fitness': FitnessResult?, 'efficacy': EfficacyResult?}"""
    if not entries:
        raise ValueError("no results to report")
    datasets = {}
    for name, parts in entries.items():
        d = {}
        fit = parts.get("fitness")
        if fit is not None:
            d["fitness"] = {
                "l_val": fit.l_val,
                "l_test": fit.l_test,
                "model_descriptor": fit.model_descriptor,
            }
        eff = parts.get("efficacy")
        if eff is not None:
            d["efficacy"] = {
                "task": eff.task,
                "per_frontend": eff.per_frontend,
                "aggregate": eff.aggregate,
                "ground_truth_per_frontend": eff.ground_truth_per_frontend,
                "ground_truth_aggregate": eff.ground_truth_aggregate,
            }
        datasets[name] = d
    return {"format_version": REPORT_FORMAT_VERSION, "datasets": datasets}


def emit_report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def parse_report_json(text: str) -> dict:
    doc = json.loads(text)
    if doc.get("format_version") != REPORT_FORMAT_VERSION:
        raise ValueError("unsupported report format")
    return doc


def render_report_text(report: dict) -> str:
    """Aligned plain-text table: one row per dataset with L_val, L_test, and
    the task metric (F1 or R2) alongside its real-data ground truth."""
    headers = ["dataset", "L_val", "L_test", "F1", "R2", "ground_truth"]
    rows = []
    for name, d in sorted(report["datasets"].items()):
        fit = d.get("fitness", {})
        eff = d.get("efficacy", {})
        f1 = r2 = gt = ""
        if eff:
            score = f"{eff['aggregate']:.3f}"
            gt = f"{eff['ground_truth_aggregate']:.3f}"
            if eff["task"] == "classification":
                f1 = score
            else:
                r2 = score
        rows.append(
            [
                name,
                f"{fit['l_val']:.3f}" if fit else "",
                f"{fit['l_test']:.3f}" if fit else "",
                f1,
                r2,
                gt,
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*headers), fmt.format(*["-" * w for w in widths])]
    lines.extend(fmt.format(*r) for r in rows)
    return "\n".join(lines) + "\n"


def render_report_csv(report: dict) -> str:
    lines = ["dataset,l_val,l_test,f1,r2,ground_truth"]
    for name, d in sorted(report["datasets"].items()):
        fit = d.get("fitness", {})
        eff = d.get("efficacy", {})
        f1 = r2 = gt = ""
        if eff:
            gt = repr(eff["ground_truth_aggregate"])
            if eff["task"] == "classification":
                f1 = repr(eff["aggregate"])
            else:
                r2 = repr(eff["aggregate"])
        lines.append(
            ",".join(
                [
                    name,
                    repr(fit["l_val"]) if fit else "",
                    repr(fit["l_test"]) if fit else "",
                    f1,
                    r2,
                    gt,
                ]
            )
        )
    return "\n".join(lines) + "\n"
