"""Mixture-based encoding of mixed tables.

Continuous columns get mode-specific normalization backed by a variational
Gaussian mixture with a fairness reweighting that lifts low-weight modes.
Discrete and binary columns get one-hot spans. The whole transform is
invertible (up to clamping) so generator output can be decoded back to rows.
"""

from __future__ import annotations

import json
import statistics
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.mixture import BayesianGaussianMixture

from .schema import (
    NULL_TOKEN,
    RawTable,
    RecordLayout,
    TableSchema,
    build_layout,
    validate_table,
)

DEFAULT_MODES = 10
DEFAULT_FAIRNESS_SCALE = 0.5
WEIGHT_FLOOR = 1e-4
ACTIVE_MASS_THRESHOLD = 1e-3
SIGMA_FLOOR_RATIO = 1e-4
TRANSFORMER_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ColumnVGM:
    """Fitted per-column mixture: raw EM parameters plus fairness-adjusted weights."""

    weights: np.ndarray        # fairness-reweighted, on the simplex; drives encoding
    em_weights: np.ndarray     # fitted variational weights before reweighting
    means: np.ndarray
    stds: np.ndarray
    active: np.ndarray         # bool mask over the requested mode slots
    fairness_scale: float
    modes_requested: int

    @property
    def modes_active(self) -> int:
        return int(self.active.sum())

    def check(self) -> None:
        assert abs(self.weights.sum() - 1.0) <= 1e-9
        assert (self.stds > 0).all()
        assert self.modes_active <= self.modes_requested


def _fairness_reweight(weights: np.ndarray, s: float, rng: np.random.Generator) -> np.ndarray:
    """Lift fitted mixture weights by |N(0, s)| noise so small modes survive,
    then renormalize onto the simplex with a floor on every active weight."""
    lift = np.abs(rng.normal(0.0, np.sqrt(s), size=weights.shape))
    w = weights + lift
    w = w / w.sum()
    # floor-preserving simplex projection: min >= WEIGHT_FLOOR, sum == 1
    excess = np.maximum(w - WEIGHT_FLOOR, 0.0)
    budget = 1.0 - WEIGHT_FLOOR * w.size
    return WEIGHT_FLOOR + excess * (budget / excess.sum())


def fit_vgm(
    column_values,
    modes: int = DEFAULT_MODES,
    fairness_scale: float = DEFAULT_FAIRNESS_SCALE,
    seed: int = 0,
) -> ColumnVGM:
    """Fit up to `modes` Gaussian components by variational EM, then apply the
    fairness reweighting. Deterministic given (values, modes, scale, seed)."""
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if fairness_scale <= 0:
        raise ValueError("fairness_scale must be > 0")
    values = np.asarray([v for v in column_values if v is not None], dtype=float)
    if values.size == 0:
        raise ValueError("empty column")

    col_std = float(values.std())
    sigma_floor = SIGMA_FLOOR_RATIO * (col_std if col_std > 0 else 1.0)
    rng = np.random.default_rng(seed)

    if np.unique(values).size == 1:
        weights = np.zeros(modes)
        weights[0] = 1.0
        means = np.full(modes, values[0])
        stds = np.full(modes, sigma_floor)
        active = np.zeros(modes, dtype=bool)
        active[0] = True
        return ColumnVGM(
            weights=_fairness_reweight_single_active(weights, active),
            em_weights=_fairness_reweight_single_active(weights, active),
            means=means,
            stds=stds,
            active=active,
            fairness_scale=fairness_scale,
            modes_requested=modes,
        )

    gm = BayesianGaussianMixture(
        n_components=modes,
        weight_concentration_prior_type="dirichlet_process",
        weight_concentration_prior=1e-3 / modes,
        max_iter=200,
        tol=1e-5,
        n_init=1,
        init_params="k-means++",
        random_state=seed,
    )
    with warnings.catch_warnings():
        # 200 iterations is a deliberate budget; partial convergence is fine
        warnings.simplefilter("ignore", ConvergenceWarning)
        gm.fit(values.reshape(-1, 1))

    means = gm.means_.ravel().copy()
    stds = np.sqrt(gm.covariances_.ravel())
    stds = np.maximum(stds, sigma_floor)

    # Posterior responsibility mass decides which components stay addressable.
    resp_mass = gm.predict_proba(values.reshape(-1, 1)).mean(axis=0)
    active = resp_mass > ACTIVE_MASS_THRESHOLD
    if not active.any():
        active[int(np.argmax(resp_mass))] = True

    base = np.where(active, gm.weights_, 0.0)
    base = base / base.sum()
    reweighted = np.zeros(modes)
    reweighted[active] = _fairness_reweight(base[active], fairness_scale, rng)

    em_weights = base
    vgm = ColumnVGM(
        weights=reweighted,
        em_weights=em_weights,
        means=means,
        stds=stds,
        active=active,
        fairness_scale=fairness_scale,
        modes_requested=modes,
    )
    vgm.check()
    return vgm


def _fairness_reweight_single_active(weights: np.ndarray, active: np.ndarray) -> np.ndarray:
    out = np.zeros_like(weights)
    out[active] = 1.0
    return out


def _responsibilities(value: float, vgm: ColumnVGM) -> np.ndarray:
    """Fairness-adjusted posterior over active modes for one value."""
    w = vgm.weights
    log_dens = np.full(w.shape, -np.inf)
    act = vgm.active
    z = (value - vgm.means[act]) / vgm.stds[act]
    log_dens[act] = -0.5 * z * z - np.log(vgm.stds[act])
    log_post = np.where(act, np.log(np.maximum(w, 1e-300)) + log_dens, -np.inf)
    log_post -= log_post.max()
    post = np.exp(log_post)
    return post / post.sum()


def encode_continuous(value: float, vgm: ColumnVGM, rng: np.random.Generator):
    """Sample a mode from the posterior of `value`, return the mode-normalized
    scalar (clamped to [-1, 1]) and a hard one-hot mode indicator."""
    if not np.isfinite(value):
        raise ValueError(f"non-finite continuous value {value!r}")
    post = _responsibilities(float(value), vgm)
    mode = int(rng.choice(post.size, p=post))
    scalar = (value - vgm.means[mode]) / (4.0 * vgm.stds[mode])
    scalar = float(np.clip(scalar, -1.0, 1.0))
    onehot = np.zeros(vgm.modes_requested)
    onehot[mode] = 1.0
    return scalar, onehot


def decode_continuous(scalar: float, mode_onehot, vgm: ColumnVGM) -> float:
    """Invert mode-specific normalization; soft indicators decode via argmax."""
    indicator = np.asarray(mode_onehot, dtype=float)
    if not (indicator > 0).any():
        raise ValueError("no mode selected")
    mode = int(np.argmax(indicator))
    return float(vgm.means[mode] + 4.0 * vgm.stds[mode] * scalar)


@dataclass(frozen=True)
class FittedTransformer:
    """Complete encoding state for one table: layout, per-column VGMs, category maps."""

    schema: TableSchema
    layout: RecordLayout
    vgms: dict  # continuous column name -> ColumnVGM
    category_maps: dict  # discrete column name -> {category: index}
    medians: dict  # continuous column name -> imputation value
    rng_seed: int

    def category_of(self, column: str, index: int) -> str:
        cats = self.schema.column(column).categories
        return cats[index]

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        def fmt(x: float) -> str:
            return f"{x:.17g}"

        doc = {
            "format_version": TRANSFORMER_FORMAT_VERSION,
            "rng_seed": self.rng_seed,
            "modes": self.layout.modes,
            "schema": self.schema.to_dict(),
            "continuous": {
                name: {
                    "weights": [fmt(v) for v in vgm.weights],
                    "em_weights": [fmt(v) for v in vgm.em_weights],
                    "means": [fmt(v) for v in vgm.means],
                    "stds": [fmt(v) for v in vgm.stds],
                    "active": [bool(a) for a in vgm.active],
                    "fairness_scale": fmt(vgm.fairness_scale),
                    "modes_requested": vgm.modes_requested,
                    "median": fmt(self.medians[name]),
                }
                for name, vgm in self.vgms.items()
            },
            "discrete": {name: dict(m) for name, m in self.category_maps.items()},
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FittedTransformer":
        doc = json.loads(text)
        if doc["format_version"] != TRANSFORMER_FORMAT_VERSION:
            raise ValueError(f"unsupported transformer format {doc['format_version']}")
        schema = TableSchema.from_dict(doc["schema"])
        layout = build_layout(schema, doc["modes"])
        vgms = {}
        medians = {}
        for name, d in doc["continuous"].items():
            vgms[name] = ColumnVGM(
                weights=np.array([float(v) for v in d["weights"]]),
                em_weights=np.array([float(v) for v in d["em_weights"]]),
                means=np.array([float(v) for v in d["means"]]),
                stds=np.array([float(v) for v in d["stds"]]),
                active=np.array(d["active"], dtype=bool),
                fairness_scale=float(d["fairness_scale"]),
                modes_requested=d["modes_requested"],
            )
            medians[name] = float(d["median"])
        category_maps = {name: {k: int(v) for k, v in m.items()} for name, m in doc["discrete"].items()}
        return cls(
            schema=schema,
            layout=layout,
            vgms=vgms,
            category_maps=category_maps,
            medians=medians,
            rng_seed=doc["rng_seed"],
        )


def fit_transformer(
    table: RawTable,
    modes: int = DEFAULT_MODES,
    fairness_scale: float = DEFAULT_FAIRNESS_SCALE,
    seed: int = 0,
) -> FittedTransformer:
    """Fit all per-column encoders. Nulls: median-impute continuous cells,
    explicit token category for discrete cells."""
    schema = table.schema.with_null_tokens()
    violations = validate_table(RawTable(schema=schema, rows=table.rows))
    if violations:
        raise ValueError("invalid table: " + "; ".join(str(v) for v in violations[:5]))

    layout = build_layout(schema, modes)
    vgms = {}
    medians = {}
    for i, col in enumerate(schema.continuous_columns):
        values = [v for v in table.column_values(col.name) if v is not None]
        if not values:
            raise ValueError(f"column {col.name!r} has no non-null values")
        medians[col.name] = float(statistics.median(values))
        vgms[col.name] = fit_vgm(values, modes=modes, fairness_scale=fairness_scale, seed=seed + i)
    category_maps = {
        col.name: {cat: i for i, cat in enumerate(col.categories)}
        for col in schema.discrete_columns
    }
    return FittedTransformer(
        schema=schema,
        layout=layout,
        vgms=vgms,
        category_maps=category_maps,
        medians=medians,
        rng_seed=seed,
    )


def encode_record(row, transformer: FittedTransformer, rng: np.random.Generator) -> np.ndarray:
    """Fill every layout span for one row; output satisfies the one-hot invariants."""
    layout = transformer.layout
    out = np.zeros(layout.total_width)
    cells = {c.name: v for c, v in zip(transformer.schema.columns, row)}
    for span in layout.continuous_spans:
        value = cells[span.column]
        if value is None:
            value = transformer.medians[span.column]
        scalar, onehot = encode_continuous(float(value), transformer.vgms[span.column], rng)
        out[span.start] = scalar
        out[span.start + 1 : span.stop] = onehot
    for span in layout.discrete_spans:
        value = cells[span.column]
        if value is None:
            value = NULL_TOKEN
        idx = transformer.category_maps[span.column][value]
        out[span.start + idx] = 1.0
    return out


def decode_record(vector, transformer: FittedTransformer) -> list:
    """Map a (possibly soft) record vector back to a row of cell values."""
    vec = np.asarray(vector, dtype=float)
    layout = transformer.layout
    if vec.shape != (layout.total_width,):
        raise ValueError(f"expected vector of width {layout.total_width}, got {vec.shape}")
    if not np.isfinite(vec).all():
        raise ValueError("non-finite values in record vector")
    cells = {}
    for span in layout.continuous_spans:
        scalar = vec[span.start]
        onehot = vec[span.start + 1 : span.stop]
        cells[span.column] = decode_continuous(scalar, onehot, transformer.vgms[span.column])
    for span in layout.discrete_spans:
        idx = int(np.argmax(vec[span.start : span.stop]))
        cat = transformer.category_of(span.column, idx)
        cells[span.column] = None if cat == NULL_TOKEN else cat
    return [cells[c.name] for c in transformer.schema.columns]


def encode_table(table: RawTable, transformer: FittedTransformer, rng: np.random.Generator) -> np.ndarray:
    return np.stack([encode_record(row, transformer, rng) for row in table.rows])


def decode_table(matrix, transformer: FittedTransformer) -> RawTable:
    rows = [decode_record(vec, transformer) for vec in np.asarray(matrix, dtype=float)]
    return RawTable(schema=transformer.schema, rows=rows)
