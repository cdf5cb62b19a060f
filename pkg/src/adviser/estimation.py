"""Success-probability estimation and synthetic population generation.

Baseline and phone-call probabilities come from a logistic regression on
historical call data; the untested interventions carry survey-derived
constants (pickups and drives saturate at 1). Two synthetic dataset
recipes are provided: D1 samples the whole probability chain uniformly,
D2 runs the regression path on a Bernoulli-labeled feature pool.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    INCOME_LEVELS,
    ConfigError,
    FeatureVector,
    Grid,
    InputError,
    Mother,
    ProbabilityTable,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogisticConfig:
    learning_rate: float = 0.1
    max_iterations: int = 5000
    tolerance: float = 1e-7  # stop when the gradient norm drops below this
    l2: float = 1e-4


@dataclass
class LogisticModel:
    weights: np.ndarray  # one per feature, intercept last
    feature_means: np.ndarray
    feature_scales: np.ndarray
    iterations: int = 0
    final_loss: float = 0.0
    loss_trace: list[float] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.weights) - 1


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Regularized mean negative log-likelihood (intercept not penalized)."""
    z = X @ weights
    # log(1 + exp(-z*s)) computed stably
    s = 2.0 * y - 1.0
    m = -z * s
    loss = np.mean(np.logaddexp(0.0, m))
    return float(loss + 0.5 * l2 * np.sum(weights[:-1] ** 2))


def log_loss_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    p = _sigmoid(X @ weights)
    grad = X.T @ (p - y) / len(y)
    reg = l2 * weights
    reg[-1] = 0.0
    return grad + reg


def _design_matrix(features: np.ndarray, means: np.ndarray, scales: np.ndarray) -> np.ndarray:
    Xs = (features - means) / scales
    return np.hstack([Xs, np.ones((len(Xs), 1))])


def fit_logistic(rows: list[tuple[FeatureVector, bool]],
                 config: LogisticConfig = LogisticConfig()) -> LogisticModel:
    """Full-batch gradient descent on the regularized log-loss.

    Deterministic: weights start at zero and the data order does not
    matter for batch gradients.
    """
    if len(rows) < 2:
        raise InputError("need at least 2 rows to fit")
    X_raw = np.array([f.as_array() for f, _ in rows], dtype=float)
    y = np.array([1.0 if label else 0.0 for _, label in rows])
    if not np.all(np.isfinite(X_raw)):
        raise InputError("non-finite feature value")
    if len(set(y)) < 2:
        raise InputError("degenerate labels: both classes required")

    means = X_raw.mean(axis=0)
    scales = X_raw.std(axis=0)
    scales[scales == 0.0] = 1.0
    X = _design_matrix(X_raw, means, scales)

    w = np.zeros(X.shape[1])
    trace = [log_loss(w, X, y, config.l2)]
    it = 0
    for it in range(1, config.max_iterations + 1):
        g = log_loss_gradient(w, X, y, config.l2)
        if np.linalg.norm(g) < config.tolerance:
            break
        w = w - config.learning_rate * g
        trace.append(log_loss(w, X, y, config.l2))
    return LogisticModel(weights=w, feature_means=means, feature_scales=scales,
                         iterations=it, final_loss=trace[-1], loss_trace=trace)


def predict_probability(model: LogisticModel, features: FeatureVector) -> float:
    x = features.as_array()
    if len(x) != model.dim:
        raise InputError(f"feature dimension {len(x)} != model dimension {model.dim}")
    X = _design_matrix(x.reshape(1, -1), model.feature_means, model.feature_scales)
    p = float(_sigmoid(X @ model.weights)[0])
    # strictly inside (0, 1): downstream ordering clamps rely on it
    eps = 1e-12
    return min(1.0 - eps, max(eps, p))


@dataclass(frozen=True)
class SurveyConstants:
    """Community-survey values for the untested interventions.

    None for voucher/pickup means sample uniformly above the previous
    link in the chain (the D1 recipe).
    """

    voucher: float | None = None
    pickup: float | None = None
    drive: float = 1.0


def assemble_probability_table(mothers: list[Mother],
                               model_baseline: LogisticModel,
                               model_call: LogisticModel,
                               constants: SurveyConstants = SurveyConstants(),
                               rng: np.random.Generator | None = None) -> ProbabilityTable:
    """Combine model estimates and survey constants into one table.

    Model outputs are clamped so p_call >= p_none; clamp counts are
    logged because they flag a model inversion worth inspecting.
    """
    for name, val in (("voucher", constants.voucher), ("pickup", constants.pickup)):
        if val is not None and not 0.0 <= val <= 1.0:
            raise ConfigError(f"{name} constant {val} outside [0, 1]")
    if constants.voucher is not None and constants.pickup is not None:
        if not constants.voucher <= constants.pickup <= constants.drive:
            raise ConfigError("constants must satisfy voucher <= pickup <= drive")
    if (constants.voucher is None or constants.pickup is None) and rng is None:
        raise ConfigError("sampling requested (None constant) but no rng given")

    rows = {}
    clamped = 0
    for m in mothers:
        p_n = predict_probability(model_baseline, m.features)
        p_c = predict_probability(model_call, m.features)
        if p_c < p_n:
            p_c = p_n
            clamped += 1
        p_t = constants.voucher if constants.voucher is not None else float(rng.uniform(p_c, 1.0))
        p_t = max(p_t, p_c)
        p_l = constants.pickup if constants.pickup is not None else float(rng.uniform(p_t, 1.0))
        p_l = max(p_l, p_t)
        p_v = max(constants.drive, p_l)
        rows[m.id] = (p_n, p_c, p_t, p_l, p_v)
    if clamped:
        log.info("assemble_probability_table: clamped p_call up to p_none for %d mothers", clamped)
    table = ProbabilityTable(rows)
    bad = table.violations()
    if bad:
        raise ConfigError(f"assembled table violates ordering: {bad[0]}")
    return table


class Dataset(enum.Enum):
    D1 = "d1"
    D2 = "d2"


@dataclass(frozen=True)
class GeographySpec:
    """Where the synthetic population lives.

    Mothers cluster around a handful of dense blobs inside the bounding
    box, which is what city registries look like and what makes both
    vaccine drives and geographic clustering meaningful.
    """

    lat_min: float = 7.30
    lat_max: float = 7.39
    lon_min: float = 3.85
    lon_max: float = 3.94
    cell_size_km: float = 1.0
    n_blobs: int = 8
    blob_std_km: float = 0.8

    def grid(self) -> Grid:
        return Grid(self.lat_min, self.lat_max, self.lon_min, self.lon_max, self.cell_size_km)


@dataclass(frozen=True)
class SyntheticSpec:
    dataset: Dataset
    population_size: int
    seed: int
    source_pool: tuple[FeatureVector, ...]
    geography: GeographySpec = GeographySpec()
    horizon: int = 30
    elig_min_days: int = 10
    elig_max_days: int = 25
    pickup_earliest_range: tuple[int, int] = (420, 600)  # 07:00-10:00
    pickup_span_range: tuple[int, int] = (180, 360)
    # D2 label generation
    baseline_rate: float = 0.13
    call_rate: float = 0.30
    training_pool_size: int = 1000
    holdout_fraction: float = 0.2


def source_pool_from_csv(text: str) -> tuple[FeatureVector, ...]:
    """Feature pool from a mothers CSV (the plan-service upload schema);
    only the four feature columns are read."""
    import csv
    import io

    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise InputError("mothers CSV has no data rows")
    required = ("income_level", "child_age_months", "prior_reminder", "prior_vaccination")
    for col in required:
        if col not in rows[0]:
            raise InputError(f"mothers CSV missing feature column '{col}'")
    pool = []
    for row in rows:
        pool.append(FeatureVector(
            income_level=int(row["income_level"]),
            child_age_months=int(row["child_age_months"]),
            prior_reminder=row["prior_reminder"] == "1",
            prior_vaccination=row["prior_vaccination"] == "1",
        ))
    return tuple(pool)


def default_source_pool(size: int = 500, seed: int = 20240501) -> tuple[FeatureVector, ...]:
    """Stand-in for the registry feature sample the estimators draw from."""
    rng = np.random.default_rng(seed)
    pool = []
    for _ in range(size):
        pool.append(FeatureVector(
            income_level=int(rng.choice(INCOME_LEVELS, p=[0.35, 0.30, 0.20, 0.10, 0.05])),
            child_age_months=int(rng.integers(0, 36)),
            prior_reminder=bool(rng.random() < 0.8),
            prior_vaccination=bool(rng.random() < 0.45),
        ))
    return tuple(pool)


def _sample_features(pool: tuple[FeatureVector, ...], rng: np.random.Generator) -> FeatureVector:
    # each feature sampled independently from its pool column
    n = len(pool)
    return FeatureVector(
        income_level=pool[int(rng.integers(n))].income_level,
        child_age_months=pool[int(rng.integers(n))].child_age_months,
        prior_reminder=pool[int(rng.integers(n))].prior_reminder,
        prior_vaccination=pool[int(rng.integers(n))].prior_vaccination,
    )


def _sample_location(spec: GeographySpec, blob_centers: np.ndarray,
                     rng: np.random.Generator) -> tuple[float, float]:
    b = int(rng.integers(len(blob_centers)))
    lat_c, lon_c = blob_centers[b]
    std_lat = spec.blob_std_km / 110.574
    std_lon = spec.blob_std_km / (111.320 * np.cos(np.radians(lat_c)))
    lat = float(np.clip(rng.normal(lat_c, std_lat), spec.lat_min, spec.lat_max - 1e-9))
    lon = float(np.clip(rng.normal(lon_c, std_lon), spec.lon_min, spec.lon_max - 1e-9))
    return lat, lon


@dataclass
class D2TrainingReport:
    """Holdout diagnostics for the D2 regression path."""

    holdout_error_baseline: float
    holdout_error_call: float
    bayes_error_baseline: float
    bayes_error_call: float


def _fit_on_bernoulli_pool(pool_features: list[FeatureVector], rate: float,
                           holdout_fraction: float, rng: np.random.Generator
                           ) -> tuple[LogisticModel, float]:
    labels = rng.random(len(pool_features)) < rate
    if labels.all() or not labels.any():
        # force both classes; vanishingly rare outside extreme rates
        labels[0] = not labels[0]
    n_hold = max(1, int(round(holdout_fraction * len(pool_features))))
    order = rng.permutation(len(pool_features))
    hold, train = order[:n_hold], order[n_hold:]
    train_rows = [(pool_features[i], bool(labels[i])) for i in train]
    model = fit_logistic(train_rows)
    preds = np.array([predict_probability(model, pool_features[i]) >= 0.5 for i in hold])
    err = float(np.mean(preds != labels[hold]))
    return model, err


def generate_population(spec: SyntheticSpec) -> tuple[list[Mother], ProbabilityTable, D2TrainingReport | None]:
    """Mothers plus their probability table, deterministically from the seed.

    Per-mother randomness comes from spawned seed sequences so the output
    is order-stable no matter how the loop is scheduled.
    """
    if spec.population_size < 1:
        raise InputError("population_size must be >= 1")
    if not spec.source_pool:
        raise InputError("source pool is empty")

    root = np.random.SeedSequence(spec.seed)
    setup_rng = np.random.default_rng(root.spawn(1)[0])
    grid = spec.geography.grid()
    blob_centers = np.column_stack([
        setup_rng.uniform(spec.geography.lat_min, spec.geography.lat_max, spec.geography.n_blobs),
        setup_rng.uniform(spec.geography.lon_min, spec.geography.lon_max, spec.geography.n_blobs),
    ])

    report = None
    model_baseline = model_call = None
    if spec.dataset is Dataset.D2:
        pool_rng = np.random.default_rng(root.spawn(1)[0])
        pool_features = [_sample_features(spec.source_pool, pool_rng)
                         for _ in range(spec.training_pool_size)]
        model_baseline, err_b = _fit_on_bernoulli_pool(
            pool_features, spec.baseline_rate, spec.holdout_fraction, pool_rng)
        model_call, err_c = _fit_on_bernoulli_pool(
            pool_features, spec.call_rate, spec.holdout_fraction, pool_rng)
        report = D2TrainingReport(
            holdout_error_baseline=err_b,
            holdout_error_call=err_c,
            bayes_error_baseline=min(spec.baseline_rate, 1 - spec.baseline_rate),
            bayes_error_call=min(spec.call_rate, 1 - spec.call_rate),
        )

    mothers: list[Mother] = []
    rows: dict[int, tuple[float, ...]] = {}
    children = root.spawn(spec.population_size)
    for i in range(spec.population_size):
        rng = np.random.default_rng(children[i])
        features = _sample_features(spec.source_pool, rng)
        lat, lon = _sample_location(spec.geography, blob_centers, rng)
        start = int(rng.integers(1, spec.horizon + 1))
        length = int(rng.integers(spec.elig_min_days, spec.elig_max_days + 1))
        end = min(spec.horizon, start + length - 1)
        pe = int(rng.integers(*spec.pickup_earliest_range))
        pl = pe + int(rng.integers(*spec.pickup_span_range))
        mothers.append(Mother(
            id=i, lat=lat, lon=lon, cell=grid.cell_of(lat, lon),
            elig_start=start, elig_end=end,
            pickup_earliest=pe, pickup_latest=pl, features=features,
        ))
        if spec.dataset is Dataset.D1:
            p_n = float(rng.uniform(0.0, 1.0))
            p_c = float(rng.uniform(p_n, 1.0))
        else:
            p_n = predict_probability(model_baseline, features)
            p_c = max(p_n, predict_probability(model_call, features))
        p_t = float(rng.uniform(p_c, 1.0))
        p_l = float(rng.uniform(p_t, 1.0))
        rows[i] = (p_n, p_c, p_t, p_l, 1.0)
    return mothers, ProbabilityTable(rows), report
