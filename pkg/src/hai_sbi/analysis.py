"""Posterior summarization, predictive checks, and intervention comparison.

Parametric posteriors are summarized through their own sampler (honoring
zero-truncation); draw-based posteriors are summarized directly. Predictive
bands simulate one epidemic per posterior draw; counterfactual scenarios
reuse the same draws and the same per-draw seeds (common random numbers) so
that scenario contrasts are not simulation-noise artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .inference import ModelSpec, PosteriorResult
from .simulator import InterventionSpec, RateVector, apply_intervention
from .summaries import summary_columns, summary_matrix


def rate_labels(n_floors: int) -> list[str]:
    return ["Facility", *(f"Floor {k}" for k in range(1, n_floors + 1)), "Room"]


def _default_labels(d: int) -> list[str]:
    if d == 1:
        return ["Rate"]
    if d >= 3:
        return rate_labels(d - 2)
    return [f"component_{j}" for j in range(d)]


@dataclass(frozen=True)
class PosteriorSummary:
    labels: list[str]
    mean: np.ndarray
    sd: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray
    interval: tuple[float, float]


def summarize(
    result: PosteriorResult,
    n_draws: int = 4000,
    interval: tuple[float, float] = (0.05, 0.95),
    seed: int = 0,
    labels: list[str] | None = None,
) -> PosteriorSummary:
    """Componentwise mean, sd, and quantile interval of the posterior.

    Parametric results are sampled ``n_draws`` times first; quantiles use
    linear interpolation. Fewer than 20 effective draws is refused because
    the quantiles would be meaningless.
    """
    if not 0.0 <= interval[0] < interval[1] <= 1.0:
        raise ValueError("interval must satisfy 0 <= lo < hi <= 1")
    if result.kind == "parametric":
        if n_draws < 20:
            raise ValueError("need at least 20 draws for stable quantiles")
        draws = result.sample(n_draws, seed)
    else:
        draws = result.draws
        if draws.shape[0] < 20:
            raise ValueError("need at least 20 draws for stable quantiles")
    draws = np.sort(draws, axis=0)  # makes every statistic draw-order invariant
    d = draws.shape[1]
    labels = labels if labels is not None else _default_labels(d)
    if len(labels) != d:
        raise ValueError("one label per component required")
    return PosteriorSummary(
        labels=list(labels),
        mean=draws.mean(axis=0),
        sd=draws.std(axis=0, ddof=1),
        q_lo=np.quantile(draws, interval[0], axis=0),
        q_hi=np.quantile(draws, interval[1], axis=0),
        interval=interval,
    )


@dataclass(frozen=True)
class CorrelationResult:
    matrix: np.ndarray
    zero_variance: np.ndarray  # bool per component


def correlation_matrix(
    result: PosteriorResult, n_draws: int = 4000, seed: int = 0
) -> CorrelationResult:
    """Pearson correlations between posterior components.

    Parametric heads are read analytically (a diagonal head is exactly
    uncorrelated by construction); draw-based posteriors use the sample
    correlation. Zero-variance components get zeroed rows/columns and a
    flag instead of NaNs.
    """
    if result.dim < 2:
        raise ValueError("correlations need at least 2 components")
    if result.kind == "parametric":
        cov = result.head.covariance()
        sd = np.sqrt(np.diag(cov))
        zero = sd == 0.0
        denom = np.outer(np.where(zero, 1.0, sd), np.where(zero, 1.0, sd))
        corr = cov / denom
    else:
        draws = result.draws
        zero = draws.max(axis=0) == draws.min(axis=0)  # constant column
        if zero.any():
            corr = np.zeros((result.dim, result.dim))
            ok = ~zero
            if ok.sum() >= 2:
                corr[np.ix_(ok, ok)] = np.corrcoef(draws[:, ok], rowvar=False)
        else:
            corr = np.corrcoef(draws, rowvar=False)
    corr = np.asarray(corr, dtype=np.float64)
    corr[zero, :] = 0.0
    corr[:, zero] = 0.0
    np.fill_diagonal(corr, 1.0)
    return CorrelationResult(matrix=corr, zero_variance=zero)


@dataclass(frozen=True)
class PredictiveBand:
    """Per-draw trajectories of one summary column plus their pointwise mean."""

    scenario: str
    column: str
    mean: np.ndarray            # (T,)
    trajectories: np.ndarray    # (n_draws, T)


def _column_index(model: ModelSpec, column) -> tuple[int, str]:
    names = summary_columns(model.layout.n_floors)
    if isinstance(column, str):
        if column not in names:
            raise ValueError(f"unknown summary column {column!r}; have {names}")
        return names.index(column), column
    idx = int(column)
    return idx, names[idx]


def _draws_as_rates(draws: np.ndarray, model: ModelSpec) -> list[RateVector]:
    if (draws < 0).any():
        raise ValueError(
            "posterior draw has a negative rate; sample the result with "
            "truncate_at_zero enabled before predictive simulation"
        )
    return [model.theta_to_rates(row) for row in draws]


def _band(model: ModelSpec, rates_list, seeds, col_idx: int, col_name: str,
          scenario: str) -> PredictiveBand:
    rows = []
    for rates, sd in zip(rates_list, seeds):
        matrix = model.simulate(rates, sd)
        sm = summary_matrix(matrix, model.layout, model.traces)
        rows.append(sm.values[:, col_idx])
    traj = np.vstack(rows)
    return PredictiveBand(scenario=scenario, column=col_name,
                          mean=traj.mean(axis=0), trajectories=traj)


def posterior_predictive(
    result: PosteriorResult,
    model: ModelSpec,
    column="I",
    n_draws: int = 30,
    seed: int = 0,
) -> PredictiveBand:
    """Simulate once per posterior draw and track one rescaled summary column."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    col_idx, col_name = _column_index(model, column)
    draws = result.sample(n_draws, rng.derive_seed(seed, 100))
    rates_list = _draws_as_rates(draws, model)
    seeds = [rng.derive_seed(seed, 200, j) for j in range(n_draws)]
    return _band(model, rates_list, seeds, col_idx, col_name, "posterior predictive")


def intervention_compare(
    result: PosteriorResult,
    model: ModelSpec,
    scenarios: list[InterventionSpec],
    column="I",
    n_draws: int = 30,
    seed: int = 0,
    include_external_only: bool = False,
) -> list[PredictiveBand]:
    """Predictive bands under counterfactual rate manipulations.

    All scenarios share one set of posterior draws and one per-draw seed
    sequence, so a scenario with unit multipliers reproduces the baseline
    band bit for bit. The first band is always the no-intervention
    baseline; ``include_external_only`` appends an all-rates-zero reference
    (infections from outside the facility only).
    """
    if not scenarios:
        raise ValueError("need at least one intervention scenario")
    col_idx, col_name = _column_index(model, column)
    draws = result.sample(n_draws, rng.derive_seed(seed, 100))
    rates_list = _draws_as_rates(draws, model)
    seeds = [rng.derive_seed(seed, 200, j) for j in range(n_draws)]

    all_specs = [InterventionSpec(label="no intervention")]
    all_specs.extend(scenarios)
    if include_external_only:
        all_specs.append(InterventionSpec(facility_scale=0.0, per_floor_scale=0.0,
                                          room_scale=0.0, label="external only"))
    bands = []
    for spec in all_specs:
        scaled = [apply_intervention(r, spec) for r in rates_list]
        bands.append(_band(model, scaled, seeds, col_idx, col_name, spec.label))
    return bands


def write_posterior_summary_csv(summary: PosteriorSummary, path) -> None:
    lo = int(round(summary.interval[0] * 100))
    hi = int(round(summary.interval[1] * 100))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"component,mean,sd,q{lo:02d},q{hi:02d}\n")
        for j, label in enumerate(summary.labels):
            fh.write(
                f"{label},{summary.mean[j]:.17g},{summary.sd[j]:.17g},"
                f"{summary.q_lo[j]:.17g},{summary.q_hi[j]:.17g}\n"
            )


def write_correlation_csv(corr: CorrelationResult, labels: list[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("component," + ",".join(labels) + "\n")
        for j, label in enumerate(labels):
            row = ",".join(format(v, ".17g") for v in corr.matrix[j])
            fh.write(f"{label},{row}\n")


def write_bands_csv(bands: list[PredictiveBand], path) -> None:
    """All scenarios stacked: ``scenario,t,mean,draw_1..draw_n``."""
    if not bands:
        raise ValueError("no bands to write")
    n_draws = bands[0].trajectories.shape[0]
    draw_cols = ",".join(f"draw_{j + 1}" for j in range(n_draws))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"scenario,t,mean,{draw_cols}\n")
        for band in bands:
            for t in range(band.mean.size):
                draws = ",".join(format(v, ".17g") for v in band.trajectories[:, t])
                fh.write(f"{band.scenario},{t + 1},{band.mean[t]:.17g},{draws}\n")
