"""Posterior estimators: NPE training, ABC, and likelihood-based rejection sampling.

All three consume independent draws from the prior. NPE trains the neural
conditional density estimator on simulated (parameter, summary) pairs and
then reads the posterior off the head at the observed summary; ABC keeps
the parameter draws whose simulated summaries land closest to the observed
one; rejection sampling accepts prior draws in proportion to their exact
likelihood, bounded by a numerically located maximum.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from . import density, rng
from .facility import FacilityTraces, Layout
from .simulator import (
    EpidemicMatrix,
    RateVector,
    SimParams,
    simulate_full,
    simulate_partial,
    simulate_trace,
)
from .summaries import scalar_summary, summary_matrix

log = logging.getLogger("hai_sbi")


@dataclass(frozen=True)
class Prior:
    """Independent lognormal components: log theta_j ~ N(mu0_j, sigma0_j^2)."""

    mu0: np.ndarray
    sigma0: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu0, dtype=np.float64))
        sd = np.broadcast_to(np.asarray(self.sigma0, dtype=np.float64), mu.shape).copy()
        object.__setattr__(self, "mu0", mu)
        object.__setattr__(self, "sigma0", sd)
        if (sd <= 0).any():
            raise ValueError("prior scales must be positive")

    @property
    def dim(self) -> int:
        return int(self.mu0.size)

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        z = gen.standard_normal((n, self.dim))
        return np.exp(self.mu0 + self.sigma0 * z)

    def quantile(self, q: float) -> np.ndarray:
        return np.exp(self.mu0 + self.sigma0 * ndtri(q))

    def to_dict(self) -> dict:
        return {"mu0": self.mu0.tolist(), "sigma0": self.sigma0.tolist()}


def sample_prior(prior: Prior, n: int, seed: int) -> np.ndarray:
    """n iid draws, deterministic in the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return prior.sample(n, np.random.default_rng(seed))


@dataclass(frozen=True)
class ModelSpec:
    """One forward model: which simulator, its geometry, and its summary.

    ``homogeneous_rate`` makes the parameter a single facility-wide rate
    (floor and room rates pinned to zero); otherwise the parameter is the
    full K+2 rate vector.
    """

    kind: str                      # "full" | "partial" | "trace"
    layout: Layout
    traces: FacilityTraces
    params: SimParams
    summary: str = "J"             # "J" = all columns, "I" = total-cases column
    homogeneous_rate: bool = False

    def __post_init__(self):
        if self.kind not in ("full", "partial", "trace"):
            raise ValueError("model kind must be 'full', 'partial', or 'trace'")
        if self.summary not in ("J", "I"):
            raise ValueError("summary must be 'J' or 'I'")
        if self.kind == "partial" and self.params.eta is None:
            raise ValueError("partial-observation model needs eta")

    @property
    def horizon(self) -> int:
        return self.traces.horizon

    @property
    def theta_dim(self) -> int:
        return 1 if self.homogeneous_rate else self.layout.n_floors + 2

    @property
    def summary_dim(self) -> int:
        cols = 1 if self.summary == "I" else self.layout.n_floors + 2
        return cols * self.horizon

    def theta_to_rates(self, theta_row) -> RateVector:
        theta_row = np.asarray(theta_row, dtype=np.float64).reshape(-1)
        if theta_row.size != self.theta_dim:
            raise ValueError(f"parameter has {theta_row.size} entries, expected {self.theta_dim}")
        if self.homogeneous_rate:
            return RateVector.homogeneous(float(theta_row[0]), self.layout.n_floors)
        return RateVector(theta_row)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "summary": self.summary,
            "homogeneous_rate": self.homogeneous_rate,
            "n_floors": self.layout.n_floors,
            "n_rooms": self.layout.n_rooms,
            "horizon": self.horizon,
            "alpha": self.params.alpha,
            "gamma": self.params.gamma,
            "eta": self.params.eta,
        }

    def simulate(self, rates: RateVector, seed: int) -> EpidemicMatrix:
        """State matrix whose summary feeds the estimators (Y when partial)."""
        params = SimParams(self.params.alpha, self.params.gamma, self.params.eta, seed)
        if self.kind == "full":
            return simulate_full(self.layout, params, rates, self.horizon)
        if self.kind == "partial":
            _, y = simulate_partial(self.layout, params, rates, self.horizon)
            return y
        return simulate_trace(self.layout, self.traces, rates, seed, check_traces=False)

    def summarize(self, matrix: EpidemicMatrix) -> np.ndarray:
        sm = summary_matrix(matrix, self.layout, self.traces)
        return sm.values[:, 0].copy() if self.summary == "I" else sm.flat()


@dataclass
class SimulationBatch:
    """S (parameter, flattened summary) pairs plus generation metadata."""

    theta: np.ndarray       # (S, d)
    x: np.ndarray           # (S, m)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=np.float64))
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        if self.theta.shape[0] != self.x.shape[0]:
            raise ValueError("theta and x must have one row per simulation")

    @property
    def size(self) -> int:
        return int(self.theta.shape[0])

    def save(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / "theta.csv", self.theta, fmt="%.17g", delimiter=",")
        np.savetxt(out / "summaries.csv", self.x, fmt="%.17g", delimiter=",")
        with open(out / "batch_meta.json", "w", encoding="utf-8") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, out_dir) -> "SimulationBatch":
        from pathlib import Path

        out = Path(out_dir)
        theta = np.loadtxt(out / "theta.csv", delimiter=",", ndmin=2)
        x = np.loadtxt(out / "summaries.csv", delimiter=",", ndmin=2)
        with open(out / "batch_meta.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        return cls(theta=theta, x=x, meta=meta)


def _simulate_one(model: ModelSpec, theta_row: np.ndarray, sim_seed: int) -> np.ndarray:
    return model.summarize(model.simulate(model.theta_to_rates(theta_row), sim_seed))


def _simulate_chunk(args):
    model, thetas, seeds = args
    return [_simulate_one(model, th, sd) for th, sd in zip(thetas, seeds)]


def simulate_batch(
    prior: Prior,
    model: ModelSpec,
    n_sims: int,
    seed: int,
    n_workers: int = 1,
) -> SimulationBatch:
    """Draw parameters from the prior and simulate their summaries.

    Simulation s runs on a child seed derived from (seed, s), so the batch
    is bit-identical whatever the worker count.
    """
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    if prior.dim != model.theta_dim:
        raise ValueError(
            f"prior dimension {prior.dim} does not match the model's {model.theta_dim}"
        )
    thetas = prior.sample(n_sims, np.random.default_rng(rng.derive_seed(seed, 0)))
    seeds = [rng.derive_seed(seed, 1, s) for s in range(n_sims)]
    if n_workers > 1:
        chunks = np.array_split(np.arange(n_sims), n_workers * 4)
        jobs = [(model, thetas[c], [seeds[i] for i in c]) for c in chunks if c.size]
        rows: list[np.ndarray] = []
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for part in pool.map(_simulate_chunk, jobs):
                rows.extend(part)
    else:
        rows = [_simulate_one(model, thetas[s], seeds[s]) for s in range(n_sims)]
    x = np.vstack(rows)
    meta = {
        "seed": seed,
        "n_sims": n_sims,
        "prior": prior.to_dict(),
        "model": model.describe(),
    }
    return SimulationBatch(theta=thetas, x=x, meta=meta)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 400
    patience: int = 20
    weight_decay: float = 1e-4
    train_fraction: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if min(self.learning_rate, self.batch_size, self.max_epochs, self.patience) <= 0:
            raise ValueError("learning rate, batch size, epochs, patience must be positive")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "weight_decay": self.weight_decay,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
        }


@dataclass
class TrainHistory:
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    train_indices: np.ndarray
    val_indices: np.ndarray
    init_val_loss: float = float("nan")
    best_val_loss: float = float("nan")


@dataclass
class DensityEstimator:
    """Trained encoder plus the affine target scaling folded into its head.

    Training standardizes the (possibly log-transformed) targets for
    optimizer conditioning; because the Gaussian family is closed under
    affine maps, the shift and scale are undone exactly when the head is
    read out, so the estimator's density is over the original parameters.
    """

    config: density.EncoderConfig
    weights: density.EncoderWeights
    target_shift: np.ndarray
    target_scale: np.ndarray

    def head(self, x_o) -> density.HeadOutput:
        raw = density.forward(self.weights, self.config, x_o)
        mean = self.target_shift + self.target_scale * raw.mean
        if raw.diag is not None:
            return density.HeadOutput(mean=mean, diag=raw.diag * self.target_scale)
        return density.HeadOutput(mean=mean, chol=self.target_scale[:, None] * raw.chol)

    def save(self, path) -> None:
        density.save_weights(self.weights, self.config, path, extra={
            "target_shift": self.target_shift.tolist(),
            "target_scale": self.target_scale.tolist(),
        })

    @classmethod
    def load(cls, path) -> "DensityEstimator":
        weights, config, extra = density.load_weights(path)
        d = config.target_dim
        shift = np.asarray(extra.get("target_shift", np.zeros(d)), dtype=np.float64)
        scale = np.asarray(extra.get("target_scale", np.ones(d)), dtype=np.float64)
        return cls(config=config, weights=weights,
                   target_shift=shift, target_scale=scale)


class _AdamW:
    """Adam moments with decoupled weight decay, matching the cited scheme."""

    def __init__(self, params: list[np.ndarray], lr: float, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * ((m / b1c) / (np.sqrt(v / b2c) + self.eps) + self.wd * p)


def train_npe(
    batch: SimulationBatch,
    encoder_config: density.EncoderConfig,
    train_config: TrainConfig,
) -> tuple[DensityEstimator, TrainHistory]:
    """Fit the conditional density estimator by minimizing mean NLL.

    Simulations are split 75/25 into train/validation; optimization runs
    AdamW over shuffled minibatches, keeps the weights of the best
    validation epoch, and stops once validation has not improved for
    ``patience`` epochs.
    """
    if batch.size < 8:
        raise ValueError("need at least 8 simulations to train")
    if encoder_config.input_dim != batch.x.shape[1]:
        raise ValueError(
            f"encoder expects {encoder_config.input_dim} inputs, summaries have {batch.x.shape[1]}"
        )
    if encoder_config.target_dim != batch.theta.shape[1]:
        raise ValueError(
            f"encoder targets {encoder_config.target_dim} dims, parameters have {batch.theta.shape[1]}"
        )
    gen = np.random.default_rng(train_config.seed)
    perm = gen.permutation(batch.size)
    n_train = int(round(train_config.train_fraction * batch.size))
    n_train = min(max(n_train, 1), batch.size - 2)
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    if val_idx.size < 2:
        raise ValueError("split leaves fewer than 2 validation points")

    # standardize targets on the head's scale; folded back in at readout
    if encoder_config.target_transform == "log":
        if (batch.theta <= 0).any():
            raise ValueError("log-transform head needs strictly positive parameters")
        targets = np.log(batch.theta)
    else:
        targets = batch.theta
    shift = targets[train_idx].mean(axis=0)
    scale = targets[train_idx].std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    z = (targets - shift) / scale

    std_config = dataclasses.replace(encoder_config, target_transform="natural")
    x_tr, z_tr = batch.x[train_idx], z[train_idx]
    x_va, z_va = batch.x[val_idx], z[val_idx]

    weights = density.init_weights(std_config, rng.derive_seed(train_config.seed, 7))
    params = weights.flat_arrays()
    opt = _AdamW(params, train_config.learning_rate, train_config.weight_decay)

    best_val = density.mean_nll(weights, std_config, x_va, z_va)
    best_weights = weights.copy()
    best_epoch = 0
    history = TrainHistory(train_loss=[], val_loss=[], best_epoch=0,
                           train_indices=train_idx, val_indices=val_idx,
                           init_val_loss=float(best_val))
    since_best = 0
    for epoch in range(1, train_config.max_epochs + 1):
        order = gen.permutation(n_train)
        for start in range(0, n_train, train_config.batch_size):
            sel = order[start:start + train_config.batch_size]
            g = density.grad(weights, std_config, x_tr[sel], z_tr[sel])
            opt.step(params, g.flat_arrays())
        tr_loss = density.mean_nll(weights, std_config, x_tr, z_tr)
        va_loss = density.mean_nll(weights, std_config, x_va, z_va)
        if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
            raise RuntimeError(
                f"non-finite loss at epoch {epoch}: train={tr_loss}, val={va_loss}"
            )
        history.train_loss.append(float(tr_loss))
        history.val_loss.append(float(va_loss))
        if va_loss < best_val:
            best_val = va_loss
            best_weights = weights.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > train_config.patience:
                break
    history.best_epoch = best_epoch
    history.best_val_loss = float(best_val)
    log.info("train_npe: stopped after %d epochs, best val %.4f at epoch %d",
             len(history.train_loss), best_val, best_epoch)
    estimator = DensityEstimator(config=encoder_config, weights=best_weights,
                                 target_shift=shift, target_scale=scale)
    return estimator, history


@dataclass
class PosteriorResult:
    """Either a parametric head (NPE) or a set of accepted draws (ABC, rejection)."""

    kind: str                                   # "parametric" | "draws"
    provenance: dict = field(default_factory=dict)
    draws: np.ndarray | None = None             # (S', d)
    head: density.HeadOutput | None = None
    transform: str = "natural"
    truncate_at_zero: bool = False

    def __post_init__(self):
        if self.kind not in ("parametric", "draws"):
            raise ValueError("kind must be 'parametric' or 'draws'")
        if self.kind == "draws":
            if self.draws is None or len(self.draws) == 0:
                raise ValueError("draws result needs a nonempty draw matrix")
            self.draws = np.atleast_2d(np.asarray(self.draws, dtype=np.float64))
        elif self.head is None:
            raise ValueError("parametric result needs a head")

    @property
    def dim(self) -> int:
        return self.head.dim if self.kind == "parametric" else int(self.draws.shape[1])

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Posterior draws: the head's sampler, or resampling of stored draws."""
        if self.kind == "parametric":
            return density.sample(self.head, n, self.transform,
                                  self.truncate_at_zero, seed)
        gen = np.random.default_rng(seed)
        if n <= self.draws.shape[0]:
            pick = gen.choice(self.draws.shape[0], size=n, replace=False)
        else:
            pick = gen.choice(self.draws.shape[0], size=n, replace=True)
        return self.draws[pick]


def npe_posterior(
    estimator: DensityEstimator, x_o, truncate_at_zero: bool = False
) -> PosteriorResult:
    """Read the amortized posterior off the trained head at the observation."""
    x_o = np.asarray(x_o, dtype=np.float64).reshape(-1)
    head = estimator.head(x_o)
    return PosteriorResult(
        kind="parametric",
        head=head,
        transform=estimator.config.target_transform,
        truncate_at_zero=truncate_at_zero,
        provenance={"estimator": "npe", "head_kind": estimator.config.head_kind},
    )


def _distances(x: np.ndarray, x_o: np.ndarray) -> np.ndarray:
    return np.sqrt(((x - x_o) ** 2).sum(axis=1))


def abc(batch: SimulationBatch, x_o, accept=("top_k", 100)) -> PosteriorResult:
    """Keep parameters whose summaries land nearest the observed summary.

    ``accept`` is ("epsilon", e) for a fixed Euclidean threshold or
    ("top_k", k) for the k nearest candidates. Epsilon mode errors out when
    nothing is accepted rather than returning an empty posterior.
    """
    x_o = np.asarray(x_o, dtype=np.float64).reshape(-1)
    if x_o.size != batch.x.shape[1]:
        raise ValueError("observed summary dimension does not match batch")
    dist = _distances(batch.x, x_o)
    mode, value = accept
    if mode == "epsilon":
        keep = np.flatnonzero(dist <= value)  # closed ball: epsilon=0 is exact match
        if keep.size == 0:
            raise ValueError(
                "no candidate fell within epsilon; enlarge epsilon or use ('top_k', k)"
            )
    elif mode == "top_k":
        k = min(int(value), batch.size)
        keep = np.argpartition(dist, k - 1)[:k]
        keep = keep[np.argsort(dist[keep], kind="stable")]
    else:
        raise ValueError("accept mode must be 'epsilon' or 'top_k'")
    return PosteriorResult(
        kind="draws",
        draws=batch.theta[keep],
        provenance={
            "estimator": "abc",
            "total_candidates": batch.size,
            "accepted": int(keep.size),
            "acceptance_rate": keep.size / batch.size,
            "accept_mode": mode,
            "accept_value": float(value),
            "max_accepted_distance": float(dist[keep].max()),
        },
    )


def abc_scalar(batch: SimulationBatch, x_o, accept=("top_k", 100)) -> PosteriorResult:
    """ABC matching only the mean of each summary series (the scalar variant)."""
    g = np.array([[scalar_summary(row)] for row in batch.x])
    g_o = np.array([scalar_summary(np.asarray(x_o, dtype=np.float64).reshape(-1))])
    reduced = SimulationBatch(theta=batch.theta, x=g, meta=dict(batch.meta))
    result = abc(reduced, g_o, accept)
    result.provenance["estimator"] = "abc-s"
    return result


def rejection_sample(
    prior: Prior,
    log_lik,
    x_o,
    n_target: int,
    seed: int,
    log_m: float,
    max_proposals: int | None = None,
    chunk: int = 256,
) -> PosteriorResult:
    """Exact posterior draws by likelihood-bounded rejection.

    Accepts a prior draw theta with probability exp(log_lik(theta, x_o) -
    log_m); log_m must upper-bound the log-likelihood (a violation raises,
    since it would bias the sample). Stops after ``n_target`` acceptances,
    or warns and returns early when ``max_proposals`` is exhausted.
    """
    if not np.isfinite(log_m):
        raise ValueError("log_m must be finite")
    gen = np.random.default_rng(seed)
    accepted: list[np.ndarray] = []
    proposals = 0
    while len(accepted) < n_target:
        if max_proposals is not None and proposals >= max_proposals:
            warnings.warn(
                f"rejection sampling hit the proposal cap ({max_proposals}) with "
                f"{len(accepted)}/{n_target} acceptances",
                stacklevel=2,
            )
            break
        thetas = prior.sample(chunk, gen)
        us = gen.random(chunk)
        for th, u in zip(thetas, us):
            proposals += 1
            ll = log_lik(th, x_o)
            if ll > log_m:
                raise RuntimeError(
                    f"likelihood {ll:.6g} exceeds bound log_m={log_m:.6g} at theta={th}; "
                    "raise log_m"
                )
            if np.log(u) < ll - log_m:
                accepted.append(th)
            if len(accepted) >= n_target or (
                max_proposals is not None and proposals >= max_proposals
            ):
                break
    if not accepted:
        raise RuntimeError("rejection sampling accepted nothing; check log_m or the cap")
    return PosteriorResult(
        kind="draws",
        draws=np.vstack(accepted),
        provenance={
            "estimator": "rejection",
            "total_proposals": proposals,
            "accepted": len(accepted),
            "acceptance_rate": len(accepted) / proposals,
            "log_m": float(log_m),
        },
    )


def find_log_m(
    log_lik,
    prior: Prior,
    x_o,
    budget: int = 400,
    quantile_starts=(0.05, 0.25, 0.5, 0.75, 0.95),
) -> tuple[np.ndarray, float]:
    """Locate (approximately) the likelihood maximum and inflate it by 10%.

    Multi-start coordinate search over log theta, starting from prior
    quantiles; the returned bound adds log(1.1) so that mild undershoot of
    the true maximum still leaves rejection sampling exact in practice.
    Returns (argmax theta, log bound).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    evals = 0
    best_theta, best_ll = None, -np.inf

    def evaluate(log_theta: np.ndarray) -> float:
        nonlocal evals, best_theta, best_ll
        evals += 1
        ll = log_lik(np.exp(log_theta), x_o)
        if ll > best_ll:
            best_ll = ll
            best_theta = np.exp(log_theta)
        return ll

    d = prior.dim
    for q in quantile_starts:
        if evals >= budget:
            break
        point = np.log(prior.quantile(q))
        current = evaluate(point)
        step = prior.sigma0.copy()
        while step.max() > 1e-3 and evals < budget:
            moved = False
            for j in range(d):
                for sign in (+1.0, -1.0):
                    if evals >= budget:
                        break
                    trial = point.copy()
                    trial[j] += sign * step[j]
                    ll = evaluate(trial)
                    if ll > current:
                        point, current = trial, ll
                        moved = True
                        break
            if not moved:
                step *= 0.5
    return best_theta, float(best_ll + np.log(1.1))


def write_draws_csv(result: PosteriorResult, path, labels=None) -> None:
    """Accepted draws as CSV, one labeled column per component."""
    if result.kind != "draws":
        raise ValueError("only draw-based results can be written as a draw table")
    d = result.dim
    header = ",".join(labels) if labels else ",".join(f"theta_{j}" for j in range(d))
    np.savetxt(path, result.draws, fmt="%.17g", delimiter=",",
               header=header, comments="")


def save_posterior(result: PosteriorResult, out_dir) -> list[str]:
    """Persist a posterior under ``out_dir``; returns the file names written."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "kind": result.kind,
        "transform": result.transform,
        "truncate_at_zero": result.truncate_at_zero,
        "provenance": result.provenance,
    }
    written = ["posterior.json"]
    if result.kind == "parametric":
        doc["head"] = {
            "mean": result.head.mean.tolist(),
            "diag": None if result.head.diag is None else result.head.diag.tolist(),
            "chol": None if result.head.chol is None else result.head.chol.tolist(),
        }
    else:
        write_draws_csv(result, out / "draws.csv")
        written.append("draws.csv")
    with open(out / "posterior.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return written


def load_posterior(out_dir) -> PosteriorResult:
    from pathlib import Path

    out = Path(out_dir)
    with open(out / "posterior.json", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["kind"] == "parametric":
        h = doc["head"]
        head = density.HeadOutput(
            mean=np.asarray(h["mean"], dtype=np.float64),
            diag=None if h["diag"] is None else np.asarray(h["diag"], dtype=np.float64),
            chol=None if h["chol"] is None else np.asarray(h["chol"], dtype=np.float64),
        )
        return PosteriorResult(kind="parametric", head=head,
                               transform=doc["transform"],
                               truncate_at_zero=doc["truncate_at_zero"],
                               provenance=doc["provenance"])
    draws = np.loadtxt(out / "draws.csv", delimiter=",", skiprows=1, ndmin=2)
    return PosteriorResult(kind="draws", draws=draws,
                           transform=doc["transform"],
                           truncate_at_zero=doc["truncate_at_zero"],
                           provenance=doc["provenance"])
