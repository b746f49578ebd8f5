"""Neural conditional density estimator built from scratch on numpy.

A feedforward encoder with three tanh hidden layers maps an observation
vector to the parameters of a Gaussian-family head: a scalar Gaussian, a
diagonal-covariance Gaussian, or a full-covariance Gaussian parameterized
by a Cholesky factor with exponentiated diagonal. An optional log transform
turns any head into its lognormal counterpart (density picks up the
Jacobian term). Log-density, exact reverse-mode gradients, and sampling
(including zero-truncation by rejection) are implemented directly so that
finite-difference checks and bit-level reproducibility are straightforward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HEAD_KINDS = ("scalar-gaussian", "diag-gaussian", "full-gaussian")
TRANSFORMS = ("natural", "log")
_LOG_2PI = np.log(2.0 * np.pi)
WEIGHTS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_width: int
    target_dim: int
    head_kind: str
    target_transform: str = "natural"
    n_hidden_layers: int = 3
    activation: str = "tanh"  # fixed smooth nonlinearity, recorded for reproducibility

    def __post_init__(self):
        if min(self.input_dim, self.hidden_width, self.target_dim) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"head_kind must be one of {HEAD_KINDS}")
        if self.target_transform not in TRANSFORMS:
            raise ValueError(f"target_transform must be one of {TRANSFORMS}")
        if self.head_kind == "scalar-gaussian" and self.target_dim != 1:
            raise ValueError("scalar-gaussian head requires target_dim = 1")
        if self.activation != "tanh":
            raise ValueError("only the tanh activation is supported")

    @property
    def head_output_dim(self) -> int:
        d = self.target_dim
        if self.head_kind == "full-gaussian":
            return d + d * (d + 1) // 2
        return 2 * d

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim] + [self.hidden_width] * self.n_hidden_layers
        dims.append(self.head_output_dim)
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_width": self.hidden_width,
            "target_dim": self.target_dim,
            "head_kind": self.head_kind,
            "target_transform": self.target_transform,
            "n_hidden_layers": self.n_hidden_layers,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(**d)


@dataclass
class EncoderWeights:
    """Per-layer weight matrices and bias vectors, all float64."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "EncoderWeights":
        return EncoderWeights([w.copy() for w in self.weights],
                              [b.copy() for b in self.biases])

    def flat_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


def init_weights(config: EncoderConfig, seed: int) -> EncoderWeights:
    """Variance-preserving fan-in init; biases zero so the initial scale is 1."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for out_dim, in_dim in config.layer_dims():
        ws.append(rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim)))
        bs.append(np.zeros(out_dim))
    # keep raw head outputs near zero at init (sigma close to 1)
    ws[-1] *= 0.1
    return EncoderWeights(ws, bs)


@dataclass(frozen=True)
class HeadOutput:
    """Gaussian head parameters: mean plus either a diagonal or a Cholesky scale."""

    mean: np.ndarray
    diag: np.ndarray | None = None   # sigma, positive
    chol: np.ndarray | None = None   # lower triangular, positive diagonal

    def __post_init__(self):
        if (self.diag is None) == (self.chol is None):
            raise ValueError("exactly one of diag or chol must be set")
        if self.diag is not None and (np.asarray(self.diag) <= 0).any():
            raise ValueError("diagonal scales must be positive")
        if self.chol is not None and (np.diag(self.chol) <= 0).any():
            raise ValueError("Cholesky diagonal must be positive")

    @property
    def dim(self) -> int:
        return int(np.asarray(self.mean).size)

    def covariance(self) -> np.ndarray:
        if self.diag is not None:
            return np.diag(np.square(self.diag))
        return self.chol @ self.chol.T


def _raw_to_head(raw: np.ndarray, config: EncoderConfig) -> HeadOutput:
    d = config.target_dim
    mean = raw[:d].copy()
    if config.head_kind == "full-gaussian":
        chol = np.zeros((d, d))
        chol[np.diag_indices(d)] = np.exp(raw[d:2 * d])
        if d > 1:
            chol[np.tril_indices(d, -1)] = raw[2 * d:]
        return HeadOutput(mean=mean, chol=chol)
    return HeadOutput(mean=mean, diag=np.exp(raw[d:2 * d]).copy())


def _forward_raw(weights: EncoderWeights, x: np.ndarray):
    """Batched encoder forward pass; returns raw head outputs and activations."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    acts = [h]
    n_layers = len(weights.weights)
    for j in range(n_layers - 1):
        h = np.tanh(h @ weights.weights[j].T + weights.biases[j])
        acts.append(h)
    raw = h @ weights.weights[-1].T + weights.biases[-1]
    return raw, acts


def forward(weights: EncoderWeights, config: EncoderConfig, x) -> HeadOutput:
    """Head parameters for a single observation vector."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != config.input_dim:
        raise ValueError(f"input has {x.size} entries, expected {config.input_dim}")
    raw, _ = _forward_raw(weights, x[None, :])
    return _raw_to_head(raw[0], config)


def _transformed_target(theta: np.ndarray, transform: str):
    """(target on the head's scale, additive Jacobian term for the NLL)."""
    theta = np.asarray(theta, dtype=np.float64)
    if transform == "log":
        if (theta <= 0).any():
            raise ValueError("log transform needs strictly positive targets")
        return np.log(theta), float(np.log(theta).sum())
    return theta, 0.0


def nll(head: HeadOutput, theta, transform: str = "natural") -> float:
    """Exact negative log-density of theta under the head."""
    target, jac = _transformed_target(np.asarray(theta, dtype=np.float64).reshape(-1),
                                      transform)
    d = head.dim
    if target.size != d:
        raise ValueError(f"theta has {target.size} entries, expected {d}")
    if head.diag is not None:
        z = (target - head.mean) / head.diag
        val = 0.5 * d * _LOG_2PI + np.log(head.diag).sum() + 0.5 * np.dot(z, z)
    else:
        r = target - head.mean
        z = _solve_lower(head.chol, r)
        val = 0.5 * d * _LOG_2PI + np.log(np.diag(head.chol)).sum() + 0.5 * np.dot(z, z)
    return float(val + jac)


def log_prob(head: HeadOutput, theta, transform: str = "natural") -> float:
    """Log-density; the exact negation of nll."""
    return -nll(head, theta, transform)


def _solve_lower(chol: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Forward substitution L z = r (small d, so an explicit loop is fine)."""
    d = chol.shape[0]
    z = np.empty(d)
    for i in range(d):
        z[i] = (r[i] - chol[i, :i] @ z[:i]) / chol[i, i]
    return z


def _solve_upper_t(chol: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Back substitution L^T w = v."""
    d = chol.shape[0]
    w = np.empty(d)
    for i in range(d - 1, -1, -1):
        w[i] = (v[i] - chol[i + 1:, i] @ w[i + 1:]) / chol[i, i]
    return w


def _batch_targets(thetas: np.ndarray, transform: str):
    if transform == "log":
        if (thetas <= 0).any():
            raise ValueError("log transform needs strictly positive targets")
        logs = np.log(thetas)
        return logs, logs.sum(axis=1)
    return thetas, np.zeros(thetas.shape[0])


def mean_nll(weights: EncoderWeights, config: EncoderConfig, xs, thetas) -> float:
    """Mean negative log-density over a batch of (x, theta) pairs.

    Computed straight from the raw head outputs so that a diverged network
    (underflowed scales) yields inf/nan rather than a construction error;
    the training loop treats non-finite losses as a hard stop.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    raw, _ = _forward_raw(weights, xs)
    d = config.target_dim
    targets, jac = _batch_targets(thetas, config.target_transform)
    with np.errstate(all="ignore"):
        if config.head_kind != "full-gaussian":
            sigma = np.exp(raw[:, d:2 * d])
            z = (targets - raw[:, :d]) / sigma
            vals = (0.5 * d * _LOG_2PI + np.log(sigma).sum(axis=1)
                    + 0.5 * (z * z).sum(axis=1))
        else:
            vals = np.empty(xs.shape[0])
            for b in range(xs.shape[0]):
                chol = np.zeros((d, d))
                diag = np.exp(raw[b, d:2 * d])
                chol[np.diag_indices(d)] = diag
                if d > 1:
                    chol[np.tril_indices(d, -1)] = raw[b, 2 * d:]
                r = targets[b] - raw[b, :d]
                z = _solve_lower(chol, r)
                vals[b] = (0.5 * d * _LOG_2PI + np.log(diag).sum()
                           + 0.5 * np.dot(z, z))
    return float((vals + jac).mean())


def grad(weights: EncoderWeights, config: EncoderConfig, xs, thetas) -> EncoderWeights:
    """Gradient of the batch-mean NLL with respect to every weight and bias.

    Reverse-mode accumulation through the Gaussian head and the tanh stack;
    the Jacobian term of the log transform is constant in the weights and
    so never appears here.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    if xs.shape[0] != thetas.shape[0] or xs.shape[0] < 1:
        raise ValueError("batch of (x, theta) pairs must be nonempty and aligned")
    batch = xs.shape[0]
    d = config.target_dim
    raw, acts = _forward_raw(weights, xs)

    d_raw = np.zeros_like(raw)
    targets, _ = _batch_targets(thetas, config.target_transform)
    if config.head_kind == "full-gaussian":
        for b in range(batch):
            mean = raw[b, :d]
            chol = np.zeros((d, d))
            diag = np.exp(raw[b, d:2 * d])
            chol[np.diag_indices(d)] = diag
            if d > 1:
                chol[np.tril_indices(d, -1)] = raw[b, 2 * d:]
            z = _solve_lower(chol, targets[b] - mean)
            w = _solve_upper_t(chol, z)          # L^-T z
            d_raw[b, :d] = -w
            d_chol = -np.outer(w, z)
            d_chol[np.diag_indices(d)] += 1.0 / diag
            d_raw[b, d:2 * d] = np.diag(d_chol) * diag
            if d > 1:
                d_raw[b, 2 * d:] = d_chol[np.tril_indices(d, -1)]
    else:
        sigma = np.exp(raw[:, d:2 * d])
        zn = (targets - raw[:, :d]) / sigma
        d_raw[:, :d] = -zn / sigma
        d_raw[:, d:2 * d] = 1.0 - zn * zn

    d_raw /= batch
    gw = [np.zeros_like(w) for w in weights.weights]
    gb = [np.zeros_like(b) for b in weights.biases]
    upstream = d_raw
    for j in range(len(weights.weights) - 1, -1, -1):
        gw[j] = upstream.T @ acts[j]
        gb[j] = upstream.sum(axis=0)
        if j > 0:
            upstream = (upstream @ weights.weights[j]) * (1.0 - acts[j] ** 2)
    return EncoderWeights(gw, gb)


def sample(
    head: HeadOutput,
    n: int,
    transform: str = "natural",
    truncate_at_zero: bool = False,
    seed: int = 0,
) -> np.ndarray:
    """Draw n vectors from the head's distribution.

    Zero-truncation rejects draws with any nonpositive component and
    redraws; a head whose estimated acceptance rate falls below 1e-6 is
    reported as degenerate rather than looping forever.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = head.dim
    out = np.empty((n, d))
    filled = 0
    proposed = 0
    while filled < n:
        m = max(n - filled, 1024 if truncate_at_zero else 1)
        z = rng.standard_normal((m, d))
        if head.diag is not None:
            draws = head.mean + z * head.diag
        else:
            draws = head.mean + z @ head.chol.T
        if transform == "log":
            draws = np.exp(draws)
        proposed += m
        if truncate_at_zero:
            draws = draws[(draws > 0).all(axis=1)]
        take = min(n - filled, draws.shape[0])
        out[filled:filled + take] = draws[:take]
        filled += take
        if truncate_at_zero and proposed >= max(1_000_000, 1000 * n):
            if filled / proposed < 1e-6:
                raise RuntimeError(
                    "zero-truncation acceptance rate below 1e-6: degenerate head"
                )
    return out


def save_weights(weights: EncoderWeights, config: EncoderConfig, path,
                 extra: dict | None = None) -> None:
    doc = {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "config": config.to_dict(),
        "layers": [
            {"w": w.tolist(), "b": b.tolist()}
            for w, b in zip(weights.weights, weights.biases)
        ],
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_weights(path) -> tuple[EncoderWeights, EncoderConfig, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != WEIGHTS_FORMAT_VERSION:
        raise ValueError(f"unsupported weights format {doc.get('format_version')!r}")
    config = EncoderConfig.from_dict(doc["config"])
    ws = [np.asarray(layer["w"], dtype=np.float64) for layer in doc["layers"]]
    bs = [np.asarray(layer["b"], dtype=np.float64) for layer in doc["layers"]]
    weights = EncoderWeights(ws, bs)
    expect = config.layer_dims()
    got = [w.shape for w in ws]
    if got != expect:
        raise ValueError(f"layer shapes {got} do not match config {expect}")
    return weights, config, doc.get("extra", {})
