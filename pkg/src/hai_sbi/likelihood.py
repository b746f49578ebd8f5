"""Exact probability computations for the SI transmission models.

Everything is done in natural-log space; functions return plain floats that
may be -inf for impossible data but are never NaN. The fully observed model
has a tractable autoregressive likelihood; the partially observed model is
only tractable by brute-force enumeration on tiny instances, which is
provided here purely as a test oracle.
"""

from __future__ import annotations

import itertools

import numpy as np

from .facility import Layout
from .simulator import ABSENT, INFECTED, EpidemicMatrix, RateVector, SimParams, hazard_vector

_NEG_INF = float("-inf")


def _log(p: float) -> float:
    return np.log(p) if p > 0.0 else _NEG_INF


def transition_log_prob(
    x_prev: int, x_next: int, lam: float, gamma: float, alpha: float
) -> float:
    """Log-probability of one patient-location transition.

    The four cases combine discharge/replacement (rate gamma, replacement
    infected with probability alpha) with infection of a retained
    susceptible at hazard lam. Infected patients never revert except by
    replacement.
    """
    if lam < 0:
        raise ValueError("hazard must be nonnegative")
    esc = np.exp(-lam)
    if x_prev == 1:
        p = gamma * alpha + (1.0 - gamma) if x_next == 1 else gamma * (1.0 - alpha)
    elif x_next == 1:
        p = gamma * alpha + (1.0 - gamma) * (1.0 - esc)
    else:
        p = gamma * (1.0 - alpha) + (1.0 - gamma) * esc
    return _log(p)


def _step_log_prob(prev: np.ndarray, nxt: np.ndarray, lam: np.ndarray,
                   gamma: float, alpha: float) -> float:
    """Summed per-patient transition log-probability for one step."""
    esc = np.exp(-lam)
    p = np.where(
        prev,
        np.where(nxt, gamma * alpha + (1.0 - gamma), gamma * (1.0 - alpha)),
        np.where(nxt,
                 gamma * alpha + (1.0 - gamma) * (1.0 - esc),
                 gamma * (1.0 - alpha) + (1.0 - gamma) * esc),
    )
    if (p <= 0.0).any():
        return _NEG_INF
    return float(np.log(p).sum())


def _initial_log_prob(x1: np.ndarray, alpha: float) -> float:
    n1 = int((x1 == 1).sum())
    n0 = x1.size - n1
    total = 0.0
    for count, p in ((n1, alpha), (n0, 1.0 - alpha)):
        if count:
            if p <= 0.0:
                return _NEG_INF
            total += count * np.log(p)
    return total


def _states_or_raise(x) -> np.ndarray:
    s = x.states if isinstance(x, EpidemicMatrix) else np.asarray(x, dtype=np.int8)
    if (s == ABSENT).any():
        raise ValueError("full-observation likelihood needs a matrix without absences")
    return s


def log_likelihood_full(
    x, rates: RateVector, params: SimParams, layout: Layout
) -> float:
    """Exact log-likelihood of a fully observed colonization matrix.

    Factorizes as the initial Bernoulli(alpha) product times the
    autoregressive one-step transitions, with the heterogeneous hazard
    recomputed from the previous column at every step.
    """
    s = _states_or_raise(x)
    if layout.floor_of is None:
        raise ValueError("full-observation likelihood needs a bedded layout")
    if s.shape[0] != layout.n_locations:
        raise ValueError("state matrix rows must match layout locations")
    if rates.n_floors != layout.n_floors:
        raise ValueError("rate vector does not match layout floor count")
    present = np.ones(s.shape[0], dtype=bool)
    total = _initial_log_prob(s[:, 0], params.alpha)
    for t in range(1, s.shape[1]):
        if total == _NEG_INF:
            return _NEG_INF
        prev = s[:, t - 1] == INFECTED
        lam = hazard_vector(present, layout.floor_of, layout.room_of, prev,
                            rates, layout.n_rooms)
        total += _step_log_prob(prev, s[:, t] == INFECTED, lam, params.gamma, params.alpha)
    return total


def log_likelihood_homogeneous(x, beta: float, params: SimParams) -> float:
    """O(T*N) likelihood under facility-wide random mixing.

    Independent implementation of the special case where all floor and
    room rates are zero: every susceptible sees hazard beta * I/N.
    """
    s = _states_or_raise(x)
    n = s.shape[0]
    total = _initial_log_prob(s[:, 0], params.alpha)
    for t in range(1, s.shape[1]):
        if total == _NEG_INF:
            return _NEG_INF
        prev = s[:, t - 1] == INFECTED
        lam = np.zeros(n)
        if n > 1:
            lam[:] = beta / n * int(prev.sum())
        total += _step_log_prob(prev, s[:, t] == INFECTED, lam, params.gamma, params.alpha)
    return total


def obs_log_prob_given_x(y, x, eta: float) -> float:
    """Log P(observed cases | colonization) in the no-turnover regime.

    Matches the partial-observation simulator: the admission screen pins
    Y1 = X1; afterwards each colonized-but-unobserved patient is observed
    with probability eta per step, so the first observation of a patient
    colonized after admission is geometric in the number of colonized
    steps. Returns -inf for observation patterns the rules forbid.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must be in [0, 1]")
    sx = _states_or_raise(x)
    sy = _states_or_raise(y)
    if sx.shape != sy.shape:
        raise ValueError("X and Y must have equal shape")
    total = 0.0
    one_minus = 1.0 - eta
    for i in range(sx.shape[0]):
        xi = sx[i] == 1
        yi = sy[i] == 1
        if yi[0] != xi[0]:        # admission screen is exact
            return _NEG_INF
        if (yi & ~xi).any():      # rule: uncolonized never symptomatic
            return _NEG_INF
        if (yi[:-1] & ~yi[1:]).any():   # rule: symptoms never revert
            return _NEG_INF
        if xi[0]:
            continue  # screened positive: Y is forced, contributes log 1
        obs_at = np.flatnonzero(yi)
        if obs_at.size == 0:
            n_chances = int(xi.sum())   # every colonized step failed to show
            if n_chances:
                if one_minus <= 0.0:
                    return _NEG_INF
                total += n_chances * np.log(one_minus)
        else:
            s_first = obs_at[0]
            if not xi[s_first]:
                return _NEG_INF
            n_failed = int(xi[:s_first].sum())
            if eta <= 0.0:
                return _NEG_INF
            if n_failed:
                if one_minus <= 0.0:
                    return _NEG_INF
                total += n_failed * np.log(one_minus)
            total += np.log(eta)
    return total


def _monotone_rows(horizon: int):
    """All within-stay monotone 0/1 rows of length horizon."""
    rows = []
    for first in range(horizon + 1):
        row = np.zeros(horizon, dtype=np.int8)
        row[first:] = 1
        rows.append(row)
    return rows


def marginal_log_lik_partial_enum(
    y, rates: RateVector, eta: float, layout: Layout, alpha: float,
    max_cells: int = 20,
) -> float:
    """Observed-data log-likelihood by summing out the latent colonizations.

    Only valid with no turnover (gamma = 0), where colonization paths are
    monotone; enumeration is guarded to tiny instances and exists as an
    oracle for the simulation-based estimators, not for production fits.
    """
    sy = _states_or_raise(y)
    n, horizon = sy.shape
    if n * horizon > max_cells:
        raise ValueError(f"enumeration guard: N*T = {n * horizon} > {max_cells}")
    params = SimParams(alpha=alpha, gamma=0.0)
    rows = _monotone_rows(horizon)
    log_terms = []
    for combo in itertools.product(rows, repeat=n):
        sx = np.stack(combo)
        lp_obs = obs_log_prob_given_x(sy, sx, eta)
        if lp_obs == _NEG_INF:
            continue
        lp_x = log_likelihood_full(sx, rates, params, layout)
        if lp_x == _NEG_INF:
            continue
        log_terms.append(lp_x + lp_obs)
    if not log_terms:
        return _NEG_INF
    arr = np.asarray(log_terms)
    peak = arr.max()
    return float(peak + np.log(np.exp(arr - peak).sum()))


def r0(rates, gamma: float, alpha: float) -> float:
    """Basic reproduction number under geometric stay lengths.

    A scalar rate gives beta / (gamma (1 - alpha)); a rate vector averages
    the floor rates (an infected patient occupies one floor) into
    beta_bar = beta_0 + mean(floor rates) + beta_room.
    """
    denom = gamma * (1.0 - alpha)
    if denom <= 0.0:
        raise ValueError("R0 undefined: gamma * (1 - alpha) must be positive")
    if isinstance(rates, RateVector):
        beta_bar = rates.facility + rates.floor_rates.mean() + rates.room
    else:
        beta_bar = float(rates)
    return beta_bar / denom
