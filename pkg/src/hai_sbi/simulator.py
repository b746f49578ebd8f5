"""Stochastic discrete-time SI simulators with spatially heterogeneous rates.

Transmission hazards combine a facility-wide rate, one rate per floor, and a
shared room rate, each divided by the current occupancy of the corresponding
group. Three forward models share that hazard: full observation with random
patient turnover, partial observation (screening plus per-step symptom
onset), and trace-driven simulation where admissions, discharges, and
screening results are fixed by data.

All randomness comes from counter-based streams (see rng.py), so a seed
pins the output exactly regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .facility import FacilityTraces, Layout, TraceError, step_assignments, validate

ABSENT = -1  # state entry for patient-weeks outside the facility
SUSCEPTIBLE = 0
INFECTED = 1


@dataclass(frozen=True)
class RateVector:
    """Transmission rates ordered (facility, floor 1..K, room), length K+2."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=np.float64)
        object.__setattr__(self, "beta", b)
        if b.ndim != 1 or b.size < 3:
            raise ValueError("rate vector needs at least (facility, floor, room)")
        if not np.isfinite(b).all() or (b < 0).any():
            raise ValueError("rates must be finite and nonnegative")

    @property
    def n_floors(self) -> int:
        return int(self.beta.size - 2)

    @property
    def facility(self) -> float:
        return float(self.beta[0])

    @property
    def floor_rates(self) -> np.ndarray:
        """Per-floor rates; index k-1 is floor k."""
        return self.beta[1:-1]

    @property
    def room(self) -> float:
        return float(self.beta[-1])

    @classmethod
    def homogeneous(cls, beta: float, n_floors: int = 1) -> "RateVector":
        """Facility-only mixing: floor and room rates zero."""
        b = np.zeros(n_floors + 2)
        b[0] = beta
        return cls(b)


@dataclass(frozen=True)
class SimParams:
    """Known nuisance parameters: import proportion, turnover, observation."""

    alpha: float
    gamma: float
    eta: float | None = None
    seed: int = 0

    def __post_init__(self):
        for name in ("alpha", "gamma", "eta"):
            p = getattr(self, name)
            if p is not None and not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class EpidemicMatrix:
    """N x T state matrix; entries 0/1 within stays, ABSENT outside them."""

    states: np.ndarray
    kind: str  # "colonization" | "observation"

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int8)
        object.__setattr__(self, "states", s)
        if s.ndim != 2:
            raise ValueError("states must be an N x T matrix")
        if not np.isin(s, (ABSENT, SUSCEPTIBLE, INFECTED)).all():
            raise ValueError("states must be 0, 1, or absent")
        if self.kind not in ("colonization", "observation"):
            raise ValueError("kind must be 'colonization' or 'observation'")

    @property
    def n_patients(self) -> int:
        return int(self.states.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.states.shape[1])


@dataclass(frozen=True)
class InterventionSpec:
    """Nonnegative multipliers applied componentwise to a rate vector."""

    facility_scale: float = 1.0
    per_floor_scale: np.ndarray | float = 1.0
    room_scale: float = 1.0
    label: str = "intervention"

    def multipliers(self, n_floors: int) -> np.ndarray:
        per_floor = np.broadcast_to(
            np.asarray(self.per_floor_scale, dtype=np.float64), (n_floors,)
        )
        m = np.concatenate(([self.facility_scale], per_floor, [self.room_scale]))
        if (m < 0).any() or not np.isfinite(m).all():
            raise ValueError("intervention multipliers must be finite and >= 0")
        return m


def apply_intervention(rates: RateVector, spec: InterventionSpec) -> RateVector:
    """Scaled copy of the rates; the input is untouched."""
    return RateVector(rates.beta * spec.multipliers(rates.n_floors))


def hazard_vector(
    present: np.ndarray,
    floors: np.ndarray,
    rooms: np.ndarray,
    prev_infected: np.ndarray,
    rates: RateVector,
    n_rooms: int,
) -> np.ndarray:
    """Force of infection for every patient present at the step.

    ``prev_infected`` marks patients infected at the previous step; only
    those also present now spread. Each of the three terms divides its rate
    by the current occupancy of the group and is zero when that occupancy
    is 0 or 1 (nobody to be infected by).
    """
    lam = np.zeros(present.shape[0])
    n_present = int(present.sum())
    if n_present <= 1:
        return lam
    spreading = prev_infected & present
    fac_term = rates.facility / n_present * int(spreading.sum())

    k = rates.n_floors
    floor_pop = np.bincount(floors[present], minlength=k + 1)
    floor_inf = np.bincount(floors[spreading], minlength=k + 1)
    per_floor = np.zeros(k + 1)
    per_floor[1:] = rates.floor_rates / np.maximum(floor_pop[1:], 1) * floor_inf[1:]
    per_floor[floor_pop <= 1] = 0.0

    room_pop = np.bincount(rooms[present], minlength=n_rooms)
    room_inf = np.bincount(rooms[spreading], minlength=n_rooms)
    per_room = rates.room / np.maximum(room_pop, 1) * room_inf
    per_room[room_pop <= 1] = 0.0

    lam[present] = fac_term + per_floor[floors[present]] + per_room[rooms[present]]
    return lam


def force_of_infection(i: int, prev_states, contacts, rates: RateVector) -> float:
    """Hazard acting on patient i given last step's states and this step's contacts.

    Meaningful for a patient present and susceptible at the prior step; the
    aggregate form (hazard_vector) is what the simulators use.
    """
    x = np.asarray(prev_states) == INFECTED
    n_present = contacts.n_present
    if n_present <= 1 or not contacts.present[i]:
        return 0.0
    spreading = x & contacts.present
    lam = rates.facility / n_present * int(spreading.sum())
    k = int(contacts.floor_at[i])
    floor_pop = int(contacts.floor_population[k - 1])
    if floor_pop > 1:
        lam += rates.floor_rates[k - 1] / floor_pop * int(contacts.c_floor[i] @ x)
    r = int(contacts.room_at[i])
    room_pop = int(contacts.room_population[r])
    if room_pop > 1:
        lam += rates.room / room_pop * int(contacts.c_room[i] @ x)
    return float(lam)


def _check_static(layout: Layout, rates: RateVector) -> None:
    if layout.floor_of is None:
        raise ValueError("static simulators need a bedded layout (fixed floor/room per location)")
    if rates.n_floors != layout.n_floors:
        raise ValueError(
            f"rate vector has {rates.n_floors} floor rates, layout has {layout.n_floors} floors"
        )


def simulate_full(
    layout: Layout, params: SimParams, rates: RateVector, horizon: int
) -> EpidemicMatrix:
    """Fully observed SI epidemic with random discharge/replacement.

    Locations start Bernoulli(alpha) infected. Each later step, every
    location is independently turned over with probability gamma (the new
    patient is infected with probability alpha and is immune to infection
    this step); remaining susceptibles convert with probability
    1 - exp(-hazard) computed from the previous step's infecteds.
    """
    _check_static(layout, rates)
    n = layout.n_locations
    floors = layout.floor_of
    rooms = layout.room_of
    present = np.ones(n, dtype=bool)
    x = np.empty((n, horizon), dtype=np.int8)
    x[:, 0] = rng.step_uniforms(params.seed, 1, rng.INIT, n) < params.alpha
    for t in range(2, horizon + 1):
        prev_inf = x[:, t - 2] == INFECTED
        lam = hazard_vector(present, floors, rooms, prev_inf, rates, layout.n_rooms)
        p_infect = -np.expm1(-lam)
        turned = rng.step_uniforms(params.seed, t, rng.DISCHARGE, n) < params.gamma
        admit_inf = rng.step_uniforms(params.seed, t, rng.ADMIT_STATUS, n) < params.alpha
        caught = rng.step_uniforms(params.seed, t, rng.INFECT, n) < p_infect
        stay_state = np.where(prev_inf, INFECTED, caught.astype(np.int8))
        x[:, t - 1] = np.where(turned, admit_inf.astype(np.int8), stay_state)
    return EpidemicMatrix(states=x, kind="colonization")


def simulate_partial(
    layout: Layout, params: SimParams, rates: RateVector, horizon: int
) -> tuple[EpidemicMatrix, EpidemicMatrix]:
    """Partially observed epidemic: (colonization X, observed cases Y).

    X is bit-identical to simulate_full under the same seed. Y starts as
    the admission screen (Y1 = X1), copies X on every later admission, and
    otherwise flips 0 -> 1 with probability eta per step while the patient
    is colonized but unobserved. Observed status never reverts within a
    stay and never exceeds X.
    """
    if params.eta is None:
        raise ValueError("simulate_partial needs eta (per-step observation probability)")
    _check_static(layout, rates)
    n = layout.n_locations
    floors = layout.floor_of
    rooms = layout.room_of
    present = np.ones(n, dtype=bool)
    x = np.empty((n, horizon), dtype=np.int8)
    y = np.empty((n, horizon), dtype=np.int8)
    x[:, 0] = rng.step_uniforms(params.seed, 1, rng.INIT, n) < params.alpha
    y[:, 0] = x[:, 0]
    for t in range(2, horizon + 1):
        prev_inf = x[:, t - 2] == INFECTED
        lam = hazard_vector(present, floors, rooms, prev_inf, rates, layout.n_rooms)
        p_infect = -np.expm1(-lam)
        turned = rng.step_uniforms(params.seed, t, rng.DISCHARGE, n) < params.gamma
        admit_inf = rng.step_uniforms(params.seed, t, rng.ADMIT_STATUS, n) < params.alpha
        caught = rng.step_uniforms(params.seed, t, rng.INFECT, n) < p_infect
        stay_state = np.where(prev_inf, INFECTED, caught.astype(np.int8))
        xt = np.where(turned, admit_inf.astype(np.int8), stay_state)
        x[:, t - 1] = xt

        onset = rng.step_uniforms(params.seed, t, rng.OBSERVE, n) < params.eta
        prev_y = y[:, t - 2]
        flips = (xt == INFECTED) & (prev_y == 0) & onset
        yt = np.where(flips, INFECTED, prev_y)
        y[:, t - 1] = np.where(turned, xt, yt)  # new admissions are screened
    return (
        EpidemicMatrix(states=x, kind="colonization"),
        EpidemicMatrix(states=y, kind="observation"),
    )


def simulate_trace(
    layout: Layout,
    traces: FacilityTraces,
    rates: RateVector,
    seed: int,
    check_traces: bool = True,
) -> EpidemicMatrix:
    """Trace-driven epidemic: admissions, discharges, and screens are data.

    Screening fixes the state at every admission step; within a stay,
    susceptibles convert with probability 1 - exp(-hazard) where the hazard
    uses this step's contact structure and last step's infection statuses.
    Patients absent at a step neither infect nor appear in occupancies.
    """
    if rates.n_floors != layout.n_floors:
        raise ValueError(
            f"rate vector has {rates.n_floors} floor rates, layout has {layout.n_floors} floors"
        )
    if check_traces:
        violations = validate(layout, traces)
        if violations:
            head = "; ".join(str(v) for v in violations[:5])
            raise TraceError(f"{len(violations)} trace violations, e.g. {head}")
    n, horizon = traces.n_rows, traces.horizon
    adm = traces.admission_mask()
    x = np.full((n, horizon), ABSENT, dtype=np.int8)
    for t in range(1, horizon + 1):
        present, floors, rooms = step_assignments(traces, t)
        newly = adm[:, t - 1]
        x[newly, t - 1] = traces.screening[newly, t - 1]
        continuing = present & ~newly
        if not continuing.any():
            continue
        prev_inf = x[:, t - 2] == INFECTED
        lam = hazard_vector(present, floors, rooms, prev_inf, rates, layout.n_rooms)
        caught = rng.step_uniforms(seed, t, rng.INFECT, n) < -np.expm1(-lam)
        stays_inf = continuing & prev_inf
        sus = continuing & ~prev_inf
        x[stays_inf, t - 1] = INFECTED
        x[sus, t - 1] = caught[sus].astype(np.int8)
    return EpidemicMatrix(states=x, kind="colonization")


def write_epidemic_csv(matrix: EpidemicMatrix, path) -> None:
    """All patient-weeks as ``patient_id,week,state`` with NA outside stays."""
    s = matrix.states
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("patient_id,week,state\n")
        for i in range(s.shape[0]):
            for t in range(s.shape[1]):
                state = "NA" if s[i, t] == ABSENT else str(int(s[i, t]))
                fh.write(f"{i + 1},{t + 1},{state}\n")


def read_epidemic_csv(path, kind: str = "colonization") -> EpidemicMatrix:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "patient_id,week,state":
            raise ValueError(f"unexpected epidemic header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            pid, week, state = line.strip().split(",")
            rows.append((int(pid), int(week), ABSENT if state == "NA" else int(state)))
    if not rows:
        raise ValueError("empty epidemic file")
    n = max(r[0] for r in rows)
    horizon = max(r[1] for r in rows)
    states = np.full((n, horizon), ABSENT, dtype=np.int8)
    for pid, week, state in rows:
        states[pid - 1, week - 1] = state
    return EpidemicMatrix(states=states, kind=kind)
