"""Observation summaries fed to the posterior estimators.

The raw state matrix is pooled into per-step counts: total cases, cases per
floor, and rooms holding two or more infected patients. For estimation the
counts are rescaled into [0, 1] by the (maximum observed) population of the
corresponding group, which doubles as the feature normalization for the
neural estimator. In partial-observation workflows the observed-case matrix
Y is what gets summarized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .facility import FacilityTraces, Layout
from .simulator import EpidemicMatrix, INFECTED


def _states(x) -> np.ndarray:
    return x.states if isinstance(x, EpidemicMatrix) else np.asarray(x)


def infected_series(x) -> np.ndarray:
    """Total infected per step; absent entries count as zero."""
    return (_states(x) == INFECTED).sum(axis=0)


def floor_series(x, layout: Layout, traces: FacilityTraces) -> np.ndarray:
    """(K, T) infected counts by the floor each patient occupies that step."""
    s = _states(x) == INFECTED
    counts = np.zeros((layout.n_floors, traces.horizon), dtype=np.int64)
    for t in range(traces.horizon):
        infected = s[:, t] & (traces.presence[:, t] == 1)
        if infected.any():
            by_floor = np.bincount(traces.floor_trace[infected, t],
                                   minlength=layout.n_floors + 1)
            counts[:, t] = by_floor[1:]
    return counts


def multi_room_series(x, layout: Layout, traces: FacilityTraces) -> np.ndarray:
    """Rooms holding at least two infected occupants, per step."""
    s = _states(x) == INFECTED
    out = np.zeros(traces.horizon, dtype=np.int64)
    for t in range(traces.horizon):
        infected = s[:, t] & (traces.presence[:, t] == 1)
        if infected.any():
            per_room = np.bincount(traces.room_trace[infected, t],
                                   minlength=layout.n_rooms)
            out[t] = int((per_room >= 2).sum())
    return out


@dataclass(frozen=True)
class SummaryMatrix:
    """T x (K+2) rescaled summary, columns ordered (I, L1..LK, Rm).

    ``divisors`` records the per-column scaling; columns whose divisor was
    zero are fixed at 0 and flagged. ``unscale`` reverses the scaling back
    to integer counts.
    """

    values: np.ndarray           # (T, K+2), entries in [0, 1]
    divisors: np.ndarray         # (K+2,)
    zero_divisor: np.ndarray     # (K+2,) bool
    column_names: tuple[str, ...]

    @property
    def horizon(self) -> int:
        return int(self.values.shape[0])

    def flat(self) -> np.ndarray:
        """Concatenated columns (I series first), the estimator input."""
        return self.values.T.reshape(-1).copy()

    def unscale(self) -> np.ndarray:
        return np.rint(self.values * self.divisors).astype(np.int64)

    def scale_meta(self) -> dict:
        return {
            "columns": list(self.column_names),
            "divisors": [float(d) for d in self.divisors],
            "zero_divisor": [bool(f) for f in self.zero_divisor],
        }


def summary_columns(n_floors: int) -> tuple[str, ...]:
    return ("I", *(f"L{k}" for k in range(1, n_floors + 1)), "Rm")


def summary_matrix(x, layout: Layout, traces: FacilityTraces) -> SummaryMatrix:
    """Assemble and rescale all summary statistics for one state matrix."""
    i_series = infected_series(x)
    l_series = floor_series(x, layout, traces)
    r_series = multi_room_series(x, layout, traces)
    raw = np.column_stack([i_series, l_series.T, r_series]).astype(np.float64)

    present = traces.presence == 1
    pop_div = float(present.sum(axis=0).max())
    floor_divs = np.zeros(layout.n_floors)
    for t in range(traces.horizon):
        by_floor = np.bincount(traces.floor_trace[present[:, t], t],
                               minlength=layout.n_floors + 1)[1:]
        floor_divs = np.maximum(floor_divs, by_floor)
    divisors = np.concatenate(([pop_div], floor_divs, [float(layout.n_rooms)]))

    zero = divisors == 0.0
    values = np.zeros_like(raw)
    np.divide(raw, divisors, out=values, where=~zero)
    return SummaryMatrix(values=values, divisors=divisors, zero_divisor=zero,
                         column_names=summary_columns(layout.n_floors))


def scalar_summary(series) -> float:
    """Arithmetic mean of a summary series."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.size < 1:
        raise ValueError("series must have at least one step")
    return float(arr.mean())


def write_summary_csv(sm: SummaryMatrix, path, meta_path=None) -> None:
    """One row per step plus a sidecar JSON of the scaling metadata."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t," + ",".join(sm.column_names) + "\n")
        for t in range(sm.horizon):
            row = ",".join(format(v, ".17g") for v in sm.values[t])
            fh.write(f"{t + 1},{row}\n")
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(sm.scale_meta(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_summary_csv(path, meta_path=None) -> SummaryMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t":
            raise ValueError("summary CSV must start with a 't' column")
        names = tuple(header[1:])
        rows = [line.strip().split(",")[1:] for line in fh if line.strip()]
    values = np.asarray(rows, dtype=np.float64)
    divisors = np.full(len(names), np.nan)
    zero = np.zeros(len(names), dtype=bool)
    if meta_path is not None:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
        if tuple(meta["columns"]) != names:
            raise ValueError("scale metadata does not match summary columns")
        divisors = np.asarray(meta["divisors"], dtype=np.float64)
        zero = np.asarray(meta["zero_divisor"], dtype=bool)
    return SummaryMatrix(values=values, divisors=divisors, zero_divisor=zero,
                         column_names=names)
