"""Facility geometry and patient traces.

A facility is a set of floors and rooms. Patients (or fixed bed locations)
move through it over a weekly horizon; the traces record who is present
where at every step, plus admission screening results. Contact structure
for the transmission model is derived from the traces one step at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ABSENT_FLOOR = 0     # floor_trace sentinel where not present (floors are 1..K)
ABSENT_ROOM = -1     # room_trace sentinel where not present (rooms are 0..R-1)
NO_SCREEN = -1       # screening sentinel outside admission steps


class TraceError(ValueError):
    """Raised when traces are structurally inconsistent with a layout."""


@dataclass(frozen=True)
class Layout:
    """Static facility geometry: K floors, R rooms, optional fixed bed map.

    ``floor_of``/``room_of`` give each fixed location its floor and room and
    are present for static (full-occupancy) facilities; trace-driven
    facilities index patients instead and carry only the room->floor table.
    """

    n_floors: int
    floor_of_room: np.ndarray               # (n_rooms,) values in 1..K
    floor_of: np.ndarray | None = None      # (N,) values in 1..K
    room_of: np.ndarray | None = None       # (N,) values in 0..R-1

    def __post_init__(self):
        if self.n_floors < 1:
            raise ValueError("n_floors must be >= 1")
        fr = np.asarray(self.floor_of_room, dtype=np.int64)
        object.__setattr__(self, "floor_of_room", fr)
        if fr.size < 1 or fr.min() < 1 or fr.max() > self.n_floors:
            raise ValueError("floor_of_room entries must lie in 1..n_floors")
        if (self.floor_of is None) != (self.room_of is None):
            raise ValueError("floor_of and room_of must be given together")
        if self.floor_of is not None:
            fo = np.asarray(self.floor_of, dtype=np.int64)
            ro = np.asarray(self.room_of, dtype=np.int64)
            object.__setattr__(self, "floor_of", fo)
            object.__setattr__(self, "room_of", ro)
            if fo.shape != ro.shape:
                raise ValueError("floor_of and room_of must have equal length")
            if ro.min() < 0 or ro.max() >= fr.size:
                raise ValueError("room_of entries must lie in 0..n_rooms-1")
            if not np.array_equal(fo, fr[ro]):
                raise ValueError("floor_of disagrees with floor_of_room(room_of)")
            if np.bincount(fo, minlength=self.n_floors + 1)[1:].min() < 1:
                raise ValueError("every floor needs at least one location")

    @property
    def n_rooms(self) -> int:
        return int(self.floor_of_room.size)

    @property
    def n_locations(self) -> int | None:
        return None if self.floor_of is None else int(self.floor_of.size)


@dataclass(frozen=True)
class FacilityTraces:
    """Per-patient, per-week presence, location, and screening records.

    ``index_kind`` records whether row i is a fixed bed location (static
    simulators with random turnover) or an individual patient (trace-driven
    simulation).
    """

    horizon: int
    presence: np.ndarray       # (N, T) in {0, 1}
    floor_trace: np.ndarray    # (N, T), ABSENT_FLOOR where not present
    room_trace: np.ndarray     # (N, T), ABSENT_ROOM where not present
    screening: np.ndarray      # (N, T), NO_SCREEN except at admission steps
    index_kind: str = "location"   # "location" | "patient"

    def __post_init__(self):
        for name in ("presence", "floor_trace", "room_trace", "screening"):
            arr = np.asarray(getattr(self, name))
            object.__setattr__(self, name, arr)
            if arr.shape != (self.n_rows, self.horizon):
                raise ValueError(f"{name} must be shaped (N, horizon)")
        if self.index_kind not in ("location", "patient"):
            raise ValueError("index_kind must be 'location' or 'patient'")

    @property
    def n_rows(self) -> int:
        return int(np.asarray(self.presence).shape[0])

    def admission_mask(self) -> np.ndarray:
        """Boolean (N, T): present now and absent (or nonexistent) before."""
        w = self.presence == 1
        adm = np.zeros_like(w)
        adm[:, 0] = w[:, 0]
        adm[:, 1:] = w[:, 1:] & ~w[:, :-1]
        return adm


@dataclass(frozen=True)
class ContactMatrices:
    """Contact structure for one time step.

    ``c_floor``/``c_room`` are symmetric 0/1 matrices with zero diagonal;
    an entry is 1 only between distinct patients present at the step and
    sharing a floor (resp. room). Populations are current occupancy, not
    capacity.
    """

    c_floor: np.ndarray           # (N, N)
    c_room: np.ndarray            # (N, N)
    floor_population: np.ndarray  # (K,) occupancy of floor k at index k-1
    room_population: np.ndarray   # (R,)
    present: np.ndarray           # (N,) bool
    floor_at: np.ndarray          # (N,), ABSENT_FLOOR where absent
    room_at: np.ndarray           # (N,), ABSENT_ROOM where absent

    @property
    def n_present(self) -> int:
        return int(self.present.sum())


def step_assignments(traces: FacilityTraces, t: int):
    """(present, floors, rooms) at 1-based step t, with absence sentinels."""
    if not 1 <= t <= traces.horizon:
        raise ValueError(f"step {t} outside 1..{traces.horizon}")
    j = t - 1
    present = traces.presence[:, j] == 1
    return present, traces.floor_trace[:, j], traces.room_trace[:, j]


def contact_matrices(layout: Layout, traces: FacilityTraces, t: int) -> ContactMatrices:
    """Build floor/room contact matrices and occupancies for step t (1-based).

    Raises TraceError if a present patient sits in a room whose floor
    disagrees with the layout's room->floor table.
    """
    present, floors, rooms = step_assignments(traces, t)
    idx = np.flatnonzero(present)
    for i in idx:
        r = rooms[i]
        if r < 0 or r >= layout.n_rooms:
            raise TraceError(f"patient {i} at step {t}: room {r} not in layout")
        if layout.floor_of_room[r] != floors[i]:
            raise TraceError(
                f"patient {i} at step {t}: room {r} is on floor "
                f"{layout.floor_of_room[r]}, trace says floor {floors[i]}"
            )
    n = traces.n_rows
    c_floor = np.zeros((n, n), dtype=np.uint8)
    c_room = np.zeros((n, n), dtype=np.uint8)
    if idx.size:
        same_floor = floors[idx, None] == floors[None, idx]
        same_room = rooms[idx, None] == rooms[None, idx]
        np.fill_diagonal(same_floor, False)
        np.fill_diagonal(same_room, False)
        c_floor[np.ix_(idx, idx)] = same_floor
        c_room[np.ix_(idx, idx)] = same_room
    floor_pop = np.bincount(floors[present], minlength=layout.n_floors + 1)[1:]
    room_pop = np.bincount(rooms[present], minlength=layout.n_rooms)
    return ContactMatrices(
        c_floor=c_floor,
        c_room=c_room,
        floor_population=floor_pop,
        room_population=room_pop,
        present=present,
        floor_at=floors.copy(),
        room_at=rooms.copy(),
    )


@dataclass(frozen=True)
class Violation:
    """One invariant failure, with coordinates for locating it."""

    patient: int | None
    step: int | None
    message: str

    def __str__(self):
        where = []
        if self.patient is not None:
            where.append(f"patient {self.patient}")
        if self.step is not None:
            where.append(f"step {self.step}")
        prefix = ", ".join(where)
        return f"{prefix}: {self.message}" if prefix else self.message


def validate(layout: Layout, traces: FacilityTraces) -> list[Violation]:
    """Check every trace invariant; an empty list means the fixture is ok."""
    v: list[Violation] = []
    w = traces.presence
    if not np.isin(w, (0, 1)).all():
        v.append(Violation(None, None, "presence entries must be 0 or 1"))
        return v
    present = w == 1
    adm = traces.admission_mask()

    floor_def = traces.floor_trace != ABSENT_FLOOR
    room_def = traces.room_trace != ABSENT_ROOM
    screen_def = traces.screening != NO_SCREEN
    for i, t in zip(*np.nonzero(floor_def != present)):
        what = "floor defined while absent" if floor_def[i, t] else "floor missing while present"
        v.append(Violation(int(i), int(t) + 1, what))
    for i, t in zip(*np.nonzero(room_def != present)):
        what = "room defined while absent" if room_def[i, t] else "room missing while present"
        v.append(Violation(int(i), int(t) + 1, what))
    for i, t in zip(*np.nonzero(screen_def != adm)):
        what = ("screening result outside an admission step"
                if screen_def[i, t] else "missing screening result at admission")
        v.append(Violation(int(i), int(t) + 1, what))

    bad_screen = screen_def & ~np.isin(traces.screening, (0, 1))
    for i, t in zip(*np.nonzero(bad_screen)):
        v.append(Violation(int(i), int(t) + 1,
                           f"screening value {traces.screening[i, t]} not 0/1"))

    ok_room = present & room_def
    rooms = traces.room_trace
    floors = traces.floor_trace
    out_of_range = ok_room & ((rooms < 0) | (rooms >= layout.n_rooms))
    for i, t in zip(*np.nonzero(out_of_range)):
        v.append(Violation(int(i), int(t) + 1, f"room {rooms[i, t]} not in layout"))
    in_range = ok_room & ~out_of_range
    mismatch = in_range & (layout.floor_of_room[np.clip(rooms, 0, layout.n_rooms - 1)] != floors)
    for i, t in zip(*np.nonzero(mismatch)):
        v.append(Violation(int(i), int(t) + 1,
                           f"room {rooms[i, t]} lies on floor "
                           f"{layout.floor_of_room[rooms[i, t]]}, trace says {floors[i, t]}"))

    if traces.index_kind == "location" and layout.floor_of is not None:
        if traces.n_rows != layout.n_locations:
            v.append(Violation(None, None,
                               f"{traces.n_rows} trace rows for {layout.n_locations} locations"))
        else:
            drift = present & (floors != layout.floor_of[:, None])
            for i, t in zip(*np.nonzero(drift)):
                v.append(Violation(int(i), int(t) + 1,
                                   "location-indexed trace moved off its fixed floor"))
    return v


def static_layout(
    n_floors: int,
    locations_per_floor: int,
    beds_per_room: int,
    horizon: int = 52,
) -> tuple[Layout, FacilityTraces]:
    """Fully occupied facility: fixed beds, no movement, everyone present.

    Rooms are filled sequentially floor by floor, ``beds_per_room`` beds
    each; ``locations_per_floor`` must be divisible by ``beds_per_room``.
    """
    if min(n_floors, locations_per_floor, beds_per_room, horizon) < 1:
        raise ValueError("all counts must be >= 1")
    if locations_per_floor % beds_per_room != 0:
        raise ValueError("locations_per_floor must be divisible by beds_per_room")
    n = n_floors * locations_per_floor
    rooms_per_floor = locations_per_floor // beds_per_room
    floor_of = np.repeat(np.arange(1, n_floors + 1), locations_per_floor)
    room_of = np.arange(n) // beds_per_room
    floor_of_room = np.repeat(np.arange(1, n_floors + 1), rooms_per_floor)
    layout = Layout(n_floors=n_floors, floor_of_room=floor_of_room,
                    floor_of=floor_of, room_of=room_of)

    presence = np.ones((n, horizon), dtype=np.int8)
    floor_trace = np.repeat(floor_of[:, None], horizon, axis=1)
    room_trace = np.repeat(room_of[:, None], horizon, axis=1)
    screening = np.full((n, horizon), NO_SCREEN, dtype=np.int8)
    screening[:, 0] = 0  # admission step exists formally; simulators overwrite
    traces = FacilityTraces(horizon=horizon, presence=presence,
                            floor_trace=floor_trace, room_trace=room_trace,
                            screening=screening, index_kind="location")
    return layout, traces


def synth_traces(
    layout: Layout,
    horizon: int,
    admission_rate: float,
    mean_stay: float,
    screen_positive_rate: float,
    seed: int,
) -> FacilityTraces:
    """Synthesize patient-indexed traces over a bedded layout.

    Beds start fully occupied; stay lengths are geometric with mean
    ``mean_stay`` weeks; an empty bed admits a new patient each week with
    probability ``admission_rate``; each admission carries an independent
    screening result. Patients keep one bed for their whole stay and never
    readmit. Deterministic given the seed.
    """
    if layout.floor_of is None:
        raise ValueError("synth_traces needs a bedded (static) layout")
    for name, p in (("admission_rate", admission_rate),
                    ("screen_positive_rate", screen_positive_rate)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name} must be in [0, 1]")
    if mean_stay < 1.0:
        raise ValueError("mean_stay must be >= 1 week")
    rng = np.random.default_rng(seed)
    p_leave = 1.0 / mean_stay

    stays = []  # (bed, admit_week, last_week, screen)
    for bed in range(layout.n_locations):
        t = 1  # initial cohort occupies every bed at week 1
        while t <= horizon:
            stay_len = int(rng.geometric(p_leave))
            last = min(t + stay_len - 1, horizon)
            screen = int(rng.random() < screen_positive_rate)
            stays.append((bed, t, last, screen))
            t = last + 1
            while t <= horizon and not (rng.random() < admission_rate):
                t += 1

    n = len(stays)
    presence = np.zeros((n, horizon), dtype=np.int8)
    floor_trace = np.full((n, horizon), ABSENT_FLOOR, dtype=np.int16)
    room_trace = np.full((n, horizon), ABSENT_ROOM, dtype=np.int32)
    screening = np.full((n, horizon), NO_SCREEN, dtype=np.int8)
    for pid, (bed, first, last, screen) in enumerate(stays):
        sl = slice(first - 1, last)
        presence[pid, sl] = 1
        floor_trace[pid, sl] = layout.floor_of[bed]
        room_trace[pid, sl] = layout.room_of[bed]
        screening[pid, first - 1] = screen
    return FacilityTraces(horizon=horizon, presence=presence,
                          floor_trace=floor_trace, room_trace=room_trace,
                          screening=screening, index_kind="patient")


def write_layout_csv(layout: Layout, path) -> None:
    """Room->floor table as CSV with header ``room,floor``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("room,floor\n")
        for r in range(layout.n_rooms):
            fh.write(f"{r},{layout.floor_of_room[r]}\n")


def read_layout_csv(path) -> Layout:
    rooms, floors = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "room,floor":
            raise ValueError(f"unexpected layout header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            r, f = line.strip().split(",")
            rooms.append(int(r))
            floors.append(int(f))
    order = np.argsort(rooms, kind="stable")
    room_ids = np.asarray(rooms)[order]
    if not np.array_equal(room_ids, np.arange(len(room_ids))):
        raise ValueError("room ids must be the integers 0..R-1")
    floor_of_room = np.asarray(floors)[order]
    return Layout(n_floors=int(floor_of_room.max()), floor_of_room=floor_of_room)


def write_traces_csv(traces: FacilityTraces, path) -> None:
    """Flat table ``patient_id,week,floor,room,screen_result``, present rows only."""
    adm = traces.admission_mask()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("patient_id,week,floor,room,screen_result\n")
        for i in range(traces.n_rows):
            for t in np.flatnonzero(traces.presence[i] == 1):
                screen = "NA"
                if adm[i, t]:
                    screen = str(int(traces.screening[i, t]))
                fh.write(f"{i + 1},{t + 1},{traces.floor_trace[i, t]},"
                         f"{traces.room_trace[i, t]},{screen}\n")


def read_traces_csv(path, layout: Layout) -> FacilityTraces:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "patient_id,week,floor,room,screen_result":
            raise ValueError(f"unexpected traces header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            pid, week, floor, room, screen = line.strip().split(",")
            rows.append((int(pid), int(week), int(floor), int(room), screen))
    if not rows:
        raise ValueError("empty trace file")
    ids = sorted({r[0] for r in rows})
    id_index = {pid: k for k, pid in enumerate(ids)}
    horizon = max(r[1] for r in rows)
    n = len(ids)
    presence = np.zeros((n, horizon), dtype=np.int8)
    floor_trace = np.full((n, horizon), ABSENT_FLOOR, dtype=np.int16)
    room_trace = np.full((n, horizon), ABSENT_ROOM, dtype=np.int32)
    screening = np.full((n, horizon), NO_SCREEN, dtype=np.int8)
    for pid, week, floor, room, screen in rows:
        i, j = id_index[pid], week - 1
        if presence[i, j]:
            raise ValueError(f"duplicate row for patient {pid}, week {week}")
        presence[i, j] = 1
        floor_trace[i, j] = floor
        room_trace[i, j] = room
        if screen != "NA":
            screening[i, j] = int(screen)
    return FacilityTraces(horizon=horizon, presence=presence,
                          floor_trace=floor_trace, room_trace=room_trace,
                          screening=screening, index_kind="patient")
