import numpy as np
import pytest

from hai_sbi import facility, simulator


@pytest.fixture
def micro_layout():
    """Two patients sharing one room on one floor."""
    layout, traces = facility.static_layout(1, 2, 2, horizon=2)
    return layout, traces


@pytest.fixture
def small_facility():
    """Five floors, 20 beds each, double rooms, 4 weeks."""
    return facility.static_layout(5, 20, 2, horizon=4)


@pytest.fixture
def heterogeneous_rates():
    return simulator.RateVector(np.array([0.05, 0.02, 0.04, 0.06, 0.08, 0.1, 0.05]))


def moving_traces():
    """Hand-built patient-indexed traces with admissions, discharge, absence.

    Three patients, 4 weeks, two rooms (room 0 on floor 1, room 1 on floor 2):
      p0: present weeks 1-4 in room 0
      p1: present weeks 1-2 in room 0, discharged after week 2
      p2: admitted week 2 in room 1, present through week 4
    """
    layout = facility.Layout(n_floors=2, floor_of_room=np.array([1, 2]))
    presence = np.array([[1, 1, 1, 1],
                         [1, 1, 0, 0],
                         [0, 1, 1, 1]], dtype=np.int8)
    floor_trace = np.array([[1, 1, 1, 1],
                            [1, 1, 0, 0],
                            [0, 2, 2, 2]], dtype=np.int16)
    room_trace = np.array([[0, 0, 0, 0],
                           [0, 0, -1, -1],
                           [-1, 1, 1, 1]], dtype=np.int32)
    screening = np.full((3, 4), facility.NO_SCREEN, dtype=np.int8)
    screening[0, 0] = 1
    screening[1, 0] = 0
    screening[2, 1] = 0
    traces = facility.FacilityTraces(horizon=4, presence=presence,
                                     floor_trace=floor_trace, room_trace=room_trace,
                                     screening=screening, index_kind="patient")
    return layout, traces


@pytest.fixture
def patient_traces():
    return moving_traces()
