import numpy as np
import pytest

from owlsim.mapping import LogOddsParams, OccupancyMap, VoxelState
from owlsim.world import WorldGrid


def shell_world(dims=(40, 40, 20), edge=0.2, origin=(0.0, 0.0, 0.0), start=None) -> WorldGrid:
    """An empty box world: Solid one-cell shell, Air inside."""
    solid = np.zeros(dims, dtype=np.uint8)
    solid[0, :, :] = solid[-1, :, :] = 1
    solid[:, 0, :] = solid[:, -1, :] = 1
    solid[:, :, 0] = solid[:, :, -1] = 1
    return WorldGrid(np.asarray(origin, dtype=float), edge, solid, start=start)


def map_from_states(states: np.ndarray, edge: float = 0.2, window_lo=(0, 0, 0),
                    params: LogOddsParams | None = None) -> OccupancyMap:
    """OccupancyMap whose window (global voxels window_lo + index) holds the given tri-states."""
    params = params or LogOddsParams()
    dims = states.shape
    lo = np.asarray(window_lo, dtype=np.int64)
    center = (lo + np.array(dims) // 2) * edge + 0.5 * edge
    m = OccupancyMap(edge, dims, center, params)
    assert np.array_equal(m.window_lo, lo)
    vals = np.zeros(dims, dtype=np.float32)
    vals[states == VoxelState.FREE] = params.l_min
    vals[states == VoxelState.OCCUPIED] = params.l_max
    # store in circular-buffer order
    idx = np.indices(dims).reshape(3, -1).T + lo
    slots = np.mod(idx, np.array(dims))
    m.log_odds[slots[:, 0], slots[:, 1], slots[:, 2]] = vals.reshape(-1)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
