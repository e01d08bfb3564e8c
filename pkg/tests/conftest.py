import functools

import numpy as np
import pytest

from cardiofocus.config import SpatialPoint, compact_config
from cardiofocus.fixtures import default_fixture, far_offset_fixture
from cardiofocus.scene import HeartbeatSchedule, Scene, simulate_data_cube, synthesize_cardiac_displacement
from cardiofocus.signals import DisplacementSeries


@functools.lru_cache(maxsize=None)
def cached_fixture(seed: int, kind: str = "default", duration_s: float = 4.0):
    make = default_fixture if kind == "default" else far_offset_fixture
    fx = make(seed, duration_s=duration_s)
    return fx, fx.cube()


def single_target_scene(point, n_frames=1, waveform=None, reflectivity=1.0, seed=0):
    """One scatterer carrying ``waveform`` (zeros by default), no clutter or noise."""
    cfg = compact_config(n_frames=n_frames)
    if waveform is None:
        waveform = DisplacementSeries(np.zeros(n_frames), cfg.frame_rate_hz)
    scene = Scene(cardiac_point=SpatialPoint(*point), cardiac_waveform=waveform, cardiac_reflectivity=reflectivity, rng_seed=seed)
    return scene, cfg


def cardiac_waveform(duration_s=4.0, beats=(0.5, 1.3, 2.1, 2.9, 3.7)):
    sched = HeartbeatSchedule(np.array(beats))
    return sched, synthesize_cardiac_displacement(sched, duration_s=duration_s)


@pytest.fixture
def report(request):
    """Write one line straight to the terminal, bypassing output capture."""
    tr = request.config.pluginmanager.get_plugin("terminalreporter")

    def write(line: str) -> None:
        print(line)
        if tr is not None:
            tr.write_line(line)

    return write


@pytest.fixture(scope="session")
def zero_cube():
    scene, cfg = single_target_scene((0.0, 0.8, 0.0), n_frames=8, reflectivity=0.0)
    return simulate_data_cube(scene, cfg)
