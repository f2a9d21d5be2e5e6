"""Room geometry, localization grid, LED layout and target placement.

Everything downstream (channel gains, fingerprints, measurements) is derived
from a single validated :class:`SceneConfig`.  All types are frozen and safe
to share across parallel workers.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SOLVERS = ("omp", "ista")
SCHEMES = ("csm", "cocsm", "rss_baseline")


class ConfigError(ValueError):
    """Raised when a configuration value violates a scene invariant."""


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


@dataclass(frozen=True)
class PdOptics:
    """Photodetector optics: physical area, optical gains and field of view."""

    detector_area: float = 1e-4  # m^2 (1 cm^2)
    filter_gain: float = 1.0
    concentrator_gain: float = 1.0
    fov: float = 85.0  # degrees, max incidence angle that still registers

    def __post_init__(self) -> None:
        _require(self.detector_area > 0, "detector_area", "must be > 0")
        _require(self.filter_gain > 0, "filter_gain", "must be > 0")
        _require(self.concentrator_gain > 0, "concentrator_gain", "must be > 0")
        _require(0 < self.fov <= 90, "fov", "must be in (0, 90] degrees")


@dataclass(frozen=True)
class SceneConfig:
    """Single source of truth for a simulation run.

    Geometry: a ``room_size[0] x room_size[1]`` floor tiled into square cells
    of side ``grid_pitch``; receivers sit at height ``receiver_height``, LEDs
    on a ``led_rows x led_cols`` ceiling lattice at ``led_height``.
    ``noise_variance`` is the variance of the additive noise on each received
    signal sample, in squared signal-power units; ``snapshots`` is the number
    of pilot intervals averaged to estimate power/correlation measurements.
    """

    room_size: tuple[float, float, float] = (4.0, 4.0, 3.0)
    grid_pitch: float = 0.2
    receiver_height: float = 0.85
    led_rows: int = 4
    led_cols: int = 4
    led_height: float = 3.0
    pd: PdOptics = field(default_factory=PdOptics)
    half_power_angle: float = 60.0  # degrees
    noise_variance: float = 0.0
    snapshots: int = 1
    seed: int = 0
    solver: str = "omp"
    scheme: str = "cocsm"
    # experiment parameters (number of targets, on-grid vs continuous truth)
    targets_k: int = 8
    on_grid: bool = False

    def __post_init__(self) -> None:
        _require(len(self.room_size) == 3 and all(s > 0 for s in self.room_size),
                 "room_size", "must be three positive extents (x, y, z)")
        _require(self.grid_pitch > 0, "grid_pitch", "must be > 0")
        for axis, extent in zip("xy", self.room_size[:2]):
            cells = extent / self.grid_pitch
            _require(abs(cells - round(cells)) < 1e-9 and round(cells) >= 1,
                     "grid_pitch",
                     f"must tile the {axis} extent {extent} into whole cells")
        _require(0 < self.receiver_height < self.led_height,
                 "receiver_height", "must satisfy 0 < receiver_height < led_height")
        _require(self.led_height <= self.room_size[2],
                 "led_height", "must not exceed the room height")
        _require(self.led_rows >= 1 and self.led_cols >= 1,
                 "led_rows/led_cols", "must each be >= 1")
        _require(0 < self.half_power_angle < 90,
                 "half_power_angle", "must be in (0, 90) degrees")
        _require(self.noise_variance >= 0, "noise_variance", "must be >= 0")
        _require(self.snapshots >= 1, "snapshots", "must be >= 1")
        _require(0 <= self.seed < 2 ** 64, "seed", "must be an unsigned 64-bit integer")
        _require(self.solver in SOLVERS, "solver", f"must be one of {SOLVERS}")
        _require(self.scheme in SCHEMES, "scheme", f"must be one of {SCHEMES}")
        _require(self.targets_k >= 1, "targets_k", "must be >= 1")

    @property
    def grid_shape(self) -> tuple[int, int]:
        """(cells along x, cells along y)."""
        return (round(self.room_size[0] / self.grid_pitch),
                round(self.room_size[1] / self.grid_pitch))

    @property
    def num_leds(self) -> int:
        return self.led_rows * self.led_cols


@dataclass(frozen=True)
class GridModel:
    """Discrete localization grid: cell centers at receiver height.

    Cells are indexed row-major with x fastest: cell ``j`` covers
    ``(ix, iy) = (j % nx, j // nx)`` and its center is
    ``((ix + 0.5) * pitch, (iy + 0.5) * pitch, height)``.
    """

    nx: int
    ny: int
    pitch: float
    height: float
    centers: np.ndarray  # (N, 3), read-only

    @property
    def n(self) -> int:
        return self.nx * self.ny

    def cell_of(self, xy: np.ndarray) -> np.ndarray:
        """Cell index containing each (x, y) position (positions inside the floor)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        ix = np.clip((xy[:, 0] / self.pitch).astype(int), 0, self.nx - 1)
        iy = np.clip((xy[:, 1] / self.pitch).astype(int), 0, self.ny - 1)
        return iy * self.nx + ix

    def centers_of(self, cells: Sequence[int]) -> np.ndarray:
        """(len(cells), 2) array of cell-center (x, y) coordinates."""
        return self.centers[np.asarray(cells, dtype=int), :2]


@dataclass(frozen=True)
class LedAnchor:
    """A ceiling LED of known position, oriented straight down."""

    index: int
    position: np.ndarray  # (3,)


@dataclass(frozen=True)
class TargetSet:
    """Ground truth for one trial: continuous positions and their grid cells."""

    k: int
    true_positions: np.ndarray  # (K, 2)
    true_cells: np.ndarray  # (K,) int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("TargetSet needs at least one target")
        if len(set(self.true_cells.tolist())) != self.k:
            raise ValueError("target cells must be pairwise distinct")


def build_grid(config: SceneConfig) -> GridModel:
    """Tile the floor into square cells and return their centers.

    Deterministic; raises :class:`ConfigError` if the pitch does not divide
    both floor extents exactly (validated by SceneConfig).
    """
    nx, ny = config.grid_shape
    pitch = config.grid_pitch
    ix = np.arange(nx)
    iy = np.arange(ny)
    gx, gy = np.meshgrid(ix, iy)  # iy varies along rows -> x fastest when flattened
    centers = np.column_stack([
        (gx.ravel() + 0.5) * pitch,
        (gy.ravel() + 0.5) * pitch,
        np.full(nx * ny, config.receiver_height),
    ])
    centers.setflags(write=False)
    return GridModel(nx=nx, ny=ny, pitch=pitch,
                     height=config.receiver_height, centers=centers)


def place_leds(config: SceneConfig) -> list[LedAnchor]:
    """Uniform ceiling lattice with half-spacing margins.

    ``led_cols`` positions along x at ``(i + 0.5) * X / led_cols`` and
    ``led_rows`` along y, all at ``led_height``.
    """
    x_extent, y_extent, _ = config.room_size
    dx = x_extent / config.led_cols
    dy = y_extent / config.led_rows
    if dx > x_extent or dy > y_extent:
        raise ConfigError("led lattice does not fit inside the room")
    leds = []
    idx = 0
    for r in range(config.led_rows):
        for c in range(config.led_cols):
            pos = np.array([(c + 0.5) * dx, (r + 0.5) * dy, config.led_height])
            pos.setflags(write=False)
            leds.append(LedAnchor(index=idx, position=pos))
            idx += 1
    return leds


def led_positions(leds: Sequence[LedAnchor]) -> np.ndarray:
    """(M, 3) position array in anchor-index order."""
    return np.array([led.position for led in leds])


def sample_targets(grid: GridModel, k: int, on_grid: bool,
                   rng: np.random.Generator) -> TargetSet:
    """Draw ``k`` targets in distinct cells, uniformly without replacement.

    With ``on_grid`` the true position is the cell center, otherwise uniform
    within the cell.  Deterministic for a given generator state.
    """
    if not 1 <= k <= grid.n // 4:
        raise ValueError(f"k={k} out of range: need 1 <= k <= N/4 = {grid.n // 4}")
    cells = np.sort(rng.choice(grid.n, size=k, replace=False))
    positions = grid.centers_of(cells).copy()
    if not on_grid:
        positions += rng.uniform(-grid.pitch / 2, grid.pitch / 2, size=(k, 2))
    positions.setflags(write=False)
    cells.setflags(write=False)
    return TargetSet(k=k, true_positions=positions, true_cells=cells)


# --- configuration I/O ----------------------------------------------------

def config_to_dict(config: SceneConfig) -> dict:
    d = dataclasses.asdict(config)
    d["room_size"] = list(d["room_size"])
    return d


def config_from_dict(data: dict) -> SceneConfig:
    data = dict(data)
    known = {f.name for f in dataclasses.fields(SceneConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "room_size" in data:
        _require(isinstance(data["room_size"], (list, tuple)),
                 "room_size", "must be a list of three numbers")
        data["room_size"] = tuple(float(v) for v in data["room_size"])
    if "pd" in data:
        pd = data["pd"]
        if isinstance(pd, dict):
            pd_known = {f.name for f in dataclasses.fields(PdOptics)}
            pd_unknown = set(pd) - pd_known
            if pd_unknown:
                raise ConfigError(f"unknown pd keys: {sorted(pd_unknown)}")
            data["pd"] = PdOptics(**pd)
        elif not isinstance(pd, PdOptics):
            raise ConfigError("pd: must be an object with PdOptics fields")
    return SceneConfig(**data)


def load_config(path: str) -> SceneConfig:
    """Load a JSON config file whose keys are SceneConfig field names."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(data)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings like omp/cocsm


def apply_overrides(config: SceneConfig, assignments: Sequence[str]) -> SceneConfig:
    """Apply ``key=value`` overrides; ``pd.<field>=value`` reaches the optics."""
    data = config_to_dict(config)
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        value = _parse_value(raw)
        if key.startswith("pd."):
            data.setdefault("pd", {})[key[3:]] = value
        else:
            data[key] = value
    return config_from_dict(data)


def snr_to_noise_variance(mean_signal_power: float, snr_db: float) -> float:
    """Noise variance that realizes a target SNR over a given mean signal power."""
    return mean_signal_power / (10.0 ** (snr_db / 10.0)) if math.isfinite(snr_db) else 0.0
