"""Lambertian line-of-sight channel and fingerprint matrices.

A downward LED and an upward photodetector share one geometry angle: with
vertical separation ``dz`` and link distance ``d`` both the emission angle
and the incidence angle have cosine ``dz / d``.  The gain of one link is

    h = (1 / d^2) * R_o(alpha) * A_eff(phi)

with ``R_o`` the Lambertian radiant intensity and ``A_eff`` the effective
detection area (zero beyond the field of view).  Gains are real and
nonnegative; the power fingerprint squares them elementwise and the
correlation fingerprint takes products over anchor pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import GridModel, LedAnchor, PdOptics, led_positions


def lambertian_order(half_power_angle_deg: float) -> float:
    """Lambertian order from the half-power angle: -ln 2 / ln cos(angle)."""
    if not 0 < half_power_angle_deg < 90:
        raise ValueError("half-power angle must be in (0, 90) degrees")
    return -math.log(2.0) / math.log(math.cos(math.radians(half_power_angle_deg)))


def radiant_intensity(m: float, alpha):
    """Radiant intensity (1/sr) at emission angle ``alpha`` (radians, |alpha| <= pi/2)."""
    return (m + 1.0) / (2.0 * math.pi) * np.cos(alpha) ** m


def effective_area(phi, pd: PdOptics):
    """Effective detection area (m^2) at incidence angle ``phi`` (radians).

    Hard zero beyond the field of view; the boundary angle itself is inside.
    """
    area = pd.detector_area * pd.filter_gain * pd.concentrator_gain * np.cos(phi)
    return np.where(phi <= math.radians(pd.fov), area, 0.0)


def gains_to_points(leds: Sequence[LedAnchor], points: np.ndarray,
                    pd: PdOptics, m: float) -> np.ndarray:
    """Channel gains from every anchor to every receiver point.

    ``points`` is (P, 3); returns (M, P) with entry (i, p) the gain of the
    link from anchor i to point p.  Points must lie strictly below the LEDs.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    anchors = led_positions(leds)  # (M, 3)
    delta = anchors[:, None, :] - points[None, :, :]
    dz = delta[:, :, 2]
    if np.any(dz <= 0):
        raise ValueError("receiver points must lie strictly below the LED plane")
    dist = np.sqrt(np.sum(delta * delta, axis=2))
    # sqrt rounding can push dz/dist a hair above 1 on nadir links
    angle = np.arccos(np.minimum(dz / dist, 1.0))
    return radiant_intensity(m, angle) * effective_area(angle, pd) / (dist * dist)


def channel_gain(led: LedAnchor, point, pd: PdOptics, m: float) -> float:
    """Gain of a single LED-to-point link (0 outside the field of view)."""
    return float(gains_to_points([led], np.asarray(point, dtype=float)[None, :], pd, m)[0, 0])


def build_gain_matrix(leds: Sequence[LedAnchor], grid: GridModel,
                      pd: PdOptics, m: float) -> np.ndarray:
    """(M, N) gain matrix over all anchor/grid-cell links."""
    return gains_to_points(leds, grid.centers, pd, m)


def build_power_fingerprint(gains: np.ndarray) -> np.ndarray:
    """Power fingerprint: elementwise square of the gain matrix."""
    return np.square(gains)


@dataclass(frozen=True)
class PairIndexMap:
    """Bijection between unordered anchor pairs (i <= j) and matrix rows.

    Rows follow lexicographic pair order: (0,0), (0,1), ..., (0,M-1), (1,1),
    ..., (M-1,M-1).  ``diagonal_rows`` marks the rows that carry the noise
    floor in correlation measurements.
    """

    m: int
    first: np.ndarray  # (M(M+1)/2,) anchor i of each row
    second: np.ndarray  # (M(M+1)/2,) anchor j of each row

    @classmethod
    def for_anchor_count(cls, m: int) -> "PairIndexMap":
        first, second = np.triu_indices(m)
        first.setflags(write=False)
        second.setflags(write=False)
        return cls(m=m, first=first, second=second)

    @property
    def n_pairs(self) -> int:
        return self.m * (self.m + 1) // 2

    def row_of(self, i: int, j: int) -> int:
        if not 0 <= i <= j < self.m:
            raise ValueError(f"pair ({i}, {j}) needs 0 <= i <= j < {self.m}")
        return i * self.m - i * (i - 1) // 2 + (j - i)

    def pair_of(self, row: int) -> tuple[int, int]:
        return int(self.first[row]), int(self.second[row])

    @property
    def diagonal_rows(self) -> np.ndarray:
        return np.nonzero(self.first == self.second)[0]


def build_correlation_fingerprint(gains: np.ndarray) -> tuple[np.ndarray, PairIndexMap]:
    """Correlation fingerprint over anchor pairs.

    Row for pair (i, j) holds ``gains[i] * gains[j]`` columnwise, so the
    (M(M+1)/2, N) result contains the power fingerprint on its i == j rows.
    """
    pairs = PairIndexMap.for_anchor_count(gains.shape[0])
    return gains[pairs.first] * gains[pairs.second], pairs
