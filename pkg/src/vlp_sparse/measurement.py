"""Cooperative measurement synthesis.

Targets dither their retransmissions with i.i.d. +/-1 signs per snapshot, so
cross terms between distinct targets average out and the empirical power and
correlation estimators converge to their ideal (expectation) models:

    power:       p_i   -> sum_k g_ik^2 + noise_variance
    correlation: c_ij  -> sum_k g_ik g_jk   (+ noise_variance when i == j)

Ideal synthesis works on grid-cell fingerprints; snapshot synthesis works on
per-target gains taken at the true continuous positions, which injects the
off-grid mismatch a real deployment would see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PairIndexMap
from .scenario import TargetSet

# snapshots per accumulation block; fixed so summation order (and therefore
# bit-level results) never depends on the caller
_CHUNK = 1 << 16

POWER = "power"
CORRELATION = "correlation"


@dataclass(frozen=True)
class MeasurementVector:
    """A synthesized measurement: per-anchor powers or per-pair correlations.

    ``snapshots == 0`` marks the ideal (expectation) model.
    """

    values: np.ndarray
    model: str  # POWER or CORRELATION
    noise_variance: float
    snapshots: int


@dataclass(frozen=True)
class DitherPlan:
    """Seed for the per-target, per-snapshot +/-1 dither sequences.

    Every call to :meth:`generator` restarts the stream, so one plan yields
    identical sign sequences to every synthesis routine that consumes it.
    """

    seed: np.random.SeedSequence

    @classmethod
    def from_seed(cls, seed) -> "DitherPlan":
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        return cls(seed=seed)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


def indicator_from_cells(cells, n: int) -> np.ndarray:
    """Binary length-``n`` vector with ones at the given cell indices."""
    cells = np.asarray(cells, dtype=int)
    if cells.size == 0:
        raise ValueError("need at least one occupied cell")
    if np.any(cells < 0) or np.any(cells >= n):
        raise ValueError("cell index out of range")
    if np.unique(cells).size != cells.size:
        raise ValueError("duplicate cells: indicator entries are binary")
    indicator = np.zeros(n)
    indicator[cells] = 1.0
    return indicator


def indicator_from_targets(targets: TargetSet, n: int) -> np.ndarray:
    return indicator_from_cells(targets.true_cells, n)


def synthesize_ideal_power(power_fp: np.ndarray, indicator: np.ndarray,
                           noise_variance: float) -> MeasurementVector:
    """Expectation power measurement: fingerprint columns summed plus the noise floor."""
    values = power_fp @ indicator + noise_variance
    return MeasurementVector(values, POWER, noise_variance, snapshots=0)


def synthesize_ideal_correlation(corr_fp: np.ndarray, indicator: np.ndarray,
                                 noise_variance: float,
                                 pairs: PairIndexMap) -> MeasurementVector:
    """Expectation correlation measurement; the noise floor lands on i == j rows only."""
    values = corr_fp @ indicator
    values[pairs.diagonal_rows] += noise_variance
    return MeasurementVector(values, CORRELATION, noise_variance, snapshots=0)


def _signal_chunks(target_gains: np.ndarray, noise_variance: float,
                   snapshots: int, dither: DitherPlan,
                   rng: np.random.Generator):
    """Yield (chunk, M) blocks of aggregated received samples.

    Sample ``y_i(l) = sum_k s_k(l) g_ik + w_i(l)`` with dither signs from the
    plan and AWGN from ``rng``.  Chunking is fixed so power and correlation
    estimators built from the same seeds see identical samples.
    """
    if snapshots < 1:
        raise ValueError("snapshot synthesis needs snapshots >= 1")
    n_anchors, k = target_gains.shape
    sign_rng = dither.generator()
    scale = float(np.sqrt(noise_variance))
    done = 0
    while done < snapshots:
        size = min(_CHUNK, snapshots - done)
        signs = sign_rng.integers(0, 2, size=(size, k)) * 2.0 - 1.0
        block = signs @ target_gains.T
        if scale > 0.0:
            block += rng.normal(0.0, scale, size=(size, n_anchors))
        yield block
        done += size


def synthesize_snapshot_power(target_gains: np.ndarray, noise_variance: float,
                              snapshots: int, dither: DitherPlan,
                              rng: np.random.Generator) -> MeasurementVector:
    """Empirical per-anchor power: mean of squared aggregated samples.

    ``target_gains`` is (M, K), one column of gains per target at its true
    position.  Converges to the ideal power model as snapshots grow.
    """
    acc = np.zeros(target_gains.shape[0])
    for block in _signal_chunks(target_gains, noise_variance, snapshots, dither, rng):
        acc += np.einsum("li,li->i", block, block)
    return MeasurementVector(acc / snapshots, POWER, noise_variance, snapshots)


def synthesize_snapshot_correlation(target_gains: np.ndarray, noise_variance: float,
                                    snapshots: int, dither: DitherPlan,
                                    rng: np.random.Generator,
                                    pairs: PairIndexMap) -> MeasurementVector:
    """Empirical anchor-pair correlations, selected to the i <= j rows.

    Accumulates the full symmetric sample correlation matrix and reads out
    its upper triangle through the pair map.
    """
    n_anchors = target_gains.shape[0]
    acc = np.zeros((n_anchors, n_anchors))
    for block in _signal_chunks(target_gains, noise_variance, snapshots, dither, rng):
        acc += block.T @ block
    values = acc[pairs.first, pairs.second] / snapshots
    return MeasurementVector(values, CORRELATION, noise_variance, snapshots)


def remove_noise_floor(meas: MeasurementVector, noise_variance: float,
                       pairs: PairIndexMap | None = None) -> MeasurementVector:
    """Subtract the calibrated noise floor, clamping at zero.

    Power models carry the floor on every entry, correlation models only on
    their diagonal-pair rows (independent noise has no cross floor).
    """
    values = meas.values.copy()
    if meas.model == POWER:
        values -= noise_variance
    elif meas.model == CORRELATION:
        if pairs is None:
            raise ValueError("correlation floor removal needs the pair map")
        if pairs.n_pairs != values.size:
            raise ValueError("pair map does not match the measurement length")
        values[pairs.diagonal_rows] -= noise_variance
    else:
        raise ValueError(f"unknown measurement model '{meas.model}'")
    np.maximum(values, 0.0, out=values)
    return MeasurementVector(values, meas.model, meas.noise_variance, meas.snapshots)
