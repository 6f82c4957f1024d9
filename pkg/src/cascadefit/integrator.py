"""Fixed-step classical RK4 integration of the model ODEs.

Deterministic by construction: no adaptivity, no randomness, so identical
inputs give bit-identical trajectories.  Trajectories are sampled on an
observation grid (hourly by default) with `substeps` RK4 steps per
observation interval.

Near-empty compartments can overshoot slightly negative at rounding scale;
excursions with magnitude <= 1e-9*N are clamped to zero and the clamped
mass is taken back out of S so the population sum is preserved.  Anything
larger raises StiffnessError instead of being papered over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import njit
from .errors import DivergenceError, StiffnessError
from .models import (
    ModelKind,
    ModelParams,
    _rhs_kernel,
    infected_indices,
    model_dimension,
    params_kind,
)

CLAMP_REL_TOL = 1e-9
CONSERVATION_REL_TOL = 1e-9

_STATUS_OK = 0
_STATUS_STIFF = 1
_STATUS_DIVERGED = 2


@dataclass(frozen=True)
class TimeGrid:
    """Observation grid: n_obs points spaced dt_obs hours apart from t0."""

    n_obs: int
    t0: float = 0.0
    dt_obs: float = 1.0
    substeps: int = 10

    def __post_init__(self):
        if self.n_obs < 2:
            raise ValueError(f"n_obs must be >= 2, got {self.n_obs}")
        if not (math.isfinite(self.dt_obs) and self.dt_obs > 0):
            raise ValueError(f"dt_obs must be > 0, got {self.dt_obs}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt_obs * np.arange(self.n_obs)


@dataclass(frozen=True)
class Trajectory:
    kind: ModelKind
    grid: TimeGrid
    n: float
    states: np.ndarray  # (n_obs, dim), row per observation time

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


@njit(cache=True)
def _integrate_kernel(code, y0, prm, n, dt_obs, substeps, n_obs, clamp_tol):
    """RK4 over the grid.  Returns (states, status, bad_compartment, bad_time)."""
    dim = y0.shape[0]
    states = np.empty((n_obs, dim))
    y = y0.copy()
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    yt = np.empty(dim)
    for j in range(dim):
        states[0, j] = y[j]
    h = dt_obs / substeps
    for obs in range(1, n_obs):
        for sub in range(substeps):
            _rhs_kernel(code, y, prm, n, k1)
            for j in range(dim):
                yt[j] = y[j] + 0.5 * h * k1[j]
            _rhs_kernel(code, yt, prm, n, k2)
            for j in range(dim):
                yt[j] = y[j] + 0.5 * h * k2[j]
            _rhs_kernel(code, yt, prm, n, k3)
            for j in range(dim):
                yt[j] = y[j] + h * k3[j]
            _rhs_kernel(code, yt, prm, n, k4)
            for j in range(dim):
                y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            t_now = (obs - 1) * dt_obs + (sub + 1) * h
            for j in range(dim):
                if not np.isfinite(y[j]):
                    return states, _STATUS_DIVERGED, j, t_now
                if y[j] < 0.0:
                    if -y[j] > clamp_tol:
                        return states, _STATUS_STIFF, j, t_now
                    excess = y[j]
                    y[j] = 0.0
                    if j != 0:
                        y[0] += excess
                    else:
                        # S itself dipped: take the mass from the largest pool.
                        jmax = 1
                        for jj in range(2, dim):
                            if y[jj] > y[jmax]:
                                jmax = jj
                        y[jmax] += excess
        for j in range(dim):
            states[obs, j] = y[j]
    return states, _STATUS_OK, -1, 0.0


def check_initial_state(kind: ModelKind, initial_state, n: float) -> np.ndarray:
    y0 = np.asarray(initial_state, dtype=np.float64)
    dim = model_dimension(kind)
    if y0.shape != (dim,):
        raise ValueError(f"{kind.value} initial state must have shape ({dim},), got {y0.shape}")
    if not np.all(np.isfinite(y0)):
        raise ValueError(f"non-finite initial state: {y0}")
    if np.any(y0 < 0):
        raise ValueError(f"negative initial state entries: {y0}")
    if not (math.isfinite(n) and n > 0):
        raise ValueError(f"population must be finite and > 0, got {n}")
    if abs(y0.sum() - n) > CONSERVATION_REL_TOL * n:
        raise ValueError(f"initial state sums to {y0.sum()!r}, expected {n!r}")
    return y0


def integrate(params: ModelParams, initial_state, n: float, grid: TimeGrid) -> Trajectory:
    """Integrate the model from initial_state over the observation grid."""
    kind = params_kind(params)
    y0 = check_initial_state(kind, initial_state, n)
    states, status, bad, bad_t = _integrate_kernel(
        kind.code, y0, params.to_kernel_vec(), float(n),
        float(grid.dt_obs), grid.substeps, grid.n_obs, CLAMP_REL_TOL * float(n),
    )
    t_abs = grid.t0 + bad_t
    if status == _STATUS_STIFF:
        raise StiffnessError(bad, t_abs)
    if status == _STATUS_DIVERGED:
        raise DivergenceError(bad, t_abs)
    return Trajectory(kind=kind, grid=grid, n=float(n), states=states)


def infected_series(traj: Trajectory) -> np.ndarray:
    """Cumulative acting-user count I(t) at the observation times.

    For CD-SEIZ this is the pointwise sum of the three channel series;
    use infected_channels for the per-activity split.
    """
    idx = infected_indices(traj.kind)
    if len(idx) == 1:
        return traj.states[:, idx[0]].copy()
    return infected_channels(traj).sum(axis=0)


def infected_channels(traj: Trajectory) -> np.ndarray:
    """Per-activity I_i(t) series, shape (3, n_obs).  CD-SEIZ only."""
    if traj.kind is not ModelKind.CDSEIZ:
        raise ValueError(f"per-activity series only exist for cdseiz, not {traj.kind.value}")
    return traj.states[:, list(infected_indices(traj.kind))].T.copy()
