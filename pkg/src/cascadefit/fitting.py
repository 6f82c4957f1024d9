"""Model fitting: minimize the relative-L2 curve error over parameters and
population size with bounded multi-start Nelder-Mead.

The packed parameter vector theta is the model's kernel layout plus N:

    SIS     [beta, lambda, N]
    SEIZ    [beta, b, rho, epsilon, p, l, N]
    CD-SEIZ [beta, b, rho, epsilon, p0, p1, p2, l0, l1, l2, N]

Initial compartments follow the observed first bin: I(0) is the first
cumulative value (per activity for CD-SEIZ), E(0)=Z(0)=0 and S(0)=N-I(0).
SIS and SEIZ are scored against the total series; CD-SEIZ is optimized on
the concatenated per-activity residuals (the channel split is what the
model is for) while its reported Error stays the total-series one so the
three models stay comparable.

Integrator blow-ups inside the search box are absorbed as +inf objective
values rather than raised, which keeps the simplex search total.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import njit
from .cascade import ActivitySeries
from .errors import DegenerateTargetError, FitFailedError
from .integrator import CLAMP_REL_TOL, TimeGrid, _integrate_kernel, integrate
from .metrics import fit_error, mean_deviation
from .models import (
    CdSeizParams,
    ModelKind,
    ModelParams,
    SeizParams,
    SisParams,
    infected_indices,
    model_dimension,
)

_PARAM_NAMES = {
    ModelKind.SIS: ("beta", "lambda", "n"),
    ModelKind.SEIZ: ("beta", "b", "rho", "epsilon", "p", "l", "n"),
    ModelKind.CDSEIZ: ("beta", "b", "rho", "epsilon",
                       "p0", "p1", "p2", "l0", "l1", "l2", "n"),
}
# indices of probability-valued entries within theta
_PROB_SLOTS = {
    ModelKind.SIS: (),
    ModelKind.SEIZ: (4, 5),
    ModelKind.CDSEIZ: (4, 5, 6, 7, 8, 9),
}


def param_names(kind: ModelKind) -> tuple:
    """Names of the packed theta entries, in layout order."""
    return _PARAM_NAMES[kind]


def theta_dim(kind: ModelKind) -> int:
    return len(_PARAM_NAMES[kind])


def pack(params: ModelParams, n: float) -> np.ndarray:
    """Parameters plus population into the packed theta vector."""
    return np.append(params.to_kernel_vec(), float(n))


def unpack(kind: ModelKind, theta) -> tuple:
    """Inverse of pack: theta -> (params object, n)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (theta_dim(kind),):
        raise ValueError(f"{kind.value} theta must have shape ({theta_dim(kind)},), "
                         f"got {theta.shape}")
    n = float(theta[-1])
    if kind is ModelKind.SIS:
        return SisParams(beta=theta[0], lam=theta[1]), n
    if kind is ModelKind.SEIZ:
        return SeizParams(beta=theta[0], b=theta[1], rho=theta[2], epsilon=theta[3],
                          p=theta[4], l=theta[5]), n
    return CdSeizParams(beta=theta[0], b=theta[1], rho=theta[2], epsilon=theta[3],
                        p=tuple(theta[4:7]), l=tuple(theta[7:10])), n


@dataclass
class FitConfig:
    """Knobs of the multi-start simplex search.

    bounds is a (theta_dim, 2) array of per-parameter [lo, hi]; None derives
    the default box (rates in [0, rate_cap], probabilities in [0, 1], N in
    [max(last total, I0+1), n_cap_factor * last total]).  xtol is the
    per-dimension vertex spread relative to the box width; ftol the
    objective spread relative to max(1, |best|).
    """

    model_kind: ModelKind
    bounds: np.ndarray | None = None
    n_starts: int = 32
    max_evals: int = 2000
    xtol: float = 1e-6
    ftol: float = 1e-8
    seed: int = 0
    substeps: int = 10
    rate_cap: float = 10.0
    n_cap_factor: float = 100.0
    min_points: int = 8

    def __post_init__(self):
        if isinstance(self.model_kind, str):
            self.model_kind = ModelKind.parse(self.model_kind)
        if self.bounds is not None:
            self.bounds = validate_bounds(self.model_kind, np.asarray(self.bounds, float),
                                          self.rate_cap)
        if self.n_starts < 1 or self.max_evals < 1:
            raise ValueError("n_starts and max_evals must be >= 1")


def validate_bounds(kind: ModelKind, bounds: np.ndarray, rate_cap: float) -> np.ndarray:
    d = theta_dim(kind)
    if bounds.shape != (d, 2):
        raise ValueError(f"bounds must have shape ({d}, 2), got {bounds.shape}")
    names = param_names(kind)
    probs = set(_PROB_SLOTS[kind])
    for i, (lo, hi) in enumerate(bounds):
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ValueError(f"bad bounds for {names[i]}: [{lo}, {hi}]")
        if i in probs:
            if lo < 0.0 or hi > 1.0:
                raise ValueError(f"{names[i]} bounds must stay within [0, 1]")
        elif names[i] == "n":
            if lo <= 0.0:
                raise ValueError("n lower bound must be positive")
        elif lo < 0.0 or hi > rate_cap:
            raise ValueError(f"{names[i]} bounds must stay within [0, rate_cap={rate_cap}]")
    return bounds


def default_bounds(kind: ModelKind, total_last: float, i0_total: float,
                   rate_cap: float = 10.0, n_cap_factor: float = 100.0) -> np.ndarray:
    d = theta_dim(kind)
    bounds = np.zeros((d, 2))
    bounds[:, 1] = rate_cap
    for i in _PROB_SLOTS[kind]:
        bounds[i] = (0.0, 1.0)
    n_lo = max(total_last, i0_total + 1.0)
    n_hi = max(n_cap_factor * total_last, n_lo * 2.0)
    bounds[-1] = (n_lo, n_hi)
    return bounds


# ---------------------------------------------------------------------------
# Objective.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _objective_kernel(code, prm, n, y0, targets, inf_cols, denom,
                      dt_obs, substeps, clamp_tol):
    n_obs = targets.shape[1]
    states, status, _bad, _bad_t = _integrate_kernel(
        code, y0, prm, n, dt_obs, substeps, n_obs, clamp_tol
    )
    if status != 0:
        return np.inf
    ss = 0.0
    for k in range(targets.shape[0]):
        col = inf_cols[k]
        for j in range(n_obs):
            d = states[j, col] - targets[k, j]
            ss += d * d
    val = math.sqrt(ss) / denom
    if not np.isfinite(val):
        return np.inf
    return val


class _Evaluator:
    """Callable objective over packed theta for one target series."""

    def __init__(self, config: FitConfig, total: np.ndarray, channels: np.ndarray | None):
        kind = config.model_kind
        self.kind = kind
        self.code = kind.code
        self.dim = model_dimension(kind)
        self.substeps = int(config.substeps)
        total = np.ascontiguousarray(total, dtype=np.float64)
        if kind is ModelKind.CDSEIZ:
            if channels is None:
                raise ValueError("cdseiz fitting needs the per-activity series")
            self.targets = np.ascontiguousarray(channels, dtype=np.float64)
            self.i0 = self.targets[:, 0].copy()
        else:
            self.targets = total.reshape(1, -1)
            self.i0 = total[:1].copy()
        self.inf_cols = np.array(infected_indices(kind), dtype=np.int64)
        self.denom = float(np.linalg.norm(self.targets))
        if self.denom == 0.0:
            raise DegenerateTargetError("target series has zero norm")
        self.total = total

    def initial_state(self, n: float) -> np.ndarray:
        y0 = np.zeros(self.dim)
        i0_total = float(self.i0.sum())
        y0[0] = n - i0_total
        for k, col in enumerate(self.inf_cols):
            y0[col] = self.i0[k]
        return y0

    def __call__(self, theta: np.ndarray) -> float:
        n = float(theta[-1])
        if n <= self.i0.sum():
            return np.inf
        y0 = self.initial_state(n)
        return float(_objective_kernel(
            self.code, np.ascontiguousarray(theta[:-1]), n, y0,
            self.targets, self.inf_cols, self.denom,
            1.0, self.substeps, CLAMP_REL_TOL * n,
        ))


def objective(theta, target: ActivitySeries, config: FitConfig) -> float:
    """Curve error of one packed parameter vector against an observed series."""
    ev = _Evaluator(config, target.total_array(), target.channels_array())
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (theta_dim(config.model_kind),):
        raise ValueError(f"theta must have shape ({theta_dim(config.model_kind)},), "
                         f"got {theta.shape}")
    return ev(theta)


# ---------------------------------------------------------------------------
# Bounded Nelder-Mead.
# ---------------------------------------------------------------------------

@dataclass
class NmResult:
    x: np.ndarray
    f: float
    n_evals: int
    converged: bool
    best_history: list  # best objective value after each iteration


def nelder_mead(func, x0, bounds, max_evals=2000, xtol=1e-6, ftol=1e-8) -> NmResult:
    """Nelder-Mead with reflection 1, expansion 2, contraction 0.5 and
    shrink 0.5; every candidate vertex is projected onto the bounds box."""
    lo = np.asarray(bounds, float)[:, 0]
    hi = np.asarray(bounds, float)[:, 1]
    width = hi - lo
    d = len(x0)

    def clip(x):
        return np.minimum(np.maximum(x, lo), hi)

    n_evals = 0

    def call(x):
        nonlocal n_evals
        n_evals += 1
        v = func(x)
        return np.inf if not np.isfinite(v) else float(v)

    verts = [clip(np.asarray(x0, float))]
    for j in range(d):
        step = 0.05 * width[j]
        v = verts[0].copy()
        if v[j] + step > hi[j]:
            step = -step
        v[j] += step
        verts.append(clip(v))
    verts = np.array(verts)
    fvals = np.array([call(v) for v in verts])

    history = []
    converged = False
    pos_width = np.where(width > 0, width, 1.0)
    while n_evals < max_evals:
        order = np.argsort(fvals, kind="stable")
        verts = verts[order]
        fvals = fvals[order]
        history.append(fvals[0])

        x_spread = np.max(np.abs(verts - verts[0]) / pos_width)
        # inf - inf when the whole simplex is infeasible; never converged then
        f_spread = fvals[-1] - fvals[0] if np.isfinite(fvals[-1]) else np.inf
        if x_spread <= xtol and f_spread <= ftol * max(1.0, abs(fvals[0])):
            converged = True
            break

        centroid = verts[:-1].mean(axis=0)
        xr = clip(centroid + (centroid - verts[-1]))
        fr = call(xr)
        if fr < fvals[0]:
            xe = clip(centroid + 2.0 * (centroid - verts[-1]))
            fe = call(xe)
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            if fr < fvals[-1]:
                xc = clip(centroid + 0.5 * (xr - centroid))
            else:
                xc = clip(centroid + 0.5 * (verts[-1] - centroid))
            fc = call(xc)
            if fc < min(fr, fvals[-1]):
                verts[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, d + 1):
                    verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
                    fvals[i] = call(verts[i])
                    if n_evals >= max_evals:
                        break

    order = np.argsort(fvals, kind="stable")
    best = order[0]
    return NmResult(x=verts[best].copy(), f=float(fvals[best]),
                    n_evals=n_evals, converged=converged, best_history=history)


def latin_hypercube(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n stratified samples in [0,1)^d, one per row."""
    u = rng.random((n, d))
    out = np.empty((n, d))
    for j in range(d):
        out[:, j] = (rng.permutation(n) + u[:, j]) / n
    return out


# ---------------------------------------------------------------------------
# Fit driver and result.
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    model_kind: ModelKind
    params: ModelParams
    n_fit: float
    initial_state: np.ndarray
    error: float            # total-series relative L2 (comparable across models)
    mean_deviation: float   # total-series mean absolute deviation
    objective: float        # minimized value (concatenated channels for cdseiz)
    model_total: np.ndarray
    model_channels: np.ndarray | None
    observed_total: np.ndarray
    observed_channels: np.ndarray | None
    n_evals: int
    converged: tuple
    best_start_index: int
    seed: int

    def params_dict(self) -> dict:
        theta = pack(self.params, self.n_fit)
        return {name: (float(v)) for name, v in zip(param_names(self.model_kind), theta)}

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_kind.value,
            "params": self.params_dict(),
            "n_fit": float(self.n_fit),
            "initial_state": [float(v) for v in self.initial_state],
            "error": float(self.error),
            "mean_deviation": float(self.mean_deviation),
            "objective": float(self.objective),
            "n_evals": int(self.n_evals),
            "n_starts": len(self.converged),
            "converged": list(self.converged),
            "best_start_index": int(self.best_start_index),
            "seed": int(self.seed),
            "model_total": [float(v) for v in self.model_total],
            "model_channels": None if self.model_channels is None
            else [[float(v) for v in row] for row in self.model_channels],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def csv_header() -> list:
        return ["model", "error", "mean_deviation", "objective", "n_evals",
                "best_start_index", "converged_starts"]

    def csv_row(self) -> list:
        return [self.model_kind.value, repr(float(self.error)),
                repr(float(self.mean_deviation)), repr(float(self.objective)),
                int(self.n_evals), int(self.best_start_index),
                sum(1 for c in self.converged if c)]


def fit_series(total, channels, config: FitConfig) -> FitResult:
    """Fit on raw arrays: total (n_obs,) and channels (3, n_obs) or None."""
    total = np.asarray(total, dtype=np.float64)
    if total.ndim != 1 or len(total) < config.min_points:
        raise ValueError(
            f"need at least {config.min_points} observation points to constrain "
            f"the parameters, got {total.shape}"
        )
    if not np.all(np.isfinite(total)) or total[-1] <= 0:
        raise DegenerateTargetError("target series must be finite with a positive final total")
    if channels is not None:
        channels = np.asarray(channels, dtype=np.float64)
        if channels.shape != (3, len(total)):
            raise ValueError(f"channels must have shape (3, {len(total)}), got {channels.shape}")

    evaluator = _Evaluator(config, total, channels)
    kind = config.model_kind
    bounds = config.bounds
    if bounds is None:
        bounds = default_bounds(kind, float(total[-1]), float(evaluator.i0.sum()),
                                config.rate_cap, config.n_cap_factor)

    rng = np.random.default_rng(config.seed)
    unit = latin_hypercube(rng, config.n_starts, theta_dim(kind))
    starts = bounds[:, 0] + unit * (bounds[:, 1] - bounds[:, 0])

    best = None
    total_evals = 0
    converged = []
    for idx in range(config.n_starts):
        res = nelder_mead(evaluator, starts[idx], bounds,
                          max_evals=config.max_evals, xtol=config.xtol, ftol=config.ftol)
        total_evals += res.n_evals
        converged.append(res.converged)
        if best is None or res.f < best[0]:
            best = (res.f, idx, res.x)

    best_f, best_idx, best_x = best
    if not np.isfinite(best_f):
        raise FitFailedError(
            f"all {config.n_starts} starts diverged for {kind.value}; "
            f"bounds {bounds.tolist()}"
        )

    params, n_fit = unpack(kind, best_x)
    y0 = evaluator.initial_state(n_fit)
    grid = TimeGrid(n_obs=len(total), t0=0.0, dt_obs=1.0, substeps=config.substeps)
    traj = integrate(params, y0, n_fit, grid)
    if kind is ModelKind.CDSEIZ:
        model_channels = traj.states[:, list(infected_indices(kind))].T.copy()
        model_total = model_channels.sum(axis=0)
    else:
        model_channels = None
        model_total = traj.states[:, infected_indices(kind)[0]].copy()

    return FitResult(
        model_kind=kind,
        params=params,
        n_fit=n_fit,
        initial_state=y0,
        error=fit_error(model_total, total),
        mean_deviation=mean_deviation(model_total, total),
        objective=best_f,
        model_total=model_total,
        model_channels=model_channels,
        observed_total=total,
        observed_channels=channels,
        n_evals=total_evals,
        converged=tuple(converged),
        best_start_index=best_idx,
        seed=config.seed,
    )


def fit(target: ActivitySeries, config: FitConfig) -> FitResult:
    """Fit a model to an observed cascade activity series."""
    return fit_series(target.total_array(), target.channels_array(), config)
