"""Compartmental models of cascade activity: SIS, SEIZ and the
cognition-driven per-activity variant CD-SEIZ.

Each model is a parameter type plus a time-derivative (right-hand-side)
function over a flat compartment state vector:

    SIS      state [S, I]
        dS/dt = -beta*S*I/N + lam*I/N
        dI/dt = +beta*S*I/N - lam*I/N

    SEIZ     state [S, E, I, Z]
        dS/dt = -beta*S*I/N - b*S*Z/N
        dE/dt = (1-p)*beta*S*I/N + (1-l)*b*S*Z/N - rho*E*I/N - eps*E
        dI/dt = p*beta*S*I/N + rho*E*I/N + eps*E
        dZ/dt = l*b*S*Z/N

    CD-SEIZ  state [S, E0, I0, Z0, E1, I1, Z1, E2, I2, Z2]
        one (E_i, I_i, Z_i) triple per activity channel, SEIZ rules with
        shared beta, b, rho, eps and per-channel p_i, l_i; dS/dt sums the
        three per-channel drains.  Channel order: 0=retweet, 1=quote,
        2=reply.

All rates are per hour; N is the (continuous) population size.  I is read
as the cumulative count of users who acted, so in fitted regimes it only
grows.  Derivatives of every model sum to zero: mass moves between
compartments, never appears or disappears.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ._kernels import njit

# Channel order everywhere in the package.
CHANNELS = ("retweet", "quote", "reply")
N_CHANNELS = 3

# Integer codes handed to the jitted kernels.
_SIS_CODE = 0
_SEIZ_CODE = 1
_CDSEIZ_CODE = 2


class ModelKind(enum.Enum):
    SIS = "sis"
    SEIZ = "seiz"
    CDSEIZ = "cdseiz"

    @property
    def code(self) -> int:
        return {"sis": _SIS_CODE, "seiz": _SEIZ_CODE, "cdseiz": _CDSEIZ_CODE}[self.value]

    @classmethod
    def parse(cls, name: str) -> "ModelKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown model kind {name!r}; expected sis, seiz or cdseiz") from None


def model_dimension(kind: ModelKind) -> int:
    """State-vector length: SIS -> 2, SEIZ -> 4, CD-SEIZ -> 10."""
    return {ModelKind.SIS: 2, ModelKind.SEIZ: 4, ModelKind.CDSEIZ: 10}[kind]


def infected_indices(kind: ModelKind) -> tuple[int, ...]:
    """Positions of the I compartment(s) in the state vector."""
    if kind is ModelKind.SIS:
        return (1,)
    if kind is ModelKind.SEIZ:
        return (2,)
    return (2, 5, 8)


def _check_rate(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValueError(f"{name} must be finite and >= 0, got {value}")
    return value


def _check_prob(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class SisParams:
    """SIS parameters.

    beta: S->I contact rate (1/hour).
    lam:  recovery contact rate I->S (1/hour).  ("lambda" on the wire;
          renamed because of the Python keyword.)
    """

    beta: float
    lam: float

    def __post_init__(self):
        _check_rate("beta", self.beta)
        _check_rate("lam", self.lam)

    def to_kernel_vec(self) -> np.ndarray:
        return np.array([self.beta, self.lam], dtype=np.float64)


@dataclass(frozen=True)
class SeizParams:
    """SEIZ parameters.

    beta: S-I contact rate (1/hour).
    b:    S-Z contact rate (1/hour).
    rho:  E-I contact rate (1/hour).
    epsilon: incubation rate (1/hour).
    p:    probability of direct S->I on contact with I; 1-p routes to E.
    l:    probability of S->Z on contact with Z; 1-l routes to E.
    """

    beta: float
    b: float
    rho: float
    epsilon: float
    p: float
    l: float

    def __post_init__(self):
        for name in ("beta", "b", "rho", "epsilon"):
            _check_rate(name, getattr(self, name))
        _check_prob("p", self.p)
        _check_prob("l", self.l)

    def to_kernel_vec(self) -> np.ndarray:
        return np.array([self.beta, self.b, self.rho, self.epsilon, self.p, self.l],
                        dtype=np.float64)


@dataclass(frozen=True)
class CdSeizParams:
    """CD-SEIZ parameters: shared contact rates, per-activity transition
    probabilities.

    p and l are length-3 sequences indexed by channel
    (0=retweet, 1=quote, 2=reply).
    """

    beta: float
    b: float
    rho: float
    epsilon: float
    p: tuple[float, float, float]
    l: tuple[float, float, float]

    def __post_init__(self):
        for name in ("beta", "b", "rho", "epsilon"):
            _check_rate(name, getattr(self, name))
        for name in ("p", "l"):
            values = tuple(float(v) for v in getattr(self, name))
            if len(values) != N_CHANNELS:
                raise ValueError(f"{name} must have {N_CHANNELS} entries, got {len(values)}")
            for i, v in enumerate(values):
                _check_prob(f"{name}[{i}]", v)
            object.__setattr__(self, name, values)

    def to_kernel_vec(self) -> np.ndarray:
        return np.array([self.beta, self.b, self.rho, self.epsilon,
                         *self.p, *self.l], dtype=np.float64)

    def channel(self, i: int) -> SeizParams:
        """The single-activity SEIZ parameters of channel i."""
        return SeizParams(self.beta, self.b, self.rho, self.epsilon, self.p[i], self.l[i])


ModelParams = SisParams | SeizParams | CdSeizParams


def params_kind(params: ModelParams) -> ModelKind:
    if isinstance(params, SisParams):
        return ModelKind.SIS
    if isinstance(params, SeizParams):
        return ModelKind.SEIZ
    if isinstance(params, CdSeizParams):
        return ModelKind.CDSEIZ
    raise TypeError(f"not a model parameter object: {type(params).__name__}")


# ---------------------------------------------------------------------------
# Kernels.  Flat float64 arrays in, derivative out-parameter; shared between
# the public rhs functions, the integrator and the fitting objective.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sis_rhs_kernel(y, prm, n, out):
    # prm = [beta, lam]
    infect = prm[0] * y[0] * y[1] / n
    recover = prm[1] * y[1] / n
    out[0] = recover - infect
    out[1] = infect - recover


@njit(cache=True)
def _seiz_rhs_kernel(y, prm, n, out):
    # prm = [beta, b, rho, epsilon, p, l]; y = [S, E, I, Z]
    t_si = prm[0] * y[0] * y[2] / n
    t_sz = prm[1] * y[0] * y[3] / n
    t_ei = prm[2] * y[1] * y[2] / n
    t_inc = prm[3] * y[1]
    p = prm[4]
    l = prm[5]
    out[0] = -t_si - t_sz
    out[1] = (1.0 - p) * t_si + (1.0 - l) * t_sz - t_ei - t_inc
    out[2] = p * t_si + t_ei + t_inc
    out[3] = l * t_sz


@njit(cache=True)
def _cdseiz_rhs_kernel(y, prm, n, out):
    # prm = [beta, b, rho, epsilon, p0, p1, p2, l0, l1, l2]
    # y = [S, E0, I0, Z0, E1, I1, Z1, E2, I2, Z2]
    beta = prm[0]
    b = prm[1]
    rho = prm[2]
    eps = prm[3]
    s = y[0]
    ds = 0.0
    for i in range(3):
        e = y[1 + 3 * i]
        inf = y[2 + 3 * i]
        z = y[3 + 3 * i]
        p = prm[4 + i]
        l = prm[7 + i]
        t_si = beta * s * inf / n
        t_sz = b * s * z / n
        t_ei = rho * e * inf / n
        t_inc = eps * e
        ds += -t_si - t_sz
        out[1 + 3 * i] = (1.0 - p) * t_si + (1.0 - l) * t_sz - t_ei - t_inc
        out[2 + 3 * i] = p * t_si + t_ei + t_inc
        out[3 + 3 * i] = l * t_sz
    out[0] = ds


@njit(cache=True)
def _rhs_kernel(code, y, prm, n, out):
    if code == 0:
        _sis_rhs_kernel(y, prm, n, out)
    elif code == 1:
        _seiz_rhs_kernel(y, prm, n, out)
    else:
        _cdseiz_rhs_kernel(y, prm, n, out)


# ---------------------------------------------------------------------------
# Public rhs functions: validate, then delegate to the kernels.
# ---------------------------------------------------------------------------

def _check_rhs_inputs(kind: ModelKind, state, n: float) -> np.ndarray:
    y = np.asarray(state, dtype=np.float64)
    dim = model_dimension(kind)
    if y.shape != (dim,):
        raise ValueError(f"{kind.value} state must have shape ({dim},), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"non-finite state entries: {y}")
    if not (math.isfinite(n) and n > 0):
        raise ValueError(f"population must be finite and > 0, got {n}")
    return y


def sis_rhs(state, params: SisParams, n: float) -> np.ndarray:
    """[dS/dt, dI/dt] for the SIS model."""
    y = _check_rhs_inputs(ModelKind.SIS, state, n)
    out = np.empty(2)
    _sis_rhs_kernel(y, params.to_kernel_vec(), float(n), out)
    return out


def seiz_rhs(state, params: SeizParams, n: float) -> np.ndarray:
    """[dS, dE, dI, dZ] for the SEIZ model."""
    y = _check_rhs_inputs(ModelKind.SEIZ, state, n)
    out = np.empty(4)
    _seiz_rhs_kernel(y, params.to_kernel_vec(), float(n), out)
    return out


def cdseiz_rhs(state, params: CdSeizParams, n: float) -> np.ndarray:
    """10-entry derivative vector for the CD-SEIZ model."""
    y = _check_rhs_inputs(ModelKind.CDSEIZ, state, n)
    out = np.empty(10)
    _cdseiz_rhs_kernel(y, params.to_kernel_vec(), float(n), out)
    return out


def rhs(state, params: ModelParams, n: float) -> np.ndarray:
    """Model-generic dispatch over the three rhs functions."""
    kind = params_kind(params)
    if kind is ModelKind.SIS:
        return sis_rhs(state, params, n)
    if kind is ModelKind.SEIZ:
        return seiz_rhs(state, params, n)
    return cdseiz_rhs(state, params, n)
