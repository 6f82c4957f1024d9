"""Stochastic ground-truth generator.

Simulates agent-level SEIZ / CD-SEIZ dynamics with the Gillespie direct
method: every ODE flow term becomes an exponential-clock propensity over
integer compartment counts, so the ensemble mean converges to the
mean-field trajectory for large populations.  Each S->I and E->I
transition emits a TweetEvent; the emergent event log round-trips through
the cascade builder as a single tree.

Parent assignment is uniform over previously infected users.  The
compartmental models are mean-field, so any tree consistent with the
event times is valid; uniform is the simplest documented choice and it
only shapes the tree, never the compartment dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone, timedelta

import numpy as np

from .cascade import CHANNEL_ACTIONS, Action, TweetEvent
from .models import CdSeizParams, ModelKind, SeizParams, params_kind

EPOCH = datetime(2023, 1, 1, tzinfo=timezone.utc)

MIN_HORIZON_HOURS = 8


@dataclass
class SynthConfig:
    """One batch of independent synthetic cascades with shared truth.

    i0 is the initial infected count per activity channel (int broadcasts
    to every channel); the first initial infected of channel 0 is the
    cascade root.
    """

    model_kind: ModelKind
    true_params: SeizParams | CdSeizParams
    n_agents: int = 20000
    i0: tuple = 1
    horizon_hours: int = 48
    seed: int = 0
    n_cascades: int = 1

    def __post_init__(self):
        if isinstance(self.model_kind, str):
            self.model_kind = ModelKind.parse(self.model_kind)
        if self.model_kind is ModelKind.SIS:
            raise ValueError("synthesis covers seiz and cdseiz only")
        if params_kind(self.true_params) is not self.model_kind:
            raise ValueError(f"true_params are {params_kind(self.true_params).value}, "
                             f"config says {self.model_kind.value}")
        k = self.n_channels
        if isinstance(self.i0, (int, np.integer)):
            self.i0 = (int(self.i0),) * k
        else:
            self.i0 = tuple(int(v) for v in self.i0)
        if len(self.i0) != k:
            raise ValueError(f"i0 needs {k} channel counts, got {len(self.i0)}")
        if any(v < 1 for v in self.i0):
            raise ValueError("i0 must be >= 1 per channel")
        if self.n_agents <= sum(self.i0):
            raise ValueError("n_agents must exceed the total initial infected")
        if self.horizon_hours < MIN_HORIZON_HOURS:
            raise ValueError(f"horizon_hours must be >= {MIN_HORIZON_HOURS}")
        if self.n_cascades < 1:
            raise ValueError("n_cascades must be >= 1")

    @property
    def n_channels(self) -> int:
        return 3 if self.model_kind is ModelKind.CDSEIZ else 1

    def channel_params(self) -> list:
        """Per-channel (p, l) pairs."""
        if self.model_kind is ModelKind.SEIZ:
            return [(self.true_params.p, self.true_params.l)]
        return [(self.true_params.p[k], self.true_params.l[k]) for k in range(3)]

    def params_dict(self) -> dict:
        prm = self.true_params
        out = {"beta": prm.beta, "b": prm.b, "rho": prm.rho, "epsilon": prm.epsilon}
        if self.model_kind is ModelKind.SEIZ:
            out.update(p=prm.p, l=prm.l)
        else:
            out.update(p=list(prm.p), l=list(prm.l))
        return out

    def to_dict(self) -> dict:
        """Config-file form: feeding this back via --config reproduces the run."""
        return {
            "model": self.model_kind.value,
            "params": self.params_dict(),
            "n_agents": self.n_agents,
            "i0": list(self.i0),
            "horizon_hours": self.horizon_hours,
            "seed": self.seed,
            "n_cascades": self.n_cascades,
        }


@dataclass
class SynthCascade:
    """One simulated cascade: its event log, truth, and hourly snapshots.

    checkpoints has one row per integer hour 0..horizon and one column per
    compartment in the model's state layout; rows are integer counts that
    sum to n_agents.
    """

    index: int
    root_id: str
    events: list
    checkpoints: np.ndarray
    config: SynthConfig

    def infected_checkpoints(self) -> np.ndarray:
        """Cumulative acting-user count at hours 0..horizon (I is absorbing)."""
        if self.config.model_kind is ModelKind.SEIZ:
            return self.checkpoints[:, 2].astype(np.float64)
        return self.checkpoints[:, (2, 5, 8)].sum(axis=1).astype(np.float64)

    def events_jsonl(self) -> str:
        return "".join(ev.to_jsonl() + "\n" for ev in self.events)

    def truth_dict(self) -> dict:
        out = self.config.to_dict()
        out.update(cascade_index=self.index, root_id=self.root_id,
                   n_events=len(self.events))
        return out

    def truth_json(self) -> str:
        return json.dumps(self.truth_dict(), indent=2, sort_keys=True) + "\n"


def _event_time(t_hours: float) -> datetime:
    return EPOCH + timedelta(seconds=int(t_hours * 3600.0))


def _shared_rates(params) -> tuple:
    return (params.beta, params.b, params.rho, params.epsilon)


def simulate_one(config: SynthConfig, index: int) -> SynthCascade:
    """Simulate cascade number `index` of the batch (deterministic)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed,
                                                       spawn_key=(index,)))
    kind = config.model_kind
    n = float(config.n_agents)
    nch = config.n_channels
    beta, b, rho, epsilon = _shared_rates(config.true_params)
    pl = config.channel_params()

    s = config.n_agents - sum(config.i0)
    e = [0] * nch
    i = list(config.i0)
    z = [0] * nch

    def snapshot() -> list:
        if kind is ModelKind.SEIZ:
            return [s, e[0], i[0], z[0]]
        row = [s]
        for k in range(nch):
            row.extend((e[k], i[k], z[k]))
        return row

    prefix = f"c{index:04d}"
    events = []
    infected_ids = []
    seq = 0

    def emit(t: float, action: Action):
        nonlocal seq
        parent = None
        if action is not Action.ROOT:
            parent = infected_ids[int(rng.integers(0, len(infected_ids)))]
        ev = TweetEvent(id=f"{prefix}e{seq:06d}", user_id=f"{prefix}u{seq:06d}",
                        timestamp=_event_time(t), action=action, parent_id=parent)
        events.append(ev)
        infected_ids.append(ev.id)
        seq += 1

    emit(0.0, Action.ROOT)
    root_id = events[0].id
    for k in range(nch):
        extra = config.i0[k] - (1 if k == 0 else 0)
        action = CHANNEL_ACTIONS[k] if nch == 3 else Action.RETWEET
        for _ in range(extra):
            emit(0.0, action)

    horizon = config.horizon_hours
    checkpoints = np.zeros((horizon + 1, len(snapshot())), dtype=np.int64)
    checkpoints[0] = snapshot()
    next_cp = 1

    # per channel: S->I (emit), S->E via I, S->Z, S->E via Z, E->I mixing
    # (emit), E->I incubation (emit)
    n_reactions = 6 * nch
    prop = np.zeros(n_reactions)
    t = 0.0
    while True:
        for k in range(nch):
            p_k, l_k = pl[k]
            si = beta * s * i[k] / n
            sz = b * s * z[k] / n
            base = 6 * k
            prop[base + 0] = p_k * si
            prop[base + 1] = (1.0 - p_k) * si
            prop[base + 2] = l_k * sz
            prop[base + 3] = (1.0 - l_k) * sz
            prop[base + 4] = rho * e[k] * i[k] / n
            prop[base + 5] = epsilon * e[k]
        total = prop.sum()
        if not np.isfinite(total):
            raise ValueError(f"non-finite propensity at t={t:.3f}h; "
                             f"check the configured rates")
        if total <= 0.0:
            t_next = np.inf
        else:
            t_next = t + rng.exponential(1.0 / total)

        while next_cp <= horizon and next_cp < t_next:
            checkpoints[next_cp] = snapshot()
            next_cp += 1
        if t_next >= horizon:
            break
        t = t_next

        r = int(np.searchsorted(np.cumsum(prop), rng.random() * total, side="right"))
        r = min(r, n_reactions - 1)
        k, kind_r = divmod(r, 6)
        action = CHANNEL_ACTIONS[k] if nch == 3 else Action.RETWEET
        if kind_r == 0:
            s -= 1
            i[k] += 1
            emit(t, action)
        elif kind_r == 1:
            s -= 1
            e[k] += 1
        elif kind_r == 2:
            s -= 1
            z[k] += 1
        elif kind_r == 3:
            s -= 1
            e[k] += 1
        else:
            e[k] -= 1
            i[k] += 1
            emit(t, action)

    return SynthCascade(index=index, root_id=root_id, events=events,
                        checkpoints=checkpoints, config=config)


def simulate_stochastic(config: SynthConfig) -> list:
    """All cascades of the batch, in index order."""
    return [simulate_one(config, idx) for idx in range(config.n_cascades)]
