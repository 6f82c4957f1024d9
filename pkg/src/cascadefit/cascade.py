"""Tweet-event logs, cascade tree reconstruction and hourly binning.

A cascade is the set of reactions (retweet/quote/reply) descending from
one root tweet through parent links.  The log format is JSONL, one event
per line:

    {"id": "...", "user_id": "...", "ts": "2018-04-01T12:00:00Z",
     "action": "root|retweet|quote|reply", "parent_id": "..."}

parent_id is present exactly when the action is not root; unknown keys are
ignored.  Reconstruction attaches every event to its root transitively
(a reply to a retweet belongs to the retweeted root's cascade).  Events
whose parent chain never reaches a root in the log are reported as
orphans, never silently dropped or misattached.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import ClockSkewError, DuplicateIdError, ParseError


class Action(enum.Enum):
    ROOT = "root"
    RETWEET = "retweet"
    QUOTE = "quote"
    REPLY = "reply"

    @property
    def channel(self) -> int:
        """Activity channel index: retweet=0, quote=1, reply=2."""
        if self is Action.ROOT:
            raise ValueError("the root is not an activity; it has no channel")
        return {"retweet": 0, "quote": 1, "reply": 2}[self.value]


CHANNEL_ACTIONS = (Action.RETWEET, Action.QUOTE, Action.REPLY)


def parse_timestamp(raw: str) -> datetime:
    """RFC 3339 string to a tz-aware UTC datetime, truncated to seconds."""
    text = raw.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=0)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class TweetEvent:
    id: str
    user_id: str
    timestamp: datetime
    action: Action
    parent_id: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("event id must be non-empty")
        has_parent = self.parent_id is not None and self.parent_id != ""
        if self.action is Action.ROOT and has_parent:
            raise ValueError(f"root event {self.id!r} must not have a parent_id")
        if self.action is not Action.ROOT and not has_parent:
            raise ValueError(f"{self.action.value} event {self.id!r} requires a parent_id")

    def to_obj(self) -> dict:
        obj = {"id": self.id, "user_id": self.user_id,
               "ts": format_timestamp(self.timestamp), "action": self.action.value}
        if self.parent_id is not None:
            obj["parent_id"] = self.parent_id
        return obj

    def to_jsonl(self) -> str:
        return json.dumps(self.to_obj(), separators=(",", ":"))


def _event_from_obj(obj) -> TweetEvent:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    for key in ("id", "user_id", "ts", "action"):
        if key not in obj:
            raise ValueError(f"missing key {key!r}")
    event_id = obj["id"]
    user_id = obj["user_id"]
    if not isinstance(event_id, str) or not event_id:
        raise ValueError("id must be a non-empty string")
    if not isinstance(user_id, str):
        raise ValueError("user_id must be a string")
    try:
        action = Action(str(obj["action"]).lower())
    except ValueError:
        raise ValueError(f"unknown action {obj['action']!r}") from None
    try:
        ts = parse_timestamp(obj["ts"])
    except (ValueError, TypeError):
        raise ValueError(f"bad timestamp {obj['ts']!r}") from None
    parent = obj.get("parent_id")
    if parent is not None and not isinstance(parent, str):
        raise ValueError("parent_id must be a string when present")
    return TweetEvent(id=event_id, user_id=user_id, timestamp=ts,
                      action=action, parent_id=parent)


@dataclass
class ParseResult:
    events: list
    malformed: list  # (line_no, reason), 1-based line numbers

    @property
    def n_malformed(self) -> int:
        return len(self.malformed)


def _iter_lines(source):
    if hasattr(source, "read"):
        for line in source:
            yield line.decode("utf-8") if isinstance(line, bytes) else line
        return
    if isinstance(source, os.PathLike):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
        return
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        # a path if it names a file, otherwise the log content itself
        if not source.lstrip().startswith("{") and os.path.exists(source):
            with open(source, "r", encoding="utf-8") as fh:
                yield from fh
            return
        yield from source.splitlines()
        return
    yield from source  # iterable of lines


def parse_events(source, strict: bool = False) -> ParseResult:
    """Parse a JSONL event log.

    source may be a path, an open stream, or the log content itself.
    Malformed lines are collected in the result (strict=True raises on the
    first one instead); duplicate ids are always fatal.
    """
    events = []
    malformed = []
    seen = set()
    for line_no, line in enumerate(_iter_lines(source), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            if strict:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from None
            malformed.append((line_no, f"invalid JSON: {exc.msg}"))
            continue
        try:
            event = _event_from_obj(obj)
        except ValueError as exc:
            if strict:
                raise ParseError(line_no, str(exc)) from None
            malformed.append((line_no, str(exc)))
            continue
        if event.id in seen:
            raise DuplicateIdError(event.id, line_no)
        seen.add(event.id)
        events.append(event)
    return ParseResult(events=events, malformed=malformed)


# ---------------------------------------------------------------------------
# Cascade trees.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CascadeNode:
    event: TweetEvent
    parent_id: str | None
    depth: int


@dataclass
class CascadeTree:
    root_id: str
    nodes: dict  # event id -> CascadeNode; includes the root at depth 0

    @property
    def size(self) -> int:
        """Reaction count; the root itself is not a reaction."""
        return len(self.nodes) - 1

    @property
    def root(self) -> TweetEvent:
        return self.nodes[self.root_id].event

    def role(self, event_id: str) -> str:
        """Node role: 'root', 'parent' (inner node) or 'child' (leaf)."""
        node = self.nodes[event_id]
        if node.depth == 0:
            return "root"
        has_children = any(n.parent_id == event_id for n in self.nodes.values())
        return "parent" if has_children else "child"

    def events(self) -> list:
        """Root first, then reactions ordered by (timestamp, id)."""
        reactions = [n.event for n in self.nodes.values() if n.parent_id is not None]
        reactions.sort(key=lambda e: (e.timestamp, e.id))
        return [self.root] + reactions


@dataclass
class BuildResult:
    trees: list
    orphans: list  # events whose parent chain reaches no root in the log


def build_cascades(events) -> BuildResult:
    """Group events into one tree per root; unattachable events are orphans.

    Insensitive to input order: trees come back sorted by root_id and each
    tree's nodes are attached breadth-first with children in id order.
    """
    seen = set()
    for e in events:
        if e.id in seen:
            raise DuplicateIdError(e.id, -1)
        seen.add(e.id)

    children = {}
    for e in events:
        if e.parent_id is not None:
            children.setdefault(e.parent_id, []).append(e)
    for sibs in children.values():
        sibs.sort(key=lambda e: e.id)

    trees = []
    attached = set()
    roots = sorted((e for e in events if e.action is Action.ROOT), key=lambda e: e.id)
    for root in roots:
        nodes = {root.id: CascadeNode(event=root, parent_id=None, depth=0)}
        attached.add(root.id)
        frontier = [root.id]
        while frontier:
            next_frontier = []
            for pid in frontier:
                for child in children.get(pid, ()):
                    nodes[child.id] = CascadeNode(
                        event=child, parent_id=pid, depth=nodes[pid].depth + 1
                    )
                    attached.add(child.id)
                    next_frontier.append(child.id)
            frontier = next_frontier
        trees.append(CascadeTree(root_id=root.id, nodes=nodes))

    orphans = sorted((e for e in events if e.id not in attached), key=lambda e: e.id)
    return BuildResult(trees=trees, orphans=orphans)


# ---------------------------------------------------------------------------
# Hourly cumulative activity series (the fit targets).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ActivitySeries:
    """Cumulative per-activity counts, hourly bins anchored at the root.

    Bin j holds reactions with timestamp offset in [j, j+1) hours from the
    root; the root itself is not counted.  Events beyond the horizon are
    excluded and tallied in `truncated`.
    """

    t0: datetime
    horizon_hours: int
    retweet: tuple
    quote: tuple
    reply: tuple
    total: tuple
    truncated: int = 0

    @property
    def n_obs(self) -> int:
        return self.horizon_hours + 1

    def channel(self, i: int) -> tuple:
        return (self.retweet, self.quote, self.reply)[i]

    def channels_array(self) -> np.ndarray:
        return np.array([self.retweet, self.quote, self.reply], dtype=np.float64)

    def total_array(self) -> np.ndarray:
        return np.array(self.total, dtype=np.float64)


def binned_series(tree: CascadeTree, horizon_hours: int | None = None) -> ActivitySeries:
    """Bin a tree's reactions into hourly cumulative per-activity series.

    horizon_hours=None picks the last reaction's bin (0 for an empty tree).
    Reactions timestamped before the root raise ClockSkewError.
    """
    root_ts = tree.root.timestamp
    reactions = [n.event for n in tree.nodes.values() if n.parent_id is not None]

    offenders = sorted(e.id for e in reactions if e.timestamp < root_ts)
    if offenders:
        raise ClockSkewError(offenders)

    bins = {e.id: int((e.timestamp - root_ts).total_seconds() // 3600) for e in reactions}
    if horizon_hours is None:
        horizon_hours = max(bins.values(), default=0)
    else:
        horizon_hours = int(horizon_hours)
        if horizon_hours < 1:
            raise ValueError(f"horizon_hours must be >= 1, got {horizon_hours}")

    n_obs = horizon_hours + 1
    counts = np.zeros((3, n_obs), dtype=np.int64)
    truncated = 0
    for e in reactions:
        b = bins[e.id]
        if b > horizon_hours:
            truncated += 1
            continue
        counts[e.action.channel, b] += 1
    cum = counts.cumsum(axis=1)
    total = cum.sum(axis=0)
    return ActivitySeries(
        t0=root_ts,
        horizon_hours=horizon_hours,
        retweet=tuple(int(v) for v in cum[0]),
        quote=tuple(int(v) for v in cum[1]),
        reply=tuple(int(v) for v in cum[2]),
        total=tuple(int(v) for v in total),
        truncated=truncated,
    )


def select_cascades(trees, min_size: int = 0, top_k: int | None = None) -> list:
    """Largest-first selection: filter by size, sort (size desc, root_id asc),
    keep the top_k."""
    kept = [t for t in trees if t.size >= min_size]
    kept.sort(key=lambda t: (-t.size, t.root_id))
    if top_k is not None:
        kept = kept[:top_k]
    return kept


# ---------------------------------------------------------------------------
# Cascade file format (JSON, bit-exact round trip).
# ---------------------------------------------------------------------------

def cascade_to_obj(tree: CascadeTree, series: ActivitySeries) -> dict:
    return {
        "root_id": tree.root_id,
        "events": [e.to_obj() for e in tree.events()],
        "series": {
            "t0": format_timestamp(series.t0),
            "horizon_hours": series.horizon_hours,
            "retweet": list(series.retweet),
            "quote": list(series.quote),
            "reply": list(series.reply),
            "total": list(series.total),
            "truncated": series.truncated,
        },
    }


def cascade_from_obj(obj: dict) -> tuple:
    events = [_event_from_obj(rec) for rec in obj["events"]]
    built = build_cascades(events)
    if len(built.trees) != 1 or built.orphans:
        raise ValueError(
            f"cascade file must contain exactly one fully attached tree; "
            f"got {len(built.trees)} trees and {len(built.orphans)} orphans"
        )
    tree = built.trees[0]
    if tree.root_id != obj["root_id"]:
        raise ValueError(f"root_id {obj['root_id']!r} does not match events ({tree.root_id!r})")
    s = obj["series"]
    series = ActivitySeries(
        t0=parse_timestamp(s["t0"]),
        horizon_hours=int(s["horizon_hours"]),
        retweet=tuple(int(v) for v in s["retweet"]),
        quote=tuple(int(v) for v in s["quote"]),
        reply=tuple(int(v) for v in s["reply"]),
        total=tuple(int(v) for v in s["total"]),
        truncated=int(s.get("truncated", 0)),
    )
    return tree, series


def dump_cascade(tree: CascadeTree, series: ActivitySeries) -> str:
    return json.dumps(cascade_to_obj(tree, series), indent=2) + "\n"


def write_cascade_file(path, tree: CascadeTree, series: ActivitySeries):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_cascade(tree, series))


def load_cascade_file(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        return cascade_from_obj(json.load(fh))


def write_events_jsonl(path, events):
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(e.to_jsonl())
            fh.write("\n")
