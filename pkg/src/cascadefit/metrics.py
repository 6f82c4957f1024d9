"""Fit-quality metrics and the rank test used for model comparison.

Error is the relative L2 distance between the model curve and the observed
cumulative counts; Mean Deviation is the mean absolute pointwise gap.  The
Mann-Whitney U test compares per-model error distributions over many
cascades: two-sided, mid-ranks for ties, tie-corrected normal approximation
with a 0.5 continuity correction, and a full-enumeration exact path for
small samples.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTargetError, DegenerateTestError

MODEL_NAMES = ("sis", "seiz", "cdseiz")

# Exact path: all C(n_a+n_b, n_a) rank splits are enumerated.  Kicks in for
# min(n_a, n_b) <= 8, but only while the split count stays enumerable.
EXACT_MIN_SIDE = 8
MAX_EXACT_SPLITS = 200_000

HIST_BIN_WIDTH = 0.005
HIST_RANGE = (0.0, 0.5)


def fit_error(model_series, target) -> float:
    """Relative L2 error ||model - target||_2 / ||target||_2."""
    m = np.asarray(model_series, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if m.shape != t.shape or m.ndim != 1 or len(t) < 1:
        raise ValueError(f"series shapes differ: {m.shape} vs {t.shape}")
    denom = np.linalg.norm(t)
    if denom == 0.0:
        raise DegenerateTargetError("target series has zero norm")
    return float(np.linalg.norm(m - t) / denom)


def mean_deviation(model_series, target) -> float:
    """Mean absolute pointwise deviation between model and observation."""
    m = np.asarray(model_series, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if m.shape != t.shape or m.ndim != 1 or len(t) < 1:
        raise ValueError(f"series shapes differ: {m.shape} vs {t.shape}")
    return float(np.abs(m - t).mean())


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    n = len(values)
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    z: float
    p: float
    method: str  # "exact" or "normal"

    def __iter__(self):
        return iter((self.u, self.z, self.p))


def mann_whitney_u(sample_a, sample_b) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test on two independent samples.

    Returns the U statistic of sample_a, the tie-corrected z score, and
    the two-sided p-value.  All-identical pooled values have zero rank
    variance and raise DegenerateTestError.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty 1-d sequences")
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        raise DegenerateTestError("all values identical across both samples")

    ranks = _midranks(pooled)
    u_a = float(ranks[:n_a].sum()) - n_a * (n_a + 1) / 2.0
    mu = n_a * n_b / 2.0

    # Tie-corrected variance of U under H0.
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(((counts.astype(np.float64) ** 3) - counts).sum()) / (n * (n - 1))
    sigma2 = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    sigma = math.sqrt(sigma2)
    if u_a > mu:
        z = (u_a - mu - 0.5) / sigma
    elif u_a < mu:
        z = (u_a - mu + 0.5) / sigma
    else:
        z = 0.0

    if min(n_a, n_b) <= EXACT_MIN_SIDE and math.comb(n, n_a) <= MAX_EXACT_SPLITS:
        p = _exact_two_sided_p(ranks, n_a, mu, abs(u_a - mu))
        return MannWhitneyResult(u=u_a, z=z, p=p, method="exact")

    p = math.erfc(abs(z) / math.sqrt(2.0))
    return MannWhitneyResult(u=u_a, z=z, p=min(1.0, p), method="normal")


def _exact_two_sided_p(ranks: np.ndarray, n_a: int, mu: float, dev_obs: float) -> float:
    """P(|U - mu| >= |U_obs - mu|) over all equally likely rank splits.

    Mid-ranks are multiples of 0.5, so every U and deviation is exactly
    representable and the comparison is exact.
    """
    offset = n_a * (n_a + 1) / 2.0
    hits = 0
    total = 0
    rank_list = ranks.tolist()
    for combo in itertools.combinations(rank_list, n_a):
        u = sum(combo) - offset
        total += 1
        if abs(u - mu) >= dev_obs:
            hits += 1
    return hits / total


# ---------------------------------------------------------------------------
# Comparison report over many cascades.
# ---------------------------------------------------------------------------

@dataclass
class CascadeRow:
    """Per-cascade fit outcomes; None where a model's fit failed."""

    cascade_id: str
    size: int
    errors: dict = field(default_factory=dict)       # model name -> float | None
    mean_devs: dict = field(default_factory=dict)    # model name -> float | None
    status: dict = field(default_factory=dict)       # model name -> "ok" | reason


@dataclass
class ComparisonReport:
    rows: list
    summary: dict
    tests: dict
    metadata: dict

    @classmethod
    def from_rows(cls, rows: list, metadata: dict | None = None) -> "ComparisonReport":
        if len(rows) < 1:
            raise ValueError("a comparison needs at least one cascade row")
        rows = sorted(rows, key=lambda r: r.cascade_id)
        summary = {}
        for name in MODEL_NAMES:
            vals = [r.errors.get(name) for r in rows]
            ok = np.array([v for v in vals if v is not None], dtype=np.float64)
            summary[name] = {
                "n_ok": int(len(ok)),
                "n_failed": int(len(vals) - len(ok)),
                "mean_error": float(ok.mean()) if len(ok) else None,
                "median_error": float(np.median(ok)) if len(ok) else None,
            }
        tests = {}
        pairs = [("seiz", "cdseiz", False), ("sis", "seiz", True), ("sis", "cdseiz", True)]
        for name_a, name_b, extension in pairs:
            key = f"{name_a}_vs_{name_b}"
            both = [
                (r.errors[name_a], r.errors[name_b])
                for r in rows
                if r.errors.get(name_a) is not None and r.errors.get(name_b) is not None
            ]
            entry = {"n_a": len(both), "n_b": len(both), "extension": extension}
            if len(both) < 2:
                entry["status"] = "insufficient sample"
            else:
                sample_a = [x for x, _ in both]
                sample_b = [y for _, y in both]
                try:
                    res = mann_whitney_u(sample_a, sample_b)
                except DegenerateTestError:
                    entry["status"] = "degenerate"
                else:
                    entry.update(status="ok", u=res.u, z=res.z, p=res.p, method=res.method)
            tests[key] = entry
        meta = {
            "sidedness": "two-sided (the source protocol does not state one- vs two-sided)",
        }
        if metadata:
            meta.update(metadata)
        return cls(rows=rows, summary=summary, tests=tests, metadata=meta)

    def write_csv(self, path):
        cols = ["cascade_id", "size"]
        for name in MODEL_NAMES:
            cols += [f"error_{name}", f"meandev_{name}", f"status_{name}"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in self.rows:
                row = [r.cascade_id, r.size]
                for name in MODEL_NAMES:
                    err = r.errors.get(name)
                    md = r.mean_devs.get(name)
                    row += [
                        "" if err is None else repr(float(err)),
                        "" if md is None else repr(float(md)),
                        r.status.get(name, ""),
                    ]
                writer.writerow(row)

    def to_json_dict(self) -> dict:
        return {"summary": self.summary, "tests": self.tests, "metadata": self.metadata,
                "n_cascades": len(self.rows)}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_histogram_csv(self, path):
        """Figure-style error histogram: fixed 0.005-wide bins over [0, 0.5]
        plus one overflow row for errors beyond the plotted range."""
        lo, hi = HIST_RANGE
        n_bins = int(round((hi - lo) / HIST_BIN_WIDTH))
        edges = np.linspace(lo, hi, n_bins + 1)
        counts = {}
        overflow = {}
        for name in MODEL_NAMES:
            vals = np.array(
                [r.errors[name] for r in self.rows if r.errors.get(name) is not None],
                dtype=np.float64,
            )
            counts[name], _ = np.histogram(vals, bins=edges)
            overflow[name] = int((vals >= hi).sum())
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi"] + [f"count_{m}" for m in MODEL_NAMES])
            for i in range(n_bins):
                writer.writerow(
                    [f"{edges[i]:.3f}", f"{edges[i + 1]:.3f}"]
                    + [int(counts[m][i]) for m in MODEL_NAMES]
                )
            writer.writerow([f"{hi:.3f}", "inf"] + [overflow[m] for m in MODEL_NAMES])


def read_rows_csv(path) -> list:
    """Inverse of ComparisonReport.write_csv, for the report subcommand."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            row = CascadeRow(cascade_id=rec["cascade_id"], size=int(rec["size"]))
            for name in MODEL_NAMES:
                err = rec.get(f"error_{name}", "")
                md = rec.get(f"meandev_{name}", "")
                row.errors[name] = float(err) if err else None
                row.mean_devs[name] = float(md) if md else None
                row.status[name] = rec.get(f"status_{name}", "")
            rows.append(row)
    return rows
