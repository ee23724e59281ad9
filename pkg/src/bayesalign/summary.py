"""Post-processing of posterior samples: match probabilities, rankings, point estimates, summaries."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .domain import Matching, validate_matching


@dataclass(frozen=True)
class MatchProbTable:
    """Sparse map (j, k) -> posterior probability, 1-based indices."""

    entries: dict
    m: int
    n: int

    def dense(self) -> np.ndarray:
        out = np.zeros((self.m, self.n))
        for (j, k), p in self.entries.items():
            out[j - 1, k - 1] = p
        return out

    def __getitem__(self, pair) -> float:
        return self.entries.get(tuple(pair), 0.0)


def marginal_probs(samples: Iterable, m: int, n: int) -> MatchProbTable:
    """Fraction of samples containing each pair; ``samples`` yield objects with ``pairs``."""
    counts: Counter = Counter()
    total = 0
    for s in samples:
        counts.update(s.pairs)
        total += 1
    if total == 0:
        raise ValueError("no samples to summarize")
    return MatchProbTable({p: c / total for p, c in sorted(counts.items())}, m, n)


@dataclass(frozen=True)
class Ranking:
    ranked: tuple  # ((j, k), p) in decreasing probability
    first_duplicate: Optional[int]  # 1-based rank, or None


def rank_matches(table: MatchProbTable) -> Ranking:
    ranked = tuple(sorted(table.entries.items(), key=lambda e: (-e[1], e[0])))
    seen_j, seen_k = set(), set()
    first = None
    for rank, ((j, k), _) in enumerate(ranked, start=1):
        if j in seen_j or k in seen_k:
            first = rank
            break
        seen_j.add(j)
        seen_k.add(k)
    return Ranking(ranked, first)


@dataclass(frozen=True)
class PointEstimate:
    matching: Matching
    objective: float
    monotone: bool
    violation: Optional[str]


def point_estimate(table: MatchProbTable, K: float) -> PointEstimate:
    """One-to-one assignment maximizing the sum of (p_jk - K) over selected pairs.

    Pairs with p <= K only lower the objective, so their gain is clipped to zero
    and they are dropped afterwards. The result may cross; that is reported
    rather than repaired.
    """
    if not 0.0 < K < 1.0:
        raise ValueError("K must lie strictly between 0 and 1")
    gain = np.maximum(table.dense() - K, 0.0)
    rows, cols = linear_sum_assignment(gain, maximize=True)
    keep = gain[rows, cols] > 0
    pairs = tuple(sorted(zip((rows[keep] + 1).tolist(), (cols[keep] + 1).tolist())))
    mt = Matching(pairs, table.m, table.n)
    report = validate_matching(mt)
    return PointEstimate(mt, float(gain[rows, cols].sum()), report is None,
                         None if report is None else str(report))


def _interval(values: np.ndarray) -> dict:
    lo, med, hi = np.quantile(values, [0.025, 0.5, 0.975])
    return {"median": float(med), "mean": float(values.mean()), "lo95": float(lo), "hi95": float(hi)}


@dataclass(frozen=True)
class RunSummary:
    n_samples: int
    L: dict
    rmsd: Optional[dict]
    log_post: dict
    s: dict
    ext: dict
    g: Optional[dict] = None
    h: Optional[dict] = None
    pam_l: Optional[dict] = None

    def to_dict(self) -> dict:
        return asdict(self)


def summarize(samples: Sequence, sampled_gaps: bool = False, sampled_pam: bool = False) -> RunSummary:
    if not samples:
        raise ValueError("no samples to summarize")

    def col(name):
        return np.array([getattr(s, name) for s in samples], dtype=float)

    lp = col("log_post")
    log_post = _interval(lp)
    log_post["min"] = float(lp.min())
    rmsd = col("rmsd")
    rmsd = rmsd[np.isfinite(rmsd)]
    return RunSummary(
        n_samples=len(samples),
        L=_interval(col("L")),
        rmsd=_interval(rmsd) if rmsd.size else None,
        log_post=log_post,
        s=_interval(col("s")),
        ext=_interval(col("ext")),
        g=_interval(col("g")) if sampled_gaps else None,
        h=_interval(col("h")) if sampled_gaps else None,
        pam_l=_interval(col("pam_l")) if sampled_pam else None,
    )


def compare_runs(summaries: Sequence[RunSummary], threshold: float = 2.0) -> list[dict]:
    """Flag runs whose median log posterior trails the best run by more than ``threshold``."""
    best = max(s.log_post["median"] for s in summaries)
    return [{"run": i, "median_log_post": s.log_post["median"],
             "deficit": best - s.log_post["median"],
             "subsidiary_mode": best - s.log_post["median"] > threshold}
            for i, s in enumerate(summaries)]


def export_heatmap(table: MatchProbTable, sparse_path, dense_path=None):
    """Write (j, k, probability) rows for nonzero cells, optionally an m x n matrix too."""
    with open(sparse_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "k", "probability"])
        for (j, k), p in sorted(table.entries.items()):
            if p > 0:
                w.writerow([j, k, repr(float(p))])
    if dense_path is not None:
        with open(dense_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j"] + [str(k) for k in range(1, table.n + 1)])
            for j, row in enumerate(table.dense(), start=1):
                w.writerow([j] + [repr(float(p)) for p in row])


def load_heatmap(sparse_path, m: int, n: int) -> MatchProbTable:
    entries = {}
    with open(sparse_path, newline="") as fh:
        for row in csv.DictReader(fh):
            entries[(int(row["j"]), int(row["k"]))] = float(row["probability"])
    return MatchProbTable(entries, m, n)


def load_dense_heatmap(dense_path) -> np.ndarray:
    with open(dense_path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    if not rows:
        return np.zeros((0, 0))
    return np.array([[float(v) for v in r[1:]] for r in rows])
