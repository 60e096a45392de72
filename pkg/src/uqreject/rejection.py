"""Classification with rejection: partition by uncertainty and score it.

Observations are rejected in order of decreasing uncertainty. When the cut
falls inside a group of exactly equal uncertainties, the members of that
group that get rejected are chosen by a seeded shuffle. Each partition is
scored with non-rejected accuracy (NRA), classification quality (CQ) and
rejection quality (RQ).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._seeding import derive_seed
from .errors import DataError, UndefinedMetricError

DEFAULT_GRID = tuple(round(0.05 * i, 2) for i in range(20))
MAX_FRACTION = 0.95
CURVE_COLUMNS = ("q", "nra", "cq", "rq", "rq_defined", "rq_infinite")
RANK_COMPONENTS = ("total", "data", "model")


@dataclass(frozen=True, eq=False)
class EvaluatedSet:
    """Per-observation correctness and the uncertainty used for ranking."""

    obs_ids: tuple
    correct: np.ndarray
    uncertainty: np.ndarray

    def __post_init__(self):
        ids = tuple(self.obs_ids)
        correct = np.asarray(self.correct, dtype=bool)
        unc = np.asarray(self.uncertainty, dtype=np.float64)
        if correct.shape != (len(ids),) or unc.shape != (len(ids),):
            raise DataError("obs_ids, correct and uncertainty must have equal length")
        if len(set(ids)) != len(ids):
            raise DataError("obs_ids must be unique")
        if not np.all(np.isfinite(unc)):
            raise DataError("uncertainties must be finite")
        correct.setflags(write=False)
        unc.setflags(write=False)
        object.__setattr__(self, "obs_ids", ids)
        object.__setattr__(self, "correct", correct)
        object.__setattr__(self, "uncertainty", unc)

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            return cls((), np.zeros(0, bool), np.zeros(0))
        ids, correct, unc = zip(*records)
        return cls(ids, np.array(correct), np.array(unc, dtype=np.float64))

    @classmethod
    def from_predictions(cls, pred_label, true_label, uncertainty, obs_ids=None):
        pred_label = np.asarray(pred_label)
        ids = tuple(range(len(pred_label))) if obs_ids is None else tuple(obs_ids)
        return cls(ids, pred_label == np.asarray(true_label), uncertainty)

    def __len__(self):
        return len(self.obs_ids)

    @property
    def accuracy(self):
        if not len(self):
            raise UndefinedMetricError("accuracy of an empty set")
        return float(self.correct.mean())


@dataclass(frozen=True)
class RejectionPartition:
    rejected_ids: frozenset
    retained_ids: frozenset
    a_n: int
    m_n: int
    a_r: int
    m_r: int

    @property
    def n(self):
        return self.a_n + self.m_n + self.a_r + self.m_r


class RejectionQuality(NamedTuple):
    """RQ with its degeneracy flags; ``value`` is nan if undefined, inf if unbounded."""

    value: float
    defined: bool
    infinite: bool


class CurvePoint(NamedTuple):
    q: float
    nra: float
    cq: float
    rq: float
    rq_defined: bool
    rq_infinite: bool


@dataclass(frozen=True)
class RejectionCurve:
    points: tuple
    seed: int
    rank_by: str = "total"

    def column(self, name):
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    def at(self, q):
        for p in self.points:
            if math.isclose(p.q, q, abs_tol=1e-12):
                return p
        raise KeyError(q)


def n_rejected(q, n):
    """``floor(q * n)``, robust to representation error in ``q``."""
    return int(math.floor(q * n + 1e-9))


def _q_key(q):
    return int(round(q * 1_000_000))


def partition(es, q, seed):
    """Reject the ``floor(q * n)`` most uncertain observations.

    Ties at the cut are broken by a shuffle seeded from ``(seed, q)``.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"rejection fraction must lie in [0, 1], got {q}")
    n = len(es)
    k = n_rejected(q, n)
    u = es.uncertainty
    rejected = np.zeros(n, dtype=bool)
    if k:
        threshold = np.sort(u)[::-1][k - 1]
        above = u > threshold
        tied = np.flatnonzero(u == threshold)
        rng = np.random.default_rng(derive_seed(seed, _q_key(q)))
        chosen = rng.permutation(tied)[: k - int(above.sum())]
        rejected = above
        rejected[chosen] = True
    c = es.correct
    ids = np.asarray(es.obs_ids, dtype=object)
    return RejectionPartition(
        rejected_ids=frozenset(ids[rejected]),
        retained_ids=frozenset(ids[~rejected]),
        a_n=int(np.sum(c & ~rejected)),
        m_n=int(np.sum(~c & ~rejected)),
        a_r=int(np.sum(c & rejected)),
        m_r=int(np.sum(~c & rejected)),
    )


def nra(p):
    """Accuracy on retained observations."""
    kept = p.a_n + p.m_n
    if kept == 0:
        raise UndefinedMetricError("NRA is undefined when every observation is rejected")
    return p.a_n / kept


def cq(p):
    """Fraction of correct keep/reject decisions."""
    if p.n == 0:
        raise UndefinedMetricError("CQ of an empty set")
    return (p.a_n + p.m_r) / p.n


def rq(p):
    """Odds of misclassified vs accurate in the rejected set, relative to all."""
    return _rq_from_counts(p.m_r, p.a_r, p.m_r + p.m_n, p.a_r + p.a_n)


def _rq_from_counts(m_r, a_r, m_all, a_all):
    if m_r + a_r == 0 or m_all == 0:
        return RejectionQuality(math.nan, False, False)
    if a_r == 0:
        return RejectionQuality(math.inf, True, True)
    # a_r > 0 implies a_all > 0
    return RejectionQuality((m_r * a_all) / (a_r * m_all), True, False)


def _check_grid(grid):
    grid = tuple(float(q) for q in grid)
    if not grid:
        raise ValueError("rejection grid is empty")
    if any(q < 0 or q > MAX_FRACTION + 1e-12 for q in grid):
        raise ValueError(f"grid fractions must lie in [0, {MAX_FRACTION}]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid fractions must be strictly increasing")
    return grid


def sweep_curve(es, grid=DEFAULT_GRID, seed=0, rank_by="total"):
    if len(es) == 0:
        raise DataError("cannot sweep an empty evaluated set")
    points = []
    for q in _check_grid(grid):
        p = partition(es, q, seed)
        r = rq(p)
        points.append(CurvePoint(q, nra(p), cq(p), r.value, r.defined, r.infinite))
    return RejectionCurve(tuple(points), seed, rank_by)


def naive_metrics_oracle(es, rejected_ids):
    """Recount NRA, CQ and RQ from an explicit rejected set by set algebra."""
    everything = set(es.obs_ids)
    rejected = set(rejected_ids)
    unknown = rejected - everything
    if unknown:
        raise KeyError(f"unknown obs ids: {sorted(map(str, unknown))[:5]}")
    accurate = {i for i, ok in zip(es.obs_ids, es.correct) if ok}
    mis = everything - accurate
    kept = everything - rejected
    if not kept:
        raise UndefinedMetricError("NRA is undefined when every observation is rejected")
    nra_value = len(accurate & kept) / len(kept)
    cq_value = (len(accurate & kept) + len(mis & rejected)) / len(everything)
    rq_value = _rq_from_counts(len(mis & rejected), len(accurate & rejected), len(mis), len(accurate))
    return nra_value, cq_value, rq_value


# -- CSV -------------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".9g")


def write_curve_csv(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in curve.points:
            if not p.rq_defined:
                rq_text = ""
            elif p.rq_infinite:
                rq_text = "inf"
            else:
                rq_text = _fmt(p.rq)
            w.writerow([_fmt(p.q), _fmt(p.nra), _fmt(p.cq), rq_text, int(p.rq_defined), int(p.rq_infinite)])


def read_curve_csv(path):
    points = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise DataError(f"{path}: expected columns {CURVE_COLUMNS}")
        for row in reader:
            defined = row["rq_defined"] == "1"
            infinite = row["rq_infinite"] == "1"
            rq_value = math.nan if not defined else (math.inf if infinite else float(row["rq"]))
            points.append(CurvePoint(float(row["q"]), float(row["nra"]), float(row["cq"]), rq_value, defined, infinite))
    return points
