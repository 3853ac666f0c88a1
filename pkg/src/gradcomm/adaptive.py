"""Selection of the compression power that minimizes predicted communication time.

For a sparsifier keeping k of d coordinates, the predicted relative cost of a
run is the per-message transmission time scaled by the variance (or
contraction) penalty the operator puts on the iteration count:

    rand_k:  J(k) = (1 + (d/k) / sqrt(n)) * (alpha + beta * s(k))
    top_k:   J(k) = (1 + d/k)             * (alpha + beta * s(k))

with s(k) the exact transmitted bits (index overhead included for top_k).
Factors independent of k multiply J uniformly and cannot move the argmin, so
they are dropped.  ``adaptive_controller`` re-selects k as fresh (size, time)
samples refine the coefficient estimates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import estimator
from .commodel import TimeModelParams
from .compression import index_bits
from .errors import DegenerateDesignError, ParameterError

SELECTION_FAMILIES = ("rand_k", "top_k")

# Above this dimension the exhaustive scan switches to a geometric sub-grid.
SCAN_LIMIT = 10**7
GRID_SIZE = 64

DECISION_CSV_HEADER = "sample_index,alpha_hat,beta_hat,k_star,predicted_cost"


@dataclass(frozen=True)
class SelectionObjective:
    """Everything needed to price a candidate power level."""

    family: str
    d: int
    n: int
    alpha: float
    beta: float
    b: int = 32

    def __post_init__(self):
        if self.family not in SELECTION_FAMILIES:
            raise ParameterError(f"unsupported compressor family: {self.family!r}")
        if self.d < 1 or self.n < 1 or self.b < 1:
            raise ParameterError("d, n, and b must be positive integers")

    @classmethod
    def from_model(cls, family: str, d: int, n: int, params: TimeModelParams, b: int = 32):
        return cls(family=family, d=d, n=n, alpha=params.alpha_const, beta=params.beta_const, b=b)

    @classmethod
    def from_fit(cls, family: str, d: int, n: int, fit: estimator.FitResult, b: int = 32):
        return cls(family=family, d=d, n=n, alpha=fit.alpha_hat, beta=fit.beta_hat, b=b)


def _message_bits(obj: SelectionObjective, k) -> object:
    bits = k * obj.b
    if obj.family == "top_k":
        bits = bits + k * index_bits(obj.d)
    return bits


def predicted_cost(obj: SelectionObjective, k: int) -> float:
    """Predicted relative run time when keeping k coordinates."""
    if not 1 <= k <= obj.d:
        raise ParameterError(f"power level k={k} outside [1, {obj.d}]")
    penalty = obj.d / k
    if obj.family == "rand_k":
        factor = 1.0 + penalty / math.sqrt(obj.n)
    else:
        factor = 1.0 + penalty
    return factor * (obj.alpha + obj.beta * _message_bits(obj, k))


def candidate_powers(d: int) -> np.ndarray:
    """Powers scanned by select_power: exhaustive up to SCAN_LIMIT, then geometric."""
    if d <= SCAN_LIMIT:
        return np.arange(1, d + 1, dtype=np.int64)
    grid = np.unique(np.clip(np.round(np.geomspace(1, d, GRID_SIZE)), 1, d).astype(np.int64))
    return grid


def select_power(obj: SelectionObjective) -> tuple[int, float]:
    """Scan the admissible powers and return (k*, J(k*)); ties go to larger k."""
    ks = candidate_powers(obj.d)
    penalty = obj.d / ks
    if obj.family == "rand_k":
        factor = 1.0 + penalty / math.sqrt(obj.n)
    else:
        factor = 1.0 + penalty
    costs = factor * (obj.alpha + obj.beta * _message_bits(obj, ks))
    best_rev = int(np.argmin(costs[::-1]))
    best = costs.size - 1 - best_rev
    return int(ks[best]), float(costs[best])


@dataclass(frozen=True)
class Decision:
    sample_index: int
    fit: estimator.FitResult
    k_star: int
    predicted_cost: float


def adaptive_controller(
    samples,
    objective: SelectionObjective,
    p_max: float,
    cadence: int = 1,
    forgetting: float = 1.0,
):
    """Track (size, time) samples online and re-select k as the fit drifts.

    The first two samples initialize the estimator (their sizes must differ);
    every subsequent sample is absorbed, and every ``cadence``-th one the power
    is re-selected.  A decision record is yielded for the initial fit and then
    whenever k* changes.  If forgetting has washed out all size variation the
    fit is degenerate; the controller keeps the last selection and moves on.
    """
    if cadence < 1:
        raise ParameterError("re-fit cadence must be >= 1")
    stream = iter(samples)
    try:
        x1, y1 = next(stream)
        x2, y2 = next(stream)
    except StopIteration:
        raise DegenerateDesignError("need at least two samples to initialize") from None
    state = estimator.init(x1, y1, x2, y2, p_max, forgetting)
    current = estimator.fit(state)
    k_star, cost = select_power(replace(objective, alpha=current.alpha_hat, beta=current.beta_hat))
    yield Decision(2, current, k_star, cost)
    last_k = k_star
    for index, (x, y) in enumerate(stream, start=3):
        state = estimator.advance(state, x, y)
        if (index - 2) % cadence != 0:
            continue
        try:
            current = estimator.fit(state)
        except DegenerateDesignError:
            continue
        k_star, cost = select_power(
            replace(objective, alpha=current.alpha_hat, beta=current.beta_hat)
        )
        if k_star != last_k:
            yield Decision(index, current, k_star, cost)
            last_k = k_star


def write_decisions(target, decisions) -> None:
    """Write decision records as ``sample_index,alpha_hat,beta_hat,k_star,predicted_cost``."""
    if hasattr(target, "write"):
        _write(target, decisions)
    else:
        with open(target, "w", newline="") as handle:
            _write(handle, decisions)


def _write(handle, decisions) -> None:
    writer = csv.writer(handle)
    writer.writerow(DECISION_CSV_HEADER.split(","))
    for dec in decisions:
        writer.writerow(
            [dec.sample_index, dec.fit.alpha_hat, dec.fit.beta_hat, dec.k_star, dec.predicted_cost]
        )
