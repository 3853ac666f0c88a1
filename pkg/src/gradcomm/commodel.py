"""Affine transmission-time model with stochastic per-message noise.

A message of s bits takes T(s) = alpha + beta * s seconds in expectation;
per message the coefficients jitter as alpha + N(0, (alpha_m*alpha)^2) and
beta + N(0, (beta_m*beta)^2).  On top of the model sit the real-speedup
ratio eta(s, omega) = T(s) / T(s/omega), a three-way classification of the
operating regime by which term dominates, and tabulated speedup reports.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError, ParameterError

# Sampled transmission times are clamped here: normal noise admits negative
# draws, but a transmission never takes non-positive time.
MIN_TIME_S = 1e-12

DEFAULT_RHO = 10.0

CSV_HEADER = "omega,compressed_bits,region_from,region_to,expected_time_s,speedup"


@dataclass(frozen=True)
class TimeModelParams:
    """Constants of the affine model plus relative noise levels."""

    alpha_const: float
    beta_const: float
    alpha_m: float = 0.0
    beta_m: float = 0.0

    def __post_init__(self):
        if self.alpha_const < 0 or self.beta_const < 0:
            raise ParameterError("time model coefficients must be nonnegative")
        if self.alpha_m < 0 or self.beta_m < 0:
            raise ParameterError("noise levels must be nonnegative")
        if self.alpha_const + self.beta_const == 0:
            raise DegenerateModelError("alpha and beta cannot both be zero")

    @property
    def sigma_alpha(self) -> float:
        return self.alpha_m * self.alpha_const

    @property
    def sigma_beta(self) -> float:
        return self.beta_m * self.beta_const


class Region(enum.Enum):
    """Which term of alpha + beta*s dominates at a given message size."""

    AREA1_ALPHA_DOMINATED = "area1_alpha_dominated"
    AREA2_MIXED = "area2_mixed"
    AREA3_BETA_DOMINATED = "area3_beta_dominated"


def expected_time(params: TimeModelParams, s: float) -> float:
    """Mean transmission time of an s-bit message."""
    if s < 0:
        raise ParameterError("message size must be nonnegative")
    return params.alpha_const + params.beta_const * s


def sample_time(params: TimeModelParams, s: float, rng=None) -> float:
    """One noisy transmission time; coefficients are redrawn independently per call."""
    if s < 0:
        raise ParameterError("message size must be nonnegative")
    gen = np.random.default_rng(rng)
    alpha = params.alpha_const + gen.normal(0.0, params.sigma_alpha)
    beta = params.beta_const + gen.normal(0.0, params.sigma_beta)
    return max(alpha + beta * s, MIN_TIME_S)


def eta(params: TimeModelParams, s: float, omega: float) -> float:
    """Real speedup of compressing an s-bit message by the factor omega.

    eta = T(s) / T(s / omega).  The pure-bandwidth limit (alpha = 0) returns
    omega exactly and the pure-latency limit (beta = 0) returns 1 exactly.
    """
    if s <= 0:
        raise ParameterError("message size must be positive")
    if omega < 1:
        raise ParameterError("compression ratio must be >= 1")
    if params.alpha_const == 0:
        return float(omega)
    if params.beta_const == 0:
        return 1.0
    return expected_time(params, s) / expected_time(params, s / omega)


def classify_region(params: TimeModelParams, s: float, rho: float = DEFAULT_RHO) -> Region:
    """Classify the regime at size s with dominance threshold rho.

    Area 1 when beta*s <= alpha/rho, area 3 when beta*s >= rho*alpha, area 2
    between.  Larger s never moves the classification to a lower area.
    """
    if s < 0:
        raise ParameterError("message size must be nonnegative")
    if rho <= 1:
        raise ParameterError("dominance threshold rho must exceed 1")
    load = params.beta_const * s
    if load * rho <= params.alpha_const:
        return Region.AREA1_ALPHA_DOMINATED
    if load >= rho * params.alpha_const:
        return Region.AREA3_BETA_DOMINATED
    return Region.AREA2_MIXED


@dataclass(frozen=True)
class SpeedupRow:
    omega: float
    compressed_bits: float
    region_from: Region
    region_to: Region
    expected_time_s: float
    speedup: float


@dataclass
class SpeedupReport:
    """Per-omega speedup table for a fixed source message size."""

    source_bits: float
    rows: list[SpeedupRow]

    def to_csv(self, target) -> None:
        """Write the report; ``target`` is a path or a writable text file."""
        if hasattr(target, "write"):
            self._write(target)
        else:
            with open(target, "w", newline="") as handle:
                self._write(handle)

    def _write(self, handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER.split(","))
        for row in self.rows:
            writer.writerow(
                [
                    row.omega,
                    row.compressed_bits,
                    row.region_from.value,
                    row.region_to.value,
                    row.expected_time_s,
                    row.speedup,
                ]
            )

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        self._write(buf)
        return buf.getvalue()


def transition_report(
    params: TimeModelParams,
    s_from: float,
    omegas,
    rho: float = DEFAULT_RHO,
) -> SpeedupReport:
    """Tabulate, per compression ratio, where the message lands and how much it gains."""
    if s_from <= 0:
        raise ParameterError("source message size must be positive")
    region_from = classify_region(params, s_from, rho)
    rows = []
    for omega in omegas:
        if omega < 1:
            raise ParameterError("compression ratios must be >= 1")
        s_to = s_from / omega
        rows.append(
            SpeedupRow(
                omega=float(omega),
                compressed_bits=s_to,
                region_from=region_from,
                region_to=classify_region(params, s_to, rho),
                expected_time_s=expected_time(params, s_to),
                speedup=eta(params, s_from, omega),
            )
        )
    return SpeedupReport(source_bits=float(s_from), rows=rows)


def speedup_curve(
    params: TimeModelParams,
    s: float,
    omega_grid,
    rho: float = DEFAULT_RHO,
) -> SpeedupReport:
    """Saturation curve over an ascending grid of compression ratios."""
    grid = [float(w) for w in omega_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ParameterError("omega grid must be sorted ascending")
    return transition_report(params, s, grid, rho)
