"""Synchronous distributed gradient descent simulator with communication timing.

Each round the server broadcasts the iterate, every worker computes its local
gradient (optionally compressed for the uplink), and the server averages the
received vectors.  Simulated wall-clock time charges one downlink transmission
plus the maximum of the n parallel uplink transmissions per round; gradient
compute time is charged as zero.  Bit accounting uses the compressors' exact
message sizes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .commodel import TimeModelParams, sample_time
from .compression import DEFAULT_BITS_PER_SCALAR, CompressorSpec, DenseVector, compress, decompress
from .errors import DivergenceError, ParameterError

DIVERGENCE_LIMIT = 1e12

# SeedSequence spawn-key prefixes; they keep the time-noise stream independent
# of per-message compression seeds, so runs that differ only in the compressor
# draw identical noise.
_TIME_STREAM = 0
_UPLINK_STREAM = 1
_DOWNLINK_STREAM = 2

TRACE_CSV_HEADER = "round,objective,grad_norm,wall_clock_s,uplink_bits,downlink_bits"


@dataclass(frozen=True, eq=False)
class Problem:
    """Finite-sum quadratic: f(x) = (1/n) * sum_i f_i(x).

    Two flavors: the mean problem f_i(x) = 0.5*||x - a_i||^2 (targets set) and
    general PSD quadratics f_i(x) = 0.5*x'A_i x - b_i'x (mats/vecs set).  Both
    have a closed-form minimizer, used as the test oracle.
    """

    n: int
    d: int
    targets: np.ndarray | None = None
    mats: np.ndarray | None = None
    vecs: np.ndarray | None = None

    @classmethod
    def mean(cls, targets) -> "Problem":
        arr = np.asarray(targets, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError("targets must be an (n, d) array with n, d >= 1")
        return cls(n=arr.shape[0], d=arr.shape[1], targets=arr)

    @classmethod
    def random_quadratic(cls, n: int, d: int, seed=0) -> "Problem":
        rng = np.random.default_rng(seed)
        mats = np.empty((n, d, d))
        for i in range(n):
            m = rng.standard_normal((d, d))
            mats[i] = m @ m.T / d + 0.5 * np.eye(d)
        vecs = rng.standard_normal((n, d))
        return cls(n=n, d=d, mats=mats, vecs=vecs)

    def worker_gradients(self, x: np.ndarray) -> np.ndarray:
        """All n local gradients at x, stacked as an (n, d) array."""
        if self.targets is not None:
            return x[None, :] - self.targets
        return np.einsum("nij,j->ni", self.mats, x) - self.vecs

    def objective(self, x: np.ndarray) -> float:
        if self.targets is not None:
            diff = x[None, :] - self.targets
            return float(0.5 * np.mean(np.sum(diff * diff, axis=1)))
        quad = 0.5 * np.einsum("i,nij,j->n", x, self.mats, x)
        return float(np.mean(quad - self.vecs @ x))

    def smoothness(self) -> float:
        """L = largest eigenvalue of the averaged Hessian."""
        if self.targets is not None:
            return 1.0
        return float(np.linalg.eigvalsh(self.mats.mean(axis=0)).max())

    def strong_convexity(self) -> float:
        if self.targets is not None:
            return 1.0
        return float(np.linalg.eigvalsh(self.mats.mean(axis=0)).min())


def closed_form_optimum(problem: Problem) -> tuple[np.ndarray, float]:
    """Exact minimizer and optimal value."""
    if problem.targets is not None:
        x_star = problem.targets.mean(axis=0)
    else:
        try:
            x_star = np.linalg.solve(problem.mats.mean(axis=0), problem.vecs.mean(axis=0))
        except np.linalg.LinAlgError as exc:
            raise ParameterError("averaged quadratic system is singular") from exc
    return x_star, problem.objective(x_star)


@dataclass(frozen=True)
class SimConfig:
    steps: int
    time_model: TimeModelParams
    gamma: object = None  # float, sequence, or callable(round) -> float; None = auto
    compressor: CompressorSpec = field(default_factory=CompressorSpec)
    seed: int = 0
    downlink_compressed: bool = False
    bits_per_scalar: int = DEFAULT_BITS_PER_SCALAR
    x0: np.ndarray | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ParameterError("steps must be >= 1")
        if self.bits_per_scalar < 1:
            raise ParameterError("bits_per_scalar must be a positive integer")


@dataclass(frozen=True)
class TraceRow:
    round: int
    objective: float
    grad_norm: float
    wall_clock_s: float
    uplink_bits: int
    downlink_bits: int


@dataclass(eq=False)
class SimTrace:
    rows: list[TraceRow]
    final_x: np.ndarray

    def to_csv(self, target) -> None:
        if hasattr(target, "write"):
            self._write(target)
        else:
            with open(target, "w", newline="") as handle:
                self._write(handle)

    def _write(self, handle) -> None:
        writer = csv.writer(handle)
        writer.writerow(TRACE_CSV_HEADER.split(","))
        for row in self.rows:
            writer.writerow(
                [
                    row.round,
                    row.objective,
                    row.grad_norm,
                    row.wall_clock_s,
                    row.uplink_bits,
                    row.downlink_bits,
                ]
            )


def default_stepsize(problem: Problem, spec: CompressorSpec) -> float:
    # Unbiased sparsification inflates gradient variance by zeta = d/k, so the
    # safe default shrinks the plain 1/L step by that factor.
    L = problem.smoothness()
    if spec.kind == "rand_k":
        return 1.0 / (L * spec.zeta(problem.d))
    return 1.0 / L


def _gamma_at(gamma, k: int) -> float:
    if callable(gamma):
        value = float(gamma(k))
    elif isinstance(gamma, (list, tuple, np.ndarray)):
        value = float(gamma[k])
    else:
        value = float(gamma)
    if value <= 0:
        raise ParameterError(f"stepsize at round {k} must be positive, got {value}")
    return value


def _message_seed(seed: int, stream: int, round_idx: int, worker: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, round_idx, worker))
    return int(ss.generate_state(1)[0])


def run_compressed_gd(problem: Problem, config: SimConfig) -> SimTrace:
    """Distributed GD with compressed uplink gradients.

    Workers send C(grad_i) and the server averages the decompressed vectors.
    Per-worker compression randomness is keyed by (seed, round, worker), so
    results do not depend on scheduling.  Downlink broadcasts the iterate
    uncompressed unless ``downlink_compressed`` is set.
    """
    spec = config.compressor
    d, n, b = problem.d, problem.n, config.bits_per_scalar
    gamma = config.gamma if config.gamma is not None else default_stepsize(problem, spec)
    time_model = config.time_model
    time_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(_TIME_STREAM,))
    )
    x = np.zeros(d) if config.x0 is None else np.array(config.x0, dtype=np.float64)
    if x.shape != (d,):
        raise ParameterError(f"x0 must have shape ({d},)")

    identity = spec.kind == "identity"
    wall = 0.0
    up_total = 0
    down_total = 0
    grads0 = problem.worker_gradients(x)
    rows = [
        TraceRow(0, problem.objective(x), float(np.linalg.norm(grads0.mean(axis=0))), 0.0, 0, 0)
    ]
    for k in range(config.steps):
        down_bits = d * b
        x_bcast = x
        if config.downlink_compressed and not identity:
            msg = compress(
                DenseVector(x, b), spec, seed=_message_seed(config.seed, _DOWNLINK_STREAM, k, 0)
            )
            down_bits = msg.bits
            x_bcast = decompress(msg).values
        t_round = sample_time(time_model, down_bits, time_rng)

        grads = problem.worker_gradients(x_bcast)
        agg = np.zeros(d)
        up_round = 0
        t_up = 0.0
        for i in range(n):
            if identity:
                g_hat = grads[i]
                bits_i = d * b
            else:
                msg = compress(
                    DenseVector(grads[i], b),
                    spec,
                    seed=_message_seed(config.seed, _UPLINK_STREAM, k, i),
                )
                g_hat = decompress(msg).values
                bits_i = msg.bits
            agg += g_hat
            up_round += bits_i
            t_up = max(t_up, sample_time(time_model, bits_i, time_rng))

        x = x - _gamma_at(gamma, k) * (agg / n)
        wall += t_round + t_up
        up_total += up_round
        down_total += down_bits
        obj = problem.objective(x)
        if obj > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"objective {obj:.3e} exceeded {DIVERGENCE_LIMIT:.0e} at round {k + 1}; "
                "reduce the stepsize"
            )
        grad_norm = float(np.linalg.norm(problem.worker_gradients(x).mean(axis=0)))
        rows.append(TraceRow(k + 1, obj, grad_norm, wall, up_total, down_total))
    return SimTrace(rows=rows, final_x=x)


def run_gd(problem: Problem, config: SimConfig) -> SimTrace:
    """Plain distributed GD; requires an identity compressor in the config."""
    if config.compressor.kind != "identity":
        raise ParameterError("run_gd expects an identity compressor; use run_compressed_gd")
    return run_compressed_gd(problem, replace(config))
