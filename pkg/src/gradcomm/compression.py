"""Gradient compression operators with exact transmitted-bit accounting.

Four operators are implemented alongside an identity baseline:

* ``rand_k``  -- unbiased random sparsification; the selected k-subset is
  reconstructed from a shared seed, so index positions cost zero bits.
* ``top_k``   -- magnitude sparsification; explicit indices are transmitted
  at ceil(log2(d)) bits each.
* ``natural`` -- stochastic rounding of each scalar to an adjacent power of
  two; only sign and an 8-bit exponent travel (9 bits per scalar).
* ``rank_r``  -- low-rank factor transmission: the vector is reshaped into a
  matrix, one power-iteration step produces factors P and Q, and P @ Q.T is
  the decompressed approximation.

All operations are pure functions; randomness enters only through explicit
seeds, and every ``CompressedMessage`` carries the exact number of bits a
real transmission would need.  ``omega_inf`` reports the uncompressed-to-
compressed bit ratio as an exact rational.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DecodeError, ParameterError

DEFAULT_BITS_PER_SCALAR = 32
# Sign bit plus the 8 exponent bits of a 32-bit float.
NATURAL_BITS_PER_SCALAR = 9

KINDS = ("identity", "rand_k", "top_k", "natural", "rank_r")
_KIND_CODE = {kind: i for i, kind in enumerate(KINDS)}


def index_bits(d: int) -> int:
    """Bits needed to address one of d coordinates: ceil(log2(d)); 0 for d=1."""
    if d < 1:
        raise ParameterError("dimension must be >= 1")
    return (d - 1).bit_length()


@dataclass(frozen=True, eq=False)
class DenseVector:
    """A flat real vector together with its declared per-scalar encoding width."""

    values: np.ndarray
    bits_per_scalar: int = DEFAULT_BITS_PER_SCALAR

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        if arr.size < 1:
            raise ParameterError("vector must contain at least one entry")
        if not np.all(np.isfinite(arr)):
            raise ParameterError("vector entries must be finite")
        if int(self.bits_per_scalar) < 1:
            raise ParameterError("bits_per_scalar must be a positive integer")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "bits_per_scalar", int(self.bits_per_scalar))

    @property
    def d(self) -> int:
        return self.values.size

    @property
    def total_bits(self) -> int:
        """Uncompressed wire size: d * bits_per_scalar."""
        return self.d * self.bits_per_scalar


@dataclass(frozen=True, eq=False)
class CompressedMessage:
    """Operator output plus the exact number of bits it would occupy on the wire.

    ``seed`` is present only for ``rand_k``: the receiver re-derives the index
    set from it, which is why those indices are free.
    """

    kind: str
    payload: dict
    bits: int
    d: int
    bits_per_scalar: int = DEFAULT_BITS_PER_SCALAR
    seed: int | None = None

    def to_bytes(self) -> bytes:
        """Canonical byte serialization; identical inputs yield identical bytes."""
        parts = [
            struct.pack(
                ">BIQI", _KIND_CODE[self.kind], self.d, self.bits, self.bits_per_scalar
            )
        ]
        seed_repr = b"" if self.seed is None else str(self.seed).encode()
        parts.append(struct.pack(">I", len(seed_repr)))
        parts.append(seed_repr)
        for key in sorted(self.payload):
            value = self.payload[key]
            blob = (
                np.asarray(value).astype(">f8").tobytes()
                if not isinstance(value, (int, np.integer))
                else struct.pack(">q", int(value))
            )
            head = key.encode()
            parts.append(struct.pack(">II", len(head), len(blob)))
            parts.append(head)
            parts.append(blob)
        return b"".join(parts)


def _check_k(k: int, d: int) -> None:
    if not 1 <= k <= d:
        raise ParameterError(f"sparsity level k={k} outside [1, {d}]")


def rand_k_indices(d: int, k: int, seed) -> np.ndarray:
    """Uniformly random k-subset of range(d), reproducible from the shared seed."""
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(d, size=k, replace=False))


def rand_k_compress(x: DenseVector, k: int, seed) -> CompressedMessage:
    """Keep a random k-subset of coordinates, scaled by d/k.

    The subset is derived deterministically from ``seed``; a receiver holding
    the same seed reconstructs the index set, so only the k scaled values are
    charged: bits = k * bits_per_scalar.
    """
    _check_k(k, x.d)
    if seed is None:
        raise ParameterError("rand_k requires a shared randomness seed")
    idx = rand_k_indices(x.d, k, seed)
    scaled = x.values[idx] * (x.d / k)
    return CompressedMessage(
        kind="rand_k",
        payload={"values": scaled},
        bits=k * x.bits_per_scalar,
        d=x.d,
        bits_per_scalar=x.bits_per_scalar,
        seed=seed,
    )


def top_k_compress(x: DenseVector, k: int) -> CompressedMessage:
    """Keep the k largest-magnitude coordinates with their explicit indices.

    Ties on equal magnitude break toward the lowest index, which makes the
    operator a deterministic function.  bits = k*b + k*ceil(log2 d).
    """
    _check_k(k, x.d)
    order = np.argsort(-np.abs(x.values), kind="stable")
    idx = np.sort(order[:k])
    bits = k * x.bits_per_scalar + k * index_bits(x.d)
    return CompressedMessage(
        kind="top_k",
        payload={"values": x.values[idx], "indices": idx.astype(np.int64)},
        bits=bits,
        d=x.d,
        bits_per_scalar=x.bits_per_scalar,
    )


def power_of_two_bounds(magnitudes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-entry (lower, upper, p_lower) for stochastic power-of-two rounding.

    For a magnitude a in (2^e, 2^(e+1)) the bounds are the enclosing powers of
    two and the lower one is taken with probability (upper - a) / lower, which
    makes the rounding unbiased.  Exact powers of two and zeros round to
    themselves (p_lower = 0 and both bounds coincide).
    """
    a = np.asarray(magnitudes, dtype=np.float64)
    mantissa, exponent = np.frexp(a)
    exact = (mantissa == 0.5) | (a == 0.0)
    lower = np.where(exact, a, np.ldexp(0.5, exponent))
    upper = np.where(exact, a, np.ldexp(1.0, exponent))
    p_lower = np.where(exact, 0.0, (upper - a) / np.where(exact, 1.0, lower))
    return lower, upper, p_lower


def natural_compress(x: DenseVector, seed) -> CompressedMessage:
    """Round each scalar to an adjacent power of two, unbiased in expectation.

    Each entry independently becomes sign(x) * 2^floor(log2|x|) with the
    probability from :func:`power_of_two_bounds`, else sign(x) * 2^ceil(log2|x|).
    Zero stays zero.  Only sign and exponent are transmitted: 9 bits/scalar.
    """
    rng = np.random.default_rng(seed)
    magnitudes = np.abs(x.values)
    lower, upper, p_lower = power_of_two_bounds(magnitudes)
    u = rng.random(x.d)
    rounded = np.copysign(np.where(u < p_lower, lower, upper), x.values)
    return CompressedMessage(
        kind="natural",
        payload={"values": rounded},
        bits=NATURAL_BITS_PER_SCALAR * x.d,
        d=x.d,
        bits_per_scalar=x.bits_per_scalar,
    )


def default_matrix_shape(d: int) -> tuple[int, int]:
    """Square-ish reshape used when no explicit matrix shape is given."""
    rows = math.isqrt(d)
    if rows * rows < d:
        rows += 1
    cols = -(-d // rows)
    return rows, cols


def _orthonormalize_columns(m: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt; numerically dead columns are zeroed, not divided."""
    q = np.array(m, dtype=np.float64, copy=True)
    for j in range(q.shape[1]):
        for i in range(j):
            q[:, j] -= (q[:, i] @ q[:, j]) * q[:, i]
        norm = np.linalg.norm(q[:, j])
        if norm > 1e-300:
            q[:, j] /= norm
        else:
            q[:, j] = 0.0
    return q


def rank_r_compress(
    x: DenseVector,
    r: int,
    rows: int | None = None,
    cols: int | None = None,
    seed: int = 0,
) -> CompressedMessage:
    """Transmit rank-r factors of the vector reshaped into a rows x cols matrix.

    The vector fills the matrix row-major with zero padding.  One power
    iteration against a seeded Gaussian test matrix yields P (rows x r,
    orthonormal columns) and Q = X.T @ P; decompression flattens P @ Q.T and
    truncates to d entries.  bits = r * (rows + cols) * bits_per_scalar.
    """
    if rows is None or cols is None:
        rows, cols = default_matrix_shape(x.d)
    if rows < 1 or cols < 1 or rows * cols < x.d:
        raise ParameterError(f"matrix shape {rows}x{cols} cannot hold {x.d} entries")
    if not 1 <= r <= min(rows, cols):
        raise ParameterError(f"rank r={r} outside [1, {min(rows, cols)}]")
    mat = np.zeros((rows, cols))
    mat.flat[: x.d] = x.values
    test = np.random.default_rng(seed).standard_normal((cols, r))
    p = _orthonormalize_columns(mat @ test)
    q = mat.T @ p
    return CompressedMessage(
        kind="rank_r",
        payload={"p": p, "q": q, "rows": rows, "cols": cols},
        bits=r * (rows + cols) * x.bits_per_scalar,
        d=x.d,
        bits_per_scalar=x.bits_per_scalar,
    )


def identity_compress(x: DenseVector) -> CompressedMessage:
    """No-op compression: the full vector at d * bits_per_scalar bits."""
    return CompressedMessage(
        kind="identity",
        payload={"values": x.values},
        bits=x.total_bits,
        d=x.d,
        bits_per_scalar=x.bits_per_scalar,
    )


def decompress(msg: CompressedMessage) -> DenseVector:
    """Receiver side of every operator; round-trips each compressor's semantics."""
    try:
        if msg.kind in ("identity", "natural"):
            values = np.asarray(msg.payload["values"], dtype=np.float64)
            if values.size != msg.d:
                raise DecodeError(f"{msg.kind} payload length {values.size} != d={msg.d}")
            return DenseVector(values, msg.bits_per_scalar)
        if msg.kind == "rand_k":
            if msg.seed is None:
                raise DecodeError("rand_k message is missing the shared seed")
            values = np.asarray(msg.payload["values"], dtype=np.float64)
            k = values.size
            if not 1 <= k <= msg.d:
                raise DecodeError(f"rand_k payload has {k} values for d={msg.d}")
            out = np.zeros(msg.d)
            out[rand_k_indices(msg.d, k, msg.seed)] = values
            return DenseVector(out, msg.bits_per_scalar)
        if msg.kind == "top_k":
            values = np.asarray(msg.payload["values"], dtype=np.float64)
            idx = np.asarray(msg.payload["indices"], dtype=np.int64)
            if idx.size != values.size or idx.size < 1:
                raise DecodeError("top_k payload values/indices length mismatch")
            if idx.min() < 0 or idx.max() >= msg.d or np.unique(idx).size != idx.size:
                raise DecodeError("top_k indices out of range or duplicated")
            out = np.zeros(msg.d)
            out[idx] = values
            return DenseVector(out, msg.bits_per_scalar)
        if msg.kind == "rank_r":
            p = np.asarray(msg.payload["p"], dtype=np.float64)
            q = np.asarray(msg.payload["q"], dtype=np.float64)
            rows, cols = int(msg.payload["rows"]), int(msg.payload["cols"])
            if p.shape[0] != rows or q.shape[0] != cols or p.shape[1] != q.shape[1]:
                raise DecodeError("rank_r factor shapes are inconsistent")
            if rows * cols < msg.d:
                raise DecodeError(f"rank_r matrix {rows}x{cols} smaller than d={msg.d}")
            flat = (p @ q.T).reshape(-1)[: msg.d]
            return DenseVector(flat, msg.bits_per_scalar)
    except KeyError as exc:
        raise DecodeError(f"{msg.kind} payload is missing field {exc}") from exc
    raise DecodeError(f"unknown message kind: {msg.kind!r}")


@dataclass(frozen=True)
class CompressorSpec:
    """Parameter record naming an operator and its power level."""

    kind: str = "identity"
    k: int | None = None
    r: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown compressor kind: {self.kind!r}")
        if self.kind in ("rand_k", "top_k") and (self.k is None or self.k < 1):
            raise ParameterError(f"{self.kind} requires a sparsity level k >= 1")
        if self.kind == "rank_r" and (self.r is None or self.r < 1):
            raise ParameterError("rank_r requires a rank r >= 1")

    def zeta(self, d: int) -> float:
        """Unbiased second-moment factor: E||C(x)||^2 <= zeta * ||x||^2."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "rand_k":
            return d / self.k
        raise ParameterError(f"zeta is not defined for kind {self.kind!r}")

    def delta(self, d: int) -> float:
        """Contraction factor: E||C(x) - x||^2 <= (1 - 1/delta) * ||x||^2."""
        if self.kind == "identity":
            return 1.0
        if self.kind == "top_k":
            return d / self.k
        raise ParameterError(f"delta is not defined for kind {self.kind!r}")


def compress(x: DenseVector, spec: CompressorSpec, seed=None) -> CompressedMessage:
    """Apply the operator named by ``spec`` to ``x``."""
    if spec.kind == "identity":
        return identity_compress(x)
    if spec.kind == "rand_k":
        return rand_k_compress(x, spec.k, seed)
    if spec.kind == "top_k":
        return top_k_compress(x, spec.k)
    if spec.kind == "natural":
        return natural_compress(x, seed)
    return rank_r_compress(x, spec.r, seed=0 if seed is None else seed)


def message_bits(
    spec: CompressorSpec,
    d: int,
    b: int = DEFAULT_BITS_PER_SCALAR,
    rows: int | None = None,
    cols: int | None = None,
) -> int:
    """Closed-form transmitted bits for the operator at dimension d."""
    if d < 1 or b < 1:
        raise ParameterError("d and b must be positive integers")
    if spec.kind == "identity":
        return d * b
    if spec.kind == "rand_k":
        _check_k(spec.k, d)
        return spec.k * b
    if spec.kind == "top_k":
        _check_k(spec.k, d)
        return spec.k * b + spec.k * index_bits(d)
    if spec.kind == "natural":
        return NATURAL_BITS_PER_SCALAR * d
    if rows is None or cols is None:
        rows, cols = default_matrix_shape(d)
    if rows * cols < d:
        raise ParameterError(f"matrix shape {rows}x{cols} cannot hold {d} entries")
    if not 1 <= spec.r <= min(rows, cols):
        raise ParameterError(f"rank r={spec.r} outside [1, {min(rows, cols)}]")
    return spec.r * (rows + cols) * b


def omega_inf(
    spec: CompressorSpec,
    d: int,
    b: int = DEFAULT_BITS_PER_SCALAR,
    rows: int | None = None,
    cols: int | None = None,
) -> Fraction:
    """Exact compression ratio: uncompressed bits over transmitted bits.

    Returned as a rational so that omega_inf * message_bits == d * b holds
    identically.  For ``rank_r`` the ratio is only defined when the reshape
    exactly fills the matrix (d == rows * cols).
    """
    if d < 1 or b < 1:
        raise ParameterError("d and b must be positive integers")
    if spec.kind == "identity":
        return Fraction(1)
    if spec.kind == "rand_k":
        _check_k(spec.k, d)
        return Fraction(d, spec.k)
    if spec.kind == "top_k":
        _check_k(spec.k, d)
        return Fraction(d * b, spec.k * b + spec.k * index_bits(d))
    if spec.kind == "natural":
        return Fraction(b, NATURAL_BITS_PER_SCALAR)
    if rows is None or cols is None:
        rows, cols = default_matrix_shape(d)
    if rows * cols != d:
        raise ParameterError(
            f"rank_r ratio needs an exactly filled matrix: {rows}x{cols} != d={d}"
        )
    if not 1 <= spec.r <= min(rows, cols):
        raise ParameterError(f"rank r={spec.r} outside [1, {min(rows, cols)}]")
    return Fraction(rows * cols, spec.r * (rows + cols))
