"""Tail-biting convolutional code construction and GF(2) linear algebra.

Generator convention: a generator is written in octal with ``memory + 1``
significant bits. The most significant bit is the tap on the current input
(delay 0), the least significant bit the tap on the oldest register cell
(delay ``memory``). For example, with memory 2 the octal generator ``7``
(binary ``111``) gives ``v_t = u_t + u_{t-1} + u_{t-2}`` and ``5`` (binary
``101``) gives ``v_t = u_t + u_{t-2}``.

Codeword bits are ordered time-major: ``c[r * t + j]`` is output stream
``j`` at time ``t`` for a rate ``1/r`` code.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from . import _kernels
from .errors import DimensionError, InvalidSpecError, RankDeficiencyError
from .phy import FrameGeometry
from .rng import interleaver_stream

DEFAULT_GENERATORS = ("552137", "614671", "772233")
DEFAULT_MEMORY = 17
DEFAULT_INTERLEAVER_SEED = 0xC0DE


@dataclass(frozen=True)
class ConvCodeSpec:
    generators: tuple[str, ...]
    memory: int

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(str(g) for g in self.generators))
        if not self.generators:
            raise InvalidSpecError("at least one generator is required")
        if self.memory < 0:
            raise InvalidSpecError(f"memory must be non-negative, got {self.memory}")
        degrees = []
        for g in self.generators:
            try:
                value = int(g, 8)
            except ValueError as exc:
                raise InvalidSpecError(f"generator {g!r} is not octal") from exc
            if value == 0:
                raise InvalidSpecError("zero generator")
            degrees.append(value.bit_length() - 1)
        if max(degrees) > self.memory:
            raise InvalidSpecError(
                f"generator degree {max(degrees)} exceeds memory {self.memory}"
            )
        if max(degrees) != self.memory:
            raise InvalidSpecError(f"no generator reaches degree {self.memory}")

    @property
    def rate_inverse(self) -> int:
        return len(self.generators)

    def taps(self) -> np.ndarray:
        """``taps[j, d]`` is the coefficient of delay ``d`` in generator ``j``."""
        m = self.memory
        out = np.zeros((self.rate_inverse, m + 1), dtype=np.uint8)
        for j, g in enumerate(self.generators):
            value = int(g, 8)
            for d in range(m + 1):
                out[j, d] = (value >> (m - d)) & 1
        return out


DEFAULT_CODE = ConvCodeSpec(DEFAULT_GENERATORS, DEFAULT_MEMORY)


class BinaryMatrix:
    """Dense GF(2) matrix; ``bits`` is a read-only ``(rows, cols)`` uint8 array.

    The packed view (uint64 words per row) backs the elimination kernels.
    """

    __slots__ = ("bits", "__dict__")

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.uint8) & 1
        if arr.ndim != 2:
            raise DimensionError(f"binary matrix must be 2-D, got shape {arr.shape}")
        arr.setflags(write=False)
        self.bits = arr

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @cached_property
    def packed(self) -> np.ndarray:
        words = _kernels.pack_rows(self.bits)
        words.setflags(write=False)
        return words

    def rank(self) -> int:
        work = self.packed.copy()
        rank, _ = _kernels.systematize_packed(work, np.arange(self.cols, dtype=np.int64))
        return int(rank)

    def permute_columns(self, perm) -> "BinaryMatrix":
        return BinaryMatrix(self.bits[:, np.asarray(perm)])

    def __eq__(self, other):
        return isinstance(other, BinaryMatrix) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def __repr__(self):
        return f"BinaryMatrix({self.rows}x{self.cols})"


@dataclass(frozen=True)
class CodeSpec:
    n: int
    k: int
    geometry: FrameGeometry

    def __post_init__(self):
        if not 0 < self.k <= self.n:
            raise InvalidSpecError(f"need 0 < k <= n, got k={self.k}, n={self.n}")

    @property
    def R(self) -> float:
        """Transmission rate in bits per channel use."""
        g = self.geometry
        return self.k / (g.ell * g.n_c)

    @property
    def R0(self) -> float:
        """Rate of the code actually carried by the data symbols."""
        g = self.geometry
        return self.k / (g.ell * g.n_d)


@dataclass(frozen=True)
class Interleaver:
    """``interleave(c)[j] = c[permutation[j]]``."""

    permutation: np.ndarray
    seed: int

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise InvalidSpecError("interleaver permutation is not a bijection")
        perm.setflags(write=False)
        object.__setattr__(self, "permutation", perm)

    @property
    def n(self) -> int:
        return self.permutation.size

    @cached_property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.n)
        return inv

    def interleave(self, bits) -> np.ndarray:
        return np.asarray(bits)[..., self.permutation]

    def deinterleave(self, values) -> np.ndarray:
        return np.asarray(values)[..., self.inverse]

    def digest(self) -> str:
        return hashlib.sha256(self.permutation.astype("<i8").tobytes()).hexdigest()


@dataclass(frozen=True)
class PuncturePattern:
    kept: np.ndarray
    n: int

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=np.int64)
        if kept.size and (kept.min() < 0 or kept.max() >= self.n):
            raise DimensionError(f"puncture index out of range for length {self.n}")
        if np.unique(kept).size != kept.size or np.any(np.diff(kept) < 0):
            raise InvalidSpecError("kept positions must be sorted and distinct")
        kept.setflags(write=False)
        object.__setattr__(self, "kept", kept)

    @property
    def n_tx(self) -> int:
        return self.kept.size


def tbcc_encode_serial(spec: ConvCodeSpec, u) -> np.ndarray:
    """Bit-serial tail-biting encoder (shift register preloaded from the tail)."""
    u = np.asarray(u, dtype=np.uint8)
    k, m = u.size, spec.memory
    if k < m:
        raise InvalidSpecError(f"tail-biting needs k >= memory, got k={k}, memory={m}")
    taps = spec.taps()
    # register[d - 1] holds u_{t-d}; preloaded with the last m message bits
    register = [int(u[(-d) % k]) for d in range(1, m + 1)]
    out = np.empty(spec.rate_inverse * k, dtype=np.uint8)
    for t in range(k):
        window = [int(u[t])] + register
        for j in range(spec.rate_inverse):
            out[spec.rate_inverse * t + j] = sum(a & b for a, b in zip(taps[j], window)) & 1
        register = [int(u[t])] + register[:-1]
    return out


def tbcc_generator_matrix(spec: ConvCodeSpec, k: int) -> BinaryMatrix:
    if k < spec.memory:
        raise InvalidSpecError(f"tail-biting needs k >= memory, got k={k}, memory={spec.memory}")
    r = spec.rate_inverse
    taps = spec.taps()
    G = np.zeros((k, r * k), dtype=np.uint8)
    rows = np.arange(k)
    for d in range(spec.memory + 1):
        t = (rows + d) % k
        for j in range(r):
            if taps[j, d]:
                G[rows, r * t + j] ^= 1
    return BinaryMatrix(G)


def encode(G: BinaryMatrix, u) -> np.ndarray:
    """``u G`` over GF(2); ``u`` may be a single message or a batch."""
    u = np.asarray(u, dtype=np.uint8)
    if u.shape[-1] != G.rows:
        raise DimensionError(f"message length {u.shape[-1]} != {G.rows} generator rows")
    prod = u.astype(np.int64) @ G.bits.astype(np.int64)
    return (prod & 1).astype(np.uint8)


def make_interleaver(seed: int, n: int) -> Interleaver:
    """Fisher-Yates shuffle driven by the Philox stream of ``seed``.

    For ``i = n-1 .. 1`` a raw 64-bit word ``w`` is drawn and positions ``i``
    and ``w mod (i + 1)`` are swapped (modulo bias below ``n / 2**64``).
    """
    if n < 1:
        raise InvalidSpecError(f"interleaver length must be >= 1, got {n}")
    bitgen = interleaver_stream(seed).bit_generator
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(bitgen.random_raw()) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return Interleaver(np.array(perm, dtype=np.int64), int(seed))


def make_puncture(n: int, geom: FrameGeometry) -> PuncturePattern:
    """Keep the first ``n_tx`` interleaved positions, drop the tail."""
    n_tx = geom.n_tx_bits
    if n_tx > n:
        raise DimensionError(f"frame carries {n_tx} bits but the code has only {n}")
    return PuncturePattern(np.arange(n_tx), n)


def puncture(bits, p: PuncturePattern) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape[-1] != p.n:
        raise DimensionError(f"expected {p.n} bits, got {bits.shape[-1]}")
    return bits[..., p.kept]


def mrb_systematize(G: BinaryMatrix, column_order) -> tuple[BinaryMatrix, np.ndarray]:
    """Reduced row echelon form with pivots chosen greedily along ``column_order``."""
    order = np.asarray(column_order, dtype=np.int64)
    if order.size != G.cols or not np.array_equal(np.sort(order), np.arange(G.cols)):
        raise DimensionError("column_order must be a permutation of the columns")
    work = G.packed.copy()
    rank, basis = _kernels.systematize_packed(work, order)
    if rank < G.rows:
        raise RankDeficiencyError(f"generator rank {rank} < {G.rows}")
    return BinaryMatrix(_kernels.unpack_rows(work, G.cols)), basis


def parity_check_matrix(G: BinaryMatrix) -> BinaryMatrix:
    """An ``(n - k) x n`` matrix whose null space is the row space of ``G``."""
    G_sys, basis = mrb_systematize(G, np.arange(G.cols))
    k, n = G.rows, G.cols
    rest = np.setdiff1d(np.arange(n), basis)
    H = np.zeros((n - k, n), dtype=np.uint8)
    # c[rest] = c[basis] @ G_sys[:, rest]  =>  G_sys[:, rest]^T c[basis] + c[rest] = 0
    H[:, basis] = G_sys.bits[:, rest].T
    H[np.arange(n - k), rest] = 1
    return BinaryMatrix(H)


def all_codewords(G: BinaryMatrix) -> np.ndarray:
    """Every codeword, in message order. Only sensible for small ``k``."""
    if G.rows > 20:
        raise InvalidSpecError("exhaustive enumeration limited to k <= 20")
    msgs = np.array(list(product((0, 1), repeat=G.rows)), dtype=np.uint8)
    return encode(G, msgs)


def extended_hamming_8_4() -> BinaryMatrix:
    return BinaryMatrix(
        [
            [1, 0, 0, 0, 0, 1, 1, 1],
            [0, 1, 0, 0, 1, 0, 1, 1],
            [0, 0, 1, 0, 1, 1, 0, 1],
            [0, 0, 0, 1, 1, 1, 1, 0],
        ]
    )


def code_info(spec: ConvCodeSpec, k: int, geom: FrameGeometry, seed: int) -> dict:
    G = tbcc_generator_matrix(spec, k)
    inter = make_interleaver(seed, G.cols)
    pat = make_puncture(G.cols, geom)
    _, basis = mrb_systematize(G, np.arange(G.cols))
    code = CodeSpec(G.cols, k, geom)
    return {
        "n": code.n,
        "k": code.k,
        "R": code.R,
        "R0": code.R0,
        "n_tx": pat.n_tx,
        "punctured": code.n - pat.n_tx,
        "rank": G.rank(),
        "natural_order_basis": basis.tolist(),
        "basis_span": int(basis.max() + 1),
        "interleaver_seed": seed,
        "interleaver_sha256": inter.digest(),
    }
