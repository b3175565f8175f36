"""Complex-amplitude kernels behind the message-computing step.

Amplitude vectors are plain ``numpy`` complex arrays of length ``2**n``.
Basis index bit ``n-1-k`` belongs to agent ``k`` (agent 0 is the most
significant bit, i.e. the leftmost tensor factor); a 0 bit is the letter
C and a 1 bit is D.

No ``2**n x 2**n`` matrix is ever built. The entangled start state has only
two nonzero amplitudes, so applying the product of local operators needs
just the first and last columns of that product, each of which is a
Kronecker product of 2-vectors. The disentangling map pairs index ``k`` with
its bitwise complement ``2**n - 1 - k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InputError, NumericalIntegrityError

MAX_AGENTS = 24
NORM_TOL = 1e-6
_RANGE_EPS = 1e-12
_SQRT1_2 = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class LocalOperator:
    """``w(theta, phi) = [[e^{i phi} cos(theta/2), i sin(theta/2)], [i sin(theta/2), e^{-i phi} cos(theta/2)]]``."""

    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        theta, phi = float(self.theta), float(self.phi)
        if not (-_RANGE_EPS <= theta <= math.pi + _RANGE_EPS):
            raise InputError(f"theta={theta} outside [0, pi]")
        if not (-_RANGE_EPS <= phi <= math.pi / 2 + _RANGE_EPS):
            raise InputError(f"phi={phi} outside [0, pi/2]")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    @classmethod
    def phase(cls, l: int) -> "LocalOperator":
        """The diagonal operator ``w(0, pi/l)``."""
        return cls(0.0, math.pi / l)

    def first_column(self) -> np.ndarray:
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        return np.array([np.exp(1j * self.phi) * c, 1j * s])

    def last_column(self) -> np.ndarray:
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        return np.array([1j * s, np.exp(-1j * self.phi) * c])

    def matrix(self) -> np.ndarray:
        return np.column_stack([self.first_column(), self.last_column()])


IDENTITY = LocalOperator(0.0, 0.0)


_LOW_AGENTS = 10  # agents folded into each row of the blocked evaluation
_BLOCK = 1 << 14  # amplitudes per block


def _check_n(n: int, max_agents: int) -> None:
    if not isinstance(n, (int, np.integer)) or not 2 <= n <= max_agents:
        raise InputError(f"agent count {n!r} outside [2, {max_agents}]")


def n_agents_of(amps: np.ndarray) -> int:
    size = len(amps)
    n = size.bit_length() - 1
    if size < 4 or 1 << n != size:
        raise InputError(f"amplitude vector length {size} is not 2**n with n >= 2")
    return n


def psi0(n: int, max_agents: int = MAX_AGENTS) -> np.ndarray:
    _check_n(n, max_agents)
    out = np.zeros(1 << n, dtype=complex)
    out[0] = 1.0
    return out


def psi1(n: int, max_agents: int = MAX_AGENTS) -> np.ndarray:
    """Entangled start state: ``1/sqrt2`` at index 0 and ``i/sqrt2`` at the last index."""
    _check_n(n, max_agents)
    out = np.zeros(1 << n, dtype=complex)
    out[0] = _SQRT1_2
    out[-1] = 1j * _SQRT1_2
    return out


def column_product(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of 2-vectors, leftmost factor most significant.

    Built in one buffer by prepending factors right to left, so no
    intermediate arrays are allocated.
    """
    vectors = [np.asarray(v, dtype=complex) for v in vectors]
    out = np.empty(1 << len(vectors), dtype=complex)
    out[:2] = vectors[-1]
    size = 2
    for v in reversed(vectors[:-1]):
        np.multiply(out[:size], v[1], out=out[size:2 * size])
        out[:size] *= v[0]
        size *= 2
    return out


def _scaled_columns(ops: Sequence[LocalOperator], psi: np.ndarray):
    # fold the two amplitudes into the leading factor instead of scaling 2**n entries
    first = [ops[0].first_column() * psi[0]] + [op.first_column() for op in ops[1:]]
    last = [ops[0].last_column() * psi[-1]] + [op.last_column() for op in ops[1:]]
    return first, last


def apply_local_ops(ops: Sequence[LocalOperator], psi: np.ndarray | None = None) -> np.ndarray:
    """``(w_1 x ... x w_n) psi`` for a ``psi`` supported on indices 0 and ``2**n - 1``."""
    n = len(ops)
    if psi is None:
        psi = psi1(n, max_agents=max(n, 2))
    if n_agents_of(psi) != n:
        raise InputError(f"{n} operators for a {n_agents_of(psi)}-agent amplitude vector")
    if len(psi) > 2 and np.any(psi[1:-1]):
        raise InputError("sparse evaluation needs an input supported on the first and last index only")
    first, last = _scaled_columns(ops, psi)
    out = column_product(first)
    out += column_product(last)
    return out


def apply_j_dagger(psi: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """``out[k] = (psi[k] - i psi[2**n - 1 - k]) / sqrt2``; ``out`` must not alias ``psi``."""
    n_agents_of(psi)
    out = np.multiply(psi[::-1], -1j, out=out)
    out += psi
    out *= _SQRT1_2
    return out


def apply_j(psi: np.ndarray) -> np.ndarray:
    """``out[k] = (psi[k] + i psi[2**n - 1 - k]) / sqrt2``."""
    n_agents_of(psi)
    out = psi + 1j * psi[::-1]
    out *= _SQRT1_2
    return out


def distribution(psi: np.ndarray, tol: float = NORM_TOL) -> np.ndarray:
    pairs = np.ascontiguousarray(psi, dtype=complex).view(np.float64).reshape(-1, 2)
    probs = np.einsum("ij,ij->i", pairs, pairs)
    total = probs.sum()
    if abs(total - 1.0) > tol:
        raise NumericalIntegrityError(f"squared norm {total!r} deviates from 1 by more than {tol}")
    return probs


def _factor_table(ops: Sequence[LocalOperator]) -> np.ndarray:
    """Per agent, rows: first column, last column and both reversed. Shape ``(n, 4, 2)``."""
    angles = np.array([(op.theta, op.phi) for op in ops])
    c = np.cos(angles[:, 0] / 2)
    s = 1j * np.sin(angles[:, 0] / 2)
    e = np.exp(1j * angles[:, 1])
    out = np.empty((len(ops), 4, 2), dtype=complex)
    out[:, 0, 0] = out[:, 2, 1] = e * c
    out[:, 1, 1] = out[:, 3, 0] = e.conj() * c
    out[:, 0, 1] = out[:, 1, 0] = out[:, 2, 0] = out[:, 3, 1] = s
    return out


def _outer_rows(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    return (left[..., :, None] * right[..., None, :]).reshape(*left.shape[:-1], -1)


def _stacked_products(table: np.ndarray) -> np.ndarray:
    """Row-wise Kronecker products over agents of a ``(k, 4, 2)`` table, shape ``(4, 2**k)``.

    Neighbouring blocks are merged pairwise, one vectorized multiply per level.
    """
    if len(table) == 0:
        return np.ones((4, 1), dtype=complex)
    level, tail = table, None
    while len(level) > 1:
        if len(level) % 2:
            tail = level[-1] if tail is None else _outer_rows(level[-1], tail)
            level = level[:-1]
        level = _outer_rows(level[0::2], level[1::2])
    return level[0] if tail is None else _outer_rows(level[0], tail)


# psi3 = (a0 F + a1 L - i a0 rev(F) - i a1 rev(L)) / sqrt2 with psi1 amplitudes a0, a1
_TERM_WEIGHTS = np.array([_SQRT1_2, 1j * _SQRT1_2, -1j * _SQRT1_2, _SQRT1_2]) * _SQRT1_2


def pipeline(ops: Sequence[LocalOperator], max_agents: int = MAX_AGENTS) -> np.ndarray:
    """Operators to basis distribution: start state, local operators, disentangle, square.

    ``psi2`` is ``a0 F + a1 L`` with ``F`` and ``L`` the products of first and
    last columns, and reversing a Kronecker product reverses each factor.
    Splitting the agents into a high and a low block makes ``psi3`` a rank-4
    product ``A @ B`` of a ``(2**h, 4)`` and a ``(4, 2**l)`` matrix; rows of it
    are formed in cache-sized blocks and squared straight into the output.
    """
    n = len(ops)
    _check_n(n, max_agents)
    table = _factor_table(ops)
    low = min(n, _LOW_AGENTS)
    A = np.ascontiguousarray(_stacked_products(table[:n - low]).T)
    B = _stacked_products(table[n - low:]) * _TERM_WEIGHTS[:, None]
    rows, width = len(A), B.shape[1]
    probs = np.empty((rows, width))
    step = max(1, _BLOCK // width)
    for r in range(0, rows, step):
        block = (A[r:r + step] @ B).view(np.float64)
        block *= block
        np.add(block[:, 0::2], block[:, 1::2], out=probs[r:r + step])
    probs = probs.ravel()
    total = probs.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise NumericalIntegrityError(f"squared norm {total!r} deviates from 1 by more than {NORM_TOL}")
    return probs


def letters(index: int, n: int) -> str:
    """``'CCD'``-style label of a basis index."""
    return "".join("D" if (index >> (n - 1 - k)) & 1 else "C" for k in range(n))


def index_of(label: str) -> int:
    out = 0
    for ch in label:
        if ch not in "CD":
            raise InputError(f"basis label {label!r} may only contain C and D")
        out = (out << 1) | (ch == "D")
    return out


class FourProbs(NamedTuple):
    """Probabilities of C...CC, C...CD, D...DC and D...DD."""

    ccc: float
    ccd: float
    ddc: float
    ddd: float


def corner_indices(n: int) -> FourProbs:
    full = (1 << n) - 1
    return FourProbs(0, 1, full - 1, full)


def closed_form_part1(n: int, l: int, theta: float, phi: float) -> FourProbs:
    """Outcome probabilities with ``n-l`` identities, ``l-1`` copies of ``w(0, pi/l)``
    and the last agent on ``w(theta, phi)``."""
    if l < 2 or l > n:
        raise InputError(f"need 2 <= l <= n, got l={l}, n={n}")
    c2, s2 = math.cos(theta / 2) ** 2, math.sin(theta / 2) ** 2
    shift = phi - math.pi / l
    return FourProbs(
        c2 * math.cos(shift) ** 2,
        s2 * math.cos(math.pi / l) ** 2,
        s2 * math.sin(math.pi / l) ** 2,
        c2 * math.sin(shift) ** 2,
    )


def closed_form_part2(n: int, l: int, theta: float, phi: float) -> FourProbs:
    """Outcome probabilities with ``l`` copies of ``w(0, pi/l)`` first, identities after
    and the last agent on ``w(theta, phi)``."""
    if l < 2 or l > n - 1:
        raise InputError(f"need 2 <= l <= n - 1, got l={l}, n={n}")
    c2, s2 = math.cos(theta / 2) ** 2, math.sin(theta / 2) ** 2
    return FourProbs(c2 * (1 - math.sin(phi) ** 2), s2, 0.0, c2 * math.sin(phi) ** 2)


def part1_ops(n: int, l: int, theta: float, phi: float) -> list[LocalOperator]:
    return [IDENTITY] * (n - l) + [LocalOperator.phase(l)] * (l - 1) + [LocalOperator(theta, phi)]


def part2_ops(n: int, l: int, theta: float, phi: float) -> list[LocalOperator]:
    return [LocalOperator.phase(l)] * l + [IDENTITY] * (n - l - 1) + [LocalOperator(theta, phi)]


def _cdf(dist: np.ndarray, overwrite: bool = False) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 1 or len(dist) == 0 or np.any(dist < 0):
        raise InputError("distribution must be a nonempty vector of non-negative numbers")
    cdf = np.cumsum(dist, out=dist if overwrite else None)
    if abs(cdf[-1] - 1.0) > NORM_TOL:
        raise NumericalIntegrityError(f"distribution sums to {cdf[-1]!r}")
    return cdf


def sample_many(dist: np.ndarray, seed, size: int, overwrite: bool = False) -> np.ndarray:
    """Inverse-CDF draws, one uniform from ``numpy``'s PCG64 stream per sample.

    A fixed ``seed`` always yields the same sequence. Zero-probability
    entries are never returned. With ``overwrite`` the cumulative sums are
    built in ``dist`` itself, which saves a second array of the same size.
    """
    cdf = _cdf(dist, overwrite)
    rng = np.random.default_rng(seed)
    draws = rng.random(size) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, draws, side="right"), len(cdf) - 1)


def sample_basis(dist: np.ndarray, seed, overwrite: bool = False) -> int:
    return int(sample_many(dist, seed, 1, overwrite)[0])
