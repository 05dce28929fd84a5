"""Rotation matrix elements on fixed-excitation blocks.

Each block N carries a spin N/2 via the two-mode ladder operators:
J_+ = a_H{dag} a_V lowers k, J_- = a_V{dag} a_H raises k, and
J_z |N,k> = ((N - 2k)/2)|N,k>, so k = 0 is the highest weight.

The d block is defined entrywise as

    d^N_{m n}(theta) = <N, m| exp(i theta J_y) |N, n>,

real for all angles, with d^1(theta) = [[cos(t/2), sin(t/2)],
[-sin(t/2), cos(t/2)]].  Because the blocks carry half-integer spin for odd
N, the exact period is 4*pi: d^N(theta + 2*pi) = (-1)^N d^N(theta).  Angles
are therefore reduced modulo 4*pi, never 2*pi.

Blocks are built through the eigenbasis of the tridiagonal J_x.  With
T = diag(i^k) one has T J_y T^dag = -J_x, so

    exp(i theta J_y) = T^dag V exp(-i theta Lambda) V^T T,

where J_x = V Lambda V^T.  The spectrum of J_x on block N is exactly
{-N/2, ..., N/2}; the computed eigenvalues are snapped onto those
half-integers, which makes the 4*pi period exact and keeps every phase
factor exactly unimodular.  Expanding the i^(k-m) checkerboard and
dropping the identically-zero imaginary part gives the real block from
C = V cos(theta Lambda) V^T and S = V sin(theta Lambda) V^T:

    d_{m k} = { C, S, -C, -S }_{m k}  for  (k - m) mod 4 = 0, 1, 2, 3.

Orthogonality then degrades only with the eigensolver's residual, which
stays near machine precision even for blocks of a few hundred.  A column
recurrence in n was tried first and lost five digits of orthogonality by
N = 100, so it was dropped.  The eigensystems do not depend on the angle
and are cached per n_max; an angle evaluation is two symmetric products
per block.

rotation_matrix_oracle exponentiates the defining anti-Hermitian generator
of the polarization rotation U(theta, phi) directly with scipy's expm and
shares nothing with the eigenbasis path; it is the independent reference
all faster paths are tested against.
"""

from __future__ import annotations

import os
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal, expm
from scipy.special import gammaln

#: Default bound on block sizes handled by the exponentiation oracle.
DEFAULT_ORACLE_CAP = 30

#: Environment variable overriding the oracle cap.
ORACLE_CAP_ENV = "POLQDIST_ORACLE_CAP"

_PERIOD = 4.0 * np.pi


class OracleCapError(ValueError):
    """Block too large for the exponentiation oracle."""


def resolve_oracle_cap(cap: int | None = None) -> int:
    if cap is not None:
        return int(cap)
    raw = os.environ.get(ORACLE_CAP_ENV)
    if raw is None:
        return DEFAULT_ORACLE_CAP
    try:
        return int(raw)
    except ValueError as exc:
        raise ValueError(f"{ORACLE_CAP_ENV} must be an integer, got {raw!r}") from exc


@dataclass(frozen=True)
class WignerDTable:
    """All d blocks N = 0 .. n_max at one reduced angle; arrays read-only."""

    n_max: int
    theta: float
    blocks: tuple

    def block(self, n: int) -> np.ndarray:
        return self.blocks[n]


def _ladder(n: int) -> np.ndarray:
    """sqrt((k+1)(N-k)) for k = 0 .. N-1, the k -> k+1 matrix elements."""
    k = np.arange(n, dtype=np.float64)
    return np.sqrt((k + 1.0) * (n - k))


def _signed_powers(base: float, count: int) -> np.ndarray:
    """base**p for p = 0 .. count, exact for negative bases."""
    out = np.empty(count + 1)
    out[0] = 1.0
    if count:
        out[1:] = np.cumprod(np.full(count, base))
    return out


@lru_cache(maxsize=8)
def _eigensystems(n_max: int):
    """(eigenvalues, eigenvectors) of J_x per block, spectrum snapped exact."""
    out = []
    for n in range(n_max + 1):
        if n == 0:
            lam = np.zeros(1)
            vec = np.ones((1, 1))
        else:
            lam, vec = eigh_tridiagonal(np.zeros(n + 1), 0.5 * _ladder(n))
            lam = np.round(lam + 0.5 * n) - 0.5 * n
        lam.setflags(write=False)
        vec.setflags(write=False)
        out.append((lam, vec))
    return tuple(out)


def _build_blocks(n_max: int, theta: float):
    """Assemble every block at one angle from the cached eigensystems."""
    systems = _eigensystems(n_max)
    idx = np.arange(n_max + 1)
    rel_full = (idx[None, :] - idx[:, None]) % 4
    blocks = []
    for n, (lam, vec) in enumerate(systems):
        cmat = (vec * np.cos(theta * lam)) @ vec.T
        smat = (vec * np.sin(theta * lam)) @ vec.T
        block = np.choose(rel_full[: n + 1, : n + 1], [cmat, smat, -cmat, -smat])
        block.setflags(write=False)
        blocks.append(block)
    return tuple(blocks)


class _TableCache:
    """Small thread-safe LRU over (n_max, reduced angle)."""

    def __init__(self, capacity: int = 16):
        self.capacity = capacity
        self._lock = threading.Lock()
        self._data: OrderedDict = OrderedDict()

    def get(self, n_max: int, theta: float) -> WignerDTable:
        key = (n_max, theta)
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self._data.move_to_end(key)
                return hit
        table = WignerDTable(n_max, theta, _build_blocks(n_max, theta))
        with self._lock:
            self._data[key] = table
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)
        return table

    def clear(self):
        with self._lock:
            self._data.clear()


_tables = _TableCache()


def clear_table_cache():
    _tables.clear()


def reduce_angle(theta: float) -> float:
    """Map theta into [0, 4*pi); the blocks are exactly 4*pi periodic."""
    reduced = float(theta) % _PERIOD
    if reduced == _PERIOD:  # guard against rounding at the boundary
        reduced = 0.0
    return reduced


def wigner_d_table(n_max: int, theta: float) -> WignerDTable:
    """All blocks N <= n_max at one angle, cached by (n_max, reduced angle)."""
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    return _tables.get(n_max, reduce_angle(theta))


def wigner_d(n: int, m: int, k: int, theta: float) -> float:
    """Single entry d^N_{m k}(theta)."""
    if n < 0:
        raise ValueError("N must be nonnegative")
    if not (0 <= m <= n and 0 <= k <= n):
        raise ValueError("row and column indices must lie in 0..N")
    return float(wigner_d_table(n, theta).blocks[n][m, k])


@dataclass(frozen=True)
class Su2CoherentVector:
    """Expansion of |N, theta, phi> over k with read-only amplitudes."""

    n: int
    theta: float
    phi: float
    amplitudes: np.ndarray


def su2_coherent_amplitudes(n: int, theta: float, phi: float) -> Su2CoherentVector:
    """Amplitudes sqrt(C(N,k)) sin^k(t/2) cos^{N-k}(t/2) exp(-i k phi).

    This is column 0 of the rotation U(theta, phi) applied to |N, 0>.
    """
    if n < 0:
        raise ValueError("N must be nonnegative")
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    k = np.arange(n + 1)
    lg = gammaln(np.arange(n + 2, dtype=np.float64) + 1.0)
    root_binom = np.exp(0.5 * (lg[n] - lg[k] - lg[n - k]))
    mags = root_binom * _signed_powers(s, n)[k] * _signed_powers(c, n)[n - k]
    amps = mags * np.exp(-1j * phi * k)
    amps.setflags(write=False)
    return Su2CoherentVector(n, float(theta), float(phi), amps)


def rotation_matrix_oracle(
    n: int, theta: float, phi: float, cap: int | None = None
) -> np.ndarray:
    """Block N of U(theta, phi) by direct matrix exponentiation.

    The generator is (theta/2)(exp(-i phi) a_H a_V{dag} - exp(i phi)
    a_V a_H{dag}) restricted to the block; its exponential is computed with
    scipy's expm and nothing from the recurrence above.  Intended for
    cross-checks at N up to the configured cap.
    """
    if n < 0:
        raise ValueError("N must be nonnegative")
    cap = resolve_oracle_cap(cap)
    if n > cap:
        raise OracleCapError(f"N={n} exceeds the oracle cap {cap}")
    g = _ladder(n)
    gen = np.zeros((n + 1, n + 1), dtype=np.complex128)
    lower = 0.5 * theta * np.exp(-1j * phi) * g
    gen[np.arange(1, n + 1), np.arange(n)] = lower
    gen[np.arange(n), np.arange(1, n + 1)] = -np.conj(lower)
    return expm(gen)
