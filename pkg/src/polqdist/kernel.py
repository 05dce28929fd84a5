"""Explicit s-ordered kernels, the slow reference path.

The kernel at ordering s and direction (theta, phi) is block diagonal over
photon number.  Block N is

    U_N(theta, phi) diag_k[ b^k (2(N-k) + 1 - s) / (1 - s) ] U_N^dag,

with b = (s+1)/(s-1).  At s = 0 the diagonal is the parity-weighted string
(-1)^k (2(N-k)+1); at s = -1 it collapses to (N+1) on k = 0, making the
kernel the projector onto the su2 coherent state scaled by N+1, which is
Q up to the overlap square.

Everything here goes through matrix exponentials, none of the recurrence
machinery, so expectation values taken against these kernels are an
independent check on the fast evaluators.  Block size is capped like the
rotation oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import block_diag as dense_block_diag

from .states import PolarizationState
from .su2 import OracleCapError, resolve_oracle_cap, rotation_matrix_oracle

_REALITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TruncatedKernel:
    """Kernel blocks N = 0 .. n_max at one (s, theta, phi)."""

    s: float
    theta: float
    phi: float
    n_max: int
    blocks: tuple

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense block-diagonal form, mostly for inspection in tests."""
        return dense_block_diag(*self.blocks)

    def block(self, n: int) -> np.ndarray:
        return self.blocks[n]


def _diag_string(s: float, n: int) -> np.ndarray:
    base = (s + 1.0) / (s - 1.0)
    k = np.arange(n + 1)
    return base ** k * (2.0 * (n - k) + 1.0 - s) / (1.0 - s)


def kernel_matrix(
    s: float, theta: float, phi: float, n_max: int, cap: int | None = None
) -> TruncatedKernel:
    """Build every block up to n_max; s must lie in [-1, 0]."""
    s = float(s)
    if not (-1.0 <= s <= 0.0):
        raise ValueError(f"ordering parameter must lie in [-1, 0], got {s}")
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    cap = resolve_oracle_cap(cap)
    blocks = []
    for n in range(n_max + 1):
        u = rotation_matrix_oracle(n, theta, phi, cap=cap)
        block = (u * _diag_string(s, n)[None, :]) @ u.conj().T
        block.setflags(write=False)
        blocks.append(block)
    return TruncatedKernel(s, float(theta), float(phi), n_max, tuple(blocks))


def quasidist_via_kernel(
    state: PolarizationState,
    s: float,
    theta: float,
    phi: float,
    cap: int | None = None,
) -> float:
    """<state| kernel |state>, the reference value for the fast paths.

    The quadratic form of a Hermitian kernel is real; any imaginary residue
    beyond rounding means a bug, so it is checked rather than discarded.
    """
    cap = resolve_oracle_cap(cap)
    if state.n_max > cap:
        raise OracleCapError(
            f"state n_max {state.n_max} exceeds the oracle cap {cap}; "
            "the kernel route is for small cross-check states"
        )
    kern = kernel_matrix(s, theta, phi, state.n_max, cap=cap)
    acc = 0.0 + 0.0j
    for n, block in enumerate(state.coeffs):
        acc += np.vdot(block, kern.blocks[n] @ block)
    if abs(acc.imag) > _REALITY_TOL:
        raise RuntimeError(f"kernel value lost reality: imag {acc.imag:.3e}")
    return float(acc.real)
