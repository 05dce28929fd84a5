"""Q and Wigner values on the Poincare sphere, point-wise and on grids.

The Husimi function is an overlap with the su2 coherent states,

    Q(theta, phi) = sum_N (N+1) |sum_k conj(Psi_{N,k}) a_k(N, theta, phi)|^2,

and the Wigner function is the expectation of the rotated parity-weighted
kernel.  Two equivalent summation routes are provided:

* ``triple``: within each block, rotate the coefficient vector with the d
  block at theta and weight by (-1)^n (2N - 2n + 1).  This is the exact
  quadratic form of the kernel and works at every angle.
* ``double``: a single d evaluation at 2*theta with the scalar weight
  (-1)^m [N + 1 + (N - m - k)/cos(theta)].  The 1/cos factor makes it
  ill-conditioned on the equator, so a guard band |cos theta| < 1e-3 is
  refused; use ``triple`` there.

Field evaluation walks the grid row by row and calls the same point
routines, so grid values match point calls bit for bit, serial or
parallel.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.sparse import block_diag
from scipy.special import gammaln

from .states import PolarizationState
from .su2 import _signed_powers, reduce_angle, wigner_d_table

#: |cos theta| below which the double sum is refused.
EQUATOR_GUARD = 1e-3

#: Default field resolution (polar x azimuthal).
DEFAULT_GRID = (64, 128)

_IMAG_GUARD = 1e-8

FIELD_KINDS = ("Q", "Wigner", "NormalizedF")
WIGNER_METHODS = ("triple", "double")


class EquatorGuardError(ValueError):
    """Double sum requested inside the equatorial guard band."""


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Product grid: Gauss-Legendre in cos(theta) times uniform azimuth.

    Node (i, j) sits at (polar_thetas[i], azimuthal_phis[j]) with weight
    polar_weights[i] * azimuthal_weight; the weights sum to 4*pi.  An even
    polar count keeps cos(theta) = 0 out of the node set.
    """

    polar_thetas: np.ndarray
    polar_weights: np.ndarray
    azimuthal_phis: np.ndarray
    azimuthal_weight: float

    def __post_init__(self):
        th = np.array(self.polar_thetas, dtype=np.float64)
        wt = np.array(self.polar_weights, dtype=np.float64)
        ph = np.array(self.azimuthal_phis, dtype=np.float64)
        if th.ndim != 1 or th.shape != wt.shape or th.size == 0:
            raise ValueError("polar nodes and weights must be matching 1-d arrays")
        if ph.ndim != 1 or ph.size == 0:
            raise ValueError("azimuthal nodes must be a nonempty 1-d array")
        if np.any(np.abs(np.cos(th)) < EQUATOR_GUARD * 1e-3):
            raise ValueError("grid places a node on the equator")
        for arr in (th, wt, ph):
            arr.setflags(write=False)
        object.__setattr__(self, "polar_thetas", th)
        object.__setattr__(self, "polar_weights", wt)
        object.__setattr__(self, "azimuthal_phis", ph)
        object.__setattr__(self, "azimuthal_weight", float(self.azimuthal_weight))

    @classmethod
    def gauss_legendre(cls, n_polar: int, n_azimuthal: int) -> "SphericalGrid":
        if n_polar < 2 or n_polar % 2 != 0:
            raise ValueError("n_polar must be even and at least 2")
        if n_azimuthal < 1:
            raise ValueError("n_azimuthal must be at least 1")
        x, w = np.polynomial.legendre.leggauss(n_polar)
        # ascending theta = descending cos(theta)
        thetas = np.arccos(x[::-1])
        weights = w[::-1].copy()
        phis = 2.0 * np.pi * np.arange(n_azimuthal) / n_azimuthal
        return cls(thetas, weights, phis, 2.0 * np.pi / n_azimuthal)

    @property
    def n_polar(self) -> int:
        return self.polar_thetas.size

    @property
    def n_azimuthal(self) -> int:
        return self.azimuthal_phis.size

    @property
    def node_count(self) -> int:
        return self.n_polar * self.n_azimuthal

    @property
    def node_weights(self) -> np.ndarray:
        """Flat quadrature weights in row-major (polar, azimuthal) order."""
        return np.repeat(self.polar_weights, self.n_azimuthal) * self.azimuthal_weight

    @property
    def node_thetas(self) -> np.ndarray:
        return np.repeat(self.polar_thetas, self.n_azimuthal)

    @property
    def node_phis(self) -> np.ndarray:
        return np.tile(self.azimuthal_phis, self.n_polar)


@dataclass(frozen=True, eq=False)
class DistributionField:
    """Values of one distribution on one grid, row-major over (theta, phi)."""

    grid: SphericalGrid
    kind: str
    values: np.ndarray
    state_digest: str

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"kind must be one of {FIELD_KINDS}")
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != (self.grid.node_count,):
            raise ValueError("values length must match the grid node count")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


# ---------------------------------------------------------------------------
# Per-n_max flat layout and per-angle evaluation tables, both cached.


class _FlatMeta:
    """Index arrays for the concatenated (N, k) layout at one n_max."""

    def __init__(self, n_max: int):
        self.n_max = n_max
        sizes = np.arange(n_max + 1) + 1
        self.offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        self.k_flat = np.concatenate([np.arange(n + 1) for n in range(n_max + 1)])
        ns = np.repeat(np.arange(n_max + 1), sizes)
        self.nk_flat = ns - self.k_flat
        self.k_range = np.arange(n_max + 1)
        self.nplus1 = (np.arange(n_max + 1) + 1).astype(np.float64)
        # parity-weighted kernel diagonal, flattened over (N, n)
        self.coef_flat = np.where(self.k_flat % 2 == 0, 1.0, -1.0) * (
            2.0 * self.nk_flat + 1.0
        )
        lg = gammaln(np.arange(n_max + 2, dtype=np.float64) + 1.0)
        self.root_binom = np.exp(0.5 * (lg[ns] - lg[self.k_flat] - lg[self.nk_flat]))
        for arr in (
            self.offsets,
            self.k_flat,
            self.nk_flat,
            self.k_range,
            self.nplus1,
            self.coef_flat,
            self.root_binom,
        ):
            arr.setflags(write=False)


class _EvalTable:
    """d table at one angle plus its block-diagonal sparse form."""

    def __init__(self, n_max: int, theta: float):
        self.table = wigner_d_table(n_max, theta)
        self.matrix = block_diag(self.table.blocks, format="csr")


class _KeyedCache:
    def __init__(self, factory, capacity: int):
        self.factory = factory
        self.capacity = capacity
        self._lock = threading.Lock()
        self._data: OrderedDict = OrderedDict()

    def get(self, *key):
        with self._lock:
            hit = self._data.get(key)
            if hit is not None:
                self._data.move_to_end(key)
                return hit
        value = self.factory(*key)
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)
        return value


_meta_cache = _KeyedCache(_FlatMeta, capacity=64)
_eval_cache = _KeyedCache(_EvalTable, capacity=8)


def _meta(n_max: int) -> _FlatMeta:
    return _meta_cache.get(n_max)


def _eval_table(n_max: int, theta: float) -> _EvalTable:
    return _eval_cache.get(n_max, reduce_angle(theta))


# ---------------------------------------------------------------------------
# Point evaluation.


def _q_point(flat_conj: np.ndarray, meta: _FlatMeta, theta: float, phi: float) -> float:
    c_pow = _signed_powers(np.cos(0.5 * theta), meta.n_max)
    s_pow = _signed_powers(np.sin(0.5 * theta), meta.n_max)
    phase = np.exp(-1j * phi * meta.k_range)
    z = flat_conj * (meta.root_binom * c_pow[meta.nk_flat] * s_pow[meta.k_flat])
    z *= phase[meta.k_flat]
    sums = np.add.reduceat(z, meta.offsets)
    return float(np.dot(meta.nplus1, sums.real * sums.real + sums.imag * sums.imag))


def _triple_point(
    flat: np.ndarray, meta: _FlatMeta, ev: _EvalTable, phi: float
) -> float:
    phase = np.exp(1j * phi * meta.k_range)
    u = flat * phase[meta.k_flat]
    br = ev.matrix @ u.real
    bi = ev.matrix @ u.imag
    return float(np.dot(meta.coef_flat, br * br + bi * bi))


def _double_point(
    state: PolarizationState, table2, theta: float, phi: float
) -> float:
    cos_t = np.cos(theta)
    acc = 0.0 + 0.0j
    for n, block in enumerate(state.coeffs):
        k = np.arange(n + 1)
        u = block * np.exp(1j * phi * k)
        factor = (n + 1.0) + (n - k[:, None] - k[None, :]) / cos_t
        sign_m = np.where(k % 2 == 0, 1.0, -1.0)
        m_mat = sign_m[:, None] * table2.blocks[n] * factor
        acc += np.vdot(u, m_mat @ u)
    if abs(acc.imag) > _IMAG_GUARD:
        raise RuntimeError(f"double sum lost reality: imag {acc.imag:.3e}")
    return float(acc.real)


def q_value(state: PolarizationState, theta: float, phi: float) -> float:
    """Husimi value; nonnegative by construction."""
    return _q_point(np.conj(state.flat), _meta(state.n_max), float(theta), float(phi))


def wigner_value(
    state: PolarizationState, theta: float, phi: float, method: str = "triple"
) -> float:
    """Wigner value via the requested summation route."""
    theta = float(theta)
    phi = float(phi)
    if method == "triple":
        return _triple_point(
            state.flat, _meta(state.n_max), _eval_table(state.n_max, theta), phi
        )
    if method == "double":
        if abs(np.cos(theta)) < EQUATOR_GUARD:
            raise EquatorGuardError(
                f"|cos theta| < {EQUATOR_GUARD:g}: the double sum divides by cos "
                "theta; evaluate with method='triple' near the equator"
            )
        return _double_point(
            state, wigner_d_table(state.n_max, 2.0 * theta), theta, phi
        )
    raise ValueError(f"method must be one of {WIGNER_METHODS}")


# ---------------------------------------------------------------------------
# Fields.


def _eval_row(
    state: PolarizationState, theta: float, phis: np.ndarray, kind: str, method: str
) -> np.ndarray:
    out = np.empty(phis.size)
    if kind == "Q":
        flat_conj = np.conj(state.flat)
        meta = _meta(state.n_max)
        for j, phi in enumerate(phis):
            out[j] = _q_point(flat_conj, meta, theta, float(phi))
    elif method == "triple":
        meta = _meta(state.n_max)
        ev = _eval_table(state.n_max, theta)
        for j, phi in enumerate(phis):
            out[j] = _triple_point(state.flat, meta, ev, float(phi))
    else:
        if abs(np.cos(theta)) < EQUATOR_GUARD:
            raise EquatorGuardError(
                f"grid node theta={theta:.6f} lies in the equatorial guard band; "
                "use method='triple'"
            )
        table2 = wigner_d_table(state.n_max, 2.0 * theta)
        for j, phi in enumerate(phis):
            out[j] = _double_point(state, table2, theta, float(phi))
    return out


def evaluate_field(
    state: PolarizationState,
    grid: SphericalGrid,
    kind: str,
    method: str = "triple",
    workers: int | None = None,
) -> DistributionField:
    """Evaluate Q or Wigner on every grid node.

    ``workers`` > 1 distributes polar rows over threads; each row runs the
    identical per-node routine, so the result bytes do not depend on the
    worker count.
    """
    if kind not in ("Q", "Wigner"):
        raise ValueError("kind must be 'Q' or 'Wigner'")
    if method not in WIGNER_METHODS:
        raise ValueError(f"method must be one of {WIGNER_METHODS}")
    thetas = grid.polar_thetas
    phis = grid.azimuthal_phis
    values = np.empty(grid.node_count)
    n_azi = grid.n_azimuthal
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = pool.map(
                lambda i: _eval_row(state, float(thetas[i]), phis, kind, method),
                range(thetas.size),
            )
            for i, row in enumerate(rows):
                values[i * n_azi : (i + 1) * n_azi] = row
    else:
        for i in range(thetas.size):
            values[i * n_azi : (i + 1) * n_azi] = _eval_row(
                state, float(thetas[i]), phis, kind, method
            )
    return DistributionField(grid, kind, values, state.digest)


def integrate(field: DistributionField) -> float:
    """(1/4pi) integral of the field over the sphere via the grid weights."""
    return float(np.dot(field.grid.node_weights, field.values) / (4.0 * np.pi))


def normalized_field(field: DistributionField, mean_n: float) -> DistributionField:
    """f = 1 + W/<N>; defined only for Wigner input and <N> > 0."""
    if field.kind != "Wigner":
        raise ValueError("normalized_field expects a Wigner field")
    if not (mean_n > 0.0):
        raise ValueError("mean excitation must be positive; f is undefined on vacuum")
    return DistributionField(
        field.grid, "NormalizedF", 1.0 + field.values / mean_n, field.state_digest
    )


# ---------------------------------------------------------------------------
# Closed forms for cross-checks.


def coherent_wigner_closed(r: float, phi_rel: float, theta, phi):
    """Wigner function of the equal-amplitude coherent pair, <N> = r^2.

    In the rotated frame the kernel factorizes into (2 n_H + 1) times the
    parity of the V mode, so with g = sin(theta) cos(phi + phi_rel)

        W = [r^2 (1 + g) + 1] exp[-r^2 (1 - g)],

    peaked on the equator at phi = -phi_rel with value 2 r^2 + 1, and
    integrating to one exactly.  The small-r expansion 1 + 2 r^2 g matches
    the one-photon sector directly.
    """
    if r < 0.0:
        raise ValueError("r must be nonnegative")
    g = np.sin(theta) * np.cos(np.asarray(phi) + phi_rel)
    return (r * r * (1.0 + g) + 1.0) * np.exp(-r * r * (1.0 - g))


def tmsv_wigner_closed(xi: complex, theta):
    """Wigner function of the two-mode squeezed vacuum; azimuth-independent.

    With q = tanh^2|xi| (each retained block contributes two squeezed
    photons, so the geometric ratio enters squared),

        W = (1 - q)(1 - q^2) / [1 + 2 q cos(2 theta) + q^2]^{3/2}.

    At the poles this reduces to the elementary alternating sum
    sum_k (2k+1)(-q)^k over the ladder, value [(1-q)/(1+q)]^2, and the
    belt-to-pole ratio is [(1+q)/(1-q)]^3 = cosh^3(2|xi|).
    """
    q = np.tanh(abs(complex(xi))) ** 2
    return (
        (1.0 - q)
        * (1.0 - q * q)
        / (1.0 + 2.0 * q * np.cos(2.0 * np.asarray(theta)) + q * q) ** 1.5
    )
