"""Two-mode photon states stored blockwise over the total excitation number.

Basis convention: ``|N, k> = |N - k>_H (x) |k>_V`` where ``k`` counts quanta in
the vertical mode.  A pure state is a ragged coefficient table ``coeffs[N][k]``
with ``0 <= k <= N <= n_max``.  Truncation at ``n_max`` discards a tail whose
mass is tracked in ``declared_norm_deficit``.

Phase conventions (fixed once, used consistently by the evaluators):

* ``make_coherent_pair(r, phi_rel)`` builds the product coherent state with
  ``alpha_H = r/sqrt(2)`` and ``alpha_V = (r/sqrt(2)) * exp(+i*phi_rel)``, so
  ``Psi_{N,k} = exp(-r^2/2) (r/sqrt(2))^N exp(+i*k*phi_rel) / sqrt((N-k)! k!)``.
  With this sign the Wigner function peaks where
  ``sin(theta) * cos(phi + phi_rel) = 1``, i.e. at ``phi = -phi_rel (mod 2*pi)``.
* Single-mode squeezing uses ``S(xi) = exp[-(conj(xi) a^2 - xi a{dag}^2)/2]``
  and the squeezed coherent amplitudes are those of ``S(xi) D(alpha)|0>``.
* ``make_kerr`` uses only the moduli of ``alpha_H`` and ``alpha_V``; the
  coefficient phase is the Kerr phase ``exp(i tau (N-k) k)`` alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Any

import numpy as np
from scipy.special import gammainc, gammaln

#: Hard ceiling on n_max accepted by the truncation machinery.
HARD_N_MAX_CAP = 512

#: Below this |xi| the squeeze is treated as exactly zero.
XI_ZERO_CUTOFF = 1e-12

_NORM_SLACK = 1e-10

STATE_FAMILIES = (
    "CoherentPair",
    "SqueezedPair",
    "TwoModeSqueezedVacuum",
    "KerrEvolved",
    "Raw",
)


class TruncationCapError(ValueError):
    """Raised when a requested or implied n_max exceeds the hard cap."""


@dataclass(frozen=True, eq=False)
class PolarizationState:
    """Pure two-mode state over blocks N = 0 .. n_max.

    coeffs[N] is a complex vector of length N + 1 indexed by the
    vertical-mode count k.  Coefficient arrays are copied on construction
    and frozen; instances are safe to share between threads.
    """

    n_max: int
    coeffs: tuple
    declared_norm_deficit: float

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be nonnegative")
        if len(self.coeffs) != self.n_max + 1:
            raise ValueError("expected one coefficient block per N <= n_max")
        blocks = []
        for n, block in enumerate(self.coeffs):
            arr = np.array(block, dtype=np.complex128)
            if arr.shape != (n + 1,):
                raise ValueError(f"block N={n} must have length {n + 1}")
            if not np.all(np.isfinite(arr.view(np.float64))):
                raise ValueError(f"block N={n} contains non-finite coefficients")
            arr.setflags(write=False)
            blocks.append(arr)
        object.__setattr__(self, "coeffs", tuple(blocks))
        deficit = float(self.declared_norm_deficit)
        if not np.isfinite(deficit) or deficit < 0.0:
            raise ValueError("declared_norm_deficit must be finite and >= 0")
        object.__setattr__(self, "declared_norm_deficit", deficit)
        missing = 1.0 - self.retained_mass
        if missing < -_NORM_SLACK:
            raise ValueError("coefficients exceed unit norm")
        if missing > deficit + _NORM_SLACK:
            raise ValueError(
                "truncated mass exceeds declared_norm_deficit "
                f"({missing:.3e} > {deficit:.3e})"
            )

    @cached_property
    def retained_mass(self) -> float:
        return float(sum(np.vdot(b, b).real for b in self.coeffs))

    @cached_property
    def flat(self) -> np.ndarray:
        """All blocks concatenated in (N, k) order; read-only."""
        out = np.concatenate(self.coeffs)
        out.setflags(write=False)
        return out

    def block(self, n: int) -> np.ndarray:
        return self.coeffs[n]

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.n_max).encode())
        for block in self.coeffs:
            h.update(block.tobytes())
        return h.hexdigest()[:16]


def state_from_blocks(blocks, declared_norm_deficit=None) -> PolarizationState:
    """Wrap raw coefficient blocks; deficit defaults to the missing mass."""
    blocks = [np.asarray(b, dtype=np.complex128) for b in blocks]
    if declared_norm_deficit is None:
        total = sum(float(np.vdot(b, b).real) for b in blocks)
        declared_norm_deficit = max(0.0, 1.0 - total)
    return PolarizationState(len(blocks) - 1, tuple(blocks), declared_norm_deficit)


def _log_factorials(n: int) -> np.ndarray:
    return gammaln(np.arange(n + 1, dtype=np.float64) + 1.0)


def _pow_log(base: float, exponents: np.ndarray) -> np.ndarray:
    """exponents * log(base) with the 0**0 = 1 corner handled explicitly."""
    if base == 0.0:
        return np.where(exponents == 0, 0.0, -np.inf)
    return exponents * np.log(base)


def _poisson_tail(n: int, mean: float) -> float:
    """P(X > n) for X ~ Poisson(mean); regularized incomplete gamma form."""
    return float(gammainc(n + 1, mean))


def make_coherent_pair(r: float, phi_rel: float, n_max: int) -> PolarizationState:
    """Equal-amplitude coherent light in both modes, relative phase phi_rel.

    Psi_{N,k} = exp(-r^2/2) (r/sqrt(2))^N exp(i k phi_rel) / sqrt((N-k)! k!).
    The total photon number is Poisson with mean r^2, which fixes the
    declared norm deficit analytically.
    """
    r = float(r)
    if r < 0.0:
        raise ValueError("r must be nonnegative")
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    lg = _log_factorials(n_max)
    alpha_mag = r / np.sqrt(2.0)
    blocks = []
    for n in range(n_max + 1):
        k = np.arange(n + 1)
        log_mag = (
            -0.5 * r * r
            + _pow_log(alpha_mag, np.full(n + 1, n))
            - 0.5 * (lg[n - k] + lg[k])
        )
        blocks.append(np.exp(log_mag) * np.exp(1j * phi_rel * k))
    deficit = _poisson_tail(n_max, r * r)
    return PolarizationState(n_max, tuple(blocks), deficit)


def squeezed_fock_amplitudes(alpha: complex, xi: complex, k_max: int) -> np.ndarray:
    """Number-basis amplitudes <k|S(xi)D(alpha)|0> for k = 0 .. k_max.

    Evaluated by the three-term recurrence

        c_{k+1} = (alpha c_k / sqrt(k+1) + nu sqrt(k/(k+1)) c_{k-1}) / mu

    with mu = cosh|xi|, nu = exp(i arg xi) sinh|xi| and the seed
    c_0 = exp(-(|alpha|^2 + (conj(nu)/mu) alpha^2)/2) / sqrt(mu).  Folding the
    prefactors into the recurrence keeps every intermediate bounded by one,
    so no overflow guard is needed at any k.  At xi = 0 the recurrence
    degenerates to the plain coherent amplitudes; that branch is taken
    explicitly below the cutoff.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    alpha = complex(alpha)
    xi = complex(xi)
    out = np.empty(k_max + 1, dtype=np.complex128)
    if abs(xi) < XI_ZERO_CUTOFF:
        out[0] = np.exp(-0.5 * abs(alpha) ** 2)
        for k in range(k_max):
            out[k + 1] = out[k] * alpha / np.sqrt(k + 1.0)
        return out
    mu = np.cosh(abs(xi))
    nu = np.exp(1j * np.angle(xi)) * np.sinh(abs(xi))
    out[0] = np.exp(-0.5 * (abs(alpha) ** 2 + (np.conj(nu) / mu) * alpha * alpha)) / np.sqrt(mu)
    if k_max >= 1:
        out[1] = alpha * out[0] / mu
    for k in range(1, k_max):
        out[k + 1] = (
            alpha * out[k] / np.sqrt(k + 1.0)
            + nu * np.sqrt(k / (k + 1.0)) * out[k - 1]
        ) / mu
    return out


def squeezed_fock_amplitude(alpha: complex, xi: complex, k: int) -> complex:
    """Single amplitude <k|S(xi)D(alpha)|0>."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return complex(squeezed_fock_amplitudes(alpha, xi, k)[k])


def make_squeezed_pair(
    alpha_h: complex, xi_h: complex, alpha_v: complex, xi_v: complex, n_max: int
) -> PolarizationState:
    """Product of two squeezed coherent modes, S(xi)D(alpha)|0> in each arm.

    The deficit is the numerically missing mass of the truncated product.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    ch = squeezed_fock_amplitudes(alpha_h, xi_h, n_max)
    cv = squeezed_fock_amplitudes(alpha_v, xi_v, n_max)
    blocks = [ch[n::-1] * cv[: n + 1] for n in range(n_max + 1)]
    total = sum(float(np.vdot(b, b).real) for b in blocks)
    deficit = max(0.0, 1.0 - total)
    return PolarizationState(n_max, tuple(blocks), deficit)


def make_tmsv(xi: complex, n_max: int) -> PolarizationState:
    """Two-mode squeezed vacuum: Psi_{N,k} = delta_{N,2k} (1/mu) (-nu/mu)^k.

    Only even blocks carry weight, each in its single k = N/2 component.
    The truncated tail is an exact geometric series.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    xi = complex(xi)
    mu = np.cosh(abs(xi))
    nu = np.exp(1j * np.angle(xi)) * np.sinh(abs(xi))
    ratio = -nu / mu
    blocks = []
    for n in range(n_max + 1):
        block = np.zeros(n + 1, dtype=np.complex128)
        if n % 2 == 0:
            block[n // 2] = ratio ** (n // 2) / mu
        blocks.append(block)
    t = np.tanh(abs(xi))
    deficit = float(t ** (2 * (n_max // 2 + 1)))
    return PolarizationState(n_max, tuple(blocks), deficit)


def make_kerr(alpha_h: complex, alpha_v: complex, tau: float, n_max: int) -> PolarizationState:
    """Coherent pair after cross-Kerr evolution exp(i tau n_H n_V).

    Psi_{N,k} = exp(i tau (N-k) k) exp(-(|a_H|^2+|a_V|^2)/2)
                |a_H|^{N-k} |a_V|^k / sqrt((N-k)! k!).

    Only the moduli of the input amplitudes enter; the exponent carries the
    half needed for unit norm.  At tau = 0 the coefficient moduli coincide
    with make_coherent_pair for the matching total amplitude.
    """
    if n_max < 0:
        raise ValueError("n_max must be nonnegative")
    a_h = abs(complex(alpha_h))
    a_v = abs(complex(alpha_v))
    tau = float(tau)
    lg = _log_factorials(n_max)
    mean = a_h * a_h + a_v * a_v
    blocks = []
    for n in range(n_max + 1):
        k = np.arange(n + 1)
        log_mag = (
            -0.5 * mean
            + _pow_log(a_h, n - k)
            + _pow_log(a_v, k)
            - 0.5 * (lg[n - k] + lg[k])
        )
        blocks.append(np.exp(log_mag) * np.exp(1j * tau * (n - k) * k))
    deficit = _poisson_tail(n_max, mean)
    return PolarizationState(n_max, tuple(blocks), deficit)


def mean_excitation(state: PolarizationState) -> float:
    """<N> of the retained coefficients."""
    return float(
        sum(n * np.vdot(b, b).real for n, b in enumerate(state.coeffs))
    )


# ---------------------------------------------------------------------------
# Declarative state specification (the CLI exchange format).


@dataclass(frozen=True)
class StateSpec:
    """Family name, family parameters and a truncation rule.

    Exactly one of n_max / epsilon is set: an explicit cut or a tail
    tolerance handed to suggest_truncation.
    """

    family: str
    params: dict
    n_max: int | None = None
    epsilon: float | None = None

    def __post_init__(self):
        if self.family not in STATE_FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if (self.n_max is None) == (self.epsilon is None) and self.family != "Raw":
            raise ValueError("exactly one of n_max / epsilon must be given")

    @classmethod
    def from_json(cls, text: str) -> "StateSpec":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"state spec is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValueError("state spec must be a JSON object")
        family = doc.get("family")
        params = doc.get("params", {})
        if not isinstance(family, str):
            raise ValueError("state spec needs a string 'family'")
        if family not in STATE_FAMILIES:
            raise ValueError(
                f"unknown family {family!r}; expected one of {', '.join(STATE_FAMILIES)}"
            )
        if not isinstance(params, dict):
            raise ValueError("'params' must be an object")
        trunc = doc.get("truncation", {})
        if not isinstance(trunc, dict):
            raise ValueError("'truncation' must be an object")
        n_max = trunc.get("n_max")
        epsilon = trunc.get("epsilon")
        if n_max is not None and (not isinstance(n_max, int) or isinstance(n_max, bool)):
            raise ValueError("truncation n_max must be an integer")
        if epsilon is not None and not isinstance(epsilon, (int, float)):
            raise ValueError("truncation epsilon must be a number")
        if family == "Raw" and n_max is None and epsilon is None:
            pass  # implied by the coefficient table
        elif (n_max is None) == (epsilon is None):
            raise ValueError("truncation must set exactly one of n_max / epsilon")
        return cls(family, params, n_max, None if epsilon is None else float(epsilon))

    def to_json(self) -> str:
        trunc: dict[str, Any] = {}
        if self.n_max is not None:
            trunc["n_max"] = self.n_max
        if self.epsilon is not None:
            trunc["epsilon"] = self.epsilon
        return json.dumps(
            {"family": self.family, "params": self.params, "truncation": trunc},
            sort_keys=True,
        )


def _as_complex(value, name: str) -> complex:
    """Accept a JSON number or an [re, im] pair."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        return complex(value[0], value[1])
    raise ValueError(f"parameter {name!r} must be a number or an [re, im] pair")


def _as_real(value, name: str) -> float:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    raise ValueError(f"parameter {name!r} must be a real number")


def _require_params(params: dict, names: tuple, family: str) -> None:
    missing = [n for n in names if n not in params]
    if missing:
        raise ValueError(f"{family} spec is missing parameters: {', '.join(missing)}")
    extra = [n for n in params if n not in names]
    if extra:
        raise ValueError(f"{family} spec has unknown parameters: {', '.join(extra)}")


def suggest_truncation(spec: StateSpec, epsilon: float, cap: int = HARD_N_MAX_CAP) -> int:
    """Smallest n_max whose bounded tail mass is below epsilon.

    CoherentPair and KerrEvolved use the exact Poisson tail of the total
    photon number.  TwoModeSqueezedVacuum uses its exact geometric tail.
    SqueezedPair has stretched-Poisson number statistics with no usable
    closed tail, so the two per-mode number distributions are computed out
    to the cap and convolved; the reported tail is exact up to the mass a
    single mode holds beyond the cap, which is added to keep the bound
    one-sided.
    """
    if not (0.0 < epsilon < 1.0):
        raise ValueError("epsilon must lie in (0, 1)")
    p = spec.params
    if spec.family == "CoherentPair":
        _require_params(p, ("r", "phi_rel"), spec.family)
        mean = _as_real(p["r"], "r") ** 2
        n_max = _poisson_quantile(mean, epsilon, cap)
    elif spec.family == "KerrEvolved":
        _require_params(p, ("alpha_h", "alpha_v", "tau"), spec.family)
        mean = (
            abs(_as_complex(p["alpha_h"], "alpha_h")) ** 2
            + abs(_as_complex(p["alpha_v"], "alpha_v")) ** 2
        )
        n_max = _poisson_quantile(mean, epsilon, cap)
    elif spec.family == "TwoModeSqueezedVacuum":
        _require_params(p, ("xi",), spec.family)
        t = np.tanh(abs(_as_complex(p["xi"], "xi")))
        if t == 0.0:
            return 0
        pairs = 0
        while t ** (2 * (pairs + 1)) >= epsilon:
            pairs += 1
            if 2 * pairs > cap:
                raise TruncationCapError(
                    f"TMSV tail below {epsilon:g} needs n_max > {cap}"
                )
        n_max = 2 * pairs
    elif spec.family == "SqueezedPair":
        _require_params(p, ("alpha_h", "xi_h", "alpha_v", "xi_v"), spec.family)
        prob_h = (
            np.abs(
                squeezed_fock_amplitudes(
                    _as_complex(p["alpha_h"], "alpha_h"),
                    _as_complex(p["xi_h"], "xi_h"),
                    cap,
                )
            )
            ** 2
        )
        prob_v = (
            np.abs(
                squeezed_fock_amplitudes(
                    _as_complex(p["alpha_v"], "alpha_v"),
                    _as_complex(p["xi_v"], "xi_v"),
                    cap,
                )
            )
            ** 2
        )
        total = np.convolve(prob_h, prob_v)
        # suffix[n] = P(N >= n) within the doubled range; the mass either
        # mode leaks past the cap keeps the tail one-sided
        suffix = np.cumsum(total[::-1])[::-1]
        leak = (1.0 - prob_h.sum()) + (1.0 - prob_v.sum())
        n_max = None
        for n in range(min(cap, total.size - 1) + 1):
            beyond = suffix[n + 1] if n + 1 < suffix.size else 0.0
            if beyond + leak < epsilon:
                n_max = n
                break
        if n_max is None:
            raise TruncationCapError(
                f"SqueezedPair tail below {epsilon:g} needs n_max > {cap}"
            )
    elif spec.family == "Raw":
        coeffs = p.get("coeffs")
        if not isinstance(coeffs, list) or not coeffs:
            raise ValueError("Raw spec needs a nonempty 'coeffs' list")
        n_max = len(coeffs) - 1
    else:  # pragma: no cover - guarded by StateSpec
        raise ValueError(f"unknown family {spec.family!r}")
    if n_max > cap:
        raise TruncationCapError(f"suggested n_max {n_max} exceeds the cap {cap}")
    return n_max


def _poisson_quantile(mean: float, epsilon: float, cap: int) -> int:
    """Smallest n with Poisson(mean) tail P(X > n) < epsilon."""
    if mean == 0.0:
        return 0
    n = 0
    while _poisson_tail(n, mean) >= epsilon:
        n += 1
        if n > cap:
            raise TruncationCapError(
                f"Poisson tail below {epsilon:g} needs n_max > {cap} (mean {mean:g})"
            )
    return n


def _raw_blocks(params: dict):
    coeffs = params.get("coeffs")
    if not isinstance(coeffs, list) or not coeffs:
        raise ValueError("Raw spec needs a nonempty 'coeffs' list")
    blocks = []
    for n, row in enumerate(coeffs):
        if not isinstance(row, list) or len(row) != n + 1:
            raise ValueError(f"Raw block N={n} must be a list of length {n + 1}")
        blocks.append(np.array([_as_complex(v, f"coeffs[{n}]") for v in row]))
    return blocks


def build_state(spec: StateSpec, cap: int = HARD_N_MAX_CAP) -> PolarizationState:
    """Materialize a StateSpec, resolving an epsilon rule via suggest_truncation.

    When an epsilon rule is given, the realized deficit is re-checked after
    construction and n_max is raised (within the cap) if the a-priori bound
    was not yet met; the tolerance is the contract, the bound the estimate.
    """
    if spec.family == "Raw":
        blocks = _raw_blocks(spec.params)
        if len(blocks) - 1 > cap:
            raise TruncationCapError(f"Raw state n_max exceeds the cap {cap}")
        total = sum(float(np.vdot(b, b).real) for b in blocks)
        return PolarizationState(
            len(blocks) - 1, tuple(blocks), max(0.0, 1.0 - total)
        )
    if spec.n_max is not None:
        if spec.n_max > cap:
            raise TruncationCapError(f"requested n_max {spec.n_max} exceeds the cap {cap}")
        return _build_family(spec.family, spec.params, spec.n_max)
    n_max = suggest_truncation(spec, spec.epsilon, cap)
    state = _build_family(spec.family, spec.params, n_max)
    while 1.0 - state.retained_mass > spec.epsilon:
        n_max = min(cap, max(n_max + 4, int(n_max * 1.25)))
        state = _build_family(spec.family, spec.params, n_max)
        if n_max == cap and 1.0 - state.retained_mass > spec.epsilon:
            raise TruncationCapError(
                f"tail below {spec.epsilon:g} not reachable within n_max <= {cap}"
            )
    return state


def _build_family(family: str, p: dict, n_max: int) -> PolarizationState:
    if family == "CoherentPair":
        _require_params(p, ("r", "phi_rel"), family)
        return make_coherent_pair(_as_real(p["r"], "r"), _as_real(p["phi_rel"], "phi_rel"), n_max)
    if family == "SqueezedPair":
        _require_params(p, ("alpha_h", "xi_h", "alpha_v", "xi_v"), family)
        return make_squeezed_pair(
            _as_complex(p["alpha_h"], "alpha_h"),
            _as_complex(p["xi_h"], "xi_h"),
            _as_complex(p["alpha_v"], "alpha_v"),
            _as_complex(p["xi_v"], "xi_v"),
            n_max,
        )
    if family == "TwoModeSqueezedVacuum":
        _require_params(p, ("xi",), family)
        return make_tmsv(_as_complex(p["xi"], "xi"), n_max)
    if family == "KerrEvolved":
        _require_params(p, ("alpha_h", "alpha_v", "tau"), family)
        return make_kerr(
            _as_complex(p["alpha_h"], "alpha_h"),
            _as_complex(p["alpha_v"], "alpha_v"),
            _as_real(p["tau"], "tau"),
            n_max,
        )
    raise ValueError(f"unknown family {family!r}")
