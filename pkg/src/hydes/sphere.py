"""Hypersphere primitives: projection, cosine similarity, and the vMF kernel.

The von Mises-Fisher kernel on S^{D-1} is

    K(z_i, z_j) = C_D(kappa) * exp(kappa * z_i . z_j)

and everything here works with its logarithm. ``C_D`` needs
log I_nu(kappa) with nu = D/2 - 1, which overflows in plain floating point
long before realistic (kappa, D) pairs, so ``log_bessel_i`` evaluates it
directly in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import gammaln, logsumexp

from .errors import DimensionMismatch, InvalidParam, NormTooSmall

PROJECTION_EPS = 1e-12

# below this argument the power series is used (unless nu is larger still)
_SERIES_CUTOFF = 30.0
_N_DEBYE_TERMS = 18
_LOG_2PI = math.log(2.0 * math.pi)


def project_to_sphere(v, eps: float = PROJECTION_EPS) -> np.ndarray:
    """Scale ``v`` (a vector, or a matrix row-wise) to unit Euclidean norm."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2):
        raise DimensionMismatch(f"expected a vector or a matrix, got shape {v.shape}")
    if v.shape[-1] < 2:
        raise DimensionMismatch(f"need D >= 2 components, got {v.shape[-1]}")
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norms < eps):
        bad = np.flatnonzero(norms.ravel() < eps)
        raise NormTooSmall(f"norm below {eps:g} at row(s) {bad[:5].tolist()}")
    return v / norms


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """All dot products between unit rows of ``a`` and ``b``, clamped to [-1, 1]."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimension {a.shape[1]} vs {b.shape[1]}")
    return np.clip(a @ b.T, -1.0, 1.0)


def sample_uniform_sphere(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def log_sphere_area(dim: int) -> float:
    """log of the surface area 2 pi^{D/2} / Gamma(D/2) of S^{D-1}."""
    return math.log(2.0) + 0.5 * dim * math.log(math.pi) - math.lgamma(0.5 * dim)


# --- log I_nu -----------------------------------------------------------------


@lru_cache(maxsize=None)
def _debye_polynomials(n_terms: int) -> tuple[Polynomial, ...]:
    # U_{k+1}(p) = p^2 (1 - p^2) U_k'(p) / 2 + (1/8) int_0^p (1 - 5 t^2) U_k(t) dt
    p = Polynomial([0.0, 1.0])
    polys = [Polynomial([1.0])]
    for _ in range(n_terms - 1):
        u = polys[-1]
        nxt = 0.5 * p**2 * (1 - p**2) * u.deriv() + 0.125 * ((1 - 5 * p**2) * u).integ()
        polys.append(nxt)
    return tuple(polys)


def _log_bessel_series(nu: float, x: float) -> float:
    # sum_m (x/2)^{2m+nu} / (m! Gamma(m+nu+1)); every term is positive
    m_peak = 0.5 * (math.sqrt(nu * nu + x * x) - nu)
    n_terms = int(m_peak + 20.0 * math.sqrt(m_peak + 1.0) + 60)
    m = np.arange(n_terms, dtype=np.float64)
    log_terms = (2.0 * m + nu) * math.log(0.5 * x) - gammaln(m + 1.0) - gammaln(m + nu + 1.0)
    return float(logsumexp(log_terms))


def _log_bessel_debye(nu: float, x: float) -> float:
    root = math.hypot(nu, x)
    p = nu / root
    # the U_k(p) are not monotone in k, so only stop once a term is negligible
    total = 1.0
    for k, u in enumerate(_debye_polynomials(_N_DEBYE_TERMS)[1:], start=1):
        term = float(u(p)) / nu**k
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    eta_nu = root + nu * math.log(x / (nu + root))
    return eta_nu - 0.5 * (_LOG_2PI + math.log(nu)) - 0.5 * math.log(root / nu) + math.log(total)


def _log_bessel_hankel(nu: float, x: float) -> float:
    mu = 4.0 * nu * nu
    total, term = 1.0, 1.0
    for k in range(1, 200):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        # terminates exactly for half-integer nu; otherwise stop at the smallest term
        if nxt == 0.0 or abs(nxt) > abs(term):
            break
        total += nxt
        term = nxt
        if abs(term) < 1e-17 * abs(total):
            break
    return x - 0.5 * (_LOG_2PI + math.log(x)) + math.log(total)


def log_bessel_i(nu: float, x: float) -> float:
    """log of the modified Bessel function of the first kind, I_nu(x).

    Power series for ``x < max(30, nu)``; above that, Debye's uniform
    expansion when ``nu >= 1`` and Hankel's large-argument series otherwise.
    """
    nu = float(nu)
    x = float(x)
    if nu < 0 or x < 0:
        raise InvalidParam(f"need nu >= 0 and x >= 0, got nu={nu}, x={x}")
    if x == 0.0:
        return 0.0 if nu == 0.0 else -math.inf
    if x < max(_SERIES_CUTOFF, nu):
        return _log_bessel_series(nu, x)
    if nu >= 1.0:
        return _log_bessel_debye(nu, x)
    return _log_bessel_hankel(nu, x)


def mean_resultant_length(kappa: float, dim: int) -> float:
    """A_D(kappa) = I_{D/2}(kappa) / I_{D/2-1}(kappa), the mean cosine to the vMF mode."""
    if kappa == 0:
        return 0.0
    nu = 0.5 * dim - 1.0
    return math.exp(log_bessel_i(nu + 1.0, kappa) - log_bessel_i(nu, kappa))


def log_vmf_normalizer(kappa: float, dim: int) -> float:
    """log C_D(kappa), the normalizer making the vMF kernel a density on S^{D-1}."""
    if kappa < 0 or not math.isfinite(kappa):
        raise InvalidParam(f"kappa must be finite and >= 0, got {kappa}")
    if int(dim) != dim or dim < 2:
        raise InvalidParam(f"dimension must be an integer >= 2, got {dim}")
    dim = int(dim)
    if kappa == 0:
        return -log_sphere_area(dim)
    nu = 0.5 * dim - 1.0
    return nu * math.log(kappa) - 0.5 * dim * _LOG_2PI - log_bessel_i(nu, kappa)


@dataclass(frozen=True)
class KernelParams:
    kappa: float
    dim: int
    include_const: bool = True
    log_norm_const: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "log_norm_const", log_vmf_normalizer(self.kappa, self.dim))

    @property
    def offset(self) -> float:
        """Additive constant applied to kappa * s in the log kernel."""
        return self.log_norm_const if self.include_const else 0.0


def log_vmf_kernel(s, params: KernelParams):
    """kappa * s (+ log C_D(kappa) when ``params.include_const``); never exponentiated."""
    return params.kappa * np.asarray(s, dtype=np.float64) + params.offset
