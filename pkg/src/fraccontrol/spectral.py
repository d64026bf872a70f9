"""Eigenbasis machinery for the Dirichlet Laplacian on the unit square.

Eigenpairs are ``lambda_{k,l} = pi^2 (k^2 + l^2)`` and
``phi_{k,l}(x1, x2) = sin(k pi x1) sin(l pi x2)``.  The ``phi_{k,l}`` are not
L2-normalized (``||phi_{k,l}||^2 = 1/4``); every transform here carries the
explicit factor 4.
"""

from dataclasses import dataclass
import math
from typing import Callable

import numpy as np

from .bessel import bessel_ik


@dataclass(frozen=True)
class FracParams:
    """Scalar constants shared by the state equation and the cost functional."""

    s: float
    vartheta: float = 1.0
    a_bound: float = -0.5
    b_bound: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"fractional order s must lie in (0, 1), got {self.s}")
        if not self.vartheta > 0.0:
            raise ValueError(f"regularization weight must be positive, got {self.vartheta}")
        if not self.a_bound < self.b_bound:
            raise ValueError(f"empty control box [{self.a_bound}, {self.b_bound}]")

    @property
    def alpha(self) -> float:
        return 1.0 - 2.0 * self.s

    @property
    def d_s(self) -> float:
        return normalization_constant(self.s)


def normalization_constant(s: float) -> float:
    """``d_s = 2^(1-2s) Gamma(1-s) / Gamma(s)``; equals 1 at s = 1/2."""
    return 2.0 ** (1.0 - 2.0 * s) * math.gamma(1.0 - s) / math.gamma(s)


def _check_s(s):
    if not 0.0 < s < 1.0:
        raise ValueError(f"fractional order s must lie in (0, 1), got {s}")


def eigenvalue(k, l):
    """Eigenvalue ``pi^2 (k^2 + l^2)``; accepts integer arrays."""
    k = np.asarray(k)
    l = np.asarray(l)
    if np.any(k < 1) or np.any(l < 1):
        raise ValueError("eigen-indices must be >= 1")
    lam = np.pi**2 * (k.astype(float) ** 2 + l.astype(float) ** 2)
    return float(lam) if lam.ndim == 0 else lam


def eigenfunction(k, l):
    def phi(x1, x2):
        return np.sin(k * np.pi * np.asarray(x1)) * np.sin(l * np.pi * np.asarray(x2))

    return phi


class SpectralCoefficients:
    """Coefficients ``w[k-1, l-1]`` of ``sum w_{k,l} phi_{k,l}`` for k, l <= K."""

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1]:
            raise ValueError("coefficient array must be square (K x K)")
        self.coeffs = coeffs

    @classmethod
    def single_mode(cls, k, l, K, value=1.0):
        w = np.zeros((K, K))
        w[k - 1, l - 1] = value
        return cls(w)

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    def __getitem__(self, kl):
        k, l = kl
        if k > self.K or l > self.K:
            return 0.0
        return self.coeffs[k - 1, l - 1]

    def eigenvalues(self):
        idx = np.arange(1, self.K + 1)
        return eigenvalue(idx[:, None], idx[None, :])

    def evaluate(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        idx = np.arange(1, self.K + 1)
        s1 = np.sin(np.pi * np.multiply.outer(x1, idx))
        s2 = np.sin(np.pi * np.multiply.outer(x2, idx))
        return np.einsum("...k,kl,...l->...", s1, self.coeffs, s2)

    __call__ = evaluate

    def l2_norm(self) -> float:
        return 0.5 * float(np.sqrt(np.sum(self.coeffs**2)))

    def tail_norm(self, k0: int) -> float:
        """L2 norm of the modes with max(k, l) > k0."""
        w = self.coeffs.copy()
        w[:k0, :k0] = 0.0
        return 0.5 * float(np.sqrt(np.sum(w**2)))


def apply_fractional(w: SpectralCoefficients, s: float, inverse: bool = False):
    """Apply ``L^s`` (or ``L^-s``) by scaling each coefficient with ``lambda^(+-s)``."""
    _check_s(s)
    scale = w.eigenvalues() ** (-s if inverse else s)
    return SpectralCoefficients(w.coeffs * scale)


def _gauss_panels(n_points, panel_order=8):
    n_panels = max(1, math.ceil(n_points / panel_order))
    xg, wg = np.polynomial.legendre.leggauss(panel_order)
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    wts = (half[:, None] * wg[None, :]).ravel()
    return x, wts


def sine_coefficients(g: Callable, K: int, quad_pts: int = 256) -> SpectralCoefficients:
    """Project ``g`` onto the first K x K sine modes by composite Gauss quadrature.

    ``quad_pts`` points per axis are split into 8-point Gauss-Legendre panels.
    """
    if K <= 0:
        raise ValueError(f"cutoff K must be positive, got {K}")
    x, wts = _gauss_panels(quad_pts)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    G = np.asarray(g(X1, X2), dtype=float) * np.outer(wts, wts)
    S = np.sin(np.pi * np.outer(np.arange(1, K + 1), x))
    return SpectralCoefficients(4.0 * S @ G @ S.T)


def psi_profile(lam, s, y):
    """Extension profile on the semi-infinite cylinder, psi(0) = 1, psi(inf) = 0."""
    if not lam > 0.0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    _check_s(s)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0):
        raise ValueError("y must be non-negative")
    cs = 2.0 ** (1.0 - s) / math.gamma(s)
    sq = math.sqrt(lam)
    out = np.empty(y.shape)
    for i, yi in np.ndenumerate(y):
        x = sq * yi
        if x == 0.0:
            out[i] = 1.0
        elif x > 700.0:
            out[i] = 0.0
        else:
            out[i] = cs * x**s * bessel_ik(s, x)[1]
    return float(out) if out.ndim == 0 else out


def chi_profile(lam, s, Y, y):
    """Extension profile on the truncated cylinder, chi(0) = 1, chi(Y) = 0."""
    if not lam > 0.0:
        raise ValueError(f"eigenvalue must be positive, got {lam}")
    _check_s(s)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0.0) or np.any(y > Y):
        raise ValueError(f"y must lie in [0, {Y}]")
    cs = 2.0 ** (1.0 - s) / math.gamma(s)
    sq = math.sqrt(lam)
    X = sq * Y
    if X > 600.0:
        ratio = 0.0
        i_big = math.inf
    else:
        i_big, k_big = bessel_ik(s, X)[:2]
        ratio = k_big / i_big
    out = np.empty(y.shape)
    for i, yi in np.ndenumerate(y):
        x = sq * yi
        if x == 0.0:
            out[i] = 1.0
        elif yi == Y:
            out[i] = 0.0
        elif x > 600.0:
            out[i] = 0.0
        else:
            ix, kx = bessel_ik(s, x)[:2]
            out[i] = cs * x**s * (kx - ratio * ix)
    return float(out) if out.ndim == 0 else out


def truncation_excess(lam, s, Y):
    """Extra conormal flux of the truncated profile relative to ``lambda^s``.

    ``-lim y^alpha chi'(y) = lambda^s (d_s + e)`` with ``e`` returned here; it
    is positive and decays like ``exp(-2 sqrt(lam) Y)``.
    """
    X = math.sqrt(lam) * Y
    if X > 600.0:
        return 0.0
    i_big, k_big = bessel_ik(s, X)[:2]
    return 2.0 ** (2.0 - 2.0 * s) / math.gamma(s) ** 2 * k_big / i_big


def solve_fractional(z: SpectralCoefficients, s: float, Y: float | None = None):
    """Coefficients of ``u`` with ``L^s u = z``; with Y given, the truncated-cylinder trace."""
    u = apply_fractional(z, s, inverse=True)
    if Y is None:
        return u
    lam = z.eigenvalues()
    d_s = normalization_constant(s)
    factor = np.vectorize(lambda lv: d_s / (d_s + truncation_excess(lv, s, Y)))(lam)
    return SpectralCoefficients(u.coeffs * factor)


@dataclass(frozen=True)
class ExactTriple:
    """Manufactured optimal triple with its forcing term and desired state."""

    params: FracParams
    u_bar: Callable
    p_bar: Callable
    z_bar: Callable
    f: Callable
    u_d: Callable


def exact_triple(params: FracParams) -> ExactTriple:
    """Closed-form optimum built on the (2, 2) mode for ``L^s u = f + z``."""
    a, b = params.a_bound, params.b_bound
    if not a < 0.0 < b:
        raise ValueError("the manufactured solution needs a_bound < 0 < b_bound")
    theta = params.vartheta
    lam_s = eigenvalue(2, 2) ** params.s
    phi = eigenfunction(2, 2)

    def u_bar(x1, x2):
        return phi(x1, x2)

    def p_bar(x1, x2):
        return -theta * phi(x1, x2)

    def z_bar(x1, x2):
        return np.clip(-p_bar(x1, x2) / theta, a, b)

    def f(x1, x2):
        return lam_s * phi(x1, x2) - z_bar(x1, x2)

    def u_d(x1, x2):
        return (1.0 + theta * lam_s) * phi(x1, x2)

    return ExactTriple(params, u_bar, p_bar, z_bar, f, u_d)
