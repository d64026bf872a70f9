"""Modified Bessel functions I_nu and K_nu of real order.

Temme's series is used for ``x < 2`` and Steed's continued fraction (CF2)
above; I_nu follows from the Wronskian and the CF1 ratio I'_nu / I_nu.
Orders outside ``|mu| <= 1/2`` are reached by recurrence.
"""

import math

import numpy as np

_EPS = 1.0e-16
_FPMIN = 1.0e-300
_MAXIT = 100000
_XMIN = 2.0

# Taylor coefficients of 1/Gamma(1 + x) = 1 + c1 x + c2 x^2 + ...
_RGAM = (
    1.0,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
)


def _gamma_terms(mu):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2."""
    gampl = 1.0 / math.gamma(1.0 + mu)
    gammi = 1.0 / math.gamma(1.0 - mu)
    if abs(mu) < 1.0e-2:
        m2 = mu * mu
        gam1 = -(_RGAM[1] + m2 * (_RGAM[3] + m2 * (_RGAM[5] + m2 * (_RGAM[7] + m2 * _RGAM[9]))))
        gam2 = 1.0 + m2 * (_RGAM[2] + m2 * (_RGAM[4] + m2 * (_RGAM[6] + m2 * _RGAM[8])))
    else:
        gam1 = (gammi - gampl) / (2.0 * mu)
        gam2 = 0.5 * (gammi + gampl)
    return gam1, gam2, gampl, gammi


def bessel_ik(nu, x):
    """Return ``(I_nu(x), K_nu(x), I'_nu(x), K'_nu(x))`` for ``nu >= 0``, ``x > 0``."""
    nu = float(nu)
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"bessel argument must be positive, got {x}")
    if nu < 0.0:
        raise ValueError(f"bessel order must be non-negative, got {nu}")
    nl = int(nu + 0.5)
    mu = nu - nl
    mu2 = mu * mu
    xi = 1.0 / x
    xi2 = 2.0 * xi

    # CF1: I'_nu / I_nu by the modified Lentz method.
    h = max(nu * xi, _FPMIN)
    b = xi2 * nu
    d = 0.0
    c = h
    for _ in range(_MAXIT):
        b += xi2
        d = 1.0 / (b + d)
        c = b + 1.0 / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise RuntimeError(f"CF1 failed to converge for nu={nu}, x={x}")

    ril = _FPMIN
    ripl = h * ril
    ril1 = ril
    rip1 = ripl
    fact = nu * xi
    for _ in range(nl, 0, -1):
        ritemp = fact * ril + ripl
        fact -= xi
        ripl = fact * ritemp + ril
        ril = ritemp
    f = ripl / ril

    if x < _XMIN:
        x2 = 0.5 * x
        pimu = math.pi * mu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = mu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _gamma_terms(mu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAXIT):
            ff = (i * ff + p + q) / (i * i - mu2)
            c *= d / i
            p /= i - mu
            q /= i + mu
            delta = c * ff
            total += delta
            total1 += c * (p - i * ff)
            if abs(delta) < abs(total) * _EPS:
                break
        else:
            raise RuntimeError(f"Temme series failed to converge for nu={nu}, x={x}")
        rkmu = total
        rk1 = total1 * xi2
    else:
        # CF2 (Steed), with Thompson-Barnett summation for K_mu.
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - mu2
        q = c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        else:
            raise RuntimeError(f"CF2 failed to converge for nu={nu}, x={x}")
        h = a1 * h
        rkmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
        rk1 = rkmu * (mu + x + 0.5 - h) * xi

    rkmup = mu * xi * rkmu - rk1
    rimu = xi / (f * rkmu - rkmup)
    ri = rimu * ril1 / ril
    rip = rimu * rip1 / ril
    for i in range(1, nl + 1):
        rktemp = (mu + i) * xi2 * rk1 + rkmu
        rkmu = rk1
        rk1 = rktemp
    rk = rkmu
    rkp = nu * xi * rkmu - rk1
    return ri, rk, rip, rkp


def _check_order(nu):
    if not 0.0 < nu < 1.0:
        raise ValueError(f"order must lie in (0, 1), got {nu}")


def bessel_K(nu, x):
    """Modified Bessel function of the second kind, K_nu(x), 0 < nu < 1."""
    _check_order(nu)
    if np.ndim(x) == 0:
        return bessel_ik(nu, x)[1]
    return np.array([bessel_ik(nu, xi)[1] for xi in np.ravel(x)]).reshape(np.shape(x))


def bessel_I(nu, x):
    """Modified Bessel function of the first kind, I_nu(x), 0 < nu < 1."""
    _check_order(nu)
    if np.ndim(x) == 0:
        return bessel_ik(nu, x)[0]
    return np.array([bessel_ik(nu, xi)[0] for xi in np.ravel(x)]).reshape(np.shape(x))
