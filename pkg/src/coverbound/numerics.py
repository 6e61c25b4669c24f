"""Special functions and QMC primitives shared by the coverage engines.

The standard normal CDF/quantile are thin wrappers over the Cephes routines
in :mod:`scipy.special`; the bivariate normal CDF is a vectorised port of
Genz's BVNU (Drezner & Wesolowsky with the high-correlation tail expansion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.stats import qmc


class DomainError(ValueError):
    """Raised when an argument falls outside a function's domain."""


_TWO_PI = 2.0 * math.pi
_SQRT_TWO_PI = math.sqrt(_TWO_PI)

# Gauss-Legendre half-rules (positive abscissae on [-1, 1]) of order 6, 12, 20.
_GL = {
    6: (
        np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
        np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    ),
    12: (
        np.array([
            0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
            0.5873179542866171, 0.3678314989981802, 0.1252334085114692,
        ]),
        np.array([
            0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
            0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
        ]),
    ),
    20: (
        np.array([
            0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
            0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
            0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
            0.07652652113349733,
        ]),
        np.array([
            0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
            0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
            0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
            0.1527533871307259,
        ]),
    ),
}


def _rule(order):
    x, w = _GL[order]
    # shifted to (0, 2) so that asr * x sweeps (0, 2 * asr)
    return np.concatenate([1.0 - x, 1.0 + x]), np.concatenate([w, w])


_RULES = {k: _rule(k) for k in _GL}


def std_normal_cdf(x):
    """Standard normal CDF.

    Accepts a scalar or array; every entry must be finite.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"std_normal_cdf needs finite input, got {x!r}")
    out = special.ndtr(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open unit interval.

    ``ndtri`` supplies the starting point and one Halley step against
    ``ndtr`` polishes it.
    """
    arr = np.asarray(p, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")
    z = special.ndtri(arr)
    # Halley on the smaller tail keeps the residual well conditioned
    upper = arr > 0.5
    resid = np.where(upper, special.ndtr(-z) - (1.0 - arr), special.ndtr(z) - arr)
    resid = np.where(upper, -resid, resid)
    dens = np.exp(-0.5 * z * z) / _SQRT_TWO_PI
    step = resid / dens
    z = z - step / (1.0 + 0.5 * z * step)
    return float(z) if z.ndim == 0 else z


def _phid(x):
    return special.ndtr(x)


def _bvnu(h, k, r):
    """P(X > h, Y > k) for finite h, k and scalar |r| < 1, r != 0."""
    hk = h * k
    ar = abs(r)
    order = 6 if ar < 0.3 else (12 if ar < 0.75 else 20)
    x, w = _RULES[order]
    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        sn = np.sin(asr * x)
        terms = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
        bvn = terms @ w
        return bvn * asr / _TWO_PI + _phid(-h) * _phid(-k)

    if r < 0:
        k = -k
        hk = -hk
    a2 = (1.0 - r) * (1.0 + r)
    a = math.sqrt(a2)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0
    asr = -(bs / a2 + hk) / 2.0
    bvn = np.where(
        asr > -100.0,
        a * np.exp(np.maximum(asr, -100.0))
        * (1.0 - c * (bs - a2) * (1.0 - d * bs) / 3.0 + c * d * a2 * a2),
        0.0,
    )
    b = np.sqrt(bs)
    sp = _SQRT_TWO_PI * _phid(-b / a)
    tail = np.exp(-np.maximum(hk, -100.0) / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
    bvn = np.where(hk > -100.0, bvn - tail, bvn)

    half = a / 2.0
    xs = (half * x) ** 2  # shape (m,)
    asr_q = -(bs[..., None] / xs + hk[..., None]) / 2.0
    live = asr_q > -100.0
    sp_q = 1.0 + c[..., None] * xs * (1.0 + 5.0 * d[..., None] * xs)
    rs = np.sqrt(1.0 - xs)
    ep = np.exp(-(hk[..., None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
    quad = np.where(live, np.exp(np.maximum(asr_q, -100.0)) * (sp_q - ep), 0.0) @ w
    bvn = (half * quad - bvn) / _TWO_PI

    if r > 0:
        return bvn + _phid(-np.maximum(h, k))
    lower = np.where(h < 0, _phid(k) - _phid(h), _phid(-h) - _phid(-k))
    return np.where(h >= k, -bvn, lower - bvn)


def bvn_cdf(x, y, rho):
    """P(Z1 <= x, Z2 <= y) for a standard bivariate normal with correlation rho.

    ``x`` and ``y`` broadcast against each other and may contain +/-inf;
    ``rho`` is a scalar in [-1, 1].  Scalar inputs give a float back.
    """
    rho = float(rho)
    if not -1.0 <= rho <= 1.0 or math.isnan(rho):
        raise DomainError(f"correlation must lie in [-1, 1], got {rho!r}")
    xa, ya = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.isnan(xa).any() or np.isnan(ya).any():
        raise DomainError("bvn_cdf arguments must not be NaN")
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa).astype(float)
    ya = np.atleast_1d(ya).astype(float)
    out = np.empty(xa.shape)

    px = _phid(xa)
    py = _phid(ya)
    inf_any = np.isinf(xa) | np.isinf(ya)
    if rho == 1.0:
        out[...] = _phid(np.minimum(xa, ya))
    elif rho == -1.0:
        out[...] = np.maximum(0.0, px + py - 1.0)
    elif rho == 0.0:
        out[...] = px * py
    else:
        fin = ~inf_any
        # BVNU works on upper orthants: P(X <= x, Y <= y) = P(-X > -x, -Y > -y)
        out[fin] = _bvnu(-xa[fin], -ya[fin], rho)
        # an infinite limit collapses the integral to a marginal or to zero
        lo = (xa == -np.inf) | (ya == -np.inf)
        out[inf_any] = np.where(
            lo[inf_any], 0.0,
            np.where(xa[inf_any] == np.inf, py[inf_any], px[inf_any]),
        )
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class QmcSpec:
    """Size and randomisation of a two-dimensional Sobol point set."""

    point_count: int
    seed: int = 0
    scramble: bool = True

    def __post_init__(self):
        if int(self.point_count) < 1:
            raise DomainError(f"point_count must be >= 1, got {self.point_count}")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def qmc_normal_pairs(spec: QmcSpec, start: int = 0, count: int | None = None) -> np.ndarray:
    """Standard normal pairs from a (scrambled) 2-D Sobol sequence.

    Returns an array of shape ``(count, 2)`` holding points
    ``start .. start + count - 1`` of the sequence described by ``spec``
    (``count`` defaults to the rest of ``spec.point_count``).  Index ranges
    can be handed to different workers; the union is the same point set.
    In the unscrambled sequence the origin maps to -inf and is skipped.
    """
    if count is None:
        count = spec.point_count - start
    if start < 0 or count < 0 or start + count > spec.point_count:
        raise DomainError(f"range [{start}, {start + count}) outside point set")
    engine = qmc.Sobol(d=2, scramble=spec.scramble, seed=np.random.default_rng(spec.seed))
    skip = start + (0 if spec.scramble else 1)
    if skip:
        engine.fast_forward(skip)
    u = engine.random(count)
    # a scrambled coordinate can still land on 0 exactly
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return special.ndtri(u)
