"""Spherical-harmonic grids, transforms, differentiation and rotation.

A scalar on the unit sphere is represented by coefficients y_n^m of the
orthonormal basis

    Y_nm(theta, phi) = N_nm P_n^m(cos theta) e^{i m phi},
    N_nm = sqrt((2n+1)/(4 pi) (n-m)!/(n+m)!),

with the Condon-Shortley phase inside P_n^m.  The grid couples p+1
Gauss-Legendre colatitudes with 2p+2 equispaced longitudes phi_k = pi k/(p+1),
so the forward transform is exact (to roundoff) for band-limited input of
degree <= p.  Real fields keep the conjugate symmetry
y_n^{-m} = (-1)^m conj(y_n^m); every operation here preserves it.

Coefficient arrays are complex with shape (p+1, 2p+1); column index p+m holds
order m.  All functions are pure; grids, bases and Wigner tables are cached
per order and shared.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

P_MAX = 48


class ShtError(ValueError):
    """Raised for malformed grids, fields or size mismatches."""


# ----------------------------------------------------------------------------
# grid
# ----------------------------------------------------------------------------

class SphGrid:
    """Gauss-Legendre x uniform-longitude grid of order p.

    Colatitudes theta_j = acos(t_j) with t_j the (p+1) Gauss-Legendre nodes
    on [-1,1] ordered north to south; longitudes phi_k = pi k/(p+1) for
    k = 0..2p+1.  ``wcol`` are the Gauss weights (sum 2); ``wmeasure`` is the
    solid-angle weight per node row, wcol * pi/(p+1), so that
    sum_jk wmeasure_j f_jk approximates the integral of f over S^2.
    """

    def __init__(self, p: int):
        if p < 2:
            raise ShtError(f"grid order must be >= 2, got {p}")
        if p > P_MAX:
            raise ShtError(f"grid order {p} exceeds supported maximum {P_MAX}")
        self.p = p
        t, w = np.polynomial.legendre.leggauss(p + 1)
        order = np.argsort(-t)  # t descending: theta ascending from north
        self.ct = t[order]
        self.wcol = w[order]
        self.theta = np.arccos(self.ct)
        self.st = np.sin(self.theta)
        self.phi = np.pi * np.arange(2 * p + 2) / (p + 1)
        self.wmeasure = self.wcol * (np.pi / (p + 1))
        self.shape = (p + 1, 2 * p + 2)
        self.nnodes = self.shape[0] * self.shape[1]

    def __repr__(self):
        return f"SphGrid(p={self.p})"


@lru_cache(maxsize=None)
def get_grid(p: int) -> SphGrid:
    return SphGrid(p)


# ----------------------------------------------------------------------------
# normalized associated Legendre functions
# ----------------------------------------------------------------------------

def legendre_functions(pdeg: int, x: np.ndarray, nderiv: int = 0):
    """Tables of L_n^m(x) = N_nm P_n^m(x) for 0 <= m <= n <= pdeg at nodes x.

    Returns arrays of shape (pdeg+1, pdeg+1, len(x)) indexed [n, m, j];
    entries with m > n are zero.  With nderiv >= 1 the theta-derivatives
    dL/dtheta (and d2L/dtheta2 for nderiv == 2) are returned as well, from
    the order-shift identity

        dL_n^m/dtheta = ( sqrt((n-m)(n+m+1)) L_n^{m+1}
                         - sqrt((n+m)(n-m+1)) L_n^{m-1} ) / 2,

    where L_n^{-1} = -L_n^1.  The recurrences are the fully normalized
    three-term kind, stable far beyond the supported order cap.
    """
    x = np.asarray(x, dtype=float)
    nx = x.shape[0]
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    A, B = _recurrence_tables(pdeg)
    L = np.zeros((pdeg + 1, pdeg + 1, nx))
    L[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, pdeg + 1):
        L[m, m] = -math.sqrt((2 * m + 1) / (2.0 * m)) * s * L[m - 1, m - 1]
    for m in range(0, pdeg):
        L[m + 1, m] = math.sqrt(2 * m + 3.0) * x * L[m, m]
    for n in range(2, pdeg + 1):
        k = n - 1
        L[n, :k] = A[n, :k, None] * x[None, :] * L[n - 1, :k] \
            - B[n, :k, None] * L[n - 2, :k]
    if nderiv == 0:
        return L

    Cup, Clo = _derivative_tables(pdeg)

    def theta_derivative(tab):
        d = np.zeros_like(tab)
        d[:, :pdeg] = 0.5 * Cup[:, :pdeg, None] * tab[:, 1:]
        d[:, 1:] -= 0.5 * Clo[:, 1:, None] * tab[:, :pdeg]
        ns = np.arange(pdeg + 1, dtype=float)
        d[1:, 0] -= 0.5 * (-np.sqrt(ns[1:] * (ns[1:] + 1.0)))[:, None] * tab[1:, 1]
        return d

    dL = theta_derivative(L)
    if nderiv == 1:
        return L, dL
    return L, dL, theta_derivative(dL)


@lru_cache(maxsize=32)
def _recurrence_tables(pdeg: int):
    n = np.arange(pdeg + 1, dtype=float)[:, None]
    m = np.arange(pdeg + 1, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.sqrt((4.0 * n * n - 1.0) / (n * n - m * m))
        B = np.sqrt((2.0 * n + 1.0) * (n - 1.0 + m) * (n - 1.0 - m)
                    / ((2.0 * n - 3.0) * (n * n - m * m)))
    A[~np.isfinite(A)] = 0.0
    B[~np.isfinite(B)] = 0.0
    return A, B


@lru_cache(maxsize=32)
def _derivative_tables(pdeg: int):
    n = np.arange(pdeg + 1, dtype=float)[:, None]
    m = np.arange(pdeg + 1, dtype=float)[None, :]
    Cup = np.sqrt(np.maximum((n - m) * (n + m + 1.0), 0.0))
    Clo = np.sqrt(np.maximum((n + m) * (n - m + 1.0), 0.0)) * (m <= n)
    return Cup, Clo


# ----------------------------------------------------------------------------
# transform tables ("basis"): grid of order pgrid, expansions of degree pdeg
# ----------------------------------------------------------------------------

class SphBasis:
    """Synthesis/analysis tables for degree-pdeg expansions on a pgrid grid."""

    def __init__(self, pgrid: int, pdeg: int):
        self.grid = get_grid(pgrid)
        self.pgrid = pgrid
        self.pdeg = pdeg
        self.L, self.dL, self.d2L = legendre_functions(pdeg, self.grid.ct, nderiv=2)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Grid samples -> coefficients (degree pdeg), real input."""
        g = self.grid
        values = np.asarray(values, dtype=float)
        if values.shape != g.shape:
            raise ShtError(f"sample shape {values.shape} != grid {g.shape}")
        p = self.pdeg
        if p > g.p:
            raise ShtError("analysis degree exceeds grid order")
        fm = np.fft.rfft(values, axis=1) * (np.pi / (g.p + 1))
        c = np.zeros((p + 1, 2 * p + 1), dtype=complex)
        wg = fm[:, :p + 1] * g.wcol[:, None]              # (ncol, m)
        pos = np.einsum("nmj,jm->nm", self.L, wg)
        c[:, p:] = pos
        if p > 0:
            msign = (-1.0) ** np.arange(1, p + 1)
            c[:, p - 1::-1] = msign[None, :] * np.conj(pos[:, 1:])
        return c

    def synthesize(self, coeffs: np.ndarray, dtheta: int = 0, dphi: int = 0) -> np.ndarray:
        """Coefficients -> grid samples; exact derivatives via table choice."""
        p = self.pdeg
        if coeffs.shape != (p + 1, 2 * p + 1):
            raise ShtError(f"coefficient shape {coeffs.shape} != degree {p}")
        if p > self.grid.p + 1:
            raise ShtError("synthesis would alias: use pointwise evaluate()")
        tab = (self.L, self.dL, self.d2L)[dtheta]
        pos = coeffs[:, p:]
        gm = np.einsum("nmj,nm->jm", tab, pos)            # (ncol, m>=0)
        if dphi:
            gm = gm * (1j * np.arange(p + 1))[None, :] ** dphi
        nphi = self.grid.shape[1]
        spec = np.zeros((self.grid.shape[0], nphi // 2 + 1), dtype=complex)
        spec[:, :p + 1] = gm
        return np.fft.irfft(spec, n=nphi, axis=1) * nphi

    def scalar_field(self, values: np.ndarray) -> "SpectralField":
        return SpectralField(self.pdeg, self.analyze(values))


@lru_cache(maxsize=None)
def get_basis(pgrid: int, pdeg: int | None = None) -> SphBasis:
    if pdeg is None:
        pdeg = pgrid
    return SphBasis(pgrid, pdeg)


# ----------------------------------------------------------------------------
# spectral fields
# ----------------------------------------------------------------------------

class SpectralField:
    """Truncated spherical-harmonic expansion of one real scalar."""

    __slots__ = ("p", "c")

    def __init__(self, p: int, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (p + 1, 2 * p + 1):
            raise ShtError(f"coefficient array shape {coeffs.shape} "
                           f"inconsistent with order {p}")
        self.p = p
        self.c = coeffs

    @classmethod
    def zeros(cls, p: int) -> "SpectralField":
        return cls(p, np.zeros((p + 1, 2 * p + 1), dtype=complex))

    @classmethod
    def constant(cls, p: int, value: float) -> "SpectralField":
        f = cls.zeros(p)
        f.c[0, p] = value * math.sqrt(4.0 * math.pi)
        return f

    def copy(self) -> "SpectralField":
        return SpectralField(self.p, self.c.copy())

    def __add__(self, other):
        _check_same(self, other)
        return SpectralField(self.p, self.c + other.c)

    def __sub__(self, other):
        _check_same(self, other)
        return SpectralField(self.p, self.c - other.c)

    def __mul__(self, a: float):
        return SpectralField(self.p, self.c * a)

    __rmul__ = __mul__

    def energy_per_degree(self) -> np.ndarray:
        return np.sum(np.abs(self.c) ** 2, axis=1)

    def mean(self) -> float:
        """Average of the field over the sphere."""
        return float(self.c[0, self.p].real / math.sqrt(4.0 * math.pi))


def _check_same(a: SpectralField, b: SpectralField):
    if a.p != b.p:
        raise ShtError(f"field orders differ: {a.p} vs {b.p}")


# -- public operations --------------------------------------------------------

def forward(values: np.ndarray, grid: SphGrid) -> SpectralField:
    """Project grid samples onto the orthonormal basis (degree = grid order)."""
    return SpectralField(grid.p, get_basis(grid.p).analyze(np.asarray(values, float)))


def inverse(field: SpectralField, grid: SphGrid) -> np.ndarray:
    """Evaluate the truncated expansion at the nodes of ``grid``.

    The grid may be finer or coarser than the field; both directions are
    pointwise exact (band-limited upsampling uses the fast path).
    """
    if grid.p >= field.p:
        return get_basis(grid.p, field.p).synthesize(field.c)
    th, ph = np.meshgrid(grid.theta, grid.phi, indexing="ij")
    return evaluate(field, th, ph)


def differentiate(field: SpectralField, which: str, grid: SphGrid | None = None) -> np.ndarray:
    """Exact derivative of the expansion, sampled on ``grid``.

    ``which`` is one of 'theta', 'phi', 'theta2', 'thetaphi', 'phi2'.
    Theta-derivatives are not band-limited in the Y_nm basis, so the result
    is returned as grid values.
    """
    orders = {"theta": (1, 0), "phi": (0, 1), "theta2": (2, 0),
              "thetaphi": (1, 1), "phi2": (0, 2)}
    if which not in orders:
        raise ShtError(f"unknown derivative kind {which!r}")
    dt, dp = orders[which]
    if grid is None:
        grid = get_grid(field.p)
    if grid.p < field.p:
        th, ph = np.meshgrid(grid.theta, grid.phi, indexing="ij")
        return evaluate(field, th, ph, dtheta=dt, dphi=dp)
    return get_basis(grid.p, field.p).synthesize(field.c, dtheta=dt, dphi=dp)


def resample(field: SpectralField, new_p: int) -> SpectralField:
    """Zero-pad (new_p > p) or truncate (new_p < p) the coefficient set."""
    if new_p < 2:
        raise ShtError("resample target order must be >= 2")
    p = field.p
    if new_p == p:
        return field.copy()
    out = SpectralField.zeros(new_p)
    k = min(p, new_p)
    out.c[:k + 1, new_p - k:new_p + k + 1] = field.c[:k + 1, p - k:p + k + 1]
    return out


# ----------------------------------------------------------------------------
# rotation
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Rotation:
    """ZYZ Euler angles (radians): R = Rz(alpha) Ry(beta) Rz(gamma)."""
    alpha: float
    beta: float
    gamma: float

    def matrix(self) -> np.ndarray:
        return _rz(self.alpha) @ _ry(self.beta) @ _rz(self.gamma)

    def inverse(self) -> "Rotation":
        return Rotation(-self.gamma, -self.beta, -self.alpha)


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _pow_trig(base: float, expo: np.ndarray) -> np.ndarray:
    """base**expo elementwise, exact zeros instead of 0**0 pitfalls."""
    out = np.where(expo == 0, 1.0, np.sign(base) ** expo
                   * np.exp(expo * np.log(np.maximum(abs(base), 1e-320))))
    if abs(base) < 1e-300:
        out = np.where(expo > 0, 0.0, out)
    return out


def _d_row_top(l: int, m: np.ndarray, ch: float, sh: float) -> np.ndarray:
    """d^l_{l,m}: sqrt(C(2l, l-m)) ch^{l+m} (-sh)^{l-m}."""
    logbin = np.array([math.lgamma(2 * l + 1) - math.lgamma(l + k + 1)
                       - math.lgamma(l - k + 1) for k in m])
    return np.exp(0.5 * logbin) * _pow_trig(ch, l + m) * _pow_trig(-sh, l - m)


def _d_row_next(l: int, m: np.ndarray, cb: float, ch: float, sh: float) -> np.ndarray:
    """d^l_{l-1,m} for |m| <= l-1: (l cb - m) sqrt((2l-1)!/((l+m)!(l-m)!)) ch^{l-1+m}(-sh)^{l-1-m}."""
    logf = np.array([0.5 * (math.lgamma(2 * l) - math.lgamma(l + k + 1)
                            - math.lgamma(l - k + 1)) for k in m])
    return (l * cb - m) * np.exp(logf) \
        * _pow_trig(ch, l - 1 + m) * _pow_trig(-sh, l - 1 - m)


@lru_cache(maxsize=512)
def wigner_stack(lmax: int, beta: float) -> tuple:
    """d^l(beta) for l = 0..lmax; each entry indexed [l][p+m' ...] as m=-l..l.

    Convention d^l_{m'm} = <l m'| exp(-i beta Jy) |l m>, rows m' ascending.
    Interior entries follow the stable degree recurrence of Blanco, Florez
    and Bermejo; edge rows use closed forms and the index symmetries.
    """
    cb, sb = math.cos(beta), math.sin(beta)
    ch, sh = math.cos(beta / 2.0), math.sin(beta / 2.0)
    ds = [np.array([[1.0]])]
    if lmax >= 1:
        r2 = math.sqrt(2.0)
        ds.append(np.array([
            [ch * ch, sb / r2, sh * sh],
            [-sb / r2, cb, sb / r2],
            [sh * sh, -sb / r2, ch * ch],
        ]))
    for l in range(2, lmax + 1):
        d = np.zeros((2 * l + 1, 2 * l + 1))
        ms = np.arange(-(l - 1), l)
        mp_, m_ = np.meshgrid(ms, ms, indexing="ij")      # rows m', cols m
        denom = np.sqrt((l * l - mp_ ** 2) * (l * l - m_ ** 2)).astype(float)
        prev = ds[l - 1]
        t1 = (cb - m_ * mp_ / (l * (l - 1.0))) * prev
        pad2 = np.zeros_like(prev)
        pad2[1:-1, 1:-1] = ds[l - 2]
        c2 = np.sqrt(((l - 1.0) ** 2 - mp_ ** 2) * ((l - 1.0) ** 2 - m_ ** 2))
        d[1:-1, 1:-1] = (l * (2.0 * l - 1.0) / denom) * (
            t1 - c2 * pad2 / ((l - 1.0) * (2.0 * l - 1.0)))
        mcol = np.arange(-l, l + 1)
        top = _d_row_top(l, mcol, ch, sh)
        d[2 * l, :] = top
        nxt = _d_row_next(l, ms, cb, ch, sh)
        d[2 * l - 1, 1:-1] = nxt
        d[2 * l - 1, 2 * l] = -top[2 * l - 1]             # d_{l-1,l} = -d_{l,l-1}
        d[2 * l - 1, 0] = top[1]                          # d_{l-1,-l} = d_{l,-(l-1)}
        d[0, :] = top[::-1] * (-1.0) ** (l + mcol)
        d[1, :] = d[2 * l - 1, ::-1] * (-1.0) ** (l - 1 + mcol)
        rows = np.arange(-(l - 2), l - 1)                 # remaining holes
        ridx = rows + l
        d[ridx, 2 * l] = (-1.0) ** (l - rows) * top[ridx]
        d[ridx, 0] = top[l - rows]
        ds.append(d)
    return tuple(ds)


def rotate(field: SpectralField, rot: Rotation) -> SpectralField:
    """Coefficients of the actively rotated function x -> f(R^{-1} x).

    Degree blocks do not mix; pointwise, inverse(rotate(f))(x) equals
    inverse(f)(R^{-1} x).
    """
    p = field.p
    ds = wigner_stack(p, float(rot.beta))
    out = SpectralField.zeros(p)
    mfull = np.arange(-p, p + 1)
    ph_gamma = np.exp(-1j * mfull * rot.gamma)
    ph_alpha = np.exp(-1j * mfull * rot.alpha)
    for l in range(p + 1):
        sl = slice(p - l, p + l + 1)
        block = field.c[l, sl] * ph_gamma[sl]
        out.c[l, sl] = ph_alpha[sl] * (ds[l] @ block)
    return out


# ----------------------------------------------------------------------------
# off-grid evaluation
# ----------------------------------------------------------------------------

def evaluate(field: SpectralField, theta, phi, dtheta: int = 0, dphi: int = 0):
    """Pointwise evaluation of the expansion (or a derivative) anywhere."""
    out = evaluate_many([field], theta, phi, derivs=((dtheta, dphi),))
    return out[0][0]


def evaluate_many(fields, theta, phi, derivs=((0, 0),)):
    """Evaluate several fields (and derivative orders) at scattered points.

    Shares the associated-Legendre tables across all fields and requested
    (dtheta, dphi) pairs; returns a list over derivs of lists over fields.
    """
    theta = np.atleast_1d(np.asarray(theta, float))
    phi = np.atleast_1d(np.asarray(phi, float))
    if theta.shape != phi.shape:
        raise ShtError("theta and phi must have matching shapes")
    p = max(f.p for f in fields)
    if any(f.p != p for f in fields):
        raise ShtError("evaluate_many requires a common field order")
    x = np.cos(theta.ravel())
    maxdt = max(d[0] for d in derivs)
    tabs = legendre_functions(p, x, nderiv=maxdt)
    if maxdt == 0:
        tabs = (tabs,)
    m = np.arange(p + 1)
    ph = np.exp(1j * np.outer(phi.ravel(), m))
    pos = np.stack([f.c[:, p:] for f in fields])
    out = []
    for (dt, dp) in derivs:
        tabm = np.moveaxis(tabs[dt], 1, 0)                # (m, n, j)
        gm = np.moveaxis(np.moveaxis(pos, 2, 0) @ tabm, 0, -1)  # (f, j, m)
        if dp:
            gm = gm * ((1j * m)[None, None, :] ** dp)
        vals = (gm[:, :, 0] * ph[None, :, 0]).real \
            + 2.0 * np.einsum("fjm,jm->fj", gm[:, :, 1:].real, ph[:, 1:].real) \
            - 2.0 * np.einsum("fjm,jm->fj", gm[:, :, 1:].imag, ph[:, 1:].imag)
        out.append([vals[i].reshape(theta.shape) for i in range(len(fields))])
    return out


# ----------------------------------------------------------------------------
# small helpers shared across modules
# ----------------------------------------------------------------------------

def legendre_poly_sum(pmax: int, x: np.ndarray) -> np.ndarray:
    """sum_{n=0}^{pmax} P_n(x) by the ordinary Legendre recurrence."""
    x = np.asarray(x, float)
    pm1 = np.ones_like(x)
    tot = pm1.copy()
    if pmax == 0:
        return tot
    pn = x.copy()
    tot = tot + pn
    for n in range(1, pmax):
        pnext = ((2 * n + 1) * x * pn - n * pm1) / (n + 1)
        pm1, pn = pn, pnext
        tot = tot + pn
    return tot


def pack_real(c: np.ndarray, p: int) -> np.ndarray:
    """Real degrees of freedom of a conjugate-symmetric coefficient set."""
    parts = [c[:, p].real]
    for m in range(1, p + 1):
        col = c[m:, p + m]
        parts.append(col.real)
        parts.append(col.imag)
    return np.concatenate(parts)


def unpack_real(v: np.ndarray, p: int) -> np.ndarray:
    """Inverse of pack_real; restores m < 0 via conjugate symmetry."""
    c = np.zeros((p + 1, 2 * p + 1), dtype=complex)
    c[:, p] = v[:p + 1]
    k = p + 1
    for m in range(1, p + 1):
        nn = p + 1 - m
        re = v[k:k + nn]
        im = v[k + nn:k + 2 * nn]
        k += 2 * nn
        c[m:, p + m] = re + 1j * im
        c[m:, p - m] = (-1.0) ** m * (re - 1j * im)
    return c


def n_real_dof(p: int) -> int:
    return (p + 1) ** 2
