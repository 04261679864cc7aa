"""Layer-potential quadrature over spectral drop surfaces.

Three regimes:

* regular targets: the Gauss-Legendre x trapezoid product rule, applied to
  integrand times area element, with a (possibly upsampled) source grid;
* on-surface targets: pole rotation plus modified colatitude weights.  The
  expansions of position and density are rotated so the target sits at the
  parametrization north pole, where the weights

      w_j_mod = w_j * 2 sin(theta_j/2) * sum_{n<=p} P_n(cos theta_j)

  integrate smooth/|x0 - x| products with spectral accuracy; the Stokes
  kernels are handled as full integrands, their 1/r factor carried by the
  same weights;
* nearly singular targets (off-surface, within about one grid spacing):
  evaluate on the surface anchor and along a line of well-separated points,
  then Lagrange-interpolate back to the target.

Matrices returned by :class:`DropOperators` act on flattened base-grid values
(vector densities component-major), with the band-limited Galerkin projection
built into the operator.  Kernel conventions: xhat = x0 - x,
G = I/r + xhat xhat/r^3, T.n = -6 xhat xhat (xhat.n)/r^5, Laplace single layer
1/(4 pi r), adjoint double layer (xhat.n(x0))/(4 pi r^3); all layer operators
carry the 1/(4 pi) prefactor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from . import sht
from .sht import get_basis, get_grid, legendre_poly_sum, wigner_stack
from .surface import DropState, SurfaceGeometry, GeometryError


class QuadratureError(RuntimeError):
    pass


FOURPI = 4.0 * math.pi


# ----------------------------------------------------------------------------
# regular rule
# ----------------------------------------------------------------------------

def integrate_regular(geom: SurfaceGeometry, values: np.ndarray) -> float:
    """Spectrally accurate integral of smooth grid samples over the surface."""
    return geom.integrate(values)


@lru_cache(maxsize=64)
def _mod_weights(pq: int) -> np.ndarray:
    """Modified colatitude weights (per row) of the order-pq singular rule."""
    g = get_grid(pq)
    lsum = legendre_poly_sum(pq, g.ct)
    return g.wmeasure / g.st * 2.0 * np.sin(g.theta / 2.0) * lsum


@lru_cache(maxsize=32)
def _upsample_matrix(p: int, pq: int) -> np.ndarray:
    """Dense map from base-grid values to band-limited values on the pq grid."""
    gb, gq = get_grid(p), get_grid(pq)
    Lb = get_basis(p).L                      # (p+1, p+1, ncolb)
    Lq = get_basis(pq, p).L                  # (p+1, p+1, ncolq)
    km = np.einsum("nmq,nmj->qjm", Lq, Lb)   # (ncolq, ncolb, m)
    wm = np.full(p + 1, 2.0)
    wm[0] = 1.0
    dphi = gq.phi[:, None] - gb.phi[None, :]
    cosm = np.cos(np.arange(p + 1)[None, None, :] * dphi[:, :, None])
    U = np.einsum("qjm,m,ckm->qcjk", km, wm, cosm)
    U = U * gb.wmeasure[None, None, :, None]
    return U.reshape(gq.nnodes, gb.nnodes)


def _batched_legendre_apply(tab: np.ndarray, cpos: np.ndarray) -> np.ndarray:
    """einsum('nmj,...nm->...jm') via per-order batched matmul (BLAS).

    tab: (n, m, j); cpos: (..., n, m).  Returns (..., j, m).
    """
    lead = cpos.shape[:-2]
    nn, mm, jj = tab.shape
    A = np.ascontiguousarray(np.moveaxis(tab, 1, 0))          # (m, n, j)
    B = cpos.reshape(-1, nn, mm)
    Bm = np.ascontiguousarray(np.moveaxis(B, 2, 0))           # (m, x, n)
    out = Bm @ A                                              # (m, x, j)
    return np.moveaxis(out, 0, -1).reshape(lead + (jj, mm))


def _batched_legendre_adjoint(tab: np.ndarray, gjm: np.ndarray) -> np.ndarray:
    """einsum('nmj,...jm->...nm') via per-order batched matmul.

    tab: (n, m, j); gjm: (..., j, m).  Returns (..., n, m).
    """
    lead = gjm.shape[:-2]
    nn, mm, jj = tab.shape
    A = np.ascontiguousarray(np.moveaxis(tab, 1, 0).transpose(0, 2, 1))  # (m, j, n)
    G = gjm.reshape(-1, jj, mm)
    Gm = np.ascontiguousarray(np.moveaxis(G, 2, 0))           # (m, x, j)
    out = Gm @ A                                              # (m, x, n)
    return np.moveaxis(out, 0, -1).reshape(lead + (nn, mm))


# ----------------------------------------------------------------------------
# kernels (xhat = x0 - x)
# ----------------------------------------------------------------------------

def _stokeslet(xhat: np.ndarray, r: np.ndarray) -> np.ndarray:
    """G_ab/(4 pi), shape (..., 3, 3); xhat shape (..., 3)."""
    r3 = r ** 3
    out = np.einsum("...a,...b->...ab", xhat, xhat) / r3[..., None, None]
    idx = np.arange(3)
    out[..., idx, idx] += 1.0 / r[..., None]
    return out / FOURPI


def _stresslet_n(xhat: np.ndarray, r: np.ndarray, nsrc: np.ndarray) -> np.ndarray:
    """(T.n)_ab/(4 pi) = -6 xhat_a xhat_b (xhat.n)/(4 pi r^5)."""
    xn = np.sum(xhat * nsrc, axis=-1)
    scale = -6.0 * xn / (FOURPI * r ** 5)
    return np.einsum("...,...a,...b->...ab", scale, xhat, xhat)


# ----------------------------------------------------------------------------
# per-drop singular operators
# ----------------------------------------------------------------------------

KINDS = ("lap_sl", "lap_dl_adj", "stokes_sl", "stokes_dl")


class DropOperators:
    """Singular layer-potential machinery bound to one drop configuration.

    Dense matrices (built on demand, cached) map flattened base-grid density
    values to on-surface potential values at every base node.  The density is
    band-limited to the state's order inside the operator, matching the
    Galerkin treatment of the solves.
    """

    def __init__(self, state: DropState, upsample: float = 2):
        self.state = state
        self.p = state.p
        self.pq = min(max(int(round(upsample * state.p)), state.p), sht.P_MAX)
        self.base = get_grid(self.p)
        self.qgrid = get_grid(self.pq)
        self.N = self.base.nnodes
        bgeom = SurfaceGeometry(state, self.base)
        self.X0 = bgeom.X.reshape(3, -1).T                # (N, 3)
        self.n0 = bgeom.n.reshape(3, -1).T
        self.pos_c = np.stack([f.c for f in state.position_fields()])
        self._mats: dict = {}
        self._rowgeo: dict = {}
        self._bq = get_basis(self.pq, self.p)
        self._bbase = get_basis(self.p)
        self._phase = np.exp(1j * np.outer(self.base.phi,
                                           np.arange(-self.p, self.p + 1)))
        self._wmod = _mod_weights(self.pq)

    # -- rotation helpers -----------------------------------------------------

    def _rotate_row(self, coeffs: np.ndarray, j: int) -> np.ndarray:
        """Rotate coefficient sets so each node (j, k) becomes the north pole.

        coeffs: (nf, p+1, 2p+1).  Returns (nf, nk, p+1, 2p+1); composition is
        the phase e^{i m phi_k} followed by the transposed Wigner block of
        the row colatitude.
        """
        p = self.p
        ds = wigner_stack(p, float(self.base.theta[j]))
        nf = coeffs.shape[0]
        nk = self.base.shape[1]
        out = np.zeros((nf, nk, p + 1, 2 * p + 1), dtype=complex)
        for l in range(p + 1):
            sl = slice(p - l, p + l + 1)
            tmp = coeffs[:, None, l, sl] * self._phase[None, :, sl]
            out[:, :, l, sl] = tmp @ ds[l]
        return out

    def _synth_rows(self, crot: np.ndarray, dtheta: int = 0, dphi: int = 0) -> np.ndarray:
        """Synthesize rotated (real-field) coefficients on the quad grid."""
        p = self.p
        tab = (self._bq.L, self._bq.dL, self._bq.d2L)[dtheta]
        gm = _batched_legendre_apply(tab, crot[..., p:])
        if dphi:
            gm = gm * (1j * np.arange(p + 1)) ** dphi
        nphi = self.qgrid.shape[1]
        spec = np.zeros(gm.shape[:-1] + (nphi // 2 + 1,), dtype=complex)
        spec[..., :p + 1] = gm
        return np.fft.irfft(spec, n=nphi, axis=-1) * nphi

    def _row_geometry(self, j: int):
        """Rotated surface data for all targets in base-grid row j (cached)."""
        if j in self._rowgeo:
            return self._rowgeo[j]
        crot = self._rotate_row(self.pos_c, j)            # (3, nk, ...)
        X = self._synth_rows(crot)                        # (3, nk, ncq, nfq)
        Xt = self._synth_rows(crot, dtheta=1)
        Xp = self._synth_rows(crot, dphi=1)
        cr = np.cross(Xt, Xp, axis=0)
        W = np.sqrt(np.sum(cr * cr, axis=0))
        nsrc = cr / W
        self._rowgeo[j] = (X, W, nsrc)
        return self._rowgeo[j]

    def _kernel_b(self, kind: str, j: int, X, W, nsrc):
        """Weighted kernel factor arrays for the transposed pipeline.

        Shapes: (nk, ncq, nfq) for Laplace kinds, (nk, 3, 3, ncq, nfq) for
        Stokes kinds.  The modified weights and area element are folded in.
        """
        nk = self.base.shape[1]
        x0 = self.X0.reshape(self.base.shape[0], nk, 3)[j]       # (nk, 3)
        xhat = x0[:, :, None, None] - X.transpose(1, 0, 2, 3)    # (nk, 3, ncq, nfq)
        r = np.sqrt(np.sum(xhat * xhat, axis=1))
        wq = self._wmod[None, :, None] * W                       # (nk, ncq, nfq)
        if kind == "lap_sl":
            return wq / (FOURPI * r)
        if kind == "lap_dl_adj":
            n0 = self.n0.reshape(self.base.shape[0], nk, 3)[j]
            xn = np.einsum("kaqf,ka->kqf", xhat, n0)
            return wq * xn / (FOURPI * r ** 3)
        if kind == "stokes_sl":
            G = _stokeslet(xhat.transpose(0, 2, 3, 1), r)        # (nk,ncq,nfq,3,3)
            return G.transpose(0, 3, 4, 1, 2) * wq[:, None, None, :, :]
        if kind == "stokes_dl":
            Tn = _stresslet_n(xhat.transpose(0, 2, 3, 1), r,
                              nsrc.transpose(1, 2, 3, 0))
            return Tn.transpose(0, 3, 4, 1, 2) * wq[:, None, None, :, :]
        raise QuadratureError(f"unknown kernel kind {kind!r}")

    # -- adjoint pipeline: weighted kernel data -> matrix rows ------------------

    def _rows_from_b(self, b: np.ndarray, j: int) -> np.ndarray:
        """Transpose of (analyze -> rotate -> synthesize -> weighted sum).

        b: (..., nk, ncq, nfq) -> (..., nk, N) real matrix rows.  The target
        index k must be the third-from-last axis (phases attach to it).
        """
        p = self.p
        fm = np.fft.fft(b, axis=-1)                       # sum_q b e^{-i m phi_q}
        posm = np.conj(fm[..., :p + 1])                   # sum_q b e^{+i m phi_q}
        negm = fm[..., 1:p + 1]                           # m = -1..-p (in order)
        L = self._bq.L
        wpos = _batched_legendre_adjoint(L, posm)
        wneg = _batched_legendre_adjoint(L[:, 1:], negm)
        sgn = (-1.0) ** np.arange(1, p + 1)
        wneg = wneg * sgn[None, :]
        wfull = np.concatenate([wneg[..., ::-1], wpos], axis=-1)   # m = -p..p
        ds = wigner_stack(p, float(self.base.theta[j]))
        wr = np.zeros_like(wfull)
        for l in range(p + 1):
            sl = slice(p - l, p + l + 1)
            wr[..., l, sl] = wfull[..., l, sl] @ ds[l].T
        wr = wr * self._phase[:, None, :]                 # target axis is -3
        # A^T: row_q = mu_q Re( sum_nm conj(Y_nm(q)) w_nm ).  With w
        # conjugate-symmetric this equals the plain synthesis of conj(w).
        wr = np.conj(wr)
        Lb = self._bbase.L
        gm_pos = _batched_legendre_apply(Lb, wr[..., p:])
        cneg = wr[..., :p][..., ::-1] * sgn[None, :]       # m = -1..-p entries
        gm_neg = _batched_legendre_apply(Lb[:, 1:], cneg)
        nphib = self.base.shape[1]
        spec = np.zeros(wr.shape[:-2] + (self.base.shape[0], nphib), dtype=complex)
        spec[..., :p + 1] = gm_pos
        spec[..., nphib - p:] = gm_neg[..., ::-1]
        vals = np.fft.ifft(spec, axis=-1) * nphib
        rows = vals.real * self.base.wmeasure[:, None]
        return rows.reshape(rows.shape[:-2] + (self.N,))

    # -- matrix construction ----------------------------------------------------

    def matrix(self, kind: str) -> np.ndarray:
        if kind not in self._mats:
            self.build([kind])
        return self._mats[kind]

    def build(self, kinds) -> None:
        kinds = [k for k in kinds if k not in self._mats]
        if not kinds:
            return
        for k in kinds:
            if k not in KINDS:
                raise QuadratureError(f"unknown kernel kind {k!r}")
        scalar = {k: np.zeros((self.N, self.N)) for k in kinds if k.startswith("lap")}
        tensor = {k: np.zeros((3 * self.N, 3 * self.N)) for k in kinds
                  if k.startswith("stokes")}
        nk = self.base.shape[1]
        for j in range(self.base.shape[0]):
            X, W, nsrc = self._row_geometry(j)
            i0 = j * nk
            for k in scalar:
                b = self._kernel_b(k, j, X, W, nsrc)
                scalar[k][i0:i0 + nk] = self._rows_from_b(b, j)
            for k in tensor:
                b = self._kernel_b(k, j, X, W, nsrc)      # (nk, 3, 3, ncq, nfq)
                rows = self._rows_from_b(b.transpose(1, 2, 0, 3, 4), j)
                for a in range(3):
                    for c in range(3):
                        tensor[k][a * self.N + i0:a * self.N + i0 + nk,
                                  c * self.N:(c + 1) * self.N] = rows[a, c]
        self._mats.update(scalar)
        self._mats.update(tensor)

    # -- applications -------------------------------------------------------------

    def apply_scalar(self, kind: str, density: np.ndarray) -> np.ndarray:
        """Matrix-backed scalar layer potential at all base nodes (flat)."""
        return self.matrix(kind) @ np.ravel(density)

    def apply_stokes(self, kind: str, density: np.ndarray) -> np.ndarray:
        """Vector layer potential; density (3, ntheta, nphi) -> (3, N)."""
        v = density.reshape(3, -1).ravel()
        out = self.matrix(kind) @ v
        return out.reshape(3, self.N)

    def apply_stokes_direct(self, kind: str, density_c: np.ndarray) -> np.ndarray:
        """Matrix-free Stokes layer apply for a single density.

        ``density_c``: stacked coefficient sets (3, p+1, 2p+1).  Streams the
        row pipeline once (3 field rotations instead of the 9 adjoint passes
        a matrix build needs) and contracts the kernels without materializing
        the 3x3 tensors; used when one apply per geometry suffices, e.g. the
        single-layer forcing at viscosity ratio 1.
        """
        nk = self.base.shape[1]
        ncol = self.base.shape[0]
        out = np.zeros((3, self.N))
        for j in range(ncol):
            X, W, nsrc = self._row_geometry(j)
            crot = self._rotate_row(density_c, j)
            dens = self._synth_rows(crot)                 # (3, nk, ncq, nfq)
            x0 = self.X0.reshape(ncol, nk, 3)[j]
            xhat = x0.T[:, :, None, None] - X             # (3, nk, ncq, nfq)
            r = np.sqrt(np.sum(xhat * xhat, axis=0))
            wq = self._wmod[None, :, None] * W
            xd = np.sum(xhat * dens, axis=0)
            if kind == "stokes_sl":
                t1 = np.sum((wq / r)[None] * dens, axis=(2, 3))
                t2 = np.sum((wq * xd / r ** 3)[None] * xhat, axis=(2, 3))
                val = (t1 + t2) / FOURPI
            elif kind == "stokes_dl":
                xn = np.sum(xhat * nsrc, axis=0)
                scale = -6.0 * wq * xd * xn / (FOURPI * r ** 5)
                val = np.sum(scale[None] * xhat, axis=(2, 3))
            else:
                raise QuadratureError(f"direct apply undefined for {kind!r}")
            out[:, j * nk:(j + 1) * nk] = val
        return out

    def apply_scalar_direct(self, kind: str, density_c: np.ndarray) -> np.ndarray:
        """Matrix-free scalar layer apply (one density, one pass)."""
        nk = self.base.shape[1]
        out = np.zeros(self.N)
        for j in range(self.base.shape[0]):
            X, W, nsrc = self._row_geometry(j)
            crot = self._rotate_row(density_c[None], j)
            dens = self._synth_rows(crot)[0]              # (nk, ncq, nfq)
            b = self._kernel_b(kind, j, X, W, nsrc)
            out[j * nk:(j + 1) * nk] = np.einsum("kqf,kqf->k", b, dens)
        return out


# ----------------------------------------------------------------------------
# off-grid (arbitrary surface point) singular evaluation
# ----------------------------------------------------------------------------

def _rotate_fields(coeffs: np.ndarray, theta: float, phi: float) -> np.ndarray:
    """Rotate coefficient stacks so surface point (theta, phi) -> north pole."""
    p = coeffs.shape[-2] - 1
    ds = wigner_stack(p, float(theta))
    m = np.arange(-p, p + 1)
    ph = np.exp(1j * m * phi)
    out = np.zeros_like(coeffs)
    for l in range(p + 1):
        sl = slice(p - l, p + l + 1)
        out[..., l, sl] = (coeffs[..., l, sl] * ph[sl]) @ ds[l]
    return out


def _synth_stack(crot, bq, qg, dtheta=0, dphi=0):
    p = bq.pdeg
    tab = (bq.L, bq.dL, bq.d2L)[dtheta]
    gm = np.einsum("nmj,...nm->...jm", tab, crot[..., p:])
    if dphi:
        gm = gm * (1j * np.arange(p + 1)) ** dphi
    nphi = qg.shape[1]
    spec = np.zeros(gm.shape[:-1] + (nphi // 2 + 1,), dtype=complex)
    spec[..., :p + 1] = gm
    return np.fft.irfft(spec, n=nphi, axis=-1) * nphi


def _offgrid_normal(state: DropState, theta: float, phi: float) -> np.ndarray:
    ta, pa = np.array([theta]), np.array([phi])
    Xt = np.array([sht.evaluate(f, ta, pa, dtheta=1)[0] for f in state.position_fields()])
    Xp = np.array([sht.evaluate(f, ta, pa, dphi=1)[0] for f in state.position_fields()])
    cr = np.cross(Xt, Xp)
    nn = np.linalg.norm(cr)
    if nn < 1e-9 * float(Xt @ Xt):
        # parametrization pole: Xp degenerates; span the tangent plane with
        # two theta-tangents a quarter turn apart (orientation flips south)
        pa2 = np.array([phi + math.pi / 2.0])
        Xt2 = np.array([sht.evaluate(f, ta, pa2, dtheta=1)[0]
                        for f in state.position_fields()])
        cr = np.cross(Xt, Xt2)
        if theta > math.pi / 2.0:
            cr = -cr
        nn = np.linalg.norm(cr)
        if nn == 0.0:
            raise GeometryError("degenerate tangent plane at off-grid point")
    return cr / nn


def singular_eval(state: DropState, density, theta: float, phi: float,
                  kernel: str, upsample: float = 2):
    """Layer potential at the on-surface point (theta, phi) of ``state``.

    ``density``: SpectralField for the Laplace kernels, or a sequence of
    three SpectralFields for the Stokes kernels.  Serves off-grid targets
    (near-zone anchors); grid targets go through :class:`DropOperators`.
    """
    p = state.p
    pq = min(max(int(round(upsample * p)), p), sht.P_MAX)
    bq = get_basis(pq, p)
    qg = get_grid(pq)
    pos_c = np.stack([f.c for f in state.position_fields()])
    if kernel.startswith("stokes"):
        dens_c = np.stack([f.c for f in density])
        stack = np.concatenate([pos_c, dens_c])
    else:
        stack = np.concatenate([pos_c, density.c[None]])
    rot = _rotate_fields(stack, theta, phi)
    vals = _synth_stack(rot, bq, qg)
    X = vals[:3]
    dens = vals[3:]
    Xt = _synth_stack(rot[:3], bq, qg, dtheta=1)
    Xp = _synth_stack(rot[:3], bq, qg, dphi=1)
    cr = np.cross(Xt, Xp, axis=0)
    W = np.sqrt(np.sum(cr * cr, axis=0))
    nsrc = cr / W
    x0 = np.array([sht.evaluate(f, np.array([theta]), np.array([phi]))[0]
                   for f in state.position_fields()])
    xhat = x0[:, None, None] - X
    r = np.sqrt(np.sum(xhat * xhat, axis=0))
    wq = _mod_weights(pq)[:, None] * W
    if kernel == "lap_sl":
        return float(np.sum(wq * dens[0] / (FOURPI * r)))
    if kernel == "lap_dl_adj":
        n0 = _offgrid_normal(state, theta, phi)
        xn = np.einsum("aqf,a->qf", xhat, n0)
        return float(np.sum(wq * dens[0] * xn / (FOURPI * r ** 3)))
    if kernel == "lap_grad":
        return np.sum(wq * dens[0] / (FOURPI * r ** 3) * xhat, axis=(1, 2))
    if kernel == "stokes_sl":
        G = _stokeslet(np.moveaxis(xhat, 0, -1), r)
        return np.einsum("qfab,bqf,qf->a", G, dens, wq)
    if kernel == "stokes_dl":
        Tn = _stresslet_n(np.moveaxis(xhat, 0, -1), r, np.moveaxis(nsrc, 0, -1))
        return np.einsum("qfab,bqf,qf->a", Tn, dens, wq)
    raise QuadratureError(f"unknown kernel {kernel!r}")


def singular_rows(state: DropState, theta: float, phi: float, kernel: str,
                  upsample: float = 2) -> np.ndarray:
    """Matrix row(s) of the singular rule at an arbitrary surface point.

    Returns (N,) for Laplace kernels or (3, 3N) for Stokes kernels, acting on
    flattened base-grid values like the :class:`DropOperators` matrices.
    Row dotted with density values reproduces :func:`singular_eval`.
    """
    p = state.p
    pq = min(max(int(round(upsample * p)), p), sht.P_MAX)
    bq = get_basis(pq, p)
    qg = get_grid(pq)
    base = get_grid(p)
    N = base.nnodes
    pos_c = np.stack([f.c for f in state.position_fields()])
    rot = _rotate_fields(pos_c, theta, phi)
    X = _synth_stack(rot, bq, qg)
    Xt = _synth_stack(rot, bq, qg, dtheta=1)
    Xp = _synth_stack(rot, bq, qg, dphi=1)
    cr = np.cross(Xt, Xp, axis=0)
    W = np.sqrt(np.sum(cr * cr, axis=0))
    nsrc = cr / W
    x0 = np.array([sht.evaluate(f, np.array([theta]), np.array([phi]))[0]
                   for f in state.position_fields()])
    xhat = x0[:, None, None] - X
    r = np.sqrt(np.sum(xhat * xhat, axis=0))
    wq = _mod_weights(pq)[:, None] * W
    if kernel == "lap_sl":
        b = (wq / (FOURPI * r))[None]
    elif kernel == "lap_dl_adj":
        n0 = _offgrid_normal(state, theta, phi)
        b = (wq * np.einsum("aqf,a->qf", xhat, n0) / (FOURPI * r ** 3))[None]
    elif kernel == "lap_grad":
        b = wq[None] * xhat / (FOURPI * r ** 3)           # (3, ncq, nfq)
    elif kernel in ("stokes_sl", "stokes_dl"):
        if kernel == "stokes_sl":
            K = _stokeslet(np.moveaxis(xhat, 0, -1), r)
        else:
            K = _stresslet_n(np.moveaxis(xhat, 0, -1), r, np.moveaxis(nsrc, 0, -1))
        b = np.moveaxis(K, (-2, -1), (0, 1)) * wq[None, None]   # (3, 3, ncq, nfq)
    else:
        raise QuadratureError(f"unknown kernel {kernel!r}")
    rows = _adjoint_rows_offgrid(b, state, theta, phi, bq, qg)
    if kernel.startswith("lap"):
        return rows[0] if kernel != "lap_grad" else rows
    out = np.zeros((3, 3 * N))
    for a in range(3):
        for c in range(3):
            out[a, c * N:(c + 1) * N] = rows[a, c]
    return out


def _adjoint_rows_offgrid(b: np.ndarray, state: DropState, theta: float,
                          phi: float, bq, qg) -> np.ndarray:
    """Transpose pipeline for a single anchor rotation; b (..., ncq, nfq)."""
    p = state.p
    base = get_grid(p)
    fm = np.fft.fft(b, axis=-1)
    posm = np.conj(fm[..., :p + 1])
    negm = fm[..., 1:p + 1]
    wpos = np.einsum("nmj,...jm->...nm", bq.L, posm)
    wneg = np.einsum("nmj,...jm->...nm", bq.L[:, 1:], negm)
    sgn = (-1.0) ** np.arange(1, p + 1)
    wneg = wneg * sgn[None, :]
    wfull = np.concatenate([wneg[..., ::-1], wpos], axis=-1)
    ds = wigner_stack(p, float(theta))
    ph = np.exp(1j * np.arange(-p, p + 1) * phi)
    wr = np.zeros_like(wfull)
    for l in range(p + 1):
        sl = slice(p - l, p + l + 1)
        wr[..., l, sl] = (wfull[..., l, sl] @ ds[l].T) * ph[sl]
    wr = np.conj(wr)
    Lb = get_basis(p).L
    gm_pos = np.einsum("nmj,...nm->...jm", Lb, wr[..., p:])
    cneg = wr[..., :p][..., ::-1] * sgn[None, :]
    gm_neg = np.einsum("nmj,...nm->...jm", Lb[:, 1:], cneg)
    nphib = base.shape[1]
    spec = np.zeros(wr.shape[:-2] + (base.shape[0], nphib), dtype=complex)
    spec[..., :p + 1] = gm_pos
    spec[..., nphib - p:] = gm_neg[..., ::-1]
    vals = np.fft.ifft(spec, axis=-1) * nphib
    rows = vals.real * base.wmeasure[:, None]
    return rows.reshape(rows.shape[:-2] + (base.nnodes,))


def point_eval_row(p: int, theta: float, phi: float) -> np.ndarray:
    """Row evaluating the band-limited interpolant of base-grid values."""
    base = get_grid(p)
    Lpt = sht.legendre_functions(p, np.array([math.cos(theta)]))[:, :, 0]
    Lb = get_basis(p).L
    km = np.einsum("nm,nmj->jm", Lpt, Lb)
    wm = np.full(p + 1, 2.0)
    wm[0] = 1.0
    cosm = np.cos(np.arange(p + 1)[None, :] * (phi - base.phi[:, None]))
    row = np.einsum("jm,m,km->jk", km, wm, cosm) * base.wmeasure[:, None]
    return row.ravel()


# ----------------------------------------------------------------------------
# regular (well-separated) evaluation
# ----------------------------------------------------------------------------

def eval_regular(geom: SurfaceGeometry, density_values, targets: np.ndarray,
                 kernel: str):
    """All-pairs kernel quadrature from a (typically upsampled) source grid.

    ``density_values``: grid scalar for Laplace kernels, (3, ...) for Stokes.
    ``targets``: (M, 3).  Returns (M,) or (M, 3).
    """
    src = geom.X.reshape(3, -1).T                          # (Nq, 3)
    w = (geom.grid.wmeasure[:, None] / geom.grid.st[:, None] * geom.W).ravel()
    xhat = targets[:, None, :] - src[None, :, :]
    r = np.sqrt(np.sum(xhat * xhat, axis=2))
    if np.any(r == 0.0):
        raise QuadratureError("regular evaluation hit a source node exactly")
    if kernel == "lap_sl":
        d = np.ravel(density_values)
        return (1.0 / FOURPI) * ((w * d)[None, :] / r).sum(axis=1)
    if kernel == "lap_grad":
        d = np.ravel(density_values)
        return np.einsum("mq,mqa->ma", (w * d)[None, :] / (FOURPI * r ** 3), xhat)
    if kernel == "stokes_sl":
        d = density_values.reshape(3, -1)
        G = _stokeslet(xhat, r)
        return np.einsum("mqab,bq,q->ma", G, d, w)
    if kernel == "stokes_dl":
        d = density_values.reshape(3, -1)
        ns = geom.n.reshape(3, -1).T
        Tn = _stresslet_n(xhat, r, ns[None, :, :])
        return np.einsum("mqab,bq,q->ma", Tn, d, w)
    raise QuadratureError(f"unknown kernel {kernel!r}")


def lap_dl_adj_regular(geom: SurfaceGeometry, density_values, targets, tnormals):
    """Adjoint Laplace double layer at well-separated targets."""
    grad = eval_regular(geom, density_values, targets, "lap_grad")
    return np.sum(grad * tnormals, axis=1)


# ----------------------------------------------------------------------------
# nearly singular evaluation
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class NearEvalPlan:
    """Line-interpolation settings for nearly singular targets.

    Distances are in units of the local grid spacing h.  The first node is
    the on-surface anchor; the remaining n_lag - 1 nodes sit from d_near out
    to ``reach`` along the approach line, outside the near zone.
    """
    d_near: float = 1.0
    m_up: int = 4
    n_lag: int = 8
    reach: float = 3.0

    def __post_init__(self):
        if self.n_lag < 4:
            raise QuadratureError("near-zone interpolation needs n_lag >= 4")
        if self.reach <= self.d_near:
            raise QuadratureError("interpolation reach must exceed d_near")


def grid_spacing(state: DropState) -> float:
    """Max local grid spacing h used to scale the near-zone thresholds."""
    geom = SurfaceGeometry(state, get_grid(state.p))
    g = geom.grid
    dth = float(np.max(np.diff(np.concatenate([[0.0], g.theta, [math.pi]]))))
    dph = 2.0 * math.pi / g.shape[1]
    ht = dth * math.sqrt(float(np.max(geom.E)))
    hp = dph * math.sqrt(float(np.max(geom.G)))
    return max(ht, hp)


def nearest_point(state: DropState, target: np.ndarray, init=None):
    """Closest surface point by damped Newton on the parametrization.

    Returns (theta, phi, anchor, outward_normal, signed_distance); the sign
    is positive outside the surface.
    """
    fields = state.position_fields()
    pg = min(2 * state.p, sht.P_MAX)
    g = get_grid(pg)
    basis = get_basis(pg, state.p)
    if init is None:
        X = np.stack([basis.synthesize(f.c) for f in fields])
        d2 = np.sum((X - target[:, None, None]) ** 2, axis=0)
        j, k = np.unravel_index(np.argmin(d2), d2.shape)
        th, ph = float(g.theta[j]), float(g.phi[k])
    else:
        th, ph = init
    pos = None
    for _ in range(30):
        ta, pa = np.array([th]), np.array([ph])
        evs = sht.evaluate_many(fields, ta, pa,
                                derivs=((0, 0), (1, 0), (0, 1)))
        pos = np.array([v[0] for v in evs[0]])
        Xt = np.array([v[0] for v in evs[1]])
        Xp = np.array([v[0] for v in evs[2]])
        rvec = pos - target
        g1 = np.array([rvec @ Xt, rvec @ Xp])
        if np.linalg.norm(g1) < 1e-11 * max(1.0, float(np.linalg.norm(rvec))):
            break
        ev2 = sht.evaluate_many(fields, ta, pa,
                                derivs=((2, 0), (1, 1), (0, 2)))
        Xtt = np.array([v[0] for v in ev2[0]])
        Xtp = np.array([v[0] for v in ev2[1]])
        Xpp = np.array([v[0] for v in ev2[2]])
        Hm = np.array([[Xt @ Xt + rvec @ Xtt, Xt @ Xp + rvec @ Xtp],
                       [Xt @ Xp + rvec @ Xtp, Xp @ Xp + rvec @ Xpp]])
        Hm = Hm + 1e-13 * np.trace(Hm) * np.eye(2)
        try:
            step = np.linalg.solve(Hm, -g1)
        except np.linalg.LinAlgError as exc:
            raise GeometryError("near-point Newton breakdown") from exc
        th = float(np.clip(th + step[0], 1e-10, math.pi - 1e-10))
        ph = float((ph + step[1]) % (2.0 * math.pi))
        if np.linalg.norm(step) < 1e-13:
            break
    else:
        raise GeometryError("nearest-point Newton did not converge in 30 iterations")
    nrm = _offgrid_normal(state, th, ph)
    dist = float((target - pos) @ nrm)
    return th, ph, pos, nrm, dist


def near_eval(state_src: DropState, density, target: np.ndarray,
              plan: NearEvalPlan, kernel: str, h: float | None = None,
              geom_up: SurfaceGeometry | None = None):
    """Layer potential at an off-surface target inside the near zone.

    The potential is sampled at the surface anchor (singular rule) and at
    n_lag - 1 points along the approach line where the upsampled regular
    rule is accurate, then Lagrange-interpolated to the target.
    """
    if h is None:
        h = grid_spacing(state_src)
    th, ph, anchor, nrm, dist = nearest_point(state_src, np.asarray(target, float))
    sign = 1.0 if dist >= 0.0 else -1.0
    direction = sign * nrm
    nodes = np.empty(plan.n_lag)
    nodes[0] = 0.0
    nodes[1:] = np.linspace(plan.d_near * h, plan.reach * h, plan.n_lag - 1)
    if geom_up is None:
        pg = min(plan.m_up * state_src.p, sht.P_MAX)
        geom_up = SurfaceGeometry(state_src, get_grid(pg))
    vals0 = singular_eval(state_src, density, th, ph, kernel)
    # anchor carries the principal value; jump kernels need the one-sided
    # limit on the target's side of the surface
    if kernel == "lap_grad":
        rho0 = sht.evaluate(density, np.array([th]), np.array([ph]))[0]
        vals0 = vals0 + sign * 0.5 * rho0 * nrm
    elif kernel == "stokes_dl":
        rho0 = np.array([sht.evaluate(f, np.array([th]), np.array([ph]))[0]
                         for f in density])
        vals0 = vals0 - sign * rho0
    pts = anchor[None, :] + nodes[1:, None] * direction[None, :]
    if kernel.startswith("stokes"):
        dv = np.stack([geom_up.values(f) for f in density])
    else:
        dv = geom_up.values(density)
    far = eval_regular(geom_up, dv, pts, kernel)
    if np.ndim(vals0) == 0 or (isinstance(vals0, float)):
        vals = np.concatenate([[vals0], far])
    else:
        vals = np.vstack([np.atleast_2d(vals0), far])
    return _lagrange(nodes, vals, abs(dist))


def _lagrange(x: np.ndarray, y: np.ndarray, xq: float):
    out = np.zeros(y.shape[1:]) if y.ndim > 1 else 0.0
    n = len(x)
    for i in range(n):
        li = 1.0
        for j in range(n):
            if j != i:
                li *= (xq - x[j]) / (x[i] - x[j])
        out = out + li * y[i]
    return out
