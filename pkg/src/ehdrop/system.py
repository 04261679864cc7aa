"""Shared per-configuration operator bundle for the field and flow solves.

A :class:`DropSystem` snapshots one drop configuration: per-drop upsampled
geometry, per-drop singular operators, and dense cross-drop blocks.  Cross
blocks use the regular rule from the upsampled source grid; target nodes that
fall inside the near zone of another surface get their rows replaced by the
line-interpolation composite (anchor singular row, regular rows at the line
nodes, jump correction), which is linear in the density.

Everything is immutable after construction; solvers treat the system as a
read-only operator collection.
"""

from __future__ import annotations

import numpy as np

from . import quad, sht
from .quad import DropOperators, NearEvalPlan, QuadratureError
from .surface import DropState, SurfaceGeometry, geometry


class DropSystem:

    def __init__(self, states, upsample=2, sing_upsample: float = 2,
                 near_plan: NearEvalPlan | None = None):
        self.states = list(states)
        self.nd = len(self.states)
        self.plan = near_plan or NearEvalPlan()
        self.geoms = [geometry(s, upsample) for s in self.states]
        self.ops = [DropOperators(s, sing_upsample) for s in self.states]
        self.Ns = [op.N for op in self.ops]
        self.h = [quad.grid_spacing(s) for s in self.states]
        self._cross: dict = {}
        self._near_targets: dict = {}
        if self.nd > 1:
            self._find_near_targets()

    # -- near-zone bookkeeping -------------------------------------------------

    def _find_near_targets(self):
        for i in range(self.nd):
            tgt = self.ops[i].X0
            for j in range(self.nd):
                if i == j:
                    continue
                src = self.geoms[j].X.reshape(3, -1).T
                d2 = np.min(np.sum((tgt[:, None, :] - src[None, :, :]) ** 2,
                                   axis=2), axis=1)
                cut = (self.plan.d_near + 1.0) * self.h[j]
                cand = np.nonzero(d2 < cut * cut)[0]
                near = []
                for idx in cand:
                    th, ph, anchor, nrm, dist = quad.nearest_point(
                        self.states[j], tgt[idx])
                    if abs(dist) < self.plan.d_near * self.h[j]:
                        near.append((int(idx), th, ph, anchor, nrm, dist))
                    if abs(dist) <= 0.0:
                        raise QuadratureError(
                            f"drop {i} node inside drop {j}: surfaces overlap")
                self._near_targets[(i, j)] = near

    # -- cross blocks ------------------------------------------------------------

    def cross(self, kind: str, i: int, j: int) -> np.ndarray:
        """Dense block: density values on drop j -> potential at drop i nodes."""
        key = (kind, i, j)
        if key in self._cross:
            return self._cross[key]
        geom = self.geoms[j]
        U = quad._upsample_matrix(self.states[j].p, geom.grid.p)
        w = (geom.grid.wmeasure[:, None] / geom.grid.st[:, None] * geom.W).ravel()
        src = geom.X.reshape(3, -1).T
        tgt = self.ops[i].X0
        xhat = tgt[:, None, :] - src[None, :, :]
        r = np.sqrt(np.sum(xhat * xhat, axis=2))
        Ni, Nj = self.Ns[i], self.Ns[j]
        if kind == "lap_dl_adj":
            n0 = self.ops[i].n0
            xn = np.einsum("mqa,ma->mq", xhat, n0)
            K = xn / (quad.FOURPI * r ** 3) * w[None, :]
            M = K @ U
        elif kind == "lap_sl":
            K = w[None, :] / (quad.FOURPI * r)
            M = K @ U
        elif kind == "lap_grad":
            K = xhat / (quad.FOURPI * r[:, :, None] ** 3) * w[None, :, None]
            M = np.concatenate([K[:, :, a] @ U for a in range(3)], axis=0)
        elif kind in ("stokes_sl", "stokes_dl"):
            if kind == "stokes_sl":
                G = quad._stokeslet(xhat, r)
            else:
                ns = geom.n.reshape(3, -1).T
                G = quad._stresslet_n(xhat, r, ns[None, :, :])
            M = np.zeros((3 * Ni, 3 * Nj))
            for a in range(3):
                for b in range(3):
                    M[a * Ni:(a + 1) * Ni, b * Nj:(b + 1) * Nj] = \
                        (G[:, :, a, b] * w[None, :]) @ U
        else:
            raise QuadratureError(f"unknown cross kind {kind!r}")
        self._patch_near_rows(M, kind, i, j)
        self._cross[key] = M
        return M

    def _patch_near_rows(self, M: np.ndarray, kind: str, i: int, j: int):
        near = self._near_targets.get((i, j), ())
        if not near:
            return
        plan = self.plan
        h = self.h[j]
        state = self.states[j]
        geom = self.geoms[j]
        U = quad._upsample_matrix(state.p, geom.grid.p)
        w = (geom.grid.wmeasure[:, None] / geom.grid.st[:, None] * geom.W).ravel()
        src = geom.X.reshape(3, -1).T
        Ni, Nj = self.Ns[i], self.Ns[j]
        vec = kind in ("stokes_sl", "stokes_dl")
        for (idx, th, ph, anchor, nrm, dist) in near:
            sign = 1.0 if dist >= 0.0 else -1.0
            nodes = np.empty(plan.n_lag)
            nodes[0] = 0.0
            nodes[1:] = np.linspace(plan.d_near * h, plan.reach * h, plan.n_lag - 1)
            lag = _lagrange_weights(nodes, abs(dist))
            pts = anchor[None, :] + nodes[1:, None] * (sign * nrm)[None, :]
            xhat = pts[:, None, :] - src[None, :, :]
            r = np.sqrt(np.sum(xhat * xhat, axis=2))
            if kind == "lap_dl_adj":
                # adjoint DL = target-normal dot vector kernel
                n0 = self.ops[i].n0[idx]
                anchor_rows = np.einsum(
                    "a,an->n", n0, quad.singular_rows(state, th, ph, "lap_grad"))
                K = np.einsum("mqa,a->mq", xhat, n0) / (quad.FOURPI * r ** 3)
                far_rows = (K * w[None, :]) @ U
                jump = 0.5 * sign * float(n0 @ nrm) * quad.point_eval_row(state.p, th, ph)
                row = lag[0] * (anchor_rows + jump) + lag[1:] @ far_rows
                M[idx] = row
            elif kind == "lap_sl":
                anchor_rows = quad.singular_rows(state, th, ph, "lap_sl")
                far_rows = (w[None, :] / (quad.FOURPI * r)) @ U
                M[idx] = lag[0] * anchor_rows + lag[1:] @ far_rows
            elif kind == "lap_grad":
                anchor_rows = quad.singular_rows(state, th, ph, "lap_grad")
                pev = quad.point_eval_row(state.p, th, ph)
                for a in range(3):
                    K = xhat[:, :, a] / (quad.FOURPI * r ** 3)
                    far_rows = (K * w[None, :]) @ U
                    jump = 0.5 * sign * nrm[a] * pev
                    M[a * Ni + idx] = lag[0] * (anchor_rows[a] + jump) + lag[1:] @ far_rows
            elif vec:
                anchor_rows = quad.singular_rows(state, th, ph, kind)  # (3, 3Nj)
                if kind == "stokes_dl":
                    pev = quad.point_eval_row(state.p, th, ph)
                    for a in range(3):
                        anchor_rows[a, a * Nj:(a + 1) * Nj] -= sign * pev
                if kind == "stokes_sl":
                    G = quad._stokeslet(xhat, r)
                else:
                    ns = geom.n.reshape(3, -1).T
                    G = quad._stresslet_n(xhat, r, ns[None, :, :])
                for a in range(3):
                    far = np.concatenate(
                        [(G[:, :, a, b] * w[None, :]) @ U for b in range(3)], axis=1)
                    M[a * Ni + idx] = lag[0] * anchor_rows[a] + lag[1:] @ far

    # -- assembled applications ----------------------------------------------------

    def apply_lap(self, kind: str, densities) -> list:
        """kind in (lap_sl, lap_dl_adj): densities = per-drop flat values."""
        out = []
        for i in range(self.nd):
            acc = self.ops[i].apply_scalar(kind, densities[i])
            for j in range(self.nd):
                if j != i:
                    acc = acc + self.cross(kind, i, j) @ np.ravel(densities[j])
            out.append(acc)
        return out

    def apply_lap_grad_cross(self, densities) -> list:
        """Vector kernel from the *other* drops only (self handled elsewhere)."""
        out = []
        for i in range(self.nd):
            acc = np.zeros((3, self.Ns[i]))
            for j in range(self.nd):
                if j != i:
                    v = self.cross("lap_grad", i, j) @ np.ravel(densities[j])
                    acc += v.reshape(3, self.Ns[i])
            out.append(acc)
        return out

    def apply_stokes(self, kind: str, densities, direct_coeffs=None) -> list:
        """Stokes layer sums over all drops at every drop's base nodes.

        densities: per-drop (3, ntheta, nphi) base-grid values.  When
        ``direct_coeffs`` (per-drop stacked coefficient arrays) is given the
        self-interaction uses the matrix-free path.
        """
        out = []
        for i in range(self.nd):
            if direct_coeffs is not None:
                acc = self.ops[i].apply_stokes_direct(kind, direct_coeffs[i])
            else:
                acc = self.ops[i].apply_stokes(kind, densities[i])
            for j in range(self.nd):
                if j != i:
                    v = self.cross(kind, i, j) @ densities[j].reshape(3, -1).ravel()
                    acc = acc + v.reshape(3, self.Ns[i])
            out.append(acc)
        return out


def _lagrange_weights(x: np.ndarray, xq: float) -> np.ndarray:
    n = len(x)
    w = np.ones(n)
    for i in range(n):
        for j in range(n):
            if j != i:
                w[i] *= (xq - x[j]) / (x[i] - x[j])
    return w
