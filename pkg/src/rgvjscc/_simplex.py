"""Projected first-order descent over products of scaled probability simplices.

The feasible sets used by the continuous exponent solver are intersections of
axis-marginal pinning constraints with the nonnegative orthant.  Projection
uses a fast affine step (exact whenever the result stays nonnegative) with a
Dykstra fallback for boundary cases.  Inequality constraints are handled by
an exact penalty with an escalating coefficient.
"""

from __future__ import annotations

import math

import numpy as np


def project_rows_to_scaled_simplex(Z: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of Z onto {u >= 0, sum(u) = target}."""
    Z = np.atleast_2d(Z)
    m, d = Z.shape
    t = np.asarray(targets, dtype=np.float64).reshape(m)
    out = np.zeros_like(Z)
    pos = t > 0
    if not np.any(pos):
        return out
    Zp = Z[pos]
    tp = t[pos]
    u = -np.sort(-Zp, axis=1)
    css = np.cumsum(u, axis=1) - tp[:, None]
    ks = np.arange(1, d + 1, dtype=np.float64)
    cond = u - css / ks > 0
    # last index where cond holds; cond[:,0] is always True for positive targets
    rho = d - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(Zp.shape[0]), rho] / (rho + 1)
    out[pos] = np.maximum(Zp - theta[:, None], 0.0)
    return out


class PinnedProjector:
    """Projection onto {P >= 0, sum(P) over non-pinned axes = pinned targets}.

    `pinned` maps axis index -> target marginal pmf.  With no pinned axes the
    set is the plain probability simplex.  `forbidden` marks cells that must
    stay exactly zero (removed from the variable space).
    """

    def __init__(self, shape, pinned=None, forbidden=None):
        self.shape = tuple(shape)
        self.pinned = {int(a): np.asarray(q, dtype=np.float64) for a, q in (pinned or {}).items()}
        if forbidden is None:
            self.allowed = np.ones(self.shape, dtype=bool)
        else:
            self.allowed = ~np.asarray(forbidden, dtype=bool)
        self._n_allowed = int(self.allowed.sum())
        self._build()

    def _build(self):
        coords = np.argwhere(self.allowed)  # (d, ndim)
        rows = []
        targets = []
        if not self.pinned:
            rows.append(np.ones(len(coords)))
            targets.append(1.0)
        else:
            for axis, q in self.pinned.items():
                for sym in range(self.shape[axis]):
                    rows.append((coords[:, axis] == sym).astype(np.float64))
                    targets.append(float(q[sym]))
        self._A = np.asarray(rows)
        self._b = np.asarray(targets)
        gram = self._A @ self._A.T
        self._G = self._A.T @ np.linalg.pinv(gram)
        # per-axis slice index lists for the Dykstra fallback
        self._slices = {}
        for axis in self.pinned:
            groups = []
            for sym in range(self.shape[axis]):
                groups.append(np.flatnonzero(coords[:, axis] == sym))
            self._slices[axis] = groups

    def _embed(self, x: np.ndarray) -> np.ndarray:
        P = np.zeros(self.shape)
        P[self.allowed] = x
        return P

    def _extract(self, P: np.ndarray) -> np.ndarray:
        return np.asarray(P)[self.allowed]

    def _project_axis(self, x: np.ndarray, axis: int) -> np.ndarray:
        q = self.pinned[axis]
        out = x.copy()
        for sym, idx in enumerate(self._slices[axis]):
            if len(idx) == 0:
                continue
            out[idx] = project_rows_to_scaled_simplex(
                x[idx][None, :], np.array([q[sym]])
            )[0]
        return out

    def project_vec(self, x: np.ndarray) -> np.ndarray:
        y = x - self._G @ (self._A @ x - self._b)
        if y.min() >= -1e-12:
            return np.maximum(y, 0.0)
        axes = list(self.pinned)
        if not axes:
            return project_rows_to_scaled_simplex(x[None, :], np.array([1.0]))[0]
        if len(axes) == 1:
            return self._project_axis(x, axes[0])
        # Dykstra between the two margin sets
        p = x.copy()
        corr = [np.zeros_like(x) for _ in axes]
        for _ in range(400):
            max_dev = 0.0
            for i, axis in enumerate(axes):
                y = self._project_axis(p + corr[i], axis)
                corr[i] = p + corr[i] - y
                p = y
            for axis in axes:
                q = self.pinned[axis]
                for sym, idx in enumerate(self._slices[axis]):
                    max_dev = max(max_dev, abs(float(p[idx].sum()) - float(q[sym])))
            if max_dev <= 1e-13:
                break
        return p

    def project(self, P: np.ndarray) -> np.ndarray:
        return self._embed(self.project_vec(self._extract(P)))

    def margin_violation(self, P: np.ndarray) -> float:
        x = self._extract(P)
        dev = float(np.max(np.abs(self._A @ x - self._b)))
        out = float(np.abs(np.asarray(P)[~self.allowed]).max()) if (~self.allowed).any() else 0.0
        return max(dev, out, -float(np.asarray(P).min()))


def penalized_descent(
    objective,
    inequalities,
    projector: PinnedProjector,
    P0: np.ndarray,
    *,
    rho: float,
    max_iterations: int,
    tolerance: float,
):
    """Minimize objective + rho * sum(max(g, 0)) over the projector's set.

    `objective` and each entry of `inequalities` map a full array P to a
    (value, gradient) pair.  Returns the final point.
    """

    def penalized(P):
        f, gf = objective(P)
        total = f
        grad = gf.copy()
        for g in inequalities:
            gv, gg = g(P)
            if gv > 0.0:
                total += rho * gv
                grad += rho * gg
        return total, grad

    P = projector.project(P0)
    fP, gP = penalized(P)
    gnorm = float(np.linalg.norm(gP))
    alpha = 0.25 / (1.0 + gnorm)
    stall = 0
    for _ in range(max_iterations):
        if not math.isfinite(fP):
            # climb out of a log singularity by mixing toward the interior
            interior = projector.project(np.ones(projector.shape))
            P = 0.5 * (P + interior)
            fP, gP = penalized(P)
            continue
        accepted = False
        for _ in range(40):
            Pn = projector.project(P - alpha * gP)
            fn, gn = penalized(Pn)
            if fn < fP - 1e-14:
                accepted = True
                break
            alpha *= 0.5
            if alpha < 1e-18:
                break
        if not accepted:
            break
        step = float(np.linalg.norm(Pn - P))
        P, fP, gP = Pn, fn, gn
        alpha = min(alpha * 1.6, 1e3)
        if step < tolerance * (1.0 + float(np.linalg.norm(P))):
            stall += 1
            if stall >= 4:
                break
        else:
            stall = 0
    return P
