"""Certified bump functions and partitions of unity on cube covers.

A bump is the indicator of a plateau convolved with J uniform densities of
decreasing half-widths r_1 >= ... >= r_J.  That makes it an exact piecewise
polynomial of smoothness C^{J-1}: value 1 on the shrunk plateau, 0 outside
the grown one, values in [0, 1], and

    sup |f^{(j)}| <= B_j := prod_{i<=j} 1/r_i,   j <= J - 1,

because j central differences of the remaining (J-j)-stage convolution (a
function bounded by one) realize the derivative exactly.

Evaluation follows that identity: the j-th derivative is a signed sum of
2^j evaluations of the stored (J-j)-stage convolution, each computed from
its piecewise-polynomial representation.  Pieces carry local (midpoint)
coordinates and moving averages are accumulated from nonnegative piece
integrals, so no stage suffers catastrophic cancellation; plateau pieces
are snapped to the exact constant 1.

All radii scale with the bump half-width (r_j = delta * r / theta_j for the
quotient sequence theta of the smoothness class), so every bump is a
dilation of one canonical bump per (sequence, delta, J).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product as iproduct
from math import comb

import numpy as np

from .errors import OrderCapExceeded, QuasianalyticInput, StageOverflow
from .geometry import CubeDecomposition, EXPANSION
from .jets import multi_indices
from .seqcore import WeightSequence

# radii must fit in this fraction of the half-width so that the plateau
# still covers [-r, r] while the support stays inside [-9r/8, 9r/8]
RADII_BUDGET = 1.0 / 16.0


class _PiecewisePoly:
    """Compactly supported piecewise polynomial with local-coordinate
    coefficients, exact zero outside the support, and snapped plateau."""

    __slots__ = ("breaks", "mids", "coeffs", "integrals", "cumint",
                 "plateau_lo", "plateau_hi")

    def __init__(self, breaks, coeffs, plateau):
        self.breaks = np.asarray(breaks, dtype=float)
        self.mids = 0.5 * (self.breaks[:-1] + self.breaks[1:])
        self.coeffs = np.asarray(coeffs, dtype=float)  # (P, deg+1), ascending
        self.plateau_lo, self.plateau_hi = plateau
        widths = np.diff(self.breaks)
        # exact piece integrals in local coordinates (odd powers cancel)
        k = np.arange(self.coeffs.shape[1])
        halfw = (widths / 2.0)[:, None]
        terms = self.coeffs * (halfw ** (k + 1)) * ((1.0 - (-1.0) ** (k + 1)) / (k + 1.0))
        self.integrals = np.sum(terms, axis=1)
        self.cumint = np.concatenate([[0.0], np.cumsum(self.integrals)])

    @property
    def total(self) -> float:
        return float(self.cumint[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = (x > self.breaks[0]) & (x < self.breaks[-1])
        flat = (x >= self.plateau_lo) & (x <= self.plateau_hi)
        out[flat] = 1.0
        todo = inside & ~flat
        if np.any(todo):
            xt = x[todo]
            idx = np.clip(np.searchsorted(self.breaks, xt, side="right") - 1,
                          0, len(self.mids) - 1)
            u = xt - self.mids[idx]
            c = self.coeffs[idx]
            val = np.zeros_like(xt)
            for k in range(c.shape[1] - 1, -1, -1):
                val = val * u + c[:, k]
            out[todo] = val
        return out

    def prefix_integral(self, y) -> float:
        """Integral over the full pieces strictly left of y's piece."""
        if y <= self.breaks[0]:
            return 0.0
        if y >= self.breaks[-1]:
            return self.total
        q = int(np.clip(np.searchsorted(self.breaks, y, side="right") - 1,
                        0, len(self.mids) - 1))
        return float(self.cumint[q])


def _shift_poly(c: np.ndarray, gamma: float) -> np.ndarray:
    """Coefficients of p(u + gamma) for ascending-coefficient p."""
    n = len(c)
    out = np.zeros(n)
    for k in range(n):
        ck = c[k]
        if ck == 0.0:
            continue
        g = 1.0
        for i in range(k, -1, -1):
            out[i] += ck * comb(k, i) * g
            g *= gamma
    return out


def _convolve_uniform(g: _PiecewisePoly, r: float,
                      plateau: tuple[float, float]) -> _PiecewisePoly:
    """Moving average of g over [x - r, x + r], divided by 2r, as an exact
    piecewise polynomial.  ``plateau`` is the known exact-1 interval of the
    result, used for snapping."""
    breaks = np.unique(np.concatenate([g.breaks - r, g.breaks + r]))
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    deg = g.coeffs.shape[1]  # result degree = input degree + 1
    coeffs = np.zeros((len(mids), deg + 1))
    inv = 1.0 / (2.0 * r)
    k = np.arange(deg)
    for p, m in enumerate(mids):
        if breaks[p + 1] <= g.breaks[0] - r or breaks[p] >= g.breaks[-1] + r:
            continue
        if plateau[0] <= breaks[p] and breaks[p + 1] <= plateau[1]:
            coeffs[p, 0] = 1.0
            continue
        yp, ym = m + r, m - r
        const = g.prefix_integral(yp) - g.prefix_integral(ym)
        poly = np.zeros(deg + 1)
        poly[0] = const
        # partial integral at the upper window edge, as a polynomial in u
        if g.breaks[0] < yp < g.breaks[-1]:
            q = int(np.clip(np.searchsorted(g.breaks, yp, side="right") - 1,
                            0, len(g.mids) - 1))
            anti = np.concatenate([[0.0], g.coeffs[q] / (k + 1.0)])
            gamma = m + r - g.mids[q]
            lo = g.breaks[q] - g.mids[q]
            shifted = _shift_poly(anti, gamma)
            shifted[0] -= float(np.polynomial.polynomial.polyval(lo, anti))
            poly[: len(shifted)] += shifted
        # minus the partial integral at the lower edge
        if g.breaks[0] < ym < g.breaks[-1]:
            q = int(np.clip(np.searchsorted(g.breaks, ym, side="right") - 1,
                            0, len(g.mids) - 1))
            anti = np.concatenate([[0.0], g.coeffs[q] / (k + 1.0)])
            gamma = m - r - g.mids[q]
            lo = g.breaks[q] - g.mids[q]
            shifted = _shift_poly(anti, gamma)
            shifted[0] -= float(np.polynomial.polynomial.polyval(lo, anti))
            poly[: len(shifted)] -= shifted
        coeffs[p] = inv * poly
    return _PiecewisePoly(breaks, coeffs, plateau)


class CanonicalBump:
    """Unit-half-width bump: plateau [-1, 1], support [-9/8, 9/8].

    Stores every intermediate convolution stage so derivatives up to J-1
    can be evaluated by the central-difference identity.
    """

    def __init__(self, radii):
        radii = np.asarray(radii, dtype=float)
        if np.any(radii <= 0) or np.any(np.diff(radii) > 1e-15):
            raise ValueError("radii must be positive and non-increasing")
        s = float(np.sum(radii))
        if s > RADII_BUDGET * (1.0 + 1e-12):
            raise StageOverflow(
                f"radii sum {s:g} exceeds the budget {RADII_BUDGET:g}")
        self.radii = radii
        self.J = len(radii)
        self.sum_radii = s
        self.a = float(np.nextafter(9.0 / 8.0 - s, -np.inf))
        suffix = np.concatenate([np.cumsum(radii[::-1])[::-1], [0.0]])
        # stages[m] = indicator convolved with radii m..J (1-based m)
        stage = _PiecewisePoly(np.array([-self.a, self.a]),
                               np.array([[1.0]]), (-self.a, self.a))
        self.stages: list = [None] * (self.J + 2)
        self.stages[self.J + 1] = stage
        for m in range(self.J, 0, -1):
            plateau = (-(self.a - suffix[m - 1]), self.a - suffix[m - 1])
            stage = _convolve_uniform(stage, float(radii[m - 1]), plateau)
            self.stages[m] = stage
        self.plateau = self.a - s
        self.support = float(self.stages[1].breaks[-1])

    def bound(self, j: int) -> float:
        """Certified sup bound for the j-th derivative."""
        return float(np.prod(1.0 / self.radii[:j])) if j else 1.0

    def eval(self, u, j: int = 0):
        """j-th derivative at u: signed sum of 2^j evaluations of stage j+1."""
        if j > self.J - 1:
            raise OrderCapExceeded(f"derivative {j} exceeds smoothness C^{self.J - 1}")
        u = np.asarray(u, dtype=float)
        stage = self.stages[j + 1]
        if j == 0:
            return np.clip(stage(u), 0.0, 1.0)
        out = np.zeros_like(u)
        scale = float(np.prod(1.0 / (2.0 * self.radii[:j])))
        for signs in iproduct((1.0, -1.0), repeat=j):
            shift = float(np.dot(signs, self.radii[:j]))
            out += np.prod(signs) * stage(u + shift)
        return scale * out


@dataclass(frozen=True)
class Bump1D:
    """A dilated and centered canonical bump with half-width r: value 1 on
    [center - r, center + r], support inside [center - 9r/8, center + 9r/8]."""

    canonical: CanonicalBump
    center: float
    r: float

    @property
    def radii(self) -> np.ndarray:
        return self.canonical.radii * self.r

    @property
    def sum_radii(self) -> float:
        return self.canonical.sum_radii * self.r

    @property
    def plateau_halfwidth(self) -> float:
        return self.canonical.plateau * self.r

    @property
    def support_halfwidth(self) -> float:
        return self.canonical.support * self.r

    def bound(self, j: int) -> float:
        return self.canonical.bound(j) / self.r ** j

    def eval(self, x, j: int = 0):
        u = (np.asarray(x, dtype=float) - self.center) / self.r
        return self.canonical.eval(u, j) / self.r ** j


def build_bump(r: float, seq: WeightSequence, delta: float | None = None,
               J: int = 8) -> Bump1D:
    """Single bump of half-width r with radii delta * r / theta_j.

    ``delta`` is the dimensionless radii scale; the default is the largest
    value fitting the budget (plateau covering [-r, r] with support inside
    [-9r/8, 9r/8]).  StageOverflow when the requested delta does not fit.
    """
    if not seq.flags["non_quasianalytic"]:
        raise QuasianalyticInput(
            f"{seq.label or 'sequence'}: bump radii need summable reciprocals")
    canonical = _canonical_for(seq, delta, J)
    return Bump1D(canonical=canonical, center=0.0, r=float(r))


def eval_bump(b: Bump1D, x, order: int = 0):
    """Derivative of a bump at x: the signed central-difference sum over the
    first ``order`` radii of the stored remaining-stage convolution."""
    return b.eval(x, order)


def max_delta(seq: WeightSequence, J: int) -> float:
    """Largest radii scale fitting the budget for this class and degree."""
    if seq.K_max < J:
        raise StageOverflow(f"sequence table too short for {J} stages")
    inv_theta = np.exp(-seq.log_mu[1: J + 1])
    return RADII_BUDGET * (1.0 - 2.0 ** -20) / float(np.sum(inv_theta))


def _canonical_for(seq: WeightSequence, delta: float | None, J: int) -> CanonicalBump:
    cap = max_delta(seq, J)
    if delta is None:
        delta = cap
    elif delta > cap:
        raise StageOverflow(
            f"delta {delta:g} exceeds the budget cap {cap:g} for J={J}")
    radii = delta * np.exp(-seq.log_mu[1: J + 1])
    return CanonicalBump(radii)


# -- partition of unity ------------------------------------------------------------

@dataclass(frozen=True)
class PartitionOfUnity:
    """Ordered-product partition subordinate to the expanded cubes.

    psi_i is the tensor bump of cube i (value 1 on Q_i, support in Q_i*);
    phi_i = psi_i * prod_{k < i, k neighbor of i} (1 - psi_k).  Earlier
    non-neighbors are exactly 1 on supp psi_i, so the truncated product is
    exact, and sum_i phi_i = 1 - prod_i (1 - psi_i) = 1 on the union of the
    cubes.
    """

    dec: CubeDecomposition
    canonical: CanonicalBump
    seq: WeightSequence
    delta: float
    order_cap: int
    halvings: int
    bumps: tuple = field(repr=False, default=())  # per cube, per axis Bump1D

    @property
    def J(self) -> int:
        return self.canonical.J

    @property
    def seq_label(self) -> str:
        return self.seq.label

    def psi(self, i: int, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dec.dim)
        out = np.ones(len(pts))
        for d in range(self.dec.dim):
            out *= self.bumps[i][d].eval(pts[:, d], 0)
        return out

    def psi_deriv(self, i: int, beta, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dec.dim)
        out = np.ones(len(pts))
        for d in range(self.dec.dim):
            out = out * self.bumps[i][d].eval(pts[:, d], int(beta[d]))
        return out

    def psi_bound(self, i: int, beta) -> float:
        b = 1.0
        for d in range(self.dec.dim):
            b *= self.bumps[i][d].bound(int(beta[d]))
        return b

    def _factor_indices(self, i: int) -> list[int]:
        return [int(k) for k in self.dec.neighbors[i] if k < i]

    def phi(self, i: int, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dec.dim)
        out = self.psi(i, pts)
        for k in self._factor_indices(i):
            out *= 1.0 - self.psi(k, pts)
        return out

    def phi_derivs(self, i: int, x, up_to: int) -> dict:
        """All partial derivatives of phi_i with total order <= up_to,
        evaluated on the point array; exact Leibniz fold over the factors."""
        if up_to > self.order_cap:
            raise OrderCapExceeded(
                f"order {up_to} exceeds the build cap {self.order_cap}")
        pts = np.asarray(x, dtype=float).reshape(-1, self.dec.dim)
        multis = multi_indices(self.dec.dim, up_to)
        tables = {m: self.psi_deriv(i, m, pts) for m in multis}
        for k in self._factor_indices(i):
            fac = {}
            for m in multis:
                v = self.psi_deriv(k, m, pts)
                fac[m] = (1.0 - v) if sum(m) == 0 else -v
            tables = _leibniz_fold(tables, fac, multis)
        return tables

    def phi_bound(self, i: int, beta) -> float:
        """Certified sup bound for the beta-derivative of phi_i (Leibniz fold
        of the per-factor central-difference bounds)."""
        multis = multi_indices(self.dec.dim, sum(beta))
        bounds = {m: self.psi_bound(i, m) for m in multis}
        for k in self._factor_indices(i):
            fac = {m: (1.0 if sum(m) == 0 else self.psi_bound(k, m))
                   for m in multis}
            bounds = _leibniz_fold(bounds, fac, multis)
        return float(bounds[tuple(beta)])

    def growth_factor(self, i: int, C: float) -> float:
        """Realized per-cube growth factor G_i: the smallest G with
        (certified bound for d^beta phi_i) <= C^{|beta|+1} M_{|beta|} G for
        every |beta| <= order_cap, where M is the build sequence."""
        g = 0.0
        M = np.exp(self.seq.logM[: self.order_cap + 1])
        for m in multi_indices(self.dec.dim, self.order_cap):
            tot = sum(m)
            g = max(g, self.phi_bound(i, m) / (C ** (tot + 1) * M[tot]))
        return g

    def sum_phi(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float).reshape(-1, self.dec.dim)
        out = np.zeros(len(pts))
        for i in range(self.dec.n_cubes):
            half = self.dec.sides[i] * EXPANSION / 2.0
            mask = np.all(np.abs(pts - self.dec.centers[i]) <= half, axis=1)
            if np.any(mask):
                out[mask] += self.phi(i, pts[mask])
        return out

    def covered(self, x) -> np.ndarray:
        """Points lying in some (unexpanded) cube, where the sum is one."""
        pts = np.asarray(x, dtype=float).reshape(-1, self.dec.dim)
        out = np.zeros(len(pts), dtype=bool)
        for i in range(self.dec.n_cubes):
            half = self.dec.sides[i] / 2.0
            out |= np.all(np.abs(pts - self.dec.centers[i]) <= half, axis=1)
        return out


def _leibniz_fold(left: dict, right: dict, multis) -> dict:
    out = {}
    for m in multis:
        acc = 0.0
        if len(m) == 1:
            for i in range(m[0] + 1):
                acc = acc + comb(m[0], i) * left[(i,)] * right[(m[0] - i,)]
        else:
            for i in range(m[0] + 1):
                for j in range(m[1] + 1):
                    acc = acc + (comb(m[0], i) * comb(m[1], j)
                                 * left[(i, j)] * right[(m[0] - i, m[1] - j)])
        out[m] = acc
    return out


def build_pou(dec: CubeDecomposition, seq: WeightSequence,
              delta: float | None = None, order_cap: int = 4) -> PartitionOfUnity:
    """Partition of unity over the decomposition with derivative caps.

    Smoothness degree J = order_cap + 4 so every requested derivative is
    well below the spline degree.  A caller-passed delta that overflows the
    radii budget is halved until it fits; the halving count is recorded.
    """
    if not seq.flags["non_quasianalytic"]:
        raise QuasianalyticInput(
            f"{seq.label or 'sequence'}: partition needs summable reciprocals")
    J = order_cap + 4
    cap = max_delta(seq, J)
    halvings = 0
    if delta is None:
        delta = cap
    else:
        while delta > cap:
            delta /= 2.0
            halvings += 1
    canonical = _canonical_for(seq, delta, J)
    bumps = []
    for i in range(dec.n_cubes):
        r = float(dec.sides[i]) / 2.0
        bumps.append(tuple(
            Bump1D(canonical=canonical, center=float(dec.centers[i][d]), r=r)
            for d in range(dec.dim)))
    return PartitionOfUnity(dec=dec, canonical=canonical, seq=seq,
                            delta=float(delta), order_cap=order_cap,
                            halvings=halvings, bumps=tuple(bumps))
