"""Degree-scheduled extension of jets off their compact set.

The extension is a locally finite sum over the cube cover,

    f(x) = sum_i phi_i(x) * (Taylor field of degree p_i from the nearest
           set point of cube i, evaluated at x),

with the per-cube degree p_i = 2 * (optimal truncation index of the
scheduling sequence at L * d(x_i, E)), capped at the jet's stored order.
On the set itself f takes the jet's zeroth values.  Derivatives combine the
exact partition derivatives with exact polynomial derivatives through the
Leibniz rule, so evaluation is closed-form everywhere.

The verifier measures (a) jet-matching residuals along approach scales,
fitted against C' * (h_{s'}(K d) + d); (b) a growth certificate
sup |d^alpha f| <= C M1^{|alpha|+1} W_alpha; (c) realized constants for the
two Taylor-field bounds that drive the construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from .conditions import ChainCertificate, check_almost_increasing
from .errors import IncompatibleGeometry, RangeExhausted
from .fncore import WeightMatrix
from .geometry import CubeDecomposition, EXPANSION, nearest
from .jets import Ultrajet, multi_indices, taylor_grid
from .pou import Bump1D, PartitionOfUnity, _leibniz_fold
from .seqcore import (
    SequenceView,
    WeightSequence,
    gamma_bar_soft,
    gamma_under_soft,
    log_h_assoc,
)

DEFAULT_GUARD = 64.0
GUARD_CAP = 2.0 ** 16


@dataclass(frozen=True)
class DegreeSchedule:
    """Per-cube Taylor degrees with their generating parameters."""

    dec: CubeDecomposition
    degrees: np.ndarray       # (n_cubes,) int
    capped: np.ndarray        # (n_cubes,) bool
    L: float
    mode: str                 # "matrix" or "single"
    s_prime: SequenceView
    chain: ChainCertificate | None = None
    collapse_D: float | None = None  # single mode: 2G(Dt) <= G_under(t) witness

    @property
    def degree_cap(self) -> int:
        return int(self.degrees.max(initial=0))


def _halving_constant(view: SequenceView, t_range=(0.02, 50.0), n_t: int = 40):
    """Smallest grid D with 2 gamma_bar(D t) <= gamma_under(t) sampled over
    the range (the single-sequence collapse of the degree chain)."""
    ts = np.geomspace(t_range[0], t_range[1], n_t)
    gu, ex_u = gamma_under_soft(view, ts)
    if np.any(ex_u):
        raise RangeExhausted("quotient crossing out of range on the t grid")
    for i in range(0, 30):
        d = 2.0 ** i
        gb, ex_b = gamma_bar_soft(view, d * ts)
        if not np.any(ex_b) and np.all(2 * gb <= gu):
            return d
    raise RangeExhausted("no halving constant on the geometric grid")


def schedule(dec: CubeDecomposition, source, L: float,
             A_max: int | None = None) -> DegreeSchedule:
    """Degree schedule p_i = 2 * gamma_bar_{s'}(L d(x_i, E)).

    ``source`` is either a (matrix, chain certificate) pair -- the scheduling
    sequence is then the factorial-stripped row at the chain's middle
    parameter -- or a single weight sequence of moderate growth passing the
    almost-increase check, which collapses the chain onto itself.
    """
    if L < 1.0:
        raise ValueError("L must be at least 1")
    if isinstance(source, WeightSequence):
        if not source.flags["moderate_growth"]:
            raise ValueError(f"{source.label}: moderate growth flag required "
                             "for single-sequence scheduling")
        if not check_almost_increasing(source).holds:
            raise ValueError(f"{source.label}: quotient-over-index must be "
                             "almost increasing")
        s_prime = source.view("m")
        mode, chain = "single", None
        collapse = _halving_constant(s_prime)
    else:
        matrix, chain = source
        if not isinstance(matrix, WeightMatrix) or not isinstance(chain, ChainCertificate):
            raise TypeError("matrix mode needs (WeightMatrix, ChainCertificate)")
        s_prime = matrix.row(chain.y2).view("m")
        mode, collapse = "matrix", None
    args = L * dec.center_dist
    gb, exhausted = gamma_bar_soft(s_prime, args)
    degrees = 2 * gb.astype(int)
    capped = np.asarray(exhausted).copy()
    if A_max is not None:
        over = degrees > A_max
        capped |= over
        degrees = np.minimum(degrees, A_max)
    return DegreeSchedule(dec=dec, degrees=degrees, capped=capped, L=float(L),
                          mode=mode, s_prime=s_prime, chain=chain,
                          collapse_D=collapse)


class _UnionBump:
    """Smooth cutoff equal to one near every set point: the complement of
    the product of per-point tensor bump complements."""

    def __init__(self, cset, canonical, radius: float):
        self.radius = float(radius)
        self.bumps = tuple(
            tuple(Bump1D(canonical=canonical, center=float(a[d]), r=self.radius)
                  for d in range(cset.dim))
            for a in cset.points)
        self.dim = cset.dim

    def derivs(self, pts: np.ndarray, up_to: int) -> dict:
        multis = multi_indices(self.dim, up_to)
        prod = None
        for axes in self.bumps:
            fac = {}
            for m in multis:
                v = np.ones(len(pts))
                for d in range(self.dim):
                    v = v * axes[d].eval(pts[:, d], int(m[d]))
                fac[m] = (1.0 - v) if sum(m) == 0 else -v
            prod = fac if prod is None else _leibniz_fold(prod, fac, multis)
        out = {}
        for m in multis:
            out[m] = (1.0 - prod[m]) if sum(m) == 0 else -prod[m]
        return out

    def bound(self, m) -> float:
        """Certified sup bound for the m-derivative, by the same fold."""
        multis = multi_indices(self.dim, sum(m))
        prod = None
        for axes in self.bumps:
            fac = {}
            for mm in multis:
                b = 1.0
                for d in range(self.dim):
                    b *= axes[d].bound(int(mm[d]))
                fac[mm] = 1.0 if sum(mm) == 0 else b
            prod = fac if prod is None else _leibniz_fold(prod, fac, multis)
        return 1.0 if sum(m) == 0 else float(prod[tuple(m)])


@dataclass(frozen=True)
class ExtensionField:
    """Evaluable extension with exact derivatives up to the partition cap."""

    jet: Ultrajet
    pou: PartitionOfUnity
    sched: DegreeSchedule
    anchor_idx: np.ndarray = field(repr=False, default=None)
    cutoff: object = field(repr=False, default=None)

    @property
    def L(self) -> float:
        return self.sched.L

    def point_flags(self, x) -> dict:
        pts = np.asarray(x, dtype=float).reshape(-1, self.jet.cset.dim)
        e = self.jet.cset.points
        d = np.sqrt(((pts[:, None, :] - e[None, :, :]) ** 2).sum(-1)).min(1)
        return {"on_set": d < 1e-12,
                "collar": (d >= 1e-12) & (d <= self.pou.dec.collar_radius)}

    def derivative_grid(self, x, alpha) -> np.ndarray:
        """d^alpha f on an array of points; exact Leibniz combination of
        partition and Taylor-field derivatives.  Values on the set are the
        stored jet values; collar points evaluate through the same sum and
        should be read together with point_flags."""
        alpha = tuple(alpha)
        dec = self.pou.dec
        pts = np.asarray(x, dtype=float).reshape(-1, dec.dim)
        out = np.zeros(len(pts))
        q = sum(alpha)
        multis = [m for m in multi_indices(dec.dim, q)]
        for i in range(dec.n_cubes):
            half = dec.sides[i] * EXPANSION / 2.0
            mask = np.all(np.abs(pts - dec.centers[i]) <= half, axis=1)
            if not np.any(mask):
                continue
            sub = pts[mask]
            tables = self.pou.phi_derivs(i, sub, up_to=q)
            acc = np.zeros(len(sub))
            p_i = int(self.sched.degrees[i])
            for beta in multis:
                if any(b > a for b, a in zip(beta, alpha)):
                    continue
                if sum(beta) > p_i:
                    continue
                gamma = tuple(a - b for a, b in zip(alpha, beta))
                coef = 1.0
                for a_c, b_c in zip(alpha, beta):
                    coef *= comb(a_c, b_c)
                acc += coef * tables[gamma] * taylor_grid(
                    self.jet, int(self.anchor_idx[i]), p_i, beta, sub)
            out[mask] += acc
        if self.cutoff is not None:
            cut = self.cutoff.derivs(pts, q)
            total = np.zeros(len(pts))
            for beta in multis:
                if any(b > a for b, a in zip(beta, alpha)):
                    continue
                gamma = tuple(a - b for a, b in zip(alpha, beta))
                coef = 1.0
                for a_c, b_c in zip(alpha, beta):
                    coef *= comb(a_c, b_c)
                if beta == alpha:
                    raw = out
                else:
                    raw = self._raw_derivative(pts, beta)
                total += coef * cut[gamma] * raw
            out = total
        flags = self.point_flags(pts)
        if np.any(flags["on_set"]):
            idx = np.where(flags["on_set"])[0]
            for k in idx:
                j = self.jet.cset.index_of(pts[k])
                out[k] = self.jet.value(j, alpha)
        return out

    def _raw_derivative(self, pts, alpha) -> np.ndarray:
        dec = self.pou.dec
        out = np.zeros(len(pts))
        q = sum(alpha)
        for i in range(dec.n_cubes):
            half = dec.sides[i] * EXPANSION / 2.0
            mask = np.all(np.abs(pts - dec.centers[i]) <= half, axis=1)
            if not np.any(mask):
                continue
            sub = pts[mask]
            tables = self.pou.phi_derivs(i, sub, up_to=q)
            acc = np.zeros(len(sub))
            p_i = int(self.sched.degrees[i])
            for beta in multi_indices(dec.dim, q):
                if any(b > a for b, a in zip(beta, alpha)) or sum(beta) > p_i:
                    continue
                gamma = tuple(a - b for a, b in zip(alpha, beta))
                coef = 1.0
                for a_c, b_c in zip(alpha, beta):
                    coef *= comb(a_c, b_c)
                acc += coef * tables[gamma] * taylor_grid(
                    self.jet, int(self.anchor_idx[i]), p_i, beta, sub)
            out[mask] += acc
        return out

    def value(self, x) -> np.ndarray:
        return self.derivative_grid(x, (0,) * self.jet.cset.dim)


def extend(jet: Ultrajet, pou: PartitionOfUnity, sched: DegreeSchedule,
           cutoff_radius: float | None = None) -> ExtensionField:
    """Assemble the extension field.

    Requires a certified jet (the schedule's L should be at least the guard
    multiple of the certificate rho) and a partition built on the schedule's
    decomposition.  ``cutoff_radius`` switches on multiplication by a smooth
    cutoff equal to one on {d(x, E) <= cutoff_radius}.
    """
    if pou.dec is not sched.dec:
        raise IncompatibleGeometry("partition and schedule use different covers")
    if jet.certificate is None:
        raise ValueError("jet must carry a growth certificate")
    if sched.L < jet.certificate.rho:
        raise ValueError("L below the certificate rho; raise the guard")
    dec = pou.dec
    anchor = np.array([jet.cset.index_of(dec.nearest_points[i])
                       for i in range(dec.n_cubes)], dtype=int)
    cut = None
    if cutoff_radius is not None:
        cut = _UnionBump(jet.cset, pou.canonical, cutoff_radius)
    return ExtensionField(jet=jet, pou=pou, sched=sched, anchor_idx=anchor,
                          cutoff=cut)


def default_L(jet: Ultrajet, guard: float = DEFAULT_GUARD) -> float:
    if jet.certificate is None:
        raise ValueError("jet must carry a growth certificate")
    return guard * max(1.0, jet.certificate.rho)


def _taylor_sup_bound(field: ExtensionField, i: int, beta) -> float:
    """Upper bound for |d^beta T_i| over the expanded cube Q_i*: triangle
    inequality on the Taylor coefficients at the cube's anchor point, with
    the exact maximal anchor-to-corner distance."""
    jet = field.jet
    dec = field.pou.dec
    p_i = int(field.sched.degrees[i])
    if sum(beta) > p_i:
        return 0.0
    anchor = dec.nearest_points[i]
    half = dec.sides[i] * EXPANSION / 2.0
    corners = np.array(np.meshgrid(*[[-half, half]] * dec.dim)).T.reshape(-1, dec.dim)
    r_max = float(np.max(np.linalg.norm(dec.centers[i] + corners - anchor, axis=1)))
    ai = int(field.anchor_idx[i])
    total = 0.0
    if dec.dim == 1:
        for j in range(0, p_i - beta[0] + 1):
            total += abs(jet.value(ai, (beta[0] + j,))) / factorial(j) * r_max ** j
    else:
        for j1 in range(0, p_i - sum(beta) + 1):
            for j2 in range(0, p_i - sum(beta) - j1 + 1):
                g = (beta[0] + j1, beta[1] + j2)
                total += (abs(jet.value(ai, g))
                          / (factorial(j1) * factorial(j2)) * r_max ** (j1 + j2))
    return total


def derivative_bounds(field: ExtensionField, up_to: int) -> dict:
    """Certified sup bounds for |d^alpha f|, |alpha| <= up_to: Leibniz fold
    of the partition bound tables with per-cube Taylor coefficient bounds,
    maximized over cubes (locally finite sum: at most the overlap count of
    cubes contributes at any point)."""
    dec = field.pou.dec
    multis = multi_indices(dec.dim, up_to)
    overlap = field.pou.dec.max_overlap() + 1
    out = {m: 0.0 for m in multis}
    for m in multis:
        per_point_max = 0.0
        for i in range(dec.n_cubes):
            acc = 0.0
            for beta in multis:
                if any(b > a for b, a in zip(beta, m)):
                    continue
                gamma = tuple(a - b for a, b in zip(m, beta))
                coef = 1.0
                for a_c, b_c in zip(m, beta):
                    coef *= comb(a_c, b_c)
                acc += (coef * field.pou.phi_bound(i, gamma)
                        * _taylor_sup_bound(field, i, beta))
            per_point_max = max(per_point_max, acc)
        out[m] = overlap * per_point_max
    if field.cutoff is not None:
        folded = {}
        for m in multis:
            acc = 0.0
            for beta in multis:
                if any(b > a for b, a in zip(beta, m)):
                    continue
                gamma = tuple(a - b for a, b in zip(m, beta))
                coef = 1.0
                for a_c, b_c in zip(m, beta):
                    coef *= comb(a_c, b_c)
                acc += coef * field.cutoff.bound(gamma) * out[beta]
            folded[m] = acc
        out = folded
    return out


# -- verification -------------------------------------------------------------------

def _approach_points(cset, d: float, box) -> np.ndarray:
    """Points at distance exactly d from the set (axis directions), inside
    the box and anchored to their nearest set point."""
    pts = []
    for a in cset.points:
        for axis in range(cset.dim):
            for sgn in (-1.0, 1.0):
                x = a.copy()
                x[axis] += sgn * d
                if all(box[dd][0] <= x[dd] <= box[dd][1] for dd in range(cset.dim)):
                    e = cset.points
                    dist = np.sqrt(((e - x) ** 2).sum(1))
                    if abs(dist.min() - d) < 1e-12 * max(d, 1.0):
                        pts.append(x)
    return np.asarray(pts).reshape(-1, cset.dim)


def verify(field: ExtensionField, target_seq: WeightSequence, orders,
           approach_scales, growth_orders: int | None = None,
           grid_points: int = 800, fit_K_powers=range(-8, 13)) -> dict:
    """Verification report: residuals, growth certificate, Taylor bounds."""
    jet = field.jet
    dec = field.pou.dec
    cset = jet.cset
    box = dec.box
    s_view = field.sched.s_prime
    L = field.L

    residuals = []
    for alpha in orders:
        alpha = tuple(alpha) if isinstance(alpha, (tuple, list)) else (int(alpha),)
        if len(alpha) != cset.dim:
            raise ValueError(f"order {alpha} does not match dimension {cset.dim}")
        for d in approach_scales:
            pts = _approach_points(cset, float(d), box)
            if len(pts) == 0:
                continue
            vals = field.derivative_grid(pts, alpha)
            ref = np.array([jet.value(cset.index_of(nearest(x, cset)), alpha)
                            for x in pts])
            contributing = set()
            for x in pts:
                contributing.update(dec.cubes_containing(x).tolist())
            capped = bool(np.any(field.sched.capped[list(contributing)])) \
                if contributing else False
            residuals.append({
                "alpha": list(alpha), "d": float(d),
                "residual": float(np.max(np.abs(vals - ref))),
                "capped": capped, "n_points": len(pts)})

    fit = None
    clean = [r for r in residuals if not r["capped"]]
    if clean:
        best = None
        for i in fit_K_powers:
            K = 2.0 ** i
            needed = 0.0
            ok = True
            for r in clean:
                lh = log_h_assoc(s_view, np.array([K * r["d"]]))[0]
                h = float(np.exp(lh)) if np.isfinite(lh) else 0.0
                needed = max(needed, r["residual"] / (h + r["d"]))
                if not np.isfinite(needed):
                    ok = False
                    break
            if ok and (best is None or needed < best[1]):
                best = (K, needed)
        if best is not None:
            fit = {"K": best[0], "C_prime": best[1]}

    # growth certificate: certified bounds (grid-free), sampled sups reported
    g_ord = growth_orders if growth_orders is not None else max(
        (sum(a) if isinstance(a, (tuple, list)) else int(a)) for a in orders)
    axes = [np.linspace(lo, hi, int(round(grid_points ** (1.0 / dec.dim))))
            for lo, hi in box]
    if dec.dim == 1:
        grid = axes[0].reshape(-1, 1)
    else:
        xx, yy = np.meshgrid(axes[0], axes[1])
        grid = np.column_stack([xx.ravel(), yy.ravel()])
    sups = {}
    for m in multi_indices(dec.dim, g_ord):
        sups[m] = float(np.max(np.abs(field.derivative_grid(grid, m))))
    bounds = derivative_bounds(field, g_ord)
    W = np.exp(target_seq.logM[: g_ord + 1])
    M1 = max(1.0, max((bounds[m] / W[sum(m)]) ** (1.0 / (sum(m) + 1.0))
                      for m in bounds))
    C_growth = max(bounds[m] / (M1 ** (sum(m) + 1) * W[sum(m)]) for m in bounds)
    growth = {"M1": M1, "C": float(C_growth), "row": target_seq.label,
              "grid_sups": {str(list(m)): v for m, v in sups.items()},
              "certified_bounds": {str(list(m)): v for m, v in bounds.items()},
              "grid_points": len(grid)}

    # Taylor-field bounds at sampled off-set points
    cert = jet.certificate
    tb = {"field_bound_C": 0.0, "increment_bound_C": 0.0}
    for d in approach_scales:
        pts = _approach_points(cset, float(d), box)
        for x in pts:
            ai = cset.index_of(nearest(x, cset))
            arg = L * float(d)
            gb, ex = gamma_bar_soft(s_view, np.array([arg]))
            p = min(2 * int(gb[0]), jet.A_max)
            for alpha in multi_indices(cset.dim, min(p, 4)):
                t_val = taylor_grid(jet, ai, p, alpha, x[None, :])[0]
                tot = sum(alpha)
                s_all = np.exp(target_seq.logM[: jet.A_max + 2])
                denom = (2.0 * L) ** (tot + 1) * s_all[tot]
                tb["field_bound_C"] = max(tb["field_bound_C"], abs(t_val) / denom)
                if tot < p:
                    diff = abs(t_val - jet.value(ai, alpha))
                    small_s = np.exp(target_seq.log_m[tot + 1])
                    denom2 = ((2.0 * L) ** (tot + 1) * factorial(tot)
                              * small_s * float(d))
                    tb["increment_bound_C"] = max(tb["increment_bound_C"],
                                                  diff / denom2)

    return {"residuals": residuals, "fit": fit, "growth": growth,
            "taylor_bounds": tb, "jet_certificate_C": cert.C,
            "L": L, "mode": field.sched.mode,
            "degree_cap_hit": bool(np.any(field.sched.capped))}


def build_verified_extension(jet: Ultrajet, pou: PartitionOfUnity,
                             source, target_seq: WeightSequence, orders,
                             approach_scales, guard: float = DEFAULT_GUARD,
                             residual_cap: float | None = None) -> tuple:
    """Assemble schedule + field at L = guard * rho, doubling L until the
    residual fit succeeds under the cap (or the guard cap is hit); returns
    (field, report)."""
    rho = jet.certificate.rho if jet.certificate else 1.0
    L = guard * max(1.0, rho)
    while True:
        sched = schedule(pou.dec, source, L, A_max=jet.A_max)
        fld = extend(jet, pou, sched)
        rep = verify(fld, target_seq, orders, approach_scales)
        if rep["fit"] is not None and (
                residual_cap is None or rep["fit"]["C_prime"] <= residual_cap):
            rep["final_L"] = L
            return fld, rep
        if L >= GUARD_CAP * max(1.0, rho):
            rep["final_L"] = L
            return fld, rep
        L *= 2.0
