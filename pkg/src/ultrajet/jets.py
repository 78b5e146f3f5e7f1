"""Jets on finite compact sets: exact derivative tables, Taylor fields,
Whitney remainders, and growth certificates.

A jet is a complete table of values F^alpha(a) for every multi-index up to
an order cap and every point of a finite set.  Preset generators produce the
tables from exact derivative recurrences, so tests can treat them as ground
truth.  Certification searches the smallest constant making the two growth
bounds (pointwise derivative bound, and scaled remainder bound at every pair
and degree) hold over all stored data, by plain enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import OrderCapExceeded
from .seqcore import WeightSequence

DEFAULT_A_MAX = 12


def multi_indices(dim: int, up_to: int) -> list[tuple[int, ...]]:
    """All multi-indices with |alpha| <= up_to in graded lexicographic order."""
    if dim == 1:
        return [(k,) for k in range(up_to + 1)]
    if dim == 2:
        out = []
        for total in range(up_to + 1):
            out.extend((i, total - i) for i in range(total + 1))
        return out
    raise ValueError("only dimensions 1 and 2 are supported")


@dataclass(frozen=True)
class CompactSet:
    """Finite point set in dimension 1 or 2 with its bounding box."""

    points: np.ndarray  # shape (n_points, dim)
    box: tuple          # ((lo, hi),) * dim

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (1, 2):
            raise ValueError("points must have shape (n, 1) or (n, 2)")
        if len(pts) == 0:
            raise ValueError("compact set must be non-empty")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("points must be pairwise distinct")
        for d, (lo, hi) in enumerate(self.box):
            if np.any(pts[:, d] < lo) or np.any(pts[:, d] > hi):
                raise ValueError("points must lie inside the box")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, pts, pad: float = 2.0) -> "CompactSet":
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.shape[0] == 1 and pts.shape[1] > 2:
            pts = pts.T
        box = tuple((float(pts[:, d].min() - pad), float(pts[:, d].max() + pad))
                    for d in range(pts.shape[1]))
        return cls(pts, box)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def index_of(self, a) -> int:
        a = np.asarray(a, dtype=float).reshape(-1)
        hits = np.where(np.all(np.abs(self.points - a) < 1e-12, axis=1))[0]
        if len(hits) != 1:
            raise ValueError(f"{a} is not a point of the set")
        return int(hits[0])


# -- presets with exact derivative recurrences ----------------------------------

class Preset1D:
    """One-variable generator with an exact derivative table."""

    def table(self, x: float, up_to: int) -> np.ndarray:
        raise NotImplementedError


class Sin(Preset1D):
    def __init__(self, a: float = 1.0, b: float = 0.0):
        self.a, self.b = a, b

    def table(self, x, up_to):
        j = np.arange(up_to + 1)
        return self.a ** j * np.sin(self.a * x + self.b + j * np.pi / 2.0)


class Exp(Preset1D):
    def __init__(self, a: float = 1.0):
        self.a = a

    def table(self, x, up_to):
        j = np.arange(up_to + 1)
        return self.a ** j * np.exp(self.a * x)


class Poly(Preset1D):
    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)  # ascending powers

    def table(self, x, up_to):
        out = np.empty(up_to + 1)
        c = self.coeffs
        for j in range(up_to + 1):
            out[j] = npoly.polyval(x, c) if len(c) else 0.0
            c = npoly.polyder(c) if len(c) else c
        return out


class Runge(Preset1D):
    """1/(1 + c x^2); derivatives via the rational recurrence
    P_{k+1} = P_k' (1 + c x^2) - 2 c (k+1) x P_k over numerator polynomials."""

    def __init__(self, c: float = 1.0):
        self.c = c

    def table(self, x, up_to):
        c = self.c
        den = np.array([1.0, 0.0, c])
        p = np.array([1.0])
        out = np.empty(up_to + 1)
        base = 1.0 + c * x * x
        for k in range(up_to + 1):
            out[k] = npoly.polyval(x, p) / base ** (k + 1)
            dp = npoly.polyder(p) if len(p) > 1 else np.array([0.0])
            p = npoly.polyadd(npoly.polymul(dp, den),
                              npoly.polymul(p, np.array([0.0, -2.0 * c * (k + 1)])))
        return out


class Product1D(Preset1D):
    def __init__(self, *factors: Preset1D):
        self.factors = factors

    def table(self, x, up_to):
        out = self.factors[0].table(x, up_to)
        for f in self.factors[1:]:
            g = f.table(x, up_to)
            new = np.zeros(up_to + 1)
            for j in range(up_to + 1):
                for i in range(j + 1):
                    new[j] += _binom(j, i) * out[i] * g[j - i]
            out = new
        return out


class Sum1D(Preset1D):
    def __init__(self, *terms: Preset1D):
        self.terms = terms

    def table(self, x, up_to):
        return np.sum([t.table(x, up_to) for t in self.terms], axis=0)


class Tensor2D:
    """Separable two-variable generator f(x1) * g(x2)."""

    def __init__(self, fx: Preset1D, fy: Preset1D):
        self.fx, self.fy = fx, fy

    def table2d(self, pt, up_to):
        tx = self.fx.table(pt[0], up_to)
        ty = self.fy.table(pt[1], up_to)
        return np.outer(tx, ty)


def _binom(n, k):
    return factorial(n) // (factorial(k) * factorial(n - k))


def make_preset(spec: dict):
    """Build a preset from a config dictionary."""
    kind = spec.get("kind")
    if kind == "sin":
        return Sin(spec.get("a", 1.0), spec.get("b", 0.0))
    if kind == "exp":
        return Exp(spec.get("a", 1.0))
    if kind == "poly":
        return Poly(spec["coeffs"])
    if kind == "runge":
        return Runge(spec.get("c", 1.0))
    if kind == "product":
        return Product1D(*[make_preset(s) for s in spec["factors"]])
    if kind == "sum":
        return Sum1D(*[make_preset(s) for s in spec["terms"]])
    if kind == "tensor":
        return Tensor2D(make_preset(spec["axes"][0]), make_preset(spec["axes"][1]))
    raise ValueError(f"unknown preset kind {kind!r}")


# -- the jet table ----------------------------------------------------------------

@dataclass(frozen=True)
class JetCertificate:
    rho: float
    C: float
    seq_label: str
    P_max: int
    ok: bool
    binding: tuple = ()
    form: str = "pointwise"

    def to_dict(self):
        return {"rho": self.rho, "C": self.C, "seq": self.seq_label,
                "P_max": self.P_max, "ok": self.ok, "form": self.form,
                "binding": list(self.binding)}


@dataclass(frozen=True)
class Ultrajet:
    """Complete value table F^alpha(a), |alpha| <= A_max, a in the set."""

    cset: CompactSet
    A_max: int
    values: np.ndarray  # (n_points, n_multi)
    certificate: JetCertificate | None = None
    _multi: tuple = field(default=(), repr=False)

    def __post_init__(self):
        multi = multi_indices(self.cset.dim, self.A_max)
        if self.values.shape != (len(self.cset.points), len(multi)):
            raise ValueError("value table does not match point/order layout")
        object.__setattr__(self, "_multi", tuple(multi))

    @property
    def multi(self) -> tuple:
        return self._multi

    def rank(self, alpha) -> int:
        return self._multi.index(tuple(alpha))

    def value(self, point_index: int, alpha) -> float:
        return float(self.values[point_index, self.rank(alpha)])

    def with_certificate(self, cert: JetCertificate) -> "Ultrajet":
        return replace(self, certificate=cert)


def jet_from_preset(preset, cset: CompactSet, A_max: int = DEFAULT_A_MAX) -> Ultrajet:
    """Tabulate exact derivatives of a preset over the set."""
    multi = multi_indices(cset.dim, A_max)
    vals = np.empty((len(cset.points), len(multi)))
    for i, pt in enumerate(cset.points):
        if cset.dim == 1:
            table = preset.table(float(pt[0]), A_max)
            vals[i] = [table[a[0]] for a in multi]
        else:
            table = preset.table2d(pt, A_max)
            vals[i] = [table[a[0], a[1]] for a in multi]
    return Ultrajet(cset, A_max, vals)


def zero_jet(cset: CompactSet, A_max: int = DEFAULT_A_MAX) -> Ultrajet:
    return Ultrajet(cset, A_max, np.zeros((len(cset.points),
                                           len(multi_indices(cset.dim, A_max)))))


# -- Taylor fields and remainders ----------------------------------------------------

def taylor_grid(jet: Ultrajet, a_index: int, p: int, alpha, x) -> np.ndarray:
    """Derivative of the degree-p Taylor field from base point a, evaluated
    on an array of points: sum over beta >= alpha, |beta| <= p of
    F^beta(a) (x-a)^{beta-alpha} / (beta-alpha)!."""
    alpha = tuple(alpha)
    if p > jet.A_max:
        raise OrderCapExceeded(f"degree {p} exceeds stored order {jet.A_max}")
    if sum(alpha) > p:
        raise OrderCapExceeded(f"derivative {alpha} exceeds degree {p}")
    a = jet.cset.points[a_index]
    dim = jet.cset.dim
    x = np.asarray(x, dtype=float)
    pts = x.reshape(-1, dim)
    out = np.zeros(len(pts))
    if dim == 1:
        dx = pts[:, 0] - a[0]
        power = np.ones_like(dx)
        for j in range(0, p - alpha[0] + 1):
            out += jet.value(a_index, (alpha[0] + j,)) / factorial(j) * power
            power = power * dx
        return out
    dx = pts[:, 0] - a[0]
    dy = pts[:, 1] - a[1]
    for j1 in range(0, p - sum(alpha) + 1):
        for j2 in range(0, p - sum(alpha) - j1 + 1):
            beta = (alpha[0] + j1, alpha[1] + j2)
            out += (jet.value(a_index, beta) / (factorial(j1) * factorial(j2))
                    * dx ** j1 * dy ** j2)
    return out


def taylor(jet: Ultrajet, a, p: int, alpha, x) -> float:
    """Scalar version of :func:`taylor_grid` with the base point given by value."""
    a_index = jet.cset.index_of(a)
    return float(taylor_grid(jet, a_index, p, alpha, x)[0])


def remainder(jet: Ultrajet, a, p: int, alpha, b) -> float:
    """Whitney remainder: F^alpha(b) minus the degree-(p-|alpha|) Taylor
    field of F^alpha from a, evaluated at the set point b."""
    alpha = tuple(alpha)
    if sum(alpha) > p:
        raise OrderCapExceeded(f"derivative {alpha} exceeds degree {p}")
    if p > jet.A_max:
        raise OrderCapExceeded(f"degree {p} exceeds stored order {jet.A_max}")
    ai = jet.cset.index_of(a)
    bi = jet.cset.index_of(b)
    bb = jet.cset.points[bi]
    return float(jet.value(bi, alpha)
                 - taylor_grid(jet, ai, p, alpha, bb[None, :])[0])


# -- certification ----------------------------------------------------------------------

def certify(jet: Ultrajet, seq: WeightSequence, rho: float,
            P_max: int | None = None, form: str = "pointwise") -> JetCertificate:
    """Smallest constant C making both growth bounds hold over all stored
    data, by enumeration over (a, b, p <= P_max, alpha).

    ``form``: "pointwise" scales remainders by M_{p+1} |b-a|^{p+1-|alpha|}
    / (p+1-|alpha|)!; "factored" by |alpha|! m_{p+1} |b-a|^{p+1-|alpha|}.
    """
    if P_max is None:
        P_max = jet.A_max
    if P_max > jet.A_max:
        raise OrderCapExceeded(f"P_max {P_max} exceeds stored order {jet.A_max}")
    if form not in ("pointwise", "factored"):
        raise ValueError("form must be 'pointwise' or 'factored'")
    n_need = max(jet.A_max, P_max + 1)
    if seq.K_max < n_need:
        raise OrderCapExceeded(f"sequence table too short for order {n_need}")
    M = np.exp(seq.logM[: n_need + 1])
    m = np.exp(seq.log_m[: n_need + 1])
    best = 0.0
    binding = ()
    for i, a in enumerate(jet.cset.points):
        for r, alpha in enumerate(jet.multi):
            c = abs(jet.values[i, r]) / (rho ** sum(alpha) * M[sum(alpha)])
            if c > best:
                best, binding = c, ("value", i, alpha)
    for i, a in enumerate(jet.cset.points):
        for j, b in enumerate(jet.cset.points):
            if i == j:
                continue
            dist = float(np.linalg.norm(b - a))
            for p in range(0, P_max + 1):
                for alpha in multi_indices(jet.cset.dim, p):
                    rem = abs(jet.value(j, alpha)
                              - taylor_grid(jet, i, p, alpha, b[None, :])[0])
                    q = p + 1 - sum(alpha)
                    if form == "pointwise":
                        scale = rho ** (p + 1) * M[p + 1] * dist ** q / factorial(q)
                    else:
                        scale = (rho ** (p + 1) * factorial(sum(alpha))
                                 * m[p + 1] * dist ** q)
                    c = rem / scale
                    if c > best:
                        best, binding = c, ("remainder", i, j, p, alpha)
    return JetCertificate(rho=rho, C=best, seq_label=seq.label, P_max=P_max,
                          ok=bool(np.isfinite(best)), binding=binding, form=form)
