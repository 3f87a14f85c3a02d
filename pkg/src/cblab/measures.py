"""Parametric Levy measures on (0, inf).

Every measure here is a closed-form family, so integrability questions
(is integral (1 ^ z^2) dmu finite? is integral_1^inf f dmu finite?) are
decidable, not just estimable.  Interval conventions follow the usual
branching-process ones: partial_moment(j, a, b) integrates over (a, b],
mass_above(a) is mu((a, inf)).

Divergent scalar queries return math.inf; the typed outcomes live in
IntegralResult, produced by levy_integral and the admissibility checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    EmptyTailError,
    InternalInconsistencyError,
    UndeterminedTailError,
)
from .special import (
    compensated_power_integral,
    expm1_plus,
    lower_gamma,
    one_minus_exp,
    one_minus_exp_power_integral,
    upper_gamma,
)

INF = math.inf

_QUAD_OPTS = dict(epsabs=1e-13, epsrel=1e-11, limit=200)


@dataclass(frozen=True)
class IntegralResult:
    """Outcome of an integral whose finiteness is part of the answer."""

    kind: str  # "finite" | "infinite" | "undetermined"
    value: float | None = None

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_infinite(self) -> bool:
        return self.kind == "infinite"

    @property
    def is_undetermined(self) -> bool:
        return self.kind == "undetermined"


def finite(value: float) -> IntegralResult:
    return IntegralResult("finite", float(value))


INFINITE = IntegralResult("infinite")
UNDETERMINED = IntegralResult("undetermined")


class LevyMeasure:
    """Shared interface; concrete families are the frozen dataclasses below."""

    # -- primitive queries -------------------------------------------------

    def partial_moment(self, j: int, a: float, b: float) -> float:
        """integral_(a,b] z^j dmu; math.inf when divergent."""
        raise NotImplementedError

    def exp_partial(self, lam: float, a: float, b: float = INF) -> float:
        """integral_(a,b] e^(-lam z) dmu, a > 0."""
        raise NotImplementedError

    def compensated_exp_integral(self, lam: float) -> float:
        """integral (e^(-lam z) - 1 + lam z 1{z<=1}) dmu."""
        raise NotImplementedError

    def one_minus_exp_integral(self, lam: float) -> float:
        """integral (1 - e^(-lam z)) dmu; math.inf when inadmissible."""
        raise NotImplementedError

    def sample_above(self, a: float, rng, size: int | None = None):
        """Draw from mu restricted to (a, inf), normalized."""
        raise NotImplementedError

    def tail_exponent(self) -> float | None:
        """Power decay rate of the tail; math.inf if lighter than any power,
        None if unknown."""
        raise NotImplementedError

    def density(self, z):
        """Lebesgue density at z (absolutely continuous families only)."""
        raise NotImplementedError

    def support_upper(self) -> float:
        return INF

    def point_mass(self, z: float) -> float:
        return 0.0

    # -- derived conveniences ----------------------------------------------

    def mass_above(self, a: float) -> float:
        return self.partial_moment(0, a, INF)

    def mean_above(self, a: float) -> float:
        return self.partial_moment(1, a, INF)

    def one_wedge_z(self) -> float:
        """integral (1 ^ z) dmu."""
        return self.partial_moment(1, 0.0, 1.0) + self.mass_above(1.0)

    def one_wedge_z2(self) -> float:
        """integral (1 ^ z^2) dmu."""
        return self.partial_moment(2, 0.0, 1.0) + self.mass_above(1.0)

    def is_zero(self) -> bool:
        return False

    def sample_between(self, lo: float, hi: float, rng, size: int):
        """Rejection-sample mu restricted to (lo, hi]."""
        if self.partial_moment(0, lo, hi) <= 0.0:
            raise EmptyTailError(f"no mass in ({lo}, {hi}]")
        out = np.asarray(self.sample_above(lo, rng, size), dtype=float)
        bad = out > hi
        while bad.any():
            out[bad] = self.sample_above(lo, rng, int(bad.sum()))
            bad = out > hi
        return out

    def to_dict(self) -> dict:
        raise NotImplementedError


def _power_between(j: int, alpha: float, c: float, lo: float, hi: float) -> float:
    """c * integral_lo^hi z^(j-1-alpha) dz with divergences mapped to inf."""
    if hi <= lo:
        return 0.0
    p = j - alpha  # integrand exponent + 1
    if hi == INF and p >= 0.0:
        return INF
    if lo == 0.0 and p <= 0.0:
        return INF
    if p == 0.0:
        return c * (math.log(hi) - math.log(lo))
    upper = 0.0 if hi == INF else hi**p
    lower = 0.0 if lo == 0.0 else lo**p
    return c * (upper - lower) / p


@dataclass(frozen=True)
class PowerTail(LevyMeasure):
    """Density c z^(-1-alpha) on (z_lo, inf)."""

    c: float
    alpha: float
    z_lo: float = 0.0

    def __post_init__(self):
        if self.c <= 0 or self.alpha <= 0 or self.z_lo < 0:
            raise ValueError("PowerTail needs c > 0, alpha > 0, z_lo >= 0")

    def partial_moment(self, j, a, b):
        return _power_between(j, self.alpha, self.c, max(a, self.z_lo), b)

    def exp_partial(self, lam, a, b=INF):
        lo = max(a, self.z_lo)
        if b <= lo:
            return 0.0
        if lam == 0.0:
            return self.partial_moment(0, a, b)
        out = upper_gamma(-self.alpha, lam * lo)
        if b < INF:
            out -= upper_gamma(-self.alpha, lam * b)
        return self.c * lam**self.alpha * out

    def compensated_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        if self.z_lo == 0.0 and self.alpha >= 2.0:
            raise InternalInconsistencyError("integral (1 ^ z^2) dmu diverges")
        a = self.alpha
        if self.z_lo >= 1.0:
            return self.exp_partial(lam, self.z_lo) - self.mass_above(self.z_lo)
        small = self.c * lam**a * compensated_power_integral(lam * self.z_lo, lam, a)
        big = self.c * (lam**a * upper_gamma(-a, lam) - 1.0 / a)
        return small + big

    def one_minus_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        a = self.alpha
        if self.z_lo == 0.0:
            if a >= 1.0:
                return INF
            return self.c * math.gamma(1.0 - a) / a * lam**a
        return self.mass_above(self.z_lo) - self.exp_partial(lam, self.z_lo)

    def sample_above(self, a, rng, size=None):
        lo = max(a, self.z_lo)
        u = rng.random(size)
        return lo * (1.0 - u) ** (-1.0 / self.alpha)

    def tail_exponent(self):
        return self.alpha

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z > self.z_lo, self.c * z ** (-1.0 - self.alpha), 0.0)

    def to_dict(self):
        d = {"kind": "power_tail", "c": self.c, "alpha": self.alpha}
        if self.z_lo:
            d["z_lo"] = self.z_lo
        return d


@dataclass(frozen=True)
class TemperedPowerTail(LevyMeasure):
    """Density c z^(-1-alpha) e^(-theta z) on (0, inf)."""

    c: float
    alpha: float
    theta: float

    def __post_init__(self):
        if self.c <= 0 or self.alpha <= 0 or self.theta <= 0:
            raise ValueError("TemperedPowerTail needs c, alpha, theta > 0")

    def partial_moment(self, j, a, b):
        s = j - self.alpha
        th = self.theta
        if a == 0.0:
            if s <= 0.0:
                return INF
            head = lower_gamma(s, th * b) if b < INF else math.gamma(s)
            return self.c * th**-s * head
        out = upper_gamma(s, th * a)
        if b < INF:
            out -= upper_gamma(s, th * b)
        return self.c * th**-s * out

    def exp_partial(self, lam, a, b=INF):
        if b <= a:
            return 0.0
        mu = lam + self.theta
        out = upper_gamma(-self.alpha, mu * a)
        if b < INF:
            out -= upper_gamma(-self.alpha, mu * b)
        return self.c * mu**self.alpha * out

    def compensated_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        a, th = self.alpha, self.theta
        if a >= 2.0:
            raise InternalInconsistencyError("integral (1 ^ z^2) dmu diverges")
        mu = th + lam
        small = (
            mu**a * compensated_power_integral(0.0, mu, a)
            - th**a * compensated_power_integral(0.0, th, a)
            - lam * th ** (a - 1.0) * one_minus_exp_power_integral(0.0, th, a)
        )
        big = mu**a * upper_gamma(-a, mu) - th**a * upper_gamma(-a, th)
        return self.c * (small + big)

    def one_minus_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        a = self.alpha
        if a >= 1.0:
            return INF
        mu = self.theta + lam
        return self.c * math.gamma(1.0 - a) / a * (mu**a - self.theta**a)

    def sample_above(self, a, rng, size=None):
        if a <= 0.0:
            raise ValueError("sample_above needs a > 0")
        shape = 1 if size is None else int(size)
        out = np.empty(shape, dtype=float)
        todo = np.ones(shape, dtype=bool)
        while todo.any():
            k = int(todo.sum())
            z = a * (1.0 - rng.random(k)) ** (-1.0 / self.alpha)
            accept = rng.random(k) < np.exp(-self.theta * (z - a))
            idx = np.flatnonzero(todo)[accept]
            out[idx] = z[accept]
            todo[idx] = False
        return out if size is not None else float(out[0])

    def tail_exponent(self):
        return INF

    def density(self, z):
        z = np.asarray(z, dtype=float)
        return self.c * z ** (-1.0 - self.alpha) * np.exp(-self.theta * z)

    def to_dict(self):
        return {"kind": "tempered_power_tail", "c": self.c, "alpha": self.alpha, "theta": self.theta}


@dataclass(frozen=True)
class FiniteAtoms(LevyMeasure):
    """Atoms w_i at locations z_i > 0; the empty tuple is the zero measure."""

    atoms: tuple = ()

    def __post_init__(self):
        cleaned = tuple(sorted((float(z), float(w)) for z, w in self.atoms))
        if any(z <= 0 or w <= 0 for z, w in cleaned):
            raise ValueError("atoms need z > 0 and w > 0")
        object.__setattr__(self, "atoms", cleaned)

    def is_zero(self):
        return not self.atoms

    def partial_moment(self, j, a, b):
        return sum(w * z**j for z, w in self.atoms if a < z <= b)

    def exp_partial(self, lam, a, b=INF):
        return sum(w * math.exp(-lam * z) for z, w in self.atoms if a < z <= b)

    def compensated_exp_integral(self, lam):
        out = 0.0
        for z, w in self.atoms:
            u = lam * z
            out += w * (expm1_plus(u) if z <= 1.0 else math.expm1(-u))
        return out

    def one_minus_exp_integral(self, lam):
        return sum(w * one_minus_exp(lam * z) for z, w in self.atoms)

    def sample_above(self, a, rng, size=None):
        zs = np.array([z for z, _ in self.atoms if z > a])
        ws = np.array([w for z, w in self.atoms if z > a])
        if zs.size == 0:
            raise EmptyTailError(f"no atoms above {a}")
        picks = rng.choice(zs.size, size=size, p=ws / ws.sum())
        return zs[picks]

    def tail_exponent(self):
        return INF

    def support_upper(self):
        return self.atoms[-1][0] if self.atoms else 0.0

    def point_mass(self, z):
        return sum(w for zz, w in self.atoms if zz == z)

    def to_dict(self):
        return {"kind": "finite_atoms", "atoms": [[z, w] for z, w in self.atoms]}


ZERO = FiniteAtoms(())


@dataclass(frozen=True)
class ScaledSum(LevyMeasure):
    """Positive combination sum_i w_i mu_i."""

    components: tuple = ()  # of (weight, LevyMeasure)

    def __post_init__(self):
        comps = tuple((float(w), m) for w, m in self.components)
        if not comps or any(w <= 0 for w, _ in comps):
            raise ValueError("ScaledSum needs at least one component, weights > 0")
        object.__setattr__(self, "components", comps)

    def partial_moment(self, j, a, b):
        return sum(w * m.partial_moment(j, a, b) for w, m in self.components)

    def exp_partial(self, lam, a, b=INF):
        return sum(w * m.exp_partial(lam, a, b) for w, m in self.components)

    def compensated_exp_integral(self, lam):
        return sum(w * m.compensated_exp_integral(lam) for w, m in self.components)

    def one_minus_exp_integral(self, lam):
        return sum(w * m.one_minus_exp_integral(lam) for w, m in self.components)

    def sample_above(self, a, rng, size=None):
        masses = np.array([w * m.mass_above(a) for w, m in self.components])
        total = masses.sum()
        if total <= 0.0:
            raise EmptyTailError(f"no mass above {a}")
        n = 1 if size is None else int(size)
        picks = rng.choice(len(self.components), size=n, p=masses / total)
        out = np.empty(n, dtype=float)
        for i, (_, m) in enumerate(self.components):
            sel = picks == i
            if sel.any():
                out[sel] = m.sample_above(a, rng, int(sel.sum()))
        return out if size is not None else float(out[0])

    def tail_exponent(self):
        tails = [m.tail_exponent() for _, m in self.components]
        if any(t is None for t in tails):
            return None
        return min(tails)

    def support_upper(self):
        return max(m.support_upper() for _, m in self.components)

    def point_mass(self, z):
        return sum(w * m.point_mass(z) for w, m in self.components)

    def density(self, z):
        return sum(w * m.density(z) for w, m in self.components)

    def to_dict(self):
        return {
            "kind": "scaled_sum",
            "components": [{"weight": w, "measure": m.to_dict()} for w, m in self.components],
        }


@dataclass(frozen=True)
class Tabulated(LevyMeasure):
    """Piecewise-linear density on a grid, with a declared tail beyond it.

    tail_alpha declares a Pareto continuation matched at the last node;
    unbounded_unknown=True admits that mass continues past the grid with
    unknown decay, which turns finiteness queries into 'undetermined' and
    makes numeric tail queries raise.
    """

    zs: tuple
    densities: tuple
    tail_alpha: float | None = None
    unbounded_unknown: bool = False

    def __post_init__(self):
        zs = tuple(float(z) for z in self.zs)
        ds = tuple(float(d) for d in self.densities)
        if len(zs) != len(ds) or len(zs) < 2:
            raise ValueError("need matching grids with at least two nodes")
        if zs[0] <= 0 or any(b <= a for a, b in zip(zs, zs[1:])):
            raise ValueError("grid must be positive and strictly increasing")
        if any(d < 0 for d in ds):
            raise ValueError("densities must be nonnegative")
        if self.tail_alpha is not None and self.unbounded_unknown:
            raise ValueError("declared tail and unknown tail are exclusive")
        if self.tail_alpha is not None and self.tail_alpha <= 0:
            raise ValueError("tail_alpha must be positive")
        object.__setattr__(self, "zs", zs)
        object.__setattr__(self, "densities", ds)

    def _continuation(self) -> PowerTail | None:
        if self.tail_alpha is None:
            return None
        zk, dk = self.zs[-1], self.densities[-1]
        if dk == 0.0:
            return None
        return PowerTail(c=dk * zk ** (1.0 + self.tail_alpha), alpha=self.tail_alpha, z_lo=zk)

    def _require_known_tail(self):
        if self.unbounded_unknown:
            raise UndeterminedTailError("tabulated measure has an undeclared tail")

    def _grid_quad(self, fn, a, b):
        """integral of fn(z) * density(z) over the grid part of (a, b]."""
        lo = max(a, self.zs[0])
        hi = min(b, self.zs[-1])
        if hi <= lo:
            return 0.0
        pts = [z for z in self.zs if lo < z < hi]
        val, _ = integrate.quad(
            lambda z: fn(z) * float(self.density(z)), lo, hi, points=pts, **_QUAD_OPTS
        )
        return val

    def partial_moment(self, j, a, b):
        out = self._grid_quad(lambda z: z**j, a, b)
        if b > self.zs[-1]:
            cont = self._continuation()
            if cont is not None:
                out += cont.partial_moment(j, max(a, self.zs[-1]), b)
            else:
                self._require_known_tail()
        return out

    def exp_partial(self, lam, a, b=INF):
        out = self._grid_quad(lambda z: math.exp(-lam * z), a, b)
        if b > self.zs[-1]:
            cont = self._continuation()
            if cont is not None:
                out += cont.exp_partial(lam, max(a, self.zs[-1]), b)
            else:
                self._require_known_tail()
        return out

    def compensated_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        out = self._grid_quad(
            lambda z: expm1_plus(lam * z) if z <= 1.0 else math.expm1(-lam * z),
            0.0,
            self.zs[-1],
        )
        cont = self._continuation()
        if cont is not None:
            out += cont.compensated_exp_integral(lam)
        else:
            self._require_known_tail()
        return out

    def one_minus_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        out = self._grid_quad(lambda z: one_minus_exp(lam * z), 0.0, self.zs[-1])
        cont = self._continuation()
        if cont is not None:
            out += cont.one_minus_exp_integral(lam)
        else:
            self._require_known_tail()
        return out

    def sample_above(self, a, rng, size=None):
        self._require_known_tail()
        grid_mass = self._grid_quad(lambda z: 1.0, a, self.zs[-1])
        cont = self._continuation()
        tail_mass = 0.0 if cont is None else cont.mass_above(a)
        total = grid_mass + tail_mass
        if total <= 0.0:
            raise EmptyTailError(f"no mass above {a}")
        n = 1 if size is None else int(size)
        from_tail = rng.random(n) < tail_mass / total
        out = np.empty(n, dtype=float)
        k = int(from_tail.sum())
        if k:
            out[from_tail] = cont.sample_above(a, rng, k)
        if n - k:
            out[~from_tail] = self._sample_grid(max(a, self.zs[0]), rng, n - k)
        return out if size is not None else float(out[0])

    def _sample_grid(self, a, rng, n):
        """Inverse-CDF draw from the piecewise-linear part restricted to (a, z_K]."""
        zs = np.asarray(self.zs)
        lo = max(a, zs[0])
        nodes = np.unique(np.concatenate([[lo], zs[zs > lo]]))
        # segment mass is exact for a linear density: mean endpoint value x width
        d0 = np.asarray(self.density(nodes[:-1]))
        d1 = np.asarray(self.density(nodes[1:]))
        seg_mass = 0.5 * (d0 + d1) * np.diff(nodes)
        total = seg_mass.sum()
        seg = rng.choice(seg_mass.size, size=n, p=seg_mass / total)
        u = rng.random(n)
        z0, z1 = nodes[seg], nodes[seg + 1]
        a0, a1 = d0[seg], d1[seg]
        width = z1 - z0
        slope = (a1 - a0) / width
        # solve a0 t + slope t^2 / 2 = u * (segment mass) for t in (0, width]
        m = u * seg_mass[seg]
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(
                np.abs(slope) < 1e-14 * np.maximum(a0, 1e-300),
                m / np.maximum(a0, 1e-300),
                (np.sqrt(np.maximum(a0 * a0 + 2.0 * slope * m, 0.0)) - a0)
                / np.where(slope == 0.0, 1.0, slope),
            )
        return z0 + np.clip(t, 0.0, width)

    def tail_exponent(self):
        if self.tail_alpha is not None:
            return self.tail_alpha
        return None if self.unbounded_unknown else INF

    def support_upper(self):
        return INF if (self.tail_alpha is not None or self.unbounded_unknown) else self.zs[-1]

    def density(self, z):
        z = np.asarray(z, dtype=float)
        out = np.interp(z, self.zs, self.densities, left=0.0, right=0.0)
        cont = self._continuation()
        if cont is not None:
            out = np.where(z > self.zs[-1], cont.density(z), out)
        return out

    def to_dict(self):
        d = {"kind": "tabulated", "zs": list(self.zs), "densities": list(self.densities)}
        if self.tail_alpha is not None:
            d["tail_alpha"] = self.tail_alpha
        if self.unbounded_unknown:
            d["tail"] = "unknown"
        return d


@dataclass(frozen=True)
class Truncated(LevyMeasure):
    """Image of a measure under z -> z ^ k: tail mass collapses to an atom at k."""

    inner: LevyMeasure
    k: float

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("truncation point must be positive")

    def _atom(self) -> float:
        return self.inner.mass_above(self.k) + self.inner.point_mass(self.k)

    def partial_moment(self, j, a, b):
        if a >= self.k:
            return 0.0
        out = self.inner.partial_moment(j, a, min(b, self.k))
        if b >= self.k:
            # (a, k) open part plus the collapsed atom; the inner point mass at k
            # cancels between the two terms
            out += self.k**j * self.inner.mass_above(self.k)
        return out

    def exp_partial(self, lam, a, b=INF):
        if a >= self.k:
            return 0.0
        out = self.inner.exp_partial(lam, a, min(b, self.k))
        if b >= self.k:
            out += math.exp(-lam * self.k) * self.inner.mass_above(self.k)
        return out

    def compensated_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        if self.k < 1.0:
            raise InternalInconsistencyError("truncation below 1 not supported")
        return (
            self.inner.compensated_exp_integral(lam)
            - self.inner.exp_partial(lam, self.k)
            + math.exp(-lam * self.k) * self.inner.mass_above(self.k)
        )

    def one_minus_exp_integral(self, lam):
        if lam == 0.0:
            return 0.0
        return (
            self.inner.one_minus_exp_integral(lam)
            + self.inner.exp_partial(lam, self.k)
            - math.exp(-lam * self.k) * self.inner.mass_above(self.k)
        )

    def sample_above(self, a, rng, size=None):
        if a >= self.k:
            raise EmptyTailError(f"no mass above {a} after truncation at {self.k}")
        return np.minimum(self.inner.sample_above(a, rng, size), self.k)

    def tail_exponent(self):
        return INF

    def support_upper(self):
        return self.k

    def point_mass(self, z):
        if z == self.k:
            return self._atom()
        return self.inner.point_mass(z) if z < self.k else 0.0

    def is_zero(self):
        return self.inner.is_zero()

    def to_dict(self):
        return {"kind": "truncated", "k": self.k, "inner": self.inner.to_dict()}


def measure_from_dict(d: dict | None) -> LevyMeasure:
    """Inverse of to_dict; None or kind 'zero' gives the zero measure."""
    if d is None:
        return ZERO
    kind = d.get("kind")
    if kind in (None, "zero"):
        return ZERO
    if kind == "power_tail":
        return PowerTail(c=d["c"], alpha=d["alpha"], z_lo=d.get("z_lo", 0.0))
    if kind == "tempered_power_tail":
        return TemperedPowerTail(c=d["c"], alpha=d["alpha"], theta=d["theta"])
    if kind == "finite_atoms":
        return FiniteAtoms(tuple((z, w) for z, w in d.get("atoms", [])))
    if kind == "scaled_sum":
        return ScaledSum(
            tuple((c["weight"], measure_from_dict(c["measure"])) for c in d["components"])
        )
    if kind == "tabulated":
        return Tabulated(
            zs=tuple(d["zs"]),
            densities=tuple(d["densities"]),
            tail_alpha=d.get("tail_alpha"),
            unbounded_unknown=d.get("tail") == "unknown",
        )
    if kind == "truncated":
        return Truncated(inner=measure_from_dict(d["inner"]), k=d["k"])
    raise ValueError(f"unknown measure kind: {kind!r}")


# ---------------------------------------------------------------------------
# f-integrals over the tail: the decidable core of the moment criteria.
# ---------------------------------------------------------------------------


def _compare_tail(p: float, q: float, alpha: float) -> bool:
    """Is integral^inf z^p (log z)^q z^(-1-alpha) dz finite?"""
    if p < alpha:
        return True
    if p > alpha:
        return False
    return q < -1.0


def _power_tail_f_tail(c: float, alpha: float, a: float, f) -> float:
    """Closed forms for integral_a^inf f(z) c z^(-1-alpha) dz, f unshifted there."""
    p, q = f.tail_powers()
    s = alpha - p
    if f.family == "power":
        return c * a ** (-s) / s
    if f.family == "xlogx":
        big_a = math.log(a)
        return c * math.exp(-s * big_a) * (big_a / s + 1.0 / (s * s))
    # power_log: f(z) = z^p (1 + log z)^q on z >= 1
    x0 = s * (1.0 + math.log(a))
    return c * math.exp(s) * s ** (-q - 1.0) * upper_gamma(q + 1.0, x0)


def f_integral_between(mu: LevyMeasure, f, a: float, b: float) -> float:
    """integral_(a,b] f dmu for finite b; always finite for our families."""
    if b <= a:
        return 0.0
    if isinstance(mu, FiniteAtoms):
        return sum(w * float(f(z)) for z, w in mu.atoms if a < z <= b)
    if isinstance(mu, ScaledSum):
        return sum(w * f_integral_between(m, f, a, b) for w, m in mu.components)
    if isinstance(mu, Truncated):
        out = f_integral_between(mu.inner, f, a, min(b, mu.k))
        if b >= mu.k:
            out += float(f(mu.k)) * mu.inner.mass_above(mu.k)
        return out
    if isinstance(mu, Tabulated):
        out = mu._grid_quad(lambda z: float(f(z)), a, b)
        cont = mu._continuation()
        if b > mu.zs[-1]:
            if cont is not None:
                out += f_integral_between(cont, f, max(a, mu.zs[-1]), b)
            else:
                mu._require_known_tail()
        return out
    lo = max(a, getattr(mu, "z_lo", 0.0))
    if b <= lo:
        return 0.0
    val, _ = integrate.quad(
        lambda z: float(f(z)) * float(mu.density(z)), lo, b, **_QUAD_OPTS
    )
    return val


def levy_integral(mu: LevyMeasure, f, lower: float = 1.0) -> IntegralResult:
    """Decide and evaluate integral_lower^inf f(z) dmu.

    Finiteness is settled by comparing tail exponents, never by quadrature;
    the p = alpha and q = -1 boundaries are exact comparisons.
    """
    if lower < 0.0:
        raise ValueError("lower must be nonnegative")
    te = mu.tail_exponent()
    if te is None:
        return UNDETERMINED
    p, q = f.tail_powers()
    if te != INF and not _compare_tail(p, q, te):
        return INFINITE

    if isinstance(mu, ScaledSum):
        total = 0.0
        for w, m in mu.components:
            part = levy_integral(m, f, lower)
            if not part.is_finite:
                return part
            total += w * part.value
        return finite(total)

    top = mu.support_upper()
    if top < INF:
        return finite(f_integral_between(mu, f, lower, top))

    if isinstance(mu, PowerTail):
        # integrate any shifted head by quadrature, then exact closed-form tail
        split = max(lower, mu.z_lo, getattr(f, "shift_a", 0.0), math.e)
        head = f_integral_between(mu, f, lower, split)
        return finite(head + _power_tail_f_tail(mu.c, mu.alpha, split, f))

    if isinstance(mu, Tabulated):
        cont = mu._continuation()
        head = f_integral_between(mu, f, lower, mu.zs[-1])
        if cont is None:
            return finite(head)  # zero-density continuation
        tail = levy_integral(cont, f, max(lower, mu.zs[-1]))
        return finite(head + tail.value)

    # light unbounded tail (tempered): cutoff quadrature plus a certified bound
    split = max(lower, getattr(f, "shift_a", 0.0), math.e)
    total = f_integral_between(mu, f, lower, split)
    m_exp = max(1, math.ceil(p + max(q, 0.0) + 1.0))
    while True:
        nxt = split * 2.0
        total += f_integral_between(mu, f, split, nxt)
        split = nxt
        # f(z) <= (f(split)/split^m) z^m beyond split, so the remainder is under
        # (f(split)/split^m) * integral_split^inf z^m dmu
        bound = float(f(split)) / split**m_exp * mu.partial_moment(m_exp, split, INF)
        if bound <= 1e-9 * max(abs(total), 1e-300):
            return finite(total + 0.0)
        if split > 1e9:
            raise InternalInconsistencyError("tail bound failed to shrink")
