"""Moment functions, the product conditions they must satisfy, and the
finiteness criteria for E f(X_t) and E f(Y_t).

The usable f families carry exact tail powers (p, q) meaning
f(z) ~ z^p log^q z, which is what the tail-exponent comparison in
levy_integral consumes.  The criteria themselves are one-liners on top:
E f(X_t) is finite iff E f(X_0) is and integral_1^inf f dm converges;
with immigration the measure is m + n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cumulant import integrate_autonomous
from .errors import CannotShiftError, FirstMomentInfiniteError
from .measures import INFINITE, IntegralResult, finite, levy_integral
from .mechanisms import BranchingMechanism, ImmigrationMechanism, effective_drift


@dataclass(frozen=True)
class MomentFunction:
    """f(x) = x^p, x^p (1 + log(1 v x))^q, or x log x, optionally shifted.

    shift_a > 0 replaces f by x -> f(shift_a v x), the transform that turns a
    convex-above-c function into one that is convex, nondecreasing, > 1, and
    submultiplicative up to the constant cond_b_K.
    """

    family: str  # "power" | "power_log" | "xlogx"
    p: float = 1.0
    q: float = 0.0
    shift_a: float = 0.0
    cond_a_c: float = 0.0
    cond_b_K: float | None = None

    def __post_init__(self):
        if self.family not in ("power", "power_log", "xlogx"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.family in ("power", "power_log") and self.p <= 0:
            raise ValueError("p must be positive")
        if self.shift_a < 0:
            raise ValueError("shift_a must be nonnegative")

    def raw(self, x):
        """The unshifted formula, vectorized."""
        x = np.asarray(x, dtype=float)
        if self.family == "power":
            return x**self.p
        if self.family == "power_log":
            return x**self.p * (1.0 + np.log(np.maximum(x, 1.0))) ** self.q
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > 0.0, x * np.log(np.maximum(x, 1e-300)), 0.0)
        return out

    def __call__(self, x):
        if self.shift_a > 0.0:
            x = np.maximum(np.asarray(x, dtype=float), self.shift_a)
        out = self.raw(x)
        return float(out) if np.ndim(out) == 0 else out

    def tail_powers(self) -> tuple[float, float]:
        """(p, q) with f(z) ~ z^p log^q z as z -> inf."""
        if self.family == "power":
            return self.p, 0.0
        if self.family == "power_log":
            return self.p, self.q
        return 1.0, 1.0

    def describe(self) -> str:
        base = {
            "power": f"x^{self.p:g}",
            "power_log": f"x^{self.p:g} (1+log(1 v x))^{self.q:g}",
            "xlogx": "x log x",
        }[self.family]
        return f"{base} shifted at {self.shift_a:g}" if self.shift_a else base

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family != "xlogx":
            d["p"] = self.p
        if self.family == "power_log":
            d["q"] = self.q
        if self.shift_a:
            d["shift_a"] = self.shift_a
        return d


def power(p: float, shift_a: float = 0.0) -> MomentFunction:
    return MomentFunction("power", p=p, shift_a=shift_a)


def power_log(p: float, q: float, shift_a: float = 0.0) -> MomentFunction:
    return MomentFunction("power_log", p=p, q=q, cond_a_c=1.0, shift_a=shift_a)


def x_log_x(shift_a: float = 0.0) -> MomentFunction:
    return MomentFunction("xlogx", p=1.0, q=1.0, cond_a_c=math.e, shift_a=shift_a)


def moment_function_from_dict(d: dict) -> MomentFunction:
    fam = d["family"]
    if fam == "power":
        return power(d["p"], d.get("shift_a", 0.0))
    if fam == "power_log":
        return power_log(d["p"], d.get("q", 0.0), d.get("shift_a", 0.0))
    if fam == "xlogx":
        return x_log_x(d.get("shift_a", 0.0))
    raise ValueError(f"unknown moment function family {fam!r}")


# ---------------------------------------------------------------------------
# condition checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionBReport:
    convex_nondecreasing: bool  # (B1)
    submultiplicative: bool  # (B2) with the given K
    above_one: bool  # (B3)
    max_ratio: float  # observed sup of f(xy) / (f(x) f(y))
    worst_b1: float | None
    worst_b2: tuple[float, float] | None
    worst_b3: float | None

    @property
    def all_ok(self) -> bool:
        return self.convex_nondecreasing and self.submultiplicative and self.above_one


def _b2_lattice(f: MomentFunction, lattice_size: int) -> np.ndarray:
    pts = np.geomspace(1e-3, 1e3, lattice_size)
    extra = [0.0, 1.0, 2.0, math.e, math.e**2]
    if f.shift_a > 0:
        extra += [f.shift_a, 2.0 * f.shift_a, f.shift_a**2]
    return np.unique(np.concatenate([pts, np.asarray(extra)]))


def verify_condition_b(f: MomentFunction, lattice_size: int = 200) -> ConditionBReport:
    """Sampled check of convexity/monotonicity, submultiplicativity, f > 1."""
    if lattice_size < 100:
        raise ValueError("lattice_size must be at least 100")
    span = max(10.0 * (f.shift_a + 1.0), 50.0)
    xs = np.linspace(0.0, span, lattice_size)
    fs = np.asarray(f(xs))
    d1 = np.diff(fs)
    d2 = np.diff(fs, 2)
    tol1 = 1e-12 * (1.0 + np.abs(fs[:-1]))
    tol2 = 1e-12 * (1.0 + np.abs(fs[:-2]))
    b1 = bool((d1 >= -tol1).all() and (d2 >= -tol2).all())
    worst_b1 = None
    if not b1:
        bad = np.concatenate([np.flatnonzero(d1 < -tol1), np.flatnonzero(d2 < -tol2)])
        worst_b1 = float(xs[int(bad.min())])

    grid = _b2_lattice(f, lattice_size)
    fg = np.asarray(f(grid))
    prod = np.asarray(f(np.outer(grid, grid)))
    denom = np.outer(fg, fg)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = prod / denom
    # f(xy) <= K f(x) f(y) holds vacuously where both sides vanish and is
    # unsalvageable where only the right side does
    ratio = np.where((denom == 0.0) & (prod == 0.0), 1.0, ratio)
    ratio = np.where((denom == 0.0) & (prod > 0.0), np.inf, ratio)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    max_ratio = float(ratio[i, j])
    k = f.cond_b_K if f.cond_b_K is not None else 1.0
    b2 = max_ratio <= k * (1.0 + 1e-9)

    b3_lattice = bool((fg > 1.0).all())
    f_at_zero = float(f(0.0))
    b3 = b3_lattice and f_at_zero > 1.0
    worst_b3 = None
    if not b3:
        worst_b3 = 0.0 if f_at_zero <= 1.0 else float(grid[int(np.argmin(fg))])

    return ConditionBReport(
        convex_nondecreasing=b1,
        submultiplicative=b2,
        above_one=b3,
        max_ratio=max_ratio,
        worst_b1=worst_b1,
        worst_b2=(float(grid[i]), float(grid[j])) if not b2 else None,
        worst_b3=worst_b3,
    )


def shift_to_condition_b(f: MomentFunction, lattice_size: int = 200) -> MomentFunction:
    """Smallest grid point a in {c, c + 1/2, c + 1, ...} whose shift passes
    (B1)-(B3), with the submultiplicativity constant observed on the lattice."""
    a = f.cond_a_c
    while a <= 1e3:
        candidate = replace(f, shift_a=a, cond_b_K=None)
        report = verify_condition_b(candidate, lattice_size)
        if report.convex_nondecreasing and report.above_one and math.isfinite(report.max_ratio):
            k = report.max_ratio * (1.0 + 1e-6)
            out = replace(candidate, cond_b_K=k)
            final = verify_condition_b(out, lattice_size)
            if final.all_ok:
                return out
        a += 0.5
    raise CannotShiftError(f"no shift in [{f.cond_a_c}, 1000] satisfies the conditions")


# ---------------------------------------------------------------------------
# means and integer moments
# ---------------------------------------------------------------------------


def mean_cb(mech: BranchingMechanism, x: float, t: float) -> float:
    """E_x X_t = x e^(-b t) with b the effective drift."""
    if x < 0 or t < 0:
        raise ValueError("x, t must be nonnegative")
    return x * math.exp(-effective_drift(mech) * t)


def _bell_table(a: np.ndarray, n: int) -> np.ndarray:
    """Partial Bell polynomials B[j][k](a_1 .. a_{j-k+1}) for j, k <= n."""
    table = np.zeros((n + 1, n + 1))
    table[0, 0] = 1.0
    for j in range(1, n + 1):
        for k in range(1, j + 1):
            acc = 0.0
            for i in range(1, j - k + 2):
                acc += math.comb(j - 1, i - 1) * a[i - 1] * table[j - i, k - 1]
            table[j, k] = acc
    return table


def _phi_derivatives_at_zero(mech: BranchingMechanism, n: int) -> np.ndarray:
    """[phi'(0), phi''(0), ..., phi^(n)(0)]; needs the first n tail moments."""
    out = np.zeros(n)
    out[0] = effective_drift(mech)
    if n >= 2:
        m2 = mech.m.partial_moment(2, 0.0, math.inf)
        if math.isinf(m2):
            raise FirstMomentInfiniteError("integral z^2 m(dz) diverges")
        out[1] = mech.sigma**2 + m2
    for j in range(3, n + 1):
        mj = mech.m.partial_moment(j, 0.0, math.inf)
        if math.isinf(mj):
            raise FirstMomentInfiniteError(f"integral z^{j} m(dz) diverges")
        out[j - 1] = (-1.0) ** j * mj
    return out


def cumulant_lambda_derivatives(
    mech: BranchingMechanism,
    n: int,
    t: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """a_j(t) = d^j v_t / d lam^j at lam = 0, j = 1..n, via the sensitivity system.

    Differentiating dv/dt = -phi(v) j times at lam = 0 (where v = 0) gives the
    triangular system da_j/dt = -sum_k phi^(k)(0) B_{j,k}(a_1, ..), a_1(0) = 1.
    """
    if n < 1 or n > 6:
        raise ValueError("order must be between 1 and 6")
    phi0 = _phi_derivatives_at_zero(mech, n)

    def rhs(a):
        table = _bell_table(a, n)
        return -np.array([phi0[:j] @ table[j, 1 : j + 1] for j in range(1, n + 1)])

    a0 = np.zeros(n)
    a0[0] = 1.0
    if t == 0.0:
        return a0
    sol = integrate_autonomous(rhs, a0, t, rtol=rtol, atol=atol)
    return np.atleast_1d(sol(t))


def integer_moment(
    mech: BranchingMechanism, x: float, n: int, t: float, rtol: float = 1e-10
) -> IntegralResult:
    """E_x X_t^n, or the infinite verdict when the jump tail forbids it.

    Finite iff integral_1^inf z^n m(dz) < inf; the value comes from the
    lam-derivatives of exp(-x v_t(lam)) at 0 assembled with Bell polynomials.
    """
    if n < 1 or n > 6:
        raise ValueError("n must be between 1 and 6")
    gate = levy_integral(mech.m, power(float(n)), 1.0)
    if not gate.is_finite:
        return gate
    a = cumulant_lambda_derivatives(mech, n, t, rtol=rtol)
    g = -x * a
    table = _bell_table(g, n)
    value = (-1.0) ** n * float(table[n, 1 : n + 1].sum())
    return finite(value)


# ---------------------------------------------------------------------------
# the finiteness criteria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriterionResult:
    verdict: str  # "finite" | "infinite" | "undetermined"
    reason: str
    integral: IntegralResult | None = None

    @property
    def is_finite(self) -> bool:
        return self.verdict == "finite"


def cb_f_moment_finite(
    mech: BranchingMechanism, f: MomentFunction, x0_f_finite: bool = True
) -> CriterionResult:
    """E f(X_t) finite (t > 0) iff E f(X_0) finite and integral_1^inf f dm finite."""
    if not x0_f_finite:
        return CriterionResult("infinite", "E f(X_0) is infinite")
    res = levy_integral(mech.m, f, 1.0)
    if res.is_finite:
        return CriterionResult("finite", "initial moment and jump-tail integral both finite", res)
    if res.is_infinite:
        return CriterionResult("infinite", "integral_1^inf f(z) m(dz) diverges", res)
    return CriterionResult("undetermined", "branching measure tail undeclared", res)


def cbi_f_moment_finite(
    mech: BranchingMechanism,
    imm: ImmigrationMechanism,
    f: MomentFunction,
    y0_f_finite: bool = True,
) -> CriterionResult:
    """E f(Y_t) finite iff E f(Y_0) finite and integral_1^inf f d(m+n) finite."""
    if not y0_f_finite:
        return CriterionResult("infinite", "E f(Y_0) is infinite")
    res_m = levy_integral(mech.m, f, 1.0)
    if res_m.is_infinite:
        return CriterionResult("infinite", "integral_1^inf f(z) m(dz) diverges", res_m)
    res_n = levy_integral(imm.n, f, 1.0)
    if res_n.is_infinite:
        return CriterionResult("infinite", "integral_1^inf f(z) n(dz) diverges", res_n)
    if res_m.is_undetermined or res_n.is_undetermined:
        which = "branching" if res_m.is_undetermined else "immigration"
        return CriterionResult("undetermined", f"{which} measure tail undeclared")
    return CriterionResult(
        "finite",
        "initial moment and both jump-tail integrals finite",
        finite(res_m.value + res_n.value),
    )
