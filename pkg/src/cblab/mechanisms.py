"""Branching and immigration mechanisms built from Levy triplets.

A branching mechanism is

    phi(lam) = beta lam + sigma^2 lam^2 / 2
               + integral (e^(-z lam) - 1 + z lam 1{z<=1}) m(dz)

with integral (1 ^ z^2) m(dz) < inf, and an immigration mechanism is

    psi(lam) = h lam + integral (1 - e^(-lam z)) n(dz)

with integral (1 ^ z) n(dz) < inf.  Both are immutable; admissibility is
checked when they are built.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from functools import cached_property

from .errors import (
    EmptyTailError,
    FirstMomentInfiniteError,
    InadmissibleMeasureError,
    UndeterminedTailError,
)
from .measures import FiniteAtoms, LevyMeasure, PowerTail, Truncated, ZERO


class GreyStatus(enum.Enum):
    """Verdict on the non-explosion condition integral_0+ dlam / phi(lam) = inf."""

    HOLDS = "holds"
    FAILS = "fails"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class Admissibility:
    status: str  # "ok" | "fails" | "undetermined"
    failing_integral: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def check_admissibility(mu: LevyMeasure, kind: str) -> Admissibility:
    """kind 'branching' tests integral (1 ^ z^2) dmu, 'immigration' integral (1 ^ z)."""
    if kind not in ("branching", "immigration"):
        raise ValueError("kind must be 'branching' or 'immigration'")
    name = "integral (1 ^ z^2) dmu" if kind == "branching" else "integral (1 ^ z) dmu"
    try:
        value = mu.one_wedge_z2() if kind == "branching" else mu.one_wedge_z()
    except UndeterminedTailError:
        return Admissibility("undetermined", name)
    if math.isinf(value):
        return Admissibility("fails", name)
    return Admissibility("ok")


@dataclass(frozen=True)
class BranchingMechanism:
    beta: float = 0.0
    sigma: float = 0.0
    m: LevyMeasure = ZERO

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        adm = check_admissibility(self.m, "branching")
        if adm.status == "fails":
            raise InadmissibleMeasureError(f"branching measure: {adm.failing_integral} = inf")

    def phi(self, lam: float) -> float:
        """Evaluate the branching mechanism at lam >= 0."""
        if lam < 0:
            raise ValueError("phi is defined for lam >= 0")
        out = self.beta * lam + 0.5 * self.sigma**2 * lam * lam
        if not self.m.is_zero():
            out += self.m.compensated_exp_integral(lam)
        return out

    @cached_property
    def grey(self) -> GreyStatus:
        return grey_check(self)

    @cached_property
    def mech_id(self) -> str:
        text = repr(("branching", self.beta, self.sigma, self.m.to_dict()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"beta": self.beta, "sigma": self.sigma, "measure": self.m.to_dict()}


@dataclass(frozen=True)
class ImmigrationMechanism:
    h: float = 0.0
    n: LevyMeasure = ZERO

    def __post_init__(self):
        if self.h < 0:
            raise ValueError("h must be nonnegative")
        adm = check_admissibility(self.n, "immigration")
        if adm.status == "fails":
            raise InadmissibleMeasureError(f"immigration measure: {adm.failing_integral} = inf")

    def psi(self, lam: float) -> float:
        """Evaluate the immigration mechanism at lam >= 0."""
        if lam < 0:
            raise ValueError("psi is defined for lam >= 0")
        out = self.h * lam
        if not self.n.is_zero():
            out += self.n.one_minus_exp_integral(lam)
        return out

    def is_trivial(self) -> bool:
        return self.h == 0.0 and self.n.is_zero()

    def to_dict(self) -> dict:
        return {"h": self.h, "measure": self.n.to_dict()}


def phi_eval(mech: BranchingMechanism, lam: float) -> float:
    return mech.phi(lam)


def psi_eval(imm: ImmigrationMechanism, lam: float) -> float:
    return imm.psi(lam)


def grey_check(mech: BranchingMechanism) -> GreyStatus:
    """Classify whether integral_0+ dlam / phi(lam) diverges (no explosion).

    Near zero phi(lam)/lam converges to beta - integral_1^inf z m(dz), so the
    condition holds whenever the big-jump mean is finite (at most linear decay
    of phi at 0, including phi identically zero).  A jump tail with power
    exponent < 1 makes |phi(lam)| ~ lam^alpha with alpha < 1 and the integral
    converges: explosion is possible.  Exponent exactly 1 gives lam log(1/lam),
    still divergent.  Measures with no decidable tail come back undetermined.
    """
    m = mech.m
    if m.is_zero():
        return GreyStatus.HOLDS
    te = m.tail_exponent()
    if te is None:
        return GreyStatus.UNDETERMINED
    if te >= 1.0:
        return GreyStatus.HOLDS
    return GreyStatus.FAILS


def effective_drift(mech: BranchingMechanism) -> float:
    """b = beta - integral_1^inf z m(dz); the mean decays like e^(-b t)."""
    tail_mean = mech.m.mean_above(1.0)
    if math.isinf(tail_mean):
        raise FirstMomentInfiniteError("integral_1^inf z m(dz) diverges")
    return mech.beta - tail_mean


def truncate(mech: BranchingMechanism, k: float) -> BranchingMechanism:
    """Mechanism with jumps clipped at k (image measure of z -> z ^ k), k >= 1."""
    if k < 1.0:
        raise ValueError("truncation level must be >= 1")
    m = mech.m
    if m.is_zero():
        return mech
    if isinstance(m, FiniteAtoms):
        merged: dict[float, float] = {}
        for z, w in m.atoms:
            zz = min(z, k)
            merged[zz] = merged.get(zz, 0.0) + w
        clipped = FiniteAtoms(tuple(merged.items()))
        return BranchingMechanism(mech.beta, mech.sigma, clipped)
    return BranchingMechanism(mech.beta, mech.sigma, Truncated(m, k))


def linear_mechanism(beta: float) -> BranchingMechanism:
    """phi(lam) = beta lam; the flow is lam e^(-beta t)."""
    return BranchingMechanism(beta=beta)


def feller_mechanism(sigma2: float, beta: float = 0.0) -> BranchingMechanism:
    """Feller diffusion, phi(lam) = beta lam + sigma2 lam^2 / 2."""
    return BranchingMechanism(beta=beta, sigma=math.sqrt(sigma2))


def stable_mechanism(c: float, alpha: float) -> BranchingMechanism:
    """phi(lam) = c lam^(1+alpha) for 0 < alpha < 1.

    Realized by a power tail of index 1 + alpha with the drift chosen to
    cancel the linear term:

        m(dz) = c_m z^(-2-alpha) dz,   beta = c_m / alpha,
        c_m = c alpha (1 + alpha) / Gamma(1 - alpha).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if c <= 0:
        raise ValueError("c must be positive")
    c_m = c * alpha * (1.0 + alpha) / math.gamma(1.0 - alpha)
    return BranchingMechanism(beta=c_m / alpha, m=PowerTail(c=c_m, alpha=1.0 + alpha))


def tail_mass(mu: LevyMeasure, a: float) -> float:
    """mu((a, inf)), finite for every admissible measure and a > 0."""
    if a <= 0:
        raise ValueError("a must be positive")
    return mu.mass_above(a)


def sample_tail(mu: LevyMeasure, a: float, rng, size: int | None = None):
    """Draw from mu restricted to (a, inf), normalized."""
    if a <= 0:
        raise ValueError("a must be positive")
    if mu.mass_above(a) <= 0.0:
        raise EmptyTailError(f"no mass above {a}")
    return mu.sample_above(a, rng, size)
