"""Cumulant flow v_t(lam) and the transition Laplace transforms.

v solves the autonomous scalar ODE

    dv/dt = -phi(v),   v_0 = lam,

and the CB / CBI transforms are exp(-x v_t(lam)) and
exp(-x v_t(lam) - integral_0^t psi(v_s(lam)) ds).

The integrator is an embedded Dormand-Prince 5(4) pair with the standard
quartic dense interpolant.  Steps that would take v negative are rejected
and halved, never clamped: v = 0 is an exact fixed point of the flow, so a
negative proposal always means the step was too long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverStallError
from .mechanisms import BranchingMechanism, ImmigrationMechanism

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense-output polynomial (Shampine's quartic interpolant)
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(8)


@dataclass
class OdeSolution:
    """Accepted nodes plus per-step dense interpolants of an autonomous solve."""

    t_grid: np.ndarray  # (n_nodes,)
    y_values: np.ndarray  # (n_nodes, dim)
    est_error: np.ndarray  # (n_nodes,) local error estimate of the arriving step
    seg_coeffs: np.ndarray  # (n_nodes - 1, dim, 5): y0 and h * Q columns

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        if (t_arr < self.t_grid[0] - 1e-12).any() or (t_arr > self.t_grid[-1] + 1e-9).any():
            raise ValueError("evaluation time outside the solved range")
        idx = np.clip(np.searchsorted(self.t_grid, t_arr, side="right") - 1, 0, len(self.t_grid) - 2)
        t0 = self.t_grid[idx]
        h = self.t_grid[idx + 1] - t0
        theta = np.clip((t_arr - t0) / h, 0.0, 1.0)
        powers = theta[:, None] ** np.arange(1, 5)[None, :]  # (m, 4)
        coeff = self.seg_coeffs[idx]  # (m, dim, 5)
        out = coeff[:, :, 0] + np.einsum("mdj,mj->md", coeff[:, :, 1:], powers)
        if np.isscalar(t) or np.asarray(t).ndim == 0:
            return out[0, 0] if out.shape[1] == 1 else out[0]
        return out[:, 0] if out.shape[1] == 1 else out


def integrate_autonomous(
    rhs,
    y0,
    t_max: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    reject_negative: bool = False,
    max_steps: int = 1_000_000,
) -> OdeSolution:
    """Adaptive DOPRI 5(4) for dy/dt = rhs(y) on [0, t_max] with dense output."""
    y = np.atleast_1d(np.asarray(y0, dtype=float))
    dim = y.size
    f = np.atleast_1d(np.asarray(rhs(y), dtype=float))

    scale0 = atol + rtol * np.abs(y).max()
    h = min(t_max, 0.01 * scale0 / (np.abs(f).max() + 1e-30)) or t_max
    h = min(max(h, 1e-8 * max(t_max, 1.0)), t_max)

    ts = [0.0]
    ys = [y.copy()]
    errs = [0.0]
    segs = []
    t = 0.0
    k = np.empty((7, dim))
    steps = 0
    while t < t_max:
        if steps >= max_steps:
            raise SolverStallError(
                f"step budget exhausted at t = {t:.6g}", partial=_pack(ts, ys, errs, segs)
            )
        h = min(h, t_max - t)
        if h < 1e-13 * max(1.0, t):
            raise SolverStallError(
                f"step size underflow at t = {t:.6g}", partial=_pack(ts, ys, errs, segs)
            )
        k[0] = f
        for i in range(1, 7):
            k[i] = rhs(y + h * (_A[i] @ k[:i]))
        y_new = y + h * (_B @ k)
        err_vec = h * (_E @ k)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.max(np.abs(err_vec) / scale))
        steps += 1
        if reject_negative and (y_new < 0.0).any():
            h *= 0.5
            continue
        if err > 1.0:
            h *= max(0.2, 0.9 * err ** -0.2)
            continue
        # accept
        q = k.T @ _P  # (dim, 4)
        coeff = np.concatenate([y[:, None], h * q], axis=1)  # (dim, 5)
        segs.append(coeff)
        t += h
        y = y_new
        f = np.atleast_1d(np.asarray(rhs(y), dtype=float))  # FSAL not reused: rhs is cheap
        ts.append(t)
        ys.append(y.copy())
        errs.append(float(np.max(np.abs(err_vec))))
        h *= min(5.0, 0.9 * err ** -0.2 if err > 0 else 5.0)
    return _pack(ts, ys, errs, segs)


def _pack(ts, ys, errs, segs) -> OdeSolution:
    return OdeSolution(
        t_grid=np.asarray(ts),
        y_values=np.asarray(ys),
        est_error=np.asarray(errs),
        seg_coeffs=np.asarray(segs) if segs else np.zeros((0, len(ys[0]), 5)),
    )


@dataclass
class CumulantSolution:
    """Numerically solved t -> v_t(lam) with dense evaluation."""

    lam: float
    mech_id: str
    ode: OdeSolution

    @property
    def t_grid(self) -> np.ndarray:
        return self.ode.t_grid

    @property
    def v_values(self) -> np.ndarray:
        return self.ode.y_values[:, 0]

    @property
    def est_error(self) -> np.ndarray:
        return self.ode.est_error

    def __call__(self, t):
        return self.ode(t)


def solve_v(
    mech: BranchingMechanism,
    lam: float,
    t_max: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> CumulantSolution:
    """Solve dv/dt = -phi(v), v_0 = lam, on [0, t_max] with dense output."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    phi = mech.phi

    def rhs(y):
        return np.array([-phi(float(y[0]))])

    ode = integrate_autonomous(rhs, [lam], t_max, rtol=rtol, atol=atol, reject_negative=True)
    return CumulantSolution(lam=lam, mech_id=mech.mech_id, ode=ode)


def integrate_dense(sol: CumulantSolution, fn, t: float) -> float:
    """integral_0^t fn(v_s) ds by per-segment Gauss-Legendre on the dense output."""
    grid = sol.t_grid
    if t > grid[-1] + 1e-9:
        raise ValueError("t beyond the solved range")
    total = 0.0
    for i in range(len(grid) - 1):
        a = grid[i]
        if a >= t:
            break
        b = min(grid[i + 1], t)
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        nodes = mid + half * _GAUSS_X
        vals = np.array([fn(float(v)) for v in np.atleast_1d(sol(nodes))])
        total += half * float(_GAUSS_W @ vals)
    return total


def laplace_cb(
    mech: BranchingMechanism,
    x: float,
    lam: float,
    t: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> float:
    """Transition transform E_x e^(-lam X_t) = exp(-x v_t(lam))."""
    if x < 0 or lam < 0 or t < 0:
        raise ValueError("x, lam, t must be nonnegative")
    if t == 0:
        return math.exp(-x * lam)
    if lam == 0 or x == 0:
        return 1.0
    sol = solve_v(mech, lam, t, rtol=rtol, atol=atol)
    return math.exp(-x * float(sol(t)))


def laplace_cbi(
    mech: BranchingMechanism,
    imm: ImmigrationMechanism,
    x: float,
    lam: float,
    t: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> float:
    """E_x e^(-lam Y_t) = exp(-x v_t(lam) - integral_0^t psi(v_s(lam)) ds)."""
    if x < 0 or lam < 0 or t < 0:
        raise ValueError("x, lam, t must be nonnegative")
    if t == 0:
        return math.exp(-x * lam)
    if lam == 0:
        return 1.0
    sol = solve_v(mech, lam, t, rtol=rtol, atol=atol)
    acc = integrate_dense(sol, imm.psi, t)
    return math.exp(-x * float(sol(t)) - acc)


@dataclass(frozen=True)
class ComposeCheck:
    passed: bool
    residual: float


def v_compose_check(
    mech: BranchingMechanism,
    lam: float,
    s: float,
    t: float,
    tol: float = 1e-7,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> ComposeCheck:
    """Semigroup consistency |v_{t+s}(lam) - v_t(v_s(lam))| <= tol (1 + |v|)."""
    if s < 0 or t < 0:
        raise ValueError("s, t must be nonnegative")
    if s + t == 0:
        return ComposeCheck(True, 0.0)
    direct = float(solve_v(mech, lam, s + t, rtol, atol)(s + t)) if s + t > 0 else lam
    if s == 0:
        inner = lam
    else:
        inner = float(solve_v(mech, lam, s, rtol, atol)(s))
    if t == 0:
        composed = inner
    else:
        composed = float(solve_v(mech, inner, t, rtol, atol)(t))
    residual = abs(direct - composed)
    return ComposeCheck(residual <= tol * (1.0 + abs(direct)), residual)
