"""Sample paths of CB and CBI processes from their jump-SDE representation.

The Euler scheme freezes jump intensities at the pre-step state: over a step
of length dt a path at x gets

  * drift          -beta x dt            (plus h dt and the sub-cutoff
                                          immigration mean for CBI),
  * diffusion      sigma sqrt(x dt) N,
  * jumps in (eps, 1]  Poisson(x dt m((eps,1])) draws from the normalized
                       tail, minus the compensator x dt integral z dm,
  * jumps below eps    dropped (their compensated sum has zero mean), or an
                       optional Gaussian with variance x dt integral z^2 dm,
  * jumps above 1      Poisson(x dt m((1,inf))) draws, logged as big jumps.

Negative proposals are clipped to zero; zero is absorbing for CB paths and
a reflecting-through-immigration state for CBI paths.

Randomness is counter-based (Philox): a single path uses the stream keyed
(seed, path_index); vectorized ensembles advance in fixed-size blocks keyed
(seed, 2^63 + block_index), so results do not depend on how blocks are
scheduled across workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoJumpPossibleError
from .measures import LevyMeasure, ZERO
from .mechanisms import BranchingMechanism, ImmigrationMechanism

BLOCK = 1 << 15  # paths per vectorized block


class JumpSource(enum.Enum):
    BRANCHING = "branching"
    IMMIGRATION = "immigration"


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    eps: float = 1e-2
    gaussian_correction: bool = True
    t_max: float = 1.0
    seed: int = 0
    record_jumps: bool = True
    scheme: str = "euler_thinning"  # "euler_thinning" | "exact_feller"

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must lie in (0, 1]")
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.scheme not in ("euler_thinning", "exact_feller"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def n_steps(self) -> int:
        return max(1, int(round(self.t_max / self.dt)))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "eps": self.eps,
            "gaussian_correction": self.gaussian_correction,
            "t_max": self.t_max,
            "seed": self.seed,
            "record_jumps": self.record_jumps,
            "scheme": self.scheme,
        }


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    big_jumps: list  # of (time, size, JumpSource)
    absorbed_at: float | None = None

    def terminal(self) -> float:
        return float(self.states[-1])


@dataclass
class CouplingRecord:
    times: np.ndarray
    lower: np.ndarray  # path from x
    upper: np.ndarray  # path from y >= x
    increment: np.ndarray  # upper - lower, itself a CB path from y - x


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream for one path: Philox keyed by (seed, path_index)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def block_rng(seed: int, block_index: int) -> np.random.Generator:
    """Stream for a vectorized ensemble block, disjoint from single-path keys."""
    return path_rng(seed, (1 << 63) + block_index)


@dataclass(frozen=True)
class _BranchRates:
    small_mass: float  # m((eps, 1])
    small_comp: float  # integral_(eps,1] z dm
    small_sd2: float  # integral_(0,eps] z^2 dm
    big_mass: float  # m((1, inf))


def _branch_rates(mech: BranchingMechanism, cfg: SimConfig) -> _BranchRates:
    m = mech.m
    if m.is_zero():
        return _BranchRates(0.0, 0.0, 0.0, 0.0)
    return _BranchRates(
        small_mass=m.partial_moment(0, cfg.eps, 1.0),
        small_comp=m.partial_moment(1, cfg.eps, 1.0),
        small_sd2=m.partial_moment(2, 0.0, cfg.eps) if cfg.gaussian_correction else 0.0,
        big_mass=m.mass_above(1.0),
    )


@dataclass(frozen=True)
class _ImmRates:
    drift: float  # h + integral_(0,eps] z dn
    jump_mass: float  # n((eps, inf))


def _imm_rates(imm: ImmigrationMechanism | None, cfg: SimConfig) -> _ImmRates:
    if imm is None:
        return _ImmRates(0.0, 0.0)
    n = imm.n
    if n.is_zero():
        return _ImmRates(imm.h, 0.0)
    return _ImmRates(imm.h + n.partial_moment(1, 0.0, cfg.eps), n.mass_above(cfg.eps))


def _pois(rng, lam):
    return rng.poisson(np.maximum(lam, 0.0))


def _scatter_sums(counts: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    idx = np.repeat(np.arange(counts.size), counts)
    return np.bincount(idx, weights=sizes, minlength=counts.size)


def _branch_euler_increment(x, mech, rates, cfg, rng):
    """One Euler step of the branching dynamics for a state vector x.

    Returns (dx, big_counts, big_sizes): big jump sizes are concatenated in
    path order; callers sum or log them as needed.
    """
    dt = cfg.dt
    dx = -mech.beta * x * dt
    if mech.sigma > 0.0:
        dx += mech.sigma * np.sqrt(x * dt) * rng.standard_normal(x.size)
    if rates.small_mass > 0.0:
        counts = _pois(rng, x * dt * rates.small_mass)
        total = int(counts.sum())
        if total:
            sizes = mech.m.sample_between(cfg.eps, 1.0, rng, total)
            dx += _scatter_sums(counts, sizes)
        dx -= x * dt * rates.small_comp
    if rates.small_sd2 > 0.0:
        dx += np.sqrt(x * dt * rates.small_sd2) * rng.standard_normal(x.size)
    big_counts = None
    big_sizes = None
    if rates.big_mass > 0.0:
        big_counts = _pois(rng, x * dt * rates.big_mass)
        total = int(big_counts.sum())
        big_sizes = mech.m.sample_above(1.0, rng, total) if total else np.empty(0)
        if total:
            dx += _scatter_sums(big_counts, big_sizes)
    return dx, big_counts, big_sizes


def _exact_feller_vec(x, beta, sigma, dt, rng):
    """Exact Feller-diffusion transition for a state vector (m = 0 only).

    The transition transform is exp(-x A lam / (1 + B lam)) with
    A = e^(-beta dt), B = sigma^2 (1 - e^(-beta dt)) / (2 beta), which is a
    Poisson(x A / B) mixture of Exp(mean B) sums.
    """
    if sigma == 0.0:
        return x * math.exp(-beta * dt)
    if beta == 0.0:
        big_a, big_b = 1.0, 0.5 * sigma**2 * dt
    else:
        big_a = math.exp(-beta * dt)
        big_b = sigma**2 * (1.0 - big_a) / (2.0 * beta)
    n = _pois(rng, x * big_a / big_b)
    return rng.gamma(n, big_b) if np.ndim(n) else float(rng.gamma(n, big_b))


def exact_feller_step(sigma: float, beta: float, x: float, dt: float, rng) -> float:
    """Draw X_{t+dt} | X_t = x exactly for the diffusion-only mechanism."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0.0:
        return 0.0
    return float(_exact_feller_vec(np.asarray([x]), beta, sigma, dt, rng)[0])


def select_cbi_jump_source(
    y_pre: float, mech: BranchingMechanism, imm: ImmigrationMechanism, rng
) -> JumpSource:
    """Which component produced a big jump at pre-state y: branching with
    probability y m((1,inf)) / (y m((1,inf)) + n((1,inf)))."""
    if y_pre < 0:
        raise ValueError("y_pre must be nonnegative")
    branch_rate = y_pre * mech.m.mass_above(1.0)
    imm_rate = imm.n.mass_above(1.0)
    total = branch_rate + imm_rate
    if total <= 0.0:
        raise NoJumpPossibleError("both big-jump rates vanish")
    return JumpSource.BRANCHING if rng.random() < branch_rate / total else JumpSource.IMMIGRATION


# ---------------------------------------------------------------------------
# single-path simulators (full records)
# ---------------------------------------------------------------------------


def _record_big(log, rng, t0, dt, sizes, source, record):
    if not record or sizes is None or sizes.size == 0:
        return
    offsets = np.sort(rng.random(sizes.size))
    for off, z in zip(offsets, sizes):
        if z > 1.0:
            log.append((t0 + off * dt, float(z), source))


def simulate_cb(
    mech: BranchingMechanism, x0: float, cfg: SimConfig, rng=None
) -> PathRecord:
    """One CB trajectory on [0, t_max]; zero is absorbing."""
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    if rng is None:
        rng = path_rng(cfg.seed, 0)
    if cfg.scheme == "exact_feller" and not mech.m.is_zero():
        raise ValueError("the exact scheme needs a diffusion-only mechanism")
    rates = _branch_rates(mech, cfg)
    n_steps = cfg.n_steps()
    times = np.arange(n_steps + 1) * cfg.dt
    states = np.zeros(n_steps + 1)
    states[0] = x0
    jumps: list = []
    absorbed_at = None
    x = np.array([x0])
    for k in range(n_steps):
        if x[0] == 0.0:
            absorbed_at = absorbed_at if absorbed_at is not None else times[k]
            break
        if cfg.scheme == "exact_feller":
            x = np.asarray(_exact_feller_vec(x, mech.beta, mech.sigma, cfg.dt, rng))
        else:
            dx, _, big_sizes = _branch_euler_increment(x, mech, rates, cfg, rng)
            _record_big(jumps, rng, times[k], cfg.dt, big_sizes, JumpSource.BRANCHING, cfg.record_jumps)
            x = np.maximum(x + dx, 0.0)
        states[k + 1] = x[0]
        if x[0] == 0.0 and absorbed_at is None:
            absorbed_at = times[k + 1]
    return PathRecord(times=times, states=states, big_jumps=jumps, absorbed_at=absorbed_at)


def simulate_cbi(
    mech: BranchingMechanism,
    imm: ImmigrationMechanism,
    y0: float,
    cfg: SimConfig,
    rng=None,
) -> PathRecord:
    """One CBI trajectory; immigration keeps zero from being absorbing."""
    if y0 < 0:
        raise ValueError("y0 must be nonnegative")
    if rng is None:
        rng = path_rng(cfg.seed, 0)
    if cfg.scheme == "exact_feller" and not mech.m.is_zero():
        raise ValueError("the exact scheme needs a diffusion-only mechanism")
    rates = _branch_rates(mech, cfg)
    imm_rates = _imm_rates(imm, cfg)
    n_steps = cfg.n_steps()
    times = np.arange(n_steps + 1) * cfg.dt
    states = np.zeros(n_steps + 1)
    states[0] = y0
    jumps: list = []
    y = np.array([y0])
    for k in range(n_steps):
        if cfg.scheme == "exact_feller":
            y = np.asarray(_exact_feller_vec(y, mech.beta, mech.sigma, cfg.dt, rng))
        else:
            dy, _, big_sizes = _branch_euler_increment(y, mech, rates, cfg, rng)
            _record_big(jumps, rng, times[k], cfg.dt, big_sizes, JumpSource.BRANCHING, cfg.record_jumps)
            y = np.maximum(y + dy, 0.0)
        if imm_rates.jump_mass > 0.0:
            count = int(_pois(rng, np.array([imm_rates.jump_mass * cfg.dt]))[0])
            if count:
                sizes = np.atleast_1d(imm.n.sample_above(cfg.eps, rng, count))
                y = y + sizes.sum()
                _record_big(jumps, rng, times[k], cfg.dt, sizes, JumpSource.IMMIGRATION, cfg.record_jumps)
        y = y + imm_rates.drift * cfg.dt
        states[k + 1] = y[0]
    jumps.sort(key=lambda rec: rec[0])
    return PathRecord(times=times, states=states, big_jumps=jumps, absorbed_at=None)


def simulate_coupled(
    mech: BranchingMechanism, x: float, y: float, cfg: SimConfig, rng=None
) -> CouplingRecord:
    """Drive CB paths from x and from y >= x off one stratified noise.

    The lower path consumes the randomness attributed to population level
    u in (0, X(x)]; the upper path adds independent randomness for the level
    strip (X(x), X(y)].  The strip difference is itself a CB path from y - x
    and the order X_t(x) <= X_t(y) holds at every grid time by construction.
    """
    if not 0.0 <= x <= y:
        raise ValueError("need 0 <= x <= y")
    if rng is None:
        rng = path_rng(cfg.seed, 0)
    if cfg.scheme == "exact_feller" and not mech.m.is_zero():
        raise ValueError("the exact scheme needs a diffusion-only mechanism")
    rates = _branch_rates(mech, cfg)
    n_steps = cfg.n_steps()
    times = np.arange(n_steps + 1) * cfg.dt
    lower = np.zeros(n_steps + 1)
    incr = np.zeros(n_steps + 1)
    lower[0], incr[0] = x, y - x
    state = np.array([x, y - x])
    for k in range(n_steps):
        if cfg.scheme == "exact_feller":
            state = np.asarray(_exact_feller_vec(state, mech.beta, mech.sigma, cfg.dt, rng))
        else:
            dx, _, _ = _branch_euler_increment(state, mech, rates, cfg, rng)
            state = np.maximum(state + dx, 0.0)
        lower[k + 1], incr[k + 1] = state[0], state[1]
    return CouplingRecord(times=times, lower=lower, upper=lower + incr, increment=incr)


def first_big_jump_time(path: PathRecord) -> float | None:
    """Time of the first jump of size > 1, if any was recorded."""
    return path.big_jumps[0][0] if path.big_jumps else None


# ---------------------------------------------------------------------------
# vectorized ensembles
# ---------------------------------------------------------------------------


@dataclass
class EnsembleResult:
    record_times: np.ndarray  # (n_times,)
    states: np.ndarray  # (n_times, n_paths)
    first_jump_times: np.ndarray | None = None  # (n_paths,), nan = no big jump

    def terminal(self) -> np.ndarray:
        return self.states[-1]


def _snap_indices(cfg: SimConfig, record_t) -> np.ndarray:
    if record_t is None:
        record_t = [cfg.t_max]
    idx = np.asarray([int(round(t / cfg.dt)) for t in record_t])
    if (idx < 0).any() or (idx > cfg.n_steps()).any():
        raise ValueError("record times must lie within the horizon")
    return idx


def _block_task(task) -> tuple[int, np.ndarray, np.ndarray | None]:
    """Evolve one block of paths; pure function of the task tuple."""
    mech, imm, x0, cfg, b, block_index, snap_idx, first_jump = task
    exact = cfg.scheme == "exact_feller"
    rates = _branch_rates(mech, cfg)
    imm_rates = _imm_rates(imm, cfg)
    rng = block_rng(cfg.seed, block_index)
    snaps = np.empty((snap_idx.size, b))
    fj = np.full(b, np.nan) if first_jump else None
    x = np.full(b, float(x0))
    for pos in np.flatnonzero(snap_idx == 0):
        snaps[pos] = x
    for k in range(cfg.n_steps()):
        if exact:
            x = _exact_feller_vec(x, mech.beta, mech.sigma, cfg.dt, rng)
            new_big = None
        else:
            dx, big_counts, _ = _branch_euler_increment(x, mech, rates, cfg, rng)
            x = np.maximum(x + dx, 0.0)
            new_big = big_counts > 0 if big_counts is not None else None
        if imm is not None:
            if imm_rates.jump_mass > 0.0:
                counts = _pois(rng, np.full(b, imm_rates.jump_mass * cfg.dt))
                total = int(counts.sum())
                if total:
                    sizes = np.atleast_1d(imm.n.sample_above(cfg.eps, rng, total))
                    x = x + _scatter_sums(counts, sizes)
                    if fj is not None:
                        idx = np.repeat(np.arange(b), counts)
                        big_any = np.bincount(idx[sizes > 1.0], minlength=b) > 0
                        new_big = big_any if new_big is None else (new_big | big_any)
            x = x + imm_rates.drift * cfg.dt
        if fj is not None and new_big is not None and new_big.any():
            hit = new_big & np.isnan(fj)
            if hit.any():
                fj[hit] = (k + rng.random(int(hit.sum()))) * cfg.dt
        for pos in np.flatnonzero(snap_idx == k + 1):
            snaps[pos] = x
    return block_index, snaps, fj


def _ensemble(
    mech: BranchingMechanism,
    imm: ImmigrationMechanism | None,
    x0: float,
    cfg: SimConfig,
    n_paths: int,
    record_t=None,
    first_jump: bool = False,
    threads: int = 1,
) -> EnsembleResult:
    if cfg.scheme == "exact_feller" and not mech.m.is_zero():
        raise ValueError("the exact scheme needs a diffusion-only mechanism")
    snap_idx = _snap_indices(cfg, record_t)
    snaps = np.empty((snap_idx.size, n_paths))
    fj = np.full(n_paths, np.nan) if first_jump else None
    spans = [(s, min(s + BLOCK, n_paths)) for s in range(0, n_paths, BLOCK)]
    tasks = [
        (mech, imm, x0, cfg, stop - start, start // BLOCK, snap_idx, first_jump)
        for start, stop in spans
    ]
    if threads > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_block_task, tasks))
    else:
        results = [_block_task(t) for t in tasks]
    for bi, block_snaps, block_fj in results:
        start, stop = spans[bi]
        snaps[:, start:stop] = block_snaps
        if fj is not None and block_fj is not None:
            fj[start:stop] = block_fj
    return EnsembleResult(record_times=snap_idx * cfg.dt, states=snaps, first_jump_times=fj)


def simulate_cb_ensemble(
    mech: BranchingMechanism,
    x0: float,
    cfg: SimConfig,
    n_paths: int,
    record_t=None,
    first_jump: bool = False,
    threads: int = 1,
) -> EnsembleResult:
    """States of n_paths independent CB paths at the requested grid times."""
    return _ensemble(mech, None, x0, cfg, n_paths, record_t, first_jump, threads)


def simulate_cbi_ensemble(
    mech: BranchingMechanism,
    imm: ImmigrationMechanism,
    y0: float,
    cfg: SimConfig,
    n_paths: int,
    record_t=None,
    first_jump: bool = False,
    threads: int = 1,
) -> EnsembleResult:
    """States of n_paths independent CBI paths at the requested grid times."""
    return _ensemble(mech, imm, y0, cfg, n_paths, record_t, first_jump, threads)


def simulate_coupled_ensemble(
    mech: BranchingMechanism, x: float, y: float, cfg: SimConfig, n_paths: int
) -> tuple[np.ndarray, np.ndarray]:
    """Terminal (lower, increment) samples of the stratified coupling."""
    if not 0.0 <= x <= y:
        raise ValueError("need 0 <= x <= y")
    exact = cfg.scheme == "exact_feller"
    if exact and not mech.m.is_zero():
        raise ValueError("the exact scheme needs a diffusion-only mechanism")
    rates = _branch_rates(mech, cfg)
    n_steps = cfg.n_steps()
    lower = np.empty(n_paths)
    incr = np.empty(n_paths)
    for start in range(0, n_paths, BLOCK):
        stop = min(start + BLOCK, n_paths)
        b = stop - start
        rng = block_rng(cfg.seed, start // BLOCK)
        state = np.concatenate([np.full(b, float(x)), np.full(b, float(y - x))])
        for _ in range(n_steps):
            if exact:
                state = _exact_feller_vec(state, mech.beta, mech.sigma, cfg.dt, rng)
            else:
                dx, _, _ = _branch_euler_increment(state, mech, rates, cfg, rng)
                state = np.maximum(state + dx, 0.0)
        lower[start:stop] = state[:b]
        incr[start:stop] = state[b:]
    return lower, incr
