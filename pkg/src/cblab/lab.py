"""Monte Carlo verification layer: f-moment estimation with divergence
diagnostics, empirical transforms, tail-index and two-sample statistics,
and the experiment runner behind the command line.

Finiteness of a moment is not decidable from a finite sample; the reports
therefore bundle a point estimate with its doubling trajectory (prefix
estimates on the first N/8, N/4, N/2, N paths) and call the result Stable,
Diverging, or Inconclusive.  That is evidence, not proof, and downstream
JSON says which.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientTailError
from .measures import measure_from_dict
from .mechanisms import BranchingMechanism, ImmigrationMechanism
from .moments import (
    MomentFunction,
    cb_f_moment_finite,
    cbi_f_moment_finite,
    moment_function_from_dict,
    power,
)
from .simulate import (
    SimConfig,
    simulate_cb_ensemble,
    simulate_cbi_ensemble,
    simulate_coupled_ensemble,
)

STABLE_REL_CHANGE = 0.05
DIVERGING_RATIO = 2.0


@dataclass
class EstimateReport:
    estimate: float
    std_error: float
    n_paths: int
    doubling: list[float]  # prefix estimates, smallest ensemble first
    verdict: str  # "stable" | "diverging" | "inconclusive"

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "doubling": self.doubling,
            "verdict": self.verdict,
        }


def _sample_tail_index_ci(values: np.ndarray, k_frac: float = 0.01):
    """Hill interval for the tail index of a sample, None when too thin."""
    x = np.sort(values[values > 0.0])[::-1]
    if x.size == 0:
        return None
    k = math.ceil(k_frac * x.size)
    if k < 50 or k >= x.size or x[k] <= 0.0:
        return None
    alpha = _hill_point(x, k)
    half = 1.96 / math.sqrt(k)
    return alpha * (1.0 - half), alpha * (1.0 + half)


def doubling_report(values: np.ndarray) -> EstimateReport:
    """Estimate E[value] with the prefix-doubling stability diagnostic.

    The verdict is tail-certified where possible: a Hill interval for the
    sample's tail index entirely below 1 means the sum is dominated by its
    extremes and the mean is not summable (diverging); entirely above 1
    means the mean exists (stable).  Prefix means alone misclassify
    heavy-tailed samples in both directions, so they only break ties.
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 8:
        raise ValueError("need at least 8 samples")
    prefixes = [n // 8, n // 4, n // 2, n]
    ests = [float(values[:m].mean()) for m in prefixes]
    last_rel = abs(ests[-1] - ests[-2]) / max(abs(ests[-1]), 1e-300)
    monotone_up = all(b > a for a, b in zip(ests, ests[1:]))
    ratio = ests[-1] / ests[0] if ests[0] > 0 else math.inf
    ci = _sample_tail_index_ci(values)
    if ci is not None and ci[1] < 1.0:
        verdict = "diverging"
    elif ci is not None and ci[0] > 1.0:
        verdict = "stable"
    elif last_rel < STABLE_REL_CHANGE:
        verdict = "stable"
    elif monotone_up and ratio >= DIVERGING_RATIO:
        verdict = "diverging"
    else:
        verdict = "inconclusive"
    se = float(values.std(ddof=1) / math.sqrt(n))
    return EstimateReport(ests[-1], se, n, ests, verdict)


def mc_f_moment(
    mech: BranchingMechanism,
    f: MomentFunction,
    x0: float,
    t: float,
    n_paths: int,
    cfg: SimConfig,
    imm: ImmigrationMechanism | None = None,
) -> EstimateReport:
    """Estimate E f(X_t) (or E f(Y_t)) over n_paths with the doubling verdict."""
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    run_cfg = cfg if cfg.t_max == t else SimConfig(**{**cfg.to_dict(), "t_max": t})
    if imm is None:
        res = simulate_cb_ensemble(mech, x0, run_cfg, n_paths, record_t=[t])
    else:
        res = simulate_cbi_ensemble(mech, imm, x0, run_cfg, n_paths, record_t=[t])
    return doubling_report(np.asarray(f(res.states[0])))


def empirical_laplace(terminal_states, lambdas) -> list[tuple[float, float, float]]:
    """Sample mean and standard error of e^(-lam X) for each lam."""
    x = np.asarray(terminal_states, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample")
    out = []
    for lam in lambdas:
        if lam == 0.0:
            out.append((0.0, 1.0, 0.0))
            continue
        vals = np.exp(-lam * x)
        out.append((float(lam), float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(x.size))))
    return out


@dataclass
class HillReport:
    alpha_hat: float
    ci_low: float
    ci_high: float
    k: int
    drift_verdict: str  # "power_tail_plausible" | "no_power_tail" | "inconclusive"

    def to_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "k": self.k,
            "drift_verdict": self.drift_verdict,
        }


def _hill_point(sorted_desc: np.ndarray, k: int) -> float:
    return float(1.0 / np.mean(np.log(sorted_desc[:k] / sorted_desc[k])))


def hill_tail_index(sample, k_frac: float = 0.01) -> HillReport:
    """Hill estimator on the top ceil(k_frac N) order statistics.

    The asymptotic interval is alpha_hat (1 +/- 1.96 / sqrt(k)).  A light
    (e.g. exponential) tail shows up as the estimate drifting upward when
    the order-statistic fraction shrinks; the report carries that verdict.
    """
    if not 0.0 < k_frac <= 0.1:
        raise ValueError("k_frac must lie in (0, 0.1]")
    x = np.asarray(sample, dtype=float)
    x = np.sort(x[x > 0.0])[::-1]
    k = math.ceil(k_frac * x.size)
    if k < 50 or k >= x.size:
        raise InsufficientTailError(f"only {k} tail exceedances")
    alpha = _hill_point(x, k)
    half = 1.96 / math.sqrt(k)
    # light-tail signature: the estimate keeps climbing as k shrinks
    a2 = _hill_point(x, max(k // 2, 25))
    a4 = _hill_point(x, max(k // 4, 25))
    if a4 > 1.5 * alpha and a4 > a2 > alpha:
        drift = "no_power_tail"
    elif abs(a4 - alpha) <= 0.25 * alpha:
        drift = "power_tail_plausible"
    else:
        drift = "inconclusive"
    return HillReport(alpha, alpha * (1.0 - half), alpha * (1.0 + half), k, drift)


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and its 95% critical value."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size < 1000 or b.size < 1000:
        raise ValueError("both samples need at least 1000 points")
    grid = np.concatenate([a, b])
    ca = np.searchsorted(a, grid, side="right") / a.size
    cb = np.searchsorted(b, grid, side="right") / b.size
    stat = float(np.max(np.abs(ca - cb)))
    crit = 1.358 * math.sqrt((a.size + b.size) / (a.size * b.size))
    return stat, crit


# ---------------------------------------------------------------------------
# experiment specs and the runner
# ---------------------------------------------------------------------------

_ANALYSES = ("laplace_match", "moment_estimate", "hill", "ks_coupling", "criterion_crosscheck")


@dataclass
class ExperimentSpec:
    mechanism: BranchingMechanism
    immigration: ImmigrationMechanism | None
    f: MomentFunction
    x0: float
    initial_sample: np.ndarray | None  # draws replace the point mass when given
    t: list[float]
    n_paths: int
    sim: SimConfig
    analyses: list[str]
    params: dict
    raw: dict  # the parsed document, for the manifest digest

    @staticmethod
    def from_dict(doc: dict, base_dir: str = ".") -> "ExperimentSpec":
        try:
            mech_doc = doc["mechanism"]
            mech = BranchingMechanism(
                beta=float(mech_doc.get("beta", 0.0)),
                sigma=float(mech_doc.get("sigma", 0.0)),
                m=measure_from_dict(mech_doc.get("measure")),
            )
        except KeyError as exc:
            raise ValueError(f"experiment spec: missing key {exc} under 'mechanism'") from exc
        imm = None
        if "immigration" in doc and doc["immigration"] is not None:
            imm_doc = doc["immigration"]
            imm = ImmigrationMechanism(
                h=float(imm_doc.get("h", 0.0)), n=measure_from_dict(imm_doc.get("measure"))
            )
        f = moment_function_from_dict(doc.get("f", {"family": "power", "p": 1.0}))
        initial = doc.get("initial", {"x0": 1.0})
        sample = None
        x0 = float(initial.get("x0", 1.0))
        if "sample_file" in initial:
            path = os.path.join(base_dir, initial["sample_file"])
            sample = np.loadtxt(path, ndmin=1)
            if sample.size == 0 or (sample < 0).any():
                raise ValueError(f"initial sample file {path}: need nonnegative values")
        ts = [float(v) for v in doc.get("t", [1.0])]
        n_paths = int(doc.get("n_paths", 1000))
        if n_paths < 100:
            raise ValueError("experiment spec: n_paths must be at least 100")
        sim_doc = dict(doc.get("sim", {}))
        sim_doc.setdefault("t_max", max(ts))
        sim_doc.setdefault("seed", int(doc.get("seed", 0)))
        cfg = SimConfig(**sim_doc)
        if max(ts) > cfg.t_max:
            raise ValueError("experiment spec: t values exceed the sim horizon")
        analyses = list(doc.get("analyses", []))
        for name in analyses:
            if name not in _ANALYSES:
                raise ValueError(f"experiment spec: unknown analysis {name!r}")
        return ExperimentSpec(
            mechanism=mech,
            immigration=imm,
            f=f,
            x0=x0,
            initial_sample=sample,
            t=ts,
            n_paths=n_paths,
            sim=cfg,
            analyses=analyses,
            params=dict(doc.get("analysis_params", {})),
            raw=doc,
        )


def _initial_states(spec: ExperimentSpec) -> float | np.ndarray:
    if spec.initial_sample is None:
        return spec.x0
    from .simulate import path_rng

    rng = path_rng(spec.sim.seed, (1 << 62))
    idx = rng.integers(0, spec.initial_sample.size, size=spec.n_paths)
    return spec.initial_sample[idx]


def _simulate_states(spec: ExperimentSpec) -> np.ndarray:
    """(len(t), n_paths) ensemble states at the requested times."""
    init = _initial_states(spec)
    if np.ndim(init) == 0:
        if spec.immigration is None:
            res = simulate_cb_ensemble(spec.mechanism, float(init), spec.sim, spec.n_paths, spec.t)
        else:
            res = simulate_cbi_ensemble(
                spec.mechanism, spec.immigration, float(init), spec.sim, spec.n_paths, spec.t
            )
        return res.states
    # initial-law spec: group identical starting points to keep vector draws
    states = np.empty((len(spec.t), spec.n_paths))
    init = np.asarray(init)
    for gi, value in enumerate(np.unique(init)):
        sel = init == value
        sub = SimConfig(**{**spec.sim.to_dict(), "seed": spec.sim.seed + 1000003 * (gi + 1)})
        if spec.immigration is None:
            res = simulate_cb_ensemble(spec.mechanism, float(value), sub, int(sel.sum()), spec.t)
        else:
            res = simulate_cbi_ensemble(
                spec.mechanism, spec.immigration, float(value), sub, int(sel.sum()), spec.t
            )
        states[:, sel] = res.states
    return states


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _analysis_laplace_match(spec: ExperimentSpec, states: np.ndarray, out_dir: str) -> dict:
    from .cumulant import laplace_cb, laplace_cbi

    if spec.initial_sample is not None:
        raise ValueError("laplace_match needs a point-mass initial condition")
    lambdas = spec.params.get("laplace_match", {}).get("lambdas", [0.5, 1.0, 2.0])
    rows = []
    for i, t in enumerate(spec.t):
        emp = empirical_laplace(states[i], lambdas)
        for lam, est, se in emp:
            if spec.immigration is None:
                exact = laplace_cb(spec.mechanism, spec.x0, lam, t)
            else:
                exact = laplace_cbi(spec.mechanism, spec.immigration, spec.x0, lam, t)
            gap_over_se = abs(est - exact) / se if se > 0 else 0.0
            rows.append([t, lam, est, se, exact, gap_over_se])
    path = os.path.join(out_dir, "laplace_match.csv")
    _write_csv(path, ["t", "lambda", "empirical", "se", "exact", "abs_gap_over_se"], rows)
    return {"file": os.path.basename(path), "rows": len(rows)}


def _analysis_moment_estimate(spec: ExperimentSpec, states: np.ndarray, out_dir: str) -> dict:
    reports = {}
    rows = []
    for i, t in enumerate(spec.t):
        rep = doubling_report(np.asarray(spec.f(states[i])))
        reports[str(t)] = rep.to_dict()
        for m, est in zip((spec.n_paths // 8, spec.n_paths // 4, spec.n_paths // 2, spec.n_paths), rep.doubling):
            rows.append([t, m, est])
    path = os.path.join(out_dir, "moment_estimate.json")
    with open(path, "w") as fh:
        json.dump({"f": spec.f.describe(), "reports": reports}, fh, indent=2, sort_keys=True)
    _write_csv(os.path.join(out_dir, "moment_doubling.csv"), ["t", "n_prefix", "estimate"], rows)
    return {"file": os.path.basename(path), "verdicts": {k: v["verdict"] for k, v in reports.items()}}


def _analysis_hill(spec: ExperimentSpec, states: np.ndarray, out_dir: str) -> dict:
    k_frac = spec.params.get("hill", {}).get("k_frac", 0.01)
    out = {}
    for i, t in enumerate(spec.t):
        try:
            out[str(t)] = hill_tail_index(states[i], k_frac).to_dict()
        except InsufficientTailError as exc:
            out[str(t)] = {"error": str(exc)}
    path = os.path.join(out_dir, "hill.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    return {"file": os.path.basename(path)}


def _analysis_ks_coupling(spec: ExperimentSpec, states: np.ndarray, out_dir: str) -> dict:
    pars = spec.params.get("ks_coupling", {})
    x = float(pars.get("x", spec.x0))
    y = float(pars.get("y", 2.0 * spec.x0))
    _, incr = simulate_coupled_ensemble(spec.mechanism, x, y, spec.sim, spec.n_paths)
    fresh_cfg = SimConfig(**{**spec.sim.to_dict(), "seed": spec.sim.seed + 1})
    fresh = simulate_cb_ensemble(spec.mechanism, y - x, fresh_cfg, spec.n_paths).terminal()
    stat, crit = ks_two_sample(incr, fresh)
    out = {"x": x, "y": y, "ks_statistic": stat, "critical_95": crit, "below_critical": stat < crit}
    path = os.path.join(out_dir, "ks_coupling.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    return out


def _analysis_criterion_crosscheck(spec: ExperimentSpec, states: np.ndarray, out_dir: str) -> dict:
    pars = spec.params.get("criterion_crosscheck", {})
    p_grid = pars.get("p_grid", [1.2, 1.8])
    table = []
    for p in p_grid:
        f = power(float(p))
        if spec.immigration is None:
            res = cb_f_moment_finite(spec.mechanism, f)
        else:
            res = cbi_f_moment_finite(spec.mechanism, spec.immigration, f)
        verdict = {"finite": True, "infinite": False, "undetermined": None}[res.verdict]
        entry = {"p": float(p), "finite": verdict, "reason": res.reason}
        if res.integral is not None and res.integral.is_finite:
            entry["integral_value"] = res.integral.value
        table.append(entry)
    path = os.path.join(out_dir, "criterion_crosscheck.json")
    with open(path, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
    return {"file": os.path.basename(path), "entries": len(table)}


_ANALYSIS_FNS = {
    "laplace_match": _analysis_laplace_match,
    "moment_estimate": _analysis_moment_estimate,
    "hill": _analysis_hill,
    "ks_coupling": _analysis_ks_coupling,
    "criterion_crosscheck": _analysis_criterion_crosscheck,
}


def run_experiment(spec_path: str, out_dir: str | None = None, seed: int | None = None) -> int:
    """Execute every analysis in the spec; 0 exit unless something errored.

    Statistical verdicts (diverging, above-critical, ...) are results, not
    failures.  All outputs are deterministic functions of (spec, seed).
    """
    import yaml

    with open(spec_path) as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValueError(f"cannot parse {spec_path}: {exc}") from exc
    if seed is not None:
        doc["seed"] = seed
    spec = ExperimentSpec.from_dict(doc, base_dir=os.path.dirname(os.path.abspath(spec_path)))
    out_dir = out_dir or doc.get("out_dir") or "cb-lab-out"
    os.makedirs(out_dir, exist_ok=True)

    states = _simulate_states(spec) if spec.analyses else None
    results = {}
    failures = {}
    for name in spec.analyses:
        try:
            results[name] = _ANALYSIS_FNS[name](spec, states, out_dir)
        except Exception as exc:  # analysis errors fail the run at the end
            failures[name] = f"{type(exc).__name__}: {exc}"

    import scipy

    from . import __version__

    manifest = {
        "spec_file": os.path.basename(spec_path),
        "spec_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "seed": spec.sim.seed,
        "n_paths": spec.n_paths,
        "analyses": spec.analyses,
        "results": results,
        "errors": failures,
        "versions": {
            "cblab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return 1 if failures else 0
