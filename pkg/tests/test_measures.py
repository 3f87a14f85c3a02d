import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cblab import (
    FiniteAtoms,
    PowerTail,
    ScaledSum,
    Tabulated,
    TemperedPowerTail,
    Truncated,
    ZERO,
    levy_integral,
    measure_from_dict,
)
from cblab.errors import EmptyTailError, UndeterminedTailError
from cblab.moments import power, power_log, x_log_x

INF = math.inf


# ---------------------------------------------------------------------------
# masses and moments
# ---------------------------------------------------------------------------


def test_tail_mass_atoms():
    m = FiniteAtoms(((2.0, 1.0), (3.0, 0.5)))
    assert m.mass_above(2.5) == 0.5
    assert m.mass_above(10.0) == 0.0


def test_tail_mass_power_normalised():
    # density alpha z^(-1-alpha): mass above 1 is exactly 1
    m = PowerTail(c=1.5, alpha=1.5)
    assert m.mass_above(1.0) == pytest.approx(1.0, rel=1e-14)


def test_power_tail_mean_above():
    m = PowerTail(c=1.0, alpha=1.5)
    assert m.mean_above(1.0) == pytest.approx(2.0, rel=1e-14)  # c/(alpha-1)
    assert PowerTail(c=1.0, alpha=0.5).mean_above(1.0) == INF
    assert PowerTail(c=1.0, alpha=1.0).mean_above(1.0) == INF


def test_one_wedge_integrals_power():
    # (1 ^ z^2): finite iff alpha < 2 when support touches 0
    assert math.isfinite(PowerTail(1.0, 1.5).one_wedge_z2())
    assert PowerTail(1.0, 1.5).one_wedge_z() == INF  # alpha >= 1
    assert math.isfinite(PowerTail(1.0, 0.5).one_wedge_z())  # int_0^1 z^-0.5 = 2
    assert PowerTail(1.0, 0.5).one_wedge_z() == pytest.approx(2.0 + 2.0, rel=1e-12)


def test_partial_moment_against_quadrature():
    cases = [
        (PowerTail(1.0, 1.5), lambda z: z**-2.5),
        (TemperedPowerTail(1.0, 0.8, 1.3), lambda z: z**-1.8 * math.exp(-1.3 * z)),
    ]
    for m, dens in cases:
        for j, a, b in [(0, 0.5, 3.0), (1, 0.01, 1.0), (1, 1.0, 40.0)]:
            ref, _ = quad(lambda z: z**j * dens(z), a, b, limit=200)
            assert m.partial_moment(j, a, b) == pytest.approx(ref, rel=1e-9)


def test_scaled_sum_combines():
    m = ScaledSum(((2.0, PowerTail(1.0, 1.5)), (1.0, FiniteAtoms(((3.0, 0.5),)))))
    want = 2.0 * PowerTail(1.0, 1.5).mass_above(2.0) + 0.5
    assert m.mass_above(2.0) == pytest.approx(want, rel=1e-14)
    assert m.tail_exponent() == 1.5


@given(
    a1=st.floats(0.1, 50.0),
    a2=st.floats(0.1, 50.0),
    alpha=st.floats(0.2, 1.9),
)
@settings(max_examples=60, deadline=None)
def test_tail_mass_monotone(a1, a2, alpha):
    lo, hi = sorted((a1, a2))
    m = PowerTail(1.0, alpha)
    assert m.mass_above(lo) >= m.mass_above(hi)


# ---------------------------------------------------------------------------
# exponential integrals
# ---------------------------------------------------------------------------


def test_compensated_integral_frozen_values():
    # references from a 30-digit series+quad evaluation
    m = PowerTail(1.0, 1.5)
    assert m.compensated_exp_integral(0.5) == pytest.approx(-0.164457241789666499, rel=1e-11)
    assert m.compensated_exp_integral(1.0) == pytest.approx(0.363271801207354703, rel=1e-11)
    assert m.compensated_exp_integral(2.0) == pytest.approx(2.68434206568266801, rel=1e-11)
    t = TemperedPowerTail(1.0, 0.5, 1.0)
    assert t.compensated_exp_integral(1.0) == pytest.approx(0.0252994181738851006, rel=1e-10)


def test_compensated_integral_zero_lambda():
    for m in [PowerTail(1.0, 1.5), TemperedPowerTail(1.0, 0.5, 1.0), FiniteAtoms(((2.0, 1.0),))]:
        assert m.compensated_exp_integral(0.0) == 0.0


def test_one_minus_exp_frozen_values():
    m = PowerTail(1.0, 0.5)
    # Gamma(1 - alpha)/alpha * lam^alpha = Gamma(0.5)/0.5 = 2 sqrt(pi)
    assert m.one_minus_exp_integral(1.0) == pytest.approx(3.54490770181103205, rel=1e-12)
    t = TemperedPowerTail(1.0, 0.5, 1.0)
    assert t.one_minus_exp_integral(1.0) == pytest.approx(1.46834884745096895, rel=1e-12)


def test_one_minus_exp_inadmissible_is_inf():
    assert PowerTail(1.0, 1.5).one_minus_exp_integral(1.0) == INF


def test_exp_partial_matches_quadrature():
    m = PowerTail(2.0, 1.2, 0.3)
    for lam in [0.3, 2.0]:
        ref, _ = quad(lambda z: math.exp(-lam * z) * 2.0 * z**-2.2, 1.5, 60.0, limit=200)
        ref += m.exp_partial(lam, 60.0)
        assert m.exp_partial(lam, 1.5) == pytest.approx(ref, rel=1e-9)


# ---------------------------------------------------------------------------
# truncation as an image measure
# ---------------------------------------------------------------------------


def test_truncated_moves_tail_mass_to_atom():
    m = PowerTail(1.0, 1.5)
    tr = Truncated(m, 2.0)
    assert tr.mass_above(1.0) == pytest.approx(m.mass_above(1.0), rel=1e-14)
    assert tr.mass_above(2.0) == 0.0
    assert tr.point_mass(2.0) == pytest.approx(m.mass_above(2.0), rel=1e-14)
    # first moment picks up k * tail mass
    ref, _ = quad(lambda z: z * z**-2.5, 0.5, 2.0)
    ref += 2.0 * m.mass_above(2.0)
    assert tr.partial_moment(1, 0.5, INF) == pytest.approx(ref, rel=1e-10)


def test_truncated_compensated_integral():
    m = PowerTail(1.0, 1.5)
    tr = Truncated(m, 2.0)
    for lam in [0.1, 1.0, 4.0]:
        def clipped(z):
            zz = min(z, 2.0)
            u = lam * zz
            core = (math.expm1(-u) + u) if zz <= 1.0 else math.expm1(-u)
            return core * z**-2.5
        ref, _ = quad(clipped, 1e-12, 2.0, points=[1.0], limit=300)
        ref += math.expm1(-lam * 2.0) * m.mass_above(2.0)
        assert tr.compensated_exp_integral(lam) == pytest.approx(ref, rel=1e-6)


def test_truncated_all_moments_finite():
    tr = Truncated(PowerTail(1.0, 1.5), 10.0)
    for j in range(1, 7):
        assert math.isfinite(tr.partial_moment(j, 0.0 if j >= 2 else 1.0, INF))


def test_truncated_sampling_clips():
    rng = np.random.default_rng(7)
    tr = Truncated(PowerTail(1.0, 1.5), 2.0)
    z = tr.sample_above(1.0, rng, 2000)
    assert z.max() <= 2.0
    assert (z > 1.0).all()
    assert (z == 2.0).mean() == pytest.approx(
        tr.point_mass(2.0) / tr.mass_above(1.0), abs=0.05
    )


# ---------------------------------------------------------------------------
# tail sampling
# ---------------------------------------------------------------------------


def test_sample_tail_single_atom():
    rng = np.random.default_rng(0)
    m = FiniteAtoms(((2.0, 1.0),))
    assert (m.sample_above(1.0, rng, 100) == 2.0).all()


def test_sample_tail_empty():
    rng = np.random.default_rng(0)
    with pytest.raises(EmptyTailError):
        ZERO.sample_above(1.0, rng, 3)


def test_pareto_tail_sampler_mean():
    # mean of the normalized tail from 1 is alpha/(alpha-1) = 3
    rng = np.random.default_rng(123)
    m = PowerTail(1.0, 1.5)
    z = m.sample_above(1.0, rng, 10**6)
    se = z.std(ddof=1) / math.sqrt(z.size)
    assert abs(z.mean() - 3.0) < 3.0 * se


def _ks_distance(sample, cdf):
    x = np.sort(sample)
    n = x.size
    u = cdf(x)
    return max(np.max(np.arange(1, n + 1) / n - u), np.max(u - np.arange(0, n) / n))


@pytest.mark.parametrize(
    "measure,cdf",
    [
        (
            PowerTail(1.0, 1.5),
            lambda z: 1.0 - z ** -1.5,
        ),
        (
            ScaledSum(((1.0, PowerTail(1.0, 1.2)), (0.5, PowerTail(2.0, 2.5)))),
            None,  # built below
        ),
    ],
)
def test_tail_sampler_ks(measure, cdf):
    # empirical CDF of 1e5 draws vs the normalized analytic tail CDF, 99% level,
    # over seeded repetitions
    if cdf is None:
        total = measure.mass_above(1.0)
        cdf = lambda z: 1.0 - np.array([measure.mass_above(v) for v in z]) / total
    crit = 1.628 / math.sqrt(10**5)
    passed = 0
    reps = 12
    for seed in range(reps):
        rng = np.random.default_rng(seed)
        z = measure.sample_above(1.0, rng, 10**5)
        if _ks_distance(z, cdf) < crit:
            passed += 1
    assert passed >= math.ceil(0.95 * reps)


def test_tempered_tail_sampler_ks():
    m = TemperedPowerTail(1.0, 0.5, 1.0)
    total = m.mass_above(1.0)
    crit = 1.628 / math.sqrt(2 * 10**4)

    def cdf(values):
        return 1.0 - np.array([m.mass_above(float(v)) for v in values]) / total

    passed = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        z = m.sample_above(1.0, rng, 2 * 10**4)
        if _ks_distance(z, cdf) < crit:
            passed += 1
    assert passed >= 9


# ---------------------------------------------------------------------------
# tabulated measures
# ---------------------------------------------------------------------------


def _tab():
    zs = (0.5, 1.0, 2.0, 4.0)
    dens = (0.8, 0.4, 0.1, 0.05)
    return Tabulated(zs, dens, tail_alpha=1.5)


def test_tabulated_masses():
    t = _tab()
    # trapezoid-exact masses for the linear density
    grid_mass = 0.5 * (0.8 + 0.4) * 0.5 + 0.5 * (0.4 + 0.1) * 1.0 + 0.5 * (0.1 + 0.05) * 2.0
    tail = 0.05 * 4.0**2.5 / 1.5 * 4.0**-1.5  # continuation c/alpha * z_K^-alpha
    assert t.mass_above(0.5) == pytest.approx(grid_mass + tail, rel=1e-9)


def test_tabulated_unknown_tail():
    t = Tabulated((1.0, 2.0), (0.5, 0.25), unbounded_unknown=True)
    assert t.tail_exponent() is None
    with pytest.raises(UndeterminedTailError):
        t.mass_above(1.0)
    # queries inside the grid still work
    assert t.partial_moment(0, 1.0, 2.0) == pytest.approx(0.375, rel=1e-9)


def test_tabulated_sampler_ks():
    t = _tab()
    total = t.mass_above(0.5)
    grid = np.linspace(0.5, 25.0, 600)
    masses = np.array([t.mass_above(g) for g in grid])
    cdf = lambda v: 1.0 - np.interp(v, grid, masses, right=0.0) / total
    rng = np.random.default_rng(5)
    z = t.sample_above(0.5, rng, 2 * 10**4)
    assert _ks_distance(z[z < 25.0], cdf) < 1.628 / math.sqrt(2 * 10**4)


# ---------------------------------------------------------------------------
# f-integrals over the tail (the criterion core)
# ---------------------------------------------------------------------------


def test_levy_integral_exponent_rule():
    m = PowerTail(1.0, 1.5)
    assert levy_integral(m, power(1.2)).is_finite
    assert levy_integral(m, power(1.8)).is_infinite
    assert levy_integral(m, power(1.5)).is_infinite  # boundary p = alpha
    # z log z against alpha = 1: diverges
    assert levy_integral(PowerTail(1.0, 1.0), x_log_x()).is_infinite
    # boundary with strong log damping: p = alpha, q < -1 converges
    assert levy_integral(m, power_log(1.5, -1.5)).is_finite
    assert levy_integral(m, power_log(1.5, -1.0)).is_infinite


def test_levy_integral_values():
    m = PowerTail(1.0, 1.5)
    assert levy_integral(m, power(1.2)).value == pytest.approx(1.0 / 0.3, rel=1e-10)
    assert levy_integral(m, x_log_x()).value == pytest.approx(4.0, rel=1e-10)
    got = levy_integral(m, power_log(1.2, 2.0)).value
    assert got == pytest.approx(99.6296296296296296, rel=1e-10)


def test_levy_integral_vs_bruteforce():
    # quadrature to a cutoff plus analytic power remainder
    f = power(1.2)
    for m in [PowerTail(1.0, 1.5), PowerTail(0.7, 2.2, 0.4), _tab()]:
        res = levy_integral(m, f)
        ref, _ = quad(lambda z: z**1.2 * float(m.density(z)), 1.0, 500.0, limit=400,
                      points=[p for p in (2.0, 4.0) if isinstance(m, Tabulated)])
        te = m.tail_exponent()
        c_eff = float(m.density(500.0)) * 500.0 ** (1.0 + te)
        ref += c_eff * 500.0 ** (1.2 - te) / (te - 1.2)
        assert res.is_finite and res.value == pytest.approx(ref, rel=1e-6)


def test_levy_integral_light_and_bounded():
    assert levy_integral(TemperedPowerTail(1.0, 0.5, 1.0), power(3.0)).is_finite
    got = levy_integral(TemperedPowerTail(1.0, 0.5, 1.0), power(3.0)).value
    ref, _ = quad(lambda z: z**3 * z**-1.5 * math.exp(-z), 1.0, 80.0, limit=300)
    assert got == pytest.approx(ref, rel=1e-8)
    res = levy_integral(FiniteAtoms(((2.0, 1.0), (0.5, 3.0))), power(2.0))
    assert res.is_finite and res.value == pytest.approx(4.0, rel=1e-14)


def test_levy_integral_undetermined():
    t = Tabulated((1.0, 2.0), (0.5, 0.25), unbounded_unknown=True)
    assert levy_integral(t, power(1.2)).is_undetermined


def test_levy_integral_scaled_sum():
    m = ScaledSum(((1.0, PowerTail(1.0, 1.5)), (2.0, FiniteAtoms(((3.0, 1.0),)))))
    res = levy_integral(m, power(1.2))
    assert res.is_finite
    assert res.value == pytest.approx(1.0 / 0.3 + 2.0 * 3.0**1.2, rel=1e-10)
    heavy = ScaledSum(((1.0, PowerTail(1.0, 1.5)), (1.0, PowerTail(1.0, 1.1)),))
    assert levy_integral(heavy, power(1.2)).is_infinite


# ---------------------------------------------------------------------------
# serialization round trip
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "m",
    [
        PowerTail(1.0, 1.5),
        PowerTail(2.0, 0.7, 0.25),
        TemperedPowerTail(1.0, 0.5, 2.0),
        FiniteAtoms(((1.0, 2.0), (2.5, 0.5))),
        ZERO,
        ScaledSum(((1.0, PowerTail(1.0, 1.5)), (0.5, FiniteAtoms(((2.0, 1.0),))))),
        _tab(),
        Tabulated((1.0, 2.0), (0.5, 0.25), unbounded_unknown=True),
        Truncated(PowerTail(1.0, 1.5), 5.0),
    ],
)
def test_measure_roundtrip(m):
    assert measure_from_dict(m.to_dict()) == m
