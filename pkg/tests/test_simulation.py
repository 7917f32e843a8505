import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incrlpv.duffing import (DUFFING_BOX, duffing_incremental, duffing_plant, duffing_primal,
                             duffing_scheduling, case_study_weights)
from incrlpv.genplant import TrackingGenplantSpec, WeightSet, build_tracking_genplant
from incrlpv.incremental import SchedulingMap
from incrlpv.models import SchedulingBox, StateSpace, random_stable
from incrlpv.simulation import (BODE_COLUMNS, CSV_COLUMNS, LtiLoop, Scenario, SimulationRun,
                                incremental_gain_estimate, l2_norm, oscillation_metric,
                                process_sensitivity_bode, random_input_pairs, rk4_step,
                                simulate_closed_loop)
from incrlpv.synthesis import LpvController, brl_gain


def decay(t, x):
    return -x


# -- integrator ---------------------------------------------------------------

def test_rk4_hand_evaluated_step():
    # k1=-1, k2=-0.95, k3=-0.9525, k4=-0.90475 -> 0.9048375
    assert rk4_step(decay, np.array([1.0]), 0.0, 0.1)[0] == pytest.approx(0.9048375, abs=1e-15)


def test_rk4_zero_field_leaves_state_unchanged():
    x = np.array([1.5, -2.0])
    assert np.array_equal(rk4_step(lambda t, x: np.zeros_like(x), x, 0.0, 0.3), x)


def test_rk4_fourth_order_convergence():
    dts = np.array([0.2, 0.1, 0.05, 0.025])
    errs = []
    for dt in dts:
        x = np.array([1.0])
        for i in range(int(round(1.0 / dt))):
            x = rk4_step(decay, x, i * dt, dt)
        errs.append(abs(x[0] - math.exp(-1.0)))
    order = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert order == pytest.approx(4.0, abs=0.2)


# -- scenario -------------------------------------------------------------------

def test_scenario_validation():
    with pytest.raises(ValueError):
        Scenario(dt=0.0)
    with pytest.raises(ValueError):
        Scenario(ref_times=(0.0, 50.0))
    with pytest.raises(ValueError):
        Scenario(ref_levels=(0.3,), ref_times=(0.0, 5.0))


def test_scenario_reference_and_disturbance():
    sc = Scenario(disturbance=6.0, disturbance_start=2.0)
    assert [sc.reference(t) for t in (0.0, 4.999, 5.0, 40.0)] == [0.0, 0.0, 0.3, 0.3]
    assert [sc.disturbance_at(t) for t in (1.0, 2.0)] == [0.0, 6.0]
    assert sc.grid().size == 40001 and sc.grid()[-1] == pytest.approx(40.0)


# -- metrics ----------------------------------------------------------------------

def _run_with_error(t, e):
    z = np.zeros_like(t)
    return SimulationRun(t, z, z, z, z, e, z)


def test_oscillation_metric_constant_is_zero():
    t = np.linspace(0, 10, 1001)
    assert oscillation_metric(_run_with_error(t, np.full_like(t, 0.2))) == 0.0


def test_oscillation_metric_sine_peak_to_peak():
    t = np.arange(0, 40.0 + 1e-9, 1e-3)
    run = _run_with_error(t, 0.05 * np.sin(3.0 * t))
    assert oscillation_metric(run) == pytest.approx(0.1, abs=1e-6)


def test_oscillation_metric_window_validation():
    t = np.linspace(0, 1, 11)
    with pytest.raises(ValueError):
        oscillation_metric(_run_with_error(t, t), window_fraction=0.0)


def test_l2_norm_of_sine_matches_analytic():
    T, a, w = 20.0, 0.7, 2.3
    t = np.arange(0.0, T + 1e-12, 1e-3)
    exact = math.sqrt(a * a * (T / 2 - math.sin(2 * w * T) / (4 * w)))
    assert l2_norm(a * np.sin(w * t), t) == pytest.approx(exact, rel=1e-3)


# -- closed-loop simulation ---------------------------------------------------------

def _static_controller(gain):
    return LpvController((np.zeros((1, 1)),) * 2, (np.zeros((1, 1)),) * 2,
                         np.zeros((1, 1)), np.array([[gain]]), DUFFING_BOX)


def test_zero_scenario_gives_identically_zero_signals():
    run = simulate_closed_loop(duffing_plant(), _static_controller(10.0),
                               Scenario(ref_levels=(0.0,), ref_times=(0.0,), t_end=2.0),
                               duffing_scheduling())
    for name in ("r", "di", "y", "u", "e", "rho"):
        assert np.all(getattr(run, name) == 0.0)
    assert run.violations == 0 and not run.aborted


def test_box_mismatch_rejected():
    psi = SchedulingMap(lambda x, u: x[0:1] ** 2, SchedulingBox([0.0], [3.0]))
    with pytest.raises(ValueError):
        simulate_closed_loop(duffing_plant(), _static_controller(1.0), Scenario(t_end=1.0), psi)


def test_clamped_samples_are_counted():
    # large step drives x1^2 beyond the box; the count must be reported
    run = simulate_closed_loop(duffing_plant(), _static_controller(50.0),
                               Scenario(ref_levels=(3.0,), ref_times=(0.0,), t_end=3.0),
                               duffing_scheduling())
    assert run.violations > 0
    assert np.all(run.rho <= DUFFING_BOX.upper[0])


def test_blowup_aborts_with_partial_run():
    # an unstable controller state grows like exp(5 t) and drives the plant
    k = LpvController((np.array([[5.0]]),) * 2, (np.array([[1.0]]),) * 2,
                      np.array([[1.0]]), np.zeros((1, 1)), DUFFING_BOX)
    run = simulate_closed_loop(duffing_plant(), k,
                               Scenario(ref_levels=(0.3,), ref_times=(0.0,), t_end=20.0,
                                        dt=1e-2), duffing_scheduling())
    assert run.aborted and "blow-up" in run.message
    assert run.t.size < 2001
    assert len({len(getattr(run, c)) for c in CSV_COLUMNS}) == 1


def test_csv_header_and_significant_digits():
    t = np.array([0.0, 0.001])
    run = SimulationRun(t, np.array([0.0, 0.3]), np.zeros(2), np.array([0.0, 1 / 3]),
                        np.zeros(2), np.array([0.0, -1e-7 / 3]), np.zeros(2))
    buf = io.StringIO()
    run.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,r,di,y,u,e,rho"
    assert lines[2].split(",")[3] == "0.333333333"
    assert lines[2].split(",")[5] == "-0.0000000333333333"


@pytest.mark.slow
def test_simulation_is_deterministic(li2_design):
    sc = Scenario(t_end=6.0, disturbance=6.0)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        simulate_closed_loop(duffing_plant(), li2_design.loop_controller, sc,
                             duffing_scheduling()).to_csv(buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]


# -- incremental gain -------------------------------------------------------------------

def test_identical_pair_is_skipped_with_warning():
    loop = LtiLoop(StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]]))
    w = random_input_pairs(1, 1, seed=0)[0][0]
    t = np.linspace(0, 5, 501)
    with pytest.warns(RuntimeWarning, match="skipped"):
        est = incremental_gain_estimate(loop, [(w, w, "same")], t)
    assert est.eta_lower == 0.0 and math.isnan(est.ratios[0])


def test_gain_estimate_of_static_gain_is_exact():
    loop = LtiLoop(StateSpace.static([[2.5]]))
    t = np.linspace(0, 10, 2001)
    est = incremental_gain_estimate(loop, random_input_pairs(3, 1, seed=1), t)
    assert est.eta_lower == pytest.approx(2.5, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_lti_gain_estimate_never_exceeds_brl(seed):
    rng = np.random.default_rng(seed)
    sys = random_stable(3, 2, 2, rng, margin=0.3)
    t = np.arange(0, 30.0 + 1e-9, 1e-2)
    est = incremental_gain_estimate(LtiLoop(sys), random_input_pairs(4, 2, seed=seed), t)
    assert 0.0 <= est.eta_lower <= brl_gain(sys) * 1.01


def test_random_pairs_are_seeded():
    a = random_input_pairs(2, 2, seed=4)
    b = random_input_pairs(2, 2, seed=4)
    assert [d for *_, d in a] == [d for *_, d in b]
    assert np.array_equal(a[1][0](1.3), b[1][0](1.3))


# -- process sensitivity -----------------------------------------------------------------

@pytest.mark.slow
def test_bode_table_shape_and_csv(l2_design):
    omega = np.logspace(-4, 3, 15)
    tab = process_sensitivity_bode(l2_design.genplant, l2_design.result.controller,
                                   [0.0, 1.0, 2.0], omega, case_study_weights())
    assert tab.mag_db.shape == (15, 3) and tab.stable.all()
    assert np.all(np.isfinite(tab.mag_db))
    W = case_study_weights()
    assert tab.invweight_db[0] == pytest.approx(-20 * np.log10(abs(W.W1(1e-4j)) * 1.5))
    buf = io.StringIO()
    tab.to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(BODE_COLUMNS) and len(lines) == 1 + 45


def test_bode_invweight_low_frequency_limit():
    W = case_study_weights()
    k = _static_controller(0.0)
    gp = build_tracking_genplant(TrackingGenplantSpec(duffing_incremental().to_affine(), W))
    # static zero controller: frozen loop is the (stable) open loop
    tab = process_sensitivity_bode(gp, k, [0.0], [1e-9], W)
    dc = 20 * np.log10(2.506 / 2.506e-4)
    assert tab.invweight_db[0] == pytest.approx(-(dc + 20 * np.log10(1.5)), abs=1e-6)


@pytest.mark.slow
def test_bode_zero_disturbance_weight_gives_minus_infinity(l2_design):
    W = case_study_weights()
    W0 = WeightSet(W.W1, W.W2, 0.0)
    gp = build_tracking_genplant(TrackingGenplantSpec(duffing_primal().to_affine(), W0))
    tab = process_sensitivity_bode(gp, l2_design.result.controller, [1.0], [1e-2, 1.0], W0)
    assert np.all(tab.mag_db == -np.inf)
