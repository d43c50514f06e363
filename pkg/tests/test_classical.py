import numpy as np
import pytest

from qdae.classical import IntegrationError, Trace, forward_euler, rk4, rmse
from qdae.dae import OdeSystem
from qdae.expr import parse_expression as pe


def ode_from_text(variables, rhs_texts, params=None):
    params = params or {}
    return OdeSystem(
        variables=tuple(variables),
        parameters=dict(params),
        rhs=tuple(pe(t, list(params)) for t in rhs_texts),
    )


DECAY = ode_from_text(["z"], ["-z"])
ZERO = ode_from_text(["z"], ["0"])


# --- forward Euler ---------------------------------------------------------------

def test_euler_constant_rhs_gives_constant_trace():
    trace = forward_euler(ZERO, [1.5], 0.01, 1.0)
    assert np.all(trace.values == 1.5)
    assert len(trace.times) == 101


def test_euler_single_decay_step():
    trace = forward_euler(DECAY, [1.0], 0.01, 0.01)
    assert trace.values[-1, 0] == pytest.approx(0.99, abs=0.0)


def test_euler_order_one_convergence():
    exact = np.exp(-1.0)
    errors = []
    for dt in (0.02, 0.01, 0.005):
        trace = forward_euler(DECAY, [1.0], dt, 1.0)
        errors.append(abs(trace.values[-1, 0] - exact))
    assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.1)
    assert errors[1] / errors[2] == pytest.approx(2.0, rel=0.1)


def test_non_finite_state_aborts_with_partial_trace():
    exploding = ode_from_text(["z"], ["z*z"])
    with pytest.raises(IntegrationError) as err:
        forward_euler(exploding, [10.0], 0.5, 50.0)
    assert len(err.value.partial.times) >= 1


# --- RK4 --------------------------------------------------------------------------

def test_rk4_exponential_endpoint():
    trace = rk4(DECAY, [1.0], 0.01, 1.0)
    assert trace.values[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-9)


def test_rk4_order_four_convergence():
    exact = np.exp(-1.0)
    e1 = abs(rk4(DECAY, [1.0], 0.02, 1.0).values[-1, 0] - exact)
    e2 = abs(rk4(DECAY, [1.0], 0.01, 1.0).values[-1, 0] - exact)
    assert e1 / e2 == pytest.approx(16.0, rel=0.2)


def test_rk4_harmonic_energy_drift():
    # direct evaluator keeps this 628k-step run fast
    oscillator = OdeSystem(variables=("q", "p"), parameters={},
                           rhs_evaluator=lambda z: np.array([z[1], -z[0]]))
    trace = rk4(oscillator, [1.0, 0.0], 1e-3, 100 * 2 * np.pi)
    energy = 0.5 * (trace.values[:, 0] ** 2 + trace.values[:, 1] ** 2)
    assert np.max(np.abs(energy - 0.5)) <= 1e-6


def test_euler_agrees_with_rk4_to_first_order():
    # Richardson-style check on a smooth nonlinear problem: the Euler-vs-RK4
    # gap shrinks linearly with the step.
    smib = ode_from_text(
        ["delta", "w"], ["w", "k1 - k2*sin(delta) - k3*w"],
        {"k1": 5.0, "k2": 10.0, "k3": 1.7})
    gaps = []
    for dt in (0.01, 0.005, 0.0025):
        e = forward_euler(smib, [-1.0, 7.0], dt, 2.0)
        r = rk4(smib, [-1.0, 7.0], dt, 2.0)
        gaps.append(np.max(np.abs(e.values - r.values)))
    for coarse, fine in zip(gaps, gaps[1:]):
        assert 1.7 <= coarse / fine <= 2.9


def test_smib_endpoint_against_fine_rk4_oracle():
    smib = ode_from_text(
        ["delta", "w"], ["w", "k1 - k2*sin(delta) - k3*w"],
        {"k1": 5.0, "k2": 10.0, "k3": 1.7})
    euler = forward_euler(smib, [-1.0, 7.0], 0.01, 20.0)
    oracle = rk4(smib, [-1.0, 7.0], 1e-4, 20.0)
    assert euler.values[-1, 0] == pytest.approx(oracle.values[-1, 0], abs=0.05)
    assert euler.values[-1, 1] == pytest.approx(oracle.values[-1, 1], abs=0.05)
    # endpoint is the upright equilibrium asin(k1/k2)
    assert oracle.values[-1, 0] == pytest.approx(np.arcsin(0.5), abs=1e-6)


# --- events ----------------------------------------------------------------------

def test_events_swap_the_model_at_step_boundaries():
    frozen = ZERO
    drifting = ode_from_text(["z"], ["1"])
    trace = forward_euler(frozen, [0.0], 0.01, 1.0, events=[(0.5, drifting)])
    assert trace.values[50, 0] == pytest.approx(0.0, abs=0.0)
    assert trace.values[-1, 0] == pytest.approx(0.5, abs=1e-12)


# --- rmse ------------------------------------------------------------------------

def test_rmse_identical_traces_is_zero():
    t = forward_euler(DECAY, [1.0], 0.01, 1.0)
    assert rmse(t, t, "z") == 0.0


def test_rmse_constant_offset_is_exact():
    t = forward_euler(ZERO, [0.0], 0.01, 1.0)
    shifted = Trace(t.names, t.times, t.values + 0.125)
    assert rmse(t, shifted, "z") == pytest.approx(0.125, abs=0.0)


def test_rmse_is_symmetric_and_nonnegative():
    rng = np.random.default_rng(3)
    times = np.arange(11) * 0.1
    a = Trace(("z",), times, rng.normal(size=(11, 1)))
    b = Trace(("z",), times, rng.normal(size=(11, 1)))
    assert rmse(a, b, "z") == rmse(b, a, "z") >= 0.0


def test_rmse_grid_mismatch_rejected():
    a = forward_euler(DECAY, [1.0], 0.01, 1.0)
    b = forward_euler(DECAY, [1.0], 0.02, 1.0)
    with pytest.raises(ValueError):
        rmse(a, b, "z")
