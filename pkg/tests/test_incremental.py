import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incrlpv.duffing import (DUFFING_BOX, DuffingParams, duffing_incremental, duffing_plant,
                             duffing_primal, duffing_scheduling)
from incrlpv.incremental import (SchedulingMap, fd_jacobian_oracle, gateaux_at,
                                 incremental_plant, primal_embedding)
from incrlpv.models import ModelError, SchedulingBox


def test_fd_oracle_on_polynomial():
    # d/dx (x0^2 x1, sin x1) at (1, 2)
    jac = fd_jacobian_oracle(lambda v: np.array([v[0] ** 2 * v[1], np.sin(v[1])]), [1.0, 2.0])
    assert jac == pytest.approx(np.array([[4.0, 1.0], [0.0, np.cos(2.0)]]), abs=1e-8)


def test_duffing_jacobians_match_finite_differences():
    plant = duffing_plant()
    worst = 0.0
    for x, u in plant.sample_points(200, seed=3):
        jac = plant.jacobians(x, u)
        fx = fd_jacobian_oracle(lambda v: plant.f(v, u), x)
        fu = fd_jacobian_oracle(lambda v: plant.f(x, v), u)
        hx = fd_jacobian_oracle(lambda v: plant.h2(v), x)
        worst = max(worst, *(np.max(np.abs(a - b)) for a, b in
                             ((jac["A"], fx), (jac["B2"], fu), (jac["C2"], hx))))
    assert worst < 1e-5


def test_incremental_coefficient_is_three_times_primal():
    inc = duffing_incremental().to_affine().terms[0].A
    pri = duffing_primal().to_affine().terms[0].A
    assert inc[1, 0] == -15.0 and pri[1, 0] == -5.0
    assert inc[1, 0] == 3.0 * pri[1, 0]
    # all other entries of the parameter term vanish
    assert np.count_nonzero(inc) == 1 and np.count_nonzero(pri) == 1


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.414, 1.414), st.floats(-10, 10), st.floats(-50, 50))
def test_incremental_form_equals_gateaux_derivative(x1, x2, u):
    plant, psi = duffing_plant(), duffing_scheduling()
    x, uu = np.array([x1, x2]), np.array([u])
    frozen = duffing_incremental().frozen(psi(x, uu))
    assert frozen.A == pytest.approx(gateaux_at(plant, x, uu).A, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1.414, 1.414), st.floats(-10, 10), st.floats(-50, 50))
def test_primal_embedding_reproduces_vector_field(x1, x2, u):
    plant, psi = duffing_plant(), duffing_scheduling()
    x, uu = np.array([x1, x2]), np.array([u])
    m = duffing_primal().matrices(psi(x, uu))
    assert m["A"] @ x + m["B2"] @ uu == pytest.approx(plant.f(x, uu), abs=1e-10)


def test_gateaux_outside_operating_set_raises():
    with pytest.raises(ModelError):
        gateaux_at(duffing_plant(), [0.0, 11.0], [0.0])


def _factors(cubic_gain):
    p = DuffingParams()
    C = np.array([[1.0, 0.0]])
    return {"A": lambda rho: np.array([[0.0, 1.0], [-p.k1 - cubic_gain * p.k2 * rho[0], -p.d]]),
            "B2": lambda rho: np.array([[0.0], [1.0]]),
            "C1": lambda rho: C, "D12": lambda rho: np.zeros((1, 1)), "C2": lambda rho: C}


def test_correct_factorization_is_accepted():
    fp = incremental_plant(duffing_plant(), duffing_scheduling(), _factors(3.0))
    assert fp.form == "incremental"


def test_wrong_factorization_is_rejected():
    wrong = _factors(1.0)
    with pytest.raises(ModelError, match="factorization mismatch"):
        incremental_plant(duffing_plant(), duffing_scheduling(), wrong)


def test_incremental_factors_are_not_a_primal_embedding():
    with pytest.raises(ModelError):
        primal_embedding(duffing_plant(), duffing_scheduling(), _factors(3.0))


def test_missing_factor_is_rejected():
    partial = {k: v for k, v in _factors(3.0).items() if k != "C1"}
    with pytest.raises(ModelError, match="C1"):
        incremental_plant(duffing_plant(), duffing_scheduling(), partial)


def test_scheduling_map_range_is_checked():
    narrow = SchedulingMap(lambda x, u: x[0:1] ** 2, SchedulingBox([0.0], [1.0]), vectorized=True)
    with pytest.raises(ModelError, match="outside the scheduling box"):
        narrow.validate(duffing_plant())


def test_scheduling_map_covers_operating_set():
    duffing_scheduling().validate(duffing_plant())
    x1_max = duffing_plant().X.upper[0]
    assert x1_max ** 2 <= DUFFING_BOX.upper[0]
