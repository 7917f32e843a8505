import numpy as np
import pytest

from incrlpv.duffing import duffing_incremental, case_study_weights
from incrlpv.genplant import TrackingGenplantSpec, WeightSet, build_tracking_genplant
from incrlpv.models import (ModelError, RationalSiso, StateSpace, freq_response, lower_lft)


def _genplant():
    return build_tracking_genplant(TrackingGenplantSpec(duffing_incremental().to_affine(),
                                                        case_study_weights()))


def test_dimensions_and_constant_channels():
    gp = _genplant()
    assert gp.dims == (4, 2, 1, 2, 1)
    for name in ("B1", "D11", "D21", "B2", "C2"):
        assert gp.is_constant(name)


@pytest.mark.parametrize("rho", [0.0, 1.0, 2.0])
def test_open_loop_channels_match_hand_derivation(rho):
    """With u = 0: z1 = W1 (r - G W3 d_i), z2 = 0, y = r - G W3 d_i."""
    W = case_study_weights()
    gp = _genplant()
    plant = gp.evaluate([rho])
    ol = lower_lft(plant, StateSpace.static([[0.0]]))
    w = np.array([1e-2, 0.7, 30.0])
    s = 1j * w
    G = 1.0 / (s ** 2 + 0.2 * s + 0.5 + 15.0 * rho)
    resp = freq_response(ol, w)
    assert resp[:, 0, 0] == pytest.approx(W.W1(s), rel=1e-10)
    assert resp[:, 0, 1] == pytest.approx(-W.W1(s) * G * W.W3, rel=1e-10)
    assert np.all(resp[:, 1, :] == 0)
    y = freq_response(StateSpace(plant.A, plant.B1, plant.C2, plant.D21), w)
    assert y[:, 0, 1] == pytest.approx(-G * W.W3, rel=1e-10)


def test_control_weight_channel():
    W = case_study_weights()
    plant = _genplant().evaluate([0.0])
    u_to_z2 = StateSpace(plant.A, plant.B2, plant.C1[1:], plant.D12[1:])
    assert freq_response(u_to_z2, 5.0)[0, 0] == pytest.approx(W.W2(5j), rel=1e-12)


def test_zero_disturbance_weight_gives_exact_zero_channel():
    W = case_study_weights()
    gp = build_tracking_genplant(TrackingGenplantSpec(duffing_incremental().to_affine(),
                                                      WeightSet(W.W1, W.W2, 0.0)))
    assert np.all(gp.constant.B1[:, 1] == 0)


def test_unstable_weight_rejected():
    with pytest.raises(ModelError):
        WeightSet(RationalSiso((1.0,), (1.0, -1.0)), case_study_weights().W2, 1.0)


def test_channel_order_is_fixed():
    with pytest.raises(ModelError):
        TrackingGenplantSpec(duffing_incremental().to_affine(), case_study_weights(),
                             channels=("d_i", "r"))


def test_lti_plant_accepted():
    G = StateSpace([[-1.0]], [[1.0]], [[1.0]], [[0.0]])
    gp = build_tracking_genplant(TrackingGenplantSpec(G, case_study_weights()))
    assert gp.dims == (3, 2, 1, 2, 1) and gp.box.n_rho == 0
