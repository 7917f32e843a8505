"""Weighted tracking / input-disturbance generalized plant.

Wiring (one-degree-of-freedom error feedback)::

    w = (r, d_i)       plant input  = u + W3 d_i
    e = r - y_plant    z1 = W1 e,  z2 = W2 u,  y = e

The generalized plant state is the plant state followed by the ``W1`` and
``W2`` filter states. The weights only shape the synthesis problem; they
never appear in simulated closed loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import (AffinePlant, ModelError, PartitionedSystem, RationalSiso, SchedulingBox,
                     StateSpace, tf_to_ss)

__all__ = ["WeightSet", "TrackingGenplantSpec", "build_tracking_genplant", "frozen_genplant"]

#: Order of the exogenous inputs; part of the external contract.
CHANNELS = ("r", "d_i")


@dataclass(frozen=True)
class WeightSet:
    """Weighting filters ``W1`` (tracking error), ``W2`` (control) and ``W3``.

    ``W1`` and ``W2`` must be proper with poles in the closed left half-plane;
    ``W3`` is a finite scalar gain on the input disturbance.
    """

    W1: RationalSiso
    W2: RationalSiso
    W3: float

    def __post_init__(self):
        for name in ("W1", "W2"):
            g = getattr(self, name)
            if not isinstance(g, RationalSiso):
                raise ModelError(f"{name} must be a RationalSiso")
            if np.any(g.poles().real > 0):
                raise ModelError(f"{name} has unstable poles {g.poles()}")
        if not np.isfinite(self.W3):
            raise ModelError("W3 must be finite")
        object.__setattr__(self, "W3", float(self.W3))


@dataclass(frozen=True)
class TrackingGenplantSpec:
    """Plant (SISO control channel) plus weights.

    ``plant`` is either an :class:`AffinePlant` -- of which only ``A``,
    ``B2`` and ``C2`` are used -- or an LTI :class:`StateSpace` with zero
    feedthrough.
    """

    plant: AffinePlant | StateSpace
    weights: WeightSet
    channels: tuple[str, str] = CHANNELS

    def __post_init__(self):
        if tuple(self.channels) != CHANNELS:
            raise ModelError(f"exogenous input order must be {CHANNELS}, got {self.channels}")
        p = self.plant
        if isinstance(p, StateSpace):
            if p.n_inputs != 1 or p.n_outputs != 1:
                raise ModelError("plant must have one control input and one output")
            if np.any(p.D != 0):
                raise ModelError("plant feedthrough must be zero")
        elif isinstance(p, AffinePlant):
            _, _, nu, _, ny = p.dims
            if nu != 1 or ny != 1:
                raise ModelError("plant must have one control input and one measured output")
            if not p.is_constant("B2"):
                raise ModelError("plant input matrix B2 must not depend on rho, otherwise "
                                 "the disturbance channel W3 d_i would be scheduled")
        else:
            raise ModelError(f"unsupported plant type {type(p).__name__}")


def _wire(Ap, Bp, Cp, w1: StateSpace, w2: StateSpace, W3: float,
          constants: bool) -> dict[str, np.ndarray]:
    """Generalized-plant matrices; linear in (Ap, Bp, Cp) plus weight constants.

    With ``constants=False`` only the plant-dependent entries are filled, so
    the function maps an affine plant term to the corresponding genplant term.
    """
    k = 1.0 if constants else 0.0
    npl, n1, n2 = Ap.shape[0], w1.n_states, w2.n_states
    Z = np.zeros
    A = np.block([
        [Ap, Z((npl, n1)), Z((npl, n2))],
        [-w1.B @ Cp, k * w1.A, Z((n1, n2))],
        [Z((n2, npl)), Z((n2, n1)), k * w2.A],
    ])
    B1 = np.block([
        [Z((npl, 1)), k * W3 * Bp],
        [k * w1.B, Z((n1, 1))],
        [Z((n2, 1)), Z((n2, 1))],
    ])
    B2 = np.vstack([Bp, Z((n1, 1)), k * w2.B])
    C1 = np.block([
        [-w1.D @ Cp, k * w1.C, Z((1, n2))],
        [Z((1, npl)), Z((1, n1)), k * w2.C],
    ])
    D11 = k * np.array([[w1.D[0, 0], 0.0], [0.0, 0.0]])
    D12 = k * np.vstack([Z((1, 1)), w2.D])
    C2 = np.hstack([-Cp, Z((1, n1)), Z((1, n2))])
    D21 = k * np.array([[1.0, 0.0]])
    return dict(A=A, B1=B1, B2=B2, C1=C1, C2=C2, D11=D11, D12=D12, D21=D21)


def build_tracking_genplant(spec: TrackingGenplantSpec) -> AffinePlant:
    """Assemble the weighted generalized plant as an :class:`AffinePlant`.

    Parameters
    ----------
    spec : TrackingGenplantSpec

    Returns
    -------
    AffinePlant
        ``n_w = 2`` (``r``, ``d_i``), ``n_u = 1``, ``n_z = 2`` (``z1``,
        ``z2``), ``n_y = 1`` (``e``). ``B1, D11, D21`` are
        parameter-independent by construction.

    Examples
    --------
    >>> from incrlpv.duffing import duffing_incremental, case_study_weights
    >>> plant = duffing_incremental().to_affine()
    >>> gp = build_tracking_genplant(TrackingGenplantSpec(plant, case_study_weights()))
    >>> gp.dims
    (4, 2, 1, 2, 1)
    """
    w1, w2 = tf_to_ss(spec.weights.W1), tf_to_ss(spec.weights.W2)
    W3 = spec.weights.W3
    p = spec.plant
    if isinstance(p, StateSpace):
        const = _wire(p.A, p.B, p.C, w1, w2, W3, True)
        return AffinePlant(PartitionedSystem(**const), (), SchedulingBox.empty())
    c = p.constant
    const = PartitionedSystem(**_wire(c.A, c.B2, c.C2, w1, w2, W3, True))
    terms = tuple(PartitionedSystem(**_wire(t.A, t.B2, t.C2, w1, w2, W3, False))
                  for t in p.terms)
    return AffinePlant(const, terms, p.box)


def frozen_genplant(p: AffinePlant, rho) -> PartitionedSystem:
    """Evaluate the generalized plant at ``rho`` (inside the box)."""
    return p.evaluate(rho)
