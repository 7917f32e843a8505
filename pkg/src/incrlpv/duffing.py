"""Built-in Duffing oscillator case study.

The plant is a mass--spring--damper with a hardening cubic spring,

.. code-block:: text

    m x1'' = -k1 x1 - k2 x1^3 - d x1' + u

with position measurement ``y = x1``. Both LPV models use the scheduling
variable ``rho = y**2`` on ``P = [0, 2]``:

* primal embedding (for a conventional L2 design):
  ``x2' = (-(k1 + k2 rho) x1 - d x2 + u) / m``,
* incremental form (Gateaux derivative):
  ``dx2' = (-(k1 + 3 k2 rho) dx1 - d dx2 + du) / m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .genplant import WeightSet
from .incremental import (FactorizedIncrementalPlant, NonlinearPlant, SchedulingMap,
                          incremental_plant, primal_embedding)
from .models import RationalSiso, SchedulingBox

__all__ = [
    "DuffingParams",
    "duffing_plant",
    "duffing_scheduling",
    "duffing_incremental",
    "duffing_primal",
    "case_study_weights",
    "DUFFING_BOX",
]

#: Scheduling box ``P = [0, 2]`` for ``rho = y**2``.
DUFFING_BOX = SchedulingBox([0.0], [2.0])


@dataclass(frozen=True)
class DuffingParams:
    """Physical parameters (SI units)."""

    m: float = 1.0
    k1: float = 0.5
    k2: float = 5.0
    d: float = 0.2
    #: bound on |x2| used for the operating set X
    v_max: float = 10.0
    #: bound on |u| used for the operating set U
    u_max: float = 50.0

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")


def duffing_plant(params: DuffingParams = DuffingParams(),
                  box: SchedulingBox = DUFFING_BOX) -> NonlinearPlant:
    """Duffing oscillator as a :class:`NonlinearPlant`.

    Channels: ``w`` is a force disturbance (entering like ``u``), ``z`` and
    ``y`` are the position. The state box is chosen so that ``x1**2`` stays
    inside the scheduling box.
    """
    m, k1, k2, d = params.m, params.k1, params.k2, params.d
    x1_max = np.nextafter(np.sqrt(box.upper[0]), 0.0)
    while x1_max * x1_max > box.upper[0]:
        x1_max = np.nextafter(x1_max, 0.0)

    def f(x, u):
        return np.array([x[1], (-k1 * x[0] - k2 * x[0] ** 3 - d * x[1] + u[0]) / m])

    def dfdx(x, u):
        return np.array([[0.0, 1.0], [(-k1 - 3.0 * k2 * x[0] ** 2) / m, -d / m]])

    C = np.array([[1.0, 0.0]])
    return NonlinearPlant(
        n_x=2, n_w=1, n_u=1, n_z=1, n_y=1,
        f=f,
        h1=lambda x, u: np.array([x[0]]),
        h2=lambda x: np.array([x[0]]),
        dfdx=dfdx,
        dfdu=lambda x, u: np.array([[0.0], [1.0 / m]]),
        dh1dx=lambda x, u: C,
        dh1du=lambda x, u: np.zeros((1, 1)),
        dh2dx=lambda x: C,
        B1=np.array([[0.0], [1.0 / m]]),
        D11=np.zeros((1, 1)),
        D21=np.zeros((1, 1)),
        X=SchedulingBox([-x1_max, -params.v_max], [x1_max, params.v_max]),
        U=SchedulingBox([-params.u_max], [params.u_max]),
    )


def duffing_scheduling(box: SchedulingBox = DUFFING_BOX) -> SchedulingMap:
    """``rho = psi(x, u) = x1**2``."""
    def psi(x, u):
        # slicing keeps this valid for single points and (n_x, N) batches
        return np.asarray(x, dtype=float)[0:1] ** 2

    return SchedulingMap(psi, box, vectorized=True)


def _factors(params: DuffingParams, cubic_gain: float) -> dict:
    m, k1, k2, d = params.m, params.k1, params.k2, params.d
    C = np.array([[1.0, 0.0]])
    return {
        "A": lambda rho: np.array([[0.0, 1.0],
                                   [(-k1 - cubic_gain * k2 * rho[0]) / m, -d / m]]),
        "B2": lambda rho: np.array([[0.0], [1.0 / m]]),
        "C1": lambda rho: C,
        "D12": lambda rho: np.zeros((1, 1)),
        "C2": lambda rho: C,
    }


def duffing_incremental(params: DuffingParams = DuffingParams(),
                        box: SchedulingBox = DUFFING_BOX) -> FactorizedIncrementalPlant:
    """Incremental LPV form: ``A21 = -(k1 + 3 k2 rho) / m``."""
    return incremental_plant(duffing_plant(params, box), duffing_scheduling(box),
                             _factors(params, 3.0))


def duffing_primal(params: DuffingParams = DuffingParams(),
                   box: SchedulingBox = DUFFING_BOX) -> FactorizedIncrementalPlant:
    """Primal quasi-LPV embedding: ``A21 = -(k1 + k2 rho) / m``."""
    return primal_embedding(duffing_plant(params, box), duffing_scheduling(box),
                            _factors(params, 1.0))


def case_study_weights() -> WeightSet:
    """Weighting filters of the case study.

    ``W1`` is a low-pass tracking weight with 80 dB DC gain, ``W2`` a
    high-pass control-effort weight and ``W3`` scales the input disturbance.
    """
    return WeightSet(W1=RationalSiso((0.5012, 2.506), (1.0, 2.506e-4)),
                     W2=RationalSiso((10.0, 800.0), (1.0, 8e4)),
                     W3=1.5)
