"""Primal realization of an incremental-form controller.

An incremental controller ``dK``::

    d(dxk)/dt = Ak(rho) dxk + Bk du_k
    dy_k      = Ck(rho) dxk + Dk du_k

acts on differences of signals. With constant ``Bk`` and ``Dk`` the
differentiation on the input and the integration on the output can be moved
inside the controller by the substitutions ``x~ = dxk - Bk u_k`` and
``x^ = y_k - Dk u_k``, giving the primal controller ``K``::

    [ x~' ]   [ Ak(rho)  0 ] [ x~ ]   [ Ak(rho) Bk ]
    [ x^' ] = [ Ck(rho)  0 ] [ x^ ] + [ Ck(rho) Bk ] u_k
    y_k     =  x^ + Dk u_k

The ``x^`` states are pure integrators, so ``K`` has integral action. At any
frozen ``rho`` the transfer functions of ``K`` and ``dK`` coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import SchedulingBox, StateSpace, barycentric_weights, freq_response
from .synthesis import LpvController

__all__ = ["RealizedController", "realize_primal", "lti_equivalence_check"]


@dataclass(frozen=True, eq=False)
class RealizedController:
    """Primal LPV controller over the state ``(x~, x^)``.

    Attributes
    ----------
    A, B : tuple of numpy.ndarray
        Vertex state and input matrices.
    C, D : numpy.ndarray
        Constant output matrices ``[0, I]`` and ``Dk``.
    box : SchedulingBox
    """

    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    C: np.ndarray
    D: np.ndarray
    box: SchedulingBox

    @property
    def n_states(self) -> int:
        return self.C.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    def lpv_matrices(self, weights: np.ndarray):
        """``(A, B, C, D)`` for given barycentric weights (no validation)."""
        A = sum(w * a for w, a in zip(weights, self.A))
        B = sum(w * b for w, b in zip(weights, self.B))
        return A, B, self.C, self.D

    def frozen(self, rho) -> StateSpace:
        A, B, C, D = self.lpv_matrices(barycentric_weights(rho, self.box))
        return StateSpace(A, B, C, D)


def realize_primal(dk: LpvController) -> RealizedController:
    """Realize the primal controller ``K`` from the incremental ``dK``.

    Parameters
    ----------
    dk : LpvController
        Incremental controller with constant ``Bk`` and ``Dk`` (guaranteed
        by the type).

    Returns
    -------
    RealizedController
        ``n_k + n_u`` states; the vertex blocks are assembled in closed form.

    Examples
    --------
    >>> import numpy as np
    >>> from incrlpv.models import SchedulingBox
    >>> dk = LpvController((np.array([[-1.0]]),), (np.array([[1.0]]),),
    ...                    np.array([[1.0]]), np.array([[0.0]]), SchedulingBox.empty())
    >>> k = realize_primal(dk)
    >>> k.A[0], k.B[0].ravel()
    (array([[-1.,  0.],
           [ 1.,  0.]]), array([-1.,  1.]))
    """
    nk, nu = dk.n_states, dk.n_outputs
    Z = np.zeros((nk + nu, nu))
    A = tuple(np.hstack([np.vstack([Ak, Ck]), Z]) for Ak, Ck in zip(dk.Ak, dk.Ck))
    B = tuple(np.vstack([Ak @ dk.Bk, Ck @ dk.Bk]) for Ak, Ck in zip(dk.Ak, dk.Ck))
    C = np.hstack([np.zeros((nu, nk)), np.eye(nu)])
    for m in (*A, *B, C):
        m.setflags(write=False)
    return RealizedController(A, B, C, dk.Dk, dk.box)


def lti_equivalence_check(dk_frozen: StateSpace, k_frozen: StateSpace, omegas) -> float:
    """Largest relative frequency-response deviation between two LTI systems.

    The deviation at each frequency is ``||G1 - G2|| / max(||G1||, ||G2||)``
    (spectral norms; zero when both responses vanish).
    """
    g1 = freq_response(dk_frozen, np.asarray(omegas, dtype=float))
    g2 = freq_response(k_frozen, np.asarray(omegas, dtype=float))
    worst = 0.0
    for a, b in zip(g1, g2):
        den = max(np.linalg.norm(a, 2), np.linalg.norm(b, 2))
        if den > 0:
            worst = max(worst, float(np.linalg.norm(a - b, 2) / den))
    return worst
