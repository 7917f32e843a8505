"""Polytopic LPV output-feedback synthesis with constant ``Bk``, ``Dk``.

The synthesis uses the linearizing change of variables for H-infinity
output feedback: with Lyapunov blocks ``X`` (filter side) and ``Y``
(state-feedback side) and transformed controller variables
``Ahat_j, Bhat, Chat_j, Dhat``, the closed-loop bounded-real inequality at
every vertex ``j`` becomes the linear matrix inequality::

    [ A_j Y + Y A_j' + B2 Chat_j + (.)'      *                          *      * ]
    [ Ahat_j + (A_j + B2 Dhat C2)'           X A_j + A_j' X + Bhat C2 + (.)'  *      * ]
    [ (B1 + B2 Dhat D21)'                    (X B1 + Bhat D21)'         -g I   * ]  < 0
    [ C1_j Y + D12_j Chat_j                  C1_j + D12_j Dhat C2       D11 + D12_j Dhat D21  -g I ]

together with ``[[X, I], [I, Y]] > 0``. ``B2`` and ``C2`` must be vertex
independent so that the reconstructed ``Bk`` and ``Dk`` are constant, which
the incremental realization step requires.

Two Lyapunov structures are available:

``"constant"``
    One ``X`` and one ``Y`` for all vertices (quadratic stability). ``Bk``
    is constant by construction.
``"x-varying"``
    Vertex-wise ``X_j`` and constant ``Y``. Constant ``Bk`` is enforced by
    a fixed-point iteration that constrains ``(X_j - X_0) w = 0`` along the
    direction ``w = B2 Dk - Y Bk``, followed by a polishing solve with
    ``Y, Dk, Bk`` fixed, which makes the reconstruction exact at every
    vertex. This relaxation is not a rigorous certificate for arbitrarily
    fast scheduling; interior points are checked a posteriori.

Numerically the optimum is approached with ``I - XY`` close to singular,
which produces huge controller matrices. The default therefore re-solves
at ``backoff * gamma_opt`` while minimizing the norms of ``X`` and ``Y`` and
tightening the coupling constraint, and reports that certified bound.
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Literal

import cvxpy as cp
import numpy as np
import scipy.linalg

from .models import (AffinePlant, ModelError, PartitionedSystem, PolytopicPlant, SchedulingBox,
                     StateSpace, affine_to_polytope, barycentric_weights, lower_lft)
from .sdp import DEFAULT_SOLVER, SdpError, SdpProblem

logger = logging.getLogger(__name__)

__all__ = [
    "SynthesisError",
    "SynthesisOptions",
    "SynthesisResult",
    "LpvController",
    "synthesize_polytopic",
    "brl_gain",
    "closed_loop_frozen",
    "certificate_residuals",
]


class SynthesisError(RuntimeError):
    """Synthesis failed. ``report`` holds structured diagnostics."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = dict(report or {})


@dataclass(frozen=True)
class SynthesisOptions:
    """Options for :func:`synthesize_polytopic` and :func:`brl_gain`.

    Attributes
    ----------
    gamma : float or None
        ``None`` minimizes the gain bound; a number fixes it.
    lyapunov : {"constant", "x-varying"}
        Lyapunov structure (see module docstring).
    eps : float
        Relative strictness margin for the LMIs.
    solver_tol : float
        Tolerance for a-posteriori certificate checks.
    cond_threshold : float
        Largest admissible condition number of ``I - XY``.
    backoff : float
        Factor applied to the minimal gain before the conditioning re-solve;
        ``1.0`` disables the re-solve.
    coupling : float
        ``t`` in ``[[X, tI], [tI, Y]] >= 0`` during the conditioning re-solve.
    scaling : bool
        Apply diagonal state scaling before solving.
    max_iter, bk_tol : int, float
        Fixed-point iteration limits for ``"x-varying"`` (relative spread of
        the vertex-wise ``Bk``).
    solver : str
        cvxpy solver name.
    """

    gamma: float | None = None
    lyapunov: Literal["constant", "x-varying"] = "constant"
    eps: float = 1e-8
    solver_tol: float = 1e-6
    cond_threshold: float = 1e10
    backoff: float = 1.05
    coupling: float = 1.05
    scaling: bool = True
    max_iter: int = 40
    bk_tol: float = 1e-3
    solver: str = DEFAULT_SOLVER

    def __post_init__(self):
        if not self.eps > 0 or not self.solver_tol > 0 or not self.cond_threshold > 0:
            raise ValueError("eps, solver_tol and cond_threshold must be positive")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("fixed gamma must be positive")
        if self.lyapunov not in ("constant", "x-varying"):
            raise ValueError(f"unknown Lyapunov structure {self.lyapunov!r}")
        if self.backoff < 1.0 or self.coupling < 1.0:
            raise ValueError("backoff and coupling must be >= 1")


# --------------------------------------------------------------------------
# Controller type
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LpvController:
    """Polytopic controller with vertex ``(Ak_j, Ck_j)`` and constant ``Bk, Dk``.

    At scheduling value ``rho`` the controller is
    ``dxk = Ak(rho) xk + Bk e``, ``u = Ck(rho) xk + Dk e`` with
    barycentric interpolation of the vertex matrices.
    """

    Ak: tuple[np.ndarray, ...]
    Ck: tuple[np.ndarray, ...]
    Bk: np.ndarray
    Dk: np.ndarray
    box: SchedulingBox

    def __post_init__(self):
        Bk = np.array(self.Bk, dtype=float, ndmin=2)
        Dk = np.array(self.Dk, dtype=float, ndmin=2)
        nk, ny = Bk.shape
        nu = Dk.shape[0]
        if Dk.shape != (nu, ny):
            raise ModelError(f"Dk has shape {Dk.shape}, expected ({nu}, {ny})")
        nv = 2 ** self.box.n_rho
        if len(self.Ak) != nv or len(self.Ck) != nv:
            raise ModelError(f"expected {nv} vertex matrices for a {self.box.n_rho}-D box")
        Ak = tuple(np.array(a, dtype=float).reshape(nk, nk) for a in self.Ak)
        Ck = tuple(np.array(c, dtype=float).reshape(nu, nk) for c in self.Ck)
        for m in (Bk, Dk, *Ak, *Ck):
            if not np.all(np.isfinite(m)):
                raise ModelError("controller matrices must be finite")
            m.setflags(write=False)
        object.__setattr__(self, "Ak", Ak)
        object.__setattr__(self, "Ck", Ck)
        object.__setattr__(self, "Bk", Bk)
        object.__setattr__(self, "Dk", Dk)

    @property
    def n_states(self) -> int:
        return self.Bk.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.Bk.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.Dk.shape[0]

    def scheduled(self, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(Ak, Ck)`` for given barycentric weights (no validation)."""
        Ak = sum(w * a for w, a in zip(weights, self.Ak))
        Ck = sum(w * c for w, c in zip(weights, self.Ck))
        return Ak, Ck

    def frozen(self, rho) -> StateSpace:
        """LTI controller at the frozen scheduling value ``rho``."""
        Ak, Ck = self.scheduled(barycentric_weights(rho, self.box))
        return StateSpace(Ak, self.Bk, Ck, self.Dk)

    # uniform interface with the realized controller used by the simulator
    def lpv_matrices(self, weights: np.ndarray):
        Ak, Ck = self.scheduled(weights)
        return Ak, self.Bk, Ck, self.Dk


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Outcome of :func:`synthesize_polytopic`.

    Certificates are in the coordinates of the plant passed in: ``X`` and
    ``M`` hold one matrix per vertex (identical entries for constant ``X``)
    and satisfy ``M_j N' = I - X_j Y``.
    """

    gamma: float
    controller: LpvController
    X: tuple[np.ndarray, ...]
    Y: np.ndarray
    M: tuple[np.ndarray, ...]
    N: np.ndarray
    residuals: np.ndarray
    gamma_opt: float
    lyapunov: str
    scaling: np.ndarray
    iterations: int = 0
    elapsed: float = 0.0
    log: tuple[str, ...] = field(default_factory=tuple)


# --------------------------------------------------------------------------
# LMI assembly
# --------------------------------------------------------------------------


def _vertex_lmi(V: dict, X, Y, Ah, Bh, Ch, Dh, g):
    """Synthesis LMI block for one vertex (cvxpy expressions)."""
    A, B1, B2, C1, C2, D11, D12, D21 = (V[k] for k in
                                        ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21"))
    nw, nz = B1.shape[1], C1.shape[0]
    M11 = A @ Y + Y @ A.T + B2 @ Ch + (B2 @ Ch).T
    M21 = Ah + (A + B2 @ Dh @ C2).T
    M22 = X @ A + A.T @ X + Bh @ C2 + (Bh @ C2).T
    M31 = (B1 + B2 @ Dh @ D21).T
    M32 = (X @ B1 + Bh @ D21).T
    M41 = C1 @ Y + D12 @ Ch
    M42 = C1 + D12 @ Dh @ C2
    M43 = D11 + D12 @ Dh @ D21
    return cp.bmat([
        [M11, M21.T, M31.T, M41.T],
        [M21, M22, M32.T, M42.T],
        [M31, M32, -g * np.eye(nw), M43.T],
        [M41, M42, M43, -g * np.eye(nz)],
    ])


def _solve_lmis(V: list[dict], *, eps: float, solver: str, gamma: float | None,
                shared_x: bool, coupling: float = 1.0, direction=None,
                fixed: dict | None = None) -> dict:
    """One SDP over all vertices.

    ``gamma=None`` minimizes the gain; otherwise the gain is fixed and the
    largest eigenvalue of the Lyapunov blocks is minimized (conditioning).
    ``fixed`` may hold numeric ``Y``, ``Dh`` and ``Bk``; then ``Bhat_j`` is
    tied to ``Bk`` per vertex.
    """
    n, nu, ny = V[0]["A"].shape[0], V[0]["B2"].shape[1], V[0]["C2"].shape[0]
    I = np.eye(n)
    sdp = SdpProblem()
    g = sdp.scalar("g") if gamma is None else gamma
    if fixed:
        Y, Dh, Bk = fixed["Y"], fixed["Dh"], fixed["Bk"]
    else:
        Y = sdp.symmetric(n, "Y")
        Dh = sdp.matrix(nu, ny, "Dh")
        Bh = sdp.matrix(n, ny, "Bh")
    X0 = sdp.symmetric(n, "X0") if shared_x else None
    for j, v in enumerate(V):
        X = X0 if shared_x else sdp.symmetric(n, f"X{j}")
        Ah = sdp.matrix(n, n, f"Ah{j}")
        Ch = sdp.matrix(nu, n, f"Ch{j}")
        if fixed:
            Bh = (I - X @ Y) @ Bk + X @ (v["B2"] @ Dh)
        sdp.lmi(_vertex_lmi(v, X, Y, Ah, Bh, Ch, Dh, g), margin=eps)
        if not shared_x or j == 0:
            sdp.psd(cp.bmat([[X, coupling * I], [coupling * I, Y]]), margin=eps)
        if direction is not None and j > 0 and not shared_x:
            sdp.equal((X - sdp["X0"]) @ direction, 0)
    if gamma is None:
        sol = sdp.minimize(g, solver)
    else:
        lam = sdp.scalar("lam")
        xs = [sdp["X0"]] if shared_x else [sdp[f"X{j}"] for j in range(len(V))]
        for X in xs:
            sdp.psd(lam * I - X)
        if not fixed:
            sdp.psd(lam * I - Y)
        sol = sdp.minimize(lam, solver)
    out = dict(sol.values)
    out["gamma"] = float(sol["g"]) if gamma is None else float(gamma)
    out["X"] = [out["X0"] if shared_x else out[f"X{j}"] for j in range(len(V))]
    if fixed:
        out.update(Y=np.asarray(Y), Dh=np.asarray(Dh), Bk=np.asarray(Bk))
    return out


def _bk_vertices(V, sol) -> list[np.ndarray]:
    n = V[0]["A"].shape[0]
    B2 = V[0]["B2"]
    return [np.linalg.solve(np.eye(n) - X @ sol["Y"], sol["Bh"] - X @ B2 @ sol["Dh"])
            for X in sol["X"]]


def _reconstruct(V, sol, Bk, cond_threshold) -> tuple[list, list, list]:
    """Controller vertices from the transformed variables (``N = I``)."""
    n = V[0]["A"].shape[0]
    I = np.eye(n)
    Y, Dk = sol["Y"], sol["Dh"]
    Aks, Cks, Ms = [], [], []
    for j, v in enumerate(V):
        X = sol["X"][j]
        M = I - X @ Y
        c = np.linalg.cond(M)
        if not c <= cond_threshold:
            raise SynthesisError(
                f"I - XY is ill-conditioned at vertex {j} (cond {c:.2e} > {cond_threshold:.1e}); "
                "re-solve with gamma backoff (e.g. backoff=1.05)",
                {"stage": "reconstruction", "vertex": j, "cond": c})
        A, B2, C2 = v["A"], v["B2"], v["C2"]
        Ck = sol[f"Ch{j}"] - Dk @ C2 @ Y
        Ak = np.linalg.solve(M, sol[f"Ah{j}"] - X @ (A + B2 @ Dk @ C2) @ Y
                             - M @ Bk @ C2 @ Y - X @ B2 @ Ck)
        Aks.append(Ak)
        Cks.append(Ck)
        Ms.append(M)
    return Aks, Cks, Ms


def _input_normal(Bk: np.ndarray) -> np.ndarray:
    """Controller state transform ``Tk`` with ``Tk^-1 Bk = [I; 0]``.

    In these coordinates the products ``Ak Bk`` and ``Ck Bk`` needed by the
    primal realization are plain column selections, so the realization is
    formed without rounding. Falls back to the identity if ``Bk`` is rank
    deficient.
    """
    nk, ny = Bk.shape
    Q, R = np.linalg.qr(Bk, mode="complete")
    if ny > nk or np.min(np.abs(np.diag(R[:ny, :ny])), initial=np.inf) < 1e-12 * max(
            np.max(np.abs(Bk)), 1e-300):
        return np.eye(nk)
    Tk = Q.copy()
    Tk[:, :ny] = Q[:, :ny] @ R[:ny, :ny]
    return Tk


# --------------------------------------------------------------------------
# Scaling and checks
# --------------------------------------------------------------------------


def _initial_scaling(poly: PolytopicPlant) -> np.ndarray:
    """Diagonal ``T`` (``x = T x_s``) equalizing input and output coupling per state."""
    s = np.ones(poly.dims[0])
    bnorm = np.max([np.linalg.norm(np.hstack([v.B1, v.B2]), axis=1) for v in poly.vertices], axis=0)
    cnorm = np.max([np.linalg.norm(np.vstack([v.C1, v.C2]), axis=0) for v in poly.vertices], axis=0)
    ok = (bnorm > 0) & (cnorm > 0)
    s[ok] = np.sqrt(cnorm[ok] / bnorm[ok])
    return 1.0 / s


def _scaled(poly: PolytopicPlant, T: np.ndarray) -> list[dict]:
    return [v.similarity(np.diag(T)).matrices() for v in poly.vertices]


def _pbh_warnings(poly: PolytopicPlant) -> None:
    for j, v in enumerate(poly.vertices):
        n = v.A.shape[0]
        for lam in np.linalg.eigvals(v.A):
            if lam.real < -1e-9:
                continue
            sI = lam * np.eye(n)
            if np.linalg.matrix_rank(np.hstack([v.A - sI, v.B2])) < n:
                warnings.warn(f"vertex {j}: mode {lam:.3g} is not stabilizable from u",
                              RuntimeWarning, stacklevel=3)
            if np.linalg.matrix_rank(np.vstack([v.A - sI, v.C2])) < n:
                warnings.warn(f"vertex {j}: mode {lam:.3g} is not detectable from y",
                              RuntimeWarning, stacklevel=3)


def _closed_loop_brl(cl: StateSpace, P: np.ndarray, gamma: float) -> np.ndarray:
    A, B, C, D = cl.A, cl.B, cl.C, cl.D
    nw, nz = B.shape[1], C.shape[0]
    return np.block([
        [A.T @ P + P @ A, P @ B, C.T],
        [B.T @ P, -gamma * np.eye(nw), D.T],
        [C, D, -gamma * np.eye(nz)],
    ])


def _normalized_max_eig(L: np.ndarray) -> float:
    d = np.sqrt(np.maximum(np.abs(np.diag(L)), 1e-300))
    Ls = L / np.outer(d, d)
    return float(np.max(np.linalg.eigvalsh((Ls + Ls.T) / 2)))


def certificate_residuals(poly: PolytopicPlant, result: SynthesisResult) -> np.ndarray:
    """Max (diagonally normalized) eigenvalue of the closed-loop BRL per vertex.

    The closed-loop Lyapunov matrix at vertex ``j`` is
    ``P_j = [[I, X_j], [0, M_j']] [[Y, I], [N', 0]]^-1``; negative values
    certify the bound ``result.gamma`` at that vertex.
    """
    k = result.controller
    out = []
    for j, v in enumerate(poly.vertices):
        n = v.A.shape[0]
        I, Z = np.eye(n), np.zeros((n, n))
        Pi_y = np.block([[result.Y, I], [result.N.T, Z]])
        Pi_x = np.block([[I, result.X[j]], [Z, result.M[j].T]])
        P = Pi_x @ np.linalg.inv(Pi_y)
        P = (P + P.T) / 2
        kj = StateSpace(k.Ak[j], k.Bk, k.Ck[j], k.Dk)
        L = _closed_loop_brl(lower_lft(v, kj), P, result.gamma)
        out.append(_normalized_max_eig(L))
    return np.array(out)


# --------------------------------------------------------------------------
# Synthesis driver
# --------------------------------------------------------------------------


def synthesize_polytopic(p: PolytopicPlant | AffinePlant,
                         opts: SynthesisOptions = SynthesisOptions()) -> SynthesisResult:
    """Polytopic output-feedback synthesis with constant ``Bk`` and ``Dk``.

    Parameters
    ----------
    p : PolytopicPlant or AffinePlant
        Generalized plant; an affine plant is converted to its box corners.
    opts : SynthesisOptions

    Returns
    -------
    SynthesisResult
        ``gamma`` is the bound certified for the returned controller;
        ``gamma_opt`` is the minimal bound of the underlying SDP.

    Raises
    ------
    SynthesisError
        On vertex-dependent ``B2``/``C2``, infeasibility, or an
        ill-conditioned reconstruction.
    """
    t_start = time.perf_counter()
    poly = affine_to_polytope(p) if isinstance(p, AffinePlant) else p
    for name in ("B2", "C2"):
        ref = getattr(poly.vertices[0], name)
        if any(not np.array_equal(getattr(v, name), ref) for v in poly.vertices):
            raise SynthesisError(
                f"{name} depends on the scheduling variable; constant Bk and Dk "
                "(required by the incremental realization) need vertex-independent B2 and C2",
                {"stage": "precheck", "matrix": name})
    _pbh_warnings(poly)

    log: list[str] = []
    T = _initial_scaling(poly) if opts.scaling else np.ones(poly.dims[0])
    V = _scaled(poly, T)
    # strictness margin relative to the size of the (scaled) plant data
    scale_norm = max(np.linalg.norm(np.block([[v["A"], v["B1"], v["B2"]],
                                              [v["C1"], v["D11"], v["D12"]]]), 2) for v in V)
    common = dict(eps=opts.eps * max(1.0, float(scale_norm)), solver=opts.solver)

    def run(stage, V, **kw):
        try:
            return _solve_lmis(V, **common, **kw)
        except SdpError as exc:
            raise SynthesisError(f"{stage}: SDP {exc.status}",
                                 {"stage": stage, "status": exc.status,
                                  "gamma": kw.get("gamma")}) from exc

    gamma_fixed = opts.gamma

    def design(V, shared, direction=None):
        """Optimal and conditioned solutions for the current constraints."""
        if gamma_fixed is None:
            opt = run("minimize", V, gamma=None, shared_x=shared, direction=direction)
            g_opt = opt["gamma"]
            if opts.backoff == 1.0:
                return g_opt, opt
            target = opts.backoff * g_opt
        else:
            g_opt, target = gamma_fixed, gamma_fixed
        sol = run("condition", V, gamma=target, shared_x=shared, coupling=opts.coupling,
                  direction=direction)
        return g_opt, sol

    if opts.scaling:
        _, sol = design(V, True)
        s = (np.diag(sol["Y"]) / np.diag(sol["X"][0])) ** 0.25
        T = T * s
        V = _scaled(poly, T)
        log.append(f"state scaling {np.array2string(T, precision=3)}")

    iterations = 0
    if opts.lyapunov == "constant":
        g_opt, sol = design(V, True)
        Bk = _bk_vertices(V, sol)[0]
        gamma = sol["gamma"]
        log.append(f"constant Lyapunov: gamma_opt={g_opt:.6g}, certified={gamma:.6g}")
    else:
        direction = None
        for iterations in range(1, opts.max_iter + 1):
            g_opt, sol = design(V, False, direction)
            bks = _bk_vertices(V, sol)
            ref = np.max(np.abs(bks[0]))
            spread = max(np.max(np.abs(b - bks[0])) for b in bks) / max(ref, 1e-300)
            log.append(f"iteration {iterations}: gamma_opt={g_opt:.6g}, Bk spread={spread:.2e}")
            logger.info(log[-1])
            w = V[0]["B2"] @ sol["Dh"] - sol["Y"] @ bks[0]
            direction = np.linalg.qr(w)[0] if np.any(w) else None
            if spread < opts.bk_tol:
                break
        else:
            log.append("fixed-point iteration hit max_iter; polishing anyway")
        fixed = {"Y": sol["Y"], "Dh": sol["Dh"], "Bk": bks[0]}
        gamma = sol["gamma"]
        for attempt in range(10 if gamma_fixed is None else 1):
            try:
                sol = run("polish", V, gamma=gamma, shared_x=False, coupling=opts.coupling,
                          fixed=fixed)
                break
            except SynthesisError:
                if gamma_fixed is not None or attempt == 9:
                    raise
                gamma *= 1.01
        Bk = fixed["Bk"]
        log.append(f"x-varying Lyapunov: gamma_opt={g_opt:.6g}, certified={gamma:.6g}")

    Aks, Cks, Ms = _reconstruct(V, sol, Bk, opts.cond_threshold)
    Tk = _input_normal(Bk)
    Tki = np.linalg.inv(Tk)
    Aks = [Tki @ Ak @ Tk for Ak in Aks]
    Cks = [Ck @ Tk for Ck in Cks]
    Bk = np.zeros_like(Bk)
    Bk[:Bk.shape[1]] = np.eye(Bk.shape[1])
    controller = LpvController(tuple(Aks), tuple(Cks), Bk, sol["Dh"], poly.box)

    # certificates in the caller's plant coordinates (x = T x_s) and the
    # controller coordinates chosen above (xk = Tk xk')
    Tm, Ti = np.diag(T), np.diag(1.0 / T)
    Xs = tuple(Ti.T @ X @ Ti for X in sol["X"])
    Yo = Tm @ sol["Y"] @ Tm.T
    Mo = tuple(Ti.T @ M @ Tk for M in Ms)
    No = Tm @ Tki.T
    result = SynthesisResult(gamma=float(gamma), controller=controller, X=Xs, Y=Yo, M=Mo,
                             N=No, residuals=np.zeros(len(Aks)), gamma_opt=float(g_opt),
                             lyapunov=opts.lyapunov, scaling=T, iterations=iterations,
                             elapsed=time.perf_counter() - t_start, log=tuple(log))
    res = certificate_residuals(poly, result)
    object.__setattr__(result, "residuals", res)
    if np.max(res) > opts.solver_tol:
        logger.warning("certificate residual %.2e exceeds solver tolerance", np.max(res))
    return result


# --------------------------------------------------------------------------
# Analysis
# --------------------------------------------------------------------------


def _balanced(sys: StateSpace) -> StateSpace:
    """Balanced realization when gramians are definite, else matrix balancing."""
    A, B, C = sys.A, sys.B, sys.C
    try:
        Wc = scipy.linalg.solve_continuous_lyapunov(A, -B @ B.T)
        Wo = scipy.linalg.solve_continuous_lyapunov(A.T, -C.T @ C)
        Lc = np.linalg.cholesky((Wc + Wc.T) / 2)
        Lo = np.linalg.cholesky((Wo + Wo.T) / 2)
        U, s, Vt = np.linalg.svd(Lo.T @ Lc)
        T = Lc @ Vt.T / np.sqrt(s)
        if np.linalg.cond(T) < 1e12:
            return sys.similarity(T)
    except np.linalg.LinAlgError:
        pass
    _, (scale, _) = scipy.linalg.matrix_balance(A, permute=False, separate=True)
    return sys.similarity(np.diag(scale))


def brl_gain(sys: StateSpace, opts: SynthesisOptions = SynthesisOptions()) -> float:
    """L2 gain (H-infinity norm) of a stable LTI system via the bounded real lemma.

    Minimizes ``g`` subject to ``P > 0`` and
    ``[[A'P + PA, PB, C'], [B'P, -g I, D'], [C, D, -g I]] < 0``. The SDP is
    posed in a balanced realization for numerical conditioning.

    Raises
    ------
    ModelError
        If ``A`` is not Hurwitz.
    SynthesisError
        If the SDP fails.
    """
    if not sys.is_hurwitz():
        raise ModelError("brl_gain requires a Hurwitz state matrix")
    if sys.n_states == 0:
        return float(np.linalg.norm(sys.D, 2))

    bal = _balanced(sys)
    A, B, C, D = bal.A, bal.B, bal.C, bal.D
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    sdp = SdpProblem()
    P = sdp.symmetric(n, "P")
    g = sdp.scalar("g")
    L = cp.bmat([[A.T @ P + P @ A, P @ B, C.T],
                 [B.T @ P, -g * np.eye(m), D.T],
                 [C, D, -g * np.eye(p)]])
    sdp.lmi(L, margin=opts.eps * 1e-2)
    sdp.psd(P, margin=opts.eps * 1e-2)
    try:
        return float(sdp.minimize(g, opts.solver).objective)
    except SdpError as exc:
        raise SynthesisError(f"bounded-real SDP failed: {exc.status}",
                             {"stage": "brl", "status": exc.status}) from exc


def closed_loop_frozen(p: AffinePlant | PolytopicPlant | PartitionedSystem,
                       k: LpvController, rho) -> StateSpace:
    """Frozen closed loop ``w -> z`` of plant and scheduled controller at ``rho``."""
    plant = p if isinstance(p, PartitionedSystem) else p.evaluate(rho)
    return lower_lft(plant, k.frozen(rho))
