"""Linear state-space and LPV model types plus interconnection algebra.

Everything else in the package is built on the types defined here:

* :class:`StateSpace` -- constant-matrix continuous-time system ``(A, B, C, D)``.
* :class:`RationalSiso` -- a proper SISO transfer function in polynomial form.
* :class:`SchedulingBox` -- the box ``P`` the scheduling variable lives in.
* :class:`PartitionedSystem` -- a generalized plant with channels
  ``w -> z`` (performance) and ``u -> y`` (control).
* :class:`AffinePlant` / :class:`PolytopicPlant` -- LPV generalized plants,
  either affine in ``rho`` or given by their vertex systems.

All types are immutable after construction: arrays are copied and flagged
read-only, so instances can be shared freely between threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.signal

__all__ = [
    "ModelError",
    "StateSpace",
    "RationalSiso",
    "SchedulingBox",
    "PartitionedSystem",
    "AffinePlant",
    "PolytopicPlant",
    "tf_to_ss",
    "freq_response",
    "series",
    "feedback",
    "stack",
    "lower_lft",
    "affine_to_polytope",
    "barycentric_weights",
]


class ModelError(ValueError):
    """Raised when a model is malformed or an operation is ill-posed."""


def _frozen(a, name: str, ndim: int = 2) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    if ndim == 2 and arr.ndim != 2:
        raise ModelError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _check_shape(arr: np.ndarray, shape: tuple[int, int], name: str) -> None:
    if arr.shape != shape:
        raise ModelError(f"{name} has shape {arr.shape}, expected {shape}")


# --------------------------------------------------------------------------
# StateSpace
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Continuous-time LTI system ``dx = A x + B u, y = C x + D u``.

    A system with zero states (``A`` of shape ``(0, 0)``) is a static gain.

    Parameters
    ----------
    A, B, C, D : array_like
        System matrices with shapes ``(n, n)``, ``(n, m)``, ``(p, n)`` and
        ``(p, m)``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        D = _frozen(self.D, "D")
        p, m = D.shape
        A = np.asarray(self.A, dtype=float)
        n = A.shape[0] if A.size else 0
        # empty blocks may come in any 2-D shape; reshape only those
        A = _frozen(A if A.size else A.reshape(0, 0), "A")
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        B = _frozen(B if B.size else B.reshape(n, m), "B")
        C = _frozen(C if C.size else C.reshape(p, n), "C")
        _check_shape(A, (n, n), "A")
        _check_shape(B, (n, m), "B")
        _check_shape(C, (p, n), "C")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @classmethod
    def static(cls, D) -> "StateSpace":
        """Zero-state system with feedthrough ``D``."""
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n_states else np.zeros(0, complex)

    def is_hurwitz(self) -> bool:
        """True if every eigenvalue of ``A`` has strictly negative real part."""
        return self.n_states == 0 or bool(np.max(self.poles().real) < 0.0)

    def similarity(self, T) -> "StateSpace":
        """Return the realization in coordinates ``x = T x_new``."""
        T = np.asarray(T, dtype=float)
        Ti = np.linalg.inv(T)
        return StateSpace(Ti @ self.A @ T, Ti @ self.B, self.C @ T, self.D)

    def __repr__(self) -> str:
        return (f"StateSpace(n_states={self.n_states}, n_inputs={self.n_inputs}, "
                f"n_outputs={self.n_outputs})")


# --------------------------------------------------------------------------
# Transfer functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RationalSiso:
    """Proper SISO transfer function ``num(s) / den(s)``.

    Coefficients are given in descending powers of ``s``.
    """

    num: tuple[float, ...]
    den: tuple[float, ...]

    def __post_init__(self):
        num = np.trim_zeros(np.atleast_1d(np.asarray(self.num, dtype=float)), "f")
        den = np.atleast_1d(np.asarray(self.den, dtype=float))
        if den.size == 0 or den[0] == 0.0:
            raise ModelError("leading denominator coefficient must be nonzero")
        if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
            raise ModelError("transfer-function coefficients must be finite")
        if num.size == 0:
            num = np.zeros(1)
        if num.size > den.size:
            raise ModelError(
                f"improper transfer function: numerator degree {num.size - 1} "
                f"exceeds denominator degree {den.size - 1}")
        object.__setattr__(self, "num", tuple(float(c) for c in num))
        object.__setattr__(self, "den", tuple(float(c) for c in den))

    @classmethod
    def constant(cls, k: float) -> "RationalSiso":
        return cls((float(k),), (1.0,))

    def __call__(self, s):
        """Evaluate the transfer function at (complex) ``s``."""
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def poles(self) -> np.ndarray:
        return np.roots(self.den) if len(self.den) > 1 else np.zeros(0, complex)


def tf_to_ss(g: RationalSiso) -> StateSpace:
    """Controllable-canonical realization of a proper SISO transfer function.

    The realization has order ``deg(den)``; it is minimal whenever numerator
    and denominator are coprime (as for first-order weighting filters).

    Parameters
    ----------
    g : RationalSiso

    Returns
    -------
    StateSpace
    """
    if not isinstance(g, RationalSiso):
        g = RationalSiso(*g)
    if len(g.den) == 1:
        return StateSpace.static([[g.num[-1] / g.den[0]]])
    A, B, C, D = scipy.signal.tf2ss(g.num, g.den)
    return StateSpace(A, B, C, D)


def freq_response(sys: StateSpace, omega):
    """Frequency response ``C (j w I - A)^-1 B + D``.

    Parameters
    ----------
    sys : StateSpace
    omega : float or array_like
        Frequency (rad/s), or a 1-D grid of frequencies.

    Returns
    -------
    numpy.ndarray
        Complex matrix of shape ``(n_outputs, n_inputs)``, or an array of
        shape ``(len(omega), n_outputs, n_inputs)`` for a grid.

    Raises
    ------
    ModelError
        If ``j w`` is (numerically) an eigenvalue of ``A``.
    """
    scalar = np.ndim(omega) == 0
    ws = np.atleast_1d(np.asarray(omega, dtype=float))
    n = sys.n_states
    out = np.empty((ws.size, sys.n_outputs, sys.n_inputs), dtype=complex)
    eye = np.eye(n)
    for i, w in enumerate(ws):
        if n == 0:
            out[i] = sys.D
            continue
        M = 1j * w * eye - sys.A
        # reciprocal condition number; a singular pencil means jw is a pole
        if np.linalg.cond(M) > 1e15:
            raise ModelError(f"j*{w:g} is an eigenvalue of A; frequency response undefined")
        out[i] = sys.C @ np.linalg.solve(M, sys.B) + sys.D
    return out[0] if scalar else out


# --------------------------------------------------------------------------
# Interconnections
# --------------------------------------------------------------------------


def series(sys1: StateSpace, sys2: StateSpace) -> StateSpace:
    """Cascade ``u -> sys1 -> sys2 -> y`` (transfer function ``G2 G1``)."""
    if sys1.n_outputs != sys2.n_inputs:
        raise ModelError(
            f"series: sys1 has {sys1.n_outputs} outputs but sys2 has {sys2.n_inputs} inputs")
    n1, n2 = sys1.n_states, sys2.n_states
    A = np.block([[sys1.A, np.zeros((n1, n2))], [sys2.B @ sys1.C, sys2.A]])
    B = np.vstack([sys1.B, sys2.B @ sys1.D])
    C = np.hstack([sys2.D @ sys1.C, sys2.C])
    return StateSpace(A, B, C, sys2.D @ sys1.D)


def feedback(sys1: StateSpace, sys2: StateSpace, sign: int = -1) -> StateSpace:
    """Close ``sys2`` around ``sys1``: ``y = G1 (u + sign * G2 y)``.

    Raises
    ------
    ModelError
        On dimension mismatch or an ill-posed algebraic loop
        (``I - sign D1 D2`` singular).
    """
    if sys1.n_outputs != sys2.n_inputs or sys2.n_outputs != sys1.n_inputs:
        raise ModelError("feedback: channel dimensions of sys1 and sys2 do not match")
    s = float(sign)
    n1, n2 = sys1.n_states, sys2.n_states
    E = np.eye(sys1.n_outputs) - s * sys1.D @ sys2.D
    if np.linalg.cond(E) > 1e12:
        raise ModelError("feedback: algebraic loop is ill-posed (I - D1 D2 singular)")
    # y1 = Cy [x1; x2] + Dy u
    Cy = np.linalg.solve(E, np.hstack([sys1.C, s * sys1.D @ sys2.C]))
    Dy = np.linalg.solve(E, sys1.D)
    # u1 = Cu [x1; x2] + Du u
    Cu = s * sys2.D @ Cy + np.hstack([np.zeros((sys1.n_inputs, n1)), s * sys2.C])
    Du = np.eye(sys1.n_inputs) + s * sys2.D @ Dy
    A = np.block([[sys1.A, np.zeros((n1, n2))], [np.zeros((n2, n1)), sys2.A]])
    A = A + np.vstack([sys1.B @ Cu, sys2.B @ Cy])
    B = np.vstack([sys1.B @ Du, sys2.B @ Dy])
    return StateSpace(A, B, Cy, Dy)


def stack(sys1: StateSpace, sys2: StateSpace) -> StateSpace:
    """Direct sum: independent inputs and outputs, block-diagonal dynamics."""
    def bd(a, b):
        return np.block([[a, np.zeros((a.shape[0], b.shape[1]))],
                         [np.zeros((b.shape[0], a.shape[1])), b]])
    return StateSpace(bd(sys1.A, sys2.A), bd(sys1.B, sys2.B),
                      bd(sys1.C, sys2.C), bd(sys1.D, sys2.D))


# --------------------------------------------------------------------------
# Generalized plants
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PartitionedSystem:
    """Generalized plant with disturbance/performance and control channels.

    ::

        dx = A  x + B1  w + B2  u
        z  = C1 x + D11 w + D12 u
        y  = C2 x + D21 w            (D22 = 0)

    ``D22`` may be passed for interface symmetry but must be zero.
    """

    A: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    D11: np.ndarray
    D12: np.ndarray
    D21: np.ndarray
    D22: np.ndarray | None = None

    def __post_init__(self):
        names = ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21")
        mats = {k: _frozen(getattr(self, k), k) for k in names}
        n = mats["A"].shape[0]
        nw, nu = mats["B1"].shape[1], mats["B2"].shape[1]
        nz, ny = mats["C1"].shape[0], mats["C2"].shape[0]
        expected = {"A": (n, n), "B1": (n, nw), "B2": (n, nu), "C1": (nz, n),
                    "C2": (ny, n), "D11": (nz, nw), "D12": (nz, nu), "D21": (ny, nw)}
        for k, shape in expected.items():
            _check_shape(mats[k], shape, k)
        if self.D22 is not None and np.any(np.asarray(self.D22, dtype=float) != 0.0):
            raise ModelError("D22 must be zero (no direct control-to-measurement feedthrough)")
        for k, v in mats.items():
            object.__setattr__(self, k, v)
        object.__setattr__(self, "D22", _frozen(np.zeros((ny, nu)), "D22"))

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        """``(n_x, n_w, n_u, n_z, n_y)``."""
        return (self.A.shape[0], self.B1.shape[1], self.B2.shape[1],
                self.C1.shape[0], self.C2.shape[0])

    def matrices(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in
                ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21")}

    def to_statespace(self) -> StateSpace:
        """Open-loop map ``[w; u] -> [z; y]``."""
        return StateSpace(self.A, np.hstack([self.B1, self.B2]),
                          np.vstack([self.C1, self.C2]),
                          np.block([[self.D11, self.D12], [self.D21, self.D22]]))

    def similarity(self, T) -> "PartitionedSystem":
        """Plant in state coordinates ``x = T x_new``."""
        T = np.asarray(T, dtype=float)
        Ti = np.linalg.inv(T)
        return PartitionedSystem(Ti @ self.A @ T, Ti @ self.B1, Ti @ self.B2,
                                 self.C1 @ T, self.C2 @ T, self.D11, self.D12, self.D21)


def lower_lft(plant: PartitionedSystem, k: StateSpace) -> StateSpace:
    """Close ``u = K y`` around the generalized plant; returns ``w -> z``.

    With ``D22 = 0`` the interconnection is always well-posed.
    """
    n, nw, nu, nz, ny = plant.dims
    if k.n_inputs != ny or k.n_outputs != nu:
        raise ModelError(
            f"controller must map {ny} measurements to {nu} controls, "
            f"got {k.n_inputs} -> {k.n_outputs}")
    Ak, Bk, Ck, Dk = k.A, k.B, k.C, k.D
    A = np.block([[plant.A + plant.B2 @ Dk @ plant.C2, plant.B2 @ Ck],
                  [Bk @ plant.C2, Ak]])
    B = np.vstack([plant.B1 + plant.B2 @ Dk @ plant.D21, Bk @ plant.D21])
    C = np.hstack([plant.C1 + plant.D12 @ Dk @ plant.C2, plant.D12 @ Ck])
    D = plant.D11 + plant.D12 @ Dk @ plant.D21
    return StateSpace(A, B, C, D)


# --------------------------------------------------------------------------
# Scheduling
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SchedulingBox:
    """Axis-aligned box ``P = [lower_1, upper_1] x ... x [lower_n, upper_n]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(np.asarray(self.lower, dtype=float)), "lower", ndim=1)
        hi = _frozen(np.atleast_1d(np.asarray(self.upper, dtype=float)), "upper", ndim=1)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ModelError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ModelError(f"box lower bound exceeds upper bound: {lo} > {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def empty(cls) -> "SchedulingBox":
        """Box for LTI plants (no scheduling variables)."""
        return cls(np.zeros(0), np.zeros(0))

    @property
    def n_rho(self) -> int:
        return self.lower.size

    def vertices(self) -> np.ndarray:
        """Box corners, shape ``(2**n_rho, n_rho)``.

        The first coordinate varies slowest; corner ``i`` takes the upper bound
        in coordinate ``k`` iff bit ``n_rho - 1 - k`` of ``i`` is set.
        """
        corners = list(itertools.product(*zip(self.lower, self.upper)))
        return np.array(corners, dtype=float).reshape(len(corners), self.n_rho)

    def contains(self, rho, tol: float = 0.0) -> bool:
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return bool(rho.shape == self.lower.shape
                    and np.all(rho >= self.lower - tol) and np.all(rho <= self.upper + tol))

    def clamp(self, rho) -> tuple[np.ndarray, bool]:
        """Project ``rho`` onto the box; also report whether clamping was needed."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        clamped = np.clip(rho, self.lower, self.upper)
        return clamped, bool(np.any(clamped != rho))

    def grid(self, points: int) -> np.ndarray:
        """Uniform tensor grid with ``points`` samples per coordinate."""
        axes = [np.linspace(lo, hi, points) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def __eq__(self, other) -> bool:
        return (isinstance(other, SchedulingBox)
                and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper))

    def __hash__(self):
        return hash((self.lower.tobytes(), self.upper.tobytes()))


def barycentric_weights(rho, box: SchedulingBox) -> np.ndarray:
    """Multilinear interpolation weights of ``rho`` over the box corners.

    The weights are ordered like :meth:`SchedulingBox.vertices`, are
    nonnegative, sum to one, and reproduce any affine function of ``rho``
    from its corner values.

    Raises
    ------
    ModelError
        If ``rho`` lies outside the box. Clamping is the caller's job.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if not box.contains(rho):
        raise ModelError(f"scheduling value {rho} lies outside the box "
                         f"[{box.lower}, {box.upper}]")
    span = box.upper - box.lower
    t = np.divide(rho - box.lower, span, out=np.zeros_like(rho), where=span > 0)
    w = np.ones(1)
    for tk in t:
        w = np.outer(w, [1.0 - tk, tk]).ravel()
    return w


# --------------------------------------------------------------------------
# LPV plants
# --------------------------------------------------------------------------

_VARYING = ("A", "B2", "C1", "D12", "C2")
_CONSTANT = ("B1", "D11", "D21")


@dataclass(frozen=True, eq=False)
class AffinePlant:
    """Generalized plant affine in ``rho``: ``P(rho) = P0 + sum_i rho_i P_i``.

    Only ``A, B2, C1, D12, C2`` may depend on ``rho``; the per-parameter
    terms must therefore have zero ``B1, D11, D21``.
    """

    constant: PartitionedSystem
    terms: tuple[PartitionedSystem, ...]
    box: SchedulingBox

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(terms) != self.box.n_rho:
            raise ModelError(f"{len(terms)} affine terms given for a {self.box.n_rho}-D box")
        for i, term in enumerate(terms):
            if term.dims != self.constant.dims:
                raise ModelError(f"affine term {i} has dims {term.dims}, "
                                 f"expected {self.constant.dims}")
            for k in _CONSTANT:
                if np.any(getattr(term, k) != 0.0):
                    raise ModelError(f"affine term {i}: {k} must be parameter-independent")
        object.__setattr__(self, "terms", terms)

    @property
    def dims(self):
        return self.constant.dims

    def evaluate(self, rho) -> PartitionedSystem:
        """Frozen plant at ``rho`` (which must lie in the box)."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if not self.box.contains(rho):
            raise ModelError(f"rho={rho} outside the scheduling box")
        mats = self.constant.matrices()
        for r, term in zip(rho, self.terms):
            for k in _VARYING:
                mats[k] = mats[k] + r * getattr(term, k)
        return PartitionedSystem(**mats)

    def is_constant(self, name: str) -> bool:
        """True if matrix ``name`` does not depend on ``rho``."""
        return all(not np.any(getattr(t, name)) for t in self.terms)


@dataclass(frozen=True, eq=False)
class PolytopicPlant:
    """Generalized plant given by its vertex systems on the box corners."""

    vertices: tuple[PartitionedSystem, ...]
    vertex_rhos: np.ndarray
    box: SchedulingBox

    def __post_init__(self):
        verts = tuple(self.vertices)
        rhos = np.asarray(self.vertex_rhos, dtype=float).reshape(len(verts), self.box.n_rho)
        if len(verts) != 2 ** self.box.n_rho:
            raise ModelError(f"expected {2 ** self.box.n_rho} vertices, got {len(verts)}")
        if not np.array_equal(rhos, self.box.vertices()):
            raise ModelError("vertex scheduling values must be the box corners in canonical order")
        ref = verts[0]
        for j, v in enumerate(verts[1:], start=1):
            if v.dims != ref.dims:
                raise ModelError(f"vertex {j} has dims {v.dims}, expected {ref.dims}")
            for k in _CONSTANT:
                if not np.array_equal(getattr(v, k), getattr(ref, k)):
                    raise ModelError(f"{k} differs between vertex 0 and vertex {j}; "
                                     "it must be parameter-independent")
        rhos.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "vertex_rhos", rhos)

    @property
    def dims(self):
        return self.vertices[0].dims

    def evaluate(self, rho) -> PartitionedSystem:
        """Convex combination of the vertices with barycentric weights."""
        w = barycentric_weights(rho, self.box)
        mats = {}
        for k, ref in self.vertices[0].matrices().items():
            mats[k] = ref if k in _CONSTANT else sum(
                wi * getattr(v, k) for wi, v in zip(w, self.vertices))
        return PartitionedSystem(**mats)


def affine_to_polytope(p: AffinePlant) -> PolytopicPlant:
    """Evaluate an affine plant at every corner of its scheduling box."""
    corners = p.box.vertices()
    return PolytopicPlant(tuple(p.evaluate(c) for c in corners), corners, p.box)


def _as_affine(plant) -> AffinePlant:
    """Promote a :class:`PartitionedSystem` to a parameter-free AffinePlant."""
    if isinstance(plant, AffinePlant):
        return plant
    if isinstance(plant, PartitionedSystem):
        return AffinePlant(plant, (), SchedulingBox.empty())
    raise TypeError(f"expected AffinePlant or PartitionedSystem, got {type(plant).__name__}")


def random_stable(n: int, m: int, p: int, rng: np.random.Generator,
                  margin: float = 0.1) -> StateSpace:
    """Random Hurwitz system, used by tests and examples.

    The state matrix is shifted so its spectral abscissa is ``-margin``.
    """
    A = rng.standard_normal((n, n))
    if n:
        A -= (np.max(np.linalg.eigvals(A).real) + margin) * np.eye(n)
    return StateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)),
                      rng.standard_normal((p, m)))

