"""Incremental (Gateaux) form of a nonlinear generalized plant.

A nonlinear generalized plant

.. code-block:: text

    dx = f(x, u) + B1 w
    z  = h1(x, u) + D11 w
    y  = h2(x) + D21 w

has, along any trajectory ``(x(t), u(t))``, the Gateaux derivative

.. code-block:: text

    d(dx) = Abar(x,u) dx + B1 dw + B2bar(x,u) du
    dz    = C1bar(x,u) dx + D11 dw + D12bar(x,u) du
    dy    = C2bar(x) dx + D21 dw

with ``Abar = df/dx`` and so on. If a scheduling map ``rho = psi(x, u)``
exists with ``Abar = A o psi`` (and likewise for the other matrices), the
incremental plant is an LPV system in ``rho``. This module evaluates the
derivative, validates user-supplied factorizations through ``psi`` and
packages the result as an :class:`~incrlpv.models.AffinePlant`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .models import AffinePlant, ModelError, PartitionedSystem, SchedulingBox

__all__ = [
    "NonlinearPlant",
    "SchedulingMap",
    "FactorizedIncrementalPlant",
    "gateaux_at",
    "incremental_plant",
    "primal_embedding",
    "fd_jacobian_oracle",
]

Vector = np.ndarray
MatrixFn = Callable[..., np.ndarray]

_FACTORS = ("A", "B2", "C1", "D12", "C2")


def fd_jacobian_oracle(fun: Callable[[Vector], Vector], point, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``point``.

    Used as an independent oracle in tests and input validation only.

    Parameters
    ----------
    fun : callable
        Maps a 1-D array to a 1-D array (scalars are promoted).
    point : array_like
        Evaluation point.
    step : float
        Difference step, must be positive.

    Returns
    -------
    numpy.ndarray
        Matrix of shape ``(len(fun(point)), len(point))``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x0 = np.atleast_1d(np.asarray(point, dtype=float))
    f0 = np.atleast_1d(np.asarray(fun(x0), dtype=float))
    jac = np.empty((f0.size, x0.size))
    for i in range(x0.size):
        dx = np.zeros_like(x0)
        dx[i] = step
        fp = np.atleast_1d(np.asarray(fun(x0 + dx), dtype=float))
        fm = np.atleast_1d(np.asarray(fun(x0 - dx), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ValueError(f"non-finite function value near {x0}")
        jac[:, i] = (fp - fm) / (2.0 * step)
    return jac


def _box_samples(boxes: list[SchedulingBox], count: int, rng: np.random.Generator) -> np.ndarray:
    """Corners plus uniform random samples of a product of boxes."""
    lo = np.concatenate([b.lower for b in boxes])
    hi = np.concatenate([b.upper for b in boxes])
    corners = SchedulingBox(lo, hi).vertices()
    rand = lo + (hi - lo) * rng.random((count, lo.size))
    return np.vstack([corners, rand])


@dataclass(frozen=True, eq=False)
class NonlinearPlant:
    """Nonlinear generalized plant with affine disturbance channels.

    Parameters
    ----------
    n_x, n_w, n_u, n_z, n_y : int
        Channel dimensions.
    f, h1, h2 : callable
        ``f(x, u)`` and ``h1(x, u)`` are the drift parts of the state and
        performance maps; ``h2(x)`` is the measurement map.
    dfdx, dfdu, dh1dx, dh1du, dh2dx : callable
        User-supplied Jacobians with the same call signatures.
    B1, D11, D21 : array_like
        Constant disturbance matrices.
    X, U : SchedulingBox
        Boxes bounding the admissible states and inputs.
    """

    n_x: int
    n_w: int
    n_u: int
    n_z: int
    n_y: int
    f: MatrixFn
    h1: MatrixFn
    h2: MatrixFn
    dfdx: MatrixFn
    dfdu: MatrixFn
    dh1dx: MatrixFn
    dh1du: MatrixFn
    dh2dx: MatrixFn
    B1: np.ndarray
    D11: np.ndarray
    D21: np.ndarray
    X: SchedulingBox
    U: SchedulingBox
    samples: int = 50

    def __post_init__(self):
        for name, shape in (("B1", (self.n_x, self.n_w)), ("D11", (self.n_z, self.n_w)),
                            ("D21", (self.n_y, self.n_w))):
            mat = np.array(getattr(self, name), dtype=float).reshape(shape)
            if not np.all(np.isfinite(mat)):
                raise ModelError(f"{name} must be finite")
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)
        if self.X.n_rho != self.n_x or self.U.n_rho != self.n_u:
            raise ModelError("state/input boxes do not match n_x/n_u")
        rng = np.random.default_rng(0)
        for pt in _box_samples([self.X, self.U], self.samples, rng):
            x, u = pt[:self.n_x], pt[self.n_x:]
            self._check_point(x, u)

    def _check_point(self, x, u):
        shapes = {
            "f": (self.f(x, u), (self.n_x,)),
            "h1": (self.h1(x, u), (self.n_z,)),
            "h2": (self.h2(x), (self.n_y,)),
            "dfdx": (self.dfdx(x, u), (self.n_x, self.n_x)),
            "dfdu": (self.dfdu(x, u), (self.n_x, self.n_u)),
            "dh1dx": (self.dh1dx(x, u), (self.n_z, self.n_x)),
            "dh1du": (self.dh1du(x, u), (self.n_z, self.n_u)),
            "dh2dx": (self.dh2dx(x), (self.n_y, self.n_x)),
        }
        for name, (val, shape) in shapes.items():
            val = np.asarray(val, dtype=float)
            if val.size != int(np.prod(shape)):
                raise ModelError(f"{name} returned shape {val.shape}, expected {shape} at x={x}, u={u}")
            if not np.all(np.isfinite(val)):
                raise ModelError(f"{name} is not finite at x={x}, u={u}")

    def contains(self, x, u) -> bool:
        return self.X.contains(x) and self.U.contains(u)

    def jacobians(self, x, u) -> dict[str, np.ndarray]:
        """Frozen Jacobian matrices at ``(x, u)``, keyed by partition name."""
        return {
            "A": np.asarray(self.dfdx(x, u), dtype=float).reshape(self.n_x, self.n_x),
            "B2": np.asarray(self.dfdu(x, u), dtype=float).reshape(self.n_x, self.n_u),
            "C1": np.asarray(self.dh1dx(x, u), dtype=float).reshape(self.n_z, self.n_x),
            "D12": np.asarray(self.dh1du(x, u), dtype=float).reshape(self.n_z, self.n_u),
            "C2": np.asarray(self.dh2dx(x), dtype=float).reshape(self.n_y, self.n_x),
        }

    def sample_points(self, count: int, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
        """Box corners plus ``count`` seeded uniform samples of ``X x U``."""
        pts = _box_samples([self.X, self.U], count, np.random.default_rng(seed))
        return [(p[:self.n_x], p[self.n_x:]) for p in pts]


@dataclass(frozen=True, eq=False)
class SchedulingMap:
    """Scheduling map ``rho = psi(x, u)`` with its declared range ``box``.

    Parameters
    ----------
    psi : callable
        ``psi(x, u) -> rho``. If ``vectorized`` is set, ``psi`` must also
        accept ``x`` of shape ``(n_x, N)`` and ``u`` of shape ``(n_u, N)``
        and return an array of shape ``(n_rho, N)``; this only speeds up
        validation.
    box : SchedulingBox
    """

    psi: Callable[[np.ndarray, np.ndarray], np.ndarray]
    box: SchedulingBox
    vectorized: bool = False

    def __call__(self, x, u) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.psi(x, u), dtype=float))

    def validate(self, plant: NonlinearPlant, points_per_dim: int = 101) -> None:
        """Check ``psi(X, U)`` lies inside the box on a dense grid (tolerance 0).

        Raises
        ------
        ModelError
            With the first offending point.
        """
        lo = np.concatenate([plant.X.lower, plant.U.lower])
        hi = np.concatenate([plant.X.upper, plant.U.upper])
        grid = SchedulingBox(lo, hi).grid(points_per_dim)
        nx = plant.n_x
        if self.vectorized:
            rho = np.asarray(self.psi(grid[:, :nx].T, grid[:, nx:].T), dtype=float)
            rho = rho.reshape(self.box.n_rho, grid.shape[0])
            bad = np.any((rho < self.box.lower[:, None]) | (rho > self.box.upper[:, None]), axis=0)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ModelError(f"psi maps x={grid[i, :nx]}, u={grid[i, nx:]} to "
                                 f"rho={rho[:, i]} outside the scheduling box")
            return
        for pt in grid:
            rho = self(pt[:nx], pt[nx:])
            if not self.box.contains(rho):
                raise ModelError(f"psi maps x={pt[:nx]}, u={pt[nx:]} to rho={rho} "
                                 "outside the scheduling box")


def gateaux_at(plant: NonlinearPlant, x, u) -> PartitionedSystem:
    """Frozen Gateaux derivative (linearization) of ``plant`` at ``(x, u)``.

    Raises
    ------
    ModelError
        If ``(x, u)`` lies outside ``X x U``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if not plant.contains(x, u):
        raise ModelError(f"point x={x}, u={u} lies outside the operating set X x U")
    return PartitionedSystem(B1=plant.B1, D11=plant.D11, D21=plant.D21, **plant.jacobians(x, u))


@dataclass(frozen=True, eq=False)
class FactorizedIncrementalPlant:
    """A plant whose varying matrices factor through a scheduling map.

    ``factors`` maps each of ``"A", "B2", "C1", "D12", "C2"`` to a function
    of ``rho``; missing entries are treated as constant functions taken from
    the plant. ``form`` records whether the factors reproduce the Gateaux
    derivative (``"incremental"``) or a primal quasi-LPV embedding
    (``"primal"``) of the plant.
    """

    plant: NonlinearPlant
    scheduling: SchedulingMap
    factors: dict[str, Callable[[np.ndarray], np.ndarray]]
    form: Literal["incremental", "primal"] = "incremental"
    _shapes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        p = self.plant
        shapes = {"A": (p.n_x, p.n_x), "B2": (p.n_x, p.n_u), "C1": (p.n_z, p.n_x),
                  "D12": (p.n_z, p.n_u), "C2": (p.n_y, p.n_x)}
        unknown = set(self.factors) - set(_FACTORS)
        if unknown:
            raise ModelError(f"unknown factor names {sorted(unknown)}; allowed {_FACTORS}")
        object.__setattr__(self, "_shapes", shapes)

    def matrices(self, rho) -> dict[str, np.ndarray]:
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        out = {}
        for name, shape in self._shapes.items():
            fn = self.factors.get(name)
            if fn is None:
                raise ModelError(f"factor {name} was not supplied")
            out[name] = np.asarray(fn(rho), dtype=float).reshape(shape)
        return out

    def frozen(self, rho) -> PartitionedSystem:
        """Plant matrices at the scheduling value ``rho``."""
        p = self.plant
        return PartitionedSystem(B1=p.B1, D11=p.D11, D21=p.D21, **self.matrices(rho))

    def to_affine(self, tol: float = 1e-12, samples: int = 20) -> AffinePlant:
        """Package as an :class:`AffinePlant` on the scheduling box.

        The affine coefficients are obtained by evaluating the factors at
        the origin and unit vectors; the result is then checked against the
        factors at the box corners and random interior points.

        Raises
        ------
        ModelError
            If the factors are not affine in ``rho``.
        """
        box = self.scheduling.box
        n = box.n_rho
        base = self.matrices(np.zeros(n))
        terms = []
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            mi = self.matrices(e)
            terms.append({k: mi[k] - base[k] for k in base})
        p = self.plant
        zeros = {"B1": np.zeros_like(p.B1), "D11": np.zeros_like(p.D11),
                 "D21": np.zeros_like(p.D21)}
        affine = AffinePlant(
            PartitionedSystem(B1=p.B1, D11=p.D11, D21=p.D21, **base),
            tuple(PartitionedSystem(**t, **zeros) for t in terms), box)
        rng = np.random.default_rng(1)
        pts = np.vstack([box.vertices(), box.lower + (box.upper - box.lower) * rng.random((samples, n))])
        for rho in pts:
            want = self.matrices(rho)
            got = affine.evaluate(rho).matrices()
            for k, v in want.items():
                scale = max(1.0, float(np.max(np.abs(v), initial=0.0)))
                if np.max(np.abs(got[k] - v), initial=0.0) > tol * scale:
                    raise ModelError(f"factor {k} is not affine in rho (mismatch at rho={rho})")
        return affine


def _check_factorization(fp: FactorizedIncrementalPlant, reference, samples: int,
                         tol: float, seed: int) -> None:
    for x, u in fp.plant.sample_points(samples, seed):
        rho = fp.scheduling(x, u)
        want = reference(x, u)
        got = fp.matrices(rho)
        for name, target in want.items():
            err = np.max(np.abs(got[name] - target), initial=0.0)
            if not err <= tol:
                raise ModelError(f"factorization mismatch in {name} at x={x}, u={u} "
                                 f"(rho={rho}): error {err:.3e} > {tol:.1e}")


def incremental_plant(plant: NonlinearPlant, scheduling: SchedulingMap,
                      factors: dict[str, Callable[[np.ndarray], np.ndarray]],
                      samples: int = 200, tol: float = 1e-9, seed: int = 0,
                      check_range: bool = True) -> FactorizedIncrementalPlant:
    """Build the incremental plant and validate its factorization.

    Parameters
    ----------
    plant : NonlinearPlant
    scheduling : SchedulingMap
        Must satisfy ``psi(X, U)`` inside its box.
    factors : dict
        Functions ``A(rho)``, ``B2(rho)``, ``C1(rho)``, ``D12(rho)``,
        ``C2(rho)`` with ``A(psi(x, u)) = df/dx(x, u)`` and so on.
    samples, seed : int
        Number of random ``(x, u)`` points checked (box corners are always
        included) and the seed of their generator.
    tol : float
        Maximum entry-wise mismatch tolerated.

    Returns
    -------
    FactorizedIncrementalPlant

    Raises
    ------
    ModelError
        If the factorization disagrees with the Jacobians at a sampled point.
    """
    if check_range:
        scheduling.validate(plant)
    fp = FactorizedIncrementalPlant(plant, scheduling, dict(factors), "incremental")
    _check_factorization(fp, plant.jacobians, samples, tol, seed)
    return fp


def primal_embedding(plant: NonlinearPlant, scheduling: SchedulingMap,
                     factors: dict[str, Callable[[np.ndarray], np.ndarray]],
                     samples: int = 200, tol: float = 1e-9, seed: int = 0,
                     check_range: bool = True) -> FactorizedIncrementalPlant:
    """Quasi-LPV embedding of the plant itself (not its derivative).

    Checks ``f(x, u) = A(rho) x + B2(rho) u``, ``h1(x, u) = C1(rho) x +
    D12(rho) u`` and ``h2(x) = C2(rho) x`` with ``rho = psi(x, u)`` at
    sampled points. This is the embedding used by a conventional (non
    incremental) L2 LPV design.
    """
    if check_range:
        scheduling.validate(plant)
    fp = FactorizedIncrementalPlant(plant, scheduling, dict(factors), "primal")
    for x, u in plant.sample_points(samples, seed):
        m = fp.matrices(scheduling(x, u))
        checks = {
            "f": (np.asarray(plant.f(x, u), dtype=float), m["A"] @ x + m["B2"] @ u),
            "h1": (np.asarray(plant.h1(x, u), dtype=float), m["C1"] @ x + m["D12"] @ u),
            "h2": (np.asarray(plant.h2(x), dtype=float), m["C2"] @ x),
        }
        for name, (want, got) in checks.items():
            err = np.max(np.abs(want.ravel() - got.ravel()), initial=0.0)
            if not err <= tol * max(1.0, float(np.max(np.abs(want), initial=0.0))):
                raise ModelError(f"primal embedding mismatch in {name} at x={x}, u={u}: "
                                 f"error {err:.3e}")
    return fp
