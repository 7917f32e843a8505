"""Closed-loop simulation, incremental-gain estimation and frequency analysis.

The nonlinear plant is integrated together with an LPV controller using a
fixed-step classical Runge--Kutta scheme. The loop is the error-feedback
structure used for synthesis, without weighting filters::

    e = r - y,   u = K(rho) e,   plant input = u + d_i,   rho = psi(x, .)

The scheduling variable is clamped into the box; every clamped grid sample
is counted so that leaving the scheduling region never goes unnoticed.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import scipy.signal

from .genplant import WeightSet
from .incremental import NonlinearPlant, SchedulingMap
from .models import AffinePlant, StateSpace, freq_response, tf_to_ss
from .synthesis import LpvController, closed_loop_frozen

logger = logging.getLogger(__name__)

__all__ = [
    "Scenario",
    "SimulationRun",
    "GainEstimate",
    "BodeTable",
    "rk4_step",
    "simulate_closed_loop",
    "oscillation_metric",
    "l2_norm",
    "random_input_pairs",
    "LtiLoop",
    "WeightedNonlinearLoop",
    "incremental_gain_estimate",
    "process_sensitivity_bode",
    "CSV_COLUMNS",
    "BODE_COLUMNS",
]

CSV_COLUMNS = ("t", "r", "di", "y", "u", "e", "rho")
BODE_COLUMNS = ("omega", "rho", "mag_db", "invweight_db")
BLOWUP_NORM = 1e9


# --------------------------------------------------------------------------
# Scenario and run containers
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Piecewise-constant reference plus constant input disturbance.

    ``ref_levels[i]`` is active from ``ref_times[i]`` until the next switch;
    before ``ref_times[0]`` the reference is zero. The disturbance (in plant
    input units, e.g. N) acts from ``disturbance_start`` on.
    """

    ref_levels: tuple[float, ...] = (0.0, 0.3)
    ref_times: tuple[float, ...] = (0.0, 5.0)
    disturbance: float = 0.0
    disturbance_start: float = 0.0
    t_end: float = 40.0
    dt: float = 1e-3
    x0: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "ref_levels", tuple(float(v) for v in self.ref_levels))
        object.__setattr__(self, "ref_times", tuple(float(v) for v in self.ref_times))
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if not self.dt > 0 or not self.t_end > 0:
            raise ValueError("dt and t_end must be positive")
        if len(self.ref_levels) != len(self.ref_times):
            raise ValueError("ref_levels and ref_times must have equal length")
        if any(not 0.0 <= t <= self.t_end for t in self.ref_times):
            raise ValueError("reference switch times must lie in [0, t_end]")
        if any(b < a for a, b in zip(self.ref_times, self.ref_times[1:])):
            raise ValueError("reference switch times must be nondecreasing")
        if not np.isfinite(self.disturbance) or not 0.0 <= self.disturbance_start <= self.t_end:
            raise ValueError("invalid disturbance specification")

    def reference(self, t: float) -> float:
        idx = np.searchsorted(self.ref_times, t, side="right") - 1
        return self.ref_levels[idx] if idx >= 0 else 0.0

    def disturbance_at(self, t: float) -> float:
        return self.disturbance if t >= self.disturbance_start else 0.0

    def grid(self) -> np.ndarray:
        steps = int(round(self.t_end / self.dt))
        return np.arange(steps + 1) * self.dt

    def digest(self) -> str:
        """Stable hash identifying the scenario."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class SimulationRun:
    """Logged closed-loop signals on the simulation grid.

    ``violations`` counts grid samples at which the scheduling variable had
    to be clamped into the box. ``aborted`` is set when the state blew up;
    the signals then end at the last valid sample.
    """

    t: np.ndarray
    r: np.ndarray
    di: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    rho: np.ndarray
    violations: int = 0
    controller_id: str = ""
    scenario_hash: str = ""
    aborted: bool = False
    message: str = ""

    def columns(self) -> np.ndarray:
        return np.column_stack([self.t, self.r, self.di, self.y, self.u, self.e, self.rho])

    def to_csv(self, target: str | os.PathLike | io.TextIOBase) -> None:
        """Write the CSV (header ``t,r,di,y,u,e,rho``, 9 significant digits)."""
        _write_csv(target, CSV_COLUMNS, self.columns())


def _fmt(x: float) -> str:
    if not np.isfinite(x):
        return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return np.format_float_positional(x, precision=9, unique=False, fractional=False, trim="-")


def _write_csv(target, header: Sequence[str], data: np.ndarray) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in data)
    text = "\n".join(lines) + "\n"
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        target.write(text)


def controller_digest(k) -> str:
    """Short content hash of a controller's matrices."""
    h = hashlib.sha256()
    for name in ("Ak", "Ck", "A", "B"):
        for m in getattr(k, name, ()):
            h.update(np.ascontiguousarray(m).tobytes())
    for name in ("Bk", "Dk", "C", "D"):
        if hasattr(k, name):
            h.update(np.ascontiguousarray(getattr(k, name)).tobytes())
    return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# Integration
# --------------------------------------------------------------------------


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], x: np.ndarray, t: float,
             dt: float) -> np.ndarray:
    """One classical fourth-order Runge--Kutta step of ``x' = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _weights_fn(box):
    """Fast barycentric weights for clamped scheduling values."""
    lo, hi = box.lower, box.upper
    span = np.where(hi > lo, hi - lo, 1.0)

    def weights(rho):
        t = (rho - lo) / span
        w = np.ones(1)
        for tk in t:
            w = np.outer(w, (1.0 - tk, tk)).ravel()
        return w
    return weights


def _stacked_system(k) -> np.ndarray:
    """Vertex matrices ``[[A, B], [C, D]]`` of a controller as ``(n_v, rows*cols)``."""
    n_v = max(1, 2 ** k.box.n_rho)
    blocks = []
    for j in range(n_v):
        w = np.zeros(n_v)
        w[j] = 1.0
        A, B, C, D = k.lpv_matrices(w)
        blocks.append(np.block([[A, B], [C, D]]).ravel())
    return np.array(blocks)


def _integrate(plant: NonlinearPlant, k, psi: SchedulingMap, t_grid: np.ndarray,
               r_fn: Callable[[float], float], d_fn: Callable[[float], float],
               x0: np.ndarray) -> dict:
    """Fixed-step integration of plant and controller; returns logged arrays."""
    box = psi.box
    weights = _weights_fn(box)
    nx, nk = plant.n_x, k.n_states
    S3 = _stacked_system(k)
    shape = (nk + plant.n_u, nk + plant.n_y)
    dt = float(t_grid[1] - t_grid[0]) if t_grid.size > 1 else 0.0
    u_sched = np.zeros(plant.n_u)   # control value used when psi depends on u

    def outputs(t, z):
        x, xk = z[:nx], z[nx:]
        y = np.asarray(plant.h2(x), dtype=float)
        e = r_fn(t) - y
        raw = np.asarray(psi(x, u_sched), dtype=float)
        rho = np.clip(raw, box.lower, box.upper)
        out = (weights(rho) @ S3).reshape(shape) @ np.concatenate([xk, e])
        return y, e, out[nk:], out[:nk], rho, raw

    def rhs(t, z):
        _, _, u, dxk, _, _ = outputs(t, z)
        dx = np.asarray(plant.f(z[:nx], u + d_fn(t)), dtype=float)
        return np.concatenate([dx, dxk])

    N = t_grid.size
    logs = {name: np.zeros(N) for name in CSV_COLUMNS}
    z = np.concatenate([np.asarray(x0, dtype=float), np.zeros(nk)])
    violations, last, message = 0, N, ""
    for i, t in enumerate(t_grid):
        y, e, u, _, rho, raw = outputs(t, z)
        logs["t"][i], logs["r"][i], logs["di"][i] = t, r_fn(t), d_fn(t)
        logs["y"][i], logs["u"][i], logs["e"][i], logs["rho"][i] = y[0], u[0], e[0], rho[0]
        violations += int(np.any(rho != raw))
        u_sched = u
        if i == N - 1:
            break
        z = rk4_step(rhs, z, t, dt)
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > BLOWUP_NORM:
            last = i + 1
            message = f"state blow-up after t={t:.6g} s; run aborted"
            break
    out = {name: arr[:last] for name, arr in logs.items()}
    out.update(violations=violations, aborted=last < N, message=message)
    return out


def simulate_closed_loop(plant: NonlinearPlant, k, scenario: Scenario,
                         psi: SchedulingMap) -> SimulationRun:
    """Simulate the nonlinear plant in closed loop with an LPV controller.

    Parameters
    ----------
    plant : NonlinearPlant
        Single-input single-output plant (``n_u = n_y = 1``).
    k : RealizedController or LpvController
        Any controller exposing ``lpv_matrices(weights)``, ``n_states`` and
        ``box``; an :class:`LpvController` is used directly as
        ``u = Ck xk + Dk e``.
    scenario : Scenario
    psi : SchedulingMap
        Scheduling map; its box must equal the controller box. It is
        evaluated with the plant state and the control value of the latest
        grid sample.

    Returns
    -------
    SimulationRun
        On blow-up (``|state| > 1e9`` or non-finite) the run is truncated at
        the last valid sample and flagged ``aborted``.
    """
    if psi.box != k.box:
        raise ValueError("controller box does not match the scheduling map box")
    if plant.n_u != 1 or plant.n_y != 1:
        raise ValueError("closed-loop simulation supports single-input single-output plants")
    if len(scenario.x0) != plant.n_x:
        raise ValueError(f"initial state has length {len(scenario.x0)}, expected {plant.n_x}")
    data = _integrate(plant, k, psi, scenario.grid(), scenario.reference,
                      scenario.disturbance_at, np.asarray(scenario.x0))
    run = SimulationRun(**{c: data[c] for c in CSV_COLUMNS}, violations=data["violations"],
                        controller_id=controller_digest(k), scenario_hash=scenario.digest(),
                        aborted=data["aborted"], message=data["message"])
    if run.aborted:
        logger.error(run.message)
    if run.violations:
        logger.warning("scheduling variable left the box at %d samples", run.violations)
    return run


def oscillation_metric(run: SimulationRun, window_fraction: float = 0.25) -> float:
    """Peak-to-peak tracking error over the trailing part of the horizon."""
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window fraction must lie in (0, 1]")
    t0 = run.t[-1] - window_fraction * (run.t[-1] - run.t[0]) if run.t.size else 0.0
    e = run.e[run.t >= t0 - 1e-12]
    if e.size == 0:
        raise ValueError("empty window")
    return float(np.max(e) - np.min(e))


# --------------------------------------------------------------------------
# Incremental gain estimation
# --------------------------------------------------------------------------


def l2_norm(signal: np.ndarray, t: np.ndarray) -> float:
    """Trapezoidal L2 norm of a (vector) signal sampled on ``t``."""
    sq = np.sum(np.reshape(signal, (t.size, -1)) ** 2, axis=1)
    return float(np.sqrt(scipy.integrate.trapezoid(sq, t)))


@dataclass(frozen=True)
class GainEstimate:
    """Empirical lower bound on an incremental L2 gain.

    Attributes
    ----------
    eta_lower : float
        Largest observed ratio ``||z - z~|| / ||w - w~||``.
    ratios : tuple of float
        Ratio for every evaluated pair (``nan`` for skipped pairs).
    descriptors : tuple of str
        Human-readable description of each pair.
    horizon : float
        Truncation horizon in seconds.
    """

    eta_lower: float
    ratios: tuple[float, ...]
    descriptors: tuple[str, ...]
    horizon: float


SignalFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class _SineSum:
    amps: np.ndarray      # (n_w, K)
    freqs: np.ndarray     # (n_w, K)
    phases: np.ndarray    # (n_w, K)
    base: SignalFn | None = None

    def __call__(self, t: float) -> np.ndarray:
        v = np.sum(self.amps * np.sin(self.freqs * t + self.phases), axis=1)
        return v + self.base(t) if self.base is not None else v

    def describe(self) -> str:
        return ";".join(
            "+".join(f"{a:.3g}sin({w:.3g}t)" for a, w in zip(ar, wr))
            for ar, wr in zip(self.amps, self.freqs))


def random_input_pairs(count: int, n_w: int, seed: int = 0, amplitude=0.1,
                       max_freq: float = 5.0, base: SignalFn | None = None,
                       components: int = 5) -> list[tuple[SignalFn, SignalFn, str]]:
    """Seeded pairs of smooth band-limited inputs ``(w, w~, description)``.

    Each input is ``base(t)`` plus a sum of at most ``components`` sinusoids
    with frequencies up to ``max_freq`` rad/s. ``amplitude`` may be a scalar
    or one value per input channel.
    """
    rng = np.random.default_rng(seed)
    amp = np.broadcast_to(np.asarray(amplitude, dtype=float), (n_w,))[:, None]
    pairs = []
    for _ in range(count):
        sig = []
        for _ in range(2):
            k = int(rng.integers(1, components + 1))
            sig.append(_SineSum(amp * rng.uniform(-1, 1, (n_w, k)) / k,
                                rng.uniform(0.05, max_freq, (n_w, k)),
                                rng.uniform(0, 2 * np.pi, (n_w, k)), base))
        pairs.append((sig[0], sig[1], f"w: {sig[0].describe()} | w~: {sig[1].describe()}"))
    return pairs


def _sample(fn: SignalFn, t: np.ndarray) -> np.ndarray:
    return np.array([np.atleast_1d(fn(ti)) for ti in t], dtype=float)


class LtiLoop:
    """LTI system responding to sampled inputs (exact for linear interpolation)."""

    def __init__(self, sys: StateSpace):
        self.sys = sys

    def respond(self, w: SignalFn, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W = _sample(w, t)
        s = self.sys
        if s.n_states == 0:
            return W, W @ s.D.T
        _, z, _ = scipy.signal.lsim((s.A, s.B, s.C, s.D), W, t, interp=True)
        return W, np.reshape(z, (t.size, -1))


class WeightedNonlinearLoop:
    """Nonlinear closed loop with the weighted performance outputs.

    Input ``w = (r, d_i)`` drives the simulated loop with reference ``r``
    and plant-input disturbance ``W3 d_i``; the outputs ``z = (W1 e, W2 u)``
    are obtained by filtering the logged ``e`` and ``u`` exactly (the
    weights are output filters, so they can be applied after the fact).
    """

    def __init__(self, plant: NonlinearPlant, k, psi: SchedulingMap, weights: WeightSet):
        self.plant, self.k, self.psi, self.weights = plant, k, psi, weights
        self._w1, self._w2 = tf_to_ss(weights.W1), tf_to_ss(weights.W2)

    def respond(self, w: SignalFn, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        W3 = self.weights.W3
        data = _integrate(self.plant, self.k, self.psi, t,
                          lambda s: float(w(s)[0]), lambda s: W3 * float(w(s)[1]),
                          np.zeros(self.plant.n_x))
        if data["aborted"]:
            raise RuntimeError(data["message"])
        if data["violations"]:
            logger.warning("scheduling variable clamped at %d samples", data["violations"])
        z = [self._filter(g, data[s], t) for g, s in ((self._w1, "e"), (self._w2, "u"))]
        return _sample(w, t), np.column_stack(z)

    @staticmethod
    def _filter(g: StateSpace, sig: np.ndarray, t: np.ndarray) -> np.ndarray:
        if g.n_states == 0:
            return g.D[0, 0] * sig
        _, out, _ = scipy.signal.lsim((g.A, g.B, g.C, g.D), sig, t, interp=True)
        return np.ravel(out)


def incremental_gain_estimate(loop, pairs: Sequence[tuple[SignalFn, SignalFn, str]],
                              t: np.ndarray) -> GainEstimate:
    """Lower bound on the incremental L2 gain from trajectory pairs.

    Both trajectories of a pair start at the same (zero) initial condition,
    so the bias terms of the incremental gain definition vanish and
    ``||z - z~|| / ||w - w~||`` (trapezoidal quadrature over the truncated
    horizon) is a lower bound.

    Parameters
    ----------
    loop : object
        Provides ``respond(w, t) -> (w_samples, z_samples)``, e.g.
        :class:`LtiLoop` or :class:`WeightedNonlinearLoop`.
    pairs : sequence of (w, w~, description)
    t : numpy.ndarray
        Uniform time grid (s).
    """
    ratios, desc = [], []
    for w, wt, d in pairs:
        W, Z = loop.respond(w, t)
        Wt, Zt = loop.respond(wt, t)
        den = l2_norm(W - Wt, t)
        desc.append(d)
        if den == 0.0:
            warnings.warn(f"pair skipped: identical inputs ({d})", RuntimeWarning, stacklevel=2)
            ratios.append(float("nan"))
            continue
        ratios.append(l2_norm(Z - Zt, t) / den)
    valid = [r for r in ratios if np.isfinite(r)]
    return GainEstimate(max(valid) if valid else 0.0, tuple(ratios), tuple(desc),
                        float(t[-1] - t[0]))


# --------------------------------------------------------------------------
# Frequency analysis
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BodeTable:
    """Frozen process sensitivity on an ``omega x rho`` grid.

    ``mag_db[i, j]`` is the magnitude of the map from the (W3-normalized)
    input disturbance ``d_i`` to the tracking error ``e`` at ``omega[i]``
    and ``rho[j]``; ``nan`` where the frozen loop is unstable.
    ``invweight_db`` is ``|W1(j omega) W3|^-1`` in dB.
    """

    omega: np.ndarray
    rho: np.ndarray
    mag_db: np.ndarray
    invweight_db: np.ndarray
    stable: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    def rows(self) -> np.ndarray:
        out = []
        for j, r in enumerate(self.rho):
            for i, w in enumerate(self.omega):
                out.append((w, r, self.mag_db[i, j], self.invweight_db[i]))
        return np.array(out, dtype=float)

    def to_csv(self, target) -> None:
        """Write the CSV (header ``omega,rho,mag_db,invweight_db``)."""
        _write_csv(target, BODE_COLUMNS, self.rows())


def _db(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(x))


def process_sensitivity_bode(p: AffinePlant, k: LpvController, rho_grid, omega_grid,
                             weights: WeightSet) -> BodeTable:
    """Frozen-``rho`` process sensitivity ``d_i -> e`` of the weighted loop.

    The tracking error ``e`` is the controller measurement of the tracking
    generalized plant, so the map is read from the closed loop's
    measurement channel (the performance output ``z1`` is ``W1 e``).
    Unstable frozen loops are flagged and reported as ``nan``.
    """
    omega = np.asarray(omega_grid, dtype=float)
    rhos = np.asarray(rho_grid, dtype=float)
    mag = np.full((omega.size, rhos.size), np.nan)
    stable = np.zeros(rhos.size, dtype=bool)
    for j, rho in enumerate(rhos):
        plant = p.evaluate(np.atleast_1d(rho))
        cl = closed_loop_frozen(plant, k, np.atleast_1d(rho))
        n_p = plant.A.shape[0]
        # e = y = C2 x + D21 w in closed-loop coordinates
        c_e = np.hstack([plant.C2, np.zeros((plant.C2.shape[0], cl.n_states - n_p))])
        sens = StateSpace(cl.A, cl.B[:, 1:2], c_e, plant.D21[:, 1:2])
        if not cl.is_hurwitz():
            logger.warning("frozen loop unstable at rho=%g; entries flagged", rho)
            continue
        stable[j] = True
        mag[:, j] = _db(freq_response(sens, omega)[:, 0, 0])
    W1 = weights.W1(1j * omega)
    invweight = -_db(W1 * weights.W3)
    return BodeTable(omega, rhos, mag, invweight, stable)
