"""Mean-field annealing dynamics of the dressed Ising chain.

Each site carries a Bloch vector ``(x, y, z)`` driven by the decaying
fields ``Omega_x(t)``, ``Omega_z(t)`` and by the couplings, which are
switched on with weight ``1 - exp(-t/tau_ev)``:

    dx_j/dt = -Omega_z y_j + h_j y_j
    dy_j/dt =  Omega_z x_j - Omega_x z_j - h_j x_j
    dz_j/dt =  Omega_x y_j

with ``h_j = 2 w(t) sum_l J_{j,l} z_l``.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numba
import numpy as np

from ._validation import check_square
from .classical import exact_ground_state
from .couplings import couplings_for
from .errors import ConfigError, NumericalError

DEFAULT_SAMPLES = 2000
NORM_TOL = 1e-6


class Orientation(str, Enum):
    ALIGNED = "aligned"
    ANTI_ALIGNED = "anti_aligned"


@dataclass(frozen=True)
class AnnealSchedule:
    """Exponential schedules.  ``omega_z0`` defaults to ``0.1 * omega_x0``,
    ``tau_ev_prime`` to ``tau_ev / 10`` and ``t_final`` to ``10 * tau_ev``."""

    tau_ev: float
    omega_x0: float = 5.0
    omega_z0: Optional[float] = None
    g0: float = 1.0
    tau_ev_prime: Optional[float] = None
    t_final: Optional[float] = None

    def __post_init__(self):
        if not self.tau_ev > 0:
            raise ConfigError(f"tau_ev must be > 0, got {self.tau_ev!r}")
        if self.omega_x0 < 0:
            raise ConfigError(f"omega_x0 must be >= 0, got {self.omega_x0!r}")
        if self.omega_z0 is None:
            object.__setattr__(self, "omega_z0", 0.1 * self.omega_x0)
        if self.tau_ev_prime is None:
            object.__setattr__(self, "tau_ev_prime", self.tau_ev / 10.0)
        if not 0 < self.tau_ev_prime < self.tau_ev:
            raise ConfigError(
                f"need 0 < tau_ev_prime < tau_ev, got {self.tau_ev_prime!r} and {self.tau_ev!r}"
            )
        if self.t_final is None:
            object.__setattr__(self, "t_final", 10.0 * self.tau_ev)
        if not self.t_final > 0:
            raise ConfigError(f"t_final must be > 0, got {self.t_final!r}")

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


def schedule_values(t, sched):
    """``(Omega_x, Omega_z, g2_weight)`` at time ``t``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("schedule time must be >= 0")
    decay = np.exp(-np.asarray(t, dtype=float) / sched.tau_ev)
    ox = sched.omega_x0 * decay
    oz = sched.omega_z0 * np.exp(-np.asarray(t, dtype=float) / sched.tau_ev_prime)
    return ox, oz, 1.0 - decay


@dataclass(frozen=True)
class AnnealState:
    t: float
    bloch: np.ndarray
    omega_x: float
    omega_z: float
    g2_weight: float

    @classmethod
    def at(cls, t, bloch, sched):
        ox, oz, w = schedule_values(t, sched)
        return cls(t=float(t), bloch=np.asarray(bloch, dtype=float), omega_x=float(ox),
                   omega_z=float(oz), g2_weight=float(w))

    @property
    def z(self):
        return self.bloch[:, 2]


def initial_state(N, sched, orientation=Orientation.ALIGNED):
    """Uniform product state along ``+-(Omega_x(0), 0, Omega_z(0))``."""
    v = np.array([sched.omega_x0, 0.0, sched.omega_z0])
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ConfigError("initial fields vanish, orientation undefined")
    v /= norm
    if Orientation(orientation) is Orientation.ANTI_ALIGNED:
        v = -v
    return AnnealState.at(0.0, np.tile(v, (N, 1)), sched)


def _coupling_matrix(J, include_self):
    J = np.array(check_square("J", J, symmetric=True), dtype=float)
    if not include_self:
        np.fill_diagonal(J, 0.0)
    return J


@numba.njit(cache=True)
def _rhs(t, y, J, ox0, oz0, tau, taup, out):
    N = J.shape[0]
    ox = ox0 * np.exp(-t / tau)
    oz = oz0 * np.exp(-t / taup)
    w = 1.0 - np.exp(-t / tau)
    for j in range(N):
        h = 0.0
        for l in range(N):
            h += J[j, l] * y[3 * l + 2]
        h *= 2.0 * w
        x = y[3 * j]
        yy = y[3 * j + 1]
        z = y[3 * j + 2]
        out[3 * j] = -oz * yy + h * yy
        out[3 * j + 1] = oz * x - ox * z - h * x
        out[3 * j + 2] = ox * yy


def bloch_rhs(state, sched, J, include_self=True):
    """Time derivative of the ``N x 3`` Bloch array at ``state.t``."""
    J = _coupling_matrix(J, include_self)
    y = np.ascontiguousarray(state.bloch, dtype=float).reshape(-1)
    out = np.empty_like(y)
    _rhs(float(state.t), y, J, float(sched.omega_x0), float(sched.omega_z0),
         float(sched.tau_ev), float(sched.tau_ev_prime), out)
    return out.reshape(-1, 3)


@numba.njit(cache=True)
def _dopri5(y0, J, ox0, oz0, tau, taup, ts, rtol, atol, max_steps):
    # Dormand-Prince 5(4) with first-same-as-last reuse of k7
    b1, b3, b4, b5, b6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
    e1, e3, e4, e5, e6, e7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
    n = y0.size
    y = y0.copy()
    t = 0.0
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    k5 = np.empty(n)
    k6 = np.empty(n)
    k7 = np.empty(n)
    yt = np.empty(n)
    ynew = np.empty(n)
    out = np.empty((ts.size, n))
    _rhs(t, y, J, ox0, oz0, tau, taup, k1)
    h = min(1e-3, ts[-1]) if ts[-1] > 0 else 1e-3
    idx = 0
    while idx < ts.size and ts[idx] <= t:
        out[idx] = y
        idx += 1
    steps = 0
    while idx < ts.size:
        if steps >= max_steps:
            return out, steps, 2
        tend = ts[idx]
        hh = min(h, tend - t)
        if hh <= 1e-14 * max(1.0, abs(t)):
            return out, steps, 1
        last = hh == tend - t
        for i in range(n):
            yt[i] = y[i] + hh * 0.2 * k1[i]
        _rhs(t + 0.2 * hh, yt, J, ox0, oz0, tau, taup, k2)
        for i in range(n):
            yt[i] = y[i] + hh * (3 / 40 * k1[i] + 9 / 40 * k2[i])
        _rhs(t + 0.3 * hh, yt, J, ox0, oz0, tau, taup, k3)
        for i in range(n):
            yt[i] = y[i] + hh * (44 / 45 * k1[i] - 56 / 15 * k2[i] + 32 / 9 * k3[i])
        _rhs(t + 0.8 * hh, yt, J, ox0, oz0, tau, taup, k4)
        for i in range(n):
            yt[i] = y[i] + hh * (19372 / 6561 * k1[i] - 25360 / 2187 * k2[i]
                                 + 64448 / 6561 * k3[i] - 212 / 729 * k4[i])
        _rhs(t + 8 / 9 * hh, yt, J, ox0, oz0, tau, taup, k5)
        for i in range(n):
            yt[i] = y[i] + hh * (9017 / 3168 * k1[i] - 355 / 33 * k2[i] + 46732 / 5247 * k3[i]
                                 + 49 / 176 * k4[i] - 5103 / 18656 * k5[i])
        _rhs(t + hh, yt, J, ox0, oz0, tau, taup, k6)
        for i in range(n):
            ynew[i] = y[i] + hh * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i])
        _rhs(t + hh, ynew, J, ox0, oz0, tau, taup, k7)
        err = 0.0
        for i in range(n):
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            ei = hh * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]) / sc
            err += ei * ei
        err = np.sqrt(err / n)
        steps += 1
        if err <= 1.0:
            t = tend if last else t + hh
            for i in range(n):
                y[i] = ynew[i]
                k1[i] = k7[i]
            while idx < ts.size and ts[idx] <= t:
                out[idx] = y
                idx += 1
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            grown = hh * min(5.0, max(0.2, fac))
            # a step clipped to hit an output time should not shrink h
            h = max(h, grown) if last else grown
        else:
            h = hh * max(0.2, 0.9 * err ** -0.2)
    return out, steps, 0


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    bloch: np.ndarray  # (samples, N, 3)
    schedule: AnnealSchedule
    steps: int
    meta: dict = field(default_factory=dict)

    def state(self, k):
        return AnnealState.at(self.times[k], self.bloch[k], self.schedule)

    @property
    def final(self):
        return self.state(-1)

    def norm_drift(self):
        return float(np.abs(np.linalg.norm(self.bloch, axis=2) - 1.0).max())

    def fidelity_trace(self, exact):
        s = np.asarray(getattr(exact, "s", exact), dtype=float)
        return np.abs(self.bloch[:, :, 2] @ s) / s.size


def integrate_anneal(cfg, sched, J, initial=None, orientation=Orientation.ALIGNED,
                     include_self=True, samples=DEFAULT_SAMPLES, rtol=1e-8, atol=1e-12,
                     norm_tol=NORM_TOL, max_steps=50_000_000):
    """Integrate the Bloch equations from ``t = 0`` to ``sched.t_final``.

    ``cfg`` may be ``None``; when given, its site count must match ``J``.
    ``include_self`` keeps ``J_{j,j}`` in the field sum.  Output is sampled on
    ``samples + 1`` equally spaced times.
    """
    J = _coupling_matrix(J, include_self)
    N = J.shape[0]
    if cfg is not None and cfg.N != N:
        raise ConfigError(f"J has {N} sites but cfg.N = {cfg.N}")
    if initial is None:
        initial = initial_state(N, sched, orientation)
    b0 = np.asarray(initial.bloch, dtype=float)
    if b0.shape != (N, 3):
        raise ValueError(f"initial Bloch array must have shape ({N}, 3), got {b0.shape}")
    if np.abs(np.linalg.norm(b0, axis=1) - 1.0).max() > norm_tol:
        raise ValueError("initial Bloch vectors must be unit length")
    ts = np.linspace(0.0, sched.t_final, int(samples) + 1)
    out, steps, status = _dopri5(b0.reshape(-1).copy(), J, float(sched.omega_x0), float(sched.omega_z0),
                                 float(sched.tau_ev), float(sched.tau_ev_prime), ts, rtol, atol, max_steps)
    if status == 1:
        raise NumericalError("step size underflow in annealing integration")
    if status == 2:
        raise NumericalError(f"annealing integration exceeded {max_steps} steps")
    traj = Trajectory(times=ts, bloch=out.reshape(ts.size, N, 3), schedule=sched, steps=int(steps),
                      meta={"include_self": include_self, "orientation": Orientation(orientation).value,
                            "rtol": rtol, "atol": atol})
    drift = traj.norm_drift()
    if drift > norm_tol:
        raise NumericalError(f"Bloch norm drift {drift:.3e} exceeds {norm_tol:.1e}")
    return traj


def fidelity(final, exact):
    """``|sum_j z_exact_j z_j| / N``; accepts states, configurations or arrays."""
    z = final.z if isinstance(final, AnnealState) else np.asarray(final, dtype=float)
    if z.ndim == 2:
        z = z[:, 2]
    s = np.asarray(getattr(exact, "s", exact), dtype=float)
    if z.shape != s.shape:
        raise ValueError(f"size mismatch: {z.shape} vs {s.shape}")
    return float(abs(np.dot(s, z)) / s.size)


@dataclass(frozen=True)
class AdiabaticityReport:
    max_rate_x: float
    max_rate_z: float
    min_delta: float
    ratio_rate_x: float
    ratio_rate_z: float
    ratio_tau: float
    ratio_tau_prime: float
    threshold: float

    @property
    def violated(self):
        return max(self.ratio_rate_x, self.ratio_rate_z, self.ratio_tau, self.ratio_tau_prime) > self.threshold

    @property
    def passed(self):
        return not self.violated


def adiabaticity_check(trajectory, modes, threshold=0.1):
    """Compare spin precession rates and schedule rates with the lowest mode frequency."""
    if trajectory.times.size < 3:
        raise ValueError("adiabaticity check needs at least 3 samples")
    rates = np.gradient(trajectory.bloch, trajectory.times, axis=0)
    rx = float(np.abs(rates[:, :, 0]).max())
    rz = float(np.abs(rates[:, :, 2]).max())
    dmin = float(np.min(getattr(modes, "frequencies", modes)))
    s = trajectory.schedule
    return AdiabaticityReport(max_rate_x=rx, max_rate_z=rz, min_delta=dmin, ratio_rate_x=rx / dmin,
                              ratio_rate_z=rz / dmin, ratio_tau=1.0 / (s.tau_ev * dmin),
                              ratio_tau_prime=1.0 / (s.tau_ev_prime * dmin), threshold=threshold)


@dataclass(frozen=True)
class SweepRow:
    t_C: float
    tau_ev: float
    fidelity: float
    norm_drift: float
    steps: int


def _sweep_task(args):
    J, s, sched, kw = args
    traj = integrate_anneal(None, sched, J, **kw)
    return fidelity(traj.final, s), traj.norm_drift(), traj.steps


def anneal_sweep(base_cfg, t_C_values, tau_values, omega_x0=5.0, omega_z0=None, tau_ratio=10.0,
                 jobs=1, provenance="EXACT_MODE_SUM", **integrate_kw):
    """Final fidelity on a ``(t_C, tau_ev)`` grid against exact classical ground states."""
    tasks, keys = [], []
    for t_C in t_C_values:
        cfg = base_cfg.replace(t_C=float(t_C))
        J = couplings_for(cfg, provenance).J
        s = exact_ground_state(J, cfg.dk_d0).ground.s
        for tau in tau_values:
            sched = AnnealSchedule(tau_ev=float(tau), omega_x0=omega_x0, omega_z0=omega_z0,
                                   g0=cfg.g, tau_ev_prime=float(tau) / tau_ratio)
            tasks.append((J, s, sched, integrate_kw))
            keys.append((float(t_C), float(tau)))
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    return [SweepRow(t_C=k[0], tau_ev=k[1], fidelity=r[0], norm_drift=r[1], steps=r[2])
            for k, r in zip(keys, results)]
