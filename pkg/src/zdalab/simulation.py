"""Exact piecewise-LTI propagation of the switched double-integrator network.

The stacked state is z = [x_1..x_n, v_1..v_n].  Position coupling enters the
velocity rows through the active Laplacian; an exponential attack input is
carried as an extra mode block so that every dwell interval is integrated by a
single matrix exponential, with no discretization error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .graphs import laplacian
from .scheduling import SwitchingSchedule, switching_signal

__all__ = [
    "SimulationError",
    "Segment",
    "Trace",
    "assemble_A",
    "assemble_C",
    "attack_injection",
    "propagate_interval",
    "simulate",
    "consensus_error",
    "trace_to_csv",
]

_TIME_EPS = 1e-9


class SimulationError(RuntimeError):
    """Numeric failure during propagation."""

    def __init__(self, message: str, blowup_time: float | None = None):
        super().__init__(message)
        self.blowup_time = blowup_time


def assemble_A(L: np.ndarray) -> np.ndarray:
    """Drift matrix [[0, I], [-L, 0]] of the position-coupled network."""
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    return np.block([[np.zeros((n, n)), np.eye(n)], [-L, np.zeros((n, n))]])


def assemble_C(M, n: int) -> np.ndarray:
    """Output matrix selecting the positions of the observed agents (1-based,
    ascending)."""
    M = sorted(M)
    if not M:
        raise ValueError("observed set must be nonempty")
    if any(not (1 <= i <= n) for i in M):
        raise ValueError(f"observed set {M} not within 1..{n}")
    C = np.zeros((len(M), 2 * n))
    for k, i in enumerate(M):
        C[k, i - 1] = 1.0
    return C


def attack_injection(K, n: int) -> np.ndarray:
    """Injection matrix routing attack channels into the velocity rows of the
    misbehaving agents (1-based, ascending)."""
    K = sorted(K)
    if not K:
        raise ValueError("attacked set must be nonempty")
    if any(not (1 <= i <= n) for i in K):
        raise ValueError(f"attacked set {K} not within 1..{n}")
    B = np.zeros((2 * n, len(K)))
    for k, i in enumerate(K):
        B[n + i - 1, k] = 1.0
    return B


def _mode_block(eta: complex) -> tuple[np.ndarray, np.ndarray]:
    """Generator and initial state of the scalar/rotational attack mode."""
    if abs(eta.imag) < 1e-300:
        return np.array([[eta.real]]), np.array([1.0])
    a, b = eta.real, eta.imag
    return np.array([[a, b], [-b, a]]), np.array([1.0, 0.0])


def _mode_gain(B_K: np.ndarray, g0: np.ndarray, eta: complex) -> np.ndarray:
    """Columns mapping mode state to the real injected signal."""
    g0 = np.asarray(g0)
    if abs(eta.imag) < 1e-300:
        return B_K @ g0.real.reshape(-1, 1)
    # Mode state evolves as e^{a t} (cos b t, -sin b t); Re(g0 e^{eta t}) is
    # then Re(g0) * w1 + Im(g0) * w2.
    return B_K @ np.column_stack([g0.real, g0.imag])


@dataclass(frozen=True)
class Segment:
    """One constant-dynamics stretch of a simulation: z_aug(t) =
    expm(A_aug (t - t0)) @ state0 for t in [t0, t1]."""

    t0: float
    t1: float
    topology_id: int
    attack_active: bool
    A_aug: np.ndarray
    state0: np.ndarray
    n: int

    def plant_state(self, t: float) -> np.ndarray:
        d = t - self.t0
        if d < -_TIME_EPS or t > self.t1 + _TIME_EPS:
            raise ValueError(f"time {t} outside segment [{self.t0}, {self.t1}]")
        return (expm(self.A_aug * d) @ self.state0)[: 2 * self.n]


@dataclass(frozen=True)
class Trace:
    """Time-indexed record of one simulation run.

    ``states`` holds the plant state per sample; ``attack_values`` the injected
    signal per channel (zero while the attack is dormant).  ``segments``
    carries the exact per-interval propagators so downstream consumers (the
    observer) can integrate against the continuous-time plant rather than
    interpolating samples.
    """

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    attack_values: np.ndarray
    topology_ids: np.ndarray
    observed: tuple
    attacked: tuple
    segments: tuple = field(repr=False, default=())

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2


def propagate_interval(
    A: np.ndarray,
    z0: np.ndarray,
    t0: float,
    dt: float,
    duration: float,
    attack=None,
    attack_active: bool = False,
    mode0: np.ndarray | None = None,
):
    """Exactly propagate dz/dt = A z (+ attack injection) over one interval.

    Samples at t0 + k*dt and at the interval end.  Returns (times, states,
    final_mode).  ``attack`` is a ZdaAttack; when ``attack_active`` the
    exponential mode runs from ``mode0`` (defaults to its value at the attack
    start).
    """
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    z0 = np.asarray(z0, dtype=float)
    n2 = z0.shape[0]
    if attack is not None and attack_active:
        Eta, mode_init = _mode_block(complex(attack.eta))
        if mode0 is None:
            mode0 = mode_init
        B_K = attack_injection(attack.attacked, n2 // 2)
        G = _mode_gain(B_K, attack.g0, complex(attack.eta))
        d = Eta.shape[0]
        A_aug = np.zeros((n2 + d, n2 + d))
        A_aug[:n2, :n2] = A
        A_aug[:n2, n2:] = G
        A_aug[n2:, n2:] = Eta
        state = np.concatenate([z0, mode0])
    else:
        A_aug = np.asarray(A, dtype=float)
        state = z0.copy()

    n_steps = int(np.floor(duration / dt + _TIME_EPS))
    offsets = [k * dt for k in range(n_steps + 1)]
    if duration - offsets[-1] > _TIME_EPS:
        offsets.append(duration)
    else:
        offsets[-1] = duration

    times = [t0]
    states = [state[:n2].copy()]
    cache: dict[float, np.ndarray] = {}
    for k in range(1, len(offsets)):
        step = offsets[k] - offsets[k - 1]
        E = cache.get(step)
        if E is None:
            E = expm(A_aug * step)
            cache[step] = E
        state = E @ state
        if not np.all(np.isfinite(state)):
            raise SimulationError(
                f"state became non-finite at t={t0 + offsets[k]:.6g}",
                blowup_time=t0 + offsets[k],
            )
        times.append(t0 + offsets[k])
        states.append(state[:n2].copy())
    final_mode = state[n2:] if state.shape[0] > n2 else None
    return np.array(times), np.array(states), final_mode


def _sample_grid(horizon: float, dt: float, breakpoints) -> np.ndarray:
    base = np.arange(0.0, horizon + dt * 0.5, dt)
    if base[-1] > horizon:
        base = base[:-1]
    pts = np.concatenate([base, np.asarray(sorted(breakpoints), dtype=float), [horizon]])
    pts = np.unique(pts)
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > _TIME_EPS:
            keep.append(p)
    keep[-1] = min(keep[-1], horizon)
    return np.array(keep)


def simulate(
    topologies,
    sched: SwitchingSchedule,
    z0: np.ndarray,
    attack=None,
    dt: float = 0.01,
    observed=(1,),
) -> Trace:
    """Run the switched network over the schedule horizon.

    The attack (if any) is dormant before its start time and injects
    g0 * e^{eta (t - rho)} into the misbehaving agents' velocity rows
    afterwards; the start instant is inserted as a sample so activation is
    sharp.  Raises SimulationError carrying the blow-up time if the state
    overflows; the partial trace is attached to the exception as ``.trace``.
    """
    topo_by_id = {t.id: t for t in topologies}
    A_by_id = {tid: assemble_A(laplacian(t)) for tid, t in topo_by_id.items()}
    z0 = np.asarray(z0, dtype=float)
    n = z0.shape[0] // 2
    C = assemble_C(observed, n)
    attacked = tuple(sorted(attack.attacked)) if attack is not None else ()
    if attack is not None and attack.rho < 0.0:
        raise ValueError("attack start time must be nonnegative")

    breakpoints = set(sched.switch_times)
    if attack is not None and 0.0 < attack.rho < sched.horizon:
        breakpoints.add(float(attack.rho))
    grid = _sample_grid(sched.horizon, dt, breakpoints)

    bounds = [0.0] + sorted(breakpoints) + [sched.horizon]
    times_all = [0.0]
    states_all = [z0.copy()]
    topo_all = []
    segments = []
    z = z0.copy()
    mode = None

    for k in range(len(bounds) - 1):
        a, b = bounds[k], bounds[k + 1]
        if b - a <= _TIME_EPS:
            continue
        tid = switching_signal(sched, a + _TIME_EPS)
        A = A_by_id[tid]
        active = attack is not None and a >= attack.rho - _TIME_EPS
        if active and mode is None:
            _, mode = _mode_block(complex(attack.eta))

        if active:
            Eta, _ = _mode_block(complex(attack.eta))
            B_K = attack_injection(attack.attacked, n)
            G = _mode_gain(B_K, attack.g0, complex(attack.eta))
            d = Eta.shape[0]
            A_aug = np.zeros((2 * n + d, 2 * n + d))
            A_aug[: 2 * n, : 2 * n] = A
            A_aug[: 2 * n, 2 * n :] = G
            A_aug[2 * n :, 2 * n :] = Eta
            state = np.concatenate([z, mode])
        else:
            A_aug = A
            state = z.copy()
        segments.append(
            Segment(
                t0=a,
                t1=b,
                topology_id=tid,
                attack_active=bool(active),
                A_aug=A_aug,
                state0=state.copy(),
                n=n,
            )
        )

        seg_samples = grid[(grid > a + _TIME_EPS) & (grid <= b + _TIME_EPS)]
        cache: dict[float, np.ndarray] = {}
        t = a
        for ts in seg_samples:
            step = ts - t
            E = cache.get(step)
            if E is None:
                E = expm(A_aug * step)
                cache[step] = E
            state = E @ state
            t = ts
            if not np.all(np.isfinite(state)):
                partial = _finalize_trace(
                    times_all, states_all, topo_all + [tid], C, observed,
                    attacked, attack, segments, n,
                )
                err = SimulationError(
                    f"instability overflow at t={ts:.6g}", blowup_time=float(ts)
                )
                err.trace = partial
                raise err
            times_all.append(float(ts))
            states_all.append(state[: 2 * n].copy())
            topo_all.append(tid)
        z = state[: 2 * n].copy()
        mode = state[2 * n :].copy() if active else mode

    # topology id per sample: active topology on the interval the sample ends
    topo_all = [switching_signal(sched, 0.0 + _TIME_EPS)] + topo_all
    return _finalize_trace(
        times_all, states_all, topo_all, C, observed, attacked, attack, segments, n
    )


def _finalize_trace(times, states, topo, C, observed, attacked, attack, segments, n):
    times = np.asarray(times)
    states = np.asarray(states)
    outputs = states @ C.T
    if attack is not None and attacked:
        vals = np.zeros((len(times), len(attacked)))
        post = times >= attack.rho - _TIME_EPS
        if np.any(post):
            g0 = np.asarray(attack.g0)
            e = np.exp(complex(attack.eta) * (times[post] - attack.rho))
            vals[post] = np.real(np.outer(e, g0))
    else:
        vals = np.zeros((len(times), len(attacked)))
    topo = np.asarray(topo[: len(times)])
    return Trace(
        times=times,
        states=states,
        outputs=outputs,
        attack_values=vals,
        topology_ids=topo,
        observed=tuple(sorted(observed)),
        attacked=attacked,
        segments=tuple(segments),
    )


def consensus_error(tr: Trace) -> dict:
    """Per-sample maximum pairwise position and velocity disagreement."""
    if len(tr.times) == 0:
        raise ValueError("trace is empty")
    n = tr.n
    x = tr.states[:, :n]
    v = tr.states[:, n:]
    return {
        "pos_disagreement": x.max(axis=1) - x.min(axis=1),
        "vel_disagreement": v.max(axis=1) - v.min(axis=1),
    }


def trace_to_csv(tr: Trace, path, residuals: np.ndarray | None = None) -> None:
    """Write the trace as CSV with deterministic 17-significant-digit
    formatting.  Columns: t, topology, x*, v*, y*, r*, attack*."""
    n = tr.n
    cols = ["t", "topology"]
    cols += [f"x{i}" for i in range(1, n + 1)]
    cols += [f"v{i}" for i in range(1, n + 1)]
    cols += [f"y{i}" for i in tr.observed]
    if residuals is not None:
        cols += [f"r{i}" for i in tr.observed]
    cols += [f"attack{i}" for i in tr.attacked]

    def fmt(v: float) -> str:
        return format(float(v), ".17g")

    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(tr.times)):
            row = [fmt(tr.times[k]), str(int(tr.topology_ids[k]))]
            row += [fmt(v) for v in tr.states[k]]
            row += [fmt(v) for v in tr.outputs[k]]
            if residuals is not None:
                row += [fmt(v) for v in residuals[k]]
            row += [fmt(v) for v in tr.attack_values[k]]
            fh.write(",".join(row) + "\n")
