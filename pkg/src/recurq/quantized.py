"""Quantized sensing loop enforcing recurrence over a counted bit channel.

A sensor quantizes the state on a shrinking grid, ships the cell index as
a fixed-width bit vector, and a mirrored controller reconstructs the same
cell, control segment, and next grid without ever seeing the state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import Box, CompactSet, GridCover, distance, distance_many, grid
from .recurrence import estimate_L
from .systems import ControlSignal, ControlSystem, integrate, rk4_step

LN2 = math.log(2.0)


class ProtocolError(ValueError):
    """Bit vector inconsistent with the agreed grid size."""


class ControllerInvalidError(RuntimeError):
    """Feedback law failed its recurrence/return validation sweep."""


class GuaranteeViolationError(RuntimeError):
    """A run broke one of the loop's proven guarantees."""


class DeterminismError(RuntimeError):
    """Sensor and controller mirrors diverged; indicates a build bug."""


# --------------------------------------------------------------------------
# codec

def encode(index: int, cover_size: int) -> str:
    """Big-endian fixed-width bit string; width ceil(log2(cover_size))."""
    if cover_size < 1:
        raise ValueError("cover_size must be positive")
    if not 0 <= index < cover_size:
        raise ValueError(f"index {index} out of range [0, {cover_size})")
    width = (cover_size - 1).bit_length()
    return format(index, f"0{width}b") if width else ""


def decode(bits: str, cover_size: int) -> int:
    """Inverse of encode; rejects width mismatch and out-of-range values."""
    if cover_size < 1:
        raise ValueError("cover_size must be positive")
    width = (cover_size - 1).bit_length()
    if len(bits) != width:
        raise ProtocolError(f"expected {width} bits, got {len(bits)}")
    if bits and set(bits) - {"0", "1"}:
        raise ProtocolError(f"not a bit string: {bits!r}")
    index = int(bits, 2) if bits else 0
    if index >= cover_size:
        raise ProtocolError(f"decoded index {index} >= cover size {cover_size}")
    return index


@dataclass
class CountedChannel:
    """Ordered lossless in-process pipe whose observable is the bit count."""

    total_bits: int = 0
    log: list = field(default_factory=list)
    _queue: list = field(default_factory=list)

    def send(self, bits: str):
        self.total_bits += len(bits)
        self.log.append(bits)
        self._queue.append(bits)

    def recv(self) -> str:
        if not self._queue:
            raise ProtocolError("receive on an empty channel")
        return self._queue.pop(0)


# --------------------------------------------------------------------------
# reference controllers

def closed_loop(sys: ControlSystem, feedback: Callable, x0, duration: float,
                dt: float) -> tuple:
    """Simulate state feedback sampled-and-held every dt.

    Returns (states, u_values) with states of length K+1 and inputs of
    length K = duration/dt; both sides of the quantized loop call this
    one path, which is what makes them bit-identical.
    """
    K = int(round(duration / dt))
    x = np.asarray(x0, dtype=float).copy()
    states = np.empty((K + 1, sys.n))
    u_values = np.empty((K, sys.m))
    states[0] = x
    lo, hi = sys.U.lo, sys.U.hi
    fld = sys.field
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(K):
        u = np.minimum(np.maximum(np.atleast_1d(feedback(x)), lo), hi)
        u_values[k] = u
        k1 = fld(x, u)
        k2 = fld(x + h2 * k1, u)
        k3 = fld(x + h2 * k2, u)
        k4 = fld(x + dt * k3, u)
        x = x + h6 * (k1 + 2.0 * (k2 + k3) + k4)
        states[k + 1] = x
    return states, u_values


@dataclass
class RecurrenceController:
    """Validated return-to-Q feedback with its certification constants."""

    sys: ControlSystem
    Q: CompactSet
    tau: float
    feedback: Callable
    c_star: float
    envelope: Box
    eps_star: float
    L_tau: float
    validation_dt: float
    max_visit_gap: float

    def ttq(self, x) -> float:
        """First hit time of Q under the feedback, bisected to 1e-6 s."""
        x = np.asarray(x, dtype=float)
        if self.Q.contains(x, tol=1e-12):
            return 0.0
        dt = self.validation_dt
        horizon = 2.0 * self.tau
        states, u_values = closed_loop(self.sys, self.feedback, x, horizon, dt)
        for k in range(1, len(states)):
            if self.Q.contains(states[k], tol=1e-12):
                lo, hi = 0.0, dt
                base, u = states[k - 1], u_values[k - 1]
                while hi - lo > 1e-6:
                    mid = 0.5 * (lo + hi)
                    if self.Q.contains(rk4_step(self.sys.field, base, u, mid),
                                       tol=1e-12):
                        hi = mid
                    else:
                        lo = mid
                return (k - 1) * dt + hi
        raise ControllerInvalidError(
            f"feedback failed to return to Q from {x} within {horizon} s")


def _excursion_tails(times, states, dists, slack=1e-9):
    """Return-phase samples of each excursion: (state, time-to-entry) pairs.

    Walks each excursion backward from its re-entry and keeps the suffix
    along which the distance is nonincreasing; only on that suffix is the
    monotone-return property meaningful.
    """
    out = []
    n = len(dists)
    k = 0
    while k < n:
        if dists[k] <= 1e-12:
            k += 1
            continue
        start = k
        while k < n and dists[k] > 1e-12:
            k += 1
        if k >= n:
            break  # excursion truncated by the horizon; skip it
        entry_t = times[k]
        j = k - 1
        while j - 1 >= start and dists[j - 1] >= dists[j] - slack:
            j -= 1
        for idx in range(j, k):
            out.append((states[idx].copy(), entry_t - times[idx],
                        dists[idx]))
    return out


def build_feedback_controller(sys: ControlSystem, Q: CompactSet, tau: float,
                              eps: float, feedback: Callable,
                              grid_delta: float = 0.25, dt: float = 0.01,
                              horizon_factor: float = 6.0) -> RecurrenceController:
    """Certify a feedback law by a closed-loop sweep from a grid over Q.

    Checks that every swept trajectory revisits Q within tau, that the
    return phase of every excursion has nonincreasing distance, and
    estimates the Lipschitz constant of the time-to-return map.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    box = Q.bounding_box()
    centers = grid(box, grid_delta).centers()
    centers = [c for c in centers if Q.contains(c, tol=1e-12)]
    horizon = horizon_factor * tau
    failures = []
    reached_lo = np.array(box.lo, dtype=float)
    reached_hi = np.array(box.hi, dtype=float)
    tails = []
    max_gap = 0.0
    for c in centers:
        states, _ = closed_loop(sys, feedback, c, horizon, dt)
        times = dt * np.arange(len(states))
        dists = distance_many(states, Q)
        visits = times[dists <= 1e-9]
        if len(visits) == 0:
            failures.append((c, math.inf))
            continue
        gap = max(visits[0], float(np.max(np.diff(visits), initial=0.0)),
                  horizon - visits[-1])
        max_gap = max(max_gap, gap)
        if gap > tau + 2 * dt:
            failures.append((c, gap))
        reached_lo = np.minimum(reached_lo, states.min(axis=0))
        reached_hi = np.maximum(reached_hi, states.max(axis=0))
        tails.extend(_excursion_tails(times, states, dists))
    if failures:
        raise ControllerInvalidError(
            f"{len(failures)} grid states break tau-recurrence under the "
            f"feedback (worst gap {max(g for _, g in failures):.4g} > "
            f"tau={tau}); first: {failures[0][0]}")

    # Lipschitz constant of the time-to-return map from return-phase pairs
    c_star = 0.0
    if len(tails) >= 2:
        if len(tails) > 400:
            stride = len(tails) // 400 + 1
            tails = tails[::stride]
        pts = np.array([t[0] for t in tails])
        tts = np.array([t[1] for t in tails])
        seps = np.max(np.abs(pts[:, None, :] - pts[None, :, :]), axis=-1)
        dtt = np.abs(tts[:, None] - tts[None, :])
        mask = seps > max(4.0 * dt, 1e-3)
        if mask.any():
            c_star = float(np.max(dtt[mask] / seps[mask]))

    envelope = Box.from_bounds(reached_lo - eps, reached_hi + eps)
    L_tau = estimate_L(sys, envelope)
    return RecurrenceController(sys=sys, Q=Q, tau=tau, feedback=feedback,
                                c_star=c_star, envelope=envelope,
                                eps_star=eps, L_tau=L_tau, validation_dt=dt,
                                max_visit_gap=max_gap)


def reference_controller_double_integrator(Q: CompactSet, tau: float,
                                           eps: float, dt: float = 0.01,
                                           grid_delta: float = 0.25,
                                           ) -> RecurrenceController:
    """Saturated linear feedback u = clip(-x1 - 1.5*x2) for x'' = u."""
    from .systems import double_integrator
    if tau < 2.0:
        raise ValueError("the double integrator's unit box is not recurrent "
                         "for windows shorter than 2 s")
    sys = double_integrator()

    def feedback(x):
        return np.array((min(1.0, max(-1.0, -x[0] - 1.5 * x[1])),))

    return build_feedback_controller(sys, Q, tau, eps, feedback,
                                     grid_delta=grid_delta, dt=dt)


# --------------------------------------------------------------------------
# mirrored grid state

class GridMirror:
    """The grid/ball state both endpoints evolve in lockstep.

    Sensor and controller each own one instance; every update runs through
    this single code path so the two stay float-for-float identical.
    """

    def __init__(self, controller: RecurrenceController, S0: Box, eps: float,
                 tau: float, alpha: float, dt: float):
        self.controller = controller
        self.tau = tau
        self.alpha = alpha
        self.dt = dt
        self.L_tau = controller.L_tau
        self.granularity_factor = math.exp(-(self.L_tau + alpha) * tau)
        self.r = eps
        self.S = S0
        self.C = grid(S0, eps * self.granularity_factor)
        self.i = 0

    def advance(self, index: int) -> tuple:
        """Consume a cell index; return (q, u_values, fragment_states)."""
        q = self.C.center(index)
        frag, u_values = closed_loop(self.controller.sys,
                                     self.controller.feedback,
                                     q, self.tau, self.dt)
        r_next = self.r * math.exp(-self.alpha * self.tau)
        S_next = Box(frag[-1], np.full(self.C.dim, r_next))
        self.r = r_next
        self.S = S_next
        self.C = grid(S_next, r_next * self.granularity_factor)
        self.i += 1
        return q, u_values, frag

    def state_signature(self) -> tuple:
        return (self.i, self.r, tuple(self.S.center), tuple(self.S.radius),
                self.C.counts, tuple(self.C.first))


# --------------------------------------------------------------------------
# episodes

@dataclass(frozen=True)
class StepRecord:
    i: int
    x: np.ndarray
    q: np.ndarray
    index: int
    bits: str
    cover_size: int
    r: float
    S_center: np.ndarray
    S_radius: np.ndarray


@dataclass
class EpisodeLog:
    """Complete trace of one quantized-control episode."""

    config: dict
    steps: list
    frag_states: list     # per step: (K+1, n) closed-loop fragment from q_i
    frag_u: list          # per step: (K, m) transmitted-free control values
    plant_states: list    # per step: (K+1, n) true trajectory from x_i
    total_bits: int
    channel_log: list

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def hat_trajectory(self) -> tuple:
        """(times, states, distances-to-Q) of the concatenated fragments."""
        return _concat(self.frag_states, self.config["tau"], self.config["dt"])

    def plant_trajectory(self) -> tuple:
        return _concat(self.plant_states, self.config["tau"], self.config["dt"])

    def bits_until(self, T: float) -> int:
        """Bits sent at sensing instants i*tau <= T."""
        tau = self.config["tau"]
        return sum(len(s.bits) for s in self.steps if s.i * tau <= T + 1e-9)

    def to_jsonl(self, path: str):
        with open(path, "w") as fh:
            header = {"type": "header", "total_bits": self.total_bits,
                      **_jsonable(self.config)}
            fh.write(json.dumps(header) + "\n")
            for s in self.steps:
                fh.write(json.dumps({
                    "type": "step", "i": s.i, "x": list(s.x), "q": list(s.q),
                    "index": s.index, "bits": s.bits,
                    "cover_size": s.cover_size, "r": s.r,
                    "S_center": list(s.S_center),
                    "S_radius": list(s.S_radius)}) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _concat(fragments: list, tau: float, dt: float) -> tuple:
    times, states = [], []
    for i, frag in enumerate(fragments):
        t = i * tau + dt * np.arange(len(frag))
        times.append(t)
        states.append(frag)
    return np.concatenate(times), np.vstack(states)


def load_step_records(path: str) -> tuple:
    """Parse a JSONL episode log into (config, [StepRecord])."""
    config = None
    steps = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"malformed log record {lineno}: {exc}") from exc
            if rec.get("type") == "header":
                config = {k: v for k, v in rec.items() if k != "type"}
            elif rec.get("type") == "step":
                try:
                    steps.append(StepRecord(
                        i=rec["i"], x=np.array(rec["x"]), q=np.array(rec["q"]),
                        index=rec["index"], bits=rec["bits"],
                        cover_size=rec["cover_size"], r=rec["r"],
                        S_center=np.array(rec["S_center"]),
                        S_radius=np.array(rec["S_radius"])))
                except KeyError as exc:
                    raise ValueError(
                        f"malformed log record {lineno}: missing {exc}") from exc
            else:
                raise ValueError(f"malformed log record {lineno}: unknown type")
    if config is None:
        raise ValueError("log has no header record")
    return config, steps


def run_episode(sys: ControlSystem, Q: CompactSet,
                controller: RecurrenceController, x0, eps: float, tau: float,
                alpha: float, steps: int, dt: float,
                seed: int = 0) -> EpisodeLog:
    """Run Algorithm-style sensing/quantization for a fixed number of steps."""
    if len(Q.boxes) != 1:
        raise ValueError("episodes need Q given as a single box")
    if not (0 < eps <= controller.eps_star + 1e-12):
        raise ValueError(f"eps must lie in (0, {controller.eps_star}]")
    if abs(tau - controller.tau) > 1e-12:
        raise ValueError("tau must match the validated controller")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    if not Q.contains(x0, tol=1e-12):
        raise ValueError("x0 must lie in Q")

    sensor = GridMirror(controller, Q.boxes[0], eps, tau, alpha, dt)
    receiver = GridMirror(controller, Q.boxes[0], eps, tau, alpha, dt)
    channel = CountedChannel()

    config = {"system": sys.name, "Q_center": Q.boxes[0].center,
              "Q_radius": Q.boxes[0].radius, "eps": eps, "tau": tau,
              "alpha": alpha, "L_tau": controller.L_tau,
              "c_star": controller.c_star, "dt": dt, "steps": steps,
              "seed": seed, "x0": x0}
    log = EpisodeLog(config=config, steps=[], frag_states=[], frag_u=[],
                     plant_states=[], total_bits=0, channel_log=channel.log)

    x = x0.copy()
    for i in range(steps):
        S_i, C_i, r_i = sensor.S, sensor.C, sensor.r
        if not S_i.contains(x, tol=1e-9):
            raise GuaranteeViolationError(
                f"step {i}: sensed state {x} outside S_{i} "
                f"(center {S_i.center}, radius {S_i.radius[0]:.6g}); "
                f"violates x_i in S_i")
        q, index = C_i.quantize(x)
        bits = encode(index, C_i.size)
        channel.send(bits)

        rx_index = decode(channel.recv(), receiver.C.size)
        q_s, u_values, frag = sensor.advance(index)
        q_c, _, _ = receiver.advance(rx_index)
        if sensor.state_signature() != receiver.state_signature() or \
                not np.array_equal(q_s, q_c):
            raise DeterminismError(
                f"step {i}: sensor and controller mirrors diverged")

        signal = ControlSignal(dt, u_values)
        plant = integrate(sys, x, signal, tau, dt)

        log.steps.append(StepRecord(i=i, x=x.copy(), q=q, index=index,
                                    bits=bits, cover_size=C_i.size, r=r_i,
                                    S_center=S_i.center, S_radius=S_i.radius))
        log.frag_states.append(frag)
        log.frag_u.append(u_values)
        log.plant_states.append(plant.states)
        x = plant.end.copy()

    log.total_bits = channel.total_bits
    return log


# --------------------------------------------------------------------------
# rate accounting and guarantee verification

@dataclass(frozen=True)
class BitRateReport:
    measured_rate: float          # total_bits / (steps * tau)
    steady_bits_per_step: int
    steady_rate: float            # steady_bits_per_step / tau
    asymptote: float              # n * (L_tau + alpha) / ln 2
    ceiling_gap: float            # steady_rate - asymptote
    first_step_bits: int


def steady_state_cover_size(n: int, L_tau: float, alpha: float,
                            tau: float) -> int:
    """ceil(exp((L+alpha)*tau))^n, the post-transient grid size."""
    return int(math.ceil(math.exp((L_tau + alpha) * tau))) ** n


def bit_rate(log: EpisodeLog) -> BitRateReport:
    """Average and steady-state bit rates of an episode."""
    if log.n_steps < 10:
        raise ValueError("rate accounting needs at least 10 steps")
    tau = log.config["tau"]
    widths = [len(s.bits) for s in log.steps]
    steady = widths[1:]
    if len(set(steady)) != 1:
        raise RuntimeError(f"non-constant steady-state widths: {sorted(set(steady))}")
    n = len(log.steps[0].x)
    asymptote = n * (log.config["L_tau"] + log.config["alpha"]) / LN2
    steady_rate = steady[0] / tau
    return BitRateReport(measured_rate=log.total_bits / (log.n_steps * tau),
                         steady_bits_per_step=steady[0],
                         steady_rate=steady_rate, asymptote=asymptote,
                         ceiling_gap=steady_rate - asymptote,
                         first_step_bits=widths[0])


@dataclass(frozen=True)
class ClauseResult:
    passed: bool
    worst_margin: float
    detail: str = ""


@dataclass(frozen=True)
class GuaranteeReport:
    state_in_ball: ClauseResult       # x_i in S_i
    tracking: ClauseResult            # ||hat - true|| <= eps * exp(-alpha t)
    hat_recurrent: ClauseResult       # windowed recurrence of the fragments
    true_recurrent: ClauseResult      # same for the plant, doubled slack

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in (self.state_in_ball, self.tracking,
                                      self.hat_recurrent, self.true_recurrent))


def _windowed_recurrence_margin(times, dists, slacks, windows, starts,
                                T_end) -> float:
    """Worst (gap - window) over the per-start recurrence checks; <=0 passes."""
    worst = -math.inf
    for slack, window, t0 in zip(slacks, windows, starts):
        if T_end - t0 < window:
            continue
        mask = (times >= t0 - 1e-12) & (dists <= slack + 1e-9)
        visits = times[mask]
        if len(visits) == 0:
            return math.inf
        gap = max(visits[0] - t0,
                  float(np.max(np.diff(visits), initial=0.0)))
        tail_ok_at = T_end - window
        if visits[-1] < tail_ok_at - 1e-12:
            gap = max(gap, T_end - visits[-1])
        worst = max(worst, gap - window)
    return worst


def verify_guarantees(log: EpisodeLog, tracking_tol: float = 1e-6) -> GuaranteeReport:
    """Offline check of the tracking, containment-ball, and recurrence claims."""
    cfg = log.config
    eps, tau, alpha = cfg["eps"], cfg["tau"], cfg["alpha"]
    L, c_star = cfg["L_tau"], cfg["c_star"]
    Q = CompactSet.box(cfg["Q_center"], cfg["Q_radius"])

    # (a) sensed state inside the predicted ball
    worst_a = -math.inf
    detail_a = ""
    for s in log.steps:
        margin = float(np.max(np.abs(s.x - s.S_center) - s.S_radius))
        if margin > worst_a:
            worst_a, detail_a = margin, f"step {s.i}"
    clause_a = ClauseResult(worst_a <= 1e-9, worst_a, detail_a)

    # (b) tracking envelope between fragment and plant trajectories
    t_hat, x_hat = log.hat_trajectory()
    t_pl, x_pl = log.plant_trajectory()
    diffs = np.max(np.abs(x_hat - x_pl), axis=1)
    envelope = eps * np.exp(-alpha * t_hat)
    worst_b = float(np.max(diffs - envelope))
    clause_b = ClauseResult(worst_b <= tracking_tol, worst_b)

    # (c)/(d) windowed recurrence with geometrically shrinking slack
    d_hat = distance_many(x_hat, Q)
    d_pl = distance_many(x_pl, Q)
    idx = np.arange(log.n_steps)
    slacks = eps * np.exp(-idx * alpha * tau)
    windows = tau + c_star * eps * np.exp(-(idx * alpha + L) * tau)
    starts = idx * tau
    T_end = log.n_steps * tau
    worst_c = _windowed_recurrence_margin(t_hat, d_hat, slacks, windows,
                                          starts, T_end)
    worst_d = _windowed_recurrence_margin(t_pl, d_pl, 2.0 * slacks, windows,
                                          starts, T_end)
    clause_c = ClauseResult(worst_c <= 1e-9, worst_c)
    clause_d = ClauseResult(worst_d <= 1e-9, worst_d)
    return GuaranteeReport(state_in_ball=clause_a, tracking=clause_b,
                           hat_recurrent=clause_c, true_recurrent=clause_d)
