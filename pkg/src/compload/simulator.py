"""Transient simulation of the six-component composite load.

A simulation plays a bus-voltage trace against the composite load and
records total active/reactive power consumption on the bus base. The
three-phase motor fleets are integrated with fixed-step RK4; stall
latches, restart ramps and undervoltage tripping update once per output
step; static components are evaluated algebraically.

The per-sample output step is ``SimConfig.dt``. Internally each step is
split into enough RK4 substeps to keep the fastest rotor time constant
resolved, so short sub-transient time constants do not destabilize the
integration. Substep count is derived per parameter draw and capped.

Voltage handling has two modes:

* trace-driven (default): the bus voltage follows the given trace.
  Stage voltages inside a step are taken from the exact scenario
  waveform when the trace carries one (see VoltageTrace.scenario),
  falling back to linear interpolation between samples for traces of
  unknown shape.
* feeder-coupled: the trace is the system-side source voltage behind a
  series impedance, and the bus voltage is solved each step from the
  load's own power draw by fixed-point iteration.

All simulations are deterministic: same inputs, same outputs, bit for
bit.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from ._jit import njit
from .load_models import (
    COMPONENT_ORDER,
    CompositeParams,
    ModelError,
    _elc_fvl_s,
    _im_deriv_s,
    _im_init_s,
    _im_pq_s,
    _sp_pq_s,
    _zip_pq_s,
)

N_COMPONENTS = len(COMPONENT_ORDER)

# Substepping: substep length is kept below this multiple of the
# smallest active sub-transient time constant, with a hard cap on the
# substep count.
_SUBSTEP_FACTOR = 1.4
_SUBSTEP_CAP = 16

# "No analytic waveform" marker for integrator calls outside the
# trace-driven path; flag slot (index 5) zero selects interpolation.
_NO_SEG = np.zeros(6)

# Any motor state beyond this magnitude is treated as divergence.
_DIVERGE_LIMIT = 1.0e6

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_NO_CONVERGENCE = 2
STATUS_INFEASIBLE = 3


class SimulationError(RuntimeError):
    """Simulation failed at runtime (divergence or algebraic non-convergence)."""


@dataclass(frozen=True)
class SimConfig:
    """Integration and network settings.

    dt is both the output sampling step and the base integration step.
    feeder_r/feeder_x form the series impedance used only when
    feeder_coupling is on.
    """

    dt: float = 1.0 / 240.0
    t_end: float = 5.0
    feeder_coupling: bool = False
    feeder_r: float = 0.04
    feeder_x: float = 0.04

    def __post_init__(self) -> None:
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be a positive finite number")
        if not (self.t_end > self.dt):
            raise ValueError("t_end must exceed dt")
        if self.feeder_coupling and (self.feeder_r < 0.0 or self.feeder_x < 0.0):
            raise ValueError("feeder impedance must be >= 0")

    @property
    def n_samples(self) -> int:
        return int(round(self.t_end / self.dt)) + 1


@dataclass(frozen=True)
class FaultScenario:
    """Voltage sag event: pre-fault level, fault level, timing, recovery.

    The fault holds v_fault from t_fault for duration_cycles cycles of a
    60 Hz system, then the voltage relaxes exponentially back toward
    v_pre with time constant recovery_tau. The trace is continuous at
    fault clearing.
    """

    v_pre: float = 1.0
    v_fault: float = 0.5
    t_fault: float = 0.15
    duration_cycles: float = 6.0
    recovery_tau: float = 0.05

    def __post_init__(self) -> None:
        if not (0.0 < self.v_pre <= 1.5):
            raise ValueError("v_pre must lie in (0, 1.5]")
        if not (0.0 <= self.v_fault <= self.v_pre):
            raise ValueError("v_fault must lie in [0, v_pre]")
        if self.t_fault < 0.0:
            raise ValueError("t_fault must be >= 0")
        if self.duration_cycles <= 0.0:
            raise ValueError("duration_cycles must be > 0")
        if self.recovery_tau <= 0.0:
            raise ValueError("recovery_tau must be > 0")

    @property
    def t_clear(self) -> float:
        return self.t_fault + self.duration_cycles / 60.0


@dataclass(frozen=True)
class VoltageTrace:
    """Bus (or source) voltage magnitude sampled on a uniform grid.

    A trace produced from a known FaultScenario carries that scenario,
    letting the integrator evaluate stage voltages from the exact
    piecewise waveform instead of interpolating between samples. Traces
    from external data leave it None.
    """

    dt: float
    samples: np.ndarray
    scenario: FaultScenario | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise ValueError("samples must be a 1-d array with at least 2 points")
        if not np.all(np.isfinite(self.samples)) or np.any(self.samples < 0.0):
            raise ValueError("voltage samples must be finite and >= 0")
        if self.scenario is not None and not isinstance(self.scenario, FaultScenario):
            raise ValueError("scenario must be a FaultScenario or None")

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt


@dataclass(frozen=True)
class PQTrace:
    """Total bus P/Q consumption sampled on a uniform grid (bus base)."""

    dt: float
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", np.asarray(self.p, dtype=np.float64))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=np.float64))
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.p.shape != self.q.shape or self.p.ndim != 1:
            raise ValueError("p and q must be 1-d arrays of equal length")

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.p.size) * self.dt


def make_fault_trace(scenario: FaultScenario, cfg: SimConfig) -> VoltageTrace:
    """Sample a fault scenario onto the simulation grid.

    The returned trace keeps a reference to the scenario, so the
    integrator can evaluate the exact waveform at intermediate stage
    times; the sampled values and the waveform agree at every grid
    point.
    """

    t = np.arange(cfg.n_samples) * cfg.dt
    v = np.full(t.shape, scenario.v_pre)
    t_clear = scenario.t_clear
    in_fault = (t >= scenario.t_fault) & (t <= t_clear)
    v[in_fault] = scenario.v_fault
    after = t > t_clear
    v[after] = scenario.v_pre - (scenario.v_pre - scenario.v_fault) * np.exp(
        -(t[after] - t_clear) / scenario.recovery_tau)
    return VoltageTrace(dt=cfg.dt, samples=v, scenario=scenario)


# ---------------------------------------------------------------------------
# parameter packing
# ---------------------------------------------------------------------------


def _pack_params(param_sets: list[CompositeParams], v_init: float):
    """Flatten parameter objects into arrays for the batch kernel.

    The ZIP reference voltage is pinned to the initial bus voltage so
    every component starts at its nominal draw, matching the motor
    initialization convention.
    """

    n = len(param_sets)
    mot_par = np.empty((n, 3, 8))
    sp_par = np.empty((n, 8))
    zip_par = np.empty((n, 9))
    elc_par = np.empty((n, 5))
    for i, ps in enumerate(param_sets):
        for j, m in enumerate((ps.ma, ps.mb, ps.mc)):
            mot_par[i, j] = (m.r_s, m.l_s, m.l_p, m.l_pp,
                             m.t_p0, m.t_pp0, m.h, m.e_trq)
        sp = ps.single_phase
        sp_par[i] = (sp.v_brk, sp.v_stall, sp.v_rst, sp.f_rst,
                     sp.r_stall, sp.x_stall, sp.p0, sp.q0)
        z = ps.zip
        zip_par[i] = (z.p1c, z.p2c, z.p3c, z.q1c, z.q2c, z.q3c,
                      z.p0, z.q0, v_init)
        e = ps.electronic
        elc_par[i] = (e.v_d1, e.v_d2, e.fr_cel, e.pf_elc, e.p0)
    return mot_par, sp_par, zip_par, elc_par


@njit(cache=True, nogil=True)
def _init_batch(comp, mot_par, v_init, mot_state, mot_active, status):
    n = comp.shape[0]
    for i in range(n):
        ok_all = True
        for j in range(3):
            if comp[i, j] <= 0.0:
                mot_active[i, j] = 0.0
                continue
            p = mot_par[i, j]
            e_qp, e_dp, e_qpp, e_dpp, slip, t_m0, ok = _im_init_s(
                p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0, v_init)
            if not ok:
                ok_all = False
                break
            mot_state[i, j, 0] = e_qp
            mot_state[i, j, 1] = e_dp
            mot_state[i, j, 2] = e_qpp
            mot_state[i, j, 3] = e_dpp
            mot_state[i, j, 4] = slip
            mot_state[i, j, 5] = t_m0
            mot_active[i, j] = 1.0
        if not ok_all:
            status[i] = STATUS_INFEASIBLE


@njit(cache=True, nogil=True)
def _rk4_motors(mot_par, mot_state, mot_active, v_d0, v_q0, v_d1, v_q1,
                t0, seg, dt, n_sub):
    # Integrate the three motor fleets of one sample over [t0, t0+dt].
    # Stage voltages come from the exact scenario waveform when seg
    # describes one (seg[5] != 0), otherwise from linear interpolation
    # between the endpoint voltages. The waveform segment is chosen by
    # the step midpoint, so a step never mixes two segments as long as
    # fault onset and clearing fall on grid points. Returns False on
    # divergence.
    h = dt / n_sub
    analytic = seg[5] != 0.0
    seg_exp = False
    const_v = 0.0
    if analytic:
        tm_step = t0 + 0.5 * dt
        if tm_step < seg[0]:
            const_v = seg[2]
        elif tm_step < seg[1]:
            const_v = seg[3]
        else:
            seg_exp = True
    for j in range(3):
        if mot_active[j] == 0.0:
            continue
        r_s = mot_par[j, 0]
        l_s = mot_par[j, 1]
        l_p = mot_par[j, 2]
        l_pp = mot_par[j, 3]
        t_p0 = mot_par[j, 4]
        t_pp0 = mot_par[j, 5]
        hh = mot_par[j, 6]
        e_trq = mot_par[j, 7]
        t_m0 = mot_state[j, 5]
        y0 = mot_state[j, 0]
        y1 = mot_state[j, 1]
        y2 = mot_state[j, 2]
        y3 = mot_state[j, 3]
        y4 = mot_state[j, 4]
        for ks in range(n_sub):
            f0 = ks / n_sub
            fm = (ks + 0.5) / n_sub
            f1 = (ks + 1.0) / n_sub
            if analytic:
                va_q = 0.0
                vm_q = 0.0
                vb_q = 0.0
                if seg_exp:
                    dv = seg[2] - seg[3]
                    va_d = seg[2] - dv * math.exp(
                        -(t0 + f0 * dt - seg[1]) / seg[4])
                    vm_d = seg[2] - dv * math.exp(
                        -(t0 + fm * dt - seg[1]) / seg[4])
                    vb_d = seg[2] - dv * math.exp(
                        -(t0 + f1 * dt - seg[1]) / seg[4])
                else:
                    va_d = const_v
                    vm_d = const_v
                    vb_d = const_v
            else:
                va_d = v_d0 + f0 * (v_d1 - v_d0)
                va_q = v_q0 + f0 * (v_q1 - v_q0)
                vm_d = v_d0 + fm * (v_d1 - v_d0)
                vm_q = v_q0 + fm * (v_q1 - v_q0)
                vb_d = v_d0 + f1 * (v_d1 - v_d0)
                vb_q = v_q0 + f1 * (v_q1 - v_q0)

            a0, a1, a2, a3, a4 = _im_deriv_s(
                y0, y1, y2, y3, y4, t_m0,
                r_s, l_s, l_p, l_pp, t_p0, t_pp0, hh, e_trq, va_d, va_q)
            b0, b1, b2, b3, b4 = _im_deriv_s(
                y0 + 0.5 * h * a0, y1 + 0.5 * h * a1, y2 + 0.5 * h * a2,
                y3 + 0.5 * h * a3, y4 + 0.5 * h * a4, t_m0,
                r_s, l_s, l_p, l_pp, t_p0, t_pp0, hh, e_trq, vm_d, vm_q)
            c0, c1, c2, c3, c4 = _im_deriv_s(
                y0 + 0.5 * h * b0, y1 + 0.5 * h * b1, y2 + 0.5 * h * b2,
                y3 + 0.5 * h * b3, y4 + 0.5 * h * b4, t_m0,
                r_s, l_s, l_p, l_pp, t_p0, t_pp0, hh, e_trq, vm_d, vm_q)
            d0, d1, d2, d3, d4 = _im_deriv_s(
                y0 + h * c0, y1 + h * c1, y2 + h * c2,
                y3 + h * c3, y4 + h * c4, t_m0,
                r_s, l_s, l_p, l_pp, t_p0, t_pp0, hh, e_trq, vb_d, vb_q)

            y0 += h / 6.0 * (a0 + 2.0 * b0 + 2.0 * c0 + d0)
            y1 += h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1)
            y2 += h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2)
            y3 += h / 6.0 * (a3 + 2.0 * b3 + 2.0 * c3 + d3)
            y4 += h / 6.0 * (a4 + 2.0 * b4 + 2.0 * c4 + d4)
            if y4 < -0.05:
                y4 = -0.05
            elif y4 > 1.0:
                y4 = 1.0
        bad = abs(y0) > _DIVERGE_LIMIT or abs(y1) > _DIVERGE_LIMIT \
            or abs(y2) > _DIVERGE_LIMIT or abs(y3) > _DIVERGE_LIMIT
        if bad or not (math.isfinite(y0) and math.isfinite(y1)
                       and math.isfinite(y2) and math.isfinite(y3)
                       and math.isfinite(y4)):
            return False
        mot_state[j, 0] = y0
        mot_state[j, 1] = y1
        mot_state[j, 2] = y2
        mot_state[j, 3] = y3
        mot_state[j, 4] = y4
    return True


@njit(cache=True, nogil=True)
def _bus_pq(comp, mot_par, mot_state, mot_active, sp_par, sp_state,
            zip_par, elc_par, elc_vmin, v_d, v_q, dt, update_states):
    # Total bus P/Q at voltage (v_d, v_q). With update_states the stall
    # latch, restart ramp and minimum-voltage trackers advance one step.
    v = math.sqrt(v_d * v_d + v_q * v_q)
    p_tot = 0.0
    q_tot = 0.0
    for j in range(3):
        if mot_active[j] == 0.0 or comp[j] == 0.0:
            continue
        p, q = _im_pq_s(mot_state[j, 2], mot_state[j, 3],
                        mot_par[j, 0], mot_par[j, 3], v_d, v_q)
        p_tot += comp[j] * p
        q_tot += comp[j] * q

    p, q, stalled, v_min, ramp = _sp_pq_s(
        v, sp_par[0], sp_par[1], sp_par[2], sp_par[3],
        sp_par[4], sp_par[5], sp_par[6], sp_par[7],
        sp_state[0], sp_state[1], sp_state[2], dt)
    if update_states:
        sp_state[0] = stalled
        sp_state[1] = v_min
        sp_state[2] = ramp
    p_tot += comp[3] * p
    q_tot += comp[3] * q

    ev = elc_vmin[0]
    if v < ev:
        ev = v
    if update_states:
        elc_vmin[0] = ev
    fvl = _elc_fvl_s(v, elc_par[0], elc_par[1], elc_par[2], ev)
    p = fvl * elc_par[4]
    pf = elc_par[3]
    q = math.sqrt(max(0.0, 1.0 - pf * pf)) / pf * p
    p_tot += comp[4] * p
    q_tot += comp[4] * q

    p, q = _zip_pq_s(v, zip_par[0], zip_par[1], zip_par[2],
                     zip_par[3], zip_par[4], zip_par[5],
                     zip_par[6], zip_par[7], zip_par[8])
    p_tot += comp[5] * p
    q_tot += comp[5] * q
    return p_tot, q_tot


@njit(cache=True, nogil=True)
def _substeps_for(mot_par, mot_active, comp, dt):
    t_min = 1.0e30
    any_active = False
    for j in range(3):
        if mot_active[j] != 0.0 and comp[j] > 0.0:
            any_active = True
            if mot_par[j, 5] < t_min:
                t_min = mot_par[j, 5]
    if not any_active:
        return 1
    n = int(math.ceil(dt / (_SUBSTEP_FACTOR * t_min)))
    if n < 1:
        n = 1
    if n > _SUBSTEP_CAP:
        n = _SUBSTEP_CAP
    return n


@njit(cache=True, nogil=True)
def _run_batch(comp, mot_par, mot_state, mot_active, sp_par, sp_state,
               zip_par, elc_par, elc_vmin, v_samples, seg, dt,
               p_out, q_out, status, fail_step):
    n = comp.shape[0]
    n_t = v_samples.shape[0]
    for i in range(n):
        if status[i] != STATUS_OK:
            for k in range(n_t):
                p_out[i, k] = np.nan
                q_out[i, k] = np.nan
            fail_step[i] = 0
            continue
        n_sub = _substeps_for(mot_par[i], mot_active[i], comp[i], dt)
        p0, q0 = _bus_pq(comp[i], mot_par[i], mot_state[i], mot_active[i],
                         sp_par[i], sp_state[i], zip_par[i], elc_par[i],
                         elc_vmin[i:i + 1], v_samples[0], 0.0, dt, True)
        p_out[i, 0] = p0
        q_out[i, 0] = q0
        for k in range(n_t - 1):
            ok = _rk4_motors(mot_par[i], mot_state[i], mot_active[i],
                             v_samples[k], 0.0, v_samples[k + 1], 0.0,
                             k * dt, seg, dt, n_sub)
            if not ok:
                status[i] = STATUS_DIVERGED
                fail_step[i] = k + 1
                for m in range(k + 1, n_t):
                    p_out[i, m] = np.nan
                    q_out[i, m] = np.nan
                break
            p1, q1 = _bus_pq(comp[i], mot_par[i], mot_state[i], mot_active[i],
                             sp_par[i], sp_state[i], zip_par[i], elc_par[i],
                             elc_vmin[i:i + 1], v_samples[k + 1], 0.0, dt, True)
            if not (math.isfinite(p1) and math.isfinite(q1)):
                status[i] = STATUS_DIVERGED
                fail_step[i] = k + 1
                for m in range(k + 1, n_t):
                    p_out[i, m] = np.nan
                    q_out[i, m] = np.nan
                break
            p_out[i, k + 1] = p1
            q_out[i, k + 1] = q1


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchResult:
    """Stacked simulation outputs: row i pairs composition i with draw i."""

    p: np.ndarray
    q: np.ndarray
    status: np.ndarray
    fail_step: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.status == STATUS_OK


def _as_composition(composition) -> np.ndarray:
    comp = np.asarray(composition, dtype=np.float64)
    if comp.shape != (N_COMPONENTS,):
        raise ValueError(f"composition must have shape ({N_COMPONENTS},)")
    if not np.all(np.isfinite(comp)) or np.any(comp < -1e-12):
        raise ValueError("composition fractions must be finite and >= 0")
    if abs(float(comp.sum()) - 1.0) > 1e-6:
        raise ValueError("composition fractions must sum to 1")
    return np.clip(comp, 0.0, None)


def _grid_voltage(trace: VoltageTrace, cfg: SimConfig) -> np.ndarray:
    n = cfg.n_samples
    if trace.dt == cfg.dt and trace.samples.size >= n:
        return np.ascontiguousarray(trace.samples[:n])
    t_grid = np.arange(n) * cfg.dt
    return np.interp(t_grid, trace.t, trace.samples,
                     left=trace.samples[0], right=trace.samples[-1])


def simulate_batch(compositions, param_sets: list[CompositeParams],
                   trace: VoltageTrace, cfg: SimConfig) -> BatchResult:
    """Simulate many (composition, parameter draw) pairs against one trace.

    compositions may be one vector of six fractions, broadcast to every
    draw, or an (n, 6) array paired row by row with param_sets. Failed
    rows are reported through status codes, never exceptions, so one bad
    draw cannot abort a batch. Feeder coupling is not supported here.
    """

    if cfg.feeder_coupling:
        raise ValueError("batch simulation supports only trace-driven voltage")
    if len(param_sets) == 0:
        raise ValueError("param_sets must be non-empty")
    comp = np.asarray(compositions, dtype=np.float64)
    if comp.ndim == 1:
        comp = np.broadcast_to(_as_composition(comp), (len(param_sets), N_COMPONENTS)).copy()
    else:
        if comp.shape != (len(param_sets), N_COMPONENTS):
            raise ValueError("compositions must match param_sets in length")
        comp = np.stack([_as_composition(c) for c in comp])

    v = _grid_voltage(trace, cfg)
    v_init = float(v[0])
    if v_init <= 0.0:
        raise ValueError("initial voltage must be > 0")
    sc = trace.scenario
    if sc is not None and trace.dt == cfg.dt:
        seg = np.array([sc.t_fault, sc.t_clear, sc.v_pre, sc.v_fault,
                        sc.recovery_tau, 1.0])
    else:
        seg = np.zeros(6)
    n = len(param_sets)
    n_t = v.size
    mot_par, sp_par, zip_par, elc_par = _pack_params(param_sets, v_init)
    mot_state = np.zeros((n, 3, 6))
    mot_active = np.zeros((n, 3))
    status = np.zeros(n, dtype=np.int64)
    fail_step = np.full(n, -1, dtype=np.int64)
    _init_batch(comp, mot_par, v_init, mot_state, mot_active, status)

    sp_state = np.zeros((n, 3))
    sp_state[:, 1] = v_init
    elc_vmin = np.full(n, v_init)
    p_out = np.empty((n, n_t))
    q_out = np.empty((n, n_t))
    _run_batch(comp, mot_par, mot_state, mot_active, sp_par, sp_state,
               zip_par, elc_par, elc_vmin, v, seg, cfg.dt,
               p_out, q_out, status, fail_step)
    return BatchResult(p=p_out, q=q_out, status=status, fail_step=fail_step)


def simulate(composition, params: CompositeParams, trace: VoltageTrace,
             cfg: SimConfig) -> PQTrace:
    """Simulate one composition/parameter set; returns the bus P/Q trace.

    Raises ModelError when a motor cannot carry its nominal load at the
    initial voltage and SimulationError when the integration diverges
    or the feeder algebra fails to converge.
    """

    if cfg.feeder_coupling:
        return _simulate_feeder(composition, params, trace, cfg)
    res = simulate_batch(composition, [params], trace, cfg)
    st = int(res.status[0])
    if st == STATUS_INFEASIBLE:
        raise ModelError("infeasible motor loading")
    if st != STATUS_OK:
        step = int(res.fail_step[0])
        raise SimulationError(
            f"simulation diverged at step {step} (t = {step * cfg.dt:.6f} s)")
    return PQTrace(dt=cfg.dt, p=res.p[0], q=res.q[0])


_FEEDER_TOL = 1e-8
_FEEDER_MAX_ITER = 20
_FEEDER_INIT_MAX_ITER = 50


def _rotate_motor_states(mot_state: np.ndarray, mot_active: np.ndarray,
                         theta: float) -> None:
    c, s = math.cos(theta), math.sin(theta)
    for j in range(3):
        if mot_active[j] == 0.0:
            continue
        e_qp, e_dp = mot_state[j, 0], mot_state[j, 1]
        e_qpp, e_dpp = mot_state[j, 2], mot_state[j, 3]
        mot_state[j, 0] = s * e_dp + c * e_qp
        mot_state[j, 1] = c * e_dp - s * e_qp
        mot_state[j, 2] = s * e_dpp + c * e_qpp
        mot_state[j, 3] = c * e_dpp - s * e_qpp


def _simulate_feeder(composition, params: CompositeParams, trace: VoltageTrace,
                     cfg: SimConfig) -> PQTrace:
    comp = _as_composition(composition)
    v_sys = _grid_voltage(trace, cfg)
    n_t = v_sys.size
    z = complex(cfg.feeder_r, cfg.feeder_x)

    mot_par, sp_par, zip_par, elc_par = _pack_params([params], float(v_sys[0]))
    mot_par = mot_par[0]
    sp_par = sp_par[0]
    zip_par = zip_par[0]
    elc_par = elc_par[0]

    # Joint initialization: the bus voltage depends on the load draw and
    # the load initialization depends on the bus voltage. Iterate the
    # two to a fixed point, re-initializing the motors at each voltage
    # magnitude and rotating their equilibria to the voltage angle.
    v_bus = complex(v_sys[0], 0.0)
    mot_state = np.zeros((3, 6))
    mot_active = np.zeros(3)
    for it in range(_FEEDER_INIT_MAX_ITER):
        vm = abs(v_bus)
        if vm <= 0.0:
            raise SimulationError("feeder initialization collapsed to zero voltage")
        mot_state[:] = 0.0
        mot_active[:] = 0.0
        status = np.zeros(1, dtype=np.int64)
        _init_batch(comp.reshape(1, -1), mot_par.reshape(1, 3, 8), vm,
                    mot_state.reshape(1, 3, 6), mot_active.reshape(1, 3), status)
        if status[0] != STATUS_OK:
            raise ModelError("infeasible motor loading")
        _rotate_motor_states(mot_state, mot_active, cmath.phase(v_bus))
        zip_par[8] = vm
        sp_state = np.array([0.0, vm, 0.0])
        elc_vmin = np.array([vm])
        p_tot, q_tot = _bus_pq(comp, mot_par, mot_state, mot_active,
                               sp_par, sp_state, zip_par, elc_par, elc_vmin,
                               v_bus.real, v_bus.imag, cfg.dt, False)
        s_load = complex(p_tot, q_tot)
        v_new = complex(v_sys[0], 0.0) - z * (s_load / v_bus).conjugate()
        if abs(v_new - v_bus) <= _FEEDER_TOL:
            v_bus = v_new
            break
        v_bus = v_new
    else:
        raise SimulationError("feeder initialization did not converge")

    # Re-anchor the stored equilibrium at the converged voltage so the
    # initial state is an exact fixed point of the converged network.
    vm = abs(v_bus)
    mot_state[:] = 0.0
    mot_active[:] = 0.0
    status = np.zeros(1, dtype=np.int64)
    _init_batch(comp.reshape(1, -1), mot_par.reshape(1, 3, 8), vm,
                mot_state.reshape(1, 3, 6), mot_active.reshape(1, 3), status)
    if status[0] != STATUS_OK:
        raise ModelError("infeasible motor loading")
    _rotate_motor_states(mot_state, mot_active, cmath.phase(v_bus))
    zip_par[8] = vm

    sp_state = np.array([0.0, abs(v_bus), 0.0])
    elc_vmin = np.array([abs(v_bus)])
    p_out = np.empty(n_t)
    q_out = np.empty(n_t)
    p_out[0], q_out[0] = _bus_pq(comp, mot_par, mot_state, mot_active,
                                 sp_par, sp_state, zip_par, elc_par, elc_vmin,
                                 v_bus.real, v_bus.imag, cfg.dt, True)

    n_sub = _substeps_for(mot_par, mot_active, comp, cfg.dt)
    for k in range(n_t - 1):
        # Motor states advance under the bus voltage solved at the start
        # of the step; the network is then re-solved at the step end.
        ok = _rk4_motors(mot_par, mot_state, mot_active,
                         v_bus.real, v_bus.imag, v_bus.real, v_bus.imag,
                         0.0, _NO_SEG, cfg.dt, n_sub)
        if not ok:
            raise SimulationError(
                f"simulation diverged at step {k + 1} (t = {(k + 1) * cfg.dt:.6f} s)")
        v_src = complex(v_sys[k + 1], 0.0)
        v_guess = v_bus
        converged = False
        for _ in range(_FEEDER_MAX_ITER):
            p_tot, q_tot = _bus_pq(comp, mot_par, mot_state, mot_active,
                                   sp_par, sp_state, zip_par, elc_par, elc_vmin,
                                   v_guess.real, v_guess.imag, cfg.dt, False)
            s_load = complex(p_tot, q_tot)
            v_next = v_src - z * (s_load / v_guess).conjugate()
            if abs(v_next - v_guess) <= _FEEDER_TOL:
                v_guess = v_next
                converged = True
                break
            v_guess = v_next
        if not converged:
            raise SimulationError(
                f"feeder voltage iteration did not converge at step {k + 1}")
        v_bus = v_guess
        p_out[k + 1], q_out[k + 1] = _bus_pq(
            comp, mot_par, mot_state, mot_active, sp_par, sp_state,
            zip_par, elc_par, elc_vmin, v_bus.real, v_bus.imag, cfg.dt, True)
        if not (math.isfinite(p_out[k + 1]) and math.isfinite(q_out[k + 1])):
            raise SimulationError(
                f"simulation diverged at step {k + 1} (t = {(k + 1) * cfg.dt:.6f} s)")
    return PQTrace(dt=cfg.dt, p=p_out, q=q_out)


# ---------------------------------------------------------------------------
# trace file IO
# ---------------------------------------------------------------------------


def write_voltage_csv(path, trace: VoltageTrace) -> None:
    data = np.column_stack([trace.t, trace.samples])
    np.savetxt(path, data, fmt="%.9g", delimiter=",", header="t,v", comments="")


def write_pq_csv(path, trace: PQTrace) -> None:
    data = np.column_stack([trace.t, trace.p, trace.q])
    np.savetxt(path, data, fmt="%.9g", delimiter=",", header="t,p,q", comments="")


def _read_csv(path, expected_header: str) -> np.ndarray:
    with open(path) as f:
        header = f.readline().strip()
    cols = [c.strip() for c in header.split(",")]
    if cols != expected_header.split(","):
        raise ValueError(f"{path}: expected header '{expected_header}', got '{header}'")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(cols):
        raise ValueError(f"{path}: expected {len(cols)} columns")
    if data.shape[0] < 2:
        raise ValueError(f"{path}: need at least 2 rows")
    if np.any(np.diff(data[:, 0]) <= 0.0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    return data


def read_voltage_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a t,v file; returns (t, v) on the file's own grid."""
    data = _read_csv(path, "t,v")
    return data[:, 0], data[:, 1]


def read_pq_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a t,p,q file; returns (t, p, q) on the file's own grid."""
    data = _read_csv(path, "t,p,q")
    return data[:, 0], data[:, 1], data[:, 2]


def resample_voltage(t: np.ndarray, v: np.ndarray, cfg: SimConfig) -> VoltageTrace:
    """Interpolate an arbitrary-grid voltage series onto the simulation grid.

    The series must cover [0, t_end]; outside its span the end values
    would be held, which silently distorts a partial recording.
    """

    if t[0] > 1e-12 or t[-1] < cfg.t_end - 1e-9:
        raise ValueError("series must cover the full simulation window")
    grid = np.arange(cfg.n_samples) * cfg.dt
    return VoltageTrace(dt=cfg.dt, samples=np.interp(grid, t, v))


def resample_pq(t: np.ndarray, p: np.ndarray, q: np.ndarray, cfg: SimConfig) -> PQTrace:
    """Interpolate an arbitrary-grid P/Q series onto the simulation grid."""

    if t[0] > 1e-12 or t[-1] < cfg.t_end - 1e-9:
        raise ValueError("series must cover the full simulation window")
    grid = np.arange(cfg.n_samples) * cfg.dt
    return PQTrace(dt=cfg.dt, p=np.interp(grid, t, p), q=np.interp(grid, t, q))


__all__ = [
    "N_COMPONENTS", "STATUS_OK", "STATUS_DIVERGED", "STATUS_NO_CONVERGENCE",
    "STATUS_INFEASIBLE", "SimulationError", "SimConfig", "FaultScenario",
    "VoltageTrace", "PQTrace", "BatchResult",
    "make_fault_trace", "simulate", "simulate_batch",
    "write_voltage_csv", "write_pq_csv", "read_voltage_csv", "read_pq_csv",
    "resample_voltage", "resample_pq",
]
