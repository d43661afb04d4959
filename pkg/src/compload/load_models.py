"""Composite-load component models and parameter sampling.

An aggregate distribution load is modelled as six parallel components
behind one bus:

* ``ma``   three-phase induction motor fleet, constant mechanical torque
* ``mb``   three-phase induction motor fleet, speed-squared torque, high inertia
* ``mc``   three-phase induction motor fleet, speed-squared torque, low inertia
* ``single_phase``  single-phase compressor motor fleet with stall and restart
* ``electronic``    power-electronic load with undervoltage tripping
* ``zip``  static load with constant-impedance/current/power terms

Every function here is pure: motor dynamics are exposed as ODE
right-hand sides over value types, the remaining components are
algebraic P/Q characteristics. Each component is expressed in per-unit
on its own base, sized so the component draws 1.0 pu active power at
nominal voltage; scaling by bus-level composition fractions happens in
the simulator.

Induction machine algebra
-------------------------
The three-phase motors are a fifth-order double-cage machine in the
synchronously rotating dq frame with states
``(e_qp, e_dp, e_qpp, e_dpp, slip)``: transient voltage pair,
sub-transient voltage pair, rotor slip. Stator currents follow from
the sub-transient circuit::

    den = r_s^2 + l_pp^2
    i_d = (r_s (v_d - e_dpp) + l_pp (v_q - e_qpp)) / den
    i_q = (r_s (v_q - e_qpp) - l_pp (v_d - e_dpp)) / den

The electrical state derivatives, with ``w0`` the synchronous speed in
rad/s and ``c = (l_s - l_p)/t_p0 + (l_p - l_pp)/t_pp0``::

    d e_qp /dt = -(e_qp - (l_s - l_p) i_d) / t_p0 - w0 s e_dp
    d e_dp /dt = -(e_dp + (l_s - l_p) i_q) / t_p0 + w0 s e_qp
    d e_qpp/dt = (1/t_pp0 - 1/t_p0) e_qp
                 + c i_d - e_qpp / t_pp0 - w0 s e_dpp
    d e_dpp/dt = (1/t_pp0 - 1/t_p0) e_dp
                 - c i_q - e_dpp / t_pp0 + w0 s e_qpp

The sub-transient pair equals the transient dynamics plus first-order
relaxation of the second cage; expanded to the form above the
transient-speed voltage terms cancel. The sign orientation is pinned
by two steady-state facts of a consuming machine: at zero slip the
load reduces to the magnetizing branch (effective impedance
``r_s + j l_s``), and the effective resistance grows with slip along
the running branch. Rotor acceleration balances the electrical torque
``te = e_dpp i_d + e_qpp i_q`` against a mechanical torque
``t_m0 (1 - s)^e_trq``::

    d s/dt = (t_m0 (1 - s)^e_trq - te) / (2 h)

With ``a = v^2 - v_d e_dpp - v_q e_qpp`` and
``b = v_d e_qpp - v_q e_dpp``, power drawn from the bus is::

    p = (r_s a - l_pp b) / den
    q = (l_pp a + r_s b) / den

which is exactly the complex power V conj(I) of the stator branch.
Positive values mean consumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from ._jit import njit

OMEGA_SYNC = 2.0 * math.pi * 60.0

# Component order used for composition vectors everywhere in the package.
COMPONENT_ORDER = ("ma", "mb", "mc", "single_phase", "electronic", "zip")

# Seconds for the single-phase restart ramp to run 0 -> 1 once the bus
# voltage holds above v_rst.
RESTART_RAMP_SECONDS = 0.1

# Slip is clamped to this interval after every integration step.
SLIP_MIN = -0.05
SLIP_MAX = 1.0


class ModelError(ValueError):
    """Invalid model input or infeasible operating point."""


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IMParams:
    """Three-phase induction motor parameters, per-unit on the motor base.

    e_trq selects the mechanical torque exponent: 0 for constant torque,
    2 for speed-squared torque.
    """

    r_s: float
    l_s: float
    l_p: float
    l_pp: float
    t_p0: float
    t_pp0: float
    h: float
    e_trq: float

    def __post_init__(self) -> None:
        for name in ("r_s", "l_s", "l_p", "l_pp", "t_p0", "t_pp0", "h"):
            if not getattr(self, name) > 0.0:
                raise ModelError(f"IMParams.{name} must be > 0")
        if not (self.l_s > self.l_p > self.l_pp):
            raise ModelError("IMParams requires l_s > l_p > l_pp")
        if not self.t_p0 > self.t_pp0:
            raise ModelError("IMParams requires t_p0 > t_pp0")
        if self.e_trq not in (0.0, 2.0, 0, 2):
            raise ModelError("IMParams.e_trq must be 0 or 2")


@dataclass(frozen=True)
class IMState:
    """Induction motor dynamic state plus the torque base set at init."""

    e_qp: float
    e_dp: float
    e_qpp: float
    e_dpp: float
    slip: float
    t_m0: float

    def __post_init__(self) -> None:
        vals = (self.e_qp, self.e_dp, self.e_qpp, self.e_dpp, self.slip, self.t_m0)
        if not all(math.isfinite(v) for v in vals):
            raise ModelError("numerical divergence")
        if not (SLIP_MIN - 1e-9 <= self.slip <= SLIP_MAX + 1e-9):
            raise ModelError("slip outside clamp interval")


@dataclass(frozen=True)
class SinglePhaseParams:
    """Single-phase compressor motor fleet parameters (own base)."""

    v_brk: float
    v_stall: float
    v_rst: float
    f_rst: float
    r_stall: float
    x_stall: float
    p0: float
    q0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.v_stall < self.v_brk < self.v_rst):
            raise ModelError("requires v_stall < v_brk < v_rst")
        if not (0.0 <= self.f_rst <= 1.0):
            raise ModelError("f_rst must lie in [0, 1]")
        if not (self.r_stall > 0.0 and self.x_stall > 0.0):
            raise ModelError("stall impedance must be > 0")
        if self.p0 <= 0.0:
            raise ModelError("p0 must be > 0")


@dataclass(frozen=True)
class SinglePhaseState:
    """Latch state of the single-phase fleet.

    stalled latches True the first time voltage drops below v_stall.
    v_min_seen is the lowest bus voltage seen so far. restart_ramp runs
    0 -> 1 over RESTART_RAMP_SECONDS while stalled and v > v_rst, and
    freezes otherwise; it never decreases.
    """

    stalled: bool = False
    v_min_seen: float = 1.0
    restart_ramp: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.restart_ramp <= 1.0):
            raise ModelError("restart_ramp must lie in [0, 1]")
        if self.v_min_seen < 0.0:
            raise ModelError("v_min_seen must be >= 0")


@dataclass(frozen=True)
class ZipParams:
    """Static ZIP load: impedance/current/power mix on both P and Q."""

    p1c: float
    p2c: float
    p3c: float
    q1c: float
    q2c: float
    q3c: float
    p0: float
    q0: float
    v0: float

    def __post_init__(self) -> None:
        for trio, label in (((self.p1c, self.p2c, self.p3c), "p"),
                            ((self.q1c, self.q2c, self.q3c), "q")):
            if abs(sum(trio) - 1.0) > 1e-9:
                raise ModelError(f"ZipParams {label}-coefficients must sum to 1")
            if any(c < -1e-12 or c > 1.0 + 1e-12 for c in trio):
                raise ModelError(f"ZipParams {label}-coefficients must lie in [0, 1]")
        if self.v0 <= 0.0:
            raise ModelError("v0 must be > 0")


@dataclass(frozen=True)
class ElectronicParams:
    """Electronic load with linear undervoltage tripping.

    Output is p0 scaled by the connected fraction fvl. fvl is 1 at or
    above v_d1 with no prior trip, falls linearly to 0 at v_d2 as
    voltage drops, and on recovery follows a partial-reconnection line
    controlled by fr_cel and the minimum voltage seen.
    """

    v_d1: float
    v_d2: float
    fr_cel: float
    pf_elc: float
    p0: float

    def __post_init__(self) -> None:
        if not (0.0 < self.v_d2 < self.v_d1):
            raise ModelError("requires 0 < v_d2 < v_d1")
        if not (0.0 <= self.fr_cel <= 1.0):
            raise ModelError("fr_cel must lie in [0, 1]")
        if not (0.0 < self.pf_elc <= 1.0):
            raise ModelError("pf_elc must lie in (0, 1]")


@dataclass(frozen=True)
class CompositeParams:
    """One full parameter draw for all six components."""

    ma: IMParams
    mb: IMParams
    mc: IMParams
    single_phase: SinglePhaseParams
    zip: ZipParams
    electronic: ElectronicParams

    def to_dict(self) -> dict:
        out: dict = {}
        for f in fields(self):
            sub = getattr(self, f.name)
            out[f.name] = {g.name: getattr(sub, g.name) for g in fields(sub)}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "CompositeParams":
        return cls(
            ma=IMParams(**d["ma"]),
            mb=IMParams(**d["mb"]),
            mc=IMParams(**d["mc"]),
            single_phase=SinglePhaseParams(**d["single_phase"]),
            zip=ZipParams(**d["zip"]),
            electronic=ElectronicParams(**d["electronic"]),
        )


# ---------------------------------------------------------------------------
# parameter ranges and sampling
# ---------------------------------------------------------------------------

# Reactive draw of the single-phase and ZIP components at nominal
# voltage corresponds to a 0.97 lagging power factor.
_Q0_PF97 = math.tan(math.acos(0.97))

_MOTOR_FIELDS = ("r_s", "l_s", "l_p", "l_pp", "t_p0", "t_pp0", "h", "e_trq")
_SP_FIELDS = ("v_brk", "v_stall", "v_rst", "f_rst", "r_stall", "x_stall", "p0", "q0")
_ZIP_FIELDS = ("p1c", "p2c", "q1c", "q2c", "p0", "q0", "v0")
_ELC_FIELDS = ("v_d1", "v_d2", "fr_cel", "pf_elc", "p0")


def _uniform_dict(**kw) -> dict:
    return {k: (float(v[0]), float(v[1])) for k, v in kw.items()}


@dataclass(frozen=True)
class ParamRanges:
    """Closed sampling intervals per parameter per component."""

    ma: dict = field(default_factory=dict)
    mb: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    single_phase: dict = field(default_factory=dict)
    zip: dict = field(default_factory=dict)
    electronic: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for f in fields(self):
            for key, (lo, hi) in getattr(self, f.name).items():
                if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                    raise ModelError(f"range {f.name}.{key} must satisfy lower <= upper")

    def to_dict(self) -> dict:
        return {f.name: {k: [lo, hi] for k, (lo, hi) in getattr(self, f.name).items()}
                for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamRanges":
        kw = {name: {k: (float(v[0]), float(v[1])) for k, v in sub.items()}
              for name, sub in d.items()}
        return cls(**kw)


def default_param_ranges() -> ParamRanges:
    """Sampling intervals for all components.

    Motor electrical constants, stall thresholds and trip thresholds
    follow common ranges for aggregate distribution-feeder fleets.
    Stall impedances, the electronic reconnection fraction and the
    nominal operating points are not standardized; the intervals chosen
    here are fixed so that draws stay physically sensible.
    """

    motor_a = _uniform_dict(
        r_s=(0.03, 0.05), l_s=(1.50, 2.00), l_p=(0.10, 0.15), l_pp=(0.10, 0.20),
        t_p0=(0.09, 0.10), t_pp0=(0.001, 0.002), h=(0.10, 0.20), e_trq=(0.0, 0.0),
    )
    motor_b = _uniform_dict(
        r_s=(0.03, 0.05), l_s=(1.50, 2.00), l_p=(0.17, 0.22), l_pp=(0.12, 0.15),
        t_p0=(0.18, 0.22), t_pp0=(0.002, 0.003), h=(0.25, 1.00), e_trq=(2.0, 2.0),
    )
    motor_c = _uniform_dict(
        r_s=(0.03, 0.05), l_s=(1.50, 2.00), l_p=(0.17, 0.22), l_pp=(0.12, 0.15),
        t_p0=(0.18, 0.22), t_pp0=(0.002, 0.003), h=(0.10, 0.20), e_trq=(2.0, 2.0),
    )
    single_phase = _uniform_dict(
        v_brk=(0.85, 0.90), v_rst=(0.92, 0.96), v_stall=(0.55, 0.65),
        f_rst=(0.15, 0.30), r_stall=(0.08, 0.12), x_stall=(0.08, 0.12),
        p0=(1.0, 1.0), q0=(_Q0_PF97, _Q0_PF97),
    )
    zip_load = _uniform_dict(
        p1c=(0.0, 1.0), p2c=(0.0, 1.0), q1c=(0.0, 1.0), q2c=(0.0, 1.0),
        p0=(1.0, 1.0), q0=(_Q0_PF97, _Q0_PF97), v0=(1.0, 1.0),
    )
    electronic = _uniform_dict(
        v_d1=(0.60, 0.70), v_d2=(0.50, 0.55), fr_cel=(0.50, 0.90),
        pf_elc=(1.0, 1.0), p0=(1.0, 1.0),
    )
    return ParamRanges(ma=motor_a, mb=motor_b, mc=motor_c,
                       single_phase=single_phase, zip=zip_load,
                       electronic=electronic)


def _draw(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    if lo == hi:
        return lo
    return float(rng.uniform(lo, hi))


def _sample_motor(rng: np.random.Generator, ranges: dict) -> IMParams:
    vals = {k: _draw(rng, ranges[k]) for k in _MOTOR_FIELDS}
    # l_p > l_pp is a type invariant; ranges may overlap, so redraw the pair.
    tries = 0
    while vals["l_pp"] >= vals["l_p"]:
        vals["l_p"] = _draw(rng, ranges["l_p"])
        vals["l_pp"] = _draw(rng, ranges["l_pp"])
        tries += 1
        if tries > 1000:
            raise ModelError("cannot satisfy l_p > l_pp within the given ranges")
    return IMParams(**vals)


def _sample_simplex_pair(rng: np.random.Generator, b1, b2) -> tuple[float, float, float]:
    # Two coefficients drawn, third forced; redraw while the forced one
    # leaves [0, 1].
    tries = 0
    while True:
        a = _draw(rng, b1)
        b = _draw(rng, b2)
        c = 1.0 - a - b
        if 0.0 <= c <= 1.0:
            return a, b, c
        tries += 1
        if tries > 10000:
            raise ModelError("cannot satisfy the coefficient simplex within the given ranges")


def sample_params(ranges: ParamRanges, seed) -> CompositeParams:
    """Draw one full component parameter set.

    seed may be an int or a numpy Generator. Draw order is fixed, so a
    given seed always produces the same parameter set.
    """

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    ma = _sample_motor(rng, ranges.ma)
    mb = _sample_motor(rng, ranges.mb)
    mc = _sample_motor(rng, ranges.mc)

    r = ranges.single_phase
    sp = SinglePhaseParams(
        v_brk=_draw(rng, r["v_brk"]), v_stall=_draw(rng, r["v_stall"]),
        v_rst=_draw(rng, r["v_rst"]), f_rst=_draw(rng, r["f_rst"]),
        r_stall=_draw(rng, r["r_stall"]), x_stall=_draw(rng, r["x_stall"]),
        p0=_draw(rng, r["p0"]), q0=_draw(rng, r["q0"]),
    )

    r = ranges.zip
    p1c, p2c, p3c = _sample_simplex_pair(rng, r["p1c"], r["p2c"])
    q1c, q2c, q3c = _sample_simplex_pair(rng, r["q1c"], r["q2c"])
    zp = ZipParams(p1c=p1c, p2c=p2c, p3c=p3c, q1c=q1c, q2c=q2c, q3c=q3c,
                   p0=_draw(rng, r["p0"]), q0=_draw(rng, r["q0"]),
                   v0=_draw(rng, r["v0"]))

    r = ranges.electronic
    el = ElectronicParams(v_d1=_draw(rng, r["v_d1"]), v_d2=_draw(rng, r["v_d2"]),
                          fr_cel=_draw(rng, r["fr_cel"]), pf_elc=_draw(rng, r["pf_elc"]),
                          p0=_draw(rng, r["p0"]))

    return CompositeParams(ma=ma, mb=mb, mc=mc, single_phase=sp, zip=zp, electronic=el)


# ---------------------------------------------------------------------------
# scalar kernels (numba-compatible, shared with the simulator)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _im_currents_s(e_qpp, e_dpp, r_s, l_pp, v_d, v_q):
    den = r_s * r_s + l_pp * l_pp
    i_d = (r_s * (v_d - e_dpp) + l_pp * (v_q - e_qpp)) / den
    i_q = (r_s * (v_q - e_qpp) - l_pp * (v_d - e_dpp)) / den
    return i_d, i_q


@njit(cache=True, nogil=True)
def _im_pq_s(e_qpp, e_dpp, r_s, l_pp, v_d, v_q):
    den = r_s * r_s + l_pp * l_pp
    vv = v_d * v_d + v_q * v_q
    a = vv - v_d * e_dpp - v_q * e_qpp
    b = v_d * e_qpp - v_q * e_dpp
    p = (r_s * a - l_pp * b) / den
    q = (l_pp * a + r_s * b) / den
    return p, q


@njit(cache=True, nogil=True)
def _im_deriv_s(e_qp, e_dp, e_qpp, e_dpp, slip, t_m0,
                r_s, l_s, l_p, l_pp, t_p0, t_pp0, h, e_trq, v_d, v_q):
    i_d, i_q = _im_currents_s(e_qpp, e_dpp, r_s, l_pp, v_d, v_q)
    ws = OMEGA_SYNC * slip
    a = l_s - l_p
    c = a / t_p0 + (l_p - l_pp) / t_pp0
    k_diff = 1.0 / t_pp0 - 1.0 / t_p0

    d_eqp = -(e_qp - a * i_d) / t_p0 - ws * e_dp
    d_edp = -(e_dp + a * i_q) / t_p0 + ws * e_qp
    d_eqpp = k_diff * e_qp + c * i_d - e_qpp / t_pp0 - ws * e_dpp
    d_edpp = k_diff * e_dp - c * i_q - e_dpp / t_pp0 + ws * e_qpp

    te = e_dpp * i_d + e_qpp * i_q
    base = 1.0 - slip
    if base < 0.0:
        base = 0.0
    tm = t_m0 * base ** e_trq
    d_slip = (tm - te) / (2.0 * h)
    return d_eqp, d_edp, d_eqpp, d_edpp, d_slip


@njit(cache=True, nogil=True)
def _solve4(a, b):
    # Gaussian elimination with partial pivoting on a 4x4 system.
    # a and b are modified in place; the solution lands in b.
    for col in range(4):
        piv = col
        best = abs(a[col, col])
        for r in range(col + 1, 4):
            if abs(a[r, col]) > best:
                best = abs(a[r, col])
                piv = r
        if piv != col:
            for k in range(4):
                tmp = a[col, k]
                a[col, k] = a[piv, k]
                a[piv, k] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        d = a[col, col]
        for r in range(col + 1, 4):
            f = a[r, col] / d
            if f != 0.0:
                for k in range(col, 4):
                    a[r, k] -= f * a[col, k]
                b[r] -= f * b[col]
    for r in range(3, -1, -1):
        s = b[r]
        for k in range(r + 1, 4):
            s -= a[r, k] * b[k]
        b[r] = s / a[r, r]
    return b


@njit(cache=True, nogil=True)
def _im_equilibrium_s(slip, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v_d, v_q):
    # The electrical derivatives are affine in the voltage states for a
    # fixed slip and terminal voltage. Probe the affine map with unit
    # vectors and solve the resulting 4x4 system for the equilibrium.
    a = np.zeros((4, 4))
    b = np.zeros(4)
    d0 = _im_deriv_s(0.0, 0.0, 0.0, 0.0, slip, 0.0,
                     r_s, l_s, l_p, l_pp, t_p0, t_pp0, 1.0, 0.0, v_d, v_q)
    for k in range(4):
        b[k] = d0[k]
    for j in range(4):
        e0 = 1.0 if j == 0 else 0.0
        e1 = 1.0 if j == 1 else 0.0
        e2 = 1.0 if j == 2 else 0.0
        e3 = 1.0 if j == 3 else 0.0
        dj = _im_deriv_s(e0, e1, e2, e3, slip, 0.0,
                         r_s, l_s, l_p, l_pp, t_p0, t_pp0, 1.0, 0.0, v_d, v_q)
        for k in range(4):
            a[k, j] = dj[k] - b[k]
    rhs = np.empty(4)
    for k in range(4):
        rhs[k] = -b[k]
    x = _solve4(a, rhs)
    return x[0], x[1], x[2], x[3]


@njit(cache=True, nogil=True)
def _im_ss_power_s(slip, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v0):
    e_qp, e_dp, e_qpp, e_dpp = _im_equilibrium_s(
        slip, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v0, 0.0)
    p, q = _im_pq_s(e_qpp, e_dpp, r_s, l_pp, v0, 0.0)
    return p


_INIT_GRID_N = 2000
_INIT_SLIP_LO = 1e-6
_INIT_SLIP_HI = 0.3


@njit(cache=True, nogil=True)
def _im_init_s(r_s, l_s, l_p, l_pp, t_p0, t_pp0, h, e_trq, p_target, v0):
    # Returns (e_qp, e_dp, e_qpp, e_dpp, slip, t_m0, ok).
    if p_target <= 1e-6 or v0 <= 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False
    ds = (_INIT_SLIP_HI - _INIT_SLIP_LO) / (_INIT_GRID_N - 1)
    s_lo = _INIT_SLIP_LO
    p_lo = _im_ss_power_s(s_lo, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v0)
    if p_lo >= p_target:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False
    found = False
    s_hi = s_lo
    p_hi = p_lo
    for k in range(1, _INIT_GRID_N):
        s_hi = _INIT_SLIP_LO + k * ds
        p_hi = _im_ss_power_s(s_hi, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v0)
        if p_hi >= p_target:
            found = True
            break
        s_lo = s_hi
        p_lo = p_hi
    if not found:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False
    # Bisection on the power balance inside the bracketing grid cell.
    s_mid = 0.5 * (s_lo + s_hi)
    for _ in range(200):
        s_mid = 0.5 * (s_lo + s_hi)
        p_mid = _im_ss_power_s(s_mid, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v0)
        if abs(p_mid - p_target) <= 1e-9:
            break
        if p_mid < p_target:
            s_lo = s_mid
        else:
            s_hi = s_mid
        if s_hi - s_lo < 1e-16:
            break
    slip = s_mid
    e_qp, e_dp, e_qpp, e_dpp = _im_equilibrium_s(
        slip, r_s, l_s, l_p, l_pp, t_p0, t_pp0, v0, 0.0)
    i_d, i_q = _im_currents_s(e_qpp, e_dpp, r_s, l_pp, v0, 0.0)
    te = e_dpp * i_d + e_qpp * i_q
    t_m0 = te / (1.0 - slip) ** e_trq
    return e_qp, e_dp, e_qpp, e_dpp, slip, t_m0, True


@njit(cache=True, nogil=True)
def _sp_char_s(v, v_brk, v_stall, r_stall, x_stall, p0, q0):
    # Running characteristic before any stall latch.
    if v > v_brk:
        p = p0
        q = q0 + 6.0 * (v - v_brk) ** 2
    elif v >= v_stall:
        p = p0 + 12.0 * (v_brk - v) ** 3.2
        q = q0 + 11.0 * (v_brk - v) ** 2.5
    else:
        p = v * v / r_stall
        q = v * v / x_stall
    return p, q


@njit(cache=True, nogil=True)
def _sp_pq_s(v, v_brk, v_stall, v_rst, f_rst, r_stall, x_stall, p0, q0,
             stalled, v_min_seen, restart_ramp, dt):
    # Returns (p, q, stalled, v_min_seen, restart_ramp).
    if v < v_min_seen:
        v_min_seen = v
    if stalled == 0.0 and v < v_stall:
        stalled = 1.0
    if stalled == 0.0:
        p, q = _sp_char_s(v, v_brk, v_stall, r_stall, x_stall, p0, q0)
        return p, q, stalled, v_min_seen, restart_ramp
    if v > v_rst and restart_ramp < 1.0:
        restart_ramp = restart_ramp + dt / RESTART_RAMP_SECONDS
        if restart_ramp > 1.0:
            restart_ramp = 1.0
    w = f_rst * restart_ramp
    pc, qc = _sp_char_s(v, v_brk, v_stall, r_stall, x_stall, p0, q0)
    p = w * pc + (1.0 - w) * v * v / r_stall
    q = w * qc + (1.0 - w) * v * v / x_stall
    return p, q, stalled, v_min_seen, restart_ramp


@njit(cache=True, nogil=True)
def _elc_fvl_s(v, v_d1, v_d2, fr_cel, v_min_seen):
    span = v_d1 - v_d2
    if v <= v_min_seen:
        num = v - v_d2
    else:
        num = v_min_seen - v_d2 + fr_cel * (v - v_min_seen)
    fvl = num / span
    if fvl < 0.0:
        fvl = 0.0
    elif fvl > 1.0:
        fvl = 1.0
    return fvl


@njit(cache=True, nogil=True)
def _zip_pq_s(v, p1c, p2c, p3c, q1c, q2c, q3c, p0, q0, v0):
    r = v / v0
    p = p0 * (p1c * r * r + p2c * r + p3c)
    q = q0 * (q1c * r * r + q2c * r + q3c)
    return p, q


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def _check_voltage(v_d: float, v_q: float) -> None:
    if not (math.isfinite(v_d) and math.isfinite(v_q)):
        raise ModelError("numerical divergence")


def im_currents(state: IMState, params: IMParams, v_d: float, v_q: float) -> tuple[float, float]:
    """Stator current components drawn from the bus."""
    _check_voltage(v_d, v_q)
    return _im_currents_s(state.e_qpp, state.e_dpp, params.r_s, params.l_pp, v_d, v_q)


def im_pq(state: IMState, params: IMParams, v_d: float, v_q: float) -> tuple[float, float]:
    """Active/reactive power drawn from the bus, per-unit on the motor base."""
    _check_voltage(v_d, v_q)
    return _im_pq_s(state.e_qpp, state.e_dpp, params.r_s, params.l_pp, v_d, v_q)


def im_derivatives(state: IMState, params: IMParams, v_d: float, v_q: float) -> np.ndarray:
    """Time derivative of (e_qp, e_dp, e_qpp, e_dpp, slip)."""
    _check_voltage(v_d, v_q)
    d = _im_deriv_s(state.e_qp, state.e_dp, state.e_qpp, state.e_dpp,
                    state.slip, state.t_m0,
                    params.r_s, params.l_s, params.l_p, params.l_pp,
                    params.t_p0, params.t_pp0, params.h, params.e_trq,
                    v_d, v_q)
    out = np.array(d)
    if not np.all(np.isfinite(out)):
        raise ModelError("numerical divergence")
    return out


def im_init(params: IMParams, p_target: float, v0: float = 1.0) -> IMState:
    """Solve the steady state drawing p_target at terminal voltage v0.

    The equilibrium slip is found by bisection on the steady-state
    power balance along the stable branch of the power-slip curve; the
    torque base t_m0 is then set so the slip derivative vanishes.
    Raises ModelError for p_target outside (1e-6, peak power].
    """

    if not math.isfinite(p_target):
        raise ModelError("p_target must be finite")
    r = _im_init_s(params.r_s, params.l_s, params.l_p, params.l_pp,
                   params.t_p0, params.t_pp0, params.h, params.e_trq,
                   p_target, v0)
    if not r[6]:
        raise ModelError("infeasible motor loading")
    return IMState(e_qp=r[0], e_dp=r[1], e_qpp=r[2], e_dpp=r[3], slip=r[4], t_m0=r[5])


def single_phase_pq(v: float, params: SinglePhaseParams, state: SinglePhaseState,
                    dt: float) -> tuple[float, float, SinglePhaseState]:
    """Single-phase fleet P/Q over one step of length dt.

    Latches the stall state when v < v_stall. Once stalled, the
    non-restartable share stays at constant-impedance stall draw and
    the restartable share f_rst returns through the restart ramp while
    v > v_rst. Returns (p, q, new state).
    """

    if not math.isfinite(v) or v < 0.0:
        raise ModelError("voltage must be finite and >= 0")
    if dt <= 0.0:
        raise ModelError("dt must be > 0")
    p, q, stalled, v_min, ramp = _sp_pq_s(
        v, params.v_brk, params.v_stall, params.v_rst, params.f_rst,
        params.r_stall, params.x_stall, params.p0, params.q0,
        1.0 if state.stalled else 0.0, state.v_min_seen, state.restart_ramp, dt)
    new = SinglePhaseState(stalled=stalled != 0.0, v_min_seen=v_min, restart_ramp=ramp)
    return p, q, new


def zip_pq(v: float, params: ZipParams) -> tuple[float, float]:
    """Static ZIP P/Q at voltage v."""
    if not math.isfinite(v) or v < 0.0:
        raise ModelError("voltage must be finite and >= 0")
    return _zip_pq_s(v, params.p1c, params.p2c, params.p3c,
                     params.q1c, params.q2c, params.q3c,
                     params.p0, params.q0, params.v0)


def electronic_pq(v: float, params: ElectronicParams, v_min_seen: float) -> tuple[float, float]:
    """Electronic load P/Q given the minimum voltage seen so far.

    The caller tracks v_min_seen (min over time including the current
    sample). When v equals the minimum the connected fraction follows
    the tripping line down; when v exceeds it the partial-reconnection
    line applies. Both are clamped to [0, 1].
    """

    if not math.isfinite(v) or v < 0.0:
        raise ModelError("voltage must be finite and >= 0")
    fvl = _elc_fvl_s(v, params.v_d1, params.v_d2, params.fr_cel, v_min_seen)
    p = fvl * params.p0
    q = math.sqrt(max(0.0, 1.0 - params.pf_elc ** 2)) / params.pf_elc * p
    return p, q


def clamp_slip(slip: float) -> float:
    """Clamp rotor slip to the supported interval."""
    return min(SLIP_MAX, max(SLIP_MIN, slip))


__all__ = [
    "OMEGA_SYNC", "COMPONENT_ORDER", "RESTART_RAMP_SECONDS", "SLIP_MIN", "SLIP_MAX",
    "ModelError", "IMParams", "IMState", "SinglePhaseParams", "SinglePhaseState",
    "ZipParams", "ElectronicParams", "CompositeParams", "ParamRanges",
    "default_param_ranges", "sample_params",
    "im_currents", "im_pq", "im_derivatives", "im_init",
    "single_phase_pq", "zip_pq", "electronic_pq", "clamp_slip",
]
