"""Trajectory comparison metrics and the identification reward.

All metrics compare a simulated P/Q pair against a reference pair on
the same sampling grid, optionally restricted to a tail window so the
pre-event flat segment does not dilute the transient.

The identification reward combines two ingredients:

* RMSE of P and Q over the window, measuring pointwise closeness;
* a trend term comparing where the extremes of the transient land in
  time, measuring shape. Two traces can have small RMSE yet put the
  recovery dip or the reacceleration peak in the wrong place; the trend
  term punishes exactly that.

reward = -min(1, alpha * rmse_total + beta * trend) - r_step

so rewards live in [-1 - r_step, -r_step] and only near-perfect matches
approach -r_step. A search episode treats reward above lambda_term as
success.

Monte-Carlo composition scoring uses quantile bands: for a cloud of
trajectories simulated under one composition with many parameter draws,
an upper and a lower quantile curve are extracted per time sample and
scored against the reference with the pinball (quantile) loss. A
composition whose parameter uncertainty brackets the reference tightly
scores low, whatever single draw fits best.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_UPPER_LEVELS = (0.85, 0.90, 0.95)


@dataclass(frozen=True)
class RmseResult:
    """Windowed RMSE of active and reactive power, bus base."""

    p: float
    q: float

    @property
    def total(self) -> float:
        return self.p + self.q


@dataclass(frozen=True)
class RewardConfig:
    """Weights for the composite reward.

    alpha scales RMSE, beta scales the trend term, r_step is a constant
    per-step cost, lambda_term is the success threshold on the reward.
    k_scale normalizes the trend term; None uses the window length.
    """

    alpha: float
    beta: float
    r_step: float = 0.001
    lambda_term: float = -0.012
    k_scale: float | None = None

    def __post_init__(self) -> None:
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ValueError("alpha and beta must be > 0")
        if self.r_step < 0.0:
            raise ValueError("r_step must be >= 0")
        if self.lambda_term >= 0.0:
            raise ValueError("lambda_term must be < 0")
        if self.k_scale is not None and self.k_scale <= 0.0:
            raise ValueError("k_scale must be > 0")


def _window(a: np.ndarray, window_start: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("expected a 1-d array")
    if not 0 <= window_start < a.size:
        raise ValueError("window_start out of range")
    return a[window_start:]


def rmse_pq(sim_p, sim_q, ref_p, ref_q, window_start: int = 0) -> RmseResult:
    """Windowed RMSE of P and Q between a simulated and a reference pair."""

    sp = _window(sim_p, window_start)
    sq = _window(sim_q, window_start)
    rp = _window(ref_p, window_start)
    rq = _window(ref_q, window_start)
    if sp.size != rp.size or sq.size != rq.size or sp.size != sq.size:
        raise ValueError("traces must have equal length")
    ep = float(np.sqrt(np.mean((sp - rp) ** 2)))
    eq = float(np.sqrt(np.mean((sq - rq) ** 2)))
    return RmseResult(p=ep, q=eq)


def trend_loss(sim_p, sim_q, ref_p, ref_q, window_start: int = 0,
               k_scale: float | None = None) -> float:
    """Displacement of the transient extremes, in normalized samples.

    Sums the index offsets between simulated and reference locations of
    the P minimum, P maximum, Q minimum and Q maximum over the window,
    divided by k_scale (window length by default). Ties resolve to the
    first occurrence.
    """

    sp = _window(sim_p, window_start)
    sq = _window(sim_q, window_start)
    rp = _window(ref_p, window_start)
    rq = _window(ref_q, window_start)
    if sp.size != rp.size or sq.size != rq.size or sp.size != sq.size:
        raise ValueError("traces must have equal length")
    scale = float(sp.size) if k_scale is None else float(k_scale)
    if scale <= 0.0:
        raise ValueError("k_scale must be > 0")
    d = (abs(int(np.argmin(sp)) - int(np.argmin(rp)))
         + abs(int(np.argmax(sp)) - int(np.argmax(rp)))
         + abs(int(np.argmin(sq)) - int(np.argmin(rq)))
         + abs(int(np.argmax(sq)) - int(np.argmax(rq))))
    return d / scale


def composite_loss(sim_p, sim_q, ref_p, ref_q, cfg: RewardConfig,
                   window_start: int = 0) -> float:
    """Clamped weighted sum of RMSE and trend terms, in [0, 1]."""

    r = rmse_pq(sim_p, sim_q, ref_p, ref_q, window_start)
    tr = trend_loss(sim_p, sim_q, ref_p, ref_q, window_start, cfg.k_scale)
    return min(1.0, cfg.alpha * r.total + cfg.beta * tr)


def reward(sim_p, sim_q, ref_p, ref_q, cfg: RewardConfig,
           window_start: int = 0) -> float:
    """Identification reward in [-1 - r_step, -r_step].

    Equals -r_step exactly when the traces are identical over the
    window.
    """

    return -composite_loss(sim_p, sim_q, ref_p, ref_q, cfg, window_start) - cfg.r_step


# ---------------------------------------------------------------------------
# quantile-band scoring
# ---------------------------------------------------------------------------


def pinball(x_hat, x, tau: float):
    """Quantile (pinball) loss of estimate x_hat at level tau against x.

    Elementwise over arrays; scalar in, scalar out.
    """

    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    d = np.asarray(x_hat, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    out = np.maximum(d * tau, d * (tau - 1.0))
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class QuantileBand:
    """Per-sample quantile envelope of a trajectory cloud.

    o is the upper level; the lower curves sit at level 1 - o.
    """

    o: float
    p_lower: np.ndarray
    p_upper: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray

    def __post_init__(self) -> None:
        if not 0.5 < self.o < 1.0:
            raise ValueError("o must lie in (0.5, 1)")


def quantile_band(p_samples: np.ndarray, q_samples: np.ndarray, o: float) -> QuantileBand:
    """Extract the (1 - o, o) quantile envelope of a trajectory cloud.

    p_samples and q_samples are (n_draws, n_time) arrays from one
    composition simulated under many parameter draws.
    """

    p_samples = np.asarray(p_samples, dtype=np.float64)
    q_samples = np.asarray(q_samples, dtype=np.float64)
    if p_samples.ndim != 2 or p_samples.shape != q_samples.shape:
        raise ValueError("need matching (n_draws, n_time) arrays")
    if p_samples.shape[0] < 2:
        raise ValueError("need at least 2 draws for a band")
    return QuantileBand(
        o=o,
        p_lower=np.quantile(p_samples, 1.0 - o, axis=0),
        p_upper=np.quantile(p_samples, o, axis=0),
        q_lower=np.quantile(q_samples, 1.0 - o, axis=0),
        q_upper=np.quantile(q_samples, o, axis=0),
    )


def band_pinball(band: QuantileBand, ref_p, ref_q, window_start: int = 0) -> float:
    """Mean pinball score of one band against the reference pair.

    Averages, over time samples in the window, the sum of the four
    pinball terms: upper curves at level o, lower curves at level 1 - o,
    for both P and Q.
    """

    rp = _window(ref_p, window_start)
    rq = _window(ref_q, window_start)
    pu = _window(band.p_upper, window_start)
    pl = _window(band.p_lower, window_start)
    qu = _window(band.q_upper, window_start)
    ql = _window(band.q_lower, window_start)
    if not (rp.size == pu.size == pl.size and rq.size == qu.size == ql.size):
        raise ValueError("band and reference must have equal length")
    total = (pinball(pu, rp, band.o) + pinball(pl, rp, 1.0 - band.o)
             + pinball(qu, rq, band.o) + pinball(ql, rq, 1.0 - band.o))
    return float(np.mean(total))


def composition_pinball(p_samples, q_samples, ref_p, ref_q,
                        upper_levels=DEFAULT_UPPER_LEVELS,
                        window_start: int = 0) -> float:
    """Mean band-pinball score across several interval widths."""

    if len(upper_levels) == 0:
        raise ValueError("need at least one quantile level")
    scores = [band_pinball(quantile_band(p_samples, q_samples, o),
                           ref_p, ref_q, window_start)
              for o in upper_levels]
    return float(np.mean(scores))


__all__ = [
    "DEFAULT_UPPER_LEVELS", "RmseResult", "RewardConfig", "QuantileBand",
    "rmse_pq", "trend_loss", "composite_loss", "reward",
    "pinball", "quantile_band", "band_pinball", "composition_pinball",
]
