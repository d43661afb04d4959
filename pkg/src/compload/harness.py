"""Command-line front end for simulation and identification runs.

Subcommands:

* ``simulate``    play a fault scenario against a known composition and
  write the voltage and P/Q traces
* ``identify``    full two-stage identification against a reference
* ``robustness``  replay a finished identification across a grid of
  fault depths and durations and summarize the fit error
* ``compare``     run the Q-learning, particle-swarm and genetic
  searches on the same problem and budget
* ``loss-study``  best-achieved-loss versus sampling budget curves

Every run is configured by one YAML file (sections are shared between
subcommands, unused sections are ignored) plus a few overriding flags.
Outputs are plain CSV and JSON files in the chosen output directory,
written deterministically: rerunning a command with the same inputs
reproduces the files byte for byte.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .ddqn import (
    DdqnConfig,
    IdentificationEnv,
    LoadComposition,
    train,
)
from .load_models import (
    COMPONENT_ORDER,
    CompositeParams,
    ModelError,
    ParamRanges,
    default_param_ranges,
    sample_params,
)
from .metrics import DEFAULT_UPPER_LEVELS, RewardConfig, rmse_pq
from .montecarlo import (
    loss_vs_samples_study,
    rank_compositions,
    stage_two_fit,
)
from .search_baselines import (
    GaConfig,
    PsoConfig,
    ga_search,
    initial_population,
    pso_search,
)
from .simulator import (
    FaultScenario,
    SimConfig,
    SimulationError,
    make_fault_trace,
    read_pq_csv,
    resample_pq,
    simulate,
    write_pq_csv,
    write_voltage_csv,
)


class ConfigError(Exception):
    """Bad configuration file or command line."""


_TOP_LEVEL_KEYS = {
    "scenario", "sim", "ranges", "reference", "reward", "identify",
    "montecarlo", "robustness", "compare", "loss_study",
}

_MODE_ACTIVE = {
    "wecc": COMPONENT_ORDER,
    "zip_im": ("ma", "zip"),
}

_MISSING = object()


# ---------------------------------------------------------------------------
# config access
# ---------------------------------------------------------------------------


class Section:
    """Typed, path-aware access to one mapping of the config tree."""

    def __init__(self, data, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'}: expected a mapping")
        self._d = data
        self._path = path

    def _sub(self, key: str) -> str:
        return f"{self._path}.{key}" if self._path else key

    def _take(self, key: str, default):
        if key in self._d:
            return self._d[key]
        if default is _MISSING:
            raise ConfigError(f"{self._sub(key)}: required setting is missing")
        return default

    def has(self, key: str) -> bool:
        return key in self._d

    def get_float(self, key: str, default=_MISSING) -> float:
        v = self._take(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self._sub(key)}: expected a number")
        return float(v)

    def get_int(self, key: str, default=_MISSING) -> int:
        v = self._take(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self._sub(key)}: expected an integer")
        return int(v)

    def get_bool(self, key: str, default=_MISSING) -> bool:
        v = self._take(key, default)
        if not isinstance(v, bool):
            raise ConfigError(f"{self._sub(key)}: expected true or false")
        return v

    def get_str(self, key: str, default=_MISSING) -> str:
        v = self._take(key, default)
        if not isinstance(v, str):
            raise ConfigError(f"{self._sub(key)}: expected a string")
        return v

    def get_list(self, key: str, default=_MISSING) -> list:
        v = self._take(key, default)
        if not isinstance(v, list):
            raise ConfigError(f"{self._sub(key)}: expected a list")
        return v

    def get_map(self, key: str, default=_MISSING) -> dict:
        v = self._take(key, default)
        if v is None:
            v = {}
        if not isinstance(v, dict):
            raise ConfigError(f"{self._sub(key)}: expected a mapping")
        return v

    def section(self, key: str) -> "Section":
        return Section(self.get_map(key, {}), self._sub(key))

    def check_keys(self, allowed) -> None:
        unknown = sorted(set(self._d) - set(allowed))
        if unknown:
            raise ConfigError(
                f"{self._path or 'config'}: unknown settings {unknown}")


def load_config(path) -> Section:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e}")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{p}: invalid YAML{loc}: {problem}")
    root = Section(data, "")
    root.check_keys(_TOP_LEVEL_KEYS)
    return root


def _wrap_value_error(fn, path: str):
    try:
        return fn()
    except ValueError as e:
        raise ConfigError(f"{path}: {e}")


def parse_scenario(sec: Section) -> FaultScenario:
    sec.check_keys({"v_pre", "v_fault", "t_fault", "duration_cycles", "recovery_tau"})
    d = FaultScenario()
    return _wrap_value_error(lambda: FaultScenario(
        v_pre=sec.get_float("v_pre", d.v_pre),
        v_fault=sec.get_float("v_fault", d.v_fault),
        t_fault=sec.get_float("t_fault", d.t_fault),
        duration_cycles=sec.get_float("duration_cycles", d.duration_cycles),
        recovery_tau=sec.get_float("recovery_tau", d.recovery_tau),
    ), "scenario")


def parse_sim(sec: Section) -> SimConfig:
    sec.check_keys({"dt", "t_end", "feeder_coupling", "feeder_r", "feeder_x"})
    d = SimConfig()
    return _wrap_value_error(lambda: SimConfig(
        dt=sec.get_float("dt", d.dt),
        t_end=sec.get_float("t_end", d.t_end),
        feeder_coupling=sec.get_bool("feeder_coupling", d.feeder_coupling),
        feeder_r=sec.get_float("feeder_r", d.feeder_r),
        feeder_x=sec.get_float("feeder_x", d.feeder_x),
    ), "sim")


def parse_reward(sec: Section) -> RewardConfig:
    sec.check_keys({"alpha", "beta", "r_step", "lambda_term", "k_scale"})
    d = RewardConfig(alpha=1.0, beta=1.0)
    k_scale = sec.get_float("k_scale", 0.0) if sec.has("k_scale") else None
    return _wrap_value_error(lambda: RewardConfig(
        alpha=sec.get_float("alpha"),
        beta=sec.get_float("beta"),
        r_step=sec.get_float("r_step", d.r_step),
        lambda_term=sec.get_float("lambda_term", d.lambda_term),
        k_scale=k_scale,
    ), "reward")


def parse_composition(obj, path: str) -> np.ndarray:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: expected a mapping of component fractions")
    try:
        return LoadComposition.from_dict(obj).as_array()
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{path}: {e}")


def parse_ranges(sec: Section) -> ParamRanges:
    defaults = default_param_ranges()
    merged = {f.name: dict(getattr(defaults, f.name))
              for f in dataclasses.fields(defaults)}
    sec.check_keys(COMPONENT_ORDER)
    for comp in COMPONENT_ORDER:
        if not sec.has(comp):
            continue
        sub = sec.get_map(comp)
        for param, bounds in sub.items():
            if param not in merged[comp]:
                raise ConfigError(
                    f"ranges.{comp}.{param}: unknown parameter for this component")
            if isinstance(bounds, (int, float)) and not isinstance(bounds, bool):
                lo = hi = float(bounds)
            elif (isinstance(bounds, list) and len(bounds) == 2
                  and all(isinstance(b, (int, float)) and not isinstance(b, bool)
                          for b in bounds)):
                lo, hi = float(bounds[0]), float(bounds[1])
            else:
                raise ConfigError(
                    f"ranges.{comp}.{param}: expected a number or a [low, high] pair")
            merged[comp][param] = (lo, hi)
    return _wrap_value_error(lambda: ParamRanges(**merged), "ranges")


def parse_active(sec: Section) -> tuple[int, ...]:
    if sec.has("mode") and sec.has("active"):
        raise ConfigError("identify: give either mode or active, not both")
    if sec.has("active"):
        names = sec.get_list("active")
        idx = []
        for name in names:
            if name not in COMPONENT_ORDER:
                raise ConfigError(f"identify.active: unknown component '{name}'")
            idx.append(COMPONENT_ORDER.index(name))
        if len(idx) < 2 or len(set(idx)) != len(idx):
            raise ConfigError("identify.active: need at least 2 distinct components")
        return tuple(idx)
    mode = sec.get_str("mode", "wecc")
    if mode not in _MODE_ACTIVE:
        raise ConfigError(
            f"identify.mode: unknown mode '{mode}' (choose from {sorted(_MODE_ACTIVE)})")
    return tuple(COMPONENT_ORDER.index(n) for n in _MODE_ACTIVE[mode])


def parse_ddqn(sec: Section) -> DdqnConfig:
    fields = {f.name for f in dataclasses.fields(DdqnConfig)}
    sec.check_keys(fields)
    d = DdqnConfig()
    kw = {}
    for f in dataclasses.fields(DdqnConfig):
        if not sec.has(f.name):
            kw[f.name] = getattr(d, f.name)
        elif f.type in ("int",):
            kw[f.name] = sec.get_int(f.name)
        elif f.type in ("bool",):
            kw[f.name] = sec.get_bool(f.name)
        else:
            kw[f.name] = sec.get_float(f.name)
    return _wrap_value_error(lambda: DdqnConfig(**kw), "identify.ddqn")


def parse_upper_levels(sec: Section) -> tuple:
    if not sec.has("upper_levels"):
        return DEFAULT_UPPER_LEVELS
    levels = sec.get_list("upper_levels")
    out = []
    for v in levels:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{sec._sub('upper_levels')}: expected numbers")
        if not 0.5 < float(v) < 1.0:
            raise ConfigError(
                f"{sec._sub('upper_levels')}: levels must lie in (0.5, 1)")
        out.append(float(v))
    if not out:
        raise ConfigError(f"{sec._sub('upper_levels')}: must not be empty")
    return tuple(out)


# ---------------------------------------------------------------------------
# shared run pieces
# ---------------------------------------------------------------------------


def reference_params(ranges: ParamRanges, param_seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([param_seed]))
    return sample_params(ranges, rng)


def build_reference(sec: Section, trace, sim_cfg: SimConfig,
                    ranges: ParamRanges, seed_override=None):
    """Reference P/Q pair: simulated from a composition, or read from CSV."""

    sec.check_keys({"composition", "param_seed", "csv"})
    if sec.has("csv"):
        if sec.has("composition") or sec.has("param_seed"):
            raise ConfigError("reference: csv excludes composition/param_seed")
        path = sec.get_str("csv")
        try:
            t, p, q = read_pq_csv(path)
        except OSError as e:
            raise ConfigError(f"reference.csv: cannot read {path}: {e}")
        except ValueError as e:
            raise ConfigError(f"reference.csv: {e}")
        ref = _wrap_value_error(lambda: resample_pq(t, p, q, sim_cfg), "reference.csv")
        return ref, {"source": "csv", "path": str(path)}
    comp = parse_composition(sec.get_map("composition"), "reference.composition")
    param_seed = sec.get_int("param_seed", 0)
    if seed_override is not None:
        param_seed = int(seed_override)
    params = reference_params(ranges, param_seed)
    ref = simulate(comp, params, trace, sim_cfg)
    meta = {
        "source": "simulated",
        "composition": LoadComposition.from_array(comp).to_dict(),
        "param_seed": param_seed,
        "params": params.to_dict(),
    }
    return ref, meta


def _comp_map(arr) -> dict:
    return LoadComposition.from_array(arr).to_dict()


def _active_start(sec: Section, active_idx: tuple[int, ...]) -> np.ndarray:
    full = parse_composition(sec.get_map("start"), "identify.start")
    inactive = [i for i in range(len(COMPONENT_ORDER)) if i not in active_idx]
    if any(full[i] > 1e-9 for i in inactive):
        names = [COMPONENT_ORDER[i] for i in inactive if full[i] > 1e-9]
        raise ConfigError(
            f"identify.start: inactive components must be zero: {names}")
    return full[list(active_idx)]


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def write_table(path, names, columns) -> None:
    """Numeric CSV with a header row, one column per name."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.9g", delimiter=",",
               header=",".join(names), comments="")


def read_table(path) -> dict:
    """Read back a CSV written by :func:`write_table`, keyed by column."""
    with open(path) as f:
        header = f.readline().strip()
    names = [c.strip() for c in header.split(",")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size and data.shape[1] != len(names):
        raise ValueError(f"{path}: expected {len(names)} columns")
    return {name: data[:, i] for i, name in enumerate(names)}


def _map_units(fn, units, threads: int) -> list:
    if threads <= 1:
        return [fn(u) for u in units]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, units))


def _require_trace_driven(sim_cfg: SimConfig, command: str) -> None:
    if sim_cfg.feeder_coupling:
        raise ConfigError(
            f"{command}: identification requires trace-driven voltage "
            "(set sim.feeder_coupling to false)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    root = load_config(args.config)
    scenario = parse_scenario(root.section("scenario"))
    sim_cfg = parse_sim(root.section("sim"))
    ranges = parse_ranges(root.section("ranges"))
    trace = make_fault_trace(scenario, sim_cfg)
    ref, meta = build_reference(root.section("reference"), trace, sim_cfg,
                                ranges, seed_override=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_voltage_csv(out / "voltage.csv", trace)
    write_pq_csv(out / "pq.csv", ref)
    _write_json(out / "simulate.json", {
        "scenario": dataclasses.asdict(scenario),
        "sim": dataclasses.asdict(sim_cfg),
        "reference": meta,
        "n_samples": sim_cfg.n_samples,
    })
    print(f"wrote voltage.csv, pq.csv, simulate.json to {out}")
    return 0


def cmd_identify(args) -> int:
    root = load_config(args.config)
    scenario = parse_scenario(root.section("scenario"))
    sim_cfg = parse_sim(root.section("sim"))
    _require_trace_driven(sim_cfg, "identify")
    ranges = parse_ranges(root.section("ranges"))
    reward_cfg = parse_reward(root.section("reward"))
    trace = make_fault_trace(scenario, sim_cfg)
    ref, ref_meta = build_reference(root.section("reference"), trace, sim_cfg, ranges)

    ident = root.section("identify")
    ident.check_keys({"mode", "active", "start", "n_eval", "reduce",
                      "window_start", "seed", "ddqn"})
    active_idx = parse_active(ident)
    start = _active_start(ident, active_idx)
    n_eval = ident.get_int("n_eval", 20)
    reduce = ident.get_str("reduce", "best")
    window_start = ident.get_int("window_start", 0)
    seed = args.seed if args.seed is not None else ident.get_int("seed", 0)
    ddqn_cfg = parse_ddqn(ident.section("ddqn"))

    mc = root.section("montecarlo")
    mc.check_keys({"n_samples", "stage_two_samples", "seed", "upper_levels"})
    n_rank = mc.get_int("n_samples", 500)
    n_fit = mc.get_int("stage_two_samples", 1000)
    mc_seed = mc.get_int("seed", seed)
    upper_levels = parse_upper_levels(mc)

    env = _wrap_value_error(lambda: IdentificationEnv(
        ref, trace, sim_cfg, ranges, reward_cfg, n_eval=n_eval,
        active_idx=active_idx, seed=seed, reduce=reduce,
        window_start=window_start), "identify")
    result = train(env, ddqn_cfg, start, seed=seed)

    ranked = rank_compositions([c.composition for c in result.candidates],
                               ref, trace, sim_cfg, ranges, n_samples=n_rank,
                               seed=mc_seed, upper_levels=upper_levels,
                               window_start=window_start)
    final = stage_two_fit(ranked[0].composition, ref, trace, sim_cfg, ranges,
                          n_samples=n_fit, seed=mc_seed,
                          window_start=window_start)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episodes = np.arange(1, len(result.episode_rewards) + 1)
    write_table(out / "learning_curve.csv", ["episode", "reward", "rmse"],
                [episodes, result.episode_rewards, result.episode_rmse])
    write_table(out / "candidates.csv",
                ["rank", *COMPONENT_ORDER, "reward", "p_rmse", "q_rmse"],
                [np.arange(1, len(result.candidates) + 1),
                 *[[c.composition[i] for c in result.candidates]
                   for i in range(len(COMPONENT_ORDER))],
                 [c.reward for c in result.candidates],
                 [c.p_rmse for c in result.candidates],
                 [c.q_rmse for c in result.candidates]])
    fitted = simulate(final.composition, final.params, trace, sim_cfg)
    write_table(out / "fit_overlay.csv",
                ["t", "p_ref", "q_ref", "p_fit", "q_fit"],
                [ref.t, ref.p, ref.q, fitted.p, fitted.q])
    _write_json(out / "identify.json", {
        "seed": seed,
        "reference": ref_meta,
        "stage_one": {
            "candidates": [{
                "composition": _comp_map(c.composition),
                "reward": c.reward,
                "p_rmse": c.p_rmse,
                "q_rmse": c.q_rmse,
            } for c in result.candidates],
            "episode_rewards": result.episode_rewards.tolist(),
            "episode_rmse": result.episode_rmse.tolist(),
            "n_states_evaluated": result.n_states_evaluated,
        },
        "ranking": [{
            "composition": _comp_map(r.composition),
            "score": r.score,
            "n_ok": r.n_ok,
            "pinball_by_interval": r.pinball_by_interval,
        } for r in ranked],
        "result": {
            "composition": _comp_map(final.composition),
            "params": final.params.to_dict(),
            "p_rmse": final.p_rmse,
            "q_rmse": final.q_rmse,
            "provenance": final.provenance,
        },
    })
    print(f"identified composition: {_comp_map(final.composition)}")
    print(f"p_rmse={final.p_rmse:.6f} q_rmse={final.q_rmse:.6f}")
    print(f"wrote identify.json, learning_curve.csv, candidates.csv, "
          f"fit_overlay.csv to {out}")
    return 0


def cmd_robustness(args) -> int:
    root = load_config(args.config)
    scenario = parse_scenario(root.section("scenario"))
    sim_cfg = parse_sim(root.section("sim"))
    _require_trace_driven(sim_cfg, "robustness")
    ranges = parse_ranges(root.section("ranges"))

    rob = root.section("robustness")
    rob.check_keys({"result", "depths", "durations", "window_start"})
    result_path = Path(rob.get_str("result"))
    depths = [float(v) for v in rob.get_list("depths")]
    durations = [float(v) for v in rob.get_list("durations")]
    window_start = rob.get_int("window_start", 0)
    if not depths or not durations:
        raise ConfigError("robustness: depths and durations must not be empty")

    try:
        fitted_doc = json.loads(result_path.read_text())
    except OSError as e:
        raise ConfigError(f"robustness.result: cannot read {result_path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"robustness.result: {result_path}: {e}")
    try:
        fit_comp = parse_composition(fitted_doc["result"]["composition"],
                                     "robustness.result")
        fit_params = CompositeParams.from_dict(fitted_doc["result"]["params"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(
            f"robustness.result: {result_path} is not an identification "
            f"result file ({e})")

    ref_sec = root.section("reference")
    if ref_sec.has("csv"):
        raise ConfigError(
            "robustness: the reference must be a simulated composition; "
            "an external trace cannot be replayed at other fault depths")
    ref_sec.check_keys({"composition", "param_seed", "csv"})
    ref_comp = parse_composition(ref_sec.get_map("composition"),
                                 "reference.composition")
    ref_params = reference_params(ranges, ref_sec.get_int("param_seed", 0))

    cells = [(d, dur) for d in depths for dur in durations]

    def run_cell(cell):
        depth, dur = cell
        sc = dataclasses.replace(scenario, v_fault=depth, duration_cycles=dur)
        trace = make_fault_trace(sc, sim_cfg)
        ref = simulate(ref_comp, ref_params, trace, sim_cfg)
        fit = simulate(fit_comp, fit_params, trace, sim_cfg)
        r = rmse_pq(fit.p, fit.q, ref.p, ref.q, window_start=window_start)
        return {"v_fault": depth, "duration_cycles": dur,
                "p_rmse": r.p, "q_rmse": r.q}

    rows = _map_units(run_cell, cells, args.threads)

    def stats(key):
        vals = [r[key] for r in rows]
        return {"mean": float(np.mean(vals)), "min": float(np.min(vals)),
                "max": float(np.max(vals))}

    out = Path(args.out)
    report = {
        "result_file": str(result_path),
        "fitted_composition": _comp_map(fit_comp),
        "reference_composition": _comp_map(ref_comp),
        "scenarios": rows,
        "p_rmse": stats("p_rmse"),
        "q_rmse": stats("q_rmse"),
    }
    _write_json(out / "robustness.json", report)
    write_table(out / "robustness.csv",
                ["v_fault", "duration_cycles", "p_rmse", "q_rmse"],
                [[r[k] for r in rows]
                 for k in ("v_fault", "duration_cycles", "p_rmse", "q_rmse")])
    p, q = report["p_rmse"], report["q_rmse"]
    print(f"{len(rows)} scenarios: p_rmse mean={p['mean']:.6f} "
          f"min={p['min']:.6f} max={p['max']:.6f}; "
          f"q_rmse mean={q['mean']:.6f}; wrote robustness.json to {out}")
    return 0


def cmd_compare(args) -> int:
    root = load_config(args.config)
    scenario = parse_scenario(root.section("scenario"))
    sim_cfg = parse_sim(root.section("sim"))
    _require_trace_driven(sim_cfg, "compare")
    ranges = parse_ranges(root.section("ranges"))
    reward_cfg = parse_reward(root.section("reward"))
    trace = make_fault_trace(scenario, sim_cfg)
    ref, ref_meta = build_reference(root.section("reference"), trace, sim_cfg, ranges)

    ident = root.section("identify")
    ident.check_keys({"mode", "active", "start", "n_eval", "reduce",
                      "window_start", "seed", "ddqn"})
    active_idx = parse_active(ident)
    start = _active_start(ident, active_idx)
    n_eval = ident.get_int("n_eval", 20)
    reduce = ident.get_str("reduce", "best")
    window_start = ident.get_int("window_start", 0)
    ddqn_cfg = parse_ddqn(ident.section("ddqn"))

    comp_sec = root.section("compare")
    comp_sec.check_keys({"seeds", "pso", "ga", "shared_init"})
    seeds = [int(s) for s in comp_sec.get_list("seeds", [0, 1, 2])]
    if args.seed is not None:
        seeds = [args.seed]
    shared_init = comp_sec.get_bool("shared_init", True)

    pso_sec = comp_sec.section("pso")
    pso_sec.check_keys({f.name for f in dataclasses.fields(PsoConfig)})
    pso_cfg = _wrap_value_error(lambda: PsoConfig(
        particles=pso_sec.get_int("particles", PsoConfig.particles),
        iterations=pso_sec.get_int("iterations", PsoConfig.iterations),
        inertia=pso_sec.get_float("inertia", PsoConfig.inertia),
        cognitive=pso_sec.get_float("cognitive", PsoConfig.cognitive),
        social=pso_sec.get_float("social", PsoConfig.social),
        init_spread=pso_sec.get_float("init_spread", PsoConfig.init_spread),
    ), "compare.pso")
    ga_sec = comp_sec.section("ga")
    ga_sec.check_keys({f.name for f in dataclasses.fields(GaConfig)})
    ga_cfg = _wrap_value_error(lambda: GaConfig(
        population=ga_sec.get_int("population", GaConfig.population),
        generations=ga_sec.get_int("generations", GaConfig.generations),
        mutation_scale=ga_sec.get_float("mutation_scale", GaConfig.mutation_scale),
        init_spread=ga_sec.get_float("init_spread", GaConfig.init_spread),
    ), "compare.ga")
    if shared_init and pso_cfg.particles != ga_cfg.population:
        raise ConfigError(
            "compare: shared_init needs pso.particles == ga.population")

    mc = root.section("montecarlo")
    mc.check_keys({"n_samples", "stage_two_samples", "seed", "upper_levels"})
    n_fit = mc.get_int("stage_two_samples", 1000)
    mc_seed = mc.get_int("seed", 0)

    def make_env(seed):
        return IdentificationEnv(ref, trace, sim_cfg, ranges, reward_cfg,
                                 n_eval=n_eval, active_idx=active_idx,
                                 seed=seed, reduce=reduce,
                                 window_start=window_start)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run_seed(seed):
        init = None
        if shared_init:
            rng = np.random.default_rng(seed)
            init = initial_population(start, pso_cfg.particles,
                                      pso_cfg.init_spread, rng)
        env_d = make_env(seed)
        dd = train(env_d, ddqn_cfg, start, seed=seed)
        env_p = make_env(seed)
        ps = pso_search(env_p, start, pso_cfg, seed=seed, init_pop=init)
        env_g = make_env(seed)
        ga = ga_search(env_g, start, ga_cfg, seed=seed, init_pop=init)

        dd_curve = np.maximum.accumulate(dd.episode_rewards)
        methods = []
        for name, comp, reward_val, n_evals, curve in (
                ("ddqn", dd.best.composition, dd.best.reward,
                 dd.n_states_evaluated, dd_curve),
                ("pso", ps.composition, ps.reward, ps.n_evals, ps.history),
                ("ga", ga.composition, ga.reward, ga.n_evals, ga.history)):
            fit = stage_two_fit(comp, ref, trace, sim_cfg, ranges,
                                n_samples=n_fit, seed=mc_seed,
                                window_start=window_start)
            methods.append({
                "method": name,
                "composition": _comp_map(comp),
                "final_reward": float(reward_val),
                "n_evals": int(n_evals),
                "p_rmse": fit.p_rmse,
                "q_rmse": fit.q_rmse,
            })
            write_table(out / f"curve_{name}_seed{seed}.csv",
                        ["iteration", "best_reward"],
                        [np.arange(len(curve)), curve])
        by = {m["method"]: m for m in methods}
        ordering_ok = (by["ddqn"]["p_rmse"] <= by["pso"]["p_rmse"]
                       <= by["ga"]["p_rmse"])
        return {"seed": seed, "methods": methods, "ordering_ok": bool(ordering_ok)}

    runs = _map_units(run_seed, seeds, args.threads)

    def mean_of(name, key):
        vals = [m[key] for r in runs for m in r["methods"] if m["method"] == name]
        return float(np.mean(vals))

    methods_summary = [{
        "method": name,
        "p_rmse": mean_of(name, "p_rmse"),
        "q_rmse": mean_of(name, "q_rmse"),
        "final_reward": mean_of(name, "final_reward"),
    } for name in ("ddqn", "pso", "ga")]
    summary = {
        "ordering_ok_count": sum(1 for r in runs if r["ordering_ok"]),
        "ordering_ok_majority":
            sum(1 for r in runs if r["ordering_ok"]) * 2 > len(seeds),
        "n_seeds": len(seeds),
    }
    _write_json(out / "compare.json", {
        "reference": ref_meta,
        "methods": methods_summary,
        "runs": runs,
        "summary": summary,
    })
    print(f"ordering ddqn <= pso <= ga held on "
          f"{summary['ordering_ok_count']}/{len(seeds)} seeds; "
          f"wrote compare.json to {out}")
    return 0


def cmd_loss_study(args) -> int:
    root = load_config(args.config)
    scenario = parse_scenario(root.section("scenario"))
    sim_cfg = parse_sim(root.section("sim"))
    _require_trace_driven(sim_cfg, "loss-study")
    ranges = parse_ranges(root.section("ranges"))
    reward_cfg = parse_reward(root.section("reward"))
    trace = make_fault_trace(scenario, sim_cfg)
    ref, ref_meta = build_reference(root.section("reference"), trace, sim_cfg, ranges)

    ls = root.section("loss_study")
    ls.check_keys({"n_max", "repeats", "seed", "window_start", "compositions"})
    n_max = ls.get_int("n_max", 100)
    repeats = ls.get_int("repeats", 10)
    window_start = ls.get_int("window_start", 0)
    seed = args.seed if args.seed is not None else ls.get_int("seed", 0)
    comp_map = ls.get_map("compositions")
    if not comp_map:
        raise ConfigError("loss_study.compositions: must not be empty")
    comps = {label: parse_composition(c, f"loss_study.compositions.{label}")
             for label, c in comp_map.items()}

    study = _wrap_value_error(lambda: loss_vs_samples_study(
        comps, ref, trace, sim_cfg, ranges, reward_cfg,
        n_max=n_max, repeats=repeats, seed=seed,
        window_start=window_start), "loss_study")
    out = Path(args.out)
    _write_json(out / "loss_study.json", {
        "reference": ref_meta,
        "n": study.n.tolist(),
        "repeats": repeats,
        "seed": seed,
        "curves": {label: c.tolist() for label, c in study.curves.items()},
        "final": {label: c[-1] for label, c in study.curves.items()},
    })
    finals = ", ".join(f"{label}={c[-1]:.4f}" for label, c in study.curves.items())
    print(f"best-of-{n_max} mean losses: {finals}; wrote loss_study.json to {out}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # Argument mistakes should exit with the configuration-error code,
    # not argparse's default.
    def error(self, message):
        raise ConfigError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="YAML configuration file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the seed from the config")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for independent runs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="compload",
                     description="Composite load simulation and identification")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_text in (
            ("simulate", cmd_simulate,
             "simulate a scenario and write voltage/PQ traces"),
            ("identify", cmd_identify,
             "two-stage composition and parameter identification"),
            ("robustness", cmd_robustness,
             "replay a fitted model across fault depths and durations"),
            ("compare", cmd_compare,
             "compare the Q-learning, PSO and GA searches"),
            ("loss-study", cmd_loss_study,
             "best loss versus sampling budget")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (SimulationError, ModelError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
