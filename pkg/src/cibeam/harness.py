"""Experiment harness: seeded parameter sweeps, Monte Carlo averaging,
CSV/JSON emission, and golden-file comparison.

A single JSON config describes an experiment; any leaf can be overridden
from the command line via dotted paths.  Internal computation is always in
mW; dB/dBm conversion happens at the config boundary.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import radar, serialize
from .ci import InfeasibleError, db_to_lin, dbm_to_mw, lin_to_db
from .estimators import (CiInterferenceMinBeamformer, CiPowerMinBeamformer,
                         RobustCiBeamformer)
from .scene import (RadarScene, gen_channels, psk_frame, radar_waveform,
                    ula_positions)

__all__ = ["ExperimentConfig", "SweepResult", "run", "bench"]

MODES = ("power-min", "interf-min", "robust", "radar-detect", "crb",
         "compare-oracle")

_DEFAULTS = {
    "mode": "power-min",
    "dims": {"n": 8, "k": 4, "m": 4, "l": 14},
    "order": 4,
    "seed": 1234,
    "sigma_c2": 1.0,
    "sigma_r2": 1.0,
    "p_r": 1.0,
    "sweep": {
        "gamma_db": [10.0, 15.0, 20.0, 25.0, 30.0],
        "r_db": [0.0],
        "p_budget_dbm": [20.0],
        "delta": [0.0],
        "snr_r_db": [8.0],
    },
    "trials": {"channels": 20, "detection": 2000},
    "solver": {"name": "gp", "tol": None},
    "theta_deg": 30.0,
    "p_fa": 1e-4,
    "eta_dbm": None,
    "detect_precoder": "ci",
    "threads": 1,
    "out": None,
    "dump_instances": None,
    "golden_dir": None,
    "bench_k": [2, 3, 4, 5, 6],
    "bench_instances": 10,
}


def _deep_update(dst: dict, src: dict) -> dict:
    for key, val in src.items():
        if isinstance(val, dict) and isinstance(dst.get(key), dict):
            _deep_update(dst[key], val)
        else:
            dst[key] = val
    return dst


def _parse_literal(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path=None, overrides=None, seed=None, out=None,
             threads=None, mode=None):
        cfg = json.loads(json.dumps(_DEFAULTS))  # deep copy
        if path is not None:
            with open(path) as fh:
                _deep_update(cfg, json.load(fh))
        for item in overrides or []:
            dotted, _, raw = item.partition("=")
            if not _:
                raise ValueError(f"override {item!r} is not KEY=VALUE")
            node = cfg
            keys = dotted.split(".")
            for key in keys[:-1]:
                node = node.setdefault(key, {})
            node[keys[-1]] = _parse_literal(raw)
        if mode is not None:
            cfg["mode"] = mode
        if seed is not None:
            cfg["seed"] = int(seed)
        if out is not None:
            cfg["out"] = out
        if threads is not None:
            cfg["threads"] = int(threads)
        if cfg["mode"] not in MODES:
            raise ValueError(f"unknown mode {cfg['mode']!r}")
        return cls(cfg)

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)


@dataclass
class SweepResult:
    header: list
    rows: list
    summary: dict
    n_infeasible: int = 0

    @property
    def exit_code(self) -> int:
        return 2 if self.n_infeasible else 0


def point_seed(seed: int, *key) -> int:
    """Derived seed for one sweep point / trial, independent of scheduling
    order."""
    parts = [int(seed) & 0xFFFFFFFF] + [int(x) & 0xFFFFFFFF for x in key]
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def _mean_stderr(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return math.nan, math.nan
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def _solver_kwargs(cfg):
    solver = cfg.get("solver", {})
    kw = {}
    if solver.get("tol") is not None:
        kw["tol"] = float(solver["tol"])
    return kw


def _frame_stats(est, cs, frame):
    """Fit on the first slot, precode the whole frame, return the per-frame
    average instantaneous power and radar-band interference (mW)."""
    est.fit(cs, frame.phases[:, 0])
    w_seq = est.transform(frame.phases)
    powers = np.sum(np.abs(w_seq) ** 2, axis=0)
    interf = np.sum(np.abs(cs.G.T @ w_seq) ** 2, axis=0)
    return float(powers.mean()), float(interf.mean()), w_seq


def _maybe_dump(cfg, inst, tag):
    root = cfg.get("dump_instances")
    if not root:
        return
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    digest = serialize.instance_hash(inst)
    path = root / f"{tag}-{digest[:12]}.json"
    path.write_text(serialize.canonical_json(
        {"instance": inst, "hash": digest}) + "\n")


# --- sweep-point workers ----------------------------------------------


def _power_min_point(cfg, idx, gamma_db, r_db):
    dims = cfg["dims"]
    powers, inrs = [], []
    feasible = 0
    solver = cfg.get("solver", {})
    for trial in range(cfg["trials"]["channels"]):
        seed = point_seed(cfg["seed"], idx, trial)
        cs = gen_channels(dims["n"], dims["k"], dims["m"], seed=seed)
        frame = psk_frame(dims["k"], dims["l"], cfg["order"], seed=seed + 1)
        inst = serialize.instance_to_dict(
            cs, frame.phases[:, 0], gamma_db=gamma_db, r_db=r_db,
            order=cfg["order"], sigma_c2=cfg["sigma_c2"],
            sigma_r2=cfg["sigma_r2"], p_r=cfg["p_r"], seed=seed)
        _maybe_dump(cfg, inst, f"powermin-{idx}-{trial}")
        est = CiPowerMinBeamformer(
            gamma_db=gamma_db, r_db=r_db, order=cfg["order"],
            sigma_c2=cfg["sigma_c2"], sigma_r2=cfg["sigma_r2"],
            p_r=cfg["p_r"], solver=solver.get("name", "gp"),
            seed=seed, **_solver_kwargs(cfg))
        try:
            power, _, w_seq = _frame_stats(est, cs, frame)
        except InfeasibleError:
            continue
        feasible += 1
        powers.append(power)
        inrs.append(float(np.max(np.abs(cs.G.T @ w_seq) ** 2)
                          / cfg["sigma_r2"]))
    mean_p, se_p = _mean_stderr(powers)
    status = "ok" if feasible == cfg["trials"]["channels"] else (
        "infeasible" if feasible == 0 else "partial")
    return {
        "gamma_db": gamma_db, "r_db": r_db,
        "n": dims["n"], "k": dims["k"], "m": dims["m"], "l": dims["l"],
        "order": cfg["order"], "trials": cfg["trials"]["channels"],
        "feasible": feasible,
        "mean_power_mw": mean_p, "stderr_power_mw": se_p,
        "max_inr_lin": max(inrs) if inrs else math.nan,
        "status": status,
    }


def _interf_min_point(cfg, idx, gamma_db, p_budget_dbm):
    dims = cfg["dims"]
    budget = dbm_to_mw(p_budget_dbm)
    interfs, powers = [], []
    feasible = 0
    for trial in range(cfg["trials"]["channels"]):
        seed = point_seed(cfg["seed"], idx, trial)
        cs = gen_channels(dims["n"], dims["k"], dims["m"], seed=seed)
        frame = psk_frame(dims["k"], dims["l"], cfg["order"], seed=seed + 1)
        inst = serialize.instance_to_dict(
            cs, frame.phases[:, 0], gamma_db=gamma_db, p_budget_mw=budget,
            order=cfg["order"], sigma_c2=cfg["sigma_c2"],
            sigma_r2=cfg["sigma_r2"], p_r=cfg["p_r"], seed=seed)
        _maybe_dump(cfg, inst, f"interfmin-{idx}-{trial}")
        est = CiInterferenceMinBeamformer(
            gamma_db=gamma_db, p_budget_mw=budget, order=cfg["order"],
            sigma_c2=cfg["sigma_c2"], sigma_r2=cfg["sigma_r2"],
            p_r=cfg["p_r"], **_solver_kwargs(cfg))
        try:
            power, interf, _ = _frame_stats(est, cs, frame)
        except InfeasibleError:
            continue
        feasible += 1
        powers.append(power)
        interfs.append(interf)
    mean_i, se_i = _mean_stderr(interfs)
    mean_p, _ = _mean_stderr(powers)
    status = "ok" if feasible == cfg["trials"]["channels"] else (
        "infeasible" if feasible == 0 else "partial")
    return {
        "gamma_db": gamma_db, "p_budget_dbm": p_budget_dbm,
        "n": dims["n"], "k": dims["k"], "m": dims["m"], "l": dims["l"],
        "order": cfg["order"], "trials": cfg["trials"]["channels"],
        "feasible": feasible,
        "mean_interf_mw": mean_i, "stderr_interf_mw": se_i,
        "mean_power_mw": mean_p, "status": status,
    }


def _robust_point(cfg, idx, gamma_db, r_db, delta):
    dims = cfg["dims"]
    powers = []
    feasible = 0
    for trial in range(cfg["trials"]["channels"]):
        seed = point_seed(cfg["seed"], idx, trial)
        cs = gen_channels(dims["n"], dims["k"], dims["m"], seed=seed)
        frame = psk_frame(dims["k"], dims["l"], cfg["order"], seed=seed + 1)
        est = RobustCiBeamformer(
            gamma_db=gamma_db, r_db=r_db, order=cfg["order"],
            sigma_c2=cfg["sigma_c2"], sigma_r2=cfg["sigma_r2"],
            p_r=cfg["p_r"], delta_h=delta, delta_g=delta, delta_f=delta,
            **_solver_kwargs(cfg))
        try:
            est.fit(cs, frame.phases[:, 0])
        except InfeasibleError:
            continue
        feasible += 1
        powers.append(est.power_)
    mean_p, se_p = _mean_stderr(powers)
    status = "ok" if feasible == cfg["trials"]["channels"] else (
        "infeasible" if feasible == 0 else "partial")
    return {
        "gamma_db": gamma_db, "r_db": r_db, "delta": delta,
        "n": dims["n"], "k": dims["k"], "m": dims["m"],
        "order": cfg["order"], "trials": cfg["trials"]["channels"],
        "feasible": feasible,
        "mean_power_mw": mean_p, "stderr_power_mw": se_p, "status": status,
    }


def _radar_setup(cfg, seed, gamma_db, r_db):
    """Draw one coexistence scene and the CI transmit sequence for it."""
    dims = cfg["dims"]
    cs = gen_channels(dims["n"], dims["k"], dims["m"], seed=seed)
    frame = psk_frame(dims["k"], dims["l"], cfg["order"], seed=seed + 1)
    est = CiPowerMinBeamformer(
        gamma_db=gamma_db, r_db=r_db, order=cfg["order"],
        sigma_c2=cfg["sigma_c2"], sigma_r2=cfg["sigma_r2"], p_r=cfg["p_r"],
        seed=seed, **_solver_kwargs(cfg))
    est.fit(cs, frame.phases[:, 0])
    w_seq = est.transform(frame.phases)
    if cfg.get("detect_precoder") == "fixed":
        # time-averaged fixed precoder (block-level baseline)
        w_seq = np.tile(w_seq.mean(axis=1)[:, None], (1, dims["l"]))
    return cs, frame, w_seq


def _detect_point(cfg, idx, snr_r_db, gamma_db, r_db, p_fa, eta):
    dims = cfg["dims"]
    seed = point_seed(cfg["seed"], idx, 0)
    cs, frame, w_seq = _radar_setup(cfg, seed, gamma_db, r_db)
    theta = math.radians(cfg["theta_deg"])
    length = dims["l"]
    snr_lin = db_to_lin(snr_r_db)
    # alpha chosen so that |alpha|^2 L P_R / sigma_R^2 hits the target SNR
    alpha = math.sqrt(snr_lin * cfg["sigma_r2"] / (length * cfg["p_r"]))
    scene = RadarScene(
        positions=ula_positions(dims["m"]), theta=theta, alpha=alpha,
        p_r=cfg["p_r"], waveform=radar_waveform(dims["m"], length,
                                                seed=seed + 2),
        sigma_c2=cfg["sigma_c2"], sigma_r2=cfg["sigma_r2"])
    report = radar.monte_carlo_detection(
        scene, cs.G, w_seq, cfg["trials"]["detection"], p_fa=p_fa, eta=eta,
        seed=seed + 3)
    cov = radar.interference_covariance(cs.G, w_seq, cfg["sigma_r2"])
    try:
        crb_rep = radar.crb(theta, scene.positions, cov.regularized,
                            snr_lin, cfg["sigma_r2"])
        crb_val, rmse = crb_rep.crb, crb_rep.rmse
    except radar.DegenerateGeometryError:
        crb_val, rmse = math.nan, math.nan
    return {
        "snr_db": snr_r_db, "gamma_db": gamma_db, "rho": report.rho,
        "eta": report.eta, "pd_analytic": report.p_d_analytic,
        "pd_empirical": report.p_d_empirical, "ci_low": report.ci_low,
        "ci_high": report.ci_high, "crb": crb_val, "rmse": rmse,
        "trials": report.trials, "status": "ok",
    }


def _crb_point(cfg, idx, snr_r_db, gamma_db, r_db):
    dims = cfg["dims"]
    theta = math.radians(cfg["theta_deg"])
    snr_lin = db_to_lin(snr_r_db)
    crbs = []
    for trial in range(cfg["trials"]["channels"]):
        seed = point_seed(cfg["seed"], idx, trial)
        cs, frame, w_seq = _radar_setup(cfg, seed, gamma_db, r_db)
        cov = radar.interference_covariance(cs.G, w_seq, cfg["sigma_r2"])
        rep = radar.crb(theta, ula_positions(dims["m"]), cov.regularized,
                        snr_lin, cfg["sigma_r2"])
        crbs.append(rep.crb)
    mean_crb, _ = _mean_stderr(crbs)
    return {
        "snr_db": snr_r_db, "gamma_db": gamma_db, "rho": math.nan,
        "eta": math.nan, "pd_analytic": math.nan, "pd_empirical": math.nan,
        "ci_low": math.nan, "ci_high": math.nan,
        "crb": mean_crb, "rmse": math.sqrt(mean_crb),
        "trials": cfg["trials"]["channels"], "status": "ok",
    }


def _compare_oracle_rows(cfg):
    """Re-solve golden instances with the fast dual solver and report the
    objective gap.  With no golden files yet, instances are generated and
    dumped for the reference solver to consume."""
    golden = cfg.get("golden_dir")
    rows = []
    files = sorted(Path(golden).glob("*.json")) if golden else []
    if not files:
        dims = cfg["dims"]
        count = cfg["trials"]["channels"]
        gamma_db = cfg["sweep"]["gamma_db"][0]
        r_db = cfg["sweep"]["r_db"][0]
        for trial in range(count):
            seed = point_seed(cfg["seed"], 0, trial)
            cs = gen_channels(dims["n"], dims["k"], dims["m"], seed=seed)
            frame = psk_frame(dims["k"], dims["l"], cfg["order"],
                              seed=seed + 1)
            inst = serialize.instance_to_dict(
                cs, frame.phases[:, 0], gamma_db=gamma_db, r_db=r_db,
                order=cfg["order"], sigma_c2=cfg["sigma_c2"],
                sigma_r2=cfg["sigma_r2"], p_r=cfg["p_r"], seed=seed)
            _maybe_dump(cfg, inst, f"oracle-{trial}")
            rows.append({"instance": serialize.instance_hash(inst)[:12],
                         "problem": "p5", "power_mw": math.nan,
                         "power_oracle_mw": math.nan, "abs_diff_mw": math.nan,
                         "status": "dumped"})
        return rows
    for path in files:
        record = json.loads(path.read_text())
        if "instance" not in record or "objective_mw" not in record:
            continue
        cs, phases, params = serialize.instance_from_dict(record["instance"])
        problem_tag = record.get("problem", "p5")
        kw = _solver_kwargs(cfg)
        try:
            if problem_tag in ("p5", "p3", "p0", "power-min"):
                est = CiPowerMinBeamformer(
                    gamma_db=params["gamma_db"], r_db=params.get("r_db", 0.0),
                    order=params["order"], sigma_c2=params["sigma_c2"],
                    sigma_r2=params["sigma_r2"], p_r=params["p_r"], **kw)
            elif problem_tag in ("p4", "p1", "interf-min"):
                est = CiInterferenceMinBeamformer(
                    gamma_db=params["gamma_db"],
                    p_budget_mw=params["p_budget_mw"],
                    order=params["order"], sigma_c2=params["sigma_c2"],
                    sigma_r2=params["sigma_r2"], p_r=params["p_r"], **kw)
            elif problem_tag in ("p13", "p11", "robust"):
                deltas = record.get("deltas", {})
                est = RobustCiBeamformer(
                    gamma_db=params["gamma_db"], r_db=params.get("r_db", 0.0),
                    order=params["order"], sigma_c2=params["sigma_c2"],
                    sigma_r2=params["sigma_r2"], p_r=params["p_r"],
                    delta_h=deltas.get("delta_h"),
                    delta_g=deltas.get("delta_g"),
                    delta_f=deltas.get("delta_f"), **kw)
            else:
                raise ValueError(f"unknown problem tag {problem_tag!r}")
            est.fit(cs, phases)
            ours = est.solution_.objective
            status = "ok"
        except InfeasibleError:
            ours = math.nan
            status = "infeasible"
        oracle = float(record["objective_mw"])
        rows.append({
            "instance": record.get("hash",
                                   serialize.instance_hash(
                                       record["instance"]))[:12],
            "problem": problem_tag, "power_mw": ours,
            "power_oracle_mw": oracle,
            "abs_diff_mw": abs(ours - oracle), "status": status,
        })
    return rows


# --- drivers ------------------------------------------------------------


def _sweep_points(cfg):
    sweep = cfg["sweep"]
    mode = cfg["mode"]
    if mode == "power-min":
        return [(g, r) for g in sweep["gamma_db"] for r in sweep["r_db"]]
    if mode == "interf-min":
        return [(g, p) for g in sweep["gamma_db"]
                for p in sweep["p_budget_dbm"]]
    if mode == "robust":
        return [(g, r, d) for g in sweep["gamma_db"]
                for r in sweep["r_db"] for d in sweep["delta"]]
    if mode in ("radar-detect", "crb"):
        return [(s, g, r) for s in sweep["snr_r_db"]
                for g in sweep["gamma_db"] for r in sweep["r_db"]]
    return [()]


def run(cfg: ExperimentConfig) -> SweepResult:
    mode = cfg["mode"]
    points = _sweep_points(cfg)
    t0 = time.perf_counter()
    eta = None
    if cfg.get("eta_dbm") is not None:
        eta = db_to_lin(cfg["eta_dbm"])   # threshold quoted in dB units

    def work(args):
        idx, point = args
        if mode == "power-min":
            return _power_min_point(cfg, idx, *point)
        if mode == "interf-min":
            return _interf_min_point(cfg, idx, *point)
        if mode == "robust":
            return _robust_point(cfg, idx, *point)
        if mode == "radar-detect":
            return _detect_point(cfg, idx, *point,
                                 p_fa=cfg["p_fa"], eta=eta)
        if mode == "crb":
            return _crb_point(cfg, idx, *point)
        raise AssertionError(mode)

    if mode == "compare-oracle":
        rows = _compare_oracle_rows(cfg)
    else:
        threads = max(1, int(cfg.get("threads", 1)))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(work, enumerate(points)))
        else:
            rows = [work(item) for item in enumerate(points)]
    elapsed = time.perf_counter() - t0
    header = list(rows[0].keys()) if rows else ["status"]
    n_bad = sum(1 for r in rows if r.get("status") == "infeasible")
    summary = {
        "config": cfg.data,
        "mode": mode,
        "rows": len(rows),
        "infeasible_rows": n_bad,
        "wall_clock_s": elapsed,
        "wall_clock_per_point_s": elapsed / max(1, len(rows)),
    }
    result = SweepResult(header=header, rows=rows, summary=summary,
                         n_infeasible=n_bad)
    if cfg.get("out"):
        write_outputs(result, cfg["out"])
    return result


def bench(cfg: ExperimentConfig) -> SweepResult:
    """Wall-clock comparison of the dual projection solver against the
    interior-point engine over a range of user counts."""
    from . import ci, gp

    dims = cfg["dims"]
    rows = []
    gamma_db = cfg["sweep"]["gamma_db"][0]
    r_db = cfg["sweep"]["r_db"][0]
    t0 = time.perf_counter()
    for idx, k in enumerate(cfg["bench_k"]):
        gp_times, ipm_times = [], []
        for trial in range(cfg["bench_instances"]):
            seed = point_seed(cfg["seed"], idx, trial)
            cs = gen_channels(dims["n"], int(k), dims["m"], seed=seed)
            frame = psk_frame(int(k), 1, cfg["order"], seed=seed + 1)
            problem = ci.build_ci_problem(
                cs, frame.phases[:, 0], order=cfg["order"],
                gamma_db=gamma_db, r_db=r_db, sigma_c2=cfg["sigma_c2"],
                sigma_r2=cfg["sigma_r2"], p_r=cfg["p_r"])
            tic = time.perf_counter()
            gp.solve_gp(problem, gp.GpOptions(seed=seed))
            gp_times.append(time.perf_counter() - tic)
            tic = time.perf_counter()
            ci.solve_p5_ipm(problem)
            ipm_times.append(time.perf_counter() - tic)
        gp_arr, ipm_arr = np.array(gp_times), np.array(ipm_times)
        rows.append({
            "k": int(k), "n": dims["n"], "m": dims["m"],
            "instances": cfg["bench_instances"],
            "gamma_db": gamma_db, "r_db": r_db,
            "gp_mean_s": float(gp_arr.mean()),
            "gp_p50_s": float(np.percentile(gp_arr, 50)),
            "gp_p90_s": float(np.percentile(gp_arr, 90)),
            "ipm_mean_s": float(ipm_arr.mean()),
            "ipm_p50_s": float(np.percentile(ipm_arr, 50)),
            "ipm_p90_s": float(np.percentile(ipm_arr, 90)),
            "status": "ok",
        })
    summary = {"config": cfg.data, "mode": "bench", "rows": len(rows),
               "wall_clock_s": time.perf_counter() - t0}
    result = SweepResult(header=list(rows[0].keys()), rows=rows,
                         summary=summary)
    if cfg.get("out"):
        write_outputs(result, cfg["out"])
    return result


def format_csv(result: SweepResult) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(result.header)
    for row in result.rows:
        writer.writerow([_csv_cell(row.get(col)) for col in result.header])
    return buf.getvalue()


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return repr(value)
    return value


def write_outputs(result: SweepResult, out_path) -> None:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_csv(result), newline="")
    out.with_suffix(".summary.json").write_text(
        json.dumps(result.summary, indent=2, default=str) + "\n")
