"""Command-line driver.  Every subcommand writes figure-ready rows as CSV or JSON."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from typing import Iterable, Sequence

import numpy as np

from . import analysis as an
from . import channels as chn
from . import engine as eng
from . import harness as hn
from . import linalg as la
from . import tasks as tk
from .config import (
    DEFAULT_METHODS,
    DEFAULT_N_GRID,
    ConfigError,
    RunConfig,
    reference_multiparam_setting,
)
from .stats import EstimateRecord

RECORD_COLUMNS = ("method", "N", "p", "trial", "layers", "m", "gap", "ci_low", "ci_high",
                  "gamma", "eta", "seed")
FEEDBACK_COLUMNS = RECORD_COLUMNS + ("iteration", "prob_gap")
ROBUST_COLUMNS = RECORD_COLUMNS + ("noise", "pec_rate")
LOCATION_COLUMNS = ("region", "family", "p", "numerator", "denominator", "gap", "seed")
COST_COLUMNS = ("family", "p", "ignore_cost", "pec_cost", "verdict")
THEOREM_COLUMNS = ("family", "p", "f01", "ratio_change", "numerator_scale", "expected_scale",
                   "f_diag_ok", "ok")
SCALING_COLUMNS = ("method", "N", "m", "L", "bias_sq", "variance")
REGIONS = ("control", "between", "anc_after", "tar_after")
PEC_MODE = "exact-branch-sum"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- serialisation

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "nan" if math.isnan(v) else format(v, ".17g")
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, str)) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    v = float(value)
    # 17 significant digits, NaN as null
    return None if math.isnan(v) else float(format(v, ".17g"))


def record_row(r: EstimateRecord) -> dict:
    row = {
        "method": r.method, "N": r.N, "p": r.p, "trial": r.trial, "layers": r.layers,
        "m": r.m, "gap": r.gap, "ci_low": r.ci_low, "ci_high": r.ci_high,
        "gamma": r.gamma, "eta": r.eta, "seed": r.seed,
    }
    row.update(r.extra)
    return row


def emit(rows: Sequence[dict], fmt: str = "csv", path: str | None = None,
         columns: Sequence[str] = RECORD_COLUMNS) -> str:
    """Serialise rows in ``columns`` order; write to ``path`` (or return the text)."""
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, float("nan"))) for c in columns])
        text = buf.getvalue()
    elif fmt == "json":
        objs = [{c: _json_value(row.get(c, float("nan"))) for c in columns} for row in rows]
        text = json.dumps(objs, indent=1) + "\n"
    else:
        raise UsageError(f"unknown format {fmt!r}")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def parse_rows(text: str, fmt: str) -> list[dict]:
    """Inverse of :func:`emit`, numbers parsed back to floats (NaN for null/"nan")."""
    if fmt == "json":
        return [{k: (float("nan") if v is None else v) for k, v in o.items()} for o in json.loads(text)]
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        parsed = {}
        for k, v in row.items():
            try:
                parsed[k] = int(v)
            except ValueError:
                try:
                    parsed[k] = float(v)
                except ValueError:
                    parsed[k] = v
        out.append(parsed)
    return out


# ---------------------------------------------------------------- argument handling

def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration (schema: 1)")
    common.add_argument("--seed", type=_u64, help="64-bit master seed")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--N", type=_int_list, help="encoding count(s), comma separated")
    common.add_argument("--p", type=_float_list, help="noise rate(s), comma separated")
    common.add_argument("--m", type=int, help="purification order")
    common.add_argument("--layers", type=int, help="VCP layers (or maximum layers for scans)")
    common.add_argument("--shots", type=int, help="shots per estimate (omit for exact mode)")
    common.add_argument("--trials", type=int, help="repetitions")

    parser = argparse.ArgumentParser(prog="purimetro", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one experiment from --config")
    sub.add_parser("scan-n", parents=[common], help="gap versus N for several methods")
    loc = sub.add_parser("noise-locations", parents=[common], help="per-region cSWAP noise scan")
    loc.add_argument("--family", default="depolarizing")
    loc.add_argument("--regions", default=",".join(REGIONS))
    cost = sub.add_parser("cost-compare", parents=[common], help="ignore-vs-PEC control-noise cost")
    cost.add_argument("--family", default="dephasing")
    th = sub.add_parser("theorem1", parents=[common], help="control-noise invariance report")
    th.add_argument("--family", default="all")
    sub.add_parser("scaling", parents=[common], help="analytic bias/variance versus N")
    fb = sub.add_parser("feedback", parents=[common], help="sequential feedback with MLE")
    fb.add_argument("--iterations", type=int, default=None)
    rb = sub.add_parser("robustness", parents=[common], help="correlated cSWAP noise with mis-set PEC")
    rb.add_argument("--pec-rate", type=float, default=None)
    return parser


def _load(args) -> RunConfig | None:
    return RunConfig.load(args.config) if args.config else None


def _seed(args, cfg: RunConfig | None) -> int:
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be a 64-bit unsigned integer")
        return args.seed
    return cfg.spec.master_seed if cfg else 0


def _fmt_out(args, cfg):
    fmt = args.format or (cfg.output_format if cfg else "csv")
    path = args.out or (cfg.output_path if cfg else None)
    return fmt, path


def _apply_overrides(spec: hn.ExperimentSpec, args, seed: int) -> hn.ExperimentSpec:
    task, mit, noise = spec.task, spec.mitigation, spec.noise
    if args.N:
        task = replace(task, N=args.N[0])
    if args.m is not None:
        mit = replace(mit, m=args.m)
    if args.layers is not None:
        mit = replace(mit, layers=args.layers)
    if args.p:
        noise = replace(noise, cswap=replace(noise.cswap, p=args.p[0]))
    shots = args.shots if args.shots is not None else spec.shots
    trials = args.trials if args.trials is not None else spec.trials
    return replace(spec, task=task, mitigation=mit, noise=noise, shots=shots,
                   trials=trials, master_seed=seed)


def _config_for(method: str, m: int, layers: int = 1) -> eng.PurificationConfig:
    pec = PEC_MODE if method in ("pvsp", "pvcp") else "off"
    return eng.PurificationConfig(method, m=m, layers=layers, pec_mode=pec)


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- subcommands

def cmd_run(args) -> tuple[list[dict], Sequence[str]]:
    cfg = _load(args)
    if cfg is None:
        raise UsageError("run needs --config")
    spec = _apply_overrides(cfg.spec, args, _seed(args, cfg))
    if spec.task.kind == "multiparam-feedback":
        iters = int(cfg.scan.get("iterations", 10))
        return [record_row(r) for r in hn.run_feedback(spec, iters)], FEEDBACK_COLUMNS
    return [record_row(r) for r in hn.run_experiment(spec)], RECORD_COLUMNS


def cmd_scan_n(args):
    cfg = _load(args)
    base = cfg.spec if cfg else reference_multiparam_setting()
    scan = cfg.scan if cfg else {}
    seed = _seed(args, cfg)
    base = _apply_overrides(base, args, seed)
    n_grid = args.N or scan.get("N") or list(DEFAULT_N_GRID)
    methods = scan.get("methods") or list(DEFAULT_METHODS)
    l_max = args.layers or scan.get("l_max") or hn.default_l_max(base.task)
    m = base.mitigation.m
    rows = []
    for N in n_grid:
        for method in methods:
            spec = replace(base, task=replace(base.task, N=int(N)), mitigation=_config_for(method, m))
            _, recs = hn.run_layer_scan(spec, l_max)
            rows.extend(record_row(r) for r in recs)
        _progress(f"scan-n: N={N} done")
    rows.sort(key=lambda r: (r["method"], r["N"], r["trial"]))
    return rows, RECORD_COLUMNS


def noise_location_row(task_spec, noise, region: str, family: str, p: float, m: int = 2) -> dict:
    """Single-layer VCP with cSWAP noise of ``family``/``p`` in one region only."""
    circuit = tk.build_circuit(task_spec, noise)
    ch = chn.make_channel(family, p)
    mask = eng.NoiseLocationMask.only(region, ch)
    out = eng.run_vcp_circuit(circuit.gates, circuit.probe, m, 1,
                              cswap_noise=eng.CswapNoise(), mask=mask)
    nums, _, den = out.outcome_ratios()
    nums = tk._reorder(nums, circuit.outcome_order)
    params = tk.estimate_params(task_spec, tk.normalise_probs(nums / den))
    return {"region": region, "family": family, "p": p, "numerator": float(nums[0]),
            "denominator": den, "gap": tk.gap(task_spec.true_params, params)}


def cmd_noise_locations(args):
    cfg = _load(args)
    base = cfg.spec if cfg else reference_multiparam_setting()
    seed = _seed(args, cfg)
    base = _apply_overrides(base, args, seed)
    rates = args.p or (cfg.scan.get("p") if cfg else None) or [0.0, 0.01, 0.02, 0.05, 0.1]
    regions = [r for r in args.regions.split(",") if r]
    for r in regions:
        if r not in REGIONS:
            raise UsageError(f"unknown region {r!r}; choose from {', '.join(REGIONS)}")
    rows = []
    for region in regions:
        for p in rates:
            row = noise_location_row(base.task, base.noise, region, chn.canonical_family(args.family),
                                     float(p), base.mitigation.m)
            row["seed"] = seed
            rows.append(row)
    return rows, LOCATION_COLUMNS


def cmd_cost_compare(args):
    rates = args.p or [float(x) for x in np.linspace(0.01, 0.45, 45)]
    families = (["dephasing", "depolarizing", "amplitude_damping"] if args.family == "all"
                else [args.family])
    rows = []
    for fam in families:
        for p in rates:
            rep = an.cost_comparison(fam, p)
            rows.append({"family": rep.family, "p": rep.p, "ignore_cost": rep.ignore_cost,
                         "pec_cost": rep.pec_cost, "verdict": rep.verdict})
    return rows, COST_COLUMNS


def theorem1_row(family: str, p: float, seed: int) -> dict:
    """Ratio change and numerator scaling when control noise F is added to a fixed VCP instance."""
    rng = hn.make_rng(seed)
    rho = la.random_density_matrix(2, rng)
    obs = la.random_hermitian(2, rng)
    u = la.random_unitary(2, rng)
    gates = [eng.Gate(u, chn.depolarizing(0.05))]
    cfg = eng.PurificationConfig("vcp")
    ref = eng.simulate_vcp(gates, rho, obs, cfg, mask=eng.NoiseLocationMask.all_off())
    f = chn.make_channel(family, p)
    report = chn.check_theorem1(chn.depolarizing(0.05), f)
    out = eng.run_vcp_circuit(gates, rho, 2, 1, mask=eng.NoiseLocationMask.only("control", f))
    num, den = out.expectations(obs)
    change = abs(num / den - ref.ratio) if abs(den) >= eng.DENOMINATOR_FLOOR else float("nan")
    expected = float(np.real(report.f01**3))
    scale = num / ref.numerator
    ok = report.ok and abs(scale - expected) < 1e-10 and (math.isnan(change) or change < 1e-10)
    return {"family": family, "p": p, "f01": float(np.real(report.f01)), "ratio_change": change,
            "numerator_scale": scale, "expected_scale": expected,
            "f_diag_ok": report.f_diag_ok, "ok": ok}


def cmd_theorem1(args):
    seed = _seed(args, _load(args))
    families = (["depolarizing", "dephasing", "amplitude_damping"] if args.family == "all"
                else [chn.canonical_family(args.family)])
    rates = args.p or [0.1, 0.3, 0.5]
    rows = [theorem1_row(f, p, seed) for f in families for p in rates]
    return rows, THEOREM_COLUMNS


def cmd_scaling(args):
    cfg = _load(args)
    gate_p, cswap_p = 0.001, 0.05
    if args.p:
        gate_p = args.p[0]
        cswap_p = args.p[1] if len(args.p) > 1 else cswap_p
    m_values = [args.m] if args.m else [2, 3]
    l_values = list(range(1, (args.layers or 2) + 1))
    grid = args.N or (cfg.scan.get("N") if cfg else None)
    shots = args.shots or an.DEFAULT_SHOTS
    pts = an.scaling_scan(gate_p, cswap_p, m_values, l_values, grid, shots=shots)
    rows = [{"method": p.method, "N": p.N, "m": p.m, "L": p.L, "bias_sq": p.bias_sq,
             "variance": p.variance} for p in pts]
    rows.sort(key=lambda r: (r["method"], r["N"], r["m"], r["L"]))
    return rows, SCALING_COLUMNS


def feedback_spec() -> hn.ExperimentSpec:
    N = 150
    return hn.ExperimentSpec(
        task=tk.TaskSpec("multiparam-feedback", (math.pi / 4, math.pi / 6, math.pi / 6), N, 1 / (2 * N),
                         "rotated-Bell"),
        noise=chn.NoiseModel.uniform("depolarizing", 0.005, 0.01, 0.025),
        shots=10**5, trials=1,
    )


def cmd_feedback(args):
    cfg = _load(args)
    base = cfg.spec if cfg and cfg.spec.task.kind == "multiparam-feedback" else feedback_spec()
    seed = _seed(args, cfg)
    base = _apply_overrides(base, args, seed)
    iters = args.iterations or (int(cfg.scan.get("iterations", 10)) if cfg else 10)
    methods = (cfg.scan.get("methods") if cfg else None) or ["none", "pvcp"]
    rows = []
    for method in methods:
        spec = replace(base, mitigation=_config_for(method, base.mitigation.m, base.mitigation.layers))
        rows.extend(record_row(r) for r in hn.run_feedback(spec, iters))
        _progress(f"feedback: {method} done")
    rows.sort(key=lambda r: (r["method"], r["N"], r["trial"], r["iteration"]))
    return rows, FEEDBACK_COLUMNS


def cmd_robustness(args):
    cfg = _load(args)
    seed = _seed(args, cfg)
    base = _apply_overrides(cfg.spec if cfg else reference_multiparam_setting(), args, seed)
    n_grid = args.N or (cfg.scan.get("N") if cfg else None) or [100, 500]
    families = (cfg.scan.get("families") if cfg else None) or ["depolarizing", "dephasing"]
    p0, p1 = 0.05, 0.01
    pec_rate = args.pec_rate if args.pec_rate is not None else 1.1 * p0
    l_max = args.layers or hn.default_l_max(base.task)
    rows = []
    for fam in families:
        noise = chn.NoiseModel(
            chn.NoiseSpec(fam, base.noise.single_qubit.p),
            chn.NoiseSpec(fam, base.noise.two_qubit.p),
            chn.NoiseSpec(fam, p0, p1),
        )
        for N in n_grid:
            for method in ("none", "pvcp", "pvsp"):
                spec = replace(base, task=replace(base.task, N=int(N)), noise=noise,
                               mitigation=_config_for(method, base.mitigation.m),
                               pec_assumed_noise=(fam, pec_rate) if method != "none" else None)
                _, recs = hn.run_layer_scan(spec, l_max)
                for r in recs:
                    row = record_row(r)
                    row.update({"noise": f"{fam}({p0},{p1})", "pec_rate": pec_rate})
                    rows.append(row)
            _progress(f"robustness: {fam} N={N} done")
    rows.sort(key=lambda r: (r["method"], r["N"], r["trial"], r["noise"]))
    return rows, ROBUST_COLUMNS


COMMANDS = {
    "run": cmd_run,
    "scan-n": cmd_scan_n,
    "noise-locations": cmd_noise_locations,
    "cost-compare": cmd_cost_compare,
    "theorem1": cmd_theorem1,
    "scaling": cmd_scaling,
    "feedback": cmd_feedback,
    "robustness": cmd_robustness,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        rows, columns = COMMANDS[args.command](args)
        fmt, path = _fmt_out(args, _load(args))
        text = emit(rows, fmt, path, columns)
        if not path:
            sys.stdout.write(text)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"purimetro {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"purimetro {args.command}: cannot write output: {exc}", file=sys.stderr)
        return 1
    return 0


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    main_entry()
