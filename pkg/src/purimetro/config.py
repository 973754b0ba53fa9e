"""YAML run configuration with strict validation and a lossless spec roundtrip.

Example::

    schema: 1
    task: {kind: multiparam-sequential, params: [1.0, 0.9, 0.8], N: 100, t: 0.001}
    noise:
      single_qubit: {family: depolarizing, p: 0.001}
      two_qubit: {family: depolarizing, p: 0.01}
      cswap: {family: depolarizing, p: 0.05}
    mitigation: {method: pvcp, m: 2, layers: 1, pec_mode: exact-branch-sum}
    shots: null
    trials: 1
    seed: 0
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import yaml

from . import channels as chn
from . import engine as eng
from . import tasks as tk
from .harness import ExperimentSpec

SCHEMA = 1
DEFAULT_N_GRID = (10, 50, 100, 200, 500, 800, 1000)
DEFAULT_METHODS = ("none", "vcp", "pvcp", "vsp", "pvsp")

_TOP = {"schema", "task", "noise", "mitigation", "shots", "trials", "seed",
        "pec_assumed", "output", "scan"}
_TASK = {"kind", "params", "N", "t", "measurement"}
_NOISE = {"single_qubit", "two_qubit", "cswap"}
_NOISE_ENTRY = {"family", "p", "p_global", "table"}
_MITIGATION = {"method", "m", "layers", "ancilla_refresh", "pec_mode"}
_PEC = {"family", "p"}
_OUTPUT = {"path", "format"}
_SCAN = {"N", "p", "methods", "regions", "families", "l_max", "iterations"}


class ConfigError(ValueError):
    """Invalid run configuration."""


def _check_keys(section: str, data: Any, allowed: set) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(sorted(map(str, unknown)))}")
    return data


@dataclass
class RunConfig:
    spec: ExperimentSpec
    output_path: str | None = None
    output_format: str = "csv"
    scan: dict = field(default_factory=dict)

    # ------------------------------------------------------------ parsing
    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = _check_keys("<top>", raw, _TOP)
        if raw.get("schema") != SCHEMA:
            raise ConfigError(f"expected schema: {SCHEMA}, got {raw.get('schema')!r}")
        try:
            task = _task_from(_check_keys("task", raw.get("task"), _TASK))
            noise = _noise_from(_check_keys("noise", raw.get("noise"), _NOISE))
            mit = eng.PurificationConfig(**_check_keys("mitigation", raw.get("mitigation"), _MITIGATION))
            pec_raw = _check_keys("pec_assumed", raw.get("pec_assumed"), _PEC)
            pec = (chn.canonical_family(pec_raw["family"]), float(pec_raw["p"])) if pec_raw else None
            shots = raw.get("shots")
            spec = ExperimentSpec(
                task=task, noise=noise, mitigation=mit,
                shots=None if shots is None else int(shots),
                trials=int(raw.get("trials", 1)),
                master_seed=int(raw.get("seed", 0)),
                pec_assumed_noise=pec,
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        out = _check_keys("output", raw.get("output"), _OUTPUT)
        fmt = out.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ConfigError(f"output format must be csv or json, got {fmt!r}")
        scan = dict(_check_keys("scan", raw.get("scan"), _SCAN))
        return cls(spec, out.get("path"), fmt, scan)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML in {path!r}: {exc}") from exc
        return cls.from_dict(raw or {})

    # ------------------------------------------------------------ dumping
    def to_dict(self) -> dict:
        s = self.spec
        out = {
            "schema": SCHEMA,
            "task": {
                "kind": s.task.kind, "params": list(s.task.true_params), "N": s.task.N,
                "t": s.task.t, "measurement": s.task.measurement,
            },
            "noise": {
                "single_qubit": _noise_entry(s.noise.single_qubit),
                "two_qubit": _noise_entry(s.noise.two_qubit),
                "cswap": _noise_entry(s.noise.cswap),
            },
            "mitigation": {
                "method": s.mitigation.method, "m": s.mitigation.m,
                "layers": s.mitigation.layers,
                "ancilla_refresh": s.mitigation.ancilla_refresh,
                "pec_mode": s.mitigation.pec_mode,
            },
            "shots": s.shots,
            "trials": s.trials,
            "seed": s.master_seed,
            "pec_assumed": (
                None if s.pec_assumed_noise is None
                else {"family": s.pec_assumed_noise[0], "p": s.pec_assumed_noise[1]}
            ),
            "output": {"path": self.output_path, "format": self.output_format},
        }
        if self.scan:
            out["scan"] = dict(self.scan)
        return out

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _task_from(d: dict) -> tk.TaskSpec:
    if "kind" not in d:
        raise ConfigError("task.kind is required")
    return tk.TaskSpec(
        kind=d["kind"], true_params=tuple(d.get("params", (0.0,))),
        N=int(d.get("N", 1)), t=float(d.get("t", 1.0)),
        measurement=d.get("measurement", "") or "",
    )


def _noise_spec(section: str, d: dict) -> chn.NoiseSpec:
    d = _check_keys(section, d, _NOISE_ENTRY)
    if not d:
        return chn.NoiseSpec()
    pg = d.get("p_global")
    return chn.NoiseSpec(
        family=d.get("family", "identity"), p=float(d.get("p", 0.0)),
        p_global=None if pg is None else float(pg),
        table=d.get("table"),
    )


def _noise_from(d: dict) -> chn.NoiseModel:
    return chn.NoiseModel(
        _noise_spec("noise.single_qubit", d.get("single_qubit")),
        _noise_spec("noise.two_qubit", d.get("two_qubit")),
        _noise_spec("noise.cswap", d.get("cswap")),
    )


def _noise_entry(spec: chn.NoiseSpec) -> dict:
    out = {"family": spec.family, "p": spec.p}
    if spec.p_global is not None:
        out["p_global"] = spec.p_global
    if spec.table is not None:
        out["table"] = dict(spec.table)
    return out


def reference_multiparam_setting(N: int = 100) -> ExperimentSpec:
    """λ = (1, 0.9, 0.8), t = 0.001, depolarizing rates 0.001 / 0.01 / 0.05."""
    return ExperimentSpec(
        task=tk.TaskSpec("multiparam-sequential", (1.0, 0.9, 0.8), N, 0.001),
        noise=chn.NoiseModel.uniform("depolarizing", 0.001, 0.01, 0.05),
    )
