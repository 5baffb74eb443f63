"""Command-line interface: gen, fit, eval, bound, rademacher, verify.

One JSON config drives every subcommand; the only flags are --config,
--output-dir, and --seed.  The config is schema-validated before any
computation (unknown keys are rejected, with the offending path in the
message), all paths are resolved relative to the config file, and every
report embeds the tool version, a hash of the effective config, and the
tolerances used, so a rerun of the same config is byte-identical.

Exit codes: 0 success, 1 verification violations, 2 config error, 3 IO
failure, 4 numeric blow-up.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .bounds import (InnerOptConfig, class_spec_for, dudley_bound,
                     excess_risk_certificate, rademacher_estimate)
from .datasets import SHAPES, GeneratorSpec, generate
from .fields import BumpSpec, ComparisonFn, FieldFamily
from .flows import FlowConfig, FlowDivergenceError
from .model import Dataset, _atomic_write, empirical_risk, \
    load_model, save_model
from .train import EncoderSpec, TrainConfig, fit as train_fit, init_trainable
from .verify import (check_initial_condition, check_net_radius,
                     check_single_flow_perturbation, check_tuple_perturbation)

__all__ = ["main", "run", "CONFIG_SCHEMA", "ConfigError"]

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    pass


_NUM = {"type": "number"}
_INT = {"type": "integer"}
_STR = {"type": "string"}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "output_dir": _STR,
        "seed": _INT,
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": _STR,
                "out": _STR,
                "shape": {"enum": list(SHAPES)},
                "dim": {"type": "integer", "minimum": 1},
                "n": {"type": "integer", "minimum": 1},
                "sampling": {"enum": ["grid", "uniform"]},
                "noise_sigma": {"type": "number", "minimum": 0},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "seed": _INT,
                "embed_seed": _INT,
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": _STR,
                "out": _STR,
                "dim": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "field_kind": {"enum": ["constant", "affine", "recurrent"]},
                "encoder_kind": {"enum": ["affine", "mlp"]},
                "hidden": {"type": "integer", "minimum": 1},
                "interval": {"type": "array", "items": _NUM,
                             "minItems": 2, "maxItems": 2},
                "v_max": {"type": "number", "exclusiveMinimum": 0},
                "bump": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "inner_radius": {"type": "number", "exclusiveMinimum": 0},
                        "outer_radius": {"type": "number", "exclusiveMinimum": 0},
                        "profile": {"type": "integer", "minimum": 2},
                    },
                    "required": ["inner_radius", "outer_radius"],
                },
            },
        },
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "step_size_max": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["rk4"]},
                "min_steps": {"type": "integer", "minimum": 1},
                "safety_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "optimizer": {"enum": ["gd", "momentum", "adaptive_moment"]},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "lr_decay": {"type": "number", "exclusiveMinimum": 0,
                             "maximum": 1},
                "field_init": {"enum": ["auto", "family"]},
                "max_iters": {"type": "integer", "minimum": 1},
                "restarts": {"type": "integer", "minimum": 1},
                "seed": _INT,
                "grad_tolerance": {"type": "number", "minimum": 0},
                "anchor_count": {"type": "integer", "minimum": 1},
                "weight_radius": {"type": "number", "exclusiveMinimum": 0},
                "init_scale": {"type": "number", "exclusiveMinimum": 0},
                "history_out": _STR,
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "confidence": {"type": "number", "exclusiveMinimum": 0,
                               "exclusiveMaximum": 1},
                "support_radius": {"type": "number", "minimum": 0},
                "rate": {"type": "number", "exclusiveMinimum": 0},
                "gamma_resolution": {"type": "integer", "minimum": 3},
                "eps_cut": {"type": "number", "exclusiveMinimum": 0,
                            "exclusiveMaximum": 1},
                "quad_tol": {"type": "number", "exclusiveMinimum": 0},
                "weight_radius": {"type": "number", "exclusiveMinimum": 0},
                "n_draws": {"type": "integer", "minimum": 1},
                "inner_restarts": {"type": "integer", "minimum": 1},
                "inner_iters": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "candidate_count": {"type": "integer", "minimum": 1},
                "seed": _INT,
                "out": _STR,
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {
                    "type": "array",
                    "items": {"enum": ["single_flow", "initial_condition",
                                       "tuple", "net_radius"]},
                },
                "kinds": {
                    "type": "array",
                    "items": {"enum": ["constant", "affine", "recurrent"]},
                },
                "trials": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "seed": _INT,
                "out": _STR,
            },
        },
    },
}


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _load_config(path: str, output_dir: str | None, seed: int | None) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    if output_dir is not None:
        cfg["output_dir"] = output_dir
    if seed is not None:
        cfg["seed"] = seed
    cfg.setdefault("seed", 0)
    base = os.path.dirname(os.path.abspath(path))
    cfg["_base"] = base
    out = cfg.get("output_dir", ".")
    cfg["_out"] = out if os.path.isabs(out) else os.path.join(base, out)
    return cfg


def _config_hash(cfg: dict) -> str:
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    blob = json.dumps(clean, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _resolve(cfg: dict, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(cfg["_base"], path)


def _out_path(cfg: dict, name: str) -> str:
    os.makedirs(cfg["_out"], exist_ok=True)
    return os.path.join(cfg["_out"], name)


def _write_report(path: str, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _report_base(cfg: dict, command: str) -> dict:
    return {"version": __version__, "command": command,
            "config_sha256": _config_hash(cfg)}


def _need(cfg: dict, section: str, key: str):
    sec = cfg.get(section) or {}
    if key not in sec:
        raise ConfigError(f"config is missing required key {section}.{key}")
    return sec[key]


def _load_data(cfg: dict) -> Dataset:
    return Dataset.from_csv(_resolve(cfg, _need(cfg, "data", "path")))


def _family_from_config(cfg: dict, dim: int) -> tuple[FieldFamily, int, tuple]:
    mdl = cfg.get("model") or {}
    kind = mdl.get("field_kind", "affine")
    m = mdl.get("m", 2)
    interval = tuple(mdl.get("interval", (-1.0, 1.0)))
    v_max = mdl.get("v_max", 1.0)
    bump = None
    if "bump" in mdl:
        b = mdl["bump"]
        bump = BumpSpec(inner_radius=b["inner_radius"],
                        outer_radius=b["outer_radius"],
                        profile=b.get("profile", 3))
    elif kind == "affine":
        raise ConfigError("model.bump is required for affine fields")
    if kind == "constant":
        family = FieldFamily(kind="constant", dim=dim, v_max=v_max, bump=bump)
    elif kind == "affine":
        family = FieldFamily(kind="affine", dim=dim, bump=bump)
    else:
        family = FieldFamily(kind="recurrent", dim=dim)
    return family, m, interval


def _flow_from_config(cfg: dict) -> FlowConfig:
    f = cfg.get("flow") or {}
    return FlowConfig(step_size_max=f.get("step_size_max", 1e-2),
                      method=f.get("method", "rk4"),
                      min_steps=f.get("min_steps", 1),
                      safety_radius=f.get("safety_radius"))


def _train_from_config(cfg: dict) -> TrainConfig:
    t = cfg.get("train") or {}
    return TrainConfig(optimizer=t.get("optimizer", "adaptive_moment"),
                       learning_rate=t.get("learning_rate", 1e-2),
                       max_iters=t.get("max_iters", 300),
                       restarts=t.get("restarts", 3),
                       seed=t.get("seed", cfg["seed"]),
                       grad_tolerance=t.get("grad_tolerance", 1e-8),
                       anchor_count=t.get("anchor_count", 64),
                       weight_radius=t.get("weight_radius", 10.0),
                       lr_decay=t.get("lr_decay", 1.0),
                       field_init=t.get("field_init", "auto"))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(cfg: dict) -> int:
    sec = dict(cfg.get("data") or {})
    sec.pop("path", None)
    out_name = sec.pop("out", "dataset.csv")
    sec.setdefault("seed", cfg["seed"])
    spec = GeneratorSpec(**sec)
    data = generate(spec)
    csv_path = _out_path(cfg, out_name)
    data.to_csv(csv_path)
    manifest = _report_base(cfg, "gen")
    manifest.update({"spec": spec.to_dict(), "n": data.n, "dim": data.dim,
                     "support_radius": data.support_radius,
                     "dataset": out_name})
    _write_report(_out_path(cfg, "gen_manifest.json"), manifest)
    return EXIT_OK


def cmd_fit(cfg: dict) -> int:
    data = _load_data(cfg)
    family, m, interval = _family_from_config(cfg, data.dim)
    mdl = cfg.get("model") or {}
    t = cfg.get("train") or {}
    enc_spec = EncoderSpec(kind=mdl.get("encoder_kind", "mlp"),
                           hidden=mdl.get("hidden", 16),
                           init_scale=t.get("init_scale", 0.1))
    tcfg = _train_from_config(cfg)
    flow_cfg = _flow_from_config(cfg)
    report = train_fit(data, family, enc_spec, m=m, interval=interval,
                       cfg=tcfg, flow_cfg=flow_cfg)
    model_name = mdl.get("out", "model.json")
    save_model(report.model, _out_path(cfg, model_name))
    hist_name = t.get("history_out", "history.csv")
    lines = ["iter,risk,grad_norm"]
    lines += [f"{i},{risk:.17g},{g:.17g}"
              for i, (risk, g) in enumerate(report.history)]
    _atomic_write(_out_path(cfg, hist_name), "\n".join(lines) + "\n")
    payload = _report_base(cfg, "fit")
    payload.update({"final_risk": report.final_risk,
                    "restart_risks": report.restart_risks,
                    "aborted_restarts": report.aborted_restarts,
                    "iterations": len(report.history),
                    "model": model_name, "history": hist_name,
                    "tolerances": {"grad_tolerance": tcfg.grad_tolerance,
                                   "step_size_max": flow_cfg.step_size_max},
                    "seed": tcfg.seed, "n": data.n, "dim": data.dim})
    _write_report(_out_path(cfg, "fit_report.json"), payload)
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    data = _load_data(cfg)
    model = load_model(_resolve(cfg, _need(cfg, "model", "path")))
    risk = empirical_risk(model, data)
    if not math.isfinite(risk):
        raise FlowDivergenceError("evaluation produced a non-finite risk")
    payload = _report_base(cfg, "eval")
    payload.update({"risk": risk, "n": data.n, "dim": data.dim})
    _write_report(_out_path(cfg, "eval_report.json"), payload)
    return EXIT_OK


def cmd_bound(cfg: dict) -> int:
    b = cfg.get("bounds") or {}
    mdl = cfg.get("model") or {}
    if "data" in cfg and (cfg["data"] or {}).get("path"):
        data = _load_data(cfg)
        support = b.get("support_radius", data.support_radius)
        dim = data.dim
        n = b.get("n", data.n)
    else:
        support = b.get("support_radius")
        if support is None:
            raise ConfigError("bounds.support_radius is required without data")
        dim = mdl.get("dim")
        if dim is None:
            raise ConfigError(
                "model.dim is unknown; provide data.path for the dimension")
        n = b.get("n")
        if n is None:
            raise ConfigError("bounds.n is required without data")
    family, m, interval = _family_from_config(cfg, dim)
    comparison = None
    if "rate" in b:
        comparison = ComparisonFn.exp_stable(b["rate"], interval)
    spec = class_spec_for(family, mdl.get("encoder_kind", "mlp"), m, interval,
                          support_radius=support,
                          weight_radius=b.get("weight_radius", 10.0),
                          hidden=mdl.get("hidden", 16), comparison=comparison)
    report = dudley_bound(spec, n,
                          gamma_resolution=b.get("gamma_resolution", 50),
                          eps_cut=b.get("eps_cut", 1e-6),
                          quad_tol=b.get("quad_tol", 1e-9))
    if "confidence" in b:
        report.confidence = b["confidence"]
        report.complexity_used = report.value
        report.certificate = excess_risk_certificate(
            spec.diameter, n, b["confidence"], report.value)
    payload = _report_base(cfg, "bound")
    payload.update(report.to_dict())
    payload["tolerances"] = {"bisect_tol": report.bisect_tol,
                             "quad_tol": report.quad_tol,
                             "eps_cut": report.eps_cut}
    _write_report(_out_path(cfg, b.get("out", "bound_report.json")), payload)
    return EXIT_OK


def cmd_rademacher(cfg: dict) -> int:
    data = _load_data(cfg)
    family, m, interval = _family_from_config(cfg, data.dim)
    b = cfg.get("bounds") or {}
    mdl = cfg.get("model") or {}
    t = cfg.get("train") or {}
    enc_spec = EncoderSpec(kind=mdl.get("encoder_kind", "mlp"),
                           hidden=mdl.get("hidden", 16),
                           init_scale=t.get("init_scale", 0.1))
    tcfg = _train_from_config(cfg)
    flow_cfg = _flow_from_config(cfg)
    seed = b.get("seed", cfg["seed"])

    def factory(rng):
        return init_trainable(data, family, enc_spec, m, interval, tcfg,
                              flow_cfg, rng)

    n_draws = b.get("n_draws", 64)
    inner = InnerOptConfig(restarts=b.get("inner_restarts", 8),
                           iters=b.get("inner_iters", 0),
                           learning_rate=b.get("learning_rate", 1e-2))
    if "candidate_count" in b:
        rng = np.random.default_rng(seed)
        models = [factory(rng).model for _ in range(b["candidate_count"])]
        mean, stderr = rademacher_estimate(models, data, n_draws=n_draws,
                                           seed=seed)
        mode = "finite_class"
    else:
        mean, stderr = rademacher_estimate(factory, data, n_draws=n_draws,
                                           seed=seed, inner=inner)
        mode = "sampled_supremum"
    if not math.isfinite(mean):
        raise FlowDivergenceError("complexity estimate is non-finite")
    payload = _report_base(cfg, "rademacher")
    payload.update({"mean": mean, "stderr": stderr, "n_draws": n_draws,
                    "mode": mode, "n": data.n, "seed": seed,
                    "semantics": "lower estimate of the empirical supremum",
                    "inner": {"restarts": inner.restarts, "iters": inner.iters,
                              "learning_rate": inner.learning_rate}})
    _write_report(_out_path(cfg, b.get("out", "rademacher_report.json")),
                  payload)
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    v = cfg.get("verify") or {}
    checks = v.get("checks", ["single_flow", "initial_condition", "tuple",
                              "net_radius"])
    kinds = v.get("kinds", ["constant", "affine", "recurrent"])
    trials = v.get("trials", 200)
    tol = v.get("tol", 1e-6)
    seed = v.get("seed", cfg["seed"])
    reports = []
    offset = 0
    for kind in kinds:
        if "single_flow" in checks:
            reports.append(check_single_flow_perturbation(
                kind=kind, trials=trials, tol=tol, seed=seed + offset))
            offset += 1
        if "initial_condition" in checks:
            reports.append(check_initial_condition(
                kind=kind, trials=trials, tol=tol, seed=seed + offset))
            offset += 1
        if "tuple" in checks:
            reports.append(check_tuple_perturbation(
                kind=kind, trials=max(20, trials // 2), tol=tol,
                seed=seed + offset))
            offset += 1
    if "net_radius" in checks:
        reports.append(check_net_radius(trials=trials, tol=tol,
                                        seed=seed + offset))
    payload = _report_base(cfg, "verify")
    payload.update({
        "tolerance": tol, "trials": trials, "seed": seed,
        "checks": [r.to_dict() for r in reports],
        "violations": int(sum(r.violations for r in reports)),
        "all_passed": all(r.passed for r in reports),
    })
    _write_report(_out_path(cfg, v.get("out", "verify_report.json")), payload)
    return EXIT_OK if payload["all_passed"] else EXIT_VIOLATIONS


COMMANDS = {"gen": cmd_gen, "fit": cmd_fit, "eval": cmd_eval,
            "bound": cmd_bound, "rademacher": cmd_rademacher,
            "verify": cmd_verify}


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="orbitfit",
        description="Fit flow-decoder manifold models and certify their "
                    "generalization.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--output-dir", default=None,
                       help="override the config's output_dir")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's top-level seed")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config, args.output_dir, args.seed)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FlowDivergenceError as exc:
        print(f"numeric blow-up: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numeric blow-up: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run(argv=None))
