"""Command-line front end.

Every run writes its outputs plus ``config.json`` into ``--out``; running
``didiv --config OUT/config.json`` repeats the run and rewrites identical
files. Exit status: 0 success, 1 estimation error, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields

from . import oracle
from .aggregation import CLI_KINDS, PARAMS, aggregate, bootstrap_aggregate, cohort_shares
from .data import PANEL, RCS, derive_cohorts, load_csv, validate
from .errors import DidIvError, EstimationError, UsageError
from .pretrends import pretrend_test
from .selftest import run_selftest
from .sts import bootstrap_cell, estimate_cells
from .twfeiv import decompose_twfeiv, estimate_twfeiv

COMMANDS = ("validate", "estimate", "aggregate", "twfeiv", "decompose", "pretrend",
            "simulate", "oracle", "selftest")


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    columns: dict = field(default_factory=dict)
    mode: str = PANEL
    unexposed: str = "never"
    agg: str | None = None
    l: int | None = None
    l2: int | None = None
    e: int | None = None
    t: int | None = None
    base: int | None = None
    stratum: str | None = None
    include_flagged: bool = False
    max_lead: int = 4
    tau: float = 1e-10
    boot_reps: int = 0
    seed: int = 0
    design: str | None = None
    spec: str | None = None
    n: int = 1000
    out: str = "didiv_out"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
        return cls(**d)


def parse_columns(text: str | None) -> dict:
    """'unit=id,time=year' or a path to a JSON object."""
    if not text:
        return {}
    if os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            return {str(k): str(v) for k, v in json.load(fh).items()}
    out = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"--columns entry {part!r} should look like role=column")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="didiv", description="DID-IV estimation toolkit")
    p.add_argument("--config", help="re-run from an emitted config.json")
    sub = p.add_subparsers(dest="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="didiv_out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", required=True, help="long-format CSV")
    data.add_argument("--columns", help="role=column pairs or a JSON mapping file")
    data.add_argument("--mode", choices=(PANEL, RCS), default=PANEL)
    data.add_argument("--unexposed", default="never", help="never, last or set:e1,e2,...")
    data.add_argument("--tau", type=float, default=1e-10, help="first-stage threshold")
    data.add_argument("--stratum", help="stratum label A for triple differences")
    boot = argparse.ArgumentParser(add_help=False)
    boot.add_argument("--boot-reps", type=int, default=0)
    agg = argparse.ArgumentParser(add_help=False)
    agg.add_argument("--agg", choices=sorted(CLI_KINDS), help="summary parameter")
    agg.add_argument("--l", type=int)
    agg.add_argument("--l2", type=int)
    agg.add_argument("--e", type=int)
    agg.add_argument("--t", type=int)
    agg.add_argument("--include-flagged", action="store_true")
    gen = argparse.ArgumentParser(add_help=False)
    gen.add_argument("--design", help=f"built-in design: {', '.join(oracle.BUILTIN)}")
    gen.add_argument("--spec", help="design JSON file")

    sub.add_parser("validate", parents=[common, data], help="check an input file")
    sub.add_parser("estimate", parents=[common, data, boot], help="cell-level estimates")
    sub.add_parser("aggregate", parents=[common, data, boot, agg], help="summary parameter")
    sub.add_parser("twfeiv", parents=[common, data, boot], help="two-way FE IV")
    d = sub.add_parser("decompose", parents=[common, data], help="TWFEIV decomposition")
    d.add_argument("--base", type=int)
    pt = sub.add_parser("pretrend", parents=[common, data], help="placebo pre-period tests")
    pt.add_argument("--max-lead", type=int, default=4)
    s = sub.add_parser("simulate", parents=[common, gen], help="draw a synthetic dataset")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--mode", choices=(PANEL, RCS), default=PANEL)
    sub.add_parser("oracle", parents=[common, gen], help="exact population values")
    sub.add_parser("selftest", parents=[common], help="oracle-equivalence suite")
    return p


def config_from_args(ns) -> RunConfig:
    cfg = RunConfig(command=ns.command)
    for f in fields(RunConfig):
        if f.name in ("command", "columns"):
            continue
        key = f.name
        if hasattr(ns, key) and getattr(ns, key) is not None:
            setattr(cfg, key, getattr(ns, key))
    cfg.columns = parse_columns(getattr(ns, "columns", None))
    if cfg.agg is not None:
        cfg.agg = CLI_KINDS[cfg.agg]
    return cfg


# -- output helpers ------------------------------------------------------------------------

def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        return _clean(x.item())
    return x


def write_json(cfg: RunConfig, name: str, obj) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return path


def _fmt(x, w=10):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "nan".rjust(w)
    if isinstance(x, float):
        return f"{x:{w}.4f}"
    return str(x).rjust(w)


def print_table(header, rows, out=None):
    out = out or sys.stdout
    print(" ".join(h.rjust(10) for h in header), file=out)
    for r in rows:
        print(" ".join(_fmt(v) for v in r), file=out)


# -- commands ------------------------------------------------------------------------------

def _load(cfg):
    if not cfg.input:
        raise UsageError("--input is required")
    if not os.path.exists(cfg.input):
        raise UsageError(f"input file {cfg.input!r} not found")
    table = load_csv(cfg.input, cfg.columns, cfg.mode)
    return table


def cmd_validate(cfg):
    table = _load(cfg)
    try:
        cm = derive_cohorts(table, cfg.unexposed)
    except EstimationError:
        cm = None
    rep = validate(table, cm)
    write_json(cfg, "validation.json", rep.to_dict())
    print(f"{len(rep.violations)} finding(s), fatal: {rep.fatal}")
    for v in rep.violations[:20]:
        print(f"  {v.rule:24s} unit={v.unit} t={v.time} {v.msg}")
    return 1 if rep.fatal else 0


def _cells(cfg, table, cm):
    return estimate_cells(table, cm, stratum=cfg.stratum, tau=cfg.tau)


def cmd_estimate(cfg):
    table = _load(cfg)
    cm = derive_cohorts(table, cfg.unexposed)
    cells = _cells(cfg, table, cm)
    rows = []
    for c in cells:
        d = c.to_dict()
        if cfg.boot_reps and c.usable:
            d["se_boot"] = bootstrap_cell(table, c.spec, cfg.boot_reps, cfg.seed, cfg.stratum).se
        rows.append(d)
    write_json(cfg, "cells.json", rows)
    print_table(["e", "l", "clatt", "se", "pi", "n", "flag"],
                [[r["e"], r["l"], r["clatt"], r["se"], r["pi"], r["n"], r["flag"] or "-"] for r in rows])
    return 0


def cmd_aggregate(cfg):
    if cfg.agg is None:
        raise UsageError("--agg is required for aggregate")
    table = _load(cfg)
    cm = derive_cohorts(table, cfg.unexposed)
    cells = _cells(cfg, table, cm)
    params = {p: getattr(cfg, p) for p in PARAMS[cfg.agg]}
    res = aggregate(cfg.agg, cells, cohort_shares(table, cm), params, cfg.include_flagged)
    out = res.to_dict()
    if cfg.boot_reps:
        se, _, redraws = bootstrap_aggregate(table, cm, cfg.agg, params, cfg.boot_reps, cfg.seed,
                                             cells, cfg.stratum, cfg.include_flagged)
        out["se_boot"], out["boot_redraws"] = se, redraws
    write_json(cfg, "aggregate.json", out)
    print(f"{cfg.agg} {params}: theta = {res.theta_hat:.6g} (se {res.se:.4g})"
          + (f" [{res.flag}]" if res.flag else ""))
    print_table(["e", "t", "w"], [[int(e), int(t), w] for (e, t), w in sorted(res.weights.items())])
    return 0


def cmd_twfeiv(cfg):
    table = _load(cfg)
    cm = derive_cohorts(table, cfg.unexposed)
    res = estimate_twfeiv(table, cm, cfg.tau, cfg.boot_reps, cfg.seed)
    write_json(cfg, "twfeiv.json", res.to_dict())
    se = f" (bootstrap se {res.se:.4g})" if res.se is not None else ""
    print(f"TWFEIV beta = {res.beta_iv_hat:.6g}{se}; first stage {res.pi_hat:.4g}")
    return 0


def cmd_decompose(cfg):
    table = _load(cfg)
    rep = decompose_twfeiv(table, None, cfg.base, cfg.tau)
    write_json(cfg, "decomposition.json", rep.to_dict())
    rep.to_csv(os.path.join(cfg.out, "decomposition.csv"))
    print(f"beta = {rep.beta_iv_hat:.6g}, identity residual {rep.identity_residual:.2e}")
    print_table(["t", "kind", "weight", "wdid", "contrib"],
                [[c.t, c.kind, c.weight, c.wdid_hat, c.contribution] for c in rep.components])
    return 0


def cmd_pretrend(cfg):
    table = _load(cfg)
    cm = derive_cohorts(table, cfg.unexposed)
    res = pretrend_test(table, cm, cfg.max_lead)
    write_json(cfg, "pretrend.json", res.to_dict())
    res.to_csv(os.path.join(cfg.out, "pretrend.csv"))
    print_table(["e", "l", "alpha", "alpha_se", "pi", "pi_se"],
                [[s.e, s.l, s.alpha_hat, s.alpha_se, s.pi_hat, s.pi_se] for s in res.series])
    print(f"joint outcome chi2({res.outcome.df}) = {res.outcome.stat:.4g}, p = {res.outcome.p_value:.4g}")
    print(f"joint treatment chi2({res.treatment.df}) = {res.treatment.stat:.4g}, "
          f"p = {res.treatment.p_value:.4g}")
    return 0


def _spec(cfg):
    if cfg.spec:
        if not os.path.exists(cfg.spec):
            raise UsageError(f"spec file {cfg.spec!r} not found")
        return oracle.load_spec(cfg.spec)
    return oracle.builtin_spec(cfg.design or "effect10", seed=cfg.seed)


def cmd_simulate(cfg):
    spec = _spec(cfg)
    table, audit = oracle.generate(spec, cfg.n, cfg.mode, cfg.seed)
    os.makedirs(cfg.out, exist_ok=True)
    table.to_csv(os.path.join(cfg.out, "data.csv"))
    audit.to_csv(os.path.join(cfg.out, "audit.csv"), index=False, float_format="%.17g")
    write_json(cfg, "spec.json", oracle.spec_to_dict(spec))
    print(f"wrote {len(table)} rows ({cfg.mode}) to {os.path.join(cfg.out, 'data.csv')}")
    return 0


def cmd_oracle(cfg):
    spec = _spec(cfg)
    vals = oracle.population_values(spec)
    write_json(cfg, "oracle.json", vals.to_dict())
    print(json.dumps(_clean(vals.to_dict()), indent=2)[:2000])
    return 0


def cmd_selftest(cfg):
    res = run_selftest()
    write_json(cfg, "selftest.json", [r.to_dict() for r in res])
    for r in res:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    n_ok = sum(r.passed for r in res)
    print(f"{n_ok} passed, {len(res) - n_ok} failed")
    return 0 if n_ok == len(res) else 1


HANDLERS = {
    "validate": cmd_validate, "estimate": cmd_estimate, "aggregate": cmd_aggregate,
    "twfeiv": cmd_twfeiv, "decompose": cmd_decompose, "pretrend": cmd_pretrend,
    "simulate": cmd_simulate, "oracle": cmd_oracle, "selftest": cmd_selftest,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if ns.config:
            with open(ns.config, encoding="utf-8") as fh:
                cfg = RunConfig.from_dict(json.load(fh))
        elif ns.command is None:
            parser.print_help()
            return 2
        else:
            cfg = config_from_args(ns)
        if cfg.command not in HANDLERS:
            raise UsageError(f"unknown command {cfg.command!r}")
        code = HANDLERS[cfg.command](cfg)
        write_json(cfg, "config.json", cfg.to_dict())
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except EstimationError as exc:
        print(f"estimation error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except DidIvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
