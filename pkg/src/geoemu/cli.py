"""``geoemu`` command line.

    geoemu <synth|train|evaluate|forecast|eof|plot|suite> [--config FILE]
           [--set key=value ...] [--out DIR]

Exit codes: 0 success, 1 validation error, 2 runtime error. Failures write a
single JSON line to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml
from pydantic import ValidationError

COMMANDS = ("synth", "train", "evaluate", "forecast", "eof", "plot", "suite")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoemu", description="Gridded emulator pipeline")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML run config (suite: suite config; default bundled)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-key override, repeatable")
    p.add_argument("--out", help="output directory (default output.dir)")
    p.add_argument("--data", help="shorthand for --set data.path=...")
    p.add_argument("--checkpoint", help="shorthand for --set model.checkpoint=...")
    p.add_argument("--prediction", help="shorthand for --set diagnostics.prediction=...")
    p.add_argument("--artifact", help="plot: artifact file to render")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _shorthands(args) -> list[str]:
    extra = []
    for flag, key in (("data", "data.path"), ("checkpoint", "model.checkpoint"),
                      ("prediction", "diagnostics.prediction")):
        val = getattr(args, flag)
        if val is not None:
            extra.append(f"{key}={json.dumps(val)}")
    return extra


def _run(args) -> dict:
    # heavy imports deferred so argument errors stay fast
    import torch

    from . import pipeline as pl
    from .config import dump_config, load_config

    torch.set_num_threads(int(os.environ.get("GEOEMU_THREADS", "1")))
    overrides = args.overrides + _shorthands(args)

    if args.command == "suite":
        from .suite import load_suite_config, run_suite

        scfg = load_suite_config(args.config, overrides)
        out = Path(args.out or scfg.base.output.dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config.resolved.yaml", "w") as fh:
            yaml.safe_dump(scfg.model_dump(mode="json"), fh, sort_keys=True)
        rows = run_suite(scfg, out)
        return {"report": str(out / "report.json"), "rows": len(rows)}

    cfg = load_config(args.config, overrides)
    out = Path(args.out or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.resolved.yaml")

    if args.command == "synth":
        from .container import save_dataset
        from .synthetic import generate_synthetic

        grid, stack, target, truth = generate_synthetic(cfg.data.synthetic, cfg.seed)
        save_dataset(out / "dataset.nc", grid, stack, target)
        (out / "ground_truth.json").write_text(truth.to_json() + "\n")
        return {"dataset": str(out / "dataset.nc")}
    if args.command == "train":
        model, hist, _, _ = pl.train_stage(cfg, out)
        return {"checkpoint": str(out / "checkpoint.npz"), "best_epoch": hist.best_epoch}
    if args.command == "evaluate":
        row = pl.evaluate_stage(cfg, out)
        return {"global": row["global"].to_dict()}
    if args.command == "forecast":
        rows = pl.forecast_stage(cfg, out)
        return {"lead_table": str(out / "lead_table.csv"), "leads": len(rows)}
    if args.command == "eof":
        rows = pl.eof_stage(cfg, out)
        return {"pcs": str(out / "pcs.csv"), "compared_modes": len(rows)}
    if args.command == "plot":
        from .config import ConfigError
        from .plotting import plot_artifact

        if not args.artifact:
            raise ConfigError("plot needs --artifact")
        paths = plot_artifact(args.artifact, out)
        return {"images": [str(p) for p in paths]}
    raise AssertionError(args.command)


def _fail(command: str, exc: BaseException, code: int) -> int:
    if isinstance(exc, ValidationError):
        message = "; ".join(
            (f"{'.'.join(map(str, e['loc']))}: " if e["loc"] else "") + e["msg"] for e in exc.errors())
        kind = "schema"
    else:
        message = str(exc)
        kind = type(exc).__name__
    sys.stderr.write(json.dumps({"error": kind, "command": command, "message": message,
                                 "exit_code": code}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = _run(args)
    except (ValidationError, ValueError, yaml.YAMLError, FileNotFoundError) as exc:
        return _fail(args.command, exc, 1)
    except Exception as exc:  # noqa: BLE001
        return _fail(args.command, exc, 2)
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
