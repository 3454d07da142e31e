"""Command-line entry point: ``vislander {train,eval,inspect,defaults}``.

Exit codes: 0 success, 1 usage error (bad flags or config), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import CheckpointError, read_header
from .config import ConfigError, RunConfig, defaults_reference, dumps, load

log = logging.getLogger("vislander")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_freqs(text: str) -> list[float]:
    """``lo:hi:step`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(np.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 10) for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --freqs {text!r}; expected lo:hi:step or a comma list") from None


def run_dir(base: str | Path, command: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    out = Path(base) / f"{command}-{stamp}"
    k = 1
    while out.exists():
        out = Path(base) / f"{command}-{stamp}-{k}"
        k += 1
    out.mkdir(parents=True)
    return out


def _resolve(args) -> RunConfig:
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "out", None):
        overrides.append(f"output_dir={json.dumps(args.out)}")
    return load(args.config, overrides)


def cmd_train(args) -> int:
    from .trainer import Trainer

    cfg = _resolve(args)
    out = run_dir(cfg.output_dir, "train")
    (out / "config.toml").write_text(dumps(cfg))
    if args.resume:
        trainer = Trainer.resume(args.resume)
    else:
        trainer = Trainer(cfg)
    print(f"training into {out}")
    trainer.run(out, max_updates=args.max_updates)
    print(f"done: {trainer.global_step} steps, {trainer.updates} updates, final checkpoint {out / 'final.bin'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import TrialSpec, run_trials, write_outputs
    from .trainer import load_policy

    if not Path(args.ckpt).is_file():
        print(f"error: checkpoint {args.ckpt} not found", file=sys.stderr)
        return EXIT_RUNTIME
    model, ckpt_cfg, _ = load_policy(args.ckpt)
    if args.config or args.override:
        cfg = _resolve(args)
    else:
        cfg = ckpt_cfg
        if args.out:
            cfg.output_dir = args.out
    ev = cfg.eval
    trials = args.trials or ev.trials
    if args.static:
        specs = [TrialSpec(None, "static", trials, ev.seed)]
    else:
        freqs = parse_freqs(args.freqs) if args.freqs else list(ev.freqs)
        specs = [TrialSpec(f, ev.amplitudes, trials, ev.seed) for f in freqs]
    out = run_dir(cfg.output_dir, "eval")
    (out / "config.toml").write_text(dumps(cfg))
    result = run_trials(model, specs, cfg, batch_size=ev.batch_size)
    table = write_outputs(out, result, ev.histogram_bin_deg)
    print(json.dumps({"records": len(result.records), **table}))
    print(f"outputs in {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    header, _ = read_header(args.ckpt)
    stored = header.get("package_version")
    if stored != __version__:
        print(f"warning: checkpoint written by version {stored}, this is version {__version__}", file=sys.stderr)
    cur = header.get("curriculum", {})
    info = {
        "format_version": header.get("format_version"),
        "package_version": stored,
        "dims": header.get("dims"),
        "config_hash": header.get("config_hash"),
        "curriculum": cur,
        "global_step": header.get("global_step"),
        "updates": header.get("updates"),
        "episodes": header.get("episodes"),
        "blocks": len(header.get("blocks", [])),
    }
    print(json.dumps(info, indent=2))
    return EXIT_OK


def cmd_defaults(args) -> int:
    sys.stdout.write(defaults_reference())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vislander", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE")
        sp.add_argument("--out", help="output base directory (overrides output_dir)")

    t = sub.add_parser("train", help="train a policy")
    common(t)
    t.add_argument("--seed", type=int)
    t.add_argument("--resume", help="continue from a checkpoint")
    t.add_argument("--max-updates", type=int)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    common(e)
    e.add_argument("--ckpt", required=True)
    e.add_argument("--freqs", help="lo:hi:step, e.g. 0.1:0.5:0.1")
    e.add_argument("--trials", type=int)
    e.add_argument("--static", action="store_true", help="evaluate on a static platform")
    e.set_defaults(fn=cmd_eval)

    i = sub.add_parser("inspect", help="print checkpoint header metadata")
    i.add_argument("ckpt")
    i.set_defaults(fn=cmd_inspect)

    d = sub.add_parser("defaults", help="print the full default configuration")
    d.set_defaults(fn=cmd_defaults)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise UsageError("a command is required: train, eval, inspect or defaults")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.fn(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CheckpointError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.exception("runtime failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
