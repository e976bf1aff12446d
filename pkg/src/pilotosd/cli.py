"""Command line entry point: ``pilotosd simulate|bounds|code-info``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bounds import bounds_csv, run_bounds
from .codebook import code_info
from .config import bounds_configs, load_config, sim_configs
from .errors import ConfigError, PilotOsdError
from .harness import simulate


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _cmd_simulate(args) -> int:
    configs = sim_configs(load_config(args.config))
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")

    def progress(snr, frames, errors):
        if not args.quiet:
            counts = " ".join(f"{nm}={e}" for nm, e in errors.items())
            _log(f"{snr:g} dB, {frames} frames: {counts}")

    simulate(configs, args.out, workers=args.workers, progress=progress)
    return 0


def _cmd_bounds(args) -> int:
    configs = bounds_configs(load_config(args.config))
    rows = []
    for cfg in configs:
        def progress(row, n_p=cfg.n_p):
            if not args.quiet:
                _log(f"n_p={n_p} {row.snr_db:g} dB {row.kind}: eps={row.result.epsilon:.3e}")
        rows.extend(run_bounds(cfg, progress))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bounds.csv").write_text(bounds_csv(rows))
    return 0


def _cmd_code_info(args) -> int:
    infos = []
    for cfg in sim_configs(load_config(args.config)):
        info = code_info(cfg.code_spec, cfg.k, cfg.geometry, cfg.interleaver_seed)
        infos.append({"n_p": cfg.n_p, **info})
    print(json.dumps(infos[0] if len(infos) == 1 else infos, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilotosd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", help="Monte Carlo BLER simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_simulate)
    p = sub.add_parser("bounds", help="RCUs and metaconverse bounds")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_bounds)
    p = sub.add_parser("code-info", help="print code parameters as JSON")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_code_info)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"configuration error: {exc}")
        return 2
    except PilotOsdError as exc:
        _log(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
