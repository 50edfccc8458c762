"""Command-line entry point: ``afcsim run|preset|list-presets``.

Exit codes: 0 success, 2 config error, 3 numerical or precondition error,
4 I/O error. Failures print one JSON object on stderr.
"""

import argparse
import json
import sys
from pathlib import Path

from afcsim import __version__
from afcsim.errors import AfcSimError
from afcsim.scenarios import (
    OUTPUT_ENV,
    PRESETS,
    ConfigError,
    default_output_dir,
    execute,
    load_config,
    preset_config,
    preset_names,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": str(message)}) + "\n")
    return code


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="afcsim",
        description="Rare-earth spectral hole burning and atomic frequency comb simulations.",
        epilog=f"Default output directory: ${OUTPUT_ENV}/<name> (or ./afcsim-out/<name>).",
    )
    parser.add_argument("--version", action="version", version=f"afcsim {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="run a JSON scenario config")
    run.add_argument("config", help="path to the scenario config")
    run.add_argument("--out", help="output directory (overrides the config's output_dir)")

    preset = sub.add_parser("preset", help="run a built-in preset")
    preset.add_argument("name", help="preset name (see list-presets)")
    preset.add_argument("--out", help="output directory")

    sub.add_parser("list-presets", help="print the available presets")
    return parser


def _resolve_out(cfg, cli_out, fallback_name):
    if cli_out:
        return Path(cli_out)
    if cfg.get("output_dir"):
        out = Path(cfg["output_dir"])
        if not out.is_absolute() and "_base_dir" in cfg:
            out = Path(cfg["_base_dir"]) / out
        return out
    return default_output_dir(fallback_name)


def main(argv=None):
    args = _build_parser().parse_args(argv)

    if args.verb == "list-presets":
        for name in preset_names():
            print(f"{name}\t{PRESETS[name]['kind']}")
        return EXIT_OK

    try:
        if args.verb == "run":
            cfg = load_config(args.config)
            out = _resolve_out(cfg, args.out, cfg.get("name", Path(args.config).stem))
        else:
            cfg = preset_config(args.name)
            out = _resolve_out(cfg, args.out, args.name)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)

    try:
        manifest = execute(cfg, out)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (AfcSimError, ArithmeticError, ValueError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)

    print(json.dumps({"output_dir": str(out), "outputs": [o["path"] for o in manifest["outputs"]]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
