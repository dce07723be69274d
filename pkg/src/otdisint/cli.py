"""``ot`` command-line entry point.

Every entity flag takes ``PATH`` or ``PATH#NAME``; the name picks one entity
out of a multi-entity bundle file. ``--bundle`` files are loaded as shared
context so that entity files can refer to spaces by name.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from otdisint.bundle import DEFAULT_CONFIG, ProblemBundle, load_bundle
from otdisint.commands import COMMANDS, UnknownCommand, run_command
from otdisint.errors import LoadError, OTError
from otdisint.interpolation import frames_csv

log = logging.getLogger("otdisint")

USAGE_EXIT = 64

# command -> [(flag, dest, section)]
ROLES = {
    "solve": [("--mu", "mu", "measures"), ("--nu", "nu", "measures"), ("--cost", "cost", "costs")],
    "wasserstein": [("--mu", "mu", "measures"), ("--nu", "nu", "measures")],
    "dual": [("--mu", "mu", "measures"), ("--nu", "nu", "measures")],
    "disintegrate": [("--plan", "plan", "plans")],
    "reassemble": [("--mu", "mu", "measures"), ("--map", "map", "kernels")],
    "class": [("--plan", "plan", "plans")],
    "mk-class": [("--mu", "mu", "measures"), ("--lambda", "lambda", "lambdas"), ("--cost", "cost", "costs")],
    "glue": [("--plan", "plan", "plans")],
    "interpolate": [("--mu0", "mu0", "measures"), ("--mu1", "mu1", "measures")],
    "foliation-check": [("--space", "space", "spaces"), ("--partition", "partition", "partitions"), ("--measure", "measure", "measures")],
    "counterexample": [],
}
OPTIONAL = {("solve", "cost"), ("mk-class", "cost")}
PAIRED = {"class", "glue"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(USAGE_EXIT)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=DEFAULT_CONFIG["tol"], help="numerical tolerance for checks")
    common.add_argument("--seed", type=int, default=DEFAULT_CONFIG["seed"], help="seed for randomised generators")
    common.add_argument("--depth", type=int, default=2, help="dyadic depth k (times i/2^k)")
    common.add_argument("--depth-cap", type=int, default=DEFAULT_CONFIG["depth_cap"])
    common.add_argument("--search-cap", type=int, default=DEFAULT_CONFIG["search_cap"])
    common.add_argument("--bundle", action="append", default=[], metavar="FILE", help="extra bundle file(s) loaded as context")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="ot", description="Exact discrete optimal transport and disintegration tools.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, parents=[common])
        for flag, dest, _ in ROLES[cmd]:
            if cmd in PAIRED:
                sp.add_argument(flag, dest=dest, action="append", required=True, metavar="PATH[#NAME]", help="give twice")
            else:
                sp.add_argument(flag, dest=dest, required=(cmd, dest) not in OPTIONAL, metavar="PATH[#NAME]")
        if cmd in ("solve", "wasserstein", "mk-class"):
            sp.add_argument("--p", type=float, default=2, help="cost exponent (default 2)")
        if cmd in ("disintegrate", "reassemble"):
            sp.add_argument("--axis", choices=("first", "second"), default="first")
        if cmd == "interpolate":
            sp.add_argument("--check", action="store_true", help="run the constant-speed check")
            sp.add_argument("--csv", metavar="FILE", help="also write frames as CSV")
        if cmd == "counterexample":
            sp.add_argument("--n", type=int, default=64, help="grid size")
            sp.add_argument("--format", choices=("json", "csv"), default="json", help="csv prints the modulus table for plotting")
    return parser


def _split(ref: str) -> tuple[Path, str | None]:
    path, _, name = ref.partition("#")
    return Path(path), (name or None)


def _names_in_file(path: Path, section: str) -> list[str]:
    if path.suffix.lower() == ".csv":
        return [path.stem]
    obj = json.loads(path.read_text(encoding="utf-8"))
    if isinstance(obj, dict) and any(k in obj for k in ("spaces", "measures", "plans", "partitions", "maps",
                                                        "kernels", "lambdas", "costs", "config")):
        return list((obj.get(section) or {}).keys())
    return [path.stem]


def assemble(ns: argparse.Namespace) -> tuple[ProblemBundle, dict]:
    """Load the files named on the command line into one bundle keyed by role."""
    out = ProblemBundle()
    out.config.update(tol=ns.tol, seed=ns.seed, depth_cap=ns.depth_cap, search_cap=ns.search_cap)
    args: dict = {}
    refs = []
    for flag, dest, section in ROLES[ns.command]:
        value = getattr(ns, dest)
        if value is None:
            continue
        if ns.command in PAIRED:
            if len(value) != 2:
                raise UsageError(f"{flag} must be given exactly twice")
            refs += [(f"{dest}_a", section, value[0]), (f"{dest}_b", section, value[1])]
        else:
            refs.append((dest, section, value))
    for role, section, ref in refs:
        path, name = _split(ref)
        try:
            names = _names_in_file(path, section)
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(str(exc), str(path)) from None
        if name is None:
            if len(names) != 1:
                raise LoadError(f"expected one {section[:-1]} in file, found {len(names)}; use PATH#NAME", str(path))
            name = names[0]
        loaded = load_bundle([*ns.bundle, path])
        entity = loaded.get(section, name)
        getattr(out, section)[role] = entity
        args[role] = role
    if hasattr(ns, "p") and ns.p is not None:
        args["p"] = ns.p
    for key in ("axis", "check"):
        if hasattr(ns, key):
            args[key] = getattr(ns, key)
    if ns.command == "interpolate":
        args["depth"] = ns.depth
    if ns.command == "counterexample":
        args["n"] = ns.n
    return out, args


class UsageError(Exception):
    exit_code = USAGE_EXIT


def _counterexample_csv(report) -> str:
    lines = ["y,y2,gap,w2"]
    for r in report.outputs["modulus"]:
        lines.append(f"{r['y']!r},{r['y2']!r},{r['gap']!r},{r['w2']!r}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        bundle, args = assemble(ns)
        report = run_command(bundle, ns.command, args)
    except (UsageError, UnknownCommand) as exc:
        print(f"ot: error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except OTError as exc:
        print(f"ot: {exc.kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    log.info("%s finished in %.3f s", ns.command, report.timing)
    if ns.command == "interpolate" and ns.csv:
        Path(ns.csv).write_text(frames_csv(report.extras["_path"]), encoding="utf-8")
    if ns.command == "counterexample" and ns.format == "csv":
        sys.stdout.write(_counterexample_csv(report))
    else:
        sys.stdout.write(report.dumps())
    failed = [k for k, v in report.checks.items() if not v]
    if failed:
        print(f"ot: checks failed: {', '.join(failed)}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
