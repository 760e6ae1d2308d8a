"""Command line front end: ``carnot-ineq <subcommand> [options]``.

Exit status: 0 when nothing is violated, 1 on configuration errors or bad
usage, 2 when some check is Violated.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from . import campaign
from .config import build_group
from .inequalities import InequalityCase, sharp_constant
from .quadrature import ConfigurationError

log = logging.getLogger("carnot_ineq")

CASE_ALIASES = {
    "ckn": "CKN",
    "weighted-hardy": "WeightedHardy",
    "hardy": "Hardy",
    "badiale-tarantello": "BadialeTarantello",
    "bt": "BadialeTarantello",
    "higher-order": "HigherOrderCKN",
    "critical-hardy": "CriticalHardy",
    "hardy-rellich": "HardyRellich",
    "rellich-corollary": "RellichCorollary",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    return [int(v) for v in _floats(text)]


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="carnot-ineq", description="Numerical checks of weighted Hardy-type inequalities on Carnot groups.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{identities,verify,sharpness,constants}")

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required, help="JSON campaign config")
        p.add_argument("--out", type=Path, help="output directory (default: config output_dir or ./reports)")
        p.add_argument("--seed", type=_u64, help="campaign seed, overrides the config")
        p.add_argument("--threads", type=int, help="worker threads (default: available cores)")

    p = sub.add_parser("identities", help="residuals of the first-stratum power identities")
    common(p)
    p.add_argument("--group", action="append", help="group spec such as heisenberg:1 (repeatable)")
    p.add_argument("--gamma", type=_floats, help="comma-separated exponents")
    p.add_argument("--points", type=int, default=100)

    p = sub.add_parser("verify", help="run the inequality checks of a config")
    common(p, config_required=True)

    p = sub.add_parser("sharpness", help="ratio traces along cutoff extremizers")
    common(p, config_required=True)

    p = sub.add_parser("constants", help="table of sharp constants")
    p.add_argument("--case", required=True, choices=sorted(CASE_ALIASES), help="inequality")
    p.add_argument("--N", type=_ints, required=True, help="first-stratum dimension(s)")
    p.add_argument("--p", type=_floats, default=None, help="exponent(s)")
    p.add_argument("--gamma", type=_floats, default=None, help="gamma = alpha+beta+1 (CKN, BT, HardyRellich)")
    p.add_argument("--alpha", type=_floats, default=None)
    p.add_argument("--beta", type=_floats, default=None)
    p.add_argument("--k", type=_ints, default=None)
    p.add_argument("--m", type=_ints, default=None)
    return parser


def _cmd_identities(args) -> int:
    if args.config is not None:
        return campaign.run(args.config, args.out, args.seed, args.threads, sections=("identities",))
    groups = [build_group(g) for g in (args.group or ["heisenberg:1"])]
    gammas = tuple(args.gamma) if args.gamma else campaign.DEFAULT_GAMMAS
    seed = 0 if args.seed is None else args.seed
    section = {"gammas": list(gammas), "points": args.points, "include_N": args.gamma is None}
    doc = campaign._identities_doc(section, seed, groups)
    print(f"{'group':<16} {'gamma':>8} {'grad residual':>14} {'div residual':>14}")
    for r in doc["rows"]:
        print(f"{r['group']:<16} {r['gamma']:>8g} {r['grad_residual']:>14.3e} {r['div_residual']:>14.3e}")
    if args.out is not None:
        campaign.write_json(args.out / "identities.json", {campaign.TIMESTAMP_KEY: campaign._stamp(), **doc})
    return 0 if doc["passed"] else 2


def _cmd_constants(args) -> int:
    tag = CASE_ALIASES[args.case]
    grid = {
        "N": args.N,
        "p": args.p or ([None] if tag == "CriticalHardy" else None),
        "gamma": args.gamma,
        "alpha": args.alpha,
        "beta": args.beta,
        "k": args.k,
        "m": args.m,
    }
    if grid["p"] is None:
        raise ConfigurationError(f"{args.case} needs --p")
    keys = [k for k, v in grid.items() if v is not None]
    rows = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = {k: v for k, v in zip(keys, combo) if v is not None}
        if tag == "BadialeTarantello":
            params.setdefault("n", params["N"])
        rows.append((params, sharp_constant(InequalityCase(tag, params))))
    if len(rows) == 1:
        print(f"{rows[0][1]:.12g}")
        return 0
    shown = [k for k in keys if len({str(r[0].get(k)) for r in rows}) > 1] or keys
    print("  ".join(f"{k:>8}" for k in shown) + f"  {'constant':>14}")
    for params, c in rows:
        print("  ".join(f"{params.get(k, ''):>8g}" for k in shown) + f"  {c:>14.10g}")
    return 0


_LIST_FLAGS = {"--gamma", "--p", "--alpha", "--beta", "--N", "--k", "--m"}


def _glue_negative_lists(argv: list[str]) -> list[str]:
    """'--gamma -1,0,2' -> '--gamma=-1,0,2' so argparse does not read an option."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok in _LIST_FLAGS:
            nxt = next(it, None)
            if nxt is not None and nxt.startswith("-") and len(nxt) > 1 and (nxt[1].isdigit() or nxt[1] == "."):
                out.append(f"{tok}={nxt}")
                continue
            out.append(tok)
            if nxt is not None:
                out.append(nxt)
            continue
        out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(_glue_negative_lists(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.command == "identities":
            return _cmd_identities(args)
        if args.command == "constants":
            return _cmd_constants(args)
        section = "checks" if args.command == "verify" else "sharpness"
        return campaign.run(args.config, args.out, args.seed, args.threads, sections=(section,))
    except ConfigurationError as exc:
        print(f"carnot-ineq: configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
