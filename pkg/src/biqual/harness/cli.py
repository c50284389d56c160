"""Command line entry point: ``biqual {synthesize,run,report,inspect-t}``.

Exit codes: 0 success, 1 some cell failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_grid
from .datasets import write_csv
from .grid import FAILED, load_clean, run_grid_full, synthesize_cell
from .report import dump_weights, emit_report, load_records

log = logging.getLogger("biqual")

EXIT_OK, EXIT_CELL_FAILED, EXIT_CONFIG = 0, 1, 2


def _cell_dir(out: Path, p: float, noise: str, seed: int) -> Path:
    safe = "".join(c if c.isalnum() or c in ".,-" else "_" for c in noise)
    return out / f"p={p:g}" / safe / f"seed={seed}"


def cmd_synthesize(args) -> int:
    grid, _ = load_grid(args.config, args.seed_base)
    out = Path(args.out)
    for pi, si, seed in grid.cells():
        p, spec = grid.p_values[pi], grid.noise[si]
        clean = load_clean(grid.dataset, grid.seed_base + seed)
        ds, test = synthesize_cell(clean, p, spec, grid.seed_base + seed, grid.test_fraction)
        d = _cell_dir(out, p, spec.label, seed)
        write_csv(d / "trusted.csv", ds.trusted)
        write_csv(d / "untrusted.csv", ds.untrusted)
        write_csv(d / "test.csv", test)
        # ground truth for evaluation only, kept out of the learning inputs
        (d / "flip_mask.txt").write_text("".join(f"{int(v)}\n" for v in ds.flip_mask))
        (d / "classes.json").write_text(json.dumps([str(i) for i in range(clean.class_count)]))
        print(f"{d}: |D_T|={len(ds.trusted)} |D_U|={len(ds.untrusted)} |test|={len(test)} p={ds.p:.4f}")
    return EXIT_OK


def cmd_run(args) -> int:
    grid, raw = load_grid(args.config, args.seed_base)
    dump = bool(raw.get("run", {}).get("dump_weights", False))
    outs = run_grid_full(grid, args.workers)
    records = [r for o in outs for r in o.records]
    out = Path(args.out)
    diagnostics = []
    for o in outs:
        diag = dict(o.diagnostics)
        for method, extra in diag.get("methods", {}).items():
            w = extra.pop("weights", None)
            if dump and w is not None:
                dump_weights(_cell_dir(out / "weights", diag["p"], diag["noise"], diag["seed"]) / f"{method}.txt", w)
        diagnostics.append(diag)
    echo = {"config": raw, "cli": {"workers": args.workers, "seed_base": args.seed_base, "config_path": str(args.config)}}
    paths = emit_report(records, out, args.formats, config=echo, diagnostics=diagnostics)
    for p in paths:
        print(p)
    failed = [r for r in records if r.status == FAILED]
    for r in failed:
        log.error("failed: %s p=%g %s seed=%d: %s", r.method, r.p, r.noise, r.seed, r.error)
    return EXIT_CELL_FAILED if failed else EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.results)
    if src.is_dir():
        src = src / "results.json"
    records = load_records(src)
    for p in emit_report(records, args.out or src.parent, args.formats):
        print(p)
    return EXIT_OK


def _fmt_matrix(M) -> str:
    if M is None:
        return "    (unknown)"
    return "\n".join("    " + " ".join(f"{v:7.4f}" for v in row) for row in M)


def cmd_inspect_t(args) -> int:
    from .grid import inspect_transition

    grid, _ = load_grid(args.config, args.seed_base)
    for e in inspect_transition(grid):
        print(f"p={e['p']:g} {e['noise']} seed={e['seed']}")
        print("  true:\n" + _fmt_matrix(e["true"]))
        for name in ("trusted", "anchor"):
            if e.get(name) is not None:
                err = ""
                if e["true"] is not None:
                    err = f"  (Frobenius error {np.linalg.norm(np.array(e[name]) - np.array(e['true'])):.4f})"
                print(f"  {name}:{err}\n" + _fmt_matrix(e[name]))
        if "error" in e:
            print(f"  note: {e['error']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biqual", description="Biquality learning benchmark harness.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed-base", type=int, default=0, help="offset added to every grid seed")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synthesize", help="write the biquality datasets of every grid cell as CSV")
    common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("run", help="run the experiment grid and write reports")
    common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--formats", nargs="+", default=["csv", "json"], choices=["csv", "json"])
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="rebuild reports from a results.json")
    p.add_argument("results", help="results.json or the directory holding it")
    p.add_argument("--out", help="output directory (defaults to the results directory)")
    p.add_argument("--formats", nargs="+", default=["csv", "json"], choices=["csv", "json"])
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("inspect-t", help="print estimated versus true transition matrices")
    common(p, out_required=False)
    p.set_defaults(func=cmd_inspect_t)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
