"""``medianfit`` command line."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..data import generate_synthetic, write_csv
from ..errors import ConfigError, DataError, IncompleteRunError
from . import runner
from .config import load_config
from .report import extract_and_plot, report

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INCOMPLETE = 0, 2, 3, 4
log = logging.getLogger("medianfit")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="medianfit",
                                description="Evolve MLP regressors and inspect their learnt curves.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-data", help="write a synthetic dataset as CSV")
    g.add_argument("--config", help="JSON config; its 'synthetic' section is used")
    g.add_argument("--out", required=True)

    r = sub.add_parser("run", help="run one approach")
    r.add_argument("--approach", choices=[a.cli_name for a in runner.APPROACHES.values()])
    r.add_argument("--config")
    r.add_argument("--data", help="CSV dataset; synthetic data from the config when omitted")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int)
    r.add_argument("--manifest", help="repeat the run described by an existing manifest.json")

    rep = sub.add_parser("report", help="summarise a finished run")
    rep.add_argument("--run", required=True)
    rep.add_argument("--top-k", type=int, default=5)

    e = sub.add_parser("extract-curves", help="learnt curves of the best archived networks")
    e.add_argument("--run", required=True)
    e.add_argument("--variable", required=True, help="input name or column index")
    e.add_argument("--top-k", type=int, default=5)
    e.add_argument("--out", help="output directory (default RUN/curves)")
    return p


def _progress(gen, archive):
    log.info("generation %d: archive %d", gen, len(archive))


def _run(args):
    if args.manifest:
        manifest = runner.RunManifest.load(args.manifest)
        m = runner.rerun(manifest, args.out, args.workers, _progress)
    else:
        if not args.approach:
            raise ConfigError("--approach is required unless --manifest is given")
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg.ga.workers = args.workers
        source = Path(args.data) if args.data else cfg.synthetic
        m = runner.run_approach(runner.approach(args.approach), cfg, source, args.seed, args.out,
                                progress=_progress)
    print(f"{m.approach}: archive of {m.notes['archive_size']} network(s) written to {args.out}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "generate-data":
            records = generate_synthetic(load_config(args.config).synthetic)
            write_csv(records, args.out)
            print(f"wrote {len(records)} records to {args.out}")
        elif args.command == "run":
            _run(args)
        elif args.command == "report":
            report(args.run, args.top_k)
            print((Path(args.run) / "summary.txt").read_text(), end="")
        else:
            out = extract_and_plot(args.run, args.variable, args.top_k, args.out)
            print(f"curves: {out.curves_csv}\nplot: {out.svg}")
            if out.spread_csv:
                print(f"spread: {out.spread_csv} (average {out.average_spread:.3f}%)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IncompleteRunError as exc:
        print(f"incomplete run: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
