"""Command line front end: run sweep specs and summarize result CSVs."""

import argparse
import os
import sys

from . import sweep


def _progress(stream):
    def report(done, total, row):
        labels = " ".join(v for k, v in row.items() if k.startswith("axis_"))
        stream.write(f"[{done}/{total}] {labels}"
                     f" loss={float(row['information_loss_rate']) * 100:.4f}%\n")
        stream.flush()
    return report


def cmd_run(args):
    spec = sweep.resolve_spec(args.spec)
    out_dir = args.out or os.path.join("results", spec.name)
    trace_dir = os.path.join(out_dir, "traces") if args.trace else None
    quiet = args.quiet
    print(f"spec {spec.name}: {spec.n_runs()} runs"
          f" ({len(spec.axes)} axes, {spec.replications} replication(s))",
          file=sys.stderr)
    rows, summary = sweep.run_sweep(
        spec, out_dir=out_dir, root_seed=args.seed, workers=args.workers,
        engine=args.engine, trace_dir=trace_dir,
        progress=None if quiet else _progress(sys.stderr))
    print(f"wrote {os.path.join(out_dir, 'results.csv')} ({len(rows)} rows)",
          file=sys.stderr)
    sys.stdout.write(sweep.format_summary(summary))
    return 0


def cmd_summarize(args):
    summary = sweep.summarize_csv(args.csv)
    sys.stdout.write(sweep.format_summary(summary))
    return 0


def cmd_list_specs(args):
    for name in sweep.builtin_specs():
        spec = sweep.load_spec(sweep.builtin_spec_path(name))
        first = spec.description.strip().split(". ")[0].strip()
        print(f"{name:8s} {spec.n_runs():4d} runs  {first}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mptetrys",
        description="Multipath streaming simulator: elastic window coding "
                    "vs block FEC with online load splitting.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep spec (file path or builtin name)")
    run_p.add_argument("spec", help="spec file or builtin name (see list-specs)")
    run_p.add_argument("--out", default=None, help="output directory (default results/<name>)")
    run_p.add_argument("--workers", type=int, default=1, help="parallel sweep points")
    run_p.add_argument("--seed", type=int, default=None, help="root seed override")
    run_p.add_argument("--engine", default="auto", choices=["auto", "python", "compiled"])
    run_p.add_argument("--trace", action="store_true",
                       help="write per-run event logs (slow, forces the Python engine)")
    run_p.add_argument("--quiet", action="store_true", help="suppress per-run progress")
    run_p.set_defaults(func=cmd_run)

    sum_p = sub.add_parser("summarize", help="aggregate a results CSV")
    sum_p.add_argument("csv", help="results.csv written by run")
    sum_p.set_defaults(func=cmd_summarize)

    list_p = sub.add_parser("list-specs", help="list builtin sweep specs")
    list_p.set_defaults(func=cmd_list_specs)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except sweep.SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
