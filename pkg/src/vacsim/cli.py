"""Command-line entry points: run, bn-audit, serve, fixture."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import bn
from .data_io import load_snapshot
from .fixtures import fixture_snapshot, write_fixture
from .pipeline import RunConfig, run_vacsim


def _cmd_run(args: argparse.Namespace) -> int:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    config = RunConfig.from_dict(doc)
    series = args.series or doc.get("series_csv")
    statics = args.statics or doc.get("statics_csv")
    if series and statics:
        snapshot = load_snapshot(series, statics)
    elif series or statics:
        print("error: provide both --series and --statics (or neither)", file=sys.stderr)
        return 2
    else:
        snapshot = fixture_snapshot()
    artifact = run_vacsim(config, snapshot, runs_dir=args.runs_dir)
    print(f"run {artifact.run_id} complete")
    print(f"artifacts in {Path(args.runs_dir) / artifact.run_id}")
    return 0


def _cmd_bn_audit(args: argparse.Namespace) -> int:
    text = Path(args.input).read_text(encoding="utf-8")
    columns = bn.read_audit_csv(text)
    data = bn.discretize(columns, bins=args.bins)
    ensemble = bn.bootstrap_ensemble(
        data,
        blacklist=bn.default_blacklist(data.variables),
        criterion=args.criterion,
        n_bootstraps=args.bootstraps,
        seed=args.seed,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    edges_path = out_dir / f"edge_frequencies_{args.criterion}.csv"
    edges_path.write_text(bn.edge_frequency_csv(ensemble), encoding="utf-8")
    verdict_path = out_dir / "verdict.json"
    verdict_path.write_text(
        bn.verdict_json({args.criterion: ensemble}, threshold=args.threshold),
        encoding="utf-8",
    )
    supported, freq = bn.check_causal_claim(ensemble, threshold=args.threshold)
    print(f"vaccine_percent -> susceptible: frequency {freq:.3f} "
          f"({'supported' if supported else 'not supported'} at threshold {args.threshold})")
    print(f"wrote {edges_path} and {verdict_path}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.data_dir), host=args.host, port=args.port)
    return 0


def _cmd_fixture(args: argparse.Namespace) -> int:
    series, statics = write_fixture(args.out_dir)
    print(f"wrote {series} and {statics}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vacsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline and persist artifacts")
    run.add_argument("--config", help="JSON file mirroring the run configuration")
    run.add_argument("--series", help="observed series CSV (default: bundled fixture)")
    run.add_argument("--statics", help="region statics CSV (default: bundled fixture)")
    run.add_argument("--runs-dir", default="runs", help="artifact output directory")
    run.set_defaults(func=_cmd_run)

    audit = sub.add_parser("bn-audit", help="bootstrap a causal-structure audit")
    audit.add_argument("--input", required=True, help="simulation log CSV")
    audit.add_argument("--criterion", choices=("aic", "bic"), default="aic")
    audit.add_argument("--bootstraps", type=int, default=501)
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--bins", type=int, default=3)
    audit.add_argument("--threshold", type=float, default=0.5)
    audit.add_argument("--out-dir", default=".")
    audit.set_defaults(func=_cmd_bn_audit)

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--data-dir", default="vacsim-data")
    serve.set_defaults(func=_cmd_serve)

    fixture = sub.add_parser("fixture", help="write the bundled synthetic dataset")
    fixture.add_argument("--out-dir", default="fixture")
    fixture.set_defaults(func=_cmd_fixture)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
