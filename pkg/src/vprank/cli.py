"""
Command-line entry point.

    vprank synth           write a synthetic dataset
    vprank rank            consensus rankings for every probe video
    vprank eval            CMC / mAP of a rankings file
    vprank bound           Monte Carlo check of the majority error bound
    vprank diagnose-order  frame-order invariance and sample-rate sweep

Exit codes: 0 success, 1 failed check (bound violated, order dependence),
2 bad input, 3 gallery too large for the exact Kemeny solver.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .aggregate import DEFAULT_EXACT_CAP, METHODS, CapacityError, CEMCConfig
from .bound import bound_grid
from .core import Dataset, format_rate, parse_rate, shuffle_dataset
from .io import (
    DatasetFormatError,
    SyntheticSpec,
    dump_json,
    generate_synthetic,
    rankings_document,
    read_rankings,
    read_videos,
    truth_from_identities,
    write_dataset,
)
from .metrics import evaluate
from .pipeline import consensus_rankings
from .ranking import DistanceMode

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT = 2
EXIT_CAPACITY = 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _rate(text: str):
    try:
        return parse_rate(text)
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _rate_list(text: str) -> list:
    return [_rate(x) for x in text.split(",") if x.strip()]


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _add_synth_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--persons", type=int, required=required, default=None if required else 20)
    p.add_argument("--frames", type=int, required=required, default=None if required else 16)
    p.add_argument("--dim", type=int, required=required, default=None if required else 16)
    p.add_argument("--sep", type=float, default=1.0, help="radius of the identity-centroid sphere")
    p.add_argument("--noise", type=float, default=0.3, help="per-frame noise standard deviation")
    p.add_argument("--camera-shift", type=float, default=0.0, help="norm of each camera's offset")


def _add_aggregation_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dist", choices=[m.value for m in DistanceMode], default="min")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--cap", type=_positive, default=DEFAULT_EXACT_CAP, help="gallery size limit for --agg kemeny")
    defaults = CEMCConfig()
    p.add_argument("--samples", type=_positive, default=defaults.samples)
    p.add_argument("--elite-fraction", type=float, default=defaults.elite_fraction)
    p.add_argument("--alpha", type=float, default=defaults.alpha)
    p.add_argument("--max-iters", type=_positive, default=defaults.max_iters)
    p.add_argument("--patience", type=_positive, default=defaults.patience)
    p.add_argument("--workers", type=_positive, default=1)


def _cemc_config(args) -> CEMCConfig:
    return CEMCConfig(args.samples, args.elite_fraction, args.alpha, args.max_iters, args.patience)


def _method_params(method: str, args) -> dict:
    if method == "kemeny":
        return {"cap": args.cap}
    if method == "cemc":
        c = _cemc_config(args)
        return {
            "samples": c.samples,
            "elite_fraction": c.elite_fraction,
            "alpha": c.alpha,
            "max_iters": c.max_iters,
            "patience": c.patience,
        }
    return {}


def _load(args) -> Dataset:
    return Dataset(tuple(read_videos(args.probe, "probe")), tuple(read_videos(args.gallery, "gallery")))


def _dataset_from_args(args) -> Dataset:
    if args.probe or args.gallery:
        if not (args.probe and args.gallery):
            raise ValueError("--probe and --gallery must be given together")
        return _load(args)
    spec = SyntheticSpec(
        persons=args.persons,
        frames_per_video=args.frames,
        dim=args.dim,
        identity_separation=args.sep,
        frame_noise=args.noise,
        seed=args.data_seed,
        camera_shift=args.camera_shift,
    )
    return generate_synthetic(spec)


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        persons=args.persons,
        frames_per_video=args.frames,
        dim=args.dim,
        identity_separation=args.sep,
        frame_noise=args.noise,
        seed=args.seed,
        camera_shift=args.camera_shift,
    )
    manifest = write_dataset(generate_synthetic(spec), args.out)
    print(f"wrote {len(manifest.videos)} videos (D={manifest.dim}) to {Path(args.out) / 'manifest.json'}")
    return EXIT_OK


def cmd_rank(args) -> int:
    dataset = _load(args)
    consensus = consensus_rankings(
        dataset,
        args.agg,
        mode=args.dist,
        k=args.k,
        seed=args.seed,
        config=_cemc_config(args),
        cap=args.cap,
        workers=args.workers,
    )
    doc = rankings_document(
        dataset,
        consensus,
        method=args.agg,
        params=_method_params(args.agg, args),
        seed=args.seed,
        distance=args.dist,
        k=format_rate(args.k),
    )
    _emit(dump_json(doc), args.out)
    return EXIT_OK


def _format_eval(result, header: str | None = None) -> str:
    lines = [header] if header else []
    lines.append(f"{'metric':<10}{'value':>10}")
    for k, v in sorted(result.cmc.items()):
        lines.append(f"{'rank-' + str(k):<10}{100 * v:>9.2f}%")
    lines.append(f"{'mAP':<10}{100 * result.map_score:>9.2f}%")
    lines.append(f"queries: {result.num_queries}")
    return "\n".join(lines) + "\n"


def cmd_eval(args) -> int:
    doc = read_rankings(args.rankings)
    queries = doc["queries"]
    orders = [q["order"] for q in queries]
    if args.probe or args.gallery:
        if not (args.probe and args.gallery):
            raise ValueError("--probe and --gallery must be given together")
        probe_ids = [v.identity for v in read_videos(args.probe, "probe")]
        gallery_ids = [v.identity for v in read_videos(args.gallery, "gallery")]
        if len(probe_ids) != len(queries):
            raise ValueError(f"rankings hold {len(queries)} queries but the probe manifest lists {len(probe_ids)} videos")
    else:
        probe_ids = [q["identity"] for q in queries]
        gallery_ids = [g["identity"] for g in doc["gallery"]]
    result = evaluate(orders, truth_from_identities(probe_ids, gallery_ids), args.ranks)
    if args.json:
        _emit(dump_json(result.to_dict() | {"method": doc.get("method"), "k": doc.get("k")}), args.out)
    else:
        _emit(_format_eval(result, f"method: {doc.get('method')}  k: {doc.get('k')}"), args.out)
    return EXIT_OK


def cmd_bound(args) -> int:
    reports = bound_grid(args.eps, args.t_values, args.trials, args.seed, args.workers)
    ok = all(r.holds() for r in reports)
    if args.json:
        _emit(dump_json({"seed": args.seed, "trials": args.trials, "points": [r.to_dict() for r in reports], "holds": ok}), args.out)
    else:
        lines = [f"{'eps':>6} {'T':>6} {'empirical':>11} {'stderr':>10} {'bound':>11}  status"]
        for r in reports:
            status = "ok" if r.holds() else "VIOLATED"
            lines.append(
                f"{r.epsilon:>6.3f} {r.T:>6d} {r.empirical_error:>11.6f} {r.stderr:>10.6f} {r.theoretical_bound:>11.6f}  {status}"
            )
        lines.append("all points within bound + 3 stderr" if ok else "bound violated")
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_diagnose_order(args) -> int:
    dataset = _dataset_from_args(args)
    methods = list(METHODS) if args.agg == "all" else [args.agg]
    common = dict(mode=args.dist, seed=args.seed, config=_cemc_config(args), cap=args.cap, workers=args.workers)

    checks = []
    baseline = {m: consensus_rankings(dataset, m, k=1, **common) for m in methods}
    for s in args.seeds:
        shuffled = shuffle_dataset(dataset, s)
        for m in methods:
            got = consensus_rankings(shuffled, m, k=1, **common)
            same = all((a.order == b.order).all() for a, b in zip(baseline[m], got))
            checks.append({"seed": s, "method": m, "pass": bool(same)})

    sweep = []
    truth = dataset.truth()
    for k in args.k:
        row = {"k": format_rate(k)}
        for m in methods:
            res = evaluate(consensus_rankings(dataset, m, k=k, **common), truth, args.ranks)
            row[m] = {"cmc": {str(c): v for c, v in sorted(res.cmc.items())}, "map": res.map_score}
        sweep.append(row)

    ok = all(c["pass"] for c in checks)
    if args.json:
        _emit(dump_json({"order_invariance": checks, "sample_rate_sweep": sweep, "pass": ok}), args.out)
    else:
        lines = ["order invariance (shuffled vs ordinal frames, K=1)"]
        for c in checks:
            lines.append(f"  seed {c['seed']:>4} {c['method']:<7} {'PASS' if c['pass'] else 'FAIL'}")
        lines.append("")
        lines.append("rank-1 accuracy vs sample rate K")
        lines.append(f"  {'K':>5} " + " ".join(f"{m:>8}" for m in methods))
        for row in sweep:
            accs = " ".join(f"{100 * row[m]['cmc'][str(min(args.ranks))]:>7.2f}%" for m in methods)
            lines.append(f"  {row['k']:>5} {accs}")
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vprank", description="Orderless ensemble ranking for video re-identification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic two-camera dataset")
    _add_synth_flags(p, required=True)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("rank", help="consensus ranking for every probe video")
    p.add_argument("--probe", required=True, help="manifest holding the probe videos")
    p.add_argument("--gallery", required=True, help="manifest holding the gallery videos")
    p.add_argument("--k", type=_rate, default=1, help="sample rate: integer or 'inf'")
    p.add_argument("--agg", choices=METHODS, default="count")
    _add_aggregation_flags(p)
    p.add_argument("--out", help="rankings JSON path (default: stdout)")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", help="CMC and mAP of a rankings file")
    p.add_argument("--rankings", required=True)
    p.add_argument("--probe", help="probe manifest (default: identities stored in the rankings file)")
    p.add_argument("--gallery", help="gallery manifest")
    p.add_argument("--ranks", type=_int_list, default=[1, 5, 10, 20])
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bound", help="Monte Carlo check of the majority-vote error bound")
    p.add_argument("--eps", type=_float_list, default=[0.05, 0.1, 0.2])
    p.add_argument("--t-values", type=_int_list, default=[10, 50, 100, 500])
    p.add_argument("--trials", type=_positive, default=100_000)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("diagnose-order", help="check frame-order invariance and sweep the sample rate")
    p.add_argument("--probe")
    p.add_argument("--gallery")
    _add_synth_flags(p, required=False)
    p.add_argument("--data-seed", type=_seed, default=0, help="seed of the synthetic dataset when no manifests are given")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3, 4])
    p.add_argument("--k", type=_rate_list, default=_rate_list("1,10,30,inf"))
    p.add_argument("--agg", choices=(*METHODS, "all"), default="count")
    p.add_argument("--ranks", type=_int_list, default=[1, 5, 10])
    _add_aggregation_flags(p)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose_order)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (DatasetFormatError, ValueError, TypeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
