"""Command-line driver: collect -> train -> quantize -> eval / trace / bench / inspect."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("tinylidarnet")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys may use - or _."""
    cfg = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value")
            k, v = (s.strip() for s in line.split("=", 1))
            cfg[k.replace("-", "_")] = v
    return cfg


def _figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def _resolve_model(ref: str, track=None):
    """Checkpoint path, or the pseudo-models ``expert`` / ``stop``."""
    from .evaluation import NetPolicy, stop_policy
    from .expert import expert_policy
    from .quant import load_model

    if ref == "expert":
        if track is None:
            raise ValueError("the expert needs a track")
        return expert_policy(track), "expert"
    if ref == "stop":
        return stop_policy, "stop"
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"model file not found: {path}")
    model = load_model(path)
    kind = "int8" if model.__class__.__name__ == "QuantizedNet" else "fp32"
    return NetPolicy(model, f"{model.spec.name}/{kind}"), f"{model.spec.name}/{kind}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_collect(args) -> None:
    from .expert import collect, save_dataset
    from .sim import get_track

    ds = collect(get_track(args.track), n_laps=args.laps, seed=args.seed, perturb=args.perturb)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples from {args.laps} lap(s) on {args.track} to {args.out}"
          + ("" if ds.complete else " (PARTIAL: expert did not finish)"))


def cmd_train(args) -> None:
    from .expert import load_dataset
    from .nn import save_params
    from .train import TrainConfig, train
    from .zoo import build

    data = load_dataset(args.data)
    spec = build(args.family, args.size)
    cfg = TrainConfig(batch_size=args.batch, epochs=args.epochs, lr=args.lr, seed=args.seed)
    res = train(spec, data, cfg)
    save_params(res.params, args.out)
    print(f"{spec.name}: {len(res.train_index)} train / {len(res.val_index)} val samples; "
          f"final train {res.train_loss[-1]:.5f} val {res.val_loss[-1]:.5f}; wrote {args.out}")
    if args.history:
        rows = np.column_stack([np.arange(1, len(res.train_loss) + 1), res.train_loss, res.val_loss])
        np.savetxt(args.history, rows, fmt=["%d", "%.6f", "%.6f"], delimiter=",",
                   header="epoch,train_loss,val_loss", comments="")
        if not args.no_plot:
            from .plotting import plot_losses

            plot_losses(res, _figure_path(args.history), title=spec.name)


def cmd_quantize(args) -> None:
    from .expert import load_dataset
    from .nn import load_params
    from .quant import calibrate, quantize, save_qnet
    from .train import TrainConfig, calibration_indices, model_inputs

    params = load_params(args.model)
    data = load_dataset(args.calib)
    idx = calibration_indices(len(data), TrainConfig(seed=args.seed), args.n_calib)
    rep = model_inputs(params.spec, data.scans[idx])
    qnet = quantize(params, calibrate(params, rep))
    save_qnet(qnet, args.out)
    print(f"{params.spec.name}: calibrated on {len(rep)} scans; wrote {args.out}")


def cmd_eval(args) -> None:
    from .evaluation import evaluate, format_report, write_report_csv
    from .sim import get_track

    track = get_track(args.track)
    policy, name = _resolve_model(args.model, track)
    entry = evaluate(policy, track, n_trials=args.trials, seed=args.seed, timeout_s=args.timeout,
                     workers=args.workers, name=name)
    print(format_report([entry]))
    if args.report:
        write_report_csv([entry], args.report)
        if not args.no_plot:
            from .plotting import plot_report

            plot_report([entry], _figure_path(args.report))


def cmd_trace(args) -> None:
    from .evaluation import trace, wobble_metric, write_trace_csv
    from .sim import get_track

    track = get_track(args.track)
    policy, name = _resolve_model(args.model, track)
    tr = trace(policy, track, start=args.start, seed=args.seed, timeout_s=args.timeout)
    write_trace_csv(tr, args.out)
    lap = "N/A" if tr.lap_time is None else f"{tr.lap_time:.2f} s"
    wob = wobble_metric(tr) if len(tr.data) >= 3 else float("nan")
    print(f"{name} on {track.name}: {tr.outcome}, progress {tr.progress:.1f}%, lap {lap}, "
          f"wobble proxy {wob:.5f} rad/tick; wrote {args.out}")
    if not args.no_plot:
        from .plotting import plot_trace

        plot_trace(tr, track, _figure_path(args.out), title=f"{name}: {tr.outcome}")


def cmd_bench(args) -> None:
    from .bench import BENCH_COLUMNS, bench_latency, write_bench_csv
    from .quant import load_model

    results = []
    for ref in args.model:
        if not Path(ref).exists():
            raise FileNotFoundError(f"model file not found: {ref}")
        results.append(bench_latency(load_model(ref), n_iters=args.iters, warmup=args.warmup))
    print(",".join(BENCH_COLUMNS))
    for r in results:
        print(f"{r.model},{r.format},{r.mean_us:.2f},{r.p50_us:.2f},{r.p99_us:.2f},"
              f"{r.bytes},{r.params},{r.macs}")
    if args.out:
        write_bench_csv(results, args.out)


def _inspect_spec(ref: str):
    from .quant import load_model
    from .zoo import build

    if Path(ref).exists():
        return load_model(ref).spec
    for sep in (":", "-", "_"):
        if sep in ref:
            fam, size = ref.rsplit(sep, 1)
            return build(fam.lower(), size)
    raise FileNotFoundError(f"no model file or family:size name {ref!r}")


def cmd_inspect(args) -> None:
    from .zoo import count_macs, count_params, layer_table

    if args.model:
        specs = [_inspect_spec(args.model)]
    else:
        from .zoo import build

        specs = [build(args.family, args.size)]
    for spec in specs:
        print(f"{spec.name} (input {spec.input_length})")
        print(f"  {'layer':<34} {'output':<12} {'params':>9} {'MACs':>11}")
        for row in layer_table(spec):
            shape = "x".join(str(d) for d in row["output"])
            print(f"  {row['layer']:<34} {shape:<12} {row['params']:>9,} {row['macs']:>11,}")
        print(f"  total params {count_params(spec):,}  MACs {count_macs(spec):,}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tinylidarnet", description=__doc__)
    p.add_argument("--config", help="flat key=value file supplying defaults for any flag")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="record expert driving as a dataset CSV")
    c.add_argument("--track", default="oval", help="bundled track name or bundle directory")
    c.add_argument("--laps", type=int, default=30)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--perturb", type=float, default=0.12,
                   help="max steering offset (rad) injected while recording")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_collect)

    t = sub.add_parser("train", help="behavior-clone a model from a dataset CSV")
    t.add_argument("--family", choices=["tinylidarnet", "mlp256"], default="tinylidarnet")
    t.add_argument("--size", choices=["L", "M", "S"], default="L")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--lr", type=float, default=5e-5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.add_argument("--history", help="per-epoch loss CSV (a .png curve is written beside it)")
    t.add_argument("--no-plot", action="store_true")
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("quantize", help="int8 post-training quantization")
    q.add_argument("--model", required=True)
    q.add_argument("--calib", required=True,
                   help="training dataset CSV; the first --n-calib rows of the training split are used")
    q.add_argument("--n-calib", type=int, default=256)
    q.add_argument("--seed", type=int, default=0, help="seed the model was trained with (fixes the split)")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    e = sub.add_parser("eval", help="random-start trials: avg lap time and avg progress")
    e.add_argument("--model", required=True, help="checkpoint path, or 'expert' / 'stop'")
    e.add_argument("--track", default="oval")
    e.add_argument("--trials", type=int, default=10)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--timeout", type=float, default=60.0, help="episode timeout (s)")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--report", help="report CSV (a .png is written beside it)")
    e.add_argument("--no-plot", action="store_true")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("trace", help="per-tick trace of one episode")
    r.add_argument("--model", required=True, help="checkpoint path, or 'expert' / 'stop'")
    r.add_argument("--track", default="oval")
    r.add_argument("--start", type=int, default=0, help="start waypoint index")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--timeout", type=float, default=60.0)
    r.add_argument("--out", required=True, help="trace CSV (a .png is written beside it)")
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_trace)

    b = sub.add_parser("bench", help="single-threaded inference latency")
    b.add_argument("--model", required=True, nargs="+")
    b.add_argument("--iters", type=int, default=10000)
    b.add_argument("--warmup", type=int, default=100)
    b.add_argument("--out", help="CSV output")
    b.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect", help="layer table with parameter and MAC counts")
    i.add_argument("--model", help="checkpoint path or family:size, e.g. tinylidarnet:L")
    i.add_argument("--family", choices=["tinylidarnet", "mlp256"], default="tinylidarnet")
    i.add_argument("--size", choices=["L", "M", "S"], default="L")
    i.set_defaults(func=cmd_inspect)
    return p


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        for action in parser._subparsers._group_actions:  # the subcommand action
            for sp in action.choices.values():
                for a in sp._actions:
                    if a.dest in cfg:
                        a.default = cfg[a.dest]
                        a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except FileNotFoundError as e:
        print(f"error: FileNotFoundError: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as e:  # noqa: BLE001
        msg = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
