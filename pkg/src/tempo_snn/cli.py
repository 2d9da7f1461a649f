"""``tempo-snn`` command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 numerical
error (singular matrix, inadmissible ratio, ...).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from tempo_snn.adapt import AdaptMethod, ResolutionRatio
from tempo_snn.errors import DataError, NumericalError
from tempo_snn.harness import (
    ALL_METHODS,
    COARSE_TO_FINE,
    FINE_TO_COARSE,
    E2EConfig,
    StudyConfig,
    e2e_experiment,
    gen_synthetic_dataset,
    pair_traces,
    parse_direction,
    single_neuron_experiment,
)
from tempo_snn.io import dumps_json, load_model, read_dataset, save_model, write_dataset
from tempo_snn.network import TrainConfig, adapt_model, evaluate, init_model, train
from tempo_snn.normstats import StatAdaptRule, StatMode
from tempo_snn.resample import ResampleKind, resample_dataset

HELP_WIDTH = 80


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=HELP_WIDTH)


def _methods(text: str) -> tuple[AdaptMethod, ...]:
    if text.strip().lower() == "all":
        return ALL_METHODS
    try:
        return tuple(AdaptMethod.parse(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ratio(text: str) -> ResolutionRatio:
    try:
        return ResolutionRatio.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _direction(text: str) -> str:
    if text.strip().lower() == "both":
        return "both"
    try:
        return parse_direction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_list(text: str) -> tuple[int, ...]:
    try:
        out = []
        for part in text.split(","):
            if "-" in part.strip()[1:]:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        return tuple(out)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like '0-9' or '1,2,3', got {text!r}") from None


def _kind(text: str) -> ResampleKind:
    try:
        return ResampleKind.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="tempo-snn",
        description="Adapt spiking neuron parameters to a new temporal resolution.",
        formatter_class=_formatter,
    )
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, formatter_class=_formatter)

    g = cmd("gen-data", "Generate the synthetic burst-order classification dataset.")
    g.add_argument("--classes", type=_positive_int, default=4)
    g.add_argument("--samples-per-class", type=_positive_int, default=200)
    g.add_argument("--channels", type=_positive_int, default=16)
    g.add_argument("--timesteps", type=_positive_int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output dataset directory")

    r = cmd("resample", "Resample every sample of a dataset in time.")
    r.add_argument("--data", required=True, help="input dataset directory")
    r.add_argument("--kind", type=_kind, default=ResampleKind.SUM_BIN,
                   help="sum-bin, binary-sum-bin, max-pool, pad-zeros or repeat-elems")
    r.add_argument("--factor", type=_positive_int, required=True)
    r.add_argument("--out", required=True, help="output dataset directory")

    t = cmd("train", "Train an adLIF network with BPTT.")
    t.add_argument("--data", required=True, help="training dataset directory")
    t.add_argument("--val", help="validation dataset directory (enables early stopping)")
    t.add_argument("--hidden", type=_int_list, default=(64, 64), help="layer widths, e.g. 64,64")
    t.add_argument("--recurrent", action="store_true", help="add recurrent weights (RadLIF)")
    t.add_argument("--epochs", type=_positive_int, default=20)
    t.add_argument("--batch-size", type=_positive_int, default=32)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--history", help="write the per-epoch loss history as JSON here")
    t.add_argument("--out", required=True, help="output model file")

    a = cmd("adapt", "Adapt a model to a new timestep duration.")
    a.add_argument("--model", required=True)
    a.add_argument("--method", required=True, type=AdaptMethod.parse,
                   help="none, integral, euler, expectation or time-constant")
    a.add_argument("--rho", required=True, type=_ratio, help="dt_target/dt_source, e.g. 2 or 1/2")
    a.add_argument("--norm-kind", type=_kind, default=ResampleKind.SUM_BIN,
                   help="transform assumed for the normalization statistics")
    a.add_argument("--norm-mode", choices=[m.value for m in StatMode], default="theoretical")
    a.add_argument("--no-norm", action="store_true", help="leave normalization statistics unchanged")
    a.add_argument("--out", help="output model file")

    e = cmd("eval", "Report model accuracy on a dataset.")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="write the result as JSON here")

    n = cmd("neuron-study", "Single-neuron dynamics matching study (Q1/Q2 per method).")
    n.add_argument("--pairs", type=_positive_int, default=1000)
    n.add_argument("--direction", type=_direction, default="both",
                   help="fine2coarse, coarse2fine or both")
    n.add_argument("--methods", type=_methods, default=ALL_METHODS, help="'all' or a comma list")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--coarse-input", choices=["mean", "sum"], default="mean")
    n.add_argument("--decay-sampling", choices=["time_constant", "uniform"], default="time_constant")
    n.add_argument("--theta", type=float, default=1.0)
    n.add_argument("--jobs", type=_positive_int, help="worker processes (default $TEMPO_SNN_JOBS or 1)")
    n.add_argument("--table", help="also write the text table here")
    n.add_argument("--traces", help="write the traces of the first pair as CSV here")
    n.add_argument("--out", required=True, help="output report JSON")

    x = cmd("e2e", "Train at one bin size, deploy at another, compare adaptations.")
    x.add_argument("--direction", type=_direction, default=COARSE_TO_FINE)
    x.add_argument("--methods", type=_methods, default=(AdaptMethod.INTEGRAL,))
    x.add_argument("--bin-source", type=_positive_int, default=2)
    x.add_argument("--bin-target", type=_positive_int, default=1)
    x.add_argument("--seeds", type=_int_list, default=tuple(range(10)), help="e.g. 0-9 or 1,4,7")
    x.add_argument("--classes", type=_positive_int, default=4)
    x.add_argument("--train-per-class", type=_positive_int, default=200)
    x.add_argument("--test-per-class", type=_positive_int, default=50)
    x.add_argument("--channels", type=_positive_int, default=16)
    x.add_argument("--timesteps", type=_positive_int, default=64)
    x.add_argument("--hidden", type=_int_list, default=(64, 64))
    x.add_argument("--recurrent", action="store_true")
    x.add_argument("--epochs", type=_positive_int, default=15)
    x.add_argument("--jobs", type=_positive_int, help="worker processes (default $TEMPO_SNN_JOBS or 1)")
    x.add_argument("--out", required=True, help="output report JSON")
    return p


def _write(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _cmd_gen_data(args):
    data = gen_synthetic_dataset(args.classes, args.samples_per_class, args.channels, args.timesteps, args.seed)
    write_dataset(data, args.out)
    print(f"wrote {len(data)} samples to {args.out}")


def _cmd_resample(args):
    data = resample_dataset(read_dataset(args.data), args.kind, args.factor)
    write_dataset(data, args.out)
    print(f"wrote {len(data)} samples to {args.out}")


def _cmd_train(args):
    data = read_dataset(args.data)
    if not data:
        raise DataError(f"{args.data}: empty dataset")
    val = read_dataset(args.val) if args.val else None
    classes = max(y for _, y in data) + 1
    model = init_model(data[0][0].channels, args.hidden, classes, args.recurrent, seed=args.seed)
    model.meta.update(dt=data[0][0].dt, bin_size=data[0][0].dt)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    model, history = train(model, data, cfg, val)
    save_model(model, args.out)
    if args.history:
        _write(args.history, dumps_json(history))
    print(f"final training loss {history[-1]['train_loss']:.6f}; model written to {args.out}")


def _cmd_adapt(args):
    model = load_model(args.model)
    rule = None if args.no_norm else StatAdaptRule(args.norm_kind, StatMode(args.norm_mode))
    out = adapt_model(model, args.method, args.rho, rule)
    if args.out:
        save_model(out, args.out)
        print(f"adapted model written to {args.out}")


def _cmd_eval(args):
    model = load_model(args.model)
    data = read_dataset(args.data)
    acc = evaluate(model, data)
    print(f"accuracy {acc:.4f} on {len(data)} samples")
    if args.out:
        _write(args.out, dumps_json({"accuracy": acc, "samples": len(data)}))


def _cmd_neuron_study(args):
    cfg = StudyConfig(args.coarse_input, args.decay_sampling, args.theta)
    dirs = [FINE_TO_COARSE, COARSE_TO_FINE] if args.direction == "both" else [args.direction]
    reports = [single_neuron_experiment(args.pairs, d, args.methods, args.seed, cfg, args.jobs) for d in dirs]
    payload = reports[0].to_dict() if len(reports) == 1 else {r.direction: r.to_dict() for r in reports}
    _write(args.out, dumps_json(payload))
    table = "\n".join(r.to_table() for r in reports)
    if args.table:
        _write(args.table, table)
    if args.traces:
        from tempo_snn.rng import derive_seed

        lines = []
        for d in dirs:
            ref, cands, _ = pair_traces(derive_seed(args.seed, 0), d, args.methods, cfg)
            names = [m.value for m in args.methods if not isinstance(cands[m], Exception)]
            lines.append(",".join(["direction", "n", "reference", *names]))
            for k in range(ref.shape[0]):
                vals = [repr(float(ref[k]))] + [repr(float(cands[m][k])) for m in args.methods if m.value in names]
                lines.append(",".join([d, str(k), *vals]))
        _write(args.traces, "\n".join(lines) + "\n")
    sys.stdout.write(table)


def _cmd_e2e(args):
    if args.direction == "both":
        raise UsageError("e2e needs one direction")
    cfg = E2EConfig(
        args.classes, args.train_per_class, args.test_per_class, args.channels, args.timesteps,
        args.hidden, args.recurrent, args.epochs,
    )
    res = e2e_experiment(args.direction, args.methods, args.bin_source, args.bin_target, args.seeds, cfg, args.jobs)
    _write(args.out, dumps_json(res))
    for k, v in res["mean"].items():
        print(f"{k:<15}{v:.4f}")


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "resample": _cmd_resample,
    "train": _cmd_train,
    "adapt": _cmd_adapt,
    "eval": _cmd_eval,
    "neuron-study": _cmd_neuron_study,
    "e2e": _cmd_e2e,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
