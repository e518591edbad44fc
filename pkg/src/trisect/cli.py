"""Command-line front end.

Subcommands: transform, quantize, eval, experiment, inspect. Reports print
to standard output; files are written only at explicitly given output paths.
Every subcommand is deterministic given its flags and seed, and reports echo
the effective configuration.

Exit codes:
    0  success
    2  argument error (bad flags or values)
    3  I/O error (missing or unreadable file)
    4  parse error (malformed manifest/dataset, version mismatch)
    5  validation error (graph invariants violated, shape mismatch)
    6  numeric-degenerate error (no calibration data for activation quant)
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from trisect import __version__
from trisect.errors import (
    ArgumentError,
    CalibrationError,
    DimensionError,
    KindError,
    ParseError,
    ValidationError,
)
from trisect.ir import Graph, execute, validate
from trisect.metrics import (
    EvalReport,
    evaluate_accuracy,
    input_dicts,
    load_dataset,
    output_error,
    run_experiment,
)
from trisect.model_io import load_model, parse_value, save_model, tokenize
from trisect.quant import QuantConfig, fake_quant_execute
from trisect.rng import Rng, mix64
from trisect.tensor import BACKEND, Tensor
from trisect.transform import TransformConfig, apply_transforms

EXIT_OK = 0
EXIT_ARGUMENT = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_VALIDATION = 5
EXIT_DEGENERATE = 6


def _load_validated(path: str) -> Graph:
    g = load_model(path)
    diags = validate(g)
    if diags:
        raise ValidationError(diags)
    return g


def _quant_config(args) -> QuantConfig:
    return QuantConfig(
        bits=None if args.qmin is not None else args.bits,
        qmin=args.qmin,
        qmax=args.qmax,
        symmetric=args.symmetric,
        activation_calibration=args.calibration,
        percentile=args.percentile,
        weights_only=args.weights_only,
    )


def _maybe_write(text: str, out_path: str | None) -> None:
    sys.stdout.write(text)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")


def cmd_transform(args) -> int:
    g = _load_validated(args.model_in)
    cfg = TransformConfig(
        split_weights=args.split_weights,
        split_activations=args.split_activations and not args.weights_only,
        fold_batchnorm=args.fold_batchnorm,
        kmeans_seed=args.seed,
    )
    rewritten, report = apply_transforms(g, cfg)
    diags = validate(rewritten)
    if diags:
        raise ValidationError(diags)
    save_model(rewritten, args.model_out)
    header = [
        f"config.model_in {args.model_in}",
        f"config.model_out {args.model_out}",
        f"config.split_weights {'true' if cfg.split_weights else 'false'}",
        f"config.split_activations {'true' if cfg.split_activations else 'false'}",
        f"config.fold_batchnorm {'true' if cfg.fold_batchnorm else 'false'}",
        f"config.seed {cfg.kmeans_seed}",
        f"config.backend {BACKEND}",
    ]
    _maybe_write("\n".join(header) + "\n" + report.to_text(), args.report_out)
    return EXIT_OK


def _eval_inputs(args, g: Graph) -> tuple[list[Tensor], list[int] | None]:
    if args.dataset is not None and args.gen_inputs is not None:
        raise ArgumentError("--dataset and --gen-inputs are mutually exclusive")
    if args.dataset is None and args.gen_inputs is None:
        raise ArgumentError("provide inputs with --dataset or --gen-inputs")
    if args.dataset:
        d = load_dataset(args.dataset)
        return list(d.features), list(d.labels)
    if len(g.inputs) != 1:
        raise ArgumentError("--gen-inputs needs a single-input model")
    shape = next(iter(g.inputs.values()))
    numel = 1
    for dim in shape:
        numel *= dim
    rng = Rng(mix64(args.seed, 0xC0DE))
    features = [
        Tensor.from_flat(shape, [rng.normal() for _ in range(numel)])
        for _ in range(args.gen_inputs)
    ]
    return features, None


def cmd_quantize(args) -> int:
    g = _load_validated(args.model)
    cfg = _quant_config(args)
    features, _ = _eval_inputs(args, g)
    if not features:
        raise ArgumentError("no inputs to evaluate")
    samples = input_dicts(g, features)
    fp32_outputs = [execute(g, s) for s in samples]
    q_outputs, qreport = fake_quant_execute(g, cfg, samples, samples)
    names = sorted(g.outputs)
    ref = [out[name] for out in fp32_outputs for name in names]
    cand = [out[name] for out in q_outputs for name in names]
    err = output_error(ref, cand)
    report = EvalReport(
        config={
            "command": "quantize", "model": args.model, "bits": args.bits,
            "qmin": cfg.int_range()[0], "qmax": cfg.int_range()[1],
            "symmetric": cfg.symmetric, "weights_only": cfg.weights_only,
            "calibration": cfg.activation_calibration, "percentile": cfg.percentile,
            "seed": args.seed, "inputs": len(features), "backend": BACKEND,
        },
        metrics=err,
        entries=qreport.entries,
    )
    _maybe_write(report.to_text(), args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    g = _load_validated(args.model)
    d = load_dataset(args.dataset)
    cfg = None if args.fp32 else _quant_config(args)
    acc, entries = evaluate_accuracy(g, d, cfg)
    report = EvalReport(
        config={
            "command": "eval", "model": args.model, "dataset": args.dataset,
            "mode": "fp32" if args.fp32 else "fake-quant",
            "bits": None if args.fp32 else args.bits,
            "symmetric": False if args.fp32 else args.symmetric,
            "weights_only": False if args.fp32 else args.weights_only,
            "samples": len(d), "backend": BACKEND,
        },
        metrics={"accuracy": acc},
        entries=entries,
    )
    _maybe_write(report.to_text(), args.out)
    return EXIT_OK


def _parse_int_list(text: str, what: str) -> list[int]:
    items: list[int] = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" in chunk:
            lo, _, hi = chunk.partition(":")
            try:
                items.extend(range(int(lo), int(hi)))
            except ValueError:
                raise ArgumentError(f"bad {what} range '{chunk}'") from None
        else:
            try:
                items.append(int(chunk))
            except ValueError:
                raise ArgumentError(f"bad {what} value '{chunk}'") from None
    if not items:
        raise ArgumentError(f"empty {what} list")
    return items


def cmd_experiment(args) -> int:
    seeds = _parse_int_list(args.seeds, "seed")
    bits_list = _parse_int_list(args.bits, "bits")
    for b in bits_list:
        if b not in (2, 4, 8):
            raise ArgumentError(f"unsupported bit-width {b} (choose 2, 4 or 8)")
    rows = []
    for seed in seeds:
        for b in bits_list:
            res = run_experiment(
                seed, b, args.weights_only,
                outlier_fraction=args.outlier_fraction,
                outlier_scale=args.outlier_scale,
                width=args.width, depth=args.depth,
                n_classes=args.classes, n_samples=args.samples,
            )
            rows.append(res)
    lines = [
        f"# seeds={len(seeds)} samples={args.samples} width={args.width} "
        f"depth={args.depth} outlier_fraction={args.outlier_fraction} "
        f"outlier_scale={args.outlier_scale} "
        f"mode={'weight-only' if args.weights_only else 'full'} backend={BACKEND}",
    ]
    if args.per_seed:
        lines.append(f"{'seed':>6} {'bits':>4} {'acc_fp32':>9} {'acc_baseline':>12} "
                     f"{'acc_split':>9} {'diff':>8} {'mse_baseline':>13} {'mse_split':>13}")
        for r in rows:
            lines.append(f"{r.seed:>6} {r.bits:>4} {r.acc_fp32:>9.4f} {r.acc_baseline:>12.4f} "
                         f"{r.acc_split:>9.4f} {r.acc_split - r.acc_baseline:>+8.4f} "
                         f"{r.mse_baseline:>13.6g} {r.mse_split:>13.6g}")
    lines.append(f"{'bits':>4} {'acc_fp32':>9} {'acc_baseline':>12} {'acc_split':>9} "
                 f"{'diff':>8} {'mse_baseline':>13} {'mse_split':>13}")
    for b in bits_list:
        subset = [r for r in rows if r.bits == b]
        n = len(subset)
        mean = lambda vals: sum(vals) / n  # noqa: E731
        lines.append(
            f"{b:>4} {mean([r.acc_fp32 for r in subset]):>9.4f} "
            f"{mean([r.acc_baseline for r in subset]):>12.4f} "
            f"{mean([r.acc_split for r in subset]):>9.4f} "
            f"{mean([r.acc_split - r.acc_baseline for r in subset]):>+8.4f} "
            f"{mean([r.mse_baseline for r in subset]):>13.6g} "
            f"{mean([r.mse_split for r in subset]):>13.6g}"
        )
    _maybe_write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_inspect(args) -> int:
    g = load_model(args.model)
    lines = [f"model {args.model}"]
    for name, shape in g.inputs.items():
        lines.append(f"input {name} shape {'x'.join(str(d) for d in shape)}")
    lines.append("outputs " + " ".join(g.outputs))
    n_params = 0
    for layer in g.layers:
        desc = f"layer {layer.id} kind {layer.kind}"
        if layer.inputs:
            desc += " in " + ",".join(layer.inputs)
        for pname, t in sorted(layer.params.items()):
            desc += f" {pname} {'x'.join(str(d) for d in t.shape)}"
            n_params += t.numel
        attrs = {k: v for k, v in sorted(layer.attrs.items())}
        if attrs:
            desc += " attrs " + ",".join(f"{k}={v}" for k, v in attrs.items())
        lines.append(desc)
    lines.append(f"parameters {n_params}")
    diags = validate(g)
    for d in diags:
        lines.append(f"diagnostic {d}")
    lines.append("valid " + ("false" if diags else "true"))
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_VALIDATION if diags else EXIT_OK


def _add_quant_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bits", type=int, choices=(2, 4, 8), default=8,
                   help="integer bit-width (default 8)")
    p.add_argument("--qmin", type=int, default=None, help="explicit integer range minimum")
    p.add_argument("--qmax", type=int, default=None, help="explicit integer range maximum")
    p.add_argument("--symmetric", action=argparse.BooleanOptionalAction, default=False,
                   help="symmetric quantization (zero-point 0)")
    p.add_argument("--weights-only", action=argparse.BooleanOptionalAction, default=False,
                   help="quantize parameters only, leave activations FP32")
    p.add_argument("--calibration", choices=("minmax", "percentile"), default="minmax",
                   help="activation calibration method")
    p.add_argument("--percentile", type=float, default=99.0,
                   help="percentile for --calibration percentile")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trisect",
        description="Split model layers to sharpen low-bit quantization, "
                    "simulate the quantizer, and run A/B experiments.",
        epilog="exit codes: 0 ok, 2 argument, 3 I/O, 4 parse, 5 validation, "
               "6 numeric-degenerate",
    )
    parser.add_argument("--version", action="version", version=f"trisect {__version__}")
    parser.add_argument("--config", default=None,
                        help="config file of 'key value' lines providing option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="rewrite a model and write it back out")
    p.add_argument("model_in")
    p.add_argument("model_out")
    p.add_argument("--split-weights", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--split-activations", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--fold-batchnorm", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--weights-only", action="store_true",
                   help="weight-only mode: implies --no-split-activations")
    p.add_argument("--seed", type=int, default=0, help="clustering seed")
    p.add_argument("--report-out", default=None, help="also write the report to this path")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("quantize", help="fake-quantize a model and report output error")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--dataset", default=None, help="dataset manifest for inputs")
    src.add_argument("--gen-inputs", type=int, default=None,
                     help="generate N seeded standard-normal inputs")
    p.add_argument("--seed", type=int, default=0, help="seed for --gen-inputs")
    _add_quant_flags(p)
    p.add_argument("--out", default=None, help="also write the report to this path")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("eval", help="classification accuracy on a labeled dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--fp32", action="store_true", help="evaluate without quantization")
    _add_quant_flags(p)
    p.add_argument("--out", default=None, help="also write the report to this path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="seeded A/B table: baseline vs split rewrite")
    p.add_argument("--seeds", default="0:10", help="comma list and/or lo:hi ranges")
    p.add_argument("--bits", default="2,4,8", help="comma list of bit-widths")
    p.add_argument("--weights-only", action=argparse.BooleanOptionalAction, default=True,
                   help="weight-only mode for both arms (default)")
    p.add_argument("--outlier-fraction", type=float, default=0.01)
    p.add_argument("--outlier-scale", type=float, default=50.0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--classes", type=int, default=None,
                   help="class-logit count (default: same as --width)")
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--per-seed", action="store_true", help="also print per-seed rows")
    p.add_argument("--out", default=None, help="also write the table to this path")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("inspect", help="print a model summary and validation diagnostics")
    p.add_argument("model")
    p.set_defaults(func=cmd_inspect)
    # subcommands parse into a fresh namespace, so config-file defaults must
    # be pushed onto each subparser as well
    parser.subcommand_parsers = list(sub.choices.values())
    return parser


def _read_config(path: str) -> dict:
    values = {}
    for lineno, tokens in tokenize(Path(path).read_text(encoding="utf-8")):
        if len(tokens) != 2:
            raise ParseError(f"line {lineno}: config lines are 'key value'")
        key = tokens[0].replace("-", "_")
        if key in ("func", "command", "config"):
            raise ParseError(f"line {lineno}: '{tokens[0]}' cannot be set from a config file")
        raw = tokens[1]
        if raw in ("true", "false"):
            values[key] = raw == "true"
        else:
            values[key] = parse_value(raw)
    return values


def _config_path(argv: list[str]) -> str | None:
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if arg.startswith("--config="):
            return arg.split("=", 1)[1]
    return None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # apply config-file defaults before the real parse so flags still override
    cfg_path = _config_path(argv)
    if cfg_path is not None:
        try:
            defaults = _read_config(cfg_path)
        except OSError as exc:
            sys.stderr.write(f"trisect: cannot read config: {exc}\n")
            return EXIT_IO
        except ParseError as exc:
            sys.stderr.write(f"trisect: bad config: {exc}\n")
            return EXIT_PARSE
        parser.set_defaults(**defaults)
        for sub in parser.subcommand_parsers:
            sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        sys.stderr.write(f"trisect: I/O error: {exc}\n")
        return EXIT_IO
    except ParseError as exc:
        sys.stderr.write(f"trisect: parse error: {exc}\n")
        return EXIT_PARSE
    except ValidationError as exc:
        sys.stderr.write("trisect: validation failed\n")
        for d in exc.diagnostics:
            sys.stderr.write(f"  {d}\n")
        return EXIT_VALIDATION
    except CalibrationError as exc:
        sys.stderr.write(f"trisect: degenerate configuration: {exc}\n")
        return EXIT_DEGENERATE
    except DimensionError as exc:
        sys.stderr.write(f"trisect: shape error: {exc}\n")
        return EXIT_VALIDATION
    except (ArgumentError, KindError) as exc:
        sys.stderr.write(f"trisect: argument error: {exc}\n")
        return EXIT_ARGUMENT


if __name__ == "__main__":
    sys.exit(main())
