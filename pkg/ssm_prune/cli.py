"""
Command-line entry point.

    python -m ssm_prune verify [--threads T]
    python -m ssm_prune flops --config PATH [--exact] [--calibrate PERCENT] [--gap-strategy S] [--weights DIR]
    python -m ssm_prune bench --config PATH --mode MODE --repeats R [--warmup W] [--csv PATH] [--threads T]
                              [--gap-strategy S] [--weights DIR]
    python -m ssm_prune prune-sim --config PATH [--dump DIR] [--weights DIR]

JSON goes to stdout, logs to stderr and the log file. Exit codes: 0 success,
1 verification failure, 2 configuration error.
"""
import argparse
import json
import logging
import os
import sys

from colorama import Fore

from ssm_prune.aligned_scan import GAP_STRATEGIES
from ssm_prune.bench import MIN_REPEATS, MIN_WARMUP, MODES, run_benchmark, write_csv
from ssm_prune.checks.run_checks import get_numbered_checks, run_checks
from ssm_prune.errors import ConfigError, DomainError, StructuralError
from ssm_prune.flops import calibrate_keep_rate, count_flops
from ssm_prune.log_setup import setup_logging
from ssm_prune.model_config import load_config
from ssm_prune.settings import get_threads
from ssm_prune.tensor_io import load_weights, save_tensor, save_weights
from ssm_prune.vim_model import init_weights, make_inputs, model_forward

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG_ERROR = 2


def build_parser():
    parser = argparse.ArgumentParser(prog="ssm_prune", description="Position-aligned token pruning for SSM scans")
    sub = parser.add_subparsers(dest="command", required=True)

    verify = sub.add_parser("verify", help="run the oracle-equivalence and divergence suites")
    verify.add_argument("--threads", type=int, default=None)
    verify.add_argument("--seed", type=int, default=0)

    flops = sub.add_parser("flops", help="emit the FLOPs report as JSON")
    flops.add_argument("--config", required=True)
    flops.add_argument("--exact", action="store_true",
                       help="run the model once and count decay multiplies from the realised maps")
    flops.add_argument("--calibrate", type=float, default=None, metavar="PERCENT",
                       help="find the keep rate reaching this FLOPs reduction and report for it")
    flops.add_argument("--gap-strategy", choices=GAP_STRATEGIES, default="power")
    flops.add_argument("--weights", default=None, metavar="DIR", help="weights saved by save_weights")

    bench = sub.add_parser("bench", help="time model_forward and emit the BenchResult as JSON")
    bench.add_argument("--config", required=True)
    bench.add_argument("--mode", choices=MODES, default="aligned")
    bench.add_argument("--repeats", type=int, default=MIN_REPEATS)
    bench.add_argument("--warmup", type=int, default=MIN_WARMUP)
    bench.add_argument("--csv", default=None)
    bench.add_argument("--threads", type=int, default=None)
    bench.add_argument("--gap-strategy", choices=GAP_STRATEGIES, default="power")
    bench.add_argument("--weights", default=None, metavar="DIR", help="weights saved by save_weights")

    sim = sub.add_parser("prune-sim", help="run model_forward and emit per-stage maps and scores as JSON")
    sim.add_argument("--config", required=True)
    sim.add_argument("--dump", default=None, metavar="DIR",
                     help="also save the final features and the weights as raw tensors")
    sim.add_argument("--weights", default=None, metavar="DIR", help="weights saved by save_weights")
    return parser


def _threads(value):
    threads = get_threads() if value is None else value
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    return threads


def _weights(directory, cfg):
    if directory is None:
        return init_weights(cfg)
    try:
        return load_weights(directory, cfg)
    except (OSError, StructuralError) as e:
        raise ConfigError(f"cannot load weights from {directory}: {e}") from None


def _emit(payload):
    print(json.dumps(payload, indent=2))


def cmd_verify(args):
    threads = _threads(args.threads)
    checks = get_numbered_checks()
    print(f"Found {len(checks)} numbered checks: {checks}")
    results = run_checks(checks, threads=threads, seed=args.seed)

    failed = [r for r in results if not r.passed]
    print("\n" + "=" * 50)
    if failed:
        print(Fore.RED + f"❌ {len(failed)} of {len(results)} suites failed (threads={threads})")
        return EXIT_VERIFY_FAILED
    print(Fore.GREEN + f"✅ All {len(results)} suites passed (threads={threads})")
    return EXIT_OK


def cmd_flops(args):
    cfg = load_config(args.config)
    payload = {}
    if args.calibrate is not None:
        rate = calibrate_keep_rate(cfg, args.calibrate)
        cfg = cfg.with_keep_rate(rate)
        payload["calibrated_keep_rate"] = rate
    stage_maps = None
    if args.exact:
        out = model_forward(make_inputs(cfg), cfg, _weights(args.weights, cfg), gap_strategy=args.gap_strategy)
        stage_maps = out.stage_maps
    report = count_flops(cfg, stage_maps=stage_maps, gap_strategy=args.gap_strategy)
    _emit({**report.to_dict(), **payload})
    print(Fore.CYAN + f"FLOPs reduction {report.reduction_percent:.2f}%", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args):
    cfg = load_config(args.config)
    weights = _weights(args.weights, cfg)
    try:
        result = run_benchmark(cfg, args.mode, repeats=args.repeats, warmup=args.warmup,
                               threads=_threads(args.threads), gap_strategy=args.gap_strategy,
                               weights=weights)
    except DomainError as e:
        raise ConfigError(str(e)) from None
    if args.csv:
        write_csv([result], args.csv)
    _emit(result.to_dict())
    colour = Fore.GREEN if result.timer_resolution_ok else Fore.YELLOW
    print(colour + f"{args.mode}: median {result.median_ms:.2f} ms, speedup {result.speedup:.3f}x", file=sys.stderr)
    return EXIT_OK


def cmd_prune_sim(args):
    cfg = load_config(args.config)
    weights = _weights(args.weights, cfg)
    out = model_forward(make_inputs(cfg), cfg, weights)
    stages = [
        {
            "layer": layer,
            "kept_count": pmap.kept_count,
            "remaining_indices": pmap.to_json(),
            "scores": scores.to_json(),
        }
        for layer, pmap, scores in zip(cfg.prune.prune_after_layers, out.stage_maps, out.stage_scores)
    ]
    if args.dump:
        os.makedirs(args.dump, exist_ok=True)
        save_tensor(os.path.join(args.dump, "features.bin"), out.features, "features")
        save_weights(os.path.join(args.dump, "weights"), weights)
    _emit({
        "config_digest": cfg.digest(),
        "grid": {"height": cfg.grid.height, "width": cfg.grid.width},
        "token_counts": out.token_counts,
        "stages": stages,
    })
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "flops": cmd_flops,
    "bench": cmd_bench,
    "prune-sim": cmd_prune_sim,
}


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        setup_logging(f"ssm_prune_{args.command.replace('-', '_')}")
        return COMMANDS[args.command](args)
    except ConfigError as e:
        logger.error(f"❌ Configuration error: {e}")
        print(Fore.RED + f"❌ {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as e:
        logger.error(f"❌ {args.command} failed: {e}")
        raise
