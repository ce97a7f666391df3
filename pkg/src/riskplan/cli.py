"""Command line: ``riskplan train|eval|bench``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from riskplan.experiment import (
    ConfigError,
    build_environment,
    dump_config,
    evaluate,
    load_config,
    train,
    write_outputs,
)
from riskplan.harness import write_metrics_csv
from riskplan.predictor import PredictorTable

log = logging.getLogger("riskplan")


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    if args.seed is not None:
        out["seed"] = args.seed
    if args.threads is not None:
        out["threads"] = args.threads
    return out


def _report_line(rep) -> str:
    extras = " ".join(f"{k}={v:.4g}" for k, v in rep.extras.items())
    return (f"payoff {rep.avg_payoff:.3f} (sd {rep.stdev_payoff:.3f})  risk {rep.risk:.4f}  "
            f"succ payoff {rep.succ_avg_payoff:.3f} (sd {rep.succ_stdev_payoff:.3f})  "
            f"train {rep.training_time:.1f}s  eval {rep.eval_ms_per_episode:.1f}ms/ep  "
            f"expansions {rep.expansions}  {extras}").rstrip()


def _progress(total):
    def report(done, batch):
        failed = sum(r.failed for r in batch)
        log.info("trained %d/%d episodes (batch failures %d/%d)", done, total, failed, len(batch))
    return report


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    env = build_environment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg, env, progress=_progress(cfg.train_episodes))
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "predictor.txt"
    result.table.save(ckpt)
    (out / "config.yaml").write_text(dump_config(cfg))
    write_metrics_csv(out / "train_metrics.csv", [result.report], ["train"])
    print(f"trained {cfg.train_episodes} episodes in {result.report.training_time:.1f}s; "
          f"checkpoint {ckpt}")
    return 0


def cmd_eval(args) -> int:
    if not args.checkpoint:
        raise ConfigError("eval needs --checkpoint")
    cfg = load_config(args.config, _overrides(args))
    env = build_environment(cfg)
    table = PredictorTable.load(args.checkpoint)
    if (table.n_states, table.n_actions) != (env.model.n_states, env.model.n_actions):
        raise ConfigError("checkpoint does not match the configured environment")
    result = evaluate(cfg, table, env)
    write_outputs(args.out, cfg, env, result, "eval")
    print(_report_line(result.report))
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    env = build_environment(cfg)
    trained = train(cfg, env, progress=_progress(cfg.train_episodes))
    result = evaluate(cfg, trained.table, env, trained)
    write_outputs(args.out, cfg, env, result, "bench")
    trained.table.save(Path(args.checkpoint) if args.checkpoint else Path(args.out) / "predictor.txt")
    print(_report_line(result.report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, help_text in (
        ("train", cmd_train, "train a table predictor by self-play"),
        ("eval", cmd_eval, "evaluate a trained predictor"),
        ("bench", cmd_bench, "train then evaluate, writing metrics"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, help="worker processes per batch")
        p.add_argument("--checkpoint", help="predictor checkpoint path")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a configuration entry")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"riskplan: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
