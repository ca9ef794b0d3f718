"""Command line front end: train, eval, ablate, teachers, gen-flows.

Exit codes: 0 success, 2 configuration or usage problems, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import pathlib
import sys

import numpy as np

from . import __version__
from .config import (
    RunManifest,
    ScenarioConfig,
    apply_overrides,
    load_config,
    save_config,
)
from .errors import ConfigError, CyclicSignalError
from .evaluate import (
    PolicyController,
    ablation_suite,
    evaluate_controller,
    teacher_baseline_report,
    write_pairs_csv,
    write_report_csv,
    write_summary_json,
)
from .flows import constant_profile, three_stage_profile
from .policy import PolicyNet
from .teachers import TeacherKind
from .trainer import ablation_variants, make_teacher, train, write_history

USAGE_ERROR = 2
RUNTIME_ERROR = 3


def _load_scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, [f"train.seed={args.seed}"])
    return cfg


def _out_dir(args, default_name: str) -> pathlib.Path:
    out = pathlib.Path(args.out_dir or default_name)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    cfg = _load_scenario(args)
    out = _out_dir(args, "run_train")
    manifest = RunManifest.begin("train", cfg, cfg.train.seed, args.override)
    save_config(out / "config.yaml", cfg)
    patterns = cfg.build_patterns()

    def progress(row):
        if args.quiet:
            return
        if row.episode % 10 == 0 or row.episode == cfg.train.episodes - 1:
            print(
                f"episode {row.episode:4d} [{row.teacher:10s}] "
                f"reward {row.mean_reward:8.3f} actor {row.actor_loss:8.4f} "
                f"critic {row.critic_loss:8.4f} bc {row.bc_loss:8.4f}"
            )

    result = train(
        cfg.train,
        patterns,
        capacity_vph=cfg.capacity_vph,
        bounds=cfg.bounds(),
        lost_time=cfg.lost_time_s,
        window_s=cfg.observation_window_s,
        initial_durations=cfg.initial_durations,
        weights=cfg.weights(),
        present=cfg.present_array(),
        dims=cfg.model,
        out_dir=str(out),
        checkpoint_every=args.checkpoint_every,
        progress=progress,
    )
    for name in ("policy_final.npz", "history.csv", "config.yaml"):
        manifest.add_artifact(out / name)
    manifest.finish()
    manifest.write(out / "manifest.json")
    print(f"trained {cfg.train.episodes} episodes -> {out / 'policy_final.npz'}")
    print(f"final mean reward {result.history[-1].mean_reward:.3f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_scenario(args)
    out = _out_dir(args, "run_eval")
    manifest = RunManifest.begin("eval", cfg, cfg.train.seed, args.override)
    profile = cfg.eval_profile()
    reports = []

    if args.checkpoint:
        policy = PolicyNet.load(args.checkpoint)
        controller = PolicyController(policy, name=args.name)
        reports.append(
            evaluate_controller(
                controller, profile, cfg.eval.seeds,
                bounds=cfg.bounds(), bins=cfg.eval.bins, **cfg.env_kwargs(),
            )
        )
    for baseline in args.baseline or []:
        try:
            kind = TeacherKind[baseline.upper()]
        except KeyError:
            raise ConfigError(f"unknown controller {baseline!r}")
        reports.append(
            teacher_baseline_report(
                kind, profile, cfg.eval.seeds, cfg.total_capacity_vph(),
                bounds=cfg.bounds(), lost_time=cfg.lost_time_s,
                window_s=cfg.observation_window_s, bins=cfg.eval.bins,
                initial_durations=cfg.initial_durations,
                capacity_vph=cfg.capacity_vph, present=cfg.present_array(),
                weights=cfg.weights(),
            )
        )
    if not reports:
        raise ConfigError("nothing to evaluate: pass --checkpoint and/or --baseline")

    write_report_csv(out / "report.csv", reports)
    write_summary_json(out / "summary.json", reports, cfg.weights())
    write_pairs_csv(out / "pairs.csv", reports)
    for name in ("report.csv", "summary.json", "pairs.csv"):
        manifest.add_artifact(out / name)
    manifest.finish()
    manifest.write(out / "manifest.json")
    for report in reports:
        rho = "n/a" if report.monotonicity is None else f"{report.monotonicity:.3f}"
        print(
            f"{report.name:16s} reward {report.mean_reward:8.3f} "
            f"queue {report.mean_queue:8.1f} tracking {rho}"
        )
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_scenario(args)
    out = _out_dir(args, "run_ablate")
    manifest = RunManifest.begin("ablate", cfg, cfg.train.seed, args.override)
    patterns = cfg.build_patterns()
    profile = cfg.eval_profile()
    names = args.configs.split(",") if args.configs else None
    if names:
        unknown = set(names) - set(ablation_variants(cfg.train))
        if unknown:
            raise ConfigError(f"unknown ablation variants: {sorted(unknown)}")
    results = ablation_suite(
        cfg.train,
        patterns,
        profile,
        cfg.eval.seeds,
        capacity_vph=cfg.capacity_vph,
        bounds=cfg.bounds(),
        bins=cfg.eval.bins,
        variant_names=names,
        progress=None if args.quiet else print,
        out_dir=str(out),
        lost_time=cfg.lost_time_s,
        window_s=cfg.observation_window_s,
        initial_durations=cfg.initial_durations,
        weights=cfg.weights(),
        present=cfg.present_array(),
        dims=cfg.model,
    )
    reports = [r.report for r in results.values()]
    write_report_csv(out / "report.csv", reports)
    write_summary_json(out / "summary.json", reports, cfg.weights())
    write_pairs_csv(out / "pairs.csv", reports)
    for name, res in results.items():
        write_history(out / f"history_{name}.csv", res.train_result.history)
        manifest.add_artifact(out / f"policy_{name}.npz")
    manifest.add_artifact(out / "summary.json")
    manifest.finish()
    manifest.write(out / "manifest.json")
    for name, res in results.items():
        rho = res.report.monotonicity
        rho_txt = "n/a" if rho is None else f"{rho:.3f}"
        print(f"{name:12s} reward {res.report.mean_reward:8.3f} tracking {rho_txt}")
    return 0


def cmd_teachers(args) -> int:
    cfg = _load_scenario(args)
    try:
        kind = TeacherKind[args.kind.upper()]
    except KeyError:
        raise ConfigError(f"unknown controller {args.kind!r}")
    teacher = make_teacher(
        kind, cfg.bounds(), cfg.lost_time_s, cfg.total_capacity_vph(),
        cfg.observation_window_s,
    )
    present = cfg.present_array()
    mix = np.asarray(cfg.mix) * present
    share = mix / mix.sum()
    print("total_flow_vph,cycle_s,greens")
    for total in np.arange(args.lo, args.hi + 1e-9, args.step):
        plan = teacher.target_plan(total * share)
        greens = "/".join(str(d) for d in plan.durations)
        print(f"{total:g},{plan.cycle_time},{greens}")
    return 0


def cmd_gen_flows(args) -> int:
    cfg = _load_scenario(args)
    total = args.total if args.total is not None else cfg.total_capacity_vph() * 0.5
    mix = cfg.mix
    present = cfg.present_array()
    if args.shape == "constant":
        profile = constant_profile(total, cfg.episode_s, cfg.bin_s, mix, present)
    elif args.shape == "three_stage":
        profile = three_stage_profile(
            cfg.total_capacity_vph(), cfg.stage_fractions, cfg.stage_s,
            cfg.bin_s, mix, present,
        )
    elif args.shape == "staircase":
        profile = cfg.eval_profile()
    else:
        raise ConfigError(f"unknown shape {args.shape!r}")
    profile.save(args.out)
    print(f"wrote {profile.n_bins} bins x 8 movements -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyclicsignal",
        description="Cyclic intersection control: simulate, train, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default=True):
        p.add_argument("--config", help="scenario YAML; defaults apply if omitted")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted config override, repeatable")
        p.add_argument("--seed", type=int, help="shortcut for train.seed")
        if out_default:
            p.add_argument("--out-dir", help="artifact directory")

    p = sub.add_parser("train", help="train a policy with the configured curriculum")
    common(p)
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="N",
                   help="also save every N episodes")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint and/or rule-based baselines")
    common(p)
    p.add_argument("--checkpoint", help="policy .npz to evaluate")
    p.add_argument("--name", default="policy", help="label for the checkpoint rows")
    p.add_argument("--baseline", action="append", metavar="KIND",
                   help="controller kind to score as a baseline, repeatable")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score the standard config variants")
    common(p)
    p.add_argument("--configs", help="comma-separated subset of variants")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("teachers", help="print a controller's flow-to-plan table")
    common(p, out_default=False)
    p.add_argument("--kind", default="scats_like")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=3600.0)
    p.add_argument("--step", type=float, default=100.0)
    p.set_defaults(func=cmd_teachers)

    p = sub.add_parser("gen-flows", help="write a demand profile CSV")
    common(p, out_default=False)
    p.add_argument("--shape", default="three_stage",
                   choices=("constant", "three_stage", "staircase"))
    p.add_argument("--total", type=float, help="total veh/h for constant shape")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_gen_flows)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 on --help/--version
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except CyclicSignalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


def entry() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    entry()
