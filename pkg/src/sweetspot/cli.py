"""Command-line front end.

Exit codes: 0 success (verdicts are printed, not signalled), 1 bad flags,
2 unreadable input file, 3 malformed input file, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import (OrderingReport, binary_direction, binary_reward, continuous_reward,
                       default_task_pool, efficiency_sweep, gradient_variance, hacking_monitor,
                       ordering_check, reward_fn_for, rows_to_csv, snr_report, training_snapshot,
                       zone_ablation)
from .core import RewardMode, discretize, schema_for_k
from .envs import bfs_shortest_path, offset_stats_from_points
from .errors import DegenerateDirectionError, FormatError, InvalidInputError, NumericError
from .grid import arc_verify, grid_task_score, maze_verify, path_to_occupancy, sudoku_verify
from .grpo import GrpoConfig, default_reward_config, preset_config, train, write_metrics_csv
from .gui import BoundingBox, FieldParams, Point, field_value, grounding_verify, gui_zone_score
from .io import (parse_grid, parse_gui_records, parse_maze, parse_path, read_manifest, read_records,
                 read_text, records_to_clicks, records_to_samples, rollout_record, write_manifest,
                 write_records)

EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_NUMERIC = 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(Exception):
    """Flag values that parse but do not make sense together."""


def _num(v) -> str:
    return repr(float(v))


def _floats(text: str, n: int, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what} must be {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{what} must be {n} comma-separated numbers, got {text!r}")
    return vals


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def _seeds(text: str) -> list[int]:
    """``5`` means seeds 0..4; ``3,7,9`` lists them."""
    vals = _ints(text, "--seeds")
    if "," not in text:
        if vals[0] < 1:
            raise UsageError("--seeds count must be >= 1")
        return list(range(vals[0]))
    return vals


def _alpha(text: str) -> float:
    try:
        a = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not a > 0:
        raise argparse.ArgumentTypeError("alpha must be > 0")
    return a


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


# ---------------------------------------------------------------- score / verify

def cmd_score(args, out) -> list[str]:
    if args.kind == "gui":
        params = FieldParams(args.sigma)
        if args.records:
            pairs = parse_gui_records(read_text(args.records))
        else:
            if not (args.pred and args.bbox):
                raise UsageError("score gui needs --pred and --bbox, or --records")
            pairs = [(Point(*_floats(args.pred, 2, "--pred")), BoundingBox(*_floats(args.bbox, 4, "--bbox")))]
        for p, B in pairs:
            out.write(f"S_raw={_num(field_value(p, B, params))} tier={gui_zone_score(p, B, params):.2f} "
                      f"C={grounding_verify(p, B)}\n")
        return []
    if args.task == "maze":
        if not (args.maze and args.path):
            raise UsageError("score grid --task maze needs --maze and --path")
        maze = parse_maze(read_text(args.maze))
        path = parse_path(read_text(args.path))
        H, W = maze.shape
        pred = parse_grid(read_text(args.pred)) if args.pred else path_to_occupancy(path, H, W)
        ref = parse_grid(read_text(args.ref)) if args.ref else path_to_occupancy(bfs_shortest_path(maze), H, W)
        S, C = grid_task_score(pred, ref, "maze", path=path, maze=maze)
    else:
        if not (args.pred and args.ref):
            raise UsageError(f"score grid --task {args.task} needs --pred and --ref")
        S, C = grid_task_score(parse_grid(read_text(args.pred)), parse_grid(read_text(args.ref)), args.task)
    tier = S if args.zones is None else discretize(S, schema_for_k(args.zones))
    out.write(f"S_raw={_num(S)} tier={_num(tier)} C={C}\n")
    return []


def cmd_verify(args, out) -> list[str]:
    t = args.task
    if t == "maze":
        if not (args.maze and args.path):
            raise UsageError("verify --task maze needs --maze and --path")
        bit = maze_verify(parse_path(read_text(args.path)), parse_maze(read_text(args.maze)))
    elif t == "sudoku":
        if not args.grid:
            raise UsageError("verify --task sudoku needs --grid")
        bit = sudoku_verify(parse_grid(read_text(args.grid)))
    elif t == "arc":
        if not (args.pred and args.ref):
            raise UsageError("verify --task arc needs --pred and --ref")
        bit = arc_verify(parse_grid(read_text(args.pred)), parse_grid(read_text(args.ref)))
    else:
        if not (args.pred and args.bbox):
            raise UsageError("verify --task gui needs --pred and --bbox")
        bit = grounding_verify(Point(*_floats(args.pred, 2, "--pred")), BoundingBox(*_floats(args.bbox, 4, "--bbox")))
    out.write(f"{bit}\n")
    return []


# ---------------------------------------------------------------- train

def _grpo_config(args, iterations=None) -> GrpoConfig:
    over = {"seed": args.seed, "group_size": args.group, "clip_eps": args.clip}
    for key, val in (("learning_rate", args.lr), ("kl_coeff", args.kl), ("iterations", iterations)):
        if val is not None:
            over[key] = val
    if getattr(args, "max_steps", None) is not None:
        over["max_steps"] = args.max_steps
    cfg = preset_config(args.env, **over)
    args.resolved_grpo = dict(cfg.__dict__)
    return cfg


def cmd_train(args, out) -> list[str]:
    if args.env is None:
        raise UsageError("train needs --env maze|click")
    if args.zones is not None and args.reward != "ssl":
        raise UsageError("--zones only applies to --reward ssl")
    cfg = _grpo_config(args, args.iters)
    rc = default_reward_config(args.env, args.reward, args.alpha, args.zones)
    pool = default_task_pool(args.env, args.seed, args.size)
    met = train(args.env, rc, cfg, pool)
    final = f"final_success={_num(met.final_success)}\n"
    if not args.out:
        # metrics own stdout so it can be piped; the summary goes to stderr
        write_metrics_csv(met.rows, out)
        sys.stderr.write(final)
        return []
    outdir = Path(args.out)
    with open(outdir / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        write_metrics_csv(met.rows, fh)
    written = ["metrics.csv"]
    if args.dump_rollouts:
        with open(outdir / "rollouts.rec", "w", encoding="utf-8") as fh:
            write_records(_final_rollouts(args, met.policy, pool[0], cfg), fh)
        written.append("rollouts.rec")
    out.write(final)
    return written


def _final_rollouts(args, policy, task, cfg) -> list[dict]:
    from .analysis import SNAPSHOT_STREAM
    from .envs import rollout_rng
    from .grpo import make_env
    env = make_env(args.env, [task], cfg.max_steps)
    return [rollout_record(env.rollout(policy, task, rollout_rng(args.seed, SNAPSHOT_STREAM, j)))
            for j in range(args.dump_rollouts)]


# ---------------------------------------------------------------- analyze

def _samples(args):
    """Sample set from ``--samples`` or from a training snapshot of ``--env``."""
    if args.samples:
        return records_to_samples(read_records(read_text(args.samples)))
    if not args.env:
        raise UsageError("give --samples FILE or --env maze|click")
    samples, _, _ = training_snapshot(args.env, args.seed, args.snapshot_iters, args.n_samples,
                                      args.train_reward, args.alpha, _grpo_config(args), args.size)
    return samples


def _ssl_config(args):
    env = args.env or "click"
    return default_reward_config(env, "ssl", args.alpha, args.zones)


def _emit(args, out, name: str, text: str) -> list[str]:
    out.write(text)
    if args.out:
        (Path(args.out) / name).write_text(text, encoding="utf-8")
        return [name]
    return []


def _kv(rec: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in rec.items())


def cmd_analyze(args, out) -> list[str]:
    sub = args.sub
    if sub == "snr":
        rep = snr_report(_samples(args), _ssl_config(args), args.N, args.batches, args.seed)
        return _emit(args, out, "snr.txt", _kv(rep.to_record()))
    if sub == "variance":
        samples = _samples(args)
        u = binary_direction(samples)
        rows = []
        for mode in ("binary", "continuous", "ssl"):
            fn = {"binary": binary_reward, "continuous": continuous_reward,
                  "ssl": lambda: reward_fn_for(_ssl_config(args))}[mode]()
            est = gradient_variance(samples, fn, u, args.N, args.batches, rng=args.seed)
            rows.append({"reward": mode, "variance": est.value, "half_width": est.half_width})
        return _emit(args, out, "variance.csv", rows_to_csv(rows))
    if sub == "ordering":
        if not (args.a and args.b):
            raise UsageError("analyze ordering needs --a and --b")
        A = records_to_samples(read_records(read_text(args.a)))
        B = records_to_samples(read_records(read_text(args.b)))
        rep: OrderingReport = ordering_check(A, B, args.alpha)
        return _emit(args, out, "ordering.txt", _kv(rep.to_record()))
    if sub == "sweep":
        if not args.env:
            raise UsageError("analyze sweep needs --env")
        modes = [m.strip() for m in args.modes.split(",") if m.strip()]
        bad = [m for m in modes if m not in {r.value for r in RewardMode}]
        if bad or not modes:
            raise UsageError(f"unknown reward modes in --modes: {bad}")
        budgets = _ints(args.budgets, "--budgets")
        if not budgets or any(b < 0 for b in budgets):
            raise UsageError("--budgets must be non-negative integers")
        rows = efficiency_sweep(args.env, modes, budgets, _seeds(args.seeds), _grpo_config(args),
                                args.alpha, args.zones, args.size)
        return _emit(args, out, "sweep.csv", rows_to_csv(rows))
    if sub == "ablation":
        if not args.env:
            raise UsageError("analyze ablation needs --env")
        ks = _ints(args.k, "--k")
        rows = zone_ablation(args.env, ks, _seeds(args.seeds), _grpo_config(args, args.iters), args.alpha,
                             args.size)
        return _emit(args, out, "ablation.csv", rows_to_csv(rows))
    if sub == "offsets":
        if args.samples:
            pairs = records_to_clicks(read_records(read_text(args.samples)))
        else:
            if args.env not in (None, "click"):
                raise UsageError("analyze offsets works on the click env")
            args.env = "click"
            cfg = _grpo_config(args, args.snapshot_iters)
            pool = default_task_pool("click", args.seed)
            met = train("click", default_reward_config("click", args.train_reward, args.alpha, args.zones), cfg, pool)
            pairs = _click_pairs(met.policy, pool[0], args.n_samples, args.seed)
        summ = offset_stats_from_points(pairs, args.bins, args.extent)
        summary = {"n": str(len(pairs)), "mean_dx": _num(summ.mean_offset[0]), "mean_dy": _num(summ.mean_offset[1]),
                   "mean_norm": _num(summ.mean_norm), "cov_xx": _num(summ.covariance[0, 0]),
                   "cov_xy": _num(summ.covariance[0, 1]), "cov_yy": _num(summ.covariance[1, 1])}
        rows = []
        for i in range(len(summ.x_edges) - 1):
            for j in range(len(summ.y_edges) - 1):
                rows.append({"dx_lo": summ.x_edges[i], "dx_hi": summ.x_edges[i + 1],
                             "dy_lo": summ.y_edges[j], "dy_hi": summ.y_edges[j + 1],
                             "count": int(summ.hist[i, j])})
        written = _emit(args, out, "offsets.txt", _kv(summary))
        if args.out:
            (Path(args.out) / "offsets_hist.csv").write_text(rows_to_csv(rows), encoding="utf-8")
            written.append("offsets_hist.csv")
        return written
    if sub == "hacking":
        if not args.samples:
            raise UsageError("analyze hacking needs --samples")
        samples = records_to_samples(read_records(read_text(args.samples)))
        return _emit(args, out, "hacking.txt", f"ratio={_num(hacking_monitor(samples, args.threshold))}\n")
    raise UsageError(f"unknown analysis {sub!r}")


def _click_pairs(policy, task, n, seed):
    from .analysis import SNAPSHOT_STREAM
    from .envs import rollout_click, rollout_rng
    pairs = []
    for j in range(n):
        r = rollout_click(policy, task, rollout_rng(seed, SNAPSHOT_STREAM, j))
        pairs.append((r.payload.point, task))
    return pairs


# ---------------------------------------------------------------- rerun

def cmd_rerun(args, out) -> int:
    man = read_manifest(read_text(args.manifest))
    try:
        argv = json.loads(man["argv"])
    except (KeyError, json.JSONDecodeError):
        raise FormatError("manifest has no valid argv field") from None
    if args.out:
        argv = _replace_out(argv, args.out)
    return main(argv, out)


def _replace_out(argv: list[str], new: str) -> list[str]:
    argv = list(argv)
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            argv[i + 1] = new
            return argv
        if a.startswith("--out="):
            argv[i] = f"--out={new}"
            return argv
    return argv + ["--out", new]


# ---------------------------------------------------------------- parser

def _add_train_flags(p):
    p.add_argument("--env", choices=["maze", "click"])
    p.add_argument("--alpha", type=_alpha, default=0.2, help="sweet-spot bonus weight (> 0)")
    p.add_argument("--zones", type=int, default=None, metavar="K", help="use the uniform K-zone preset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--group", type=_positive_int, default=8, metavar="N", help="rollouts per group")
    p.add_argument("--lr", type=float, default=None, help="step size (default: per-env preset)")
    p.add_argument("--kl", type=float, default=None, help="KL weight (default: per-env preset)")
    p.add_argument("--clip", type=float, default=0.2)
    p.add_argument("--max-steps", type=_positive_int, default=None)
    p.add_argument("--size", type=int, default=9, help="maze side length (odd)")
    p.add_argument("--iters", type=_nonneg_int, default=None, help="GRPO iterations (default: per-env preset)")
    p.add_argument("--out", default=None, metavar="DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sweetspot", description="Tiered proximity rewards: scoring, training and analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="score predictions")
    ssub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    g = ssub.add_parser("gui")
    g.add_argument("--pred", metavar="X,Y")
    g.add_argument("--bbox", metavar="X1,Y1,X2,Y2")
    g.add_argument("--records", metavar="FILE", help="lines of 'x y | x1 y1 x2 y2'")
    g.add_argument("--sigma", type=float, default=1 / 3)
    g = ssub.add_parser("grid")
    g.add_argument("--task", choices=["maze", "sudoku", "arc"], required=True)
    g.add_argument("--pred", metavar="FILE")
    g.add_argument("--ref", metavar="FILE")
    g.add_argument("--maze", metavar="FILE")
    g.add_argument("--path", metavar="FILE")
    g.add_argument("--zones", type=int, default=None, metavar="K")

    p = sub.add_parser("verify", help="print the verifier bit")
    p.add_argument("--task", choices=["maze", "sudoku", "arc", "gui"], required=True)
    for flag in ("--path", "--maze", "--grid", "--pred", "--ref", "--bbox"):
        p.add_argument(flag)

    p = sub.add_parser("train", help="GRPO training run")
    _add_train_flags(p)
    p.add_argument("--reward", choices=[m.value for m in RewardMode], default="ssl")
    p.add_argument("--dump-rollouts", type=_nonneg_int, default=0, metavar="N",
                   help="write N rollouts of the final policy to rollouts.rec")

    p = sub.add_parser("analyze", help="statistical analyses")
    _add_train_flags(p)
    p.add_argument("sub", choices=["snr", "variance", "ordering", "sweep", "ablation", "offsets", "hacking"])
    p.add_argument("--samples", metavar="FILE", help="sample dump (.rec)")
    p.add_argument("--a", metavar="FILE")
    p.add_argument("--b", metavar="FILE")
    p.add_argument("--N", type=_positive_int, default=64)
    p.add_argument("--batches", type=_positive_int, default=1000)
    p.add_argument("--snapshot-iters", type=_nonneg_int, default=40)
    p.add_argument("--n-samples", type=_positive_int, default=4000)
    p.add_argument("--train-reward", choices=[m.value for m in RewardMode], default="binary")
    p.add_argument("--modes", default="binary,ssl")
    p.add_argument("--budgets", default="0,1600,4000")
    p.add_argument("--seeds", default="10")
    p.add_argument("--k", default="2,4,8")
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--bins", type=_positive_int, default=21)
    p.add_argument("--extent", type=float, default=None)

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, metavar="DIR", help="write to DIR instead")
    return parser


COMMANDS = {"score": cmd_score, "verify": cmd_verify, "train": cmd_train, "analyze": cmd_analyze}


def _config_record(args) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "out"}
    return json.dumps(cfg, sort_keys=True, default=str)


def main(argv=None, out=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "rerun":
        return _guard(lambda: cmd_rerun(args, out), parser)

    outdir = getattr(args, "out", None)
    if outdir:
        try:
            Path(outdir).mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"sweetspot: cannot create {outdir}: {exc}", file=sys.stderr)
            return EXIT_IO
    started = time.time()
    written: list[str] = []
    error = ""

    def run():
        written.extend(COMMANDS[args.command](args, out) or [])
        return 0

    errors: list[str] = []
    code = _guard(run, parser, errors)
    if errors:
        error = errors[0]
    if outdir:
        write_manifest(Path(outdir) / "manifest.txt", {
            "command": args.command if args.command != "analyze" else f"analyze {args.sub}",
            "argv": json.dumps(argv),
            "config": _config_record(args),
            "seed": getattr(args, "seed", ""),
            "version": __version__,
            "outputs": json.dumps(written),
            "started": f"{started:.3f}",
            "finished": f"{time.time():.3f}",
            "status": "ok" if code == 0 else "error",
            "exit_code": code,
            "error": error.replace("\n", " "),
        })
    return code


def _guard(fn, parser, errors=None) -> int:
    """Run ``fn`` and map failures onto exit codes."""
    def fail(code, msg):
        if errors is not None:
            errors.append(msg)
        print(f"sweetspot: {msg}", file=sys.stderr)
        return code

    try:
        return fn()
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return fail(EXIT_USAGE, str(exc))
    except FormatError as exc:
        return fail(EXIT_FORMAT, str(exc))
    except OSError as exc:
        return fail(EXIT_IO, f"{exc.strerror or exc}: {exc.filename}" if exc.filename else str(exc))
    except (NumericError, DegenerateDirectionError, FloatingPointError) as exc:
        return fail(EXIT_NUMERIC, str(exc))
    except InvalidInputError as exc:
        return fail(EXIT_USAGE, str(exc))


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
