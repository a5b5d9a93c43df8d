"""Command-line entry point.

Subcommands cover the whole pipeline: ingest -> preprocess -> label ->
synth/curate/train -> simulate/predict -> evaluate/stats.  All runs are
deterministic for a fixed --seed; exit codes are 0 (ok), 1 (usage),
2 (data error).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Optional, Sequence

from robosfm.behavior import BehaviorLabel, classify_trajectory
from robosfm.config import build_run_config, config_help_text, parse_config_file
from robosfm.curation import curate, synthesize_with_scenes
from robosfm.geometry import Trajectory, TrajectoryFrame, Vec2
from robosfm.metrics import (
    ade,
    fde,
    mann_whitney_u,
    speed_histogram,
    instantaneous_speeds,
)
from robosfm.neural import (
    NetId,
    TrainingSample,
    input_dim,
    load_weights,
    save_weights,
    train,
)
from robosfm.preprocess import run_pipeline
from robosfm.records import (
    DatasetRecord,
    SceneFrame,
    assemble,
    parse_records,
    write_records,
)
from robosfm.scenarios import load_scenario
from robosfm.simulate import (
    PROVIDER_TAGS,
    RolloutConfig,
    best_of_k,
    make_provider,
    scene_track,
)


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1 (argparse default is 2, reserved for data errors)
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(sub: argparse.ArgumentParser):
    sub.add_argument("--config", help="flat key = value configuration file")
    sub.add_argument("--seed", type=int, default=None, help="root RNG seed (default 42)")


def _run_config(args, **extra_overrides):
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    for key, value in extra_overrides.items():
        if value is not None:
            overrides[key] = value
    return build_run_config(file_values, overrides)


def _read_records(path: str):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_records(fh)


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _robot_track_for(traj: Trajectory, scenes: Sequence[SceneFrame]):
    by_time = {scene.timestamp: scene for scene in scenes}
    track = []
    for frame in traj.frames:
        scene = by_time.get(frame.timestamp)
        robot = scene.robot if scene is not None else None
        track.append(robot.position if robot is not None else None)
    return track


def _trajectory_labels(trajs, scenes, classifier):
    return {
        traj.pedestrian_id: classify_trajectory(
            traj, _robot_track_for(traj, scenes), classifier
        )
        for traj in trajs
    }


def _records_from_scenes(
    scenes: Sequence[SceneFrame],
    labels: dict[int, BehaviorLabel],
) -> list[DatasetRecord]:
    prev_pos: dict[int, Vec2] = {}
    records = []
    for t, scene in enumerate(scenes):
        for ped_id, pos, _vel in sorted(scene.pedestrians, key=lambda p: p[0]):
            dinc = (pos - prev_pos[ped_id]).norm() if ped_id in prev_pos else 0.0
            prev_pos[ped_id] = pos
            robot = scene.robot
            records.append(
                DatasetRecord(
                    frame_index=t,
                    timestamp=scene.timestamp,
                    pedestrian_id=ped_id,
                    position=pos,
                    distance_increment=dinc,
                    robot_present=robot is not None,
                    robot_type=robot.robot_type if robot else None,
                    robot_influence=(
                        labels.get(ped_id, BehaviorLabel.NEUTRAL) if robot else None
                    ),
                    robot_position=robot.position if robot else None,
                )
            )
    return records


def _load_nets(weights_dir: str):
    nets = {}
    for net_id in NetId:
        path = Path(weights_dir) / f"{net_id.value}.nfw"
        if not path.exists():
            raise ValueError(f"missing weight file {path}")
        nets[net_id] = load_weights(path)
    return nets


def _make_provider_from_args(args, cfg, noise_std=None):
    nets = None
    if args.provider.startswith("neurosfm"):
        if not getattr(args, "weights", None):
            raise ValueError(f"provider {args.provider!r} requires --weights")
        nets = _load_nets(args.weights)
    return make_provider(args.provider, cfg.sfm, nets=nets, noise_std=noise_std)


# ---------------------------------------------------------------------------
# subcommands

def cmd_ingest(args) -> int:
    records = _read_records(args.infile)
    trajs, scenes, labels = assemble(records)
    if args.out:
        _write_text(args.out, write_records(records))
    print(f"records = {len(records)}")
    print(f"pedestrians = {len(trajs)}")
    print(f"scenes = {len(scenes)}")
    for label in BehaviorLabel:
        n = sum(1 for v in labels.values() if v is label)
        print(f"labels_{label.value} = {n}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _run_config(args)
    records = _read_records(args.infile)
    trajs, _scenes, _labels = assemble(records)
    kept, report = run_pipeline(trajs, cfg.filters)

    original = {(r.pedestrian_id, r.frame_index): r for r in records}
    out_records = []
    for traj in kept:
        prev_pos = None
        last_original = None
        for frame in traj.frames:
            key = (traj.pedestrian_id, frame.frame_index)
            base = original.get(key)
            if base is not None:
                last_original = base
            src = base if base is not None else last_original
            dinc = (frame.position - prev_pos).norm() if prev_pos is not None else 0.0
            prev_pos = frame.position
            out_records.append(
                DatasetRecord(
                    frame_index=frame.frame_index,
                    timestamp=frame.timestamp,
                    pedestrian_id=traj.pedestrian_id,
                    position=frame.position,
                    distance_increment=dinc,
                    robot_present=src.robot_present if src else False,
                    robot_type=src.robot_type if src else None,
                    robot_influence=src.robot_influence if src else None,
                    robot_position=src.robot_position if src else None,
                )
            )
    out_records.sort(key=lambda r: (r.frame_index, r.pedestrian_id))
    _write_text(args.out, write_records(out_records))
    report_text = report.as_text()
    if args.report:
        _write_text(args.report, report_text)
    else:
        print(report_text, end="")
    return 0


def cmd_label(args) -> int:
    cfg = _run_config(args)
    records = _read_records(args.infile)
    trajs, scenes, _ = assemble(records)
    labels = _trajectory_labels(trajs, scenes, cfg.classifier)
    out = args.out or str(Path(args.infile).with_suffix("")) + "_labels.csv"
    lines = ["ped_id,label"]
    lines += [f"{pid},{labels[pid].value}" for pid in sorted(labels)]
    _write_text(out, "\n".join(lines) + "\n")
    print(f"labeled = {len(labels)}")
    return 0


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    scenario = load_scenario(args.scenario)
    seed = cfg.rollout.rng_seed
    trajs, scenes = synthesize_with_scenes(
        cfg.sfm, scenario, rng_seed=seed, classifier=cfg.classifier
    )
    labels = _trajectory_labels(trajs, scenes, cfg.classifier)
    _write_text(args.out, write_records(_records_from_scenes(scenes, labels)))
    print(f"trajectories = {len(trajs)}")
    print(f"frames = {len(scenes)}")
    return 0


def cmd_curate(args) -> int:
    cfg = _run_config(args)
    records = _read_records(args.infile)
    trajs, scenes, record_labels = assemble(records)
    if args.labels:
        labels = {}
        with open(args.labels, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "ped_id,label":
                raise ValueError(f"{args.labels}: expected header `ped_id,label`")
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                pid, _, value = line.partition(",")
                labels[int(pid)] = BehaviorLabel(value)
    elif record_labels:
        labels = record_labels
    else:
        labels = _trajectory_labels(trajs, scenes, cfg.classifier)
    samples = curate(
        trajs, labels, scenes, cfg.sfm, classifier=cfg.classifier,
        require_all=not args.allow_empty,
    )
    lines = []
    for s in samples:
        fields = [s.network_id.value]
        fields += [f"{v:.9f}" for v in s.input]
        fields += [f"{s.target_force.x:.9f}", f"{s.target_force.y:.9f}"]
        lines.append(",".join(fields))
    _write_text(args.out, "\n".join(lines) + "\n")
    for net_id in NetId:
        n = sum(1 for s in samples if s.network_id is net_id)
        print(f"samples_{net_id.value} = {n}")
    return 0


def _read_samples(path: str) -> list[TrainingSample]:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                net_id = NetId(parts[0])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unknown net id {parts[0]!r}")
            want = input_dim(net_id) + 3
            if len(parts) != want:
                raise ValueError(
                    f"{path}:{lineno}: expected {want} fields for "
                    f"{net_id.value}, got {len(parts)}"
                )
            values = [float(v) for v in parts[1:]]
            samples.append(
                TrainingSample(
                    net_id, tuple(values[:-2]), Vec2(values[-2], values[-1])
                )
            )
    return samples


def cmd_train(args) -> int:
    cfg = _run_config(
        args,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
    )
    samples = _read_samples(args.infile)
    targets = list(NetId) if args.net == "all" else [NetId(args.net)]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for net_id in targets:
        subset = [s for s in samples if s.network_id is net_id]
        if not subset:
            raise ValueError(f"no training samples for network(s): {net_id.value}")
        net, history = train(net_id, subset, cfg.training)
        save_weights(net, out_dir / f"{net_id.value}.nfw")
        print(
            f"{net_id.value}: samples = {len(subset)}  "
            f"loss {history[0]:.6f} -> {history[-1]:.6f}"
        )
    return 0


def cmd_simulate(args) -> int:
    cfg = _run_config(args, horizon=args.horizon)
    scenario = load_scenario(args.scenario)
    if args.horizon is not None:
        scenario = dataclasses.replace(scenario, horizon=cfg.rollout.horizon)
    provider = _make_provider_from_args(args, cfg)
    roll_cfg = RolloutConfig(
        dt=scenario.dt, horizon=scenario.horizon,
        speed_cap=cfg.rollout.speed_cap, rng_seed=cfg.rollout.rng_seed,
    )
    scenes = scene_track(
        scenario.initial_state(), provider, roll_cfg,
        robot_track=scenario.robot_track(), classifier=cfg.classifier,
    )
    rows: dict[int, list] = {}
    for t, scene in enumerate(scenes):
        for ped_id, pos, _vel in scene.pedestrians:
            rows.setdefault(ped_id, []).append(TrajectoryFrame(t, scene.timestamp, pos))
    trajs = [
        Trajectory(pid, tuple(frames)) for pid, frames in sorted(rows.items())
    ]
    labels = _trajectory_labels(trajs, scenes, cfg.classifier)
    _write_text(args.out, write_records(_records_from_scenes(scenes, labels)))
    print(f"trajectories = {len(trajs)}")
    print(f"frames = {len(scenes)}")
    return 0


def cmd_predict(args) -> int:
    cfg = _run_config(args, horizon=args.horizon, samples_k=args.k)
    records = _read_records(args.infile)
    trajs, scenes, _ = assemble(records)
    by_time = {scene.timestamp: scene for scene in scenes}
    obs = args.obs
    horizon = cfg.rollout.horizon
    k = cfg.rollout.samples_k
    noise = cfg.sfm.noise_std if k > 1 else 0.0
    provider = _make_provider_from_args(args, cfg, noise_std=noise)

    out_records = []
    evaluated = 0
    for traj in trajs:
        if len(traj) < obs + horizon:
            continue
        evaluated += 1
        prefix = Trajectory(traj.pedestrian_id, traj.frames[:obs])
        gt = Trajectory(traj.pedestrian_id, traj.frames[obs : obs + horizon])
        context = [by_time.get(f.timestamp) for f in traj.frames[obs - 1 : obs - 1 + horizon]]
        roll_cfg = RolloutConfig(
            dt=cfg.rollout.dt, horizon=horizon,
            speed_cap=cfg.rollout.speed_cap, samples_k=k,
            rng_seed=cfg.rollout.rng_seed,
        )
        best, _err = best_of_k(prefix, gt, provider, roll_cfg, scene_context=context)
        prev_pos = prefix.frames[-1].position
        for pred_frame, gt_frame in zip(best.frames, gt.frames):
            out_records.append(
                DatasetRecord(
                    frame_index=gt_frame.frame_index,
                    timestamp=gt_frame.timestamp,
                    pedestrian_id=traj.pedestrian_id,
                    position=pred_frame.position,
                    distance_increment=(pred_frame.position - prev_pos).norm(),
                    robot_present=False,
                )
            )
            prev_pos = pred_frame.position
    out_records.sort(key=lambda r: (r.frame_index, r.pedestrian_id))
    _write_text(args.out, write_records(out_records))
    print(f"predicted = {evaluated}")
    return 0


def _paired_trajectories(pred_trajs, gt_trajs):
    gt_by_id = {t.pedestrian_id: t for t in gt_trajs}
    pairs = []
    for pred in pred_trajs:
        gt = gt_by_id.get(pred.pedestrian_id)
        if gt is None:
            continue
        gt_frames = {f.frame_index: f for f in gt.frames}
        common = [f.frame_index for f in pred.frames if f.frame_index in gt_frames]
        if not common:
            continue
        p = Trajectory(
            pred.pedestrian_id,
            tuple(f for f in pred.frames if f.frame_index in gt_frames),
        )
        g = Trajectory(pred.pedestrian_id, tuple(gt_frames[i] for i in common))
        pairs.append((p, g))
    return pairs


def cmd_evaluate(args) -> int:
    pred_trajs, _, _ = assemble(_read_records(args.pred))
    gt_trajs, _, _ = assemble(_read_records(args.gt))
    pairs = _paired_trajectories(pred_trajs, gt_trajs)
    if not pairs:
        raise ValueError("no overlapping (pedestrian, frame) pairs to evaluate")
    rows = [("ped_id", "ADE [m]", "FDE [m]")]
    csv_lines = ["ped_id,ade,fde"]
    total_ade = total_fde = 0.0
    for p, g in pairs:
        a, f = ade(p, g), fde(p, g)
        total_ade += a
        total_fde += f
        rows.append((str(p.pedestrian_id), f"{a:.4f}", f"{f:.4f}"))
        csv_lines.append(f"{p.pedestrian_id},{a:.6f},{f:.6f}")
    mean_ade, mean_fde = total_ade / len(pairs), total_fde / len(pairs)
    rows.append(("mean", f"{mean_ade:.4f}", f"{mean_fde:.4f}"))
    csv_lines.append(f"mean,{mean_ade:.6f},{mean_fde:.6f}")
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    for i, row in enumerate(rows):
        print("  ".join(cell.ljust(widths[k]) for k, cell in enumerate(row)))
        if i == 0:
            print("  ".join("-" * w for w in widths))
    if args.out:
        _write_text(args.out, "\n".join(csv_lines) + "\n")
    return 0


def cmd_stats(args) -> int:
    trajs, _, _ = assemble(_read_records(args.infile))
    hist = speed_histogram(trajs, bin_width=args.bin_width)
    print(f"speeds = {sum(c for _, _, c in hist.bins)}")
    print(f"median_speed = {hist.median:.6f}")
    if args.out:
        _write_text(args.out, hist.to_csv())
    if args.compare:
        other, _, _ = assemble(_read_records(args.compare))
        result = mann_whitney_u(
            instantaneous_speeds(trajs), instantaneous_speeds(other)
        )
        print(f"u_statistic = {result.u_statistic:.1f}")
        print(f"p_value = {result.p_value:.6g}")
        print(f"cliffs_delta = {result.cliffs_delta:.6f}")
        print(f"large_effect = {int(result.large_effect)}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog="robosfm",
        description="Pedestrian-robot social force simulation and evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(
            name,
            help=help_text,
            epilog=config_help_text(),
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        p.set_defaults(func=func)
        _add_common(p)
        return p

    p = add("ingest", cmd_ingest, "validate and normalize a record CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", help="write normalized records here")

    p = add("preprocess", cmd_preprocess, "apply quality filters and gap repair")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the filter report here (default: stdout)")

    p = add("label", cmd_label, "heuristic behavior labels per trajectory")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", help="default: <in>_labels.csv next to the input")

    p = add("synth", cmd_synth, "generate records from a scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)

    p = add("curate", cmd_curate, "extract per-network training samples")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--labels", help="ped_id,label CSV (default: from records)")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--allow-empty", action="store_true",
        help="do not fail when a network has no samples",
    )

    p = add("train", cmd_train, "train force networks on curated samples")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--net", default="all",
                   choices=["all"] + [n.value for n in NetId])
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)

    p = add("simulate", cmd_simulate, "roll out a scenario under a provider")
    p.add_argument("--scenario", required=True)
    p.add_argument("--provider", default="sfm", choices=PROVIDER_TAGS)
    p.add_argument("--weights", help="directory of .nfw files for neural providers")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("predict", cmd_predict, "observation-conditioned prediction")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--provider", default="sfm", choices=PROVIDER_TAGS)
    p.add_argument("--weights", help="directory of .nfw files for neural providers")
    p.add_argument("--obs", type=int, default=8, help="observed prefix frames")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--k", type=int, default=None, help="best-of-K samples")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "ADE/FDE of predictions vs ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="also write a CSV table here")

    p = add("stats", cmd_stats, "speed distribution and dataset comparison")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--compare", help="second dataset for the rank test")
    p.add_argument("--bin-width", type=float, default=0.1)
    p.add_argument("--out", help="write the histogram CSV here")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help exits 0, usage errors 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
