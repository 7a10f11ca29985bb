"""Command-line entry point: ``state-saliency <command> ...``.

Exit codes: 0 success, 1 computation error, 2 input or parse error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import FormatError, SaliencyError
from .evaluation import GAIT, RECOVERY, load_targets, read_episode, score_episode
from .features import (
    PhaseConfig,
    StateSchema,
    default_schema,
    format_float,
    gait_schema,
    load_schema,
    read_trajectory,
    save_schema,
    validate_schema,
    write_trajectory,
)
from .mlp import MlpPolicy, load_policy, save_policy
from .render import render_heatmap_svg
from .saliency import (
    IgConfig,
    ImportanceReport,
    SaliencyMap,
    aggregate_trials,
    compose_sensitivity,
    importance_report,
    noise_per_dim,
    read_matrix_csv,
    saliency_pipeline,
    write_matrix_csv,
    write_saliency,
)
from .stats import chord_filter, group_correlation, pearson_abs_matrix
from .synth import SynthConfig, gen_planted_policy, gen_random_policy, gen_trajectory


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None


def _load_policy(path: Path) -> MlpPolicy:
    try:
        return load_policy(path)
    except FormatError as exc:
        msg = str(exc)
        raise FormatError(msg if str(path) in msg else f"{path}: {msg}") from None


def _write_doughnut(report: ImportanceReport, path: Path) -> None:
    lines = ["group,percent"]
    lines += [f"{g.name},{format_float(100.0 * g.relative)}" for g in report.groups]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_correlation(states: np.ndarray, schema: StateSchema, threshold: float, out: Path, suffix: str) -> list[str]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        dim = pearson_abs_matrix(states)
    grp = group_correlation(dim, schema)
    names = schema.names
    write_matrix_csv(dim, out / f"correlation{suffix}.csv", [f"s{i}" for i in range(dim.shape[0])])
    write_matrix_csv(grp, out / f"group_correlation{suffix}.csv", names)
    links = [{"source": ln.source, "target": ln.target, "value": ln.value} for ln in chord_filter(grp, names, threshold)]
    _write_json(out / f"chord{suffix}.json", {"threshold": threshold, "groups": names, "links": links})
    return [f"correlation{suffix}.csv", f"group_correlation{suffix}.csv", f"chord{suffix}.json"]


@dataclass
class ReportBundle:
    out_dir: Path
    files: list[str] = field(default_factory=list)
    maps: list[SaliencyMap] = field(default_factory=list)
    reports: list[ImportanceReport] = field(default_factory=list)


def cmd_analyze(
    policy_paths: Sequence[Path],
    trajectory_paths: Sequence[Path],
    schema_path: Path,
    out_dir: Path,
    steps: int = 25,
    baseline: str = "zero",
    method: str = "mean",
    include_ff: bool = False,
) -> ReportBundle:
    """IG saliency, importances, doughnut and box data for one or more trials.

    Trials pair policies with trajectories; a single policy or trajectory is
    reused for every trial.
    """
    policy_paths = [Path(p) for p in policy_paths]
    trajectory_paths = [Path(p) for p in trajectory_paths]
    k = max(len(policy_paths), len(trajectory_paths))
    if len(policy_paths) not in (1, k) or len(trajectory_paths) not in (1, k):
        raise FormatError("give one policy or trajectory, or equally many of each")
    schema = load_schema(schema_path)
    policies = [_load_policy(p) for p in policy_paths]
    trajs = [read_trajectory(p) for p in trajectory_paths]
    for path, pol in zip(policy_paths, policies):
        try:
            validate_schema(schema, pol.input_dim)
        except FormatError as exc:
            raise FormatError(f"{schema_path} vs {path}: {exc}") from None
    for path, tr in zip(trajectory_paths, trajs):
        if tr.dim != schema.total_dim:
            raise FormatError(f"{path}: {tr.dim} state columns, schema has {schema.total_dim}")
    inputs = [Path(schema_path), *policy_paths, *trajectory_paths]
    base_vec = None
    if baseline != "zero":
        bpath = Path(baseline)
        doc = _read_json(bpath)
        if isinstance(doc, dict):
            doc = doc.get("baseline")
        try:
            base_vec = np.asarray(doc, dtype=np.float64)
        except (TypeError, ValueError):
            raise FormatError(f"{bpath}: baseline must be a list of numbers") from None
        if base_vec.shape != (schema.total_dim,):
            raise FormatError(f"{bpath}: baseline needs {schema.total_dim} values")
        inputs.append(bpath)
    cfg = IgConfig(steps=steps, baseline=base_vec)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out_dir)
    for t in range(k):
        pol = policies[t if len(policies) > 1 else 0]
        tr = trajs[t if len(trajs) > 1 else 0]
        suffix = f"_{t}" if k > 1 else ""
        smap = saliency_pipeline(pol, tr, cfg)
        report = importance_report(smap, schema, method, include_feedforward=include_ff)
        write_saliency(smap, out_dir / f"saliency{suffix}.csv", out_dir / f"saliency{suffix}.json")
        _write_json(out_dir / f"importance{suffix}.json", report.to_dict())
        _write_doughnut(report, out_dir / f"doughnut{suffix}.csv")
        bundle.files += [f"saliency{suffix}.csv", f"saliency{suffix}.json",
                         f"importance{suffix}.json", f"doughnut{suffix}.csv"]
        if len(trajs) > 1 or t == 0:
            if tr.steps >= 2:
                bundle.files += _write_correlation(tr.states, schema, 0.25, out_dir, suffix if len(trajs) > 1 else "")
        bundle.maps.append(smap)
        bundle.reports.append(report)
    box = aggregate_trials(bundle.reports)
    _write_json(out_dir / "boxstats.json", {name: b.to_dict() for name, b in box.items()})
    bundle.files.append("boxstats.json")
    manifest = {
        "tool": "state-saliency",
        "version": __version__,
        "config": {
            "p": steps,
            "baseline": baseline,
            "method": method,
            "include_feedforward": include_ff,
            "trials": k,
        },
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": {name: _sha256(out_dir / name) for name in sorted(bundle.files)},
    }
    _write_json(out_dir / "manifest.json", manifest)
    bundle.files.append("manifest.json")
    return bundle


def cmd_metrics(episode: Path, targets: Path, task: str, out: Path, sidecar: Path | None = None) -> dict:
    ep = read_episode(episode, sidecar)
    tg = load_targets(targets)
    result = score_episode(ep, tg, task).to_dict()
    _write_json(Path(out), result)
    return result


def cmd_correlate(trajectory: Path, schema_path: Path, out_dir: Path, threshold: float = 0.25) -> list[str]:
    schema = load_schema(schema_path)
    tr = read_trajectory(trajectory)
    validate_schema(schema, tr.dim)
    if tr.steps < 2:
        raise FormatError(f"{trajectory}: correlation needs at least two timesteps")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return _write_correlation(tr.states, schema, threshold, out_dir, "")


def cmd_compose(saliency: Path, noise: Path, schema_path: Path, out: Path) -> np.ndarray:
    schema = load_schema(schema_path)
    s, _ = read_matrix_csv(saliency)
    if s.shape[1] != schema.total_dim:
        raise FormatError(f"{saliency}: {s.shape[1]} columns, schema has {schema.total_dim}")
    doc = _read_json(Path(noise))
    if not isinstance(doc, dict):
        raise FormatError(f"{noise}: noise spec must be a JSON object")
    m = compose_sensitivity(s, noise_per_dim(doc, schema), schema)
    write_matrix_csv(m, out, [f"s{i}" for i in range(m.shape[1])])
    return m


def cmd_synth(
    out_dir: Path,
    seed: int,
    planted: str | None = None,
    steps: int = 100,
    gait: bool = False,
    bias_scale: float = 0.0,
) -> SynthConfig:
    schema = gait_schema() if gait else default_schema()
    cfg = SynthConfig(seed=seed, n=schema.total_dim, steps=steps, planted_group=planted, bias_scale=bias_scale)
    if planted is not None:
        try:
            group = schema.group(planted)
        except KeyError:
            raise FormatError(f"unknown group {planted!r}; choose from {schema.names}") from None
        policy = gen_planted_policy(cfg, group.dims)
    else:
        policy = gen_random_policy(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_policy(policy, out_dir / "policy.json")
    save_schema(schema, out_dir / "schema.json")
    write_trajectory(gen_trajectory(cfg, schema, PhaseConfig()), out_dir / "trajectory.csv")
    return cfg


def cmd_render(matrix: Path, out: Path, vmax: float = 1.0, cell: int = 10) -> str:
    m, header = read_matrix_csv(matrix)
    svg = render_heatmap_svg(m, col_labels=header, cell=cell, vmax=vmax)
    Path(out).write_text(svg, encoding="utf-8")
    return svg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="state-saliency", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="saliency maps and state importance")
    a.add_argument("--policy", nargs="+", required=True, type=Path)
    a.add_argument("--trajectory", nargs="+", required=True, type=Path)
    a.add_argument("--schema", required=True, type=Path)
    a.add_argument("--p", type=int, default=25, help="Riemann steps (default 25)")
    a.add_argument("--baseline", default="zero", help="'zero' or a JSON file with the baseline state")
    a.add_argument("--method", choices=("mean", "max"), default="mean")
    a.add_argument("--include-ff", action="store_true", help="rank feedforward groups too")
    a.add_argument("--out", required=True, type=Path)

    m = sub.add_parser("metrics", help="task-performance metrics of an episode")
    m.add_argument("--task", choices=(RECOVERY, GAIT), required=True)
    m.add_argument("--episode", required=True, type=Path)
    m.add_argument("--targets", required=True, type=Path)
    m.add_argument("--sidecar", type=Path, help="scalar JSON (default: episode stem + .json)")
    m.add_argument("--out", required=True, type=Path)

    c = sub.add_parser("correlate", help="|Pearson r| between state dims and groups")
    c.add_argument("--trajectory", required=True, type=Path)
    c.add_argument("--schema", required=True, type=Path)
    c.add_argument("--threshold", type=float, default=0.25)
    c.add_argument("--out", required=True, type=Path)

    k = sub.add_parser("compose", help="combine a saliency map with sensor noise levels")
    k.add_argument("--saliency", required=True, type=Path)
    k.add_argument("--noise", required=True, type=Path)
    k.add_argument("--schema", required=True, type=Path)
    k.add_argument("--out", required=True, type=Path)

    s = sub.add_parser("synth", help="write a seeded policy/schema/trajectory triple")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--planted", help="restrict the policy's inputs to this group")
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--gait", action="store_true", help="append the feedforward phase vector (66 dims)")
    s.add_argument("--bias-scale", type=float, default=0.0)
    s.add_argument("--out", required=True, type=Path)

    r = sub.add_parser("render", help="grayscale SVG heatmap of a CSV matrix")
    r.add_argument("--matrix", required=True, type=Path)
    r.add_argument("--vmax", type=float, default=1.0)
    r.add_argument("--cell", type=int, default=10)
    r.add_argument("--out", required=True, type=Path)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            cmd_analyze(args.policy, args.trajectory, args.schema, args.out,
                        steps=args.p, baseline=args.baseline, method=args.method,
                        include_ff=args.include_ff)
        elif args.command == "metrics":
            cmd_metrics(args.episode, args.targets, args.task, args.out, args.sidecar)
        elif args.command == "correlate":
            cmd_correlate(args.trajectory, args.schema, args.out, args.threshold)
        elif args.command == "compose":
            cmd_compose(args.saliency, args.noise, args.schema, args.out)
        elif args.command == "synth":
            cmd_synth(args.out, args.seed, args.planted, args.steps, args.gait, args.bias_scale)
        elif args.command == "render":
            cmd_render(args.matrix, args.out, args.vmax, args.cell)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SaliencyError, ValueError, ArithmeticError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
