"""Command-line entry point.

    o2rnav matrix gen|validate
    o2rnav scene gen
    o2rnav dataset gen
    o2rnav run
    o2rnav eval-maps
    o2rnav report --merge A.json B.json ...

Every subcommand takes ``--config FILE`` (JSON), ``--seed`` and ``--jobs``.
Explicit flags win over config values.  Data goes to files and standard
output, diagnostics to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import metrics
from .dataset import DEFAULT_D_MAX, DEFAULT_PATCH_M, generate_dataset, load_sample
from .knowledge import (BUNDLED_DATASETS, DEFAULT_PROMPTS, EndpointConfig, bundled_matrix, load_matrix,
                        query_llm_matrix, save_matrix)
from .nav import FusionConfig
from .scene import SceneParams, generate_scene, load_scene, rasterize_scene, save_scene
from .sim import (SimConfig, format_table, load_episodes, run_batch, sample_episodes, save_episodes)

log = logging.getLogger("o2rnav")


class CLIError(Exception):
    pass


# ---------------------------------------------------------------- config


@dataclass
class RunConfig:
    """Everything a subcommand may read from ``--config``."""

    paths: dict = field(default_factory=dict)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    scene: dict = field(default_factory=dict)
    loss: dict = field(default_factory=dict)
    seed: int = 0
    jobs: int | None = None
    resolution: float | None = None
    label: str = ""

    PATH_KEYS = ("scenes", "matrix", "dataset", "reports", "episodes")

    @classmethod
    def from_json(cls, doc: dict, base: Path = Path(".")) -> "RunConfig":
        if not isinstance(doc, dict):
            raise CLIError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise CLIError(f"unknown config keys: {sorted(unknown)}")
        paths = dict(doc.get("paths", {}))
        bad = set(paths) - set(cls.PATH_KEYS)
        if bad:
            raise CLIError(f"unknown config paths: {sorted(bad)}")
        for k, v in paths.items():
            p = Path(v)
            paths[k] = str(p if p.is_absolute() else base / p)
        # inputs must already exist; output locations need not
        for k in ("scenes", "matrix"):
            if k in paths and not Path(paths[k]).exists():
                raise CLIError(f"config path {k!r} does not exist: {paths[k]}")
        try:
            cfg = cls(
                paths=paths,
                fusion=FusionConfig.from_json(doc.get("fusion", {})),
                sim=SimConfig.from_json(doc.get("sim", {})),
                scene=dict(doc.get("scene", {})),
                loss=dict(doc.get("loss", {})),
                seed=int(doc.get("seed", 0)),
                jobs=doc.get("jobs"),
                resolution=doc.get("resolution"),
                label=str(doc.get("label", "")),
            )
        except (TypeError, ValueError) as exc:
            raise CLIError(f"invalid config: {exc}") from None
        if cfg.jobs is not None and int(cfg.jobs) < 1:
            raise CLIError("jobs must be >= 1")
        if cfg.resolution is not None and not float(cfg.resolution) > 0:
            raise CLIError("resolution must be positive")
        return cfg


def _load_config(args) -> RunConfig:
    if not args.config:
        return RunConfig()
    path = Path(args.config)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise CLIError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CLIError(f"{path}: malformed JSON ({exc})") from None
    return RunConfig.from_json(doc, path.parent)


def _pick(flag, cfg_value, default=None):
    if flag is not None:
        return flag
    return default if cfg_value is None else cfg_value


def _seed(args, cfg: RunConfig) -> int:
    return int(_pick(args.seed, cfg.seed, 0))


def _jobs(args, cfg: RunConfig) -> int:
    jobs = int(_pick(args.jobs, cfg.jobs, os.cpu_count() or 1))
    if jobs < 1:
        raise CLIError("--jobs must be >= 1")
    return jobs


def _path(flag, cfg: RunConfig, key: str, required: bool = True):
    value = _pick(flag, cfg.paths.get(key))
    if value is None and required:
        raise CLIError(f"no {key} path given (flag or config 'paths.{key}')")
    return None if value is None else Path(value)


def _matrix(args, cfg: RunConfig):
    path = _path(getattr(args, "matrix", None), cfg, "matrix", required=False)
    if path is None:
        return bundled_matrix(getattr(args, "dataset", None) or "gibson")
    return load_matrix(path)


def _load_scenes(directory: Path):
    if not directory.is_dir():
        raise CLIError(f"scene directory not found: {directory}")
    files = sorted(p for p in directory.glob("*.json") if p.name != "manifest.json")
    if not files:
        raise CLIError(f"no scene files in {directory}")
    return [load_scene(p) for p in files]


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


# ---------------------------------------------------------------- commands


def cmd_matrix(args) -> int:
    cfg = _load_config(args)
    if args.matrix_cmd == "validate":
        m = load_matrix(args.path)
        print(f"{args.path}: ok ({len(m.rooms)} rooms x {len(m.objects)} objects, "
              f"provenance {m.provenance.get('kind')})")
        return 0
    seed = _seed(args, cfg)
    out = _path(args.out, cfg, "matrix")
    base = bundled_matrix(args.dataset)
    if args.offline:
        m = base
    else:
        ep = EndpointConfig(base_url=args.base_url or EndpointConfig.base_url,
                            model=args.model or EndpointConfig.model,
                            max_parallel=_jobs(args, cfg), offline_fallback=args.fallback)
        m = query_llm_matrix(ep, DEFAULT_PROMPTS, base.rooms, base.objects,
                             transcript_dir=args.transcripts, fallback=base)
    m = replace(m, provenance=dict(m.provenance, seed=seed))
    out.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(m, out)
    print(f"wrote {out} ({m.provenance['kind']})")
    return 0


def cmd_scene(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    out = _path(args.out, cfg, "scenes")
    opts = dict(cfg.scene)
    if args.size:
        opts["bounds_m"] = tuple(args.size)
    if args.resolution:
        opts["resolution"] = args.resolution
    if args.dataset:
        opts["dataset"] = args.dataset
    if "bounds_m" in opts:
        opts["bounds_m"] = tuple(opts["bounds_m"])
    if "room_count_range" in opts:
        opts["room_count_range"] = tuple(opts["room_count_range"])
    try:
        params = SceneParams(**opts)
    except TypeError as exc:
        raise CLIError(f"invalid scene parameters: {exc}") from None
    count = int(_pick(args.count, None, 1))
    out.mkdir(parents=True, exist_ok=True)
    seeds = np.random.SeedSequence(seed).generate_state(count)
    entries = []
    for i in range(count):
        sid = f"scene_{i:03d}"
        layout = generate_scene(int(seeds[i]), params, sid)
        save_scene(layout, out / f"{sid}.json")
        entries.append({"id": sid, "seed": int(seeds[i])})
        if args.figures:
            from .plotting import plot_scene
            plot_scene(layout, Path(args.figures) / f"{sid}.png")
    _write_json(out / "manifest.json", {"seed": seed, "scenes": entries})
    print(f"wrote {count} scenes to {out}")
    return 0


def cmd_dataset(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    layouts = _load_scenes(_path(args.scenes, cfg, "scenes"))
    out = _path(args.out, cfg, "dataset")
    matrix = _matrix(args, cfg)
    cats = args.categories or list(matrix.objects)
    res = _pick(args.resolution, cfg.resolution)
    completes = [rasterize_scene(l, res) for l in layouts]
    manifest = generate_dataset(completes, matrix, cats, args.samples_per_scene, seed, out,
                                patch_m=args.patch, d_max=args.d_max, augment=args.augment,
                                jobs=_jobs(args, cfg))
    if args.figures and manifest["samples"]:
        from .plotting import plot_potentials
        first = load_sample(out / manifest["samples"][0]["dir"])
        for c in cats:
            plot_potentials(first, c, Path(args.figures) / f"{first.sample_id}_{c.replace(' ', '_')}.png")
    print(f"wrote {len(manifest['samples'])} samples to {out} (hash {manifest['hash'][:12]})")
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    layouts = _load_scenes(_path(args.scenes, cfg, "scenes"))
    matrix = _matrix(args, cfg)
    sim_doc = asdict(cfg.sim)
    for name in ("max_steps", "success_radius", "forward_step", "turn_angle_deg", "fov_deg",
                 "sensing_range", "room_noise"):
        v = getattr(args, name)
        if v is not None:
            sim_doc[name] = v
    sim_cfg = SimConfig.from_json(sim_doc)
    fusion = cfg.fusion
    if args.weights:
        fusion = replace(fusion, w_o=args.weights[0], w_a=args.weights[1], w_r=args.weights[2])
    if args.interval:
        fusion = replace(fusion, interval=args.interval)
    res = _pick(args.resolution, cfg.resolution)

    ep_path = _path(args.episodes, cfg, "episodes", required=False)
    if args.sample:
        if not args.targets:
            raise CLIError("--sample needs --targets")
        specs = sample_episodes(layouts, args.targets, args.sample, seed, sim_cfg,
                                min_distance=args.min_distance, resolution=res)
        if ep_path is not None:
            ep_path.parent.mkdir(parents=True, exist_ok=True)
            save_episodes(specs, ep_path)
    elif ep_path is not None:
        specs = load_episodes(ep_path)
    else:
        raise CLIError("give --episodes FILE or --sample N --targets ...")

    label = args.label or cfg.label or "w=({:g},{:g},{:g})".format(*fusion.weights)
    report = run_batch(specs, fusion, matrix, layouts, sim_cfg, _jobs(args, cfg), res, label, seed,
                       with_trajectory=bool(args.figures))
    out = _path(args.out, cfg, "reports", required=False)
    if out is not None:
        if out.suffix != ".json":
            out = out / "report.json"
        _write_json(out, report)
        log.info("wrote %s", out)
    if args.figures:
        from .plotting import plot_report_bars, plot_scene
        by_id = {l.id: l for l in layouts}
        trajs: dict = {}
        for r in report["results"]:
            trajs.setdefault(r["scene_id"], []).append(r.get("trajectory", []))
        for sid, ts in trajs.items():
            plot_scene(by_id[sid], Path(args.figures) / f"traj_{sid}.png", ts[:8])
        plot_report_bars([report], Path(args.figures) / "sr_spl.png")
    print(format_table([report]))
    return 0


def _sample_dirs(path: Path) -> list[Path]:
    if (path / "meta.json").exists():
        return [path]
    manifest = path / "manifest.json"
    if manifest.exists():
        return [path / e["dir"] for e in json.loads(manifest.read_text())["samples"]]
    dirs = sorted(p.parent for p in path.glob("*/meta.json"))
    if not dirs:
        raise CLIError(f"no samples under {path}")
    return dirs


def cmd_eval_maps(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    pred_dirs = _sample_dirs(Path(args.pred))
    gt_root = Path(args.gt)
    weights = metrics.LossWeights.from_sigmas(cfg.loss.get("sigma_p", (1.0, 1.0, 1.0)),
                                              cfg.loss.get("sigma_s", (1.0, 1.0, 1.0)))
    rows = []
    for pdir in pred_dirs:
        gdir = gt_root if (gt_root / "meta.json").exists() else gt_root / pdir.name
        pred, gt = load_sample(pdir), load_sample(gdir)
        if pred.explored.shape != gt.explored.shape:
            raise CLIError(f"{pdir.name}: predicted and ground-truth maps differ in shape")
        cats = args.categories or gt.categories
        for c in cats:
            if c not in gt.categories or c not in pred.categories:
                raise CLIError(f"{pdir.name}: category {c!r} missing from a sample")
            if not gt.frontier.any():
                log.warning("%s: no frontier pixels, skipped", pdir.name)
                continue
            p = {"o": pred.objects[c], "a": pred.area, "r": pred.o2r[c]}
            g = {"o": gt.objects[c], "a": gt.area, "r": gt.o2r[c]}
            terms = metrics.task_terms(p, g, weights, gt.frontier)
            rows.append({"sample": pdir.name, "category": c,
                         "terms": {f"{t}/{kind}": v for (t, kind), v in sorted(terms.items())},
                         "joint": math.fsum(terms[k] for k in sorted(terms))})
    if not rows:
        raise CLIError("nothing to evaluate")
    keys = rows[0]["terms"].keys()
    mean = {k: math.fsum(r["terms"][k] for r in rows) / len(rows) for k in keys}
    doc = {"seed": seed, "n": len(rows), "mean": mean,
           "mean_joint": math.fsum(r["joint"] for r in rows) / len(rows), "rows": rows}
    text = json.dumps(doc, indent=1)
    if args.out:
        _write_json(Path(args.out), doc)
    print(text)
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    seed = _seed(args, cfg)
    reports = []
    for p in args.merge:
        try:
            rep = json.loads(Path(p).read_text())
        except FileNotFoundError:
            raise CLIError(f"report not found: {p}") from None
        except json.JSONDecodeError as exc:
            raise CLIError(f"{p}: malformed JSON ({exc})") from None
        if "summary" not in rep:
            raise CLIError(f"{p}: not a run report (no 'summary')")
        rep.setdefault("label", Path(p).stem)
        reports.append(rep)
    table = format_table(reports)
    out = _path(args.out, cfg, "reports", required=False)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        merged = {"seed": seed, "rows": [{k: rep.get(k) for k in
                                          ("label", "fusion", "summary", "per_category", "seed")}
                                         for rep in reports]}
        _write_json(out / "report.json", merged)
        (out / "report.txt").write_text(table + "\n")
        from .plotting import plot_report_bars
        plot_report_bars(reports, out / "sr_spl.png")
        log.info("wrote report to %s", out)
    print(table)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="master seed (echoed into outputs)")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="o2rnav", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    mx = sub.add_parser("matrix", help="object-to-room matrix").add_subparsers(dest="matrix_cmd", required=True)
    g = mx.add_parser("gen", parents=[common], help="query the LLM (or copy the bundled matrix)")
    g.add_argument("--dataset", choices=BUNDLED_DATASETS, default="gibson")
    g.add_argument("--offline", action="store_true", help="write the bundled matrix, no network")
    g.add_argument("--fallback", action="store_true", help="use the bundled matrix if the endpoint fails")
    g.add_argument("--base-url")
    g.add_argument("--model")
    g.add_argument("--transcripts", help="directory for the raw query transcript")
    g.add_argument("--out")
    g.set_defaults(func=cmd_matrix)
    v = mx.add_parser("validate", parents=[common], help="check a matrix file")
    v.add_argument("path")
    v.set_defaults(func=cmd_matrix)

    sc = sub.add_parser("scene", help="procedural scenes").add_subparsers(dest="scene_cmd", required=True)
    g = sc.add_parser("gen", parents=[common])
    g.add_argument("--count", type=int)
    g.add_argument("--size", type=float, nargs=2, metavar=("W", "H"), help="bounds in meters")
    g.add_argument("--resolution", type=float)
    g.add_argument("--dataset", choices=BUNDLED_DATASETS)
    g.add_argument("--out")
    g.add_argument("--figures", help="directory for layout figures")
    g.set_defaults(func=cmd_scene)

    ds = sub.add_parser("dataset", help="supervision samples").add_subparsers(dest="dataset_cmd", required=True)
    g = ds.add_parser("gen", parents=[common])
    g.add_argument("--scenes")
    g.add_argument("--matrix")
    g.add_argument("--dataset", choices=BUNDLED_DATASETS)
    g.add_argument("--categories", nargs="+")
    g.add_argument("--samples-per-scene", type=int, default=1)
    g.add_argument("--resolution", type=float)
    g.add_argument("--patch", type=float, default=DEFAULT_PATCH_M)
    g.add_argument("--d-max", type=float, default=DEFAULT_D_MAX)
    g.add_argument("--augment", action="store_true")
    g.add_argument("--out")
    g.add_argument("--figures", help="directory for potential-map figures of the first sample")
    g.set_defaults(func=cmd_dataset)

    r = sub.add_parser("run", parents=[common], help="run an episode batch")
    r.add_argument("--scenes")
    r.add_argument("--matrix")
    r.add_argument("--dataset", choices=BUNDLED_DATASETS)
    r.add_argument("--episodes", help="episode file (read, or written when sampling)")
    r.add_argument("--sample", type=int, help="sample this many episodes instead of reading them")
    r.add_argument("--targets", nargs="+")
    r.add_argument("--min-distance", type=float, default=1.0)
    r.add_argument("--weights", type=float, nargs=3, metavar=("W_O", "W_A", "W_R"))
    r.add_argument("--interval", type=int)
    r.add_argument("--max-steps", dest="max_steps", type=int)
    r.add_argument("--success-radius", dest="success_radius", type=float)
    r.add_argument("--forward-step", dest="forward_step", type=float)
    r.add_argument("--turn-angle", dest="turn_angle_deg", type=float)
    r.add_argument("--fov", dest="fov_deg", type=float)
    r.add_argument("--range", dest="sensing_range", type=float)
    r.add_argument("--room-noise", dest="room_noise", type=float)
    r.add_argument("--resolution", type=float)
    r.add_argument("--label")
    r.add_argument("--out", help="report JSON path (or directory)")
    r.add_argument("--figures", help="directory for trajectory and SR/SPL figures")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval-maps", parents=[common], help="score predicted potential maps")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--categories", nargs="+")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval_maps)

    rp = sub.add_parser("report", parents=[common], help="merge run reports")
    rp.add_argument("--merge", nargs="+", required=True)
    rp.add_argument("--out", help="directory for report.json, report.txt and figures")
    rp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CLIError, ValueError, RuntimeError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"o2rnav: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
