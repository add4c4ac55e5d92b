"""Command line interface.

::

    seastitch simulate --preset reentry --seed 3 --out seq3
    seastitch stitch --detections seq3/detections.txt --metadata seq3/metadata.json --out run3
    seastitch evaluate --gt seq3/gt.txt --tracks run3/tracks.txt

Data goes to files or standard output, diagnostics to standard error.  A
missing input file exits with status 2, any other failure with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import FovCalibrator, make_stitch_pipeline, metadata_params
from .exceptions import SeastitchError
from .geometry import project_batch, metadata_arrays
from .io import config_to_dict, metadata_index, read_config, read_metadata, read_tracks, write_tracks
from .metrics import evaluate
from .pretrack import two_stage_track
from .simgen import PRESETS, ScenarioSpec, generate, write_simulation

logger = logging.getLogger("seastitch")

EXIT_FAILURE = 1
EXIT_MISSING = 2


class MissingInput(Exception):
    def __init__(self, path):
        super().__init__(f"no such file: {path}")
        self.path = str(path)


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingInput(path)
    return p


def _load_config(args):
    cfg = read_config(_existing(args.config) if args.config else None)
    if getattr(args, "no_short_term", False):
        cfg = replace(cfg, short_term=False)
    if getattr(args, "no_long_term", False):
        cfg = replace(cfg, long_term=False)
    return cfg


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")


# -- stitch ------------------------------------------------------------------

@dataclass
class StitchJob:
    name: str
    tracks_path: str
    metadata_path: str
    raw_detections: bool
    outdir: str
    interpolate: bool
    cfg: object


def run_stitch(job: StitchJob) -> dict:
    """Stitch one sequence; writes ``tracks.txt`` and ``report.json`` into ``job.outdir``."""
    cfg = job.cfg
    tracks = read_tracks(job.tracks_path)
    metadata = metadata_index(read_metadata(job.metadata_path, cfg.interpolate_metadata,
                                            cfg.metadata_frame_offset))
    pipe = make_stitch_pipeline(cfg, pretrack=job.raw_detections, interpolate=job.interpolate)
    out = pipe.fit_transform(tracks, **metadata_params(pipe, metadata))
    report = pipe.named_steps["stitch"].report_
    outdir = Path(job.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_tracks(outdir / "tracks.txt", out)
    summary = {"sequence": job.name, "input": job.tracks_path, "metadata": job.metadata_path,
               "pretrack": job.raw_detections, **report.to_dict(), "config": config_to_dict(cfg)}
    _write_json(outdir / "report.json", summary)
    return summary


def _sequence_names(paths: list[str]) -> list[str]:
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return [f"{k:03d}_{s}" for k, s in enumerate(stems)]


def cmd_stitch(args) -> int:
    if bool(args.detections) == bool(args.tracks):
        raise SeastitchError("give exactly one of --detections or --tracks")
    inputs = args.detections or args.tracks
    if len(inputs) != len(args.metadata):
        raise SeastitchError(f"{len(inputs)} track files but {len(args.metadata)} metadata files")
    for p in [*inputs, *args.metadata]:
        _existing(p)
    cfg = _load_config(args)
    names = _sequence_names(inputs)
    out = Path(args.out)
    jobs = [StitchJob(name, str(t), str(m), bool(args.detections),
                      str(out if len(inputs) == 1 else out / name), not args.no_interp, cfg)
            for name, t, m in zip(names, inputs, args.metadata)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(run_stitch, jobs))
    else:
        summaries = [run_stitch(j) for j in jobs]
    for s in summaries:
        logger.info("%s: %d tracklets -> %d tracks (%d short-term, %d long-term merges)", s["sequence"],
                    s["input_tracklets"], s["output_tracks"], s["short_term_merges"], s["long_term_merges"])
    return 0


# -- other subcommands ---------------------------------------------------------

def cmd_pretrack(args) -> int:
    cfg = _load_config(args)
    dets = read_tracks(_existing(args.detections))
    write_tracks(args.out, two_stage_track(dets, cfg.pretrack))
    return 0


def cmd_simulate(args) -> int:
    if bool(args.spec) == bool(args.preset):
        raise SeastitchError("give exactly one of --spec or --preset")
    if args.preset:
        spec = PRESETS[args.preset](args.seed if args.seed is not None else 0)
    else:
        spec = ScenarioSpec.load(_existing(args.spec))
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
    sim = generate(spec)
    paths = write_simulation(sim, args.out)
    spec.save(Path(args.out) / "scenario.json")
    logger.info("wrote %d ground-truth boxes and %d detections to %s", len(sim.gt), len(sim.detections),
                paths["gt"].parent)
    return 0


def cmd_evaluate(args) -> int:
    gt = read_tracks(_existing(args.gt))
    pred = read_tracks(_existing(args.tracks))
    result = evaluate(gt, pred, iou_threshold=args.iou_threshold, class_aware=args.class_aware)
    print(result.report())
    if args.out:
        result.write_json(args.out)
    return 0


def cmd_calibrate_fov(args) -> int:
    cfg = _load_config(args)
    tracks = read_tracks(_existing(args.tracks))
    metadata = read_metadata(_existing(args.metadata), cfg.interpolate_metadata, cfg.metadata_frame_offset)
    cal = FovCalibrator(args.lo, args.hi, args.step, cfg.camera.width, cfg.camera.height,
                        cfg.origin.latitude, cfg.origin.longitude)
    cal.fit(tracks, metadata=metadata_index(metadata))
    print(f"fov={cal.fov_:g}")
    if args.out:
        _write_json(args.out, {"fov": cal.fov_, "grid": cal.grid_.tolist(),
                               "objective": [None if not np.isfinite(v) else float(v) for v in cal.objective_]})
    return 0


def cmd_project(args) -> int:
    cfg = _load_config(args)
    index = metadata_index(read_metadata(_existing(args.metadata), cfg.interpolate_metadata,
                                         cfg.metadata_frame_offset))
    if args.frame not in index:
        raise SeastitchError(f"no metadata for frame {args.frame}")
    pos, heading, pitch = metadata_arrays([index[args.frame]], cfg.origin)
    u, v = args.pixel
    p = project_batch(pos, heading, pitch, np.array([u]), np.array([v]), cfg.camera)[0]
    if np.isnan(p[0]):
        raise SeastitchError(f"pixel ({u:g}, {v:g}) does not see the sea plane in frame {args.frame}")
    print(f"x={p[0]:.6f}\ny={p[1]:.6f}\nz={p[2]:.6f}")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seastitch", description="Relink fragmented UAV tracklets using drone metadata.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="TOML pipeline configuration")
        return p

    p = with_config(sub.add_parser("stitch", help="relink tracklets using drone metadata"))
    p.add_argument("--detections", nargs="+", help="raw detections (id -1); runs the built-in pre-tracker")
    p.add_argument("--tracks", nargs="+", help="tracklets from an external tracker")
    p.add_argument("--metadata", nargs="+", required=True, help="metadata JSON, one per sequence")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-short-term", action="store_true", help="skip the in-view relinking pass")
    p.add_argument("--no-long-term", action="store_true", help="skip the re-entry relinking pass")
    p.add_argument("--no-interp", action="store_true", help="skip both interpolation passes")
    p.add_argument("--jobs", type=int, default=1, help="sequences processed in parallel")
    p.set_defaults(func=cmd_stitch)

    p = with_config(sub.add_parser("pretrack", help="associate raw detections into tracklets"))
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True, help="output track file")
    p.set_defaults(func=cmd_pretrack)

    p = sub.add_parser("simulate", help="render a synthetic sequence")
    p.add_argument("--spec", help="scenario JSON")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score tracks against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--class-aware", action="store_true")
    p.add_argument("--out", help="also write the scores as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = with_config(sub.add_parser("calibrate-fov", help="grid-search the field of view"))
    p.add_argument("--tracks", required=True, help="one id per stationary target")
    p.add_argument("--metadata", required=True)
    p.add_argument("--lo", type=float, default=30.0)
    p.add_argument("--hi", type=float, default=120.0)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--out", help="also write the objective curve as JSON")
    p.set_defaults(func=cmd_calibrate_fov)

    p = with_config(sub.add_parser("project", help="sea-plane position of one pixel"))
    p.add_argument("--metadata", required=True)
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--pixel", type=float, nargs=2, metavar=("U", "V"), required=True)
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except MissingInput as err:
        print(f"seastitch: error: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (SeastitchError, ValueError, KeyError, TypeError, OSError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"seastitch: error: {msg}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
