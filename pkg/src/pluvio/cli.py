"""Command-line entry point: ``pluvio {synth,detect,eval,gridsearch}``.

Exit status: 0 success, 1 usage or configuration error, 2 data error
(unreadable or malformed inputs), 3 anything unexpected.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from pluvio import __version__
from pluvio.config import PipelineConfig, load_config, read_kv
from pluvio.errors import ConfigError, DataError

log = logging.getLogger("pluvio")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pluvio", description="Rain detection in surveillance video from streak orientations.")
    p.add_argument("--version", action="version", version=f"pluvio {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic rain sequence with labels")
    s.add_argument("--scene", required=True, type=Path, help="scene spec (key = value)")
    s.add_argument("--rain", required=True, type=Path, help="rain spec (key = value)")
    s.add_argument("--seed", required=True, type=int)
    s.add_argument("--out", required=True, type=Path, help="output directory")
    s.add_argument("--name", default="synthetic", help="base name of the written files")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("detect", help="run the detector over a frame sequence")
    d.add_argument("--config", type=Path, help="pipeline config (defaults used when omitted)")
    d.add_argument("--input", required=True, type=Path, help="image directory or .y8 file")
    d.add_argument("--out", required=True, type=Path, help="detection CSV to write")
    d.add_argument("--frame-rate", type=float, help="frames per second (overrides input.frame_rate)")
    d.set_defaults(func=cmd_detect)

    e = sub.add_parser("eval", help="score detection CSVs against rain labels")
    e.add_argument("--detections", required=True, nargs="+", type=Path)
    e.add_argument("--labels", required=True, nargs="+", type=Path, help="one label CSV per detection CSV")
    e.add_argument("--frame-rate", type=float, help="fps for minute labels (default: from the detection CSV)")
    e.add_argument("--out", required=True, type=Path, help="report JSON; .txt and .png are written beside it")
    e.add_argument("--no-evidence", choices=("exclude", "no-rain"), default="exclude", dest="no_evidence")
    e.add_argument("--no-figures", action="store_true")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gridsearch", help="rank parameter combinations on tagged snippets")
    g.add_argument("--grid", required=True, help="grid file (key = values), or 'default'")
    g.add_argument("--snippets", required=True, type=Path, help="CSV manifest: path,tag[,frame_rate]")
    g.add_argument("--out", required=True, type=Path, help="result CSV; a .png heatmap is written beside it")
    g.add_argument("--config", type=Path, help="base config for keys not on the grid")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--no-figures", action="store_true")
    g.set_defaults(func=cmd_gridsearch)
    return p


def cmd_synth(args) -> int:
    from pluvio.synthrain import generate_sequence, rain_from_mapping, scene_from_mapping

    scene = scene_from_mapping(read_kv(args.scene))
    rain = rain_from_mapping(read_kv(args.rain))
    source, truth = generate_sequence(scene, rain, args.seed, args.out, args.name)
    print(f"wrote {source.path} ({source.frame_count} frames, {int(truth.rain.sum())} with rain)")
    return EXIT_OK


def cmd_detect(args) -> int:
    from pluvio.ingest import open_frame_source
    from pluvio.pipeline import process_video

    cfg = load_config(args.config) if args.config else PipelineConfig()
    rate = args.frame_rate if args.frame_rate is not None else cfg.input_frame_rate
    if rate is not None and rate <= 0:
        raise UsageError("--frame-rate must be > 0")
    source = open_frame_source(args.input, rate, cfg.input_channel)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    series = process_video(cfg, source, args.out)
    rain = sum(c == "1" for c in series.codes)
    print(f"wrote {args.out} ({len(series)} frames, {rain} rain, config {series.config_hash})")
    return EXIT_OK


def _sequence_name(path: Path, meta: dict) -> str:
    src = meta.get("source")
    return Path(src).stem if src else path.stem


def cmd_eval(args) -> int:
    from pluvio.evaluate import emit_report, evaluate_sequence, per_minute_to_per_frame, read_detections, read_labels

    if len(args.detections) != len(args.labels):
        raise UsageError("give one --labels file per --detections file")
    results, panels = {}, {}
    for det_path, lab_path in zip(args.detections, args.labels):
        table = read_detections(det_path)
        if "truncated" in table.meta:
            log.warning("%s: %s", det_path, table.meta["truncated"])
        labels = read_labels(lab_path)
        rate = args.frame_rate or float(table.meta.get("frame_rate", 0) or 0)
        if labels.unit == "minute" and rate <= 0:
            raise UsageError(f"{det_path}: frame rate unknown; pass --frame-rate")
        truth = per_minute_to_per_frame(labels, rate or 1.0, len(table))
        name = _sequence_name(det_path, table.meta)
        if name in results:
            raise UsageError(f"duplicate sequence name {name!r}")
        results[name] = evaluate_sequence(table.codes, truth, table.meta.get("config_hash", ""), args.no_evidence)
        panels[name] = (table, truth)
    json_path, txt_path = emit_report(results, args.out)
    sys.stdout.write(txt_path.read_text())
    if not args.no_figures:
        from pluvio.plotting import detection_timeline

        detection_timeline(panels, args.out.with_suffix(".png"))
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    from pluvio.gridsearch import default_grid, grid_search, load_grid, load_snippets, write_grid_results

    grid = default_grid() if args.grid == "default" else load_grid(args.grid)
    base = load_config(args.config) if args.config else PipelineConfig()
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    snippets = load_snippets(args.snippets)
    result = grid_search(grid, snippets, base, jobs=args.jobs)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_grid_results(result, args.out)
    best = result.best()
    print(f"{grid.size} combinations, {len(result.feasible)} feasible")
    if best:
        print("best: " + ", ".join(f"{k}={best[k]}" for k in result.keys) + f" (margin {best['margin']:.4f})")
    if not args.no_figures:
        from pluvio.plotting import margin_heatmap

        margin_heatmap(result, args.out.with_suffix(".png"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"pluvio: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"pluvio: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
