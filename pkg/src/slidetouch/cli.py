"""``explore`` command line: run experiments, compare policies, browse scenes."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import ConfigError, EmptyViewError, SlidetouchError
from .harness import (
    EXIT_CONFIG,
    EXIT_EMPTY_VIEW,
    EXIT_ERROR,
    EXIT_IO,
    catalog_scene,
    compare,
    describe_scene,
    list_scenes,
    load_scene,
    run,
)

log = logging.getLogger("slidetouch")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="explore",
        description="Visuo-tactile shape exploration simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one exploration from a scene file")
    p_run.add_argument("scene", help="scene JSON path or bundled scene name")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--policy", choices=["bopt", "random"], default=None)
    p_run.add_argument("--udrr-threshold", type=float, default=None, dest="udrr_threshold")
    p_run.add_argument("--grid", type=int, default=None, help="surface grid cells per axis")

    p_cmp = sub.add_parser("compare", help="run both policies over a seed sweep")
    p_cmp.add_argument("scene", help="scene JSON path or bundled scene name")
    p_cmp.add_argument("--seeds", type=int, required=True)
    p_cmp.add_argument("--out", required=True)
    p_cmp.add_argument("--workers", type=int, default=1)

    p_shapes = sub.add_parser("shapes", help="browse the bundled scene catalog")
    shapes_sub = p_shapes.add_subparsers(dest="shapes_command", required=True)
    shapes_sub.add_parser("list", help="list bundled scenes")
    p_desc = shapes_sub.add_parser("describe", help="describe one bundled scene")
    p_desc.add_argument("name")

    return parser


def _configure_logging() -> None:
    level = os.environ.get("EXPLORE_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = _build_parser().parse_args(argv)

    try:
        if args.command == "run":
            scene = load_scene(args.scene)
            report, code = run(
                scene,
                Path(args.out),
                seed=args.seed,
                policy=args.policy,
                udrr_threshold=args.udrr_threshold,
                grid_cells=args.grid,
            )
            print(
                f"{scene.name}: policy={report.policy} touches={report.touch_count} "
                f"udrr={report.records[-1].udrr:.3f} cd={report.final_cd_mm:.2f}mm "
                f"termination={report.termination}"
            )
            return code

        if args.command == "compare":
            scene = load_scene(args.scene)
            summary = compare(scene, seeds=args.seeds, out_dir=Path(args.out), workers=args.workers)
            print(f"{scene.name}: {summary.seeds} seeds per policy")
            for row in summary.rows:
                print(
                    f"  {row.policy:<7} touches {row.touch_mean:.2f} +/- {row.touch_std:.2f}  "
                    f"cd {row.cd_mean_mm:.2f} +/- {row.cd_std_mm:.2f} mm"
                    + (f"  ({row.aborted} aborted)" if row.aborted else "")
                )
            return 0

        if args.shapes_command == "list":
            print(list_scenes())
        else:
            print(describe_scene(args.name))
        return 0

    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmptyViewError as exc:
        print(f"error: empty view: {exc}", file=sys.stderr)
        return EXIT_EMPTY_VIEW
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except SlidetouchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
