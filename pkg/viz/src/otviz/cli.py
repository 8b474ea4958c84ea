"""Command line entry points: render, movie, plot."""

import argparse
import logging
import sys

from otviz import convergence, frames, movie


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="otviz", description="Render transport-map run directories.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="one PNG per frame CSV")
    p_render.add_argument("run_dir")
    p_render.add_argument("--out", default=None,
                          help="output directory (default <run_dir>_viz)")
    p_render.add_argument("--point-size", type=float, default=None)
    p_render.add_argument("--dpi", type=int, default=None)

    p_movie = sub.add_parser("movie", help="assemble frames into a GIF")
    p_movie.add_argument("run_dir")
    p_movie.add_argument("--fps", type=float, default=5.0)
    p_movie.add_argument("--out", default=None,
                         help="output file (default <frames>/movie.gif)")
    p_movie.add_argument("--frames-dir", default=None,
                         help="where rendered PNGs live or should go")

    p_plot = sub.add_parser("plot", help="overlay convergence curves")
    p_plot.add_argument("metrics", nargs="+")
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--log", action="store_true",
                        help="log-scale the eps2 axis")
    return parser


def _style(args) -> frames.Style:
    style = frames.Style()
    if args.point_size is not None:
        style.point_size = args.point_size
    if args.dpi is not None:
        style.dpi = args.dpi
    return style


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "render":
            written = frames.render_frames(args.run_dir, args.out,
                                           _style(args))
            print(f"rendered {len(written)} frames")
            if not written:
                return 1
        elif args.command == "movie":
            frames_dir = args.frames_dir
            if frames_dir is None:
                frames_dir = args.run_dir.rstrip("/\\") + "_viz"
            rendered = frames.render_frames(args.run_dir, frames_dir)
            out = movie.assemble_movie(frames_dir, args.fps, args.out)
            print(f"wrote {out} ({len(rendered)} frames at {args.fps} fps)")
        else:
            plotted = convergence.plot_convergence(args.metrics, args.out,
                                                   log_scale=args.log)
            print(f"plotted {len(plotted)} series to {args.out}")
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
