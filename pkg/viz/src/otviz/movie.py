"""Assemble rendered frames into an animated GIF."""

import os
import re
from typing import List, Optional

from PIL import Image

_PNG_NAME = re.compile(r"^frame_(\d+)\.png$")


def _ordered_pngs(frames_dir: str) -> List[str]:
    found = []
    for name in os.listdir(frames_dir):
        m = _PNG_NAME.match(name)
        if m:
            found.append((int(m.group(1)), os.path.join(frames_dir, name)))
    return [path for _, path in sorted(found)]


def assemble_movie(frames_dir: str, fps: float = 5.0,
                   out_path: Optional[str] = None) -> str:
    """Compose frame_####.png files, in index order, into one GIF."""
    if fps <= 0:
        raise ValueError("fps must be positive")
    paths = _ordered_pngs(frames_dir)
    if not paths:
        raise ValueError(f"no rendered frames in {frames_dir}")
    if out_path is None:
        out_path = os.path.join(frames_dir, "movie.gif")
    images = [Image.open(p).convert("RGB") for p in paths]
    images[0].save(out_path, save_all=True, append_images=images[1:],
                   duration=round(1000.0 / fps), loop=0)
    return out_path
