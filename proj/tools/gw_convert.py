#!/usr/bin/env python3
"""Convert George Washington word annotations into rphoc's `<id>.gt` layout.

Input lines are expected as `x1 y1 x2 y2 transcription` with 0-indexed,
top-left-origin corners and an inclusive bottom-right corner (the common
`.gtp` layout). Other distributions need their own reader; add one below.

    python3 tools/gw_convert.py SRC_DIR DST_DIR

Every `<id>.gtp` in SRC_DIR becomes DST_DIR/<id>.gt. The matching page image
(`.png`, `.pgm`, `.tif`, `.tiff`, `.jpg`) is copied, or converted to PNG
with Pillow when it is not already PNG/PGM.
"""

import pathlib
import shutil
import sys

IMAGE_SUFFIXES = (".png", ".pgm", ".tif", ".tiff", ".jpg")


def read_gtp(path):
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(maxsplit=4)
        if len(parts) < 5:
            raise SystemExit(f"{path}:{lineno}: expected 'x1 y1 x2 y2 word'")
        x1, y1, x2, y2 = (int(v) for v in parts[:4])
        yield x1, y1, x2 - x1 + 1, y2 - y1 + 1, parts[4].strip()


def copy_image(stem, src_dir, dst_dir):
    for suffix in IMAGE_SUFFIXES:
        src = src_dir / (stem + suffix)
        if not src.exists():
            continue
        if suffix in (".png", ".pgm"):
            shutil.copy(src, dst_dir / src.name)
        else:
            from PIL import Image

            Image.open(src).convert("L").save(dst_dir / (stem + ".png"))
        return
    raise SystemExit(f"no page image for {stem} in {src_dir}")


def main(argv):
    if len(argv) != 3:
        raise SystemExit(__doc__)
    src_dir, dst_dir = pathlib.Path(argv[1]), pathlib.Path(argv[2])
    dst_dir.mkdir(parents=True, exist_ok=True)
    pages = sorted(src_dir.glob("*.gtp"))
    for gtp in pages:
        rows = [f"{x} {y} {w} {h} {word}" for x, y, w, h, word in read_gtp(gtp)]
        (dst_dir / (gtp.stem + ".gt")).write_text("\n".join(rows) + ("\n" if rows else ""))
        copy_image(gtp.stem, src_dir, dst_dir)
    print(f"converted {len(pages)} pages into {dst_dir}")


if __name__ == "__main__":
    main(sys.argv)
