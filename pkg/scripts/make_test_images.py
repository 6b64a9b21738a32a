"""Regenerate the bundled 256x256 test images from scikit-image's sample data.

The three photographs ship with scikit-image under permissive licences
(astronaut: NASA, public domain; chelsea and coffee: CC0). Run once; the
PNGs are committed under src/zsn2n/data.
"""

from pathlib import Path

import numpy as np
import skimage.data
from PIL import Image

OUT = Path(__file__).resolve().parents[1] / "src" / "zsn2n" / "data"
SIZE = 256


def crop(a, size=SIZE):
    h, w = a.shape[:2]
    t, l = (h - size) // 2, (w - size) // 2
    return a[t : t + size, l : l + size]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name in ("astronaut", "chelsea", "coffee"):
        img = np.ascontiguousarray(crop(getattr(skimage.data, name)()))
        Image.fromarray(img, "RGB").save(OUT / f"{name}.png")
        print(OUT / f"{name}.png", img.shape)


if __name__ == "__main__":
    main()
