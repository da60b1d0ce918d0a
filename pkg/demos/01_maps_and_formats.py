"""Label maps, probability maps, and the file formats.

Builds a tiny part map, walks through one-hot encoding, the parts-to-objects
projection, and round-trips through the SEGM and PGM formats.
"""

import tempfile
from pathlib import Path

import numpy as np

import partgraph as pg


def show(label_map, title):
    print(f"{title}:")
    for row in label_map.labels:
        print("  " + " ".join(str(v) for v in row))


def main():
    parts = pg.LabelMap(np.array([
        [0, 0, 0, 0, 0, 0],
        [0, 1, 1, 2, 2, 0],
        [0, 1, 1, 2, 2, 0],
        [0, 3, 3, 3, 3, 0],
        [0, 0, 0, 0, 0, 0],
    ], dtype=np.int32), num_classes=4)
    show(parts, "part labels (0 is background)")

    # object 1 owns parts 1 and 2, object 2 owns part 3
    mapping = pg.PartsToObjectsMapping((0, 1, 3, 4))
    objects = pg.project_labels(parts, mapping)
    show(objects, "projected object labels")

    probs = pg.one_hot(parts, 4)
    print(f"one-hot probability map: {probs.height}x{probs.width}x{probs.num_classes}, "
          f"channel sums all {probs.probs.sum(axis=2).min():.0f}")
    back = pg.argmax_map(probs)
    print("argmax recovers the original map:", np.array_equal(back.labels, parts.labels))

    summed = pg.sum_probability(probs, mapping)
    print("sum over part channels reproduces the object one-hot:",
          np.array_equal(pg.argmax_map(summed).labels, objects.labels))

    with tempfile.TemporaryDirectory() as tmp:
        seg = Path(tmp) / "parts.segmap"
        pgm = Path(tmp) / "parts.pgm"
        pg.save_map(parts, seg)
        pg.save_map(parts, pgm)
        print(f"SEGM file is {seg.stat().st_size} bytes "
              f"(17-byte header + {parts.width * parts.height} u16 labels)")
        for path in (seg, pgm):
            again = pg.load_map(path)
            print(f"round trip through {path.suffix}: "
                  f"{np.array_equal(again.labels, parts.labels)}")


if __name__ == "__main__":
    main()
