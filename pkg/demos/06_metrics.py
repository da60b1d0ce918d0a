"""The evaluation metric suite.

Evaluates a deliberately flawed prediction against ground truth and walks
through what each metric says, including the empty-class policy and the
per-object averages.
"""

import numpy as np

import partgraph as pg


def main():
    mapping = pg.PartsToObjectsMapping(
        (0, 1, 3, 4),
        object_names=("background", "animal", "crate"),
        part_names=("background", "animal_head", "animal_body", "crate"))
    label_set = pg.LabelSet(mapping)

    gt = np.zeros((12, 12), dtype=np.int32)
    gt[2:5, 2:10] = 1    # animal_head
    gt[5:10, 2:10] = 2   # animal_body
    gt_map = pg.LabelMap(gt, num_classes=4)

    # the prediction eats into the head and never predicts the crate (which
    # is absent from the ground truth too)
    pred = gt.copy()
    pred[4, 2:10] = 2
    pred[2, 2:4] = 0
    pred_map = pg.LabelMap(pred, num_classes=4)

    cm = pg.confusion(pred_map, gt_map, label_set.num_parts)
    result = pg.report(cm, label_set)

    print("per part:")
    for i, name in enumerate(mapping.part_names):
        iou = result.per_class_iou[i]
        pa = result.per_class_pa[i]
        iou_s = "   skipped" if not np.isfinite(iou) else f"IoU={iou:.3f}"
        pa_s = "" if not np.isfinite(pa) else f" PA={pa:.3f}"
        print(f"  {name:<12} {iou_s}{pa_s}")
    print("the crate appears in neither map, so it is excluded from the means")

    print(f"mIoU={result.miou:.4f}  mPA={result.mpa:.4f}  mCA={result.mca:.4f}")
    print(f"mIoU without background: {result.miou_without_background:.4f}")
    for j, name in enumerate(mapping.object_names):
        v = result.per_object_miou[j]
        print(f"  object {name:<12} mIoU "
              f"{'skipped' if not np.isfinite(v) else format(v, '.4f')}")
    print(f"average of per-object mIoUs: {result.object_avg:.4f}")

    # accumulation over a split equals evaluation of the concatenated pixels
    half1 = pg.confusion(pg.LabelMap(pred[:6]), pg.LabelMap(gt[:6]), 4)
    half2 = pg.confusion(pg.LabelMap(pred[6:]), pg.LabelMap(gt[6:]), 4)
    merged = pg.report(half1 + half2, label_set)
    print("accumulate-then-report equals report-on-everything:",
          merged.miou == result.miou)


if __name__ == "__main__":
    main()
