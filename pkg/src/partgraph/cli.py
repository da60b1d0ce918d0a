"""Command-line interface.

Subcommands: dilate, graph, loss, metrics, train-toy, synth. Results go to
stdout (or ``--out``/``--trace`` files); diagnostics go to stderr. Exit
codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.

Identical invocations produce byte-identical output. ``--threads`` is an
upper bound on internal worker threads; the current implementation runs each
command on a single thread, so the bound never changes results.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .adjacency import AdjacencyConfig, adjacency_from_labels, normalize_rows
from .condnet import EmbeddingConfig, ToyNetConfig, mean_gm_loss, train_toy
from .core import LabelMap, LabelSet, one_hot
from .errors import DomainError, NumericError
from .formats import (
    FORMAT_VERSION,
    load_labelset,
    load_map,
    load_probmap,
    save_labelset,
    save_map,
    save_params,
    save_ppm,
    save_probmap,
    save_segmap,
)
from .losses import LossWeights, total_loss
from .metrics import confusion, report
from .morphology import BinaryMask, StructuringElement, dilate
from .synth import SceneSpec, generate, generate_dataset


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _write_result(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _matrix_csv(entries: np.ndarray) -> str:
    lines = [",".join(f"{v:.9g}" for v in row) for row in entries]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_dilate(args) -> int:
    label_map = load_map(args.infile)
    mask = BinaryMask(label_map.labels != 0)
    grown = dilate(mask, StructuringElement(args.shape, args.radius))
    out_map = LabelMap(grown.bits.astype(np.int32), num_classes=2)
    save_map(out_map, args.out)
    return 0


def _adjacency_config(args) -> AdjacencyConfig:
    method = {"dilate": "dilate_intersect", "exact": "exact_distance"}[args.method]
    return AdjacencyConfig(
        distance_threshold=4 if args.T is None else args.T,
        element_shape=args.element or "square",
        method=method,
        weighting="unweighted" if args.unweighted else "weighted",
        include_background=not args.no_background,
        soft_mode=args.soft_mode or "smooth_max",
        beta=20.0 if args.beta is None else args.beta,
    )


def _cmd_graph(args) -> int:
    label_map = load_map(args.infile)
    cfg = _adjacency_config(args)
    matrix = adjacency_from_labels(label_map, args.parts, cfg)
    if args.normalized:
        matrix = normalize_rows(matrix)
    if args.format == "json":
        doc = {"size": matrix.size, "kind": matrix.kind,
               "entries": [[float(v) for v in row] for row in matrix.entries]}
        _write_result(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        _write_result(_matrix_csv(matrix.entries), args.out)
    return 0


def _cmd_loss(args) -> int:
    pred = load_probmap(args.pred)
    gt_parts = load_map(args.gt)
    label_set = load_labelset(args.mapping)
    gt_objects = load_map(args.gt_objects) if args.gt_objects else None
    cfg = _adjacency_config(args)
    weights = LossWeights(lambda1=1e-3 if args.lambda1 is None else args.lambda1,
                          lambda2=0.1 if args.lambda2 is None else args.lambda2)
    result, _ = total_loss(pred, gt_parts, gt_objects, label_set.mapping, cfg, weights)
    if not np.isfinite(result.total):
        raise NumericError(f"loss is not finite: {result}")
    if args.json:
        doc = {"ce": result.ce, "rec": result.rec, "gm": result.gm, "total": result.total}
        _write_result(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        text = (f"ce    {result.ce:.9g}\nrec   {result.rec:.9g}\n"
                f"gm    {result.gm:.9g}\ntotal {result.total:.9g}\n")
        _write_result(text, args.out)
    return 0


def _cmd_metrics(args) -> int:
    label_set = load_labelset(args.labelset)
    pred_dir, gt_dir = Path(args.pred_dir), Path(args.gt_dir)
    names = sorted(p.name for p in pred_dir.glob("*.segmap"))
    gt_names = sorted(p.name for p in gt_dir.glob("*.segmap"))
    if not names:
        raise DomainError(f"no .segmap files in {pred_dir}")
    if names != gt_names:
        raise DomainError("prediction and ground-truth directories hold different file names")
    total = None
    for name in names:
        cm = confusion(load_map(pred_dir / name), load_map(gt_dir / name), label_set.num_parts)
        total = cm if total is None else total + cm
    result = report(total, label_set)
    if args.format == "csv":
        lines = ["index,name,iou,pa"]
        part_names = label_set.mapping.part_names or [f"part_{i}" for i in range(label_set.num_parts)]
        for i in range(label_set.num_parts):
            iou = result.per_class_iou[i]
            pa = result.per_class_pa[i]
            lines.append(f"{i},{part_names[i]},"
                         f"{'' if not np.isfinite(iou) else format(iou, '.9g')},"
                         f"{'' if not np.isfinite(pa) else format(pa, '.9g')}")
        for key in ("miou", "mpa", "mca", "object_avg",
                    "miou_with_background", "miou_without_background"):
            lines.append(f"{key},,{format(getattr(result, key), '.9g')},")
        _write_result("\n".join(lines) + "\n", args.out)
    else:
        _write_result(json.dumps(result.to_dict(), indent=2) + "\n", args.out)
    return 0


def _load_train_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"malformed config JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DomainError("train-toy config must be a JSON object")
    return doc


def _cmd_train_toy(args) -> int:
    doc = _load_train_config(args.config)

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return doc.get(key, default)

    scene_doc = {k: tuple(v) if isinstance(v, list) else v
                 for k, v in doc.get("scene", {}).items()}
    spec = SceneSpec(**scene_doc)
    net_doc = dict(doc.get("net", {}))
    if "embedding" in net_doc:
        net_doc["embedding"] = EmbeddingConfig(**{
            k: tuple(v) for k, v in net_doc["embedding"].items()})
    net_kwargs = {
        "num_stages": net_doc.get("stages", 2),
        "encoder_channels": tuple(net_doc.get("encoder_channels", (8, 16))),
        "decoder_channels": tuple(net_doc.get("decoder_channels", (16, 8))),
        "conditioning": args.conditioning or net_doc.get("conditioning", "multi"),
    }
    if "embedding" in net_doc:
        net_kwargs["embedding"] = net_doc["embedding"]
    else:
        net_kwargs["embedding"] = EmbeddingConfig.toy(net_kwargs["num_stages"])
    net = ToyNetConfig(**net_kwargs)

    cfg = AdjacencyConfig(
        distance_threshold=pick(args.T, "T", 4),
        element_shape=pick(args.element, "element", "square"),
        weighting="unweighted" if args.unweighted else doc.get("weighting", "weighted"),
        soft_mode=pick(args.soft_mode, "soft_mode", "smooth_max"),
        beta=pick(args.beta, "beta", 20.0),
    )
    weights = LossWeights(lambda1=pick(args.lambda1, "lambda1", 1e-3),
                          lambda2=pick(args.lambda2, "lambda2", 0.1))
    steps = pick(args.steps, "steps", 200)
    lr = pick(args.lr, "lr", 5e-3)
    seed = pick(args.seed, "seed", 7)
    num_train = doc.get("train_scenes", 20)
    num_heldout = doc.get("heldout_scenes", 0)

    scenes, mapping = generate_dataset(spec, num_train + num_heldout)
    train_scenes, heldout = scenes[:num_train], scenes[num_train:]
    params, trace = train_toy(train_scenes, mapping, net, weights, cfg, steps, lr, seed=seed)

    if args.trace:
        lines = ["step,ce,rec,gm,total"]
        for t, rep in enumerate(trace):
            lines.append(f"{t},{rep.ce:.9g},{rep.rec:.9g},{rep.gm:.9g},{rep.total:.9g}")
        Path(args.trace).write_text("\n".join(lines) + "\n")
    if args.params:
        save_params(params, args.params)

    summary = {
        "steps": steps,
        "scenes": num_train,
        "initial_total": trace[0].total,
        "final_total": trace[-1].total,
        "final_ce": trace[-1].ce,
        "final_rec": trace[-1].rec,
        "final_gm": trace[-1].gm,
    }
    if heldout:
        summary["heldout_gm"] = mean_gm_loss(heldout, mapping, net, params, cfg)
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


def _cmd_synth(args) -> int:
    if args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise DomainError(f"malformed scene spec JSON in {args.spec}: {exc}") from exc
        doc = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        spec = SceneSpec(**doc)
    else:
        spec = SceneSpec()
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    mapping = spec.mapping()
    save_labelset(LabelSet(mapping), out_dir / "labelset.json")
    written = ["labelset.json"]
    for i in range(args.count):
        parts, objects, _, rgb = generate(replace(spec, seed=spec.seed + i))
        stem = f"scene_{i:04d}"
        save_segmap(parts, out_dir / f"{stem}.parts.segmap")
        save_probmap(one_hot(objects, mapping.num_objects), out_dir / f"{stem}.objects.probmap")
        save_ppm(rgb, out_dir / f"{stem}.ppm")
        written += [f"{stem}.parts.segmap", f"{stem}.objects.probmap", f"{stem}.ppm"]
    sys.stdout.write("\n".join(written) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="partgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"partgraph {__version__} "
                                f"(formats: SEGM v{FORMAT_VERSION}, PROB v{FORMAT_VERSION}, "
                                f"TPRM v{FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="upper bound on worker threads (execution is single-threaded)")

    p = sub.add_parser("dilate", parents=[common], help="dilate the nonzero pixels of a label map")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, required=True)
    p.add_argument("--shape", choices=["square", "diamond"], default="square")
    p.set_defaults(func=_cmd_dilate)

    def add_graph_options(p):
        p.add_argument("--T", type=int, default=None, help="distance threshold in pixels")
        p.add_argument("--element", choices=["square", "diamond"], default=None)
        p.add_argument("--method", choices=["dilate", "exact"], default="dilate")
        p.add_argument("--unweighted", action="store_true")
        p.add_argument("--no-background", action="store_true")
        p.add_argument("--soft-mode", dest="soft_mode",
                       choices=["hard_max", "smooth_max"], default=None)
        p.add_argument("--beta", type=float, default=None)

    p = sub.add_parser("graph", parents=[common], help="part-adjacency matrix of a label map")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--parts", type=int, required=True)
    add_graph_options(p)
    p.add_argument("--normalized", action="store_true", help="emit proximity ratios")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("loss", parents=[common], help="evaluate the training losses")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--gt-objects", dest="gt_objects", default=None)
    p.add_argument("--mapping", required=True)
    add_graph_options(p)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("metrics", parents=[common], help="evaluate predictions against ground truth")
    p.add_argument("--pred-dir", dest="pred_dir", required=True)
    p.add_argument("--gt-dir", dest="gt_dir", required=True)
    p.add_argument("--labelset", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--json", dest="format", action="store_const", const="json")
    group.add_argument("--csv", dest="format", action="store_const", const="csv")
    p.set_defaults(format="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("train-toy", parents=[common], help="gradient descent on synthetic scenes")
    p.add_argument("--config", default=None, help="JSON config; flags win over its values")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lambda1", type=float, default=None)
    p.add_argument("--lambda2", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--conditioning", choices=["multi", "single", "off"], default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--element", choices=["square", "diamond"], default=None)
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--soft-mode", dest="soft_mode",
                   choices=["hard_max", "smooth_max"], default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--trace", default=None, help="write the per-step loss trace CSV here")
    p.add_argument("--params", default=None, help="write the trained parameters here")
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic scene files")
    p.add_argument("--spec", default=None, help="scene spec JSON")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        sys.stderr.write("partgraph: error: a subcommand is required\n")
        return 1
    try:
        return args.func(args)
    except DomainError as exc:
        sys.stderr.write(f"partgraph {args.command}: {exc}\n")
        return 2
    except NumericError as exc:
        sys.stderr.write(f"partgraph {args.command}: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"partgraph {args.command}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
