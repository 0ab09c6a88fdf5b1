"""Command-line front end chaining the library pipelines.

Subcommands: embed, score, filter, select, cka, augment, hdh, bound,
synth, check. Reports are deterministic JSON (sorted keys, no
timestamps) and embed the resolved configuration, so a re-run with the
same flags and inputs is byte-identical. Exit codes: 0 success, 1 usage
error (bad flags or values), 2 data or format error (unreadable or
malformed input files, failed self-checks).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cfs, divergence, selection, stems
from .encoder import encoder_backward, encoder_forward, encoder_forward_cached, init_params
from .errors import FormatError, RangeError
from .formats import (
    read_embeddings,
    read_image_ppm,
    read_report,
    report_bytes,
    write_embeddings,
    write_image_ppm,
    write_report,
)
from .invariance import (
    AUGMENTATION_KINDS,
    DEFAULT_MAGNITUDES,
    AugmentationSpec,
    augment,
    batch_from_images,
    invariance_report,
)
from .pipeline import compare_on_synth_corpus, default_vit_config, embed_images
from .synth import ShiftSpec, synth_corpus

# fixed probe for `check`: seed verified to keep every pre-relu activation
# of every stem variant well away from zero, where finite differences
# straddle the kink and stop approximating the analytic gradient
CHECK_PROBE_SEED = 5
CHECK_IDENTITY_PAIRS = 10_000
CHECK_EQUIVALENCE_PAIRS = 1_000
CHECK_COORDS_PER_TENSOR = 3
CHECK_FD_STEP = 1e-4
CHECK_GRAD_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit code 2; this CLI reserves 2 for
    data errors, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit_report(args, tool: str, config: dict, results) -> None:
    if getattr(args, "out", None):
        write_report(args.out, tool, config, results)
    else:
        sys.stdout.buffer.write(report_bytes(tool, config, results))


def _load_images(paths: list[str]) -> tuple[np.ndarray, list[str]]:
    images = []
    ids = []
    for raw in paths:
        path = Path(raw)
        images.append(read_image_ppm(path))
        ids.append(path.stem)
    shapes = {img.shape for img in images}
    if len(shapes) > 1:
        raise RangeError(f"images disagree on shape: {sorted(shapes)}")
    return np.stack(images), ids


def _table_entries(table: cfs.ScoreTable) -> list[dict]:
    return [
        {"id": e.id, "rank": e.rank, "score": e.score}
        for e in table.entries
    ]


def _table_from_report(document: dict, path) -> cfs.ScoreTable:
    try:
        rows = document["results"]["entries"]
        entries = [
            cfs.ScoreEntry(id=row["id"], score=float(row["score"]), rank=int(row["rank"]))
            for row in rows
        ]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: not a score report (missing {exc})") from exc
    return cfs.ScoreTable(entries)


def _cmd_embed(args) -> int:
    images, ids = _load_images(args.images)
    config = default_vit_config(args.stem, images.shape[1:3])
    params = init_params(args.seed, config)
    embedded = embed_images(images, ids, config, params)
    write_embeddings(embedded, args.out)
    return 0


def _cmd_score(args) -> int:
    by_source = read_embeddings(args.by_source)
    by_target = read_embeddings(args.by_target)
    table = cfs.score_corpus(by_source, by_target)
    config = {"by_source": str(args.by_source), "by_target": str(args.by_target)}
    _emit_report(args, "score", config, {"entries": _table_entries(table)})
    return 0


def _cmd_filter(args) -> int:
    table = _table_from_report(read_report(args.scores), args.scores)
    if args.n_prime is not None:
        n_prime = args.n_prime
    else:
        n_prime = cfs.count_for_ratio(len(table), args.ratio)
    selected = cfs.filter_top(table, n_prime)
    config = {
        "scores": str(args.scores),
        "ratio": args.ratio,
        "n_prime": args.n_prime,
    }
    _emit_report(args, "filter", config,
                 {"n_prime": n_prime, "selected_ids": selected})
    return 0


def _shift_from_args(args) -> ShiftSpec:
    return ShiftSpec(
        brightness_offset=args.brightness,
        hue_rotation=args.hue,
        noise_sigma=args.noise,
    )


def _cmd_select(args) -> int:
    corpus = synth_corpus(args.seed, args.n_per_domain, args.height, args.width,
                          _shift_from_args(args),
                          extreme_fraction=args.extreme_fraction)
    configs = [
        selection.SelectionConfig("random", args.ratio, seed=args.seed),
        selection.SelectionConfig("cluster", args.ratio, seed=args.seed, k=args.k),
        selection.SelectionConfig("cfs", args.ratio),
    ]
    reports = compare_on_synth_corpus(corpus, configs, proxy_seed=args.seed,
                                      stem_variant=args.stem)
    config = {
        "seed": args.seed,
        "stem": args.stem,
        "ratio": args.ratio,
        "k": args.k,
        "n_per_domain": args.n_per_domain,
        "height": args.height,
        "width": args.width,
        "brightness": args.brightness,
        "hue": args.hue,
        "noise": args.noise,
        "extreme_fraction": args.extreme_fraction,
    }
    results = [
        {
            "strategy": r.strategy,
            "mean_cfs": r.mean_cfs,
            "mean_nearest_target_cosine": r.mean_nearest_target_cosine,
            "delta_mean_cfs": r.delta_mean_cfs,
            "delta_nearest_target": r.delta_nearest_target,
            "selected_ids": r.selected_ids,
        }
        for r in reports
    ]
    _emit_report(args, "select", config, {"strategies": results})
    return 0


def _parse_kinds(raw: str | None) -> list[AugmentationSpec]:
    if raw is None:
        kinds = list(AUGMENTATION_KINDS)
    else:
        kinds = [k.strip() for k in raw.split(",") if k.strip()]
        if not kinds:
            raise RangeError("--kinds must name at least one augmentation")
    # unknown kinds fail AugmentationSpec validation with a usage error
    return [AugmentationSpec(kind, DEFAULT_MAGNITUDES.get(kind, 0.0)) for kind in kinds]


def _cmd_cka(args) -> int:
    images, ids = _load_images(args.images)
    specs = _parse_kinds(args.kinds)
    config_model = default_vit_config(args.stem, images.shape[1:3])
    params = init_params(args.seed, config_model)
    report = invariance_report(
        config_model, params, images, specs,
        model_id=f"{args.stem}:{args.seed}",
        corpus_id=f"{len(ids)} images",
    )
    config = {
        "seed": args.seed,
        "stem": args.stem,
        "images": [str(p) for p in args.images],
        "kinds": [s.kind for s in specs],
    }
    results = {
        "model_id": report.model_id,
        "corpus_id": report.corpus_id,
        "entries": [
            {"kind": e.kind, "magnitude": e.magnitude, "score": e.score}
            for e in report.entries
        ],
    }
    _emit_report(args, "cka", config, results)
    return 0


def _cmd_augment(args) -> int:
    magnitude = args.magnitude
    if magnitude is None:
        magnitude = DEFAULT_MAGNITUDES[args.kind]
    image = read_image_ppm(args.image)
    write_image_ppm(augment(image, AugmentationSpec(args.kind, magnitude)), args.out)
    return 0


def _cmd_hdh(args) -> int:
    u1 = read_embeddings(args.samples1).features
    u2 = read_embeddings(args.samples2).features
    if u1.shape[0] == 0 or u2.shape[0] == 0:
        raise RangeError("sample sets must be nonempty")
    klass = divergence.build_stumps(
        np.vstack([u1, u2]), max_thresholds_per_dim=args.max_thresholds
    )
    value = divergence.hdh_empirical(u1, u2, klass)
    config = {
        "samples1": str(args.samples1),
        "samples2": str(args.samples2),
        "max_thresholds": args.max_thresholds,
    }
    _emit_report(args, "hdh", config,
                 {"d_hdh": value, "hypothesis_count": len(klass)})
    return 0


def _cmd_bound(args) -> int:
    inputs = divergence.BoundInputs(
        d_hdh=args.d_hdh,
        f_hat_t=args.f_hat_t,
        f_t_star=args.f_t_star,
        f_s_star=args.f_s_star,
        vc_dim=args.vc_dim,
        n=args.n,
        delta=args.delta,
    )
    config = {
        "d_hdh": args.d_hdh, "f_hat_t": args.f_hat_t, "f_t_star": args.f_t_star,
        "f_s_star": args.f_s_star, "vc_dim": args.vc_dim, "n": args.n,
        "delta": args.delta,
    }
    results = {
        "rhs": divergence.erb_bound_rhs(inputs),
        "interpretation_notes": list(divergence.INTERPRETATION_NOTES),
    }
    _emit_report(args, "bound", config, results)
    return 0


def _cmd_synth(args) -> int:
    corpus = synth_corpus(args.seed, args.n_per_domain, args.height, args.width,
                          _shift_from_args(args),
                          extreme_fraction=args.extreme_fraction)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for ids, batch in ((corpus.source_ids, corpus.source_images),
                       (corpus.target_ids, corpus.target_images)):
        for record_id, image in zip(ids, batch):
            write_image_ppm(image, out_dir / f"{record_id}.ppm")
    config = {
        "seed": args.seed,
        "n_per_domain": args.n_per_domain,
        "height": args.height,
        "width": args.width,
        "brightness": args.brightness,
        "hue": args.hue,
        "noise": args.noise,
        "extreme_fraction": args.extreme_fraction,
    }
    results = {
        "source_ids": corpus.source_ids,
        "target_ids": corpus.target_ids,
        "extreme_ids": corpus.extreme_ids,
    }
    write_report(out_dir / "manifest.json", "synth", config, results)
    return 0


def _identity_self_test(rng) -> dict:
    u = rng.normal(size=(CHECK_IDENTITY_PAIRS, 16))
    v = rng.normal(size=(CHECK_IDENTITY_PAIRS, 16))
    un = u / np.linalg.norm(u, axis=1, keepdims=True)
    vn = v / np.linalg.norm(v, axis=1, keepdims=True)
    c = np.einsum("nd,nd->n", un, vn)
    d = np.linalg.norm(vn - un, axis=1)
    residuals = np.abs(d**2 - (2.0 - 2.0 * c))
    violations = 0
    for epsilon in np.arange(0.1, 0.95, 0.1):
        threshold = cfs.theorem_threshold(float(epsilon))
        idx = rng.integers(0, CHECK_IDENTITY_PAIRS, size=CHECK_EQUIVALENCE_PAIRS)
        violations += int(np.sum(
            (c[idx] >= threshold) != (d[idx] <= epsilon / 2.0)
        ))
    return {
        "max_residual": float(residuals.max()),
        "equivalence_violations": violations,
    }


def _gradient_self_test(variant: str) -> float:
    rng = np.random.default_rng(CHECK_PROBE_SEED)
    config = default_vit_config(variant, (8, 8), embed_dim=16, depth=1,
                                heads=2, patch_stride=8)
    params = init_params(CHECK_PROBE_SEED, config)
    images = rng.uniform(0.05, 0.95, size=(2, 3, 8, 8))
    weight = rng.normal(size=(2, config.embed_dim))

    def loss(p):
        return float(np.sum(encoder_forward(images, config, p) * weight))

    features, cache = encoder_forward_cached(images, config, params)
    grads = encoder_backward(weight, cache, params)

    worst = 0.0
    for key in sorted(params):
        tensor = params[key]
        flat = tensor.reshape(-1)
        picks = rng.choice(flat.size, size=min(CHECK_COORDS_PER_TENSOR, flat.size),
                           replace=False)
        for coord in picks:
            original = flat[coord]
            flat[coord] = original + CHECK_FD_STEP
            up = loss(params)
            flat[coord] = original - CHECK_FD_STEP
            down = loss(params)
            flat[coord] = original
            fd = (up - down) / (2.0 * CHECK_FD_STEP)
            analytic = grads.param_grads[key].reshape(-1)[coord]
            scale = max(abs(fd), abs(analytic), 1e-6)
            worst = max(worst, abs(fd - analytic) / scale)
    return worst


def _cmd_check(args) -> int:
    rng = np.random.default_rng(CHECK_PROBE_SEED)
    identity = _identity_self_test(rng)
    gradients = {variant: _gradient_self_test(variant) for variant in stems.VARIANTS}
    passed = (
        identity["max_residual"] <= 1e-10
        and identity["equivalence_violations"] == 0
        and all(v <= CHECK_GRAD_TOLERANCE for v in gradients.values())
    )
    results = {
        "identity": identity,
        "gradient_max_relative_error": gradients,
        "gradient_tolerance": CHECK_GRAD_TOLERANCE,
        "passed": passed,
    }
    _emit_report(args, "check", {"probe_seed": CHECK_PROBE_SEED}, results)
    if not passed:
        print("self-check failed", file=sys.stderr)
        return 2
    return 0


def _add_out(parser, required=False, help_text="output path (default: stdout)"):
    parser.add_argument("--out", required=required, help=help_text)


def _add_corpus_flags(parser):
    parser.add_argument("--n-per-domain", type=int, default=16)
    parser.add_argument("--height", type=int, default=32)
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--brightness", type=float, default=0.0,
                        help="target-domain channel offset")
    parser.add_argument("--hue", type=float, default=0.0,
                        help="target-domain hue rotation in radians")
    parser.add_argument("--noise", type=float, default=0.0,
                        help="target-domain pixel noise sigma")
    parser.add_argument("--extreme-fraction", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cfs-curate",
                     description="Feature-similarity data curation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="encode PPM images into an embedding file")
    p.add_argument("images", nargs="+", help="input .ppm images; ids are file stems")
    p.add_argument("--stem", choices=stems.VARIANTS, default="patchify")
    p.add_argument("--seed", type=int, default=0)
    _add_out(p, required=True, help_text="output embedding file")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("score", help="rank records by feature-similarity score")
    p.add_argument("by_source", help="embedding file under the source proxy")
    p.add_argument("by_target", help="embedding file under the target proxy")
    _add_out(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("filter", help="keep the top-scored ids from a score report")
    p.add_argument("scores", help="score report JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ratio", type=float, default=None)
    group.add_argument("--n-prime", type=int, default=None)
    _add_out(p)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("select", help="compare selection strategies on a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stem", choices=stems.VARIANTS, default="patchify")
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--k", type=int, default=16)
    _add_corpus_flags(p)
    _add_out(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("cka", help="feature-stability scores under augmentations")
    p.add_argument("images", nargs="+", help="corpus .ppm images")
    p.add_argument("--stem", choices=stems.VARIANTS, default="patchify")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kinds", default=None,
                   help="comma-separated augmentation kinds (default: all six)")
    _add_out(p)
    p.set_defaults(func=_cmd_cka)

    p = sub.add_parser("augment", help="apply one augmentation to a PPM image")
    p.add_argument("image")
    p.add_argument("--kind", choices=AUGMENTATION_KINDS, required=True)
    p.add_argument("--magnitude", type=float, default=None,
                   help="default: the per-kind default magnitude")
    _add_out(p, required=True, help_text="output .ppm path")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("hdh", help="empirical divergence between two sample sets")
    p.add_argument("samples1", help="embedding file")
    p.add_argument("samples2", help="embedding file")
    p.add_argument("--max-thresholds", type=int, default=16)
    _add_out(p)
    p.set_defaults(func=_cmd_hdh)

    p = sub.add_parser("bound", help="evaluate the excess-risk bound right-hand side")
    p.add_argument("--d-hdh", type=float, required=True)
    p.add_argument("--f-hat-t", type=float, required=True)
    p.add_argument("--f-t-star", type=float, required=True)
    p.add_argument("--f-s-star", type=float, required=True)
    p.add_argument("--vc-dim", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    _add_out(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("synth", help="generate the synthetic two-domain corpus")
    p.add_argument("--seed", type=int, default=0)
    _add_corpus_flags(p)
    _add_out(p, required=True, help_text="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("check", help="run identity and gradient self-tests")
    _add_out(p)
    p.set_defaults(func=_cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"cfs-curate: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cfs-curate: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"cfs-curate: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
