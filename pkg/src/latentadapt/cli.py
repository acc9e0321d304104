"""Command-line interface: gen, fit, adapt, sweep, report.

Exit codes: 0 success, 1 usage or config error, 2 data or contract error,
3 convergence error. A flat key=value config file can supply any long flag;
explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import datagen, fileio, report
from .adapt import AdaptationConfig, adapt
from .cmaes import default_lambda
from .errors import ContractViolation, ConvergenceFailure, DataFormatError
from .quant import FixedPointFormat
from .rng import Xoshiro256pp, derive_seed
from .subspace import fit


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract reserves 2 for data errors
    def error(self, message):
        raise UsageError(message)


def _load_config(args) -> dict[str, str]:
    if getattr(args, "config", None) is None:
        return {}
    try:
        return fileio.parse_config(args.config)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {args.config}") from exc
    except DataFormatError as exc:
        raise UsageError(str(exc)) from exc


_KEY_ATTRS = {"lambda": "lambda_"}


def _resolve(args, config: dict, key: str, default, cast):
    attr = _KEY_ATTRS.get(key, key.replace("-", "_"))
    value = getattr(args, attr, None)
    if value is not None:
        return value
    if key in config:
        try:
            return cast(config[key])
        except (ValueError, ContractViolation) as exc:
            raise UsageError(f"bad config value for {key}: {config[key]!r}") from exc
    return default


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------- gen


def _cmd_gen(args) -> int:
    config = _load_config(args)
    classes = _resolve(args, config, "classes", 10, int)
    dim = _resolve(args, config, "dim", 64, int)
    radius = _resolve(args, config, "radius", 4.0, float)
    std = _resolve(args, config, "std", 1.0, float)
    per_class = _resolve(args, config, "per-class", 200, int)
    target_per_class = _resolve(args, config, "target-per-class", 20, int)
    severity = _resolve(args, config, "severity", 1.0, float)
    seed = _resolve(args, config, "seed", 0, int)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    task = datagen.make_task(
        class_count=classes,
        dim=dim,
        mean_radius=radius,
        within_class_std=std,
        seed=seed,
    )
    train_z, train_y = datagen.gen_source(task, per_class, stream=0)
    test_z, test_y = datagen.gen_source(task, target_per_class, stream=1)
    fileio.write_features(out_dir / "source_train.latf", train_z, train_y)
    fileio.write_features(out_dir / "source_test.latf", test_z, test_y)

    source_mean = task.class_means.mean(axis=0)
    for spec in datagen.preset_shifts(dim, severity, seed, std=std):
        shifted = datagen.apply_shift(test_z, source_mean, spec)
        name = f"target_{spec.label.replace('-', '_')}.latf"
        fileio.write_features(out_dir / name, shifted, test_y)
    print(f"wrote source and target feature files to {out_dir}")
    return 0


# ---------------------------------------------------------------- fit


def _subsample(features, labels, count, seed):
    n = features.shape[0]
    if count >= n:
        return features, labels, n
    # seeded Fisher-Yates so the subsample is reproducible everywhere
    rng = Xoshiro256pp(derive_seed(seed, 0xF17))
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    keep = np.sort(idx[:count])
    return features[keep], labels[keep], count


def _empirical_decoder(features, labels):
    classes = int(labels.max()) + 1
    if classes < 2:
        raise DataFormatError("need at least 2 classes to build a decoder")
    means = np.empty((classes, features.shape[1]))
    sq_sum = 0.0
    for c in range(classes):
        rows = features[labels == c]
        if rows.shape[0] == 0:
            raise DataFormatError(f"class {c} has no source samples")
        means[c] = rows.mean(axis=0)
        sq_sum += float(np.sum((rows - means[c]) ** 2))
    var = sq_sum / (features.shape[0] * features.shape[1])
    if var <= 0.0:
        raise DataFormatError("zero within-class variance; decoder undefined")
    weights = means / var
    bias = -np.sum(means ** 2, axis=1) / (2.0 * var)
    from .decoder import LinearDecoder

    return LinearDecoder(weights=weights, bias=bias)


def _cmd_fit(args) -> int:
    config = _load_config(args)
    k = _resolve(args, config, "k", 16, int)
    n_sub = _resolve(args, config, "n", None, int)
    seed = _resolve(args, config, "seed", 0, int)

    features, labels = fileio.read_features(args.source)
    if labels is None:
        raise UsageError("fit requires a labeled source file")
    if n_sub is not None:
        if n_sub < 2:
            raise UsageError("--n must be >= 2")
        features, labels, n_used = _subsample(features, labels, n_sub, seed)
    else:
        n_used = features.shape[0]
    if k > min(n_used - 1, features.shape[1]):
        raise UsageError(
            f"k={k} exceeds min(N-1, D)={min(n_used - 1, features.shape[1])}"
        )

    subspace = fit(features, k)
    decoder = _empirical_decoder(features, labels)
    meta = {
        "k": k,
        "source_count": n_used,
        "seed": seed,
        "config_hash": fileio.fit_config_hash(args.source, k, n_used, seed),
        "rank_deficient": subspace.rank_deficient,
    }
    artifact = fileio.ModelArtifact(subspace=subspace, decoder=decoder, meta=meta)
    fileio.write_artifact(args.out, artifact)
    note = " (rank-deficient spectrum)" if subspace.rank_deficient else ""
    print(f"fitted k={k} on {n_used} samples -> {args.out}{note}")
    return 0


# ---------------------------------------------------------------- adapt


def _build_adaptation_config(args, config, artifact_k) -> tuple[str, AdaptationConfig, int]:
    mode = _resolve(args, config, "mode", "ted", str)
    if mode not in ("none", "ted", "qted-v1", "fixed"):
        raise UsageError(f"unknown mode {mode!r}")
    k = _resolve(args, config, "k", artifact_k, int)
    if not (1 <= k <= artifact_k):
        raise UsageError(f"k={k} not in [1, {artifact_k}] of the artifact")
    n = _resolve(args, config, "n", 8, int)
    lam = _resolve(args, config, "lambda", None, int)
    sigma0 = _resolve(args, config, "sigma0", 1.0, float)
    seed = _resolve(args, config, "seed", 0, int)
    fmt_text = _resolve(args, config, "fmt", None, str)
    alpha = _resolve(args, config, "alpha", None, float)
    feedback = _resolve(args, config, "binary-feedback", False, _parse_bool)

    if mode == "none":
        return mode, None, k

    internal = {"ted": "float", "qted-v1": "binary", "fixed": "fixed"}[mode]
    fmt = None
    if internal == "fixed":
        if fmt_text is None:
            raise UsageError("--mode fixed requires --fmt (e.g. 8b4)")
        try:
            fmt = FixedPointFormat.parse(fmt_text)
        except ContractViolation as exc:
            raise UsageError(str(exc)) from exc
    try:
        cfg = AdaptationConfig(
            k=k,
            n=n,
            population=lam,
            sigma0=sigma0,
            seed=seed,
            mode=internal,
            fixed_format=fmt,
            binary_alpha=alpha,
            binary_feedback=feedback,
        )
    except ContractViolation as exc:
        raise UsageError(str(exc)) from exc
    return mode, cfg, k


def _run_samples(
    features, labels, decoder, subspace, mode, cfg, seed
) -> tuple[list[report.SampleRecord], dict[str, int]]:
    from .decoder import decode

    records = []
    warning_totals = {"saturations": 0, "sigma_clamps": 0, "eig_clamps": 0}
    for i in range(features.shape[0]):
        true_label = int(labels[i]) if labels is not None else -1
        start = time.perf_counter()
        if mode == "none":
            pred = decode(decoder, features[i])
            wall = (time.perf_counter() - start) * 1e3
            records.append(
                report.SampleRecord(
                    index=i,
                    true_label=true_label,
                    noadapt_class=pred.predicted_class,
                    noadapt_entropy=pred.entropy,
                    adapted_class=pred.predicted_class,
                    adapted_entropy=pred.entropy,
                    evaluations=1,
                    status="ok",
                    wall_ms=wall,
                )
            )
            continue
        row_cfg = cfg.with_seed(derive_seed(seed, i))
        try:
            result = adapt(features[i], decoder, subspace, row_cfg)
            wall = (time.perf_counter() - start) * 1e3
            if result.quant_warnings is not None:
                for key in warning_totals:
                    warning_totals[key] += result.quant_warnings[key]
            records.append(
                report.SampleRecord(
                    index=i,
                    true_label=true_label,
                    noadapt_class=result.baseline_prediction.predicted_class,
                    noadapt_entropy=result.baseline_prediction.entropy,
                    adapted_class=result.prediction.predicted_class,
                    adapted_entropy=result.prediction.entropy,
                    evaluations=result.evaluations,
                    status="ok",
                    wall_ms=wall,
                )
            )
        except (ContractViolation, ConvergenceFailure) as exc:
            wall = (time.perf_counter() - start) * 1e3
            records.append(
                report.SampleRecord(
                    index=i,
                    true_label=true_label,
                    noadapt_class=-1,
                    noadapt_entropy=float("nan"),
                    adapted_class=-1,
                    adapted_entropy=float("nan"),
                    evaluations=0,
                    status=f"error:{type(exc).__name__}",
                    wall_ms=wall,
                )
            )
    return records, warning_totals


def _cmd_adapt(args) -> int:
    config = _load_config(args)
    artifact = fileio.read_artifact(args.artifact)
    features, labels = fileio.read_features(args.target)
    if features.shape[1] != artifact.subspace.dim:
        raise UsageError(
            f"target dimension {features.shape[1]} does not match artifact "
            f"dimension {artifact.subspace.dim}"
        )
    mode, cfg, k = _build_adaptation_config(args, config, artifact.subspace.k)
    seed = cfg.seed if cfg is not None else _resolve(args, config, "seed", 0, int)
    subspace = artifact.subspace.truncated(k)

    records, warnings = _run_samples(
        features, labels, artifact.decoder, subspace, mode, cfg, seed
    )
    out = Path(args.out)
    report.write_csv(out, records)
    summary = report.summarize(records)
    fmt_note = ""
    if mode == "fixed":
        fmt_note = f" fmt={cfg.fixed_format}"
    text = report.summary_text(
        summary, header=f"mode={mode}{fmt_note} k={k} samples={len(records)}"
    )
    if mode == "fixed":
        text += (
            f"saturation events: {warnings['saturations']} "
            f"(sigma clamps: {warnings['sigma_clamps']}, "
            f"eigenvalue clamps: {warnings['eig_clamps']})\n"
        )
    out.with_suffix(".txt").write_text(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------- sweep

_SWEEP_COLUMNS = [
    "k",
    "n",
    "fmt",
    "seed",
    "samples",
    "failed",
    "accuracy_noadapt",
    "accuracy_adapted",
    "mean_entropy_noadapt",
    "mean_entropy_adapted",
    "status",
]


def _parse_grid(text: str, cast):
    items = [part.strip() for part in text.split(",") if part.strip()]
    if not items:
        raise UsageError(f"empty grid: {text!r}")
    return [cast(part) for part in items]


def _sweep_cell(artifact, features, labels, k, n, fmt_token, sigma0, seed):
    if fmt_token == "none":
        mode, internal, fmt = "none", None, None
    elif fmt_token == "float":
        mode, internal, fmt = "ted", "float", None
    elif fmt_token == "qted-v1":
        mode, internal, fmt = "qted-v1", "binary", None
    else:
        mode, internal, fmt = "fixed", "fixed", FixedPointFormat.parse(fmt_token)
    if not (1 <= k <= artifact.subspace.k):
        raise UsageError(f"k={k} not in [1, {artifact.subspace.k}] of the artifact")
    subspace = artifact.subspace.truncated(k)
    cfg = None
    if internal is not None:
        cfg = AdaptationConfig(
            k=k, n=n, sigma0=sigma0, seed=seed, mode=internal, fixed_format=fmt
        )
    records, _ = _run_samples(features, labels, artifact.decoder, subspace, mode, cfg, seed)
    return report.summarize(records)


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    k_grid = _parse_grid(_resolve(args, config, "k-grid", "16", str), int)
    n_grid = _parse_grid(_resolve(args, config, "n-grid", "8", str), int)
    fmt_grid = _parse_grid(_resolve(args, config, "fmt-grid", "float", str), str)
    sigma0 = _resolve(args, config, "sigma0", 1.0, float)
    seed = _resolve(args, config, "seed", 0, int)

    artifact = fileio.read_artifact(args.artifact)
    features, labels = fileio.read_features(args.target)
    if features.shape[1] != artifact.subspace.dim:
        raise UsageError("target dimension does not match artifact dimension")

    out = Path(args.out)
    done: set[tuple[str, str, str]] = set()
    if out.exists():
        with open(out, newline="") as fh:
            for row in csv.DictReader(fh):
                done.add((row["k"], row["n"], row["fmt"]))
    write_header = not out.exists()
    with open(out, "a", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(_SWEEP_COLUMNS)
        for k in k_grid:
            for n in n_grid:
                for fmt_token in fmt_grid:
                    if (str(k), str(n), fmt_token) in done:
                        continue
                    try:
                        s = _sweep_cell(
                            artifact, features, labels, k, n, fmt_token, sigma0, seed
                        )
                        writer.writerow(
                            [
                                k,
                                n,
                                fmt_token,
                                seed,
                                s.samples,
                                s.failed,
                                "" if s.accuracy_noadapt is None else f"{s.accuracy_noadapt:.17g}",
                                "" if s.accuracy_adapted is None else f"{s.accuracy_adapted:.17g}",
                                f"{s.mean_entropy_noadapt:.17g}",
                                f"{s.mean_entropy_adapted:.17g}",
                                "ok",
                            ]
                        )
                    except (UsageError, ContractViolation, DataFormatError,
                            ConvergenceFailure) as exc:
                        writer.writerow(
                            [k, n, fmt_token, seed, 0, 0, "", "", "", "",
                             f"error:{type(exc).__name__}"]
                        )
                    fh.flush()
    print(f"sweep results in {out}")
    return 0


# ---------------------------------------------------------------- report


def _cmd_report(args) -> int:
    try:
        records = report.read_csv(args.report)
    except (ValueError, OSError) as exc:
        raise DataFormatError(str(exc)) from exc
    summary = report.summarize(records)
    text = report.summary_text(summary, header=f"report: {args.report}")
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentadapt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate synthetic source/target feature files")
    p_gen.add_argument("--out", required=True, help="output directory")
    p_gen.add_argument("--classes", type=int)
    p_gen.add_argument("--dim", type=int)
    p_gen.add_argument("--radius", type=float)
    p_gen.add_argument("--std", type=float)
    p_gen.add_argument("--per-class", type=int, dest="per_class")
    p_gen.add_argument("--target-per-class", type=int, dest="target_per_class")
    p_gen.add_argument("--severity", type=float)
    p_gen.add_argument("--seed", type=int)
    p_gen.add_argument("--config")
    p_gen.set_defaults(func=_cmd_gen)

    p_fit = sub.add_parser("fit", help="fit subspace and decoder from a source file")
    p_fit.add_argument("source")
    p_fit.add_argument("--k", type=int)
    p_fit.add_argument("--n", type=int, help="subsample the source to N rows")
    p_fit.add_argument("--seed", type=int)
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--config")
    p_fit.set_defaults(func=_cmd_fit)

    p_adapt = sub.add_parser("adapt", help="adapt a target file against an artifact")
    p_adapt.add_argument("artifact")
    p_adapt.add_argument("target")
    p_adapt.add_argument("--mode", choices=["none", "ted", "qted-v1", "fixed"])
    p_adapt.add_argument("--k", type=int)
    p_adapt.add_argument("--n", type=int)
    p_adapt.add_argument("--lambda", type=int, dest="lambda_")
    p_adapt.add_argument("--sigma0", type=float)
    p_adapt.add_argument("--seed", type=int)
    p_adapt.add_argument("--fmt")
    p_adapt.add_argument("--alpha", type=float)
    p_adapt.add_argument("--binary-feedback", dest="binary_feedback",
                         action="store_const", const=True)
    p_adapt.add_argument("--out", required=True, help="per-sample CSV path")
    p_adapt.add_argument("--config")
    p_adapt.set_defaults(func=_cmd_adapt)

    p_sweep = sub.add_parser("sweep", help="grid of adapt runs, one CSV row per cell")
    p_sweep.add_argument("artifact")
    p_sweep.add_argument("target")
    p_sweep.add_argument("--k-grid", dest="k_grid")
    p_sweep.add_argument("--n-grid", dest="n_grid")
    p_sweep.add_argument("--fmt-grid", dest="fmt_grid",
                         help="comma list of none|float|qted-v1|<xby>")
    p_sweep.add_argument("--sigma0", type=float)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--config")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_rep = sub.add_parser("report", help="recompute the summary of a per-sample CSV")
    p_rep.add_argument("report")
    p_rep.add_argument("--out")
    p_rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ContractViolation, DataFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceFailure as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
