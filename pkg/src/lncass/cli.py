"""Batch command-line front end: simulate, fit, cv, screen, evaluate, predict.

Every command resolves its options (flags override an optional JSON config
file), echoes the resolved configuration into the output directory, writes
CSV/JSON artifacts plus rendered figures, and is deterministic given the
echoed configuration.  A failed run leaves a FAILED sentinel file in the
output directory and exits nonzero.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .dataprep import (
    Dataset,
    Pipeline,
    kfold_stratified,
    load_csv,
    loocv_balanced,
    save_csv,
    wald_screen,
    wald_screen_flags,
)
from .errors import LncassError, ModelSpecError
from .gam import KnotGrid, reconstruct_f
from .metrics import auc, mae, recovery_auc, roc_curve, summarize
from .model import (
    HyperParams,
    Likelihood,
    ModelSpec,
    Prior,
    beta_draws,
    inv_logit,
    layout_for,
    predict_eta,
)
from .sampler import PosteriorDraws, SamplerConfig, sample
from .simulate import GroundTruth, SimCase, simulate_case

_MODEL_NAMES = {"linear": Likelihood.LINEAR, "logistic": Likelihood.LOGISTIC}
_PRIOR_NAMES = {p.value: p for p in Prior}


def _fmt(v) -> str:
    """Canonical cell formatting: shortest round-trip float representation."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo_config(out_dir: Path, command: str, options: dict) -> None:
    # threads never changes results, so it stays out of the provenance echo
    clean = {k: v for k, v in options.items() if k != "threads"}
    _write_json(
        out_dir / "config.json",
        {"command": command, "version": __version__, "options": clean},
    )


def _sampler_config(opt: dict) -> SamplerConfig:
    return SamplerConfig(
        chains=opt["chains"],
        warmup=opt["warmup"],
        draws=opt["draws"],
        target_accept=opt["target_accept"],
        max_tree_depth=opt["max_tree_depth"],
        seed=opt["seed"],
    )


def _resolve_groups(value, p: int) -> np.ndarray:
    """Accept an inline JSON list or a path to a JSON file."""
    if isinstance(value, (list, np.ndarray)):
        arr = np.asarray(value, dtype=int)
    else:
        text = str(value)
        if not text.lstrip().startswith("["):
            text = Path(text).read_text()
        arr = np.asarray(json.loads(text), dtype=int)
    if arr.size != p:
        raise ModelSpecError(f"group map has {arr.size} entries for {p} covariates")
    return arr


def _build_spec(opt: dict, data: Dataset) -> ModelSpec:
    prior = _PRIOR_NAMES[opt["prior"]]
    hyper = HyperParams(
        tau=opt["tau"],
        mu_lambda=opt["mu_lambda"],
        sigma_lambda=opt["sigma_lambda"],
        intercept_sd=opt["intercept_sd"],
        noise_scale_sd=opt["noise_scale_sd"],
    )
    groups = None
    knots = None
    if prior is Prior.LNCASS_GROUPED:
        if opt.get("groups") is None:
            raise ModelSpecError("--groups is required with the grouped prior")
        groups = _resolve_groups(opt["groups"], data.p)
    if prior is Prior.LNCASS_GAM:
        knots = KnotGrid.equally_spaced(opt["knots"])
    return ModelSpec(
        likelihood=_MODEL_NAMES[opt["model"]],
        prior=prior,
        p=data.p,
        groups=groups,
        knots=knots,
        hyper=hyper,
        n=data.n,
    )


def _spec_record(spec: ModelSpec, data: Dataset, pipeline: Pipeline | None) -> dict:
    rec = {
        "likelihood": spec.likelihood.value,
        "prior": spec.prior.value,
        "p": spec.p,
        "n": spec.n,
        "columns": list(data.columns),
        "response": data.response,
        "tau": float(np.asarray(spec.hyper.tau)),
        "mu_lambda": np.asarray(spec.hyper.mu_lambda).tolist(),
        "sigma_lambda": np.asarray(spec.hyper.sigma_lambda).tolist(),
        "intercept_sd": spec.hyper.intercept_sd,
        "noise_scale_sd": spec.hyper.noise_scale_sd,
        "groups": None if spec.groups is None else [int(g) for g in spec.groups],
        "knots": None if spec.knots is None else [float(k) for k in spec.knots.knots],
    }
    if pipeline is not None and pipeline.steps:
        rec["pipeline"] = pipeline.to_dict()
    return rec


def _spec_from_record(rec: dict) -> ModelSpec:
    return ModelSpec(
        likelihood=Likelihood(rec["likelihood"]),
        prior=Prior(rec["prior"]),
        p=rec["p"],
        groups=None if rec["groups"] is None else np.asarray(rec["groups"], dtype=int),
        knots=None if rec["knots"] is None else KnotGrid(np.asarray(rec["knots"])),
        hyper=HyperParams(
            tau=rec["tau"],
            mu_lambda=_scalar_or_array(rec["mu_lambda"]),
            sigma_lambda=_scalar_or_array(rec["sigma_lambda"]),
            intercept_sd=rec["intercept_sd"],
            noise_scale_sd=rec["noise_scale_sd"],
        ),
    )


def _scalar_or_array(v):
    return float(v) if np.isscalar(v) else np.asarray(v, dtype=float)


def _derived_beta(spec: ModelSpec, draws: PosteriorDraws) -> PosteriorDraws:
    """Append the effective regression coefficients as derived columns."""
    if spec.prior is Prior.LNCASS_GAM:
        return draws
    chains, n_draws, dim = draws.array.shape
    flat = draws.array.reshape(-1, dim)
    d_coef = layout_for(spec).d_coef
    betas = beta_draws(spec, flat[:, :d_coef]).reshape(chains, n_draws, spec.p)
    names = [f"beta[{i}]" for i in range(spec.p)]
    return draws.with_derived(names, betas)


def _write_draws(path: Path, draws: PosteriorDraws) -> None:
    header = ["chain", "draw"] + list(draws.names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for c in range(draws.n_chains):
            for i in range(draws.n_draws):
                row = [str(c), str(i)]
                row.extend(repr(float(v)) for v in draws.array[c, i])
                writer.writerow(row)


def _write_summary(path: Path, summary) -> None:
    rows = [
        (
            summary.names[i],
            summary.median[i],
            summary.mean[i],
            summary.lower[i],
            summary.upper[i],
            summary.rhat[i],
            summary.ess[i],
        )
        for i in range(len(summary))
    ]
    _write_csv(path, ["name", "median", "mean", "lower", "upper", "rhat", "ess"], rows)


def _read_summary_medians(path: Path, prefix: str = "beta[") -> np.ndarray:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            name = row["name"]
            if name.startswith(prefix):
                idx = int(name[len(prefix) : -1])
                entries.append((idx, float(row["median"])))
    if not entries:
        raise LncassError(f"{path}: no '{prefix}...' entries found")
    entries.sort()
    return np.array([v for _, v in entries])


def _safe_name(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(opt: dict, out_dir: Path) -> None:
    case = SimCase(opt["case"], noise_sd=opt["noise_sd"], seed=opt["seed"])
    X, y, truth = simulate_case(case)
    data = Dataset(
        X=X, y=y, columns=[f"x{i + 1}" for i in range(case.p)], response="y"
    )
    save_csv(data, out_dir / "data.csv")
    _write_json(out_dir / "truth.json", truth.to_dict())
    _write_json(out_dir / "groups.json", [int(g) for g in truth.groups])


def _load_and_prepare(opt: dict) -> tuple[Dataset, Pipeline]:
    data = load_csv(opt["data"], opt["response"])
    steps = [
        s
        for s, flag in (
            ("impute", "impute"),
            ("log1p", "log1p"),
            ("standardize", "standardize"),
            ("unit-scale", "scale_unit"),
        )
        if opt.get(flag)
    ]
    pipeline = Pipeline(steps)
    if steps:
        data = pipeline.fit_transform(data)
    return data, pipeline


def cmd_fit(opt: dict, out_dir: Path) -> None:
    from . import plots

    data, pipeline = _load_and_prepare(opt)
    spec = _build_spec(opt, data)
    draws = sample(spec, data, _sampler_config(opt), threads=opt["threads"])
    draws = _derived_beta(spec, draws)
    summary = summarize(draws, interval_mass=opt["interval_mass"])
    _write_draws(out_dir / "draws.csv", draws)
    _write_summary(out_dir / "summary.csv", summary)
    _write_json(out_dir / "spec.json", _spec_record(spec, data, pipeline))
    _write_json(
        out_dir / "diagnostics.json",
        {
            "divergences": [int(v) for v in draws.divergences],
            "accept_rate": [float(v) for v in draws.accept_rate],
            "step_size": [float(v) for v in draws.step_size],
            "generator": draws.generator,
            "seed": int(draws.seed),
        },
    )
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    if spec.prior is Prior.LNCASS_GAM:
        _write_gam_curves(spec, data, draws, out_dir, fig_dir)
    else:
        sub = summary.subset("beta[")
        plots.save_coefficients(
            [f"beta[{data.columns[i]}]" for i in range(spec.p)],
            sub.median,
            sub.lower,
            sub.upper,
            fig_dir / "coefficients.png",
        )


def _write_gam_curves(spec, data, draws, out_dir: Path, fig_dir: Path) -> None:
    from . import plots

    m = spec.knots.size
    x_grid = np.linspace(0.0, 1.0, 101)
    curve_dir = out_dir / "curves"
    curve_dir.mkdir(exist_ok=True)
    flat = draws.array.reshape(-1, draws.array.shape[2])
    figure_curves = {}
    for i, col in enumerate(data.columns):
        w_draws = flat[:, i * m : (i + 1) * m]
        values = np.stack([reconstruct_f(w, spec.knots, x_grid) for w in w_draws])
        med = np.median(values, axis=0)
        mean = values.mean(axis=0)
        lo, hi = np.quantile(values, [0.05, 0.95], axis=0)
        _write_csv(
            curve_dir / f"curve_{i:02d}_{_safe_name(col)}.csv",
            ["x", "f_median", "f_mean", "f_lower", "f_upper"],
            zip(x_grid, med, mean, lo, hi),
        )
        figure_curves[col] = (x_grid, med, lo, hi)
    plots.save_gam_curves(figure_curves, fig_dir / "curves.png")


def _posterior_mean_prediction(spec, X, draws: PosteriorDraws) -> np.ndarray:
    lay = layout_for(spec)
    flat = draws.array.reshape(-1, draws.array.shape[2])
    eta = predict_eta(
        spec, X, flat[:, : lay.d_coef], flat[:, lay.intercept_index]
    )
    if spec.likelihood is Likelihood.LOGISTIC:
        return inv_logit(eta).mean(axis=1)
    return eta.mean(axis=1)


def _fold_task(args):
    (data, spec_opt, steps, fold_idx, train, test, fold_seed) = args
    train_data = data.subset_rows(train)
    test_data = data.subset_rows(test)
    pipeline = Pipeline(steps)
    if steps:
        train_data = pipeline.fit_transform(train_data)
        test_data = pipeline.transform(test_data)
    if spec_opt.get("screen_top_k"):
        train_data, selected, _ = wald_screen(train_data, spec_opt["screen_top_k"])
        test_data = test_data.subset_columns(selected)
    spec = _build_spec(spec_opt, train_data)
    cfg = SamplerConfig(
        chains=spec_opt["chains"],
        warmup=spec_opt["warmup"],
        draws=spec_opt["draws"],
        target_accept=spec_opt["target_accept"],
        max_tree_depth=spec_opt["max_tree_depth"],
        seed=fold_seed,
    )
    draws = sample(spec, train_data, cfg)
    pred = _posterior_mean_prediction(spec, test_data.X, draws)
    return fold_idx, test, pred


def cmd_cv(opt: dict, out_dir: Path) -> None:
    from . import plots

    data = load_csv(opt["data"], opt["response"])
    if not data.is_binary():
        raise ModelSpecError("cv reports AUC and requires a binary response")
    if opt.get("screen_top_k") and opt["prior"] == Prior.LNCASS_GROUPED.value:
        raise ModelSpecError(
            "screening drops columns, which breaks a fixed group map; "
            "use an ungrouped prior with --screen-top-k"
        )
    steps = [
        s
        for s, flag in (
            ("impute", "impute"),
            ("log1p", "log1p"),
            ("standardize", "standardize"),
            ("unit-scale", "scale_unit"),
        )
        if opt.get(flag)
    ]
    if opt.get("global_screen") and opt.get("screen_top_k"):
        # optimistic variant: screening statistics see every observation
        pre = Pipeline(steps).fit_transform(data) if steps else data
        pre, selected, _ = wald_screen(pre, opt["screen_top_k"])
        data = data.subset_columns(selected)
        fold_opt = {**opt, "screen_top_k": None}
    else:
        fold_opt = dict(opt)
    runs = 1 if opt["loocv_balanced"] else opt["repeats"]
    tasks = []
    for run in range(runs):
        plan_seed = [opt["seed"], run]
        if opt["loocv_balanced"]:
            plan = loocv_balanced(data.y, plan_seed)
        else:
            plan = kfold_stratified(data.y, opt["folds"], plan_seed)
        for fold in range(plan.k):
            fold_seed = int(
                np.random.SeedSequence([opt["seed"], run, fold]).generate_state(
                    1, dtype=np.uint64
                )[0]
            )
            tasks.append(
                (
                    (run, fold),
                    (
                        data,
                        fold_opt,
                        steps,
                        (run, fold),
                        plan.train_set(fold),
                        plan.test_sets[fold],
                        fold_seed,
                    ),
                )
            )
    if opt["threads"] > 1:
        with ThreadPoolExecutor(max_workers=opt["threads"]) as pool:
            results = list(pool.map(_fold_task, [t[1] for t in tasks]))
    else:
        results = [_fold_task(t[1]) for t in tasks]
    rows = []
    for (run, fold), test_idx, pred in results:
        for i, p in zip(test_idx, pred):
            rows.append((run, fold, int(i), data.y[int(i)], p))
    _write_csv(
        out_dir / "predictions.csv",
        ["run", "fold", "index", "y", "prediction"],
        rows,
    )
    run_aucs = []
    for run in range(runs):
        y_run = np.array([r[3] for r in rows if r[0] == run])
        p_run = np.array([r[4] for r in rows if r[0] == run])
        run_aucs.append(auc(p_run, y_run))
    _write_csv(out_dir / "aucs.csv", ["run", "auc"], list(enumerate(run_aucs)))
    y_all = np.array([r[3] for r in rows])
    p_all = np.array([r[4] for r in rows])
    pooled = auc(p_all, y_all)
    _write_json(
        out_dir / "metrics.json",
        {
            "auc_pooled": pooled,
            "auc_mean": float(np.mean(run_aucs)),
            "auc_per_run": [float(a) for a in run_aucs],
            "n_predictions": len(rows),
        },
    )
    curve = roc_curve(p_all, y_all)
    _write_csv(
        out_dir / "roc.csv",
        ["threshold", "fpr", "tpr"],
        zip(curve.thresholds, curve.fpr, curve.tpr),
    )
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    plots.save_roc(curve.fpr, curve.tpr, pooled, fig_dir / "roc.png")
    order = np.argsort([r[2] for r in rows])
    plots.save_predictions(p_all[order], y_all[order], fig_dir / "predictions.png")


def cmd_screen(opt: dict, out_dir: Path) -> None:
    data, _ = _load_and_prepare(opt)
    flags = wald_screen_flags(data)
    reduced, selected, z = wald_screen(data, opt["top_k"])
    save_csv(reduced, out_dir / "screened.csv")
    _write_csv(
        out_dir / "z_scores.csv",
        ["column", "z", "selected", "wald_converged"],
        [
            (data.columns[j], z[j], str(int(j in set(selected.tolist()))), str(int(flags[j])))
            for j in range(data.p)
        ],
    )


def cmd_evaluate(opt: dict, out_dir: Path) -> None:
    from . import plots

    truth = GroundTruth.from_dict(json.loads(Path(opt["truth"]).read_text()))
    est_path = Path(opt["summary"])
    if est_path.suffix == ".json":
        est = np.asarray(
            json.loads(est_path.read_text())["beta"], dtype=float
        )
    else:
        est = _read_summary_medians(est_path)
    _write_json(
        out_dir / "metrics.json",
        {"mae": mae(est, truth.beta), "recovery_auc": recovery_auc(est, truth)},
    )
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    plots.save_estimate_vs_truth(truth.beta, est, fig_dir / "estimate_vs_truth.png")


def cmd_predict(opt: dict, out_dir: Path) -> None:
    from . import plots

    fit_dir = Path(opt["fit"])
    rec = json.loads((fit_dir / "spec.json").read_text())
    spec = _spec_from_record(rec)
    try:
        data = load_csv(opt["data"], rec["response"])
        y = data.y
    except LncassError:
        data = load_csv(opt["data"], response=None)
        y = None
    if "pipeline" in rec:
        data = Pipeline.from_dict(rec["pipeline"]).transform(data)
    draws = _read_draws(fit_dir / "draws.csv", spec)
    pred = _posterior_mean_prediction(spec, data.X, draws)
    rows = [
        (i, pred[i]) if y is None else (i, y[i], pred[i]) for i in range(data.n)
    ]
    header = ["index", "prediction"] if y is None else ["index", "y", "prediction"]
    _write_csv(out_dir / "predictions.csv", header, rows)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    plots.save_predictions(pred, y, fig_dir / "predictions.png")


def _read_draws(path: Path, spec: ModelSpec) -> PosteriorDraws:
    layout = layout_for(spec)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    want = list(layout.names)
    col_of = {name: i for i, name in enumerate(header)}
    missing = [n for n in want if n not in col_of]
    if missing:
        raise LncassError(f"{path}: draws are missing parameters {missing[:5]}")
    chain_col = col_of["chain"]
    chains = 1 + max(int(r[chain_col]) for r in rows)
    per_chain = len(rows) // chains
    arr = np.empty((chains, per_chain, len(want)))
    counts = [0] * chains
    idx = [col_of[n] for n in want]
    for r in rows:
        c = int(r[chain_col])
        arr[c, counts[c]] = [float(r[j]) for j in idx]
        counts[c] += 1
    return PosteriorDraws(
        array=arr,
        names=tuple(want),
        divergences=np.zeros(chains, dtype=int),
        accept_rate=np.zeros(chains),
        step_size=np.zeros(chains),
        seed=0,
    )


# ---------------------------------------------------------------------------
# argument handling

_COMMON_MODEL_FLAGS = {
    "response": "y",
    "model": "linear",
    "prior": "lncass",
    "groups": None,
    "knots": 5,
    "tau": 5.0,
    "mu_lambda": 0.0,
    "sigma_lambda": 10.0,
    "intercept_sd": 10.0,
    "noise_scale_sd": 5.0,
    "chains": 4,
    "warmup": 1000,
    "draws": 1000,
    "target_accept": 0.8,
    "max_tree_depth": 10,
    "interval_mass": 0.9,
    "seed": 0,
    "threads": 1,
    "impute": False,
    "log1p": False,
    "standardize": False,
    "scale_unit": False,
}

_DEFAULTS = {
    "simulate": {"noise_sd": 1.0, "seed": 0, "threads": 1},
    "fit": {"data": None, **_COMMON_MODEL_FLAGS},
    "cv": {
        "data": None,
        **_COMMON_MODEL_FLAGS,
        "folds": 10,
        "repeats": 1,
        "loocv_balanced": False,
        "screen_top_k": None,
        "global_screen": False,
    },
    "screen": {
        "data": None,
        "response": "y",
        "top_k": 500,
        "impute": False,
        "log1p": False,
        "standardize": False,
        "scale_unit": False,
        "threads": 1,
    },
    "evaluate": {"summary": None, "truth": None, "threads": 1},
    "predict": {"fit": None, "data": None, "threads": 1},
}

_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "screen": cmd_screen,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


_FLAG_TYPES = {"screen_top_k": int}  # flags whose default (None) hides the type


def _add_flags(parser: argparse.ArgumentParser, defaults: dict) -> None:
    for key, default in defaults.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            parser.add_argument(flag, action="store_const", const=True, default=None)
        elif isinstance(default, int) and not isinstance(default, bool):
            parser.add_argument(flag, type=int, default=None)
        elif isinstance(default, float):
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=_FLAG_TYPES.get(key, str), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lncass",
        description="Sparse Bayesian regression with spike-and-slab style shrinkage.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in _DEFAULTS.items():
        p = sub.add_parser(name)
        if name == "simulate":
            p.add_argument("case", choices=["p20", "p70", "p120"])
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, required=True)
        _add_flags(p, defaults)
    return parser


def _resolve_options(args: argparse.Namespace) -> dict:
    defaults = dict(_DEFAULTS[args.command])
    if args.command == "simulate":
        defaults["case"] = args.case
    resolved = dict(defaults)
    if args.config:
        file_values = json.loads(Path(args.config).read_text())
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise ModelSpecError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(file_values)
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    required = [k for k in ("data", "summary", "truth", "fit") if k in resolved]
    for k in required:
        if resolved[k] is None:
            raise ModelSpecError(f"--{k} is required for '{args.command}'")
    return resolved


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    sentinel = out_dir / "FAILED"
    if sentinel.exists():
        sentinel.unlink()
    try:
        options = _resolve_options(args)
        _echo_config(out_dir, args.command, options)
        _COMMANDS[args.command](options, out_dir)
    except Exception as exc:
        sentinel.write_text(f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}")
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
