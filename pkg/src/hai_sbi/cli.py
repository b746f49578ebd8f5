"""Command-line front end: reproducible simulate / fit / analyze runs.

Every command takes a JSON config and an output directory, validates its
inputs before writing anything, and leaves a manifest (config hash, seeds,
package version, output list) that makes reruns byte-identical. Wall-clock
measurements go to a separate timing.json, the one file excluded from the
reproducibility contract.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, density, facility, figures, inference, likelihood
from .simulator import RateVector, SimParams, read_epidemic_csv, write_epidemic_csv
from .summaries import read_summary_csv, summary_matrix, write_summary_csv

log = logging.getLogger("hai_sbi")

CONFIG_SCHEMA_VERSION = 1
MODEL_KINDS = ("homogeneous", "heterogeneous", "partial", "trace")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


def _setup_logging() -> None:
    level = os.environ.get("HAI_SBI_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            config = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    version = config.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {CONFIG_SCHEMA_VERSION}")
    return config


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _require(config: dict, key: str, context: str = "config"):
    if key not in config:
        raise ConfigError(f"{context} is missing required key {key!r}")
    return config[key]


def _seed_for(config: dict, which: str, override: int | None) -> int:
    if override is not None:
        return override
    seeds = _require(config, "seeds")
    return int(_require(seeds, which, "seeds block"))


def build_model(config: dict, base_dir: Path) -> inference.ModelSpec:
    """Model block -> ModelSpec, resolving trace/layout files when needed."""
    mc = _require(config, "model")
    kind = _require(mc, "kind", "model block")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"model kind must be one of {MODEL_KINDS}")
    alpha = float(mc.get("alpha", 0.0))
    gamma = float(mc.get("gamma", 0.0))
    eta = mc.get("eta")
    params = SimParams(alpha=alpha, gamma=gamma, eta=None if eta is None else float(eta))

    if kind == "trace":
        for key in ("traces", "layout"):
            if key not in mc:
                raise ConfigError(f"trace-driven model needs a {key!r} path")
        layout_path = base_dir / mc["layout"]
        traces_path = base_dir / mc["traces"]
        for p in (layout_path, traces_path):
            if not p.exists():
                raise ConfigError(f"referenced file does not exist: {p}")
        layout = facility.read_layout_csv(layout_path)
        traces = facility.read_traces_csv(traces_path, layout)
        violations = facility.validate(layout, traces)
        if violations:
            raise ConfigError(
                f"trace file has {len(violations)} violations, first: {violations[0]}"
            )
        summary = mc.get("summary", "J")
        return inference.ModelSpec(kind="trace", layout=layout, traces=traces,
                                   params=params, summary=summary)

    layout, traces = facility.static_layout(
        int(_require(mc, "n_floors", "model block")),
        int(_require(mc, "locations_per_floor", "model block")),
        int(mc.get("beds_per_room", 2)),
        int(_require(mc, "horizon", "model block")),
    )
    sim_kind = "partial" if kind == "partial" else "full"
    homogeneous = kind == "homogeneous"
    summary = mc.get("summary", "I" if homogeneous else "J")
    return inference.ModelSpec(kind=sim_kind, layout=layout, traces=traces,
                               params=params, summary=summary,
                               homogeneous_rate=homogeneous)


def build_prior(config: dict, model: inference.ModelSpec) -> inference.Prior:
    pc = _require(config, "prior")
    mu0 = np.broadcast_to(np.asarray(_require(pc, "mu0", "prior block"), dtype=np.float64),
                          (model.theta_dim,))
    sigma0 = np.broadcast_to(np.asarray(_require(pc, "sigma0", "prior block"), dtype=np.float64),
                             (model.theta_dim,))
    return inference.Prior(mu0=mu0.copy(), sigma0=sigma0.copy())


def build_rates(config: dict, model: inference.ModelSpec) -> RateVector:
    rates = _require(config, "rates")
    if np.isscalar(rates):
        if not model.homogeneous_rate:
            raise ConfigError("scalar rates need a homogeneous model")
        return model.theta_to_rates([float(rates)])
    return model.theta_to_rates(np.asarray(rates, dtype=np.float64))


def write_manifest(out: Path, command: str, config: dict, seed: int,
                   outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "package_version": __version__,
        "outputs": sorted(outputs),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_outputs(out: Path, outputs: list[str]) -> int:
    missing = [name for name in outputs if not (out / name).exists()]
    if missing:
        log.error("declared outputs missing: %s", ", ".join(missing))
        return 1
    return 0


def _write_timing(out: Path, seconds: float) -> None:
    with open(out / "timing.json", "w", encoding="utf-8") as fh:
        json.dump({"wall_time_s": round(seconds, 3)}, fh)
        fh.write("\n")


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).parent
    model = build_model(config, base)
    rates = build_rates(config, model)
    seed = _seed_for(config, "data", args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    matrix = model.simulate(rates, seed)
    sm = summary_matrix(matrix, model.layout, model.traces)
    write_epidemic_csv(matrix, out / "epidemic.csv")
    write_summary_csv(sm, out / "summary.csv", out / "summary_scale.json")
    figures.epidemic_curve_figure(sm, out / "epidemic.png")
    outputs = ["epidemic.csv", "summary.csv", "summary_scale.json", "epidemic.png"]
    write_manifest(out, "simulate", config, seed, outputs)
    _write_timing(out, time.time() - t0)
    log.info("simulate: wrote %s", out)
    return _check_outputs(out, outputs)


def _observed_flat(config: dict, base: Path, model: inference.ModelSpec) -> np.ndarray:
    paths = _require(config, "paths")
    summary_path = base / _require(paths, "observed_summary", "paths block")
    if not summary_path.exists():
        raise ConfigError(f"observed summary file does not exist: {summary_path}")
    sm = read_summary_csv(summary_path)
    if sm.horizon != model.horizon:
        raise ConfigError(
            f"observed summary has horizon {sm.horizon}, model expects {model.horizon}"
        )
    return sm.values[:, 0].copy() if model.summary == "I" else sm.flat()


def _fit_npe(config, model, prior, x_o, seed, threads, out):
    ec = _require(config, "estimator")
    enc = ec.get("encoder", {})
    encoder_config = density.EncoderConfig(
        input_dim=model.summary_dim,
        hidden_width=int(enc.get("hidden_width", 64)),
        target_dim=model.theta_dim,
        head_kind=enc.get("head_kind", "diag-gaussian"),
        target_transform=enc.get("target_transform", "natural"),
    )
    tc = ec.get("train", {})
    train_config = inference.TrainConfig(
        learning_rate=float(tc.get("learning_rate", 3e-3)),
        batch_size=int(tc.get("batch_size", 64)),
        max_epochs=int(tc.get("max_epochs", 400)),
        patience=int(tc.get("patience", 40)),
        weight_decay=float(tc.get("weight_decay", 1e-5)),
        seed=inference.rng.derive_seed(seed, 3),
    )
    batch = inference.simulate_batch(prior, model, int(_require(ec, "budget", "estimator")),
                                     seed, n_workers=threads)
    estimator, history = inference.train_npe(batch, encoder_config, train_config)
    # rates are nonnegative, so natural-scale heads truncate at zero unless told not to
    default_truncate = encoder_config.target_transform == "natural"
    result = inference.npe_posterior(estimator, x_o,
                                     truncate_at_zero=bool(ec.get("truncate_at_zero",
                                                                  default_truncate)))
    estimator.save(out / "weights.json")
    report = {
        "estimator": "npe",
        "budget": batch.size,
        "epochs_run": len(history.train_loss),
        "best_epoch": history.best_epoch,
        "final_train_loss": history.train_loss[-1],
        "final_val_loss": history.val_loss[-1],
        "best_val_loss": min(history.val_loss),
    }
    return result, report, ["weights.json"]


def _fit_abc(config, model, prior, x_o, seed, threads, scalar: bool):
    ec = _require(config, "estimator")
    budget = int(_require(ec, "budget", "estimator"))
    batch = inference.simulate_batch(prior, model, budget, seed, n_workers=threads)
    if ec.get("epsilon") is not None:
        accept = ("epsilon", float(ec["epsilon"]))
    else:
        accept = ("top_k", int(ec.get("top_k", 100)))
    fit = inference.abc_scalar if scalar else inference.abc
    result = fit(batch, x_o, accept)
    report = {
        "estimator": result.provenance["estimator"],
        "budget": budget,
        "accepted": result.provenance["accepted"],
        "acceptance_rate": result.provenance["acceptance_rate"],
    }
    return result, report, []


def _fit_reject(config, model, prior, seed, base: Path):
    ec = _require(config, "estimator")
    paths = _require(config, "paths")
    epidemic_path = base / _require(paths, "observed_epidemic", "paths block")
    if not epidemic_path.exists():
        raise ConfigError(f"observed epidemic file does not exist: {epidemic_path}")
    if model.kind != "full":
        raise ConfigError("rejection sampling needs the fully observed model's exact likelihood")
    observed = read_epidemic_csv(epidemic_path)
    params = model.params
    if model.homogeneous_rate:
        def log_lik(theta, xo):
            return likelihood.log_likelihood_homogeneous(xo, float(theta[0]), params)
    else:
        def log_lik(theta, xo):
            return likelihood.log_likelihood_full(xo, model.theta_to_rates(theta),
                                                  params, model.layout)
    _, log_m = inference.find_log_m(log_lik, prior, observed,
                                    budget=int(ec.get("bound_budget", 300)))
    cap = ec.get("max_proposals")
    target = int(ec.get("target_accept", 100))
    if cap is not None and int(cap) > 0:
        cap = int(cap)
    result = inference.rejection_sample(prior, log_lik, observed, target,
                                        seed=inference.rng.derive_seed(seed, 4),
                                        log_m=log_m, max_proposals=cap)
    if cap is not None and result.provenance["total_proposals"] >= cap:
        log.warning("rejection sampling stopped at the %d-proposal cap", cap)
    report = {
        "estimator": "rejection",
        "target_accept": target,
        "accepted": result.provenance["accepted"],
        "total_proposals": result.provenance["total_proposals"],
        "acceptance_rate": result.provenance["acceptance_rate"],
        "log_m": result.provenance["log_m"],
    }
    return result, report, []


def cmd_fit(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).parent
    model = build_model(config, base)
    prior = build_prior(config, model)
    seed = _seed_for(config, "fit", args.seed)
    estimator_kind = _require(_require(config, "estimator"), "kind", "estimator block")
    if estimator_kind not in ("npe", "abc", "abc-s", "reject"):
        raise ConfigError(f"unknown estimator kind {estimator_kind!r}")

    x_o = None
    if estimator_kind != "reject":
        x_o = _observed_flat(config, base, model)
        if x_o.size != model.summary_dim:
            raise ConfigError(
                f"observed summary has {x_o.size} entries, model expects {model.summary_dim}"
            )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    if estimator_kind == "npe":
        result, report, extra = _fit_npe(config, model, prior, x_o, seed, args.threads, out)
    elif estimator_kind in ("abc", "abc-s"):
        result, report, extra = _fit_abc(config, model, prior, x_o, seed, args.threads,
                                         scalar=estimator_kind == "abc-s")
    else:
        result, report, extra = _fit_reject(config, model, prior, seed, base)
    outputs = inference.save_posterior(result, out) + extra + ["fit_report.json"]
    with open(out / "fit_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(out, "fit", config, seed, outputs)
    _write_timing(out, time.time() - t0)
    log.info("fit: %s", report)
    return _check_outputs(out, outputs)


def cmd_analyze(args) -> int:
    config = load_config(args.config)
    base = Path(args.config).parent
    model = build_model(config, base)
    seed = _seed_for(config, "analysis", args.seed)
    paths = _require(config, "paths")
    fit_dir = base / _require(paths, "fit_dir", "paths block")
    if not (fit_dir / "posterior.json").exists():
        raise ConfigError(f"fit outputs not found under {fit_dir}")
    result = inference.load_posterior(fit_dir)

    ac = config.get("analysis", {})
    n_posterior = int(ac.get("posterior_draws", 4000))
    interval = tuple(ac.get("interval", (0.05, 0.95)))
    band_column = ac.get("band_column", "I")
    band_draws = int(ac.get("band_draws", 30))
    labels = (["Rate"] if model.theta_dim == 1
              else analysis.rate_labels(model.layout.n_floors))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    summary = analysis.summarize(result, n_draws=n_posterior, interval=interval,
                                 seed=inference.rng.derive_seed(seed, 0), labels=labels)
    analysis.write_posterior_summary_csv(summary, out / "posterior_summary.csv")
    figures.posterior_summary_figure(summary, out / "posterior_summary.png")
    outputs = ["posterior_summary.csv", "posterior_summary.png"]

    if model.theta_dim >= 2:
        corr = analysis.correlation_matrix(result, n_draws=n_posterior,
                                           seed=inference.rng.derive_seed(seed, 1))
        analysis.write_correlation_csv(corr, labels, out / "correlation.csv")
        figures.correlation_figure(corr, labels, out / "correlation.png")
        outputs += ["correlation.csv", "correlation.png"]

    observed = None
    if "observed_summary" in paths:
        sm = read_summary_csv(base / paths["observed_summary"])
        observed = sm.values[:, list(sm.column_names).index(band_column)]

    ppc = analysis.posterior_predictive(result, model, band_column, band_draws,
                                        seed=inference.rng.derive_seed(seed, 2))
    analysis.write_bands_csv([ppc], out / "ppc_bands.csv")
    figures.bands_figure([ppc], out / "ppc_bands.png", observed=observed)
    outputs += ["ppc_bands.csv", "ppc_bands.png"]

    scenario_cfgs = ac.get("interventions", [])
    if scenario_cfgs:
        scenarios = [
            analysis.InterventionSpec(
                facility_scale=float(sc.get("facility_scale", 1.0)),
                per_floor_scale=np.asarray(sc.get("per_floor_scale", 1.0), dtype=np.float64),
                room_scale=float(sc.get("room_scale", 1.0)),
                label=sc.get("label", f"scenario {j + 1}"),
            )
            for j, sc in enumerate(scenario_cfgs)
        ]
        bands = analysis.intervention_compare(
            result, model, scenarios, band_column, band_draws,
            seed=inference.rng.derive_seed(seed, 3),
            include_external_only=bool(ac.get("include_external_only", False)),
        )
        analysis.write_bands_csv(bands, out / "intervention_bands.csv")
        figures.bands_figure(bands, out / "intervention_bands.png", observed=observed,
                             title="Counterfactual interventions")
        outputs += ["intervention_bands.csv", "intervention_bands.png"]

    write_manifest(out, "analyze", config, seed, outputs)
    _write_timing(out, time.time() - t0)
    return _check_outputs(out, outputs)


def cmd_synth_data(args) -> int:
    config = load_config(args.config)
    sc = _require(config, "synth")
    seed = _seed_for(config, "data", args.seed)
    n_floors = int(sc.get("n_floors", 5))
    rooms_per_floor = int(sc.get("rooms_per_floor", 19))
    beds_per_room = int(sc.get("beds_per_room", 2))
    horizon = int(sc.get("horizon", 53))
    layout, _ = facility.static_layout(n_floors, rooms_per_floor * beds_per_room,
                                       beds_per_room, horizon)
    traces = facility.synth_traces(
        layout, horizon,
        admission_rate=float(sc.get("admission_rate", 0.5)),
        mean_stay=float(sc.get("mean_stay", 3.0)),
        screen_positive_rate=float(sc.get("screen_positive_rate", 0.35)),
        seed=seed,
    )
    violations = facility.validate(layout, traces)
    if violations:  # synthesis bug, not user error
        raise RuntimeError(f"synthesized traces failed validation: {violations[0]}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    facility.write_traces_csv(traces, out / "traces.csv")
    facility.write_layout_csv(layout, out / "layout.csv")
    outputs = ["traces.csv", "layout.csv"]
    write_manifest(out, "synth-data", config, seed, outputs)
    log.info("synth-data: %d patients over %d weeks", traces.n_rows, horizon)
    return _check_outputs(out, outputs)


def cmd_validate(args) -> int:
    layout = facility.read_layout_csv(args.layout)
    traces = facility.read_traces_csv(args.traces, layout)
    violations = facility.validate(layout, traces)
    if not violations:
        print("ok")
        return 0
    for v in violations:
        print(v)
    print(f"{len(violations)} violations")
    return 1


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(
        prog="hai-sbi",
        description="Simulation-based inference for healthcare-associated infections",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_command(name, fn, needs_out=True):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="simulation worker count")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.set_defaults(fn=fn)
        return p

    add_run_command("simulate", cmd_simulate)
    add_run_command("fit", cmd_fit)
    add_run_command("analyze", cmd_analyze)
    add_run_command("synth-data", cmd_synth_data)
    pv = sub.add_parser("validate")
    pv.add_argument("--traces", required=True)
    pv.add_argument("--layout", required=True)
    pv.set_defaults(fn=cmd_validate)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
