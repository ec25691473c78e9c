"""Command-line front end: bounds evaluation, replicated experiments and
distance diagnostics, all driven by one JSON config document.

Seed discipline: replication r of grid point g derives its generator from
``SeedSequence([seed, g, r])``; auxiliary streams (constant estimation,
diagnostic references) use fixed large stream tags documented below.  Every
replication owns its whole stream, so output is byte-identical regardless of
worker count.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bounds as bounds_mod
from .diagnostics import (PredictiveTable, fit_geometric_rate, replication_stats,
                          sliced_wasserstein, tv_predictive)
from .isir import ChainConfig, run_chain, run_chains
from .model import (CountingModel, LogisticPosteriorSpec, ModelSpec, TestFunction,
                    benchmark_mixture, estimate_kappa, estimate_omega,
                    indicator_difference, logistic_predictive,
                    make_gaussian_mixture, make_logistic_posterior,
                    mixture_truth, synthetic_logistic_data)
from .rolling import (RollingConfig, bootstrap_br_snis, build_sample_bank,
                      rolling_estimate)
from .snis import (WeightedSampleSet, snis_bias_bound, snis_estimate,
                   snis_hpd_bound, snis_mse_bound)

# Reserved stream tags for non-replication generators.
_CONSTANTS_STREAM = 2 ** 31
_REFERENCE_STREAM = 2 ** 31 + 1
_DATA_STREAM = 2 ** 31 + 2

ESTIMATORS = ("snis", "isir-state", "br-snis", "br-snis-bootstrap")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration document."""


def replication_rng(seed: int, grid_index: int, replication: int) -> np.random.Generator:
    """The documented seed-splitting rule for one replication."""
    return np.random.default_rng(np.random.SeedSequence([seed, grid_index, replication]))


def _stream_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag, 0]))


def seed_fingerprint(seed: int, grid_index: int, replication: int) -> int:
    """Deterministic integer echoed in the CSV seed column."""
    ss = np.random.SeedSequence([seed, grid_index, replication])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _set_override(config: dict, key: str, raw: str):
    target = config
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in target or not isinstance(target[part], dict):
            target[part] = {}
        target = target[part]
    try:
        target[parts[-1]] = json.loads(raw)
    except json.JSONDecodeError:
        target[parts[-1]] = raw


def load_config(path: str, overrides: Optional[list[str]] = None,
                seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config document must be a JSON object")
    if config.get("schema") != 1:
        raise ConfigError("config schema field must equal 1")
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, raw = item.split("=", 1)
        _set_override(config, key, raw)
    if seed is not None:
        config["seed"] = seed
    if out is not None:
        config["out"] = out
    return config


@dataclass
class BuiltModel:
    """A resolved model plus analytic truth and benchmark test function."""

    model: ModelSpec
    f: TestFunction
    truth: Optional[float]
    label: str


def build_model(section: dict) -> BuiltModel:
    if not isinstance(section, dict) or "name" not in section:
        raise ConfigError("model section must carry a name")
    name = section["name"]
    if name == "gaussian-mixture":
        dim = int(section.get("dim", 2))
        spec = benchmark_mixture(dim)
        model = make_gaussian_mixture(spec)
        f = indicator_difference(spec.rect_a, spec.rect_b)
        return BuiltModel(model, f, mixture_truth(spec), f"gaussian-mixture-d{dim}")
    if name == "logistic-synthetic":
        dim = int(section.get("dim", 5))
        n_obs = int(section.get("n_obs", 200))
        data_seed = int(section.get("data_seed", 0))
        prior_precision = float(section.get("prior_precision", 5e-2))
        theta_star = section.get("theta_star")
        if theta_star is None:
            base = np.array([1.0, -1.0, 0.5, -0.5, 0.25])
            theta_star = 1.5 * np.resize(base, dim)
        theta_star = np.asarray(theta_star, dtype=float)
        rng = _stream_rng(data_seed, _DATA_STREAM)
        x, y = synthetic_logistic_data(rng, dim, n_obs, theta_star)
        spec = LogisticPosteriorSpec(covariates=x, responses=y,
                                     prior_precision=prior_precision)
        model = make_logistic_posterior(spec)
        component = int(section.get("component", 0))
        f = TestFunction(fn=lambda pts, c=component: pts[:, c], sup_bound=50.0)
        return BuiltModel(model, f, None, f"logistic-synthetic-d{dim}")
    raise ConfigError(f"unknown model name '{name}'")


def resolve_constants(config: dict, built: BuiltModel) -> tuple[float, float, bool]:
    """Config-supplied (omega, kappa) or Monte Carlo estimates."""
    omega = config.get("omega")
    kappa = config.get("kappa")
    estimated = omega is None or kappa is None
    if estimated:
        seed = int(config.get("seed", 0))
        rng = _stream_rng(seed, _CONSTANTS_STREAM)
        draws = int(config.get("estimate_draws", 10 ** 6))
        restarts = int(config.get("estimate_restarts", 32))
        if kappa is None:
            kappa = estimate_kappa(built.model, draws, rng)
        if omega is None:
            omega = estimate_omega(built.model, restarts, draws, rng)
    return float(omega), float(kappa), estimated


# ---------------------------------------------------------------------------
# Estimator dispatch
# ---------------------------------------------------------------------------


def _normalize_grid_point(estimator: str, point: dict) -> dict:
    if not isinstance(point, dict):
        raise ConfigError("grid entries must be objects")
    out = {"N": None, "k": None, "k0": None, "rounds": None, "M": None}
    out.update({key: point[key] for key in point if key in out})
    if estimator == "snis":
        if not out["M"]:
            raise ConfigError("snis grid entries need M")
    else:
        n, k = out["N"], out["k"]
        if not n or n < 2:
            raise ConfigError(f"{estimator} grid entries need N >= 2")
        if not k:
            if not out["M"] or out["M"] % (n - 1):
                raise ConfigError("grid entries need k, or M divisible by N - 1")
            k = out["k"] = out["M"] // (n - 1)
        declared = (n - 1) * k
        if out["M"] is not None and out["M"] != declared:
            raise ConfigError(f"budget mismatch: M={out['M']} but (N-1)k={declared}")
        out["M"] = declared
        if out["k0"] is None:
            out["k0"] = k - 1 if estimator == "br-snis-bootstrap" else 0
        if not 0 <= out["k0"] < k:
            raise ConfigError("k0 must lie in [0, k)")
        if estimator == "br-snis-bootstrap" and not out["rounds"]:
            out["rounds"] = out["M"] // (n - 1)
    return out


def run_replication(estimator: str, built: BuiltModel, point: dict,
                    rng: np.random.Generator) -> tuple[float, int]:
    """One estimate plus the instrumented proposal-draw count."""
    counter = CountingModel(built.model)
    f = built.f
    if estimator == "snis":
        m = point["M"]
        draws = counter.propose(rng, m)
        estimate = snis_estimate(WeightedSampleSet(counter.log_weight(draws), f(draws)))
    elif estimator == "isir-state":
        cfg = ChainConfig(point["N"], point["k"], "proposal")
        trace = run_chain(counter, f, cfg, rng)
        estimate = float(np.mean(f(trace.states[point["k0"] + 1:])))
    elif estimator == "br-snis":
        cfg = ChainConfig(point["N"], point["k"], "proposal")
        trace = run_chain(counter, f, cfg, rng)
        estimate = rolling_estimate(trace, point["k0"])
    elif estimator == "br-snis-bootstrap":
        bank = build_sample_bank(counter, f, point["M"], rng)
        cfg = RollingConfig(point["N"], point["k"], point["k0"])
        estimate = bootstrap_br_snis(bank, cfg, point["rounds"], rng)
    else:
        raise ConfigError(f"unknown estimator '{estimator}'")
    return float(estimate), counter.proposal_draws


def _point_bounds(estimator: str, point: dict, omega: float, kappa: float,
                  sup_bound: float) -> dict:
    """Theoretical bounds matching one grid point, scaled by the f bound."""
    out = {}
    if estimator == "snis":
        out["bias_bound"] = snis_bias_bound(kappa, point["M"]) * sup_bound
        out["mse_bound"] = snis_mse_bound(kappa, point["M"]) * sup_bound ** 2
        out["hpd_bound_delta_0.1"] = snis_hpd_bound(max(omega, 1.0), point["M"], 0.1) \
            * sup_bound
    elif estimator in ("br-snis", "br-snis-bootstrap"):
        consts = bounds_mod.bound_constants(max(omega, 1.0), max(kappa, 1.0),
                                            point["N"])
        out["bias_bound"] = bounds_mod.rolling_bias_bound(
            consts, point["k0"], point["k"]) * sup_bound
        out["mse_bound"] = bounds_mod.rolling_mse_bound(
            consts, point["k0"], point["k"]) * sup_bound ** 2
        out["hpd_bound_delta_0.1"] = bounds_mod.rolling_hpd_bound(
            consts, 0.1, point["k0"], point["k"]) * sup_bound
    elif estimator == "isir-state":
        consts = bounds_mod.bound_constants(max(omega, 1.0), max(kappa, 1.0),
                                            point["N"])
        out["mixing_rate"] = consts.rate
        out["mixing_time"] = consts.t_mix
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_bounds(config: dict) -> int:
    built = build_model(config["model"])
    omega, kappa, estimated = resolve_constants(config, built)
    grid = config.get("grid", [])
    entries = []
    for point in grid:
        n = point.get("N")
        if n is None:
            raise ConfigError("bounds grid entries need N")
        consts = bounds_mod.bound_constants(max(omega, 1.0), max(kappa, 1.0), int(n))
        entry = consts.as_dict()
        k = point.get("k")
        k0 = point.get("k0", 0)
        if k:
            entry["pool_bias_bound"] = bounds_mod.pool_bias_bound(consts, int(k))
            entry["pool_mse_bound"] = bounds_mod.pool_mse_bound(consts)
            entry["rolling_bias_bound"] = bounds_mod.rolling_bias_bound(
                consts, int(k0), int(k))
            entry["rolling_mse_bound"] = bounds_mod.rolling_mse_bound(
                consts, int(k0), int(k))
            entry["rolling_hpd_bound_delta_0.1"] = bounds_mod.rolling_hpd_bound(
                consts, 0.1, int(k0), int(k))
        if point.get("M"):
            entry["snis_bias_bound"] = snis_bias_bound(kappa, int(point["M"]))
            entry["snis_mse_bound"] = snis_mse_bound(kappa, int(point["M"]))
        entries.append(entry)
    payload = {
        "model": built.label,
        "omega": omega,
        "kappa": kappa,
        "estimated": estimated,
        "entries": entries,
    }
    json.dump(payload, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def _format_row(values) -> str:
    return ",".join(repr(v) if isinstance(v, float) else str(v) for v in values)


def cmd_experiment(config: dict, threads: int) -> int:
    built = build_model(config["model"])
    estimator = config.get("estimator", "snis")
    if estimator not in ESTIMATORS:
        raise ConfigError(f"estimator must be one of {ESTIMATORS}")
    grid = [_normalize_grid_point(estimator, p) for p in config.get("grid", [])]
    if not grid:
        raise ConfigError("experiment needs a non-empty grid")
    replications = int(config.get("replications", 1))
    batch_size = int(config.get("batch_size", replications))
    seed = int(config.get("seed", 0))
    out_path = config.get("out")
    if not out_path:
        raise ConfigError("experiment needs an output path")
    omega, kappa, estimated = resolve_constants(config, built)

    def one(args):
        grid_index, replication = args
        rng = replication_rng(seed, grid_index, replication)
        return run_replication(estimator, built, grid[grid_index], rng)

    rows = []
    summary_points = []
    for grid_index, point in enumerate(grid):
        jobs = [(grid_index, r) for r in range(replications)]
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, jobs))
        else:
            results = [one(job) for job in jobs]
        estimates = np.array([r[0] for r in results])
        draw_counts = sorted({r[1] for r in results})
        for replication, (estimate, _) in enumerate(results):
            rows.append(_format_row([
                replication, estimator, point["N"] or "", point["k"] or "",
                point["k0"] if point["k0"] is not None else "",
                point["rounds"] or "", point["M"],
                seed_fingerprint(seed, grid_index, replication), estimate,
            ]))
        entry = {
            "estimator": estimator,
            "grid_index": grid_index,
            "N": point["N"], "k": point["k"], "k0": point["k0"],
            "rounds": point["rounds"], "M": point["M"],
            "replications": replications,
            "proposal_draws_per_replication": draw_counts,
            "mean_estimate": float(estimates.mean()),
            "bounds": _point_bounds(estimator, point, omega, kappa,
                                    built.f.sup_bound),
        }
        if built.truth is not None:
            stats = replication_stats(estimates, built.truth, batch_size)
            entry.update({
                "truth": built.truth,
                "bias": stats.bias,
                "bias_se": stats.bias_se,
                "mse": stats.mse,
                "mse_se": stats.mse_se,
            })
        summary_points.append(entry)

    header = "replication,estimator,N,k,k0,rounds,M,seed,estimate"
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        fh.write("\n".join(rows) + "\n")
    summary = {
        "model": built.label,
        "estimator": estimator,
        "seed": seed,
        "omega": omega,
        "kappa": kappa,
        "constants_estimated": estimated,
        "points": summary_points,
    }
    with open(out_path + ".summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 0


def _diagnose_sw(config: dict, built: BuiltModel, section: dict) -> tuple[list[str], dict]:
    if built.model.target_sample is None:
        raise ConfigError("sliced Wasserstein diagnostics need an exact target sampler")
    seed = int(config.get("seed", 0))
    n_grid = [int(n) for n in section.get("N", [8, 32, 128])]
    k_max = int(section.get("k_max", 10))
    chains = int(section.get("chains", 1000))
    groups = int(section.get("groups", 8))
    n_projections = int(section.get("projections", 100))
    omega, kappa, _ = resolve_constants(config, built)
    rows = []
    summary = {"per_n": []}
    for gi, n in enumerate(n_grid):
        rng = replication_rng(seed, gi, 0)
        sw_by_k = np.empty((groups, k_max + 1))
        for group in range(groups):
            batch = run_chains(built.model, built.f, n, k_max, chains, rng,
                               init="proposal", keep_states=True)
            reference = built.model.target_sample(rng, chains)
            for k in range(k_max + 1):
                proj_rng = np.random.default_rng(
                    np.random.SeedSequence([seed, _REFERENCE_STREAM, gi, k]))
                sw_by_k[group, k] = sliced_wasserstein(
                    batch.states[:, k], reference, n_projections, proj_rng)
        means = sw_by_k.mean(axis=0)
        ses = sw_by_k.std(axis=0, ddof=1) / np.sqrt(groups)
        for k in range(k_max + 1):
            rows.append(_format_row(["sw", n, k, float(means[k]), float(ses[k])]))
        rate = bounds_mod.mixing_rate(max(omega, 1.0), n)
        # Fit the decay over the descent only; past the equal-sample noise
        # floor the curve flattens and would wash out the slope.
        floor = means[-1]
        descending = np.nonzero(means[1:] > 1.5 * floor)[0]
        last = max(int(descending[-1]) + 1, 3) if descending.size else 3
        last = min(last, k_max)
        slope, intercept = fit_geometric_rate(np.maximum(means[1:last + 1], 1e-12),
                                              ks=np.arange(1, last + 1))
        summary["per_n"].append({
            "N": n, "fitted_slope": slope, "fitted_intercept": intercept,
            "log_mixing_rate": float(np.log(rate)),
            "mixing_time": bounds_mod.mixing_time(rate),
        })
    header = "diagnostic,N,k,value,se"
    return [header] + rows, summary


def _diagnose_tv(config: dict, built: BuiltModel, section: dict) -> tuple[list[str], dict]:
    seed = int(config.get("seed", 0))
    budgets = [int(m) for m in section.get("budgets", [32, 512])]
    replications = int(section.get("replications", 1000))
    n_test = int(section.get("test_points", 200))
    reference_draws = int(section.get("reference_draws", 10 ** 6))
    model = built.model
    data_rng = _stream_rng(seed, _DATA_STREAM)
    x_test = data_rng.standard_normal((n_test, model.dim))

    ref_rng = _stream_rng(seed, _REFERENCE_STREAM)
    ref_points = model.propose(ref_rng, reference_draws)
    ref_weights = WeightedSampleSet(model.log_weight(ref_points),
                                    logistic_predictive(ref_points, x_test))
    reference = snis_estimate(ref_weights)

    predictive = TestFunction(fn=lambda pts: logistic_predictive(pts, x_test),
                              sup_bound=1.0)
    rows = []
    summary = {"per_budget": []}
    for gi, m in enumerate(budgets):
        n = int(section.get("N", 9)) if m <= 64 else int(section.get("N_large", 33))
        k = m // (n - 1)
        cfg = RollingConfig(n, k, k - 1)
        rounds = m // (n - 1)
        snis_sum = np.zeros(n_test)
        br_sum = np.zeros(n_test)
        tv_snis = np.empty(replications)
        tv_br = np.empty(replications)
        for r in range(replications):
            rng = replication_rng(seed, gi, r)
            bank = build_sample_bank(model, predictive, m, rng)
            p_snis = snis_estimate(WeightedSampleSet(bank.log_weights, bank.f_values))
            p_br = bootstrap_br_snis(bank, cfg, rounds, rng)
            snis_sum += p_snis
            br_sum += p_br
            tv_snis[r] = tv_predictive(PredictiveTable(np.clip(p_snis, 0, 1), reference))
            tv_br[r] = tv_predictive(PredictiveTable(np.clip(p_br, 0, 1), reference))
            rows.append(_format_row(["tv", "snis", m, r, float(tv_snis[r])]))
            rows.append(_format_row(["tv", "br-snis-bootstrap", m, r, float(tv_br[r])]))
        summary["per_budget"].append({
            "M": m, "N": n, "k": k, "rounds": rounds,
            "replications": replications,
            "mean_tv_snis": float(tv_snis.mean()),
            "mean_tv_br": float(tv_br.mean()),
            "tv_of_averaged_predictive_snis": tv_predictive(
                PredictiveTable(np.clip(snis_sum / replications, 0, 1), reference)),
            "tv_of_averaged_predictive_br": tv_predictive(
                PredictiveTable(np.clip(br_sum / replications, 0, 1), reference)),
        })
    header = "diagnostic,estimator,M,replication,tv"
    return [header] + rows, summary


def cmd_diagnose(config: dict) -> int:
    built = build_model(config["model"])
    section = config.get("diagnostic")
    if not isinstance(section, dict) or "kind" not in section:
        raise ConfigError("diagnose needs a diagnostic section with a kind")
    out_path = config.get("out")
    if not out_path:
        raise ConfigError("diagnose needs an output path")
    kind = section["kind"]
    if kind == "sw":
        lines, summary = _diagnose_sw(config, built, section)
    elif kind == "tv":
        if config["model"].get("name") != "logistic-synthetic":
            raise ConfigError("tv diagnostics need the logistic-synthetic model")
        lines, summary = _diagnose_tv(config, built, section)
    else:
        raise ConfigError(f"unknown diagnostic kind '{kind}'")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    summary["model"] = built.label
    summary["kind"] = kind
    with open(out_path + ".summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brsnis",
        description="Importance sampling estimators, bound evaluators and "
                    "diagnostics driven by a JSON config.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("bounds", "print bound constants and bound values as JSON"),
        ("experiment", "run replicated estimates and write CSV plus summary"),
        ("diagnose", "run distance diagnostics and write CSV plus summary"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--seed", type=int, default=None, help="base seed override")
        cmd.add_argument("--out", default=None, help="output path override")
        cmd.add_argument("--threads", type=int, default=1,
                         help="worker threads for replications")
        cmd.add_argument("--override", action="append", default=[],
                         metavar="KEY=VALUE", help="config override, dotted keys")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        config = load_config(args.config, args.override, args.seed, args.out)
        if args.command == "bounds":
            return cmd_bounds(config)
        if args.command == "experiment":
            return cmd_experiment(config, max(1, args.threads))
        return cmd_diagnose(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001  runtime failures map to exit 3
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
