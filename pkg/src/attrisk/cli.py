"""Command-line front end.

Subcommands: ``fit`` (tune + sample + analyze + write results),
``validate`` (parse and check inputs only), ``phi-ci`` (single-year
population-percentile interval), ``threshold`` (event-definition percentile
arithmetic) and ``generate`` (synthetic fixture files).

A fit run is configured by a plain-text ``key = value`` manifest and/or
command-line flags; flags override manifest entries, and every run-length
default mirrors the reference run interface (10000 iterations, keep from
the first, thinning 1, six tuning cycles of 400/400/400/800/800/800, yearly
proposal correlation -0.98, logit bound 15). Outputs are a function of the
inputs and the seed alone: no timestamps, no environment-dependent content.

Exit codes: 0 success; 2 usage or manifest syntax; 3 missing input file;
4 invalid input file contents; 5 invalid configuration; 6 runtime failure;
7 output not writable.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, analysis, dataio, kernels, sampler, single_year, synthetic
from .model import CovariateSeries, ParamState, PriorConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_INPUT = 4
EXIT_BAD_CONFIG = 5
EXIT_RUNTIME = 6
EXIT_UNWRITABLE = 7


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

_MANIFEST_DEFAULTS = {
    "event_type": None,
    "region": None,
    "bounds_file": None,
    "logit_bound": "15",
    "iterations": "10000",
    "burn_in": "0",
    "thin": "1",
    "tune_cycles": "6",
    "tune_iterations": "400,400,400,800,800,800",
    "cutoffs": "1,2,10",
    "direction": "greater",
    "ref_window": "5",
    "x_star_A": None,
    "x_star_N": None,
    "quantiles": "0.025,0.975",
    "corr_alpha_delta": "-0.98",
    "corr_beta_A": "0",
    "corr_beta_N": "0",
    "beta_sd": "10",
    "var_upper": "1000",
    "var_lower": "0",
    "cauchy_scale": "10",
    "chains": "1",
    "dump_draws": "false",
    "backend": None,
}

_REQUIRED_KEYS = ("region_file", "covariate_file", "event_type", "seed", "output_dir")


@dataclass(frozen=True)
class RunManifest:
    """Validated configuration of one fit run."""

    region_file: str
    covariate_file: str
    event_type: str
    seed: int
    output_dir: str
    logit_bound: float | None
    region: str | None
    bounds_file: str | None
    iterations: int
    burn_in: int
    thin: int
    tune_cycles: int
    tune_iterations: tuple[int, ...]
    cutoffs: tuple[float, ...]
    direction: str
    ref_window: int
    x_star_A: float | None
    x_star_N: float | None
    quantiles: tuple[float, float]
    corr_alpha_delta: float
    corr_beta_A: float
    corr_beta_N: float
    beta_sd: float
    var_upper: float
    var_lower: float
    cauchy_scale: float
    chains: int
    dump_draws: bool
    backend: str | None


def parse_manifest_file(path) -> dict:
    """Plain-text key = value document; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_MISSING_FILE, f"manifest not found: {path}")
    out = {}
    for i, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_USAGE, f"{path}: line {i}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise CliError(EXIT_USAGE, f"{path}: line {i}: empty key")
        if key in out:
            raise CliError(EXIT_USAGE, f"{path}: line {i}: duplicate key {key!r}")
        out[key] = value
    return out


def _to_float(value: str, key: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise CliError(EXIT_BAD_CONFIG, f"{key}: not a number ({value!r})") from None


def _to_int(value: str, key: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise CliError(EXIT_BAD_CONFIG, f"{key}: not an integer ({value!r})") from None


def build_manifest(raw: dict) -> RunManifest:
    merged = dict(_MANIFEST_DEFAULTS)
    merged.update({k: v for k, v in raw.items() if v is not None})
    unknown = set(merged) - set(_MANIFEST_DEFAULTS) - set(_REQUIRED_KEYS)
    if unknown:
        raise CliError(EXIT_USAGE, f"unknown manifest keys: {sorted(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if not merged.get(k)]
    if missing:
        raise CliError(EXIT_USAGE, f"missing required settings: {missing}")

    bound_raw = merged["logit_bound"]
    if isinstance(bound_raw, str) and bound_raw.lower() in ("none", "inactive"):
        bound = None
    else:
        bound = _to_float(bound_raw, "logit_bound")

    def floats(key):
        return tuple(_to_float(tok, key) for tok in str(merged[key]).split(","))

    def ints(key):
        return tuple(_to_int(tok.strip(), key) for tok in str(merged[key]).split(","))

    quantiles = floats("quantiles")
    if len(quantiles) != 2 or not (0 < quantiles[0] < quantiles[1] < 1):
        raise CliError(EXIT_BAD_CONFIG, "quantiles must be two ordered values in (0, 1)")

    return RunManifest(
        region_file=str(merged["region_file"]),
        covariate_file=str(merged["covariate_file"]),
        event_type=str(merged["event_type"]),
        seed=_to_int(str(merged["seed"]), "seed"),
        output_dir=str(merged["output_dir"]),
        logit_bound=bound,
        region=merged.get("region"),
        bounds_file=merged.get("bounds_file"),
        iterations=_to_int(str(merged["iterations"]), "iterations"),
        burn_in=_to_int(str(merged["burn_in"]), "burn_in"),
        thin=_to_int(str(merged["thin"]), "thin"),
        tune_cycles=_to_int(str(merged["tune_cycles"]), "tune_cycles"),
        tune_iterations=ints("tune_iterations"),
        cutoffs=floats("cutoffs"),
        direction=str(merged["direction"]),
        ref_window=_to_int(str(merged["ref_window"]), "ref_window"),
        x_star_A=None if merged["x_star_A"] is None else _to_float(str(merged["x_star_A"]), "x_star_A"),
        x_star_N=None if merged["x_star_N"] is None else _to_float(str(merged["x_star_N"]), "x_star_N"),
        quantiles=(quantiles[0], quantiles[1]),
        corr_alpha_delta=_to_float(str(merged["corr_alpha_delta"]), "corr_alpha_delta"),
        corr_beta_A=_to_float(str(merged["corr_beta_A"]), "corr_beta_A"),
        corr_beta_N=_to_float(str(merged["corr_beta_N"]), "corr_beta_N"),
        beta_sd=_to_float(str(merged["beta_sd"]), "beta_sd"),
        var_upper=_to_float(str(merged["var_upper"]), "var_upper"),
        var_lower=_to_float(str(merged["var_lower"]), "var_lower"),
        cauchy_scale=_to_float(str(merged["cauchy_scale"]), "cauchy_scale"),
        chains=_to_int(str(merged["chains"]), "chains"),
        dump_draws=str(merged["dump_draws"]).lower() in ("1", "true", "yes"),
        backend=merged.get("backend"),
    )


def _load_inputs(manifest: RunManifest):
    """Validate and load every input named by the manifest."""
    for key in ("region_file", "covariate_file"):
        if not Path(getattr(manifest, key)).is_file():
            raise CliError(EXIT_MISSING_FILE, f"{key} not found: {getattr(manifest, key)}")
    if manifest.bounds_file is not None and not Path(manifest.bounds_file).is_file():
        raise CliError(EXIT_MISSING_FILE, f"bounds_file not found: {manifest.bounds_file}")

    try:
        panel, meta = dataio.load_region(manifest.region_file, manifest.event_type)
        covfile = dataio.load_covariates(manifest.covariate_file)
    except dataio.DataFileError as exc:
        raise CliError(EXIT_BAD_INPUT, str(exc)) from exc
    covs = covfile.series()
    if covs.n_years != panel.n_years:
        raise CliError(EXIT_BAD_INPUT,
                       f"{manifest.covariate_file}: {covs.n_years} years of covariates for "
                       f"{panel.n_years} years of counts in {manifest.region_file}")

    bound = manifest.logit_bound
    if manifest.bounds_file is not None:
        if manifest.region is None:
            raise CliError(EXIT_BAD_CONFIG, "bounds_file given but no region to look up")
        try:
            table = dataio.load_bounds(manifest.bounds_file)
        except dataio.DataFileError as exc:
            raise CliError(EXIT_BAD_INPUT, str(exc)) from exc
        if manifest.region not in table:
            raise CliError(EXIT_BAD_INPUT,
                           f"{manifest.bounds_file}: region {manifest.region!r} not present")
        bound = -table[manifest.region][manifest.event_type]

    try:
        prior = PriorConfig(beta_sd=manifest.beta_sd, var_upper=manifest.var_upper,
                            cauchy_scale=manifest.cauchy_scale, logit_bound=bound,
                            var_lower=manifest.var_lower)
        config = sampler.SamplerConfig(
            seed=manifest.seed, iterations=manifest.iterations, burn_in=manifest.burn_in,
            thin=manifest.thin, tune_cycles=manifest.tune_cycles,
            tune_iterations=manifest.tune_iterations,
            prop_corr_alpha_delta=manifest.corr_alpha_delta,
            prop_corr_beta_A=manifest.corr_beta_A, prop_corr_beta_N=manifest.corr_beta_N,
        )
    except ValueError as exc:
        raise CliError(EXIT_BAD_CONFIG, str(exc)) from exc
    if manifest.chains < 1:
        raise CliError(EXIT_BAD_CONFIG, "chains must be >= 1")
    if manifest.direction not in ("greater", "less", "between"):
        raise CliError(EXIT_BAD_CONFIG, f"unknown direction {manifest.direction!r}")
    if manifest.direction == "between" and len(manifest.cutoffs) != 2:
        raise CliError(EXIT_BAD_CONFIG, "direction 'between' needs exactly two cutoffs")
    if manifest.backend is not None and manifest.backend not in kernels.available_backends():
        raise CliError(EXIT_BAD_CONFIG,
                       f"backend {manifest.backend!r} unavailable; built: {kernels.available_backends()}")
    if not (1 <= manifest.ref_window <= panel.n_years):
        raise CliError(EXIT_BAD_CONFIG, "ref_window must fit inside the year range")
    return panel, meta, covs, prior, config


def _chain_seeds(seed: int, chains: int) -> list[int]:
    if chains == 1:
        return [seed]
    return [int(ss.generate_state(1)[0]) for ss in np.random.SeedSequence(seed).spawn(chains)]


def _run_chain_job(args):
    panel, covs, prior, config, backend = args
    return sampler.run_sampler(panel, covs, prior, config, backend=backend)


def cmd_fit(manifest: RunManifest) -> int:
    panel, meta, covs, prior, config = _load_inputs(manifest)

    seeds = _chain_seeds(manifest.seed, manifest.chains)
    jobs = [(panel, covs, prior, replace(config, seed=s), manifest.backend) for s in seeds]
    try:
        if manifest.chains > 1:
            with ProcessPoolExecutor(max_workers=min(manifest.chains, 4)) as pool:
                chains = list(pool.map(_run_chain_job, jobs))
        else:
            chains = [_run_chain_job(jobs[0])]
    except RuntimeError as exc:
        raise CliError(EXIT_RUNTIME, str(exc)) from exc
    draws = chains[0] if len(chains) == 1 else sampler.merge_draws(chains)

    levels = manifest.quantiles
    if manifest.x_star_A is not None and manifest.x_star_N is not None:
        x_star = (manifest.x_star_A, manifest.x_star_N)
    else:
        x_star = analysis.reference_covariates(covs, manifest.ref_window)

    series = {
        "p_A": analysis.probability_series(draws, covs, "A", levels),
        "p_N": analysis.probability_series(draws, covs, "N", levels),
        "rr": analysis.risk_ratio_series(draws, covs, levels),
        "adj_rr": analysis.adjusted_risk_ratio_series(draws, *x_star, levels),
    }
    if manifest.direction == "between":
        pi_list = [analysis.exceedance_pi(draws, *x_star, manifest.cutoffs, "between", levels)]
    else:
        pi_list = [analysis.exceedance_pi(draws, *x_star, (c,), manifest.direction, levels)
                   for c in manifest.cutoffs]
    sig_med, sig_lo, sig_hi = analysis.sigma_summary(draws, levels)
    s2_lo, s2_med, s2_hi = (float(v) for v in np.quantile(draws.sigma2, [levels[0], 0.5, levels[1]]))

    def rates_payload(chain_list):
        return [
            {key: np.atleast_1d(np.asarray(val, dtype=float)).tolist()
             for key, val in c.acceptance_rates.items()}
            for c in chain_list
        ]

    summary = {
        "tool": {"name": "attrisk", "version": __version__},
        "backend": chains[0].backend,
        "seed": manifest.seed,
        "chain_seeds": seeds,
        "chains": manifest.chains,
        "event_type": manifest.event_type,
        "region_file": manifest.region_file,
        "covariate_file": manifest.covariate_file,
        "logit_bound": prior.logit_bound,
        "sampler": {
            "iterations": config.iterations,
            "burn_in": config.burn_in,
            "thin": config.thin,
            "tune_cycles": config.tune_cycles,
            "tune_iterations": list(config.tune_iterations),
            "target_accept": list(config.target_accept),
            "prop_corr_alpha_delta": config.prop_corr_alpha_delta,
            "prop_corr_beta_A": config.prop_corr_beta_A,
            "prop_corr_beta_N": config.prop_corr_beta_N,
            "warm_start_from_tuning": True,
        },
        "prior": {
            "beta_sd": prior.beta_sd,
            "var_lower": prior.var_lower,
            "var_upper": prior.var_upper,
            "cauchy_scale": prior.cauchy_scale,
            "logit_bound": prior.logit_bound,
        },
        "retained_per_chain": len(chains[0]),
        "retained_total": len(draws),
        "quantile_levels": list(levels),
        "x_star": {"A": x_star[0], "N": x_star[1]},
        "sigma": {"median": sig_med, "lower": sig_lo, "upper": sig_hi},
        "sigma2": {"median": s2_med, "lower": s2_lo, "upper": s2_hi},
        "pi": [
            {"cutoff": list(p.cutoff), "direction": p.direction,
             "lower": p.lower, "median": p.median, "upper": p.upper, "category": p.category}
            for p in pi_list
        ],
        "acceptance_rates": rates_payload(chains),
        "acceptance_in_band_fraction": sampler.acceptance_band_fraction(chains[0]),
        "proposal_sds": {key: np.atleast_1d(np.asarray(val, dtype=float)).tolist()
                         for key, val in chains[0].proposal_sds.items()},
    }

    try:
        written = dataio.write_results(manifest.output_dir, series, summary,
                                       draws=draws if manifest.dump_draws else None)
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write outputs: {exc}") from exc

    years = panel.years
    print(f"fit: {meta.path} event={manifest.event_type} T={panel.n_years} "
          f"years {years[0]}-{years[-1]} backend={chains[0].backend}")
    print(f"retained draws: {len(draws)} (chains={manifest.chains}, iterations={config.iterations}, "
          f"burn_in={config.burn_in}, thin={config.thin})")
    print(f"sigma (sd of yearly log-RR effects): median={sig_med:.4g} "
          f"{100 * (levels[1] - levels[0]):.0f}% CI [{sig_lo:.4g}, {sig_hi:.4g}]")
    for p in pi_list:
        cut = ",".join(f"{c:g}" for c in p.cutoff)
        print(f"pi({p.direction} {cut}): median={p.median:.3f} CI [{p.lower:.3f}, {p.upper:.3f}] "
              f"category={p.category}")
    print("outputs: " + ", ".join(written))
    return EXIT_OK


def cmd_validate(manifest: RunManifest) -> int:
    panel, meta, covs, prior, config = _load_inputs(manifest)
    print(f"ok: {meta.path} event={manifest.event_type} T={panel.n_years}, "
          f"covariates {covs.n_years} years, logit_bound={prior.logit_bound}, "
          f"retaining {config.n_keep} draws per chain")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Small subcommands
# ---------------------------------------------------------------------------


def threshold_percentiles(block_length_years: float, months_per_year: float) -> tuple[float, float]:
    """Percentile pair defining a one-in-N-years event on per-month data.

    Returns (upper, lower) in percent: the upper tail cut for large extremes
    and the mirrored lower tail cut for small extremes.
    """
    if block_length_years <= 0 or months_per_year <= 0:
        raise ValueError("block length and months per year must be positive")
    frac = (1.0 / block_length_years) / months_per_year
    return 100.0 * (1.0 - frac), 100.0 * frac


def cmd_threshold(block_years: float, months_per_year: float) -> int:
    upper, lower = threshold_percentiles(block_years, months_per_year)
    print(f"upper_percentile={upper:.2f}")
    print(f"lower_percentile={lower:.2f}")
    print(f"exact: upper={upper!r} lower={lower!r}")
    return EXIT_OK


def cmd_phi_ci(xi_hat: float, sampling_var: float, sigma2: float, percentile: float,
               confidence: float, sigma2_interval=None, as_json: bool = False) -> int:
    try:
        inp = single_year.StudyInput(xi_hat, sampling_var, sigma2, percentile, confidence)
        ci = single_year.phi_ci(inp)
        verdict = single_year.robustness_verdict(inp)
        widened = None
        if sigma2_interval is not None:
            widened = single_year.phi_ci_sigma2_range(inp, *sigma2_interval)
    except ValueError as exc:
        raise CliError(EXIT_BAD_CONFIG, str(exc)) from exc
    record = {
        "xi_hat": xi_hat,
        "sampling_var": sampling_var,
        "sigma2": sigma2,
        "percentile_p": percentile,
        "confidence": confidence,
        "log_interval": [ci.lower, ci.upper],
        "ratio_interval": [ci.ratio_lower, ci.ratio_upper],
        "verdict": verdict,
    }
    if widened is not None:
        record["sigma2_interval"] = list(sigma2_interval)
        record["log_interval_sigma2_range"] = [widened.lower, widened.upper]
        record["ratio_interval_sigma2_range"] = [widened.ratio_lower, widened.ratio_upper]
    if as_json:
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"log-scale interval: [{ci.lower:.6g}, {ci.upper:.6g}]")
        print(f"ratio-scale interval: [{ci.ratio_lower:.6g}, {ci.ratio_upper:.6g}]")
        if widened is not None:
            print(f"with sigma2 in [{sigma2_interval[0]:g}, {sigma2_interval[1]:g}] "
                  f"(heuristic): log [{widened.lower:.6g}, {widened.upper:.6g}]")
        print(f"verdict: {verdict}")
    return EXIT_OK


def cmd_generate(spec_path, out_dir) -> int:
    spec_path = Path(spec_path)
    if not spec_path.is_file():
        raise CliError(EXIT_MISSING_FILE, f"generator spec not found: {spec_path}")
    try:
        doc = json.loads(spec_path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_BAD_INPUT, f"{spec_path}: invalid JSON ({exc})") from exc
    try:
        spec, event_type, raw_covs = _generator_spec_from_doc(doc, spec_path)
        panel = synthetic.generate_panel(spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_BAD_INPUT, f"{spec_path}: {exc}") from exc

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        dataio.write_region(out / "region.txt", panel, event_type)
        dataio.write_covariates(out / "gmt.txt", raw_covs[0], raw_covs[1])
        truth = {
            "seed": spec.seed,
            "event_type": event_type,
            "years": spec.years.tolist(),
            "ensemble_sizes": spec.ensemble_sizes.tolist(),
            "true_state": _state_to_doc(spec.true_state),
            "files": {"region": "region.txt", "covariates": "gmt.txt"},
        }
        (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write outputs: {exc}") from exc
    print(f"wrote {out / 'region.txt'}, {out / 'gmt.txt'}, {out / 'truth.json'}")
    return EXIT_OK


def _state_to_doc(state: ParamState) -> dict:
    return {
        "alpha": state.alpha.tolist(), "delta": state.delta.tolist(),
        "gamma": state.gamma.tolist(),
        "beta_A": state.beta_A.tolist(), "beta_N": state.beta_N.tolist(),
        "tau2": state.tau2, "sigma2": state.sigma2, "omega2": state.omega2,
    }


def _generator_spec_from_doc(doc: dict, where) -> tuple[synthetic.GeneratorSpec, str, tuple]:
    years = np.asarray(doc["years"], dtype=np.int64)
    if years.size == 0:
        raise ValueError("years must be non-empty")
    sizes = doc.get("ensemble_sizes", "default")
    if isinstance(sizes, str):
        if sizes != "default":
            raise ValueError(f"unknown ensemble_sizes token {sizes!r}")
        sizes = synthetic.default_ensemble_schedule(years.size)
    st = doc["true_state"]
    state = ParamState(
        alpha=np.asarray(st["alpha"], dtype=float),
        delta=np.asarray(st["delta"], dtype=float),
        gamma=np.asarray(st["gamma"], dtype=float),
        beta_A=np.asarray(st["beta_A"], dtype=float),
        beta_N=np.asarray(st["beta_N"], dtype=float),
        tau2=float(st["tau2"]), sigma2=float(st["sigma2"]), omega2=float(st["omega2"]),
    )
    cov_doc = doc["covariates"]
    raw_A = np.asarray(cov_doc["x_A_raw"], dtype=float)
    raw_N = np.asarray(cov_doc["x_N_raw"], dtype=float)
    covs = CovariateSeries.from_raw(raw_A, raw_N)
    event_type = doc.get("event_type", "hot")
    if event_type not in dataio.EVENT_TYPES:
        raise ValueError(f"unknown event_type {event_type!r}")
    spec = synthetic.GeneratorSpec(years, sizes, state, covs, seed=int(doc["seed"]))
    return spec, event_type, (raw_A, raw_N)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_fit_flags(p: argparse.ArgumentParser):
    p.add_argument("--manifest", help="plain-text key = value run manifest")
    p.add_argument("--region-file", dest="region_file")
    p.add_argument("--covariate-file", dest="covariate_file")
    p.add_argument("--event-type", dest="event_type", choices=dataio.EVENT_TYPES)
    p.add_argument("--region", help="region name for the bounds-file lookup")
    p.add_argument("--bounds-file", dest="bounds_file")
    p.add_argument("--logit-bound", dest="logit_bound",
                   help="symmetric logit bound L, or 'none' to disable")
    p.add_argument("--iterations")
    p.add_argument("--burn-in", dest="burn_in")
    p.add_argument("--thin")
    p.add_argument("--tune-cycles", dest="tune_cycles")
    p.add_argument("--tune-iterations", dest="tune_iterations",
                   help="comma list, one length per tuning cycle")
    p.add_argument("--seed", help="chain seed (required; no silent default)")
    p.add_argument("--cutoffs", help="comma list of risk-ratio cutoffs")
    p.add_argument("--direction", choices=("greater", "less", "between"))
    p.add_argument("--ref-window", dest="ref_window",
                   help="trailing years averaged into the reference covariate")
    p.add_argument("--x-star-a", dest="x_star_A", help="explicit reference covariate, factual")
    p.add_argument("--x-star-n", dest="x_star_N", help="explicit reference covariate, counterfactual")
    p.add_argument("--quantiles", help="lower,upper credible levels")
    p.add_argument("--corr-alpha-delta", dest="corr_alpha_delta")
    p.add_argument("--corr-beta-a", dest="corr_beta_A")
    p.add_argument("--corr-beta-n", dest="corr_beta_N")
    p.add_argument("--beta-sd", dest="beta_sd")
    p.add_argument("--var-upper", dest="var_upper")
    p.add_argument("--var-lower", dest="var_lower")
    p.add_argument("--cauchy-scale", dest="cauchy_scale")
    p.add_argument("--chains", help="independent chains merged at summary time")
    p.add_argument("--dump-draws", dest="dump_draws", action="store_const", const="true",
                   help="also write one retained state per line")
    p.add_argument("--backend", choices=("numpy", "compiled"))
    p.add_argument("--out", dest="output_dir")


def _manifest_from_args(args) -> RunManifest:
    raw = {}
    if args.manifest:
        raw.update(parse_manifest_file(args.manifest))
    for key in list(_MANIFEST_DEFAULTS) + list(_REQUIRED_KEYS):
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    return build_manifest(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attrisk",
        description="Hierarchical Bayesian risk-ratio estimation from paired ensemble counts",
    )
    parser.add_argument("--version", action="version", version=f"attrisk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="tune, sample, analyze, write results")
    _add_fit_flags(p_fit)
    p_val = sub.add_parser("validate", help="parse and validate inputs, run nothing")
    _add_fit_flags(p_val)

    p_phi = sub.add_parser("phi-ci", help="single-year population-percentile interval")
    p_phi.add_argument("--xi-hat", type=float, required=True, help="log risk-ratio estimate")
    p_phi.add_argument("--sampling-var", type=float, required=True,
                       help="sampling variance of the estimate (already / ensemble size)")
    p_phi.add_argument("--sigma2", type=float, required=True,
                       help="between-year variance component")
    p_phi.add_argument("--percentile", type=float, default=0.05)
    p_phi.add_argument("--confidence", type=float, default=0.95)
    p_phi.add_argument("--sigma2-interval", help="lo,hi credible range for the heuristic widening")
    p_phi.add_argument("--json", action="store_true", help="emit a JSON record instead of text")

    p_thr = sub.add_parser("threshold", help="event-definition percentile arithmetic")
    p_thr.add_argument("--block-years", type=float, default=10.0)
    p_thr.add_argument("--months-per-year", type=float, default=12.0)

    p_gen = sub.add_parser("generate", help="write a synthetic fixture (region + covariates)")
    p_gen.add_argument("--spec", required=True, help="generator spec (JSON)")
    p_gen.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return cmd_fit(_manifest_from_args(args))
        if args.command == "validate":
            return cmd_validate(_manifest_from_args(args))
        if args.command == "phi-ci":
            interval = None
            if args.sigma2_interval:
                parts = args.sigma2_interval.split(",")
                if len(parts) != 2:
                    raise CliError(EXIT_USAGE, "--sigma2-interval needs lo,hi")
                interval = (float(parts[0]), float(parts[1]))
            return cmd_phi_ci(args.xi_hat, args.sampling_var, args.sigma2,
                              args.percentile, args.confidence, interval, args.json)
        if args.command == "threshold":
            try:
                return cmd_threshold(args.block_years, args.months_per_year)
            except ValueError as exc:
                raise CliError(EXIT_BAD_CONFIG, str(exc)) from exc
        if args.command == "generate":
            return cmd_generate(args.spec, args.out)
        raise CliError(EXIT_USAGE, f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"attrisk: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    raise SystemExit(main())
