"""Batch command-line surface for the full pipeline.

Subcommands: build-index, filter, build-panel, estimate, effects,
simulate.  Options resolve as flags > config file > defaults; every run
writes a manifest echoing the resolved configuration plus input checksums,
and a manifest is itself a valid config file, so a run can be reproduced
by passing it back via --config.

Exit codes: 0 ok, 2 config error, 3 data error, 4 convergence failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile

import numpy as np
import pandas as pd

from . import event_index, latent_filter, panel_builder, ppml, fe_logit, effects
from . import synth
from .hdfe import ConvergenceError

SCHEMA_LINE = "#schema=v1"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(df: pd.DataFrame, path: str) -> None:
    _atomic_write(path, SCHEMA_LINE + "\n" + df.to_csv(index=False))


def read_csv(path: str, required: list[str] | None = None) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    try:
        df = pd.read_csv(path, comment="#")
    except Exception as exc:
        raise DataError(f"{path}: {exc}") from exc
    if required:
        missing = [c for c in required if c not in df.columns]
        if missing:
            raise DataError(f"{path}: missing required columns {missing}")
    return df


def load_config(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def write_manifest(path: str, subcommand: str, resolved: dict, inputs: dict) -> None:
    lines = [f"subcommand={subcommand}"]
    for k in sorted(resolved):
        v = resolved[k]
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k}={v}")
    for name, p in sorted(inputs.items()):
        lines.append(f"input.{name}.sha256={_sha256(p)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _parse_month(s: str) -> tuple[int, int]:
    try:
        y, m = s.split("-")
        return int(y), int(m)
    except Exception as exc:
        raise ConfigError(f"expected YYYY-MM, got {s!r}") from exc


# option tables: (name, type, default, help); config keys match dest names
_OPTS = {
    "build-index": [
        ("events", str, None, "events CSV (pair_id,year,month,goldstein_sum,...)"),
        ("out", str, None, "output monthly index CSV"),
        ("min_coverage", int, 0, "minimum non-zero months per pair"),
        ("window_start", str, "1980-01", "window start YYYY-MM"),
        ("window_end", str, "2024-12", "window end YYYY-MM"),
    ],
    "filter": [
        ("index", str, None, "monthly index CSV with event counts"),
        ("out", str, None, "output filtered CSV"),
        ("particles", int, latent_filter.DEFAULT_PARTICLES, "particle count"),
        ("seed", int, 0, "RNG seed"),
        ("q_floor", float, latent_filter.Q_FLOOR, "process-variance floor"),
        ("q_default", float, latent_filter.Q_DEFAULT, "AR(1) fallback variance"),
        ("min_coverage", int, 0, "coverage threshold before filtering"),
        ("resampling", str, "multinomial", "multinomial or systematic"),
    ],
    "build-panel": [
        ("index", str, None, "monthly index CSV (raw sign)"),
        ("flows", str, None, "flows CSV (origin,destination,period,flow,...)"),
        ("covariates", str, None, "country covariates CSV"),
        ("rta", str, None, "pair RTA CSV (optional)"),
        ("gdp", str, None, "GDP CSV for domestic-trade construction (optional)"),
        ("war_pairs", str, None, "war-pair CSV (country_a,country_b[,start,end])"),
        ("out", str, None, "output panel CSV"),
        ("frequency", str, "annual", "annual or quarterly"),
        ("first_month", bool, False, "use first month of each period"),
        ("min_coverage", int, 0, "coverage threshold"),
        ("drop_countries", str, None, "comma-separated ISO codes to drop"),
        ("trim_pd", str, None, "lo,hi PD quantiles to trim, e.g. 0.01,0.99"),
        ("democratic_only", float, None, "keep pairs with both Polity >= value"),
        ("period_range", str, None, "lo,hi inclusive period range"),
        ("no_zeros", bool, False, "skip structural zero insertion"),
    ],
    "estimate": [
        ("panel", str, None, "panel CSV"),
        ("out", str, None, "output prefix"),
        ("model", str, "ppml", "ppml or logit"),
        ("outcome", str, "flow", "outcome column"),
        ("pd_source", str, "events", "events (IHS transform) or unga"),
        ("collapse_gattwto1", bool, False, "collapse no/one-member categories"),
        ("governance", str, "polity_corruption", "polity_corruption or wgi"),
        ("cluster", str, "fe_pair", "cluster label column"),
        ("spj", bool, False, "split-panel jackknife (logit)"),
        ("bootstrap", int, 0, "bootstrap replications (logit)"),
        ("seed", int, 0, "bootstrap seed"),
        ("tol", float, 1e-8, "IRLS convergence tolerance"),
        ("max_iter", int, 100, "maximum IRLS iterations"),
    ],
    "effects": [
        ("fit", str, None, "fit prefix from estimate"),
        ("out", str, None, "output effects CSV"),
        ("sd", float, None, "one-SD shock size"),
        ("base", str, "x_pd", "base coefficient name"),
        ("condition", str, None, "e.g. x_pd_gattwto2=1,x_pd_rta=0"),
        ("logit_baseline", float, None, "baseline probability for pp effects"),
        ("label", str, None, "effect label"),
    ],
    "simulate": [
        ("out", str, None, "output panel CSV"),
        ("truth_out", str, None, "ground-truth JSON (optional)"),
        ("seed", int, 0, "DGP seed"),
        ("countries", int, 20, "number of countries"),
        ("periods", int, 6, "number of periods"),
        ("family", str, "poisson", "poisson or bernoulli"),
    ],
}

_REQUIRED = {
    "build-index": ["events", "out"],
    "filter": ["index", "out"],
    "build-panel": ["index", "flows", "covariates", "out"],
    "estimate": ["panel", "out"],
    "effects": ["fit", "out", "sd"],
    "simulate": ["out"],
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polgrav", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, opts in _OPTS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None,
                       help="key=value config file (flags override)")
        for opt, typ, _default, help_ in opts:
            flag = "--" + opt.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True,
                               default=None, help=help_)
            else:
                p.add_argument(flag, type=typ, default=None, help=help_)
    return parser


def _resolve(subcommand: str, args: argparse.Namespace) -> dict:
    config = load_config(args.config) if args.config else {}
    resolved = {}
    known = set()
    for opt, typ, default, _ in _OPTS[subcommand]:
        known.add(opt)
        flag_val = getattr(args, opt)
        if flag_val is not None:
            resolved[opt] = flag_val
        elif opt in config:
            raw = config[opt]
            if typ is bool:
                resolved[opt] = raw.lower() in ("1", "true", "yes")
            else:
                resolved[opt] = typ(raw)
        else:
            resolved[opt] = default
    for key in config:
        if key not in known and key != "subcommand" and not key.startswith("input."):
            raise ConfigError(f"unknown config key {key!r} for {subcommand}")
    missing = [k for k in _REQUIRED[subcommand] if resolved.get(k) is None]
    if missing:
        raise ConfigError(f"{subcommand}: missing required options {missing}")
    return resolved


def _cmd_build_index(cfg: dict) -> dict:
    panel = event_index.EventPanel(
        read_csv(cfg["events"], required=event_index.EVENTS_COLUMNS)
    )
    series = event_index.build_monthly_series(
        panel,
        window_start=_parse_month(cfg["window_start"]),
        window_end=_parse_month(cfg["window_end"]),
    )
    kept, fraction = event_index.apply_coverage_threshold(
        series, cfg["min_coverage"]
    )
    frame = event_index.series_to_frame(kept)
    write_csv(frame, cfg["out"])
    return {"events": cfg["events"]}


def _cmd_filter(cfg: dict) -> dict:
    df = read_csv(cfg["index"], required=["pair_id", "value"])
    series = event_index.frame_to_series(df)
    for pair_id, s in series.items():
        if s.event_counts is None:
            raise DataError(f"{cfg['index']}: missing event_count column")
    kept, _ = event_index.apply_coverage_threshold(series, cfg["min_coverage"])
    filtered = latent_filter.filter_panel(
        kept,
        particle_count=cfg["particles"],
        seed=cfg["seed"],
        resampling=cfg["resampling"],
        q_floor=cfg["q_floor"],
        q_default=cfg["q_default"],
    )
    rows = []
    for pair_id in sorted(filtered):
        f = filtered[pair_id]
        cov = kept[pair_id].coverage_months
        for p, m, e in zip(f.periods, f.posterior_mean, f.effective_sample_size):
            year, month = event_index.split_month_index(int(p))
            rows.append(
                {
                    "pair_id": pair_id,
                    "frequency": "monthly",
                    "year": year,
                    "month": month,
                    "value": m,
                    "ess": e,
                    "coverage_months": cov,
                    "filtered": 1,
                    "sign_convention": "raw",
                }
            )
    write_csv(pd.DataFrame(rows), cfg["out"])
    return {"index": cfg["index"]}


def _cmd_build_panel(cfg: dict) -> dict:
    inputs = {"index": cfg["index"], "flows": cfg["flows"],
              "covariates": cfg["covariates"]}
    idx = read_csv(cfg["index"], required=["pair_id", "value"])
    series = event_index.frame_to_series(idx)
    kept, _ = event_index.apply_coverage_threshold(series, cfg["min_coverage"])
    if cfg["frequency"] not in ("annual", "quarterly"):
        raise ConfigError(f"unknown frequency {cfg['frequency']!r}")
    mode = "first_month" if cfg["first_month"] else "sum"
    pd_rows = []
    for pair_id in sorted(kept):
        agg = event_index.aggregate_period(kept[pair_id], cfg["frequency"], mode)
        neg = event_index.negate_for_regression(agg)
        for p, v in zip(neg.periods, neg.values):
            pd_rows.append({"pair_id": pair_id, "period": int(p), "value": v})
    pd_values = pd.DataFrame(pd_rows, columns=["pair_id", "period", "value"])

    flows = read_csv(cfg["flows"], required=["origin", "destination", "period",
                                             "flow"])
    cov = read_csv(cfg["covariates"], required=["country", "period"])
    rta = None
    if cfg["rta"]:
        rta = read_csv(cfg["rta"], required=["country_a", "country_b", "period",
                                             "rta"])
        inputs["rta"] = cfg["rta"]
    gdp = None
    if cfg["gdp"]:
        gdp = read_csv(cfg["gdp"], required=["country", "period", "gdp"])
        inputs["gdp"] = cfg["gdp"]

    panel = panel_builder.assemble_panel(
        flows, pd_values, cov, rta=rta, gdp=gdp, insert_zeros=not cfg["no_zeros"]
    )

    war_pairs = None
    if cfg["war_pairs"]:
        wp = read_csv(cfg["war_pairs"], required=["country_a", "country_b"])
        inputs["war_pairs"] = cfg["war_pairs"]
        war_pairs = [
            tuple(r[c] for c in ("country_a", "country_b", "start", "end")
                  if c in wp.columns)
            for r in wp.to_dict("records")
        ]
    trim = None
    if cfg["trim_pd"]:
        lo, hi = (float(x) for x in cfg["trim_pd"].split(","))
        trim = (lo, hi)
    period_range = None
    if cfg["period_range"]:
        lo, hi = (int(x) for x in cfg["period_range"].split(","))
        period_range = (lo, hi)
    drop_countries = (
        cfg["drop_countries"].split(",") if cfg["drop_countries"] else None
    )
    try:
        panel = panel_builder.apply_sample_filters(
            panel,
            drop_countries=drop_countries,
            democratic_pairs_only=cfg["democratic_only"],
            drop_war_pairs=war_pairs,
            period_range=period_range,
            trim_pd_quantiles=trim,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_csv(panel, cfg["out"])
    return inputs


def _cmd_estimate(cfg: dict) -> dict:
    needed = ["origin", "destination", "period", cfg["outcome"], "pd", "rta",
              "gattwto1", "gattwto2"]
    panel = read_csv(cfg["panel"], required=needed)
    if "fe_pair" not in panel.columns:
        panel = panel_builder.attach_fe_labels(panel)
    try:
        panel, regressors = panel_builder.build_interactions(
            panel,
            collapse_gattwto1=cfg["collapse_gattwto1"],
            governance=cfg["governance"],
            pd_is_events=cfg["pd_source"] == "events",
        )
    except (KeyError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    fe_dims = ["fe_exporter_period", "fe_importer_period", "fe_pair",
               "fe_border_period"]

    runlog = {"model": cfg["model"], "outcome": cfg["outcome"],
              "regressors": regressors, "fe_dims": fe_dims}
    if cfg["model"] == "ppml":
        fit = ppml.fit_ppml(
            panel, cfg["outcome"], regressors, fe_dims, cluster=cfg["cluster"],
            tol=cfg["tol"], max_iter=cfg["max_iter"],
        )
        coefs = fit.summary_frame()
        vcov = pd.DataFrame(fit.covariance, columns=fit.names)
        vcov.insert(0, "coefficient", fit.names)
        runlog.update(
            iterations=fit.iterations,
            deviance=fit.deviance,
            n_obs=fit.n_obs,
            n_dropped_separated=fit.n_dropped_separated,
            dropped_collinear=fit.dropped_collinear,
            absorbed_fe=fit.absorbed_fe,
        )
    elif cfg["model"] == "logit":
        if cfg["spj"]:
            if cfg["bootstrap"] > 0:
                fit = fe_logit.pair_bootstrap(
                    panel, cfg["outcome"], regressors, fe_dims,
                    pair_col="fe_pair", period_col="period",
                    B=cfg["bootstrap"], seed=cfg["seed"],
                )
                se = fit.bootstrap_se
            else:
                fit = fe_logit.split_panel_jackknife(
                    panel, cfg["outcome"], regressors, fe_dims,
                    pair_col="fe_pair", period_col="period",
                )
                se = np.full(len(fit.names), np.nan)
            coefs = pd.DataFrame(
                {
                    "coefficient": fit.names,
                    "estimate": fit.corrected,
                    "se": se,
                    "uncorrected": fit.uncorrected,
                }
            )
            vcov = pd.DataFrame(np.diag(se**2), columns=fit.names)
            vcov.insert(0, "coefficient", fit.names)
            runlog.update(
                dropped_perfectly_classified=[
                    str(p) for p in fit.dropped_perfectly_classified
                ],
                bootstrap_replications=fit.bootstrap_replications,
            )
        else:
            fit, dropped = fe_logit.fit_fe_logit(
                panel, cfg["outcome"], regressors, fe_dims, pair_col="fe_pair",
                tol=cfg["tol"], max_iter=cfg["max_iter"],
            )
            coefs = pd.DataFrame(
                {"coefficient": fit.names, "estimate": fit.coefficients}
            )
            vcov = None
            runlog.update(
                n_obs=fit.n_obs,
                dropped_perfectly_classified=[str(p) for p in dropped],
            )
    else:
        raise ConfigError(f"unknown model {cfg['model']!r}")

    prefix = cfg["out"]
    write_csv(coefs, prefix + "_coefficients.csv")
    if vcov is not None:
        write_csv(vcov, prefix + "_vcov.csv")
    _atomic_write(prefix + "_runlog.json", json.dumps(runlog, indent=2) + "\n")
    return {"panel": cfg["panel"]}


def _cmd_effects(cfg: dict) -> dict:
    prefix = cfg["fit"]
    coefs = read_csv(prefix + "_coefficients.csv",
                     required=["coefficient", "estimate"])
    vcov_path = prefix + "_vcov.csv"
    names = list(coefs["coefficient"])
    beta = coefs["estimate"].to_numpy(dtype=float)
    V = None
    if os.path.exists(vcov_path):
        vc = read_csv(vcov_path)
        V = vc[names].to_numpy(dtype=float)

    condition = {}
    if cfg["condition"]:
        for piece in cfg["condition"].split(","):
            if "=" not in piece:
                raise ConfigError(f"bad condition term {piece!r}")
            k, _, v = piece.partition("=")
            condition[k.strip()] = float(v)

    class _Fit:
        pass

    fit = _Fit()
    fit.names = names
    fit.coefficients = beta
    fit.covariance = V
    try:
        if cfg["logit_baseline"] is not None:
            report = effects.logit_effect_pp(
                fit, cfg["sd"], cfg["logit_baseline"], base=cfg["base"],
                condition=condition, covariance=V, label=cfg["label"],
            )
            unit = "pp"
        else:
            report = effects.one_sd_effect(
                fit, cfg["sd"], base=cfg["base"], condition=condition,
                covariance=V, label=cfg["label"],
            )
            unit = "percent"
    except KeyError as exc:
        raise DataError(str(exc)) from exc
    out = pd.DataFrame(
        [
            {
                "label": report.label,
                "unit": unit,
                "effect": report.point,
                "se": report.se,
                "ci_low": report.ci_low,
                "ci_high": report.ci_high,
                "sd_used": report.sd_used,
                "condition": ";".join(f"{k}={v}" for k, v in condition.items()),
            }
        ]
    )
    write_csv(out, cfg["out"])
    return {"fit_coefficients": prefix + "_coefficients.csv"}


def _cmd_simulate(cfg: dict) -> dict:
    spec = synth.DgpSpec(
        n_countries=cfg["countries"],
        n_periods=cfg["periods"],
        outcome_family=cfg["family"],
        seed=cfg["seed"],
    )
    panel, truth = synth.gen_panel(spec)
    write_csv(panel, cfg["out"])
    if cfg["truth_out"]:
        _atomic_write(cfg["truth_out"], json.dumps(truth, indent=2) + "\n")
    return {}


_COMMANDS = {
    "build-index": _cmd_build_index,
    "filter": _cmd_filter,
    "build-panel": _cmd_build_panel,
    "estimate": _cmd_estimate,
    "effects": _cmd_effects,
    "simulate": _cmd_simulate,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    sub = args.subcommand
    try:
        cfg = _resolve(sub, args)
        inputs = _COMMANDS[sub](cfg)
        manifest_target = cfg["out"] + ".manifest"
        write_manifest(manifest_target, sub, cfg, inputs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
