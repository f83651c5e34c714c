"""Assembly of the gravity estimation panel.

The panel is a plain DataFrame, one row per (origin, destination, period),
holding the flow, outcome variants, the political-distance regressor,
institutional covariates, and fixed-effect label columns.  Domestic rows
(origin == destination) carry approximated internal trade and have every
political-distance term masked to zero.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .event_index import ihs

PANEL_KEY = ["origin", "destination", "period"]

# column-by-column schema of the panel CSV (v1)
PANEL_COLUMNS = {
    "origin": "exporter ISO code",
    "destination": "importer ISO code",
    "period": "integer period label (year, or year*4+quarter-1)",
    "flow": "trade flow, nonnegative, currency units",
    "is_domestic": "1 if origin == destination",
    "pd": "political distance (sign: higher = more distant), NaN on domestic rows",
    "rta": "1 if the pair shares a regional trade agreement",
    "gattwto1": "1 if exactly one partner is a GATT/WTO member",
    "gattwto2": "1 if both partners are GATT/WTO members",
    "polity_o": "Polity score of the exporter",
    "polity_d": "Polity score of the importer",
    "corruption_o": "corruption index of the exporter",
    "corruption_d": "corruption index of the importer",
}


def build_domestic_trade(gdp, total_exports):
    """Domestic (internal) trade approximated as GDP minus total exports.

    Negative differences are clamped to zero and flagged; missing inputs
    yield a missing flow.  Returns (values, negative_flags).
    """
    g = np.asarray(gdp, dtype=np.float64)
    x = np.asarray(total_exports, dtype=np.float64)
    raw = g - x
    flags = np.isfinite(raw) & (raw < 0)
    values = np.where(flags, 0.0, raw)
    if values.ndim == 0:
        return float(values), bool(flags)
    return values, flags


def insert_structural_zeros(panel: pd.DataFrame) -> pd.DataFrame:
    """Fill missing international (origin, destination, period) cells with
    zero flows when both countries already traded with someone earlier.

    'Earlier' is strictly earlier periods.  Cells where either country has
    no prior reported flow stay absent, and domestic cells are never
    zero-filled.
    """
    for col in PANEL_KEY + ["flow"]:
        if col not in panel.columns:
            raise KeyError(f"panel missing column {col!r}")
    panel = panel.sort_values("period").reset_index(drop=True)
    countries = sorted(set(panel["origin"]) | set(panel["destination"]))
    periods = sorted(panel["period"].unique())

    reported = panel[panel["flow"].notna()]
    first_active: dict = {}
    for col in ("origin", "destination"):
        for c, p in reported.groupby(col)["period"].min().items():
            first_active[c] = min(first_active.get(c, p), p)

    existing = set(zip(panel["origin"], panel["destination"], panel["period"]))
    rows = []
    for t in periods:
        for i in countries:
            fi = first_active.get(i)
            if fi is None or fi >= t:
                continue
            for j in countries:
                if i == j or (i, j, t) in existing:
                    continue
                fj = first_active.get(j)
                if fj is None or fj >= t:
                    continue
                rows.append((i, j, t))
    if not rows:
        return panel
    add = pd.DataFrame(rows, columns=PANEL_KEY)
    add["flow"] = 0.0
    out = pd.concat([panel, add], ignore_index=True)
    return out.sort_values(PANEL_KEY).reset_index(drop=True)


def attach_fe_labels(panel: pd.DataFrame) -> pd.DataFrame:
    """Add the four fixed-effect label columns.

    Border-period labels put every domestic row into one reference group,
    so exactly one border dummy per period remains identified; the explicit
    per-period dummies (for dummy-expansion checks) drop the first period.
    """
    out = panel.copy()
    per = out["period"].astype(str)
    out["fe_exporter_period"] = out["origin"].astype(str) + "@" + per
    out["fe_importer_period"] = out["destination"].astype(str) + "@" + per
    out["fe_pair"] = out["origin"].astype(str) + ">" + out["destination"].astype(str)
    domestic = out["origin"] == out["destination"]
    out["is_domestic"] = domestic
    out["fe_border_period"] = np.where(domestic, "dom", "intl@" + per)
    return out


def border_dummy_columns(panel: pd.DataFrame, drop_first: bool = True):
    """Explicit border-period dummies (international rows only), first
    period dropped as the reference to avoid perfect collinearity."""
    periods = sorted(panel["period"].unique())
    if drop_first:
        periods = periods[1:]
    intl = (panel["origin"] != panel["destination"]).to_numpy()
    cols = {}
    for t in periods:
        cols[f"border_{t}"] = (intl & (panel["period"] == t).to_numpy()).astype(float)
    return pd.DataFrame(cols, index=panel.index)


def build_interactions(
    panel: pd.DataFrame,
    collapse_gattwto1: bool = False,
    governance: str = "polity_corruption",
    pd_is_events: bool = True,
) -> tuple[pd.DataFrame, list[str]]:
    """Construct the regressor columns of the gravity design.

    Sign-indefinite covariates (events-based PD, Polity, WGI) pass through
    the IHS transform before interacting; every PD term is zeroed on
    domestic rows.  Returns the augmented panel and the regressor name
    list.
    """
    out = panel.copy()
    domestic = (out["origin"] == out["destination"]).to_numpy()
    mask = (~domestic).astype(float)

    if not collapse_gattwto1:
        members = out["gattwto1"].to_numpy() + out["gattwto2"].to_numpy()
        if (members >= 1).all():
            raise ValueError(
                "gattwto1 is collinear: every record has at least one "
                "GATT/WTO member; collapse no-member and one-member pairs"
            )

    pd_raw = out["pd"].to_numpy(dtype=np.float64)
    pd_term = ihs(pd_raw) if pd_is_events else pd_raw
    pd_term = np.where(domestic, 0.0, pd_term)
    pd_term = np.nan_to_num(pd_term, nan=0.0)
    out["x_pd"] = pd_term

    names = ["x_pd", "rta"]
    if not collapse_gattwto1:
        names.append("gattwto1")
    names.append("gattwto2")

    out["x_pd_rta"] = pd_term * out["rta"].to_numpy(dtype=float)
    names.append("x_pd_rta")
    if not collapse_gattwto1:
        out["x_pd_gattwto1"] = pd_term * out["gattwto1"].to_numpy(dtype=float)
        names.append("x_pd_gattwto1")
    out["x_pd_gattwto2"] = pd_term * out["gattwto2"].to_numpy(dtype=float)
    names.append("x_pd_gattwto2")

    if governance == "polity_corruption":
        gov_cols = [
            ("corruption_o", False),
            ("corruption_d", False),
            ("polity_o", True),
            ("polity_d", True),
        ]
    elif governance == "wgi":
        gov_cols = [("wgi_o", True), ("wgi_d", True)]
    else:
        raise ValueError(f"unknown governance set {governance!r}")
    for col, transform in gov_cols:
        vals = out[col].to_numpy(dtype=np.float64)
        vals = ihs(vals) if transform else vals
        name = f"x_pd_{col}"
        out[name] = pd_term * np.nan_to_num(vals, nan=0.0) * mask
        names.append(name)
    return out, names


def apply_sample_filters(
    panel: pd.DataFrame,
    drop_countries: list[str] | None = None,
    democratic_pairs_only: float | None = None,
    drop_war_pairs: list | None = None,
    period_range: tuple | None = None,
    trim_pd_quantiles: tuple[float, float] | None = None,
) -> pd.DataFrame:
    """Robustness subsetting.

    Filters apply in a fixed order with the PD trim last, so the trim
    quantiles are computed on the already-subset international records.
    War-pair entries are (a, b) or (a, b, start_period, end_period) and
    match both directions.
    """
    out = panel
    if drop_countries:
        dropped = set(drop_countries)
        out = out[~out["origin"].isin(dropped) & ~out["destination"].isin(dropped)]
    if democratic_pairs_only is not None:
        out = out[
            (out["polity_o"] >= democratic_pairs_only)
            & (out["polity_d"] >= democratic_pairs_only)
        ]
    if drop_war_pairs:
        mask = np.zeros(len(out), dtype=bool)
        o = out["origin"].to_numpy()
        d = out["destination"].to_numpy()
        t = out["period"].to_numpy()
        for entry in drop_war_pairs:
            a, b = entry[0], entry[1]
            hit = ((o == a) & (d == b)) | ((o == b) & (d == a))
            if len(entry) >= 4:
                hit &= (t >= entry[2]) & (t <= entry[3])
            mask |= hit
        out = out[~mask]
    if period_range is not None:
        lo, hi = period_range
        out = out[(out["period"] >= lo) & (out["period"] <= hi)]
    if trim_pd_quantiles is not None:
        lo_q, hi_q = trim_pd_quantiles
        intl = out["origin"] != out["destination"]
        pd_vals = out.loc[intl, "pd"].dropna()
        lo, hi = np.quantile(pd_vals, [lo_q, hi_q])
        bad = intl & ((out["pd"] < lo) | (out["pd"] > hi))
        out = out[~bad]
    if out.empty:
        raise ValueError("sample filters left an empty panel")
    return out.reset_index(drop=True)


def assemble_panel(
    flows: pd.DataFrame,
    pd_values: pd.DataFrame,
    country_covariates: pd.DataFrame,
    rta: pd.DataFrame | None = None,
    gdp: pd.DataFrame | None = None,
    insert_zeros: bool = True,
) -> pd.DataFrame:
    """Join flows, the PD index, and covariates into a gravity panel.

    flows: origin, destination, period, flow (+ optional outcome columns).
    pd_values: pair_id ('A|B', unordered), period, value; joined to both
    directed pairs.  country_covariates: country, period, polity,
    corruption, gattwto (+ optional wgi).  rta: country_a, country_b,
    period, rta.  gdp (country, period, gdp) triggers domestic rows
    computed as GDP minus total exports.
    """
    panel = flows.copy()
    if gdp is not None:
        exports = (
            panel[panel["origin"] != panel["destination"]]
            .groupby(["origin", "period"])["flow"]
            .sum()
            .rename("exports")
            .reset_index()
        )
        dom = gdp.merge(
            exports, left_on=["country", "period"], right_on=["origin", "period"],
            how="left",
        )
        dom["exports"] = dom["exports"].fillna(0.0)
        values, _flags = build_domestic_trade(dom["gdp"], dom["exports"])
        dom_rows = pd.DataFrame(
            {
                "origin": dom["country"],
                "destination": dom["country"],
                "period": dom["period"],
                "flow": values,
            }
        ).dropna(subset=["flow"])
        panel = pd.concat([panel, dom_rows], ignore_index=True)
    if insert_zeros:
        panel = insert_structural_zeros(panel)

    # symmetric PD joined to both directed pairs
    pdv = pd_values.copy()
    ab = pdv["pair_id"].str.split("|", expand=True)
    half1 = pdv.assign(origin=ab[0], destination=ab[1])
    half2 = pdv.assign(origin=ab[1], destination=ab[0])
    both = pd.concat([half1, half2], ignore_index=True)[
        ["origin", "destination", "period", "value"]
    ].rename(columns={"value": "pd"})
    panel = panel.merge(both, on=PANEL_KEY, how="left")

    cov = country_covariates
    for side, key in (("_o", "origin"), ("_d", "destination")):
        sided = cov.rename(
            columns={c: c + side for c in cov.columns if c not in ("country", "period")}
        )
        panel = panel.merge(
            sided, left_on=[key, "period"], right_on=["country", "period"], how="left"
        ).drop(columns="country")
    if "gattwto_o" in panel.columns:
        both_members = (panel["gattwto_o"] == 1) & (panel["gattwto_d"] == 1)
        one_member = (panel["gattwto_o"].fillna(0) + panel["gattwto_d"].fillna(0)) == 1
        panel["gattwto2"] = both_members.astype(int)
        panel["gattwto1"] = one_member.astype(int)
        panel = panel.drop(columns=["gattwto_o", "gattwto_d"])

    if rta is not None:
        r1 = rta.rename(columns={"country_a": "origin", "country_b": "destination"})
        r2 = rta.rename(columns={"country_a": "destination", "country_b": "origin"})
        both_r = pd.concat([r1, r2], ignore_index=True)[
            ["origin", "destination", "period", "rta"]
        ].drop_duplicates(PANEL_KEY)
        panel = panel.merge(both_r, on=PANEL_KEY, how="left")
        panel["rta"] = panel["rta"].fillna(0).astype(int)
    else:
        panel["rta"] = 0

    panel.loc[panel["origin"] == panel["destination"], "pd"] = np.nan
    return attach_fe_labels(panel)
