import numpy as np
import pandas as pd
import pytest

from polgrav import panel_builder as pb
from polgrav.event_index import ihs


def toy_flows():
    # three countries, two periods; C unreported in period 0
    return pd.DataFrame(
        [
            ("A", "B", 0, 10.0),
            ("B", "A", 0, 8.0),
            ("A", "B", 1, 12.0),
            ("B", "A", 1, 9.0),
            ("A", "C", 1, 3.0),
            ("C", "A", 1, 2.0),
            ("C", "D", 1, 1.0),
            ("D", "C", 1, 1.5),
        ],
        columns=["origin", "destination", "period", "flow"],
    )


def toy_pd():
    rows = []
    for t in (0, 1):
        rows += [("A|B", t, 0.5 + t), ("A|C", t, -0.25), ("B|C", t, 1.0)]
    return pd.DataFrame(rows, columns=["pair_id", "period", "value"])


def toy_covariates():
    rows = []
    for t in (0, 1):
        rows += [
            ("A", t, 8, 0.2, 1),
            ("B", t, -3, 0.6, 1),
            ("C", t, 5, 0.4, 0),
            ("D", t, 2, 0.5, 0),
        ]
    return pd.DataFrame(
        rows, columns=["country", "period", "polity", "corruption", "gattwto"]
    )


class TestDomesticTrade:
    def test_difference(self):
        values, flags = pb.build_domestic_trade([100.0, 50.0], [30.0, 20.0])
        np.testing.assert_allclose(values, [70.0, 30.0])
        assert not flags.any()

    def test_negative_clamped_and_flagged(self):
        values, flags = pb.build_domestic_trade([10.0], [15.0])
        assert values[0] == 0.0
        assert flags[0]

    def test_missing_propagates(self):
        values, flags = pb.build_domestic_trade([np.nan], [5.0])
        assert np.isnan(values[0])
        assert not flags[0]


class TestStructuralZeros:
    def test_strictly_earlier_activity_required(self):
        out = pb.insert_structural_zeros(toy_flows())
        # period 0: C has no earlier activity, so no C cells are zero-filled
        p0 = out[out["period"] == 0]
        assert not ((p0["origin"] == "C") | (p0["destination"] == "C")).any()
        # period 1: every pair among A,B exists; B-C becomes a zero cell
        # because both B and C were active strictly before?  C first reports
        # in period 1, so B<->C must NOT be filled either
        p1 = out[out["period"] == 1]
        assert not set(
            map(tuple, p1[["origin", "destination"]].to_numpy())
        ) & {("B", "C"), ("C", "B")}

    def test_zero_filled_when_both_active_earlier(self):
        flows = toy_flows()
        # drop A->B in period 1: both active in period 0, so it refills as 0
        flows = flows[~((flows["origin"] == "A") & (flows["destination"] == "B")
                        & (flows["period"] == 1))]
        out = pb.insert_structural_zeros(flows)
        cell = out[(out["origin"] == "A") & (out["destination"] == "B")
                   & (out["period"] == 1)]
        assert len(cell) == 1
        assert cell["flow"].iloc[0] == 0.0

    def test_domestic_never_filled(self):
        flows = toy_flows()
        out = pb.insert_structural_zeros(flows)
        assert not (out["origin"] == out["destination"]).any()


class TestFeLabels:
    def test_labels_and_reference_group(self):
        flows = toy_flows()
        dom = pd.DataFrame(
            [("A", "A", 0, 5.0), ("B", "B", 1, 6.0)],
            columns=["origin", "destination", "period", "flow"],
        )
        panel = pb.attach_fe_labels(pd.concat([flows, dom], ignore_index=True))
        assert (panel.loc[panel["is_domestic"], "fe_border_period"] == "dom").all()
        intl = panel[~panel["is_domestic"]]
        assert set(intl["fe_border_period"]) == {"intl@0", "intl@1"}
        assert panel["fe_pair"].iloc[0] == "A>B"
        assert panel["fe_exporter_period"].iloc[0] == "A@0"

    def test_border_dummies_drop_first_period(self):
        panel = pb.attach_fe_labels(toy_flows())
        dummies = pb.border_dummy_columns(panel)
        assert list(dummies.columns) == ["border_1"]
        full = pb.border_dummy_columns(panel, drop_first=False)
        assert list(full.columns) == ["border_0", "border_1"]


class TestAssemble:
    def _panel(self, **kw):
        return pb.assemble_panel(
            toy_flows(), toy_pd(), toy_covariates(),
            gdp=pd.DataFrame(
                [("A", 0, 100.0), ("A", 1, 120.0), ("B", 0, 60.0), ("B", 1, 70.0)],
                columns=["country", "period", "gdp"],
            ),
            **kw,
        )

    def test_pd_joined_symmetrically(self):
        panel = self._panel()
        ab = panel[(panel["origin"] == "A") & (panel["destination"] == "B")
                   & (panel["period"] == 0)]
        ba = panel[(panel["origin"] == "B") & (panel["destination"] == "A")
                   & (panel["period"] == 0)]
        assert ab["pd"].iloc[0] == ba["pd"].iloc[0] == 0.5

    def test_domestic_rows_created(self):
        panel = self._panel()
        dom = panel[panel["is_domestic"]]
        a0 = dom[(dom["origin"] == "A") & (dom["period"] == 0)]
        # GDP 100 minus exports 10 (A->B only in period 0)
        assert a0["flow"].iloc[0] == 90.0
        assert np.isnan(a0["pd"].iloc[0])

    def test_gattwto_categories(self):
        panel = self._panel()
        ab = panel[(panel["origin"] == "A") & (panel["destination"] == "B")]
        assert (ab["gattwto2"] == 1).all()
        ac = panel[(panel["origin"] == "A") & (panel["destination"] == "C")]
        assert (ac["gattwto1"] == 1).all()
        assert (ac["gattwto2"] == 0).all()

    def test_rta_joined_both_directions(self):
        rta = pd.DataFrame(
            [("A", "B", 1, 1)], columns=["country_a", "country_b", "period", "rta"]
        )
        panel = self._panel(rta=rta)
        ba1 = panel[(panel["origin"] == "B") & (panel["destination"] == "A")
                    & (panel["period"] == 1)]
        assert ba1["rta"].iloc[0] == 1
        ab0 = panel[(panel["origin"] == "A") & (panel["destination"] == "B")
                    & (panel["period"] == 0)]
        assert ab0["rta"].iloc[0] == 0


class TestInteractions:
    def _built(self, **kw):
        panel = pb.attach_fe_labels(
            pb.assemble_panel(toy_flows(), toy_pd(), toy_covariates())
        )
        return pb.build_interactions(panel, **kw)

    def test_pd_transformed_and_masked(self):
        out, names = self._built()
        ab0 = out[(out["origin"] == "A") & (out["destination"] == "B")
                  & (out["period"] == 0)]
        assert ab0["x_pd"].iloc[0] == pytest.approx(ihs(0.5), abs=1e-12)
        assert "x_pd" in names and "x_pd_gattwto2" in names

    def test_unga_source_skips_transform(self):
        out, _ = self._built(pd_is_events=False)
        ab0 = out[(out["origin"] == "A") & (out["destination"] == "B")
                  & (out["period"] == 0)]
        assert ab0["x_pd"].iloc[0] == 0.5

    def test_interaction_products(self):
        out, names = self._built()
        row = out[(out["origin"] == "A") & (out["destination"] == "C")
                  & (out["period"] == 1)].iloc[0]
        assert row["x_pd_gattwto1"] == pytest.approx(row["x_pd"] * row["gattwto1"])
        assert row["x_pd_corruption_d"] == pytest.approx(
            row["x_pd"] * row["corruption_d"]
        )
        assert row["x_pd_polity_o"] == pytest.approx(
            row["x_pd"] * ihs(row["polity_o"])
        )

    def test_collapse_drops_one_member_terms(self):
        out, names = self._built(collapse_gattwto1=True)
        assert "gattwto1" not in names
        assert "x_pd_gattwto1" not in names

    def test_all_member_sample_raises_without_collapse(self):
        panel = pb.attach_fe_labels(
            pb.assemble_panel(toy_flows(), toy_pd(), toy_covariates())
        )
        panel = panel[(panel["gattwto1"] + panel["gattwto2"]) >= 1]
        with pytest.raises(ValueError, match="gattwto1"):
            pb.build_interactions(panel)
        out, names = pb.build_interactions(panel, collapse_gattwto1=True)
        assert "gattwto1" not in names

    def test_wgi_governance_set(self):
        panel = pb.attach_fe_labels(
            pb.assemble_panel(toy_flows(), toy_pd(), toy_covariates())
        )
        panel["wgi_o"] = 0.5
        panel["wgi_d"] = -0.3
        out, names = pb.build_interactions(panel, governance="wgi")
        assert "x_pd_wgi_o" in names
        assert "x_pd_corruption_o" not in names


class TestSampleFilters:
    def _panel(self):
        return pb.attach_fe_labels(
            pb.assemble_panel(toy_flows(), toy_pd(), toy_covariates())
        )

    def test_drop_countries(self):
        out = pb.apply_sample_filters(self._panel(), drop_countries=["C"])
        assert "C" not in set(out["origin"]) | set(out["destination"])

    def test_democratic_pairs_keep_both_above(self):
        out = pb.apply_sample_filters(self._panel(), democratic_pairs_only=5.0)
        # only A (8) and C (5) qualify; B (-3) rows vanish
        assert set(out["origin"]) <= {"A", "C"}

    def test_war_pairs_both_directions_and_window(self):
        out = pb.apply_sample_filters(
            self._panel(), drop_war_pairs=[("A", "B", 1, 1)]
        )
        gone = out[(out["period"] == 1)
                   & (out["origin"].isin(["A", "B"]))
                   & (out["destination"].isin(["A", "B"]))]
        assert gone.empty
        kept = out[(out["period"] == 0) & (out["origin"] == "A")
                   & (out["destination"] == "B")]
        assert len(kept) == 1

    def test_period_range(self):
        out = pb.apply_sample_filters(self._panel(), period_range=(1, 1))
        assert set(out["period"]) == {1}

    def test_trim_quantile_oracle(self):
        # 1000 international rows with PD = 1..1000: a (0.01, 0.98) trim
        # keeps exactly the values within the numpy quantiles
        n = 1000
        panel = pd.DataFrame(
            {
                "origin": ["A"] * n,
                "destination": ["B"] * n,
                "period": np.arange(n),
                "flow": 1.0,
                "pd": np.arange(1.0, n + 1),
                "polity_o": 0,
                "polity_d": 0,
            }
        )
        out = pb.apply_sample_filters(panel, trim_pd_quantiles=(0.01, 0.98))
        lo, hi = np.quantile(panel["pd"], [0.01, 0.98])
        assert out["pd"].min() >= lo
        assert out["pd"].max() <= hi
        expected = ((panel["pd"] >= lo) & (panel["pd"] <= hi)).sum()
        assert len(out) == expected

    def test_trim_runs_last(self):
        # trimming quantiles are computed after the country drop: with C
        # gone, the quantile window shifts relative to trimming first
        panel = self._panel()
        trimmed = pb.apply_sample_filters(
            panel, drop_countries=["C"], trim_pd_quantiles=(0.0, 0.5)
        )
        intl = trimmed[~trimmed["is_domestic"]]
        sub = panel[(panel["origin"] != "C") & (panel["destination"] != "C")]
        cutoff = sub.loc[~sub["is_domestic"], "pd"].quantile(0.5)
        assert intl["pd"].max() <= cutoff

    def test_empty_result_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            pb.apply_sample_filters(self._panel(), drop_countries=["A", "B", "C"])
