import json

import numpy as np
import pytest

from mlrperm.analysis import AnalysisConfig, parse_dataset, run_analysis
from mlrperm.core_lm import Dataset, fit_full
from mlrperm.errors import AllRowsDropped, ConfigError, InvalidStructure, MissingColumn, NonNumeric
from mlrperm.inference import ols_p_value

Y8 = [3, 7, 4, 9, 12, 8, 15, 11]
X1_8 = [1, 2, 2, 4, 5, 3, 7, 6]
X2_8 = [0, 1, 0, 1, 1, 0, 1, 0]


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


@pytest.fixture
def csv8(tmp_path):
    lines = ["y,x1,x2"] + [f"{a},{b},{c}" for a, b, c in zip(Y8, X1_8, X2_8)]
    return write(tmp_path, "\n".join(lines) + "\n")


@pytest.fixture
def clustered_csv(tmp_path):
    rng = np.random.default_rng(4)
    fam = ["s1", "s2", "s3", "s4", "s5", "p1", "p1", "p2", "p2", "p3", "p3", "s6", "s7"]
    x2 = [0, 0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 1, 0]
    x1 = np.round(rng.normal(size=len(x2)), 3)
    y = np.round(x1 + rng.normal(size=len(x2)), 3)
    lines = ["y,x1,grp,fam"] + [f"{a},{b},{c},{d}" for a, b, c, d in zip(y, x1, x2, fam)]
    return write(tmp_path, "\n".join(lines) + "\n")


class TestParse:
    def test_three_rows_bit_exact(self, tmp_path):
        p = write(tmp_path, "a,b,c\n0.1,2.5,1\n1e-3,-7,0\n3.25,0.3333333333333333,1\n")
        d = parse_dataset(p, "a", "b", "c")
        assert d.n == 3
        assert d.y.tolist() == [0.1, 1e-3, 3.25]
        assert d.x1.tolist() == [2.5, -7.0, 0.3333333333333333]

    def test_label_treatment(self, tmp_path):
        p = write(tmp_path, "cost,volume,material\n5,1,steel\n6,2,concrete\n7,3,steel\n9,5,concrete\n")
        d = parse_dataset(p, "cost", "volume", "material")
        assert d.treatment_mapping == {"steel": 0, "concrete": 1}
        assert d.x2.tolist() == [0, 1, 0, 1]

    def test_missing_row_dropped(self, tmp_path):
        p = write(tmp_path, "y,x,t\n1,1,0\nNA,2,1\n3,3,0\n4,4,1\n5,6,1\n")
        d = parse_dataset(p, "y", "x", "t")
        assert d.n == 4 and d.n_dropped == 1

    def test_missing_column(self, tmp_path):
        p = write(tmp_path, "y,x,t\n1,2,0\n")
        with pytest.raises(MissingColumn) as ei:
            parse_dataset(p, "y", "x", "material")
        assert ei.value.name == "material"

    def test_non_numeric(self, tmp_path):
        p = write(tmp_path, "y,x,t\n1,2,0\n2,abc,1\n")
        with pytest.raises(NonNumeric) as ei:
            parse_dataset(p, "y", "x", "t")
        assert (ei.value.row, ei.value.column) == (3, "x")

    def test_three_labels_rejected(self, tmp_path):
        p = write(tmp_path, "y,x,t\n1,2,a\n2,3,b\n3,1,c\n")
        with pytest.raises(NonNumeric):
            parse_dataset(p, "y", "x", "t")

    def test_all_dropped(self, tmp_path):
        p = write(tmp_path, "y,x,t\n,2,0\nNA,3,1\n")
        with pytest.raises(AllRowsDropped):
            parse_dataset(p, "y", "x", "t")

    def test_file_not_found(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_dataset(str(tmp_path / "nope.csv"), "y", "x", "t")


class TestConfig:
    def test_method_expansion(self):
        c = AnalysisConfig("f", "y", "x", "t", methods="ols,all")
        assert c.expanded_methods() == ["ols", "draper-stoneman", "manly", "freedman-lane", "terbraak"]

    @pytest.mark.parametrize("kw", [{"B": 0}, {"methods": "bogus"}, {"cluster_mode": "nested"},
                                    {"output_format": "xml"}])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            AnalysisConfig("f", "y", "x", "t", **kw)


class TestRunAnalysis:
    def test_ols_only(self, csv8):
        r = run_analysis(AnalysisConfig(csv8, "y", "x1", "x2", methods=("ols",)))
        assert len(r.rows) == 1
        expected = ols_p_value(fit_full(Dataset(y=Y8, x1=X1_8, x2=X2_8)))
        assert r.rows[0]["p_value"] == expected

    def test_all_rows_in_order(self, csv8):
        r = run_analysis(AnalysisConfig(csv8, "y", "x1", "x2", B=200))
        assert [row["method"] for row in r.rows] == ["draper-stoneman", "manly", "freedman-lane", "terbraak", "ols"]
        for row in r.rows:
            assert set(row) >= {"method", "t_obs", "p_value", "B", "seed", "warnings"}
            assert 0 < row["p_value"] <= 1

    def test_byte_identical_json(self, csv8):
        cfg = AnalysisConfig(csv8, "y", "x1", "x2", B=300, seed=9)
        assert run_analysis(cfg).to_json() == run_analysis(cfg).to_json()
        assert run_analysis(cfg).to_json() == run_analysis(cfg, n_jobs=4).to_json()

    def test_method_seeds_independent_of_selection(self, csv8):
        a = run_analysis(AnalysisConfig(csv8, "y", "x1", "x2", B=300, seed=9))
        b = run_analysis(AnalysisConfig(csv8, "y", "x1", "x2", methods=("manly",), B=300, seed=9))
        assert b.rows[0]["p_value"] == a.rows[1]["p_value"]

    def test_clustered_auto(self, clustered_csv):
        r = run_analysis(AnalysisConfig(clustered_csv, "y", "x1", "grp", family_column="fam", B=300))
        assert r.diagnostics["cluster"]["scenario"] == "heterogeneous"
        by = {row["method"]: row for row in r.rows}
        assert not any("naive" in w for w in by["draper-stoneman"]["warnings"])
        for m in ("manly", "freedman-lane", "terbraak"):
            assert any("naive" in w for w in by[m]["warnings"])
        assert by["ols"]["warnings"]
        assert r.nulls["draper-stoneman"].restriction == "heterogeneous"

    def test_forced_mode_mismatch_is_fatal(self, clustered_csv):
        with pytest.raises(InvalidStructure):
            run_analysis(AnalysisConfig(clustered_csv, "y", "x1", "grp", family_column="fam",
                                        cluster_mode="homogeneous", B=50))

    def test_collinearity_warning(self, tmp_path):
        rng = np.random.default_rng(0)
        x1 = rng.normal(size=30)
        x2 = x1 + 0.05 * rng.normal(size=30)
        y = x1 + rng.normal(size=30)
        p = write(tmp_path, "y,a,b\n" + "\n".join(f"{u},{v},{w}" for u, v, w in zip(y, x1, x2)) + "\n")
        r = run_analysis(AnalysisConfig(p, "y", "a", "b", methods=("freedman-lane",), B=100))
        assert r.diagnostics["collinearity"]["flagged"]
        assert any("exceeds" in w for w in r.rows[0]["warnings"])

    def test_failed_method_is_a_row(self, tmp_path):
        # Exact linear fit: t is undefined for every method
        p = write(tmp_path, "y,a,b\n" + "\n".join(f"{2 + a + 3 * b},{a},{b}" for a, b in
                                                  [(1, 0), (2, 1), (4, 0), (3, 1), (6, 1), (5, 0)]) + "\n")
        r = run_analysis(AnalysisConfig(p, "y", "a", "b", B=50))
        assert len(r.rows) == 5
        assert all(row["error"] for row in r.rows)
        json.loads(r.to_json())

    def test_text_matches_json(self, csv8):
        r = run_analysis(AnalysisConfig(csv8, "y", "x1", "x2", B=200))
        text = r.to_text()
        for row in json.loads(r.to_json())["rows"]:
            assert f"{row['p_value']:.2f}" in text
            assert f"{row['t_obs']:.3f}" in text
