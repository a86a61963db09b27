import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from envra.experiments import PowerEstimate
from envra.ks import ks_test_asymptotic
from envra.permutation import PermutationPlan, TestSpec, run_test
from envra.report import (BlockDoc, CsvError, ResultDocument, block_svg, document_from_ks,
                          document_from_result, emit_svg, load_csv, load_iris, write_power_tables)
from envra.stats import GroupedSample

SVG = "{http://www.w3.org/2000/svg}"


def write_csv(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCsv:
    def test_basic(self, tmp_path):
        s = load_csv(write_csv(tmp_path, "value,group\n1,a\n2,a\n3,b\n4,b\n"))
        assert s.n_groups == 2 and list(s.sizes) == [2, 2] and s.names == ("a", "b")

    def test_first_appearance_order(self, tmp_path):
        s = load_csv(write_csv(tmp_path, "g,v\nz,1\na,2\nz,3\n"), "v", "g")
        assert s.names == ("z", "a") and list(s.sizes) == [2, 1]

    def test_one_group(self, tmp_path):
        with pytest.raises(CsvError, match="two groups"):
            load_csv(write_csv(tmp_path, "value,group\n1,a\n2,a\n"))

    def test_missing_column(self, tmp_path):
        with pytest.raises(CsvError, match="column 'value'"):
            load_csv(write_csv(tmp_path, "x,group\n1,a\n"))

    def test_bad_value_row_number(self, tmp_path):
        rows = "".join(f"{i},{'ab'[i % 2]}\n" for i in range(6)) + "oops,a\n"
        with pytest.raises(CsvError, match="row 7"):
            load_csv(write_csv(tmp_path, "value,group\n" + rows))

    def test_non_finite(self, tmp_path):
        with pytest.raises(CsvError, match="not finite"):
            load_csv(write_csv(tmp_path, "value,group\n1,a\nnan,b\n"))

    def test_iris(self):
        s = load_iris()
        assert s.names == ("setosa", "versicolor", "virginica")
        assert list(s.sizes) == [50, 50, 50]
        assert s.group(0).mean() == pytest.approx(5.006)
        assert s.group(2).mean() == pytest.approx(6.588)


@pytest.fixture(scope="module")
def c2_doc():
    r = np.random.default_rng(4)
    s = GroupedSample.from_groups([r.normal(size=30), r.normal(1, 1, size=25)], names=["ctl", "trt"])
    res = run_test(s, TestSpec("c2"), PermutationPlan(99, 2))
    return document_from_result(res, s, {"stat": "c2"})


class TestDocument:
    def test_round_trip(self, c2_doc):
        text = c2_doc.to_json()
        again = ResultDocument.from_json(text)
        assert again == c2_doc
        assert again.to_json() == text

    def test_key_order(self, c2_doc):
        keys = list(json.loads(c2_doc.to_json()))
        assert keys == ["schema_version", "config", "statistic", "p_value", "alpha", "s", "tie_flag",
                        "groups", "blocks", "extra", "timing"]

    def test_blocks(self, c2_doc):
        assert [b.name for b in c2_doc.blocks] == ["qq-ctl-trt", "den-ctl", "den-trt"]
        b = c2_doc.blocks[0]
        assert len(b.grid) == len(b.lower) == len(b.outside) == 100

    def test_bad_version(self, c2_doc):
        d = c2_doc.to_dict()
        d["schema_version"] = 99
        with pytest.raises(ValueError):
            ResultDocument.from_dict(d)

    def test_ragged_block(self):
        with pytest.raises(ValueError):
            BlockDoc("b", "qq", [], "x", [0.0, 1.0], [0.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], [False, False])

    def test_float_round_trip(self, c2_doc):
        again = ResultDocument.from_json(c2_doc.to_json())
        assert all(a == b for a, b in zip(again.blocks[1].upper, c2_doc.blocks[1].upper))

    def test_ks_document(self):
        r = np.random.default_rng(0)
        s = GroupedSample.from_groups([r.normal(size=40), r.normal(size=40)])
        doc = document_from_ks(ks_test_asymptotic(s.group(0), s.group(1)), s)
        b = doc.blocks[0]
        assert set(b.upper) == {doc.extra["envelope_halfwidth"]}
        assert ResultDocument.from_json(doc.to_json()) == doc


def parse(path):
    return ET.parse(path).getroot()


class TestSvg:
    def test_c2_plots(self, c2_doc, tmp_path):
        paths = emit_svg(c2_doc, tmp_path)
        assert sorted(p.name for p in paths) == ["plot-den-ctl.svg", "plot-den-trt.svg", "plot-qq-ctl-trt.svg"]
        for p, block in zip(paths, c2_doc.blocks):
            root = parse(p)
            assert len(root.findall(f"{SVG}polygon[@class='band']")) == 1
            assert len(root.findall(f"{SVG}polyline[@class='observed']")) == 1
            assert len(root.findall(f"{SVG}polyline[@class='expected']")) == 1
            assert "stroke-dasharray" in root.find(f"{SVG}polyline[@class='expected']").attrib
            assert len(root.findall(f"{SVG}circle[@class='outside']")) == sum(block.outside)

    def test_qq_three_groups(self, three_groups, tmp_path):
        res = run_test(three_groups, TestSpec("qq"), PermutationPlan(99, 1))
        assert len(emit_svg(document_from_result(res, three_groups), tmp_path)) == 3

    def test_zero_outside(self):
        g = [0.0, 1.0, 2.0]
        b = BlockDoc("t", "qr", ["a"], "tau", g, [-1.0] * 3, [1.0] * 3, [0.0] * 3, [0.0] * 3, [False] * 3)
        root = ET.fromstring(block_svg(b, "t & <u>"))
        assert root.findall(f"{SVG}circle") == []
        assert root.find(f"{SVG}text[@class='xlabel']").text == "tau"

    def test_all_outside(self):
        b = BlockDoc("t", "diff", [], "x", [0.0, 1.0], [0.0, 0.0], [0.0, 0.0], [1.0, -1.0], [0.0, 0.0],
                     [True, True])
        assert len(ET.fromstring(block_svg(b, "t")).findall(f"{SVG}circle[@class='outside']")) == 2

    def test_flat_block(self):
        b = BlockDoc("t", "diff", [], "x", [3.0], [0.0], [0.0], [0.0], [0.0], [False])
        ET.fromstring(block_svg(b, "t"))


def test_power_tables(tmp_path):
    est = [PowerEstimate("qq", "mixture", 10, 3, 20), PowerEstimate("ks", "mixture", 10, 1, 20)]
    csv_path, json_path = write_power_tables(est, tmp_path, {"seed": 1})
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "test,scenario,N,rejections,replicates,power,half_ci"
    assert lines[1].startswith("qq,mixture,10,3,20,0.15,")
    doc = json.loads(json_path.read_text())
    assert doc["config"] == {"seed": 1} and len(doc["rows"]) == 2
