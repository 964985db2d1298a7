"""
Unit tests for the report writer and bundle manifests
"""

import json
import os

import numpy as np

from models.regression import true_beta
from models.residuals import histogram
from utils.helpers import get_file_hash
from views.report_writer import MANIFEST_NAME, ReportWriter


class TestReportWriter:
    """Renderers and manifests of ReportWriter"""

    def test_render_beta(self, temp_directory):
        """Beta tables carry one row per (n, j)"""
        writer = ReportWriter(temp_directory)
        path = writer.render_beta("true_beta.tsv", true_beta(3, 2))
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0] == "n\tj\tvalue"
        assert len(lines) == 1 + 3 * 2

    def test_degree_repetition_with_normalized_column(self, temp_directory):
        """The optional normalized column follows the value column"""
        writer = ReportWriter(temp_directory)
        values = np.arange(6.0).reshape(2, 3)
        path = writer.render_degree_repetition("l1.tsv", (1, 2, 3), values, normalized=values / 10)
        table = writer.loader.read_table(path, ("n", "r", "value", "normalized"))
        assert table.shape == (6, 4)
        assert np.allclose(table[:, 3], table[:, 2] / 10)

    def test_nested_names_are_sanitized(self, temp_directory):
        """Parent references cannot leave the output directory"""
        writer = ReportWriter(temp_directory)
        writer.table("../escape/x.tsv", ("a",), [(1,)])
        assert os.path.exists(os.path.join(temp_directory, "unnamed", "escape", "x.tsv"))
        assert writer.written == ["unnamed/escape/x.tsv"]

    def test_histograms(self, temp_directory):
        """Histograms are keyed by degree"""
        writer = ReportWriter(temp_directory)
        path = writer.render_histograms("h.json", {5: histogram([1.0, 2.0, 3.0], 3, "l1 n=5")})
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        assert payload["5"]["counts"] == [1, 1, 1]

    def test_manifest_hashes_every_file(self, temp_directory):
        """Every written file is hashed, nested ones included"""
        writer = ReportWriter(temp_directory)
        writer.table("a.tsv", ("x",), [(1,)])
        writer.json("sub/b.json", {"k": 1})
        writer.write_manifest({"labels": []})
        with open(os.path.join(temp_directory, MANIFEST_NAME), encoding="utf-8") as f:
            manifest = json.load(f)
        assert sorted(manifest["files"]) == ["a.tsv", "sub/b.json"]
        assert manifest["files"]["a.tsv"] == get_file_hash(os.path.join(temp_directory, "a.tsv"))

    def test_manifest_lists_files_it_did_not_write(self, temp_directory):
        """A file left in the directory shows up in the manifest"""
        with open(os.path.join(temp_directory, "left_over.tsv"), "w", encoding="utf-8") as f:
            f.write("n\tvalue\n")
        writer = ReportWriter(temp_directory)
        writer.table("a.tsv", ("x",), [(1,)])
        writer.write_manifest({"labels": []})
        with open(os.path.join(temp_directory, MANIFEST_NAME), encoding="utf-8") as f:
            manifest = json.load(f)
        assert sorted(manifest["files"]) == ["a.tsv", "left_over.tsv"]
        assert writer.present() == ["a.tsv", "left_over.tsv"]
