# This file is part of ocrsmech.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""Test the JSON and CSV report writers.
"""

import os
import tempfile
import unittest

import numpy as np

import lsst.utils.tests

import ocrsmech


class ReportTestCase(lsst.utils.tests.TestCase):
    """Test formatReport, emitReport, readReport and exitCode."""

    def setUp(self):
        self.records = [{"case": 0, "value": np.float64(0.25), "passed": np.bool_(True)},
                        {"case": 1, "value": float("nan"), "passed": False, "rates": np.array([0.5, 1.0])}]

    def test_field_order(self):
        fields = ocrsmech.reportFields([{"b": 1}, {"a": 2, "b": 3}], fields=["c"])

        self.assertEqual(fields, ["c", "b", "a"])

    def test_empty_reports(self):
        text = ocrsmech.formatReport([], format="csv", fields=ocrsmech.RECORD_FIELDS)
        self.assertEqual(text, "experiment,case,metric,value,bound,passed\n")

        self.assertEqual(ocrsmech.formatReport([], format="json"), "[]\n")

    def test_csv_cells(self):
        lines = ocrsmech.formatReport(self.records, format="csv").splitlines()

        self.assertEqual(lines[0], "case,value,passed,rates")
        self.assertEqual(lines[1], "0,0.25,true,")
        # nan becomes an empty cell, arrays a JSON list
        self.assertEqual(lines[2], '1,,false,"[0.5, 1.0]"')

    def test_json_file(self):
        with tempfile.TemporaryDirectory() as tempDir:
            path = os.path.join(tempDir, "report.json")
            ocrsmech.emitReport(self.records, format="json", path=path)
            loaded = ocrsmech.readReport(path)

        self.assertEqual(loaded, [{"case": 0, "value": 0.25, "passed": True},
                                  {"case": 1, "value": None, "passed": False, "rates": [0.5, 1.0]}])

    def test_json_summary(self):
        with tempfile.TemporaryDirectory() as tempDir:
            path = os.path.join(tempDir, "report.json")
            ocrsmech.emitReport(self.records[:1], format="json", path=path,
                                summary={"minRate": np.inf, "passed": True})
            loaded = ocrsmech.readReport(path)

        self.assertEqual(loaded["summary"], {"minRate": None, "passed": True})
        self.assertEqual(len(loaded["records"]), 1)

    def test_bad_format(self):
        with self.assertRaises(ValueError):
            ocrsmech.formatReport(self.records, format="xml")

    def test_clean_value(self):
        self.assertIsNone(ocrsmech.cleanValue(-np.inf))
        self.assertEqual(ocrsmech.cleanValue({1: np.int64(3)}), {"1": 3})
        self.assertEqual(ocrsmech.cleanValue((np.nan, 2.0)), [None, 2.0])

    def test_exit_code(self):
        self.assertEqual(ocrsmech.exitCode([]), 0)
        self.assertEqual(ocrsmech.exitCode([{"passed": True}, {"case": 2}]), 0)
        self.assertEqual(ocrsmech.exitCode([{"passed": True}, {"passed": False}]), 1)
        self.assertEqual(ocrsmech.exitCode(passed=False), 1)
        self.assertEqual(ocrsmech.exitCode([{"passed": True}], passed=True), 0)


class TestMemory(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
