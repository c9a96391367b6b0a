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
"""JSON and CSV output of result records.

Records are flat `dict` objects.  Columns keep the order in which keys first
appear, floats are written with full ``repr`` precision, and non-finite floats
become ``null`` in JSON and empty cells in CSV.
"""

import csv
import io
import json
import math
import sys

import numpy as np

from lsst.utils.logging import getLogger

__all__ = ["REPORT_FORMATS", "reportFields", "cleanValue", "formatReport", "emitReport", "readReport",
           "exitCode"]

REPORT_FORMATS = ("json", "csv")

_log = getLogger("ocrsmech.reports")


def reportFields(records, fields=None):
    """Column order of ``records``: ``fields`` first, then keys by first appearance."""
    ordered = list(fields) if fields else []
    seen = set(ordered)
    for record in records:
        for key in record:
            if key not in seen:
                seen.add(key)
                ordered.append(key)
    return ordered


def cleanValue(value):
    """Plain JSON-compatible form of a record value."""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, np.ndarray):
        return [cleanValue(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [cleanValue(v) for v in value]
    if isinstance(value, dict):
        return {str(k): cleanValue(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _csvCell(value):
    value = cleanValue(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return value


def formatReport(records, format="json", fields=None, summary=None):
    """Render records as text.

    Parameters
    ----------
    records : `list` [`dict`]
    format : `str`, optional
        ``"json"`` or ``"csv"``.
    fields : `list` [`str`], optional
        Leading columns; other keys follow in order of first appearance.
    summary : `dict`, optional
        JSON only: written as ``{"summary": ..., "records": ...}``.

    Returns
    -------
    text : `str`
    """
    if format not in REPORT_FORMATS:
        raise ValueError("format must be one of %s, got %r" % (REPORT_FORMATS, format))
    fields = reportFields(records, fields)
    if format == "json":
        rows = [{key: cleanValue(record[key]) for key in fields if key in record} for record in records]
        payload = rows if summary is None else {"summary": cleanValue(summary), "records": rows}
        return json.dumps(payload, indent=2, allow_nan=False) + "\n"

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow({key: _csvCell(record[key]) for key in fields if key in record})
    return buffer.getvalue()


def emitReport(records, format="json", path=None, fields=None, summary=None):
    """Write records to ``path``, or to standard output when it is `None`.

    An empty record list still produces a CSV header (of ``fields``) or an
    empty JSON list.

    Returns
    -------
    text : `str`
        What was written.
    """
    text = formatReport(records, format=format, fields=fields, summary=summary)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as f:
            f.write(text)
        _log.info("Wrote %d records to %s", len(records), path)
    return text


def readReport(path):
    """Read a JSON report written by `emitReport`."""
    with open(path) as f:
        return json.load(f)


def exitCode(records=None, passed=None):
    """Process exit code: 0 when every pass flag is true, 1 otherwise.

    Parameters
    ----------
    records : `list` [`dict`], optional
        Records whose ``passed`` entries, when present, are checked.
    passed : `bool`, optional
        Overall flag checked as well.
    """
    flags = [bool(r["passed"]) for r in (records or []) if "passed" in r]
    if passed is not None:
        flags.append(bool(passed))
    return 0 if all(flags) else 1
