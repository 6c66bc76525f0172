# Copyright (C) 2024 Leiden University Medical Center
# This file is part of heavycoin
#
# heavycoin is free software: you can redistribute it and/or modify
# it under the terms of the GNU Affero General Public License as
# published by the Free Software Foundation, either version 3 of the
# License, or (at your option) any later version.
#
# heavycoin is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Affero General Public License for more details.
#
# You should have received a copy of the GNU Affero General Public License
# along with heavycoin.  If not, see <https://www.gnu.org/licenses/

import csv
import dataclasses
import io
import json
import math
from typing import List

import pytest

import heavycoin
from heavycoin import report_modules
from heavycoin.report_modules import (Meta, ReportModule, write_csv_report,
                                      write_json_report)


@dataclasses.dataclass
class Example(ReportModule):
    name: str
    value: float
    values: List[float]


def test_meta_deterministic():
    meta = Meta.create("bounds", deterministic=True)
    assert meta.heavycoin_version == heavycoin.__version__
    assert meta.report_generated is None
    assert meta.command == "bounds"


def test_meta_time():
    meta = Meta.create("simulate")
    assert isinstance(meta.report_generated, str)


def test_from_dict():
    example = Example("a", 1.0, [2.0])
    assert Example.from_dict(example.to_dict()) == example


def test_json_report_non_finite_is_null():
    output = io.StringIO()
    write_json_report({"example": Example("a", math.nan, [1.0, math.inf]),
                       "plain": {"count": 3}}, output)
    report = json.loads(output.getvalue())
    assert report == {"example": {"name": "a", "value": None,
                                  "values": [1.0, None]},
                      "plain": {"count": 3}}
    assert "NaN" not in output.getvalue()


def test_csv_report_two_rows():
    output = io.StringIO()
    write_csv_report({"meta": Meta.create("bounds", deterministic=True),
                      "example": Example("a", 0.5, [1.0, 2.0])}, output)
    rows = list(csv.reader(io.StringIO(output.getvalue())))
    assert len(rows) == 2
    row = dict(zip(*rows))
    assert row["meta.command"] == "bounds"
    assert row["meta.report_generated"] == ""
    assert row["example.value"] == "0.5"
    assert json.loads(row["example.values"]) == [1.0, 2.0]


@pytest.mark.parametrize("name", ["json", "csv"])
def test_report_writers(name):
    output = io.StringIO()
    report_modules.REPORT_WRITERS[name]({"example": {"x": 1}}, output)
    assert output.getvalue().endswith("\n")
