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
import json
import time
from abc import ABC
from typing import Any, Dict, IO, Mapping, Optional, Union

from ._version import __version__
from .util import flatten_dict, json_safe

ReportItem = Union["ReportModule", Mapping[str, Any]]


class ReportModule(ABC):
    """
    Base class for every record that ends up in a report. Subclasses are
    dataclasses holding plain JSON-compatible values.
    """

    @classmethod
    def from_dict(cls, d: Dict[str, Any]):
        return cls(**d)  # type: ignore

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)  # type: ignore


@dataclasses.dataclass
class Meta(ReportModule):
    heavycoin_version: str
    report_generated: Optional[str]
    command: str

    @classmethod
    def create(cls, command: str, deterministic: bool = False):
        if deterministic:
            report_generated = None
        else:
            time_struct = time.localtime(time.time())
            report_generated = time.strftime("%Y-%m-%d %H:%M:%S%z",
                                             time_struct)
        return cls(__version__, report_generated, command)


def report_modules_to_dict(report: Mapping[str, ReportItem]) -> Dict[str, Any]:
    return {
        name: module.to_dict() if isinstance(module, ReportModule)
        else dict(module)
        for name, module in report.items()
    }


def write_json_report(report: Mapping[str, ReportItem], output: IO[str]):
    json.dump(json_safe(report_modules_to_dict(report)), output, indent=2,
              allow_nan=False)
    output.write("\n")


def csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(json_safe(value), allow_nan=False)
    return str(value)


def write_csv_report(report: Mapping[str, ReportItem], output: IO[str]):
    """
    Write the report as a header row and a value row. Nested keys are
    joined with "." and list values are written as JSON.
    """
    flat = flatten_dict(json_safe(report_modules_to_dict(report)))
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(flat.keys())
    writer.writerow(csv_cell(value) for value in flat.values())


REPORT_WRITERS = {
    "json": write_json_report,
    "csv": write_csv_report,
}
