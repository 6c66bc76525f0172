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

import contextlib
import math
import os
import sys
from typing import Any, Dict, IO, Iterator, Mapping, Optional

import tqdm

import xopen


class ProgressUpdater:
    """
    A simple wrapper around tqdm to count finished units of work, such as
    simulated episodes or value iteration sweeps.

    Because tqdm requires some minor execution time, tqdm.update() is only
    called once every ``update_every`` units.
    """
    tqdm: tqdm.tqdm

    def __init__(self, total: Optional[int], desc: str,
                 update_every: Optional[int] = None,
                 disable: bool = False):
        self.processed = 0
        self.reported = 0
        if update_every is None:
            update_every = max(1, (total or 0) // 1000)
        self.update_every = update_every
        self.next_update_at = update_every
        self.tqdm = tqdm.tqdm(
            desc=desc,
            total=total,
            disable=disable,
            file=sys.stderr,
            smoothing=0.05,  # Much less erratic than default 0.3
        )

    def __enter__(self):
        return self

    def close(self):
        # Do one last update to ensure the entire progress bar is full
        self.tqdm.update(self.processed - self.reported)
        self.reported = self.processed
        self.tqdm.close()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def update(self, units: int = 1):
        self.processed += units
        if self.processed >= self.next_update_at:
            self.next_update_at = self.processed + self.update_every
            self.tqdm.update(self.processed - self.reported)
            self.reported = self.processed


def flatten_dict(d: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    """
    Flatten nested mappings into a single level, joining keys with ".".
    Lists are kept as values.
    """
    flat: Dict[str, Any] = {}
    for key, value in d.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(value, Mapping):
            flat.update(flatten_dict(value, name))
        else:
            flat[name] = value
    return flat


def json_safe(value: Any) -> Any:
    """Replace non-finite floats with None, recursively."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, Mapping):
        return {key: json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]
    return value


@contextlib.contextmanager
def open_output(path: Optional[str]) -> Iterator[IO[str]]:
    """
    Open a text output stream. None or "-" means standard output, which is
    left open. Paths ending in a compression extension are compressed by
    xopen.
    """
    if path is None or path == "-":
        yield sys.stdout
        sys.stdout.flush()
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with xopen.xopen(path, "wt") as output:
        yield output
