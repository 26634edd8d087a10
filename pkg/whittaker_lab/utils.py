"""Table writers shared by the CLI subcommands.

Records are flat dicts. Complex values become ``<name>_re`` and
``<name>_im`` columns; the resolved config goes in front of the data.
"""

import csv
import io
import json
import logging
import os
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)


def _plain(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def flatten_record(record: Dict) -> Dict:
    out = {}
    for key, value in record.items():
        value = _plain(value)
        if isinstance(value, complex):
            out[f"{key}_re"] = value.real
            out[f"{key}_im"] = value.imag
        else:
            out[key] = value
    return out


def columns_of(rows: Sequence[Dict]) -> List[str]:
    """Union of keys in first-seen order."""
    seen = {}
    for row in rows:
        for key in row:
            seen.setdefault(key, None)
    return list(seen)


def _header(config: Dict, timestamp: bool) -> Dict:
    header = {"config": config}
    if timestamp:
        header["generated"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return header


def render_csv(records: Iterable[Dict], config: Dict, timestamp: bool = True) -> str:
    rows = [flatten_record(r) for r in records]
    buffer = io.StringIO()
    for key, value in _header(config, timestamp).items():
        buffer.write(f"# {key}: {json.dumps(value, sort_keys=True, default=str)}\n")
    writer = csv.DictWriter(buffer, fieldnames=columns_of(rows), lineterminator="\n", restval="")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buffer.getvalue()


def render_json(records: Iterable[Dict], config: Dict, timestamp: bool = True) -> str:
    document = _header(config, timestamp)
    document["records"] = [flatten_record(r) for r in records]
    return json.dumps(document, indent=2, sort_keys=True, default=str) + "\n"


def render(records: Iterable[Dict], config: Dict, fmt: str = "csv", timestamp: bool = True) -> str:
    if fmt == "json":
        return render_json(records, config, timestamp)
    return render_csv(records, config, timestamp)


def suffixed(path: str, name: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}_{name}{ext}"


def write_output(text: str, path: Optional[str] = None, stream=None):
    if path is None:
        stream.write(text)
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as file:
        file.write(text)
    logger.info("wrote %s", path)
