import csv
import functools
import io
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import aiofiles
import numpy as np

from .constants import Verdict
from .errors import AuditFailedError

logger = logging.getLogger(__name__)


def format_double(value: Any) -> str:
    """17 significant digits, '.' decimal point; integers and strings pass through"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def rows_to_csv(columns: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_double(row.get(column)) for column in columns])
    return buffer.getvalue()


def to_json(data: Mapping | list) -> str:
    return json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


def pairwise_sum(values: np.ndarray) -> complex | float:
    """Fixed-order pairwise reduction; identical inputs give identical bits"""
    array = np.ascontiguousarray(values)
    if array.size == 0:
        return 0.0
    total = np.add.reduce(array, axis=None)
    return complex(total) if np.iscomplexobj(array) else float(total)


async def async_read_file(file_path: str | Path) -> bytes:
    async with aiofiles.open(file_path, "rb") as file:
        content = await file.read()
    return content


async def async_write_atomic(file_path: str | Path, content: str | bytes) -> Path:
    """Write to a temp file next to the target, then rename over it"""
    target = Path(file_path)
    target.parent.mkdir(parents=True, exist_ok=True)
    payload = content.encode("utf-8") if isinstance(content, str) else content

    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    os.close(fd)
    try:
        async with aiofiles.open(tmp_name, "wb") as file:
            await file.write(payload)
        os.replace(tmp_name, target)
    except Exception:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug(f"wrote {len(payload)} bytes to {target}")
    return target


def audited(func):
    """
    Log the verdict of an audit returning a report with a `verdict` field.
    With strict=True a failed verdict raises AuditFailedError
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        strict = kwargs.pop("strict", False)
        report = func(*args, **kwargs)
        verdict = getattr(report, "verdict", Verdict.PASS)

        if verdict == Verdict.PASS:
            logger.info(f"{func.__name__} passed")
        else:
            logger.warning(f"{func.__name__} failed - {report}")
            if strict:
                raise AuditFailedError(func.__name__, str(getattr(report, "detail", "")))
        return report

    return wrapper
