"""CSV tables with a '#' metadata block, written atomically."""
import csv
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple, Union

from app.config import settings
from app.exceptions import DomainError

logger = logging.getLogger(__name__)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, settings.FLOAT_FORMAT)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_table(path: Union[str, Path], columns: Sequence[str], rows: Iterable[Sequence[float]],
                metadata: Mapping[str, Any] = None) -> Path:
    """Write metadata lines, a header row and data rows; the file appears atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    count = 0
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as f:
            for key, value in (metadata or {}).items():
                f.write(f"# {key}={format_value(value)}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                if len(row) != len(columns):
                    raise DomainError(f"row has {len(row)} values for {len(columns)} columns")
                writer.writerow([format_value(float(x)) for x in row])
                count += 1
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise
    logger.info(f"Wrote {count} rows to {path}")
    return path


def read_table(path: Union[str, Path]) -> Tuple[Dict[str, str], List[str], List[List[float]]]:
    """(metadata, columns, rows) of a file written by :func:`write_table`."""
    metadata: Dict[str, str] = {}
    body: List[str] = []
    with open(path, newline="", encoding="utf-8") as f:
        for line in f:
            if line.startswith("# "):
                key, _, value = line[2:].rstrip("\n").partition("=")
                metadata[key] = value
            else:
                body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[float(x) for x in row] for row in reader if row]
    return metadata, columns, rows
