import gzip
import json
import os
from pathlib import Path
from typing import IO, Dict, Iterator, List, Tuple, Union

from .classes import Constants
from .errors import SchemaError

PathLike = Union[str, Path]


def open_text(path: PathLike, mode: str = "r") -> IO[str]:
    """Opens a text file, through gzip when the name ends in .gz."""
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def dumps(record: Dict) -> str:
    return json.dumps(record, sort_keys=True)


def append_record(path: PathLike, record: Dict) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open_text(path, "a") as file:
        file.write(dumps(record) + "\n")


def write_jsonl(path: PathLike, kind: str, records: List[Dict], header: Dict = None) -> None:
    head = {"kind": kind, "schema_version": Constants.schema_version}
    head.update(header or {})
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open_text(path, "w") as file:
        file.write(dumps(head) + "\n")
        for record in records:
            file.write(dumps(record) + "\n")


def read_jsonl(path: PathLike, kind: str) -> Tuple[Dict, Iterator[Dict]]:
    """Header and records of a file written by `write_jsonl`; the header must match `kind` and the schema version."""
    if not Path(path).exists():
        raise SchemaError(f"File not read, {path} does not exist")
    with open_text(path, "r") as file:
        lines = [line for line in file if line.strip()]
    if not lines:
        raise SchemaError(f"File not read, {path} is empty")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as e:
        raise SchemaError(f"File not read, {path} is not JSON lines: {e}")
    if header.get("kind") != kind:
        raise SchemaError(f"File not read, {path} holds {header.get('kind')!r} records, expected {kind!r}")
    if header.get("schema_version") != Constants.schema_version:
        raise SchemaError(
            f"File not read, {path} has schema version {header.get('schema_version')}, "
            f"expected {Constants.schema_version}"
        )
    return header, iter(records)


def read_records(path: PathLike) -> List[Dict]:
    """Header-less JSON lines, as written by `append_record`."""
    if not Path(path).exists():
        return []
    with open_text(path, "r") as file:
        return [json.loads(line) for line in file if line.strip()]
