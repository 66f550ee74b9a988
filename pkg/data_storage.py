"""
Data Storage Module
Versioned field files (CSV and binary), JSON documents, CSV tables and run manifests,
all confined to one output directory
"""

import hashlib
import json
import re
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from exceptions import DataFileError, SchemaError, ShapeError, UsageError
from fields import ComplexField2D, RealField2D, SpectralGrid, from_frame, to_frame

FIELD_CSV_SCHEMA = "field-csv/1.0"
FIELD_BINARY_MAGIC = b"LMPF"
FIELD_BINARY_VERSION = (1, 0)
MANIFEST_SCHEMA = "run-manifest/1.0"
MANIFEST_NAME = "manifest.json"

_HEADER = struct.Struct("<4sHHIIddB")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def check_schema(tag: Optional[str], expected: str):
    """
    Accept a schema tag with the expected name and major version

    Args:
        tag: Tag found in the file, e.g. 'lattice-sequence/1.2'
        expected: Tag this reader writes, e.g. 'lattice-sequence/1.0'
    """
    name, version = expected.split("/")
    match = re.fullmatch(r"([\w.-]+)/(\d+)\.(\d+)", tag or "")
    if match is None:
        raise SchemaError(f"missing or malformed schema tag {tag!r} (expected {expected})")
    if match.group(1) != name:
        raise SchemaError(f"file holds a '{match.group(1)}' document, expected '{name}'")
    if int(match.group(2)) != int(version.split(".")[0]):
        raise SchemaError(f"unsupported {name} major version {match.group(2)} (reader: {version})")


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _json_default(value: Any):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (tuple, set)):
        return list(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _require(path: Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"Input file not found: {path}")
    return path


class DataStorage:
    """Writes every artifact of one run under out_dir and remembers what it wrote"""

    def __init__(self, out_dir: str):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._root = self.out_dir.resolve()
        self.outputs: List[str] = []

    def path(self, name: str) -> Path:
        """Resolve name inside out_dir; anything escaping it is a usage error"""
        target = (self._root / name).resolve()
        if target != self._root and self._root not in target.parents:
            raise UsageError(f"refusing to write {name!r} outside {self._root}")
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _record(self, name: str) -> Path:
        if name not in self.outputs:
            self.outputs.append(name)
        return self.path(name)

    def write_json(self, name: str, data: Dict[str, Any], schema: str) -> Path:
        """
        Write a JSON document tagged with schema

        Args:
            name: File name relative to out_dir
            data: JSON-ready dictionary
            schema: Tag such as 'solve-report/1.0'

        Returns:
            Path of the written file
        """
        target = self._record(name)
        document = {"schema": schema, **{k: v for k, v in data.items() if k != "schema"}}
        with open(target, "w") as f:
            json.dump(document, f, indent=2, default=_json_default)
            f.write("\n")
        return target

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        target = self._record(name)
        frame.to_csv(target, index=False)
        return target

    def write_field_csv(self, name: str, field) -> Path:
        """Header line '# schema=... nx=.. nz=.. lx=.. lz=.. dtype=..' then the long table"""
        target = self._record(name)
        g = field.grid
        dtype = "real" if isinstance(field, RealField2D) else "complex"
        header = (f"# schema={FIELD_CSV_SCHEMA} nx={g.nx} nz={g.nz} "
                  f"lx={g.lx!r} lz={g.lz!r} dtype={dtype}\n")
        with open(target, "w", newline="") as f:
            f.write(header)
            to_frame(field).to_csv(f, index=False)
        return target

    def write_field_binary(self, name: str, field) -> Path:
        target = self._record(name)
        g = field.grid
        tag = 0 if isinstance(field, RealField2D) else 1
        header = _HEADER.pack(FIELD_BINARY_MAGIC, *FIELD_BINARY_VERSION, g.nx, g.nz, g.lx, g.lz, tag)
        with open(target, "wb") as f:
            f.write(header)
            f.write(np.ascontiguousarray(field.values, dtype=_DTYPES[tag]).tobytes())
        return target

    def write_field(self, name: str, field) -> Path:
        """Dispatch on the extension: .csv or .bin"""
        if name.endswith(".bin"):
            return self.write_field_binary(name, field)
        if name.endswith(".csv"):
            return self.write_field_csv(name, field)
        raise ValueError(f"Unsupported format: {name}")

    def hashes(self) -> Dict[str, str]:
        return {name: file_sha256(self.path(name)) for name in self.outputs}

    def write_manifest(self, command: str, resolved_config: Dict[str, Any], tool_version: str,
                       wall_time: float) -> Path:
        """manifest.json listing every output with its sha256; written last"""
        target = self.path(MANIFEST_NAME)
        manifest = {
            "schema": MANIFEST_SCHEMA,
            "command": command,
            "config": resolved_config,
            "tool_version": tool_version,
            "wall_time_s": wall_time,
            "outputs": [{"path": name, "sha256": digest} for name, digest in self.hashes().items()],
        }
        with open(target, "w") as f:
            json.dump(manifest, f, indent=2, default=_json_default)
            f.write("\n")
        return target


def read_json(path: str, schema: str) -> Dict[str, Any]:
    """Load a JSON document and check its schema tag"""
    target = _require(Path(path))
    try:
        with open(target, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{target} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{target} does not hold a JSON object")
    check_schema(data.get("schema"), schema)
    return data


def read_manifest(path: str) -> Dict[str, Any]:
    return read_json(path, MANIFEST_SCHEMA)


def _parse_csv_header(line: str) -> Dict[str, str]:
    if not line.startswith("#"):
        raise SchemaError("field CSV has no header line")
    items = dict(token.split("=", 1) for token in line[1:].split() if "=" in token)
    check_schema(items.get("schema"), FIELD_CSV_SCHEMA)
    missing = {"nx", "nz", "lx", "lz", "dtype"} - set(items)
    if missing:
        raise SchemaError(f"field CSV header lacks {sorted(missing)}")
    return items


def read_field_csv(path: str):
    target = _require(Path(path))
    with open(target, "r") as f:
        meta = _parse_csv_header(f.readline())
        frame = pd.read_csv(f)
    grid = SpectralGrid(int(meta["nx"]), int(meta["nz"]), float(meta["lx"]), float(meta["lz"]))
    field = from_frame(frame, grid)
    if (meta["dtype"] == "real") != isinstance(field, RealField2D):
        raise SchemaError(f"header dtype {meta['dtype']} does not match the table columns")
    return field


def read_field_binary(path: str):
    target = _require(Path(path))
    raw = target.read_bytes()
    if len(raw) < _HEADER.size:
        raise SchemaError(f"{target} is too short for a field header")
    magic, major, _minor, nx, nz, lx, lz, tag = _HEADER.unpack_from(raw)
    if magic != FIELD_BINARY_MAGIC:
        raise SchemaError(f"{target} is not a field file (magic {magic!r})")
    if major != FIELD_BINARY_VERSION[0]:
        raise SchemaError(f"unsupported field binary major version {major}")
    if tag not in _DTYPES:
        raise SchemaError(f"unknown dtype tag {tag}")
    grid = SpectralGrid(nx, nz, lx, lz)
    values = np.frombuffer(raw, dtype=_DTYPES[tag], offset=_HEADER.size)
    if values.size != grid.size:
        raise ShapeError(f"{target} holds {values.size} samples, header says {grid.size}")
    values = values.reshape(grid.shape).copy()
    return RealField2D(grid, values) if tag == 0 else ComplexField2D(grid, values)


def read_field(path: str):
    """Read a field file written by DataStorage (.csv or .bin)"""
    if str(path).endswith(".bin"):
        return read_field_binary(path)
    return read_field_csv(path)
