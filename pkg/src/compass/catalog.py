"""In-memory columnar tables, CSV ingestion and an on-disk catalog directory."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CatalogError

TYPES = ("int64", "text")


@dataclass(frozen=True)
class Column:
    name: str
    type: str = "int64"
    nullable: bool = False

    def __post_init__(self):
        if self.type not in TYPES:
            raise CatalogError(f"column {self.name}: unsupported type {self.type!r}")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise CatalogError(f"duplicate column names in schema: {names}")

    def __getitem__(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise CatalogError(f"unknown column {name!r}")

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @classmethod
    def from_json(cls, spec) -> Schema:
        if isinstance(spec, dict):
            spec = spec["columns"]
        return cls(
            tuple(Column(c["name"], c.get("type", "int64"), bool(c.get("nullable", False))) for c in spec)
        )

    def to_json(self) -> list[dict]:
        return [{"name": c.name, "type": c.type, "nullable": c.nullable} for c in self.columns]


@dataclass
class Table:
    name: str
    schema: Schema
    columns: dict[str, np.ndarray]
    nulls: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise CatalogError(f"table {self.name}: columns of unequal length")
        for c in self.schema.columns:
            if c.name not in self.columns:
                raise CatalogError(f"table {self.name}: missing column {c.name}")
            self.nulls.setdefault(c.name, np.zeros(self.row_count, dtype=bool))

    @property
    def row_count(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise CatalogError(f"table {self.name}: unknown column {name!r}")
        return self.columns[name]

    def null_mask(self, name: str) -> np.ndarray:
        self.column(name)
        return self.nulls[name]

    def take(self, mask_or_index, name: str | None = None) -> Table:
        return Table(
            name or self.name,
            self.schema,
            {k: v[mask_or_index] for k, v in self.columns.items()},
            {k: v[mask_or_index] for k, v in self.nulls.items()},
        )

    @classmethod
    def from_arrays(cls, name: str, data: dict, schema: Schema | None = None) -> Table:
        """Build from plain arrays; ``None`` entries in object columns become nulls."""
        if schema is None:
            schema = Schema(
                tuple(
                    Column(k, "int64" if np.asarray(v).dtype.kind in "iu" else "text", False)
                    for k, v in data.items()
                )
            )
        columns, nulls = {}, {}
        for c in schema.columns:
            raw = data[c.name]
            if c.type == "int64":
                arr = np.asarray(raw)
                if arr.dtype == object:
                    mask = np.array([v is None for v in arr], dtype=bool)
                    arr = np.array([0 if v is None else int(v) for v in arr], dtype=np.int64)
                else:
                    mask = np.zeros(len(arr), dtype=bool)
                    arr = arr.astype(np.int64)
            else:
                arr = np.empty(len(raw), dtype=object)
                arr[:] = ["" if v is None else str(v) for v in raw]
                mask = np.array([v is None for v in raw], dtype=bool)
            if mask.any() and not c.nullable:
                raise CatalogError(f"table {name}: nulls in non-nullable column {c.name}")
            columns[c.name], nulls[c.name] = arr, mask
        return cls(name, schema, columns, nulls)


def table_cardinality(table: Table) -> int:
    return table.row_count


def load_csv(path, schema: Schema, name: str | None = None, delimiter=",", header=True, null_token="") -> Table:
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"missing file: {path}")
    name = name or path.stem
    ncol = len(schema.columns)
    values: list[list] = [[] for _ in range(ncol)]
    masks: list[list[bool]] = [[] for _ in range(ncol)]
    errors = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        if header:
            head = next(reader, None)
            if head is not None and [h.strip() for h in head] != schema.names:
                raise CatalogError(f"{path}: header {head} does not match schema {schema.names}")
        for rec in reader:
            line = reader.line_num
            if not rec:
                continue
            if len(rec) != ncol:
                errors.append(f"line {line}: expected {ncol} fields, got {len(rec)}")
                continue
            for j, (col, raw) in enumerate(zip(schema.columns, rec)):
                if raw == null_token and (col.nullable or col.type == "int64"):
                    if not col.nullable:
                        errors.append(f"line {line}: null in non-nullable column {col.name}")
                        continue
                    values[j].append(0 if col.type == "int64" else "")
                    masks[j].append(True)
                    continue
                if col.type == "int64":
                    try:
                        values[j].append(int(raw))
                    except ValueError:
                        errors.append(f"line {line}: column {col.name}: not an integer: {raw!r}")
                        continue
                else:
                    values[j].append(raw)
                masks[j].append(False)
    if errors:
        shown = "; ".join(errors[:10])
        more = f" (+{len(errors) - 10} more)" if len(errors) > 10 else ""
        raise CatalogError(f"{path}: {shown}{more}")
    columns, nulls = {}, {}
    for col, vals, mask in zip(schema.columns, values, masks):
        if col.type == "int64":
            columns[col.name] = np.array(vals, dtype=np.int64)
        else:
            arr = np.empty(len(vals), dtype=object)
            arr[:] = vals
            columns[col.name] = arr
        nulls[col.name] = np.array(mask, dtype=bool)
    return Table(name, schema, columns, nulls)


def write_csv(table: Table, path, delimiter=",", header=True, null_token="") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        if header:
            w.writerow(table.schema.names)
        cols = [table.columns[n] for n in table.schema.names]
        nulls = [table.nulls[n] for n in table.schema.names]
        for i in range(table.row_count):
            w.writerow([null_token if m[i] else c[i] for c, m in zip(cols, nulls)])


class Catalog:
    """A directory holding validated tables as ``.npz`` files plus ``catalog.json``."""

    MANIFEST = "catalog.json"

    def __init__(self, root):
        self.root = Path(root)
        self._manifest = {"tables": {}}
        if (self.root / self.MANIFEST).exists():
            self._manifest = json.loads((self.root / self.MANIFEST).read_text())

    def names(self) -> list[str]:
        return sorted(self._manifest["tables"])

    def row_count(self, name: str) -> int:
        return self._manifest["tables"][name]["rows"]

    def __contains__(self, name: str) -> bool:
        return name in self._manifest["tables"]

    def save(self, table: Table) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        arrays = {}
        for c in table.schema.columns:
            data = table.columns[c.name]
            arrays[f"v_{c.name}"] = data.astype(str) if c.type == "text" else data
            arrays[f"n_{c.name}"] = table.nulls[c.name]
        fname = f"{table.name}.npz"
        np.savez(self.root / fname, **arrays)
        self._manifest["tables"][table.name] = {
            "file": fname,
            "rows": table.row_count,
            "schema": table.schema.to_json(),
        }
        (self.root / self.MANIFEST).write_text(json.dumps(self._manifest, indent=2, sort_keys=True))

    def load(self, name: str) -> Table:
        if name not in self:
            raise CatalogError(f"table {name!r} not in catalog {self.root}")
        entry = self._manifest["tables"][name]
        schema = Schema.from_json(entry["schema"])
        columns, nulls = {}, {}
        with np.load(self.root / entry["file"], allow_pickle=False) as z:
            for c in schema.columns:
                v = z[f"v_{c.name}"]
                if c.type == "text":
                    obj = np.empty(len(v), dtype=object)
                    obj[:] = v.tolist()
                    v = obj
                columns[c.name] = v
                nulls[c.name] = z[f"n_{c.name}"]
        return Table(name, schema, columns, nulls)
