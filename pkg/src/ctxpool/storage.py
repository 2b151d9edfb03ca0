"""Binary and structured-text storage: embedding containers, dataset
manifests, and model checkpoints.

All multi-byte integers and floats are little-endian regardless of host
byte order. Every payload carries a 64-bit FNV-1a checksum so truncation
and bit rot are detected before any data reaches the model.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DatasetError,
    FormatError,
    IntegrityError,
    ParameterError,
    SchemaError,
    VersionError,
)
from .model import ModelConfig, ModelParams
from .templates import SPLITS, Dataset, Distribution, Embedding, Template, validate

CONTAINER_MAGIC = b"CNAN"
CONTAINER_VERSION = 1
CHECKPOINT_MAGIC = b"CNCK"
CHECKPOINT_VERSION = 1
MANIFEST_VERSION = 1

_FLOAT_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _FNV_MASK
    return h


def _read_exact(buf: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(buf):
        raise IntegrityError(
            f"truncated file: needed {n} bytes for {what} at offset {offset}, "
            f"have {len(buf) - offset}"
        )
    return buf[offset : offset + n]


# --------------------------------------------------------------------------
# Embedding container: a flat (count, d) float matrix.
#
#   magic "CNAN" | version u32 | d u32 | count u64 | float_width u8
#   payload: count rows of d little-endian floats
#   footer: u64 FNV-1a of the payload bytes
# --------------------------------------------------------------------------

_CONTAINER_HEADER = struct.Struct("<4sIIQB")
_CHECKSUM = struct.Struct("<Q")


def write_container(path: str | Path, rows: np.ndarray, float_width: int = 8) -> None:
    """Serialize a (count, d) matrix. float_width 4 stores f32, 8 stores f64."""
    if float_width not in _FLOAT_DTYPES:
        raise ParameterError(f"float_width must be 4 or 8, got {float_width}")
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ParameterError(f"expected a 2-d matrix, got shape {rows.shape}")
    if not np.all(np.isfinite(rows)):
        raise ParameterError("container rows must be finite")
    count, d = rows.shape
    if d < 1:
        raise ParameterError("embedding dimension must be at least 1")
    payload = np.ascontiguousarray(rows, dtype=_FLOAT_DTYPES[float_width]).tobytes()
    header = _CONTAINER_HEADER.pack(
        CONTAINER_MAGIC, CONTAINER_VERSION, d, count, float_width
    )
    Path(path).write_bytes(header + payload + _CHECKSUM.pack(fnv1a64(payload)))


def read_container(path: str | Path) -> np.ndarray:
    """Read a container back as a float64 (count, d) matrix."""
    buf = Path(path).read_bytes()
    head = _read_exact(buf, 0, _CONTAINER_HEADER.size, "container header")
    magic, version, d, count, float_width = _CONTAINER_HEADER.unpack(head)
    if magic != CONTAINER_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CONTAINER_MAGIC!r}")
    if version != CONTAINER_VERSION:
        raise VersionError(f"unsupported container version {version}")
    if d < 1:
        raise SchemaError(f"container declares d = {d}")
    if float_width not in _FLOAT_DTYPES:
        raise SchemaError(f"container declares float width {float_width}")
    offset = _CONTAINER_HEADER.size
    payload = _read_exact(buf, offset, count * d * float_width, "payload")
    offset += len(payload)
    (stored,) = _CHECKSUM.unpack(_read_exact(buf, offset, 8, "checksum"))
    if offset + 8 != len(buf):
        raise IntegrityError(f"{len(buf) - offset - 8} trailing bytes after checksum")
    if fnv1a64(payload) != stored:
        raise IntegrityError("payload checksum mismatch")
    rows = np.frombuffer(payload, dtype=_FLOAT_DTYPES[float_width])
    return rows.astype(np.float64).reshape(count, d)


# --------------------------------------------------------------------------
# Dataset = container with the raw vectors + JSON manifest mapping row
# ranges to templates. Manifests index rows [start, stop) in the container.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TemplateRecord:
    """Manifest entry tying a template's metadata to its container rows."""

    template_id: str
    subject_id: str
    distribution: str
    split: str
    start: int
    stop: int
    media_ids: tuple[str, ...]
    quality_hints: tuple[float | None, ...] | None


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise SchemaError(f"{where} is missing required field '{key}'")
    value = obj[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SchemaError(f"{where}.{key} must be a number, got {type(value).__name__}")
        return float(value)
    if not isinstance(value, kind):
        raise SchemaError(
            f"{where}.{key} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


def parse_manifest(text: str) -> tuple[int, list[TemplateRecord]]:
    """Parse and validate manifest JSON. Returns (d, records)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("manifest root must be an object")
    version = _require(doc, "format_version", int, "manifest")
    if version != MANIFEST_VERSION:
        raise VersionError(f"unsupported manifest version {version}")
    d = _require(doc, "d", int, "manifest")
    if d < 1:
        raise SchemaError(f"manifest declares d = {d}")
    entries = _require(doc, "templates", list, "manifest")
    records: list[TemplateRecord] = []
    seen: set[str] = set()
    for i, entry in enumerate(entries):
        where = f"templates[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where} must be an object")
        tid = _require(entry, "template_id", str, where)
        if tid in seen:
            raise SchemaError(f"duplicate template_id '{tid}'")
        seen.add(tid)
        subject = _require(entry, "subject_id", str, where)
        dist = _require(entry, "distribution", str, where)
        if dist not in (Distribution.PROBE.value, Distribution.GALLERY.value):
            raise SchemaError(f"{where}.distribution '{dist}' is not probe/gallery")
        split = _require(entry, "split", str, where)
        if split not in SPLITS:
            raise SchemaError(f"{where}.split '{split}' is not one of {SPLITS}")
        start = _require(entry, "start", int, where)
        stop = _require(entry, "stop", int, where)
        if start < 0 or stop <= start:
            raise SchemaError(f"{where} row range [{start}, {stop}) is empty or negative")
        media = _require(entry, "media_ids", list, where)
        if len(media) != stop - start:
            raise SchemaError(
                f"{where} has {len(media)} media_ids for {stop - start} rows"
            )
        if not all(isinstance(m, str) for m in media):
            raise SchemaError(f"{where}.media_ids must all be strings")
        hints = entry.get("quality_hints")
        if hints is not None:
            if not isinstance(hints, list) or len(hints) != stop - start:
                raise SchemaError(
                    f"{where}.quality_hints must be null or list of {stop - start} entries"
                )
            for h in hints:
                if h is not None and (isinstance(h, bool) or not isinstance(h, (int, float))):
                    raise SchemaError(f"{where}.quality_hints entries must be numbers or null")
            hints = tuple(None if h is None else float(h) for h in hints)
        records.append(
            TemplateRecord(tid, subject, dist, split, start, stop, tuple(media), hints)
        )
    return d, records


def render_manifest(d: int, records: list[TemplateRecord]) -> str:
    entries = []
    for r in records:
        entry = {
            "template_id": r.template_id,
            "subject_id": r.subject_id,
            "distribution": r.distribution,
            "split": r.split,
            "start": r.start,
            "stop": r.stop,
            "media_ids": list(r.media_ids),
            "quality_hints": None if r.quality_hints is None else list(r.quality_hints),
        }
        entries.append(entry)
    doc = {"format_version": MANIFEST_VERSION, "d": d, "templates": entries}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_dataset(directory: str | Path, dataset: Dataset, float_width: int = 8) -> None:
    """Write a dataset as embeddings.cnan + manifest.json in `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records: list[TemplateRecord] = []
    chunks: list[np.ndarray] = []
    row = 0
    for t in dataset.templates:
        n = len(t.embeddings)
        chunks.append(t.matrix())
        hints = t.quality_hints()
        records.append(
            TemplateRecord(
                template_id=t.template_id,
                subject_id=t.subject_id,
                distribution=t.distribution.value,
                split=t.split,
                start=row,
                stop=row + n,
                media_ids=tuple(e.media_id for e in t.embeddings),
                quality_hints=None if all(h is None for h in hints) else tuple(hints),
            )
        )
        row += n
    rows = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, dataset.d))
    write_container(directory / "embeddings.cnan", rows, float_width=float_width)
    (directory / "manifest.json").write_text(render_manifest(dataset.d, records))


def read_dataset(directory: str | Path) -> Dataset:
    """Read a dataset directory, validating manifest rows against the container."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json in {directory}")
    d, records = parse_manifest(manifest_path.read_text())
    rows = read_container(directory / "embeddings.cnan")
    if rows.shape[0] and rows.shape[1] != d:
        raise SchemaError(
            f"manifest declares d = {d} but container rows have width {rows.shape[1]}"
        )
    templates = []
    for r in records:
        if r.stop > rows.shape[0]:
            raise SchemaError(
                f"template '{r.template_id}' references rows up to {r.stop} "
                f"but the container holds {rows.shape[0]}"
            )
        embeddings = []
        for i in range(r.start, r.stop):
            j = i - r.start
            embeddings.append(
                Embedding(
                    vector=rows[i],
                    media_id=r.media_ids[j],
                    quality_hint=None if r.quality_hints is None else r.quality_hints[j],
                )
            )
        templates.append(
            Template(
                template_id=r.template_id,
                subject_id=r.subject_id,
                distribution=r.distribution,
                embeddings=embeddings,
                split=r.split,
            )
        )
    dataset = Dataset(d=d, templates=templates)
    report = validate(dataset)
    if not report.ok:
        raise DatasetError(f"dataset failed validation:\n{report}")
    return dataset


# --------------------------------------------------------------------------
# Checkpoint: self-describing model (and optional trainer) state.
#
#   magic "CNCK" | version u32 | header_len u64
#   header: UTF-8 JSON declaring the architecture and a tensor directory
#           (name, shape, offset into the payload, in elements)
#   payload: all tensors concatenated as little-endian float64
#   footer: u64 FNV-1a of the payload bytes
# --------------------------------------------------------------------------

_CHECKPOINT_PREFIX = struct.Struct("<4sIQ")


def write_checkpoint(
    path: str | Path,
    params: ModelParams,
    state: dict[str, np.ndarray] | None = None,
    extra: dict | None = None,
) -> None:
    """Serialize model parameters plus optional trainer state tensors.

    `extra` rides along in the header for JSON-serializable scalars
    (step counters, rng state); it is returned verbatim by read_checkpoint.
    """
    config = params.config
    directory = []
    payload_parts: list[bytes] = []
    offset = 0

    def append(name: str, tensor: np.ndarray, kind: str) -> None:
        nonlocal offset
        arr = np.ascontiguousarray(np.asarray(tensor, dtype=np.float64))
        directory.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "kind": kind}
        )
        payload_parts.append(arr.astype("<f8").tobytes())
        offset += arr.size

    for name, tensor in params.tensors.items():
        append(name, tensor, "param")
    for name, tensor in (state or {}).items():
        append(name, tensor, "state")

    header = {
        "format_version": CHECKPOINT_VERSION,
        "d": config.d,
        "heads": config.heads,
        "hidden_widths": [4 * config.d, 2 * config.d],
        "blocks": list(config.blocks),
        "use_probe_transform": config.use_probe_transform,
        "temperatures": {"softmax": config.softmax_temperature},
        "tensors": directory,
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(payload_parts)
    blob = (
        _CHECKPOINT_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes))
        + header_bytes
        + payload
        + _CHECKSUM.pack(fnv1a64(payload))
    )
    Path(path).write_bytes(blob)


def read_checkpoint(
    path: str | Path,
) -> tuple[ModelParams, dict[str, np.ndarray], dict]:
    """Read a checkpoint. Returns (params, state tensors, extra header dict).

    The tensor directory must exactly match the architecture the header
    declares; a missing, surplus, or misshapen parameter is a schema error.
    """
    buf = Path(path).read_bytes()
    head = _read_exact(buf, 0, _CHECKPOINT_PREFIX.size, "checkpoint prefix")
    magic, version, header_len = _CHECKPOINT_PREFIX.unpack(head)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise VersionError(f"unsupported checkpoint version {version}")
    offset = _CHECKPOINT_PREFIX.size
    header_bytes = _read_exact(buf, offset, header_len, "checkpoint header")
    offset += header_len
    try:
        header = json.loads(header_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"checkpoint header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise SchemaError("checkpoint header must be a JSON object")
    declared_version = _require(header, "format_version", int, "header")
    if declared_version != version:
        raise SchemaError(
            f"header format_version {declared_version} disagrees with prefix {version}"
        )

    config = ModelConfig(
        d=_require(header, "d", int, "header"),
        heads=_require(header, "heads", int, "header"),
        blocks=tuple(_require(header, "blocks", list, "header")),
        use_probe_transform=_require(header, "use_probe_transform", bool, "header"),
        softmax_temperature=_require(
            _require(header, "temperatures", dict, "header"), "softmax", float, "temperatures"
        ),
    )
    widths = _require(header, "hidden_widths", list, "header")
    if widths != [4 * config.d, 2 * config.d]:
        raise SchemaError(f"hidden widths {widths} do not match d = {config.d}")

    directory = _require(header, "tensors", list, "header")
    payload = buf[offset : len(buf) - 8]
    (stored,) = _CHECKSUM.unpack(_read_exact(buf, len(buf) - 8, 8, "checksum"))
    if fnv1a64(payload) != stored:
        raise IntegrityError("payload checksum mismatch")
    n_doubles = len(payload) // 8
    if len(payload) != n_doubles * 8:
        raise IntegrityError("payload length is not a multiple of 8 bytes")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)

    tensors: dict[str, np.ndarray] = {}
    state: dict[str, np.ndarray] = {}
    for i, entry in enumerate(directory):
        where = f"tensors[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(f"{where} must be an object")
        name = _require(entry, "name", str, where)
        shape = tuple(_require(entry, "shape", list, where))
        start = _require(entry, "offset", int, where)
        kind = _require(entry, "kind", str, where)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if start < 0 or start + size > n_doubles:
            raise SchemaError(f"{where} '{name}' overruns the payload")
        arr = flat[start : start + size].reshape(shape).copy()
        target = tensors if kind == "param" else state
        if kind not in ("param", "state"):
            raise SchemaError(f"{where} has unknown kind '{kind}'")
        if name in target:
            raise SchemaError(f"duplicate tensor '{name}'")
        target[name] = arr

    reference = ModelParams.initialize(config, seed=0)
    expected = {name: t.shape for name, t in reference.tensors.items()}
    got = {name: t.shape for name, t in tensors.items()}
    if expected != got:
        missing = sorted(set(expected) - set(got))
        surplus = sorted(set(got) - set(expected))
        wrong = sorted(
            n for n in set(expected) & set(got) if expected[n] != got[n]
        )
        raise SchemaError(
            "tensor directory does not match the declared architecture: "
            f"missing {missing}, surplus {surplus}, misshapen {wrong}"
        )
    ordered = {name: tensors[name] for name in reference.tensors}
    extra = header.get("extra", {})
    if not isinstance(extra, dict):
        raise SchemaError("header extra must be a JSON object")
    return ModelParams(config=config, tensors=ordered), state, extra
