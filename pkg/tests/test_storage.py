"""Byte-format tests: containers, manifests, datasets, checkpoints.

The fixtures under tests/vectors/ were produced by tests/vectors/generate.py,
which packs every byte with the standard library alone. Reading them here
pins the on-disk grammar independently of the package's own writers.
"""

import json
import struct
from pathlib import Path

import numpy as np
import pytest

from ctxpool.errors import (
    DatasetError,
    FormatError,
    IntegrityError,
    ParameterError,
    SchemaError,
    VersionError,
)
from ctxpool.model import ModelConfig, ModelParams
from ctxpool.storage import (
    fnv1a64,
    parse_manifest,
    read_checkpoint,
    read_container,
    read_dataset,
    render_manifest,
    write_checkpoint,
    write_container,
    write_dataset,
)
from ctxpool.templates import Dataset, Embedding, Template

VECTORS = Path(__file__).parent / "vectors"

FIXTURE_ROWS = np.array([[1.5, -2.25, 0.003], [0.0, 1.0, -1.0]])


# Published FNV-1a 64 test vectors.
@pytest.mark.parametrize(
    "data, expected",
    [
        (b"", 0xCBF29CE484222325),
        (b"a", 0xAF63DC4C8601EC8C),
        (b"foobar", 0x85944171F73967E8),
    ],
)
def test_fnv1a64_known_vectors(data, expected):
    assert fnv1a64(data) == expected


class TestContainer:
    def test_round_trip_is_bit_identical(self, tmp_path):
        rng = np.random.default_rng(7)
        rows = rng.standard_normal((17, 5))
        path = tmp_path / "x.cnan"
        write_container(path, rows)
        back = read_container(path)
        assert back.dtype == np.float64
        assert np.array_equal(back, rows)
        assert back.tobytes() == rows.tobytes()

    def test_f32_round_trip_exact_for_representable_values(self, tmp_path):
        rows = np.array([[0.5, -3.0], [1.25, 1024.0]])
        path = tmp_path / "x.cnan"
        write_container(path, rows, float_width=4)
        assert np.array_equal(read_container(path), rows)

    def test_f32_rounds_like_float32(self, tmp_path):
        rows = np.array([[0.1, 1 / 3]])
        path = tmp_path / "x.cnan"
        write_container(path, rows, float_width=4)
        assert np.array_equal(read_container(path), rows.astype(np.float32).astype(np.float64))

    def test_zero_row_container(self, tmp_path):
        path = tmp_path / "x.cnan"
        write_container(path, np.zeros((0, 3)))
        assert read_container(path).shape == (0, 3)

    def test_fixture_f64_reads_exactly(self):
        assert np.array_equal(read_container(VECTORS / "tiny_f64.cnan"), FIXTURE_ROWS)

    def test_fixture_f32_reads_exactly(self):
        expected = FIXTURE_ROWS.astype(np.float32).astype(np.float64)
        assert np.array_equal(read_container(VECTORS / "tiny_f32.cnan"), expected)

    def test_writer_emits_fixture_bytes(self, tmp_path):
        """Writer output equals the independently packed fixture, byte for byte."""
        for width, name in ((8, "tiny_f64.cnan"), (4, "tiny_f32.cnan")):
            path = tmp_path / name
            write_container(path, FIXTURE_ROWS, float_width=width)
            assert path.read_bytes() == (VECTORS / name).read_bytes()

    def test_big_endian_source_array_writes_same_bytes(self, tmp_path):
        """Host/source byte order never leaks into the file."""
        swapped = FIXTURE_ROWS.astype(">f8")
        path = tmp_path / "be.cnan"
        write_container(path, swapped)
        assert path.read_bytes() == (VECTORS / "tiny_f64.cnan").read_bytes()

    def test_flipped_payload_byte_is_integrity_error(self, tmp_path):
        blob = bytearray((VECTORS / "tiny_f64.cnan").read_bytes())
        blob[21 + 3] ^= 0x40
        path = tmp_path / "bad.cnan"
        path.write_bytes(bytes(blob))
        with pytest.raises(IntegrityError):
            read_container(path)

    def test_truncation_is_integrity_error(self, tmp_path):
        blob = (VECTORS / "tiny_f64.cnan").read_bytes()
        path = tmp_path / "bad.cnan"
        path.write_bytes(blob[:-12])
        with pytest.raises(IntegrityError):
            read_container(path)

    def test_trailing_garbage_is_integrity_error(self, tmp_path):
        blob = (VECTORS / "tiny_f64.cnan").read_bytes()
        path = tmp_path / "bad.cnan"
        path.write_bytes(blob + b"\x00")
        with pytest.raises(IntegrityError):
            read_container(path)

    def _patched_header(self, tmp_path, **fields):
        blob = (VECTORS / "tiny_f64.cnan").read_bytes()
        magic, version, d, count, width = struct.unpack_from("<4sIIQB", blob, 0)
        values = {"magic": magic, "version": version, "d": d, "count": count, "width": width}
        values.update(fields)
        head = struct.pack(
            "<4sIIQB",
            values["magic"], values["version"], values["d"],
            values["count"], values["width"],
        )
        path = tmp_path / "patched.cnan"
        path.write_bytes(head + blob[21:])
        return path

    def test_bad_magic_is_format_error(self, tmp_path):
        with pytest.raises(FormatError) as err:
            read_container(self._patched_header(tmp_path, magic=b"NOPE"))
        assert not isinstance(err.value, (IntegrityError, VersionError, SchemaError))

    def test_unknown_version_is_version_error(self, tmp_path):
        with pytest.raises(VersionError):
            read_container(self._patched_header(tmp_path, version=99))

    def test_zero_dimension_is_schema_error(self, tmp_path):
        with pytest.raises(SchemaError):
            read_container(self._patched_header(tmp_path, d=0))

    def test_unknown_float_width_is_schema_error(self, tmp_path):
        with pytest.raises(SchemaError):
            read_container(self._patched_header(tmp_path, width=5))

    def test_inflated_count_is_integrity_error(self, tmp_path):
        with pytest.raises(IntegrityError):
            read_container(self._patched_header(tmp_path, count=10_000))

    def test_writer_rejects_bad_inputs(self, tmp_path):
        path = tmp_path / "x.cnan"
        with pytest.raises(ParameterError):
            write_container(path, np.zeros((2, 2)), float_width=2)
        with pytest.raises(ParameterError):
            write_container(path, np.zeros(4))
        with pytest.raises(ParameterError):
            write_container(path, np.array([[np.inf, 0.0]]))


def _toy_dataset() -> Dataset:
    rng = np.random.default_rng(11)

    def emb(i, hint=None):
        return Embedding(vector=rng.standard_normal(4), media_id=f"m{i}", quality_hint=hint)

    templates = [
        Template("g-a", "alice", "gallery", [emb(0), emb(1)], split="train"),
        Template("p-a", "alice", "probe", [emb(2, 1.0), emb(3, 0.0), emb(4, 1.0)], split="train"),
        Template("g-b", "bob", "gallery", [emb(5)], split="val"),
        Template("p-b", "bob", "probe", [emb(6, 0.5)], split="val"),
    ]
    return Dataset(d=4, templates=templates)


class TestDataset:
    def test_round_trip_preserves_everything(self, tmp_path):
        ds = _toy_dataset()
        write_dataset(tmp_path / "ds", ds)
        back = read_dataset(tmp_path / "ds")
        assert back.d == ds.d
        assert [t.template_id for t in back.templates] == [t.template_id for t in ds.templates]
        for orig, got in zip(ds.templates, back.templates):
            assert got.subject_id == orig.subject_id
            assert got.distribution == orig.distribution
            assert got.split == orig.split
            assert np.array_equal(got.matrix(), orig.matrix())
            assert got.matrix().tobytes() == orig.matrix().tobytes()
            assert [e.media_id for e in got.embeddings] == [e.media_id for e in orig.embeddings]
            assert got.quality_hints() == orig.quality_hints()

    def test_all_none_hints_stored_as_null(self, tmp_path):
        ds = _toy_dataset()
        write_dataset(tmp_path / "ds", ds)
        doc = json.loads((tmp_path / "ds" / "manifest.json").read_text())
        by_id = {e["template_id"]: e for e in doc["templates"]}
        assert by_id["g-a"]["quality_hints"] is None
        assert by_id["p-a"]["quality_hints"] == [1.0, 0.0, 1.0]

    def test_duplicate_template_id_rejected_at_parse(self):
        ds = _toy_dataset()
        text = render_manifest(4, [])
        doc = json.loads(text)
        entry = {
            "template_id": "dup", "subject_id": "s", "distribution": "probe",
            "split": "train", "start": 0, "stop": 1, "media_ids": ["m"],
            "quality_hints": None,
        }
        doc["templates"] = [entry, dict(entry)]
        with pytest.raises(SchemaError, match="duplicate template_id"):
            parse_manifest(json.dumps(doc))
        del ds

    @pytest.mark.parametrize(
        "mutate, match",
        [
            (lambda e: e.update(split="holdout"), "split"),
            (lambda e: e.update(distribution="mixed"), "probe/gallery"),
            (lambda e: e.update(stop=0), "row range"),
            (lambda e: e.update(media_ids=["a", "b"]), "media_ids"),
            (lambda e: e.update(quality_hints=[0.5]), "quality_hints"),
            (lambda e: e.pop("subject_id"), "subject_id"),
        ],
    )
    def test_manifest_field_nonsense_is_schema_error(self, mutate, match):
        entry = {
            "template_id": "t", "subject_id": "s", "distribution": "probe",
            "split": "train", "start": 0, "stop": 3, "media_ids": ["a", "b", "c"],
            "quality_hints": None,
        }
        mutate(entry)
        doc = {"format_version": 1, "d": 4, "templates": [entry]}
        with pytest.raises(SchemaError, match=match):
            parse_manifest(json.dumps(doc))

    def test_manifest_version_bump_is_version_error(self):
        doc = {"format_version": 2, "d": 4, "templates": []}
        with pytest.raises(VersionError):
            parse_manifest(json.dumps(doc))

    def test_manifest_invalid_json_is_schema_error(self):
        with pytest.raises(SchemaError):
            parse_manifest("{not json")

    def test_row_range_beyond_container_is_schema_error(self, tmp_path):
        ds = _toy_dataset()
        write_dataset(tmp_path / "ds", ds)
        manifest = tmp_path / "ds" / "manifest.json"
        doc = json.loads(manifest.read_text())
        doc["templates"][-1]["stop"] += 5
        doc["templates"][-1]["media_ids"] += ["x"] * 5
        doc["templates"][-1]["quality_hints"] = None
        manifest.write_text(json.dumps(doc))
        with pytest.raises(SchemaError, match="references rows"):
            read_dataset(tmp_path / "ds")

    def test_validation_failure_is_dataset_error(self, tmp_path):
        ds = _toy_dataset()
        ds.templates[0].embeddings[0] = Embedding(vector=np.zeros(4), media_id="z")
        ds.templates[0]._matrix = None
        write_dataset(tmp_path / "ds", ds)
        with pytest.raises(DatasetError, match="validation"):
            read_dataset(tmp_path / "ds")

    def test_missing_manifest_is_format_error(self, tmp_path):
        (tmp_path / "ds").mkdir()
        with pytest.raises(FormatError, match="manifest"):
            read_dataset(tmp_path / "ds")


def _full_config(d=4, heads=2) -> ModelConfig:
    return ModelConfig(d=d, heads=heads)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        params = ModelParams.initialize(_full_config(), seed=3)
        state = {
            "opt.m.mlp.w1": np.random.default_rng(0).standard_normal((32, 16)),
            "opt.step": np.array(12.0),
        }
        extra = {"epoch": 2, "rng": [1, 2, 3], "note": "x"}
        path = tmp_path / "m.ckpt"
        write_checkpoint(path, params, state=state, extra=extra)
        back, back_state, back_extra = read_checkpoint(path)
        assert back.config == params.config
        assert list(back.tensors) == list(params.tensors)
        for name in params.tensors:
            assert back.tensors[name].tobytes() == params.tensors[name].tobytes()
        assert set(back_state) == set(state)
        for name in state:
            assert back_state[name].tobytes() == np.asarray(state[name], dtype=np.float64).tobytes()
        assert back_extra == extra

    def test_ablated_architecture_round_trips(self, tmp_path):
        config = ModelConfig(d=6, blocks=("mean", "var"), use_probe_transform=False)
        params = ModelParams.initialize(config, seed=5)
        path = tmp_path / "m.ckpt"
        write_checkpoint(path, params)
        back, state, extra = read_checkpoint(path)
        assert back.config == config
        assert list(back.tensors) == list(params.tensors)
        assert state == {} and extra == {}

    def test_fixture_reads_exactly(self):
        params, state, extra = read_checkpoint(VECTORS / "tiny.ckpt")
        assert params.config == ModelConfig(d=2, heads=1, softmax_temperature=0.1)
        names = list(params.tensors)
        assert names[0] == "attn.wq" and names[-1] == "probe_transform.b"
        for j, (name, tensor) in enumerate(params.tensors.items()):
            expected = j + np.arange(tensor.size) / 16
            assert np.array_equal(tensor.ravel(), expected), name
        assert set(state) == {"opt.step"}
        assert state["opt.step"].shape == ()
        assert state["opt.step"] == 14.0
        assert extra == {"epoch": 3, "note": "fixture"}

    def test_flipped_payload_byte_is_integrity_error(self, tmp_path):
        blob = bytearray((VECTORS / "tiny.ckpt").read_bytes())
        blob[-20] ^= 0x01
        path = tmp_path / "bad.ckpt"
        path.write_bytes(bytes(blob))
        with pytest.raises(IntegrityError):
            read_checkpoint(path)

    def test_bad_magic_is_format_error(self, tmp_path):
        blob = bytearray((VECTORS / "tiny.ckpt").read_bytes())
        blob[:4] = b"WHAT"
        path = tmp_path / "bad.ckpt"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            read_checkpoint(path)

    def test_version_bump_is_version_error(self, tmp_path):
        blob = bytearray((VECTORS / "tiny.ckpt").read_bytes())
        struct.pack_into("<I", blob, 4, 9)
        path = tmp_path / "bad.ckpt"
        path.write_bytes(bytes(blob))
        with pytest.raises(VersionError):
            read_checkpoint(path)

    @staticmethod
    def _with_header(tmp_path, mutate):
        blob = (VECTORS / "tiny.ckpt").read_bytes()
        magic, version, hlen = struct.unpack_from("<4sIQ", blob, 0)
        header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
        mutate(header)
        hb = json.dumps(header, sort_keys=True).encode("utf-8")
        path = tmp_path / "patched.ckpt"
        path.write_bytes(struct.pack("<4sIQ", magic, version, len(hb)) + hb + blob[16 + hlen :])
        return path

    def test_surplus_tensor_is_schema_error(self, tmp_path):
        path = self._with_header(
            tmp_path,
            lambda h: h["tensors"].append(
                {"name": "bogus", "shape": [1], "offset": 0, "kind": "param"}
            ),
        )
        with pytest.raises(SchemaError, match="surplus"):
            read_checkpoint(path)

    def test_missing_tensor_is_schema_error(self, tmp_path):
        path = self._with_header(tmp_path, lambda h: h["tensors"].pop(0))
        with pytest.raises(SchemaError, match="missing"):
            read_checkpoint(path)

    def test_misshapen_tensor_is_schema_error(self, tmp_path):
        def reshape(h):
            entry = next(e for e in h["tensors"] if e["name"] == "mlp.b3")
            entry["shape"] = [1, 2]

        with pytest.raises(SchemaError, match="misshapen"):
            read_checkpoint(self._with_header(tmp_path, reshape))

    def test_directory_overrun_is_schema_error(self, tmp_path):
        def overrun(h):
            h["tensors"][-1]["offset"] = 10_000

        with pytest.raises(SchemaError, match="overruns"):
            read_checkpoint(self._with_header(tmp_path, overrun))

    def test_wrong_hidden_widths_is_schema_error(self, tmp_path):
        path = self._with_header(tmp_path, lambda h: h.update(hidden_widths=[7, 3]))
        with pytest.raises(SchemaError, match="hidden widths"):
            read_checkpoint(path)
