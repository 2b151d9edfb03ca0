"""Data model checks: construction rules, full-report validation,
deterministic subsampling."""

import numpy as np
import pytest

from ctxpool.errors import DimensionError, NonFiniteError, ParameterError
from ctxpool.templates import (
    Dataset,
    Distribution,
    Embedding,
    Template,
    subsample_template,
    validate,
)


def emb(vec, media_id="m", hint=None):
    return Embedding(vector=np.asarray(vec, dtype=float), media_id=media_id, quality_hint=hint)


def template(tid, subject, dist, vectors, split="train"):
    return Template(
        template_id=tid,
        subject_id=subject,
        distribution=dist,
        embeddings=[emb(v, media_id=f"{tid}/{i}") for i, v in enumerate(vectors)],
        split=split,
    )


def test_embedding_rejects_nonfinite_and_matrix_shapes():
    with pytest.raises(NonFiniteError):
        emb([1.0, np.nan])
    with pytest.raises(DimensionError):
        Embedding(vector=np.zeros((2, 2)), media_id="m")


def test_template_accepts_string_distribution():
    t = template("t1", "s1", "probe", [[1.0, 0.0]])
    assert t.distribution is Distribution.PROBE
    with pytest.raises(ValueError):
        template("t2", "s1", "mugshot", [[1.0, 0.0]])


def test_template_rejects_unknown_split():
    with pytest.raises(ParameterError):
        template("t1", "s1", "probe", [[1.0, 0.0]], split="holdout")


def test_matrix_stacks_and_empty_template_has_none():
    t = template("t1", "s1", "gallery", [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(t.matrix(), [[1.0, 2.0], [3.0, 4.0]])
    hollow = Template("t2", "s1", "gallery", [])
    with pytest.raises(ParameterError):
        hollow.matrix()


def test_validate_clean_dataset():
    ds = Dataset(
        d=2,
        templates=[
            template("g1", "s1", "gallery", [[1.0, 0.0], [0.0, 1.0]]),
            template("p1", "s1", "probe", [[0.5, 0.5]]),
        ],
    )
    report = validate(ds)
    assert report.ok
    assert report.n_templates == 2
    assert report.n_embeddings == 3
    assert report.n_subjects == 1
    assert str(report).startswith("valid")


def test_validate_reports_every_violation():
    ds = Dataset(
        d=2,
        templates=[
            template("dup", "s1", "gallery", [[1.0, 0.0]]),
            template("dup", "s1", "gallery", [[1.0, 0.0]]),
            Template("hollow", "s2", "gallery", []),
            template("wrongd", "s3", "gallery", [[1.0, 0.0, 0.0]]),
            template("zero", "s4", "gallery", [[0.0, 0.0]]),
            Template(
                "badhint",
                "s5",
                "gallery",
                [emb([1.0, 0.0], hint=1.5)],
            ),
            # probe in val with no gallery in val for that subject
            template("valprobe", "s6", "probe", [[1.0, 0.0]], split="val"),
        ],
    )
    report = validate(ds)
    text = str(report)
    assert not report.ok
    assert "duplicate template id 'dup'" in text
    assert "'hollow' is empty" in text
    assert "dimension 3" in text
    assert "zero vector" in text
    assert "quality hint 1.5" in text
    assert "no gallery template" in text
    assert len(report.violations) == 6


def test_validate_mixed_dimension_example():
    ds = Dataset(
        d=512,
        templates=[
            Template(
                "t",
                "s",
                "gallery",
                [
                    Embedding(np.ones(512), "a"),
                    Embedding(np.ones(256), "b"),
                ],
            )
        ],
    )
    assert any("dimension 256" in v for v in validate(ds).violations)


def test_subsample_is_deterministic_and_validates_k():
    t = template("t", "s", "gallery", [[float(i), 0.0] for i in range(10)])
    a = subsample_template(t, 4, seed=99)
    b = subsample_template(t, 4, seed=99)
    assert [e.media_id for e in a.embeddings] == [e.media_id for e in b.embeddings]
    assert len(a) == 4
    assert a.template_id == t.template_id
    assert a.distribution is t.distribution
    # original relative order preserved
    order = [int(e.media_id.split("/")[1]) for e in a.embeddings]
    assert order == sorted(order)
    with pytest.raises(ParameterError):
        subsample_template(t, 0, seed=1)
    with pytest.raises(ParameterError):
        subsample_template(t, 11, seed=1)


def test_dataset_filters():
    ds = Dataset(
        d=2,
        templates=[
            template("g1", "s1", "gallery", [[1.0, 0.0]]),
            template("p1", "s1", "probe", [[1.0, 0.0]], split="val"),
            template("g2", "s2", "gallery", [[1.0, 0.0]], split="val"),
        ],
    )
    assert [t.template_id for t in ds.templates_for(distribution="gallery")] == ["g1", "g2"]
    assert [t.template_id for t in ds.templates_for(split="val", subject_id="s1")] == ["p1"]
    assert ds.subjects() == ["s1", "s2"]
    assert ds.by_id("g2").subject_id == "s2"
    with pytest.raises(ParameterError):
        ds.by_id("nope")
