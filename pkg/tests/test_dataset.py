import json

import numpy as np
import pytest

from teamrules.dataset import (DatasetManifest, LossSpec, StudyDataset,
                               decision_loss, dumps_dataset, joint_vector,
                               loads_dataset, normalize_dataset,
                               optimal_decision, team_loss, team_loss_total)
from teamrules.errors import (DatasetFormatError, ParseError, SchemaError,
                              ValidationError)

from conftest import make_dataset, make_example


def manifest_line(**overrides):
    doc = {"embedding_dim": 2, "ai_feature_dim": 1, "label_vocabulary": ["a", "b"],
           "loss": "zero_one", "normalized": False}
    doc.update(overrides)
    return json.dumps(doc)


def example_line(i=0, **overrides):
    doc = {"id": f"e{i}", "embedding": [0.1, 0.2], "ai_features": [0.3],
           "label": "a", "ai_decision": "b", "human_prediction": "a",
           "prior_reliance": 0, "text": None, "metadata": {}, "split": "train"}
    doc.update(overrides)
    return json.dumps(doc)


class TestLossAndDecisions:
    def test_zero_one_loss(self):
        loss = LossSpec("zero_one")
        assert loss("a", "a") == 0.0
        assert loss("a", "b") == 1.0

    def test_decision_loss_routes_to_the_right_prediction(self):
        loss = LossSpec()
        ex = make_example(0, [0.0], label="a", human="a", ai="b")
        assert decision_loss(ex, 0, loss) == 0.0
        assert decision_loss(ex, 1, loss) == 1.0
        with pytest.raises(ValidationError):
            decision_loss(ex, 2, loss)

    def test_optimal_decision_ties_go_to_zero(self):
        loss = LossSpec()
        # both wrong and both right are ties: prefer the human's own answer
        assert optimal_decision(make_example(0, [0.0], label="a", human="b", ai="c"), loss) == 0
        assert optimal_decision(make_example(0, [0.0], label="a", human="a", ai="a"), loss) == 0
        assert optimal_decision(make_example(0, [0.0], label="a", human="b", ai="a"), loss) == 1
        assert optimal_decision(make_example(0, [0.0], label="a", human="a", ai="b"), loss) == 0

    def test_team_loss_is_the_mean_decision_loss(self):
        ds = make_dataset([
            make_example(0, [0.0], label="a", human="a", ai="b"),
            make_example(1, [1.0], label="a", human="b", ai="a"),
            make_example(2, [2.0], label="a", human="b", ai="c"),
            make_example(3, [3.0], label="a", human="a", ai="a"),
        ])
        # decisions (0, 0, 1, 1) incur losses (0, 1, 1, 0)
        assert team_loss_total(ds, [0, 0, 1, 1]) == 2.0
        assert team_loss(ds, [0, 0, 1, 1]) == pytest.approx(0.5)

    def test_team_loss_refuses_empty_dataset(self):
        ds = make_dataset([], embedding_dim=1, ai_feature_dim=0)
        with pytest.raises(ValidationError):
            team_loss(ds, [])


class TestJointSpace:
    def test_joint_vector_concatenates_embedding_then_ai_features(self):
        ex = make_example(0, [1.0, 2.0], ai_features=[3.0])
        assert joint_vector(ex).tolist() == [1.0, 2.0, 3.0]

    def test_joint_matrix_shape(self):
        ds = make_dataset([make_example(i, [float(i), 0.0], ai_features=[1.0])
                           for i in range(4)])
        assert ds.joint_matrix().shape == (4, 3)
        assert ds.manifest.joint_dim == 3


class TestNormalization:
    def test_each_vector_scaled_by_its_own_max_entry(self):
        ds = make_dataset([make_example(0, [2.0, -4.0], ai_features=[3.0, 1.0])])
        out = normalize_dataset(ds)
        assert out.examples[0].embedding.tolist() == [0.5, -1.0]
        assert out.examples[0].ai_features.tolist() == [1.0, 1.0 / 3.0]
        # input untouched
        assert ds.examples[0].embedding.tolist() == [2.0, -4.0]
        assert out.manifest.normalized is True

    def test_zero_vector_passes_through(self):
        ds = make_dataset([make_example(0, [0.0, 0.0], ai_features=[0.0])])
        out = normalize_dataset(ds)
        assert out.examples[0].embedding.tolist() == [0.0, 0.0]
        assert out.examples[0].ai_features.tolist() == [0.0]

    def test_refuses_to_normalize_twice(self):
        ds = make_dataset([make_example(0, [1.0, 2.0])])
        once = normalize_dataset(ds)
        with pytest.raises(ValidationError):
            normalize_dataset(once)

    def test_all_entries_land_in_unit_box(self):
        rng = np.random.default_rng(7)
        ds = make_dataset([make_example(i, rng.normal(size=4) * 10,
                                        ai_features=rng.normal(size=2))
                           for i in range(50)])
        out = normalize_dataset(ds)
        for ex in out.examples:
            assert np.max(np.abs(ex.embedding)) == pytest.approx(1.0)
            assert np.all(np.abs(ex.ai_features) <= 1.0 + 1e-12)


class TestParsing:
    def test_parses_manifest_and_examples(self):
        content = "\n".join([manifest_line(), example_line(0), example_line(1)]) + "\n"
        ds = loads_dataset(content)
        assert ds.manifest.embedding_dim == 2
        assert ds.manifest.label_vocabulary == ("a", "b")
        assert len(ds) == 2
        assert ds.examples[0].id == "e0"
        assert ds.examples[1].embedding.tolist() == [0.1, 0.2]

    def test_blank_lines_are_skipped(self):
        content = manifest_line() + "\n\n" + example_line(0) + "\n\n"
        assert len(loads_dataset(content)) == 1

    def test_invalid_json_cites_its_line_number(self):
        content = "\n".join([manifest_line(), example_line(0), "{not json"])
        with pytest.raises(ParseError) as err:
            loads_dataset(content)
        assert err.value.line == 3
        assert "line 3" in str(err.value)

    def test_schema_violation_cites_its_line_number(self):
        bad = example_line(1, embedding=[0.1])  # wrong dimension
        content = "\n".join([manifest_line(), example_line(0), bad])
        with pytest.raises(SchemaError) as err:
            loads_dataset(content)
        assert err.value.line == 3
        assert "embedding" in str(err.value)

    def test_parse_and_schema_errors_are_dataset_format_errors(self):
        assert issubclass(ParseError, DatasetFormatError)
        assert issubclass(SchemaError, DatasetFormatError)
        assert issubclass(DatasetFormatError, ValidationError)

    def test_duplicate_ids_rejected(self):
        content = "\n".join([manifest_line(), example_line(0), example_line(0)])
        with pytest.raises(SchemaError) as err:
            loads_dataset(content)
        assert "duplicate" in str(err.value)

    def test_empty_file_rejected(self):
        with pytest.raises(SchemaError):
            loads_dataset("")

    @pytest.mark.parametrize("override", [
        {"label": "z"},
        {"ai_decision": "z"},
        {"human_prediction": "z"},
        {"prior_reliance": 2},
        {"prior_reliance": True},
        {"split": "validation"},
        {"embedding": [0.1, float("nan")]},
        {"embedding": ["0.1", 0.2]},
        {"metadata": {"k": 5}},
        {"id": ""},
    ])
    def test_bad_example_fields_rejected(self, override):
        content = "\n".join([manifest_line(), example_line(0, **override)])
        with pytest.raises(SchemaError):
            loads_dataset(content)

    @pytest.mark.parametrize("override", [
        {"embedding_dim": 0},
        {"ai_feature_dim": -1},
        {"label_vocabulary": []},
        {"label_vocabulary": ["a", "a"]},
        {"loss": "squared"},
        {"normalized": "no"},
    ])
    def test_bad_manifest_rejected(self, override):
        with pytest.raises(SchemaError) as err:
            loads_dataset(manifest_line(**override))
        assert err.value.line == 1

    def test_missing_example_field_rejected(self):
        doc = json.loads(example_line(0))
        del doc["split"]
        content = "\n".join([manifest_line(), json.dumps(doc)])
        with pytest.raises(SchemaError) as err:
            loads_dataset(content)
        assert "split" in str(err.value)


class TestRoundTrip:
    def test_serialization_round_trips_bit_exact(self):
        rng = np.random.default_rng(123)
        examples = []
        for i in range(20):
            examples.append(make_example(
                i, rng.normal(size=3), ai_features=rng.normal(size=2),
                label="b", ai="a", human="b", prior=int(rng.integers(2)),
                text=None if i % 3 else f"text {i}",
                metadata={"topic": str(i % 4)},
                split="test" if i % 5 == 0 else "train",
            ))
        ds = make_dataset(examples)
        text = dumps_dataset(ds)
        back = loads_dataset(text)
        assert back.manifest == ds.manifest
        assert len(back) == len(ds)
        for orig, parsed in zip(ds.examples, back.examples):
            # floats survive the repr round trip exactly
            assert parsed.embedding.tolist() == orig.embedding.tolist()
            assert parsed.ai_features.tolist() == orig.ai_features.tolist()
            assert parsed.to_json() == orig.to_json()
        assert dumps_dataset(back) == text

    def test_save_and_load(self, tmp_path):
        from teamrules.dataset import load_dataset, save_dataset
        ds = make_dataset([make_example(0, [0.25, -0.75], ai_features=[0.125])])
        path = tmp_path / "data.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.examples[0].embedding.tolist() == [0.25, -0.75]
