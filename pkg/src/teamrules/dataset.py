"""Study dataset model and line-delimited JSON serialization.

A study dataset records, per task example, the ground-truth label, the AI's
decision, the human's own prediction, and the human's prior reliance choice
(0 = go with their own prediction, 1 = go with the AI). The first line of a
dataset file is a manifest; every following line is one example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

VALID_SPLITS = ("train", "test")


@dataclass(frozen=True)
class LossSpec:
    """Tagged task loss. Only the zero-one loss is built in."""

    kind: str = "zero_one"

    def __call__(self, label: str, prediction: str) -> float:
        if self.kind != "zero_one":
            raise ValidationError(f"unsupported loss kind: {self.kind!r}")
        return 0.0 if label == prediction else 1.0


@dataclass(frozen=True)
class DatasetManifest:
    embedding_dim: int
    ai_feature_dim: int
    label_vocabulary: tuple[str, ...]
    loss: LossSpec = LossSpec()
    normalized: bool = False

    @property
    def joint_dim(self) -> int:
        return self.embedding_dim + self.ai_feature_dim

    def to_json(self) -> dict:
        return {
            "embedding_dim": self.embedding_dim,
            "ai_feature_dim": self.ai_feature_dim,
            "label_vocabulary": list(self.label_vocabulary),
            "loss": self.loss.kind,
            "normalized": self.normalized,
        }


@dataclass
class TaskExample:
    """One recorded task instance.

    ``embedding`` has manifest.embedding_dim entries, ``ai_features``
    manifest.ai_feature_dim. ``text`` is None for examples with no natural
    language surface. ``metadata`` is a flat string-to-string map.
    """

    id: str
    embedding: np.ndarray
    ai_features: np.ndarray
    label: str
    ai_decision: str
    human_prediction: str
    prior_reliance: int
    text: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)
    split: str = "train"

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "embedding": [float(x) for x in self.embedding],
            "ai_features": [float(x) for x in self.ai_features],
            "label": self.label,
            "ai_decision": self.ai_decision,
            "human_prediction": self.human_prediction,
            "prior_reliance": self.prior_reliance,
            "text": self.text,
            "metadata": dict(self.metadata),
            "split": self.split,
        }


@dataclass
class StudyDataset:
    manifest: DatasetManifest
    examples: list[TaskExample]

    def __len__(self) -> int:
        return len(self.examples)

    def split_examples(self, split: str) -> list[TaskExample]:
        return [ex for ex in self.examples if ex.split == split]

    def joint_matrix(self) -> np.ndarray:
        """All joint vectors stacked, shape (n, embedding_dim + ai_feature_dim)."""
        if not self.examples:
            return np.zeros((0, self.manifest.joint_dim))
        return np.stack([joint_vector(ex) for ex in self.examples])


def joint_vector(example: TaskExample) -> np.ndarray:
    """Embedding and AI feature vector concatenated, the space regions live in."""
    return np.concatenate([
        np.asarray(example.embedding, dtype=float),
        np.asarray(example.ai_features, dtype=float),
    ])


def decision_loss(example: TaskExample, decision: int, loss: LossSpec) -> float:
    """Task loss incurred when the reliance decision is ``decision``.

    Decision 0 scores the human's own prediction, decision 1 the AI's.
    """
    if decision == 0:
        return loss(example.label, example.human_prediction)
    if decision == 1:
        return loss(example.label, example.ai_decision)
    raise ValidationError(f"reliance decision must be 0 or 1, got {decision!r}")


def optimal_decision(example: TaskExample, loss: LossSpec) -> int:
    """The per-example reliance decision with strictly lower loss; ties go to 0."""
    return int(decision_loss(example, 0, loss) > decision_loss(example, 1, loss))


def team_loss_total(dataset: StudyDataset, decisions) -> float:
    """Sum of decision losses under per-example decisions (same order)."""
    loss = dataset.manifest.loss
    return float(sum(
        decision_loss(ex, int(r), loss) for ex, r in zip(dataset.examples, decisions)
    ))


def team_loss(dataset: StudyDataset, decisions) -> float:
    """Mean decision loss over the dataset. Errors on an empty dataset."""
    if not dataset.examples:
        raise ValidationError("team_loss is undefined on an empty dataset")
    return team_loss_total(dataset, decisions) / len(dataset.examples)


def _linf_normalize(vector: np.ndarray) -> np.ndarray:
    norm = np.max(np.abs(vector)) if vector.size else 0.0
    if norm == 0.0:
        return vector.copy()
    return vector / norm


def normalize_vector(vector) -> np.ndarray:
    """The per-vector max-abs scaling normalize_dataset applies, for callers
    that receive raw vectors and must match a normalized dataset's space."""
    return _linf_normalize(np.asarray(vector, dtype=float))


def normalize_dataset(dataset: StudyDataset) -> StudyDataset:
    """Scale every embedding and AI feature vector by its own max-norm.

    Returns a new dataset; the input is left untouched. Refuses to run twice:
    the manifest records normalization so it cannot be applied again.
    """
    if dataset.manifest.normalized:
        raise ValidationError("dataset is already normalized")
    examples = [
        replace(
            ex,
            embedding=_linf_normalize(np.asarray(ex.embedding, dtype=float)),
            ai_features=_linf_normalize(np.asarray(ex.ai_features, dtype=float)),
            metadata=dict(ex.metadata),
        )
        for ex in dataset.examples
    ]
    manifest = replace(dataset.manifest, normalized=True)
    return StudyDataset(manifest=manifest, examples=examples)


def _require(condition: bool, message: str, line: int) -> None:
    if not condition:
        raise SchemaError(message, line=line)


def _parse_manifest(doc: dict, line: int) -> DatasetManifest:
    _require(isinstance(doc, dict), "manifest must be a JSON object", line)
    for key in ("embedding_dim", "ai_feature_dim", "label_vocabulary", "loss", "normalized"):
        _require(key in doc, f"manifest missing {key!r}", line)
    _require(isinstance(doc["embedding_dim"], int) and doc["embedding_dim"] >= 1,
             "embedding_dim must be a positive integer", line)
    _require(isinstance(doc["ai_feature_dim"], int) and doc["ai_feature_dim"] >= 0,
             "ai_feature_dim must be a non-negative integer", line)
    vocab = doc["label_vocabulary"]
    _require(isinstance(vocab, list) and vocab and all(isinstance(v, str) for v in vocab),
             "label_vocabulary must be a non-empty list of strings", line)
    _require(len(set(vocab)) == len(vocab), "label_vocabulary has duplicates", line)
    _require(doc["loss"] == "zero_one", f"unsupported loss {doc['loss']!r}", line)
    _require(isinstance(doc["normalized"], bool), "normalized must be a boolean", line)
    return DatasetManifest(
        embedding_dim=doc["embedding_dim"],
        ai_feature_dim=doc["ai_feature_dim"],
        label_vocabulary=tuple(vocab),
        loss=LossSpec(doc["loss"]),
        normalized=doc["normalized"],
    )


def _check_numbers(values, name: str, dim: int, line: int) -> np.ndarray:
    _require(isinstance(values, list), f"{name} must be a list", line)
    _require(len(values) == dim, f"{name} has {len(values)} entries, expected {dim}", line)
    _require(all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values),
             f"{name} must contain only numbers", line)
    arr = np.asarray(values, dtype=float)
    _require(bool(np.all(np.isfinite(arr))), f"{name} must be finite", line)
    return arr


def _parse_example(doc: dict, manifest: DatasetManifest, line: int) -> TaskExample:
    _require(isinstance(doc, dict), "example must be a JSON object", line)
    for key in ("id", "embedding", "ai_features", "label", "ai_decision",
                "human_prediction", "prior_reliance", "text", "metadata", "split"):
        _require(key in doc, f"example missing {key!r}", line)
    _require(isinstance(doc["id"], str) and doc["id"] != "", "id must be a non-empty string", line)
    embedding = _check_numbers(doc["embedding"], "embedding", manifest.embedding_dim, line)
    ai_features = _check_numbers(doc["ai_features"], "ai_features", manifest.ai_feature_dim, line)
    vocab = set(manifest.label_vocabulary)
    for key in ("label", "ai_decision", "human_prediction"):
        _require(doc[key] in vocab, f"{key} {doc[key]!r} not in label vocabulary", line)
    _require(doc["prior_reliance"] in (0, 1) and not isinstance(doc["prior_reliance"], bool),
             "prior_reliance must be 0 or 1", line)
    _require(doc["text"] is None or isinstance(doc["text"], str), "text must be a string or null", line)
    metadata = doc["metadata"]
    _require(isinstance(metadata, dict) and all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()),
        "metadata must map strings to strings", line)
    _require(doc["split"] in VALID_SPLITS, f"split must be one of {VALID_SPLITS}", line)
    return TaskExample(
        id=doc["id"],
        embedding=embedding,
        ai_features=ai_features,
        label=doc["label"],
        ai_decision=doc["ai_decision"],
        human_prediction=doc["human_prediction"],
        prior_reliance=int(doc["prior_reliance"]),
        text=doc["text"],
        metadata=dict(metadata),
        split=doc["split"],
    )


def loads_dataset(content: str) -> StudyDataset:
    """Parse a dataset from the line-delimited JSON text format."""
    lines = content.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaError("empty dataset file: expected a manifest on line 1", line=1)
    manifest = None
    examples: list[TaskExample] = []
    seen_ids: set[str] = set()
    for number, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as err:
            raise ParseError(f"invalid JSON ({err.msg})", line=number) from err
        if manifest is None:
            manifest = _parse_manifest(doc, number)
            continue
        example = _parse_example(doc, manifest, number)
        if example.id in seen_ids:
            raise SchemaError(f"duplicate example id {example.id!r}", line=number)
        seen_ids.add(example.id)
        examples.append(example)
    assert manifest is not None
    return StudyDataset(manifest=manifest, examples=examples)


def load_dataset(path) -> StudyDataset:
    with open(path, encoding="utf-8") as handle:
        return loads_dataset(handle.read())


def dumps_dataset(dataset: StudyDataset) -> str:
    lines = [json.dumps(dataset.manifest.to_json())]
    lines.extend(json.dumps(ex.to_json()) for ex in dataset.examples)
    return "\n".join(lines) + "\n"


def save_dataset(dataset: StudyDataset, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps_dataset(dataset))
