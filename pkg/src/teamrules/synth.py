"""Synthetic study data with planted agreement/disagreement regions.

Blob datasets carry a metadata key recording each example's blob. Planting
picks metadata predicates (key=value) whose support lies inside a size
window and marks half of each agent's regions good and half bad; responses
are then drawn with good/bad/background accuracy, wrong answers uniform
over the remaining labels off a per-example counter-based stream, so
parallel and sequential generation agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace

import numpy as np

from .dataset import DatasetManifest, StudyDataset, TaskExample
from .errors import ValidationError

_BLOB_WORDS = [
    "amber", "basalt", "cedar", "dune", "ember", "fjord", "garnet", "harbor",
    "iris", "juniper", "krill", "lagoon", "marble", "nectar", "onyx", "pearl",
    "quartz", "reef", "saffron", "tundra", "umber", "velvet", "willow",
    "xenon", "yarrow", "zephyr", "aspen", "briar", "cobalt", "delta",
    "ebony", "flint", "grove", "heather", "indigo", "jasper", "kelp",
    "linden", "mesa", "nimbus",
]


def blob_word(index: int) -> str:
    word = _BLOB_WORDS[index % len(_BLOB_WORDS)]
    suffix = index // len(_BLOB_WORDS)
    return word if suffix == 0 else f"{word}{suffix}"


def generate_blobs(n: int, d: int, n_blobs: int, separation: float = 10.0,
                   blob_std=1.0, label_vocabulary=("0", "1"),
                   train_fraction: float = 1.0, seed: int = 0,
                   blob_weights=None) -> StudyDataset:
    """Isotropic Gaussian blobs around well-separated directions.

    Returns a dataset skeleton: labels are drawn uniformly, the human and AI
    response fields are placeholders until simulate_responses fills them,
    and metadata records the blob id under the key "blob".

    blob_std may be a scalar or one value per blob; blob_weights switches
    assignment from round-robin to a seeded weighted draw, which lets a
    single wide blob act as diffuse background mass.
    """
    if n < 1 or d < 1 or n_blobs < 1:
        raise ValidationError("n, d, n_blobs must all be positive")
    if not 0.0 <= train_fraction <= 1.0:
        raise ValidationError("train_fraction must be in [0, 1]")
    vocab = tuple(label_vocabulary)
    if len(vocab) < 1:
        raise ValidationError("label vocabulary must be non-empty")
    stds = np.full(n_blobs, blob_std, dtype=float) if np.isscalar(blob_std) \
        else np.asarray(blob_std, dtype=float)
    if stds.shape != (n_blobs,) or np.any(stds <= 0):
        raise ValidationError("blob_std must be positive, one value per blob")
    weights = None
    if blob_weights is not None:
        weights = np.asarray(blob_weights, dtype=float)
        if weights.shape != (n_blobs,) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValidationError("blob_weights must be nonnegative, one per blob")
        weights = weights / weights.sum()
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n_blobs, d))
    centers = separation * raw / np.linalg.norm(raw, axis=1, keepdims=True)
    width = len(str(max(n - 1, 1)))
    examples = []
    for i in range(n):
        blob = i % n_blobs if weights is None else int(rng.choice(n_blobs, p=weights))
        embedding = centers[blob] + stds[blob] * rng.standard_normal(d)
        label = vocab[int(rng.integers(len(vocab)))]
        split = "train" if rng.random() < train_fraction else "test"
        examples.append(TaskExample(
            id=f"ex{i:0{width}d}",
            embedding=embedding,
            ai_features=np.zeros(0),
            label=label,
            ai_decision=label,
            human_prediction=label,
            prior_reliance=0,
            text=f"{blob_word(blob)} sample {i}",
            metadata={"blob": str(blob)},
            split=split,
        ))
    manifest = DatasetManifest(embedding_dim=d, ai_feature_dim=0,
                               label_vocabulary=vocab)
    return StudyDataset(manifest=manifest, examples=examples)


@dataclass
class PlantSpec:
    n_regions_per_agent: int = 4
    support_lower: float = 0.01
    support_upper: float = 0.2
    good_accuracy: float = 0.95
    bad_accuracy: float = 0.60
    background_accuracy: float = 0.75
    prior_p: float = 0.5
    seed: int = 0

    def validate(self) -> "PlantSpec":
        if self.n_regions_per_agent < 2 or self.n_regions_per_agent % 2 != 0:
            raise ValidationError("n_regions_per_agent must be an even number >= 2")
        if not 0.0 < self.support_lower <= self.support_upper <= 1.0:
            raise ValidationError("need 0 < support_lower <= support_upper <= 1")
        for name in ("good_accuracy", "bad_accuracy", "background_accuracy", "prior_p"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]")
        return self

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class PlantedRegion:
    key: str
    value: str
    good: bool

    def matches(self, example: TaskExample) -> bool:
        return example.metadata.get(self.key) == self.value

    def to_json(self) -> dict:
        return {"key": self.key, "value": self.value, "good": self.good}


@dataclass
class GroundTruth:
    human_regions: list[PlantedRegion]
    ai_regions: list[PlantedRegion]
    assignments: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "predicates": {
                "human": [reg.to_json() for reg in self.human_regions],
                "ai": [reg.to_json() for reg in self.ai_regions],
            },
            "examples": self.assignments,
        }


def _candidate_predicates(dataset: StudyDataset, spec: PlantSpec):
    n = len(dataset.examples)
    counts: dict[tuple[str, str], int] = {}
    for ex in dataset.examples:
        for key, value in ex.metadata.items():
            counts[(key, value)] = counts.get((key, value), 0) + 1
    supports = {pred: c / n for pred, c in counts.items()}
    qualifying = sorted(pred for pred, s in supports.items()
                        if spec.support_lower <= s <= spec.support_upper)
    return qualifying, supports


def plant_regions(dataset: StudyDataset, spec: PlantSpec) -> GroundTruth:
    """Choose each agent's planted regions among qualifying predicates.

    Sampling is without replacement within an agent; the two agents may
    share predicates. Overlapping matches resolve to the lowest region
    index in the sidecar assignment."""
    spec.validate()
    if not dataset.examples:
        raise ValidationError("cannot plant regions in an empty dataset")
    qualifying, supports = _candidate_predicates(dataset, spec)
    k = spec.n_regions_per_agent
    if len(qualifying) < k:
        detail = ", ".join(f"{key}={value}: {supports[(key, value)]:.4f}"
                           for key, value in sorted(supports))
        raise ValidationError(
            f"only {len(qualifying)} predicates have support in "
            f"[{spec.support_lower}, {spec.support_upper}], need {k}; "
            f"candidate supports: {detail}")
    rng = np.random.default_rng(spec.seed)

    def pick() -> list[PlantedRegion]:
        chosen = rng.choice(len(qualifying), size=k, replace=False)
        flags = rng.permutation([True] * (k // 2) + [False] * (k // 2))
        return [PlantedRegion(key=qualifying[i][0], value=qualifying[i][1], good=bool(g))
                for i, g in zip(chosen, flags)]

    truth = GroundTruth(human_regions=pick(), ai_regions=pick())
    for ex in dataset.examples:
        human = next((idx for idx, reg in enumerate(truth.human_regions)
                      if reg.matches(ex)), None)
        ai = next((idx for idx, reg in enumerate(truth.ai_regions)
                   if reg.matches(ex)), None)
        truth.assignments[ex.id] = {"human_region": human, "ai_region": ai}
    return truth


def _accuracy_for(example: TaskExample, regions: list[PlantedRegion],
                  spec: PlantSpec) -> float:
    matched = [reg for reg in regions if reg.matches(example)]
    if not matched:
        return spec.background_accuracy
    # overlapping regions: the bad accuracy wins
    if any(not reg.good for reg in matched):
        return spec.bad_accuracy
    return spec.good_accuracy


def _draw_response(rng: np.random.Generator, label: str, vocab, accuracy: float) -> str:
    correct = rng.random() < accuracy
    others = [v for v in vocab if v != label]
    wrong_pick = int(rng.integers(len(others))) if others else 0
    if correct or not others:
        return label
    return others[wrong_pick]


def simulate_responses(dataset: StudyDataset, truth: GroundTruth,
                       spec: PlantSpec) -> StudyDataset:
    """Fill in human predictions, AI decisions, and prior reliance.

    Every example uses its own counter-based random stream keyed on
    (seed, example index), with a fixed draw order inside it."""
    spec.validate()
    vocab = dataset.manifest.label_vocabulary
    examples = []
    for i, ex in enumerate(dataset.examples):
        rng = np.random.default_rng([spec.seed, 1000003, i])
        human = _draw_response(rng, ex.label, vocab,
                               _accuracy_for(ex, truth.human_regions, spec))
        ai = _draw_response(rng, ex.label, vocab,
                            _accuracy_for(ex, truth.ai_regions, spec))
        prior = int(rng.random() < spec.prior_p)
        examples.append(replace(ex, human_prediction=human, ai_decision=ai,
                                prior_reliance=prior, metadata=dict(ex.metadata)))
    return StudyDataset(manifest=dataset.manifest, examples=examples)


def combined_cluster_labels(assignments: dict, examples,
                            n_human_regions: int) -> np.ndarray:
    """One planted-cluster label per example: the human region index when
    assigned, else the AI region index offset past the human ones, else -1
    for background."""
    labels = np.full(len(examples), -1, dtype=int)
    for pos, ex in enumerate(examples):
        entry = assignments.get(ex.id, {})
        if entry.get("human_region") is not None:
            labels[pos] = entry["human_region"]
        elif entry.get("ai_region") is not None:
            labels[pos] = n_human_regions + entry["ai_region"]
    return labels
