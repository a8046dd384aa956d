"""Bounded reliance regions and the integrator that applies them.

A region is a scaled ball in the joint embedding/AI-feature space together
with one reliance decision. The integrator falls back to the human's prior
rule outside every region and takes an unweighted majority vote over the
regions containing a point, breaking exact ties toward the nearest
containing region (by scaled distance, then lowest region id).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import (StudyDataset, TaskExample, decision_loss, joint_vector,
                      optimal_decision)
from .errors import SchemaError, ValidationError


@dataclass
class Region:
    id: int
    centroid: np.ndarray
    scale: np.ndarray
    radius: float
    decision: int
    description: str | None = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.centroid.shape != self.scale.shape:
            raise ValidationError("centroid and scale must have the same dimension")
        if self.decision not in (0, 1):
            raise ValidationError("region decision must be 0 or 1")
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValidationError("region radius must be finite and non-negative")

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "centroid": [float(x) for x in self.centroid],
            "scale": [float(x) for x in self.scale],
            "radius": float(self.radius),
            "decision": self.decision,
            "description": self.description,
            "stats": dict(self.stats),
        }


def scaled_distance(region: Region, vector: np.ndarray) -> float:
    """Elementwise-scaled Euclidean distance from the region centroid."""
    vector = np.asarray(vector, dtype=float)
    if vector.shape != region.centroid.shape:
        raise ValidationError(
            f"vector has dimension {vector.shape}, region expects {region.centroid.shape}")
    delta = region.scale * (vector - region.centroid)
    return float(np.sqrt(np.sum(delta * delta)))


def region_contains(region: Region, vector: np.ndarray) -> bool:
    """Strict membership: points exactly on the boundary are outside."""
    return scaled_distance(region, vector) < region.radius


def region_member_mask(region: Region, joint: np.ndarray) -> np.ndarray:
    """Boolean membership over the rows of a joint-vector matrix."""
    delta = region.scale[None, :] * (joint - region.centroid[None, :])
    dist = np.sqrt(np.sum(delta * delta, axis=1))
    return dist < region.radius


@dataclass(frozen=True)
class PriorRule:
    """The human's pre-study reliance rule.

    mode "recorded" replays each example's recorded prior choice, "constant"
    always answers ``value``, "random" draws a seeded per-example coin that
    depends only on (seed, example id) so subsetting never reshuffles it.
    """

    mode: str = "recorded"
    value: int = 0
    seed: int = 0
    p: float = 0.5

    def __post_init__(self):
        if self.mode not in ("recorded", "constant", "random"):
            raise ValidationError(f"unknown prior mode {self.mode!r}")
        if self.value not in (0, 1):
            raise ValidationError("constant prior value must be 0 or 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError("prior probability must be in [0, 1]")

    def decision_for(self, example: TaskExample) -> int:
        if self.mode == "recorded":
            return int(example.prior_reliance)
        if self.mode == "constant":
            return self.value
        digest = hashlib.sha256(f"{self.seed}:{example.id}".encode()).digest()
        draw = int.from_bytes(digest[:8], "big") / 2**64
        return int(draw < self.p)


@dataclass
class Integrator:
    """Prior rule plus an ordered list of accepted regions."""

    prior: PriorRule
    regions: list[Region] = field(default_factory=list)

    def __post_init__(self):
        ids = [reg.id for reg in self.regions]
        if len(set(ids)) != len(ids):
            raise ValidationError("region ids must be unique")

    def with_region(self, region: Region) -> "Integrator":
        return Integrator(prior=self.prior, regions=[*self.regions, region])

    def truncated(self, count: int) -> "Integrator":
        return Integrator(prior=self.prior, regions=list(self.regions[:count]))

    def integrate(self, example: TaskExample) -> int:
        return integrate(self, example)

    def decisions(self, dataset: StudyDataset) -> np.ndarray:
        prior = np.array([self.prior.decision_for(ex) for ex in dataset.examples], dtype=int)
        return decide_matrix(dataset.joint_matrix(), self.regions, prior)

    def team_loss(self, dataset: StudyDataset) -> float:
        from .dataset import team_loss
        return team_loss(dataset, self.decisions(dataset))


def integrate(integrator: Integrator, example: TaskExample) -> int:
    """Reliance decision for one example: prior fallback or region majority."""
    vector = joint_vector(example)
    containing = [(scaled_distance(reg, vector), reg) for reg in integrator.regions]
    containing = [(dist, reg) for dist, reg in containing if dist < reg.radius]
    if not containing:
        return integrator.prior.decision_for(example)
    votes = sum(reg.decision for _, reg in containing)
    if 2 * votes > len(containing):
        return 1
    if 2 * votes < len(containing):
        return 0
    # exact tie: nearest containing region wins, then lowest region id
    _, nearest = min(containing, key=lambda pair: (pair[0], pair[1].id))
    return nearest.decision


def decide_matrix(joint: np.ndarray, regions: list[Region], prior_decisions: np.ndarray) -> np.ndarray:
    """Vectorized integrate over rows of a joint matrix."""
    out = np.asarray(prior_decisions, dtype=int).copy()
    if not regions or joint.shape[0] == 0:
        return out
    ordered = sorted(regions, key=lambda reg: reg.id)
    dists = np.empty((len(ordered), joint.shape[0]))
    masks = np.empty((len(ordered), joint.shape[0]), dtype=bool)
    for k, reg in enumerate(ordered):
        delta = reg.scale[None, :] * (joint - reg.centroid[None, :])
        dists[k] = np.sqrt(np.sum(delta * delta, axis=1))
        masks[k] = dists[k] < reg.radius
    decisions = np.array([reg.decision for reg in ordered], dtype=int)
    votes_total = masks.sum(axis=0)
    votes_one = (masks & (decisions[:, None] == 1)).sum(axis=0)
    covered = votes_total > 0
    out[covered & (2 * votes_one > votes_total)] = 1
    out[covered & (2 * votes_one < votes_total)] = 0
    tied = covered & (2 * votes_one == votes_total)
    if np.any(tied):
        masked = np.where(masks[:, tied], dists[:, tied], np.inf)
        nearest = np.argmin(masked, axis=0)  # first minimum = lowest region id
        out[tied] = decisions[nearest]
    return out


def region_members(region: Region, dataset: StudyDataset) -> list[int]:
    """Indices of dataset examples strictly inside the region."""
    mask = region_member_mask(region, dataset.joint_matrix())
    return [int(i) for i in np.flatnonzero(mask)]


def region_gain(region: Region, new: Integrator, old: Integrator,
                dataset: StudyDataset) -> float:
    """Loss saved on the region's members by moving from ``old`` to ``new``.

    Decisions change only inside the region being added, so this also equals
    the whole-dataset loss difference when ``new`` extends ``old`` by
    ``region``. May be negative.
    """
    loss = dataset.manifest.loss
    total = 0.0
    for idx in region_members(region, dataset):
        ex = dataset.examples[idx]
        total += decision_loss(ex, integrate(old, ex), loss)
        total -= decision_loss(ex, integrate(new, ex), loss)
    return float(total)


def region_stats(region: Region, dataset: StudyDataset) -> dict:
    """Hard-membership statistics used in reports and teaching cards."""
    members = region_members(region, dataset)
    count = len(members)
    if count == 0:
        return {"member_count": 0, "consistency": 0.0,
                "human_accuracy": 0.0, "ai_accuracy": 0.0}
    loss = dataset.manifest.loss
    agree = human_ok = ai_ok = 0
    for idx in members:
        ex = dataset.examples[idx]
        agree += int(optimal_decision(ex, loss) == region.decision)
        human_ok += int(ex.human_prediction == ex.label)
        ai_ok += int(ex.ai_decision == ex.label)
    return {
        "member_count": count,
        "consistency": agree / count,
        "human_accuracy": human_ok / count,
        "ai_accuracy": ai_ok / count,
    }


def dataset_fingerprint(content: bytes | str) -> str:
    """Stable short id for provenance headers, from serialized dataset bytes."""
    if isinstance(content, str):
        content = content.encode("utf-8")
    return hashlib.sha256(content).hexdigest()[:16]


def regions_document(regions: list[Region], dim: int, dataset_id: str,
                     config: dict | None = None) -> dict:
    doc = {
        "manifest": {"dim": dim, "dataset_id": dataset_id},
        "regions": [reg.to_json() for reg in regions],
    }
    if config is not None:
        doc["config"] = config
    return doc


def dumps_regions(regions: list[Region], dim: int, dataset_id: str,
                  config: dict | None = None) -> str:
    return json.dumps(regions_document(regions, dim, dataset_id, config), indent=2) + "\n"


def save_regions(path, regions: list[Region], dim: int, dataset_id: str,
                 config: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps_regions(regions, dim, dataset_id, config))


def loads_regions(content: str) -> tuple[list[Region], dict]:
    try:
        doc = json.loads(content)
    except json.JSONDecodeError as err:
        raise SchemaError(f"regions file is not valid JSON ({err.msg})") from err
    if not isinstance(doc, dict) or "manifest" not in doc or "regions" not in doc:
        raise SchemaError("regions file must be an object with manifest and regions")
    manifest = doc["manifest"]
    if not isinstance(manifest, dict) or "dim" not in manifest or "dataset_id" not in manifest:
        raise SchemaError("regions manifest must carry dim and dataset_id")
    dim = manifest["dim"]
    regions = []
    seen = set()
    for entry in doc["regions"]:
        for key in ("id", "centroid", "scale", "radius", "decision"):
            if key not in entry:
                raise SchemaError(f"region entry missing {key!r}")
        if len(entry["centroid"]) != dim or len(entry["scale"]) != dim:
            raise SchemaError(f"region {entry['id']} does not match manifest dim {dim}")
        if entry["id"] in seen:
            raise SchemaError(f"duplicate region id {entry['id']}")
        seen.add(entry["id"])
        regions.append(Region(
            id=int(entry["id"]),
            centroid=np.asarray(entry["centroid"], dtype=float),
            scale=np.asarray(entry["scale"], dtype=float),
            radius=float(entry["radius"]),
            decision=int(entry["decision"]),
            description=entry.get("description"),
            stats=dict(entry.get("stats", {})),
        ))
    return regions, doc


def load_regions(path) -> tuple[list[Region], dict]:
    with open(path, encoding="utf-8") as handle:
        return loads_regions(handle.read())
