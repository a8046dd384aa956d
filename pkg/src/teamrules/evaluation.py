"""Evaluation metrics and reports.

Clustering agreement is computed by direct pair counting so the degenerate
conventions are explicit: the adjusted index returns 1.0 when both
partitions have identical degenerate pair structure (max equals expected),
and the Fowlkes-Mallows score is 0 when either partition has no
same-cluster pair at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import StudyDataset, team_loss
from .describe import TextEmbedder, cosine_similarity
from .errors import ValidationError
from .regions import Integrator, PriorRule, Region, region_member_mask


def _contingency(labels_a, labels_b):
    labels_a = list(labels_a)
    labels_b = list(labels_b)
    if len(labels_a) != len(labels_b):
        raise ValidationError("label sequences must have the same length")
    if not labels_a:
        raise ValidationError("label sequences must be non-empty")
    cells: dict[tuple, int] = {}
    rows: dict = {}
    cols: dict = {}
    for a, b in zip(labels_a, labels_b):
        cells[(a, b)] = cells.get((a, b), 0) + 1
        rows[a] = rows.get(a, 0) + 1
        cols[b] = cols.get(b, 0) + 1
    return cells, rows, cols, len(labels_a)


def adjusted_rand_index(labels_a, labels_b) -> float:
    """Pair-counting Rand index corrected for chance."""
    cells, rows, cols, n = _contingency(labels_a, labels_b)
    index = sum(math.comb(c, 2) for c in cells.values())
    sum_a = sum(math.comb(c, 2) for c in rows.values())
    sum_b = sum(math.comb(c, 2) for c in cols.values())
    total = math.comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        return 1.0
    return float((index - expected) / (maximum - expected))


def fowlkes_mallows(labels_a, labels_b) -> float:
    """TP / sqrt((TP+FP)(TP+FN)) over example pairs; degenerate cases are 0."""
    cells, rows, cols, _ = _contingency(labels_a, labels_b)
    tp = sum(math.comb(c, 2) for c in cells.values())
    same_a = sum(math.comb(c, 2) for c in rows.values())
    same_b = sum(math.comb(c, 2) for c in cols.values())
    if same_a == 0 or same_b == 0:
        return 0.0
    return float(tp / math.sqrt(same_a * same_b))


def sentence_similarity_score(text_a: str, text_b: str,
                              embedder: TextEmbedder) -> float:
    """Cosine similarity of the two texts' embeddings."""
    return cosine_similarity(embedder.embed(text_a), embedder.embed(text_b))


def _norm_text(text: str) -> str:
    return " ".join(text.lower().split())


def score_descriptions(pairs, embedder: TextEmbedder | None):
    """Per (description, target) pair: sentence similarity plus exact and
    substring match of the normalized strings (target inside description)."""
    rows = []
    for description, target in pairs:
        row = {
            "exact_match": _norm_text(description) == _norm_text(target),
            "substring_match": _norm_text(target) in _norm_text(description),
        }
        if embedder is not None:
            row["sent_sim"] = sentence_similarity_score(description, target, embedder)
        rows.append(row)
    return rows


def region_cluster_labels(regions: list[Region], dataset: StudyDataset) -> np.ndarray:
    """Partition induced by regions: lowest-id containing region, else -1."""
    labels = np.full(len(dataset.examples), -1, dtype=int)
    joint = dataset.joint_matrix()
    for reg in sorted(regions, key=lambda r: r.id, reverse=True):
        labels[region_member_mask(reg, joint)] = reg.id
    return labels


def kmeans_baseline_labels(embeddings: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Plain k-means cluster assignment used as the comparison partition."""
    from sklearn.cluster import KMeans
    model = KMeans(n_clusters=k, random_state=seed, n_init=10)
    return model.fit_predict(np.asarray(embeddings, dtype=float))


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal form
    return str(value)


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    clustering: dict | None = None
    descriptions: list | None = None
    config: dict | None = None

    COLUMNS = ("t", "train_error", "test_error", "region_id", "gain",
               "size", "consistency")

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_csv_cell(row.get(col)) for col in self.COLUMNS))
        return "\n".join(lines) + "\n"

    def format_table(self) -> str:
        headers = list(self.COLUMNS)
        body = [[("" if row.get(col) is None else
                  f"{row[col]:.4f}" if isinstance(row.get(col), float) else str(row[col]))
                 for col in headers] for row in self.rows]
        widths = [max(len(h), *(len(line[i]) for line in body)) if body else len(h)
                  for i, h in enumerate(headers)]
        out = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        for line in body:
            out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
        return "\n".join(out)


def team_error_report(dataset: StudyDataset, prior: PriorRule,
                      regions: list[Region], max_t: int | None = None) -> EvalReport:
    """Team error with the first t regions active, for t = 0..max_t.

    Train and test columns follow the dataset's split field; a side with no
    examples reports None. Rows t >= 1 carry the t-th region's stored stats.
    """
    ordered = sorted(regions, key=lambda reg: reg.id)
    if max_t is None:
        max_t = len(ordered)
    if max_t > len(ordered):
        raise ValidationError(f"max_t {max_t} exceeds region count {len(ordered)}")
    train = StudyDataset(dataset.manifest, dataset.split_examples("train"))
    test = StudyDataset(dataset.manifest, dataset.split_examples("test"))
    report = EvalReport()
    for t in range(max_t + 1):
        integ = Integrator(prior=prior, regions=list(ordered[:t]))
        row = {
            "t": t,
            "train_error": team_loss(train, integ.decisions(train)) if train.examples else None,
            "test_error": team_loss(test, integ.decisions(test)) if test.examples else None,
            "region_id": None, "gain": None, "size": None, "consistency": None,
        }
        if t >= 1:
            reg = ordered[t - 1]
            row["region_id"] = reg.id
            row["gain"] = reg.stats.get("gain")
            row["size"] = reg.stats.get("member_count")
            row["consistency"] = reg.stats.get("consistency")
        report.rows.append(row)
    return report


def resplit(dataset: StudyDataset, ratio: float, seed: int) -> StudyDataset:
    """Seeded random reassignment of the train/test split fields."""
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError("split ratio must be in [0, 1]")
    n = len(dataset.examples)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(ratio * n)
    train_set = set(order[:n_train].tolist())
    examples = [replace(ex, split="train" if i in train_set else "test",
                        metadata=dict(ex.metadata))
                for i, ex in enumerate(dataset.examples)]
    return StudyDataset(manifest=dataset.manifest, examples=examples)


def splits_summary(reports: list[EvalReport]):
    """Across resplit reports: mean and std/sqrt(k) of the error columns."""
    if not reports:
        return []
    k = len(reports)
    rows = []
    for idx in range(len(reports[0].rows)):
        entry = {"t": reports[0].rows[idx]["t"]}
        for col in ("train_error", "test_error"):
            values = [rep.rows[idx][col] for rep in reports]
            if any(v is None for v in values):
                entry[f"{col}_mean"] = None
                entry[f"{col}_stderr"] = None
            else:
                arr = np.asarray(values, dtype=float)
                entry[f"{col}_mean"] = float(arr.mean())
                entry[f"{col}_stderr"] = float(arr.std() / math.sqrt(k))
        rows.append(entry)
    return rows
