"""Selection-based discovery: centroids restricted to data points.

Every data point is tried as a centroid; the region around it grows one
distance ring at a time with unit scale, inheriting the centroid's optimal
reliance decision. A candidate is feasible when its member count sits inside
the size window and the members' optimal decisions agree with the centroid's
at rate at least alpha. Because membership is strict, a radius "equal to the
distance to point k" is realized strictly above that distance: the midpoint
to the next larger distance, or the next representable float when the
midpoint would round down, or a machine-epsilon bump past the maximum.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import StudyDataset
from .errors import ValidationError
from .regions import Integrator, PriorRule, Region, decide_matrix


@dataclass
class SelectionConfig:
    T: int = 10
    alpha: float = 0.0
    beta_l: float = 0.01
    beta_u: float = 0.5
    delta: float = 2.0
    seed: int = 0  # recorded for provenance; the search itself is deterministic

    def validate(self) -> "SelectionConfig":
        if self.T < 0:
            raise ValidationError("T must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must be in [0, 1]")
        if not 0.0 <= self.beta_l <= self.beta_u <= 1.0:
            raise ValidationError("need 0 <= beta_l <= beta_u <= 1")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "SelectionConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown selection config keys: {sorted(unknown)}")
        return cls(**values).validate()


@dataclass
class _RoundContext:
    joint: np.ndarray
    loss0: np.ndarray
    loss1: np.ndarray
    optimal: np.ndarray
    prior_dec: np.ndarray
    cur_dec: np.ndarray
    cur_loss: np.ndarray
    # what each point's decision becomes if one more region with decision r
    # contains it; tie entries need the candidate's distance to resolve
    base_new_dec: dict
    tie_mask: dict
    old_dist: np.ndarray
    old_dec: np.ndarray


def _round_context(dataset: StudyDataset, integrator: Integrator) -> _RoundContext:
    joint = dataset.joint_matrix()
    n = len(dataset.examples)
    loss = dataset.manifest.loss
    loss0 = np.array([loss(ex.label, ex.human_prediction) for ex in dataset.examples])
    loss1 = np.array([loss(ex.label, ex.ai_decision) for ex in dataset.examples])
    optimal = (loss0 > loss1).astype(int)
    prior_dec = np.array([integrator.prior.decision_for(ex) for ex in dataset.examples], dtype=int)
    cur_dec = decide_matrix(joint, integrator.regions, prior_dec)
    cur_loss = np.where(cur_dec == 1, loss1, loss0)

    votes0 = np.zeros(n, dtype=int)
    votes1 = np.zeros(n, dtype=int)
    old_dist = np.full(n, np.inf)
    old_dec = np.full(n, -1, dtype=int)
    for reg in sorted(integrator.regions, key=lambda r: r.id):
        delta = reg.scale[None, :] * (joint - reg.centroid[None, :])
        dist = np.sqrt(np.sum(delta * delta, axis=1))
        mask = dist < reg.radius
        if reg.decision == 0:
            votes0[mask] += 1
        else:
            votes1[mask] += 1
        closer = mask & (dist < old_dist)  # strict: equal distance keeps lower id
        old_dist[closer] = dist[closer]
        old_dec[closer] = reg.decision

    base_new_dec = {}
    tie_mask = {}
    for r in (0, 1):
        nv0 = votes0 + (1 if r == 0 else 0)
        nv1 = votes1 + (1 if r == 1 else 0)
        covered = (votes0 + votes1) > 0
        nd = np.where(nv1 > nv0, 1, np.where(nv0 > nv1, 0, r))
        nd = np.where(covered, nd, r)
        base_new_dec[r] = nd.astype(int)
        tie_mask[r] = covered & (nv0 == nv1)
    return _RoundContext(joint, loss0, loss1, optimal, prior_dec, cur_dec,
                         cur_loss, base_new_dec, tie_mask, old_dist, old_dec)


@dataclass
class _Candidate:
    index: int
    radius: float
    gain: float
    decision: int
    member_count: int


def _realized_radii(sorted_dist: np.ndarray, ends: np.ndarray) -> np.ndarray:
    radii = np.empty(len(ends))
    for pos, end in enumerate(ends):
        at = sorted_dist[end]
        if end + 1 < len(sorted_dist):
            mid = 0.5 * (at + sorted_dist[end + 1])
            radii[pos] = mid if mid > at else np.nextafter(at, np.inf)
        else:
            radii[pos] = np.nextafter(at, np.inf)
    return radii


def _grow(index: int, ctx: _RoundContext, cfg: SelectionConfig) -> _Candidate | None:
    n = len(ctx.joint)
    r = int(ctx.optimal[index])
    delta = ctx.joint - ctx.joint[index]
    dist = np.sqrt(np.sum(delta * delta, axis=1))
    order = np.argsort(dist, kind="stable")
    sorted_dist = dist[order]

    # resolve tie-dependent decisions with this candidate's own distances
    new_dec = ctx.base_new_dec[r].copy()
    ties = ctx.tie_mask[r]
    if ties.any():
        new_dec[ties] = np.where(dist[ties] < ctx.old_dist[ties], r, ctx.old_dec[ties])
    new_loss = np.where(new_dec == 1, ctx.loss1, ctx.loss0)
    point_gain = (ctx.cur_loss - new_loss)[order]
    gain_prefix = np.cumsum(point_gain)
    agree_prefix = np.cumsum((ctx.optimal == r).astype(int)[order])

    # candidate prefixes end where the next distance is strictly larger;
    # the bare-centroid prefix is not a candidate (radius must reach a point)
    ends = np.flatnonzero(np.diff(sorted_dist) > 0)
    ends = np.concatenate([ends, [n - 1]]) if n > 1 else np.array([], dtype=int)
    ends = ends[ends >= 1]
    if ends.size == 0:
        return None
    counts = ends + 1
    feasible = ((counts >= cfg.beta_l * n) & (counts <= cfg.beta_u * n)
                & (agree_prefix[ends] >= cfg.alpha * counts))
    feasible &= gain_prefix[ends] >= cfg.delta
    if not feasible.any():
        return None
    gains = np.where(feasible, gain_prefix[ends], -np.inf)
    best = int(np.argmax(gains))  # equal gains resolve to the smallest radius
    radius = _realized_radii(sorted_dist, ends[best:best + 1])[0]
    return _Candidate(index=index, radius=float(radius),
                      gain=float(gain_prefix[ends[best]]), decision=r,
                      member_count=int(counts[best]))


def grow_region_at(index: int, current: Integrator, cfg: SelectionConfig,
                   dataset: StudyDataset):
    """Best feasible region centered on example ``index``.

    Returns (radius, gain, decision, member_count) with gain >= delta, or
    None when no radius qualifies. Gains are the true realized gains of the
    extended integrator, majority vote and tie-breaks included.
    """
    cfg.validate()
    if not 0 <= index < len(dataset.examples):
        raise ValidationError(f"index {index} out of range")
    ctx = _round_context(dataset, current)
    cand = _grow(index, ctx, cfg)
    if cand is None:
        return None
    return cand.radius, cand.gain, cand.decision, cand.member_count


def discover_select(dataset: StudyDataset, prior: PriorRule,
                    cfg: SelectionConfig):
    """Greedy rounds of the point-centered search; at most T accepted
    regions, stopping early when no candidate reaches delta. Across
    centroids, equal gains resolve to the lowest example index."""
    from .gradient_discovery import DiscoveryResult

    cfg.validate()
    if not dataset.examples:
        raise ValidationError("cannot discover regions on an empty dataset")
    integrator = Integrator(prior=prior, regions=[])
    accepted: list[Region] = []
    log: list[dict] = []
    dim = dataset.manifest.joint_dim
    for round_idx in range(cfg.T):
        ctx = _round_context(dataset, integrator)
        best: _Candidate | None = None
        for index in range(len(dataset.examples)):
            cand = _grow(index, ctx, cfg)
            if cand is not None and (best is None or cand.gain > best.gain):
                best = cand
        if best is None:
            break
        region = Region(id=len(accepted), centroid=ctx.joint[best.index].copy(),
                        scale=np.ones(dim), radius=best.radius,
                        decision=best.decision)
        mask_order = np.sqrt(np.sum((ctx.joint - ctx.joint[best.index]) ** 2, axis=1)) < best.radius
        region.stats = {
            "member_count": best.member_count,
            "gain": best.gain,
            "centroid_example": dataset.examples[best.index].id,
            "consistency": float((ctx.optimal[mask_order] == best.decision).mean()),
            "human_accuracy": float((ctx.loss0[mask_order] == 0).mean()),
            "ai_accuracy": float((ctx.loss1[mask_order] == 0).mean()),
        }
        accepted.append(region)
        integrator = integrator.with_region(region)
        log.append({
            "round": round_idx,
            "centroid_example": dataset.examples[best.index].id,
            "gain": best.gain,
            "member_count": best.member_count,
            "decision": best.decision,
            "accepted": True,
            "regions_so_far": len(accepted),
        })
    return DiscoveryResult(regions=accepted, integrator=integrator, log=log)


def _multi_space_decisions(selected, datasets, prior_dec: np.ndarray) -> np.ndarray:
    """Majority vote where each region's membership lives in its own space.

    Ties go to the containing region with the smallest scaled distance
    (comparable as raw numbers across spaces), then earliest selection.
    """
    out = prior_dec.copy()
    if not selected:
        return out
    masks, dists, decs = [], [], []
    for space, reg in selected:
        joint = datasets[space].joint_matrix()
        delta = reg.scale[None, :] * (joint - reg.centroid[None, :])
        dist = np.sqrt(np.sum(delta * delta, axis=1))
        masks.append(dist < reg.radius)
        dists.append(dist)
        decs.append(reg.decision)
    masks = np.stack(masks)
    dists = np.stack(dists)
    decs = np.array(decs, dtype=int)
    votes_total = masks.sum(axis=0)
    votes_one = (masks & (decs[:, None] == 1)).sum(axis=0)
    covered = votes_total > 0
    out[covered & (2 * votes_one > votes_total)] = 1
    out[covered & (2 * votes_one < votes_total)] = 0
    tied = covered & (2 * votes_one == votes_total)
    if tied.any():
        masked = np.where(masks[:, tied], dists[:, tied], np.inf)
        out[tied] = decs[np.argmin(masked, axis=0)]
    return out


def aggregate_regions(candidates, prior: PriorRule, datasets: dict,
                      delta: float):
    """Greedy aggregation of candidate regions from multiple embedding
    spaces over one shared example set.

    ``candidates`` is a list of (space_id, Region); ``datasets`` maps each
    space_id to a StudyDataset whose examples align one-to-one (same ids,
    labels, predictions, priors; only the vectors differ). Each step adds
    the remaining candidate with the largest marginal gain, stopping when
    even the best falls below ``delta``. Returns the selected list in
    acceptance order.
    """
    if not datasets:
        raise ValidationError("need at least one embedding space")
    spaces = list(datasets)
    reference = datasets[spaces[0]]
    ids = [ex.id for ex in reference.examples]
    for space in spaces[1:]:
        if [ex.id for ex in datasets[space].examples] != ids:
            raise ValidationError("datasets must share the same examples in order")
    for space, reg in candidates:
        if space not in datasets:
            raise ValidationError(f"candidate references unknown space {space!r}")

    loss = reference.manifest.loss
    loss0 = np.array([loss(ex.label, ex.human_prediction) for ex in reference.examples])
    loss1 = np.array([loss(ex.label, ex.ai_decision) for ex in reference.examples])
    prior_dec = np.array([prior.decision_for(ex) for ex in reference.examples], dtype=int)

    selected: list = []
    remaining = list(candidates)
    cur_dec = _multi_space_decisions(selected, datasets, prior_dec)
    while remaining:
        cur_loss = np.where(cur_dec == 1, loss1, loss0)
        best_gain, best_pos = -np.inf, None
        for pos, (space, reg) in enumerate(remaining):
            joint = datasets[space].joint_matrix()
            delta_v = reg.scale[None, :] * (joint - reg.centroid[None, :])
            mask = np.sqrt(np.sum(delta_v * delta_v, axis=1)) < reg.radius
            if not mask.any():
                gain = 0.0
            else:
                new_dec = _multi_space_decisions(selected + [(space, reg)],
                                                 datasets, prior_dec)
                new_loss = np.where(new_dec == 1, loss1, loss0)
                gain = float((cur_loss[mask] - new_loss[mask]).sum())
            if gain > best_gain:
                best_gain, best_pos = gain, pos
        if best_pos is None or best_gain < delta:
            break
        selected.append(remaining.pop(best_pos))
        cur_dec = _multi_space_decisions(selected, datasets, prior_dec)
    return selected
