"""Gradient-based discovery of reliance regions.

Each round optimizes a relaxed objective over one candidate region per
reliance decision, realizes both candidates with hard membership, and keeps
the better one when its realized gain clears the acceptance threshold. The
relaxation replaces hard membership with a sigmoid of the scaled distance to
the boundary and turns the consistency and size constraints into hinge
penalties.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit

from .dataset import StudyDataset
from .errors import ValidationError
from .regions import (Integrator, PriorRule, Region, decide_matrix,
                      region_member_mask)


@dataclass
class DiscoveryConfig:
    """Hyperparameters for gradient-based region discovery."""

    T: int = 10
    alpha: float = 0.0
    beta_l: float = 0.01
    beta_u: float = 0.5
    delta: float = 2.0
    lam: float = 5.0
    c1: float = 20.0
    learning_rate: float = 1e-3
    epochs: int = 2000
    trial_epochs: int = 200
    n_starts: int = 20
    patience: int = 100
    lr_decay: float = 0.5
    lr_floor: float = 1e-5
    weight_decay: float = 0.0
    seed: int = 0

    def validate(self) -> "DiscoveryConfig":
        if self.T < 0:
            raise ValidationError("T must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError("alpha must be in [0, 1]")
        if not 0.0 <= self.beta_l <= self.beta_u <= 1.0:
            raise ValidationError("need 0 <= beta_l <= beta_u <= 1")
        if self.lam < 0:
            raise ValidationError("lam must be >= 0")
        if self.c1 <= 0:
            raise ValidationError("c1 must be positive")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.epochs < 0 or self.trial_epochs < 0:
            raise ValidationError("epoch budgets must be >= 0")
        if self.n_starts < 1:
            raise ValidationError("n_starts must be >= 1")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValidationError("lr_decay must be in (0, 1]")
        if self.lr_floor <= 0:
            raise ValidationError("lr_floor must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")
        return self

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "DiscoveryConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown discovery config keys: {sorted(unknown)}")
        return cls(**values).validate()


@dataclass
class RegionParams:
    """Continuous region parameters being optimized."""

    centroid: np.ndarray
    radius: float
    scale: np.ndarray

    def pack(self) -> np.ndarray:
        return np.concatenate([self.centroid, [self.radius], self.scale])

    @classmethod
    def unpack(cls, flat: np.ndarray, dim: int) -> "RegionParams":
        return cls(centroid=flat[:dim].copy(), radius=float(flat[dim]),
                   scale=flat[dim + 1:].copy())


def gain_vector(current: Integrator, decision: int, dataset: StudyDataset) -> np.ndarray:
    """Per-example loss saved by deciding ``decision`` instead of following
    ``current``. Entries are in {-1, 0, 1} under the zero-one loss."""
    loss = dataset.manifest.loss
    loss0 = np.array([loss(ex.label, ex.human_prediction) for ex in dataset.examples])
    loss1 = np.array([loss(ex.label, ex.ai_decision) for ex in dataset.examples])
    cur = current.decisions(dataset)
    cur_loss = np.where(cur == 1, loss1, loss0)
    return cur_loss - (loss1 if decision == 1 else loss0)


def _objective(flat: np.ndarray, joint: np.ndarray, gains: np.ndarray,
               match: np.ndarray, cfg: DiscoveryConfig, need_grad: bool):
    dim = joint.shape[1]
    c = flat[:dim]
    gamma = flat[dim]
    w = flat[dim + 1:]
    n = joint.shape[0]

    diff = joint - c
    sw = diff * w
    dist = np.sqrt(np.einsum("ij,ij->i", sw, sw))
    s = expit(cfg.c1 * (gamma - dist))
    size = s.sum()

    cons = cfg.alpha * size - s @ match
    upper = size - cfg.beta_u * n
    lower = cfg.beta_l * n - size
    value = float(s @ gains
                  - cfg.lam * (max(cons, 0.0) + max(upper, 0.0) + max(lower, 0.0)))
    if not need_grad:
        return value, None

    # subgradient 0 exactly at the hinge corners, zero contribution at dist 0
    coef = gains.astype(float).copy()
    if cons > 0:
        coef -= cfg.lam * (cfg.alpha - match)
    if upper > 0:
        coef -= cfg.lam
    if lower > 0:
        coef += cfg.lam
    slope = cfg.c1 * s * (1.0 - s) * coef
    dgamma = slope.sum()
    q = np.divide(slope, dist, out=np.zeros_like(slope), where=dist > 0)
    dc = (w * w) * (q @ diff)
    dw = -w * (q @ (diff * diff))
    return value, np.concatenate([dc, [dgamma], dw])


def objective_value(params: RegionParams, decision: int, gains: np.ndarray,
                    optimal: np.ndarray, joint: np.ndarray,
                    cfg: DiscoveryConfig) -> float:
    """Relaxed objective: soft gain minus hinge penalties for consistency and
    the size window."""
    match = (np.asarray(optimal) == decision).astype(float)
    value, _ = _objective(params.pack(), joint, np.asarray(gains, dtype=float),
                          match, cfg, need_grad=False)
    return value


def objective_gradient(params: RegionParams, decision: int, gains: np.ndarray,
                       optimal: np.ndarray, joint: np.ndarray,
                       cfg: DiscoveryConfig) -> RegionParams:
    """Analytic gradient of ``objective_value`` in the same parameter layout."""
    match = (np.asarray(optimal) == decision).astype(float)
    _, grad = _objective(params.pack(), joint, np.asarray(gains, dtype=float),
                         match, cfg, need_grad=True)
    dim = joint.shape[1]
    return RegionParams.unpack(grad, dim)


@dataclass
class AdamState:
    """Bias-corrected Adam moments with decoupled weight decay."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size))

    def copy(self) -> "AdamState":
        return AdamState(m=self.m.copy(), v=self.v.copy(), t=self.t,
                         beta1=self.beta1, beta2=self.beta2, eps=self.eps)


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray,
              lr: float, weight_decay: float = 0.0) -> np.ndarray:
    """One minimization step; ``grad`` is the gradient of the loss."""
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.eps) - lr * weight_decay * params


def kmedoids_init(points: np.ndarray, k: int, seed: int = 0,
                  max_iter: int = 100) -> np.ndarray:
    """Alternating-assignment k-medoids; returns k distinct input points."""
    vectors, _ = _kmedoids(points, k, seed, max_iter)
    return vectors


def _kmedoids(points: np.ndarray, k: int, seed: int, max_iter: int = 100):
    points = np.asarray(points, dtype=float)
    n = len(points)
    if k < 1 or k > n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    medoids = np.sort(rng.choice(n, size=k, replace=False))
    for _ in range(max_iter):
        diff = points[:, None, :] - points[medoids][None, :, :]
        assign = np.argmin(np.einsum("ikj,ikj->ik", diff, diff), axis=1)
        updated = medoids.copy()
        for j in range(k):
            members = np.flatnonzero(assign == j)
            if members.size == 0:
                continue
            sub = points[members]
            pair = sub[:, None, :] - sub[None, :, :]
            cost = np.sqrt(np.einsum("abj,abj->ab", pair, pair)).sum(axis=1)
            updated[j] = members[int(np.argmin(cost))]
        updated = np.sort(updated)
        if np.array_equal(updated, medoids):
            break
        medoids = updated
    return points[medoids].copy(), medoids


@dataclass
class _TrialResult:
    best_value: float
    best_flat: np.ndarray
    end_flat: np.ndarray
    adam: AdamState
    end_value: float


def _run_trial(flat0: np.ndarray, steps: int, lr: float, joint, gains, match,
               cfg: DiscoveryConfig) -> _TrialResult:
    adam = AdamState.fresh(flat0.size)
    flat = flat0.copy()
    best_value, _ = _objective(flat, joint, gains, match, cfg, need_grad=False)
    best_flat = flat.copy()
    for _ in range(steps):
        value, grad = _objective(flat, joint, gains, match, cfg, need_grad=True)
        if value > best_value:
            best_value, best_flat = value, flat.copy()
        flat = adam_step(adam, flat, -grad, lr, cfg.weight_decay)
    end_value, _ = _objective(flat, joint, gains, match, cfg, need_grad=False)
    if end_value > best_value:
        best_value, best_flat = end_value, flat.copy()
    return _TrialResult(best_value, best_flat, flat, adam, end_value)


def _optimize_arrays(joint: np.ndarray, gains: np.ndarray, match: np.ndarray,
                     pool: np.ndarray, cfg: DiscoveryConfig,
                     rng: np.random.Generator):
    dim = joint.shape[1]
    n_trials = min(cfg.n_starts, len(pool))
    picks = rng.choice(len(pool), size=n_trials, replace=False)
    trials = []
    for idx in picks:
        flat0 = np.concatenate([pool[idx], [0.0], np.ones(dim)])
        trials.append(_run_trial(flat0, cfg.trial_epochs, cfg.learning_rate,
                                 joint, gains, match, cfg))
    winner = trials[int(np.argmax([t.best_value for t in trials]))]

    # continue the winning trial with its Adam state and a plateau scheduler
    flat = winner.end_flat.copy()
    adam = winner.adam
    best_value, best_flat = winner.best_value, winner.best_flat.copy()
    lr = cfg.learning_rate
    stale = 0
    for _ in range(cfg.epochs):
        value, grad = _objective(flat, joint, gains, match, cfg, need_grad=True)
        if value > best_value:
            best_value, best_flat = value, flat.copy()
            stale = 0
        else:
            stale += 1
        if stale >= cfg.patience:
            lr = max(lr * cfg.lr_decay, cfg.lr_floor)
            stale = 0
        flat = adam_step(adam, flat, -grad, lr, cfg.weight_decay)
    end_value, _ = _objective(flat, joint, gains, match, cfg, need_grad=False)
    if end_value > best_value:
        best_value, best_flat = end_value, flat.copy()
    return RegionParams.unpack(best_flat, dim), float(best_value)


def optimize_region(gains: np.ndarray, decision: int, cfg: DiscoveryConfig,
                    dataset: StudyDataset, init_pool: np.ndarray,
                    rng: np.random.Generator | None = None):
    """Fit one candidate region for a fixed decision.

    Trial-runs a seeded sample of the centroid pool for a short budget,
    continues the best trial for the full budget, and returns the parameters
    with the highest objective value recorded anywhere along the way.
    """
    cfg.validate()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    init_pool = np.asarray(init_pool, dtype=float)
    if init_pool.ndim != 2 or len(init_pool) == 0:
        raise ValidationError("init_pool must be a non-empty matrix of centroids")
    joint = dataset.joint_matrix()
    loss = dataset.manifest.loss
    from .dataset import optimal_decision
    optimal = np.array([optimal_decision(ex, loss) for ex in dataset.examples])
    match = (optimal == decision).astype(float)
    return _optimize_arrays(joint, np.asarray(gains, dtype=float), match,
                            init_pool, cfg, rng)


@dataclass
class DiscoveryResult:
    regions: list[Region]
    integrator: Integrator
    log: list[dict] = field(default_factory=list)


def discover(dataset: StudyDataset, prior: PriorRule,
             cfg: DiscoveryConfig) -> DiscoveryResult:
    """Run up to 2T rounds of candidate optimization, accepting at most T
    regions whose realized hard gain clears ``delta``. Deterministic given
    (dataset, prior, cfg.seed)."""
    cfg.validate()
    if not dataset.examples:
        raise ValidationError("cannot discover regions on an empty dataset")
    n = len(dataset.examples)
    joint = dataset.joint_matrix()
    loss = dataset.manifest.loss
    loss0 = np.array([loss(ex.label, ex.human_prediction) for ex in dataset.examples])
    loss1 = np.array([loss(ex.label, ex.ai_decision) for ex in dataset.examples])
    optimal = (loss0 > loss1).astype(int)
    prior_dec = np.array([prior.decision_for(ex) for ex in dataset.examples], dtype=int)

    pool_k = min(max(100, cfg.T), n)
    pool = kmedoids_init(joint, pool_k, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    integrator = Integrator(prior=prior, regions=[])
    current = prior_dec.copy()
    accepted: list[Region] = []
    log: list[dict] = []

    for round_idx in range(2 * cfg.T):
        cur_loss = np.where(current == 1, loss1, loss0)
        candidates = {}
        for r in (0, 1):
            gains = cur_loss - (loss1 if r == 1 else loss0)
            match = (optimal == r).astype(float)
            params, best_value = _optimize_arrays(joint, gains.astype(float),
                                                  match, pool, cfg, rng)
            # a non-positive optimized radius realizes as an empty region
            region = Region(id=len(accepted), centroid=params.centroid,
                            scale=params.scale, radius=max(params.radius, 0.0),
                            decision=r)
            mask = region_member_mask(region, joint)
            if mask.any():
                trial = integrator.with_region(region)
                new_dec = decide_matrix(joint[mask], trial.regions, prior_dec[mask])
                new_loss = np.where(new_dec == 1, loss1[mask], loss0[mask])
                hard_gain = float((cur_loss[mask] - new_loss).sum())
            else:
                trial = integrator
                hard_gain = 0.0
            candidates[r] = (region, trial, hard_gain, best_value, int(mask.sum()), mask)

        # equal realized gains keep the human-default branch
        chosen = 1 if candidates[1][2] > candidates[0][2] else 0
        region, trial, hard_gain, best_value, count, mask = candidates[chosen]
        accepted_now = count > 0 and hard_gain >= cfg.delta
        if accepted_now:
            members_opt = optimal[mask]
            region.stats = {
                "member_count": count,
                "gain": hard_gain,
                "consistency": float((members_opt == chosen).mean()),
                "human_accuracy": float((loss0[mask] == 0).mean()),
                "ai_accuracy": float((loss1[mask] == 0).mean()),
            }
            accepted.append(region)
            integrator = trial
            current = decide_matrix(joint, integrator.regions, prior_dec)
        log.append({
            "round": round_idx,
            "objective_0": candidates[0][3],
            "objective_1": candidates[1][3],
            "chosen_decision": chosen,
            "gain": hard_gain,
            "member_count": count,
            "accepted": accepted_now,
            "regions_so_far": len(accepted),
        })
        if len(accepted) == cfg.T:
            break
    return DiscoveryResult(regions=accepted, integrator=integrator, log=log)
