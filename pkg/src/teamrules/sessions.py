"""Onboarding flow: human-AI card, practice, region lessons, second pass,
testing, transcripts.

The session is a phase machine intro -> practice -> teaching -> second_pass
-> testing -> done; phases with no items are skipped. Every served item is
advanced by submitting an answer, including the card acknowledgment, so the
transcript is a complete event-sourced record of the session.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict, replace as dc_replace

import numpy as np

from .dataset import (StudyDataset, TaskExample, decision_loss, joint_vector,
                      optimal_decision)
from .errors import ValidationError
from .regions import Region, region_member_mask, scaled_distance

PHASES = ("intro", "practice", "teaching", "second_pass", "testing", "done")
SCORED_PHASES = ("practice", "teaching", "second_pass", "testing")
TIME_CAP_SECONDS = 120.0
GALLERY_SIZE = 8

# rng stream tags: sampling for one purpose never disturbs the others
_PRACTICE_TAG = 11
_REPRESENTATIVE_TAG = 13
_GALLERY_TAG = 17
_TESTING_TAG = 19


class SessionDone(ValidationError):
    """The session has no pending item; terminal state."""


class AlreadyAnswered(ValidationError):
    """Resubmission of an item that was already answered; carries the
    original feedback so retrying clients can recover it."""

    def __init__(self, item_id: str, feedback: dict):
        super().__init__(f"item {item_id} was already answered")
        self.item_id = item_id
        self.feedback = feedback


@dataclass
class HumanAICard:
    """The onboarding card: what the model reads, what it emits, where its
    data came from, and how well both agents do on average and by subgroup."""

    ai_input: str = ""
    ai_output: str = ""
    training_data_source: str = ""
    pretraining_data_source: str = ""
    training_objective: str = ""
    average_ai_performance: dict = field(default_factory=dict)
    average_human_performance: dict = field(default_factory=dict)
    subgroup_rows: list = field(default_factory=list)

    _STRING_FIELDS = ("ai_input", "ai_output", "training_data_source",
                      "pretraining_data_source", "training_objective")

    def missing_fields(self) -> list:
        missing = [name for name in self._STRING_FIELDS if not getattr(self, name)]
        if not self.average_ai_performance:
            missing.append("average_ai_performance")
        if not self.average_human_performance:
            missing.append("average_human_performance")
        if not self.subgroup_rows:
            missing.append("subgroup_rows")
        return missing

    def to_json(self) -> dict:
        return asdict(self)


def build_card(dataset: StudyDataset, min_subgroup: int = 10,
               deviation: float = 0.1, max_rows: int = 6) -> HumanAICard:
    """Card filled from the recorded responses on the train split.

    Subgroup rows list metadata predicates whose AI accuracy deviates from
    the average by at least ``deviation``, largest deviations first.
    """
    pool = dataset.split_examples("train") or list(dataset.examples)
    if not pool:
        raise ValidationError("cannot build a card from an empty dataset")
    ai_acc = float(np.mean([ex.ai_decision == ex.label for ex in pool]))
    human_acc = float(np.mean([ex.human_prediction == ex.label for ex in pool]))

    groups: dict = {}
    for ex in pool:
        for key, value in ex.metadata.items():
            groups.setdefault((key, value), []).append(ex.ai_decision == ex.label)
    rows = []
    for (key, value), hits in groups.items():
        if len(hits) < min_subgroup:
            continue
        acc = float(np.mean(hits))
        if abs(acc - ai_acc) >= deviation:
            rows.append({"subgroup": f"{key}={value}", "accuracy": acc,
                         "count": len(hits)})
    rows.sort(key=lambda row: (-abs(row["accuracy"] - ai_acc), row["subgroup"]))

    vocab = ", ".join(dataset.manifest.label_vocabulary)
    return HumanAICard(
        ai_input="a task example's features and context",
        ai_output=f"one label from: {vocab}",
        average_ai_performance={"metric": "accuracy", "value": ai_acc},
        average_human_performance={"metric": "accuracy", "value": human_acc},
        subgroup_rows=rows[:max_rows],
    )


def card_from_file(path, dataset: StudyDataset | None = None) -> HumanAICard:
    """Card loaded from JSON; unspecified fields fall back to the computed
    card when a dataset is given."""
    import json

    with open(path, encoding="utf-8") as handle:
        doc = json.load(handle)
    if not isinstance(doc, dict):
        raise ValidationError("card file must hold a JSON object")
    known = set(HumanAICard.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ValidationError(f"unknown card fields: {sorted(unknown)}")
    base = build_card(dataset) if dataset is not None else HumanAICard()
    return dc_replace(base, **doc)


@dataclass
class Lesson:
    region_id: int
    representative_id: str
    gallery_ids: list
    decision: int
    description: str | None
    human_accuracy: float
    ai_accuracy: float

    def to_json(self) -> dict:
        return asdict(self)


def recommend_vector(regions: list, vector: np.ndarray):
    """Integration advice for a covered point, or None when no region
    contains it. The decision follows the integrator's majority-plus-
    nearest-tie rule; the reveal comes from the nearest containing region
    voting with the winning decision."""
    containing = []
    for reg in sorted(regions, key=lambda r: r.id):
        dist = scaled_distance(reg, vector)
        if dist < reg.radius:
            containing.append((dist, reg))
    if not containing:
        return None
    votes = sum(reg.decision for _, reg in containing)
    if 2 * votes > len(containing):
        decision = 1
    elif 2 * votes < len(containing):
        decision = 0
    else:
        _, nearest = min(containing, key=lambda pair: (pair[0], pair[1].id))
        decision = nearest.decision
    _, governing = min(((d, r) for d, r in containing if r.decision == decision),
                       key=lambda pair: (pair[0], pair[1].id))
    return {
        "decision": decision,
        "region_id": governing.id,
        "description": governing.description,
        "stats": dict(governing.stats),
    }


def _example_view(ex: TaskExample) -> dict:
    return {"id": ex.id, "text": ex.text, "metadata": dict(ex.metadata)}


class OnboardingSession:
    """One participant's pass through the onboarding flow."""

    def __init__(self, dataset: StudyDataset, regions: list, card: HumanAICard,
                 session_id: str = "session", show_recommendations: bool = True,
                 n_practice: int = 3, n_test: int = 5, seed: int = 0):
        if n_practice < 0 or n_test < 0:
            raise ValidationError("n_practice and n_test must be >= 0")
        self.dataset = dataset
        self.regions = sorted(regions, key=lambda reg: reg.id)
        self.card = card
        self.session_id = session_id
        self.options = {"show_recommendations": bool(show_recommendations),
                        "n_practice": int(n_practice), "n_test": int(n_test),
                        "seed": int(seed)}
        self.seed = int(seed)

        self._by_id = {ex.id: ex for ex in dataset.examples}
        self._lessons = self._build_lessons()
        self._phase_items = {
            "intro": [None],
            "practice": self._sample_examples("train", n_practice, _PRACTICE_TAG),
            "teaching": list(self._lessons),
            "second_pass": [],  # filled when teaching completes
            "testing": self._sample_examples("test", n_test, _TESTING_TAG),
        }
        self.phase = "intro"
        self._cursor = 0
        self._queue: list = []
        self._events: list = []
        self._answered: dict = {}
        self._served_at: dict = {}

    # -- construction ------------------------------------------------------

    def _build_lessons(self) -> list:
        loss = self.dataset.manifest.loss
        examples = self.dataset.examples
        joint = self.dataset.joint_matrix()
        optimal = np.array([optimal_decision(ex, loss) for ex in examples], dtype=int)
        lessons = []
        for region in self.regions:
            member_idx = np.flatnonzero(region_member_mask(region, joint))
            rep_pool = [int(i) for i in member_idx if optimal[i] == region.decision]
            if not rep_pool:
                raise ValidationError(
                    f"region {region.id} has no member whose optimal decision "
                    f"matches its decision {region.decision}")
            rng = np.random.default_rng([self.seed, _REPRESENTATIVE_TAG, region.id])
            rep_idx = int(rng.choice(np.asarray(rep_pool)))
            pool = [int(i) for i in member_idx if int(i) != rep_idx]
            g_rng = np.random.default_rng([self.seed, _GALLERY_TAG, region.id])
            take = min(GALLERY_SIZE, len(pool))
            gallery = [examples[int(i)].id
                       for i in g_rng.choice(np.asarray(pool), size=take,
                                             replace=False)] if take else []
            member_exs = [examples[int(i)] for i in member_idx]
            human_acc = float(np.mean([decision_loss(ex, 0, loss) == 0.0
                                       for ex in member_exs]))
            ai_acc = float(np.mean([decision_loss(ex, 1, loss) == 0.0
                                    for ex in member_exs]))
            lessons.append(Lesson(region_id=region.id,
                                  representative_id=examples[rep_idx].id,
                                  gallery_ids=gallery,
                                  decision=region.decision,
                                  description=region.description,
                                  human_accuracy=human_acc,
                                  ai_accuracy=ai_acc))
        return lessons

    def _sample_examples(self, split: str, count: int, tag: int) -> list:
        pool = self.dataset.split_examples(split) or list(self.dataset.examples)
        take = min(count, len(pool))
        if take == 0:
            return []
        rng = np.random.default_rng([self.seed, tag])
        picks = rng.choice(len(pool), size=take, replace=False)
        return [pool[int(i)] for i in picks]

    # -- flow --------------------------------------------------------------

    @property
    def lessons(self) -> list:
        return list(self._lessons)

    @property
    def second_pass_queue(self) -> list:
        return list(self._queue)

    def current_item_id(self) -> str:
        if self.phase == "done":
            raise SessionDone("session is complete")
        return f"{self.phase}:{self._cursor}"

    def next_item(self, now=None) -> dict:
        """The pending item payload; repeat calls return the same item."""
        item_id = self.current_item_id()
        if item_id not in self._served_at:
            self._served_at[item_id] = time.time() if now is None else float(now)
        return self._payload(item_id)

    def _payload(self, item_id: str) -> dict:
        phase = self.phase
        base = {"item_id": item_id, "phase": phase}
        if phase == "intro":
            base.update(kind="card", card=self.card.to_json(),
                        incomplete_fields=self.card.missing_fields())
            return base
        labels = list(self.dataset.manifest.label_vocabulary)
        if phase in ("teaching", "second_pass"):
            lesson = self._phase_items[phase][self._cursor]
            ex = self._by_id[lesson.representative_id]
            base.update(kind="lesson", lesson_index=self._cursor,
                        example=_example_view(ex), ai_decision=ex.ai_decision,
                        labels=labels)
            return base
        ex = self._phase_items[phase][self._cursor]
        base.update(kind="example", example=_example_view(ex), labels=labels)
        if phase == "testing":
            base["ai_decision"] = ex.ai_decision
            if self.options["show_recommendations"]:
                rec = recommend_vector(self.regions, joint_vector(ex))
                if rec is not None:
                    base["recommendation"] = rec
        return base

    def submit_answer(self, answer, used_ai: bool = False,
                      item_id: str | None = None, now=None) -> dict:
        if self.phase == "done":
            raise SessionDone("session is complete")
        current = f"{self.phase}:{self._cursor}"
        if item_id is not None and item_id != current:
            if item_id in self._answered:
                raise AlreadyAnswered(item_id, self._answered[item_id])
            raise ValidationError(
                f"item {item_id} is not pending (current item is {current})")

        answered_at = time.time() if now is None else float(now)
        served_at = self._served_at.setdefault(current, answered_at)
        phase = self.phase
        user_correct = ai_correct = None
        feedback: dict

        if phase == "intro":
            feedback = {"recorded": True}
        elif phase == "practice":
            ex = self._phase_items[phase][self._cursor]
            user_correct = answer == ex.label
            feedback = {"user_correct": user_correct, "label": ex.label}
        elif phase in ("teaching", "second_pass"):
            lesson = self._phase_items[phase][self._cursor]
            ex = self._by_id[lesson.representative_id]
            user_correct = answer == ex.label
            ai_correct = ex.ai_decision == ex.label
            feedback = {
                "user_correct": user_correct,
                "ai_correct": ai_correct,
                "label": ex.label,
                "reveal": {
                    "region_id": lesson.region_id,
                    "decision": lesson.decision,
                    "description": lesson.description,
                    "human_accuracy": lesson.human_accuracy,
                    "ai_accuracy": lesson.ai_accuracy,
                    "gallery": list(lesson.gallery_ids),
                },
            }
            if phase == "teaching" and not user_correct:
                self._queue.append(self._cursor)
        else:  # testing: scored silently, no reveal
            ex = self._phase_items[phase][self._cursor]
            user_correct = answer == ex.label
            ai_correct = ex.ai_decision == ex.label
            feedback = {"recorded": True}

        self._answered[current] = feedback
        self._events.append({
            "index": len(self._events),
            "item_id": current,
            "phase": phase,
            "answer": answer,
            "used_ai": bool(used_ai),
            "user_correct": user_correct,
            "ai_correct": ai_correct,
            "served_at": served_at,
            "answered_at": answered_at,
        })
        self._advance()
        return feedback

    def _advance(self) -> None:
        self._cursor += 1
        while self.phase != "done" and \
                self._cursor >= len(self._phase_items[self.phase]):
            following = PHASES[PHASES.index(self.phase) + 1]
            if following == "done":
                self.phase = "done"
                self._cursor = 0
                return
            if following == "second_pass":
                teaching = self._phase_items["teaching"]
                self._phase_items["second_pass"] = [teaching[i] for i in self._queue]
            self.phase = following
            self._cursor = 0

    # -- reporting ---------------------------------------------------------

    def summary(self) -> dict:
        scored = [e for e in self._events if e["phase"] in SCORED_PHASES]
        if not scored:
            return {"accuracy": None, "ai_reliance": None,
                    "mean_seconds_per_item": None}
        seconds = [max(0.0, min(e["answered_at"] - e["served_at"],
                                TIME_CAP_SECONDS)) for e in scored]
        return {
            "accuracy": float(np.mean([e["user_correct"] for e in scored])),
            "ai_reliance": float(np.mean([e["used_ai"] for e in scored])),
            "mean_seconds_per_item": float(np.mean(seconds)),
        }

    def transcript(self) -> dict:
        return {
            "session_id": self.session_id,
            "options": dict(self.options),
            "phase": self.phase,
            "second_pass_queue": list(self._queue),
            "events": [dict(event) for event in self._events],
            "summary": self.summary(),
        }


def replay_transcript(dataset: StudyDataset, regions: list, card: HumanAICard,
                      transcript: dict) -> OnboardingSession:
    """Rebuild a session purely from its transcript; with the recorded
    options, seed and timestamps the result reproduces the live state."""
    session = OnboardingSession(dataset, regions, card,
                                session_id=transcript["session_id"],
                                **transcript["options"])
    for event in transcript["events"]:
        session.next_item(now=event["served_at"])
        session.submit_answer(event["answer"], used_ai=event["used_ai"],
                              item_id=event["item_id"], now=event["answered_at"])
    return session
