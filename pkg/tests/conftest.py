"""Shared builders for the test suite."""

import numpy as np

from teamrules.dataset import DatasetManifest, LossSpec, StudyDataset, TaskExample

VOCAB = ("a", "b", "c")


def make_example(i, embedding, label="a", ai="a", human="a", prior=0,
                 ai_features=(), text=None, metadata=None, split="train"):
    return TaskExample(
        id=f"ex{i:04d}",
        embedding=np.asarray(embedding, dtype=float),
        ai_features=np.asarray(ai_features, dtype=float),
        label=label,
        ai_decision=ai,
        human_prediction=human,
        prior_reliance=prior,
        text=text,
        metadata=dict(metadata or {}),
        split=split,
    )


def make_dataset(examples, embedding_dim=None, ai_feature_dim=None,
                 vocab=VOCAB, normalized=False):
    if embedding_dim is None:
        embedding_dim = len(examples[0].embedding) if examples else 1
    if ai_feature_dim is None:
        ai_feature_dim = len(examples[0].ai_features) if examples else 0
    manifest = DatasetManifest(
        embedding_dim=embedding_dim,
        ai_feature_dim=ai_feature_dim,
        label_vocabulary=tuple(vocab),
        loss=LossSpec("zero_one"),
        normalized=normalized,
    )
    return StudyDataset(manifest=manifest, examples=list(examples))


def random_dataset(rng, n, d=3, k=0, vocab=VOCAB, with_text=False):
    """Random dataset with independent labels / predictions / priors."""
    examples = []
    for i in range(n):
        examples.append(make_example(
            i,
            embedding=rng.normal(size=d),
            ai_features=rng.normal(size=k),
            label=vocab[rng.integers(len(vocab))],
            ai=vocab[rng.integers(len(vocab))],
            human=vocab[rng.integers(len(vocab))],
            prior=int(rng.integers(2)),
            text=f"sample text {i}" if with_text else None,
            split="train" if rng.random() < 0.7 else "test",
        ))
    return make_dataset(examples, embedding_dim=d, ai_feature_dim=k, vocab=vocab)
