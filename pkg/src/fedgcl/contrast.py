"""Negative-sample stack, contrasting-pair coupling, and training objectives.

Training is streaming (batch size 1), so negatives cannot come from the
batch: each client keeps a capacity-bounded FIFO of previously released
views and samples label-differing entries from it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graphs import Dataset
from .privacy import PerturbedView, PrivacyBudget, perturb


@dataclass
class StackEntry:
    view: PerturbedView
    labels: np.ndarray
    label_mask: np.ndarray
    source_id: int


class NegativeStack:
    """FIFO of released views with labels; pushing past capacity evicts the oldest."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._entries: deque[StackEntry] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[StackEntry]:
        """Snapshot, oldest first."""
        return list(self._entries)

    def clear(self) -> None:
        self._entries.clear()

    def push(self, view: PerturbedView, labels, label_mask, source_id: int) -> None:
        self._entries.append(
            StackEntry(
                view=view,
                labels=np.asarray(labels, dtype=np.int64).reshape(-1),
                label_mask=np.asarray(label_mask, dtype=np.int64).reshape(-1),
                source_id=int(source_id),
            )
        )


@dataclass
class ContrastBatch:
    """One positive pair plus its negative views (duplicates permitted)."""

    view0: PerturbedView
    view1: PerturbedView
    negatives: list[StackEntry] = field(default_factory=list)


def stack_init(stack: NegativeStack, dataset: Dataset, k: int, eps1: float, rng) -> None:
    """Seed the stack with views of the dataset's last k graphs, oldest first."""
    if k >= stack.capacity:
        raise ValueError(f"k ({k}) must be smaller than the stack capacity ({stack.capacity})")
    if k > len(dataset):
        raise ValueError(f"k ({k}) exceeds dataset size ({len(dataset)})")
    stack.clear()
    if k == 0:
        return
    budget = PrivacyBudget(eps1)
    for g in dataset.graphs[-k:]:
        stack.push(perturb(g, budget, rng), g.labels, g.label_mask, g.id)


def stack_push(stack: NegativeStack, view: PerturbedView, labels, label_mask, source_id: int) -> None:
    stack.push(view, labels, label_mask, source_id)


def _labels_differ(entry: StackEntry, target_labels, target_mask) -> bool:
    both = (entry.label_mask == 1) & (np.asarray(target_mask) == 1)
    return bool(np.any(entry.labels[both] != np.asarray(target_labels)[both]))


def sample_negatives(
    stack: NegativeStack, target_labels, target_mask, k: int, rng
) -> tuple[list[StackEntry], bool]:
    """Draw k entries (with replacement) whose labels differ from the target's.

    Candidates differ on at least one mutually observed task. If none exist
    the draw falls back to the whole stack; the returned flag records that.
    """
    entries = stack.entries()
    if not entries:
        raise RuntimeError("cannot sample negatives from an empty stack")
    candidates = [e for e in entries if _labels_differ(e, target_labels, target_mask)]
    fallback = not candidates
    pool = entries if fallback else candidates
    picks = rng.integers(0, len(pool), size=k)
    return [pool[i] for i in picks], fallback


def info_nce(h0: Tensor, h1: Tensor, h_negs, tau: float) -> Tensor:
    """Contrastive loss for one instance.

    The positive score is cos(h0, h1); each negative scores cos(h_neg, h1).
    Computed as logsumexp(scores / tau) - pos / tau, which is the stable form
    of -log(exp(pos/tau) / (exp(pos/tau) + sum exp(neg/tau))).
    """
    h_negs = list(h_negs)
    if not h_negs:
        raise ValueError("info_nce requires at least one negative")
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    s_pos = ad.cosine_similarity(h0, h1)
    scores = [s_pos] + [ad.cosine_similarity(hn, h1) for hn in h_negs]
    row = ad.transpose(ad.concat_rows(scores))
    lse = ad.logsumexp_row(ad.scalar_scale(row, 1.0 / tau))
    return ad.add(lse, ad.scalar_scale(s_pos, -1.0 / tau))


def info_nce_batch(instances, tau: float) -> Tensor:
    """Mean per-instance contrastive loss over a batch of (h0, h1, negatives)."""
    losses = [info_nce(h0, h1, negs, tau) for h0, h1, negs in instances]
    if not losses:
        raise ValueError("empty batch")
    return ad.mean_rows(ad.concat_rows(losses))


def classification_loss(logits0: Tensor, logits1: Tensor, labels, mask) -> Tensor:
    """Half the summed view-wise BCE over observed tasks; 0 if fully masked."""
    if np.asarray(mask).sum() == 0:
        return Tensor([[0.0]])
    b0 = ad.bce_with_logits(logits0, labels, mask)
    b1 = ad.bce_with_logits(logits1, labels, mask)
    return ad.scalar_scale(ad.add(b0, b1), 0.5)


def classification_loss_batch(instances) -> Tensor:
    """Mean over instances with at least one observed task (others drop out)."""
    losses = [
        classification_loss(l0, l1, y, m)
        for l0, l1, y, m in instances
        if np.asarray(m).sum() > 0
    ]
    if not losses:
        return Tensor([[0.0]])
    return ad.mean_rows(ad.concat_rows(losses))


def combined_loss(loss_contrastive: Tensor, loss_classification: Tensor, gamma: float) -> Tensor:
    """Weighted objective: gamma * contrastive + classification."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return ad.add(ad.scalar_scale(loss_contrastive, gamma), loss_classification)
