"""
Batch encoding: windowed history + appended mask token + right padding
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from config import Config
from ehr.codes import MaskTime
from ehr.trajectory import NowcastInstance, window
from ehr.vocab import Vocabulary

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Batch:
    """Model-ready arrays; every row has length N+1"""
    token_ids: np.ndarray       # int64 [B, N+1]
    times: np.ndarray           # float64 [B, N+1]
    pad_mask: np.ndarray        # bool [B, N+1], True on real tokens and the mask token
    labels: np.ndarray          # float64 [B, |labels|]
    mask_positions: np.ndarray  # int64 [B]

    @property
    def size(self) -> int:
        return int(self.token_ids.shape[0])

    def with_times(self, times: np.ndarray) -> "Batch":
        return Batch(self.token_ids, np.asarray(times, dtype=np.float64), self.pad_mask, self.labels, self.mask_positions)

    def take(self, rows: Sequence[int]) -> "Batch":
        rows = np.asarray(rows, dtype=np.int64)
        return Batch(
            self.token_ids[rows], self.times[rows], self.pad_mask[rows], self.labels[rows], self.mask_positions[rows]
        )

    def trimmed(self) -> "Batch":
        """Drop trailing columns that are padding in every row"""
        width = int(self.mask_positions.max()) + 1 if self.size else 1
        if width == self.token_ids.shape[1]:
            return self
        return Batch(
            self.token_ids[:, :width],
            self.times[:, :width],
            self.pad_mask[:, :width],
            self.labels,
            self.mask_positions,
        )


def encode_batch(
    instances: Sequence[NowcastInstance],
    vocab: Vocabulary,
    max_len: int,
    mask_time: MaskTime = MaskTime.TARGET,
) -> Batch:
    """
    Row layout: [tok_1 .. tok_n, MASK, PAD ...] with n = min(len(history), N).
    The mask token carries t_{k+1} (MaskTime.TARGET) or t_k (MaskTime.LAST);
    padding carries id 0 and time 0.
    """
    width = max_len + 1
    batch_size = len(instances)
    token_ids = np.full((batch_size, width), Config.PAD_ID, dtype=np.int64)
    times = np.zeros((batch_size, width), dtype=np.float64)
    pad_mask = np.zeros((batch_size, width), dtype=bool)
    labels = np.zeros((batch_size, vocab.num_labels), dtype=np.float64)
    mask_positions = np.zeros(batch_size, dtype=np.int64)

    unknown_tokens = 0
    unknown_labels = 0
    for row, inst in enumerate(instances):
        events = window(inst.history, max_len)
        n = len(events)
        ids, unk = vocab.encode_events(events)
        unknown_tokens += unk

        token_ids[row, :n] = ids
        times[row, :n] = [e.t for e in events]
        token_ids[row, n] = Config.MASK_ID
        times[row, n] = inst.target_time if mask_time is MaskTime.TARGET else inst.last_history_time
        pad_mask[row, : n + 1] = True
        mask_positions[row] = n

        labels[row], unk = vocab.label_vector(inst.targets)
        unknown_labels += unk

    if unknown_tokens:
        logger.warning("%d history events mapped to UNK", unknown_tokens)
    if unknown_labels:
        logger.warning("%d target labels are not in the label vocabulary and were dropped", unknown_labels)

    return Batch(token_ids, times, pad_mask, labels, mask_positions)


def usable_instances(instances: Sequence[NowcastInstance], vocab: Vocabulary) -> list:
    """Instances whose target group has at least one known label"""
    kept = [i for i in instances if vocab.label_vector(i.targets)[0].any()]
    dropped = len(instances) - len(kept)
    if dropped:
        logger.warning("Dropped %d instances with no in-vocabulary target label", dropped)
    return kept
