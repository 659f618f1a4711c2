"""
Input-token and label vocabularies.

Reserved input ids: 0 = padding, 1 = mask token, 2 = out-of-vocabulary.
Label ids start at 0 and index the multi-hot LabelVector.
"""

import logging
import os
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from config import Config
from ehr.codes import LabelMode
from ehr.trajectory import MedicalEvent, NowcastInstance
from utils.errors import ParseError, VocabularyError
from utils.io import atomic_write_text

logger = logging.getLogger(__name__)

RESERVED_TOKENS = (Config.PAD_TOKEN, Config.MASK_TOKEN, Config.UNK_TOKEN)
TOKENS_FILE = "tokens.tsv"
LABELS_FILE = "labels.tsv"


class Vocabulary:
    """Bidirectional token <-> id maps for model inputs and prediction labels"""

    def __init__(
        self,
        input_tokens: Sequence[str],
        label_tokens: Sequence[str],
        label_mode: LabelMode = LabelMode.CODE_FLAG,
    ):
        clash = set(input_tokens) & set(RESERVED_TOKENS)
        if clash:
            raise VocabularyError(f"tokens collide with reserved names: {sorted(clash)}")
        if len(set(input_tokens)) != len(input_tokens) or len(set(label_tokens)) != len(label_tokens):
            raise VocabularyError("duplicate tokens in vocabulary")

        self.label_mode = label_mode
        self.id_to_token: List[str] = list(RESERVED_TOKENS) + list(input_tokens)
        self.token_to_id: Dict[str, int] = {tok: i for i, tok in enumerate(self.id_to_token)}
        self.id_to_label: List[str] = list(label_tokens)
        self.label_to_id: Dict[str, int] = {tok: i for i, tok in enumerate(self.id_to_label)}

    @classmethod
    def build(cls, instances: Iterable[NowcastInstance], label_mode: LabelMode = LabelMode.CODE_FLAG) -> "Vocabulary":
        """Sorted vocabularies over the given (training) instances"""
        inputs, labels = set(), set()
        for inst in instances:
            for event in inst.history + inst.targets:
                inputs.add(event.input_token)
                if event.is_lab:
                    labels.add(event.label_token(label_mode))
        return cls(sorted(inputs), sorted(labels), label_mode)

    @property
    def size(self) -> int:
        return len(self.id_to_token)

    @property
    def num_labels(self) -> int:
        return len(self.id_to_label)

    def input_id(self, token: str) -> int:
        return self.token_to_id.get(token, Config.UNK_ID)

    def encode_events(self, events: Sequence[MedicalEvent]) -> Tuple[List[int], int]:
        """Token ids plus the number of events that fell back to UNK"""
        ids = [self.input_id(e.input_token) for e in events]
        return ids, sum(1 for i in ids if i == Config.UNK_ID)

    def label_vector(self, targets: Sequence[MedicalEvent]) -> Tuple[np.ndarray, int]:
        """Multi-hot LabelVector over the label vocabulary plus the count of unknown labels"""
        vector = np.zeros(self.num_labels, dtype=np.float64)
        unknown = 0
        for event in targets:
            idx = self.label_to_id.get(event.label_token(self.label_mode))
            if idx is None:
                unknown += 1
            else:
                vector[idx] = 1.0
        return vector, unknown

    def label_name(self, idx: int) -> str:
        if not 0 <= idx < self.num_labels:
            raise VocabularyError(f"label id {idx} outside [0, {self.num_labels})")
        return self.id_to_label[idx]

    # -- persistence -----------------------------------------------------

    def to_dict(self) -> Dict[str, object]:
        return {
            "label_mode": self.label_mode.value,
            "tokens": self.id_to_token[len(RESERVED_TOKENS):],
            "labels": list(self.id_to_label),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> "Vocabulary":
        return cls(payload["tokens"], payload["labels"], LabelMode(payload["label_mode"]))

    def save(self, directory: str) -> None:
        """Write tokens.tsv and labels.tsv (token<TAB>id per line)"""
        os.makedirs(directory, exist_ok=True)
        atomic_write_text(
            os.path.join(directory, TOKENS_FILE),
            "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self.id_to_token)),
        )
        atomic_write_text(
            os.path.join(directory, LABELS_FILE),
            "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self.id_to_label)),
        )

    @classmethod
    def load(cls, directory: str, label_mode: LabelMode = LabelMode.CODE_FLAG) -> "Vocabulary":
        tokens = _read_tsv(os.path.join(directory, TOKENS_FILE))
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise VocabularyError("token file does not start with the reserved tokens")
        labels = _read_tsv(os.path.join(directory, LABELS_FILE))
        return cls(tokens[len(RESERVED_TOKENS):], labels, label_mode)


def _read_tsv(path: str) -> List[str]:
    """Read token<TAB>id lines; ids must be exactly 0..n-1 in order"""
    tokens = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError("expected token<TAB>id", line_no=line_no, field="line")
            token, raw_id = parts
            if not raw_id.isdigit() or int(raw_id) != len(tokens):
                raise ParseError(f"expected id {len(tokens)}, got {raw_id!r}", line_no=line_no, field="id")
            tokens.append(token)
    return tokens
