"""
Fixed common vocabulary and caption target encoding.

OCR matching is case-insensitive exact match on tokenized words. A multi-word
OCR string ("new york") matches a contiguous word span; the span collapses to a
single caption position carrying the copy flag.
"""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

from common import BOS_ID, EOS_ID, PAD_ID, UNK_ID, special_tokens
from common.logger_config import get_logger
from data_prep.normalize_data import find_span, tokenize
from data_prep.scene_io import OcrToken

logger = get_logger(__name__)


class Vocabulary:
    def __init__(self, words: Sequence[str] = ()):
        self.id_to_word: List[str] = list(special_tokens) + [w for w in words if w not in special_tokens]
        self.word_to_id: Dict[str, int] = {w: i for i, w in enumerate(self.id_to_word)}
        if len(self.word_to_id) != len(self.id_to_word):
            raise ValueError("vocabulary words must be unique")

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_word == other.id_to_word

    @property
    def words(self) -> List[str]:
        """Non-special entries in id order"""
        return self.id_to_word[len(special_tokens):]

    def id_of(self, word: str) -> int:
        return self.word_to_id.get(word, UNK_ID)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(f"{w}\n" for w in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


@dataclass
class EncodedCaption:
    """
    `ids` starts with BOS and ends with EOS. `copy_flags[i]` lists the OCR indices
    whose text matches position i (empty when none).
    """
    ids: List[int]
    copy_flags: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        if not self.copy_flags:
            self.copy_flags = [[] for _ in self.ids]

    def __len__(self) -> int:
        return len(self.ids)


def build_vocab(references: Iterable[str], min_freq: int = 1) -> Vocabulary:
    """Words with corpus frequency >= min_freq, ordered by frequency desc then lexicographically"""
    if min_freq < 1:
        raise ValueError(f"min_freq must be >= 1, got {min_freq}")
    counts = Counter(word for caption in references for word in tokenize(caption))
    kept = [w for w, c in counts.items() if c >= min_freq and w not in special_tokens]
    kept.sort(key=lambda w: (-counts[w], w))
    logger.debug(f"vocabulary of {len(kept)} words from {sum(counts.values())} tokens")
    return Vocabulary(kept)


def ocr_word_sequences(ocr_tokens: Sequence[OcrToken]) -> List[List[str]]:
    return [tokenize(token.text) for token in ocr_tokens]


def match_ocr_spans(words: List[str], ocr_tokens: Sequence[OcrToken]) -> List[Tuple[int, int, List[int]]]:
    """
    Scans `words` left to right and returns (start, length, ocr indices) for each
    collapsed OCR position. At a given start the longest matching OCR span sets
    the extent. Every OCR token occurring anywhere in the caption is reported at
    the position whose extent holds the start of its occurrence, so a token
    nested in a longer one ("york" in "new york") is flagged with it.
    """
    sequences = ocr_word_sequences(ocr_tokens)
    starts = [
        {i for i in range(len(words)) if find_span(words, seq, i)} for seq in sequences
    ]
    matches = []
    i = 0
    while i < len(words):
        lengths = [len(seq) for j, seq in enumerate(sequences) if i in starts[j]]
        if not lengths:
            i += 1
            continue
        length = max(lengths)
        covered = range(i, i + length)
        matches.append((i, length, [j for j in range(len(sequences)) if any(s in starts[j] for s in covered)]))
        i += length
    return matches


def encode_for_targets(
        caption: str,
        ocr_tokens: Sequence[OcrToken],
        vocab: Vocabulary,
        max_len: int = 30,
) -> Tuple[EncodedCaption, EncodedCaption]:
    """
    Returns (masked, full). `masked` replaces OCR positions with UNK (visual
    captioner target); `full` keeps the words and flags the matching OCR indices
    (text captioner target). Both are BOS/EOS framed and truncated to `max_len` words.
    """
    words = tokenize(caption)
    spans = {start: (length, idxs) for start, length, idxs in match_ocr_spans(words, ocr_tokens)}

    masked_ids, full_ids, flags = [], [], []
    i = 0
    while i < len(words):
        if i in spans:
            length, idxs = spans[i]
            masked_ids.append(UNK_ID)
            full_ids.append(vocab.id_of(" ".join(words[i:i + length])) if length == 1 else UNK_ID)
            flags.append(list(idxs))
            i += length
        else:
            word_id = vocab.id_of(words[i])
            masked_ids.append(word_id)
            full_ids.append(word_id)
            flags.append([])
            i += 1

    masked_ids, full_ids, flags = masked_ids[:max_len], full_ids[:max_len], flags[:max_len]
    masked = EncodedCaption(ids=[BOS_ID] + masked_ids + [EOS_ID])
    full = EncodedCaption(ids=[BOS_ID] + full_ids + [EOS_ID], copy_flags=[[]] + flags + [[]])
    return masked, full


def decode(ids: Sequence[int], vocab: Vocabulary) -> List[str]:
    """Words of an id sequence, stopping at EOS and skipping BOS/PAD"""
    words = []
    for i in ids:
        if i == EOS_ID:
            break
        if i in (BOS_ID, PAD_ID):
            continue
        words.append(vocab.id_to_word[i] if 0 <= i < len(vocab) else special_tokens[UNK_ID])
    return words
