"""
Caption scores: BLEU, CIDEr, Div-n, SelfCIDEr and Cover Ratio.

Captions are compared after `tokenize` (lowercased, punctuation stripped).
CIDEr here is the plain TF-IDF cosine form (no length penalty, no clipping)
with smoothed idf, idf(g) = ln((1 + N) / (1 + df(g))) + 1, so a corpus with a
single reference set still gives non-zero weights.
"""
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from data_prep.normalize_data import contains_phrase, tokenize
from data_prep.scene_io import OcrToken

NGram = Tuple[str, ...]


def precook(words: Sequence[str], n: int = 4) -> Counter:
    """Counts of every k-gram, k = 1..n"""
    counts = Counter()
    for k in range(1, n + 1):
        for i in range(len(words) - k + 1):
            counts[tuple(words[i:i + k])] += 1
    return counts


def ngrams(words: Sequence[str], n: int) -> List[NGram]:
    return [tuple(words[i:i + n]) for i in range(len(words) - n + 1)]


# ----------------------------------------------------------------------
# BLEU
# ----------------------------------------------------------------------

def bleu(candidate: str, references: Sequence[str], max_n: int = 4) -> float:
    """
    Sentence BLEU: clipped n-gram precisions, geometric mean, brevity penalty
    against the closest reference length. No smoothing, so any zero precision
    gives 0.
    """
    if not references:
        raise ValueError("bleu needs at least one reference")
    test = tokenize(candidate)
    if not test:
        return 0.0
    refs = [tokenize(r) for r in references]

    max_counts: Dict[NGram, int] = {}
    for ref in refs:
        for gram, count in precook(ref, max_n).items():
            max_counts[gram] = max(max_counts.get(gram, 0), count)

    correct = [0] * max_n
    for gram, count in precook(test, max_n).items():
        correct[len(gram) - 1] += min(max_counts.get(gram, 0), count)
    guess = [max(0, len(test) - k + 1) for k in range(1, max_n + 1)]
    if any(c == 0 for c in correct):
        return 0.0

    log_precision = sum(math.log(c / g) for c, g in zip(correct, guess)) / max_n
    ref_len = min((abs(len(r) - len(test)), len(r)) for r in refs)[1]
    brevity = 1.0 if len(test) >= ref_len else math.exp(1 - ref_len / len(test))
    return brevity * math.exp(log_precision)


# ----------------------------------------------------------------------
# CIDEr
# ----------------------------------------------------------------------

@dataclass
class DocumentFrequency:
    """n-gram document frequencies; one document per image (its reference set)"""
    counts: Counter = field(default_factory=Counter)
    n_docs: int = 0
    n: int = 4

    @classmethod
    def from_references(cls, reference_sets: Sequence[Sequence[str]], n: int = 4) -> "DocumentFrequency":
        df = cls(n=n)
        for refs in reference_sets:
            df.counts.update({gram for ref in refs for gram in precook(tokenize(ref), n)})
            df.n_docs += 1
        return df

    def idf(self, gram: NGram) -> float:
        return math.log((1.0 + self.n_docs) / (1.0 + self.counts.get(gram, 0))) + 1.0


def _tfidf(words: Sequence[str], df: DocumentFrequency) -> Tuple[List[Dict[NGram, float]], List[float]]:
    vec: List[Dict[NGram, float]] = [{} for _ in range(df.n)]
    for gram, tf in precook(words, df.n).items():
        vec[len(gram) - 1][gram] = tf * df.idf(gram)
    norms = [math.sqrt(sum(v * v for v in order.values())) for order in vec]
    return vec, norms


def cider_similarity(candidate: str, reference: str, df: DocumentFrequency) -> float:
    """
    10 x mean over n-gram orders of the TF-IDF cosine. Orders where neither
    caption has an n-gram are left out of the mean.
    """
    vec_c, norm_c = _tfidf(tokenize(candidate), df)
    vec_r, norm_r = _tfidf(tokenize(reference), df)
    values = []
    for k in range(df.n):
        if norm_c[k] == 0.0 and norm_r[k] == 0.0:
            continue
        if norm_c[k] == 0.0 or norm_r[k] == 0.0:
            values.append(0.0)
            continue
        dot = sum(w * vec_r[k].get(gram, 0.0) for gram, w in vec_c[k].items())
        values.append(dot / (norm_c[k] * norm_r[k]))
    return 10.0 * float(np.mean(values)) if values else 0.0


class CiderScorer:
    """
    Accumulates (candidate, references) pairs per image, then scores them with
    document frequencies taken over every image's reference set.
    """

    def __init__(self, n: int = 4):
        self.n = n
        self.candidates: List[str] = []
        self.references: List[List[str]] = []

    def __iadd__(self, pair: Tuple[str, Sequence[str]]) -> "CiderScorer":
        candidate, refs = pair
        self.candidates.append(candidate)
        self.references.append(list(refs))
        return self

    def __len__(self) -> int:
        return len(self.candidates)

    def document_frequency(self) -> DocumentFrequency:
        return DocumentFrequency.from_references(self.references, self.n)

    def compute_score(self, df: Optional[DocumentFrequency] = None) -> Tuple[float, List[float]]:
        """(corpus mean, per-image scores); each image averages over its references"""
        df = df or self.document_frequency()
        scores = []
        for candidate, refs in zip(self.candidates, self.references):
            sims = [cider_similarity(candidate, ref, df) for ref in refs]
            scores.append(float(np.mean(sims)) if sims else 0.0)
        return (float(np.mean(scores)) if scores else 0.0), scores


def cider(candidates: Sequence[str], reference_sets: Sequence[Sequence[str]], n: int = 4) -> float:
    scorer = CiderScorer(n)
    for candidate, refs in zip(candidates, reference_sets):
        scorer += (candidate, refs)
    return scorer.compute_score()[0]


# ----------------------------------------------------------------------
# diversity
# ----------------------------------------------------------------------

def div_n(captions: Sequence[str], n: int) -> float:
    """Distinct n-grams over total n-grams, pooled across captions"""
    grams = [g for caption in captions for g in ngrams(tokenize(caption), n)]
    return len(set(grams)) / len(grams) if grams else 0.0


def self_cider_from_kernel(kernel: np.ndarray) -> Optional[float]:
    """-log(lambda_max / sum(lambda)) / log K for a symmetric similarity kernel; None for K < 2"""
    size = kernel.shape[0]
    if size < 2:
        return None
    eigenvalues = np.clip(np.linalg.eigvalsh((kernel + kernel.T) / 2.0), 0.0, None)
    total = float(eigenvalues.sum())
    if total <= 0.0:
        return None
    score = -math.log(float(eigenvalues.max()) / total) / math.log(size)
    return float(min(1.0, max(0.0, score)))


def self_cider(captions: Sequence[str], df: DocumentFrequency) -> Optional[float]:
    size = len(captions)
    kernel = np.eye(size)
    for i in range(size):
        for j in range(i + 1, size):
            kernel[i, j] = kernel[j, i] = cider_similarity(captions[i], captions[j], df) / 10.0
    return self_cider_from_kernel(kernel)


def cover_ratio(captions: Sequence[str], ocr_tokens: Sequence[OcrToken]) -> Optional[float]:
    """Share of distinct OCR token texts mentioned by any caption; None without tokens"""
    texts = {tuple(tokenize(t.text)) for t in ocr_tokens}
    texts.discard(())
    if not texts:
        return None
    pooled = [tokenize(c) for c in captions]
    covered = [t for t in texts if any(contains_phrase(words, list(t)) for words in pooled)]
    return len(covered) / len(texts)
