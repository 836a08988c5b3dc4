"""BM25 over a small pool of cached questions, min-max normalized per pool."""
import math
from collections import Counter
from cacherag.utils import tokenize

K1 = 1.2
B = 0.75


class BM25:
    def __init__(self, docs, k1: float = K1, b: float = B):
        self.k1, self.b = k1, b
        self.doc_freqs = []
        self.doc_lens = []
        self.df = Counter()
        for doc in docs:
            toks = tokenize(doc)
            freq = Counter(toks)
            self.doc_freqs.append(freq)
            self.doc_lens.append(len(toks))
            self.df.update(freq.keys())
        self.n = len(self.doc_freqs)
        self.avgdl = sum(self.doc_lens) / self.n if self.n else 0.0
        # Non-negative IDF variant
        self.idf = {
            t: math.log(1 + (self.n - df + 0.5) / (df + 0.5))
            for t, df in self.df.items()
        }

    def raw_scores(self, query: str) -> list[float]:
        q_toks = tokenize(query)
        scores = [0.0] * self.n
        if not q_toks:
            return scores
        for i, freq in enumerate(self.doc_freqs):
            dl = self.doc_lens[i]
            if dl == 0:
                continue
            s = 0.0
            for t in q_toks:
                tf = freq.get(t)
                if not tf:
                    continue
                denom = tf + self.k1 * (1 - self.b + self.b * dl / self.avgdl)
                s += self.idf[t] * tf * (self.k1 + 1) / denom
            scores[i] = s
        return scores

    def scores(self, query: str) -> list[float]:
        return normalize(self.raw_scores(query))


def normalize(raw) -> list[float]:
    """Min-max to [0, 1]. All-zero stays zero; all-equal non-zero becomes 1.0."""
    if not raw:
        return []
    hi, lo = max(raw), min(raw)
    if hi <= 0.0:
        return [0.0] * len(raw)
    if hi == lo:
        return [1.0] * len(raw)
    return [(s - lo) / (hi - lo) for s in raw]


def bm25_scores(query: str, docs) -> list[float]:
    docs = list(docs)
    if not docs:
        return []
    return BM25(docs).scores(query)


class SimilarityPool:
    """Relevance and symmetrized pairwise similarity over one candidate pool.

    pair(j, k) averages the normalized score of doc k for query j and of doc j
    for query k, both normalized over this pool. Rows are computed lazily and
    kept for the pool's lifetime.
    """

    def __init__(self, questions):
        self.questions = list(questions)
        self._bm25 = BM25(self.questions)
        self._rows = {}
        self.pairwise_evaluations = 0

    def __len__(self):
        return len(self.questions)

    def relevance(self, query: str) -> list[float]:
        return self._bm25.scores(query)

    def _row(self, j: int) -> list[float]:
        row = self._rows.get(j)
        if row is None:
            row = self._bm25.scores(self.questions[j])
            self._rows[j] = row
        return row

    def pair(self, j: int, k: int) -> float:
        self.pairwise_evaluations += 1
        return (self._row(j)[k] + self._row(k)[j]) / 2.0
