"""Corpus text metrics: BLEU-1..4, ROUGE-L, METEOR, CIDEr, embedding sim.

All operate on (candidate, references) pairs.  Divergences from the full
reference tools, chosen to stay dependency-free and deterministic:
METEOR uses exact unigram matches only (no stems or synonyms), and CIDEr
is the plain variant (no length penalty) with idf = log(N / (1 + df)).
"""

from __future__ import annotations

import math
import re
import urllib.request
import json as _json
from collections import Counter

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

# exact minimal-chunk search gives up beyond this many explored states
_METEOR_SEARCH_BUDGET = 250_000


class MetricError(Exception):
    pass


def tokenize(text: str, mode: str = "default") -> list[str]:
    """Unicode-lowercase; punctuation becomes separate tokens.

    mode="whitespace" skips punctuation splitting for cross-tool comparison.
    """
    if mode == "whitespace":
        return text.lower().split()
    return _TOKEN_RE.findall(text.lower())


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _as_token_pairs(pairs):
    out = []
    for cand, refs in pairs:
        c = tokenize(cand) if isinstance(cand, str) else list(cand)
        rs = [tokenize(r) if isinstance(r, str) else list(r) for r in refs]
        if not rs:
            raise MetricError("every candidate needs at least one reference")
        out.append((c, rs))
    if not out:
        raise MetricError("empty corpus")
    return out


# -- BLEU ---------------------------------------------------------------------


def bleu_corpus(pairs, max_n: int = 4) -> dict[int, float]:
    """Corpus BLEU: clipped counts summed over pairs, no smoothing."""
    pairs = _as_token_pairs(pairs)
    clipped = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    c_len = 0
    r_len = 0
    for cand, refs in pairs:
        c_len += len(cand)
        r_len += min((len(r) for r in refs),
                     key=lambda L: (abs(L - len(cand)), L))
        for n in range(1, max_n + 1):
            cand_counts = _ngrams(cand, n)
            if not cand_counts:
                continue
            max_ref = Counter()
            for r in refs:
                for gram, cnt in _ngrams(r, n).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            totals[n] += sum(cand_counts.values())
            clipped[n] += sum(min(cnt, max_ref[gram]) for gram, cnt in cand_counts.items())
    if c_len == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    out = {}
    for n in range(1, max_n + 1):
        precisions = []
        for k in range(1, n + 1):
            p = clipped[k] / totals[k] if totals[k] else 0.0
            precisions.append(p)
        if any(p == 0.0 for p in precisions):
            out[n] = 0.0
        else:
            out[n] = bp * math.exp(sum(math.log(p) for p in precisions) / n)
    return out


def bleu_sentence(cand, refs, max_n: int = 4, smooth: bool = True) -> dict[int, float]:
    """Single-pair BLEU; add-one smoothing on every order when selected."""
    (cand, refs), = _as_token_pairs([(cand, refs)])
    c_len = len(cand)
    r_len = min((len(r) for r in refs), key=lambda L: (abs(L - c_len), L))
    if c_len == 0:
        return {n: 0.0 for n in range(1, max_n + 1)}
    bp = 1.0 if c_len > r_len else math.exp(1.0 - r_len / c_len)
    out = {}
    for n in range(1, max_n + 1):
        precisions = []
        for k in range(1, n + 1):
            cand_counts = _ngrams(cand, k)
            max_ref = Counter()
            for r in refs:
                for gram, cnt in _ngrams(r, k).items():
                    if cnt > max_ref[gram]:
                        max_ref[gram] = cnt
            clip = sum(min(cnt, max_ref[g]) for g, cnt in cand_counts.items())
            tot = sum(cand_counts.values())
            if smooth:
                precisions.append((clip + 1) / (tot + 1))
            else:
                precisions.append(clip / tot if tot else 0.0)
        if any(p == 0.0 for p in precisions):
            out[n] = 0.0
        else:
            out[n] = bp * math.exp(sum(math.log(p) for p in precisions) / n)
    return out


# -- ROUGE-L -------------------------------------------------------------------


def _lcs_len(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_pair(cand, refs) -> float:
    best = 0.0
    for r in refs:
        lcs = _lcs_len(cand, r)
        if lcs == 0 or not cand or not r:
            continue
        p = lcs / len(cand)
        rec = lcs / len(r)
        if p + rec > 0:
            best = max(best, 2 * p * rec / (p + rec))
    return best


def rouge_l(pairs) -> float:
    pairs = _as_token_pairs(pairs)
    return sum(rouge_l_pair(c, rs) for c, rs in pairs) / len(pairs)


# -- METEOR ---------------------------------------------------------------------


def _max_matches(cand, ref) -> int:
    cc, rc = Counter(cand), Counter(ref)
    return sum(min(cnt, rc[w]) for w, cnt in cc.items())


def _chunk_count(pairs_sorted) -> int:
    chunks = 0
    prev = None
    for ci, ri in pairs_sorted:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


class _SearchBudgetExceeded(Exception):
    pass


def _min_chunks_exact(cand, ref, m: int) -> int | None:
    """Minimal chunk count over all maximum matchings, or None on budget.

    A chunk is a contiguous block: equal spans of candidate and reference.
    Deepening on the chunk count keeps the search tiny: ask whether some
    maximum matching fits in k blocks for k = lower bound, lower bound + 1,
    ..., and stop one short of the greedy answer, which failure then proves
    optimal.  Refusals are remembered per (position, used references) with
    the block allowance they refused, so later iterations skip them.
    """
    n_c, n_r = len(cand), len(ref)
    ref_pos: dict[str, list[int]] = {}
    word_bits: dict[str, int] = {}
    for j, w in enumerate(ref):
        ref_pos.setdefault(w, []).append(j)
        word_bits[w] = word_bits.get(w, 0) | (1 << j)

    # run[i][j]: length of the common run starting at cand[i] / ref[j]
    run = [[0] * (n_r + 1) for _ in range(n_c + 1)]
    for i in range(n_c - 1, -1, -1):
        row, nxt = run[i], run[i + 1]
        for j in range(n_r - 1, -1, -1):
            if cand[i] == ref[j]:
                row[j] = nxt[j + 1] + 1
    # longest run starting at candidate position >= i, for chunk lower bounds
    tail_run = [0] * (n_c + 1)
    for i in range(n_c - 1, -1, -1):
        longest = max(run[i][:n_r], default=0)
        tail_run[i] = longest if longest > tail_run[i + 1] else tail_run[i + 1]

    rc = Counter(ref)
    need = []  # (required matches, ref bits, ref count, cand suffix counts)
    for w, cnt in Counter(cand).items():
        want = min(cnt, rc[w])
        if want:
            left = [0] * (n_c + 1)
            for i in range(n_c - 1, -1, -1):
                left[i] = left[i + 1] + (1 if cand[i] == w else 0)
            need.append((want, word_bits[w], rc[w], left))

    greedy = _min_chunks_greedy(cand, ref, m)
    floor = -(-m // tail_run[0]) if tail_run[0] else greedy
    if greedy <= floor:
        return greedy
    budget = [_METEOR_SEARCH_BUDGET]
    refused: dict[int, int] = {}  # state -> largest allowance shown impossible

    def fits(i, used_mask, matched, allowance):
        """Can some maximum matching finish from here within `allowance` blocks?"""
        if matched == m:
            return True
        while i < n_c and not (word_bits.get(cand[i], 0) & ~used_mask):
            i += 1  # nothing left to pair this word with
        if i >= n_c or allowance <= 0:
            return False
        if -(-(m - matched) // tail_run[i]) > allowance:
            return False
        key = (i << n_r) | used_mask
        if refused.get(key, -1) >= allowance:
            return False
        if budget[0] <= 0:
            raise _SearchBudgetExceeded
        budget[0] -= 1
        feasible = True
        for want, bits, total, left in need:
            taken = (bits & used_mask).bit_count()
            if taken >= want:
                continue
            free = total - taken
            ahead = left[i]
            if taken + (ahead if ahead < free else free) < want:
                feasible = False  # some word can no longer be satisfied
                break
        if feasible:
            spans = []
            for j in ref_pos[cand[i]]:
                if not (used_mask >> j) & 1:
                    spans.append((run[i][j], j))
            spans.sort(reverse=True)
            for max_len, j in spans:
                if max_len > m - matched:
                    max_len = m - matched
                bits = 0
                length = 0
                while length < max_len and not (used_mask >> (j + length)) & 1:
                    bits |= 1 << (j + length)
                    length += 1
                while length > 0:
                    if fits(i + length, used_mask | bits, matched + length,
                            allowance - 1):
                        return True
                    length -= 1
                    bits &= ~(1 << (j + length))
            if fits(i + 1, used_mask, matched, allowance):  # cand[i] unmatched
                return True
        if refused.get(key, -1) < allowance:
            refused[key] = allowance
        return False

    try:
        for k in range(floor, greedy):
            if fits(0, 0, 0, k):
                return k
        return greedy
    except (_SearchBudgetExceeded, RecursionError):
        return None


def _min_chunks_greedy(cand, ref, m: int) -> int:
    """Deterministic fallback: prefer extending runs, then earliest position."""
    used = [False] * len(ref)
    need = Counter()
    cc, rc = Counter(cand), Counter(ref)
    for w, cnt in cc.items():
        need[w] = min(cnt, rc[w])
    taken = Counter()
    aligned = []
    last_j = None
    for i, w in enumerate(cand):
        if taken[w] >= need[w]:
            last_j = None
            continue
        pick = None
        if last_j is not None and last_j + 1 < len(ref) and ref[last_j + 1] == w \
                and not used[last_j + 1]:
            pick = last_j + 1
        else:
            for j, rw in enumerate(ref):
                if rw == w and not used[j]:
                    pick = j
                    break
        if pick is None:
            last_j = None
            continue
        used[pick] = True
        taken[w] += 1
        aligned.append((i, pick))
        last_j = pick
    return _chunk_count(aligned)


def meteor_pair(cand, refs) -> float:
    best = 0.0
    for ref in refs:
        m = _max_matches(cand, ref)
        if m == 0 or not cand or not ref:
            continue
        chunks = _min_chunks_exact(cand, ref, m)
        if chunks is None:
            chunks = _min_chunks_greedy(cand, ref, m)
        p = m / len(cand)
        r = m / len(ref)
        fmean = 10.0 * p * r / (r + 9.0 * p)
        penalty = 0.5 * (chunks / m) ** 3
        best = max(best, fmean * (1.0 - penalty))
    return best


def meteor(pairs) -> float:
    pairs = _as_token_pairs(pairs)
    return sum(meteor_pair(c, rs) for c, rs in pairs) / len(pairs)


# -- CIDEr -----------------------------------------------------------------------


def cider(pairs, max_n: int = 4) -> float:
    """Plain CIDEr in [0, 10]; needs >= 2 corpus items for a document set."""
    pairs = _as_token_pairs(pairs)
    if len(pairs) < 2:
        raise MetricError("cider needs a corpus of at least 2 items for idf")
    n_docs = len(pairs)
    idf = [None] * (max_n + 1)
    for n in range(1, max_n + 1):
        df = Counter()
        for _, refs in pairs:
            seen = set()
            for r in refs:
                seen.update(_ngrams(r, n).keys())
            for g in seen:
                df[g] += 1
        idf[n] = {g: math.log(n_docs / (1 + cnt)) for g, cnt in df.items()}
    total = 0.0
    for cand, refs in pairs:
        per_n = []
        for n in range(1, max_n + 1):
            table = idf[n]
            cvec = {g: cnt * table.get(g, math.log(n_docs))
                    for g, cnt in _ngrams(cand, n).items()}
            cnorm = math.sqrt(sum(v * v for v in cvec.values()))
            sims = []
            for r in refs:
                rvec = {g: cnt * table.get(g, math.log(n_docs))
                        for g, cnt in _ngrams(r, n).items()}
                rnorm = math.sqrt(sum(v * v for v in rvec.values()))
                if cnorm == 0.0 or rnorm == 0.0:
                    sims.append(0.0)
                    continue
                # idf appears squared in the dot product, so terms are >= 0
                dot = sum(cv * rvec[g] for g, cv in cvec.items() if g in rvec)
                sims.append(max(0.0, dot / (cnorm * rnorm)))
            per_n.append(sum(sims) / len(sims))
        total += 10.0 * sum(per_n) / max_n
    return total / n_docs


# -- embedding similarity ----------------------------------------------------------


class HttpEmbeddingProvider:
    """POSTs {"sentences": [...]} and expects {"vectors": [[...], ...]}."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout
        self.label = url

    def __call__(self, sentences: list[str]) -> list[list[float]]:
        body = _json.dumps({"sentences": sentences}).encode()
        req = urllib.request.Request(self.url, data=body,
                                     headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            doc = _json.loads(resp.read().decode())
        vectors = doc["vectors"]
        if len(vectors) != len(sentences):
            raise MetricError("embedding provider returned wrong vector count")
        return vectors


class LexicalFallbackProvider:
    """tf-idf bag-of-words vectors; the neural model itself is out of scope."""

    label = "lexical-fallback"

    def __init__(self, corpus_sentences: list[str]):
        docs = [set(tokenize(s)) for s in corpus_sentences]
        df = Counter(w for d in docs for w in d)
        n = max(1, len(docs))
        self._idf = {w: math.log((1 + n) / (1 + cnt)) + 1.0 for w, cnt in df.items()}
        self._vocab = {w: i for i, w in enumerate(sorted(self._idf))}

    def __call__(self, sentences: list[str]) -> list[list[float]]:
        out = []
        for s in sentences:
            vec = [0.0] * len(self._vocab)
            for w, cnt in Counter(tokenize(s)).items():
                if w in self._vocab:
                    vec[self._vocab[w]] = cnt * self._idf[w]
            out.append(vec)
        return out


def _cosine(a, b) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def embedding_similarity(pairs, provider=None) -> dict:
    """Corpus mean of (1 + cos)/2, best reference per pair.

    Returns {"score": float | None, "provider": label}; score is None when
    the configured provider is unreachable (callers render the cell absent).
    """
    pairs = list(pairs)
    if not pairs:
        raise MetricError("empty corpus")
    sentences = []
    for cand, refs in pairs:
        sentences.append(cand)
        sentences.extend(refs)
    if provider is None:
        provider = LexicalFallbackProvider(sentences)
    try:
        vectors = provider(sentences)
    except Exception:
        return {"score": None, "provider": getattr(provider, "label", "provider")}
    scores = []
    pos = 0
    for cand, refs in pairs:
        cvec = vectors[pos]
        rvecs = vectors[pos + 1:pos + 1 + len(refs)]
        pos += 1 + len(refs)
        best = max((1.0 + _cosine(cvec, rv)) / 2.0 for rv in rvecs)
        scores.append(best)
    return {"score": sum(scores) / len(scores),
            "provider": getattr(provider, "label", "provider")}
