"""Corpus NED and SubER for subtitle documents.

SubER here is a TER-style rate over word + break token streams:

    (word edits + break edits + shifts) / (reference words + reference breaks)

Shifts are searched greedily. A shift moves a contiguous hypothesis block (at most
``MAX_SHIFT_LEN`` tokens) that equals a reference phrase next to where that phrase
sits in the current alignment. The best move is taken
only when it lowers the remaining edit distance by at least 2, so that each
shift (cost 1) pays for itself.
Tokens can only match (or be shifted onto) reference tokens whose cue time
spans overlap once widened by ``tolerance_ms``.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .srt import SrtDocument, SubtitleCue

MAX_SHIFT_LEN = 10
DEFAULT_TOLERANCE_MS = 1000
MIN_SHIFT_GAIN = 2
BREAK_TEXT = "<b>"


class EmptyCorpus(ValueError):
    pass


class EmptyReference(ValueError):
    pass


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Unit-cost Levenshtein distance over characters or any token sequence."""
    # a shared prefix or suffix never changes the distance
    lo = 0
    while lo < len(a) and lo < len(b) and a[lo] == b[lo]:
        lo += 1
    hi_a, hi_b = len(a), len(b)
    while hi_a > lo and hi_b > lo and a[hi_a - 1] == b[hi_b - 1]:
        hi_a -= 1
        hi_b -= 1
    a, b = a[lo:hi_a], b[lo:hi_b]
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def normalized_edit_distance(a: Sequence, b: Sequence) -> float:
    """ED / MaxL, with 0 for two empty inputs."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 0.0
    return edit_distance(a, b) / longest


def ned_corpus(pairs: Sequence[tuple[str, str]]) -> float:
    """1 - mean(ED / MaxL) over (hypothesis, reference) pairs."""
    if not pairs:
        raise EmptyCorpus("NED needs at least one sample")
    total = math.fsum(normalized_edit_distance(h, r) for h, r in pairs)
    return 1.0 - total / len(pairs)


# --- tokenization -----------------------------------------------------------

_CJK_RANGES = (
    (0x1100, 0x11FF),    # Hangul Jamo
    (0x2E80, 0x2FDF),    # radicals
    (0x3000, 0x303F),    # CJK symbols and punctuation
    (0x3040, 0x30FF),    # kana
    (0x3100, 0x31FF),
    (0x3400, 0x4DBF),    # ext A
    (0x4E00, 0x9FFF),    # unified ideographs
    (0xAC00, 0xD7AF),    # Hangul syllables
    (0xF900, 0xFAFF),
    (0xFE30, 0xFE4F),
    (0xFF00, 0xFFEF),    # full/half width forms
    (0x20000, 0x3FFFF),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def split_words(text: str) -> list[str]:
    """Whitespace split, with every CJK character standing alone.

    Non-CJK runs next to CJK characters become their own word, so
    "那么我是谁?" gives six tokens and "iPhone手机" gives three.
    """
    words = []
    for chunk in text.split():
        run = []
        for ch in chunk:
            if is_cjk(ch):
                if run:
                    words.append("".join(run))
                    run = []
                words.append(ch)
            else:
                run.append(ch)
        if run:
            words.append("".join(run))
    return words


def normalize_text(text: str) -> str:
    """Lowercase and drop trailing punctuation from each whitespace word."""
    words = []
    for word in text.lower().split():
        word = word.rstrip("".join(
            ch for ch in set(word) if unicodedata.category(ch).startswith("P")))
        if word:
            words.append(word)
    return " ".join(words)


@dataclass(frozen=True)
class Token:
    text: str
    is_break: bool = False
    start: Optional[int] = None
    end: Optional[int] = None

    @property
    def key(self) -> tuple[bool, str]:
        return self.is_break, self.text

    def __repr__(self) -> str:
        return "Break" if self.is_break else f"Word({self.text})"


def Word(text: str, start: Optional[int] = None, end: Optional[int] = None) -> Token:
    return Token(text, False, start, end)


def Break(start: Optional[int] = None, end: Optional[int] = None) -> Token:
    return Token(BREAK_TEXT, True, start, end)


@dataclass(frozen=True)
class TokenizedSubtitleStream:
    tokens: tuple[Token, ...] = ()

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def spans(self) -> list[Optional[tuple[int, int]]]:
        return [None if t.start is None else (t.start, t.end) for t in self.tokens]

    @property
    def n_words(self) -> int:
        return sum(not t.is_break for t in self.tokens)

    @property
    def n_breaks(self) -> int:
        return sum(t.is_break for t in self.tokens)


def cue_words(cue: SubtitleCue, normalize: bool = False) -> list[str]:
    words = []
    for line in cue.lines:
        words.extend(split_words(normalize_text(line) if normalize else line))
    return words


def tokenize_with_breaks(doc: SrtDocument, normalize: bool = False) -> TokenizedSubtitleStream:
    tokens = []
    for cue in doc.cues:
        span = (cue.start.millis, cue.end.millis)
        tokens.extend(Word(w, *span) for w in cue_words(cue, normalize))
        tokens.append(Break(*span))
    return TokenizedSubtitleStream(tuple(tokens))


# --- SubER ------------------------------------------------------------------

@dataclass(frozen=True)
class SuberCounts:
    word_edits: int = 0
    break_edits: int = 0
    shifts: int = 0
    ref_words: int = 0
    ref_breaks: int = 0

    @property
    def edits(self) -> int:
        return self.word_edits + self.break_edits + self.shifts

    @property
    def ref_length(self) -> int:
        return self.ref_words + self.ref_breaks

    @property
    def value(self) -> float:
        if self.ref_length == 0:
            raise EmptyReference("SubER is undefined for an empty reference")
        return self.edits / self.ref_length

    @property
    def percent(self) -> float:
        return 100.0 * self.value

    def __add__(self, other: "SuberCounts") -> "SuberCounts":
        return SuberCounts(self.word_edits + other.word_edits,
                           self.break_edits + other.break_edits,
                           self.shifts + other.shifts,
                           self.ref_words + other.ref_words,
                           self.ref_breaks + other.ref_breaks)


def time_compatible(h: Token, r: Token, tolerance_ms: int = DEFAULT_TOLERANCE_MS) -> bool:
    if h.start is None or r.start is None:
        return True
    return h.start - tolerance_ms <= r.end and r.start <= h.end + tolerance_ms


def match_matrix(hyp: Sequence[Token], ref: Sequence[Token],
                 tolerance_ms: int = DEFAULT_TOLERANCE_MS) -> np.ndarray:
    """Boolean n x m matrix: hyp[i] may align to ref[j] at zero cost."""
    out = np.zeros((len(hyp), len(ref)), dtype=bool)
    by_key: dict[tuple[bool, str], list[int]] = {}
    for j, r in enumerate(ref):
        by_key.setdefault(r.key, []).append(j)
    for i, h in enumerate(hyp):
        for j in by_key.get(h.key, ()):
            out[i, j] = time_compatible(h, ref[j], tolerance_ms)
    return out


def _advance(prev: np.ndarray, match_rows: np.ndarray, keep: bool = False):
    """Extend a Levenshtein DP row over further hyp tokens.

    The insertion recurrence cur[j] = min(cur[j], cur[j-1] + 1) is a running
    minimum of cur[j] - j, shifted back by j.
    """
    cols = np.arange(prev.shape[0])
    rows = [prev] if keep else None
    for row in match_rows:
        cur = np.empty_like(prev)
        cur[0] = prev[0] + 1
        cur[1:] = np.minimum(prev[1:] + 1, prev[:-1] + (~row))
        cur = np.minimum.accumulate(cur - cols) + cols
        if keep:
            rows.append(cur)
        prev = cur
    return np.array(rows) if keep else prev


def _forward_table(match: np.ndarray) -> np.ndarray:
    """table[i, j] = distance(hyp[:i], ref[:j])."""
    return _advance(np.arange(match.shape[1] + 1), match, keep=True)


def _backward_table(match: np.ndarray) -> np.ndarray:
    """table[i, j] = distance(hyp[i:], ref[j:])."""
    return _forward_table(match[::-1, ::-1])[::-1, ::-1]


def _align(match: np.ndarray, table: Optional[np.ndarray] = None
           ) -> list[tuple[str, Optional[int], Optional[int]]]:
    """Backtrace one optimal alignment as (op, hyp index, ref index), in order."""
    if table is None:
        table = _forward_table(match)
    i, j = match.shape
    ops = []
    while i > 0 or j > 0:
        d = table[i, j]
        if i > 0 and j > 0 and match[i - 1, j - 1] and table[i - 1, j - 1] == d:
            ops.append(("match", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and table[i - 1, j - 1] + 1 == d:
            ops.append(("sub", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and table[i - 1, j] + 1 == d:
            ops.append(("del", i - 1, None))
            i -= 1
        else:
            ops.append(("ins", None, j - 1))
            j -= 1
    ops.reverse()
    return ops


def _anchor_gaps(ops, n_ref: int) -> list[tuple[int, int]]:
    """For each ref index, the range of hyp gaps where it is currently anchored."""
    gaps = [(0, 0)] * n_ref
    consumed = 0
    lo = 0
    for op, i, j in ops:
        if op == "del":
            consumed += 1
            continue
        hi = i if op in ("match", "sub") else consumed
        gaps[j] = (lo, hi)
        if op in ("match", "sub"):
            consumed += 1
        lo = consumed
    return gaps


def apply_shift(seq: Sequence, start: int, length: int, gap: int) -> list:
    """Move seq[start:start+length] to gap ``gap`` (a position in the original seq)."""
    block = list(seq[start:start + length])
    rest = list(seq[:start]) + list(seq[start + length:])
    pos = gap if gap <= start else gap - length
    return rest[:pos] + block + rest[pos:]


def shift_candidates(hyp: Sequence[Token], ref: Sequence[Token], match: np.ndarray, ops,
                     max_len: int = MAX_SHIFT_LEN):
    """Yield (start, length, gap, ref_start) moves of hyp blocks onto matching ref phrases.

    A block qualifies when it equals a ref phrase token by token (time
    constraint included) and is not already aligned to that phrase. It may
    land where the phrase's first token is anchored in the current alignment,
    or where the token just past the phrase is anchored.
    """
    anchors = _anchor_gaps(ops, len(ref))
    aligned = {(i, j) for op, i, j in ops if op == "match"}
    seen = set()
    n, m = match.shape

    def anchor_range(j):
        if j >= m:
            return range(n, n + 1)
        lo, hi = anchors[j]
        return range(lo, hi + 1)

    for i in range(n):
        for j in np.flatnonzero(match[i]):
            j = int(j)
            for length in range(1, min(max_len, n - i, m - j) + 1):
                if not match[i + length - 1, j + length - 1]:
                    break
                if all((i + k, j + k) in aligned for k in range(length)):
                    continue
                for gap in sorted(set(anchor_range(j)).union(anchor_range(j + length))):
                    if i <= gap <= i + length:
                        continue
                    if (i, length, gap) not in seen:
                        seen.add((i, length, gap))
                        yield i, length, gap, j


def _path_columns(ops, n_hyp: int) -> tuple[np.ndarray, np.ndarray]:
    """Min and max DP column the alignment path visits on each hyp row boundary."""
    lo = np.full(n_hyp + 1, np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.zeros(n_hyp + 1, dtype=np.int64)
    i = j = 0
    lo[0] = hi[0] = 0
    for op, _, _ in ops:
        if op != "ins":
            i += 1
        if op != "del":
            j += 1
        lo[i] = min(lo[i], j)
        hi[i] = max(hi[i], j)
    return lo, hi


def _shifted_distances(moves, match: np.ndarray, forward: np.ndarray, backward: np.ndarray,
                       path: tuple[np.ndarray, np.ndarray], margin: int) -> np.ndarray:
    """Upper bounds on the edit distance after each move, in move order.

    Only hyp rows lo..hi-1 between the block and its destination change, so each
    move restarts from the prefix row forward[lo] and closes against the suffix
    row backward[hi]. The changed rows are evaluated on a band of ref columns
    around the current path and the target phrase; restricting paths to the band
    can only overestimate, and the band covers everything on short streams.
    Moves with the same number of changed rows run as one batch.
    """
    n_cols = forward.shape[1]
    path_lo, path_hi = path
    groups: dict[int, list[tuple]] = {}
    for idx, (start, length, gap, target) in enumerate(moves):
        lo, hi = min(start, gap), max(start + length, gap)
        order = apply_shift(range(lo, hi), start - lo, length, gap - lo)
        left = min(path_lo[lo], path_lo[hi], target) - margin - (hi - lo)
        right = max(path_hi[lo], path_hi[hi], target + length) + margin + (hi - lo)
        groups.setdefault(hi - lo, []).append((idx, lo, hi, order, left, right))
    out = np.empty(len(moves), dtype=np.int64)
    for width, items in groups.items():
        idx = np.array([it[0] for it in items])
        band = min(n_cols, max(it[5] - it[4] + 1 for it in items))
        first = np.clip([it[4] for it in items], 0, n_cols - band)
        cols = first[:, None] + np.arange(band)
        rows = np.take_along_axis(forward[[it[1] for it in items]], cols, axis=1)
        orders = np.array([it[3] for it in items])
        # cost of entering band column k diagonally is set by ref token cols[k] - 1
        ref_idx = np.maximum(cols[:, 1:] - 1, 0)
        offs = np.arange(band)
        for r in range(width):
            hit = np.take_along_axis(match[orders[:, r]], ref_idx, axis=1)
            cur = np.empty_like(rows)
            # band column 0 is reached from above only (exact when the band starts at 0)
            cur[:, 0] = rows[:, 0] + 1
            cur[:, 1:] = np.minimum(rows[:, 1:] + 1, rows[:, :-1] + (~hit))
            rows = np.minimum.accumulate(cur - offs, axis=1) + offs
        tail = np.take_along_axis(backward[[it[2] for it in items]], cols, axis=1)
        out[idx] = np.min(rows + tail, axis=1)
    return out


def suber_streams(hyp: Sequence[Token], ref: Sequence[Token],
                  tolerance_ms: int = DEFAULT_TOLERANCE_MS,
                  max_shift_len: int = MAX_SHIFT_LEN, band_margin: int = 16) -> SuberCounts:
    """SubER counts for two token streams.

    Each round scores every candidate shift on a banded DP, takes the best one
    and re-checks its gain with the exact distance before applying it.
    """
    hyp = list(hyp)
    ref = list(ref)
    if not ref:
        raise EmptyReference("reference stream has no tokens")
    shifts = 0
    match = match_matrix(hyp, ref, tolerance_ms)
    forward = _forward_table(match)
    distance = int(forward[-1, -1])
    while distance >= MIN_SHIFT_GAIN:
        ops = _align(match, forward)
        moves = list(shift_candidates(hyp, ref, match, ops, max_shift_len))
        if not moves:
            break
        bounds = _shifted_distances(moves, match, forward, _backward_table(match),
                                    _path_columns(ops, len(hyp)), band_margin)
        k = int(np.argmin(bounds))
        if distance - bounds[k] < MIN_SHIFT_GAIN:
            break
        moved = apply_shift(range(len(hyp)), *moves[k][:3])
        new_forward = _forward_table(match[moved])
        # banded bound never underestimates, but keep the acceptance rule exact
        if distance - new_forward[-1, -1] < MIN_SHIFT_GAIN:
            break
        hyp = [hyp[t] for t in moved]
        match = match[moved]
        forward = new_forward
        distance = int(forward[-1, -1])
        shifts += 1

    word_edits = break_edits = 0
    for op, i, j in _align(match, forward):
        if op == "match":
            continue
        touches_break = ((i is not None and hyp[i].is_break)
                         or (j is not None and ref[j].is_break))
        if touches_break:
            break_edits += 1
        else:
            word_edits += 1
    n_breaks = sum(t.is_break for t in ref)
    return SuberCounts(word_edits, break_edits, shifts, len(ref) - n_breaks, n_breaks)


def suber(hyp: SrtDocument, ref: SrtDocument, tolerance_ms: int = DEFAULT_TOLERANCE_MS,
          normalize: bool = False) -> SuberCounts:
    """SubER edit counts of ``hyp`` against ``ref``.

    A reference without cues (negative sample) is scored as a lone break token,
    and an empty hypothesis against it as a lone break too, so a correct
    rejection scores 0 and any predicted text is penalized.
    """
    h = list(tokenize_with_breaks(hyp, normalize).tokens)
    r = list(tokenize_with_breaks(ref, normalize).tokens)
    if not ref.cues:
        r = [Break()]
        if not hyp.cues:
            h = [Break()]
    return suber_streams(h, r, tolerance_ms)


# --- cue pairing and corpus report -----------------------------------------

def _overlap(a: SubtitleCue, b: SubtitleCue) -> int:
    return min(a.end.millis, b.end.millis) - max(a.start.millis, b.start.millis)


def pair_cues(hyp: SrtDocument, ref: SrtDocument
              ) -> list[tuple[Optional[SubtitleCue], Optional[SubtitleCue]]]:
    """Greedy maximum-time-overlap matching of hypothesis to reference cues.

    Unmatched cues pair with None. Pairs come back ordered by the start time of
    the reference cue (or the hypothesis cue when unmatched).
    """
    candidates = []
    for hi, h in enumerate(hyp.cues):
        for ri, r in enumerate(ref.cues):
            ov = _overlap(h, r)
            if ov > 0:
                candidates.append((-ov, hi, ri))
    candidates.sort()
    used_h, used_r = set(), set()
    pairs = []
    for _, hi, ri in candidates:
        if hi not in used_h and ri not in used_r:
            used_h.add(hi)
            used_r.add(ri)
            pairs.append((hyp.cues[hi], ref.cues[ri]))
    pairs.extend((None, r) for ri, r in enumerate(ref.cues) if ri not in used_r)
    pairs.extend((h, None) for hi, h in enumerate(hyp.cues) if hi not in used_h)

    def order(pair):
        h, r = pair
        anchor = r if r is not None else h
        return (anchor.start.millis, anchor.end.millis, r is None)

    pairs.sort(key=order)
    return pairs


def _cue_text(cue: Optional[SubtitleCue], normalize: bool) -> str:
    if cue is None:
        return ""
    lines = [normalize_text(x) if normalize else x for x in cue.lines]
    return " ".join(lines)


def aligned_texts(hyp: SrtDocument, ref: SrtDocument, normalize: bool = False) -> tuple[str, str]:
    """Concatenate paired cue texts so that both sides follow the same cue order."""
    pairs = pair_cues(hyp, ref)

    def join(cues):
        return " ".join(t for t in (_cue_text(c, normalize) for c in cues) if t)

    return join(h for h, _ in pairs), join(r for _, r in pairs)


@dataclass(frozen=True)
class SampleScore:
    sample_id: str
    ed: int
    max_len: int
    suber: SuberCounts

    @property
    def ned_ratio(self) -> float:
        return self.ed / self.max_len if self.max_len else 0.0


@dataclass(frozen=True)
class EvalReport:
    ned: float
    suber_percent: float
    per_sample: tuple[SampleScore, ...] = field(default_factory=tuple)

    @property
    def totals(self) -> SuberCounts:
        total = SuberCounts()
        for s in self.per_sample:
            total = total + s.suber
        return total


def score_sample(sample_id: str, hyp: SrtDocument, ref: SrtDocument,
                 tolerance_ms: int = DEFAULT_TOLERANCE_MS, normalize: bool = False) -> SampleScore:
    h_text, r_text = aligned_texts(hyp, ref, normalize)
    return SampleScore(sample_id, edit_distance(h_text, r_text), max(len(h_text), len(r_text)),
                       suber(hyp, ref, tolerance_ms, normalize))


def build_report(scores: Sequence[SampleScore]) -> EvalReport:
    if not scores:
        raise EmptyCorpus("no samples to evaluate")
    ned = 1.0 - math.fsum(s.ned_ratio for s in scores) / len(scores)
    totals = SuberCounts()
    for s in scores:
        totals = totals + s.suber
    return EvalReport(ned, totals.percent, tuple(scores))


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def format_report_table(report: EvalReport) -> str:
    header = ["sample", "ed", "max_len", "word_edits", "break_edits", "shifts",
              "ref_words", "ref_breaks", "suber_percent"]
    rows = ["\t".join(header)]
    for s in report.per_sample:
        c = s.suber
        rows.append("\t".join([s.sample_id, str(s.ed), str(s.max_len), str(c.word_edits),
                               str(c.break_edits), str(c.shifts), str(c.ref_words),
                               str(c.ref_breaks), _fmt(c.percent)]))
    t = report.totals
    rows.append("\t".join(["TOTAL", "", "", str(t.word_edits), str(t.break_edits),
                           str(t.shifts), str(t.ref_words), str(t.ref_breaks),
                           _fmt(report.suber_percent)]))
    rows.append(f"NED\t{_fmt(report.ned)}")
    return "\n".join(rows) + "\n"


def format_report_kv(report: EvalReport) -> str:
    t = report.totals
    items = [
        ("samples", len(report.per_sample)),
        ("ned", _fmt(report.ned)),
        ("suber_percent", _fmt(report.suber_percent)),
        ("word_edits", t.word_edits),
        ("break_edits", t.break_edits),
        ("shifts", t.shifts),
        ("ref_words", t.ref_words),
        ("ref_breaks", t.ref_breaks),
    ]
    return "".join(f"{k}={v}\n" for k, v in items)
