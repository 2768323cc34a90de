"""Word error rate from a unit-cost Levenshtein alignment."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class WerReport:
    wer: float
    sub: int
    dele: int
    ins: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.sub + self.dele + self.ins

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"wer": d["wer"], "sub": d["sub"], "del": d["dele"], "ins": d["ins"], "ref_len": d["ref_len"]}


def edit_counts(hyp: Sequence, ref: Sequence) -> tuple[int, int, int]:
    """(sub, del, ins) of one minimal alignment.

    The backtrace prefers match/substitution, then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        D[i][0] = i
    for j in range(1, m + 1):
        D[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            D[i][j] = min(
                D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]),
                D[i - 1][j] + 1,
                D[i][j - 1] + 1,
            )
    sub = dele = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and D[i][j] == D[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            sub += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and D[i][j] == D[i - 1][j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return sub, dele, ins


def wer(hyp: Sequence, ref: Sequence) -> WerReport:
    if len(ref) == 0:
        raise ValueError("reference must be non-empty")
    s, d, i = edit_counts(list(hyp), list(ref))
    return WerReport((s + d + i) / len(ref), s, d, i, len(ref))


def corpus_wer(reports: Iterable[WerReport]) -> WerReport:
    """Pool counts over utterances; the rate is total errors over total reference length."""
    reports = list(reports)
    if not reports:
        raise ValueError("no utterances to aggregate")
    s = sum(r.sub for r in reports)
    d = sum(r.dele for r in reports)
    i = sum(r.ins for r in reports)
    n = sum(r.ref_len for r in reports)
    return WerReport((s + d + i) / n, s, d, i, n)
