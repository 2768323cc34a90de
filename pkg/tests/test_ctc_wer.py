import functools
import itertools
import math

import numpy as np
import pytest

from acdr.ctc import BLANK, ctc_greedy_decode, ctc_loss, log_softmax, min_frames
from acdr.errors import InfeasibleTargetError
from acdr.wer import WerReport, corpus_wer, edit_counts, wer
from _gradcheck import fd_grad, rel_error


def collapse(path):
    out, prev = [], None
    for k in path:
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _paths(T, G):
    paths = np.array(list(itertools.product(range(G + 1), repeat=T)))
    return paths, [collapse(p) for p in paths.tolist()]


def brute_force_nll(logits, target):
    T, V = logits.shape
    paths, labels = _paths(T, V - 1)
    logp = log_softmax(logits)
    scores = logp[np.arange(T), paths].sum(axis=1)
    keep = np.array([lab == tuple(target) for lab in labels])
    return -float(np.logaddexp.reduce(scores[keep]))


def test_single_frame_single_label():
    logits = np.array([[0.3, 1.2, -0.5]])
    loss, _ = ctc_loss(logits, [1])
    assert loss == pytest.approx(-log_softmax(logits)[0, 1], abs=1e-14)


def test_two_frames_hand_sum():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((2, 3))
    p = np.exp(log_softmax(logits))
    a = 2
    total = p[0, a] * p[1, a] + p[0, a] * p[1, 0] + p[0, 0] * p[1, a]
    assert ctc_loss(logits, [a])[0] == pytest.approx(-math.log(total), abs=1e-13)


def test_matches_path_enumeration_on_random_instances():
    rng = np.random.default_rng(1)
    checked = 0
    for _ in range(200):
        T = int(rng.integers(1, 7))
        G = int(rng.integers(1, 4))
        L = int(rng.integers(0, 4))
        target = [int(x) for x in rng.integers(1, G + 1, size=L)]
        logits = 2.0 * rng.standard_normal((T, G + 1))
        if T < min_frames(target):
            with pytest.raises(InfeasibleTargetError):
                ctc_loss(logits, target)
            continue
        loss, _ = ctc_loss(logits, target)
        assert abs(loss - brute_force_nll(logits, target)) < 1e-9
        assert 0 < math.exp(-loss) <= 1
        checked += 1
    assert checked > 100


@pytest.mark.parametrize("target", [[1, 2], [2, 2], [3], [], [1, 3, 1]])
def test_gradient_matches_finite_differences(target):
    rng = np.random.default_rng(len(target))
    logits = rng.standard_normal((max(4, min_frames(target)), 4))
    _, g = ctc_loss(logits, target)
    num = fd_grad(lambda: ctc_loss(logits, target)[0], logits)
    assert rel_error(g, num) < 1e-4
    # softmax gradients sum to zero per frame
    np.testing.assert_allclose(g.sum(axis=1), 0.0, atol=1e-12)


def test_infeasible_and_invalid_targets():
    with pytest.raises(InfeasibleTargetError):
        ctc_loss(np.zeros((2, 3)), [1, 1])
    assert ctc_loss(np.zeros((3, 3)), [1, 1])[0] < np.inf
    with pytest.raises(ValueError):
        ctc_loss(np.zeros((3, 3)), [3])
    with pytest.raises(ValueError):
        ctc_loss(np.zeros((3, 3)), [0])


def test_min_frames():
    assert min_frames([]) == 0
    assert min_frames([1, 2, 3]) == 3
    assert min_frames([1, 1, 2, 2, 2]) == 8


def _one_hot(ids, V):
    z = np.full((len(ids), V), -5.0)
    z[np.arange(len(ids)), ids] = 5.0
    return z


def _reference_decode(ids):
    # rule by rule: drop runs, then blanks
    runs = [k for i, k in enumerate(ids) if i == 0 or ids[i - 1] != k]
    return [k for k in runs if k != BLANK]


@pytest.mark.parametrize("ids,expected", [
    ([1, 1, 0, 2], [1, 2]),
    ([0, 0, 0], []),
    ([1, 0, 1], [1, 1]),
    ([2, 2, 2, 0, 0, 2, 1, 1], [2, 2, 1]),
])
def test_greedy_decode_examples(ids, expected):
    assert ctc_greedy_decode(_one_hot(ids, 3)) == expected == _reference_decode(ids)


def test_greedy_decode_matches_reference_on_random_frames():
    rng = np.random.default_rng(2)
    for _ in range(200):
        ids = rng.integers(0, 4, size=int(rng.integers(1, 12))).tolist()
        assert ctc_greedy_decode(_one_hot(ids, 4)) == _reference_decode(ids)


def test_decode_then_score_is_exact_on_blank_augmented_rendering():
    rng = np.random.default_rng(3)
    for _ in range(50):
        ref = rng.integers(1, 5, size=int(rng.integers(1, 6))).tolist()
        ids = [BLANK]
        for y in ref:
            ids += [y] * int(rng.integers(1, 3)) + [BLANK] * int(rng.integers(1, 3))
        assert wer(ctc_greedy_decode(_one_hot(ids, 5)), ref).wer == 0.0


def _exhaustive_edit_min(hyp, ref):
    """Fewest edits over every edit script (keep/substitute, delete, insert), no DP table."""
    hyp, ref = tuple(hyp), tuple(ref)

    def scripts(i, j):
        if i == len(ref) and j == len(hyp):
            yield 0
            return
        if i < len(ref) and j < len(hyp):
            for c in scripts(i + 1, j + 1):
                yield c + (ref[i] != hyp[j])
        if i < len(ref):
            for c in scripts(i + 1, j):
                yield c + 1
        if j < len(hyp):
            for c in scripts(i, j + 1):
                yield c + 1

    return min(scripts(0, 0))


def test_wer_examples():
    r = wer([1, 3], [1, 2, 3])
    assert (r.sub, r.dele, r.ins) == (0, 1, 0) and r.wer == pytest.approx(1 / 3, abs=0)
    assert _exhaustive_edit_min([1, 3], [1, 2, 3]) == 1
    r = wer([5, 6], [5, 6])
    assert (r.wer, r.sub, r.dele, r.ins) == (0.0, 0, 0, 0)
    r = wer([], [1, 2, 3])
    assert (r.wer, r.dele) == (1.0, 3)
    with pytest.raises(ValueError):
        wer([1], [])


def test_edit_distance_matches_exhaustive_search():
    rng = np.random.default_rng(4)
    for _ in range(500):
        ref = rng.integers(1, 4, size=int(rng.integers(1, 7))).tolist()
        hyp = rng.integers(1, 4, size=int(rng.integers(0, 7))).tolist()
        r = wer(hyp, ref)
        assert r.errors == _exhaustive_edit_min(hyp, ref)
        # exact rational arithmetic of the rate
        assert r.wer == r.errors / len(ref)
        # swapping roles swaps deletions and insertions but keeps the total
        s, d, i = edit_counts(ref, hyp)
        assert s + d + i == r.errors


def test_tie_break_prefers_substitution():
    # [1,2] -> [2,1] costs 2: two substitutions rather than a deletion plus insertion
    assert edit_counts([2, 1], [1, 2]) == (2, 0, 0)


def test_corpus_wer_pools_counts():
    reports = [wer([1], [1, 2]), wer([1, 2, 3, 4], [1, 2, 3, 4]), wer([9, 9], [7])]
    pooled = corpus_wer(reports)
    # 1 + 0 + 2 errors over 2 + 4 + 1 words, not the mean of 0.5, 0, 2
    assert pooled.wer == 3 / 7
    assert (pooled.sub, pooled.dele, pooled.ins, pooled.ref_len) == (1, 1, 1, 7)
    assert pooled.to_dict() == {"wer": 3 / 7, "sub": 1, "del": 1, "ins": 1, "ref_len": 7}
    assert isinstance(pooled, WerReport)
    with pytest.raises(ValueError):
        corpus_wer([])
