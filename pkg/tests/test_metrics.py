import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uncfair.metrics import bin_index, confidence_and_correct, reliability
from uncfair.synthgen import make_rng


def brute_reliability(conf, correct, B):
    """Loop over samples and bins, (lo, hi] membership by direct comparison."""
    counts = [0] * B
    sconf = [0.0] * B
    sacc = [0.0] * B
    for c, ok in zip(conf, correct):
        for b in range(B):
            if b / B < c <= (b + 1) / B:
                counts[b] += 1
                sconf[b] += c
                sacc[b] += ok
                break
    ece = sum(abs(sacc[b] / counts[b] - sconf[b] / counts[b]) * counts[b] / len(conf)
              for b in range(B) if counts[b])
    return counts, ece


def test_perfect_confidence():
    rb = reliability(np.ones(5), np.ones(5, bool), 10)
    assert rb.counts[-1] == 5
    assert rb.accuracy[-1] == rb.confidence[-1] == 1.0
    assert rb.ece == 0.0
    assert rb.accuracy[0] is None and rb.counts[0] == 0


def test_two_sample_hand_case():
    rb = reliability([0.9, 0.9], [True, False], 10)
    assert rb.counts[8] == 2
    assert rb.accuracy[8] == 0.5 and rb.confidence[8] == 0.9
    assert rb.ece == pytest.approx(0.4, abs=1e-12)


def test_edges_go_to_lower_bin():
    np.testing.assert_array_equal(bin_index(np.array([0.1, 0.3, 0.5, 1.0, 0.1000001]), 10),
                                  [0, 2, 4, 9, 1])


@pytest.mark.parametrize("conf", [[0.0], [1.2], [-0.1]])
def test_out_of_range_confidence(conf):
    with pytest.raises(ValueError):
        reliability(conf, [True], 10)


def test_needs_a_bin():
    with pytest.raises(ValueError):
        reliability([0.5], [True], 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 20), st.booleans())
def test_matches_brute_force(seed, B, on_edges):
    r = make_rng(seed)
    conf = r.uniform(0.5, 1.0, 200)
    if on_edges:
        conf[::3] = np.ceil(conf[::3] * B) / B
    correct = r.random(200) < conf
    rb = reliability(conf, correct, B)
    counts, ece = brute_reliability(conf, correct, B)
    assert rb.counts.tolist() == counts
    assert rb.ece == pytest.approx(ece, abs=1e-12)
    assert rb.counts.sum() == 200 and 0 <= rb.ece <= 1
    perm = r.permutation(200)
    assert reliability(conf[perm], correct[perm], B).ece == pytest.approx(rb.ece, abs=1e-12)


def test_confidence_from_mean_probabilities():
    conf, ok = confidence_and_correct(np.array([[0.3, 0.7], [0.6, 0.4]]), [1, 1])
    np.testing.assert_array_equal(conf, [0.7, 0.6])
    np.testing.assert_array_equal(ok, [True, False])
