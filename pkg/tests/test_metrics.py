import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kuzureader.metrics import EvalReport, evaluate, levenshtein


def edit_script_oracle(a, b):
    """Brute force: smallest k admitting an edit script of cost k.

    Enumerates scripts by iterative deepening, entirely independent of
    the dynamic-programming implementation.
    """
    a, b = tuple(a), tuple(b)

    def within(x, y, budget):
        if budget < 0:
            return False
        if not x:
            return len(y) <= budget
        if not y:
            return len(x) <= budget
        if x[0] == y[0] and within(x[1:], y[1:], budget):
            return True
        return (within(x[1:], y[1:], budget - 1)   # substitute
                or within(x[1:], y, budget - 1)    # delete
                or within(x, y[1:], budget - 1))   # insert

    k = 0
    while not within(a, b, k):
        k += 1
    return k


def evaluate_oracle(pairs):
    """Second implementation of the report arithmetic, single pass."""
    total = 0
    errors = 0
    bad = 0
    for target, hyp in pairs:
        total += len(target)
        errors += edit_script_oracle(target, hyp)
        bad += int(tuple(target) != tuple(hyp))
    return errors / total, bad / len(pairs)


sequences = st.lists(st.integers(min_value=0, max_value=3), min_size=0, max_size=8)


class TestLevenshtein:
    def test_identity(self):
        assert levenshtein("abc", "abc") == 0
        assert levenshtein((), ()) == 0

    def test_empty_versus_length_n(self):
        assert levenshtein((), (1, 2, 3, 4)) == 4
        assert levenshtein("abcde", "") == 5

    def test_against_edit_script_enumeration(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            a = tuple(rng.integers(0, 4, size=rng.integers(0, 9)))
            b = tuple(rng.integers(0, 4, size=rng.integers(0, 9)))
            assert levenshtein(a, b) == edit_script_oracle(a, b)

    @given(sequences, sequences)
    @settings(max_examples=100, deadline=None)
    def test_symmetry_and_bounds(self, a, b):
        d = levenshtein(a, b)
        assert d == levenshtein(b, a)
        assert d <= max(len(a), len(b))
        assert d >= abs(len(a) - len(b))
        assert (d == 0) == (a == b)

    @given(sequences, sequences, sequences)
    @settings(max_examples=100, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


class TestEvaluate:
    def test_all_exact(self):
        report = evaluate([((1, 2), (1, 2)), ((3,), (3,))])
        assert report.cer == 0.0
        assert report.ser == 0.0
        assert report.total_target_chars == 3
        assert report.num_sequences == 2

    def test_one_exact_one_single_edit(self):
        report = evaluate([((1, 2, 3), (1, 2, 3)), ((4, 5, 6), (4, 9, 6))])
        assert report.ser == 0.5
        assert report.cer == pytest.approx(1 / 6)
        assert report.distances == [0, 1]

    def test_cer_can_exceed_one(self):
        report = evaluate([((1,), (2, 3, 4, 5))])
        assert report.cer == 4.0

    def test_against_second_implementation(self):
        rng = np.random.default_rng(1)
        pairs = []
        for _ in range(40):
            target = tuple(rng.integers(0, 5, size=rng.integers(1, 8)))
            hyp = tuple(rng.integers(0, 5, size=rng.integers(0, 8)))
            pairs.append((target, hyp))
        report = evaluate(pairs)
        cer, ser = evaluate_oracle(pairs)
        assert report.cer == pytest.approx(cer, abs=1e-12)
        assert report.ser == pytest.approx(ser, abs=1e-12)

    @given(st.lists(st.tuples(
        st.lists(st.integers(0, 3), min_size=1, max_size=6),
        st.lists(st.integers(0, 3), min_size=0, max_size=6)),
        min_size=1, max_size=10))
    @settings(max_examples=50, deadline=None)
    def test_permutation_invariance(self, pairs):
        base = evaluate(pairs)
        shuffled = evaluate(pairs[::-1])
        assert base.cer == shuffled.cer
        assert base.ser == shuffled.ser
        assert sorted(base.distances) == sorted(shuffled.distances)

    def test_empty_inputs_rejected(self):
        with pytest.raises(ValueError):
            evaluate([])
        with pytest.raises(ValueError):
            evaluate([((), (1, 2))])

    def test_json_roundtrip(self):
        report = evaluate([((1, 2, 3), (1, 2)), ((4,), (4,))])
        again = EvalReport.from_json(report.to_json())
        assert again == report

    def test_text_report_lines(self):
        report = evaluate([((1, 2), (1, 2))])
        lines = report.to_text().strip().splitlines()
        assert lines[0] == "cer=0.000000"
        assert lines[1] == "ser=0.000000"
        assert all("=" in line for line in lines)
