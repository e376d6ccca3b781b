import itertools

import pytest
from hypothesis import given, strategies as st

from ftsim.core import (DecodeStatus, ErrorVector, Flat, Hierarchical3x3, Word, detect_errors,
                        failure_witness, flip_bit, hamming_decode, hamming_encode,
                        parse_scheme, tolerance_limit, vote, vote_fmr_formula,
                        vote_hierarchical, vote_scheme)


# ---------------------------------------------------------------------------
# independent oracles

def oracle_encode(d):
    """Codeword string from the parity equations, written out by hand."""
    m1, m2, m3, m4 = (d >> 0) & 1, (d >> 1) & 1, (d >> 2) & 1, (d >> 3) & 1
    p1 = (m1 + m2 + m4) % 2
    p2 = (m1 + m3 + m4) % 2
    p3 = (m2 + m3 + m4) % 2
    p0 = (p1 + p2 + m1 + p3 + m2 + m3 + m4) % 2
    return int("".join(map(str, [p0, p1, p2, m1, p3, m2, m3, m4])), 2)


CODEBOOK = {d: oracle_encode(d) for d in range(16)}


def hamming_distance(a, b):
    return bin(a ^ b).count("1")


def oracle_decode(code):
    """Nearest-codeword decoding; ties at distance 2 mean a detected double error."""
    dists = sorted((hamming_distance(code, c), d) for d, c in CODEBOOK.items())
    best, data = dists[0]
    if best == 0:
        return data, "ok"
    if best == 1:
        return data, "single"
    return None, "double"


def popcount_vote(bits, k):
    return int(sum(bits) >= k)


# ---------------------------------------------------------------------------
# Hamming

def test_encode_displayed_pair():
    # 1010 -> m = (0, 1, 0, 1) -> p1=0 p2=1 p3=0, seven-bit weight 3 -> p0=1
    assert hamming_encode(0b1010) == 0b10100101
    assert hamming_encode(0b0000) == 0b00000000


def test_encode_matches_oracle():
    for d in range(16):
        assert hamming_encode(d) == CODEBOOK[d]


def test_code_distance_at_least_four():
    codes = [hamming_encode(d) for d in range(16)]
    assert len(set(codes)) == 16
    assert min(hamming_distance(a, b) for a, b in itertools.combinations(codes, 2)) >= 4


def test_decode_displayed_codeword():
    res = hamming_decode(0b00100101)
    assert res.data == 0b1010
    assert res.status is DecodeStatus.CORRECTED_SINGLE
    assert res.position == 0
    assert res.trusted


def test_decode_clean():
    res = hamming_decode(0)
    assert (res.data, res.status, res.position) == (0, DecodeStatus.NO_ERROR, None)


@pytest.mark.parametrize("d", range(16))
def test_single_flips_corrected(d):
    code = hamming_encode(d)
    assert hamming_decode(code).status is DecodeStatus.NO_ERROR
    for j in range(8):
        res = hamming_decode(flip_bit(code, j))
        assert (res.data, res.status, res.position) == (d, DecodeStatus.CORRECTED_SINGLE, j)


@pytest.mark.parametrize("d", range(16))
def test_double_flips_detected(d):
    code = hamming_encode(d)
    for i, j in itertools.combinations(range(8), 2):
        res = hamming_decode(flip_bit(flip_bit(code, i), j))
        assert res.status is DecodeStatus.DETECTED_DOUBLE
        assert not res.trusted


def test_decoder_agrees_with_nearest_codeword_on_all_bytes():
    for code in range(256):
        data, kind = oracle_decode(code)
        res = hamming_decode(code)
        expected = {"ok": DecodeStatus.NO_ERROR, "single": DecodeStatus.CORRECTED_SINGLE,
                    "double": DecodeStatus.DETECTED_DOUBLE}[kind]
        assert res.status is expected, code
        if data is not None:
            assert res.data == data


def test_flip_position_is_leftmost_first():
    assert flip_bit(0b10100101, 0) == 0b00100101
    assert flip_bit(0, 7) == 1
    with pytest.raises(ValueError):
        flip_bit(0, 8)


@pytest.mark.parametrize("bad", [-1, 16])
def test_encode_range(bad):
    with pytest.raises(ValueError):
        hamming_encode(bad)


# ---------------------------------------------------------------------------
# voting

def W(bits):
    return Word.from_bits(bits)


def test_vote_examples():
    w = W("1010")
    assert vote([w] * 5, 3) == w
    assert vote([W("1010"), W("1010"), W("1010"), W("0000"), W("1111")], 3) == W("1010")


def test_vote_single_bit_exhaustive():
    for bits in itertools.product((0, 1), repeat=5):
        words = [Word(b, 1) for b in bits]
        assert vote(words, 3).value == popcount_vote(bits, 3)


def test_formula_examples():
    one, zero = Word(1, 1), Word(0, 1)
    assert vote_fmr_formula(zero, zero, zero, one, one) == zero
    assert vote_fmr_formula(one, one, one, zero, zero) == one


def test_formula_equals_counting_voter_exhaustive():
    for bits in itertools.product((0, 1), repeat=5):
        words = [Word(b, 1) for b in bits]
        assert vote_fmr_formula(*words) == vote(words, 3)
        assert vote_fmr_formula(*words).value == popcount_vote(bits, 3)


@given(st.integers(1, 16).flatmap(
    lambda w: st.tuples(st.just(w), st.lists(st.integers(0, 2**w - 1), min_size=5, max_size=5))))
def test_formula_equals_counting_voter_multibit(args):
    width, values = args
    words = [Word(v, width) for v in values]
    assert vote_fmr_formula(*words) == vote(words, 3)


@given(st.lists(st.integers(0, 255), min_size=1, max_size=9), st.data())
def test_vote_is_per_bit_threshold(values, data):
    k = data.draw(st.integers(1, len(values)))
    out = vote([Word(v, 8) for v in values], k)
    for j in range(8):
        assert out.bit(j) == popcount_vote([(v >> j) & 1 for v in values], k)


def test_vote_argument_errors():
    with pytest.raises(ValueError):
        vote([], 1)
    with pytest.raises(ValueError):
        vote([Word(0, 4), Word(0, 8)], 1)
    with pytest.raises(ValueError):
        vote([Word(0, 4)] * 3, 4)
    with pytest.raises(ValueError):
        vote_fmr_formula(Word(0, 4), Word(0, 4), Word(0, 4), Word(0, 4), Word(0, 5))
    with pytest.raises(ValueError):
        vote_hierarchical([Word(0, 4)] * 8)


def test_hierarchical_examples():
    w = W("1011")
    assert vote_hierarchical([w] * 9) == w
    # two agreeing corrupt modules in one group: that group is outvoted
    bad = W("0100")
    assert vote_hierarchical([bad, bad, w] + [w] * 6) == w


def test_hierarchical_one_corrupt_per_group_exhaustive():
    w = W("1011")
    for a, b, c in itertools.product(range(16), repeat=3):
        mods = [Word(a, 4), w, w, w, Word(b, 4), w, w, w, Word(c, 4)]
        assert vote_hierarchical(mods) == w


# ---------------------------------------------------------------------------
# masking and failure

@pytest.mark.parametrize("n", [3, 5])
def test_flat_masking_exhaustive(n):
    scheme = Flat(n)
    limit = tolerance_limit(scheme)
    for golden in range(16):
        g = Word(golden, 4)
        for size in range(limit + 1):
            for subset in itertools.combinations(range(n), size):
                for corrupt in itertools.product(range(16), repeat=size):
                    outs = [g] * n
                    for idx, val in zip(subset, corrupt):
                        outs[idx] = Word(val, 4)
                    assert vote(outs, scheme.threshold) == g


def test_hierarchical_masking_three_faults():
    samples = [0b0000, 0b1111, 0b0101, 0b1001]
    for golden in (0b1011, 0b0110):
        g = Word(golden, 4)
        for subset in itertools.combinations(range(9), 3):
            # agreeing adversarial value plus a spread of independent values
            assignments = [[(~golden) & 0xF] * 3]
            assignments += [list(c) for c in itertools.product(samples, repeat=3)]
            for values in assignments:
                outs = [g] * 9
                for idx, val in zip(subset, values):
                    outs[idx] = Word(val, 4)
                assert vote_hierarchical(outs) == g


@pytest.mark.parametrize("n", [3, 5])
def test_failure_witness_breaks_scheme(n):
    golden = Word(hamming_encode(0b1010), 8)
    outs = failure_witness(Flat(n), golden)
    assert sum(o.value == 0 for o in outs) == tolerance_limit(Flat(n)) + 1
    assert vote(outs, Flat(n).threshold) != golden


def test_hierarchical_four_faults_can_break():
    g = Word(0b1011, 4)
    z = Word(0, 4)
    outs = [z, z, g, z, z, g, g, g, g]
    assert vote_hierarchical(outs) != g


def test_tolerance_limits():
    assert tolerance_limit(Flat(3)) == 1
    assert tolerance_limit(Flat(5)) == 2
    assert tolerance_limit(Hierarchical3x3()) == 3
    assert tolerance_limit(Flat(7)) == 3


def test_scheme_parsing():
    assert parse_scheme("tmr") == Flat(3)
    assert parse_scheme("FMR") == Flat(5)
    assert parse_scheme("nmr9") == Hierarchical3x3()
    assert parse_scheme("flat:7") == Flat(7)
    for bad in ("flat4", "flat:1", "qmr"):
        with pytest.raises(ValueError):
            parse_scheme(bad)


def test_vote_scheme_dispatch():
    g = Word(0xA5, 8)
    assert vote_scheme(Flat(5), [g, g, g, Word(0, 8), Word(0, 8)]) == g
    with pytest.raises(ValueError):
        vote_scheme(Flat(5), [g] * 3)


# ---------------------------------------------------------------------------
# error detection

def test_detect_errors_example():
    outs = [W("1010"), W("1010"), W("1010"), W("0000"), W("1111")]
    flags = detect_errors(W("1010"), outs)
    assert list(flags) == [False, False, False, True, True]
    assert flags.to_int() == 24
    assert flags.modules() == [4, 5]
    assert ErrorVector.from_int(24, 5) == flags


def test_detect_unanimous():
    w = W("0110")
    flags = detect_errors(w, [w] * 5)
    assert not flags.any() and flags.to_int() == 0 and len(flags) == 5


@given(st.lists(st.integers(0, 15), min_size=3, max_size=9))
def test_detection_sound_and_complete(values):
    outs = [Word(v, 4) for v in values]
    voted = vote(outs, len(outs) // 2 + 1)
    flags = detect_errors(voted, outs)
    assert len(flags) == len(outs)
    for f, o in zip(flags, outs):
        assert f == (o != voted)
    assert (not flags.any()) == all(o == voted for o in outs)


def test_detect_width_mismatch():
    with pytest.raises(ValueError):
        detect_errors(Word(0, 4), [Word(0, 8)])


def test_word_validation():
    with pytest.raises(ValueError):
        Word(16, 4)
    with pytest.raises(ValueError):
        Word(0, 65)
    assert str(Word.from_hex("0xA5")) == "10100101"
    assert Word.from_bits("1010").value == 10
