import numpy as np
import pytest

from vfltables.dealer import TRUNC_MASK_BITS, Dealer, DealerError
from vfltables.ring import signed_sum_with_wraps, to_signed

TAG = b"session1"


def total(parts):
    return np.sum(parts, axis=0, dtype=np.uint64)


def xor_total(parts):
    out = np.zeros_like(parts[0])
    for p in parts:
        out ^= p
    return out


@pytest.mark.parametrize("n", [2, 3, 5])
def test_arith_triples_satisfy_product(n):
    d = Dealer(n, seed=1)
    mats = d.deal("arith-triple", TAG, 0, 1000)
    a, b, c = (total([getattr(m, k) for m in mats]) for k in "abc")
    assert np.array_equal(c, a * b)
    # independent Python-int check on a sample
    for x, y, z in zip(a[:50].tolist(), b[:50].tolist(), c[:50].tolist()):
        assert z == (x * y) % (1 << 64)


def test_bool_triples():
    mats = Dealer(4, 2).deal("bool-triple", TAG, 0, 500)
    x, y, z = (xor_total([getattr(m, k) for m in mats]) for k in "xyz")
    assert np.array_equal(z, x & y)


def test_trunc_pairs_consistent():
    n, bits = 4, 20
    mats = Dealer(n, 3).deal("trunc-pair", TAG, 0, 2000, bits=bits)
    r_shares = [m.r for m in mats]
    r = to_signed(total(r_shares))
    assert np.all(np.abs(r) <= 2**TRUNC_MASK_BITS)
    _, wraps = signed_sum_with_wraps(r_shares)
    assert np.array_equal(to_signed(total([m.theta_r for m in mats])), wraps)
    assert np.array_equal(to_signed(total([m.r_shifted for m in mats])), r >> bits)


def test_perm_cr_definition():
    owners = (2, 1, 2)
    mats = Dealer(3, 4).deal("perm-cr", TAG, 0, (3, 17), owners=owners)
    r = total([m.r for m in mats])
    pr = total([m.permuted_r for m in mats])
    for row, owner in enumerate(owners):
        perm = mats[owner - 1].perms[row]
        assert np.array_equal(pr[row], r[row][perm])
        assert sorted(perm.tolist()) == list(range(17))
        for m in range(1, 4):
            if m != owner:
                assert row not in mats[m - 1].perms


def test_determinism_and_domain_separation():
    d1, d2 = Dealer(3, 9), Dealer(3, 9)
    a = d1.deal("arith-triple", TAG, 5, 10)
    b = d2.deal("arith-triple", TAG, 5, 10)
    assert all(np.array_equal(x.a, y.a) and np.array_equal(x.c, y.c) for x, y in zip(a, b))
    other_tag = d1.deal("arith-triple", b"session2", 5, 10)
    other_idx = d1.deal("arith-triple", TAG, 6, 10)
    assert not np.array_equal(a[0].a, other_tag[0].a)
    assert not np.array_equal(a[0].a, other_idx[0].a)


def test_take_serves_each_party_its_slice():
    d = Dealer(3, 0)
    full = Dealer(3, 0).deal("arith-triple", TAG, 0, 4)
    for party in (3, 1, 2):
        got = d.take(party, "arith-triple", TAG, 0, 4)
        assert np.array_equal(got.a, full[party - 1].a)
    assert not d._cache  # released once all parties took their share


def test_errors():
    d = Dealer(2, 0)
    with pytest.raises(DealerError):
        d.deal("nonsense", TAG, 0, 3)
    with pytest.raises(DealerError):
        d.deal("perm-cr", TAG, 0, (2, 5), owners=(1,))
    with pytest.raises(DealerError):
        d.deal("perm-cr", TAG, 0, (1, 5), owners=(3,))
    with pytest.raises(ValueError):
        Dealer(1)
