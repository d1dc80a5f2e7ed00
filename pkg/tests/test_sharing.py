import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chisquare

from vfltables import sharing as S
from vfltables.ring import decode, encode, to_signed
from vfltables.transport import ConfigurationError, ProtocolError

from .helpers import share_from

U64 = st.integers(0, 2**64 - 1)


def _recon(results):
    return S.reconstruct(results)


# -- share / reconstruct ----------------------------------------------------

def test_share_round_trip_small():
    rng = np.random.default_rng(0)
    assert S.reconstruct(S.share([5], 3, rng)).tolist() == [5]
    a, b = S.share([0], 2, rng)
    assert (int(a.values[0]) + int(b.values[0])) % 2**64 == 0


def test_share_rejects_single_party():
    with pytest.raises(ConfigurationError):
        S.share([1], 1, np.random.default_rng(0))


def test_reconstruct_examples():
    sh = [S.SharedVector(1, np.array([3], np.uint64)), S.SharedVector(2, np.array([2**64 - 1], np.uint64))]
    assert S.reconstruct(sh).tolist() == [2]
    parts = S.share(encode([1.5]), 4, np.random.default_rng(1), scale=1)
    assert S.reconstruct(parts).tolist() == [1572864]


def test_reconstruct_errors():
    rng = np.random.default_rng(0)
    parts = S.share([9], 3, rng)
    with pytest.raises(ProtocolError):
        S.reconstruct(parts[:2], n=3)
    bad = [parts[0], parts[1], S.SharedVector(3, parts[2].values, 1, b"other---")]
    with pytest.raises(ProtocolError):
        S.reconstruct(bad)


@pytest.mark.parametrize("n", [2, 3, 4, 8])
def test_round_trip_bulk(n):
    rng = np.random.default_rng(n)
    x = rng.integers(0, 2**64, size=10_000, dtype=np.uint64)
    assert np.array_equal(S.reconstruct(S.share(x, n, rng)), x)


@given(st.lists(U64, min_size=1, max_size=16), st.integers(2, 8), st.integers(0, 2**32))
def test_round_trip_property(xs, n, seed):
    x = np.array(xs, dtype=np.uint64)
    assert np.array_equal(S.reconstruct(S.share(x, n, np.random.default_rng(seed))), x)


def test_share_bytes_uniform():
    rng = np.random.default_rng(2024)
    shares = S.share(np.full(10_000, 7, np.uint64), 3, rng)
    for sv in shares:
        counts = np.bincount(sv.values.view(np.uint8), minlength=256)
        assert chisquare(counts).pvalue > 0.01


# -- local linear operations --------------------------------------------------

def test_linear_examples():
    rng = np.random.default_rng(3)
    x = encode([1.5, -2.0, 7.25])
    xs = S.share(x, 3, rng, scale=1)
    zs = S.share(np.zeros(3, np.uint64), 3, rng, scale=1)
    assert np.array_equal(S.reconstruct([a + b for a, b in zip(xs, zs)]), x)
    assert np.array_equal(S.reconstruct([a.mul_public_int(2) for a in xs]), encode([3.0, -4.0, 14.5]))
    assert not S.reconstruct([a - a for a in xs]).any()


@given(U64, st.lists(st.tuples(U64, U64), min_size=1, max_size=8), st.integers(2, 6))
def test_linearity_property(a, pairs, n):
    rng = np.random.default_rng(0)
    x = np.array([p[0] for p in pairs], np.uint64)
    y = np.array([p[1] for p in pairs], np.uint64)
    xs, ys = S.share(x, n, rng), S.share(y, n, rng)
    out = S.reconstruct([u.mul_public_int(a) + v for u, v in zip(xs, ys)])
    assert np.array_equal(out, np.uint64(a) * x + y)


def test_shape_mismatch():
    a = S.SharedVector(1, np.zeros(3, np.uint64))
    b = S.SharedVector(1, np.zeros(4, np.uint64))
    with pytest.raises(S.ShapeError):
        a + b


def test_scale_mismatch():
    a = S.SharedVector(1, np.zeros(3, np.uint64), 1)
    b = S.SharedVector(1, np.zeros(3, np.uint64), 0)
    with pytest.raises(S.ShapeError):
        a + b


def test_add_public_only_on_first_party():
    a = S.share(np.array([10], np.uint64), 3, np.random.default_rng(0))
    out = S.reconstruct([s.add_public(np.array([5], np.uint64)) for s in a])
    assert out.tolist() == [15]


# -- Beaver multiplication ----------------------------------------------------

def test_beaver_examples(run):
    async def prog(ctx):
        x = await share_from(ctx, 1, encode([3.0]), 1)
        y = await share_from(ctx, 2, encode([4.0]), 1)
        ind = await share_from(ctx, 1, [1], 0)
        w = await share_from(ctx, 2, encode([-2.75]), 1)
        return await S.mul(ctx, x, y), await S.beaver_mul(ctx, ind, w)

    res, _ = run(3, prog)
    assert _recon([r[0] for r in res]).tolist() == encode([12.0]).tolist()
    exact = [r[1] for r in res]
    assert exact[0].scale == 1
    assert _recon(exact).tolist() == encode([-2.75]).tolist()


@pytest.mark.parametrize("n", [2, 3, 5])
def test_beaver_bulk_modular(run, n):
    rng = np.random.default_rng(n)
    x = rng.integers(0, 2**64, 1000, dtype=np.uint64)
    y = rng.integers(0, 2**64, 1000, dtype=np.uint64)

    async def prog(ctx):
        a = await share_from(ctx, 1, x, 0)
        b = await share_from(ctx, n, y, 0)
        return await S.beaver_mul(ctx, a, b)

    res, net = run(n, prog)
    assert np.array_equal(_recon(res), x * y)


@given(st.lists(st.tuples(U64, U64), min_size=1, max_size=6), st.integers(2, 5), st.integers(0, 1000))
def test_beaver_property(pairs, n, seed):
    from vfltables.party import simulate
    x = np.array([p[0] for p in pairs], np.uint64)
    y = np.array([p[1] for p in pairs], np.uint64)

    async def prog(ctx):
        a = await share_from(ctx, 1, x, 0)
        b = await share_from(ctx, 2, y, 0)
        return await S.beaver_mul(ctx, a, b)

    res, _ = simulate(n, prog, seed=seed)
    assert np.array_equal(_recon(res), x * y)


def test_mul_many_one_round(run):
    async def prog(ctx):
        a = await share_from(ctx, 1, encode([1.0, 2.0]), 1)
        b = await share_from(ctx, 1, encode([3.0]), 1)
        r0 = ctx.round
        out = await S.mul_many(ctx, [(a, a), (b, b)])
        return ctx.round - r0, out

    res, net = run(3, prog)
    assert res[0][0] == 1
    assert net.stats.op("mul")["rounds"] == 1


# -- truncation ---------------------------------------------------------------

@pytest.mark.parametrize("method", ["exact", "wrap"])
def test_truncate_examples(run, method):
    async def prog(ctx):
        z = await share_from(ctx, 1, np.array([6 << 40], np.uint64), 2)
        x = await share_from(ctx, 1, encode([2.0]), 1)
        y = await share_from(ctx, 2, encode([3.0]), 1)
        return await S.truncate(ctx, z), await S.mul(ctx, x, y)

    res, _ = run(4, prog, trunc_method=method)
    t0 = to_signed(_recon([r[0] for r in res]))[0]
    t1 = to_signed(_recon([r[1] for r in res]))[0]
    if method == "exact":
        assert t0 == 6 << 20 and t1 == 6 << 20
    else:
        # per-share flooring: low by at most n-1 units
        assert (6 << 20) - 3 <= t0 <= 6 << 20
        assert (6 << 20) - 3 <= t1 <= 6 << 20


@pytest.mark.parametrize("method,n", [("exact", 2), ("exact", 4), ("wrap", 2), ("wrap", 4)])
def test_truncation_accuracy_bulk(run, method, n):
    rng = np.random.default_rng(7 + n)
    # |x·y| < 2^22 after rounding to the grid
    x = rng.uniform(-2**11, 2**11, 10_000)
    y = rng.uniform(-2**10.9, 2**10.9, 10_000)

    async def prog(ctx):
        a = await share_from(ctx, 1, encode(x), 1)
        b = await share_from(ctx, n, encode(y), 1)
        return await S.mul(ctx, a, b)

    res, net = run(n, prog, trunc_method=method)
    got = decode(_recon(res))
    want = decode(encode(x)) * decode(encode(y))
    assert np.max(np.abs(got - want)) <= 2.0 ** -18
    assert net.stats.op("trunc")["rounds"] == 1
    assert net.stats.op("mul")["rounds"] == 1


@pytest.mark.parametrize("method", ["exact", "wrap"])
@given(st.lists(st.tuples(st.floats(-2000, 2000), st.floats(-2000, 2000)), min_size=1, max_size=8),
       st.integers(2, 5))
def test_truncation_property(method, pairs, n):
    from vfltables.party import simulate
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])

    async def prog(ctx):
        a = await share_from(ctx, 1, encode(x), 1)
        b = await share_from(ctx, 2, encode(y), 1)
        return await S.mul(ctx, a, b)

    res, _ = simulate(n, prog, trunc_method=method)
    want = decode(encode(x)) * decode(encode(y))
    assert np.max(np.abs(decode(_recon(res)) - want)) <= 2.0 ** -18


def test_exact_truncation_error_is_floor_or_one_more(run):
    rng = np.random.default_rng(5)
    z = rng.integers(-2**61, 2**61, 5000)

    async def prog(ctx):
        zs = await share_from(ctx, 1, z.astype(np.int64).view(np.uint64), 2)
        return await S.truncate(ctx, zs)

    res, _ = run(3, prog)
    got = to_signed(_recon(res))
    diff = got - (z >> 20)
    assert set(np.unique(diff).tolist()) <= {0, 1}


def test_truncate_custom_bits(run):
    async def prog(ctx):
        z = await share_from(ctx, 1, encode([5.0]), 1)
        return await S.truncate(ctx, z, bits=2)

    res, _ = run(2, prog)
    assert abs(decode(_recon(res))[0] - 1.25) <= 2.0 ** -20


# -- opening and reveal ---------------------------------------------------------

def test_reveal_targets(run):
    async def prog(ctx):
        x = await share_from(ctx, 2, encode([0.5, 1.5]), 1)
        return await S.reveal(ctx, x, 3)

    res, _ = run(3, prog)
    assert res[0] is None and res[1] is None
    assert decode(res[2]).tolist() == [0.5, 1.5]


def test_open_many_to_all(run):
    async def prog(ctx):
        a = await share_from(ctx, 1, [1, 2], 0)
        b = await share_from(ctx, 2, [3], 0)
        return [v.tolist() for v in await S.open_many(ctx, [a, b])]

    res, net = run(3, prog)
    assert all(r == [[1, 2], [3]] for r in res)


def test_and_many(run):
    rng = np.random.default_rng(4)
    x = rng.integers(0, 2**64, 50, dtype=np.uint64)
    y = rng.integers(0, 2**64, 50, dtype=np.uint64)

    async def prog(ctx):
        # party 1 holds x, party 2 holds y as trivial XOR sharings
        xs = x if ctx.id == 1 else np.zeros_like(x)
        ys = y if ctx.id == 2 else np.zeros_like(y)
        return (await S.and_many(ctx, [(xs, ys)]))[0]

    res, net = run(3, prog)
    z = np.bitwise_xor.reduce(np.stack(res), axis=0)
    assert np.array_equal(z, x & y)
    assert net.stats.op("and")["rounds"] == 1
