import numpy as np

from vfltables import sharing as S


async def share_from(ctx, owner, words, scale=1):
    """Every party calls this; only ``owner`` contributes ``words``."""
    words = np.asarray(words, dtype=np.uint64)
    return await S.input_share(ctx, owner, words if ctx.id == owner else None, words.shape, scale)


def float_newton(y, init_log2, iters):
    """Float64 run of z <- 2z - y z^2 from z = 2^-init_log2."""
    y = np.asarray(y, dtype=np.float64)
    z = np.full_like(y, 2.0 ** -init_log2)
    for _ in range(iters):
        z = 2 * z - y * z * z
    return z


def float_sigmoid_pipeline(x, clamp=4.0, rounds=2, init_log2=10, iters=20):
    """Float64 model of clamp -> (1 - x/2^n)^(2^n) -> Newton reciprocal."""
    x = np.asarray(x, dtype=np.float64)
    if clamp > 0:
        x = np.clip(x, -clamp, clamp)
    a = 1.0 - x / 2 ** rounds
    for _ in range(rounds):
        a = a * a
    return float_newton(1.0 + a, init_log2, iters)


def party_data(X, layout, labels=None, active_party=1, n=None):
    """Split a full matrix into per-party PartyData following ``layout``."""
    from vfltables.tables import PartyData
    X = np.asarray(X, dtype=np.float64)
    n = n or max(layout.owners)
    out = []
    for m in range(1, n + 1):
        ids = layout.owned_by(m)
        out.append(PartyData(X[:, ids].reshape(X.shape[0], len(ids)), tuple(ids),
                             labels if m == active_party else None))
    return out
