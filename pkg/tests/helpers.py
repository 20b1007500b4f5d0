"""Shared random instances for the test suite."""
import numpy as np

from qcevents.influence import ChannelSplit
from qcevents.tensor import dagger, haar_random_unitary


def random_decomp(rng, d, allow_trivial=True):
    """Projective decomposition from a random basis, with random grouping."""
    u = haar_random_unitary(d, rng)
    n_groups = int(rng.integers(1 if allow_trivial else min(2, d), d + 1))
    labels = np.concatenate([np.arange(n_groups), rng.integers(0, n_groups, size=d - n_groups)])
    rng.shuffle(labels)
    out = []
    for g in range(n_groups):
        cols = u[:, labels == g]
        out.append(cols @ dagger(cols))
    return out


def random_split(rng, max_dim=4, structured=True):
    """Split ``A (x) B -> C (x) D`` with factor dims at most ``max_dim``.

    With ``structured`` the unitary is sometimes a product, a controlled
    unitary or a permutation, so that commuting cases occur often.
    """
    for _ in range(100):
        da, db = int(rng.integers(1, max_dim + 1)), int(rng.integers(1, max_dim + 1))
        n = da * db
        divisors = [k for k in range(1, max_dim + 1) if n % k == 0 and n // k <= max_dim]
        if divisors:
            break
    dc = int(rng.choice(divisors))
    dd = n // dc
    kind = int(rng.integers(0, 4)) if structured else 0
    if kind == 1 and (da, db) == (dc, dd):
        u = np.kron(haar_random_unitary(da, rng), haar_random_unitary(db, rng))
    elif kind == 2 and (da, db) == (dc, dd):
        blocks = [haar_random_unitary(db, rng) for _ in range(da)]
        u = np.zeros((n, n), dtype=complex)
        for k, blk in enumerate(blocks):
            u[k * db:(k + 1) * db, k * db:(k + 1) * db] = blk
    elif kind == 3:
        u = np.eye(n, dtype=complex)[rng.permutation(n)]
    else:
        u = haar_random_unitary(n, rng)
    return ChannelSplit(u, (da, db), (dc, dd))
