"""History spaces, the trace probability rule and the decoherence functional.

A history picks one projector from each placed decomposition. Placed
decompositions are always processed in temporal order (IN before OUT on a
wire, ties kept in the given order); history tuples index that sorted list.

With Heisenberg projectors ``P_1 ... P_N`` in temporal order and total
dimension ``d``:

* linear form: ``p(h) = Re Tr(P_1 P_2 ... P_N) / d``
* chain operator: ``C_h = P_N ... P_1``
* sandwich form: ``Tr(C_h C_h^dagger) / d``
* decoherence functional: ``D(h, h') = Tr(C_h C_h'^dagger) / d``
"""
from dataclasses import dataclass, field
import itertools

import numpy as np

from qcevents.circuit import placement_key, require_valid
from qcevents.errors import InputError, NumericDefect, ResourceLimit
from qcevents.influence import PlacedDecomp, heisenberg_projectors
from qcevents.tensor import dagger, matrix_to_json

DEFAULT_HISTORY_CAP = 1_000_000
CLAMP_TOL = 1e-10
NORM_TOL = 1e-8
SANDWICH_TOL = 1e-8
ZERO_TOL = 1e-13
CHAIN_BYTES_CAP = 1 << 28


def sort_placed(c, placed):
    """Placed decompositions in temporal order (stable for ties)."""
    items = list(placed.entries if hasattr(placed, "entries") else placed)
    order = sorted(range(len(items)), key=lambda k: (placement_key(c, items[k].at), k))
    return [items[k] for k in order]


def history_count(placed):
    n = 1
    for p in placed:
        n *= p.size
    return n


def history_space(placed, cap=DEFAULT_HISTORY_CAP):
    """All histories in lexicographic order.

    Raises:
        ResourceLimit: if the number of histories exceeds ``cap``.
    """
    placed = list(placed.entries if hasattr(placed, "entries") else placed)
    n = history_count(placed)
    if n > cap:
        raise ResourceLimit(f"{n} histories exceed the cap {cap}")
    return list(itertools.product(*[range(p.size) for p in placed]))


def _is_identity_decomp(p):
    if p.size != 1:
        return False
    m = p.decomp[0]
    return bool(np.allclose(m, np.eye(m.shape[0]), atol=1e-12))


class HistoryEvaluator:
    """Caches Heisenberg projectors for one circuit and placed set.

    Args:
        c: a valid circuit.
        placed: placed decompositions or a preferred set; they are sorted
            into temporal order on construction.
        presorted: skip sorting and use ``placed`` in the given order.
    """

    def __init__(self, c, placed, presorted=False):
        require_valid(c)
        self.circuit = c
        self.placed = list(placed.entries if hasattr(placed, "entries") else placed) if presorted else sort_placed(c, placed)
        for p in self.placed:
            if not isinstance(p, PlacedDecomp):
                raise InputError("expected PlacedDecomp entries")
            d = c.dim(p.at.wire)
            for q in p.decomp:
                if q.shape != (d, d):
                    raise InputError(f"decomposition on {p.at.wire!r} has wrong dimension")
        self.dim = c.total_dim
        self.trivial = [_is_identity_decomp(p) for p in self.placed]
        self._emb = {}

    @property
    def sizes(self):
        return tuple(p.size for p in self.placed)

    def projector(self, k, e):
        """Heisenberg projector of event ``e`` of the ``k``-th decomposition."""
        if k not in self._emb:
            self._emb[k] = heisenberg_projectors(self.circuit, self.placed[k])
        return self._emb[k][e]

    def _check(self, h):
        h = tuple(int(x) for x in h)
        if len(h) != len(self.placed):
            raise InputError(f"history has {len(h)} events, expected {len(self.placed)}")
        for k, (e, p) in enumerate(zip(h, self.placed)):
            if not 0 <= e < p.size:
                raise InputError(f"event {e} out of range for decomposition {k} of size {p.size}")
        return h

    def linear_trace(self, h, order=None):
        """``Tr(P_1 ... P_N) / d`` as a complex number; ``order`` permutes the factors."""
        h = self._check(h)
        idx = list(range(len(h))) if order is None else list(order)
        prod = None
        for k in idx:
            if self.trivial[k]:
                continue
            p = self.projector(k, h[k])
            prod = p.copy() if prod is None else prod @ p
        if prod is None:
            return 1.0 + 0.0j
        return complex(np.trace(prod)) / self.dim

    def probability(self, h, order=None):
        return float(np.real(self.linear_trace(h, order)))

    def chain(self, h):
        """``C_h = P_N ... P_1``."""
        h = self._check(h)
        out = np.eye(self.dim, dtype=np.complex128)
        for k, e in enumerate(h):
            if not self.trivial[k]:
                out = self.projector(k, e) @ out
        return out

    def sandwich(self, h):
        ch = self.chain(h)
        return float(np.real(np.vdot(ch, ch))) / self.dim

    def decoherence(self, h, h2):
        return complex(np.vdot(self.chain(h2), self.chain(h))) / self.dim

    def marginal_probability(self, assignment):
        """Probability of a partial assignment ``{index: event}``.

        Unassigned decompositions are replaced by the identity, which equals
        summing them out whenever the probability rule is linear in them.
        """
        prod = None
        for k in sorted(assignment):
            if not 0 <= k < len(self.placed):
                raise InputError(f"decomposition index {k} out of range")
            e = int(assignment[k])
            if not 0 <= e < self.placed[k].size:
                raise InputError(f"event {e} out of range for decomposition {k}")
            if self.trivial[k]:
                continue
            p = self.projector(k, e)
            prod = p.copy() if prod is None else prod @ p
        if prod is None:
            return 1.0
        return float(np.real(np.trace(prod))) / self.dim

    def table(self, cap=DEFAULT_HISTORY_CAP):
        """Unclamped linear-form probabilities, shape ``self.sizes``.

        Filled depth first with shared prefix products; a vanishing prefix
        zeroes its whole subtree.
        """
        sizes = self.sizes
        n = history_count(self.placed)
        if n > cap:
            raise ResourceLimit(f"{n} histories exceed the cap {cap}")
        out = np.zeros(sizes if sizes else (), dtype=float)
        nk = len(self.placed)
        if nk == 0:
            return np.array(1.0)
        last = max((k for k in range(nk) if not self.trivial[k]), default=-1)

        def walk(k, prefix, idx):
            if k == nk:
                out[idx] = 1.0 if prefix is None else float(np.real(np.trace(prefix))) / self.dim
                return
            if self.trivial[k]:
                walk(k + 1, prefix, idx + (0,))
                return
            for e in range(sizes[k]):
                p = self.projector(k, e)
                if k == last:
                    val = np.trace(p) if prefix is None else np.sum(prefix * p.T)
                    sub = float(np.real(val)) / self.dim
                    tail = idx + (e,)
                    # Remaining decompositions are trivial.
                    out[tail + (0,) * (nk - k - 1)] = sub
                    continue
                nxt = p.copy() if prefix is None else prefix @ p
                if float(np.max(np.abs(nxt))) <= ZERO_TOL:
                    continue
                walk(k + 1, nxt, idx + (e,))

        walk(0, None, ())
        return out

    def iter_chains(self, cap=DEFAULT_HISTORY_CAP):
        """Yield ``(history, C_h)`` for every nonzero chain, lexicographically."""
        sizes = self.sizes
        n = history_count(self.placed)
        if n > cap:
            raise ResourceLimit(f"{n} histories exceed the cap {cap}")
        nk = len(self.placed)

        def walk(k, acc, idx):
            if k == nk:
                yield idx, acc
                return
            for e in range(sizes[k]):
                nxt = acc if self.trivial[k] else self.projector(k, e) @ acc
                if float(np.max(np.abs(nxt))) <= ZERO_TOL:
                    continue
                yield from walk(k + 1, nxt, idx + (e,))

        yield from walk(0, np.eye(self.dim, dtype=np.complex128), ())

    def chains(self, cap=DEFAULT_HISTORY_CAP):
        """Nonzero chain operators as a list of ``(history, C_h)`` pairs."""
        budget = CHAIN_BYTES_CAP // max(1, 16 * self.dim * self.dim)
        found = []
        for item in self.iter_chains(cap):
            if len(found) >= budget:
                raise ResourceLimit("chain list needs too much memory; shrink the bubble")
            found.append(item)
        return found


def history_probability(c, placed, h, check_sandwich=False, order=None):
    """Linear-form probability of history ``h``.

    Args:
        c: circuit.
        placed: placed decompositions (sorted into temporal order internally).
        h: event indices, one per decomposition in temporal order.
        check_sandwich: also evaluate the sandwich form and raise
            :class:`NumericDefect` if the two differ by more than 1e-8.
        order: optional permutation of the product order, for robustness tests.
    """
    ev = HistoryEvaluator(c, placed)
    p = ev.probability(h, order)
    if check_sandwich:
        s = ev.sandwich(h)
        if abs(s - p) > SANDWICH_TOL:
            raise NumericDefect(f"sandwich form {s} differs from linear form {p}")
    return p


def sandwich_probability(c, placed, h):
    return HistoryEvaluator(c, placed).sandwich(h)


def decoherence_functional(c, placed, h, h2):
    """``D(h, h2) = Tr(C_h C_h2^dagger) / d``."""
    return HistoryEvaluator(c, placed).decoherence(h, h2)


@dataclass
class ConsistencyReport:
    consistent: bool
    max_offdiag: float
    worst_pair: tuple

    def to_dict(self):
        return {
            "consistent": self.consistent,
            "max_offdiag": self.max_offdiag,
            "worst_pair": [list(x) for x in self.worst_pair] if self.worst_pair else None,
        }


def _batches(items, size):
    batch = []
    for item in items:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def consistency_check(c, placed, tol=NORM_TOL, cap=DEFAULT_HISTORY_CAP, evaluator=None):
    """Largest ``|Re D(h, h')|`` over distinct histories, compared with ``tol``.

    Histories whose chain operator vanishes have zero rows in ``D`` and are
    skipped. The Gram matrix of the chains is built tile by tile: a block of
    chains that fits in memory is held while the remaining chains are
    streamed past it, so memory stays bounded at the cost of extra passes.
    """
    ev = evaluator or HistoryEvaluator(c, placed)
    budget = max(1, CHAIN_BYTES_CAP // max(1, 16 * ev.dim * ev.dim))
    tile = 256
    worst = 0.0
    pair = ()
    start = 0
    while True:
        it = ev.iter_chains(cap)
        for _ in range(start):
            next(it)
        held = list(itertools.islice(it, budget))
        if not held:
            break
        hmat = np.conj(np.stack([ch.reshape(-1) for _, ch in held]))
        # pairs inside the held block
        offset = 0
        for batch in _batches(held, tile):
            g = np.real(hmat @ np.stack([ch.reshape(-1) for _, ch in batch]).T) / ev.dim
            rows = np.arange(len(held))[:, None]
            cols = offset + np.arange(len(batch))[None, :]
            g[rows >= cols] = 0.0
            a, b = np.unravel_index(int(np.argmax(np.abs(g))), g.shape)
            if abs(g[a, b]) > worst:
                worst = float(abs(g[a, b]))
                pair = (held[a][0], batch[b][0])
            offset += len(batch)
        # pairs with every later chain
        for batch in _batches(it, tile):
            g = np.real(hmat @ np.stack([ch.reshape(-1) for _, ch in batch]).T) / ev.dim
            a, b = np.unravel_index(int(np.argmax(np.abs(g))), g.shape)
            if abs(g[a, b]) > worst:
                worst = float(abs(g[a, b]))
                pair = (held[a][0], batch[b][0])
        start += len(held)
    return ConsistencyReport(worst <= tol, worst, pair)


# ---------------------------------------------------------------------------
# Distributions


@dataclass(eq=False)
class HistoryDistribution:
    """Dense probabilities over all histories of a placed set.

    ``probs`` has one axis per decomposition (temporal order); flattened in
    C order it lists histories lexicographically.
    """

    placed: list
    probs: np.ndarray
    dim: int
    meta: dict = field(default_factory=dict)

    @property
    def sizes(self):
        return tuple(self.probs.shape)

    def prob(self, h):
        return float(self.probs[tuple(h)])

    def flat(self):
        return self.probs.reshape(-1)

    def histories(self):
        return list(itertools.product(*[range(s) for s in self.sizes]))

    def marginal(self, keep):
        """Sum out every decomposition not listed in ``keep`` (kept in order)."""
        keep = sorted(set(int(k) for k in keep))
        drop = tuple(k for k in range(self.probs.ndim) if k not in keep)
        probs = self.probs.sum(axis=drop) if drop else self.probs.copy()
        return HistoryDistribution([self.placed[k] for k in keep], np.asarray(probs), self.dim, dict(self.meta))

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "decompositions": [
                {
                    "wire": p.at.wire,
                    "side": p.at.side,
                    "label": p.label,
                    "size": p.size,
                    "projectors": [matrix_to_json(q) for q in p.decomp],
                }
                for p in self.placed
            ],
            "sizes": list(self.sizes),
            "probabilities": [float(x) for x in self.flat()],
        }


def _clamp(table, strict=True):
    t = np.array(table, dtype=float)
    worst = float(t.min()) if t.size else 0.0
    if worst < -CLAMP_TOL and strict:
        raise NumericDefect(f"probability {worst} is negative beyond the clamp tolerance")
    t[(t < 0) & (t >= -CLAMP_TOL)] = 0.0
    return t


def history_distribution(c, placed, cap=DEFAULT_HISTORY_CAP, strict=True):
    """Dense distribution from the linear probability rule.

    Args:
        strict: raise :class:`NumericDefect` on probabilities below -1e-10
            or a total off by more than 1e-8; with ``strict=False`` the raw
            values are kept, which is how invalid joint assignments are
            exhibited.
    """
    ev = HistoryEvaluator(c, placed)
    raw = ev.table(cap)
    if strict:
        t = _clamp(raw, True)
        total = float(t.sum())
        if abs(total - 1.0) > NORM_TOL:
            raise NumericDefect(f"probabilities sum to {total}")
    else:
        t = np.array(raw, dtype=float)
    return HistoryDistribution(ev.placed, t, ev.dim)


def conditional_distribution(dist, given):
    """Condition on a partial assignment ``{decomposition index: event}``.

    Raises:
        InputError: if the conditioning event has probability <= 1e-12.
    """
    mask = np.ones(dist.sizes, dtype=bool)
    for k, e in given.items():
        k = int(k)
        e = int(e)
        if not 0 <= k < len(dist.sizes) or not 0 <= e < dist.sizes[k]:
            raise InputError(f"bad conditioning entry {k}: {e}")
        sel = np.zeros(dist.sizes[k], dtype=bool)
        sel[e] = True
        shape = [1] * len(dist.sizes)
        shape[k] = dist.sizes[k]
        mask &= sel.reshape(shape)
    probs = np.where(mask, dist.probs, 0.0)
    total = float(probs.sum())
    if total <= 1e-12:
        raise InputError("conditioning event has zero probability")
    return HistoryDistribution(dist.placed, probs / total, dist.dim, dict(dist.meta))


def sample_history(dist, seed):
    """Inverse-CDF draw over the lexicographic history list."""
    rng = np.random.default_rng(seed)
    flat = np.maximum(dist.flat(), 0.0)
    cdf = np.cumsum(flat)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, flat.size - 1)
    while flat[idx] <= 0.0 and idx > 0:
        idx -= 1
    return tuple(int(x) for x in np.unravel_index(idx, dist.sizes)) if dist.sizes else ()


def sample_histories(dist, n, seed):
    """``n`` draws; draw ``k`` uses seed ``seed + k`` so each row is reproducible alone."""
    return [(seed + k, sample_history(dist, seed + k)) for k in range(int(n))]
