"""Seeded random generators for the benchmark families.

Four families at training scale (scale factors 2 and 4 double/quadruple the
variable counts):

* ``sc``  set covering, 5000 rows x 1000 columns, random density matrix
* ``mis`` maximum independent set on sequential-attachment graphs, 1500 nodes
* ``ca``  combinatorial auction winner determination, 2000 items / 4000 bids
* ``mc``  max cut on preferential-attachment graphs, 500 nodes

All maximization families are stored negated (the data model is
minimization-only).  Generation is a pure function of the parameters and
seed: the same GenSpec yields a byte-identical MPS serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .core import IpInstance
from .errors import ConfigError, GenerationError

FAMILIES = ("sc", "mis", "ca", "mc")

# Table-style size presets: family -> scale -> parameter dict
SCALE_PRESETS = {
    "sc": {s: {"rows": 5000, "cols": 1000 * s, "density": 0.05} for s in (1, 2, 4)},
    "mis": {s: {"nodes": 1500 * s, "affinity": 4} for s in (1, 2, 4)},
    "ca": {s: {"items": 2000 * s, "bids": 4000 * s} for s in (1, 2, 4)},
    "mc": {s: {"nodes": 500 * s, "attachment": 5} for s in (1, 2, 4)},
    "golden": {s: {"n_vars": 20} for s in (1, 2, 4)},
}


@dataclass(frozen=True)
class GenSpec:
    """A reproducible recipe for one instance."""

    family: str
    size_params: dict = field(hash=False)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES and self.family != "golden":
            raise ConfigError(f"unknown family {self.family!r}")
        if any(v <= 0 for v in self.size_params.values()):
            raise ConfigError("size parameters must be strictly positive")


def child_seed(seed: int, index: int) -> int:
    """Derived per-instance seed that is stable across runs."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate(spec: GenSpec) -> IpInstance:
    fn = {
        "sc": generate_sc,
        "mis": generate_mis,
        "ca": generate_ca,
        "mc": generate_mc,
        "golden": generate_golden,
    }[spec.family]
    return fn(seed=spec.seed, **spec.size_params)


def generate_sc(rows: int, cols: int, density: float = 0.05, seed: int = 0) -> IpInstance:
    """Random set-covering instance.

    Each coverage entry is present independently with probability
    ``density``; a post-pass guarantees every row is covered by at least two
    columns and every column covers at least one row.  Column costs are
    integers uniform in [1, 100].  Cover rows are stored in "<=" form as
    ``-sum_j a_ij x_j <= -1``.
    """
    if not 0.0 < density < 1.0:
        raise ConfigError("density must lie strictly between 0 and 1")
    if cols < 2:
        raise GenerationError("need at least two columns to cover each row twice")
    rng = np.random.default_rng(seed)
    cover = rng.random((rows, cols)) < density

    empty_cols = np.flatnonzero(~cover.any(axis=0))
    for j in empty_cols:
        cover[rng.integers(rows), j] = True
    counts = cover.sum(axis=1)
    for i in np.flatnonzero(counts < 2):
        missing = np.flatnonzero(~cover[i])
        extra = rng.choice(missing, size=2 - int(counts[i]), replace=False)
        cover[i, extra] = True

    costs = rng.integers(1, 101, size=cols).astype(np.float64)
    matrix = sp.csr_matrix(-cover.astype(np.float64))
    rhs = np.full(rows, -1.0)
    name = f"sc_r{rows}_c{cols}_s{seed}"
    return IpInstance(name, costs, matrix, rhs)


def generate_mis(nodes: int, affinity: int = 4, seed: int = 0) -> IpInstance:
    """Maximum independent set on a sequential-attachment random graph.

    Each node after the first ``affinity`` connects to ``affinity`` distinct
    earlier nodes chosen uniformly.  The model maximizes the selected node
    count (stored as minimize -sum x) under one ``x_i + x_j <= 1`` row per
    edge.
    """
    if affinity >= nodes:
        raise ConfigError("affinity must be smaller than the node count")
    rng = np.random.default_rng(seed)
    edges = []
    for k in range(affinity, nodes):
        for prev in rng.choice(k, size=affinity, replace=False):
            edges.append((int(prev), k))

    m = len(edges)
    rows = np.repeat(np.arange(m), 2)
    cols = np.array(edges).ravel()
    matrix = sp.csr_matrix(
        (np.ones(2 * m), (rows, cols)), shape=(m, nodes), dtype=np.float64
    )
    objective = np.full(nodes, -1.0)
    rhs = np.ones(m)
    name = f"mis_n{nodes}_a{affinity}_s{seed}"
    return IpInstance(name, objective, matrix, rhs)


def _grow_bundle(rng, interests, compats, first_item, stop_prob):
    """Grow a bundle starting from ``first_item`` by compatibility-weighted draws."""
    n_items = interests.size
    mask = np.zeros(n_items, dtype=bool)
    mask[first_item] = True
    while rng.random() < stop_prob and mask.sum() < n_items:
        weight = (~mask) * interests * compats[mask].mean(axis=0)
        total = weight.sum()
        if total <= 0:
            break
        mask[rng.choice(n_items, p=weight / total)] = True
    return mask


def generate_ca(
    items: int,
    bids: int,
    seed: int = 0,
    add_item_prob: float = 0.7,
    max_sub_bids: int = 5,
) -> IpInstance:
    """Combinatorial-auction winner determination, arbitrary-relationships style.

    An item compatibility matrix drives bundle growth: each bidder draws an
    initial bundle item by private interest, then extends it with probability
    ``add_item_prob`` per step, preferring compatible items.  The bidder also
    offers substitutable same-size bundles seeded from each initial-bundle
    item; a bidder keeping three or more bids gets a fresh dummy item shared
    by all of them (an XOR group).  Prices are additive: the sum of the
    common item values times uniform [0.9, 1.1] noise, rounded to 4 decimals.

    Maximizes total accepted price (stored negated) subject to one
    ``sum x <= 1`` row for every item appearing in at least two bids.
    """
    if not bids > items > 0:
        raise ConfigError("need bids > items > 0")
    rng = np.random.default_rng(seed)
    values = rng.uniform(1.0, 100.0, size=items)
    compats = np.triu(rng.random((items, items)), k=1)
    compats = compats + compats.T
    compats = compats / compats.sum(axis=1, keepdims=True)

    placed: list[tuple[np.ndarray, float]] = []  # (item index array, price)
    n_dummy = 0
    while len(placed) < bids:
        interests = rng.random(items)
        first = rng.choice(items, p=interests / interests.sum())
        bundle_mask = _grow_bundle(rng, interests, compats, first, add_item_prob)
        bundle = np.flatnonzero(bundle_mask)
        bidder_bids = {frozenset(bundle.tolist())}
        bundles = [bundle]
        for item in rng.permutation(bundle):
            if len(bundles) >= max_sub_bids + 1:
                break
            alt_mask = np.zeros(items, dtype=bool)
            alt_mask[item] = True
            while alt_mask.sum() < bundle.size:
                weight = (~alt_mask) * interests * compats[alt_mask].mean(axis=0)
                alt_mask[rng.choice(items, p=weight / weight.sum())] = True
            key = frozenset(np.flatnonzero(alt_mask).tolist())
            if key not in bidder_bids:
                bidder_bids.add(key)
                bundles.append(np.flatnonzero(alt_mask))
        if len(bundles) >= 3:  # XOR group: tie the bidder's bids to a dummy item
            dummy = items + n_dummy
            n_dummy += 1
            bundles = [np.append(b, dummy) for b in bundles]
        for b in bundles:
            if len(placed) >= bids:
                break
            price = values[b[b < items]].sum() * rng.uniform(0.9, 1.1)
            placed.append((b, round(price, 4)))

    bids_per_item: dict[int, list[int]] = {}
    for k, (bundle, _) in enumerate(placed):
        for item in bundle:
            bids_per_item.setdefault(int(item), []).append(k)
    conflict_items = sorted(i for i, bs in bids_per_item.items() if len(bs) >= 2)
    rows, cols = [], []
    for i, item in enumerate(conflict_items):
        for k in bids_per_item[item]:
            rows.append(i)
            cols.append(k)
    matrix = sp.csr_matrix(
        (np.ones(len(rows)), (rows, cols)),
        shape=(len(conflict_items), len(placed)),
        dtype=np.float64,
    )
    objective = -np.array([price for _, price in placed])
    rhs = np.ones(len(conflict_items))
    name = f"ca_i{items}_b{bids}_s{seed}"
    return IpInstance(name, objective, matrix, rhs)


def generate_mc(nodes: int, attachment: int = 5, seed: int = 0) -> IpInstance:
    """Max cut on a preferential-attachment random graph.

    The graph has exactly ``attachment * (nodes - attachment)`` edges (the
    first attached node links to all earlier ones, the rest by
    degree-weighted sampling).  Linearization: one node variable x_i per
    node, one edge variable y_e per edge, maximize sum y_e (stored negated)
    subject to ``y_e <= x_i + x_j`` and ``y_e <= 2 - x_i - x_j``.
    """
    if attachment >= nodes:
        raise ConfigError("attachment must be smaller than the node count")
    rng = np.random.default_rng(seed)
    degrees = np.zeros(nodes)
    edges = []
    for k in range(attachment, nodes):
        if k == attachment:
            chosen = np.arange(k)
        else:
            chosen = rng.choice(k, size=attachment, replace=False, p=degrees[:k] / degrees[:k].sum())
        for prev in chosen:
            edges.append((int(prev), k))
            degrees[prev] += 1
            degrees[k] += 1

    n_edges = len(edges)
    n_vars = nodes + n_edges
    rows, cols, data = [], [], []
    rhs = np.empty(2 * n_edges)
    for e, (i, j) in enumerate(edges):
        y = nodes + e
        r = 2 * e
        rows += [r, r, r]          # y - x_i - x_j <= 0
        cols += [y, i, j]
        data += [1.0, -1.0, -1.0]
        rhs[r] = 0.0
        r += 1
        rows += [r, r, r]          # y + x_i + x_j <= 2
        cols += [y, i, j]
        data += [1.0, 1.0, 1.0]
        rhs[r] = 2.0
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(2 * n_edges, n_vars))
    objective = np.concatenate([np.zeros(nodes), -np.ones(n_edges)])
    name = f"mc_n{nodes}_m{attachment}_s{seed}"
    return IpInstance(name, objective, matrix, rhs)


def generate_golden(n_vars: int = 20, seed: int = 0) -> IpInstance:
    """Synthetic family with a single always-profitable variable.

    One uniformly chosen variable gets a negative cost while every other
    cost is positive, so from the all-zeros start freeing the profitable
    variable always improves the objective and freeing anything else never
    does.  The constraint graph is one bound row ``x_i <= 1`` per variable:
    loose, but it gives every variable a private constraint node, which the
    bipartite encoder needs to couple a variable's features with its
    selection bit ahead of mean-pooling.  Used to verify that training
    picks up a selection signal.
    """
    rng = np.random.default_rng(seed)
    golden = int(rng.integers(n_vars))
    objective = rng.integers(1, 10, size=n_vars).astype(np.float64)
    objective[golden] = -float(rng.integers(5, 11))
    matrix = sp.csr_matrix(np.eye(n_vars))
    name = f"golden_n{n_vars}_s{seed}"
    return IpInstance(name, objective, matrix, np.ones(n_vars))


def golden_index(instance: IpInstance) -> int:
    """The profitable variable of a golden-family instance."""
    return int(np.argmin(instance.objective))
