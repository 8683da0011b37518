"""Network representation, discretization grids, random topologies, and file I/O.

A quantum network is an undirected simple graph whose links carry a mean
pair-generation rate (per second) and a link fidelity.  Solvers discretize
fidelity (and, for GHZ problems, rate) on finite grids defined here.
"""

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConnectivityFailure,
    InvalidDemand,
    InvariantViolation,
    ParseError,
)

# Werner-state fidelity floor for a two-qubit pair.
WERNER_FLOOR = 0.25


def canonical_pair(a, b):
    """Unordered node pair as a sorted tuple."""
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class LinkProps:
    rate: float
    fidelity: float


@dataclass(frozen=True)
class QuantumNetwork:
    """Undirected simple graph with per-link EP rate and fidelity.

    ``links`` maps canonical (sorted) node pairs to :class:`LinkProps`.
    ``positions`` optionally holds 2-D coordinates in km for generated
    topologies.  Instances are immutable and safe to share across
    concurrent solver runs.
    """

    nodes: tuple
    links: dict
    positions: dict | None = None

    def __post_init__(self):
        seen = set(self.nodes)
        if len(seen) != len(self.nodes):
            raise InvariantViolation("duplicate node ids")
        for pair, props in self.links.items():
            a, b = pair
            if a == b:
                raise InvariantViolation(f"self-loop on node {a!r}")
            if pair != canonical_pair(a, b):
                raise InvariantViolation(f"non-canonical link key {pair!r}")
            if a not in seen or b not in seen:
                raise InvariantViolation(f"link {pair!r} references unknown node")
            if not props.rate > 0:
                raise InvariantViolation(f"link {pair!r} rate must be > 0")
            if not (WERNER_FLOOR < props.fidelity <= 1.0):
                raise InvariantViolation(
                    f"link {pair!r} fidelity {props.fidelity} outside (0.25, 1]"
                )
        if self.positions is not None:
            for node in self.positions:
                if node not in seen:
                    raise InvariantViolation(f"position for unknown node {node!r}")

    def neighbors(self, node):
        out = []
        for (a, b) in self.links:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)

    def link(self, a, b):
        return self.links.get(canonical_pair(a, b))

    def rate(self, a, b):
        return self.links[canonical_pair(a, b)].rate

    def fid(self, a, b):
        return self.links[canonical_pair(a, b)].fidelity

    def is_connected(self):
        if len(self.nodes) <= 1:
            return True
        adj = {n: [] for n in self.nodes}
        for (a, b) in self.links:
            adj[a].append(b)
            adj[b].append(a)
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.nodes)


def make_network(nodes, links, positions=None):
    """Build a QuantumNetwork from ``{(a, b): (rate, fidelity)}``-style input."""
    table = {}
    for (a, b), value in links.items():
        pair = canonical_pair(a, b)
        if pair in table:
            raise InvariantViolation(f"duplicate link {pair!r}")
        props = value if isinstance(value, LinkProps) else LinkProps(*value)
        table[pair] = props
    return QuantumNetwork(tuple(nodes), table, positions)


class _Grid:
    """Strictly increasing finite value set with floor semantics."""

    def __init__(self, values):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise InvariantViolation("grid must be nonempty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise InvariantViolation("grid values must be strictly increasing")
        self.values = vals

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, idx):
        return self.values[idx]

    @property
    def min(self):
        return self.values[0]

    @property
    def max(self):
        return self.values[-1]

    def floor_index(self, x):
        """Index of the largest grid value <= x, or None below the grid."""
        idx = bisect_right(self.values, x) - 1
        return idx if idx >= 0 else None

    def floor(self, x):
        idx = self.floor_index(x)
        return None if idx is None else self.values[idx]

    def ceil_index(self, x):
        """Index of the smallest grid value >= x, or None above the grid."""
        idx = bisect_right(self.values, x)
        if idx > 0 and self.values[idx - 1] == x:
            return idx - 1
        return idx if idx < len(self.values) else None

    def ceil(self, x):
        idx = self.ceil_index(x)
        return None if idx is None else self.values[idx]


class FidelityGrid(_Grid):
    """Discrete fidelity values in [0.5, 1.0]."""

    def __init__(self, values):
        super().__init__(values)
        if self.min < 0.5 or self.max > 1.0:
            raise InvariantViolation("fidelity grid must lie within [0.5, 1.0]")

    @classmethod
    def uniform(cls, step=0.005, lo=0.5, hi=1.0):
        n = int(round((hi - lo) / step))
        return cls(round(lo + i * step, 12) for i in range(n + 1))


class RateGrid(_Grid):
    """Discrete positive rates (or positive integer counts in quantity mode)."""

    def __init__(self, values):
        super().__init__(values)
        if self.min <= 0:
            raise InvariantViolation("rate grid values must be positive")

    @classmethod
    def geometric(cls, max_rate, extra=()):
        """Powers of two up to ``max_rate`` plus any explicit extra values."""
        vals = set()
        k = 1.0
        while k <= max_rate:
            vals.add(k)
            k *= 2.0
        vals.update(float(v) for v in extra)
        if not vals:
            vals.add(float(max_rate))
        return cls(sorted(vals))


def default_fidelity_grid(step=0.005):
    return FidelityGrid.uniform(step=step)


def default_rate_grid(net):
    rates = [p.rate for p in net.links.values()]
    if not rates:
        raise InvariantViolation("network has no links to derive a rate grid from")
    return RateGrid.geometric(max(rates), extra=rates)


def floor_to_grid(x, grid):
    """Largest grid value <= x; None when x is below the grid minimum."""
    return grid.floor(x)


@dataclass(frozen=True)
class PairDemand:
    s: str
    d: str
    f: float


@dataclass(frozen=True)
class GhzDemand:
    terminals: tuple
    f: float


@dataclass(frozen=True)
class DemandSet:
    """EP demands (source, destination, threshold) and GHZ demands
    (terminal set, threshold)."""

    pairs: tuple = ()
    ghz: tuple = ()

    def __post_init__(self):
        for dm in self.pairs:
            if dm.s == dm.d:
                raise InvalidDemand(f"demand {dm.s!r}->{dm.d!r} has equal endpoints")
            if not (0.5 < dm.f <= 1.0):
                raise InvalidDemand(f"pair threshold {dm.f} outside (0.5, 1]")
        for dm in self.ghz:
            if len(set(dm.terminals)) != len(dm.terminals):
                raise InvalidDemand("GHZ terminal set has duplicates")
            if len(dm.terminals) < 3:
                raise InvalidDemand("GHZ demand needs at least 3 terminals")
            if not (0.5 < dm.f <= 1.0):
                raise InvalidDemand(f"GHZ threshold {dm.f} outside (0.5, 1]")


@dataclass(frozen=True)
class OperationParams:
    """Success probabilities and latencies of the elementary operations.

    ``i_max`` bounds iterations of a single pumping run; ``gamma`` is the
    fidelity decoherence rate (per second, 0 disables decoherence).
    """

    p_s: float = 0.4
    t_s: float = 10e-6
    t_p: float = 10e-6
    t_c: float = 10e-6
    p_f: float = 0.4
    i_max: int = 5
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("p_s", "p_f"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise InvariantViolation(f"{name}={v} outside (0, 1]")
        for name in ("t_s", "t_p", "t_c"):
            if getattr(self, name) < 0:
                raise InvariantViolation(f"{name} must be >= 0")
        if self.i_max < 1:
            raise InvariantViolation("i_max must be >= 1")
        if self.gamma < 0:
            raise InvariantViolation("gamma must be >= 0")


# ---------------------------------------------------------------------------
# Random topologies

WAXMAN_RETRIES = 100


def waxman_generate(
    n_nodes,
    area_km=100.0,
    alpha=0.2,
    beta=0.5,
    rate_range=(10.0, 100.0),
    fid_range=(0.7, 0.95),
    seed=0,
    retries=WAXMAN_RETRIES,
):
    """Random geometric topology with distance-decaying edge probability.

    Nodes are placed uniformly in an ``area_km`` x ``area_km`` square; pair
    (i, j) is linked with probability ``alpha * exp(-d / (beta * d_max))``
    where ``d_max`` is the maximal pairwise distance of the sample.  Link
    rates and fidelities are drawn uniformly from the given ranges.  The
    result is a pure function of the arguments; disconnected samples are
    retried with derived sub-seeds up to ``retries`` times.
    """
    if n_nodes < 1:
        raise InvalidDemand("n_nodes must be >= 1")
    if rate_range[0] > rate_range[1] or fid_range[0] > fid_range[1]:
        raise InvalidDemand("ranges must satisfy lo <= hi")
    if not (WERNER_FLOOR < fid_range[0] and fid_range[1] <= 1.0):
        raise InvalidDemand("fid_range must lie within (0.25, 1]")
    if not (0 < alpha <= 1 and 0 < beta <= 1):
        raise InvalidDemand("alpha and beta must lie in (0, 1]")

    for attempt in range(retries):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(attempt,)))
        )
        pos = rng.uniform(0.0, area_km, size=(n_nodes, 2))
        names = [f"n{i}" for i in range(n_nodes)]
        pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
        if pairs:
            dists = [float(np.hypot(*(pos[i] - pos[j]))) for i, j in pairs]
            d_max = max(dists)
        else:
            dists, d_max = [], 0.0
        accepted = []
        for (i, j), d in zip(pairs, dists):
            decay = 1.0 if d_max == 0 else math.exp(-d / (beta * d_max))
            if rng.uniform() < alpha * decay:
                accepted.append((i, j))
        links = {}
        for i, j in accepted:
            rate = float(rng.uniform(*rate_range))
            fid = float(rng.uniform(*fid_range))
            links[canonical_pair(names[i], names[j])] = LinkProps(rate, fid)
        net = QuantumNetwork(
            tuple(names),
            links,
            {names[i]: (float(pos[i][0]), float(pos[i][1])) for i in range(n_nodes)},
        )
        if net.is_connected():
            return net
    raise ConnectivityFailure(
        f"no connected sample after {retries} attempts (n={n_nodes}, seed={seed})"
    )


# ---------------------------------------------------------------------------
# File I/O
#
# Network file: JSON with "nodes" (array of ids), "links" (array of
# {"a","b","rate","fidelity"}) and optional "positions" ({id: [x, y]}).
# Demand file: {"pairs": [{"s","d","f"}], "ghz": [{"terminals": [...], "f"}]}.
# Unknown top-level keys (e.g. an embedded run manifest) are ignored on load.


def network_to_dict(net, manifest=None):
    doc = {
        "nodes": list(net.nodes),
        "links": [
            {"a": a, "b": b, "rate": p.rate, "fidelity": p.fidelity}
            for (a, b), p in sorted(net.links.items())
        ],
    }
    if net.positions is not None:
        doc["positions"] = {k: list(v) for k, v in sorted(net.positions.items())}
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def network_from_dict(doc):
    try:
        nodes = [str(n) for n in doc["nodes"]]
        links = {}
        for i, entry in enumerate(doc["links"]):
            try:
                pair = canonical_pair(str(entry["a"]), str(entry["b"]))
                props = LinkProps(float(entry["rate"]), float(entry["fidelity"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"links[{i}]: {exc}") from exc
            if pair in links:
                raise InvariantViolation(f"duplicate link {pair!r}")
            links[pair] = props
        positions = None
        if "positions" in doc:
            positions = {
                str(k): (float(v[0]), float(v[1])) for k, v in doc["positions"].items()
            }
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed network document: {exc}") from exc
    return QuantumNetwork(tuple(nodes), links, positions)


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc


def dump_json(doc, path=None):
    """Deterministic JSON emission: sorted keys, shortest exact float repr."""
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None:
        return text
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


def save_network(net, path, manifest=None):
    dump_json(network_to_dict(net, manifest), path)


def load_network(path):
    return network_from_dict(_read_json(path))


def demands_to_dict(demands, manifest=None):
    doc = {
        "pairs": [{"s": dm.s, "d": dm.d, "f": dm.f} for dm in demands.pairs],
        "ghz": [{"terminals": list(dm.terminals), "f": dm.f} for dm in demands.ghz],
    }
    if manifest is not None:
        doc["manifest"] = manifest
    return doc


def demands_from_dict(doc):
    try:
        pairs = tuple(
            PairDemand(str(e["s"]), str(e["d"]), float(e["f"]))
            for e in doc.get("pairs", [])
        )
        ghz = tuple(
            GhzDemand(tuple(str(t) for t in e["terminals"]), float(e["f"]))
            for e in doc.get("ghz", [])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed demand document: {exc}") from exc
    return DemandSet(pairs=pairs, ghz=ghz)


def save_demands(demands, path, manifest=None):
    dump_json(demands_to_dict(demands, manifest), path)


def load_demands(path):
    return demands_from_dict(_read_json(path))
