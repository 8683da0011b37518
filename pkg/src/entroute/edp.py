"""Single-pair EP distribution: minimum-latency purification-augmented
swapping trees.

The solver runs a label-setting search over states (node pair, grid
fidelity): every swap strictly increases latency (the 3/2 max term divided
by p_s) and every pumping run adds positive latency, so states can be
finalized in ascending latency order, which resolves the cyclic
purify-up/swap-down dependencies among states.  A brute-force enumerator
over paths, tree shapes, and pumping chains serves as an independent
oracle, and a quantity-model variant reinterprets rates as integer EP
counts.
"""

import heapq
import itertools
import json
from dataclasses import dataclass, field

from . import entmath
from .errors import (
    AnnotationMismatch,
    InvalidDemand,
    InvariantViolation,
    SearchBudgetExceeded,
)
from .netmodel import canonical_pair

LEAF = "leaf"
SWAP = "swap"
PURIFY = "purify"


@dataclass(frozen=True)
class OperationTree:
    """Node of a purification-augmented swapping tree.

    ``kind`` is one of leaf/swap/purify.  ``a``/``b`` are the produced pair's
    endpoints, ``via`` the swap's intermediate node, ``iterations`` the pumping
    run length of a purify node.  Annotations: ``fidelity`` (grid value when
    produced by the grid solver, exact otherwise), ``latency`` in seconds and
    ``rate`` = 1/latency, or an integer ``count`` in quantity mode.
    """

    kind: str
    a: str
    b: str
    via: str | None = None
    iterations: int = 0
    fidelity: float = 0.0
    latency: float | None = None
    rate: float | None = None
    count: int | None = None
    children: tuple = ()

    def __post_init__(self):
        if self.kind == LEAF and self.children:
            raise InvariantViolation("leaf node cannot have children")
        if self.kind == SWAP and len(self.children) != 2:
            raise InvariantViolation("swap node needs exactly two children")
        if self.kind == PURIFY and len(self.children) != 1:
            raise InvariantViolation("purify node needs exactly one child")

    @property
    def pair(self):
        return canonical_pair(self.a, self.b)

    def walk(self, path="root"):
        yield path, self
        for i, child in enumerate(self.children):
            yield from child.walk(f"{path}.children[{i}]")

    def n_nodes(self):
        return 1 + sum(c.n_nodes() for c in self.children)

    def to_dict(self):
        doc = {
            "kind": self.kind,
            "a": self.a,
            "b": self.b,
            "fidelity": self.fidelity,
        }
        if self.via is not None:
            doc["via"] = self.via
        if self.kind == PURIFY:
            doc["iterations"] = self.iterations
        if self.latency is not None:
            doc["latency"] = self.latency
        if self.rate is not None:
            doc["rate"] = self.rate
        if self.count is not None:
            doc["count"] = self.count
        if self.children:
            doc["children"] = [c.to_dict() for c in self.children]
        return doc

    @classmethod
    def from_dict(cls, doc):
        return cls(
            kind=doc["kind"],
            a=doc["a"],
            b=doc["b"],
            via=doc.get("via"),
            iterations=int(doc.get("iterations", 0)),
            fidelity=float(doc["fidelity"]),
            latency=doc.get("latency"),
            rate=doc.get("rate"),
            count=doc.get("count"),
            children=tuple(cls.from_dict(c) for c in doc.get("children", ())),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_tree(tree, params, grid=None, tolerance=1e-9):
    """Recompute annotations bottom-up and return the root (fidelity, latency).

    With ``grid`` given, fidelities are floored to the grid at every node,
    matching the grid solver's accounting; without it the evaluation is
    exact.  Stored fidelity/latency annotations that disagree beyond
    ``tolerance`` raise :class:`AnnotationMismatch` naming the node path.
    """

    def visit(node, path):
        if node.kind == LEAF:
            fid = node.fidelity
            lat = node.latency if node.latency is not None else (
                1.0 / node.rate if node.rate else None
            )
            if lat is None:
                raise AnnotationMismatch("leaf carries neither latency nor rate", path)
            fid = _maybe_floor(fid, grid, path)
        elif node.kind == SWAP:
            fl, ll = visit(node.children[0], f"{path}.children[0]")
            fr, lr = visit(node.children[1], f"{path}.children[1]")
            fid = _maybe_floor(entmath.swap_fidelity(fl, fr), grid, path)
            lat = entmath.swap_latency(ll, lr, params)
        elif node.kind == PURIFY:
            fc, lc = visit(node.children[0], f"{path}.children[0]")
            steps = entmath.iterated_purify(fc, node.iterations)
            fid = _maybe_floor(steps[node.iterations].fidelity, grid, path)
            lat = entmath.iterated_purify_latency(lc, fc, node.iterations, params)
        else:
            raise AnnotationMismatch(f"unknown node kind {node.kind!r}", path)
        if abs(node.fidelity - fid) > tolerance:
            raise AnnotationMismatch(
                f"fidelity annotation {node.fidelity} != recomputed {fid}", path
            )
        if node.latency is not None and abs(node.latency - lat) > tolerance * max(1.0, lat):
            raise AnnotationMismatch(
                f"latency annotation {node.latency} != recomputed {lat}", path
            )
        return fid, lat

    return visit(tree, "root")


def _maybe_floor(fid, grid, path):
    if grid is None:
        return fid
    floored = grid.floor(fid)
    if floored is None:
        raise AnnotationMismatch(f"fidelity {fid} below grid minimum", path)
    return floored


# ---------------------------------------------------------------------------
# Label-setting DP


@dataclass(frozen=True)
class _Back:
    """Back-pointer describing how a state is produced."""

    op: str
    via: str = ""
    iterations: int = 0
    left: tuple | None = None  # (pair, fidx) of operand states
    right: tuple | None = None


@dataclass
class DpEntry:
    latency: float
    n_nodes: int
    key: str
    back: _Back
    order: int


@dataclass
class DpTable:
    """Finalized best-latency states keyed by (pair, grid fidelity index)."""

    grid: object
    entries: dict = field(default_factory=dict)
    finalize_order: list = field(default_factory=list)

    def best_at_least(self, pair, f_min):
        """Least latency among states of ``pair`` with fidelity >= f_min."""
        best = None
        for idx in range(len(self.grid)):
            if self.grid[idx] < f_min:
                continue
            entry = self.entries.get((pair, idx))
            if entry and (best is None or entry.latency < best.latency):
                best = entry
        return best


def _swap_fidx_matrix(grid):
    """Floored grid index of the swap of every grid-fidelity combination."""
    n = len(grid)
    mat = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            idx = grid.floor_index(entmath.swap_fidelity(grid[i], grid[j]))
            mat[i][j] = idx
            mat[j][i] = idx
    return mat


def label_setting(net, grid, params):
    """Run the full label-setting DP and return the finalized table."""
    table = DpTable(grid=grid)
    swap_mat = _swap_fidx_matrix(grid)

    # Pumping outcomes per source grid index, computed once.
    pump = {}
    for idx in range(len(grid)):
        f0 = grid[idx]
        if f0 <= 0.5:
            continue
        steps = entmath.iterated_purify(f0, params.i_max)
        runs = []
        for i in range(1, params.i_max + 1):
            tgt = grid.floor_index(steps[i].fidelity)
            if tgt is not None and tgt > idx:
                runs.append((i, tgt, [s.success_prob for s in steps[:i]]))
        pump[idx] = runs

    heap = []
    counter = itertools.count()
    best = {}

    def relax(state, latency, n_nodes, key, back):
        incumbent = best.get(state)
        cand = (latency, n_nodes, key)
        if incumbent is None or cand < incumbent:
            best[state] = cand
            heapq.heappush(heap, (latency, n_nodes, key, next(counter), state, back))

    for (a, b), props in net.links.items():
        fidx = grid.floor_index(props.fidelity)
        if fidx is None:
            continue
        relax(((a, b), fidx), 1.0 / props.rate, 1, f"l:{a},{b}", _Back("leaf"))

    by_node = {n: [] for n in net.nodes}
    order = 0
    while heap:
        latency, n_nodes, key, _, state, back = heapq.heappop(heap)
        if state in table.entries:
            continue
        if best.get(state, (float("inf"),))[0] < latency:
            continue
        table.entries[state] = DpEntry(latency, n_nodes, key, back, order)
        table.finalize_order.append(state)
        order += 1
        (u, v), fidx = state

        for i, tgt, probs in pump.get(fidx, ()):
            lat = latency
            for p in probs:
                lat = (lat + latency + params.t_p + params.t_c) / p
            relax(((u, v), tgt), lat, n_nodes + 1, f"p:{i};{key}", _Back(
                "purify", iterations=i, left=state))

        for shared, other in ((u, v), (v, u)):
            for (pair2, fidx2, lat2, nn2, key2) in by_node[shared]:
                w = pair2[0] if pair2[1] == shared else pair2[1]
                if w == other:
                    continue
                out_idx = swap_mat[fidx][fidx2]
                if out_idx is None:
                    continue
                lat = entmath.swap_latency(latency, lat2, params)
                out_pair = canonical_pair(other, w)
                relax((out_pair, out_idx), lat, n_nodes + nn2 + 1,
                      f"s:{shared};{min(key, key2)};{max(key, key2)}",
                      _Back("swap", via=shared, left=state, right=(pair2, fidx2)))

        by_node[u].append(((u, v), fidx, latency, n_nodes, key))
        by_node[v].append(((u, v), fidx, latency, n_nodes, key))

    return table


def _build_tree(table, state):
    entry = table.entries[state]
    (a, b), fidx = state
    fid = table.grid[fidx]
    back = entry.back
    if back.op == "leaf":
        return OperationTree(LEAF, a, b, fidelity=fid, latency=entry.latency,
                             rate=1.0 / entry.latency)
    if back.op == "purify":
        child = _build_tree(table, back.left)
        return OperationTree(PURIFY, a, b, iterations=back.iterations, fidelity=fid,
                             latency=entry.latency, rate=1.0 / entry.latency,
                             children=(child,))
    left = _build_tree(table, back.left)
    right = _build_tree(table, back.right)
    # Order children so the left child produces (a, via).
    if canonical_pair(left.a, left.b) != canonical_pair(a, back.via):
        left, right = right, left
    return OperationTree(SWAP, a, b, via=back.via, fidelity=fid,
                         latency=entry.latency, rate=1.0 / entry.latency,
                         children=(left, right))


def solve_edp(net, s, d, f_min, grid, params):
    """Minimum-latency purification-augmented swapping tree for (s, d).

    Fidelity bookkeeping is floored to ``grid`` at every node; the returned
    tree's (grid) fidelity is >= ``f_min``.  Returns None when no state with
    fidelity >= f_min is reachable.
    """
    if s == d:
        raise InvalidDemand("source equals destination")
    if s not in net.nodes or d not in net.nodes:
        raise InvalidDemand(f"unknown endpoint in demand ({s!r}, {d!r})")
    if not (grid.min <= f_min <= grid.max):
        raise InvalidDemand(f"threshold {f_min} outside grid range")
    table = label_setting(net, grid, params)
    best_state = None
    best_entry = None
    pair = canonical_pair(s, d)
    for idx in range(len(grid)):
        if grid[idx] < f_min:
            continue
        entry = table.entries.get((pair, idx))
        if entry is None:
            continue
        cand = (entry.latency, entry.n_nodes, entry.key)
        if best_entry is None or cand < (best_entry.latency, best_entry.n_nodes, best_entry.key):
            best_state, best_entry = (pair, idx), entry
    if best_state is None:
        return None
    return _build_tree(table, best_state)


# ---------------------------------------------------------------------------
# Brute-force oracle

MAX_ORACLE_LEAVES = 8
_ORACLE_CANDIDATE_CAP = 2_000_000


def _simple_paths(net, s, d, max_edges):
    paths = []

    def dfs(node, visited, acc):
        if len(acc) > max_edges:
            return
        if node == d:
            paths.append(list(acc))
            return
        if len(acc) == max_edges:
            return
        for nb in net.neighbors(node):
            if nb in visited:
                continue
            visited.add(nb)
            acc.append((node, nb))
            dfs(nb, visited, acc)
            acc.pop()
            visited.remove(nb)

    dfs(s, {s}, [])
    return paths


def _tree_shapes(lo, hi):
    """All binary tree shapes over leaves lo..hi as nested index tuples."""
    if lo == hi:
        return [lo]
    shapes = []
    for mid in range(lo, hi):
        for left in _tree_shapes(lo, mid):
            for right in _tree_shapes(mid + 1, hi):
                shapes.append((left, right))
    return shapes


def _pump_chains(budget, i_max):
    """Pumping-run sequences (i_1, ..., i_m) with each run <= i_max and a
    total of at most ``budget`` iterations."""
    chains = [()]
    frontier = [()]
    while frontier:
        nxt = []
        for chain in frontier:
            used = sum(chain)
            for i in range(1, min(i_max, budget - used) + 1):
                ext = chain + (i,)
                chains.append(ext)
                nxt.append(ext)
        frontier = nxt
    return chains


def _pareto_insert(cands, fid, lat, builder):
    """Keep only candidates not dominated on (higher fidelity, lower latency)."""
    for f0, l0, _ in cands:
        if f0 >= fid and l0 <= lat:
            return
    cands[:] = [(f0, l0, b0) for f0, l0, b0 in cands if not (fid >= f0 and lat <= l0)]
    cands.append((fid, lat, builder))


def brute_force_edp(net, s, d, f_min, grid, params, max_leaves=4,
                    max_purify_per_node=2, floored=False):
    """Exhaustive oracle: enumerate simple paths, every binary swap-tree
    shape over each path, and every per-node pumping chain of total length
    <= ``max_purify_per_node``; evaluate candidates exactly (or with grid
    flooring when ``floored``) and return the best qualifying tree.

    Dominated (fidelity, latency) candidates are pruned per subtree; both
    combinators are monotone in both coordinates, so pruning cannot drop an
    optimal tree.
    """
    if max_leaves > MAX_ORACLE_LEAVES:
        raise SearchBudgetExceeded(f"max_leaves {max_leaves} > {MAX_ORACLE_LEAVES}")
    if s == d:
        raise InvalidDemand("source equals destination")

    chains = _pump_chains(max_purify_per_node, params.i_max)
    snap = (lambda f: grid.floor(f)) if floored else (lambda f: f)
    budget = [0]

    def with_chains(cands, a, b):
        out = []
        for fid, lat, builder in cands:
            for chain in chains:
                budget[0] += 1
                if budget[0] > _ORACLE_CANDIDATE_CAP:
                    raise SearchBudgetExceeded("oracle candidate cap exceeded")
                f, l, bld = fid, lat, builder
                ok = True
                for run in chain:
                    if f <= 0.5:
                        ok = False
                        break
                    steps = entmath.iterated_purify(f, run)
                    new_f = snap(steps[run].fidelity)
                    if new_f is None:
                        ok = False
                        break
                    l = entmath.iterated_purify_latency(l, f, run, params)
                    bld = _purify_builder(bld, a, b, run, new_f, l)
                    f = new_f
                if ok:
                    _pareto_insert(out, f, l, bld)
        return out

    def eval_shape(shape, path_edges, path_nodes):
        if isinstance(shape, int):
            a, b = path_edges[shape]
            pair = canonical_pair(a, b)
            props = net.links[pair]
            fid = snap(props.fidelity)
            if fid is None:
                return [], pair
            lat = 1.0 / props.rate
            builder = lambda f=fid, l=lat, p=pair: OperationTree(
                LEAF, p[0], p[1], fidelity=f, latency=l, rate=1.0 / l)
            return with_chains([(fid, lat, builder)], *pair), pair
        left_c, left_pair = eval_shape(shape[0], path_edges, path_nodes)
        right_c, right_pair = eval_shape(shape[1], path_edges, path_nodes)
        shared = set(left_pair) & set(right_pair)
        via = next(iter(shared))
        out_pair = canonical_pair(*(set(left_pair) ^ set(right_pair)))
        merged = []
        for fl, ll, bl in left_c:
            for fr, lr, br in right_c:
                fid = snap(entmath.swap_fidelity(fl, fr))
                if fid is None:
                    continue
                lat = entmath.swap_latency(ll, lr, params)
                builder = (lambda f=fid, l=lat, p=out_pair, v=via, bl=bl, br=br:
                           OperationTree(SWAP, p[0], p[1], via=v, fidelity=f,
                                         latency=l, rate=1.0 / l,
                                         children=(bl(), br())))
                _pareto_insert(merged, fid, lat, builder)
        return with_chains(merged, *out_pair), out_pair

    best = None
    for path in sorted(_simple_paths(net, s, d, max_leaves)):
        nodes = [path[0][0]] + [b for _, b in path]
        for shape in _tree_shapes(0, len(path) - 1):
            cands, _ = eval_shape(shape, path, nodes)
            for fid, lat, builder in cands:
                if fid < f_min:
                    continue
                if best is None or lat < best[0]:
                    best = (lat, builder)
    return None if best is None else best[1]()


def _purify_builder(child_builder, a, b, iterations, fid, lat):
    return lambda: OperationTree(PURIFY, a, b, iterations=iterations, fidelity=fid,
                                 latency=lat, rate=1.0 / lat,
                                 children=(child_builder(),))


# ---------------------------------------------------------------------------
# Quantity model: integer EP counts instead of rates


def solve_edp_quantity(net, s, d, f_min, grid, params):
    """Quantity-model variant: link rates are integer EP counts; swap and
    purification yield expected counts floored to integers.

    Returns the tree delivering the maximum number of copies with (grid)
    fidelity >= f_min, or None when the achievable count is zero.
    """
    if s == d:
        raise InvalidDemand("source equals destination")
    for pair, props in net.links.items():
        if props.rate != int(props.rate):
            raise InvalidDemand(f"link {pair!r} count {props.rate} is not an integer")
    if not (grid.min <= f_min <= grid.max):
        raise InvalidDemand(f"threshold {f_min} outside grid range")

    best = {}
    final = {}
    heap = []
    counter = itertools.count()

    def relax(state, count, n_nodes, key, back):
        if count < 1:
            return
        cand = (-count, n_nodes, key)
        incumbent = best.get(state)
        if incumbent is None or cand < incumbent:
            best[state] = cand
            heapq.heappush(heap, (-count, n_nodes, key, next(counter), state, back))

    for (a, b), props in net.links.items():
        fidx = grid.floor_index(props.fidelity)
        if fidx is None:
            continue
        relax(((a, b), fidx), int(props.rate), 1, f"l:{a},{b}", _Back("leaf"))

    by_node = {n: [] for n in net.nodes}
    while heap:
        neg, n_nodes, key, _, state, back = heapq.heappop(heap)
        if state in final:
            continue
        count = -neg
        final[state] = (count, n_nodes, key, back)
        (u, v), fidx = state

        f0 = grid[fidx]
        if f0 > 0.5:
            out = entmath.ep_purify(f0, f0)
            tgt = grid.floor_index(out.fidelity)
            if tgt is not None and tgt > fidx:
                yielded = int(out.success_prob * (count // 2) + 1e-9)
                relax(((u, v), tgt), yielded, n_nodes + 1, f"p:1;{key}",
                      _Back("purify", iterations=1, left=state))

        for shared, other in ((u, v), (v, u)):
            for (pair2, fidx2, count2, nn2, key2) in by_node[shared]:
                w = pair2[0] if pair2[1] == shared else pair2[1]
                if w == other:
                    continue
                out_idx = grid.floor_index(
                    entmath.swap_fidelity(grid[fidx], grid[fidx2]))
                if out_idx is None:
                    continue
                yielded = int(params.p_s * min(count, count2) + 1e-9)
                relax((canonical_pair(other, w), out_idx), yielded,
                      n_nodes + nn2 + 1,
                      f"s:{shared};{min(key, key2)};{max(key, key2)}",
                      _Back("swap", via=shared, left=state, right=(pair2, fidx2)))

        by_node[u].append(((u, v), fidx, count, n_nodes, key))
        by_node[v].append(((u, v), fidx, count, n_nodes, key))

    pair = canonical_pair(s, d)
    best_state = None
    for idx in range(len(grid)):
        if grid[idx] < f_min:
            continue
        got = final.get((pair, idx))
        if got is None:
            continue
        cand = (-got[0], got[1], got[2])
        if best_state is None or cand < best_state[0]:
            best_state = (cand, (pair, idx))
    if best_state is None:
        return None

    def build(state):
        count, _, _, back = final[state]
        (a, b), fidx = state
        fid = grid[fidx]
        if back.op == "leaf":
            return OperationTree(LEAF, a, b, fidelity=fid, count=count)
        if back.op == "purify":
            return OperationTree(PURIFY, a, b, iterations=1, fidelity=fid,
                                 count=count, children=(build(back.left),))
        left, right = build(back.left), build(back.right)
        if canonical_pair(left.a, left.b) != canonical_pair(a, back.via):
            left, right = right, left
        return OperationTree(SWAP, a, b, via=back.via, fidelity=fid, count=count,
                             children=(left, right))

    return build(best_state[1])
