"""Multi-pair EP distribution as a hypergraph flow LP.

Hypervertices stand for EPs of a given (floored) fidelity between a node
pair, one per producing operation plus a consolidation vertex; hyperarcs
stand for link generation, swaps, self-purification (two equal-fidelity
copies), purification with distinct fidelities, and demand delivery.  Flow
through an operation vertex pays the operation's success probability and a
waiting factor: 2/3 for two-operand operations (both operands must arrive),
1/2 for self-purification (the two copies are produced sequentially).

The same machinery also hosts the GHZ variant (subsets instead of pairs),
which reuses ``build_lp``/``solve_lp``/``extract_levels`` unchanged.
"""

from dataclasses import dataclass, field

from . import entmath, simplex
from .errors import (
    CyclicFlow,
    EmptyGrid,
    InvariantViolation,
    NoDemand,
)
from .netmodel import DemandSet, PairDemand, canonical_pair

START = "start"
TERM = "term"
AVAIL = "avail"
SWAP = "swap"
PURIFY1 = "purify1"
PURIFY2 = "purify2"
FUSE = "fuse"

FULL = "full"
NAIVE = "naive"

_OP_FACTORS = {SWAP: 2.0 / 3.0, FUSE: 2.0 / 3.0, PURIFY1: 0.5, PURIFY2: 2.0 / 3.0}


@dataclass(frozen=True)
class Vertex:
    kind: str
    key: tuple = ()
    fidx: int = -1

    def label(self):
        if self.kind in (START, TERM):
            return self.kind
        return f"{self.kind}_{'_'.join(self.key)}_{self.fidx:03d}"


@dataclass(frozen=True)
class Arc:
    """Hyperarc with 1-2 tails and one head.

    ``coeff`` carries the fidelity-derived success probability for purify
    arcs (swap/fuse arcs use the params value at LP build time); ``capacity``
    bounds start arcs; ``demand`` tags term arcs with their demand index.
    """

    name: str
    family: str
    tails: tuple
    head: Vertex
    coeff: float | None = None
    capacity: float | None = None
    demand: int | None = None


@dataclass
class Hypergraph:
    grid: object
    vertices: set
    arcs: list
    demands: tuple
    stats: dict = field(default_factory=dict)


def _sanitize(node_id):
    if not all(ch.isalnum() or ch in "_-." for ch in node_id):
        raise InvariantViolation(f"node id {node_id!r} unusable in LP names")
    return node_id


def build_hypergraph(net, demands, grid):
    """EP-flavored hypergraph over all node pairs and grid fidelities."""
    if grid is None or len(grid) == 0:
        raise EmptyGrid("fidelity grid required")
    if isinstance(demands, DemandSet):
        pair_demands = demands.pairs
    else:
        pair_demands = tuple(demands)
    if not pair_demands:
        raise NoDemand("at least one pair demand required")

    nodes = sorted(_sanitize(n) for n in net.nodes)
    nf = len(grid)
    vertices = {Vertex(START), Vertex(TERM)}
    pairs = [
        (a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :]
    ]
    for pair in pairs:
        for fidx in range(nf):
            for kind in (AVAIL, SWAP, PURIFY1, PURIFY2):
                vertices.add(Vertex(kind, pair, fidx))

    arcs = []

    # [Start] link generation feeds the consolidation vertex at the link's
    # floored fidelity, bounded by the link rate.
    for (a, b), props in sorted(net.links.items()):
        fidx = grid.floor_index(props.fidelity)
        if fidx is None:
            continue
        arcs.append(Arc(
            name=f"z_st_{a}_{b}",
            family="start",
            tails=(Vertex(START),),
            head=Vertex(AVAIL, (a, b), fidx),
            capacity=props.rate,
        ))

    # [Swap] all intermediate nodes and tail fidelity combinations.
    for (u, v) in pairs:
        for w in nodes:
            if w == u or w == v:
                continue
            left_pair = canonical_pair(u, w)
            right_pair = canonical_pair(w, v)
            for fi in range(nf):
                for fj in range(nf):
                    out = grid.floor_index(
                        entmath.swap_fidelity(grid[fi], grid[fj]))
                    if out is None:
                        continue
                    arcs.append(Arc(
                        name=f"z_sw_{u}_{v}_{w}_{fi:03d}_{fj:03d}",
                        family="swap",
                        tails=(Vertex(AVAIL, left_pair, fi),
                               Vertex(AVAIL, right_pair, fj)),
                        head=Vertex(SWAP, (u, v), out),
                    ))

    # [SelfPurify] two copies of the same fidelity; only arcs that strictly
    # raise the fidelity index are kept (others waste rate for no gain).
    for (u, v) in pairs:
        for fi in range(nf):
            f = grid[fi]
            if f <= 0.5:
                continue
            out = entmath.ep_purify(f, f)
            head_idx = grid.floor_index(out.fidelity)
            if head_idx is None or head_idx <= fi:
                continue
            arcs.append(Arc(
                name=f"z_p1_{u}_{v}_{fi:03d}",
                family="self_purify",
                tails=(Vertex(AVAIL, (u, v), fi),),
                head=Vertex(PURIFY1, (u, v), head_idx),
                coeff=out.success_prob,
            ))

    # [PurifyDistinct] two copies with different fidelities; the higher tail
    # is the target, and the head must improve on it.
    for (u, v) in pairs:
        for lo in range(nf):
            for hi in range(lo + 1, nf):
                out = entmath.ep_purify(grid[hi], grid[lo])
                head_idx = grid.floor_index(out.fidelity)
                if head_idx is None or head_idx <= hi:
                    continue
                arcs.append(Arc(
                    name=f"z_p2_{u}_{v}_{hi:03d}_{lo:03d}",
                    family="purify_distinct",
                    tails=(Vertex(AVAIL, (u, v), hi),
                           Vertex(AVAIL, (u, v), lo)),
                    head=Vertex(PURIFY2, (u, v), head_idx),
                    coeff=out.success_prob,
                ))

    # Relay arcs hand every operation's output to the consolidation vertex.
    for (u, v) in pairs:
        for fidx in range(nf):
            for kind, tag in ((SWAP, "sw"), (PURIFY1, "p1"), (PURIFY2, "p2")):
                arcs.append(Arc(
                    name=f"z_rl_{tag}_{u}_{v}_{fidx:03d}",
                    family="relay",
                    tails=(Vertex(kind, (u, v), fidx),),
                    head=Vertex(AVAIL, (u, v), fidx),
                ))

    # [Term] one arc per demand and qualifying grid fidelity.
    for k, dm in enumerate(pair_demands):
        pair = canonical_pair(dm.s, dm.d)
        for fidx in range(nf):
            if grid[fidx] >= dm.f:
                arcs.append(Arc(
                    name=f"z_tm_{k:03d}_{pair[0]}_{pair[1]}_{fidx:03d}",
                    family="term",
                    tails=(Vertex(AVAIL, pair, fidx),),
                    head=Vertex(TERM),
                    demand=k,
                ))

    hg = Hypergraph(grid=grid, vertices=vertices, arcs=arcs, demands=tuple(pair_demands))
    hg.stats = _census(hg)
    return hg


def _census(hg):
    counts = {}
    for arc in hg.arcs:
        counts[arc.family] = counts.get(arc.family, 0) + 1
    return {"vertices": len(hg.vertices), "arcs": len(hg.arcs), "families": counts}


def build_lp(hg, params, mode=FULL, objective="total"):
    """LP over hyperarc rates.

    Per operation vertex: sum(out) <= factor * p * sum(in) with factor 2/3
    (swap/fuse/distinct-purify) or 1/2 (self-purify); p is p_s/p_f for
    swaps/fusions and the arc's fidelity-derived purification probability
    otherwise.  Consolidation vertices conserve flow; start arcs are bounded
    by link capacity.  NAIVE mode drops purification arcs except on demanded
    pairs ("top-level-only" purification).  ``objective`` is "total"
    (sum of delivered rates) or "min_demand" (max-min across demands).
    """
    demanded = {canonical_pair(dm.s, dm.d) for dm in hg.demands}
    arcs = []
    for arc in hg.arcs:
        if mode == NAIVE and arc.family in ("self_purify", "purify_distinct"):
            if tuple(arc.head.key) not in demanded:
                continue
        arcs.append(arc)

    inflow = {}
    outflow = {}
    for arc in arcs:
        inflow.setdefault(arc.head, []).append(arc)
        for tail in arc.tails:
            outflow.setdefault(tail, []).append(arc)

    rows = []
    variables = [arc.name for arc in arcs]
    op_p = {SWAP: params.p_s, FUSE: params.p_f}

    touched = set(inflow) | set(outflow)
    for vertex in touched:
        if vertex.kind in (START, TERM):
            continue
        ins = inflow.get(vertex, [])
        outs = outflow.get(vertex, [])
        if not ins and not outs:
            continue
        coefs = {}
        if vertex.kind == AVAIL:
            for arc in outs:
                coefs[arc.name] = coefs.get(arc.name, 0.0) + 1.0
            for arc in ins:
                coefs[arc.name] = coefs.get(arc.name, 0.0) - 1.0
            tag = "av"
        else:
            factor = _OP_FACTORS[vertex.kind]
            for arc in outs:
                coefs[arc.name] = coefs.get(arc.name, 0.0) + 1.0
            for arc in ins:
                p = arc.coeff if arc.coeff is not None else op_p[vertex.kind]
                coefs[arc.name] = coefs.get(arc.name, 0.0) - factor * p
            tag = {SWAP: "sw", PURIFY1: "p1", PURIFY2: "p2", FUSE: "fu"}[vertex.kind]
        rows.append(simplex.Row(f"c_{tag}_{vertex.label()}", coefs, 0.0))

    for arc in arcs:
        if arc.capacity is not None:
            rows.append(simplex.Row(f"c_cap_{arc.name}", {arc.name: 1.0}, arc.capacity))

    if objective == "total":
        obj = {arc.name: 1.0 for arc in arcs if arc.family == "term"}
    elif objective == "min_demand":
        floor_var = "z_a_min_demand"
        variables.append(floor_var)
        obj = {floor_var: 1.0}
        for k in range(len(hg.demands)):
            coefs = {floor_var: 1.0}
            for arc in arcs:
                if arc.family == "term" and arc.demand == k:
                    coefs[arc.name] = -1.0
            rows.append(simplex.Row(f"c_min_{k:03d}", coefs, 0.0))
    else:
        raise InvariantViolation(f"unknown objective {objective!r}")

    model = simplex.LpModel(variables=variables, objective=obj, rows=rows)
    model.meta = {
        "mode": mode,
        "objective": objective,
        "arcs": {arc.name: arc for arc in arcs},
        "demands": hg.demands,
        "stats": _census(hg),
    }
    return model.finalize()


def solve_lp(model):
    """Solve with the internal simplex; returns {arc name: rate}."""
    solution = simplex.solve(model)
    values = {k: v for k, v in solution.values.items()}
    values["__objective__"] = solution.objective
    return values


def export_lp(model, fmt, path):
    """Write the model as LP text or free MPS; output is byte-stable."""
    fmt = fmt.lower()
    if fmt in ("lp", "lp_text"):
        text = simplex.write_lp_text(model)
    elif fmt == "mps":
        text = simplex.write_mps(model)
    else:
        raise InvariantViolation(f"unknown export format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text


# ---------------------------------------------------------------------------
# Level-based structure extraction

_FLOW_EPS = 1e-9
_CONSERVATION_TOL = 1e-6


@dataclass
class LevelStructure:
    """Layered view of a solved flow: operations grouped by longest-path
    depth from the source, plus per-demand delivered rates."""

    layers: list
    delivered: dict
    max_residual: float

    def to_dict(self):
        return {
            "layers": [
                [op for op in layer] for layer in self.layers
            ],
            "delivered": {str(k): v for k, v in sorted(self.delivered.items())},
            "max_residual": self.max_residual,
        }


def extract_levels(hg, solution, params=None):
    """Drop negligible arcs, layer the rest by depth, verify conservation.

    Raises :class:`CyclicFlow` when the retained arcs contain a directed
    cycle, which signals a corrupt solution.
    """
    arcs = [a for a in hg.arcs if solution.get(a.name, 0.0) >= _FLOW_EPS]

    # Conservation per retained vertex (checked before layering so that flow
    # appearing from nowhere is reported as a conservation error).
    inflow = {}
    outflow = {}
    for arc in arcs:
        z = solution[arc.name]
        inflow.setdefault(arc.head, []).append((arc, z))
        for tail in arc.tails:
            outflow.setdefault(tail, []).append((arc, z))
    max_residual = 0.0
    for vertex in set(inflow) | set(outflow):
        if vertex.kind in (START, TERM):
            continue
        outs = sum(z for _, z in outflow.get(vertex, []))
        if vertex.kind == AVAIL:
            allowed = sum(z for _, z in inflow.get(vertex, []))
        else:
            factor = _OP_FACTORS[vertex.kind]
            allowed = 0.0
            for arc, z in inflow.get(vertex, []):
                p = arc.coeff
                if p is None:
                    if params is None:
                        raise InvariantViolation(
                            "params required to check swap/fuse conservation")
                    p = params.p_s if vertex.kind == SWAP else params.p_f
                allowed += factor * p * z
        max_residual = max(max_residual, outs - allowed)
    if max_residual > _CONSERVATION_TOL:
        raise InvariantViolation(
            f"flow conservation violated by {max_residual:.3e}")

    # Longest-path layering: a vertex completes once all its producer arcs
    # are placed; an arc is placeable once all its tails are complete.
    producers_left = {}
    for arc in arcs:
        producers_left[arc.head] = producers_left.get(arc.head, 0) + 1
    depth = {Vertex(START): 0}
    pending_depth = {}
    waiting = {}
    arc_wait = {}
    ready = []
    for arc in arcs:
        count = 0
        for tail in arc.tails:
            if tail.kind == START or producers_left.get(tail, 0) == 0:
                depth.setdefault(tail, 0)
            else:
                count += 1
                waiting.setdefault(tail, []).append(arc)
        arc_wait[arc.name] = count
        if count == 0:
            ready.append(arc)
    arc_depth = {}
    while ready:
        arc = ready.pop()
        d = 1 + max(depth[t] for t in arc.tails)
        arc_depth[arc.name] = d
        head = arc.head
        pending_depth[head] = max(pending_depth.get(head, 0), d)
        producers_left[head] -= 1
        if producers_left[head] == 0:
            depth[head] = pending_depth[head]
            for consumer in waiting.get(head, []):
                arc_wait[consumer.name] -= 1
                if arc_wait[consumer.name] == 0:
                    ready.append(consumer)
    if len(arc_depth) != len(arcs):
        raise CyclicFlow(
            f"{len(arcs) - len(arc_depth)} retained arcs form a cycle")

    by_depth = {}
    for arc in arcs:
        op = {
            "name": arc.name,
            "kind": arc.family,
            "operands": [t.label() for t in arc.tails],
            "produces": arc.head.label(),
            "rate": solution[arc.name],
        }
        by_depth.setdefault(arc_depth[arc.name], []).append(op)
    layers = [sorted(by_depth[d], key=lambda o: o["name"])
              for d in sorted(by_depth)]

    delivered = {}
    for arc in arcs:
        if arc.family == "term":
            delivered[arc.demand] = delivered.get(arc.demand, 0.0) + solution[arc.name]
    for k in range(len(hg.demands)):
        delivered.setdefault(k, 0.0)

    return LevelStructure(layers=layers, delivered=delivered,
                          max_residual=max(max_residual, 0.0))


# ---------------------------------------------------------------------------
# Fidelity maximization under a rate constraint


def max_fidelity_under_rate(net, pair, r_min, grid, params, iterations=8,
                            mode=FULL):
    """Largest grid fidelity whose LP-optimal rate still reaches ``r_min``.

    Bisection over demandable grid fidelities (> 0.5), first probe at the
    grid value closest to 0.75; achievable rate is nonincreasing in the
    threshold, so the boundary is exact once the interval closes.  Returns
    None when even the lowest demandable fidelity falls short.
    """
    if r_min <= 0:
        raise InvariantViolation("r_min must be positive")
    s, d = pair
    candidates = [i for i in range(len(grid)) if grid[i] > 0.5]
    if not candidates:
        raise EmptyGrid("no demandable fidelity above 0.5 on the grid")

    def achievable(idx):
        demand = DemandSet(pairs=(PairDemand(s, d, grid[idx]),))
        hg = build_hypergraph(net, demand, grid)
        model = build_lp(hg, params, mode=mode)
        return solve_lp(model)["__objective__"] >= r_min - 1e-9

    lo, hi = 0, len(candidates) - 1
    best = None
    probes = 0
    start_idx = grid.floor_index(0.75)
    first = min(range(len(candidates)), key=lambda i: abs(candidates[i] - (start_idx or 0)))
    while lo <= hi and probes < iterations:
        mid = first if probes == 0 else (lo + hi) // 2
        mid = min(max(mid, lo), hi)
        probes += 1
        if achievable(candidates[mid]):
            best = candidates[mid]
            lo = mid + 1
        else:
            hi = mid - 1
    return None if best is None else grid[best]
