"""Directed communication topologies for containment problems.

Agents are numbered 1..n for followers and n+1..n+m for leaders.  An edge
(j, i, w) means information flows from agent j to agent i with weight w > 0;
leaders never receive edges.  The follower block L1 and leader block L2 of
the graph Laplacian carry all coupling used by the observers, and the rows
of -L1^{-1} L2 are the convex weights that define each follower's target in
the leaders' hull.
"""

from __future__ import annotations

import collections
import dataclasses

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "TopologyReport",
    "LaplacianPartition",
    "build_graph",
    "validate_topology",
    "laplacian_partition",
    "relabel_topological",
    "random_topology",
]


class GraphError(ValueError):
    """Raised for malformed edge lists or topologies without containment structure."""


@dataclasses.dataclass(frozen=True)
class Graph:
    """Weighted directed graph over n followers and m leaders.

    Edges are (source, target, weight) triples with 1-based agent ids.
    Instances built through :func:`build_graph` additionally satisfy the
    containment assumptions (acyclic, every follower reachable from some
    leader); the raw constructor performs shape checks only so that
    diagnostic tooling can inspect defective topologies.
    """

    n_followers: int
    m_leaders: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        if self.n_followers < 1:
            raise GraphError("need at least one follower")
        if self.m_leaders < 1:
            raise GraphError("need at least one leader")
        object.__setattr__(
            self,
            "edges",
            tuple((int(j), int(i), float(w)) for j, i, w in self.edges),
        )
        cache: dict[int, list[tuple[int, float]]] = {}
        for j, i, w in self.edges:
            cache.setdefault(i, []).append((j, w))
        object.__setattr__(self, "_in_cache", cache)

    @property
    def n_agents(self) -> int:
        return self.n_followers + self.m_leaders

    def is_leader(self, agent: int) -> bool:
        return agent > self.n_followers

    def in_edges(self, agent: int) -> list[tuple[int, float]]:
        """(source, weight) pairs for every edge pointing at `agent`."""
        return self._in_cache.get(agent, [])

    def follower_adjacency(self) -> np.ndarray:
        """n x n matrix a[i-1, j-1] = weight of follower edge j -> i (0 if absent)."""
        n = self.n_followers
        a = np.zeros((n, n))
        for j, i, w in self.edges:
            if i <= n and j <= n:
                a[i - 1, j - 1] = w
        return a

    def leader_weights(self) -> np.ndarray:
        """n x m matrix d[i-1, k-1] = weight of edge from leader n+k to follower i."""
        n, m = self.n_followers, self.m_leaders
        d = np.zeros((n, m))
        for j, i, w in self.edges:
            if i <= n and j > n:
                d[i - 1, j - n - 1] = w
        return d


@dataclasses.dataclass(frozen=True)
class TopologyReport:
    """Diagnostic result of :func:`validate_topology`."""

    acyclic: bool
    reachable: bool
    unreachable_followers: tuple[int, ...]
    cycle_members: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return self.acyclic and self.reachable


@dataclasses.dataclass(frozen=True)
class LaplacianPartition:
    """Follower/leader blocks of the Laplacian and the hull weights -L1^{-1} L2."""

    L1: np.ndarray
    L2: np.ndarray
    containment_weights: np.ndarray


def build_graph(
    n_followers: int, m_leaders: int, edges: list[tuple[int, int, float]]
) -> Graph:
    """Validate an edge list and return a containment-ready :class:`Graph`.

    Raises
    ------
    GraphError
        On ids out of range, self-loops, duplicate edges, nonpositive
        weights, edges into a leader, cycles, or followers unreachable
        from every leader.
    """
    n, m = int(n_followers), int(m_leaders)
    seen: set[tuple[int, int]] = set()
    for j, i, w in edges:
        if not (1 <= j <= n + m) or not (1 <= i <= n + m):
            raise GraphError(f"edge ({j}, {i}): agent id out of range 1..{n + m}")
        if j == i:
            raise GraphError(f"edge ({j}, {i}): self-loop")
        if i > n:
            raise GraphError(f"edge ({j}, {i}): leaders cannot receive edges")
        if w <= 0:
            raise GraphError(f"edge ({j}, {i}): weight must be positive, got {w}")
        if (j, i) in seen:
            raise GraphError(f"edge ({j}, {i}): duplicate")
        seen.add((j, i))
    g = Graph(n, m, tuple(edges))
    report = validate_topology(g)
    if not report.acyclic:
        raise GraphError(f"cycle among followers: {sorted(report.cycle_members)}")
    if not report.reachable:
        raise GraphError(
            "followers unreachable from every leader: "
            f"{sorted(report.unreachable_followers)}"
        )
    return g


def validate_topology(g: Graph) -> TopologyReport:
    """Check acyclicity and leader-to-follower reachability without raising."""
    n = g.n_followers
    out: dict[int, list[int]] = collections.defaultdict(list)
    indeg = {i: 0 for i in range(1, n + 1)}
    for j, i, _ in g.edges:
        out[j].append(i)
        if i <= n and j <= n:
            indeg[i] += 1

    # Kahn's algorithm over the follower subgraph; leftovers lie on cycles.
    follower_out: dict[int, list[int]] = collections.defaultdict(list)
    for j, i, _ in g.edges:
        if j <= n and i <= n:
            follower_out[j].append(i)
    queue = collections.deque(i for i in range(1, n + 1) if indeg[i] == 0)
    removed = 0
    indeg_work = dict(indeg)
    while queue:
        v = queue.popleft()
        removed += 1
        for t in follower_out[v]:
            indeg_work[t] -= 1
            if indeg_work[t] == 0:
                queue.append(t)
    cycle_members = tuple(i for i in range(1, n + 1) if indeg_work[i] > 0)

    visited: set[int] = set()
    frontier = collections.deque(range(n + 1, n + g.m_leaders + 1))
    while frontier:
        v = frontier.popleft()
        for t in out[v]:
            if t not in visited:
                visited.add(t)
                frontier.append(t)
    unreachable = tuple(i for i in range(1, n + 1) if i not in visited)

    return TopologyReport(
        acyclic=not cycle_members,
        reachable=not unreachable,
        unreachable_followers=unreachable,
        cycle_members=cycle_members,
    )


def laplacian_partition(g: Graph) -> LaplacianPartition:
    """Split the Laplacian into follower/leader blocks and solve for hull weights.

    L1[i, i] sums all in-weights of follower i+1, off-diagonals are negated
    follower adjacencies, and L2 holds the negated leader weights.  The
    containment weights -L1^{-1} L2 are computed from one LU factorization
    of L1 applied to every column of L2; each row is verified to sum to one
    within 1e-10.
    """
    a = g.follower_adjacency()
    d = g.leader_weights()
    L1 = np.diag(a.sum(axis=1) + d.sum(axis=1)) - a
    L2 = -d
    try:
        weights = -np.linalg.solve(L1, L2)
    except np.linalg.LinAlgError as exc:
        raise GraphError(f"singular follower Laplacian block: {exc}") from exc
    row_sums = weights.sum(axis=1)
    if not np.allclose(row_sums, 1.0, rtol=0.0, atol=1e-10):
        worst = int(np.argmax(np.abs(row_sums - 1.0)))
        raise GraphError(
            f"hull weight row {worst + 1} sums to {row_sums[worst]!r}, expected 1; "
            "topology violates the containment assumptions"
        )
    return LaplacianPartition(L1=L1, L2=L2, containment_weights=weights)


def relabel_topological(g: Graph) -> tuple[Graph, tuple[int, ...]]:
    """Renumber followers in topological order so L1 becomes lower triangular.

    Returns the relabeled graph and `order`, the tuple of original follower
    ids listed in their new order (new id k+1 corresponds to old follower
    order[k]).  Leaders keep their ids.  Ties are broken by smallest
    original id so the result is deterministic.
    """
    report = validate_topology(g)
    if not report.acyclic:
        raise GraphError(f"cycle among followers: {sorted(report.cycle_members)}")
    n = g.n_followers
    follower_out: dict[int, list[int]] = collections.defaultdict(list)
    indeg = {i: 0 for i in range(1, n + 1)}
    for j, i, _ in g.edges:
        if j <= n and i <= n:
            follower_out[j].append(i)
            indeg[i] += 1
    import heapq

    heap = [i for i in range(1, n + 1) if indeg[i] == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for t in follower_out[v]:
            indeg[t] -= 1
            if indeg[t] == 0:
                heapq.heappush(heap, t)
    new_id = {old: k + 1 for k, old in enumerate(order)}
    relabeled = tuple(
        (
            new_id.get(j, j),
            new_id.get(i, i),
            w,
        )
        for j, i, w in g.edges
    )
    return Graph(n, g.m_leaders, relabeled), tuple(order)


def random_topology(
    rng: np.random.Generator, n_max: int = 8, m_max: int = 4
) -> Graph:
    """Draw a random valid topology: acyclic, every follower leader-reachable.

    Follower i may receive edges from lower-numbered followers and from
    leaders; at least one incoming edge is forced per follower, which by
    induction keeps every follower on a directed path from a leader.
    Weights are uniform in [0.5, 2.0].  Useful for property testing.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    leaders = list(range(n + 1, n + m + 1))
    edges: list[tuple[int, int, float]] = []
    for i in range(1, n + 1):
        sources = [j for j in range(1, i) if rng.random() < 0.4]
        sources += [k for k in leaders if rng.random() < 0.5]
        if not sources:
            sources = [int(rng.choice(leaders))]
        for j in sources:
            edges.append((j, i, float(rng.uniform(0.5, 2.0))))
    return build_graph(n, m, edges)
