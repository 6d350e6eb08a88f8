"""
Residual graph with successive shortest augmenting paths
"""
import heapq
from collections import deque
from typing import List, Optional, Sequence, Tuple

import structlog

logger = structlog.get_logger()

INFINITY = float("inf")
_REDUCED_SLACK = 1e-12


class Edge:
    src: int
    dst: int
    cap: int
    cost: float
    flow: int

    def __init__(self, src: int, dst: int, cap: int, cost: float):
        self.src = src
        self.dst = dst
        self.cap = cap
        self.cost = cost
        self.flow = 0

    @property
    def residual(self) -> int:
        return self.cap - self.flow


class ResidualGraph:
    """
    Directed graph where edge 2k is a forward arc and 2k+1 its reverse
    """

    def __init__(self):
        self.edges: List[Edge] = []
        self.adj: List[List[int]] = []

    @property
    def size(self) -> int:
        return len(self.adj)

    def add_vertex(self) -> int:
        self.adj.append([])
        return len(self.adj) - 1

    def add_edge(self, src: int, dst: int, *, cap: int, cost: float = 0.0) -> int:
        edge_id = len(self.edges)
        self.edges.append(Edge(src, dst, cap, cost))
        self.edges.append(Edge(dst, src, 0, -cost))
        self.adj[src].append(edge_id)
        self.adj[dst].append(edge_id + 1)
        return edge_id

    def push(self, edge_id: int, amount: int) -> None:
        self.edges[edge_id].flow += amount
        self.edges[edge_id ^ 1].flow -= amount

    # ========== SHORTEST PATHS ==========

    def dijkstra(self, src: int, potentials: Sequence[float]) -> Tuple[List[float], List[Optional[int]]]:
        """Reduced-cost Dijkstra from src, never re-entering it; returns reduced distances and parent edges"""
        dist = [INFINITY] * self.size
        parent: List[Optional[int]] = [None] * self.size
        dist[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            for e in self.adj[u]:
                edge = self.edges[e]
                if edge.residual <= 0 or edge.dst == src:
                    continue
                reduced = max(edge.cost + potentials[u] - potentials[edge.dst], 0.0)
                nd = d + reduced
                if nd < dist[edge.dst] - _REDUCED_SLACK:
                    dist[edge.dst] = nd
                    parent[edge.dst] = e
                    heapq.heappush(heap, (nd, edge.dst))
        return dist, parent

    def bellman_ford(self, src: int) -> Tuple[List[float], List[Optional[int]]]:
        """
        Queue-based Bellman-Ford from src over residual arcs

        Arcs back into src are skipped, so a routed supply is never withdrawn.
        """
        dist = [INFINITY] * self.size
        parent: List[Optional[int]] = [None] * self.size
        in_queue = [False] * self.size
        dist[src] = 0.0
        queue = deque([src])
        in_queue[src] = True
        relaxations = 0
        limit = self.size * max(len(self.edges), 1)
        while queue:
            u = queue.popleft()
            in_queue[u] = False
            for e in self.adj[u]:
                edge = self.edges[e]
                if edge.residual <= 0 or edge.dst == src:
                    continue
                nd = dist[u] + edge.cost
                if nd < dist[edge.dst] - _REDUCED_SLACK:
                    dist[edge.dst] = nd
                    parent[edge.dst] = e
                    relaxations += 1
                    if relaxations > limit:
                        raise RuntimeError("negative cycle in residual graph")
                    if not in_queue[edge.dst]:
                        queue.append(edge.dst)
                        in_queue[edge.dst] = True
        return dist, parent

    def distances_to(self, dst: int) -> List[float]:
        """Shortest residual-path cost from every vertex to dst"""
        dist = [INFINITY] * self.size
        in_queue = [False] * self.size
        dist[dst] = 0.0
        queue = deque([dst])
        in_queue[dst] = True
        relaxations = 0
        limit = self.size * max(len(self.edges), 1)
        while queue:
            v = queue.popleft()
            in_queue[v] = False
            # arcs entering v are the partners of arcs leaving v
            for e in self.adj[v]:
                edge = self.edges[e ^ 1]
                if edge.residual <= 0:
                    continue
                nd = dist[v] + edge.cost
                if nd < dist[edge.src] - _REDUCED_SLACK:
                    dist[edge.src] = nd
                    relaxations += 1
                    if relaxations > limit:
                        raise RuntimeError("negative cycle in residual graph")
                    if not in_queue[edge.src]:
                        queue.append(edge.src)
                        in_queue[edge.src] = True
        return dist

    def path_to(self, parent: Sequence[Optional[int]], src: int, dst: int) -> List[int]:
        path: List[int] = []
        cur = dst
        while cur != src:
            e = parent[cur]
            if e is None:
                return []
            path.append(e)
            cur = self.edges[e].src
        path.reverse()
        return path

    # ========== AUGMENTATION ==========

    def augment(self, path: Sequence[int], limit: int) -> int:
        amount = min([limit] + [self.edges[e].residual for e in path])
        for e in path:
            self.push(e, amount)
        return amount

    def successive_shortest_paths(
        self,
        source: int,
        sink: int,
        demand: int,
        warm: bool = False
    ) -> List[Tuple[List[int], int, float]]:
        """
        Route up to demand units from source to sink at minimum cost

        Args:
            source: Source vertex
            sink: Sink vertex
            demand: Units to route
            warm: The graph already carries an optimal flow, so reverse arcs
                with negative cost exist and the first potentials come from
                Bellman-Ford

        Returns:
            (edge path, units, unit cost) per augmentation
        """
        augmentations: List[Tuple[List[int], int, float]] = []
        potentials = [0.0] * self.size
        if warm:
            dist, _ = self.bellman_ford(source)
            finite = [d for d in dist if d < INFINITY]
            cap = max(finite) if finite else 0.0
            potentials = [d if d < INFINITY else cap for d in dist]

        routed = 0
        while routed < demand:
            reduced, parent = self.dijkstra(source, potentials)
            if reduced[sink] == INFINITY:
                break
            path = self.path_to(parent, source, sink)
            unit_cost = sum(self.edges[e].cost for e in path)
            amount = self.augment(path, demand - routed)
            routed += amount
            augmentations.append((path, amount, unit_cost))
            bound = reduced[sink]
            potentials = [p + min(d, bound) for p, d in zip(potentials, reduced)]
        return augmentations
