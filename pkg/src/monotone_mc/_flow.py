"""Small deterministic max-flow solver (Dinic) on float capacities."""

import math
from collections import deque

INF = math.inf


class FlowNetwork:
    """Residual network with a fixed, insertion-ordered arc list.

    Arc ``2k`` is the k-th added arc and ``2k + 1`` its reverse, so traversal order
    (and therefore the returned flow) depends only on the order of ``add_arc`` calls.
    """

    def __init__(self, n_nodes, eps=1e-15):
        self.n = n_nodes
        self.eps = eps
        self.adj = [[] for _ in range(n_nodes)]
        self.head = []
        self.cap = []
        self.orig = []

    def add_arc(self, u, v, capacity):
        k = len(self.head)
        self.adj[u].append(k)
        self.head.append(v)
        self.cap.append(float(capacity))
        self.orig.append(float(capacity))
        self.adj[v].append(k + 1)
        self.head.append(u)
        self.cap.append(0.0)
        self.orig.append(0.0)
        return k

    def _levels(self, s, t):
        level = [-1] * self.n
        level[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for k in self.adj[u]:
                v = self.head[k]
                if level[v] < 0 and self.cap[k] > self.eps:
                    level[v] = level[u] + 1
                    queue.append(v)
        return level if level[t] >= 0 else None

    def _push(self, u, t, limit, level, it):
        if u == t:
            return limit
        adj = self.adj[u]
        while it[u] < len(adj):
            k = adj[it[u]]
            v = self.head[k]
            if self.cap[k] > self.eps and level[v] == level[u] + 1:
                pushed = self._push(v, t, min(limit, self.cap[k]), level, it)
                if pushed > 0.0:
                    self.cap[k] -= pushed
                    self.cap[k ^ 1] += pushed
                    return pushed
            it[u] += 1
        return 0.0

    def max_flow(self, s, t):
        total = 0.0
        while True:
            level = self._levels(s, t)
            if level is None:
                return total
            it = [0] * self.n
            while True:
                pushed = self._push(s, t, INF, level, it)
                if pushed <= 0.0:
                    break
                total += pushed

    def flow(self, arc):
        """Flow currently carried by forward arc ``arc``."""
        return self.cap[arc ^ 1]

    def reachable(self, s):
        """Nodes reachable from ``s`` in the residual network (source side of a min cut)."""
        seen = [False] * self.n
        seen[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for k in self.adj[u]:
                v = self.head[k]
                if not seen[v] and self.cap[k] > self.eps:
                    seen[v] = True
                    queue.append(v)
        return seen
