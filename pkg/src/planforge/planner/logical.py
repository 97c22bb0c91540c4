"""Logical plan: DAG topology reconstructed from model inputs."""

from dataclasses import dataclass

from ..errors import CycleDetected


@dataclass
class LogicalPlan:
    models: dict  # name -> ModelSpec
    edges: set  # (producer model, consumer model)
    sources: set  # catalog table names referenced by inputs

    def consumers_of(self, name: str):
        return sorted(c for p, c in self.edges if p == name)

    def producers_of(self, name: str):
        return sorted(p for p, c in self.edges if c == name)

    def topo_order(self):
        """Kahn's algorithm with lexicographic tie-break (deterministic)."""
        indegree = {name: 0 for name in self.models}
        for _, consumer in self.edges:
            indegree[consumer] += 1
        ready = sorted(n for n, d in indegree.items() if d == 0)
        order = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            added = False
            for consumer in self.consumers_of(node):
                indegree[consumer] -= 1
                if indegree[consumer] == 0:
                    ready.append(consumer)
                    added = True
            if added:
                ready.sort()
        return order


def _find_cycle(models, edges):
    adjacency = {name: [] for name in models}
    for p, c in edges:
        adjacency[p].append(c)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {name: WHITE for name in models}
    stack = []

    def visit(node):
        color[node] = GRAY
        stack.append(node)
        for nxt in sorted(adjacency[node]):
            if color[nxt] == GRAY:
                return stack[stack.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = BLACK
        return None

    for name in sorted(models):
        if color[name] == WHITE:
            found = visit(name)
            if found:
                return found
    return None


def build_logical(models) -> LogicalPlan:
    """Edges are exactly {(p, c) | p in c.inputs}; other inputs are sources.

    Unknown inputs are deferred to compile time (the name may be a catalog
    table); cycles are rejected here.
    """
    by_name = {m.name: m for m in models}
    edges = set()
    sources = set()
    for model in models:
        for ref in model.inputs:
            if ref.table in by_name:
                edges.add((ref.table, model.name))
            else:
                sources.add(ref.table)
    cycle = _find_cycle(by_name, edges)
    if cycle:
        raise CycleDetected(cycle)
    return LogicalPlan(models=by_name, edges=edges, sources=sources)
