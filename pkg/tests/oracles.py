"""Independent oracles used by the test-suite.

None of these call into the solver under test.
"""

import itertools
from fractions import Fraction


def _is_spanning_tree(cells, m, n):
    parent = list(range(m + n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in cells:
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def _tree_flows(cells, supply, demand):
    m = len(supply)
    rem = {("r", i): Fraction(s) for i, s in enumerate(supply)}
    rem.update({("c", j): Fraction(d) for j, d in enumerate(demand)})
    left = set(cells)
    flows = {}
    while left:
        deg = {}
        for i, j in left:
            deg[("r", i)] = deg.get(("r", i), 0) + 1
            deg[("c", j)] = deg.get(("c", j), 0) + 1
        leaf = next(k for k in sorted(deg) if deg[k] == 1)
        cell = next(c for c in left if (("r", c[0]) == leaf or ("c", c[1]) == leaf))
        f = rem[leaf]
        flows[cell] = f
        rem[("r", cell[0])] -= f
        rem[("c", cell[1])] -= f
        left.remove(cell)
    return flows


def vertex_enumeration_min(supply, demand, cost):
    """Minimum of sum c*x over the transportation polytope by enumerating every basic solution.

    Each basis of the transportation problem is a spanning tree of K_{m,n};
    its flows follow by peeling leaves. Returns (min cost, flows of a minimiser).
    """
    m, n = len(supply), len(demand)
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = None
    for basis in itertools.combinations(cells, m + n - 1):
        if not _is_spanning_tree(basis, m, n):
            continue
        flows = _tree_flows(basis, supply, demand)
        if any(f < 0 for f in flows.values()):
            continue
        c = sum(Fraction(cost[i][j]) * f for (i, j), f in flows.items())
        if best is None or c < best[0]:
            best = (c, flows)
    return best


def all_maps(points, targets):
    return itertools.product(targets, repeat=len(points))
