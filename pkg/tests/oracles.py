"""Independent reference implementations used as test oracles.

None of these import the code under test beyond plain data types; they
re-derive the expected values the slow, obvious way.
"""

from fractions import Fraction
from itertools import combinations

DEFAULT_W = [10, 4, 8, 8, 4, 6, 5, 5, 2, 2, 2, 2, 2]
DEFAULT_PER_SERVER = [True, True, False, True, True, False, False, True, False, False, False, False, False]


def weighted_sum(vectors, literal=False):
    """Weighted sum over (test_no, indicator, n_err, n_tot, applicable) tuples."""
    total = Fraction(0)
    for test_no, indicator, n_err, n_tot, applicable in vectors:
        if not applicable or indicator == 0:
            continue
        w = Fraction(DEFAULT_W[test_no - 1])
        if DEFAULT_PER_SERVER[test_no - 1]:
            p = Fraction(n_err, n_tot)
            ratio = p * 2
            s = (ratio if ratio > 1 else Fraction(1)) if literal else (ratio if ratio < 1 else Fraction(1))
        else:
            s = Fraction(1)
        total += w * s * indicator
    return float(total)


def cdf(metrics, thresholds):
    return [sum(1 for m in metrics if m <= t) / len(metrics) for t in thresholds]


def impact(domains):
    """Exhaustive recount for server impact.

    ``domains`` is a list of implicated-server sets (one per failing domain).
    Returns [(server, count, cumulative_fraction)] ranked by count desc,
    server asc, where the cumulative fraction at rank j is found by checking
    every domain against the set of the first j servers.
    """
    servers = sorted({s for d in domains for s in d})
    counts = {s: sum(1 for d in domains if s in d) for s in servers}
    ranked = sorted(servers, key=lambda s: (-counts[s], s))
    out = []
    for j in range(1, len(ranked) + 1):
        fixed = set(ranked[:j])
        n_fixed = sum(1 for d in domains if set(d) <= fixed)
        out.append((ranked[j - 1], counts[ranked[j - 1]], n_fixed / len(domains)))
    return out


def best_fix_set(domains, k):
    """Largest number of domains fixable with any k servers (brute force)."""
    servers = sorted({s for d in domains for s in d})
    best = 0
    for combo in combinations(servers, min(k, len(servers))):
        chosen = set(combo)
        best = max(best, sum(1 for d in domains if set(d) <= chosen))
    return best


def has_cycle(edges, start):
    """Plain DFS over an adjacency dict; True when a cycle is reachable."""
    colour = {}

    def visit(n):
        colour[n] = "grey"
        for m in edges.get(n, ()):
            if colour.get(m) == "grey":
                return True
            if m not in colour and visit(m):
                return True
        colour[n] = "black"
        return False

    return visit(start)


def referral_edges(universe, domain):
    """Referral graph for ``domain`` computed from fixture declarations alone.

    Nodes are (zone, server name). A server either answers (no edge), refuses
    (no edge) or refers according to its override or the deepest delegation
    below a zone it hosts.
    """
    def depth(z):
        return 0 if z == "." else z.count(".")

    def under(name, zone):
        return zone == "." or name == zone or name.endswith("." + zone)

    def ns_of(zone):
        z = universe.zones[zone]
        explicit = z.records.get(zone, {}).get("NS")
        return [r.target.to_text().lower() for r in explicit] if explicit else list(z.hosts)

    def referral(server):
        hosted = [z for z in server.zones if under(domain, z)]
        hosted = max(hosted, key=depth) if hosted else None
        overrides = [z for z in server.referral_overrides if under(domain, z)]
        override = max(overrides, key=depth) if overrides else None
        if override and (hosted is None or depth(override) > depth(hosted)):
            target = server.referral_overrides[override]
            return target, ns_of(target)
        if hosted is None:
            return None
        cuts = [c for c in universe.zones[hosted].delegations if under(domain, c)]
        if not cuts:
            return None
        cut = max(cuts, key=depth)
        return cut, universe.zones[hosted].delegations[cut].ns

    edges = {}
    start = ("<start>", "")
    edges[start] = [(".", name) for name, _ in universe.roots]
    todo = list(edges[start])
    seen = set(todo)
    while todo:
        node = todo.pop()
        zone, name = node
        server = universe.servers.get(name)
        ref = referral(server) if server else None
        nxt = [(ref[0], n) for n in ref[1]] if ref else []
        edges[node] = nxt
        for m in nxt:
            if m not in seen:
                seen.add(m)
                todo.append(m)
    return edges, start
