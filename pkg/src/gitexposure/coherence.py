"""Repository coherence graph: who contributes where, and what to suggest next.

Edge A->B accumulates, for every person active in both repositories, the
fraction of that person's total commits that landed in B, so the weight
answers "how much do A's contributors care about B".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .identity import Person, PersonDatabase


@dataclass
class CoherenceGraph:
    vertices: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str], float] = field(default_factory=dict)

    def weight(self, src: str, dst: str) -> float:
        return self.edges.get((src, dst), 0.0)


def build_graph(db: PersonDatabase) -> CoherenceGraph:
    """Accumulate co-contribution edges over all multi-repository persons."""
    graph = CoherenceGraph()
    for person in db.persons():
        repos = person.contributions
        graph.vertices.update(repos)
        if len(repos) < 2:
            continue
        total = person.total_commits()
        for src in repos:
            for dst, dst_commits in repos.items():
                if src == dst:
                    continue
                key = (src, dst)
                graph.edges[key] = graph.edges.get(key, 0.0) + dst_commits / total
    return graph


def recommend(
    graph: CoherenceGraph,
    person: Person,
    k: int,
    languages: Mapping[str, str | None] | None = None,
) -> list[tuple[str, float]]:
    """Rank the k repositories the person's contributions point at most strongly.

    score(R) = sum of edge weights from each contributed repository to R,
    over candidates the person has not contributed to. Passing a
    full_name -> main_language mapping enables the optional language-affinity
    bonus (x1.5 when the candidate's language matches one the person already
    works in); it is off by default.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    contributed = set(person.contributions)
    scores: dict[str, float] = {}
    for (src, dst), weight in graph.edges.items():
        if src in contributed and dst not in contributed:
            scores[dst] = scores.get(dst, 0.0) + weight
    if languages:
        known = {languages[r] for r in contributed if languages.get(r)}
        for repo in scores:
            if languages.get(repo) in known:
                scores[repo] *= 1.5
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def to_edge_list(graph: CoherenceGraph) -> str:
    """Tab-separated `from to weight` rows, weights at 6 decimal places."""
    rows = [
        f"{src}\t{dst}\t{weight:.6f}"
        for (src, dst), weight in sorted(graph.edges.items())
    ]
    return "".join(row + "\n" for row in rows)


def _dot_quote(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: CoherenceGraph) -> str:
    """DOT digraph text for visualization tools."""
    lines = ["digraph coherence {"]
    for vertex in sorted(graph.vertices):
        lines.append(f"    {_dot_quote(vertex)};")
    for (src, dst), weight in sorted(graph.edges.items()):
        lines.append(
            f"    {_dot_quote(src)} -> {_dot_quote(dst)} [weight={weight:.6f}, "
            f'label="{weight:.3f}"];'
        )
    lines.append("}")
    return "".join(line + "\n" for line in lines)
