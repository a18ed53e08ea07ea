"""Causal-structure audit over discretized simulation logs.

Structure search is greedy hill climbing over single-edge moves scored by a
decomposable multinomial log-likelihood with an information penalty (higher
is better). An edge blacklist keeps the allocation variable from becoming a
child of trajectory indicators, and bootstrap resampling turns one search
into edge frequencies.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BnError",
    "AUDIT_VARIABLES",
    "DiscreteDataset",
    "Dag",
    "EdgeBlacklist",
    "EnsembleStructure",
    "HillClimbResult",
    "discretize",
    "score",
    "hill_climb",
    "bootstrap_ensemble",
    "check_causal_claim",
    "enumerate_dags",
    "default_blacklist",
    "read_audit_csv",
    "edge_frequency_csv",
    "verdict_json",
]

AUDIT_VARIABLES = ("death", "recovery", "infected", "susceptible", "vaccine_percent")


class BnError(ValueError):
    """Invalid audit input or graph operation."""


@dataclass(frozen=True)
class DiscreteDataset:
    """Categorical rows over named variables."""

    variables: tuple[str, ...]
    rows: np.ndarray  # (N, V) int array
    bins: tuple[int, ...]

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2 or rows.shape[1] != len(self.variables):
            raise BnError("rows must be an (N, V) array matching the variable list")
        if len(self.bins) != len(self.variables):
            raise BnError("need one bin count per variable")
        for j, (name, b) in enumerate(zip(self.variables, self.bins)):
            if b < 2:
                raise BnError(f"{name}: need at least 2 bins, got {b}")
            col = rows[:, j]
            if col.min() < 0 or col.max() >= b:
                raise BnError(f"{name}: category outside [0,{b})")
        object.__setattr__(self, "rows", rows.astype(np.int64))

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.variables.index(name)]

    def resample(self, indices: np.ndarray) -> "DiscreteDataset":
        return DiscreteDataset(self.variables, self.rows[indices], self.bins)


def discretize(
    columns: dict[str, Sequence[float]], bins: int | dict[str, int] = 3
) -> DiscreteDataset:
    """Quantile binning with left-closed intervals.

    A value lands in the highest bin whose lower quantile boundary does not
    exceed it, so ties at a boundary all move up together.
    """
    if not columns:
        raise BnError("no variables")
    names = tuple(columns.keys())
    lengths = {len(v) for v in columns.values()}
    if len(lengths) != 1:
        raise BnError("variables have differing lengths")
    per_var = {n: (bins[n] if isinstance(bins, dict) else bins) for n in names}
    cells = []
    bin_counts = []
    for name in names:
        values = np.asarray(columns[name], dtype=float)
        b = per_var[name]
        if b < 2:
            raise BnError(f"{name}: need at least 2 bins")
        distinct = np.unique(values)
        if distinct.size < 2:
            raise BnError(f"{name}: constant column cannot be discretized")
        if distinct.size < b:
            raise BnError(f"{name}: only {distinct.size} distinct values for {b} bins")
        boundaries = np.quantile(values, [k / b for k in range(1, b)])
        cells.append(np.searchsorted(boundaries, values, side="right"))
        bin_counts.append(b)
    return DiscreteDataset(names, np.column_stack(cells), tuple(bin_counts))


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over named nodes."""

    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]] = frozenset()

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise BnError("duplicate nodes")
        for parent, child in self.edges:
            if parent not in node_set or child not in node_set:
                raise BnError(f"edge ({parent},{child}) references unknown node")
            if parent == child:
                raise BnError(f"self-loop on {parent}")
        if self._has_cycle():
            raise BnError("graph has a cycle")

    def _has_cycle(self) -> bool:
        children: dict[str, list[str]] = {n: [] for n in self.nodes}
        in_degree = {n: 0 for n in self.nodes}
        for parent, child in self.edges:
            children[parent].append(child)
            in_degree[child] += 1
        queue = [n for n in self.nodes if in_degree[n] == 0]
        seen = 0
        while queue:
            node = queue.pop()
            seen += 1
            for c in children[node]:
                in_degree[c] -= 1
                if in_degree[c] == 0:
                    queue.append(c)
        return seen != len(self.nodes)

    def parents_of(self, node: str) -> tuple[str, ...]:
        return tuple(sorted(p for p, c in self.edges if c == node))

    def with_edge(self, parent: str, child: str) -> "Dag":
        return Dag(self.nodes, self.edges | {(parent, child)})

    def without_edge(self, parent: str, child: str) -> "Dag":
        return Dag(self.nodes, self.edges - {(parent, child)})

    def with_reversed_edge(self, parent: str, child: str) -> "Dag":
        if (parent, child) not in self.edges:
            raise BnError(f"edge ({parent},{child}) not present")
        return Dag(self.nodes, (self.edges - {(parent, child)}) | {(child, parent)})


class EdgeBlacklist:
    """Forbidden directed edges."""

    def __init__(self, edges: Iterable[tuple[str, str]] = ()):
        self.edges = frozenset(edges)

    def forbids(self, parent: str, child: str) -> bool:
        return (parent, child) in self.edges


def default_blacklist(variables: Sequence[str] = AUDIT_VARIABLES) -> EdgeBlacklist:
    """The allocation variable may not be a child of trajectory indicators."""
    return EdgeBlacklist(
        (v, "vaccine_percent") for v in variables if v != "vaccine_percent"
    )


# -- scoring --------------------------------------------------------------------


def _family_log_likelihood(
    data: DiscreteDataset, node: str, parents: tuple[str, ...]
) -> tuple[float, int]:
    """Multinomial log-likelihood of node given parents, plus free-parameter count."""
    node_idx = data.variables.index(node)
    r = data.bins[node_idx]
    node_col = data.rows[:, node_idx]
    if parents:
        parent_idx = [data.variables.index(p) for p in parents]
        parent_bins = [data.bins[i] for i in parent_idx]
        q = int(np.prod(parent_bins))
        parent_cfg = np.zeros(data.n_rows, dtype=np.int64)
        for i, b in zip(parent_idx, parent_bins):
            parent_cfg = parent_cfg * b + data.rows[:, i]
    else:
        q = 1
        parent_cfg = np.zeros(data.n_rows, dtype=np.int64)
    joint = parent_cfg * r + node_col
    counts = np.bincount(joint, minlength=q * r).reshape(q, r).astype(float)
    row_totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(counts > 0, np.log(counts / row_totals), 0.0)
    ll = float(np.sum(counts * log_ratio))
    free_params = (r - 1) * q
    return ll, free_params


def _penalty_unit(criterion: str, n_rows: int) -> float:
    if criterion == "aic":
        return 1.0
    if criterion == "bic":
        return math.log(n_rows) / 2.0
    raise BnError(f"unknown criterion: {criterion} (use 'aic' or 'bic')")


def score(dag: Dag, data: DiscreteDataset, criterion: str = "aic") -> float:
    """Penalized log-likelihood, decomposed over node families; higher is better."""
    if set(dag.nodes) != set(data.variables):
        raise BnError("graph nodes do not match dataset variables")
    unit = _penalty_unit(criterion, data.n_rows)
    total = 0.0
    for node in dag.nodes:
        ll, params = _family_log_likelihood(data, node, dag.parents_of(node))
        total += ll - unit * params
    return total


# -- structure search ------------------------------------------------------------


@dataclass(frozen=True)
class HillClimbResult:
    dag: Dag
    score: float
    converged: bool
    score_trace: tuple[float, ...]


_OP_ORDER = {"add": 0, "delete": 1, "reverse": 2}
_GAIN_EPS = 1e-12


def hill_climb(
    data: DiscreteDataset,
    blacklist: EdgeBlacklist | None = None,
    criterion: str = "aic",
    seed: int = 0,
    max_iterations: int = 1000,
) -> HillClimbResult:
    """Greedy single-edge search from the empty graph.

    The best-improving move wins each round; exact ties fall to the
    lexicographically smallest (operation, source, target). The seed is
    accepted for interface symmetry; the search itself is deterministic.
    """
    del seed  # deterministic
    blacklist = blacklist or EdgeBlacklist()
    unit = _penalty_unit(criterion, data.n_rows)
    nodes = data.variables
    family_cache: dict[tuple[str, tuple[str, ...]], float] = {}

    def family_score(node: str, parents: tuple[str, ...]) -> float:
        key = (node, parents)
        if key not in family_cache:
            ll, params = _family_log_likelihood(data, node, parents)
            family_cache[key] = ll - unit * params
        return family_cache[key]

    dag = Dag(nodes)
    parents: dict[str, tuple[str, ...]] = {n: () for n in nodes}
    current = sum(family_score(n, ()) for n in nodes)
    trace = [current]
    converged = False

    for _ in range(max_iterations):
        candidates: list[tuple[float, int, str, str]] = []  # (gain, op_rank, source, target)

        for u, v in product(nodes, nodes):
            if u == v or (u, v) in dag.edges or blacklist.forbids(u, v):
                continue
            try:
                dag.with_edge(u, v)
            except BnError:
                continue  # would create a cycle
            new_parents = tuple(sorted(parents[v] + (u,)))
            gain = family_score(v, new_parents) - family_score(v, parents[v])
            candidates.append((gain, _OP_ORDER["add"], u, v))

        for u, v in sorted(dag.edges):
            reduced = tuple(p for p in parents[v] if p != u)
            gain = family_score(v, reduced) - family_score(v, parents[v])
            candidates.append((gain, _OP_ORDER["delete"], u, v))

        for u, v in sorted(dag.edges):
            if blacklist.forbids(v, u):
                continue
            try:
                dag.with_reversed_edge(u, v)
            except BnError:
                continue
            v_parents = tuple(p for p in parents[v] if p != u)
            u_parents = tuple(sorted(parents[u] + (v,)))
            gain = (
                family_score(v, v_parents)
                - family_score(v, parents[v])
                + family_score(u, u_parents)
                - family_score(u, parents[u])
            )
            candidates.append((gain, _OP_ORDER["reverse"], u, v))

        if not candidates:
            converged = True
            break
        best_gain = max(c[0] for c in candidates)
        if best_gain <= _GAIN_EPS:
            converged = True
            break
        tied = [c for c in candidates if c[0] >= best_gain - _GAIN_EPS]
        _, op_rank, u, v = min(tied, key=lambda c: (c[1], c[2], c[3]))

        if op_rank == _OP_ORDER["add"]:
            dag = dag.with_edge(u, v)
            parents[v] = tuple(sorted(parents[v] + (u,)))
        elif op_rank == _OP_ORDER["delete"]:
            dag = dag.without_edge(u, v)
            parents[v] = tuple(p for p in parents[v] if p != u)
        else:
            dag = dag.with_reversed_edge(u, v)
            parents[v] = tuple(p for p in parents[v] if p != u)
            parents[u] = tuple(sorted(parents[u] + (v,)))
        current = sum(family_score(n, parents[n]) for n in nodes)
        trace.append(current)
    return HillClimbResult(dag=dag, score=current, converged=converged, score_trace=tuple(trace))


@dataclass(frozen=True)
class EnsembleStructure:
    """Directed-edge frequencies across bootstrap replicates."""

    nodes: tuple[str, ...]
    edge_frequency: dict[tuple[str, str], float]
    n_bootstraps: int

    def frequency(self, parent: str, child: str) -> float:
        if parent not in self.nodes or child not in self.nodes:
            raise BnError(f"unknown node in ({parent}, {child})")
        return self.edge_frequency.get((parent, child), 0.0)


def bootstrap_ensemble(
    data: DiscreteDataset,
    blacklist: EdgeBlacklist | None = None,
    criterion: str = "aic",
    n_bootstraps: int = 501,
    seed: int = 0,
) -> EnsembleStructure:
    """Row-resampled hill climbs tallied into per-edge frequencies."""
    if n_bootstraps < 1:
        raise BnError("n_bootstraps must be >= 1")
    rng = np.random.default_rng(seed)
    tally: dict[tuple[str, str], int] = {}
    for _ in range(n_bootstraps):
        indices = rng.integers(0, data.n_rows, size=data.n_rows)
        result = hill_climb(data.resample(indices), blacklist, criterion)
        for edge in result.dag.edges:
            tally[edge] = tally.get(edge, 0) + 1
    return EnsembleStructure(
        nodes=data.variables,
        edge_frequency={e: c / n_bootstraps for e, c in sorted(tally.items())},
        n_bootstraps=n_bootstraps,
    )


def check_causal_claim(
    ensemble: EnsembleStructure,
    parent: str = "vaccine_percent",
    child: str = "susceptible",
    threshold: float = 0.5,
) -> tuple[bool, float]:
    """Does the ensemble support parent -> child at the given frequency?"""
    freq = ensemble.frequency(parent, child)
    return freq >= threshold, freq


def enumerate_dags(nodes: Sequence[str]) -> list[Dag]:
    """Every DAG over the nodes (exponential; intended for <= 4 nodes)."""
    nodes = tuple(nodes)
    pairs = [(u, v) for u in nodes for v in nodes if u != v]
    out = []
    for mask in range(1 << len(pairs)):
        edges = frozenset(pairs[i] for i in range(len(pairs)) if mask >> i & 1)
        try:
            out.append(Dag(nodes, edges))
        except BnError:
            continue
    return out


# -- audit file formats -----------------------------------------------------------


def read_audit_csv(text: str) -> dict[str, list[float]]:
    """Read a simulation log; the five audit columns are required, extras ignored."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise BnError("empty audit file")
    missing = [v for v in AUDIT_VARIABLES if v not in reader.fieldnames]
    if missing:
        raise BnError(f"audit file lacks columns: {', '.join(missing)}")
    columns: dict[str, list[float]] = {v: [] for v in AUDIT_VARIABLES}
    for row_num, row in enumerate(reader, start=2):
        for v in AUDIT_VARIABLES:
            try:
                columns[v].append(float(row[v]))
            except (TypeError, ValueError):
                raise BnError(f"row {row_num}: non-numeric {v}") from None
    if not columns[AUDIT_VARIABLES[0]]:
        raise BnError("audit file has no rows")
    return columns


def edge_frequency_csv(ensemble: EnsembleStructure) -> str:
    out = io.StringIO()
    out.write("parent,child,frequency\n")
    for (parent, child), freq in sorted(ensemble.edge_frequency.items()):
        out.write(f"{parent},{child},{repr(freq)}\n")
    return out.getvalue()


def verdict_json(
    ensembles: dict[str, EnsembleStructure],
    parent: str = "vaccine_percent",
    child: str = "susceptible",
    threshold: float = 0.5,
) -> str:
    """Per-criterion causal-claim verdicts as a JSON document."""
    doc = {
        "edge": {"parent": parent, "child": child},
        "threshold": threshold,
        "criteria": {},
    }
    for criterion, ensemble in sorted(ensembles.items()):
        supported, freq = check_causal_claim(ensemble, parent, child, threshold)
        doc["criteria"][criterion] = {"supported": supported, "frequency": freq}
    return json.dumps(doc, sort_keys=True)
