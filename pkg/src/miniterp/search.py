"""Stage two: assign primitives to model components by maximizing the score.

Two solvers over a shared candidate table:

* interpret_exact — full enumeration of the candidate product space as a
  broadcast score tensor; the true argmax with lexicographic (candidate
  index) tie-breaking. Refuses products above exact_limit.
* interpret_beam — width-w beam. To make the score provably non-decreasing
  in the width on every instance, a call at width w runs the standard beam
  at every width 1..w and returns the best result (the run sets are nested,
  so the maximum cannot decrease); when w covers the whole product space the
  solver short-circuits to interpret_exact, making the oracle-equality case
  literal.

Scores returned by either solver are recomputed through
InterpretationModel.score, so Interpretation.score always reproduces the
canonical accumulation bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from numpy.typing import NDArray

from .model import Interpretation, InterpretationModel
from .primitives import Primitive, PrimitiveSet
from .relations import RELATION_KINDS, evaluate

DEFAULT_K = 8
DEFAULT_BEAM_WIDTH = 50
DEFAULT_EXACT_LIMIT = 1_000_000


class UninterpretableError(ValueError):
    """A required component has no kind-matched candidate primitive."""

    def __init__(self, component: str):
        super().__init__(f"uninterpretable region: no candidate for required "
                         f"component {component!r}")
        self.component = component


class ExactLimitError(ValueError):
    """Candidate product space too large for exact enumeration — use beam."""

    def __init__(self, product: int, limit: int):
        super().__init__(f"product space {product} exceeds exact limit {limit}; use beam")
        self.product = product
        self.limit = limit


@dataclass(frozen=True)
class Candidate:
    primitive: Primitive | None
    pre_score: float


@dataclass(frozen=True, eq=False)
class CandidateTable:
    """Per component (model order): candidates sorted by descending unary
    pre-score, ties by extraction order; the null candidate, when present,
    is always last."""

    names: tuple[str, ...]
    lists: tuple[tuple[Candidate, ...], ...]

    def for_component(self, name: str) -> tuple[Candidate, ...]:
        return self.lists[self.names.index(name)]

    @property
    def product_size(self) -> int:
        return reduce(lambda a, b: a * b, (len(l) for l in self.lists), 1)


def _unary_relations(model: InterpretationModel) -> dict[str, list[int]]:
    """Component name -> indices of its unary relations, model order."""
    out: dict[str, list[int]] = {c.name: [] for c in model.components}
    for i, r in enumerate(model.relations):
        if len(r.operands) == 1:
            out[r.operands[0]].append(i)
    return out


def unary_pre_score(model: InterpretationModel, comp_name: str,
                    p: Primitive | None, source_dims: tuple[int, int]) -> float:
    """Weighted sum of the component's unary relations evaluated on p alone."""
    total = 0.0
    slices = model.block_slices
    for i in _unary_relations(model)[comp_name]:
        r = model.relations[i]
        total += float(np.dot(model.weights[slices[i]],
                              evaluate(r.relation_kind, (p,), r.params, source_dims)))
    return total


def build_candidates(model: InterpretationModel, prims: PrimitiveSet,
                     k: int = DEFAULT_K,
                     value_cache: dict | None = None) -> CandidateTable:
    """Top-k kind-matched primitives per component by unary pre-score.

    Raises UninterpretableError when a required component has no candidate.
    value_cache memoizes raw relation values as in build_score_tables.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dims = prims.source_dims
    unary = _unary_relations(model)
    slices = model.block_slices
    names = []
    lists = []
    for comp in model.components:
        pool = prims.by_kind(comp.kind)
        scores = []
        for p in pool:
            total = 0.0
            for i in unary[comp.name]:
                r = model.relations[i]
                total += float(np.dot(model.weights[slices[i]],
                                      _rel_value(r, i, (p,), dims, value_cache)))
            scores.append(total)
        order = sorted(range(len(pool)), key=lambda i: (-scores[i], i))[:k]
        entries = [Candidate(pool[i], scores[i]) for i in order]
        if not comp.optional and not entries:
            raise UninterpretableError(comp.name)
        if comp.optional:
            entries.append(Candidate(None, -model.penalty(comp.name)))
        names.append(comp.name)
        lists.append(tuple(entries))
    return CandidateTable(names=tuple(names), lists=tuple(lists))


# --- score tables -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScoreTables:
    """Weighted relation contributions over candidate indices.

    rel_tables is aligned with model.relations: a 1-D array over one
    component's candidates for unary relations, a 2-D array over two
    components' candidate pairs for pairwise ones. penalty_vecs is aligned
    with model.components (zero except -penalty at a null candidate).
    """

    comp_pos: dict[str, int]
    rel_tables: tuple[tuple[tuple[int, ...], NDArray[np.float64]], ...]
    penalty_vecs: tuple[NDArray[np.float64], ...]


def build_score_tables(
    model: InterpretationModel,
    table: CandidateTable,
    source_dims: tuple[int, int],
    value_cache: dict | None = None,
) -> ScoreTables:
    """Evaluate every relation on every candidate (pair) and fold in the
    weights. Cells with a null operand are exactly 0. value_cache, when
    given, memoizes raw relation values across calls keyed by primitive
    identity (weights are folded in per call, so the cache stays valid as
    weights change)."""
    comp_pos = {n: i for i, n in enumerate(table.names)}
    slices = model.block_slices
    rel_tables = []
    for ri, rel in enumerate(model.relations):
        w = model.weights[slices[ri]]
        if len(rel.operands) == 1:
            pos = comp_pos[rel.operands[0]]
            cands = table.lists[pos]
            vec = np.zeros(len(cands))
            for i, c in enumerate(cands):
                if c.primitive is None:
                    continue
                vec[i] = float(np.dot(w, _rel_value(
                    rel, ri, (c.primitive,), source_dims, value_cache)))
            rel_tables.append(((pos,), vec))
        else:
            pa = comp_pos[rel.operands[0]]
            pb = comp_pos[rel.operands[1]]
            ca, cb = table.lists[pa], table.lists[pb]
            mat = np.zeros((len(ca), len(cb)))
            for i, a in enumerate(ca):
                if a.primitive is None:
                    continue
                for j, b in enumerate(cb):
                    if b.primitive is None:
                        continue
                    mat[i, j] = float(np.dot(w, _rel_value(
                        rel, ri, (a.primitive, b.primitive), source_dims, value_cache)))
            rel_tables.append(((pa, pb), mat))

    penalty_vecs = []
    for pos, comp in enumerate(model.components):
        vec = np.zeros(len(table.lists[pos]))
        if comp.optional:
            for i, c in enumerate(table.lists[pos]):
                if c.primitive is None:
                    vec[i] = -model.penalty(comp.name)
        penalty_vecs.append(vec)

    return ScoreTables(
        comp_pos=comp_pos,
        rel_tables=tuple(rel_tables),
        penalty_vecs=tuple(penalty_vecs),
    )


def _rel_value(rel, rel_idx: int, operands: tuple, source_dims, value_cache):
    if value_cache is None:
        return evaluate(rel.relation_kind, operands, rel.params, source_dims)
    key = (rel_idx,) + tuple(id(p) for p in operands)
    hit = value_cache.get(key)
    if hit is None:
        hit = evaluate(rel.relation_kind, operands, rel.params, source_dims)
        value_cache[key] = hit
    return hit


def _assignment_from_indices(table: CandidateTable, idx) -> dict[str, Primitive | None]:
    return {
        name: table.lists[pos][int(i)].primitive
        for pos, (name, i) in enumerate(zip(table.names, idx))
    }


# --- exact solver -------------------------------------------------------------


def interpret_exact(
    model: InterpretationModel,
    table: CandidateTable,
    source_dims: tuple[int, int],
    *,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    tables: ScoreTables | None = None,
) -> Interpretation:
    """True argmax over the full candidate product space.

    Ties break lexicographically by candidate index tuple. Raises
    ExactLimitError when the product exceeds exact_limit.
    """
    product = table.product_size
    if product > exact_limit:
        raise ExactLimitError(product, exact_limit)
    if tables is None:
        tables = build_score_tables(model, table, source_dims)
    lens = tuple(len(l) for l in table.lists)
    n = len(lens)
    score = np.zeros(lens)
    # Accumulate relation tables in model order, then penalties in component
    # order — the same float-op sequence as InterpretationModel.score, so the
    # tensor cell equals the canonical score exactly.
    for positions, tbl in tables.rel_tables:
        shape = [1] * n
        if len(positions) == 1:
            shape[positions[0]] = tbl.shape[0]
            score += tbl.reshape(shape)
        else:
            pa, pb = positions
            # reshape needs the lower tensor axis to vary slower, so orient
            # the table with its first axis at the lower position.
            orient = tbl if pa < pb else tbl.T
            first, second = (pa, pb) if pa < pb else (pb, pa)
            shape[first] = orient.shape[0]
            shape[second] = orient.shape[1]
            score += orient.reshape(shape)
    for pos, vec in enumerate(tables.penalty_vecs):
        shape = [1] * n
        shape[pos] = len(vec)
        score += vec.reshape(shape)
    flat_best = int(np.argmax(score))  # first maximum in C order = lexicographic
    idx = np.unravel_index(flat_best, lens)
    assignment = _assignment_from_indices(table, idx)
    return model.score(assignment, source_dims)


# --- beam solver --------------------------------------------------------------


def _beam_run(table: CandidateTable, tables: ScoreTables, width: int) -> tuple[int, ...]:
    """One standard beam pass at the given width; components in model order.

    Partial scores are the realized relation contributions only. Returns the
    winning candidate index tuple (ties: lexicographically smallest, enforced
    by stable sorting over lexicographically ordered expansions).
    """
    n = len(table.lists)
    # Pairwise tables keyed by the later component position.
    later: list[list[tuple[tuple[int, int], NDArray[np.float64]]]] = [[] for _ in range(n)]
    unary_step: list[NDArray[np.float64]] = [tables.penalty_vecs[p].copy() for p in range(n)]
    for positions, tbl in tables.rel_tables:
        if len(positions) == 1:
            unary_step[positions[0]] += tbl
        else:
            pa, pb = positions
            if pa > pb:
                later[pa].append(((pb, 1), tbl))  # earlier partner indexes columns
            else:
                later[pb].append(((pa, 0), tbl))  # earlier partner indexes rows

    idx = np.zeros((0, 0), dtype=np.int64)
    inc = np.zeros(0)
    for t in range(n):
        k_t = len(table.lists[t])
        if t == 0:
            flat = unary_step[0].copy()
            parents = None
        else:
            scores = inc[:, None] + unary_step[t][None, :]
            for (e_pos, axis), tbl in later[t]:
                e_idx = idx[:, e_pos]
                if axis == 0:
                    scores = scores + tbl[e_idx, :]
                else:
                    scores = scores + tbl[:, e_idx].T
            flat = scores.ravel()
        order = np.argsort(-flat, kind="stable")[:width]
        sel = np.sort(order)
        if t == 0:
            idx = sel[:, None].astype(np.int64)
        else:
            parents = sel // k_t
            cands = sel % k_t
            idx = np.column_stack([idx[parents], cands.astype(np.int64)])
        inc = flat[sel]
    best = int(np.argmax(inc))  # first max = lexicographically smallest tuple
    return tuple(int(v) for v in idx[best])


def interpret_beam(
    model: InterpretationModel,
    table: CandidateTable,
    source_dims: tuple[int, int],
    beam_width: int | float = DEFAULT_BEAM_WIDTH,
    *,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    tables: ScoreTables | None = None,
) -> Interpretation:
    """Beam search whose score is non-decreasing in beam_width on every
    instance (see module docstring). beam_width may be math.inf to force the
    exhaustive path."""
    if beam_width != math.inf:
        beam_width = int(beam_width)
        if beam_width < 1:
            raise ValueError("beam_width must be >= 1")
    product = table.product_size
    if beam_width >= product:
        if product > exact_limit:
            raise ExactLimitError(product, exact_limit)
        return interpret_exact(model, table, source_dims,
                               exact_limit=exact_limit, tables=tables)
    if tables is None:
        tables = build_score_tables(model, table, source_dims)
    best: Interpretation | None = None
    seen: dict[tuple[int, ...], Interpretation] = {}
    for width in range(1, int(beam_width) + 1):
        winner = _beam_run(table, tables, width)
        interp = seen.get(winner)
        if interp is None:
            interp = model.score(_assignment_from_indices(table, winner), source_dims)
            seen[winner] = interp
        if best is None or interp.score > best.score:
            best = interp
    assert best is not None
    return best


def interpret_auto(
    model: InterpretationModel,
    prims: PrimitiveSet,
    *,
    k: int = DEFAULT_K,
    beam_width: int | float = DEFAULT_BEAM_WIDTH,
    exact_limit: int = DEFAULT_EXACT_LIMIT,
    value_cache: dict | None = None,
) -> Interpretation:
    """Exact when the product space fits under exact_limit, else beam."""
    table = build_candidates(model, prims, k)
    tables = build_score_tables(model, table, prims.source_dims, value_cache)
    if table.product_size <= exact_limit:
        return interpret_exact(model, table, prims.source_dims,
                               exact_limit=exact_limit, tables=tables)
    return interpret_beam(model, table, prims.source_dims, beam_width,
                          exact_limit=exact_limit, tables=tables)
