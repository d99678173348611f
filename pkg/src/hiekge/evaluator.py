"""Filtered link-prediction ranking and MR/MRR/Hits@k aggregation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import baselines, hie_model
from .hie_model import HieParams

TIE_PESSIMISTIC = "pessimistic"
TIE_STRICT = "strict"
TIE_BREAKS = (TIE_PESSIMISTIC, TIE_STRICT)


@dataclass(frozen=True)
class RankResult:
    """Filtered ranks of one test triple under both corruption directions."""

    triple: tuple
    head_rank: int
    tail_rank: int


@dataclass(frozen=True)
class MetricsReport:
    mr: float
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int
    per_relation: Optional[dict] = None
    per_category: Optional[dict] = None


def rank_triple(score_row, true_entity, filter_set, tie_break=TIE_PESSIMISTIC) -> int:
    """Rank of the true entity within one row of candidate scores, lower = better.

    Candidates in filter_set are excluded (the true entity itself never
    is). Pessimistic ties count equal-scoring candidates against the true
    entity; strict counts only strictly better ones.
    """
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    row = np.asarray(score_row, dtype=np.float64)
    true_score = row[true_entity]
    excluded = np.fromiter((c for c in filter_set if c != true_entity), dtype=np.int64)
    if tie_break == TIE_PESSIMISTIC:
        better = np.count_nonzero(row <= true_score) - 1  # drop the true entity itself
        if len(excluded):
            better -= int(np.count_nonzero(row[excluded] <= true_score))
    else:
        better = np.count_nonzero(row < true_score)
        if len(excluded):
            better -= int(np.count_nonzero(row[excluded] < true_score))
    return 1 + int(better)


def _score_batch(params, config, triples, candidates, corrupt_side, slab):
    if isinstance(params, HieParams):
        return hie_model.score_batch(params, config, triples, candidates, corrupt_side, slab=slab)
    return baselines.score_batch(params, config, triples, candidates, corrupt_side, slab=slab)


def evaluate(
    params,
    config,
    kg,
    split="test",
    tie_break=TIE_PESSIMISTIC,
    filtered=True,
    triple_chunk=16,
    slab=8192,
):
    """Both-direction ranks for every triple of the split.

    Scores all |E| candidates per direction with score_batch, excluding
    known-true completions from train+valid+test when filtered.
    """
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    triples = kg.split(split) if isinstance(split, str) else np.asarray(split, dtype=np.int64)
    if len(triples) == 0:
        raise ValueError("cannot evaluate an empty split")
    num_entities = params.num_entities
    candidates = np.arange(num_entities, dtype=np.int64)
    index = kg.filter_index
    results = []
    for start in range(0, len(triples), triple_chunk):
        chunk = triples[start : start + triple_chunk]
        tail_scores = _score_batch(params, config, chunk, candidates, "tail", slab)
        head_scores = _score_batch(params, config, chunk, candidates, "head", slab)
        for b, (h, r, t) in enumerate(chunk):
            h, r, t = int(h), int(r), int(t)
            tail_filter = index.true_tails(h, r) if filtered else frozenset()
            head_filter = index.true_heads(r, t) if filtered else frozenset()
            results.append(
                RankResult(
                    triple=(h, r, t),
                    head_rank=rank_triple(head_scores[b], h, head_filter, tie_break),
                    tail_rank=rank_triple(tail_scores[b], t, tail_filter, tie_break),
                )
            )
    return results


def _bundle(ranks) -> MetricsReport:
    ranks = np.asarray(ranks, dtype=np.float64)
    return MetricsReport(
        mr=float(np.mean(ranks)),
        mrr=float(np.mean(1.0 / ranks)),
        hits1=float(np.mean(ranks <= 1)),
        hits3=float(np.mean(ranks <= 3)),
        hits10=float(np.mean(ranks <= 10)),
        count=len(ranks) // 2,
    )


def aggregate_metrics(results) -> MetricsReport:
    """MR, MRR and Hits@k over both ranks of every result (2G terms)."""
    if not results:
        raise ValueError("cannot aggregate an empty result list")
    ranks = [x for res in results for x in (res.head_rank, res.tail_rank)]
    return _bundle(ranks)


def per_relation_metrics(results, categories):
    """Metric bundles grouped by relation id and by relation category."""
    by_rel = {}
    for res in results:
        by_rel.setdefault(res.triple[1], []).append(res)
    per_relation = {}
    per_category_groups = {}
    for rel_id in sorted(by_rel):
        if rel_id not in categories:
            raise ValueError(f"no category known for relation {rel_id}")
        per_relation[rel_id] = aggregate_metrics(by_rel[rel_id])
        per_category_groups.setdefault(categories[rel_id].category, []).extend(by_rel[rel_id])
    per_category = {
        name: aggregate_metrics(group) for name, group in sorted(per_category_groups.items())
    }
    return per_relation, per_category


def full_report(results, categories=None) -> MetricsReport:
    """Global bundle, with per-relation/per-category breakdowns when categories given."""
    top = aggregate_metrics(results)
    if categories is None:
        return top
    per_relation, per_category = per_relation_metrics(results, categories)
    return MetricsReport(
        mr=top.mr,
        mrr=top.mrr,
        hits1=top.hits1,
        hits3=top.hits3,
        hits10=top.hits10,
        count=top.count,
        per_relation=per_relation,
        per_category=per_category,
    )


def _bundle_dict(report: MetricsReport) -> dict:
    return {
        "mr": report.mr,
        "mrr": report.mrr,
        "hits1": report.hits1,
        "hits3": report.hits3,
        "hits10": report.hits10,
        "count": report.count,
    }


def report_to_dict(report: MetricsReport, conventions=None) -> dict:
    """JSON-ready document; nested bundles keyed by relation id / category name."""
    doc = _bundle_dict(report)
    doc["per_relation"] = (
        {str(rid): _bundle_dict(b) for rid, b in report.per_relation.items()}
        if report.per_relation is not None
        else None
    )
    doc["per_category"] = (
        {name: _bundle_dict(b) for name, b in report.per_category.items()}
        if report.per_category is not None
        else None
    )
    if conventions is not None:
        doc["conventions"] = dict(conventions)
    return doc


CSV_HEADER = "mr,mrr,hits1,hits3,hits10,count"


def report_csv_row(report: MetricsReport) -> str:
    return (
        f"{report.mr:.6f},{report.mrr:.6f},{report.hits1:.6f},"
        f"{report.hits3:.6f},{report.hits10:.6f},{report.count}"
    )
