"""Reference scorers: translation, bilinear-diagonal, and planar rotation.

All three report lower-is-better values so the one evaluator and trainer
serve every model; the bilinear score is negated for that reason. The
rotation model stores relation phase angles in the first d/2 columns of
its relation matrix (the remaining columns are unused and receive zero
gradient), and treats consecutive entity coordinates as complex pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TRANSE = "transe"
DISTMULT = "distmult"
ROTATE = "rotate"
BASELINE_KINDS = (TRANSE, DISTMULT, ROTATE)


@dataclass(frozen=True)
class BaselineConfig:
    kind: str
    dim: int = 64
    norm_p: int = 1

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind == ROTATE and self.dim % 2 != 0:
            raise ValueError("rotation model needs an even dim")
        if self.norm_p not in (1, 2):
            raise ValueError(f"norm_p must be 1 or 2, got {self.norm_p}")


@dataclass
class BaselineParams:
    kind: str
    ent: np.ndarray
    rel: np.ndarray

    @property
    def num_entities(self):
        return self.ent.shape[0]

    @property
    def num_relations(self):
        return self.rel.shape[0]

    def field_items(self):
        return [("ent", self.ent), ("rel", self.rel)]


def init_params(num_entities, num_relations, config: BaselineConfig, seed) -> BaselineParams:
    """Uniform embeddings; rotation relations start as uniform phases in [-pi, pi)."""
    if num_entities < 1 or num_relations < 1:
        raise ValueError("need at least one entity and one relation")
    rng = np.random.default_rng(seed)
    bound = 6.0 / np.sqrt(config.dim)
    ent = rng.uniform(-bound, bound, size=(num_entities, config.dim))
    if config.kind == ROTATE:
        rel = rng.uniform(-np.pi, np.pi, size=(num_relations, config.dim))
    else:
        rel = rng.uniform(-bound, bound, size=(num_relations, config.dim))
    return BaselineParams(kind=config.kind, ent=ent, rel=rel)


def transe_score(params, h, r, t, norm_p=1) -> float:
    """|| h + r - t ||_p"""
    u = params.ent[h] + params.rel[r] - params.ent[t]
    if norm_p == 1:
        return float(np.sum(np.abs(u)))
    return float(np.sqrt(np.sum(u * u)))


def distmult_score(params, h, r, t) -> float:
    """Negated trilinear product, so lower is better like the distances.

    The entity rows multiply first, which makes the head/tail symmetry
    bit-exact rather than merely close.
    """
    return float(-np.sum((params.ent[h] * params.ent[t]) * params.rel[r]))


def rotate_score(params, h, r, t) -> float:
    """|| h o r - t ||_2 with r acting as per-pair complex rotation."""
    ent = params.ent
    half = ent.shape[1] // 2
    hr, hi = ent[h, 0::2], ent[h, 1::2]
    tr, ti = ent[t, 0::2], ent[t, 1::2]
    phase = params.rel[r, :half]
    cos, sin = np.cos(phase), np.sin(phase)
    re = hr * cos - hi * sin - tr
    im = hr * sin + hi * cos - ti
    return float(np.sqrt(np.sum(re * re) + np.sum(im * im)))


def score_one(params: BaselineParams, config: BaselineConfig, h, r, t) -> float:
    if params.kind == TRANSE:
        return transe_score(params, h, r, t, config.norm_p)
    if params.kind == DISTMULT:
        return distmult_score(params, h, r, t)
    return rotate_score(params, h, r, t)


def score_triples(params: BaselineParams, config: BaselineConfig, triples):
    """Vectorized totals for a (B, 3) id batch, plus a cache for backprop."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    h_ids, r_ids, t_ids = triples[:, 0], triples[:, 1], triples[:, 2]
    h, r, t = params.ent[h_ids], params.rel[r_ids], params.ent[t_ids]
    cache = {"ids": (h_ids, r_ids, t_ids)}
    if params.kind == TRANSE:
        u = h + r - t
        cache["u"] = u
        totals = _norm_rows(u, config.norm_p)
    elif params.kind == DISTMULT:
        cache["hrt"] = (h, r, t)
        totals = -np.sum((h * t) * r, axis=-1)
    else:
        half = config.dim // 2
        hr, hi = h[:, 0::2], h[:, 1::2]
        tr, ti = t[:, 0::2], t[:, 1::2]
        phase = r[:, :half]
        cos, sin = np.cos(phase), np.sin(phase)
        re = hr * cos - hi * sin - tr
        im = hr * sin + hi * cos - ti
        cache["rotate"] = (hr, hi, cos, sin, re, im)
        totals = np.sqrt(np.sum(re * re, axis=-1) + np.sum(im * im, axis=-1))
    cache["totals"] = totals
    return totals, cache


def _norm_rows(u, norm_p):
    if norm_p == 1:
        return np.sum(np.abs(u), axis=-1)
    return np.sqrt(np.sum(u * u, axis=-1))


def score_batch(params: BaselineParams, config: BaselineConfig, triples, candidates, corrupt_side, slab=8192):
    """(B, C) totals with one side of each triple replaced by each candidate."""
    if corrupt_side not in ("head", "tail"):
        raise ValueError(f"corrupt_side must be 'head' or 'tail', got {corrupt_side!r}")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    candidates = np.asarray(candidates, dtype=np.int64).ravel()
    h_ids, r_ids, t_ids = triples[:, 0], triples[:, 1], triples[:, 2]
    B, C = len(triples), len(candidates)
    r = params.rel[r_ids]
    cand = params.ent[candidates]
    totals = np.empty((B, C))
    for start in range(0, C, slab):
        stop = min(start + slab, C)
        cb = cand[start:stop]
        if params.kind == TRANSE:
            if corrupt_side == "tail":
                m = params.ent[h_ids] + r
                u = m[:, None, :] - cb[None, :, :]
            else:
                u = (cb[None, :, :] + r[:, None, :]) - params.ent[t_ids][:, None, :]
            totals[:, start:stop] = _norm_rows(u, config.norm_p)
        elif params.kind == DISTMULT:
            if corrupt_side == "tail":
                m = params.ent[h_ids] * r
            else:
                m = r * params.ent[t_ids]
            # trilinear form is a plain inner product against the candidate
            totals[:, start:stop] = -(m @ cb.T)
        else:
            half = config.dim // 2
            phase = r[:, :half]
            cos, sin = np.cos(phase), np.sin(phase)
            cr, ci = cb[:, 0::2], cb[:, 1::2]
            if corrupt_side == "tail":
                h = params.ent[h_ids]
                hr, hi = h[:, 0::2], h[:, 1::2]
                re = (hr * cos - hi * sin)[:, None, :] - cr[None, :, :]
                im = (hr * sin + hi * cos)[:, None, :] - ci[None, :, :]
            else:
                t = params.ent[t_ids]
                tr, ti = t[:, 0::2], t[:, 1::2]
                re = cr[None, :, :] * cos[:, None, :] - ci[None, :, :] * sin[:, None, :] - tr[:, None, :]
                im = cr[None, :, :] * sin[:, None, :] + ci[None, :, :] * cos[:, None, :] - ti[:, None, :]
            totals[:, start:stop] = np.sqrt(np.sum(re * re, axis=-1) + np.sum(im * im, axis=-1))
    return totals
