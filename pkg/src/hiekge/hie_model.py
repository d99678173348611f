"""Joint distance-space / semantic-space scoring over a residual level hierarchy.

Every embedding row is split into a geometric half and a semantic half.
Level 1 projects each half through a learned diagonal; deeper levels are
produced by a shared square extraction matrix per transition with the raw
half added back as a residual. Each level contributes a distance-space
term and a semantic translation term, blended by a learned sigmoid weight
and combined across levels with fixed convex weights. Lower is better.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

TRANSFORM_DIAGONAL = "diagonal"
TRANSFORM_RANK1 = "rank1"


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class HieConfig:
    """Scoring-time hyperparameters. Vocabulary sizes live in the params."""

    dim: int = 64
    levels: int = 2
    lambdas: tuple = (0.5, 0.5)
    norm_p: int = 1
    transform: str = TRANSFORM_DIAGONAL
    disable_distance: bool = False
    disable_semantic: bool = False
    disable_distance_deep: bool = False
    disable_semantic_deep: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if self.dim < 2 or self.dim % 2 != 0:
            raise ValueError(f"dim must be even and >= 2, got {self.dim}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        if len(self.lambdas) != self.levels:
            raise ValueError(
                f"need one level weight per level: got {len(self.lambdas)} "
                f"weights for {self.levels} levels"
            )
        if any(v < 0.0 or v > 1.0 for v in self.lambdas):
            raise ValueError(f"level weights must lie in [0, 1], got {self.lambdas}")
        if abs(sum(self.lambdas) - 1.0) > 1e-9:
            raise ValueError(f"level weights must sum to 1, got {self.lambdas}")
        if self.norm_p not in (1, 2):
            raise ValueError(f"norm_p must be 1 or 2, got {self.norm_p}")
        if self.transform not in (TRANSFORM_DIAGONAL, TRANSFORM_RANK1):
            raise ValueError(f"unknown transform {self.transform!r}")
        if self.disable_distance and self.disable_semantic:
            raise ValueError("cannot disable both measurement spaces")

    @property
    def half(self):
        return self.dim // 2


@dataclass
class HieParams:
    """All trainable tensors, float64 throughout.

    ent/rel rows are [geometric half | semantic half]. The six projection
    vectors are the level-1 diagonals for head/tail/relation in each space.
    transform_seed holds one distance-transform seed vector per level;
    extract_dist/extract_sem hold one square lift matrix per level
    transition, shared by head, tail and relation.
    """

    ent: np.ndarray
    rel: np.ndarray
    proj_head_dist: np.ndarray
    proj_tail_dist: np.ndarray
    proj_rel_dist: np.ndarray
    proj_head_sem: np.ndarray
    proj_tail_sem: np.ndarray
    proj_rel_sem: np.ndarray
    transform_seed: np.ndarray
    extract_dist: np.ndarray
    extract_sem: np.ndarray
    blend_logit: np.ndarray

    @property
    def alpha(self) -> float:
        return float(sigmoid(self.blend_logit))

    @property
    def num_entities(self):
        return self.ent.shape[0]

    @property
    def num_relations(self):
        return self.rel.shape[0]

    def field_items(self):
        """(name, tensor) pairs in the canonical serialization order."""
        return [
            ("ent", self.ent),
            ("rel", self.rel),
            ("proj_head_dist", self.proj_head_dist),
            ("proj_tail_dist", self.proj_tail_dist),
            ("proj_rel_dist", self.proj_rel_dist),
            ("proj_head_sem", self.proj_head_sem),
            ("proj_tail_sem", self.proj_tail_sem),
            ("proj_rel_sem", self.proj_rel_sem),
            ("transform_seed", self.transform_seed),
            ("extract_dist", self.extract_dist),
            ("extract_sem", self.extract_sem),
            ("blend_logit", self.blend_logit),
        ]


@dataclass(frozen=True)
class ScoreBreakdown:
    """Per-level components of one triple's score, after ablation masking."""

    distance_terms: np.ndarray
    semantic_terms: np.ndarray
    total: float


def init_params(num_entities, num_relations, config: HieConfig, seed) -> HieParams:
    """Fresh parameters: uniform embeddings, identity-like structure tensors.

    Projection diagonals and transform seeds start at ones and the extract
    matrices at zero, so at step 0 every level reduces to the raw halves.
    """
    if num_entities < 1 or num_relations < 1:
        raise ValueError("need at least one entity and one relation")
    rng = np.random.default_rng(seed)
    k, half = config.dim, config.half
    bound = 6.0 / np.sqrt(k)
    n_lift = config.levels - 1
    return HieParams(
        ent=rng.uniform(-bound, bound, size=(num_entities, k)),
        rel=rng.uniform(-bound, bound, size=(num_relations, k)),
        proj_head_dist=np.ones(half),
        proj_tail_dist=np.ones(half),
        proj_rel_dist=np.ones(half),
        proj_head_sem=np.ones(half),
        proj_tail_sem=np.ones(half),
        proj_rel_sem=np.ones(half),
        transform_seed=np.ones((config.levels, half)),
        extract_dist=np.zeros((n_lift, half, half)),
        extract_sem=np.zeros((n_lift, half, half)),
        blend_logit=np.zeros(()),
    )


def active_spaces(config: HieConfig, level: int):
    """(distance_on, semantic_on) at a 1-based level under the ablation flags."""
    deep = level >= 2
    dist_on = not config.disable_distance and not (deep and config.disable_distance_deep)
    sem_on = not config.disable_semantic and not (deep and config.disable_semantic_deep)
    return dist_on, sem_on


def level_weights(config: HieConfig, alpha: float):
    """Effective (distance, semantic) blend weights per level.

    With both spaces on the blend is (alpha, 1-alpha); a lone active space
    takes full weight 1 so disabling one space yields a pure model of the
    other; a fully masked level contributes nothing.
    """
    weights = []
    for level in range(1, config.levels + 1):
        dist_on, sem_on = active_spaces(config, level)
        if dist_on and sem_on:
            weights.append((alpha, 1.0 - alpha))
        elif dist_on:
            weights.append((1.0, 0.0))
        elif sem_on:
            weights.append((0.0, 1.0))
        else:
            weights.append((0.0, 0.0))
    return weights


def project_level1(params: HieParams, h, r, t):
    """Level-1 projections (head, rel, tail) in distance then semantic space."""
    half = params.ent.shape[1] // 2
    h_row, r_row, t_row = params.ent[h], params.rel[r], params.ent[t]
    return (
        params.proj_head_dist * h_row[:half],
        params.proj_rel_dist * r_row[:half],
        params.proj_tail_dist * t_row[:half],
        params.proj_head_sem * h_row[half:],
        params.proj_rel_sem * r_row[half:],
        params.proj_tail_sem * t_row[half:],
    )


def lift_level(params: HieParams, level: int, dist_proj, sem_proj, dist_base, sem_base):
    """Raise one embedding's projections from `level` to `level + 1`.

    Row vector times the transition's extraction matrix, plus the raw half
    as a residual. `level` is 1-based and must be strictly below the
    parameter depth.
    """
    n_levels = params.transform_seed.shape[0]
    if not 1 <= level < n_levels:
        raise ValueError(f"cannot lift from level {level} in a {n_levels}-level model")
    lifted_dist = dist_proj @ params.extract_dist[level - 1] + dist_base
    lifted_sem = sem_proj @ params.extract_sem[level - 1] + sem_base
    return lifted_dist, lifted_sem


def level_distance(head_proj, rel_proj, tail_proj, seed, norm_p, transform):
    """Distance-space residual norm at one level.

    Diagonal transform: || head * (seed * rel) - tail ||_p.
    Rank-1 transform: || (head . seed) * rel - tail ||_p.
    """
    if transform == TRANSFORM_DIAGONAL:
        residual = head_proj * (seed * rel_proj) - tail_proj
    elif transform == TRANSFORM_RANK1:
        residual = (head_proj @ seed) * rel_proj - tail_proj
    else:
        raise ValueError(f"unknown transform {transform!r}")
    if norm_p == 1:
        return float(np.sum(np.abs(residual)))
    return float(np.sqrt(np.sum(residual * residual)))


def level_semantic(head_proj, rel_proj, tail_proj):
    """Semantic translation residual || head + rel - tail ||_2."""
    residual = (head_proj + rel_proj) - tail_proj
    return float(np.sqrt(np.sum(residual * residual)))


def score(params: HieParams, config: HieConfig, h, r, t) -> ScoreBreakdown:
    """Full per-level breakdown for a single (h, r, t) id triple.

    Masked level/space combinations are reported as exact zeros and carry
    zero weight in the total.
    """
    half = config.half
    h_row, r_row, t_row = params.ent[h], params.rel[r], params.ent[t]
    bases = {
        "dist": (h_row[:half], r_row[:half], t_row[:half]),
        "sem": (h_row[half:], r_row[half:], t_row[half:]),
    }
    hd, rd, td, hs, rs, ts = project_level1(params, h, r, t)
    weights = level_weights(config, params.alpha)
    d_terms = np.zeros(config.levels)
    s_terms = np.zeros(config.levels)
    total = 0.0
    for level in range(1, config.levels + 1):
        if level > 1:
            hd, hs = lift_level(params, level - 1, hd, hs, bases["dist"][0], bases["sem"][0])
            rd, rs = lift_level(params, level - 1, rd, rs, bases["dist"][1], bases["sem"][1])
            td, ts = lift_level(params, level - 1, td, ts, bases["dist"][2], bases["sem"][2])
        w_dist, w_sem = weights[level - 1]
        dist_on, sem_on = active_spaces(config, level)
        if dist_on:
            d_terms[level - 1] = level_distance(
                hd, rd, td, params.transform_seed[level - 1], config.norm_p, config.transform
            )
        if sem_on:
            s_terms[level - 1] = level_semantic(hs, rs, ts)
        total += config.lambdas[level - 1] * (w_dist * d_terms[level - 1] + w_sem * s_terms[level - 1])
    return ScoreBreakdown(distance_terms=d_terms, semantic_terms=s_terms, total=total)


def _norm_rows(residual, norm_p):
    if norm_p == 1:
        return np.sum(np.abs(residual), axis=-1)
    return np.sqrt(np.sum(residual * residual, axis=-1))


def _chain(params, base, proj_vec, levels, space):
    """Per-level projections of a (B, half) base block, as a list of arrays."""
    extract = params.extract_dist if space == "dist" else params.extract_sem
    out = [proj_vec * base]
    for level in range(2, levels + 1):
        out.append(out[-1] @ extract[level - 2] + base)
    return out


def score_triples(params: HieParams, config: HieConfig, triples):
    """Vectorized totals for a (B, 3) id batch, plus a cache for backprop.

    The cache holds the bases, the per-level projection chains, the raw
    per-level residual vectors and distances, and the blend state: enough
    to run the analytic backward pass without re-scoring.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    h_ids, r_ids, t_ids = triples[:, 0], triples[:, 1], triples[:, 2]
    half = config.half
    levels = config.levels
    h_row, r_row, t_row = params.ent[h_ids], params.rel[r_ids], params.ent[t_ids]
    need_dist = any(active_spaces(config, lv)[0] for lv in range(1, levels + 1))
    need_sem = any(active_spaces(config, lv)[1] for lv in range(1, levels + 1))

    cache = {
        "ids": (h_ids, r_ids, t_ids),
        "bases_dist": (h_row[:, :half], r_row[:, :half], t_row[:, :half]),
        "bases_sem": (h_row[:, half:], r_row[:, half:], t_row[:, half:]),
        "alpha": params.alpha,
    }
    cache["weights"] = level_weights(config, cache["alpha"])

    if need_dist:
        hb, rb, tb = cache["bases_dist"]
        cache["h_dist"] = _chain(params, hb, params.proj_head_dist, levels, "dist")
        cache["r_dist"] = _chain(params, rb, params.proj_rel_dist, levels, "dist")
        cache["t_dist"] = _chain(params, tb, params.proj_tail_dist, levels, "dist")
    if need_sem:
        hb, rb, tb = cache["bases_sem"]
        cache["h_sem"] = _chain(params, hb, params.proj_head_sem, levels, "sem")
        cache["r_sem"] = _chain(params, rb, params.proj_rel_sem, levels, "sem")
        cache["t_sem"] = _chain(params, tb, params.proj_tail_sem, levels, "sem")

    B = len(triples)
    d_dist = np.zeros((B, levels))
    d_sem = np.zeros((B, levels))
    cache["u_dist"] = [None] * levels
    cache["u_sem"] = [None] * levels
    cache["rank1_inner"] = [None] * levels
    totals = np.zeros(B)
    for level in range(1, levels + 1):
        i = level - 1
        dist_on, sem_on = active_spaces(config, level)
        w_dist, w_sem = cache["weights"][i]
        if dist_on:
            seed = params.transform_seed[i]
            if config.transform == TRANSFORM_DIAGONAL:
                u = cache["h_dist"][i] * (seed * cache["r_dist"][i]) - cache["t_dist"][i]
            else:
                inner = cache["h_dist"][i] @ seed
                cache["rank1_inner"][i] = inner
                u = inner[:, None] * cache["r_dist"][i] - cache["t_dist"][i]
            cache["u_dist"][i] = u
            d_dist[:, i] = _norm_rows(u, config.norm_p)
        if sem_on:
            v = (cache["h_sem"][i] + cache["r_sem"][i]) - cache["t_sem"][i]
            cache["u_sem"][i] = v
            d_sem[:, i] = _norm_rows(v, 2)
        totals += config.lambdas[i] * (w_dist * d_dist[:, i] + w_sem * d_sem[:, i])
    cache["d_dist"] = d_dist
    cache["d_sem"] = d_sem
    return totals, cache


def _candidate_chain(params, config, candidates, role, space):
    half = config.half
    cols = slice(0, half) if space == "dist" else slice(half, 2 * half)
    base = params.ent[candidates, cols]
    proj = getattr(params, f"proj_{role}_{space}")
    return base, _chain(params, base, proj, config.levels, space)


def score_batch(params: HieParams, config: HieConfig, triples, candidates, corrupt_side, slab=8192):
    """(B, C) totals with one side of each triple replaced by each candidate.

    corrupt_side is "head" or "tail". Candidate projection chains are
    computed once; candidates are processed in slabs to bound the size of
    the (B, slab, half) temporaries.
    """
    if corrupt_side not in ("head", "tail"):
        raise ValueError(f"corrupt_side must be 'head' or 'tail', got {corrupt_side!r}")
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    candidates = np.asarray(candidates, dtype=np.int64).ravel()
    B, C, levels = len(triples), len(candidates), config.levels
    h_ids, r_ids, t_ids = triples[:, 0], triples[:, 1], triples[:, 2]
    half = config.half

    need_dist = any(active_spaces(config, lv)[0] for lv in range(1, levels + 1))
    need_sem = any(active_spaces(config, lv)[1] for lv in range(1, levels + 1))
    fixed_ent = t_ids if corrupt_side == "head" else h_ids
    fixed_role = "tail" if corrupt_side == "head" else "head"
    cand_role = "head" if corrupt_side == "head" else "tail"

    chains = {}
    if need_dist:
        fb = params.ent[fixed_ent, :half]
        chains["fixed_dist"] = _chain(params, fb, getattr(params, f"proj_{fixed_role}_dist"), levels, "dist")
        chains["rel_dist"] = _chain(params, params.rel[r_ids, :half], params.proj_rel_dist, levels, "dist")
        _, chains["cand_dist"] = _candidate_chain(params, config, candidates, cand_role, "dist")
    if need_sem:
        fb = params.ent[fixed_ent, half:]
        chains["fixed_sem"] = _chain(params, fb, getattr(params, f"proj_{fixed_role}_sem"), levels, "sem")
        chains["rel_sem"] = _chain(params, params.rel[r_ids, half:], params.proj_rel_sem, levels, "sem")
        _, chains["cand_sem"] = _candidate_chain(params, config, candidates, cand_role, "sem")

    weights = level_weights(config, params.alpha)
    totals = np.zeros((B, C))
    for start in range(0, C, slab):
        stop = min(start + slab, C)
        block = totals[:, start:stop]
        for level in range(1, levels + 1):
            i = level - 1
            dist_on, sem_on = active_spaces(config, level)
            w_dist, w_sem = weights[i]
            lam = config.lambdas[i]
            if dist_on and w_dist != 0.0:
                seed = params.transform_seed[i]
                rel = chains["rel_dist"][i]
                cand = chains["cand_dist"][i][start:stop]
                fixed = chains["fixed_dist"][i]
                if corrupt_side == "tail":
                    if config.transform == TRANSFORM_DIAGONAL:
                        m = fixed * (seed * rel)
                    else:
                        m = (fixed @ seed)[:, None] * rel
                    u = m[:, None, :] - cand[None, :, :]
                else:
                    if config.transform == TRANSFORM_DIAGONAL:
                        u = cand[None, :, :] * (seed * rel)[:, None, :] - fixed[:, None, :]
                    else:
                        u = (cand @ seed)[None, :, None] * rel[:, None, :] - fixed[:, None, :]
                block += (lam * w_dist) * _norm_rows(u, config.norm_p)
            if sem_on and w_sem != 0.0:
                rel = chains["rel_sem"][i]
                cand = chains["cand_sem"][i][start:stop]
                fixed = chains["fixed_sem"][i]
                if corrupt_side == "tail":
                    u = (fixed + rel)[:, None, :] - cand[None, :, :]
                else:
                    u = (cand[None, :, :] + rel[:, None, :]) - fixed[:, None, :]
                block += (lam * w_sem) * _norm_rows(u, 2)
    return totals
