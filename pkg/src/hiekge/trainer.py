"""Negative sampling, self-adversarial loss, analytic gradients, Adam, training loop.

Gradient code lives here rather than in the model modules: the models
expose forward passes with caches, and this module walks those caches
backward. Adversarial weights are treated as constants of the objective
(no gradient flows through them), so the finite-difference checker
freezes them before differencing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import baselines, hie_model
from .hie_model import HieParams, sigmoid

SIGN_PLAUSIBILITY = "plausibility"
SIGN_LITERAL = "literal"


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 6.0
    alpha_temp: float = 1.0
    num_negatives: int = 16
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 1000
    batch_size: int = 256
    seed: int = 0
    adversarial_sign: str = SIGN_PLAUSIBILITY

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.alpha_temp < 0:
            raise ValueError(f"alpha_temp must be >= 0, got {self.alpha_temp}")
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ValueError("adam_eps must be > 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.adversarial_sign not in (SIGN_PLAUSIBILITY, SIGN_LITERAL):
            raise ValueError(f"unknown adversarial_sign {self.adversarial_sign!r}")


@dataclass
class SparseGrad:
    """Gradient rows for an embedding table; ids unique and sorted."""

    ids: np.ndarray
    values: np.ndarray


@dataclass
class GradSet:
    """Batch gradient: sparse entity/relation rows plus dense structure tensors.

    Embedding rows not touched by the batch are absent, i.e. exactly zero.
    """

    ent: SparseGrad
    rel: SparseGrad
    dense: dict = field(default_factory=dict)


def coalesce(ids, values) -> SparseGrad:
    """Sum duplicate row gradients into unique sorted rows."""
    ids = np.asarray(ids, dtype=np.int64)
    order = np.argsort(ids, kind="stable")
    ids_sorted = ids[order]
    values_sorted = np.ascontiguousarray(values[order])
    starts = np.flatnonzero(np.concatenate(([True], ids_sorted[1:] != ids_sorted[:-1])))
    return SparseGrad(ids=ids_sorted[starts], values=np.add.reduceat(values_sorted, starts, axis=0))


def merge_grad_sets(a: GradSet, b: GradSet) -> GradSet:
    ent = coalesce(
        np.concatenate([a.ent.ids, b.ent.ids]),
        np.concatenate([a.ent.values, b.ent.values]),
    )
    rel = coalesce(
        np.concatenate([a.rel.ids, b.rel.ids]),
        np.concatenate([a.rel.values, b.rel.values]),
    )
    dense = dict(a.dense)
    for name, g in b.dense.items():
        dense[name] = dense[name] + g if name in dense else g
    return GradSet(ent=ent, rel=rel, dense=dense)


def sample_negatives(triple, n, num_entities, rng):
    """n corruptions of one triple: fair coin for the side, uniform entity."""
    if n < 1:
        raise ValueError("n must be >= 1")
    h, r, t = (int(v) for v in triple)
    out = np.empty((n, 3), dtype=np.int64)
    out[:, 0], out[:, 1], out[:, 2] = h, r, t
    corrupt_head = rng.integers(0, 2, size=n).astype(bool)
    entities = rng.integers(0, num_entities, size=n)
    out[corrupt_head, 0] = entities[corrupt_head]
    out[~corrupt_head, 2] = entities[~corrupt_head]
    return out


def sample_negatives_batch(batch, n, num_entities, rng):
    """(B, n, 3) corruptions, one negative set per batch row."""
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    B = len(batch)
    out = np.repeat(batch[:, None, :], n, axis=1)
    corrupt_head = rng.integers(0, 2, size=(B, n)).astype(bool)
    entities = rng.integers(0, num_entities, size=(B, n))
    heads = out[:, :, 0]
    tails = out[:, :, 2]
    heads[corrupt_head] = entities[corrupt_head]
    tails[~corrupt_head] = entities[~corrupt_head]
    return out


def adversarial_weights(neg_scores, alpha_temp, gamma=0.0, sign=SIGN_PLAUSIBILITY):
    """Softmax weights over each row's negatives, computed stably.

    The default weighs by plausibility, softmax(alpha_temp * (gamma - score)):
    negatives the model currently finds hard (low score) get more mass.
    sign="literal" exponentiates the raw scores instead, softmax(alpha_temp *
    score), which up-weights the least plausible negatives. Weights are
    constants of the training objective; callers must not differentiate
    through them.
    """
    scores = np.asarray(neg_scores, dtype=np.float64)
    if sign == SIGN_PLAUSIBILITY:
        logits = alpha_temp * (gamma - scores)
    elif sign == SIGN_LITERAL:
        logits = alpha_temp * scores
    else:
        raise ValueError(f"unknown adversarial sign {sign!r}")
    logits = logits - np.max(logits, axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / np.sum(w, axis=-1, keepdims=True)


def _softplus(x):
    # -log sigmoid(-x), stable on both tails
    return np.logaddexp(0.0, x)


def loss(pos_scores, neg_scores, weights, gamma):
    """Mean margin loss: -log sig(gamma - pos) - sum_j w_j log sig(neg_j - gamma).

    Accepts one example (scalar pos, (n,) negatives) or a batch ((B,) pos,
    (B, n) negatives); the weighted negative term is summed per example and
    the examples are averaged.
    """
    pos = np.atleast_1d(np.asarray(pos_scores, dtype=np.float64))
    neg = np.asarray(neg_scores, dtype=np.float64).reshape(len(pos), -1)
    w = np.asarray(weights, dtype=np.float64).reshape(neg.shape)
    per_example = _softplus(pos - gamma) + np.sum(w * _softplus(gamma - neg), axis=-1)
    return float(np.mean(per_example))


def _forward(params, config, triples):
    if isinstance(params, HieParams):
        return hie_model.score_triples(params, config, triples)
    return baselines.score_triples(params, config, triples)


def _norm_backward(u, d, norm_p, upstream):
    """Gradient of upstream * ||u||_p w.r.t. u, row-wise.

    Subgradient 0 at L1 kinks and at the L2 origin.
    """
    if norm_p == 1:
        return upstream[:, None] * np.sign(u)
    safe = np.where(d > 0.0, d, 1.0)
    return (upstream / safe)[:, None] * np.where(d[:, None] > 0.0, u, 0.0)


def _hie_backprop(params: HieParams, config, cache, upstream) -> GradSet:
    """Analytic gradients of sum_b upstream[b] * total[b] for one forward cache."""
    upstream = np.asarray(upstream, dtype=np.float64)
    half = config.half
    levels = config.levels
    h_ids, r_ids, t_ids = cache["ids"]
    B = len(h_ids)
    alpha = cache["alpha"]
    weights = cache["weights"]

    dense = {
        "proj_head_dist": np.zeros(half),
        "proj_tail_dist": np.zeros(half),
        "proj_rel_dist": np.zeros(half),
        "proj_head_sem": np.zeros(half),
        "proj_tail_sem": np.zeros(half),
        "proj_rel_sem": np.zeros(half),
        "transform_seed": np.zeros_like(params.transform_seed),
        "extract_dist": np.zeros_like(params.extract_dist),
        "extract_sem": np.zeros_like(params.extract_sem),
        "blend_logit": np.zeros(()),
    }
    # direct per-level gradients into each projection chain
    g_chain = {
        (role, space): [None] * levels
        for role in ("head", "rel", "tail")
        for space in ("dist", "sem")
    }

    blend_slope = 0.0
    for level in range(1, levels + 1):
        i = level - 1
        dist_on, sem_on = hie_model.active_spaces(config, level)
        w_dist, w_sem = weights[i]
        lam = config.lambdas[i]
        if dist_on and sem_on:
            # d(total)/d(alpha) collects only levels where the blend is live
            blend_slope += lam * float(
                np.sum(upstream * (cache["d_dist"][:, i] - cache["d_sem"][:, i]))
            )
        if dist_on and w_dist != 0.0:
            u = cache["u_dist"][i]
            gu = _norm_backward(u, cache["d_dist"][:, i], config.norm_p, upstream * (lam * w_dist))
            seed = params.transform_seed[i]
            h_lvl = cache["h_dist"][i]
            r_lvl = cache["r_dist"][i]
            if config.transform == hie_model.TRANSFORM_DIAGONAL:
                g_chain[("head", "dist")][i] = gu * (seed * r_lvl)
                g_chain[("rel", "dist")][i] = gu * (seed * h_lvl)
                dense["transform_seed"][i] += np.sum(gu * (h_lvl * r_lvl), axis=0)
            else:
                g_inner = np.sum(gu * r_lvl, axis=-1)
                inner = cache["rank1_inner"][i]
                g_chain[("head", "dist")][i] = g_inner[:, None] * seed[None, :]
                g_chain[("rel", "dist")][i] = inner[:, None] * gu
                dense["transform_seed"][i] += g_inner @ h_lvl
            g_chain[("tail", "dist")][i] = -gu
        if sem_on and w_sem != 0.0:
            v = cache["u_sem"][i]
            gv = _norm_backward(v, cache["d_sem"][:, i], 2, upstream * (lam * w_sem))
            g_chain[("head", "sem")][i] = gv
            g_chain[("rel", "sem")][i] = gv
            g_chain[("tail", "sem")][i] = -gv
    dense["blend_logit"][...] = blend_slope * alpha * (1.0 - alpha)

    base_grads = {}  # (role, space) -> (B, half) gradient into the raw halves
    for (role, space), grads in g_chain.items():
        if all(g is None for g in grads):
            continue
        chain = cache[f"{'hrt'[('head', 'rel', 'tail').index(role)]}_{space}"]
        extract = params.extract_dist if space == "dist" else params.extract_sem
        g_extract = dense["extract_dist"] if space == "dist" else dense["extract_sem"]
        bases = cache["bases_dist"] if space == "dist" else cache["bases_sem"]
        base = bases[("head", "rel", "tail").index(role)]
        proj = getattr(params, f"proj_{role}_{space}")

        g_base = np.zeros((B, half))
        G = grads[levels - 1] if grads[levels - 1] is not None else np.zeros((B, half))
        for j in range(levels - 1, 0, -1):
            g_extract[j - 1] += chain[j - 1].T @ G
            g_base += G
            G = G @ extract[j - 1].T
            if grads[j - 1] is not None:
                G = G + grads[j - 1]
        dense[f"proj_{role}_{space}"] += np.sum(G * base, axis=0)
        g_base += G * proj
        base_grads[(role, space)] = g_base

    k = 2 * half
    ent_rows = np.zeros((2 * B, k))
    if ("head", "dist") in base_grads:
        ent_rows[:B, :half] = base_grads[("head", "dist")]
    if ("head", "sem") in base_grads:
        ent_rows[:B, half:] = base_grads[("head", "sem")]
    if ("tail", "dist") in base_grads:
        ent_rows[B:, :half] = base_grads[("tail", "dist")]
    if ("tail", "sem") in base_grads:
        ent_rows[B:, half:] = base_grads[("tail", "sem")]
    rel_rows = np.zeros((B, k))
    if ("rel", "dist") in base_grads:
        rel_rows[:, :half] = base_grads[("rel", "dist")]
    if ("rel", "sem") in base_grads:
        rel_rows[:, half:] = base_grads[("rel", "sem")]

    ent = coalesce(np.concatenate([h_ids, t_ids]), ent_rows)
    rel = coalesce(r_ids, rel_rows)
    return GradSet(ent=ent, rel=rel, dense=dense)


def _baseline_backprop(params, config, cache, upstream) -> GradSet:
    upstream = np.asarray(upstream, dtype=np.float64)
    h_ids, r_ids, t_ids = cache["ids"]
    if params.kind == baselines.TRANSE:
        gu = _norm_backward(cache["u"], cache["totals"], config.norm_p, upstream)
        gh, gr, gt = gu, gu.copy(), -gu
    elif params.kind == baselines.DISTMULT:
        h, r, t = cache["hrt"]
        gh = -upstream[:, None] * (r * t)
        gr = -upstream[:, None] * (h * t)
        gt = -upstream[:, None] * (h * r)
    else:
        hr, hi, cos, sin, re, im = cache["rotate"]
        d = cache["totals"]
        safe = np.where(d > 0.0, d, 1.0)
        scale = (upstream / safe)[:, None]
        live = d[:, None] > 0.0
        gu_re = scale * np.where(live, re, 0.0)
        gu_im = scale * np.where(live, im, 0.0)
        B, dim = len(h_ids), params.ent.shape[1]
        gh = np.empty((B, dim))
        gh[:, 0::2] = gu_re * cos + gu_im * sin
        gh[:, 1::2] = -gu_re * sin + gu_im * cos
        gt = np.empty((B, dim))
        gt[:, 0::2] = -gu_re
        gt[:, 1::2] = -gu_im
        gr = np.zeros((B, dim))
        gr[:, : dim // 2] = gu_re * (-hr * sin - hi * cos) + gu_im * (hr * cos - hi * sin)
    ent = coalesce(np.concatenate([h_ids, t_ids]), np.concatenate([gh, gt]))
    rel = coalesce(r_ids, gr)
    return GradSet(ent=ent, rel=rel, dense={})


def backprop(params, config, cache, upstream) -> GradSet:
    if isinstance(params, HieParams):
        return _hie_backprop(params, config, cache, upstream)
    return _baseline_backprop(params, config, cache, upstream)


def gradients(params, model_config, train_config: TrainConfig, batch, negatives, weights=None):
    """Mean-batch loss and its exact analytic gradient.

    negatives is (B, n, 3). If weights is None the adversarial weights are
    computed from the current negative scores; either way they enter the
    gradient as constants.
    """
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    negatives = np.asarray(negatives, dtype=np.int64)
    B = len(batch)
    if B == 0:
        raise ValueError("batch must be nonempty")
    n = negatives.shape[1]
    pos_scores, pos_cache = _forward(params, model_config, batch)
    neg_scores_flat, neg_cache = _forward(params, model_config, negatives.reshape(-1, 3))
    neg_scores = neg_scores_flat.reshape(B, n)
    if weights is None:
        weights = adversarial_weights(
            neg_scores, train_config.alpha_temp, train_config.gamma, train_config.adversarial_sign
        )
    loss_value = loss(pos_scores, neg_scores, weights, train_config.gamma)
    up_pos = sigmoid(pos_scores - train_config.gamma) / B
    up_neg = -(weights * sigmoid(train_config.gamma - neg_scores)) / B
    g_pos = backprop(params, model_config, pos_cache, up_pos)
    g_neg = backprop(params, model_config, neg_cache, up_neg.reshape(-1))
    return loss_value, merge_grad_sets(g_pos, g_neg)


def grad_dense(grads: GradSet, params, name):
    """One parameter tensor's gradient as a full dense array."""
    tensor = getattr(params, name)
    if name in ("ent", "rel"):
        sparse = grads.ent if name == "ent" else grads.rel
        out = np.zeros_like(tensor)
        out[sparse.ids] = sparse.values
        return out
    if name in grads.dense:
        return grads.dense[name]
    return np.zeros_like(tensor)


def grad_check(params, model_config, train_config, batch, fd_step=1e-6, max_coords=None, rng=None,
               floor=1e-8):
    """Max relative disagreement between analytic gradients and central differences.

    The adversarial weights are frozen at their center-point values before
    differencing, since the objective treats them as constants. Checks
    every coordinate unless max_coords caps the count, in which case a
    random subset (at least 500 when available) is drawn.

    floor is the denominator floor of the relative error. floor=None scales
    it to 0.1% of the largest analytic gradient coordinate: adversarial
    softmax weights can push true gradients many orders below what central
    differences resolve in float64, and those coordinates would otherwise
    dominate the verdict with pure measurement noise.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be > 0")
    rng = np.random.default_rng(0) if rng is None else rng
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    negatives = sample_negatives_batch(batch, train_config.num_negatives, params.num_entities, rng)
    neg_flat = negatives.reshape(-1, 3)

    center_neg, _ = _forward(params, model_config, neg_flat)
    weights = adversarial_weights(
        center_neg.reshape(len(batch), -1),
        train_config.alpha_temp,
        train_config.gamma,
        train_config.adversarial_sign,
    )
    _, grads = gradients(params, model_config, train_config, batch, negatives, weights=weights)
    if floor is None:
        scale = max(
            float(np.max(np.abs(grad_dense(grads, params, name)), initial=0.0))
            for name, _ in params.field_items()
        )
        floor = max(1e-8, 1e-3 * scale)

    def loss_at():
        pos, _ = _forward(params, model_config, batch)
        neg, _ = _forward(params, model_config, neg_flat)
        return loss(pos, neg.reshape(len(batch), -1), weights, train_config.gamma)

    names = [name for name, _ in params.field_items()]
    sizes = [getattr(params, name).size for name in names]
    total = int(np.sum(sizes))
    if max_coords is not None and total > max_coords:
        picked = rng.choice(total, size=max(min(total, 500), max_coords), replace=False)
    else:
        picked = np.arange(total)

    bounds = np.cumsum([0] + sizes)
    max_err = 0.0
    for flat_idx in picked:
        which = int(np.searchsorted(bounds, flat_idx, side="right") - 1)
        name = names[which]
        tensor = getattr(params, name)
        local = int(flat_idx - bounds[which])
        orig = tensor.flat[local]
        tensor.flat[local] = orig + fd_step
        up = loss_at()
        tensor.flat[local] = orig - fd_step
        down = loss_at()
        tensor.flat[local] = orig
        fd = (up - down) / (2.0 * fd_step)
        analytic = grad_dense(grads, params, name).flat[local]
        err = abs(analytic - fd) / max(abs(analytic), abs(fd), floor)
        max_err = max(max_err, err)
    return max_err


def init_adam(params):
    return AdamState(
        moment1={name: np.zeros_like(t) for name, t in params.field_items()},
        moment2={name: np.zeros_like(t) for name, t in params.field_items()},
        step=0,
    )


@dataclass
class AdamState:
    moment1: dict
    moment2: dict
    step: int = 0


def adam_step(params, grads: GradSet, state: AdamState, config: TrainConfig):
    """One Adam update, lazily touching only the rows present in the gradient.

    Untouched embedding rows keep stale moments (no decay), which is the
    standard sparse-Adam compromise; dense tensors always update. Bias
    correction uses the global step count.
    """
    state.step += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    lr, eps = config.learning_rate, config.adam_eps
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step

    for name, sparse in (("ent", grads.ent), ("rel", grads.rel)):
        tensor = getattr(params, name)
        if sparse.values.shape[1:] != tensor.shape[1:]:
            raise ValueError(f"gradient width mismatch for {name}")
        rows = sparse.ids
        m = state.moment1[name]
        v = state.moment2[name]
        m[rows] = b1 * m[rows] + (1.0 - b1) * sparse.values
        v[rows] = b2 * v[rows] + (1.0 - b2) * sparse.values**2
        update = (m[rows] / bc1) / (np.sqrt(v[rows] / bc2) + eps)
        tensor[rows] -= lr * update

    for name, g in grads.dense.items():
        tensor = getattr(params, name)
        if g.shape != tensor.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.moment1[name]
        v = state.moment2[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g**2
        tensor -= lr * ((m / bc1) / (np.sqrt(v / bc2) + eps))
    return params, state


def init_model(model_kind, num_entities, num_relations, model_config, seed):
    if model_kind == "hie":
        return hie_model.init_params(num_entities, num_relations, model_config, seed)
    return baselines.init_params(num_entities, num_relations, model_config, seed)


def train(kg, model_kind, model_config, train_config: TrainConfig, params=None):
    """Full training loop; returns (params, loss_log).

    loss_log rows are (step, mean_loss, alpha_value); alpha_value is None
    for baseline models. Raises NumericError on a non-finite loss.
    """
    from . import kg_data  # local import keeps module load order flat

    if params is None:
        params = init_model(
            model_kind, len(kg.entity_names), len(kg.relation_names), model_config, train_config.seed
        )
    state = init_adam(params)
    # sampling stream is a spawned child of the same seed, so it cannot
    # collide with the init stream
    rng = np.random.default_rng(np.random.SeedSequence(train_config.seed).spawn(1)[0])
    log = []
    num_entities = params.num_entities
    for step in range(1, train_config.steps + 1):
        batch = kg_data.sample_batch(kg.train, train_config.batch_size, rng)
        negatives = sample_negatives_batch(batch, train_config.num_negatives, num_entities, rng)
        loss_value, grads = gradients(params, model_config, train_config, batch, negatives)
        if not np.isfinite(loss_value):
            raise NumericError(f"non-finite loss at step {step}")
        adam_step(params, grads, state, train_config)
        if step == 1 or step % 100 == 0 or step == train_config.steps:
            alpha = params.alpha if isinstance(params, HieParams) else None
            log.append((step, loss_value, alpha))
    return params, log
