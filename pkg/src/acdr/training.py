"""Training steps for the baseline, CDR and ACDR modes, and evaluation.

Per utterance, CDR and ACDR share the noising encoder: the sequence
representation ``V`` and both condition streams are noised at one shared step
``t`` and the denoiser predicts the noise of each stream. They also share the
denoising decoder: a strided deterministic denoising pass from ``V_t`` down
to a reconstruction ``V0_hat``. The modes differ in what consumes
``V0_hat``:

* ``acdr``: a semantic distance to ``V`` (weighted by gamma2); CTC runs on ``V``.
* ``cdr``:  the classifier; CTC runs on the reconstruction.

Gradients flow through the whole denoising pass back into the denoiser and
the backbone. The codebook argmin passes no gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import diffusion as D
from .backbone import BaselineModel, baseline_backward, baseline_forward, classify, classify_backward
from .conditions import Codebook, combine_conditions, gloss_condition, temporal_condition, temporal_condition_backward
from .config import Config
from .constraints import LossBreakdown, median_heuristic, mmd, noise_loss, noise_loss_grad, semantic_constraint_grad
from .ctc import ctc_greedy_decode, ctc_loss, min_frames
from .data import Utterance
from .denoiser import DenoiserParams, denoiser_backward, denoiser_forward
from .errors import InfeasibleTargetError
from .optim import Adam, scaled_milestones, step_decay_lr
from .wer import WerReport, corpus_wer, wer

log = logging.getLogger(__name__)

DIAG_STREAM = 1_000_003
SHUFFLE_STREAM = 1_000_033


class DenoiserNet:
    """Adapter giving the denoiser a forward/backward pair over its parameters."""

    def __init__(self, params: DenoiserParams):
        self.params = params

    def forward(self, noisy, clean, f_phi, t, stream):
        return denoiser_forward(noisy, clean, f_phi, t, self.params, stream=stream, cache=True)

    def zero_grads(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.params.tensors.items()}

    def backward(self, state, grad, accumulate=None):
        return denoiser_backward(state, grad, accumulate=accumulate)


@dataclass
class Tape:
    timesteps: list
    f_phi: np.ndarray
    states: list = field(default_factory=list)
    coeffs: list = field(default_factory=list)


def denoise_timesteps(t: int, T_noise: int, K: int) -> list[int]:
    """Start at the sampled ``t``, then follow the strided grid below it."""
    return [t] + [s for s in D.ddim_subsequence(T_noise, K) if s < t]


def refine(Vt, V, f_phi, timesteps, eps_model, sched):
    """Deterministic denoising pass that records what :func:`refine_backward` needs."""
    tape = Tape(list(timesteps), f_phi)
    x = Vt
    v0_hat = x
    for i, t in enumerate(timesteps):
        eps_pred, state = eps_model.forward(x, V, f_phi, t, "v")
        v0_hat = D.predict_v0(x, eps_pred, f_phi, t, sched)
        tape.states.append(state)
        if i + 1 == len(timesteps):
            tape.coeffs.append(None)
            break
        lam = D.step_coefficients(t, timesteps[i + 1], sched)
        tape.coeffs.append(lam)
        x = lam[0] * v0_hat + lam[1] * x + lam[2] * f_phi
    return v0_hat, tape


def refine_backward(tape: Tape, g_out, eps_model, sched, pgrads: dict | None = None):
    """Gradients of ``sum(g_out * V0_hat)`` with respect to (V_t, V, f_phi) and denoiser params.

    Parameter gradients are added into ``pgrads`` when given.
    """
    g_V = np.zeros_like(g_out)
    g_f = np.zeros_like(g_out)
    if pgrads is None:
        pgrads = eps_model.zero_grads()
    g_next = None
    for i in range(len(tape.timesteps) - 1, -1, -1):
        t = tape.timesteps[i]
        if g_next is None:
            g_v0 = g_out
            g_x = np.zeros_like(g_out)
        else:
            lam0, lam1, lam2, _ = tape.coeffs[i]
            g_v0 = lam0 * g_next
            g_x = lam1 * g_next
            g_f = g_f + lam2 * g_next
        ab = sched.abar(t)
        sa = np.sqrt(ab)
        g_x = g_x + g_v0 / sa
        g_f = g_f - (1.0 - sa) / sa * g_v0
        g_eps = -np.sqrt(1.0 - ab) / sa * g_v0
        _, ig = eps_model.backward(tape.states[i], g_eps, accumulate=pgrads)
        g_x = g_x + ig["noisy"]
        g_V = g_V + ig["clean"]
        g_f = g_f + ig["f_phi"]
        g_next = g_x
    return g_next, g_V, g_f, pgrads


def _add(acc: dict, grads: dict, scale: float = 1.0) -> None:
    for k, g in grads.items():
        acc[k] = acc[k] + scale * g


def utterance_grads(utt: Utterance, model: BaselineModel, eps_model, cb: Codebook,
                    sched: D.DiffusionSchedule | None, cfg: Config, rng: np.random.Generator | None,
                    mode: str):
    """Loss components and gradients for one utterance.

    Returns ``(LossBreakdown, model_grads, denoiser_grads or None)``.
    """
    tc = cfg.train
    (X_sp, X_gwt, V, Z), bstate = baseline_forward(utt.frames, model, cache=True)
    mgrads = {k: np.zeros_like(v) for k, v in model.tensors.items()}
    if mode == "baseline":
        l_ctc, dZ = ctc_loss(Z, utt.labels)
        _add(mgrads, baseline_backward(bstate, model, dZ=dZ))
        return LossBreakdown(l_ctc=l_ctc, total=l_ctc, gamma1=0.0, gamma2=0.0), mgrads, None

    g1, g2 = tc.gamma1, tc.gamma2
    T, C = V.shape
    p_tc = temporal_condition(X_gwt)
    p_gc = gloss_condition(V, cb)
    f = combine_conditions(p_tc, p_gc, tc.tau)
    t = int(rng.integers(1, sched.T_max + 1))
    eps_v, eps_tc, eps_gc = rng.standard_normal((3, T, C))

    # noising encoder; condition streams drift toward themselves
    ab = sched.abar(t)
    sa = np.sqrt(ab)
    V_t = D.forward_noise(V, f, t, sched, eps_v)
    tc_t = D.forward_noise(p_tc, p_tc, t, sched, eps_tc)
    gc_t = D.forward_noise(p_gc, p_gc, t, sched, eps_gc)
    e_v, s_v = eps_model.forward(V_t, V, f, t, "v")
    e_tc, s_tc = eps_model.forward(tc_t, p_tc, None, t, "tc")
    e_gc, s_gc = eps_model.forward(gc_t, p_gc, None, t, "gc")
    l_eps = noise_loss(e_v, eps_v) + noise_loss(e_tc, eps_tc) + noise_loss(e_gc, eps_gc)

    # denoising decoder
    steps = denoise_timesteps(t, sched.T_max, cfg.diffusion.ddim_steps)
    v0_hat, tape = refine(V_t, V, f, steps, eps_model, sched)

    if mode == "acdr":
        l_sc, g_v0 = semantic_constraint_grad(v0_hat, V, tc.measure)
        g_v0 = g2 * g_v0
        l_ctc, dZ = ctc_loss(Z, utt.labels)
        total = g1 * l_eps + g2 * l_sc + l_ctc
    elif mode == "cdr":
        l_sc = 0.0
        Z_hat = classify(v0_hat, model)
        l_ctc, dZ_hat = ctc_loss(Z_hat, utt.labels)
        g_v0, cls_g = classify_backward(v0_hat, model, dZ_hat)
        _add(mgrads, cls_g)
        dZ = None
        total = g1 * l_eps + l_ctc
    else:
        raise ValueError(f"unknown mode {mode!r}")

    g_Vt, g_V, g_f, dgrads = refine_backward(tape, g_v0, eps_model, sched)
    _, ig = eps_model.backward(s_v, g1 * noise_loss_grad(e_v, eps_v), accumulate=dgrads)
    g_Vt = g_Vt + ig["noisy"]
    g_V = g_V + ig["clean"]
    g_f = g_f + ig["f_phi"]
    _, ig = eps_model.backward(s_tc, g1 * noise_loss_grad(e_tc, eps_tc), accumulate=dgrads)
    g_ptc = ig["noisy"] + ig["clean"]
    eps_model.backward(s_gc, g1 * noise_loss_grad(e_gc, eps_gc), accumulate=dgrads)

    g_V = g_V + sa * g_Vt
    g_f = g_f + (1.0 - sa) * g_Vt
    g_ptc = g_ptc + tc.tau * g_f
    g_Xgwt = temporal_condition_backward(p_tc, g_ptc)
    _add(mgrads, baseline_backward(bstate, model, dZ=dZ, dV=g_V, dX_gwt=g_Xgwt))
    return (LossBreakdown(l_eps=l_eps, l_sc=l_sc, l_ctc=l_ctc, total=total, gamma1=g1, gamma2=g2,
                          extras={"t": t}),
            mgrads, dgrads)


def utterance_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, index])


def train_step(batch, model: BaselineModel, denoiser: DenoiserParams | None, cb: Codebook,
               sched, cfg: Config, opt: Adam, lr: float, mode: str | None = None,
               epoch: int = 0, eps_model=None) -> LossBreakdown:
    """One optimizer step on a batch of ``(index, Utterance)`` pairs; returns mean losses."""
    mode = mode or cfg.train.mode
    if eps_model is None and denoiser is not None:
        eps_model = DenoiserNet(denoiser)
    mg = {k: np.zeros_like(v) for k, v in model.tensors.items()}
    dg = {k: np.zeros_like(v) for k, v in denoiser.tensors.items()} if denoiser is not None else None
    sums = {"l_eps": 0.0, "l_sc": 0.0, "l_ctc": 0.0, "total": 0.0}
    n = 0
    for index, utt in batch:
        if utt.frames.shape[0] < min_frames(utt.labels):
            log.warning("skipping %s: target infeasible for %d frames", utt.uid, utt.frames.shape[0])
            continue
        rng = utterance_rng(cfg.train.seed, epoch, index)
        lb, um, ud = utterance_grads(utt, model, eps_model, cb, sched, cfg, rng, mode)
        _add(mg, um)
        if ud is not None and dg is not None:
            _add(dg, ud)
        for k in sums:
            sums[k] += getattr(lb, k)
        n += 1
    if n == 0:
        return LossBreakdown(gamma1=cfg.train.gamma1, gamma2=cfg.train.gamma2)
    groups = [("model", model.tensors, {k: g / n for k, g in mg.items()})]
    if dg is not None and mode != "baseline":
        groups.append(("denoiser", denoiser.tensors, {k: g / n for k, g in dg.items()}))
    opt.step(groups, lr=lr)
    for prefix, params, _ in groups:
        for k, p in params.items():
            if not np.all(np.isfinite(p)):
                raise FloatingPointError(f"non-finite parameter {prefix}.{k} after step")
    g1, g2 = (0.0, 0.0) if mode == "baseline" else (cfg.train.gamma1, cfg.train.gamma2)
    return LossBreakdown(l_eps=sums["l_eps"] / n, l_sc=sums["l_sc"] / n, l_ctc=sums["l_ctc"] / n,
                         total=sums["total"] / n, gamma1=g1, gamma2=g2)


def train_step_baseline(batch, model, cb, cfg, opt, lr, epoch=0) -> LossBreakdown:
    return train_step(batch, model, None, cb, None, cfg, opt, lr, mode="baseline", epoch=epoch)


def train_step_acdr(batch, model, denoiser, cb, sched, cfg, opt, lr, epoch=0, eps_model=None) -> LossBreakdown:
    return train_step(batch, model, denoiser, cb, sched, cfg, opt, lr, mode="acdr", epoch=epoch,
                      eps_model=eps_model)


def train_step_cdr(batch, model, denoiser, cb, sched, cfg, opt, lr, epoch=0, eps_model=None) -> LossBreakdown:
    return train_step(batch, model, denoiser, cb, sched, cfg, opt, lr, mode="cdr", epoch=epoch,
                      eps_model=eps_model)


def decode(utt: Utterance, model: BaselineModel) -> list[int]:
    _, _, _, Z = baseline_forward(utt.frames, model)
    return ctc_greedy_decode(Z)


def evaluate(model: BaselineModel, utterances: list[Utterance]) -> WerReport:
    """Corpus WER of greedy decodes from the classifier applied to V."""
    if not utterances:
        raise ValueError("empty split")
    return corpus_wer(wer(decode(u, model), u.labels) for u in utterances)


def refinement_mmd(model: BaselineModel, denoiser: DenoiserParams, cb: Codebook, sched,
                   cfg: Config, utterances: list[Utterance]) -> float:
    """Mean biased MMD between the denoised reconstruction and V over ``utterances``.

    Each utterance uses a fixed noise draw, so values are comparable across epochs.
    """
    net = DenoiserNet(denoiser)
    vals = []
    for i, u in enumerate(utterances):
        rng = np.random.default_rng([cfg.train.seed, DIAG_STREAM, i])
        _, X_gwt, V, _ = baseline_forward(u.frames, model)
        f = combine_conditions(temporal_condition(X_gwt), gloss_condition(V, cb), cfg.train.tau)
        t = int(rng.integers(1, sched.T_max + 1))
        V_t = D.forward_noise(V, f, t, sched, rng.standard_normal(V.shape))
        steps = denoise_timesteps(t, sched.T_max, cfg.diffusion.ddim_steps)
        v0_hat = D.denoise_loop(
            V_t, f, lambda x, s: denoiser_forward(x, V, f, s, denoiser), sched, steps
        )
        vals.append(mmd(v0_hat, V, median_heuristic(V)))
    return float(np.mean(vals))


def build_schedule(cfg: Config) -> D.DiffusionSchedule:
    d = cfg.diffusion
    return D.make_linear_schedule(d.beta_start, d.beta_end, d.T_noise)


@dataclass
class MetricsRecord:
    epoch: int
    mode: str
    l_ctc: float
    l_eps: float
    l_sc: float
    total: float
    dev_wer: float
    mmd_v0hat_v: float | None
    lr: float
    wall_seconds: float = 0.0

    def to_json_dict(self, include_time: bool = False) -> dict:
        d = {k: getattr(self, k) for k in ("epoch", "mode", "l_ctc", "l_eps", "l_sc", "total",
                                             "dev_wer", "mmd_v0hat_v", "lr")}
        if include_time:
            d["wall_seconds"] = self.wall_seconds
        return d


def init_denoiser(cfg: Config, C: int) -> DenoiserParams:
    from .denoiser import init_params

    m = cfg.model
    return init_params(m.init_seed + 1, C, m.width, m.depth, t_max=cfg.diffusion.T_noise)


def init_backbone(cfg: Config, C_in: int, G: int) -> BaselineModel:
    from .backbone import init_model

    return init_model(cfg.model.init_seed, C_in, C_in, G, cfg.model.spatial_channels)


def train(cfg: Config, cb: Codebook, train_set: list[Utterance], dev_set: list[Utterance],
          callback=None, diag_every: int = 1, stop_after: int | None = None):
    """Full training run. Returns ``(best_model, best_denoiser, final_model, final_denoiser, records)``.

    ``callback(record)`` is invoked after every epoch. ``stop_after`` ends the
    run early while keeping the learning-rate schedule of the full run.
    """
    import time

    tc = cfg.train
    mode = tc.mode
    C_in = train_set[0].frames.shape[1]
    model = init_backbone(cfg, C_in, cb.G)
    denoiser = init_denoiser(cfg, C_in) if mode != "baseline" else None
    sched = build_schedule(cfg) if mode != "baseline" else None
    opt = Adam(lr=tc.lr, weight_decay=tc.weight_decay)
    milestones = list(tc.decay_epochs) or scaled_milestones(tc.epochs)
    records = []
    best = (np.inf, None, None)
    n_epochs = tc.epochs if stop_after is None else min(stop_after, tc.epochs)
    for epoch in range(n_epochs):
        start = time.perf_counter()
        lr = step_decay_lr(tc.lr, epoch, milestones, tc.decay_factor)
        order = np.random.default_rng([tc.seed, SHUFFLE_STREAM, epoch]).permutation(len(train_set))
        sums = np.zeros(4)
        for b in range(0, len(order), tc.batch_size):
            batch = [(int(i), train_set[int(i)]) for i in order[b : b + tc.batch_size]]
            lb = train_step(batch, model, denoiser, cb, sched, cfg, opt, lr, mode=mode, epoch=epoch)
            sums += np.array([lb.l_ctc, lb.l_eps, lb.l_sc, lb.total]) * len(batch)
        sums /= len(order)
        dev = evaluate(model, dev_set)
        diag = None
        if denoiser is not None and (epoch + 1) % diag_every == 0:
            diag = refinement_mmd(model, denoiser, cb, sched, cfg, dev_set[: tc.diag_utterances])
        rec = MetricsRecord(epoch + 1, mode, *map(float, sums), dev.wer, diag, lr,
                            time.perf_counter() - start)
        records.append(rec)
        if dev.wer < best[0]:
            best = (dev.wer, model.copy(), denoiser.copy() if denoiser is not None else None)
        if callback is not None:
            callback(rec)
    return best[1], best[2], model, denoiser, records
