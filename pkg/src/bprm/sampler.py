"""One tempered Markov chain for the profile-regression mixture.

A sweep runs, in order: label-switching moves, stick/slice update, the
allocation update, cluster-parameter updates and global-parameter updates.
At temperature ``T`` every likelihood term is raised to ``1/T``; prior and
allocation terms are not.

All update functions modify ``state`` in place and return it.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import AdaptationSchedule, RunConfig, Schedule
from .errors import CapExceeded, EmptySliceSet
from .likelihood import Design, individual_at, individual_log_lik
from .model import Dataset, PriorConfig, beta_pert_log_density, gamma_log_density, sample_pert
from .sample import PosteriorSample
from .state import RESERVED, ChainState, MoveStats

log = logging.getLogger(__name__)

TINY = np.finfo(float).tiny
V_MAX = np.nextafter(1.0, 0.0)
GLOBAL_PARAMS = ("alpha", "xi_tilde", "nu_prime")


@dataclass
class Model:
    """Everything a sweep needs besides the state and the RNG."""

    design: Design
    prior: PriorConfig
    max_clusters: int = 100
    workers: int = 1
    label_moves: bool = True

    @classmethod
    def build(cls, data, prior=None, max_clusters=100, workers=1, label_moves=True):
        design = data if isinstance(data, Design) else Design(data)
        return cls(design, prior or PriorConfig(), max_clusters, workers, label_moves)


# --------------------------------------------------------------------------
# prior draws
# --------------------------------------------------------------------------

def _draw_precision(rng, shape, rate, size=None):
    return np.maximum(rng.gamma(shape, 1.0 / rate, size=size), TINY)


def _draw_dirichlet(rng, conc):
    g = rng.gamma(conc)
    return g / g.sum(axis=-1, keepdims=True)


def draw_cluster_from_prior(model: Model, rng, size):
    pr = model.prior
    K = model.design.K
    beta = sample_pert(rng, pr.pert_min, pr.pert_mode, pr.pert_max, size=size)
    mu = pr.mu_mean_vec(K) + pr.mu_sd_vec(K) * rng.standard_normal((size, K))
    tau = _draw_precision(rng, pr.sigma_shape, pr.sigma_rate, size=(size, K))
    p = [_draw_dirichlet(rng, np.full((size, m), pr.dirichlet_conc)) for m in model.design.modality_counts]
    return beta, mu, tau, p


# --------------------------------------------------------------------------
# initial state
# --------------------------------------------------------------------------

def initial_state(model: Model, rng, temperature=1.0, alpha_init=1.0, init_clusters=10,
                  xi_tilde_init=1.0, nu_prime_init=1.0, max_clusters=None):
    d = model.design
    C = min(init_clusters, model.max_clusters)
    alloc = np.full(d.n, RESERVED, dtype=np.int64)
    alloc[d.exposed_idx] = rng.integers(0, C, size=len(d.exposed_idx))
    V = np.clip(rng.beta(1.0, alpha_init, size=C), TINY, V_MAX)
    beta, mu, tau, p = draw_cluster_from_prior(model, rng, C)
    _, rmu, rtau, rp = draw_cluster_from_prior(model, rng, 1)
    state = ChainState(
        alloc=alloc, V=V, u=np.zeros(d.n), beta=beta, mu=mu, tau=tau, p=p,
        res_mu=rmu[0], res_tau=rtau[0], res_p=[pj[0] for pj in rp],
        alpha=float(alpha_init), xi_tilde=float(xi_tilde_init), nu_prime=float(nu_prime_init),
        epsilon=model.prior.epsilon, temperature=float(temperature),
        scales={"alpha": 0.5, "xi_tilde": 0.5, "nu_prime": 0.2},
        beta_scale=np.full(model.max_clusters, 0.5),
        beta_stats=np.zeros((model.max_clusters, 2)),
    )
    # exposure parameters from their conditionals given the random allocation
    update_exposure_params(state, model, rng)
    return state


# --------------------------------------------------------------------------
# sticks and slices
# --------------------------------------------------------------------------

def stick_conditional_params(counts, alpha):
    """Beta(1 + n_c, alpha + sum_{l>c} n_l) parameters for each stick."""
    counts = np.asarray(counts, dtype=float)
    after = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0.0]))
    return 1.0 + counts, alpha + after


def update_sticks_and_slices(state: ChainState, model: Model, rng):
    d = model.design
    ex = d.exposed_idx
    counts = np.bincount(state.alloc[ex], minlength=state.n_clusters)
    occupied = np.flatnonzero(counts)
    Z = int(occupied[-1]) + 1 if len(occupied) else 0
    # trailing empty sticks are conditionally prior draws: drop and regrow below
    state.resize(Z)
    a, b = stick_conditional_params(counts[:Z], state.alpha)
    state.V = np.clip(rng.beta(a, b), TINY, V_MAX)
    phi = state.phi
    state.u = np.full(d.n, np.nan)
    if len(ex):
        state.u[ex] = phi[state.alloc[ex]] * rng.random(len(ex))
        min_u = float(np.min(state.u[ex]))
    else:
        min_u = 1.0
    extend_sticks(state, model, rng, min_u)
    return state


def extend_sticks(state: ChainState, model: Model, rng, min_u):
    """Append prior sticks (and prior cluster parameters) until the leftover
    tail mass drops below ``min_u``; every cluster a slice can reach is then
    represented."""
    tail = state.tail
    Z = state.n_clusters
    new_V = []
    while tail >= min_u:
        if Z + len(new_V) >= model.max_clusters:
            raise CapExceeded(f"slice sampler needs more than {model.max_clusters} clusters "
                              f"(min u = {min_u:.3g}, alpha = {state.alpha:.3g})")
        v = min(max(rng.beta(1.0, state.alpha), TINY), V_MAX)
        new_V.append(v)
        tail *= 1.0 - v
    if new_V:
        m = len(new_V)
        beta, mu, tau, p = draw_cluster_from_prior(model, rng, m)
        state.V = np.concatenate([state.V, new_V])
        state.beta = np.concatenate([state.beta, beta])
        state.mu = np.vstack([state.mu, mu])
        state.tau = np.vstack([state.tau, tau])
        state.p = [np.vstack([a_, b_]) for a_, b_ in zip(state.p, p)]
    return state


# --------------------------------------------------------------------------
# allocations
# --------------------------------------------------------------------------

def allocation_uniforms(key, sweep, n):
    """Per-individual uniforms from a counter-based stream.

    Individual ``i`` always receives element ``i`` of the stream keyed by
    ``(key, sweep)``, whatever the chunking of the work.
    """
    bg = np.random.Philox(key=np.asarray(key, dtype=np.uint64), counter=[0, int(sweep), 0, 0])
    return np.random.Generator(bg).random(n)


def _draw_rows(logw, U):
    """Inverse-CDF draw of one column per row of unnormalised log weights.

    Rows whose finite entries are all -inf have no information beyond the
    slice constraint; the caller replaces them before calling.
    """
    m = logw.max(axis=1)
    w = np.exp(logw - m[:, None])
    cw = np.cumsum(w, axis=1)
    return np.argmax(cw > (U * cw[:, -1])[:, None], axis=1)


def _allocation_chunk(model, state, idx, U, phi, H0):
    d = model.design
    ll = d.loglik_matrix(idx, state.beta, state.mu, state.tau, state.p, state.nu, state.xi, H0)
    allowed = phi[None, :] > state.u[idx][:, None]
    if not np.all(allowed.any(axis=1)):
        raise EmptySliceSet("an individual has no cluster with phi_c > u_i")
    logw = np.where(allowed, ll / state.temperature, -np.inf)
    bad = ~np.isfinite(logw.max(axis=1))
    if bad.any():
        # zero likelihood everywhere allowed: uniform over the slice set
        logw[bad] = np.where(allowed[bad], 0.0, -np.inf)
    return _draw_rows(logw, U)


def _allocation_scan(model, state, ex, U_all, phi):
    """Reference path: one individual at a time with the scalar likelihood."""
    g = state.globals()
    thetas = [state.cluster(c) for c in range(state.n_clusters)]
    new = np.empty(len(ex), dtype=np.int64)
    for r, i in enumerate(ex):
        ind = individual_at(model.design, i)
        allowed = np.flatnonzero(phi > state.u[i])
        if not len(allowed):
            raise EmptySliceSet(f"individual {ind.id} has no cluster with phi_c > u_i")
        lw = np.array([individual_log_lik(ind, thetas[c], g) / state.temperature for c in allowed])
        if not np.isfinite(lw.max()):
            lw = np.zeros(len(allowed))
        w = np.exp(lw - lw.max())
        cw = np.cumsum(w)
        new[r] = allowed[int(np.argmax(cw > U_all[i] * cw[-1]))]
    return new


def update_allocations(state: ChainState, model: Model, rng, key=(0, 0), workers=None, sequential=False):
    """Draw every exposed ``C_i`` from its slice-restricted conditional.

    The draws are conditionally independent given (phi, theta, u), so they
    are computed for all individuals at once (optionally split over threads).
    ``sequential=True`` runs the reference one-individual-at-a-time scan.
    """
    d = model.design
    ex = d.exposed_idx
    if not len(ex):
        return state
    U_all = allocation_uniforms(key, state.sweep, d.n)
    phi = state.phi
    H0 = d.baseline_cumhaz(state.nu, state.xi)
    if sequential:
        new = _allocation_scan(model, state, ex, U_all, phi)
    else:
        workers = model.workers if workers is None else workers
        if workers > 1 and len(ex) >= 2 * workers:
            chunks = np.array_split(np.arange(len(ex)), workers)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda ch: _allocation_chunk(model, state, ex[ch], U_all[ex[ch]], phi, H0),
                                      chunks))
            new = np.concatenate(parts)
        else:
            new = _allocation_chunk(model, state, ex, U_all[ex], phi, H0)
    state.alloc = state.alloc.copy()
    state.alloc[ex] = new
    return state


# --------------------------------------------------------------------------
# cluster-specific parameters
# --------------------------------------------------------------------------

def _slots(state):
    """Slot index per individual with the reserved cluster mapped to C*."""
    C = state.n_clusters
    return np.where(state.alloc >= 0, state.alloc, C), C + 1


def update_exposure_params(state: ChainState, model: Model, rng):
    d, pr = model.design, model.prior
    T = state.temperature
    slot, S = _slots(state)
    K = d.K
    if K:
        flat = (slot[:, None] * K + np.arange(K)[None, :]).ravel()
        n_ck = np.bincount(flat, weights=d.cmask.ravel(), minlength=S * K).reshape(S, K)
        sz = np.bincount(flat, weights=d.z.ravel(), minlength=S * K).reshape(S, K)
        mu = np.vstack([state.mu, state.res_mu[None, :]])
        tau = np.vstack([state.tau, state.res_tau[None, :]])
        m0, s0 = pr.mu_mean_vec(K), pr.mu_sd_vec(K)
        prec0 = 1.0 / s0 ** 2
        prec = prec0 + n_ck * tau / T
        mean = (prec0 * m0 + tau * sz / T) / prec
        mu = mean + rng.standard_normal((S, K)) / np.sqrt(prec)
        resid = d.cmask * (d.z - mu[slot]) ** 2
        ss = np.bincount(flat, weights=resid.ravel(), minlength=S * K).reshape(S, K)
        tau = _draw_precision(rng, pr.sigma_shape + n_ck / (2.0 * T), pr.sigma_rate + ss / (2.0 * T))
        state.mu, state.res_mu = mu[:-1], mu[-1]
        state.tau, state.res_tau = tau[:-1], tau[-1]
    new_p, new_res = [], []
    for j, M in enumerate(d.modality_counts):
        flat = slot * M + d.kidx[:, j]
        cnt = np.bincount(flat, weights=d.kmask[:, j].astype(float), minlength=S * M).reshape(S, M)
        pj = _draw_dirichlet(rng, pr.dirichlet_conc + cnt / T)
        new_p.append(pj[:-1])
        new_res.append(pj[-1])
    state.p, state.res_p = new_p, new_res
    return state


def survival_stats(state: ChainState, model: Model, H0=None):
    """Per-cluster event counts and summed baseline cumulative hazards."""
    d = model.design
    if H0 is None:
        H0 = d.baseline_cumhaz(state.nu, state.xi)
    ex = d.exposed_idx
    C = state.n_clusters
    a = state.alloc[ex]
    ev = np.bincount(a, weights=d.delta[ex], minlength=C)
    S = np.bincount(a, weights=H0[ex], minlength=C)
    n = np.bincount(a, minlength=C)
    return n, ev, S


def _beta_log_lik(beta, ev, S):
    g = 1.0 + beta
    with np.errstate(divide="ignore", invalid="ignore"):
        logg = np.where(ev > 0, ev * np.log(g), 0.0)
    return logg - g * S


def update_betas(state: ChainState, model: Model, rng):
    """Random-walk MH for each occupied cluster's excess risk; empty clusters
    are refreshed from the PERT prior."""
    pr = model.prior
    T = state.temperature
    n, ev, S = survival_stats(state, model)
    C = state.n_clusters
    occ = n > 0
    beta = state.beta.copy()
    if (~occ).any():
        beta[~occ] = sample_pert(rng, pr.pert_min, pr.pert_mode, pr.pert_max, size=int((~occ).sum()))
    idx = np.flatnonzero(occ)
    if len(idx):
        cur = beta[idx]
        prop = cur + state.beta_scale[idx] * rng.standard_normal(len(idx))
        lp_prop = beta_pert_log_density(prop, pr.pert_min, pr.pert_mode, pr.pert_max)
        lp_cur = beta_pert_log_density(cur, pr.pert_min, pr.pert_mode, pr.pert_max)
        with np.errstate(invalid="ignore"):
            log_r = np.where(np.isfinite(lp_prop),
                             (_beta_log_lik(prop, ev[idx], S[idx]) - _beta_log_lik(cur, ev[idx], S[idx])) / T
                             + lp_prop - lp_cur, -np.inf)
        acc = np.log(rng.random(len(idx))) < log_r
        beta[idx] = np.where(acc, prop, cur)
        state.beta_stats[idx, 0] += 1
        state.beta_stats[idx, 1] += acc
        state.stats.record("beta", int(acc.sum()), n=len(idx))
    state.beta = beta
    return state


def update_cluster_params(state: ChainState, model: Model, rng):
    update_exposure_params(state, model, rng)
    update_betas(state, model, rng)
    return state


# --------------------------------------------------------------------------
# global parameters
# --------------------------------------------------------------------------

def _survival_global_terms(state, model, nu, xi):
    """Tempered survival log-likelihood summed over everybody as a function
    of (nu, xi) at fixed allocations and betas."""
    d = model.design
    g = np.ones(d.n)
    ex = d.exposed_idx
    g[ex] = 1.0 + state.beta[state.alloc[ex]]
    H0 = d.baseline_cumhaz(nu, xi)
    return d.n_events * math.log(xi) + (nu - 1.0) * d.sum_delta_logy - float(np.dot(g, H0))


def _log_rw(state, rng, name, log_target, stats_name=None):
    x = getattr(state, name)
    s = state.scales[name]
    log_xp = math.log(x) + s * rng.standard_normal()
    log_u = math.log(rng.random())
    xp = math.exp(log_xp) if -700.0 < log_xp < 700.0 else 0.0
    if xp == 0.0:
        acc = False
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            log_r = log_target(xp) - log_target(x) + math.log(xp) - math.log(x)
        acc = bool(log_u < log_r)  # nan compares False
    if acc:
        setattr(state, name, xp)
    state.stats.record(stats_name or name, acc)
    return acc


def update_alpha(state: ChainState, model: Model, rng):
    """Log-scale random walk on alpha; target Gamma prior x prod Beta(1, alpha)."""
    pr = model.prior
    C = state.n_clusters
    sum_log1mV = float(np.sum(np.log1p(-state.V)))

    def target(a):
        return float(gamma_log_density(a, pr.alpha_shape, pr.alpha_rate)) + C * math.log(a) + (a - 1.0) * sum_log1mV

    return _log_rw(state, rng, "alpha", target)


def update_xi_tilde(state: ChainState, model: Model, rng):
    pr = model.prior
    T, eps, nu = state.temperature, state.epsilon, state.nu

    def target(xt):
        return (float(gamma_log_density(xt, pr.xi_shape, pr.xi_rate))
                + _survival_global_terms(state, model, nu, eps * xt) / T)

    return _log_rw(state, rng, "xi_tilde", target)


def update_nu_prime(state: ChainState, model: Model, rng):
    pr = model.prior
    T, xi = state.temperature, state.xi

    def target(npr):
        return (float(gamma_log_density(npr, pr.nu_shape, pr.nu_rate))
                + _survival_global_terms(state, model, npr + 1.0, xi) / T)

    return _log_rw(state, rng, "nu_prime", target)


def update_global_params(state: ChainState, model: Model, rng):
    update_alpha(state, model, rng)
    update_xi_tilde(state, model, rng)
    update_nu_prime(state, model, rng)
    return state


# --------------------------------------------------------------------------
# label switching
# --------------------------------------------------------------------------

def move_swap_contents_log_accept(phi_a, phi_b, n_a, n_b):
    """Swap clusters a and b (parameters and members), weights stay put."""
    if n_a == n_b:
        return 0.0
    return min(0.0, (n_b - n_a) * (math.log(phi_a) - math.log(phi_b)))


def move_swap_adjacent_log_accept(V_c, V_c1, n_c, n_c1, log_q=0.0):
    """Swap labels c, c+1 together with their sticks; ``log_q`` is the
    proposal correction."""
    return min(0.0, n_c * math.log1p(-V_c1) - n_c1 * math.log1p(-V_c) + log_q)


def move_resample_sticks_log_accept(alpha, n_c, n_c1, n_after, log_q=0.0):
    """Swap labels c, c+1 and redraw both sticks from their conditional; the
    sticks integrate out of the acceptance ratio."""
    return min(0.0, math.log(alpha + n_c1 + n_after) - math.log(alpha + n_c + n_after) + log_q)


def _occupied_span(counts):
    occ = np.flatnonzero(counts)
    return int(occ[-1]) + 1 if len(occ) else 0


def _ensure_slot(state: ChainState, model: Model, rng, c):
    """Materialise sticks up to slot ``c`` with prior draws (slots past the
    last occupied one are conditionally prior)."""
    while state.n_clusters <= c:
        v = min(max(rng.beta(1.0, state.alpha), TINY), V_MAX)
        beta, mu, tau, p = draw_cluster_from_prior(model, rng, 1)
        state.V = np.concatenate([state.V, [v]])
        state.beta = np.concatenate([state.beta, beta])
        state.mu = np.vstack([state.mu, mu])
        state.tau = np.vstack([state.tau, tau])
        state.p = [np.vstack([a_, b_]) for a_, b_ in zip(state.p, p)]


def _adjacent_pair(state, model, rng, c):
    """Pick c uniformly from 0..Z-1 (Z = last occupied slot + 1) unless given.

    Returns (c, counts, log Z/Z') where Z' is the span after swapping c and
    c+1; the ratio is the Hastings correction for the choice set.
    """
    counts = state.counts()
    Z = _occupied_span(counts)
    if c is None:
        c = int(rng.integers(0, Z))
    _ensure_slot(state, model, rng, c + 1)
    counts = state.counts()
    swapped = counts.copy()
    swapped[[c, c + 1]] = swapped[[c + 1, c]]
    return c, counts, math.log(Z) - math.log(_occupied_span(swapped))


def move_swap_contents(state: ChainState, rng, model: Model = None):
    """Two random occupied clusters exchange parameters and members."""
    counts = state.counts()
    occ = np.flatnonzero(counts)
    if len(occ) < 2:
        return False
    a, b = rng.choice(occ, size=2, replace=False)
    phi = state.phi
    la = move_swap_contents_log_accept(phi[a], phi[b], counts[a], counts[b])
    acc = bool(math.log(rng.random()) < la)
    if acc:
        state.swap_slots(a, b)
    state.stats.record("move1", acc)
    return acc


def move_swap_adjacent(state: ChainState, rng, model: Model, c=None):
    """Labels c and c+1 exchange, sticks travel with them."""
    if not np.any(state.alloc >= 0):
        return False
    c, counts, log_q = _adjacent_pair(state, model, rng, c)
    la = move_swap_adjacent_log_accept(state.V[c], state.V[c + 1], counts[c], counts[c + 1], log_q)
    acc = bool(math.log(rng.random()) < la)
    if acc:
        state.swap_slots(c, c + 1, sticks=True)
    state.stats.record("move2", acc)
    return acc


def move_resample_sticks(state: ChainState, rng, model: Model, c=None):
    """Labels c and c+1 exchange and both sticks are redrawn from their
    conditional given the new allocation."""
    if not np.any(state.alloc >= 0):
        return False
    c, counts, log_q = _adjacent_pair(state, model, rng, c)
    n_after = int(counts[c + 2:].sum())
    la = move_resample_sticks_log_accept(state.alpha, counts[c], counts[c + 1], n_after, log_q)
    acc = bool(math.log(rng.random()) < la)
    if acc:
        state.swap_slots(c, c + 1)
        n_c, n_c1 = counts[c + 1], counts[c]
        state.V[c] = min(max(rng.beta(1.0 + n_c, state.alpha + n_c1 + n_after), TINY), V_MAX)
        state.V[c + 1] = min(max(rng.beta(1.0 + n_c1, state.alpha + n_after), TINY), V_MAX)
    state.stats.record("move3", acc)
    return acc


def label_switching_moves(state: ChainState, rng, model: Model):
    """One attempt of each move.

    Trailing empty sticks are dropped first: their number depends on the
    previous slice variables, so letting them into the choice set would bias
    the moves.  Sticks past the last occupied slot are redrawn from the prior
    when a move needs one.
    """
    state.resize(_occupied_span(state.counts()))
    if state.n_clusters == 0:
        return state
    move_swap_contents(state, rng, model)
    move_swap_adjacent(state, rng, model)
    move_resample_sticks(state, rng, model)
    return state


# --------------------------------------------------------------------------
# adaptation
# --------------------------------------------------------------------------

def adapt_proposals(stats: MoveStats, schedule: AdaptationSchedule, scales: dict, frozen=False):
    """Multiply every scale by exp(observed rate - target) for one block."""
    if frozen:
        return dict(scales)
    out = dict(scales)
    for name, s in scales.items():
        rate = stats.rate(name)
        if rate == rate:  # not nan
            out[name] = s * math.exp(rate - schedule.target_single)
    return out


def adapt_beta_scales(state: ChainState, schedule: AdaptationSchedule):
    prop, acc = state.beta_stats[:, 0], state.beta_stats[:, 1]
    tried = prop > 0
    rate = np.divide(acc, prop, out=np.zeros_like(acc), where=tried)
    state.beta_scale = np.where(tried, state.beta_scale * np.exp(rate - schedule.target_single),
                                state.beta_scale)
    state.beta_stats[:] = 0.0


# --------------------------------------------------------------------------
# chain driver
# --------------------------------------------------------------------------

def sweep(state: ChainState, model: Model, rng, key):
    if model.label_moves:
        label_switching_moves(state, rng, model)
    update_sticks_and_slices(state, model, rng)
    update_allocations(state, model, rng, key=key)
    update_cluster_params(state, model, rng)
    update_global_params(state, model, rng)
    state.sweep += 1
    return state


def record_state(sample: PosteriorSample, it, state: ChainState, loglik):
    C = state.n_clusters
    part = state.alloc.copy()
    reserved = None
    beta, mu, sigma = state.beta, state.mu, state.sigma
    p = state.p
    if np.any(part == RESERVED):
        reserved = C
        part[part == RESERVED] = C
        beta = np.concatenate([beta, [0.0]])
        mu = np.vstack([mu, state.res_mu[None, :]])
        sigma = np.vstack([sigma, 1.0 / np.sqrt(state.res_tau)[None, :]])
        p = [np.vstack([pj, rp[None, :]]) for pj, rp in zip(p, state.res_p)]
    sample.append(it, part, state.alpha, state.xi, state.nu, loglik, beta, mu, sigma, p, reserved)


class Chain:
    """A chain at a fixed temperature with its own RNG streams."""

    def __init__(self, model: Model, schedule: Schedule, temperature, seed_seq: np.random.SeedSequence,
                 alpha_init=1.0, init_clusters=10, record=None):
        self.model = model
        self.schedule = schedule
        self.temperature = float(temperature)
        main, alloc_ss = seed_seq.spawn(2)
        self.rng = np.random.Generator(np.random.PCG64(main))
        self.key = alloc_ss.generate_state(2, np.uint64)
        self.state = initial_state(model, self.rng, temperature, alpha_init, init_clusters)
        self.record = (self.temperature == 1.0) if record is None else record
        self.sample = PosteriorSample(meta={"n": model.design.n, "temperature": self.temperature})
        self.loglik = float(np.sum(model.design.per_individual(self.state)))
        self.t = 0
        self.sweep_seconds = []
        self.trace_alpha = []
        self.trace_loglik = []
        self.trace_k = []

    def refresh_loglik(self):
        self.loglik = float(np.sum(self.model.design.per_individual(self.state)))

    def advance(self, n_iter):
        sch = self.schedule
        n_adapt = sch.adaptation.n_iter
        start = n_adapt + sch.burnin
        for _ in range(n_iter):
            t = self.t
            t0 = time.perf_counter()
            sweep(self.state, self.model, self.rng, self.key)
            self.refresh_loglik()
            if t < n_adapt and (t + 1) % sch.adaptation.block_len == 0:
                st = self.state
                st.scales = adapt_proposals(st.stats, sch.adaptation, st.scales)
                adapt_beta_scales(st, sch.adaptation)
                st.stats.reset()
            self.sweep_seconds.append(time.perf_counter() - t0)
            self.trace_alpha.append(self.state.alpha)
            self.trace_loglik.append(self.loglik)
            self.trace_k.append(self.state.n_nonempty())
            if self.record and t >= start and (t - start) % sch.thin == 0:
                record_state(self.sample, t, self.state, self.loglik)
            self.t += 1
        return self


def chain_seed(seed, index):
    return np.random.SeedSequence([int(seed), int(index)])


def run_chain(data, config: RunConfig, seed=None, temperature=1.0, chain_index=0):
    """Adaptive phase, burn-in and sampling for one chain without exchanges."""
    model = data if isinstance(data, Model) else Model.build(
        validate(data), config.prior, config.max_clusters, config.workers)
    seed = config.seed if seed is None else seed
    chain = Chain(model, config.schedule, temperature, chain_seed(seed, chain_index),
                  config.alpha_init, config.init_clusters, record=True)
    chain.advance(config.schedule.total)
    finalize_meta(chain, config, seed)
    return chain.sample


def validate(data):
    from .model import validate_dataset

    return validate_dataset(data) if isinstance(data, Dataset) else data


def finalize_meta(chain: Chain, config: RunConfig, seed):
    st = chain.state
    chain.sample.meta.update({
        "n": chain.model.design.n,
        "seed": int(seed),
        "temperature": chain.temperature,
        "iterations_total": chain.t,
        "final_scales": dict(st.scales),
        "move_stats": st.stats.to_dict(),
    })
