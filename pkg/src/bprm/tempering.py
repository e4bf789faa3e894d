"""Parallel tempering over a ladder of temperatures.

Chain ``l`` targets the posterior with the data likelihood raised to
``1/T_l``.  Every ``n_pt`` iterations one adjacent pair is chosen uniformly
and the two chains exchange their model fields with probability
``min(1, exp((1/T_l - 1/T_{l+1}) (ll_{l+1} - ll_l)))``, where ``ll`` is the
untempered data log-likelihood.  Only the temperature-1 chain is recorded.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import RunConfig
from .errors import DomainError
from .sampler import Chain, Model, chain_seed, finalize_meta, validate

CONTROLLER_INDEX = 10_000


def swap_log_probability(ll_l, ll_l1, T_l, T_l1):
    """Log acceptance probability of exchanging the states at T_l < T_l1,
    given their untempered log-likelihoods ``ll_l`` and ``ll_l1``."""
    if not T_l < T_l1:
        raise DomainError(f"need T_l < T_l1, got {T_l} and {T_l1}")
    x = (1.0 / T_l - 1.0 / T_l1) * (ll_l1 - ll_l)
    return min(0.0, x)


def attempt_swap(chains, rng, diagnostics):
    """Pick a pair uniformly, then accept or reject the exchange."""
    L = len(chains)
    if L < 2:
        return None
    l = int(rng.integers(0, L - 1))
    a, b = chains[l], chains[l + 1]
    lp = swap_log_probability(a.loglik, b.loglik, a.temperature, b.temperature)
    acc = bool(math.log(rng.random()) < lp)
    d = diagnostics[l]
    d["attempts"] += 1
    if acc:
        d["accepts"] += 1
        a.state.exchange(b.state)
        a.loglik, b.loglik = b.loglik, a.loglik
    return l, acc


def _advance(chain, n):
    chain.advance(n)
    return chain


def run_parallel_tempering(data, config: RunConfig, seed=None, workers=None, return_chain=False):
    """Run the full ladder; returns (posterior sample at T=1, swap diagnostics)
    and, with ``return_chain``, the cold chain itself (traces, timings)."""
    seed = config.seed if seed is None else seed
    ladder = config.effective_ladder
    model = data if isinstance(data, Model) else Model.build(
        validate(data), config.prior, config.max_clusters, 1)
    workers = config.workers if workers is None else workers
    chains = [Chain(model, config.schedule, T, chain_seed(seed, l), config.alpha_init,
                    config.init_clusters, record=(l == 0))
              for l, T in enumerate(ladder.temperatures)]
    controller = np.random.Generator(np.random.PCG64(chain_seed(seed, CONTROLLER_INDEX)))
    diagnostics = [{"pair": [l, l + 1], "temperatures": [ladder.temperatures[l], ladder.temperatures[l + 1]],
                    "attempts": 0, "accepts": 0} for l in range(ladder.L - 1)]
    total = config.schedule.total
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 and len(chains) > 1 else None
    try:
        done = 0
        while done < total:
            n = min(ladder.n_pt, total - done)
            if pool is None:
                for c in chains:
                    c.advance(n)
            else:
                chains = list(pool.map(_advance, chains, [n] * len(chains)))
            done += n
            if n == ladder.n_pt:
                attempt_swap(chains, controller, diagnostics)
    finally:
        if pool is not None:
            pool.shutdown()
    for d in diagnostics:
        d["rate"] = d["accepts"] / d["attempts"] if d["attempts"] else float("nan")
    cold = chains[0]
    finalize_meta(cold, config, seed)
    cold.sample.meta["swaps"] = diagnostics
    cold.sample.meta["ladder"] = list(ladder.temperatures)
    cold.sample.meta["n_pt"] = ladder.n_pt
    cold.sample.meta["sweep_seconds_mean"] = float(np.mean(cold.sweep_seconds)) if cold.sweep_seconds else 0.0
    if return_chain:
        return cold.sample, diagnostics, cold
    return cold.sample, diagnostics
