"""Log-density computations.

The scalar functions (``survival_log_lik``, ``exposure_log_lik``,
``individual_log_lik``) are the reference definitions.  The sampler uses the
vectorised :class:`Design` methods, which compute the same quantities for all
individuals and clusters at once and are checked against the scalar versions
in the test-suite.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .model import (
    LOG_2PI,
    ClusterParams,
    Dataset,
    GlobalParams,
    Individual,
    PriorConfig,
    beta_log_density,
    beta_pert_log_density,
    dirichlet_log_density,
    gamma_log_density,
    normal_log_density,
)
from .state import RESERVED, ChainState


def cumulative_baseline(y, entry, nu, xi):
    """``H0(y) - H0(entry)`` with ``H0(t) = xi t^nu / nu``."""
    y = np.asarray(y, dtype=float)
    entry = np.asarray(entry, dtype=float)
    c = math.log(xi) - math.log(nu)
    with np.errstate(divide="ignore"):
        hy = np.exp(c + nu * np.log(y))
        he = np.where(entry > 0, np.exp(c + nu * np.log(np.where(entry > 0, entry, 1.0))), 0.0)
    return hy - he


def survival_log_lik(y, delta, entry, beta, nu, xi):
    """Right-censored, left-truncated log-likelihood of the excess-hazard model
    ``h(t) = xi t^(nu-1) (1 + beta)``."""
    if not (y > entry >= 0 and beta >= -1 and nu > 1 and xi > 0 and delta in (0, 1)):
        raise DomainError(f"survival_log_lik outside domain: y={y}, entry={entry}, delta={delta}, "
                          f"beta={beta}, nu={nu}, xi={xi}")
    g = 1.0 + beta
    ll = -g * float(cumulative_baseline(y, entry, nu, xi))
    if delta:
        if g == 0.0:
            return -math.inf
        ll += math.log(xi) + (nu - 1.0) * math.log(y) + math.log(g)
    return ll


def exposure_log_lik(ind: Individual, theta: ClusterParams) -> float:
    ll = 0.0
    for k, x in enumerate(ind.x_cont):
        if x is None:
            continue
        if not x > 0:
            raise DomainError(f"continuous exposure must be > 0, got {x} (record {ind.id})")
        z = math.log(x)
        s = theta.sigma[k]
        ll += -z - math.log(s) - 0.5 * LOG_2PI - 0.5 * ((z - theta.mu[k]) / s) ** 2
    for j, m in enumerate(ind.x_cat):
        if m is None:
            continue
        with np.errstate(divide="ignore"):
            ll += float(np.log(theta.p[j][m]))
    return ll


def individual_log_lik(ind: Individual, theta: ClusterParams, globals_: GlobalParams) -> float:
    return (survival_log_lik(ind.y, ind.delta, ind.entry, theta.beta, globals_.nu, globals_.xi)
            + exposure_log_lik(ind, theta))


def mixture_log_density(ind: Individual, thetas, weights, globals_: GlobalParams) -> float:
    """log sum_c phi_c [D_i | theta_c] evaluated by log-sum-exp."""
    terms = np.array([math.log(w) + individual_log_lik(ind, th, globals_)
                      for th, w in zip(thetas, weights) if w > 0])
    m = terms.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(terms - m).sum()))


class Design:
    """Precomputed per-individual arrays used by the vectorised likelihood."""

    def __init__(self, data: Dataset):
        self.data = data
        self.n = data.n
        self.K = data.K
        self.J = data.J
        self.modality_counts = data.modality_counts
        self.y = np.asarray(data.y, dtype=float)
        self.entry = np.asarray(data.entry, dtype=float)
        self.delta = np.asarray(data.delta, dtype=float)
        self.event = self.delta > 0
        self.logy = np.log(self.y)
        self.has_entry = self.entry > 0
        self.logentry = np.log(np.where(self.has_entry, self.entry, 1.0))
        self.exposed = np.asarray(data.exposed, dtype=bool)
        self.exposed_idx = np.flatnonzero(self.exposed)
        self.reserved_idx = np.flatnonzero(~self.exposed)
        cm = data.cont_mask
        self.cmask = cm.astype(float)
        self.z = np.where(cm, np.log(np.where(cm, data.x_cont, 1.0)), 0.0)
        self.z2 = self.z ** 2
        # part of the lognormal density not depending on parameters
        self.cont_const = -(self.z.sum(axis=1)) - 0.5 * LOG_2PI * self.cmask.sum(axis=1)
        km = data.cat_mask
        self.kmask = km
        self.kidx = np.where(km, data.x_cat, 0)
        self.n_events = float(self.delta.sum())
        self.sum_delta_logy = float((self.delta * self.logy).sum())

    # ---- survival ------------------------------------------------------
    def baseline_cumhaz(self, nu, xi):
        c = math.log(xi) - math.log(nu)
        h = np.exp(c + nu * self.logy)
        if self.has_entry.any():
            h = h - np.where(self.has_entry, np.exp(c + nu * self.logentry), 0.0)
        return h

    def survival_matrix(self, idx, beta, nu, xi, H0=None):
        """(len(idx), C) survival log-likelihoods for the given clusters."""
        if H0 is None:
            H0 = self.baseline_cumhaz(nu, xi)
        g = 1.0 + np.asarray(beta, dtype=float)
        with np.errstate(divide="ignore"):
            logg = np.log(g)
        d = self.delta[idx]
        ev = d[:, None] * (math.log(xi) + (nu - 1.0) * self.logy[idx])[:, None]
        ev_g = np.where(self.event[idx][:, None], logg[None, :], 0.0)
        return ev + ev_g - H0[idx][:, None] * g[None, :]

    # ---- exposure ------------------------------------------------------
    def exposure_matrix(self, idx, mu, tau, p):
        """(len(idx), C) exposure log-likelihoods."""
        mu = np.atleast_2d(mu)
        tau = np.atleast_2d(tau)
        out = np.repeat(self.cont_const[idx][:, None], mu.shape[0], axis=1)
        if self.K:
            cm, z, z2 = self.cmask[idx], self.z[idx], self.z2[idx]
            out += 0.5 * cm @ np.log(tau).T
            out -= 0.5 * z2 @ tau.T
            out += z @ (tau * mu).T
            out -= 0.5 * cm @ (tau * mu * mu).T
        for j in range(self.J):
            with np.errstate(divide="ignore"):
                lp = np.log(np.atleast_2d(p[j]))
            km = self.kmask[idx, j]
            out += np.where(km[:, None], lp[:, self.kidx[idx, j]].T, 0.0)
        return out

    def loglik_matrix(self, idx, beta, mu, tau, p, nu, xi, H0=None):
        return self.survival_matrix(idx, beta, nu, xi, H0) + self.exposure_matrix(idx, mu, tau, p)

    def per_individual(self, state: ChainState, H0=None):
        """Untempered log-likelihood of every individual at its allocation."""
        nu, xi = state.nu, state.xi
        if H0 is None:
            H0 = self.baseline_cumhaz(nu, xi)
        out = np.empty(self.n)
        ex = self.exposed_idx
        if len(ex):
            c = state.alloc[ex]
            g = 1.0 + state.beta[c]
            with np.errstate(divide="ignore"):
                logg = np.log(g)
            surv = (self.delta[ex] * (math.log(xi) + (nu - 1.0) * self.logy[ex])
                    + np.where(self.event[ex], logg, 0.0) - H0[ex] * g)
            out[ex] = surv + self._exposure_at(ex, state.mu[c], state.tau[c], [pj[c] for pj in state.p])
        rs = self.reserved_idx
        if len(rs):
            surv = self.delta[rs] * (math.log(xi) + (nu - 1.0) * self.logy[rs]) - H0[rs]
            m = len(rs)
            out[rs] = surv + self._exposure_at(
                rs, np.broadcast_to(state.res_mu, (m, self.K)), np.broadcast_to(state.res_tau, (m, self.K)),
                [np.broadcast_to(pj, (m, len(pj))) for pj in state.res_p])
        return out

    def _exposure_at(self, idx, mu, tau, p):
        """Row-wise exposure log-likelihood with per-row parameters."""
        out = self.cont_const[idx].copy()
        if self.K:
            cm = self.cmask[idx]
            out += (cm * (0.5 * np.log(tau) - 0.5 * tau * (self.z[idx] - mu) ** 2)).sum(axis=1)
        rows = np.arange(len(idx))
        for j in range(self.J):
            with np.errstate(divide="ignore"):
                lp = np.log(p[j][rows, self.kidx[idx, j]])
            out += np.where(self.kmask[idx, j], lp, 0.0)
        return out


def total_log_lik(design: Design, state: ChainState):
    return float(np.sum(design.per_individual(state)))


def log_prior(state: ChainState, prior: PriorConfig, K=None):
    """Log prior of (C, V, theta, alpha, xi_tilde, nu_prime) over the
    represented clusters, including the allocation term sum_i log phi_{C_i}."""
    K = state.mu.shape[1] if K is None else K
    lp = float(gamma_log_density(state.alpha, prior.alpha_shape, prior.alpha_rate))
    lp += float(gamma_log_density(state.xi_tilde, prior.xi_shape, prior.xi_rate))
    lp += float(gamma_log_density(state.nu_prime, prior.nu_shape, prior.nu_rate))
    lp += float(np.sum(beta_log_density(state.V, 1.0, state.alpha)))
    phi = state.phi
    a = state.alloc[state.alloc >= 0]
    with np.errstate(divide="ignore"):
        lp += float(np.sum(np.log(phi[a])))
    lp += float(np.sum(beta_pert_log_density(state.beta, prior.pert_min, prior.pert_mode, prior.pert_max)))
    m0, s0 = prior.mu_mean_vec(K), prior.mu_sd_vec(K)
    lp += float(np.sum(normal_log_density(state.mu, m0, s0)))
    lp += float(np.sum(gamma_log_density(state.tau, prior.sigma_shape, prior.sigma_rate)))
    for pj in state.p:
        lp += float(np.sum(dirichlet_log_density(pj, prior.dirichlet_conc)))
    if np.any(state.alloc == RESERVED):
        lp += float(np.sum(normal_log_density(state.res_mu, m0, s0)))
        lp += float(np.sum(gamma_log_density(state.res_tau, prior.sigma_shape, prior.sigma_rate)))
        for pj in state.res_p:
            lp += float(dirichlet_log_density(pj, prior.dirichlet_conc))
    return lp


def tempered_log_target(state: ChainState, data, prior: PriorConfig, temperature=None):
    """(1/T) * data log-likelihood + untempered log prior."""
    design = data if isinstance(data, Design) else Design(data)
    T = state.temperature if temperature is None else temperature
    return total_log_lik(design, state) / T + log_prior(state, prior, design.K)


def log_posterior(state: ChainState, data, prior: PriorConfig):
    design = data if isinstance(data, Design) else Design(data)
    return total_log_lik(design, state) + log_prior(state, prior, design.K)


class LogLikCache:
    """Per-individual log-likelihoods at the current parameters."""

    def __init__(self, design: Design, state: ChainState):
        self.design = design
        self.values = design.per_individual(state)

    @property
    def total(self):
        # numpy's pairwise summation: deterministic for a fixed n
        return float(np.sum(self.values))

    def refresh(self, state: ChainState):
        self.values = self.design.per_individual(state)
        return self

    def update(self, idx, state: ChainState):
        """Recompute the entries of ``idx`` only (scalar path)."""
        g = state.globals()
        for i in np.atleast_1d(idx):
            theta = state.cluster(int(state.alloc[i]))
            self.values[i] = individual_log_lik(individual_at(self.design, i), theta, g)
        return self


def individual_at(design: Design, i) -> Individual:
    d = design.data
    xc = tuple(None if np.isnan(v) else float(v) for v in d.x_cont[i])
    xk = tuple(None if v < 0 else int(v) for v in d.x_cat[i])
    return Individual(str(d.ids[i]), float(d.y[i]), int(d.delta[i]), float(d.entry[i]), xc, xk,
                      bool(d.exposed[i]))
