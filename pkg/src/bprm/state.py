"""Mutable state of one tempered chain.

Cluster-specific parameters are held as arrays indexed by cluster slot
``0..C*-1``.  Non-exposed individuals carry the allocation ``-1`` and belong
to the reserved cluster whose excess risk is fixed at zero; the reserved
cluster has its own exposure parameters (``res_*``) so that any covariate the
non-exposed individuals do carry still has a likelihood.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .model import ClusterParams, GlobalParams, stick_weights

RESERVED = -1

# fields exchanged by a tempering swap; temperature, proposal scales, move
# counters and the RNG bookkeeping stay with the chain
MODEL_FIELDS = ("alloc", "V", "u", "beta", "mu", "tau", "p", "res_mu", "res_tau", "res_p",
                "alpha", "xi_tilde", "nu_prime")


@dataclass
class MoveStats:
    proposals: dict = field(default_factory=dict)
    accepts: dict = field(default_factory=dict)

    def record(self, name, accepted, n=1):
        self.proposals[name] = self.proposals.get(name, 0) + n
        self.accepts[name] = self.accepts.get(name, 0) + int(accepted)

    def rate(self, name):
        p = self.proposals.get(name, 0)
        return self.accepts.get(name, 0) / p if p else float("nan")

    def reset(self):
        self.proposals.clear()
        self.accepts.clear()

    def to_dict(self):
        return {"proposals": dict(self.proposals), "accepts": dict(self.accepts)}


@dataclass
class ChainState:
    alloc: np.ndarray
    V: np.ndarray
    u: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    p: list
    res_mu: np.ndarray
    res_tau: np.ndarray
    res_p: list
    alpha: float
    xi_tilde: float
    nu_prime: float
    epsilon: float = 1e-24
    temperature: float = 1.0
    scales: dict = field(default_factory=dict)
    beta_scale: np.ndarray = None
    beta_stats: np.ndarray = None      # (max_clusters, 2): proposals, accepts
    stats: MoveStats = field(default_factory=MoveStats)
    sweep: int = 0

    # ---- derived quantities -------------------------------------------
    @property
    def n_clusters(self):
        return len(self.V)

    @property
    def phi(self):
        return stick_weights(self.V)[0]

    @property
    def tail(self):
        return stick_weights(self.V)[1]

    @property
    def xi(self):
        return self.epsilon * self.xi_tilde

    @property
    def nu(self):
        return self.nu_prime + 1.0

    @property
    def sigma(self):
        return 1.0 / np.sqrt(self.tau)

    def counts(self):
        a = self.alloc[self.alloc >= 0]
        return np.bincount(a, minlength=self.n_clusters)

    def n_nonempty(self):
        """Non-empty clusters, the reserved cluster included when occupied."""
        k = int(np.count_nonzero(self.counts()))
        return k + int(np.any(self.alloc == RESERVED))

    def cluster(self, c) -> ClusterParams:
        if c == RESERVED:
            return ClusterParams(0.0, tuple(self.res_mu), tuple(1.0 / np.sqrt(self.res_tau)),
                                 tuple(tuple(pj) for pj in self.res_p))
        return ClusterParams(float(self.beta[c]), tuple(self.mu[c]), tuple(1.0 / np.sqrt(self.tau[c])),
                             tuple(tuple(pj[c]) for pj in self.p))

    def globals(self) -> GlobalParams:
        return GlobalParams(self.alpha, self.xi_tilde, self.nu_prime, self.epsilon)

    def copy(self):
        return copy.deepcopy(self)

    def exchange(self, other: "ChainState"):
        for name in MODEL_FIELDS:
            a, b = getattr(self, name), getattr(other, name)
            setattr(self, name, b)
            setattr(other, name, a)

    # ---- slot bookkeeping ---------------------------------------------
    def resize(self, C):
        """Truncate (or pad with placeholders) the per-cluster arrays to ``C``."""
        cur = self.n_clusters
        if C <= cur:
            self.V = self.V[:C].copy()
            self.beta = self.beta[:C].copy()
            self.mu = self.mu[:C].copy()
            self.tau = self.tau[:C].copy()
            self.p = [pj[:C].copy() for pj in self.p]
            return
        extra = C - cur
        K = self.mu.shape[1]
        self.V = np.concatenate([self.V, np.full(extra, 0.5)])
        self.beta = np.concatenate([self.beta, np.zeros(extra)])
        self.mu = np.vstack([self.mu, np.zeros((extra, K))])
        self.tau = np.vstack([self.tau, np.ones((extra, K))])
        self.p = [np.vstack([pj, np.full((extra, pj.shape[1]), 1.0 / pj.shape[1])]) for pj in self.p]

    def swap_slots(self, a, b, sticks=False):
        """Swap parameters and members of slots ``a`` and ``b``."""
        for arr in (self.beta, self.mu, self.tau, *self.p):
            arr[[a, b]] = arr[[b, a]]
        if sticks:
            self.V[[a, b]] = self.V[[b, a]]
        ia, ib = self.alloc == a, self.alloc == b
        self.alloc[ia] = b
        self.alloc[ib] = a

    # ---- serialisation ------------------------------------------------
    def to_dict(self):
        return {
            "alloc": self.alloc.tolist(), "V": self.V.tolist(), "u": self.u.tolist(),
            "beta": self.beta.tolist(), "mu": self.mu.tolist(), "tau": self.tau.tolist(),
            "p": [pj.tolist() for pj in self.p],
            "res_mu": self.res_mu.tolist(), "res_tau": self.res_tau.tolist(),
            "res_p": [pj.tolist() for pj in self.res_p],
            "alpha": self.alpha, "xi_tilde": self.xi_tilde, "nu_prime": self.nu_prime,
            "epsilon": self.epsilon, "temperature": self.temperature,
            "scales": dict(self.scales),
            "beta_scale": None if self.beta_scale is None else self.beta_scale.tolist(),
            "sweep": self.sweep,
        }

    @classmethod
    def from_dict(cls, d):
        K = len(d["res_mu"])
        C = len(d["V"])
        return cls(
            alloc=np.asarray(d["alloc"], dtype=np.int64),
            V=np.asarray(d["V"], dtype=float),
            u=np.asarray(d["u"], dtype=float),
            beta=np.asarray(d["beta"], dtype=float),
            mu=np.asarray(d["mu"], dtype=float).reshape(C, K),
            tau=np.asarray(d["tau"], dtype=float).reshape(C, K),
            p=[np.asarray(pj, dtype=float).reshape(C, -1) for pj in d["p"]],
            res_mu=np.asarray(d["res_mu"], dtype=float),
            res_tau=np.asarray(d["res_tau"], dtype=float),
            res_p=[np.asarray(pj, dtype=float) for pj in d["res_p"]],
            alpha=float(d["alpha"]), xi_tilde=float(d["xi_tilde"]), nu_prime=float(d["nu_prime"]),
            epsilon=float(d["epsilon"]), temperature=float(d["temperature"]),
            scales=dict(d.get("scales", {})),
            beta_scale=None if d.get("beta_scale") is None else np.asarray(d["beta_scale"], dtype=float),
            sweep=int(d.get("sweep", 0)),
        )
