"""Posterior sample container and its JSON-lines persistence.

Each stored iteration holds a partition as a 0-based label array.  Labels
``0..C*-1`` are the represented clusters of the chain; when the dataset has
non-exposed individuals, the reserved zero-risk cluster is appended as label
``C*`` and its index is kept in ``reserved``.  ``clusters[t]`` is indexed by
these labels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class PosteriorSample:
    iters: list = field(default_factory=list)
    partitions: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    nu: list = field(default_factory=list)
    loglik: list = field(default_factory=list)
    beta: list = field(default_factory=list)       # per record: (C,) array
    mu: list = field(default_factory=list)         # per record: (C, K)
    sigma: list = field(default_factory=list)      # per record: (C, K)
    p: list = field(default_factory=list)          # per record: list of (C, M_j)
    reserved: list = field(default_factory=list)   # per record: int or None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.iters)

    def append(self, it, partition, alpha, xi, nu, loglik, beta, mu, sigma, p, reserved):
        self.iters.append(int(it))
        self.partitions.append(np.asarray(partition, dtype=np.int32))
        self.alpha.append(float(alpha))
        self.xi.append(float(xi))
        self.nu.append(float(nu))
        self.loglik.append(float(loglik))
        self.beta.append(np.asarray(beta, dtype=float))
        self.mu.append(np.asarray(mu, dtype=float))
        self.sigma.append(np.asarray(sigma, dtype=float))
        self.p.append([np.asarray(pj, dtype=float) for pj in p])
        self.reserved.append(None if reserved is None else int(reserved))

    @property
    def partition_matrix(self):
        if not self.partitions:
            return np.zeros((0, self.meta.get("n", 0)), dtype=np.int32)
        return np.vstack(self.partitions)

    def individual_beta(self):
        """(n_iter, n) excess risk of each individual's cluster per iteration."""
        return np.vstack([b[P] for b, P in zip(self.beta, self.partitions)]) if self.partitions \
            else np.zeros((0, self.meta.get("n", 0)))

    def nonempty_counts(self):
        return np.array([len(np.unique(P)) for P in self.partitions], dtype=int)

    # ---- serialisation ------------------------------------------------
    def records(self):
        for t in range(len(self)):
            C = len(self.beta[t])
            clusters = [{
                "beta": float(self.beta[t][c]),
                "mu": self.mu[t][c].tolist(),
                "sigma": self.sigma[t][c].tolist(),
                "p": [pj[c].tolist() for pj in self.p[t]],
            } for c in range(C)]
            yield {
                "iter": self.iters[t],
                "partition": self.partitions[t].tolist(),
                "alpha": self.alpha[t],
                "xi": self.xi[t],
                "nu": self.nu[t],
                "clusters": clusters,
                "reserved": self.reserved[t],
                "loglik": self.loglik[t],
            }

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec, separators=(",", ":")))
                fh.write("\n")

    @classmethod
    def from_records(cls, records, meta=None):
        s = cls(meta=dict(meta or {}))
        for rec in records:
            cl = rec["clusters"]
            J = len(cl[0]["p"]) if cl else 0
            s.append(
                rec["iter"], rec["partition"], rec["alpha"], rec["xi"], rec["nu"], rec["loglik"],
                [c["beta"] for c in cl],
                np.array([c["mu"] for c in cl], dtype=float).reshape(len(cl), -1),
                np.array([c["sigma"] for c in cl], dtype=float).reshape(len(cl), -1),
                [np.array([c["p"][j] for c in cl], dtype=float) for j in range(J)],
                rec.get("reserved"),
            )
        if s.partitions:
            s.meta.setdefault("n", len(s.partitions[0]))
        return s

    @classmethod
    def read_jsonl(cls, path, meta=None):
        with open(path, encoding="utf-8") as fh:
            return cls.from_records((json.loads(line) for line in fh if line.strip()), meta)

    def equals(self, other):
        if len(self) != len(other):
            return False
        return all(a == b for a, b in zip(self.records(), other.records()))
