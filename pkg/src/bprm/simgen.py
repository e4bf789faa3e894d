"""Simulation scenarios S1-S4 and the evaluation metrics used on them.

Each scenario has four clusters A-D.  Clusters A-C are exposed with four
lognormal covariates; cluster D is non-exposed, carries only the fourth
covariate and has no excess risk.  Event times follow the Weibull-type
hazard ``xi t^(nu-1) (1 + beta)``; censoring times are uniform.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .model import Dataset, validate_dataset

CLUSTER_NAMES = ("A", "B", "C", "D")


@dataclass(frozen=True)
class ClusterSpec:
    beta: float
    mu: tuple            # length 4, None where the variable is absent
    sigma: tuple
    exposed: bool = True


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    clusters: tuple      # of ClusterSpec, ordered A, B, C, D
    xi: float = 5e-25
    nu: float = 5.0
    n_per_cluster: int = 500
    censor_low: float = 40.0
    censor_high: float = 90.0

    @property
    def n(self):
        return self.n_per_cluster * len(self.clusters)

    def with_n(self, n_total):
        """Same scenario with ``n_total`` individuals split equally."""
        k = len(self.clusters)
        if n_total % k:
            raise DomainError(f"n={n_total} is not divisible by the {k} clusters")
        return replace(self, n_per_cluster=n_total // k)


_MU_A = (1.41, 0.74, 6.9, 3.31)
_MU_B = (3.09, 1.89, 7.54, 3.27)
_MU_C = (4.18, 2.92, 8.17, 3.33)
_MU_D = (None, None, None, 3.30)


def _scenario(name, betas, mus, sigmas):
    exposed = (True, True, True, False)
    return ScenarioSpec(name, tuple(ClusterSpec(b, m, s, e) for b, m, s, e in zip(betas, mus, sigmas, exposed)))


SCENARIOS = {
    "S1": _scenario("S1", (0.0, 2.5, 5.0, 0.0), (_MU_A, _MU_B, _MU_C, _MU_D),
                    ((0.81, 0.57, 0.46, 0.22), (0.37, 0.40, 0.36, 0.19), (0.33, 0.38, 0.33, 0.19),
                     (None, None, None, 0.19))),
    "S2": _scenario("S2", (0.0, 2.5, 5.0, 0.0), (_MU_A, _MU_B, _MU_C, _MU_D),
                    ((0.24, 0.17, 0.14, 0.07), (0.11, 0.12, 0.11, 0.06), (0.10, 0.11, 0.10, 0.06),
                     (None, None, None, 0.06))),
    "S3": _scenario("S3", (0.0, 1.5, 3.0, 0.0), (_MU_A, _MU_B, _MU_C, _MU_D),
                    ((1.38, 0.97, 0.78, 0.37), (0.63, 0.68, 0.61, 0.32), (0.56, 0.65, 0.56, 0.32),
                     (None, None, None, 0.32))),
    "S4": _scenario("S4", (0.0, 3.0, 3.0, 0.0), (_MU_A, (4.18, 2.92, 8.17, 3.22), _MU_C, _MU_D),
                    ((1.38, 0.97, 0.78, 0.37), (0.63, 0.68, 0.61, 0.32), (0.56, 0.65, 0.56, 0.32),
                     (None, None, None, 0.32))),
}


def get_scenario(name, n=None):
    try:
        spec = SCENARIOS[name]
    except KeyError:
        raise DomainError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return spec if n is None else spec.with_n(n)


def event_time_from_exponential(E, beta, nu, xi):
    """Invert ``H(t) = (1 + beta) xi t^nu / nu`` at ``E``."""
    return (nu * np.asarray(E, dtype=float) / (xi * (1.0 + beta))) ** (1.0 / nu)


def sample_event_time(beta, nu, xi, rng, size=None):
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= -1) or not nu > 1 or not xi > 0:
        raise DomainError(f"need beta > -1, nu > 1, xi > 0 (got beta={beta}, nu={nu}, xi={xi})")
    E = rng.standard_exponential(size=size if size is not None else beta.shape)
    return event_time_from_exponential(E, beta, nu, xi)


def survivor_function(t, beta, nu, xi):
    return np.exp(-(1.0 + beta) * xi * np.asarray(t, dtype=float) ** nu / nu)


@dataclass
class GroundTruth:
    ids: np.ndarray
    cluster: np.ndarray          # 0..3 for A..D
    beta: np.ndarray
    names: tuple = field(default=CLUSTER_NAMES)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "true_cluster", "true_beta"])
            for i, c, b in zip(self.ids, self.cluster, self.beta):
                w.writerow([i, int(c), repr(float(b))])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        return cls(np.array([r["id"] for r in rows]), np.array([int(r["true_cluster"]) for r in rows]),
                   np.array([float(r["true_beta"]) for r in rows]))


def generate_scenario_dataset(spec: ScenarioSpec, seed):
    """Simulate one dataset; returns ``(Dataset, GroundTruth)``."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0x5EED])))
    m = spec.n_per_cluster
    k = len(spec.clusters)
    n = m * k
    K = len(spec.clusters[0].mu)
    x = np.full((n, K), np.nan)
    label = np.repeat(np.arange(k), m)
    beta = np.repeat([c.beta for c in spec.clusters], m)
    exposed = np.repeat([c.exposed for c in spec.clusters], m)
    for ci, c in enumerate(spec.clusters):
        rows = slice(ci * m, (ci + 1) * m)
        for kk in range(K):
            if c.mu[kk] is not None:
                x[rows, kk] = np.exp(c.mu[kk] + c.sigma[kk] * rng.standard_normal(m))
    T = sample_event_time(beta, spec.nu, spec.xi, rng)
    W = rng.uniform(spec.censor_low, spec.censor_high, size=n)
    delta = (T <= W).astype(np.int64)
    y = np.minimum(T, W)
    ids = np.array([f"{spec.name}-{i:05d}" for i in range(n)])
    data = validate_dataset(Dataset(ids, y, delta, np.zeros(n), x, np.zeros((n, 0), dtype=np.int64),
                                    exposed, ()))
    return data, GroundTruth(ids, label, beta)


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def at_risk_clusters(beta_summaries):
    """Labels whose 95% credible interval for beta lies strictly above 0.

    ``beta_summaries`` maps label -> dict with a ``ci95`` pair (or an object
    with a ``beta_ci`` attribute).
    """
    out = set()
    for label, s in beta_summaries.items():
        lo = s["ci95"][0] if isinstance(s, dict) else s.beta_ci[0]
        if lo > 0:
            out.add(label)
    return out


def misclassification_rates(partition, beta_summaries, truth_beta, per="group"):
    """(truly risk-free individuals put in at-risk clusters, truly at-risk
    individuals put in clusters without risk).

    With ``per="group"`` each count is divided by the size of its true group;
    ``per="all"`` divides both by the total number of individuals.
    """
    if per not in ("group", "all"):
        raise DomainError(f"per must be 'group' or 'all', got {per!r}")
    partition = np.asarray(partition)
    truth_beta = np.asarray(truth_beta, dtype=float)
    risky = at_risk_clusters(beta_summaries)
    flagged = np.isin(partition, list(risky))
    null = truth_beta == 0
    false_risk = int(np.sum(flagged & null))
    missed = int(np.sum(~flagged & ~null))
    if per == "all":
        n = len(truth_beta)
        return false_risk / n, missed / n
    return (false_risk / null.sum() if null.any() else 0.0,
            missed / (~null).sum() if (~null).any() else 0.0)


def relative_bias(beta_draws, truth_cluster, truth_beta):
    """Mean relative bias of each individual's beta per true cluster.

    ``beta_draws`` is (n_iter, n): the excess risk of each individual's
    allocated cluster at each stored iteration.  Where the true value is 0
    the absolute difference is used instead.
    """
    B = np.asarray(beta_draws, dtype=float)
    tb = np.asarray(truth_beta, dtype=float)
    tc = np.asarray(truth_cluster)
    diff = B - tb[None, :]
    rb = np.where(tb[None, :] != 0, diff / np.where(tb != 0, tb, 1.0)[None, :], diff)
    per_ind = rb.mean(axis=0)
    return {int(c): float(per_ind[tc == c].mean()) for c in np.unique(tc)}


def cluster_count_summary(counts):
    """Mean and first/third quartiles (linear interpolation) of cluster counts."""
    c = np.asarray(counts, dtype=float)
    if c.size == 0:
        raise DomainError("need at least one run")
    q1, q3 = np.quantile(c, [0.25, 0.75])
    return {"mean": float(c.mean()), "q1": float(q1), "q3": float(q3)}
