"""Domain types, dataset validation and prior densities.

Continuous exposures are stored as an ``(n, K)`` float array where ``nan``
marks an absent value; categorical exposures as an ``(n, J)`` int array where
``-1`` marks an absent value.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import betaln, gammaln

from .errors import (
    BadCategoryIndex,
    DataError,
    DegenerateRange,
    EntryAfterExit,
    NegativeContinuousExposure,
    NonPositiveTime,
)

LOG_2PI = math.log(2.0 * math.pi)


# --------------------------------------------------------------------------
# Individuals and datasets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Individual:
    """One record. ``None`` in ``x_cont``/``x_cat`` marks an absent value."""

    id: str
    y: float
    delta: int
    entry: float
    x_cont: tuple = ()
    x_cat: tuple = ()
    exposed: bool = True

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(
            id=str(d["id"]),
            y=float(d["y"]),
            delta=int(d["delta"]),
            entry=float(d["entry"]),
            x_cont=tuple(None if v is None else float(v) for v in d.get("x_cont", ())),
            x_cat=tuple(None if v is None else int(v) for v in d.get("x_cat", ())),
            exposed=bool(d.get("exposed", True)),
        )


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar dataset.

    Arrays are made read-only on construction so a dataset can be shared
    between chains and threads.
    """

    ids: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    entry: np.ndarray
    x_cont: np.ndarray
    x_cat: np.ndarray
    exposed: np.ndarray
    modality_counts: tuple = ()

    def __post_init__(self):
        n = len(self.y)
        object.__setattr__(self, "ids", _readonly(np.asarray(self.ids, dtype=object)))
        object.__setattr__(self, "y", _readonly(np.asarray(self.y, dtype=float)))
        object.__setattr__(self, "delta", _readonly(np.asarray(self.delta, dtype=np.int64)))
        object.__setattr__(self, "entry", _readonly(np.asarray(self.entry, dtype=float)))
        xc = np.asarray(self.x_cont, dtype=float).reshape(n, -1) if n else np.zeros((0, 0))
        xk = np.asarray(self.x_cat, dtype=np.int64).reshape(n, -1) if n else np.zeros((0, 0), np.int64)
        object.__setattr__(self, "x_cont", _readonly(xc))
        object.__setattr__(self, "x_cat", _readonly(xk))
        object.__setattr__(self, "exposed", _readonly(np.asarray(self.exposed, dtype=bool)))
        object.__setattr__(self, "modality_counts", tuple(int(m) for m in self.modality_counts))

    @property
    def n(self):
        return len(self.y)

    @property
    def K(self):
        return self.x_cont.shape[1]

    @property
    def J(self):
        return self.x_cat.shape[1]

    @property
    def cont_mask(self):
        return ~np.isnan(self.x_cont)

    @property
    def cat_mask(self):
        return self.x_cat >= 0

    @property
    def individuals(self):
        out = []
        for i in range(self.n):
            xc = tuple(None if np.isnan(v) else float(v) for v in self.x_cont[i])
            xk = tuple(None if v < 0 else int(v) for v in self.x_cat[i])
            out.append(Individual(str(self.ids[i]), float(self.y[i]), int(self.delta[i]),
                                  float(self.entry[i]), xc, xk, bool(self.exposed[i])))
        return out

    @classmethod
    def from_individuals(cls, individuals: Sequence[Individual], modality_counts=None):
        individuals = list(individuals)
        if not individuals:
            raise DataError("dataset is empty")
        K = len(individuals[0].x_cont)
        J = len(individuals[0].x_cat)
        bad = [ind.id for ind in individuals if len(ind.x_cont) != K or len(ind.x_cat) != J]
        if bad:
            raise DataError("records disagree on the number of covariates", bad)
        xc = np.array([[np.nan if v is None else v for v in ind.x_cont] for ind in individuals],
                      dtype=float).reshape(len(individuals), K)
        xk = np.array([[-1 if v is None else v for v in ind.x_cat] for ind in individuals],
                      dtype=np.int64).reshape(len(individuals), J)
        if modality_counts is None:
            modality_counts = [int(xk[:, j].max()) + 1 if J else 0 for j in range(J)]
        return cls(
            ids=[ind.id for ind in individuals],
            y=[ind.y for ind in individuals],
            delta=[ind.delta for ind in individuals],
            entry=[ind.entry for ind in individuals],
            x_cont=xc,
            x_cat=xk,
            exposed=[ind.exposed for ind in individuals],
            modality_counts=tuple(modality_counts),
        )

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.ids[idx], self.y[idx], self.delta[idx], self.entry[idx],
                       self.x_cont[idx], self.x_cat[idx], self.exposed[idx], self.modality_counts)

    def to_dict(self):
        return {
            "modality_counts": list(self.modality_counts),
            "individuals": [ind.to_dict() for ind in self.individuals],
        }

    @classmethod
    def from_dict(cls, d):
        inds = [Individual.from_dict(r) for r in d["individuals"]]
        return cls.from_individuals(inds, d.get("modality_counts"))

    def equals(self, other):
        return (
            isinstance(other, Dataset)
            and self.modality_counts == other.modality_counts
            and list(self.ids) == list(other.ids)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.entry, other.entry)
            and np.array_equal(self.x_cont, other.x_cont, equal_nan=True)
            and np.array_equal(self.x_cat, other.x_cat)
            and np.array_equal(self.exposed, other.exposed)
        )


def validate_dataset(raw: Dataset) -> Dataset:
    """Check every record invariant; raise a :class:`DataError` subclass naming
    the offending record ids. Returns the dataset unchanged when valid."""
    if raw.n == 0:
        raise DataError("dataset is empty")
    ids = raw.ids
    bad = ids[~(raw.y > 0)]
    if len(bad):
        raise NonPositiveTime("non-positive follow-up time", bad)
    bad = ids[~((raw.entry >= 0) & (raw.entry < raw.y))]
    if len(bad):
        raise EntryAfterExit("entry time not in [0, y)", bad)
    bad = ids[~np.isin(raw.delta, (0, 1))]
    if len(bad):
        raise DataError("event indicator not in {0, 1}", bad)
    if raw.K:
        present = raw.cont_mask
        nonpos = np.any(present & ~(np.where(present, raw.x_cont, 1.0) > 0), axis=1)
        bad = ids[nonpos]
        if len(bad):
            raise NegativeContinuousExposure("continuous exposure must be > 0", bad)
    if raw.J:
        if len(raw.modality_counts) != raw.J:
            raise DataError(f"expected {raw.J} modality counts, got {len(raw.modality_counts)}")
        m = np.asarray(raw.modality_counts)
        badcat = np.any((raw.x_cat >= m[None, :]) | (raw.x_cat < -1), axis=1)
        bad = ids[badcat]
        if len(bad):
            raise BadCategoryIndex("category index outside declared modalities", bad)
    if len(set(ids.tolist())) != raw.n:
        raise DataError("duplicate record ids")
    return raw


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def write_dataset_csv(data: Dataset, path):
    header = ["id", "y", "delta", "entry"]
    header += [f"cont_{k + 1}" for k in range(data.K)]
    header += [f"cat_{j + 1}" for j in range(data.J)]
    header += ["exposed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(data.n):
            row = [data.ids[i], repr(float(data.y[i])), int(data.delta[i]), repr(float(data.entry[i]))]
            row += ["" if np.isnan(v) else repr(float(v)) for v in data.x_cont[i]]
            row += ["" if v < 0 else int(v) for v in data.x_cat[i]]
            row += [int(data.exposed[i])]
            w.writerow(row)


def read_dataset_csv(path, modality_counts=None) -> Dataset:
    """Read the dataset CSV. An empty cell is an absent value; an empty
    ``exposed`` cell is derived from the presence of any continuous value."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{path}: no records")
    cols = list(rows[0].keys())
    cont_cols = sorted((c for c in cols if c.startswith("cont_")), key=lambda c: int(c[5:]))
    cat_cols = sorted((c for c in cols if c.startswith("cat_")), key=lambda c: int(c[4:]))
    inds = []
    for r in rows:
        try:
            xc = tuple(float(r[c]) if r[c].strip() != "" else None for c in cont_cols)
            xk = tuple(int(r[c]) if r[c].strip() != "" else None for c in cat_cols)
            exp = r.get("exposed", "")
            exposed = bool(int(exp)) if exp is not None and exp.strip() != "" else any(v is not None for v in xc)
            inds.append(Individual(str(r["id"]), float(r["y"]), int(r["delta"]),
                                   float(r.get("entry") or 0.0), xc, xk, exposed))
        except (KeyError, ValueError) as exc:
            raise DataError(f"malformed record ({exc})", [r.get("id", "?")]) from exc
    if modality_counts is None and cat_cols:
        modality_counts = [max((ind.x_cat[j] for ind in inds if ind.x_cat[j] is not None), default=0) + 1
                           for j in range(len(cat_cols))]
    return Dataset.from_individuals(inds, modality_counts or ())


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClusterParams:
    beta: float
    mu: tuple
    sigma: tuple
    p: tuple = ()

    def __post_init__(self):
        if not self.beta >= -1:
            raise ValueError(f"beta must be >= -1, got {self.beta}")
        if any(not s > 0 for s in self.sigma):
            raise ValueError("every sigma must be > 0")
        for pj in self.p:
            pj = np.asarray(pj, dtype=float)
            if np.any(pj < 0) or abs(pj.sum() - 1.0) > 1e-12:
                raise ValueError("category probabilities must be >= 0 and sum to 1")

    def to_dict(self):
        return {"beta": float(self.beta), "mu": [float(v) for v in self.mu],
                "sigma": [float(v) for v in self.sigma],
                "p": [[float(v) for v in pj] for pj in self.p]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["beta"]), tuple(d["mu"]), tuple(d["sigma"]),
                   tuple(tuple(pj) for pj in d.get("p", ())))


@dataclass(frozen=True)
class GlobalParams:
    alpha: float
    xi_tilde: float
    nu_prime: float
    epsilon: float = 1e-24

    def __post_init__(self):
        if not (self.alpha > 0 and self.xi_tilde > 0 and self.nu_prime > 0 and self.epsilon > 0):
            raise ValueError("alpha, xi_tilde, nu_prime and epsilon must be > 0")

    @property
    def xi(self):
        return self.epsilon * self.xi_tilde

    @property
    def nu(self):
        return self.nu_prime + 1.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["alpha"]), float(d["xi_tilde"]), float(d["nu_prime"]),
                   float(d.get("epsilon", 1e-24)))


@dataclass
class PriorConfig:
    alpha_shape: float = 2.0
    alpha_rate: float = 1.0
    mu_mean: object = 0.0          # scalar or one value per continuous variable
    mu_sd: object = 10.0
    sigma_shape: float = 0.001     # Gamma prior on the precision 1/sigma^2
    sigma_rate: float = 0.001
    dirichlet_conc: float = 0.5
    xi_shape: float = 1.0
    xi_rate: float = 1.0
    nu_shape: float = 0.001
    nu_rate: float = 0.001
    pert_min: float = -1.0
    pert_mode: float = 0.0
    pert_max: float = 15.0
    epsilon: float = 1e-24

    def __post_init__(self):
        self.check()

    def check(self):
        from .errors import ConfigError

        if not (self.pert_min < self.pert_mode < self.pert_max):
            raise ConfigError("PERT prior requires pert_min < pert_mode < pert_max")
        for name in ("alpha_shape", "alpha_rate", "sigma_shape", "sigma_rate", "dirichlet_conc",
                     "xi_shape", "xi_rate", "nu_shape", "nu_rate", "epsilon"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if np.any(np.asarray(self.mu_sd, dtype=float) <= 0):
            raise ConfigError("mu_sd must be > 0")

    def mu_mean_vec(self, K):
        return np.broadcast_to(np.asarray(self.mu_mean, dtype=float), (K,)).copy()

    def mu_sd_vec(self, K):
        return np.broadcast_to(np.asarray(self.mu_sd, dtype=float), (K,)).copy()

    def to_dict(self):
        d = asdict(self)
        for k in ("mu_mean", "mu_sd"):
            v = d[k]
            d[k] = [float(x) for x in v] if np.ndim(v) else float(v)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


# --------------------------------------------------------------------------
# Densities
# --------------------------------------------------------------------------

def pert_shapes(pmin, mode, pmax):
    """Beta shapes of the PERT distribution on ``[pmin, pmax]``."""
    if not pmax > pmin:
        raise DegenerateRange(f"PERT range requires max > min, got [{pmin}, {pmax}]")
    r = pmax - pmin
    return 1.0 + 4.0 * (mode - pmin) / r, 1.0 + 4.0 * (pmax - mode) / r


def beta_pert_log_density(b, pmin=-1.0, mode=0.0, pmax=15.0):
    """Log density of the PERT distribution; ``-inf`` outside ``[pmin, pmax]``.

    Vectorised over ``b``.
    """
    a1, a2 = pert_shapes(pmin, mode, pmax)
    r = pmax - pmin
    b = np.asarray(b, dtype=float)
    z = (b - pmin) / r
    inside = (z >= 0) & (z <= 1)
    zc = np.clip(z, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (a1 - 1) * np.log(zc) + (a2 - 1) * np.log1p(-zc) - betaln(a1, a2) - math.log(r)
    out = np.where(inside, val, -np.inf)
    return float(out) if out.ndim == 0 else out


def sample_pert(rng, pmin, mode, pmax, size=None):
    a1, a2 = pert_shapes(pmin, mode, pmax)
    return pmin + (pmax - pmin) * rng.beta(a1, a2, size=size)


def gamma_log_density(x, shape, rate):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return shape * np.log(rate) - gammaln(shape) + (shape - 1) * np.log(x) - rate * x


def normal_log_density(x, mean, sd):
    x = np.asarray(x, dtype=float)
    return -0.5 * LOG_2PI - np.log(sd) - 0.5 * ((x - mean) / sd) ** 2


def beta_log_density(x, a, b):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return (a - 1) * np.log(x) + (b - 1) * np.log1p(-x) - betaln(a, b)


def dirichlet_log_density(p, conc):
    """Symmetric Dirichlet log density along the last axis."""
    p = np.asarray(p, dtype=float)
    m = p.shape[-1]
    with np.errstate(divide="ignore"):
        return gammaln(m * conc) - m * gammaln(conc) + ((conc - 1) * np.log(p)).sum(axis=-1)


def stick_weights(V):
    """Mixture weights from stick variables and the leftover tail mass."""
    V = np.asarray(V, dtype=float)
    rest = np.concatenate(([1.0], np.cumprod(1.0 - V)))
    return V * rest[:-1], float(rest[-1])
