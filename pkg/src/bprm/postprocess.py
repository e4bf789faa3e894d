"""Point estimates of the partition from a posterior sample, and cluster
summaries for the selected partition.

Three selectors are provided: the sampled partition closest in Frobenius
norm to the mean similarity matrix (Binder loss), PAM on ``1 - S_hat`` with
the number of medoids chosen by average silhouette width, and minimisation of
the posterior expected variation of information over sampled partitions and
complete-linkage cuts.
"""
from __future__ import annotations

import csv
import json
import math

import numpy as np
from scipy.cluster.hierarchy import complete, cut_tree
from scipy.spatial.distance import squareform

from .errors import DegenerateMatrix, EmptySample, LengthMismatch

# --------------------------------------------------------------------------
# partitions and similarity
# --------------------------------------------------------------------------


def canonicalize(labels):
    """Relabel clusters 0, 1, ... in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.ravel()].astype(np.int64)


def _as_matrix(samples):
    if hasattr(samples, "partition_matrix"):
        samples = samples.partition_matrix
    P = np.asarray(samples)
    if P.ndim == 1:
        P = P[None, :]
    if P.size == 0 or len(P) == 0:
        raise EmptySample("the posterior sample has no partitions")
    return P


def unique_partitions(samples):
    """Canonical distinct partitions, their multiplicities and the index of
    their first occurrence."""
    P = np.vstack([canonicalize(p) for p in _as_matrix(samples)])
    uniq, first, inv, counts = np.unique(P, axis=0, return_index=True, return_inverse=True, return_counts=True)
    order = np.argsort(first)
    return uniq[order], counts[order], first[order]


def _onehot(labels):
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    M = np.zeros((len(labels), k))
    M[np.arange(len(labels)), labels] = 1.0
    return M


def similarity(labels):
    M = _onehot(canonicalize(labels))
    return M @ M.T


def mean_similarity(samples):
    """Proportion of stored iterations in which each pair shares a cluster."""
    uniq, counts, _ = unique_partitions(samples)
    n = uniq.shape[1]
    S = np.zeros((n, n))
    for p, w in zip(uniq, counts):
        M = _onehot(p)
        S += w * (M @ M.T)
    S /= counts.sum()
    np.fill_diagonal(S, 1.0)
    return S


# --------------------------------------------------------------------------
# Binder / least squares
# --------------------------------------------------------------------------

def frobenius_distances(samples, S_hat=None):
    """Squared Frobenius distance between ``S_hat`` and every stored
    partition's co-clustering matrix."""
    P = _as_matrix(samples)
    S_hat = mean_similarity(P) if S_hat is None else S_hat
    base = float(np.sum(S_hat ** 2))
    out = np.empty(len(P))
    cache = {}
    for t, p in enumerate(P):
        key = canonicalize(p).tobytes()
        if key not in cache:
            M = _onehot(canonicalize(p))
            cross = float(np.sum((S_hat @ M) * M))
            sizes = M.sum(axis=0)
            cache[key] = base - 2.0 * cross + float(np.sum(sizes ** 2))
        out[t] = cache[key]
    return out


def _earliest_min(d):
    """First index within rounding of the minimum (exact ties are common:
    distinct partitions often sit at the same distance)."""
    m = float(np.min(d))
    return int(np.flatnonzero(d <= m + 1e-9 * max(1.0, abs(m)))[0])


def select_partition_binder(samples):
    """Stored partition minimising the Frobenius distance to ``S_hat``;
    ties go to the earliest iteration."""
    P = _as_matrix(samples)
    return canonicalize(P[_earliest_min(frobenius_distances(P))])


# --------------------------------------------------------------------------
# PAM
# --------------------------------------------------------------------------

def silhouette_samples(D, labels):
    """Silhouette width of every point for dissimilarity matrix ``D``.

    Points in singleton clusters get 0.
    """
    D = np.asarray(D, dtype=float)
    labels = np.asarray(labels)
    ks = np.unique(labels)
    n = len(labels)
    sums = np.column_stack([D[:, labels == k].sum(axis=1) for k in ks])
    sizes = np.array([np.sum(labels == k) for k in ks], dtype=float)
    own = np.searchsorted(ks, labels)
    own_size = sizes[own]
    a = np.divide(sums[np.arange(n), own], own_size - 1, out=np.zeros(n), where=own_size > 1)
    other = sums / sizes[None, :]
    other[np.arange(n), own] = np.inf
    b = other.min(axis=1) if len(ks) > 1 else np.zeros(n)
    denom = np.maximum(a, b)
    s = np.divide(b - a, denom, out=np.zeros(n), where=denom > 0)
    s[own_size == 1] = 0.0
    return s


def silhouette_score(D, labels):
    return float(np.mean(silhouette_samples(D, labels)))


def pam(D, k):
    """k-medoids by BUILD then best-improvement SWAP, scanning candidates in
    index order so the result depends on ``D`` only.

    Returns ``(medoids, labels)`` with labels indexing ``medoids``.
    """
    D = np.asarray(D, dtype=float)
    n = len(D)
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    medoids = [int(np.argmin(D.sum(axis=1)))]
    d1 = D[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(d1[:, None] - D, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        h = int(np.argmax(gain))
        medoids.append(h)
        d1 = np.minimum(d1, D[:, h])
    medoids = np.array(medoids)
    while True:
        Dm = D[:, medoids]
        order = np.argsort(Dm, axis=1, kind="stable")
        near = order[:, 0]
        d1 = Dm[np.arange(n), near]
        d2 = Dm[np.arange(n), order[:, 1]] if k > 1 else np.full(n, np.inf)
        base = (np.minimum(D, d1[:, None]) - d1[:, None]).sum(axis=0)     # per candidate h
        best, best_m, best_h = 0.0, -1, -1
        is_med = np.zeros(n, dtype=bool)
        is_med[medoids] = True
        for mi in range(k):
            rows = near == mi
            adj = (np.minimum(D[rows], d2[rows, None]) - np.minimum(D[rows], d1[rows, None])).sum(axis=0)
            delta = base + adj
            delta[is_med] = np.inf
            h = int(np.argmin(delta))
            # strict improvement with a relative tolerance keeps the loop finite
            if delta[h] < best - 1e-12 * max(1.0, abs(d1.sum())):
                best, best_m, best_h = float(delta[h]), mi, h
        if best_m < 0:
            break
        medoids[best_m] = best_h
    labels = np.argmin(D[:, medoids], axis=1)
    return medoids, labels


def select_partition_pam(S_hat, k_max=10, return_details=False):
    """PAM on ``1 - S_hat`` for k = 2..k_max, keeping the k with the largest
    average silhouette width (ties to the smaller k).

    Raises :class:`DegenerateMatrix` (carrying the one-cluster partition as
    ``exc.partition``) when every dissimilarity is zero.
    """
    S_hat = np.asarray(S_hat, dtype=float)
    D = 1.0 - S_hat
    np.fill_diagonal(D, 0.0)
    n = len(D)
    if not np.any(D > 0):
        exc = DegenerateMatrix("all dissimilarities are zero: a single cluster")
        exc.partition = np.zeros(n, dtype=np.int64)
        raise exc
    best = None
    widths = {}
    for k in range(2, min(k_max, n - 1) + 1):
        _, labels = pam(D, k)
        s = silhouette_score(D, labels)
        widths[k] = s
        if best is None or s > best[0]:
            best = (s, k, labels)
    if best is None:
        # n == 2: one split is the only option
        best = (0.0, 2, np.arange(n))
        widths[2] = 0.0
    part = canonicalize(best[2])
    if return_details:
        return part, {"k": best[1], "silhouette": widths}
    return part


# --------------------------------------------------------------------------
# variation of information
# --------------------------------------------------------------------------

def _entropy_bits(counts, n):
    c = counts[counts > 0]
    return float(-(c / n * np.log2(c / n)).sum())


def vi_distance(P, P_hat):
    """Variation of information in bits: H(P) + H(P_hat) - 2 I(P, P_hat)."""
    a, b = np.asarray(P), np.asarray(P_hat)
    if a.shape != b.shape:
        raise LengthMismatch(f"partitions have lengths {a.size} and {b.size}")
    n = a.size
    if n == 0:
        return 0.0
    a, b = canonicalize(a), canonicalize(b)
    ka, kb = a.max() + 1, b.max() + 1
    joint = np.bincount(a * kb + b, minlength=ka * kb)
    ha = _entropy_bits(np.bincount(a), n)
    hb = _entropy_bits(np.bincount(b), n)
    hab = _entropy_bits(joint, n)
    return max(0.0, 2.0 * hab - ha - hb)


def _row_entropies(labels, k):
    """Entropy (bits) of each row of a (m, n) label matrix with labels < k."""
    m, n = labels.shape
    flat = (np.arange(m)[:, None] * k + labels).ravel()
    c = np.bincount(flat, minlength=m * k).reshape(m, k).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(c > 0, c / n * np.log2(c / n), 0.0)
    return -t.sum(axis=1)


def expected_vi(candidates, samples, weights=None, prune_above=None):
    """Weighted mean VI between each candidate and the sample partitions.

    With ``prune_above`` set, candidates whose lower bound
    ``E|H(P) - H(candidate)|`` already exceeds the running minimum (or the
    given value) are not evaluated and get ``inf``; the minimiser and its
    value are unaffected.
    """
    C = np.atleast_2d(np.asarray(candidates))
    Q = np.atleast_2d(np.asarray(samples))
    if C.shape[1] != Q.shape[1]:
        raise LengthMismatch("candidates and samples have different lengths")
    C = np.vstack([canonicalize(c) for c in C])
    Q = np.vstack([canonicalize(q) for q in Q])
    w = np.ones(len(Q)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    n = Q.shape[1]
    kq = int(Q.max()) + 1
    hq = _row_entropies(Q, kq)
    hc = np.array([_entropy_bits(np.bincount(c), n) for c in C])
    bound = np.abs(hc[:, None] - hq[None, :]) @ w
    out = np.full(len(C), np.inf)
    best = np.inf if prune_above is None or prune_above is True else float(prune_above)
    prune = prune_above is not None
    for i in np.argsort(bound, kind="stable"):
        if prune and bound[i] > best:
            break
        c = C[i]
        kc = int(c.max()) + 1
        joint = _row_entropies(c[None, :] * kq + Q, kc * kq)
        vi = np.maximum(2.0 * joint - hc[i] - hq, 0.0)
        out[i] = float(np.dot(w, vi))
        best = min(best, out[i])
    return out


def linkage_candidates(S_hat):
    """Cuts of the complete-linkage dendrogram of ``1 - S_hat`` at every
    merge height (from n singletons down to one cluster)."""
    D = 1.0 - np.asarray(S_hat, dtype=float)
    np.fill_diagonal(D, 0.0)
    D = np.maximum((D + D.T) / 2.0, 0.0)
    n = len(D)
    if n < 2:
        return np.zeros((1, n), dtype=np.int64)
    Z = complete(squareform(D, checks=False))
    cuts = cut_tree(Z).T            # row r has n - r clusters
    return np.vstack([canonicalize(c) for c in cuts])


def select_partition_vi(samples, candidates=None, stride=0, return_details=False):
    """Candidate minimising the posterior expected VI; ties go to the
    candidate with fewer clusters, then to the earlier candidate.

    ``stride`` thins the sample used in the expectation; 0 picks a stride
    automatically so that at most 5000 stored iterations are used.
    """
    P = _as_matrix(samples)
    if stride <= 0:
        stride = max(1, math.ceil(len(P) / 5000))
    uniq, counts, _ = unique_partitions(P[::stride])
    if candidates is None:
        all_uniq, _, _ = unique_partitions(P)
        S_hat = mean_similarity(P)
        candidates = np.vstack([all_uniq, linkage_candidates(S_hat)])
    cand = np.vstack([canonicalize(c) for c in np.atleast_2d(candidates)])
    cand = np.unique(cand, axis=0, return_index=True)
    cand = cand[0][np.argsort(cand[1])]
    ev = expected_vi(cand, uniq, counts, prune_above=True)
    k = cand.max(axis=1) + 1
    # values equal up to rounding count as ties
    tied = np.flatnonzero(ev <= ev.min() + 1e-9 * max(1.0, abs(ev.min())))
    best = min(tied, key=lambda i: (k[i], i))
    if return_details:
        return cand[best], {"expected_vi": float(ev[best]), "n_candidates": len(cand), "stride": stride}
    return cand[best]


def select_partition(samples, method="pam", k_max=10, vi_stride=0):
    """Dispatch to one selector; returns (partition, details)."""
    if method == "binder":
        P = _as_matrix(samples)
        d = frobenius_distances(P)
        t = _earliest_min(d)
        return canonicalize(P[t]), {"iteration_index": t, "frobenius": float(d[t])}
    if method == "pam":
        try:
            return select_partition_pam(mean_similarity(samples), k_max, return_details=True)
        except DegenerateMatrix as exc:
            return exc.partition, {"k": 1, "silhouette": {}, "degenerate": True}
    if method == "vi":
        return select_partition_vi(samples, stride=vi_stride, return_details=True)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# cluster summaries
# --------------------------------------------------------------------------

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def match_clusters(P_star, partition):
    """For each final cluster, the sampled label sharing most members with it
    (ties to the smaller label)."""
    P_star = np.asarray(P_star)
    partition = np.asarray(partition)
    K = int(P_star.max()) + 1
    L = int(partition.max()) + 1
    overlap = np.bincount(P_star * L + partition, minlength=K * L).reshape(K, L)
    return overlap.argmax(axis=1)


def _stats(draws):
    d = np.asarray(draws, dtype=float)
    # variables a cluster never observes keep prior draws, which can be inf
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.quantile(d, QUANTILES, axis=0)
        mean = d.mean(axis=0)
    return {"q025": q[0], "q25": q[1], "median": q[2], "q75": q[3], "q975": q[4], "mean": mean}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def heatmap_code(value, q25, q50, q75):
    if value < q25:
        return "--"
    if value < q50:
        return "-"
    if value <= q75:
        return "+"
    return "++"


def profile_code(ci_low, median, ci_high, reference):
    """Compare a cluster's posterior with a reference value: '++' / '--' only
    when the 95% interval lies strictly above / below it."""
    if ci_low > reference:
        return "++"
    if ci_high < reference:
        return "--"
    return "+" if median > reference else "-"


def summarize_clusters(sample, P_star, data=None):
    """Posterior summaries of every final cluster.

    Stored draws are mapped to the clusters of ``P_star`` by maximal overlap
    at each iteration.  Returns a JSON-ready dict with one entry per cluster.
    """
    if len(sample) == 0:
        raise EmptySample("no stored iterations to summarise")
    P_star = canonicalize(P_star)
    K = int(P_star.max()) + 1
    beta, emu, var, probs = [], [], [], []
    for t in range(len(sample)):
        lab = match_clusters(P_star, sample.partitions[t])
        beta.append(sample.beta[t][lab])
        emu.append(np.exp(sample.mu[t][lab]))
        with np.errstate(over="ignore"):
            var.append(sample.sigma[t][lab] ** 2)
        probs.append([pj[lab] for pj in sample.p[t]])
    beta = np.array(beta)                         # (T, K)
    emu = np.array(emu)                           # (T, K, n_cont)
    var = np.array(var)
    sizes = np.bincount(P_star, minlength=K)
    clusters = []
    for k in range(K):
        st_b = _stats(beta[:, k])
        entry = {
            "cluster": k,
            "size": int(sizes[k]),
            "beta": st_b,
            "beta_ci95": [float(st_b["q025"]), float(st_b["q975"])],
            "exp_mu": _stats(emu[:, k]) if emu.size else {},
            "sigma2": _stats(var[:, k]) if var.size else {},
            "p": [_stats(np.array([pr[j][k] for pr in probs])) for j in range(len(sample.p[0]))],
        }
        clusters.append(entry)
    report = {"n_clusters": K, "sizes": sizes.tolist(), "clusters": clusters}
    if emu.size and emu.shape[2]:
        # reference: mean of the pooled cluster-specific posterior draws,
        # over clusters whose members observe the variable (when known)
        nv = emu.shape[2]
        observed = np.ones((K, nv), dtype=bool)
        if data is not None and data.K == nv:
            cm = data.cont_mask
            observed = np.array([cm[P_star == k].any(axis=0) for k in range(K)])
        for v in range(nv):
            use = observed[:, v]
            ref = float(emu[:, use, v].mean()) if use.any() else math.nan
            for k, entry in enumerate(clusters):
                codes = entry.setdefault("profile_codes", [None] * nv)
                if use[k]:
                    s = entry["exp_mu"]
                    codes[v] = profile_code(s["q025"][v], s["median"][v], s["q975"][v], ref)
    if data is not None and data.K:
        x = np.asarray(data.x_cont, dtype=float)
        q = np.nanquantile(x, [0.25, 0.5, 0.75], axis=0)
        for k, entry in enumerate(clusters):
            codes, means = [], []
            for v in range(data.K):
                col = x[P_star == k, v]
                col = col[~np.isnan(col)]
                if len(col) == 0:
                    codes.append(None)
                    means.append(None)
                    continue
                m = float(col.mean())
                means.append(m)
                codes.append(heatmap_code(m, q[0, v], q[1, v], q[2, v]))
            entry["covariate_means"] = means
            entry["heatmap_codes"] = codes
    return _plain(report)


def summary_rows(report):
    """Long-format rows (cluster, parameter, index, statistic, value)."""
    rows = []
    for entry in report["clusters"]:
        k = entry["cluster"]
        for stat, v in entry["beta"].items():
            rows.append((k, "beta", "", stat, v))
        for par in ("exp_mu", "sigma2"):
            for stat, vals in entry.get(par, {}).items():
                for i, v in enumerate(vals):
                    rows.append((k, par, i + 1, stat, v))
        for j, pj in enumerate(entry.get("p", [])):
            for stat, vals in pj.items():
                for m, v in enumerate(vals):
                    rows.append((k, "p", f"{j + 1}.{m}", stat, v))
    return rows


def write_summary(report, json_path=None, csv_path=None):
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["cluster", "parameter", "index", "statistic", "value"])
            w.writerows(summary_rows(report))


def write_matrix_csv(S, path):
    np.savetxt(path, np.asarray(S), delimiter=",", fmt="%.10g")


def read_matrix_csv(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)
