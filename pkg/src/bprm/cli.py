"""Command-line interface: ``bprm {simulate,fit,postprocess,evaluate,diagnose,report,rerun}``.

Every command writes a ``manifest.json`` next to its outputs holding the
resolved arguments, configuration, seeds and library versions; ``bprm rerun
MANIFEST`` replays it.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 cluster cap
exceeded, 1 any other package error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import gelman_rubin
from .errors import BPRMError, CapExceeded, ConfigError, DataError, DomainError
from .model import read_dataset_csv, validate_dataset, write_dataset_csv
from .postprocess import mean_similarity, select_partition, summarize_clusters, write_matrix_csv, write_summary
from .sample import PosteriorSample
from .simgen import (CLUSTER_NAMES, GroundTruth, cluster_count_summary, generate_scenario_dataset, get_scenario,
                     misclassification_rates, relative_bias)
from .tempering import run_parallel_tempering

log = logging.getLogger("bprm")

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_CAP = 0, 1, 2, 3, 4


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _versions():
    return {"bprm": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_manifest(out, args, extra=None, inputs=()):
    m = {
        "command": args.command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "versions": _versions(),
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.isfile(p)},
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    m.update(extra or {})
    _write_json(os.path.join(out, "manifest.json"), m)
    return m


def _parse_ladder(text):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise ConfigError(f"bad --ladder {text!r}: {exc}") from exc


def resolve_config(args) -> RunConfig:
    """Configuration file (if any) overridden by command-line flags."""
    base = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    d = base.to_dict()
    sch, ada = d["schedule"], d["schedule"]["adaptation"]
    if args.iters is not None:
        sch["iterations"] = args.iters
    if args.burnin is not None:
        sch["burnin"] = args.burnin
    if args.thin is not None:
        sch["thin"] = args.thin
    if args.adaptive_blocks is not None:
        ada["n_blocks"] = args.adaptive_blocks
    if args.ladder is not None:
        d["ladder"]["temperatures"] = _parse_ladder(args.ladder)
    if args.npt is not None:
        d["ladder"]["n_pt"] = args.npt
    if args.no_pt:
        d["parallel_tempering"] = False
    if args.seed is not None:
        d["seed"] = args.seed
    if args.workers is not None:
        d["workers"] = args.workers
    if getattr(args, "method", None) is not None:
        d["postprocess"]["method"] = args.method
    if getattr(args, "kmax", None) is not None:
        d["postprocess"]["k_max"] = args.kmax
    if args.out is not None:
        d["out"] = args.out
    return RunConfig.from_dict(d)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    spec = get_scenario(args.scenario, args.n)
    overrides = {k: getattr(args, k) for k in ("xi", "nu", "censor_low", "censor_high")
                 if getattr(args, k) is not None}
    if overrides:
        from dataclasses import replace
        spec = replace(spec, **overrides)
    os.makedirs(args.out, exist_ok=True)
    seeds = [args.seed + r for r in range(args.replicates)]
    outputs = []
    for r, seed in enumerate(seeds):
        data, truth = generate_scenario_dataset(spec, seed)
        stem = "data" if args.replicates == 1 else f"data_{r:03d}"
        dpath = os.path.join(args.out, f"{stem}.csv")
        tpath = os.path.join(args.out, f"{stem}_truth.csv")
        write_dataset_csv(data, dpath)
        truth.write_csv(tpath)
        outputs.append({"data": dpath, "truth": tpath, "seed": seed,
                        "events": int(data.delta.sum()), "n": data.n})
    write_manifest(args.out, args, {"seeds": seeds, "outputs": outputs,
                                    "scenario": {"name": spec.name, "xi": spec.xi, "nu": spec.nu,
                                                 "n_per_cluster": spec.n_per_cluster,
                                                 "censor": [spec.censor_low, spec.censor_high]}})
    return EXIT_OK


def _write_traces(path, chain_traces):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "alpha", "loglik", "n_nonempty", "seconds"])
        for t, row in enumerate(zip(*chain_traces)):
            w.writerow([t, *row])


def fit_one(data, config: RunConfig, seed, alpha_init, out):
    """Fit one chain (or one tempered ensemble) and write its outputs."""
    cfg = RunConfig.from_dict({**config.to_dict(), "alpha_init": alpha_init, "seed": seed})
    os.makedirs(out, exist_ok=True)
    sample, swaps, cold = run_parallel_tempering(data, cfg, seed, return_chain=True)
    sample.write_jsonl(os.path.join(out, "samples.jsonl"))
    _write_json(os.path.join(out, "swaps.json"), swaps)
    _write_traces(os.path.join(out, "traces.csv"),
                  (cold.trace_alpha, cold.trace_loglik, cold.trace_k, cold.sweep_seconds))
    meta = dict(sample.meta)
    _write_json(os.path.join(out, "fit_meta.json"), meta)
    return sample, meta


def cmd_fit(args):
    config = resolve_config(args)
    data = validate_dataset(read_dataset_csv(args.data))
    alphas = args.alpha_init or [config.alpha_init]
    os.makedirs(config.out, exist_ok=True)
    runs = []
    for j, a0 in enumerate(alphas):
        seed = config.seed + j
        out = config.out if len(alphas) == 1 else os.path.join(config.out, f"chain_{j}")
        t0 = time.perf_counter()
        sample, meta = fit_one(data, config, seed, a0, out)
        P, det = select_partition(sample, config.postprocess.method, config.postprocess.k_max,
                                  config.postprocess.vi_stride) if len(sample) else (None, {})
        if P is not None:
            _write_json(os.path.join(out, "partition.json"),
                        {"method": config.postprocess.method, "partition": P, "n_clusters": int(P.max()) + 1,
                         "details": det})
        runs.append({"dir": out, "seed": seed, "alpha_init": a0, "seconds": time.perf_counter() - t0,
                     "n_clusters": None if P is None else int(P.max()) + 1})
        if len(alphas) > 1:
            a = argparse.Namespace(**{**vars(args), "alpha_init": [a0], "seed": seed, "out": out})
            write_manifest(out, a, {"config": config.to_dict(), "seeds": [seed]}, inputs=[args.data])
    if len(alphas) > 1:
        with open(os.path.join(config.out, "cluster_counts.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha_init", "n_clusters"])
            for r in runs:
                w.writerow([r["alpha_init"], r["n_clusters"]])
    write_manifest(config.out, args, {"config": config.to_dict(), "seeds": [r["seed"] for r in runs],
                                      "runs": runs}, inputs=[args.data])
    return EXIT_OK


def _load_sample(path):
    return PosteriorSample.read_jsonl(path)


def cmd_postprocess(args):
    sample = _load_sample(args.samples)
    os.makedirs(args.out, exist_ok=True)
    S = mean_similarity(sample)
    write_matrix_csv(S, os.path.join(args.out, "similarity.csv"))
    P, det = select_partition(sample, args.method, args.kmax)
    _write_json(os.path.join(args.out, "partition.json"),
                {"method": args.method, "partition": P, "n_clusters": int(P.max()) + 1, "details": det})
    write_manifest(args.out, args, inputs=[args.samples])
    return EXIT_OK


def _fit_dirs(paths):
    out = []
    for p in paths:
        if os.path.isfile(os.path.join(p, "samples.jsonl")):
            out.append(p)
        else:
            out += sorted(os.path.join(p, d) for d in os.listdir(p)
                          if os.path.isfile(os.path.join(p, d, "samples.jsonl")))
    if not out:
        raise DataError(f"no fit directories (with samples.jsonl) under {paths}")
    return out


def _partition_for(fit_dir, sample, method, kmax):
    path = os.path.join(fit_dir, "partition.json")
    if os.path.isfile(path):
        rec = _read_json(path)
        if method is None or rec["method"] == method:
            return np.asarray(rec["partition"]), rec["method"]
    method = method or "pam"
    return select_partition(sample, method, kmax)[0], method


def evaluate_fit(sample, P, truth: GroundTruth):
    report = summarize_clusters(sample, P)
    summaries = {c["cluster"]: {"ci95": c["beta_ci95"]} for c in report["clusters"]}
    false_risk, missed = misclassification_rates(P, summaries, truth.beta)
    false_all, missed_all = misclassification_rates(P, summaries, truth.beta, per="all")
    rb = relative_bias(sample.individual_beta(), truth.cluster, truth.beta)
    return {
        "n_clusters": int(np.max(P)) + 1,
        "false_risk_rate": false_risk,
        "missed_risk_rate": missed,
        "false_risk_share_of_all": false_all,
        "missed_risk_share_of_all": missed_all,
        "bias": {CLUSTER_NAMES[c] if c < len(CLUSTER_NAMES) else str(c): v for c, v in rb.items()},
    }


def cmd_evaluate(args):
    truths = args.truth
    dirs = _fit_dirs(args.fits)
    if len(truths) not in (1, len(dirs)):
        raise ConfigError("give one --truth file or one per fit directory")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i, d in enumerate(dirs):
        truth = GroundTruth.read_csv(truths[0] if len(truths) == 1 else truths[i])
        sample = _load_sample(os.path.join(d, "samples.jsonl"))
        P, method = _partition_for(d, sample, args.method, args.kmax)
        rows.append({"fit": d, "method": method, **evaluate_fit(sample, P, truth)})
    result = {"runs": rows, "cluster_counts": cluster_count_summary([r["n_clusters"] for r in rows])}
    _write_json(os.path.join(args.out, "evaluation.json"), result)
    write_manifest(args.out, args)
    return EXIT_OK


def _read_traces(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in ("alpha", "loglik", "n_nonempty", "seconds")}


def cmd_diagnose(args):
    dirs = _fit_dirs(args.fits)
    os.makedirs(args.out, exist_ok=True)
    traces = [_read_traces(os.path.join(d, "traces.csv")) for d in dirs]
    result = {"fits": dirs, "rhat": {}, "swaps": {}, "seconds_per_iteration": {}}
    if len(traces) >= 2:
        n = min(len(t["alpha"]) for t in traces)
        for key in ("alpha", "loglik", "n_nonempty"):
            result["rhat"][key] = gelman_rubin([t[key][:n] for t in traces])
    for d, t in zip(dirs, traces):
        sw = os.path.join(d, "swaps.json")
        if os.path.isfile(sw):
            result["swaps"][d] = _read_json(sw)
        result["seconds_per_iteration"][d] = float(np.mean(t["seconds"])) if len(t["seconds"]) else 0.0
    _write_json(os.path.join(args.out, "diagnostics.json"), result)
    write_manifest(args.out, args)
    return EXIT_OK


def cmd_report(args):
    sample = _load_sample(os.path.join(args.fit, "samples.jsonl"))
    data = validate_dataset(read_dataset_csv(args.data)) if args.data else None
    P, method = _partition_for(args.fit, sample, args.method, args.kmax)
    os.makedirs(args.out, exist_ok=True)
    rep = summarize_clusters(sample, P, data)
    rep["method"] = method
    write_summary(rep, os.path.join(args.out, "summary.json"), os.path.join(args.out, "summary.csv"))
    with open(os.path.join(args.out, "heatmap.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        nv = max((len(c.get("profile_codes") or []) for c in rep["clusters"]), default=0)
        w.writerow(["cluster", "size", "beta_median", "beta_ci_low", "beta_ci_high"]
                   + [f"quartile_code_{v + 1}" for v in range(nv)] + [f"profile_code_{v + 1}" for v in range(nv)])
        for c in rep["clusters"]:
            hq = c.get("heatmap_codes") or [""] * nv
            pc = c.get("profile_codes") or [""] * nv
            w.writerow([c["cluster"], c["size"], c["beta"]["median"], *c["beta_ci95"],
                        *[x or "" for x in hq], *[x or "" for x in pc]])
    write_manifest(args.out, args, inputs=[args.data] if args.data else [])
    return EXIT_OK


def cmd_rerun(args):
    m = _read_json(args.manifest)
    recorded = dict(m["args"])
    if args.out is not None:
        recorded["out"] = args.out
    ns = argparse.Namespace(**recorded)
    if ns.command == "fit" and "config" in m:
        # the resolved configuration stands in for the original config file
        os.makedirs(ns.out, exist_ok=True)
        ns.config = os.path.join(ns.out, "resolved_config.json")
        _write_json(ns.config, m["config"])
    return dict(_COMMANDS)[ns.command](ns)


_COMMANDS = (("simulate", cmd_simulate), ("fit", cmd_fit), ("postprocess", cmd_postprocess),
             ("evaluate", cmd_evaluate), ("diagnose", cmd_diagnose), ("report", cmd_report),
             ("rerun", cmd_rerun))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="bprm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate scenario datasets with ground truth")
    s.add_argument("--scenario", required=True, choices=["S1", "S2", "S3", "S4"])
    s.add_argument("--n", type=int, default=None, help="total individuals (split equally over 4 clusters)")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--xi", type=float, default=None, help="override the baseline scale")
    s.add_argument("--nu", type=float, default=None, help="override the baseline shape")
    s.add_argument("--censor-low", type=float, default=None)
    s.add_argument("--censor-high", type=float, default=None)
    s.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="run the sampler (with or without parallel tempering)")
    f.add_argument("--data", required=True)
    f.add_argument("--config", default=None)
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--ladder", default=None, help="comma-separated temperatures, e.g. 1,2,5,10,20")
    f.add_argument("--npt", type=int, default=None)
    f.add_argument("--iters", type=int, default=None)
    f.add_argument("--burnin", type=int, default=None)
    f.add_argument("--adaptive-blocks", type=int, default=None)
    f.add_argument("--thin", type=int, default=None)
    f.add_argument("--no-pt", action="store_true")
    f.add_argument("--alpha-init", type=float, nargs="+", default=None,
                   help="one chain per value; seeds are seed, seed+1, ...")
    f.add_argument("--workers", type=int, default=None)
    f.add_argument("--method", choices=["binder", "pam", "vi"], default=None)
    f.add_argument("--kmax", type=int, default=None)
    f.add_argument("--out", default=None)

    pp = sub.add_parser("postprocess", help="select a partition from a posterior sample")
    pp.add_argument("--samples", required=True)
    pp.add_argument("--method", choices=["binder", "pam", "vi"], default="pam")
    pp.add_argument("--kmax", type=int, default=10)
    pp.add_argument("--out", required=True)

    e = sub.add_parser("evaluate", help="misclassification, bias and cluster counts against ground truth")
    e.add_argument("--fits", nargs="+", required=True)
    e.add_argument("--truth", nargs="+", required=True)
    e.add_argument("--method", choices=["binder", "pam", "vi"], default=None)
    e.add_argument("--kmax", type=int, default=10)
    e.add_argument("--out", required=True)

    d = sub.add_parser("diagnose", help="Gelman-Rubin statistics, swap rates and timings")
    d.add_argument("--fits", nargs="+", required=True)
    d.add_argument("--out", required=True)

    r = sub.add_parser("report", help="cluster summaries and heatmap codes")
    r.add_argument("--fit", required=True)
    r.add_argument("--data", default=None)
    r.add_argument("--method", choices=["binder", "pam", "vi"], default=None)
    r.add_argument("--kmax", type=int, default=10)
    r.add_argument("--out", required=True)

    rr = sub.add_parser("rerun", help="replay a run from its manifest")
    rr.add_argument("manifest")
    rr.add_argument("--out", default=None)

    for name, fn in _COMMANDS:
        sub.choices[name].set_defaults(func=fn)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CapExceeded as exc:
        print(f"cluster cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except DomainError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BPRMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
