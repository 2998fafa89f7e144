"""Monte Carlo experiment driver behind the ``mchtp`` command line.

Trial ``i`` uses seed ``base_seed + i`` for the instance and for MCHTP's
sparsity draws, so any trial can be replayed on its own. Results are
collected in trial order, which keeps every artifact independent of the
number of worker processes.
"""
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import algorithms as alg
from .analysis import (
    audit_least_squares,
    audit_nesting,
    audit_selection,
    chain_simulate_T1_T3,
    detect_phases,
    empirical_pmf,
    phase1_monotone,
    phase_structure_ok,
    roundoff_allowance,
    theoretical_pmf,
    tv_distance,
)
from .problem import (
    SignalStructure,
    gen_signal,
    gen_tight_frame,
    generate_instance,
    instance_to_dict,
    make_instance,
    signal_ratio,
)
from .theory import (
    best_support_exhaustive,
    build_ric_table,
    decay_bound_check,
    delta_bound,
    epsilon_bound,
    ric_bruteforce,
    t1_mean_exact,
)
from .trace import trace_rows, write_csv

__all__ = [
    "ExperimentConfig",
    "SUCCESS_MSD",
    "run_trial",
    "run_experiment",
    "write_artifacts",
    "validate_experiment",
    "chain_experiment",
    "oracle_study",
]

SUCCESS_MSD = 1e-12
MODES = ("benchmark", "validate")


@dataclass
class ExperimentConfig:
    M: int = 256
    N: int = 512
    K: tuple = (30,)
    structure: str = "gaussian"
    alpha: float = None
    norm: float = 1.0
    algos: tuple = ("mchtp", "htp", "ghtp")
    kbar: int = None
    mu: float = None
    eps: object = "auto"
    T: int = 1000
    trials: int = 50
    seed: int = 0
    noise_std: float = 0.0
    tol: float = 0.0
    early_stop: bool = False
    out: str = "results"
    jobs: int = 1
    mode: str = "benchmark"
    timing: bool = False
    full_traces: bool = False
    write_traces: bool = True
    chain_trials: int = 10000

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def resolved(self):
        """Copy with defaults filled in and mode rules applied."""
        ks = (self.K,) if isinstance(self.K, int) else tuple(int(k) for k in self.K)
        cfg = replace(self, K=ks, algos=tuple(self.algos))
        if cfg.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if cfg.kbar is None:
            cfg = replace(cfg, kbar=cfg.M // 2)
        if cfg.mode == "validate":
            cfg = replace(cfg, mu=1.0, noise_std=0.0, early_stop=False)
        elif cfg.mu is None:
            cfg = replace(cfg, mu=0.3)
        if cfg.eps != "auto":
            cfg = replace(cfg, eps=float(cfg.eps))
        bad = set(cfg.algos) - set(alg.ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms: {sorted(bad)}")
        if cfg.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 1 <= cfg.M <= cfg.N:
            raise ValueError("need 1 <= M <= N")
        for k in ks:
            if not 1 <= k <= cfg.N:
                raise ValueError(f"K={k} outside [1, N]")
        alg.AlgoConfig(kbar=cfg.kbar, mu=cfg.mu, T=cfg.T, tol=cfg.tol).validate(cfg.M, cfg.N)
        return cfg

    def structure_obj(self):
        return SignalStructure(self.structure, self.alpha, self.norm)

    def to_dict(self):
        d = asdict(self)
        d["K"] = list(self.K)
        d["algos"] = list(self.algos)
        return d

    def artifact_dict(self):
        """Config as embedded in outputs; worker count and output path are left
        out so artifacts do not depend on them."""
        d = self.to_dict()
        del d["jobs"], d["out"]
        return d


def _eps_value(cfg, eps_override=None):
    if eps_override is not None:
        return eps_override
    return None if cfg.eps == "auto" else cfg.eps


def _run_algo(name, inst, K, cfg, seed, eps=None):
    common = dict(kbar=cfg.kbar, mu=cfg.mu, T=cfg.T, seed=seed, tol=cfg.tol,
                  early_stop=cfg.early_stop)
    if name == "mchtp":
        return alg.run_mchtp(inst, alg.AlgoConfig(eps=_eps_value(cfg, eps), **common))
    config = alg.AlgoConfig(**common)
    if name == "htp":
        return alg.run_htp(inst, K, config)
    if name == "ghtp":
        return alg.run_ghtp(inst, config)
    if name == "sp":
        return alg.run_sp(inst, K, config)
    return alg.run_msp(inst, config)


def run_trial(cfg, K, trial):
    """Run every configured algorithm on trial ``trial``; returns plain data only."""
    seed = cfg.seed + trial
    inst = generate_instance(cfg.M, cfg.N, K, cfg.structure_obj(), seed, cfg.noise_std)
    out = {"K": K, "trial": trial, "seed": seed, "algos": {}}
    for name in cfg.algos:
        trace = _run_algo(name, inst, K, cfg, seed)
        rows = trace_rows(trace, inst.x, cfg.timing)
        final_msd = rows[-1]["msd"] if rows else float(inst.x @ inst.x) / cfg.N
        entry = {
            "rows": [{"t": r["t"], "msd": r["msd"], "residual": r["residual"],
                      "sparsity": r["K_t"]} for r in rows],
            "final_msd": final_msd,
            "final_sparsity": trace.final_sparsity,
            "iterations": len(trace),
            "wall_us": sum(r.elapsed_us or 0.0 for r in trace.records),
        }
        if name == "mchtp":
            entry["phases"] = detect_phases(trace, K).to_dict()
            entry["three_phase"] = phase_structure_ok(trace, K)
            slack = roundoff_allowance(inst.y)
            entry["audit"] = {
                "selection": len(audit_selection(trace, trace.info["eps"], slack)),
                "nesting": len(audit_nesting(trace, slack)),
            }
        if name == "msp":
            entry["converged"] = trace.info["converged"]
            entry["cumulative_iterations"] = trace.info["cumulative_iterations"]
        if cfg.write_traces:
            doc = trace.to_dict(cfg.full_traces, cfg.timing)
            doc["instance"] = instance_to_dict(inst)
            doc["experiment"] = cfg.artifact_dict()
            entry["trace_json"] = json.dumps(doc, sort_keys=True)
        out["algos"][name] = entry
    return out


def _trial_job(args):
    cfg_dict, K, trial = args
    return run_trial(ExperimentConfig(**cfg_dict), K, trial)


def _map_trials(cfg, jobs):
    work = [(cfg.to_dict(), K, i) for K in cfg.K for i in range(cfg.trials)]
    for w in work:
        w[0]["K"] = tuple(w[0]["K"])
        w[0]["algos"] = tuple(w[0]["algos"])
    if jobs <= 1:
        return [_trial_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_job, work))


def _stats(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {"mean": None, "median": None}
    return {"mean": float(arr.mean()), "median": float(np.median(arr))}


def summarize(cfg, results):
    summary = {}
    for K in cfg.K:
        per_k = [r for r in results if r["K"] == K]
        block = {}
        for name in cfg.algos:
            entries = [r["algos"][name] for r in per_k]
            msds = [e["final_msd"] for e in entries]
            stats = {
                "final_msd": _stats(msds),
                "success_rate": float(np.mean([m <= SUCCESS_MSD for m in msds])),
                "sparsity_accuracy": float(np.mean([e["final_sparsity"] == K for e in entries])),
                "iterations": _stats([e["iterations"] for e in entries]),
            }
            if cfg.timing:
                stats["wall_ms"] = _stats([e["wall_us"] / 1e3 for e in entries])
            if name == "mchtp":
                ws = [e["phases"]["W"] for e in entries if e["phases"]["converged"]]
                stats["waiting_time"] = _stats(ws)
                stats["three_phase_rate"] = float(np.mean([e["three_phase"] for e in entries]))
                stats["audit_violations"] = sum(e["audit"]["selection"] + e["audit"]["nesting"]
                                                for e in entries)
            if name == "msp":
                stats["cumulative_iterations"] = _stats(
                    [e["cumulative_iterations"] for e in entries])
            block[name] = stats
        summary[str(K)] = block
    return summary


def _pmf_rows(cfg, results):
    rows = []
    for K in cfg.K:
        entries = [r["algos"]["mchtp"]["phases"] for r in results
                   if r["K"] == K and "mchtp" in r["algos"]]
        for which in ("T1", "T3"):
            samples = [p[which] for p in entries if p[which] is not None and p[which] >= 1]
            if not samples:
                continue
            emp = empirical_pmf(samples)
            theo = theoretical_pmf(which, K, cfg.kbar, max(emp))
            for v in sorted(set(emp) | set(theo)):
                rows.append({"K": K, "quantity": which, "value": v,
                             "empirical": emp.get(v, 0.0), "theoretical": theo.get(v, 0.0)})
    return rows


def run_experiment(cfg, jobs=None):
    """Run all trials and return (resolved config, per-trial results, summary)."""
    cfg = cfg.resolved()
    results = _map_trials(cfg, cfg.jobs if jobs is None else jobs)
    return cfg, results, summarize(cfg, results)


def _header(cfg):
    return json.dumps({"config": cfg.artifact_dict()}, sort_keys=True)


def write_artifacts(cfg, results, summary, out=None):
    """Write summary.json, msd.csv, phases.csv, pmf.csv and per-trial traces."""
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)
    header = _header(cfg)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump({"config": cfg.artifact_dict(), "seeds": [cfg.seed + i for i in range(cfg.trials)],
                   "summary": summary}, fh, sort_keys=True, indent=2)
        fh.write("\n")

    msd_rows, phase_rows = [], []
    for r in results:
        for name, e in r["algos"].items():
            for row in e["rows"]:
                msd_rows.append({"K": r["K"], "trial": r["trial"], "algo": name, **row})
            if name == "mchtp":
                phase_rows.append({"K": r["K"], "trial": r["trial"], **e["phases"]})
            if "trace_json" in e:
                tag = f"K{r['K']}_" if len(cfg.K) > 1 else ""
                path = os.path.join(out, f"trace_{tag}{r['trial']}_{name}.json")
                with open(path, "w") as fh:
                    fh.write(e["trace_json"] + "\n")
    write_csv(os.path.join(out, "msd.csv"),
              ["K", "trial", "algo", "t", "msd", "residual", "sparsity"], msd_rows, header)
    write_csv(os.path.join(out, "phases.csv"),
              ["K", "trial", "T1", "T2", "T3", "W", "converged"], phase_rows, header)
    write_csv(os.path.join(out, "pmf.csv"),
              ["K", "quantity", "value", "empirical", "theoretical"],
              _pmf_rows(cfg, results), header)
    return out


# ---------------------------------------------------------------- validate


def _check(name, status, **details):
    return {"check": name, "status": status, **details}


def _validate_trial(cfg, K, trial, selector=None, max_supports=10**6):
    seed = cfg.seed + trial
    inst = generate_instance(cfg.M, cfg.N, K, cfg.structure_obj(), seed, 0.0)
    order = 2 * cfg.kbar + K
    table = build_ric_table(inst.phi, order, max_supports=max_supports, seed=seed)
    x_min, x_max, ratio = signal_ratio(inst.x)
    delta_hat = table[order]
    guaranteed = False
    eps_bound = None
    if delta_hat < delta_bound(K, ratio):
        eps_bound = epsilon_bound(delta_hat, K, x_min, x_max)
        guaranteed = table.is_exact(order)
    if cfg.eps == "auto":
        eps = 0.5 * eps_bound if eps_bound is not None else None
    else:
        eps = cfg.eps
        guaranteed = guaranteed and eps < eps_bound
    config = alg.AlgoConfig(kbar=cfg.kbar, mu=1.0, eps=eps, T=cfg.T, seed=seed)
    trace = alg.run_mchtp(inst, config, selector=selector)
    slack = roundoff_allowance(inst.y)
    eps_used = trace.info["eps"]

    decay = decay_bound_check(trace, inst, table)
    sel_bad = audit_selection(trace, eps_used, slack)
    nest_bad = audit_nesting(trace, slack)
    ls_bad = audit_least_squares(trace, inst.phi, inst.y)
    mono = phase1_monotone(trace, K)
    rep = detect_phases(trace, K)
    after = rep.T1 is None or all(k >= K for k in trace.sparsities[rep.T1 - 1:])

    checks = [
        _check("decay_inequality",
               "pass" if decay.passed else ("fail" if decay.certified else "inconclusive"),
               **decay.to_dict()),
        _check("selection_rule", "fail" if sel_bad else "pass", violations=sel_bad),
        _check("candidate_nesting", "fail" if nest_bad else "pass", violations=nest_bad),
        _check("least_squares_optimality", "fail" if ls_bad else "pass", violations=ls_bad),
    ]
    for name, ok in (("phase1_monotone", mono), ("sparsity_stays_above_K", after)):
        if guaranteed:
            checks.append(_check(name, "pass" if ok else "fail"))
        else:
            checks.append(_check(name, "info", observed=bool(ok), note="not guaranteed"))
    return {
        "trial": trial, "seed": seed, "K": K, "eps": eps_used, "delta_hat": delta_hat,
        "delta_hat_exact": table.is_exact(order), "eps_bound": eps_bound,
        "guaranteed": guaranteed, "phases": rep.to_dict(),
        "final_sparsity": trace.final_sparsity, "ric": table.to_dict(), "checks": checks,
    }


def chain_experiment(K, kbar, trials, seed=0):
    """Chain simulation of T1 / T3 against their closed-form laws."""
    t1, t3 = chain_simulate_T1_T3(K, kbar, trials, seed)
    out = {"K": K, "kbar": kbar, "trials": trials, "seed": seed, "pmf_rows": []}
    for which, samples in (("T1", t1), ("T3", t3)):
        emp = empirical_pmf(samples)
        theo = theoretical_pmf(which, K, kbar, max(emp))
        tail = 1.0 - sum(theo.values())
        theo_full = dict(theo)
        out[which] = {
            "tv": tv_distance(emp, theo_full) + 0.5 * max(tail, 0.0),
            "empirical_mean": float(np.mean(samples)),
        }
        for v in sorted(set(emp) | set(theo)):
            out["pmf_rows"].append({"K": K, "quantity": which, "value": v,
                                    "empirical": emp.get(v, 0.0),
                                    "theoretical": theo.get(v, 0.0)})
    out["T1"]["theoretical_mean"] = t1_mean_exact(K, kbar)
    out["T3"]["theoretical_mean"] = float(kbar - 1)
    return out


def validate_experiment(cfg, selector=None, max_supports=10**6):
    """Run the invariant suite on small instances; returns a JSON-ready report."""
    cfg = replace(cfg, mode="validate").resolved()
    trials = [_validate_trial(cfg, K, i, selector, max_supports)
              for K in cfg.K for i in range(cfg.trials)]
    counts = {}
    for tr in trials:
        for c in tr["checks"]:
            counts.setdefault(c["check"], {}).setdefault(c["status"], 0)
            counts[c["check"]][c["status"]] += 1
    chains = [chain_experiment(K, cfg.kbar, cfg.chain_trials, cfg.seed) for K in cfg.K]
    pmf_checks = []
    for ch in chains:
        pmf_checks.append(_check(f"T1_law_K{ch['K']}", "pass" if ch["T1"]["tv"] < 0.05 else "fail",
                                 tv=ch["T1"]["tv"]))
        pmf_checks.append(_check(f"T3_law_K{ch['K']}", "pass" if ch["T3"]["tv"] < 0.02 else "fail",
                                 tv=ch["T3"]["tv"]))
    failed = any(c["status"] == "fail" for tr in trials for c in tr["checks"]) or \
        any(c["status"] == "fail" for c in pmf_checks)
    return {
        "config": cfg.artifact_dict(),
        "passed": not failed,
        "counts": counts,
        "pmf_checks": pmf_checks,
        "trials": trials,
    }


# ---------------------------------------------------------------- toy oracle


def oracle_study(M=8, N=12, K=2, count=200, delta_max=0.95, seed=0, kbar=4, T=300,
                 converge_rel=1e-20, atol=1e-8):
    """Compare exhaustive best-support search with HTP and MCHTP on toy instances.

    An instance counts as well-conditioned when its matrix is a unit-column
    near-tight frame with exact delta_{2K} <= ``delta_max`` (every 2K columns
    comfortably independent, so the best K-sparse fit is unique). Candidates
    are drawn with increasing seeds until ``count`` pass. MCHTP counts as
    converged when it ends at sparsity K with residual energy at most
    ``converge_rel * ||y||^2``. Step size is 1.
    """
    structure = SignalStructure("gaussian")
    rows = []
    draw = seed
    while len(rows) < count:
        s_phi, s_x = (int(v) for v in np.random.SeedSequence(draw).generate_state(2))
        draw += 1
        phi = gen_tight_frame(M, N, s_phi)
        d2k = ric_bruteforce(phi, 2 * K)
        if d2k > delta_max:
            continue
        inst = make_instance(phi, gen_signal(N, K, structure, s_x), 0.0, draw - 1, structure)
        x_best, _ = best_support_exhaustive(phi, inst.y, K)
        htp = alg.run_htp(inst, K, alg.AlgoConfig(kbar=kbar, mu=1.0, T=T))
        mc = alg.run_mchtp(inst, alg.AlgoConfig(kbar=kbar, mu=1.0, T=T, seed=draw - 1))
        y2 = float(inst.y @ inst.y)
        converged = mc.final_sparsity == K and mc.final.residual <= converge_rel * y2
        rows.append({
            "seed": draw - 1,
            "delta_2k": d2k,
            "oracle_exact": bool(np.allclose(x_best, inst.x, atol=atol)),
            "htp_agrees": bool(np.allclose(htp.x_hat, x_best, atol=atol)),
            "mchtp_converged": bool(converged),
            "mchtp_agrees": bool(converged and np.allclose(mc.x_hat, x_best, atol=atol)),
            "mchtp_final_sparsity": mc.final_sparsity,
        })
    n_conv = sum(r["mchtp_converged"] for r in rows)
    return {
        "instances": len(rows),
        "candidates_drawn": draw - seed,
        "oracle_exact_rate": float(np.mean([r["oracle_exact"] for r in rows])),
        "htp_agreement": float(np.mean([r["htp_agrees"] for r in rows])),
        "mchtp_converged_rate": n_conv / len(rows),
        "mchtp_agreement": (sum(r["mchtp_agrees"] for r in rows) / n_conv) if n_conv else None,
        "mchtp_agreement_all": float(np.mean([r["mchtp_agrees"] for r in rows])),
        "rows": rows,
    }
