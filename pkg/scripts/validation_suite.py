"""Run the checks that tie the implementation to the theory.

1. validate mode on a toy problem (selection, nesting, least squares, decay inequality)
2. Markov-chain simulation of the Phase I / Phase III laws
3. exhaustive-oracle comparison on well-conditioned toy instances
"""
import argparse
import json

from mchtp.experiment import ExperimentConfig, chain_experiment, oracle_study, validate_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--chain-trials", type=int, default=10000)
    ap.add_argument("--oracle-count", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rep = validate_experiment(ExperimentConfig(M=24, N=40, K=(3,), kbar=6, T=100,
                                               trials=args.trials, seed=args.seed,
                                               mode="validate"))
    print("validate:", "PASS" if rep["passed"] else "FAIL", json.dumps(rep["counts"], sort_keys=True))

    chain = chain_experiment(5, 20, args.chain_trials, seed=args.seed)
    for q in ("T1", "T3"):
        c = chain[q]
        print(f"chain {q}: TV {c['tv']:.4f}, mean {c['empirical_mean']:.2f} "
              f"(theory {c['theoretical_mean']:.2f})")

    orc = oracle_study(count=args.oracle_count, seed=args.seed)
    print(f"oracle: {orc['instances']} instances, HTP agreement {orc['htp_agreement']:.3f}, "
          f"MCHTP converged {orc['mchtp_converged_rate']:.3f}, "
          f"agreement when converged {orc['mchtp_agreement']:.3f}")


if __name__ == "__main__":
    main()
