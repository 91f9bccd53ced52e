#!/usr/bin/env python3
"""Run the paired directional-trend experiment and save the results.

Trains MAVER with and without shaping, MMR, REINFORCE and off-policy PG
over several seeds on a synthetic corpus, then reports the four expected
orderings (accuracy, spurious-program audit, stability, sampling policy).
"""
import argparse
import json

from denoparse.experiments import TrendsConfig, directional_trends


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--sequences", type=int, default=50)
    ap.add_argument("--corpus-seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--beam", type=int, default=12)
    ap.add_argument("--out", default="trends.json")
    args = ap.parse_args()

    result = directional_trends(TrendsConfig(
        n_seeds=args.seeds, sequences=args.sequences,
        corpus_seed=args.corpus_seed, epochs=args.epochs, beam_size=args.beam))
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2, sort_keys=True)
    for name, check in result["checks"].items():
        status = "ok" if check["passed"] else "FAILED"
        print(f"{status:6s} {name}: {json.dumps({k: v for k, v in check.items() if k != 'passed'})}")
    print(f"elapsed {result['elapsed_seconds']:.0f}s; details in {args.out}")
    return 0 if result["all_passed"] else 1


if __name__ == "__main__":
    raise SystemExit(main())
