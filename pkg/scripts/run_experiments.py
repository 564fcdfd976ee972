"""Fit every chain the acceptance suite needs and store it in the run cache.

    python3 scripts/run_experiments.py                 # both designs, seeds 1-5
    python3 scripts/run_experiments.py --design sim-1 --seeds 1 2 --kinds rj

Runs already in the cache are skipped, so the script can be interrupted and
restarted.
"""
import argparse
import time

from incomemix import experiments as ex

REQUIRED = {"sim-1": ("rj", "fixed3", "gb2"), "sim-2": ("rj", "gb2")}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--design", choices=sorted(ex.DGPS), nargs="*", default=sorted(ex.DGPS))
    ap.add_argument("--seeds", type=int, nargs="*", default=[1, 2, 3, 4, 5])
    ap.add_argument("--kinds", nargs="*", choices=ex.KINDS, default=None)
    args = ap.parse_args()
    print(f"cache: {ex.cache_root()} (rj {ex.fingerprint('rj')}, gb2 {ex.fingerprint('gb2')})", flush=True)
    # cheap GB2 runs first, then the reversible-jump chains
    jobs = [(d, s, k) for k in ("gb2", "fixed3", "rj") for d in args.design for s in args.seeds
            if k in (args.kinds or REQUIRED[d]) and k in REQUIRED[d]]
    for design, seed, kind in jobs:
        path = ex.run_path(design, seed, kind)
        if path.exists():
            print(f"cached  {path.name}", flush=True)
            continue
        t0 = time.time()
        draws = ex.run(design, seed, kind)
        print(f"done    {path.name}: {len(draws)} draws in {time.time() - t0:.0f}s", flush=True)


if __name__ == "__main__":
    main()
