"""Knot RMS error against Monte Carlo timestep and path count.

    python scripts/convergence.py [--domain 50] [--m 10] [--pairs 0.015:1000 0.005:5000]

Each pair ``h:N`` is one full solve on the same cover; the table shows the
RMS error and GMRES iterations.
"""
import argparse

from circdd.cli import RunConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domain", type=float, default=50.0, help="half width of the square")
    ap.add_argument("--m", type=int, default=10, help="circles per side")
    ap.add_argument("--pairs", nargs="+", default=["0.015:1000", "0.015:5000", "0.005:5000"])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    d = args.domain
    print(f"{'h':>8s} {'paths':>7s} {'RMS':>10s} {'max':>10s} {'GMRES':>6s} {'seconds':>8s}")
    for pair in args.pairs:
        h, n = pair.split(":")
        cfg = RunConfig(domain=[-d, d, -d, d], m_per_side=args.m, h=float(h), n_paths=int(n),
                        workers=args.workers, condition_number=False)
        s = run(cfg, write=False).stats
        print(f"{float(h):8.4f} {int(n):7d} {s.rms_error:10.3e} {s.max_error:10.3e} "
              f"{s.gmres_iterations:6d} {s.timings['total']:8.1f}")


if __name__ == "__main__":
    main()
