"""How well does the one-mode amplitude equation track the full model?

A single stochastic Burgers path and its reduced amplitude equation are
driven by the same noise stream.  The script prints the kernel amplitude
of the state next to the reduced path at a few slow times, then the sup
norms of the reduction error and of the running residual from the
stochastic chain-rule substitution.  Shrinking eps shrinks both.
"""

import numpy as np

from ftle_spde.experiments import EnsembleJob
from ftle_spde.integrate import SimParams


def run_one(eps, seed=7):
    params = SimParams(eps=eps, nu=eps ** 2, sigma=eps ** 2, dt=0.01)
    job = EnsembleJob(preset="burgers", n_modes=16, params=params,
                      seed=seed, horizon_slow=1.0, a0=(0.5,))
    run = job.run([0])
    traj = run.path(0)
    return traj, run.metrics


def main():
    for eps in (0.2, 0.1, 0.05):
        traj, metrics = run_one(eps)
        print(f"eps = {eps:g}")
        print("  T       U_c(T)     a(T)")
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            i = int(frac * (len(traj.times) - 1))
            print(f"  {traj.times[i]:4.2f}  {traj.states[i, 0]:9.5f}  "
                  f"{traj.ae[i, 0]:9.5f}")
        print(f"  sup |U_c - a|   = {metrics['sup_err_ca'][0]:.3e}")
        print(f"  sup |R_2|       = {metrics['sup_R2'][0]:.3e}")
        print(f"  sup ||U_s||     = {metrics['sup_norm_Us'][0]:.3e}")
        print()
    print("all three shrink with eps; the error roughly like eps itself")


if __name__ == "__main__":
    main()
