"""Sign of the leading exponent across the four parameter regimes.

The balance between the linear rate nu and the noise size sigma decides
whether nearby trajectories separate or contract.  The script runs a
small ensemble in each regime at eps = 0.1 and prints the fraction of
paths with a negative exponent, for the full model and for the reduced
amplitude equation side by side.  The deterministic case is also checked
against the closed-form solution of the reduced flow.
"""

from ftle_spde.amplitude import ae_deterministic_ftle_closed, derive_Fc
from ftle_spde.experiments import REGIME_CASES, get_model, regime_study
from ftle_spde.integrate import SimParams


def main():
    eps = 0.1
    print("case            nu       sigma    frac(lam<0)  frac(lam_ae<0)")
    reports = {}
    for case in REGIME_CASES:
        rep = regime_study(case, "burgers", 16, eps, n_paths=24, seed=7,
                           horizon_slow=1.0, dt=0.01)
        reports[case] = rep
        neg = rep.fractions["spde_negative"]["fraction"]
        neg_ae = rep.fractions["ae_negative"]["fraction"]
        print(f"{case:13s}  {rep.nu:+7.4f}  {rep.sigma:7.4f}  "
              f"{neg:11.2f}  {neg_ae:14.2f}")

    model = get_model("burgers", 16)
    cubic = derive_Fc(model)
    params = SimParams(eps=eps, nu=eps ** 2, sigma=0.0, dt=0.01)
    lam_closed = ae_deterministic_ftle_closed(cubic, params, 0.5, 1.0)
    lam_path = reports["deterministic"].lam_ae[0]
    print(f"\ndeterministic reduced exponent: path {lam_path:.6f}, "
          f"closed form {lam_closed:.6f}")
    print("stable contracts, unstable expands, the noisy cases sit between")


if __name__ == "__main__":
    main()
