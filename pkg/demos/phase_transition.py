"""Monte Carlo view of the phase transition in the conditioned marginals.

Paths that survive to time t look like nu_1 at intermediate times qt
(0 < q < 1) but like nu_2 at the final time. A 50 000-path ensemble is
enough to see the effect; ``quasiergodic verify`` runs the full-size check.
"""
from quasiergodic import distributions as D
from quasiergodic.mc import SimConfig, conditional_marginal, simulate_killed
from quasiergodic.models import feller
from quasiergodic.spectral import solve_model

d = feller()
sol = solve_model(d, k=8)
nu1, nu2 = D.qed_measure(sol), D.qsd_measure(sol)
t = 15.0 / sol.gap
qs = (0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
cfg = SimConfig(n_paths=50_000, seed=42).with_times(*(q * t for q in qs))
ens = simulate_killed(d, 1.0, cfg, sol.grid)
print(f"t = {t:.2f}, survivors {ens.survivors(t)} of {ens.n_paths}")
for q in qs:
    est = conditional_marginal(d, None, q, t, cfg, summary=ens)
    a = D.coarse_tv(est.histogram, nu1, nu1, 10)
    b = D.coarse_tv(est.histogram, nu2, nu1, 10)
    print(f"q = {q:.1f}: mean {est.value:.4f} +- {est.std_error:.4f}   TV to nu1 {a:.3f}   TV to nu2 {b:.3f}")
