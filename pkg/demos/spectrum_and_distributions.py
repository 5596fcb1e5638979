"""Principal eigenpair of the killed Feller diffusion and the two limit laws.

nu_2 (quasi-stationary) weights the speed measure by eta_1, nu_1
(quasi-ergodic) by eta_1 squared, so nu_1 sits further from the killed end.
"""
import numpy as np

from quasiergodic import distributions as D
from quasiergodic.models import feller
from quasiergodic.spectral import count_sign_changes, richardson_lambda1, solve_model

d = feller()
sol = solve_model(d, n=2000, k=16)
print("lowest eigenvalues:", np.array2string(sol.eigenvalues[:6], precision=6))
print("sign changes of eta_1..eta_6:", [count_sign_changes(sol, n) for n in range(1, 7)])
r = richardson_lambda1(d, right_cut=sol.grid.right_cut)
print(f"lambda_1 at N = {r['sizes']}: {r['lambda1']}, extrapolated {r['richardson']:.10f}")

nu1, nu2 = D.qed_measure(sol), D.qsd_measure(sol)
print(f"mean of nu_1 = {nu1.mean():.6f}, mean of nu_2 = {nu2.mean():.6f}, TV = {D.tv_distance(nu1, nu2):.4f}")
y = D.pushforward_to_Y(nu1, gamma=1.0)
print(f"in the population coordinate Y = X^2/4 the quasi-ergodic mean is {y.mean():.6f}")

# a coarse text histogram of both laws
bounds = D.equal_mass_blocks(nu1, 12)
c1, c2 = D.coarsen(nu1, bounds), D.coarsen(nu2, bounds)
for x, a, b in zip(c1.nodes, c1.weights, c2.weights):
    print(f"x ~ {x:5.2f}  nu1 {'#' * int(200 * a):20s} nu2 {'#' * int(200 * b)}")
