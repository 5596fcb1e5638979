"""Hitting probabilities are linear in the scale function.

Compares simulated exit probabilities from (a, b) with the scale-function
formula, then evaluates the ultracontractivity suprema near the killed end in
both coordinate systems (the natural-scale value is twice the original one).
"""
from quasiergodic.iu import iu_criterion
from quasiergodic.mc import scale_hitting_test
from quasiergodic.models import feller

d = feller()
for y in (0.7, 1.0, 1.5):
    r = scale_hitting_test(d, 0.5, y, 2.0, 40_000, seed=1)
    print(f"start {y}: P(hit 0.5 first) = {r.p_hat:.4f}, scale formula {r.analytic:.4f}, z = {r.z_score:+.2f}")

rep = iu_criterion(d, q=3.0)
n, zn = rep.sup_near_zero, rep.z_sup_near_zero
print(f"near-zero sup: x-coordinates {n.value:.8f} at x = {n.argmax:.4f}; natural scale {zn.value:.8f} "
      f"(ratio {zn.value / n.value:.12f})")
print(f"sup at infinity: {rep.sup_at_infinity.kind} ({rep.sup_at_infinity.reason})")
