"""Which drifts make 0 an exit boundary and infinity an entrance boundary?

Runs the four improper-integral tests on a few registry models and prints the
verdicts together with the partial integrals that decided them.
"""
from quasiergodic.boundary import check_hypothesis_H
from quasiergodic.models import constant_drift, feller, power_drift

models = {
    "logistic Feller (1, 1, 1)": feller(),
    "Brownian motion": constant_drift(0.0),
    "Ornstein-Uhlenbeck pull, alpha = x": power_drift(b=1.0),
    "alpha = 1/(2x) + x^3": power_drift(a=0.5, d=1.0),
}

for name, d in models.items():
    rep = check_hypothesis_H(d)
    print(f"{name:38s} zero: {rep.zero_class:9s} infinity: {rep.infinity_class:13s} H holds: {rep.holds}")
    s = rep.entrance_integral
    tail = ", ".join(f"{v:.6g}" for v in s.evidence[-3:])
    print(f"{'':38s} entrance integral {s.kind} ({s.reason}); last partials {tail}")
