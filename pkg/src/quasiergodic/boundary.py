"""Exit/entrance classification of the boundaries 0 and +inf.

Four improper integrals decide everything:

* ``Lambda(inf)`` must diverge and ``kappa(0+)`` must be finite (h1),
* ``mu(0, 1)`` must diverge (h2),
* ``S = int_1^inf e^Q(y) mu([y, inf)) dy`` must be finite (h3).

Zero is an exit boundary iff h1 and h2 hold; infinity is an entrance
boundary iff h1 and h3 hold.
"""
from dataclasses import dataclass
import json

from .coeffs import DEFAULT_SETTINGS, entrance_integral, kappa_at_zero, scale_at_infinity, speed_mass_near_zero
from .errors import QuadratureFailed

__all__ = ["BoundaryReport", "check_hypothesis_H", "classify"]


def classify(h1, h2, h3):
    """``(zero_class, infinity_class)`` as a pure function of the three flags."""
    zero = "exit" if (h1 and h2) else "not-exit"
    infinity = "entrance" if (h1 and h3) else "not-entrance"
    return zero, infinity


@dataclass(frozen=True)
class BoundaryReport:
    scale_at_infinity: object
    kappa_at_zero: object
    speed_near_zero: object
    entrance_integral: object
    label: str = ""

    @property
    def h1_scale_divergent(self):
        return not self.scale_at_infinity.finite

    @property
    def h1_kappa_finite(self):
        return self.kappa_at_zero.finite

    @property
    def h1(self):
        return self.h1_scale_divergent and self.h1_kappa_finite

    @property
    def h2(self):
        return not self.speed_near_zero.finite

    @property
    def h3(self):
        return self.entrance_integral.finite

    @property
    def zero_class(self):
        return classify(self.h1, self.h2, self.h3)[0]

    @property
    def infinity_class(self):
        return classify(self.h1, self.h2, self.h3)[1]

    @property
    def holds(self):
        """Whether all of h1, h2, h3 hold."""
        return self.h1 and self.h2 and self.h3

    def to_dict(self):
        return {
            "model": self.label,
            "h1": self.h1,
            "h1_detail": {"scale_at_infinity_divergent": self.h1_scale_divergent,
                          "kappa_at_zero_finite": self.h1_kappa_finite},
            "h2": self.h2,
            "h3": self.h3,
            "zero_class": self.zero_class,
            "infinity_class": self.infinity_class,
            "hypothesis_H": self.holds,
            "evidence": {
                "scale_at_infinity": self.scale_at_infinity.to_dict(),
                "kappa_at_zero": self.kappa_at_zero.to_dict(),
                "speed_mass_near_zero": self.speed_near_zero.to_dict(),
                "entrance_integral": self.entrance_integral.to_dict(),
            },
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def check_hypothesis_H(d, s=DEFAULT_SETTINGS):
    """Evaluate the four integrals and assemble a :class:`BoundaryReport`.

    A :class:`QuadratureFailed` raised by any of them is re-raised with its
    ``integral`` attribute set to the failing integral's name.
    """
    steps = (
        ("scale_at_infinity", scale_at_infinity),
        ("kappa_at_zero", kappa_at_zero),
        ("speed_mass_near_zero", speed_mass_near_zero),
        ("entrance_integral", entrance_integral),
    )
    verdicts = []
    for name, fn in steps:
        try:
            verdicts.append(fn(d, s))
        except QuadratureFailed as exc:
            raise QuadratureFailed(f"{name}: {exc}", partial=exc.partial, integral=name) from exc
    return BoundaryReport(*verdicts, label=d.label)
