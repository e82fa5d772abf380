"""Golden numbers with their quoted precision, evaluated by the library."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

from . import analytic, pulse
from .lattice import coupling_model


@dataclass(frozen=True)
class Golden:
    key: str
    criterion: int
    quoted: float
    tol: float  # one unit in the last quoted digit; extents quoted to one digit get half a unit
    compute: Callable[[], float]
    relation: str = "close"  # close | ge | lt

    def evaluate(self) -> dict:
        got = float(self.compute())
        if self.relation == "ge":
            ok = got >= self.quoted - self.tol
        elif self.relation == "lt":
            ok = got < self.quoted
        else:
            ok = abs(got - self.quoted) <= self.tol
        return {"key": self.key, "criterion": self.criterion, "quoted": self.quoted, "tol": self.tol,
                "relation": self.relation, "value": got, "pass": bool(ok)}


def quoted_tol(text: str) -> float:
    """One unit in the last quoted digit of ``text``."""
    if "e" in text.lower():
        mant, exp = text.lower().split("e")
        return quoted_tol(mant) * 10 ** int(exp)
    if "." not in text:
        return 1.0
    return 10.0 ** -len(text.split(".")[1])


@lru_cache(maxsize=None)
def _report(kind: str, species: str, scheme: str | None = None) -> analytic.AnalyticReport:
    sched = pulse.NAMED_SCHEMES[scheme][0]() if scheme else None
    return analytic.analyze(kind, species, sched)


def _stab(kind: str, species: str, name: str, scheme: str | None = None) -> float:
    return abs(_report(kind, species, scheme).stab_expectations[name])


@lru_cache(maxsize=None)
def _xu_moore_factors(addressed: bool):
    lat = analytic.bulk_lattice("checkerboard_square")
    model = coupling_model(lat, "single", 6.0)
    stab = analytic.named_stabilizers(lat)["cluster"]
    sched = pulse.xu_moore_abcd() if addressed else None
    return analytic.shell_exponents(model, sched, stab)


def _g(key: str, crit: int, quoted: str, fn: Callable[[], float], relation: str = "close", tol: float | None = None) -> Golden:
    return Golden(key, crit, float(quoted), quoted_tol(quoted) if tol is None else tol, fn, relation)


def _dynamics_recipe() -> float:
    from . import dynamics

    return dynamics.evolve_chain(dynamics.PhysicalParams(a=12.0, t_pulse=5.0), N=14).fidelity_per_site


def _dynamics_ideal() -> float:
    from . import dynamics

    return dynamics.diagonal_limit_check(14)["fidelity_per_site"]


def _chain_obs() -> dict:
    return analytic.chain_exact_observables([1.0 / k**6 for k in range(1, 64)])


GOLDEN: list[Golden] = [
    _g("chain.xi_over_2a", 1, "2.154e5", lambda: analytic.chain_xi()),
    _g("chain.dual.stabilizer", 2, "0.999995", lambda: math.cos(math.pi / (2 * 3**6)) ** 2),
    _g("chain.dual.fidelity_bound", 2, "0.9999975", lambda: 0.5 * (1 + math.cos(math.pi / (2 * 3**6)) ** 2), tol=5e-7),
    _g("chain.single.fidelity_per_site", 3, "0.99985", lambda: _chain_obs()["fidelity_per_site"]),
    _g("chain.single.stabilizer", 3, "0.9994", lambda: _chain_obs()["stabilizer"]),
    _g("chain.single.xx", 3, "1e-10", lambda: abs(_chain_obs()["xx_expectation"]), "lt"),
    _g("honeycomb.A_v", 4, "0.99993", lambda: _stab("honeycomb_tc", "dual", "A_v")),
    _g("honeycomb.B_p", 4, "0.99987", lambda: _stab("honeycomb_tc", "dual", "B_p")),
    _g("honeycomb.fidelity_bound", 4, "0.9999", lambda: _report("honeycomb_tc", "dual").fidelity_per_site_lower_bound, "ge", 0.0),
    _g("honeycomb.order_extent", 4, "2e4", lambda: _report("honeycomb_tc", "dual").order_extent_atoms, tol=5e3),
    _g("square.order_extent", 4, "3e3", lambda: _report("lieb", "dual").order_extent_atoms, tol=5e2),
    _g("triangular.order_extent", 4, "3e2", lambda: _report("triangular_tc", "dual").order_extent_atoms, tol=50.0),
    _g("xu_moore.single", 5, "0.93", lambda: analytic.shell_product(_xu_moore_factors(False), [math.sqrt(2)])),
    _g("xu_moore.addressed.r2", 5, "0.9952", lambda: analytic.shell_product(_xu_moore_factors(True), [2.0])),
    _g("xu_moore.addressed", 5, "0.9945", lambda: analytic.shell_product(_xu_moore_factors(True), [2.0, math.sqrt(5), math.sqrt(8)])),
    _g("xu_moore.dual", 5, "0.9994", lambda: _stab("checkerboard_square", "dual", "cluster")),
    _g("color.A_v", 5, "0.998", lambda: _stab("dice", "dual", "A_v")),
    _g("color.B_p", 5, "0.994", lambda: _stab("dice", "dual", "B_p")),
    _g("diamond.A_v", 5, "0.9998", lambda: _stab("diamond_tc", "dual", "A_v")),
    _g("diamond.B_p", 5, "0.9996", lambda: _stab("diamond_tc", "dual", "B_p")),
    _g("xcube.A_v", 5, "0.957", lambda: _stab("fcc_xcube", "dual", "A_v")),
    _g("xcube.B_p", 5, "0.944", lambda: _stab("fcc_xcube", "dual", "B_p")),
    _g("fracton.dual.A_v", 6, "0.995", lambda: _stab("hex_prism_fracton", "dual", "A_v")),
    _g("fracton.dual.B_p", 6, "0.986", lambda: _stab("hex_prism_fracton", "dual", "B_p")),
    _g("fracton.tripartite.A_v", 6, "0.9985", lambda: _stab("hex_prism_fracton", "dual", "A_v", "fracton_tripartite")),
    _g("fracton.tripartite.B_p", 6, "0.997", lambda: _stab("hex_prism_fracton", "dual", "B_p", "fracton_tripartite")),
    _g("fracton.tripartite.fidelity_bound", 6, "0.998",
       lambda: _report("hex_prism_fracton", "dual", "fracton_tripartite").fidelity_per_site_lower_bound, "ge", 0.0),
    _g("dynamics.recipe_12um_5ns", 13, "0.999997", lambda: _dynamics_recipe(), tol=2e-5),
    _g("dynamics.ideal_ring_N14", 13, "0.99985", lambda: _dynamics_ideal(), tol=2e-5),
]


def run_suite(keys: list[str] | None = None) -> list[dict]:
    """Evaluate every golden number (or the selected keys)."""
    return [g.evaluate() for g in GOLDEN if not keys or g.key in keys]
