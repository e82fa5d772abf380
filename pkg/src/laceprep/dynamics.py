"""Dense time evolution of a Rydberg ring under ``H = sum Omega/2 X - h/2 Z + V/4 sum v_ij ZZ``.

Units
-----
Times are in ns.  Every frequency quoted in "MHz" (Rabi frequency, field,
V(a)) is an angular frequency in rad/us, i.e. ``H t`` in radians is
``value_MHz * 1e-3 * t_ns`` with no factor of 2 pi.  This is the only reading
under which ``Omega = pi / (2 t_pulse)`` at 20 ns comes out near 78 MHz and
``V(10 um) = U6 / a^6`` near 5 MHz.  ``MHZ_NS`` below is the single place the
conversion happens.

The atomic ground state is ``Z = -1`` (bit 1 in the little-endian index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import analytic
from .errors import ConvergenceFailure
from .lattice import Lattice, build_lattice, coupling_model

MHZ_NS = 1e-3  # radians per (MHz * ns)
MAX_SITES = 20


@dataclass(frozen=True)
class PhysicalParams:
    U6: float = 5.0  # THz um^6
    a: float = 12.0  # um
    t_pulse: float = 5.0  # ns
    omega: float | None = None  # MHz; None means pi / (2 t_pulse)
    h: float | None = None  # MHz; None means -pi / (2 t_pulse)
    species: str = "single"

    def __post_init__(self) -> None:
        if self.U6 <= 0 or self.a <= 0:
            raise ValueError("U6 and a must be positive")
        if self.t_pulse < 0:
            raise ValueError("t_pulse must be >= 0")
        if self.species not in ("single", "dual"):
            raise ValueError("species must be 'single' or 'dual'")

    @property
    def V(self) -> float:
        """Nearest-neighbour interaction U6 / a^6 in MHz (U6 in THz um^6)."""
        return self.U6 * 1e6 / self.a**6

    @property
    def t_spt(self) -> float:
        """pi / V(a) in ns."""
        return math.pi / (self.V * MHZ_NS)

    @property
    def pulse_omega(self) -> float:
        if self.omega is not None:
            return self.omega
        return math.pi / (2 * self.t_pulse) / MHZ_NS

    @property
    def pulse_h(self) -> float:
        if self.h is not None:
            return self.h
        return -math.pi / (2 * self.t_pulse) / MHZ_NS

    def to_dict(self) -> dict:
        return {"U6": self.U6, "a": self.a, "t_pulse": self.t_pulse, "omega": self.omega, "h": self.h, "species": self.species}


@dataclass(frozen=True)
class ScheduleStep:
    kind: str  # free_evolve | x_pulse | z_pulse
    duration: float  # ns
    strength: float = 0.0  # MHz: Omega for x_pulse, h for z_pulse
    targets: frozenset | None = None  # sublattice labels; None means every site

    def __post_init__(self) -> None:
        if self.kind not in ("free_evolve", "x_pulse", "z_pulse"):
            raise ValueError(f"unknown step kind {self.kind!r}")
        if not math.isfinite(self.strength):
            raise ValueError("step strength must be finite")
        if self.duration < 0:
            raise ValueError("step duration must be >= 0")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "duration": self.duration,
            "strength": self.strength,
            "targets": sorted(self.targets) if self.targets is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleStep":
        t = d.get("targets")
        return cls(d["kind"], float(d["duration"]), float(d.get("strength", 0.0)), frozenset(t) if t is not None else None)


def methods_recipe(params: PhysicalParams, corrective: bool = True) -> list[ScheduleStep]:
    """X pulse, Z pulse, free evolution for ``t_SPT - 5/2 t_pulse`` and a weak corrective X pulse.

    The corrective pulse has ``Omega = -pi/(2 t_pulse) / 2^6`` and lasts ``t_pulse``: on the
    cluster state ``Z_{n-1} Z_{n+1}`` acts like ``X_n``, so this undoes the v_2 phases.
    """
    tp = params.t_pulse
    steps = [
        ScheduleStep("x_pulse", tp, params.pulse_omega),
        ScheduleStep("z_pulse", tp, params.pulse_h),
        ScheduleStep("free_evolve", params.t_spt - 2.5 * tp),
    ]
    if corrective:
        steps.append(ScheduleStep("x_pulse", tp, -math.pi / (2 * tp) / 2**6 / MHZ_NS))
    return steps


def ideal_recipe(params: PhysicalParams) -> list[ScheduleStep]:
    """Instantaneous preparation of ``|->`` followed by free evolution for t_SPT."""
    return [ScheduleStep("free_evolve", params.t_spt)]


# ---------------------------------------------------------------------------
# dense engine


def ring(N: int) -> Lattice:
    return build_lattice("chain", (N,))


class RingEngine:
    """Diagonal energies and single-site rotations on a periodic chain of ``N`` qubits."""

    def __init__(self, lattice: Lattice, params: PhysicalParams, r_max: float | None = None, nn_only: bool = False) -> None:
        n = lattice.n
        if n > MAX_SITES:
            raise ValueError(f"dense dynamics limited to {MAX_SITES} sites")
        self.lattice = lattice
        self.n = n
        self.params = params
        idx = np.arange(2**n)
        self.idx = idx
        self.z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
        if nn_only:
            pairs = [(i, j, 1.0) for i, j in lattice.protocol_edges]
        else:
            model = coupling_model(lattice, params.species, r_max if r_max is not None else float(n))
            ij, vv = model.pairs
            pairs = [(int(i), int(j), float(v)) for (i, j), v in zip(ij, vv)]
        self.pairs = pairs
        zz = np.zeros(2**n)
        for i, j, v in pairs:
            zz += v * self.z[:, i] * self.z[:, j]
        self.zz = 0.25 * params.V * zz  # MHz
        self.zsum = self.z.sum(axis=1)

    def masks(self, targets: frozenset | None) -> list[int]:
        subs = self.lattice.sublattices
        return [1 << q for q in range(self.n) if targets is None or subs[q] in targets]

    def ground(self) -> np.ndarray:
        psi = np.zeros(2**self.n, dtype=complex)
        psi[-1] = 1.0
        return psi

    def rotate_x(self, psi: np.ndarray, angle: float, masks: Iterable[int]) -> np.ndarray:
        """``prod exp(-i angle X_q)`` over the masked sites."""
        c, s = math.cos(angle), math.sin(angle)
        for m in masks:
            psi = c * psi - 1j * s * psi[self.idx ^ m]
        return psi

    def diag_phase(self, dt: float, h: float = 0.0, targets: frozenset | None = None, interactions: bool = True) -> np.ndarray:
        e = self.zz.copy() if interactions else np.zeros(2**self.n)
        if h:
            if targets is None:
                e = e - 0.5 * h * self.zsum
            else:
                for m in self.masks(targets):
                    q = m.bit_length() - 1
                    e = e - 0.5 * h * self.z[:, q]
        return np.exp(-1j * MHZ_NS * dt * e)

    def run(self, steps: Sequence[ScheduleStep], substeps: int, interactions: bool = True, psi0: np.ndarray | None = None, trace: bool = False):
        psi = self.ground() if psi0 is None else psi0.copy()
        t = 0.0
        rows = []
        for st in steps:
            if st.kind == "free_evolve":
                psi = psi * self.diag_phase(st.duration, interactions=True)
            elif st.kind == "z_pulse":
                psi = psi * self.diag_phase(st.duration, st.strength, st.targets, interactions)
            else:
                if st.duration > 0:
                    nsub = max(1, int(math.ceil(substeps * st.duration / max(self.params.t_pulse, 1e-12))))
                    dt = st.duration / nsub
                    half = self.diag_phase(0.5 * dt, interactions=interactions)
                    ang = 0.5 * st.strength * MHZ_NS * dt
                    masks = self.masks(st.targets)
                    for _ in range(nsub):
                        psi = half * psi
                        psi = self.rotate_x(psi, ang, masks)
                        psi = half * psi
            t += st.duration
            if trace:
                rows.append((t, psi.copy()))
        return (psi, rows) if trace else psi


def cluster_state(lattice: Lattice) -> np.ndarray:
    """``exp(-i pi/4 sum_<ij> Z Z) |->^N`` on the protocol graph."""
    n = lattice.n
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    ph = np.zeros(2**n)
    for i, j in lattice.protocol_edges:
        ph += z[:, i] * z[:, j]
    return 2.0 ** (-n / 2) * z.prod(axis=1) * np.exp(-0.25j * math.pi * ph)


def cluster_fidelity_per_site(state: np.ndarray, N: int, lattice: Lattice | None = None) -> float:
    """``|<cluster|psi>|^(2/N)``."""
    lat = lattice if lattice is not None else ring(N)
    ov = abs(np.vdot(cluster_state(lat), state)) ** 2
    return float(ov ** (1.0 / N))


def stabilizer_expectations(state: np.ndarray, lattice: Lattice) -> list[float]:
    """``<K_v>`` for the ideal cluster stabilizers (sign convention of ``analytic``)."""
    n = lattice.n
    idx = np.arange(2**n)
    z = 1 - 2 * ((idx[:, None] >> np.arange(n)) & 1)
    out = []
    for v in range(n):
        p = analytic.cluster_stabilizer(lattice, v, "minus")
        zm = np.ones(2**n)
        for q in p.z:
            zm = zm * z[:, q]
        xm = sum(1 << q for q in p.x)
        phi = (zm * state)[idx ^ xm] * (1j) ** p.phase
        out.append(float(np.vdot(state, phi).real))
    return out


# ---------------------------------------------------------------------------
# driver


@dataclass
class EvolutionResult:
    params: PhysicalParams
    N: int
    fidelity_per_site: float
    stabilizer: float
    substeps: int
    history: list[tuple[int, float]]
    norm_error: float
    state: np.ndarray = field(repr=False)
    trace: list[tuple[float, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "N": self.N,
            "V_MHz": self.params.V,
            "t_spt_ns": self.params.t_spt,
            "fidelity_per_site": self.fidelity_per_site,
            "stabilizer": self.stabilizer,
            "substeps_per_pulse": self.substeps,
            "convergence": [{"substeps": n, "fidelity_per_site": f} for n, f in self.history],
            "norm_error": self.norm_error,
        }

    def csv(self) -> str:
        lines = ["time_ns,fidelity_per_site,stabilizer"]
        for t, f, s in self.trace:
            lines.append(f"{t:.6f},{f:.12f},{s:.12f}")
        return "\n".join(lines) + "\n"


def evolve_chain(
    params: PhysicalParams,
    steps: Sequence[ScheduleStep] | None = None,
    N: int = 14,
    boundary: str = "periodic",
    tol: float = 1e-9,
    substeps: int = 8,
    max_substeps: int = 2**14,
    interactions_during_pulses: bool = True,
    r_max: float | None = None,
    nn_only: bool = False,
) -> EvolutionResult:
    """Run ``steps`` (default: the recipe) from the ground state; refine pulse substeps until converged."""
    if boundary != "periodic":
        raise ValueError("only periodic rings are supported")
    if N > MAX_SITES:
        raise ValueError(f"N must be <= {MAX_SITES}")
    if steps is None:
        steps = methods_recipe(params)
    lat = ring(N)
    eng = RingEngine(lat, params, r_max, nn_only)
    clus = cluster_state(lat)

    def fid(psi: np.ndarray) -> float:
        return float((abs(np.vdot(clus, psi)) ** 2) ** (1.0 / N))

    has_pulse = any(s.kind == "x_pulse" and s.duration > 0 for s in steps)
    history: list[tuple[int, float]] = []
    n = substeps
    psi = eng.run(steps, n, interactions_during_pulses)
    history.append((n, fid(psi)))
    while has_pulse:
        n2 = 2 * n
        if n2 > max_substeps:
            raise ConvergenceFailure(f"fidelity still changing after {n} substeps per pulse")
        psi2 = eng.run(steps, n2, interactions_during_pulses)
        history.append((n2, fid(psi2)))
        n, psi = n2, psi2
        if abs(history[-1][1] - history[-2][1]) < tol:
            break
    _, rows = eng.run(steps, n, interactions_during_pulses, trace=True)
    trace = [(t, fid(p), float(np.mean(stabilizer_expectations(p, lat)))) for t, p in rows]
    stab = float(np.mean(stabilizer_expectations(psi, lat)))
    return EvolutionResult(params, N, history[-1][1], stab, n, history, abs(float(np.linalg.norm(psi)) - 1.0), psi, trace)


def diagonal_limit_check(N: int = 14, params: PhysicalParams | None = None, r_max: float | None = None) -> dict:
    """Instantaneous preparation: dense stabilizers against ``analytic.exact_stabilizer_expectation``."""
    params = params or PhysicalParams()
    lat = ring(N)
    eng = RingEngine(lat, params, r_max)
    minus = 2.0 ** (-N / 2) * eng.z.prod(axis=1).astype(complex)
    psi = eng.run(ideal_recipe(params), 1, psi0=minus)
    dense = stabilizer_expectations(psi, lat)
    model = coupling_model(lat, params.species, r_max if r_max is not None else float(N))
    exact = []
    for v in range(N):
        spec = analytic.StabilizerSpec.from_pauli(analytic.cluster_stabilizer(lat, v, "minus"))
        exact.append(analytic.exact_stabilizer_expectation(model, None, spec, "minus"))
    return {
        "dense": dense,
        "analytic": exact,
        "max_deviation": float(max(abs(a - b) for a, b in zip(dense, exact))),
        "fidelity_per_site": cluster_fidelity_per_site(psi, N, lat),
    }


def with_pulse_time(params: PhysicalParams, t_pulse: float) -> PhysicalParams:
    return replace(params, t_pulse=t_pulse)
