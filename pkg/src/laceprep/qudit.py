"""Qubit/qutrit engines for the Z3 toric code, the S3 quantum double and the D4 state.

Conventions used throughout:

* ``omega = exp(+2 pi i / 3)``; ``Xs|j> = |j+1>``, ``Zc|j> = omega^j |j>``;
  ``C|j> = |-j>``; ``F|j> = 3^-1/2 sum_k omega^(jk) |k>``; ``CZ3|i,j> = omega^(ij)|i,j>``.
* Qutrit Pauli strings are ``omega^k Xs^a Zc^b`` with the shift written first.
* S3 elements are ``r^k s^a`` and are stored as qubit ``a`` times qutrit ``k``
  (index ``3a + k``); this makes ``L^r = I (x) Xs`` and ``R^s = X (x) I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.stats import chisquare

from . import gf2
from .clifford import prepare_cluster, site_coin
from .errors import DimensionCap, InfeasibleFrame, NonCliffordRequest, SynthesisMismatch
from .lattice import build_lattice

OMEGA = np.exp(2j * np.pi / 3)
DEFAULT_CAP = 2**24

# qutrit gates
XS = np.roll(np.eye(3), 1, axis=0)  # |j> -> |j+1>
ZC = np.diag([1, OMEGA, OMEGA**2])
CC = np.eye(3)[[0, 2, 1]]
F3 = np.array([[OMEGA ** (j * k) for j in range(3)] for k in range(3)]) / math.sqrt(3)
CZ3 = np.diag([OMEGA ** (i * j) for i in range(3) for j in range(3)])
# qubit gates
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Z2 = np.diag([1.0 + 0j, -1.0])
Y2 = np.array([[0, -1j], [1j, 0]])
H2 = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
CZ2 = np.diag([1.0 + 0j, 1, 1, -1])
PLUS2 = np.array([1, 1], dtype=complex) / math.sqrt(2)
PLUS3 = np.ones(3, dtype=complex) / math.sqrt(3)


def controlled(u: np.ndarray, ctrl_dim: int = 2) -> np.ndarray:
    """``|0><0| (x) I + |1><1| (x) u`` with the qubit control first."""
    d = u.shape[0]
    out = np.zeros((ctrl_dim * d, ctrl_dim * d), dtype=complex)
    out[:d, :d] = np.eye(d)
    out[d:, d:] = u
    return out


CONTROLLED_C = controlled(CC)


def kron(*ops: np.ndarray) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for o in ops:
        out = np.kron(out, o)
    return out


# ---------------------------------------------------------------------------
# dense mixed register


AMP_MAGIC = b"LPAMP\x00\x01\x00"


class MixedRegister:
    """Dense amplitude tensor over sites of dimension 2 or 3."""

    def __init__(self, dims: Sequence[int], psi: np.ndarray | None = None, cap: int = DEFAULT_CAP) -> None:
        self.dims = tuple(int(d) for d in dims)
        if any(d not in (2, 3) for d in self.dims):
            raise ValueError("site dimensions must be 2 or 3")
        size = int(np.prod(self.dims)) if self.dims else 1
        if size > cap:
            raise DimensionCap(f"register of dimension {size} exceeds the cap {cap}")
        self.cap = cap
        if psi is None:
            psi = np.zeros(size, dtype=complex)
            psi[0] = 1.0
        self.psi = np.asarray(psi, dtype=complex).reshape(self.dims)

    @classmethod
    def product(cls, states: Sequence[np.ndarray], cap: int = DEFAULT_CAP) -> "MixedRegister":
        dims = [len(s) for s in states]
        size = int(np.prod(dims))
        if size > cap:
            raise DimensionCap(f"register of dimension {size} exceeds the cap {cap}")
        psi = np.ones(1, dtype=complex)
        for s in states:
            psi = np.kron(psi, s)
        return cls(dims, psi, cap)

    @property
    def n(self) -> int:
        return len(self.dims)

    def copy(self) -> "MixedRegister":
        return MixedRegister(self.dims, self.psi.copy(), self.cap)

    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))

    def vector(self) -> np.ndarray:
        return self.psi.reshape(-1)

    def dump(self, path) -> None:
        """Raw amplitudes: magic, site count, per-site dims (uint32 LE), then complex64 LE pairs."""
        with open(path, "wb") as fh:
            fh.write(AMP_MAGIC)
            fh.write(np.array([self.n, *self.dims], dtype="<u4").tobytes())
            fh.write(self.vector().astype("<c8").tobytes())

    @classmethod
    def load(cls, path, cap: int = DEFAULT_CAP) -> "MixedRegister":
        raw = open(path, "rb").read()
        if raw[:8] != AMP_MAGIC:
            raise ValueError("not an amplitude dump")
        n = int(np.frombuffer(raw, "<u4", 1, 8)[0])
        dims = np.frombuffer(raw, "<u4", n, 12).tolist()
        psi = np.frombuffer(raw, "<c8", offset=12 + 4 * n)
        return cls(dims, psi.astype(complex), cap)

    def apply(self, op: np.ndarray, sites: Sequence[int]) -> None:
        k = len(sites)
        d = [self.dims[s] for s in sites]
        m = np.asarray(op).reshape(d + d)
        moved = np.tensordot(m, self.psi, axes=(list(range(k, 2 * k)), list(sites)))
        self.psi = np.moveaxis(moved, list(range(k)), list(sites))

    def apply_diagonal(self, phase: np.ndarray) -> None:
        self.psi = self.psi * phase.reshape(self.dims)

    def expectation(self, op: np.ndarray, sites: Sequence[int]) -> complex:
        t = self.copy()
        t.apply(op, sites)
        return complex(np.vdot(self.psi, t.psi))

    def project(self, site: int, bra: np.ndarray) -> float:
        """Contract ``<bra|`` on ``site``, remove it and renormalize; returns the probability."""
        out = np.tensordot(np.conj(bra), self.psi, axes=([0], [site]))
        p = float(np.vdot(out, out).real)
        if p > 0:
            out = out / math.sqrt(p)
        self.dims = self.dims[:site] + self.dims[site + 1 :]
        self.psi = out.reshape(self.dims) if self.dims else out.reshape(())
        return p

    def measure(self, site: int, basis: np.ndarray, seed: int, key: int) -> int:
        """Measure in the orthonormal ``basis`` (columns); the site is removed.

        The outcome is drawn by inverse CDF from a counter stream keyed ``(seed, key)``.
        """
        probs = []
        for k in range(basis.shape[1]):
            amp = np.tensordot(np.conj(basis[:, k]), self.psi, axes=([0], [site]))
            probs.append(float(np.vdot(amp, amp).real))
        u = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), key], dtype=np.uint64))).random()
        cdf = np.cumsum(probs) / sum(probs)
        k = int(np.searchsorted(cdf, u * (1 - 1e-15), side="right"))
        self.project(site, basis[:, k])
        return k


def index_grid(dims: Sequence[int]) -> list[np.ndarray]:
    """Per-site digit arrays broadcastable to the register shape."""
    return list(np.indices(dims, sparse=True))


# ---------------------------------------------------------------------------
# GF(3) utilities


def _rref_mod(M: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    A = np.array(M, dtype=np.int64) % p
    rows, cols = A.shape
    piv = []
    r = 0
    for c in range(cols):
        nz = np.nonzero(A[r:, c])[0] if r < rows else []
        if len(nz) == 0:
            continue
        k = r + nz[0]
        A[[r, k]] = A[[k, r]]
        inv = pow(int(A[r, c]), -1, p)
        A[r] = (A[r] * inv) % p
        for i in range(rows):
            if i != r and A[i, c]:
                A[i] = (A[i] - A[i, c] * A[r]) % p
        piv.append(c)
        r += 1
        if r == rows:
            break
    return A, piv


def rank_mod(M: np.ndarray, p: int = 3) -> int:
    if len(M) == 0:
        return 0
    return len(_rref_mod(M, p)[1])


def solve_mod(M: np.ndarray, t: np.ndarray, p: int = 3) -> np.ndarray | None:
    """Solve ``M x = t (mod p)``; returns ``None`` when inconsistent."""
    M = np.array(M, dtype=np.int64) % p
    aug = np.concatenate([M, np.array(t, dtype=np.int64).reshape(-1, 1) % p], axis=1)
    R, piv = _rref_mod(aug, p)
    if M.shape[1] in piv:
        return None
    x = np.zeros(M.shape[1], dtype=np.int64)
    for i, c in enumerate(piv):
        x[c] = R[i, -1]
    return x


# ---------------------------------------------------------------------------
# GF(3) stabilizer tableau


def _match_pauli3(op: np.ndarray, m: int) -> tuple[int, np.ndarray, np.ndarray]:
    """Write ``op`` as ``omega^k Xs^a Zc^b`` on ``m`` qutrits, or raise."""
    dim = 3**m
    for a in product(range(3), repeat=m):
        for b in product(range(3), repeat=m):
            P = kron(*[np.linalg.matrix_power(XS, x) @ np.linalg.matrix_power(ZC, z) for x, z in zip(a, b)])
            ov = np.trace(P.conj().T @ op) / dim
            if abs(abs(ov) - 1) < 1e-9:
                k = int(round(np.angle(ov) / (2 * np.pi / 3))) % 3
                if np.allclose(op, OMEGA**k * P, atol=1e-9):
                    return k, np.array(a), np.array(b)
    raise NonCliffordRequest("gate does not map Pauli strings to Pauli strings")


def conjugation_table(u: np.ndarray) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Images ``u P u^dag`` of Xs_j then Zc_j for each qutrit j of the gate."""
    m = int(round(math.log(u.shape[0], 3)))
    out = []
    for kind in (XS, ZC):
        for j in range(m):
            ops = [np.eye(3)] * m
            ops[j] = kind
            out.append(_match_pauli3(u @ kron(*ops) @ u.conj().T, m))
    return out


class Z3Tableau:
    """Stabilizer generators ``omega^k Xs^a Zc^b`` of an n-qutrit stabilizer state."""

    def __init__(self, n: int) -> None:
        self.n = n
        self.a = np.zeros((n, n), dtype=np.int64)
        self.b = np.eye(n, dtype=np.int64)
        self.k = np.zeros(n, dtype=np.int64)
        self._tables: dict = {}

    @staticmethod
    def _mul(p, q):
        (k1, a1, b1), (k2, a2, b2) = p, q
        return ((k1 + k2 + int(np.dot(b1, a2))) % 3, (a1 + a2) % 3, (b1 + b2) % 3)

    def _pow(self, p, e):
        out = (0, np.zeros_like(p[1]), np.zeros_like(p[2]))
        for _ in range(e % 3):
            out = self._mul(out, p)
        return out

    def apply(self, u: np.ndarray, sites: Sequence[int]) -> None:
        key = u.tobytes()
        if key not in self._tables:
            self._tables[key] = conjugation_table(u)
        table = self._tables[key]
        m = len(sites)
        for r in range(self.n):
            a_loc, b_loc = self.a[r, sites].copy(), self.b[r, sites].copy()
            img = (0, np.zeros(m, dtype=np.int64), np.zeros(m, dtype=np.int64))
            for j in range(m):
                img = self._mul(img, self._pow(table[j], a_loc[j]))
            for j in range(m):
                img = self._mul(img, self._pow(table[m + j], b_loc[j]))
            self.k[r] = (self.k[r] + img[0]) % 3
            self.a[r, sites] = img[1]
            self.b[r, sites] = img[2]

    def _commutator(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Exponent c with ``g P = omega^c P g`` for every generator g."""
        return (self.b @ a - self.a @ b) % 3

    def measure(self, a: np.ndarray, b: np.ndarray, coin: int) -> tuple[int, bool]:
        """Measure ``P = Xs^a Zc^b``; the outcome e means eigenvalue ``omega^e``."""
        c = self._commutator(a, b)
        nz = np.nonzero(c)[0]
        if len(nz):
            p = int(nz[0])
            gp = (int(self.k[p]), self.a[p].copy(), self.b[p].copy())
            for i in nz[1:]:
                # g_i g_p^e commutes with P when c_i + e c_p = 0
                e = (-int(c[i]) * pow(int(c[p]), -1, 3)) % 3
                g = self._mul((int(self.k[i]), self.a[i], self.b[i]), self._pow(gp, e))
                self.k[i], self.a[i], self.b[i] = g
            self.a[p], self.b[p] = a % 3, b % 3
            self.k[p] = (-coin) % 3  # omega^{-e} P has eigenvalue 1
            return coin % 3, False
        M = np.concatenate([self.a, self.b], axis=1).T
        x = solve_mod(M, np.concatenate([a, b]))
        if x is None:
            raise RuntimeError("tableau inconsistent")
        g = (0, np.zeros(self.n, dtype=np.int64), np.zeros(self.n, dtype=np.int64))
        for i in range(self.n):
            if x[i]:
                g = self._mul(g, self._pow((int(self.k[i]), self.a[i], self.b[i]), int(x[i])))
        # omega^k P psi = psi  ->  P psi = omega^{-k} psi
        return (-g[0]) % 3, True

    def generators(self) -> list[tuple[int, np.ndarray, np.ndarray]]:
        return [(int(self.k[i]), self.a[i].copy(), self.b[i].copy()) for i in range(self.n)]


def pauli3_matrix(k: int, a: Sequence[int], b: Sequence[int]) -> np.ndarray:
    return OMEGA**k * kron(*[np.linalg.matrix_power(XS, x) @ np.linalg.matrix_power(ZC, z) for x, z in zip(a, b)])


# ---------------------------------------------------------------------------
# Z3 toric code on the Lieb lattice


@dataclass
class LiebIndex:
    L: int

    def cell(self, i: int, j: int) -> int:
        return (i % self.L) * self.L + (j % self.L)

    def A(self, i: int, j: int) -> int:
        return 3 * self.cell(i, j)

    def E(self, i: int, j: int) -> int:
        return 3 * self.cell(i, j) + 1

    def N(self, i: int, j: int) -> int:
        return 3 * self.cell(i, j) + 2

    def vertices(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.L) for j in range(self.L)]


def z3_checks(L: int) -> tuple[list[dict[int, int]], list[dict[int, int]]]:
    """Vertex ``prod Zc`` and plaquette ``Xs Xs Xs^dag Xs^dag`` checks as {site: exponent} (site ids of the Lieb lattice)."""
    ix = LiebIndex(L)
    av, bp = [], []
    for i, j in ix.vertices():
        d: dict[int, int] = {}
        for s in (ix.E(i, j), ix.N(i, j), ix.E(i - 1, j), ix.N(i, j - 1)):
            d[s] = (d.get(s, 0) + 1) % 3
        av.append(d)
        p: dict[int, int] = {}
        for s, e in ((ix.E(i, j), 1), (ix.E(i, j + 1), 1), (ix.N(i, j), 2), (ix.N(i + 1, j), 2)):
            p[s] = (p.get(s, 0) + e) % 3
        bp.append(p)
    return av, bp


@dataclass
class Z3Report:
    L: int
    a_outcomes: list[int]
    frame: dict[int, int]
    vertex_values: list[complex]
    plaquette_values: list[complex]
    register: MixedRegister | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "a_outcomes": self.a_outcomes,
            "frame_shift_exponents": {str(k): int(v) for k, v in self.frame.items()},
            "vertex": [abs(v) for v in self.vertex_values],
            "vertex_re": [v.real for v in self.vertex_values],
            "plaquette_re": [v.real for v in self.plaquette_values],
        }


def _check_value(reg: MixedRegister, pos: dict[int, int], check: dict[int, int], op: np.ndarray) -> complex:
    sites = [pos[s] for s in check]
    mats = [np.linalg.matrix_power(op, e) for e in check.values()]
    return reg.expectation(kron(*mats), sites)


def prepare_z3_toric(
    L: int = 2,
    post_select: bool = True,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    forced: Sequence[int] | None = None,
) -> Z3Report:
    """Qutrit cluster state on the Lieb torus, A measured in the shift basis, B left in the Z3 toric code.

    ``forced`` fixes the shift eigenvalue exponents of the A sites (in id order)
    instead of sampling them; it needs ``post_select=False``.
    """
    lat = build_lattice("lieb", (L, L))
    n = lat.n
    if 3**n > cap:
        raise DimensionCap(f"3^{n} amplitudes exceed the cap {cap}; use the GF(3) tableau")
    reg = MixedRegister.product([PLUS3] * n, cap)
    idx = index_grid(reg.dims)
    phase = np.zeros(reg.dims, dtype=np.int64)
    for a, b in lat.protocol_edges:
        phase = phase + idx[a] * idx[b]
    reg.apply_diagonal(OMEGA ** (phase % 3))
    # step 3: inverse Fourier on A and read the occupancy; occupancy o means Xs = omega^{-o}
    a_sites = lat.measured
    outcomes = []
    want = dict(zip(sorted(a_sites), forced)) if forced is not None else None
    for a in sorted(a_sites, reverse=True):
        if post_select:
            reg.project(a, PLUS3)
            outcomes.append(0)
        elif want is not None:
            reg.apply(F3.conj().T, [a])
            if reg.project(a, np.eye(3)[(-want[a]) % 3]) < 1e-12:
                raise InfeasibleFrame(f"forced outcome at site {a} has zero probability")
            outcomes.append(want[a] % 3)
        else:
            reg.apply(F3.conj().T, [a])
            o = reg.measure(a, np.eye(3), seed, a)
            outcomes.append((-o) % 3)
    outcomes = outcomes[::-1]
    b_sites = lat.retained
    pos = {s: k for k, s in enumerate(b_sites)}
    av, bp = z3_checks(L)
    frame: dict[int, int] = {}
    if not post_select:
        # after measurement prod Zc over the star of a equals omega^{-e_a}; Xs_b^x raises it by omega^x
        M = np.zeros((len(a_sites), len(b_sites)), dtype=np.int64)
        for r, a in enumerate(sorted(a_sites)):
            for b in lat.neighbors[a]:
                M[r, pos[b]] += 1
        x = solve_mod(M, np.array(outcomes))
        if x is None:
            raise InfeasibleFrame("vertex syndrome not reachable by shift strings")
        for b, e in zip(b_sites, x):
            if e:
                reg.apply(np.linalg.matrix_power(XS, int(e)), [pos[b]])
                frame[b] = int(e)
    vv = [_check_value(reg, pos, c, ZC) for c in av]
    pv = [_check_value(reg, pos, c, XS) for c in bp]
    return Z3Report(L, outcomes, frame, vv, pv, reg)


def z3_tableau_protocol(L: int, seed: int = 0) -> tuple[Z3Tableau, dict]:
    """GF(3) tableau run of the Z3 protocol; returns the tableau and the degeneracy report."""
    lat = build_lattice("lieb", (L, L))
    tab = Z3Tableau(lat.n)
    for q in range(lat.n):
        tab.apply(F3, [q])
    for a, b in lat.protocol_edges:
        tab.apply(CZ3, [a, b])
    e_a = {}
    for a in lat.measured:
        av = np.zeros(lat.n, dtype=np.int64)
        av[a] = 1
        e, _ = tab.measure(av, np.zeros(lat.n, dtype=np.int64), site_coin(seed, a) + site_coin(seed + 1, a))
        e_a[a] = e
    av_checks, bp_checks = z3_checks(L)
    n = lat.n
    rows = []
    values = []
    for chk, kind in [(c, "Z") for c in av_checks] + [(c, "X") for c in bp_checks]:
        a = np.zeros(n, dtype=np.int64)
        b = np.zeros(n, dtype=np.int64)
        for s, e in chk.items():
            (b if kind == "Z" else a)[s] = e
        cc = tab._commutator(a, b)
        values.append(None if cc.any() else tab.measure(a, b, 0)[0])
        ret = lat.retained
        rows.append(np.concatenate([a[ret], b[ret]]))
    k = len(lat.retained) - rank_mod(np.array(rows))
    return tab, {"L": L, "k": k, "ground_space_dimension": 3**k, "check_exponents": values, "a_outcomes": e_a}


# ---------------------------------------------------------------------------
# S3 quantum double


@dataclass
class S3Layout:
    """Site numbering of the L x L S3 register: qutrits on bonds, then qubits on shifted bonds."""

    L: int

    def c(self, i: int, j: int) -> int:
        return (i % self.L) * self.L + (j % self.L)

    def bE(self, i, j):  # horizontal bond from v to v + x
        return 2 * self.c(i, j)

    def bN(self, i, j):
        return 2 * self.c(i, j) + 1

    def dx(self, i, j):  # qubit between C_v and C_{v+x}, paired with bE(v)
        return 2 * self.L**2 + 2 * self.c(i, j)

    def dy(self, i, j):
        return 2 * self.L**2 + 2 * self.c(i, j) + 1

    @property
    def dims(self) -> tuple[int, ...]:
        return (3,) * (2 * self.L**2) + (2,) * (2 * self.L**2)

    def vertices(self):
        return [(i, j) for i in range(self.L) for j in range(self.L)]


def s3_vertex_ops(lay: S3Layout, i: int, j: int) -> dict[str, tuple[list[int], np.ndarray]]:
    """Order-three and order-two vertex terms at v = (i, j) after the C measurement.

    ``A3 = omega^(n_N + n_E + n_S X_dS + n_W X_dW)`` and ``A2 = C_N C_E prod_{d at C_v} Z_d``.
    """
    N, E, S, W = lay.bN(i, j), lay.bE(i, j), lay.bN(i, j - 1), lay.bE(i - 1, j)
    dS, dW = lay.dy(i, j - 1), lay.dx(i - 1, j)
    # omega^{n X} = ZC (x) |+><+| + ZC^dag (x) |-><-|
    pp = np.outer(PLUS2, PLUS2)
    mm = np.eye(2) - pp
    zx = np.kron(ZC, pp) + np.kron(ZC.conj(), mm)
    # site order N, E, S, dS, W, dW
    a3 = kron(ZC, ZC, zx, zx)
    a3_sites = [N, E, S, dS, W, dW]
    d4 = [lay.dx(i, j), lay.dy(i, j), lay.dx(i - 1, j), lay.dy(i, j - 1)]
    a2 = kron(CC, CC, Z2, Z2, Z2, Z2)
    return {"A3": (a3_sites, a3), "A2": ([N, E] + d4, a2)}


def s3_plaquette_ops(lay: S3Layout, i: int, j: int) -> dict[str, tuple[list[int], np.ndarray]]:
    """Order-three and order-two plaquette terms of the plaquette with lower-left corner v = (i, j).

    ``B3 = Xs_E(v) Xs^dag_N(v) Xs_E(v+y)^(X_d(v,v+y)) Xs^dag_N(v+x)^(X_d(v,v+x))`` and
    ``B2 = prod X_d`` around the shifted plaquette.
    """
    pp = np.outer(PLUS2, PLUS2)
    mm = np.eye(2) - pp
    xd = XS.conj().T
    top = np.kron(XS, pp) + np.kron(xd, mm)
    right = np.kron(xd, pp) + np.kron(XS, mm)
    b3_sites = [lay.bE(i, j), lay.bN(i, j), lay.bE(i, j + 1), lay.dy(i, j), lay.bN(i + 1, j), lay.dx(i, j)]
    b3 = kron(XS, xd, top, right)
    b2_sites = [lay.dx(i, j), lay.dy(i + 1, j), lay.dx(i, j + 1), lay.dy(i, j)]
    b2 = kron(X2, X2, X2, X2)
    return {"B3": (b3_sites, b3), "B2": (b2_sites, b2)}


def s3_projectors(lay: S3Layout) -> list[tuple[str, list[int], np.ndarray]]:
    out = []
    for i, j in lay.vertices():
        v = s3_vertex_ops(lay, i, j)
        p = s3_plaquette_ops(lay, i, j)
        for name, (sites, op) in (("A3", v["A3"]), ("B3", p["B3"])):
            out.append((f"{name}({i},{j})", sites, (np.eye(op.shape[0]) + op + op.conj().T) / 3))
        for name, (sites, op) in (("A2", v["A2"]), ("B2", p["B2"])):
            out.append((f"{name}({i},{j})", sites, (np.eye(op.shape[0]) + op) / 2))
    return out


@dataclass
class S3Report:
    L: int
    projector_values: dict[str, float]
    z3: Z3Report
    c_outcomes: list[int]
    d_frame: list[int]
    register: MixedRegister | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "projectors": self.projector_values,
            "min_projector": min(self.projector_values.values()),
            "a_outcomes": self.z3.a_outcomes,
            "c_outcomes": self.c_outcomes,
            "d_frame": self.d_frame,
        }


def prepare_s3(L: int = 2, post_select: bool = True, seed: int = 0, cap: int = DEFAULT_CAP) -> S3Report:
    """Steps one to ten of the S3 preparation on the L x L torus.

    The C qubits are measured analytically: every gate after their Hadamard is
    diagonal in C, so the post-measurement state is ``sum_c <m|c> (C-controlled
    gates at c) psi_B (x) psi_D(c)`` and never needs the joint B, C, D register.
    """
    lay = S3Layout(L)
    nb, nq = 2 * L * L, 2 * L * L
    size = 3**nb * 2**nq
    if size > cap:
        raise DimensionCap(f"S3 register of dimension {size} exceeds the cap {cap}")
    z3 = prepare_z3_toric(L, post_select, seed)
    # Lieb site ids -> S3 qutrit slots
    ix = LiebIndex(L)
    lieb_ret = build_lattice("lieb", (L, L)).retained
    slot = {}
    for i, j in lay.vertices():
        slot[ix.E(i, j)] = lay.bE(i, j)
        slot[ix.N(i, j)] = lay.bN(i, j)
    order = [slot[s] for s in lieb_ret]
    psi_b = np.moveaxis(z3.register.psi, list(range(nb)), order).reshape(-1)
    reg_b = MixedRegister((3,) * nb, psi_b)
    cells = lay.vertices()
    nc = len(cells)

    def c_branch(cbits: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        r = reg_b.copy()
        for (i, j), cv in zip(cells, cbits):
            if cv:
                r.apply(CC, [lay.bN(i, j)])
                r.apply(CC, [lay.bE(i, j)])
        # D qubits start in |+>, CZ with C flips the sign of d when an odd number of its C ends are 1
        zpat = np.zeros(nq, dtype=np.int64)
        for (i, j), cv in zip(cells, cbits):
            if cv:
                for d in (lay.dx(i, j), lay.dy(i, j), lay.dx(i - 1, j), lay.dy(i, j - 1)):
                    zpat[d - nb] ^= 1
        dvec = np.ones(1, dtype=complex)
        for z in zpat:
            dvec = np.kron(dvec, np.array([1, -1 if z else 1], dtype=complex) / math.sqrt(2))
        return r.vector(), dvec

    branches = [c_branch(cb) for cb in product((0, 1), repeat=nc)]
    configs = list(product((0, 1), repeat=nc))
    if post_select:
        m = (0,) * nc
    else:
        gram = np.zeros((len(configs), len(configs)), dtype=complex)
        for x, (bx, dx) in enumerate(branches):
            for y, (by, dy) in enumerate(branches):
                gram[x, y] = np.vdot(bx, by) * np.vdot(dx, dy)
        probs = []
        for mm in configs:
            s = np.array([(-1) ** int(np.dot(mm, c)) for c in configs])
            probs.append(float((s @ gram @ s).real))
        probs = np.array(probs) / sum(probs)
        u = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), 10**6], dtype=np.uint64))).random()
        m = configs[int(np.searchsorted(np.cumsum(probs), u * (1 - 1e-15), side="right"))]
    psi = np.zeros((3**nb, 2**nq), dtype=complex)
    for c, (bv, dv) in zip(configs, branches):
        psi += (-1) ** int(np.dot(m, c)) * np.outer(bv, dv)
    psi /= np.linalg.norm(psi)
    reg = MixedRegister(lay.dims, psi.reshape(-1), cap)
    d_frame: list[int] = []
    if any(m):
        # outcome -1 at C_v flips C_N C_E prod Z_d around v; X_d on a shifted bond flips its two ends
        cols = []
        dsites = list(range(nb, nb + nq))
        for d in dsites:
            ends = [k for k, (i, j) in enumerate(cells) if d in (lay.dx(i, j), lay.dy(i, j), lay.dx(i - 1, j), lay.dy(i, j - 1))]
            cols.append(gf2.bits(ends))
        sol = gf2.solve(cols, gf2.bits(k for k, v in enumerate(m) if v))
        if sol is None:
            raise InfeasibleFrame("odd number of C outcomes -1")
        d_frame = [dsites[k] for k in gf2.support(sol)]
        for d in d_frame:
            reg.apply(X2, [d])
    vals = {}
    for name, sites, P in s3_projectors(lay):
        vals[name] = reg.expectation(P, sites).real
    return S3Report(L, vals, z3, list(m), d_frame, reg)


# -- quantum double D(S3)


def s3_mul(g: tuple[int, int], h: tuple[int, int]) -> tuple[int, int]:
    """(r^k1 s^a1)(r^k2 s^a2) with elements written (a, k)."""
    a1, k1 = g
    a2, k2 = h
    return ((a1 + a2) % 2, (k1 + (k2 if a1 == 0 else -k2)) % 3)


def s3_inv(g: tuple[int, int]) -> tuple[int, int]:
    a, k = g
    return (a, (-k) % 3) if a == 0 else g


S3_ELEMENTS = [(a, k) for a in range(2) for k in range(3)]


def _perm_matrix(f) -> np.ndarray:
    M = np.zeros((6, 6))
    for g in S3_ELEMENTS:
        h = f(g)
        M[3 * h[0] + h[1], 3 * g[0] + g[1]] = 1
    return M


def left_mult(g) -> np.ndarray:
    return _perm_matrix(lambda h: s3_mul(g, h))


def right_mult(g) -> np.ndarray:
    return _perm_matrix(lambda h: s3_mul(h, s3_inv(g)))


def regular_rep_check() -> dict[str, float]:
    """Distances between L, R of r and s and the qubit-qutrit forms I x Xs, X x C, Xs^-Z, X x I."""
    r, s = (0, 1), (1, 0)
    xmz = np.zeros((6, 6), dtype=complex)
    xmz[:3, :3] = XS.conj().T
    xmz[3:, 3:] = XS
    want = {
        "L_r": (left_mult(r), np.kron(np.eye(2), XS)),
        "L_s": (left_mult(s), np.kron(X2, CC)),
        "R_r": (right_mult(r), xmz),
        "R_s": (right_mult(s), np.kron(X2, np.eye(3))),
    }
    return {k: float(np.abs(a - b).max()) for k, (a, b) in want.items()}


def kitaev_vertex(out_edges: int = 2, in_edges: int = 2) -> np.ndarray:
    """``(1/|G|) sum_g L^g on outgoing edges (x) R^g on incoming edges``; outgoing first."""
    D = 6 ** (out_edges + in_edges)
    A = np.zeros((D, D))
    for g in S3_ELEMENTS:
        A += kron(*([left_mult(g)] * out_edges + [right_mult(g)] * in_edges)).real
    return A / 6


def kitaev_plaquette() -> np.ndarray:
    """Diagonal projector ``delta(g1 g2 g3^-1 g4^-1 = e)``; edges bottom, right, top, left."""
    diag = np.zeros(6**4)
    for n, gs in enumerate(product(S3_ELEMENTS, repeat=4)):
        g1, g2, g3, g4 = gs
        h = s3_mul(s3_mul(s3_mul(g1, g2), s3_inv(g3)), s3_inv(g4))
        diag[n] = 1.0 if h == (0, 0) else 0.0
    return np.diag(diag)


# Edge map onto the group basis: the qubit X eigenvalue +1 is the coset s (so H then X),
# the qutrit shift basis becomes the r exponent (F or F^dag both work because each
# order-three term enters with its inverse).
QUBIT_MAP = X2 @ H2


def _edge_unitary(swap: np.ndarray, conj: bool, qubit: np.ndarray = QUBIT_MAP) -> np.ndarray:
    """Transformation on one (qubit, qutrit) edge, with an optional C after the qutrit swap."""
    u3 = (CC @ swap) if conj else swap
    return np.kron(qubit, u3)


def _local_our_vertex(lay: S3Layout, i: int, j: int) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Product A3 A2 at v embedded on its four edges (N, E, S, W) as (qubit, qutrit) pairs."""
    v = s3_vertex_ops(lay, i, j)
    edges = [(lay.dy(i, j), lay.bN(i, j)), (lay.dx(i, j), lay.bE(i, j)), (lay.dy(i, j - 1), lay.bN(i, j - 1)), (lay.dx(i - 1, j), lay.bE(i - 1, j))]
    order = [s for e in edges for s in e]
    P3 = _embed(v["A3"], order, lay)
    P2 = _embed(v["A2"], order, lay)
    I = np.eye(P3.shape[0])
    return edges, ((I + P3 + P3.conj().T) / 3) @ ((I + P2) / 2)


def _local_our_plaquette(lay: S3Layout, i: int, j: int) -> tuple[list[tuple[int, int]], np.ndarray]:
    p = s3_plaquette_ops(lay, i, j)
    edges = [(lay.dx(i, j), lay.bE(i, j)), (lay.dy(i + 1, j), lay.bN(i + 1, j)), (lay.dx(i, j + 1), lay.bE(i, j + 1)), (lay.dy(i, j), lay.bN(i, j))]
    order = [s for e in edges for s in e]
    P3 = _embed(p["B3"], order, lay)
    P2 = _embed(p["B2"], order, lay)
    I = np.eye(P3.shape[0])
    return edges, ((I + P3 + P3.conj().T) / 3) @ ((I + P2) / 2)


def _embed(term: tuple[list[int], np.ndarray], order: list[int], lay: S3Layout) -> np.ndarray:
    """Expand a local operator onto the ordered site list (identity elsewhere)."""
    sites, op = term
    dims = [lay.dims[s] for s in order]
    D = int(np.prod(dims))
    k = len(sites)
    pos = [order.index(s) for s in sites]
    m = np.asarray(op).reshape([dims[p] for p in pos] * 2)
    ident = np.eye(D, dtype=complex).reshape(dims + [D])
    moved = np.tensordot(m, ident, axes=(list(range(k, 2 * k)), pos))
    return np.moveaxis(moved, list(range(k)), pos).reshape(D, D)


def _conjugate_edges(P: np.ndarray, edges: list[tuple[int, int]], swap: np.ndarray, pattern, qubit: np.ndarray) -> np.ndarray:
    """``W P W^dag`` for the product ``W`` of per-edge unitaries, one edge at a time."""
    m = len(edges)
    T = P.reshape([6] * (2 * m))
    for k, (_, b) in enumerate(edges):
        u = _edge_unitary(swap, pattern(b), qubit)
        T = np.moveaxis(np.tensordot(u, T, axes=([1], [k])), 0, k)
        T = np.moveaxis(np.tensordot(T, u.conj().T, axes=([m + k], [0])), -1, m + k)
    return T.reshape(P.shape)


def quantum_double_distances(
    L: int = 2, pattern=None, swap: np.ndarray | None = None, qubit: np.ndarray = QUBIT_MAP
) -> dict[str, float]:
    """Max operator distance between transformed (A3 A2, B3 B2) and Kitaev's A_v, B_p."""
    lay = S3Layout(L)
    if swap is None:
        swap = F3.conj().T
    if pattern is None:
        pattern = lambda b: False  # noqa: E731
    Av = kitaev_vertex()
    Bp = kitaev_plaquette()
    dv, dp = 0.0, 0.0
    for i, j in lay.vertices():
        edges, P = _local_our_vertex(lay, i, j)
        dv = max(dv, float(np.abs(_conjugate_edges(P, edges, swap, pattern, qubit) - Av).max()))
        edges, P = _local_our_plaquette(lay, i, j)
        dp = max(dp, float(np.abs(_conjugate_edges(P, edges, swap, pattern, qubit) - Bp).max()))
    return {"vertex": dv, "plaquette": dp}


def search_edge_transform(L: int = 2) -> list[tuple[str, str]]:
    """Which (qubit map, qutrit swap) pairs send the terms onto Kitaev's projectors."""
    hits = []
    for qname, qu in (("H", H2), ("XH", X2 @ H2)):
        for sname, sw in (("F", F3), ("Fdag", F3.conj().T)):
            if max(quantum_double_distances(L, swap=sw, qubit=qu).values()) < 1e-9:
                hits.append((qname, sname))
    return hits


def quantum_double_ground_space_dimension(L: int = 2) -> int:
    """Tr(prod A_v prod B_p) of D(S3) on the L x L torus, from flat connections and gauge orbits."""
    lay = S3Layout(L)
    verts = lay.vertices()
    E = {(i, j): 2 * lay.c(i, j) for i, j in verts}
    Nn = {(i, j): 2 * lay.c(i, j) + 1 for i, j in verts}
    ne = 2 * L * L
    mul = np.array([[3 * x[0] + x[1] for x in [s3_mul(g, h) for h in S3_ELEMENTS]] for g in S3_ELEMENTS])
    inv = np.array([3 * s3_inv(g)[0] + s3_inv(g)[1] for g in S3_ELEMENTS])
    confs = np.array(list(product(range(6), repeat=ne)), dtype=np.int64)
    flat = np.ones(len(confs), dtype=bool)
    for i, j in verts:
        g1, g2 = confs[:, E[(i, j)]], confs[:, Nn[((i + 1) % L, j)]]
        g3, g4 = confs[:, E[(i, (j + 1) % L)]], confs[:, Nn[(i, j)]]
        h = mul[mul[mul[g1, g2], inv[g3]], inv[g4]]
        flat &= h == 0
    F = confs[flat]
    fixed = 0
    for gauge in product(range(6), repeat=len(verts)):
        gv = {v: gauge[k] for k, v in enumerate(verts)}
        G = F.copy()
        for (i, j), k in gv.items():
            # vertex (i, j) is the tail of E(i,j), N(i,j) and the head of E(i-1,j), N(i,j-1)
            G[:, E[(i, j)]] = mul[k, G[:, E[(i, j)]]]
            G[:, Nn[(i, j)]] = mul[k, G[:, Nn[(i, j)]]]
        for (i, j), k in gv.items():
            w = E[((i - 1) % L, j)]
            G[:, w] = mul[G[:, w], inv[k]]
            s = Nn[(i, (j - 1) % L)]
            G[:, s] = mul[G[:, s], inv[k]]
        fixed += int(np.all(G == F, axis=1).sum())
    total = fixed / 6 ** len(verts)
    return int(round(total))


def quantum_double_flat_rank(L: int = 2) -> int:
    """Rank of ``prod_v A_v`` restricted to flat configurations, as an explicit operator.

    Independent of the orbit count: vertex operators permute flat configurations,
    so the common +1 space of all projectors is the image of the averaged
    gauge action on the flat subspace.
    """
    lay = S3Layout(L)
    verts = lay.vertices()
    ne = 2 * L * L
    mul = np.array([[3 * x[0] + x[1] for x in [s3_mul(g, h) for h in S3_ELEMENTS]] for g in S3_ELEMENTS])
    inv = np.array([3 * s3_inv(g)[0] + s3_inv(g)[1] for g in S3_ELEMENTS])
    E = {v: 2 * lay.c(*v) for v in verts}
    Nn = {v: 2 * lay.c(*v) + 1 for v in verts}
    confs = np.array(list(product(range(6), repeat=ne)), dtype=np.int64)
    flat = np.ones(len(confs), dtype=bool)
    for i, j in verts:
        h = mul[mul[mul[confs[:, E[(i, j)]], confs[:, Nn[((i + 1) % L, j)]]], inv[confs[:, E[(i, (j + 1) % L)]]]], inv[confs[:, Nn[(i, j)]]]]
        flat &= h == 0
    F = confs[flat]
    weights = 6 ** np.arange(ne - 1, -1, -1)
    where = {int(k): n for n, k in enumerate(F @ weights)}
    P = sparse.identity(len(F), format="csr")
    for i, j in verts:
        Av = sparse.csr_matrix((len(F), len(F)))
        for g in range(6):
            G = F.copy()
            for e in (E[(i, j)], Nn[(i, j)]):
                G[:, e] = mul[g, G[:, e]]
            for e in (E[((i - 1) % L, j)], Nn[(i, (j - 1) % L)]):
                G[:, e] = mul[G[:, e], inv[g]]
            cols = np.array([where[int(k)] for k in G @ weights])
            Av = Av + sparse.csr_matrix((np.full(len(F), 1 / 6), (cols, np.arange(len(F)))), shape=Av.shape)
        P = Av @ P
    # P is a symmetric projector (each A_v averages a group of permutations), so rank = trace
    idem = abs(P @ P - P).max()
    if idem > 1e-9:
        raise RuntimeError(f"vertex product is not a projector ({idem:.2e})")
    return int(round(P.diagonal().sum()))


def s3_composite_projectors(lay: S3Layout) -> list[tuple[str, list[int], np.ndarray]]:
    """Vertex products A3 A2 and plaquette products B3 B2 as (name, sites, matrix)."""
    out = []
    for i, j in lay.vertices():
        for name, fn in (("A", _local_our_vertex), ("B", _local_our_plaquette)):
            edges, P = fn(lay, i, j)
            out.append((f"{name}({i},{j})", [s for e in edges for s in e], P))
    return out


def s3_projector_commutators(L: int = 2, probes: int = 2, seed: int = 0, composite: bool = True) -> float:
    """Largest ``|[P, Q] v|`` over overlapping projector pairs and random unit probes ``v``.

    With ``composite`` the vertex and plaquette products are compared; the bare
    order-three factors of a vertex and of the plaquette to its lower left only
    commute inside the ``B2 = 1`` subspace.
    """
    lay = S3Layout(L)
    terms = s3_composite_projectors(lay) if composite else s3_projectors(lay)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in range(len(terms)):
        for y in range(x + 1, len(terms)):
            _, sa, Pa = terms[x]
            _, sb, Pb = terms[y]
            if not set(sa) & set(sb):
                continue
            order = list(dict.fromkeys(sa + sb))
            dims = [lay.dims[s] for s in order]
            ia = [order.index(s) for s in sa]
            ib = [order.index(s) for s in sb]
            for _ in range(probes):
                v = rng.normal(size=int(np.prod(dims))) + 1j * rng.normal(size=int(np.prod(dims)))
                r1 = MixedRegister(dims, v / np.linalg.norm(v))
                r2 = r1.copy()
                r1.apply(Pb, ib)
                r1.apply(Pa, ia)
                r2.apply(Pa, ia)
                r2.apply(Pb, ib)
                worst = max(worst, float(np.linalg.norm(r1.psi - r2.psi)))
    return worst


def z3_engine_cross_check(seed: int = 0) -> float:
    """Dense and GF(3) tableau runs on a Clifford-only qutrit circuit; max stabilizer deviation.

    The circuit is the Z3 cluster on a 2 x 2 open Lieb patch (at most 8 qutrits)
    with one shift-basis measurement.
    """
    rng = np.random.default_rng(seed)
    n = 6
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 3)]
    tab = Z3Tableau(n)
    reg = MixedRegister.product([np.eye(3)[0]] * n)
    for q in range(n):
        tab.apply(F3, [q])
        reg.apply(F3, [q])
    for a, b in edges:
        tab.apply(CZ3, [a, b])
        reg.apply(CZ3, [a, b])
    for q in rng.choice(n, size=2, replace=False):
        tab.apply(CC, [int(q)])
        reg.apply(CC, [int(q)])
    a = np.zeros(n, dtype=np.int64)
    a[0] = 1
    e, _ = tab.measure(a, np.zeros(n, dtype=np.int64), 1)
    # dense: project site 0 onto the Xs eigenvector with eigenvalue omega^e and keep it
    vals, vecs = np.linalg.eig(XS)
    k = int(np.argmin(np.abs(vals - OMEGA**e)))
    proj = np.outer(vecs[:, k], vecs[:, k].conj())
    reg.apply(proj, [0])
    reg.psi /= reg.norm()
    worst = 0.0
    for kk, aa, bb in tab.generators():
        P = pauli3_matrix(kk, aa, bb)
        worst = max(worst, abs(np.vdot(reg.vector(), P @ reg.vector()) - 1))
    return float(worst)


def u_bc_symmetry_exchange() -> float:
    """Distance between U_BC (prod_C X) U_BC^dag and prod_C X prod_B C on one C with its two B qutrits."""
    # site order: c, b1, b2
    U = kron(np.eye(1), _cc_on(0, 1, 2)) @ _cc_on(0, 2, 2)
    lhs = U @ kron(X2, np.eye(3), np.eye(3)) @ U.conj().T
    rhs = kron(X2, CC, CC)
    return float(np.abs(lhs - rhs).max())


def _cc_on(ctrl: int, tgt: int, nb: int) -> np.ndarray:
    """Controlled-C from the qubit (site 0) onto qutrit ``tgt`` among ``nb`` qutrits."""
    dims = [2] + [3] * nb
    D = int(np.prod(dims))
    out = np.zeros((D, D), dtype=complex)
    for col in range(D):
        e = np.zeros(D, dtype=complex)
        e[col] = 1
        r = MixedRegister(dims, e)
        r.apply(CONTROLLED_C, [ctrl, tgt])
        out[:, col] = r.vector()
    return out


# ---------------------------------------------------------------------------
# D4 from the color code


@dataclass
class D4Layout:
    L: int
    a_sites: list[int]
    b_sites: list[int]
    bonds: list[tuple[int, int]]  # honeycomb bonds between dice B sites (lattice ids)


def d4_layout(L: int = 2) -> D4Layout:
    lat = build_lattice("dice", (L, L))
    B = lat.ids("B")
    pairs = set()
    for b in B:
        js, _ = lat.distances_from(b, 1.0 + 1e-6)
        for j in js:
            if lat.sites[int(j)].sublattice == "B":
                pairs.add((min(b, int(j)), max(b, int(j))))
    return D4Layout(L, lat.ids("A"), B, sorted(pairs))


def color_code_dense(L: int = 2) -> tuple[np.ndarray, list[int]]:
    """``<+|_A prod CZ_ab |+>_AB`` on the dice torus as a dense B-register vector."""
    lat = build_lattice("dice", (L, L))
    n = lat.n
    reg = MixedRegister.product([PLUS2] * n)
    idx = index_grid(reg.dims)
    par = np.zeros(reg.dims, dtype=np.int64)
    for a, b in lat.protocol_edges:
        par = par + idx[a] * idx[b]
    reg.apply_diagonal((-1.0) ** (par % 2))
    for a in sorted(lat.ids("A"), reverse=True):
        reg.project(a, PLUS2)
    return reg.vector(), lat.ids("B")


def tableau_state_vector(tab) -> np.ndarray:
    """Dense vector of a small stabilizer tableau, site 0 as the leading tensor factor."""
    n = tab.n
    if n > 20:
        raise DimensionCap(f"dense expansion of {n} qubits")
    for start in (np.full(2**n, 2.0 ** (-n / 2), dtype=complex), None):
        reg = MixedRegister([2] * n, start)
        for xb, zb, sign in tab.stabilizer_rows():
            g = reg.copy()
            for q in range(n):
                x, z = xb >> q & 1, zb >> q & 1
                if x or z:
                    g.apply(Y2 if x and z else X2 if x else Z2, [q])
            reg.psi = (reg.psi + sign * g.psi) / 2
        if reg.norm() > 1e-6:
            break
    return reg.vector() / reg.norm()


@dataclass
class D4Report:
    L: int
    color_code_overlap: float
    loop_values: list[float]
    b_outcomes: list[int]
    c_frame: list[int]
    chi2_p: float | None = None
    support_size: int | None = None
    register: MixedRegister | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "color_code_overlap": self.color_code_overlap,
            "loops": self.loop_values,
            "b_outcomes": self.b_outcomes,
            "c_frame": self.c_frame,
            "chi2_p": self.chi2_p,
            "support_size": self.support_size,
        }


def hexagon_loops(lay: D4Layout, L: int = 2) -> list[list[int]]:
    """Bond indices of the hexagon around each A site."""
    lat = build_lattice("dice", (L, L))
    loops = []
    for a in lay.a_sites:
        ring = set(lat.neighbors[a])
        loops.append([k for k, (u, v) in enumerate(lay.bonds) if u in ring and v in ring])
    return loops


def prepare_d4(L: int = 2, post_select: bool = True, seed: int = 0, shots: int = 0) -> D4Report:
    lay = d4_layout(L)
    lat = build_lattice("dice", (L, L))
    # color code through the tableau engine, forced +1 outcomes (post-selection)
    tab = prepare_cluster(lat, "plus")
    for a in lay.a_sites:
        tab.measure(a, "X", 0)
    full = MixedRegister([2] * lat.n, tableau_state_vector(tab))
    for a in sorted(lay.a_sites, reverse=True):
        full.project(a, PLUS2)
    cc_tab = full.vector()
    cc_dense, _ = color_code_dense(L)
    overlap = float(abs(np.vdot(cc_tab, cc_dense)))
    nb, nc = len(lay.b_sites), len(lay.bonds)
    reg = MixedRegister([2] * (nb + nc), np.kron(cc_dense, np.ones(2**nc) / math.sqrt(2**nc)))
    ry = expm(-1j * math.pi / 8 * Y2)
    for k in range(nb):
        reg.apply(ry, [k])
    bpos = {b: k for k, b in enumerate(lay.b_sites)}
    idx = index_grid(reg.dims)
    par = np.zeros(reg.dims, dtype=np.int64)
    for c, (u, v) in enumerate(lay.bonds):
        par = par + idx[nb + c] * (idx[bpos[u]] + idx[bpos[v]])
    reg.apply_diagonal((-1.0) ** (par % 2))
    # exact B outcome distribution in the X basis
    t = reg.copy()
    for k in range(nb):
        t.apply(H2, [k])
    probs = (np.abs(t.psi.reshape(2**nb, 2**nc)) ** 2).sum(axis=1)
    chi_p, support = None, None
    if shots:
        g = np.random.Generator(np.random.Philox(key=np.array([seed & (2**64 - 1), 2**32], dtype=np.uint64)))
        draws = g.choice(2**nb, size=shots, p=probs / probs.sum())
        supp = np.nonzero(probs > 1e-12)[0]
        counts = np.array([(draws == s).sum() for s in supp])
        chi_p = float(chisquare(counts).pvalue)
        support = int(len(supp))
    outcomes: list[int] = []
    for k in reversed(range(nb)):
        if post_select:
            reg.project(k, PLUS2)
            outcomes.append(0)
        else:
            outcomes.append(reg.measure(k, H2, seed, lay.b_sites[k]))
    outcomes = outcomes[::-1]
    frame: list[int] = []
    if any(outcomes):
        # outcome -1 at b equals an extra Z_b, which X_c on a bond at b moves onto both ends
        cols = [gf2.bits([k for k, b in enumerate(lay.b_sites) if b in bond]) for bond in lay.bonds]
        sol = gf2.solve(cols, gf2.bits(k for k, o in enumerate(outcomes) if o))
        if sol is None:
            raise InfeasibleFrame("odd number of B outcomes -1 on a component")
        frame = gf2.support(sol)
        for c in frame:
            reg.apply(X2, [c])
    loops = hexagon_loops(lay, L)
    vals = [reg.expectation(kron(*[X2] * len(lp)), lp).real for lp in loops]
    return D4Report(L, overlap, vals, outcomes, frame, chi_p, support, reg)


# ---------------------------------------------------------------------------
# gate synthesis from Rydberg Hamiltonians


def n_ops_qutrit() -> tuple[np.ndarray, np.ndarray]:
    return np.diag([0.0, 1.0, 0.0]), np.diag([0.0, 0.0, 1.0])


def h_ab(U: float, Up: float) -> np.ndarray:
    n1, n2 = n_ops_qutrit()
    return U * (np.kron(n1, n1) + np.kron(n2, n2)) + Up * (np.kron(n1, n2) + np.kron(n2, n1))


def qutrit_pulses() -> dict[str, np.ndarray]:
    """Spin rotations of atom 1 or 2 projected onto the qutrit subspace."""
    return {
        "X1": np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex),
        "Z1": np.diag([1.0, -1.0, 0.0]).astype(complex),
        "X2": np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=complex),
        "Z2": np.diag([1.0, 0.0, -1.0]).astype(complex),
    }


def c_tilde_basis_change() -> np.ndarray:
    p = qutrit_pulses()
    return expm(0.25j * np.pi * p["X1"]) @ expm(0.25j * np.pi * p["Z1"]) @ expm(0.5j * np.pi * p["X2"]) @ expm(-0.5j * np.pi * p["Z2"])


def strip_diagonal_phases(R: np.ndarray, dims: Sequence[int]) -> tuple[list[np.ndarray], float]:
    """Fit a diagonal ``R`` by a product of single-site diagonal phases.

    Returns the per-site phase vectors (global phase folded into site 0) and the
    max deviation of the fit; a non-diagonal ``R`` has residual ``inf``.
    """
    d = np.diag(R)
    if np.abs(R - np.diag(d)).max() > 1e-10:
        return [], float("inf")
    grids = np.indices(dims).reshape(len(dims), -1)
    A = np.array([(grids[s] == lev).astype(float) for s, dim in enumerate(dims) for lev in range(dim)]).T
    ang = np.angle(d / d[0])
    for _ in range(3):
        sol, *_ = np.linalg.lstsq(A, ang, rcond=None)
        resid = float(np.abs(np.exp(1j * (A @ sol)) * d[0] - d).max())
        if resid < 1e-10:
            break
        # re-wrap the angles toward the current fit
        ang = ang + 2 * np.pi * np.round(((A @ sol) - ang) / (2 * np.pi))
    out, k, glob = [], 0, d[0]
    for dim in dims:
        v = np.exp(1j * sol[k : k + dim])
        k += dim
        glob = glob * v[0]
        out.append(v / v[0])
    # level 0 of every site carries phase 1; the global phase rides on site 0
    out[0] = out[0] * glob
    return out, resid


@dataclass
class SynthesisReport:
    which: str
    distance_raw: float
    distance_after_stripping: float
    phases: list[np.ndarray]
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "distance_raw": self.distance_raw,
            "distance_after_stripping": self.distance_after_stripping,
            "stripped_phases": [[float(np.angle(z)) for z in site] for site in self.phases],
            "notes": self.notes,
        }


def synthesize_gate_from_hamiltonian(which: str, U: float = 1.0, tol: float = 1e-10) -> tuple[np.ndarray, SynthesisReport]:
    if which == "AB":
        G = expm(-4j * np.pi / (3 * U) * h_ab(U, -U))
        T = CZ3
        raw = float(np.abs(G - T).max())
        fit, res = strip_diagonal_phases(G @ T.conj().T, [3, 3])
        rep = SynthesisReport("AB", raw, min(raw, res), [] if raw <= tol else fit)
    elif which == "BC":
        # one C qubit (first) with its two B qutrits; H = n_c (n1 + n2) on each bond
        n1, n2 = n_ops_qutrit()
        nq = np.diag([0.0, 1.0])
        nb_ = n1 + n2
        H = np.kron(np.kron(nq, nb_), np.eye(3)) + np.kron(np.kron(nq, np.eye(3)), nb_)
        G = expm(1j * np.pi * U * H / U)
        Ct = np.diag([-1.0, 1.0, 1.0]).astype(complex)
        T = _controlled_pair(Ct)
        raw = float(np.abs(G - T).max())
        Ub = c_tilde_basis_change()
        ctil = Ub @ CC @ Ub.conj().T
        # full controlled-C through the basis change on both B qutrits
        W = kron(np.eye(2), Ub, Ub)
        cand = {"U^dag e U": W.conj().T @ G @ W, "U e U^dag": W @ G @ W.conj().T}
        target = _controlled_pair(CC)
        dist = {k: float(np.abs(v - target).max()) for k, v in cand.items()}
        best = min(dist, key=dist.get)
        rep = SynthesisReport(
            "BC",
            raw,
            dist[best],
            [],
            f"C-tilde distance {float(np.abs(ctil - Ct).max()):.2e}; conjugation order {best} ({dist})",
        )
        G = cand[best]
    elif which == "CD":
        # star of one C, one D, and one B qutrit on each: ordering c, d, b
        nq = np.diag([0.0, 1.0])
        n1, n2 = n_ops_qutrit()
        nb_ = n1 + n2
        H = kron(nq, nq, np.eye(3)) + kron(nq, np.eye(2), nb_) + kron(np.eye(2), nq, nb_)
        Xcd = kron(X2, X2, np.eye(3))
        half = expm(0.5j * np.pi * H)
        G = Xcd @ half @ Xcd @ half
        T = kron(CZ2, np.eye(3))
        raw = float(np.abs(G - T).max())
        fit, res = strip_diagonal_phases(G @ T.conj().T, [2, 2, 3])
        rep = SynthesisReport("CD", raw, res, fit, "BC and BD pairs net a single-site phase on B")
    else:
        raise ValueError("which must be AB, BC or CD")
    if rep.distance_after_stripping > tol:
        raise SynthesisMismatch(f"{which}: distance {rep.distance_after_stripping:.3e} after phase stripping")
    return G, rep


def _controlled_pair(u: np.ndarray) -> np.ndarray:
    """Qubit control (first) applying ``u`` to both of two qutrits."""
    out = np.zeros((18, 18), dtype=complex)
    out[:9, :9] = np.eye(9)
    out[9:, 9:] = np.kron(u, u)
    return out
