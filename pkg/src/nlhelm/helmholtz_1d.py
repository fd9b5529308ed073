"""One-dimensional nonlinear Helmholtz boundary-value problem.

Compact 4th-order rows in the layers and exterior, 7-node one-sided rows at
material interfaces, and two-way boundary rows that inject the prescribed
incoming waves while passing outgoing waves through the discrete dispersion
root q. Also provides an exact transfer-matrix oracle for linear stacks.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._system import KerrSystem
from .errors import DegenerateRoot, OracleRequiresLinear, UnresolvedWave
from .fields import (Grid1D, MaterialStack, NodeClass, classify_nodes,
                     homogeneous_stack, sample_material)

__all__ = [
    "Abc1DClosure",
    "Incoming1D",
    "characteristic_root",
    "root_from_ksq",
    "assemble_1d",
    "build_problem_1d",
    "transfer_matrix_linear",
    "solve_1d",
    "extract_reflection_transmission",
]

# 7-node interface combination: difference of the two one-sided first
# derivatives, already multiplied by 66 (divide by 66 h when applying)
_IFACE_W = np.array([4.0, -27.0, 108.0, -170.0, 108.0, -27.0, 4.0]) / 66.0


@dataclass(frozen=True)
class Abc1DClosure:
    """Ghost-node elimination data: E_ghost = injection*Einc + propagation*E_edge."""

    q: complex

    @property
    def propagation_weight(self) -> complex:
        return self.q

    @property
    def injection_weight(self) -> complex:
        q = self.q
        return (1.0 / q - q) * q**-3


@dataclass(frozen=True)
class Incoming1D:
    EincL: complex = 0.0
    EincR: complex = 0.0


def root_from_ksq(k_sq: complex, h: float) -> complex:
    """Root of q + 1/q = 2 - k^2 h^2 on the outgoing/damped branch.

    Used directly by the transverse-mode boundary conditions where k^2 may be
    complex. Branch rule: if both roots sit on the unit circle (propagating
    mode) take Im q > 0 (the forward wave); otherwise take |q| < 1 so the
    outgoing branch decays away from the slab.
    """
    k2h2 = complex(k_sq) * h * h
    if abs(k2h2.imag) <= 1e-14 * max(1.0, abs(k2h2.real)) and k2h2.real >= 4.0:
        raise UnresolvedWave(
            f"k^2 h^2 = {k2h2.real:.6g} >= 4: wave not resolved by the grid"
        )
    if abs(k2h2 - 2.0) < 1e-14 * max(1.0, abs(k2h2)):
        raise DegenerateRoot("k^2 h^2 = 2: characteristic parameterization singular")
    s = 2.0 - k2h2
    d = cmath.sqrt(s * s - 4.0)
    if (s.conjugate() * d).real < 0.0:
        d = -d
    q_big = (s + d) / 2.0  # |q_big| >= 1, no cancellation
    q_small = 1.0 / q_big
    if abs(abs(q_big) - 1.0) <= 1e-12 and abs(abs(q_small) - 1.0) <= 1e-12:
        return q_big if q_big.imag > 0 else q_small
    return q_small


def characteristic_root(k0: float, h: float) -> Abc1DClosure:
    """Discrete dispersion root for the exterior medium.

    k^2 = k0^2 / (1 + k0^2 h^2 / 12) is the scheme's effective wavenumber; in
    the propagating regime |q| = 1 and q = e^{i k0 h} (1 + O(h^5)).
    """
    if k0 <= 0 or h <= 0:
        raise ValueError("k0 and h must be positive")
    k_sq = k0 * k0 / (1.0 + k0 * k0 * h * h / 12.0)
    return Abc1DClosure(q=root_from_ksq(k_sq, h))


# --- assembly ---------------------------------------------------------------

def _build_matrices(grid: Grid1D, mat: MaterialStack, inc: Incoming1D):
    """(A_lin, C, b, closure): complex system A_lin E + C P(E) = b."""
    N, h = grid.N, grid.h
    k0 = mat.k0
    R = grid.num_nodes
    closure = characteristic_root(k0, h)
    q = closure.q
    c = (1.0 + k0 * k0 * h * h / 12.0) / (h * h)

    classes = classify_nodes(grid, mat)
    A = sp.lil_matrix((R, R), dtype=np.complex128)
    C = sp.lil_matrix((R, R), dtype=np.complex128)
    b = np.zeros(R, dtype=np.complex128)

    # boundary rows: exterior compact row with the ghost eliminated through q
    for r, einc in ((0, inc.EincL), (R - 1, inc.EincR)):
        inner = 1 if r == 0 else R - 2
        A[r, r] = -2.0 * c + c * q + k0 * k0
        A[r, inner] = c
        b[r] = -c * closure.injection_weight * einc

    for n in range(-2, N + 3):
        r = grid.index(n)
        nu_l, eps_l = sample_material(mat, grid, n, "left")
        nu_r, eps_r = sample_material(mat, grid, n, "right")
        if classes[r] is NodeClass.INTERFACE and (nu_l != nu_r or eps_l != eps_r):
            # genuine material jump: one-sided derivative matching row
            for j, w in zip(range(-3, 4), _IFACE_W):
                A[r, r + j] += w / h
            A[r, r] += (6.0 * h * k0 * k0 / 11.0) * 0.5 * (nu_l**2 + nu_r**2)
            C[r, r] += (6.0 * h * k0 * k0 / 11.0) * 0.5 * (eps_l + eps_r)
        else:
            # compact row; exterior nodes sample as (1, 0) so the same recipe
            # covers the layers, matched partition nodes and the linear gap
            W = nu_r * nu_r
            eps = eps_r
            off = 1.0 / (h * h) + k0 * k0 * W / 12.0
            A[r, r - 1] += off
            A[r, r + 1] += off
            A[r, r] += -2.0 / (h * h) + (10.0 / 12.0) * k0 * k0 * W
            if eps != 0.0:
                C[r, r - 1] += k0 * k0 * eps / 12.0
                C[r, r + 1] += k0 * k0 * eps / 12.0
                C[r, r] += (10.0 / 12.0) * k0 * k0 * eps
    return A.tocsr(), C.tocsr(), b, closure


class Problem1D(KerrSystem):
    """1D system in the solver interface."""

    def __init__(self, grid: Grid1D, mat: MaterialStack, inc: Incoming1D):
        A, C, b, closure = _build_matrices(grid, mat, inc)
        super().__init__(A, C, b, mat.sigma, field_shape=(grid.num_nodes,))
        self.grid = grid
        self.mat = mat
        self.inc = inc
        self.closure = closure
        self._vacuum_lu = None

    def vacuum_operator(self) -> sp.csr_matrix:
        vac = homogeneous_stack(self.mat.k0, self.grid.Zmax, sigma=self.mat.sigma)
        A, _, _, _ = _build_matrices(self.grid, vac, self.inc)
        return A

    def vacuum_solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._vacuum_lu is None:
            self._vacuum_lu = spla.splu(self.vacuum_operator().tocsc())
        return self._vacuum_lu.solve(rhs)


def build_problem_1d(grid: Grid1D, mat: MaterialStack, inc: Incoming1D) -> Problem1D:
    return Problem1D(grid, mat, inc)


def assemble_1d(grid: Grid1D, mat: MaterialStack, inc: Incoming1D,
                E: np.ndarray) -> np.ndarray:
    """Residual of the discrete equations at the field E (complex, length N+7)."""
    E = np.asarray(E, dtype=np.complex128).reshape(-1)
    if E.shape[0] != grid.num_nodes:
        raise ValueError(f"field length {E.shape[0]} != {grid.num_nodes}")
    return Problem1D(grid, mat, inc).residual_complex(E)


def solve_1d(grid: Grid1D, mat: MaterialStack, inc: Incoming1D,
             config=None, method: str = "newton"):
    """Solve the 1D problem; returns (field, SolveReport)."""
    from . import solvers  # local import to keep module load order simple

    problem = Problem1D(grid, mat, inc)
    return solvers.solve(problem, config=config, method=method)


def extract_reflection_transmission(E: np.ndarray, grid: Grid1D,
                                    closure: Abc1DClosure,
                                    inc: Incoming1D) -> tuple[complex, complex]:
    """Outgoing amplitudes (R at the left, T at the right) of a solved field.

    Decomposes the exterior solution in the discrete two-wave basis: on the
    left E_n = EincL q^n + R q^-n, on the right E_n = T q^(n-N) + EincR q^-(n-N).
    """
    q = closure.q
    E = np.asarray(E).reshape(-1)
    R = (E[grid.index(-1)] - inc.EincL / q) / q
    T = (E[grid.index(grid.N + 1)] - inc.EincR / q) / q
    return R, T


# --- exact linear oracle ----------------------------------------------------

@dataclass(frozen=True)
class TransferMatrixResult:
    R: complex
    T: complex
    evaluate: Callable[[np.ndarray], np.ndarray]


def _interface_matrix(nu_a: float, nu_b: float) -> np.ndarray:
    r = nu_a / nu_b
    return 0.5 * np.array([[1.0 + r, 1.0 - r], [1.0 - r, 1.0 + r]], dtype=np.complex128)


def transfer_matrix_linear(mat: MaterialStack, inc: Incoming1D) -> TransferMatrixResult:
    """Exact reflection/transmission of a linear layered stack by 2x2
    interface/propagation composition, plus a field evaluator for any z.

    Raises OracleRequiresLinear if any layer has eps != 0.
    """
    if not mat.is_linear():
        raise OracleRequiresLinear("transfer-matrix oracle is linear only")
    k0 = mat.k0
    # regions: left exterior, layers, right exterior; (nu, z_start) with
    # coefficients referenced at z_start (left exterior referenced at 0)
    nus = [1.0] + [lay.nu for lay in mat.layers] + [1.0]
    starts = [0.0] + [lay.z_from for lay in mat.layers] + [mat.Zmax]

    M = np.eye(2, dtype=np.complex128)
    for i in range(1, len(nus)):
        M = _interface_matrix(nus[i - 1], nus[i]) @ M
        if i < len(nus) - 1:
            L = mat.layers[i - 1].z_to - mat.layers[i - 1].z_from
            ph = np.exp(1j * nus[i] * k0 * L)
            M = np.diag([ph, 1.0 / ph]) @ M
    # [T, EincR]^T = M [EincL, R]^T
    R = (inc.EincR - M[1, 0] * inc.EincL) / M[1, 1]
    T = M[0, 0] * inc.EincL + M[0, 1] * R

    # region coefficients for the evaluator
    coeff = [(np.complex128(inc.EincL), np.complex128(R))]
    v = np.array([inc.EincL, R], dtype=np.complex128)
    for i in range(1, len(nus)):
        v = _interface_matrix(nus[i - 1], nus[i]) @ v
        coeff.append((v[0], v[1]))
        if i < len(nus) - 1:
            L = mat.layers[i - 1].z_to - mat.layers[i - 1].z_from
            ph = np.exp(1j * nus[i] * k0 * L)
            v = np.diag([ph, 1.0 / ph]) @ v

    edges = [lay.z_from for lay in mat.layers] + [mat.Zmax]

    def evaluate(z):
        z = np.asarray(z, dtype=float)
        scalar = z.ndim == 0
        z = np.atleast_1d(z)
        region = np.searchsorted(np.asarray(edges), z, side="right")
        out = np.empty(z.shape, dtype=np.complex128)
        for i in range(len(nus)):
            sel = region == i
            if not sel.any():
                continue
            a, bb = coeff[i]
            ph = np.exp(1j * nus[i] * k0 * (z[sel] - starts[i]))
            out[sel] = a * ph + bb / ph
        return out[0] if scalar else out

    return TransferMatrixResult(R=complex(R), T=complex(T), evaluate=evaluate)
