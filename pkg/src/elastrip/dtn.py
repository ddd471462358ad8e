"""Angular-spectrum machinery: mode decomposition, DtN symbol and its FFT application.

The field above the artificial plane x3 = h is a superposition of upward P and
S modes.  Per horizontal frequency xi that superposition determines a 3x3
symbol M(xi) mapping boundary displacement to surface traction; applying it
mode by mode realizes the transparent boundary condition.

Fields are cell-periodic: the continuum Fourier integral is replaced by a
lattice sum over xi = 2*pi*(j1/Lambda1, j2/Lambda2).  DFT convention: plain
forward sum, 1/N inverse, composed pairs are normalization free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConstraintError, ElastripError
from .params import (ElasticParams, StabilityConstants, stability_constants,
                     vertical_wavenumber, vertical_wavenumber_grid)


@dataclass(frozen=True)
class SpectralGrid:
    """Symmetric frequency lattice xi = 2*pi*(j1/L1, j2/L2), |j_i| <= N_i.

    Frequencies are stored in FFT order so lattice arrays align with numpy
    FFT axes.  The collocation grid has n_i = 2*N_i + 1 points per direction.
    """

    N1: int
    N2: int
    cell: tuple[float, float]

    def __post_init__(self):
        if self.N1 < 0 or self.N2 < 0:
            raise ConstraintError("mode counts must be nonnegative")

    @property
    def n1(self) -> int:
        return 2 * self.N1 + 1

    @property
    def n2(self) -> int:
        return 2 * self.N2 + 1

    @property
    def cell_area(self) -> float:
        return self.cell[0] * self.cell[1]

    def mode_indices(self):
        """Integer lattice indices (j1, j2) in FFT order."""
        j1 = np.fft.fftfreq(self.n1, d=1.0 / self.n1).round().astype(int)
        j2 = np.fft.fftfreq(self.n2, d=1.0 / self.n2).round().astype(int)
        return j1, j2

    def frequencies(self):
        """xi1[n1], xi2[n2] in FFT order."""
        j1, j2 = self.mode_indices()
        return 2 * np.pi * j1 / self.cell[0], 2 * np.pi * j2 / self.cell[1]

    def frequency_mesh(self):
        """Broadcast xi arrays XI1[n1,1], XI2[1,n2] and |xi|^2."""
        xi1, xi2 = self.frequencies()
        XI1 = xi1[:, None]
        XI2 = xi2[None, :]
        return XI1, XI2, XI1**2 + XI2**2

    def collocation_points(self):
        """Physical grid x1[n1], x2[n2] matching the DFT convention."""
        x1 = self.cell[0] * np.arange(self.n1) / self.n1
        x2 = self.cell[1] * np.arange(self.n2) / self.n2
        return x1, x2


@dataclass
class BoundaryTrace:
    """Complex 3-vector data on the horizontal grid at x3 = h.

    ``values`` has shape (3, n1, n2); coefficients are its DFT per component,
    normalized so values = sum_j coeff_j exp(i xi_j . x').
    """

    values: np.ndarray
    grid: SpectralGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (3, self.grid.n1, self.grid.n2):
            raise ConstraintError(
                f"trace shape {self.values.shape} != (3, {self.grid.n1}, {self.grid.n2})"
            )

    @property
    def coefficients(self) -> np.ndarray:
        return np.fft.fft2(self.values, axes=(1, 2)) / (self.grid.n1 * self.grid.n2)

    @classmethod
    def from_coefficients(cls, coeff: np.ndarray, grid: SpectralGrid) -> "BoundaryTrace":
        values = np.fft.ifft2(coeff, axes=(1, 2)) * (grid.n1 * grid.n2)
        return cls(values=values, grid=grid)


@dataclass
class ModeAmplitudes:
    """P/S amplitudes per lattice point: A_p scalar, A_s and A_s_tilde 3-vectors.

    A_s is orthogonal to (xi, gamma) in the unconjugated sense, and
    A_s = (xi, gamma) x A_s_tilde with |A_s|^2 = k_s^2 |A_s_tilde|^2.
    """

    A_p: np.ndarray        # (n1, n2)
    A_s: np.ndarray        # (3, n1, n2)
    A_s_tilde: np.ndarray  # (3, n1, n2)
    grid: SpectralGrid


@dataclass(frozen=True)
class DtnSymbol:
    """The 3x3 DtN matrix at one frequency, with rho = |xi|^2 + beta*gamma."""

    M: np.ndarray
    xi: tuple[float, float]
    rho: complex


def _beta_gamma(xi, params: ElasticParams):
    beta = vertical_wavenumber(params.k_p, xi)
    gamma = vertical_wavenumber(params.k_s, xi)
    return beta, gamma


def decomposition_matrices(xi, params: ElasticParams):
    """The 4x4 system matrix D_tilde and its restricted inverse D (4x3).

    D_tilde stacks the mode-superposition rows against the orthogonality row;
    D solves D_tilde @ (D @ v) = (v, 0) for every 3-vector v.  D is obtained
    by a numerical 4x4 solve rather than transcribing the closed form (the
    printed closed form has an ambiguous entry).
    """
    xi = np.asarray(xi, dtype=float)
    beta, gamma = _beta_gamma(xi, params)
    xi1, xi2 = float(xi[0]), float(xi[1])
    D_tilde = np.array([
        [xi1, 1, 0, 0],
        [xi2, 0, 1, 0],
        [beta, 0, 0, 1],
        [0, xi1, xi2, gamma],
    ], dtype=complex)
    rho = xi1**2 + xi2**2 + beta * gamma
    if abs(rho) < 1e-14 * max(1.0, params.k_s**2):
        raise ElastripError(f"decomposition matrix singular at xi={tuple(xi)}")
    rhs = np.vstack([np.eye(3, dtype=complex), np.zeros((1, 3), dtype=complex)])
    D = np.linalg.solve(D_tilde, rhs)
    return D_tilde, D


def dtn_symbol(xi, params: ElasticParams) -> DtnSymbol:
    """Evaluate the DtN symbol M(xi); traction coefficients are i*M(xi)*u_hat."""
    xi = np.asarray(xi, dtype=float)
    M = dtn_symbol_grid(np.array([[xi[0]]]), np.array([[xi[1]]]), params)[:, :, 0, 0]
    beta, gamma = _beta_gamma(xi, params)
    rho = complex(xi @ xi) + beta * gamma
    return DtnSymbol(M=M, xi=(float(xi[0]), float(xi[1])), rho=rho)


def dtn_symbol_grid(XI1: np.ndarray, XI2: np.ndarray, params: ElasticParams) -> np.ndarray:
    """DtN symbol on broadcastable frequency arrays; returns shape (3, 3, ...).

    Entry structure: symmetric in the upper-left 2x2 block, antisymmetric in
    the third row/column pair, gamma*omega^2/rho in the corner.
    """
    mu, w = params.mu, params.omega
    xi_sq = XI1**2 + XI2**2
    beta = vertical_wavenumber_grid(params.k_p, xi_sq)
    gamma = vertical_wavenumber_grid(params.k_s, xi_sq)
    rho = xi_sq + beta * gamma
    ks2 = params.k_s**2
    gmb = gamma - beta
    c = 2 * mu * xi_sq - w * w + 2 * mu * beta * gamma
    shape = np.broadcast_shapes(XI1.shape, XI2.shape)
    M = np.zeros((3, 3) + shape, dtype=complex)
    M[0, 0] = mu * (gmb * XI2**2 + ks2 * beta)
    M[0, 1] = -mu * XI1 * XI2 * gmb
    M[0, 2] = c * XI1
    M[1, 0] = M[0, 1]
    M[1, 1] = mu * (gmb * XI1**2 + ks2 * beta)
    M[1, 2] = c * XI2
    M[2, 0] = -c * XI1
    M[2, 1] = -c * XI2
    M[2, 2] = gamma * w * w
    return M / rho


def decompose_trace(trace: BoundaryTrace, params: ElasticParams) -> ModeAmplitudes:
    """Split a boundary trace into P and S amplitudes per lattice mode."""
    grid = trace.grid
    coeff = trace.coefficients
    xi1, xi2 = grid.frequencies()
    A_p = np.zeros((grid.n1, grid.n2), dtype=complex)
    A_s = np.zeros((3, grid.n1, grid.n2), dtype=complex)
    A_st = np.zeros((3, grid.n1, grid.n2), dtype=complex)
    ks2 = params.k_s**2
    for i1 in range(grid.n1):
        for i2 in range(grid.n2):
            xi = (xi1[i1], xi2[i2])
            _, D = decomposition_matrices(xi, params)
            A = D @ coeff[:, i1, i2]
            A_p[i1, i2] = A[0]
            A_s[:, i1, i2] = A[1:]
            _, gamma = _beta_gamma(np.asarray(xi), params)
            kvec = np.array([xi[0], xi[1], gamma], dtype=complex)
            A_st[:, i1, i2] = -np.cross(kvec, A[1:]) / ks2
    return ModeAmplitudes(A_p=A_p, A_s=A_s, A_s_tilde=A_st, grid=grid)


def reconstruct_trace(amps: ModeAmplitudes, params: ElasticParams) -> BoundaryTrace:
    """Inverse of decompose_trace: boundary values from (A_p, A_s)."""
    grid = amps.grid
    xi1, xi2 = grid.frequencies()
    _, _, xi_sq = grid.frequency_mesh()
    beta = vertical_wavenumber_grid(params.k_p, xi_sq)
    coeff = np.empty((3, grid.n1, grid.n2), dtype=complex)
    coeff[0] = amps.A_p * xi1[:, None] + amps.A_s[0]
    coeff[1] = amps.A_p * xi2[None, :] + amps.A_s[1]
    coeff[2] = amps.A_p * beta + amps.A_s[2]
    return BoundaryTrace.from_coefficients(coeff, grid)


def propagation_matrices(xi, params: ElasticParams):
    """M_p(xi), M_s(xi) of the upward representation, and rho."""
    xi = np.asarray(xi, dtype=float)
    beta, gamma = _beta_gamma(xi, params)
    xi1, xi2 = float(xi[0]), float(xi[1])
    rho = xi1**2 + xi2**2 + beta * gamma
    Mp = np.array([
        [xi1 * xi1, xi1 * xi2, xi1 * gamma],
        [xi1 * xi2, xi2 * xi2, xi2 * gamma],
        [xi1 * beta, xi2 * beta, beta * gamma],
    ], dtype=complex)
    Ms = np.array([
        [beta * gamma + xi2 * xi2, -xi1 * xi2, -gamma * xi1],
        [-xi1 * xi2, beta * gamma + xi1 * xi1, -gamma * xi2],
        [-xi1 * beta, -xi2 * beta, xi1 * xi1 + xi2 * xi2],
    ], dtype=complex)
    return Mp, Ms, rho


def extend_field(trace: BoundaryTrace, x3: float, params: ElasticParams) -> np.ndarray:
    """Evaluate the upward representation at height x3 >= h (relative offset).

    ``x3`` is the offset above the boundary plane (x3 - h >= 0).  Returns the
    3-vector field on the collocation grid.
    """
    if x3 < 0:
        raise ConstraintError(f"extension only valid above the plane, offset={x3}")
    grid = trace.grid
    coeff = trace.coefficients
    xi1, xi2 = grid.frequencies()
    out = np.empty_like(coeff)
    for i1 in range(grid.n1):
        for i2 in range(grid.n2):
            xi = np.array([xi1[i1], xi2[i2]])
            beta, gamma = _beta_gamma(xi, params)
            Mp, Ms, rho = propagation_matrices(xi, params)
            prop = (Mp * np.exp(1j * beta * x3) + Ms * np.exp(1j * gamma * x3)) / rho
            out[:, i1, i2] = prop @ coeff[:, i1, i2]
    return np.fft.ifft2(out, axes=(1, 2)) * (grid.n1 * grid.n2)


def mode_traction(xi, amps_p: complex, amps_s: np.ndarray, params: ElasticParams) -> np.ndarray:
    """Surface traction of a single upward mode, by analytic differentiation.

    The mode field is u = [A_p (xi, beta)^T e^{i beta t} + A_s e^{i gamma t}]
    e^{i xi.x'} with t = x3 - h; traction with nu = e3 is
    T u = 2 mu d3 u + lam (div u) e3 + mu e3 x (curl u), evaluated at t = 0
    with d_j -> i xi_j and d3 -> i beta (P part) or i gamma (S part).
    """
    xi = np.asarray(xi, dtype=float)
    beta, gamma = _beta_gamma(xi, params)
    lam, mu = params.lam, params.mu
    kp_vec = np.array([xi[0], xi[1], beta], dtype=complex)

    def traction_of(U, d3):
        # U: amplitude 3-vector, derivative d_j = i*q_j with q = (xi1, xi2, d3)
        q = np.array([xi[0], xi[1], d3], dtype=complex)
        div = 1j * (q @ U)
        curl = 1j * np.cross(q, U)
        e3 = np.array([0, 0, 1.0])
        return 2 * mu * 1j * d3 * U + lam * div * e3 + mu * np.cross(e3, curl)

    t_p = traction_of(amps_p * kp_vec, beta)
    t_s = traction_of(np.asarray(amps_s, dtype=complex), gamma)
    return t_p + t_s


def apply_dtn(trace: BoundaryTrace, params: ElasticParams) -> BoundaryTrace:
    """Apply the transparent boundary operator: DFT, multiply by i*M(xi), inverse DFT."""
    grid = trace.grid
    XI1, XI2, _ = grid.frequency_mesh()
    M = dtn_symbol_grid(XI1, XI2, params)
    coeff = trace.coefficients
    out = 1j * np.einsum("ij...,j...->i...", M, coeff)
    return BoundaryTrace.from_coefficients(out, grid)


def energy_flux(trace: BoundaryTrace, params: ElasticParams) -> tuple[float, float]:
    """Both sides of the boundary power identity for a trace.

    Returns (flux, power): flux = Im of the cell integral of conj(u).(DtN u),
    power = w^2 * sum over propagating modes of (beta|A_p|^2 + gamma|A_s~|^2)
    times the cell area.  The two agree mode by mode.
    """
    grid = trace.grid
    coeff = trace.coefficients
    XI1, XI2, xi_sq = grid.frequency_mesh()
    M = dtn_symbol_grid(XI1, XI2, params)
    tcoef = 1j * np.einsum("ij...,j...->i...", M, coeff)
    flux = grid.cell_area * float(np.imag(np.sum(np.conj(coeff) * tcoef)))
    amps = decompose_trace(trace, params)
    beta = vertical_wavenumber_grid(params.k_p, xi_sq)
    gamma = vertical_wavenumber_grid(params.k_s, xi_sq)
    w2 = params.omega**2
    p_term = np.where(xi_sq < params.k_p**2, np.real(beta) * np.abs(amps.A_p) ** 2, 0.0)
    s_term = np.where(xi_sq < params.k_s**2,
                      np.real(gamma) * np.sum(np.abs(amps.A_s_tilde) ** 2, axis=0), 0.0)
    power = grid.cell_area * w2 * float(np.sum(p_term) + np.sum(s_term))
    return flux, power


def verify_symbol_properties(params: ElasticParams, n_samples: int = 10_000,
                        seed: int = 0, slack: float = 1e-12) -> dict:
    """Sampled numerical check of the symbol band properties.

    Draws |xi| in (K w, 10 K w] and checks min eig Re(-iM) > 0; draws
    |xi| <= K w and checks max |M_ij| <= C_K w; checks the |rho| band bounds
    and the |gamma - beta| bound.  Violations are collected, not raised.
    """
    if n_samples <= 0:
        raise ConstraintError("n_samples must be positive")
    sc = stability_constants(params)
    w = params.omega
    rng = np.random.default_rng(seed)
    violations = []

    def sample_xi(r_lo, r_hi, n):
        r = np.sqrt(rng.uniform(r_lo**2, r_hi**2, size=n))
        th = rng.uniform(0, 2 * np.pi, size=n)
        return r * np.cos(th), r * np.sin(th), r

    # High band: positive definite Re(-iM)
    x1, x2, _ = sample_xi(sc.K * w * (1 + 1e-9), 10 * sc.K * w, n_samples)
    M = dtn_symbol_grid(x1, x2, params)
    Mh = np.moveaxis(M, (0, 1), (-2, -1))
    ReNeg = (-1j * Mh + np.conj(np.swapaxes(-1j * Mh, -2, -1))) / 2
    eigs = np.linalg.eigvalsh(ReNeg)
    min_eig = float(eigs[..., 0].min())
    if min_eig <= -slack:
        idx = int(np.argmin(eigs[..., 0]))
        violations.append(("high_band_definiteness", (float(x1[idx]), float(x2[idx])), min_eig))

    # Low band: entry bound
    x1, x2, _ = sample_xi(0.0, sc.K * w, n_samples)
    M = dtn_symbol_grid(x1, x2, params)
    entry_max = np.abs(M).max(axis=(0, 1))
    max_ratio = float(entry_max.max() / (sc.C_K * w))
    if max_ratio > 1 + slack:
        idx = int(np.argmax(entry_max))
        violations.append(("low_band_entry_bound", (float(x1[idx]), float(x2[idx])), max_ratio))

    # rho band bounds and |gamma - beta|
    x1, x2, r = sample_xi(0.0, sc.K * w, n_samples)
    xi_sq = x1**2 + x2**2
    beta = vertical_wavenumber_grid(params.k_p, xi_sq)
    gamma = vertical_wavenumber_grid(params.k_s, xi_sq)
    rho = np.abs(xi_sq + beta * gamma)
    kp, ks = params.k_p, params.k_s
    lo = np.where(r <= ks, kp**2, sc.c_K * w**2)
    hi = np.where(r <= kp, kp * ks, ks**2)
    bad = (rho < lo * (1 - 1e-12)) | (rho > hi * (1 + 1e-12))
    if bad.any():
        idx = int(np.argmax(bad))
        violations.append(("rho_band", (float(x1[idx]), float(x2[idx])), float(rho[idx])))
    gb = np.abs(gamma - beta)
    if (gb > math.sqrt(ks**2 - kp**2) * (1 + 1e-12)).any():
        idx = int(np.argmax(gb))
        violations.append(("gamma_minus_beta", (float(x1[idx]), float(x2[idx])), float(gb[idx])))

    return {
        "n_samples": n_samples,
        "seed": seed,
        "K": sc.K,
        "C_K": sc.C_K,
        "c_K": sc.c_K,
        "min_eig_high_band": min_eig,
        "max_entry_ratio_low_band": max_ratio,
        "violations": violations,
    }


def verify_symbol_suite(seed: int = 0, n_materials: int = 10,
                        n_xi: int = 10_000, slack: float = 1e-12) -> dict:
    """Run the symbol checks over randomized admissible material parameters."""
    if n_materials <= 0:
        raise ConstraintError("n_materials must be positive")
    rng = np.random.default_rng(seed)
    reports = []
    n_violations = 0
    for k in range(n_materials):
        mu = float(rng.uniform(0.2, 4.0))
        lam = float(rng.uniform(-0.5 * mu, 5.0))   # keeps lam + 2mu/3 > 0
        omega = float(rng.uniform(0.1, 8.0))
        params = ElasticParams(lam=lam, mu=mu, omega=omega)
        rep = verify_symbol_properties(params, n_samples=n_xi, seed=seed + 1000 + k,
                                  slack=slack)
        rep["material"] = {"lam": lam, "mu": mu, "omega": omega}
        n_violations += len(rep["violations"])
        reports.append(rep)
    return {
        "n_materials": n_materials,
        "n_xi": n_xi,
        "n_checks": 4 * n_materials,
        "n_violations": n_violations,
        "reports": reports,
    }
