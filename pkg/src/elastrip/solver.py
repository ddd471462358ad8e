"""Galerkin discretization and solution of the strip variational problem.

Flat reference surface: Fourier modes decouple, each mode is a dense 1D
system solved directly.  Rough surface: the flattening transform turns the
problem into a variable-coefficient one on the same reference strip, applied
matrix-free (pseudospectral products) and solved with GMRES preconditioned
by the flat per-mode blocks.  The DtN boundary term is mode-diagonal in both
cases because the transform is the identity at the top plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .dtn import BoundaryTrace, SpectralGrid, dtn_symbol_grid, energy_flux
from .errors import ConstraintError, ElastripError, NonConvergenceError
from .geometry import CutoffFn, SurfaceProfile, transform_fields
from .mesh import StripMesh
from .params import ElasticParams

_ENERGY_EPS = 1e-14


# ---------------------------------------------------------------------------
# discrete fields
# ---------------------------------------------------------------------------

@dataclass
class DiscreteField:
    """Mode-coefficient field on the strip: coeff[3, n1, n2, n_nodes].

    The bottom node carries the essential condition u = 0; ``free_vector``
    flattens the remaining unknowns for the linear solver.
    """

    coeff: np.ndarray
    mesh: StripMesh

    def __post_init__(self):
        g = self.mesh.grid
        expect = (3, g.n1, g.n2, self.mesh.n_nodes)
        if self.coeff.shape != expect:
            raise ConstraintError(f"field shape {self.coeff.shape} != {expect}")

    @classmethod
    def zeros(cls, mesh: StripMesh) -> "DiscreteField":
        g = mesh.grid
        return cls(np.zeros((3, g.n1, g.n2, mesh.n_nodes), dtype=complex), mesh)

    @classmethod
    def from_free_vector(cls, vec: np.ndarray, mesh: StripMesh) -> "DiscreteField":
        g = mesh.grid
        f = cls.zeros(mesh)
        f.coeff[:, :, :, 1:] = vec.reshape(3, g.n1, g.n2, mesh.n_nodes - 1)
        return f

    def free_vector(self) -> np.ndarray:
        return self.coeff[:, :, :, 1:].ravel()

    def top_trace(self) -> BoundaryTrace:
        return BoundaryTrace.from_coefficients(self.coeff[:, :, :, -1], self.mesh.grid)

    def bottom_trace_zero(self) -> bool:
        return bool(np.all(self.coeff[:, :, :, 0] == 0))

    # -- norms (exact quadrature of the piecewise-linear field) --------------

    def _mode_quadratics(self):
        g = self.mesh.grid
        _, _, xi_sq = g.frequency_mesh()
        c = self.coeff
        M, S = self.mesh.Mz, self.mesh.Sz
        l2 = np.einsum("cabm,mn,cabn->ab", np.conj(c), M, c).real
        dz = np.einsum("cabm,mn,cabn->ab", np.conj(c), S, c).real
        horiz = xi_sq * l2
        return l2, dz, horiz

    def l2_norm_sq(self) -> float:
        l2, _, _ = self._mode_quadratics()
        return float(self.mesh.grid.cell_area * l2.sum())

    def dz_norm_sq(self) -> float:
        _, dz, _ = self._mode_quadratics()
        return float(self.mesh.grid.cell_area * dz.sum())

    def grad_norm_sq(self) -> float:
        _, dz, horiz = self._mode_quadratics()
        return float(self.mesh.grid.cell_area * (dz.sum() + horiz.sum()))

    def vh_norm(self) -> float:
        l2, dz, horiz = self._mode_quadratics()
        return float(np.sqrt(self.mesh.grid.cell_area * (l2.sum() + dz.sum() + horiz.sum())))

    # -- pointwise evaluation -------------------------------------------------

    def modes_at_z(self, z) -> np.ndarray:
        """Linear interpolation of mode coefficients; shape (3, n1, n2, len(z))."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        nodes = self.mesh.nodes
        idx = np.clip(np.searchsorted(nodes, z) - 1, 0, self.mesh.n_elements - 1)
        t = (z - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
        return self.coeff[..., idx] * (1 - t) + self.coeff[..., idx + 1] * t

    def values_at_points(self, x1, x2, z) -> np.ndarray:
        """Evaluate the field at arbitrary points (arrays of equal shape)."""
        x1 = np.asarray(x1, dtype=float).ravel()
        x2 = np.asarray(x2, dtype=float).ravel()
        z = np.asarray(z, dtype=float).ravel()
        modes = self.modes_at_z(z)  # (3, n1, n2, P)
        xi1, xi2 = self.mesh.grid.frequencies()
        ph = np.exp(1j * (xi1[:, None] * x1[None, :]))      # (n1, P)
        ph2 = np.exp(1j * (xi2[:, None] * x2[None, :]))     # (n2, P)
        return np.einsum("cabp,ap,bp->cp", modes, ph, ph2)


def vh_norm(field: DiscreteField) -> float:
    """Energy norm (||grad u||^2 + ||u||^2)^{1/2} of a discrete field."""
    return field.vh_norm()


# ---------------------------------------------------------------------------
# per-mode coefficient matrices of the flat sesquilinear form
# ---------------------------------------------------------------------------

def _mode_density(grid: SpectralGrid, params: ElasticParams) -> np.ndarray:
    """Density matrix K[(a,k),(b,j)] of the flat integrand per lattice mode.

    a/b index (value, z-derivative) of test/trial, k/j the vector component.
    The integrand is 2 mu grad:grad + lam div div - mu curl.curl - w^2 u.v,
    with horizontal derivatives i*xi.
    """
    XI1, XI2, _ = grid.frequency_mesh()
    n1, n2 = grid.n1, grid.n2
    G = np.zeros((2, 3, 3, 3, n1, n2), dtype=complex)  # [a, j, comp, dim, m1, m2]
    U = np.zeros((2, 3, 3), dtype=complex)
    for j in range(3):
        G[0, j, j, 0] = 1j * XI1
        G[0, j, j, 1] = 1j * XI2
        G[1, j, j, 2] = 1.0
        U[0, j, j] = 1.0
    tr = G[:, :, 0, 0] + G[:, :, 1, 1] + G[:, :, 2, 2]
    curl = np.stack([
        G[:, :, 2, 1] - G[:, :, 1, 2],
        G[:, :, 0, 2] - G[:, :, 2, 0],
        G[:, :, 1, 0] - G[:, :, 0, 1],
    ], axis=2)  # [a, j, i, m1, m2]
    lam, mu, w = params.lam, params.mu, params.omega
    K = (2 * mu * np.einsum("bjcdmn,akcdmn->akbjmn", G, np.conj(G))
         + lam * np.einsum("bjmn,akmn->akbjmn", tr, np.conj(tr))
         - mu * np.einsum("bjimn,akimn->akbjmn", curl, np.conj(curl)))
    K = K - w * w * np.einsum("bjc,akc->akbj", U, np.conj(U))[..., None, None]
    return K


def assemble_flat_blocks(mesh: StripMesh, params: ElasticParams) -> np.ndarray:
    """Dense per-mode operator blocks (free DOFs only): shape (n1, n2, 3*Nz, 3*Nz).

    Each block is the 1D Galerkin matrix of the flat form for its mode,
    including the DtN boundary term at the top node.
    """
    g = mesh.grid
    K = _mode_density(g, params)
    XI1, XI2, _ = g.frequency_mesh()
    Msym = dtn_symbol_grid(XI1, XI2, params)
    nn = mesh.n_nodes
    base = {(0, 0): mesh.Mz, (0, 1): mesh.Dz, (1, 0): mesh.Dz.T, (1, 1): mesh.Sz}
    A = np.zeros((g.n1, g.n2, 3 * nn, 3 * nn), dtype=complex)
    for (a, b), Bmat in base.items():
        # K[a,k,b,j,m1,m2] x Bmat[m,n] -> block (k,m),(j,n)
        A += np.einsum("kjmn,pq->mnkpjq", K[a, :, b, :, :, :], Bmat).reshape(
            g.n1, g.n2, 3 * nn, 3 * nn)
    top = nn - 1
    for k in range(3):
        for j in range(3):
            A[:, :, k * nn + top, j * nn + top] -= 1j * Msym[k, j]
    A *= g.cell_area
    free = np.concatenate([np.arange(c * nn + 1, (c + 1) * nn) for c in range(3)])
    return A[:, :, free[:, None], free[None, :]]


def norm_gram_blocks(mesh: StripMesh) -> np.ndarray:
    """Per-mode Gram matrices of the energy norm on free DOFs."""
    g = mesh.grid
    _, _, xi_sq = g.frequency_mesh()
    Mf = mesh.Mz[1:, 1:]
    Sf = mesh.Sz[1:, 1:]
    nfree = mesh.n_nodes - 1
    G = np.zeros((g.n1, g.n2, 3 * nfree, 3 * nfree), dtype=complex)
    for c in range(3):
        sl = slice(c * nfree, (c + 1) * nfree)
        G[:, :, sl, sl] = ((1 + xi_sq)[..., None, None] * Mf + Sf)
    return G * g.cell_area


# ---------------------------------------------------------------------------
# transformed (rough-surface) operator
# ---------------------------------------------------------------------------

class TransformCoefficients:
    """Flattening-map data sampled at the padded collocation x quad grid."""

    def __init__(self, mesh: StripMesh, f0: SurfaceProfile, f: SurfaceProfile,
                 cutoff: CutoffFn):
        x1, x2 = mesh.collocation_padded()
        X1 = x1[:, None, None, None]
        X2 = x2[None, :, None, None]
        Z = mesh.zq[None, None, :, :]
        _x3, J1, J2, J3 = transform_fields(X1, X2, Z, f0, f, cutoff)
        if np.abs(J3).max() >= 1:
            from .errors import SingularTransformError
            raise SingularTransformError(
                f"max |J3| = {np.abs(J3).max():.4f} >= 1; "
                "surface amplitude too large for cutoff margins"
            )
        self.J1, self.J2, self.J3 = J1, J2, J3
        self.det = 1.0 + J3
        self.x3 = np.broadcast_to(np.asarray(_x3), np.broadcast_shapes(
            np.shape(_x3), J3.shape)).copy()
        self.mesh = mesh
        self.f0, self.f, self.cutoff = f0, f, cutoff

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.J1 == 0) and np.all(self.J2 == 0) and np.all(self.J3 == 0))


def _physical_gradient(Gy, coeffs: TransformCoefficients | None):
    """Chain rule: Gx[c, j] = sum_a Gy[c, a] Jinv[a, j] (rank-one structure)."""
    if coeffs is None:
        return Gy
    J1, J2, det = coeffs.J1, coeffs.J2, coeffs.det
    Gx = np.empty_like(Gy)
    Gx[:, 0] = Gy[:, 0] - Gy[:, 2] * (J1 / det)
    Gx[:, 1] = Gy[:, 1] - Gy[:, 2] * (J2 / det)
    Gx[:, 2] = Gy[:, 2] / det
    return Gx


def _dual_gradient(Sx, coeffs: TransformCoefficients | None):
    """Adjoint of the chain rule: Sy[c, a] = sum_j Sx[c, j] Jinv[a, j]."""
    if coeffs is None:
        return Sx
    J1, J2, det = coeffs.J1, coeffs.J2, coeffs.det
    Sy = np.empty_like(Sx)
    Sy[:, 0] = Sx[:, 0]
    Sy[:, 1] = Sx[:, 1]
    Sy[:, 2] = (-J1 * Sx[:, 0] - J2 * Sx[:, 1] + Sx[:, 2]) / det
    return Sy


class StripOperator(scipy.sparse.linalg.LinearOperator):
    """Matrix-free action of the (possibly transformed) sesquilinear form.

    The volume terms are evaluated pseudospectrally at quadrature points with
    Jacobian-weighted physical gradients; the DtN term is mode-diagonal at the
    top node.  With an identity transform this action coincides with the
    assembled flat blocks to roundoff.
    """

    def __init__(self, mesh: StripMesh, params: ElasticParams,
                 coeffs: TransformCoefficients | None = None):
        self.mesh = mesh
        self.params = params
        self.coeffs = coeffs if (coeffs is None or not coeffs.is_identity) else None
        g = mesh.grid
        xi1, xi2 = g.frequencies()
        self._ixi1 = 1j * xi1[None, :, None, None, None]
        self._ixi2 = 1j * xi2[None, None, :, None, None]
        XI1, XI2, _ = g.frequency_mesh()
        self._Msym = dtn_symbol_grid(XI1, XI2, params)
        n = 3 * g.n1 * g.n2 * (mesh.n_nodes - 1)
        super().__init__(dtype=complex, shape=(n, n))

    def _matvec(self, vec: np.ndarray) -> np.ndarray:
        mesh, params = self.mesh, self.params
        g = mesh.grid
        field = DiscreteField.from_free_vector(np.asarray(vec).ravel(), mesh)
        U = field.coeff
        Uq = mesh.eval_at_quad(U)            # (3, n1, n2, e, q)
        dUq = mesh.deriv_at_quad(U)
        Gy_hat = np.stack([self._ixi1 * Uq, self._ixi2 * Uq, dUq], axis=1)
        u_phys = mesh.to_physical(Uq, ax1=1, ax2=2)
        Gy = mesh.to_physical(Gy_hat, ax1=2, ax2=3)
        Gx = _physical_gradient(Gy, self.coeffs)

        lam, mu, w = params.lam, params.mu, params.omega
        trG = Gx[0, 0] + Gx[1, 1] + Gx[2, 2]
        curl = np.stack([Gx[2, 1] - Gx[1, 2], Gx[0, 2] - Gx[2, 0], Gx[1, 0] - Gx[0, 1]])
        Sx = 2 * mu * Gx
        for c in range(3):
            Sx[c, c] += lam * trG
        # -mu curl.curl contribution to the gradient dual
        Sx[2, 1] -= mu * curl[0]
        Sx[1, 2] += mu * curl[0]
        Sx[0, 2] -= mu * curl[1]
        Sx[2, 0] += mu * curl[1]
        Sx[1, 0] -= mu * curl[2]
        Sx[0, 1] += mu * curl[2]

        wgt = mesh.wq[None, None, :, :] * mesh.point_weight
        if self.coeffs is not None:
            wgt = wgt * self.coeffs.det
        Sy = _dual_gradient(Sx, self.coeffs) * wgt
        mass_dual = -(w * w) * u_phys * wgt

        Sy_hat = mesh.to_modes_adjoint(Sy, ax1=2, ax2=3)
        mass_hat = mesh.to_modes_adjoint(mass_dual, ax1=1, ax2=2)
        # duals of the value DOFs: mass + conj(i xi) pullback of horizontal grads
        Wq = mass_hat - self._ixi1[0] * Sy_hat[:, 0] - self._ixi2[0] * Sy_hat[:, 1]
        Wdq = Sy_hat[:, 2]
        R = mesh.scatter_from_quad(Wq, Wdq)

        # DtN boundary term at the top node
        top = U[:, :, :, -1]
        R[:, :, :, -1] -= g.cell_area * 1j * np.einsum("kjab,jab->kab", self._Msym, top)
        return R[:, :, :, 1:].ravel()


def assemble_rhs(mesh: StripMesh, source,
                 coeffs: TransformCoefficients | None = None,
                 physical: bool = False) -> np.ndarray:
    """Load vector of G(v) = -int g . conj(v) detJ over free DOFs.

    With ``physical=True`` the source is composed with the flattening map
    (evaluated at the physical height), so two different transforms of the
    same physical problem assemble consistent data.
    """
    x1, x2 = mesh.collocation_padded()
    X1 = x1[:, None, None, None]
    X2 = x2[None, :, None, None]
    Z = mesh.zq[None, None, :, :]
    if physical and coeffs is not None:
        Z = coeffs.x3
    gvals = source.values(X1, X2, Z).astype(complex)  # (3, P1, P2, e, q)
    wgt = mesh.wq[None, None, :, :] * mesh.point_weight
    if coeffs is not None and not coeffs.is_identity:
        wgt = wgt * coeffs.det
    Wq = mesh.to_modes_adjoint(-gvals * wgt, ax1=1, ax2=2)
    R = mesh.scatter_from_quad(Wq)
    return R[:, :, :, 1:].ravel()


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

@dataclass
class SolveInfo:
    residual: float
    iterations: int
    method: str


@dataclass
class LinearSystem:
    """Assembled variational system: flat systems are mode-decoupled."""

    mesh: StripMesh
    params: ElasticParams
    rhs: np.ndarray
    coeffs: TransformCoefficients | None

    @property
    def mode_coupling(self) -> bool:
        return self.coeffs is not None and not self.coeffs.is_identity


def assemble_system(mesh: StripMesh, params: ElasticParams, f0: SurfaceProfile,
                    f: SurfaceProfile, cutoff: CutoffFn, source,
                    physical: bool = True) -> LinearSystem:
    """Full assembly for a surface pair: transform data plus load vector."""
    coeffs = None
    if f.sup_distance_1inf(f0) > 0:
        coeffs = TransformCoefficients(mesh, f0, f, cutoff)
    rhs = assemble_rhs(mesh, source, coeffs, physical=physical)
    return LinearSystem(mesh=mesh, params=params, rhs=rhs, coeffs=coeffs)


def solve_system(system: LinearSystem, tol: float = 1e-9):
    return solve_field(system.mesh, system.params, system.rhs, system.coeffs,
                       tol=tol)


def solve_flat(mesh: StripMesh, params: ElasticParams, rhs: np.ndarray,
               blocks: np.ndarray | None = None) -> tuple[DiscreteField, SolveInfo]:
    """Direct per-mode solve of the flat (mode-decoupled) system."""
    g = mesh.grid
    nfree = mesh.n_nodes - 1
    if blocks is None:
        blocks = assemble_flat_blocks(mesh, params)
    b = rhs.reshape(3, g.n1, g.n2, nfree)
    x = np.empty_like(b)
    for i1 in range(g.n1):
        for i2 in range(g.n2):
            bm = b[:, i1, i2, :].reshape(3 * nfree)
            x[:, i1, i2, :] = np.linalg.solve(blocks[i1, i2], bm).reshape(3, nfree)
    field = DiscreteField.from_free_vector(x.ravel(), mesh)
    op = StripOperator(mesh, params)
    res = np.linalg.norm(op @ field.free_vector() - rhs)
    scale = np.linalg.norm(rhs)
    info = SolveInfo(residual=res / scale if scale > 0 else res, iterations=1, method="direct")
    return field, info


def solve_field(mesh: StripMesh, params: ElasticParams, rhs: np.ndarray,
                coeffs: TransformCoefficients | None = None,
                tol: float = 1e-9) -> tuple[DiscreteField, SolveInfo]:
    """Solve the variational system; dispatches flat/rough on the transform."""
    if coeffs is None or coeffs.is_identity:
        return solve_flat(mesh, params, rhs)
    op = StripOperator(mesh, params, coeffs)
    g = mesh.grid
    nfree = mesh.n_nodes - 1
    blocks = assemble_flat_blocks(mesh, params)
    inv_blocks = np.linalg.inv(blocks)

    def precond(v):
        V = v.reshape(3, g.n1, g.n2, nfree)
        V = np.moveaxis(V, 0, 2).reshape(g.n1, g.n2, 3 * nfree)
        out = np.einsum("abij,abj->abi", inv_blocks, V)
        out = np.moveaxis(out.reshape(g.n1, g.n2, 3, nfree), 2, 0)
        return out.ravel()

    Mop = scipy.sparse.linalg.LinearOperator(op.shape, matvec=precond, dtype=complex)
    maxiter = max(50, int(10 * np.sqrt(op.shape[0])))
    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    x, code = scipy.sparse.linalg.gmres(op, rhs, rtol=tol / 10, atol=0.0,
                                        M=Mop, maxiter=maxiter, restart=60,
                                        callback=count, callback_type="pr_norm")
    res = np.linalg.norm(op @ x - rhs)
    scale = np.linalg.norm(rhs)
    rel = res / scale if scale > 0 else res
    if code != 0 or rel > tol:
        raise NonConvergenceError(
            f"GMRES failed: code={code}, relative residual {rel:.3e} > {tol:.1e}",
            residual=rel)
    return DiscreteField.from_free_vector(x, mesh), SolveInfo(rel, iters, "gmres")


# ---------------------------------------------------------------------------
# independent flat-mode oracle (finite differences)
# ---------------------------------------------------------------------------

def flat_mode_oracle(xi, params: ElasticParams, g_profile, h: float, m_ref: float,
                     n_fine: int = 2048):
    """Dense FD solve of the per-mode two-point boundary value problem.

    Second-order central differences for the interior Navier system,
    u(m_ref) = 0 and the Robin top condition T u = i M(xi) u with a
    second-order one-sided derivative.  Independent of the Galerkin path.
    """
    from .dtn import dtn_symbol

    xi = np.asarray(xi, dtype=float)
    lam, mu, w = params.lam, params.mu, params.omega
    n = n_fine
    z = np.linspace(m_ref, h, n + 1)
    dz = z[1] - z[0]
    ix = 1j * xi
    N = 3 * (n + 1)
    A = scipy.sparse.lil_matrix((N, N), dtype=complex)
    b = np.zeros(N, dtype=complex)

    def I(node, comp):
        return 3 * node + comp

    xi_sq = float(xi @ xi)
    for i in range(1, n):
        gi = np.asarray(g_profile(z[i]), dtype=complex)
        for c in range(3):
            # mu u'' - mu |xi|^2 u + w^2 u
            A[I(i, c), I(i - 1, c)] += mu / dz**2
            A[I(i, c), I(i, c)] += -2 * mu / dz**2 - mu * xi_sq + w * w
            A[I(i, c), I(i + 1, c)] += mu / dz**2
            b[I(i, c)] = gi[c]
        # (lam + mu) grad(div u):  div = i xi1 u1 + i xi2 u2 + u3'
        lm = lam + mu
        for c in range(2):
            # component c: i xi_c * div
            A[I(i, c), I(i, 0)] += lm * ix[c] * ix[0]
            A[I(i, c), I(i, 1)] += lm * ix[c] * ix[1]
            A[I(i, c), I(i + 1, 2)] += lm * ix[c] / (2 * dz)
            A[I(i, c), I(i - 1, 2)] += -lm * ix[c] / (2 * dz)
        # component 3: d/dz(div)
        for j in range(2):
            A[I(i, 2), I(i + 1, j)] += lm * ix[j] / (2 * dz)
            A[I(i, 2), I(i - 1, j)] += -lm * ix[j] / (2 * dz)
        A[I(i, 2), I(i + 1, 2)] += lm / dz**2
        A[I(i, 2), I(i, 2)] += -2 * lm / dz**2
        A[I(i, 2), I(i - 1, 2)] += lm / dz**2

    # bottom Dirichlet
    for c in range(3):
        A[I(0, c), I(0, c)] = 1.0

    # top Robin: T u - i M u = 0, one-sided second-order u'(h)
    Msym = dtn_symbol(xi, params).M

    def add_deriv(row, comp, factor):
        A[row, I(n, comp)] += factor * 1.5 / dz
        A[row, I(n - 1, comp)] += factor * (-2.0) / dz
        A[row, I(n - 2, comp)] += factor * 0.5 / dz

    # T1 = mu u1' + mu i xi1 u3 ; T2 = mu u2' + mu i xi2 u3
    for c in range(2):
        row = I(n, c)
        add_deriv(row, c, mu)
        A[row, I(n, 2)] += mu * ix[c]
        for j in range(3):
            A[row, I(n, j)] += -1j * Msym[c, j]
    # T3 = (lam+2mu) u3' + lam (i xi1 u1 + i xi2 u2)
    row = I(n, 2)
    add_deriv(row, 2, lam + 2 * mu)
    A[row, I(n, 0)] += lam * ix[0]
    A[row, I(n, 1)] += lam * ix[1]
    for j in range(3):
        A[row, I(n, j)] += -1j * Msym[2, j]

    sol = scipy.sparse.linalg.spsolve(A.tocsr(), b)
    return z, sol.reshape(n + 1, 3).T


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def energy_balance(field: DiscreteField, rhs: np.ndarray, params: ElasticParams):
    """Discrete flux identity: Im of boundary flux vs Im of the source pairing.

    Returns (residual, power): residual is the normalized mismatch between
    Im int conj(u).Tu and Im int g.conj(u) (exact for a Galerkin solution up
    to solver residual); power is the nonnegative radiated mode sum.  The
    mismatch is normalized by the per-mode absolute boundary pairing, so
    non-radiating configurations (Im cancels exactly) stay well-scaled.
    """
    flux, power = energy_flux(field.top_trace(), params)
    src_im = -float(np.imag(np.vdot(field.free_vector(), rhs)))
    g = field.mesh.grid
    XI1, XI2, _ = g.frequency_mesh()
    Msym = dtn_symbol_grid(XI1, XI2, params)
    top = field.coeff[:, :, :, -1]
    pair = np.einsum("kab,kjab,jab->ab", np.conj(top), 1j * Msym, top)
    scale_abs = g.cell_area * float(np.sum(np.abs(pair)))
    denom = max(abs(src_im), abs(flux), scale_abs, _ENERGY_EPS)
    return abs(flux - src_im) / denom, power


def poincare_slack(field: DiscreteField) -> float:
    """(h - bottom) * ||d3 u||^2 - ||u||^2; nonnegative for admissible fields."""
    depth = field.mesh.top - field.mesh.bottom
    return depth * field.dz_norm_sq() - field.l2_norm_sq()


def coercivity_probe(mesh: StripMesh, params: ElasticParams, n_probes: int = 200,
                     seed: int = 0) -> dict:
    """Minimum of Re B(v,v)/||v||_Vh^2 over random fields, plus the exact minimum.

    The exact minimum is the smallest generalized eigenvalue of the Hermitian
    part of the per-mode operator against the energy-norm Gram matrix; the
    probe minimum can only lie above it.
    """
    if n_probes <= 0:
        raise ConstraintError("n_probes must be positive")
    blocks = assemble_flat_blocks(mesh, params)
    gram = norm_gram_blocks(mesh)
    g = mesh.grid
    rng = np.random.default_rng(seed)
    nfree = blocks.shape[-1]
    probe_min = np.inf
    for _ in range(n_probes):
        val = 0.0
        nrm = 0.0
        for i1 in range(g.n1):
            for i2 in range(g.n2):
                v = rng.standard_normal(nfree) + 1j * rng.standard_normal(nfree)
                val += float(np.real(np.vdot(v, blocks[i1, i2] @ v)))
                nrm += float(np.real(np.vdot(v, gram[i1, i2] @ v)))
        probe_min = min(probe_min, val / nrm)
    rayleigh_min = np.inf
    for i1 in range(g.n1):
        for i2 in range(g.n2):
            H = (blocks[i1, i2] + blocks[i1, i2].conj().T) / 2
            vals = scipy.linalg.eigh(H, gram[i1, i2].real, eigvals_only=True)
            rayleigh_min = min(rayleigh_min, float(vals[0]))
    return {"probe_min": float(probe_min), "rayleigh_min": float(rayleigh_min),
            "n_probes": n_probes, "seed": seed}


def rellich_residual(field: DiscreteField, source, params: ElasticParams,
                     coeffs: TransformCoefficients | None = None,
                     n_quad: int = 400) -> float:
    """Integration-by-parts consistency of a flat-surface solve.

    Both sides of the identity pairing the Navier operator with d3(conj u)
    are evaluated per mode.  On the volume side the operator is replaced by
    the source (they agree for the solution, and this avoids second
    derivatives of the piecewise-linear field); boundary densities use a
    cubic-spline lift of the mode profiles.  Restricted to flat surfaces.
    """
    from scipy.interpolate import CubicSpline

    if coeffs is not None and not coeffs.is_identity:
        raise ConstraintError("Rellich diagnostic is only defined on flat surfaces")
    mesh = field.mesh
    g = mesh.grid
    lam, mu, w = params.lam, params.mu, params.omega
    z_lo, z_hi = mesh.bottom, mesh.top
    zq, wq = np.polynomial.legendre.leggauss(n_quad)
    zq = 0.5 * (z_hi + z_lo) + 0.5 * (z_hi - z_lo) * zq
    wq = 0.5 * (z_hi - z_lo) * wq

    # mode coefficients of the source at the quadrature heights
    x1, x2 = g.collocation_points()
    gvals = source.values(x1[:, None, None], x2[None, :, None], zq[None, None, :])
    ghat = np.fft.fft2(gvals, axes=(1, 2)) / (g.n1 * g.n2)   # (3, n1, n2, q)

    nodes = mesh.nodes
    xi1, xi2 = g.frequencies()
    lhs = 0.0
    rhs = 0.0
    for i1 in range(g.n1):
        for i2 in range(g.n2):
            sp = [CubicSpline(nodes, field.coeff[c, i1, i2, :]) for c in range(3)]
            dUq = np.stack([s(zq, 1) for s in sp])
            lhs += 2 * np.sum(wq * np.real(np.sum(ghat[:, i1, i2, :] * np.conj(dUq), axis=0)))
            ix = 1j * np.array([xi1[i1], xi2[i2]])

            def density(z):
                U = np.array([s(z) for s in sp])
                dU = np.array([s(z, 1) for s in sp])
                div = ix[0] * U[0] + ix[1] * U[1] + dU[2]
                T = np.array([
                    mu * dU[0] + mu * ix[0] * U[2],
                    mu * dU[1] + mu * ix[1] * U[2],
                    (lam + 2 * mu) * dU[2] + lam * (ix[0] * U[0] + ix[1] * U[1]),
                ])
                G = np.stack([ix[0] * U, ix[1] * U, dU], axis=1)
                curl = np.array([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]])
                edens = (2 * mu * np.sum(np.abs(G) ** 2) + lam * abs(div) ** 2
                         - mu * np.sum(np.abs(curl) ** 2))
                return float(2 * np.real(T @ np.conj(dU)) - edens
                             + w * w * np.sum(np.abs(U) ** 2))

            rhs += density(z_hi) - density(z_lo)
    lhs *= g.cell_area
    rhs *= g.cell_area
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), _ENERGY_EPS)


class ModeFieldSmooth:
    """Analytic single-mode field z -> (U, U', U'') for the Rellich diagnostic."""

    def __init__(self, xi, fn, dfn, d2fn):
        self.xi = np.asarray(xi, dtype=float)
        self.fn, self.dfn, self.d2fn = fn, dfn, d2fn

    @classmethod
    def from_discrete(cls, field: DiscreteField, i1: int, i2: int):
        from scipy.interpolate import CubicSpline

        xi1, xi2 = field.mesh.grid.frequencies()
        nodes = field.mesh.nodes
        splines = [CubicSpline(nodes, field.coeff[c, i1, i2, :]) for c in range(3)]

        def stack(der):
            return lambda z: np.stack([s(z, der) for s in splines])

        return cls((xi1[i1], xi2[i2]), stack(0), stack(1), stack(2))


def rellich_identity_residual(mode_fields, params: ElasticParams, z_lo: float,
                              z_hi: float, cell_area: float,
                              n_quad: int = 400) -> float:
    """Normalized mismatch of the Rellich integration-by-parts identity.

    Both sides are evaluated per mode on [z_lo, z_hi]: the volume pairing of
    the Navier operator with d3(conj u) against the boundary density
    2 Re(Tu . d3 conj(u)) - E(u, conj u) + w^2 |u|^2 (top minus bottom, with
    the upward traction convention).  Fields must vanish at z_lo.
    """
    lam, mu, w = params.lam, params.mu, params.omega
    zq, wq = np.polynomial.legendre.leggauss(n_quad)
    zq = 0.5 * (z_hi + z_lo) + 0.5 * (z_hi - z_lo) * zq
    wq = 0.5 * (z_hi - z_lo) * wq
    lhs = 0.0
    rhs = 0.0
    for mf in mode_fields:
        xi = mf.xi
        ix = 1j * xi
        xi_sq = float(xi @ xi)
        U, dU, d2U = mf.fn(zq), mf.dfn(zq), mf.d2fn(zq)
        div = ix[0] * U[0] + ix[1] * U[1] + dU[2]
        ddiv = ix[0] * dU[0] + ix[1] * dU[1] + d2U[2]
        nav = mu * (d2U - xi_sq * U) + w * w * U
        nav[0] += (lam + mu) * ix[0] * div
        nav[1] += (lam + mu) * ix[1] * div
        nav[2] += (lam + mu) * ddiv
        lhs += 2 * np.sum(wq * np.real(np.sum(nav * np.conj(dU), axis=0)))

        def boundary_density(z):
            U, dU = mf.fn(z), mf.dfn(z)
            div = ix[0] * U[0] + ix[1] * U[1] + dU[2]
            T = np.array([
                mu * dU[0] + mu * ix[0] * U[2],
                mu * dU[1] + mu * ix[1] * U[2],
                (lam + 2 * mu) * dU[2] + lam * (ix[0] * U[0] + ix[1] * U[1]),
            ])
            G = np.zeros((3, 3), dtype=complex)
            G[:, 0] = ix[0] * U
            G[:, 1] = ix[1] * U
            G[:, 2] = dU
            curl = np.array([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]])
            edens = (2 * mu * np.sum(np.abs(G) ** 2) + lam * abs(div) ** 2
                     - mu * np.sum(np.abs(curl) ** 2))
            return float(2 * np.real(T @ np.conj(dU)) - edens + w * w * np.sum(np.abs(U) ** 2))

        rhs += boundary_density(z_hi) - boundary_density(z_lo)
    lhs *= cell_area
    rhs *= cell_area
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), _ENERGY_EPS)
