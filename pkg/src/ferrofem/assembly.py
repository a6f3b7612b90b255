"""Element-loop assembly of the variational forms.

All kernels are vectorized over elements: local matrices are computed for
the whole mesh in one einsum batch and scattered through COO -> CSR, which
sums duplicates deterministically. Sparse storage is scipy CSR throughout.

Quadrature policy: terms with polynomial integrands use a rule exact for
the integrand; terms carrying the non-polynomial Langevin coefficients use
the polynomial part's degree plus a configurable bump (default +2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import fespace, material, refelem
from .fespace import FEField, FESpace
from .material import MaterialParams

# polynomial degree of each scalar/vector family
_POLY_DEG = {"P0": 0, "P1": 1, "P2": 2, "CR": 1, "NE0": 1, "NE1": 1}


def _poly_deg(space: FESpace) -> int:
    return _POLY_DEG[space.family]


def _scatter_matrix(local, row_dofs, col_dofs, shape) -> sp.csr_matrix:
    rows = np.broadcast_to(row_dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(col_dofs[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()


def _scatter_vector(local, dofs, n) -> np.ndarray:
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


def _dx(mesh, rule):
    """Quadrature weights times Jacobian determinants, shape (nt, nq)."""
    return rule.weights[None, :] * mesh.det[:, None]


# ---------------------------------------------------------------------------
# scalar elliptic forms
# ---------------------------------------------------------------------------


def assemble_weighted_stiffness(
    space: FESpace, w=None, params: MaterialParams | None = None, quad_bump: int = 2
) -> sp.csr_matrix:
    """Stiffness matrix of the form int alpha(|grad w|) grad(phi).grad(tau).

    ``w`` selects the coefficient: ``None`` gives alpha == 1 (the plain
    Laplace matrix), an :class:`FEField` on ``space`` freezes the previous
    Picard iterate, and a callable ``w(points) -> (n, 2)`` supplies an exact
    gradient field. The matrix is symmetric and positive definite on the
    free dofs.
    """
    if space.components != 1 or space.is_edge_family:
        raise ValueError("weighted stiffness expects a scalar Lagrange space")
    deg = max(1, 2 * (_poly_deg(space) - 1) + (0 if w is None else quad_bump))
    rule = refelem.quadrature(deg)
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh

    if w is None:
        coeff = 1.0
    elif isinstance(w, FEField):
        if w.space is not space:
            raise ValueError("Picard iterate must live on the assembly space")
        _, gw = fespace.eval_field(w, tab)
        coeff = material.alpha(np.sqrt((gw * gw).sum(axis=-1)), params)
    else:
        gw = np.asarray(w(fespace.quad_points(mesh, rule).reshape(-1, 2)))
        gw = gw.reshape(mesh.n_triangles, rule.n_points, 2)
        coeff = material.alpha(np.sqrt((gw * gw).sum(axis=-1)), params)

    wdx = _dx(mesh, rule) * coeff
    local = np.einsum("tq,tqia,tqja->tij", wdx, tab.gradients, tab.gradients, optimize=True)
    n = space.n_dofs
    return _scatter_matrix(local, space.cell_dofs, space.cell_dofs, (n, n))


def elliptic_rhs_manufactured(
    space: FESpace, grad_phi, params: MaterialParams, quad_bump: int = 2
) -> np.ndarray:
    """Load vector tau -> int alpha(|grad phi|) grad(phi).grad(tau).

    This is the weak residual of the exact potential, which equals -(g, tau)
    by integration by parts, so no symbolic divergence of the nonlinear flux
    is ever needed.
    """
    deg = min(refelem.MAX_DEGREE, 3 + (_poly_deg(space) - 1) + quad_bump)
    rule = refelem.quadrature(deg)
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh
    xq = fespace.quad_points(mesh, rule)
    g = np.asarray(grad_phi(xq.reshape(-1, 2))).reshape(mesh.n_triangles, rule.n_points, 2)
    a = material.alpha(np.sqrt((g * g).sum(axis=-1)), params)
    flux = (a * _dx(mesh, rule))[:, :, None] * g
    local = np.einsum("tqa,tqia->ti", flux, tab.gradients, optimize=True)
    return _scatter_vector(local, space.cell_dofs, space.n_dofs)


def elliptic_rhs_external(
    space: FESpace, h_ext, params: MaterialParams, quad_bump: int = 2
) -> np.ndarray:
    """Load vector tau -> (1/mu0) int H_e . grad(tau) for an applied field."""
    deg = min(refelem.MAX_DEGREE, 3 + (_poly_deg(space) - 1) + quad_bump)
    rule = refelem.quadrature(deg)
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh
    xq = fespace.quad_points(mesh, rule)
    he = np.asarray(h_ext(xq.reshape(-1, 2))).reshape(mesh.n_triangles, rule.n_points, 2)
    flux = _dx(mesh, rule)[:, :, None] * he / params.mu0
    local = np.einsum("tqa,tqia->ti", flux, tab.gradients, optimize=True)
    return _scatter_vector(local, space.cell_dofs, space.n_dofs)


# ---------------------------------------------------------------------------
# edge-space mass and projections
# ---------------------------------------------------------------------------


def _edge_quad_degree(space: FESpace, nonlinear: bool, quad_bump: int) -> int:
    base = 2 if space.family == "NE0" else 4
    return min(refelem.MAX_DEGREE, base + (quad_bump if nonlinear else 0))


def assemble_edge_mass(space: FESpace, quad_bump: int = 2) -> sp.csr_matrix:
    """L2 mass matrix of an edge space over all dofs (no boundary removal)."""
    rule = refelem.quadrature(_edge_quad_degree(space, False, quad_bump))
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh
    local = np.einsum(
        "tq,tqia,tqja->tij", _dx(mesh, rule), tab.vec_values, tab.vec_values, optimize=True
    )
    n = space.n_dofs
    return _scatter_matrix(local, space.cell_dofs, space.cell_dofs, (n, n))


def assemble_edge_rhs(space: FESpace, v, quad_bump: int = 2) -> np.ndarray:
    """Load vector F -> int v . F for the edge-space L2 projections.

    ``v`` is a callable on points, or a pair ``(field, transform)`` with
    ``field`` an edge FEField and ``transform`` mapping its point values
    (e.g. the magnetization law applied to the recovered magnetic field).
    """
    rule = refelem.quadrature(_edge_quad_degree(space, True, quad_bump))
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh
    if isinstance(v, (tuple, FEField)):
        src, transform = v if isinstance(v, tuple) else (v, None)
        values, derived = fespace.eval_field(src, fespace.tabulate(src.space, rule))
        # scalar sources contribute through their gradient (recovery of the
        # magnetic field from the potential), edge sources by value
        scalar_src = not src.space.is_edge_family and src.space.components == 1
        vals = derived if scalar_src else values
        if transform is not None:
            vals = transform(vals)
    else:
        xq = fespace.quad_points(mesh, rule)
        vals = np.asarray(v(xq.reshape(-1, 2))).reshape(mesh.n_triangles, rule.n_points, 2)
    vals = vals * _dx(mesh, rule)[:, :, None]
    local = np.einsum("tqa,tqia->ti", vals, tab.vec_values, optimize=True)
    return _scatter_vector(local, space.cell_dofs, space.n_dofs)


def assemble_scalar_mass(space: FESpace, quad_bump: int = 0) -> sp.csr_matrix:
    """L2 mass matrix of a scalar space (one component)."""
    deg = max(1, 2 * _poly_deg(space) + quad_bump)
    rule = refelem.quadrature(deg)
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh
    wphi = _dx(mesh, rule)[:, :, None] * tab.values.T[None, :, :]
    local = np.einsum("tqi,qj->tij", wphi, tab.values.T, optimize=True)
    n = space.n_scalar
    return _scatter_matrix(local, space.cell_dofs, space.cell_dofs, (n, n))


def assemble_scalar_rhs(space: FESpace, vals_or_fn, quad_deg: int) -> np.ndarray:
    """Load vector chi -> int f chi against a scalar space.

    ``vals_or_fn`` is a callable on points or a precomputed (nt, nq) array
    matching the rule of degree ``quad_deg``.
    """
    rule = refelem.quadrature(quad_deg)
    tab = fespace.tabulate(space, rule)
    mesh = space.mesh
    if callable(vals_or_fn):
        xq = fespace.quad_points(mesh, rule)
        vals = np.asarray(vals_or_fn(xq.reshape(-1, 2))).reshape(
            mesh.n_triangles, rule.n_points
        )
    else:
        vals = vals_or_fn
    local = np.einsum("tq,iq->ti", vals * _dx(mesh, rule), tab.values, optimize=True)
    return _scatter_vector(local, space.cell_dofs, space.n_scalar)


# ---------------------------------------------------------------------------
# Navier-Stokes saddle blocks
# ---------------------------------------------------------------------------

_SUPPORTED_PAIRS = {("CR", "P0"), ("P2", "P1")}


@dataclass
class SaddleSystem:
    """Assembled saddle-point problem for one Oseen/Stokes sweep.

    ``A`` is the full velocity operator (viscous plus convective) in the
    component-major layout, ``B`` the divergence pairing (q, div v), and
    ``mean`` the pressure-mean row used to pin the L2_0 constraint through
    one scalar multiplier. ``g`` holds prescribed velocity values on the
    constrained dofs (zero elsewhere).
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    mean: np.ndarray
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    free_u: np.ndarray
    g: np.ndarray

    @property
    def n_velocity(self) -> int:
        return self.A.shape[0]

    @property
    def n_pressure(self) -> int:
        return self.B.shape[0]

    def with_operator(self, A: sp.csr_matrix, rhs_u=None, g=None) -> "SaddleSystem":
        out = replace(self, A=A)
        if rhs_u is not None:
            out.rhs_u = rhs_u
        if g is not None:
            out.g = g
        return out


def _stokes_quad_degree(vfam: str) -> int:
    # covers viscous, divergence and skew convection terms for the pair
    return 4 if vfam == "CR" else 6


def assemble_stokes_blocks(
    v_space: FESpace, w_space: FESpace, eta: float
) -> SaddleSystem:
    """Viscous block, divergence block and pressure-mean row for a stable pair.

    Supported pairs: (CR^2, P0) with element-wise gradients and the
    Taylor-Hood pair (P2^2, P1).
    """
    pair = (v_space.family, w_space.family)
    if v_space.components != 2 or pair not in _SUPPORTED_PAIRS:
        raise ValueError(f"unsupported velocity/pressure pair {pair}")
    if v_space.mesh is not w_space.mesh:
        raise ValueError("velocity and pressure live on different meshes")
    mesh = v_space.mesh
    rule = refelem.quadrature(_stokes_quad_degree(v_space.family))
    tabv = fespace.tabulate(v_space, rule)
    tabp = fespace.tabulate(w_space, rule)
    wq = _dx(mesh, rule)

    k_loc = np.einsum("tq,tqia,tqja->tij", wq, tabv.gradients, tabv.gradients, optimize=True)
    ns = v_space.n_scalar
    k_scal = _scatter_matrix(k_loc, v_space.cell_dofs, v_space.cell_dofs, (ns, ns))
    a = eta * sp.block_diag([k_scal, k_scal], format="csr")

    # B[q, v] = int q * dv/dx_c for component c
    np_ = w_space.n_scalar
    blocks = []
    for c in range(2):
        b_loc = np.einsum(
            "tq,kq,tqi->tki", wq, tabp.values, tabv.gradients[:, :, :, c], optimize=True
        )
        blocks.append(
            _scatter_matrix(b_loc, w_space.cell_dofs, v_space.cell_dofs, (np_, ns))
        )
    b = sp.hstack(blocks, format="csr")

    mean = _scatter_vector(
        np.einsum("tq,iq->ti", wq, tabp.values), w_space.cell_dofs, np_
    )

    n2 = 2 * ns
    return SaddleSystem(
        A=a,
        B=b,
        mean=mean,
        rhs_u=np.zeros(n2),
        rhs_p=np.zeros(np_),
        free_u=v_space.free_mask,
        g=np.zeros(n2),
    )


def assemble_convection(v_space: FESpace, w_field: FEField, rho: float) -> sp.csr_matrix:
    """Skew-symmetrized convection matrix N with v'Nu = b(w; u, v).

    b(w; u, v) = rho/2 [((w.grad)u, v) - ((w.grad)v, u)]; built as
    rho/2 (C - C') per component so skew-symmetry is structural.
    """
    if w_field.space is not v_space:
        raise ValueError("convecting field must live on the velocity space")
    mesh = v_space.mesh
    rule = refelem.quadrature(_stokes_quad_degree(v_space.family))
    tab = fespace.tabulate(v_space, rule)
    wvals, _ = fespace.eval_field(w_field, tab)
    wq = _dx(mesh, rule)
    # C_raw[i, j] = int (w . grad phi_j) phi_i
    wg = np.einsum("tqa,tqja->tqj", wvals, tab.gradients, optimize=True)
    c_loc = np.einsum("tq,iq,tqj->tij", wq, tab.values, wg, optimize=True)
    ns = v_space.n_scalar
    c_raw = _scatter_matrix(c_loc, v_space.cell_dofs, v_space.cell_dofs, (ns, ns))
    c_skew = 0.5 * rho * (c_raw - c_raw.T)
    return sp.block_diag([c_skew, c_skew], format="csr")


def assemble_ns_rhs(v_space: FESpace, f, quad_deg: int | None = None) -> np.ndarray:
    """Load vector v -> int f . v with f evaluated pointwise.

    ``f`` maps (n, 2) points to (n, 2) force values; the default rule adds
    two degrees over the pair's polynomial terms to resolve smooth data.
    """
    if quad_deg is None:
        quad_deg = min(refelem.MAX_DEGREE, _stokes_quad_degree(v_space.family) + 2)
    rule = refelem.quadrature(quad_deg)
    tab = fespace.tabulate(v_space, rule)
    mesh = v_space.mesh
    xq = fespace.quad_points(mesh, rule)
    fv = np.asarray(f(xq.reshape(-1, 2))).reshape(mesh.n_triangles, rule.n_points, 2)
    fv = fv * _dx(mesh, rule)[:, :, None]
    ns = v_space.n_scalar
    out = np.empty(2 * ns)
    for c in range(2):
        local = np.einsum("tq,iq->ti", fv[:, :, c], tab.values, optimize=True)
        out[c * ns : (c + 1) * ns] = _scatter_vector(local, v_space.cell_dofs, ns)
    return out
