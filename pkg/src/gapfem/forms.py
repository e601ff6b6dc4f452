"""Sparse assembly and direct solves for the Stokes and elasticity systems.

Degree-of-freedom layout for Crouzeix-Raviart vector fields: component 0 of
side s is DOF s, component 1 is DOF ns + s.  Dirichlet sides are eliminated
by restriction to free DOFs; the lift enters the right-hand side.

The load functional is
    l(v) = (f_h, Pi_h v) + (F_h, grad_h v) + sum_{S Neumann} (g_S, pi_h v)_S
with element-wise constant f_h, F_h and side-wise constant tractions g_S.
"""

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

from . import mesh as _mesh
from .spaces import CRField, P0Field, broken_divergence


class AssemblyError(Exception):
    pass


class SingularSystemError(Exception):
    pass


class LinearSolveReport:
    """Outcome of a sparse direct solve."""

    def __init__(self, residual_norm, factorization_kind):
        self.residual_norm = residual_norm
        self.factorization_kind = factorization_kind

    def __repr__(self):
        return (
            f"LinearSolveReport(residual_norm={self.residual_norm:.3e}, "
            f"kind={self.factorization_kind!r})"
        )


def solve_sparse(matrix, rhs, tol=1e-10, max_refine=4):
    """Direct sparse solve with iterative refinement.

    The reported residual is the normwise backward error
    ||b - A x|| / (||A||_inf ||x|| + ||b||).  Refinement repeats while it
    improves.  Returns (solution, LinearSolveReport); raises
    SingularSystemError if the factorization fails or the final residual
    exceeds `tol`.
    """
    a = matrix.tocsc()
    try:
        lu = sla.splu(a)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorization produced non-finite values")
    norm_a = np.abs(a).sum(axis=1).max() if a.nnz else 1.0
    norm_b = np.linalg.norm(rhs)

    def backward_error(y):
        denom = norm_a * np.linalg.norm(y) + norm_b
        return np.linalg.norm(rhs - a @ y) / (denom if denom > 0 else 1.0)

    res = backward_error(x)
    for _ in range(max_refine):
        if res <= 1e-4 * tol:
            break
        x_new = x + lu.solve(rhs - a @ x)
        res_new = backward_error(x_new)
        if res_new >= res:
            break
        x, res = x_new, res_new
    if res > tol:
        raise SingularSystemError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return x, LinearSolveReport(res, "superlu")


def dump_matrix(matrix, path):
    """Coordinate-format text dump for debugging."""
    coo = matrix.tocoo()
    with open(path, "w") as f:
        f.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{i} {j} {v:.17g}\n")


# -- scalar building blocks ----------------------------------------------------


def _cr_dtheta(mesh):
    geo = mesh.geometry()
    return -2.0 * geo["grad_lambda"][:, [2, 0, 1], :]  # (ne, 3, 2)


def cr_stiffness(mesh, weights=None):
    """Scalar CR stiffness sum_T w_T (grad theta_i, grad theta_j)_T as CSR."""
    dtheta = _cr_dtheta(mesh)
    w = mesh.areas if weights is None else mesh.areas * weights
    local = np.einsum("n,nid,njd->nij", w, dtheta, dtheta)
    es = mesh.element_sides
    rows = np.repeat(es, 3, axis=1).ravel()
    cols = np.tile(es, (1, 3)).ravel()
    ns = mesh.num_sides
    return sparse.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(ns, ns)
    ).tocsr()


def cr_divergence_matrix(mesh):
    """Map CR vector DOFs to element-wise divergence: (ne, 2 ns) CSR."""
    dtheta = _cr_dtheta(mesh)
    es = mesh.element_sides
    ne, ns = mesh.num_elements, mesh.num_sides
    rows = np.repeat(np.arange(ne), 3)
    data_x = dtheta[:, :, 0].ravel()
    data_y = dtheta[:, :, 1].ravel()
    cols_x = es.ravel()
    cols_y = es.ravel() + ns
    return sparse.coo_matrix(
        (
            np.concatenate([data_x, data_y]),
            (np.concatenate([rows, rows]), np.concatenate([cols_x, cols_y])),
        ),
        shape=(ne, 2 * ns),
    ).tocsr()


# exact integrals over [0,1] of products of the endpoint hat functions;
# equals the 2-point Gauss value (the rule is exact for quadratics)
_ENDPOINT_MASS = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


def _trace_coefficients(mesh, sides, slot):
    """Endpoint trace coefficients of the three CR basis functions.

    For each side in `sides` and the adjacent element in `slot` (0 primary,
    1 secondary), returns (dofs (m,3), coef (m,2,3)) such that the trace of
    the CR function at side endpoint k is sum_j coef[m,k,j] * value[dofs[m,j]].
    """
    elems = mesh.side_elements[sides, slot]
    loc = mesh.side_local[sides, slot]
    if slot == 0:
        lv0, lv1 = loc, (loc + 1) % 3
    else:
        lv0, lv1 = (loc + 1) % 3, loc
    j = np.arange(3)
    coef0 = 1.0 - 2.0 * (j[None, :] == ((lv0 + 1) % 3)[:, None])
    coef1 = 1.0 - 2.0 * (j[None, :] == ((lv1 + 1) % 3)[:, None])
    return mesh.element_sides[elems], np.stack([coef0, coef1], axis=1)


def jump_penalty_matrix(mesh, weight_per_side):
    """Scalar jump form sum_S w_S int_S [u][v] ds as CSR (ns x ns).

    weight_per_side is an (ns,) array; sides with weight zero are skipped.
    Side integrals of products of P1 traces are exact (2-point Gauss).
    """
    geo = mesh.geometry()
    ns = mesh.num_sides
    w_eff = weight_per_side * geo["side_length"]
    blocks_r, blocks_c, blocks_v = [], [], []
    for interior in (True, False):
        if interior:
            sel = np.nonzero((mesh.side_elements[:, 1] >= 0) & (w_eff != 0))[0]
        else:
            sel = np.nonzero((mesh.side_elements[:, 1] < 0) & (w_eff != 0))[0]
        if len(sel) == 0:
            continue
        d0, c0 = _trace_coefficients(mesh, sel, 0)
        if interior:
            d1, c1 = _trace_coefficients(mesh, sel, 1)
            dofs = np.concatenate([d0, d1], axis=1)
            coef = np.concatenate([c0, -c1], axis=2)
        else:
            dofs, coef = d0, c0
        vals = np.einsum(
            "m,mki,kl,mlj->mij", w_eff[sel], coef, _ENDPOINT_MASS, coef
        )
        nd = dofs.shape[1]
        blocks_r.append(np.repeat(dofs, nd, axis=1).ravel())
        blocks_c.append(np.tile(dofs, (1, nd)).ravel())
        blocks_v.append(vals.ravel())
    if not blocks_v:
        return sparse.csr_matrix((ns, ns))
    return sparse.coo_matrix(
        (
            np.concatenate(blocks_v),
            (np.concatenate(blocks_r), np.concatenate(blocks_c)),
        ),
        shape=(ns, ns),
    ).tocsr()


def jump_form_value(mesh, weight_per_side, u, v):
    """Evaluate the weighted jump form s_h(u, v) for two CR fields."""
    mat = _cached_jump_matrix(mesh, weight_per_side)
    uu = np.concatenate([u.values[:, 0], u.values[:, 1]])
    vv = np.concatenate([v.values[:, 0], v.values[:, 1]])
    return float(uu @ (mat @ vv))


def _cached_jump_matrix(mesh, weight_per_side):
    cache = mesh.__dict__.setdefault("_jump_matrix_cache", {})
    key = hash(np.asarray(weight_per_side).tobytes())
    hit = cache.get(key)
    if hit is not None:
        return hit
    scal = jump_penalty_matrix(mesh, weight_per_side)
    full = sparse.block_diag([scal, scal]).tocsr()
    cache[key] = full
    return full


def stabilization_weights(mesh, mu):
    """Weights 2 mu / h_S on interior and Dirichlet sides, zero on Neumann."""
    geo = mesh.geometry()
    w = 2.0 * mu / geo["side_length"]
    w[mesh.side_labels == _mesh.NEUMANN] = 0.0
    return w


def dirichlet_penalty_load(mesh, mu, datum, npoints=8):
    """Load vector c with c_dof = sum_{S Dirichlet} (2 mu / h_S) int_S datum . theta.

    On Dirichlet sides the jump of a total field v + u_hat is its deviation
    from the boundary datum, so the penalty contributes this datum-weighted
    functional to the right-hand side.  Returns a (2 ns,) vector.
    """
    from .quadrature import segment_rule, side_points

    ns = mesh.num_sides
    out = np.zeros(2 * ns)
    if datum is None:
        return out
    sel = mesh.sides_with_label(_mesh.DIRICHLET)
    if len(sel) == 0:
        return out
    geo = mesh.geometry()
    t, w = segment_rule(npoints)
    pts = side_points(mesh, t, sides=sel)  # (m, q, 2)
    gvals = np.asarray(datum(pts))  # (m, q, 2)
    dofs, coef = _trace_coefficients(mesh, sel, 0)  # (m,3), (m,2,3)
    # basis trace at parameter t: coef0 (1-t) + coef1 t
    basis = coef[:, 0, :][:, None, :] * (1 - t)[None, :, None] + coef[
        :, 1, :
    ][:, None, :] * t[None, :, None]  # (m, q, 3)
    weight = 2.0 * mu  # (2 mu / h_S) * |S| = 2 mu
    vals = weight * np.einsum("q,mqi,mqj->mji", w, gvals, basis)  # (m, 3, 2)
    for comp in range(2):
        np.add.at(out, dofs.ravel() + comp * ns, vals[:, :, comp].ravel())
    return out


def stabilization_energy(mesh, mu, u_total, datum, npoints=8):
    """Value of the data-consistent jump penalty at a total field.

    Interior sides contribute (2 mu / h_S) int [u]^2; Dirichlet sides
    contribute (2 mu / h_S) int |u - datum|^2 (datum None means zero).
    """
    from .quadrature import segment_rule, side_points

    total = 0.0
    t, w = segment_rule(npoints)
    for label in (_mesh.INTERIOR, _mesh.DIRICHLET):
        sel = mesh.sides_with_label(label)
        if len(sel) == 0:
            continue
        d0, c0 = _trace_coefficients(mesh, sel, 0)
        tr0 = np.einsum("mkj,mji->mki", c0, u_total.values[d0])  # (m, 2, 2)
        if label == _mesh.INTERIOR:
            d1, c1 = _trace_coefficients(mesh, sel, 1)
            tr1 = np.einsum("mkj,mji->mki", c1, u_total.values[d1])
            jump_end = tr0 - tr1  # endpoint values of the affine jump
            total += np.sum(
                (2.0 * mu)
                * np.einsum("mki,kl,mli->m", jump_end, _ENDPOINT_MASS, jump_end)
            )
        else:
            tq = tr0[:, 0, :][:, None] * (1 - t)[None, :, None] + tr0[:, 1, :][
                :, None
            ] * t[None, :, None]  # (m, q, 2)
            if datum is not None:
                pts = side_points(mesh, t, sides=sel)
                tq = tq - np.asarray(datum(pts))
            total += np.sum(
                (2.0 * mu) * np.einsum("q,mqi,mqi->", w, tq, tq)
            )
    return float(total)


# -- load functional -----------------------------------------------------------


def load_vector(mesh, f_h=None, big_f_h=None, g_h=None):
    """Assemble the load functional as a (2 ns,) vector over all CR DOFs."""
    ns = mesh.num_sides
    rhs = np.zeros(2 * ns)
    es = mesh.element_sides
    if f_h is not None:
        fv = f_h.values if isinstance(f_h, P0Field) else np.asarray(f_h)
        contrib = (mesh.areas / 3.0)[:, None] * fv  # (ne, 2)
        for comp in range(2):
            np.add.at(rhs, es.ravel() + comp * ns, np.repeat(contrib[:, comp], 3))
    if big_f_h is not None:
        fv = big_f_h.values if isinstance(big_f_h, P0Field) else np.asarray(big_f_h)
        dtheta = _cr_dtheta(mesh)
        contrib = np.einsum("n,nid,ntd->nti", mesh.areas, fv, dtheta)
        for comp in range(2):
            np.add.at(rhs, es.ravel() + comp * ns, contrib[:, :, comp].ravel())
    if g_h is not None:
        geo = mesh.geometry()
        neumann = mesh.sides_with_label(_mesh.NEUMANN)
        gv = np.asarray(g_h)
        for comp in range(2):
            rhs[neumann + comp * ns] += geo["side_length"][neumann] * gv[neumann, comp]
    return rhs


def load_value(mesh, f_h, big_f_h, g_h, v):
    """Evaluate the load functional at a CR field."""
    rhs = load_vector(mesh, f_h, big_f_h, g_h)
    vv = np.concatenate([v.values[:, 0], v.values[:, 1]])
    return float(rhs @ vv)


# -- Stokes --------------------------------------------------------------------


class StokesSystem:
    """Assembled discrete Stokes saddle-point system.

    Unknowns: free velocity DOFs (both components) followed by element
    pressures; with an empty Neumann set one extra Lagrange multiplier
    enforces the zero-mean pressure gauge.
    """

    def __init__(self, mesh, nu, u_hat, f_h, big_f_h, g_h):
        self.mesh = mesh
        self.nu = nu
        self.u_hat = u_hat
        self.f_h = f_h
        self.big_f_h = big_f_h
        self.g_h = g_h

        ns = mesh.num_sides
        free = np.nonzero(mesh.side_labels != _mesh.DIRICHLET)[0]
        self.free_sides = free
        self.vel_index = np.concatenate([free, free + ns])

        k_scal = nu * cr_stiffness(mesh)
        a_full = sparse.block_diag([k_scal, k_scal]).tocsr()
        b_full = -cr_divergence_matrix(mesh)
        # (q, div v) weighted by element areas
        b_full = sparse.diags(mesh.areas) @ b_full

        self.a_full = a_full
        self.b_full = b_full

        a = a_full[self.vel_index][:, self.vel_index]
        b = b_full[:, self.vel_index]

        self.pure_dirichlet = len(mesh.sides_with_label(_mesh.NEUMANN)) == 0
        blocks = [[a, b.T], [b, None]]
        if self.pure_dirichlet:
            gauge = sparse.csr_matrix(
                (mesh.areas, (np.zeros(mesh.num_elements, dtype=int),
                              np.arange(mesh.num_elements))),
                shape=(1, mesh.num_elements),
            )
            blocks = [
                [a, b.T, None],
                [b, None, gauge.T],
                [None, gauge, None],
            ]
        self.matrix = sparse.bmat(blocks, format="csc")

        uhat_vec = np.concatenate([u_hat.values[:, 0], u_hat.values[:, 1]])
        div_lift = broken_divergence(u_hat).values
        if np.abs(div_lift).max() > 1e-10:
            raise AssemblyError(
                "Dirichlet lift is not discretely divergence-free "
                f"(max |div_h| = {np.abs(div_lift).max():.2e})"
            )
        rhs_v = load_vector(mesh, f_h, big_f_h, g_h) - a_full @ uhat_vec
        rhs_p = -(b_full @ uhat_vec)
        parts = [rhs_v[self.vel_index], rhs_p]
        if self.pure_dirichlet:
            parts.append(np.zeros(1))
        self.rhs = np.concatenate(parts)

    def load(self, v):
        return load_value(self.mesh, self.f_h, self.big_f_h, self.g_h, v)

    def solve(self, tol=1e-10):
        """Solve; returns (u_h, p_h, report) with u_h in the homogeneous space."""
        x, report = solve_sparse(self.matrix, self.rhs, tol=tol)
        nfree = len(self.vel_index)
        uvals = np.zeros((self.mesh.num_sides, 2))
        uvals[self.free_sides, 0] = x[: len(self.free_sides)]
        uvals[self.free_sides, 1] = x[len(self.free_sides): nfree]
        u_h = CRField(self.mesh, uvals)
        p_h = P0Field(self.mesh, x[nfree: nfree + self.mesh.num_elements])
        return u_h, p_h, report

    def residual(self, u_h, p_h):
        """Euler-Lagrange residual tested against every free CR basis function."""
        uvec = np.concatenate([u_h.values[:, 0], u_h.values[:, 1]])
        uhat = np.concatenate([self.u_hat.values[:, 0], self.u_hat.values[:, 1]])
        mom = (
            self.a_full @ (uvec + uhat)
            + self.b_full.T @ p_h.values
            - load_vector(self.mesh, self.f_h, self.big_f_h, self.g_h)
        )
        return np.abs(mom[self.vel_index]).max()


def assemble_stokes(mesh, nu, u_hat, f_h, big_f_h=None, g_h=None):
    """Assemble the discrete Stokes saddle system for (u_h, p_h).

    Parameters
    ----------
    mesh : Triangulation
    nu : float
        Kinematic viscosity.
    u_hat : CRField
        Discrete Dirichlet lift; must satisfy div_h u_hat = 0 to 1e-10.
    f_h : P0Field or (ne, 2) array or None
    big_f_h : P0Field or (ne, 2, 2) array or None
        Element-wise constant tensor part of the load.
    g_h : (ns, 2) array or None
        Side-wise constant Neumann tractions (used on Neumann sides only).
    """
    return StokesSystem(mesh, nu, u_hat, f_h, big_f_h, g_h)


# -- elasticity ------------------------------------------------------------------


class ElasticitySystem:
    """Assembled stabilised Navier-Lame system for the displacement.

    The jump penalty on Dirichlet sides measures the deviation of the total
    field from the boundary datum, so conforming data (e.g. rigid motions)
    carry no spurious penalty energy.
    """

    def __init__(self, mesh, material, u_hat, f_h, big_f_h, g_h, dirichlet_datum=None):
        self.mesh = mesh
        self.material = material
        self.u_hat = u_hat
        self.f_h = f_h
        self.big_f_h = big_f_h
        self.g_h = g_h
        self.dirichlet_datum = dirichlet_datum

        ns = mesh.num_sides
        free = np.nonzero(mesh.side_labels != _mesh.DIRICHLET)[0]
        self.free_sides = free
        self.vel_index = np.concatenate([free, free + ns])

        mu, lam = material.mu, material.lam
        dtheta = _cr_dtheta(mesh)
        es = mesh.element_sides

        # (C eps(u), eps(v)) = 2 mu (eps(u), eps(v)) + lam (div u, div v);
        # assemble the 6x6 local vector blocks directly
        ne = mesh.num_elements
        local = np.zeros((ne, 2, 3, 2, 3))
        d = dtheta  # (ne, 3, 2)
        area = mesh.areas
        for i in range(2):
            for j in range(2):
                # eps(e_i theta_a) : eps(e_j theta_b)
                term = 0.5 * np.einsum("nad,nbd->nab", d, d) * (i == j)
                term = term + 0.5 * np.einsum("na,nb->nab", d[:, :, j], d[:, :, i])
                div_term = np.einsum("na,nb->nab", d[:, :, i], d[:, :, j])
                local[:, i, :, j, :] = (
                    (2.0 * mu) * term + lam * div_term
                ) * area[:, None, None]

        rows = np.empty((ne, 2, 3, 2, 3), dtype=np.int64)
        cols = np.empty_like(rows)
        for i in range(2):
            for j in range(2):
                rows[:, i, :, j, :] = (es + i * ns)[:, :, None]
                cols[:, i, :, j, :] = (es + j * ns)[:, None, :]
        k_eps = sparse.coo_matrix(
            (local.ravel(), (rows.ravel(), cols.ravel())),
            shape=(2 * ns, 2 * ns),
        ).tocsr()

        self.s_weights = stabilization_weights(mesh, mu)
        s_full = _cached_jump_matrix(mesh, self.s_weights)
        self.a_full = k_eps + s_full
        self.matrix = self.a_full[self.vel_index][:, self.vel_index].tocsc()
        self.datum_load = dirichlet_penalty_load(mesh, mu, dirichlet_datum)

        uhat_vec = np.concatenate([u_hat.values[:, 0], u_hat.values[:, 1]])
        rhs = (
            load_vector(mesh, f_h, big_f_h, g_h)
            - self.a_full @ uhat_vec
            + self.datum_load
        )
        self.rhs = rhs[self.vel_index]

    def load(self, v):
        return load_value(self.mesh, self.f_h, self.big_f_h, self.g_h, v)

    def s_h(self, u, v):
        return jump_form_value(self.mesh, self.s_weights, u, v)

    def s_h_total(self, u_total):
        """Penalty energy of a total field against the stored datum."""
        return stabilization_energy(
            self.mesh, self.material.mu, u_total, self.dirichlet_datum
        )

    def solve(self, tol=1e-10):
        x, report = solve_sparse(self.matrix, self.rhs, tol=tol)
        uvals = np.zeros((self.mesh.num_sides, 2))
        nf = len(self.free_sides)
        uvals[self.free_sides, 0] = x[:nf]
        uvals[self.free_sides, 1] = x[nf:]
        return CRField(self.mesh, uvals), report

    def residual(self, u_h):
        uvec = np.concatenate([u_h.values[:, 0], u_h.values[:, 1]])
        uhat = np.concatenate([self.u_hat.values[:, 0], self.u_hat.values[:, 1]])
        r = (
            self.a_full @ (uvec + uhat)
            - self.datum_load
            - load_vector(self.mesh, self.f_h, self.big_f_h, self.g_h)
        )
        return np.abs(r[self.vel_index]).max()


def assemble_elasticity(
    mesh, material, u_hat, f_h, big_f_h=None, g_h=None, dirichlet_datum=None
):
    """Assemble the jump-stabilised elasticity operator and right-hand side."""
    if len(mesh.sides_with_label(_mesh.DIRICHLET)) == 0:
        raise AssemblyError("elasticity requires a nonempty Dirichlet boundary")
    return ElasticitySystem(mesh, material, u_hat, f_h, big_f_h, g_h, dirichlet_datum)


def solve_lifting(mesh, u_total, mu, dirichlet_datum=None, tol=1e-10):
    """Solve (grad_h r, grad_h v) = s_h(u_total, v) for r in the homogeneous space.

    u_total is the full discrete displacement u_h + u_hat; the jump weights
    are 2 mu / h_S on interior and Dirichlet sides, where Dirichlet jumps
    are deviations from the boundary datum.
    """
    ns = mesh.num_sides
    free = np.nonzero(mesh.side_labels != _mesh.DIRICHLET)[0]
    idx = np.concatenate([free, free + ns])
    k_scal = cr_stiffness(mesh)
    a = sparse.block_diag([k_scal, k_scal]).tocsr()[idx][:, idx].tocsc()
    s_full = _cached_jump_matrix(mesh, stabilization_weights(mesh, mu))
    uvec = np.concatenate([u_total.values[:, 0], u_total.values[:, 1]])
    rhs = (s_full @ uvec - dirichlet_penalty_load(mesh, mu, dirichlet_datum))[idx]
    x, _ = solve_sparse(a, rhs, tol=tol)
    vals = np.zeros((ns, 2))
    nf = len(free)
    vals[free, 0] = x[:nf]
    vals[free, 1] = x[nf:]
    return CRField(mesh, vals)
