"""Stress reconstruction, gap estimators, and discrete duality checks.

Admissible pairs for the Stokes problem consist of a discretely
divergence-free Crouzeix-Raviart field and a Raviart-Thomas stress whose
divergence and Neumann traces match the discrete data; the primal-dual gap
of such a pair equals the sum of the two strong convexity measures
(discrete hypercircle identity), which this module both computes and
stress-tests with randomized admissible perturbations.
"""

import numpy as np
import scipy.sparse as sparse

from . import mesh as _mesh
from .forms import cr_divergence_matrix, cr_stiffness
from .quadrature import physical_points, triangle_rule
from .spaces import (
    CRField,
    P0Field,
    RTField,
    broken_divergence,
    broken_gradient,
    broken_sym_gradient,
    cr_interpolate,
    dev,
    inner_p0,
    norm_p0,
    pi0,
    rt_interpolate,
    sym,
)


class AdmissibilityError(Exception):
    """A reconstructed or supplied field violates its constraint set."""


class ElasticityTensor:
    """Lame pair (mu, lambda) with forward/inverse action and induced norms.

    Forward action: C A = 2 mu A + lambda tr(A) I.
    Inverse action: C^-1 B = dev(B)/(2 mu) + tr(B) I / (2 d mu + d^2 lambda),
    d = 2.
    """

    def __init__(self, mu, lam):
        if mu <= 0 or lam <= 0:
            raise ValueError("Lame parameters must be positive")
        self.mu = float(mu)
        self.lam = float(lam)

    def apply(self, a):
        a = np.asarray(a, dtype=float)
        tr = a[..., 0, 0] + a[..., 1, 1]
        out = 2.0 * self.mu * a
        out[..., 0, 0] += self.lam * tr
        out[..., 1, 1] += self.lam * tr
        return out

    def inverse(self, b):
        b = np.asarray(b, dtype=float)
        tr = b[..., 0, 0] + b[..., 1, 1]
        out = dev(b) / (2.0 * self.mu)
        c = tr / (4.0 * self.mu + 4.0 * self.lam)
        out[..., 0, 0] += c
        out[..., 1, 1] += c
        return out

    def energy_product(self, a, b):
        """Point-wise C a : b."""
        return np.einsum("...ij,...ij->...", self.apply(a), b)

    def complementary_product(self, a, b):
        """Point-wise C^-1 a : b."""
        return np.einsum("...ij,...ij->...", self.inverse(a), b)


# -- Marini reconstructions ----------------------------------------------------


def _flux_from_local(mesh, p0_part, slope):
    """Side fluxes of the local fields row_i(x) = p0_part[T,i,:] + slope[T,i]*(x-x_T).

    Interior fluxes are taken from the two element views and must agree;
    their maximum discrepancy is returned along with the averaged fluxes.
    """
    geo = mesh.geometry()
    mid = geo["side_midpoint"]
    nrm = geo["side_normal"]
    cent = geo["centroids"]
    ns = mesh.num_sides
    flux = np.zeros((2, ns))
    count = np.zeros(ns)
    jump = np.zeros((2, ns))
    for slot in (0, 1):
        sel = np.nonzero(mesh.side_elements[:, slot] >= 0)[0]
        e = mesh.side_elements[sel, slot]
        rel = mid[sel] - cent[e]  # (m, 2)
        vals = np.einsum("mid,md->im", p0_part[e], nrm[sel]) + slope[
            e
        ].T * np.einsum("md,md->m", rel, nrm[sel])
        if slot == 0:
            flux[:, sel] = vals
        else:
            jump[:, sel] = flux[:, sel] - vals
            flux[:, sel] += vals
        count[sel] += 1.0
    flux /= count
    return flux, np.abs(jump).max(initial=0.0)


def marini_stokes(u_h, p_h, u_hat, f_h, nu, mesh, big_f_h=None, jump_tol=1e-8):
    """Stress reconstruction from the discrete Stokes solution.

    T_h = nu grad_h(u_h + u_hat) - p_h I - (1/d) f_h otimes (id - Pi_h id).

    With a tensor load part F_h the returned field is the Raviart-Thomas
    part T_h - F_h (the full stress is the sum of the two); without one it
    is the stress itself.  A larger interior-flux discrepancy than
    `jump_tol` signals that (u_h, p_h) does not solve the discrete system.
    """
    grads = broken_gradient(u_h + u_hat).values
    pvals = p_h.values if isinstance(p_h, P0Field) else np.asarray(p_h)
    p0_part = nu * grads
    p0_part[:, 0, 0] -= pvals
    p0_part[:, 1, 1] -= pvals
    if big_f_h is not None:
        p0_part = p0_part - _p0_values(big_f_h, mesh, (mesh.num_elements, 2, 2))
    fv = _p0_values(f_h, mesh, (mesh.num_elements, 2))
    slope = -0.5 * fv  # row slopes of -(1/d) f (x - x_T), d = 2
    flux, jump = _flux_from_local(mesh, p0_part, slope)
    if jump > jump_tol:
        raise AdmissibilityError(
            f"stress reconstruction has interior flux jumps {jump:.3e}; "
            "the input pair does not solve the discrete system"
        )
    field = RTField(mesh, flux)
    field.reconstruction_jump = jump
    return field


def marini_stokes_inverse(t_h, u_bar, u_hat, nu, mesh, jump_tol=1e-8):
    """Velocity reconstruction from the discrete dual (mixed) solution.

    u_h = u_bar + [(1/nu) dev(Pi_h T_h) - grad_h u_hat] (id - Pi_h id),
    evaluated at the side midpoints.  Since dev Pi_h T_h equals
    nu grad_h(u_h + u_hat) at the discrete solution, subtracting the lift
    gradient recovers the primal solution itself; the bracket reduces to
    (1/nu) dev Pi_h T_h for a homogeneous lift.  The result must lie in the
    CR space: each interior side midpoint receives the same value from both
    adjacent elements.
    """
    geo = mesh.geometry()
    mid = geo["side_midpoint"]
    cent = geo["centroids"]
    dv = dev(t_h.cell_average().values) / nu - broken_gradient(u_hat).values
    ubv = u_bar.values if isinstance(u_bar, P0Field) else np.asarray(u_bar)
    ns = mesh.num_sides
    vals = np.zeros((ns, 2))
    count = np.zeros(ns)
    jump = 0.0
    for slot in (0, 1):
        sel = np.nonzero(mesh.side_elements[:, slot] >= 0)[0]
        e = mesh.side_elements[sel, slot]
        rel = mid[sel] - cent[e]
        v = ubv[e] + np.einsum("mij,mj->mi", dv[e], rel)
        if slot == 0:
            vals[sel] = v
        else:
            jump = max(jump, np.abs(vals[sel] - v).max(initial=0.0))
            vals[sel] += v
        count[sel] += 1.0
    if jump > jump_tol:
        raise AdmissibilityError(
            f"velocity reconstruction jumps {jump:.3e}: input does not solve "
            "the discrete dual system"
        )
    return CRField(mesh, vals / count[:, None])


def marini_elasticity(u_h, u_hat, r_h, f_h, material, mesh, big_f_h=None,
                      jump_tol=1e-8):
    """Equilibrated stress from the discrete elasticity solution.

    sigma*_h = C eps_h(u_h + u_hat) + grad_h r_h - (1/d) f_h otimes (id - Pi_h id),
    with r_h the lifting of the jump-stabilisation residual.  The row-wise
    correction (rather than its symmetrised variant) is used so that every
    row is a Raviart-Thomas field with single-valued normal fluxes.  With a
    tensor load part F_h the returned field is sigma*_h - F_h, as for the
    Stokes reconstruction.
    """
    eps = broken_sym_gradient(u_h + u_hat).values
    p0_part = material.apply(eps) + broken_gradient(r_h).values
    if big_f_h is not None:
        p0_part = p0_part - _p0_values(big_f_h, mesh, (mesh.num_elements, 2, 2))
    fv = _p0_values(f_h, mesh, (mesh.num_elements, 2))
    slope = -0.5 * fv
    flux, jump = _flux_from_local(mesh, p0_part, slope)
    if jump > jump_tol:
        raise AdmissibilityError(
            f"stress reconstruction has interior flux jumps {jump:.3e}; "
            "inconsistent lifting or solution"
        )
    field = RTField(mesh, flux)
    field.reconstruction_jump = jump
    return field


def _p0_values(f, mesh, shape):
    if f is None:
        return np.zeros(shape)
    if isinstance(f, P0Field):
        return f.values
    return np.asarray(f, dtype=float)


# -- admissibility checks --------------------------------------------------------


def check_stokes_admissible_velocity(v_h, tol=1e-10):
    """Max |div_h v| and Dirichlet-side violation of a candidate velocity."""
    div = np.abs(broken_divergence(v_h).values).max(initial=0.0)
    bc = np.abs(v_h.values[v_h.mesh.side_labels == _mesh.DIRICHLET]).max(initial=0.0)
    return max(div, bc) <= tol, max(div, bc)


def check_stress_admissible(tau, f_h, g_h, mesh, tol=1e-10):
    """Constraint residual of a stress candidate (given relative to F_h).

    Checks div(tau) = -f_h element-wise and tau n = g_h on Neumann sides;
    interior normal-flux continuity is structural for RTField storage.
    """
    fv = _p0_values(f_h, mesh, (mesh.num_elements, 2))
    div = tau.divergence().values
    res = np.abs(div + fv).max(initial=0.0)
    neumann = mesh.sides_with_label(_mesh.NEUMANN)
    if len(neumann):
        tn = tau.flux[:, neumann].T  # (m, 2)
        if g_h is not None:
            tn = tn - np.asarray(g_h)[neumann]
        res = max(res, np.abs(tn).max(initial=0.0))
    return res <= tol, res


# -- energies, gaps, strong convexity measures ------------------------------------


class AdmissiblePair:
    """Validated candidate pair for the discrete gap identity.

    v_h must be discretely divergence-free with zero Dirichlet DOFs, tau_h
    (relative to F_h) must satisfy the divergence and Neumann-trace
    constraints of the system's data; construction raises
    AdmissibilityError otherwise.
    """

    def __init__(self, v_h, tau_h, system, tol=1e-10):
        ok_v, res_v = check_stokes_admissible_velocity(v_h, tol=tol)
        if not ok_v:
            raise AdmissibilityError(f"velocity constraint residual {res_v:.3e}")
        ok_t, res_t = check_stress_admissible(
            tau_h, system.f_h, system.g_h, system.mesh, tol=tol
        )
        if not ok_t:
            raise AdmissibilityError(f"stress constraint residual {res_t:.3e}")
        self.v_h = v_h
        self.tau_h = tau_h
        self.system = system

    def gap(self):
        return float(
            gap_indicator_stokes_discrete(
                self.v_h, self.tau_h, self.system.u_hat, self.system.nu,
                self.system.mesh, big_f_h=self.system.big_f_h,
            ).sum()
        )


def _total_dev_avg(tau_rel, big_f_h, mesh):
    avg = tau_rel.cell_average().values
    if big_f_h is not None:
        avg = avg + _p0_values(big_f_h, mesh, (mesh.num_elements, 2, 2))
    return dev(avg)


def energies_stokes(v_h, tau_h, system, admissibility_tol=1e-8):
    """Discrete primal and dual energies of a candidate pair.

    tau_h is given relative to the tensor load F_h (the identity mapping
    when there is none).  Returns a dict with I_h(v_h) and D_h(tau_h); an
    inadmissible velocity yields +inf for the primal energy, an
    inadmissible stress -inf for the dual energy.
    """
    mesh = system.mesh
    nu = system.nu
    grad_tot = broken_gradient(v_h + system.u_hat)
    ok_v, _ = check_stokes_admissible_velocity(v_h, tol=admissibility_tol)
    if ok_v:
        primal = 0.5 * nu * norm_p0(grad_tot) ** 2 - system.load(v_h)
    else:
        primal = np.inf
    ok_t, _ = check_stress_admissible(
        tau_h, system.f_h, system.g_h, mesh, tol=admissibility_tol
    )
    if ok_t:
        devavg = P0Field(mesh, _total_dev_avg(tau_h, system.big_f_h, mesh))
        grad_hat = broken_gradient(system.u_hat)
        dual = -norm_p0(devavg) ** 2 / (2.0 * nu) + inner_p0(devavg, grad_hat)
    else:
        dual = -np.inf
    return {"primal": primal, "dual": dual}


def gap_indicator_stokes_discrete(v_h, tau_h, u_hat, nu, mesh, big_f_h=None):
    """Per-element discrete gap (nu/2)||grad_h(v+u_hat) - dev(Pi_h tau)/nu||_T^2."""
    grads = broken_gradient(v_h + u_hat).values
    devavg = _total_dev_avg(tau_h, big_f_h, mesh)
    diff = grads - devavg / nu
    per_element = 0.5 * nu * mesh.areas * np.einsum("nij,nij->n", diff, diff)
    return per_element


def strong_convexity_stokes(v_h, tau_h, solution):
    """Discrete strong convexity measures of a candidate pair.

    rho_primal^2 = (nu/2) ||grad_h v - grad_h u_h||^2 and
    rho_dual^2 = 1/(2 nu) ||dev Pi_h tau - dev Pi_h T_h||^2, with (u_h, T_h)
    the discrete solution pair.
    """
    nu = solution.nu
    dgrad = broken_gradient(v_h - solution.u_h)
    rho_primal = 0.5 * nu * norm_p0(dgrad) ** 2
    ddev = dev(tau_h.cell_average().values) - dev(
        solution.t_h.cell_average().values
    )
    mesh = v_h.mesh
    rho_dual = np.sum(mesh.areas * np.einsum("nij,nij->n", ddev, ddev)) / (2.0 * nu)
    return {"primal": rho_primal, "dual": float(rho_dual)}


class StokesSolution:
    """Bundle of the discrete Stokes solution and its reconstruction.

    t_h stores the Raviart-Thomas part of the stress relative to the tensor
    load F_h (equal to the stress itself when no tensor load is present);
    stress_avg_total() returns the element averages of the full stress.
    """

    def __init__(self, mesh, nu, u_h, p_h, t_h, u_hat, system):
        self.mesh = mesh
        self.nu = nu
        self.u_h = u_h
        self.p_h = p_h
        self.t_h = t_h
        self.u_hat = u_hat
        self.system = system

    def stress_avg_total(self):
        avg = self.t_h.cell_average().values
        if self.system.big_f_h is not None:
            avg = avg + _p0_values(
                self.system.big_f_h, self.mesh, (self.mesh.num_elements, 2, 2)
            )
        return avg

    def optimality_residual(self):
        """Max |dev Pi_h T_h - nu grad_h(u_h + u_hat)| over elements."""
        devavg = dev(self.stress_avg_total())
        grads = broken_gradient(self.u_h + self.u_hat).values
        return float(np.abs(devavg - self.nu * grads).max())


class ElasticitySolution:
    """Bundle of the discrete elasticity solution and its reconstruction."""

    def __init__(self, mesh, material, u_h, r_h, sigma_star, u_hat, system):
        self.mesh = mesh
        self.material = material
        self.u_h = u_h
        self.r_h = r_h
        self.sigma_star = sigma_star
        self.u_hat = u_hat
        self.system = system

    def optimality_residual(self):
        """Max |Pi_h sigma* - C eps_h(u_h+u_hat) - grad_h r_h| over elements."""
        avg = self.sigma_star.cell_average().values
        eps = broken_sym_gradient(self.u_h + self.u_hat).values
        target = self.material.apply(eps) + broken_gradient(self.r_h).values
        return float(np.abs(avg - target).max())


# -- continuous-level indicators ---------------------------------------------------


def gap_indicator_stokes(v, tau_h, grad_lift, nu, mesh, degree=10, big_f_h=None):
    """Per-element indicator (nu/2) ||grad v + grad u_hat - dev(tau)/nu||_T^2.

    Parameters
    ----------
    v : P1ConformingField
        Conforming post-processed velocity (homogeneous part).
    tau_h : RTField
        Stress relative to the tensor load F_h (the stress itself without one).
    grad_lift : callable or None
        Gradient of the exact Dirichlet lift; None means zero.
    """
    bary, w = triangle_rule(degree)
    pts = physical_points(mesh, bary)
    gv = v.gradient().values[:, None, :, :]
    if grad_lift is not None:
        gv = gv + grad_lift(pts)
    tau = tau_h.evaluate(pts)
    if big_f_h is not None:
        tau = tau + _p0_values(big_f_h, mesh, (mesh.num_elements, 2, 2))[:, None]
    diff = gv - dev(tau) / nu
    vals = np.einsum("q,nqij,nqij->n", w, diff, diff)
    return 0.5 * nu * mesh.areas * vals


def gap_indicator_elasticity(v, sigma, material, mesh, degree=10, grad_lift=None,
                             big_f_h=None):
    """Per-element indicator (1/2) ||C^(1/2)(eps(v) - C^-1 sigma)||_T^2.

    v is the conforming post-processed total displacement (Dirichlet lift
    included); pass grad_lift to add an analytic lift gradient instead.
    sigma is relative to the tensor load F_h when one is present.
    """
    bary, w = triangle_rule(degree)
    pts = physical_points(mesh, bary)
    gv = v.gradient().values[:, None, :, :] + np.zeros(pts.shape[:2] + (2, 2))
    if grad_lift is not None:
        gv = gv + grad_lift(pts)
    sv = sigma.evaluate(pts)
    if big_f_h is not None:
        sv = sv + _p0_values(big_f_h, mesh, (mesh.num_elements, 2, 2))[:, None]
    diff = sym(gv) - material.inverse(sv)
    vals = material.energy_product(diff, diff)
    return 0.5 * mesh.areas * np.einsum("q,nq->n", w, vals)


def oscillation_indicator(f, f_h, big_f, big_f_h, mesh, degree=10):
    """Per-element data oscillation (h_T^2/pi^2)||f - f_h||_T^2 + ||F - F_h||_T^2."""
    geo = mesh.geometry()
    bary, w = triangle_rule(degree)
    pts = physical_points(mesh, bary)
    out = np.zeros(mesh.num_elements)
    if f is not None:
        fv = np.asarray(f(pts))
        fhv = _p0_values(f_h, mesh, (mesh.num_elements, 2))
        diff = fv - fhv[:, None, :]
        out += (
            (geo["h_t"] ** 2 / np.pi**2)
            * mesh.areas
            * np.einsum("q,nqi,nqi->n", w, diff, diff)
        )
    if big_f is not None:
        fv = np.asarray(big_f(pts))
        fhv = _p0_values(big_f_h, mesh, (mesh.num_elements, 2, 2))
        diff = fv - fhv[:, None, :, :]
        out += mesh.areas * np.einsum("q,nqij,nqij->n", w, diff, diff)
    return out


# -- random admissible fields ------------------------------------------------------


def random_divfree_cr(mesh, seed, scale=1.0):
    """Random field in the discretely divergence-free homogeneous CR space.

    Uniform[-1,1] DOFs are zeroed on Dirichlet sides and projected onto
    ker(div_h) orthogonally in the broken H1 seminorm (a Stokes-type saddle
    solve); the output is normalised to broken-H1 seminorm `scale`.
    """
    rng = np.random.default_rng(seed)
    ns = mesh.num_sides
    raw = rng.uniform(-1.0, 1.0, size=(ns, 2))
    raw[mesh.side_labels == _mesh.DIRICHLET] = 0.0
    projected = project_divfree_cr(CRField(mesh, raw))
    g = broken_gradient(projected)
    nrm = norm_p0(g)
    if nrm == 0.0:
        raise AdmissibilityError("random divergence-free sample degenerated to zero")
    return (scale / nrm) * projected


def project_divfree_cr(v):
    """Broken-H1-orthogonal projection onto the divergence-free subspace.

    The saddle factorization is cached on the mesh so repeated projections
    (one per random sample) reuse it.
    """
    import scipy.sparse.linalg as sla

    mesh = v.mesh
    ns = mesh.num_sides
    cache = mesh.__dict__.setdefault("_divfree_projector", None)
    if cache is None:
        free = np.nonzero(mesh.side_labels != _mesh.DIRICHLET)[0]
        idx = np.concatenate([free, free + ns])
        k_scal = cr_stiffness(mesh)
        a = sparse.block_diag([k_scal, k_scal]).tocsr()
        b = (sparse.diags(mesh.areas) @ cr_divergence_matrix(mesh))[:, idx]
        a_ff = a[idx][:, idx]
        blocks = [[a_ff, b.T], [b, None]]
        extra = 0
        # pin the pressure gauge when no Neumann side exists
        if len(mesh.sides_with_label(_mesh.NEUMANN)) == 0:
            gauge = sparse.coo_matrix(
                (mesh.areas, (np.zeros(mesh.num_elements, dtype=int),
                              np.arange(mesh.num_elements))),
                shape=(1, mesh.num_elements),
            )
            blocks = [
                [a_ff, b.T, None],
                [b, None, gauge.T],
                [None, gauge, None],
            ]
            extra = 1
        mat = sparse.bmat(blocks, format="csc")
        cache = {
            "lu": sla.splu(mat),
            "mat": mat,
            "a_full": a,
            "idx": idx,
            "free": free,
            "extra": extra,
        }
        mesh.__dict__["_divfree_projector"] = cache
    vvec = np.concatenate([v.values[:, 0], v.values[:, 1]])
    rhs = np.concatenate(
        [
            (cache["a_full"] @ vvec)[cache["idx"]],
            np.zeros(mesh.num_elements + cache["extra"]),
        ]
    )
    x = cache["lu"].solve(rhs)
    x += cache["lu"].solve(rhs - cache["mat"] @ x)
    out = np.zeros((ns, 2))
    free = cache["free"]
    nf = len(free)
    out[free, 0] = x[:nf]
    out[free, 1] = x[nf: 2 * nf]
    return CRField(mesh, out)


def random_divfree_rt(mesh, seed, scale=1.0):
    """Random RT tensor with exactly zero divergence and zero Neumann trace.

    Each row is the rotated gradient (d2 phi, -d1 phi) of a random conforming
    P1 potential vanishing at all vertices on the closure of the Neumann
    boundary, so the divergence vanishes identically and Neumann normal
    traces are zero by construction.  Normalised so ||dev Pi_h .|| = scale
    (unless the deviatoric part degenerates).
    """
    rng = np.random.default_rng(seed)
    nv = mesh.num_vertices
    phi = rng.uniform(-1.0, 1.0, size=(nv, 2))
    neumann = mesh.sides_with_label(_mesh.NEUMANN)
    pinned = np.unique(mesh.side_vertices[neumann]) if len(neumann) else []
    phi[pinned] = 0.0
    geo = mesh.geometry()
    gl = geo["grad_lambda"]  # (ne, 3, 2)
    pv = phi[mesh.elements]  # (ne, 3, 2) s: vertex, component=row
    grads = np.einsum("nki,nkd->nid", pv, gl)  # (ne, row, d)
    rows = np.stack([grads[:, :, 1], -grads[:, :, 0]], axis=2)  # rot
    flux, jump = _flux_from_local(mesh, rows, np.zeros((mesh.num_elements, 2)))
    if jump > 1e-12:
        raise AdmissibilityError("rotated-gradient construction lost conformity")
    field = RTField(mesh, flux)
    nrm = norm_p0(P0Field(mesh, dev(field.cell_average().values)))
    if nrm < 1e-14:
        raise AdmissibilityError("random stress perturbation has no deviatoric part")
    return (scale / nrm) * field


# -- a priori identity --------------------------------------------------------------


def apriori_identity_check_stokes(problem, mesh, degree=14):
    """Evaluate both sides of the a priori error identity on one mesh.

    Requires a Stokes problem in tensor-load form (exact stress T, tensor
    part F with (T - F) n = 0 on the Neumann boundary, f = -div(T - F)).
    The discrete problem is solved with f_h = Pi_h f, F_h = Pi_h F and the
    interpolated lift; returns a dict with lhs, rhs and the solution bundle.
    """
    from .problems import discretize_stokes  # local import to avoid a cycle

    sol = discretize_stokes(problem, mesh)
    nu = problem.nu
    exact = problem.exact

    icr_u = _interpolate_homogeneous_velocity(problem, mesh)
    lhs1 = 0.5 * nu * norm_p0(broken_gradient(icr_u - sol.u_h)) ** 2

    def t_minus_f(x):
        return exact["stress"](x) - problem.big_f(x)

    irt = rt_interpolate(t_minus_f, mesh)
    pi_irt = P0Field(mesh, dev(irt.cell_average().values))
    # sol.t_h already stores the stress relative to F_h
    pi_th = P0Field(mesh, dev(sol.t_h.cell_average().values))
    lhs2 = norm_p0(P0Field(mesh, pi_irt.values - pi_th.values)) ** 2 / (2.0 * nu)

    pi_exact = pi0(t_minus_f, mesh, degree=degree)
    diff = P0Field(mesh, dev(pi_exact.values) - pi_irt.values)
    rhs = norm_p0(diff) ** 2 / (2.0 * nu)
    return {"lhs": lhs1 + lhs2, "lhs_primal": lhs1, "lhs_dual": lhs2, "rhs": rhs,
            "solution": sol}


def _interpolate_homogeneous_velocity(problem, mesh):
    """I_cr of the homogenised exact velocity u_orig - u_hat (zero when the
    lift is the exact field itself)."""
    exact_u = problem.exact["u"]
    lift = problem.dirichlet_lift
    icr = cr_interpolate(
        lambda x: np.asarray(exact_u(x)) - np.asarray(lift(x)), mesh
    )
    icr.values[mesh.side_labels == _mesh.DIRICHLET] = 0.0
    return icr
