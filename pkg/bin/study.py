"""Error norms, convergence and condition studies, and the sampling suites that check the
discrete Korn inequalities, norm equivalences and interpolation properties."""

import math

import attr
import numpy as np
import pandas as pd

import config
import fespaces
import hdg
import interp
import mcs
import mesh as meshlib
import polycalc
import quadrature
import sparsela
import util
from fespaces import SpaceTag

ERROR_COLUMNS = ['err_eps', 'err_l2', 'err_omega', 'err_p']
CONDITION_COLUMNS = ['level', 'ntets', 'alpha', 'cond_hdg', 'cond_mcs']

# Elements per batch in the high degree quadratures.
CHUNK = 256


def _chunks(n, size=CHUNK):
    for start in range(0, n, size):
        yield np.arange(start, min(n, start + size))


def _tiny():
    return np.finfo(float).tiny


def default_potential():
    """10 (x^5 + y^5 + z^5), the gradient forcing of the robustness experiment."""
    x, y, z = polycalc.X, polycalc.Y, polycalc.Z
    return (x**5 + y**5 + z**5) * 10.0


def random_polynomial_field(rng, degree=5):
    """A vector field with standard normal coefficients on all monomials up to `degree`."""
    i, j, k = np.indices((degree + 1,) * 3)
    mask = i + j + k <= degree

    def component():
        c = np.zeros(mask.shape)
        c[mask] = rng.standard_normal(int(mask.sum()))
        return polycalc.MultiPoly(c)

    return [component() for _ in range(3)]


# Error norms and EOC


def error_norms(solution, data):
    """L2 errors of a solved (or interpolated) solution against the exact fields."""
    u = solution.u
    geometry = u.spaces.mesh.geometry
    rule = quadrature.rule_for(3, config.MAX_QUADRATURE_DEGREE)
    eps_h = u.sym_grad()
    names = ERROR_COLUMNS + (['err_sigma'] if solution.sigma is not None else [])
    sums = dict.fromkeys(names, 0.0)

    for elements in _chunks(geometry.n_elements):
        points, weights = quadrature.map_tet_rule(geometry.subset(elements), rule)

        def squared(diff):
            flat = np.reshape(diff, weights.shape + (-1,))
            return float(np.einsum('mq,mqk->', weights, flat**2))

        strain = polycalc.evaluate(data.strain, points)
        sums['err_eps'] += squared(strain - eps_h[elements][:, None])
        sums['err_l2'] += squared(polycalc.evaluate(data.u, points) - u.values(points, elements))
        sums['err_omega'] += squared(
            polycalc.evaluate(data.omega, points) - solution.omega.values(points, elements)
        )
        sums['err_p'] += squared(data.pressure(points) - solution.p.values(points, elements))
        if solution.sigma is not None:
            sums['err_sigma'] += squared(
                polycalc.evaluate(data.sigma, points) - solution.sigma.values(points, elements)
            )
    return {name: math.sqrt(value) for name, value in sums.items()}


def eoc(errors, hs):
    """log(e_{l-1}/e_l) / log(h_{l-1}/h_l); NaN for the first level and for zero errors."""
    rates = [math.nan]
    for (e0, h0), (e1, h1) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        if e0 > 0 and e1 > 0 and h0 != h1:
            rates.append(math.log(e0 / e1) / math.log(h0 / h1))
        else:
            rates.append(math.nan)
    return rates


@attr.s
class NormReport:
    method = attr.ib()
    rows = attr.ib(factory=list)

    @property
    def error_columns(self):
        if self.rows and 'err_sigma' in self.rows[0]:
            return ERROR_COLUMNS + ['err_sigma']
        return list(ERROR_COLUMNS)

    def add(self, level, mesh, errors):
        self.rows.append({'level': level, 'ntets': mesh.n_tets, 'h': mesh.h_max, **errors})

    def frame(self):
        columns = ['level', 'ntets', 'h'] + self.error_columns
        frame = pd.DataFrame(self.rows, columns=columns)
        for name in self.error_columns:
            frame['eoc' + name[3:]] = eoc(list(frame[name]), list(frame['h']))
        return frame

    def finest_eoc(self, name):
        rates = eoc([row[name] for row in self.rows], [row['h'] for row in self.rows])
        return rates[-1]


# Solving one level


def build_spaces(
    n, h_mode=config.DEFAULT_H_MODE, *, with_sigma=True, neumann_face=config.DEFAULT_NEUMANN_FACE
):
    mesh = meshlib.build_structured_cube(n, neumann_face)
    return fespaces.Spaces(mesh, h_mode, with_sigma=with_sigma)


def solve_method(method, spaces, data, *, alpha=config.DEFAULT_ALPHA, nu=None, add_divdiv=False):
    """Assemble and solve one method on one mesh; the viscosity defaults to the one of `data`."""
    nu = data.nu if nu is None else nu
    if method == 'hdg':
        params = hdg.HdgParams(alpha=alpha, nu=nu, h_mode=spaces.h_mode)
        return hdg.solve_hdg(hdg.assemble_hdg(spaces, params, data))
    if method == 'mcs':
        params = mcs.McsParams(nu=nu, add_divdiv=add_divdiv, h_mode=spaces.h_mode)
        return mcs.solve_mcs(mcs.assemble_mcs(spaces, params, data))
    raise ValueError(f'unknown method {method!r}')


def convergence_study(
    method,
    levels,
    *,
    alpha=config.DEFAULT_ALPHA,
    nu=config.DEFAULT_NU,
    h_mode=config.DEFAULT_H_MODE,
    add_divdiv=False,
):
    """Errors of the manufactured solution on the structured cube meshes with n = levels."""
    data = polycalc.build_manufactured(nu)
    report = NormReport(method)
    bar = util.ProgressBar(method, items=[f'n={n}' for n in levels])
    for n in levels:
        localbar = bar.start(f'n={n}')
        spaces = build_spaces(n, h_mode, with_sigma=method == 'mcs')
        solution = solve_method(method, spaces, data, alpha=alpha, add_divdiv=add_divdiv)
        errors = error_norms(solution, data)
        report.add(n, spaces.mesh, errors)
        localbar.done(
            True, ', '.join(f'{k} {v:.3e}' for k, v in errors.items()) + f' ({solution.stats.kind})'
        )
    bar.finalize(print_done=False)
    check_rates(report)
    return report


def check_rates(report):
    """Report an error for every column whose eoc on the finest pair of levels misses its range.
    Pairs whose coarser level is below config.ASYMPTOTIC_LEVEL are not checked. Returns the
    names of the columns that missed."""
    if len(report.rows) < 2 or report.rows[-2]['level'] < config.ASYMPTOTIC_LEVEL:
        return []
    misses = []
    for name in report.error_columns:
        lo, hi = config.EOC_L2_RANGE if name == 'err_l2' else config.EOC_ENERGY_RANGE
        rate = report.finest_eoc(name)
        if not lo <= rate <= hi:
            misses.append(name)
            util.error(f'{report.method}: eoc of {name} is {rate:.3f}, expected [{lo}, {hi}]')
    return misses


def write_convergence_csv(report, path, comments=()):
    return util.write_csv(path, report.frame(), comments)


# Condition numbers


def condition_estimates(spaces, alphas, nu=config.DEFAULT_NU):
    """Extremal eigenvalues of the Jacobi scaled reduced HDG A block per alpha and of the
    condensed MCS A block with the div-div term."""
    hdg_estimates = []
    for alpha in alphas:
        system = hdg.assemble_hdg(spaces, hdg.HdgParams(alpha=alpha, nu=nu, h_mode=spaces.h_mode))
        estimate = sparsela.estimate_condition(sparsela.jacobi_scaled(system.A))
        if not estimate.definite:
            util.warn(
                f'HDG A block at alpha {alpha:g} is indefinite '
                f'(smallest eigenvalue {estimate.lambda_min:.3e})'
            )
        hdg_estimates.append(estimate)
    reduced, _ = reduced_system('mcs', spaces, nu=nu, add_divdiv=True)
    return hdg_estimates, sparsela.estimate_condition(sparsela.jacobi_scaled(reduced.A))


def best_definite_cond(estimates):
    """Smallest cond among the definite estimates; inf when none is definite."""
    return min((e.cond for e in estimates if e.definite), default=math.inf)


def condition_growth(alphas, previous, current):
    """(name, growth) per method between two consecutive levels. HDG is followed from
    config.DEFAULT_ALPHA on, where both estimates are definite."""
    growth = [('MCS', current[1].cond / previous[1].cond)]
    for alpha, before, after in zip(alphas, previous[0], current[0]):
        if alpha >= config.DEFAULT_ALPHA and before.definite and after.definite:
            growth.append((f'HDG alpha={alpha:g}', after.cond / before.cond))
    return growth


def condition_study(levels, alphas, *, nu=config.DEFAULT_NU, h_mode=config.DEFAULT_H_MODE):
    """cond of the A blocks on every level. MCS must not exceed any definite HDG block from
    config.COND_ORDER_LEVEL on, and the growth per refinement must stay in
    config.COND_GROWTH_RANGE from config.ASYMPTOTIC_LEVEL on."""
    if len(alphas) == 0:
        raise ValueError('the condition study needs at least one alpha')
    rows = []
    previous = None
    bar = util.ProgressBar('cond', items=[f'n={n}' for n in levels])
    for i, n in enumerate(levels):
        localbar = bar.start(f'n={n}')
        spaces = build_spaces(n, h_mode)
        current = condition_estimates(spaces, alphas, nu)
        hdg_conds, mcs_cond = [e.cond for e in current[0]], current[1].cond
        for alpha, cond in zip(alphas, hdg_conds):
            rows.append({'level': n, 'ntets': spaces.mesh.n_tets, 'alpha': alpha, 'cond_hdg': cond})
        rows.append({'level': n, 'ntets': spaces.mesh.n_tets, 'cond_mcs': mcs_cond})

        best = best_definite_cond(current[0])
        if n >= config.COND_ORDER_LEVEL and mcs_cond > best:
            localbar.error(f'MCS condition {mcs_cond:.3e} exceeds the best HDG one {best:.3e}')
        if previous is not None and levels[i - 1] >= config.ASYMPTOTIC_LEVEL:
            lo, hi = config.COND_GROWTH_RANGE
            for name, growth in condition_growth(alphas, previous, current):
                if not lo <= growth <= hi:
                    localbar.error(f'{name}: condition grew by {growth:.2f} per refinement')
        previous = current
        localbar.done(True, f'MCS {mcs_cond:.3e}, HDG ' + ' '.join(f'{c:.3e}' for c in hdg_conds))
    bar.finalize(print_done=False)
    return pd.DataFrame(rows, columns=CONDITION_COLUMNS)


def write_condition_csv(frame, path, comments=()):
    return util.write_csv(path, frame, comments)


# Pressure robustness


@attr.s
class RobustnessReport:
    method = attr.ib()
    ntets = attr.ib()
    kinematic_change = attr.ib()
    pressure_error = attr.ib()

    @property
    def passed(self):
        tol = config.ROBUSTNESS_TOLERANCE
        return self.kinematic_change <= tol and self.pressure_error <= tol


def reduced_system(
    method, spaces, data=None, *, alpha=config.DEFAULT_ALPHA, nu=None, add_divdiv=False
):
    """The saddle point system over (u, uhat, omega, p) of one method, and the stress recovery
    of MCS (None for HDG). add_divdiv only applies to MCS."""
    nu = data.nu if nu is None else nu
    if method == 'hdg':
        params = hdg.HdgParams(alpha=alpha, nu=nu, h_mode=spaces.h_mode)
        return hdg.assemble_hdg(spaces, params, data), None
    if method == 'mcs':
        params = mcs.McsParams(nu=nu, add_divdiv=add_divdiv, h_mode=spaces.h_mode)
        return mcs.condense_stress(mcs.assemble_mcs(spaces, params, data))
    raise ValueError(f'unknown method {method!r}')


def pressure_robustness_experiment(
    method, spaces, *, nu=config.DEFAULT_NU, alpha=config.DEFAULT_ALPHA, potential=None
):
    """Move f to f + grad(phi) and the Neumann pressure to p + phi.

    The solution moves by the solve of the load increment, which for a pressure robust method
    is (0, I_Q phi). One factorization gives the base solution and the correction to that
    predicted increment; the kinematic part of the correction is the change of the kinematic
    fields (and of the stress), its pressure part the pressure defect.
    """
    hdg.require_neumann(spaces.mesh)
    data = polycalc.build_manufactured(nu)
    potential = default_potential() if potential is None else potential
    system, recover = reduced_system(method, spaces, data, alpha=alpha)

    shift = interp.interp_Q(spaces, potential).coefficients
    load = hdg.load_vector(spaces, system.layout, data.with_potential(potential))
    residual = (load - system.rhs_kinematic) - system.B.T @ shift

    factorization = sparsela.Factorization(system.matrix())
    base = factorization.solve(system.rhs())
    correction = factorization.solve(np.concatenate([residual, np.zeros(len(shift))]))

    k = system.n_kinematic
    before, change = base[:k], correction[:k]
    if recover is not None:
        before = np.concatenate([before, recover(base[:k]).coefficients])
        change = np.concatenate([change, recover(correction[:k]).coefficients])
    kinematic_change = np.linalg.norm(change) / max(np.linalg.norm(before), _tiny())

    volumes = spaces.mesh.geometry.volumes
    scale = math.sqrt(np.sum(volumes * shift**2))
    pressure_error = math.sqrt(np.sum(volumes * correction[k:] ** 2)) / max(scale, 1.0)
    return RobustnessReport(method, len(volumes), float(kinematic_change), pressure_error)


# Facet and element terms of the discrete norms


def _facet_rule():
    return quadrature.rule_for(2, 2)


def _side_values(field, points, tets):
    """Values of `field` at per-facet points (f, q, 3) from the given elements; zero where the
    element index is negative."""
    out = np.zeros(points.shape[:2] + (3,))
    present = tets >= 0
    out[present] = field.values(points[present], tets[present])
    return out


def _tangential(v, n):
    return v - np.einsum('...i,...i->...', v, n)[..., None] * n


@attr.s
class KornSample:
    grad = attr.ib()
    eps = attr.ib()
    jump_rigid = attr.ib()
    jump_mean = attr.ib()
    curl_jump = attr.ib()
    # Per facet norms of the tangential jump and its two projections.
    facet_mean = attr.ib(default=None)
    facet_rigid = attr.ib(default=None)
    facet_full = attr.ib(default=None)
    identity_projection = attr.ib(default=0.0)
    identity_rigid = attr.ib(default=0.0)

    @property
    def rigid_side(self):
        return self.eps + self.jump_rigid

    @property
    def curl_side(self):
        return self.eps + self.jump_mean + self.curl_jump


def korn_terms(u):
    """The terms of the discrete Korn inequalities for one velocity on the interior and
    Dirichlet facets, plus the relative defects of the two r_F identities."""
    spaces = u.spaces
    mesh = spaces.mesh
    g = mesh.geometry
    facets = np.flatnonzero(mesh.facet_labels != meshlib.NEUMANN)
    tets = mesh.facet_tets[facets]
    h = spaces.facet_h()[facets]
    n = mesh.facet_normals[facets]
    x_f = mesh.facet_centroids[facets]
    areas = mesh.facet_areas[facets]

    points, weights = quadrature.map_facet_rule(mesh.vertices[mesh.facets[facets]], _facet_rule())
    jump = _side_values(u, points, tets[:, 0]) - _side_values(u, points, tets[:, 1])
    jump_t = _tangential(jump, n[:, None])
    y = points - x_f[:, None]
    r = np.cross(n[:, None], y)

    mean = np.einsum('fq,fqi->fi', weights, jump_t) / areas[:, None]
    facet_mean = areas * np.einsum('fi,fi->f', mean, mean)
    r_norm2 = np.einsum('fq,fqi,fqi->f', weights, r, r)
    r_dot = np.einsum('fq,fqi,fqi->f', weights, r, jump)
    facet_rigid = facet_mean + r_dot**2 / r_norm2
    facet_full = np.einsum('fq,fqi,fqi->f', weights, jump_t, jump_t)

    # Projection onto span{t1, t2, r_F} by least squares, against the closed form.
    tangents = mesh.facet_tangents[facets]
    basis = np.concatenate(
        [np.broadcast_to(tangents[:, None], (len(facets), len(weights[0]), 2, 3)), r[:, :, None]],
        axis=2,
    )
    gram = np.einsum('fq,fqai,fqbi->fab', weights, basis, basis)
    moments = np.einsum('fq,fqai,fqi->fa', weights, basis, jump)
    coefficients = np.linalg.solve(gram, moments[..., None])[..., 0]
    projected = np.einsum('fa,fqai->fqi', coefficients, basis)
    difference = projected - mean[:, None]
    projection_norm = np.sqrt(np.einsum('fq,fqi,fqi->f', weights, difference, difference))
    closed_form = np.abs(r_dot) / np.sqrt(r_norm2)
    scale = max(
        float(np.sqrt(facet_full.max(initial=0.0))),
        float(np.sqrt(areas.max())) * u.max_abs(),
        _tiny(),
    )
    identity_projection = float(np.abs(projection_norm - closed_form).max(initial=0.0)) / scale

    curl = u.curl()
    curl_jump = np.einsum('fi,fi->f', curl[tets[:, 0]], n)
    inner = tets[:, 1] >= 0
    curl_jump[inner] -= np.einsum('fi,fi->f', curl[tets[inner, 1]], n[inner])

    # (r_F, w) = (r_F, eps(w)(x - x_F)) + (|x - x_F|^2, n . curl w) / 2 for w = u on each side.
    eps = u.sym_grad()
    worst = 0.0
    for side in range(2):
        present = tets[:, side] >= 0
        t = tets[present, side]
        w = u.values(points[present], t)
        lhs = np.einsum('fq,fqi,fqi->f', weights[present], r[present], w)
        rhs = np.einsum('fq,fqi,fij,fqj->f', weights[present], r[present], eps[t], y[present])
        rhs += 0.5 * np.einsum(
            'fq,fq,f->f',
            weights[present],
            np.einsum('fqi,fqi->fq', y[present], y[present]),
            np.einsum('fi,fi->f', n[present], curl[t]),
        )
        bound = np.sqrt(r_norm2[present] * np.einsum('fq,fqi,fqi->f', weights[present], w, w))
        defect = np.abs(lhs - rhs) / np.maximum(bound.max(initial=0.0), _tiny())
        worst = max(worst, float(defect.max(initial=0.0)))

    volumes = g.volumes
    gradient = u.gradient()
    return KornSample(
        grad=float(np.einsum('m,mij,mij->', volumes, gradient, gradient)),
        eps=float(np.einsum('m,mij,mij->', volumes, eps, eps)),
        jump_rigid=float(np.sum(facet_rigid / h)),
        jump_mean=float(np.sum(facet_mean / h)),
        curl_jump=float(np.sum(h * areas * curl_jump**2)),
        facet_mean=facet_mean,
        facet_rigid=facet_rigid,
        facet_full=facet_full,
        identity_projection=identity_projection,
        identity_rigid=worst,
    )


def averaged_curl_vorticity(u):
    """The vorticity with n . omega = n . {curl u} on every facet off the Dirichlet boundary
    and zero flux on it."""
    spaces = u.spaces
    mesh = spaces.mesh
    curl = u.curl()
    tets = mesh.facet_tets
    mean = curl[tets[:, 0]]
    inner = tets[:, 1] >= 0
    mean[inner] = 0.5 * (curl[tets[inner, 0]] + curl[tets[inner, 1]])
    flux = mesh.facet_areas * np.einsum('fi,fi->f', mean, mesh.facet_normals)
    flux[spaces[SpaceTag.Wh].dirichlet_mask] = 0.0
    return interp.DiscreteField(spaces, SpaceTag.Wh, flux)


@attr.s
class ElementTerms:
    """Per element squared norms of one kinematic triple (u, uhat, omega)."""

    grad = attr.ib()
    eps = attr.ib()
    hybrid = attr.ib()
    curl_normal = attr.ib()
    curl_volume = attr.ib()
    dev = attr.ib()
    div_u = attr.ib()
    div_omega = attr.ib()
    h2 = attr.ib()
    kappa_h1 = attr.ib()
    curl_kappa = attr.ib()

    def nabla_norm(self):
        return float(np.sum(self.grad + self.hybrid))

    def triple_norm(self):
        return float(np.sum(self.eps + self.hybrid + self.curl_normal))

    def eps_norm(self):
        return float(np.sum(self.eps + self.hybrid + self.curl_volume))

    def stress_norm(self):
        """The U_h norm plus the divergences of u and omega."""
        return float(np.sum(self.dev + self.hybrid + self.div_u + self.h2 * self.div_omega))


# (curl M)_{ia} = e_{abc} d_b M_{ic}, for the row-wise curl of matrix fields.
LEVI_CIVITA = np.zeros((3, 3, 3))
for _a, _b, _c in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
    LEVI_CIVITA[_a, _b, _c] = 1.0
    LEVI_CIVITA[_a, _c, _b] = -1.0


def element_terms(u, uhat, omega):
    spaces = u.spaces
    g = spaces.mesh.geometry
    volumes = g.volumes
    n = g.outward_normals
    h_facets = hdg.facet_h_per_element(spaces)
    h_elements = spaces.element_h()

    gradient = u.gradient()
    eps = u.sym_grad()
    curl = u.curl()
    div_u = u.divergence()

    u_facets = u.values(g.facet_centroids)
    mismatch = _tangential(uhat.facet_values() - u_facets, n)
    hybrid = np.einsum('mf,mfi,mfi->m', g.facet_areas / h_facets, mismatch, mismatch)

    omega_facets = omega.values(g.facet_centroids)
    normal_defect = np.einsum('mi,mfi->mf', curl, n) - np.einsum('mfi,mfi->mf', omega_facets, n)
    curl_normal = np.einsum('mf,mf->m', g.facet_areas * h_facets, normal_defect**2)

    points, weights = quadrature.map_tet_rule(g, quadrature.rule_for(3, 2))
    defect = curl[:, None] - omega.values(points)
    curl_volume = np.einsum('mq,mqi,mqi->m', weights, defect, defect)

    omega_center = omega.values(g.centroids[:, None])[:, 0]
    dev = gradient - (np.trace(gradient, axis1=1, axis2=2) / 3)[:, None, None] * np.eye(3)
    dev = dev - mcs.kappa_matrix(omega_center)
    div_omega = omega.divergence()

    omega_grad = omega.gradient()
    # d_l kappa(omega) = kappa(d_l omega)
    kappa_grad = np.moveaxis(mcs.kappa_matrix(np.moveaxis(omega_grad, 2, 1)), 1, -1)
    curl_kappa = np.einsum('abc,micb->mia', LEVI_CIVITA, kappa_grad)
    return ElementTerms(
        grad=volumes * np.einsum('mij,mij->m', gradient, gradient),
        eps=volumes * np.einsum('mij,mij->m', eps, eps),
        hybrid=hybrid,
        curl_normal=curl_normal,
        curl_volume=curl_volume,
        dev=volumes * np.einsum('mij,mij->m', dev, dev),
        div_u=volumes * div_u**2,
        div_omega=volumes * div_omega**2,
        h2=h_elements**2,
        kappa_h1=volumes * np.einsum('mijl,mijl->m', kappa_grad, kappa_grad),
        curl_kappa=volumes * np.einsum('mia,mia->m', curl_kappa, curl_kappa),
    )


def bracket(ratios):
    ratios = np.asarray(ratios, dtype=float)
    ratios = ratios[np.isfinite(ratios)]
    if len(ratios) == 0:
        return (math.nan, math.nan)
    return (float(ratios.min()), float(ratios.max()))


def bracket_change(first, second):
    """Largest relative change of either end of a ratio bracket."""
    changes = [abs(b - a) / abs(a) for a, b in zip(first, second) if a != 0]
    return max(changes, default=math.inf)


def _ratio(num, den):
    num, den = np.asarray(num, dtype=float), np.asarray(den, dtype=float)
    keep = den > 1e-14 * max(float(np.abs(den).max(initial=0.0)), _tiny())
    return num[keep] / den[keep]


@attr.s
class KornStats:
    n_samples = attr.ib()
    korn = attr.ib()
    equivalence = attr.ib()
    hdg_korn = attr.ib()
    identity_projection = attr.ib()
    identity_rigid = attr.ib()
    chain_violations = attr.ib()


def korn_suite(mesh, n_samples, rng, *, h_mode=config.DEFAULT_H_MODE):
    """Ratios of the discrete Korn inequalities over random Dirichlet-masked samples."""
    if n_samples < 1:
        raise ValueError(f'need at least one sample, got {n_samples}')
    spaces = fespaces.Spaces(mesh, h_mode, with_sigma=False)
    korn, equivalence, hdg_korn = [], [], []
    identity_projection = identity_rigid = 0.0
    violations = 0
    for _ in range(n_samples):
        u = interp.random_field(spaces, SpaceTag.Vh, rng)
        uhat = interp.random_field(spaces, SpaceTag.VhatH, rng)
        terms = korn_terms(u)
        korn.append(terms.grad / terms.curl_side)
        equivalence.append(terms.rigid_side / terms.curl_side)
        identity_projection = max(identity_projection, terms.identity_projection)
        identity_rigid = max(identity_rigid, terms.identity_rigid)
        slack = 1e-12 * terms.facet_full.max(initial=0.0)
        violations += int(np.sum(terms.facet_mean > terms.facet_rigid + slack))
        violations += int(np.sum(terms.facet_rigid > terms.facet_full + slack))

        local = element_terms(u, uhat, averaged_curl_vorticity(u))
        hdg_korn.append(local.nabla_norm() / local.triple_norm())
    return KornStats(
        n_samples,
        bracket(korn),
        bracket(equivalence),
        bracket(hdg_korn),
        identity_projection,
        identity_rigid,
        violations,
    )


@attr.s
class NormStats:
    n_samples = attr.ib()
    triple_eps = attr.ib()
    eps_stress = attr.ib()
    triple_stress = attr.ib()
    curl_local = attr.ib()
    kappa_local = attr.ib()
    curl_kappa_local = attr.ib()
    strain_local = attr.ib()

    def brackets(self):
        return {
            'triple/eps': self.triple_eps,
            'eps/U_h': self.eps_stress,
            'triple/U_h': self.triple_stress,
            'curl element': self.curl_local,
            'kappa element': self.kappa_local,
            'curl kappa element': self.curl_kappa_local,
            'strain element': self.strain_local,
        }


def norm_equivalence_suite(mesh, n_samples, rng, *, h_mode=config.DEFAULT_H_MODE):
    """Ratios between the kinematic norms and of the elementwise equivalences, over random
    triples (u, uhat, omega)."""
    if n_samples < 1:
        raise ValueError(f'need at least one sample, got {n_samples}')
    spaces = fespaces.Spaces(mesh, h_mode, with_sigma=False)
    ratios = {key: [] for key in ['te', 'es', 'ts', 'curl', 'kappa', 'curl_kappa', 'strain']}
    for _ in range(n_samples):
        terms = element_terms(
            interp.random_field(spaces, SpaceTag.Vh, rng),
            interp.random_field(spaces, SpaceTag.VhatH, rng),
            interp.random_field(spaces, SpaceTag.Wh, rng),
        )
        triple, eps, stress = terms.triple_norm(), terms.eps_norm(), terms.stress_norm()
        ratios['te'].append(triple / eps)
        ratios['es'].append(eps / stress)
        ratios['ts'].append(triple / stress)
        ratios['curl'].extend(_ratio(terms.curl_volume, terms.curl_normal))
        ratios['kappa'].extend(_ratio(terms.kappa_h1, terms.div_omega))
        ratios['curl_kappa'].extend(_ratio(terms.curl_kappa, terms.div_omega))
        ratios['strain'].extend(
            _ratio(
                terms.eps + terms.curl_volume,
                terms.dev + terms.h2 * terms.div_omega + terms.div_u,
            )
        )
    return NormStats(n_samples, *(bracket(ratios[k]) for k in ratios))


# Interpolation


def interpolation_errors(spaces, data):
    """Square roots of the combined kinematic and stress interpolation error quantities."""
    g = spaces.mesh.geometry
    u = interp.interp_V(spaces, data.u)
    uhat = interp.interp_Vhat(spaces, data.u)
    omega = interp.interp_W(spaces, data.omega)
    sigma = interp.interp_Sigma(spaces, data.sigma)
    jacobian = polycalc.jacobian(data.u)
    degree = config.MAX_QUADRATURE_DEGREE
    tet_rule, facet_rule = quadrature.rule_for(3, degree), quadrature.rule_for(2, degree)
    h_facets = hdg.facet_h_per_element(spaces)
    gradient, eps = u.gradient(), u.sym_grad()
    n = g.outward_normals

    volume = dict.fromkeys(['grad', 'eps', 'sigma', 'eps_nt', 'sigma_nt'], 0.0)
    for elements in _chunks(g.n_elements):
        sub = g.subset(elements)
        points, weights = quadrature.map_tet_rule(sub, tet_rule)
        d = polycalc.evaluate(jacobian, points) - gradient[elements][:, None]
        volume['grad'] += float(np.einsum('mq,mqij,mqij->', weights, d, d))
        d = polycalc.evaluate(data.strain, points) - eps[elements][:, None]
        volume['eps'] += float(np.einsum('mq,mqij,mqij->', weights, d, d))
        d = polycalc.evaluate(data.sigma, points) - sigma.values(points, elements)
        volume['sigma'] += float(np.einsum('mq,mqij,mqij->', weights, d, d))

        points, weights = quadrature.map_facet_rule(sub.facet_vertices, facet_rule)
        m, q = len(elements), len(facet_rule)
        nn = n[elements][:, :, None]
        d = polycalc.evaluate(data.strain, points) - eps[elements][:, None, None]
        nt = _tangential(np.einsum('mfqij,mfqj->mfqi', d, nn.repeat(q, axis=2)), nn)
        volume['eps_nt'] += float(
            np.einsum('mf,mfq,mfqi,mfqi->', h_facets[elements], weights, nt, nt)
        )
        sigma_h = sigma.values(points.reshape(m, 4 * q, 3), elements).reshape(m, 4, q, 3, 3)
        d = polycalc.evaluate(data.sigma, points) - sigma_h
        nt = _tangential(np.einsum('mfqij,mfqj->mfqi', d, nn.repeat(q, axis=2)), nn)
        volume['sigma_nt'] += float(
            np.einsum('mf,mfq,mfqi,mfqi->', h_facets[elements], weights, nt, nt)
        )

    terms = element_terms(u, uhat, omega)
    hybrid, curl_normal = float(terms.hybrid.sum()), float(terms.curl_normal.sum())
    kinematic = volume['eps'] + hybrid + curl_normal + volume['grad'] + hybrid + volume['eps_nt']
    return {
        'interp_u': math.sqrt(kinematic),
        'interp_sigma': math.sqrt(volume['sigma'] + volume['sigma_nt']),
    }


def interpolation_study(levels, *, nu=config.DEFAULT_NU, h_mode=config.DEFAULT_H_MODE):
    data = polycalc.build_manufactured(nu)
    rows = []
    for n in levels:
        spaces = build_spaces(n, h_mode)
        rows.append({'level': n, 'h': spaces.mesh.h_max, **interpolation_errors(spaces, data)})
    frame = pd.DataFrame(rows, columns=['level', 'h', 'interp_u', 'interp_sigma'])
    for name in ['interp_u', 'interp_sigma']:
        frame['eoc_' + name[7:]] = eoc(list(frame[name]), list(frame['h']))
    return frame


# Verification


def commuting_defect(spaces, field):
    """max_T |div(I_V u) - I_Q(div u)| relative to max |I_Q div u|."""
    div_interpolant = interp.interp_V(spaces, field).divergence()
    projected = interp.interp_Q(spaces, polycalc.div(field)).coefficients
    scale = max(float(np.abs(projected).max()), 1.0)
    return float(np.abs(div_interpolant - projected).max()) / scale


def pairing_defect(spaces):
    """Largest entry of the difference of the two pairing forms, relative to their size."""
    standard = mcs.pairing_standard(spaces)
    compact = mcs.pairing_compact(spaces)
    return float(np.abs(standard - compact).max() / np.abs(standard).max())


def condensation_defect(nu=config.DEFAULT_NU):
    """Static condensation on a single element against the dense Schur complement of the
    assembled symmetrized system."""
    mesh = meshlib.Mesh(meshlib.REFERENCE_TET, [[0, 1, 2, 3]], neumann='all')
    spaces = fespaces.Spaces(mesh)
    system = mcs.assemble_mcs(spaces, mcs.McsParams(nu=nu))
    reduced, _ = mcs.condense_stress(system)
    full = system.matrix().toarray()
    ns, nk = system.n_sigma, reduced.n_kinematic
    stress, coupling = full[:ns, :ns], full[:ns, ns : ns + nk]
    schur = full[ns : ns + nk, ns : ns + nk] - coupling.T @ np.linalg.solve(stress, coupling)
    oracle = -schur
    return float(np.abs(reduced.A.toarray() - oracle).max() / np.abs(oracle).max())


class Verifier:
    """Runs named checks and reports them through one progress bar."""

    def __init__(self, names):
        self.bar = util.ProgressBar('verify', items=names)
        self.failed = []

    def check(self, name, passed, message):
        localbar = self.bar.start(name)
        if passed:
            localbar.log(message)
        else:
            self.failed.append(name)
            localbar.error(message)

    def finalize(self):
        self.bar.finalize(print_done=False)
        return not self.failed


VERIFY_CHECKS = [
    'commuting diagram',
    'pairing forms',
    'static condensation',
    'viscosity scaling',
    'korn',
    'norm equivalence',
    'interpolation',
    'divergence free',
    'weak symmetry',
    'boundary mean',
    'pressure robustness',
    'consistency',
    'coercivity',
    'mcs definite',
    'condition ordering',
]

METHODS = ['hdg', 'mcs']


def _decreased(values):
    first, second = values
    return second < first or max(first, second) <= config.IDENTITY_TOLERANCE


def verify_suite(
    seed=config.DEFAULT_SEED,
    n_samples=config.DEFAULT_SAMPLES,
    *,
    nu=config.DEFAULT_NU,
    alpha=config.DEFAULT_ALPHA,
    h_mode=config.DEFAULT_H_MODE,
):
    """Check the structural properties of both discretizations; returns True when all pass."""
    rng = np.random.default_rng(seed)
    coarse, fine = config.DEFAULT_COND_LEVELS
    tol = config.IDENTITY_TOLERANCE
    verifier = Verifier(VERIFY_CHECKS)
    levels = {coarse: build_spaces(coarse, h_mode), fine: build_spaces(fine, h_mode)}
    spaces = levels[coarse]

    defect = max(commuting_defect(spaces, random_polynomial_field(rng)) for _ in range(3))
    verifier.check('commuting diagram', defect <= tol, f'div I_V u - I_Q div u: {defect:.2e}')

    defect = pairing_defect(build_spaces(1, h_mode))
    verifier.check('pairing forms', defect <= 1e-11, f'compact vs standard pairing: {defect:.2e}')

    defect = condensation_defect(nu)
    verifier.check('static condensation', defect <= tol, f'condensed vs dense Schur: {defect:.2e}')

    defect = viscosity_scaling_defect(build_spaces(1, h_mode), alpha=alpha)
    verifier.check('viscosity scaling', defect <= tol, f'A(10 nu) - 10 A(nu): {defect:.2e}')

    korn = [
        korn_suite(meshlib.build_structured_cube(n), n_samples, rng, h_mode=h_mode)
        for n in (coarse, fine)
    ]
    change = max(
        bracket_change(korn[0].korn[1:], korn[1].korn[1:]),
        bracket_change(korn[0].equivalence, korn[1].equivalence),
        bracket_change(korn[0].hdg_korn[1:], korn[1].hdg_korn[1:]),
    )
    identities = max(max(k.identity_projection, k.identity_rigid) for k in korn)
    violations = sum(k.chain_violations for k in korn)
    verifier.check(
        'korn',
        change < config.BRACKET_STABILITY and identities <= tol and violations == 0,
        f'bracket change {change:.2f}, identities {identities:.2e}, projection order violations '
        f'{violations}, equivalence {korn[1].equivalence[0]:.3f}..{korn[1].equivalence[1]:.3f}',
    )

    norms = [
        norm_equivalence_suite(meshlib.build_structured_cube(n), n_samples, rng, h_mode=h_mode)
        for n in (coarse, fine)
    ]
    # The lower ends are extremes over all elements and samples; the upper ends are the bounds.
    changes = {
        key: bracket_change(norms[0].brackets()[key][1:], norms[1].brackets()[key][1:])
        for key in norms[0].brackets()
    }
    worst = max(changes, key=changes.get)
    verifier.check(
        'norm equivalence',
        changes[worst] < config.BRACKET_STABILITY,
        f'largest change of an upper bound {changes[worst]:.2f} ({worst})',
    )

    frame = interpolation_study(config.DEFAULT_LEVELS, nu=nu, h_mode=h_mode)
    rates = [frame[c].iloc[-1] for c in ['eoc_u', 'eoc_sigma']]
    verifier.check(
        'interpolation',
        min(rates) >= config.EOC_ENERGY_RANGE[0],
        f'interpolation eoc {rates[0]:.3f} (velocity), {rates[1]:.3f} (stress)',
    )

    data = polycalc.build_manufactured(nu)
    solutions = {
        (method, n): solve_method(method, s, data, alpha=alpha)
        for n, s in levels.items()
        for method in METHODS
    }
    defects = dict.fromkeys(METHODS, 0.0)
    for (method, _), solution in solutions.items():
        value, scale = hdg.divergence_defect(solution.u)
        defects[method] = max(defects[method], value / max(scale, _tiny()))
    verifier.check(
        'divergence free',
        max(defects.values()) <= config.DIV_FREE_TOLERANCE,
        ', '.join(f'{m} {d:.2e}' for m, d in defects.items()),
    )

    stress = solutions['mcs', coarse]
    params = mcs.McsParams(nu=nu, h_mode=h_mode)
    skew, scale = mcs.weak_symmetry_defect(stress.sigma, stress.omega, params)
    skew /= max(scale, _tiny())
    jump = mcs.nt_jump(stress.sigma) / max(stress.sigma.max_abs(), _tiny())
    verifier.check(
        'weak symmetry',
        max(skew, jump) <= config.WEAK_SYMMETRY_TOLERANCE,
        f'(sigma, kappa(eta)) - c(omega, eta): {skew:.2e}, nt jump {jump:.2e}',
    )

    means = {
        method: [hdg.boundary_tangential_mean(solutions[method, n].u) for n in levels]
        for method in METHODS
    }
    verifier.check(
        'boundary mean',
        all(_decreased(m) for m in means.values()),
        ', '.join(f'{m} {a:.2e} -> {b:.2e}' for m, (a, b) in means.items()),
    )

    reports = [
        pressure_robustness_experiment(method, spaces, nu=nu, alpha=alpha) for method in METHODS
    ]
    verifier.check(
        'pressure robustness',
        all(r.passed for r in reports),
        ', '.join(
            f'{r.method} change {r.kinematic_change:.2e} pressure {r.pressure_error:.2e}'
            for r in reports
        ),
    )

    residuals = consistency_defects(list(levels.values()), data, alpha=alpha)
    verifier.check(
        'consistency',
        all(_decreased(r) for r in residuals.values()),
        ', '.join(f'{m} {r0:.2e} -> {r1:.2e}' for m, (r0, r1) in residuals.items()),
    )

    smallest = hdg.coercivity_sweep(spaces, [alpha], nu)[0][1]
    verifier.check(
        'coercivity', smallest > 0, f'smallest HDG eigenvalue at alpha {alpha:g}: {smallest:.3e}'
    )

    reduced, _ = reduced_system('mcs', spaces, nu=nu, add_divdiv=True)
    smallest = sparsela.smallest_eigenvalue(reduced.A)
    verifier.check('mcs definite', smallest > 0, f'smallest MCS eigenvalue {smallest:.3e}')

    ordering = []
    for n, s in levels.items():
        hdg_estimates, mcs_estimate = condition_estimates(s, config.DEFAULT_ALPHAS, nu)
        ordering.append((n, mcs_estimate.cond, best_definite_cond(hdg_estimates)))
    verifier.check(
        'condition ordering',
        all(m <= h for _, m, h in ordering),
        ', '.join(f'n={n}: MCS {m:.3e} HDG {h:.3e}' for n, m, h in ordering),
    )
    return verifier.finalize()


def viscosity_scaling_defect(spaces, *, alpha=config.DEFAULT_ALPHA, factor=10.0):
    """Largest entry of A(factor nu) - factor A(nu) relative to A(factor nu), over the reduced
    A blocks of both methods."""
    worst = 0.0
    for method in METHODS:
        low, _ = reduced_system(method, spaces, alpha=alpha, nu=1.0, add_divdiv=True)
        high, _ = reduced_system(method, spaces, alpha=alpha, nu=factor, add_divdiv=True)
        worst = max(worst, abs(high.A - factor * low.A).max() / abs(high.A).max())
    return float(worst)


def consistency_defects(levels, data, *, alpha=config.DEFAULT_ALPHA):
    """hdg.consistency_defect of the interpolated exact solution on each of the given spaces.
    MCS uses the condensed system with the div-div term, which leaves the divergence free
    interpolant alone and makes its A block definite."""
    out = {method: [] for method in METHODS}
    for spaces in levels:
        exact = hdg.interpolate_exact(spaces, data)
        for method in METHODS:
            system, _ = reduced_system(method, spaces, data, alpha=alpha, add_divdiv=True)
            out[method].append(hdg.consistency_defect(system, exact))
    return out
