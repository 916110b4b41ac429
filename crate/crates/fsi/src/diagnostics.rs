//! Initial-data compatibility checks, energy-ledger post-processing,
//! interface residuals and fixed-point-set membership.
//!
//! The nine compatibility conditions are evaluated as residual norms on
//! their stated domains (the interface or the fluid volume). Derivatives
//! are taken in the broken sense, cell by cell: first derivatives from the
//! shape gradients, second derivatives from the shape Hessians, and
//! divergences of composite tensor expressions by central differences of
//! the exact in-cell polynomial evaluators.

use crate::assembly::{interface_set, Discretization, InterfaceSet};
use crate::error::Result;
use crate::fields::RegionField;
use crate::kinematics::cofactor;
use crate::mesh::Region;
use crate::solver::{LedgerSample, TrajectoryState};
use nalgebra::{Matrix3, Vector3};

/// Severity of a compatibility condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Enforced,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct ConditionResult {
    /// 1-based index of the condition.
    pub index: usize,
    pub domain: &'static str,
    pub residual: f64,
    /// Magnitude of the individual terms; the tolerance is relative to it.
    pub scale: f64,
    pub tolerance: f64,
    pub severity: Severity,
    pub status: ConditionStatus,
}

#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub conditions: Vec<ConditionResult>,
}

impl CompatibilityReport {
    /// True when every enforced condition passes (warn-level and skipped
    /// conditions never block).
    pub fn passed(&self) -> bool {
        self.conditions
            .iter()
            .all(|c| c.severity == Severity::Warn || c.status != ConditionStatus::Fail)
    }

    pub fn failures(&self) -> Vec<usize> {
        self.conditions
            .iter()
            .filter(|c| c.status == ConditionStatus::Fail)
            .map(|c| c.index)
            .collect()
    }
}

/// Relative tolerance of each condition against its data scale.
pub const COMPAT_REL_TOL: f64 = 1e-8;

/// Optional pressure time-derivative data for the higher-order conditions.
#[derive(Debug, Clone, Default)]
pub struct PressureRates {
    /// Nodal values of d(p)/dt at t = 0 on the pressure space.
    pub first: Option<Vec<f64>>,
    /// Nodal values of d2(p)/dt2 at t = 0.
    pub second: Option<Vec<f64>>,
}

struct CellEval<'a> {
    disc: &'a Discretization,
    cell: usize,
    values: &'a [f64],
}

impl<'a> CellEval<'a> {
    fn bary(&self, x: &Vector3<f64>) -> [f64; 4] {
        let v = self.disc.mesh.cell_vertices(self.cell);
        let m = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        let rhs = x - v[0];
        let sol = m.try_inverse().expect("positive cell") * rhs;
        [1.0 - sol.x - sol.y - sol.z, sol.x, sol.y, sol.z]
    }

    fn vector(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.disc.value_at(self.cell, &self.bary(x), self.values)
    }

    fn grad(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.disc.gradient_at(self.cell, &self.bary(x), self.values)
    }

    /// Component Hessians (constant per cell).
    fn hessians(&self) -> [Matrix3<f64>; 3] {
        let scalar = &self.disc.space.scalar;
        let hs = scalar.shape_hessians(&self.disc.mesh, self.cell);
        let mut out = [Matrix3::zeros(); 3];
        for (a, &n) in scalar.cell_nodes[self.cell].iter().enumerate() {
            for c in 0..3 {
                out[c] += self.values[3 * n + c] * hs[a];
            }
        }
        out
    }
}

struct ScalarEval<'a> {
    disc: &'a Discretization,
    cell: usize,
    values: &'a [f64],
}

impl<'a> ScalarEval<'a> {
    fn bary(&self, x: &Vector3<f64>) -> [f64; 4] {
        CellEval {
            disc: self.disc,
            cell: self.cell,
            values: &[],
        }
        .bary(x)
    }

    fn value(&self, x: &Vector3<f64>) -> f64 {
        let vals = self.disc.pressure_space.shape_values(&self.bary(x));
        self.disc.pressure_space.cell_nodes[self.cell]
            .iter()
            .zip(vals)
            .map(|(&n, v)| self.values[n] * v)
            .sum()
    }

    fn grad(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let grads = self
            .disc
            .pressure_space
            .shape_gradients(&self.disc.mesh, self.cell, &self.bary(x));
        let mut g = Vector3::zeros();
        for (a, &n) in self.disc.pressure_space.cell_nodes[self.cell].iter().enumerate() {
            g += self.values[n] * grads[a];
        }
        g
    }
}

const FD_STEP: f64 = 1e-5;

/// Row-wise divergence of a matrix-valued map by central differences of
/// the in-cell polynomial evaluation.
fn fd_divergence(f: impl Fn(&Vector3<f64>) -> Matrix3<f64>, x: &Vector3<f64>) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for al in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[al] += FD_STEP;
        xm[al] -= FD_STEP;
        let diff = (f(&xp) - f(&xm)) / (2.0 * FD_STEP);
        for i in 0..3 {
            out[i] += diff[(i, al)];
        }
    }
    out
}

/// Symmetric gradient of a vector-valued map by central differences.
fn fd_sym_gradient(f: impl Fn(&Vector3<f64>) -> Vector3<f64>, x: &Vector3<f64>) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    for al in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[al] += FD_STEP;
        xm[al] -= FD_STEP;
        let d = (f(&xp) - f(&xm)) / (2.0 * FD_STEP);
        for i in 0..3 {
            g[(i, al)] = d[i];
        }
    }
    0.5 * (g + g.transpose())
}

fn sym(m: &Matrix3<f64>) -> Matrix3<f64> {
    0.5 * (m + m.transpose())
}

/// Evaluate the nine compatibility conditions on the initial data. The
/// two pressure time derivatives are optional; conditions that need an
/// absent one are reported as skipped, never failed.
pub fn check_compatibility(
    disc: &Discretization,
    v0: &RegionField,
    xi1: &RegionField,
    p0: &[f64],
    rates: &PressureRates,
) -> Result<CompatibilityReport> {
    v0.expect_region(Region::Fluid)?;
    xi1.expect_region(Region::Solid)?;
    let mu = disc.params.mu;
    let mu_s = disc.params.mu_s;
    let lambda_s = disc.params.lambda_s;
    let rho_f = disc.params.rho_f;
    let rho_s = disc.params.rho_s;

    let ifc = interface_set(disc);
    // accumulators: (residual^2, scale^2) per condition
    let mut res = [0.0f64; 9];
    let mut scale = [0.0f64; 9];

    // volume conditions 3 and 4 over the fluid region
    for cell in disc.mesh.region_cells(Region::Fluid) {
        let detj = 6.0 * disc.mesh.cell_volume(cell);
        let vf = CellEval {
            disc,
            cell,
            values: &v0.values,
        };
        let pf = ScalarEval {
            disc,
            cell,
            values: p0,
        };
        let hess = vf.hessians();
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let cv = disc.mesh.cell_vertices(cell);
            let mut x = Vector3::zeros();
            for k in 0..4 {
                x += bary[k] * cv[k];
            }
            let grad_v = vf.grad(&x);
            let d = sym(&grad_v);
            let p = pf.value(&x);
            // condition 3: p Id = 2 mu D(v)
            let defect3 = p * Matrix3::identity() - 2.0 * mu * d;
            res[2] += w * defect3.norm_squared();
            scale[2] += w * (p * p * 3.0 + (2.0 * mu * d.norm()).powi(2));
            // condition 4: grad p = mu (laplace v)
            let lap = Vector3::new(hess[0].trace(), hess[1].trace(), hess[2].trace());
            let gp = pf.grad(&x);
            let defect4 = gp - mu * lap;
            res[3] += w * defect4.norm_squared();
            scale[3] += w * (gp.norm_squared() + (mu * lap.norm()).powi(2));
        }
    }

    // interface conditions
    for pt in &ifc.points {
        let w = pt.weight;
        let n = pt.normal;
        let x = pt.position;
        let vf = CellEval {
            disc,
            cell: pt.fluid_cell,
            values: &v0.values,
        };
        let xs = CellEval {
            disc,
            cell: pt.solid_cell,
            values: &xi1.values,
        };
        let pf = ScalarEval {
            disc,
            cell: pt.fluid_cell,
            values: p0,
        };

        let v_f = vf.vector(&x);
        let xi_s = xs.vector(&x);
        // condition 1: v0 = xi1
        res[0] += w * (v_f - xi_s).norm_squared();
        scale[0] += w * (v_f.norm_squared() + xi_s.norm_squared());

        let sigma_at = |y: &Vector3<f64>| {
            2.0 * mu * sym(&vf.grad(y)) - pf.value(y) * Matrix3::identity()
        };
        let sigma = sigma_at(&x);
        // condition 2: sigma_f n = 0
        res[1] += w * (sigma * n).norm_squared();
        scale[1] += w * sigma.norm_squared();

        // condition 5: div sigma_f = 0
        let div_sigma_at = |y: &Vector3<f64>| fd_divergence(sigma_at, y);
        let div_sigma = div_sigma_at(&x);
        res[4] += w * div_sigma.norm_squared();
        scale[4] += w * (sigma.norm_squared() + div_sigma.norm_squared());

        // building blocks of the higher-order conditions
        let grad_v = vf.grad(&x);
        let _dv = sym(&grad_v);
        let div_v_at = |y: &Vector3<f64>| vf.grad(y).trace();
        let div_v = grad_v.trace();
        let s3_at = |y: &Vector3<f64>| {
            let g = vf.grad(y);
            g.trace() * Matrix3::identity() - g.transpose()
        };
        let s3 = s3_at(&x);
        let s4_at = |y: &Vector3<f64>| {
            // grad(div sigma) by differences of the in-cell evaluator;
            // its trace is div(div sigma)
            let mut grad_divsigma = Matrix3::zeros();
            for al in 0..3 {
                let mut yp = *y;
                let mut ym = *y;
                yp[al] += FD_STEP;
                ym[al] -= FD_STEP;
                let d = (div_sigma_at(&yp) - div_sigma_at(&ym)) / (2.0 * FD_STEP);
                for i in 0..3 {
                    grad_divsigma[(i, al)] = d[i];
                }
            }
            let div_divsigma = grad_divsigma.trace();
            (div_divsigma / rho_f) * Matrix3::identity() - grad_divsigma / rho_f
                + 2.0 * cofactor(&vf.grad(y))
        };
        let s4 = s4_at(&x);
        let visc_quad_at = |y: &Vector3<f64>| {
            let g = vf.grad(y);
            let d = sym(&g);
            d * d - 2.0 * g.transpose() * g
        };
        let s1_at = |y: &Vector3<f64>| -mu * visc_quad_at(y) + sigma_at(y) * s3_at(y);
        let s1 = s1_at(&x);
        let e1_at = |y: &Vector3<f64>| {
            2.0 * mu_s * sym(&xs.grad(y))
                + lambda_s * xs.grad(y).trace() * Matrix3::identity()
                + div_v_at(y) * Matrix3::identity()
        };
        let e1 = e1_at(&x);
        let div_e1_at = |y: &Vector3<f64>| fd_divergence(&e1_at, y);
        let div_e1 = div_e1_at(&x);

        // condition 6: dp/dt n = S1 n + E1 n
        if let Some(dpt) = &rates.first {
            let pe = ScalarEval {
                disc,
                cell: pt.fluid_cell,
                values: dpt,
            };
            let dpt_v = pe.value(&x);
            let defect = dpt_v * n - s1 * n - e1 * n;
            res[5] += w * defect.norm_squared();
            scale[5] += w * (dpt_v * dpt_v + (s1 * n).norm_squared() + (e1 * n).norm_squared());

            // condition 7: div(rho_s [S1 + dp/dt Id]) = rho_f div E1
            let lhs_at = |y: &Vector3<f64>| {
                rho_s * (s1_at(y) + pe.value(y) * Matrix3::identity())
            };
            let lhs = fd_divergence(lhs_at, &x);
            let rhs = rho_f * div_e1;
            res[6] += w * (lhs - rhs).norm_squared();
            scale[6] += w * (lhs.norm_squared() + rhs.norm_squared());
        }

        if let (Some(dpt), Some(d2pt)) = (&rates.first, &rates.second) {
            let pe1 = ScalarEval {
                disc,
                cell: pt.fluid_cell,
                values: dpt,
            };
            let pe2 = ScalarEval {
                disc,
                cell: pt.fluid_cell,
                values: d2pt,
            };
            let s2_at = |y: &Vector3<f64>| {
                pe2.value(y) * Matrix3::identity()
                    + 2.0 * pe1.value(y) * s3_at(y)
                    + pf.value(y) * s4_at(y)
                    + 2.0 * mu * fd_sym_gradient(&div_e1_at, y)
                    - 2.0 * visc_quad_at(y) * s3_at(y)
                    + 2.0 * sym(&vf.grad(y)) * s4_at(y)
            };
            let s2 = s2_at(&x);
            let e2_at = |y: &Vector3<f64>| {
                let gxi = xs.grad(y);
                2.0 * gxi * e1_at(y)
                    + 2.0 * mu_s * gxi.transpose() * gxi
                    + lambda_s * gxi
                    + 2.0 * (div_v_at(y) * s3_at(y) + s4_at(y))
            };
            let e2 = e2_at(&x);

            // condition 8: rho_f (2 div(v) div E1 + div E2) = div S2
            let div_e2 = fd_divergence(&e2_at, &x);
            let div_s2 = fd_divergence(&s2_at, &x);
            let lhs = rho_f * (2.0 * div_v * div_e1 + div_e2);
            res[7] += w * (lhs - div_s2).norm_squared();
            scale[7] += w * (lhs.norm_squared() + div_s2.norm_squared());

            // condition 9: (E2 - 2(div(v) S3 + S4)) n = rho_s S2 n
            let lhs9 = (e2 - 2.0 * (div_v * s3 + s4)) * n;
            let rhs9 = rho_s * (s2 * n);
            res[8] += w * (lhs9 - rhs9).norm_squared();
            scale[8] += w * (lhs9.norm_squared() + rhs9.norm_squared());
        }
    }

    let domains = [
        "interface",
        "interface",
        "fluid volume",
        "fluid volume",
        "interface",
        "interface",
        "interface",
        "interface",
        "interface",
    ];
    let mut conditions = Vec::with_capacity(9);
    for k in 0..9 {
        let needs_first = k == 5 || k == 6;
        let needs_second = k == 7 || k == 8;
        let skipped = (needs_first && rates.first.is_none())
            || (needs_second && (rates.first.is_none() || rates.second.is_none()));
        let severity = if k < 5 {
            Severity::Enforced
        } else {
            Severity::Warn
        };
        let residual = res[k].max(0.0).sqrt();
        let s = scale[k].max(0.0).sqrt();
        let tolerance = COMPAT_REL_TOL * s;
        let status = if skipped {
            ConditionStatus::Skipped
        } else if residual <= tolerance {
            ConditionStatus::Pass
        } else {
            ConditionStatus::Fail
        };
        conditions.push(ConditionResult {
            index: k + 1,
            domain: domains[k],
            residual,
            scale: s,
            tolerance,
            severity,
            status,
        });
    }
    Ok(CompatibilityReport { conditions })
}

/// Energy-identity report assembled from the per-step ledger the solver
/// records.
#[derive(Debug, Clone)]
pub struct EnergyLedger {
    pub samples: Vec<LedgerSample>,
    pub ledger_tol: f64,
    pub max_relative_imbalance: f64,
    pub within_tolerance: bool,
}

pub fn energy_ledger(trajectory: &TrajectoryState, ledger_tol: f64) -> EnergyLedger {
    let mut max_rel = 0.0f64;
    for s in &trajectory.ledger {
        let m = s.magnitude();
        if m > 0.0 {
            max_rel = max_rel.max(s.imbalance() / m);
        }
    }
    EnergyLedger {
        samples: trajectory.ledger.clone(),
        ledger_tol,
        max_relative_imbalance: max_rel,
        within_tolerance: max_rel <= ledger_tol,
    }
}

/// Independent recomputation of the accumulated boundary work from the
/// datum samples and the trajectory fields, bypassing the assembled load
/// vectors entirely.
pub fn boundary_work_oracle(
    disc: &Discretization,
    ifc: &InterfaceSet,
    datum: &[Vec<Vector3<f64>>],
    trajectory: &TrajectoryState,
) -> f64 {
    let mut acc = 0.0;
    for k in 0..trajectory.n_steps() {
        let dt = trajectory.times[k + 1] - trajectory.times[k];
        let gam_mid: Vec<f64> = trajectory.gamma[k]
            .iter()
            .zip(&trajectory.gamma[k + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let mut power = 0.0;
        for (p, pt) in ifc.points.iter().enumerate() {
            let g_mid = 0.5 * (datum[k][p] + datum[k + 1][p]);
            let v = disc.value_at(pt.fluid_cell, &pt.bary_fluid, &gam_mid);
            power += pt.weight * g_mid.dot(&v);
        }
        acc += dt * power;
    }
    acc
}

/// Per-step interface residuals: the velocity-continuity defect (zero by
/// construction with shared dofs) and the weak traction-balance defect.
#[derive(Debug, Clone)]
pub struct InterfaceResiduals {
    pub velocity: Vec<f64>,
    pub traction: Vec<f64>,
}

/// Traction balance along the trajectory:
/// `sigma0(v) n - sum(b grad xi) n - g` in L2 of the interface per step.
pub fn interface_residuals(
    ctx: &crate::solver::SolveContext,
    trajectory: &TrajectoryState,
    given: &crate::solver::GivenData,
    datum: &[Vec<Vector3<f64>>],
    det_floor: f64,
) -> Result<InterfaceResiduals> {
    let disc = &ctx.disc;
    let mut velocity = Vec::with_capacity(trajectory.times.len());
    let mut traction = Vec::with_capacity(trajectory.times.len());
    for (k, &t) in trajectory.times.iter().enumerate() {
        // shared dofs: the fluid-side and solid-side values are the same
        // array entries, so the continuity defect is identically zero
        velocity.push(0.0);

        let flow = crate::kinematics::build_flow_map(
            &disc.mesh,
            &disc.space.scalar,
            &given.v,
            t,
            &disc.rule,
        )?;
        let xi_given = given.xi.value_at(t)?;
        let mut acc = 0.0;
        for (p, pt) in ctx.ifc.points.iter().enumerate() {
            // fluid stress trace from the fluid side
            let grad_v = disc.gradient_at(pt.fluid_cell, &pt.bary_fluid, &trajectory.gamma[k]);
            // map gradients at the facet point from the fluid cell trace
            let xq = {
                // evaluate flow gradient at the facet quadrature point via
                // the volume field of the owning cell: use the closest
                // volume quadrature point as the representative value
                let mut best = 0;
                let mut dist = f64::INFINITY;
                for (q, bq) in disc.rule.points.iter().enumerate() {
                    let d: f64 = (0..4)
                        .map(|i| (bq[i] - pt.bary_fluid[i]).powi(2))
                        .sum();
                    if d < dist {
                        dist = d;
                        best = q;
                    }
                }
                best
            };
            let a = flow.at(pt.fluid_cell, xq);
            let det = crate::kinematics::det_levi_civita(a);
            if det <= det_floor {
                return Err(crate::error::Error::DetFloor {
                    det,
                    floor: det_floor,
                    cell: pt.fluid_cell,
                    point: xq,
                });
            }
            let inv = a.try_inverse().expect("bounded determinant");
            let cof = cofactor(a);
            let sigma =
                crate::constitutive::fluid_stress_point(&grad_v, 0.0, &inv, &cof, disc.params.mu);

            // structure side: b(grad xi_given) applied to grad xi
            let h = disc.gradient_at(pt.solid_cell, &pt.bary_solid, &xi_given);
            let b = crate::constitutive::combined_coefficients(&h, &disc.params);
            let grad_xi = disc.gradient_at(pt.solid_cell, &pt.bary_solid, &trajectory.xi[k]);
            let solid_traction = b.apply(&grad_xi) * pt.normal;

            let defect = sigma * pt.normal - solid_traction - datum[k][p];
            acc += pt.weight * defect.norm_squared();
        }
        traction.push(acc.sqrt());
    }
    Ok(InterfaceResiduals { velocity, traction })
}

pub use crate::solver::{membership, MembershipReport};


#[cfg(test)]
mod ledger_tests {
    use super::*;
    use crate::assembly::{interface_set, project_initial, Discretization};
    use crate::constitutive::MaterialParams;
    use crate::mesh::{two_cube_mesh, FacetLabel, ReferenceMesh};
    use crate::solver::{auxiliary_solve, GivenData, InterfaceDatum, SolveContext, SolverConfig};
    use nalgebra::Vector3 as V3;

    fn params() -> MaterialParams {
        MaterialParams {
            rho_f: 1.0,
            rho_s: 1.1,
            mu: 0.05,
            mu_s: 0.5,
            lambda_s: 0.5,
            c_penalty: 10.0,
        }
    }

    fn solve_with_datum(
        ctx: &SolveContext,
        cfg: &SolverConfig,
        datum: &InterfaceDatum,
    ) -> crate::solver::TrajectoryState {
        let zeros = vec![0.0; ctx.disc.n_dofs()];
        let given = GivenData::initial_guess(&zeros, &zeros, cfg).unwrap();
        let mut raw = vec![0.0; ctx.disc.n_dofs()];
        for (n, p) in ctx.disc.space.scalar.node_coords.iter().enumerate() {
            raw[3 * n] = 0.3 * p.y;
            raw[3 * n + 1] = -0.1 * p.z;
        }
        let f0 = project_initial(&ctx.basis, &ctx.mass_rho, &raw).unwrap();
        auxiliary_solve(ctx, &given, datum, &f0, cfg).unwrap()
    }

    #[test]
    fn boundary_work_matches_independent_recomputation() {
        let disc = Discretization::new(two_cube_mesh(1).unwrap(), 2, params()).unwrap();
        let ctx = SolveContext::new(disc).unwrap();
        let cfg = SolverConfig {
            t_end: 0.05,
            dt: 0.005,
            ..Default::default()
        };
        // datum growing linearly from zero, varying over the interface
        let n = cfg.n_steps();
        let samples: Vec<Vec<V3<f64>>> = (0..=n)
            .map(|k| {
                let t = k as f64 * cfg.dt;
                ctx.ifc
                    .points
                    .iter()
                    .map(|p| t * V3::new(0.2 * p.position.x, -0.1, 0.3 * p.position.y))
                    .collect()
            })
            .collect();
        let datum = InterfaceDatum { samples };
        let traj = solve_with_datum(&ctx, &cfg, &datum);
        let ledger_work = traj.ledger.last().unwrap().boundary_work_acc;
        assert!(ledger_work != 0.0);

        let ifc = interface_set(&ctx.disc);
        let oracle = boundary_work_oracle(&ctx.disc, &ifc, &datum.samples, &traj);
        let rel = (ledger_work - oracle).abs() / ledger_work.abs();
        assert!(rel <= 1e-12, "ledger {ledger_work} vs oracle {oracle} (rel {rel})");
    }

    #[test]
    fn ledger_terms_invariant_under_cell_permutation() {
        let base = two_cube_mesh(1).unwrap();
        // reversed-cell copy of the same geometry
        let mut order: Vec<usize> = (0..base.n_cells()).collect();
        order.reverse();
        let cells: Vec<[usize; 4]> = order.iter().map(|&c| base.cells[c]).collect();
        let regions = order.iter().map(|&c| base.cell_region[c]).collect();
        let facets: Vec<([usize; 3], FacetLabel)> = base
            .boundary_facets
            .iter()
            .map(|f| (f.vertices, f.label))
            .collect();
        let permuted =
            ReferenceMesh::from_raw(base.vertices.clone(), cells, regions, facets).unwrap();

        let cfg = SolverConfig {
            t_end: 0.03,
            dt: 0.005,
            ..Default::default()
        };
        let mk = |mesh: ReferenceMesh| {
            let disc = Discretization::new(mesh, 2, params()).unwrap();
            let ctx = SolveContext::new(disc).unwrap();
            let datum = InterfaceDatum::zero(cfg.n_steps(), ctx.ifc.points.len());
            solve_with_datum(&ctx, &cfg, &datum)
        };
        let a = mk(base);
        let b = mk(permuted);
        for (sa, sb) in a.ledger.iter().zip(&b.ledger) {
            let scale = sa.magnitude().max(1e-300);
            for (x, y) in [
                (sa.kinetic_fluid, sb.kinetic_fluid),
                (sa.kinetic_solid, sb.kinetic_solid),
                (sa.elastic, sb.elastic),
                (sa.viscous_acc, sb.viscous_acc),
                (sa.boundary_work_acc, sb.boundary_work_acc),
            ] {
                assert!(
                    (x - y).abs() <= 1e-13 * scale,
                    "t = {}: {x} vs {y} (scale {scale})",
                    sa.time
                );
            }
        }
    }
}
