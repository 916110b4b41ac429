//! Time integration and the two nested fixed-point iterations.
//!
//! One auxiliary solve integrates the coefficient ODE system with the
//! implicit midpoint rule for a frozen pair of given fields and a given
//! interface datum. The inner iteration updates the datum from the
//! previous displacement iterate; the outer iteration refreshes the frozen
//! transport coefficients. Both are plain Picard sweeps with an optional
//! under-relaxation factor.

use crate::assembly::{
    assemble_boundary_load, assemble_rho_mass, build_constraint, build_divfree_basis, expand,
    interface_set, merge_initial_data, project_initial, ConstraintMatrix, Discretization,
    DivFreeBasis, GalerkinOperators, GradCoeffField, InterfaceSet,
};
use crate::constitutive::{
    combined_coefficient_field, combined_coefficients, combined_directional, CoeffField, Coeffs81,
};
use crate::error::{Error, Result};
use crate::fields::{FieldHistory, RegionField, TensorField};
use crate::kinematics::{build_deformation, build_flow_map, MapState};
use crate::mesh::Region;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

/// Run parameters of the nested solves.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Time horizon.
    pub t_end: f64,
    /// Step size.
    pub dt: f64,
    /// Relative update tolerance of the inner (datum) iteration.
    pub fp_inner_tol: f64,
    /// Relative update tolerance of the outer (coefficient) iteration.
    pub fp_outer_tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
    /// A priori norm bound defining the fixed-point set membership.
    pub m_bound: f64,
    /// Maximum halvings of the time window.
    pub t_bisect_max: usize,
    /// Under-relaxation factor in (0, 1]; 1 is the plain Picard sweep.
    pub relaxation: f64,
    /// Bijectivity floor for both map determinants.
    pub det_floor: f64,
    /// Hard-fail when the initial data violates the enforced
    /// compatibility conditions.
    pub enforce_compat: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            t_end: 0.05,
            dt: 0.005,
            fp_inner_tol: 1e-8,
            fp_outer_tol: 1e-8,
            max_inner_iters: 20,
            max_outer_iters: 20,
            m_bound: 10.0,
            t_bisect_max: 3,
            relaxation: 1.0,
            det_floor: 0.1,
            enforce_compat: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(Error::config("dt", "need 0 < dt <= T"));
        }
        if !(self.fp_inner_tol > 0.0 && self.fp_outer_tol > 0.0) {
            return Err(Error::config("fp tolerances", "must be positive"));
        }
        if !(self.m_bound > 1.0) {
            return Err(Error::config("m_bound", "must exceed 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::config("relaxation", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt).round() as usize).max(1)
    }

    /// Config with the time window halved (step halved along with it).
    pub fn halved(&self) -> SolverConfig {
        let mut out = self.clone();
        out.t_end *= 0.5;
        out.dt *= 0.5;
        out
    }
}

/// Everything that depends only on the mesh and spaces: the frozen
/// constraint (the maps are the identity at the freeze time t = 0), its
/// nullspace basis, the weighted mass, interface quadrature and the plain
/// region Gram matrices used by the discrete norms.
pub struct SolveContext {
    pub disc: Discretization,
    pub constraint: ConstraintMatrix,
    pub basis: DivFreeBasis,
    pub mass_rho: DMatrix<f64>,
    pub ifc: InterfaceSet,
    gram_l2_fluid: DMatrix<f64>,
    gram_l2_solid: DMatrix<f64>,
    gram_h1_fluid: DMatrix<f64>,
    gram_h1_solid: DMatrix<f64>,
    hessian_projector: GradientProjector,
}

impl SolveContext {
    pub fn new(disc: Discretization) -> Result<Self> {
        let id = MapState::identity(&disc.mesh, disc.n_qp(), 0.0);
        let constraint = build_constraint(&disc, &id)?;
        let mass_rho = assemble_rho_mass(&disc);
        let basis = build_divfree_basis(&constraint, &mass_rho)?;
        let ifc = interface_set(&disc);
        let gram_l2_fluid = assemble_region_gram(&disc, Region::Fluid, false);
        let gram_l2_solid = assemble_region_gram(&disc, Region::Solid, false);
        let gram_h1_fluid = assemble_region_gram(&disc, Region::Fluid, true);
        let gram_h1_solid = assemble_region_gram(&disc, Region::Solid, true);
        let hessian_projector = GradientProjector::new(&disc)?;
        Ok(SolveContext {
            disc,
            constraint,
            basis,
            mass_rho,
            ifc,
            gram_l2_fluid,
            gram_l2_solid,
            gram_h1_fluid,
            gram_h1_solid,
            hessian_projector,
        })
    }

    pub fn n_basis(&self) -> usize {
        self.basis.dim
    }

    fn quad_norm(&self, gram: &DMatrix<f64>, v: &[f64]) -> f64 {
        let x = DVector::from_column_slice(v);
        (x.transpose() * gram * x)[(0, 0)].max(0.0).sqrt()
    }

    pub fn l2_fluid(&self, v: &[f64]) -> f64 {
        self.quad_norm(&self.gram_l2_fluid, v)
    }

    pub fn l2_solid(&self, v: &[f64]) -> f64 {
        self.quad_norm(&self.gram_l2_solid, v)
    }

    pub fn h1_fluid(&self, v: &[f64]) -> f64 {
        self.quad_norm(&self.gram_h1_fluid, v)
    }

    pub fn h1_solid(&self, v: &[f64]) -> f64 {
        self.quad_norm(&self.gram_h1_solid, v)
    }
}

/// Region L2 (or full H1) Gram matrix of the vector space, unweighted.
fn assemble_region_gram(disc: &Discretization, region: Region, with_grad: bool) -> DMatrix<f64> {
    let mesh = &disc.mesh;
    let mut out = DMatrix::zeros(disc.n_dofs(), disc.n_dofs());
    for cell in mesh.region_cells(region) {
        let detj = 6.0 * mesh.cell_volume(cell);
        let nodes = &disc.space.scalar.cell_nodes[cell];
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let vals = disc.space.scalar.shape_values(bary);
            let grads = disc.space.scalar.shape_gradients(mesh, cell, bary);
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    let mut m = vals[a] * vals[b];
                    if with_grad {
                        m += grads[a].dot(&grads[b]);
                    }
                    for i in 0..3 {
                        out[(3 * na + i, 3 * nb + i)] += w * m;
                    }
                }
            }
        }
    }
    out
}

/// L2 projector of gradients onto the solid-restricted scalar space, used
/// to reconstruct second derivatives of the displacement for the
/// coefficient-gradient term.
pub struct GradientProjector {
    nodes: Vec<usize>,
    node_index: Vec<Option<usize>>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl GradientProjector {
    fn new(disc: &Discretization) -> Result<Self> {
        let nodes = disc.space.scalar.region_nodes(Region::Solid);
        let mut node_index = vec![None; disc.space.scalar.n_nodes()];
        for (k, &n) in nodes.iter().enumerate() {
            node_index[n] = Some(k);
        }
        let m = nodes.len();
        let mut mass = DMatrix::zeros(m, m);
        for cell in disc.mesh.region_cells(Region::Solid) {
            let detj = 6.0 * disc.mesh.cell_volume(cell);
            let cn = &disc.space.scalar.cell_nodes[cell];
            for (q, bary) in disc.rule.points.iter().enumerate() {
                let w = disc.rule.weights[q] * detj;
                let vals = disc.space.scalar.shape_values(bary);
                for (a, &na) in cn.iter().enumerate() {
                    let ia = node_index[na].unwrap();
                    for (b, &nb) in cn.iter().enumerate() {
                        let ib = node_index[nb].unwrap();
                        mass[(ia, ib)] += w * vals[a] * vals[b];
                    }
                }
            }
        }
        let chol = mass
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("solid scalar mass not positive".into()))?;
        Ok(GradientProjector {
            nodes,
            node_index,
            chol,
        })
    }

    /// Nodal coefficients (on the solid node set) of the projected
    /// gradient components, indexed `[3 j + beta]`.
    fn project(&self, disc: &Discretization, xi_values: &[f64]) -> Vec<DVector<f64>> {
        let m = self.nodes.len();
        let mut rhs = vec![DVector::zeros(m); 9];
        for cell in disc.mesh.region_cells(Region::Solid) {
            let detj = 6.0 * disc.mesh.cell_volume(cell);
            let cn = &disc.space.scalar.cell_nodes[cell];
            for (q, bary) in disc.rule.points.iter().enumerate() {
                let w = disc.rule.weights[q] * detj;
                let vals = disc.space.scalar.shape_values(bary);
                let g = disc.gradient_at(cell, bary, xi_values);
                for (a, &na) in cn.iter().enumerate() {
                    let ia = self.node_index[na].unwrap();
                    for j in 0..3 {
                        for be in 0..3 {
                            rhs[3 * j + be][ia] += w * vals[a] * g[(j, be)];
                        }
                    }
                }
            }
        }
        rhs.into_iter().map(|r| self.chol.solve(&r)).collect()
    }

    /// Spatial derivatives of the combined tangent by the chain rule
    /// through the projected Hessian.
    pub fn grad_coeff_field(
        &self,
        disc: &Discretization,
        defo_minus_id: &TensorField,
        xi_values: &[f64],
    ) -> GradCoeffField {
        let projected = self.project(disc, xi_values);
        let n_qp = disc.n_qp();
        let mut out = GradCoeffField::zeros(&disc.mesh, n_qp);
        for cell in disc.mesh.region_cells(Region::Solid) {
            let cn = &disc.space.scalar.cell_nodes[cell];
            for (q, bary) in disc.rule.points.iter().enumerate() {
                let grads = disc.space.scalar.shape_gradients(&disc.mesh, cell, bary);
                // hessian slices G^(alpha)_{j beta} = d_alpha d_beta xi_j
                let mut slices = [Matrix3::zeros(); 3];
                for (a, &na) in cn.iter().enumerate() {
                    let ia = self.node_index[na].unwrap();
                    for j in 0..3 {
                        for be in 0..3 {
                            let c = projected[3 * j + be][ia];
                            for al in 0..3 {
                                slices[al][(j, be)] += c * grads[a][al];
                            }
                        }
                    }
                }
                let h = defo_minus_id.at(cell, q);
                let entry = &mut out.values[cell * n_qp + q];
                for al in 0..3 {
                    entry[al] = combined_directional(h, &slices[al], &disc.params);
                }
            }
        }
        out
    }
}

/// Frozen given fields of one outer sweep: an ambient velocity history on
/// the fluid region and an ambient displacement history on the solid
/// region, sampled on the step grid.
#[derive(Debug, Clone)]
pub struct GivenData {
    pub v: FieldHistory,
    pub xi: FieldHistory,
}

impl GivenData {
    pub fn new(v: FieldHistory, xi: FieldHistory) -> Result<Self> {
        let xi0_max = xi.snapshots[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if xi0_max > 1e-14 {
            return Err(Error::IncompatibleData(format!(
                "given displacement must vanish at t = 0 (max |xi(0)| = {xi0_max:.3e})"
            )));
        }
        Ok(GivenData { v, xi })
    }

    /// Outer starting guess: velocity frozen at the initial value, the
    /// displacement growing linearly from zero with the initial structure
    /// velocity.
    pub fn initial_guess(v0: &[f64], xi1: &[f64], cfg: &SolverConfig) -> Result<Self> {
        let n = cfg.n_steps();
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * cfg.dt).collect();
        let v_snaps = vec![v0.to_vec(); n + 1];
        let xi_snaps: Vec<Vec<f64>> = times
            .iter()
            .map(|t| xi1.iter().map(|x| x * t).collect())
            .collect();
        GivenData::new(
            FieldHistory::new(times.clone(), v_snaps, cfg.dt)?,
            FieldHistory::new(times, xi_snaps, cfg.dt)?,
        )
    }

    /// True when the maps the data generates are constant in time, which
    /// lets one operator assembly serve every step.
    fn is_static(&self) -> bool {
        let v_zero = self
            .v
            .snapshots
            .iter()
            .all(|s| s.iter().all(|&x| x == 0.0));
        let xi_const = self.xi.snapshots.iter().all(|s| s == &self.xi.snapshots[0]);
        v_zero && xi_const
    }
}

/// Interface datum sampled at the interface quadrature points on the step
/// grid; `samples[k]` belongs to time `k * dt`.
#[derive(Debug, Clone)]
pub struct InterfaceDatum {
    pub samples: Vec<Vec<Vector3<f64>>>,
}

impl InterfaceDatum {
    pub fn zero(n_steps: usize, n_points: usize) -> Self {
        InterfaceDatum {
            samples: vec![vec![Vector3::zeros(); n_points]; n_steps + 1],
        }
    }

    fn validate(&self, n_steps: usize, n_points: usize) -> Result<()> {
        if self.samples.len() != n_steps + 1 || self.samples.iter().any(|s| s.len() != n_points) {
            return Err(Error::DimensionMismatch(
                "interface datum does not match the step grid".into(),
            ));
        }
        let g0 = self.samples[0]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()));
        if g0 > 1e-12 {
            return Err(Error::NonzeroInitialDatum(g0));
        }
        Ok(())
    }

    fn midpoint(&self, k: usize) -> Vec<Vector3<f64>> {
        self.samples[k]
            .iter()
            .zip(&self.samples[k + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }
}

/// Per-step record of every term of the discrete energy identity. State
/// terms are instantaneous; `_acc` terms carry the accumulated time
/// integrals up to the step's end.
#[derive(Debug, Clone)]
pub struct LedgerSample {
    pub time: f64,
    pub kinetic_fluid: f64,
    pub kinetic_solid: f64,
    pub elastic: f64,
    pub viscous_acc: f64,
    pub det_fluid_acc: f64,
    pub det_solid_acc: f64,
    pub coeff_rate_acc: f64,
    pub coeff_grad_acc: f64,
    pub boundary_work_acc: f64,
    pub kinetic_initial: f64,
}

impl LedgerSample {
    /// Absolute defect of the identity at this step.
    pub fn imbalance(&self) -> f64 {
        (self.kinetic_fluid + self.kinetic_solid + self.viscous_acc + self.elastic
            - self.det_fluid_acc
            - self.det_solid_acc
            - self.coeff_rate_acc
            + self.coeff_grad_acc
            - self.boundary_work_acc
            - self.kinetic_initial)
            .abs()
    }

    /// Scale for relative imbalance checks.
    pub fn magnitude(&self) -> f64 {
        self.kinetic_fluid.abs()
            + self.kinetic_solid.abs()
            + self.viscous_acc.abs()
            + self.elastic.abs()
            + self.det_fluid_acc.abs()
            + self.det_solid_acc.abs()
            + self.coeff_rate_acc.abs()
            + self.coeff_grad_acc.abs()
            + self.boundary_work_acc.abs()
            + self.kinetic_initial.abs()
    }

    /// Density-weighted kinetic energy, the quantity the zero-forcing
    /// decay statement speaks about.
    pub fn kinetic(&self) -> f64 {
        self.kinetic_fluid + self.kinetic_solid
    }
}

/// Discrete stand-ins for the space-time norms: suprema of L2/H1 norms
/// over the steps plus first and second time-difference quotients.
#[derive(Debug, Clone, Default)]
pub struct DiscreteNorms {
    pub linf_l2: f64,
    pub l2_h1: f64,
    pub linf_h1: f64,
    pub dq1_l2: f64,
    pub dq2_l2: f64,
}

impl DiscreteNorms {
    pub fn total(&self) -> f64 {
        self.linf_l2 + self.l2_h1 + self.linf_h1 + self.dq1_l2 + self.dq2_l2
    }
}

/// A priori estimate bookkeeping: solution norms against the data norms.
#[derive(Debug, Clone, Default)]
pub struct AprioriLedger {
    pub solution_energy: f64,
    pub data_energy: f64,
    pub ratio: f64,
}

/// Time histories of the solved coefficients and the expanded fields.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub times: Vec<f64>,
    pub f_history: Vec<DVector<f64>>,
    pub h_history: Vec<DVector<f64>>,
    /// Expanded unified velocity, one ambient snapshot per step.
    pub gamma: Vec<Vec<f64>>,
    /// Expanded displacement (meaningful on the solid region).
    pub xi: Vec<Vec<f64>>,
    pub ledger: Vec<LedgerSample>,
    /// Euclidean norm of the frozen constraint applied to each velocity
    /// snapshot.
    pub divergence_residual: Vec<f64>,
    pub fluid_norms: DiscreteNorms,
    pub solid_norms: DiscreteNorms,
    pub apriori: AprioriLedger,
    /// Norm-bound membership of the frozen given pair the solve consumed
    /// (checked and reported, never fatal).
    pub given_membership: MembershipReport,
}

impl TrajectoryState {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn velocity_norm(&self) -> f64 {
        self.fluid_norms.total()
    }

    pub fn displacement_norm(&self) -> f64 {
        self.solid_norms.total()
    }
}

/// One implicit-midpoint step of the block system
///
/// ```text
/// [M 0] d/dt [f]   [-S -D] [f]   [c]
/// [0 I]      [h] = [ I  0] [h] + [0]
/// ```
///
/// with the operators evaluated at the step midpoint by the caller. The
/// `h` update `h1 = h0 + dt (f0 + f1) / 2` is eliminated exactly, leaving
/// one n-by-n solve.
pub fn ode_step(
    ops: &GalerkinOperators,
    f: &DVector<f64>,
    h: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let m = &ops.mass;
    let s = &ops.fluid_stiffness;
    let d = &ops.structure_stiffness;
    let lhs = m + (dt / 2.0) * s + (dt * dt / 4.0) * d;
    let rhs = (m - (dt / 2.0) * s - (dt * dt / 4.0) * d) * f - dt * (d * h)
        + dt * &ops.boundary_load;
    let f1 = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("midpoint step matrix".into()))?;
    let h1 = h + (dt / 2.0) * (f + &f1);
    Ok((f1, h1))
}

/// Midpoint-state machinery shared by the stepping loop: map state plus
/// the coefficient fields derived from the given data at one time.
struct FrozenAt {
    map: MapState,
    coeffs: CoeffField,
    grad_coeffs: GradCoeffField,
}

fn freeze_at(ctx: &SolveContext, given: &GivenData, t: f64, det_floor: f64) -> Result<FrozenAt> {
    let disc = &ctx.disc;
    let flow = build_flow_map(&disc.mesh, &disc.space.scalar, &given.v, t, &disc.rule)?;
    let xi_t = given.xi.value_at(t)?;
    let xi_field = RegionField {
        region: Region::Solid,
        values: xi_t.clone(),
    };
    let defo = build_deformation(&disc.mesh, &disc.space.scalar, &xi_field, &disc.rule, t)?;
    let map = MapState::new(flow, defo, det_floor)?;
    let h_field = map.defo_grad.map(|f| f - Matrix3::identity());
    let coeffs = combined_coefficient_field(&h_field, &disc.mesh, &disc.params);
    let grad_coeffs = ctx
        .hessian_projector
        .grad_coeff_field(disc, &h_field, &xi_t);
    Ok(FrozenAt {
        map,
        coeffs,
        grad_coeffs,
    })
}

/// Assembled pieces of one step: the midpoint operators driving the step
/// and the endpoint operators feeding the energy ledger.
struct StepOperators {
    ops: GalerkinOperators,
    d2_mid: DMatrix<f64>,
    mass_fluid_end: DMatrix<f64>,
    mass_solid_end: DMatrix<f64>,
    d1_end: DMatrix<f64>,
}

fn assemble_step(
    ctx: &SolveContext,
    given: &GivenData,
    g_mid: &[Vector3<f64>],
    t_mid: f64,
    t_end: f64,
    det_floor: f64,
) -> Result<StepOperators> {
    let disc = &ctx.disc;
    let b = &ctx.basis.basis;
    let mid = freeze_at(ctx, given, t_mid, det_floor)?;
    let mass = b.transpose() * crate::assembly::assemble_mass(disc, &mid.map) * b;
    let fluid = b.transpose() * crate::assembly::assemble_fluid_stiffness(disc, &mid.map) * b;
    let (d1m, d2m) = assemble_structure_terms(disc, &mid.coeffs, &mid.grad_coeffs);
    let d1_mid = b.transpose() * d1m * b;
    let d2_mid = b.transpose() * d2m * b;
    let load = b.transpose() * assemble_boundary_load(disc, &ctx.ifc, g_mid);

    let end = freeze_at(ctx, given, t_end, det_floor)?;
    let mass_fluid_end =
        b.transpose() * assemble_mass_region(disc, &end.map, Region::Fluid) * b;
    let mass_solid_end =
        b.transpose() * assemble_mass_region(disc, &end.map, Region::Solid) * b;
    let (d1e, _) = assemble_structure_terms(disc, &end.coeffs, &GradCoeffField::zeros(
        &disc.mesh,
        disc.n_qp(),
    ));
    let d1_end = b.transpose() * d1e * b;

    Ok(StepOperators {
        ops: GalerkinOperators {
            mass,
            fluid_stiffness: fluid,
            structure_stiffness: &d1_mid + &d2_mid,
            boundary_load: load,
        },
        d2_mid,
        mass_fluid_end,
        mass_solid_end,
        d1_end,
    })
}

/// Region-restricted weighted mass.
fn assemble_mass_region(
    disc: &Discretization,
    map_state: &MapState,
    region: Region,
) -> DMatrix<f64> {
    let mesh = &disc.mesh;
    let mut out = DMatrix::zeros(disc.n_dofs(), disc.n_dofs());
    let (rho, dets) = match region {
        Region::Fluid => (disc.params.rho_f, &map_state.det_flow),
        Region::Solid => (disc.params.rho_s, &map_state.det_defo),
    };
    for cell in mesh.region_cells(region) {
        let detj = 6.0 * mesh.cell_volume(cell);
        let nodes = &disc.space.scalar.cell_nodes[cell];
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj * rho * dets.at(cell, q);
            let vals = disc.space.scalar.shape_values(bary);
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    let m = w * vals[a] * vals[b];
                    for i in 0..3 {
                        out[(3 * na + i, 3 * nb + i)] += m;
                    }
                }
            }
        }
    }
    out
}

/// Structure stiffness split into the coefficient term and the
/// coefficient-gradient term.
fn assemble_structure_terms(
    disc: &Discretization,
    coeffs: &CoeffField,
    grad_coeffs: &GradCoeffField,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mesh = &disc.mesh;
    let n = disc.n_dofs();
    let mut d1 = DMatrix::zeros(n, n);
    let mut d2 = DMatrix::zeros(n, n);
    for cell in mesh.region_cells(Region::Solid) {
        let detj = 6.0 * mesh.cell_volume(cell);
        let nodes = &disc.space.scalar.cell_nodes[cell];
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let vals = disc.space.scalar.shape_values(bary);
            let grads = disc.space.scalar.shape_gradients(mesh, cell, bary);
            let bq = coeffs.at(cell, q);
            let dbq = grad_coeffs.at(cell, q);
            for (a, &na) in nodes.iter().enumerate() {
                for (t, &nt) in nodes.iter().enumerate() {
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut acc1 = 0.0;
                            let mut acc2 = 0.0;
                            for al in 0..3 {
                                for be in 0..3 {
                                    let gtb = grads[t][be];
                                    acc1 += bq.get(i, al, j, be) * gtb * grads[a][al];
                                    acc2 += dbq[al].get(i, al, j, be) * gtb * vals[a];
                                }
                            }
                            d1[(3 * na + i, 3 * nt + j)] += w * acc1;
                            d2[(3 * na + i, 3 * nt + j)] += w * acc2;
                        }
                    }
                }
            }
        }
    }
    (d1, d2)
}

/// Integrate the coefficient system for frozen given fields and a given
/// interface datum. Returns the trajectory with its energy ledger, the
/// incompressibility residuals and the discrete norms.
pub fn auxiliary_solve(
    ctx: &SolveContext,
    given: &GivenData,
    datum: &InterfaceDatum,
    f0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<TrajectoryState> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    datum.validate(n_steps, ctx.ifc.points.len())?;

    let n = ctx.n_basis();
    let mut f = f0.clone();
    let mut h = DVector::zeros(n);
    let mut times = vec![0.0];
    let mut f_history = vec![f.clone()];
    let mut h_history = vec![h.clone()];
    let mut gamma = vec![expand(&ctx.basis, &f)];
    let mut xi = vec![expand(&ctx.basis, &h)];

    // initial endpoint operators (identity maps at t = 0)
    let static_ops = given.is_static();
    let mut step_cache: Option<StepOperators> = None;
    let first = freeze_at(ctx, given, 0.0, cfg.det_floor)?;
    let b = &ctx.basis.basis;
    let mut mass_f_prev =
        b.transpose() * assemble_mass_region(&ctx.disc, &first.map, Region::Fluid) * b;
    let mut mass_s_prev =
        b.transpose() * assemble_mass_region(&ctx.disc, &first.map, Region::Solid) * b;
    let (d1_0, _) = assemble_structure_terms(
        &ctx.disc,
        &first.coeffs,
        &GradCoeffField::zeros(&ctx.disc.mesh, ctx.disc.n_qp()),
    );
    let mut d1_prev = b.transpose() * d1_0 * b;

    let kinetic0_f = 0.5 * (f.transpose() * &mass_f_prev * &f)[(0, 0)];
    let kinetic0_s = 0.5 * (f.transpose() * &mass_s_prev * &f)[(0, 0)];
    let kinetic_initial = kinetic0_f + kinetic0_s;
    let mut ledger = vec![LedgerSample {
        time: 0.0,
        kinetic_fluid: kinetic0_f,
        kinetic_solid: kinetic0_s,
        elastic: 0.5 * (h.transpose() * &d1_prev * &h)[(0, 0)],
        viscous_acc: 0.0,
        det_fluid_acc: 0.0,
        det_solid_acc: 0.0,
        coeff_rate_acc: 0.0,
        coeff_grad_acc: 0.0,
        boundary_work_acc: 0.0,
        kinetic_initial,
    }];
    let mut divergence_residual =
        vec![(&ctx.constraint.matrix * DVector::from_column_slice(&gamma[0])).norm()];

    let mut acc = ledger[0].clone();
    for k in 0..n_steps {
        let t_mid = (k as f64 + 0.5) * cfg.dt;
        let t_end = (k + 1) as f64 * cfg.dt;
        let g_mid = datum.midpoint(k);
        let step = if static_ops {
            if step_cache.is_none() {
                step_cache = Some(assemble_step(ctx, given, &g_mid, t_mid, t_end, cfg.det_floor)?);
            }
            let cached = step_cache.as_mut().unwrap();
            // the load is the only time-dependent piece on the static path
            cached.ops.boundary_load =
                b.transpose() * assemble_boundary_load(&ctx.disc, &ctx.ifc, &g_mid);
            None
        } else {
            Some(assemble_step(ctx, given, &g_mid, t_mid, t_end, cfg.det_floor)?)
        };
        let step_ref: &StepOperators = step.as_ref().or(step_cache.as_ref()).unwrap();

        let (f1, h1) = ode_step(&step_ref.ops, &f, &h, cfg.dt)?;
        let f_mid = 0.5 * (&f + &f1);
        let h_mid = 0.5 * (&h + &h1);

        // ledger increments
        acc.viscous_acc +=
            cfg.dt * (f_mid.transpose() * &step_ref.ops.fluid_stiffness * &f_mid)[(0, 0)];
        acc.det_fluid_acc +=
            0.5 * (f_mid.transpose() * (&step_ref.mass_fluid_end - &mass_f_prev) * &f_mid)[(0, 0)];
        acc.det_solid_acc +=
            0.5 * (f_mid.transpose() * (&step_ref.mass_solid_end - &mass_s_prev) * &f_mid)[(0, 0)];
        acc.coeff_rate_acc +=
            0.5 * (h_mid.transpose() * (&step_ref.d1_end - &d1_prev) * &h_mid)[(0, 0)];
        acc.coeff_grad_acc += cfg.dt * (f_mid.transpose() * &step_ref.d2_mid * &h_mid)[(0, 0)];
        acc.boundary_work_acc += cfg.dt * step_ref.ops.boundary_load.dot(&f_mid);

        let kinetic_fluid = 0.5 * (f1.transpose() * &step_ref.mass_fluid_end * &f1)[(0, 0)];
        let kinetic_solid = 0.5 * (f1.transpose() * &step_ref.mass_solid_end * &f1)[(0, 0)];
        let elastic = 0.5 * (h1.transpose() * &step_ref.d1_end * &h1)[(0, 0)];
        acc = LedgerSample {
            time: t_end,
            kinetic_fluid,
            kinetic_solid,
            elastic,
            kinetic_initial,
            ..acc
        };
        ledger.push(acc.clone());

        if !static_ops {
            let own = step.unwrap();
            mass_f_prev = own.mass_fluid_end;
            mass_s_prev = own.mass_solid_end;
            d1_prev = own.d1_end;
        }

        f = f1;
        h = h1;
        times.push(t_end);
        let gk = expand(&ctx.basis, &f);
        divergence_residual
            .push((&ctx.constraint.matrix * DVector::from_column_slice(&gk)).norm());
        gamma.push(gk);
        xi.push(expand(&ctx.basis, &h));
        f_history.push(f.clone());
        h_history.push(h.clone());
    }

    let fluid_norms = fluid_trajectory_norms(ctx, &times, &gamma);
    let solid_norms = solid_trajectory_norms(ctx, &times, &xi);
    let apriori = apriori_ledger(ctx, cfg, &gamma[0], datum, &fluid_norms, &solid_norms);
    let given_membership = {
        let gv = fluid_trajectory_norms(ctx, &given.v.times, &given.v.snapshots);
        let gx = solid_trajectory_norms(ctx, &given.xi.times, &given.xi.snapshots);
        MembershipReport {
            velocity_norm: gv.total(),
            displacement_norm: gx.total(),
            m_bound: cfg.m_bound,
            member: gv.total() <= cfg.m_bound && gx.total() <= cfg.m_bound,
        }
    };

    Ok(TrajectoryState {
        times,
        f_history,
        h_history,
        gamma,
        xi,
        ledger,
        divergence_residual,
        fluid_norms,
        solid_norms,
        apriori,
        given_membership,
    })
}

fn difference_quotients(
    times: &[f64],
    snaps: &[Vec<f64>],
    norm: impl Fn(&[f64]) -> f64,
) -> (f64, f64) {
    let mut dq1 = 0.0f64;
    let mut dq2 = 0.0f64;
    for k in 1..snaps.len() {
        let dt = times[k] - times[k - 1];
        let diff: Vec<f64> = snaps[k]
            .iter()
            .zip(&snaps[k - 1])
            .map(|(a, b)| (a - b) / dt)
            .collect();
        dq1 = dq1.max(norm(&diff));
    }
    for k in 2..snaps.len() {
        let dt = times[k] - times[k - 1];
        let diff: Vec<f64> = (0..snaps[k].len())
            .map(|i| (snaps[k][i] - 2.0 * snaps[k - 1][i] + snaps[k - 2][i]) / (dt * dt))
            .collect();
        dq2 = dq2.max(norm(&diff));
    }
    (dq1, dq2)
}

fn fluid_trajectory_norms(ctx: &SolveContext, times: &[f64], gamma: &[Vec<f64>]) -> DiscreteNorms {
    let mut out = DiscreteNorms::default();
    for (k, g) in gamma.iter().enumerate() {
        out.linf_l2 = out.linf_l2.max(ctx.l2_fluid(g));
        out.linf_h1 = out.linf_h1.max(ctx.h1_fluid(g));
        if k > 0 {
            let dt = times[k] - times[k - 1];
            out.l2_h1 += dt * ctx.h1_fluid(g).powi(2);
        }
    }
    out.l2_h1 = out.l2_h1.sqrt();
    let (dq1, dq2) = difference_quotients(times, gamma, |v| ctx.l2_fluid(v));
    out.dq1_l2 = dq1;
    out.dq2_l2 = dq2;
    out
}

fn solid_trajectory_norms(ctx: &SolveContext, times: &[f64], xi: &[Vec<f64>]) -> DiscreteNorms {
    let mut out = DiscreteNorms::default();
    for (k, x) in xi.iter().enumerate() {
        out.linf_l2 = out.linf_l2.max(ctx.l2_solid(x));
        out.linf_h1 = out.linf_h1.max(ctx.h1_solid(x));
        if k > 0 {
            let dt = times[k] - times[k - 1];
            out.l2_h1 += dt * ctx.h1_solid(x).powi(2);
        }
    }
    out.l2_h1 = out.l2_h1.sqrt();
    let (dq1, dq2) = difference_quotients(times, xi, |v| ctx.l2_solid(v));
    out.dq1_l2 = dq1;
    out.dq2_l2 = dq2;
    out
}

fn apriori_ledger(
    ctx: &SolveContext,
    cfg: &SolverConfig,
    gamma0: &[f64],
    datum: &InterfaceDatum,
    fluid: &DiscreteNorms,
    solid: &DiscreteNorms,
) -> AprioriLedger {
    let p = &ctx.disc.params;
    let v0 = ctx.l2_fluid(gamma0);
    let xi1 = ctx.l2_solid(gamma0);
    // discrete H1-in-time L2(interface) norm of the datum
    let mut g_energy = 0.0;
    for k in 0..datum.samples.len() {
        let mut l2 = 0.0;
        for (pt, gv) in ctx.ifc.points.iter().zip(&datum.samples[k]) {
            l2 += pt.weight * gv.norm_squared();
        }
        g_energy += cfg.dt * l2;
        if k > 0 {
            let mut rate = 0.0;
            for (pt, (a, b)) in ctx
                .ifc
                .points
                .iter()
                .zip(datum.samples[k].iter().zip(&datum.samples[k - 1]))
            {
                rate += pt.weight * ((a - b) / cfg.dt).norm_squared();
            }
            g_energy += cfg.dt * rate;
        }
    }
    let data_energy = 0.5 * p.rho_f * v0 * v0 + 0.5 * p.rho_s * xi1 * xi1 + g_energy;
    let solution_energy =
        fluid.linf_l2.powi(2) + fluid.l2_h1.powi(2) + solid.linf_l2.powi(2) + solid.linf_h1.powi(2);
    let ratio = if data_energy > 0.0 {
        solution_energy / data_energy
    } else if solution_energy > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    AprioriLedger {
        solution_energy,
        data_energy,
        ratio,
    }
}

/// One record per fixed-point sweep.
#[derive(Debug, Clone)]
pub struct FixedPointIter {
    pub iter: usize,
    pub update: f64,
    pub reference: f64,
    pub relative: f64,
    /// Ratio of successive update norms; below one indicates contraction.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct FixedPointLog {
    pub iters: Vec<FixedPointIter>,
    pub converged: bool,
}

impl FixedPointLog {
    fn push(&mut self, update: f64, reference: f64) -> f64 {
        let relative = if reference > 0.0 {
            update / reference
        } else {
            update
        };
        let ratio = self
            .iters
            .last()
            .filter(|p| p.update > 0.0)
            .map(|p| update / p.update);
        self.iters.push(FixedPointIter {
            iter: self.iters.len() + 1,
            update,
            reference,
            relative,
            ratio,
        });
        relative
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.iters
            .iter()
            .filter_map(|i| i.ratio)
            .fold(None, |m, r| Some(m.map_or(r, |x: f64| x.max(r))))
    }

    pub fn summary(&self) -> String {
        let ratios: Vec<String> = self
            .iters
            .iter()
            .map(|i| {
                format!(
                    "iter {}: rel update {:.3e}{}",
                    i.iter,
                    i.relative,
                    i.ratio
                        .map(|r| format!(", ratio {r:.3}"))
                        .unwrap_or_default()
                )
            })
            .collect();
        ratios.join("; ")
    }
}

/// Interface traces of the combined tangent and the displacement gradient
/// evaluated from the solid side.
fn interface_coeff_samples(
    ctx: &SolveContext,
    xi_snaps: &[Vec<f64>],
) -> Vec<Vec<Coeffs81>> {
    let disc = &ctx.disc;
    xi_snaps
        .iter()
        .map(|xi| {
            ctx.ifc
                .points
                .iter()
                .map(|pt| {
                    let h = disc.gradient_at(pt.solid_cell, &pt.bary_solid, xi);
                    combined_coefficients(&h, &disc.params)
                })
                .collect()
        })
        .collect()
}

fn interface_grad_samples(ctx: &SolveContext, xi_snaps: &[Vec<f64>]) -> Vec<Vec<Matrix3<f64>>> {
    let disc = &ctx.disc;
    xi_snaps
        .iter()
        .map(|xi| {
            ctx.ifc
                .points
                .iter()
                .map(|pt| disc.gradient_at(pt.solid_cell, &pt.bary_solid, xi))
                .collect()
        })
        .collect()
}

/// Natural-condition datum of the linearized elastodynamics:
///
/// ```text
/// g_i(t) = - sum_ajb ( integral_0^t d_s b_iajb d_b xi_j ds ) n_a
/// ```
///
/// accumulated by the trapezoidal rule, with the coefficient history taken
/// from the frozen given fields and the displacement from the previous
/// iterate.
fn datum_from_iterate(
    ctx: &SolveContext,
    frozen_coeffs: &[Vec<Coeffs81>],
    xi_grads: &[Vec<Matrix3<f64>>],
) -> InterfaceDatum {
    let n_pts = ctx.ifc.points.len();
    let n_steps = frozen_coeffs.len() - 1;
    let mut samples = vec![vec![Vector3::zeros(); n_pts]; n_steps + 1];
    let mut acc = vec![Matrix3::zeros(); n_pts];
    for k in 0..n_steps {
        for p in 0..n_pts {
            // d_s b approximated on the interval, displacement gradient
            // averaged: trapezoid of the product
            let mut db = frozen_coeffs[k + 1][p].clone();
            for (x, y) in db.0.iter_mut().zip(&frozen_coeffs[k][p].0) {
                *x -= y;
            }
            let gmid = 0.5 * (xi_grads[k][p] + xi_grads[k + 1][p]);
            acc[p] += db.apply(&gmid);
        }
        for p in 0..n_pts {
            samples[k + 1][p] = -(acc[p] * ctx.ifc.points[p].normal);
        }
    }
    InterfaceDatum { samples }
}

/// Inner fixed point: iterate the interface datum of the linearized system
/// until the displacement stops moving in the discrete solid norm.
pub fn linearized_solve(
    ctx: &SolveContext,
    given: &GivenData,
    f0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<(TrajectoryState, FixedPointLog, InterfaceDatum)> {
    let frozen_coeffs = interface_coeff_samples(ctx, &given.xi.snapshots);
    let mut xi_grads = interface_grad_samples(ctx, &given.xi.snapshots);
    let mut log = FixedPointLog::default();
    let mut prev: Option<(TrajectoryState, InterfaceDatum)> = None;

    for _ in 0..cfg.max_inner_iters {
        let datum = datum_from_iterate(ctx, &frozen_coeffs, &xi_grads);
        let traj = auxiliary_solve(ctx, given, &datum, f0, cfg)?;

        let (update, reference) = {
            let base: &[Vec<f64>] = match &prev {
                None => &given.xi.snapshots,
                Some((p, _)) => &p.xi,
            };
            let mut diff = 0.0f64;
            for (a, b) in traj.xi.iter().zip(base) {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                diff = diff.max(ctx.h1_solid(&d));
            }
            (diff, traj.solid_norms.linf_h1)
        };
        let relative = log.push(update, reference.max(1e-300));

        let xi_new = interface_grad_samples(ctx, &traj.xi);
        if cfg.relaxation >= 1.0 {
            xi_grads = xi_new;
        } else {
            for (old_row, new_row) in xi_grads.iter_mut().zip(xi_new) {
                for (o, n) in old_row.iter_mut().zip(new_row) {
                    *o = cfg.relaxation * n + (1.0 - cfg.relaxation) * *o;
                }
            }
        }
        let done = relative < cfg.fp_inner_tol;
        prev = Some((traj, datum));
        if done {
            log.converged = true;
            let (traj, datum) = prev.unwrap();
            return Ok((traj, log, datum));
        }
    }
    Err(Error::NonContraction(format!(
        "inner datum iteration exceeded {} sweeps (halving the time window usually restores contraction): {}",
        cfg.max_inner_iters,
        log.summary()
    )))
}

/// Fixed-point set membership report for one trajectory.
#[derive(Debug, Clone)]
pub struct MembershipReport {
    pub velocity_norm: f64,
    pub displacement_norm: f64,
    pub m_bound: f64,
    pub member: bool,
}

pub fn membership(traj: &TrajectoryState, m_bound: f64) -> MembershipReport {
    let velocity_norm = traj.velocity_norm();
    let displacement_norm = traj.displacement_norm();
    MembershipReport {
        velocity_norm,
        displacement_norm,
        m_bound,
        member: velocity_norm <= m_bound && displacement_norm <= m_bound,
    }
}

/// Full output of the nonlinear solve.
pub struct SolveOutput {
    pub trajectory: TrajectoryState,
    pub outer_log: FixedPointLog,
    pub inner_logs: Vec<FixedPointLog>,
    pub membership: Vec<MembershipReport>,
    /// Given fields of the last sweep (the self-consistent transport
    /// state; pressure recovery reuses them).
    pub final_given: GivenData,
    /// Interface datum of the last accepted sweep.
    pub final_datum: InterfaceDatum,
    pub initial_coeffs: DVector<f64>,
}

/// Outer fixed point: refresh the frozen coefficients from the previous
/// solution until the pair stops moving in the discrete product norm.
pub fn nonlinear_solve(
    ctx: &SolveContext,
    v0: &RegionField,
    xi1: &RegionField,
    cfg: &SolverConfig,
) -> Result<SolveOutput> {
    cfg.validate()?;
    let gamma0 = merge_initial_data(&ctx.disc, v0, xi1)?;
    let f0 = project_initial(&ctx.basis, &ctx.mass_rho, &gamma0)?;

    let mut given = GivenData::initial_guess(&v0.values, &xi1.values, cfg)?;
    let mut outer_log = FixedPointLog::default();
    let mut inner_logs = Vec::new();
    let mut memberships = Vec::new();
    let mut prev: Option<(TrajectoryState, InterfaceDatum)> = None;

    for _ in 0..cfg.max_outer_iters {
        // a determinant-floor violation on this window means the iterates
        // left the admissible set; the remedy is the same as for a stalled
        // iteration, so it surfaces as non-contraction
        let (traj, inner, datum) = match linearized_solve(ctx, &given, &f0, cfg) {
            Ok(out) => out,
            Err(Error::DetFloor {
                det,
                floor,
                cell,
                point,
            }) => {
                return Err(Error::NonContraction(format!(
                    "iterate left the admissible set: det = {det:.6e} < {floor:.6e} at cell \
                     {cell}, point {point}; {}",
                    outer_log.summary()
                )))
            }
            Err(other) => return Err(other),
        };
        inner_logs.push(inner);
        memberships.push(membership(&traj, cfg.m_bound));

        let (update, reference) = {
            let (base_gamma, base_xi): (&[Vec<f64>], &[Vec<f64>]) = match &prev {
                Some((p, _)) => (&p.gamma, &p.xi),
                None => (&given.v.snapshots, &given.xi.snapshots),
            };
            let mut dv = 0.0f64;
            for (a, b) in traj.gamma.iter().zip(base_gamma) {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                dv = dv.max(ctx.l2_fluid(&d) + ctx.h1_fluid(&d));
            }
            let mut dx = 0.0f64;
            for (a, b) in traj.xi.iter().zip(base_xi) {
                let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                dx = dx.max(ctx.h1_solid(&d));
            }
            (
                dv + dx,
                traj.fluid_norms.linf_h1 + traj.solid_norms.linf_h1,
            )
        };
        let relative = outer_log.push(update, reference.max(1e-300));

        // refresh the frozen fields from the solution
        let omega = cfg.relaxation;
        let blend = |new: &[Vec<f64>], old: &[Vec<f64>]| -> Vec<Vec<f64>> {
            new.iter()
                .zip(old)
                .map(|(n, o)| {
                    n.iter()
                        .zip(o)
                        .map(|(x, y)| omega * x + (1.0 - omega) * y)
                        .collect()
                })
                .collect()
        };
        let v_snaps = blend(&traj.gamma, &given.v.snapshots);
        let xi_snaps = blend(&traj.xi, &given.xi.snapshots);
        given = GivenData::new(
            FieldHistory::new(traj.times.clone(), v_snaps, cfg.dt)?,
            FieldHistory::new(traj.times.clone(), xi_snaps, cfg.dt)?,
        )?;

        let done = relative < cfg.fp_outer_tol;
        prev = Some((traj, datum));
        if done {
            outer_log.converged = true;
            let (trajectory, final_datum) = prev.unwrap();
            return Ok(SolveOutput {
                trajectory,
                outer_log,
                inner_logs,
                membership: memberships,
                final_given: given,
                final_datum,
                initial_coeffs: f0,
            });
        }
    }
    Err(Error::NonContraction(format!(
        "outer coefficient iteration exceeded {} sweeps: {}",
        cfg.max_outer_iters,
        outer_log.summary()
    )))
}

/// Map state generated by given fields at one time, for post-processing.
pub fn map_state_at(
    ctx: &SolveContext,
    given: &GivenData,
    t: f64,
    det_floor: f64,
) -> Result<MapState> {
    Ok(freeze_at(ctx, given, t, det_floor)?.map)
}

/// Halve the time window until the wrapped solve stops reporting
/// non-contraction; every other error passes straight through.
pub fn time_window_bisect<T>(
    cfg: &SolverConfig,
    mut solve: impl FnMut(&SolverConfig) -> Result<T>,
) -> Result<(T, SolverConfig, usize)> {
    let mut current = cfg.clone();
    let mut halvings = 0;
    loop {
        match solve(&current) {
            Ok(out) => return Ok((out, current, halvings)),
            Err(Error::NonContraction(msg)) => {
                if halvings >= cfg.t_bisect_max {
                    return Err(Error::NonContraction(format!(
                        "no contraction after {halvings} halvings of the time window: {msg}"
                    )));
                }
                halvings += 1;
                current = current.halved();
            }
            Err(other) => return Err(other),
        }
    }
}


#[cfg(test)]
mod membership_tests {
    use super::*;
    use crate::constitutive::MaterialParams;
    use crate::mesh::two_cube_mesh;

    fn ctx() -> SolveContext {
        let p = MaterialParams {
            rho_f: 1.0,
            rho_s: 1.1,
            mu: 0.05,
            mu_s: 0.5,
            lambda_s: 0.5,
            c_penalty: 10.0,
        };
        let disc = Discretization::new(two_cube_mesh(1).unwrap(), 2, p).unwrap();
        SolveContext::new(disc).unwrap()
    }

    fn solve_scaled(ctx: &SolveContext, scale: f64, m_bound: f64) -> TrajectoryState {
        let cfg = SolverConfig {
            t_end: 0.03,
            dt: 0.005,
            m_bound,
            ..Default::default()
        };
        let zeros = vec![0.0; ctx.disc.n_dofs()];
        let given = GivenData::initial_guess(&zeros, &zeros, &cfg).unwrap();
        let datum = InterfaceDatum::zero(cfg.n_steps(), ctx.ifc.points.len());
        let mut raw = vec![0.0; ctx.disc.n_dofs()];
        for (n, p) in ctx.disc.space.scalar.node_coords.iter().enumerate() {
            raw[3 * n] = scale * p.y;
            raw[3 * n + 2] = -0.2 * scale * p.x;
        }
        let f0 = crate::assembly::project_initial(&ctx.basis, &ctx.mass_rho, &raw).unwrap();
        auxiliary_solve(ctx, &given, &datum, &f0, &cfg).unwrap()
    }

    #[test]
    fn membership_flags_violations_without_failing() {
        let ctx = ctx();
        let traj = solve_scaled(&ctx, 1.0, 1.0001);
        // unit-size data against a bound barely above one: violation
        // expected, solve still completes
        let report = membership(&traj, 0.5);
        assert!(!report.member);
        assert!(report.velocity_norm > 0.5);
        // zero trajectory is always a member
        let zero = solve_scaled(&ctx, 0.0, 2.0);
        let report = membership(&zero, 2.0);
        assert!(report.member);
        assert_eq!(report.velocity_norm, 0.0);
        // the given pair's membership is reported too
        assert!(zero.given_membership.member);
    }

    #[test]
    fn trajectory_norms_are_one_homogeneous() {
        let ctx = ctx();
        let a = solve_scaled(&ctx, 1.0, 10.0);
        let b = solve_scaled(&ctx, 2.0, 10.0);
        let va = membership(&a, 10.0);
        let vb = membership(&b, 10.0);
        approx::assert_relative_eq!(
            vb.velocity_norm,
            2.0 * va.velocity_norm,
            max_relative = 1e-11
        );
        approx::assert_relative_eq!(
            vb.displacement_norm,
            2.0 * va.displacement_norm,
            max_relative = 1e-11
        );
    }
}
