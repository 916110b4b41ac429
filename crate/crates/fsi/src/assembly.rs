//! Galerkin machinery: the weighted divergence constraint, the orthonormal
//! basis of its nullspace, and the block operators of the coefficient ODE
//! system.
//!
//! The constraint realizes the space
//!
//! ```text
//! W = { eta in H1 | div(det(grad A)(grad A)^-1 eta) = 0   on the fluid region,
//!                   eta = 0                                on the pinned boundary }
//! ```
//!
//! through rows `q |-> integral q cof(grad A) : grad(eta)` (the weighted
//! divergence; the cofactor form is what the product rule leaves once the
//! row-wise divergence of the cofactor drops out) plus one pin row per
//! constrained dof. The basis columns span the numerical nullspace and are
//! orthonormal in the density-weighted inner product
//! `[[g, e]] = rho_f (g, e)_fluid + rho_s (g, e)_solid`.

use crate::constitutive::{Coeffs81, MaterialParams};
use crate::error::{Error, Result};
use crate::fields::RegionField;
use crate::kinematics::MapState;
use crate::mesh::{ReferenceMesh, Region};
use crate::quadrature::{tet_rule, tri_rule, QuadratureRule};
use crate::space::{FunctionSpace, ScalarSpace};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

/// Mesh, spaces, quadrature and material constants bundled for assembly.
pub struct Discretization {
    pub mesh: ReferenceMesh,
    pub space: FunctionSpace,
    /// Scalar pressure space (degree 1 unless configured otherwise).
    pub pressure_space: ScalarSpace,
    pub rule: QuadratureRule,
    pub facet_rule: QuadratureRule,
    pub params: MaterialParams,
}

impl Discretization {
    pub fn new(mesh: ReferenceMesh, degree: usize, params: MaterialParams) -> Result<Self> {
        params.validate()?;
        let space = FunctionSpace::new(&mesh, degree)?;
        let pressure_space = ScalarSpace::new(&mesh, 1)?;
        // the combined tangent is quartic in the displacement gradient
        let rule = tet_rule(2 * degree + 2);
        let facet_rule = tri_rule(2 * degree + 2);
        Ok(Discretization {
            mesh,
            space,
            pressure_space,
            rule,
            facet_rule,
            params,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs()
    }

    pub fn n_qp(&self) -> usize {
        self.rule.len()
    }

    /// Gradient of an ambient nodal field at a point of a cell.
    pub fn gradient_at(&self, cell: usize, bary: &[f64], values: &[f64]) -> Matrix3<f64> {
        let grads = self.space.scalar.shape_gradients(&self.mesh, cell, bary);
        let mut g = Matrix3::zeros();
        for (a, &n) in self.space.scalar.cell_nodes[cell].iter().enumerate() {
            for i in 0..3 {
                let u = values[3 * n + i];
                for j in 0..3 {
                    g[(i, j)] += u * grads[a][j];
                }
            }
        }
        g
    }

    /// Value of an ambient nodal field at a point of a cell.
    pub fn value_at(&self, cell: usize, bary: &[f64], values: &[f64]) -> Vector3<f64> {
        let vals = self.space.scalar.shape_values(bary);
        let mut v = Vector3::zeros();
        for (a, &n) in self.space.scalar.cell_nodes[cell].iter().enumerate() {
            for c in 0..3 {
                v[c] += values[3 * n + c] * vals[a];
            }
        }
        v
    }
}

/// Dense rows enforcing the weighted divergence and the boundary pins.
pub struct ConstraintMatrix {
    pub matrix: DMatrix<f64>,
    pub n_pressure_rows: usize,
    pub n_pin_rows: usize,
    /// Global scalar nodes carrying the pressure test functions, in row
    /// order.
    pub pressure_nodes: Vec<usize>,
    /// Pinned velocity dofs, in row order after the pressure rows.
    pub pinned_dofs: Vec<usize>,
}

/// Assemble the constraint at the state carried by `map_state`.
pub fn build_constraint(disc: &Discretization, map_state: &MapState) -> Result<ConstraintMatrix> {
    let mesh = &disc.mesh;
    let space = &disc.space;
    let n_dofs = disc.n_dofs();
    let pressure_nodes = disc.pressure_space.region_nodes(Region::Fluid);
    let pnode_row: Vec<Option<usize>> = {
        let mut map = vec![None; disc.pressure_space.n_nodes()];
        for (r, &n) in pressure_nodes.iter().enumerate() {
            map[n] = Some(r);
        }
        map
    };
    let pinned_dofs: Vec<usize> = (0..n_dofs)
        .filter(|&d| space.dirichlet_mask[d])
        .collect();
    let n_rows = pressure_nodes.len() + pinned_dofs.len();
    let mut matrix = DMatrix::zeros(n_rows, n_dofs);

    // Per-cell contributions computed in parallel, accumulated in cell
    // order so the result is independent of the thread count.
    let fluid_cells: Vec<usize> = mesh.region_cells(Region::Fluid).collect();
    let locals: Vec<(usize, Vec<(usize, usize, f64)>)> = fluid_cells
        .par_iter()
        .map(|&cell| {
            let mut entries = Vec::new();
            let detj = 6.0 * mesh.cell_volume(cell);
            for (q, bary) in disc.rule.points.iter().enumerate() {
                let w = disc.rule.weights[q] * detj;
                let cof = map_state.cof_flow.at(cell, q);
                let pvals = disc.pressure_space.shape_values(bary);
                let grads = space.scalar.shape_gradients(mesh, cell, bary);
                for (pa, &pn) in disc.pressure_space.cell_nodes[cell].iter().enumerate() {
                    let row = pnode_row[pn].expect("fluid cell node is a pressure node");
                    for (a, &n) in space.scalar.cell_nodes[cell].iter().enumerate() {
                        for i in 0..3 {
                            // div(det inv * psi) = cof : grad psi for a
                            // basis field e_i phi_a
                            let mut div_w = 0.0;
                            for al in 0..3 {
                                div_w += cof[(i, al)] * grads[a][al];
                            }
                            entries.push((row, 3 * n + i, w * pvals[pa] * div_w));
                        }
                    }
                }
            }
            (cell, entries)
        })
        .collect();
    for (_, entries) in locals {
        for (r, c, v) in entries {
            matrix[(r, c)] += v;
        }
    }

    for (k, &dof) in pinned_dofs.iter().enumerate() {
        matrix[(pressure_nodes.len() + k, dof)] = 1.0;
    }

    Ok(ConstraintMatrix {
        matrix,
        n_pressure_rows: pressure_nodes.len(),
        n_pin_rows: pinned_dofs.len(),
        pressure_nodes,
        pinned_dofs,
    })
}

/// Orthonormal basis of the constraint nullspace.
pub struct DivFreeBasis {
    /// Columns are coefficient vectors in the ambient space.
    pub basis: DMatrix<f64>,
    pub dim: usize,
}

/// Relative singular-value threshold separating constraints from roundoff.
pub const NULLSPACE_THRESHOLD: f64 = 1e-10;

/// Extract the numerical nullspace of the constraint and orthonormalize it
/// against the weighted mass `mass_rho`.
pub fn build_divfree_basis(
    constraint: &ConstraintMatrix,
    mass_rho: &DMatrix<f64>,
) -> Result<DivFreeBasis> {
    let n = constraint.matrix.ncols();
    // Pad with zero rows to a square matrix so the factorization returns
    // the complete right singular basis.
    let m = constraint.matrix.nrows();
    let mut padded = DMatrix::zeros(n.max(m), n);
    padded.view_mut((0, 0), (m, n)).copy_from(&constraint.matrix);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^t");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = NULLSPACE_THRESHOLD * sigma_max.max(1e-300);
    let mut null_cols: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] <= cutoff)
        .collect();
    // rows of v_t beyond the singular value count (if any) are null too
    for k in svd.singular_values.len()..v_t.nrows() {
        null_cols.push(k);
    }
    if null_cols.is_empty() {
        return Err(Error::EmptyNullspace);
    }
    let dim = null_cols.len();
    let mut nullspace = DMatrix::zeros(n, dim);
    for (j, &k) in null_cols.iter().enumerate() {
        for i in 0..n {
            nullspace[(i, j)] = v_t[(k, i)];
        }
    }

    // weighted Gram-Cholesky orthonormalization: B = N L^-T with
    // N^t M N = L L^t
    let gram = nullspace.transpose() * mass_rho * &nullspace;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("weighted Gram matrix not positive".into()))?;
    let l = chol.l();
    // solve L X = N^t, then B = X^t
    let x = l
        .solve_lower_triangular(&nullspace.transpose())
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
    Ok(DivFreeBasis {
        basis: x.transpose(),
        dim,
    })
}

/// Directional derivatives of the combined tangent along the three spatial
/// directions: entry `alpha` holds `d(b_iajb)/d(x_alpha)` at each point.
pub struct GradCoeffField {
    pub values: Vec<[Coeffs81; 3]>,
    pub n_qp: usize,
}

impl GradCoeffField {
    pub fn zeros(mesh: &ReferenceMesh, n_qp: usize) -> Self {
        GradCoeffField {
            values: vec![
                [Coeffs81::zeros(), Coeffs81::zeros(), Coeffs81::zeros()];
                mesh.n_cells() * n_qp
            ],
            n_qp,
        }
    }

    pub fn at(&self, cell: usize, qp: usize) -> &[Coeffs81; 3] {
        &self.values[cell * self.n_qp + qp]
    }
}

/// Block operators of the first-order coefficient system
///
/// ```text
/// [ M 0 ] d/dt [f]   [ -S  -D ] [f]   [load]
/// [ 0 I ]      [h] = [  I   0 ] [h] + [ 0  ]
/// ```
///
/// `mass`, `fluid_stiffness` and `structure_stiffness` store M, S and D as
/// the (positive) quadrature forms; the signs live in the system assembly.
pub struct GalerkinOperators {
    pub mass: DMatrix<f64>,
    pub fluid_stiffness: DMatrix<f64>,
    pub structure_stiffness: DMatrix<f64>,
    pub boundary_load: DVector<f64>,
}

impl GalerkinOperators {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    /// Full 2n-by-2n blocks (A, B, C) of the first-order system.
    pub fn ode_blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
        let n = self.dim();
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, n)).copy_from(&self.mass);
        for k in 0..n {
            a[(n + k, n + k)] = 1.0;
        }
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        b.view_mut((0, 0), (n, n)).copy_from(&(-&self.fluid_stiffness));
        b.view_mut((0, n), (n, n))
            .copy_from(&(-&self.structure_stiffness));
        for k in 0..n {
            b[(n + k, k)] = 1.0;
        }
        let mut c = DVector::zeros(2 * n);
        c.rows_mut(0, n).copy_from(&self.boundary_load);
        (a, b, c)
    }
}

fn accumulate_cells<F>(n_dofs: usize, cells: &[usize], local: F) -> DMatrix<f64>
where
    F: Fn(usize) -> Vec<(usize, usize, f64)> + Sync,
{
    let locals: Vec<(usize, Vec<(usize, usize, f64)>)> = cells
        .par_iter()
        .map(|&cell| (cell, local(cell)))
        .collect();
    let mut out = DMatrix::zeros(n_dofs, n_dofs);
    for (_, entries) in locals {
        for (r, c, v) in entries {
            out[(r, c)] += v;
        }
    }
    out
}

/// Ambient mass with weights `rho_f det(grad A)` on fluid cells and
/// `rho_s det(grad phi)` on solid cells.
pub fn assemble_mass(disc: &Discretization, map_state: &MapState) -> DMatrix<f64> {
    let mesh = &disc.mesh;
    let cells: Vec<usize> = (0..mesh.n_cells()).collect();
    accumulate_cells(disc.n_dofs(), &cells, |cell| {
        let (rho, dets) = match mesh.cell_region[cell] {
            Region::Fluid => (disc.params.rho_f, &map_state.det_flow),
            Region::Solid => (disc.params.rho_s, &map_state.det_defo),
        };
        let detj = 6.0 * mesh.cell_volume(cell);
        let nodes = &disc.space.scalar.cell_nodes[cell];
        let mut entries = Vec::new();
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj * rho * dets.at(cell, q);
            let vals = disc.space.scalar.shape_values(bary);
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    let m = w * vals[a] * vals[b];
                    for i in 0..3 {
                        entries.push((3 * na + i, 3 * nb + i, m));
                    }
                }
            }
        }
        entries
    })
}

/// Density-weighted mass without determinant weights (the t = 0 inner
/// product used for orthonormalization and initial projection).
pub fn assemble_rho_mass(disc: &Discretization) -> DMatrix<f64> {
    let id = MapState::identity(&disc.mesh, disc.n_qp(), 0.0);
    assemble_mass(disc, &id)
}

/// Fluid stiffness `integral sigma0(psi_b) : grad psi_a` over the fluid
/// region, assembled through the symmetric rate form
/// `(mu/2) det(A) D(psi_a) : D(psi_b)` with `D(u) = grad u A^-1 + A^-t grad u^t`.
pub fn assemble_fluid_stiffness(disc: &Discretization, map_state: &MapState) -> DMatrix<f64> {
    let mesh = &disc.mesh;
    let cells: Vec<usize> = mesh.region_cells(Region::Fluid).collect();
    accumulate_cells(disc.n_dofs(), &cells, |cell| {
        let detj = 6.0 * mesh.cell_volume(cell);
        let nodes = &disc.space.scalar.cell_nodes[cell];
        let mut entries = Vec::new();
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let det = map_state.det_flow.at(cell, q);
            let inv = map_state.inv_flow.at(cell, q);
            let grads = disc.space.scalar.shape_gradients(mesh, cell, bary);
            // pulled-back gradients g_a = A^-t grad(phi_a)
            let pulled: Vec<Vector3<f64>> =
                grads.iter().map(|g| inv.transpose() * g).collect();
            let mu_w = disc.params.mu * det * w;
            for (a, &na) in nodes.iter().enumerate() {
                for (b, &nb) in nodes.iter().enumerate() {
                    let dot = pulled[a].dot(&pulled[b]);
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut v = pulled[a][j] * pulled[b][i];
                            if i == j {
                                v += dot;
                            }
                            entries.push((3 * na + i, 3 * nb + j, mu_w * v));
                        }
                    }
                }
            }
        }
        entries
    })
}

/// Structure stiffness over the solid region:
///
/// ```text
/// D_ab = sum integral [ b_iajb d_b(psi_b)_j d_a(psi_a)_i
///                     + (d_a b_iajb) d_b(psi_b)_j (psi_a)_i ]
/// ```
pub fn assemble_structure_stiffness(
    disc: &Discretization,
    coeffs: &crate::constitutive::CoeffField,
    grad_coeffs: &GradCoeffField,
) -> DMatrix<f64> {
    let mesh = &disc.mesh;
    let cells: Vec<usize> = mesh.region_cells(Region::Solid).collect();
    accumulate_cells(disc.n_dofs(), &cells, |cell| {
        let detj = 6.0 * mesh.cell_volume(cell);
        let nodes = &disc.space.scalar.cell_nodes[cell];
        let mut entries = Vec::new();
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let vals = disc.space.scalar.shape_values(bary);
            let grads = disc.space.scalar.shape_gradients(mesh, cell, bary);
            let b = coeffs.at(cell, q);
            let db = grad_coeffs.at(cell, q);
            for (a, &na) in nodes.iter().enumerate() {
                for (t, &nt) in nodes.iter().enumerate() {
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut acc = 0.0;
                            for al in 0..3 {
                                for be in 0..3 {
                                    acc += b.get(i, al, j, be) * grads[t][be] * grads[a][al]
                                        + db[al].get(i, al, j, be) * grads[t][be] * vals[a];
                                }
                            }
                            entries.push((3 * na + i, 3 * nt + j, w * acc));
                        }
                    }
                }
            }
        }
        entries
    })
}

/// One quadrature point on the interface with the traces it needs.
pub struct InterfacePoint {
    pub fluid_cell: usize,
    pub solid_cell: usize,
    pub normal: Vector3<f64>,
    /// Physical weight (reference weight times twice the facet area).
    pub weight: f64,
    pub bary_fluid: [f64; 4],
    pub bary_solid: [f64; 4],
    pub position: Vector3<f64>,
}

/// Interface facets flattened to quadrature points.
pub struct InterfaceSet {
    pub points: Vec<InterfacePoint>,
    pub n_qp_per_facet: usize,
    pub n_facets: usize,
}

pub fn interface_set(disc: &Discretization) -> InterfaceSet {
    let mesh = &disc.mesh;
    let mut points = Vec::new();
    let mut n_facets = 0;
    for facet in mesh.interface_facets() {
        n_facets += 1;
        let solid = facet.solid_cell.expect("interface facet has a solid cell");
        for (q, tb) in disc.facet_rule.points.iter().enumerate() {
            let bary_fluid =
                disc.space
                    .scalar
                    .facet_bary_in_cell(mesh, facet.cell, &facet.vertices, tb);
            let bary_solid =
                disc.space
                    .scalar
                    .facet_bary_in_cell(mesh, solid, &facet.vertices, tb);
            let mut pos = Vector3::zeros();
            for (k, &v) in facet.vertices.iter().enumerate() {
                pos += tb[k] * mesh.vertices[v];
            }
            points.push(InterfacePoint {
                fluid_cell: facet.cell,
                solid_cell: solid,
                normal: facet.normal,
                weight: disc.facet_rule.weights[q] * 2.0 * facet.area,
                bary_fluid,
                bary_solid,
                position: pos,
            });
        }
    }
    InterfaceSet {
        points,
        n_qp_per_facet: disc.facet_rule.len(),
        n_facets,
    }
}

/// Interface load `integral_Gamma g . psi` for a datum sampled at the
/// interface quadrature points.
pub fn assemble_boundary_load(
    disc: &Discretization,
    ifc: &InterfaceSet,
    g: &[Vector3<f64>],
) -> DVector<f64> {
    let mut load = DVector::zeros(disc.n_dofs());
    for (pt, gv) in ifc.points.iter().zip(g) {
        let vals = disc.space.scalar.shape_values(&pt.bary_fluid);
        for (a, &n) in disc.space.scalar.cell_nodes[pt.fluid_cell].iter().enumerate() {
            for i in 0..3 {
                load[3 * n + i] += pt.weight * gv[i] * vals[a];
            }
        }
    }
    load
}

/// Project ambient operators onto the basis and bundle the ODE blocks.
pub fn assemble_operators(
    disc: &Discretization,
    basis: &DivFreeBasis,
    map_state: &MapState,
    coeffs: &crate::constitutive::CoeffField,
    grad_coeffs: &GradCoeffField,
    ifc: &InterfaceSet,
    g: &[Vector3<f64>],
) -> Result<GalerkinOperators> {
    if g.len() != ifc.points.len() {
        return Err(Error::DimensionMismatch(format!(
            "interface datum has {} samples, set has {} points",
            g.len(),
            ifc.points.len()
        )));
    }
    let b = &basis.basis;
    let mass = b.transpose() * assemble_mass(disc, map_state) * b;
    let fluid = b.transpose() * assemble_fluid_stiffness(disc, map_state) * b;
    let solid = b.transpose() * assemble_structure_stiffness(disc, coeffs, grad_coeffs) * b;
    let load = b.transpose() * assemble_boundary_load(disc, ifc, g);
    Ok(GalerkinOperators {
        mass,
        fluid_stiffness: fluid,
        structure_stiffness: solid,
        boundary_load: load,
    })
}

/// Tolerance for the interface agreement of the initial data.
pub const INTERFACE_DATA_TOL: f64 = 1e-10;

/// Merge the initial fluid velocity and structure velocity into one ambient
/// field, checking that they agree on the shared interface dofs.
pub fn merge_initial_data(
    disc: &Discretization,
    v0: &RegionField,
    xi1: &RegionField,
) -> Result<Vec<f64>> {
    v0.expect_region(Region::Fluid)?;
    xi1.expect_region(Region::Solid)?;
    let scalar = &disc.space.scalar;
    let mut out = vec![0.0; disc.n_dofs()];
    for n in 0..scalar.n_nodes() {
        let in_f = scalar.node_region[n] & crate::space::REGION_FLUID != 0;
        let in_s = scalar.node_region[n] & crate::space::REGION_SOLID != 0;
        for c in 0..3 {
            let dof = 3 * n + c;
            out[dof] = match (in_f, in_s) {
                (true, true) => {
                    let defect = (v0.values[dof] - xi1.values[dof]).abs();
                    if defect > INTERFACE_DATA_TOL {
                        return Err(Error::InterfaceMismatch { dof, defect });
                    }
                    v0.values[dof]
                }
                (true, false) => v0.values[dof],
                (false, true) => xi1.values[dof],
                (false, false) => 0.0,
            };
        }
    }
    Ok(out)
}

/// Galerkin coefficients of the initial state: solve
/// `[[gamma_n(0), psi_k]] = [[gamma_0, psi_k]]` in the weighted inner
/// product at t = 0.
pub fn project_initial(
    basis: &DivFreeBasis,
    mass_rho: &DMatrix<f64>,
    gamma0: &[f64],
) -> Result<DVector<f64>> {
    let b = &basis.basis;
    let g0 = DVector::from_column_slice(gamma0);
    let rhs = b.transpose() * mass_rho * g0;
    let gram = b.transpose() * mass_rho * b;
    gram.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or_else(|| Error::SingularSystem("projected mass not positive definite".into()))
}

/// Expand basis coefficients back to an ambient nodal field.
pub fn expand(basis: &DivFreeBasis, coeffs: &DVector<f64>) -> Vec<f64> {
    (&basis.basis * coeffs).iter().cloned().collect()
}


#[cfg(test)]
mod thread_tests {
    use super::*;
    use crate::constitutive::test_support::params;
    use crate::mesh::two_cube_mesh;

    #[test]
    fn assembly_is_invariant_to_thread_count() {
        let mesh = two_cube_mesh(2).unwrap();
        let d = Discretization::new(mesh, 2, params(1.0, 1.0, 10.0)).unwrap();
        let id = MapState::identity(&d.mesh, d.n_qp(), 0.0);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a1 = single.install(|| assemble_mass(&d, &id));
        let a4 = quad.install(|| assemble_mass(&d, &id));
        assert_eq!(a1, a4, "mass differs across thread counts");
        let s1 = single.install(|| assemble_fluid_stiffness(&d, &id));
        let s4 = quad.install(|| assemble_fluid_stiffness(&d, &id));
        assert_eq!(s1, s4, "stiffness differs across thread counts");
        let c1 = single.install(|| build_constraint(&d, &id).unwrap().matrix);
        let c4 = quad.install(|| build_constraint(&d, &id).unwrap().matrix);
        assert_eq!(c1, c4, "constraint differs across thread counts");
    }
}
