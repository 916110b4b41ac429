//! Fluid pressure recovery through the mixed formulation.
//!
//! The divergence-free solve eliminates the pressure; it is reintroduced
//! per step as the least-squares solution of the momentum residual
//!
//! ```text
//! rho_f det(grad A) dv/dt . eta + sigma0(v) : grad eta - p cof(grad A) : grad eta
//! ```
//!
//! measured in the dual norm of the full (not divergence-free) fluid test
//! space that vanishes on the inflow and interface but stays free on the
//! outflow; the traction-free outflow condition is what pins the additive
//! constant. Solvability is the discrete inf-sup property of the
//! velocity/pressure pair, measured here as a smallest singular value.

use crate::assembly::Discretization;
use crate::constitutive::fluid_stress_point;
use crate::error::{Error, Result};
use crate::kinematics::MapState;
use crate::mesh::Region;
use crate::space::{LABEL_C, LABEL_IN, REGION_FLUID};
use nalgebra::{DMatrix, DVector};

/// Recovered pressure: one value per pressure node of the fluid region.
#[derive(Debug, Clone)]
pub struct PressureField {
    /// Global scalar node ids carrying the values.
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    pub time_stamp: f64,
    /// Dual norm of the momentum residual after recovery.
    pub residual_norm: f64,
    /// Dual norm of the load the recovery started from.
    pub load_norm: f64,
}

impl PressureField {
    pub fn l2_norm(&self, disc: &Discretization) -> f64 {
        let mut index = vec![None; disc.pressure_space.n_nodes()];
        for (k, &n) in self.nodes.iter().enumerate() {
            index[n] = Some(k);
        }
        let mut acc = 0.0;
        for cell in disc.mesh.region_cells(Region::Fluid) {
            let detj = 6.0 * disc.mesh.cell_volume(cell);
            for (q, bary) in disc.rule.points.iter().enumerate() {
                let w = disc.rule.weights[q] * detj;
                let vals = disc.pressure_space.shape_values(bary);
                let mut p = 0.0;
                for (a, &n) in disc.pressure_space.cell_nodes[cell].iter().enumerate() {
                    p += self.values[index[n].expect("fluid node")] * vals[a];
                }
                acc += w * p * p;
            }
        }
        acc.sqrt()
    }
}

/// Discrete inf-sup measurement of a velocity/pressure pair.
#[derive(Debug, Clone)]
pub struct InfSupReport {
    pub beta_h: f64,
    pub velocity_degree: usize,
    pub pressure_degree: usize,
    pub n_test_dofs: usize,
    pub n_pressure_dofs: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// Default acceptance threshold on the measured constant; stable pairs on
/// desk meshes sit two orders of magnitude above it.
pub const INFSUP_THRESHOLD: f64 = 1e-4;

/// Velocity test dofs of the recovery space: supported on fluid cells,
/// zero on the inflow and the interface, free on the outflow.
fn test_dofs(disc: &Discretization) -> Vec<usize> {
    let scalar = &disc.space.scalar;
    let mut out = Vec::new();
    for n in 0..scalar.n_nodes() {
        if scalar.node_region[n] & REGION_FLUID == 0 {
            continue;
        }
        if scalar.node_labels[n] & (LABEL_IN | LABEL_C) != 0 {
            continue;
        }
        for c in 0..3 {
            out.push(3 * n + c);
        }
    }
    out
}

struct MixedMatrices {
    /// Pressure-gradient coupling, test dofs by pressure dofs.
    g: DMatrix<f64>,
    /// H1 Gram of the test space.
    k: DMatrix<f64>,
    /// L2 Gram of the pressure space.
    m_p: DMatrix<f64>,
    test: Vec<usize>,
    pressure_nodes: Vec<usize>,
}

fn mixed_matrices(disc: &Discretization, map_state: &MapState) -> MixedMatrices {
    let mesh = &disc.mesh;
    let test = test_dofs(disc);
    let mut dof_index = vec![None; disc.n_dofs()];
    for (k, &d) in test.iter().enumerate() {
        dof_index[d] = Some(k);
    }
    let pressure_nodes = disc.pressure_space.region_nodes(Region::Fluid);
    let mut pnode_index = vec![None; disc.pressure_space.n_nodes()];
    for (k, &n) in pressure_nodes.iter().enumerate() {
        pnode_index[n] = Some(k);
    }

    let mut g = DMatrix::zeros(test.len(), pressure_nodes.len());
    let mut k_mat = DMatrix::zeros(test.len(), test.len());
    let mut m_p = DMatrix::zeros(pressure_nodes.len(), pressure_nodes.len());

    for cell in mesh.region_cells(Region::Fluid) {
        let detj = 6.0 * mesh.cell_volume(cell);
        let vnodes = &disc.space.scalar.cell_nodes[cell];
        let pnodes = &disc.pressure_space.cell_nodes[cell];
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let cof = map_state.cof_flow.at(cell, q);
            let vvals = disc.space.scalar.shape_values(bary);
            let vgrads = disc.space.scalar.shape_gradients(mesh, cell, bary);
            let pvals = disc.pressure_space.shape_values(bary);

            for (a, &na) in vnodes.iter().enumerate() {
                for i in 0..3 {
                    let Some(row) = dof_index[3 * na + i] else {
                        continue;
                    };
                    // weighted divergence of the test field
                    let mut div_w = 0.0;
                    for al in 0..3 {
                        div_w += cof[(i, al)] * vgrads[a][al];
                    }
                    for (pa, &pn) in pnodes.iter().enumerate() {
                        let col = pnode_index[pn].unwrap();
                        g[(row, col)] += w * pvals[pa] * div_w;
                    }
                    for (b, &nb) in vnodes.iter().enumerate() {
                        for j in 0..3 {
                            let Some(colk) = dof_index[3 * nb + j] else {
                                continue;
                            };
                            if i == j {
                                k_mat[(row, colk)] +=
                                    w * (vvals[a] * vvals[b] + vgrads[a].dot(&vgrads[b]));
                            }
                        }
                    }
                }
            }
            for (pa, &pna) in pnodes.iter().enumerate() {
                let ra = pnode_index[pna].unwrap();
                for (pb, &pnb) in pnodes.iter().enumerate() {
                    let rb = pnode_index[pnb].unwrap();
                    m_p[(ra, rb)] += w * pvals[pa] * pvals[pb];
                }
            }
        }
    }

    MixedMatrices {
        g,
        k: k_mat,
        m_p,
        test,
        pressure_nodes,
    }
}

/// Measure the discrete inf-sup constant of the configured pair at the
/// given map state: the smallest singular value of
/// `M_p^{-1/2} B K^{-1/2}` with `B` the (weighted) divergence form.
pub fn measure_infsup(disc: &Discretization, map_state: &MapState) -> Result<InfSupReport> {
    let mm = mixed_matrices(disc, map_state);
    let n_test = mm.test.len();
    let n_p = mm.pressure_nodes.len();
    let beta_h = if n_test == 0 || n_p > n_test {
        0.0
    } else {
        let chol_k = mm
            .k
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("velocity H1 Gram".into()))?;
        let chol_p = mm
            .m_p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularSystem("pressure mass".into()))?;
        // S = R^-1 B L^-t where M_p = R R^t, K = L L^t, B = G^t
        let lk = chol_k.l();
        let bt = lk
            .solve_lower_triangular(&mm.g)
            .ok_or_else(|| Error::SingularSystem("triangular solve".into()))?;
        // bt = L^-1 G, so S^t = L^-1 G R^-t; sigma(S) = sigma(S^t)
        let rp = chol_p.l();
        let s_t = rp
            .solve_lower_triangular(&bt.transpose())
            .ok_or_else(|| Error::SingularSystem("triangular solve".into()))?;
        let svd = s_t.svd(false, false);
        svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(InfSupReport {
        beta_h,
        velocity_degree: disc.space.scalar.degree,
        pressure_degree: disc.pressure_space.degree,
        n_test_dofs: n_test,
        n_pressure_dofs: n_p,
        threshold: INFSUP_THRESHOLD,
        pass: beta_h > INFSUP_THRESHOLD,
    })
}

/// Recover the pressure from one velocity state and its time derivative.
/// Both fields are ambient nodal vectors meaningful on the fluid region.
pub fn recover_pressure(
    disc: &Discretization,
    map_state: &MapState,
    velocity: &[f64],
    velocity_rate: &[f64],
    time_stamp: f64,
) -> Result<PressureField> {
    let mm = mixed_matrices(disc, map_state);
    if mm.test.is_empty() || mm.pressure_nodes.len() > mm.test.len() {
        return Err(Error::InfSupFailure(format!(
            "{} pressure dofs against {} test dofs",
            mm.pressure_nodes.len(),
            mm.test.len()
        )));
    }

    // load: rho_f det(grad A) dv/dt . eta + sigma0(v) : grad eta
    let mesh = &disc.mesh;
    let mut dof_index = vec![None; disc.n_dofs()];
    for (k, &d) in mm.test.iter().enumerate() {
        dof_index[d] = Some(k);
    }
    let mut load = DVector::zeros(mm.test.len());
    for cell in mesh.region_cells(Region::Fluid) {
        let detj = 6.0 * mesh.cell_volume(cell);
        let vnodes = &disc.space.scalar.cell_nodes[cell];
        for (q, bary) in disc.rule.points.iter().enumerate() {
            let w = disc.rule.weights[q] * detj;
            let det = map_state.det_flow.at(cell, q);
            let inv = map_state.inv_flow.at(cell, q);
            let cof = map_state.cof_flow.at(cell, q);
            let vvals = disc.space.scalar.shape_values(bary);
            let vgrads = disc.space.scalar.shape_gradients(mesh, cell, bary);

            let accel = disc.value_at(cell, bary, velocity_rate);
            let grad_v = disc.gradient_at(cell, bary, velocity);
            let sigma = fluid_stress_point(&grad_v, 0.0, inv, cof, disc.params.mu);

            for (a, &na) in vnodes.iter().enumerate() {
                for i in 0..3 {
                    let Some(row) = dof_index[3 * na + i] else {
                        continue;
                    };
                    let mut v = disc.params.rho_f * det * accel[i] * vvals[a];
                    for al in 0..3 {
                        v += sigma[(i, al)] * vgrads[a][al];
                    }
                    load[row] += w * v;
                }
            }
        }
    }

    let chol_k = mm
        .k
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("velocity H1 Gram".into()))?;
    let kinv_l = chol_k.solve(&load);
    let kinv_g = chol_k.solve(&mm.g);
    let normal = mm.g.transpose() * &kinv_g;
    let rhs = mm.g.transpose() * &kinv_l;
    let chol_n = normal.cholesky().ok_or_else(|| {
        Error::InfSupFailure("normal equations singular (inf-sup constant vanishes)".into())
    })?;
    let p = chol_n.solve(&rhs);

    let residual = &load - &mm.g * &p;
    let residual_norm = residual.dot(&chol_k.solve(&residual)).max(0.0).sqrt();
    let load_norm = load.dot(&kinv_l).max(0.0).sqrt();

    Ok(PressureField {
        nodes: mm.pressure_nodes,
        values: p.iter().cloned().collect(),
        time_stamp,
        residual_norm,
        load_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::MaterialParams;
    use crate::mesh::two_cube_mesh;
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

    fn disc(n: usize, degree: usize) -> Discretization {
        Discretization::new(two_cube_mesh(n).unwrap(), degree, params()).unwrap()
    }

    #[test]
    fn zero_state_recovers_zero_pressure() {
        let d = disc(2, 2);
        let id = MapState::identity(&d.mesh, d.n_qp(), 0.0);
        let zeros = vec![0.0; d.n_dofs()];
        let p = recover_pressure(&d, &id, &zeros, &zeros, 0.0).unwrap();
        assert!(p.values.iter().all(|&v| v.abs() < 1e-14));
        assert!(p.residual_norm < 1e-14);
        assert_eq!(p.load_norm, 0.0);
    }

    #[test]
    fn manufactured_stokes_state_has_constant_zero_pressure() {
        // v = a (0, z, y): symmetric gradient, divergence-free, and the
        // viscous traction vanishes on the outflow plane x = 1, so the
        // exact pressure under the outflow condition is zero.
        let d = disc(2, 2);
        let id = MapState::identity(&d.mesh, d.n_qp(), 0.0);
        let mut v = vec![0.0; d.n_dofs()];
        for (n, p) in d.space.scalar.node_coords.iter().enumerate() {
            v[3 * n + 1] = 0.7 * p.z;
            v[3 * n + 2] = 0.7 * p.y;
        }
        let zeros = vec![0.0; d.n_dofs()];
        let p = recover_pressure(&d, &id, &v, &zeros, 0.0).unwrap();
        let linf = p.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(linf <= 1e-10, "pressure should vanish, got {linf}");
        assert!(p.residual_norm <= 1e-10 * p.load_norm.max(1.0));
    }

    #[test]
    fn recovery_is_linear_in_velocity_data() {
        let d = disc(2, 2);
        let id = MapState::identity(&d.mesh, d.n_qp(), 0.0);
        let mk = |f: fn(&V3<f64>) -> V3<f64>| -> Vec<f64> {
            let mut v = vec![0.0; d.n_dofs()];
            for (n, p) in d.space.scalar.node_coords.iter().enumerate() {
                let val = f(p);
                v[3 * n] = val.x;
                v[3 * n + 1] = val.y;
                v[3 * n + 2] = val.z;
            }
            v
        };
        let v1 = mk(|p| V3::new(p.y * p.z, -p.x, 0.3 * p.x * p.y));
        let v2 = mk(|p| V3::new(-0.2 * p.z, p.x * p.x, p.y));
        let sum: Vec<f64> = v1.iter().zip(&v2).map(|(a, b)| a + b).collect();
        let zeros = vec![0.0; d.n_dofs()];
        let pa = recover_pressure(&d, &id, &v1, &zeros, 0.0).unwrap();
        let pb = recover_pressure(&d, &id, &v2, &zeros, 0.0).unwrap();
        let pc = recover_pressure(&d, &id, &sum, &zeros, 0.0).unwrap();
        let scale = pc
            .values
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1.0);
        for ((a, b), c) in pa.values.iter().zip(&pb.values).zip(&pc.values) {
            assert!((a + b - c).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn taylor_hood_pair_passes_equal_order_fails() {
        let d21 = disc(2, 2);
        let id = MapState::identity(&d21.mesh, d21.n_qp(), 0.0);
        let report = measure_infsup(&d21, &id).unwrap();
        assert!(
            report.beta_h > 0.01,
            "degree-2/1 pair should be stable, beta_h = {}",
            report.beta_h
        );
        assert!(report.pass);

        let d11 = disc(2, 1);
        let id = MapState::identity(&d11.mesh, d11.n_qp(), 0.0);
        let report = measure_infsup(&d11, &id).unwrap();
        assert!(
            report.beta_h < INFSUP_THRESHOLD,
            "degree-1/1 pair should fail, beta_h = {}",
            report.beta_h
        );
        assert!(!report.pass);
    }

    #[test]
    fn equal_order_recovery_errors() {
        let d = disc(2, 1);
        let id = MapState::identity(&d.mesh, d.n_qp(), 0.0);
        let zeros = vec![0.0; d.n_dofs()];
        let mut v = zeros.clone();
        v[0] = 1.0;
        let err = recover_pressure(&d, &id, &v, &zeros, 0.0).unwrap_err();
        assert!(matches!(err, Error::InfSupFailure(_)));
    }

    #[test]
    fn beta_invariant_under_rigid_translation() {
        let d = disc(1, 2);
        let id = MapState::identity(&d.mesh, d.n_qp(), 0.0);
        let a = measure_infsup(&d, &id).unwrap().beta_h;

        let mut mesh2 = two_cube_mesh(1).unwrap();
        for v in &mut mesh2.vertices {
            *v += V3::new(3.0, -1.0, 0.5);
        }
        let d2 = Discretization::new(mesh2, 2, params()).unwrap();
        let id2 = MapState::identity(&d2.mesh, d2.n_qp(), 0.0);
        let b = measure_infsup(&d2, &id2).unwrap().beta_h;
        assert!((a - b).abs() <= 1e-12 * a.max(1e-12), "{a} vs {b}");
    }

    #[test]
    fn refining_mesh_changes_beta_mildly() {
        let id1 = disc(2, 2);
        let m1 = MapState::identity(&id1.mesh, id1.n_qp(), 0.0);
        let a = measure_infsup(&id1, &m1).unwrap().beta_h;
        let id2 = disc(3, 2);
        let m2 = MapState::identity(&id2.mesh, id2.n_qp(), 0.0);
        let b = measure_infsup(&id2, &m2).unwrap().beta_h;
        assert!(a > 0.0 && b > 0.0);
        let change = (a - b).abs() / a.max(b);
        assert!(change < 0.5, "beta jumped by {change} across refinement");
    }
}
