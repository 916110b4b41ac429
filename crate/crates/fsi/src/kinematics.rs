//! Flow map and deformation kinematics: gradients, determinants, cofactors
//! and inverses of the maps that carry the reference configuration to the
//! current one.
//!
//! The flow map is `A(x,t) = x + integral_0^t v(x,s) ds` with the time
//! integral taken by the trapezoidal rule over the stored velocity history;
//! the deformation is `phi(x,t) = x + xi(x,t)`. Everything downstream only
//! ever sees their gradients at quadrature points.

use crate::error::{Error, Result};
use crate::fields::{gradient_at_qps, FieldHistory, RegionField, ScalarQpField, TensorField};
use crate::mesh::{ReferenceMesh, Region};
use crate::quadrature::QuadratureRule;
use crate::space::ScalarSpace;
use nalgebra::Matrix3;

/// Levi-Civita symbol for indices in {0, 1, 2}.
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Determinant through the orientation-tensor contraction
/// `det F = 1/6 e_ijk e_pqr F_ip F_jq F_kr`.
pub fn det_levi_civita(f: &Matrix3<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let eijk = levi_civita(i, j, k);
                if eijk == 0.0 {
                    continue;
                }
                for p in 0..3 {
                    for q in 0..3 {
                        for r in 0..3 {
                            let epqr = levi_civita(p, q, r);
                            if epqr == 0.0 {
                                continue;
                            }
                            acc += eijk * epqr * f[(i, p)] * f[(j, q)] * f[(k, r)];
                        }
                    }
                }
            }
        }
    }
    acc / 6.0
}

/// Cofactor matrix `(cof F)_ij = 1/2 e_mni e_pqj F_mp F_nq`, equal to
/// `det(F) F^{-T}` for invertible F.
pub fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for m in 0..3 {
                for n in 0..3 {
                    let emni = levi_civita(m, n, i);
                    if emni == 0.0 {
                        continue;
                    }
                    for p in 0..3 {
                        for q in 0..3 {
                            let epqj = levi_civita(p, q, j);
                            if epqj == 0.0 {
                                continue;
                            }
                            acc += emni * epqj * f[(m, p)] * f[(n, q)];
                        }
                    }
                }
            }
            c[(i, j)] = acc / 2.0;
        }
    }
    c
}

/// Directional derivative of the cofactor: `d/ds cof(F + sG)|_0`.
pub fn cofactor_derivative(f: &Matrix3<f64>, g: &Matrix3<f64>) -> Matrix3<f64> {
    let mut c = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for m in 0..3 {
                for n in 0..3 {
                    let emni = levi_civita(m, n, i);
                    if emni == 0.0 {
                        continue;
                    }
                    for p in 0..3 {
                        for q in 0..3 {
                            let epqj = levi_civita(p, q, j);
                            if epqj == 0.0 {
                                continue;
                            }
                            acc += emni * epqj * f[(m, p)] * g[(n, q)];
                        }
                    }
                }
            }
            c[(i, j)] = acc;
        }
    }
    c
}

/// Per-point determinants of a tensor field.
pub fn determinant_field(f: &TensorField) -> ScalarQpField {
    ScalarQpField {
        values: f.values.iter().map(det_levi_civita).collect(),
        n_qp: f.n_qp,
        time_stamp: f.time_stamp,
    }
}

/// Per-point cofactors of a tensor field.
pub fn cofactor_field(f: &TensorField) -> TensorField {
    f.map(cofactor)
}

/// Per-point inverse, rejecting points whose determinant falls below
/// `det_floor`. The error carries the worst offending point.
pub fn inverse_field(f: &TensorField, det_floor: f64) -> Result<TensorField> {
    let n_qp = f.n_qp;
    let mut worst = (f64::INFINITY, 0usize, 0usize);
    let mut values = Vec::with_capacity(f.values.len());
    for (idx, m) in f.values.iter().enumerate() {
        let det = det_levi_civita(m);
        if det < worst.0 {
            worst = (det, idx / n_qp, idx % n_qp);
        }
        values.push(cofactor(m).transpose() / det);
    }
    if worst.0 <= det_floor {
        return Err(Error::DetFloor {
            det: worst.0,
            floor: det_floor,
            cell: worst.1,
            point: worst.2,
        });
    }
    Ok(TensorField {
        values,
        n_qp,
        time_stamp: f.time_stamp,
    })
}

/// Discrete flow and deformation state at one time: gradients,
/// determinants, cofactors and the flow-map inverse at every quadrature
/// point. Off-region cells hold the identity.
#[derive(Debug, Clone)]
pub struct MapState {
    pub flow_map_grad: TensorField,
    pub defo_grad: TensorField,
    pub det_flow: ScalarQpField,
    pub det_defo: ScalarQpField,
    pub cof_flow: TensorField,
    pub cof_defo: TensorField,
    pub inv_flow: TensorField,
    pub time_stamp: f64,
}

impl MapState {
    pub fn new(flow_map_grad: TensorField, defo_grad: TensorField, det_floor: f64) -> Result<Self> {
        let time_stamp = flow_map_grad.time_stamp;
        let det_flow = determinant_field(&flow_map_grad);
        let det_defo = determinant_field(&defo_grad);
        let cof_flow = cofactor_field(&flow_map_grad);
        let cof_defo = cofactor_field(&defo_grad);
        let inv_flow = inverse_field(&flow_map_grad, det_floor)?;
        for (idx, &d) in det_defo.values.iter().enumerate() {
            if d <= det_floor {
                return Err(Error::DetFloor {
                    det: d,
                    floor: det_floor,
                    cell: idx / defo_grad.n_qp,
                    point: idx % defo_grad.n_qp,
                });
            }
        }
        Ok(MapState {
            flow_map_grad,
            defo_grad,
            det_flow,
            det_defo,
            cof_flow,
            cof_defo,
            inv_flow,
            time_stamp,
        })
    }

    /// Identity maps everywhere (the state at t = 0).
    pub fn identity(mesh: &ReferenceMesh, n_qp: usize, time_stamp: f64) -> Self {
        let id = TensorField::constant(mesh, n_qp, Matrix3::identity(), time_stamp);
        MapState::new(id.clone(), id, 0.0).expect("identity maps are invertible")
    }
}

/// Gradient of the flow map `Id + grad integral_0^t v ds` at the quadrature
/// points. Cells outside the fluid region hold the identity.
pub fn build_flow_map(
    mesh: &ReferenceMesh,
    space: &ScalarSpace,
    velocity_history: &FieldHistory,
    t: f64,
    rule: &QuadratureRule,
) -> Result<TensorField> {
    if t < -1e-14 {
        return Err(Error::TimeOutsideHistory {
            t,
            t_end: velocity_history.t_end(),
        });
    }
    let displacement = velocity_history.integral_to(t)?;
    let grad = gradient_at_qps(mesh, space, &displacement, rule, t);
    let mut out = TensorField::constant(mesh, rule.len(), Matrix3::identity(), t);
    for cell in mesh.region_cells(Region::Fluid) {
        for q in 0..rule.len() {
            *out.at_mut(cell, q) = Matrix3::identity() + grad.at(cell, q);
        }
    }
    Ok(out)
}

/// Gradient of the structure deformation `Id + grad xi` at the quadrature
/// points. Cells outside the solid region hold the identity.
pub fn build_deformation(
    mesh: &ReferenceMesh,
    space: &ScalarSpace,
    displacement: &RegionField,
    rule: &QuadratureRule,
    time_stamp: f64,
) -> Result<TensorField> {
    displacement.expect_region(Region::Solid)?;
    let grad = gradient_at_qps(mesh, space, &displacement.values, rule, time_stamp);
    let mut out = TensorField::constant(mesh, rule.len(), Matrix3::identity(), time_stamp);
    for cell in mesh.region_cells(Region::Solid) {
        for q in 0..rule.len() {
            *out.at_mut(cell, q) = Matrix3::identity() + grad.at(cell, q);
        }
    }
    Ok(out)
}

/// Report of the minimum determinant over all points of both maps.
#[derive(Debug, Clone)]
pub struct DetFloorReport {
    pub min_det: f64,
    pub region: Region,
    pub cell: usize,
    pub point: usize,
    pub time: f64,
    pub floor: f64,
    pub flagged: bool,
}

/// Inspect both map determinants without ever failing; solvers act on the
/// flag.
pub fn det_floor_monitor(state: &MapState, floor: f64) -> DetFloorReport {
    let mut report = DetFloorReport {
        min_det: f64::INFINITY,
        region: Region::Fluid,
        cell: 0,
        point: 0,
        time: state.time_stamp,
        floor,
        flagged: false,
    };
    for (region, dets) in [
        (Region::Fluid, &state.det_flow),
        (Region::Solid, &state.det_defo),
    ] {
        for (idx, &d) in dets.values.iter().enumerate() {
            if d < report.min_det {
                report.min_det = d;
                report.region = region;
                report.cell = idx / dets.n_qp;
                report.point = idx % dets.n_qp;
            }
        }
    }
    report.flagged = report.min_det < floor;
    report
}
