//! Discrete fields: nodal vector fields attached to a region and
//! quadrature-point tensor/scalar fields laid out cell-major.

use crate::error::{Error, Result};
use crate::mesh::{ReferenceMesh, Region};
use crate::quadrature::QuadratureRule;
use crate::space::ScalarSpace;
use nalgebra::{Matrix3, Vector3};

/// Nodal vector field (ambient length, 3 entries per scalar node) tagged
/// with the region it is meaningful on. Entries at nodes outside the region
/// are zero.
#[derive(Debug, Clone)]
pub struct RegionField {
    pub region: Region,
    pub values: Vec<f64>,
}

impl RegionField {
    pub fn zeros(space_nodes: usize, region: Region) -> Self {
        RegionField {
            region,
            values: vec![0.0; 3 * space_nodes],
        }
    }

    /// Fill from a pointwise function, restricted to nodes of the region.
    pub fn from_fn(
        space: &ScalarSpace,
        region: Region,
        f: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    ) -> Self {
        let mut values = vec![0.0; 3 * space.n_nodes()];
        let bit = match region {
            Region::Fluid => crate::space::REGION_FLUID,
            Region::Solid => crate::space::REGION_SOLID,
        };
        for (n, coord) in space.node_coords.iter().enumerate() {
            if space.node_region[n] & bit != 0 {
                let v = f(coord);
                values[3 * n] = v.x;
                values[3 * n + 1] = v.y;
                values[3 * n + 2] = v.z;
            }
        }
        RegionField { region, values }
    }

    pub fn expect_region(&self, want: Region) -> Result<()> {
        if self.region != want {
            return Err(Error::RegionMismatch {
                expected: want.to_string(),
                got: self.region.to_string(),
            });
        }
        Ok(())
    }
}

/// Time history of an ambient nodal field sampled on a monotone grid
/// starting at t = 0.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    pub times: Vec<f64>,
    pub snapshots: Vec<Vec<f64>>,
    /// Largest admissible gap between consecutive samples.
    pub max_gap: f64,
}

impl FieldHistory {
    pub fn new(times: Vec<f64>, snapshots: Vec<Vec<f64>>, max_gap: f64) -> Result<Self> {
        if times.is_empty() || times.len() != snapshots.len() {
            return Err(Error::DimensionMismatch(format!(
                "history with {} times and {} snapshots",
                times.len(),
                snapshots.len()
            )));
        }
        if times[0].abs() > 1e-14 {
            return Err(Error::HistoryNotFromZero(times[0]));
        }
        for i in 1..times.len() {
            let gap = times[i] - times[i - 1];
            if gap <= 0.0 || gap > max_gap * (1.0 + 1e-9) {
                return Err(Error::HistoryGap {
                    index: i,
                    gap,
                    max_gap,
                });
            }
        }
        Ok(FieldHistory {
            times,
            snapshots,
            max_gap,
        })
    }

    /// Constant-in-time history over [0, t_end].
    pub fn constant(values: Vec<f64>, t_end: f64, dt: f64) -> Self {
        let n = ((t_end / dt).round() as usize).max(1);
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let snapshots = vec![values; n + 1];
        FieldHistory {
            times,
            snapshots,
            max_gap: dt,
        }
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    fn locate(&self, t: f64) -> Result<usize> {
        if t < -1e-14 || t > self.t_end() + 1e-12 {
            return Err(Error::TimeOutsideHistory {
                t,
                t_end: self.t_end(),
            });
        }
        let mut i = 0;
        while i + 1 < self.times.len() && self.times[i + 1] <= t + 1e-14 {
            i += 1;
        }
        Ok(i)
    }

    /// Linear-in-time interpolation.
    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        let i = self.locate(t)?;
        if i + 1 == self.times.len() || (t - self.times[i]).abs() < 1e-14 {
            return Ok(self.snapshots[i].clone());
        }
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok(self.snapshots[i]
            .iter()
            .zip(&self.snapshots[i + 1])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect())
    }

    /// Trapezoidal time integral over [0, t].
    pub fn integral_to(&self, t: f64) -> Result<Vec<f64>> {
        let i = self.locate(t)?;
        let n = self.snapshots[0].len();
        let mut acc = vec![0.0; n];
        for k in 0..i {
            let w = 0.5 * (self.times[k + 1] - self.times[k]);
            for (a, (x, y)) in acc
                .iter_mut()
                .zip(self.snapshots[k].iter().zip(&self.snapshots[k + 1]))
            {
                *a += w * (x + y);
            }
        }
        let rem = t - self.times[i];
        if rem > 1e-14 {
            // partial trapezoid with the linear interpolant at t
            let end = self.value_at(t)?;
            let w = 0.5 * rem;
            for (a, (x, y)) in acc.iter_mut().zip(self.snapshots[i].iter().zip(&end)) {
                *a += w * (x + y);
            }
        }
        Ok(acc)
    }
}

/// One 3x3 matrix per (cell, quadrature point), cell-major.
#[derive(Debug, Clone)]
pub struct TensorField {
    pub values: Vec<Matrix3<f64>>,
    pub n_qp: usize,
    pub time_stamp: f64,
}

impl TensorField {
    pub fn constant(mesh: &ReferenceMesh, n_qp: usize, m: Matrix3<f64>, time_stamp: f64) -> Self {
        TensorField {
            values: vec![m; mesh.n_cells() * n_qp],
            n_qp,
            time_stamp,
        }
    }

    pub fn at(&self, cell: usize, qp: usize) -> &Matrix3<f64> {
        &self.values[cell * self.n_qp + qp]
    }

    pub fn at_mut(&mut self, cell: usize, qp: usize) -> &mut Matrix3<f64> {
        &mut self.values[cell * self.n_qp + qp]
    }

    pub fn map(&self, f: impl Fn(&Matrix3<f64>) -> Matrix3<f64>) -> TensorField {
        TensorField {
            values: self.values.iter().map(f).collect(),
            n_qp: self.n_qp,
            time_stamp: self.time_stamp,
        }
    }
}

/// One scalar per (cell, quadrature point), cell-major.
#[derive(Debug, Clone)]
pub struct ScalarQpField {
    pub values: Vec<f64>,
    pub n_qp: usize,
    pub time_stamp: f64,
}

impl ScalarQpField {
    pub fn at(&self, cell: usize, qp: usize) -> f64 {
        self.values[cell * self.n_qp + qp]
    }
}

/// Gradient of an ambient nodal vector field at the quadrature points of
/// every cell: row i, column j holds the j-derivative of component i.
pub fn gradient_at_qps(
    mesh: &ReferenceMesh,
    space: &ScalarSpace,
    values: &[f64],
    rule: &QuadratureRule,
    time_stamp: f64,
) -> TensorField {
    let n_qp = rule.len();
    let mut out = TensorField::constant(mesh, n_qp, Matrix3::zeros(), time_stamp);
    for cell in 0..mesh.n_cells() {
        let nodes = &space.cell_nodes[cell];
        for (q, bary) in rule.points.iter().enumerate() {
            let grads = space.shape_gradients(mesh, cell, bary);
            let mut g = Matrix3::zeros();
            for (a, &n) in nodes.iter().enumerate() {
                for i in 0..3 {
                    let u = values[3 * n + i];
                    for j in 0..3 {
                        g[(i, j)] += u * grads[a][j];
                    }
                }
            }
            *out.at_mut(cell, q) = g;
        }
    }
    out
}

/// Values of an ambient nodal vector field at the quadrature points.
pub fn values_at_qps(
    mesh: &ReferenceMesh,
    space: &ScalarSpace,
    values: &[f64],
    rule: &QuadratureRule,
) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(mesh.n_cells() * rule.len());
    for cell in 0..mesh.n_cells() {
        let nodes = &space.cell_nodes[cell];
        for bary in &rule.points {
            let vals = space.shape_values(bary);
            let mut v = Vector3::zeros();
            for (a, &n) in nodes.iter().enumerate() {
                v.x += values[3 * n] * vals[a];
                v.y += values[3 * n + 1] * vals[a];
                v.z += values[3 * n + 2] * vals[a];
            }
            out.push(v);
        }
    }
    out
}
