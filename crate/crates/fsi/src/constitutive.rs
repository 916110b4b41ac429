//! Constitutive formulas: Green-Lagrange strain, the Saint Venant-Kirchhoff
//! Piola tensors, the quasi-incompressibility penalty, the fluid stress in
//! the reference configuration, and the coefficient tensors
//!
//! ```text
//! c_iajb = dP_ia / dH_jb                      (elastic tangent)
//! d_iajb = d[(det F - 1) cof F]_ia / dH_jb    (penalty tangent)
//! b_iajb = c_iajb + C d_iajb
//! ```
//!
//! where `H = grad xi` is the displacement gradient (row = component,
//! column = derivative direction) and `F = Id + H`. All tangents are
//! evaluated analytically; finite differences appear only in test oracles.

use crate::error::{Error, Result};
use crate::fields::{RegionField, ScalarQpField, TensorField};
use crate::kinematics::{cofactor, cofactor_derivative, det_levi_civita, levi_civita, MapState};
use crate::mesh::{ReferenceMesh, Region};
use crate::quadrature::QuadratureRule;
use crate::space::ScalarSpace;
use nalgebra::{Matrix3, Vector3};

/// Physical constants of the coupled problem.
#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    /// Fluid density.
    pub rho_f: f64,
    /// Structure density.
    pub rho_s: f64,
    /// Fluid dynamic viscosity.
    pub mu: f64,
    /// First Lame coefficient (shear modulus) of the structure.
    pub mu_s: f64,
    /// Second Lame coefficient of the structure.
    pub lambda_s: f64,
    /// Quasi-incompressibility penalty constant.
    pub c_penalty: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_f", self.rho_f),
            ("rho_s", self.rho_s),
            ("mu", self.mu),
            ("mu_s", self.mu_s),
            ("c_penalty", self.c_penalty),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.lambda_s >= 0.0) {
            return Err(Error::config(
                "lambda_s",
                format!("must be >= 0, got {}", self.lambda_s),
            ));
        }
        Ok(())
    }
}

/// Green-Lagrange strain `E(F) = ((F^t F) - Id) / 2`.
pub fn green_lagrange(f: &Matrix3<f64>) -> Matrix3<f64> {
    (f.transpose() * f - Matrix3::identity()) * 0.5
}

/// Second Piola-Kirchhoff tensor `S = 2 mu_s E + lambda_s tr(E) Id`.
pub fn second_piola(f: &Matrix3<f64>, p: &MaterialParams) -> Matrix3<f64> {
    let e = green_lagrange(f);
    2.0 * p.mu_s * e + p.lambda_s * e.trace() * Matrix3::identity()
}

/// First Piola-Kirchhoff tensor in terms of the displacement gradient:
///
/// ```text
/// P(H) = (Id + H)(mu_s (H + H^t + H^t H) + lambda_s/2 (2 tr H + |H|^2) Id)
/// ```
///
/// with `|H|` the Frobenius norm. Algebraically equal to `F S(F)`.
pub fn first_piola(h: &Matrix3<f64>, p: &MaterialParams) -> Matrix3<f64> {
    let f = Matrix3::identity() + h;
    let inner = p.mu_s * (h + h.transpose() + h.transpose() * h)
        + 0.5 * p.lambda_s * (2.0 * h.trace() + h.norm_squared()) * Matrix3::identity();
    f * inner
}

/// Penalty stress `(det F - 1) cof F` with `F = Id + H`.
pub fn penalty_stress(h: &Matrix3<f64>) -> Matrix3<f64> {
    let f = Matrix3::identity() + h;
    (det_levi_civita(&f) - 1.0) * cofactor(&f)
}

/// 81 coefficients indexed (i, alpha, j, beta), all in {0, 1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs81(pub [f64; 81]);

#[inline]
pub const fn cidx(i: usize, a: usize, j: usize, b: usize) -> usize {
    ((i * 3 + a) * 3 + j) * 3 + b
}

impl Coeffs81 {
    pub fn zeros() -> Self {
        Coeffs81([0.0; 81])
    }

    #[inline]
    pub fn get(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        self.0[cidx(i, a, j, b)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, a: usize, j: usize, b: usize, v: f64) {
        self.0[cidx(i, a, j, b)] = v;
    }

    pub fn add(&mut self, other: &Coeffs81) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scaled(&self, s: f64) -> Coeffs81 {
        let mut out = self.clone();
        for v in out.0.iter_mut() {
            *v *= s;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `sum_iajb coeff_iajb A_jb B_ia`.
    pub fn contract(&self, a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for al in 0..3 {
                for j in 0..3 {
                    for be in 0..3 {
                        acc += self.get(i, al, j, be) * a[(j, be)] * b[(i, al)];
                    }
                }
            }
        }
        acc
    }

    /// `(sum_jb coeff_iajb G_jb)_ia`.
    pub fn apply(&self, g: &Matrix3<f64>) -> Matrix3<f64> {
        let mut out = Matrix3::zeros();
        for i in 0..3 {
            for al in 0..3 {
                let mut acc = 0.0;
                for j in 0..3 {
                    for be in 0..3 {
                        acc += self.get(i, al, j, be) * g[(j, be)];
                    }
                }
                out[(i, al)] = acc;
            }
        }
        out
    }
}

/// Coefficient tensor split by polynomial degree in the displacement
/// gradient. The solver consumes `total()`; the parts stay around for
/// bookkeeping.
#[derive(Debug, Clone)]
pub struct CoeffSplit {
    pub constant: Coeffs81,
    /// Degree-k parts in ascending degree (1, 2 for the elastic tangent;
    /// 1..4 for the penalty tangent).
    pub parts: Vec<Coeffs81>,
}

impl CoeffSplit {
    pub fn total(&self) -> Coeffs81 {
        let mut out = self.constant.clone();
        for p in &self.parts {
            out.add(p);
        }
        out
    }
}

fn kron(a: usize, b: usize) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Elastic tangent `c(H)`: constant + linear + quadratic parts.
pub fn svk_coefficients(h: &Matrix3<f64>, p: &MaterialParams) -> CoeffSplit {
    let mut constant = Coeffs81::zeros();
    let mut linear = Coeffs81::zeros();
    let tr = h.trace();
    for i in 0..3 {
        for al in 0..3 {
            for j in 0..3 {
                for be in 0..3 {
                    constant.set(
                        i,
                        al,
                        j,
                        be,
                        p.mu_s * (kron(be, i) * kron(al, j) + kron(al, be) * kron(i, j))
                            + p.lambda_s * kron(i, al) * kron(j, be),
                    );
                    let lin = p.mu_s
                        * (kron(i, j) * h[(al, be)]
                            + kron(al, j) * h[(i, be)]
                            + kron(i, j) * h[(be, al)]
                            + kron(al, be) * h[(i, j)]
                            + kron(i, be) * h[(j, al)]
                            + kron(al, be) * h[(j, i)])
                        + p.lambda_s
                            * (kron(i, al) * h[(j, be)]
                                + kron(al, be) * kron(i, j) * tr
                                + kron(j, be) * h[(i, al)]);
                    linear.set(i, al, j, be, lin);
                }
            }
        }
    }
    let quadratic = svk_quadratic_bilinear(h, h, p);
    CoeffSplit {
        constant,
        parts: vec![linear, quadratic],
    }
}

/// Symmetric bilinear form behind the quadratic part of the elastic
/// tangent; `svk_quadratic_bilinear(H, H) = c^q(H)`.
fn svk_quadratic_bilinear(h1: &Matrix3<f64>, h2: &Matrix3<f64>, p: &MaterialParams) -> Coeffs81 {
    let mut out = Coeffs81::zeros();
    let dot = |a: &Matrix3<f64>, b: &Matrix3<f64>| {
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                acc += a[(r, c)] * b[(r, c)];
            }
        }
        acc
    };
    let frob = dot(h1, h2);
    for i in 0..3 {
        for al in 0..3 {
            for j in 0..3 {
                for be in 0..3 {
                    // column-column product: sum_m H_mb H_ma
                    let col: f64 = (0..3)
                        .map(|m| 0.5 * (h1[(m, be)] * h2[(m, al)] + h2[(m, be)] * h1[(m, al)]))
                        .sum();
                    // row-row product: sum_k H_ik H_jk
                    let row: f64 = (0..3)
                        .map(|k| 0.5 * (h1[(i, k)] * h2[(j, k)] + h2[(i, k)] * h1[(j, k)]))
                        .sum();
                    let cross = 0.5 * (h1[(i, be)] * h2[(j, al)] + h2[(i, be)] * h1[(j, al)]);
                    let lam = 0.5 * (h1[(i, al)] * h2[(j, be)] + h2[(i, al)] * h1[(j, be)]);
                    out.set(
                        i,
                        al,
                        j,
                        be,
                        p.mu_s * (kron(i, j) * col + cross + kron(al, be) * row)
                            + p.lambda_s * (0.5 * kron(i, j) * kron(al, be) * frob + lam),
                    );
                }
            }
        }
    }
    out
}

/// Directional derivative `(d/ds) c(H + sG)|_0`.
pub fn svk_directional(h: &Matrix3<f64>, g: &Matrix3<f64>, p: &MaterialParams) -> Coeffs81 {
    // constant part drops, linear part is linear, quadratic part is a
    // symmetric bilinear form
    let lin_at_g = {
        let split = svk_coefficients(g, p);
        split.parts[0].clone()
    };
    let mut out = lin_at_g;
    out.add(&svk_quadratic_bilinear(h, g, p).scaled(2.0));
    out
}

/// `K(F)_iajb = e_jni e_bqa F_nq`, the tangent of the cofactor map.
fn cof_tangent(f: &Matrix3<f64>) -> Coeffs81 {
    let mut out = Coeffs81::zeros();
    for i in 0..3 {
        for al in 0..3 {
            for j in 0..3 {
                for be in 0..3 {
                    let mut acc = 0.0;
                    for n in 0..3 {
                        let e1 = levi_civita(j, n, i);
                        if e1 == 0.0 {
                            continue;
                        }
                        for q in 0..3 {
                            let e2 = levi_civita(be, q, al);
                            if e2 != 0.0 {
                                acc += e1 * e2 * f[(n, q)];
                            }
                        }
                    }
                    out.set(i, al, j, be, acc);
                }
            }
        }
    }
    out
}

fn outer81(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Coeffs81 {
    // out_iajb = a_jb * b_ia
    let mut out = Coeffs81::zeros();
    for i in 0..3 {
        for al in 0..3 {
            for j in 0..3 {
                for be in 0..3 {
                    out.set(i, al, j, be, a[(j, be)] * b[(i, al)]);
                }
            }
        }
    }
    out
}

/// Penalty tangent `d(H)`, a polynomial of degree at most 4 in H, split by
/// degree: `d = Cst + d^L + d^Q + d^T + d^F`.
pub fn quasi_inc_coefficients(h: &Matrix3<f64>) -> CoeffSplit {
    let id = Matrix3::identity();
    // cof(Id + H) = Id + (tr H Id - H^t) + cof H
    let c1 = h.trace() * id - h.transpose();
    let c2 = cofactor(h);
    // det(Id + H) - 1 = e1 + e2 + e3
    let e1 = h.trace();
    let e2 = 0.5 * (h.trace() * h.trace() - (h * h).trace());
    let e3 = det_levi_civita(h);
    let k_id = cof_tangent(&id);
    let k_h = cof_tangent(h);

    let constant = outer81(&id, &id);

    let mut deg1 = outer81(&id, &c1);
    deg1.add(&outer81(&c1, &id));
    deg1.add(&k_id.scaled(e1));

    let mut deg2 = outer81(&id, &c2);
    deg2.add(&outer81(&c1, &c1));
    deg2.add(&outer81(&c2, &id));
    deg2.add(&k_h.scaled(e1));
    deg2.add(&k_id.scaled(e2));

    let mut deg3 = outer81(&c1, &c2);
    deg3.add(&outer81(&c2, &c1));
    deg3.add(&k_h.scaled(e2));
    deg3.add(&k_id.scaled(e3));

    let mut deg4 = outer81(&c2, &c2);
    deg4.add(&k_h.scaled(e3));

    CoeffSplit {
        constant,
        parts: vec![deg1, deg2, deg3, deg4],
    }
}

/// Directional derivative `(d/ds) d(H + sG)|_0`.
pub fn quasi_inc_directional(h: &Matrix3<f64>, g: &Matrix3<f64>) -> Coeffs81 {
    let f = Matrix3::identity() + h;
    let cof_f = cofactor(&f);
    let dcof = cofactor_derivative(&f, g);
    let det = det_levi_civita(&f);
    let ddet: f64 = {
        let mut acc = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                acc += cof_f[(r, c)] * g[(r, c)];
            }
        }
        acc
    };
    let mut out = outer81(&dcof, &cof_f);
    out.add(&outer81(&cof_f, &dcof));
    out.add(&cof_tangent(&f).scaled(ddet));
    out.add(&cof_tangent(g).scaled(det - 1.0));
    out
}

/// Combined tangent `b = c + C d` (summed form).
pub fn combined_coefficients(h: &Matrix3<f64>, p: &MaterialParams) -> Coeffs81 {
    let mut out = svk_coefficients(h, p).total();
    out.add(&quasi_inc_coefficients(h).total().scaled(p.c_penalty));
    out
}

/// Directional derivative of the combined tangent.
pub fn combined_directional(h: &Matrix3<f64>, g: &Matrix3<f64>, p: &MaterialParams) -> Coeffs81 {
    let mut out = svk_directional(h, g, p);
    out.add(&quasi_inc_directional(h, g).scaled(p.c_penalty));
    out
}

/// Coefficient tensor values at the quadrature points of every cell
/// (identity split off; off-region cells hold zeros).
#[derive(Debug, Clone)]
pub struct CoeffField {
    pub values: Vec<Coeffs81>,
    pub n_qp: usize,
    pub time_stamp: f64,
}

impl CoeffField {
    pub fn at(&self, cell: usize, qp: usize) -> &Coeffs81 {
        &self.values[cell * self.n_qp + qp]
    }
}

/// Evaluate the combined tangent from a displacement-gradient field over
/// the solid region.
pub fn combined_coefficient_field(
    defo_minus_id: &TensorField,
    mesh: &ReferenceMesh,
    p: &MaterialParams,
) -> CoeffField {
    let n_qp = defo_minus_id.n_qp;
    let mut values = vec![Coeffs81::zeros(); mesh.n_cells() * n_qp];
    for cell in mesh.region_cells(Region::Solid) {
        for q in 0..n_qp {
            values[cell * n_qp + q] = combined_coefficients(defo_minus_id.at(cell, q), p);
        }
    }
    CoeffField {
        values,
        n_qp,
        time_stamp: defo_minus_id.time_stamp,
    }
}

/// Strong-form divergence of the elastic stress,
/// `(div P)_i = sum_ajb coeff_iajb(grad xi) d2_ab xi_j`, at the quadrature
/// points of the solid cells. Requires a degree >= 2 displacement space.
pub fn piola_divergence(
    mesh: &ReferenceMesh,
    space: &ScalarSpace,
    coeffs: &CoeffField,
    xi: &RegionField,
    rule: &QuadratureRule,
) -> Result<Vec<Vector3<f64>>> {
    xi.expect_region(Region::Solid)?;
    if space.degree < 2 {
        return Err(Error::DegreeTooLowForStrongForm(space.degree));
    }
    if coeffs.n_qp != rule.len() {
        return Err(Error::DimensionMismatch(
            "coefficient field and rule disagree on point count".into(),
        ));
    }
    let mut out = vec![Vector3::zeros(); mesh.n_cells() * rule.len()];
    for cell in mesh.region_cells(Region::Solid) {
        let hessians = space.shape_hessians(mesh, cell);
        let nodes = &space.cell_nodes[cell];
        // second derivatives of the displacement, constant per cell
        let mut d2 = [[Matrix3::zeros(); 1]; 3];
        for j in 0..3 {
            let mut acc = Matrix3::zeros();
            for (a, &n) in nodes.iter().enumerate() {
                acc += xi.values[3 * n + j] * hessians[a];
            }
            d2[j][0] = acc;
        }
        for q in 0..rule.len() {
            let c = coeffs.at(cell, q);
            let mut v = Vector3::zeros();
            for i in 0..3 {
                let mut acc = 0.0;
                for al in 0..3 {
                    for j in 0..3 {
                        for be in 0..3 {
                            acc += c.get(i, al, j, be) * d2[j][0][(al, be)];
                        }
                    }
                }
                v[i] = acc;
            }
            out[cell * rule.len() + q] = v;
        }
    }
    Ok(out)
}

/// One time sample for the traction reconstruction: the coefficient tensor
/// and the time derivative of the displacement gradient, both at the facet
/// quadrature points.
#[derive(Debug, Clone)]
pub struct TractionSample {
    pub time: f64,
    pub coeffs: Vec<Coeffs81>,
    pub grad_rate: Vec<Matrix3<f64>>,
}

/// Reconstruct `sum_a P_ia n_a` on a facet set from the accumulated form
/// `sum_ajb (integral_0^t coeff_iajb d2_sb xi_j ds) n_a`, integrating the
/// history by the trapezoidal rule. The reconstruction assumes zero initial
/// traction, which holds when `xi(., 0) = 0`; the caller passes the initial
/// displacement gradients for the check.
pub fn boundary_traction_integral(
    initial_grad: &[Matrix3<f64>],
    history: &[TractionSample],
    normals: &[Vector3<f64>],
) -> Result<Vec<Vector3<f64>>> {
    let first = history
        .first()
        .ok_or_else(|| Error::DimensionMismatch("empty traction history".into()))?;
    if first.time.abs() > 1e-14 {
        return Err(Error::HistoryNotFromZero(first.time));
    }
    let worst = initial_grad
        .iter()
        .fold(0.0f64, |m, g| m.max(g.norm()));
    if worst > 1e-12 {
        return Err(Error::NonzeroInitialDatum(worst));
    }
    let n_pts = normals.len();
    let mut acc = vec![Matrix3::zeros(); n_pts];
    for w in history.windows(2) {
        let dt = w[1].time - w[0].time;
        for pt in 0..n_pts {
            // trapezoid on coeff * grad_rate
            let a = w[0].coeffs[pt].apply(&w[0].grad_rate[pt]);
            let b = w[1].coeffs[pt].apply(&w[1].grad_rate[pt]);
            acc[pt] += 0.5 * dt * (a + b);
        }
    }
    Ok(acc
        .iter()
        .zip(normals)
        .map(|(p, n)| p * n)
        .collect())
}

/// Pointwise fluid stress in the reference configuration:
///
/// ```text
/// sigma0(v, p) = (mu (grad_v A^-1 + A^-t grad_v^t) - p Id) cof(A)
/// ```
///
/// With `p = 0` this is the viscous part alone.
pub fn fluid_stress_point(
    grad_v: &Matrix3<f64>,
    p_value: f64,
    inv_flow: &Matrix3<f64>,
    cof_flow: &Matrix3<f64>,
    mu: f64,
) -> Matrix3<f64> {
    let sym = grad_v * inv_flow + inv_flow.transpose() * grad_v.transpose();
    (mu * sym - p_value * Matrix3::identity()) * cof_flow
}

/// Fluid stress field over the fluid cells (zeros elsewhere). `pressure`
/// omitted recovers the viscous split.
pub fn lagrangian_fluid_stress(
    mesh: &ReferenceMesh,
    grad_v: &TensorField,
    pressure: Option<&ScalarQpField>,
    map_state: &MapState,
    params: &MaterialParams,
) -> TensorField {
    let n_qp = grad_v.n_qp;
    let mut out = TensorField::constant(mesh, n_qp, Matrix3::zeros(), grad_v.time_stamp);
    for cell in mesh.region_cells(Region::Fluid) {
        for q in 0..n_qp {
            let p = pressure.map_or(0.0, |f| f.at(cell, q));
            *out.at_mut(cell, q) = fluid_stress_point(
                grad_v.at(cell, q),
                p,
                map_state.inv_flow.at(cell, q),
                map_state.cof_flow.at(cell, q),
                params.mu,
            );
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn params(mu_s: f64, lambda_s: f64, c_penalty: f64) -> MaterialParams {
        MaterialParams {
            rho_f: 1.0,
            rho_s: 1.0,
            mu: 1.0,
            mu_s,
            lambda_s,
            c_penalty,
        }
    }

    /// Central-difference oracle for the elastic tangent.
    pub fn fd_svk(h: &Matrix3<f64>, p: &MaterialParams, step: f64) -> Coeffs81 {
        fd_tangent(h, step, |m| first_piola(m, p))
    }

    /// Central-difference oracle for the penalty tangent.
    pub fn fd_quasi_inc(h: &Matrix3<f64>, step: f64) -> Coeffs81 {
        fd_tangent(h, step, penalty_stress)
    }

    pub fn fd_tangent(
        h: &Matrix3<f64>,
        step: f64,
        stress: impl Fn(&Matrix3<f64>) -> Matrix3<f64>,
    ) -> Coeffs81 {
        let mut out = Coeffs81::zeros();
        for j in 0..3 {
            for be in 0..3 {
                let mut hp = *h;
                let mut hm = *h;
                hp[(j, be)] += step;
                hm[(j, be)] -= step;
                let diff = (stress(&hp) - stress(&hm)) / (2.0 * step);
                for i in 0..3 {
                    for al in 0..3 {
                        out.set(i, al, j, be, diff[(i, al)]);
                    }
                }
            }
        }
        out
    }

    pub fn max_rel_err(analytic: &Coeffs81, oracle: &Coeffs81) -> f64 {
        let scale = analytic.max_abs().max(1.0);
        analytic
            .0
            .iter()
            .zip(&oracle.0)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale
    }

    pub fn random_h(rng: &mut impl rand::Rng, max_norm: f64) -> Matrix3<f64> {
        let raw = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let scale = rng.gen_range(0.1..1.0) * max_norm / raw.norm();
        raw * scale
    }
}
