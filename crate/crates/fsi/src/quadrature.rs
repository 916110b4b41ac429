//! Simplex quadrature rules.
//!
//! Tetrahedral and triangular rules built as conical products of
//! one-dimensional Gauss-Jacobi rules, so a rule with `n` points per
//! direction integrates total degree `2n - 1` exactly. Points are stored in
//! barycentric coordinates; weights sum to the reference-cell volume (1/6
//! for the tetrahedron, 1/2 for the triangle).

/// Quadrature rule on a reference simplex in barycentric coordinates.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates, one row per point (4 entries for a
    /// tetrahedron, 3 for a triangle).
    pub points: Vec<Vec<f64>>,
    /// Weights, summing to the reference-cell volume.
    pub weights: Vec<f64>,
    /// Highest total polynomial degree integrated exactly.
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

// 1D Gauss points on [0,1] for the weights (1-t)^2, (1-t) and 1.
// Computed once from the Jacobi polynomial roots and frozen here.

const J2_NODES: [&[f64]; 4] = [
    &[2.50000000000000000e-1],
    &[1.22514822655441502e-1, 5.44151844011225294e-1],
    &[7.29940240731496992e-2, 3.47003766038351813e-1, 7.05002209888498377e-1],
    &[
        4.85005494469972764e-2,
        2.38600737551862341e-1,
        5.17047295104367421e-1,
        7.95851417896772828e-1,
    ],
];
const J2_WEIGHTS: [&[f64]; 4] = [
    &[3.33333333333333315e-1],
    &[2.32547451253508008e-1, 1.00785882079825320e-1],
    &[1.57136361064886459e-1, 1.46246269259866113e-1, 2.99507030085807147e-2],
    &[
        1.10888415611277741e-1,
        1.43458789799214448e-1,
        6.86338871729230970e-2,
        1.03522407499180812e-2,
    ],
];

const J1_NODES: [&[f64]; 4] = [
    &[3.33333333333333370e-1],
    &[1.55051025721682167e-1, 6.44948974278317877e-1],
    &[8.85879595127039288e-2, 4.09466864440734768e-1, 7.87659461760847002e-1],
    &[
        5.71041961145177246e-2,
        2.76843013638123803e-1,
        5.83590432368916834e-1,
        8.60240135656219485e-1,
    ],
];
const J1_WEIGHTS: [&[f64]; 4] = [
    &[5.00000000000000000e-1],
    &[3.18041381743977170e-1, 1.81958618256022830e-1],
    &[2.00931913738959605e-1, 2.29241106359586194e-1, 6.98269799014541726e-2],
    &[
        1.35506913431488518e-1,
        2.03464568010271102e-1,
        1.29847547608232333e-1,
        3.11809709500080849e-2,
    ],
];

const GL_NODES: [&[f64]; 4] = [
    &[5.00000000000000000e-1],
    &[2.11324865405187134e-1, 7.88675134594812866e-1],
    &[1.12701665379258298e-1, 5.00000000000000000e-1, 8.87298334620741702e-1],
    &[
        6.94318442029737137e-2,
        3.30009478207571871e-1,
        6.69990521792428129e-1,
        9.30568155797026231e-1,
    ],
];
const GL_WEIGHTS: [&[f64]; 4] = [
    &[1.00000000000000000e0],
    &[5.00000000000000000e-1, 5.00000000000000000e-1],
    &[2.77777777777777901e-1, 4.44444444444444142e-1, 2.77777777777777901e-1],
    &[
        1.73927422568726897e-1,
        3.26072577431273103e-1,
        3.26072577431273103e-1,
        1.73927422568726897e-1,
    ],
];

fn points_per_direction(order: usize) -> usize {
    // 2n - 1 >= order
    ((order + 2) / 2).clamp(1, 4)
}

/// Tetrahedral rule exact for total degree at least `order` (capped at 7).
pub fn tet_rule(order: usize) -> QuadratureRule {
    let n = points_per_direction(order);
    let (un, uw) = (J2_NODES[n - 1], J2_WEIGHTS[n - 1]);
    let (vn, vw) = (J1_NODES[n - 1], J1_WEIGHTS[n - 1]);
    let (wn, ww) = (GL_NODES[n - 1], GL_WEIGHTS[n - 1]);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (iu, &u) in un.iter().enumerate() {
        for (iv, &v) in vn.iter().enumerate() {
            for (iw, &w) in wn.iter().enumerate() {
                let l1 = u;
                let l2 = v * (1.0 - u);
                let l3 = w * (1.0 - u) * (1.0 - v);
                let l0 = 1.0 - l1 - l2 - l3;
                points.push(vec![l0, l1, l2, l3]);
                weights.push(uw[iu] * vw[iv] * ww[iw]);
            }
        }
    }
    QuadratureRule {
        points,
        weights,
        exact_degree: 2 * n - 1,
    }
}

/// Triangle rule exact for total degree at least `order` (capped at 7).
pub fn tri_rule(order: usize) -> QuadratureRule {
    let n = points_per_direction(order);
    let (un, uw) = (J1_NODES[n - 1], J1_WEIGHTS[n - 1]);
    let (vn, vw) = (GL_NODES[n - 1], GL_WEIGHTS[n - 1]);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (iu, &u) in un.iter().enumerate() {
        for (iv, &v) in vn.iter().enumerate() {
            let l1 = u;
            let l2 = v * (1.0 - u);
            let l0 = 1.0 - l1 - l2;
            points.push(vec![l0, l1, l2]);
            weights.push(uw[iu] * vw[iv]);
        }
    }
    QuadratureRule {
        points,
        weights,
        exact_degree: 2 * n - 1,
    }
}
