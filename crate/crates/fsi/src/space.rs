//! Continuous Lagrange spaces of degree 1 and 2 on the tetrahedral mesh.
//!
//! Nodes are shared across the fluid-structure interface, so the unified
//! velocity field and the structure velocity coincide there by construction
//! and the interface coupling `v = d(xi)/dt` holds exactly at the discrete
//! level.

use crate::error::{Error, Result};
use crate::mesh::{FacetLabel, ReferenceMesh, Region};
use nalgebra::{Matrix3, Vector3};
use std::collections::HashMap;

pub const LABEL_IN: u8 = 1;
pub const LABEL_OUT: u8 = 2;
pub const LABEL_C: u8 = 4;
pub const LABEL_2: u8 = 8;

pub const REGION_FLUID: u8 = 1;
pub const REGION_SOLID: u8 = 2;

fn label_bit(label: FacetLabel) -> u8 {
    match label {
        FacetLabel::GammaIn => LABEL_IN,
        FacetLabel::GammaOut => LABEL_OUT,
        FacetLabel::GammaC => LABEL_C,
        FacetLabel::Gamma2 => LABEL_2,
    }
}

/// Local edge enumeration of the reference tetrahedron.
pub const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Scalar nodal space: vertices for degree 1, vertices plus edge midpoints
/// for degree 2.
#[derive(Debug, Clone)]
pub struct ScalarSpace {
    pub degree: usize,
    pub node_coords: Vec<Vector3<f64>>,
    /// Global node ids per cell (4 or 10 entries).
    pub cell_nodes: Vec<Vec<usize>>,
    /// Bitmask of facet labels each node touches.
    pub node_labels: Vec<u8>,
    /// Bitmask of regions whose cells contain the node.
    pub node_region: Vec<u8>,
}

impl ScalarSpace {
    pub fn new(mesh: &ReferenceMesh, degree: usize) -> Result<Self> {
        if degree != 1 && degree != 2 {
            return Err(Error::UnsupportedDegree(degree));
        }
        let nv = mesh.n_vertices();
        let mut node_coords: Vec<Vector3<f64>> = mesh.vertices.clone();
        let mut edge_node: HashMap<[usize; 2], usize> = HashMap::new();
        let mut cell_nodes = Vec::with_capacity(mesh.n_cells());

        for cell in &mesh.cells {
            let mut nodes: Vec<usize> = cell.to_vec();
            if degree == 2 {
                for e in TET_EDGES {
                    let mut key = [cell[e[0]], cell[e[1]]];
                    key.sort_unstable();
                    let id = *edge_node.entry(key).or_insert_with(|| {
                        let id = node_coords.len();
                        node_coords
                            .push((mesh.vertices[key[0]] + mesh.vertices[key[1]]) * 0.5);
                        id
                    });
                    nodes.push(id);
                }
            }
            cell_nodes.push(nodes);
        }

        let n_nodes = node_coords.len();
        let mut node_labels = vec![0u8; n_nodes];
        for facet in &mesh.boundary_facets {
            let bit = label_bit(facet.label);
            for &v in &facet.vertices {
                node_labels[v] |= bit;
            }
            if degree == 2 {
                for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                    let mut key = [facet.vertices[a], facet.vertices[b]];
                    key.sort_unstable();
                    if let Some(&id) = edge_node.get(&key) {
                        node_labels[id] |= bit;
                    }
                }
            }
        }

        let mut node_region = vec![0u8; n_nodes];
        for (ci, nodes) in cell_nodes.iter().enumerate() {
            let bit = match mesh.cell_region[ci] {
                Region::Fluid => REGION_FLUID,
                Region::Solid => REGION_SOLID,
            };
            for &n in nodes {
                node_region[n] |= bit;
            }
        }

        let _ = nv;
        Ok(ScalarSpace {
            degree,
            node_coords,
            cell_nodes,
            node_labels,
            node_region,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn nodes_per_cell(&self) -> usize {
        if self.degree == 1 {
            4
        } else {
            10
        }
    }

    /// Global node ids touching cells of `region`, ascending.
    pub fn region_nodes(&self, region: Region) -> Vec<usize> {
        let bit = match region {
            Region::Fluid => REGION_FLUID,
            Region::Solid => REGION_SOLID,
        };
        (0..self.n_nodes())
            .filter(|&n| self.node_region[n] & bit != 0)
            .collect()
    }

    /// Shape function values at a barycentric point, ordered like
    /// `cell_nodes` entries.
    pub fn shape_values(&self, bary: &[f64]) -> Vec<f64> {
        let l = bary;
        if self.degree == 1 {
            l.to_vec()
        } else {
            let mut vals = Vec::with_capacity(10);
            for a in 0..4 {
                vals.push(l[a] * (2.0 * l[a] - 1.0));
            }
            for e in TET_EDGES {
                vals.push(4.0 * l[e[0]] * l[e[1]]);
            }
            vals
        }
    }

    /// Physical gradients of the barycentric coordinates of a cell
    /// (constant over the cell).
    pub fn bary_gradients(&self, mesh: &ReferenceMesh, cell: usize) -> [Vector3<f64>; 4] {
        let v = mesh.cell_vertices(cell);
        let m = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        let inv = m.try_inverse().expect("positive-volume cell");
        // rows of inv are gradients of (l1, l2, l3)
        let g1 = Vector3::new(inv[(0, 0)], inv[(0, 1)], inv[(0, 2)]);
        let g2 = Vector3::new(inv[(1, 0)], inv[(1, 1)], inv[(1, 2)]);
        let g3 = Vector3::new(inv[(2, 0)], inv[(2, 1)], inv[(2, 2)]);
        [-(g1 + g2 + g3), g1, g2, g3]
    }

    /// Physical shape gradients at a barycentric point of a cell.
    pub fn shape_gradients(
        &self,
        mesh: &ReferenceMesh,
        cell: usize,
        bary: &[f64],
    ) -> Vec<Vector3<f64>> {
        let g = self.bary_gradients(mesh, cell);
        if self.degree == 1 {
            g.to_vec()
        } else {
            let l = bary;
            let mut grads = Vec::with_capacity(10);
            for a in 0..4 {
                grads.push(g[a] * (4.0 * l[a] - 1.0));
            }
            for e in TET_EDGES {
                grads.push((g[e[0]] * l[e[1]] + g[e[1]] * l[e[0]]) * 4.0);
            }
            grads
        }
    }

    /// Physical shape Hessians of a cell (constant over the cell; zero for
    /// degree 1).
    pub fn shape_hessians(&self, mesh: &ReferenceMesh, cell: usize) -> Vec<Matrix3<f64>> {
        if self.degree == 1 {
            return vec![Matrix3::zeros(); 4];
        }
        let g = self.bary_gradients(mesh, cell);
        let mut hess = Vec::with_capacity(10);
        for a in 0..4 {
            hess.push(4.0 * g[a] * g[a].transpose());
        }
        for e in TET_EDGES {
            let h = g[e[0]] * g[e[1]].transpose();
            hess.push(4.0 * (h + h.transpose()));
        }
        hess
    }

    /// Cell-local barycentric coordinates of a point given in triangle
    /// barycentric coordinates on one of the cell's faces.
    pub fn facet_bary_in_cell(
        &self,
        mesh: &ReferenceMesh,
        cell: usize,
        facet_vertices: &[usize; 3],
        tri_bary: &[f64],
    ) -> [f64; 4] {
        let cv = mesh.cells[cell];
        let mut bary = [0.0; 4];
        for (k, &fv) in facet_vertices.iter().enumerate() {
            let local = cv
                .iter()
                .position(|&v| v == fv)
                .expect("facet vertex belongs to cell");
            bary[local] = tri_bary[k];
        }
        bary
    }
}

/// Vector-valued space: three components per scalar node, dof = 3*node + c.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    pub scalar: ScalarSpace,
    /// Per dof: constrained by the inflow pin or the outer structure clamp.
    pub dirichlet_mask: Vec<bool>,
}

impl FunctionSpace {
    pub fn new(mesh: &ReferenceMesh, degree: usize) -> Result<Self> {
        let scalar = ScalarSpace::new(mesh, degree)?;
        let mut dirichlet_mask = vec![false; 3 * scalar.n_nodes()];
        for (n, &labels) in scalar.node_labels.iter().enumerate() {
            if labels & (LABEL_IN | LABEL_2) != 0 {
                for c in 0..3 {
                    dirichlet_mask[3 * n + c] = true;
                }
            }
        }
        Ok(FunctionSpace {
            scalar,
            dirichlet_mask,
        })
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.scalar.n_nodes()
    }

    pub fn dof(&self, node: usize, comp: usize) -> usize {
        3 * node + comp
    }

    pub fn dof_coords(&self, dof: usize) -> Vector3<f64> {
        self.scalar.node_coords[dof / 3]
    }

    /// Scalar nodes on the interface, ascending.
    pub fn interface_nodes(&self) -> Vec<usize> {
        (0..self.scalar.n_nodes())
            .filter(|&n| self.scalar.node_labels[n] & LABEL_C != 0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{two_cube_mesh, FacetLabel, ReferenceMesh, Region};
    use nalgebra::Vector3;

    fn tiny_mesh(cells: Vec<[usize; 4]>, regions: Vec<Region>) -> ReferenceMesh {
        // Build facet labels mechanically: everything fluid-exterior is
        // gamma_in, solid-exterior gamma_2, shared faces gamma_c.
        let vertices = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(0.3, 0.3, 1.0),
        ];
        let mut face_count: std::collections::HashMap<[usize; 3], Vec<usize>> = Default::default();
        for (ci, c) in cells.iter().enumerate() {
            for f in [[1usize, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]] {
                let mut key = [c[f[0]], c[f[1]], c[f[2]]];
                key.sort_unstable();
                face_count.entry(key).or_default().push(ci);
            }
        }
        let mut facets = Vec::new();
        for (key, owners) in face_count {
            if owners.len() == 1 {
                let label = if regions[owners[0]] == Region::Fluid {
                    FacetLabel::GammaIn
                } else {
                    FacetLabel::Gamma2
                };
                facets.push((key, label));
            } else if regions[owners[0]] != regions[owners[1]] {
                facets.push((key, FacetLabel::GammaC));
            }
        }
        ReferenceMesh::from_raw(vertices, cells, regions, facets).unwrap()
    }

    #[test]
    fn single_tet_degree1_has_12_dofs() {
        // one fluid + one solid tet so the mesh invariants pass; count the
        // dofs a single tetrahedron contributes
        let mesh = tiny_mesh(
            vec![[0, 1, 2, 4], [0, 2, 1, 3]],
            vec![Region::Fluid, Region::Solid],
        );
        let space = FunctionSpace::new(&mesh, 1).unwrap();
        // 5 distinct nodes -> 15 dofs; each tet sees 12 of them
        assert_eq!(space.n_dofs(), 15);
        assert_eq!(space.scalar.cell_nodes[0].len() * 3, 12);
    }

    #[test]
    fn two_tets_sharing_face_have_15_dofs() {
        let mesh = tiny_mesh(
            vec![[0, 1, 2, 4], [0, 2, 1, 3]],
            vec![Region::Fluid, Region::Solid],
        );
        let space = FunctionSpace::new(&mesh, 1).unwrap();
        assert_eq!(space.n_dofs(), 15);
    }

    #[test]
    fn degree_zero_is_rejected() {
        let mesh = tiny_mesh(
            vec![[0, 1, 2, 4], [0, 2, 1, 3]],
            vec![Region::Fluid, Region::Solid],
        );
        assert!(matches!(
            FunctionSpace::new(&mesh, 0),
            Err(Error::UnsupportedDegree(0))
        ));
    }

    #[test]
    fn interface_nodes_are_shared_between_regions() {
        let mesh = two_cube_mesh(1).unwrap();
        for degree in [1, 2] {
            let space = FunctionSpace::new(&mesh, degree).unwrap();
            for n in space.interface_nodes() {
                let r = space.scalar.node_region[n];
                assert_eq!(r, REGION_FLUID | REGION_SOLID, "node {n} not shared");
            }
        }
    }

    #[test]
    fn shape_functions_partition_unity_and_gradients_sum_to_zero() {
        let mesh = two_cube_mesh(1).unwrap();
        for degree in [1usize, 2] {
            let space = ScalarSpace::new(&mesh, degree).unwrap();
            let bary = [0.1, 0.2, 0.3, 0.4];
            let vals = space.shape_values(&bary);
            let total: f64 = vals.iter().sum();
            approx::assert_relative_eq!(total, 1.0, max_relative = 1e-14);
            let grads = space.shape_gradients(&mesh, 0, &bary);
            let gsum: Vector3<f64> = grads.iter().sum();
            assert!(gsum.norm() < 1e-12);
        }
    }

    #[test]
    fn quadratic_field_is_reproduced_by_degree2_space() {
        let mesh = two_cube_mesh(1).unwrap();
        let space = ScalarSpace::new(&mesh, 2).unwrap();
        // f(x) = x^2 + 2 y z - z
        let f = |p: &Vector3<f64>| p.x * p.x + 2.0 * p.y * p.z - p.z;
        let grad_f = |p: &Vector3<f64>| Vector3::new(2.0 * p.x, 2.0 * p.z, 2.0 * p.y - 1.0);
        let nodal: Vec<f64> = space.node_coords.iter().map(|p| f(p)).collect();
        let bary = [0.3, 0.25, 0.25, 0.2];
        for cell in 0..mesh.n_cells() {
            let vals = space.shape_values(&bary);
            let grads = space.shape_gradients(&mesh, cell, &bary);
            let nodes = &space.cell_nodes[cell];
            let mut fh = 0.0;
            let mut gh = Vector3::zeros();
            let mut point = Vector3::zeros();
            let cv = mesh.cell_vertices(cell);
            for k in 0..4 {
                point += bary[k] * cv[k];
            }
            for (a, &n) in nodes.iter().enumerate() {
                fh += nodal[n] * vals[a];
                gh += nodal[n] * grads[a];
            }
            approx::assert_relative_eq!(fh, f(&point), max_relative = 1e-12);
            assert!((gh - grad_f(&point)).norm() < 1e-10);
        }
    }

    #[test]
    fn dirichlet_mask_pins_inflow_and_clamp_only() {
        let mesh = two_cube_mesh(1).unwrap();
        let space = FunctionSpace::new(&mesh, 2).unwrap();
        for n in 0..space.scalar.n_nodes() {
            let labels = space.scalar.node_labels[n];
            let pinned = space.dirichlet_mask[3 * n];
            assert_eq!(pinned, labels & (LABEL_IN | LABEL_2) != 0);
        }
        // there must be free dofs on the outflow face
        let free_out = (0..space.scalar.n_nodes()).any(|n| {
            space.scalar.node_labels[n] & LABEL_OUT != 0 && !space.dirichlet_mask[3 * n]
        });
        assert!(free_out);
    }
}
