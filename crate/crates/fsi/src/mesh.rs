//! Fixed reference configuration: tetrahedral mesh with region and facet
//! labels.
//!
//! The mesh never moves; all computation happens on the configuration at
//! t = 0 and deformation enters only through quadrature-point weights.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Vector3};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Fluid,
    Solid,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Fluid => write!(f, "fluid"),
            Region::Solid => write!(f, "solid"),
        }
    }
}

/// Boundary facet labels. `GammaC` is the fluid-structure interface,
/// `Gamma2` the clamped outer structure boundary, `GammaIn` the inflow
/// (pinned) part and `GammaOut` the traction-free outflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetLabel {
    GammaIn,
    GammaOut,
    GammaC,
    Gamma2,
}

impl FacetLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FacetLabel::GammaIn => "gamma_in",
            FacetLabel::GammaOut => "gamma_out",
            FacetLabel::GammaC => "gamma_c",
            FacetLabel::Gamma2 => "gamma_2",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "gamma_in" => Some(FacetLabel::GammaIn),
            "gamma_out" => Some(FacetLabel::GammaOut),
            "gamma_c" => Some(FacetLabel::GammaC),
            "gamma_2" => Some(FacetLabel::Gamma2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundaryFacet {
    pub vertices: [usize; 3],
    pub label: FacetLabel,
    /// Cell the facet belongs to on the fluid side (interface and fluid
    /// boundary facets) or on the solid side (`Gamma2`).
    pub cell: usize,
    /// For interface facets, the adjacent solid cell.
    pub solid_cell: Option<usize>,
    /// Unit normal pointing out of the fluid region (out of the solid for
    /// `Gamma2`).
    pub normal: Vector3<f64>,
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct ReferenceMesh {
    pub vertices: Vec<Vector3<f64>>,
    /// Tetrahedra, 4 vertex ids each, positively oriented.
    pub cells: Vec<[usize; 4]>,
    pub cell_region: Vec<Region>,
    pub boundary_facets: Vec<BoundaryFacet>,
}

fn sorted3(v: [usize; 3]) -> [usize; 3] {
    let mut s = v;
    s.sort_unstable();
    s
}

const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

impl ReferenceMesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_vertices(&self, cell: usize) -> [Vector3<f64>; 4] {
        let c = self.cells[cell];
        [
            self.vertices[c[0]],
            self.vertices[c[1]],
            self.vertices[c[2]],
            self.vertices[c[3]],
        ]
    }

    /// Signed volume of a cell; positive for admissible meshes.
    pub fn cell_volume(&self, cell: usize) -> f64 {
        let v = self.cell_vertices(cell);
        let m = Matrix3::from_columns(&[v[1] - v[0], v[2] - v[0], v[3] - v[0]]);
        m.determinant() / 6.0
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_volume(c)).sum()
    }

    pub fn region_cells(&self, region: Region) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_cells()).filter(move |&c| self.cell_region[c] == region)
    }

    pub fn interface_facets(&self) -> impl Iterator<Item = &BoundaryFacet> {
        self.boundary_facets
            .iter()
            .filter(|f| f.label == FacetLabel::GammaC)
    }

    /// Construct a mesh from raw arrays, checking every structural
    /// invariant. All loaders funnel through here.
    pub fn from_raw(
        vertices: Vec<Vector3<f64>>,
        cells: Vec<[usize; 4]>,
        cell_region: Vec<Region>,
        facets: Vec<([usize; 3], FacetLabel)>,
    ) -> Result<Self> {
        if cells.len() != cell_region.len() {
            return Err(Error::MeshInvariant(format!(
                "{} cells but {} region labels",
                cells.len(),
                cell_region.len()
            )));
        }
        for (i, c) in cells.iter().enumerate() {
            for &v in c {
                if v >= vertices.len() {
                    return Err(Error::MeshInvariant(format!(
                        "cell {i} references vertex {v} out of {}",
                        vertices.len()
                    )));
                }
            }
        }
        if !cell_region.iter().any(|&r| r == Region::Fluid) {
            return Err(Error::MeshInvariant("Fluid region empty".into()));
        }
        if !cell_region.iter().any(|&r| r == Region::Solid) {
            return Err(Error::MeshInvariant("Solid region empty".into()));
        }

        let mut mesh = ReferenceMesh {
            vertices,
            cells,
            cell_region,
            boundary_facets: Vec::new(),
        };
        for cell in 0..mesh.n_cells() {
            let vol = mesh.cell_volume(cell);
            if vol <= 0.0 {
                return Err(Error::MeshInvariant(format!(
                    "cell {cell} has non-positive volume {vol:.6e}"
                )));
            }
        }

        // Face-to-cell incidence over the whole mesh.
        let mut face_cells: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
        for (ci, c) in mesh.cells.iter().enumerate() {
            for f in TET_FACES {
                let key = sorted3([c[f[0]], c[f[1]], c[f[2]]]);
                face_cells.entry(key).or_default().push(ci);
            }
        }

        let mut seen: HashMap<[usize; 3], usize> = HashMap::new();
        for (fi, (verts, label)) in facets.iter().enumerate() {
            let key = sorted3(*verts);
            if let Some(prev) = seen.insert(key, fi) {
                return Err(Error::MeshInvariant(format!(
                    "facet {fi} duplicates facet {prev} (every boundary facet belongs to exactly one label)"
                )));
            }
            let owners = face_cells.get(&key).ok_or_else(|| {
                Error::MeshInvariant(format!("facet {fi} does not match any cell face"))
            })?;
            match label {
                FacetLabel::GammaC => {
                    if owners.len() != 2 {
                        return Err(Error::MeshInvariant(format!(
                            "interface not conforming: facet {fi} touches {} cell(s), expected one fluid and one solid",
                            owners.len()
                        )));
                    }
                    let r0 = mesh.cell_region[owners[0]];
                    let r1 = mesh.cell_region[owners[1]];
                    if r0 == r1 {
                        return Err(Error::MeshInvariant(format!(
                            "interface not conforming: facet {fi} touches two {r0} cells"
                        )));
                    }
                    let (fluid, solid) = if r0 == Region::Fluid {
                        (owners[0], owners[1])
                    } else {
                        (owners[1], owners[0])
                    };
                    let (normal, area) = mesh.facet_normal_out_of(*verts, fluid);
                    mesh.boundary_facets.push(BoundaryFacet {
                        vertices: *verts,
                        label: *label,
                        cell: fluid,
                        solid_cell: Some(solid),
                        normal,
                        area,
                    });
                }
                _ => {
                    if owners.len() != 1 {
                        return Err(Error::MeshInvariant(format!(
                            "facet {fi} labeled {} is not on the boundary (touches {} cells)",
                            label.as_str(),
                            owners.len()
                        )));
                    }
                    let cell = owners[0];
                    let want = match label {
                        FacetLabel::Gamma2 => Region::Solid,
                        _ => Region::Fluid,
                    };
                    if mesh.cell_region[cell] != want {
                        return Err(Error::MeshInvariant(format!(
                            "facet {fi} labeled {} sits on a {} cell",
                            label.as_str(),
                            mesh.cell_region[cell]
                        )));
                    }
                    let (normal, area) = mesh.facet_normal_out_of(*verts, cell);
                    mesh.boundary_facets.push(BoundaryFacet {
                        vertices: *verts,
                        label: *label,
                        cell,
                        solid_cell: None,
                        normal,
                        area,
                    });
                }
            }
        }

        // Every exterior face must carry exactly one label.
        for (key, owners) in &face_cells {
            if owners.len() == 1 && !seen.contains_key(key) {
                return Err(Error::MeshInvariant(format!(
                    "boundary face {key:?} of cell {} carries no label",
                    owners[0]
                )));
            }
        }
        // Interior fluid/solid faces must be labeled gamma_c.
        for (key, owners) in &face_cells {
            if owners.len() == 2
                && mesh.cell_region[owners[0]] != mesh.cell_region[owners[1]]
                && !seen.contains_key(key)
            {
                return Err(Error::MeshInvariant(format!(
                    "fluid/solid face {key:?} is not labeled gamma_c"
                )));
            }
        }

        Ok(mesh)
    }

    /// Unit normal of the triangle `verts`, oriented away from `cell`, and
    /// the triangle area.
    fn facet_normal_out_of(&self, verts: [usize; 3], cell: usize) -> (Vector3<f64>, f64) {
        let a = self.vertices[verts[0]];
        let b = self.vertices[verts[1]];
        let c = self.vertices[verts[2]];
        let raw = (b - a).cross(&(c - a));
        let area = 0.5 * raw.norm();
        let mut n = raw.normalize();
        let cv = self.cell_vertices(cell);
        let centroid = (cv[0] + cv[1] + cv[2] + cv[3]) / 4.0;
        let face_centroid = (a + b + c) / 3.0;
        if n.dot(&(face_centroid - centroid)) < 0.0 {
            n = -n;
        }
        (n, area)
    }
}

/// Parse the line-oriented text format:
///
/// ```text
/// fsi-mesh v1
/// vertices N
/// x y z          (N lines)
/// cells M
/// v0 v1 v2 v3 region        (M lines, region in {fluid, solid})
/// facets K
/// v0 v1 v2 label            (K lines, label in {gamma_in, gamma_out, gamma_c, gamma_2})
/// ```
pub fn parse_mesh(text: &str) -> Result<ReferenceMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let parse_err = |line: usize, msg: &str| Error::MeshParse {
        line,
        msg: msg.to_string(),
    };

    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty mesh file"))?;
    if header != "fsi-mesh v1" {
        return Err(parse_err(line, "expected header `fsi-mesh v1`"));
    }

    fn expect_count(tok: Option<(usize, &str)>, kw: &str) -> Result<usize> {
        let (line, l) = tok.ok_or(Error::MeshParse {
            line: 0,
            msg: format!("missing `{kw}` section"),
        })?;
        let mut parts = l.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(n), None) if k == kw => n.parse().map_err(|_| Error::MeshParse {
                line,
                msg: format!("bad count `{n}`"),
            }),
            _ => Err(Error::MeshParse {
                line,
                msg: format!("expected `{kw} N`"),
            }),
        }
    }

    let nv = expect_count(lines.next(), "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of vertex list"))?;
        let coords: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(line, &format!("bad vertex coordinate: {e}")))?;
        if coords.len() != 3 {
            return Err(parse_err(line, "expected `x y z`"));
        }
        vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
    }

    let nc = expect_count(lines.next(), "cells")?;
    let mut cells = Vec::with_capacity(nc);
    let mut regions = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of cell list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 5 {
            return Err(parse_err(line, "expected `v0 v1 v2 v3 region`"));
        }
        let mut ids = [0usize; 4];
        for (k, t) in toks[..4].iter().enumerate() {
            ids[k] = t
                .parse()
                .map_err(|_| parse_err(line, &format!("bad vertex id `{t}`")))?;
        }
        let region = match toks[4] {
            "fluid" => Region::Fluid,
            "solid" => Region::Solid,
            other => return Err(parse_err(line, &format!("unknown region `{other}`"))),
        };
        cells.push(ids);
        regions.push(region);
    }

    let nf = expect_count(lines.next(), "facets")?;
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "unexpected end of facet list"))?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(parse_err(line, "expected `v0 v1 v2 label`"));
        }
        let mut ids = [0usize; 3];
        for (k, t) in toks[..3].iter().enumerate() {
            ids[k] = t
                .parse()
                .map_err(|_| parse_err(line, &format!("bad vertex id `{t}`")))?;
        }
        let label = FacetLabel::parse(toks[3])
            .ok_or_else(|| parse_err(line, &format!("unknown facet label `{}`", toks[3])))?;
        facets.push((ids, label));
    }

    ReferenceMesh::from_raw(vertices, cells, regions, facets)
}

/// Load a mesh file. The special path `builtin:two-cube:N` produces the
/// generated reference geometry with N subdivisions per direction.
pub fn load_mesh(path: &str) -> Result<ReferenceMesh> {
    if let Some(rest) = path.strip_prefix("builtin:two-cube:") {
        let n: usize = rest
            .parse()
            .map_err(|_| Error::config("mesh_path", format!("bad subdivision count `{rest}`")))?;
        if n == 0 {
            return Err(Error::config("mesh_path", "subdivision count must be >= 1"));
        }
        return two_cube_mesh(n);
    }
    let text = std::fs::read_to_string(Path::new(path)).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

/// Reference desk geometry: fluid channel [0,1]^3 with an elastic block
/// [0,1]^2 x [1,2] bonded on top. Inflow at x = 0, outflow at x = 1, the
/// remaining fluid walls are pinned, the z = 1 plane is the interface and
/// every outer solid face is clamped. Each unit cube is split into n^3
/// sub-cubes of 6 tetrahedra.
pub fn two_cube_mesh(n: usize) -> Result<ReferenceMesh> {
    let h = 1.0 / n as f64;
    let nx = n + 1;
    let nz = 2 * n + 1;
    let vid = |i: usize, j: usize, k: usize| (k * nx + j) * nx + i;

    let mut vertices = Vec::with_capacity(nx * nx * nz);
    for k in 0..nz {
        for j in 0..nx {
            for i in 0..nx {
                vertices.push(Vector3::new(i as f64 * h, j as f64 * h, k as f64 * h));
            }
        }
    }

    // Six-tetrahedra split of the cube along the main diagonal (0,0,0)-(1,1,1).
    const CUBE_TETS: [[usize; 4]; 6] = [
        [0, 1, 3, 7],
        [0, 1, 7, 5],
        [0, 5, 7, 4],
        [0, 3, 2, 7],
        [0, 2, 6, 7],
        [0, 6, 4, 7],
    ];

    let mut cells = Vec::new();
    let mut regions = Vec::new();
    for k in 0..2 * n {
        for j in 0..n {
            for i in 0..n {
                let corner = |di: usize, dj: usize, dk: usize| vid(i + di, j + dj, k + dk);
                let corners = [
                    corner(0, 0, 0),
                    corner(1, 0, 0),
                    corner(0, 1, 0),
                    corner(1, 1, 0),
                    corner(0, 0, 1),
                    corner(1, 0, 1),
                    corner(0, 1, 1),
                    corner(1, 1, 1),
                ];
                let region = if k < n { Region::Fluid } else { Region::Solid };
                for t in CUBE_TETS {
                    let mut tet = [corners[t[0]], corners[t[1]], corners[t[2]], corners[t[3]]];
                    // Enforce positive orientation.
                    let m = Matrix3::from_columns(&[
                        vertices[tet[1]] - vertices[tet[0]],
                        vertices[tet[2]] - vertices[tet[0]],
                        vertices[tet[3]] - vertices[tet[0]],
                    ]);
                    if m.determinant() < 0.0 {
                        tet.swap(2, 3);
                    }
                    cells.push(tet);
                    regions.push(region);
                }
            }
        }
    }

    // Collect exterior faces and the interface plane, then label them.
    let mut face_cells: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
    for (ci, c) in cells.iter().enumerate() {
        for f in TET_FACES {
            let key = sorted3([c[f[0]], c[f[1]], c[f[2]]]);
            face_cells.entry(key).or_default().push(ci);
        }
    }
    let mut keys: Vec<[usize; 3]> = face_cells.keys().cloned().collect();
    keys.sort_unstable();

    let eps = 1e-12;
    let mut facets = Vec::new();
    for key in keys {
        let owners = &face_cells[&key];
        let pts = [vertices[key[0]], vertices[key[1]], vertices[key[2]]];
        let on_plane = |axis: usize, value: f64| pts.iter().all(|p| (p[axis] - value).abs() < eps);
        if owners.len() == 2 {
            if regions[owners[0]] != regions[owners[1]] {
                facets.push((key, FacetLabel::GammaC));
            }
            continue;
        }
        let fluid_side = regions[owners[0]] == Region::Fluid;
        let label = if fluid_side {
            if on_plane(0, 1.0) {
                FacetLabel::GammaOut
            } else {
                FacetLabel::GammaIn
            }
        } else {
            FacetLabel::Gamma2
        };
        facets.push((key, label));
    }

    ReferenceMesh::from_raw(vertices, cells, regions, facets)
}
