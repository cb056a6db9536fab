//! Structured P1 triangulations of the domain and per-triangle conductivities.

use std::f64::consts::TAU;
use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{Point, Shape};

/// Default vertex cap for generated meshes.
pub const DEFAULT_MAX_VERTICES: usize = 200_000;

/// Smallest conductivity accepted anywhere.
pub const MIN_CONDUCTIVITY: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    is_boundary: Vec<bool>,
    areas: Vec<f64>,
    /// Gradients of the three hat functions on each triangle.
    basis: Vec<[Point; 3]>,
    h_max: f64,
}

impl Mesh {
    /// Builds a mesh from raw data; triangles are reoriented counterclockwise.
    pub fn new(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>, boundary_nodes: Vec<usize>) -> Result<Mesh> {
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut basis = Vec::with_capacity(triangles.len());
        let mut h_max = 0.0_f64;
        for tri in &mut triangles {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::InvalidInput(format!("triangle {tri:?} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let mut twice = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if twice < 0.0 {
                tri.swap(1, 2);
                twice = -twice;
            }
            if !(twice > 0.0) {
                return Err(Error::Degenerate(format!("triangle {tri:?} has zero area")));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let inv = 1.0 / twice;
            basis.push([
                [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
                [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
                [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
            ]);
            areas.push(0.5 * twice);
            for (u, v) in [(a, b), (b, c), (c, a)] {
                h_max = h_max.max((u[0] - v[0]).hypot(u[1] - v[1]));
            }
        }
        let mut is_boundary = vec![false; nv];
        for &i in &boundary_nodes {
            if i >= nv {
                return Err(Error::InvalidInput(format!("boundary node {i} out of range")));
            }
            is_boundary[i] = true;
        }
        Ok(Mesh {
            vertices,
            triangles,
            boundary_nodes,
            is_boundary,
            areas,
            basis,
            h_max,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.is_boundary[node]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, tri: usize) -> f64 {
        self.areas[tri]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn basis(&self, tri: usize) -> &[Point; 3] {
        &self.basis[tri]
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn centroid(&self, tri: usize) -> Point {
        let [a, b, c] = self.triangles[tri].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Gradient of the P1 interpolant of `field` on triangle `tri`.
    #[inline]
    pub fn triangle_gradient(&self, tri: usize, field: &[f64]) -> Point {
        let b = &self.basis[tri];
        let t = &self.triangles[tri];
        let mut g = [0.0, 0.0];
        for k in 0..3 {
            let u = field[t[k]];
            g[0] += u * b[k][0];
            g[1] += u * b[k][1];
        }
        g
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate<F: FnMut(Point) -> Result<f64>>(&self, mut f: F) -> Result<Vec<f64>> {
        self.vertices.iter().map(|&x| f(x)).collect()
    }

    /// Vertex table `index,x,y,boundary` and triangle table `index,v0,v1,v2`.
    pub fn write_csv<W: Write, V: Write>(&self, mut vertices: W, mut triangles: V) -> std::io::Result<()> {
        writeln!(vertices, "index,x,y,boundary")?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(vertices, "{},{},{},{}", i, v[0], v[1], u8::from(self.is_boundary[i]))?;
        }
        writeln!(triangles, "index,v0,v1,v2")?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(triangles, "{},{},{},{}", i, t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

/// Structured triangulation of an axis-aligned rectangle or a disk.
///
/// Rectangles are split into `ceil(side / target_h)` cells per direction, each
/// cut into two right triangles along the same diagonal, so `target_h`
/// bounds the legs. Disks use concentric rings with `6k` nodes on ring `k` and a
/// fan at the centre; there the longest edge is at most `target_h`.
pub fn generate_mesh(omega: &Shape, target_h: f64, max_vertices: usize) -> Result<Mesh> {
    if !(target_h.is_finite() && target_h > 0.0) {
        return Err(Error::InvalidInput(format!("target_h must be positive, got {target_h}")));
    }
    match omega {
        Shape::Polygon(poly) => match poly.as_rectangle() {
            Some((lo, hi)) => rectangle_mesh(lo, hi, target_h, max_vertices),
            None => Err(Error::InvalidInput(
                "only axis-aligned rectangles and disks can be meshed".into(),
            )),
        },
        Shape::Disk { center, radius } => disk_mesh(*center, *radius, target_h, max_vertices),
        Shape::Union(_) => Err(Error::InvalidInput(
            "only axis-aligned rectangles and disks can be meshed".into(),
        )),
    }
}

fn rectangle_mesh(lo: Point, hi: Point, target_h: f64, cap: usize) -> Result<Mesh> {
    let nx = ((hi[0] - lo[0]) / target_h - 1e-9).ceil().max(1.0) as usize;
    let ny = ((hi[1] - lo[1]) / target_h - 1e-9).ceil().max(1.0) as usize;
    let required = (nx + 1) * (ny + 1);
    if required > cap {
        return Err(Error::Budget { required, cap });
    }
    let dx = (hi[0] - lo[0]) / nx as f64;
    let dy = (hi[1] - lo[1]) / ny as f64;
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity(required);
    let mut boundary = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let x = if i == nx { hi[0] } else { lo[0] + i as f64 * dx };
            let y = if j == ny { hi[1] } else { lo[1] + j as f64 * dy };
            vertices.push([x, y]);
            if i == 0 || j == 0 || i == nx || j == ny {
                boundary.push(id(i, j));
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles, boundary)
}

fn ring_vertex_count(rings: usize) -> usize {
    1 + 3 * rings * (rings + 1)
}

fn disk_mesh(center: Point, radius: f64, target_h: f64, cap: usize) -> Result<Mesh> {
    let mut rings = (radius / target_h).ceil().max(1.0) as usize;
    loop {
        let required = ring_vertex_count(rings);
        if required > cap {
            return Err(Error::Budget { required, cap });
        }
        let mesh = ring_mesh(center, radius, rings)?;
        if mesh.h_max() <= target_h {
            return Ok(mesh);
        }
        let grow = (rings as f64 * mesh.h_max() / target_h).ceil() as usize;
        rings = grow.max(rings + 1);
    }
}

fn ring_mesh(center: Point, radius: f64, rings: usize) -> Result<Mesh> {
    let mut vertices = Vec::with_capacity(ring_vertex_count(rings));
    vertices.push(center);
    // first index and node count of each ring
    let mut start = vec![0usize; rings + 1];
    for k in 1..=rings {
        start[k] = vertices.len();
        let n = 6 * k;
        let r = if k == rings { radius } else { radius * k as f64 / rings as f64 };
        for i in 0..n {
            let (s, c) = (TAU * i as f64 / n as f64).sin_cos();
            vertices.push([center[0] + r * c, center[1] + r * s]);
        }
    }
    let mut triangles = Vec::with_capacity(6 * rings * rings);
    for i in 0..6 {
        triangles.push([0, start[1] + i, start[1] + (i + 1) % 6]);
    }
    for k in 1..rings {
        let (ni, no) = (6 * k, 6 * (k + 1));
        let inner = |i: usize| start[k] + i % ni;
        let outer = |j: usize| start[k + 1] + j % no;
        let (mut i, mut j) = (0usize, 0usize);
        while i < ni || j < no {
            // advance along whichever ring has the smaller next angle
            let next_in = (i + 1) as f64 / ni as f64;
            let next_out = (j + 1) as f64 / no as f64;
            if j < no && (i >= ni || next_out <= next_in) {
                triangles.push([inner(i), outer(j), outer(j + 1)]);
                j += 1;
            } else {
                triangles.push([inner(i), outer(j), inner(i + 1)]);
                i += 1;
            }
        }
    }
    let boundary = (start[rings]..vertices.len()).collect();
    Mesh::new(vertices, triangles, boundary)
}

/// Per-triangle conductivity `1 + contrast * chi_D`, tagged by centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductivityField {
    values: Vec<f64>,
    contrast: f64,
}

impl ConductivityField {
    pub fn background(mesh: &Mesh) -> Self {
        ConductivityField::constant(mesh, 1.0).expect("1 is a valid conductivity")
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Result<Self> {
        check_positive(value)?;
        Ok(ConductivityField {
            values: vec![value; mesh.num_triangles()],
            contrast: value - 1.0,
        })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            check_positive(v)?;
        }
        Ok(ConductivityField { values, contrast: f64::NAN })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    pub fn is_constant(&self) -> bool {
        self.values.windows(2).all(|w| w[0] == w[1])
    }

    /// Area of the triangles whose conductivity differs from 1.
    pub fn tagged_area(&self, mesh: &Mesh) -> f64 {
        self.values
            .iter()
            .zip(mesh.areas())
            .filter(|(&v, _)| v != 1.0)
            .map(|(_, a)| a)
            .sum()
    }
}

fn check_positive(value: f64) -> Result<()> {
    if value.is_finite() && value > MIN_CONDUCTIVITY {
        Ok(())
    } else {
        Err(Error::Positivity(format!(
            "conductivity {value} must exceed {MIN_CONDUCTIVITY}"
        )))
    }
}

/// `sigma_T = 1 + sigma_d` when the centroid of `T` lies in `d`, else 1.
pub fn assign_conductivity(mesh: &Mesh, d: &Shape, sigma_d: f64) -> Result<ConductivityField> {
    if !sigma_d.is_finite() || 1.0 + sigma_d <= MIN_CONDUCTIVITY {
        return Err(Error::Positivity(format!(
            "inclusion conductivity 1 + {sigma_d} must exceed {MIN_CONDUCTIVITY}"
        )));
    }
    let values = (0..mesh.num_triangles())
        .map(|t| if d.contains(mesh.centroid(t)) { 1.0 + sigma_d } else { 1.0 })
        .collect();
    Ok(ConductivityField {
        values,
        contrast: sigma_d,
    })
}

/// Constant gradient of the P1 interpolant on every triangle.
pub fn p1_gradient(mesh: &Mesh, field: &[f64]) -> Result<Vec<Point>> {
    if field.len() != mesh.num_vertices() {
        return Err(Error::InvalidInput(format!(
            "field has {} values for {} vertices",
            field.len(),
            mesh.num_vertices()
        )));
    }
    Ok((0..mesh.num_triangles())
        .map(|t| mesh.triangle_gradient(t, field))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let m = generate_mesh(&Shape::unit_square(), 0.5, 1000).unwrap();
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.num_triangles(), 8);
        assert_eq!(m.boundary_nodes().len(), 8);
        let fine = generate_mesh(&Shape::unit_square(), 0.25, 1000).unwrap();
        assert_eq!(fine.num_triangles(), 4 * m.num_triangles());
        assert!((fine.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let err = generate_mesh(&Shape::unit_square(), 0.01, 100).unwrap_err();
        assert!(matches!(err, Error::Budget { .. }));
        let disk = Shape::disk([0.0, 0.0], 1.0).unwrap();
        assert!(matches!(generate_mesh(&disk, 0.01, 100), Err(Error::Budget { .. })));
    }

    #[test]
    fn disk_mesh_properties() {
        let disk = Shape::disk([0.3, -0.1], 1.0).unwrap();
        for h in [0.5, 0.2, 0.1] {
            let m = generate_mesh(&disk, h, 100_000).unwrap();
            assert!(m.h_max() <= h);
            for v in m.vertices() {
                assert!(((v[0] - 0.3).hypot(v[1] + 0.1)) <= 1.0 + 1e-12);
            }
            for &b in m.boundary_nodes() {
                let v = m.vertices()[b];
                assert!(((v[0] - 0.3).hypot(v[1] + 0.1) - 1.0).abs() < 1e-12);
            }
            // inscribed polygon area deficit is O(h^2)
            let deficit = std::f64::consts::PI - m.total_area();
            assert!(deficit > 0.0 && deficit < 2.0 * h * h);
            for t in 0..m.num_triangles() {
                assert!(m.area(t) > 0.0);
            }
        }
    }

    #[test]
    fn unsupported_domain() {
        let tri = Shape::polygon(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(generate_mesh(&tri, 0.1, 1000).is_err());
    }

    #[test]
    fn conductivity_assignment() {
        let m = generate_mesh(&Shape::unit_square(), 0.1, 1000).unwrap();
        let empty = assign_conductivity(&m, &Shape::empty(), 1.0).unwrap();
        assert!(empty.values().iter().all(|&v| v == 1.0));
        let cover = Shape::disk([0.5, 0.5], 2.0).unwrap();
        let full = assign_conductivity(&m, &cover, 1.0).unwrap();
        assert!(full.values().iter().all(|&v| v == 2.0));
        assert!(matches!(
            assign_conductivity(&m, &cover, -2.0),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn tagged_area_converges() {
        let disk = Shape::disk([0.45, 0.55], 0.25).unwrap();
        let exact = disk.area();
        let perimeter = std::f64::consts::TAU * 0.25;
        for h in [0.1, 0.05, 0.025] {
            let m = generate_mesh(&Shape::unit_square(), h, 100_000).unwrap();
            let sigma = assign_conductivity(&m, &disk, 1.0).unwrap();
            let mismatch = (sigma.tagged_area(&m) - exact).abs();
            assert!(mismatch <= m.h_max() * perimeter, "h={h}: {mismatch}");
        }
    }

    #[test]
    fn gradient_reproduces_linears() {
        let disk = Shape::disk([0.0, 0.0], 1.0).unwrap();
        for m in [
            generate_mesh(&Shape::unit_square(), 0.1, 10_000).unwrap(),
            generate_mesh(&disk, 0.2, 10_000).unwrap(),
        ] {
            let x1: Vec<f64> = m.vertices().iter().map(|v| v[0]).collect();
            let affine: Vec<f64> = m.vertices().iter().map(|v| 3.0 * v[0] + 2.0 * v[1] - 5.0).collect();
            let constant = vec![4.2; m.num_vertices()];
            for g in p1_gradient(&m, &x1).unwrap() {
                assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
            }
            for g in p1_gradient(&m, &affine).unwrap() {
                assert!((g[0] - 3.0).abs() < 1e-12 && (g[1] - 2.0).abs() < 1e-12);
            }
            for g in p1_gradient(&m, &constant).unwrap() {
                assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
            }
            assert!(p1_gradient(&m, &[1.0]).is_err());
        }
    }
}
