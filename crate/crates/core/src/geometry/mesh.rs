use crate::error::{Error, Result};
use crate::math::Vec3;

/// Triangle mesh with per-vertex normals and an optional block of per-vertex
/// feature channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub normals: Vec<Vec3>,
    channels: usize,
    /// Row-major `vertices.len() × channels`.
    attributes: Vec<f64>,
}

/// Vertices whose normal could not be derived from incident faces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalReport {
    pub isolated: Vec<usize>,
    pub degenerate_faces: usize,
}

impl Mesh {
    /// Builds a mesh and computes area-weighted vertex normals.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((fi, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&i| i >= n))
        {
            return Err(Error::invalid(format!(
                "face {fi} references vertex {:?} but mesh has {n} vertices",
                f
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("vertex {i} is not finite")));
        }
        let mesh = Mesh {
            vertices,
            faces,
            normals: Vec::new(),
            channels: 0,
            attributes: Vec::new(),
        };
        Ok(compute_vertex_normals(mesh).0)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn attributes(&self) -> &[f64] {
        &self.attributes
    }

    pub fn attribute(&self, vertex: usize) -> &[f64] {
        &self.attributes[vertex * self.channels..(vertex + 1) * self.channels]
    }

    /// Replaces the attribute block; `data` is row-major `J × channels`.
    pub fn set_attributes(&mut self, channels: usize, data: Vec<f64>) -> Result<()> {
        if data.len() != channels * self.vertices.len() {
            return Err(Error::invalid(format!(
                "attribute block has {} values, expected {} × {}",
                data.len(),
                self.vertices.len(),
                channels
            )));
        }
        self.channels = channels;
        self.attributes = data;
        Ok(())
    }

    pub fn with_attributes(mut self, channels: usize, data: Vec<f64>) -> Result<Self> {
        self.set_attributes(channels, data)?;
        Ok(self)
    }

    /// Vertex adjacency lists, sorted and deduplicated.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if a != b {
                    adj[a].push(b);
                    adj[b].push(a);
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Surface point at barycentric coordinates inside `face`.
    pub fn interpolate_position(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let f = self.faces[face];
        self.vertices[f[0]] * bary[0] + self.vertices[f[1]] * bary[1] + self.vertices[f[2]] * bary[2]
    }
}

/// Centers the bounding box at the origin and scales uniformly so the largest
/// absolute coordinate is 1.
pub fn normalize_mesh(mut mesh: Mesh) -> Result<Mesh> {
    if mesh.vertices.is_empty() {
        return Err(Error::invalid("cannot normalize an empty mesh"));
    }
    let mut lo = mesh.vertices[0];
    let mut hi = mesh.vertices[0];
    for v in &mesh.vertices {
        lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
        hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
    }
    let center = (lo + hi) * 0.5;
    let extent = mesh
        .vertices
        .iter()
        .map(|&v| (v - center).max_abs())
        .fold(0.0, f64::max);
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
    for v in &mut mesh.vertices {
        let mut p = (*v - center) * scale;
        // Land the extreme coordinates exactly on ±1.
        for c in [&mut p.x, &mut p.y, &mut p.z] {
            *c = c.clamp(-1.0, 1.0);
        }
        *v = p;
    }
    Ok(mesh)
}

/// Area-weighted vertex normals. Zero-area faces are skipped; vertices with no
/// usable incident face get +Z and are listed in the report.
pub fn compute_vertex_normals(mut mesh: Mesh) -> (Mesh, NormalReport) {
    let mut acc = vec![Vec3::ZERO; mesh.vertices.len()];
    let mut report = NormalReport::default();
    for f in &mesh.faces {
        let [a, b, c] = f.map(|i| mesh.vertices[i]);
        // |cross| is twice the area, so summing raw cross products weights by area.
        let n = (b - a).cross(c - a);
        if n.norm() <= 1e-300 || !n.is_finite() {
            report.degenerate_faces += 1;
            continue;
        }
        for &i in f {
            acc[i] += n;
        }
    }
    mesh.normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            n.normalized().unwrap_or_else(|| {
                report.isolated.push(i);
                Vec3::Z
            })
        })
        .collect();
    (mesh, report)
}
