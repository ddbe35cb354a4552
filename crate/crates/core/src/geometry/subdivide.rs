//! Loop and midpoint subdivision for building the coarse latent mesh and the
//! fine pixel-space mesh from one input surface.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use super::mesh::Mesh;
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubdivisionScheme {
    /// Loop's smoothing scheme with crease rules on boundary edges.
    #[default]
    Loop,
    /// Split every edge at its midpoint; geometry is unchanged.
    Midpoint,
}

impl FromStr for SubdivisionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loop" => Ok(Self::Loop),
            "midpoint" => Ok(Self::Midpoint),
            other => Err(Error::config(format!("unknown subdivision scheme {other:?}"))),
        }
    }
}

/// Applies `levels` rounds of subdivision. Attributes are dropped; normals are
/// recomputed.
pub fn subdivide(mesh: &Mesh, levels: u32, scheme: SubdivisionScheme) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut faces = mesh.faces.clone();
    for _ in 0..levels {
        (vertices, faces) = subdivide_once(&vertices, &faces, scheme);
    }
    Mesh::new(vertices, faces)
}

type Edge = (usize, usize);

fn edge(a: usize, b: usize) -> Edge {
    (a.min(b), a.max(b))
}

fn subdivide_once(
    vertices: &[Vec3],
    faces: &[[usize; 3]],
    scheme: SubdivisionScheme,
) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    // Edge -> opposite vertices of incident faces.
    let mut opposite: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for f in faces {
        for k in 0..3 {
            opposite
                .entry(edge(f[k], f[(k + 1) % 3]))
                .or_default()
                .push(f[(k + 2) % 3]);
        }
    }

    let mut new_vertices: Vec<Vec3> = match scheme {
        SubdivisionScheme::Midpoint => vertices.to_vec(),
        SubdivisionScheme::Loop => smooth_even_vertices(vertices, &opposite),
    };

    let mut edge_vertex: BTreeMap<Edge, usize> = BTreeMap::new();
    for (&(a, b), opp) in &opposite {
        let p = match (scheme, opp.as_slice()) {
            (SubdivisionScheme::Loop, &[c, d]) => {
                (vertices[a] + vertices[b]) * 0.375 + (vertices[c] + vertices[d]) * 0.125
            }
            _ => (vertices[a] + vertices[b]) * 0.5,
        };
        edge_vertex.insert((a, b), new_vertices.len());
        new_vertices.push(p);
    }

    let mut new_faces = Vec::with_capacity(faces.len() * 4);
    for &[a, b, c] in faces {
        let ab = edge_vertex[&edge(a, b)];
        let bc = edge_vertex[&edge(b, c)];
        let ca = edge_vertex[&edge(c, a)];
        new_faces.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
    }
    (new_vertices, new_faces)
}

fn smooth_even_vertices(vertices: &[Vec3], opposite: &BTreeMap<Edge, Vec<usize>>) -> Vec<Vec3> {
    let n = vertices.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut boundary: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut irregular = vec![false; n];
    for (&(a, b), opp) in opposite {
        neighbors[a].push(b);
        neighbors[b].push(a);
        match opp.len() {
            1 => {
                boundary[a].push(b);
                boundary[b].push(a);
            }
            2 => {}
            _ => {
                irregular[a] = true;
                irregular[b] = true;
            }
        }
    }
    (0..n)
        .map(|i| {
            let v = vertices[i];
            if irregular[i] {
                return v;
            }
            match boundary[i].as_slice() {
                [] => {
                    let k = neighbors[i].len();
                    if k == 0 {
                        return v;
                    }
                    let kf = k as f64;
                    let c = 0.375 + 0.25 * (2.0 * PI / kf).cos();
                    let beta = (0.625 - c * c) / kf;
                    let sum = neighbors[i]
                        .iter()
                        .fold(Vec3::ZERO, |acc, &j| acc + vertices[j]);
                    v * (1.0 - kf * beta) + sum * beta
                }
                &[p, q] => v * 0.75 + (vertices[p] + vertices[q]) * 0.125,
                _ => v,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::shapes::{grid_plane, icosphere};

    #[test]
    fn vertex_counts_follow_euler() {
        let base = icosphere(1);
        for (levels, count) in [(1, 162), (3, 2562)] {
            let m = subdivide(&base, levels, SubdivisionScheme::Loop).unwrap();
            assert_eq!(m.vertex_count(), count);
        }
    }

    #[test]
    fn midpoint_keeps_planar_geometry() {
        let m = subdivide(&grid_plane(2, 1.0, 0.5), 2, SubdivisionScheme::Midpoint).unwrap();
        assert!(m.vertices.iter().all(|v| (v.z - 0.5).abs() < 1e-15));
        assert_eq!(m.faces.len(), 8 * 16);
    }

    #[test]
    fn loop_keeps_boundary_of_flat_plane_flat() {
        let m = subdivide(&grid_plane(3, 1.0, 0.0), 1, SubdivisionScheme::Loop).unwrap();
        assert!(m.vertices.iter().all(|v| v.z.abs() < 1e-15));
        // Boundary crease rule keeps corners on the square boundary.
        let max = m.vertices.iter().map(|v| v.max_abs()).fold(0.0, f64::max);
        assert!(max <= 1.0 + 1e-12);
    }

    #[test]
    fn loop_sphere_stays_inside_hull() {
        let m = subdivide(&icosphere(1), 2, SubdivisionScheme::Loop).unwrap();
        for v in &m.vertices {
            let r = v.norm();
            assert!(r <= 1.0 + 1e-12 && r > 0.85, "radius {r}");
        }
    }

    #[test]
    fn parses_scheme_names() {
        assert_eq!("loop".parse::<SubdivisionScheme>().unwrap(), SubdivisionScheme::Loop);
        assert!("catmull".parse::<SubdivisionScheme>().is_err());
    }
}
