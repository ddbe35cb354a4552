use super::camera::Camera;
use super::mesh::Mesh;

/// Per-pixel rasterization record: nearest face, perspective-correct
/// barycentrics at the pixel center, and Euclidean eye-to-surface distance.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: usize,
    pub height: usize,
    /// `-1` marks background.
    pub face_index: Vec<i64>,
    pub barycentric: Vec<[f64; 3]>,
    /// `f64::INFINITY` on background.
    pub depth: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterOptions {
    pub cull_backfaces: bool,
}

impl FragmentBuffer {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        FragmentBuffer {
            width,
            height,
            face_index: vec![-1; n],
            barycentric: vec![[0.0; 3]; n],
            depth: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.face_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.face_index.is_empty()
    }

    /// Face covering pixel `i`, if any.
    pub fn face(&self, i: usize) -> Option<usize> {
        usize::try_from(self.face_index[i]).ok()
    }

    pub fn is_foreground(&self, i: usize) -> bool {
        self.face_index[i] >= 0
    }

    pub fn foreground_count(&self) -> usize {
        self.face_index.iter().filter(|&&f| f >= 0).count()
    }

    /// Foreground pixels as `(pixel, face, barycentric)`.
    pub fn fragments(&self) -> impl Iterator<Item = (usize, usize, [f64; 3])> + '_ {
        self.face_index
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| usize::try_from(f).ok().map(|f| (i, f, self.barycentric[i])))
    }
}

/// Nearest-face triangle rasterization with default options.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> FragmentBuffer {
    rasterize_with(mesh, camera, RasterOptions::default())
}

pub fn rasterize_with(mesh: &Mesh, camera: &Camera, options: RasterOptions) -> FragmentBuffer {
    let (width, height) = (camera.width, camera.height);
    let frame = camera.frame();
    let mut buf = FragmentBuffer::empty(width, height);
    let edge = |a: (f64, f64), b: (f64, f64), p: (f64, f64)| {
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
    };

    for (fi, face) in mesh.faces.iter().enumerate() {
        let world = face.map(|i| mesh.vertices[i]);
        if options.cull_backfaces {
            let n = (world[1] - world[0]).cross(world[2] - world[0]);
            if n.dot(frame.eye - world[0]) <= 0.0 {
                continue;
            }
        }
        // Faces crossing the eye plane are dropped; normalized meshes viewed
        // from outside their bounding sphere never hit this.
        let Some(p0) = frame.project(world[0], width, height) else { continue };
        let Some(p1) = frame.project(world[1], width, height) else { continue };
        let Some(p2) = frame.project(world[2], width, height) else { continue };
        let s = [(p0.0, p0.1), (p1.0, p1.1), (p2.0, p2.1)];
        let inv_w = [1.0 / p0.2, 1.0 / p1.2, 1.0 / p2.2];
        let area = edge(s[0], s[1], s[2]);
        if area.abs() < 1e-14 || !area.is_finite() {
            continue;
        }

        let min_x = s.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = s.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = s.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = s.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > width as f64 || min_y > height as f64 {
            continue;
        }
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_x - 0.5).floor()).min(width as f64 - 1.0);
        let y1 = ((max_y - 0.5).floor()).min(height as f64 - 1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);

        for py in y0..=y1 {
            for px in x0..=x1 {
                let c = (px as f64 + 0.5, py as f64 + 0.5);
                let l = [
                    edge(s[1], s[2], c) / area,
                    edge(s[2], s[0], c) / area,
                    edge(s[0], s[1], c) / area,
                ];
                if l.iter().any(|&v| v < 0.0) {
                    continue;
                }
                let q = [l[0] * inv_w[0], l[1] * inv_w[1], l[2] * inv_w[2]];
                let qs = q[0] + q[1] + q[2];
                if !(qs > 0.0) {
                    continue;
                }
                let bary = [q[0] / qs, q[1] / qs, q[2] / qs];
                let point = world[0] * bary[0] + world[1] * bary[1] + world[2] * bary[2];
                let depth = (point - frame.eye).norm();
                let i = py * width + px;
                if depth < buf.depth[i] {
                    buf.depth[i] = depth;
                    buf.face_index[i] = fi as i64;
                    buf.barycentric[i] = bary;
                }
            }
        }
    }
    buf
}
