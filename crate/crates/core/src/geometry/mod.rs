//! Mesh representation, cameras, subdivision and software rasterization.

pub mod camera;
pub mod io;
pub mod mesh;
pub mod raster;
pub mod shapes;
pub mod subdivide;

pub use camera::{cameras_at_azimuths, make_camera_ring, Camera, CameraFrame};
pub use mesh::{compute_vertex_normals, normalize_mesh, Mesh, NormalReport};
pub use raster::{rasterize, rasterize_with, FragmentBuffer, RasterOptions};
pub use subdivide::{subdivide, SubdivisionScheme};
