use cotex_core::geometry::shapes::icosphere;
use cotex_core::geometry::{cameras_at_azimuths, subdivide, Mesh, SubdivisionScheme};
use cotex_core::projection::{render_features, FeatureImage, ProjectionExponents};
use cotex_core::refine::{
    build_conflict_mask, inpaint_refine, pixel_aggregate, vertex_variance, HarmonicInpainter, RefineOptions, ViewSet,
};
use cotex_core::Vec3;

const LAMBDA: f64 = 0.005;
const BASE: [f64; 3] = [0.3, 0.35, 0.4];

struct Fixture {
    mesh: Mesh,
    views: ViewSet,
    patch: Vec<bool>,
    images: Vec<FeatureImage>,
}

/// Four views of a uniformly colored sphere; the 80° view sees a cap of
/// vertices shifted by `shift` in every channel.
fn fixture(shift: f64) -> Fixture {
    let mesh = subdivide(&icosphere(1), 3, SubdivisionScheme::Loop).unwrap();
    let cams = cameras_at_azimuths(&[0.0, 80.0, 160.0, 280.0], 10.0, 2.5, 60.0, (128, 128)).unwrap();
    let views = ViewSet::new(&mesh, &cams, 5.0).unwrap();
    // Centered between the 0° and 80° views so both see the whole patch.
    let (az, el) = (40f64.to_radians(), 10f64.to_radians());
    let axis = Vec3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos());
    let patch: Vec<bool> = mesh.vertices.iter().map(|v| v.normalized().unwrap().dot(axis) > 20f64.to_radians().cos()).collect();
    let images = views
        .frags
        .iter()
        .enumerate()
        .map(|(n, frag)| {
            let colors: Vec<f64> = (0..mesh.vertex_count())
                .flat_map(|v| BASE.map(|b| if n == 1 && patch[v] { b + shift } else { b }))
                .collect();
            render_features(&mesh, &colors, 3, frag)
        })
        .collect();
    Fixture { mesh, views, patch, images }
}

fn touches_patch(mesh: &Mesh, patch: &[bool]) -> Vec<bool> {
    let mut near = patch.to_vec();
    for f in &mesh.faces {
        if f.iter().any(|&v| patch[v]) {
            f.iter().for_each(|&v| near[v] = true);
        }
    }
    near
}

#[test]
fn shifted_patch_is_flagged_and_refined() {
    let fx = fixture(0.5);
    let exps = ProjectionExponents::default();
    let (repo, texture) = pixel_aggregate(&fx.images, &fx.views, &fx.mesh, exps, 6.0).unwrap();
    let var = vertex_variance(&repo);
    let mask = build_conflict_mask(&var, LAMBDA).unwrap();

    let seen_by = |v: usize| (0..repo.views).filter(|&n| repo.color(n, v).is_some()).count();
    let perturbed: Vec<usize> = (0..fx.mesh.vertex_count())
        .filter(|&v| fx.patch[v] && repo.color(1, v).is_some() && seen_by(v) >= 2)
        .collect();
    assert!(perturbed.len() > 20, "fixture too small: {}", perturbed.len());
    assert!(perturbed.iter().all(|&v| mask.flags[v]));

    let near = touches_patch(&fx.mesh, &fx.patch);
    let false_flags = (0..fx.mesh.vertex_count()).filter(|&v| !near[v] && mask.flags[v]).count();
    assert_eq!(false_flags, 0);

    let report = inpaint_refine(&texture, &mask, &fx.mesh, &fx.views, &HarmonicInpainter::default(), RefineOptions::default()).unwrap();
    assert!(report.residual.is_empty(), "residual {:?}", report.residual.len());
    let after = vertex_variance(&report.repository);
    let flagged: Vec<usize> = (0..fx.mesh.vertex_count()).filter(|&v| mask.flags[v]).collect();
    let resolved = flagged.iter().filter(|&&v| after[v] <= LAMBDA).count();
    assert!(resolved as f64 >= 0.95 * flagged.len() as f64, "{resolved}/{}", flagged.len());
    for v in (0..fx.mesh.vertex_count()).filter(|&v| !mask.flags[v]) {
        assert_eq!(report.texture.colors[v], texture.colors[v]);
    }
}

#[test]
fn identical_views_flag_nothing() {
    let fx = fixture(0.0);
    let (repo, _) = pixel_aggregate(&fx.images, &fx.views, &fx.mesh, ProjectionExponents::default(), 6.0).unwrap();
    assert_eq!(build_conflict_mask(&vertex_variance(&repo), LAMBDA).unwrap().count(), 0);
}

#[test]
fn small_shift_still_flags_perturbed_vertices() {
    let fx = fixture(0.2);
    let (repo, _) = pixel_aggregate(&fx.images, &fx.views, &fx.mesh, ProjectionExponents::default(), 6.0).unwrap();
    let mask = build_conflict_mask(&vertex_variance(&repo), LAMBDA).unwrap();
    let seen = |v: usize| (0..repo.views).filter(|&n| repo.color(n, v).is_some()).count();
    for v in 0..fx.mesh.vertex_count() {
        if fx.patch[v] && repo.color(1, v).is_some() && seen(v) >= 2 {
            assert!(mask.flags[v], "vertex {v}");
        }
    }
}
