//! Procedural two-tone training surface.

use uv3_core::mesh::FaceUv;
use uv3_core::shapes::icosphere;
use uv3_core::texture::RgbImage;
use uv3_core::Mesh;

pub const TONE_NORTH: [f64; 3] = [0.9, 0.2, 0.15];
pub const TONE_SOUTH: [f64; 3] = [0.15, 0.3, 0.9];

/// Icosphere of unit surface area whose texture is `TONE_NORTH` above the equator and
/// `TONE_SOUTH` below.
///
/// The texture varies only along `v`, so the longitude seam needs no care.
pub fn two_tone_sphere(level: u32) -> Mesh {
    let mesh = icosphere(level, 1.0);
    let uvs: Vec<FaceUv> = mesh
        .faces()
        .iter()
        .map(|f| {
            f.map(|i| {
                let p = mesh.vertices()[i];
                let u = 0.5 + p.z.atan2(p.x) / std::f64::consts::TAU;
                let v = 0.5 + p.y.clamp(-1.0, 1.0).asin() / std::f64::consts::PI;
                [u, v]
            })
        })
        .collect();
    let (w, h) = (8, 64);
    let north = TONE_NORTH.map(|c| c as f32);
    let south = TONE_SOUTH.map(|c| c as f32);
    let tex = RgbImage::from_fn(w, h, |_, y| if y < h / 2 { north } else { south });
    let scale = 1.0 / mesh.total_area().sqrt();
    mesh.with_uvs(uvs)
        .expect("one uv triple per face")
        .with_texture(tex)
        .scaled(scale)
        .expect("positive scale")
}
