use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use uv3_core::texture::RgbImage;
use uv3_core::{Error, Mesh, Result};

use crate::bvh::Bvh;
use crate::camera::Camera;
use crate::shade::PointCloudTexture;

pub const BACKGROUND: f32 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadeMode {
    /// Interpolated color as is.
    #[default]
    Albedo,
    /// Color scaled by the cosine to a light placed at the camera.
    Lambertian,
}

/// One primary ray per pixel center; rows are rendered in parallel.
pub fn render_image(mesh: &Mesh, bvh: &Bvh, texture: &PointCloudTexture, camera: &Camera, mode: ShadeMode) -> RgbImage {
    let rows: Vec<Vec<[f32; 3]>> = (0..camera.height)
        .into_par_iter()
        .map(|y| {
            (0..camera.width)
                .map(|x| {
                    let ray = camera.ray(x, y);
                    let Some(hit) = bvh.intersect(mesh, &ray) else {
                        return [BACKGROUND; 3];
                    };
                    let c = texture.shade(&ray.at(hit.t));
                    let k = match mode {
                        ShadeMode::Albedo => 1.0,
                        ShadeMode::Lambertian => mesh.face_normal(hit.face).dot(&-ray.dir).max(0.0),
                    };
                    c.map(|v| (v * k) as f32)
                })
                .collect()
        })
        .collect();
    RgbImage::new(camera.width, camera.height, rows.concat()).expect("one pixel per camera ray")
}

/// 8-bit RGB PNG with `key=value` text chunks.
pub fn save_png(image: &RgbImage, path: &Path, metadata: &[(String, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), image.width() as u32, image.height() as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let img_err = |e: png::EncodingError| Error::Image(format!("{}: {e}", path.display()));
    for (k, v) in metadata {
        enc.add_text_chunk(k.clone(), v.clone()).map_err(img_err)?;
    }
    let mut w = enc.write_header().map_err(img_err)?;
    let bytes: Vec<u8> = image
        .pixels()
        .iter()
        .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
        .collect();
    w.write_image_data(&bytes).map_err(img_err)?;
    w.finish().map_err(img_err)
}
