use log::debug;

use super::pds::PdsSamples;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::texture::RgbImage;

/// Number of largest-UV-area triangles used to estimate the texture scale.
pub const DEFAULT_SCALE_TRIANGLES: usize = 250;

fn triangle_area_2d(uv: &[[f64; 2]; 3]) -> f64 {
    let (a, b, c) = (uv[0], uv[1], uv[2]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs()
}

/// Ratio between the sample density and the texel density of the texture.
///
/// Taken over the `n` triangles with the largest UV area: the mean number of
/// sample triangles (each of area `r^2 sqrt(3) / 4`) per mesh triangle,
/// divided by the mean number of texels per triangle, square-rooted. Values
/// well below 1 mean the texture is much finer than the samples can resolve.
pub fn texture_scale_factor(mesh: &Mesh, r: f64, width: usize, height: usize, n: usize) -> Result<f64> {
    let uvs = mesh
        .uv_coords()
        .ok_or_else(|| Error::invalid("texture scale needs per-face UV coordinates"))?;
    if !(r > 0.0) || width == 0 || height == 0 || n == 0 {
        return Err(Error::invalid("texture scale needs a positive radius, size and triangle count"));
    }
    let mut by_uv: Vec<(f64, usize)> = uvs.iter().enumerate().map(|(f, uv)| (triangle_area_2d(uv), f)).collect();
    by_uv.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let n = n.min(by_uv.len());
    let top = &by_uv[..n];
    let mean_uv = top.iter().map(|(a, _)| a).sum::<f64>() / n as f64;
    let mean_3d = top.iter().map(|&(_, f)| mesh.face_area(f)).sum::<f64>() / n as f64;
    if mean_uv <= 0.0 {
        return Err(Error::invalid("UV triangles have zero area"));
    }
    let sample_area = r * r * 3f64.sqrt() / 4.0;
    Ok(((mean_3d / sample_area) / (width as f64 * height as f64 * mean_uv)).sqrt())
}

/// Texture actually sampled: downscaled by `3s` when that is below one.
pub fn effective_texture(mesh: &Mesh, r: f64, n: usize) -> Result<Option<RgbImage>> {
    let Some(tex) = mesh.texture() else {
        return Ok(None);
    };
    let s = texture_scale_factor(mesh, r, tex.width(), tex.height(), n)?;
    if 3.0 * s < 1.0 {
        debug!("downscaling {}x{} texture by {}", tex.width(), tex.height(), 3.0 * s);
        Ok(Some(tex.downscale(3.0 * s)))
    } else {
        Ok(Some(tex.clone()))
    }
}

/// Per-sample colours in `[0, 1]`, from the texture when present, else the base colour.
pub fn sample_colors(mesh: &Mesh, samples: &PdsSamples) -> Result<Vec<[f64; 3]>> {
    sample_colors_with(mesh, samples, DEFAULT_SCALE_TRIANGLES)
}

pub fn sample_colors_with(mesh: &Mesh, samples: &PdsSamples, n: usize) -> Result<Vec<[f64; 3]>> {
    let clamp = |c: [f64; 3]| c.map(|x| x.clamp(0.0, 1.0));
    if mesh.uv_coords().is_some() {
        if let Some(tex) = effective_texture(mesh, samples.radius, n)? {
            return samples
                .face_ids
                .iter()
                .zip(&samples.barycentric)
                .map(|(&f, &b)| {
                    let [u, v] = mesh
                        .uv_at(f, b)
                        .ok_or_else(|| Error::invalid(format!("face {f} out of range")))?;
                    Ok(clamp(tex.sample_bilinear(u, v)))
                })
                .collect();
        }
    }
    match mesh.base_color() {
        Some(c) => Ok(vec![clamp(c); samples.points.len()]),
        None => Err(Error::invalid("mesh has neither a texture with UVs nor a base colour")),
    }
}
