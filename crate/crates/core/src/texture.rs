//! RGB rasters used as mesh textures.

use std::path::Path;

use crate::error::{Error, Result};

/// Linear RGB image with channels in `[0, 1]`, stored row-major with row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        Self {
            width: width.max(1),
            height: height.max(1),
            data: vec![color; width.max(1) * height.max(1)],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb
            .pixels()
            .map(|p| [p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
            .collect();
        Self::new(w as usize, h as usize, data)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .data
            .iter()
            .flat_map(|c| c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f32; 3]) {
        self.data[y * self.width + x] = c;
    }

    /// Bilinear lookup at texture coordinates `(u, v)`.
    ///
    /// Pixel centres sit at `(i + 0.5) / W`; `v = 0` is the bottom row. Lookups
    /// outside the image clamp to the border texels.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> [f64; 3] {
        let x = u * self.width as f64 - 0.5;
        let y = (1.0 - v) * self.height as f64 - 0.5;
        let x0f = x.floor();
        let y0f = y.floor();
        let fx = x - x0f;
        let fy = y - y0f;
        let clampx = |i: f64| (i.max(0.0) as usize).min(self.width - 1);
        let clampy = |i: f64| (i.max(0.0) as usize).min(self.height - 1);
        let (x0, x1) = (clampx(x0f), clampx(x0f + 1.0));
        let (y0, y1) = (clampy(y0f), clampy(y0f + 1.0));
        let mut out = [0.0; 3];
        let taps = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        for (px, py, w) in taps {
            let c = self.get(px, py);
            for k in 0..3 {
                out[k] += w * c[k] as f64;
            }
        }
        out
    }

    /// Box-filter minification by `factor` in `(0, 1]`.
    ///
    /// Each output texel is the area-weighted mean of the input texels its
    /// footprint covers. Factors `>= 1` return a copy: textures are never upscaled.
    pub fn downscale(&self, factor: f64) -> RgbImage {
        if !(factor > 0.0) || factor >= 1.0 {
            return self.clone();
        }
        let nw = ((self.width as f64 * factor).round() as usize).max(1);
        let nh = ((self.height as f64 * factor).round() as usize).max(1);
        let sx = self.width as f64 / nw as f64;
        let sy = self.height as f64 / nh as f64;
        let mut data = Vec::with_capacity(nw * nh);
        for oy in 0..nh {
            let (y_lo, y_hi) = (oy as f64 * sy, (oy + 1) as f64 * sy);
            for ox in 0..nw {
                let (x_lo, x_hi) = (ox as f64 * sx, (ox + 1) as f64 * sx);
                let mut acc = [0.0f64; 3];
                let mut wsum = 0.0;
                for iy in (y_lo.floor() as usize)..(y_hi.ceil() as usize).min(self.height) {
                    let wy = (y_hi.min(iy as f64 + 1.0) - y_lo.max(iy as f64)).max(0.0);
                    for ix in (x_lo.floor() as usize)..(x_hi.ceil() as usize).min(self.width) {
                        let wx = (x_hi.min(ix as f64 + 1.0) - x_lo.max(ix as f64)).max(0.0);
                        let w = wx * wy;
                        let c = self.get(ix, iy);
                        for k in 0..3 {
                            acc[k] += w * c[k] as f64;
                        }
                        wsum += w;
                    }
                }
                data.push(acc.map(|a| (a / wsum) as f32));
            }
        }
        RgbImage {
            width: nw,
            height: nh,
            data,
        }
    }
}
