use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use uv3_core::io::{self, Provenance};
use uv3_core::laplacian::build_laplacians;
use uv3_core::mesh::{connected_components, load_mesh, mesh_stats, MeshStats};
use uv3_core::sampling::SurfaceSamples;
use uv3_core::seeds;
use uv3_core::spectral::{eigendecompose, heat_diffuse};
use uv3_core::{Mesh, SpectralBasis};
use uv3_nn::toy::two_tone_sphere;
use uv3_nn::{DenoiserConfig, DenoiserParams, ShapeContext, TrainConfig, TrainReport, TrainingShape};
use uv3_render::{render_image, save_png, Bvh, Camera, PointCloudTexture, ShadeMode};

use crate::colormap::colorize;
use crate::error::{CliError, Result};
use crate::PipelineConfig;

/// Operators written by `precompute`, by file tag.
pub const OPERATORS: [&str; 3] = ["mixed", "mesh", "cloud"];

/// `prefix.tag.ext`, or `prefix.ext` for the mixed operator.
pub fn artifact_path(prefix: &Path, tag: &str, ext: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    if tag != "mixed" {
        s.push(".");
        s.push(tag);
    }
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Eigenvalues below `1e-8` of the largest kept one.
pub fn zero_eigenvalue_count(basis: &SpectralBasis) -> usize {
    let top = basis.eigenvalues().last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    basis.eigenvalues().iter().filter(|&&l| l <= 1e-8 * top).count()
}

fn read_mesh(path: &Path) -> Result<Mesh> {
    let (mesh, report) = load_mesh(path)?;
    if report.dropped_faces + report.dropped_vertices > 0 {
        warn!(
            "{}: dropped {} faces and {} vertices",
            path.display(),
            report.dropped_faces,
            report.dropped_vertices
        );
    }
    for w in &report.warnings {
        warn!("{}: {w}", path.display());
    }
    Ok(mesh)
}

#[derive(Debug, Clone)]
pub struct PrecomputeReport {
    pub stats: MeshStats,
    /// Zero eigenvalues of the mixed operator.
    pub zero_eigenvalues: usize,
    pub files: Vec<PathBuf>,
}

/// Writes `prefix.uv3l` / `prefix.uv3s` for the mixed operator, and the mesh and
/// point-cloud operators next to them when `all_operators` is set.
pub fn precompute(mesh_path: &Path, prefix: &Path, cfg: &PipelineConfig, all_operators: bool) -> Result<PrecomputeReport> {
    cfg.validate()?;
    let mesh = read_mesh(mesh_path)?;
    let stats = mesh_stats(&mesh);
    let k = cfg.k.min(mesh.vertex_count());
    if k < cfg.k {
        warn!("{} has {} vertices; keeping {k} eigenpairs", mesh_path.display(), mesh.vertex_count());
    }
    let set = build_laplacians(&mesh, cfg.knn, cfg.rho)?;
    let prov = cfg.provenance("precompute");
    let mut files = Vec::new();
    let mut zero = 0;
    for tag in OPERATORS {
        if tag != "mixed" && !all_operators {
            continue;
        }
        let op = match tag {
            "mixed" => &set.mixed,
            "mesh" => &set.mesh,
            _ => &set.cloud,
        };
        let basis = eigendecompose(op, &set.mass, k)?;
        if tag == "mixed" {
            zero = zero_eigenvalue_count(&basis);
        }
        let (lpath, spath) = (artifact_path(prefix, tag, "uv3l"), artifact_path(prefix, tag, "uv3s"));
        io::save_operator(&lpath, op, &prov)?;
        io::save_basis(&spath, &basis, &prov)?;
        info!("{tag}: {} zero eigenvalues among {k}", zero_eigenvalue_count(&basis));
        files.extend([lpath, spath]);
    }
    info!(
        "{}: {} vertices, {} faces, area {:.6}, {:.3} faces per vertex, {} components",
        mesh_path.display(),
        stats.vertex_count,
        stats.face_count,
        stats.total_area,
        stats.mean_incident_faces,
        stats.connected_component_count
    );
    Ok(PrecomputeReport {
        stats,
        zero_eigenvalues: zero,
        files,
    })
}

/// Runs `precompute` on every `.obj` in `dir` with `jobs` workers; outputs are
/// named after the mesh stems inside `out_dir`.
pub fn precompute_dir(
    dir: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    all_operators: bool,
    jobs: usize,
) -> Result<Vec<(PathBuf, Result<PrecomputeReport>)>> {
    let mut meshes: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| uv3_core::Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")))
        .collect();
    meshes.sort();
    fs::create_dir_all(out_dir).map_err(|e| uv3_core::Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(|| {
        meshes
            .into_par_iter()
            .map(|m| {
                let stem = m.file_stem().map(|s| s.to_owned()).unwrap_or_default();
                let r = precompute(&m, &out_dir.join(stem), cfg, all_operators);
                (m, r)
            })
            .collect()
    }))
}

#[derive(Debug, Clone)]
pub struct SampleReport {
    pub count: usize,
    pub target: usize,
    pub colored: bool,
}

impl SampleReport {
    /// `[0.7 P*, 1.3 P*]`.
    pub fn band(&self) -> (f64, f64) {
        (0.7 * self.target as f64, 1.3 * self.target as f64)
    }

    pub fn within_band(&self) -> bool {
        let (lo, hi) = self.band();
        (lo..=hi).contains(&(self.count as f64))
    }
}

fn load_spectra(path: &Path, k: usize) -> Result<SpectralBasis> {
    let (basis, _) = io::load_basis(path)?;
    Ok(if basis.k() > k { basis.truncated(k) } else { basis })
}

fn draw_samples(mesh: &Mesh, basis: &SpectralBasis, cfg: &PipelineConfig, with_colors: bool) -> Result<SurfaceSamples> {
    let sampling = uv3_core::sampling::SamplingConfig {
        with_colors,
        ..cfg.sampling()
    };
    Ok(SurfaceSamples::sample(mesh, basis, &sampling, seeds::substream(cfg.seed, "pds"))?)
}

/// Online sampling of one instance, colors included when the mesh has any.
pub fn sample(mesh_path: &Path, spectra: &Path, out: &Path, cfg: &PipelineConfig) -> Result<SampleReport> {
    cfg.validate()?;
    let mesh = read_mesh(mesh_path)?;
    let basis = load_spectra(spectra, cfg.k)?;
    let colored = mesh.base_color().is_some() || (mesh.texture().is_some() && mesh.uv_coords().is_some());
    let samples = draw_samples(&mesh, &basis, cfg, colored)?;
    io::save_samples(out, &samples, &cfg.provenance("sample"))?;
    let report = SampleReport {
        count: samples.len(),
        target: cfg.target,
        colored,
    };
    let (lo, hi) = report.band();
    info!(
        "{} samples for target {} (band [{lo:.0}, {hi:.0}]{})",
        report.count,
        report.target,
        if report.within_band() { "" } else { ", outside" }
    );
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct HeatFrame {
    pub operator: &'static str,
    pub h: f64,
    /// Mass-weighted total heat.
    pub total: f64,
    /// Mass-weighted heat per connected component.
    pub per_component: Vec<f64>,
    pub image: PathBuf,
}

#[derive(Debug, Clone)]
pub struct DiffuseReport {
    pub component_of_source: usize,
    pub frames: Vec<HeatFrame>,
}

impl DiffuseReport {
    /// Largest deviation of any frame's total heat from the unit impulse.
    pub fn conservation_error(&self) -> f64 {
        self.frames.iter().map(|f| (f.total - 1.0).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct DiffuseOptions {
    pub source: usize,
    pub times: Vec<f64>,
    /// Reuse `precompute --all-operators` output under this prefix when present.
    pub spectra: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
}

/// Diffuses a unit-mass impulse under each operator and renders every frame.
pub fn diffuse_demo(mesh_path: &Path, out_dir: &Path, opts: &DiffuseOptions, cfg: &PipelineConfig) -> Result<DiffuseReport> {
    cfg.validate()?;
    let mesh = read_mesh(mesh_path)?;
    let n = mesh.vertex_count();
    if opts.source >= n {
        return Err(CliError::Usage(format!("source vertex {} out of range for {n} vertices", opts.source)));
    }
    if let Some(h) = opts.times.iter().find(|h| !(**h >= 0.0 && h.is_finite())) {
        return Err(CliError::Usage(format!("diffusion time {h} must be finite and non-negative")));
    }
    fs::create_dir_all(out_dir).map_err(|e| uv3_core::Error::io(out_dir, e))?;
    let (labels, count) = connected_components(&mesh);
    let set = build_laplacians(&mesh, cfg.knn, cfg.rho)?;
    let k = cfg.k.min(n);
    let bvh = Bvh::build(&mesh);
    let camera = Camera::orbit(&mesh, 0.6, 0.4, opts.width, opts.height)?;
    let mut meta = cfg.provenance("diffuse-demo");
    meta.extend(camera.metadata());

    let mut frames = Vec::new();
    for tag in OPERATORS {
        let cached = opts
            .spectra
            .as_ref()
            .map(|p| artifact_path(p, tag, "uv3s"))
            .filter(|p| p.exists());
        let basis = match cached {
            Some(p) => load_spectra(&p, k)?,
            None => {
                let op = match tag {
                    "mixed" => &set.mixed,
                    "mesh" => &set.mesh,
                    _ => &set.cloud,
                };
                eigendecompose(op, &set.mass, k)?
            }
        };
        if basis.dim() != n {
            return Err(CliError::Usage(format!("{tag} spectra have {} rows, mesh has {n} vertices", basis.dim())));
        }
        let mass: Vec<f64> = (0..n).map(|i| basis.mass().value(i)).collect();
        let mut y = DMatrix::zeros(n, 1);
        y[(opts.source, 0)] = 1.0 / mass[opts.source];
        let mut fields = Vec::with_capacity(opts.times.len());
        for &h in &opts.times {
            fields.push((h, heat_diffuse(&basis, &y, &[h])?));
        }
        for (i, (h, field)) in fields.into_iter().enumerate() {
            let values = field.column(0);
            let mut per_component = vec![0.0; count];
            for v in 0..n {
                per_component[labels[v]] += mass[v] * values[v];
            }
            let total = per_component.iter().sum();
            let texture = PointCloudTexture::new(mesh.vertices(), colorize(values.as_slice()))?;
            let image = render_image(&mesh, &bvh, &texture, &camera, ShadeMode::Albedo);
            let path = out_dir.join(format!("{tag}_{i:02}.png"));
            let mut m = meta.clone();
            m.extend([("operator".to_string(), tag.to_string()), ("h".to_string(), h.to_string())]);
            save_png(&image, &path, &m)?;
            info!("{tag} h={h}: total heat {total:.9}, per component {per_component:?}");
            frames.push(HeatFrame {
                operator: tag,
                h,
                total,
                per_component,
                image: path,
            });
        }
    }
    Ok(DiffuseReport {
        component_of_source: labels[opts.source],
        frames,
    })
}

#[derive(Debug, Clone)]
pub struct ToyOptions {
    pub train_steps: usize,
    pub lr: f64,
    pub warmup: usize,
    pub icosphere_level: u32,
    pub target: usize,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            train_steps: 2000,
            lr: 1e-3,
            warmup: 100,
            icosphere_level: 3,
            target: 300,
        }
    }
}

/// The two-tone training sphere with its mesh eigenbasis.
pub fn toy_shape(model: &DenoiserConfig, opts: &ToyOptions, cfg: &PipelineConfig) -> Result<TrainingShape> {
    let mesh = two_tone_sphere(opts.icosphere_level);
    let set = build_laplacians(&mesh, cfg.knn, cfg.rho)?;
    let basis = eigendecompose(&set.mixed, &set.mass, model.k_eigs.max(16).min(mesh.vertex_count()))?;
    Ok(TrainingShape {
        mesh,
        basis,
        sampling: uv3_core::sampling::SamplingConfig {
            target_count: opts.target,
            fps_count: model.fps_count,
            n_signatures: model.n_sihks,
            scale_triangles: cfg.scale_triangles,
            ..Default::default()
        },
    })
}

/// Trains the small denoiser on the two-tone sphere and writes the parameter file.
pub fn train_toy(out: &Path, opts: &ToyOptions, cfg: &PipelineConfig) -> Result<(DenoiserParams, TrainReport)> {
    cfg.validate()?;
    let model = DenoiserConfig {
        n_sihks: cfg.n_sihks,
        ..DenoiserConfig::toy()
    };
    let shape = toy_shape(&model, opts, cfg)?;
    let mut params = DenoiserParams::init(&model, seeds::substream(cfg.seed, "init"))?;
    let train_cfg = TrainConfig {
        steps: opts.train_steps,
        lr: opts.lr,
        warmup: opts.warmup,
        seed: cfg.seed,
        ..TrainConfig::default()
    };
    let report = uv3_nn::train(&mut params, std::slice::from_ref(&shape), &cfg.schedule()?, &train_cfg)?;
    let mut prov = cfg.provenance("train-toy");
    prov.extend([
        ("train_steps".to_string(), opts.train_steps.to_string()),
        ("lr".to_string(), opts.lr.to_string()),
        ("warmup".to_string(), opts.warmup.to_string()),
        ("toy_target".to_string(), opts.target.to_string()),
    ]);
    params.save(out, &prov)?;
    Ok((params, report))
}

/// Writes one `step,loss` line per training step.
pub fn write_losses(path: &Path, report: &TrainReport) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        text.push_str(&format!("{i},{l}\n"));
    }
    fs::write(path, text).map_err(|e| uv3_core::Error::io(path, e))?;
    Ok(())
}

/// Samples the surface, runs the reverse process and writes the colored samples.
///
/// Anchor and signature counts follow the parameter file rather than `cfg`.
pub fn generate(mesh_path: &Path, spectra: &Path, params_path: &Path, out: &Path, cfg: &PipelineConfig) -> Result<SurfaceSamples> {
    cfg.validate()?;
    let mesh = read_mesh(mesh_path)?;
    let (params, _) = DenoiserParams::load(params_path)?;
    let model = &params.config;
    let (basis, _) = io::load_basis(spectra)?;
    if basis.k() < model.k_eigs {
        return Err(CliError::Usage(format!(
            "{} holds {} eigenpairs but the network needs {}",
            spectra.display(),
            basis.k(),
            model.k_eigs
        )));
    }
    let run_cfg = PipelineConfig {
        fps: model.fps_count,
        n_sihks: model.n_sihks,
        ..cfg.clone()
    };
    let mut samples = draw_samples(&mesh, &basis, &run_cfg, false)?;
    let ctx = ShapeContext::from_samples(&mesh, &samples, basis.eigenvalues(), model.k_eigs)?;
    let colors = uv3_nn::generate(&params, &ctx, &cfg.schedule()?, cfg.seed)?;
    samples.colors = Some(colors.row_iter().map(|r| [r[0], r[1], r[2]]).collect());
    let mut prov = run_cfg.provenance("generate");
    prov.push(("params".to_string(), params_path.display().to_string()));
    io::save_samples(out, &samples, &prov)?;
    Ok(samples)
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub width: usize,
    pub height: usize,
    pub mode: ShadeMode,
    /// Random viewpoints to draw when no explicit angles are given.
    pub views: usize,
    pub azimuth: Option<f64>,
    pub elevation: Option<f64>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            mode: ShadeMode::Albedo,
            views: 1,
            azimuth: None,
            elevation: None,
        }
    }
}

fn view_path(out: &Path, i: usize, views: usize) -> PathBuf {
    if views == 1 {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_{i}.png"))
}

/// Renders a colored sample file on its mesh; returns the written PNGs.
pub fn render(mesh_path: &Path, texture: &Path, out: &Path, opts: &RenderOptions, cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let mesh = read_mesh(mesh_path)?;
    let (samples, _) = io::load_samples(texture)?;
    let colors = samples
        .colors
        .ok_or_else(|| CliError::Usage(format!("{} carries no colors", texture.display())))?;
    let tex = PointCloudTexture::new(&samples.points, colors)?;
    let bvh = Bvh::build(&mesh);
    let explicit = opts.azimuth.is_some() || opts.elevation.is_some();
    let views = if explicit { 1 } else { opts.views.max(1) };
    let mut written = Vec::with_capacity(views);
    for i in 0..views {
        let camera = if explicit {
            let el = opts.elevation.unwrap_or(0.0);
            if el.abs() > uv3_render::camera::MAX_ELEVATION {
                return Err(CliError::Usage(format!("elevation {el} exceeds the pi/3 bound")));
            }
            Camera::orbit(&mesh, opts.azimuth.unwrap_or(0.0), el, opts.width, opts.height)?
        } else {
            Camera::random(&mesh, seeds::indexed(cfg.seed, "camera", i as u64), opts.width, opts.height)?
        };
        let image = render_image(&mesh, &bvh, &tex, &camera, opts.mode);
        let mut meta: Provenance = cfg.provenance("render");
        meta.extend(camera.metadata());
        meta.push(("mode".to_string(), format!("{:?}", opts.mode).to_lowercase()));
        let path = view_path(out, i, views);
        save_png(&image, &path, &meta)?;
        written.push(path);
    }
    Ok(written)
}
