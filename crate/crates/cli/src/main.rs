use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use uv3_cli::{
    diffuse_demo, generate, precompute, precompute_dir, render, sample, train_toy, write_losses, DiffuseOptions,
    PipelineConfig, RenderOptions, Result, ToyOptions,
};
use uv3_render::ShadeMode;

#[derive(Parser)]
#[command(name = "uv3", version, about = "Texture generation on surfaces via spectral point-cloud diffusion")]
struct Cli {
    #[command(flatten)]
    pipeline: PipelineArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PipelineArgs {
    /// Eigenpairs per shape
    #[arg(long, global = true, default_value_t = 128)]
    k: usize,
    /// Target sample count
    #[arg(long, global = true, default_value_t = 5000)]
    target: usize,
    /// Attention anchor points
    #[arg(long, global = true, default_value_t = 250)]
    fps: usize,
    /// Point-cloud weight in the mixed Laplacian
    #[arg(long, global = true, default_value_t = 0.05)]
    rho: f64,
    #[arg(long, global = true, default_value_t = 32)]
    n_sihks: usize,
    /// Diffusion steps
    #[arg(long, global = true, default_value_t = 1000)]
    steps: usize,
    /// Neighbors of the point-cloud Laplacian
    #[arg(long, global = true, default_value_t = 30)]
    knn: usize,
    #[arg(long, global = true, default_value_t = 250)]
    scale_triangles: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, global = true, default_value_t = 2e-2)]
    beta_end: f64,
    /// Cosine noise schedule instead of linear betas
    #[arg(long, global = true)]
    cosine: bool,
}

impl From<&PipelineArgs> for PipelineConfig {
    fn from(a: &PipelineArgs) -> Self {
        Self {
            k: a.k,
            target: a.target,
            fps: a.fps,
            rho: a.rho,
            n_sihks: a.n_sihks,
            steps: a.steps,
            knn: a.knn,
            scale_triangles: a.scale_triangles,
            seed: a.seed,
            beta_start: a.beta_start,
            beta_end: a.beta_end,
            cosine: a.cosine,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Albedo,
    Lambertian,
}

#[derive(Subcommand)]
enum Command {
    /// Laplacians and eigenbases for a mesh, or for every .obj in a directory
    Precompute {
        mesh: PathBuf,
        /// Output prefix, or output directory when MESH is a directory
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the mesh-only and point-cloud operators
        #[arg(long)]
        all_operators: bool,
        /// Workers for directory input
        #[arg(long, env = "UV3_NUM_JOBS", default_value_t = 1)]
        jobs: usize,
    },
    /// Poisson-disk samples with interpolated eigenvectors, signatures and colors
    Sample {
        mesh: PathBuf,
        #[arg(long)]
        spectra: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Renders an impulse diffused under the mesh, point-cloud and mixed operators
    DiffuseDemo {
        mesh: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        source: usize,
        #[arg(long = "h", value_delimiter = ',', default_values_t = [0.001, 0.01, 0.1])]
        times: Vec<f64>,
        /// Prefix of `precompute --all-operators` output to reuse
        #[arg(long)]
        spectra: Option<PathBuf>,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
    /// Trains the small denoiser on a two-tone sphere
    TrainToy {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        train_steps: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 100)]
        warmup: usize,
        #[arg(long, default_value_t = 300)]
        toy_target: usize,
        /// Write per-step losses as CSV
        #[arg(long)]
        losses: Option<PathBuf>,
    },
    /// Generates a colored point cloud on a mesh
    Generate {
        mesh: PathBuf,
        #[arg(long)]
        spectra: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write a PLY point cloud
        #[arg(long)]
        ply: Option<PathBuf>,
    },
    /// Ray-casts a colored sample file on its mesh
    Render {
        mesh: PathBuf,
        #[arg(long)]
        texture: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, value_enum, default_value_t = Mode::Albedo)]
        mode: Mode,
        /// Random viewpoints, named OUT_i.png when more than one
        #[arg(long, default_value_t = 1)]
        views: usize,
        #[arg(long, allow_hyphen_values = true)]
        azimuth: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        elevation: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = PipelineConfig::from(&cli.pipeline);
    cfg.validate()?;
    match cli.command {
        Command::Precompute {
            mesh,
            out,
            all_operators,
            jobs,
        } => {
            if mesh.is_dir() {
                let mut failed = None;
                for (path, r) in precompute_dir(&mesh, &out, &cfg, all_operators, jobs)? {
                    match r {
                        Ok(rep) => println!(
                            "{}: {} components, {} zero eigenvalues",
                            path.display(),
                            rep.stats.connected_component_count,
                            rep.zero_eigenvalues
                        ),
                        Err(e) => {
                            error!("{}: {e}", path.display());
                            failed.get_or_insert(e);
                        }
                    }
                }
                return failed.map_or(Ok(()), Err);
            }
            let rep = precompute(&mesh, &out, &cfg, all_operators)?;
            let s = rep.stats;
            println!(
                "vertices {} faces {} area {} mean_incident_faces {} components {} zero_eigenvalues {}",
                s.vertex_count, s.face_count, s.total_area, s.mean_incident_faces, s.connected_component_count, rep.zero_eigenvalues
            );
            for f in rep.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Sample { mesh, spectra, out } => {
            let rep = sample(&mesh, &spectra, &out, &cfg)?;
            let (lo, hi) = rep.band();
            println!(
                "samples {} target {} band [{lo:.0}, {hi:.0}] within {} colored {}",
                rep.count,
                rep.target,
                rep.within_band(),
                rep.colored
            );
        }
        Command::DiffuseDemo {
            mesh,
            out,
            source,
            times,
            spectra,
            width,
            height,
        } => {
            let opts = DiffuseOptions {
                source,
                times,
                spectra,
                width,
                height,
            };
            let rep = diffuse_demo(&mesh, &out, &opts, &cfg)?;
            for f in &rep.frames {
                let others: f64 = f
                    .per_component
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| *c != rep.component_of_source)
                    .map(|(_, v)| v.abs())
                    .sum();
                println!(
                    "{:>5} h={:<8} total {:.9} outside source component {:.3e} -> {}",
                    f.operator,
                    f.h,
                    f.total,
                    others,
                    f.image.display()
                );
            }
            println!("max conservation error {:.3e}", rep.conservation_error());
        }
        Command::TrainToy {
            out,
            train_steps,
            lr,
            warmup,
            toy_target,
            losses,
        } => {
            let opts = ToyOptions {
                train_steps,
                lr,
                warmup,
                target: toy_target,
                ..ToyOptions::default()
            };
            let (_, report) = train_toy(&out, &opts, &cfg)?;
            let n = report.losses.len();
            let w = (n / 20).max(1);
            println!(
                "loss {:.4} (first {w}) -> {:.4} (last {w})",
                report.window_mean(0, w),
                report.window_mean(n.saturating_sub(w), w)
            );
            if let Some(p) = losses {
                write_losses(&p, &report)?;
            }
        }
        Command::Generate {
            mesh,
            spectra,
            params,
            out,
            ply,
        } => {
            let samples = generate(&mesh, &spectra, &params, &out, &cfg)?;
            if let Some(p) = ply {
                let file = std::fs::File::create(&p).map_err(|e| uv3_core::Error::io(&p, e))?;
                uv3_core::io::write_ply(std::io::BufWriter::new(file), &samples.points, samples.colors.as_deref())
                    .map_err(|e| uv3_core::Error::io(&p, e))?;
            }
            println!("generated {} colored points", samples.len());
        }
        Command::Render {
            mesh,
            texture,
            out,
            width,
            height,
            mode,
            views,
            azimuth,
            elevation,
        } => {
            let opts = RenderOptions {
                width,
                height,
                mode: match mode {
                    Mode::Albedo => ShadeMode::Albedo,
                    Mode::Lambertian => ShadeMode::Lambertian,
                },
                views,
                azimuth,
                elevation,
            };
            for p in render(&mesh, &texture, &out, &opts, &cfg)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
