//! Denoiser configuration, named parameter tensors and the UV3P file.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uv3_core::io::{ByteReader, ByteWriter, Provenance};

use crate::error::{Error, Result};
use crate::graph::inverse_softplus;

const PARAMS_MAGIC: &[u8; 4] = b"UV3P";

/// Range of the initial diffusion times (after softplus).
pub const INIT_TIME_RANGE: (f64, f64) = (1e-4, 1e-1);

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig {
    /// Feature channels carried between blocks.
    pub width: usize,
    pub mlp_width: usize,
    /// Down blocks; the same number of up blocks follows the middle block.
    pub levels: usize,
    pub groups: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub time_dim: usize,
    pub time_hidden: usize,
    pub k_eigs: usize,
    pub n_sihks: usize,
    pub cond_hidden: usize,
    pub cond_dim: usize,
    pub fps_count: usize,
    pub norm_after_time: bool,
    pub norm_eps: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            width: 256,
            mlp_width: 256,
            levels: 5,
            groups: 32,
            heads: 8,
            head_dim: 64,
            time_dim: 256,
            time_hidden: 1024,
            k_eigs: 128,
            n_sihks: 32,
            cond_hidden: 64,
            cond_dim: 16,
            fps_count: 250,
            norm_after_time: true,
            norm_eps: 1e-5,
        }
    }
}

impl DenoiserConfig {
    /// Narrow network for desk-scale training runs.
    pub fn toy() -> Self {
        Self {
            width: 32,
            mlp_width: 32,
            groups: 8,
            heads: 2,
            head_dim: 16,
            time_dim: 32,
            time_hidden: 64,
            k_eigs: 64,
            fps_count: 64,
            ..Self::default()
        }
    }

    /// Channels entering the attention projections: features plus both conditioning embeddings.
    pub fn attention_channels(&self) -> usize {
        self.width + 2 * self.cond_dim
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.width,
            self.mlp_width,
            self.levels,
            self.groups,
            self.heads,
            self.head_dim,
            self.time_dim,
            self.time_hidden,
            self.k_eigs,
            self.n_sihks,
            self.cond_hidden,
            self.cond_dim,
            self.fps_count,
        ];
        if positive.contains(&0) {
            return Err(Error::Config("all sizes must be positive".into()));
        }
        if self.width % self.groups != 0 || self.attention_channels() % self.groups != 0 {
            return Err(Error::Config(format!(
                "{} groups must divide both {} and {}",
                self.groups,
                self.width,
                self.attention_channels()
            )));
        }
        if self.time_dim % 2 != 0 || self.time_dim < 4 {
            return Err(Error::Config("time_dim must be even and at least 4".into()));
        }
        if !(self.norm_eps > 0.0) {
            return Err(Error::Config("norm_eps must be positive".into()));
        }
        Ok(())
    }

    /// Block prefixes in execution order.
    pub fn block_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.levels).map(|i| format!("down{i}")).collect();
        names.push("mid".into());
        names.extend((0..self.levels).map(|i| format!("up{i}")));
        names
    }

    /// Every tensor with its shape and initializer, in declaration order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut s = Specs::default();
        let c = self.width;
        s.linear("input", 3, c);
        s.linear("time.0", self.time_dim, self.time_hidden);
        s.linear("time.1", self.time_hidden, self.time_hidden);
        s.linear("lambda.0", self.k_eigs, self.cond_hidden);
        s.linear("lambda.1", self.cond_hidden, self.cond_dim);
        s.linear("sihks.0", self.n_sihks, self.cond_hidden);
        s.linear("sihks.1", self.cond_hidden, self.cond_dim);
        for name in self.block_names() {
            let cin = if name.starts_with("up") { 2 * c } else { c };
            for j in 0..3 {
                let i = if j == 0 { cin } else { c };
                self.diffusion_block_specs(&mut s, &format!("{name}.db{j}"), i, c);
            }
            self.attention_specs(&mut s, &format!("{name}.attn"));
        }
        s.push("output.w", c, 3, Init::Zeros);
        s.push("output.b", 1, 3, Init::Zeros);
        s.0
    }

    fn diffusion_block_specs(&self, s: &mut Specs, p: &str, cin: usize, cout: usize) {
        let w = self.mlp_width;
        s.push(&format!("{p}.h"), 1, cin, Init::DiffusionTime);
        let b = 1.0 / (cin as f64).sqrt();
        s.push(&format!("{p}.grad_re"), cin, cin, Init::Uniform(b));
        s.push(&format!("{p}.grad_im"), cin, cin, Init::Uniform(b));
        s.linear(&format!("{p}.mlp0"), 3 * cin, w);
        s.linear(&format!("{p}.mlp1"), w, w);
        s.linear(&format!("{p}.mlp2"), w, cout);
        s.linear(&format!("{p}.time"), self.time_hidden, cout);
        s.push(&format!("{p}.norm.gamma"), 1, cout, Init::Ones);
        s.push(&format!("{p}.norm.beta"), 1, cout, Init::Zeros);
        if cin != cout {
            s.linear(&format!("{p}.skip"), cin, cout);
        }
    }

    fn attention_specs(&self, s: &mut Specs, p: &str) {
        let c = self.width;
        let a = self.attention_channels();
        let hd = self.heads * self.head_dim;
        s.push(&format!("{p}.h_in"), 1, c, Init::DiffusionTime);
        s.push(&format!("{p}.h_out"), 1, c, Init::DiffusionTime);
        s.push(&format!("{p}.norm.gamma"), 1, a, Init::Ones);
        s.push(&format!("{p}.norm.beta"), 1, a, Init::Zeros);
        s.linear(&format!("{p}.q"), a, hd);
        s.linear(&format!("{p}.k"), a, hd);
        s.linear(&format!("{p}.v"), a, hd);
        s.linear(&format!("{p}.out"), hd, c);
        s.push(&format!("{p}.gate"), 1, c, Init::Zeros);
    }

    fn header(&self) -> [usize; 13] {
        [
            self.width,
            self.mlp_width,
            self.levels,
            self.groups,
            self.heads,
            self.head_dim,
            self.time_dim,
            self.time_hidden,
            self.k_eigs,
            self.n_sihks,
            self.cond_hidden,
            self.cond_dim,
            self.fps_count,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Uniform(f64),
    /// Unconstrained value whose softplus is log-uniform in [`INIT_TIME_RANGE`].
    DiffusionTime,
}

#[derive(Debug, Clone)]
pub struct TensorSpec {
    pub name: String,
    pub shape: (usize, usize),
    pub init: Init,
}

#[derive(Default)]
struct Specs(Vec<TensorSpec>);

impl Specs {
    fn push(&mut self, name: &str, rows: usize, cols: usize, init: Init) {
        self.0.push(TensorSpec {
            name: name.to_string(),
            shape: (rows, cols),
            init,
        });
    }

    /// `y = x W + b` with fan-in scaled uniform initialization.
    fn linear(&mut self, p: &str, fan_in: usize, fan_out: usize) {
        let b = 1.0 / (fan_in as f64).sqrt();
        self.push(&format!("{p}.w"), fan_in, fan_out, Init::Uniform(b));
        self.push(&format!("{p}.b"), 1, fan_out, Init::Uniform(b));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    pub config: DenoiserConfig,
    tensors: BTreeMap<String, DMatrix<f64>>,
}

impl DenoiserParams {
    pub fn init(config: &DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = INIT_TIME_RANGE;
        let mut tensors = BTreeMap::new();
        for spec in config.tensor_specs() {
            let (r, c) = spec.shape;
            let m = match spec.init {
                Init::Zeros => DMatrix::zeros(r, c),
                Init::Ones => DMatrix::from_element(r, c, 1.0),
                Init::Uniform(b) => DMatrix::from_fn(r, c, |_, _| rng.random_range(-b..b)),
                Init::DiffusionTime => DMatrix::from_fn(r, c, |_, _| {
                    let t = (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
                    inverse_softplus(t)
                }),
            };
            tensors.insert(spec.name, m);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DMatrix<f64>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DMatrix<f64>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut DMatrix<f64>)> {
        self.tensors.iter_mut()
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|m| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Serializes to UV3P; values are stored as `f32`.
    pub fn encode(&self, prov: &Provenance) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.bytes(PARAMS_MAGIC);
        for v in self.config.header() {
            w.index(v)?;
        }
        w.u8(self.config.norm_after_time as u8);
        w.f64(self.config.norm_eps);
        w.index(self.tensors.len())?;
        for (name, m) in &self.tensors {
            w.index(name.len())?;
            w.bytes(name.as_bytes());
            w.u32(2);
            w.index(m.nrows())?;
            w.index(m.ncols())?;
            // row-major payload
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    w.f32(m[(r, c)] as f32);
                }
            }
        }
        w.provenance(prov);
        Ok(w.into_inner())
    }

    pub fn decode(bytes: &[u8]) -> Result<(Self, Provenance)> {
        let mut r = ByteReader::new(bytes);
        r.magic(PARAMS_MAGIC)?;
        let mut h = [0usize; 13];
        for v in h.iter_mut() {
            *v = r.u32()? as usize;
        }
        let config = DenoiserConfig {
            width: h[0],
            mlp_width: h[1],
            levels: h[2],
            groups: h[3],
            heads: h[4],
            head_dim: h[5],
            time_dim: h[6],
            time_hidden: h[7],
            k_eigs: h[8],
            n_sihks: h[9],
            cond_hidden: h[10],
            cond_dim: h[11],
            fps_count: h[12],
            norm_after_time: r.u8()? != 0,
            norm_eps: r.f64()?,
        };
        config.validate()?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| uv3_core::Error::Format(e.to_string()))?
                .to_string();
            let rank = r.u32()?;
            if rank != 2 {
                return Err(uv3_core::Error::Format(format!("tensor {name} has rank {rank}")).into());
            }
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] = r.f32()? as f64;
                }
            }
            tensors.insert(name, m);
        }
        let prov = r.finish()?;
        let params = Self { config, tensors };
        params.check_shapes()?;
        Ok((params, prov))
    }

    /// Every declared tensor present with its declared shape, and nothing else.
    pub fn check_shapes(&self) -> Result<()> {
        let specs = self.config.tensor_specs();
        if specs.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for spec in specs {
            let m = self
                .tensors
                .get(&spec.name)
                .ok_or_else(|| Error::Config(format!("missing tensor {}", spec.name)))?;
            if m.shape() != spec.shape {
                return Err(Error::Shape {
                    what: spec.name,
                    expected: spec.shape,
                    got: m.shape(),
                });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, prov: &Provenance) -> Result<()> {
        std::fs::write(path, self.encode(prov)?).map_err(|e| uv3_core::Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Provenance)> {
        let bytes = std::fs::read(path).map_err(|e| uv3_core::Error::io(path, e))?;
        Self::decode(&bytes)
    }
}
