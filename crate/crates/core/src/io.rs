//! Little-endian binary artifacts: operators (`UV3L`), spectral bases
//! (`UV3S`) and surface samples (`UV3T`), plus PLY export.
//!
//! Every file may end with a provenance trailer (`UV3C`, a length and UTF-8
//! `key=value` lines) echoing the configuration that produced it. Readers
//! return it alongside the payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Vec3};
use crate::sampling::SurfaceSamples;
use crate::sparse::SparseOperator;
use crate::spectral::{Mass, SpectralBasis};

pub const OPERATOR_MAGIC: &[u8; 4] = b"UV3L";
pub const BASIS_MAGIC: &[u8; 4] = b"UV3S";
pub const SAMPLES_MAGIC: &[u8; 4] = b"UV3T";
pub const PROVENANCE_MAGIC: &[u8; 4] = b"UV3C";

/// Ordered `key=value` pairs describing how an artifact was made.
pub type Provenance = Vec<(String, String)>;

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.bytes(&v.to_le_bytes());
    }

    pub fn index(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("index {v} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    pub fn provenance(&mut self, prov: &Provenance) {
        if prov.is_empty() {
            return;
        }
        let text: String = prov.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        self.bytes(PROVENANCE_MAGIC);
        self.u32(text.len() as u32);
        self.bytes(text.as_bytes());
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    pub fn save(self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.buf).map_err(|e| Error::io(path, e))
    }
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated file at byte {}", self.pos)));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(want),
                String::from_utf8_lossy(got)
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count that must be backed by at least `unit` bytes per item.
    pub fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(unit) > self.buf.len() - self.pos {
            return Err(Error::Format(format!("count {n} exceeds the file size")));
        }
        Ok(n)
    }

    /// Optional trailer; anything else left over is an error.
    pub fn finish(mut self) -> Result<Provenance> {
        if self.pos == self.buf.len() {
            return Ok(Vec::new());
        }
        self.magic(PROVENANCE_MAGIC)?;
        let len = self.u32()? as usize;
        let text = std::str::from_utf8(self.take(len)?).map_err(|e| Error::Format(e.to_string()))?;
        if self.pos != self.buf.len() {
            return Err(Error::Format("trailing bytes after provenance".into()));
        }
        Ok(text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_operator(op: &SparseOperator, prov: &Provenance) -> Result<Vec<u8>> {
    let mut w = ByteWriter::new();
    w.bytes(OPERATOR_MAGIC);
    w.u64(op.dim() as u64);
    w.u64(op.nnz() as u64);
    for (r, c, v) in op.triplets() {
        w.index(r)?;
        w.index(c)?;
        w.f64(v);
    }
    w.provenance(prov);
    Ok(w.into_inner())
}

pub fn decode_operator(bytes: &[u8]) -> Result<(SparseOperator, Provenance)> {
    let mut r = ByteReader::new(bytes);
    r.magic(OPERATOR_MAGIC)?;
    let n = r.u64()? as usize;
    let nnz = r.count(16)?;
    let mut triplets = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        triplets.push((r.u32()? as usize, r.u32()? as usize, r.f64()?));
    }
    let op = SparseOperator::from_triplets(n, &triplets)?;
    Ok((op, r.finish()?))
}

pub fn encode_basis(basis: &SpectralBasis, prov: &Provenance) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(BASIS_MAGIC);
    w.u64(basis.dim() as u64);
    w.u64(basis.k() as u64);
    for &l in basis.eigenvalues() {
        w.f64(l);
    }
    let phi = basis.eigenvectors();
    for i in 0..basis.dim() {
        for k in 0..basis.k() {
            w.f32(phi[(i, k)] as f32);
        }
    }
    match basis.mass() {
        Mass::Diagonal(d) => {
            w.u8(0);
            d.iter().for_each(|&m| w.f64(m));
        }
        Mass::Scalar(s) => {
            w.u8(1);
            w.f64(*s);
        }
    }
    w.provenance(prov);
    w.into_inner()
}

pub fn decode_basis(bytes: &[u8]) -> Result<(SpectralBasis, Provenance)> {
    let mut r = ByteReader::new(bytes);
    r.magic(BASIS_MAGIC)?;
    let n = r.u64()? as usize;
    let k = r.count(8)?;
    let eigenvalues = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if n.saturating_mul(k).saturating_mul(4) > bytes.len() {
        return Err(Error::Format("eigenvector block exceeds the file size".into()));
    }
    let mut phi = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            phi[(i, j)] = r.f32()? as f64;
        }
    }
    let mass = match r.u8()? {
        0 => Mass::Diagonal((0..n).map(|_| r.f64()).collect::<Result<_>>()?),
        1 => Mass::Scalar(r.f64()?),
        flag => return Err(Error::Format(format!("unknown mass flag {flag}"))),
    };
    Ok((SpectralBasis::new(eigenvalues, phi, mass)?, r.finish()?))
}

/// Layout: magic, counts `(P, K, S, n_signatures)`, then points, face ids,
/// barycentrics, radius, eigenvectors, mass, FPS indices, SIHKS and an
/// optional colour block behind a flag byte. Floats are f32 except the two
/// scalars; indices are u32.
pub fn encode_samples(s: &SurfaceSamples, prov: &Provenance) -> Result<Vec<u8>> {
    let p = s.len();
    let mut w = ByteWriter::new();
    w.bytes(SAMPLES_MAGIC);
    for c in [p, s.phi_p.ncols(), s.fps_indices.len(), s.sihks_p.ncols()] {
        w.u64(c as u64);
    }
    if s.phi_p.nrows() != p || s.sihks_p.nrows() != p || s.face_ids.len() != p || s.barycentric.len() != p {
        return Err(Error::Format("sample blocks disagree on the point count".into()));
    }
    for q in &s.points {
        q.iter().for_each(|&x| w.f32(x as f32));
    }
    for &f in &s.face_ids {
        w.index(f)?;
    }
    for b in &s.barycentric {
        b.iter().for_each(|&x| w.f32(x as f32));
    }
    w.f64(s.radius);
    for i in 0..p {
        s.phi_p.row(i).iter().for_each(|&x| w.f32(x as f32));
    }
    w.f64(s.mass_scalar);
    for &i in &s.fps_indices {
        w.index(i)?;
    }
    for i in 0..p {
        s.sihks_p.row(i).iter().for_each(|&x| w.f32(x as f32));
    }
    match &s.colors {
        Some(c) => {
            if c.len() != p {
                return Err(Error::Format("colour count disagrees with the point count".into()));
            }
            w.u8(1);
            c.iter().flatten().for_each(|&x| w.f32(x as f32));
        }
        None => w.u8(0),
    }
    w.provenance(prov);
    Ok(w.into_inner())
}

pub fn decode_samples(bytes: &[u8]) -> Result<(SurfaceSamples, Provenance)> {
    let mut r = ByteReader::new(bytes);
    r.magic(SAMPLES_MAGIC)?;
    let p = r.count(12)?;
    let k = r.u64()? as usize;
    let s = r.count(4)?;
    let nsig = r.u64()? as usize;
    if p.saturating_mul(k.saturating_add(nsig)).saturating_mul(4) > bytes.len() {
        return Err(Error::Format("sample blocks exceed the file size".into()));
    }
    let vec3 = |r: &mut ByteReader| -> Result<[f64; 3]> { Ok([r.f32()? as f64, r.f32()? as f64, r.f32()? as f64]) };
    let points = (0..p).map(|_| vec3(&mut r).map(|a| Vec3::from(a))).collect::<Result<Vec<_>>>()?;
    let face_ids = (0..p).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let barycentric = (0..p).map(|_| vec3(&mut r)).collect::<Result<Vec<_>>>()?;
    let radius = r.f64()?;
    let mut phi_p = DMatrix::zeros(p, k);
    for i in 0..p {
        for j in 0..k {
            phi_p[(i, j)] = r.f32()? as f64;
        }
    }
    let mass_scalar = r.f64()?;
    let fps_indices = (0..s).map(|_| r.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    if fps_indices.iter().any(|&i| i >= p) {
        return Err(Error::Format("FPS index out of range".into()));
    }
    let mut sihks_p = DMatrix::zeros(p, nsig);
    for i in 0..p {
        for j in 0..nsig {
            sihks_p[(i, j)] = r.f32()? as f64;
        }
    }
    let colors = match r.u8()? {
        0 => None,
        1 => Some((0..p).map(|_| vec3(&mut r)).collect::<Result<Vec<_>>>()?),
        flag => return Err(Error::Format(format!("unknown colour flag {flag}"))),
    };
    let samples = SurfaceSamples {
        points,
        face_ids,
        barycentric,
        radius,
        phi_p,
        mass_scalar,
        fps_indices,
        sihks_p,
        colors,
    };
    Ok((samples, r.finish()?))
}

pub fn save_operator(path: &Path, op: &SparseOperator, prov: &Provenance) -> Result<()> {
    fs::write(path, encode_operator(op, prov)?).map_err(|e| Error::io(path, e))
}

pub fn load_operator(path: &Path) -> Result<(SparseOperator, Provenance)> {
    decode_operator(&read_file(path)?)
}

pub fn save_basis(path: &Path, basis: &SpectralBasis, prov: &Provenance) -> Result<()> {
    fs::write(path, encode_basis(basis, prov)).map_err(|e| Error::io(path, e))
}

pub fn load_basis(path: &Path) -> Result<(SpectralBasis, Provenance)> {
    decode_basis(&read_file(path)?)
}

pub fn save_samples(path: &Path, samples: &SurfaceSamples, prov: &Provenance) -> Result<()> {
    fs::write(path, encode_samples(samples, prov)?).map_err(|e| Error::io(path, e))
}

pub fn load_samples(path: &Path) -> Result<(SurfaceSamples, Provenance)> {
    decode_samples(&read_file(path)?)
}

/// ASCII PLY point cloud with optional 8-bit colours.
pub fn write_ply(mut w: impl Write, points: &[Vec3], colors: Option<&[[f64; 3]]>) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", points.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        write!(w, "{} {} {}", p.x as f32, p.y as f32, p.z as f32)?;
        if let Some(c) = colors {
            let q = c[i].map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8);
            write!(w, " {} {} {}", q[0], q[1], q[2])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Wavefront OBJ with exact (round-trip) coordinates and per-corner UVs when present.
pub fn write_obj(mut w: impl Write, mesh: &Mesh) -> std::io::Result<()> {
    for v in mesh.vertices() {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    if let Some(uvs) = mesh.uv_coords() {
        for uv in uvs.iter().flatten() {
            writeln!(w, "vt {} {}", uv[0], uv[1])?;
        }
        for (i, f) in mesh.faces().iter().enumerate() {
            let t = 3 * i + 1;
            writeln!(w, "f {}/{} {}/{} {}/{}", f[0] + 1, t, f[1] + 1, t + 1, f[2] + 1, t + 2)?;
        }
    } else {
        for f in mesh.faces() {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
    }
    Ok(())
}
