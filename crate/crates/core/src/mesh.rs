//! Triangle meshes: validation, OBJ/MTL ingestion and basic geometry.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::texture::RgbImage;

pub type Vec3 = Vector3<f64>;

/// Per-corner texture coordinates of one face.
pub type FaceUv = [[f64; 2]; 3];

/// A triangle mesh with optional appearance data.
///
/// Invariants (checked by [`Mesh::new`]): every face index is in range, no face
/// repeats a vertex, every face has positive area and every vertex is used by
/// at least one face.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    uv_coords: Option<Vec<FaceUv>>,
    texture: Option<RgbImage>,
    base_color: Option<[f64; 3]>,
}

/// Summary statistics consumed by the sampling stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshStats {
    pub total_area: f64,
    /// Mean number of faces incident to a vertex.
    pub mean_incident_faces: f64,
    pub vertex_count: usize,
    pub face_count: usize,
    pub connected_component_count: usize,
}

/// What `load_mesh` had to discard on the way in.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub dropped_faces: usize,
    pub dropped_vertices: usize,
    pub warnings: Vec<String>,
}

fn tri_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Faces whose area is lost in rounding relative to their longest edge count as degenerate.
fn is_degenerate(a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let area = tri_area(a, b, c);
    let lmax = (b - a)
        .norm_squared()
        .max((c - b).norm_squared())
        .max((a - c).norm_squared());
    !(area > f64::EPSILON * lmax) || !area.is_finite()
}

impl Mesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        let n = vertices.len();
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        let mut used = vec![false; n];
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references a vertex out of range ({n} vertices)"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex")));
            }
            if is_degenerate(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) {
                return Err(Error::InvalidMesh(format!("face {fi} has zero area")));
            }
            for &i in f {
                used[i] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not used by any face")));
        }
        Ok(Self {
            vertices,
            faces,
            uv_coords: None,
            texture: None,
            base_color: None,
        })
    }

    pub fn with_uvs(mut self, uvs: Vec<FaceUv>) -> Result<Self> {
        if uvs.len() != self.faces.len() {
            return Err(Error::DimensionMismatch {
                expected: self.faces.len(),
                got: uvs.len(),
            });
        }
        self.uv_coords = Some(uvs);
        Ok(self)
    }

    pub fn with_texture(mut self, texture: RgbImage) -> Self {
        self.texture = Some(texture);
        self
    }

    pub fn with_base_color(mut self, color: [f64; 3]) -> Self {
        self.base_color = Some(color);
        self
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn uv_coords(&self) -> Option<&[FaceUv]> {
        self.uv_coords.as_deref()
    }

    pub fn texture(&self) -> Option<&RgbImage> {
        self.texture.as_ref()
    }

    pub fn base_color(&self) -> Option<[f64; 3]> {
        self.base_color
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        self.faces[face].map(|i| self.vertices[i])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.corners(face);
        tri_area(&a, &b, &c)
    }

    pub fn face_areas(&self) -> Vec<f64> {
        (0..self.faces.len()).map(|f| self.face_area(f)).collect()
    }

    /// Unit normal of a face (right-hand rule on the corner order).
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.corners(face);
        (b - a).cross(&(c - a)).normalize()
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &i in f {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    pub fn total_area(&self) -> f64 {
        self.face_areas().iter().sum()
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bounding_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Largest distance from the vertex centroid to a vertex.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| (v - c).norm())
            .fold(0.0, f64::max)
    }

    /// Mean edge length over face edges (shared edges counted once per face).
    pub fn mean_edge_length(&self) -> f64 {
        let mut sum = 0.0;
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i]);
            sum += (b - a).norm() + (c - b).norm() + (a - c).norm();
        }
        sum / (3 * self.faces.len()) as f64
    }

    /// Applies `f` to every vertex, keeping connectivity and appearance.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        let vertices = self.vertices.iter().map(f).collect();
        let mut out = Mesh::new(vertices, self.faces.clone())?;
        out.uv_coords = self.uv_coords.clone();
        out.texture = self.texture.clone();
        out.base_color = self.base_color;
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        self.map_vertices(|v| v * s)
    }

    /// Concatenates two meshes into one (possibly disconnected) mesh.
    pub fn merged(&self, other: &Mesh) -> Result<Self> {
        let off = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + off)));
        Mesh::new(vertices, faces)
    }

    /// Texture coordinate at a barycentric location inside a face.
    pub fn uv_at(&self, face: usize, bary: [f64; 3]) -> Option<[f64; 2]> {
        let uv = self.uv_coords.as_ref()?[face];
        Some([
            bary[0] * uv[0][0] + bary[1] * uv[1][0] + bary[2] * uv[2][0],
            bary[0] * uv[0][1] + bary[1] * uv[1][1] + bary[2] * uv[2][1],
        ])
    }

    pub fn point_at(&self, face: usize, bary: [f64; 3]) -> Vec3 {
        let [a, b, c] = self.corners(face);
        a * bary[0] + b * bary[1] + c * bary[2]
    }
}

pub fn mesh_stats(mesh: &Mesh) -> MeshStats {
    let (_, count) = connected_components(mesh);
    MeshStats {
        total_area: mesh.total_area(),
        mean_incident_faces: (3 * mesh.face_count()) as f64 / mesh.vertex_count() as f64,
        vertex_count: mesh.vertex_count(),
        face_count: mesh.face_count(),
        connected_component_count: count,
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Per-vertex component labels (numbered by first appearance) and the component count.
pub fn connected_components(mesh: &Mesh) -> (Vec<usize>, usize) {
    let n = mesh.vertex_count();
    let mut uf = UnionFind::new(n);
    for f in mesh.faces() {
        uf.union(f[0], f[1]);
        uf.union(f[1], f[2]);
    }
    let mut remap = HashMap::new();
    let labels = (0..n)
        .map(|v| {
            let root = uf.find(v);
            let next = remap.len();
            *remap.entry(root).or_insert(next)
        })
        .collect();
    (labels, remap.len())
}

/// Loads a Wavefront OBJ file, plus the diffuse map of its material library if any.
pub fn load_mesh(path: &Path) -> Result<(Mesh, LoadReport)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_obj(&text, Some(&base))
}

#[derive(Default)]
struct Material {
    diffuse: Option<[f64; 3]>,
    map: Option<PathBuf>,
}

fn parse_mtl(text: &str, base: &Path) -> HashMap<String, Material> {
    let mut out: HashMap<String, Material> = HashMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let line = line.trim();
        let mut it = line.split_whitespace();
        match it.next() {
            Some("newmtl") => {
                let name = it.collect::<Vec<_>>().join(" ");
                out.entry(name.clone()).or_default();
                current = Some(name);
            }
            Some("Kd") => {
                let vals: Vec<f64> = it.filter_map(|s| s.parse().ok()).collect();
                if let (Some(name), 3) = (&current, vals.len()) {
                    out.get_mut(name).unwrap().diffuse = Some([vals[0], vals[1], vals[2]]);
                }
            }
            Some("map_Kd") => {
                // options such as `-s 1 1 1` may precede the file name
                if let (Some(name), Some(file)) = (&current, line.split_whitespace().last()) {
                    out.get_mut(name).unwrap().map = Some(base.join(file));
                }
            }
            _ => {}
        }
    }
    out
}

/// Parses OBJ text. `base` is where `mtllib` paths are resolved; `None` skips materials.
pub fn parse_obj(text: &str, base: Option<&Path>) -> Result<(Mesh, LoadReport)> {
    let mut report = LoadReport::default();
    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    // (vertex, optional texcoord) per corner
    let mut faces: Vec<[(usize, Option<usize>); 3]> = Vec::new();
    let mut materials: HashMap<String, Material> = HashMap::new();
    let mut used_material: Option<String> = None;

    let resolve = |raw: &str, len: usize, line: usize| -> Result<usize> {
        let idx: i64 = raw.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad index `{raw}`"),
        })?;
        let resolved = if idx < 0 { len as i64 + idx } else { idx - 1 };
        if resolved < 0 || resolved as usize >= len {
            return Err(Error::Parse {
                line,
                msg: format!("index {idx} out of range"),
            });
        }
        Ok(resolved as usize)
    };

    for (lineno, raw_line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        let mut it = line.split_whitespace();
        let Some(tag) = it.next() else { continue };
        match tag {
            "v" => {
                let vals: Vec<f64> = it
                    .take(3)
                    .map(|s| {
                        s.parse().map_err(|_| Error::Parse {
                            line: line_no,
                            msg: format!("bad coordinate `{s}`"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if vals.len() != 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "vertex needs three coordinates".into(),
                    });
                }
                positions.push(Vec3::new(vals[0], vals[1], vals[2]));
            }
            "vt" => {
                let vals: Vec<f64> = it.take(2).filter_map(|s| s.parse().ok()).collect();
                if vals.is_empty() {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "texture coordinate needs a value".into(),
                    });
                }
                texcoords.push([vals[0], vals.get(1).copied().unwrap_or(0.0)]);
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let v = resolve(parts.next().unwrap_or(""), positions.len(), line_no)?;
                    let vt = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, texcoords.len(), line_no)?),
                        _ => None,
                    };
                    corners.push((v, vt));
                }
                if corners.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "face needs at least three corners".into(),
                    });
                }
                // fan triangulation
                for i in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[i], corners[i + 1]]);
                }
            }
            "mtllib" => {
                if let Some(base) = base {
                    let file = it.collect::<Vec<_>>().join(" ");
                    let path = base.join(&file);
                    match fs::read_to_string(&path) {
                        Ok(mtl) => materials.extend(parse_mtl(&mtl, base)),
                        Err(e) => report
                            .warnings
                            .push(format!("material library {} unreadable: {e}", path.display())),
                    }
                }
            }
            "usemtl" => {
                if used_material.is_none() {
                    used_material = Some(it.collect::<Vec<_>>().join(" "));
                }
            }
            _ => {}
        }
    }

    let mut kept = Vec::with_capacity(faces.len());
    for f in faces {
        let [a, b, c] = f.map(|(v, _)| v);
        if a == b || b == c || a == c || is_degenerate(&positions[a], &positions[b], &positions[c]) {
            report.dropped_faces += 1;
        } else {
            kept.push(f);
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidMesh("no faces left after filtering".into()));
    }

    // compact away vertices no face refers to
    let mut remap = vec![usize::MAX; positions.len()];
    let mut vertices = Vec::new();
    for f in &kept {
        for &(v, _) in f {
            if remap[v] == usize::MAX {
                remap[v] = vertices.len();
                vertices.push(positions[v]);
            }
        }
    }
    report.dropped_vertices = positions.len() - vertices.len();
    let tri: Vec<[usize; 3]> = kept.iter().map(|f| f.map(|(v, _)| remap[v])).collect();
    let has_uv = kept.iter().all(|f| f.iter().all(|(_, t)| t.is_some()));
    let uvs: Option<Vec<FaceUv>> =
        has_uv.then(|| kept.iter().map(|f| f.map(|(_, t)| texcoords[t.unwrap()])).collect());

    let mut mesh = Mesh::new(vertices, tri)?;
    if let Some(uvs) = uvs {
        mesh = mesh.with_uvs(uvs)?;
    }

    let material = used_material
        .as_ref()
        .and_then(|name| materials.get(name))
        .or_else(|| {
            let mut names: Vec<_> = materials.keys().collect();
            names.sort();
            names.first().and_then(|n| materials.get(*n))
        });
    if let Some(mat) = material {
        if let Some(kd) = mat.diffuse {
            mesh = mesh.with_base_color(kd);
        }
        if let Some(map) = &mat.map {
            match RgbImage::load(map) {
                Ok(img) if mesh.uv_coords.is_some() => mesh = mesh.with_texture(img),
                Ok(_) => report
                    .warnings
                    .push("texture present but mesh has no texture coordinates".into()),
                Err(e) => report.warnings.push(format!("texture missing: {e}")),
            }
        }
    }
    for w in &report.warnings {
        warn!("{w}");
    }
    if report.dropped_faces > 0 {
        warn!("dropped {} degenerate faces", report.dropped_faces);
    }
    Ok((mesh, report))
}
