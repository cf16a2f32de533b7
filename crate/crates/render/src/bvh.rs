//! Axis-aligned bounding-box hierarchy over mesh faces.

use uv3_core::{Mesh, Vec3};

pub const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self {
            origin,
            dir: dir.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Weights of the face corners at the hit.
    pub barycentric: [f64; 3],
}

impl Hit {
    /// Nearer hit first; equal distances resolve to the lower face index.
    fn closer_than(&self, other: &Hit) -> bool {
        self.t < other.t || (self.t == other.t && self.face < other.face)
    }
}

/// Moller-Trumbore; hits closer than `1e-9` along the ray are ignored.
pub fn intersect_triangle(ray: &Ray, tri: &[Vec3; 3]) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some((t, u, v))
}

fn face_hit(ray: &Ray, mesh: &Mesh, face: usize) -> Option<Hit> {
    intersect_triangle(ray, &mesh.corners(face)).map(|(t, u, v)| Hit {
        t,
        face,
        barycentric: [1.0 - u - v, u, v],
    })
}

/// Tests every face; the reference the hierarchy must agree with.
pub fn brute_force_hit(mesh: &Mesh, ray: &Ray) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for f in 0..mesh.face_count() {
        if let Some(h) = face_hit(ray, mesh, f) {
            if best.is_none_or(|b| h.closer_than(&b)) {
                best = Some(h);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.min[i] && self.max[i] >= o.max[i])
    }

    /// Entry distance of the ray, if it meets the box before `t_max`.
    fn entry(&self, ray: &Ray, inv: &Vec3, t_max: f64) -> Option<f64> {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for i in 0..3 {
            if ray.dir[i] == 0.0 {
                if ray.origin[i] < self.min[i] || ray.origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let a = (self.min[i] - ray.origin[i]) * inv[i];
            let b = (self.max[i] - ray.origin[i]) * inv[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        // a few ulps of slack keep hits on box faces, edges and corners
        (t0 <= t1 * (1.0 + 4.0 * f64::EPSILON)).then_some(t0)
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Leaf { start: usize, count: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub bounds: Aabb,
    pub kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    faces: Vec<usize>,
}

impl Bvh {
    /// Median split along the widest centroid axis; deterministic.
    pub fn build(mesh: &Mesh) -> Self {
        let n = mesh.face_count();
        let boxes: Vec<Aabb> = (0..n)
            .map(|f| {
                let mut b = Aabb::empty();
                for c in mesh.corners(f) {
                    b.grow(&c);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3> = (0..n).map(|f| mesh.corners(f).iter().sum::<Vec3>() / 3.0).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * n / LEAF_SIZE + 1),
            faces: (0..n).collect(),
        };
        if n > 0 {
            bvh.split(0, n, &boxes, &centroids);
        }
        bvh
    }

    fn split(&mut self, start: usize, end: usize, boxes: &[Aabb], centroids: &[Vec3]) -> usize {
        let mut bounds = Aabb::empty();
        let mut cb = Aabb::empty();
        for &f in &self.faces[start..end] {
            bounds = bounds.merge(&boxes[f]);
            cb.grow(&centroids[f]);
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            bounds,
            kind: NodeKind::Leaf {
                start,
                count: end - start,
            },
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let extent = cb.max - cb.min;
        let axis = extent.imax();
        self.faces[start..end].sort_by(|&a, &b| {
            centroids[a][axis]
                .total_cmp(&centroids[b][axis])
                .then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        let left = self.split(start, mid, boxes, centroids);
        let right = self.split(mid, end, boxes, centroids);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Face order referenced by leaf ranges.
    pub fn leaf_faces(&self) -> &[usize] {
        &self.faces
    }

    pub fn intersect(&self, mesh: &Mesh, ray: &Ray) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = ray.dir.map(|d| 1.0 / d);
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            let limit = best.map_or(f64::INFINITY, |b| b.t);
            // boxes touching the current best distance are still visited so ties resolve like brute force
            if node.bounds.entry(ray, &inv, limit).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    for &f in &self.faces[start..start + count] {
                        if let Some(h) = face_hit(ray, mesh, f) {
                            if best.is_none_or(|b| h.closer_than(&b)) {
                                best = Some(h);
                            }
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }
}
