//! Procedural test meshes.

use std::collections::HashMap;

use crate::mesh::{Mesh, Vec3};

fn build(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Mesh {
    Mesh::new(vertices, faces).expect("procedural mesh is valid")
}

/// Icosahedron subdivided `level` times and projected onto a sphere.
///
/// Vertex counts: 12, 42, 162, 642, 2562, ...
pub fn icosphere(level: u32, radius: f64) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(verts.into_iter().map(|v| v * radius).collect(), faces)
}

/// Latitude/longitude sphere with `rings` interior latitude rings of `segments`
/// vertices plus two poles.
pub fn uv_sphere(rings: usize, segments: usize, radius: f64) -> Mesh {
    assert!(rings >= 1 && segments >= 3);
    let mut verts = vec![Vec3::new(0.0, 0.0, radius)];
    for r in 0..rings {
        let theta = std::f64::consts::PI * (r + 1) as f64 / (rings + 1) as f64;
        for s in 0..segments {
            // stagger alternate rings to avoid mirror symmetries
            let phi = 2.0 * std::f64::consts::PI * (s as f64 + 0.5 * (r % 2) as f64) / segments as f64;
            verts.push(
                Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()) * radius,
            );
        }
    }
    verts.push(Vec3::new(0.0, 0.0, -radius));
    let south = verts.len() - 1;
    let idx = |r: usize, s: usize| 1 + r * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, idx(0, s), idx(0, s + 1)]);
        faces.push([south, idx(rings - 1, s + 1), idx(rings - 1, s)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            let (a, b) = (idx(r, s), idx(r, s + 1));
            let (c, d) = (idx(r + 1, s), idx(r + 1, s + 1));
            if r % 2 == 0 {
                faces.push([a, c, b]);
                faces.push([b, c, d]);
            } else {
                faces.push([a, c, d]);
                faces.push([a, d, b]);
            }
        }
    }
    build(verts, faces)
}

/// Axis-aligned unit cube `[0,1]^3` with 12 outward-facing triangles.
pub fn cube() -> Mesh {
    let verts = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let faces = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    build(verts, faces)
}

/// `[0,1]^2` in the z = 0 plane as two triangles, with matching UVs.
pub fn unit_square() -> Mesh {
    let verts = vec![
        Vec3::new(0.0, 0.0, 0.0),
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(1.0, 1.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
    ];
    let faces = vec![[0, 1, 2], [0, 2, 3]];
    let uvs = faces
        .iter()
        .map(|f: &[usize; 3]| f.map(|i| [verts[i].x, verts[i].y]))
        .collect();
    build(verts, faces).with_uvs(uvs).expect("one uv triple per face")
}

pub fn equilateral_triangle(side: f64) -> Mesh {
    let h = side * 3f64.sqrt() / 2.0;
    build(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(side, 0.0, 0.0),
            Vec3::new(side / 2.0, h, 0.0),
        ],
        vec![[0, 1, 2]],
    )
}

/// Planar grid of `nx * ny` vertices with the given spacing, in the z = 0 plane.
pub fn grid(nx: usize, ny: usize, spacing: f64) -> Mesh {
    assert!(nx >= 2 && ny >= 2);
    let verts = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| Vec3::new(i as f64 * spacing, j as f64 * spacing, 0.0)))
        .collect();
    let mut faces = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let a = j * nx + i;
            let (b, c, d) = (a + 1, a + nx, a + nx + 1);
            faces.push([a, b, d]);
            faces.push([a, d, c]);
        }
    }
    build(verts, faces)
}

/// A closed box with a roof quad floating just above it: two components that
/// almost touch.
pub fn birdhouse() -> Mesh {
    let house = cube();
    let roof = build(
        vec![
            Vec3::new(-0.1, 1.05, -0.1),
            Vec3::new(1.1, 1.05, -0.1),
            Vec3::new(1.1, 1.05, 1.1),
            Vec3::new(-0.1, 1.05, 1.1),
            Vec3::new(0.5, 1.4, 0.5),
        ],
        vec![[0, 4, 1], [1, 4, 2], [2, 4, 3], [3, 4, 0]],
    );
    house.merged(&roof).expect("disjoint parts")
}

/// Icosphere cut along the equator into two topologically disconnected halves
/// that share their boundary positions.
pub fn sliced_sphere(level: u32) -> Mesh {
    let sphere = icosphere(level, 1.0);
    let lower = |f: &[usize; 3]| f.iter().map(|&i| sphere.vertices()[i].z).sum::<f64>() < 0.0;
    let mut used_above = vec![false; sphere.vertex_count()];
    for f in sphere.faces().iter().filter(|f| !lower(f)) {
        for &i in f {
            used_above[i] = true;
        }
    }
    let mut verts = sphere.vertices().to_vec();
    let mut lower_copy: HashMap<usize, usize> = HashMap::new();
    let faces = sphere
        .faces()
        .iter()
        .map(|f| {
            if !lower(f) {
                return *f;
            }
            f.map(|i| {
                if !used_above[i] {
                    return i;
                }
                *lower_copy.entry(i).or_insert_with(|| {
                    verts.push(sphere.vertices()[i]);
                    verts.len() - 1
                })
            })
        })
        .collect();
    build(verts, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{connected_components, mesh_stats};

    #[test]
    fn icosphere_counts() {
        for (level, v) in [(0, 12), (1, 42), (2, 162), (3, 642)] {
            let m = icosphere(level, 1.0);
            assert_eq!(m.vertex_count(), v);
            assert_eq!(m.face_count(), 2 * v - 4);
        }
        let area = icosphere(4, 1.0).total_area();
        assert!((area - 4.0 * std::f64::consts::PI).abs() / area < 0.01);
    }

    #[test]
    fn outward_orientation() {
        for mesh in [icosphere(1, 1.0), cube(), uv_sphere(4, 7, 1.0)] {
            let c = mesh.centroid();
            for f in 0..mesh.face_count() {
                let p = mesh.point_at(f, [1.0 / 3.0; 3]);
                assert!(mesh.face_normal(f).dot(&(p - c)) > 0.0);
            }
        }
    }

    #[test]
    fn uv_sphere_has_thirty_vertices() {
        assert_eq!(uv_sphere(4, 7, 1.0).vertex_count(), 30);
    }

    #[test]
    fn two_component_surrogates() {
        assert_eq!(connected_components(&birdhouse()).1, 2);
        let sliced = sliced_sphere(2);
        assert_eq!(mesh_stats(&sliced).connected_component_count, 2);
        assert!(sliced.vertex_count() <= 300);
    }
}
