use uv3_core::knn::KdTree;
use uv3_core::{Error, Result, Vec3};

pub const NEIGHBORS: usize = 3;

/// Colors attached to surface points, looked up by Euclidean proximity.
#[derive(Debug, Clone)]
pub struct PointCloudTexture {
    tree: KdTree,
    colors: Vec<[f64; 3]>,
}

impl PointCloudTexture {
    pub fn new(points: &[Vec3], colors: Vec<[f64; 3]>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: colors.len(),
            });
        }
        if points.len() < NEIGHBORS {
            return Err(Error::invalid(format!(
                "a point-cloud texture needs at least {NEIGHBORS} points, got {}",
                points.len()
            )));
        }
        Ok(Self {
            tree: KdTree::new(points),
            colors,
        })
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    pub fn colors(&self) -> &[[f64; 3]] {
        &self.colors
    }

    /// Inverse-distance blend of the three nearest colors.
    pub fn shade(&self, p: &Vec3) -> [f64; 3] {
        let near = self.tree.nearest(p, NEIGHBORS);
        if let Some(&(i, _)) = near.iter().find(|(_, d2)| *d2 == 0.0) {
            return self.colors[i];
        }
        let mut out = [0.0; 3];
        let mut total = 0.0;
        for &(i, d2) in &near {
            let w = 1.0 / (d2.sqrt() + 1e-9);
            total += w;
            for (o, c) in out.iter_mut().zip(self.colors[i]) {
                *o += w * c;
            }
        }
        out.map(|v| v / total)
    }
}
