use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

fn lex(a: &Vec3, b: &Vec3) -> Ordering {
    a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z))
}

/// Greedy max-min farthest point sampling.
///
/// Starts at the point farthest from the centroid. Every tie, including the
/// start, goes to the lexicographically smallest coordinates, so the selected
/// set does not depend on input order.
pub fn farthest_point_sample(points: &[Vec3], count: usize) -> Result<Vec<usize>> {
    if count > points.len() {
        return Err(Error::invalid(format!(
            "cannot select {count} farthest points out of {}",
            points.len()
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let centroid = points.iter().sum::<Vec3>() / points.len() as f64;
    let pick = |score: &dyn Fn(usize) -> f64, eligible: &dyn Fn(usize) -> bool| {
        (0..points.len())
            .filter(|&i| eligible(i))
            .max_by(|&a, &b| {
                score(a)
                    .total_cmp(&score(b))
                    .then_with(|| lex(&points[b], &points[a]))
            })
            .unwrap()
    };
    let start = pick(&|i| (points[i] - centroid).norm_squared(), &|_| true);
    let mut chosen = vec![start];
    let mut taken = vec![false; points.len()];
    taken[start] = true;
    let mut dist: Vec<f64> = points.iter().map(|p| (p - points[start]).norm_squared()).collect();
    while chosen.len() < count {
        let next = pick(&|i| dist[i], &|i| !taken[i]);
        taken[next] = true;
        chosen.push(next);
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min((p - points[next]).norm_squared());
        }
    }
    Ok(chosen)
}
