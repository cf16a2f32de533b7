//! Sparse LDL^T (square-root-free Cholesky) factorization for symmetric
//! positive-definite operators, with a reverse Cuthill-McKee fill-reducing order.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sparse::SparseOperator;

/// Reverse Cuthill-McKee ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseOperator) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| a.row(r).map(|(c, _)| c).filter(|&c| c != r).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, seen: &mut Vec<bool>| -> (Vec<usize>, usize) {
        // returns the last level and the eccentricity of `start`
        let mut level = vec![start];
        seen[start] = true;
        let mut touched = vec![start];
        let mut depth = 0;
        loop {
            let mut next = Vec::new();
            for &v in &level {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        touched.push(w);
                        next.push(w);
                    }
                }
            }
            if next.is_empty() {
                for v in touched {
                    seen[v] = false;
                }
                return (level, depth);
            }
            depth += 1;
            level = next;
        }
    };

    let mut scratch = vec![false; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let (mut last, mut ecc) = bfs_levels(start, &mut scratch);
        for _ in 0..8 {
            let cand = *last.iter().min_by_key(|&&v| (degree[v], v)).unwrap();
            let (l2, e2) = bfs_levels(cand, &mut scratch);
            if e2 <= ecc {
                break;
            }
            start = cand;
            last = l2;
            ecc = e2;
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// `P A P^T = L D L^T` with unit lower-triangular `L` stored by columns.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
}

impl LdlFactor {
    /// Factors a symmetric positive-definite operator. Fails on a non-positive pivot.
    pub fn new(a: &SparseOperator) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::with_ordering(a, perm)
    }

    pub fn with_ordering(a: &SparseOperator, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        let pa = a.permuted(&perm);

        // symbolic: elimination tree and column counts
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![0usize; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (i, _) in pa.row(k) {
                let mut i = i;
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + lnz[k];
        }
        let total = col_ptr[n];
        let mut row_idx = vec![0usize; total];
        let mut values = vec![0.0; total];
        let mut diag = vec![0.0; n];

        // numeric, up-looking
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|c| *c = 0);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (i, v) in pa.row(k) {
                if i > k {
                    continue;
                }
                y[i] += v;
                let mut len = 0;
                let mut i = i;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            let mut d = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let p2 = col_ptr[i] + lnz[i];
                for p in col_ptr[i]..p2 {
                    y[row_idx[p]] -= values[p] * yi;
                }
                let l_ki = yi / diag[i];
                d -= l_ki * yi;
                row_idx[p2] = k;
                values[p2] = l_ki;
                lnz[i] += 1;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Factorization(format!(
                    "non-positive pivot {d:e} at step {k} of {n}"
                )));
            }
            diag[k] = d;
        }
        Ok(Self {
            perm,
            col_ptr,
            row_idx,
            values,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of stored off-diagonal factor entries.
    pub fn fill(&self) -> usize {
        self.values.len()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let mut x: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for j in 0..n {
            let xj = x[j];
            if xj != 0.0 {
                for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                    x[self.row_idx[p]] -= self.values[p] * xj;
                }
            }
        }
        for j in 0..n {
            x[j] /= self.diag[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                s -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = s;
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = x[new];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
        out
    }
}
