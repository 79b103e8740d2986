//! Dense symmetric eigendecomposition via cyclic Jacobi rotations.
//!
//! The coefficient-space search distribution lives in dimension k+1 (k is
//! the measure count, so typically 2-5). A pure-Rust Jacobi sweep keeps the
//! decomposition deterministic across platforms, which the bit-exact rerun
//! contract depends on; a BLAS-backed solver could order operations
//! differently from build to build.

pub type Matrix = Vec<Vec<f64>>;

pub fn identity(n: usize) -> Matrix {
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[i][j] * a[i][j];
            }
        }
    }
    s.sqrt()
}

/// Eigendecomposition of a symmetric matrix: returns `(eigenvalues, basis)`
/// where column `j` of `basis` is the eigenvector for `eigenvalues[j]`.
/// Eigenvalues are sorted ascending.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.len();
    let mut m: Matrix = a.clone();
    let mut basis = identity(n);
    let scale = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        if off_diagonal_norm(&m) <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[p][q];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..n {
                    let (mip, miq) = (m[i][p], m[i][q]);
                    m[i][p] = c * mip - s * miq;
                    m[i][q] = s * mip + c * miq;
                }
                for j in 0..n {
                    let (mpj, mqj) = (m[p][j], m[q][j]);
                    m[p][j] = c * mpj - s * mqj;
                    m[q][j] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let (bip, biq) = (basis[i][p], basis[i][q]);
                    basis[i][p] = c * bip - s * biq;
                    basis[i][q] = s * bip + c * biq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i][i].total_cmp(&m[j][j]));
    let values: Vec<f64> = order.iter().map(|&i| m[i][i]).collect();
    let mut vectors = vec![vec![0.0; n]; n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i][new_col] = basis[i][old_col];
        }
    }
    (values, vectors)
}

/// Rebuilds `B diag(values) B^T`.
pub fn reconstruct(values: &[f64], basis: &Matrix) -> Matrix {
    let n = values.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for (k, &v) in values.iter().enumerate() {
                s += basis[i][k] * v * basis[j][k];
            }
            m[i][j] = s;
        }
    }
    m
}
