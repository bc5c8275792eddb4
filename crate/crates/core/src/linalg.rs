//! Small dense linear-algebra helpers shared by the geometry modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; dimensions in this crate
//! are small (typically 1 to 10), so clarity wins over blocking or reuse of
//! workspaces.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

/// Symmetric part `(M + Mᵀ)/2`.
pub fn sym(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Skew-symmetric part `(M − Mᵀ)/2`.
pub fn skew(m: &Mat) -> Mat {
    (m - m.transpose()) * 0.5
}

/// Frobenius inner product `tr(A Bᵀ)`.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &Mat) -> f64 {
    a.norm()
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_asymmetry(a: &Mat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix with eigenvalues in ascending
/// order. Columns of the returned matrix are the matching eigenvectors.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(sym(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies a scalar function to the spectrum of a symmetric matrix.
pub fn sym_apply(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (values, vectors) = sym_eigen(m);
    let n = m.nrows();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = f(values[j]);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    sym(&(scaled * vectors.transpose()))
}

/// Square root of a symmetric positive semidefinite matrix. Tiny negative
/// eigenvalues produced by roundoff are clamped to zero.
pub fn sqrt_psd(m: &Mat) -> Mat {
    sym_apply(m, |x| x.max(0.0).sqrt())
}

/// Solves the Sylvester equation `K S + S K = U` for symmetric `K`, where `S`
/// is symmetric positive definite and `U` symmetric.
pub fn solve_sylvester_sym(s: &Mat, u: &Mat) -> Option<Mat> {
    let (values, vectors) = sym_eigen(s);
    let n = s.nrows();
    let rotated = vectors.transpose() * u * &vectors;
    let mut k = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let denom = values[i] + values[j];
            if !(denom > 0.0) || !denom.is_finite() {
                return None;
            }
            k[(i, j)] = rotated[(i, j)] / denom;
        }
    }
    let k = sym(&(&vectors * k * vectors.transpose()));
    k.iter().all(|x| x.is_finite()).then_some(k)
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Gaussian random matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Haar-distributed rotation in `SO(d)` via QR of a Gaussian matrix.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Mat {
    let g = gaussian_matrix(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..d {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// Random symmetric matrix with standard normal upper triangle.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Mat {
    sym(&gaussian_matrix(rng, d, d))
}

/// Closest rotation to `m` in Frobenius norm (polar factor with determinant
/// correction).
pub fn nearest_rotation(m: &Mat) -> Mat {
    let d = m.nrows();
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut correction = Mat::identity(d, d);
    if (&u * &v_t).determinant() < 0.0 {
        correction[(d - 1, d - 1)] = -1.0;
    }
    u * correction * v_t
}

/// Canonical basis of symmetric `d × d` matrices: `E_jj` and `(E_jk + E_kj)/√2`.
pub fn canonical_sym_basis(d: usize) -> Vec<Mat> {
    let mut basis = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for k in j..d {
            let mut e = Mat::zeros(d, d);
            if j == k {
                e[(j, j)] = 1.0;
            } else {
                e[(j, k)] = std::f64::consts::FRAC_1_SQRT_2;
                e[(k, j)] = std::f64::consts::FRAC_1_SQRT_2;
            }
            basis.push(e);
        }
    }
    basis
}

/// Basis of the symmetric matrices `K` with `⟨K, N⟩ = 0` for every `N` in
/// `normals`, orthonormal under `⟨K, K'⟩ = ⟨K B, K' B⟩`.
pub fn weighted_sym_basis(b: &Mat, normals: &[Mat]) -> Vec<Mat> {
    let d = b.nrows();
    let mut ortho_normals: Vec<Mat> = Vec::new();
    for n in normals {
        let mut v = sym(n);
        for q in &ortho_normals {
            v -= q * inner(&v, q);
        }
        let len = v.norm();
        if len > 1e-10 * (1.0 + n.norm()) {
            ortho_normals.push(v / len);
        }
    }
    let weighted = |x: &Mat, y: &Mat| inner(&(x * b), &(y * b));
    let mut basis: Vec<Mat> = Vec::new();
    for e in canonical_sym_basis(d) {
        let mut v = e;
        for q in &ortho_normals {
            v -= q * inner(&v, q);
        }
        let before = weighted(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &basis {
                let c = weighted(&v, q);
                v -= q * c;
            }
        }
        let after = weighted(&v, &v).sqrt();
        if after > 1e-9 * before.max(1e-300) && after > 1e-14 {
            basis.push(v / after);
        }
    }
    basis
}
