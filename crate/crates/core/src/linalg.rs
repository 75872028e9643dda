//! Small dense complex linear algebra used by the combiner.
//!
//! Everything here operates on matrices whose size is either the number of
//! users `K` or the size of one sub-array, so plain O(n³) kernels are fine.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Relative tolerance for accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 64;

/// Returns `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).map(|z| z * 0.5)
}

/// Largest entry-wise deviation `|A - A^H|`.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Cyclic complex Jacobi eigen-decomposition of a Hermitian matrix.
///
/// Returns eigenvalues in the order they settle on the diagonal together with
/// the unitary matrix whose columns are the matching eigenvectors. The input
/// is assumed Hermitian; only its Hermitian part is effectively used.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    // Row-major working copies; indexing a flat buffer is markedly cheaper
    // than going through the matrix type for the tiny sizes used here.
    let mut m: Vec<Complex64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            m.push((a[(i, j)] + a[(j, i)].conj()) * 0.5);
        }
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let finish =
        |m: &[Complex64], v: &[Complex64]| ((0..n).map(|i| m[i * n + i].re).collect(), CMat::from_row_slice(n, n, v));
    if n <= 1 {
        return finish(&m, &v);
    }

    let scale2 = m.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if scale2 == 0.0 {
        return finish(&m, &v);
    }
    let stop2 = (f64::EPSILON * f64::EPSILON) * scale2;

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q].norm_sqr();
            }
        }
        if off <= stop2 {
            break;
        }

        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                // D = diag(1, e^{-i phi}) turns the (p, q) block real, then a
                // real Jacobi rotation zeroes it.
                let phase = apq / r;
                let app = m[p * n + p].re;
                let aqq = m[q * n + q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // U restricted to (p, q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
                let u_qp = -phase.conj() * s;
                let u_qq = phase.conj() * c;

                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = akp * c + akq * u_qp;
                    m[k * n + q] = akp * s + akq * u_qq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = apk * c + u_qp.conj() * aqk;
                    m[q * n + k] = apk * s + u_qq.conj() * aqk;
                }
                m[p * n + q] = Complex64::new(0.0, 0.0);
                m[q * n + p] = Complex64::new(0.0, 0.0);
                m[p * n + p].im = 0.0;
                m[q * n + q].im = 0.0;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * c + vkq * u_qp;
                    v[k * n + q] = vkp * s + vkq * u_qq;
                }
            }
        }
    }

    finish(&m, &v)
}

/// Rotates `v` so that its first entry of largest modulus is real and
/// nonnegative.
pub fn phase_fix(v: &mut [Complex64]) {
    let mut best = 0usize;
    let mut best_mod = -1.0f64;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mod {
            best_mod = m;
            best = i;
        }
    }
    if best_mod <= 0.0 {
        return;
    }
    let rot = v[best].conj() / best_mod;
    for z in v.iter_mut() {
        *z *= rot;
    }
    v[best] = Complex64::new(v[best].re.abs(), 0.0);
}

/// Largest eigenvalue of a Hermitian PSD matrix and a unit eigenvector for it.
///
/// The eigenvector is phase-fixed (see [`phase_fix`]). When the top eigenvalue
/// is repeated, the lowest-index Jacobi column among the maximizers is taken.
pub fn dominant_eigenpair(t: &CMat) -> Result<(f64, CVec)> {
    if t.nrows() != t.ncols() {
        return Err(Error::InvalidMatrix(format!(
            "expected a square matrix, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    if t.nrows() == 0 {
        return Err(Error::InvalidMatrix("empty matrix".into()));
    }
    let defect = hermitian_defect(t);
    if defect > HERMITIAN_TOL * max_abs(t).max(1.0) {
        return Err(Error::InvalidMatrix(format!(
            "matrix is not Hermitian (defect {defect:.3e})"
        )));
    }

    let (values, vectors) = hermitian_eigen(t);
    let mut top = 0usize;
    for (i, &lam) in values.iter().enumerate() {
        if lam > values[top] {
            top = i;
        }
    }
    let mut u: Vec<Complex64> = vectors.column(top).iter().copied().collect();
    let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in u.iter_mut() {
        *z /= norm;
    }
    phase_fix(&mut u);
    Ok((values[top], CVec::from_vec(u)))
}

/// Dominant eigenpair of a small Hermitian PSD matrix by normalized repeated
/// squaring, `A -> A^2 -> A^4 -> ...`, which collapses onto the top
/// eigenvector at rate `(λ_2/λ_1)^(2^k)`.
///
/// Returns `None` for a zero matrix or when the residual has not reached
/// `1e-12 ||A||_F` within a fixed number of squarings (small eigengap); callers
/// fall back to [`dominant_eigenpair`].
pub(crate) fn dominant_pair_by_squaring(a: &CMat) -> Option<(f64, Vec<Complex64>)> {
    const MAX_SQUARINGS: usize = 10;
    let n = a.nrows();
    let zero = Complex64::new(0.0, 0.0);
    let mut p: Vec<Complex64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            p.push(a[(i, j)]);
        }
    }
    let scale = p.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let tol = 1e-12 * scale;
    let mut sq = vec![zero; n * n];
    let mut u = vec![zero; n];
    let mut au = vec![zero; n];

    for it in 0..MAX_SQUARINGS {
        for i in 0..n {
            for j in 0..n {
                let mut acc = zero;
                for k in 0..n {
                    acc += p[i * n + k] * p[k * n + j];
                }
                sq[i * n + j] = acc;
            }
        }
        let f = sq.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if f == 0.0 || !f.is_finite() {
            return None;
        }
        for (dst, src) in p.iter_mut().zip(&sq) {
            *dst = src / f;
        }
        if it < 3 {
            continue;
        }

        let mut best = 0;
        let mut best_norm = -1.0;
        for j in 0..n {
            let c: f64 = (0..n).map(|i| p[i * n + j].norm_sqr()).sum();
            if c > best_norm {
                best_norm = c;
                best = j;
            }
        }
        let norm = best_norm.sqrt();
        for i in 0..n {
            u[i] = p[i * n + best] / norm;
        }
        let mut mu = 0.0;
        for i in 0..n {
            let mut acc = zero;
            for j in 0..n {
                acc += a[(i, j)] * u[j];
            }
            au[i] = acc;
            mu += (u[i].conj() * acc).re;
        }
        let resid = au
            .iter()
            .zip(&u)
            .map(|(x, y)| (x - y * mu).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if resid <= tol {
            phase_fix(&mut u);
            return Some((mu.max(0.0), u));
        }
    }
    None
}

/// `(Q + rho G)^{-1}` from `Q^{-1}` for a rank-one PSD `G`.
///
/// Uses `Q^{-1} - rho Q^{-1} G Q^{-1} / (1 + rho tr(G Q^{-1}))`, which is exact
/// only when `G` has rank one.
pub fn rank_one_inverse_update(qinv_prev: &CMat, g: &CMat, rho: f64) -> Result<CMat> {
    let k = qinv_prev.nrows();
    if qinv_prev.ncols() != k || g.nrows() != k || g.ncols() != k {
        return Err(Error::InvalidDimension(format!(
            "rank-one update needs matching square matrices, got {}x{} and {}x{}",
            qinv_prev.nrows(),
            qinv_prev.ncols(),
            g.nrows(),
            g.ncols()
        )));
    }
    let denom = 1.0 + rho * (g * qinv_prev).trace().re;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::NumericalBreakdown(format!(
            "rank-one update denominator {denom} is not positive"
        )));
    }
    let num = qinv_prev * g * qinv_prev;
    let scale = Complex64::new(rho / denom, 0.0);
    Ok(hermitian_part(&(qinv_prev - num * scale)))
}

/// In-place form of [`rank_one_inverse_update`] for `G = v v^H`.
///
/// Returns the drop in trace, `tr(Q_prev^{-1}) - tr(Q_new^{-1})`.
pub(crate) fn rank_one_inverse_update_vec(qinv: &mut CMat, v: &[Complex64], rho: f64) -> Result<f64> {
    let k = qinv.nrows();
    let mut a = vec![Complex64::new(0.0, 0.0); k];
    for (i, ai) in a.iter_mut().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            *ai += qinv[(i, j)] * vj;
        }
    }
    let quad: f64 = v.iter().zip(&a).map(|(vi, ai)| (vi.conj() * ai).re).sum();
    let denom = 1.0 + rho * quad;
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::NumericalBreakdown(format!(
            "rank-one update denominator {denom} is not positive"
        )));
    }
    let s = rho / denom;
    let mut drop = 0.0;
    for i in 0..k {
        drop += s * a[i].norm_sqr();
        for j in 0..k {
            qinv[(i, j)] -= a[i] * a[j].conj() * s;
        }
    }
    Ok(drop)
}

/// `log2 det(A)` for a Hermitian positive-definite `A`, via Cholesky.
pub fn log2_det_hpd(a: &CMat) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::InvalidMatrix("log-det of a non-square matrix".into()));
    }
    let mut l = hermitian_part(a);
    let mut acc = 0.0;
    for j in 0..n {
        let mut d = l[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "matrix is not positive definite (pivot {j} = {d:.3e})"
            )));
        }
        let djj = d.sqrt();
        acc += djj.ln();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(2.0 * acc / std::f64::consts::LN_2)
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub(crate) fn cholesky_lower(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "matrix is not positive definite (pivot {j} = {d:.3e})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}
