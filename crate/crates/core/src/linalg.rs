//! Dense Hermitian linear algebra: cyclic Jacobi eigensolver and symmetric
//! pivoted Cholesky.

use crate::{CMatrix, Error, Result, C64};
use nalgebra::DMatrix;

/// Off-diagonal Frobenius mass relative to `‖A‖_F` at which Jacobi stops.
pub const JACOBI_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

/// Largest entry of `A - A*`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            d = d.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    d
}

/// `(A + A*)/2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut h = h;
    for i in 0..h.nrows() {
        h[(i, i)] = C64::new(h[(i, i)].re, 0.0);
    }
    h
}

fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn offdiag_mass(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi for a Hermitian matrix.
///
/// Each rotation first removes the phase of `a_pq` with a diagonal unitary and
/// then applies the classical real rotation. Sweeps skip pairs below a
/// threshold that shrinks with the remaining off-diagonal mass.
pub fn jacobi_eigh(a: &CMatrix, want_vectors: bool) -> Result<HermitianEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} not square", n, a.ncols())));
    }
    let scale = frobenius(a);
    let defect = hermitian_defect(a);
    if defect > 1e-10 * scale.max(1e-300) && defect > 1e-14 {
        return Err(Error::NotHermitian(defect));
    }
    let mut m = symmetrize(a);
    let mut v = if want_vectors { CMatrix::identity(n, n) } else { CMatrix::zeros(0, 0) };
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: v });
    }
    let stop = JACOBI_TOL * scale;
    for _sweep in 0..MAX_SWEEPS {
        let off = offdiag_mass(&m);
        if off <= stop || off == 0.0 {
            break;
        }
        let thresh = if n > 1 { 0.2 * off / (n * n) as f64 } else { 0.0 };
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 || mag < thresh {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let phase = apq / mag; // e^{iα}
                let zeta = (aqq - app) / (2.0 * mag);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = [[c, s], [-s e^{-iα}, c e^{-iα}]] acting on columns p, q.
                let em = phase.conj();
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = em * (-s);
                let u_qq = em * c;
                for r in 0..n {
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    m[(r, p)] = arp * u_pp + arq * u_qp;
                    m[(r, q)] = arp * u_pq + arq * u_qq;
                }
                for r in 0..n {
                    let apr = m[(p, r)];
                    let aqr = m[(q, r)];
                    m[(p, r)] = u_pp.conj() * apr + u_qp.conj() * aqr;
                    m[(q, r)] = u_pq.conj() * apr + u_qq.conj() * aqr;
                }
                m[(p, q)] = C64::new(0.0, 0.0);
                m[(q, p)] = C64::new(0.0, 0.0);
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                if want_vectors {
                    for r in 0..n {
                        let vrp = v[(r, p)];
                        let vrq = v[(r, q)];
                        v[(r, p)] = vrp * u_pp + vrq * u_qp;
                        v[(r, q)] = vrp * u_pq + vrq * u_qq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = if want_vectors {
        let mut out = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            out.set_column(dst, &v.column(src));
        }
        out
    } else {
        v
    };
    Ok(HermitianEigen { values, vectors })
}

/// Symmetric pivoted Cholesky: `G[p, p] = L L*`.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    pub perm: Vec<usize>,
    pub lower: CMatrix,
    /// `max pivot² / min pivot²`, an estimate of the condition number.
    pub condition_estimate: f64,
}

/// Relative pivot size below which a Gram matrix is declared singular.
pub const SINGULAR_PIVOT: f64 = 1e-13;

pub fn pivoted_cholesky(g: &CMatrix) -> Result<PivotedCholesky> {
    let n = g.nrows();
    let mut a = symmetrize(g);
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).map(|i| a[(i, i)].re).fold(0.0_f64, f64::max);
    let mut lower = CMatrix::zeros(n, n);
    let mut pmax: f64 = 0.0;
    let mut pmin = f64::INFINITY;
    for j in 0..n {
        // pivot: largest remaining diagonal
        let (piv, dmax) = (j..n)
            .map(|i| (i, a[(i, i)].re))
            .fold((j, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(dmax > SINGULAR_PIVOT * max_diag) {
            return Err(Error::SingularGram { step: j, pivot: dmax });
        }
        if piv != j {
            a.swap_rows(j, piv);
            a.swap_columns(j, piv);
            lower.swap_rows(j, piv);
            perm.swap(j, piv);
        }
        let d = a[(j, j)].re.sqrt();
        pmax = pmax.max(d * d);
        pmin = pmin.min(d * d);
        lower[(j, j)] = C64::new(d, 0.0);
        for i in (j + 1)..n {
            lower[(i, j)] = a[(i, j)] / d;
        }
        for c in (j + 1)..n {
            for r in (j + 1)..n {
                let upd = lower[(r, j)] * lower[(c, j)].conj();
                a[(r, c)] -= upd;
            }
        }
    }
    Ok(PivotedCholesky { perm, lower, condition_estimate: if n == 0 { 1.0 } else { pmax / pmin } })
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_inverse(l: &CMatrix) -> CMatrix {
    let n = l.nrows();
    let mut inv = CMatrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut s = if i == col { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for k in col..i {
                s -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = s / l[(i, i)];
        }
    }
    inv
}

/// Factor `C` with `C* G C = I`, built as `P L^{-*}` from the pivoted Cholesky
/// factorisation. Returns `C` and the condition estimate.
///
/// The Gram matrix is first scaled to unit diagonal, so the singularity test
/// measures linear dependence rather than the spread of basis norms.
pub fn orthonormalizing_factor(g: &CMatrix) -> Result<(CMatrix, f64)> {
    let n = g.nrows();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = g[(i, i)].re;
        if !(d > 0.0) {
            return Err(Error::SingularGram { step: i, pivot: d });
        }
        scale.push(1.0 / d.sqrt());
    }
    let scaled = CMatrix::from_fn(n, n, |i, j| g[(i, j)] * (scale[i] * scale[j]));
    let chol = pivoted_cholesky(&scaled)?;
    let linv_adj = lower_inverse(&chol.lower).adjoint();
    let mut c = CMatrix::zeros(n, n);
    for (a, &pa) in chol.perm.iter().enumerate() {
        c.set_row(pa, &(linv_adj.row(a) * C64::new(scale[pa], 0.0)));
    }
    Ok((c, chol.condition_estimate))
}

/// Kronecker product `A ⊗ B` with row index `i·rows(B) + j`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Real symmetric matrix as a complex one.
pub fn from_real(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| C64::new(x, 0.0))
}

/// Largest entry modulus.
pub fn max_entry(a: &CMatrix) -> f64 {
    a.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let mut a = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        symmetrize(&a)
    }

    #[test]
    fn diagonal_input() {
        let a = from_real(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0])));
        let e = jacobi_eigh(&a, true).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pauli_x() {
        let a = from_real(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let e = jacobi_eigh(&a, false).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_hermitian_residuals_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &n in &[1usize, 2, 5, 17, 40] {
            let a = random_hermitian(n, &mut rng);
            let e = jacobi_eigh(&a, true).unwrap();
            let norm = frobenius(&a);
            for (i, &lam) in e.values.iter().enumerate() {
                let v = e.vectors.column(i).into_owned();
                let r = &a * &v - v.clone() * C64::new(lam, 0.0);
                assert!(r.norm() <= 1e-9 * norm, "residual {}", r.norm());
            }
            let vv = e.vectors.adjoint() * &e.vectors;
            assert!((vv - CMatrix::identity(n, n)).norm() < 1e-12);
            // independent oracle: nalgebra's Hermitian eigensolver
            let mut reference: Vec<f64> = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
            reference.sort_by(f64::total_cmp);
            for (x, y) in e.values.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-11 * norm.max(1.0));
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let a = from_real(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert!(matches!(jacobi_eigh(&a, false), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn orthonormalizing_factor_diagonal() {
        let g = from_real(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0, 0.25])));
        let (c, _) = orthonormalizing_factor(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 / g[(i, i)].re.sqrt() } else { 0.0 };
                assert!((c[(i, j)] - C64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn orthonormalizing_factor_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut b = CMatrix::zeros(5, 5);
        for z in b.iter_mut() {
            *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let g = &b * b.adjoint() + CMatrix::identity(5, 5) * C64::new(0.1, 0.0);
        let (c, cond) = orthonormalizing_factor(&g).unwrap();
        let r = c.adjoint() * &g * &c - CMatrix::identity(5, 5);
        assert!(r.norm() < 1e-12, "{}", r.norm());
        assert!(cond >= 1.0);
    }

    #[test]
    fn singular_gram_rejected() {
        let g = from_real(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(orthonormalizing_factor(&g), Err(Error::SingularGram { .. })));
    }
}
