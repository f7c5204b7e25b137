//! Scalar and super Toeplitz matrices, spectra and spectral measures.

use crate::geometry::{curvature_at, QuadratureGrid, Stratum, EPS_CURV};
use crate::spaces::{weighted_gram, HarmonicSpace};
use crate::superform::{self, GradedForm, SuperSymbol};
use crate::{linalg, CMatrix, Error, Result, C64};
use rayon::prelude::*;
use std::collections::HashMap;
use std::f64::consts::PI;

/// Toeplitz matrix in the orthonormal basis of a space.
#[derive(Clone, Debug)]
pub struct ToeplitzMatrix {
    pub matrix: CMatrix,
    pub symbol_id: String,
    pub k: u32,
    pub q: usize,
}

impl ToeplitzMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

const X1_CHUNK: usize = 16;

/// Matrix of the weighted multiplication `Σ_x w_x h(x) conj(ψ̂_i) ψ̂_j`.
fn weighted_matrix(space: &HarmonicSpace, h: &[f64]) -> Result<CMatrix> {
    let grid = &space.grid;
    if h.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!("{} symbol samples for {} nodes", h.len(), grid.len())));
    }
    if let Some(i) = h.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("symbol sample at node {i}")));
    }
    if space.factors.len() == 1 {
        let f = &space.factors[0];
        let w: Vec<f64> = grid.factors[0].weights.iter().zip(h).map(|(w, h)| w * h).collect();
        return weighted_gram(&f.onb_values, &w, f.dim);
    }
    // two-stage contraction over the tensor grid
    let (f1, f2) = (&space.factors[0], &space.factors[1]);
    let (g1, g2) = (&grid.factors[0], &grid.factors[1]);
    let (m1, m2) = (f1.dim, f2.dim);
    let n2 = g2.len();
    let dim = m1 * m2;
    let partial: Vec<CMatrix> = (0..g1.len().div_ceil(X1_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut out = CMatrix::zeros(dim, dim);
            for x1 in (c * X1_CHUNK)..((c + 1) * X1_CHUNK).min(g1.len()) {
                let w2: Vec<f64> = g2.weights.iter().zip(&h[x1 * n2..(x1 + 1) * n2]).map(|(w, h)| w * h).collect();
                let mut inner = CMatrix::zeros(m2, m2);
                for (x2, &w) in w2.iter().enumerate() {
                    let row = &f2.onb_values[x2 * m2..(x2 + 1) * m2];
                    for b in 0..m2 {
                        let cb = row[b].conj() * w;
                        for bb in 0..m2 {
                            inner[(b, bb)] += cb * row[bb];
                        }
                    }
                }
                let row1 = &f1.onb_values[x1 * m1..(x1 + 1) * m1];
                let w1 = g1.weights[x1];
                for a in 0..m1 {
                    for aa in 0..m1 {
                        let s = row1[a].conj() * row1[aa] * w1;
                        for b in 0..m2 {
                            for bb in 0..m2 {
                                out[(a * m2 + b, aa * m2 + bb)] += s * inner[(b, bb)];
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut m = CMatrix::zeros(dim, dim);
    for p in &partial {
        m += p;
    }
    Ok(m)
}

/// Scalar Toeplitz matrix `M_{ij} = Σ w f ⟨ψ̂_j, ψ̂_i⟩`, symmetrized.
pub fn assemble(space: &HarmonicSpace, f: &[f64], symbol_id: &str) -> Result<ToeplitzMatrix> {
    let m = weighted_matrix(space, f)?;
    Ok(ToeplitzMatrix { matrix: linalg::symmetrize(&m), symbol_id: symbol_id.into(), k: space.k, q: space.q })
}

/// Pointwise pairing `(i/2)ⁿ∫ e^{J₀}∧f∧e^{J₀†}∧e^{ω'}` of each unit diagonal
/// block `f = Π_{j∈K} e^j∧e^{j†}`: the density multiplying `conj(c_i)c_j`.
pub fn block_pairings(space: &HarmonicSpace) -> Result<Vec<f64>> {
    let n = space.n();
    let e = space.as_form(C64::new(1.0, 0.0));
    (0..1usize << n)
        .map(|k| {
            let f = GradedForm::paired(n, k, C64::new(1.0, 0.0));
            let p = superform::pairing(&f, &e, &e)?;
            if p.im.abs() > 1e-14 {
                return Err(Error::NotHermitian(p.im.abs()));
            }
            Ok(p.re)
        })
        .collect()
}

/// Super Toeplitz matrix `(T_f α, β) = (i/2)ⁿ∫ β†∧f∧α∧e^{-kφ+ω'}`.
pub fn assemble_super(space: &HarmonicSpace, f: &SuperSymbol, symbol_id: &str) -> Result<ToeplitzMatrix> {
    if f.n != space.n() {
        return Err(Error::DimensionMismatch(format!("symbol n = {}, space n = {}", f.n, space.n())));
    }
    let p = block_pairings(space)?;
    let len = space.grid.len();
    let mut density = vec![0.0; len];
    for (kmask, block) in f.blocks.iter().enumerate() {
        if let Some(b) = block {
            if p[kmask] != 0.0 {
                density.par_iter_mut().zip(b.par_iter()).for_each(|(d, v)| *d += p[kmask] * v);
            }
        }
    }
    let m = weighted_matrix(space, &density)?;
    Ok(ToeplitzMatrix { matrix: linalg::symmetrize(&m), symbol_id: symbol_id.into(), k: space.k, q: space.q })
}

/// `f_χ` on every node. Degenerate nodes use the count of eigenvalues below
/// `-ε_curv` as their index (they carry no limit mass).
pub fn reduced_symbol(space: &HarmonicSpace, f: &SuperSymbol) -> Result<Vec<f64>> {
    let geom = &space.geom;
    let grid = &space.grid;
    let n = geom.n;
    // reductions of the unit blocks are cached per (index, eigen-ordering); in the
    // catalog the chart frame already diagonalises the curvature
    let mut cache: HashMap<(usize, Vec<usize>), Vec<f64>> = HashMap::new();
    let mut keys = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.node(i);
        let lam = geom.factor_curvatures(&p);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lam[a].total_cmp(&lam[b]));
        let q = lam.iter().filter(|&&l| l < -EPS_CURV).count();
        let key = (q, order);
        if !cache.contains_key(&key) {
            let mut cd = curvature_at(geom, &p)?;
            cd.q_index = Stratum::Index(q);
            let r = (0..1usize << n)
                .map(|k| superform::symbol_reduce(&GradedForm::paired(n, k, C64::new(1.0, 0.0)), &cd))
                .collect::<Result<Vec<_>>>()?;
            cache.insert(key.clone(), r);
        }
        keys.push(key);
    }
    let coeffs: Vec<&Vec<f64>> = keys.iter().map(|k| &cache[k]).collect();
    Ok((0..grid.len())
        .into_par_iter()
        .map(|i| f.blocks.iter().enumerate().filter_map(|(k, b)| b.as_ref().map(|b| coeffs[i][k] * b[i])).sum())
        .collect())
}

/// Eigenvalues with weight `k^{-n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralMeasure {
    pub eigs: Vec<f64>,
    pub weight: f64,
    pub k: u32,
    pub n: usize,
}

impl SpectralMeasure {
    pub fn dim(&self) -> usize {
        self.eigs.len()
    }
}

pub fn spectrum(t: &ToeplitzMatrix, n: usize) -> Result<SpectralMeasure> {
    let e = linalg::jacobi_eigh(&t.matrix, false)?;
    Ok(SpectralMeasure { eigs: e.values, weight: (t.k as f64).powi(-(n as i32)), k: t.k, n })
}

/// Eigenvalues and eigenvectors (columns).
pub fn eigen(t: &ToeplitzMatrix) -> Result<linalg::HermitianEigen> {
    linalg::jacobi_eigh(&t.matrix, true)
}

/// `(#{τ > γ}, #{τ < γ})`.
pub fn counting(sm: &SpectralMeasure, gamma: f64) -> (usize, usize) {
    let above = sm.eigs.iter().filter(|&&t| t > gamma).count();
    let below = sm.eigs.iter().filter(|&&t| t < gamma).count();
    (above, below)
}

/// Midpoints of adjacent eigenvalue gaps.
pub fn gap_midpoints(sm: &SpectralMeasure) -> Vec<f64> {
    sm.eigs.windows(2).filter(|w| w[1] > w[0]).map(|w| 0.5 * (w[0] + w[1])).collect()
}

pub fn trace(t: &ToeplitzMatrix) -> f64 {
    linalg::trace_re(&t.matrix)
}

/// `Tr(T_f T_g)`.
pub fn trace_product(a: &ToeplitzMatrix, b: &ToeplitzMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", a.dim(), b.dim())));
    }
    let n = a.dim();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a.matrix[(i, j)] * b.matrix[(j, i)];
        }
    }
    Ok(s.re)
}

/// Discrete positive measure on the line, stored as sorted atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct PushforwardCdf {
    /// `(value, mass)`, strictly increasing values.
    pub atoms: Vec<(f64, f64)>,
    pub total: f64,
}

impl PushforwardCdf {
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> PushforwardCdf {
        atoms.retain(|a| a.1 > 0.0);
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, m) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += m,
                _ => merged.push((v, m)),
            }
        }
        let total = merged.iter().map(|a| a.1).sum();
        PushforwardCdf { atoms: merged, total }
    }

    /// Mass of `{value > γ}`.
    pub fn mass_above(&self, gamma: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 > gamma).map(|a| a.1).sum()
    }

    /// Normalized `F(t) = μ(≤ t)/μ(ℝ)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let i = self.atoms.partition_point(|a| a.0 <= t);
        self.atoms[..i].iter().map(|a| a.1).sum::<f64>() / self.total
    }
}

/// Pushforward of `π^{-n}|det| ω_n` restricted to `X(q)` by `f_χ`.
pub fn pushforward_cdf(space: &HarmonicSpace, f_chi: &[f64]) -> PushforwardCdf {
    pushforward_on(&space.geom, &space.grid, space.q, f_chi)
}

pub fn pushforward_on(geom: &crate::geometry::ModelGeometry, grid: &QuadratureGrid, q: usize, f_chi: &[f64]) -> PushforwardCdf {
    let nc = crate::geometry::node_curvature(geom, grid);
    let pin = PI.powi(geom.n as i32);
    let atoms = (0..grid.len())
        .filter(|&i| nc.strata[i] == Stratum::Index(q))
        .map(|i| (f_chi[i], grid.weight(i) * nc.det_abs[i] / pin))
        .collect();
    PushforwardCdf::from_atoms(atoms)
}

/// Normalized empirical measure of the spectrum as atoms.
pub fn spectral_cdf(sm: &SpectralMeasure) -> PushforwardCdf {
    PushforwardCdf::from_atoms(sm.eigs.iter().map(|&t| (t, 1.0)).collect())
}

/// Relative gap below which two atom locations are merged by [`ks_between`].
pub const KS_TIE: f64 = 1e-12;

/// `sup_t |F(t) − G(t)|` for two discrete measures, both normalized.
pub fn ks_between(a: &PushforwardCdf, b: &PushforwardCdf) -> Result<f64> {
    if !(a.total > 0.0) || !(b.total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut sup: f64 = 0.0;
    // right-continuous step functions change only at atoms; the supremum is
    // attained at one of them
    while i < a.atoms.len() || j < b.atoms.len() {
        let va = a.atoms.get(i).map_or(f64::INFINITY, |x| x.0);
        let vb = b.atoms.get(j).map_or(f64::INFINITY, |x| x.0);
        let v = va.min(vb);
        // values equal up to round-off count as one atom
        let v = v + KS_TIE * v.abs().max(1.0);
        while i < a.atoms.len() && a.atoms[i].0 <= v {
            fa += a.atoms[i].1;
            i += 1;
        }
        while j < b.atoms.len() && b.atoms[j].0 <= v {
            fb += b.atoms[j].1;
            j += 1;
        }
        sup = sup.max((fa / a.total - fb / b.total).abs());
    }
    Ok(sup)
}

/// KS distance between the normalized spectral measure and `cdf`.
pub fn ks_distance(sm: &SpectralMeasure, cdf: &PushforwardCdf) -> Result<f64> {
    ks_between(&spectral_cdf(sm), cdf)
}

/// Lévy distance between the normalized spectral measure and `cdf`.
pub fn levy_distance(sm: &SpectralMeasure, cdf: &PushforwardCdf) -> Result<f64> {
    levy_between(&spectral_cdf(sm), cdf)
}

/// `inf{ε : G(t−ε)−ε ≤ F(t) ≤ G(t+ε)+ε ∀t}` by bisection.
pub fn levy_between(f: &PushforwardCdf, g: &PushforwardCdf) -> Result<f64> {
    if !(f.total > 0.0) || !(g.total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let cum = |m: &PushforwardCdf| {
        let mut s = 0.0;
        m.atoms.iter().map(|a| {
            s += a.1 / m.total;
            s
        }).collect::<Vec<f64>>()
    };
    let (cf, cg) = (cum(f), cum(g));
    let right = |m: &PushforwardCdf, c: &[f64], t: f64| {
        let i = m.atoms.partition_point(|a| a.0 <= t);
        if i == 0 { 0.0 } else { c[i - 1] }
    };
    let left = |m: &PushforwardCdf, c: &[f64], t: f64| {
        let i = m.atoms.partition_point(|a| a.0 < t);
        if i == 0 { 0.0 } else { c[i - 1] }
    };
    let ok = |eps: f64| {
        // F and the shifted G are step functions; checking both one-sided
        // values at every jump of either suffices
        let mut pts: Vec<f64> = f.atoms.iter().map(|a| a.0).collect();
        pts.extend(g.atoms.iter().flat_map(|a| [a.0 - eps, a.0 + eps]));
        pts.iter().all(|&t| {
            let tol = 1e-15;
            let fr = right(f, &cf, t);
            let fl = left(f, &cf, t);
            right(g, &cg, t - eps) - eps <= fr + tol
                && fr <= right(g, &cg, t + eps) + eps + tol
                && left(g, &cg, t - eps) - eps <= fl + tol
                && fl <= left(g, &cg, t + eps) + eps + tol
        })
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    if ok(0.0) {
        return Ok(0.0);
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `max ‖Tv − τv‖ / ‖T‖` over the first `count` eigenpairs.
pub fn eigen_residual(t: &ToeplitzMatrix, count: usize) -> Result<f64> {
    let e = eigen(t)?;
    let norm = t.matrix.norm().max(f64::MIN_POSITIVE);
    let n = t.dim();
    let step = (n / count.max(1)).max(1);
    let mut worst: f64 = 0.0;
    for c in (0..n).step_by(step).take(count) {
        let v = e.vectors.column(c);
        let r = &t.matrix * v - v * C64::new(e.values[c], 0.0);
        worst = worst.max(r.norm() / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, GeometryKind, Resolution};
    use crate::spaces::build_space;
    use crate::symbol::Expr;
    use approx::assert_relative_eq;

    fn fs(k: u32) -> HarmonicSpace {
        let g = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        build_space(&g, k, 0, Resolution::CURVE).unwrap()
    }

    fn sample(space: &HarmonicSpace, e: &str) -> Vec<f64> {
        Expr::parse(e, space.n()).unwrap().sample(&space.grid).unwrap()
    }

    #[test]
    fn identity_and_constants() {
        let s = fs(6);
        let t = assemble(&s, &sample(&s, "1"), "1").unwrap();
        assert!((t.matrix.clone() - CMatrix::identity(7, 7)).norm() < 1e-10);
        let t = assemble(&s, &sample(&s, "2.5"), "c").unwrap();
        assert!((t.matrix.clone() - CMatrix::identity(7, 7) * C64::new(2.5, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn hemisphere_k1() {
        let s = fs(1);
        let t = assemble(&s, &sample(&s, "hemisphere(1)"), "hemisphere").unwrap();
        let sm = spectrum(&t, 1).unwrap();
        assert_relative_eq!(sm.eigs[0], 0.25, epsilon = 1e-8);
        assert_relative_eq!(sm.eigs[1], 0.75, epsilon = 1e-8);
        assert_eq!(counting(&sm, 0.5), (1, 1));
        assert_eq!(counting(&sm, -1.0).0, 2);
        assert_eq!(counting(&sm, sm.eigs[0]), (1, 0));
    }

    #[test]
    fn spectrum_examples() {
        let d = ToeplitzMatrix {
            matrix: CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![C64::new(3.0, 0.0), C64::new(1.0, 0.0), C64::new(2.0, 0.0)])),
            symbol_id: "d".into(),
            k: 1,
            q: 0,
        };
        assert_eq!(spectrum(&d, 1).unwrap().eigs, vec![1.0, 2.0, 3.0]);
        let x = ToeplitzMatrix {
            matrix: CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)]),
            symbol_id: "x".into(),
            k: 1,
            q: 0,
        };
        let e = spectrum(&x, 1).unwrap().eigs;
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn traces() {
        let s = fs(10);
        let f = sample(&s, "x3(1) + x1(1)^2");
        let g = sample(&s, "exp(x2(1))");
        let tf = assemble(&s, &f, "f").unwrap();
        let tg = assemble(&s, &g, "g").unwrap();
        let sm = spectrum(&tf, 1).unwrap();
        assert_relative_eq!(trace(&tf), sm.eigs.iter().sum::<f64>(), epsilon = 1e-9 * 11.0);
        let b = s.bergman_function();
        let via_b = s.grid.integrate(|i| f[i] * b[i]);
        assert_relative_eq!(trace(&tf), via_b, max_relative = 1e-8);
        assert_relative_eq!(trace_product(&tf, &tg).unwrap(), trace_product(&tg, &tf).unwrap(), epsilon = 1e-10);
        let one = assemble(&s, &sample(&s, "1"), "1").unwrap();
        assert_relative_eq!(trace(&one), 11.0, epsilon = 1e-9);
        assert!(eigen_residual(&tf, 10).unwrap() < 1e-9);
    }

    #[test]
    fn super_reduction_curve() {
        let s = fs(5);
        let c0 = sample(&s, "x3(1)");
        let c1 = sample(&s, "0.5*x1(1)");
        let sym = SuperSymbol::from_scalar(1, c0.clone()).with_block(1, c1.clone());
        let ts = assemble_super(&s, &sym, "super").unwrap();
        let sum: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| a + b).collect();
        let tc = assemble(&s, &sum, "sum").unwrap();
        assert!(linalg::max_entry(&(ts.matrix - tc.matrix)) < 1e-10);
        let fchi = reduced_symbol(&s, &sym).unwrap();
        assert!(fchi.iter().zip(&sum).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn super_product_direction_block_vanishes() {
        let g = build_geometry(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 }).unwrap();
        let s = build_space(&g, 3, 1, Resolution::PRODUCT).unwrap();
        let c2 = vec![1.7; s.grid.len()];
        let t = assemble_super(&s, &SuperSymbol::zero(2).with_block(2, c2), "c2").unwrap();
        assert!(linalg::max_entry(&t.matrix) < 1e-12);
        let one = assemble_super(&s, &SuperSymbol::from_scalar(2, vec![1.0; s.grid.len()]), "1").unwrap();
        assert!(linalg::max_entry(&(one.matrix - CMatrix::identity(s.dim, s.dim))) < 1e-10);
    }

    #[test]
    fn pushforward_examples() {
        let s = fs(4);
        let c = pushforward_cdf(&s, &sample(&s, "0.3"));
        assert_eq!(c.atoms.len(), 1);
        assert_relative_eq!(c.total, 1.0, max_relative = 1e-10);
        let h = pushforward_cdf(&s, &sample(&s, "hemisphere(1)"));
        assert_eq!(h.atoms.len(), 2);
        assert_relative_eq!(h.atoms[0].1, 0.5, max_relative = 1e-10);
        assert_relative_eq!(h.atoms[1].1, 0.5, max_relative = 1e-10);
        assert_relative_eq!(h.mass_above(0.5), 0.5, max_relative = 1e-10);
    }

    #[test]
    fn distances() {
        let a = PushforwardCdf::from_atoms(vec![(1.0, 2.0), (2.0, 2.0)]);
        let b = PushforwardCdf::from_atoms(vec![(1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(ks_between(&a, &b).unwrap(), 0.0);
        assert_eq!(levy_between(&a, &b).unwrap(), 0.0);
        let c = PushforwardCdf::from_atoms(vec![(0.0, 1.0)]);
        let d = PushforwardCdf::from_atoms(vec![(0.1, 1.0)]);
        assert_eq!(ks_between(&c, &d).unwrap(), 1.0);
        assert!((levy_between(&c, &d).unwrap() - 0.1).abs() < 1e-9);
        let z = PushforwardCdf::from_atoms(vec![]);
        assert!(matches!(ks_between(&c, &z), Err(Error::ZeroMass)));
    }
}
