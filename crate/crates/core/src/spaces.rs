//! Harmonic section and form spaces with their Bergman objects.
//!
//! Every basis element is stored through its *weighted* coefficient in the
//! orthonormal coframe `e = dz/(1+|z|²)` of each factor, multiplied by
//! `e^{-kφ/2}`, so pointwise norms are plain `|·|²` and nothing overflows.
//!
//! * `FS_CP1(d)`, `PERTURBED_CP1(d,t)`: monomials `z^j`, `j = 0..kd`
//!   (south chart `w^{kd-j}`).
//! * `NEG_CP1(m)`, `M = km`: `u_j = z̄^j(1+|z|²)^{-M} dz̄`, `j = 0..M-2`, which
//!   satisfy `∂_z(u_j e^{-kφ}) = 0`. The weighted `ē`-coefficient is
//!   `z̄^j(1+|z|²)^{1-M/2}` (south chart `-w̄^{M-2-j}(1+|w|²)^{1-M/2}`).
//! * `PRODUCT_CP1xCP1(a,b)`: Künneth products of the two.
//!
//! All spaces carry a single `(0,q)` component `e^{J₀†}`, fixed per geometry.

use crate::geometry::grid::{build_grid, QuadratureGrid, Resolution, CHUNK};
use crate::geometry::{curvature_at, Chart, FactorPoint, GeometryKind, LineFactor, ModelGeometry, Point, Stratum};
use crate::superform::{self, GradedForm};
use crate::{linalg, CMatrix, Error, Result, C64};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::ops::{Add, Div, Mul, Sub};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Ansatz of one `CP¹` factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorBasis {
    /// Holomorphic sections of `O(total)`: `z^j`, `j = 0..=total`.
    Sections { total: u32, line: LineFactor, k: u32 },
    /// Harmonic `(0,1)`-forms with values in `O(-total)`: `j = 0..total-2`.
    Forms { total: u32 },
}

impl FactorBasis {
    pub fn dim(&self) -> usize {
        match *self {
            FactorBasis::Sections { total, .. } => total as usize + 1,
            FactorBasis::Forms { total } => (total as usize).saturating_sub(1),
        }
    }

    /// Weighted coefficients of all basis elements at `p`, written to `out`.
    pub fn values(&self, p: &FactorPoint, out: &mut [C64]) {
        match *self {
            FactorBasis::Sections { total, line, k } => {
                let half = -0.5 * k as f64 * line.weight(p);
                let scale = half.exp();
                let z = p.coord;
                match p.chart {
                    Chart::North => {
                        let mut zp = C64::new(scale, 0.0);
                        for o in out.iter_mut() {
                            *o = zp;
                            zp *= z;
                        }
                    }
                    Chart::South => {
                        let mut zp = C64::new(scale, 0.0);
                        for o in out.iter_mut().rev() {
                            *o = zp;
                            zp *= z;
                        }
                    }
                }
                debug_assert_eq!(out.len(), total as usize + 1);
            }
            FactorBasis::Forms { total } => {
                let m = total as i32;
                let v = p.v();
                let scale = (1.0 + v).powf(1.0 - m as f64 / 2.0);
                let zb = p.coord.conj();
                let mut zp = C64::new(scale, 0.0);
                match p.chart {
                    Chart::North => {
                        // dz̄ = (1+|z|²)ē and e^{-kφ/2} = (1+|z|²)^{M/2}
                        let frame = (1.0 + v) * (1.0 + v).powf(m as f64 / 2.0);
                        for (j, o) in out.iter_mut().enumerate() {
                            *o = form_raw(p.coord, zb, j as u32, total) * frame;
                        }
                    }
                    Chart::South => {
                        for o in out.iter_mut().rev() {
                            *o = -zp;
                            zp *= zb;
                        }
                    }
                }
            }
        }
    }
}

/// Minimal field needed to evaluate the raw form ansatz, so the same code runs
/// on complex numbers and on dual numbers.
pub trait Field: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> {
    fn constant(c: C64) -> Self;
    fn powi(self, e: i32) -> Self {
        let mut acc = Self::constant(C64::new(1.0, 0.0));
        let base = if e < 0 { Self::constant(C64::new(1.0, 0.0)) / self } else { self };
        for _ in 0..e.unsigned_abs() {
            acc = acc * base;
        }
        acc
    }
}

impl Field for C64 {
    fn constant(c: C64) -> Self {
        c
    }
}

/// Dual number `v + d·ε`, `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: C64,
    pub d: C64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.v * o.d + self.d * o.v }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual { v: self.v / o.v, d: (self.d * o.v - self.v * o.d) / (o.v * o.v) }
    }
}

impl Field for Dual {
    fn constant(c: C64) -> Self {
        Dual { v: c, d: ZERO }
    }
}

/// Raw `dz̄`-coefficient `z̄^j(1+z z̄)^{-M}` of the form ansatz, with `z` and
/// `z̄` as independent variables.
pub fn form_raw<T: Field>(z: T, zbar: T, j: u32, total: u32) -> T {
    let one = T::constant(C64::new(1.0, 0.0));
    zbar.powi(j as i32) * (one + z * zbar).powi(-(total as i32))
}

/// `e^{-kφ} = (1+z z̄)^{M}` for the weight `kφ = -M log(1+|z|²)`.
pub fn form_weight_inv<T: Field>(z: T, zbar: T, total: u32) -> T {
    let one = T::constant(C64::new(1.0, 0.0));
    (one + z * zbar).powi(total as i32)
}

/// One factor of a space: ansatz values on the factor grid, Gram matrix and
/// orthonormalizing factor.
#[derive(Clone, Debug)]
pub struct FactorSpace {
    pub basis: FactorBasis,
    pub dim: usize,
    /// Weighted ansatz values, node-major (`values[node·dim + i]`).
    pub values: Vec<C64>,
    pub gram: CMatrix,
    pub onb: CMatrix,
    /// Orthonormal-basis values, node-major.
    pub onb_values: Vec<C64>,
    pub condition: f64,
}

fn factor_values(basis: &FactorBasis, nodes: &[FactorPoint]) -> Vec<C64> {
    let m = basis.dim();
    let mut values = vec![ZERO; nodes.len() * m];
    if m > 0 {
        values.par_chunks_mut(m).zip(nodes.par_iter()).for_each(|(out, p)| basis.values(p, out));
    }
    values
}

/// `G_{ij} = Σ_x w_x conj(V_{xi}) V_{xj}` in fixed chunk order.
pub(crate) fn weighted_gram(values: &[C64], weights: &[f64], m: usize) -> Result<CMatrix> {
    let len = weights.len();
    let partial: Vec<CMatrix> = (0..len.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut g = CMatrix::zeros(m, m);
            for x in (c * CHUNK)..((c + 1) * CHUNK).min(len) {
                let row = &values[x * m..(x + 1) * m];
                let w = weights[x];
                for i in 0..m {
                    let ci = row[i].conj() * w;
                    for j in 0..m {
                        g[(i, j)] += ci * row[j];
                    }
                }
            }
            g
        })
        .collect();
    let mut g = CMatrix::zeros(m, m);
    for p in &partial {
        g += p;
    }
    if g.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("Gram matrix entry".into()));
    }
    Ok(linalg::symmetrize(&g))
}

/// Orthonormalizing factor `C` with `C*GC = I` (empty input allowed).
pub fn orthonormalize(gram: &CMatrix) -> Result<(CMatrix, f64)> {
    if gram.nrows() == 0 {
        return Ok((CMatrix::zeros(0, 0), 1.0));
    }
    let (c, cond) = linalg::orthonormalizing_factor(gram)?;
    log::debug!("Gram condition estimate {cond:.3e}");
    Ok((c, cond))
}

fn times_matrix(values: &[C64], m: usize, c: &CMatrix) -> Vec<C64> {
    let mut out = vec![ZERO; values.len()];
    if m == 0 {
        return out;
    }
    out.par_chunks_mut(m).zip(values.par_chunks(m)).for_each(|(o, v)| {
        for j in 0..m {
            let mut s = ZERO;
            for i in 0..m {
                s += v[i] * c[(i, j)];
            }
            o[j] = s;
        }
    });
    out
}

impl FactorSpace {
    fn build(basis: FactorBasis, nodes: &[FactorPoint], weights: &[f64]) -> Result<FactorSpace> {
        let dim = basis.dim();
        let values = factor_values(&basis, nodes);
        let gram = weighted_gram(&values, weights, dim)?;
        let (onb, condition) = orthonormalize(&gram)?;
        let onb_values = times_matrix(&values, dim, &onb);
        Ok(FactorSpace { basis, dim, values, gram, onb, onb_values, condition })
    }

    fn onb_at(&self, p: &FactorPoint) -> Vec<C64> {
        let mut raw = vec![ZERO; self.dim];
        self.basis.values(p, &mut raw);
        (0..self.dim).map(|j| (0..self.dim).map(|i| raw[i] * self.onb[(i, j)]).sum()).collect()
    }

    /// `Σ_i |ψ̂_i|²` at every factor node.
    fn bergman(&self) -> Vec<f64> {
        if self.dim == 0 {
            return vec![0.0; self.values.len()];
        }
        self.onb_values.chunks(self.dim).map(|r| r.iter().map(|c| c.norm_sqr()).sum()).collect()
    }
}

/// Harmonic space `H^q(X, L^k)` with its orthonormal basis on a grid.
#[derive(Clone, Debug)]
pub struct HarmonicSpace {
    pub geom: ModelGeometry,
    pub k: u32,
    pub q: usize,
    /// Mask `J₀` of the single `(0,q)` component `e^{J₀†}`.
    pub form_component: usize,
    pub grid: QuadratureGrid,
    pub factors: Vec<FactorSpace>,
    pub gram: CMatrix,
    /// `C` with `C*GC = I`; columns give the orthonormal basis.
    pub onb: CMatrix,
    pub dim: usize,
    pub condition: f64,
}

/// Factor ansatz and form component for a catalog geometry.
fn ansatz(geom: &ModelGeometry, k: u32, q: usize) -> Result<(Vec<FactorBasis>, usize)> {
    if k == 0 {
        return Err(Error::Unsupported("tensor power k must be at least 1".into()));
    }
    let unsupported = || Error::Unsupported(format!("{} with q = {q}", geom.name()));
    match geom.kind {
        GeometryKind::FsCp1 { d } | GeometryKind::PerturbedCp1 { d, .. } => {
            if q != 0 {
                return Err(unsupported());
            }
            Ok((vec![FactorBasis::Sections { total: k * d, line: geom.factors[0], k }], 0))
        }
        GeometryKind::NegCp1 { m } => {
            if q != 1 {
                return Err(unsupported());
            }
            Ok((vec![FactorBasis::Forms { total: k * m }], 1))
        }
        GeometryKind::ProductCp1xCp1 { a, b } => {
            if q != 1 {
                return Err(unsupported());
            }
            Ok((
                vec![
                    FactorBasis::Sections { total: k * a, line: geom.factors[0], k },
                    FactorBasis::Forms { total: k * b },
                ],
                0b10,
            ))
        }
    }
}

/// Builds the space on `grid`: ansatz, Gram matrix and orthonormal basis.
pub fn build_space_on(geom: &ModelGeometry, k: u32, q: usize, grid: &QuadratureGrid) -> Result<HarmonicSpace> {
    let (bases, form_component) = ansatz(geom, k, q)?;
    let factors = bases
        .into_iter()
        .zip(&grid.factors)
        .map(|(b, g)| FactorSpace::build(b, &g.nodes, &g.weights))
        .collect::<Result<Vec<_>>>()?;
    let (gram, onb, condition) = if factors.len() == 1 {
        (factors[0].gram.clone(), factors[0].onb.clone(), factors[0].condition)
    } else {
        (
            linalg::kron(&factors[0].gram, &factors[1].gram),
            linalg::kron(&factors[0].onb, &factors[1].onb),
            factors[0].condition * factors[1].condition,
        )
    };
    let dim = factors.iter().map(|f| f.dim).product();
    Ok(HarmonicSpace { geom: geom.clone(), k, q, form_component, grid: grid.clone(), factors, gram, onb, dim, condition })
}

/// Builds the space on a fresh grid at resolution `res`.
pub fn build_space(geom: &ModelGeometry, k: u32, q: usize, res: Resolution) -> Result<HarmonicSpace> {
    let grid = build_grid(geom, res)?;
    build_space_on(geom, k, q, &grid)
}

/// Gram matrix of the space's ansatz under the quadrature of `grid`.
pub fn gram_matrix(space: &HarmonicSpace, grid: &QuadratureGrid) -> Result<CMatrix> {
    let grams = space
        .factors
        .iter()
        .zip(&grid.factors)
        .map(|(f, g)| weighted_gram(&factor_values(&f.basis, &g.nodes), &g.weights, f.dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(if grams.len() == 1 { grams[0].clone() } else { linalg::kron(&grams[0], &grams[1]) })
}

/// Directions `θ` used to probe each space: the unit `(0,q)` forms `e^{j†}`.
pub fn unit_direction(n: usize, j_mask: usize) -> GradedForm {
    GradedForm::monomial(n, 0, j_mask, C64::new(1.0, 0.0))
}

impl HarmonicSpace {
    pub fn n(&self) -> usize {
        self.geom.n
    }

    /// Orthonormal-basis weighted coefficients at an arbitrary point.
    pub fn onb_at(&self, p: &Point) -> Vec<C64> {
        let f0 = self.factors[0].onb_at(&p.factors[0]);
        if self.factors.len() == 1 {
            return f0;
        }
        let f1 = self.factors[1].onb_at(&p.factors[1]);
        f0.iter().flat_map(|a| f1.iter().map(move |b| a * b)).collect()
    }

    /// Orthonormal-basis values at grid node `i`.
    pub fn node_onb(&self, i: usize) -> Vec<C64> {
        let idx = self.grid.factor_indices(i);
        let m0 = self.factors[0].dim;
        let r0 = &self.factors[0].onb_values[idx[0] * m0..(idx[0] + 1) * m0];
        if self.factors.len() == 1 {
            return r0.to_vec();
        }
        let m1 = self.factors[1].dim;
        let r1 = &self.factors[1].onb_values[idx[1] * m1..(idx[1] + 1) * m1];
        r0.iter().flat_map(|a| r1.iter().map(move |b| a * b)).collect()
    }

    /// The basis coefficient `c` as the form `c·e^{J₀†}`.
    pub fn as_form(&self, c: C64) -> GradedForm {
        GradedForm::monomial(self.n(), 0, self.form_component, c)
    }

    /// Weighted coefficient of `α = Σ a_i ψ̂_i` at `p`.
    pub fn evaluate(&self, a: &[C64], p: &Point) -> C64 {
        self.onb_at(p).iter().zip(a).map(|(v, a)| v * a).sum()
    }

    /// Bergman function on all grid nodes.
    pub fn bergman_function(&self) -> Vec<f64> {
        let b: Vec<Vec<f64>> = self.factors.iter().map(FactorSpace::bergman).collect();
        if b.len() == 1 {
            return b.into_iter().next().unwrap();
        }
        let mut out = Vec::with_capacity(b[0].len() * b[1].len());
        for x in &b[0] {
            out.extend(b[1].iter().map(|y| x * y));
        }
        out
    }

    /// `B(p) = Σ |ψ̂_i(p)|²`.
    pub fn bergman_at(&self, p: &Point) -> f64 {
        self.onb_at(p).iter().map(|c| c.norm_sqr()).sum()
    }

    /// `𝔅(p) = Σ ψ̂_i(p)†∧ψ̂_i(p)` (weights included).
    pub fn bergman_form_at(&self, p: &Point) -> GradedForm {
        self.onb_at(p).iter().fold(GradedForm::zero(self.n()), |acc, &c| {
            let f = self.as_form(c);
            &acc + &f.dagger().wedge(&f).expect("same dimension")
        })
    }

    /// `|K(x,y)|² e^{-kφ(x)-kφ(y)}`, summed over all form components.
    pub fn kernel_norm2(&self, x: &Point, y: &Point) -> f64 {
        let a = self.onb_at(x);
        let b = self.onb_at(y);
        a.iter().zip(&b).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr()
    }

    /// `⟨ψ̂_i(p), θ⟩` for every basis element, through the pointwise pairing.
    pub fn directional_values(&self, p: &Point, theta: &GradedForm) -> Result<Vec<C64>> {
        let one = GradedForm::one(self.n());
        self.onb_at(p).iter().map(|&c| superform::pairing(&one, &self.as_form(c), theta)).collect()
    }

    /// `B_θ(p) = Σ |⟨ψ̂_i(p), θ⟩|²`.
    pub fn bergman_theta(&self, p: &Point, theta: &GradedForm) -> Result<f64> {
        Ok(self.directional_values(p, theta)?.iter().map(|c| c.norm_sqr()).sum())
    }

    /// Coefficients of `K_{x,θ} = Σ_i conj⟨ψ̂_i(x),θ⟩ ψ̂_i`.
    pub fn kernel_section(&self, x: &Point, theta: &GradedForm) -> Result<Vec<C64>> {
        Ok(self.directional_values(x, theta)?.iter().map(|v| v.conj()).collect())
    }

    /// Unit-norm extremal `K_{x,θ}/‖K_{x,θ}‖`.
    pub fn extremal_section(&self, x: &Point, theta: &GradedForm) -> Result<Vec<C64>> {
        let kx = self.kernel_section(x, theta)?;
        let norm2: f64 = kx.iter().map(|c| c.norm_sqr()).sum();
        let scale = self.bergman_at(x).max(1.0);
        if !(norm2 > 1e-24 * scale) {
            return Err(Error::NoExtremal);
        }
        let s = 1.0 / norm2.sqrt();
        Ok(kx.iter().map(|c| c * s).collect())
    }

    /// Pointwise `|α(y)|²` for coefficient vector `a`.
    pub fn pointwise_norm2(&self, a: &[C64], y: &Point) -> f64 {
        self.evaluate(a, y).norm_sqr()
    }

    /// Largest `|∂_z(u_j e^{-kφ})| / |u_j e^{-kφ}|` over the form factor at
    /// random points, by dual-number differentiation. Zero for `q = 0`.
    pub fn harmonicity_residual(&self, points: usize, seed: u64) -> f64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for f in &self.factors {
            let FactorBasis::Forms { total } = f.basis else { continue };
            for _ in 0..points {
                let z0 = C64::from_polar(rng.gen_range(0.05..2.0), rng.gen_range(0.0..2.0 * PI));
                let z = Dual { v: z0, d: C64::new(1.0, 0.0) };
                let zb = Dual { v: z0.conj(), d: ZERO };
                for j in 0..total.saturating_sub(1) {
                    let h = form_raw(z, zb, j, total) * form_weight_inv(z, zb, total);
                    worst = worst.max(h.d.norm() / h.v.norm().max(f64::MIN_POSITIVE));
                }
            }
        }
        worst
    }
}

/// `max_y |α(y) − (α, K_y)|` with the inner product taken on an independent
/// grid `grid2`, for the unit member `α = Σ a_i ψ̂_i`.
pub fn reproducing_residual(space: &HarmonicSpace, grid2: &QuadratureGrid, a: &[C64], points: &[Point]) -> Result<f64> {
    if space.dim == 0 {
        return Ok(0.0);
    }
    let g2 = gram_matrix(space, grid2)?;
    let s = space.onb.adjoint() * g2 * &space.onb;
    let av = nalgebra::DVector::from_column_slice(a);
    let diff = &av - s * &av;
    Ok(points.iter().map(|y| space.evaluate(diff.as_slice(), y).norm()).fold(0.0, f64::max))
}

/// Random unit coefficient vector of length `dim`.
pub fn random_unit(dim: usize, rng: &mut impl Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..dim).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
    v
}

/// Uniform random points on the sphere (one per factor).
pub fn random_points(n: usize, count: usize, rng: &mut impl Rng) -> Vec<Point> {
    let mut one = || {
        let z: f64 = rng.gen_range(-1.0..1.0);
        let a: f64 = rng.gen_range(0.0..2.0 * PI);
        let s = (1.0 - z * z).sqrt();
        FactorPoint::from_sphere([s * a.cos(), s * a.sin(), z])
    };
    (0..count)
        .map(|_| if n == 1 { Point::curve(one()) } else { Point::product(one(), one()) })
        .collect()
}

/// Sampled Bergman objects.
#[derive(Clone, Debug)]
pub struct BergmanData {
    /// `B` on every grid node.
    pub b: Vec<f64>,
    /// `𝔅` on the requested nodes.
    pub bform: Vec<(usize, GradedForm)>,
    /// `|K(x,y)|²e^{-kφ(x)-kφ(y)}` on the pair sample.
    pub offdiag: Vec<f64>,
}

/// Grid node pairs drawn with probability proportional to `w_x w_y`.
#[derive(Clone, Debug)]
pub struct PairSample {
    pub pairs: Vec<(usize, usize)>,
    /// `(Σ w)²`: the weight of each pair is `total² / len`.
    pub total_weight2: f64,
}

/// Default pair budget for off-diagonal kernel statistics.
pub const PAIR_BUDGET: usize = 10_000;

pub fn sample_pairs(grid: &QuadratureGrid, count: usize, seed: u64) -> PairSample {
    let w = grid.weights();
    let mut cum = Vec::with_capacity(w.len());
    let mut s = 0.0;
    for x in &w {
        s += x;
        cum.push(s);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let r = rng.gen_range(0.0..s);
        cum.partition_point(|&c| c <= r).min(w.len() - 1)
    };
    let pairs = (0..count).map(|_| (draw(), draw())).collect();
    PairSample { pairs, total_weight2: s * s }
}

/// Collects `B` on the grid, `𝔅` on `bform_nodes` and kernel norms on `pairs`.
pub fn bergman_data(space: &HarmonicSpace, bform_nodes: &[usize], pairs: &PairSample) -> BergmanData {
    let b = space.bergman_function();
    let bform = bform_nodes.iter().map(|&i| (i, space.bergman_form_at(&space.grid.node(i)))).collect();
    let offdiag = pairs
        .pairs
        .par_iter()
        .map(|&(x, y)| {
            let a = space.node_onb(x);
            let c = space.node_onb(y);
            a.iter().zip(&c).map(|(a, c)| a.conj() * c).sum::<C64>().norm_sqr()
        })
        .collect();
    BergmanData { b, bform, offdiag }
}

/// `(i/2)ⁿ ∫ 𝔅∧e^{ω'}`: the trace pairing that recovers `B` from `𝔅`.
pub fn form_trace(f: &GradedForm) -> Result<f64> {
    let n = f.n();
    let t = f.wedge(&superform::exp_omega_prime(n))?;
    Ok((superform::half_i_pow(n) * superform::berezin(&t, superform::volume_coefficient(n))?).re)
}

/// Result of the finite-`k` local Morse comparison
/// `k^{-n}B_θ ≤ (1+5/k) π^{-n}⟨χ, θ†∧θ⟩|det|`.
#[derive(Clone, Debug, PartialEq)]
pub struct MorseMonitor {
    pub nodes: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` (`∞` where the right side vanishes and the left does not).
    pub worst_ratio: f64,
}

/// Runs the local Morse comparison on every grid node for the direction
/// `θ = e^{J₀†}`, which carries all of `B`.
pub fn local_morse_monitor(space: &HarmonicSpace) -> Result<MorseMonitor> {
    let n = space.n();
    let theta = unit_direction(n, space.form_component);
    let b = space.bergman_function();
    let kn = (space.k as f64).powi(n as i32);
    let band = 1.0 + 5.0 / space.k as f64;
    let pin = PI.powi(n as i32);
    // ⟨χ, θ†∧θ⟩ depends only on the factor charts' frame, which is aligned
    // with the curvature eigenframe; evaluate it once per stratum pattern.
    let tt = theta.dagger().wedge(&theta)?;
    let nc = crate::geometry::node_curvature(&space.geom, &space.grid);
    let probe = space.grid.node(0);
    let cd = curvature_at(&space.geom, &probe)?;
    let mut cache: std::collections::BTreeMap<Stratum, f64> = Default::default();
    let mut out = MorseMonitor { nodes: b.len(), violations: 0, worst_ratio: 0.0 };
    for (i, &bi) in b.iter().enumerate() {
        let s = nc.strata[i];
        let overlap = *cache.entry(s).or_insert_with(|| match s {
            Stratum::Degenerate => 0.0,
            Stratum::Index(q) => {
                let mut c = cd.clone();
                c.q_index = Stratum::Index(q);
                let chi = superform::direction_form(&c, q).form;
                chi.coeffs().iter().zip(tt.coeffs()).map(|(a, b)| (a * b.conj()).re).sum()
            }
        });
        let lhs = bi / kn;
        let rhs = band * overlap * nc.det_abs[i] / pin;
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        if lhs > rhs {
            out.violations += 1;
        }
        out.worst_ratio = out.worst_ratio.max(ratio);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, t_max};
    use approx::assert_relative_eq;

    fn fs(k: u32) -> HarmonicSpace {
        let g = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        build_space(&g, k, 0, Resolution::CURVE).unwrap()
    }

    fn neg(k: u32) -> HarmonicSpace {
        let g = build_geometry(GeometryKind::NegCp1 { m: 1 }).unwrap();
        build_space(&g, k, 1, Resolution::CURVE).unwrap()
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn fs_gram_is_beta_diagonal() {
        let k = 12;
        let s = fs(k);
        for i in 0..=k as usize {
            for j in 0..=k as usize {
                let g = s.gram[(i, j)];
                if i == j {
                    let exact = PI * factorial(i as u32) * factorial(k - i as u32) / factorial(k + 1);
                    assert_relative_eq!(g.re, exact, max_relative = 1e-10);
                } else {
                    assert!(g.norm() < 1e-12, "{i} {j} {g}");
                }
            }
        }
    }

    #[test]
    fn neg_gram_is_beta_diagonal() {
        let k = 9;
        let s = neg(k);
        assert_eq!(s.dim, k as usize - 1);
        for j in 0..s.dim {
            let exact = PI * factorial(j as u32) * factorial(k - 2 - j as u32) / factorial(k - 1);
            assert_relative_eq!(s.gram[(j, j)].re, exact, max_relative = 1e-10);
        }
    }

    #[test]
    fn constant_bergman_functions() {
        let s = fs(2);
        for b in s.bergman_function() {
            assert_relative_eq!(b, 3.0 / PI, max_relative = 1e-10);
        }
        let s = neg(5);
        for b in s.bergman_function() {
            assert_relative_eq!(b, 4.0 / PI, max_relative = 1e-10);
        }
    }

    #[test]
    fn empty_and_unsupported() {
        let g = build_geometry(GeometryKind::NegCp1 { m: 1 }).unwrap();
        let s = build_space(&g, 1, 1, Resolution::CURVE).unwrap();
        assert_eq!(s.dim, 0);
        assert!(s.bergman_function().iter().all(|&b| b == 0.0));
        assert!(matches!(build_space(&g, 3, 0, Resolution::CURVE), Err(Error::Unsupported(_))));
        assert!(matches!(build_space(&g, 0, 1, Resolution::CURVE), Err(Error::Unsupported(_))));
        let f = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        assert!(matches!(build_space(&f, 3, 1, Resolution::CURVE), Err(Error::Unsupported(_))));
    }

    #[test]
    fn fs_kernel_formula_and_antipodes() {
        let k = 7;
        let s = fs(k);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for pair in random_points(1, 40, &mut rng).chunks(2) {
            let (x, y) = (pair[0], pair[1]);
            let (xn, yn) = (x.factors[0].in_chart(Chart::North), y.factors[0].in_chart(Chart::North));
            let (Some(xn), Some(yn)) = (xn, yn) else { continue };
            let (a, b) = (xn.coord, yn.coord);
            let exact = ((k + 1) as f64 / PI).powi(2) * (C64::new(1.0, 0.0) + a * b.conj()).norm_sqr().powi(k as i32)
                / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).powi(k as i32);
            assert_relative_eq!(s.kernel_norm2(&x, &y), exact, max_relative = 1e-9);
        }
        let s1 = fs(1);
        let x = Point::curve(FactorPoint::north(ZERO));
        let y = Point::curve(FactorPoint::south(ZERO));
        assert!(s1.kernel_norm2(&x, &y) < 1e-20);
        assert_relative_eq!(s1.kernel_norm2(&x, &x).sqrt(), s1.bergman_at(&x), max_relative = 1e-12);
    }

    #[test]
    fn product_bergman_form_is_pure() {
        let g = build_geometry(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 }).unwrap();
        let k = 4;
        let s = build_space(&g, k, 1, Resolution::PRODUCT).unwrap();
        assert_eq!(s.dim, 15);
        let p = Point::product(FactorPoint::north(C64::new(0.3, 0.1)), FactorPoint::south(C64::new(-0.2, 0.4)));
        let bf = s.bergman_form_at(&p);
        let exact = 15.0 / (PI * PI);
        assert_relative_eq!(bf.coeff(0b10, 0b10).re, exact, max_relative = 1e-8);
        let mut rest = bf.clone();
        rest.set_coeff(0b10, 0b10, ZERO);
        assert!(rest.max_abs() < 1e-12);
        assert!(bf.is_dagger_real(1e-14));
        assert_relative_eq!(form_trace(&bf).unwrap(), s.bergman_at(&p), max_relative = 1e-12);
    }

    #[test]
    fn product_gram_matches_direct_quadrature() {
        let g = build_geometry(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 }).unwrap();
        let res = Resolution { nodes_per_panel: 6, angular: 6 };
        let s = build_space(&g, 2, 1, res).unwrap();
        let mut direct = CMatrix::zeros(s.dim, s.dim);
        for x in 0..s.grid.len() {
            let p = s.grid.node(x);
            let f0 = {
                let mut v = vec![ZERO; s.factors[0].dim];
                s.factors[0].basis.values(&p.factors[0], &mut v);
                v
            };
            let mut f1 = vec![ZERO; s.factors[1].dim];
            s.factors[1].basis.values(&p.factors[1], &mut f1);
            let v: Vec<C64> = f0.iter().flat_map(|a| f1.iter().map(move |b| a * b)).collect();
            for i in 0..s.dim {
                for j in 0..s.dim {
                    direct[(i, j)] += v[i].conj() * v[j] * s.grid.weight(x);
                }
            }
        }
        let d = (direct - &s.gram).norm();
        assert!(d < 1e-13 * s.gram.norm(), "{d}");
    }

    #[test]
    fn extremal_property() {
        let s = fs(9);
        let x = Point::curve(FactorPoint::north(C64::new(0.2, -0.7)));
        let theta = GradedForm::one(1);
        let a = s.extremal_section(&x, &theta).unwrap();
        let n: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        assert_relative_eq!(n, 1.0, max_relative = 1e-14);
        assert_relative_eq!(s.pointwise_norm2(&a, &x), 10.0 / PI, max_relative = 1e-8);
        let g = build_geometry(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 }).unwrap();
        let p = build_space(&g, 3, 1, Resolution::PRODUCT).unwrap();
        let y = Point::product(FactorPoint::north(C64::new(0.1, 0.0)), FactorPoint::north(C64::new(0.0, 0.5)));
        assert!(p.extremal_section(&y, &unit_direction(2, 0b10)).is_ok());
        assert!(matches!(p.extremal_section(&y, &unit_direction(2, 0b01)), Err(Error::NoExtremal)));
    }

    #[test]
    fn form_charts_agree() {
        let b = FactorBasis::Forms { total: 9 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let z = C64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..2.0 * PI));
            let pn = FactorPoint::north(z);
            let ps = pn.in_chart(Chart::South).unwrap();
            let (mut a, mut c) = (vec![ZERO; 8], vec![ZERO; 8]);
            b.values(&pn, &mut a);
            b.values(&ps, &mut c);
            for i in 0..8 {
                for j in 0..8 {
                    let d = a[i] * a[j].conj() - c[i] * c[j].conj();
                    assert!(d.norm() < 1e-12 * (1.0 + a[i].norm() * a[j].norm()));
                }
            }
        }
    }

    #[test]
    fn harmonic_forms() {
        assert!(neg(8).harmonicity_residual(100, 1) < 1e-10);
        assert_eq!(fs(3).harmonicity_residual(10, 1), 0.0);
    }

    #[test]
    fn reproducing_with_independent_grid() {
        let s = fs(30);
        let g2 = build_grid(&s.geom, Resolution { nodes_per_panel: 26, angular: 90 }).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = random_unit(s.dim, &mut rng);
        let pts = random_points(1, 200, &mut rng);
        assert!(reproducing_residual(&s, &g2, &a, &pts).unwrap() < 1e-8);
        let zero = vec![ZERO; s.dim];
        assert_eq!(reproducing_residual(&s, &g2, &zero, &pts).unwrap(), 0.0);
    }

    #[test]
    fn perturbed_full_factorization() {
        let g = build_geometry(GeometryKind::PerturbedCp1 { d: 1, t: t_max(1) }).unwrap();
        let s = build_space(&g, 10, 0, Resolution::CURVE).unwrap();
        let resid = (s.onb.adjoint() * &s.gram * &s.onb - CMatrix::identity(s.dim, s.dim)).norm();
        assert!(resid < 1e-12);
        let total: f64 = s.grid.integrate({
            let b = s.bergman_function();
            move |i| b[i]
        });
        assert_relative_eq!(total, s.dim as f64, max_relative = 1e-10);
    }

    #[test]
    fn morse_monitor_on_fs() {
        let m = local_morse_monitor(&fs(10)).unwrap();
        assert_eq!(m.violations, 0);
        assert!(m.worst_ratio <= 1.0);
    }
}
