//! Exterior algebra over a pointwise orthonormal coframe.
//!
//! A [`GradedForm`] on an `n`-dimensional complex manifold stores coefficients
//! of the monomials `e^I ∧ e^{J†}` where `e^1..e^n` are the `(1,0)` coframe
//! and `e^{j†}` their daggers (the conjugate `(0,1)` forms). Monomials are kept
//! in the normal form
//!
//! ```text
//! e^{i₁}∧…∧e^{i_p}∧e^{j₁†}∧…∧e^{j_r†},   i₁<…<i_p,  j₁<…<j_r
//! ```
//!
//! and addressed by a bit mask over the `2n` generators: bit `i` is `e^{i+1}`,
//! bit `n + j` is `e^{(j+1)†}`. Every wedge sign is an inversion count against
//! this order.
//!
//! The Kähler form is `ω = (i/2) Σ e^i∧e^{i†}`, so `ω' = -2iω = Σ e^i∧e^{i†}`.
//!
//! Pairings of `(0,q)` arguments are taken as `(i/2)ⁿ ∫ β†∧f∧α∧e^{ω'}`, which
//! equals the literal order `α∧β†` times `(-1)^q`; this ordering makes the
//! pointwise norm `(i/2)ⁿ ∫ α†∧α∧e^{ω'}` equal to `Σ |α_J|²` for every `q`.

use crate::geometry::CurvatureData;
use crate::{CMatrix, Error, Result, C64};
use std::ops::{Add, Mul, Sub};

/// Largest supported dimension (masks fit in a byte).
pub const MAX_DIM: usize = 4;

#[inline]
fn parity_sign(count: u32) -> f64 {
    if count % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Sign of `A ∧ B` for canonical monomials with disjoint masks.
#[inline]
pub fn wedge_sign(a: usize, b: usize) -> f64 {
    let mut inv = 0;
    let mut bb = b;
    while bb != 0 {
        let bit = bb.trailing_zeros();
        inv += (a >> (bit + 1)).count_ones();
        bb &= bb - 1;
    }
    parity_sign(inv)
}

/// Sign relating `Π_{j∈J} (e^j∧e^{j†})` to the canonical monomial `e^J∧e^{J†}`.
#[inline]
pub fn pair_sign(j_mask: usize) -> f64 {
    let r = j_mask.count_ones();
    parity_sign(r * r.saturating_sub(1) / 2)
}

/// Mixed-degree form with complex coefficients in a fixed orthonormal coframe.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedForm {
    n: usize,
    coeffs: Vec<C64>,
}

impl GradedForm {
    pub fn zero(n: usize) -> Self {
        assert!(n <= MAX_DIM, "dimension {n} exceeds {MAX_DIM}");
        GradedForm { n, coeffs: vec![C64::new(0.0, 0.0); 1 << (2 * n)] }
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut f = Self::zero(n);
        f.coeffs[0] = c;
        f
    }

    pub fn one(n: usize) -> Self {
        Self::scalar(n, C64::new(1.0, 0.0))
    }

    /// `c · e^I ∧ e^{J†}` in normal order; `i_mask`, `j_mask` over `0..n`.
    pub fn monomial(n: usize, i_mask: usize, j_mask: usize, c: C64) -> Self {
        let mut f = Self::zero(n);
        f.coeffs[Self::mask(n, i_mask, j_mask)] = c;
        f
    }

    /// `e^i` (1-based as in `e^1..e^n`).
    pub fn e(n: usize, i: usize) -> Self {
        Self::monomial(n, 1 << (i - 1), 0, C64::new(1.0, 0.0))
    }

    /// `e^{i†}` (1-based).
    pub fn e_dag(n: usize, i: usize) -> Self {
        Self::monomial(n, 0, 1 << (i - 1), C64::new(1.0, 0.0))
    }

    /// `c · Π_{j∈J} e^j∧e^{j†}`, the diagonal block basis used for symbols.
    pub fn paired(n: usize, j_mask: usize, c: C64) -> Self {
        Self::monomial(n, j_mask, j_mask, c * pair_sign(j_mask))
    }

    #[inline]
    fn mask(n: usize, i_mask: usize, j_mask: usize) -> usize {
        i_mask | (j_mask << n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    /// Coefficient of the normal-order monomial `e^I∧e^{J†}`.
    pub fn coeff(&self, i_mask: usize, j_mask: usize) -> C64 {
        self.coeffs[Self::mask(self.n, i_mask, j_mask)]
    }

    pub fn set_coeff(&mut self, i_mask: usize, j_mask: usize, c: C64) {
        let m = Self::mask(self.n, i_mask, j_mask);
        self.coeffs[m] = c;
    }

    /// Coefficient `f_{JJ}` with respect to `Π_{j∈J} e^j∧e^{j†}`.
    pub fn paired_coeff(&self, j_mask: usize) -> C64 {
        self.coeff(j_mask, j_mask) * pair_sign(j_mask)
    }

    fn split(&self, m: usize) -> (usize, usize) {
        let low = (1 << self.n) - 1;
        (m & low, m >> self.n)
    }

    pub fn top(&self) -> C64 {
        *self.coeffs.last().unwrap()
    }

    fn check_dim(&self, other: &GradedForm) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!("forms of dimension {} and {}", self.n, other.n)));
        }
        Ok(())
    }

    /// Exterior product.
    pub fn wedge(&self, other: &GradedForm) -> Result<GradedForm> {
        self.check_dim(other)?;
        let mut out = GradedForm::zero(self.n);
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == C64::new(0.0, 0.0) {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if a & b != 0 || cb == C64::new(0.0, 0.0) {
                    continue;
                }
                out.coeffs[a | b] += ca * cb * wedge_sign(a, b);
            }
        }
        Ok(out)
    }

    /// Conjugate-linear, order-reversing involution with `(e^i)† = e^{i†}`.
    pub fn dagger(&self) -> GradedForm {
        let mut out = GradedForm::zero(self.n);
        for (m, &c) in self.coeffs.iter().enumerate() {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let (i, j) = self.split(m);
            let sign = pair_sign(i) * pair_sign(j);
            out.coeffs[Self::mask(self.n, j, i)] += c.conj() * sign;
        }
        out
    }

    /// `f = f†` componentwise.
    pub fn is_dagger_real(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    /// Only `(J, J)` components are nonzero (up to `tol`).
    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.coeffs.iter().enumerate().all(|(m, c)| {
            let (i, j) = self.split(m);
            i == j || c.norm() <= tol
        })
    }

    pub fn max_abs_diff(&self, other: &GradedForm) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Berezin integral: top-degree coefficient divided by the top coefficient
    /// of the volume form.
    pub fn berezin(&self, vol: C64) -> Result<C64> {
        berezin(self, vol)
    }

    /// Re-expresses the form in a new coframe `η` given `ε^a = Σ_b T_{ab} η^b`
    /// (and hence `ε^{a†} = Σ_b conj(T_{ab}) η^{b†}`).
    pub fn change_frame(&self, t: &CMatrix) -> GradedForm {
        let n = self.n;
        let images: Vec<GradedForm> = (0..2 * n)
            .map(|g| {
                let mut img = GradedForm::zero(n);
                for b in 0..n {
                    if g < n {
                        img.coeffs[1 << b] = t[(g, b)];
                    } else {
                        img.coeffs[1 << (n + b)] = t[(g - n, b)].conj();
                    }
                }
                img
            })
            .collect();
        let mut out = GradedForm::zero(n);
        for (m, &c) in self.coeffs.iter().enumerate() {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let mut prod = GradedForm::scalar(n, c);
            for (g, img) in images.iter().enumerate() {
                if m & (1 << g) != 0 {
                    prod = prod.wedge(img).expect("same dimension");
                }
            }
            out = &out + &prod;
        }
        out
    }
}

impl Add for &GradedForm {
    type Output = GradedForm;
    fn add(self, rhs: &GradedForm) -> GradedForm {
        assert_eq!(self.n, rhs.n);
        GradedForm { n: self.n, coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect() }
    }
}

impl Sub for &GradedForm {
    type Output = GradedForm;
    fn sub(self, rhs: &GradedForm) -> GradedForm {
        assert_eq!(self.n, rhs.n);
        GradedForm { n: self.n, coeffs: self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect() }
    }
}

impl Mul<C64> for &GradedForm {
    type Output = GradedForm;
    fn mul(self, rhs: C64) -> GradedForm {
        GradedForm { n: self.n, coeffs: self.coeffs.iter().map(|a| a * rhs).collect() }
    }
}

/// `f_top / vol`.
pub fn berezin(f: &GradedForm, vol: C64) -> Result<C64> {
    if vol == C64::new(0.0, 0.0) {
        return Err(Error::ZeroVolume);
    }
    Ok(f.top() / vol)
}

const HALF_I: C64 = C64::new(0.0, 0.5);

/// `(i/2)ⁿ`.
pub fn half_i_pow(n: usize) -> C64 {
    HALF_I.powi(n as i32)
}

/// `ω = (i/2) Σ e^i∧e^{i†}`.
pub fn kahler_form(n: usize) -> GradedForm {
    &omega_prime(n) * HALF_I
}

/// `ω' = -2iω = Σ e^i∧e^{i†}`.
pub fn omega_prime(n: usize) -> GradedForm {
    let mut f = GradedForm::zero(n);
    for i in 0..n {
        f.set_coeff(1 << i, 1 << i, C64::new(1.0, 0.0));
    }
    f
}

fn exp_of(x: &GradedForm) -> GradedForm {
    let n = x.n;
    let mut total = GradedForm::one(n);
    let mut power = GradedForm::one(n);
    for p in 1..=n {
        power = &power.wedge(x).expect("same dimension") * C64::new(1.0 / p as f64, 0.0);
        total = &total + &power;
    }
    total
}

/// `e^{ω'} = Σ_p ω'^p / p!`, truncated at degree `2n`.
pub fn exp_omega_prime(n: usize) -> GradedForm {
    exp_of(&omega_prime(n))
}

/// `ω_n = ωⁿ / n!`.
pub fn volume_form(n: usize) -> GradedForm {
    let w = kahler_form(n);
    let mut p = GradedForm::one(n);
    for i in 1..=n {
        p = &p.wedge(&w).expect("same dimension") * C64::new(1.0 / i as f64, 0.0);
    }
    p
}

/// Top coefficient of `ω_n`.
pub fn volume_coefficient(n: usize) -> C64 {
    volume_form(n).top()
}

/// Pointwise `(i/2)ⁿ ∫ β†∧f∧α∧e^{ω'}` over the fibre.
pub fn pairing(f: &GradedForm, alpha: &GradedForm, beta: &GradedForm) -> Result<C64> {
    let n = f.n;
    let integrand = beta.dagger().wedge(f)?.wedge(alpha)?.wedge(&exp_omega_prime(n))?;
    Ok(half_i_pow(n) * berezin(&integrand, volume_coefficient(n))?)
}

/// Pointwise squared norm `(i/2)ⁿ ∫ α†∧α∧e^{ω'}`.
pub fn norm2(alpha: &GradedForm) -> Result<f64> {
    Ok(pairing(&GradedForm::one(alpha.n), alpha, alpha)?.re)
}

/// The literal `(i/2)ⁿ ∫ α∧α†∧e^{ω'}`, which carries an extra `(-1)^q`.
pub fn norm2_literal_order(alpha: &GradedForm) -> Result<C64> {
    let n = alpha.n;
    let integrand = alpha.wedge(&alpha.dagger())?.wedge(&exp_omega_prime(n))?;
    Ok(half_i_pow(n) * berezin(&integrand, volume_coefficient(n))?)
}

/// Direction form `χ^{q,q}` at a point, in the chart coframe.
#[derive(Clone, Debug)]
pub struct DirectionForm {
    pub form: GradedForm,
    /// Set when the curvature is degenerate (the form is then zero).
    pub degenerate: bool,
}

/// `χ^{q,q} = e^{I₀}∧e^{I₀†}` with `I₀` spanning the negative eigendirections.
/// Zero off `X(q)`; `q = 0` gives the constant `1`.
pub fn direction_form(curv: &CurvatureData, q: usize) -> DirectionForm {
    let n = curv.lambdas.len();
    let Some(cq) = curv.q() else {
        return DirectionForm { form: GradedForm::zero(n), degenerate: true };
    };
    if cq != q {
        return DirectionForm { form: GradedForm::zero(n), degenerate: false };
    }
    let i0 = (1usize << q) - 1;
    let in_eigenframe = GradedForm::paired(n, i0, C64::new(1.0, 0.0));
    // eigen coframe e'^a = Σ_i conj(V_ia) e^i
    let form = in_eigenframe.change_frame(&curv.v_frame.adjoint());
    DirectionForm { form, degenerate: false }
}

/// `f_χ(x)`: the sum of the diagonal components `f_{JJ}` with `J ∩ I₀ = ∅`,
/// after rotating `f` into the curvature eigenframe.
pub fn symbol_reduce(f: &GradedForm, curv: &CurvatureData) -> Result<f64> {
    let q = curv.q().ok_or(Error::DegenerateCurvature)?;
    let n = f.n;
    let rotated = f.change_frame(&curv.v_frame);
    let i0 = (1usize << q) - 1;
    let mut s = C64::new(0.0, 0.0);
    for j in 0..(1usize << n) {
        if j & i0 == 0 {
            s += rotated.paired_coeff(j);
        }
    }
    Ok(s.re)
}

/// `(i/2)ⁿ ∫ χ^{q,q}∧f∧e^{ω'}` computed in the chart frame.
pub fn symbol_reduce_berezin(f: &GradedForm, curv: &CurvatureData) -> Result<f64> {
    let q = curv.q().ok_or(Error::DegenerateCurvature)?;
    let n = f.n;
    let chi = direction_form(curv, q).form;
    let integrand = chi.wedge(f)?.wedge(&exp_omega_prime(n))?;
    Ok((half_i_pow(n) * berezin(&integrand, volume_coefficient(n))?).re)
}

/// Form symbol field on a grid: diagonal blocks `f_{JJ}(x)` with respect to
/// `Π_{j∈J} e^j∧e^{j†}`, each real-valued (hence dagger-real).
#[derive(Clone, Debug)]
pub struct SuperSymbol {
    pub n: usize,
    /// Indexed by `J` mask; `None` is an identically zero block.
    pub blocks: Vec<Option<Vec<f64>>>,
}

impl SuperSymbol {
    pub fn zero(n: usize) -> Self {
        SuperSymbol { n, blocks: vec![None; 1 << n] }
    }

    pub fn from_scalar(n: usize, f: Vec<f64>) -> Self {
        let mut s = Self::zero(n);
        s.blocks[0] = Some(f);
        s
    }

    pub fn with_block(mut self, j_mask: usize, values: Vec<f64>) -> Self {
        self.blocks[j_mask] = Some(values);
        self
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().flatten().map(Vec::len).next().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, j_mask: usize, node: usize) -> f64 {
        self.blocks[j_mask].as_ref().map_or(0.0, |b| b[node])
    }

    /// Symbol value at a node as a form.
    pub fn at(&self, node: usize) -> GradedForm {
        let mut f = GradedForm::zero(self.n);
        for (j, b) in self.blocks.iter().enumerate() {
            if let Some(b) = b {
                f = &f + &GradedForm::paired(self.n, j, C64::new(b[node], 0.0));
            }
        }
        f
    }
}
