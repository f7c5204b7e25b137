//! Model geometries: `CP¹` with Fubini–Study, perturbed and negative line
//! bundles, and the product `CP¹ × CP¹`.
//!
//! Every geometry is a product of one or two `CP¹` factors. Each factor has
//! the two standard charts `z` (north) and `w = 1/z` (south), the Fubini–Study
//! form `ω = (i/2)(1+|z|²)^{-2} dz∧dz̄` (area `π`) and a radial fiber weight
//! `φ = d·log(1+|z|²) + t·η(|z|²)`.

pub mod grid;
pub mod quadrature;

pub use grid::{build_grid, default_grid, FactorGrid, QuadratureGrid, Resolution};

use crate::{linalg, CMatrix, Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Threshold on `min |λ_i|` below which a point is `DEGENERATE`.
pub const EPS_CURV: f64 = 1e-9;

/// Center `u₀` of the perturbation bump in `u = |z|²`.
pub const BUMP_CENTER: f64 = 1.0;
/// Half-width `ρ` of the perturbation bump.
pub const BUMP_RADIUS: f64 = 0.5;

/// The two affine charts of `CP¹`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Chart {
    /// Coordinate `z`, origin at the north pole.
    North,
    /// Coordinate `w = 1/z`, origin at the south pole.
    South,
}

/// A point of one `CP¹` factor in chart coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorPoint {
    pub chart: Chart,
    pub coord: C64,
}

impl FactorPoint {
    pub fn north(z: C64) -> Self {
        FactorPoint { chart: Chart::North, coord: z }
    }

    pub fn south(w: C64) -> Self {
        FactorPoint { chart: Chart::South, coord: w }
    }

    /// `|coord|²`.
    pub fn v(&self) -> f64 {
        self.coord.norm_sqr()
    }

    /// `u = |z|²` in the north chart; `∞` at the south pole.
    pub fn u(&self) -> f64 {
        match self.chart {
            Chart::North => self.v(),
            Chart::South => {
                let v = self.v();
                if v == 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / v
                }
            }
        }
    }

    /// The same point in the other chart, if it lies there.
    pub fn in_chart(&self, chart: Chart) -> Option<FactorPoint> {
        if chart == self.chart {
            return Some(*self);
        }
        if self.coord.norm_sqr() == 0.0 {
            return None;
        }
        Some(FactorPoint { chart, coord: self.coord.inv() })
    }

    /// Representation with `|coord| ≤ 1`.
    pub fn canonical(&self) -> FactorPoint {
        if self.coord.norm_sqr() > 1.0 {
            FactorPoint { chart: other(self.chart), coord: self.coord.inv() }
        } else {
            *self
        }
    }

    /// Image on the unit Riemann sphere, north chart origin ↦ `(0, 0, 1)`.
    pub fn to_sphere(&self) -> [f64; 3] {
        let v = self.v();
        let d = 1.0 + v;
        match self.chart {
            Chart::North => [2.0 * self.coord.re / d, 2.0 * self.coord.im / d, (1.0 - v) / d],
            // z = 1/w so 2z/(1+|z|²) = 2 w̄/(1+|w|²)
            Chart::South => [2.0 * self.coord.re / d, -2.0 * self.coord.im / d, (v - 1.0) / d],
        }
    }

    pub fn from_sphere(x: [f64; 3]) -> FactorPoint {
        if x[2] >= 0.0 {
            FactorPoint::north(C64::new(x[0], x[1]) / (1.0 + x[2]))
        } else {
            FactorPoint::south(C64::new(x[0], -x[1]) / (1.0 - x[2]))
        }
    }

    /// Great-circle distance on the unit sphere.
    pub fn distance(&self, other: &FactorPoint) -> f64 {
        let a = self.to_sphere();
        let b = other.to_sphere();
        let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
        let cx = a[1] * b[2] - a[2] * b[1];
        let cy = a[2] * b[0] - a[0] * b[2];
        let cz = a[0] * b[1] - a[1] * b[0];
        (cx * cx + cy * cy + cz * cz).sqrt().atan2(dot)
    }
}

fn other(c: Chart) -> Chart {
    match c {
        Chart::North => Chart::South,
        Chart::South => Chart::North,
    }
}

/// A point of the model manifold: one [`FactorPoint`] per factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub n: usize,
    pub factors: [FactorPoint; 2],
}

impl Point {
    pub fn curve(p: FactorPoint) -> Self {
        Point { n: 1, factors: [p, p] }
    }

    pub fn product(p: FactorPoint, q: FactorPoint) -> Self {
        Point { n: 2, factors: [p, q] }
    }

    pub fn factor(&self, i: usize) -> &FactorPoint {
        &self.factors[i]
    }

    /// Product distance `sqrt(Σ d_i²)` of the unit-sphere factors.
    pub fn distance(&self, other: &Point) -> f64 {
        (0..self.n).map(|i| self.factors[i].distance(&other.factors[i]).powi(2)).sum::<f64>().sqrt()
    }
}

/// Compactly supported bump `η(u) = exp(-1/(1-s²))`, `s = (u-u₀)/ρ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: f64,
    pub radius: f64,
}

impl Default for Bump {
    fn default() -> Self {
        Bump { center: BUMP_CENTER, radius: BUMP_RADIUS }
    }
}

impl Bump {
    fn s(&self, u: f64) -> Option<f64> {
        if !u.is_finite() {
            return None;
        }
        let s = (u - self.center) / self.radius;
        (s.abs() < 1.0).then_some(s)
    }

    pub fn value(&self, u: f64) -> f64 {
        self.s(u).map_or(0.0, |s| (-1.0 / (1.0 - s * s)).exp())
    }

    /// `(η, η', η'')` with respect to `u`.
    pub fn derivatives(&self, u: f64) -> (f64, f64, f64) {
        let Some(s) = self.s(u) else { return (0.0, 0.0, 0.0) };
        let one = 1.0 - s * s;
        let e = (-1.0 / one).exp();
        let h1 = -2.0 * s / (one * one);
        let h2 = -2.0 / (one * one) - 8.0 * s * s / (one * one * one);
        let rho = self.radius;
        (e, e * h1 / rho, e * (h1 * h1 + h2) / (rho * rho))
    }

    /// Curvature eigenvalue of the weight `η(|z|²)` relative to Fubini–Study:
    /// `(η' + u η'')(1+u)²`.
    pub fn curvature(&self, u: f64) -> f64 {
        let (_, d1, d2) = self.derivatives(u);
        if d1 == 0.0 && d2 == 0.0 {
            return 0.0;
        }
        (d1 + u * d2) * (1.0 + u) * (1.0 + u)
    }

    /// Chart-0 values `u` where the support ends.
    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    /// Most negative value of [`Bump::curvature`].
    pub fn min_curvature(&self) -> f64 {
        self.critical_point().1
    }

    /// `(u*, g(u*))` at the minimum of [`Bump::curvature`].
    pub fn critical_point(&self) -> (f64, f64) {
        let (a, b) = self.support();
        let n = 4000;
        let mut best = (0.0, f64::INFINITY);
        for i in 1..n {
            let u = a + (b - a) * i as f64 / n as f64;
            let c = self.curvature(u);
            if c < best.1 {
                best = (u, c);
            }
        }
        // golden-section refinement around the scan minimum
        let h = (b - a) / n as f64;
        let (mut lo, mut hi) = (best.0 - h, best.0 + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if self.curvature(m1) < self.curvature(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let u = (lo + hi) / 2.0;
        let c = self.curvature(u);
        if c <= best.1 {
            (u, c)
        } else {
            best
        }
    }
}

/// Largest perturbation strength keeping every curvature eigenvalue of
/// `PERTURBED_CP1(d, t)` nonnegative.
///
/// The eigenvalue is `d + t·g(u)` with `g` the bump curvature, affine in `t`,
/// so the bisection threshold is `d / (-min g)`.
pub fn t_max(degree: u32) -> f64 {
    degree as f64 / (-Bump::default().min_curvature())
}

/// One `CP¹` factor of a model geometry with weight
/// `φ = degree·log(1+|z|²) + t·η(|z|²)` in the north chart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFactor {
    pub degree: i32,
    pub perturbation: f64,
    pub bump: Bump,
}

impl LineFactor {
    pub fn plain(degree: i32) -> Self {
        LineFactor { degree, perturbation: 0.0, bump: Bump::default() }
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbation != 0.0
    }

    /// Weight `φ` of `L` (not `L^k`) in the chart of `p`.
    pub fn weight(&self, p: &FactorPoint) -> f64 {
        let base = self.degree as f64 * p.v().ln_1p();
        if self.is_perturbed() {
            base + self.perturbation * self.bump.value(p.u())
        } else {
            base
        }
    }

    /// Curvature eigenvalue of `(i/2)∂∂̄φ` relative to `ω` (chart independent).
    pub fn curvature(&self, p: &FactorPoint) -> f64 {
        let base = self.degree as f64;
        if self.is_perturbed() {
            base + self.perturbation * self.bump.curvature(p.u())
        } else {
            base
        }
    }

    /// `log|t_{NS}|²` for the transition function `t_{NS}(z) = z^degree`.
    pub fn transition_log(&self, z: C64) -> f64 {
        self.degree as f64 * z.norm_sqr().ln()
    }

    /// Fubini–Study metric coefficient `g = (1+|coord|²)^{-2}`.
    pub fn metric(p: &FactorPoint) -> f64 {
        (1.0 + p.v()).powi(-2)
    }
}

/// Catalog identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeometryKind {
    FsCp1 { d: u32 },
    PerturbedCp1 { d: u32, t: f64 },
    NegCp1 { m: u32 },
    ProductCp1xCp1 { a: u32, b: u32 },
}

impl fmt::Display for GeometryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryKind::FsCp1 { d } => write!(f, "FS_CP1({d})"),
            GeometryKind::PerturbedCp1 { d, t } => write!(f, "PERTURBED_CP1({d},{t})"),
            GeometryKind::NegCp1 { m } => write!(f, "NEG_CP1({m})"),
            GeometryKind::ProductCp1xCp1 { a, b } => write!(f, "PRODUCT_CP1xCP1({a},{b})"),
        }
    }
}

impl FromStr for GeometryKind {
    type Err = Error;

    /// Parses `NAME(p1,p2,...)`; for `PERTURBED_CP1` the second parameter may
    /// be `tmax`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            _ => (s, ""),
        };
        let args: Vec<&str> = args.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
        let int = |i: usize| -> Result<u32> {
            args.get(i)
                .ok_or_else(|| Error::InvalidParameters(format!("{name}: missing parameter {}", i + 1)))?
                .parse::<u32>()
                .map_err(|e| Error::InvalidParameters(format!("{name}: {e}")))
        };
        let kind = match name {
            "FS_CP1" => GeometryKind::FsCp1 { d: int(0)? },
            "PERTURBED_CP1" => {
                let d = int(0)?;
                let t = match args.get(1) {
                    Some(&"tmax") | Some(&"t_max") => t_max(d),
                    Some(t) => t.parse::<f64>().map_err(|e| Error::InvalidParameters(format!("{name}: {e}")))?,
                    None => return Err(Error::InvalidParameters(format!("{name}: missing t"))),
                };
                GeometryKind::PerturbedCp1 { d, t }
            }
            "NEG_CP1" => GeometryKind::NegCp1 { m: int(0)? },
            "PRODUCT_CP1xCP1" => GeometryKind::ProductCp1xCp1 { a: int(0)?, b: int(1)? },
            _ => return Err(Error::UnknownGeometry(s.to_string())),
        };
        Ok(kind)
    }
}

/// A catalog geometry: `n` factors with their line-bundle weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub kind: GeometryKind,
    pub n: usize,
    pub factors: Vec<LineFactor>,
}

/// Number of random overlap points used by the construction-time chart check.
const CHART_CHECK_POINTS: usize = 64;

/// Builds a catalog geometry and verifies the chart-transition invariant.
pub fn build_geometry(kind: GeometryKind) -> Result<ModelGeometry> {
    let factors = match kind {
        GeometryKind::FsCp1 { d } => vec![LineFactor::plain(d as i32)],
        GeometryKind::PerturbedCp1 { d, t } => {
            if d == 0 {
                return Err(Error::InvalidParameters("PERTURBED_CP1 needs d ≥ 1".into()));
            }
            let tm = t_max(d);
            if !(t.is_finite()) || t < 0.0 {
                return Err(Error::InvalidParameters(format!("perturbation t = {t} must be ≥ 0")));
            }
            if t > tm * (1.0 + 1e-12) {
                return Err(Error::PerturbationTooLarge { t, t_max: tm, degree: d });
            }
            vec![LineFactor { degree: d as i32, perturbation: t, bump: Bump::default() }]
        }
        GeometryKind::NegCp1 { m } => {
            if m == 0 {
                return Err(Error::InvalidParameters("NEG_CP1 needs m ≥ 1".into()));
            }
            vec![LineFactor::plain(-(m as i32))]
        }
        GeometryKind::ProductCp1xCp1 { a, b } => {
            if a == 0 || b == 0 {
                return Err(Error::InvalidParameters("PRODUCT_CP1xCP1 needs a, b ≥ 1".into()));
            }
            vec![LineFactor::plain(a as i32), LineFactor::plain(-(b as i32))]
        }
    };
    let geom = ModelGeometry { kind, n: factors.len(), factors };
    let defect = geom.chart_defect(CHART_CHECK_POINTS, 1, 0x5eed);
    if defect > 1e-10 {
        return Err(Error::InvalidParameters(format!("chart transition defect {defect:e}")));
    }
    Ok(geom)
}

/// Parses a catalog string such as `"PRODUCT_CP1xCP1(1,1)"` and builds it.
pub fn build_geometry_named(name: &str) -> Result<ModelGeometry> {
    build_geometry(name.parse()?)
}

/// Stratum of a point: `X(q)` or the degenerate set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stratum {
    Index(usize),
    Degenerate,
}

/// Curvature eigen-data at a point.
#[derive(Clone, Debug)]
pub struct CurvatureData {
    pub point: Point,
    /// Eigenvalues of `(i/2)∂∂̄φ` relative to `ω`, ascending.
    pub lambdas: Vec<f64>,
    /// `∏ |λ_i|`.
    pub det_abs: f64,
    pub q_index: Stratum,
    /// Columns are eigenvectors in the chart orthonormal frame, ordered like
    /// `lambdas`; the first `q` span `V(q)`.
    pub v_frame: CMatrix,
}

impl CurvatureData {
    pub fn q(&self) -> Option<usize> {
        match self.q_index {
            Stratum::Index(q) => Some(q),
            Stratum::Degenerate => None,
        }
    }
}

impl ModelGeometry {
    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    /// Total curvature degree of each factor.
    pub fn degrees(&self) -> Vec<i32> {
        self.factors.iter().map(|f| f.degree).collect()
    }

    /// Weight of `L` at a point (sum over factors).
    pub fn weight(&self, p: &Point) -> f64 {
        self.factors.iter().zip(&p.factors).map(|(f, x)| f.weight(x)).sum()
    }

    /// Eigenvalues of the curvature in the chart frame, one per factor.
    pub fn factor_curvatures(&self, p: &Point) -> Vec<f64> {
        self.factors.iter().zip(&p.factors).map(|(f, x)| f.curvature(x)).collect()
    }

    /// Largest defect of `|s|²e^{-kφ}` between the two charts over random
    /// overlap points `1/2 < |z| < 2`, using the frames `z^j ↔ w^{kd-j}`.
    pub fn chart_defect(&self, points: usize, k: u32, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            for f in &self.factors {
                let r: f64 = rng.gen_range(0.5..2.0);
                let th: f64 = rng.gen_range(0.0..2.0 * PI);
                let z = C64::from_polar(r, th);
                let pn = FactorPoint::north(z);
                let ps = pn.in_chart(Chart::South).unwrap();
                let kk = k as f64;
                let total = k as i64 * f.degree as i64;
                // chart weights must differ by log|t_NS|²
                let lhs = kk * (f.weight(&pn) - f.weight(&ps));
                let rhs = kk * f.transition_log(z);
                worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
                if total >= 0 {
                    let j = rng.gen_range(0..=total);
                    let a = (j as f64) * pn.v().ln() - kk * f.weight(&pn);
                    let b = ((total - j) as f64) * ps.v().ln() - kk * f.weight(&ps);
                    worst = worst.max(((a - b).exp() - 1.0).abs());
                }
            }
        }
        worst
    }
}

/// Curvature eigen-data at `point`.
pub fn curvature_at(geom: &ModelGeometry, point: &Point) -> Result<CurvatureData> {
    if point.n != geom.n {
        return Err(Error::DimensionMismatch(format!("point has n = {}, geometry n = {}", point.n, geom.n)));
    }
    for f in &point.factors[..point.n] {
        if !f.coord.re.is_finite() || !f.coord.im.is_finite() {
            return Err(Error::OutsideCharts);
        }
    }
    let diag = geom.factor_curvatures(point);
    let (lambdas, v_frame) = if geom.n == 1 {
        (diag.clone(), CMatrix::identity(1, 1))
    } else {
        let mut h = CMatrix::zeros(geom.n, geom.n);
        for (i, &l) in diag.iter().enumerate() {
            h[(i, i)] = C64::new(l, 0.0);
        }
        let e = linalg::jacobi_eigh(&h, true)?;
        (e.values, e.vectors)
    };
    let det_abs = lambdas.iter().map(|l| l.abs()).product();
    let min_abs = lambdas.iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
    let q_index = if min_abs < EPS_CURV {
        Stratum::Degenerate
    } else {
        Stratum::Index(lambdas.iter().filter(|&&l| l < 0.0).count())
    };
    Ok(CurvatureData { point: *point, lambdas, det_abs, q_index, v_frame })
}

/// Node counts per stratum and the curvature masses `∫_{X(q)} |det| ω_n / πⁿ`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Classification {
    pub counts: BTreeMap<Stratum, usize>,
    pub masses: BTreeMap<Stratum, f64>,
}

impl Classification {
    pub fn count(&self, s: Stratum) -> usize {
        self.counts.get(&s).copied().unwrap_or(0)
    }

    pub fn mass(&self, s: Stratum) -> f64 {
        self.masses.get(&s).copied().unwrap_or(0.0)
    }
}

/// Per-node stratum and `|det|` on a grid, computed factor-wise.
pub struct NodeCurvature {
    pub strata: Vec<Stratum>,
    pub det_abs: Vec<f64>,
}

/// Curvature stratum and `|det|` for every node of `grid`.
pub fn node_curvature(geom: &ModelGeometry, grid: &QuadratureGrid) -> NodeCurvature {
    // λ per factor node; the chart frame already diagonalises the curvature
    let per_factor: Vec<Vec<f64>> = geom
        .factors
        .iter()
        .zip(&grid.factors)
        .map(|(f, g)| g.nodes.iter().map(|p| f.curvature(p)).collect())
        .collect();
    let len = grid.len();
    let mut strata = Vec::with_capacity(len);
    let mut det_abs = Vec::with_capacity(len);
    for i in 0..len {
        let idx = grid.factor_indices(i);
        let mut det = 1.0;
        let mut neg = 0;
        let mut min_abs = f64::INFINITY;
        for (fi, &j) in idx[..geom.n].iter().enumerate() {
            let l = per_factor[fi][j];
            det *= l.abs();
            min_abs = min_abs.min(l.abs());
            if l < 0.0 {
                neg += 1;
            }
        }
        strata.push(if min_abs < EPS_CURV { Stratum::Degenerate } else { Stratum::Index(neg) });
        det_abs.push(det);
    }
    NodeCurvature { strata, det_abs }
}

/// Stratum histogram and curvature masses over the grid.
pub fn classify(geom: &ModelGeometry, grid: &QuadratureGrid) -> Classification {
    let nc = node_curvature(geom, grid);
    let mut out = Classification::default();
    let norm = PI.powi(geom.n as i32);
    for i in 0..grid.len() {
        let s = nc.strata[i];
        *out.counts.entry(s).or_insert(0) += 1;
        let m = if s == Stratum::Degenerate { 0.0 } else { grid.weight(i) * nc.det_abs[i] / norm };
        *out.masses.entry(s).or_insert(0.0) += m;
    }
    out
}

/// Signed curvature degree `(2π)^{-1}∫ i∂∂̄φ` of each factor by quadrature.
pub fn factor_degrees(geom: &ModelGeometry, grid: &QuadratureGrid) -> Vec<f64> {
    geom.factors
        .iter()
        .zip(&grid.factors)
        .map(|(f, g)| g.nodes.iter().zip(&g.weights).map(|(p, w)| w * f.curvature(p)).sum::<f64>() / PI)
        .collect()
}
