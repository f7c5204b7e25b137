//! Point families on `CP¹`, sampling matrices and frame bounds.
//!
//! Points live on the unit sphere through [`FactorPoint::to_sphere`]; the
//! separation scale of a family is `sep · k^{-1/2}`.

use crate::asymptotics::{fit_rate, limit_density};
use crate::geometry::{curvature_at, FactorPoint, ModelGeometry, Point, Stratum, GeometryKind};
use crate::spaces::{build_space_on, HarmonicSpace};
use crate::{linalg, CMatrix, Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Geodesic ball on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cap {
    /// Polar angle of the center (0 at the north chart origin).
    pub theta: f64,
    pub phi: f64,
    pub radius: f64,
}

impl Cap {
    /// `|z| ≤ 1` in the north chart.
    pub fn hemisphere() -> Self {
        Cap { theta: 0.0, phi: 0.0, radius: PI / 2.0 }
    }

    pub fn center(&self) -> [f64; 3] {
        let s = self.theta.sin();
        [s * self.phi.cos(), s * self.phi.sin(), self.theta.cos()]
    }

    pub fn contains(&self, p: &FactorPoint) -> bool {
        p.distance(&FactorPoint::from_sphere(self.center())) <= self.radius
    }

    /// Indicator sampled on the grid of `space`.
    pub fn indicator(&self, space: &HarmonicSpace) -> Vec<f64> {
        (0..space.grid.len())
            .map(|i| if self.contains(space.grid.node(i).factor(0)) { 1.0 } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// Spherical Fibonacci points, `⌈c·k⌉` of them.
    FibonacciUniform { c: f64 },
    /// As above, but every point is placed outside `cap`.
    CapDeficient { c: f64, cap: Cap },
    /// The quadrature nodes with their weights.
    QuadratureNodes,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFamily {
    pub kind: FamilyKind,
    /// Separation scale: generated sets keep pairwise distance `≥ sep·k^{-1/2}`.
    pub sep: f64,
}

impl PointFamily {
    pub fn new(kind: FamilyKind) -> Self {
        PointFamily { kind, sep: 0.5 }
    }

    pub fn label(&self) -> String {
        match self.kind {
            FamilyKind::FibonacciUniform { c } => format!("FIBONACCI_UNIFORM({c})"),
            FamilyKind::CapDeficient { c, cap } => {
                format!("CAP_DEFICIENT({c}, cap({}, {}, {}))", cap.theta, cap.phi, cap.radius)
            }
            FamilyKind::QuadratureNodes => "QUADRATURE_NODES".into(),
        }
    }

    /// Target count `⌈c·k⌉` for the point families.
    pub fn target(&self, k: u32) -> Option<usize> {
        match self.kind {
            FamilyKind::FibonacciUniform { c } | FamilyKind::CapDeficient { c, .. } => {
                // guard against c·k landing a hair above an integer
                Some((c * k as f64 - 1e-9).ceil().max(0.0) as usize)
            }
            FamilyKind::QuadratureNodes => None,
        }
    }
}

/// A sampling set: points with weights entering `Σ w_x |α(x)|²`.
#[derive(Clone, Debug)]
pub struct SamplingSet {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl SamplingSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Uniform weight `k^{-n}` on every point.
    pub fn unweighted(points: Vec<Point>, k: u32) -> Self {
        let n = points.first().map_or(1, |p| p.n);
        let w = (k as f64).powi(-(n as i32));
        let weights = vec![w; points.len()];
        SamplingSet { points, weights }
    }

    pub fn push(&mut self, p: Point, w: f64) {
        self.points.push(p);
        self.weights.push(w);
    }
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

/// `count` Fibonacci points with heights uniform on `[lo, hi]` around the
/// pole, rotated so the pole goes to `pole`.
fn fibonacci_band(count: usize, lo: f64, hi: f64, pole: [f64; 3]) -> Vec<FactorPoint> {
    let (e1, e2) = frame(pole);
    (0..count)
        .map(|i| {
            let h = hi - (hi - lo) * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - h * h).max(0.0).sqrt();
            let a = GOLDEN_ANGLE * i as f64;
            let (x, y) = (r * a.cos(), r * a.sin());
            let v = [0, 1, 2].map(|c| x * e1[c] + y * e2[c] + h * pole[c]);
            FactorPoint::from_sphere(v)
        })
        .collect()
}

/// Two unit vectors completing `e3` to a right-handed orthonormal frame.
fn frame(e3: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    if e3[2] > 1.0 - 1e-15 {
        return ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
    }
    let a = if e3[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let cross = |u: [f64; 3], v: [f64; 3]| [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let mut e1 = cross(a, e3);
    let n = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1.iter_mut().for_each(|c| *c /= n);
    (e1, cross(e3, e1))
}

/// `D_k` for `family` on the curve `space` is built for.
pub fn generate(family: &PointFamily, space: &HarmonicSpace) -> Result<SamplingSet> {
    if space.n() != 1 {
        return Err(Error::Unsupported("point families are defined on CP¹".into()));
    }
    let k = space.k;
    let pts = match family.kind {
        FamilyKind::QuadratureNodes => {
            let g = &space.grid;
            return Ok(SamplingSet { points: (0..g.len()).map(|i| g.node(i)).collect(), weights: g.weights() });
        }
        FamilyKind::FibonacciUniform { .. } => {
            let n = family.target(k).unwrap_or(0);
            if n < 1 {
                return Err(Error::EmptyPointSet);
            }
            fibonacci_band(n, -1.0, 1.0, [0.0, 0.0, 1.0])
        }
        FamilyKind::CapDeficient { cap, .. } => {
            let n = family.target(k).unwrap_or(0);
            if n < 1 {
                return Err(Error::EmptyPointSet);
            }
            // heights below the cap, measured from its center, are uniform in area
            let top = cap.radius.cos();
            let mut c = cap.center();
            for x in c.iter_mut() {
                *x = -*x;
            }
            fibonacci_band(n, -top, 1.0, c)
                .into_iter()
                .map(|p| nudge_out(p, &cap))
                .collect()
        }
    };
    Ok(SamplingSet::unweighted(pts.into_iter().map(Point::curve).collect(), k))
}

// Points produced exactly on the cap boundary are pushed just outside.
fn nudge_out(p: FactorPoint, cap: &Cap) -> FactorPoint {
    if !cap.contains(&p) {
        return p;
    }
    let c = cap.center();
    let x = p.to_sphere();
    let y = [0, 1, 2].map(|i| x[i] - 1e-9 * c[i]);
    let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    FactorPoint::from_sphere(y.map(|v| v / n))
}

/// Smallest pairwise distance.
pub fn min_separation(set: &SamplingSet) -> f64 {
    let mut m = f64::INFINITY;
    for (i, a) in set.points.iter().enumerate() {
        for b in &set.points[i + 1..] {
            m = m.min(a.distance(b));
        }
    }
    m
}

pub fn is_separated(set: &SamplingSet, sep: f64, k: u32) -> bool {
    min_separation(set) >= sep / (k as f64).sqrt()
}

/// `S_ij = Σ_x w_x ψ̂_i(x) conj(ψ̂_j(x))` from basis values at the points.
pub fn sampling_matrix_from(values: &[Vec<C64>], weights: &[f64], dim: usize) -> CMatrix {
    let mut s = CMatrix::zeros(dim, dim);
    for (v, &w) in values.iter().zip(weights) {
        for i in 0..dim {
            let a = v[i] * w;
            for j in 0..dim {
                s[(i, j)] += a * v[j].conj();
            }
        }
    }
    linalg::symmetrize(&s)
}

pub fn sampling_matrix(space: &HarmonicSpace, set: &SamplingSet) -> CMatrix {
    let values: Vec<Vec<C64>> = set.points.iter().map(|p| space.onb_at(p)).collect();
    sampling_matrix_from(&values, &set.weights, space.dim)
}

/// Rank-deficiency threshold on `λ_min`.
pub const RANK_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `max(λ_max, 1/λ_min)`, infinite when `λ_min ≤ 1e-12`.
    pub a: f64,
}

pub fn frame_bounds_of(s: &CMatrix) -> Result<FrameBounds> {
    let e = linalg::jacobi_eigh(s, false)?;
    let lambda_min = e.values.first().copied().unwrap_or(0.0);
    let lambda_max = e.values.last().copied().unwrap_or(0.0);
    let a = if lambda_min <= RANK_FLOOR { f64::INFINITY } else { lambda_max.max(1.0 / lambda_min) };
    Ok(FrameBounds { lambda_min, lambda_max, a })
}

pub fn frame_bounds(space: &HarmonicSpace, set: &SamplingSet) -> Result<FrameBounds> {
    frame_bounds_of(&sampling_matrix(space, set))
}

/// Whether a point lies in `X(0)`.
fn in_x0(geom: &ModelGeometry, p: &Point) -> Result<bool> {
    Ok(curvature_at(geom, p)?.q_index == Stratum::Index(0))
}

/// Density of a set in one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub k: u32,
    pub region: Cap,
    pub count: usize,
    /// `#(D_k ∩ Ω ∩ X(0)) / k`.
    pub density: f64,
    /// Curvature mass of `Ω ∩ X(0)`.
    pub mass: f64,
    pub margin: f64,
    /// `Ω` meets nodes outside `X(0)` and was clipped.
    pub clipped: bool,
}

/// `#(D_k ∩ Ω)/k` against the curvature mass of `Ω` for each region.
pub fn density_report(space: &HarmonicSpace, set: &SamplingSet, regions: &[Cap]) -> Result<Vec<DensityRow>> {
    let geom = &space.geom;
    let grid = &space.grid;
    let limit = limit_density(geom, grid, 0);
    let strata = crate::geometry::node_curvature(geom, grid).strata;
    let inside: Vec<bool> = set.points.iter().map(|p| in_x0(geom, p)).collect::<Result<_>>()?;
    regions
        .iter()
        .map(|cap| {
            let ind = cap.indicator(space);
            let mass = grid.integrate(|i| ind[i] * limit[i]);
            let clipped = (0..grid.len()).any(|i| ind[i] > 0.0 && strata[i] != Stratum::Index(0));
            let count = set
                .points
                .iter()
                .zip(&inside)
                .filter(|(p, ok)| **ok && cap.contains(p.factor(0)))
                .count();
            let density = count as f64 / space.k as f64;
            Ok(DensityRow { k: space.k, region: *cap, count, density, mass, margin: density - mass, clipped })
        })
        .collect()
}

/// One family at one `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecessaryRow {
    pub family: String,
    pub k: u32,
    pub count: usize,
    pub dim: usize,
    pub undersampled: bool,
    pub bounds: FrameBounds,
    pub worst_margin: f64,
}

/// Verdict for one family over the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyVerdict {
    pub family: String,
    /// Some region has a negative margin at every `k`.
    pub deficient: bool,
    /// `log λ_min` decreases over the sweep: negative fitted slope and last below first.
    pub lambda_min_decays: bool,
    /// `λ_min(k_first) / λ_min(k_last)`.
    pub decay_factor: f64,
    pub max_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecessaryReport {
    pub rows: Vec<NecessaryRow>,
    pub verdicts: Vec<FamilyVerdict>,
}

impl NecessaryReport {
    /// Deficient families must show decaying `λ_min`.
    pub fn contrapositive_holds(&self) -> bool {
        self.verdicts.iter().filter(|v| v.deficient).all(|v| v.lambda_min_decays)
    }
}

pub fn necessary_condition_experiment(geom: &ModelGeometry, families: &[PointFamily], ks: &[u32], regions: &[Cap]) -> Result<NecessaryReport> {
    if !matches!(geom.kind, GeometryKind::FsCp1 { .. } | GeometryKind::PerturbedCp1 { .. }) {
        return Err(Error::Unsupported(format!("sampling experiment on {}", geom.name())));
    }
    let grid = crate::geometry::default_grid(geom);
    let spaces = ks.iter().map(|&k| build_space_on(geom, k, 0, &grid)).collect::<Result<Vec<_>>>()?;
    let mut rows = vec![];
    let mut verdicts = vec![];
    for fam in families {
        let mut fam_rows = vec![];
        for space in &spaces {
            let set = generate(fam, space)?;
            let bounds = frame_bounds(space, &set)?;
            let worst_margin = if fam.kind == FamilyKind::QuadratureNodes {
                f64::INFINITY
            } else {
                density_report(space, &set, regions)?.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
            };
            fam_rows.push(NecessaryRow {
                family: fam.label(),
                k: space.k,
                count: set.len(),
                dim: space.dim,
                undersampled: set.len() < space.dim,
                bounds,
                worst_margin,
            });
        }
        let lm: Vec<f64> = fam_rows.iter().map(|r| r.bounds.lambda_min).collect();
        let first = lm.first().copied().unwrap_or(0.0);
        let last = lm.last().copied().unwrap_or(0.0);
        let slope = fit_rate(ks, &lm).map(|f| f.slope).unwrap_or(f64::NAN);
        verdicts.push(FamilyVerdict {
            family: fam.label(),
            deficient: !fam_rows.is_empty() && fam_rows.iter().all(|r| r.worst_margin < 0.0),
            lambda_min_decays: slope < 0.0 && last < first,
            decay_factor: first / last,
            max_a: fam_rows.iter().map(|r| r.bounds.a).fold(0.0, f64::max),
        });
        rows.extend(fam_rows);
    }
    Ok(NecessaryReport { rows, verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, Resolution};
    use crate::spaces::build_space;
    use rand::{Rng, SeedableRng};

    fn fs_space(k: u32) -> HarmonicSpace {
        let g = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        build_space(&g, k, 0, Resolution::default_for(&g)).unwrap()
    }

    fn fib(c: f64) -> PointFamily {
        PointFamily::new(FamilyKind::FibonacciUniform { c })
    }

    fn deficient(c: f64) -> PointFamily {
        PointFamily::new(FamilyKind::CapDeficient { c, cap: Cap::hemisphere() })
    }

    #[test]
    fn fibonacci_counts_and_separation() {
        let s = fs_space(20);
        let set = generate(&fib(1.5), &s).unwrap();
        assert_eq!(set.len(), 30);
        assert!(is_separated(&set, 0.5, 20));
        assert_eq!(fib(1.1).target(10), Some(11));
        for k in [4u32, 10, 25, 40] {
            let s = fs_space(k);
            for fam in [fib(1.5), deficient(2.0)] {
                let set = generate(&fam, &s).unwrap();
                assert_eq!(set.len(), fam.target(k).unwrap());
                assert!(is_separated(&set, fam.sep, k), "{} k={k} {}", fam.label(), min_separation(&set));
            }
        }
        assert!(matches!(generate(&fib(0.0), &s), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn cap_deficient_avoids_the_cap() {
        let s = fs_space(20);
        let set = generate(&deficient(2.0), &s).unwrap();
        assert_eq!(set.len(), 40);
        assert!(set.points.iter().all(|p| !Cap::hemisphere().contains(p.factor(0))));
        let r = density_report(&s, &set, &[Cap::hemisphere()]).unwrap();
        assert_eq!(r[0].density, 0.0);
        assert!((r[0].margin + 0.5).abs() < 1e-10);
        // a tilted cap
        let cap = Cap { theta: 1.0, phi: 2.0, radius: 0.7 };
        let set = generate(&PointFamily::new(FamilyKind::CapDeficient { c: 2.0, cap }), &s).unwrap();
        assert!(set.points.iter().all(|p| !cap.contains(p.factor(0))));
    }

    #[test]
    fn fibonacci_density_matches_area() {
        let s = fs_space(20);
        let set = generate(&fib(1.5), &s).unwrap();
        let whole = Cap { theta: 0.0, phi: 0.0, radius: PI + 0.1 };
        let r = density_report(&s, &set, &[Cap::hemisphere(), whole]).unwrap();
        assert!((r[0].density - 0.75).abs() < 1e-12);
        assert!((r[0].margin - 0.25).abs() < 1e-10);
        assert!((r[1].density - 1.5).abs() < 1e-12);
        assert!((r[1].mass - 1.0).abs() < 1e-10);
        assert!(!r[0].clipped);
    }

    #[test]
    fn rank_deficient_sets() {
        let s = fs_space(12);
        let set = generate(&PointFamily::new(FamilyKind::FibonacciUniform { c: 12.0 / 12.0 }), &s).unwrap();
        assert_eq!(set.len(), s.dim - 1);
        let b = frame_bounds(&s, &set).unwrap();
        assert!(b.lambda_min <= RANK_FLOOR);
        assert!(b.a.is_infinite());
    }

    #[test]
    fn quadrature_nodes_reproduce_the_gram() {
        let s = fs_space(30);
        let set = generate(&PointFamily::new(FamilyKind::QuadratureNodes), &s).unwrap();
        let b = frame_bounds(&s, &set).unwrap();
        assert!(b.lambda_max / b.lambda_min <= 1.0 + 1e-6, "{b:?}");
        assert!(b.a <= 2.0);
    }

    #[test]
    fn frame_bounds_are_basis_covariant() {
        let s = fs_space(16);
        let set = generate(&fib(1.5), &s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = CMatrix::from_fn(s.dim, s.dim, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let u = m.qr().q();
        let values: Vec<Vec<C64>> = set
            .points
            .iter()
            .map(|p| {
                let v = nalgebra::DVector::from_vec(s.onb_at(p));
                (u.transpose() * v).as_slice().to_vec()
            })
            .collect();
        let a = frame_bounds(&s, &set).unwrap();
        let b = frame_bounds_of(&sampling_matrix_from(&values, &set.weights, s.dim)).unwrap();
        assert!((a.lambda_min - b.lambda_min).abs() < 1e-10);
        assert!((a.lambda_max - b.lambda_max).abs() < 1e-10);
        assert!((a.a - b.a).abs() < 1e-10 * a.a);
    }

    #[test]
    fn adding_points_never_lowers_lambda_min() {
        let s = fs_space(14);
        let mut set = generate(&fib(1.5), &s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut prev = frame_bounds(&s, &set).unwrap().lambda_min;
        for p in crate::spaces::random_points(1, 20, &mut rng) {
            set.push(p, 1.0 / 14.0);
            let now = frame_bounds(&s, &set).unwrap().lambda_min;
            assert!(now >= prev - 1e-13, "{prev} -> {now}");
            prev = now;
        }
    }

    #[test]
    fn degenerate_annulus_is_clipped() {
        let g = build_geometry(GeometryKind::PerturbedCp1 { d: 1, t: crate::geometry::t_max(1) }).unwrap();
        let s = build_space(&g, 10, 0, Resolution::default_for(&g)).unwrap();
        let set = generate(&fib(1.5), &s).unwrap();
        let whole = Cap { theta: 0.0, phi: 0.0, radius: PI + 0.1 };
        let r = density_report(&s, &set, &[whole, Cap { theta: PI, phi: 0.0, radius: 0.3 }]).unwrap();
        assert!(r[0].clipped);
        assert!(!r[1].clipped);
    }

    #[test]
    fn deficient_family_degrades() {
        let g = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        let rep = necessary_condition_experiment(&g, &[deficient(2.0), fib(1.5)], &[10, 20, 30, 40], &[Cap::hemisphere()]).unwrap();
        assert!(rep.contrapositive_holds());
        let v = &rep.verdicts[0];
        assert!(v.deficient && v.decay_factor >= 10.0, "{v:?}");
        assert!(!rep.verdicts[1].deficient);
        assert!(rep.verdicts[1].max_a.is_finite());
    }
}
