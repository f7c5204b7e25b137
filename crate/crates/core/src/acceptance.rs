//! The acceptance suite: twelve executable criteria, each reporting one line.

use crate::asymptotics::{
    self, concentration_subspace, counting_convergence, curve_sweep, expected_dim, fit_exponential, fit_rate,
    homogeneous_bergman, l1_bergman_error, limit_density, offdiagonal_fraction, product_sweep, trace_check,
};
use crate::geometry::{build_geometry, build_grid, curvature_at, default_grid, Resolution, t_max, CurvatureData, GeometryKind, ModelGeometry, Point, Stratum};
use crate::sampling::{self, Cap, FamilyKind, PointFamily};
use crate::spaces::{build_space_on, random_points, random_unit, sample_pairs, HarmonicSpace, PAIR_BUDGET};
use crate::superform::{self, GradedForm, SuperSymbol};
use crate::symbol::{Expr, SuperSymbolSpec};
use crate::toeplitz::{self, PushforwardCdf};
use crate::{CMatrix, Error, Result, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

/// Outcome of one criterion.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    /// Measured values behind the verdict.
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {} ({:.1}s)", self.id, self.title, self.detail, self.seconds)
    }
}

pub const TITLES: [&str; 12] = [
    "exact Bergman constants",
    "dimensions",
    "Bergman function asymptotics",
    "counting function",
    "extremal identity",
    "trace asymptotics",
    "exact super reduction",
    "spectral pushforward",
    "kernel localization",
    "direction purity",
    "sampling necessary condition",
    "superform algebra",
];

/// Seed of every randomized check.
pub const SEED: u64 = 0x5eed;

/// Curve sweep extended to `k = 60`.
pub fn long_curve_sweep() -> Vec<u32> {
    (4..=60).step_by(2).collect()
}

fn geom(kind: GeometryKind) -> ModelGeometry {
    build_geometry(kind).expect("catalog geometry")
}

fn fs() -> ModelGeometry {
    geom(GeometryKind::FsCp1 { d: 1 })
}

fn perturbed() -> ModelGeometry {
    geom(GeometryKind::PerturbedCp1 { d: 1, t: t_max(1) })
}

fn neg() -> ModelGeometry {
    geom(GeometryKind::NegCp1 { m: 1 })
}

fn product() -> ModelGeometry {
    geom(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 })
}

/// The four catalog geometries with their harmonic degree.
fn catalog() -> Vec<(ModelGeometry, usize)> {
    vec![(fs(), 0), (perturbed(), 0), (neg(), 1), (product(), 1)]
}

fn sweep_for(g: &ModelGeometry) -> Vec<u32> {
    if g.n == 2 { product_sweep() } else { curve_sweep() }
}

/// Smooth symbol with nonzero blocks wherever the geometry allows:
/// `q = 0` curves carry `f₀ + f₁e^{11†}`, NEG carries a block that
/// `f_χ` drops, the product carries all four blocks.
fn smooth_symbol(g: &ModelGeometry) -> SuperSymbolSpec {
    let blocks: &[(&str, &str)] = match g.kind {
        GeometryKind::FsCp1 { .. } | GeometryKind::PerturbedCp1 { .. } => {
            &[("0", "0.5 + x3(1) + x1(1)^2"), ("1", "0.3*x2(1)")]
        }
        GeometryKind::NegCp1 { .. } => &[("0", "0.5 + x3(1) + x1(1)^2"), ("1", "0.7*x2(1)")],
        GeometryKind::ProductCp1xCp1 { .. } => &[
            ("0", "0.3 + x3(1)*x3(2)"),
            ("1", "0.7*x3(1) + 0.2*x1(2)^2"),
            ("2", "x1(2)"),
            ("12", "0.4*x2(1)"),
        ],
    };
    SuperSymbolSpec::parse(g.n, blocks).expect("valid symbol")
}

fn kn(s: &HarmonicSpace) -> f64 {
    (s.k as f64).powi(s.n() as i32)
}

fn run(id: u8, f: impl FnOnce() -> Result<(bool, String)>) -> CriterionResult {
    let t = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, title: TITLES[id as usize - 1], passed, detail, seconds: t.elapsed().as_secs_f64() }
}

/// Runs criterion `id` (1-based).
pub fn criterion(id: u8) -> CriterionResult {
    criterion_seeded(id, SEED)
}

/// As [`criterion`], with `seed` driving the randomized property suite only.
pub fn criterion_seeded(id: u8, seed: u64) -> CriterionResult {
    match id {
        1 => run(1, exact_constants),
        2 => run(2, dimensions),
        3 => run(3, bergman_asymptotics),
        4 => run(4, counting),
        5 => run(5, extremal),
        6 => run(6, traces),
        7 => run(7, super_reduction),
        8 => run(8, pushforward),
        9 => run(9, localization),
        10 => run(10, purity),
        11 => run(11, sampling_condition),
        12 => run(12, || algebra(seed)),
        _ => CriterionResult { id, title: "unknown", passed: false, detail: "no such criterion".into(), seconds: 0.0 },
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    run_all_seeded(SEED)
}

pub fn run_all_seeded(seed: u64) -> Vec<CriterionResult> {
    (1..=12).map(|id| criterion_seeded(id, seed)).collect()
}

fn exact_constants() -> Result<(bool, String)> {
    let t = Instant::now();
    let mut worst = [0.0f64; 2];
    for (slot, (g, q, ks)) in [(fs(), 0, 1..=40u32), (neg(), 1, 2..=40u32)].into_iter().enumerate() {
        let grid = default_grid(&g);
        let devs = ks
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&k| {
                let s = build_space_on(&g, k, q, &grid)?;
                let b = homogeneous_bergman(&g, k, q).ok_or(Error::Unsupported("no constant".into()))?;
                Ok(asymptotics::bergman_relative_deviation(&s, b))
            })
            .collect::<Result<Vec<f64>>>()?;
        worst[slot] = devs.into_iter().fold(0.0, f64::max);
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = worst.iter().all(|&w| w <= 1e-8) && secs < 120.0;
    Ok((ok, format!("max rel dev FS {:.2e}, NEG {:.2e}; {secs:.1}s", worst[0], worst[1])))
}

fn dimensions() -> Result<(bool, String)> {
    let mut checked = 0;
    let mut bad = vec![];
    for (g, q) in catalog() {
        let ks: Vec<u32> = if g.n == 2 { (1..=12).collect() } else { (1..=60).collect() };
        let grid = default_grid(&g);
        for k in ks {
            let s = build_space_on(&g, k, q, &grid)?;
            let want = match g.kind {
                GeometryKind::ProductCp1xCp1 { .. } => (k as usize + 1) * (k as usize - 1),
                GeometryKind::NegCp1 { .. } => k as usize - 1,
                _ => k as usize + 1,
            };
            checked += 1;
            if s.dim != want || expected_dim(&g, k, q) != Some(want) {
                bad.push(format!("{} k={k}: {} vs {want}", g.name(), s.dim));
            }
        }
    }
    Ok((bad.is_empty(), if bad.is_empty() { format!("{checked} (geometry, k) pairs exact") } else { bad.join("; ") }))
}

fn l1_series(g: &ModelGeometry, q: usize, ks: &[u32]) -> Result<Vec<f64>> {
    let grid = default_grid(g);
    let limit = limit_density(g, &grid, q);
    ks.par_iter().map(|&k| Ok(l1_bergman_error(&build_space_on(g, k, q, &grid)?, &limit))).collect()
}

fn bergman_asymptotics() -> Result<(bool, String)> {
    let ks = curve_sweep();
    let fs_err = l1_series(&fs(), 0, &ks)?;
    let fs_dev = ks.iter().zip(&fs_err).map(|(&k, e)| (e * k as f64 - 1.0).abs()).fold(0.0, f64::max);
    let p = l1_series(&perturbed(), 0, &ks)?;
    let decreasing = p.windows(2).all(|w| w[1] < w[0]);
    let fit = fit_rate(&ks, &p)?;
    let ok = fs_dev <= 1e-8 && decreasing && (fit.slope + 1.0).abs() <= 0.1;
    Ok((
        ok,
        format!(
            "FS max |k·err−1| {fs_dev:.2e}; PERTURBED(t_max) decreasing={decreasing}, slope {:.3} (band −1.0±0.1), err {:.3e}→{:.3e}",
            fit.slope,
            p[0],
            p[p.len() - 1]
        ),
    ))
}

fn counting() -> Result<(bool, String)> {
    let g = fs();
    let grid = default_grid(&g);
    let f = Expr::parse("hemisphere(1)", 1)?.sample(&grid)?;
    let gammas = [0.25, 0.5, 0.75];
    let rows = (1..=60u32)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| {
            let s = build_space_on(&g, k, 0, &grid)?;
            let sm = toeplitz::spectrum(&toeplitz::assemble(&s, &f, "hemisphere")?, 1)?;
            // limit mass of {f > γ} is exactly 1/2
            let half = PushforwardCdf::from_atoms(vec![(1.0, 0.5), (0.0, 0.5)]);
            let pts = counting_convergence(&sm, &half, &gammas);
            let scaled: Vec<f64> = pts.iter().map(|c| c.error() * k as f64).collect();
            Ok((k, scaled.iter().copied().fold(0.0, f64::max), scaled[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    let (wk, worst, _) = rows.iter().copied().fold((0, 0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let mid = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    // k·err is an integer multiple of 1/2 up to round-off
    let bound = 2.0 + 1e-9;
    let first = rows.iter().find(|r| r.1 > bound).map_or("none".to_string(), |r| r.0.to_string());
    Ok((
        worst <= bound,
        format!("max k·|N/k − 1/2| = {worst:.3} at k={wk} (bound 2), first k over the bound {first}, γ = 1/2 alone {mid:.3}; k = 1..60"),
    ))
}

/// Random unit direction of degree `(0, q)` in the chart coframe.
fn random_direction(n: usize, q: usize, rng: &mut impl Rng) -> GradedForm {
    let masks: Vec<usize> = (0..1usize << n).filter(|m| m.count_ones() as usize == q).collect();
    let c = random_unit(masks.len(), rng);
    masks.iter().zip(c).fold(GradedForm::zero(n), |acc, (&m, c)| &acc + &GradedForm::monomial(n, 0, m, c))
}

fn extremal() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    let mut details = vec![];
    for (g, q) in catalog() {
        let k = if g.n == 2 { 6 } else { 10 };
        let grid = default_grid(&g);
        let s = build_space_on(&g, k, q, &grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut done = 0;
        let mut w = 0.0f64;
        while done < 100 {
            let pts = random_points(g.n, 2, &mut rng);
            let (x, y) = (pts[0], pts[1]);
            let theta = random_direction(g.n, q, &mut rng);
            let bt = s.bergman_theta(&x, &theta)?;
            let alpha = match s.extremal_section(&x, &theta) {
                Ok(a) => a,
                Err(Error::NoExtremal) => continue,
                Err(e) => return Err(e),
            };
            let kxy = s.pointwise_norm2(&s.kernel_section(&x, &theta)?, &y);
            let scale = bt * s.bergman_at(&y);
            let e1 = (kxy - s.pointwise_norm2(&alpha, &y) * bt).abs() / scale;
            // extremality: α attains B_θ(x)
            let at_x = superform::pairing(&GradedForm::one(g.n), &s.as_form(s.evaluate(&alpha, &x)), &theta)?.norm_sqr();
            let e2 = (at_x - bt).abs() / bt;
            w = w.max(e1).max(e2);
            done += 1;
        }
        details.push(format!("{} {w:.1e}", g.name()));
        worst = worst.max(w);
    }
    Ok((worst <= 1e-10, format!("max rel error {}", details.join(", "))))
}

fn traces() -> Result<(bool, String)> {
    let mut ok = true;
    let mut details = vec![];
    for (g, q) in catalog() {
        let grid = default_grid(&g);
        let limit = limit_density(&g, &grid, q);
        let f = smooth_symbol(&g).sample(&grid)?;
        let ks = sweep_for(&g);
        let rows = ks
            .par_iter()
            .map(|&k| {
                let s = build_space_on(&g, k, q, &grid)?;
                let t = toeplitz::assemble_super(&s, &f, "f")?;
                let f_chi = toeplitz::reduced_symbol(&s, &f)?;
                let sm = toeplitz::spectrum(&t, g.n)?;
                Ok((k, trace_check(&s, &sm, &f_chi, &limit)))
            })
            .collect::<Result<Vec<_>>>()?;
        let band = rows.iter().map(|(k, t)| t.error() * *k as f64).fold(0.0, f64::max);
        let gap = rows.iter().map(|(_, t)| t.route_gap()).fold(0.0, f64::max);
        ok &= band <= 3.0 && gap <= 1e-8;
        details.push(format!("{} k·err {band:.3}, routes {gap:.1e}", g.name()));
    }
    Ok((ok, details.join("; ")))
}

fn spectra_gap(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn super_reduction() -> Result<(bool, String)> {
    let mut entry = 0.0f64;
    for (g, q) in catalog() {
        let grid = default_grid(&g);
        let f = smooth_symbol(&g).sample(&grid)?;
        let ks: Vec<u32> = if g.n == 2 { vec![3, 8, 12] } else { vec![5, 20, 40] };
        for k in ks {
            let s = build_space_on(&g, k, q, &grid)?;
            let a = toeplitz::assemble_super(&s, &f, "f")?;
            let b = toeplitz::assemble(&s, &toeplitz::reduced_symbol(&s, &f)?, "f_chi")?;
            entry = entry.max(crate::linalg::max_entry(&(&a.matrix - &b.matrix)));
        }
    }
    // spectra under extra c₂ and c₁₂ components on the product
    let g = product();
    let grid = default_grid(&g);
    let base = SuperSymbolSpec::parse(2, &[("0", "0.3 + x3(1)*x3(2)"), ("1", "0.7*x3(1)")])?.sample(&grid)?;
    let c2 = Expr::parse("x1(2) + 2*x3(1)^2", 2)?.sample(&grid)?;
    let c12 = Expr::parse("0.8 - x2(2)", 2)?.sample(&grid)?;
    let with2 = base.clone().with_block(2, c2.clone());
    let with12 = base.clone().with_block(3, c12);
    let mut spec = 0.0f64;
    for k in product_sweep() {
        let s = build_space_on(&g, k, 1, &grid)?;
        let e = |f: &SuperSymbol| -> Result<Vec<f64>> { Ok(toeplitz::spectrum(&toeplitz::assemble_super(&s, f, "f")?, 2)?.eigs) };
        let e0 = e(&base)?;
        spec = spec.max(spectra_gap(&e0, &e(&with2)?)).max(spectra_gap(&e0, &e(&with12)?));
    }
    let ok = entry <= 1e-10 && spec <= 1e-12;
    Ok((ok, format!("max entry gap {entry:.1e}; spectral shift under c₂/c₁₂ {spec:.1e}")))
}

struct KsSeries {
    label: String,
    ks: Vec<u32>,
    values: Vec<f64>,
}

impl KsSeries {
    fn passes(&self) -> bool {
        let n = self.values.len();
        n >= 3 && self.values[n - 1] <= 0.15 && self.values[n - 3] >= self.values[n - 2] && self.values[n - 2] >= self.values[n - 1]
    }

    fn describe(&self) -> String {
        let n = self.values.len();
        let tail: Vec<String> = (n.saturating_sub(3)..n).map(|i| format!("{}:{:.4}", self.ks[i], self.values[i])).collect();
        format!("{} [{}]", self.label, tail.join(" "))
    }
}

/// Twice the default radial density. A quadrature pushforward is a staircase
/// whose largest step bounds how finely KS can resolve; on the default grid that
/// step is comparable to the change in KS between sweep points.
fn pushforward_resolution(g: &ModelGeometry) -> Resolution {
    let r = Resolution::default_for(g);
    Resolution { nodes_per_panel: 2 * r.nodes_per_panel, ..r }
}

fn ks_series(g: &ModelGeometry, q: usize, symbol: &SuperSymbolSpec, ks: &[u32], label: &str) -> Result<KsSeries> {
    let grid = build_grid(g, pushforward_resolution(g))?;
    let f = symbol.sample(&grid)?;
    let values = ks
        .par_iter()
        .map(|&k| {
            let s = build_space_on(g, k, q, &grid)?;
            let sm = toeplitz::spectrum(&toeplitz::assemble_super(&s, &f, "f")?, g.n)?;
            let push = toeplitz::pushforward_cdf(&s, &toeplitz::reduced_symbol(&s, &f)?);
            asymptotics::spectral_pushforward_test(&sm, &push)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KsSeries { label: label.into(), ks: ks.to_vec(), values })
}

fn pushforward() -> Result<(bool, String)> {
    let height = SuperSymbolSpec::scalar(Expr::parse("x3(1)", 1)?);
    let long = long_curve_sweep();
    let mut series = vec![
        ks_series(&fs(), 0, &height, &long, "FS x3")?,
        ks_series(&perturbed(), 0, &height, &long, "PERTURBED x3")?,
    ];
    let blocks = [("0", "0.3"), ("1", "0.7*x3(1) + 0.2*x3(2)"), ("2", "x1(2)")];
    let prod = SuperSymbolSpec::parse(2, &blocks)?;
    let p = ks_series(&product(), 1, &prod, &product_sweep(), "PRODUCT c₀+c₁e¹¹+c₂e²²")?;
    let alt = SuperSymbolSpec::parse(2, &[blocks[0], blocks[1], ("2", "5*x3(2)^2 - 1")])?;
    let p_alt = ks_series(&product(), 1, &alt, &product_sweep(), "alt c₂")?;
    let c2_gap = spectra_gap(&p.values, &p_alt.values);
    series.push(p);
    let ok = series.iter().all(KsSeries::passes) && c2_gap <= 1e-12;
    // the atomic hemisphere limit: KS cannot drop below 1/2, Lévy can
    let g = fs();
    let grid = default_grid(&g);
    let s = build_space_on(&g, 60, 0, &grid)?;
    let h = Expr::parse("hemisphere(1)", 1)?.sample(&grid)?;
    let sm = toeplitz::spectrum(&toeplitz::assemble(&s, &h, "h")?, 1)?;
    let push = toeplitz::pushforward_cdf(&s, &h);
    let hks = toeplitz::ks_distance(&sm, &push)?;
    let hlevy = toeplitz::levy_distance(&sm, &push)?;
    let desc: Vec<String> = series.iter().map(KsSeries::describe).collect();
    Ok((
        ok,
        format!("{}; c₂ change {c2_gap:.1e}; hemisphere k=60 KS {hks:.3} Lévy {hlevy:.3}", desc.join("; ")),
    ))
}

fn localization() -> Result<(bool, String)> {
    let g = fs();
    let grid = default_grid(&g);
    let pairs = sample_pairs(&grid, PAIR_BUDGET, SEED);
    let ks: Vec<u32> = (5..=40).collect();
    let fr = ks
        .par_iter()
        .map(|&k| Ok(offdiagonal_fraction(&build_space_on(&g, k, 0, &grid)?, &pairs, 0.5)))
        .collect::<Result<Vec<f64>>>()?;
    let fit = fit_exponential(&ks, &fr)?;
    // explicit kernel ((k+1)/π)² cos^{2k}(d/2)
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut kerr = 0.0f64;
    for k in [5u32, 20, 40] {
        let s = build_space_on(&g, k, 0, &grid)?;
        let pts = random_points(1, 400, &mut rng);
        let c = ((k + 1) as f64 / PI).powi(2);
        for w in pts.chunks(2) {
            let exact = c * (w[0].distance(&w[1]) / 2.0).cos().powi(2 * k as i32);
            kerr = kerr.max((s.kernel_norm2(&w[0], &w[1]) - exact).abs() / c);
        }
    }
    let ok = fit.slope < 0.0 && fit.r2 >= 0.99 && kerr <= 1e-8;
    Ok((ok, format!("fit c = {:.4}, R² = {:.5}; kernel formula rel err {kerr:.1e}", -fit.slope, fit.r2)))
}

fn purity() -> Result<(bool, String)> {
    let g = product();
    let grid = default_grid(&g);
    let nodes: Vec<usize> = (0..grid.len()).step_by(grid.len() / 500).collect();
    let curv: Vec<CurvatureData> = nodes.iter().map(|&i| curvature_at(&g, &grid.node(i))).collect::<Result<_>>()?;
    let mut offchi = 0.0f64;
    let mut band = 0.0f64;
    for k in product_sweep() {
        let s = build_space_on(&g, k, 1, &grid)?;
        for (&i, cd) in nodes.iter().zip(&curv) {
            if cd.q_index != Stratum::Index(1) {
                continue;
            }
            let b = s.bergman_form_at(&grid.node(i)).change_frame(&cd.v_frame);
            let chi = b.paired_coeff(1);
            let mut rest = b.clone();
            rest.set_coeff(1, 1, C64::new(0.0, 0.0));
            offchi = offchi.max(rest.max_abs() / kn(&s)).max(chi.im.abs() / kn(&s));
            band = band.max((chi.re / kn(&s) - cd.det_abs / (PI * PI)).abs() * k as f64);
        }
    }
    let ok = offchi <= 1e-10 && band <= 3.0;
    Ok((ok, format!("non-χ components {offchi:.1e}; max k·|χ-coef/k² − |det|/π²| = {band:.3}")))
}

fn sampling_condition() -> Result<(bool, String)> {
    let g = fs();
    let grid = default_grid(&g);
    let def = PointFamily::new(FamilyKind::CapDeficient { c: 2.0, cap: Cap::hemisphere() });
    let lmin = |k: u32| -> Result<f64> {
        let s = build_space_on(&g, k, 0, &grid)?;
        Ok(sampling::frame_bounds(&s, &sampling::generate(&def, &s)?)?.lambda_min)
    };
    let factor = lmin(10)? / lmin(40)?;
    let quad = PointFamily::new(FamilyKind::QuadratureNodes);
    let under = PointFamily::new(FamilyKind::FibonacciUniform { c: 1.0 });
    let mut max_a = 0.0f64;
    let mut under_max = 0.0f64;
    for k in curve_sweep() {
        let s = build_space_on(&g, k, 0, &grid)?;
        max_a = max_a.max(sampling::frame_bounds(&s, &sampling::generate(&quad, &s)?)?.a);
        let set = sampling::generate(&under, &s)?;
        if set.len() >= s.dim {
            return Err(Error::Unsupported("undersampled family is not undersampled".into()));
        }
        under_max = under_max.max(sampling::frame_bounds(&s, &set)?.lambda_min);
    }
    let ok = factor >= 10.0 && max_a <= 2.0 && under_max <= sampling::RANK_FLOOR;
    Ok((ok, format!("cap-deficient λ_min(10)/λ_min(40) = {factor:.3e}; quadrature A ≤ {max_a:.6}; #D<dim λ_min ≤ {under_max:.1e}")))
}

fn random_form(n: usize, rng: &mut impl Rng) -> GradedForm {
    let mut f = GradedForm::zero(n);
    for i in 0..1usize << n {
        for j in 0..1usize << n {
            f.set_coeff(i, j, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        }
    }
    f
}

fn random_unitary(n: usize, rng: &mut impl Rng) -> CMatrix {
    let m = CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    m.qr().q()
}

/// Random curvature data in a random eigenframe of index `q`.
fn random_curvature(n: usize, q: usize, rng: &mut impl Rng) -> CurvatureData {
    let lambdas: Vec<f64> = (0..n).map(|i| if i < q { -rng.gen_range(0.5..2.0) } else { rng.gen_range(0.5..2.0) }).collect();
    let mut sorted = lambdas.clone();
    sorted.sort_by(f64::total_cmp);
    CurvatureData {
        point: Point::curve(crate::geometry::FactorPoint::north(C64::new(0.0, 0.0))),
        det_abs: sorted.iter().map(|l| l.abs()).product(),
        lambdas: sorted,
        q_index: Stratum::Index(q),
        v_frame: random_unitary(n, rng),
    }
}

/// Largest deviation of each algebra identity over `cases` random draws.
pub fn algebra_defects(cases: usize, seed: u64) -> Result<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 4];
    for c in 0..cases {
        let n = 1 + c % 2;
        let a = random_form(n, &mut rng);
        let b = random_form(n, &mut rng);
        worst[0] = worst[0].max(a.dagger().dagger().max_abs_diff(&a));
        let lhs = a.wedge(&b)?.dagger();
        let rhs = b.dagger().wedge(&a.dagger())?;
        worst[1] = worst[1].max(lhs.max_abs_diff(&rhs) / (1.0 + lhs.max_abs()));
        // a (0,q)-form: norm is the coefficient sum, in any unitary frame
        let q = rng.gen_range(0..=n);
        let scale = C64::new(rng.gen_range(0.1..3.0), 0.0);
        let alpha = &random_direction(n, q, &mut rng) * scale;
        let expect: f64 = alpha.coeffs().iter().map(|x| x.norm_sqr()).sum();
        let u = random_unitary(n, &mut rng);
        let n1 = superform::norm2(&alpha)?;
        let n2 = superform::norm2(&alpha.change_frame(&u))?;
        worst[2] = worst[2].max((n1 - expect).abs().max((n2 - expect).abs()) / expect);
        // dagger-real even symbol against the Berezin route
        let mut f = GradedForm::zero(n);
        for j in 0..1usize << n {
            f = &f + &GradedForm::paired(n, j, C64::new(rng.gen_range(-1.0..1.0), 0.0));
        }
        let f = f.change_frame(&random_unitary(n, &mut rng));
        let cd = random_curvature(n, rng.gen_range(0..=n), &mut rng);
        let r1 = superform::symbol_reduce(&f, &cd)?;
        let r2 = superform::symbol_reduce_berezin(&f, &cd)?;
        worst[3] = worst[3].max((r1 - r2).abs());
    }
    Ok(worst)
}

fn algebra(seed: u64) -> Result<(bool, String)> {
    let w = algebra_defects(10_000, seed)?;
    let ok = w.iter().all(|&x| x <= 1e-12);
    Ok((
        ok,
        format!("10⁴ cases: involution {:.1e}, anti-multiplicativity {:.1e}, norm {:.1e}, dual route {:.1e}", w[0], w[1], w[2], w[3]),
    ))
}

/// Concentration subspaces of the hemisphere indicator on FS at the given `k`.
pub fn concentration_check(ks: &[u32]) -> Result<Vec<asymptotics::ConcentrationReport>> {
    let g = fs();
    let grid = default_grid(&g);
    let f = Expr::parse("hemisphere(1)", 1)?.sample(&grid)?;
    ks.iter().map(|&k| concentration_subspace(&build_space_on(&g, k, 0, &grid)?, &f, 0.1, 50, SEED)).collect()
}
