//! k-sweeps: each limit statement as a finite-k diagnostic.
//!
//! All quantities are computed on the quadrature grid of the space. Limit
//! masses use the density `π^{-n}|det|` restricted to `X(q)`, so they are
//! positive on every stratum.

use crate::geometry::{
    classify, node_curvature, GeometryKind, ModelGeometry, QuadratureGrid, Resolution, Stratum,
};
use crate::spaces::{build_space_on, random_unit, sample_pairs, HarmonicSpace, PairSample, PAIR_BUDGET};
use crate::superform::SuperSymbol;
use crate::symbol::SuperSymbolSpec;
use crate::toeplitz::{self, PushforwardCdf, SpectralMeasure, ToeplitzMatrix};
use crate::{Error, Result, C64};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// `k = 4, 6, …, 40`.
pub fn curve_sweep() -> Vec<u32> {
    (4..=40).step_by(2).collect()
}

/// `k = 2, …, 12`.
pub fn product_sweep() -> Vec<u32> {
    (2..=12).collect()
}

pub fn default_sweep(geom: &ModelGeometry) -> Vec<u32> {
    if geom.n == 2 {
        product_sweep()
    } else {
        curve_sweep()
    }
}

/// Analytic `dim H^q(X, L^k)` for catalog geometries, `None` if unsupported.
pub fn expected_dim(geom: &ModelGeometry, k: u32, q: usize) -> Option<usize> {
    let k = k as i64;
    let d = match (geom.kind, q) {
        (GeometryKind::FsCp1 { d } | GeometryKind::PerturbedCp1 { d, .. }, 0) => d as i64 * k + 1,
        (GeometryKind::NegCp1 { m }, 1) => m as i64 * k - 1,
        (GeometryKind::ProductCp1xCp1 { a, b }, 1) => (a as i64 * k + 1) * (b as i64 * k - 1),
        _ => return None,
    };
    Some(d.max(0) as usize)
}

/// Constant value of `B` on homogeneous geometries.
pub fn homogeneous_bergman(geom: &ModelGeometry, k: u32, q: usize) -> Option<f64> {
    match geom.kind {
        GeometryKind::PerturbedCp1 { t, .. } if t != 0.0 => None,
        _ => expected_dim(geom, k, q).map(|d| d as f64 / PI.powi(geom.n as i32)),
    }
}

/// `π^{-n}|det|` on `X(q)` nodes, zero elsewhere.
pub fn limit_density(geom: &ModelGeometry, grid: &QuadratureGrid, q: usize) -> Vec<f64> {
    let nc = node_curvature(geom, grid);
    let pin = PI.powi(geom.n as i32);
    nc.strata
        .iter()
        .zip(&nc.det_abs)
        .map(|(s, d)| if *s == Stratum::Index(q) { d / pin } else { 0.0 })
        .collect()
}

fn kn(space: &HarmonicSpace) -> f64 {
    (space.k as f64).powi(space.n() as i32)
}

/// `∫ |k^{-n}B − π^{-n}1_{X(q)}|det|| ω_n`.
pub fn l1_bergman_error(space: &HarmonicSpace, limit: &[f64]) -> f64 {
    let b = space.bergman_function();
    let s = kn(space);
    space.grid.integrate(|i| (b[i] / s - limit[i]).abs())
}

/// `max |k^{-n}B − π^{-n}1_{X(q)}|det||` over the nodes.
pub fn max_bergman_deviation(space: &HarmonicSpace, limit: &[f64]) -> f64 {
    let s = kn(space);
    space.bergman_function().iter().zip(limit).map(|(b, l)| (b / s - l).abs()).fold(0.0, f64::max)
}

/// `max |B/b − 1|` over the nodes for a constant oracle `b`.
pub fn bergman_relative_deviation(space: &HarmonicSpace, b: f64) -> f64 {
    space.bergman_function().iter().map(|x| (x / b - 1.0).abs()).fold(0.0, f64::max)
}

/// Share of `∫∫|K|²e^{-kφ(x)-kφ(y)}` carried by pairs farther apart than
/// `delta`, estimated on `pairs` and normalized by `dim`.
pub fn offdiagonal_fraction(space: &HarmonicSpace, pairs: &PairSample, delta: f64) -> f64 {
    if space.dim == 0 || pairs.pairs.is_empty() {
        return 0.0;
    }
    let grid = &space.grid;
    let far: f64 = pairs
        .pairs
        .par_iter()
        .map(|&(x, y)| {
            let (px, py) = (grid.node(x), grid.node(y));
            if px.distance(&py) <= delta {
                return 0.0;
            }
            let a = space.node_onb(x);
            let c = space.node_onb(y);
            a.iter().zip(&c).map(|(a, c)| a.conj() * c).sum::<C64>().norm_sqr()
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    far * pairs.total_weight2 / pairs.pairs.len() as f64 / space.dim as f64
}

/// Trace of `T_f`: both routes and the limit, all scaled by `k^{-n}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceCheck {
    pub eigen_sum: f64,
    pub integral: f64,
    pub limit: f64,
}

impl TraceCheck {
    pub fn error(&self) -> f64 {
        (self.eigen_sum - self.limit).abs()
    }

    pub fn route_gap(&self) -> f64 {
        (self.eigen_sum - self.integral).abs()
    }
}

pub fn trace_check(space: &HarmonicSpace, sm: &SpectralMeasure, f_chi: &[f64], limit: &[f64]) -> TraceCheck {
    let s = kn(space);
    let b = space.bergman_function();
    TraceCheck {
        eigen_sum: sm.eigs.iter().sum::<f64>() / s,
        integral: space.grid.integrate(|i| f_chi[i] * b[i]) / s,
        limit: space.grid.integrate(|i| f_chi[i] * limit[i]),
    }
}

/// One row of a counting experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingPoint {
    pub gamma: f64,
    /// `k^{-n} N(T_f > γ)`.
    pub scaled_count: f64,
    /// Curvature mass of `{f_χ > γ} ∩ X(q)`.
    pub limit_mass: f64,
}

impl CountingPoint {
    pub fn error(&self) -> f64 {
        (self.scaled_count - self.limit_mass).abs()
    }
}

pub fn counting_convergence(sm: &SpectralMeasure, push: &PushforwardCdf, gammas: &[f64]) -> Vec<CountingPoint> {
    gammas
        .iter()
        .map(|&g| CountingPoint {
            gamma: g,
            scaled_count: toeplitz::counting(sm, g).0 as f64 * sm.weight,
            limit_mass: push.mass_above(g),
        })
        .collect()
}

/// `k^{-n}|Tr(T_f T_g) − Tr(T_{f_χ g_χ})|`.
pub fn product_trace_defect(space: &HarmonicSpace, tf: &ToeplitzMatrix, tg: &ToeplitzMatrix, f_chi: &[f64], g_chi: &[f64]) -> Result<f64> {
    let fg: Vec<f64> = f_chi.iter().zip(g_chi).map(|(a, b)| a * b).collect();
    let tfg = toeplitz::assemble(space, &fg, "fg")?;
    Ok((toeplitz::trace_product(tf, tg)? - toeplitz::trace(&tfg)).abs() / kn(space))
}

/// KS distance between the normalized spectral measure of `T_f` and the
/// normalized pushforward of the limit density by `f_χ`.
pub fn spectral_pushforward_test(sm: &SpectralMeasure, push: &PushforwardCdf) -> Result<f64> {
    toeplitz::ks_distance(sm, push)
}

/// Least-squares line `y = constant + slope·x` with its `R²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub constant: f64,
    pub r2: f64,
}

fn line_fit(x: &[f64], y: &[f64]) -> RateFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    RateFit { slope, constant: my - slope * mx, r2 }
}

fn check_series(ks: &[u32], errs: &[f64]) -> Result<()> {
    if ks.len() != errs.len() {
        return Err(Error::BadSeries(format!("{} k values for {} entries", ks.len(), errs.len())));
    }
    if errs.len() < 4 {
        return Err(Error::BadSeries(format!("only {} entries", errs.len())));
    }
    if let Some(e) = errs.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::BadSeries(format!("entry {e}")));
    }
    let distinct: std::collections::BTreeSet<u32> = ks.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::BadSeries("all k equal".into()));
    }
    Ok(())
}

/// `err ≈ constant · k^{slope}`, fitted in log-log; `constant` is returned
/// in linear scale.
pub fn fit_rate(ks: &[u32], errs: &[f64]) -> Result<RateFit> {
    check_series(ks, errs)?;
    let x: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mut f = line_fit(&x, &y);
    f.constant = f.constant.exp();
    Ok(f)
}

/// `err ≈ constant · exp(slope·k)`.
pub fn fit_exponential(ks: &[u32], errs: &[f64]) -> Result<RateFit> {
    check_series(ks, errs)?;
    let x: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let y: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mut f = line_fit(&x, &y);
    f.constant = f.constant.exp();
    Ok(f)
}

/// Span of the eigenvectors of `T_{1_Ω}` with eigenvalue `≥ 1 − ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub k: u32,
    pub dim: usize,
    /// `(mass(Ω) − 2/k)·k`.
    pub required: f64,
    /// Smallest `‖α‖²_Ω` over the random unit members tried.
    pub worst_mass: f64,
    pub trials: usize,
}

pub fn concentration_subspace(space: &HarmonicSpace, indicator: &[f64], eps: f64, trials: usize, seed: u64) -> Result<ConcentrationReport> {
    let t = toeplitz::assemble(space, indicator, "omega")?;
    let e = toeplitz::eigen(&t)?;
    let limit = limit_density(&space.geom, &space.grid, space.q);
    let mass = space.grid.integrate(|i| indicator[i] * limit[i]);
    let cols: Vec<usize> = (0..e.values.len()).filter(|&c| e.values[c] >= 1.0 - eps).collect();
    let k = space.k as f64;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    if !cols.is_empty() {
        for _ in 0..trials {
            let c = random_unit(cols.len(), &mut rng);
            let mut v = nalgebra::DVector::<C64>::zeros(space.dim);
            for (a, &col) in c.iter().zip(&cols) {
                v += e.vectors.column(col) * *a;
            }
            let m = (v.adjoint() * &t.matrix * &v)[(0, 0)].re;
            worst = worst.min(m);
        }
    }
    Ok(ConcentrationReport { k: space.k, dim: cols.len(), required: (mass - 2.0 / k) * k, worst_mass: worst, trials })
}

/// Which diagnostics a sweep computes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experiments {
    pub bergman: bool,
    pub trace: bool,
    pub spectrum: bool,
    pub kernel: bool,
}

impl Experiments {
    pub fn all() -> Self {
        Experiments { bergman: true, trace: true, spectrum: true, kernel: true }
    }
}

/// Inputs of a k-sweep.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub geom: ModelGeometry,
    pub q: usize,
    pub ks: Vec<u32>,
    pub resolution: Resolution,
    /// Symbol `f` for trace, spectrum and counting.
    pub symbol: SuperSymbolSpec,
    /// Second symbol `g` for `Tr(T_f T_g)`; `f` itself if absent.
    pub second: Option<SuperSymbolSpec>,
    pub gammas: Vec<f64>,
    /// Geodesic radius for the off-diagonal mass.
    pub delta: f64,
    pub seed: u64,
    pub experiments: Experiments,
}

impl SweepConfig {
    pub fn new(geom: ModelGeometry, q: usize, symbol: SuperSymbolSpec) -> Self {
        SweepConfig {
            ks: default_sweep(&geom),
            resolution: Resolution::default_for(&geom),
            geom,
            q,
            symbol,
            second: None,
            gammas: vec![0.25, 0.5, 0.75],
            delta: 0.5,
            seed: 0,
            experiments: Experiments::all(),
        }
    }
}

/// Diagnostics at one `k`. Absent entries were not requested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: u32,
    pub dim: usize,
    pub dim_oracle: usize,
    /// `|k^{-n}dim − mass(X(q))|`.
    pub dim_mass_error: f64,
    pub l1_error: Option<f64>,
    pub max_dev: Option<f64>,
    pub trace: Option<TraceCheck>,
    pub product_trace_defect: Option<f64>,
    pub ks: Option<f64>,
    pub levy: Option<f64>,
    pub counting: Vec<CountingPoint>,
    pub offdiag_fraction: Option<f64>,
}

impl SweepRow {
    /// Every present diagnostic as `(name, value)`.
    pub fn diagnostics(&self) -> Vec<(String, f64)> {
        let mut out = vec![("dim_mass_error".to_string(), self.dim_mass_error)];
        let mut push = |n: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push((n.to_string(), v));
            }
        };
        push("l1_error", self.l1_error);
        push("max_dev", self.max_dev);
        push("trace_error", self.trace.map(|t| t.error()));
        push("trace_route_gap", self.trace.map(|t| t.route_gap()));
        push("product_trace_defect", self.product_trace_defect);
        push("ks", self.ks);
        push("levy", self.levy);
        push("offdiag_fraction", self.offdiag_fraction);
        for c in &self.counting {
            out.push((format!("counting_error[{}]", c.gamma), c.error()));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub geometry: String,
    pub q: usize,
    pub resolution: Resolution,
    pub rows: Vec<SweepRow>,
    /// Empirical rates: power laws in `k` except `offdiag_fraction`, which is
    /// fitted as `exp(slope·k)`.
    pub fits: BTreeMap<String, RateFit>,
}

impl SweepReport {
    pub fn ks(&self) -> Vec<u32> {
        self.rows.iter().map(|r| r.k).collect()
    }

    /// Values of one diagnostic column, in row order.
    pub fn column(&self, name: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.diagnostics().into_iter().find(|(n, _)| n == name).map(|(_, v)| v))
            .collect()
    }

    /// Every diagnostic is finite and nonnegative and every dimension matches.
    pub fn is_consistent(&self) -> bool {
        self.rows.iter().all(|r| r.dim == r.dim_oracle && r.diagnostics().iter().all(|(_, v)| v.is_finite() && *v >= 0.0))
    }
}

/// Runs every requested diagnostic for each `k`; per-k work runs in parallel
/// and rows come back in `ks` order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let grid = crate::geometry::build_grid(&cfg.geom, cfg.resolution)?;
    let limit = limit_density(&cfg.geom, &grid, cfg.q);
    let mass = classify(&cfg.geom, &grid).mass(Stratum::Index(cfg.q));
    let f = cfg.symbol.sample(&grid)?;
    let g = cfg.second.as_ref().map(|s| s.sample(&grid)).transpose()?;
    let pairs = cfg.experiments.kernel.then(|| sample_pairs(&grid, PAIR_BUDGET, cfg.seed));
    let ctx = RowContext { cfg, grid: &grid, limit: &limit, mass, f: &f, g: g.as_ref(), pairs: pairs.as_ref() };
    let rows = cfg.ks.par_iter().map(|&k| ctx.row(k)).collect::<Result<Vec<_>>>()?;
    let mut report = SweepReport { geometry: cfg.geom.name(), q: cfg.q, resolution: cfg.resolution, rows, fits: BTreeMap::new() };
    let ks = report.ks();
    let names: Vec<String> = report.rows.first().map(|r| r.diagnostics().into_iter().map(|(n, _)| n).collect()).unwrap_or_default();
    for name in names {
        let col = report.column(&name);
        if col.len() != ks.len() {
            continue;
        }
        let fit = if name == "offdiag_fraction" { fit_exponential(&ks, &col) } else { fit_rate(&ks, &col) };
        if let Ok(fit) = fit {
            report.fits.insert(name, fit);
        }
    }
    Ok(report)
}

struct RowContext<'a> {
    cfg: &'a SweepConfig,
    grid: &'a QuadratureGrid,
    limit: &'a [f64],
    mass: f64,
    f: &'a SuperSymbol,
    g: Option<&'a SuperSymbol>,
    pairs: Option<&'a PairSample>,
}

impl RowContext<'_> {
    fn row(&self, k: u32) -> Result<SweepRow> {
        let cfg = self.cfg;
        let space = build_space_on(&cfg.geom, k, cfg.q, self.grid)?;
        let dim_oracle = expected_dim(&cfg.geom, k, cfg.q).unwrap_or(usize::MAX);
        let s = kn(&space);
        let mut row = SweepRow {
            k,
            dim: space.dim,
            dim_oracle,
            dim_mass_error: (space.dim as f64 / s - self.mass).abs(),
            l1_error: None,
            max_dev: None,
            trace: None,
            product_trace_defect: None,
            ks: None,
            levy: None,
            counting: vec![],
            offdiag_fraction: None,
        };
        let ex = cfg.experiments;
        if ex.bergman {
            row.l1_error = Some(l1_bergman_error(&space, self.limit));
            row.max_dev = Some(max_bergman_deviation(&space, self.limit));
        }
        if ex.kernel {
            row.offdiag_fraction = self.pairs.map(|p| offdiagonal_fraction(&space, p, cfg.delta));
        }
        if (ex.trace || ex.spectrum) && space.dim > 0 {
            let tf = toeplitz::assemble_super(&space, self.f, "f")?;
            let f_chi = toeplitz::reduced_symbol(&space, self.f)?;
            let sm = toeplitz::spectrum(&tf, space.n())?;
            if ex.trace {
                row.trace = Some(trace_check(&space, &sm, &f_chi, self.limit));
                let (tg, g_chi) = match self.g {
                    Some(g) => (toeplitz::assemble_super(&space, g, "g")?, toeplitz::reduced_symbol(&space, g)?),
                    None => (tf.clone(), f_chi.clone()),
                };
                row.product_trace_defect = Some(product_trace_defect(&space, &tf, &tg, &f_chi, &g_chi)?);
            }
            if ex.spectrum {
                let push = toeplitz::pushforward_cdf(&space, &f_chi);
                if push.total > 0.0 {
                    row.ks = Some(spectral_pushforward_test(&sm, &push)?);
                    row.levy = Some(toeplitz::levy_distance(&sm, &push)?);
                }
                row.counting = counting_convergence(&sm, &push, &cfg.gammas);
            }
        }
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, default_grid, t_max};
    use crate::spaces::build_space;
    use crate::symbol::Expr;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fs() -> ModelGeometry {
        build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap()
    }

    #[test]
    fn fits_exact_lines() {
        let ks: Vec<u32> = (4..=40).step_by(2).collect();
        let a: Vec<f64> = ks.iter().map(|&k| 1.0 / k as f64).collect();
        let b: Vec<f64> = ks.iter().map(|&k| 5.0 / (k as f64).powi(2)).collect();
        let fa = fit_rate(&ks, &a).unwrap();
        let fb = fit_rate(&ks, &b).unwrap();
        assert_relative_eq!(fa.slope, -1.0, epsilon = 1e-12);
        assert_relative_eq!(fb.slope, -2.0, epsilon = 1e-12);
        assert_relative_eq!(fb.constant, 5.0, epsilon = 1e-10);
        let c: Vec<f64> = ks.iter().map(|&k| 3.0 * (-0.2 * k as f64).exp()).collect();
        let fc = fit_exponential(&ks, &c).unwrap();
        assert_relative_eq!(fc.slope, -0.2, epsilon = 1e-12);
        assert_relative_eq!(fc.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rejects_bad_series() {
        assert!(fit_rate(&[1, 2, 3], &[1.0, 0.5, 0.3]).is_err());
        assert!(fit_rate(&[1, 2, 3, 4], &[1.0, 0.0, 0.3, 0.2]).is_err());
        assert!(fit_rate(&[1, 2, 3, 4], &[1.0, -0.1, 0.3, 0.2]).is_err());
    }

    #[test]
    fn fs_l1_error_is_one_over_k() {
        let g = fs();
        let grid = default_grid(&g);
        let limit = limit_density(&g, &grid, 0);
        let ks: Vec<u32> = (4..=40).step_by(4).collect();
        let errs: Vec<f64> = ks
            .iter()
            .map(|&k| l1_bergman_error(&build_space_on(&g, k, 0, &grid).unwrap(), &limit))
            .collect();
        for (k, e) in ks.iter().zip(&errs) {
            assert!((e * *k as f64 - 1.0).abs() < 1e-8, "k={k} {e}");
        }
        assert!((fit_rate(&ks, &errs).unwrap().slope + 1.0).abs() < 0.05);
    }

    #[test]
    fn neg_l1_error_is_one_over_k() {
        let g = build_geometry(GeometryKind::NegCp1 { m: 1 }).unwrap();
        let grid = default_grid(&g);
        let limit = limit_density(&g, &grid, 1);
        for k in [4u32, 11, 30] {
            let e = l1_bergman_error(&build_space_on(&g, k, 1, &grid).unwrap(), &limit);
            assert!((e * k as f64 - 1.0).abs() < 1e-8, "k={k} {e}");
        }
    }

    #[test]
    fn perturbed_error_decreases() {
        let g = build_geometry(GeometryKind::PerturbedCp1 { d: 1, t: t_max(1) }).unwrap();
        let grid = default_grid(&g);
        let limit = limit_density(&g, &grid, 0);
        let errs: Vec<f64> = (4..=40)
            .step_by(6)
            .map(|k| l1_bergman_error(&build_space_on(&g, k, 0, &grid).unwrap(), &limit))
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn dimension_oracles() {
        let p = build_geometry(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 }).unwrap();
        assert_eq!(expected_dim(&p, 12, 1), Some(143));
        assert_eq!(expected_dim(&p, 12, 0), None);
        let n = build_geometry(GeometryKind::NegCp1 { m: 1 }).unwrap();
        assert_eq!(expected_dim(&n, 1, 1), Some(0));
        assert_eq!(expected_dim(&fs(), 7, 0), Some(8));
    }

    #[test]
    fn offdiagonal_trivial_limits() {
        let g = fs();
        let s = build_space(&g, 10, 0, Resolution::default_for(&g)).unwrap();
        let pairs = sample_pairs(&s.grid, 4000, 3);
        // at δ = 0 the estimator sees all pairs; exact mean is 1
        let all = offdiagonal_fraction(&s, &pairs, -1.0);
        assert!((all - 1.0).abs() < 0.05, "{all}");
        assert_eq!(offdiagonal_fraction(&s, &pairs, PI + 0.1), 0.0);
        let near = offdiagonal_fraction(&s, &pairs, 3.0);
        assert!(near < 1e-6);
    }

    #[test]
    fn offdiagonal_fraction_fs_formula() {
        // exact: cos^{2(k+1)}(δ/2)
        let g = fs();
        let s = build_space(&g, 20, 0, Resolution::default_for(&g)).unwrap();
        let pairs = sample_pairs(&s.grid, PAIR_BUDGET, 1);
        let f = offdiagonal_fraction(&s, &pairs, 0.5);
        let exact = 0.25f64.cos().powi(42);
        assert!((f / exact - 1.0).abs() < 0.1, "{f} {exact}");
    }

    #[test]
    fn constant_symbol_trace_and_defect() {
        let g = fs();
        let mut cfg = SweepConfig::new(g, 0, SuperSymbolSpec::scalar(Expr::constant(0.7, 1)));
        cfg.ks = vec![4, 8, 12, 16];
        cfg.experiments.kernel = false;
        cfg.gammas = vec![0.8];
        let r = run_sweep(&cfg).unwrap();
        assert!(r.is_consistent());
        for row in &r.rows {
            assert!(row.product_trace_defect.unwrap() < 1e-10);
            assert!(row.ks.unwrap() < 1e-12);
            assert!(row.trace.unwrap().route_gap() < 1e-10);
            // γ above the constant: no eigenvalue, no mass
            assert_eq!(row.counting[0].scaled_count, 0.0);
            assert_eq!(row.counting[0].limit_mass, 0.0);
        }
    }

    #[test]
    fn hemisphere_counting_matches_incomplete_beta() {
        // T_{1_{|z|≤1}} is diagonal with τ_j = I_{1/2}(j+1, k−j+1)
        let g = fs();
        let s = build_space(&g, 20, 0, Resolution::default_for(&g)).unwrap();
        let f = Expr::parse("hemisphere(1)", 1).unwrap().sample(&s.grid).unwrap();
        let sm = toeplitz::spectrum(&toeplitz::assemble(&s, &f, "h").unwrap(), 1).unwrap();
        let mut tau: Vec<f64> = (0..=20).map(|j| statrs::function::beta::beta_reg(j as f64 + 1.0, 21.0 - j as f64, 0.5)).collect();
        tau.sort_by(f64::total_cmp);
        for (a, b) in sm.eigs.iter().zip(&tau) {
            assert!((a - b).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn concentration_on_hemisphere() {
        let g = fs();
        let grid = default_grid(&g);
        let f = Expr::parse("hemisphere(1)", 1).unwrap().sample(&grid).unwrap();
        for k in [6u32, 12, 20] {
            let s = build_space_on(&g, k, 0, &grid).unwrap();
            let r = concentration_subspace(&s, &f, 0.1, 50, 5).unwrap();
            assert!(r.dim as f64 >= r.required - 1e-8, "{r:?}");
            assert!(r.worst_mass >= 0.9 - 1e-8, "{r:?}");
        }
    }

    #[test]
    fn concentration_shortfall_grows_like_sqrt_k() {
        // the eigenvalue transition has width ~√k, so the 2/k allowance is
        // exhausted past k = 20
        let g = fs();
        let grid = default_grid(&g);
        let f = Expr::parse("hemisphere(1)", 1).unwrap().sample(&grid).unwrap();
        for k in [22u32, 40, 60] {
            let s = build_space_on(&g, k, 0, &grid).unwrap();
            let r = concentration_subspace(&s, &f, 0.1, 10, 5).unwrap();
            let short = r.required - r.dim as f64;
            assert!(short > 0.0 && short < (k as f64).sqrt(), "{r:?}");
            assert!(r.worst_mass >= 0.9 - 1e-8);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let g = fs();
        let mut cfg = SweepConfig::new(g, 0, SuperSymbolSpec::scalar(Expr::parse("x3(1) + x1(1)^2", 1).unwrap()));
        cfg.ks = vec![4, 9, 15, 22];
        let a = run_sweep(&cfg).unwrap();
        let b = run_sweep(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.is_consistent());
        assert!(a.fits.contains_key("l1_error"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn power_law_slope_recovered(p in -3.0f64..-0.1, c in 0.01f64..100.0) {
            let ks: Vec<u32> = (2..=30).collect();
            let e: Vec<f64> = ks.iter().map(|&k| c * (k as f64).powf(p)).collect();
            let f = fit_rate(&ks, &e).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-10);
            prop_assert!((f.constant / c - 1.0).abs() < 1e-9);
        }
    }
}
