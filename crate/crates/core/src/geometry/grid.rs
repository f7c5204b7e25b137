//! Quadrature grids on `CP¹` and `CP¹ × CP¹`.
//!
//! Per factor: in each chart a product rule in polar coordinates, Gauss–Legendre
//! in `t = r²` on panels `[0, ¼] ∪ [¼, 1] ∪ [1, 4]` (plus the bump support
//! ends and a panel centred on the critical circle for perturbed factors)
//! and the uniform trapezoid rule in angle. The chart cutoff of
//! [`super::quadrature::chart_cutoff`] is folded into the weights. Product grids are tensor products and are never materialised.

use super::quadrature::{chart_cutoff, gauss_legendre_on};
use super::{Chart, FactorPoint, LineFactor, ModelGeometry, Point};
use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Node counts of a factor rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    /// Gauss–Legendre nodes per radial panel.
    pub nodes_per_panel: usize,
    /// Trapezoid nodes in angle.
    pub angular: usize,
}

impl Resolution {
    pub const MIN_NODES_PER_PANEL: usize = 4;
    pub const MIN_ANGULAR: usize = 4;

    /// Default for the curve geometries (`k ≤ 60`).
    pub const CURVE: Resolution = Resolution { nodes_per_panel: 20, angular: 72 };
    /// Default per factor of the product (`k ≤ 12`).
    pub const PRODUCT: Resolution = Resolution { nodes_per_panel: 12, angular: 16 };

    pub fn default_for(geom: &ModelGeometry) -> Resolution {
        if geom.n == 1 {
            Resolution::CURVE
        } else {
            Resolution::PRODUCT
        }
    }
}

/// Nodes and weights of one `CP¹` factor.
#[derive(Clone, Debug)]
pub struct FactorGrid {
    pub nodes: Vec<FactorPoint>,
    pub weights: Vec<f64>,
}

impl FactorGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Factor rule for one line factor.
    pub fn build(factor: &LineFactor, res: Resolution) -> FactorGrid {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for chart in [Chart::North, Chart::South] {
            let (breaks, centre) = panel_breaks(factor, chart);
            for win in breaks.windows(2) {
                let odd = centre.is_some_and(|c| c > win[0] && c < win[1]);
                let m = if odd { res.nodes_per_panel | 1 } else { res.nodes_per_panel };
                for (t, wt) in gauss_legendre_on(m, win[0], win[1]) {
                    let r = t.sqrt();
                    let cut = chart_cutoff(r);
                    // ω = (1+t)^{-2} r dr dθ = ½(1+t)^{-2} dt dθ
                    let radial = wt * cut * 0.5 / ((1.0 + t) * (1.0 + t));
                    for a in 0..res.angular {
                        let th = 2.0 * PI * (a as f64 + 0.5) / res.angular as f64;
                        nodes.push(FactorPoint { chart, coord: C64::from_polar(r, th) });
                        weights.push(radial * 2.0 * PI / res.angular as f64);
                    }
                }
            }
        }
        FactorGrid { nodes, weights }
    }
}

/// Radial panel breaks in `t = |coord|²` for one chart, and the centre of
/// the panel around the critical circle of a perturbed factor.
fn panel_breaks(factor: &LineFactor, chart: Chart) -> (Vec<f64>, Option<f64>) {
    let rin = super::quadrature::R_IN;
    let rout = super::quadrature::R_OUT;
    let mut b = vec![0.0, rin * rin, 1.0, rout * rout];
    let mut centre = None;
    if factor.is_perturbed() {
        let (lo, hi) = factor.bump.support();
        let u = factor.bump.critical_point().0;
        let (extra, t) = match chart {
            Chart::North => ([lo, hi], u),
            Chart::South => ([1.0 / hi, 1.0 / lo], 1.0 / u),
        };
        for e in extra {
            if e > 0.0 && e < rout * rout {
                b.push(e);
            }
        }
        // a symmetric panel with an odd rule puts one node ring on the
        // circle where the curvature of the extremal perturbation vanishes
        let h = 0.5 * b.iter().map(|x| (x - t).abs()).fold(f64::INFINITY, f64::min);
        b.extend([t - h, t + h]);
        centre = Some(t);
    }
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-14);
    (b, centre)
}

/// Tensor-product quadrature grid over all factors.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub n: usize,
    pub factors: Vec<FactorGrid>,
    pub resolution: Resolution,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.factors.iter().map(FactorGrid::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-factor node indices of flat node `i` (row-major, last factor fastest).
    #[inline]
    pub fn factor_indices(&self, i: usize) -> [usize; 2] {
        if self.n == 1 {
            [i, 0]
        } else {
            let n2 = self.factors[1].len();
            [i / n2, i % n2]
        }
    }

    pub fn node(&self, i: usize) -> Point {
        let idx = self.factor_indices(i);
        if self.n == 1 {
            Point::curve(self.factors[0].nodes[idx[0]])
        } else {
            Point::product(self.factors[0].nodes[idx[0]], self.factors[1].nodes[idx[1]])
        }
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        let idx = self.factor_indices(i);
        (0..self.n).map(|f| self.factors[f].weights[idx[f]]).product()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    /// `Σ w_i h(x_i)` with a deterministic chunked reduction.
    pub fn integrate<F: Fn(usize) -> f64 + Sync>(&self, h: F) -> f64 {
        use rayon::prelude::*;
        let len = self.len();
        let partial: Vec<f64> = (0..len.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(len);
                (lo..hi).map(|i| self.weight(i) * h(i)).sum::<f64>()
            })
            .collect();
        partial.iter().sum()
    }
}

/// Chunk size of deterministic parallel reductions over grid nodes.
pub const CHUNK: usize = 4096;

/// Builds the quadrature grid of a geometry.
pub fn build_grid(geom: &ModelGeometry, res: Resolution) -> Result<QuadratureGrid> {
    if res.nodes_per_panel < Resolution::MIN_NODES_PER_PANEL || res.angular < Resolution::MIN_ANGULAR {
        return Err(Error::ResolutionTooLow(format!(
            "{res:?}; minimum is {} nodes per panel and {} angular nodes",
            Resolution::MIN_NODES_PER_PANEL,
            Resolution::MIN_ANGULAR
        )));
    }
    let factors = geom.factors.iter().map(|f| FactorGrid::build(f, res)).collect();
    Ok(QuadratureGrid { n: geom.n, factors, resolution: res })
}

/// Grid at the geometry's default resolution.
pub fn default_grid(geom: &ModelGeometry) -> QuadratureGrid {
    build_grid(geom, Resolution::default_for(geom)).expect("default resolution is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_geometry, t_max, GeometryKind};

    #[test]
    fn weights_positive_and_volume() {
        for kind in [GeometryKind::FsCp1 { d: 1 }, GeometryKind::PerturbedCp1 { d: 1, t: t_max(1) }] {
            let g = build_geometry(kind).unwrap();
            let grid = default_grid(&g);
            assert!(grid.factors[0].weights.iter().all(|&w| w > 0.0));
            let vol: f64 = grid.integrate(|_| 1.0);
            assert!((vol - PI).abs() / PI < 1e-10, "{vol}");
        }
        let g = build_geometry(GeometryKind::ProductCp1xCp1 { a: 1, b: 1 }).unwrap();
        let grid = default_grid(&g);
        let vol = grid.integrate(|_| 1.0);
        // coarser product rule
        assert!((vol - PI * PI).abs() / (PI * PI) < 1e-9, "{vol}");
    }

    #[test]
    fn radial_moment() {
        // ∫ |z|²(1+|z|²)^{-3} ω = π·B(2, 3) = π/12
        let g = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        let grid = default_grid(&g);
        let val = grid.integrate(|i| {
            let u = grid.node(i).factor(0).u();
            if u.is_infinite() {
                0.0
            } else {
                u / (1.0 + u).powi(3)
            }
        });
        assert!((val - PI / 12.0).abs() / (PI / 12.0) < 1e-10, "{val}");
    }

    #[test]
    fn resolution_minimum_enforced() {
        let g = build_geometry(GeometryKind::FsCp1 { d: 1 }).unwrap();
        assert!(matches!(
            build_grid(&g, Resolution { nodes_per_panel: 2, angular: 8 }),
            Err(Error::ResolutionTooLow(_))
        ));
    }
}
