//! Gauss–Legendre nodes and the chart partition of unity.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm1) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        if 2 * i + 1 == n {
            // the middle node of an odd rule is exactly 0
            z = 0.0;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
    let (x, w) = gauss_legendre(n);
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    x.into_iter().zip(w).map(move |(xi, wi)| (mid + half * xi, half * wi))
}

/// Degree-9 smoothstep on `[0, 1]`, `C⁴` at both ends, with `s(x) + s(1-x) = 1`.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    x.powi(5) * (126.0 + x * (-420.0 + x * (540.0 + x * (-315.0 + x * 70.0))))
}

/// Inner radius of the ramp (`|z| ≤ R_IN` belongs to one chart only).
pub const R_IN: f64 = 0.5;
/// Outer radius of the ramp (the chart cutoff is supported on `|z| < R_OUT`).
pub const R_OUT: f64 = 2.0;

/// Partition-of-unity weight of a chart at chart radius `r`.
///
/// The ramp is a smoothstep in `log₂ r` running from 1 at `r = 1/2` to 0 at
/// `r = 2`. Since `chart_cutoff(r) + chart_cutoff(1/r) = 1`, the same profile
/// serves both charts.
pub fn chart_cutoff(r: f64) -> f64 {
    if r <= R_IN {
        return 1.0;
    }
    if r >= R_OUT {
        return 0.0;
    }
    let s = r.log2(); // in (-1, 1)
    // evaluate on the side where the ramp is small to avoid cancellation
    if s <= 0.0 {
        1.0 - smoothstep((1.0 + s) / 2.0)
    } else {
        smoothstep((1.0 - s) / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for n in [1usize, 2, 5, 12, 40] {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} {q} {exact}");
            }
        }
    }

    #[test]
    fn cutoff_is_partition_of_unity() {
        for i in 1..400 {
            let r = 0.01 * i as f64;
            let s = chart_cutoff(r) + chart_cutoff(1.0 / r);
            assert!((s - 1.0).abs() < 1e-14, "r={r}");
        }
        assert_eq!(chart_cutoff(0.3), 1.0);
        assert_eq!(chart_cutoff(2.5), 0.0);
    }
}
