//! Invariants of the finite-sample density and its bias/variance surface.

use rand::Rng;
use tailgauge::bias::log_residuals;
use tailgauge::density::{default_n_grid, default_xi_grid, regression_xi_grid};
use tailgauge::simulation::stream_rng;
use tailgauge::{
    bias_variance_surface, density, fit_bias_law, stats, stats_by_quadrature, BiasSurface, ConfidenceLevel,
    DensitySpec, Error,
};

fn level() -> ConfidenceLevel {
    ConfidenceLevel::new(0.999).unwrap()
}

fn default_surface() -> BiasSurface {
    bias_variance_surface(&default_n_grid(), &default_xi_grid(), level(), 1.0).unwrap()
}

fn column(surface: &BiasSurface, xi: f64) -> Vec<(f64, f64, f64)> {
    surface
        .rows
        .iter()
        .filter(|r| r.xi == xi)
        .map(|r| (r.n as f64, r.bias, r.variance))
        .collect()
}

/// Slope and max residual of the least-squares line through `(x, y)`.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let resid = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).abs()).fold(0.0, f64::max);
    (slope, resid)
}

#[test]
fn hermite_moments_match_direct_quadrature_on_random_specs() {
    let mut rng = stream_rng(12, 0);
    for _ in 0..12 {
        let n = rng.random_range(50..2000);
        let alpha = 1.0 - 10f64.powf(rng.random_range(-3.5..-1.0));
        let sigma = 10f64.powf(rng.random_range(-1.0..1.0));
        let xi = rng.random_range(0.0..0.5);
        let spec = DensitySpec::new(n, ConfidenceLevel::new(alpha).unwrap(), sigma, xi).unwrap();
        let tol = 10.0 * spec.quadrature().rel_tol;
        let (h, q) = (stats(&spec).unwrap(), stats_by_quadrature(&spec).unwrap());
        let ctx = format!("n = {n}, alpha = {alpha}, sigma = {sigma}, xi = {xi}");
        assert!(((h.mean - q.mean) / q.mean).abs() < tol, "mean {} vs {} ({ctx})", h.mean, q.mean);
        assert!(((h.variance - q.variance) / q.variance).abs() < tol, "var {} vs {} ({ctx})", h.variance, q.variance);
        assert!(q.normalization_defect < tol, "mass defect {} ({ctx})", q.normalization_defect);
        assert!(h.normalization_defect < tol);
        assert_eq!(h.bias, h.mean - h.true_quantile);
    }
}

#[test]
fn density_is_nonnegative() {
    for (n, xi) in [(50, 0.0), (100, 0.25), (1000, 0.5)] {
        let spec = DensitySpec::new(n, level(), 1.0, xi).unwrap();
        for k in -200..=800 {
            let f = density(&spec, k as f64 * 0.1).unwrap();
            assert!(f >= 0.0 && f.is_finite());
        }
    }
}

#[test]
fn surface_is_row_major_and_deterministic() {
    let n = [50, 200, 800];
    let xi = [0.0, 0.2, 0.4];
    let a = bias_variance_surface(&n, &xi, level(), 1.0).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| bias_variance_surface(&n, &xi, level(), 1.0).unwrap());
    assert_eq!(a, b);
    let order: Vec<(u64, f64)> = a.rows.iter().map(|r| (r.n, r.xi)).collect();
    let want: Vec<(u64, f64)> = n.iter().flat_map(|&n| xi.iter().map(move |&x| (n, x))).collect();
    assert_eq!(order, want);
}

#[test]
fn surface_monotone_and_positive() {
    let s = default_surface();
    assert_eq!(s.rows.len(), 120);
    assert!(s.rows.iter().all(|r| r.bias > 0.0 && r.variance > 0.0));
    for &xi in &default_xi_grid() {
        let col = column(&s, xi);
        assert!(col.windows(2).all(|w| w[1].1 < w[0].1), "bias not decreasing in n at xi = {xi}");
        assert!(col.windows(2).all(|w| w[1].2 < w[0].2), "variance not decreasing in n at xi = {xi}");
    }
    for row in s.rows.chunks(default_xi_grid().len()) {
        assert!(row.windows(2).all(|w| w[1].bias > w[0].bias), "bias not increasing in xi at n = {}", row[0].n);
        assert!(row.windows(2).all(|w| w[1].variance > w[0].variance));
    }
}

#[test]
fn bias_is_log_linear_in_n_per_shape() {
    let s = default_surface();
    let mut report = Vec::new();
    for &xi in &default_xi_grid() {
        let pts: Vec<(f64, f64)> = column(&s, xi).iter().map(|c| (c.0.ln(), c.1.ln())).collect();
        let (slope, resid) = line_fit(&pts);
        println!("xi = {xi}: slope {slope:.4}, max residual {resid:.4}");
        if resid >= 0.02 || (slope + 1.007).abs() > 0.05 {
            report.push(format!("xi = {xi}: slope {slope:.4}, residual {resid:.4}"));
        }
    }
    assert!(report.is_empty(), "log-log fit outside (slope -1.007 +- 0.05, residual < 0.02): {report:?}");
}

#[test]
fn variance_steepens_at_small_n() {
    let level = level();
    let var = |n, xi| stats(&DensitySpec::new(n, level, 1.0, xi).unwrap()).unwrap().variance;
    for xi in [0.3, 0.4, 0.5] {
        let small = (var(100, xi) / var(50, xi)).ln() / 2f64.ln();
        let large = (var(1000, xi) / var(500, xi)).ln() / 2f64.ln();
        assert!(small < large, "xi = {xi}: slope {small} at 50..100 vs {large} at 500..1000");
    }
}

#[test]
fn estimator_concentrates_at_true_quantile() {
    let st: Vec<_> = [100, 1000, 10_000]
        .iter()
        .map(|&n| stats(&DensitySpec::new(n, level(), 1.0, 0.25).unwrap()).unwrap())
        .collect();
    assert!(st.windows(2).all(|w| w[1].bias < w[0].bias && w[1].variance < w[0].variance));
    assert!(st[2].bias > 0.0 && st[2].bias < 0.03, "{}", st[2].bias);
    assert!((st[2].mean - st[2].true_quantile).abs() < 0.05);
}

#[test]
fn regression_on_computed_surface() {
    let s = bias_variance_surface(&default_n_grid(), &regression_xi_grid(), level(), 1.0).unwrap();
    let p = fit_bias_law(&s).unwrap();
    assert!(p.a1 < 0.0 && p.a2 > 0.0 && p.a3 > 0.0);
    let worst = log_residuals(&p, &s).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    println!("fitted {p:?}, max |log residual| {worst:.4}");
    assert!(worst < 0.05, "max |ln B - fit| = {worst}");
}

#[test]
fn out_of_region_cell_carries_coordinates() {
    let err = bias_variance_surface(&[30, 100], &[0.1], level(), 1.0).unwrap_err();
    assert!(matches!(err, Error::GridCell { n: 30, .. }), "{err}");
}
