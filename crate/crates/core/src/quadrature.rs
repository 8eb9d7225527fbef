//! Numerical integration: a globally adaptive 15-point Gauss–Kronrod rule
//! for vector-valued integrands, and Gauss–Hermite rules for expectations
//! under a standard normal.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::error::{Error, Result};

// Kronrod abscissae on [0, 1]; odd indices are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
    depth: u32,
    score: f64,
}

impl<const K: usize> PartialEq for Panel<K> {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score
    }
}
impl<const K: usize> Eq for Panel<K> {}
impl<const K: usize> PartialOrd for Panel<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Panel<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score)
    }
}

fn gk15<const K: usize, F: FnMut(f64) -> [f64; K]>(f: &mut F, a: f64, b: f64) -> ([f64; K], [f64; K]) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    let mut fvals = [[0.0; K]; 15];
    fvals[7] = fc;
    for k in 0..K {
        kron[k] = WGK[7] * fc[k];
        gauss[k] = WG[3] * fc[k];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fvals[j] = f1;
        fvals[14 - j] = f2;
        for k in 0..K {
            kron[k] += WGK[j] * (f1[k] + f2[k]);
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * (f1[k] + f2[k]);
            }
        }
    }
    let mut err = [0.0; K];
    for k in 0..K {
        let mean = 0.5 * kron[k];
        let mut resasc = WGK[7] * (fc[k] - mean).abs();
        for j in 0..7 {
            resasc += WGK[j] * ((fvals[j][k] - mean).abs() + (fvals[14 - j][k] - mean).abs());
        }
        resasc *= half.abs();
        let raw = ((kron[k] - gauss[k]) * half).abs();
        err[k] = if resasc > 0.0 && raw > 0.0 {
            resasc * (200.0 * raw / resasc).powf(1.5).min(1.0)
        } else {
            raw
        };
        kron[k] *= half;
        if !kron[k].is_finite() {
            err[k] = f64::INFINITY;
        }
    }
    (kron, err)
}

/// Globally adaptive Gauss–Kronrod integrator.
///
/// An integral is accepted when, for every component, the summed error
/// estimate is at most `max(abs_tol, rel_tol * |value|)`. Fails when a panel
/// that still needs splitting has already been bisected `max_depth` times.
#[derive(Debug, Clone, Copy)]
pub struct Integrator {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: u32,
    pub initial_panels: usize,
    pub max_panels: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 0.0, max_depth: 20, initial_panels: 1, max_panels: 4096 }
    }
}

/// Value and error estimate of an adaptive integral.
#[derive(Debug, Clone, Copy)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
}

impl Integrator {
    pub fn integrate<const K: usize, F>(&self, mut f: F, a: f64, b: f64) -> Result<Estimate<K>>
    where
        F: FnMut(f64) -> [f64; K],
    {
        let fail = || Error::Quadrature { rel_tol: self.rel_tol, max_refinements: self.max_depth, lo: a, hi: b };
        if a == b {
            return Ok(Estimate { value: [0.0; K], error: [0.0; K] });
        }
        let panels = self.initial_panels.max(1);
        let mut heap = BinaryHeap::new();
        let mut total = [0.0; K];
        let mut total_err = [0.0; K];
        for i in 0..panels {
            let lo = a + (b - a) * i as f64 / panels as f64;
            let hi = if i + 1 == panels { b } else { a + (b - a) * (i + 1) as f64 / panels as f64 };
            let (v, e) = gk15(&mut f, lo, hi);
            for k in 0..K {
                total[k] += v[k];
                total_err[k] += e[k];
            }
            heap.push(Panel { a: lo, b: hi, value: v, error: e, depth: 0, score: 0.0 });
        }
        let mut count = panels;
        loop {
            let tol: [f64; K] = std::array::from_fn(|k| self.abs_tol.max(self.rel_tol * total[k].abs()));
            if (0..K).any(|k| !total[k].is_finite()) {
                return Err(fail());
            }
            if (0..K).all(|k| total_err[k] <= tol[k]) {
                return Ok(Estimate { value: total, error: total_err });
            }
            // Re-score against the current tolerance so the worst panel is split next.
            let mut all: Vec<Panel<K>> = heap.drain().collect();
            for p in &mut all {
                p.score = (0..K)
                    .map(|k| if tol[k] > 0.0 { p.error[k] / tol[k] } else { p.error[k] * f64::MAX.sqrt() })
                    .fold(0.0, f64::max);
            }
            heap.extend(all);
            let worst = heap.pop().expect("at least one panel");
            if worst.depth >= self.max_depth || count >= self.max_panels {
                return Err(fail());
            }
            let mid = 0.5 * (worst.a + worst.b);
            let (v1, e1) = gk15(&mut f, worst.a, mid);
            let (v2, e2) = gk15(&mut f, mid, worst.b);
            for k in 0..K {
                total[k] += v1[k] + v2[k] - worst.value[k];
                total_err[k] += e1[k] + e2[k] - worst.error[k];
            }
            let depth = worst.depth + 1;
            heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1, depth, score: 0.0 });
            heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2, depth, score: 0.0 });
            count += 1;
        }
    }

    pub fn integrate_scalar<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<f64> {
        Ok(self.integrate(|x| [f(x)], a, b)?.value[0])
    }
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the standard
/// normal: `E[g(Z)] ~ sum w_i g(x_i)` with `sum w_i = 1`.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    // Newton iteration on orthonormal Hermite polynomials (physicists' weight).
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z: f64 = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let nodes = x.iter().rev().map(|v| v * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().rev().map(|v| v / sqrt_pi).collect();
    (nodes, weights)
}
