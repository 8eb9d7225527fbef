//! Small derivative-free minimizers used by the likelihood fitter.

/// Outcome of a minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<const D: usize> {
    pub x: [f64; D],
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Brent's parabolic/golden-section minimizer on `[a, b]`.
///
/// `f` may return `+inf` for infeasible points; such points are never
/// accepted as the running best.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Minimum<1> {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            return Minimum { x: [x], f: fx, iterations: iter, converged: true };
        }
        let mut golden = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum { x: [x], f: fx, iterations: max_iter, converged: false }
}

/// Nelder–Mead simplex minimizer.
///
/// Stops when the spread of function values across the simplex falls below
/// `f_tol`, or when the simplex has collapsed below `x_tol` in every
/// coordinate. `converged` is false only when `max_iter` is exhausted.
#[derive(Debug, Clone, Copy)]
pub struct NelderMead {
    pub f_tol: f64,
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { f_tol: 1e-10, x_tol: 1e-12, max_iter: 10_000 }
    }
}

impl NelderMead {
    pub fn minimize<const D: usize, F>(&self, mut f: F, start: [f64; D], step: [f64; D]) -> Minimum<D>
    where
        F: FnMut(&[f64; D]) -> f64,
    {
        // Standard coefficients: reflection, expansion, contraction, shrink.
        const ALPHA: f64 = 1.0;
        const GAMMA: f64 = 2.0;
        const RHO: f64 = 0.5;
        const SHRINK: f64 = 0.5;

        let mut simplex: Vec<([f64; D], f64)> = Vec::with_capacity(D + 1);
        simplex.push((start, f(&start)));
        for i in 0..D {
            let mut x = start;
            x[i] += step[i];
            let fx = f(&x);
            simplex.push((x, fx));
        }

        let mut iter = 0;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (best, worst) = (simplex[0].1, simplex[D].1);
            let spread = worst - best;
            let collapsed = (0..D).all(|j| {
                simplex.iter().all(|(x, _)| (x[j] - simplex[0].0[j]).abs() <= self.x_tol * (1.0 + simplex[0].0[j].abs()))
            });
            if (best.is_finite() && spread <= self.f_tol) || collapsed {
                return Minimum { x: simplex[0].0, f: best, iterations: iter, converged: true };
            }
            if iter >= self.max_iter {
                return Minimum { x: simplex[0].0, f: best, iterations: iter, converged: false };
            }
            iter += 1;

            let mut centroid = [0.0; D];
            for (x, _) in &simplex[..D] {
                for j in 0..D {
                    centroid[j] += x[j] / D as f64;
                }
            }
            let toward = |coef: f64, from: &[f64; D]| {
                let mut y = [0.0; D];
                for j in 0..D {
                    y[j] = centroid[j] + coef * (from[j] - centroid[j]);
                }
                y
            };

            let worst_x = simplex[D].0;
            let xr = toward(-ALPHA, &worst_x);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = toward(-GAMMA, &worst_x);
                let fe = f(&xe);
                simplex[D] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[D - 1].1 {
                simplex[D] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[D].1 {
                let xc = toward(-RHO, &worst_x);
                (xc, f(&xc))
            } else {
                let xc = toward(RHO, &worst_x);
                (xc, f(&xc))
            };
            if fc < fr.min(simplex[D].1) {
                simplex[D] = (xc, fc);
                continue;
            }
            let x0 = simplex[0].0;
            for (x, fx) in simplex.iter_mut().skip(1) {
                for j in 0..D {
                    x[j] = x0[j] + SHRINK * (x[j] - x0[j]);
                }
                *fx = f(x);
            }
        }
    }
}
