//! Unconstrained minimizers: Nelder-Mead simplex and BFGS.
//!
//! Both treat non-finite objective values as +∞, so callers can signal an
//! inadmissible point by returning NaN or infinity.

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Relative change in the objective below which iteration stops.
    pub f_tol: f64,
    /// Infinity-norm gradient tolerance (BFGS only).
    pub g_tol: f64,
    /// Edge length of the initial simplex, and the longest first BFGS step
    /// taken before any curvature is known.
    pub initial_step: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { max_iter: 500, f_tol: 1e-12, g_tol: 1e-8, initial_step: 0.25 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Nelder-Mead with the standard coefficients (1, 2, ½, ½).
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &MinimizeOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return Minimum { x: vec![], f: v, iterations: 0, evaluations: evals, converged: true };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut converged = false;
    let mut iter = 0;
    while iter < opts.max_iter {
        iter += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        if (worst - best).abs() <= opts.f_tol * (best.abs() + opts.f_tol) && worst.is_finite() {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best_vertex = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&best_vertex) {
                *x = b + 0.5 * (*x - b);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let (bi, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("simplex is non-empty");
    Minimum { x: simplex[bi].clone(), f: values[bi], iterations: iter, evaluations: evals, converged }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with a backtracking Armijo line search. `fg` returns the objective
/// and writes its gradient into the second argument.
pub fn bfgs<F>(fg: F, x0: &[f64], opts: &MinimizeOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    bfgs_warm(fg, x0, opts, &mut Vec::new())
}

/// BFGS started from the row-major inverse Hessian `h` when it has the right
/// size (otherwise from a scaled identity). `h` is left holding the final
/// approximation, so a sequence of closely related problems can share it.
pub fn bfgs_warm<F>(mut fg: F, x0: &[f64], opts: &MinimizeOptions, h: &mut Vec<f64>) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 1usize;
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = sanitize(fg(&x, &mut g));
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum { x, f, iterations: 0, evaluations: evals, converged: false };
    }
    if n == 0 {
        return Minimum { x, f, iterations: 0, evaluations: evals, converged: true };
    }

    let mut scaled = h.len() == n * n && h.iter().all(|v| v.is_finite());
    if !scaled {
        *h = identity(n);
    }
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut converged = false;
    let mut iter = 0;

    while iter < opts.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.g_tol {
            converged = true;
            break;
        }
        iter += 1;
        for i in 0..n {
            dir[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&dir, &g);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            *h = identity(n);
            scaled = false;
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = dot(&dir, &g);
        }

        // Until the first curvature pair rescales H, −g can be far too long.
        let mut step = if scaled {
            1.0
        } else {
            let longest = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (opts.initial_step / longest).min(1.0)
        };
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = sanitize(fg(&x_new, &mut g_new));
            evals += 1;
            if f_new <= f + 1e-4 * step * slope && g_new.iter().all(|v| v.is_finite()) {
                accepted = true;
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let f_old = f;
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                f = f_new;
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                    if !scaled {
                        let gamma = sy / dot(&y, &y);
                        *h = identity(n);
                        for i in 0..n {
                            h[i * n + i] = gamma;
                        }
                        scaled = true;
                    }
                    bfgs_update(h, &s, &y, sy);
                }
                if (f_old - f).abs() <= opts.f_tol * (f.abs() + opts.f_tol) {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.g_tol;
            break;
        }
    }
    Minimum { x, f, iterations: iter, evaluations: evals, converged }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

// H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosenbrock_grad(x: &[f64], g: &mut [f64]) -> f64 {
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200.0 * (x[1] - x[0] * x[0]);
        rosenbrock(x)
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let opts = MinimizeOptions { max_iter: 5000, f_tol: 1e-15, ..Default::default() };
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn bfgs_finds_rosenbrock_minimum() {
        let opts = MinimizeOptions { max_iter: 500, f_tol: 0.0, g_tol: 1e-9, ..Default::default() };
        let r = bfgs(rosenbrock_grad, &[-1.2, 1.0], &opts);
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-7 && (r.x[1] - 1.0).abs() < 1e-7, "{:?}", r.x);
    }

    #[test]
    fn non_finite_regions_are_avoided() {
        // ln-barrier: undefined for x <= 0
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::NAN } else { x[0] - x[0].ln() };
        let r = nelder_mead(f, &[3.0], &MinimizeOptions { max_iter: 2000, ..Default::default() });
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }
}
