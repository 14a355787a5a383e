//! Unconstrained minimizers used by the likelihood fits: BFGS with an Armijo
//! backtracking line search, and a Nelder-Mead fallback.

#[derive(Debug, Clone)]
pub struct OptimOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central finite-difference gradient.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * (1.0 + x[i].abs());
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Minimizes `f` given a combined value-and-gradient oracle. Falls back to
/// Nelder-Mead from the current iterate when the line search cannot make
/// progress.
pub fn minimize<F, VG>(f: F, value_grad: VG, x0: &[f64], opts: &OptimOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
    VG: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = value_grad(&x);
    if !fx.is_finite() {
        return nelder_mead(&f, &x, opts.max_iterations, 1e-12);
    }
    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if norm(&g) <= opts.gradient_tolerance {
            return OptimResult {
                x,
                value: fx,
                iterations,
                converged: true,
            };
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let ft = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, _)) = accepted else {
            let polished = nelder_mead(&f, &x, opts.max_iterations, 1e-12);
            let better = polished.value <= fx;
            return OptimResult {
                iterations: iterations + polished.iterations,
                converged: polished.converged || norm(&g) <= 1e3 * opts.gradient_tolerance,
                ..if better {
                    polished
                } else {
                    OptimResult {
                        x,
                        value: fx,
                        iterations: 0,
                        converged: false,
                    }
                }
            };
        };
        let (f_new, g_new) = value_grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let small_change = (fx - f_new).abs() <= 1e-15 * fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        if small_change && norm(&g) <= 1e3 * opts.gradient_tolerance {
            return OptimResult {
                x,
                value: fx,
                iterations,
                converged: true,
            };
        }
    }
    let converged = norm(&g) <= opts.gradient_tolerance;
    OptimResult {
        x,
        value: fx,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// Nelder-Mead simplex search with standard coefficients.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    max_iterations: usize,
    tolerance: f64,
) -> OptimResult {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i].abs() > 1e-3 { 0.05 * p[i] } else { 0.05 };
        let v = eval(&p);
        simplex.push((p, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations * 4 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = (simplex[n].1 - simplex[0].1).abs();
        let size = simplex
            .iter()
            .skip(1)
            .map(|(p, _)| {
                p.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= tolerance * (1.0 + simplex[0].1.abs()) && size <= 1e-8 {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(p, _)| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(-2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[n].1 { along(-0.5) } else { along(0.5) };
            let fc = eval(&contracted);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for (p, v) in simplex.iter_mut().skip(1) {
                    for (pj, bj) in p.iter_mut().zip(&best) {
                        *pj = bj + 0.5 * (*pj - bj);
                    }
                    *v = eval(p);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    OptimResult {
        x,
        value,
        iterations,
        converged,
    }
}

/// Maps two unconstrained reals onto the open region a, b > 0, a + b < cap
/// through a three-way softmax.
pub fn simplex_from_unconstrained(u: &[f64], cap: f64) -> (f64, f64) {
    let m = u[0].max(u[1]).max(0.0);
    let e0 = (u[0] - m).exp();
    let e1 = (u[1] - m).exp();
    let e2 = (-m).exp();
    let total = e0 + e1 + e2;
    (cap * e0 / total, cap * e1 / total)
}

/// Inverse of [`simplex_from_unconstrained`]; inputs are nudged into the
/// open region first.
pub fn simplex_to_unconstrained(a: f64, b: f64, cap: f64) -> [f64; 2] {
    let eps = 1e-10;
    let a = a.max(eps);
    let b = b.max(eps);
    let mut rest = cap - a - b;
    if rest < eps {
        let scale = (cap - eps) / (a + b);
        return simplex_to_unconstrained(a * scale * (1.0 - 1e-9), b * scale * (1.0 - 1e-9), cap);
    }
    rest = rest.max(eps);
    [(a / rest).ln(), (b / rest).ln()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let vg = |x: &[f64]| (rosenbrock(x), numeric_gradient(&rosenbrock, x, 1e-6));
        let r = minimize(rosenbrock, vg, &[-1.2, 1.0], &OptimOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r);
        assert!((r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nelder_mead_solves_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2);
        let r = nelder_mead(&f, &[0.0, 0.0], 500, 1e-14);
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-5 && (r.x[1] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn simplex_map_round_trips() {
        for &(a, b) in &[(0.05, 0.9), (0.3, 0.3), (1e-4, 0.99)] {
            let u = simplex_to_unconstrained(a, b, 1.0 - 1e-6);
            let (a2, b2) = simplex_from_unconstrained(&u, 1.0 - 1e-6);
            assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }
        let (a, b) = simplex_from_unconstrained(&[800.0, -800.0], 1.0 - 1e-6);
        assert!(a + b < 1.0 && a > 0.0 && b >= 0.0);
    }
}
