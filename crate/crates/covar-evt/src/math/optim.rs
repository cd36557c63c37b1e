//! Unconstrained minimizers used behind the constraint-transformed
//! estimation routines: Nelder–Mead for the cheap, possibly non-smooth
//! moment objectives and BFGS with finite-difference gradients for GARCH
//! likelihoods.

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimization.
///
/// Stops when the objective spread over the simplex falls below `f_tol`
/// and the simplex diameter below `x_tol`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: f64,
    max_iter: usize,
    f_tol: f64,
    x_tol: f64,
) -> OptimResult {
    let n = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if v[i].abs() > 1e-8 { scale * v[i].abs() } else { scale };
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = fvals[worst] - fvals[best];
        let x_spread = simplex
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[best]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if f_spread <= f_tol && x_spread <= x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for (idx, v) in simplex.iter().enumerate() {
            if idx != worst {
                for (c, &vi) in centroid.iter_mut().zip(v) {
                    *c += vi / n as f64;
                }
            }
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        let f_reflect = f(&reflect);

        if f_reflect < fvals[best] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(&c, &w)| c + gamma * (c - w))
                .collect();
            let f_expand = f(&expand);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                fvals[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                fvals[worst] = f_reflect;
            }
        } else if f_reflect < fvals[second_worst] {
            simplex[worst] = reflect;
            fvals[worst] = f_reflect;
        } else {
            let contract: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(&c, &w)| c + rho * (w - c))
                .collect();
            let f_contract = f(&contract);
            if f_contract < fvals[worst] {
                simplex[worst] = contract;
                fvals[worst] = f_contract;
            } else {
                // Shrink toward the best vertex.
                let best_v = simplex[best].clone();
                for idx in 0..=n {
                    if idx != best {
                        for (vi, &bi) in simplex[idx].iter_mut().zip(&best_v) {
                            *vi = bi + sigma * (*vi - bi);
                        }
                        fvals[idx] = f(&simplex[idx]);
                    }
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if fvals[i] < fvals[best] {
            best = i;
        }
    }
    OptimResult {
        x: simplex[best].clone(),
        f: fvals[best],
        iterations,
        converged,
    }
}

fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// BFGS minimization with central finite-difference gradients and an
/// Armijo backtracking line search.
pub fn bfgs<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    max_iter: usize,
    g_tol: f64,
) -> OptimResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = fd_gradient(&mut f, &x);
    // Inverse Hessian approximation, started at identity.
    let mut h_inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let g_norm = g.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if g_norm < g_tol {
            converged = true;
            break;
        }

        // Search direction d = -H_inv · g
        let mut d = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                d[i] -= h_inv[i][j] * g[j];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(&di, &gi)| di * gi).sum();
        if !slope.is_finite() || slope >= 0.0 {
            // Reset to steepest descent when curvature info degrades.
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                d[i] = -g[i];
            }
        }

        // Cap the step so a long quasi-Newton direction cannot hop across
        // a narrow valley onto a flat plateau the line search would accept.
        let d_norm = d.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if d_norm > 1.0 {
            for di in &mut d {
                *di /= d_norm;
            }
        }

        // Armijo backtracking.
        let mut step = 1.0;
        let slope: f64 = d.iter().zip(&g).map(|(&di, &gi)| di * gi).sum();
        let mut x_new = x.clone();
        let mut f_new = fx;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            f_new = f(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No descent along the search direction at line-search
            // resolution: numerically stationary.
            converged = fx.is_finite();
            break;
        }

        let g_new = fd_gradient(&mut f, &x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            // BFGS inverse update: H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    hy[i] += h_inv[i][j] * y[j];
                }
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += rho * (1.0 + rho * yhy) * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }

        x = x_new;
        fx = f_new;
        g = g_new;
    }

    OptimResult {
        x,
        f: fx,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nm_minimizes_quadratic() {
        let r = nelder_mead(
            |x| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
            &[0.0, 0.0],
            0.5,
            2000,
            1e-12,
            1e-8,
        );
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-6 && (r.x[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn nm_rosenbrock() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], 0.5, 5000, 1e-12, 1e-9);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let r = bfgs(rosenbrock, &[-1.2, 1.0], 500, 1e-8);
        assert!((r.x[0] - 1.0).abs() < 1e-5, "x = {:?}", r.x);
        assert!((r.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn bfgs_quadratic_fast() {
        let r = bfgs(
            |x| 2.0 * (x[0] - 1.0).powi(2) + 0.5 * (x[1] - 2.0).powi(2) + x[0] * x[1] * 0.1,
            &[10.0, -10.0],
            200,
            1e-9,
        );
        assert!(r.converged);
        let g = |x: &[f64]| {
            vec![
                4.0 * (x[0] - 1.0) + 0.1 * x[1],
                1.0 * (x[1] - 2.0) + 0.1 * x[0],
            ]
        };
        let grad = g(&r.x);
        assert!(grad.iter().all(|v| v.abs() < 1e-5), "grad {grad:?}");
    }
}
