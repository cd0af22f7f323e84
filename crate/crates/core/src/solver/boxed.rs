//! Bound-constrained limited-memory quasi-Newton minimization.
//!
//! Projected L-BFGS: the active set is read off the bounds and the gradient
//! sign, the two-loop recursion runs on the free variables, and a
//! backtracking Armijo search walks the projected path so every iterate
//! stays inside the box exactly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub gradient_tolerance: f64,
    /// Stop after three consecutive accepted steps that each lower `f` by
    /// less than this fraction of `max(|f|, 1)`.
    pub decrease_tolerance: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for BoxConfig {
    fn default() -> Self {
        BoxConfig {
            memory: 8,
            max_iterations: 2000,
            gradient_tolerance: 1e-9,
            decrease_tolerance: 1e-15,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxStatus {
    Converged,
    /// Progress fell below `decrease_tolerance`.
    Stalled,
    IterationLimit,
    /// No descent along the projected path even from steepest descent; the
    /// returned point is the best one found.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: BoxStatus,
    pub projected_gradient: f64,
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&xi, &gi))| (xi - clamp(xi - gi, lo[i], hi[i])).abs())
        .fold(0.0, f64::max)
}

/// Minimizes `f` over the box `lower <= x <= upper`. `f` writes the gradient
/// into its second argument and returns the value. Infinite bounds are
/// allowed. `x0` is clamped into the box first.
pub fn minimize_boxed<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], config: &BoxConfig) -> BoxResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n, "bound dimension mismatch");
    assert!(config.memory >= 1);
    let mut x: Vec<f64> = (0..n).map(|i| clamp(x0[i], lower[i], upper[i])).collect();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut stalls = 0;

    let status = loop {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg <= config.gradient_tolerance {
            break BoxStatus::Converged;
        }
        if iterations >= config.max_iterations {
            break BoxStatus::IterationLimit;
        }
        if !fx.is_finite() {
            break BoxStatus::LineSearchFailed;
        }
        iterations += 1;

        // variables pinned at a bound with the gradient pushing outward
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();

        let mut accepted = false;
        let mut f_trial = fx;
        for attempt in 0..2 {
            if attempt == 1 {
                if history.is_empty() {
                    break;
                }
                history.clear();
            }
            let d = direction(&g, &free, &history);
            let gd = dot(&g, &d);
            if !(gd < 0.0) {
                continue;
            }
            let mut alpha = if history.is_empty() {
                (1.0 / d.iter().map(|v| v.abs()).fold(0.0, f64::max)).min(1.0)
            } else {
                1.0
            };
            for _ in 0..config.max_backtracks {
                for i in 0..n {
                    trial[i] = clamp(x[i] + alpha * d[i], lower[i], upper[i]);
                }
                let ft = f(&trial, &mut g_trial);
                evaluations += 1;
                let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
                if ft.is_finite() && ft <= fx + config.armijo * decrease {
                    f_trial = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break BoxStatus::LineSearchFailed;
        }

        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_trial[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let f_old = fx;
        fx = f_trial;
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        if f_old - fx <= config.decrease_tolerance * f_old.abs().max(1.0) {
            stalls += 1;
            if stalls >= 3 {
                break BoxStatus::Stalled;
            }
        } else {
            stalls = 0;
        }
    };

    BoxResult {
        projected_gradient: projected_gradient_norm(&x, &g, lower, upper),
        x,
        f: fx,
        iterations,
        evaluations,
        status,
    }
}

/// Two-loop recursion restricted to the free variables; bound-pinned
/// components of the direction are zero.
fn direction(g: &[f64], free: &[bool], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mask = |v: &[f64]| -> Vec<f64> { v.iter().zip(free).map(|(&x, &f)| if f { x } else { 0.0 }).collect() };
    let mut q = mask(g);
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(&mask(s), &q);
        for (qi, yi) in q.iter_mut().zip(mask(y)) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let (s, y) = (mask(s), mask(y));
        let yy = dot(&y, &y);
        let sy = dot(&s, &y);
        if yy > 0.0 && sy > 0.0 {
            let gamma = sy / yy;
            q.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(&mask(y), &q);
        for (qi, si) in q.iter_mut().zip(mask(s)) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn unconstrained_quadratic_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in [1, 3, 10] {
            let x0: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = minimize_boxed(
                |x, g| {
                    g.iter_mut().zip(x).for_each(|(gi, xi)| *gi = 2.0 * xi);
                    x.iter().map(|v| v * v).sum()
                },
                &x0,
                &vec![-1.0; d],
                &vec![1.0; d],
                &BoxConfig::default(),
            );
            assert_eq!(r.status, BoxStatus::Converged);
            assert!(r.x.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn active_upper_bound() {
        let r = minimize_boxed(
            |x, g| {
                g[0] = 2.0 * (x[0] - 2.0);
                (x[0] - 2.0).powi(2)
            },
            &[0.0],
            &[f64::NEG_INFINITY],
            &[1.0],
            &BoxConfig::default(),
        );
        assert_eq!(r.x, vec![1.0]);
        assert_eq!(r.status, BoxStatus::Converged);
    }

    #[test]
    fn rosenbrock_in_box() {
        let r = minimize_boxed(rosenbrock, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &BoxConfig::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{r:?}");

        // independent oracle: plain projected gradient descent, run long
        let mut x = [-1.2, 1.0];
        let mut g = [0.0; 2];
        for _ in 0..400_000 {
            rosenbrock(&x, &mut g);
            for i in 0..2 {
                x[i] = (x[i] - 1e-3 * g[i]).clamp(-2.0, 2.0);
            }
        }
        assert!((x[0] - r.x[0]).abs() < 1e-6 && (x[1] - r.x[1]).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_with_binding_box() {
        // minimum of the box [-2, 0.5] x [-2, 2] lies on the face x = 0.5
        let r = minimize_boxed(rosenbrock, &[-1.2, 1.0], &[-2.0, -2.0], &[0.5, 2.0], &BoxConfig::default());
        assert_eq!(r.x[0], 0.5);
        assert!((r.x[1] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn iterates_never_leave_the_box() {
        let lo = [-0.3, 0.1, -1.0];
        let hi = [0.2, 0.4, 1.0];
        let r = minimize_boxed(
            |x, g| {
                let t = [1.0, -1.0, 0.5];
                let mut f = 0.0;
                for i in 0..3 {
                    assert!(x[i] >= lo[i] && x[i] <= hi[i]);
                    g[i] = 4.0 * (x[i] - t[i]).powi(3) + (x[i] - t[i]);
                    f += (x[i] - t[i]).powi(4) + 0.5 * (x[i] - t[i]).powi(2);
                }
                f
            },
            &[5.0, 5.0, 5.0],
            &lo,
            &hi,
            &BoxConfig::default(),
        );
        assert_eq!(&r.x[..2], &[0.2, 0.1]);
        assert!((r.x[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn value_never_increases() {
        let x0 = [1.5, -1.5];
        let mut g = [0.0; 2];
        let f0 = rosenbrock(&x0, &mut g);
        let cfg = BoxConfig { max_iterations: 7, ..BoxConfig::default() };
        let r = minimize_boxed(rosenbrock, &x0, &[-2.0; 2], &[2.0; 2], &cfg);
        assert_eq!(r.status, BoxStatus::IterationLimit);
        assert!(r.f <= f0);
    }
}
