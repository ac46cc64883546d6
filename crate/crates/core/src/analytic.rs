//! Closed-form attacks and objectives for conjugate linear regression.
//!
//! With `g(x, y) = y` the predictive mean is `mu_n^T x'`, so steering it to
//! `y*` inside a norm ball reduces to `min |mu_n^T r - alpha|` over
//! `||r|| <= eps` with `alpha = y* - mu_n^T x`, solved exactly by Hölder's
//! inequality. For known-variance regression with a normal target the KL
//! objective is explicit (and non-convex) in `x'`.

use crate::bayes::{ppd_normal_params, GaussianPosterior};
use crate::error::{check_dim, Error, Result};
use crate::feasible::{FeasibleSet, Norm};
use crate::linalg::Vector;
use crate::point::sign;
use crate::ppd::Appd;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPointSolution {
    pub r_star: Vector,
    /// Target reachable within the budget.
    pub achieved: bool,
    /// `|mu_n^T (x + r*) - y*|`.
    pub residual: f64,
}

impl AnalyticPointSolution {
    fn new(mu_n: &Vector, alpha: f64, r_star: Vector) -> Self {
        let residual = (alpha - mu_n.dot(&r_star)).abs();
        Self {
            achieved: residual <= 1e-9,
            r_star,
            residual,
        }
    }
}

fn alpha(mu_n: &Vector, x: &Vector, y_star: f64, eps: f64) -> Result<f64> {
    check_dim("covariates vs posterior mean", mu_n.len(), x.len())?;
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {eps}")));
    }
    Ok(y_star - mu_n.dot(x))
}

/// Optimal L2-bounded shift of the predictive mean toward `y_star`.
pub fn analytic_point_l2(mu_n: &Vector, x: &Vector, y_star: f64, eps: f64) -> Result<AnalyticPointSolution> {
    let a = alpha(mu_n, x, y_star, eps)?;
    let norm = mu_n.norm();
    if norm == 0.0 {
        return Err(Error::UnattackableMean);
    }
    let r = if a.abs() <= eps * norm {
        mu_n * (a / (norm * norm))
    } else {
        mu_n * (sign(a) * eps / norm)
    };
    Ok(AnalyticPointSolution::new(mu_n, a, r))
}

/// Optimal L∞-bounded shift; `sgn(0) = 0` so coordinates with zero
/// coefficient are left alone.
pub fn analytic_point_linf(mu_n: &Vector, x: &Vector, y_star: f64, eps: f64) -> Result<AnalyticPointSolution> {
    let a = alpha(mu_n, x, y_star, eps)?;
    let l1: f64 = mu_n.iter().map(|v| v.abs()).sum();
    if l1 == 0.0 {
        return Err(Error::UnattackableMean);
    }
    let signs = mu_n.map(sign);
    let r = if a.abs() <= eps * l1 {
        signs * (a / l1)
    } else {
        signs * (eps * sign(a))
    };
    Ok(AnalyticPointSolution::new(mu_n, a, r))
}

pub fn analytic_point(mu_n: &Vector, x: &Vector, y_star: f64, eps: f64, norm: Norm) -> Result<AnalyticPointSolution> {
    match norm {
        Norm::L2 => analytic_point_l2(mu_n, x, y_star, eps),
        Norm::Linf => analytic_point_linf(mu_n, x, y_star, eps),
        Norm::L1 => Err(Error::Unsupported("closed-form point attack under L1".into())),
    }
}

fn normal_target(appd: &Appd) -> Result<(f64, f64)> {
    match appd {
        Appd::Normal { mean, variance } if *variance > 0.0 => Ok((*mean, *variance)),
        Appd::Normal { .. } => Err(Error::InvalidParameter("target variance must be positive".into())),
        _ => Err(Error::Unsupported("closed-form KL needs a normal target".into())),
    }
}

/// `KL(N(mu_A, s2_A) || N(x'^T mu_n, x'^T lambda_n^{-1} x' + sigma^2))`.
pub fn kl_normal_ppd(appd: &Appd, post: &GaussianPosterior, x: &Vector) -> Result<f64> {
    let (mean_a, var_a) = normal_target(appd)?;
    let ppd = ppd_normal_params(post, x)?;
    Ok(0.5 * (ppd.variance / var_a).ln() + (var_a + (mean_a - ppd.mean).powi(2)) / (2.0 * ppd.variance) - 0.5)
}

/// Exact gradient of [`kl_normal_ppd`] in `x'`.
pub fn kl_normal_ppd_grad(appd: &Appd, post: &GaussianPosterior, x: &Vector) -> Result<Vector> {
    let (mean_a, var_a) = normal_target(appd)?;
    let ppd = ppd_normal_params(post, x)?;
    let v = ppd.variance;
    let gap = mean_a - ppd.mean;
    let s_x = post.covariance() * x;
    // d/dx of v is 2 S x, of the mean is mu_n
    Ok(&s_x * (1.0 / v) - post.mean() * (gap / v) - s_x * ((var_a + gap * gap) / (v * v)))
}

#[derive(Debug, Clone)]
pub struct KlOptimum {
    pub x: Vector,
    pub kl: f64,
    /// Local solutions from every start, in start order.
    pub candidates: Vec<(Vector, f64)>,
}

/// Projected gradient descent with backtracking on the closed-form KL.
pub fn kl_local_minimize(
    appd: &Appd,
    post: &GaussianPosterior,
    feasible: &FeasibleSet,
    start: &Vector,
    max_iter: usize,
) -> Result<(Vector, f64)> {
    let mut x = feasible.project(start)?;
    let mut f = kl_normal_ppd(appd, post, &x)?;
    let mut step = 1.0;
    for _ in 0..max_iter {
        let g = kl_normal_ppd_grad(appd, post, &x)?;
        let mut accepted = false;
        while step > 1e-14 {
            let cand = feasible.project(&(&x - &g * step))?;
            let fc = kl_normal_ppd(appd, post, &cand)?;
            // Armijo condition along the projection arc
            if fc <= f - 1e-4 / step * (&cand - &x).norm_squared() {
                let moved = (&cand - &x).norm();
                x = cand;
                f = fc;
                accepted = moved > 1e-13;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((x, f))
}

/// Multi-start projected gradient descent on the closed-form KL. Starts are
/// the centre plus the boundary points along `±mu_n` and along each
/// eigenvector of the posterior covariance.
pub fn kl_multistart(appd: &Appd, post: &GaussianPosterior, feasible: &FeasibleSet) -> Result<KlOptimum> {
    let mut directions: Vec<Vector> = Vec::new();
    if post.mean().norm() > 0.0 {
        directions.push(post.mean().normalize());
    }
    let eig = post.covariance().clone().symmetric_eigen();
    directions.extend(eig.eigenvectors.column_iter().map(|c| c.into_owned()));
    let mut starts = vec![feasible.center.clone()];
    for d in directions {
        for s in [1.0, -1.0] {
            starts.push(&feasible.center + &d * (s * feasible.epsilon));
        }
    }
    let candidates = starts
        .iter()
        .map(|s| kl_local_minimize(appd, post, feasible, s, 5_000))
        .collect::<Result<Vec<_>>>()?;
    let (x, kl) = candidates
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .expect("at least one start");
    Ok(KlOptimum { x, kl, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn l2_worked_examples() {
        let mu = v(&[-1.0, 2.0]);
        // mu^T x = -0.5
        let x = v(&[0.5, 0.0]);
        let inside = analytic_point_l2(&mu, &x, 3.0, 2.0).unwrap();
        assert!((inside.r_star.clone() - v(&[-0.7, 1.4])).amax() < 1e-12);
        assert!(inside.achieved && inside.residual < 1e-12);

        let boundary = analytic_point_l2(&mu, &x, 3.0, 0.5).unwrap();
        let expected = v(&[-1.0, 2.0]) * (0.5 / 5f64.sqrt());
        assert!((boundary.r_star.clone() - expected).amax() < 1e-12);
        assert!((boundary.residual - (3.5 - 0.5 * 5f64.sqrt())).abs() < 1e-12);
        assert!(!boundary.achieved);

        let noop = analytic_point_l2(&mu, &x, -0.5, 1.0).unwrap();
        assert_eq!(noop.r_star, Vector::zeros(2));
        assert!(noop.achieved);
    }

    #[test]
    fn linf_worked_examples() {
        let mu = v(&[-1.0, 2.0]);
        // alpha = 3 with mu^T x = 0
        let sol = analytic_point_linf(&mu, &Vector::zeros(2), 3.0, 2.0).unwrap();
        assert!((sol.r_star.clone() - v(&[-1.0, 1.0])).amax() < 1e-12);
        assert!(sol.achieved);

        let far = analytic_point_linf(&mu, &Vector::zeros(2), 10.0, 1.0).unwrap();
        assert_eq!(far.r_star, v(&[-1.0, 1.0]));
        assert!((far.residual - (10.0 - 3.0)).abs() < 1e-12);

        let zero_coord = analytic_point_linf(&v(&[0.0, 2.0]), &Vector::zeros(2), 1.0, 5.0).unwrap();
        assert_eq!(zero_coord.r_star[0], 0.0);
    }

    #[test]
    fn zero_mean_is_unattackable() {
        assert!(matches!(
            analytic_point_l2(&Vector::zeros(2), &Vector::zeros(2), 1.0, 1.0),
            Err(Error::UnattackableMean)
        ));
        assert!(matches!(
            analytic_point_linf(&Vector::zeros(2), &Vector::zeros(2), 1.0, 1.0),
            Err(Error::UnattackableMean)
        ));
    }

    fn scalar_posterior(sigma2: f64) -> GaussianPosterior {
        GaussianPosterior::new(Vector::from_element(1, 0.0), Matrix::from_element(1, 1, 1.0), sigma2).unwrap()
    }

    #[test]
    fn kl_scalar_substitution() {
        // PPD at x = 0 is N(0, sigma^2) = N(0, 4)
        let post = scalar_posterior(4.0);
        let kl = kl_normal_ppd(&Appd::Normal { mean: 0.0, variance: 1.0 }, &post, &Vector::zeros(1)).unwrap();
        assert!((kl - (0.5 * 4f64.ln() + 0.125 - 0.5)).abs() < 1e-15);
        assert!((kl - 0.3181).abs() < 1e-4);
        let same = kl_normal_ppd(&Appd::Normal { mean: 0.0, variance: 4.0 }, &post, &Vector::zeros(1)).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let mut rng = seeded(31);
        let post = GaussianPosterior::new(
            v(&[-1.0, 2.0]),
            Matrix::from_row_slice(2, 2, &[3.0, 1.2, 1.2, 2.0]),
            0.8,
        )
        .unwrap();
        let appd = Appd::Normal { mean: 0.7, variance: 2.5 };
        for _ in 0..20 {
            let x = v(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]);
            let g = kl_normal_ppd_grad(&appd, &post, &x).unwrap();
            let h = 1e-6;
            for i in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (kl_normal_ppd(&appd, &post, &xp).unwrap() - kl_normal_ppd(&appd, &post, &xm).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-2), "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn kl_has_two_local_minimizers() {
        // mean depends on x0 only, variance grows with |x1|: the target
        // variance is met at x1 = ±sqrt(3)
        let post = GaussianPosterior::new(v(&[1.0, 0.0]), Matrix::identity(2, 2), 1.0).unwrap();
        let appd = Appd::Normal { mean: 0.0, variance: 4.0 };
        let fs = FeasibleSet::new(Vector::zeros(2), 10.0, Norm::L2).unwrap();
        let (up, kl_up) = kl_local_minimize(&appd, &post, &fs, &v(&[0.2, 1.0]), 10_000).unwrap();
        let (down, kl_down) = kl_local_minimize(&appd, &post, &fs, &v(&[0.2, -1.0]), 10_000).unwrap();
        assert!((up.clone() - v(&[0.0, 3f64.sqrt()])).amax() < 1e-4, "{up}");
        assert!((down.clone() - v(&[0.0, -(3f64.sqrt())])).amax() < 1e-4, "{down}");
        assert!(kl_up < 1e-8 && kl_down < 1e-8);
        let best = kl_multistart(&appd, &post, &fs).unwrap();
        assert!(best.kl < 1e-8);
    }

    proptest! {
        #[test]
        fn holder_boundary_is_exact(
            mu in prop::collection::vec(-3.0f64..3.0, 1..5),
            x_seed in prop::collection::vec(-2.0f64..2.0, 5),
            eps in 0.01f64..3.0,
            positive in any::<bool>(),
        ) {
            let mu = Vector::from_vec(mu);
            prop_assume!(mu.norm() > 1e-3);
            let x = Vector::from_iterator(mu.len(), x_seed.into_iter().take(mu.len()));
            let a = eps * mu.norm() * if positive { 1.0 } else { -1.0 };
            let y_star = mu.dot(&x) + a;
            let sol = analytic_point_l2(&mu, &x, y_star, eps).unwrap();
            prop_assert!(sol.residual <= 1e-9);
            prop_assert!((sol.r_star.norm() - eps).abs() <= 1e-12 * (1.0 + eps));
        }

        #[test]
        fn l2_interior_solution_has_minimum_norm(
            mu in prop::collection::vec(-3.0f64..3.0, 2..5),
            free in prop::collection::vec(-2.0f64..2.0, 5),
            a in -2.0f64..2.0,
        ) {
            let mu = Vector::from_vec(mu);
            prop_assume!(mu.norm() > 1e-3);
            let x = Vector::zeros(mu.len());
            let sol = analytic_point_l2(&mu, &x, a, 100.0).unwrap();
            // any other r with mu^T r = a: r* plus a component orthogonal to mu
            let w = Vector::from_iterator(mu.len(), free.into_iter().take(mu.len()));
            let ortho = &w - &mu * (w.dot(&mu) / mu.norm_squared());
            let other = &sol.r_star + ortho;
            prop_assert!((mu.dot(&other) - a).abs() < 1e-9);
            prop_assert!(other.norm() + 1e-12 >= sol.r_star.norm());
        }
    }
}
