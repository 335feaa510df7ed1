//! Joint covariance of (U, W, Z, X) and Gaussian conditioning.

use super::SemParams;
use crate::error::{Error, Result};
use crate::matrix::{cholesky, solve_spd, symmetric_condition, symmetric_eigenvalues, Matrix};

/// Variables of the joint, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    U,
    W,
    Z,
    X,
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::U => 0,
            Var::W => 1,
            Var::Z => 2,
            Var::X => 3,
        }
    }

    pub const ALL: [Var; 4] = [Var::U, Var::W, Var::Z, Var::X];
}

/// Zero-mean multivariate Gaussian over (U, W, Z, X).
#[derive(Debug, Clone)]
pub struct GaussianJoint {
    pub mean: [f64; 4],
    pub cov: Matrix,
}

/// Conditional law of the targets given fixed values of the conditioning
/// variables: `mean = coef * values`, plus the conditional covariance.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    /// linear map from conditioning values to the conditional mean
    pub coef: Matrix,
    /// conditional covariance of the targets
    pub cov: Matrix,
    /// conditional mean at the values passed to `condition`
    pub mean: Vec<f64>,
}

impl ConditionalGaussian {
    /// Conditional mean at other conditioning values.
    pub fn mean_at(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.coef.cols(), "conditioning value count mismatch");
        (0..self.coef.rows())
            .map(|i| {
                self.coef
                    .row(i)
                    .iter()
                    .zip(values.iter())
                    .map(|(c, v)| c * v)
                    .sum()
            })
            .collect()
    }
}

/// Closed-form covariance of the model. Entries follow directly from the
/// structural equations; positive definiteness is asserted because every
/// noise scale is positive.
pub fn sem_covariance(p: &SemParams) -> Result<GaussianJoint> {
    let su2 = p.sigma_u * p.sigma_u;
    let sw2 = p.sigma_w * p.sigma_w;
    let sz2 = p.sigma_z * p.sigma_z;
    let sx2 = p.sigma_x * p.sigma_x;
    let a = p.total_ux();

    let cov_uu = su2;
    let cov_ww = p.a_wu * p.a_wu * su2 + sw2;
    let cov_zz = p.a_zu * p.a_zu * su2 + sz2;
    let cov_xx = a * a * su2 + p.a_xz * p.a_xz * sz2 + sx2;
    let cov_wu = p.a_wu * su2;
    let cov_zu = p.a_zu * su2;
    let cov_xu = a * su2;
    let cov_wz = p.a_wu * p.a_zu * su2;
    let cov_wx = p.a_wu * a * su2;
    let cov_zx = p.a_zu * a * su2 + p.a_xz * sz2;

    // order U, W, Z, X
    let cov = Matrix::from_vec(
        4,
        4,
        vec![
            cov_uu, cov_wu, cov_zu, cov_xu, //
            cov_wu, cov_ww, cov_wz, cov_wx, //
            cov_zu, cov_wz, cov_zz, cov_zx, //
            cov_xu, cov_wx, cov_zx, cov_xx,
        ],
    )?;

    let eig = symmetric_eigenvalues(&cov)?;
    if eig[0] <= 0.0 {
        return Err(Error::Numerical(format!(
            "covariance not positive definite (min eigenvalue {})",
            eig[0]
        )));
    }
    Ok(GaussianJoint { mean: [0.0; 4], cov })
}

impl GaussianJoint {
    pub fn variance(&self, v: Var) -> f64 {
        self.cov.get(v.index(), v.index())
    }

    pub fn covariance_of(&self, a: Var, b: Var) -> f64 {
        self.cov.get(a.index(), b.index())
    }

    fn block(&self, rows: &[Var], cols: &[Var]) -> Matrix {
        Matrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.cov.get(rows[i].index(), cols[j].index())
        })
    }

    /// Condition the targets on given values of the conditioning variables:
    /// `mean = S_ab S_bb^{-1} b`, `cov = S_aa - S_ab S_bb^{-1} S_ba`.
    pub fn condition(
        &self,
        targets: &[Var],
        givens: &[Var],
        given_values: &[f64],
    ) -> Result<ConditionalGaussian> {
        if targets.iter().any(|t| givens.contains(t)) {
            return Err(Error::Contract("targets and givens must be disjoint".into()));
        }
        if given_values.len() != givens.len() {
            return Err(Error::Dimension("conditioning value count mismatch".into()));
        }
        let s_ab = self.block(targets, givens);
        let s_bb = self.block(givens, givens);
        let s_aa = self.block(targets, targets);

        if cholesky(&s_bb).is_err() {
            let condition = symmetric_condition(&s_bb).unwrap_or(f64::INFINITY);
            return Err(Error::SingularConditioning {
                condition,
                context: format!("conditioning on {:?}", givens),
            });
        }

        // columns of S_bb^{-1} S_ba give the coefficient map row by row
        let mut coef = Matrix::zeros(targets.len(), givens.len());
        for (i, _) in targets.iter().enumerate() {
            let rhs: Vec<f64> = (0..givens.len()).map(|j| s_ab.get(i, j)).collect();
            let sol = solve_spd(&s_bb, &rhs)?;
            for (j, v) in sol.iter().enumerate() {
                coef.set(i, j, *v);
            }
        }
        // cov = S_aa - coef * S_ba
        let s_ba = self.block(givens, targets);
        let reduction = coef.matmul(&s_ba);
        let cov = s_aa.sub(&reduction);
        let mean = (0..targets.len())
            .map(|i| {
                coef.row(i)
                    .iter()
                    .zip(given_values.iter())
                    .map(|(c, v)| c * v)
                    .sum()
            })
            .collect();
        Ok(ConditionalGaussian { coef, cov, mean })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use crate::stats;

    #[test]
    fn independent_blocks_leave_marginal_unchanged() {
        let p = SemParams::new_unchecked(1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        // a_wu = 0 makes W pure noise, so conditioning W on U does nothing
        let joint = sem_covariance(&p).unwrap();
        assert_eq!(joint.covariance_of(Var::W, Var::U), 0.0);
        let c = joint.condition(&[Var::W], &[Var::U], &[2.0]).unwrap();
        assert!((c.mean[0]).abs() < 1e-12);
        assert!((c.cov.get(0, 0) - joint.variance(Var::W)).abs() < 1e-12);
    }

    #[test]
    fn bivariate_conditioning_matches_hand_values() {
        // Cov = [[2,1],[1,2]]: conditioning the first on second = 1 gives
        // mean 0.5 and variance 1.5
        let joint = GaussianJoint {
            mean: [0.0; 4],
            cov: Matrix::from_vec(
                4,
                4,
                vec![
                    2.0, 1.0, 0.0, 0.0, //
                    1.0, 2.0, 0.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 0.0, 1.0,
                ],
            )
            .unwrap(),
        };
        let c = joint.condition(&[Var::U], &[Var::W], &[1.0]).unwrap();
        assert!((c.mean[0] - 0.5).abs() < 1e-12);
        assert!((c.cov.get(0, 0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bivariate_conditioning_matches_monte_carlo_slab() {
        // slab conditioning |B - 1| < 0.01 over many correlated draws
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = seed::rng(1234);
        let mut kept = Vec::new();
        // (A, B) with Cov [[2,1],[1,2]]: A = e1*sqrt(2), B = A/2 + e2*sqrt(1.5)
        for _ in 0..10_000_000usize {
            let a = 2.0f64.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let b = 0.5 * a + 1.5f64.sqrt() * rng.sample::<f64, _>(StandardNormal);
            if (b - 1.0).abs() < 0.01 {
                kept.push(a);
            }
        }
        assert!(kept.len() > 5_000, "slab too small: {}", kept.len());
        let m = stats::mean(&kept);
        let v = stats::sample_std(&kept).powi(2);
        let se = stats::standard_error(&kept);
        assert!((m - 0.5).abs() < 4.0 * se, "slab mean {} (se {})", m, se);
        assert!((v - 1.5).abs() < 0.05, "slab var {}", v);
    }

    #[test]
    fn conditioning_on_more_variables_never_increases_variance() {
        let p = SemParams::unit_coefficients(2.0, 0.4, 0.6, 0.8);
        let joint = sem_covariance(&p).unwrap();
        let v1 = joint.condition(&[Var::U], &[Var::W, Var::X], &[0.1, -0.2]).unwrap().cov.get(0, 0);
        let v2 = joint
            .condition(&[Var::U], &[Var::W, Var::X, Var::Z], &[0.1, -0.2, 0.3])
            .unwrap()
            .cov
            .get(0, 0);
        assert!(v2 <= v1 + 1e-12);
        assert!(v2 >= 0.0);
    }

    #[test]
    fn closed_form_matches_monte_carlo_covariance() {
        // two of the documented spot checks plus a third composite setting
        let cases = [
            (SemParams::unit_coefficients(1.0, 1.0, 1.0, 1.0), Var::W, Var::W, 2.0),
            (SemParams::unit_coefficients(10.0, 1.0, 0.1, 1.0), Var::Z, Var::Z, 100.01),
            (SemParams::unit_coefficients(10.0, 1.0, 0.1, 1.0), Var::W, Var::U, 100.0),
        ];
        let n = 1_000_000usize;
        for (k, (p, va, vb, expected)) in cases.iter().enumerate() {
            let joint = sem_covariance(p).unwrap();
            let closed = joint.covariance_of(*va, *vb);
            assert!((closed - expected).abs() < 1e-12);

            let mut rng = seed::rng(seed::derive(99, k as u64));
            let (ia, ib) = (va.index(), vb.index());
            let mut sum_a = 0.0;
            let mut sum_b = 0.0;
            let mut sum_ab = 0.0;
            let mut sum_a2 = 0.0;
            let mut sum_b2 = 0.0;
            for _ in 0..n {
                let d = p.draw_uwzx(&mut rng);
                sum_a += d[ia];
                sum_b += d[ib];
                sum_ab += d[ia] * d[ib];
                sum_a2 += d[ia] * d[ia];
                sum_b2 += d[ib] * d[ib];
            }
            let nf = n as f64;
            let emp = sum_ab / nf - (sum_a / nf) * (sum_b / nf);
            let var_a = sum_a2 / nf - (sum_a / nf).powi(2);
            let var_b = sum_b2 / nf - (sum_b / nf).powi(2);
            // standard error of a covariance estimate for Gaussian data
            let se = ((var_a * var_b + emp * emp) / nf).sqrt();
            assert!(
                (emp - closed).abs() < 3.0 * se,
                "case {}: empirical {} vs closed {} (se {})",
                k,
                emp,
                closed,
                se
            );
        }
    }
}
