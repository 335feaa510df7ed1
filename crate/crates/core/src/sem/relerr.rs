//! Relative bridge-approximation error on the linear-Gaussian model.
//!
//! The pointwise quantity is
//! `|a_yu (mu_{U|w*,x,z} - mu_{U|w*,x})| / |E[Y | x, z]|` with
//! `w* = mu_{W|x,z}`, the exact conditional expectation substituted because
//! every conditional mean is linear in the conditioning values. Points whose
//! denominator falls below a floor are excluded and count toward the trimmed
//! fraction.

use super::joint::Var;
use super::SemParams;
use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use crate::stats;
use rand::Rng;
use rand_distr::StandardNormal;

/// Outcome of one pointwise evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointError {
    Value(f64),
    /// denominator below the floor; the point feeds the trimmed fraction
    Excluded,
}

/// Precomputed linear maps for repeated pointwise evaluation under one
/// parameter setting.
#[derive(Debug, Clone)]
pub struct BridgeErrorSolver {
    params: SemParams,
    /// mu_{W|x,z} coefficients on (x, z)
    w_xz: [f64; 2],
    /// mu_{U|w,x,z} coefficients on (w, x, z)
    u_wxz: [f64; 3],
    /// mu_{U|w,x} coefficients on (w, x)
    u_wx: [f64; 2],
    /// marginal variance of X
    var_x: f64,
    /// mu_{Z|x} coefficient and conditional variance
    z_given_x: (f64, f64),
    pub denom_floor: f64,
}

impl BridgeErrorSolver {
    pub fn new(params: &SemParams, denom_floor: f64) -> Result<Self> {
        let joint = params.covariance()?;
        let w = joint.condition(&[Var::W], &[Var::X, Var::Z], &[0.0, 0.0])?;
        let uxz = joint.condition(&[Var::U], &[Var::W, Var::X, Var::Z], &[0.0, 0.0, 0.0])?;
        let uwx = joint.condition(&[Var::U], &[Var::W, Var::X], &[0.0, 0.0])?;
        let zx = joint.condition(&[Var::Z], &[Var::X], &[0.0])?;
        Ok(BridgeErrorSolver {
            params: *params,
            w_xz: [w.coef.get(0, 0), w.coef.get(0, 1)],
            u_wxz: [uxz.coef.get(0, 0), uxz.coef.get(0, 1), uxz.coef.get(0, 2)],
            u_wx: [uwx.coef.get(0, 0), uwx.coef.get(0, 1)],
            var_x: joint.variance(Var::X),
            z_given_x: (zx.coef.get(0, 0), zx.cov.get(0, 0)),
            denom_floor,
        })
    }

    /// Relative error at one (x, z) point.
    pub fn eval(&self, x: f64, z: f64) -> PointError {
        let p = &self.params;
        let w_star = self.w_xz[0] * x + self.w_xz[1] * z;
        let mu_u_wxz = self.u_wxz[0] * w_star + self.u_wxz[1] * x + self.u_wxz[2] * z;
        let mu_u_wx = self.u_wx[0] * w_star + self.u_wx[1] * x;
        let numerator = (p.a_yu * (mu_u_wxz - mu_u_wx)).abs();
        let denominator = (p.a_yx * x + p.a_yw * w_star + p.a_yu * mu_u_wxz).abs();
        if denominator < self.denom_floor {
            PointError::Excluded
        } else {
            PointError::Value(numerator / denominator)
        }
    }

    pub fn params(&self) -> &SemParams {
        &self.params
    }

    fn draw_x<R: Rng>(&self, rng: &mut R) -> f64 {
        self.var_x.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    fn draw_z_given_x<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        self.z_given_x.0 * x + self.z_given_x.1.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Relative error at one (x, z) point with the default denominator floor.
pub fn bridge_error_pointwise(params: &SemParams, x: f64, z: f64) -> Result<PointError> {
    Ok(BridgeErrorSolver::new(params, RelErrConfig::default().denom_floor)?.eval(x, z))
}

/// Sampling plan and trimming rule for the relative-error statistics.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RelErrConfig {
    /// treatment draws from the marginal of X
    pub n_x: usize,
    /// proxy draws from p(Z | x) per treatment draw
    pub n_z: usize,
    /// fraction of the largest values dropped (excluded points count first)
    pub trim_frac: f64,
    pub denom_floor: f64,
}

impl Default for RelErrConfig {
    fn default() -> Self {
        RelErrConfig { n_x: 200, n_z: 200, trim_frac: 0.1, denom_floor: 1e-8 }
    }
}

/// Trimmed mean and standard deviation of the pointwise relative error over
/// draws from the joint law of (X, Z).
pub fn mean_relative_error(
    params: &SemParams,
    n_points: usize,
    trim_frac: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_points < 100 {
        return Err(Error::Contract(format!("need at least 100 points, got {}", n_points)));
    }
    if !(0.0..0.5).contains(&trim_frac) {
        return Err(Error::Contract(format!("trim fraction {} outside [0, 0.5)", trim_frac)));
    }
    let solver = BridgeErrorSolver::new(params, RelErrConfig::default().denom_floor)?;
    let mut rng = seed::rng(seed);
    let mut values = Vec::with_capacity(n_points);
    let mut excluded = 0usize;
    for _ in 0..n_points {
        let x = solver.draw_x(&mut rng);
        let z = solver.draw_z_given_x(x, &mut rng);
        match solver.eval(x, z) {
            PointError::Value(v) => values.push(v),
            PointError::Excluded => excluded += 1,
        }
    }
    trimmed_stats(values, excluded, n_points, trim_frac)
}

/// Drop the largest `trim_frac` of all evaluated points (excluded points
/// count toward the budget first) and return mean, sample std, and the kept
/// count.
pub(crate) fn trimmed_stats_kept(
    mut values: Vec<f64>,
    excluded: usize,
    total: usize,
    trim_frac: f64,
) -> Result<(f64, f64, usize)> {
    if values.is_empty() {
        return Err(Error::Degenerate("every point was excluded by the denominator floor".into()));
    }
    let budget = (trim_frac * total as f64).floor() as usize;
    let drop_largest = budget.saturating_sub(excluded).min(values.len().saturating_sub(1));
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.truncate(values.len() - drop_largest);
    Ok((stats::mean(&values), stats::sample_std(&values), values.len()))
}

pub(crate) fn trimmed_stats(
    values: Vec<f64>,
    excluded: usize,
    total: usize,
    trim_frac: f64,
) -> Result<(f64, f64)> {
    trimmed_stats_kept(values, excluded, total, trim_frac).map(|(m, s, _)| (m, s))
}

/// One cell of a noise-scale sweep.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepCell {
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub sigma_x: f64,
    pub mean_r: f64,
    pub std_r: f64,
    pub mi_nats: f64,
    pub n_kept: usize,
    pub seed: u64,
}

/// Cartesian grid over the three noise scales.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepGrid {
    pub sigma_w: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub sigma_x: Vec<f64>,
}

impl SweepGrid {
    /// The five-by-five grid of the error-versus-information figure at one
    /// treatment noise scale.
    pub fn figure_grid(sigma_x: f64) -> Self {
        SweepGrid {
            sigma_w: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            sigma_z: vec![0.1, 0.25, 0.5, 0.75, 1.0],
            sigma_x: vec![sigma_x],
        }
    }

    pub fn len(&self) -> usize {
        self.sigma_w.len() * self.sigma_z.len() * self.sigma_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cell(&self, index: usize) -> (f64, f64, f64) {
        let nw = self.sigma_w.len();
        let nz = self.sigma_z.len();
        let iw = index % nw;
        let iz = (index / nw) % nz;
        let ix = index / (nw * nz);
        (self.sigma_w[iw], self.sigma_z[iz], self.sigma_x[ix])
    }
}

/// Evaluate every cell of the grid. Cells run independently with seeds
/// derived from `(base_seed, cell_index)`, so results do not depend on
/// evaluation order.
pub fn sweep(
    grid: &SweepGrid,
    base: &SemParams,
    cfg: &RelErrConfig,
    base_seed: u64,
) -> Result<Vec<SweepCell>> {
    if grid.is_empty() {
        return Err(Error::Contract("sweep grid is empty".into()));
    }
    let cells: Vec<Result<SweepCell>> = par::map_indexed(grid.len(), |index| {
        let (sw, sz, sx) = grid.cell(index);
        let mut p = *base;
        p.sigma_w = sw;
        p.sigma_z = sz;
        p.sigma_x = sx;
        let cell_seed = seed::derive(base_seed, index as u64);
        evaluate_cell(&p, cfg, cell_seed).map_err(|e| {
            Error::Numerical(format!(
                "cell (sigma_w={}, sigma_z={}, sigma_x={}): {}",
                sw, sz, sx, e
            ))
        })
    });
    cells.into_iter().collect()
}

/// Relative-error statistics and mutual information for one parameter
/// setting, with the structured draw plan (x from the marginal, z from
/// p(Z | x)).
pub fn evaluate_cell(params: &SemParams, cfg: &RelErrConfig, cell_seed: u64) -> Result<SweepCell> {
    let solver = BridgeErrorSolver::new(params, cfg.denom_floor)?;
    let total = cfg.n_x * cfg.n_z;
    if total == 0 {
        return Err(Error::Contract("cell draw plan is empty".into()));
    }
    let mut rng = seed::rng(cell_seed);
    let mut values = Vec::with_capacity(total);
    let mut excluded = 0usize;
    for _ in 0..cfg.n_x {
        let x = solver.draw_x(&mut rng);
        for _ in 0..cfg.n_z {
            let z = solver.draw_z_given_x(x, &mut rng);
            match solver.eval(x, z) {
                PointError::Value(v) => values.push(v),
                PointError::Excluded => excluded += 1,
            }
        }
    }
    let (mean_r, std_r, n_kept) = trimmed_stats_kept(values, excluded, total, cfg.trim_frac)?;
    let mi = params.conditional_mi()?;
    Ok(SweepCell {
        sigma_w: params.sigma_w,
        sigma_z: params.sigma_z,
        sigma_x: params.sigma_x,
        mean_r,
        std_r,
        mi_nats: mi,
        n_kept,
        seed: cell_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma_condition_gives_zero_error() {
        let mut p = SemParams::unit_coefficients(10.0, 0.5, 0.3, 1.0);
        p.sigma_x = p.lemma_sigma_x().unwrap();
        for (x, z) in [(0.5, -1.0), (3.0, 2.0), (-10.0, 4.0)] {
            match bridge_error_pointwise(&p, x, z).unwrap() {
                PointError::Value(v) => assert!(v < 1e-10, "r = {}", v),
                PointError::Excluded => {}
            }
        }
        let (m, s) = mean_relative_error(&p, 5000, 0.1, 7).unwrap();
        assert!(m < 1e-8, "mean {}", m);
        assert!(s < 1e-8, "std {}", s);
    }

    #[test]
    fn zero_outcome_confounding_gives_zero_error() {
        let p = SemParams::new_unchecked(1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.5, 0.7, 0.9, 1.0);
        for (x, z) in [(0.5, -1.0), (3.0, 2.0)] {
            match bridge_error_pointwise(&p, x, z).unwrap() {
                PointError::Value(v) => assert_eq!(v, 0.0),
                PointError::Excluded => panic!("unexpected exclusion"),
            }
        }
    }

    #[test]
    fn trimming_mean_of_three_manual_values() {
        let (m, _) = trimmed_stats(vec![0.1, 0.2, 0.3], 0, 3, 0.0).unwrap();
        assert!((m - 0.2).abs() < 1e-15);
    }

    #[test]
    fn trimming_drops_largest_after_exclusions() {
        // budget 2 of 10; one exclusion leaves one value to drop
        let vals = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 100.0];
        let (m, _) = trimmed_stats(vals, 1, 10, 0.2).unwrap();
        assert!((m - 4.5).abs() < 1e-12);
    }

    #[test]
    fn pointwise_error_matches_structural_quadrature_oracle() {
        // independent route: one-dimensional quadrature over the latent U
        // using the structural densities, no covariance algebra
        let check = |p: &SemParams, x: f64, z: f64| {
            let e_u_xz = quad_posterior_mean(p, None, Some(x), Some(z));
            let e_w_xz = p.a_wu * e_u_xz;
            let e_y_xz = p.a_yx * x + p.a_yw * e_w_xz + p.a_yu * e_u_xz;
            // E_{W|x,z}[ E[U | W, x] ]: integrate over u' ~ p(U|x,z) and the
            // independent proxy noise
            let mut acc = 0.0;
            let mut norm = 0.0;
            let (us, wts) = quad_posterior(p, None, Some(x), Some(z));
            // proxy noise grid
            let g = 241;
            for (ui, pu) in us.iter().zip(wts.iter()) {
                for k in 0..g {
                    let t = -4.0 + 8.0 * (k as f64) / (g - 1) as f64;
                    let pe = (-0.5 * t * t).exp();
                    let w = p.a_wu * ui + p.sigma_w * t;
                    let inner = quad_posterior_mean(p, Some(w), Some(x), None);
                    acc += pu * pe * inner;
                    norm += pu * pe;
                }
            }
            let e_b = p.a_yx * x + p.a_yw * e_w_xz + p.a_yu * acc / norm;
            let oracle = (e_y_xz - e_b).abs() / e_y_xz.abs();
            match bridge_error_pointwise(p, x, z).unwrap() {
                PointError::Value(v) => {
                    assert!(
                        (v - oracle).abs() < 2e-3 * (1.0 + oracle),
                        "closed {} vs oracle {}",
                        v,
                        oracle
                    );
                }
                PointError::Excluded => panic!("unexpected exclusion"),
            }
        };
        let p = SemParams::unit_coefficients(10.0, 1.0, 1.0, 0.1);
        check(&p, 1.5, 0.7);
        check(&p, -2.0, 1.0);
        // non-unit outcome loading exercises the denominator convention
        let q = SemParams::new(1.0, 0.5, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, 0.6, 0.8, 0.5, 1.0).unwrap();
        check(&q, 1.0, -0.4);
    }

    // unnormalized posterior over U given any subset of (w, x, z), evaluated
    // on a fixed grid from the structural densities alone
    fn quad_posterior(
        p: &SemParams,
        w: Option<f64>,
        x: Option<f64>,
        z: Option<f64>,
    ) -> (Vec<f64>, Vec<f64>) {
        let g = 4001;
        let r = 8.0 * p.sigma_u;
        let sx2 = match z {
            // x given (u, z): N(a_xz z + a_xu u, sigma_x^2)
            Some(_) => p.sigma_x * p.sigma_x,
            // x given u alone: N((a_xz a_zu + a_xu) u, a_xz^2 sigma_z^2 + sigma_x^2)
            None => p.a_xz * p.a_xz * p.sigma_z * p.sigma_z + p.sigma_x * p.sigma_x,
        };
        let mut us = Vec::with_capacity(g);
        let mut lw = Vec::with_capacity(g);
        for k in 0..g {
            let u = -r + 2.0 * r * (k as f64) / (g - 1) as f64;
            let mut l = -0.5 * u * u / (p.sigma_u * p.sigma_u);
            if let Some(w) = w {
                let d = w - p.a_wu * u;
                l += -0.5 * d * d / (p.sigma_w * p.sigma_w);
            }
            if let Some(z) = z {
                let d = z - p.a_zu * u;
                l += -0.5 * d * d / (p.sigma_z * p.sigma_z);
            }
            if let Some(x) = x {
                let m = match z {
                    Some(z) => p.a_xz * z + p.a_xu * u,
                    None => p.total_ux() * u,
                };
                let d = x - m;
                l += -0.5 * d * d / sx2;
            }
            us.push(u);
            lw.push(l);
        }
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let wts: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
        (us, wts)
    }

    fn quad_posterior_mean(p: &SemParams, w: Option<f64>, x: Option<f64>, z: Option<f64>) -> f64 {
        let (us, wts) = quad_posterior(p, w, x, z);
        let norm: f64 = wts.iter().sum();
        us.iter().zip(wts.iter()).map(|(u, w)| u * w).sum::<f64>() / norm
    }
}
