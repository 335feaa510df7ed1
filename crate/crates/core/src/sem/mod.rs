//! Linear-Gaussian structural equation model with an unobserved confounder.
//!
//! The generative process is
//! ```text
//! U ~ N(0, sigma_u^2)
//! W = a_wu U + eps_W
//! Z = a_zu U + eps_Z
//! X = a_xz Z + a_xu U + eps_X
//! Y = a_yx X + a_yw W + a_yu U + eps_Y
//! ```
//! with independent zero-mean Gaussian noise. Because every variable is
//! linear in U, the vector (U, W, Z, X) is jointly Gaussian and everything
//! about the causal-bridge approximation error has a closed form: the joint
//! covariance, all conditionals, the pointwise relative error, the
//! conditional mutual information I(U; Z | W, X), and the partial covariance
//! Cov(U, Z | W, X) whose zero set characterizes exact bridges.

mod joint;
mod relerr;
mod truncated;

pub use joint::{ConditionalGaussian, GaussianJoint, Var};
pub use relerr::{
    mean_relative_error, sweep, BridgeErrorSolver, PointError, RelErrConfig, SweepCell, SweepGrid,
};
pub use truncated::{theorem3_bound_check, BoundCheck, BoundCheckConfig, TruncatedSem};

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Structural coefficients and noise scales.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SemParams {
    pub a_yx: f64,
    pub a_yw: f64,
    pub a_yu: f64,
    pub a_wu: f64,
    pub a_zu: f64,
    pub a_xz: f64,
    pub a_xu: f64,
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl SemParams {
    /// Validated constructor: positive noise scales, and the coefficients
    /// that must be nonzero for the proxy structure to be meaningful.
    pub fn new(
        a_yx: f64,
        a_yw: f64,
        a_yu: f64,
        a_wu: f64,
        a_zu: f64,
        a_xz: f64,
        a_xu: f64,
        sigma_u: f64,
        sigma_w: f64,
        sigma_z: f64,
        sigma_x: f64,
        sigma_y: f64,
    ) -> Result<Self> {
        let p = SemParams {
            a_yx,
            a_yw,
            a_yu,
            a_wu,
            a_zu,
            a_xz,
            a_xu,
            sigma_u,
            sigma_w,
            sigma_z,
            sigma_x,
            sigma_y,
        };
        for (name, s) in [
            ("sigma_u", sigma_u),
            ("sigma_w", sigma_w),
            ("sigma_z", sigma_z),
            ("sigma_x", sigma_x),
            ("sigma_y", sigma_y),
        ] {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Contract(format!("{} must be positive, got {}", name, s)));
            }
        }
        for (name, a) in [("a_yx", a_yx), ("a_yw", a_yw), ("a_yu", a_yu), ("a_zu", a_zu)] {
            if a == 0.0 || !a.is_finite() {
                return Err(Error::Contract(format!("{} must be nonzero", name)));
            }
        }
        Ok(p)
    }

    /// Unit coefficients with the given noise scales; the setting used by the
    /// error-versus-information experiments.
    pub fn unit_coefficients(sigma_u: f64, sigma_w: f64, sigma_z: f64, sigma_x: f64) -> Self {
        SemParams {
            a_yx: 1.0,
            a_yw: 1.0,
            a_yu: 1.0,
            a_wu: 1.0,
            a_zu: 1.0,
            a_xz: 1.0,
            a_xu: 1.0,
            sigma_u,
            sigma_w,
            sigma_z,
            sigma_x,
            sigma_y: 1.0,
        }
    }

    /// Unvalidated constructor for limit analyses (for example a vanished
    /// confounder path). Regular callers should use [`SemParams::new`].
    #[allow(clippy::too_many_arguments)]
    pub fn new_unchecked(
        a_yx: f64,
        a_yw: f64,
        a_yu: f64,
        a_wu: f64,
        a_zu: f64,
        a_xz: f64,
        a_xu: f64,
        sigma_u: f64,
        sigma_w: f64,
        sigma_z: f64,
        sigma_x: f64,
        sigma_y: f64,
    ) -> Self {
        SemParams {
            a_yx,
            a_yw,
            a_yu,
            a_wu,
            a_zu,
            a_xz,
            a_xu,
            sigma_u,
            sigma_w,
            sigma_z,
            sigma_x,
            sigma_y,
        }
    }

    /// Combined U -> X path coefficient `a_xz a_zu + a_xu`.
    pub fn total_ux(&self) -> f64 {
        self.a_xz * self.a_zu + self.a_xu
    }

    /// Noise scale that satisfies the exact-bridge condition
    /// sigma_x^2 / sigma_z^2 = a_xu a_xz / a_zu for the other parameters.
    pub fn lemma_sigma_x(&self) -> Option<f64> {
        let ratio = self.a_xu * self.a_xz / self.a_zu;
        if ratio > 0.0 {
            Some(self.sigma_z * ratio.sqrt())
        } else {
            None
        }
    }

    /// One draw of (u, w, z, x).
    pub fn draw_uwzx<R: Rng>(&self, rng: &mut R) -> [f64; 4] {
        let u = self.sigma_u * rng.sample::<f64, _>(StandardNormal);
        let w = self.a_wu * u + self.sigma_w * rng.sample::<f64, _>(StandardNormal);
        let z = self.a_zu * u + self.sigma_z * rng.sample::<f64, _>(StandardNormal);
        let x = self.a_xz * z + self.a_xu * u + self.sigma_x * rng.sample::<f64, _>(StandardNormal);
        [u, w, z, x]
    }

    /// One draw of (u, w, z, x, y).
    pub fn draw_full<R: Rng>(&self, rng: &mut R) -> [f64; 5] {
        let [u, w, z, x] = self.draw_uwzx(rng);
        let y = self.a_yx * x + self.a_yw * w + self.a_yu * u
            + self.sigma_y * rng.sample::<f64, _>(StandardNormal);
        [u, w, z, x, y]
    }

    /// Closed-form joint covariance of (U, W, Z, X).
    pub fn covariance(&self) -> Result<GaussianJoint> {
        joint::sem_covariance(self)
    }

    /// Conditional mutual information I(U; Z | W, X) in nats. For jointly
    /// Gaussian variables this equals
    /// `0.5 ln(var(U | W, X) / var(U | W, X, Z))` and is constant in the
    /// conditioning values.
    pub fn conditional_mi(&self) -> Result<f64> {
        let joint = self.covariance()?;
        let var_wx = joint.condition(&[Var::U], &[Var::W, Var::X], &[0.0, 0.0])?.cov.get(0, 0);
        let var_wxz = joint
            .condition(&[Var::U], &[Var::W, Var::X, Var::Z], &[0.0, 0.0, 0.0])?
            .cov
            .get(0, 0);
        if var_wxz <= 0.0 {
            return Err(Error::Numerical(format!(
                "non-positive residual variance {} in mutual information",
                var_wxz
            )));
        }
        Ok((0.5 * (var_wx / var_wxz).ln()).max(0.0))
    }

    /// Closed-form partial covariance Cov(U, Z | W, X). Zero exactly when
    /// `-a_xu a_xz sigma_z^2 + a_zu sigma_x^2 = 0`.
    pub fn cov_uz_given_wx(&self) -> f64 {
        let p = self;
        let (su2, sw2, sz2, sx2) =
            (p.sigma_u * p.sigma_u, p.sigma_w * p.sigma_w, p.sigma_z * p.sigma_z, p.sigma_x * p.sigma_x);
        let num = su2 * sw2 * (-p.a_xu * p.a_xz * sz2 + p.a_zu * sx2);
        let den = p.a_wu * p.a_wu * p.a_xz * p.a_xz * su2 * sz2
            + p.a_wu * p.a_wu * su2 * sx2
            + p.a_xu * p.a_xu * su2 * sw2
            + 2.0 * p.a_xu * p.a_xz * p.a_zu * su2 * sw2
            + p.a_xz * p.a_xz * p.a_zu * p.a_zu * su2 * sw2
            + p.a_xz * p.a_xz * sw2 * sz2
            + sw2 * sx2;
        num / den
    }
}
