//! The Demand benchmark: price as treatment, sales as outcome, latent
//! demand as confounder, cost shifters as treatment proxies and page views
//! as the outcome proxy.
//!
//! Generation:
//! ```text
//! D  ~ Unif[0, 10]
//! C1 = 2 sin(2 pi D / 10) + e1
//! C2 = 2 cos(2 pi D / 10) + e2
//! V  = 7 g(D) + 45 + e3
//! P  = 35 + (C1 + 3) g(D) + C2 + e4
//! Y  = P (exp(min((V - P) / 10, 5)) - 5 g(D)) + e
//! ```
//! with all noise standard normal and
//! `g(d) = 2((d - 5)^4 / 600 + exp(-4 (d - 5)^2)) + d / 10 - 2`.

use super::{Outcome, ProximalDataset, Record, Split};
use crate::error::{Error, Result};
use crate::par;
use crate::seed;
use rand::Rng;
use rand_distr::StandardNormal;

/// Ten evenly spaced treatment values in [10, 30] used for out-of-sample
/// dose-response evaluation.
pub const DEMAND_TEST_GRID: [f64; 10] = [
    10.0,
    12.222222222222221,
    14.444444444444445,
    16.666666666666668,
    18.88888888888889,
    21.11111111111111,
    23.333333333333332,
    25.555555555555557,
    27.77777777777778,
    30.0,
];

/// Demand curve shape.
pub fn g_demand(d: f64) -> f64 {
    let c = d - 5.0;
    2.0 * (c.powi(4) / 600.0 + (-4.0 * c * c).exp()) + d / 10.0 - 2.0
}

/// One generated observation. The latent demand is retained only when the
/// dataset is produced in debug mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandRecord {
    pub d: f64,
    pub c1: f64,
    pub c2: f64,
    pub v: f64,
    pub p: f64,
    pub y: f64,
}

pub(crate) fn demand_draw<R: Rng>(rng: &mut R) -> DemandRecord {
    let d: f64 = rng.gen_range(0.0..10.0);
    let g = g_demand(d);
    let e1: f64 = rng.sample(StandardNormal);
    let e2: f64 = rng.sample(StandardNormal);
    let e3: f64 = rng.sample(StandardNormal);
    let e4: f64 = rng.sample(StandardNormal);
    let ey: f64 = rng.sample(StandardNormal);
    let c1 = 2.0 * (2.0 * d * std::f64::consts::PI / 10.0).sin() + e1;
    let c2 = 2.0 * (2.0 * d * std::f64::consts::PI / 10.0).cos() + e2;
    let v = 7.0 * g + 45.0 + e3;
    let p = 35.0 + (c1 + 3.0) * g + c2 + e4;
    let y = p * (((v - p) / 10.0).min(5.0).exp() - 5.0 * g) + ey;
    DemandRecord { d, c1, c2, v, p, y }
}

/// Seeded Demand dataset with x = price, z = (c1, c2), w = views. Stage-1
/// and stage-2 share the same draws. `debug` retains the latent demand.
pub fn generate_demand(n: usize, seed_value: u64, debug: bool) -> Result<ProximalDataset> {
    if n < 100 {
        return Err(Error::Config(format!("demand generator needs n >= 100, got {}", n)));
    }
    let mut rng = seed::rng(seed::derive(seed_value, 0x64656d61));
    let mut records = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    for _ in 0..n {
        let r = demand_draw(&mut rng);
        latent.push(r.d);
        records.push(Record {
            x: r.p,
            z: vec![r.c1, r.c2],
            w: vec![r.v],
            outcome: Outcome::Continuous(r.y),
            split: Split::Train,
        });
    }
    Ok(ProximalDataset {
        records,
        z_dim: 2,
        w_dim: 1,
        seed: seed_value,
        latent_debug: if debug { Some(latent) } else { None },
    })
}

/// Interventional dose-response at one price: latent demand and the view
/// noise are integrated by Monte Carlo, the outcome noise integrates to
/// zero exactly. Returns (value, standard error).
pub fn demand_truth_at(price: f64, mc_n: usize, seed_value: u64) -> (f64, f64) {
    let chunk = 65_536usize;
    let n_chunks = (mc_n + chunk - 1) / chunk;
    let sums: Vec<(f64, f64, usize)> = par::map_indexed(n_chunks, |c| {
        let mut rng = seed::rng(seed::derive_path(seed_value, &[0x7472, c as u64]));
        let take = chunk.min(mc_n - c * chunk);
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..take {
            let d: f64 = rng.gen_range(0.0..10.0);
            let g = g_demand(d);
            let e3: f64 = rng.sample(StandardNormal);
            let v = 7.0 * g + 45.0 + e3;
            let y = price * (((v - price) / 10.0).min(5.0).exp() - 5.0 * g);
            s += y;
            s2 += y * y;
        }
        (s, s2, take)
    });
    let total: f64 = sums.iter().map(|(s, _, _)| s).sum();
    let total2: f64 = sums.iter().map(|(_, s2, _)| s2).sum();
    let count: usize = sums.iter().map(|(_, _, n)| n).sum();
    let mean = total / count as f64;
    let var = (total2 / count as f64 - mean * mean).max(0.0);
    (mean, (var / count as f64).sqrt())
}

/// Ground-truth dose-response over a price grid.
pub fn demand_ground_truth(p_grid: &[f64], mc_n: usize, seed_value: u64) -> Result<Vec<f64>> {
    if mc_n < 100_000 {
        return Err(Error::SampleSize(format!(
            "ground truth needs at least 1e5 Monte Carlo draws, got {}",
            mc_n
        )));
    }
    Ok(p_grid
        .iter()
        .enumerate()
        .map(|(k, &p)| demand_truth_at(p, mc_n, seed::derive(seed_value, k as u64)).0)
        .collect())
}
