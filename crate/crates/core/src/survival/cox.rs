//! Cox proportional-hazards machinery: weighted partial likelihood with
//! Breslow tie handling, a Newton fit for the treatment-only model,
//! Kaplan-Meier curves, and Harrell's concordance index.
//!
//! Risk sets use `y_j >= y_i`; an event's own record is always in its risk
//! set, so a singleton likelihood is well defined.

use crate::error::{Error, Result};

/// Precomputed ordering of survival records shared by likelihood and
/// gradient evaluation.
#[derive(Debug, Clone)]
pub struct CoxLayout {
    /// record indices sorted by observed time ascending
    order: Vec<usize>,
    /// for each sorted position, the first position of its tie group
    tie_start: Vec<usize>,
    /// for each sorted position, the last position of its tie group
    tie_end: Vec<usize>,
    times: Vec<f64>,
    events: Vec<bool>,
    weights: Vec<f64>,
    n_events: usize,
}

impl CoxLayout {
    pub fn new(times: &[f64], events: &[bool], weights: &[f64]) -> Result<Self> {
        let n = times.len();
        if events.len() != n || weights.len() != n {
            return Err(Error::Dimension("times/events/weights lengths differ".into()));
        }
        if n == 0 {
            return Err(Error::Degenerate("no survival records".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Contract(format!("time {} at record {} must be positive", t, i)));
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::Contract(format!("weight {} at record {} must be >= 0", w, i)));
            }
        }
        let n_events = events.iter().filter(|&&e| e).count();
        if n_events == 0 {
            return Err(Error::Degenerate("no observed events".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap().then(a.cmp(&b)));
        let mut tie_start = vec![0usize; n];
        for p in 1..n {
            tie_start[p] = if times[order[p]] == times[order[p - 1]] { tie_start[p - 1] } else { p };
        }
        let mut tie_end = vec![n - 1; n];
        for p in (0..n - 1).rev() {
            tie_end[p] = if tie_start[p + 1] == tie_start[p] { tie_end[p + 1] } else { p };
        }
        Ok(CoxLayout {
            order,
            tie_start,
            tie_end,
            times: times.to_vec(),
            events: events.to_vec(),
            weights: weights.to_vec(),
            n_events,
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    /// Weighted log partial likelihood at the given log-relative hazards.
    pub fn log_partial_likelihood(&self, rho: &[f64]) -> Result<f64> {
        self.loglik_and_grad(rho, false).map(|(v, _)| v)
    }

    /// Log partial likelihood and its gradient with respect to `rho`.
    pub fn log_partial_likelihood_grad(&self, rho: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.loglik_and_grad(rho, true)?;
        Ok((v, g.expect("gradient requested")))
    }

    fn loglik_and_grad(&self, rho: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let n = self.n();
        if rho.len() != n {
            return Err(Error::Dimension("rho length mismatch".into()));
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite risk score".into()));
        }
        // shift by max(rho) so exponentials stay bounded
        let shift = rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expw: Vec<f64> = self.order.iter().map(|&i| self.weights[i] * (rho[i] - shift).exp()).collect();
        // suffix[p] = sum over sorted positions >= p of w * exp(rho - shift)
        let mut suffix = vec![0.0; n + 1];
        for p in (0..n).rev() {
            suffix[p] = suffix[p + 1] + expw[p];
        }
        let mut loglik = 0.0;
        // event_coef[p] accumulates w_i / S_i over events at sorted positions <= p,
        // where S_i is the tie-group risk-set sum (shifted units)
        let mut prefix_ratio = vec![0.0; n];
        let mut acc = 0.0;
        for p in 0..n {
            let i = self.order[p];
            if self.events[i] {
                let s = suffix[self.tie_start[p]];
                if s <= 0.0 {
                    return Err(Error::Numerical("empty weighted risk set".into()));
                }
                loglik += self.weights[i] * (rho[i] - shift - s.ln());
                acc += self.weights[i] / s;
            }
            prefix_ratio[p] = acc;
        }
        let grad = if want_grad {
            let mut g = vec![0.0; n];
            for p in 0..n {
                let i = self.order[p];
                let ev = if self.events[i] { self.weights[i] } else { 0.0 };
                // events with y_i <= y_r include r's full tie group
                g[i] = ev - self.weights[i] * (rho[i] - shift).exp() * prefix_ratio[self.tie_end[p]];
            }
            Some(g)
        } else {
            None
        };
        Ok((loglik, grad))
    }
}

/// Weighted log partial likelihood (Breslow ties, risk set `y_j >= y_i`).
pub fn cox_partial_loglik(times: &[f64], events: &[bool], rho: &[f64], weights: &[f64]) -> Result<f64> {
    CoxLayout::new(times, events, weights)?.log_partial_likelihood(rho)
}

/// Treatment-only Cox fit result.
#[derive(Debug, Clone)]
pub struct CoxFit {
    pub beta: f64,
    pub se: f64,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub iterations: usize,
}

/// Newton fit of the weighted partial likelihood in a single scalar
/// coefficient for a binary treatment. The standard error comes from the
/// inverse observed information at the optimum.
pub fn fit_coxph_treatment_only(
    times: &[f64],
    events: &[bool],
    x: &[f64],
    weights: &[f64],
) -> Result<CoxFit> {
    let n = times.len();
    if x.len() != n {
        return Err(Error::Dimension("treatment length mismatch".into()));
    }
    let layout = CoxLayout::new(times, events, weights)?;
    let mut arms = [false, false];
    for i in 0..n {
        if events[i] {
            arms[if x[i] > 0.5 { 1 } else { 0 }] = true;
        }
    }
    if !(arms[0] && arms[1]) {
        return Err(Error::Degenerate("events present in only one treatment arm".into()));
    }

    let mut beta = 0.0f64;
    let mut trace = Vec::new();
    for it in 0..100 {
        let (d1, d2) = score_and_info(&layout, x, beta);
        if d2 <= 0.0 || !d2.is_finite() {
            return Err(Error::Numerical(format!("non-positive information at beta={}", beta)));
        }
        let step = d1 / d2;
        let capped = step.clamp(-2.0, 2.0);
        beta += capped;
        trace.push(beta);
        if capped.abs() < 1e-10 {
            let (_, info) = score_and_info(&layout, x, beta);
            let se = (1.0 / info).sqrt();
            return Ok(CoxFit {
                beta,
                se,
                hr: beta.exp(),
                ci_low: (beta - 1.96 * se).exp(),
                ci_high: (beta + 1.96 * se).exp(),
                iterations: it + 1,
            });
        }
    }
    Err(Error::Numerical(format!(
        "treatment-only Cox fit did not converge in 100 iterations; trace tail {:?}",
        &trace[trace.len().saturating_sub(5)..]
    )))
}

/// Score and observed information of the weighted partial likelihood at beta
/// for a scalar covariate.
fn score_and_info(layout: &CoxLayout, x: &[f64], beta: f64) -> (f64, f64) {
    let n = layout.n();
    // suffix sums over sorted positions of w*e^{beta x}, w*x*e^{..}, w*x^2*e^{..}
    let mut s0 = vec![0.0; n + 1];
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for p in (0..n).rev() {
        let i = layout.order[p];
        let e = layout.weights[i] * (beta * x[i]).exp();
        s0[p] = s0[p + 1] + e;
        s1[p] = s1[p + 1] + e * x[i];
        s2[p] = s2[p + 1] + e * x[i] * x[i];
    }
    let mut score = 0.0;
    let mut info = 0.0;
    for p in 0..n {
        let i = layout.order[p];
        if layout.events[i] {
            let t = layout.tie_start[p];
            let mean = s1[t] / s0[t];
            score += layout.weights[i] * (x[i] - mean);
            info += layout.weights[i] * (s2[t] / s0[t] - mean * mean);
        }
    }
    (score, info)
}

/// One step of a Kaplan-Meier curve: survival value from `time` onward.
#[derive(Debug, Clone, PartialEq)]
pub struct KmStep {
    pub time: f64,
    pub survival: f64,
    pub at_risk: usize,
    pub events: usize,
}

/// Product-limit estimator. Returns the right-continuous step function as a
/// list of (event time, survival after that time) points, starting implicitly
/// at survival 1 before the first event.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<Vec<KmStep>> {
    let n = times.len();
    if n == 0 {
        return Err(Error::Degenerate("empty group for Kaplan-Meier".into()));
    }
    if events.len() != n {
        return Err(Error::Dimension("times/events lengths differ".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap().then(a.cmp(&b)));
    let mut steps = Vec::new();
    let mut surv = 1.0;
    let mut p = 0;
    while p < n {
        let t = times[order[p]];
        let at_risk = n - p;
        let mut d = 0;
        let mut q = p;
        while q < n && times[order[q]] == t {
            if events[order[q]] {
                d += 1;
            }
            q += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            steps.push(KmStep { time: t, survival: surv, at_risk, events: d });
        }
        p = q;
    }
    Ok(steps)
}

/// Harrell's concordance index for right-censored data. A pair (i, j) is
/// comparable when subject i has an observed event strictly before y_j; the
/// pair is concordant when rho_i > rho_j, and risk ties count one half.
pub fn concordance_index(rho: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    let n = rho.len();
    if times.len() != n || events.len() != n {
        return Err(Error::Dimension("concordance input lengths differ".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if j == i {
                continue;
            }
            if times[i] < times[j] {
                den += 1.0;
                if rho[i] > rho[j] {
                    num += 1.0;
                } else if rho[i] == rho[j] {
                    num += 0.5;
                }
            }
        }
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("no comparable pairs".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_events_uniform_weights() {
        // first event sees both subjects at risk, second sees itself only
        let ll = cox_partial_loglik(&[1.0, 2.0], &[true, true], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((ll - (-(2.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn singleton_event_is_zero() {
        let ll = cox_partial_loglik(&[3.0], &[true], &[1.7], &[1.0]).unwrap();
        assert!(ll.abs() < 1e-12);
    }

    #[test]
    fn late_censored_subject_changes_only_covering_risk_sets() {
        // hand recomputation: events at t=1 and t=2 with rho {a, b, c}
        let rho = [0.3, -0.2, 0.5];
        let base = cox_partial_loglik(&[1.0, 2.0], &[true, true], &rho[..2], &[1.0, 1.0]).unwrap();
        let with_censored =
            cox_partial_loglik(&[1.0, 2.0, 3.0], &[true, true, false], &rho, &[1.0, 1.0, 1.0]).unwrap();
        let e = |v: f64| v.exp();
        let expected = rho[0] - (e(rho[0]) + e(rho[1]) + e(rho[2])).ln() + rho[1] - (e(rho[1]) + e(rho[2])).ln();
        assert!((with_censored - expected).abs() < 1e-12);
        assert!((with_censored - base).abs() > 1e-3);
    }

    #[test]
    fn shift_invariance() {
        let times = [1.0, 4.0, 2.0, 8.0, 3.0];
        let events = [true, false, true, true, false];
        let rho = [0.1, -0.4, 1.2, 0.0, 0.7];
        let shifted: Vec<f64> = rho.iter().map(|v| v + 123.456).collect();
        let w = [1.0; 5];
        let a = cox_partial_loglik(&times, &events, &rho, &w).unwrap();
        let b = cox_partial_loglik(&times, &events, &shifted, &w).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn weight_scaling_is_degree_one() {
        let times = [1.0, 4.0, 2.0, 8.0, 3.0];
        let events = [true, false, true, true, false];
        let rho = [0.1, -0.4, 1.2, 0.0, 0.7];
        let w: Vec<f64> = vec![0.5, 1.5, 2.0, 0.25, 1.0];
        let scaled: Vec<f64> = w.iter().map(|v| v * 3.0).collect();
        let a = cox_partial_loglik(&times, &events, &rho, &w).unwrap();
        let b = cox_partial_loglik(&times, &events, &rho, &scaled).unwrap();
        // the rho term scales by c; the log-sum inside shifts by ln(c) per event weight
        let n_ev_weight: f64 = times
            .iter()
            .zip(events.iter())
            .zip(w.iter())
            .filter(|((_, &e), _)| e)
            .map(|((_, _), &wi)| wi)
            .sum();
        assert!((b - 3.0 * (a - n_ev_weight * 3.0f64.ln())).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let times = [1.0, 4.0, 2.0, 8.0, 3.0, 2.0];
        let events = [true, false, true, true, false, true];
        let rho = [0.1, -0.4, 1.2, 0.0, 0.7, -0.3];
        let w = [1.0, 0.5, 2.0, 1.0, 1.5, 0.8];
        let layout = CoxLayout::new(&times, &events, &w).unwrap();
        let (_, grad) = layout.log_partial_likelihood_grad(&rho).unwrap();
        let h = 1e-6;
        for k in 0..rho.len() {
            let mut up = rho.to_vec();
            up[k] += h;
            let mut dn = rho.to_vec();
            dn[k] -= h;
            let fd = (layout.log_partial_likelihood(&up).unwrap()
                - layout.log_partial_likelihood(&dn).unwrap())
                / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() < 1e-6,
                "grad[{}]={} fd={}",
                k,
                grad[k],
                fd
            );
        }
    }

    #[test]
    fn km_classic_five_subject_example() {
        let steps = kaplan_meier(&[1.0, 2.0, 3.0, 4.0, 5.0], &[true, false, true, false, true]).unwrap();
        assert_eq!(steps.len(), 3);
        assert!((steps[0].survival - 0.8).abs() < 1e-12);
        assert!((steps[1].survival - 0.8 * (2.0 / 3.0)).abs() < 1e-12);
        assert!((steps[2].survival - 0.0).abs() < 1e-12);
    }

    #[test]
    fn km_no_censoring_drops_uniformly() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let steps = kaplan_meier(&times, &[true; 4]).unwrap();
        for (k, s) in steps.iter().enumerate() {
            assert!((s.survival - (1.0 - (k + 1) as f64 / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn km_all_censored_is_flat() {
        let steps = kaplan_meier(&[1.0, 2.0, 3.0], &[false; 3]).unwrap();
        assert!(steps.is_empty());
    }

    #[test]
    fn cindex_perfect_and_ties() {
        // higher risk, earlier event
        let times = [1.0, 2.0, 3.0, 4.0];
        let rho = [4.0, 3.0, 2.0, 1.0];
        let c = concordance_index(&rho, &times, &[true; 4]).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
        let c = concordance_index(&[1.0; 4], &times, &[true; 4]).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        let anti: Vec<f64> = rho.iter().map(|v| -v).collect();
        let c2 = concordance_index(&anti, &times, &[true; 4]).unwrap();
        assert!((c2 - 0.0).abs() < 1e-12);
    }
}
