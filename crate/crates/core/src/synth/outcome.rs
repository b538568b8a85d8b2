//! Lead outcome model of the synthetic city and its calibration.
//!
//! A reading at a parcel with standardized latent risk `r` in a month with
//! effect `d` is `floor(exp(Z))` with
//!
//! ```text
//! Z = c0 + s*r + d + k*(se*e + J*tau*|u|),   e, u ~ N(0, 1),  J ~ Bernoulli(spike_prob)
//! ```
//!
//! where `k` is the measurement-noise multiplier. The total scale
//! `S = sqrt(s^2 + se^2)` splits by the shared share `rho = s^2 / S^2`, which
//! sets how strongly repeat readings at one parcel agree.
//!
//! `(c0, S, tau)` are chosen by Nelder-Mead so the mixture CDF over the
//! expected test population hits the configured probability targets in
//! probit space; `rho` is then bisected so the simulated correlation of
//! `ln(lead + 1)` between repeat readings hits its target.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{logit, normal_cdf, normal_quantile, sigmoid};
use crate::rng::{self, standard_normal};

/// Readings are clipped here (the recorded maximum is of this order).
pub const LEAD_CAP_PPB: u32 = 25_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub c0: f64,
    /// Loading on the standardized latent risk.
    pub s: f64,
    /// Per-reading noise scale.
    pub se: f64,
    pub tau: f64,
    pub spike_prob: f64,
    pub rho: f64,
    /// Probit-space squared error left at the targets.
    pub residual: f64,
}

impl OutcomeModel {
    /// Log-scale location of a reading.
    #[inline]
    pub fn location(&self, risk: f64, month_effect: f64) -> f64 {
        self.c0 + self.s * risk + month_effect
    }

    pub fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        risk: f64,
        month_effect: f64,
        noise: f64,
    ) -> u32 {
        let e = standard_normal(rng);
        let spike = if rng.gen::<f64>() < self.spike_prob {
            self.tau * libm::fabs(standard_normal(rng))
        } else {
            // keep the stream aligned whether or not the spike fires
            let _ = standard_normal(rng);
            0.0
        };
        let z = self.location(risk, month_effect) + noise * (self.se * e + spike);
        floor_reading(z)
    }

    /// P(reading < level) for one parcel, i.e. P(Z < ln level).
    pub fn cdf_below(&self, level: u32, location: f64, noise: f64, nodes: &HalfNormalNodes) -> f64 {
        if level == 0 {
            return 0.0;
        }
        if level > LEAD_CAP_PPB {
            return 1.0;
        }
        let z = libm::log(f64::from(level));
        mixture_cdf(
            z,
            location,
            self.se * noise,
            self.tau * noise,
            self.spike_prob,
            nodes,
        )
    }
}

#[inline]
pub fn floor_reading(z: f64) -> u32 {
    if z >= libm::log(f64::from(LEAD_CAP_PPB)) {
        LEAD_CAP_PPB
    } else {
        libm::floor(libm::exp(z)) as u32
    }
}

/// Quadrature nodes for E[f(|u|)], u standard normal: [0, 8] cut into equal
/// cells, each weighted by its exact mass and placed at its conditional mean.
#[derive(Debug, Clone)]
pub struct HalfNormalNodes {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl HalfNormalNodes {
    pub fn new(n: usize) -> Self {
        let h = 8.0 / n as f64;
        let phi = |a: f64| libm::exp(-0.5 * a * a) / libm::sqrt(2.0 * core::f64::consts::PI);
        let cdf = |a: f64| 0.5 * libm::erfc(-a / core::f64::consts::SQRT_2);
        let mut x = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let mass = 2.0 * (cdf(b) - cdf(a));
            x.push(if mass > 0.0 {
                2.0 * (phi(a) - phi(b)) / mass
            } else {
                0.5 * (a + b)
            });
            w.push(mass);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        HalfNormalNodes { x, w }
    }
}

/// CDF at `z` of `loc + se*e + J*tau*|u|`.
#[inline]
fn mixture_cdf(
    z: f64,
    loc: f64,
    se: f64,
    tau: f64,
    spike_prob: f64,
    nodes: &HalfNormalNodes,
) -> f64 {
    if se <= 0.0 {
        // degenerate noise: point mass at loc
        return if z > loc { 1.0 } else { 0.0 };
    }
    let base = normal_cdf((z - loc) / se);
    if spike_prob <= 0.0 {
        return base;
    }
    let spiked: f64 = nodes
        .x
        .iter()
        .zip(&nodes.w)
        .map(|(&a, &w)| w * normal_cdf((z - loc - tau * a) / se))
        .sum();
    (1.0 - spike_prob) * base + spike_prob * spiked
}

/// Probability targets: P(reading < level) = prob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub level: f64,
    pub prob: f64,
}

/// Weighted risk values standing in for the test population.
#[derive(Debug, Clone)]
pub struct RiskHistogram {
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RiskHistogram {
    pub fn new(risk: &[f64], weight: &[f64], bins: usize) -> Self {
        let lo = risk.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = risk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            1.0
        };
        let mut wsum = alloc::vec![0.0; bins];
        let mut rsum = alloc::vec![0.0; bins];
        for (&r, &w) in risk.iter().zip(weight) {
            let b = (((r - lo) / width) as usize).min(bins - 1);
            wsum[b] += w;
            rsum[b] += w * r;
        }
        let total: f64 = wsum.iter().sum();
        let mut centers = Vec::new();
        let mut weights = Vec::new();
        for b in 0..bins {
            if wsum[b] > 0.0 {
                centers.push(rsum[b] / wsum[b]);
                weights.push(wsum[b] / total);
            }
        }
        RiskHistogram { centers, weights }
    }

    fn cdf(
        &self,
        z: f64,
        c0: f64,
        s: f64,
        se: f64,
        tau: f64,
        spike_prob: f64,
        nodes: &HalfNormalNodes,
    ) -> f64 {
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| w * mixture_cdf(z, c0 + s * r, se, tau, spike_prob, nodes))
            .sum()
    }
}

/// Minimize `f` over R^3 with the Nelder-Mead simplex method.
pub fn nelder_mead<const N: usize, F: Fn(&[f64; N]) -> f64>(
    f: F,
    start: [f64; N],
    step: f64,
    max_iter: usize,
) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, f(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += step;
        simplex.push((p, f(&p)));
    }
    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| -> [f64; N] {
        core::array::from_fn(|k| a[k] + t * (b[k] - a[k]))
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[N].1 - simplex[0].1).abs() < 1e-14 {
            break;
        }
        let mut c = [0.0; N];
        for (p, _) in &simplex[..N] {
            for k in 0..N {
                c[k] += p[k] / N as f64;
            }
        }
        let worst = simplex[N];
        let refl = lerp(&c, &worst.0, -1.0);
        let fr = f(&refl);
        if fr < simplex[0].1 {
            let exp = lerp(&c, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[N] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (refl, fr);
        } else {
            let contr = if fr < worst.1 {
                lerp(&c, &refl, 0.5)
            } else {
                lerp(&c, &worst.0, 0.5)
            };
            let fc = f(&contr);
            if fc < worst.1.min(fr) {
                simplex[N] = (contr, fc);
            } else {
                let best = simplex[0].0;
                for item in simplex.iter_mut().skip(1) {
                    let p = lerp(&best, &item.0, 0.5);
                    *item = (p, f(&p));
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

#[derive(Debug, Clone, Copy)]
pub struct FitSettings {
    /// Starting value; the spike probability is fitted alongside the rest.
    pub spike_prob: f64,
    pub target_correlation: f64,
    pub correlation_pairs: usize,
    pub seed: u64,
}

/// Params are (c0, ln S, ln tau, logit spike_prob).
fn fit_marginals(
    hist: &RiskHistogram,
    targets: &[Target],
    rho: f64,
    start: [f64; 4],
    nodes: &HalfNormalNodes,
) -> ([f64; 4], f64) {
    let goal: Vec<f64> = targets.iter().map(|t| normal_quantile(t.prob)).collect();
    let zs: Vec<f64> = targets.iter().map(|t| libm::log(t.level)).collect();
    let objective = |p: &[f64; 4]| {
        let (c0, big_s, tau, spike) = (p[0], libm::exp(p[1]), libm::exp(p[2]), sigmoid(p[3]));
        let (s, se) = (big_s * libm::sqrt(rho), big_s * libm::sqrt(1.0 - rho));
        zs.iter()
            .zip(&goal)
            .map(|(&z, &g)| {
                let fz = hist
                    .cdf(z, c0, s, se, tau, spike, nodes)
                    .clamp(1e-9, 1.0 - 1e-9);
                let d = normal_quantile(fz) - g;
                d * d
            })
            .sum()
    };
    let first = nelder_mead(objective, start, 0.3, 1500);
    // a restart shakes the simplex loose from a collapsed face
    let second = nelder_mead(objective, first.0, 0.1, 1500);
    if second.1 <= first.1 {
        second
    } else {
        first
    }
}

/// Pearson correlation of ln(reading + 1) between two readings drawn at the
/// same risk values, using a fixed set of draws for every candidate model.
struct PairDraws {
    risk: Vec<f64>,
    e: Vec<[f64; 2]>,
    spike_u: Vec<[f64; 2]>,
    spike_mag: Vec<[f64; 2]>,
}

impl PairDraws {
    fn new(hist: &RiskHistogram, n: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, 0);
        let mut cum = Vec::with_capacity(hist.weights.len());
        let mut acc = 0.0;
        for w in &hist.weights {
            acc += w;
            cum.push(acc);
        }
        let mut risk = Vec::with_capacity(n);
        let mut e = Vec::with_capacity(n);
        let mut spike_u = Vec::with_capacity(n);
        let mut spike_mag = Vec::with_capacity(n);
        for _ in 0..n {
            let u = r.gen::<f64>() * acc;
            let b = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            risk.push(hist.centers[b]);
            e.push([standard_normal(&mut r), standard_normal(&mut r)]);
            spike_u.push([r.gen::<f64>(), r.gen::<f64>()]);
            spike_mag.push([
                libm::fabs(standard_normal(&mut r)),
                libm::fabs(standard_normal(&mut r)),
            ]);
        }
        PairDraws {
            risk,
            e,
            spike_u,
            spike_mag,
        }
    }

    fn correlation(&self, c0: f64, s: f64, se: f64, tau: f64, spike_prob: f64) -> f64 {
        let n = self.risk.len() as f64;
        let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.risk.len() {
            let loc = c0 + s * self.risk[i];
            let g = |k: usize| {
                let spike = if self.spike_u[i][k] < spike_prob {
                    tau * self.spike_mag[i][k]
                } else {
                    0.0
                };
                libm::log(f64::from(floor_reading(loc + se * self.e[i][k] + spike)) + 1.0)
            };
            let (x, y) = (g(0), g(1));
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
        let cov = sxy / n - (sx / n) * (sy / n);
        let vx = sxx / n - (sx / n) * (sx / n);
        let vy = syy / n - (sy / n) * (sy / n);
        cov / libm::sqrt(vx * vy)
    }
}

/// Solve for the outcome model on the given test population.
pub fn fit_outcome_model(
    hist: &RiskHistogram,
    targets: &[Target],
    settings: &FitSettings,
) -> OutcomeModel {
    let nodes = HalfNormalNodes::new(24);
    let pairs = PairDraws::new(hist, settings.correlation_pairs, settings.seed);
    let mut start = [
        0.0,
        libm::log(2.0),
        libm::log(3.0),
        logit(settings.spike_prob),
    ];
    let mut solve = |rho: f64| {
        let (p, residual) = fit_marginals(hist, targets, rho, start, &nodes);
        start = p;
        let big_s = libm::exp(p[1]);
        let (s, se, tau, spike_prob) = (
            big_s * libm::sqrt(rho),
            big_s * libm::sqrt(1.0 - rho),
            libm::exp(p[2]),
            sigmoid(p[3]),
        );
        let corr = pairs.correlation(p[0], s, se, tau, spike_prob);
        (
            OutcomeModel {
                c0: p[0],
                s,
                se,
                tau,
                spike_prob,
                rho,
                residual,
            },
            corr,
        )
    };
    let (mut lo, mut hi) = (0.02, 0.98);
    let mut best = solve(0.5).0;
    for _ in 0..14 {
        let mid = 0.5 * (lo + hi);
        let (model, corr) = solve(mid);
        best = model;
        if corr < settings.target_correlation {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (p, f) = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + (x[2] - 3.0).powi(2),
            [0.0; 3],
            1.0,
            2000,
        );
        assert!(f < 1e-10);
        assert!(
            (p[0] - 1.0).abs() < 1e-4 && (p[1] + 0.5).abs() < 1e-4 && (p[2] - 3.0).abs() < 1e-4
        );
    }

    #[test]
    fn half_normal_nodes_have_right_mean() {
        let n = HalfNormalNodes::new(24);
        let m: f64 = n.x.iter().zip(&n.w).map(|(x, w)| x * w).sum();
        // E|u| = sqrt(2 / pi)
        assert!((m - libm::sqrt(2.0 / core::f64::consts::PI)).abs() < 1e-9);
    }

    #[test]
    fn readings_floor_and_cap() {
        assert_eq!(floor_reading(libm::log(4.99)), 4);
        assert_eq!(floor_reading(-3.0), 0);
        assert_eq!(floor_reading(50.0), LEAD_CAP_PPB);
    }
}
