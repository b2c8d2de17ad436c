//! Chebyshev basis-expansion channel model and maximum-likelihood CFO and
//! channel estimation over a located pilot region.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channel::LtvChannel;
use crate::error::{Result, SyncError};
use crate::frame::{otfs_modulate, FrameParams};
use crate::numerics::{ComplexMatrix, LeastSquares, C64};
use crate::pilots::{embed_pilots, PilotLayout, Structure};
use crate::sync_time::filter_bank_separate;

/// Chebyshev polynomials of the first kind sampled at
/// `κ' = (2κ − N_s + 1)/(N_s − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BemBasis {
    pub beta: usize,
    pub kappas: Vec<usize>,
    /// Row-major `kappas.len() × beta`.
    pub values: Vec<f64>,
}

impl BemBasis {
    pub fn at(&self, row: usize, gamma: usize) -> f64 {
        self.values[row * self.beta + gamma]
    }
}

pub fn normalized_time(kappa: usize, n_s: usize) -> f64 {
    if n_s <= 1 {
        return 0.0;
    }
    (2.0 * kappa as f64 - n_s as f64 + 1.0) / (n_s as f64 - 1.0)
}

pub fn cpf_basis(n_s: usize, kappas: &[usize], beta: usize) -> Result<BemBasis> {
    if beta == 0 {
        return Err(SyncError::Config("BEM order must be at least 1".into()));
    }
    if let Some(&k) = kappas.iter().find(|&&k| k >= n_s) {
        return Err(SyncError::OutOfRange(format!("sample {k} outside a frame of {n_s}")));
    }
    let mut values = Vec::with_capacity(kappas.len() * beta);
    for &k in kappas {
        let x = normalized_time(k, n_s);
        let (mut prev, mut cur) = (1.0, x);
        values.push(1.0);
        for g in 1..beta {
            if g == 1 {
                values.push(x);
                continue;
            }
            let next = 2.0 * x * cur - prev;
            values.push(next);
            prev = cur;
            cur = next;
        }
    }
    Ok(BemBasis { beta, kappas: kappas.to_vec(), values })
}

/// Stacked received pilot samples of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotRegionObservation {
    /// Slot-major samples `r̄`.
    pub samples: Vec<C64>,
    /// Position in the CP-free body of each sample.
    pub body_index: Vec<usize>,
    /// Position of the matching transmitted pilot sample (TO removed).
    pub pilot_index: Vec<usize>,
    /// Absolute sample index `κ` in the frame.
    pub kappas: Vec<usize>,
    pub l_pilot: usize,
    pub slots: usize,
    pub theta_hat: usize,
}

/// Collects rows `anchor + θ̂ .. anchor + θ̂ + L_pilot` of every slot from
/// the CP-free body `r[L_cp..L_cp+MN]`, after the filter bank for MU-PCP.
/// Rows past the end of the body wrap around, as the CP makes the body
/// circular.
pub fn extract_pilot_region(
    r: &[C64],
    theta_hat: usize,
    layout: &PilotLayout,
    q: usize,
    params: &FrameParams,
) -> Result<PilotRegionObservation> {
    let (m, n, mn, l_cp) = (params.m, params.n, params.mn(), params.l_cp);
    if r.len() < l_cp + mn {
        return Err(SyncError::Shape(format!("received frame shorter than {}", l_cp + mn)));
    }
    if theta_hat >= m {
        return Err(SyncError::OutOfRange(format!("θ̂ = {theta_hat} outside 0..{m}")));
    }
    let user = layout.users.get(q).ok_or_else(|| SyncError::Config(format!("no pilot for user {q}")))?;
    let body = &r[l_cp..l_cp + mn];
    let filtered;
    let source = match layout.structure {
        Structure::MuPcp => {
            filtered = filter_bank_separate(body, q, params.users, m, n)?;
            &filtered[..]
        }
        Structure::SuPcp => body,
    };
    let l_pilot = layout.pilot_len();
    let cap = n * l_pilot;
    let (mut samples, mut body_index, mut pilot_index, mut kappas) =
        (Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap), Vec::with_capacity(cap));
    for slot in 0..n {
        for i in 0..l_pilot {
            let p = (slot * m + user.anchor + i) % mn;
            let b = (p + theta_hat) % mn;
            samples.push(source[b]);
            body_index.push(b);
            pilot_index.push(p);
            kappas.push(l_cp + b);
        }
    }
    Ok(PilotRegionObservation { samples, body_index, pilot_index, kappas, l_pilot, slots: n, theta_hat })
}

/// Delay-time samples of user `q`'s pilot alone (no CP).
pub fn pilot_signal(layout: &PilotLayout, q: usize, params: &FrameParams) -> Result<Vec<C64>> {
    let grid = embed_pilots(&ComplexMatrix::zeros(params.m, params.n), layout, &[q])?;
    Ok(otfs_modulate(&grid, params)?.serialized)
}

/// `G[(n,i), ℓβ + γ] = x_p[(p_i − ℓ) mod MN]·B(κ'_i, γ)`: the pilot history
/// feeding each observed sample through tap `ℓ`, weighted by the basis.
pub fn build_g(obs: &PilotRegionObservation, pilot: &[C64], basis: &BemBasis) -> Result<ComplexMatrix> {
    let rows = obs.samples.len();
    if basis.kappas.len() != rows {
        return Err(SyncError::Shape("basis rows differ from observation length".into()));
    }
    let mn = pilot.len();
    let (l_pilot, beta) = (obs.l_pilot, basis.beta);
    let mut g = ComplexMatrix::zeros(rows, l_pilot * beta);
    for row in 0..rows {
        let p = obs.pilot_index[row];
        for ell in 0..l_pilot {
            let x = pilot[(p + mn - ell % mn) % mn];
            if x == C64::new(0.0, 0.0) {
                continue;
            }
            for gamma in 0..beta {
                g[(row, ell * beta + gamma)] = x * basis.at(row, gamma);
            }
        }
    }
    Ok(g)
}

/// Grid-plus-golden-section search settings for the CFO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfoSearchConfig {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub tolerance: f64,
}

impl CfoSearchConfig {
    /// `[−N/2, N/2)` in steps of 0.05, refined to 1e-4.
    pub fn for_frame(n: usize) -> Self {
        Self { min: -(n as f64) / 2.0, max: n as f64 / 2.0, step: 0.05, tolerance: 1e-4 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min <= 0.0 && self.max > 0.0) || !(self.step > 0.0) || !(self.tolerance > 0.0) {
            return Err(SyncError::Config("CFO search interval must contain 0 with positive step".into()));
        }
        Ok(())
    }
}

fn derotate(obs: &PilotRegionObservation, epsilon: f64, n_s: usize) -> Vec<C64> {
    obs.samples
        .iter()
        .zip(&obs.kappas)
        .map(|(v, &k)| v * C64::from_polar(1.0, -2.0 * PI * epsilon * k as f64 / n_s as f64))
        .collect()
}

/// `g(ε) = r̄ᴴ Φ(ε) G G† Φᴴ(ε) r̄`.
pub fn cfo_cost(obs: &PilotRegionObservation, ls: &LeastSquares, epsilon: f64, n_s: usize) -> f64 {
    ls.projected_energy(&derotate(obs, epsilon, n_s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfoEstimate {
    pub epsilon: f64,
    pub cost: f64,
    /// Coarse-grid cost profile `(ε, g(ε))`.
    pub profile: Vec<(f64, f64)>,
}

pub fn ml_cfo_estimate(
    obs: &PilotRegionObservation,
    ls: &LeastSquares,
    search: &CfoSearchConfig,
    n_s: usize,
) -> Result<CfoEstimate> {
    search.validate()?;
    if obs.samples.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return Err(SyncError::Numerical("pilot region carries no energy".into()));
    }
    let cost = |e: f64| cfo_cost(obs, ls, e, n_s);
    let steps = ((search.max - search.min) / search.step).round() as usize;
    let profile: Vec<(f64, f64)> = (0..steps).map(|i| search.min + i as f64 * search.step).map(|e| (e, cost(e))).collect();
    let mut best = 0;
    for (i, p) in profile.iter().enumerate() {
        if !p.1.is_finite() {
            return Err(SyncError::Numerical("CFO cost is not finite".into()));
        }
        if p.1 > profile[best].1 {
            best = i;
        }
    }
    // Golden-section refinement within one grid step of the best point.
    let (mut a, mut b) = (profile[best].0 - search.step, profile[best].0 + search.step);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > search.tolerance {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = cost(d);
        }
    }
    let mut epsilon = 0.5 * (a + b);
    let mut value = cost(epsilon);
    if profile[best].1 > value {
        epsilon = profile[best].0;
        value = profile[best].1;
    }
    Ok(CfoEstimate { epsilon, cost: value, profile })
}

/// BEM coefficients and the reconstructed channel on the region.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `ĉ`, tap-major: `coeffs[ℓβ + γ]`.
    pub coeffs: Vec<C64>,
    /// `ĥ[ℓ, κ_i]` as `h[ℓ·R + i]` with `R` the region length.
    pub response: Vec<C64>,
    pub epsilon: f64,
}

/// `ĉ = G†Φᴴ(ε̂)r̄` and `ĥ[ℓ,κ] = Σ_γ B[κ',γ] ĉ_ℓ[γ]`.
pub fn estimate_channel(
    obs: &PilotRegionObservation,
    ls: &LeastSquares,
    epsilon: f64,
    basis: &BemBasis,
    n_s: usize,
) -> ChannelEstimate {
    let coeffs = ls.solve(&derotate(obs, epsilon, n_s));
    let response = reconstruct(&coeffs, basis, obs.l_pilot);
    ChannelEstimate { coeffs, response, epsilon }
}

/// Least-squares channel fit with the CFO left in the channel.
pub fn absorbed_cfo_baseline(obs: &PilotRegionObservation, ls: &LeastSquares, basis: &BemBasis, n_s: usize) -> ChannelEstimate {
    estimate_channel(obs, ls, 0.0, basis, n_s)
}

fn reconstruct(coeffs: &[C64], basis: &BemBasis, l_pilot: usize) -> Vec<C64> {
    let rows = basis.kappas.len();
    let mut h = vec![C64::new(0.0, 0.0); l_pilot * rows];
    for ell in 0..l_pilot {
        for i in 0..rows {
            let mut acc = C64::new(0.0, 0.0);
            for g in 0..basis.beta {
                acc += coeffs[ell * basis.beta + g] * basis.at(i, g);
            }
            h[ell * rows + i] = acc;
        }
    }
    h
}

impl ChannelEstimate {
    /// `e^{j2πε̂κ/N_s}ĥ[ℓ,κ]`: the estimate with its CFO put back, comparable
    /// with the true frequency-shifted channel.
    pub fn compound(&self, kappas: &[usize], n_s: usize) -> Vec<C64> {
        let rows = kappas.len();
        self.response
            .iter()
            .enumerate()
            .map(|(idx, v)| v * C64::from_polar(1.0, 2.0 * PI * self.epsilon * kappas[idx % rows] as f64 / n_s as f64))
            .collect()
    }
}

/// True `e^{j2πεκ/N_s}h[ℓ,κ]` over the region, laid out like
/// [`ChannelEstimate::response`].
pub fn true_compound_channel(ch: &LtvChannel, epsilon: f64, kappas: &[usize], l_pilot: usize, n_s: usize) -> Vec<C64> {
    let rows = kappas.len();
    let mut h = vec![C64::new(0.0, 0.0); l_pilot * rows];
    for ell in 0..l_pilot {
        for (i, &k) in kappas.iter().enumerate() {
            h[ell * rows + i] =
                ch.response(ell, k) * C64::from_polar(1.0, 2.0 * PI * epsilon * k as f64 / n_s as f64);
        }
    }
    h
}

/// `‖ĥ − h‖² / ‖h‖²`.
pub fn nmse(estimate: &[C64], truth: &[C64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(SyncError::Shape("estimate and truth differ in length".into()));
    }
    let energy: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    if !(energy > 0.0) {
        return Err(SyncError::Numerical("reference channel has zero energy".into()));
    }
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(err / energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_values() {
        let b = cpf_basis(101, &[0, 50, 100, 75], 4).unwrap();
        for (row, &k) in [0usize, 50, 100, 75].iter().enumerate() {
            let x = normalized_time(k, 101);
            for g in 0..4 {
                assert!((b.at(row, g) - (g as f64 * x.acos()).cos()).abs() < 1e-12);
            }
        }
        assert_eq!(b.at(2, 3), 1.0);
        assert!(cpf_basis(10, &[10], 2).is_err());
        assert!(cpf_basis(10, &[1], 0).is_err());
    }

    #[test]
    fn chebyshev_half() {
        // κ' = 0.5 at κ = 3 for N_s = 5.
        let b = cpf_basis(5, &[3], 3).unwrap();
        assert!((b.at(0, 2) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn nmse_identities() {
        let t = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.1)];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert!((nmse(&[C64::new(0.0, 0.0); 2], &t).unwrap() - 1.0).abs() < 1e-15);
        let scaled: Vec<C64> = t.iter().map(|v| v * 1.1).collect();
        assert!((nmse(&scaled, &t).unwrap() - 0.01).abs() < 1e-12);
        assert!(nmse(&t, &[C64::new(0.0, 0.0); 2]).is_err());
    }

    #[test]
    fn search_config_must_contain_zero() {
        assert!(CfoSearchConfig { min: 0.1, max: 1.0, step: 0.1, tolerance: 1e-4 }.validate().is_err());
        CfoSearchConfig::for_frame(32).validate().unwrap();
    }
}
