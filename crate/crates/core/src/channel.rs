//! Linear time-varying channels, timing/frequency offsets and noise.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::frame::{cp_add_matrix, cp_remove_matrix, AllocationPair, FrameParams};
use crate::numerics::{dft_matrix, ComplexMatrix, C64};

/// Extended Vehicular A: (delay ns, power dB).
pub const EVA: [(f64, f64); 9] = [
    (0.0, 0.0),
    (30.0, -1.5),
    (150.0, -1.4),
    (310.0, -3.6),
    (370.0, -0.6),
    (710.0, -9.1),
    (1090.0, -7.0),
    (1730.0, -12.0),
    (2510.0, -16.9),
];

/// TDL-C: (normalized delay, power dB). Delays scale with the delay spread.
pub const TDL_C: [(f64, f64); 24] = [
    (0.0, -4.4),
    (0.2099, -1.2),
    (0.2219, -3.5),
    (0.2329, -5.2),
    (0.2176, -2.5),
    (0.6366, 0.0),
    (0.6448, -2.2),
    (0.6560, -3.9),
    (0.6584, -7.4),
    (0.7935, -7.1),
    (0.8213, -10.7),
    (0.9336, -11.1),
    (1.2285, -5.1),
    (1.3083, -6.8),
    (2.1704, -8.7),
    (2.7105, -13.2),
    (4.2589, -13.9),
    (4.6003, -13.9),
    (5.4902, -15.8),
    (5.6077, -17.1),
    (6.3065, -16.0),
    (6.6374, -15.7),
    (7.0427, -21.6),
    (8.6523, -22.8),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Eva,
    TdlC {
        #[serde(default = "default_delay_spread_ns")]
        delay_spread_ns: f64,
    },
    /// Equal-power taps at delays `0..taps`.
    Uniform { taps: usize },
}

fn default_delay_spread_ns() -> f64 {
    300.0
}

/// What to do with profile paths that quantize to the same delay bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SameBinPaths {
    /// Keep them as separate paths, each with its own Doppler.
    #[default]
    Keep,
    /// Merge them into one path carrying their summed power.
    Combine,
}

impl Profile {
    /// `(delay bin, linear power)` per path, delays floored to the `Δτ` grid.
    pub fn quantized(&self, delta_tau: f64) -> Vec<(usize, f64)> {
        let db = |p: f64| 10f64.powf(p / 10.0);
        let bin = |ns: f64| ((ns * 1e-9) / delta_tau + 1e-9).floor() as usize;
        match *self {
            Profile::Eva => EVA.iter().map(|&(d, p)| (bin(d), db(p))).collect(),
            Profile::TdlC { delay_spread_ns } => {
                TDL_C.iter().map(|&(d, p)| (bin(d * delay_spread_ns), db(p))).collect()
            }
            Profile::Uniform { taps } => (0..taps).map(|l| (l, 1.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub gain: C64,
    pub delay: usize,
    /// Doppler shift in cycles per sample.
    pub doppler: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtvChannel {
    pub taps: Vec<Tap>,
    pub user: usize,
}

impl LtvChannel {
    /// A single unit tap at delay 0 with no Doppler.
    pub fn identity(user: usize) -> Self {
        Self { taps: vec![Tap { gain: C64::new(1.0, 0.0), delay: 0, doppler: 0.0 }], user }
    }

    pub fn max_delay(&self) -> usize {
        self.taps.iter().map(|t| t.delay).max().unwrap_or(0)
    }

    /// `h[ℓ, κ] = Σ_i h_i e^{j2πν_i(κ−ℓ)} δ[ℓ−ℓ_i]`.
    pub fn response(&self, ell: usize, kappa: usize) -> C64 {
        self.taps
            .iter()
            .filter(|t| t.delay == ell)
            .map(|t| t.gain * C64::from_polar(1.0, 2.0 * PI * t.doppler * (kappa as f64 - ell as f64)))
            .sum()
    }

    pub fn power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }

    /// Equivalent channel with the CFO folded into every path.
    pub fn with_cfo_as_doppler(&self, epsilon: f64, n_s: usize) -> Self {
        let delta = epsilon / n_s as f64;
        let taps = self
            .taps
            .iter()
            .map(|t| Tap {
                gain: t.gain * C64::from_polar(1.0, 2.0 * PI * delta * t.delay as f64),
                delay: t.delay,
                doppler: t.doppler + delta,
            })
            .collect();
        Self { taps, user: self.user }
    }
}

/// Draws a channel from `profile`. Dopplers follow `ν_i = κ_max cos ψ_i / (MN)`
/// with `ψ_i ~ U[0, 2π)`; gains are complex Gaussian with the profile power,
/// then normalized to unit total power.
pub fn generate_channel<R: Rng + ?Sized>(
    profile: &Profile,
    kappa_max: f64,
    l_ch: usize,
    params: &FrameParams,
    same_bin: SameBinPaths,
    user: usize,
    rng: &mut R,
) -> Result<LtvChannel> {
    if !(kappa_max >= 0.0) || !kappa_max.is_finite() {
        return Err(SyncError::Config("κ_max must be non-negative".into()));
    }
    let mut paths = profile.quantized(params.delta_tau);
    if paths.is_empty() {
        return Err(SyncError::Config("profile has no taps".into()));
    }
    if let Some(&(d, _)) = paths.iter().find(|(d, _)| *d >= l_ch) {
        return Err(SyncError::Config(format!("profile tap at delay {d} exceeds L_ch = {l_ch}")));
    }
    if same_bin == SameBinPaths::Combine {
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (d, p) in paths {
            match merged.iter_mut().find(|(md, _)| *md == d) {
                Some(entry) => entry.1 += p,
                None => merged.push((d, p)),
            }
        }
        paths = merged;
    }
    let nu_max = kappa_max / params.mn() as f64;
    let mut taps = Vec::with_capacity(paths.len());
    for (delay, power) in paths {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let gain = C64::new(re, im) * (power / 2.0).sqrt();
        let psi = rng.random_range(0.0..2.0 * PI);
        taps.push(Tap { gain, delay, doppler: nu_max * psi.cos() });
    }
    let total: f64 = taps.iter().map(|t| t.gain.norm_sqr()).sum();
    if !(total > 0.0) {
        return Err(SyncError::Numerical("channel drew zero power".into()));
    }
    let scale = 1.0 / total.sqrt();
    for t in &mut taps {
        t.gain *= scale;
    }
    Ok(LtvChannel { taps, user })
}

/// `λ_ch = ⌊Σ ℓ_i|h_i|² / Σ|h_i|²⌋`.
pub fn mean_delay(ch: &LtvChannel) -> usize {
    let p = ch.power();
    if !(p > 0.0) {
        return 0;
    }
    let m: f64 = ch.taps.iter().map(|t| t.delay as f64 * t.gain.norm_sqr()).sum();
    (m / p + 1e-12).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpairmentSet {
    pub theta: usize,
    pub epsilon: f64,
    pub noise_var: f64,
}

/// Noise variance for unit-energy data at `snr_db`.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Adds circular complex Gaussian noise of variance `var` per sample.
pub fn add_awgn<R: Rng + ?Sized>(x: &[C64], var: f64, rng: &mut R) -> Result<Vec<C64>> {
    let mut out = x.to_vec();
    add_awgn_in_place(&mut out, var, rng)?;
    Ok(out)
}

pub fn add_awgn_in_place<R: Rng + ?Sized>(x: &mut [C64], var: f64, rng: &mut R) -> Result<()> {
    if !(var >= 0.0) || !var.is_finite() {
        return Err(SyncError::Config(format!("noise variance must be non-negative, got {var}")));
    }
    if var == 0.0 {
        return Ok(());
    }
    let sd = (var / 2.0).sqrt();
    for v in x.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += C64::new(re * sd, im * sd);
    }
    Ok(())
}

fn check_budget(ch: &LtvChannel, theta: usize, l_cp: usize) -> Result<()> {
    if theta + ch.max_delay() > l_cp {
        return Err(SyncError::Config(format!(
            "θ = {theta} plus channel delay {} exceeds the CP length {l_cp}",
            ch.max_delay()
        )));
    }
    Ok(())
}

/// Noiseless received contribution of one user:
/// `e^{j2πεκ/N_s} Σ_i h_i e^{j2πν_i(κ−ℓ_i)} s[κ−ℓ_i−θ]`, zero outside `s`.
pub fn propagate(s: &[C64], ch: &LtvChannel, theta: usize, epsilon: f64, l_cp: usize) -> Result<Vec<C64>> {
    check_budget(ch, theta, l_cp)?;
    let n_s = s.len();
    let mut r = vec![C64::new(0.0, 0.0); n_s];
    for tap in &ch.taps {
        let shift = tap.delay + theta;
        let rot = C64::from_polar(1.0, 2.0 * PI * tap.doppler);
        // Recompute the phase every 256 samples to bound drift.
        for start in (shift..n_s).step_by(256) {
            let mut ph = tap.gain * C64::from_polar(1.0, 2.0 * PI * tap.doppler * (start as f64 - tap.delay as f64));
            for k in start..(start + 256).min(n_s) {
                r[k] += ph * s[k - shift];
                ph *= rot;
            }
        }
    }
    if epsilon != 0.0 {
        for (k, v) in r.iter_mut().enumerate() {
            *v *= C64::from_polar(1.0, 2.0 * PI * epsilon * k as f64 / n_s as f64);
        }
    }
    Ok(r)
}

/// Single-user reception including noise.
pub fn apply_channel<R: Rng + ?Sized>(
    s: &[C64],
    ch: &LtvChannel,
    imp: &ImpairmentSet,
    l_cp: usize,
    rng: &mut R,
) -> Result<Vec<C64>> {
    let mut r = propagate(s, ch, imp.theta, imp.epsilon, l_cp)?;
    add_awgn_in_place(&mut r, imp.noise_var, rng)?;
    Ok(r)
}

/// One user's transmission as seen by the receiver.
#[derive(Debug, Clone)]
pub struct UserLink<'a> {
    pub signal: &'a [C64],
    pub channel: &'a LtvChannel,
    pub theta: usize,
    pub epsilon: f64,
}

/// Sum of all users' contributions plus a single noise draw.
pub fn receive<R: Rng + ?Sized>(links: &[UserLink<'_>], noise_var: f64, l_cp: usize, rng: &mut R) -> Result<Vec<C64>> {
    let Some(first) = links.first() else {
        return Err(SyncError::EmptyInput);
    };
    let n_s = first.signal.len();
    let mut r = vec![C64::new(0.0, 0.0); n_s];
    for link in links {
        if link.signal.len() != n_s {
            return Err(SyncError::Shape("users transmit frames of different lengths".into()));
        }
        for (acc, v) in r.iter_mut().zip(propagate(link.signal, link.channel, link.theta, link.epsilon, l_cp)?) {
            *acc += v;
        }
    }
    add_awgn_in_place(&mut r, noise_var, rng)?;
    Ok(r)
}

/// One user's parameters for the compound matrix.
#[derive(Debug, Clone)]
pub struct CompoundUser<'a> {
    pub channel: &'a LtvChannel,
    pub theta: usize,
    pub epsilon: f64,
    pub allocation: &'a AllocationPair,
}

/// Time-varying convolution matrix `H[κ, t] = h[κ−t, κ]` over a full frame.
pub fn convolution_matrix(ch: &LtvChannel, n_s: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n_s, n_s);
    for k in 0..n_s {
        for tap in &ch.taps {
            if tap.delay <= k {
                h[(k, k - tap.delay)] += tap.gain
                    * C64::from_polar(1.0, 2.0 * PI * tap.doppler * (k as f64 - tap.delay as f64));
            }
        }
    }
    h
}

/// Delay-Doppler compound channel
/// `Ψ = Σ_q (F_N⊗I_M) Φ̌(ε_q) Λ_q (F_Nᴴ⊗I_M) Γ_qΓ_qᴴ`, with
/// `Λ_q = R_cp·W·H_q·Π(θ_q)·A_cp` where `Π(θ)` delays the frame by θ samples
/// and `W` keeps samples `θ_max..N_s`. Built densely; meant for small frames.
pub fn compound_channel_matrix(users: &[CompoundUser<'_>], params: &FrameParams, theta_max: usize) -> Result<ComplexMatrix> {
    let (m, n, mn, l_cp) = (params.m, params.n, params.mn(), params.l_cp);
    let n_s = params.n_s();
    if theta_max > l_cp {
        return Err(SyncError::Config("θ_max exceeds the CP length".into()));
    }
    let f = dft_matrix(n).kronecker(&ComplexMatrix::identity(m, m));
    let fh = f.adjoint();
    let a_cp = cp_add_matrix(mn, l_cp);
    let skip = l_cp - theta_max;
    let r_cp = cp_remove_matrix(mn, skip);
    let window = ComplexMatrix::from_fn(mn + skip, n_s, |i, j| {
        if j == i + theta_max { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    });
    let mut psi = ComplexMatrix::zeros(mn, mn);
    for u in users {
        if u.allocation.m != m || u.allocation.n != n {
            return Err(SyncError::Shape("allocation grid differs from frame".into()));
        }
        if u.theta > theta_max {
            return Err(SyncError::Config(format!("θ = {} exceeds θ_max = {theta_max}", u.theta)));
        }
        check_budget(u.channel, u.theta, l_cp)?;
        let pi = ComplexMatrix::from_fn(n_s, n_s, |i, j| {
            if i == j + u.theta { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        });
        let h = convolution_matrix(u.channel, n_s);
        let lambda = &r_cp * (&window * (h * (pi * &a_cp)));
        let phi = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_fn(mn, |i, _| {
            C64::from_polar(1.0, 2.0 * PI * u.epsilon * (l_cp + i) as f64 / n_s as f64)
        }));
        let mask = u.allocation.cell_mask();
        let proj = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_fn(mn, |i, _| {
            if mask[i] { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
        }));
        psi += &f * (phi * lambda) * &fh * proj;
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params() -> FrameParams {
        FrameParams::new(8, 4, 1, 1.0 / 3.84e6, 6).unwrap()
    }

    #[test]
    fn eva_quantizes_into_ten_bins() {
        let bins: std::collections::BTreeSet<usize> =
            Profile::Eva.quantized(1.0 / 3.84e6).into_iter().map(|(d, _)| d).collect();
        assert_eq!(bins.into_iter().collect::<Vec<_>>(), vec![0, 1, 2, 4, 6, 9]);
    }

    #[test]
    fn static_channel_has_no_doppler() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ch = generate_channel(&Profile::Eva, 0.0, 10, &params(), SameBinPaths::Keep, 0, &mut rng).unwrap();
        assert!(ch.taps.iter().all(|t| t.doppler == 0.0));
        assert!((ch.power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_tap_normalizes_to_unit_gain() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let ch = generate_channel(&Profile::Uniform { taps: 1 }, 1.0, 1, &params(), SameBinPaths::Keep, 0, &mut rng)
            .unwrap();
        assert_eq!(ch.taps.len(), 1);
        assert_eq!(ch.taps[0].delay, 0);
        assert!((ch.taps[0].gain.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn profile_longer_than_budget_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert!(generate_channel(&Profile::Eva, 1.0, 5, &params(), SameBinPaths::Keep, 0, &mut rng).is_err());
    }

    #[test]
    fn combine_merges_bins() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let ch = generate_channel(&Profile::Eva, 1.0, 10, &params(), SameBinPaths::Combine, 0, &mut rng).unwrap();
        assert_eq!(ch.taps.len(), 6);
    }

    #[test]
    fn mean_delay_examples() {
        let tap = |g: f64, d: usize| Tap { gain: C64::new(g, 0.0), delay: d, doppler: 0.0 };
        assert_eq!(mean_delay(&LtvChannel::identity(0)), 0);
        let two = LtvChannel { taps: vec![tap(1.0, 0), tap(1.0, 4)], user: 0 };
        assert_eq!(mean_delay(&two), 2);
        let skew = LtvChannel { taps: vec![tap(0.9f64.sqrt(), 1), tap(0.1f64.sqrt(), 9)], user: 0 };
        assert_eq!(mean_delay(&skew), 1);
    }

    #[test]
    fn identity_and_pure_delay() {
        let s: Vec<C64> = (0..20).map(|i| C64::new(i as f64, 1.0)).collect();
        let id = LtvChannel::identity(0);
        assert_eq!(propagate(&s, &id, 0, 0.0, 5).unwrap(), s);
        let r = propagate(&s, &id, 3, 0.0, 5).unwrap();
        assert!(r[..3].iter().all(|v| v.norm() == 0.0));
        assert_eq!(&r[3..], &s[..17]);
        assert!(propagate(&s, &id, 6, 0.0, 5).is_err());
    }

    #[test]
    fn cfo_only_matches_loop() {
        let s: Vec<C64> = (0..30).map(|i| C64::from_polar(1.0, i as f64 * 0.3)).collect();
        let r = propagate(&s, &LtvChannel::identity(0), 0, 0.37, 2).unwrap();
        for (k, v) in r.iter().enumerate() {
            let want = s[k] * C64::from_polar(1.0, 2.0 * PI * 0.37 * k as f64 / 30.0);
            assert!((v - want).norm() < 1e-12);
        }
    }

    #[test]
    fn awgn_variance() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x = vec![C64::new(0.0, 0.0); 100_000];
        let y = add_awgn(&x, 1.0, &mut rng).unwrap();
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
        assert_eq!(add_awgn(&x[..4], 0.0, &mut rng).unwrap(), x[..4].to_vec());
        assert!(add_awgn(&x[..4], -1.0, &mut rng).is_err());
        assert!((noise_variance(20.0) - 0.01).abs() < 1e-15);
    }
}
