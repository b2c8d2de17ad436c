//! Closed-form spectral efficiency, complexity, user capacity and Doppler
//! energy concentration.

use std::f64::consts::PI;

use crate::error::{Result, SyncError};

/// Pilot overhead model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EfficiencyVariant {
    /// SU-PCP with whole pilot rows reserved.
    SuPcpFull,
    /// SU-PCP with `2κ_max` zero bins on each side of each pilot.
    SuPcpPartial,
    MuPcp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub l_ch: usize,
    pub l_cp: usize,
    pub kappa_max: f64,
    pub beta: usize,
}

/// Fraction of the frame's `MN + L_cp` samples left for data.
///
/// - SU-PCP full: `N(M − Q(2L_ch − 1)) / (MN + L_cp)`
/// - SU-PCP partial: `(MN − Q(2L_ch − 1)(4κ_max + 1)) / (MN + L_cp)`
/// - MU-PCP: `N(M − (β + 2L_ch − 1)) / (MN + L_cp)`
pub fn spectral_efficiency(variant: EfficiencyVariant, p: &LinkBudget) -> f64 {
    let (m, n, q, l) = (p.m as f64, p.n as f64, p.q as f64, p.l_ch as f64);
    let frame = m * n + p.l_cp as f64;
    let block = 2.0 * l - 1.0;
    match variant {
        EfficiencyVariant::SuPcpFull => n * (m - q * block) / frame,
        EfficiencyVariant::SuPcpPartial => (m * n - q * block * (4.0 * p.kappa_max + 1.0)) / frame,
        EfficiencyVariant::MuPcp => n * (m - (p.beta as f64 + block)) / frame,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    pub su_full: f64,
    pub su_partial: f64,
    pub mu: f64,
    /// `λ₀ = λ^MU / λ_p^SU`.
    pub lambda0: f64,
    /// `λ₁ = λ^MU / λ_f^SU`.
    pub lambda1: f64,
}

impl EfficiencyReport {
    pub fn mu_beats_partial(&self) -> bool {
        self.lambda0 >= 1.0
    }

    pub fn mu_beats_full(&self) -> bool {
        self.lambda1 >= 1.0
    }
}

pub fn efficiency_report(p: &LinkBudget) -> EfficiencyReport {
    let su_full = spectral_efficiency(EfficiencyVariant::SuPcpFull, p);
    let su_partial = spectral_efficiency(EfficiencyVariant::SuPcpPartial, p);
    let mu = spectral_efficiency(EfficiencyVariant::MuPcp, p);
    EfficiencyReport { su_full, su_partial, mu, lambda0: mu / su_partial, lambda1: mu / su_full }
}

/// Direction of a bound on `κ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaCondition {
    AtMost(f64),
    AtLeast(f64),
    Always,
    Never,
}

/// When MU-PCP is more efficient than SU-PCP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossover {
    /// `β ≤ (Q/N·(4κ_max + 1) − 1)(2L_ch − 1)` against partial guards.
    pub beta_max_partial: f64,
    /// `β ≤ (Q − 1)(2L_ch − 1)` against full guards.
    pub beta_max_full: f64,
    /// `0.5((Q − 1)(2L_ch − 1) − 1)`; equals `L_ch − 1` at Q = 2.
    pub kappa_max_full: f64,
    /// `0.5((2L_ch − 1)Q/N − 2)/((2L_ch − 1)2Q/N + 1)` as printed in the source.
    pub kappa_max_partial_printed: f64,
    /// The partial-guard condition solved exactly with `β = 2κ_max + 1`.
    pub kappa_partial_exact: KappaCondition,
    /// False when no `β ≥ 1` meets the partial-guard bound at this `κ_max`.
    pub partial_feasible: bool,
}

pub fn crossover_conditions(n: usize, q: usize, l_ch: usize, kappa_max: f64) -> Result<Crossover> {
    if q < 2 {
        return Err(SyncError::Config("crossover conditions need Q >= 2".into()));
    }
    let a = 2.0 * l_ch as f64 - 1.0;
    let r = q as f64 / n as f64;
    let beta_max_partial = (r * (4.0 * kappa_max + 1.0) - 1.0) * a;
    // 2κ + 1 ≤ (r(4κ + 1) − 1)a  ⇔  κ(4ra − 2) ≥ a + 1 − ra
    let coeff = 4.0 * r * a - 2.0;
    let rhs = a + 1.0 - r * a;
    let kappa_partial_exact = if coeff > 0.0 {
        KappaCondition::AtLeast(rhs / coeff)
    } else if coeff < 0.0 {
        KappaCondition::AtMost(rhs / coeff)
    } else if rhs <= 0.0 {
        KappaCondition::Always
    } else {
        KappaCondition::Never
    };
    Ok(Crossover {
        beta_max_partial,
        beta_max_full: (q as f64 - 1.0) * a,
        kappa_max_full: 0.5 * ((q as f64 - 1.0) * a - 1.0),
        kappa_max_partial_printed: 0.5 * (a * r - 2.0) / (a * 2.0 * r + 1.0),
        kappa_partial_exact,
        partial_feasible: beta_max_partial >= 1.0,
    })
}

/// Synchronization pipeline whose cost is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Technique {
    SuPcp,
    MuPcp,
    AbsorbedCfo,
}

/// Complex multiplications per frame:
///
/// - SU-PCP: `QN²L_ch/2 + MN(2L_ch + Q − 1)`
/// - MU-PCP: `QN²(L_ch + κ_max)/2 + MN(2L_ch + 2κ_max + log₂MN + Q − 1)`
/// - absorbed CFO: `MN(2L_ch + Q − 1)`
pub fn complexity_cms(technique: Technique, m: usize, n: usize, q: usize, l_ch: usize, kappa_max: f64) -> f64 {
    let (m, n, q, l) = (m as f64, n as f64, q as f64, l_ch as f64);
    let mn = m * n;
    match technique {
        Technique::SuPcp => q * n * n * l / 2.0 + mn * (2.0 * l + q - 1.0),
        Technique::MuPcp => {
            q * n * n * (l + kappa_max) / 2.0 + mn * (2.0 * l + 2.0 * kappa_max + mn.log2() + q - 1.0)
        }
        Technique::AbsorbedCfo => mn * (2.0 * l + q - 1.0),
    }
}

/// Raised-cosine Doppler PSD `S(ν) = (1 + cos(πν/ν_max)) / (2ν_max)` on
/// `|ν| ≤ ν_max`.
pub fn raised_cosine_psd(nu: f64, nu_max: f64) -> f64 {
    if nu.abs() > nu_max {
        0.0
    } else {
        (1.0 + (PI * nu / nu_max).cos()) / (2.0 * nu_max)
    }
}

/// `E_s(α) = α + sin(πα)/π`, the PSD mass inside `±αν_max`.
pub fn doppler_energy_concentration(alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SyncError::OutOfRange(format!("α = {alpha} outside [0, 1]")));
    }
    Ok(alpha + (PI * alpha).sin() / PI)
}

/// `E_s(α)` by composite Simpson integration of the PSD.
pub fn doppler_energy_numeric(alpha: f64, intervals: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SyncError::OutOfRange(format!("α = {alpha} outside [0, 1]")));
    }
    let k = intervals.max(2) + intervals % 2;
    let h = 2.0 * alpha / k as f64;
    let f = |i: usize| raised_cosine_psd(-alpha + i as f64 * h, 1.0);
    let inner: f64 = (1..k).map(|i| if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) }).sum();
    Ok(h / 3.0 * (f(0) + inner + f(k)))
}

/// Smallest `α` with `E_s(α) = target`, by bisection.
pub fn energy_fraction_alpha(target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(SyncError::OutOfRange(format!("energy fraction {target} outside [0, 1]")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if doppler_energy_concentration(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Values printed in the source next to the closed form, kept for
/// side-by-side reporting.
pub const PRINTED_ENERGY: [(f64, f64); 2] = [(0.4, 0.89), (0.5, 0.91)];

/// One row of the Doppler energy audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyAuditRow {
    pub alpha: f64,
    pub closed_form: f64,
    pub numeric: f64,
    pub printed: f64,
}

pub fn doppler_energy_audit() -> Result<(Vec<EnergyAuditRow>, f64)> {
    let rows = PRINTED_ENERGY
        .iter()
        .map(|&(alpha, printed)| {
            Ok(EnergyAuditRow {
                alpha,
                closed_form: doppler_energy_concentration(alpha)?,
                numeric: doppler_energy_numeric(alpha, 2000)?,
                printed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, energy_fraction_alpha(0.9)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vi() -> LinkBudget {
        LinkBudget { m: 128, n: 32, q: 4, l_ch: 10, l_cp: 30, kappa_max: 2.91, beta: 7 }
    }

    #[test]
    fn efficiencies_at_reference_point() {
        let p = vi();
        assert!((spectral_efficiency(EfficiencyVariant::SuPcpFull, &p) - 32.0 * 52.0 / 4126.0).abs() < 1e-15);
        assert!((spectral_efficiency(EfficiencyVariant::MuPcp, &p) - 32.0 * 102.0 / 4126.0).abs() < 1e-15);
        let part = (4096.0 - 4.0 * 19.0 * (4.0 * 2.91 + 1.0)) / 4126.0;
        assert!((spectral_efficiency(EfficiencyVariant::SuPcpPartial, &p) - part).abs() < 1e-15);
        let r = efficiency_report(&p);
        assert!(r.mu_beats_full() && r.mu_beats_partial());
    }

    #[test]
    fn crossover_values() {
        let c = crossover_conditions(32, 2, 10, 2.91).unwrap();
        assert_eq!(c.kappa_max_full, 9.0);
        assert_eq!(crossover_conditions(32, 4, 10, 0.0).unwrap().beta_max_full, 57.0);
        assert!(!crossover_conditions(32, 4, 10, 0.0).unwrap().partial_feasible);
        assert!(crossover_conditions(32, 1, 10, 0.0).is_err());
    }

    #[test]
    fn complexity_values() {
        assert_eq!(complexity_cms(Technique::SuPcp, 128, 32, 4, 10, 2.91), 114688.0);
        assert_eq!(complexity_cms(Technique::AbsorbedCfo, 128, 32, 4, 10, 2.91), 94208.0);
        let gap = complexity_cms(Technique::MuPcp, 128, 32, 4, 10, 2.91) - complexity_cms(Technique::SuPcp, 128, 32, 4, 10, 2.91);
        let want = 4.0 * 1024.0 * 2.91 / 2.0 + 4096.0 * (2.0 * 2.91 + 12.0);
        assert!((gap - want).abs() < 1e-9);
    }

    #[test]
    fn energy_concentration() {
        assert_eq!(doppler_energy_concentration(0.0).unwrap(), 0.0);
        assert!((doppler_energy_concentration(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((doppler_energy_concentration(0.5).unwrap() - 0.818309886).abs() < 1e-9);
        assert!(doppler_energy_concentration(1.5).is_err());
        let a = energy_fraction_alpha(0.9).unwrap();
        assert!((doppler_energy_concentration(a).unwrap() - 0.9).abs() < 1e-12);
    }
}
