//! Filter-bank user separation, correlation timing metrics and timing-offset
//! decisions.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::numerics::{unitary_dft, unitary_dft_in_place, ComplexMatrix, C64};
use crate::pilots::{transmit_pilot_matrix, PilotLayout, Structure};

/// Raw impulse response `e^q = F_Nᴴ a^q` of user `q`'s brickwall filter.
pub fn filter_response(q: usize, users: usize, n: usize) -> Result<Vec<C64>> {
    let (lo, hi) = band(q, users, n)?;
    let a: Vec<C64> = (0..n)
        .map(|k| if (lo..hi).contains(&k) { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
        .collect();
    unitary_dft(&a, true)
}

fn band(q: usize, users: usize, n: usize) -> Result<(usize, usize)> {
    if users == 0 || n % users != 0 {
        return Err(SyncError::Config(format!("Q = {users} must divide N = {n}")));
    }
    if q >= users {
        return Err(SyncError::Config(format!("user {q} out of range for Q = {users}")));
    }
    let w = n / users;
    Ok((q * w, (q + 1) * w))
}

/// Keeps Doppler bins `[q⌊N/Q⌋, (q+1)⌊N/Q⌋)` of every delay row of a
/// column-major M×N delay-time vector. The bank sums to the identity.
pub fn filter_bank_separate(r: &[C64], q: usize, users: usize, m: usize, n: usize) -> Result<Vec<C64>> {
    if r.len() != m * n {
        return Err(SyncError::Shape(format!("expected {} samples, got {}", m * n, r.len())));
    }
    let (lo, hi) = band(q, users, n)?;
    if users == 1 {
        return Ok(r.to_vec());
    }
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    let mut row = vec![C64::new(0.0, 0.0); n];
    for l in 0..m {
        for t in 0..n {
            row[t] = r[t * m + l];
        }
        unitary_dft_in_place(&mut row, false)?;
        for (k, v) in row.iter_mut().enumerate() {
            if !(lo..hi).contains(&k) {
                *v = C64::new(0.0, 0.0);
            }
        }
        unitary_dft_in_place(&mut row, true)?;
        for t in 0..n {
            out[t * m + l] = row[t];
        }
    }
    Ok(out)
}

/// Correlation profile over the delay shifts `0..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingMetric {
    pub values: Vec<f64>,
    pub user: usize,
}

impl TimingMetric {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of the maximum; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// How the pilot template slides over the received block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricSlide {
    /// Each delay-time column is shifted circularly on its own.
    #[default]
    Circular,
    /// The template slides along the serial stream, so rows pushed past the
    /// end of a column continue in the next one as under a physical delay.
    Serial,
}

/// `p[l'] = (1/MN) Σ_n |Σ_l R[l,n]·conj(Z[(l − l') mod M, n])|`.
pub fn timing_metric(r: &ComplexMatrix, z: &ComplexMatrix, user: usize) -> Result<TimingMetric> {
    sliding_metric(r, z, user, MetricSlide::Circular)
}

/// `p[l'] = (1/MN) Σ_n |Σ_l r[(nM + l + l') mod MN]·conj(Z[l,n])|` with `r`
/// the column-major serialization of `R`. Equal to [`timing_metric`] when no
/// template row crosses a column boundary.
pub fn timing_metric_serial(r: &ComplexMatrix, z: &ComplexMatrix, user: usize) -> Result<TimingMetric> {
    sliding_metric(r, z, user, MetricSlide::Serial)
}

pub fn sliding_metric(r: &ComplexMatrix, z: &ComplexMatrix, user: usize, slide: MetricSlide) -> Result<TimingMetric> {
    if r.shape() != z.shape() {
        return Err(SyncError::Shape(format!("R is {:?}, Z is {:?}", r.shape(), z.shape())));
    }
    let (m, n) = r.shape();
    let mn = m * n;
    let serial = r.as_slice();
    let rows: Vec<usize> = (0..m).filter(|&l| (0..n).any(|t| z[(l, t)] != C64::new(0.0, 0.0))).collect();
    let scale = 1.0 / mn as f64;
    let values = (0..m)
        .map(|shift| {
            let mut total = 0.0;
            for t in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for &j in &rows {
                    let v = match slide {
                        MetricSlide::Circular => r[((j + shift) % m, t)],
                        MetricSlide::Serial => serial[(t * m + j + shift) % mn],
                    };
                    acc += v * z[(j, t)].conj();
                }
                total += acc.norm();
            }
            total * scale
        })
        .collect();
    Ok(TimingMetric { values, user })
}

/// Lower and upper threshold bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdRange {
    pub lower: f64,
    pub upper: f64,
    pub normalized: bool,
}

impl ThresholdRange {
    pub fn feasible(&self) -> bool {
        self.lower < self.upper
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Absolute metric bounds between the partial-overlap minor peak and the
/// first major peak, for base length `Ľ`, data and pilot amplitudes and
/// filtered noise standard deviation `σ_ζ`.
pub fn threshold_range_absolute(half_len: usize, sigma_s: f64, sigma_p: f64, sigma_zeta: f64, m: usize) -> Result<ThresholdRange> {
    check_threshold_inputs(half_len, sigma_s, sigma_p, sigma_zeta)?;
    let l = half_len as f64;
    let noise = (2.0 * l - 1.0).sqrt() * sigma_zeta;
    let lower = sigma_p / m as f64 * ((l + 1.0) / 2.0 * sigma_p + (1.5 * (l - 1.0)).sqrt() * sigma_s + noise);
    let upper = sigma_p / m as f64 * ((l - 1.0) * sigma_p - l.sqrt() * sigma_s - noise);
    Ok(ThresholdRange { lower, upper, normalized: false })
}

/// Bounds relative to the full-alignment peak `(2Ľ−1)σ_p²/M`, noise
/// neglected.
pub fn threshold_range_normalized(half_len: usize, sigma_s: f64, sigma_p: f64) -> Result<ThresholdRange> {
    check_threshold_inputs(half_len, sigma_s, sigma_p, 0.0)?;
    let l = half_len as f64;
    let rho = sigma_s / sigma_p;
    let lower = (l + 1.0 + (6.0 * (l - 1.0)).sqrt() * rho) / (2.0 * (2.0 * l - 1.0));
    let upper = (l - 1.0 + l.sqrt() * rho) / (2.0 * l - 1.0);
    Ok(ThresholdRange { lower, upper, normalized: true })
}

fn check_threshold_inputs(half_len: usize, sigma_s: f64, sigma_p: f64, sigma_zeta: f64) -> Result<()> {
    if half_len < 1 || !(sigma_p > 0.0) || !(sigma_s >= 0.0) || !(sigma_zeta >= 0.0) {
        return Err(SyncError::Config("threshold inputs must be positive".into()));
    }
    Ok(())
}

/// Both bounds; the normalized range is the one used for detection.
pub fn threshold_range(half_len: usize, sigma_s: f64, sigma_p: f64, sigma_zeta: f64, m: usize) -> Result<(ThresholdRange, ThresholdRange)> {
    Ok((
        threshold_range_absolute(half_len, sigma_s, sigma_p, sigma_zeta, m)?,
        threshold_range_normalized(half_len, sigma_s, sigma_p)?,
    ))
}

fn wrap(v: i64, m: usize) -> usize {
    v.rem_euclid(m as i64) as usize
}

/// First index reaching `𝒯·max`, mapped to a timing offset:
/// `θ̂ = (min Θ̂ − L_cp − l_ref + 1) mod M`.
pub fn detect_first_major_peak(metric: &TimingMetric, threshold: f64, l_ref: usize, l_cp: usize, m: usize) -> Result<usize> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SyncError::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    let level = threshold * metric.max();
    let first = metric
        .values
        .iter()
        .position(|&v| v >= level)
        .ok_or_else(|| SyncError::Numerical("timing metric is not finite".into()))?;
    Ok(wrap(first as i64 - l_cp as i64 - l_ref as i64 + 1, m))
}

/// `θ̂ = (argmax − L_cp − l_ref − L_pilot − λ_ch + 1) mod M`.
pub fn detect_highest_peak(metric: &TimingMetric, mean_delay: usize, l_ref: usize, l_cp: usize, l_pilot: usize, m: usize) -> usize {
    wrap(
        metric.argmax() as i64 - l_cp as i64 - l_ref as i64 - l_pilot as i64 - mean_delay as i64 + 1,
        m,
    )
}

/// Signed timing error wrapped into `[−M/2, M/2)`.
pub fn wrapped_error(estimate: usize, truth: usize, m: usize) -> i64 {
    let half = (m / 2) as i64;
    (estimate as i64 - truth as i64 + half).rem_euclid(m as i64) - half
}

/// Per-user timing metric from a received frame: the first MN samples are
/// passed through the filter bank (MU-PCP) and correlated with the user's
/// delay-time pilot.
pub fn user_timing_metric(
    r: &[C64],
    layout: &PilotLayout,
    q: usize,
    users: usize,
    slide: MetricSlide,
) -> Result<TimingMetric> {
    let (m, n) = (layout.m, layout.n);
    if r.len() < m * n {
        return Err(SyncError::Shape(format!("received frame shorter than {} samples", m * n)));
    }
    let head = &r[..m * n];
    let filtered;
    let source = match layout.structure {
        Structure::MuPcp => {
            filtered = filter_bank_separate(head, q, users, m, n)?;
            &filtered[..]
        }
        Structure::SuPcp => head,
    };
    let grid = ComplexMatrix::from_column_slice(m, n, source);
    sliding_metric(&grid, &transmit_pilot_matrix(layout, q), q, slide)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_response_small_case() {
        let e = filter_response(0, 2, 4).unwrap();
        let want = [C64::new(1.0, 0.0), C64::new(0.5, 0.5), C64::new(0.0, 0.0), C64::new(0.5, -0.5)];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn bank_sums_to_identity() {
        let (m, n) = (3, 8);
        let r: Vec<C64> = (0..m * n).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
        let mut sum = vec![C64::new(0.0, 0.0); m * n];
        for q in 0..4 {
            for (s, v) in sum.iter_mut().zip(filter_bank_separate(&r, q, 4, m, n).unwrap()) {
                *s += v;
            }
        }
        for (a, b) in sum.iter().zip(&r) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(filter_bank_separate(&r, 0, 1, m, n).unwrap(), r);
        assert!(filter_bank_separate(&r, 0, 3, m, n).is_err());
    }

    #[test]
    fn zero_input_gives_zero_metric() {
        let z = ComplexMatrix::from_element(4, 2, C64::new(1.0, 0.0));
        let p = timing_metric(&ComplexMatrix::zeros(4, 2), &z, 0).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn metric_is_phase_invariant_and_circular() {
        let (m, n) = (6, 3);
        let r = ComplexMatrix::from_fn(m, n, |l, t| C64::new(l as f64 - t as f64, (l * t) as f64 * 0.3));
        let mut z = ComplexMatrix::zeros(m, n);
        z[(1, 0)] = C64::new(1.0, 1.0);
        z[(2, 2)] = C64::new(0.0, 2.0);
        let p = timing_metric(&r, &z, 0).unwrap();
        let rot = r.map(|v| v * C64::from_polar(1.0, 0.4));
        let pr = timing_metric(&rot, &z, 0).unwrap();
        for (a, b) in p.values.iter().zip(&pr.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let shifted = ComplexMatrix::from_fn(m, n, |l, t| r[((l + m - 2) % m, t)]);
        let ps = timing_metric(&shifted, &z, 0).unwrap();
        for l in 0..m {
            assert!((ps.values[(l + 2) % m] - p.values[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn serial_slide() {
        let (m, n) = (6, 3);
        let mn = m * n;
        let r = ComplexMatrix::from_fn(m, n, |l, t| C64::new((l + 2 * t) as f64, 0.5 - t as f64));
        let mut z = ComplexMatrix::zeros(m, n);
        z[(1, 0)] = C64::new(1.0, 1.0);
        z[(2, 2)] = C64::new(0.0, 2.0);
        let p = timing_metric_serial(&r, &z, 0).unwrap();
        let shifted = ComplexMatrix::from_fn(m, n, |l, t| r.as_slice()[(t * m + l + mn - 2) % mn]);
        let ps = timing_metric_serial(&shifted, &z, 0).unwrap();
        for l in 0..m - 2 {
            assert!((ps.values[l + 2] - p.values[l]).abs() < 1e-12);
        }
        // Rows 1 and 2 shifted by up to 3 stay inside their columns.
        let c = timing_metric(&r, &z, 0).unwrap();
        for l in 0..=3 {
            assert!((p.values[l] - c.values[l]).abs() < 1e-12);
        }
        assert!((p.values[5] - c.values[5]).abs() > 1e-6);
    }

    #[test]
    fn normalized_thresholds() {
        let t = threshold_range_normalized(16, 0.01, 1.0).unwrap();
        assert!((t.lower - 0.2757).abs() < 5e-5);
        assert!((t.upper - 0.4852).abs() < 5e-5);
        let z = threshold_range_normalized(10, 0.0, 1.0).unwrap();
        assert!((z.lower - 11.0 / 38.0).abs() < 1e-12);
        assert!((z.upper - 9.0 / 19.0).abs() < 1e-12);
        let lim = threshold_range_normalized(10_000, 1e-4, 1.0).unwrap();
        assert!((lim.lower - 0.25).abs() < 1e-3 && (lim.upper - 0.5).abs() < 1e-3);
    }

    #[test]
    fn absolute_thresholds_scale_with_normalized() {
        let a = threshold_range_absolute(16, 0.0, 10.0, 0.0, 64).unwrap();
        let peak = 31.0 * 100.0 / 64.0;
        let nrm = threshold_range_normalized(16, 0.0, 10.0).unwrap();
        assert!((a.lower / peak - nrm.lower).abs() < 1e-12);
        assert!((a.upper / peak - nrm.upper).abs() < 1e-12);
        assert!(threshold_range_absolute(16, 1.0, 0.0, 0.0, 64).is_err());
    }

    #[test]
    fn peak_rules_on_synthetic_metric() {
        let mut values = vec![0.0; 128];
        values[20] = 0.6;
        values[30] = 1.0;
        values[40] = 0.9;
        let p = TimingMetric { values, user: 0 };
        assert_eq!(detect_first_major_peak(&p, 0.5, 5, 12, 128).unwrap(), 4);
        assert_eq!(detect_first_major_peak(&p, 0.95, 5, 12, 128).unwrap(), 14);
        assert!(detect_first_major_peak(&p, 1.0, 5, 12, 128).is_err());
        assert_eq!(detect_highest_peak(&p, 2, 5, 12, 10, 128), (30 - 12 - 5 - 10 - 2 + 1) as usize);
    }

    #[test]
    fn argmax_ties_take_first() {
        let p = TimingMetric { values: vec![0.1, 0.5, 0.5, 0.2], user: 0 };
        assert_eq!(p.argmax(), 1);
    }

    #[test]
    fn wrapped_errors() {
        assert_eq!(wrapped_error(3, 5, 128), -2);
        assert_eq!(wrapped_error(127, 0, 128), -1);
        assert_eq!(wrapped_error(0, 127, 128), 1);
    }
}
