//! Cyclic-prefixed Zadoff-Chu pilots and their placement on the grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::frame::FrameParams;
use crate::numerics::{zadoff_chu, ComplexMatrix, ZcSequence, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// One delay block per user, all at the centre Doppler bin.
    SuPcp,
    /// A shared delay block, one Doppler bin per user.
    MuPcp,
}

/// Doppler guard around SU-PCP pilots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuardPolicy {
    /// The whole pilot rows are reserved.
    #[default]
    Full,
    /// `⌈2κ_max⌉` zero bins on each side of the pilot bin.
    Partial,
}

/// A pilot with cyclic prefix: `[z[1..L], z[0..L]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcpVector {
    pub samples: Vec<C64>,
    pub base_len: usize,
}

pub fn build_pcp(zc: &ZcSequence) -> Result<PcpVector> {
    let l = zc.samples.len();
    if l < 2 {
        return Err(SyncError::Config("PCP needs a base sequence of length at least 2".into()));
    }
    let mut samples = Vec::with_capacity(2 * l - 1);
    samples.extend_from_slice(&zc.samples[1..]);
    samples.extend_from_slice(&zc.samples);
    Ok(PcpVector { samples, base_len: l })
}

/// ZC root and pilot power shared by all users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotPower {
    pub root: i64,
    /// Delay-time pilot power `σ_p²` (linear, relative to unit-energy data).
    pub sigma_p2: f64,
}

impl Default for PilotPower {
    fn default() -> Self {
        Self { root: 1, sigma_p2: 1e4 }
    }
}

/// One user's pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPilot {
    /// Row of the first sample of the sequence after its prefix
    /// (`l_p^q` for SU-PCP, `l_p` for MU-PCP).
    pub anchor: usize,
    /// Doppler bin carrying the pilot.
    pub k_p: usize,
    pub zc: ZcSequence,
    pub pcp: PcpVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotLayout {
    pub structure: Structure,
    pub guard: GuardPolicy,
    pub m: usize,
    pub n: usize,
    /// Base sequence length `L_p` or `Ľ_p`.
    pub half_len: usize,
    /// Zero bins on each side of the pilot bin (partial guards only).
    pub guard_width: usize,
    pub sigma_p2: f64,
    pub users: Vec<UserPilot>,
    /// Column-major M×N mask of pilot and guard cells.
    reserved: Vec<bool>,
}

impl PilotLayout {
    /// Pilot length used by channel estimation.
    pub fn pilot_len(&self) -> usize {
        self.half_len
    }

    /// Rows spanned by user `q`'s PCP, in sample order (mod M).
    pub fn pilot_rows(&self, q: usize) -> Vec<usize> {
        let start = self.users[q].anchor + self.m - (self.half_len - 1);
        (0..2 * self.half_len - 1).map(|i| (start + i) % self.m).collect()
    }

    /// Timing reference: offsets measured on the metric are taken relative
    /// to `(1 − L) mod M`, which aligns the first major peak with θ.
    pub fn timing_reference(&self) -> usize {
        (self.m + 1 - self.half_len % self.m) % self.m
    }

    pub fn is_reserved(&self, l: usize, k: usize) -> bool {
        self.reserved[k * self.m + l]
    }

    pub fn reserved_count(&self) -> usize {
        self.reserved.iter().filter(|&&r| r).count()
    }
}

/// `min(L_p − 1, ⌊M/(2L_p − 1)⌋)` for SU-PCP, `⌊N/(4ακ_max + 1)⌋` for MU-PCP.
pub fn max_users(structure: Structure, params: &FrameParams, half_len: usize, kappa_max: f64, alpha: f64) -> usize {
    match structure {
        Structure::SuPcp => {
            if half_len == 0 {
                return 0;
            }
            (half_len - 1).min(params.m / (2 * half_len - 1))
        }
        Structure::MuPcp => (params.n as f64 / (4.0 * alpha * kappa_max + 1.0) + 1e-12).floor() as usize,
    }
}

/// BEM order for a Doppler spread: `max(1, ⌈2κ_max + 1⌉)`.
pub fn bem_order(kappa_max: f64) -> usize {
    ((2.0 * kappa_max + 1.0 - 1e-12).ceil() as usize).max(1)
}

/// MU-PCP base length `Ľ_p = L_ch + ⌈β/2⌉`.
pub fn mu_half_len(l_ch: usize, beta: usize) -> usize {
    l_ch + beta.div_ceil(2)
}

fn reserve_rows(mask: &mut [bool], m: usize, n: usize, rows: &[usize], cols: &[usize]) {
    for &k in cols {
        for &l in rows {
            mask[(k % n) * m + l] = true;
        }
    }
}

/// SU-PCP placement: user `q` anchors at `l_p + L_p + q(2L_p − 1)` with
/// `l_p = M/2 + ⌊Q/2⌋ − Q·L_p`, all at `k_p = N/2`.
pub fn layout_su_pcp(
    params: &FrameParams,
    half_len: usize,
    guard: GuardPolicy,
    kappa_max: f64,
    power: PilotPower,
) -> Result<PilotLayout> {
    let (m, n, q_users) = (params.m, params.n, params.users);
    if m % 2 != 0 {
        return Err(SyncError::Config("SU-PCP placement needs an even number of delay bins".into()));
    }
    if half_len < 2 {
        return Err(SyncError::Config("pilot length must be at least 2".into()));
    }
    let capacity = max_users(Structure::SuPcp, params, half_len, kappa_max, 0.5);
    if q_users > capacity {
        return Err(SyncError::Capacity { requested: q_users, capacity });
    }
    let l_p = (m / 2 + q_users / 2) as i64 - (q_users * half_len) as i64;
    if l_p + 1 < 0 {
        return Err(SyncError::Config("SU-PCP block does not fit in the delay dimension".into()));
    }
    let k_p = n / 2;
    let amplitude = (n as f64 * power.sigma_p2).sqrt();
    let guard_width = match guard {
        GuardPolicy::Full => 0,
        GuardPolicy::Partial => (2.0 * kappa_max - 1e-12).ceil().max(0.0) as usize,
    };
    let mut users = Vec::with_capacity(q_users);
    let mut reserved = vec![false; m * n];
    for q in 0..q_users {
        let anchor = (l_p + (half_len + q * (2 * half_len - 1)) as i64) as usize;
        let zc = zadoff_chu(half_len, power.root, q, amplitude)?;
        let pcp = build_pcp(&zc)?;
        let rows: Vec<usize> = (0..2 * half_len - 1).map(|i| (anchor + 1 + i - half_len) % m).collect();
        let cols: Vec<usize> = match guard {
            GuardPolicy::Full => (0..n).collect(),
            GuardPolicy::Partial => {
                let w = guard_width.min(n / 2);
                (0..=2 * w).map(|j| (k_p + n - w + j) % n).collect()
            }
        };
        reserve_rows(&mut reserved, m, n, &rows, &cols);
        users.push(UserPilot { anchor, k_p, zc, pcp });
    }
    Ok(PilotLayout {
        structure: Structure::SuPcp,
        guard,
        m,
        n,
        half_len,
        guard_width,
        sigma_p2: power.sigma_p2,
        users,
        reserved,
    })
}

/// MU-PCP placement: a shared delay block anchored at `anchor` (default
/// `M − 1`, wrapping around the delay axis) with user `q` at Doppler bin
/// `⌊⌊N/Q⌋/2⌋ + q⌊N/Q⌋`. All users share one ZC sequence.
pub fn layout_mu_pcp(
    params: &FrameParams,
    half_len: usize,
    alpha: f64,
    kappa_max: f64,
    anchor: Option<usize>,
    power: PilotPower,
) -> Result<PilotLayout> {
    let (m, n, q_users) = (params.m, params.n, params.users);
    if half_len < 2 {
        return Err(SyncError::Config("pilot length must be at least 2".into()));
    }
    if 2 * half_len - 1 > m {
        return Err(SyncError::Config("MU-PCP block longer than the delay dimension".into()));
    }
    let capacity = max_users(Structure::MuPcp, params, half_len, kappa_max, alpha).min(n);
    if q_users > capacity {
        return Err(SyncError::Capacity { requested: q_users, capacity });
    }
    let anchor = anchor.unwrap_or(m - 1);
    if anchor >= m {
        return Err(SyncError::Config("pilot anchor outside the delay dimension".into()));
    }
    let amplitude = (n as f64 * power.sigma_p2).sqrt();
    let zc = zadoff_chu(half_len, power.root, 0, amplitude)?;
    let pcp = build_pcp(&zc)?;
    let width = n / q_users;
    let rows: Vec<usize> = (0..2 * half_len - 1).map(|i| (anchor + m + 1 + i - half_len) % m).collect();
    let mut reserved = vec![false; m * n];
    reserve_rows(&mut reserved, m, n, &rows, &(0..n).collect::<Vec<_>>());
    let users = (0..q_users)
        .map(|q| UserPilot { anchor, k_p: width / 2 + q * width, zc: zc.clone(), pcp: pcp.clone() })
        .collect();
    Ok(PilotLayout {
        structure: Structure::MuPcp,
        guard: GuardPolicy::Full,
        m,
        n,
        half_len,
        guard_width: 0,
        sigma_p2: power.sigma_p2,
        users,
        reserved,
    })
}

/// Writes the pilots of `users` into `d`; guard cells are zeroed. Fails if
/// `d` already carries symbols on reserved cells.
pub fn embed_pilots(d: &ComplexMatrix, layout: &PilotLayout, users: &[usize]) -> Result<ComplexMatrix> {
    if d.shape() != (layout.m, layout.n) {
        return Err(SyncError::Shape(format!("grid is {:?}, layout is {}x{}", d.shape(), layout.m, layout.n)));
    }
    let mut out = d.clone();
    for k in 0..layout.n {
        for l in 0..layout.m {
            if layout.is_reserved(l, k) {
                if d[(l, k)] != C64::new(0.0, 0.0) {
                    return Err(SyncError::Config(format!("data symbol on reserved cell ({l},{k})")));
                }
                out[(l, k)] = C64::new(0.0, 0.0);
            }
        }
    }
    for &q in users {
        let u = layout.users.get(q).ok_or_else(|| SyncError::Config(format!("no pilot for user {q}")))?;
        for (i, l) in layout.pilot_rows(q).into_iter().enumerate() {
            out[(l, u.k_p)] = u.pcp.samples[i];
        }
    }
    Ok(out)
}

/// Delay-time pilot of user `q`: the PCP column at `k_p` transformed along
/// Doppler, `Z[l, n] = p[l]·e^{j2πk_p n/N}/√N`.
pub fn transmit_pilot_matrix(layout: &PilotLayout, q: usize) -> ComplexMatrix {
    let (m, n) = (layout.m, layout.n);
    let u = &layout.users[q];
    let mut z = ComplexMatrix::zeros(m, n);
    let scale = 1.0 / (n as f64).sqrt();
    for (i, l) in layout.pilot_rows(q).into_iter().enumerate() {
        for t in 0..n {
            let ph = 2.0 * PI * ((u.k_p * t) % n) as f64 / n as f64;
            z[(l, t)] = u.pcp.samples[i] * C64::from_polar(scale, ph);
        }
    }
    z
}
