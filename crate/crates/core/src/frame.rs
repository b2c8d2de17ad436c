//! Delay-Doppler resource allocation and OTFS (de)modulation.
//!
//! Vectorization is column-major: `x[nM + l] = X[l, n]`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SyncError};
use crate::numerics::{unitary_dft_in_place, ComplexMatrix, C64};

/// Grid and timing parameters of one OTFS frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub m: usize,
    pub n: usize,
    pub users: usize,
    /// Delay spacing in seconds.
    pub delta_tau: f64,
    pub l_cp: usize,
}

impl FrameParams {
    pub fn new(m: usize, n: usize, users: usize, delta_tau: f64, l_cp: usize) -> Result<Self> {
        if m == 0 || n == 0 || users == 0 {
            return Err(SyncError::Config("M, N and Q must be at least 1".into()));
        }
        if !(delta_tau > 0.0) || !delta_tau.is_finite() {
            return Err(SyncError::Config("delay spacing must be positive".into()));
        }
        Ok(Self { m, n, users, delta_tau, l_cp })
    }

    /// CP length covering the channel plus the worst timing offset.
    pub fn cp_length(l_ch: usize, theta_max: usize) -> usize {
        (l_ch + theta_max).saturating_sub(1)
    }

    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// Samples per frame including the CP.
    pub fn n_s(&self) -> usize {
        self.mn() + self.l_cp
    }

    /// Delay block duration `T = MΔτ`.
    pub fn t(&self) -> f64 {
        self.m as f64 * self.delta_tau
    }

    /// Frame duration `T_f = NT`.
    pub fn t_f(&self) -> f64 {
        self.n as f64 * self.t()
    }

    /// Doppler spacing `1/(MNΔτ)`.
    pub fn delta_nu(&self) -> f64 {
        1.0 / self.t_f()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Explicit index sets.
    Genma,
    GbbmaDelay,
    GbbmaDoppler,
    Itfma,
    Iddma,
}

/// Delay and Doppler index sets of one user, equivalent to the selection
/// matrices `Γτ` (M × M_q) and `Γν` (N_q × N).
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPair {
    pub scheme: Scheme,
    pub user: usize,
    pub m: usize,
    pub n: usize,
    pub delay: Vec<usize>,
    pub doppler: Vec<usize>,
}

impl AllocationPair {
    pub fn m_q(&self) -> usize {
        self.delay.len()
    }

    pub fn n_q(&self) -> usize {
        self.doppler.len()
    }

    pub fn gamma_tau(&self) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(self.m, self.m_q());
        for (j, &l) in self.delay.iter().enumerate() {
            g[(l, j)] = C64::new(1.0, 0.0);
        }
        g
    }

    pub fn gamma_nu(&self) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(self.n_q(), self.n);
        for (i, &k) in self.doppler.iter().enumerate() {
            g[(i, k)] = C64::new(1.0, 0.0);
        }
        g
    }

    /// `Γ = Γνᵀ ⊗ Γτ`, mapping `vec(𝒟)` to `vec(D)`.
    pub fn gamma(&self) -> ComplexMatrix {
        self.gamma_nu().transpose().kronecker(&self.gamma_tau())
    }

    /// Allocated cells `(l, k)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.doppler
            .iter()
            .flat_map(move |&k| self.delay.iter().map(move |&l| (l, k)))
    }

    /// Diagonal 0/1 mask over `vec(D)` marking allocated cells.
    pub fn cell_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m * self.n];
        for (l, k) in self.cells() {
            mask[k * self.m + l] = true;
        }
        mask
    }
}

/// Allocation from the closed forms of the structured schemes.
///
/// `GbbmaDelay` and `GbbmaDoppler` require Q to divide N (resp. M); `Itfma` and
/// `Iddma` use `⌊M/M_q⌋` and `⌊N/N_q⌋` blocks and need `q` below both.
pub fn build_allocation(
    scheme: Scheme,
    q: usize,
    params: &FrameParams,
    m_q: usize,
    n_q: usize,
) -> Result<AllocationPair> {
    let (m, n, users) = (params.m, params.n, params.users);
    if q >= users {
        return Err(SyncError::Config(format!("user {q} out of range for Q={users}")));
    }
    let mismatch = |what: &str| SyncError::Config(format!("{scheme:?}: {what}"));
    let (delay, doppler): (Vec<usize>, Vec<usize>) = match scheme {
        Scheme::Genma => {
            return Err(mismatch("explicit allocations are built with explicit_allocation"))
        }
        Scheme::GbbmaDelay => {
            if n % users != 0 {
                return Err(mismatch("Q must divide N"));
            }
            if m_q != m || n_q != n / users {
                return Err(mismatch("requires M_q = M and N_q = N/Q"));
            }
            ((0..m).collect(), (0..n_q).map(|i| i * users + q).collect())
        }
        Scheme::GbbmaDoppler => {
            if m % users != 0 {
                return Err(mismatch("Q must divide M"));
            }
            if m_q != m / users || n_q != n {
                return Err(mismatch("requires M_q = M/Q and N_q = N"));
            }
            ((0..m_q).map(|i| i * users + q).collect(), (0..n).collect())
        }
        Scheme::Itfma | Scheme::Iddma => {
            if m_q == 0 || n_q == 0 || m_q > m || n_q > n {
                return Err(mismatch("block sizes must lie in 1..=M and 1..=N"));
            }
            let (bt, bn) = (m / m_q, n / n_q);
            if q >= bt || q >= bn {
                return Err(mismatch("user index exceeds the number of blocks"));
            }
            if scheme == Scheme::Itfma {
                ((q * m_q..(q + 1) * m_q).collect(), (q * n_q..(q + 1) * n_q).collect())
            } else {
                ((0..m_q).map(|i| i * bt + q).collect(), (0..n_q).map(|i| i * bn + q).collect())
            }
        }
    };
    Ok(AllocationPair { scheme, user: q, m, n, delay, doppler })
}

/// Allocation from explicit, strictly increasing index sets.
pub fn explicit_allocation(
    q: usize,
    m: usize,
    n: usize,
    delay: Vec<usize>,
    doppler: Vec<usize>,
) -> Result<AllocationPair> {
    let check = |v: &[usize], bound: usize| {
        !v.is_empty() && v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&i| i < bound)
    };
    if !check(&delay, m) || !check(&doppler, n) {
        return Err(SyncError::Config("index sets must be nonempty, increasing and in range".into()));
    }
    Ok(AllocationPair { scheme: Scheme::Genma, user: q, m, n, delay, doppler })
}

/// Checks that users own disjoint cells and that every delay and Doppler
/// index is used by at least one user.
pub fn check_allocations(allocs: &[AllocationPair]) -> Result<()> {
    let Some(first) = allocs.first() else {
        return Err(SyncError::EmptyInput);
    };
    let (m, n) = (first.m, first.n);
    let mut owner = vec![usize::MAX; m * n];
    let mut delays = BTreeSet::new();
    let mut dopplers = BTreeSet::new();
    for a in allocs {
        for (l, k) in a.cells() {
            let slot = &mut owner[k * m + l];
            if *slot != usize::MAX {
                return Err(SyncError::Config(format!(
                    "cell ({l},{k}) allocated to users {} and {}",
                    *slot, a.user
                )));
            }
            *slot = a.user;
        }
        delays.extend(a.delay.iter().copied());
        dopplers.extend(a.doppler.iter().copied());
    }
    if delays.len() != m || dopplers.len() != n {
        return Err(SyncError::Config("allocation does not cover every delay and Doppler index".into()));
    }
    Ok(())
}

/// `D = Γτ·𝒟·Γν`.
pub fn map_data(data: &ComplexMatrix, alloc: &AllocationPair) -> Result<ComplexMatrix> {
    if data.shape() != (alloc.m_q(), alloc.n_q()) {
        return Err(SyncError::Shape(format!(
            "data is {:?}, allocation expects {}x{}",
            data.shape(),
            alloc.m_q(),
            alloc.n_q()
        )));
    }
    let mut d = ComplexMatrix::zeros(alloc.m, alloc.n);
    for (j, &k) in alloc.doppler.iter().enumerate() {
        for (i, &l) in alloc.delay.iter().enumerate() {
            d[(l, k)] = data[(i, j)];
        }
    }
    Ok(d)
}

/// Gray-coded square QAM with unit average energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Qam {
    Qam4,
    Qam16,
    Qam64,
}

impl Qam {
    pub fn order(self) -> usize {
        match self {
            Qam::Qam4 => 4,
            Qam::Qam16 => 16,
            Qam::Qam64 => 64,
        }
    }

    pub fn bits_per_symbol(self) -> u32 {
        self.order().trailing_zeros()
    }

    fn side(self) -> usize {
        (self.order() as f64).sqrt() as usize
    }

    /// Maps `bits` (lowest `bits_per_symbol` bits used) to a symbol. The high
    /// half selects the in-phase level, the low half the quadrature level;
    /// adjacent levels differ in one bit.
    pub fn map(self, bits: u32) -> C64 {
        let half = self.bits_per_symbol() / 2;
        let mask = (1u32 << half) - 1;
        let side = self.side() as f64;
        let level = |g: u32| {
            // Gray to binary, then to the PAM amplitude.
            let mut b = g;
            let mut shift = g >> 1;
            while shift != 0 {
                b ^= shift;
                shift >>= 1;
            }
            2.0 * b as f64 - (side - 1.0)
        };
        let scale = (2.0 * (self.order() as f64 - 1.0) / 3.0).sqrt();
        C64::new(level((bits >> half) & mask), level(bits & mask)) / scale
    }

    pub fn random_symbol<R: Rng + ?Sized>(self, rng: &mut R) -> C64 {
        self.map(rng.random_range(0..self.order() as u32))
    }
}

/// A modulated frame in its three representations.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDopplerFrame {
    pub grid: ComplexMatrix,
    /// `x = vec(D·F_Nᴴ)`.
    pub serialized: Vec<C64>,
    /// `s = [x[MN−L_cp..], x]`.
    pub with_cp: Vec<C64>,
}

/// Inverse DFT along Doppler, serialization and CP insertion.
pub fn otfs_modulate(d: &ComplexMatrix, params: &FrameParams) -> Result<DelayDopplerFrame> {
    let (m, n) = (params.m, params.n);
    if d.shape() != (m, n) {
        return Err(SyncError::Shape(format!("grid is {:?}, expected {m}x{n}", d.shape())));
    }
    if params.l_cp > m * n {
        return Err(SyncError::Config("CP longer than the frame".into()));
    }
    let mut x = vec![C64::new(0.0, 0.0); m * n];
    let mut row = vec![C64::new(0.0, 0.0); n];
    for l in 0..m {
        for k in 0..n {
            row[k] = d[(l, k)];
        }
        unitary_dft_in_place(&mut row, true)?;
        for (t, v) in row.iter().enumerate() {
            x[t * m + l] = *v;
        }
    }
    let mut with_cp = Vec::with_capacity(params.n_s());
    with_cp.extend_from_slice(&x[m * n - params.l_cp..]);
    with_cp.extend_from_slice(&x);
    Ok(DelayDopplerFrame { grid: d.clone(), serialized: x, with_cp })
}

/// `(F_N ⊗ I_M)·y` for a length-MN delay-time vector.
pub fn demap(y: &[C64], m: usize, n: usize) -> Result<Vec<C64>> {
    if y.len() != m * n {
        return Err(SyncError::Shape(format!("expected {} samples, got {}", m * n, y.len())));
    }
    let mut out = vec![C64::new(0.0, 0.0); m * n];
    let mut row = vec![C64::new(0.0, 0.0); n];
    for l in 0..m {
        for t in 0..n {
            row[t] = y[t * m + l];
        }
        unitary_dft_in_place(&mut row, false)?;
        for (k, v) in row.iter().enumerate() {
            out[k * m + l] = *v;
        }
    }
    Ok(out)
}

/// Drops `L_cp − θ_max` samples from a vector that starts at sample `θ_max`
/// and returns `(F_N ⊗ I_M)·R_cp·r`.
pub fn remove_cp_and_demap(y_full: &[C64], params: &FrameParams, theta_max: usize) -> Result<Vec<C64>> {
    if theta_max > params.l_cp {
        return Err(SyncError::Config("θ_max exceeds the CP length".into()));
    }
    let skip = params.l_cp - theta_max;
    if y_full.len() < params.mn() + skip {
        return Err(SyncError::Shape(format!(
            "need at least {} samples, got {}",
            params.mn() + skip,
            y_full.len()
        )));
    }
    demap(&y_full[skip..skip + params.mn()], params.m, params.n)
}

/// Reshapes a column-major vector into an M×N matrix.
pub fn to_grid(v: &[C64], m: usize, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(m, n, v)
}

/// Explicit CP insertion matrix `A_cp` ((MN+L_cp) × MN).
pub fn cp_add_matrix(mn: usize, l_cp: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(mn + l_cp, mn, |i, j| {
        let src = if i < l_cp { mn - l_cp + i } else { i - l_cp };
        if src == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    })
}

/// Explicit CP removal matrix `R_cp = [0_{MN×skip}, I_MN]`.
pub fn cp_remove_matrix(mn: usize, skip: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(mn, mn + skip, |i, j| {
        if j == i + skip { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
    })
}
