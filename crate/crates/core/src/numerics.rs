//! Complex linear algebra and sequence primitives.
//!
//! All DFTs use the unitary convention: forward `X[k] = N^{-1/2} Σ x[n] e^{-j2πkn/N}`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SyncError};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// Unitary DFT (or its inverse) applied in place.
pub fn unitary_dft_in_place(x: &mut [C64], inverse: bool) -> Result<()> {
    if x.is_empty() {
        return Err(SyncError::EmptyInput);
    }
    let n = x.len();
    plan(n, inverse).process(x);
    let scale = 1.0 / (n as f64).sqrt();
    for v in x.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

/// Applies `F_N` (or `F_N^H` when `inverse`) to `x`.
pub fn unitary_dft(x: &[C64], inverse: bool) -> Result<Vec<C64>> {
    let mut out = x.to_vec();
    unitary_dft_in_place(&mut out, inverse)?;
    Ok(out)
}

/// The N×N unitary DFT matrix.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    let scale = 1.0 / (n as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |k, m| {
        C64::from_polar(scale, -2.0 * PI * ((k * m) % n) as f64 / n as f64)
    })
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// A Zadoff-Chu sequence with user-dependent effective root `μ(2q+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcSequence {
    pub length: usize,
    pub root: i64,
    pub user: usize,
    pub amplitude: f64,
    pub samples: Vec<C64>,
}

/// `z[ι] = A·exp(−jπ μ ι(ι+1)(2q+1)/L)` for `ι = 0..L−1`.
pub fn zadoff_chu(length: usize, root: i64, user: usize, amplitude: f64) -> Result<ZcSequence> {
    if length == 0 {
        return Err(SyncError::EmptyInput);
    }
    let l = length as i64;
    let effective = (root * (2 * user as i64 + 1)).rem_euclid(l) as u64;
    for g in [gcd(length as u64, root.rem_euclid(l) as u64), gcd(length as u64, effective)] {
        if g != 1 && length > 1 {
            return Err(SyncError::InvalidRoot { length, root, gcd: g });
        }
    }
    let samples = (0..length as i64)
        .map(|i| {
            // Reduce the integer phase exactly before converting to float.
            let num = (root * i * (i + 1) * (2 * user as i64 + 1)).rem_euclid(2 * l);
            C64::from_polar(amplitude, -PI * num as f64 / l as f64)
        })
        .collect();
    Ok(ZcSequence { length, root, user, amplitude, samples })
}

/// Thin QR factorization of a tall matrix with full column rank.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    q: ComplexMatrix,
    r: ComplexMatrix,
}

/// Relative threshold on the smallest `|R_ii|` below which a matrix is
/// treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

impl LeastSquares {
    pub fn new(g: &ComplexMatrix) -> Result<Self> {
        let (rows, cols) = g.shape();
        if rows == 0 || cols == 0 {
            return Err(SyncError::EmptyInput);
        }
        if cols > rows {
            return Err(SyncError::Singular { condition: f64::INFINITY });
        }
        let qr = g.clone().qr();
        let q = qr.q();
        let r = qr.r();
        let diag: Vec<f64> = (0..cols).map(|i| r[(i, i)].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(max > 0.0) || min <= RANK_TOL * max || !condition.is_finite() {
            return Err(SyncError::Singular { condition });
        }
        Ok(Self { q, r })
    }

    /// Orthonormal basis of the column space.
    pub fn q(&self) -> &ComplexMatrix {
        &self.q
    }

    /// `G†·v`, the least-squares coefficients.
    pub fn solve(&self, v: &[C64]) -> Vec<C64> {
        let qhv = self.q.adjoint() * nalgebra::DVector::from_column_slice(v);
        let x = self
            .r
            .solve_upper_triangular(&qhv)
            .expect("diagonal checked at construction");
        x.iter().cloned().collect()
    }

    /// `vᴴ G G† v = ‖Qᴴv‖²`.
    pub fn projected_energy(&self, v: &[C64]) -> f64 {
        let q = &self.q;
        let mut total = 0.0;
        for c in 0..q.ncols() {
            let col = q.column(c);
            let mut acc = C64::new(0.0, 0.0);
            for (a, b) in col.iter().zip(v) {
                acc += a.conj() * b;
            }
            total += acc.norm_sqr();
        }
        total
    }

    /// The explicit pseudo-inverse `R⁻¹Qᴴ`.
    pub fn pinv(&self) -> ComplexMatrix {
        let qh = self.q.adjoint();
        self.r
            .solve_upper_triangular(&qh)
            .expect("diagonal checked at construction")
    }
}

/// `G† = (GᴴG)⁻¹Gᴴ`, computed through QR.
pub fn least_squares_pinv(g: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(LeastSquares::new(g)?.pinv())
}

/// Circulant matrix with `entry[i,j] = c[(i−j) mod N]`.
pub fn circulant(first_column: &[C64]) -> ComplexMatrix {
    let n = first_column.len();
    ComplexMatrix::from_fn(n, n, |i, j| first_column[(i + n - j) % n])
}

/// Kronecker product.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn norm_sqr(x: &[C64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}
