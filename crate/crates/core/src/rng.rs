//! Deterministic random streams.
//!
//! Every stream is a xoshiro256** generator seeded through SplitMix64
//! (`Xoshiro256StarStar::seed_from_u64`). Uniforms take the top 53 bits of
//! `next_u64`: `u = (x >> 11) · 2⁻⁵³ ∈ [0, 1)`. Gaussians use the Box–Muller
//! transform on consecutive uniform pairs `(u₁, u₂)` with `u₁` replaced by
//! `1 − u₁ ∈ (0, 1]`:
//!
//! ```text
//! ρ = sqrt(−2 ln(1 − u₁)),  z₀ = ρ cos(2π u₂),  z₁ = ρ sin(2π u₂)
//! ```
//!
//! and both `z₀` then `z₁` are emitted. Sub-streams are keyed by
//! [`derive_seed`], a SplitMix64 finalizer applied to `seed ^ mix(key)`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::matrix::{Element, Matrix};

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the sub-stream identified by `key` under `seed`.
#[inline]
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    mix64(seed ^ mix64(key))
}

pub struct GaussianStream {
    rng: Xoshiro256StarStar,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: Xoshiro256StarStar::seed_from_u64(seed), spare: None }
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let rho = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(rho * theta.sin());
        rho * theta.cos()
    }

    /// `rows × cols` matrix of i.i.d. `N(0, std²)` entries, filled row-major.
    pub fn gaussian_matrix<T: Element>(&mut self, rows: usize, cols: usize, std: f64) -> Matrix<T> {
        Matrix::from_fn(rows, cols, |_, _| std * self.standard_normal())
    }
}

/// Gaussian matrix whose rows are rescaled to unit ℓ₂ norm.
pub fn unit_rows<T: Element>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    let g: Matrix<f64> = GaussianStream::new(seed).gaussian_matrix(rows, cols, 1.0);
    let mut out = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let norm = g.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        for j in 0..cols {
            let v = if norm > 0.0 { g.get(i, j) / norm } else { 0.0 };
            out.set(i, j, T::from_f64(v));
        }
    }
    out
}

pub fn gaussian<T: Element>(rows: usize, cols: usize, seed: u64) -> Matrix<T> {
    GaussianStream::new(seed).gaussian_matrix(rows, cols, 1.0)
}
