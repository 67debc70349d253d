//! Seeded sampling primitives: Gamma (Marsaglia-Tsang), Dirichlet via Gamma
//! normalization, and weighted sampling without replacement.
//!
//! All randomness flows through [`RngState`], a ChaCha8 stream that yields the
//! same sequence on every platform for a given `(seed, stream)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent stream for the same seed; used to keep model init, data
    /// and selection draws from perturbing one another.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `(0, 1)`.
    fn open_uniform(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One draw from `Gamma(shape, 1)`. Shapes below one use the
/// `Gamma(shape + 1) * U^(1/shape)` boost; a draw that underflows to zero is
/// rejected, so the result is always finite and positive.
pub fn sample_gamma(shape: f64, rng: &mut RngState) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return Err(Error::Argument(format!(
            "gamma shape must be positive and finite, got {shape}"
        )));
    }
    loop {
        let g = if shape < 1.0 {
            let boost = rng.open_uniform().powf(1.0 / shape);
            marsaglia_tsang(shape + 1.0, rng) * boost
        } else {
            marsaglia_tsang(shape, rng)
        };
        if g > 0.0 && g.is_finite() {
            return Ok(g);
        }
    }
}

fn marsaglia_tsang(shape: f64, rng: &mut RngState) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open_uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Argument("dirichlet needs at least one component".into()));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(Error::Argument(format!(
                "dirichlet concentration must be positive and finite, got {a}"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

/// `p ~ Dirichlet(alpha)` as normalized independent Gamma draws.
pub fn sample_dirichlet(params: &DirichletParams, rng: &mut RngState) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = params
            .alpha
            .iter()
            .map(|&a| sample_gamma(a, rng).expect("alpha validated"))
            .collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Draws `m` distinct indices, one categorical draw at a time, renormalizing
/// over the indices not yet taken. If the remaining mass is zero the next
/// index is uniform over what is left.
pub fn weighted_sample_without_replacement(
    p: &[f64],
    m: usize,
    rng: &mut RngState,
) -> Result<Vec<usize>> {
    if m > p.len() {
        return Err(Error::Argument(format!(
            "cannot draw {m} distinct indices from {} weights",
            p.len()
        )));
    }
    if let Some(w) = p.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::Argument(format!(
            "weights must be non-negative and finite, got {w}"
        )));
    }

    let mut remaining: Vec<usize> = (0..p.len()).collect();
    let mut chosen = Vec::with_capacity(m);
    for _ in 0..m {
        let mass: f64 = remaining.iter().map(|&i| p[i]).sum();
        let pos = if mass > 0.0 {
            let target = rng.uniform() * mass;
            let mut acc = 0.0;
            let mut pick = None;
            for (pos, &i) in remaining.iter().enumerate() {
                acc += p[i];
                if target < acc {
                    pick = Some(pos);
                    break;
                }
            }
            // Rounding can leave `target` just past the last partial sum.
            pick.unwrap_or_else(|| {
                remaining
                    .iter()
                    .rposition(|&i| p[i] > 0.0)
                    .expect("positive mass")
            })
        } else {
            rng.below(remaining.len())
        };
        chosen.push(remaining.remove(pos));
    }
    Ok(chosen)
}
