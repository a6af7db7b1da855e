//! Correlated lognormal shadowing fields.
//!
//! Shadowing attenuation in dB is modeled as a zero-mean Gaussian random
//! field over the grid with exponentially decaying spatial correlation:
//! `cov(p, q) = variance · decay^(distance(p, q))`.  A field is drawn by
//! applying the Cholesky factor of that covariance to i.i.d. standard
//! normals.  The factor depends only on the grid geometry, so it is built
//! once and reused across draws.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::seeding::rng_from;

/// Number of escalating jitter attempts after the plain factorization.
const JITTER_ATTEMPTS: usize = 3;
/// First jitter, as a fraction of the variance.
const JITTER_BASE: f64 = 1e-10;

/// Reusable sampler for Gudmundson-correlated shadowing fields on a grid.
#[derive(Debug, Clone)]
pub struct ShadowingSampler {
    n_y: usize,
    n_x: usize,
    /// Lower Cholesky factor of the cell covariance; `None` when the
    /// variance is zero and every field is identically zero.
    factor: Option<DMatrix<f64>>,
}

impl ShadowingSampler {
    /// Builds the covariance over all grid cells (row-major flattening) and
    /// factors it, escalating diagonal jitter on failure.
    pub fn new(grid: &GridSpec, variance: f64, decay: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::InvalidConfig(format!("shadowing variance {variance} < 0")));
        }
        if !(decay > 0.0 && decay < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "shadowing decay must lie in (0, 1), got {decay}"
            )));
        }
        if variance == 0.0 {
            return Ok(ShadowingSampler { n_y: grid.n_y, n_x: grid.n_x, factor: None });
        }

        let n = grid.n_cells();
        let ln_decay = decay.ln();
        let mut cov = DMatrix::zeros(n, n);
        for p in 0..n {
            let a = grid.point(p / grid.n_x, p % grid.n_x);
            for q in p..n {
                let b = grid.point(q / grid.n_x, q % grid.n_x);
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
                let c = variance * (d * ln_decay).exp();
                cov[(p, q)] = c;
                cov[(q, p)] = c;
            }
        }

        let mut jitter = 0.0;
        for attempt in 0..=JITTER_ATTEMPTS {
            let mut m = cov.clone();
            if jitter > 0.0 {
                for p in 0..n {
                    m[(p, p)] += jitter;
                }
            }
            if let Some(chol) = m.cholesky() {
                return Ok(ShadowingSampler {
                    n_y: grid.n_y,
                    n_x: grid.n_x,
                    factor: Some(chol.unpack()),
                });
            }
            jitter = JITTER_BASE * variance * 10f64.powi(attempt as i32);
        }
        Err(Error::FactorizationFailed { attempts: JITTER_ATTEMPTS })
    }

    /// Draws one zero-mean field (dB), consuming `n_cells` normals.
    pub fn draw(&self, rng: &mut impl Rng) -> Array2<f64> {
        let n = self.n_y * self.n_x;
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        match &self.factor {
            None => Array2::zeros((self.n_y, self.n_x)),
            Some(l) => {
                let field = l * z;
                Array2::from_shape_fn((self.n_y, self.n_x), |(i, j)| field[i * self.n_x + j])
            }
        }
    }
}

/// One shadowing field for the given grid and seed.
pub fn gudmundson_field(grid: &GridSpec, variance: f64, decay: f64, seed: u64) -> Result<Array2<f64>> {
    let sampler = ShadowingSampler::new(grid, variance, decay)?;
    let mut rng = rng_from(seed, &[]);
    Ok(sampler.draw(&mut rng))
}
