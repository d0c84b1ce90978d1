use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `sqrt(2/D) cos(sqrt(2 gamma) z.x + b)`: inner products approximate `exp(-gamma |x-y|^2)`.
    #[default]
    Standard,
    /// `sqrt(2 gamma) cos(z.x + b)`, the prefactor taken literally.
    PaperLiteral,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Standard => "standard",
            Normalization::PaperLiteral => "paper_literal",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Normalization::Standard),
            "paper_literal" => Ok(Normalization::PaperLiteral),
            other => Err(Error::Config(format!(
                "normalization must be \"standard\" or \"paper_literal\", got {other:?}"
            ))),
        }
    }
}

/// Random Fourier feature map for the RBF kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    /// `D x d`, rows drawn from a standard Gaussian.
    pub z: DMatrix<f64>,
    /// Phases, uniform on `[0, 2pi)`.
    pub b: DVector<f64>,
    pub gamma: f64,
    pub seed: u64,
    pub normalization: Normalization,
}

/// Draws `Z` row by row, then `b`, from a ChaCha20 stream seeded with `seed`.
pub fn sample_rff(
    d: usize,
    features: usize,
    gamma: f64,
    seed: u64,
    normalization: Normalization,
) -> Result<RffMap> {
    if d == 0 || features == 0 {
        return Err(Error::Config(format!(
            "random features need d >= 1 and D >= 1, got d = {d}, D = {features}"
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut z = DMatrix::zeros(features, d);
    for j in 0..features {
        for k in 0..d {
            z[(j, k)] = rng.sample(StandardNormal);
        }
    }
    let b = DVector::from_fn(features, |_, _| rng.random::<f64>() * 2.0 * PI);
    Ok(RffMap {
        z,
        b,
        gamma,
        seed,
        normalization,
    })
}

impl RffMap {
    pub fn d(&self) -> usize {
        self.z.ncols()
    }

    pub fn features(&self) -> usize {
        self.z.nrows()
    }

    fn coefficients(&self) -> (f64, f64) {
        match self.normalization {
            Normalization::Standard => (
                (2.0 / self.features() as f64).sqrt(),
                (2.0 * self.gamma).sqrt(),
            ),
            Normalization::PaperLiteral => ((2.0 * self.gamma).sqrt(), 1.0),
        }
    }

    /// Maps an `N x d` matrix to its `N x D` feature matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.d() {
            return Err(Error::Config(format!(
                "feature block has {} columns, map expects {}",
                x.ncols(),
                self.d()
            )));
        }
        let (s, scale) = self.coefficients();
        let mut proj = x * self.z.transpose();
        for (j, mut col) in proj.column_iter_mut().enumerate() {
            let b = self.b[j];
            col.apply(|v| *v = s * (scale * *v + b).cos());
        }
        Ok(proj)
    }
}
