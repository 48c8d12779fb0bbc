//! Synchronous K-user Gaussian multiple-access channel.
//!
//! `y_t = Σ_k √(Eb/L)·x_t^(k) + z_t`, with `Eb = 1`, `N0 = 1/(Eb/N0)` and
//! noise variance `N0/2`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    users: usize,
    spreading: usize,
    eb_n0_db: f64,
    n0: f64,
}

impl ChannelParams {
    pub fn new(users: usize, spreading: usize, eb_n0_db: f64) -> Result<Self> {
        if users == 0 || spreading == 0 {
            return Err(Error::InvalidParameter(
                "user count and spreading length must be positive".into(),
            ));
        }
        if !eb_n0_db.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Eb/N0 must be finite, got {eb_n0_db}"
            )));
        }
        Ok(Self {
            users,
            spreading,
            eb_n0_db,
            n0: 1.0 / db_to_linear(eb_n0_db),
        })
    }

    /// Overrides the noise density; `0.0` gives a noiseless channel.
    pub fn with_n0(mut self, n0: f64) -> Self {
        assert!(n0 >= 0.0 && n0.is_finite(), "N0 must be finite and >= 0");
        self.n0 = n0;
        self
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn spreading(&self) -> usize {
        self.spreading
    }

    pub fn eb_n0_db(&self) -> f64 {
        self.eb_n0_db
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Chip energy `Eb/L`.
    pub fn chip_energy(&self) -> f64 {
        1.0 / self.spreading as f64
    }

    /// Chip amplitude `√(Eb/L)`.
    pub fn amplitude(&self) -> f64 {
        self.chip_energy().sqrt()
    }

    pub fn noise_variance(&self) -> f64 {
        self.n0 / 2.0
    }
}

/// Superimposes the users' chip vectors and adds Gaussian noise drawn from
/// `rng` (one standard normal per position, in order).
pub fn transmit<R: Rng + ?Sized>(
    chips: &[Vec<i8>],
    params: &ChannelParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut y = superimpose(chips, params)?;
    let sigma = params.noise_variance().sqrt();
    for v in &mut y {
        let z: f64 = rng.sample(StandardNormal);
        *v += sigma * z;
    }
    Ok(y)
}

/// The noiseless part of [`transmit`].
pub fn superimpose(chips: &[Vec<i8>], params: &ChannelParams) -> Result<Vec<f64>> {
    if chips.len() != params.users() {
        return Err(Error::LengthMismatch {
            what: "user chip vectors",
            expected: params.users(),
            actual: chips.len(),
        });
    }
    let len = chips[0].len();
    if let Some(bad) = chips.iter().find(|c| c.len() != len) {
        return Err(Error::LengthMismatch {
            what: "chip vector",
            expected: len,
            actual: bad.len(),
        });
    }
    let a = params.amplitude();
    let mut y = vec![0.0; len];
    for user in chips {
        for (v, &c) in y.iter_mut().zip(user) {
            *v += a * f64::from(c);
        }
    }
    Ok(y)
}
