//! EXIT transfer functions in the LLR-mean domain.
//!
//! Under the Gaussian approximation a consistent chip LLR satisfies
//! `c·L(c) ~ N(m, 2m)`; an EXIT function maps the a-priori mean `m_a` to the
//! extrinsic mean `m_e`. This module estimates, by Monte Carlo:
//!
//! * the despreader's exact EXIT function, by running the decoder's own
//!   [`Despreader`] on random mappers, spreading vectors and chips;
//! * its closed-form approximation `φ(m_a)`, which only needs random
//!   correlation patterns and Gaussian vectors;
//! * the ESE's EXIT function, bounded above by `4·Eb/(L·N0)`.
//!
//! [`tunnel_check`] iterates the two curves against each other to decide
//! whether decoding escapes to large LLR means.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::codec::SpreadingVector;
use crate::decoder::{log_sum_exp, Despreader};
use crate::error::{Error, Result};
use crate::gf::{BitMapper, FieldSpec};
use crate::mc::{self, Estimate};
use crate::seed;

/// Default a-priori mean grid: dense below 1, sparse in the linear tail.
pub const DEFAULT_GRID: [f64; 12] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 20.0, 30.0, 40.0];

/// Default samples per grid point.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Consistent Gaussian LLR model: `c·L ~ N(m_a, 2·m_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    normal: Normal<f64>,
}

impl GaussianPrior {
    pub fn new(m_a: f64) -> Result<Self> {
        if !(m_a >= 0.0 && m_a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "LLR mean must be finite and >= 0, got {m_a}"
            )));
        }
        Ok(Self {
            normal: Normal::new(m_a, (2.0 * m_a).sqrt()).expect("valid normal"),
        })
    }

    pub fn mean(&self) -> f64 {
        self.normal.mean()
    }

    /// One draw of `c·L`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.normal.sample(rng)
    }
}

fn check(s: u32, l: usize, samples: usize) -> Result<()> {
    if s == 0 || s > crate::gf::MAX_DEGREE || l == 0 || samples == 0 {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= s <= 12, L >= 1, samples >= 1 (got s = {s}, L = {l}, samples = {samples})"
        )));
    }
    Ok(())
}

/// Exact despreader EXIT value at `m_a`: the mean of `c·L^e(c)` for one
/// output chip, averaged over random chip, mapper and spreading vector.
pub fn exit_ffdes_exact(m_a: f64, s: u32, l: usize, samples: usize, seed: u64) -> Result<Estimate> {
    check(s, l, samples)?;
    let prior = GaussianPrior::new(m_a)?;
    let field = FieldSpec::new(s)?;
    let su = s as usize;
    let size = field.size() as u16;
    Ok(mc::estimate(samples, seed, |rng| {
        let mapper = BitMapper::random_with(s, rng);
        let sv = SpreadingVector::random(&field, l, rng);
        let beta = rng.random_range(0..size);
        let mut chips = vec![0i8; su * l];
        for (&si, group) in sv.elements().iter().zip(chips.chunks_exact_mut(su)) {
            mapper.demap(field.mul(beta, si), group);
        }
        let priors: Vec<f64> = chips
            .iter()
            .map(|&c| f64::from(c) * prior.sample(rng))
            .collect();
        let mut out = vec![0.0; su * l];
        Despreader::with_clamp(&field, &mapper, &sv, f64::INFINITY).extrinsic(&priors, &mut out);
        let chip = rng.random_range(0..su * l);
        f64::from(chips[chip]) * out[chip]
    }))
}

/// `φ(m_a)`: the approximation built from random correlation patterns.
///
/// Each sample draws `L − 1` Gaussian vectors `ħ_i` with `N(m_a, 2m_a)`
/// entries, `2^{s−1}` rows of patterns uniform on `Ω⁻` (binary vectors except
/// all-ones) and `2^{s−1} − 1` rows uniform on `Ω⁺` (except all-zeros), and
/// evaluates
/// `s(L−1)m_a − log Σ_j e^{Σ_i r_{j,i}·ħ_i} + log(1 + Σ_j e^{−Σ_i r'_{j,i}·ħ_i})`.
pub fn exit_ffdes_approx(m_a: f64, s: u32, l: usize, samples: usize, seed: u64) -> Result<Estimate> {
    check(s, l, samples)?;
    let prior = GaussianPrior::new(m_a)?;
    let su = s as usize;
    let size = 1usize << s;
    let rows_minus = size / 2;
    let rows_plus = size / 2 - 1;
    let cols = l - 1;
    let linear = (su * cols) as f64 * m_a;
    if s == 1 {
        // Ω⁻ = {0}, Ω⁺ rows are absent: both log terms vanish.
        return Ok(Estimate::exact(linear));
    }
    Ok(mc::estimate(samples, seed, |rng| {
        // subset[i][p] = r·ħ_i for the pattern p.
        let mut subset = vec![0.0; cols * size];
        let mut h = vec![0.0; su];
        for table in subset.chunks_exact_mut(size) {
            for v in h.iter_mut() {
                *v = prior.sample(rng);
            }
            for p in 1..size {
                let low = p.trailing_zeros() as usize;
                table[p] = table[p & (p - 1)] + h[low];
            }
        }
        let minus: Vec<f64> = (0..rows_minus)
            .map(|_| {
                subset
                    .chunks_exact(size)
                    .map(|t| t[rng.random_range(0..size - 1)])
                    .sum()
            })
            .collect();
        let plus: Vec<f64> = std::iter::once(0.0)
            .chain((0..rows_plus).map(|_| {
                -subset
                    .chunks_exact(size)
                    .map(|t| t[rng.random_range(1..size)])
                    .sum::<f64>()
            }))
            .collect();
        linear - log_sum_exp(minus.iter().copied()) + log_sum_exp(plus.iter().copied())
    }))
}

/// ESE EXIT value: mean of `4 / (2·Σ_{i<K} (1 − tanh²(ħ_i)) + L/(Eb/N0))` with
/// `ħ_i ~ N(m_a/2, m_a/2)`. `eb_n0` is linear.
pub fn exit_ese(m_a: f64, eb_n0: f64, users: usize, l: usize, samples: usize, seed: u64) -> Result<Estimate> {
    if users == 0 || l == 0 || samples == 0 || !(eb_n0 > 0.0) {
        return Err(Error::InvalidParameter(
            "ESE EXIT needs K >= 1, L >= 1, samples >= 1 and Eb/N0 > 0".into(),
        ));
    }
    // ħ = (c·L)/2 with c·L ~ N(m_a, 2m_a).
    let prior = GaussianPrior::new(m_a)?;
    let noise = l as f64 / eb_n0;
    if users == 1 {
        return Ok(Estimate::exact(4.0 / noise));
    }
    Ok(mc::estimate(samples, seed, |rng| {
        let interference: f64 = (1..users)
            .map(|_| {
                let t = (prior.sample(rng) / 2.0).tanh();
                1.0 - t * t
            })
            .sum();
        4.0 / (2.0 * interference + noise)
    }))
}

/// Sampled EXIT curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitCurve {
    pub grid: Vec<f64>,
    pub points: Vec<Estimate>,
}

impl ExitCurve {
    /// Evaluates `f(m_a, point_seed)` on a strictly increasing grid. Point
    /// `i` uses seed `derive(seed, [i])`.
    pub fn sample<F>(grid: &[f64], seed: u64, f: F) -> Result<Self>
    where
        F: Fn(f64, u64) -> Result<Estimate>,
    {
        if grid.is_empty() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "EXIT grid must be non-empty and strictly increasing".into(),
            ));
        }
        let points = grid
            .iter()
            .enumerate()
            .map(|(i, &m)| f(m, seed::derive(seed, &[i as u64])))
            .collect::<Result<_>>()?;
        Ok(Self {
            grid: grid.to_vec(),
            points,
        })
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(|e| e.mean).collect()
    }

    /// Piecewise-linear interpolation, extrapolating the end segments.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let y = self.means();
        if g.len() == 1 {
            return y[0];
        }
        let i = match g.iter().position(|&v| v > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => g.len() - 2,
        };
        let t = (x - g[i]) / (g[i + 1] - g[i]);
        y[i] + t * (y[i + 1] - y[i])
    }
}

pub fn des_exact_curve(grid: &[f64], s: u32, l: usize, samples: usize, seed: u64) -> Result<ExitCurve> {
    ExitCurve::sample(grid, seed, |m, sd| exit_ffdes_exact(m, s, l, samples, sd))
}

pub fn des_approx_curve(grid: &[f64], s: u32, l: usize, samples: usize, seed: u64) -> Result<ExitCurve> {
    ExitCurve::sample(grid, seed, |m, sd| exit_ffdes_approx(m, s, l, samples, sd))
}

pub fn ese_curve(grid: &[f64], eb_n0: f64, users: usize, l: usize, samples: usize, seed: u64) -> Result<ExitCurve> {
    ExitCurve::sample(grid, seed, |m, sd| exit_ese(m, eb_n0, users, l, samples, sd))
}

/// Outcome of iterating the ESE and despreader curves from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TunnelResult {
    pub converges: bool,
    /// Fixed point of the despreader output mean, when stuck.
    pub stuck_at: Option<f64>,
    /// Despreader output mean after each iteration.
    pub trajectory: Vec<f64>,
}

/// Iterates `m_chip = φ_ESE(m_info)`, `m_info = φ(m_chip)` from
/// `m_info = 0`. Converges when `m_info` passes the top of the grid; stuck
/// when the update stalls below it. `eb_n0` is linear; the despreader curve
/// is the approximation `φ`.
pub fn tunnel_check(
    s: u32,
    l: usize,
    users: usize,
    eb_n0: f64,
    grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<TunnelResult> {
    let ese = ese_curve(grid, eb_n0, users, l, samples, seed::derive(seed, &[0]))?;
    let des = des_approx_curve(grid, s, l, samples, seed::derive(seed, &[1]))?;
    Ok(iterate_tunnel(&ese, &des))
}

/// [`tunnel_check`] on precomputed curves.
pub fn iterate_tunnel(ese: &ExitCurve, des: &ExitCurve) -> TunnelResult {
    let m_stop = *ese.grid.last().expect("non-empty grid");
    let mut m_info = 0.0;
    let mut trajectory = Vec::new();
    for _ in 0..10_000 {
        let m_chip = ese.eval(m_info).max(0.0);
        let next = des.eval(m_chip).max(0.0);
        trajectory.push(next);
        if next > m_stop {
            return TunnelResult {
                converges: true,
                stuck_at: None,
                trajectory,
            };
        }
        if (next - m_info).abs() < 1e-9 {
            return TunnelResult {
                converges: false,
                stuck_at: Some(next),
                trajectory,
            };
        }
        m_info = next;
    }
    TunnelResult {
        converges: false,
        stuck_at: Some(m_info),
        trajectory,
    }
}

/// Smallest Eb/N0 (dB) on `db_grid` at which [`tunnel_check`] converges.
/// The despreader curve does not depend on Eb/N0 and is sampled once.
pub fn convergence_threshold_db(
    s: u32,
    l: usize,
    users: usize,
    grid: &[f64],
    samples: usize,
    seed: u64,
    db_grid: &[f64],
) -> Result<Option<f64>> {
    let des = des_approx_curve(grid, s, l, samples, seed::derive(seed, &[1]))?;
    for &db in db_grid {
        let eb_n0 = crate::channel::db_to_linear(db);
        let ese = ese_curve(grid, eb_n0, users, l, samples, seed::derive(seed, &[0]))?;
        if iterate_tunnel(&ese, &des).converges {
            return Ok(Some(db));
        }
    }
    Ok(None)
}

/// `m_a,m_e_exact,se_exact,m_e_approx,se_approx`
pub fn write_des_csv<W: std::io::Write>(exact: &ExitCurve, approx: &ExitCurve, mut w: W) -> std::io::Result<()> {
    writeln!(w, "m_a,m_e_exact,se_exact,m_e_approx,se_approx")?;
    for ((m, e), a) in exact.grid.iter().zip(&exact.points).zip(&approx.points) {
        writeln!(w, "{m},{},{},{},{}", e.mean, e.std_err, a.mean, a.std_err)?;
    }
    Ok(())
}

/// `m_a,m_e,se`
pub fn write_ese_csv<W: std::io::Write>(ese: &ExitCurve, mut w: W) -> std::io::Result<()> {
    writeln!(w, "m_a,m_e,se")?;
    for (m, e) in ese.grid.iter().zip(&ese.points) {
        writeln!(w, "{m},{},{}", e.mean, e.std_err)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn within(e: &Estimate, target: f64, sigmas: f64) -> bool {
        (e.mean - target).abs() <= sigmas * e.std_err + 1e-12
    }

    #[test]
    fn zero_prior_gives_zero() {
        for s in 1..=4 {
            let e = exit_ffdes_exact(0.0, s, 4, 2000, 1).unwrap();
            assert_eq!((e.mean, e.std_err), (0.0, 0.0));
            let a = exit_ffdes_approx(0.0, s, 4, 2000, 1).unwrap();
            assert!(a.mean.abs() < 1e-12 && a.std_err < 1e-12);
        }
    }

    #[test]
    fn binary_exit_is_linear() {
        for l in [2, 5, 8] {
            for m in [0.5, 3.0] {
                let e = exit_ffdes_exact(m, 1, l, 20_000, 3).unwrap();
                assert!(within(&e, (l - 1) as f64 * m, 3.0), "{e:?}");
                let a = exit_ffdes_approx(m, 1, l, 10, 3).unwrap();
                assert_eq!(a.mean, (l - 1) as f64 * m);
            }
        }
    }

    #[test]
    fn negative_mean_rejected() {
        assert!(exit_ffdes_exact(-1.0, 2, 4, 10, 0).is_err());
        assert!(exit_ese(1.0, 0.0, 2, 4, 10, 0).is_err());
        assert!(exit_ffdes_approx(1.0, 0, 4, 10, 0).is_err());
    }

    #[test]
    fn ese_single_user_is_constant() {
        for m in [0.0, 1.0, 50.0] {
            let e = exit_ese(m, 3.0, 1, 8, 100, 0).unwrap();
            assert_eq!(e.mean, 4.0 * 3.0 / 8.0);
        }
    }

    #[test]
    fn ese_bounded_and_saturates() {
        let bound = 4.0 * 10.0 / 8.0;
        for m in [0.0, 1.0, 5.0, 20.0, 100.0] {
            let e = exit_ese(m, 10.0, 8, 8, 20_000, 7).unwrap();
            assert!(e.mean <= bound);
        }
        let e = exit_ese(100.0, 10.0, 8, 8, 20_000, 7).unwrap();
        assert!((e.mean - 5.0).abs() <= 0.02 * 5.0);
    }

    #[test]
    fn ese_monotone() {
        let mut last = 0.0;
        for m in DEFAULT_GRID {
            let e = exit_ese(m, 4.0, 8, 8, 20_000, 2).unwrap();
            assert!(e.mean >= last - 3.0 * e.std_err);
            last = e.mean;
        }
        let lo = exit_ese(2.0, 2.0, 8, 8, 20_000, 2).unwrap();
        let hi = exit_ese(2.0, 4.0, 8, 8, 20_000, 2).unwrap();
        assert!(hi.mean > lo.mean);
    }

    #[test]
    fn approx_is_upper_bound_and_monotone() {
        for (s, l) in [(2, 4), (3, 4)] {
            let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
            let exact = des_exact_curve(&grid, s, l, 20_000, 5).unwrap();
            let approx = des_approx_curve(&grid, s, l, 20_000, 6).unwrap();
            for (e, a) in exact.points.iter().zip(&approx.points) {
                let sigma = (e.std_err.powi(2) + a.std_err.powi(2)).sqrt();
                assert!(a.mean >= e.mean - 3.0 * sigma, "{a:?} < {e:?}");
            }
            for w in exact.points.windows(2).chain(approx.points.windows(2)) {
                let sigma = (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
                assert!(w[1].mean >= w[0].mean - 3.0 * sigma);
            }
        }
    }

    #[test]
    fn curve_interpolation() {
        let c = ExitCurve {
            grid: vec![0.0, 1.0, 3.0],
            points: [0.0, 2.0, 4.0].iter().map(|&v| Estimate::exact(v)).collect(),
        };
        assert_eq!(c.eval(0.5), 1.0);
        assert_eq!(c.eval(2.0), 3.0);
        assert_eq!(c.eval(5.0), 6.0);
        assert!(ExitCurve::sample(&[1.0, 1.0], 0, |_, _| Ok(Estimate::exact(0.0))).is_err());
    }

    #[test]
    fn tunnel_examples() {
        let grid = DEFAULT_GRID;
        let r = tunnel_check(1, 2, 1, 100.0, &grid, 1000, 1).unwrap();
        assert!(r.converges);
        let r = tunnel_check(2, 1, 4, 1000.0, &grid, 1000, 1).unwrap();
        assert!(!r.converges);
        assert_eq!(r.stuck_at, Some(0.0));
    }

    #[test]
    fn threshold_decreases_with_spreading_length() {
        let db: Vec<f64> = (0..=80).map(|i| i as f64 * 0.25).collect();
        let t8 = convergence_threshold_db(2, 8, 8, &DEFAULT_GRID, 20_000, 3, &db).unwrap();
        let t16 = convergence_threshold_db(2, 16, 8, &DEFAULT_GRID, 20_000, 3, &db).unwrap();
        let (t8, t16) = (t8.expect("L=8 converges"), t16.expect("L=16 converges"));
        assert!(t16 < t8, "L=16 threshold {t16} dB, L=8 threshold {t8} dB");
    }

    #[test]
    fn csv_layout() {
        let grid = [0.0, 1.0];
        let e = des_exact_curve(&grid, 1, 2, 100, 0).unwrap();
        let a = des_approx_curve(&grid, 1, 2, 100, 0).unwrap();
        let mut buf = Vec::new();
        write_des_csv(&e, &a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("m_a,m_e_exact,se_exact,m_e_approx,se_approx"));
        assert_eq!(text.lines().count(), 3);
    }
}
