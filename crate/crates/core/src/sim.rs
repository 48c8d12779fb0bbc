//! Experiment orchestration: BER sweeps, slope fitting and EXIT charts.
//!
//! A sweep is reproducible bit-for-bit: frame `f` at Eb/N0 index `e` draws
//! its codes, data and noise from `seed::derive(seed, [e, f])`, and the stop
//! rule is applied by scanning frame results in index order. Frames past the
//! stopping frame may be simulated by idle workers but are discarded, so the
//! worker count only changes wall time.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::analysis::{self, ExitCurve};
use crate::channel::{self, ChannelParams};
use crate::codec::{encode_chips, Interleaver, SpreadingVector, UserCodeSpec};
use crate::decoder::{decode_frame, DecodeOptions};
use crate::error::{Error, Result};
use crate::gf::{BitMapper, FieldSpec};
use crate::seed;

/// BER window used for slope fits.
pub const SLOPE_WINDOW: (f64, f64) = (1e-4, 1e-2);

/// Upper bound on decoder working memory per frame, in bytes.
const FRAME_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapperMode {
    Natural,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpreadingMode {
    Random,
    Ones,
}

impl FromStr for MapperMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(Self::Natural),
            "random" => Ok(Self::Random),
            _ => Err(Error::Config(format!("mapper must be natural or random, got {s:?}"))),
        }
    }
}

impl FromStr for SpreadingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "ones" | "all-ones" => Ok(Self::Ones),
            _ => Err(Error::Config(format!("sv must be random or ones, got {s:?}"))),
        }
    }
}

impl fmt::Display for MapperMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Natural => "natural",
            Self::Random => "random",
        })
    }
}

impl fmt::Display for SpreadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Random => "random",
            Self::Ones => "ones",
        })
    }
}

/// Parameters of a BER sweep.
///
/// The config file format is one `key = value` per line, `#` starts a
/// comment. Keys: `K`, `s`, `L`, `N`, `eb_n0` (comma-separated dB values),
/// `iterations`, `seed`, `workers` (0 = all cores), `min_errors`,
/// `max_frames`, `mapper` (`natural` | `random`), `sv` (`random` | `ones`),
/// `output` (directory).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub users: usize,
    pub s: u32,
    pub spreading: usize,
    pub symbols: usize,
    pub eb_n0_db: Vec<f64>,
    pub iterations: usize,
    pub seed: u64,
    pub workers: usize,
    pub min_errors: u64,
    pub max_frames: u64,
    pub mapper: MapperMode,
    pub sv: SpreadingMode,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            users: 1,
            s: 1,
            spreading: 1,
            symbols: 1000,
            eb_n0_db: Vec::new(),
            iterations: 50,
            seed: 0,
            workers: 0,
            min_errors: 100,
            max_frames: 20_000,
            mapper: MapperMode::Random,
            sv: SpreadingMode::Random,
            output: PathBuf::from("."),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
}

/// Parses a comma-separated list of floats.
pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "K" => self.users = parse_value(key, value)?,
            "s" => self.s = parse_value(key, value)?,
            "L" => self.spreading = parse_value(key, value)?,
            "N" => self.symbols = parse_value(key, value)?,
            "eb_n0" => self.eb_n0_db = parse_list(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "workers" => self.workers = parse_value(key, value)?,
            "min_errors" => self.min_errors = parse_value(key, value)?,
            "max_frames" => self.max_frames = parse_value(key, value)?,
            "mapper" => self.mapper = value.parse()?,
            "sv" => self.sv = value.parse()?,
            "output" => self.output = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a config file body on top of `self`.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.merge_str(&text)?;
        Ok(cfg)
    }

    /// Checks every invariant; all failures are [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.users == 0 || self.spreading == 0 || self.symbols == 0 {
            return bad("K, L and N must be positive".into());
        }
        if self.s == 0 || self.s > crate::gf::MAX_DEGREE {
            return bad(format!("s must be in 1..=12, got {}", self.s));
        }
        if self.iterations == 0 || self.min_errors == 0 || self.max_frames == 0 {
            return bad("iterations, min_errors and max_frames must be positive".into());
        }
        if self.eb_n0_db.is_empty() {
            return bad("eb_n0 list is empty".into());
        }
        if let Some(v) = self.eb_n0_db.iter().find(|v| !v.is_finite()) {
            return bad(format!("eb_n0 value {v} is not finite"));
        }
        let chips = (self.s as usize)
            .checked_mul(self.symbols)
            .and_then(|v| v.checked_mul(self.spreading));
        let bytes = chips.and_then(|c| c.checked_mul(self.users * 4 * 8 + 8));
        match bytes {
            Some(b) if b <= FRAME_MEMORY_BUDGET && chips.unwrap() <= u32::MAX as usize => Ok(()),
            _ => bad("K·s·N·L exceeds the frame memory budget".into()),
        }
    }

    fn params(&self, eb_n0_db: f64) -> Result<ChannelParams> {
        ChannelParams::new(self.users, self.spreading, eb_n0_db)
    }

    /// Draws user `k`'s code for one frame.
    fn user_code<R: rand::Rng>(&self, field: &FieldSpec, rng: &mut R) -> Result<UserCodeSpec> {
        let mapper = match self.mapper {
            MapperMode::Natural => BitMapper::natural(self.s),
            MapperMode::Random => BitMapper::random_with(self.s, rng),
        };
        let sv = match self.sv {
            SpreadingMode::Ones => SpreadingVector::ones(self.spreading),
            SpreadingMode::Random => SpreadingVector::random(field, self.spreading, rng),
        };
        let len = self.s as usize * self.symbols * self.spreading;
        UserCodeSpec::new(mapper, sv, Interleaver::random_with(len, rng), self.symbols)
    }
}

/// One Eb/N0 point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub eb_n0_db: f64,
    pub frames: u64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    /// Seconds spent on this point. Not written to CSV.
    pub wall_time: f64,
}

/// Simulates one frame and returns its information-bit error count over
/// all users.
pub fn simulate_frame(
    cfg: &RunConfig,
    field: &FieldSpec,
    params: &ChannelParams,
    frame_seed: u64,
) -> Result<u64> {
    let users = cfg.users;
    let mut specs = Vec::with_capacity(users);
    let mut info = Vec::with_capacity(users);
    let mut tx = Vec::with_capacity(users);
    for k in 0..users as u64 {
        let spec = cfg.user_code(field, &mut seed::rng(frame_seed, &[0, k]))?;
        let mut rng = seed::rng(frame_seed, &[1, k]);
        let bits: Vec<i8> = (0..spec.info_len())
            .map(|_| if rand::Rng::random::<bool>(&mut rng) { 1 } else { -1 })
            .collect();
        let mut chips = vec![0i8; spec.chip_len()];
        encode_chips(field, &spec, &bits, &mut chips)?;
        let mut x = vec![0i8; chips.len()];
        spec.interleaver.forward_into(&chips, &mut x);
        specs.push(spec);
        info.push(bits);
        tx.push(x);
    }
    let y = channel::transmit(&tx, params, &mut seed::rng(frame_seed, &[2]))?;
    let opts = DecodeOptions {
        iterations: cfg.iterations,
        ..DecodeOptions::default()
    };
    let out = decode_frame(field, &y, &specs, params, opts)?;
    Ok(out
        .bits
        .iter()
        .zip(&info)
        .map(|(d, t)| d.iter().zip(t).filter(|(a, b)| a != b).count() as u64)
        .sum())
}

/// Runs the sweep on the current rayon pool.
pub fn run_ber_sweep(cfg: &RunConfig) -> Result<Vec<BerRecord>> {
    cfg.validate()?;
    let field = FieldSpec::new(cfg.s)?;
    let bits_per_frame = (cfg.users * cfg.s as usize * cfg.symbols) as u64;
    let mut records = Vec::with_capacity(cfg.eb_n0_db.len());
    for (e, &db) in cfg.eb_n0_db.iter().enumerate() {
        let start = Instant::now();
        let params = cfg.params(db)?;
        let (mut frames, mut errors) = (0u64, 0u64);
        let batch_size = rayon::current_num_threads().max(1);
        'point: while frames < cfg.max_frames {
            let batch = batch_size.min((cfg.max_frames - frames) as usize) as u64;
            let results: Vec<u64> = (frames..frames + batch)
                .into_par_iter()
                .map(|f| simulate_frame(cfg, &field, &params, seed::derive(cfg.seed, &[e as u64, f])))
                .collect::<Result<_>>()?;
            for r in results {
                frames += 1;
                errors += r;
                if errors >= cfg.min_errors {
                    break 'point;
                }
            }
        }
        let bits = frames * bits_per_frame;
        records.push(BerRecord {
            eb_n0_db: db,
            frames,
            bits,
            errors,
            ber: errors as f64 / bits as f64,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Runs `f` on a pool with `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `eb_n0_db,frames,bits,errors,ber`
pub fn write_ber_csv<W: std::io::Write>(records: &[BerRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "eb_n0_db,frames,bits,errors,ber")?;
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.eb_n0_db, r.frames, r.bits, r.errors, r.ber)?;
    }
    Ok(())
}

/// Reads `(eb_n0_db, ber)` pairs from a CSV with those two named columns.
pub fn read_ber_csv<R: std::io::Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_reader(r);
    let headers = reader.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("missing column {name}")))
    };
    let (x, y) = (col("eb_n0_db")?, col("ber")?);
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
            let field = |i: usize| -> Result<f64> { parse_value("csv", rec.get(i).unwrap_or("").trim()) };
            Ok((field(x)?, field(y)?))
        })
        .collect()
}

/// Least-squares slope magnitude of `ln BER` against linear Eb/N0 over the
/// points `(eb_n0_linear, ber)` whose BER lies in `window`.
pub fn fit_slope(points: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let used: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, p)| p > 0.0 && p >= window.0 && p <= window.1)
        .map(|&(x, p)| (x, p.ln()))
        .collect();
    if used.len() < 2 {
        return Err(Error::TooFewPoints(used.len()));
    }
    let n = used.len() as f64;
    let mx = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::TooFewPoints(1));
    }
    let sxy: f64 = used.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok((sxy / sxx).abs())
}

/// [`fit_slope`] on sweep records.
pub fn fit_records(records: &[BerRecord], window: (f64, f64)) -> Result<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (channel::db_to_linear(r.eb_n0_db), r.ber))
        .collect();
    fit_slope(&pts, window)
}

/// Despreader (exact and approximate) and ESE EXIT curves on one grid.
#[derive(Debug, Clone)]
pub struct ExitChart {
    pub exact: ExitCurve,
    pub approx: ExitCurve,
    pub ese: ExitCurve,
}

/// Samples all three curves on `grid`; `eb_n0_db` is in dB.
pub fn emit_exit_chart(
    s: u32,
    l: usize,
    users: usize,
    eb_n0_db: f64,
    grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<ExitChart> {
    let eb_n0 = channel::db_to_linear(eb_n0_db);
    Ok(ExitChart {
        exact: analysis::des_exact_curve(grid, s, l, samples, seed::derive(seed, &[0]))?,
        approx: analysis::des_approx_curve(grid, s, l, samples, seed::derive(seed, &[1]))?,
        ese: analysis::ese_curve(grid, eb_n0, users, l, samples, seed::derive(seed, &[2]))?,
    })
}

/// `m_a,m_e_exact,se_exact,m_e_approx,se_approx,m_e_ese,se_ese`
pub fn write_exit_chart_csv<W: std::io::Write>(chart: &ExitChart, mut w: W) -> std::io::Result<()> {
    writeln!(w, "m_a,m_e_exact,se_exact,m_e_approx,se_approx,m_e_ese,se_ese")?;
    let rows = chart
        .exact
        .points
        .iter()
        .zip(&chart.approx.points)
        .zip(&chart.ese.points);
    for (m, ((e, a), c)) in chart.exact.grid.iter().zip(rows) {
        writeln!(
            w,
            "{m},{},{},{},{},{},{}",
            e.mean, e.std_err, a.mean, a.std_err, c.mean, c.std_err
        )?;
    }
    Ok(())
}

/// `eb_n0_db,ber_estimate,ber_bound` for the standard-slope prediction.
pub fn write_prediction_csv<W: std::io::Write>(
    s: u32,
    l: usize,
    eb_n0_db: &[f64],
    mut w: W,
) -> Result<()> {
    writeln!(w, "eb_n0_db,ber_estimate,ber_bound")?;
    for &db in eb_n0_db {
        let p = crate::slope::predict_ber(s, l, channel::db_to_linear(db))?;
        writeln!(w, "{db},{},{}", p.estimate, p.bound)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slope::q_function;

    fn cfg(users: usize, s: u32, l: usize, n: usize, db: &[f64]) -> RunConfig {
        RunConfig {
            users,
            s,
            spreading: l,
            symbols: n,
            eb_n0_db: db.to_vec(),
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_parsing() {
        let mut c = RunConfig::default();
        c.merge_str("# sweep\nK = 8\ns=2\nL = 8\nN=6000\neb_n0 = 4, 5.5,7\nmapper = natural\nsv = ones # x\n")
            .unwrap();
        assert_eq!((c.users, c.s, c.spreading, c.symbols), (8, 2, 8, 6000));
        assert_eq!(c.eb_n0_db, vec![4.0, 5.5, 7.0]);
        assert_eq!((c.mapper, c.sv), (MapperMode::Natural, SpreadingMode::Ones));
        assert_eq!(c.iterations, 50);
        assert!(matches!(c.set("colour", "red"), Err(Error::Config(_))));
        assert!(matches!(c.set("K", "eight"), Err(Error::Config(_))));
        assert!(matches!(c.merge_str("K 8"), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 1, 1, 10, &[1.0]).validate().is_ok());
        for bad in [
            cfg(0, 1, 1, 10, &[1.0]),
            cfg(1, 0, 1, 10, &[1.0]),
            cfg(1, 13, 1, 10, &[1.0]),
            cfg(1, 1, 0, 10, &[1.0]),
            cfg(1, 1, 1, 0, &[1.0]),
            cfg(1, 1, 1, 10, &[]),
            cfg(1, 1, 1, 10, &[f64::NAN]),
            cfg(64, 12, 1 << 20, 1 << 20, &[1.0]),
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn noiseless_single_user_has_no_errors() {
        let mut c = cfg(1, 1, 1, 500, &[200.0]);
        c.max_frames = 5;
        let r = run_ber_sweep(&c).unwrap();
        assert_eq!((r[0].frames, r[0].errors, r[0].bits), (5, 0, 2500));
        assert_eq!(r[0].ber, 0.0);
    }

    #[test]
    fn stop_rule_and_accounting() {
        let mut c = cfg(2, 2, 2, 200, &[0.0, 3.0]);
        c.min_errors = 30;
        c.max_frames = 40;
        c.iterations = 5;
        for r in run_ber_sweep(&c).unwrap() {
            assert!(r.errors >= c.min_errors || r.frames == c.max_frames);
            assert_eq!(r.bits, r.frames * 2 * 2 * 200);
            assert_eq!(r.ber, r.errors as f64 / r.bits as f64);
        }
    }

    #[test]
    fn sweep_is_worker_independent() {
        let mut c = cfg(3, 2, 4, 100, &[2.0, 6.0]);
        c.min_errors = 20;
        c.max_frames = 30;
        c.iterations = 8;
        let a = with_workers(1, || run_ber_sweep(&c)).unwrap().unwrap();
        let b = with_workers(3, || run_ber_sweep(&c)).unwrap().unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_ber_csv(&a, &mut x).unwrap();
        write_ber_csv(&b, &mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn exact_line_fit() {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| {
            let x = 2.0 + i as f64;
            (x, (0.3 - 1.2 * x).exp())
        }).collect();
        let slope = fit_slope(&pts, (0.0, 1.0)).unwrap();
        assert!((slope - 1.2).abs() < 1e-12);
    }

    #[test]
    fn bpsk_fit() {
        let pts: Vec<(f64, f64)> = (0..=8)
            .map(|i| {
                let x = 6.0 + 0.5 * i as f64;
                (x, q_function((2.0 * x).sqrt()))
            })
            .collect();
        let slope = fit_slope(&pts, (0.0, 1.0)).unwrap();
        assert!((0.95..=1.15).contains(&slope), "{slope}");
    }

    #[test]
    fn fit_needs_two_points() {
        let pts = [(1.0, 1e-3), (2.0, 0.5), (3.0, 0.0)];
        assert_eq!(fit_slope(&pts, SLOPE_WINDOW), Err(Error::TooFewPoints(1)));
        assert_eq!(fit_slope(&[], SLOPE_WINDOW), Err(Error::TooFewPoints(0)));
    }

    #[test]
    fn ber_csv_round_trip() {
        let recs = vec![BerRecord {
            eb_n0_db: 4.5,
            frames: 3,
            bits: 300,
            errors: 3,
            ber: 0.01,
            wall_time: 1.0,
        }];
        let mut buf = Vec::new();
        write_ber_csv(&recs, &mut buf).unwrap();
        assert_eq!(read_ber_csv(&buf[..]).unwrap(), vec![(4.5, 0.01)]);
        assert!(read_ber_csv(&b"a,b\n1,2\n"[..]).is_err());
    }

    #[test]
    fn exit_chart_binary_rows() {
        let chart = emit_exit_chart(1, 4, 2, 3.0, &analysis::DEFAULT_GRID, 500, 9).unwrap();
        for (m, a) in chart.approx.grid.iter().zip(&chart.approx.points) {
            assert_eq!(a.mean, 3.0 * m);
        }
        let mut buf = Vec::new();
        write_exit_chart_csv(&chart, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }
}
