//! Iterative multi-user decoding.
//!
//! One iteration is a flooding pass over the factor graph:
//!
//! 1. the elementary signal estimator (ESE) turns the received sample and the
//!    other users' chip priors into an extrinsic chip LLR for every user;
//! 2. each user's ESE outputs are deinterleaved;
//! 3. the finite-field despreader (FF-DES) runs MAP decoding on every spread
//!    symbol group and returns extrinsic chip LLRs;
//! 4. those are re-interleaved and become the next ESE priors.
//!
//! Symbol LLR vectors are indexed by field element and referenced to element
//! 0, so entry 0 is always exactly zero. Chip LLRs are clamped to
//! `±LLR_MAX` after every node update.

use crate::channel::ChannelParams;
use crate::codec::{SpreadingVector, UserCodeSpec};
use crate::error::{Error, Result};
use crate::gf::{BitMapper, Element, FieldSpec};

/// Magnitude limit for chip and bit LLRs.
pub const LLR_MAX: f64 = 50.0;

fn clamp_llr(x: f64, limit: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-limit, limit)
    }
}

/// Log-likelihood ratios of a GF(2^s) symbol against element 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolLlrVec(Vec<f64>);

impl SymbolLlrVec {
    pub fn zeros(size: usize) -> Self {
        Self(vec![0.0; size])
    }

    /// Wraps raw values; entry 0 must be zero.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::InvalidParameter(
                "symbol LLR vector must have entry 0 equal to 0".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, lambda: Element) -> f64 {
        self.0[lambda as usize]
    }
}

/// ESE extrinsic LLR of one user's chip given the received sample and the
/// chip priors of the other users.
pub fn ese_extrinsic(y: f64, other_priors: &[f64], params: &ChannelParams) -> f64 {
    let (mean, var) = other_priors.iter().fold((0.0, 0.0), |(m, v), &l| {
        let t = (l / 2.0).tanh();
        (m + t, v + (1.0 - t * t))
    });
    ese_from_moments(y, mean, var, params.amplitude(), params.noise_variance())
}

#[inline]
fn ese_from_moments(y: f64, mean: f64, var: f64, amp: f64, noise_var: f64) -> f64 {
    let num = 2.0 * amp * (y - amp * mean);
    let den = amp * amp * var.max(0.0) + noise_var;
    if den > 0.0 {
        clamp_llr(num / den, LLR_MAX)
    } else if num > 0.0 {
        LLR_MAX
    } else if num < 0.0 {
        -LLR_MAX
    } else {
        0.0
    }
}

/// Combines `s` chip LLRs into a symbol LLR vector.
pub fn chip_to_symbol_llr(chip_llrs: &[f64], mapper: &BitMapper) -> SymbolLlrVec {
    let s = mapper.degree() as usize;
    assert_eq!(chip_llrs.len(), s, "expected {s} chip LLRs");
    let size = 1usize << s;
    let values = (0..size as Element)
        .map(|lambda| {
            (0..s)
                .map(|m| {
                    let d = mapper.demap_bit(lambda, m) - mapper.demap_bit(0, m);
                    f64::from(d / 2) * chip_llrs[m]
                })
                .sum()
        })
        .collect();
    SymbolLlrVec(values)
}

/// Extrinsic symbol LLRs for group `excluded` (0-based) from the other
/// groups' symbol LLRs.
pub fn variable_extrinsic(
    field: &FieldSpec,
    symbol_llrs: &[SymbolLlrVec],
    sv: &SpreadingVector,
    excluded: usize,
) -> Result<SymbolLlrVec> {
    if symbol_llrs.len() != sv.len() {
        return Err(Error::LengthMismatch {
            what: "symbol LLR vectors",
            expected: sv.len(),
            actual: symbol_llrs.len(),
        });
    }
    if excluded >= sv.len() {
        return Err(Error::InvalidParameter(format!(
            "group index {excluded} out of range for L = {}",
            sv.len()
        )));
    }
    let s = sv.elements();
    let scale = field.inv(s[excluded])?;
    let values = (0..field.size() as Element)
        .map(|lambda| {
            let beta = field.mul(lambda, scale);
            symbol_llrs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != excluded)
                .map(|(i, v)| v.get(field.mul(beta, s[i])))
                .sum()
        })
        .collect();
    Ok(SymbolLlrVec(values))
}

/// `log Σ_{λ: Γ⁻¹_n(λ)=+1} e^{L_λ} − log Σ_{λ: Γ⁻¹_n(λ)=−1} e^{L_λ}` for
/// every bit `n`, clamped to `±LLR_MAX`.
pub fn symbol_to_chip_llr(symbol_llrs: &SymbolLlrVec, mapper: &BitMapper) -> Vec<f64> {
    let s = mapper.degree() as usize;
    (0..s)
        .map(|n| {
            let (plus, minus): (Vec<_>, Vec<_>) = symbol_llrs
                .values()
                .iter()
                .enumerate()
                .partition(|&(lambda, _)| mapper.demap_bit(lambda as Element, n) > 0);
            let lse = |side: Vec<(usize, &f64)>| log_sum_exp(side.iter().map(|&(_, &v)| v));
            clamp_llr(lse(plus) - lse(minus), LLR_MAX)
        })
        .collect()
}

/// Numerically stable `log Σ e^{x}`.
pub fn log_sum_exp<I: IntoIterator<Item = f64> + Clone>(xs: I) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Information-bit decisions for one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolDecision {
    /// Bit decisions, ±1; ties resolve to +1.
    pub bits: Vec<i8>,
    pub bit_llrs: Vec<f64>,
    /// Argmax of the total symbol LLR vector.
    pub symbol: Element,
}

/// Despreader for one user's spreading vector and mapper, with scratch
/// buffers for repeated use.
///
/// Internally symbol LLRs are moved into the `β` domain: group `i`
/// contributes `L^a_{β·s_i}(γ_i)` to hypothesis `β`. Prefix and suffix sums
/// over groups then give every group's extrinsic vector without ever
/// touching that group's own input.
#[derive(Debug, Clone)]
pub struct Despreader {
    s: usize,
    l: usize,
    size: usize,
    /// `products[i·size + β] = β·s_i`
    products: Vec<Element>,
    /// `patterns[λ] = Γ⁻¹(λ)` as a bit pattern.
    patterns: Vec<u16>,
    clamp: f64,
    subset: Vec<f64>,
    beta_llrs: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    weights: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl Despreader {
    /// A despreader clamping outputs to `±LLR_MAX`.
    pub fn new(field: &FieldSpec, mapper: &BitMapper, sv: &SpreadingVector) -> Self {
        Self::with_clamp(field, mapper, sv, LLR_MAX)
    }

    /// `clamp = f64::INFINITY` disables clamping (used by EXIT analysis,
    /// where LLR means far beyond `LLR_MAX` are measured).
    pub fn with_clamp(field: &FieldSpec, mapper: &BitMapper, sv: &SpreadingVector, clamp: f64) -> Self {
        assert_eq!(field.degree(), mapper.degree(), "field/mapper degree mismatch");
        let s = field.degree() as usize;
        let size = field.size();
        let l = sv.len();
        let mut products = Vec::with_capacity(l * size);
        for &si in sv.elements() {
            products.extend((0..size as Element).map(|b| field.mul(b, si)));
        }
        let patterns = (0..size as Element).map(|e| mapper.pattern(e)).collect();
        Self {
            s,
            l,
            size,
            products,
            patterns,
            clamp,
            subset: vec![0.0; size],
            beta_llrs: vec![0.0; l * size],
            prefix: vec![0.0; (l + 1) * size],
            suffix: vec![0.0; (l + 1) * size],
            weights: vec![0.0; size],
            plus: vec![0.0; s],
            minus: vec![0.0; s],
        }
    }

    pub fn degree(&self) -> usize {
        self.s
    }

    pub fn spreading_len(&self) -> usize {
        self.l
    }

    /// Chip LLRs per spread symbol, `sL`.
    pub fn block_len(&self) -> usize {
        self.s * self.l
    }

    /// Fills `beta_llrs` from `sL` chip priors.
    fn load(&mut self, priors: &[f64]) {
        let (s, size) = (self.s, self.size);
        let zero_pattern = self.patterns[0] as usize;
        for i in 0..self.l {
            let chips = &priors[i * s..(i + 1) * s];
            // subset[p] = Σ_{m: bit m of p set} L(c_m), chip 0 being the MSB.
            self.subset[0] = 0.0;
            for p in 1..size {
                let low = p.trailing_zeros() as usize;
                self.subset[p] = self.subset[p & (p - 1)] + chips[s - 1 - low];
            }
            let base = self.subset[zero_pattern];
            let prods = &self.products[i * size..(i + 1) * size];
            let out = &mut self.beta_llrs[i * size..(i + 1) * size];
            for (o, &g) in out.iter_mut().zip(prods) {
                *o = self.subset[self.patterns[g as usize] as usize] - base;
            }
        }
    }

    fn accumulate(&mut self) {
        let (l, size) = (self.l, self.size);
        self.prefix[..size].fill(0.0);
        for i in 0..l {
            let (done, rest) = self.prefix.split_at_mut((i + 1) * size);
            let prev = &done[i * size..];
            let src = &self.beta_llrs[i * size..(i + 1) * size];
            for ((o, &p), &v) in rest[..size].iter_mut().zip(prev).zip(src) {
                *o = p + v;
            }
        }
        self.suffix[l * size..].fill(0.0);
        for i in (0..l).rev() {
            let (head, tail) = self.suffix.split_at_mut((i + 1) * size);
            let next = &tail[..size];
            let src = &self.beta_llrs[i * size..(i + 1) * size];
            for ((o, &n), &v) in head[i * size..].iter_mut().zip(next).zip(src) {
                *o = n + v;
            }
        }
    }

    /// Bit LLRs of `Σ` over weights `w[β]` grouped by the pattern bits of
    /// `key(β)`; writes `s` values into `out`.
    fn marginalize<F: Fn(usize) -> u16>(
        llrs: &[f64],
        key: F,
        s: usize,
        clamp: f64,
        weights: &mut [f64],
        plus: &mut [f64],
        minus: &mut [f64],
        out: &mut [f64],
    ) {
        let max = llrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (w, &v) in weights.iter_mut().zip(llrs) {
            *w = (v - max).exp();
        }
        plus.fill(0.0);
        minus.fill(0.0);
        for (beta, &w) in weights.iter().enumerate() {
            let pat = key(beta);
            for n in 0..s {
                if pat >> (s - 1 - n) & 1 == 1 {
                    plus[n] += w;
                } else {
                    minus[n] += w;
                }
            }
        }
        for n in 0..s {
            let (p, m) = (plus[n], minus[n]);
            out[n] = if p > 1e-290 && m > 1e-290 {
                p.ln() - m.ln()
            } else {
                // One side is negligible against the global max; redo it
                // with per-side maxima.
                let side = |want: u16| {
                    log_sum_exp(
                        llrs.iter()
                            .enumerate()
                            .filter(|&(b, _)| key(b) >> (s - 1 - n) & 1 == want)
                            .map(|(_, &v)| v),
                    )
                };
                side(1) - side(0)
            };
            out[n] = clamp_llr(out[n], clamp);
        }
    }

    /// Extrinsic chip LLRs for all `sL` chips of one spread symbol. Output
    /// chip `(ℓ, n)` never depends on the priors of group `ℓ`.
    pub fn extrinsic(&mut self, priors: &[f64], out: &mut [f64]) {
        assert_eq!(priors.len(), self.block_len());
        assert_eq!(out.len(), self.block_len());
        self.load(priors);
        self.accumulate();
        let (s, size) = (self.s, self.size);
        let mut ext = std::mem::take(&mut self.subset);
        for ell in 0..self.l {
            for (e, (p, q)) in ext.iter_mut().zip(
                self.prefix[ell * size..(ell + 1) * size]
                    .iter()
                    .zip(&self.suffix[(ell + 1) * size..(ell + 2) * size]),
            ) {
                *e = p + q;
            }
            let prods = &self.products[ell * size..(ell + 1) * size];
            let patterns = &self.patterns;
            Self::marginalize(
                &ext,
                |beta| patterns[prods[beta] as usize],
                s,
                self.clamp,
                &mut self.weights,
                &mut self.plus,
                &mut self.minus,
                &mut out[ell * s..(ell + 1) * s],
            );
        }
        self.subset = ext;
    }

    /// Total a-posteriori decisions from all `L` groups of chip priors.
    pub fn decide(&mut self, priors: &[f64], bit_llrs: &mut [f64]) -> Element {
        assert_eq!(priors.len(), self.block_len());
        assert_eq!(bit_llrs.len(), self.s);
        self.load(priors);
        self.accumulate();
        let size = self.size;
        let total = &self.prefix[self.l * size..(self.l + 1) * size];
        let patterns = &self.patterns;
        Self::marginalize(
            total,
            |beta| patterns[beta],
            self.s,
            self.clamp,
            &mut self.weights,
            &mut self.plus,
            &mut self.minus,
            bit_llrs,
        );
        argmax(total)
    }
}

fn argmax(v: &[f64]) -> Element {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best as Element
}

fn decide_sign(llr: f64) -> i8 {
    if llr >= 0.0 {
        1
    } else {
        -1
    }
}

/// FF-DES on one spread symbol: `sL` chip priors in, `sL` extrinsic chip
/// LLRs out.
pub fn ffdes_block(
    field: &FieldSpec,
    mapper: &BitMapper,
    sv: &SpreadingVector,
    priors: &[f64],
) -> Result<Vec<f64>> {
    let expected = mapper.degree() as usize * sv.len();
    if priors.len() != expected {
        return Err(Error::LengthMismatch {
            what: "FF-DES priors",
            expected,
            actual: priors.len(),
        });
    }
    let mut out = vec![0.0; expected];
    Despreader::new(field, mapper, sv).extrinsic(priors, &mut out);
    Ok(out)
}

/// Total symbol LLRs `L_λ(β) = Σ_i L^a_{λ·s_i}(γ_i)` and the resulting bit
/// decisions.
pub fn total_llr_and_decide(
    field: &FieldSpec,
    symbol_llrs: &[SymbolLlrVec],
    sv: &SpreadingVector,
    mapper: &BitMapper,
) -> Result<SymbolDecision> {
    if symbol_llrs.len() != sv.len() {
        return Err(Error::LengthMismatch {
            what: "symbol LLR vectors",
            expected: sv.len(),
            actual: symbol_llrs.len(),
        });
    }
    let total: Vec<f64> = (0..field.size() as Element)
        .map(|lambda| {
            symbol_llrs
                .iter()
                .zip(sv.elements())
                .map(|(v, &si)| v.get(field.mul(lambda, si)))
                .sum()
        })
        .collect();
    let bit_llrs = symbol_to_chip_llr(&SymbolLlrVec(total.clone()), mapper);
    Ok(SymbolDecision {
        bits: bit_llrs.iter().map(|&l| decide_sign(l)).collect(),
        bit_llrs,
        symbol: argmax(&total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub iterations: usize,
    /// Decide on the argmax symbol instead of per-bit LLR signs.
    pub symbol_decision: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            symbol_decision: false,
        }
    }
}

/// Per-iteration, per-user statistics of the FF-DES extrinsic chip LLRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub user: usize,
    pub mean_abs_extrinsic: f64,
    /// Mean of `c·L^e(c)`; present when reference chips were supplied.
    pub mean_extrinsic: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// Per user, `sN` decisions in ±1.
    pub bits: Vec<Vec<i8>>,
    /// Per user, `sN` information-bit LLRs (clamped). With symbol decisions
    /// these are still the bitwise LLRs.
    pub bit_llrs: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
}

/// Working arrays of one frame. Every array is `sNL` long per user.
#[derive(Debug, Clone)]
pub struct FrameState {
    /// ESE priors `L^a(x)` in transmit order.
    pub prior_x: Vec<Vec<f64>>,
    /// ESE outputs `L^e(x)` in transmit order.
    pub ext_x: Vec<Vec<f64>>,
    /// Deinterleaved ESE outputs `L^a(c)`.
    pub prior_c: Vec<Vec<f64>>,
    /// FF-DES outputs `L^e(c)`.
    pub ext_c: Vec<Vec<f64>>,
}

impl FrameState {
    pub fn new(users: usize, len: usize) -> Self {
        let z = || vec![vec![0.0; len]; users];
        Self {
            prior_x: z(),
            ext_x: z(),
            prior_c: z(),
            ext_c: z(),
        }
    }
}

fn check_dims(y: &[f64], specs: &[UserCodeSpec], params: &ChannelParams) -> Result<usize> {
    if specs.len() != params.users() {
        return Err(Error::LengthMismatch {
            what: "user specs",
            expected: params.users(),
            actual: specs.len(),
        });
    }
    let len = y.len();
    for spec in specs {
        if spec.chip_len() != len {
            return Err(Error::LengthMismatch {
                what: "received vector",
                expected: spec.chip_len(),
                actual: len,
            });
        }
        if spec.spreading_len() != params.spreading() {
            return Err(Error::LengthMismatch {
                what: "spreading length",
                expected: params.spreading(),
                actual: spec.spreading_len(),
            });
        }
    }
    Ok(len)
}

/// Runs the iterative decoder on one received frame.
pub fn decode_frame(
    field: &FieldSpec,
    y: &[f64],
    specs: &[UserCodeSpec],
    params: &ChannelParams,
    opts: DecodeOptions,
) -> Result<DecodeOutput> {
    decode_frame_traced(field, y, specs, params, opts, None)
}

/// [`decode_frame`] that also records `mean c·L^e(c)` against the true
/// pre-interleaver chips `reference[k]`.
pub fn decode_frame_traced(
    field: &FieldSpec,
    y: &[f64],
    specs: &[UserCodeSpec],
    params: &ChannelParams,
    opts: DecodeOptions,
    reference: Option<&[Vec<i8>]>,
) -> Result<DecodeOutput> {
    let len = check_dims(y, specs, params)?;
    if let Some(r) = reference {
        if r.len() != specs.len() || r.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidParameter(
                "reference chips do not match frame dimensions".into(),
            ));
        }
    }
    let users = specs.len();
    let mut state = FrameState::new(users, len);
    let mut despreaders: Vec<Despreader> = specs
        .iter()
        .map(|spec| Despreader::new(field, &spec.mapper, &spec.spreading))
        .collect();
    let amp = params.amplitude();
    let noise_var = params.noise_variance();
    let mut tanh_buf = vec![vec![0.0; len]; users];
    let mut trace = Vec::new();

    for iteration in 0..opts.iterations {
        // ESE, all users from the same priors.
        for (t_k, p_k) in tanh_buf.iter_mut().zip(&state.prior_x) {
            for (t, &p) in t_k.iter_mut().zip(p_k) {
                *t = (p / 2.0).tanh();
            }
        }
        for t in 0..len {
            let (mut mean, mut var) = (0.0, 0.0);
            for t_k in &tanh_buf {
                let m = t_k[t];
                mean += m;
                var += 1.0 - m * m;
            }
            for (k, t_k) in tanh_buf.iter().enumerate() {
                let m = t_k[t];
                state.ext_x[k][t] =
                    ese_from_moments(y[t], mean - m, var - (1.0 - m * m), amp, noise_var);
            }
        }
        for k in 0..users {
            let spec = &specs[k];
            spec.interleaver.inverse_into(&state.ext_x[k], &mut state.prior_c[k]);
            let block = despreaders[k].block_len();
            for (pri, ext) in state.prior_c[k]
                .chunks_exact(block)
                .zip(state.ext_c[k].chunks_exact_mut(block))
            {
                despreaders[k].extrinsic(pri, ext);
            }
            spec.interleaver.forward_into(&state.ext_c[k], &mut state.prior_x[k]);

            let ext = &state.ext_c[k];
            let mean_abs = ext.iter().map(|v| v.abs()).sum::<f64>() / len as f64;
            let mean_extrinsic = reference.map(|r| {
                ext.iter().zip(&r[k]).map(|(&v, &c)| f64::from(c) * v).sum::<f64>() / len as f64
            });
            trace.push(TraceRow {
                iteration: iteration + 1,
                user: k,
                mean_abs_extrinsic: mean_abs,
                mean_extrinsic,
            });
        }
    }

    let mut bits = Vec::with_capacity(users);
    let mut bit_llrs = Vec::with_capacity(users);
    for (k, spec) in specs.iter().enumerate() {
        let s = spec.degree();
        let block = despreaders[k].block_len();
        let mut u_bits = Vec::with_capacity(spec.info_len());
        let mut u_llrs = vec![0.0; spec.info_len()];
        for (pri, llr) in state.prior_c[k]
            .chunks_exact(block)
            .zip(u_llrs.chunks_exact_mut(s))
        {
            let symbol = despreaders[k].decide(pri, llr);
            if opts.symbol_decision {
                let pat = spec.mapper.pattern(symbol);
                u_bits.extend((0..s).map(|n| if pat >> (s - 1 - n) & 1 == 1 { 1 } else { -1 }));
            } else {
                u_bits.extend(llr.iter().map(|&l| decide_sign(l)));
            }
        }
        bits.push(u_bits);
        bit_llrs.push(u_llrs);
    }
    Ok(DecodeOutput {
        bits,
        bit_llrs,
        trace,
    })
}

/// Writes a decoder trace as CSV.
pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,user,mean_abs_extrinsic_llr,mean_extrinsic_llr")?;
    for row in trace {
        match row.mean_extrinsic {
            Some(m) => writeln!(w, "{},{},{},{}", row.iteration, row.user, row.mean_abs_extrinsic, m)?,
            None => writeln!(w, "{},{},{},", row.iteration, row.user, row.mean_abs_extrinsic)?,
        }
    }
    Ok(())
}
