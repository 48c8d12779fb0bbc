//! Transmitter chain: bits → field symbols → spreading by field
//! multiplication → chips → chip-level interleaving.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gf::{BitMapper, Element, FieldSpec};

/// Per-user spreading vector of nonzero field elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpreadingVector(Vec<Element>);

impl SpreadingVector {
    pub fn new(field: &FieldSpec, elements: Vec<Element>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParameter(
                "spreading vector must be non-empty".into(),
            ));
        }
        for (index, &e) in elements.iter().enumerate() {
            if e == 0 {
                return Err(Error::ZeroSpreadingElement { index });
            }
            if !field.contains(e as u32) {
                return Err(Error::ElementOutOfRange {
                    element: e as u32,
                    degree: field.degree(),
                });
            }
        }
        Ok(Self(elements))
    }

    /// The repetition special case: every entry is 1.
    pub fn ones(len: usize) -> Self {
        assert!(len > 0, "spreading length must be positive");
        Self(vec![1; len])
    }

    /// Uniformly random nonzero entries.
    pub fn random<R: Rng + ?Sized>(field: &FieldSpec, len: usize, rng: &mut R) -> Self {
        assert!(len > 0, "spreading length must be positive");
        let size = field.size() as Element;
        Self((0..len).map(|_| rng.random_range(1..size)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.0
    }
}

/// Which way [`permute`] reorders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Chip order → transmit order.
    Forward,
    /// Transmit order → chip order.
    Inverse,
}

/// A chip-level interleaver. Transmit position `t` carries chip `perm[t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<u32>,
    inv: Vec<u32>,
}

impl Interleaver {
    pub fn identity(len: usize) -> Self {
        let perm: Vec<u32> = (0..len as u32).collect();
        Self {
            inv: perm.clone(),
            perm,
        }
    }

    /// Uniform random permutation (Fisher–Yates), deterministic in `seed`.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(len, &mut rng)
    }

    pub fn random_with<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut perm: Vec<u32> = (0..len as u32).collect();
        perm.shuffle(rng);
        Self::from_perm(perm).expect("shuffle is a permutation")
    }

    pub fn from_perm(perm: Vec<u32>) -> Result<Self> {
        let mut inv = vec![u32::MAX; perm.len()];
        for (t, &p) in perm.iter().enumerate() {
            match inv.get_mut(p as usize) {
                Some(slot) if *slot == u32::MAX => *slot = t as u32,
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "not a permutation: index {p} repeated or out of range"
                    )))
                }
            }
        }
        Ok(Self { perm, inv })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    pub fn inverse_perm(&self) -> &[u32] {
        &self.inv
    }

    /// `out[t] = input[perm[t]]`.
    pub fn forward_into<T: Copy>(&self, input: &[T], out: &mut [T]) {
        debug_assert_eq!(input.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        for (o, &p) in out.iter_mut().zip(&self.perm) {
            *o = input[p as usize];
        }
    }

    /// `out[perm[t]] = input[t]`.
    pub fn inverse_into<T: Copy>(&self, input: &[T], out: &mut [T]) {
        debug_assert_eq!(input.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        for (o, &q) in out.iter_mut().zip(&self.inv) {
            *o = input[q as usize];
        }
    }
}

/// Builds a uniformly random interleaver of the given length.
pub fn make_interleaver(len: usize, seed: u64) -> Result<Interleaver> {
    if len == 0 {
        return Err(Error::InvalidParameter(
            "interleaver length must be positive".into(),
        ));
    }
    Ok(Interleaver::random(len, seed))
}

/// Reorders `values` through the interleaver.
pub fn permute<T: Copy>(values: &[T], il: &Interleaver, dir: Direction) -> Result<Vec<T>> {
    if values.len() != il.len() {
        return Err(Error::LengthMismatch {
            what: "permute input",
            expected: il.len(),
            actual: values.len(),
        });
    }
    let mut out = values.to_vec();
    match dir {
        Direction::Forward => il.forward_into(values, &mut out),
        Direction::Inverse => il.inverse_into(values, &mut out),
    }
    Ok(out)
}

/// Everything that defines one user's transmitter.
#[derive(Debug, Clone)]
pub struct UserCodeSpec {
    pub mapper: BitMapper,
    pub spreading: SpreadingVector,
    pub interleaver: Interleaver,
    /// Field symbols per frame, `N`.
    pub symbols: usize,
}

impl UserCodeSpec {
    pub fn new(
        mapper: BitMapper,
        spreading: SpreadingVector,
        interleaver: Interleaver,
        symbols: usize,
    ) -> Result<Self> {
        let s = mapper.degree() as usize;
        let expected = s * symbols * spreading.len();
        if interleaver.len() != expected {
            return Err(Error::LengthMismatch {
                what: "interleaver",
                expected,
                actual: interleaver.len(),
            });
        }
        Ok(Self {
            mapper,
            spreading,
            interleaver,
            symbols,
        })
    }

    pub fn degree(&self) -> usize {
        self.mapper.degree() as usize
    }

    pub fn spreading_len(&self) -> usize {
        self.spreading.len()
    }

    /// Information bits per frame, `sN`.
    pub fn info_len(&self) -> usize {
        self.degree() * self.symbols
    }

    /// Chips per frame, `sNL`.
    pub fn chip_len(&self) -> usize {
        self.info_len() * self.spreading_len()
    }
}

/// Multiplies one symbol by every spreading entry.
pub fn spread_block(field: &FieldSpec, beta: Element, sv: &SpreadingVector) -> Vec<Element> {
    sv.elements().iter().map(|&s| field.mul(beta, s)).collect()
}

/// Encodes `sN` information bits into `sNL` interleaved unit-amplitude chips.
pub fn encode_user(field: &FieldSpec, spec: &UserCodeSpec, info: &[i8]) -> Result<Vec<i8>> {
    let mut chips = vec![0i8; spec.chip_len()];
    encode_chips(field, spec, info, &mut chips)?;
    let mut out = vec![0i8; chips.len()];
    spec.interleaver.forward_into(&chips, &mut out);
    Ok(out)
}

/// The pre-interleaver chip vector `c` (what the despreader sees after
/// deinterleaving).
pub fn encode_chips(
    field: &FieldSpec,
    spec: &UserCodeSpec,
    info: &[i8],
    chips: &mut [i8],
) -> Result<()> {
    if field.degree() as usize != spec.degree() {
        return Err(Error::InvalidParameter(format!(
            "field degree {} does not match mapper degree {}",
            field.degree(),
            spec.degree()
        )));
    }
    if info.len() != spec.info_len() {
        return Err(Error::LengthMismatch {
            what: "info bits",
            expected: spec.info_len(),
            actual: info.len(),
        });
    }
    let s = spec.degree();
    let l = spec.spreading_len();
    for (bits, block) in info.chunks_exact(s).zip(chips.chunks_exact_mut(s * l)) {
        let beta = spec.mapper.map_bits(bits)?;
        for (&sv, group) in spec.spreading.elements().iter().zip(block.chunks_exact_mut(s)) {
            spec.mapper.demap(field.mul(beta, sv), group);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn gf4() -> FieldSpec {
        FieldSpec::new(2).unwrap()
    }

    #[test]
    fn spread_examples() {
        let f = gf4();
        let sv = SpreadingVector::new(&f, vec![1, 2]).unwrap();
        assert_eq!(spread_block(&f, 0, &sv), vec![0, 0]);
        assert_eq!(spread_block(&f, 2, &sv), vec![2, 3]);
        assert_eq!(spread_block(&f, 3, &SpreadingVector::ones(3)), vec![3, 3, 3]);
    }

    #[test]
    fn zero_spreading_entry_rejected() {
        assert_eq!(
            SpreadingVector::new(&gf4(), vec![1, 0]),
            Err(Error::ZeroSpreadingElement { index: 1 })
        );
    }

    #[test]
    fn encode_binary_repetition() {
        let f = FieldSpec::new(1).unwrap();
        let spec = UserCodeSpec::new(
            BitMapper::natural(1),
            SpreadingVector::ones(2),
            Interleaver::identity(4),
            2,
        )
        .unwrap();
        assert_eq!(encode_user(&f, &spec, &[1, -1]).unwrap(), vec![1, 1, -1, -1]);
    }

    #[test]
    fn encode_gf4_example() {
        let f = gf4();
        let spec = UserCodeSpec::new(
            BitMapper::natural(2),
            SpreadingVector::new(&f, vec![1, 2]).unwrap(),
            Interleaver::identity(4),
            1,
        )
        .unwrap();
        assert_eq!(encode_user(&f, &spec, &[1, -1]).unwrap(), vec![1, -1, 1, 1]);
    }

    #[test]
    fn encode_length_mismatch() {
        let f = gf4();
        let spec = UserCodeSpec::new(
            BitMapper::natural(2),
            SpreadingVector::ones(1),
            Interleaver::identity(4),
            2,
        )
        .unwrap();
        assert!(matches!(
            encode_user(&f, &spec, &[1, 1, 1]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(UserCodeSpec::new(
            BitMapper::natural(2),
            SpreadingVector::ones(2),
            Interleaver::identity(4),
            2
        )
        .is_err());
    }

    #[test]
    fn interleaver_basics() {
        assert_eq!(make_interleaver(1, 9).unwrap(), Interleaver::identity(1));
        assert!(make_interleaver(0, 9).is_err());
        assert_eq!(make_interleaver(50, 3).unwrap(), make_interleaver(50, 3).unwrap());
        for seed in 0..100 {
            let il = make_interleaver(37, seed).unwrap();
            let mut seen = [false; 37];
            for &p in il.perm() {
                assert!(!seen[p as usize]);
                seen[p as usize] = true;
            }
        }
        let v = [1, 2, 3];
        assert_eq!(
            permute(&v, &Interleaver::identity(3), Direction::Forward).unwrap(),
            v
        );
        assert!(permute(&v, &Interleaver::identity(4), Direction::Forward).is_err());
    }

    proptest! {
        #[test]
        fn permute_round_trip(values in prop::collection::vec(-100i32..100, 1..200), seed: u64) {
            let il = make_interleaver(values.len(), seed).unwrap();
            let fwd = permute(&values, &il, Direction::Forward).unwrap();
            let back = permute(&fwd, &il, Direction::Inverse).unwrap();
            prop_assert_eq!(&back, &values);
            let mut a = fwd.clone();
            let mut b = values.clone();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn encode_is_injective_with_rate_one_over_l(
            s in 1u32..=4,
            l in 1usize..=4,
            seed: u64,
            a_seed: u64,
            b_seed: u64,
        ) {
            let f = FieldSpec::new(s).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3;
            let spec = UserCodeSpec::new(
                BitMapper::random_with(s, &mut rng),
                SpreadingVector::random(&f, l, &mut rng),
                Interleaver::random_with(s as usize * n * l, &mut rng),
                n,
            ).unwrap();
            let draw = |seed: u64| -> Vec<i8> {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                (0..spec.info_len()).map(|_| if r.random::<bool>() { 1 } else { -1 }).collect()
            };
            let (a, b) = (draw(a_seed), draw(b_seed));
            let ca = encode_user(&f, &spec, &a).unwrap();
            let cb = encode_user(&f, &spec, &b).unwrap();
            prop_assert_eq!(ca.len(), a.len() * l);
            prop_assert_eq!(a == b, ca == cb);
        }

        #[test]
        fn rate_one_identity(bits in prop::collection::vec(prop::bool::ANY, 1..40)) {
            let f = FieldSpec::new(1).unwrap();
            let info: Vec<i8> = bits.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let spec = UserCodeSpec::new(
                BitMapper::natural(1),
                SpreadingVector::ones(1),
                Interleaver::identity(info.len()),
                info.len(),
            ).unwrap();
            prop_assert_eq!(encode_user(&f, &spec, &info).unwrap(), info);
        }

        #[test]
        fn binary_ones_is_repetition_then_interleave(
            bits in prop::collection::vec(prop::bool::ANY, 1..30),
            l in 1usize..6,
            seed: u64,
        ) {
            let f = FieldSpec::new(1).unwrap();
            let info: Vec<i8> = bits.iter().map(|&b| if b { 1 } else { -1 }).collect();
            let il = Interleaver::random(info.len() * l, seed);
            let spec = UserCodeSpec::new(BitMapper::natural(1), SpreadingVector::ones(l), il.clone(), info.len()).unwrap();
            let repeated: Vec<i8> = info.iter().flat_map(|&b| std::iter::repeat_n(b, l)).collect();
            prop_assert_eq!(
                encode_user(&f, &spec, &info).unwrap(),
                permute(&repeated, &il, Direction::Forward).unwrap()
            );
        }
    }
}
