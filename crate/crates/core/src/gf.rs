//! Arithmetic in GF(2^s) and the bijection between length-`s` chip vectors
//! over {+1, −1} and field elements.
//!
//! Elements are integers `0..2^s`; addition is XOR and multiplication goes
//! through exp/log tables of a primitive element `α`. Degrees up to 12 are
//! supported.
//!
//! ```
//! use ffspread::gf::FieldSpec;
//!
//! let gf4 = FieldSpec::new(2).unwrap();
//! assert_eq!(gf4.mul(2, 2), 3); // α·α = α + 1
//! assert_eq!(gf4.inv(2).unwrap(), 3);
//! ```

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A field element, stored as its integer (polynomial-basis) form.
pub type Element = u16;

/// Largest supported field degree.
pub const MAX_DEGREE: u32 = 12;

/// Default primitive polynomials, indexed by degree. Bit `i` is the
/// coefficient of `x^i`.
const DEFAULT_POLYS: [u32; 13] = [
    0, 0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D, 0x211, 0x409, 0x805, 0x1053,
];

/// Returns the built-in primitive polynomial for degree `s`.
pub fn default_poly(s: u32) -> Option<u32> {
    DEFAULT_POLYS.get(s as usize).copied().filter(|&p| p != 0)
}

/// GF(2^s) with exp/log tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    degree: u32,
    poly: u32,
    exp: Vec<Element>,
    log: Vec<u32>,
}

impl FieldSpec {
    /// Builds GF(2^s) from the built-in polynomial for `s`.
    pub fn new(s: u32) -> Result<Self> {
        let poly = default_poly(s).ok_or(Error::DegreeOutOfRange(s))?;
        Self::with_poly(s, poly)
    }

    /// Builds GF(2^s) from an explicit polynomial bitmask. The polynomial must
    /// have degree `s` and be primitive.
    pub fn with_poly(s: u32, poly: u32) -> Result<Self> {
        if s == 0 || s > MAX_DEGREE {
            return Err(Error::DegreeOutOfRange(s));
        }
        if poly >> s != 1 {
            return Err(Error::WrongDegree { poly, degree: s });
        }
        let size = 1usize << s;
        let period = size - 1;
        let mut exp = vec![0 as Element; period];
        let mut log = vec![u32::MAX; size];
        let mut x: u32 = 1;
        for (i, slot) in exp.iter_mut().enumerate() {
            if x == 0 || log[x as usize] != u32::MAX {
                return Err(Error::NotPrimitive {
                    poly,
                    order: i,
                    expected: period,
                });
            }
            *slot = x as Element;
            log[x as usize] = i as u32;
            x <<= 1;
            if x >> s & 1 == 1 {
                x ^= poly;
            }
        }
        // x^(2^s − 1) must come back to 1.
        if x != 1 {
            return Err(Error::NotPrimitive {
                poly,
                order: 0,
                expected: period,
            });
        }
        Ok(Self {
            degree: s,
            poly,
            exp,
            log,
        })
    }

    /// Field degree `s`.
    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Number of field elements, `2^s`.
    pub fn size(&self) -> usize {
        1 << self.degree
    }

    pub fn poly(&self) -> u32 {
        self.poly
    }

    /// `α^i` for any `i`; the exponent is reduced modulo `2^s − 1`.
    pub fn exp(&self, i: usize) -> Element {
        self.exp[i % self.exp.len()]
    }

    /// Discrete log of a nonzero element.
    pub fn log(&self, x: Element) -> Option<u32> {
        match self.log.get(x as usize) {
            Some(&l) if l != u32::MAX => Some(l),
            _ => None,
        }
    }

    pub fn contains(&self, x: u32) -> bool {
        (x as usize) < self.size()
    }

    pub fn add(&self, a: Element, b: Element) -> Element {
        a ^ b
    }

    pub fn mul(&self, a: Element, b: Element) -> Element {
        if a == 0 || b == 0 {
            return 0;
        }
        let period = self.exp.len() as u32;
        let e = self.log[a as usize] + self.log[b as usize];
        self.exp[(if e >= period { e - period } else { e }) as usize]
    }

    pub fn inv(&self, a: Element) -> Result<Element> {
        if a == 0 {
            return Err(Error::ZeroInverse);
        }
        let period = self.exp.len() as u32;
        let l = self.log[a as usize];
        Ok(self.exp[((period - l) % period) as usize])
    }
}

/// The bijection `Γ` between chip vectors in {+1, −1}^s and field elements.
///
/// A chip vector is encoded as an `s`-bit pattern: chip `m` (0-based, first
/// chip first) is bit `s − 1 − m`, with `+1 ↦ 1` and `−1 ↦ 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMapper {
    degree: u32,
    forward: Vec<Element>,
    inverse: Vec<u16>,
}

impl BitMapper {
    /// The natural mapping: an element's chips are its binary digits, most
    /// significant first.
    pub fn natural(s: u32) -> Self {
        let size = 1usize << s;
        let forward: Vec<Element> = (0..size as Element).collect();
        Self::from_forward(s, forward).expect("identity is a bijection")
    }

    /// A uniformly random bijection, deterministic in `seed`.
    pub fn random(s: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(s, &mut rng)
    }

    /// A uniformly random bijection drawn from `rng`.
    pub fn random_with<R: rand::Rng + ?Sized>(s: u32, rng: &mut R) -> Self {
        let size = 1usize << s;
        let mut forward: Vec<Element> = (0..size as Element).collect();
        forward.shuffle(rng);
        Self::from_forward(s, forward).expect("shuffle is a bijection")
    }

    /// Builds a mapper from its forward table (`forward[pattern] = element`).
    pub fn from_forward(s: u32, forward: Vec<Element>) -> Result<Self> {
        let size = 1usize << s;
        if forward.len() != size {
            return Err(Error::LengthMismatch {
                what: "mapper table",
                expected: size,
                actual: forward.len(),
            });
        }
        let mut inverse = vec![u16::MAX; size];
        for (pattern, &el) in forward.iter().enumerate() {
            let slot = inverse
                .get_mut(el as usize)
                .ok_or(Error::ElementOutOfRange {
                    element: el as u32,
                    degree: s,
                })?;
            if *slot != u16::MAX {
                return Err(Error::InvalidParameter(format!(
                    "mapper is not a bijection: element {el} appears twice"
                )));
            }
            *slot = pattern as u16;
        }
        Ok(Self {
            degree: s,
            forward,
            inverse,
        })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Element for a bit pattern.
    pub fn element(&self, pattern: u16) -> Element {
        self.forward[pattern as usize]
    }

    /// Bit pattern `Γ⁻¹(λ)` of an element.
    pub fn pattern(&self, lambda: Element) -> u16 {
        self.inverse[lambda as usize]
    }

    /// Maps `s` chips to a field element.
    pub fn map_bits(&self, chips: &[i8]) -> Result<Element> {
        if chips.len() != self.degree as usize {
            return Err(Error::LengthMismatch {
                what: "chip group",
                expected: self.degree as usize,
                actual: chips.len(),
            });
        }
        let pattern = chips
            .iter()
            .fold(0u16, |acc, &c| (acc << 1) | u16::from(c > 0));
        Ok(self.forward[pattern as usize])
    }

    /// Chip `m` (0-based) of `Γ⁻¹(λ)`, as ±1.
    pub fn demap_bit(&self, lambda: Element, m: usize) -> i8 {
        let shift = self.degree as usize - 1 - m;
        if self.inverse[lambda as usize] >> shift & 1 == 1 {
            1
        } else {
            -1
        }
    }

    /// All `s` chips of `Γ⁻¹(λ)`, written into `out`.
    pub fn demap(&self, lambda: Element, out: &mut [i8]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.demap_bit(lambda, m);
        }
    }
}
