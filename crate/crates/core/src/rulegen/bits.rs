use std::fmt;

use serde::{Deserialize, Serialize};

/// Fixed-width bit string, bit 0 least significant. Match keys grow past 128
/// bits once several wide mark fields are concatenated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitString {
    width: u32,
    words: Vec<u64>,
}

impl BitString {
    pub fn zeros(width: u32) -> Self {
        BitString {
            width,
            words: vec![0; (width as usize).div_ceil(64).max(1)],
        }
    }

    pub fn ones(width: u32) -> Self {
        let mut b = Self::zeros(width);
        b.set_range(0, width, true);
        b
    }

    /// The low `width` bits of `v`.
    pub fn from_u64(width: u32, v: u64) -> Self {
        let mut b = Self::zeros(width);
        b.set_field(0, width.min(64), v);
        b
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, i: u32) -> bool {
        assert!(i < self.width, "bit {i} out of width {}", self.width);
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: u32, on: bool) {
        assert!(i < self.width, "bit {i} out of width {}", self.width);
        let w = &mut self.words[(i / 64) as usize];
        if on {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn set_range(&mut self, offset: u32, len: u32, on: bool) {
        for i in offset..offset + len {
            self.set(i, on);
        }
    }

    /// Writes the low `len` bits of `v` at `offset`.
    pub fn set_field(&mut self, offset: u32, len: u32, v: u64) {
        assert!(len <= 64);
        for i in 0..len {
            self.set(offset + i, v >> i & 1 == 1);
        }
    }

    /// Copies `src` into bits `offset..offset + src.width()`.
    pub fn set_slice(&mut self, offset: u32, src: &BitString) {
        for i in 0..src.width {
            self.set(offset + i, src.get(i));
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// True when `self & mask == value` (value bits outside mask are zero).
    pub fn matches(&self, value: &BitString, mask: &BitString) -> bool {
        debug_assert_eq!(self.width, value.width);
        self.words
            .iter()
            .zip(&mask.words)
            .zip(&value.words)
            .all(|((k, m), v)| k & m == *v)
    }

    pub fn and(&self, other: &BitString) -> BitString {
        BitString {
            width: self.width,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    /// Bitwise subset: every set bit of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &BitString) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// `0x`-prefixed hex, most significant digit first, `ceil(width/4)` digits.
    pub fn to_hex(&self) -> String {
        let digits = (self.width as usize).div_ceil(4).max(1);
        let mut s = String::with_capacity(digits + 2);
        s.push_str("0x");
        for d in (0..digits).rev() {
            let mut nib = 0u8;
            for b in 0..4 {
                let i = (d * 4 + b) as u32;
                if i < self.width && self.get(i) {
                    nib |= 1 << b;
                }
            }
            s.push(char::from_digit(nib as u32, 16).unwrap());
        }
        s
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
