use crate::{Error, Result};

/// A ternary prefix over a `width`-bit value; `mask` bits set to 1 are
/// compared, the rest are wildcards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    pub value: u64,
    pub mask: u64,
}

impl Prefix {
    pub fn contains(&self, v: u64) -> bool {
        v & self.mask == self.value
    }

    /// Rendered most significant bit first with `*` for wildcards.
    pub fn pattern(&self, width: u32) -> String {
        (0..width)
            .rev()
            .map(|i| match (self.mask >> i & 1, self.value >> i & 1) {
                (0, _) => '*',
                (_, 1) => '1',
                _ => '0',
            })
            .collect()
    }
}

/// Minimal prefix cover of the inclusive interval `[lo, hi]` over `width`
/// bits (1..=32).
///
/// Greedily takes the largest aligned block starting at `lo` that stays
/// inside the interval. The blocks are disjoint and their union is exactly
/// the interval.
pub fn interval_to_prefixes(lo: u64, hi: u64, width: u32) -> Result<Vec<Prefix>> {
    if width == 0 || width > 32 || lo > hi || hi >> width != 0 {
        return Err(Error::InvalidInterval { lo, hi, width });
    }
    let full = (1u64 << width) - 1;
    let mut out = Vec::new();
    let mut cur = lo;
    while cur <= hi {
        let mut s = if cur == 0 { width } else { cur.trailing_zeros().min(width) };
        while cur + (1u64 << s) - 1 > hi {
            s -= 1;
        }
        let size = 1u64 << s;
        out.push(Prefix {
            value: cur,
            mask: full & !(size - 1),
        });
        cur += size;
    }
    Ok(out)
}
