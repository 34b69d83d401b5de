//! Bit-to-signal mappings.
//!
//! *Classical* mapping splits a frame into `N_a` spatial-pattern bits and
//! `log2 M` Gray-labelled MQAM bits. *E-PN* mapping is driven by the MQAM
//! bits alone: the first `m - 1` bits pick a pool, the last bit picks the
//! symbol inside it, and the spatial pattern is drawn at random from the
//! pool's set of allowed patterns. Robust pools get low Hamming weights and
//! sensitive pools high ones, so the receiver recovers the pool (and the
//! `m - 1` prefix bits) from the energy-detected pattern.
//!
//! Pattern bit order: `bits[0]` (branch 1) is the most significant bit of
//! the decimal index `J`.

use rand::Rng;

use crate::constellation::{Constellation, Pool, Sensitivity};
use crate::{Complex, Error, Result};

/// Packs MSB-first bits into an integer.
pub fn bits_to_index(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Unpacks `value` into `width` MSB-first bits.
pub fn index_to_bits(value: usize, width: usize) -> Vec<bool> {
    (0..width).rev().map(|k| (value >> k) & 1 == 1).collect()
}

/// Number of ones in the `width`-bit representation of `j`.
pub fn hamming_weight(j: usize, width: usize) -> u32 {
    debug_assert!(width >= usize::BITS as usize || j < (1usize << width));
    j.count_ones()
}

/// Binary receive-antenna activation vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpatialPattern {
    bits: Vec<bool>,
}

impl SpatialPattern {
    /// Builds a pattern from bits; the all-zero pattern is rejected.
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidBits("empty spatial pattern".into()));
        }
        if !bits.iter().any(|&b| b) {
            return Err(Error::InvalidBits(
                "the all-zero spatial pattern is excluded".into(),
            ));
        }
        Ok(Self { bits })
    }

    /// Builds the `width`-bit pattern with decimal index `j`.
    pub fn from_decimal(j: usize, width: usize) -> Result<Self> {
        if width == 0 || width >= usize::BITS as usize || j >= (1usize << width) {
            return Err(Error::InvalidBits(format!(
                "index {j} does not fit in {width} bits"
            )));
        }
        Self::from_bits(index_to_bits(j, width))
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    /// Decimal index `J`.
    pub fn decimal(&self) -> usize {
        bits_to_index(&self.bits)
    }

    /// Number of active branches.
    pub fn weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_active(&self, branch: usize) -> bool {
        self.bits[branch]
    }
}

impl std::fmt::Display for SpatialPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Hamming distance between two equal-width patterns.
pub fn spatial_bit_error_count(sent: &SpatialPattern, detected: &SpatialPattern) -> usize {
    debug_assert_eq!(sent.width(), detected.width());
    sent.bits
        .iter()
        .zip(&detected.bits)
        .filter(|(a, b)| a != b)
        .count()
}

/// Counts differing positions between two bit slices.
pub fn bit_errors(sent: &[bool], detected: &[bool]) -> usize {
    sent.iter().zip(detected).filter(|(a, b)| a != b).count()
}

/// One row of a mapping table.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingEntry {
    pub pool: Pool,
    /// The `m - 1` MQAM prefix bits that select this pool.
    pub prefix: Vec<bool>,
    /// Allowed decimal pattern indices, ascending.
    pub allowed_j: Vec<usize>,
    /// Hamming weights admitted by the pool's weight rule, ascending.
    pub weights: Vec<u32>,
}

/// Pool-to-pattern association used by E-PN mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingTable {
    order: usize,
    na: usize,
    entries: Vec<MappingEntry>,
    /// `owner[j]` is the entry whose allowed set contains `j`.
    owner: Vec<Option<usize>>,
}

/// Allowed index sets printed for 16QAM with four spatial bits, in pool order.
const TABLE_16QAM_NA4: [&[usize]; 8] = [
    &[1, 2],
    &[4, 8],
    &[3, 5, 6],
    &[9, 10, 12],
    &[7, 13],
    &[11],
    &[14],
    &[15],
];

/// Builds the mapping table for `order`-QAM with `na` spatial bits.
///
/// `(16, 4)` reproduces the tabulated index sets verbatim. Two-pool
/// constellations (4QAM) give the first pool every nonzero index with weight
/// at most `na / 2` and the second pool the rest, which is the tabulated
/// `(4, 6)` rule. Other combinations sort the nonzero indices by weight and
/// deal them out in contiguous runs, robust pools first.
pub fn build_mapping_table(order: usize, na: usize, pools: &[Pool]) -> Result<MappingTable> {
    if !order.is_power_of_two() || order < 4 {
        return Err(Error::UnsupportedOrder(order));
    }
    let m = order.trailing_zeros() as usize;
    if pools.len() != order / 2 {
        return Err(Error::InfeasibleMapping(format!(
            "{}-QAM needs {} pools, got {}",
            order,
            order / 2,
            pools.len()
        )));
    }
    if na == 0 || na >= 20 {
        return Err(Error::InfeasibleMapping(format!(
            "unsupported number of spatial bits {na}"
        )));
    }
    let patterns = (1usize << na) - 1;
    if patterns < pools.len() {
        return Err(Error::InfeasibleMapping(format!(
            "{} nonzero {}-bit patterns cannot cover {} pools",
            patterns,
            na,
            pools.len()
        )));
    }

    let sets: Vec<Vec<usize>> = if order == 16 && na == 4 {
        TABLE_16QAM_NA4.iter().map(|s| s.to_vec()).collect()
    } else if pools.len() == 2 {
        let split = (na / 2) as u32;
        let (low, high): (Vec<usize>, Vec<usize>) =
            (1..=patterns).partition(|&j| hamming_weight(j, na) <= split);
        vec![low, high]
    } else {
        let mut by_weight: Vec<usize> = (1..=patterns).collect();
        by_weight.sort_by_key(|&j| (hamming_weight(j, na), j));
        let n = pools.len();
        let mut sets = Vec::with_capacity(n);
        let mut start = 0;
        for k in 0..n {
            let len = by_weight.len() / n + usize::from(k < by_weight.len() % n);
            sets.push(by_weight[start..start + len].to_vec());
            start += len;
        }
        // Low weights go to robust pools.
        let mut robust_first: Vec<usize> = (0..n).collect();
        robust_first.sort_by_key(|&i| pools[i].sensitivity == Sensitivity::Sensitive);
        let mut assigned = vec![Vec::new(); n];
        for (set, &pool) in sets.into_iter().zip(&robust_first) {
            assigned[pool] = set;
        }
        assigned
    };

    let mut owner = vec![None; patterns + 1];
    let mut entries = Vec::with_capacity(pools.len());
    for (i, (pool, mut allowed_j)) in pools.iter().zip(sets).enumerate() {
        allowed_j.sort_unstable();
        for &j in &allowed_j {
            if j == 0 || j > patterns || owner[j].is_some() {
                return Err(Error::InfeasibleMapping(format!(
                    "pattern index {j} is invalid or assigned twice"
                )));
            }
            owner[j] = Some(i);
        }
        let mut weights: Vec<u32> = allowed_j.iter().map(|&j| hamming_weight(j, na)).collect();
        weights.sort_unstable();
        weights.dedup();
        entries.push(MappingEntry {
            pool: pool.clone(),
            prefix: index_to_bits(pool.index, m - 1),
            allowed_j,
            weights,
        });
    }
    Ok(MappingTable {
        order,
        na,
        entries,
        owner,
    })
}

impl MappingTable {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of spatial bits.
    pub fn na(&self) -> usize {
        self.na
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    /// Entry owning pattern index `j`, if any.
    pub fn entry_for_index(&self, j: usize) -> Option<&MappingEntry> {
        self.owner.get(j).copied().flatten().map(|i| &self.entries[i])
    }

    /// Entry for a detected pattern. Indices outside every allowed set (only
    /// possible for tables that do not cover all patterns) resolve to the
    /// owned index closest in Hamming distance, lowest index on ties.
    pub fn entry_for_pattern(&self, pattern: &SpatialPattern) -> &MappingEntry {
        let j = pattern.decimal();
        if let Some(e) = self.entry_for_index(j) {
            return e;
        }
        let nearest = (1..self.owner.len())
            .filter(|&k| self.owner[k].is_some())
            .min_by_key(|&k| ((k ^ j).count_ones(), k))
            .expect("every table owns at least one index");
        self.entry_for_index(nearest).expect("owned")
    }
}

/// Classical mapping of an `N_a + m` bit frame.
pub fn classical_map(bits: &[bool], na: usize, c: &Constellation) -> Result<(SpatialPattern, Complex)> {
    let m = c.bits_per_symbol();
    if bits.len() != na + m {
        return Err(Error::InvalidBits(format!(
            "classical frame needs {} bits, got {}",
            na + m,
            bits.len()
        )));
    }
    let pattern = SpatialPattern::from_bits(bits[..na].to_vec())?;
    Ok((pattern, c.point(bits_to_index(&bits[na..]))))
}

/// Inverse of [`classical_map`]; `symbol` must be a constellation point.
pub fn classical_demap(pattern: &SpatialPattern, symbol: Complex, c: &Constellation) -> Result<Vec<bool>> {
    let label = c
        .label_of(symbol)
        .ok_or_else(|| Error::InvalidBits(format!("{symbol} is not a constellation point")))?;
    let mut bits = pattern.bits().to_vec();
    bits.extend(index_to_bits(label, c.bits_per_symbol()));
    Ok(bits)
}

/// E-PN mapping of `m` MQAM bits: pool from the prefix, symbol from the last
/// bit, spatial pattern drawn uniformly from the pool's allowed set.
pub fn epn_map<R: Rng + ?Sized>(
    bits: &[bool],
    table: &MappingTable,
    rng: &mut R,
) -> Result<(SpatialPattern, Complex)> {
    let m = table.order.trailing_zeros() as usize;
    if bits.len() != m {
        return Err(Error::InvalidBits(format!(
            "E-PN mapping needs {m} MQAM bits, got {}",
            bits.len()
        )));
    }
    let entry = &table.entries[bits_to_index(&bits[..m - 1])];
    let j = entry.allowed_j[rng.random_range(0..entry.allowed_j.len())];
    let pattern = SpatialPattern::from_decimal(j, table.na)?;
    Ok((pattern, entry.pool.symbols[bits[m - 1] as usize]))
}

/// E-PN demapping: prefix bits from the pool owning the detected pattern,
/// last bit from `detector`, which returns the winning position (0 or 1)
/// inside the pool for the combined sample `y_c`.
pub fn epn_demap(
    pattern_hat: &SpatialPattern,
    y_c: Complex,
    table: &MappingTable,
    detector: impl Fn(Complex, &Pool) -> usize,
) -> Vec<bool> {
    let entry = table.entry_for_pattern(pattern_hat);
    let mut bits = entry.prefix.clone();
    bits.push(detector(y_c, &entry.pool) == 1);
    bits
}
