//! Occupation-number basis of a fixed `(N↑, N↓)` sector.
//!
//! A [`Determinant`] is a pair of site-occupation bitmasks. States of a sector
//! are ordered lexicographically by `(up_mask, dn_mask)`, which for fixed
//! popcounts coincides with the combinatorial (colex) rank of each mask. The
//! rank of a determinant is therefore computed from binomial prefix sums
//! without any lookup table.

use thiserror::Error;

/// Largest chain length representable by the `u32` site masks.
pub const MAX_SITES: usize = 32;

/// Default cap on the sector dimension accepted by [`SectorBasis::new`].
pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BasisError {
    #[error("sector dimension {dim} exceeds the configured limit of {limit} states")]
    CapacityExceeded { dim: u128, limit: usize },
    #[error("invalid sector: {0}")]
    InvalidSector(String),
    #[error("determinant (up={up:#b}, dn={dn:#b}) does not belong to the sector")]
    NotInSector { up: u32, dn: u32 },
    #[error("cannot hop {from} -> {to}: {reason}")]
    InvalidMove { from: usize, to: usize, reason: &'static str },
}

/// Single occupation-number basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Determinant {
    pub up: u32,
    pub dn: u32,
}

impl Determinant {
    pub fn new(up: u32, dn: u32) -> Self {
        Self { up, dn }
    }

    /// Total occupation `n_i = n_{i↑} + n_{i↓}` of site `i` (0, 1 or 2).
    #[inline]
    pub fn occupation(&self, site: usize) -> u32 {
        ((self.up >> site) & 1) + ((self.dn >> site) & 1)
    }

    #[inline]
    pub fn up_at(&self, site: usize) -> bool {
        (self.up >> site) & 1 == 1
    }

    #[inline]
    pub fn dn_at(&self, site: usize) -> bool {
        (self.dn >> site) & 1 == 1
    }

    /// Number of doubly occupied sites.
    #[inline]
    pub fn double_occupancy(&self) -> u32 {
        (self.up & self.dn).count_ones()
    }
}

/// Binomial coefficient `C(n, k)` as `u128`; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Ranks masks with a fixed popcount in ascending numeric order.
#[derive(Debug, Clone)]
struct MaskRanker {
    // table[p][c] = C(p, c) for p < sites, c <= particles
    table: Vec<Vec<usize>>,
    count: usize,
}

impl MaskRanker {
    fn new(sites: usize, particles: usize) -> Self {
        let table = (0..sites.max(1)).map(|p| (0..=particles).map(|c| binomial(p, c) as usize).collect()).collect();
        Self { table, count: binomial(sites, particles) as usize }
    }

    #[inline]
    fn rank(&self, mask: u32) -> usize {
        let mut rank = 0;
        let mut bits = mask;
        let mut c = 1;
        while bits != 0 {
            let p = bits.trailing_zeros() as usize;
            rank += self.table[p][c];
            bits &= bits - 1;
            c += 1;
        }
        rank
    }
}

/// All masks on `sites` bits with exactly `particles` bits set, ascending.
pub fn masks_with_popcount(sites: usize, particles: usize) -> Vec<u32> {
    if particles > sites {
        return Vec::new();
    }
    if particles == 0 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(binomial(sites, particles) as usize);
    let limit: u64 = 1u64 << sites;
    let mut v: u64 = (1u64 << particles) - 1;
    while v < limit {
        out.push(v as u32);
        // next integer with the same popcount (Gosper's hack)
        let t = v | (v - 1);
        v = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
    }
    out
}

/// Ordered basis of one `(N↑, N↓)` sector on `sites` lattice sites.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    sites: usize,
    n_up: usize,
    n_dn: usize,
    up_masks: Vec<u32>,
    dn_masks: Vec<u32>,
    up_rank: MaskRanker,
    dn_rank: MaskRanker,
}

impl SectorBasis {
    /// Enumerates the sector with the default capacity limit.
    pub fn new(sites: usize, n_up: usize, n_dn: usize) -> Result<Self, BasisError> {
        Self::with_capacity_limit(sites, n_up, n_dn, DEFAULT_CAPACITY)
    }

    pub fn with_capacity_limit(sites: usize, n_up: usize, n_dn: usize, limit: usize) -> Result<Self, BasisError> {
        if sites == 0 || sites > MAX_SITES {
            return Err(BasisError::InvalidSector(format!("site count {sites} outside 1..={MAX_SITES}")));
        }
        if n_up > sites || n_dn > sites {
            return Err(BasisError::InvalidSector(format!("particle counts ({n_up}, {n_dn}) exceed {sites} sites")));
        }
        let dim = binomial(sites, n_up) * binomial(sites, n_dn);
        if dim > limit as u128 {
            return Err(BasisError::CapacityExceeded { dim, limit });
        }
        Ok(Self {
            sites,
            n_up,
            n_dn,
            up_masks: masks_with_popcount(sites, n_up),
            dn_masks: masks_with_popcount(sites, n_dn),
            up_rank: MaskRanker::new(sites, n_up),
            dn_rank: MaskRanker::new(sites, n_dn),
        })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn n_dn(&self) -> usize {
        self.n_dn
    }

    pub fn particles(&self) -> usize {
        self.n_up + self.n_dn
    }

    /// Filling `n = (N↑ + N↓) / L`.
    pub fn density(&self) -> f64 {
        self.particles() as f64 / self.sites as f64
    }

    /// Magnetization `m = (N↑ − N↓) / L`.
    pub fn magnetization(&self) -> f64 {
        (self.n_up as f64 - self.n_dn as f64) / self.sites as f64
    }

    pub fn dim(&self) -> usize {
        self.up_masks.len() * self.dn_masks.len()
    }

    /// Determinant at position `index`.
    #[inline]
    pub fn unrank(&self, index: usize) -> Determinant {
        let n_dn = self.dn_masks.len();
        Determinant { up: self.up_masks[index / n_dn], dn: self.dn_masks[index % n_dn] }
    }

    /// Position of `det` in the basis ordering.
    pub fn rank(&self, det: Determinant) -> Result<usize, BasisError> {
        let valid_bits = if self.sites == 32 { u32::MAX } else { (1u32 << self.sites) - 1 };
        if det.up.count_ones() as usize != self.n_up
            || det.dn.count_ones() as usize != self.n_dn
            || det.up & !valid_bits != 0
            || det.dn & !valid_bits != 0
        {
            return Err(BasisError::NotInSector { up: det.up, dn: det.dn });
        }
        Ok(self.rank_unchecked(det))
    }

    /// Rank without the membership check.
    #[inline]
    pub fn rank_unchecked(&self, det: Determinant) -> usize {
        self.up_rank.rank(det.up) * self.dn_rank.count + self.dn_rank.rank(det.dn)
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Determinant> + '_ {
        (0..self.dim()).map(move |k| self.unrank(k))
    }

    /// `occupations()[k * L + i]` is the total occupation of site `i` in state `k`.
    pub fn occupations(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.dim() * self.sites);
        for det in self.iter() {
            for i in 0..self.sites {
                out.push(det.occupation(i) as u8);
            }
        }
        out
    }

    /// Whether the particle counts of `other` match.
    pub fn same_sector(&self, other: &SectorBasis) -> bool {
        self.sites == other.sites && self.n_up == other.n_up && self.n_dn == other.n_dn
    }
}

/// Fermionic sign of `c†_to c_from` acting on the single-species `mask`.
///
/// The sign is `(−1)^k` with `k` the number of occupied orbitals strictly
/// between `to` and `from`.
pub fn hop_parity(mask: u32, to: usize, from: usize) -> Result<i8, BasisError> {
    if to == from {
        return Err(BasisError::InvalidMove { from, to, reason: "source equals target" });
    }
    if to >= MAX_SITES || from >= MAX_SITES {
        return Err(BasisError::InvalidMove { from, to, reason: "site out of range" });
    }
    if mask & (1 << from) == 0 {
        return Err(BasisError::InvalidMove { from, to, reason: "source site empty" });
    }
    if mask & (1 << to) != 0 {
        return Err(BasisError::InvalidMove { from, to, reason: "target site occupied" });
    }
    Ok(parity_between(mask, to, from))
}

#[inline]
pub(crate) fn parity_between(mask: u32, a: usize, b: usize) -> i8 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let between = if hi - lo <= 1 { 0 } else { (mask >> (lo + 1)) & ((1u32 << (hi - lo - 1)) - 1) };
    if between.count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Applies `c†_to c_from` to `mask`, returning the new mask and the sign.
pub fn apply_hop(mask: u32, to: usize, from: usize) -> Result<(u32, i8), BasisError> {
    let sign = hop_parity(mask, to, from)?;
    Ok((mask ^ (1 << from) ^ (1 << to), sign))
}
