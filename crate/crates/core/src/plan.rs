//! Lowering of canonical chains to [`StridedBlock`] and executor planning.

use std::fmt;

use crate::error::{Error, Result};
use crate::ir::{TypeData, TypeNode};
use crate::pack;

/// Canonical compact form of a strided type, stored base-first.
///
/// `counts[0]` is the length in bytes of each contiguous run and
/// `strides[0]` is always 1. Dimension `i > 0` repeats everything below it
/// `counts[i]` times, `strides[i]` bytes apart. The empty type is
/// `{start 0, counts [0], strides [1]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StridedBlock {
    start: usize,
    counts: Vec<usize>,
    strides: Vec<usize>,
}

impl StridedBlock {
    pub fn new(start: usize, counts: Vec<usize>, strides: Vec<usize>) -> Result<Self> {
        if counts.is_empty() || counts.len() != strides.len() {
            return Err(Error::InvalidLayout(format!(
                "strided block needs matching non-empty counts/strides, got {} and {}",
                counts.len(),
                strides.len()
            )));
        }
        if strides[0] != 1 {
            return Err(Error::InvalidLayout("dimension 0 must have stride 1".into()));
        }
        if counts[1..].contains(&0) {
            return Err(Error::InvalidLayout("repetition counts must be positive".into()));
        }
        Ok(StridedBlock { start, counts, strides })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn ndims(&self) -> usize {
        self.counts.len()
    }

    /// Described bytes.
    pub fn size(&self) -> usize {
        self.counts.iter().product()
    }

    /// Contiguous bytes per run.
    pub fn block_len(&self) -> usize {
        self.counts[0]
    }

    /// Number of contiguous runs.
    pub fn run_count(&self) -> usize {
        if self.counts[0] == 0 {
            0
        } else {
            self.counts[1..].iter().product()
        }
    }

    /// One past the last described byte.
    pub fn span(&self) -> usize {
        if self.size() == 0 {
            return 0;
        }
        self.start
            + self.counts[0]
            + self.counts[1..]
                .iter()
                .zip(&self.strides[1..])
                .map(|(c, s)| (c - 1) * s)
                .sum::<usize>()
    }

    /// Whether any byte is described twice.
    pub fn is_overlapping(&self) -> bool {
        if self.size() == 0 {
            return false;
        }
        // Nested layouts where each level clears the span of the levels below
        // are disjoint; anything else is settled by enumeration.
        let mut dims: Vec<(usize, usize)> = self.counts[1..]
            .iter()
            .zip(&self.strides[1..])
            .filter(|(c, _)| **c > 1)
            .map(|(c, s)| (*c, *s))
            .collect();
        dims.sort_by_key(|&(_, s)| s);
        let mut reach = self.counts[0];
        let mut nested = true;
        for (c, s) in dims {
            if s < reach {
                nested = false;
                break;
            }
            reach += (c - 1) * s;
        }
        if nested {
            return false;
        }
        pack::enumerate_blocks(self).overlap
    }
}

impl fmt::Display for StridedBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(
            f,
            "sb start={} counts=[{}] strides=[{}]",
            self.start,
            list(&self.counts),
            list(&self.strides)
        )
    }
}

/// How multi-object counts are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CountStrategy {
    /// Objects extend the grid Z dimension (blocks of at most 2 dims).
    GridZ,
    /// The whole grid is replayed per object and per dimension above the third.
    Iterate,
}

impl CountStrategy {
    pub fn name(self) -> &'static str {
        match self {
            CountStrategy::GridZ => "gridz",
            CountStrategy::Iterate => "iterate",
        }
    }
}

pub const WORD_SIZES: [usize; 5] = [16, 8, 4, 2, 1];
pub const MAX_BLOCK_THREADS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackPlan {
    pub word: usize,
    pub block_dims: [usize; 3],
    pub grid_dims: [usize; 3],
    pub count_strategy: CountStrategy,
}

impl PackPlan {
    /// Logical thread-space extents: words per run, then repetitions of
    /// dimensions 1 and 2.
    pub fn logical_extents(sb: &StridedBlock, word: usize) -> [usize; 3] {
        let c = sb.counts();
        [
            c[0] / word,
            c.get(1).copied().unwrap_or(1),
            c.get(2).copied().unwrap_or(1),
        ]
    }
}

impl fmt::Display for PackPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [bx, by, bz] = self.block_dims;
        let [gx, gy, gz] = self.grid_dims;
        write!(
            f,
            "plan w={} block=({bx},{by},{bz}) grid=({gx},{gy},{gz}) strategy={}",
            self.word,
            self.count_strategy.name()
        )
    }
}

/// Reads a simplified chain as a strided block: the dense base gives
/// dimension 0, each stream above it one more dimension, and all node
/// offsets sum into `start`.
pub fn to_strided_block(node: &TypeNode) -> Result<StridedBlock> {
    let chain = node.to_chain();
    let (base, streams) = chain.split_last().expect("chains are never empty");
    let TypeData::Dense(dense) = base else {
        return Err(Error::Unsupported("chain does not end in a dense run".into()));
    };
    let mut start = dense.offset;
    let mut counts = vec![dense.extent];
    let mut strides = vec![1];
    for data in streams.iter().rev() {
        let TypeData::Stream(s) = data else {
            return Err(Error::Unsupported("dense run above the base of the chain".into()));
        };
        start += s.offset;
        counts.push(s.count);
        strides.push(s.stride);
    }
    StridedBlock::new(start, counts, strides).map_err(|e| Error::Unsupported(e.to_string()))
}

fn word_fits(sb: &StridedBlock, w: usize) -> bool {
    sb.counts()[0].is_multiple_of(w) && sb.start().is_multiple_of(w) && sb.strides()[1..].iter().all(|s| s.is_multiple_of(w))
}

/// Largest word size that divides the run length, the start offset and
/// every outer stride.
pub fn select_word_size(sb: &StridedBlock) -> usize {
    WORD_SIZES.into_iter().find(|&w| word_fits(sb, w)).unwrap_or(1)
}

pub fn make_plan(sb: &StridedBlock) -> PackPlan {
    make_plan_with_word(sb, select_word_size(sb)).expect("selected word size always fits")
}

/// Plans with a caller-chosen word size, which must be one of
/// [`WORD_SIZES`] and fit the block's alignment.
pub fn make_plan_with_word(sb: &StridedBlock, word: usize) -> Result<PackPlan> {
    if !WORD_SIZES.contains(&word) || !word_fits(sb, word) {
        return Err(Error::invalid(format!("word size {word} does not fit {sb}")));
    }
    let ext = PackPlan::logical_extents(sb, word);
    let pow2 = |n: usize| n.max(1).next_power_of_two().min(MAX_BLOCK_THREADS);
    let bx = pow2(ext[0]);
    let mut by = pow2(ext[1]);
    let mut bz = pow2(ext[2]);
    // Keep X for coalescing; give up Z first, then Y.
    bz = bz.min((MAX_BLOCK_THREADS / (bx * by)).max(1));
    by = by.min(MAX_BLOCK_THREADS / bx);
    let block_dims = [bx, by, bz];
    let mut grid_dims = [1; 3];
    for d in 0..3 {
        grid_dims[d] = ext[d].div_ceil(block_dims[d]).max(1);
    }
    let count_strategy = if sb.ndims() <= 2 {
        CountStrategy::GridZ
    } else {
        CountStrategy::Iterate
    };
    Ok(PackPlan {
        word,
        block_dims,
        grid_dims,
        count_strategy,
    })
}
