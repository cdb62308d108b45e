//! Block lists straight from constructor semantics, with no IR involved.

use super::{push_run, Block, BlockList};
use crate::plan::StridedBlock;
use crate::typemodel::TypeDef;

fn replicate(out: &mut Vec<Block>, inner: &[Block], shift: usize) {
    for b in inner {
        push_run(out, Block::new(b.offset + shift, b.len));
    }
}

/// Contiguous runs of one object in definition (type map) order.
///
/// Runs are merged only when one starts exactly where the previous ends, so
/// duplicates from overlapping definitions are kept.
pub fn flatten_raw(def: &TypeDef) -> Vec<Block> {
    match def {
        TypeDef::Named(kind) => vec![Block::new(0, kind.size())],
        TypeDef::Contiguous { count, inner } => {
            let runs = flatten_raw(inner);
            let elem = inner.extent();
            let mut out = Vec::with_capacity(runs.len());
            for i in 0..*count {
                replicate(&mut out, &runs, i * elem);
            }
            out
        }
        TypeDef::Vector {
            count,
            blocklength,
            stride,
            inner,
        } => {
            let runs = flatten_raw(inner);
            let elem = inner.extent();
            let mut out = Vec::new();
            for i in 0..*count {
                for j in 0..*blocklength {
                    replicate(&mut out, &runs, (i * stride + j) * elem);
                }
            }
            out
        }
        TypeDef::Hvector {
            count,
            blocklength,
            stride,
            inner,
        } => {
            let runs = flatten_raw(inner);
            let elem = inner.extent();
            let mut out = Vec::new();
            for i in 0..*count {
                for j in 0..*blocklength {
                    replicate(&mut out, &runs, i * stride + j * elem);
                }
            }
            out
        }
        TypeDef::Subarray {
            sizes,
            subsizes,
            offsets,
            inner,
        } => {
            let runs = flatten_raw(inner);
            let elem = inner.extent();
            let n = sizes.len();
            // Element pitch of each dimension; dimension 0 varies fastest.
            let mut pitch = vec![elem; n];
            for i in 1..n {
                pitch[i] = pitch[i - 1] * sizes[i - 1];
            }
            let total: usize = subsizes.iter().product();
            let mut out = Vec::new();
            let mut idx = vec![0usize; n];
            for _ in 0..total {
                let shift: usize = (0..n).map(|i| (offsets[i] + idx[i]) * pitch[i]).sum();
                replicate(&mut out, &runs, shift);
                for i in 0..n {
                    idx[i] += 1;
                    if idx[i] < subsizes[i] {
                        break;
                    }
                    idx[i] = 0;
                }
            }
            out
        }
    }
}

/// Normalized block list of one object.
pub fn flatten_oracle(def: &TypeDef) -> BlockList {
    BlockList::normalize(flatten_raw(def))
}

/// Runs of a strided block in index order (dimension 0 fastest), unmerged.
pub fn strided_runs(sb: &StridedBlock) -> Vec<Block> {
    let len = sb.block_len();
    if len == 0 {
        return Vec::new();
    }
    let counts = &sb.counts()[1..];
    let strides = &sb.strides()[1..];
    let mut idx = vec![0usize; counts.len()];
    let mut out = Vec::with_capacity(sb.run_count());
    for _ in 0..sb.run_count() {
        let off: usize = sb.start() + idx.iter().zip(strides).map(|(i, s)| i * s).sum::<usize>();
        out.push(Block::new(off, len));
        for d in 0..idx.len() {
            idx[d] += 1;
            if idx[d] < counts[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Normalized block list of a strided block.
pub fn enumerate_blocks(sb: &StridedBlock) -> BlockList {
    BlockList::normalize(strided_runs(sb))
}
