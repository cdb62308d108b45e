//! Pack and unpack on byte buffers, plus the reference block-list oracle.
//!
//! The packed stream of a strided type is in canonical index order: bytes of
//! a run first, then dimension 1, then dimension 2 and so on. Types without a
//! strided form are packed from their oracle block list in definition order.

mod exec;
mod oracle;

use rayon::prelude::*;

pub use exec::{for_each_segment, Segment};
pub use oracle::{enumerate_blocks, flatten_oracle, flatten_raw, strided_runs};

use crate::error::{Error, Result};
use crate::typemodel::{CommittedType, Lowering};
use exec::Geometry;

/// A contiguous run of bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub offset: usize,
    pub len: usize,
}

impl Block {
    pub const fn new(offset: usize, len: usize) -> Self {
        Block { offset, len }
    }

    pub const fn end(&self) -> usize {
        self.offset + self.len
    }
}

/// Appends `b`, extending the previous run when `b` starts where it ends.
pub(crate) fn push_run(runs: &mut Vec<Block>, b: Block) {
    if b.len == 0 {
        return;
    }
    if let Some(last) = runs.last_mut() {
        if last.end() == b.offset {
            last.len += b.len;
            return;
        }
    }
    runs.push(b);
}

/// Sorted, disjoint, non-adjacent runs. `overlap` records whether any two
/// input runs shared a byte before merging.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockList {
    pub blocks: Vec<Block>,
    pub overlap: bool,
}

impl BlockList {
    pub fn normalize(mut runs: Vec<Block>) -> BlockList {
        runs.retain(|b| b.len > 0);
        runs.sort_unstable();
        let mut blocks: Vec<Block> = Vec::with_capacity(runs.len());
        let mut overlap = false;
        for b in runs {
            match blocks.last_mut() {
                Some(last) if b.offset <= last.end() => {
                    overlap |= b.offset < last.end();
                    let end = last.end().max(b.end());
                    last.len = end - last.offset;
                }
                _ => blocks.push(b),
            }
        }
        BlockList { blocks, overlap }
    }

    /// Distinct bytes covered.
    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Serial,
    /// Splits work across planes (pack) or objects (unpack) with rayon.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PackOptions {
    pub mode: ExecMode,
    /// Allow types without a strided form to go through their block list.
    pub allow_fallback: bool,
    /// Work below this many packed bytes runs serially even in parallel mode.
    pub parallel_min_bytes: usize,
}

impl Default for PackOptions {
    fn default() -> Self {
        PackOptions {
            mode: ExecMode::Parallel,
            allow_fallback: true,
            parallel_min_bytes: 1 << 16,
        }
    }
}

impl PackOptions {
    pub fn serial() -> Self {
        PackOptions {
            mode: ExecMode::Serial,
            ..Self::default()
        }
    }
}

fn check_len(needed: usize, available: usize) -> Result<()> {
    if available < needed {
        Err(Error::BufferTooSmall { needed, available })
    } else {
        Ok(())
    }
}

/// Gathers `incount` objects from `src` into `dst` at `position`. Returns
/// the position after the last packed byte.
pub fn pack(src: &[u8], ty: &CommittedType, incount: usize, dst: &mut [u8], position: usize) -> Result<usize> {
    pack_with(src, ty, incount, dst, position, &PackOptions::default())
}

pub fn pack_with(
    src: &[u8],
    ty: &CommittedType,
    incount: usize,
    dst: &mut [u8],
    position: usize,
    opts: &PackOptions,
) -> Result<usize> {
    let size = ty.size();
    let total = incount * size;
    let end = position + total;
    check_len(end, dst.len())?;
    check_len(ty.required_span(incount), src.len())?;
    if total == 0 {
        return Ok(end);
    }
    let extent = ty.extent();
    let out = &mut dst[position..end];

    match ty.lowering() {
        Lowering::Strided { canon, plan } => {
            let parallel = opts.mode == ExecMode::Parallel && total >= opts.parallel_min_bytes;
            if parallel {
                let geom = Geometry::new(canon, plan);
                let planes = geom.planes();
                let plane_bytes = geom.plane_bytes();
                out.par_chunks_mut(plane_bytes).enumerate().for_each(|(unit, chunk)| {
                    let (j, p) = (unit / planes, unit % planes);
                    let obj = &src[j * extent..];
                    let base = p * plane_bytes;
                    geom.plane_segments(p, |s| {
                        chunk[s.packed - base..s.packed - base + s.len]
                            .copy_from_slice(&obj[s.layout..s.layout + s.len]);
                    });
                });
            } else {
                for_each_segment(canon, plan, incount, extent, |s| {
                    out[s.packed..s.packed + s.len].copy_from_slice(&src[s.layout..s.layout + s.len]);
                });
            }
        }
        Lowering::Unsupported { reason, blocks } => {
            if !opts.allow_fallback {
                return Err(Error::Unsupported(reason.clone()));
            }
            let mut pos = 0;
            for j in 0..incount {
                let obj = &src[j * extent..];
                for b in blocks {
                    out[pos..pos + b.len].copy_from_slice(&obj[b.offset..b.end()]);
                    pos += b.len;
                }
            }
            debug_assert_eq!(pos, total);
        }
    }
    Ok(end)
}

/// Scatters `outcount` objects from `src` at `position` into `dst`. Bytes of
/// `dst` outside the described layout are left untouched.
pub fn unpack(src: &[u8], position: usize, ty: &CommittedType, outcount: usize, dst: &mut [u8]) -> Result<usize> {
    unpack_with(src, position, ty, outcount, dst, &PackOptions::default())
}

pub fn unpack_with(
    src: &[u8],
    position: usize,
    ty: &CommittedType,
    outcount: usize,
    dst: &mut [u8],
    opts: &PackOptions,
) -> Result<usize> {
    if ty.is_overlapping() {
        return Err(Error::OverlappingLayout);
    }
    let size = ty.size();
    let total = outcount * size;
    let end = position + total;
    check_len(end, src.len())?;
    check_len(ty.required_span(outcount), dst.len())?;
    if total == 0 {
        return Ok(end);
    }
    let extent = ty.extent();
    let input = &src[position..end];

    match ty.lowering() {
        Lowering::Strided { canon, plan } => {
            let parallel = opts.mode == ExecMode::Parallel
                && total >= opts.parallel_min_bytes
                && outcount > 1
                && ty.span() <= extent;
            if parallel {
                let geom = Geometry::new(canon, plan);
                dst.par_chunks_mut(extent)
                    .take(outcount)
                    .enumerate()
                    .for_each(|(j, obj)| {
                        let packed = &input[j * size..(j + 1) * size];
                        geom.object_segments(|s| {
                            obj[s.layout..s.layout + s.len].copy_from_slice(&packed[s.packed..s.packed + s.len]);
                        });
                    });
            } else {
                for_each_segment(canon, plan, outcount, extent, |s| {
                    dst[s.layout..s.layout + s.len].copy_from_slice(&input[s.packed..s.packed + s.len]);
                });
            }
        }
        Lowering::Unsupported { reason, blocks } => {
            if !opts.allow_fallback {
                return Err(Error::Unsupported(reason.clone()));
            }
            let mut pos = 0;
            for j in 0..outcount {
                let base = j * extent;
                for b in blocks {
                    dst[base + b.offset..base + b.end()].copy_from_slice(&input[pos..pos + b.len]);
                    pos += b.len;
                }
            }
        }
    }
    Ok(end)
}
