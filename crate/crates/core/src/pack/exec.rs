//! Host executor that walks a [`PackPlan`]'s grid the way a device kernel
//! would: each thread row of a block moves one span of `word`-sized elements.

use crate::plan::{CountStrategy, PackPlan, StridedBlock};

/// One contiguous copy between the object layout and the packed stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    /// Byte offset in the strided layout.
    pub layout: usize,
    /// Byte offset in the packed stream.
    pub packed: usize,
    pub len: usize,
}

/// Precomputed addressing for one strided block under one plan.
#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    word: usize,
    start: usize,
    run: usize,
    ext: [usize; 3],
    block: [usize; 3],
    grid: [usize; 3],
    row_stride: usize,
    plane_stride: usize,
    outer_counts: Vec<usize>,
    outer_strides: Vec<usize>,
    strategy: CountStrategy,
}

impl Geometry {
    pub(crate) fn new(sb: &StridedBlock, plan: &PackPlan) -> Self {
        let s = sb.strides();
        let c = sb.counts();
        Geometry {
            word: plan.word,
            start: sb.start(),
            run: c[0],
            ext: PackPlan::logical_extents(sb, plan.word),
            block: plan.block_dims,
            grid: plan.grid_dims,
            row_stride: s.get(1).copied().unwrap_or(0),
            plane_stride: s.get(2).copied().unwrap_or(0),
            outer_counts: c.iter().skip(3).copied().collect(),
            outer_strides: s.iter().skip(3).copied().collect(),
            strategy: plan.count_strategy,
        }
    }

    /// Packed bytes of one dimension-0/1 plane.
    pub(crate) fn plane_bytes(&self) -> usize {
        self.run * self.ext[1]
    }

    /// Planes per object: dimension 2 times every dimension above it.
    pub(crate) fn planes(&self) -> usize {
        if self.run == 0 {
            return 0;
        }
        self.ext[2] * self.outer_counts.iter().product::<usize>()
    }

    /// Layout offset of plane `p` of one object.
    fn plane_base(&self, p: usize) -> usize {
        let z = p % self.ext[2];
        let mut rest = p / self.ext[2];
        let mut base = self.start + z * self.plane_stride;
        for (c, s) in self.outer_counts.iter().zip(&self.outer_strides) {
            base += (rest % c) * s;
            rest /= c;
        }
        base
    }

    /// Segments of plane `p`, offsets relative to the object base and to the
    /// object's first packed byte.
    pub(crate) fn plane_segments(&self, p: usize, mut f: impl FnMut(Segment)) {
        let layout_base = self.plane_base(p);
        let packed_base = p * self.plane_bytes();
        let [bx, by, _] = self.block;
        let [gx, gy, _] = self.grid;
        let [ex, ey, _] = self.ext;
        for block_y in 0..gy {
            for block_x in 0..gx {
                let x0 = block_x * bx;
                let x1 = (x0 + bx).min(ex);
                if x0 >= x1 {
                    continue;
                }
                for ty in 0..by {
                    let y = block_y * by + ty;
                    if y >= ey {
                        break;
                    }
                    f(Segment {
                        layout: layout_base + x0 * self.word + y * self.row_stride,
                        packed: packed_base + x0 * self.word + y * self.run,
                        len: (x1 - x0) * self.word,
                    });
                }
            }
        }
    }

    /// All segments of one object, in grid order.
    pub(crate) fn object_segments(&self, mut f: impl FnMut(Segment)) {
        if self.planes() == 0 {
            return;
        }
        let [_, _, bz] = self.block;
        let [_, _, gz] = self.grid;
        let outer: usize = self.outer_counts.iter().product();
        for o in 0..outer {
            for block_z in 0..gz {
                for tz in 0..bz {
                    let z = block_z * bz + tz;
                    if z >= self.ext[2] {
                        break;
                    }
                    self.plane_segments(z + o * self.ext[2], &mut f);
                }
            }
        }
    }
}

/// Every segment moved when `count` objects are processed, with absolute
/// offsets (objects `extent` bytes apart in the layout, `size` bytes apart
/// in the packed stream).
///
/// Two-dimensional plans take the object index as the grid Z coordinate;
/// deeper ones replay the whole grid for each object.
pub fn for_each_segment(sb: &StridedBlock, plan: &PackPlan, count: usize, extent: usize, mut f: impl FnMut(Segment)) {
    let geom = Geometry::new(sb, plan);
    let size = sb.size();
    if geom.planes() == 0 {
        return;
    }
    for j in 0..count {
        let mut shifted = |s: Segment| {
            f(Segment {
                layout: s.layout + j * extent,
                packed: s.packed + j * size,
                len: s.len,
            })
        };
        match geom.strategy {
            // Dimension 2 is absent, so the object index is the grid Z coordinate.
            CountStrategy::GridZ => geom.plane_segments(0, &mut shifted),
            CountStrategy::Iterate => geom.object_segments(&mut shifted),
        }
    }
}
