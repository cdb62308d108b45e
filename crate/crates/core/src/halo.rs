//! Periodic 3D halo exchange simulated in one process.
//!
//! Every rank owns an interior of `interior` gridpoints surrounded by a ghost
//! shell `radius` deep. The 26 neighbor regions (6 faces, 12 edges, 8
//! corners) are described as subarrays of the padded allocation, packed into
//! one send buffer per rank, routed to the periodic neighbors as an
//! all-to-all would, unpacked into the ghost shell and checked against the
//! values the owning ranks wrote.
//!
//! Reported times come from the performance model, not from the clock.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pack::{pack, unpack};
use crate::perfmodel::{MethodChoice, ModelQuery, PerfModel};
use crate::typemodel::{CommittedType, NamedKind, TypeDef, TypeId};

/// Bytes per gridpoint: eight 8-byte values.
pub const DEFAULT_ELEM_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaloConfig {
    pub ranks: [usize; 3],
    pub interior: [usize; 3],
    pub radius: usize,
    pub elem_size: usize,
}

impl HaloConfig {
    pub fn new(ranks: [usize; 3], interior: [usize; 3], radius: usize) -> Result<Self> {
        Self::with_elem_size(ranks, interior, radius, DEFAULT_ELEM_SIZE)
    }

    pub fn with_elem_size(ranks: [usize; 3], interior: [usize; 3], radius: usize, elem_size: usize) -> Result<Self> {
        let cfg = HaloConfig {
            ranks,
            interior,
            radius,
            elem_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ranks.contains(&0) {
            return Err(Error::invalid("rank grid dimensions must be positive"));
        }
        if self.radius == 0 {
            return Err(Error::invalid("radius must be positive"));
        }
        if self.elem_size == 0 {
            return Err(Error::invalid("element size must be positive"));
        }
        for (axis, &e) in self.interior.iter().enumerate() {
            if e < 2 * self.radius {
                return Err(Error::invalid(format!(
                    "interior extent {e} on axis {axis} is smaller than twice the radius {}",
                    self.radius
                )));
            }
        }
        let cells = self.padded().iter().try_fold(self.elem_size, |acc, &p| acc.checked_mul(p));
        if cells.is_none_or(|b| b > isize::MAX as usize) {
            return Err(Error::invalid("padded allocation too large"));
        }
        Ok(())
    }

    pub fn padded(&self) -> [usize; 3] {
        self.interior.map(|e| e + 2 * self.radius)
    }

    pub fn rank_count(&self) -> usize {
        self.ranks.iter().product()
    }

    /// Bytes of one rank's padded allocation.
    pub fn alloc_bytes(&self) -> usize {
        self.padded().iter().product::<usize>() * self.elem_size
    }

    fn rank_coords(&self, rank: usize) -> [usize; 3] {
        let [rx, ry, _] = self.ranks;
        [rank % rx, (rank / rx) % ry, rank / (rx * ry)]
    }

    fn rank_id(&self, c: [usize; 3]) -> usize {
        c[0] + self.ranks[0] * (c[1] + self.ranks[1] * c[2])
    }

    /// Periodic neighbor of `rank` in direction `dir`.
    pub fn neighbor(&self, rank: usize, dir: [i8; 3]) -> usize {
        let c = self.rank_coords(rank);
        let mut n = [0; 3];
        for a in 0..3 {
            let r = self.ranks[a] as isize;
            n[a] = (c[a] as isize + dir[a] as isize).rem_euclid(r) as usize;
        }
        self.rank_id(n)
    }
}

/// The 26 neighbor directions, x varying fastest.
pub fn directions() -> Vec<[i8; 3]> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (dx, dy, dz) != (0, 0, 0) {
                    out.push([dx, dy, dz]);
                }
            }
        }
    }
    out
}

fn opposite(dir: [i8; 3]) -> [i8; 3] {
    dir.map(|d| -d)
}

fn direction_index(dir: [i8; 3]) -> usize {
    let code = (dir[0] + 1) as usize + 3 * (dir[1] + 1) as usize + 9 * (dir[2] + 1) as usize;
    if code > 13 {
        code - 1
    } else {
        code
    }
}

/// Cell ranges (start, len) per axis of the interior cells sent towards `dir`.
pub fn send_region(cfg: &HaloConfig, dir: [i8; 3]) -> [(usize, usize); 3] {
    let r = cfg.radius;
    std::array::from_fn(|a| {
        let e = cfg.interior[a];
        match dir[a] {
            -1 => (r, r),
            0 => (r, e),
            _ => (e, r),
        }
    })
}

/// Cell ranges per axis of the ghost cells filled from `dir`.
pub fn recv_region(cfg: &HaloConfig, dir: [i8; 3]) -> [(usize, usize); 3] {
    let r = cfg.radius;
    std::array::from_fn(|a| {
        let e = cfg.interior[a];
        match dir[a] {
            -1 => (0, r),
            0 => (r, e),
            _ => (r + e, r),
        }
    })
}

fn region_type(cfg: &HaloConfig, region: [(usize, usize); 3]) -> Result<TypeDef> {
    let cell = TypeDef::contiguous(cfg.elem_size, TypeDef::named(NamedKind::Byte))?;
    TypeDef::subarray(
        3,
        &cfg.padded(),
        &region.map(|(_, len)| len),
        &region.map(|(start, _)| start),
        cell,
    )
}

/// One direction's send and receive definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct HaloTypes {
    pub dir: [i8; 3],
    pub send: TypeDef,
    pub recv: TypeDef,
}

/// The 26 send/receive definitions of one rank. Every rank of a grid has the
/// same local geometry, so the list is shared.
pub fn build_halo_types(cfg: &HaloConfig) -> Result<Vec<HaloTypes>> {
    cfg.validate()?;
    directions()
        .into_iter()
        .map(|dir| {
            Ok(HaloTypes {
                dir,
                send: region_type(cfg, send_region(cfg, dir))?,
                recv: region_type(cfg, recv_region(cfg, dir))?,
            })
        })
        .collect()
}

/// Deterministic byte stored at a cell of a rank's interior.
pub fn cell_byte(rank: usize, cell: [usize; 3], byte: usize) -> u8 {
    let mut z = (rank as u64) << 48 ^ (cell[0] as u64) << 32 ^ (cell[1] as u64) << 16 ^ cell[2] as u64;
    z = z.wrapping_add((byte as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as u8
}

/// Initial value of every ghost byte.
pub const GHOST_FILL: u8 = 0xA5;

fn cell_offset(cfg: &HaloConfig, c: [usize; 3]) -> usize {
    let p = cfg.padded();
    (c[0] + p[0] * (c[1] + p[1] * c[2])) * cfg.elem_size
}

fn for_each_cell(region: [(usize, usize); 3], mut f: impl FnMut([usize; 3])) {
    for z in region[2].0..region[2].0 + region[2].1 {
        for y in region[1].0..region[1].0 + region[1].1 {
            for x in region[0].0..region[0].0 + region[0].1 {
                f([x, y, z]);
            }
        }
    }
}

fn interior_region(cfg: &HaloConfig) -> [(usize, usize); 3] {
    cfg.interior.map(|e| (cfg.radius, e))
}

fn init_rank(cfg: &HaloConfig, rank: usize) -> Vec<u8> {
    let mut buf = vec![GHOST_FILL; cfg.alloc_bytes()];
    for_each_cell(interior_region(cfg), |c| {
        let off = cell_offset(cfg, c);
        for b in 0..cfg.elem_size {
            buf[off + b] = cell_byte(rank, c, b);
        }
    });
    buf
}

/// Checks that interior cells are untouched and every ghost cell holds the
/// owning neighbor's interior value.
fn verify_rank(cfg: &HaloConfig, rank: usize, buf: &[u8]) -> bool {
    let mut ok = true;
    for_each_cell(interior_region(cfg), |c| {
        let off = cell_offset(cfg, c);
        ok &= (0..cfg.elem_size).all(|b| buf[off + b] == cell_byte(rank, c, b));
    });
    for dir in directions() {
        let owner = cfg.neighbor(rank, dir);
        for_each_cell(recv_region(cfg, dir), |c| {
            let src: [usize; 3] =
                std::array::from_fn(|a| (c[a] as isize - dir[a] as isize * cfg.interior[a] as isize) as usize);
            let off = cell_offset(cfg, c);
            ok &= (0..cfg.elem_size).all(|b| buf[off + b] == cell_byte(owner, src, b));
        });
    }
    ok
}

/// Modeled cost of one region under the method the model picks for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionCost {
    pub method: MethodChoice,
    pub pack: f64,
    pub transfer: f64,
    pub unpack: f64,
}

/// Model query for one committed region: total bytes and contiguous run.
fn region_query(ty: &CommittedType) -> Result<ModelQuery> {
    let block = ty.canon().map(|sb| sb.block_len()).unwrap_or(ty.size());
    ModelQuery::new(ty.size() as u64, block.max(1) as u64)
}

pub fn region_cost(model: &PerfModel, ty: &CommittedType) -> Result<RegionCost> {
    let q = region_query(ty)?;
    let method = model.cached_choose(&q)?;
    let c = |name: &str| model.component(name, &q);
    Ok(match method {
        MethodChoice::Device => RegionCost {
            method,
            pack: c("gpu-pack")?,
            transfer: c("gpu-gpu")?,
            unpack: c("gpu-unpack")?,
        },
        MethodChoice::OneShot => RegionCost {
            method,
            pack: c("host-pack")?,
            transfer: c("cpu-cpu")?,
            unpack: c("host-unpack")?,
        },
        MethodChoice::Staged => RegionCost {
            method,
            pack: c("gpu-pack")?,
            transfer: c("d2h")? + c("cpu-cpu")? + c("h2d")?,
            unpack: c("gpu-unpack")?,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeReport {
    pub config: HaloConfig,
    /// Modeled seconds, maximum across ranks.
    pub pack: f64,
    pub alltoallv: f64,
    pub unpack: f64,
    pub verified: bool,
    /// Bytes sent by all ranks together.
    pub bytes_moved: usize,
    /// Regions per rank handled by each method: device, oneshot, staged.
    pub methods: [usize; 3],
}

impl ExchangeReport {
    pub fn total(&self) -> f64 {
        self.pack + self.alltoallv + self.unpack
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("phase,modeled_seconds,verification,bytes_moved\n");
        for (name, t) in [("pack", self.pack), ("alltoallv", self.alltoallv), ("unpack", self.unpack)] {
            let _ = writeln!(out, "{name},{t:e},,");
        }
        let verdict = if self.verified { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "summary,{:e},{verdict},{}", self.total(), self.bytes_moved);
        out
    }

    pub fn summary(&self) -> String {
        let c = &self.config;
        let [d, o, s] = self.methods;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} ranks ({}x{}x{}), interior {}x{}x{}, radius {}, {} B per gridpoint",
            c.rank_count(),
            c.ranks[0],
            c.ranks[1],
            c.ranks[2],
            c.interior[0],
            c.interior[1],
            c.interior[2],
            c.radius,
            c.elem_size
        );
        let _ = writeln!(out, "# regions per rank by method: device {d}, oneshot {o}, staged {s}");
        let _ = writeln!(
            out,
            "# ghost cells {} ({} bytes moved)",
            if self.verified { "match their owners" } else { "DO NOT match their owners" },
            self.bytes_moved
        );
        out
    }
}

/// Rank buffers after an exchange, with the committed region types.
#[derive(Debug, Clone)]
pub struct Exchanged {
    /// Padded allocation of every rank, indexed by rank id.
    pub buffers: Vec<Vec<u8>>,
    pub sends: Vec<Arc<CommittedType>>,
    pub recvs: Vec<Arc<CommittedType>>,
    pub bytes_moved: usize,
}

/// Initializes every rank (interior cells from [`cell_byte`], ghosts filled
/// with a constant), then packs, routes and unpacks all 26 regions.
pub fn exchange(cfg: &HaloConfig) -> Result<Exchanged> {
    let halo = build_halo_types(cfg)?;
    let dirs: Vec<[i8; 3]> = halo.iter().map(|h| h.dir).collect();
    let commit = |d: &TypeDef| CommittedType::build(TypeId(0), d.clone()).map(Arc::new);
    let sends = halo.iter().map(|h| commit(&h.send)).collect::<Result<Vec<_>>>()?;
    let recvs = halo.iter().map(|h| commit(&h.recv)).collect::<Result<Vec<_>>>()?;

    // Send segment i of every rank carries direction i; receive segment i
    // holds data arriving from direction i.
    let seg_sizes: Vec<usize> = sends.iter().map(|t| t.size()).collect();
    let mut seg_offsets = Vec::with_capacity(seg_sizes.len());
    let mut total = 0;
    for s in &seg_sizes {
        seg_offsets.push(total);
        total += s;
    }
    for (i, r) in recvs.iter().enumerate() {
        debug_assert_eq!(r.size(), seg_sizes[direction_index(opposite(dirs[i]))]);
    }

    let n = cfg.rank_count();
    let mut locals: Vec<Vec<u8>> = (0..n).into_par_iter().map(|r| init_rank(cfg, r)).collect();

    let send_bufs: Vec<Vec<u8>> = locals
        .par_iter()
        .map(|local| -> Result<Vec<u8>> {
            let mut buf = vec![0u8; total];
            for (i, ty) in sends.iter().enumerate() {
                pack(local, ty, 1, &mut buf, seg_offsets[i])?;
            }
            Ok(buf)
        })
        .collect::<Result<_>>()?;

    // Rank r's receive segment for direction i comes from neighbor r+i,
    // which sent it towards -i.
    let recv_bufs: Vec<Vec<u8>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let mut buf = vec![0u8; total];
            for (i, &dir) in dirs.iter().enumerate() {
                let src = cfg.neighbor(r, dir);
                let j = direction_index(opposite(dir));
                let (off_in, len) = (seg_offsets[j], seg_sizes[j]);
                buf[seg_offsets[i]..seg_offsets[i] + len].copy_from_slice(&send_bufs[src][off_in..off_in + len]);
            }
            buf
        })
        .collect();

    locals
        .par_iter_mut()
        .zip(&recv_bufs)
        .try_for_each(|(local, buf)| -> Result<()> {
            for (i, ty) in recvs.iter().enumerate() {
                unpack(buf, seg_offsets[i], ty, 1, local)?;
            }
            Ok(())
        })?;

    Ok(Exchanged {
        buffers: locals,
        sends,
        recvs,
        bytes_moved: total * n,
    })
}

/// Runs one full exchange on freshly initialized buffers.
pub fn run_exchange(cfg: &HaloConfig, model: &PerfModel) -> Result<ExchangeReport> {
    let ex = exchange(cfg)?;
    let verified = ex.buffers.par_iter().enumerate().all(|(r, buf)| verify_rank(cfg, r, buf));

    // All ranks share the same local geometry, so per-rank sums are equal
    // and the maximum across ranks is any one rank's sum.
    let mut pack_t = 0.0;
    let mut xfer_t = 0.0;
    let mut unpack_t = 0.0;
    let mut methods = [0usize; 3];
    for (send, recv) in ex.sends.iter().zip(&ex.recvs) {
        let s = region_cost(model, send)?;
        let r = region_cost(model, recv)?;
        pack_t += s.pack;
        xfer_t += s.transfer;
        unpack_t += r.unpack;
        methods[match s.method {
            MethodChoice::Device => 0,
            MethodChoice::OneShot => 1,
            MethodChoice::Staged => 2,
        }] += 1;
    }

    Ok(ExchangeReport {
        config: *cfg,
        pack: pack_t,
        alltoallv: xfer_t,
        unpack: unpack_t,
        verified,
        bytes_moved: ex.bytes_moved,
        methods,
    })
}
