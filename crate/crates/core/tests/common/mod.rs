#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stridepack::pack::{flatten_oracle, Block};
use stridepack::{NamedKind, TypeDef};

pub const MAX_SIZE: usize = 1 << 20;
pub const MAX_EXTENT: usize = 4 << 20;
pub const MAX_DIM: usize = 64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn named(rng: &mut impl Rng) -> TypeDef {
    let kinds = [NamedKind::Byte, NamedKind::Int, NamedKind::Float, NamedKind::Double];
    TypeDef::named(*kinds.choose(rng).unwrap())
}

fn count(rng: &mut impl Rng) -> usize {
    match rng.gen_range(0..20) {
        0 => 0,
        1 => rng.gen_range(9..=MAX_DIM),
        _ => rng.gen_range(1..=8),
    }
}

fn node(rng: &mut impl Rng, depth: usize) -> Option<TypeDef> {
    if depth == 0 || rng.gen_bool(0.2) {
        return Some(named(rng));
    }
    let inner = node(rng, depth - 1)?;
    let ie = inner.extent().max(1);
    let def = match rng.gen_range(0..4) {
        0 => TypeDef::contiguous(count(rng), inner),
        1 => {
            let c = count(rng);
            let l = rng.gen_range(1..=4);
            let s = match rng.gen_range(0..4) {
                0 => l,
                1 => l + rng.gen_range(1..=4),
                2 => rng.gen_range(1..=2 * l),
                _ => rng.gen_range(1..=MAX_DIM),
            };
            TypeDef::vector(c, l, s, inner)
        }
        2 => {
            let c = count(rng);
            let l = rng.gen_range(1..=4);
            let s = match rng.gen_range(0..5) {
                0 => l * ie,
                1 => l * ie + rng.gen_range(1..=16),
                2 => rng.gen_range(1..=2 * l * ie),
                3 => ie * rng.gen_range(1..=8),
                _ => rng.gen_range(1..=4096),
            };
            TypeDef::hvector(c, l, s, inner)
        }
        _ => {
            let nd = rng.gen_range(1..=3);
            let sizes: Vec<usize> = (0..nd).map(|_| rng.gen_range(1..=6)).collect();
            let subsizes: Vec<usize> = sizes.iter().map(|&s| rng.gen_range(1..=s)).collect();
            let offsets: Vec<usize> = sizes
                .iter()
                .zip(&subsizes)
                .map(|(&s, &sub)| rng.gen_range(0..=s - sub))
                .collect();
            TypeDef::subarray(nd, &sizes, &subsizes, &offsets, inner)
        }
    };
    let def = def.ok()?;
    (def.size() <= MAX_SIZE && def.extent() <= MAX_EXTENT).then_some(def)
}

/// A random valid definition of nesting depth at most `max_depth`, with
/// every count at most 64, size at most 1 MiB and extent at most 4 MiB.
pub fn random_def(rng: &mut impl Rng, max_depth: usize) -> TypeDef {
    loop {
        if let Some(def) = node(rng, max_depth) {
            if oracle_span(&def) <= MAX_EXTENT {
                return def;
            }
        }
    }
}

pub fn corpus(seed: u64, n: usize) -> Vec<TypeDef> {
    let mut r = rng(seed);
    (0..n).map(|_| random_def(&mut r, 4)).collect()
}

pub fn oracle_span(def: &TypeDef) -> usize {
    flatten_oracle(def).blocks.last().map_or(0, Block::end)
}

/// Marks every byte described by `count` objects laid out `extent` apart.
pub fn described_mask(blocks: &[Block], count: usize, extent: usize, len: usize) -> Vec<bool> {
    let mut mask = vec![false; len];
    for j in 0..count {
        for b in blocks {
            for m in &mut mask[j * extent + b.offset..j * extent + b.end()] {
                *m = true;
            }
        }
    }
    mask
}

pub fn random_bytes(rng: &mut impl Rng, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill(&mut v[..]);
    v
}

/// The row/plane/cuboid constructions of the strided-object example, in
/// bytes: 256-byte row pitch, 512 rows per plane, 100 floats (400 bytes)
/// per row, 13 rows, 47 planes. Returned as (class, label, definition).
pub fn construction_zoo() -> Vec<(&'static str, String, TypeDef)> {
    let byte = || TypeDef::named(NamedKind::Byte);
    let float = || TypeDef::named(NamedKind::Float);
    let (a0, a1, a2) = (256usize, 512usize, 1024usize);
    let (e0, e1, e2) = (100usize, 13usize, 47usize);

    let rows = vec![
        TypeDef::contiguous(e0, float()).unwrap(),
        TypeDef::contiguous(e0 * 4, byte()).unwrap(),
        TypeDef::vector(1, e0, 1, float()).unwrap(),
        TypeDef::vector(e0, 4, 4, byte()).unwrap(),
        TypeDef::hvector(e0 * 4, 1, 1, byte()).unwrap(),
    ];
    let mut planes = vec![
        TypeDef::vector(e1, e0, a0 / 4, float()).unwrap(),
        TypeDef::vector(e1, e0 * 4, a0, byte()).unwrap(),
        TypeDef::subarray(2, &[a0 / 4, a1], &[e0, e1], &[0, 0], float()).unwrap(),
        TypeDef::subarray(2, &[a0, a1], &[e0 * 4, e1], &[0, 0], byte()).unwrap(),
    ];
    for row in &rows {
        planes.push(TypeDef::hvector(e1, 1, a0, row.clone()).unwrap());
    }
    let mut cuboids: Vec<TypeDef> = planes
        .iter()
        .map(|p| TypeDef::hvector(e2, 1, a0 * a1, p.clone()).unwrap())
        .collect();
    cuboids.push(TypeDef::subarray(3, &[a0 / 4, a1, a2], &[e0, e1, e2], &[0, 0, 0], float()).unwrap());
    cuboids.push(TypeDef::subarray(3, &[a0, a1, a2], &[e0 * 4, e1, e2], &[0, 0, 0], byte()).unwrap());

    let mut out = Vec::new();
    for (class, defs) in [("row", rows), ("plane", planes), ("cuboid", cuboids)] {
        for d in defs {
            out.push((class, d.to_string(), d));
        }
    }
    out
}

/// The three listings that build the cuboid: one subarray, an hvector of a
/// vector, and an hvector of an hvector of a row.
pub fn cuboid_listings() -> [TypeDef; 3] {
    let byte = || TypeDef::named(NamedKind::Byte);
    let float = || TypeDef::named(NamedKind::Float);
    [
        TypeDef::subarray(3, &[256, 512, 1024], &[400, 13, 47], &[0, 0, 0], byte()).unwrap(),
        TypeDef::hvector(47, 1, 131072, TypeDef::vector(13, 100, 64, float()).unwrap()).unwrap(),
        TypeDef::hvector(
            47,
            1,
            131072,
            TypeDef::hvector(13, 1, 256, TypeDef::contiguous(400, byte()).unwrap()).unwrap(),
        )
        .unwrap(),
    ]
}
