//! Host measurements for `profile-gen`.

use std::hint::black_box;
use std::time::{Duration, Instant};

use anyhow::Result;
use stridepack::pack::{pack, unpack};
use stridepack::perfmodel::{synthetic_block_sizes, synthetic_object_sizes, Curve, Surface};
use stridepack::{CommittedType, MachineProfile, NamedKind, TypeDef, TypeId};

const MIN_SECONDS: f64 = 1e-9;

struct Budget {
    reps: usize,
    time: Duration,
}

/// Best observed time of `f` within the budget.
fn time_best(budget: &Budget, mut f: impl FnMut()) -> f64 {
    f();
    let started = Instant::now();
    let mut best = f64::INFINITY;
    for _ in 0..budget.reps {
        let t = Instant::now();
        f();
        best = best.min(t.elapsed().as_secs_f64());
        if started.elapsed() > budget.time {
            break;
        }
    }
    best.max(MIN_SECONDS)
}

fn axes(quick: bool) -> (Vec<f64>, Vec<f64>) {
    if quick {
        (
            (6..=16).step_by(2).map(|p| (1u64 << p) as f64).collect(),
            (0..=12).step_by(2).map(|p| (1u64 << p) as f64).collect(),
        )
    } else {
        (synthetic_object_sizes(), synthetic_block_sizes())
    }
}

/// `object / block` runs of `block` bytes at twice the block pitch.
fn strided_object(object: usize, block: usize) -> Result<CommittedType> {
    let run = TypeDef::contiguous(block, TypeDef::named(NamedKind::Byte))?;
    let def = TypeDef::hvector(object / block, 1, 2 * block, run)?;
    Ok(CommittedType::build(TypeId(0), def)?)
}

/// Host pack/unpack surfaces and host memcpy curves are measured; network
/// curves and device surfaces come from the synthetic profile.
pub fn measure(quick: bool) -> Result<MachineProfile> {
    let budget = if quick {
        Budget {
            reps: 1,
            time: Duration::ZERO,
        }
    } else {
        Budget {
            reps: 50,
            time: Duration::from_millis(5),
        }
    };
    let (objects, blocks) = axes(quick);
    let max_object = *objects.last().unwrap() as usize;
    let mut layout = vec![0u8; 2 * max_object];
    let mut packed = vec![0u8; max_object];
    for (i, b) in layout.iter_mut().enumerate() {
        *b = i as u8;
    }

    let mut pack_t = Vec::with_capacity(objects.len() * blocks.len());
    let mut unpack_t = Vec::with_capacity(objects.len() * blocks.len());
    for &o in &objects {
        for &b in &blocks {
            let (o, b) = (o as usize, (b as usize).min(o as usize));
            let ty = strided_object(o, b)?;
            pack_t.push(time_best(&budget, || {
                pack(black_box(&layout), &ty, 1, &mut packed, 0).unwrap();
            }));
            unpack_t.push(time_best(&budget, || {
                unpack(black_box(&packed), 0, &ty, 1, &mut layout).unwrap();
            }));
        }
    }

    let mut copies = Vec::with_capacity(objects.len());
    for &o in &objects {
        let n = o as usize;
        let t = time_best(&budget, || {
            let (a, b) = layout.split_at_mut(max_object);
            b[..n].copy_from_slice(black_box(&a[..n]));
        });
        copies.push((o, t));
    }

    let synthetic = MachineProfile::synthetic();
    let host_pack = Surface::new(objects.clone(), blocks.clone(), pack_t)?;
    let host_unpack = Surface::new(objects, blocks, unpack_t)?;
    let copy = Curve::new(copies)?;
    Ok(MachineProfile {
        host_pack,
        host_unpack,
        d2h: copy.clone(),
        h2d: copy,
        ..synthetic
    })
}

pub fn render(profile: &MachineProfile, quick: bool) -> String {
    let mode = if quick { "quick" } else { "full" };
    let header = format!("Generated by stridepack profile-gen ({mode} mode).");
    profile.to_text(&[
        &header,
        "Measured on this host: host-pack, host-unpack (host executor), d2h and h2d (host memcpy).",
        "Synthetic: cpu-cpu, gpu-gpu, gpu-pack, gpu-unpack.",
        "Curves: size_bytes time_seconds. Surfaces: object_bytes block_bytes time_seconds.",
    ])
}
