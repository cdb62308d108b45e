//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;

use stridepack::canon::{dense_folding, simplify, sort_streams, stream_elision, stream_flatten};
use stridepack::halo::{cell_byte, exchange, run_exchange, HaloConfig};
use stridepack::ir::translate;
use stridepack::pack::{enumerate_blocks, flatten_oracle, pack_with, unpack_with, BlockList};
use stridepack::perfmodel::{synthetic_block_sizes, synthetic_object_sizes};
use stridepack::plan::to_strided_block;
use stridepack::{
    CommittedType, ExecMode, MachineProfile, MethodChoice, ModelQuery, PackOptions, PerfModel, StridedBlock, TypeId,
    TypeNode,
};

use common::{construction_zoo, corpus, cuboid_listings, described_mask, random_bytes, random_def, rng};

type Outcome = Result<String, String>;

type Pass = fn(TypeNode) -> (TypeNode, bool);
type Criterion = fn() -> Outcome;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const CORPUS_SEED: u64 = 0x5EED_0001;

fn construction_equivalence() -> Outcome {
    let t = Instant::now();
    let zoo = construction_zoo();
    ensure(zoo.len() >= 14, || format!("only {} constructions", zoo.len()))?;
    let expected = |class: &str| match class {
        "row" => StridedBlock::new(0, vec![400], vec![1]).unwrap(),
        "plane" => StridedBlock::new(0, vec![400, 13], vec![1, 256]).unwrap(),
        _ => StridedBlock::new(0, vec![400, 13, 47], vec![1, 256, 131072]).unwrap(),
    };
    for (class, label, def) in &zoo {
        let ty = CommittedType::build(TypeId(0), def.clone()).map_err(|e| format!("{label}: {e}"))?;
        let sb = ty.canon().ok_or_else(|| format!("{label}: no strided form"))?;
        ensure(*sb == expected(class), || format!("{class} {label}: got {sb}"))?;
        ensure(enumerate_blocks(sb) == flatten_oracle(def), || format!("{label}: oracle mismatch"))?;
    }
    let cuboid = expected("cuboid");
    for def in cuboid_listings() {
        let ty = CommittedType::build(TypeId(0), def.clone()).map_err(|e| e.to_string())?;
        ensure(ty.canon() == Some(&cuboid), || format!("{def}: {:?}", ty.canon()))?;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("{} constructions in 3 classes, 3 cuboid listings exact, {secs:.3} s", zoo.len()))
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let defs = corpus(CORPUS_SEED, 1000);
    let mut overlapping = 0;
    for (i, def) in defs.iter().enumerate() {
        let node = simplify(translate(def)).map_err(|e| format!("def {i} {def}: {e}"))?;
        let sb = to_strided_block(&node).map_err(|e| format!("def {i} {def}: {e}"))?;
        let got = enumerate_blocks(&sb);
        let want = flatten_oracle(def);
        ensure(got == want, || format!("def {i} {def}: {sb}"))?;
        overlapping += want.overlap as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.3} s"))?;
    Ok(format!("1000 defs ({overlapping} overlapping) match exactly, {secs:.3} s"))
}

fn pass_soundness() -> Outcome {
    let defs = corpus(CORPUS_SEED, 1000);
    let passes: [(&str, Pass); 4] = [
        ("dense folding", dense_folding),
        ("stream elision", stream_elision),
        ("stream flattening", stream_flatten),
        ("sorting", sort_streams),
    ];
    let mut rewrites = 0usize;
    for (i, def) in defs.iter().enumerate() {
        let oracle = flatten_oracle(def);
        let mut node = translate(def);
        loop {
            let mut changed = false;
            for (name, pass) in passes {
                let (next, c) = pass(node);
                ensure(BlockList::normalize(next.blocks()) == oracle, || {
                    format!("def {i} {def}: {name} changed the byte set")
                })?;
                changed |= c;
                rewrites += c as usize;
                node = next;
            }
            if !changed {
                break;
            }
        }
        let once = simplify(translate(def)).map_err(|e| e.to_string())?;
        ensure(BlockList::normalize(once.blocks()) == oracle, || format!("def {i}: simplify"))?;
        let twice = simplify(once.clone()).map_err(|e| e.to_string())?;
        ensure(twice == once, || format!("def {i} {def}: simplify not idempotent"))?;
    }
    Ok(format!("1000 defs, {rewrites} rewrites checked, simplify idempotent"))
}

fn round_trip() -> Outcome {
    let mut r = rng(0x5EED_0004);
    let parallel = PackOptions {
        mode: ExecMode::Parallel,
        parallel_min_bytes: 0,
        ..PackOptions::default()
    };
    let mut done = 0;
    let mut bytes = 0usize;
    while done < 500 {
        let def = random_def(&mut r, 4);
        let ty = CommittedType::build(TypeId(0), def.clone()).map_err(|e| e.to_string())?;
        if ty.is_overlapping() {
            continue;
        }
        let count = r.gen_range(1..=3);
        let span = ty.required_span(count);
        let src = random_bytes(&mut r, span);
        let mut packed = vec![0u8; count * ty.size()];
        pack_with(&src, &ty, count, &mut packed, 0, &PackOptions::serial()).map_err(|e| e.to_string())?;
        let mut packed_par = vec![0u8; packed.len()];
        pack_with(&src, &ty, count, &mut packed_par, 0, &parallel).map_err(|e| e.to_string())?;
        ensure(packed == packed_par, || format!("{def}: parallel pack differs"))?;

        let mask = described_mask(&flatten_oracle(&def).blocks, count, ty.extent(), span);
        let sentinel: u8 = r.gen();
        let mut serial_out = Vec::new();
        for opts in [PackOptions::serial(), parallel] {
            let mut dst = vec![sentinel; span];
            unpack_with(&packed, 0, &ty, count, &mut dst, &opts).map_err(|e| e.to_string())?;
            for i in 0..span {
                let want = if mask[i] { src[i] } else { sentinel };
                ensure(dst[i] == want, || format!("{def}: byte {i} after unpack ({:?})", opts.mode))?;
            }
            if opts.mode == ExecMode::Serial {
                serial_out = dst;
            } else {
                ensure(dst == serial_out, || format!("{def}: parallel unpack differs"))?;
            }
        }
        bytes += packed.len();
        done += 1;
    }
    Ok(format!("500 overlap-free defs, {bytes} packed bytes, parallel == serial"))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<u64> {
    (0..n)
        .map(|i| (lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).round() as u64)
        .collect()
}

/// Argmin of the three sums built directly from the profile samples.
fn reference_choice(p: &MachineProfile, o: u64, b: u64) -> MethodChoice {
    let (o, b) = (o as f64, b as f64);
    let c = |name: &str| p.curve(name).unwrap().interp(o).unwrap();
    let s = |name: &str| p.surface(name).unwrap().interp(o, b).unwrap();
    let device = s("gpu-pack") + c("gpu-gpu") + s("gpu-unpack");
    let oneshot = s("host-pack") + c("cpu-cpu") + s("host-unpack");
    let staged = s("gpu-pack") + c("d2h") + c("cpu-cpu") + c("h2d") + s("gpu-unpack");
    if device <= oneshot && device <= staged {
        MethodChoice::Device
    } else if oneshot <= staged {
        MethodChoice::OneShot
    } else {
        MethodChoice::Staged
    }
}

fn model_queries() -> Vec<ModelQuery> {
    let objects = log_grid(64.0, 4.0 * 1024.0 * 1024.0, 20);
    let blocks = log_grid(1.0, 4096.0, 20);
    let mut out = Vec::new();
    for &o in &objects {
        for &b in &blocks {
            out.push(ModelQuery::new(o, b.min(o)).unwrap());
        }
    }
    out
}

fn model_correctness() -> Outcome {
    let profile = MachineProfile::shipped();
    let model = PerfModel::new(profile.clone());
    let queries = model_queries();
    let mut tally = [0usize; 3];
    for q in &queries {
        let got = model.choose_method(q).map_err(|e| e.to_string())?;
        let want = reference_choice(&profile, q.object_size, q.block_size);
        ensure(got == want, || format!("{q:?}: {got} vs {want}"))?;
        ensure(got != MethodChoice::Staged, || format!("{q:?}: staged selected"))?;
        tally[got as usize] += 1;
    }
    for &o in &synthetic_object_sizes() {
        for &b in &synthetic_block_sizes() {
            let q = ModelQuery::new(o as u64, (b as u64).min(o as u64)).unwrap();
            let got = model.choose_method(&q).map_err(|e| e.to_string())?;
            ensure(got != MethodChoice::Staged, || format!("{q:?}: staged at a sample"))?;
        }
    }
    for k in [0.5, 3.0] {
        let scaled = PerfModel::new(profile.scaled(k));
        for q in &queries {
            let a = model.choose_method(q).map_err(|e| e.to_string())?;
            let b = scaled.choose_method(q).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("x{k} flips {q:?}: {a} -> {b}"))?;
        }
    }
    Ok(format!(
        "400 queries: oneshot {}, device {}, staged {}; x0.5 and x3 unchanged",
        tally[MethodChoice::OneShot as usize],
        tally[MethodChoice::Device as usize],
        tally[MethodChoice::Staged as usize]
    ))
}

fn crossover() -> Outcome {
    let model = PerfModel::new(MachineProfile::shipped());
    let queries = model_queries();
    // Largest object size below which every block size picks one-shot.
    let mut objects: Vec<u64> = queries.iter().map(|q| q.object_size).collect();
    objects.dedup();
    let mut threshold = None;
    for &o in &objects {
        let all_oneshot = queries
            .iter()
            .filter(|q| q.object_size == o)
            .all(|q| model.choose_method(q).unwrap() == MethodChoice::OneShot);
        if !all_oneshot {
            break;
        }
        threshold = Some(o);
    }
    let threshold = threshold.ok_or("smallest objects do not choose one-shot")?;
    let device_q = ModelQuery::new(4 << 20, 16).unwrap();
    let device = model.choose_method(&device_q).map_err(|e| e.to_string())?;
    ensure(device == MethodChoice::Device, || format!("4 MiB / 16 B chose {device}"))?;
    let device_cells = queries
        .iter()
        .filter(|q| model.choose_method(q).unwrap() == MethodChoice::Device)
        .count();
    Ok(format!(
        "one-shot for every block size up to {threshold} B objects; device at 4 MiB / 16 B ({device_cells} device cells)"
    ))
}

/// Expected content of one padded cell byte after the exchange.
fn expected_byte(cfg: &HaloConfig, rank: usize, cell: [usize; 3], byte: usize) -> u8 {
    let [rx, ry, rz] = cfg.ranks;
    let coords = [rank % rx, (rank / rx) % ry, rank / (rx * ry)];
    let r = cfg.radius;
    let mut owner = [0usize; 3];
    let mut src = [0usize; 3];
    for a in 0..3 {
        let e = cfg.interior[a];
        let n = [rx, ry, rz][a];
        let (shift, local) = if cell[a] < r {
            (n - 1, cell[a] + e)
        } else if cell[a] >= r + e {
            (1, cell[a] - e)
        } else {
            (0, cell[a])
        };
        owner[a] = (coords[a] + shift) % n;
        src[a] = local;
    }
    let owner_id = owner[0] + rx * (owner[1] + ry * owner[2]);
    cell_byte(owner_id, src, byte)
}

fn halo_exchange() -> Outcome {
    let t = Instant::now();
    let model = PerfModel::new(MachineProfile::shipped());
    let mut times = Vec::new();
    for n in [1usize, 2, 3] {
        let cfg = HaloConfig::new([n; 3], [16; 3], 3).map_err(|e| e.to_string())?;
        let ex = exchange(&cfg).map_err(|e| e.to_string())?;
        let p = cfg.padded();
        for (rank, buf) in ex.buffers.iter().enumerate() {
            for z in 0..p[2] {
                for y in 0..p[1] {
                    for x in 0..p[0] {
                        let base = (x + p[0] * (y + p[1] * z)) * cfg.elem_size;
                        for b in 0..cfg.elem_size {
                            let want = expected_byte(&cfg, rank, [x, y, z], b);
                            ensure(buf[base + b] == want, || {
                                format!("{n}^3 ranks: rank {rank} cell ({x},{y},{z}) byte {b}")
                            })?;
                        }
                    }
                }
            }
        }
        let rep = run_exchange(&cfg, &model).map_err(|e| e.to_string())?;
        ensure(rep.verified, || format!("{n}^3 ranks: built-in verification failed"))?;
        times.push((rep.pack, rep.unpack));
    }
    ensure(times.iter().all(|&t| t == times[0]), || format!("pack/unpack times differ: {times:?}"))?;
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.3} s"))?;
    Ok(format!(
        "1^3, 2^3, 3^3 ranks exact; modeled pack {:.3e} s, unpack {:.3e} s at every size; {secs:.3} s",
        times[0].0, times[0].1
    ))
}

fn caching() -> Outcome {
    let model = PerfModel::new(MachineProfile::shipped());
    let mut r = rng(0x5EED_0008);
    for _ in 0..10_000 {
        let o = r.gen_range(1..=8u64 << 20);
        let b = r.gen_range(1..=o.min(8192));
        let q = ModelQuery::new(o, b).unwrap();
        let cached = model.cached_choose(&q).map_err(|e| e.to_string())?;
        let fresh = model.choose_method(&q).map_err(|e| e.to_string())?;
        ensure(cached == fresh, || format!("{q:?}: cached {cached} vs {fresh}"))?;
        let again = model.cached_choose(&q).map_err(|e| e.to_string())?;
        ensure(again == fresh, || format!("{q:?}: repeated lookup changed"))?;
    }

    let bench = PerfModel::new(MachineProfile::shipped());
    let queries = &model_queries()[..256];
    for q in queries {
        bench.cached_choose(q).unwrap();
    }
    let reps = 200;
    let mut sink = 0usize;
    let t = Instant::now();
    for _ in 0..reps {
        for q in queries {
            sink += bench.choose_method(std::hint::black_box(q)).unwrap() as usize;
        }
    }
    let cold = t.elapsed().as_secs_f64();
    let t = Instant::now();
    for _ in 0..reps {
        for q in queries {
            sink += bench.cached_choose(std::hint::black_box(q)).unwrap() as usize;
        }
    }
    let warm = t.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    let n = (reps * queries.len()) as f64;
    let speedup = cold / warm;
    ensure(speedup >= 10.0, || format!("warm speedup only {speedup:.1}x"))?;
    Ok(format!(
        "10000 queries agree; cold {:.0} ns, warm {:.0} ns per query ({speedup:.1}x)",
        cold / n * 1e9,
        warm / n * 1e9
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("construction equivalence", construction_equivalence),
        ("oracle equivalence", oracle_equivalence),
        ("pass soundness and idempotence", pass_soundness),
        ("pack/unpack round trip", round_trip),
        ("model correctness", model_correctness),
        ("qualitative crossover", crossover),
        ("halo exchange", halo_exchange),
        ("caching", caching),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
