use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stridepack::desc::parse_description;
use stridepack::halo::{run_exchange, HaloConfig, DEFAULT_ELEM_SIZE};
use stridepack::pack::{flatten_oracle, pack, unpack};
use stridepack::{CommittedType, Lowering, MachineProfile, ModelQuery, PerfModel, TypeId};

mod profile_gen;

/// Strided datatype engine: canonicalize, pack and model transfers.
#[derive(Parser)]
#[command(name = "stridepack", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical strided block and pack plan of a description file.
    Canon { file: PathBuf },
    /// Print the normalized block list, one `offset length` pair per line.
    Flatten { file: PathBuf },
    /// Gather the described bytes of INPUT into OUTPUT.
    Pack(PackArgs),
    /// Scatter packed INPUT into OUTPUT; existing OUTPUT bytes outside the layout are kept.
    Unpack(PackArgs),
    /// Pick a transfer method for one object.
    Choose {
        #[arg(long)]
        object_bytes: u64,
        #[arg(long)]
        block_bytes: u64,
        /// Profile file; the shipped synthetic profile when omitted.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Measure host pack and copy timings and write a profile.
    ProfileGen {
        #[arg(long)]
        out: PathBuf,
        /// Coarse axes and a single repetition per point.
        #[arg(long)]
        quick: bool,
    },
    /// Simulate a periodic 3D halo exchange and print a CSV report.
    Halo {
        #[arg(long, value_parser = parse_triple, default_value = "2,2,2")]
        ranks: [usize; 3],
        #[arg(long, value_parser = parse_triple, default_value = "16,16,16")]
        interior: [usize; 3],
        #[arg(long, default_value_t = 3)]
        radius: usize,
        /// Bytes per gridpoint.
        #[arg(long, default_value_t = DEFAULT_ELEM_SIZE)]
        elem_size: usize,
        #[arg(long)]
        profile: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PackArgs {
    file: PathBuf,
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

fn parse_triple(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b, c] => {
            let p = |x: &str| x.parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
            Ok([p(a)?, p(b)?, p(c)?])
        }
        _ => Err(format!("expected x,y,z, got {s:?}")),
    }
}

fn load_type(file: &Path) -> Result<CommittedType> {
    let text = fs::read_to_string(file).with_context(|| format!("cannot read {}", file.display()))?;
    let desc = parse_description(&text).with_context(|| format!("{}", file.display()))?;
    Ok(CommittedType::build(TypeId(0), desc.committed().clone())?)
}

fn load_profile(path: Option<&Path>) -> Result<MachineProfile> {
    match path {
        Some(p) => Ok(MachineProfile::load(p)?),
        None => Ok(MachineProfile::shipped()),
    }
}

fn cmd_canon(file: &Path) -> Result<ExitCode> {
    let ty = load_type(file)?;
    match ty.lowering() {
        Lowering::Strided { canon, plan } => {
            println!("{canon}");
            println!("{plan}");
            Ok(ExitCode::SUCCESS)
        }
        Lowering::Unsupported { reason, blocks } => {
            println!("blocks {}", blocks.len());
            println!("# no strided form: {reason}");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_flatten(file: &Path) -> Result<ExitCode> {
    let ty = load_type(file)?;
    let list = flatten_oracle(ty.def());
    let mut out = String::new();
    for b in &list.blocks {
        out.push_str(&format!("{} {}\n", b.offset, b.len));
    }
    if list.overlap {
        out.push_str("# overlap\n");
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_pack(args: &PackArgs) -> Result<ExitCode> {
    let ty = load_type(&args.file)?;
    let src = fs::read(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let mut dst = vec![0u8; args.count * ty.size()];
    pack(&src, &ty, args.count, &mut dst, 0)?;
    fs::write(&args.output, &dst).with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_unpack(args: &PackArgs) -> Result<ExitCode> {
    let ty = load_type(&args.file)?;
    let src = fs::read(&args.input).with_context(|| format!("cannot read {}", args.input.display()))?;
    let mut dst = if args.output.exists() {
        fs::read(&args.output).with_context(|| format!("cannot read {}", args.output.display()))?
    } else {
        Vec::new()
    };
    let need = if args.count == 0 { 0 } else { ty.required_span(args.count) };
    if dst.len() < need {
        dst.resize(need, 0);
    }
    unpack(&src, 0, &ty, args.count, &mut dst)?;
    fs::write(&args.output, &dst).with_context(|| format!("cannot write {}", args.output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_choose(object_bytes: u64, block_bytes: u64, profile: Option<&Path>) -> Result<ExitCode> {
    let model = PerfModel::new(load_profile(profile)?);
    let q = ModelQuery::new(object_bytes, block_bytes)?;
    let times = model.times(&q)?;
    println!("{}", times.best());
    println!(
        "t_device={:e} t_oneshot={:e} t_staged={:e}",
        times.device, times.oneshot, times.staged
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_halo(cfg: HaloConfig, profile: Option<&Path>) -> Result<ExitCode> {
    let model = PerfModel::new(load_profile(profile)?);
    let report = run_exchange(&cfg, &model)?;
    print!("{}", report.csv());
    print!("{}", report.summary());
    if !report.verified {
        bail!("halo verification failed");
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Command::Canon { file } => cmd_canon(&file),
        Command::Flatten { file } => cmd_flatten(&file),
        Command::Pack(args) => cmd_pack(&args),
        Command::Unpack(args) => cmd_unpack(&args),
        Command::Choose {
            object_bytes,
            block_bytes,
            profile,
        } => cmd_choose(object_bytes, block_bytes, profile.as_deref()),
        Command::ProfileGen { out, quick } => {
            let profile = profile_gen::measure(quick)?;
            fs::write(&out, profile_gen::render(&profile, quick))
                .with_context(|| format!("cannot write {}", out.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Halo {
            ranks,
            interior,
            radius,
            elem_size,
            profile,
        } => cmd_halo(
            HaloConfig::with_elem_size(ranks, interior, radius, elem_size)?,
            profile.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
