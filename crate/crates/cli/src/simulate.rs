use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use anyhow::Context;
use aquasonde_core::sim::{inject_fault, simulate, Fault, ScenarioScript};
use aquasonde_core::wire::FRAME_LEN;

use crate::{read_input, usage};

#[derive(Debug, clap::Args)]
#[command(group(clap::ArgGroup::new("sink").required(true).args(["listen", "out"])))]
pub struct Args {
    #[arg(long)]
    scenario: PathBuf,
    /// Address to accept one device connection on, e.g. 127.0.0.1:7000.
    #[arg(long)]
    listen: Option<String>,
    /// Write the whole stream to a file instead of serving it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario's playback speed multiplier.
    #[arg(long)]
    time_scale: Option<f64>,
    /// corrupt:<offset>, drop:<start>..<end> or dup:<frame>; repeatable.
    #[arg(long = "fault", value_parser = parse_fault)]
    faults: Vec<Fault>,
}

fn parse_fault(s: &str) -> Result<Fault, String> {
    let (kind, arg) = s
        .split_once(':')
        .ok_or_else(|| format!("fault {s:?} should look like kind:argument"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("fault {s:?}: {e}"));
    match kind {
        "corrupt" => Ok(Fault::CorruptByte(num(arg)?)),
        "dup" => Ok(Fault::DuplicateFrame(num(arg)?)),
        "drop" => {
            let (a, b) = arg
                .split_once("..")
                .ok_or_else(|| format!("fault {s:?}: expected drop:<start>..<end>"))?;
            Ok(Fault::DropBytes(num(a)?..num(b)?))
        }
        _ => Err(format!("unknown fault kind {kind:?} (corrupt, drop, dup)")),
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let text = read_input(&args.scenario)?;
    let mut script =
        ScenarioScript::parse(&text).map_err(|e| usage(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        script.seed = seed;
    }
    if let Some(ts) = args.time_scale {
        script.time_scale = ts;
    }
    script
        .validate()
        .map_err(|e| usage(format!("{}: {e}", args.scenario.display())))?;

    let mut bytes = simulate(&script)?;
    for f in args.faults {
        bytes = inject_fault(&bytes, f).map_err(|e| usage(e.to_string()))?;
    }

    if let Some(out) = args.out {
        std::fs::write(&out, &bytes).with_context(|| format!("writing {}", out.display()))?;
        println!(
            "wrote {} frames ({} bytes) to {}",
            script.total_frames(),
            bytes.len(),
            out.display()
        );
        return Ok(());
    }

    let listen = args.listen.expect("clap enforces --listen or --out");
    let listener = TcpListener::bind(&listen).map_err(|e| usage(format!("cannot listen on {listen}: {e}")))?;
    // Scripts read this line to learn the port when binding to :0.
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let (mut conn, peer) = listener.accept()?;
    log::info!("device stream connected to {peer}");
    conn.set_nodelay(true)?;

    let interval = Duration::from_secs_f64(1.0 / (script.frame_rate_hz * script.time_scale));
    let started = Instant::now();
    for (i, chunk) in bytes.chunks(FRAME_LEN).enumerate() {
        let due = started + interval.mul_f64(i as f64);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        conn.write_all(chunk).context("receiver went away")?;
    }
    conn.flush()?;
    println!(
        "served {} frames of {} in {:.1} s",
        script.total_frames(),
        script.name,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
