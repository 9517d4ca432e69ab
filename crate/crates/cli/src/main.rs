//! Command-line front end: scenario runs, the nonce-wrap table, offline
//! linker evaluation against recorded frame logs, and derivation
//! conformance vectors.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use remac_core::adversary::{
    anonymity_sets, link_pn, link_sn, link_timing, nonce_collision_prune, score_linkage, Boundary,
};
use remac_core::sim::{
    observations_from_log, parse_config, read_frame_log, run_scenario, truth_from_log, wrap_table,
    write_metrics_csv, write_wrap_csv, RunOptions,
};
use remac_core::vectors;

#[derive(Parser)]
#[command(
    name = "remac",
    about = "Runtime MAC re-randomization simulator and analysis tools"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file; writes frames.jsonl and metrics.csv.
    Run {
        /// Scenario configuration file.
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Emit the nonce-wrap table (CSV on stdout).
    WrapTable {
        /// Average frame length in bits.
        #[arg(long)]
        frame_bits: u64,
        /// Channel bit rate in bits per second.
        #[arg(long)]
        bitrate: u64,
        /// Sweep start, seconds.
        #[arg(long, default_value_t = 1)]
        t_min: u64,
        /// Sweep end, seconds.
        #[arg(long, default_value_t = 86_400)]
        t_max: u64,
        /// Explicit comma-separated interval list; overrides the sweep.
        #[arg(long, value_delimiter = ',')]
        t_list: Option<Vec<u64>>,
    },
    /// Replay a linker attack over a recorded frame log.
    Link {
        /// Frame log (JSON lines) as captured by `run`.
        log: PathBuf,
        /// Attack: timing | sn | pn | nonce-prune.
        #[arg(long)]
        attack: String,
        /// Log carrying the ground-truth sidecar (may be the same file).
        #[arg(long)]
        truth: PathBuf,
        /// Linker window in microseconds; default is half the observed
        /// boundary spacing.
        #[arg(long)]
        window_us: Option<u64>,
    },
    /// Emit or check derivation conformance vectors.
    Vectors {
        /// Write vectors to this file ("-" for stdout).
        #[arg(long, conflicts_with = "check")]
        emit: Option<PathBuf>,
        /// Check vectors from this file.
        #[arg(long)]
        check: Option<PathBuf>,
        /// Random vectors to generate in addition to the known answers.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        // A reader that stopped listening (e.g. `remac ... | head`) is not
        // an error worth reporting.
        if let Some(ioe) = e.downcast_ref::<std::io::Error>() {
            if ioe.kind() == std::io::ErrorKind::BrokenPipe {
                return;
            }
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Run { config, out } => cmd_run(&config, &out),
        Cmd::WrapTable {
            frame_bits,
            bitrate,
            t_min,
            t_max,
            t_list,
        } => cmd_wrap_table(frame_bits, bitrate, t_min, t_max, t_list),
        Cmd::Link {
            log,
            attack,
            truth,
            window_us,
        } => cmd_link(&log, &attack, &truth, window_us),
        Cmd::Vectors {
            emit,
            check,
            count,
            seed,
        } => cmd_vectors(emit, check, count, seed),
    }
}

fn cmd_run(config_path: &PathBuf, out_dir: &PathBuf) -> Result<()> {
    let text = fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let cfg = parse_config(&text)?;
    fs::create_dir_all(out_dir)?;

    let frames_path = out_dir.join("frames.jsonl");
    let mut frames = BufWriter::new(
        fs::File::create(&frames_path)
            .with_context(|| format!("creating {}", frames_path.display()))?,
    );
    let keep_observations = !cfg.adversaries.is_empty();
    let out = run_scenario(
        &cfg,
        RunOptions {
            keep_observations,
            frame_writer: Some(&mut frames),
            ..Default::default()
        },
    )?;
    frames.flush()?;

    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics = BufWriter::new(fs::File::create(&metrics_path)?);
    write_metrics_csv(&out.metrics, &mut metrics)?;
    metrics.flush()?;

    let c = &out.counters;
    println!(
        "frames  sent={} delivered={} retried={} dropped={}",
        c.frames_sent, c.frames_delivered, c.frames_retried, c.frames_dropped
    );
    println!(
        "drops   retry={} addr_mismatch={} stale={} anomalous_base={} fcs={}",
        c.drop_retry_exhausted, c.drop_addr_mismatch, c.drop_stale, c.drop_anomalous_base,
        c.rx_fcs_drops
    );
    println!(
        "acks={} boundaries={} rotations={} expired={} nonce_reuse={}",
        c.acks, c.boundary_events, c.rotations, c.expired_stations, c.nonce_reuse
    );
    for (name, score) in [
        ("timing", &out.scores.timing),
        ("sn", &out.scores.sn),
        ("pn", &out.scores.pn),
    ] {
        if let Some(s) = score {
            let (mean, se) = s.mean_and_stderr();
            println!(
                "linker {name}: accuracy={:.4} per-boundary mean={:.4} stderr={:.4}",
                s.accuracy, mean, se
            );
        }
    }
    if let Some(report) = &out.scores.anonymity {
        if let Some(min) = report.min_set_size() {
            println!(
                "anonymity: min set size {min} over {} boundaries",
                report.boundaries.len()
            );
        }
    }
    println!(
        "wrote {} and {}",
        frames_path.display(),
        metrics_path.display()
    );
    Ok(())
}

fn sweep(t_min: u64, t_max: u64) -> Vec<u64> {
    // Log-spaced 1/2/5 steps, clipped to the range ends.
    let start = t_min.max(1);
    let mut out = vec![start];
    let mut decade = 1u64;
    loop {
        for mult in [1u64, 2, 5] {
            let t = mult.saturating_mul(decade);
            if t > start && t < t_max {
                out.push(t);
            }
        }
        if decade > t_max {
            break;
        }
        match decade.checked_mul(10) {
            Some(d) => decade = d,
            None => break,
        }
    }
    if t_max > start {
        out.push(t_max);
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn cmd_wrap_table(
    frame_bits: u64,
    bitrate: u64,
    t_min: u64,
    t_max: u64,
    t_list: Option<Vec<u64>>,
) -> Result<()> {
    let intervals = t_list.unwrap_or_else(|| sweep(t_min, t_max));
    let rows = wrap_table(frame_bits, bitrate, &intervals)?;
    let mut stdout = std::io::stdout().lock();
    write_wrap_csv(&rows, &mut stdout)?;
    Ok(())
}

fn cmd_link(
    log_path: &PathBuf,
    attack: &str,
    truth_path: &PathBuf,
    window_us: Option<u64>,
) -> Result<()> {
    let entries = read_frame_log(fs::File::open(log_path)?)?;
    let observations = observations_from_log(&entries);
    let truth_entries = if truth_path == log_path {
        entries
    } else {
        read_frame_log(fs::File::open(truth_path)?)?
    };
    let truth = truth_from_log(&truth_entries);

    let boundaries: Vec<Boundary> = {
        let mut secs: Vec<u64> = truth.iter().map(|t| t.boundary).collect();
        secs.sort_unstable();
        secs.dedup();
        secs.into_iter()
            .map(|s| Boundary {
                index: s,
                t: s * 1_000_000,
            })
            .collect()
    };
    // Boundary keys come from first-appearance seconds, so two keys from
    // the same rotation can sit 1 s apart; the widest gap is the one that
    // tracks the real interval length.
    let window = window_us.unwrap_or_else(|| {
        boundaries
            .windows(2)
            .map(|w| w[1].t - w[0].t)
            .max()
            .map(|gap| gap / 2)
            .unwrap_or(15_000_000)
    });

    let mut out = std::io::stdout().lock();
    match attack {
        "timing" | "sn" | "pn" => {
            let hyp = match attack {
                "timing" => link_timing(&observations, window),
                "sn" => link_sn(&observations, window),
                _ => link_pn(&observations, window),
            };
            let score = score_linkage(&truth, &hyp);
            let (mean, se) = score.mean_and_stderr();
            writeln!(
                out,
                "attack={attack} links={} truth={} accuracy={:.4} mean={:.4} stderr={:.4}",
                hyp.links.len(),
                truth.len(),
                score.accuracy,
                mean,
                se
            )?;
            for b in &score.per_boundary {
                writeln!(out, "boundary {}: {}/{}", b.boundary, b.correct, b.total)?;
            }
        }
        "nonce-prune" | "nonce_prune" => {
            let report = nonce_collision_prune(&observations, &boundaries, window);
            let plain = anonymity_sets(&observations, &boundaries, window);
            writeln!(out, "boundary,old_addr,candidates,candidates_after_prune")?;
            for (p, q) in plain.boundaries.iter().zip(&report.boundaries) {
                for (&(addr, n), &(_, m)) in p.sets.iter().zip(&q.sets) {
                    writeln!(out, "{},{},{},{}", p.index, addr, n, m)?;
                }
            }
        }
        other => bail!("unknown attack {other:?} (expected timing|sn|pn|nonce-prune)"),
    }
    Ok(())
}

fn cmd_vectors(
    emit: Option<PathBuf>,
    check: Option<PathBuf>,
    count: usize,
    seed: u64,
) -> Result<()> {
    match (emit, check) {
        (Some(path), None) => {
            let text = vectors::write_vectors(&vectors::generate_vectors(seed, count));
            if path.as_os_str() == "-" {
                print!("{text}");
            } else {
                fs::write(&path, text)?;
                println!("wrote {} vectors to {}", count + 3, path.display());
            }
            Ok(())
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(&path)?;
            let vecs = vectors::read_vectors(&text)?;
            let n = vectors::check_vectors(&vecs)?;
            println!("{n} vectors ok");
            Ok(())
        }
        _ => bail!("pass exactly one of --emit or --check"),
    }
}
