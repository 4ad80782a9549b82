use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use viderex_core::evalharness::{
    emit_plot_data, evaluate, load_dataset, sweep_angle, synth_scenario, synth_world, visible_files, write_dataset,
    ScenarioParams, SynthParams,
};
use viderex_core::imgproc::GrayImage;
use viderex_core::nav::{sweep_heading_estimate, NavSession};
use viderex_core::route::{build_memory, Route, RouteMemory};
use viderex_core::store::{decode_gray, ingest_frames, save_route, LocalStore};
use viderex_service::{RemoteClient, ServiceConfig};

use crate::args::{Command, EvalArgs, FollowArgs, RecordArgs, ServeArgs, SyncCommand, SynthArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Record(args) => record(args),
        Command::Follow(args) => follow(args, &mut io::stdout().lock()),
        Command::Eval(args) => eval(args),
        Command::Serve(args) => serve(args),
        Command::Synth(args) => synth(args),
        Command::Sync(cmd) => sync(cmd),
    }
}

fn record(args: RecordArgs) -> Result<()> {
    let params = args.resolution.params(args.stride);
    let route = ingest_frames(&args.source_dir, &args.name, args.stride, params)?;
    let memory = build_memory(route, params.width, params.height)?;
    let manifest = save_route(memory.route(), &args.store.store, args.overwrite)?;
    println!(
        "recorded {} ({} frames) in {}",
        manifest.name,
        manifest.frame_files.len(),
        args.store.store.join(&manifest.name).display()
    );
    Ok(())
}

/// Frames of a follow run with their angles.
fn labelled_frames(dir: &Path, start: f64, step: f64) -> Result<Vec<(f64, GrayImage)>> {
    let files = visible_files(dir).with_context(|| format!("cannot read {}", dir.display()))?;
    if files.is_empty() {
        bail!("no frames in {}", dir.display());
    }
    let angles: Option<Vec<f64>> = files.iter().map(|p| sweep_angle(p)).collect();
    let mut labelled: Vec<(f64, PathBuf)> = match angles {
        Some(angles) => angles.into_iter().zip(files).collect(),
        None => files
            .into_iter()
            .enumerate()
            .map(|(i, p)| (start + i as f64 * step, p))
            .collect(),
    };
    labelled.sort_by(|a, b| a.0.total_cmp(&b.0));
    labelled
        .into_iter()
        .map(|(angle, path)| Ok((angle, decode_gray(&fs::read(&path)?, &path)?)))
        .collect()
}

fn follow(args: FollowArgs, out: &mut impl Write) -> Result<()> {
    let store = LocalStore::new(&args.store.store)?;
    let route = store
        .load(&args.route)
        .with_context(|| format!("cannot load route {}", args.route))?;
    let memory = Arc::new(RouteMemory::from_route(route)?);
    let mut session = NavSession::new(memory, args.feedback.settings())?;
    let frames = labelled_frames(&args.frames_dir, args.angle_start, args.angle_step)?;

    writeln!(out, "frame_seq,angle_deg,best_index,diff,tone_hz,haptic")?;
    let mut updates = Vec::with_capacity(frames.len());
    for (angle, frame) in &frames {
        let u = session.process_frame(frame)?;
        writeln!(out, "{},{},{},{},{},{}", u.frame_seq, angle, u.best_index, u.diff, u.tone_hz, u.haptic)?;
        updates.push((*angle, u));
    }
    writeln!(out)?;
    writeln!(out, "heading_estimate_deg")?;
    writeln!(out, "{}", sweep_heading_estimate(&updates)?)?;
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let store = LocalStore::new(&args.store.store)?;
    let route = store
        .load(&args.route)
        .with_context(|| format!("cannot load route {}", args.route))?;
    let memory = RouteMemory::from_route(route)?;
    let (w, h) = memory.working_resolution();
    let dataset = load_dataset(&args.dataset_dir)?.to_resolution(w, h)?;
    let evaluation = evaluate(&dataset, &memory)?;
    let files = emit_plot_data(&evaluation, &args.out_dir)?;
    println!("probe,lateral_offset_cm,count,median_deg,q1_deg,q3_deg");
    let s = &evaluation.on_route_summary;
    println!("on_route,,{},{},{},{}", s.count, s.median, s.q1, s.q3);
    for (offset, s) in &evaluation.by_offset {
        println!("test,{offset},{},{},{},{}", s.count, s.median, s.q1, s.q3);
    }
    eprintln!("wrote {} files to {}", files.len(), args.out_dir.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        idle_timeout: Duration::from_secs(args.idle_timeout),
        ..ServiceConfig::new(&args.store.store)
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let addr = SocketAddr::new(args.bind, args.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        io::stdout().flush()?;
        viderex_service::serve(listener, config, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn synth(args: SynthArgs) -> Result<()> {
    let world = synth_world(args.seed, SynthParams::default())?;
    let scenario = synth_scenario(
        &world,
        &ScenarioParams {
            positions: args.positions,
            ..Default::default()
        },
    )?;
    let route = Route::new(args.name, scenario.route.snapshots().to_vec(), *scenario.route.params())?;
    save_route(&route, &args.store.store, false)?;
    write_dataset(&scenario.dataset, &args.dataset_dir)?;
    println!(
        "route {} ({} frames), dataset with {} positions in {}",
        route.name(),
        route.len(),
        scenario.dataset.positions().len(),
        args.dataset_dir.display()
    );
    Ok(())
}

fn sync(cmd: SyncCommand) -> Result<()> {
    match cmd {
        SyncCommand::List { remote } => {
            println!("name,created_at,frame_count");
            for e in RemoteClient::new(remote)?.list()? {
                println!("{},{},{}", e.name, e.created_at.to_rfc3339(), e.frame_count);
            }
        }
        SyncCommand::Push { name, remote, store } => {
            let dir = LocalStore::new(&store.store)?.route_dir(&name)?;
            let id = RemoteClient::new(remote)?.push(&dir)?;
            println!("{id}");
        }
        SyncCommand::Pull { name, remote, store } => {
            let dir = RemoteClient::new(remote)?.pull(&name, &store.store)?;
            println!("{}", dir.display());
        }
    }
    Ok(())
}
