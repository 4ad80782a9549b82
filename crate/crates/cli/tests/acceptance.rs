//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::fs;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use viderex_core::evalharness::{evaluate, quantile, synth_scenario, synth_world, Evaluation, ScenarioParams, SynthParams};
use viderex_core::imgproc::{idf, ridf_panoramic, roll_columns, GrayImage};
use viderex_core::nav::{haptic_for_diff, tone_for_diff, CalibrationMode, FeedbackCalibration, FeedbackSettings, NavSession};
use viderex_core::route::{build_memory, CaptureParams, Route, RouteMemory};
use viderex_core::store::{decode_gray, encode_pgm, load_route, read_manifest, save_route, RouteManifest};
use viderex_service::{spawn, RemoteClient, ServiceConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn noise(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn noise_u8(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
    let bytes: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
    GrayImage::from_u8(w, h, &bytes).unwrap()
}

/// Square root of the summed squared differences, divided by the pixel count.
fn idf_oracle(x: &GrayImage, y: &GrayImage) -> f64 {
    let mut sum = 0.0;
    for r in 0..x.height() {
        for c in 0..x.width() {
            let d = x.get(r, c) - y.get(r, c);
            sum += d * d;
        }
    }
    sum.sqrt() / (x.width() * x.height()) as f64
}

fn idf_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (w, h) = (rng.random_range(1..=64), rng.random_range(1..=64));
        let x = noise(&mut rng, w, h);
        let y = noise(&mut rng, w, h);
        let d = idf(&x, &y).unwrap();
        worst = worst.max((d - idf_oracle(&x, &y)).abs());
        check(d == idf(&y, &x).unwrap(), || format!("pair {i}: not symmetric"))?;
        check(idf(&x, &x).unwrap() == 0.0, || format!("pair {i}: idf(x,x) != 0"))?;
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    check(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 pairs, max deviation {worst:e}, {elapsed:.2?}"))
}

fn visual_compass_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let (w, h) = (rng.random_range(2..=360), rng.random_range(1..=20));
        let x = noise(&mut rng, w, h);
        let k = rng.random_range(0..w);
        let curve = ridf_panoramic(&roll_columns(&x, k as isize), &x, 1).unwrap();
        let inverting = (w - k) % w;
        check(curve.min_sample().diff == 0.0, || format!("panorama {i}: minimum {}", curve.min_sample().diff))?;
        check(curve.min_index() == inverting, || {
            format!("panorama {i}: minimum at shift {}, expected {inverting}", curve.min_index())
        })?;
    }
    Ok("100 panoramas, minimum 0 at the inverting shift".into())
}

fn perfect_recall() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut lengths = vec![5, 200];
    lengths.extend((0..18).map(|_| rng.random_range(5..=200)));
    let mut checked = 0;
    for &n in &lengths {
        let images: Vec<GrayImage> = (0..n).map(|_| noise_u8(&mut rng, 90, 25)).collect();
        let memory = RouteMemory::from_images("recall", images, CaptureParams::default()).unwrap();
        for i in 0..n {
            let m = memory.match_view(memory.snapshot(i)).unwrap();
            check(m.best_index == i && m.best_diff == 0.0, || {
                format!("route of {n}: frame {i} matched {} at {}", m.best_index, m.best_diff)
            })?;
            checked += 1;
        }
    }
    Ok(format!("{} routes, {checked} frames, all recalled", lengths.len()))
}

const SEEDS: std::ops::Range<u64> = 0..10;

fn synthetic_evaluations() -> Vec<Evaluation> {
    SEEDS
        .map(|seed| {
            let world = synth_world(seed, SynthParams::default()).unwrap();
            let scenario = synth_scenario(&world, &ScenarioParams::default()).unwrap();
            let memory = RouteMemory::from_route(scenario.route).unwrap();
            evaluate(&scenario.dataset, &memory).unwrap()
        })
        .collect()
}

fn widened_minima() -> (Outcome, Vec<Evaluation>) {
    let start = Instant::now();
    let evaluations = synthetic_evaluations();
    let outcome = (|| {
        let mut positions = 0;
        let mut wide = 0;
        for (seed, e) in SEEDS.zip(&evaluations) {
            for p in &e.positions {
                let at_zero = p.tests.iter().filter(|(o, _)| *o == 0.0).map(|(_, pr)| &pr.curve);
                for curve in std::iter::once(&p.on_route.curve).chain(at_zero) {
                    let min = curve.min_sample();
                    check(min.diff == 0.0 && min.angle_deg == 0.0, || {
                        format!("seed {seed} position {}: minimum {} at {}", p.route_index, min.diff, min.angle_deg)
                    })?;
                }
                positions += 1;
                if p.on_route.curve.has_wide_minimum(0.1, 3) {
                    wide += 1;
                }
            }
        }
        let elapsed = start.elapsed();
        let fraction = wide as f64 / positions as f64;
        check(fraction >= 0.8, || format!("widened minima at {wide}/{positions} positions"))?;
        check(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
        Ok(format!("{} worlds, widened minima at {wide}/{positions} positions, {elapsed:.2?}", SEEDS.end - SEEDS.start))
    })();
    (outcome, evaluations)
}

fn error_growth(evaluations: &[Evaluation]) -> Outcome {
    let offsets = ScenarioParams::default().test_offsets();
    let errors_at = |o: f64| -> Vec<f64> {
        let mut errors: Vec<f64> = evaluations
            .iter()
            .flat_map(|e| e.positions.iter())
            .flat_map(|p| p.tests.iter().filter(|(t, _)| *t == o).map(|(_, pr)| pr.error_deg))
            .collect();
        errors.sort_by(f64::total_cmp);
        errors
    };
    let medians: Vec<f64> = offsets.iter().map(|&o| quantile(&errors_at(o), 0.5)).collect();
    let means: Vec<f64> = offsets
        .iter()
        .map(|&o| {
            let e = errors_at(o);
            e.iter().sum::<f64>() / e.len() as f64
        })
        .collect();
    let report = offsets
        .iter()
        .zip(medians.iter().zip(&means))
        .map(|(o, (m, mean))| format!("{o}cm:{m} (mean {mean:.2})"))
        .collect::<Vec<_>>()
        .join(" ");
    check(medians.windows(2).all(|w| w[0] <= w[1]), || format!("medians decrease: {report}"))?;
    check(medians[0] == 0.0, || format!("median at 0cm is {}", medians[0]))?;
    check(*medians.last().unwrap() < 45.0, || format!("median at 21cm: {report}"))?;
    Ok(format!("medians {report}"))
}

fn tone_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for c in 0..20 {
        let d_min = rng.random_range(0.0..0.01);
        let d_max = d_min + rng.random_range(1e-4..0.05);
        let f_min = rng.random_range(50.0..500.0);
        let f_max = f_min + rng.random_range(1.0..3000.0);
        let threshold = rng.random_range(d_min..=d_max);
        let calib = FeedbackCalibration::new(d_min, d_max, f_min, f_max, threshold).unwrap();
        check(tone_for_diff(d_min, &calib) == f_max, || format!("calibration {c}: d_min tone"))?;
        check(tone_for_diff(d_max, &calib) == f_min, || format!("calibration {c}: d_max tone"))?;
        let span = d_max - d_min;
        let mut previous = f64::INFINITY;
        for i in 0..10_000 {
            let d = d_min - 0.1 * span + 1.2 * span * i as f64 / 9_999.0;
            let tone = tone_for_diff(d, &calib);
            check(tone <= previous, || format!("calibration {c}: tone rises at grid point {i}"))?;
            check((f_min..=f_max).contains(&tone), || format!("calibration {c}: tone {tone} out of range"))?;
            check(haptic_for_diff(d, &calib) == (d < threshold), || format!("calibration {c}: haptic at {d}"))?;
            previous = tone;
        }
    }
    Ok("20 calibrations x 10000 grid points".into())
}

/// Raw multipart upload of a route, as the sync client would send it.
fn upload_request(addr: SocketAddr, manifest: &RouteManifest, frames: &[Vec<u8>]) -> Vec<u8> {
    let boundary = "acceptance-boundary";
    let mut body = Vec::new();
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"manifest\"\r\nContent-Type: application/json\r\n\r\n")
            .as_bytes(),
    );
    body.extend_from_slice(&serde_json::to_vec(manifest).unwrap());
    for (i, f) in frames.iter().enumerate() {
        body.extend_from_slice(
            format!("\r\n--{boundary}\r\nContent-Disposition: form-data; name=\"frame\"; filename=\"frame_{i:05}.pgm\"\r\n\r\n")
                .as_bytes(),
        );
        body.extend_from_slice(f);
    }
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let mut req = format!(
        "PUT /routes/{} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: multipart/form-data; boundary={boundary}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        manifest.name,
        body.len()
    )
    .into_bytes();
    req.extend_from_slice(&body);
    req
}

fn persistence_and_atomicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let local = tempfile::tempdir().unwrap();
    let remote = tempfile::tempdir().unwrap();
    let pulled = tempfile::tempdir().unwrap();

    // Frames carry fractional intensities; storage keeps 8 bits.
    let frames: Vec<GrayImage> = (0..6).map(|_| noise(&mut rng, 24, 10)).collect();
    let route = Route::from_frames("walk", frames.clone(), CaptureParams { width: 24, height: 10, ..Default::default() }).unwrap();
    let expected: Vec<GrayImage> = frames.iter().map(GrayImage::quantized).collect();
    save_route(&route, local.path(), false).unwrap();
    let dir = local.path().join("walk");
    let loaded: Vec<GrayImage> = load_route(&dir).unwrap().snapshots().iter().map(|s| s.image.to_gray()).collect();
    check(loaded == expected, || "save/load not pixel-exact".into())?;

    let server = spawn(ServiceConfig::new(remote.path()), "127.0.0.1:0".parse().unwrap()).unwrap();
    let client = RemoteClient::new(server.url()).unwrap();
    client.push(&dir).unwrap();
    let pulled_dir = client.pull("walk", pulled.path()).unwrap();
    let via_wire: Vec<GrayImage> = load_route(&pulled_dir).unwrap().snapshots().iter().map(|s| s.image.to_gray()).collect();
    check(via_wire == expected, || "push/pull not pixel-exact".into())?;

    // Every byte of every frame file, one at a time.
    let manifest = read_manifest(&dir).unwrap();
    let originals: Vec<Vec<u8>> = manifest.frame_files.iter().map(|f| fs::read(dir.join(f)).unwrap()).collect();
    let mut corruptions = 0;
    for (f, file) in manifest.frame_files.iter().enumerate() {
        for i in 0..originals[f].len() {
            let mut bytes = originals[f].clone();
            bytes[i] ^= rng.random_range(1..=255u8);
            fs::write(dir.join(file), &bytes).unwrap();
            check(load_route(&dir).is_err(), || format!("{file} byte {i} corrupted but loaded"))?;
            let mut bundle = originals.clone();
            bundle[f] = bytes;
            check(client.push_bundle(&RouteManifest { name: "other".into(), ..manifest.clone() }, bundle).is_err(), || {
                format!("{file} byte {i} corrupted but accepted")
            })?;
            corruptions += 1;
        }
        fs::write(dir.join(file), &originals[f]).unwrap();
    }

    let manifest = RouteManifest { name: "late".into(), ..manifest };
    let request = upload_request(server.addr(), &manifest, &originals);
    let kill_points: Vec<usize> = (1..=24).map(|k| k * (request.len() - 1) / 25).collect();
    for &cut in &kill_points {
        let mut s = TcpStream::connect(server.addr()).unwrap();
        s.write_all(&request[..cut]).unwrap();
        s.shutdown(std::net::Shutdown::Both).unwrap();
        let names: Vec<String> = client.list().unwrap().into_iter().map(|e| e.name).collect();
        check(names == ["walk"], || format!("catalog {names:?} after cut at byte {cut}"))?;
    }
    std::thread::sleep(Duration::from_millis(200));
    check(client.list().unwrap().len() == 1, || "interrupted upload visible".into())?;
    let mut s = TcpStream::connect(server.addr()).unwrap();
    s.write_all(&request).unwrap();
    let mut response = String::new();
    s.read_to_string(&mut response).unwrap();
    check(response.starts_with("HTTP/1.1 201"), || format!("full upload answered {response}"))?;
    Ok(format!(
        "round trips exact, {corruptions} corruptions detected, {} kill points",
        kill_points.len()
    ))
}

fn wire_transparency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let local = tempfile::tempdir().unwrap();
    let remote = tempfile::tempdir().unwrap();
    let route = Route::from_frames(
        "long",
        (0..500).map(|_| noise_u8(&mut rng, 90, 25)).collect::<Vec<_>>(),
        CaptureParams::default(),
    )
    .unwrap();
    save_route(&route, local.path(), false).unwrap();
    let dir = local.path().join("long");
    let memory = Arc::new(build_memory(load_route(&dir).unwrap(), 90, 25).unwrap());

    let server = spawn(ServiceConfig::new(remote.path()), "127.0.0.1:0".parse().unwrap()).unwrap();
    let client = RemoteClient::new(server.url()).unwrap();
    client.push(&dir).unwrap();

    let frames: Vec<Vec<u8>> = (0..30)
        .map(|i| {
            if i % 5 == 0 {
                encode_pgm(memory.snapshot(i * 7))
            } else {
                encode_pgm(&noise_u8(&mut rng, 90, 25))
            }
        })
        .collect();
    let mut latencies = Vec::new();
    for mode in [CalibrationMode::Fixed, CalibrationMode::Running] {
        let settings = FeedbackSettings { mode, ..Default::default() };
        let mut oracle = NavSession::new(memory.clone(), settings).unwrap();
        let handle = client.create_session("long", settings).unwrap();
        for (i, bytes) in frames.iter().enumerate() {
            let start = Instant::now();
            let got = client.submit_frame(handle.session_id, bytes.clone()).unwrap();
            latencies.push(start.elapsed());
            let want = oracle.process_frame(&decode_gray(bytes, Path::new("frame")).unwrap()).unwrap();
            check(
                (got.frame_seq, got.best_index, got.diff, got.haptic) == (want.frame_seq, want.best_index, want.diff, want.haptic),
                || format!("{mode:?} frame {i}: {got:?} != {want:?}"),
            )?;
            check((got.tone_hz - want.tone_hz).abs() <= 1e-6, || format!("{mode:?} frame {i}: tone differs"))?;
        }
        client.close_session(handle.session_id).unwrap();
    }
    let worst = *latencies.iter().max().unwrap();
    latencies.sort();
    let median = latencies[latencies.len() / 2];
    check(worst < Duration::from_millis(50), || format!("worst frame latency {worst:?}"))?;
    Ok(format!("60 frames equal, latency median {median:.2?} worst {worst:.2?}"))
}

fn throughput() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let images: Vec<GrayImage> = (0..20_000).map(|_| noise_u8(&mut rng, 90, 25)).collect();
    let memory = RouteMemory::from_images("big", images, CaptureParams::default()).unwrap();
    let query = noise_u8(&mut rng, 90, 25);
    let mut times: Vec<Duration> = (0..5)
        .map(|_| {
            let start = Instant::now();
            let m = memory.match_view(&query).unwrap();
            let t = start.elapsed();
            assert_eq!(m.diffs.len(), 20_000);
            t
        })
        .collect();
    times.sort();
    let median = times[2];
    check(median < Duration::from_millis(100), || format!("median {median:?} over 5 runs"))?;
    Ok(format!("20000 snapshots, median {median:.2?} over 5 runs"))
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 idf oracle equivalence", idf_oracle_equivalence()),
        ("2 visual compass recovery", visual_compass_recovery()),
        ("3 perfect recall", perfect_recall()),
    ];
    let (wide, evaluations) = widened_minima();
    results.push(("4 widened minima at zero offset", wide));
    results.push(("5 error growth with offset", error_growth(&evaluations)));
    drop(evaluations);
    results.push(("6 tone contract", tone_contract()));
    results.push(("7 persistence and atomicity", persistence_and_atomicity()));
    results.push(("8 wire transparency", wire_transparency()));
    results.push(("9 match throughput", throughput()));

    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
