//! Release gate. Runs every acceptance criterion in order and prints one
//! PASS/FAIL line for each; exits non-zero if any criterion fails.
//!
//! The full-scale trace check only runs when `ZKPOT_LUST_FCD` names an FCD
//! export (XML or CSV, optionally with `ZKPOT_LUST_BEGIN_S`/`ZKPOT_LUST_END_S`).

mod common;

use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::msgs::{cpm, target, verifier};
use common::replay::replay;
use common::scenes::random_walk;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zkpot::sim::{
    aggregate_proof_rate, fit_log, load_fcd, run_fcd_stream, run_simulation, synth_scenario,
    FcdOptions, FcdReader, Formation, Scenario, SimOutput, SimParams, TickMetrics, DEFAULT_SEED,
};
use zkpot::wire::{
    decode_cpm, decode_proof_entry, encode_cpm, encode_proof_entry, prefix_of, MAX_PROOFS,
};
use zkpot::{
    derive_public_key, make_proof, match_proofs, Cpm, NumberPlate, PerceivedObject, ProofEntry,
    Pseudonym, SharedSecret, WireError, WorkFactor,
};

const WF: WorkFactor = WorkFactor::ONE;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn secret(rng: &mut ChaCha8Rng) -> SharedSecret {
    SharedSecret::new(&Pseudonym::random(rng), &NumberPlate::random(rng))
}

fn completeness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut ok = 0;
    for _ in 0..1000 {
        let ss = secret(&mut rng);
        let (a, b) = (Pseudonym::random(&mut rng), Pseudonym::random(&mut rng));
        ensure(a != b, "provers collided")?;
        let verdict = match_proofs(
            (&a, &make_proof(&ss, &a, WF)),
            (&b, &make_proof(&ss, &b, WF)),
        );
        if verdict == Ok(true) {
            ok += 1;
        }
    }
    ensure(ok == 1000, format!("{ok}/1000 pairs matched"))?;
    Ok("1000/1000 pairs matched".into())
}

fn soundness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut matches = 0;
    for _ in 0..10_000 {
        let (x, y) = (secret(&mut rng), secret(&mut rng));
        if x == y {
            continue;
        }
        let (a, b) = (Pseudonym::random(&mut rng), Pseudonym::random(&mut rng));
        if match_proofs((&a, &make_proof(&x, &a, WF)), (&b, &make_proof(&y, &b, WF))) != Ok(false) {
            matches += 1;
        }
    }
    ensure(matches == 0, format!("{matches} false matches"))?;
    Ok("0 matches in 10000 pairs".into())
}

fn wire_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sender = Pseudonym::random(&mut rng);
    let mut entries = Vec::new();
    for i in 0..1000 {
        let (id, ss) = target(&mut rng);
        let e = ProofEntry {
            object_id: (i % 256) as u8,
            prefix: prefix_of(&id),
            sig: make_proof(&ss, &sender, WF),
        };
        let bytes = encode_proof_entry(&e).map_err(|e| e.to_string())?;
        ensure(bytes.len() == 70, format!("entry of {} bytes", bytes.len()))?;
        ensure(decode_proof_entry(&bytes) == Ok(e), "entry round trip")?;
        entries.push(e);
    }
    for chunk in 0..=MAX_PROOFS {
        let objects: Vec<PerceivedObject> = (0..chunk as u8)
            .map(|id| PerceivedObject {
                object_id: id,
                x_cm: rng.gen(),
                y_cm: rng.gen(),
                speed_cms: rng.gen(),
                heading_cdeg: rng.gen_range(0..36_000),
            })
            .collect();
        let proofs = entries[..chunk]
            .iter()
            .enumerate()
            .map(|(i, e)| ProofEntry {
                object_id: i as u8,
                ..*e
            })
            .collect();
        let m = Cpm {
            sender,
            timestamp_ms: rng.gen(),
            objects,
            proofs,
        };
        let bytes = encode_cpm(&m).map_err(|e| e.to_string())?;
        ensure(bytes.len() == 27 + chunk * (13 + 70), "cpm length")?;
        ensure(decode_cpm(&bytes) == Ok(m), "cpm round trip")?;
    }
    let nine = Cpm {
        sender,
        timestamp_ms: 0,
        objects: (0..9u8).map(common::msgs::object).collect(),
        proofs: entries[..9]
            .iter()
            .enumerate()
            .map(|(i, e)| ProofEntry {
                object_id: i as u8,
                ..*e
            })
            .collect(),
    };
    ensure(
        encode_cpm(&nine) == Err(WireError::TooManyProofs(9)),
        "9 proofs encoded",
    )?;
    let mut eight = nine.clone();
    eight.proofs.truncate(8);
    let mut bytes = encode_cpm(&eight).map_err(|e| e.to_string())?;
    bytes[27 - 1 + 9 * 13] = 9;
    bytes.extend_from_slice(&encode_proof_entry(&nine.proofs[8]).map_err(|e| e.to_string())?);
    ensure(
        decode_cpm(&bytes) == Err(WireError::TooManyProofs(9)),
        "9 proofs decoded",
    )?;
    Ok("1000 entries of 70 bytes, round trips exact, 9 proofs rejected".into())
}

fn replay_immunity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut confirmations = 0;
    for i in 0..1000u64 {
        let mut v = verifier(&mut rng);
        let t = target(&mut rng);
        let honest = cpm(Pseudonym::random(&mut rng), std::slice::from_ref(&t), i);
        let mut stolen = honest.clone();
        stolen.sender = Pseudonym::random(&mut rng);
        confirmations += v.ingest(&honest, i).events.len();
        confirmations += v.ingest(&stolen, i + 1).events.len();
        if v.is_confirmed(&derive_public_key(&t.1, WF)) {
            confirmations += 1;
        }
    }
    ensure(confirmations == 0, format!("{confirmations} confirmations"))?;
    Ok("0 confirmations in 1000 replays".into())
}

fn spam_quota() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut v = verifier(&mut rng);
    let spammer = Pseudonym::random(&mut rng);
    let targets: Vec<_> = (0..12).map(|_| target(&mut rng)).collect();
    for (i, t) in targets.iter().enumerate() {
        v.ingest(&cpm(spammer, std::slice::from_ref(t), i as u64), i as u64);
    }
    let stored = v.record_count();
    let dropped = v.diagnostics().quota_dropped;
    ensure(
        stored == 8 && dropped == 4,
        format!("{stored} stored, {dropped} dropped"),
    )?;
    let helper = Pseudonym::random(&mut rng);
    let events = v.ingest(&cpm(helper, &[targets[0].clone()], 20), 20).events;
    ensure(events.len() == 1, "match did not confirm")?;
    ensure(v.unmatched_count(&spammer) == 7, "headroom not restored")?;
    v.ingest(&cpm(spammer, &[target(&mut rng)], 21), 21);
    ensure(
        v.diagnostics().quota_dropped == 4,
        "proof after match was dropped",
    )?;
    ensure(
        v.record_count() == 10,
        format!("{} records", v.record_count()),
    )?;
    Ok("8 stored, 4 dropped, headroom restored after a match".into())
}

fn same_as_oracle(s: &Scenario, p: &SimParams) -> Result<usize, String> {
    let out = run_simulation(s, p).map_err(|e| e.to_string())?;
    let want = replay(s, p);
    ensure(out.metrics.len() == want.metrics.len(), "tick count")?;
    for (got, exp) in out.metrics.iter().zip(&want.metrics) {
        ensure(
            got == exp,
            format!("tick {} ms: {got:?} vs {exp:?}", exp.time_ms),
        )?;
    }
    ensure(out.events.len() == want.events.len(), "event count")?;
    for (got, exp) in out.events.iter().zip(&want.events) {
        let same = got.time_ms == exp.time_ms
            && got.station == exp.station
            && got.key.as_bytes().as_slice() == exp.key.as_slice()
            && got.provers == exp.provers;
        ensure(same, format!("event at {} ms differs", exp.time_ms))?;
    }
    Ok(out.metrics.len())
}

fn oracle_equivalence() -> Check {
    let p = SimParams::default();
    let grid =
        synth_scenario(Formation::Grid, 200, 10.0, 50, DEFAULT_SEED).map_err(|e| e.to_string())?;
    same_as_oracle(&grid, &p)?;
    let walk = random_walk(200, 50, 250.0, 6);
    same_as_oracle(&walk, &p)?;
    let ring = synth_scenario(Formation::Ring, 120, 6.0, 30, 2).map_err(|e| e.to_string())?;
    same_as_oracle(&ring, &p)?;
    Ok("grid 200x50, random walk 200x50, ring 120x30 identical".into())
}

const FIG2_XML: &str = include_str!("data/fig2.fcd.xml");

fn fig2() -> Check {
    let s = load_fcd(FIG2_XML.as_bytes(), FcdOptions::default()).map_err(|e| e.to_string())?;
    let p = SimParams::default();
    let out = run_simulation(&s, &p).map_err(|e| e.to_string())?;
    let idx = |k: &str| s.vehicles.iter().position(|v| v.key == k).unwrap();
    let ego = s.vehicles[idx("ego")].pseudonym;
    let first = out
        .events
        .iter()
        .find(|e| e.station == ego)
        .ok_or("ego never confirms")?;
    ensure(
        first.time_ms == s.ticks[0].time_ms + p.comm_delay_ms,
        "ego confirmed late",
    )?;
    let mut both = vec![
        s.vehicles[idx("A")].pseudonym,
        s.vehicles[idx("B")].pseudonym,
    ];
    both.sort();
    ensure(first.provers == both, "wrong provers")?;
    ensure(
        out.event_log() == include_str!("data/fig2.events.log"),
        "event log differs from golden",
    )?;
    ensure(
        out.metrics_csv() == include_str!("data/fig2.metrics.csv"),
        "metrics differ from golden",
    )?;
    Ok(format!(
        "ego confirmed at {} ms; golden log identical",
        first.time_ms
    ))
}

fn density_trend() -> Check {
    let p = SimParams::default();
    let mut points = Vec::new();
    for n in [10, 25, 50, 100] {
        let s = synth_scenario(Formation::Grid, n, 10.0, 30, DEFAULT_SEED)
            .map_err(|e| e.to_string())?;
        let out = run_simulation(&s, &p).map_err(|e| e.to_string())?;
        points.push((n as f64, aggregate_proof_rate(&out.metrics)));
    }
    let rates: Vec<String> = points.iter().map(|(n, r)| format!("{n}:{r:.4}")).collect();
    ensure(
        points.windows(2).all(|w| w[1].1 > w[0].1),
        format!("not increasing: {}", rates.join(" ")),
    )?;
    let fit = fit_log(&points).map_err(|e| e.to_string())?;
    ensure(fit.a > 0.0, format!("a = {}", fit.a))?;
    Ok(format!(
        "{}; a = {:.4}, b = {:.4}",
        rates.join(" "),
        fit.a,
        fit.b
    ))
}

fn fit_exactness() -> Check {
    let (a, b) = (0.1843, -0.7966);
    let xs: Vec<f64> = (1..=60).map(|i| 10.0 * i as f64).collect();
    let clean: Vec<(f64, f64)> = xs.iter().map(|&x| (x, a * x.ln() + b)).collect();
    let fit = fit_log(&clean).map_err(|e| e.to_string())?;
    ensure(
        (fit.a - a).abs() < 1e-9 && (fit.b - b).abs() < 1e-9,
        format!("noiseless {fit:?}"),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let noisy: Vec<(f64, f64)> = clean
        .iter()
        .map(|&(x, y)| (x, y + rng.gen_range(-0.01..=0.01)))
        .collect();
    let rough = fit_log(&noisy).map_err(|e| e.to_string())?;
    ensure(
        (rough.a - a).abs() <= 0.02 && (rough.b - b).abs() <= 0.02,
        format!("noisy {rough:?}"),
    )?;
    Ok(format!(
        "noiseless error {:.1e}/{:.1e}; noisy a = {:.4}, b = {:.4}",
        (fit.a - a).abs(),
        (fit.b - b).abs(),
        rough.a,
        rough.b
    ))
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn full_scale() -> Outcome {
    let Ok(path) = std::env::var("ZKPOT_LUST_FCD") else {
        return Outcome::NotRun("set ZKPOT_LUST_FCD to a full-day FCD export".into());
    };
    match full_scale_run(&path) {
        Ok(s) => Outcome::Pass(s),
        Err(e) => Outcome::Fail(e),
    }
}

/// Peaks of observed traffic near 08:20, 13:25 and 18:30, each searched
/// within an hour either side.
fn full_scale_run(path: &str) -> Check {
    let opts = FcdOptions {
        begin_ms: Some(env_u64("ZKPOT_LUST_BEGIN_S").unwrap_or(4 * 3600) * 1000),
        end_ms: Some(env_u64("ZKPOT_LUST_END_S").unwrap_or(24 * 3600) * 1000),
        ..FcdOptions::default()
    };
    let file = File::open(path).map_err(|e| format!("{path}: {e}"))?;
    let reader = FcdReader::new(BufReader::new(file), opts).map_err(|e| e.to_string())?;
    let mut rows: Vec<TickMetrics> = Vec::new();
    run_fcd_stream(reader, &SimParams::default(), |r| {
        rows.push(r.metrics);
        Ok(())
    })
    .map_err(|e| e.to_string())?;

    let with_proofs: Vec<f64> = rows
        .iter()
        .filter(|m| m.proofs_generated > 0)
        .map(|m| m.confirmed_proof_rate)
        .collect();
    let avg = with_proofs.iter().sum::<f64>() / with_proofs.len().max(1) as f64;
    let mut notes = vec![format!("average cp rate {:.2}%", 100.0 * avg)];
    let mut ok = (avg - 0.7026).abs() <= 0.05;
    for (centre_s, want) in [
        (8 * 3600 + 20 * 60, 1356.0),
        (13 * 3600 + 25 * 60, 774.0),
        (18 * 3600 + 30 * 60, 1321.0),
    ] {
        let lo = (centre_s - 3600) as u64 * 1000;
        let hi = (centre_s + 3600) as u64 * 1000;
        let peak = rows
            .iter()
            .filter(|m| (lo..=hi).contains(&m.time_ms))
            .max_by_key(|m| (m.observed_vehicles, std::cmp::Reverse(m.time_ms)));
        match peak {
            Some(m) => {
                let got = m.confirmed_vehicles as f64;
                ok &= (got - want).abs() <= 0.15 * want;
                notes.push(format!(
                    "peak at {} s: {} confirmed (want {want})",
                    m.time_ms / 1000,
                    m.confirmed_vehicles
                ));
            }
            None => {
                ok = false;
                notes.push(format!("no ticks near {centre_s} s"));
            }
        }
    }
    let summary = notes.join("; ");
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn simulate_bytes(s: &Scenario, p: &SimParams, threads: usize) -> Result<(String, String), String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    let out: SimOutput = pool
        .install(|| run_simulation(s, p))
        .map_err(|e| e.to_string())?;
    Ok((out.metrics_csv(), out.event_log()))
}

fn determinism() -> Check {
    let p = SimParams::default();
    let s = random_walk(120, 20, 300.0, 12);
    let first = simulate_bytes(&s, &p, 1)?;
    let second = simulate_bytes(&s, &p, 1)?;
    let wide = simulate_bytes(&s, &p, 8)?;
    ensure(first == second, "two runs differ")?;
    ensure(first == wide, "thread count changes output")?;
    ensure(!first.1.is_empty(), "no events to compare")?;
    Ok(format!(
        "{} CSV bytes and {} log bytes identical across runs and thread counts",
        first.0.len(),
        first.1.len()
    ))
}

fn run(f: fn() -> Check) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => Outcome::Pass(s),
        Ok(Err(e)) => Outcome::Fail(e),
        Err(_) => Outcome::Fail("panicked".into()),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("completeness", || run(completeness)),
        ("soundness", || run(soundness)),
        ("wire exactness", || run(wire_exactness)),
        ("replay immunity", || run(replay_immunity)),
        ("spam quota", || run(spam_quota)),
        ("oracle equivalence", || run(oracle_equivalence)),
        ("occluded ego scenario", || run(fig2)),
        ("density trend", || run(density_trend)),
        ("log fit exactness", || run(fit_exactness)),
        ("full-scale trace", full_scale),
        ("determinism", || run(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::NotRun(d) => ("NOT RUN", d),
        };
        println!(
            "criterion {:>2} {tag:<7} {name}: {detail} ({secs:.1}s)",
            i + 1
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
