use std::fs;
use std::path::{Path, PathBuf};

use neurohand_core::decoder::{align_with_labels, parse_predictions_csv, predictions_to_csv, Ensemble};
use neurohand_core::dsp::Calibration;
use neurohand_core::framing::{load_stream, DeviceBank, DeviceConfig, ZeroSource};
use neurohand_core::metrics::Report;
use neurohand_core::model::{predict, train as fit, windows_from, Checkpoint, EpochLog, ModelConfig, ModelParams, TrainSpec};
use neurohand_core::pipeline::{
    bank_from_signal, measure, run as run_threaded, run_virtual, DebugSink, LatencyReport, PipelineConfig, PowerMode,
    RunOutput, Source,
};
use neurohand_core::synthgen::{
    build_dataset, default_gestures, derive_seed, labels_csv, parse_labels_csv, parse_mask, read_dataset,
    write_dataset, DatasetConfig, GestureSpec, Mode, StoredSession, FINGERS,
};

use crate::error::{AtPath, CliError};
use crate::manifest::RunManifest;
use crate::settings::Settings;
use crate::{BenchArgs, EvalArgs, RunArgs, SynthArgs, TrainArgs};

fn parse<T: std::str::FromStr<Err = neurohand_core::Error>>(s: &str) -> Result<T, CliError> {
    s.parse::<T>().map_err(|e| CliError::Usage(e.to_string()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).at(path)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).at(path)
}

fn secs_to_ns(s: f64) -> Result<u64, CliError> {
    if !(s >= 0.0) || !s.is_finite() {
        return Err(CliError::Usage(format!("duration {s} s must be a non-negative number")));
    }
    Ok((s * 1e9).round() as u64)
}

/// Named gestures from the default set, or `name=bits` entries.
fn parse_gestures(list: &str) -> Result<Vec<GestureSpec>, CliError> {
    let known = default_gestures();
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let g = match item.split_once('=') {
            Some((name, bits)) => GestureSpec::from_bits(name.trim(), bits.trim())?,
            None => known
                .iter()
                .find(|g| g.name == item)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("unknown gesture `{item}`")))?,
        };
        out.push(g);
    }
    if out.is_empty() {
        return Err(CliError::Usage("gesture list is empty".into()));
    }
    Ok(out)
}

pub fn synth(a: &SynthArgs, s: &Settings, cfg_path: Option<&Path>) -> Result<(), CliError> {
    let mut r = s.section("synth");
    let all: Vec<String> = default_gestures().into_iter().map(|g| g.name).collect();
    let gestures = parse_gestures(&r.string("gestures", a.gestures.clone(), &all.join(","))?)?;
    let sessions = r.int("sessions", a.sessions, 4)? as usize;
    let mode: Mode = parse(&r.string("mode", a.mode.clone(), "amputee")?)?;
    let seed = r.int("seed", a.seed, 42)?;
    let snr = r.float("snr_db", a.snr_db, mode.default_snr_db())?;

    let mut cfg = DatasetConfig::new(gestures, sessions, mode, seed);
    cfg.snr_db = snr;
    let split = build_dataset(&cfg)?;
    let written = write_dataset(&a.out, &split).at(&a.out)?;
    RunManifest::new("synth", cfg_path, &a.out)
        .seed("dataset", seed)
        .settings(r.used)
        .write(&a.out)?;
    println!(
        "wrote {} sessions ({} train, {} validation, {} files) to {}",
        split.train_sessions.len() + split.validation_sessions.len(),
        split.train_sessions.len(),
        split.validation_sessions.len(),
        written.len(),
        a.out.display()
    );
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

pub fn train(a: &TrainArgs, s: &Settings, cfg_path: Option<&Path>) -> Result<(), CliError> {
    let mut r = s.section("train");
    let data = read_dataset(&a.data).at(&a.data)?;
    let train_sessions: Vec<&StoredSession> = data.train().collect();
    let val_sessions: Vec<&StoredSession> = data.validation().collect();
    if train_sessions.is_empty() {
        return Err(CliError::Invalid(format!("{}: no training sessions", a.data.display())));
    }

    let (mut params, cal) = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p).at(p)?;
            let cal = match ck.calibration {
                Some(c) => c,
                None => Calibration::fit(train_sessions.iter().map(|s| &s.signal[..]))?,
            };
            (ck.params, cal)
        }
        None => {
            let kind = r.string("model", a.model.clone(), "tiny")?;
            let mut config = match kind.as_str() {
                "tiny" => ModelConfig::tiny(),
                "full" => ModelConfig::full(),
                other => return Err(CliError::Usage(format!("model `{other}`: expected tiny or full"))),
            };
            config.finger_mask = parse_mask(&r.string("fingers", a.fingers.clone(), "11111")?)?;
            config.dropout_p = r.float("dropout", a.dropout, config.dropout_p)?;
            let base = r.int("seed", a.seed, 1)?;
            let seed = r.int("init_seed", None, derive_seed(base, &[1]))?;
            let cal = Calibration::fit(train_sessions.iter().map(|s| &s.signal[..]))?;
            (ModelParams::init(config, seed)?, cal)
        }
    };
    let defaults = TrainSpec::default();
    let spec = TrainSpec {
        epochs: r.int("epochs", a.epochs, defaults.epochs as u64)? as usize,
        lr0: r.float("lr", a.lr, defaults.lr0)?,
        batch: r.int("batch", a.batch, defaults.batch as u64)? as usize,
        window_stride: r.int("window_stride", a.window_stride, defaults.window_stride as u64)? as usize,
        seed: r.int("seed", a.seed, 1)?,
        ..defaults
    };
    spec.validate()?;

    let steps = params.config.seq_len;
    let ts = windows_from(&cal, steps, train_sessions.iter().map(|s| (&s.signal[..], &s.labels[..])))?;
    let vs = if val_sessions.is_empty() {
        None
    } else {
        Some(windows_from(&cal, steps, val_sessions.iter().map(|s| (&s.signal[..], &s.labels[..])))?)
    };
    eprintln!("{} training windows, {} validation windows", ts.len(), vs.as_ref().map_or(0, |v| v.len()));
    eprintln!("{}", EpochLog::CSV_HEADER);
    let logs = fit(&mut params, &spec, &ts, vs.as_ref(), |e| eprintln!("{}", e.csv_row()))?;

    let ck = Checkpoint {
        params,
        calibration: Some(cal),
    };
    ck.save(&a.out).at(&a.out)?;
    let mut log = format!("{}\n", EpochLog::CSV_HEADER);
    for e in &logs {
        log.push_str(&e.csv_row());
        log.push('\n');
    }
    write_text(&sibling(&a.out, "train.csv"), &log)?;
    RunManifest::new("train", cfg_path, &a.out)
        .seed("train", spec.seed)
        .settings(r.used)
        .write(&a.out)?;

    if let Some(vs) = &vs {
        let probs = predict(&ck.params, vs)?;
        let truth: Vec<[bool; FINGERS]> = (0..vs.len()).map(|i| vs.sample(i).y.map(|v| v > 0.5)).collect();
        let states: Vec<[bool; FINGERS]> = probs.iter().map(|p| p.map(|v| v > 0.5)).collect();
        println!("validation, owned fingers {:?}:", ck.params.config.owned().collect::<Vec<_>>());
        print!("{}", Report::from_scores(&probs, &states, &truth)?.to_table());
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn parse_ppm(s: &str) -> Result<Vec<i32>, CliError> {
    s.split(',')
        .map(|p| p.trim().parse::<i32>().map_err(|_| CliError::Usage(format!("bad clock offset `{p}`"))))
        .collect()
}

fn summarize(out: &RunOutput) {
    let r = &out.report;
    let ms = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2} ms"));
    println!(
        "{} predictions at {:.2} Hz, lag median {} p95 {}, inference median {}",
        r.predictions(),
        r.throughput_hz(),
        ms(r.median_lag_ms()),
        ms(r.p95_lag_ms()),
        ms(r.median_infer_ms())
    );
    println!(
        "dropped {:.1} ms in {} discard and {} realign events; ledger {}",
        r.dropped_ms,
        out.discard_events.len(),
        out.realign_events.len(),
        if out.ledger.balances() { "balanced" } else { "UNBALANCED" }
    );
    if out.source_underrun {
        eprintln!("warning: source ran out before the requested duration");
    }
    if out.resyncs > 0 || out.foreign_blocks > 0 {
        eprintln!("warning: {} bytes resynchronized, {} blocks from unknown devices", out.resyncs, out.foreign_blocks);
    }
    if let Some(e) = &out.sink.last_error {
        eprintln!("warning: debug sink failed ({e}); {} records not delivered", out.sink.failed);
    }
}

pub fn run(a: &RunArgs, s: &Settings, cfg_path: Option<&Path>) -> Result<(), CliError> {
    let mut r = s.section("run");
    let power: PowerMode = parse(&r.string("power", a.power.clone(), "10W")?)?;
    let duration = secs_to_ns(r.float("duration", a.duration, 10.0)?)?;
    let threshold = r.float("threshold", a.threshold, 0.5)?;
    let sink: DebugSink = parse(&r.string("debug_sink", a.debug_sink.clone(), "none")?)?;
    let seed = r.int("seed", a.seed, 42)?;
    let virtual_clock = r.flag("virtual", a.virtual_clock)?;

    for m in &a.models {
        if !m.is_file() {
            return Err(CliError::Io(format!("{}: checkpoint not found", m.display())));
        }
    }
    let ensemble = Ensemble::load(&a.models, threshold)?;
    fs::create_dir_all(&a.out).at(&a.out)?;

    let (source, labels) = match &a.replay {
        Some(p) => {
            let bytes = load_stream(p).at(p)?;
            let labels = match &a.labels {
                Some(l) => Some(parse_labels_csv(&read_text(l)?).at(l)?),
                None => None,
            };
            (Source::replay(&bytes), labels)
        }
        None => {
            let gesture = parse_gestures(&r.string("gesture", a.gesture.clone(), "fist")?)?.remove(0);
            let mode: Mode = parse(&r.string("mode", a.mode.clone(), "amputee")?)?;
            let ppm = parse_ppm(&r.string("ppm", a.ppm.clone(), "0,0")?)?;
            let session = DatasetConfig::new(vec![gesture], 4, mode, seed).session(0, 0)?;
            let labels = session.labels();
            write_text(&a.out.join("labels.csv"), &labels_csv(&labels))?;
            (Source::Emulated(bank_from_signal(&session.signal, &ppm, seed)?), Some(labels))
        }
    };

    let mut cfg = PipelineConfig::new(power, duration);
    cfg.debug_sink = sink;
    let out = if virtual_clock {
        run_virtual(&cfg, source, &ensemble)?
    } else {
        run_threaded(&cfg, source, &ensemble)?
    };

    write_text(&a.out.join("predictions.csv"), &predictions_to_csv(&out.predictions))?;
    write_text(&a.out.join("trajectory.csv"), &out.trajectory.to_csv())?;
    write_text(&a.out.join("latency.csv"), &measure(std::slice::from_ref(&out.report)))?;
    RunManifest::new("run", cfg_path, &a.out)
        .seed("source", seed)
        .settings(r.used)
        .write(&a.out)?;
    summarize(&out);
    if let Some(labels) = labels {
        let (probs, states, truth) = align_with_labels(&out.predictions, &labels);
        if !probs.is_empty() {
            let report = Report::from_scores(&probs, &states, &truth)?;
            write_text(&a.out.join("score.csv"), &report.to_csv())?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

/// Randomly initialized tiny models splitting the fingers `m` ways; the
/// emulated compute cost does not depend on the weights.
fn bench_ensemble(m: usize, seed: u64) -> Result<Ensemble, CliError> {
    let models = (0..m)
        .map(|i| {
            let mask: [bool; FINGERS] = std::array::from_fn(|f| f.min(m - 1) == i);
            ModelParams::init(ModelConfig::tiny().with_mask(mask), derive_seed(seed, &[i as u64]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble::new(models, 0.5, None)?)
}

fn noise_source(seed: u64) -> Result<Source, CliError> {
    let mut bank = DeviceBank::new(50);
    for d in 0..2u8 {
        bank.add(DeviceConfig::new(d).noise_only(), Box::new(ZeroSource), seed)?;
    }
    Ok(Source::Emulated(bank))
}

/// Least-squares slope and R² of y against x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

pub fn bench(a: &BenchArgs, s: &Settings, cfg_path: Option<&Path>) -> Result<(), CliError> {
    let mut r = s.section("bench");
    let modes = r
        .string("modes", a.modes.clone(), "5W,10W")?
        .split(',')
        .map(|m| parse::<PowerMode>(m.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let max_models = r.int("max_models", a.max_models, 5)? as usize;
    if !(1..=5).contains(&max_models) {
        return Err(CliError::Usage(format!("max_models {max_models} outside 1..=5")));
    }
    let duration = secs_to_ns(r.float("duration", a.duration, 10.0)?)?;
    let seed = r.int("seed", a.seed, 42)?;
    let virtual_clock = r.flag("virtual", a.virtual_clock)?;

    let mut reports: Vec<LatencyReport> = Vec::new();
    for &mode in &modes {
        for m in 1..=max_models {
            let cfg = PipelineConfig::new(mode, duration);
            let ensemble = bench_ensemble(m, seed)?;
            let source = noise_source(seed)?;
            let out = if virtual_clock {
                run_virtual(&cfg, source, &ensemble)?
            } else {
                run_threaded(&cfg, source, &ensemble)?
            };
            eprintln!("{mode} × {m}: {} predictions", out.report.predictions());
            reports.push(out.report);
        }
    }
    let table = measure(&reports);
    write_text(&a.out, &table)?;
    RunManifest::new("bench", cfg_path, &a.out)
        .seed("bench", seed)
        .settings(r.used)
        .write(&a.out)?;
    print!("{table}");

    for &mode in &modes {
        let pts: Vec<(f64, f64)> = reports
            .iter()
            .filter(|r| r.power_mode == mode)
            .filter_map(|r| Some((r.model_count as f64, r.median_infer_ms()?)))
            .collect();
        if pts.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let (slope, r2) = linear_fit(&x, &y);
            println!("{mode}: inference lag {slope:.2} ms per model, R² {r2:.4}");
        }
    }
    let lag = |mode| {
        reports
            .iter()
            .find(|r| r.power_mode == mode && r.model_count == 1)
            .and_then(LatencyReport::median_lag_ms)
    };
    if let (Some(five), Some(ten)) = (lag(PowerMode::FiveW), lag(PowerMode::TenW)) {
        println!("5W / 10W median lag, one model: {:.2}", five / ten);
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let preds = parse_predictions_csv(&read_text(&a.predictions)?).at(&a.predictions)?;
    let labels = parse_labels_csv(&read_text(&a.labels)?).at(&a.labels)?;
    let (probs, states, truth) = align_with_labels(&preds, &labels);
    if probs.is_empty() {
        return Err(CliError::Invalid("no prediction falls within the label span".into()));
    }
    let report = Report::from_scores(&probs, &states, &truth)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_text(out, &report.to_csv())?;
        RunManifest::new("eval", None, out).write(out)?;
    }
    Ok(())
}
