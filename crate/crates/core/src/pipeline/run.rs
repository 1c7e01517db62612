use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::queue::{DiscardEvent, RawQueue};
use super::report::{LatencyReport, PipelineLedger};
use super::sink::{DebugWriter, SinkStats};
use super::source::Source;
use super::{PipelineConfig, Stall};
use crate::decoder::{Ensemble, Prediction};
use crate::dsp::{FeatureVector, FeatureWindow, FrontEnd};
use crate::error::{Error, Result};
use crate::framing::{AlignedChunk, Aligner, DecodeEvent, RealignEvent, StreamDecoder, TimedBlock, SAMPLE_PERIOD_NS};
use crate::handctl::{encode_command, HandEmulator, Trajectory};

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: LatencyReport,
    pub predictions: Vec<Prediction>,
    pub discard_events: Vec<DiscardEvent>,
    pub realign_events: Vec<RealignEvent>,
    pub ledger: PipelineLedger,
    pub trajectory: Trajectory,
    pub sink: SinkStats,
    /// Bytes skipped while resynchronizing device streams.
    pub resyncs: usize,
    /// Blocks from devices the aligner does not know.
    pub foreign_blocks: usize,
    /// The source ran dry before the requested duration.
    pub source_underrun: bool,
}

struct Acquisition {
    decoders: BTreeMap<u8, StreamDecoder>,
    aligner: Aligner,
    link_latency_ns: u64,
    resyncs: usize,
    foreign: usize,
    last_emit_ns: u64,
}

impl Acquisition {
    fn new(cfg: &PipelineConfig, ids: &[u8]) -> Result<Self> {
        Ok(Self {
            decoders: BTreeMap::new(),
            aligner: Aligner::new(ids, cfg.max_realign_ms)?,
            link_latency_ns: cfg.link_latency_ns,
            resyncs: 0,
            foreign: 0,
            last_emit_ns: 0,
        })
    }

    fn arrival_ns(&self, b: &TimedBlock) -> u64 {
        b.emit_ns + self.link_latency_ns
    }

    fn ingest(&mut self, b: &TimedBlock) -> Vec<AlignedChunk> {
        self.last_emit_ns = self.last_emit_ns.max(b.emit_ns);
        let dec = self.decoders.entry(b.device_id).or_default();
        for ev in dec.push(&b.bytes, b.acq_ns) {
            match ev {
                DecodeEvent::Block(raw) => {
                    if self.aligner.push(&raw).is_err() {
                        self.foreign += 1;
                    }
                }
                DecodeEvent::Resync { skipped } => self.resyncs += skipped,
            }
        }
        self.aligner.poll()
    }
}

struct Preprocess {
    front: FrontEnd,
    chunk_ns: u64,
    vector_ns: u64,
}

impl Preprocess {
    fn new(cfg: &PipelineConfig, ensemble: &Ensemble, channels: usize) -> Result<Self> {
        let front = match &ensemble.calibration {
            Some(cal) if cal.channels() == channels => cal.front_end()?,
            Some(cal) => {
                return Err(Error::Config(format!(
                    "calibration for {} channels, source delivers {channels}",
                    cal.channels()
                )))
            }
            None => FrontEnd::with_calibration(channels, None, None)?,
        };
        if front.feature_dim() != ensemble.input_channels() {
            return Err(Error::Config(format!(
                "{channels} channels give {} features, models take {}",
                front.feature_dim(),
                ensemble.input_channels()
            )));
        }
        Ok(Self {
            front,
            chunk_ns: cfg.scaled(cfg.costs.chunk_ns),
            vector_ns: cfg.scaled(cfg.costs.vector_ns),
        })
    }

    /// Features of one chunk and the emulated cost of producing them.
    fn process(&mut self, chunk: &AlignedChunk) -> Result<(Vec<FeatureVector>, u64)> {
        let v = self.front.process_chunk(chunk)?;
        let cost = self.chunk_ns + self.vector_ns * v.len() as u64;
        Ok((v, cost))
    }
}

struct Decode<'a> {
    ensemble: &'a Ensemble,
    cost_ns: u64,
    hand: HandEmulator,
    trajectory: Trajectory,
    debug: DebugWriter,
    preds: Vec<Prediction>,
    infer_ns: Vec<u64>,
}

impl<'a> Decode<'a> {
    fn new(cfg: &PipelineConfig, ensemble: &'a Ensemble) -> Result<Self> {
        Ok(Self {
            ensemble,
            cost_ns: cfg.scaled(cfg.costs.model_ns) * ensemble.model_count() as u64,
            hand: HandEmulator::new(cfg.hand_travel_s)?,
            trajectory: Trajectory::default(),
            debug: DebugWriter::open(&cfg.debug_sink),
            preds: Vec::new(),
            infer_ns: Vec::new(),
        })
    }

    fn emit(&mut self, pred: Prediction, started_ns: u64) -> Result<()> {
        let dt = match self.preds.last() {
            Some(prev) if pred.produced_ns > prev.produced_ns => (pred.produced_ns - prev.produced_ns) as f64 / 1e9,
            _ => 0.02,
        };
        self.hand.step_frame(&encode_command(&pred), dt)?;
        self.trajectory.record(&self.hand);
        self.debug.send(&pred);
        self.infer_ns.push(pred.produced_ns.saturating_sub(started_ns));
        self.preds.push(pred);
        Ok(())
    }
}

struct Tally {
    aligned: u64,
    processed: u64,
    events: Vec<DiscardEvent>,
}

impl Tally {
    fn new() -> Self {
        Self {
            aligned: 0,
            processed: 0,
            events: Vec::new(),
        }
    }
}

fn finish(
    cfg: &PipelineConfig,
    acq: Acquisition,
    queue: &RawQueue,
    tally: Tally,
    dec: Decode<'_>,
) -> RunOutput {
    let discarded: u64 = tally.events.iter().filter(|e| !e.overflow).map(|e| e.samples).sum();
    let realign_events = acq.aligner.realign_events().to_vec();
    let realign_ms: f64 = realign_events.iter().map(RealignEvent::dropped_ms).sum();
    let ledger = PipelineLedger {
        aligned: tally.aligned,
        processed: tally.processed,
        discarded,
        overflow: queue.overflow_samples(),
        queued_at_end: queue.backlog_samples() as u64,
        devices: acq.aligner.ledgers(),
    };
    let lost = (discarded + ledger.overflow) as f64 * SAMPLE_PERIOD_NS as f64 / 1e6;
    let report = LatencyReport::from_predictions(
        cfg.power_mode,
        dec.ensemble.model_count(),
        &dec.preds,
        dec.infer_ns,
        lost + realign_ms,
    );
    let underrun = cfg.duration_ns > 0
        && acq.last_emit_ns + crate::framing::wire::DEFAULT_TICKS as u64 * SAMPLE_PERIOD_NS < cfg.duration_ns;
    RunOutput {
        report,
        predictions: dec.preds,
        discard_events: tally.events,
        realign_events,
        ledger,
        trajectory: dec.trajectory,
        sink: dec.debug.finish(),
        resyncs: acq.resyncs,
        foreign_blocks: acq.foreign,
        source_underrun: underrun,
    }
}

/// Runs the pipeline on a single thread against a virtual clock.
///
/// Stage timing follows the nominal costs exactly, so the outcome depends
/// only on the inputs.
pub fn run_virtual(cfg: &PipelineConfig, source: Source, ensemble: &Ensemble) -> Result<RunOutput> {
    cfg.validate()?;
    let ids = source.device_ids();
    if ids.is_empty() {
        return Err(Error::Config("source has no devices".into()));
    }
    let mut acq = Acquisition::new(cfg, &ids)?;
    let mut pre = Preprocess::new(cfg, ensemble, acq.aligner.channel_count())?;
    let mut dec = Decode::new(cfg, ensemble)?;
    let mut tally = Tally::new();

    let mut arrivals: Vec<(u64, Vec<AlignedChunk>)> = Vec::new();
    for b in source.blocks(cfg.duration_ns) {
        let t = acq.arrival_ns(&b);
        arrivals.push((t, acq.ingest(&b)));
    }

    // Preprocessing: publication time of every feature vector.
    let mut queue = RawQueue::new(cfg.raw_queue_capacity_ms);
    let mut published: Vec<(u64, FeatureVector)> = Vec::new();
    let mut stall = cfg.stall;
    let mut now = 0u64;
    let mut next = 0usize;
    loop {
        while next < arrivals.len() && arrivals[next].0 <= now {
            let t = arrivals[next].0;
            for c in arrivals[next].1.drain(..) {
                tally.aligned += c.len() as u64;
                tally.events.extend(queue.push(c, t));
            }
            next += 1;
        }
        if let Some(Stall { at_ns, duration_ns }) = stall {
            if now >= at_ns {
                now += duration_ns;
                stall = None;
                continue;
            }
        }
        if queue.is_empty() {
            match arrivals.get(next) {
                Some(&(t, _)) => {
                    now = t;
                    continue;
                }
                None => break,
            }
        }
        tally.events.extend(queue.apply_freshest(cfg.backlog_limit_ms, cfg.max_discard_ms, now));
        let chunk = queue.pop().expect("non-empty queue");
        let (vectors, cost) = pre.process(&chunk)?;
        now += cost;
        tally.processed += chunk.len() as u64;
        published.extend(vectors.into_iter().map(|v| (now, v)));
    }

    // Decoding: snapshot the freshest window whenever a new vector has landed.
    let mut window = FeatureWindow::new(ensemble.input_channels(), ensemble.seq_len());
    let mut now = 0u64;
    let mut pushed = 0usize;
    let mut seen = 0usize;
    loop {
        while pushed < published.len() && published[pushed].0 <= now {
            window.push(&published[pushed].1)?;
            pushed += 1;
        }
        if window.is_full() && pushed > seen {
            let start = now;
            let done = start + dec.cost_ns;
            let pred = ensemble.infer_tick(&window, || done)?;
            seen = pushed;
            now = done;
            dec.emit(pred, start)?;
        } else {
            match published.get(pushed) {
                Some(&(t, _)) => now = t,
                None => break,
            }
        }
    }
    Ok(finish(cfg, acq, &queue, tally, dec))
}

struct RealClock(Instant);

impl RealClock {
    fn now_ns(&self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }

    fn sleep_until(&self, t_ns: u64) {
        let now = self.now_ns();
        if t_ns > now {
            thread::sleep(Duration::from_nanos(t_ns - now));
        }
    }
}

/// Counting semaphore standing in for the emulated CPU cores.
struct CorePool {
    free: Mutex<usize>,
    cv: Condvar,
}

impl CorePool {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn hold<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut free = self.free.lock().expect("core pool");
        while *free == 0 {
            free = self.cv.wait(free).expect("core pool");
        }
        *free -= 1;
        drop(free);
        let out = f();
        *self.free.lock().expect("core pool") += 1;
        self.cv.notify_one();
        out
    }
}

struct RawShared {
    queue: RawQueue,
    closed: bool,
}

struct WindowShared {
    window: FeatureWindow,
    generation: u64,
    closed: bool,
}

/// Runs the three stages on their own threads in real time.
///
/// Acquisition paces the source against the wall clock and never waits on
/// the other stages.
pub fn run(cfg: &PipelineConfig, source: Source, ensemble: &Ensemble) -> Result<RunOutput> {
    cfg.validate()?;
    let ids = source.device_ids();
    if ids.is_empty() {
        return Err(Error::Config("source has no devices".into()));
    }
    let mut acq = Acquisition::new(cfg, &ids)?;
    let mut pre = Preprocess::new(cfg, ensemble, acq.aligner.channel_count())?;
    let mut dec = Decode::new(cfg, ensemble)?;

    let raw = Mutex::new(RawShared {
        queue: RawQueue::new(cfg.raw_queue_capacity_ms),
        closed: false,
    });
    let raw_cv = Condvar::new();
    let win = Mutex::new(WindowShared {
        window: FeatureWindow::new(ensemble.input_channels(), ensemble.seq_len()),
        generation: 0,
        closed: false,
    });
    let win_cv = Condvar::new();
    let pool = CorePool::new(cfg.worker_count());
    let clock = RealClock(Instant::now());
    let blocks = source.blocks(cfg.duration_ns);

    let (acq_tally, pre_tally, dec_result) = thread::scope(|s| {
        let acquisition = s.spawn(|| {
            let mut tally = Tally::new();
            for b in blocks {
                clock.sleep_until(acq.arrival_ns(&b));
                let chunks = acq.ingest(&b);
                if chunks.is_empty() {
                    continue;
                }
                let now = clock.now_ns();
                let mut g = raw.lock().expect("raw queue");
                for c in chunks {
                    tally.aligned += c.len() as u64;
                    tally.events.extend(g.queue.push(c, now));
                }
                drop(g);
                raw_cv.notify_one();
            }
            raw.lock().expect("raw queue").closed = true;
            raw_cv.notify_one();
            tally
        });

        let preprocessing = s.spawn(|| -> Result<Tally> {
            let mut tally = Tally::new();
            let mut stall = cfg.stall;
            let result = (|| {
                loop {
                    if let Some(st) = stall {
                        if clock.now_ns() >= st.at_ns {
                            thread::sleep(Duration::from_nanos(st.duration_ns));
                            stall = None;
                        }
                    }
                    let chunk = {
                        let mut g = raw.lock().expect("raw queue");
                        while g.queue.is_empty() && !g.closed {
                            g = raw_cv.wait(g).expect("raw queue");
                        }
                        let now = clock.now_ns();
                        tally.events.extend(g.queue.apply_freshest(cfg.backlog_limit_ms, cfg.max_discard_ms, now));
                        match g.queue.pop() {
                            Some(c) => Some(c),
                            None if g.closed => None,
                            None => continue,
                        }
                    };
                    let Some(chunk) = chunk else { break };
                    let start = clock.now_ns();
                    let (vectors, _) = pool.hold(|| {
                        let out = pre.process(&chunk);
                        clock.sleep_until(start + out.as_ref().map_or(0, |o| o.1));
                        out
                    })?;
                    tally.processed += chunk.len() as u64;
                    if !vectors.is_empty() {
                        let mut w = win.lock().expect("feature window");
                        for v in &vectors {
                            w.window.push(v)?;
                        }
                        w.generation += vectors.len() as u64;
                        drop(w);
                        win_cv.notify_one();
                    }
                }
                Ok(())
            })();
            win.lock().expect("feature window").closed = true;
            win_cv.notify_one();
            result.map(|()| tally)
        });

        let decoding = s.spawn(|| -> Result<()> {
            let mut seen = 0u64;
            loop {
                let snapshot = {
                    let mut w = win.lock().expect("feature window");
                    while !(w.generation != seen && w.window.is_full()) && !w.closed {
                        w = win_cv.wait(w).expect("feature window");
                    }
                    if !(w.generation != seen && w.window.is_full()) {
                        break;
                    }
                    seen = w.generation;
                    w.window.clone()
                };
                let start = clock.now_ns();
                let deadline = start + dec.cost_ns;
                let pred = pool.hold(|| {
                    ensemble.infer_tick(&snapshot, || {
                        clock.sleep_until(deadline);
                        clock.now_ns()
                    })
                })?;
                dec.emit(pred, start)?;
            }
            Ok(())
        });

        let a = acquisition.join().expect("acquisition thread panicked");
        let p = preprocessing.join().expect("preprocessing thread panicked");
        let d = decoding.join().expect("decoding thread panicked");
        (a, p, d)
    });
    let pre_tally = pre_tally?;
    dec_result?;

    let mut tally = acq_tally;
    tally.processed = pre_tally.processed;
    tally.events.extend(pre_tally.events);
    tally.events.sort_by_key(|e| e.at_ns);
    let queue = raw.into_inner().expect("raw queue").queue;
    Ok(finish(cfg, acq, &queue, tally, dec))
}
