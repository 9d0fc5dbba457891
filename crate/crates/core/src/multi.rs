//! Parallel construction of the three indexes and the racing query runner.
//!
//! [`build_all`] builds the three kinds from one snapshot on three threads.
//! [`IndexRunner`] binds each built index to a replica worker thread; a race
//! dispatches the query to every live worker, takes the first completed
//! answer and cancels the rest cooperatively.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{BoundingBox, TileId, TimeRange};
use crate::index::{index_build, BuiltIndex, IndexEntry, IndexKind, IndexParams, RangeIndex};

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(30);

/// Per-kind measurements taken while building.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KindBuildStats {
    #[serde(with = "duration_ms")]
    pub build_time: Duration,
    pub serialized_size: usize,
}

/// The three indexes over one entry snapshot plus their replica placement.
#[derive(Debug)]
pub struct MultiIndex {
    snapshot: u64,
    indexes: BTreeMap<IndexKind, Arc<dyn RangeIndex>>,
    assignment: BTreeMap<IndexKind, u32>,
    stats: BTreeMap<IndexKind, KindBuildStats>,
    wall_time: Duration,
}

/// Fixed size of the multi-index bookkeeping header in [`MultiIndex::to_bytes`].
const MULTI_HEADER: usize = 4 + 2 + 8 + 1 + 3 * (1 + 4 + 8);

impl MultiIndex {
    pub fn snapshot(&self) -> u64 {
        self.snapshot
    }

    pub fn index(&self, kind: IndexKind) -> &Arc<dyn RangeIndex> {
        &self.indexes[&kind]
    }

    pub fn replica_of(&self, kind: IndexKind) -> u32 {
        self.assignment[&kind]
    }

    pub fn assignment(&self) -> &BTreeMap<IndexKind, u32> {
        &self.assignment
    }

    pub fn stats(&self) -> &BTreeMap<IndexKind, KindBuildStats> {
        &self.stats
    }

    /// Wall time of the whole parallel build.
    pub fn build_wall_time(&self) -> Duration {
        self.wall_time
    }

    pub fn len(&self) -> usize {
        self.indexes[&IndexKind::QuadTree].entries().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `"MXMI" | version u16 | snapshot u64 | count u8 | per kind (tag u8,
    /// replica u32, blob_len u64)` followed by the three index blobs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let blobs: Vec<(IndexKind, Vec<u8>)> =
            self.indexes.iter().map(|(k, i)| (*k, i.to_bytes())).collect();
        let mut out = Vec::with_capacity(MULTI_HEADER + blobs.iter().map(|b| b.1.len()).sum::<usize>());
        out.extend_from_slice(b"MXMI");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&self.snapshot.to_le_bytes());
        out.push(blobs.len() as u8);
        for (kind, blob) in &blobs {
            out.push(*kind as u8);
            out.extend_from_slice(&self.assignment[kind].to_le_bytes());
            out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        }
        for (_, blob) in blobs {
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn serialized_size(&self) -> usize {
        MULTI_HEADER + self.stats.values().map(|s| s.serialized_size).sum::<usize>()
    }
}

fn snapshot_stamp(entries: &[IndexEntry]) -> u64 {
    let mut h = Sha256::new();
    for e in entries {
        h.update(e.id.as_str().as_bytes());
        h.update([0]);
        for v in [e.bbox.min_lon(), e.bbox.max_lon(), e.bbox.min_lat(), e.bbox.max_lat()] {
            h.update(v.to_bits().to_le_bytes());
        }
        h.update(e.time.start().to_le_bytes());
        h.update(e.time.end().to_le_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Default replica placement: one kind per replica slot.
pub fn default_assignment() -> BTreeMap<IndexKind, u32> {
    IndexKind::ALL.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect()
}

/// Builds the three kinds concurrently, one thread each.
pub fn build_all(entries: &[IndexEntry], params: &IndexParams) -> Result<MultiIndex> {
    let started = Instant::now();
    let results: Vec<(IndexKind, Result<BuiltIndex>)> = std::thread::scope(|s| {
        let handles: Vec<_> = IndexKind::ALL
            .iter()
            .map(|&kind| (kind, s.spawn(move || index_build(kind, entries, params))))
            .collect();
        handles
            .into_iter()
            .map(|(kind, h)| (kind, h.join().unwrap_or_else(|_| Err(Error::InvalidArgument("build thread panicked".into())))))
            .collect()
    });
    let wall_time = started.elapsed();

    let mut indexes = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for (kind, res) in results {
        let built = res.map_err(|e| Error::Build {
            kind,
            source: Box::new(e),
        })?;
        stats.insert(
            kind,
            KindBuildStats {
                build_time: built.build_time,
                serialized_size: built.serialized_size,
            },
        );
        indexes.insert(kind, built.index);
    }
    Ok(MultiIndex {
        snapshot: snapshot_stamp(entries),
        indexes,
        assignment: default_assignment(),
        stats,
        wall_time,
    })
}

/// What happened to one kind during a race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum KindLatency {
    Finished {
        #[serde(with = "duration_ms")]
        elapsed: Duration,
    },
    Cancelled,
    NotDispatched,
}

#[derive(Debug, Clone, Serialize)]
pub struct RaceOutcome {
    pub result: BTreeSet<TileId>,
    pub winner: IndexKind,
    pub latency_by_kind: BTreeMap<IndexKind, KindLatency>,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
}

impl RaceOutcome {
    pub fn winner_latency(&self) -> Option<Duration> {
        match self.latency_by_kind.get(&self.winner) {
            Some(KindLatency::Finished { elapsed }) => Some(*elapsed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RaceOptions {
    pub deadline: Duration,
    /// Run every live kind to completion and require identical results.
    pub verify: bool,
}

impl Default for RaceOptions {
    fn default() -> Self {
        Self {
            deadline: DEFAULT_DEADLINE,
            verify: false,
        }
    }
}

struct Race {
    query: (BoundingBox, TimeRange),
    /// Set by the first finisher (or the caller on timeout); losers poll it.
    done: AtomicBool,
    /// In verification mode workers ignore `done`.
    run_to_completion: bool,
    dispatched: Instant,
    results: Sender<(IndexKind, Vec<u32>, Duration)>,
}

struct WorkerControl {
    failed: AtomicBool,
    delay_ns: AtomicU64,
}

struct Worker {
    kind: IndexKind,
    jobs: Option<Sender<Arc<Race>>>,
    control: Arc<WorkerControl>,
    handle: Option<JoinHandle<()>>,
}

/// Replica workers serving one [`MultiIndex`].
///
/// Workers are long-lived threads; a failed worker silently drops the jobs
/// it receives until restored.
pub struct IndexRunner {
    multi: Arc<MultiIndex>,
    workers: Vec<Worker>,
}

impl IndexRunner {
    pub fn new(multi: Arc<MultiIndex>) -> Self {
        // dispatch order follows the tie-break priority
        let mut kinds = IndexKind::ALL.to_vec();
        kinds.sort_by_key(|k| k.priority());
        let workers = kinds
            .into_iter()
            .map(|kind| {
                let (tx, rx) = crossbeam_channel::unbounded::<Arc<Race>>();
                let control = Arc::new(WorkerControl {
                    failed: AtomicBool::new(false),
                    delay_ns: AtomicU64::new(0),
                });
                let index = Arc::clone(multi.index(kind));
                let ctl = Arc::clone(&control);
                let handle = std::thread::Builder::new()
                    .name(format!("replica-{}-{kind}", multi.replica_of(kind)))
                    .spawn(move || worker_loop(kind, index, ctl, rx))
                    .expect("spawn index worker");
                Worker {
                    kind,
                    jobs: Some(tx),
                    control,
                    handle: Some(handle),
                }
            })
            .collect();
        Self { multi, workers }
    }

    pub fn multi(&self) -> &Arc<MultiIndex> {
        &self.multi
    }

    fn worker(&self, kind: IndexKind) -> &Worker {
        self.workers.iter().find(|w| w.kind == kind).expect("one worker per kind")
    }

    pub fn fail_index_worker(&self, kind: IndexKind) {
        self.worker(kind).control.failed.store(true, Ordering::SeqCst);
    }

    pub fn restore_index_worker(&self, kind: IndexKind) {
        self.worker(kind).control.failed.store(false, Ordering::SeqCst);
    }

    pub fn is_failed(&self, kind: IndexKind) -> bool {
        self.worker(kind).control.failed.load(Ordering::SeqCst)
    }

    /// Artificial per-query delay for a kind; zero removes it. The delay is
    /// abandoned early when the race is decided.
    pub fn inject_delay(&self, kind: IndexKind, delay: Duration) {
        self.worker(kind)
            .control
            .delay_ns
            .store(delay.as_nanos().min(u64::MAX as u128) as u64, Ordering::SeqCst);
    }

    pub fn race_query(&self, b: &BoundingBox, t: &TimeRange, opts: RaceOptions) -> Result<RaceOutcome> {
        self.race_among(&IndexKind::ALL, b, t, opts)
    }

    /// Race restricted to `kinds`; a single kind measures one replica alone.
    pub fn race_among(
        &self,
        kinds: &[IndexKind],
        b: &BoundingBox,
        t: &TimeRange,
        opts: RaceOptions,
    ) -> Result<RaceOutcome> {
        if opts.deadline.is_zero() {
            return Err(Error::InvalidArgument("deadline must be positive".into()));
        }
        let (tx, rx) = crossbeam_channel::unbounded();
        let race = Arc::new(Race {
            query: (*b, *t),
            done: AtomicBool::new(false),
            run_to_completion: opts.verify,
            dispatched: Instant::now(),
            results: tx,
        });
        let mut dispatched = Vec::with_capacity(3);
        for w in &self.workers {
            if kinds.contains(&w.kind) {
                if let Some(jobs) = &w.jobs {
                    if jobs.send(Arc::clone(&race)).is_ok() {
                        dispatched.push(w.kind);
                    }
                }
            }
        }
        let started = race.dispatched;
        let deadline = started + opts.deadline;
        // Only workers hold senders from here on: if all of them drop the
        // job, the channel disconnects and we stop waiting.
        let race_ref = Arc::downgrade(&race);
        drop(race);

        let outcome = if opts.verify {
            self.collect_all(&rx, &dispatched, deadline, started)
        } else {
            self.collect_first(&rx, &dispatched, deadline, started)
        };
        if let Some(r) = race_ref.upgrade() {
            r.done.store(true, Ordering::Release);
        }
        outcome
    }

    fn collect_first(
        &self,
        rx: &Receiver<(IndexKind, Vec<u32>, Duration)>,
        dispatched: &[IndexKind],
        deadline: Instant,
        started: Instant,
    ) -> Result<RaceOutcome> {
        let first = match rx.recv_deadline(deadline) {
            Ok(msg) => msg,
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::QueryTimeout(format!(
                    "no index worker answered within {:?}",
                    deadline - started
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::QueryTimeout("every index worker is down".into()))
            }
        };
        let elapsed = started.elapsed();
        let mut finished = vec![first];
        // others that finished in the same tick compete on priority
        finished.extend(rx.try_iter());
        let (winner, positions, _) = finished
            .iter()
            .min_by_key(|(k, _, _)| k.priority())
            .cloned()
            .expect("at least one finisher");
        let mut latency_by_kind = latency_table(dispatched);
        for (k, _, d) in &finished {
            latency_by_kind.insert(*k, KindLatency::Finished { elapsed: *d });
        }
        Ok(RaceOutcome {
            result: self.multi.index(winner).ids(&positions),
            winner,
            latency_by_kind,
            elapsed,
        })
    }

    fn collect_all(
        &self,
        rx: &Receiver<(IndexKind, Vec<u32>, Duration)>,
        dispatched: &[IndexKind],
        deadline: Instant,
        started: Instant,
    ) -> Result<RaceOutcome> {
        let mut finished = Vec::new();
        loop {
            match rx.recv_deadline(deadline) {
                Ok(msg) => finished.push(msg),
                Err(RecvTimeoutError::Disconnected) => break,
                Err(RecvTimeoutError::Timeout) => {
                    if finished.is_empty() {
                        return Err(Error::QueryTimeout("verification race timed out".into()));
                    }
                    break;
                }
            }
        }
        if finished.is_empty() {
            return Err(Error::QueryTimeout("every index worker is down".into()));
        }
        let elapsed = started.elapsed();
        let sets: Vec<(IndexKind, BTreeSet<TileId>)> = finished
            .iter()
            .map(|(k, p, _)| (*k, self.multi.index(*k).ids(p)))
            .collect();
        if let Some((k, _)) = sets.iter().find(|(_, s)| *s != sets[0].1) {
            return Err(Error::IndexDisagreement(format!(
                "{} and {k} returned different tile sets",
                sets[0].0
            )));
        }
        let winner = finished
            .iter()
            .min_by(|a, b| a.2.cmp(&b.2).then(a.0.priority().cmp(&b.0.priority())))
            .map(|f| f.0)
            .expect("non-empty");
        let mut latency_by_kind = latency_table(dispatched);
        for (k, _, d) in &finished {
            latency_by_kind.insert(*k, KindLatency::Finished { elapsed: *d });
        }
        let result = sets.into_iter().find(|(k, _)| *k == winner).expect("winner present").1;
        Ok(RaceOutcome {
            result,
            winner,
            latency_by_kind,
            elapsed,
        })
    }
}

fn latency_table(dispatched: &[IndexKind]) -> BTreeMap<IndexKind, KindLatency> {
    IndexKind::ALL
        .iter()
        .map(|k| {
            let status = if dispatched.contains(k) {
                KindLatency::Cancelled
            } else {
                KindLatency::NotDispatched
            };
            (*k, status)
        })
        .collect()
}

impl Drop for IndexRunner {
    fn drop(&mut self) {
        for w in &mut self.workers {
            w.jobs.take();
        }
        for w in &mut self.workers {
            if let Some(h) = w.handle.take() {
                let _ = h.join();
            }
        }
    }
}

fn worker_loop(kind: IndexKind, index: Arc<dyn RangeIndex>, control: Arc<WorkerControl>, jobs: Receiver<Arc<Race>>) {
    for race in jobs {
        if control.failed.load(Ordering::SeqCst) {
            continue;
        }
        let cancel = if race.run_to_completion {
            &AtomicBool::new(false)
        } else {
            &race.done
        };
        if cancel.load(Ordering::Acquire) {
            continue;
        }
        let delay = Duration::from_nanos(control.delay_ns.load(Ordering::SeqCst));
        if !delay.is_zero() && !cancellable_sleep(delay, cancel) {
            continue;
        }
        let (b, t) = race.query;
        if let Ok(positions) = index.search(&b, &t, cancel) {
            let elapsed = race.dispatched.elapsed();
            if !race.run_to_completion {
                race.done.store(true, Ordering::Release);
            }
            let _ = race.results.send((kind, positions, elapsed));
        }
    }
}

/// Sleeps up to `delay`; returns false if `cancel` fired first.
fn cancellable_sleep(delay: Duration, cancel: &AtomicBool) -> bool {
    let until = Instant::now() + delay;
    loop {
        if cancel.load(Ordering::Acquire) {
            return false;
        }
        let now = Instant::now();
        if now >= until {
            return true;
        }
        std::thread::sleep((until - now).min(Duration::from_millis(1)));
    }
}

pub(crate) mod duration_ms {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e3)
    }
}
