//! Decoding engines: device/server co-simulation of token generation.
//!
//! Three engines share one cost model and one token-selection rule:
//!
//! * [`target_only_decode`] — the server generates every token itself.
//!   Serves as the correctness oracle (greedy argmax chain) and a latency
//!   reference.
//! * [`run_conventional`] — draft-then-verify rounds. The device drafts γ
//!   tokens, uploads them, and waits; the server verifies the whole batch
//!   and returns accepted tokens plus one replacement or bonus token. Every
//!   phase is strictly sequential, so each side idles while the other works.
//! * [`run_parallel`] — pipelined decoding. In the *pre-verify* phase the
//!   server computes the next-token distribution for the current prefix
//!   while the device drafts its batch; a first-token rejection discards
//!   the batch and restarts drafting from the extended prefix. Once the
//!   first token is accepted the run enters the *post-verify* phase: the
//!   device drafts continuously ahead of confirmation and the server
//!   verifies arriving batches concurrently; any rejection falls back to
//!   pre-verify. Device, uplink, and server act as three resources in a
//!   deterministic event loop.
//!
//! Timing model per token: drafting costs `draft_flops_per_token /
//! device_flops` seconds, verification costs `verify_flops_per_token /
//! server_flops_effective` seconds per examined position, and a batch
//! transfer costs `(γ·bits_per_token + batch_overhead_bits) / uplink_rate`
//! seconds. The server queue delay is charged once at task start. In greedy
//! verification mode every emitted token equals the target model's argmax
//! continuation, so all three engines produce bit-identical sequences.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;

use crate::decode::oracle::{argmax, sample, TokenOracle};
use crate::decode::verify::{acceptance_probability, verify_batch, VerificationMode};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Static parameters of a decoding task.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DecodeConfig {
    /// Draft length γ: tokens proposed per round. Must be ≥ 1.
    pub gamma: usize,
    /// Generation stops once this many tokens have been emitted.
    pub max_tokens: usize,
    /// Optional end-of-sequence token; emission stops after it appears.
    pub eos_token: Option<u32>,
    /// Link payload per token id, in bits.
    pub bits_per_token: f64,
    /// Device-side cost of drafting one token, in FLOPs.
    pub draft_flops_per_token: f64,
    /// Server-side cost of scoring one position, in FLOPs.
    pub verify_flops_per_token: f64,
    /// Accept/reject rule applied by the server.
    pub verification_mode: VerificationMode,
    /// Fixed per-transfer link cost (headers, framing, metadata), in bits.
    /// Zero by default; studies that model per-burst protocol overhead set it.
    pub batch_overhead_bits: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            gamma: 4,
            max_tokens: 128,
            eos_token: None,
            bits_per_token: 64.0,
            draft_flops_per_token: 1e8,
            verify_flops_per_token: 1e9,
            verification_mode: VerificationMode::Greedy,
            batch_overhead_bits: 0.0,
        }
    }
}

impl DecodeConfig {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 1 {
            return Err(Error::Config("gamma must be ≥ 1".into()));
        }
        if self.max_tokens < 1 {
            return Err(Error::Config("max_tokens must be ≥ 1".into()));
        }
        if !(self.bits_per_token > 0.0) {
            return Err(Error::Config("bits_per_token must be positive".into()));
        }
        if !(self.draft_flops_per_token > 0.0) || !(self.verify_flops_per_token > 0.0) {
            return Err(Error::Config("per-token FLOP costs must be positive".into()));
        }
        if !(self.batch_overhead_bits >= 0.0) {
            return Err(Error::Config("batch_overhead_bits must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Bits transferred per uploaded batch.
    fn batch_bits(&self) -> f64 {
        self.gamma as f64 * self.bits_per_token + self.batch_overhead_bits
    }
}

/// Link and compute speeds for one decoding task.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LinkTiming {
    /// Device compute speed, FLOPS.
    pub device_flops: f64,
    /// Server compute share granted to this task, FLOPS.
    pub server_flops_effective: f64,
    /// Device→server throughput, bits/s.
    pub uplink_rate: f64,
    /// One-time wait before the server first touches the task, seconds.
    pub server_queue_delay: f64,
}

impl LinkTiming {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.device_flops > 0.0)
            || !(self.server_flops_effective > 0.0)
            || !(self.uplink_rate > 0.0)
        {
            return Err(Error::Config("timing rates must be positive".into()));
        }
        if !(self.server_queue_delay >= 0.0) {
            return Err(Error::Config("queue delay must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Where a pipelined run currently sits.
///
/// Runs start in `PreVerify`; accepting a batch's first token moves to
/// `PostVerify`; any rejection moves back.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseState {
    /// Server precomputes the next-token distribution while the device drafts.
    PreVerify,
    /// Device drafts continuously; server verifies batches as they arrive.
    PostVerify,
}

/// Wall-clock decomposition of one decoding run.
///
/// Busy fields accumulate each resource's working time; idle fields are the
/// complements `total_s − busy` for each side (the queue wait counts as idle
/// for both). For conventional runs the phases never overlap, so
/// `mobile_compute_s + uplink_s + server_compute_s + queue = total_s`.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatencyBreakdown {
    /// Device compute (drafting) busy time, seconds.
    pub mobile_compute_s: f64,
    /// Uplink transfer busy time, seconds.
    pub uplink_s: f64,
    /// Server compute (scoring/verification) busy time, seconds.
    pub server_compute_s: f64,
    /// `total_s − mobile_compute_s`: time the device CPU was not drafting.
    pub device_idle_s: f64,
    /// `total_s − server_compute_s`: time the server share sat unused.
    pub server_idle_s: f64,
    /// End-to-end wall-clock for the task, seconds.
    pub total_s: f64,
    /// Tokens emitted (≤ `max_tokens`).
    pub tokens_out: usize,
    /// Verification rounds (batches that reached a verdict).
    pub rounds: usize,
    /// Drafted tokens that were never emitted (rejected or abandoned).
    pub tokens_discarded: usize,
}

impl LatencyBreakdown {
    /// Emitted tokens per second of wall clock.
    pub fn tokens_per_second(&self) -> f64 {
        if self.total_s > 0.0 {
            self.tokens_out as f64 / self.total_s
        } else {
            0.0
        }
    }

    /// Combined idle share of both sides, in [0, 1].
    pub fn idle_fraction(&self) -> f64 {
        if self.total_s > 0.0 {
            (self.device_idle_s + self.server_idle_s) / (2.0 * self.total_s)
        } else {
            0.0
        }
    }
}

// ---------------------------------------------------------------------------
// Target-only reference decoding
// ---------------------------------------------------------------------------

/// Greedy argmax decoding performed entirely by the server.
///
/// No drafting and no uplink: each token costs one verification unit. Used
/// as the sequence oracle for the other engines and as a latency reference.
pub fn target_only_decode(
    target: &dyn TokenOracle,
    cfg: &DecodeConfig,
    timing: &LinkTiming,
) -> Result<(Vec<u32>, LatencyBreakdown)> {
    cfg.validate()?;
    timing.validate()?;
    let unit = cfg.verify_flops_per_token / timing.server_flops_effective;

    let mut tokens = Vec::with_capacity(cfg.max_tokens);
    while tokens.len() < cfg.max_tokens {
        let tok = argmax(&target.distribution(&tokens));
        tokens.push(tok);
        if cfg.eos_token == Some(tok) {
            break;
        }
    }

    let server = tokens.len() as f64 * unit;
    let total = timing.server_queue_delay + server;
    let breakdown = LatencyBreakdown {
        mobile_compute_s: 0.0,
        uplink_s: 0.0,
        server_compute_s: server,
        device_idle_s: total,
        server_idle_s: total - server,
        total_s: total,
        tokens_out: tokens.len(),
        rounds: tokens.len(),
        tokens_discarded: 0,
    };
    Ok((tokens, breakdown))
}

// ---------------------------------------------------------------------------
// Conventional draft-then-verify decoding
// ---------------------------------------------------------------------------

/// Runs strictly sequential draft→upload→verify rounds until `max_tokens`
/// or EOS.
///
/// Per round the device drafts γ tokens (`γ·draft_flops/device_flops` s),
/// uploads the batch (`batch bits / uplink_rate` s), and the server scores
/// γ+1 positions (`(γ+1)·verify_flops/server_flops_effective` s). Accepted
/// tokens plus the replacement (or bonus) token are appended. In stochastic
/// mode `rng` is consumed in draft order, then verification order, per
/// round.
pub fn run_conventional<R: Rng + ?Sized>(
    draft: &dyn TokenOracle,
    target: &dyn TokenOracle,
    cfg: &DecodeConfig,
    timing: &LinkTiming,
    rng: &mut R,
) -> Result<(Vec<u32>, LatencyBreakdown)> {
    cfg.validate()?;
    timing.validate()?;
    let gamma = cfg.gamma;
    let draft_unit = cfg.draft_flops_per_token / timing.device_flops;
    let upload = cfg.batch_bits() / timing.uplink_rate;
    let verify = (gamma + 1) as f64 * cfg.verify_flops_per_token / timing.server_flops_effective;

    let mut tokens: Vec<u32> = Vec::with_capacity(cfg.max_tokens);
    let mut rounds = 0usize;
    let mut discarded = 0usize;
    let mut done = false;

    while !done {
        rounds += 1;

        // Device drafts γ tokens from its current view of the sequence.
        let mut batch = Vec::with_capacity(gamma);
        let mut draft_dists = Vec::with_capacity(gamma);
        let mut local = tokens.clone();
        for _ in 0..gamma {
            let q = draft.distribution(&local);
            let tok = match cfg.verification_mode {
                VerificationMode::Greedy => argmax(&q),
                VerificationMode::Stochastic => sample(&q, rng),
            };
            local.push(tok);
            batch.push(tok);
            draft_dists.push(q);
        }

        // Server scores γ+1 positions: each drafted prefix extension plus the
        // bonus position after the full batch.
        let mut target_dists = Vec::with_capacity(gamma + 1);
        let mut prefix = tokens.clone();
        for i in 0..=gamma {
            target_dists.push(target.distribution(&prefix));
            if i < gamma {
                prefix.push(batch[i]);
            }
        }

        let outcome = verify_batch(
            &target_dists,
            &batch,
            &draft_dists,
            cfg.verification_mode,
            rng,
        )?;

        // Emit accepted draft tokens, then the replacement/bonus token.
        let mut from_batch = 0usize;
        for &tok in batch.iter().take(outcome.accepted) {
            tokens.push(tok);
            from_batch += 1;
            if tokens.len() == cfg.max_tokens || cfg.eos_token == Some(tok) {
                done = true;
                break;
            }
        }
        if !done {
            tokens.push(outcome.replacement);
            if tokens.len() == cfg.max_tokens || cfg.eos_token == Some(outcome.replacement) {
                done = true;
            }
        }
        discarded += gamma - from_batch;
    }

    let mobile = rounds as f64 * gamma as f64 * draft_unit;
    let uplink = rounds as f64 * upload;
    let server = rounds as f64 * verify;
    let total = timing.server_queue_delay + mobile + uplink + server;
    let breakdown = LatencyBreakdown {
        mobile_compute_s: mobile,
        uplink_s: uplink,
        server_compute_s: server,
        device_idle_s: total - mobile,
        server_idle_s: total - server,
        total_s: total,
        tokens_out: tokens.len(),
        rounds,
        tokens_discarded: discarded,
    };
    Ok((tokens, breakdown))
}

// ---------------------------------------------------------------------------
// Pipelined (parallel) decoding: event-driven simulation
// ---------------------------------------------------------------------------

/// Resource rank used to break event-time ties: server first, then link,
/// then device.
const SIDE_SERVER: u8 = 0;
const SIDE_LINK: u8 = 1;
const SIDE_DEVICE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    /// Device finished drafting one token.
    DraftTokenDone,
    /// A batch finished its uplink transfer.
    UplinkDone,
    /// The server finished one scoring unit (lookahead or batch position).
    VerifyUnitDone,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    side: u8,
    seq: u64,
    epoch: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the BinaryHeap pops the earliest (time, side, seq) first.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.side.cmp(&self.side))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// A fully drafted batch traveling toward (or waiting at) the server.
struct Batch {
    /// Position of the batch's first token in the confirmed sequence.
    base: usize,
    tokens: Vec<u32>,
    draft_dists: Vec<Vec<f64>>,
}

/// An in-progress batch verification on the server.
struct ActiveVerify {
    batch: Batch,
    /// Next position (within the batch) to score.
    next_idx: usize,
}

struct ParallelSim<'a, R: Rng + ?Sized> {
    draft: &'a dyn TokenOracle,
    target: &'a dyn TokenOracle,
    cfg: &'a DecodeConfig,
    rng: &'a mut R,

    draft_unit: f64,
    verify_unit: f64,
    upload_time: f64,

    heap: BinaryHeap<Event>,
    seq: u64,
    epoch: u64,
    now: f64,

    phase: PhaseState,
    /// Confirmed output tokens.
    confirmed: Vec<u32>,

    // Device state.
    device_busy: bool,
    device_busy_since: f64,
    /// Device's local sequence view: confirmed at lineage start + drafted.
    local: Vec<u32>,
    partial: Vec<u32>,
    partial_dists: Vec<Vec<f64>>,
    lineage_base: usize,
    drafted_in_lineage: usize,

    // Link state.
    link_busy: bool,
    link_started: f64,
    link_duration: f64,
    link_batch: Option<Batch>,
    outbox: VecDeque<Batch>,

    // Server state.
    server_busy: bool,
    lookahead_pending: bool,
    lookahead: Option<Vec<f64>>,
    inbox: VecDeque<Batch>,
    job: Option<ActiveVerify>,

    // Accounting.
    mobile_busy: f64,
    uplink_busy: f64,
    server_busy_s: f64,
    rounds: usize,
    discarded: usize,
    finished: bool,
}

impl<'a, R: Rng + ?Sized> ParallelSim<'a, R> {
    fn push(&mut self, time: f64, side: u8, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event { time, side, seq: self.seq, epoch: self.epoch, kind });
    }

    fn start_draft_token(&mut self) {
        debug_assert!(!self.device_busy);
        self.device_busy = true;
        self.device_busy_since = self.now;
        self.push(self.now + self.draft_unit, SIDE_DEVICE, EventKind::DraftTokenDone);
    }

    fn start_lookahead(&mut self) {
        debug_assert!(!self.server_busy);
        self.server_busy = true;
        self.lookahead_pending = true;
        self.push(self.now + self.verify_unit, SIDE_SERVER, EventKind::VerifyUnitDone);
    }

    fn start_verify_unit(&mut self) {
        debug_assert!(!self.server_busy);
        self.server_busy = true;
        self.push(self.now + self.verify_unit, SIDE_SERVER, EventKind::VerifyUnitDone);
    }

    fn try_start_uplink(&mut self) {
        if self.link_busy || self.finished {
            return;
        }
        if let Some(batch) = self.outbox.pop_front() {
            self.link_busy = true;
            self.link_started = self.now;
            self.link_duration = self.upload_time;
            self.link_batch = Some(batch);
            self.push(self.now + self.upload_time, SIDE_LINK, EventKind::UplinkDone);
        }
    }

    /// Appends a confirmed token; flips `finished` at the cap or EOS.
    fn emit(&mut self, tok: u32) {
        self.confirmed.push(tok);
        if self.confirmed.len() == self.cfg.max_tokens || self.cfg.eos_token == Some(tok) {
            self.finished = true;
        }
    }

    fn check_token(&mut self, target_dist: &[f64], batch: &Batch, idx: usize) -> bool {
        let tok = batch.tokens[idx];
        match self.cfg.verification_mode {
            VerificationMode::Greedy => tok == argmax(target_dist),
            VerificationMode::Stochastic => {
                let q = &batch.draft_dists[idx];
                let prob =
                    acceptance_probability(target_dist[tok as usize], q[tok as usize]);
                self.rng.random::<f64>() < prob
            }
        }
    }

    fn replacement_from(&mut self, target_dist: &[f64]) -> u32 {
        match self.cfg.verification_mode {
            VerificationMode::Greedy => argmax(target_dist),
            VerificationMode::Stochastic => sample(target_dist, self.rng),
        }
    }

    /// Rejection cleanup: discard all speculative work, restart drafting and
    /// the lookahead from the extended confirmed prefix.
    fn reset_lineage(&mut self) {
        // Count drafted-but-unemitted tokens in every speculative station.
        self.discarded += self.partial.len();
        self.partial.clear();
        self.partial_dists.clear();
        for b in self.outbox.drain(..) {
            self.discarded += b.tokens.len();
        }
        if self.link_busy {
            // Abort the in-flight transfer; the link was busy until now.
            self.uplink_busy += self.now - self.link_started;
            self.link_busy = false;
            if let Some(b) = self.link_batch.take() {
                self.discarded += b.tokens.len();
            }
        }
        for b in self.inbox.drain(..) {
            self.discarded += b.tokens.len();
        }
        if let Some(job) = self.job.take() {
            self.discarded += job.batch.tokens.len() - job.next_idx;
        }
        if self.device_busy {
            // Abandon the in-progress token; its compute time still happened.
            self.mobile_busy += self.now - self.device_busy_since;
            self.device_busy = false;
        }

        // Invalidate every scheduled device/link event from the old lineage.
        self.epoch += 1;

        self.phase = PhaseState::PreVerify;
        self.lookahead = None;
        self.lineage_base = self.confirmed.len();
        self.drafted_in_lineage = 0;
        self.local = self.confirmed.clone();

        if !self.finished {
            self.start_lookahead();
            self.start_draft_token();
        }
    }

    /// Server scheduler: starts whatever work is unlocked at `self.now`.
    fn advance_server(&mut self) {
        if self.server_busy || self.finished {
            return;
        }
        match self.phase {
            PhaseState::PreVerify => {
                // The first-token verdict needs the lookahead distribution and
                // the arrived batch; the comparison itself is free.
                if self.lookahead.is_some() && !self.inbox.is_empty() {
                    let batch = self.inbox.pop_front().expect("checked non-empty");
                    debug_assert_eq!(batch.base, self.confirmed.len());
                    self.rounds += 1;
                    let dist = self.lookahead.take().expect("checked some");
                    if self.check_token(&dist, &batch, 0) {
                        self.emit(batch.tokens[0]);
                        if self.finished {
                            return;
                        }
                        self.phase = PhaseState::PostVerify;
                        if !self.device_busy {
                            // The device was waiting for this verdict.
                            self.start_draft_token();
                        }
                        if batch.tokens.len() > 1 {
                            self.job = Some(ActiveVerify { batch, next_idx: 1 });
                            self.start_verify_unit();
                        } else {
                            // Single-token batch fully verified.
                            self.advance_server();
                        }
                    } else {
                        let replacement = self.replacement_from(&dist);
                        self.discarded += batch.tokens.len();
                        self.emit(replacement);
                        if self.finished {
                            return;
                        }
                        self.reset_lineage();
                    }
                }
            }
            PhaseState::PostVerify => {
                if self.job.is_none() {
                    if let Some(batch) = self.inbox.pop_front() {
                        debug_assert_eq!(batch.base, self.confirmed.len());
                        self.rounds += 1;
                        self.job = Some(ActiveVerify { batch, next_idx: 0 });
                        self.start_verify_unit();
                    }
                } else {
                    self.start_verify_unit();
                }
            }
        }
    }

    fn on_draft_token_done(&mut self) {
        self.mobile_busy += self.draft_unit;
        self.device_busy = false;

        let q = self.draft.distribution(&self.local);
        let tok = match self.cfg.verification_mode {
            VerificationMode::Greedy => argmax(&q),
            VerificationMode::Stochastic => sample(&q, self.rng),
        };
        self.local.push(tok);
        self.partial.push(tok);
        self.partial_dists.push(q);
        self.drafted_in_lineage += 1;

        if self.partial.len() == self.cfg.gamma {
            let base = self.lineage_base + self.drafted_in_lineage - self.cfg.gamma;
            let batch = Batch {
                base,
                tokens: std::mem::take(&mut self.partial),
                draft_dists: std::mem::take(&mut self.partial_dists),
            };
            self.outbox.push_back(batch);
            self.try_start_uplink();
        }

        // Pre-verify drafts exactly one batch, then waits for the verdict;
        // post-verify drafts without interruption.
        if self.phase == PhaseState::PostVerify || self.drafted_in_lineage < self.cfg.gamma {
            self.start_draft_token();
        }
    }

    fn on_uplink_done(&mut self) {
        self.uplink_busy += self.link_duration;
        self.link_busy = false;
        if let Some(batch) = self.link_batch.take() {
            self.inbox.push_back(batch);
        }
        self.try_start_uplink();
        self.advance_server();
    }

    fn on_verify_unit_done(&mut self) {
        self.server_busy_s += self.verify_unit;
        self.server_busy = false;

        if self.lookahead_pending {
            self.lookahead_pending = false;
            self.lookahead = Some(self.target.distribution(&self.confirmed));
            self.advance_server();
            return;
        }

        let Some(mut job) = self.job.take() else {
            // The unit belonged to a job cleared by a reset; nothing to do.
            return;
        };
        let idx = job.next_idx;
        let dist = self.target.distribution(&self.confirmed);
        if self.check_token(&dist, &job.batch, idx) {
            self.emit(job.batch.tokens[idx]);
            if self.finished {
                return;
            }
            job.next_idx += 1;
            if job.next_idx == job.batch.tokens.len() {
                // Batch fully accepted; look for the next one.
                self.advance_server();
            } else {
                self.job = Some(job);
                self.start_verify_unit();
            }
        } else {
            let replacement = self.replacement_from(&dist);
            self.discarded += job.batch.tokens.len() - idx;
            self.emit(replacement);
            if self.finished {
                return;
            }
            self.reset_lineage();
        }
    }

    fn run(&mut self) -> Result<()> {
        let start = self.now;
        self.start_lookahead();
        self.start_draft_token();
        debug_assert_eq!(start, self.now);

        while let Some(ev) = self.heap.pop() {
            if self.finished {
                break;
            }
            // Device/link events scheduled before a lineage reset are stale.
            if ev.epoch != self.epoch && ev.kind != EventKind::VerifyUnitDone {
                continue;
            }
            debug_assert!(ev.time + 1e-12 >= self.now, "event time went backwards");
            self.now = ev.time;
            match ev.kind {
                EventKind::DraftTokenDone => self.on_draft_token_done(),
                EventKind::UplinkDone => self.on_uplink_done(),
                EventKind::VerifyUnitDone => self.on_verify_unit_done(),
            }
        }

        if !self.finished {
            return Err(Error::Contract(
                "parallel decoding stalled before reaching max_tokens or EOS".into(),
            ));
        }
        Ok(())
    }
}

/// Runs pipelined decoding until `max_tokens` or EOS.
///
/// See the module docs for the phase machine. In greedy mode the emitted
/// sequence is identical to [`target_only_decode`]'s, regardless of seed,
/// smoothing, or timing.
pub fn run_parallel<R: Rng + ?Sized>(
    draft: &dyn TokenOracle,
    target: &dyn TokenOracle,
    cfg: &DecodeConfig,
    timing: &LinkTiming,
    rng: &mut R,
) -> Result<(Vec<u32>, LatencyBreakdown)> {
    cfg.validate()?;
    timing.validate()?;

    let mut sim = ParallelSim {
        draft,
        target,
        cfg,
        rng,
        draft_unit: cfg.draft_flops_per_token / timing.device_flops,
        verify_unit: cfg.verify_flops_per_token / timing.server_flops_effective,
        upload_time: cfg.batch_bits() / timing.uplink_rate,
        heap: BinaryHeap::new(),
        seq: 0,
        epoch: 0,
        now: timing.server_queue_delay,
        phase: PhaseState::PreVerify,
        confirmed: Vec::with_capacity(cfg.max_tokens),
        device_busy: false,
        device_busy_since: 0.0,
        local: Vec::new(),
        partial: Vec::new(),
        partial_dists: Vec::new(),
        lineage_base: 0,
        drafted_in_lineage: 0,
        link_busy: false,
        link_started: 0.0,
        link_duration: 0.0,
        link_batch: None,
        outbox: VecDeque::new(),
        server_busy: false,
        lookahead_pending: false,
        lookahead: None,
        inbox: VecDeque::new(),
        job: None,
        mobile_busy: 0.0,
        uplink_busy: 0.0,
        server_busy_s: 0.0,
        rounds: 0,
        discarded: 0,
        finished: false,
    };

    sim.run()?;

    // Close the books: speculative work still in flight at the finish
    // instant was drafted but never emitted.
    let mut discarded = sim.discarded + sim.partial.len();
    for b in &sim.outbox {
        discarded += b.tokens.len();
    }
    if let Some(b) = &sim.link_batch {
        discarded += b.tokens.len();
    }
    for b in &sim.inbox {
        discarded += b.tokens.len();
    }
    if let Some(job) = &sim.job {
        discarded += job.batch.tokens.len() - job.next_idx;
    }
    let mut mobile = sim.mobile_busy;
    if sim.device_busy {
        mobile += sim.now - sim.device_busy_since;
    }
    let mut uplink = sim.uplink_busy;
    if sim.link_busy {
        uplink += sim.now - sim.link_started;
    }

    let total = sim.now;
    let breakdown = LatencyBreakdown {
        mobile_compute_s: mobile,
        uplink_s: uplink,
        server_compute_s: sim.server_busy_s,
        device_idle_s: total - mobile,
        server_idle_s: total - sim.server_busy_s,
        total_s: total,
        tokens_out: sim.confirmed.len(),
        rounds: sim.rounds,
        tokens_discarded: discarded,
    };
    Ok((sim.confirmed.clone(), breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::oracle::SyntheticLm;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Draft oracle whose argmax never matches the target's: it rotates the
    /// target distribution by one vocabulary slot.
    struct Adversarial(SyntheticLm);

    impl TokenOracle for Adversarial {
        fn vocab_size(&self) -> usize {
            self.0.vocab_size()
        }
        fn distribution(&self, prefix: &[u32]) -> Vec<f64> {
            let mut d = self.0.distribution(prefix);
            d.rotate_left(1);
            d
        }
    }

    fn timing() -> LinkTiming {
        LinkTiming {
            device_flops: 1e9,
            server_flops_effective: 1e10,
            uplink_rate: 1e6,
            server_queue_delay: 0.0,
        }
    }

    fn cfg(gamma: usize, max_tokens: usize) -> DecodeConfig {
        DecodeConfig {
            gamma,
            max_tokens,
            draft_flops_per_token: 1e8,
            verify_flops_per_token: 1e8,
            ..DecodeConfig::default()
        }
    }

    // -- target-only reference ---------------------------------------------

    #[test]
    fn target_only_single_token_is_the_argmax() {
        let target = SyntheticLm::target(3);
        let mut c = cfg(4, 1);
        c.max_tokens = 1;
        let (tokens, b) = target_only_decode(&target, &c, &timing()).unwrap();
        assert_eq!(tokens, vec![argmax(&target.distribution(&[]))]);
        assert_eq!(b.tokens_out, 1);
    }

    #[test]
    fn target_only_is_deterministic() {
        let target = SyntheticLm::target(9);
        let c = cfg(4, 32);
        let (a, _) = target_only_decode(&target, &c, &timing()).unwrap();
        let (b, _) = target_only_decode(&target, &c, &timing()).unwrap();
        assert_eq!(a, b);
    }

    // -- conventional engine -----------------------------------------------

    #[test]
    fn full_acceptance_emits_gamma_plus_one_per_round() {
        // smoothing = 0 makes draft and target identical, so greedy mode
        // accepts everything and each round yields γ+1 tokens.
        let target = SyntheticLm::target(5);
        let draft = SyntheticLm::draft(5, 0.0);
        for gamma in 1..=6 {
            let c = cfg(gamma, 3 * (gamma + 1));
            let mut rng = ChaCha12Rng::seed_from_u64(0);
            let (tokens, b) = run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();
            assert_eq!(tokens.len(), c.max_tokens);
            assert_eq!(b.rounds, c.max_tokens / (gamma + 1));
            assert_eq!(b.tokens_discarded, 0);
        }
    }

    #[test]
    fn rounds_follow_the_ceiling_rule_under_full_acceptance() {
        let target = SyntheticLm::target(5);
        let draft = SyntheticLm::draft(5, 0.0);
        let c = cfg(4, 13); // ceil(13/5) = 3 rounds
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, b) = run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();
        assert_eq!(tokens.len(), 13);
        assert_eq!(b.rounds, 3);
    }

    #[test]
    fn adversarial_draft_emits_one_token_per_round() {
        let target = SyntheticLm::target(7);
        let draft = Adversarial(SyntheticLm::target(7));
        let c = cfg(4, 6);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, b) = run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();
        // Every round rejects the first draft token and emits only the
        // target's replacement, discarding all γ drafted tokens.
        assert_eq!(tokens.len(), 6);
        assert_eq!(b.rounds, 6);
        assert_eq!(b.tokens_discarded, 6 * 4);
        // The output is still exactly the target's greedy chain.
        let (oracle, _) = target_only_decode(&target, &c, &timing()).unwrap();
        assert_eq!(tokens, oracle);
    }

    #[test]
    fn conventional_trace_matches_hand_built_schedule() {
        // γ=4, max_tokens=8, full acceptance: two rounds, each
        //   draft  4 × 1e8 / 1e9   = 0.4 s
        //   upload 4 × 64 / 1e6    = 2.56e-4 s
        //   verify 5 × 1e8 / 1e10  = 0.05 s
        let target = SyntheticLm::target(11);
        let draft = SyntheticLm::draft(11, 0.0);
        let c = cfg(4, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, b) = run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();

        let round = 0.4 + 2.56e-4 + 0.05;
        assert_eq!(tokens.len(), 8);
        assert_eq!(b.rounds, 2);
        assert_abs_diff_eq!(b.mobile_compute_s, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(b.uplink_s, 5.12e-4, epsilon = 1e-12);
        assert_abs_diff_eq!(b.server_compute_s, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(b.total_s, 2.0 * round, epsilon = 1e-12);
        // Round 2 accepts all 4 drafted tokens but the cap cuts emission at
        // 8, so exactly one drafted token is never emitted.
        assert_eq!(b.tokens_discarded, 1);
    }

    #[test]
    fn conventional_breakdown_closes_with_queue_delay() {
        let target = SyntheticLm::target(2);
        let draft = SyntheticLm::draft(2, 0.1);
        let mut t = timing();
        t.server_queue_delay = 0.25;
        let mut c = cfg(3, 20);
        c.verification_mode = VerificationMode::Stochastic;
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let (_, b) = run_conventional(&draft, &target, &c, &t, &mut rng).unwrap();
        let parts = b.mobile_compute_s + b.uplink_s + b.server_compute_s + 0.25;
        assert_abs_diff_eq!(parts, b.total_s, epsilon = 1e-9 * b.total_s);
        assert!(b.total_s >= b.mobile_compute_s.max(b.server_compute_s));
    }

    #[test]
    fn conventional_total_never_increases_with_uplink_rate() {
        let target = SyntheticLm::target(6);
        let draft = SyntheticLm::draft(6, 0.0);
        let c = cfg(4, 24);
        let mut last = f64::INFINITY;
        for rate in [1e5, 1e6, 1e7, 1e8] {
            let mut t = timing();
            t.uplink_rate = rate;
            let mut rng = ChaCha12Rng::seed_from_u64(0);
            let (_, b) = run_conventional(&draft, &target, &c, &t, &mut rng).unwrap();
            assert!(b.total_s <= last + 1e-15, "rate {rate} raised latency");
            last = b.total_s;
        }
    }

    #[test]
    fn eos_stops_generation_early() {
        let target = SyntheticLm::target(13);
        let draft = SyntheticLm::draft(13, 0.0);
        let c = cfg(4, 64);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (reference, _) = run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();
        // Pick the 6th emitted token as EOS and re-run.
        let mut c2 = c.clone();
        c2.eos_token = Some(reference[5]);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, _) = run_conventional(&draft, &target, &c2, &timing(), &mut rng).unwrap();
        assert_eq!(tokens.last(), Some(&reference[5]));
        assert!(tokens.len() <= 6);
    }

    // -- pipelined engine ----------------------------------------------------

    #[test]
    fn greedy_sequences_match_across_all_engines() {
        for seed in 0..20 {
            for smoothing in [0.0, 0.1, 0.3] {
                let target = SyntheticLm::target(seed);
                let draft = SyntheticLm::draft(seed, smoothing);
                let c = cfg(4, 40);
                let (oracle, _) = target_only_decode(&target, &c, &timing()).unwrap();
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let (conv, _) =
                    run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();
                let mut rng = ChaCha12Rng::seed_from_u64(seed);
                let (par, _) = run_parallel(&draft, &target, &c, &timing(), &mut rng).unwrap();
                assert_eq!(conv, oracle, "seed {seed} smoothing {smoothing}");
                assert_eq!(par, oracle, "seed {seed} smoothing {smoothing}");
            }
        }
    }

    #[test]
    fn adversarial_draft_still_yields_the_target_chain_in_parallel_mode() {
        let target = SyntheticLm::target(17);
        let draft = Adversarial(SyntheticLm::target(17));
        let c = cfg(3, 12);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, b) = run_parallel(&draft, &target, &c, &timing(), &mut rng).unwrap();
        let (oracle, _) = target_only_decode(&target, &c, &timing()).unwrap();
        assert_eq!(tokens, oracle);
        // Every round rejects at the first token: the run never leaves the
        // pre-verify phase and discards each γ-token batch whole.
        assert_eq!(b.tokens_discarded, 12 * 3);
    }

    #[test]
    fn parallel_overlap_cuts_idle_time_versus_conventional() {
        // Balanced draft/verify speeds (0.1 s vs 0.05 s per token): here the
        // serial verify phase is a real fraction of each conventional round,
        // so hiding it behind drafting pays off. (With a near-free verifier
        // the conventional engine's bonus token wins instead — covered by
        // the study driver, not asserted here.)
        let t = LinkTiming { server_flops_effective: 2e9, ..timing() };
        for seed in 0..20 {
            let target = SyntheticLm::target(100 + seed);
            let draft = SyntheticLm::draft(100 + seed, 0.0);
            let c = cfg(4, 48);
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (_, conv) = run_conventional(&draft, &target, &c, &t, &mut rng).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (_, par) = run_parallel(&draft, &target, &c, &t, &mut rng).unwrap();
            let conv_idle = conv.device_idle_s + conv.server_idle_s;
            let par_idle = par.device_idle_s + par.server_idle_s;
            assert!(
                par_idle < conv_idle,
                "seed {seed}: parallel idle {par_idle} ≥ conventional idle {conv_idle}"
            );
            assert!(par.total_s < conv.total_s, "seed {seed}: no wall-clock win");
        }
    }

    #[test]
    fn infinite_uplink_approaches_the_compute_bound() {
        let target = SyntheticLm::target(23);
        let draft = SyntheticLm::draft(23, 0.0);
        let mut c = cfg(4, 600);
        c.draft_flops_per_token = 1e8;
        c.verify_flops_per_token = 1e8;
        let t = LinkTiming {
            device_flops: 1e11,           // 1 ms per drafted token
            server_flops_effective: 1e12, // 0.1 ms per verify unit
            uplink_rate: 1e15,
            server_queue_delay: 0.05,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (_, b) = run_parallel(&draft, &target, &c, &t, &mut rng).unwrap();
        let bound = b.mobile_compute_s.max(b.server_compute_s) + t.server_queue_delay;
        assert!(
            (b.total_s - bound).abs() <= 0.01 * bound,
            "total {} vs bound {}",
            b.total_s,
            bound
        );
    }

    #[test]
    fn parallel_run_is_deterministic() {
        let target = SyntheticLm::target(31);
        let draft = SyntheticLm::draft(31, 0.2);
        let mut c = cfg(4, 64);
        c.verification_mode = VerificationMode::Stochastic;
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (a_tok, a_b) = run_parallel(&draft, &target, &c, &timing(), &mut rng).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let (b_tok, b_b) = run_parallel(&draft, &target, &c, &timing(), &mut rng).unwrap();
        assert_eq!(a_tok, b_tok);
        assert_eq!(a_b, b_b);
    }

    #[test]
    fn breakdown_fields_stay_consistent_in_parallel_runs() {
        for seed in [1u64, 5, 9] {
            let target = SyntheticLm::target(seed);
            let draft = SyntheticLm::draft(seed, 0.15);
            let mut c = cfg(5, 50);
            c.verification_mode = VerificationMode::Stochastic;
            let mut t = timing();
            t.server_queue_delay = 0.1;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let (tokens, b) = run_parallel(&draft, &target, &c, &t, &mut rng).unwrap();
            assert_eq!(tokens.len(), b.tokens_out);
            assert_eq!(b.tokens_out, 50);
            assert!(b.total_s >= b.mobile_compute_s.max(b.server_compute_s));
            assert!(b.device_idle_s >= 0.0 && b.server_idle_s >= 0.0);
            assert_abs_diff_eq!(b.device_idle_s, b.total_s - b.mobile_compute_s, epsilon = 1e-12);
            assert_abs_diff_eq!(b.server_idle_s, b.total_s - b.server_compute_s, epsilon = 1e-12);
        }
    }

    #[test]
    fn stochastic_mode_emits_exactly_max_tokens() {
        let target = SyntheticLm::target(40);
        let draft = SyntheticLm::draft(40, 0.3);
        let mut c = cfg(4, 37);
        c.verification_mode = VerificationMode::Stochastic;
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, _) = run_conventional(&draft, &target, &c, &timing(), &mut rng).unwrap();
        assert_eq!(tokens.len(), 37);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let (tokens, _) = run_parallel(&draft, &target, &c, &timing(), &mut rng).unwrap();
        assert_eq!(tokens.len(), 37);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let c = DecodeConfig { gamma: 0, ..DecodeConfig::default() };
        assert!(c.validate().is_err());
        let c = DecodeConfig { max_tokens: 0, ..DecodeConfig::default() };
        assert!(c.validate().is_err());
        let t = LinkTiming { uplink_rate: 0.0, ..timing() };
        assert!(t.validate().is_err());
        let t = LinkTiming { server_queue_delay: -1.0, ..timing() };
        assert!(t.validate().is_err());
    }
}
