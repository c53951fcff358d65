//! Multi-sensor processing architectures.
//!
//! * distributed: one independent tracker per sensor
//! * centralized: one tracker updated with every sensor's scan in id order
//! * handover: distributed trackers that pass priors, and optionally
//!   measurements, for targets entering another sensor's FoV

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{MotionModel, Sensor};
use crate::scenario::ScanSet;
use crate::tracker::{Label, TrackEstimate, Tracker, TrackerError, TrackerParams};

mod protocol;

pub use protocol::{
    handover_criterion, ledger_maintenance, rx_detection_mass, rx_ingest_priors, rx_process, tx_measurements,
    tx_select, HandoverMeasMsg, HandoverPriorMsg, RxLedger, Selection, TxLedger,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error("scan set has sensors {scans:?} but the configuration has {config:?}")]
    SensorMismatch { scans: Vec<u32>, config: Vec<u32> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Architecture {
    Centralized,
    Distributed,
    HandoverNoMeas,
    HandoverMeas,
}

impl Architecture {
    /// Output column order.
    pub const ALL: [Architecture; 4] = [
        Architecture::Centralized,
        Architecture::Distributed,
        Architecture::HandoverNoMeas,
        Architecture::HandoverMeas,
    ];

    pub fn selector(self) -> &'static str {
        match self {
            Architecture::Centralized => "centralized",
            Architecture::Distributed => "distributed",
            Architecture::HandoverNoMeas => "handover_no_meas",
            Architecture::HandoverMeas => "handover_meas",
        }
    }

    pub fn csv_name(self) -> &'static str {
        match self {
            Architecture::Centralized => "Centralized",
            Architecture::Distributed => "Distributed",
            Architecture::HandoverNoMeas => "HandoverNoMeas",
            Architecture::HandoverMeas => "HandoverMeas",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.selector())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown architecture `{0}` (expected one of: distributed, centralized, handover_meas, handover_no_meas)")]
pub struct UnknownArchitecture(pub String);

impl FromStr for Architecture {
    type Err = UnknownArchitecture;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.selector() == s)
            .ok_or_else(|| UnknownArchitecture(s.to_string()))
    }
}

/// Inter-node traffic of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepComm {
    pub priors_sent: usize,
    pub measurements_sent: usize,
    pub payload_scalars: usize,
}

/// Per-step traffic of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CommStats {
    pub steps: Vec<StepComm>,
}

impl CommStats {
    pub fn total(&self) -> StepComm {
        self.steps.iter().fold(StepComm::default(), |a, s| StepComm {
            priors_sent: a.priors_sent + s.priors_sent,
            measurements_sent: a.measurements_sent + s.measurements_sent,
            payload_scalars: a.payload_scalars + s.payload_scalars,
        })
    }

    /// Running totals, one entry per step.
    pub fn cumulative(&self) -> Vec<StepComm> {
        let mut acc = StepComm::default();
        self.steps
            .iter()
            .map(|s| {
                acc.priors_sent += s.priors_sent;
                acc.measurements_sent += s.measurements_sent;
                acc.payload_scalars += s.payload_scalars;
                acc
            })
            .collect()
    }
}

/// Protocol trace used for auditing ledger behaviour.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEvent {
    PriorSent {
        step: usize,
        source: u32,
        dest: u32,
        label: Label,
        mean: [f64; 2],
    },
    TxLedgerRemoved {
        step: usize,
        source: u32,
        dest: u32,
        label: Label,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimates {
    /// One fused estimate set per step.
    Global(Vec<Vec<TrackEstimate>>),
    /// `[step][sensor index]`.
    PerSensor(Vec<Vec<Vec<TrackEstimate>>>),
}

impl Estimates {
    /// Estimates a sensor reports at step `k`; a global set is shared by all sensors.
    pub fn for_sensor(&self, k: usize, sensor_index: usize) -> &[TrackEstimate] {
        match self {
            Estimates::Global(e) => &e[k],
            Estimates::PerSensor(e) => &e[k][sensor_index],
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Estimates::Global(e) => e.len(),
            Estimates::PerSensor(e) => e.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub architecture: Architecture,
    pub estimates: Estimates,
    pub comm: CommStats,
    pub events: Vec<ProtocolEvent>,
}

/// Static inputs shared by every architecture.
#[derive(Debug, Clone, Copy)]
pub struct Setup<'a> {
    /// Ascending id order, matching the scan set.
    pub sensors: &'a [Sensor],
    pub motion: &'a MotionModel,
    pub params: &'a TrackerParams,
    pub seed: u64,
}

/// Random stream of the tracker attached to `sensor_index`. Stream 0 is left
/// to data generation.
pub fn tracker_rng(seed: u64, sensor_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + sensor_index as u64);
    rng
}

fn check_sensors(scans: &ScanSet, setup: &Setup) -> Result<(), FusionError> {
    let config: Vec<u32> = setup.sensors.iter().map(|s| s.id).collect();
    if scans.sensor_ids != config {
        return Err(FusionError::SensorMismatch {
            scans: scans.sensor_ids.clone(),
            config,
        });
    }
    Ok(())
}

pub fn run_distributed(scans: &ScanSet, setup: &Setup) -> Result<RunOutput, FusionError> {
    let mut net = Network::new(setup, Mode::Isolated)?;
    net.run(scans, Architecture::Distributed)
}

pub fn run_handover(scans: &ScanSet, setup: &Setup, with_measurements: bool) -> Result<RunOutput, FusionError> {
    let (mode, arch) = if with_measurements {
        (Mode::PriorsAndMeasurements, Architecture::HandoverMeas)
    } else {
        (Mode::PriorsOnly, Architecture::HandoverNoMeas)
    };
    let mut net = Network::new(setup, mode)?;
    net.run(scans, arch)
}

/// Sequential fusion at a single node, sensors visited in id order.
pub fn run_centralized(scans: &ScanSet, setup: &Setup) -> Result<RunOutput, FusionError> {
    check_sensors(scans, setup)?;
    let mut tracker = Tracker::new(0, setup.params.clone(), *setup.motion, tracker_rng(setup.seed, 0))?;
    let mut estimates = Vec::with_capacity(scans.horizon());
    let mut comm = CommStats::default();
    for k in 0..scans.horizon() {
        tracker.predict();
        let mut forwarded = 0;
        for (i, s) in setup.sensors.iter().enumerate() {
            let zs = scans.scan(k, i);
            forwarded += zs.len();
            tracker.update(zs, s, true)?;
        }
        estimates.push(tracker.prune_and_detect());
        comm.steps.push(StepComm {
            priors_sent: 0,
            measurements_sent: forwarded,
            payload_scalars: forwarded * HandoverMeasMsg::PAYLOAD_SCALARS,
        });
    }
    Ok(RunOutput {
        architecture: Architecture::Centralized,
        estimates: Estimates::Global(estimates),
        comm,
        events: Vec::new(),
    })
}

pub fn run_architecture(arch: Architecture, scans: &ScanSet, setup: &Setup) -> Result<RunOutput, FusionError> {
    match arch {
        Architecture::Centralized => run_centralized(scans, setup),
        Architecture::Distributed => run_distributed(scans, setup),
        Architecture::HandoverNoMeas => run_handover(scans, setup, false),
        Architecture::HandoverMeas => run_handover(scans, setup, true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Isolated,
    PriorsOnly,
    PriorsAndMeasurements,
}

/// One tracker per sensor plus the handover bookkeeping. Each step is split
/// into phases so callers can observe tracker state in between.
#[derive(Debug, Clone)]
pub struct Network {
    sensors: Vec<Sensor>,
    mode: Mode,
    trackers: Vec<Tracker>,
    tx_ledger: TxLedger,
    rx_ledger: RxLedger,
    /// Per sensor index: local label to the sensor it was received from.
    imported: Vec<BTreeMap<Label, u32>>,
    /// Per sensor index: (dest index, PTs meeting the criterion) from the
    /// current step's selection.
    handover: Vec<Vec<(usize, Vec<Label>)>>,
    pending_meas: Vec<Vec<HandoverMeasMsg>>,
    /// Per sensor index: messages received during the current step.
    inbound: Vec<usize>,
    step_comm: StepComm,
    comm: CommStats,
    events: Vec<ProtocolEvent>,
}

impl Network {
    pub fn new(setup: &Setup, mode: Mode) -> Result<Self, FusionError> {
        let trackers = setup
            .sensors
            .iter()
            .enumerate()
            .map(|(i, s)| Tracker::new(s.id, setup.params.clone(), *setup.motion, tracker_rng(setup.seed, i)))
            .collect::<Result<Vec<_>, _>>()?;
        let n = setup.sensors.len();
        Ok(Self {
            sensors: setup.sensors.to_vec(),
            mode,
            trackers,
            tx_ledger: TxLedger::default(),
            rx_ledger: RxLedger::default(),
            imported: vec![BTreeMap::new(); n],
            handover: vec![Vec::new(); n],
            pending_meas: vec![Vec::new(); n],
            inbound: vec![0; n],
            step_comm: StepComm::default(),
            comm: CommStats::default(),
            events: Vec::new(),
        })
    }

    pub fn trackers(&self) -> &[Tracker] {
        &self.trackers
    }

    pub fn tx_ledger(&self) -> &TxLedger {
        &self.tx_ledger
    }

    pub fn rx_ledger(&self) -> &RxLedger {
        &self.rx_ledger
    }

    pub fn comm(&self) -> &CommStats {
        &self.comm
    }

    pub fn events(&self) -> &[ProtocolEvent] {
        &self.events
    }

    /// Messages received so far this step by the tracker at `sensor_index`.
    pub fn inbound(&self, sensor_index: usize) -> usize {
        self.inbound[sensor_index]
    }

    pub fn predict(&mut self) {
        self.step_comm = StepComm::default();
        self.inbound.iter_mut().for_each(|v| *v = 0);
        for t in &mut self.trackers {
            t.predict();
        }
    }

    /// Select priors on every ordered pair, then deliver them. Returns the
    /// number of priors sent.
    pub fn exchange_priors(&mut self, k: usize) -> usize {
        let n = self.trackers.len();
        for h in &mut self.handover {
            h.clear();
        }
        if self.mode == Mode::Isolated {
            return 0;
        }
        let mut inbox: Vec<Vec<HandoverPriorMsg>> = vec![Vec::new(); n];
        for t in 0..n {
            for r in (0..n).filter(|&r| r != t) {
                let sel = tx_select(
                    &self.trackers[t],
                    &self.sensors[t],
                    &self.sensors[r],
                    &mut self.tx_ledger,
                    &self.imported[t],
                    k,
                );
                for msg in &sel.priors {
                    self.step_comm.priors_sent += 1;
                    self.step_comm.payload_scalars += msg.payload_scalars();
                    self.events.push(ProtocolEvent::PriorSent {
                        step: k,
                        source: msg.source,
                        dest: msg.dest,
                        label: msg.source_label,
                        mean: msg.belief.mean().position(),
                    });
                }
                inbox[r].extend(sel.priors);
                if !sel.handover.is_empty() {
                    self.handover[t].push((r, sel.handover));
                }
            }
        }
        let sent = self.step_comm.priors_sent;
        for (r, msgs) in inbox.into_iter().enumerate() {
            self.inbound[r] += msgs.len();
            rx_ingest_priors(&mut self.trackers[r], &msgs, &mut self.rx_ledger, &mut self.imported[r]);
        }
        sent
    }

    /// Local update with births, then queue forwarded measurements.
    pub fn local_update(&mut self, scans: &ScanSet, k: usize) -> Result<(), FusionError> {
        let n = self.trackers.len();
        for q in &mut self.pending_meas {
            q.clear();
        }
        for i in 0..n {
            let zs = scans.scan(k, i);
            let outcome = self.trackers[i].update(zs, &self.sensors[i], true)?;
            if self.mode != Mode::PriorsAndMeasurements {
                continue;
            }
            for (r, labels) in &self.handover[i] {
                let msgs = tx_measurements(labels, &outcome, zs, self.sensors[i].id, self.sensors[*r].id);
                self.step_comm.measurements_sent += msgs.len();
                self.step_comm.payload_scalars += msgs.len() * HandoverMeasMsg::PAYLOAD_SCALARS;
                self.pending_meas[*r].extend(msgs);
            }
        }
        Ok(())
    }

    /// Second pass with forwarded measurements. Trackers that received
    /// nothing are left untouched.
    pub fn process_forwarded(&mut self) -> Result<(), FusionError> {
        for (i, msgs) in self.pending_meas.iter().enumerate() {
            self.inbound[i] += msgs.len();
            if !msgs.is_empty() {
                rx_process(&mut self.trackers[i], msgs, &self.sensors)?;
            }
        }
        Ok(())
    }

    /// Prune, detect and update ledgers. Returns estimates per sensor index.
    pub fn finish(&mut self, k: usize) -> Vec<Vec<TrackEstimate>> {
        let estimates: Vec<Vec<TrackEstimate>> = self.trackers.iter_mut().map(Tracker::prune_and_detect).collect();
        for (source, dest, label) in ledger_maintenance(&self.trackers, &self.sensors, &mut self.tx_ledger, &mut self.rx_ledger) {
            self.events.push(ProtocolEvent::TxLedgerRemoved {
                step: k,
                source,
                dest,
                label,
            });
        }
        for (t, imported) in self.trackers.iter().zip(&mut self.imported) {
            imported.retain(|l, _| t.pt(*l).is_some());
        }
        self.comm.steps.push(self.step_comm);
        estimates
    }

    pub fn step(&mut self, scans: &ScanSet, k: usize) -> Result<Vec<Vec<TrackEstimate>>, FusionError> {
        self.predict();
        self.exchange_priors(k);
        self.local_update(scans, k)?;
        self.process_forwarded()?;
        Ok(self.finish(k))
    }

    fn run(&mut self, scans: &ScanSet, architecture: Architecture) -> Result<RunOutput, FusionError> {
        let config: Vec<u32> = self.sensors.iter().map(|s| s.id).collect();
        if scans.sensor_ids != config {
            return Err(FusionError::SensorMismatch {
                scans: scans.sensor_ids.clone(),
                config,
            });
        }
        let mut estimates = Vec::with_capacity(scans.horizon());
        for k in 0..scans.horizon() {
            estimates.push(self.step(scans, k)?);
        }
        Ok(RunOutput {
            architecture,
            estimates: Estimates::PerSensor(estimates),
            comm: std::mem::take(&mut self.comm),
            events: std::mem::take(&mut self.events),
        })
    }
}
