//! Tx/Rx handover protocol: prior selection, measurement forwarding,
//! ingestion at the receiver and ledger upkeep.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{detection_prob, DetectionMode, Measurement, Sensor};
use crate::tracker::{Label, ParticleBelief, PotentialTarget, Tracker, TrackerError, UpdateOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct HandoverPriorMsg {
    pub source: u32,
    pub dest: u32,
    pub source_label: Label,
    pub existence: f64,
    pub belief: ParticleBelief,
    pub time_index: usize,
}

impl HandoverPriorMsg {
    /// Scalars on the wire: four state components and a weight per particle,
    /// plus the existence probability.
    pub fn payload_scalars(&self) -> usize {
        self.belief.len() * 5 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandoverMeasMsg {
    pub source: u32,
    pub dest: u32,
    pub measurement: Measurement,
}

impl HandoverMeasMsg {
    pub const PAYLOAD_SCALARS: usize = 2;
}

/// Labels already handed over, keyed by (source, dest).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TxLedger {
    pub entries: BTreeMap<(u32, u32), BTreeSet<Label>>,
}

impl TxLedger {
    pub fn contains(&self, source: u32, dest: u32, label: Label) -> bool {
        self.entries.get(&(source, dest)).is_some_and(|s| s.contains(&label))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Received source labels mapped to local labels, keyed by (dest, source).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RxLedger {
    pub entries: BTreeMap<(u32, u32), BTreeMap<Label, Label>>,
}

impl RxLedger {
    pub fn local_for(&self, dest: u32, source: u32, source_label: Label) -> Option<Label> {
        self.entries.get(&(dest, source)).and_then(|m| m.get(&source_label)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Expected receiver-side detection probability of a belief.
pub fn rx_detection_mass(b: &ParticleBelief, rx: &Sensor) -> f64 {
    b.particles
        .iter()
        .zip(&b.weights)
        .map(|(x, w)| w * detection_prob(x, rx, DetectionMode::Filter))
        .sum()
}

/// Handover criterion for one predicted PT.
///
/// Besides the existence and receiver-coverage tests, the PT's mean must sit
/// inside the transmitter's own FoV: a PT that has drifted out of `tx` is no
/// longer the transmitter's to hand over.
pub fn handover_criterion(pt: &PotentialTarget, tx: &Sensor, rx: &Sensor, p_th: f64, gamma: f64) -> bool {
    pt.existence > p_th && tx.in_fov(pt.belief.mean().position()) && rx_detection_mass(&pt.belief, rx) > gamma
}

/// PTs meeting the criterion this step, and the priors to send.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    pub handover: Vec<Label>,
    pub priors: Vec<HandoverPriorMsg>,
}

/// Pick PTs to hand over from `tracker` (at `tx`) to `rx`.
///
/// `imported` maps local labels to the sensor they were received from; such
/// PTs never send their prior back to that sensor.
pub fn tx_select(
    tracker: &Tracker,
    tx: &Sensor,
    rx: &Sensor,
    ledger: &mut TxLedger,
    imported: &BTreeMap<Label, u32>,
    time_index: usize,
) -> Selection {
    let p = tracker.params();
    let mut out = Selection::default();
    for pt in tracker.pts() {
        if !handover_criterion(pt, tx, rx, p.p_th, p.gamma) {
            continue;
        }
        out.handover.push(pt.label);
        if imported.get(&pt.label) == Some(&rx.id) {
            continue;
        }
        let sent = ledger.entries.entry((tx.id, rx.id)).or_default();
        if sent.insert(pt.label) {
            out.priors.push(HandoverPriorMsg {
                source: tx.id,
                dest: rx.id,
                source_label: pt.label,
                existence: pt.existence,
                belief: pt.belief.clone(),
                time_index,
            });
        }
    }
    out
}

/// Forward the most likely measurement of each selected PT, once per
/// measurement. A PT whose most likely association is a miss sends nothing.
pub fn tx_measurements(
    handover: &[Label],
    outcome: &UpdateOutcome,
    zs: &[Measurement],
    source: u32,
    dest: u32,
) -> Vec<HandoverMeasMsg> {
    let mut chosen = BTreeSet::new();
    let mut out = Vec::new();
    for label in handover {
        let Some(row) = outcome.row_of(*label) else {
            continue;
        };
        let m = outcome.marginals.argmax(row);
        if m != 0 && chosen.insert(m) {
            out.push(HandoverMeasMsg {
                source,
                dest,
                measurement: zs[m - 1],
            });
        }
    }
    out
}

/// Append received priors as legacy PTs; replays of a known source label are
/// dropped. Returns the local labels created.
pub fn rx_ingest_priors(
    tracker: &mut Tracker,
    msgs: &[HandoverPriorMsg],
    ledger: &mut RxLedger,
    imported: &mut BTreeMap<Label, u32>,
) -> Vec<Label> {
    let mut created = Vec::new();
    for msg in msgs {
        let map = ledger.entries.entry((msg.dest, msg.source)).or_default();
        if map.contains_key(&msg.source_label) {
            continue;
        }
        let local = tracker.insert_legacy(msg.existence, msg.belief.clone());
        map.insert(msg.source_label, local);
        imported.insert(local, msg.source);
        created.push(local);
    }
    created
}

/// Second update pass with forwarded measurements, one pass per source in
/// ascending id order, each under the source's sensor model and without births.
pub fn rx_process(tracker: &mut Tracker, msgs: &[HandoverMeasMsg], sensors: &[Sensor]) -> Result<(), TrackerError> {
    let mut by_source: BTreeMap<u32, Vec<Measurement>> = BTreeMap::new();
    for msg in msgs {
        by_source.entry(msg.source).or_default().push(msg.measurement);
    }
    for (source, zs) in by_source {
        let Some(s) = sensors.iter().find(|s| s.id == source) else {
            continue;
        };
        tracker.update(&zs, s, false)?;
    }
    Ok(())
}

/// Drop ledger entries whose PT is gone or whose mean has left the FoV of the
/// sensor holding it. Returns the removed (source, dest, source label) triples
/// of the Tx ledger.
pub fn ledger_maintenance(
    trackers: &[Tracker],
    sensors: &[Sensor],
    tx: &mut TxLedger,
    rx: &mut RxLedger,
) -> Vec<(u32, u32, Label)> {
    let alive_in_fov = |sensor_id: u32, label: Label| -> bool {
        let Some(i) = sensors.iter().position(|s| s.id == sensor_id) else {
            return false;
        };
        trackers[i]
            .pt(label)
            .is_some_and(|pt| sensors[i].in_fov(pt.belief.mean().position()))
    };
    let mut removed = Vec::new();
    for (&(source, dest), labels) in &mut tx.entries {
        labels.retain(|&l| {
            let keep = alive_in_fov(source, l);
            if !keep {
                removed.push((source, dest, l));
            }
            keep
        });
    }
    for (&(dest, _), map) in &mut rx.entries {
        map.retain(|_, local| alive_in_fov(dest, *local));
    }
    removed
}
