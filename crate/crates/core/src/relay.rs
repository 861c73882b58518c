//! Three-node relaying: transmitter, relay and receiver on one axis.
//!
//! The transmitter sends type I molecules. The relay counts type I, forwards
//! with type II one slot later, and the receiver can count both types:
//!
//! - scheme 1 detects from type II alone with per-distance thresholds,
//! - scheme 2 maps the joint (type I, type II) count pair through decision
//!   regions learned on a noiseless training run,
//! - the amplify-and-forward baseline re-emits `K` times the relay's count.
//!
//! The relay does not deplete type I flux toward the receiver. The same noise
//! level applies at every counting node and molecule type, each with
//! independent draws.

use rayon::prelude::*;

use crate::calibration::{calibrate, optimal_concentration, search_thresholds, CalibrationOptions, HopSetup};
use crate::curve::{SerCurve, SerPoint};
use crate::diffusion::{ChannelSpec, DiffusionEnv, Reception, SlotTiming};
use crate::error::{require, Error, Result};
use crate::link::{
    noise_sigma_from_snr, observe, random_symbol, BlockRngs, EmissionHistory, HopChannel, NoiseModel,
    SerEstimate,
};
use crate::modulation::{detect, CskScheme, Thresholds};
use crate::stream::{collect_blocks, derive_seed, run_blocks, substream, tag, SimRng};

/// Amplification factor of the amplify-and-forward baseline.
pub const AF_DEFAULT_GAIN: f64 = 50.0;

/// Margin added beyond the largest training counts before expansion.
pub const REGION_PADDING: f64 = 0.25;

const COLLINEAR_TOLERANCE: f64 = 1e-9;

/// Collinear transmitter, relay and receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Topology {
    pub d_tx_rx: f64,
    pub d_tx_relay: f64,
    pub d_relay_rx: f64,
    pub relay_radius: f64,
    pub receiver_radius: f64,
}

impl Topology {
    pub fn new(
        d_tx_rx: f64,
        d_tx_relay: f64,
        d_relay_rx: f64,
        relay_radius: f64,
        receiver_radius: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("d_tx_rx", d_tx_rx),
            ("d_tx_relay", d_tx_relay),
            ("d_relay_rx", d_relay_rx),
            ("relay_radius", relay_radius),
            ("receiver_radius", receiver_radius),
        ] {
            require(v > 0.0 && v.is_finite(), name, v, "must be positive and finite")?;
        }
        if (d_tx_relay + d_relay_rx - d_tx_rx).abs() > COLLINEAR_TOLERANCE * d_tx_rx {
            return Err(Error::NonCollinear {
                d_tx_rx,
                d_tx_relay,
                d_relay_rx,
            });
        }
        Ok(Self {
            d_tx_rx,
            d_tx_relay,
            d_relay_rx,
            relay_radius,
            receiver_radius,
        })
    }

    /// Relay `d_tx_relay` from the transmitter on the tx-rx segment.
    pub fn on_axis(d_tx_rx: f64, d_tx_relay: f64, relay_radius: f64, receiver_radius: f64) -> Result<Self> {
        require(
            d_tx_relay > 0.0 && d_tx_relay < d_tx_rx,
            "d_tx_relay",
            d_tx_relay,
            "must lie strictly between transmitter and receiver",
        )?;
        Self::new(d_tx_rx, d_tx_relay, d_tx_rx - d_tx_relay, relay_radius, receiver_radius)
    }
}

/// Medium and slotting shared by every hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub env: DiffusionEnv,
    pub reception: Reception,
    pub timing: SlotTiming,
    pub isi_length: Option<usize>,
}

impl ChannelParams {
    pub fn spec(&self, distance: f64, radius: f64) -> Result<ChannelSpec> {
        ChannelSpec::new(self.env, distance, radius, self.reception)
    }

    pub fn hop(&self, distance: f64, radius: f64) -> Result<HopChannel> {
        HopChannel::new(self.spec(distance, radius)?, self.timing, self.isi_length)
    }

    pub fn setup(&self, distance: f64, radius: f64, scheme: CskScheme, seed: u64) -> Result<HopSetup> {
        Ok(HopSetup {
            channel: self.spec(distance, radius)?,
            scheme,
            timing: self.timing,
            isi_length: self.isi_length,
            snr_db: None,
            seed,
        })
    }
}

/// The three diffusion paths of a relay topology.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayChannels {
    pub tx_relay: HopChannel,
    pub relay_rx: HopChannel,
    pub tx_rx: HopChannel,
}

impl RelayChannels {
    pub fn from_topology(topology: &Topology, params: &ChannelParams) -> Result<Self> {
        Ok(Self {
            tx_relay: params.hop(topology.d_tx_relay, topology.relay_radius)?,
            relay_rx: params.hop(topology.d_relay_rx, topology.receiver_radius)?,
            tx_rx: params.hop(topology.d_tx_rx, topology.receiver_radius)?,
        })
    }

    fn warmup(&self) -> usize {
        self.tx_relay
            .isi_length()
            .max(self.relay_rx.isi_length())
            .max(self.tx_rx.isi_length())
            + 1
    }
}

/// What the relay sends on type II for each slot it observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Forwarding {
    /// Detect with the given thresholds and re-emit the decoded symbol.
    Decode(Thresholds),
    /// Re-emit the true symbol; a diagnostic stand-in for a perfect relay.
    Genie,
    /// Re-emit `round(K * max(observed, 0))` molecules.
    Amplify(f64),
}

/// Type II emission of an amplify-and-forward relay.
pub fn relay_af_step(observed: f64, gain: f64) -> u64 {
    (gain * observed.max(0.0)).round() as u64
}

/// A fully parameterized two-hop link.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayLink {
    pub channels: RelayChannels,
    pub scheme_i: CskScheme,
    pub scheme_ii: CskScheme,
    pub forwarding: Forwarding,
}

impl RelayLink {
    /// Noise level for `snr_db`, referenced to the direct transmitter-receiver
    /// path and applied at every node.
    pub fn noise(&self, snr_db: Option<f64>) -> Result<NoiseModel> {
        match snr_db {
            None => Ok(NoiseModel::noiseless()),
            Some(db) => NoiseModel::new(noise_sigma_from_snr(
                db,
                &self.scheme_i,
                self.channels.tx_rx.first_slot_fraction(),
            )?),
        }
    }
}

/// What the receiver holds about one transmitted symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointObservation {
    pub sent: u8,
    /// Relay's decision; `None` for amplify-and-forward.
    pub relay_decision: Option<u8>,
    /// Type I count over the direct path in the symbol's own slot.
    pub type_i: f64,
    /// Type II count in the following slot.
    pub type_ii: f64,
}

struct NodeRngs {
    block: BlockRngs,
    relay_rx: SimRng,
    tx_rx: SimRng,
    relay_rx_noise: SimRng,
    tx_rx_noise: SimRng,
}

impl NodeRngs {
    fn new(seed: u64, block: u64) -> Self {
        Self {
            block: BlockRngs::new(seed, block),
            relay_rx: substream(seed, &[tag::CHANNEL, block, 2]),
            tx_rx: substream(seed, &[tag::CHANNEL, block, 3]),
            relay_rx_noise: substream(seed, &[tag::CHANNEL, block, 4]),
            tx_rx_noise: substream(seed, &[tag::CHANNEL, block, 5]),
        }
    }
}

/// Simulates `count` symbols after warm-up. The tx-relay hop uses the same
/// random streams as a single-hop run with the same seed, and every path has
/// its own streams, so schemes sharing a seed see identical symbols and
/// identical draws on every path they have in common.
fn run_two_hop_block(
    link: &RelayLink,
    noise: &NoiseModel,
    seed: u64,
    block: u64,
    count: usize,
    mut sink: impl FnMut(JointObservation),
) {
    let ch = &link.channels;
    let mut rngs = NodeRngs::new(seed, block);
    let warmup = ch.warmup();
    let mut tx_hist = EmissionHistory::new(ch.tx_relay.isi_length().max(ch.tx_rx.isi_length()));
    let mut relay_hist = EmissionHistory::new(ch.relay_rx.isi_length());
    // (sent, relay decision, type I observation, pending type II emission)
    let mut pending: Option<(u8, Option<u8>, f64, u64)> = None;
    for i in 0..warmup + count + 1 {
        let sent = random_symbol(&mut rngs.block.symbols, link.scheme_i.levels);
        tx_hist.push(sent as u64 * link.scheme_i.base_concentration);

        let at_relay = observe(ch.tx_relay.sample(&tx_hist, &mut rngs.block.channel), noise, &mut rngs.block.noise);
        let (decision, emission) = match link.forwarding {
            Forwarding::Decode(t) => {
                let d = detect(at_relay, &t);
                (Some(d), d as u64 * link.scheme_ii.base_concentration)
            }
            Forwarding::Genie => (Some(sent), sent as u64 * link.scheme_ii.base_concentration),
            Forwarding::Amplify(gain) => (None, relay_af_step(at_relay, gain)),
        };

        // the relay transmits what it decided during the previous slot
        relay_hist.push(pending.map_or(0, |p| p.3));
        let type_ii = observe(ch.relay_rx.sample(&relay_hist, &mut rngs.relay_rx), noise, &mut rngs.relay_rx_noise);
        let type_i = observe(ch.tx_rx.sample(&tx_hist, &mut rngs.tx_rx), noise, &mut rngs.tx_rx_noise);

        if let Some((prev_sent, prev_decision, prev_type_i, _)) = pending {
            if i > warmup {
                sink(JointObservation {
                    sent: prev_sent,
                    relay_decision: prev_decision,
                    type_i: prev_type_i,
                    type_ii,
                });
            }
        }
        pending = Some((sent, decision, type_i, emission));
    }
}

/// Joint observations for `n_symbols` symbols, in block order.
pub fn joint_observations(link: &RelayLink, snr_db: Option<f64>, n_symbols: usize, seed: u64) -> Result<Vec<JointObservation>> {
    let noise = link.noise(snr_db)?;
    Ok(collect_blocks(n_symbols, |block, count| {
        let mut out = Vec::with_capacity(count);
        run_two_hop_block(link, &noise, seed, block, count, |o| out.push(o));
        out
    })
    .into_iter()
    .flatten()
    .collect())
}

fn two_hop_ser(
    link: &RelayLink,
    snr_db: Option<f64>,
    n_symbols: usize,
    seed: u64,
    decide: impl Fn(&JointObservation) -> u8 + Sync + Send,
) -> Result<SerEstimate> {
    require(n_symbols >= 1, "n_symbols", n_symbols as f64, "must be at least 1")?;
    let noise = link.noise(snr_db)?;
    Ok(run_blocks(
        n_symbols,
        SerEstimate::default(),
        |block, count| {
            let mut est = SerEstimate::default();
            run_two_hop_block(link, &noise, seed, block, count, |o| est.record(o.sent, decide(&o)));
            est
        },
        SerEstimate::merge,
    ))
}

/// End-to-end SER of scheme 1: the receiver thresholds type II only.
pub fn simulate_scheme1(
    link: &RelayLink,
    receiver_thresholds: &Thresholds,
    snr_db: Option<f64>,
    n_symbols: usize,
    seed: u64,
) -> Result<SerEstimate> {
    two_hop_ser(link, snr_db, n_symbols, seed, |o| detect(o.type_ii, receiver_thresholds))
}

/// SER of the relay's own decisions on the same run.
pub fn simulate_relay_decoding(link: &RelayLink, snr_db: Option<f64>, n_symbols: usize, seed: u64) -> Result<SerEstimate> {
    two_hop_ser(link, snr_db, n_symbols, seed, |o| o.relay_decision.unwrap_or(u8::MAX))
}

/// Provenance of a region label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Learned from training frequencies.
    Estimated,
    /// Filled in from the nearest estimated cell.
    Expanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionCell {
    pub label: u8,
    pub provenance: Provenance,
}

/// Grid over integer (type I count, type II count) pairs, cell to symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionRegionMap {
    width: usize,
    height: usize,
    cells: Vec<Option<RegionCell>>,
}

impl DecisionRegionMap {
    /// Empty map with `width` type I cells by `height` type II cells.
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![None; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Option<RegionCell> {
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8, provenance: Provenance) {
        self.cells[y * self.width + x] = Some(RegionCell { label, provenance });
    }

    pub fn labeled(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_total(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Label for a real-valued observation: rounded to the nearest cell and
    /// clamped to the grid.
    pub fn lookup(&self, type_i: f64, type_ii: f64) -> Option<u8> {
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v <= 0.0 {
                0
            } else {
                (v.round() as usize).min(n - 1)
            }
        };
        self.get(clamp(type_i, self.width), clamp(type_ii, self.height))
            .map(|c| c.label)
    }

    /// Label counts `[symbol] -> cells`.
    pub fn label_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for c in self.cells.iter().flatten() {
            h[c.label as usize] += 1;
        }
        h
    }
}

/// Learns MAP decision regions for scheme 2 from a noiseless training run.
///
/// Each visited cell gets the symbol maximizing the estimated conditional
/// frequency `count_s(cell) / n_s` (uniform prior), smallest symbol on ties.
/// The grid extends [`REGION_PADDING`] beyond the largest counts seen.
pub fn estimate_decision_regions(link: &RelayLink, n_training: usize, seed: u64) -> Result<DecisionRegionMap> {
    require(n_training >= 1, "n_training", n_training as f64, "must be at least 1")?;
    let obs = joint_observations(link, None, n_training, seed)?;
    let levels = link.scheme_i.levels.count() as usize;
    let mut totals = [0u64; 4];
    for o in &obs {
        totals[o.sent as usize] += 1;
    }
    if let Some(s) = (0..levels).find(|&s| totals[s] == 0) {
        return Err(Error::StarvedSymbol(s as u8));
    }
    let cell = |v: f64| v.round().max(0.0) as usize;
    let max_x = obs.iter().map(|o| cell(o.type_i)).max().unwrap_or(0);
    let max_y = obs.iter().map(|o| cell(o.type_ii)).max().unwrap_or(0);
    let pad = |m: usize| (m as f64 * (1.0 + REGION_PADDING)).ceil() as usize + 1;
    let (width, height) = (pad(max_x), pad(max_y));

    let mut counts = vec![[0u32; 4]; width * height];
    for o in &obs {
        counts[cell(o.type_ii) * width + cell(o.type_i)][o.sent as usize] += 1;
    }
    let mut map = DecisionRegionMap::new(width, height);
    for (idx, c) in counts.iter().enumerate() {
        if c.iter().all(|&v| v == 0) {
            continue;
        }
        // compare c_a / n_a against c_b / n_b exactly
        let mut best = 0usize;
        for s in 1..levels {
            if c[s] as u64 * totals[best] > c[best] as u64 * totals[s] {
                best = s;
            }
        }
        map.cells[idx] = Some(RegionCell {
            label: best as u8,
            provenance: Provenance::Estimated,
        });
    }
    Ok(map)
}

/// Labels every unlabeled cell with its nearest labeled cell (Euclidean
/// distance on the grid), smallest symbol on ties.
pub fn expand_regions(map: &DecisionRegionMap) -> Result<DecisionRegionMap> {
    if map.labeled() == 0 {
        return Err(Error::EmptyRegionMap);
    }
    if map.is_total() {
        return Ok(map.clone());
    }
    let labels: Vec<u8> = {
        let mut l: Vec<u8> = map.cells.iter().flatten().map(|c| c.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    };
    let distances: Vec<Vec<f64>> = labels
        .par_iter()
        .map(|&s| {
            let mut grid: Vec<f64> = map
                .cells
                .iter()
                .map(|c| if c.is_some_and(|c| c.label == s) { 0.0 } else { f64::INFINITY })
                .collect();
            squared_distance_transform(&mut grid, map.width, map.height);
            grid
        })
        .collect();
    let mut out = map.clone();
    for (idx, c) in out.cells.iter_mut().enumerate() {
        if c.is_none() {
            // labels are ascending, so strict < keeps the smallest on ties
            let mut best = (f64::INFINITY, labels[0]);
            for (d, &s) in distances.iter().zip(&labels) {
                if d[idx] < best.0 {
                    best = (d[idx], s);
                }
            }
            *c = Some(RegionCell {
                label: best.1,
                provenance: Provenance::Expanded,
            });
        }
    }
    Ok(out)
}

/// Exact squared Euclidean distance transform, in place, row-major grid.
fn squared_distance_transform(grid: &mut [f64], width: usize, height: usize) {
    let mut column = vec![0.0; height];
    let mut out = vec![0.0; width.max(height)];
    for x in 0..width {
        for y in 0..height {
            column[y] = grid[y * width + x];
        }
        lower_envelope(&column, &mut out[..height]);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        lower_envelope(row, &mut out[..width]);
        row.copy_from_slice(&out[..width]);
    }
}

/// 1-D pass of the Felzenszwalb-Huttenlocher transform:
/// `out[q] = min_p (q - p)^2 + f[p]`.
fn lower_envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in (0..n).filter(|&q| f[q].is_finite()) {
        let fq = f[q] + (q * q) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// End-to-end SER of scheme 2 using a total decision region map.
pub fn simulate_scheme2(
    link: &RelayLink,
    regions: &DecisionRegionMap,
    snr_db: Option<f64>,
    n_symbols: usize,
    seed: u64,
) -> Result<SerEstimate> {
    if !regions.is_total() {
        return Err(Error::InvalidParameter {
            name: "regions",
            value: regions.labeled() as f64,
            reason: "decision regions must be expanded to cover the grid",
        });
    }
    two_hop_ser(link, snr_db, n_symbols, seed, |o| {
        regions.lookup(o.type_i, o.type_ii).expect("total map")
    })
}

/// Thresholds for the AF receiver by grid search on a training stream at the
/// operating noise level.
pub fn calibrate_af_receiver(
    link: &RelayLink,
    snr_db: Option<f64>,
    n_training: usize,
    grid_resolution: f64,
    seed: u64,
) -> Result<Thresholds> {
    let obs = joint_observations(link, snr_db, n_training, derive_seed(seed, &[tag::CALIBRATION]))?;
    let pairs: Vec<(u8, f64)> = obs.iter().map(|o| (o.sent, o.type_ii)).collect();
    Ok(search_thresholds(&pairs, link.scheme_ii.levels, grid_resolution)?.thresholds)
}

/// Which relaying scheme a sweep evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelayScheme {
    Scheme1,
    Scheme2,
    AmplifyForward,
}

impl RelayScheme {
    pub fn name(self) -> &'static str {
        match self {
            RelayScheme::Scheme1 => "scheme1",
            RelayScheme::Scheme2 => "scheme2",
            RelayScheme::AmplifyForward => "af",
        }
    }
}

/// Fixed inputs of a relay experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayBase {
    pub d_tx_rx: f64,
    pub relay_radius: f64,
    pub receiver_radius: f64,
    pub params: ChannelParams,
    pub scheme_i: CskScheme,
    pub scheme_ii: CskScheme,
    pub calibration: CalibrationOptions,
    /// When set, each hop's base concentration is re-optimized over these
    /// candidates for that hop's distance (noiseless).
    pub concentration_candidates: Option<Vec<u64>>,
    pub n_symbols: usize,
    pub n_training: usize,
    pub af_gain: f64,
    pub af_grid_resolution: f64,
    pub seed: u64,
}

/// Detector state for one relay location.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRelay {
    pub topology: Topology,
    pub link: RelayLink,
    pub receiver_thresholds: Option<Thresholds>,
    pub regions: Option<DecisionRegionMap>,
}

impl RelayBase {
    fn hop_concentration(&self, scheme: CskScheme, distance: f64, radius: f64) -> Result<CskScheme> {
        match &self.concentration_candidates {
            None => Ok(scheme),
            Some(candidates) => {
                let setup = self.params.setup(distance, radius, scheme, self.seed)?;
                let sweep = optimal_concentration(candidates, &setup, &self.calibration, self.n_symbols)?;
                Ok(scheme.with_concentration(sweep.best))
            }
        }
    }

    /// Calibrates the relay and receiver for a relay `d_tx_relay` from the
    /// transmitter.
    pub fn prepare(&self, scheme: RelayScheme, d_tx_relay: f64) -> Result<PreparedRelay> {
        let topology = Topology::on_axis(self.d_tx_rx, d_tx_relay, self.relay_radius, self.receiver_radius)?;
        let channels = RelayChannels::from_topology(&topology, &self.params)?;
        let scheme_i = self.hop_concentration(self.scheme_i, topology.d_tx_relay, topology.relay_radius)?;
        let scheme_ii = match scheme {
            RelayScheme::AmplifyForward => self.scheme_ii,
            _ => self.hop_concentration(self.scheme_ii, topology.d_relay_rx, topology.receiver_radius)?,
        };
        let cal_seed = derive_seed(self.seed, &[tag::CALIBRATION]);
        let forwarding = match scheme {
            RelayScheme::AmplifyForward => Forwarding::Amplify(self.af_gain),
            _ => {
                let setup = self.params.setup(topology.d_tx_relay, topology.relay_radius, scheme_i, cal_seed)?;
                Forwarding::Decode(calibrate(&setup, &self.calibration)?.thresholds)
            }
        };
        let link = RelayLink {
            channels,
            scheme_i,
            scheme_ii,
            forwarding,
        };
        let (receiver_thresholds, regions) = match scheme {
            RelayScheme::Scheme1 => {
                let setup = self.params.setup(topology.d_relay_rx, topology.receiver_radius, scheme_ii, cal_seed)?;
                (Some(calibrate(&setup, &self.calibration)?.thresholds), None)
            }
            RelayScheme::Scheme2 => {
                let learned = estimate_decision_regions(&link, self.n_training, derive_seed(self.seed, &[tag::TRAINING]))?;
                (None, Some(expand_regions(&learned)?))
            }
            RelayScheme::AmplifyForward => (None, None),
        };
        Ok(PreparedRelay {
            topology,
            link,
            receiver_thresholds,
            regions,
        })
    }

    /// SER of a prepared relay at one noise level.
    pub fn evaluate(&self, prepared: &PreparedRelay, snr_db: Option<f64>) -> Result<SerEstimate> {
        let link = &prepared.link;
        match link.forwarding {
            Forwarding::Amplify(_) => {
                let t = calibrate_af_receiver(link, snr_db, self.n_training, self.af_grid_resolution, self.seed)?;
                simulate_scheme1(link, &t, snr_db, self.n_symbols, self.seed)
            }
            _ => match (&prepared.receiver_thresholds, &prepared.regions) {
                (Some(t), _) => simulate_scheme1(link, t, snr_db, self.n_symbols, self.seed),
                (None, Some(r)) => simulate_scheme2(link, r, snr_db, self.n_symbols, self.seed),
                (None, None) => unreachable!("decode-and-forward relays are prepared with a detector"),
            },
        }
    }
}

/// SER curve over SNR for one relay location.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationResult {
    pub location: f64,
    pub curve: SerCurve,
    pub estimates: Vec<SerEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaySweep {
    pub scheme: RelayScheme,
    pub snr_grid: Vec<f64>,
    pub locations: Vec<LocationResult>,
    /// Best location per SNR, in `snr_grid` order.
    pub best_per_snr: Vec<f64>,
    /// Location with the fewest errors summed over the whole grid.
    pub best_overall: f64,
}

/// SER at every (location, SNR) pair with per-location recalibration.
///
/// All points share `base.seed`, so locations are compared on the same
/// symbol stream. Ties go to the location closer to the transmitter.
pub fn relay_location_sweep(
    scheme: RelayScheme,
    locations: &[f64],
    snr_grid: &[f64],
    base: &RelayBase,
) -> Result<RelaySweep> {
    if locations.is_empty() {
        return Err(Error::Empty("relay locations"));
    }
    if snr_grid.is_empty() {
        return Err(Error::Empty("SNR grid"));
    }
    let mut locs = locations.to_vec();
    locs.sort_by(f64::total_cmp);
    locs.dedup();
    let prepared = locs
        .par_iter()
        .map(|&loc| base.prepare(scheme, loc))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..locs.len())
        .flat_map(|l| (0..snr_grid.len()).map(move |s| (l, s)))
        .collect();
    let estimates = jobs
        .par_iter()
        .map(|&(l, s)| base.evaluate(&prepared[l], Some(snr_grid[s])))
        .collect::<Result<Vec<_>>>()?;

    let results: Vec<LocationResult> = locs
        .iter()
        .enumerate()
        .map(|(l, &loc)| {
            let ests: Vec<SerEstimate> = estimates[l * snr_grid.len()..(l + 1) * snr_grid.len()].to_vec();
            let points = snr_grid
                .iter()
                .zip(&ests)
                .map(|(&snr, e)| SerPoint::from_estimate(snr, e))
                .collect();
            LocationResult {
                location: loc,
                curve: SerCurve::new("snr", "dB", format!("{}@{loc}um", scheme.name()), points),
                estimates: ests,
            }
        })
        .collect();

    let argmin = |score: &dyn Fn(&LocationResult) -> f64| -> f64 {
        results
            .iter()
            .fold(None::<(f64, f64)>, |acc, r| {
                let v = score(r);
                match acc {
                    Some((best, _)) if best <= v => acc,
                    _ => Some((v, r.location)),
                }
            })
            .expect("non-empty")
            .1
    };
    let best_per_snr = (0..snr_grid.len())
        .map(|s| argmin(&|r: &LocationResult| r.estimates[s].ser()))
        .collect();
    let best_overall = argmin(&|r: &LocationResult| r.estimates.iter().map(|e| e.errors).sum::<u64>() as f64);
    Ok(RelaySweep {
        scheme,
        snr_grid: snr_grid.to_vec(),
        locations: results,
        best_per_snr,
        best_overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Dimension;
    use crate::link::simulate_hop;
    use crate::modulation::MoleculeType;
    use proptest::prelude::*;

    fn params() -> ChannelParams {
        ChannelParams {
            env: DiffusionEnv::new(100.0, Dimension::One).unwrap(),
            reception: Reception::Absorbing,
            timing: SlotTiming::full_slot(0.15).unwrap(),
            isi_length: None,
        }
    }

    fn base() -> RelayBase {
        RelayBase {
            d_tx_rx: 6.0,
            relay_radius: 4.0,
            receiver_radius: 4.0,
            params: params(),
            scheme_i: CskScheme::qcsk(150, MoleculeType::TypeI),
            scheme_ii: CskScheme::qcsk(150, MoleculeType::TypeII),
            calibration: CalibrationOptions { samples: 5_000, ..Default::default() },
            concentration_candidates: None,
            n_symbols: 10_000,
            n_training: 20_000,
            af_gain: AF_DEFAULT_GAIN,
            af_grid_resolution: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn topology_validation() {
        assert!(Topology::new(6.0, 2.0, 4.0, 4.0, 4.0).is_ok());
        assert!(matches!(Topology::new(6.0, 2.0, 3.0, 4.0, 4.0), Err(Error::NonCollinear { .. })));
        assert!(Topology::new(6.0, 0.0, 6.0, 4.0, 4.0).is_err());
        assert!(Topology::on_axis(6.0, 6.0, 4.0, 4.0).is_err());
        let t = Topology::on_axis(6.0, 1.0, 4.0, 4.0).unwrap();
        assert_eq!(t.d_relay_rx, 5.0);
    }

    #[test]
    fn af_emission_rule() {
        assert_eq!(relay_af_step(-3.0, 50.0), 0);
        assert_eq!(relay_af_step(0.0, 50.0), 0);
        assert_eq!(relay_af_step(3.0, 50.0), 150);
        assert_eq!(relay_af_step(6.0, 50.0), 2 * relay_af_step(3.0, 50.0));
        assert_eq!(relay_af_step(2.51, 10.0), 25);
    }

    fn map_from(width: usize, height: usize, labeled: &[(usize, usize, u8)]) -> DecisionRegionMap {
        let mut m = DecisionRegionMap::new(width, height);
        for &(x, y, s) in labeled {
            m.set(x, y, s, Provenance::Estimated);
        }
        m
    }

    #[test]
    fn expansion_edge_cases() {
        assert!(matches!(expand_regions(&DecisionRegionMap::new(3, 3)), Err(Error::EmptyRegionMap)));

        let single = expand_regions(&map_from(7, 5, &[(3, 2, 2)])).unwrap();
        assert!(single.is_total());
        assert_eq!(single.label_histogram(), [0, 0, 35, 0]);
        assert_eq!(single.get(3, 2).unwrap().provenance, Provenance::Estimated);
        assert_eq!(single.get(0, 0).unwrap().provenance, Provenance::Expanded);

        let tie = expand_regions(&map_from(3, 1, &[(0, 0, 3), (2, 0, 1)])).unwrap();
        assert_eq!(tie.get(1, 0).unwrap().label, 1);

        assert_eq!(expand_regions(&single).unwrap(), single);
    }

    #[test]
    fn lookup_clamps() {
        let m = expand_regions(&map_from(4, 4, &[(0, 0, 0), (3, 3, 3)])).unwrap();
        assert_eq!(m.lookup(-10.0, -10.0), Some(0));
        assert_eq!(m.lookup(1e9, 1e9), Some(3));
        assert_eq!(m.lookup(0.4, 0.4), Some(0));
    }

    fn brute_expand(m: &DecisionRegionMap) -> Vec<u8> {
        let seeds: Vec<(usize, usize, u8)> = (0..m.height())
            .flat_map(|y| (0..m.width()).map(move |x| (x, y)))
            .filter_map(|(x, y)| m.get(x, y).map(|c| (x, y, c.label)))
            .collect();
        (0..m.height())
            .flat_map(|y| (0..m.width()).map(move |x| (x, y)))
            .map(|(x, y)| match m.get(x, y) {
                Some(c) => c.label,
                None => {
                    seeds
                        .iter()
                        .map(|&(sx, sy, s)| {
                            let d = (sx as i64 - x as i64).pow(2) + (sy as i64 - y as i64).pow(2);
                            (d, s)
                        })
                        .min()
                        .unwrap()
                        .1
                }
            })
            .collect()
    }

    proptest! {
        #[test]
        fn expansion_matches_brute_force(
            w in 1usize..12,
            h in 1usize..12,
            seeds in proptest::collection::vec((0usize..12, 0usize..12, 0u8..4), 1..10),
        ) {
            let seeds: Vec<_> = seeds.into_iter().map(|(x, y, s)| (x % w, y % h, s)).collect();
            let m = map_from(w, h, &seeds);
            let fast = expand_regions(&m).unwrap();
            let want = brute_expand(&m);
            let got: Vec<u8> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| fast.get(x, y).unwrap().label).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn degenerate_silent_training() {
        let mut b = base();
        b.scheme_i = b.scheme_i.with_concentration(0);
        b.scheme_ii = b.scheme_ii.with_concentration(0);
        let topo = Topology::on_axis(6.0, 1.0, 4.0, 4.0).unwrap();
        let link = RelayLink {
            channels: RelayChannels::from_topology(&topo, &b.params).unwrap(),
            scheme_i: b.scheme_i,
            scheme_ii: b.scheme_ii,
            forwarding: Forwarding::Decode(Thresholds::new(1.0, 2.0, 3.0).unwrap()),
        };
        let m = estimate_decision_regions(&link, 2_000, 1).unwrap();
        assert_eq!(m.labeled(), 1);
        assert_eq!(m.get(0, 0).unwrap().label, 0);
    }

    #[test]
    fn starved_training_is_reported() {
        let b = base();
        let topo = Topology::on_axis(6.0, 1.0, 4.0, 4.0).unwrap();
        let link = RelayLink {
            channels: RelayChannels::from_topology(&topo, &b.params).unwrap(),
            scheme_i: b.scheme_i,
            scheme_ii: b.scheme_ii,
            forwarding: Forwarding::Genie,
        };
        assert!(matches!(estimate_decision_regions(&link, 1, 1), Err(Error::StarvedSymbol(_))));
    }

    #[test]
    fn relay_decisions_match_single_hop() {
        let b = base();
        let prepared = b.prepare(RelayScheme::Scheme1, 3.0).unwrap();
        let Forwarding::Decode(t) = prepared.link.forwarding else { panic!() };
        let relay = simulate_relay_decoding(&prepared.link, Some(5.0), 10_000, 3).unwrap();
        let hop = &prepared.link.channels.tx_relay;
        let noise = prepared.link.noise(Some(5.0)).unwrap();
        let single = simulate_hop(hop, &b.scheme_i, &t, &noise, 10_000, 3);
        // shared streams: the first hop is literally the same run
        assert_eq!(relay.errors, single.errors);
    }

    #[test]
    fn sweep_is_deterministic_and_reports_argmin() {
        let mut b = base();
        b.n_symbols = 5_000;
        let a = relay_location_sweep(RelayScheme::Scheme1, &[3.0], &[0.0, 10.0], &b).unwrap();
        assert_eq!(a.best_overall, 3.0);
        assert_eq!(a.best_per_snr, vec![3.0, 3.0]);
        let again = relay_location_sweep(RelayScheme::Scheme1, &[3.0], &[0.0, 10.0], &b).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn scheme2_runs_with_expanded_regions() {
        let b = base();
        let p = b.prepare(RelayScheme::Scheme2, 2.0).unwrap();
        let regions = p.regions.as_ref().unwrap();
        assert!(regions.is_total());
        let est = b.evaluate(&p, Some(10.0)).unwrap();
        assert_eq!(est.trials, b.n_symbols as u64);
        assert!(est.ser() < 0.5);
        let raw = estimate_decision_regions(&p.link, 5_000, 4).unwrap();
        assert!(simulate_scheme2(&p.link, &raw, None, 100, 1).is_err());
    }

    #[test]
    fn af_baseline_runs() {
        let b = base();
        let p = b.prepare(RelayScheme::AmplifyForward, 3.0).unwrap();
        let est = b.evaluate(&p, Some(10.0)).unwrap();
        assert_eq!(est.trials, b.n_symbols as u64);
        assert!(est.ser() < 0.75);
    }
}
