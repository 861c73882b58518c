//! Monte Carlo simulation of one point-to-point hop.
//!
//! Each slot the transmitter emits `symbol * N` molecules. Molecules emitted
//! `k - 1` slots ago arrive in the current slot with probability `p_k`, so the
//! received count is a sum of independent binomials over the emission history.
//! Gaussian noise is added to the count and the result is thresholded.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};

use crate::diffusion::{
    default_isi_length, passive_slot_means, window_hit_probabilities, ChannelSpec, Reception,
    SlotTiming,
};
use crate::error::{require, Error, Result};
use crate::modulation::{detect, CskScheme, Levels, Thresholds};
use crate::stats;
use crate::stream::{run_blocks, substream, tag, SimRng};

/// Additive Gaussian count noise with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma: f64,
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        require(sigma >= 0.0 && sigma.is_finite(), "sigma", sigma, "must be finite and non-negative")?;
        Ok(Self { sigma })
    }

    pub fn noiseless() -> Self {
        Self { sigma: 0.0 }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Noise standard deviation giving `snr_db` for a scheme whose first-slot
/// arrival probability is `p1`.
///
/// Signal power is the expected first-slot count averaged over equiprobable
/// symbols, `mean(s) * N * p1` (`1.5 N p1` for QCSK); noise power is `sigma^2`.
pub fn noise_sigma_from_snr(snr_db: f64, scheme: &CskScheme, p1: f64) -> Result<f64> {
    require(p1 > 0.0 && p1 <= 1.0, "p1", p1, "must be in (0, 1]")?;
    require(!snr_db.is_nan(), "snr_db", snr_db, "must not be NaN")?;
    let signal = scheme.levels.mean_symbol() * scheme.base_concentration as f64 * p1;
    Ok((signal / 10f64.powf(snr_db / 10.0)).sqrt())
}

/// Sum of independent `Binomial(history[k], slot_probs[k])` draws.
///
/// `history` is most-recent-first; missing tail entries count as zero.
pub fn sample_arrivals<R: Rng + ?Sized>(history: &[u64], slot_probs: &[f64], rng: &mut R) -> Result<u64> {
    if history.len() > slot_probs.len() {
        return Err(Error::HistoryTooLong {
            history: history.len(),
            probs: slot_probs.len(),
        });
    }
    if let Some(&bad) = slot_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidProbability(bad));
    }
    Ok(history
        .iter()
        .zip(slot_probs)
        .map(|(&m, &p)| binomial(m, p, rng))
        .sum())
}

/// `arrivals` plus one `Normal(0, sigma^2)` draw. May be negative.
///
/// A standard normal is drawn even when `sigma == 0` so that runs at
/// different noise levels consume identical random streams.
pub fn observe<R: Rng + ?Sized>(arrivals: u64, noise: &NoiseModel, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    arrivals as f64 + noise.sigma * z
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("validated probability").sample(rng)
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Fixed-capacity emission history, most recent first.
#[derive(Debug, Clone)]
pub struct EmissionHistory {
    slots: VecDeque<u64>,
    capacity: usize,
}

impl EmissionHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            slots: VecDeque::from(vec![0; capacity]),
            capacity,
        }
    }

    pub fn push(&mut self, emitted: u64) {
        self.slots.push_front(emitted);
        self.slots.truncate(self.capacity);
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        self.slots.iter().copied()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Taps {
    /// Per-slot absorption probabilities.
    Absorbing(Vec<f64>),
    /// Per-slot expected counts per emitted molecule.
    Passive(Vec<f64>),
}

/// One diffusion hop quantized into symbol slots.
#[derive(Debug, Clone, PartialEq)]
pub struct HopChannel {
    spec: ChannelSpec,
    taps: Taps,
}

impl HopChannel {
    /// `isi_length = None` selects [`default_isi_length`].
    pub fn new(spec: ChannelSpec, timing: SlotTiming, isi_length: Option<usize>) -> Result<Self> {
        let len = match isi_length {
            Some(len) => len,
            None => default_isi_length(&spec, timing)?,
        };
        let taps = match spec.reception() {
            Reception::Absorbing => Taps::Absorbing(window_hit_probabilities(&spec, timing, len)?),
            Reception::Passive => Taps::Passive(passive_slot_means(&spec, timing, len)?),
        };
        Ok(Self { spec, taps })
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn taps(&self) -> &[f64] {
        match &self.taps {
            Taps::Absorbing(p) | Taps::Passive(p) => p,
        }
    }

    pub fn isi_length(&self) -> usize {
        self.taps().len()
    }

    /// Expected fraction of an emission counted in its own slot.
    pub fn first_slot_fraction(&self) -> f64 {
        self.taps()[0]
    }

    /// Expected count for the given history.
    pub fn expected_count(&self, history: &EmissionHistory) -> f64 {
        history
            .iter()
            .zip(self.taps())
            .map(|(m, p)| m as f64 * p)
            .sum()
    }

    /// Draws this slot's molecule count.
    pub fn sample<R: Rng + ?Sized>(&self, history: &EmissionHistory, rng: &mut R) -> u64 {
        match &self.taps {
            Taps::Absorbing(p) => history.iter().zip(p).map(|(m, &pk)| binomial(m, pk, rng)).sum(),
            Taps::Passive(_) => poisson(self.expected_count(history), rng),
        }
    }
}

/// Error count and confusion matrix, rows indexed by the transmitted symbol.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SerEstimate {
    pub errors: u64,
    pub trials: u64,
    pub confusion: [[u64; 4]; 4],
}

impl SerEstimate {
    pub fn record(&mut self, sent: u8, decided: u8) {
        self.trials += 1;
        if sent != decided {
            self.errors += 1;
        }
        self.confusion[sent as usize][decided as usize] += 1;
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.errors += other.errors;
        self.trials += other.trials;
        for (row, orow) in self.confusion.iter_mut().zip(other.confusion) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
        self
    }

    pub fn ser(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.errors as f64 / self.trials as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        stats::proportion_standard_error(self.ser(), self.trials)
    }

    /// 95% Clopper-Pearson interval on the SER.
    pub fn ci95(&self) -> (f64, f64) {
        stats::ci95(self.errors, self.trials)
    }

    /// Trials per transmitted symbol.
    pub fn sent_counts(&self) -> [u64; 4] {
        self.confusion.map(|row| row.iter().sum())
    }
}

/// Everything needed to simulate one hop.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub channel: ChannelSpec,
    pub scheme: CskScheme,
    pub thresholds: Thresholds,
    pub timing: SlotTiming,
    /// `None` uses [`default_isi_length`].
    pub isi_length: Option<usize>,
    pub n_symbols: usize,
    /// `None` is a noiseless channel.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl LinkConfig {
    pub fn hop(&self) -> Result<HopChannel> {
        HopChannel::new(self.channel, self.timing, self.isi_length)
    }

    pub fn noise(&self, hop: &HopChannel) -> Result<NoiseModel> {
        match self.snr_db {
            None => Ok(NoiseModel::noiseless()),
            Some(db) => NoiseModel::new(noise_sigma_from_snr(db, &self.scheme, hop.first_slot_fraction())?),
        }
    }
}

pub(crate) fn random_symbol<R: Rng + ?Sized>(rng: &mut R, levels: Levels) -> u8 {
    rng.random_range(0..levels.count())
}

/// Per-block generators: symbols, channel draws and noise draws are separate
/// so that runs differing only in noise level or channel share the symbols.
pub(crate) struct BlockRngs {
    pub symbols: SimRng,
    pub channel: SimRng,
    pub noise: SimRng,
}

impl BlockRngs {
    pub fn new(seed: u64, block: u64) -> Self {
        Self {
            symbols: substream(seed, &[tag::SYMBOLS, block]),
            channel: substream(seed, &[tag::CHANNEL, block]),
            noise: substream(seed, &[tag::CHANNEL, block, 1]),
        }
    }
}

/// Runs `count` counted symbols after `hop.isi_length()` warm-up symbols and
/// hands each `(sent, observation)` pair to `sink`.
pub(crate) fn run_hop_block(
    hop: &HopChannel,
    scheme: &CskScheme,
    noise: &NoiseModel,
    seed: u64,
    block: u64,
    count: usize,
    mut sink: impl FnMut(u8, f64),
) {
    let mut rngs = BlockRngs::new(seed, block);
    let warmup = hop.isi_length();
    let mut history = EmissionHistory::new(hop.isi_length());
    for i in 0..warmup + count {
        let sent = random_symbol(&mut rngs.symbols, scheme.levels);
        history.push(sent as u64 * scheme.base_concentration);
        let arrivals = hop.sample(&history, &mut rngs.channel);
        let y = observe(arrivals, noise, &mut rngs.noise);
        if i >= warmup {
            sink(sent, y);
        }
    }
}

/// Simulates `config.n_symbols` detected symbols and returns the SER.
///
/// Deterministic in `config.seed`, independent of the worker count.
pub fn simulate_link(config: &LinkConfig) -> Result<SerEstimate> {
    if config.thresholds.levels() != config.scheme.levels {
        return Err(Error::InvalidThresholds(format!(
            "{} thresholds given for a {}-level scheme",
            config.thresholds.as_slice().len(),
            config.scheme.levels.count()
        )));
    }
    require(config.n_symbols >= 1, "n_symbols", config.n_symbols as f64, "must be at least 1")?;
    let hop = config.hop()?;
    let noise = config.noise(&hop)?;
    Ok(simulate_hop(&hop, &config.scheme, &config.thresholds, &noise, config.n_symbols, config.seed))
}

/// [`simulate_link`] on a prepared hop with an explicit noise level.
pub fn simulate_hop(
    hop: &HopChannel,
    scheme: &CskScheme,
    thresholds: &Thresholds,
    noise: &NoiseModel,
    n_symbols: usize,
    seed: u64,
) -> SerEstimate {
    run_blocks(
        n_symbols,
        SerEstimate::default(),
        |block, count| {
            let mut est = SerEstimate::default();
            run_hop_block(hop, scheme, noise, seed, block, count, |sent, y| {
                est.record(sent, detect(y, thresholds))
            });
            est
        },
        SerEstimate::merge,
    )
}

/// `(sent, observation)` pairs from a steady-state symbol stream, in block
/// order.
pub fn observation_stream(
    hop: &HopChannel,
    scheme: &CskScheme,
    noise: &NoiseModel,
    n_symbols: usize,
    seed: u64,
) -> Vec<(u8, f64)> {
    crate::stream::collect_blocks(n_symbols, |block, count| {
        let mut out = Vec::with_capacity(count);
        run_hop_block(hop, scheme, noise, seed, block, count, |s, y| out.push((s, y)));
        out
    })
    .into_iter()
    .flatten()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DiffusionEnv, Dimension};
    use crate::modulation::MoleculeType;
    use rand::SeedableRng;

    fn spec(d: f64, dim: Dimension) -> ChannelSpec {
        ChannelSpec::absorbing(DiffusionEnv::new(100.0, dim).unwrap(), d, 4.0).unwrap()
    }

    fn config(d: f64, n: u64, thresholds: Thresholds) -> LinkConfig {
        LinkConfig {
            channel: spec(d, Dimension::One),
            scheme: CskScheme::qcsk(n, MoleculeType::TypeI),
            thresholds,
            timing: SlotTiming::full_slot(0.15).unwrap(),
            isi_length: None,
            n_symbols: 20_000,
            snr_db: None,
            seed: 42,
        }
    }

    #[test]
    fn sigma_from_snr() {
        let scheme = CskScheme::qcsk(150, MoleculeType::TypeI);
        let p1 = 0.333_647_097_583_065_8;
        assert!(noise_sigma_from_snr(f64::INFINITY, &scheme, p1).unwrap() == 0.0);
        let s0 = noise_sigma_from_snr(0.0, &scheme, p1).unwrap();
        assert!((s0 * s0 - 1.5 * 150.0 * p1).abs() < 1e-9);
        // sqrt(1.5 * 150 * (4/7) erfc(3/sqrt 60) / 10), 40-digit reference
        let s10 = noise_sigma_from_snr(10.0, &scheme, p1).unwrap();
        assert!((s10 - 2.739_901_402_536_044).abs() < 1e-12);
        assert!(noise_sigma_from_snr(10.0, &scheme, 0.0).is_err());
        assert!(noise_sigma_from_snr(10.0, &scheme, 1.5).is_err());
        let b = CskScheme::bcsk(100, MoleculeType::TypeI);
        let sb = noise_sigma_from_snr(0.0, &b, 0.5).unwrap();
        assert!((sb * sb - 25.0).abs() < 1e-12);
    }

    #[test]
    fn arrivals_basic_contract() {
        let mut rng = SimRng::seed_from_u64(1);
        assert_eq!(sample_arrivals(&[0, 0, 0], &[0.3, 0.2, 0.1], &mut rng).unwrap(), 0);
        assert!(matches!(
            sample_arrivals(&[1, 2], &[0.5], &mut rng),
            Err(Error::HistoryTooLong { .. })
        ));
        assert!(matches!(
            sample_arrivals(&[1], &[1.2], &mut rng),
            Err(Error::InvalidProbability(_))
        ));
        let draw = |seed| {
            let mut r = SimRng::seed_from_u64(seed);
            (0..100).map(|_| sample_arrivals(&[450, 150, 300], &[0.58, 0.11, 0.05], &mut r).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn observe_without_noise_is_identity() {
        let mut rng = SimRng::seed_from_u64(1);
        for a in [0u64, 7, 450] {
            assert_eq!(observe(a, &NoiseModel::noiseless(), &mut rng), a as f64);
        }
        assert!(NoiseModel::new(-1.0).is_err());
    }

    #[test]
    fn history_is_most_recent_first() {
        let mut h = EmissionHistory::new(3);
        for m in [1, 2, 3, 4] {
            h.push(m);
        }
        assert_eq!(h.iter().collect::<Vec<_>>(), vec![4, 3, 2]);
    }

    #[test]
    fn silent_transmitter_errs_three_quarters() {
        let t = Thresholds::new(80.0, 213.0, 345.0).unwrap();
        let est = simulate_link(&config(1.0, 0, t)).unwrap();
        assert_eq!(est.sent_counts().iter().sum::<u64>(), 20_000);
        assert!(est.confusion.iter().all(|row| row[1] == 0 && row[2] == 0 && row[3] == 0));
        assert!((est.ser() - 0.75).abs() < 4.0 * est.standard_error() + 1e-12);
    }

    #[test]
    fn short_link_pilot() {
        let t = Thresholds::new(80.0, 213.0, 345.0).unwrap();
        let est = simulate_link(&config(1.0, 150, t)).unwrap();
        assert!(est.ser() < 0.05, "ser {}", est.ser());
        for s in 0..4 {
            let row = est.confusion[s];
            assert!(row[s] > row.iter().sum::<u64>() / 2);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let t = Thresholds::new(108.0, 198.0, 287.0).unwrap();
        let mut c = config(3.0, 150, t);
        c.snr_db = Some(5.0);
        let a = simulate_link(&c).unwrap();
        let b = simulate_link(&c).unwrap();
        assert_eq!(a, b);
        c.seed += 1;
        assert_ne!(simulate_link(&c).unwrap(), a);
    }

    #[test]
    fn mismatched_thresholds_rejected() {
        let mut c = config(3.0, 150, Thresholds::binary(50.0).unwrap());
        assert!(simulate_link(&c).is_err());
        c.scheme = CskScheme::bcsk(150, MoleculeType::TypeI);
        assert!(simulate_link(&c).is_ok());
    }

    #[test]
    fn passive_reception_runs() {
        let env = DiffusionEnv::new(100.0, Dimension::Three).unwrap();
        let mut c = config(3.0, 150, Thresholds::new(10.0, 20.0, 30.0).unwrap());
        c.channel = ChannelSpec::new(env, 3.0, 4.0, Reception::Passive).unwrap();
        let est = simulate_link(&c).unwrap();
        assert_eq!(est.trials, 20_000);
        assert!(est.ser() < 0.75);
    }
}
