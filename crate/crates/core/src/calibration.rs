//! Empirical detector calibration.
//!
//! Thresholds come from crossings of the simulated per-symbol count
//! distributions, or alternatively from a direct SER minimization over a
//! threshold grid. The base concentration is then chosen by comparing SER
//! across candidates with thresholds recalibrated for each.

use rayon::prelude::*;

use crate::curve::{SerCurve, SerPoint};
use crate::diffusion::{ChannelSpec, SlotTiming};
use crate::error::{require, Error, Result};
use crate::link::{
    noise_sigma_from_snr, observation_stream, observe, random_symbol, simulate_hop, EmissionHistory,
    HopChannel, LinkConfig, NoiseModel, SerEstimate,
};
use crate::modulation::{CskScheme, Levels, Thresholds};
use crate::stream::{collect_blocks, derive_seed, substream, tag};

/// Moving-average width applied before locating crossings.
pub const SMOOTHING_BINS: usize = 5;

/// A hop without a detector: everything in [`LinkConfig`] except thresholds
/// and symbol count.
#[derive(Debug, Clone, PartialEq)]
pub struct HopSetup {
    pub channel: ChannelSpec,
    pub scheme: CskScheme,
    pub timing: SlotTiming,
    pub isi_length: Option<usize>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl HopSetup {
    pub fn hop(&self) -> Result<HopChannel> {
        HopChannel::new(self.channel, self.timing, self.isi_length)
    }

    pub fn noise(&self, hop: &HopChannel) -> Result<NoiseModel> {
        match self.snr_db {
            None => Ok(NoiseModel::noiseless()),
            Some(db) => NoiseModel::new(noise_sigma_from_snr(db, &self.scheme, hop.first_slot_fraction())?),
        }
    }

    pub fn noiseless(&self) -> Self {
        Self {
            snr_db: None,
            ..self.clone()
        }
    }

    pub fn link(&self, thresholds: Thresholds, n_symbols: usize) -> LinkConfig {
        LinkConfig {
            channel: self.channel,
            scheme: self.scheme,
            thresholds,
            timing: self.timing,
            isi_length: self.isi_length,
            n_symbols,
            snr_db: self.snr_db,
            seed: self.seed,
        }
    }
}

/// Per-symbol relative-frequency histograms on a shared grid.
///
/// Bin `b` is centred on `origin + b * bin_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalHistograms {
    origin: f64,
    bin_width: f64,
    freqs: Vec<Vec<f64>>,
    means: Vec<f64>,
}

impl ConditionalHistograms {
    /// Bins raw observations, one vector per symbol.
    pub fn from_observations(samples: &[Vec<f64>], bin_width: f64) -> Result<Self> {
        require(bin_width > 0.0, "bin_width", bin_width, "must be positive")?;
        if samples.is_empty() || samples.iter().any(Vec::is_empty) {
            return Err(Error::Empty("per-symbol observations"));
        }
        let lo = samples.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let origin = (lo / bin_width).round() * bin_width;
        let bins = ((hi - origin) / bin_width).round() as usize + 1;
        let mut freqs = vec![vec![0.0; bins]; samples.len()];
        let mut means = Vec::with_capacity(samples.len());
        for (hist, obs) in freqs.iter_mut().zip(samples) {
            let weight = 1.0 / obs.len() as f64;
            for &y in obs {
                let b = (((y - origin) / bin_width).round() as usize).min(bins - 1);
                hist[b] += weight;
            }
            means.push(obs.iter().sum::<f64>() / obs.len() as f64);
        }
        Ok(Self {
            origin,
            bin_width,
            freqs,
            means,
        })
    }

    /// Histograms given directly as frequencies; each row is normalized.
    pub fn from_frequencies(origin: f64, bin_width: f64, rows: Vec<Vec<f64>>) -> Result<Self> {
        require(bin_width > 0.0, "bin_width", bin_width, "must be positive")?;
        let bins = rows.first().map_or(0, Vec::len);
        if bins == 0 || rows.iter().any(|r| r.len() != bins) {
            return Err(Error::Empty("equal-length histogram rows"));
        }
        let mut freqs = Vec::with_capacity(rows.len());
        let mut means = Vec::with_capacity(rows.len());
        for row in rows {
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return Err(Error::Empty("histogram mass"));
            }
            let norm: Vec<f64> = row.iter().map(|v| v / total).collect();
            let mean = norm
                .iter()
                .enumerate()
                .map(|(b, p)| p * (origin + b as f64 * bin_width))
                .sum();
            freqs.push(norm);
            means.push(mean);
        }
        Ok(Self {
            origin,
            bin_width,
            freqs,
            means,
        })
    }

    pub fn symbols(&self) -> usize {
        self.freqs.len()
    }

    pub fn bins(&self) -> usize {
        self.freqs[0].len()
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.origin + bin as f64 * self.bin_width
    }

    pub fn frequencies(&self, symbol: usize) -> &[f64] {
        &self.freqs[symbol]
    }

    pub fn mean(&self, symbol: usize) -> f64 {
        self.means[symbol]
    }

    /// First and last occupied bins.
    pub fn support(&self, symbol: usize) -> (usize, usize) {
        let h = &self.freqs[symbol];
        let first = h.iter().position(|&v| v > 0.0).unwrap_or(0);
        let last = h.iter().rposition(|&v| v > 0.0).unwrap_or(0);
        (first, last)
    }

    /// Centred moving average over [`SMOOTHING_BINS`] bins, zero outside.
    pub fn smoothed(&self, symbol: usize) -> Vec<f64> {
        let h = &self.freqs[symbol];
        let half = SMOOTHING_BINS / 2;
        (0..h.len())
            .map(|b| {
                let lo = b.saturating_sub(half);
                let hi = (b + half + 1).min(h.len());
                h[lo..hi].iter().sum::<f64>() / SMOOTHING_BINS as f64
            })
            .collect()
    }
}

/// Simulates each symbol in isolation behind `isi_length - 1` uniformly random
/// predecessors and histograms the observations with unit-molecule bins.
pub fn estimate_conditional_pdfs(setup: &HopSetup, n_per_symbol: usize) -> Result<ConditionalHistograms> {
    require(n_per_symbol >= 1, "n_per_symbol", n_per_symbol as f64, "must be at least 1")?;
    let hop = setup.hop()?;
    let noise = setup.noise(&hop)?;
    let samples = isolated_observations(&hop, &setup.scheme, &noise, n_per_symbol, setup.seed);
    ConditionalHistograms::from_observations(&samples, 1.0)
}

fn isolated_observations(
    hop: &HopChannel,
    scheme: &CskScheme,
    noise: &NoiseModel,
    n_per_symbol: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    (0..scheme.levels.count())
        .into_par_iter()
        .map(|symbol| {
            collect_blocks(n_per_symbol, |block, count| {
                let mut rng = substream(seed, &[tag::CALIBRATION, symbol as u64, block]);
                let mut out = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut history = EmissionHistory::new(hop.isi_length());
                    for _ in 1..hop.isi_length() {
                        let prev = random_symbol(&mut rng, scheme.levels);
                        history.push(prev as u64 * scheme.base_concentration);
                    }
                    history.push(symbol as u64 * scheme.base_concentration);
                    let arrivals = hop.sample(&history, &mut rng);
                    out.push(observe(arrivals, noise, &mut rng));
                }
                out
            })
            .into_iter()
            .flatten()
            .collect()
        })
        .collect()
}

/// How a threshold was placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Crossing of the smoothed neighbouring histograms.
    Crossing,
    /// Histograms do not overlap; midpoint of the gap between supports.
    SupportGap,
    /// Histograms never cross; midpoint of the two means.
    NoCrossing,
}

/// Thresholds plus how each boundary was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedThresholds {
    pub thresholds: Thresholds,
    pub kinds: Vec<BoundaryKind>,
    /// Raw boundary positions were out of order (or not positive) and had to
    /// be pushed apart.
    pub reordered: bool,
}

/// Thresholds at the crossings of adjacent smoothed conditional histograms.
///
/// Where adjacent histograms cross more than once the crossing nearest the
/// midpoint of their means is used.
pub fn thresholds_from_pdf_intersections(h: &ConditionalHistograms) -> Result<CalibratedThresholds> {
    let levels = Levels::from_count(h.symbols() as u8)?;
    let smoothed: Vec<Vec<f64>> = (0..h.symbols()).map(|s| h.smoothed(s)).collect();
    let mut raw = Vec::with_capacity(levels.boundaries());
    let mut kinds = Vec::with_capacity(levels.boundaries());
    for i in 1..h.symbols() {
        let (_, last_lo) = h.support(i - 1);
        let (first_hi, _) = h.support(i);
        if last_lo < first_hi {
            raw.push(0.5 * (h.center(last_lo) + h.center(first_hi)));
            kinds.push(BoundaryKind::SupportGap);
            continue;
        }
        let target = 0.5 * (h.mean(i - 1) + h.mean(i));
        match closest_crossing(h, &smoothed[i - 1], &smoothed[i], target) {
            Some(x) => {
                raw.push(x);
                kinds.push(BoundaryKind::Crossing);
            }
            None => {
                raw.push(target);
                kinds.push(BoundaryKind::NoCrossing);
            }
        }
    }
    let (ordered, reordered) = enforce_order(&raw, h.bin_width());
    Ok(CalibratedThresholds {
        thresholds: Thresholds::for_levels(levels, &ordered)?,
        kinds,
        reordered,
    })
}

/// Points where `lower - upper` changes sign from positive to negative,
/// linearly interpolated; returns the one nearest `target`.
fn closest_crossing(h: &ConditionalHistograms, lower: &[f64], upper: &[f64], target: f64) -> Option<f64> {
    let diff: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| a - b).collect();
    let mut best: Option<f64> = None;
    let mut j = 0;
    while j < diff.len() {
        if diff[j] > 0.0 {
            if let Some(k) = (j + 1..diff.len()).find(|&k| diff[k] != 0.0) {
                if diff[k] < 0.0 {
                    let (xj, xk) = (h.center(j), h.center(k));
                    let x = xj + (xk - xj) * diff[j] / (diff[j] - diff[k]);
                    if best.is_none_or(|b| (x - target).abs() < (b - target).abs()) {
                        best = Some(x);
                    }
                }
                j = k;
                continue;
            }
        }
        j += 1;
    }
    best
}

/// Makes boundaries strictly increasing and positive, moving offenders by
/// half a bin past their predecessor.
fn enforce_order(raw: &[f64], bin_width: f64) -> (Vec<f64>, bool) {
    let mut out = Vec::with_capacity(raw.len());
    let mut changed = false;
    let mut prev = 0.0;
    for &t in raw {
        let v = if t > prev { t } else {
            changed = true;
            prev + 0.5 * bin_width
        };
        out.push(v);
        prev = v;
    }
    (out, changed)
}

/// Result of the exact threshold search.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub thresholds: Thresholds,
    pub errors: u64,
    pub trials: u64,
}

impl GridSearchResult {
    pub fn ser(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }
}

/// Threshold tuple on the grid `k * resolution` (`k >= 1`) minimizing the
/// number of detection errors over `observations`.
///
/// The search is exhaustive over strictly increasing tuples; among optimal
/// tuples the lexicographically smallest is returned.
pub fn search_thresholds(
    observations: &[(u8, f64)],
    levels: Levels,
    resolution: f64,
) -> Result<GridSearchResult> {
    require(resolution > 0.0 && resolution.is_finite(), "grid_resolution", resolution, "must be positive")?;
    if observations.is_empty() {
        return Err(Error::Empty("observations"));
    }
    let max = observations.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
    let min = observations.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    let first = ((min / resolution).floor() as i64).max(1);
    let last = ((max / resolution).ceil() as i64 + 1).max(first + levels.boundaries() as i64);
    let grid: Vec<f64> = (first..=last).map(|k| k as f64 * resolution).collect();

    let k = levels.count() as usize;
    let mut sorted = vec![Vec::new(); k];
    for &(s, y) in observations {
        sorted[s as usize].push(y);
    }
    for v in &mut sorted {
        v.sort_by(f64::total_cmp);
    }
    // below[s][j] = #{class s observations < grid[j]}
    let below: Vec<Vec<i64>> = sorted
        .iter()
        .map(|v| grid.iter().map(|&t| v.partition_point(|&y| y < t) as i64).collect())
        .collect();
    let totals: Vec<i64> = sorted.iter().map(|v| v.len() as i64).collect();

    // correct(t) = below0(t1) + sum_i [below_i(t_{i+1}) - below_i(t_i)] + (n_last - below_last(t_last))
    // gain_i(j) = below_{i-1}(j) - below_i(j) collects every term that depends on t_i.
    let gains: Vec<Vec<i64>> = (1..k)
        .map(|i| (0..grid.len()).map(|j| below[i - 1][j] - below[i][j]).collect())
        .collect();

    let g = grid.len();
    // suffix[i][j]: best total of gains i.. with t_i chosen strictly after j
    // (or anywhere when j == g, meaning unconstrained); choice[i][j] its argmin index.
    let boundaries = k - 1;
    let mut best_from: Vec<Vec<i64>> = vec![vec![i64::MIN; g]; boundaries];
    let mut pick: Vec<Vec<usize>> = vec![vec![usize::MAX; g]; boundaries];
    for i in (0..boundaries).rev() {
        // value(t_i = j) = gains[i][j] + best continuation after j
        let value = |j: usize, best_from: &Vec<Vec<i64>>| -> i64 {
            if i + 1 == boundaries {
                gains[i][j]
            } else if j + 1 < g && best_from[i + 1][j] != i64::MIN {
                gains[i][j] + best_from[i + 1][j]
            } else {
                i64::MIN
            }
        };
        // best_from[i][j] = max over m > j of value(m), smallest m on ties
        let mut run_best = i64::MIN;
        let mut run_arg = usize::MAX;
        for j in (0..g).rev() {
            best_from[i][j] = run_best;
            pick[i][j] = run_arg;
            let v = value(j, &best_from);
            if v != i64::MIN && v >= run_best {
                run_best = v;
                run_arg = j;
            }
        }
        if i == 0 {
            // unconstrained first boundary
            let mut best = i64::MIN;
            let mut arg = usize::MAX;
            for j in 0..g {
                let v = value(j, &best_from);
                if v > best {
                    best = v;
                    arg = j;
                }
            }
            let mut idx = vec![arg];
            for row in &pick[1..boundaries] {
                let prev = *idx.last().unwrap();
                idx.push(row[prev]);
            }
            let taus: Vec<f64> = idx.iter().map(|&j| grid[j]).collect();
            let correct = best + totals[k - 1];
            let trials = observations.len() as u64;
            return Ok(GridSearchResult {
                thresholds: Thresholds::for_levels(levels, &taus)?,
                errors: trials - correct as u64,
                trials,
            });
        }
    }
    unreachable!("at least one boundary")
}

/// Grid search on a freshly simulated calibration stream of `n_symbols`.
pub fn thresholds_by_grid_search(
    setup: &HopSetup,
    n_symbols: usize,
    grid_resolution: f64,
) -> Result<GridSearchResult> {
    let hop = setup.hop()?;
    let noise = setup.noise(&hop)?;
    let stream = observation_stream(&hop, &setup.scheme, &noise, n_symbols, setup.seed);
    search_thresholds(&stream, setup.scheme.levels, grid_resolution)
}

/// Calibration procedure used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMethod {
    Intersection,
    GridSearch { resolution: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub method: CalibrationMethod,
    /// Samples per symbol (intersection) or stream length (grid search).
    pub samples: usize,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            method: CalibrationMethod::Intersection,
            samples: 50_000,
        }
    }
}

/// Noiseless calibration of `setup`'s detector, on a seed stream disjoint
/// from the one used for SER estimation.
pub fn calibrate(setup: &HopSetup, options: &CalibrationOptions) -> Result<CalibratedThresholds> {
    let train = HopSetup {
        seed: derive_seed(setup.seed, &[tag::CALIBRATION]),
        ..setup.noiseless()
    };
    match options.method {
        CalibrationMethod::Intersection => {
            thresholds_from_pdf_intersections(&estimate_conditional_pdfs(&train, options.samples)?)
        }
        CalibrationMethod::GridSearch { resolution } => {
            let r = thresholds_by_grid_search(&train, options.samples, resolution)?;
            Ok(CalibratedThresholds {
                kinds: vec![BoundaryKind::Crossing; r.thresholds.as_slice().len()],
                thresholds: r.thresholds,
                reordered: false,
            })
        }
    }
}

/// One candidate of a concentration sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationPoint {
    pub concentration: u64,
    pub thresholds: Thresholds,
    pub estimate: SerEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSweep {
    pub best: u64,
    pub points: Vec<ConcentrationPoint>,
}

impl ConcentrationSweep {
    pub fn curve(&self, series: impl Into<String>) -> SerCurve {
        SerCurve::new(
            "concentration",
            "molecules",
            series,
            self.points
                .iter()
                .map(|p| SerPoint::from_estimate(p.concentration as f64, &p.estimate))
                .collect(),
        )
    }
}

/// SER for every candidate base concentration with thresholds recalibrated
/// per candidate; the argmin breaks ties toward the smaller concentration.
///
/// `base.scheme.base_concentration` is ignored. All candidates share the
/// symbol stream of `base.seed`.
pub fn optimal_concentration(
    candidates: &[u64],
    base: &HopSetup,
    calibration: &CalibrationOptions,
    n_symbols: usize,
) -> Result<ConcentrationSweep> {
    if candidates.is_empty() {
        return Err(Error::Empty("concentration candidates"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let points = sorted
        .par_iter()
        .map(|&n| {
            let setup = HopSetup {
                scheme: base.scheme.with_concentration(n),
                ..base.clone()
            };
            let thresholds = calibrate(&setup, calibration)?.thresholds;
            let hop = setup.hop()?;
            let noise = setup.noise(&hop)?;
            let estimate = simulate_hop(&hop, &setup.scheme, &thresholds, &noise, n_symbols, setup.seed);
            Ok(ConcentrationPoint {
                concentration: n,
                thresholds,
                estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .fold(None::<&ConcentrationPoint>, |acc, p| match acc {
            Some(a) if a.estimate.errors * p.estimate.trials <= p.estimate.errors * a.estimate.trials => Some(a),
            _ => Some(p),
        })
        .expect("non-empty")
        .concentration;
    Ok(ConcentrationSweep { best, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DiffusionEnv, Dimension};
    use crate::modulation::{detect, MoleculeType};

    fn setup(d: f64, n: u64) -> HopSetup {
        HopSetup {
            channel: ChannelSpec::absorbing(DiffusionEnv::new(100.0, Dimension::One).unwrap(), d, 4.0).unwrap(),
            scheme: CskScheme::qcsk(n, MoleculeType::TypeI),
            timing: SlotTiming::full_slot(0.15).unwrap(),
            isi_length: None,
            snr_db: None,
            seed: 5,
        }
    }

    /// Bin `b` centred on `b - 100`, wide enough that no row is truncated.
    fn gaussian_rows(means: &[f64], sd: f64, bins: usize) -> Vec<Vec<f64>> {
        means
            .iter()
            .map(|m| {
                (0..bins)
                    .map(|b| (-(b as f64 - 100.0 - m).powi(2) / (2.0 * sd * sd)).exp())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn histograms_are_normalized() {
        let h = estimate_conditional_pdfs(&setup(3.0, 150), 4_000).unwrap();
        for s in 0..4 {
            let total: f64 = h.frequencies(s).iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
        assert!(h.mean(3) > h.mean(0));
    }

    #[test]
    fn silent_scheme_concentrates_at_zero() {
        let h = estimate_conditional_pdfs(&setup(3.0, 0), 1_000).unwrap();
        for s in 0..4 {
            assert_eq!(h.support(s), (0, 0));
            assert_eq!(h.center(0), 0.0);
        }
        let t = thresholds_from_pdf_intersections(&h).unwrap();
        assert!(t.reordered);
        assert!(t.thresholds.tau1() > 0.0);
    }

    #[test]
    fn equal_variance_gaussians_cross_at_midpoint() {
        let rows = gaussian_rows(&[40.0, 90.0, 140.0, 190.0], 12.0, 400);
        let h = ConditionalHistograms::from_frequencies(-100.0, 1.0, rows).unwrap();
        let t = thresholds_from_pdf_intersections(&h).unwrap();
        assert_eq!(t.kinds, vec![BoundaryKind::Crossing; 3]);
        for (got, want) in t.thresholds.as_slice().iter().zip([65.0, 115.0, 165.0]) {
            assert!((got - want).abs() < 1e-6, "{got} vs {want}");
        }
    }

    #[test]
    fn unequal_variance_crossing_moves_toward_narrow_peak() {
        // wider upper distribution pulls the crossing below the midpoint
        let mut rows = gaussian_rows(&[40.0, 90.0], 8.0, 400);
        rows[1] = (0..400).map(|b| (-(b as f64 - 190.0).powi(2) / (2.0 * 20.0 * 20.0)).exp()).collect();
        rows.extend(gaussian_rows(&[140.0, 190.0], 8.0, 400));
        let h = ConditionalHistograms::from_frequencies(-100.0, 1.0, rows).unwrap();
        let t = thresholds_from_pdf_intersections(&h).unwrap();
        assert!(t.thresholds.tau1() < 65.0);
    }

    #[test]
    fn disjoint_supports_use_gap_midpoint() {
        let mut rows = vec![vec![0.0; 40]; 4];
        rows[0][2] = 1.0;
        rows[1][10] = 1.0;
        rows[2][20] = 1.0;
        rows[3][36] = 1.0;
        let h = ConditionalHistograms::from_frequencies(0.0, 1.0, rows).unwrap();
        let t = thresholds_from_pdf_intersections(&h).unwrap();
        assert_eq!(t.kinds, vec![BoundaryKind::SupportGap; 3]);
        assert_eq!(t.thresholds.as_slice(), &[6.0, 15.0, 28.0]);
    }

    #[test]
    fn crossing_nearest_midpoint_is_chosen() {
        // lower histogram has a far tail bump past the upper one
        let mut rows = gaussian_rows(&[20.0, 60.0], 6.0, 220);
        rows[0][210] = 0.5;
        rows.extend(gaussian_rows(&[150.0, 200.0], 6.0, 220));
        let h = ConditionalHistograms::from_frequencies(-100.0, 1.0, rows).unwrap();
        let t = thresholds_from_pdf_intersections(&h).unwrap();
        assert!((t.thresholds.tau1() - 40.0).abs() < 2.0, "{}", t.thresholds);
    }

    /// Brute force over all increasing triples on a small grid.
    fn brute_force(obs: &[(u8, f64)], res: f64) -> (Vec<f64>, u64) {
        let max = obs.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        let min = obs.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
        let first = ((min / res).floor() as i64).max(1);
        let last = ((max / res).ceil() as i64 + 1).max(first + 3);
        let grid: Vec<f64> = (first..=last).map(|k| k as f64 * res).collect();
        let mut best = (vec![], u64::MAX);
        for a in 0..grid.len() {
            for b in a + 1..grid.len() {
                for c in b + 1..grid.len() {
                    let t = Thresholds::new(grid[a], grid[b], grid[c]).unwrap();
                    let errs = obs.iter().filter(|(s, y)| detect(*y, &t) != *s).count() as u64;
                    if errs < best.1 {
                        best = (vec![grid[a], grid[b], grid[c]], errs);
                    }
                }
            }
        }
        best
    }

    proptest::proptest! {
        #[test]
        fn grid_search_matches_brute_force(
            obs in proptest::collection::vec((0u8..4, 0.0f64..30.0), 1..40),
            res in proptest::sample::select(vec![1.0, 2.5]),
        ) {
            let fast = search_thresholds(&obs, Levels::Quadruple, res).unwrap();
            let (taus, errs) = brute_force(&obs, res);
            proptest::prop_assert_eq!(fast.errors, errs);
            proptest::prop_assert_eq!(fast.thresholds.as_slice(), &taus[..]);
        }
    }

    #[test]
    fn separable_grid_search_is_smallest_zero_error() {
        let obs = vec![(0, 1.0), (0, 3.0), (1, 10.0), (1, 12.0), (2, 20.0), (3, 30.0)];
        let r = search_thresholds(&obs, Levels::Quadruple, 1.0).unwrap();
        assert_eq!(r.errors, 0);
        assert_eq!(r.thresholds.as_slice(), &[4.0, 13.0, 21.0]);
        let b = search_thresholds(&[(0, 1.0), (1, 5.0)], Levels::Binary, 1.0).unwrap();
        assert_eq!(b.thresholds.as_slice(), &[2.0]);
    }

    #[test]
    fn calibration_is_deterministic_and_ordered() {
        let opts = CalibrationOptions { samples: 5_000, ..Default::default() };
        let a = calibrate(&setup(3.0, 150), &opts).unwrap();
        let b = calibrate(&setup(3.0, 150), &opts).unwrap();
        assert_eq!(a, b);
        let t = a.thresholds.as_slice();
        assert!(0.0 < t[0] && t[0] < t[1] && t[1] < t[2]);
    }

    #[test]
    fn singleton_concentration() {
        let opts = CalibrationOptions { samples: 2_000, ..Default::default() };
        let sweep = optimal_concentration(&[150], &setup(2.0, 1), &opts, 5_000).unwrap();
        assert_eq!(sweep.best, 150);
        assert_eq!(sweep.points.len(), 1);
        assert!(optimal_concentration(&[], &setup(2.0, 1), &opts, 5_000).is_err());
    }

    #[test]
    fn argmin_is_minimal() {
        let opts = CalibrationOptions { samples: 4_000, ..Default::default() };
        let sweep = optimal_concentration(&[50, 100, 150, 300], &setup(3.0, 1), &opts, 10_000).unwrap();
        let best = sweep.points.iter().find(|p| p.concentration == sweep.best).unwrap();
        for p in &sweep.points {
            assert!(best.estimate.ser() <= p.estimate.ser());
        }
        let curve = sweep.curve("noiseless");
        assert_eq!(curve.points.len(), 4);
        assert!(curve.points.windows(2).all(|w| w[0].x < w[1].x));
    }
}
