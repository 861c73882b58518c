//! Free-diffusion concentration and first-hitting-time statistics.
//!
//! Units throughout: micrometres, seconds, molecules. Every function is a pure
//! function of its arguments.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{require, Error, Result};
use crate::special::erfc;

/// Longest ISI memory used when none is configured.
pub const MAX_ISI_LENGTH: usize = 20;

/// Taps past the first whose probability falls below this fraction of the
/// first-slot probability are dropped.
pub const ISI_TAIL_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dimension {
    One,
    Three,
}

impl Dimension {
    pub fn as_u8(self) -> u8 {
        match self {
            Dimension::One => 1,
            Dimension::Three => 3,
        }
    }

    pub fn from_u8(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Dimension::One),
            3 => Ok(Dimension::Three),
            other => Err(Error::InvalidParameter {
                name: "dimension",
                value: other as f64,
                reason: "must be 1 or 3",
            }),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The medium molecules diffuse through.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionEnv {
    diffusion_coefficient: f64,
    dimension: Dimension,
}

impl DiffusionEnv {
    /// `diffusion_coefficient` is in um^2/s and must be positive.
    pub fn new(diffusion_coefficient: f64, dimension: Dimension) -> Result<Self> {
        require(
            diffusion_coefficient > 0.0 && diffusion_coefficient.is_finite(),
            "diffusion_coefficient",
            diffusion_coefficient,
            "must be positive and finite",
        )?;
        Ok(Self {
            diffusion_coefficient,
            dimension,
        })
    }

    pub fn diffusion_coefficient(&self) -> f64 {
        self.diffusion_coefficient
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }
}

/// How a receiver counts molecules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reception {
    /// Molecules are removed on first contact and counted once.
    Absorbing,
    /// Molecules inside the receiver volume are counted; they pass through.
    Passive,
}

impl Reception {
    pub fn name(self) -> &'static str {
        match self {
            Reception::Absorbing => "absorbing",
            Reception::Passive => "passive",
        }
    }
}

/// Geometry and physics of one transmitter-to-receiver diffusion link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    env: DiffusionEnv,
    distance: f64,
    receiver_radius: f64,
    reception: Reception,
}

impl ChannelSpec {
    pub fn new(
        env: DiffusionEnv,
        distance: f64,
        receiver_radius: f64,
        reception: Reception,
    ) -> Result<Self> {
        require(
            distance > 0.0 && distance.is_finite(),
            "distance",
            distance,
            "must be positive and finite",
        )?;
        require(
            receiver_radius > 0.0 && receiver_radius.is_finite(),
            "receiver_radius",
            receiver_radius,
            "must be positive and finite",
        )?;
        if reception == Reception::Passive && env.dimension() != Dimension::Three {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: env.dimension().as_u8(),
            });
        }
        Ok(Self {
            env,
            distance,
            receiver_radius,
            reception,
        })
    }

    /// Absorbing receiver at `distance`.
    pub fn absorbing(env: DiffusionEnv, distance: f64, receiver_radius: f64) -> Result<Self> {
        Self::new(env, distance, receiver_radius, Reception::Absorbing)
    }

    /// Same physics, different distance.
    pub fn with_distance(&self, distance: f64) -> Result<Self> {
        Self::new(self.env, distance, self.receiver_radius, self.reception)
    }

    pub fn env(&self) -> DiffusionEnv {
        self.env
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn receiver_radius(&self) -> f64 {
        self.receiver_radius
    }

    pub fn reception(&self) -> Reception {
        self.reception
    }

    fn d(&self) -> f64 {
        self.env.diffusion_coefficient
    }

    fn require_dimension(&self, expected: Dimension) -> Result<()> {
        if self.env.dimension == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: expected.as_u8(),
                found: self.env.dimension.as_u8(),
            })
        }
    }

    fn require_reception(&self, expected: Reception) -> Result<()> {
        if self.reception == expected {
            Ok(())
        } else {
            Err(Error::ReceptionMismatch {
                expected: expected.name(),
                found: self.reception.name(),
            })
        }
    }
}

/// Point-source concentration per emitted molecule at radius `r` and time `t`,
/// in molecules per um^n.
pub fn concentration(r: f64, t: f64, env: DiffusionEnv) -> Result<f64> {
    require(t > 0.0, "t", t, "must be positive")?;
    require(r >= 0.0, "r", r, "must be non-negative")?;
    let four_dt = 4.0 * env.diffusion_coefficient * t;
    let n = env.dimension.as_u8() as f64;
    Ok((PI * four_dt).powf(-n / 2.0) * (-r * r / four_dt).exp())
}

/// First-hitting-time density of a 1-D absorbing boundary at distance `d`.
pub fn pdf_hit_1d(t: f64, spec: &ChannelSpec) -> Result<f64> {
    spec.require_dimension(Dimension::One)?;
    require(t > 0.0, "t", t, "must be positive")?;
    Ok(first_passage_density(t, spec.distance, spec.d()))
}

/// Probability that a 1-D molecule has been absorbed by time `t`.
pub fn cdf_hit_1d(t: f64, spec: &ChannelSpec) -> Result<f64> {
    require(t >= 0.0, "t", t, "must be non-negative")?;
    Ok(first_passage_cdf(t, spec.distance, spec.d()))
}

/// Hitting rate of molecules on an absorbing sphere of radius `r_r` whose
/// surface is `d` away from the point source.
pub fn rate_hit_3d(t: f64, spec: &ChannelSpec) -> Result<f64> {
    spec.require_dimension(Dimension::Three)?;
    require(t > 0.0, "t", t, "must be positive")?;
    Ok(sphere_capture_fraction(spec) * first_passage_density(t, spec.distance, spec.d()))
}

/// Fraction of molecules absorbed by the sphere up to time `t`.
pub fn cdf_hit_3d(t: f64, spec: &ChannelSpec) -> Result<f64> {
    require(t >= 0.0, "t", t, "must be non-negative")?;
    Ok(sphere_capture_fraction(spec) * first_passage_cdf(t, spec.distance, spec.d()))
}

/// Hit CDF for the channel's own dimension.
pub fn cdf_hit(t: f64, spec: &ChannelSpec) -> Result<f64> {
    match spec.env.dimension {
        Dimension::One => cdf_hit_1d(t, spec),
        Dimension::Three => cdf_hit_3d(t, spec),
    }
}

/// `lim t->inf` of the hit CDF: 1 in 1-D, `r_r / (d + r_r)` in 3-D.
pub fn eventual_hit_probability(spec: &ChannelSpec) -> f64 {
    match spec.env.dimension {
        Dimension::One => 1.0,
        Dimension::Three => sphere_capture_fraction(spec),
    }
}

/// Expected molecule count inside a passive spherical receiver at time `t`.
pub fn passive_expected_count(t: f64, spec: &ChannelSpec, emitted: u64) -> Result<f64> {
    spec.require_reception(Reception::Passive)?;
    spec.require_dimension(Dimension::Three)?;
    let volume = 4.0 / 3.0 * PI * spec.receiver_radius.powi(3);
    Ok(emitted as f64 * volume * concentration(spec.distance, t, spec.env)?)
}

/// Symbol slot length and the counting window at the start of each slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTiming {
    symbol_duration: f64,
    sampling_duration: f64,
}

impl SlotTiming {
    pub fn new(symbol_duration: f64, sampling_duration: f64) -> Result<Self> {
        require(
            symbol_duration > 0.0 && symbol_duration.is_finite(),
            "symbol_duration",
            symbol_duration,
            "must be positive and finite",
        )?;
        require(
            sampling_duration > 0.0 && sampling_duration <= symbol_duration,
            "sampling_duration",
            sampling_duration,
            "must be positive and no longer than the symbol duration",
        )?;
        Ok(Self {
            symbol_duration,
            sampling_duration,
        })
    }

    /// Counting over the whole slot.
    pub fn full_slot(symbol_duration: f64) -> Result<Self> {
        Self::new(symbol_duration, symbol_duration)
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
    }

    pub fn sampling_duration(&self) -> f64 {
        self.sampling_duration
    }
}

/// Probability that a molecule emitted at the start of slot 1 is absorbed
/// during slot `k`, for `k = 1..=isi_length`.
///
/// `p_k = cdf(k ts) - cdf((k-1) ts)`; partial sums telescope to `cdf(k ts)`.
pub fn slot_hit_probabilities(
    spec: &ChannelSpec,
    slot_duration: f64,
    isi_length: usize,
) -> Result<Vec<f64>> {
    window_hit_probabilities(spec, SlotTiming::full_slot(slot_duration)?, isi_length)
}

/// Like [`slot_hit_probabilities`] but counting only during the sampling
/// window `[(k-1) ts, (k-1) ts + t_samp]` of each slot.
pub fn window_hit_probabilities(
    spec: &ChannelSpec,
    timing: SlotTiming,
    isi_length: usize,
) -> Result<Vec<f64>> {
    spec.require_reception(Reception::Absorbing)?;
    require(isi_length >= 1, "isi_length", isi_length as f64, "must be at least 1")?;
    let ts = timing.symbol_duration;
    let mut probs = Vec::with_capacity(isi_length);
    for k in 0..isi_length {
        let start = k as f64 * ts;
        let hi = cdf_hit(start + timing.sampling_duration, spec)?;
        let lo = cdf_hit(start, spec)?;
        probs.push((hi - lo).max(0.0));
    }
    Ok(probs)
}

/// Expected count per emitted molecule seen by a passive receiver at the end
/// of the sampling window of slot `k`, for `k = 1..=isi_length`.
pub fn passive_slot_means(
    spec: &ChannelSpec,
    timing: SlotTiming,
    isi_length: usize,
) -> Result<Vec<f64>> {
    require(isi_length >= 1, "isi_length", isi_length as f64, "must be at least 1")?;
    (0..isi_length)
        .map(|k| {
            let t = k as f64 * timing.symbol_duration + timing.sampling_duration;
            passive_expected_count(t, spec, 1)
        })
        .collect()
}

/// Smallest `L` with `p_{L+1} < ISI_TAIL_RATIO * p_1`, capped at
/// [`MAX_ISI_LENGTH`].
pub fn default_isi_length(spec: &ChannelSpec, timing: SlotTiming) -> Result<usize> {
    let taps = match spec.reception {
        Reception::Absorbing => window_hit_probabilities(spec, timing, MAX_ISI_LENGTH + 1)?,
        Reception::Passive => passive_slot_means(spec, timing, MAX_ISI_LENGTH + 1)?,
    };
    let cutoff = ISI_TAIL_RATIO * taps[0];
    Ok((1..=MAX_ISI_LENGTH)
        .find(|&len| taps[len] < cutoff)
        .unwrap_or(MAX_ISI_LENGTH))
}

fn sphere_capture_fraction(spec: &ChannelSpec) -> f64 {
    spec.receiver_radius / (spec.distance + spec.receiver_radius)
}

fn first_passage_density(t: f64, d: f64, diff: f64) -> f64 {
    d / (4.0 * PI * diff * t * t * t).sqrt() * (-d * d / (4.0 * diff * t)).exp()
}

fn first_passage_cdf(t: f64, d: f64, diff: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    erfc(d / (4.0 * diff * t).sqrt())
}
