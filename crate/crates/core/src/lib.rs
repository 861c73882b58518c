//! Link-level simulation of diffusion-based molecular communication with
//! concentration shift keying and a single decode-and-forward relay.
//!
//! Layers, bottom up:
//! - [`diffusion`]: first-hitting-time statistics and per-slot arrival probabilities,
//! - [`modulation`]: CSK symbol mapping and threshold detection,
//! - [`link`]: Monte Carlo SER of one hop with ISI and Gaussian count noise,
//! - [`calibration`]: threshold and base-concentration optimization,
//! - [`relay`]: two-hop schemes, learned joint decision regions, location sweeps.

pub mod calibration;
pub mod curve;
pub mod diffusion;
pub mod error;
pub mod link;
pub mod modulation;
pub mod relay;
pub mod special;
pub mod stats;
pub mod stream;

pub use calibration::{
    calibrate, estimate_conditional_pdfs, optimal_concentration, thresholds_by_grid_search,
    thresholds_from_pdf_intersections, CalibrationMethod, CalibrationOptions, ConditionalHistograms,
    HopSetup,
};
pub use curve::{CurveMetadata, SerCurve, SerPoint};
pub use diffusion::{ChannelSpec, DiffusionEnv, Dimension, Reception, SlotTiming};
pub use error::{Error, Result};
pub use link::{simulate_link, LinkConfig, NoiseModel, SerEstimate};
pub use modulation::{detect, CskScheme, Levels, MoleculeType, Thresholds};
pub use special::erfc;
pub use relay::{
    estimate_decision_regions, expand_regions, relay_af_step, relay_location_sweep, simulate_scheme1,
    simulate_scheme2, ChannelParams, DecisionRegionMap, Forwarding, RelayBase, RelayLink, RelayScheme,
    RelaySweep, Topology,
};
