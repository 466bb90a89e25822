//! Joint beamforming for integrated sensing, communication and powering with
//! rate-splitting multiple access.
//!
//! A base station with `N_t` transmit and `N_r` receive antennas serves `K`
//! information receivers through one common and `K` private streams, charges
//! `L` nonlinear energy harvesters, and senses a point target. The optimizer
//! maximizes the max-min user rate minus `λ·tr(F⁻¹)` (the CRB trace) subject
//! to power and harvesting constraints:
//!
//! * fractional-programming surrogates replace the rates ([`fp`]),
//! * the harvesting constraint and the CRB are linearized around an anchor
//!   ([`energy`], [`sensing`]),
//! * each convex subproblem is solved through its Lagrangian saddle point with
//!   an extragradient method ([`eg`]),
//! * [`algorithm::run`] nests the three loops.
//!
//! ```no_run
//! use iscap::{algorithm, config::SystemConfig, rsma::Mode, scenario};
//!
//! let cfg = SystemConfig::default();
//! let s = scenario::generate_scenario(&cfg, 0)?;
//! let rec = algorithm::run(&s, &cfg, Mode::Rsma)?;
//! println!("MMF {:.3} bit/s/Hz, CRB {:.3e}", rec.mmf_rate, rec.crb);
//! # Ok::<(), iscap::Error>(())
//! ```

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod config;
pub mod eg;
pub mod energy;
pub mod error;
pub mod fp;
pub mod harness;
pub mod linalg;
pub mod rsma;
pub mod scenario;
pub mod sensing;

#[cfg(feature = "oracle")]
#[doc(hidden)]
pub mod oracle;

pub use algorithm::{run, RunRecord};
pub use config::SystemConfig;
pub use error::{Error, Result};
pub use rsma::{Mode, PrecoderState};
pub use scenario::{generate_scenario, Scenario};
