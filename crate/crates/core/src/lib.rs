//! Photon-pair source models, time-tag simulation and correlation analysis.

pub mod analytic;
pub mod cluster;
pub mod correlator;
pub mod error;
pub mod fit;
pub mod model_core;
pub mod quad;
pub mod simulator;
pub mod stream;
pub mod tagio;

pub use analytic::{EfficiencySummary, PairSourceOperatingPoint, RateSummary};
pub use cluster::{ClusterLine, CombSpec, DriftWalk, StrainModel};
pub use correlator::{ChannelRoles, CoincidenceResult, CorrelationHistogram, G2Curve, HeraldedG2Result, StreamSummary, Window};
pub use error::{Error, Result};
pub use fit::TwoSidedExpFit;
pub use model_core::{EtalonSpec, IrfSpec, SpectralLine};
pub use simulator::{ArmParams, DetectorParams, Experiment, SourceParams};
pub use stream::{Tag, TimeTagStream, StreamSet, APD1, APD2, APD3};
pub use tagio::Ptt1Header;
