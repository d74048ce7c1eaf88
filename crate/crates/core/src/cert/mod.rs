//! Robustness certificates: noise radii under which a corrupted pattern is
//! still retrieved, and the harness that checks them empirically.

pub mod lp;
pub mod sdp;
pub mod validate;

pub use lp::{
    certify_lp, fi_parameters, fi_set, roa_polyhedra, separating_normal, Combine, FiRegion, FiSet, LpCertificate,
    LpOptions, LpSide, RoaPolyhedron, Side,
};
pub use sdp::{certify_sdp, certify_sdp_at, SdpCertificate, SdpReport, SdpSearch, SectorBounds, ShiftedSystem};
pub use validate::{
    onset_sweep, rho_grid, validate_certificate, validate_radius, NoiseSpace, OnsetSweep, ValidationConfig,
    ValidationReport,
};
