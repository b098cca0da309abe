//! Defaults shared by every subcommand, printed by `--show-config`.

use poisson_core::isotropy::RANK_TOL;
use poisson_core::monodromy::{DiscretenessOptions, SphereGrid, VariationOptions};
use poisson_core::registry::JacobiGate;
use poisson_core::OdeSettings;
use serde::Serialize;

pub const HOMOTOPY_TOL: f64 = 1e-6;
pub const SCAN_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct Defaults {
    pub jacobi_gate: JacobiGate,
    pub ode: OdeSettings,
    pub homotopy_tol: f64,
    pub area_grid: SphereGrid,
    pub scan_grid: SphereGrid,
    pub variation: VariationOptions,
    pub discreteness: DiscretenessOptions,
    pub scan_discreteness: DiscretenessOptions,
    pub scan_threshold: f64,
    pub isotropy_rank_tol: f64,
}

impl Default for Defaults {
    fn default() -> Self {
        let scan = poisson_core::monodromy::ScanOptions::new((0.0, 1.0), 20);
        Self {
            jacobi_gate: JacobiGate::default(),
            ode: OdeSettings::default(),
            homotopy_tol: HOMOTOPY_TOL,
            area_grid: SphereGrid::default(),
            scan_grid: SphereGrid::coarse(),
            variation: VariationOptions::default(),
            discreteness: DiscretenessOptions::default(),
            scan_discreteness: scan.discreteness,
            scan_threshold: SCAN_THRESHOLD,
            isotropy_rank_tol: RANK_TOL,
        }
    }
}
