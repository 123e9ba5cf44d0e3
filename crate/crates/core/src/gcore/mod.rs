//! Uncertainty sets, sublinear generators, coefficient bundles, grids and
//! cylinder functionals shared by every other module.

mod cylinder;
mod driver;
mod generator;
mod grid;

pub use cylinder::{CylinderFn, CylinderFunctional};
pub use driver::{
    preset_driver, Coefficient, DriverBuilder, DriverSpec, FDriver, GDriver, GrowthConstants,
    Params, Payoff, Structure, DRIVER_PRESETS, PAYOFF_PRESETS,
};
pub use generator::GFunction1D;
pub use grid::Grid1D;

/// `make_gfunction`: validated constructor for the generator interval.
pub fn make_gfunction(sigma_low: f64, sigma_high: f64) -> crate::Result<GFunction1D> {
    GFunction1D::new(sigma_low, sigma_high)
}
