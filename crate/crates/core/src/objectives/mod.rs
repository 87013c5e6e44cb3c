//! Likelihood objectives and their split into time and mark terms.

mod nll;
mod quadrature;

pub use nll::{
    nll_compensator, nll_density, nll_intensity, Evaluation, GradMode, NllBreakdown, NllForm,
    Objective,
};
pub use quadrature::{
    gauss_legendre, integrate_ground_intensity, Quadrature, QuadratureConfig, QuadratureMethod,
};

#[cfg(test)]
mod tests;
