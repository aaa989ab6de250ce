//! Characteristic exponents and the densities obtained from them by
//! Fourier inversion.

pub mod exponent;
pub mod inversion;
pub mod kernels;
pub mod nuisance;
pub mod stable;
pub mod table;

pub use exponent::{
    psi, psi_alpha_t, psi_alpha_t_rescaled, psi_stable, CachePolicy, CharExponent, Exponent, FnExponent,
    KernelExponent, Scaling, TransitionExponent,
};
pub use nuisance::{JumpLaw, NuisanceSpec};
pub use stable::{psi_stable_closed_form, StableParams};
pub use inversion::{FrequencyPlan, InversionOptions};
pub use kernels::{
    default_grid, density_alpha_t, grid_for, density_limit, f_kernels, f_kernels_with, interpolation_error, transition_density,
    KernelTables, Normalization,
};
pub use table::{invert_points, invert_to_density, CurveTable, DensityTable, GridSpec, TailKind, TailModel};
