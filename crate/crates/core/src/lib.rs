//! Minimal surfaces in hyperbolic 3-space through the cosh-Gordon equation
//! `Δu = 2cosh(2u)` in flat coordinates of the Hopf differential.
//!
//! The modules build, verify and deform such surfaces at chart scale:
//! translation-invariant solutions, a Newton solver for the Dirichlet problem,
//! the hyperboloid-model immersion with exact normal flow, the first-variation
//! formulas for the fundamental forms, and deformations that push the principal
//! curvatures off `±1`.

pub mod acceptance;
pub mod banded;
pub mod deform;
pub mod geometry;
pub mod grid;
pub mod immersion;
pub mod invariant_ode;
pub mod io;
pub mod pde;
pub mod quadrature;
pub mod scalar;
pub mod variation;

pub use scalar::Real;

pub type GridSpec64 = grid::GridSpec<f64>;
pub type GridSpec32 = grid::GridSpec<f32>;
pub type ScalarField64 = grid::ScalarField<f64>;
pub type ScalarField32 = grid::ScalarField<f32>;
pub type OperatorField64 = grid::OperatorField<f64>;
pub type OperatorField32 = grid::OperatorField<f32>;
pub type Mat2x64 = grid::Mat2<f64>;
pub type Mat2x32 = grid::Mat2<f32>;
pub type SurfaceData64 = geometry::SurfaceData<f64>;
pub type SurfaceData32 = geometry::SurfaceData<f32>;
pub type OdeSolution64 = invariant_ode::OdeSolution<f64>;
pub type OdeSolution32 = invariant_ode::OdeSolution<f32>;
pub type ImmersionGrid64 = immersion::ImmersionGrid<f64>;
pub type ImmersionGrid32 = immersion::ImmersionGrid<f32>;
pub type MinkowskiVec64 = immersion::MinkowskiVec<f64>;
pub type MinkowskiVec32 = immersion::MinkowskiVec<f32>;
pub type ZComponent64 = deform::ZComponent<f64>;
pub type ZComponent32 = deform::ZComponent<f32>;
pub type DeformationProfile64 = deform::DeformationProfile<f64>;
pub type DeformationProfile32 = deform::DeformationProfile<f32>;
