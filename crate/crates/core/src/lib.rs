//! Density-profile classification of grid-based mobile phone data and
//! area-weighted linkage of grid counts to census zones.

pub mod classify;
pub mod cluster;
pub mod fboxplot;
pub mod geo;
pub mod hog;
pub mod linkage;
pub mod series;
pub mod synth;
