//! Semiclassical spectral toolkit for magnetic Laplacians `1/2 nabla* nabla + k V`
//! acting on sections of `L^k (x) A` over flat tori.

pub mod acceptance;
pub mod chern_rr;
pub mod eigensolver;
pub mod geometry;
pub mod intervals;
pub mod lattice;
pub mod model_spectrum;
pub mod quadrature;
pub mod spectral_analysis;
pub mod symbol_calculus;
