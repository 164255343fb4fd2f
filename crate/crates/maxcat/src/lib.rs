//! Symmetric-hyperbolic model of non-isothermal compressible viscoelastic
//! flow (Maxwell stress relaxation + Maxwell-Cattaneo heat conduction),
//! formulated as a first-order system of conservation laws with stiff
//! relaxation sources.
//!
//! The crate provides
//!
//! * the 24-component conserved state and its thermodynamic closure
//!   ([`state`], [`eos`], [`closure`]),
//! * physical fluxes, flux Jacobians and symmetrizer diagnostics ([`flux`]),
//! * a 1D slab-symmetric finite-volume solver with Strang-split stiff
//!   relaxation ([`solver`]),
//! * a numerical certification suite for the convexity of the mathematical
//!   entropy, via closed-form principal minors and sampled finite-difference
//!   Hessians ([`convexity`]),
//! * a 40-component two-network (K-BKZ type) extension carrying the
//!   cofactor of the deformation gradient as an independent field ([`kbkz`]),
//! * config parsing and CSV output for the `maxcat` binary ([`config`],
//!   [`output`]).
//!
//! Everything is deterministic: sampling is ChaCha-seeded, and parallel
//! loops write to indexed slots with sequential reductions, so results are
//! bit-identical for every `--threads` value.

pub mod closure;
pub mod config;
pub mod convexity;
pub mod eos;
pub mod fd;
pub mod flux;
pub mod kbkz;
pub mod output;
pub mod solver;
pub mod state;
pub mod tensor;
