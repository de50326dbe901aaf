//! Sparse Walsh-Hadamard transform recovery from noisy time-domain samples.
//!
//! A `K`-sparse spectrum over `N = 2^n` points is hashed into `C` groups of
//! `B` bins by subsampling along linear maps of `F_2^n`. Each bin is probed
//! at several offsets; a detector decides whether it holds zero, one or many
//! coefficients, and a peeling decoder subtracts single-tons until the
//! spectrum is recovered.
//!
//! ```
//! use rand::SeedableRng;
//! use rand_chacha::ChaCha8Rng;
//! use spright::detect::{Detector, DetectorConfig};
//! use spright::frontend::{build_offsets, build_plan, observe, OffsetParams, PlanRequest, Profile, Variant};
//! use spright::peeling::{decode, default_max_iters};
//! use spright::signal::{draw_spectrum, NoisyAccess};
//!
//! let (n, k) = (12, 8);
//! let mut rng = ChaCha8Rng::seed_from_u64(1);
//! let spectrum = draw_spectrum(n, k, 1.0, &mut rng).unwrap();
//! let plan = build_plan(n, k, PlanRequest::Auto(Profile::Benchmark)).unwrap();
//! let params = OffsetParams::defaults(Variant::Noiseless, n);
//! let offsets = build_offsets(Variant::Noiseless, &plan, params, None, &mut rng).unwrap();
//! let mut access = NoisyAccess::new(spectrum.clone(), 0.0, 7);
//! let obs = observe(&mut access, &plan, &offsets).unwrap();
//! let detector = Detector::new(Variant::Noiseless, DetectorConfig::noiseless(n, 1.0));
//! let (recovered, _) = decode(&obs, &plan, &offsets, &detector, default_max_iters(k));
//! assert_eq!(recovered.support(), spectrum.support());
//! ```

pub mod analysis;
pub mod codes;
pub mod detect;
pub mod experiment;
pub mod frontend;
pub mod fwht;
pub mod gf2;
pub mod peeling;
pub mod signal;
pub mod sketch;

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/indices.md")]
    mod indices {}
    #[doc = include_str!("../../../book/src/transform.md")]
    mod transform {}
    #[doc = include_str!("../../../book/src/aliasing.md")]
    mod aliasing {}
    #[doc = include_str!("../../../book/src/detection.md")]
    mod detection {}
    #[doc = include_str!("../../../book/src/peeling.md")]
    mod peeling {}
    #[doc = include_str!("../../../book/src/codes.md")]
    mod codes {}
    #[doc = include_str!("../../../book/src/sketching.md")]
    mod sketching {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
