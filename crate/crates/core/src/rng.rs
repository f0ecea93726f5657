//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` seeded with a
//! 64-bit value. Seeds for independent streams are derived from a master seed
//! with [`derive_seed`], a counter-based construction built on the SplitMix64
//! finalizer, so replicate `r` of a study sees the same streams no matter
//! which thread evaluates it or in which order.
//!
//! Standard normals use inversion: a 53-bit uniform on the open interval
//! (0, 1) is mapped through the normal quantile function
//! `-sqrt(2) * erfc_inv(2u)`. Ports to other languages can reproduce the
//! distribution exactly, though not the ChaCha bit stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tag separating independent random streams derived from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamTag {
    Population = 0x706f_7075,
    Sampling = 0x7361_6d70,
    Response = 0x7265_7370,
}

/// The SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `mix(master, index, tag)`: seed of stream `tag` for work unit `index`.
pub fn derive_seed(master: u64, index: u64, tag: StreamTag) -> u64 {
    let a = splitmix64(master ^ (tag as u64).rotate_left(32));
    let b = splitmix64(a ^ index);
    splitmix64(b ^ tag as u64)
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform on the open interval (0, 1) with 53 bits of resolution.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let bits = rng.next_u64() >> 11;
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile.
pub fn normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * u)
}

/// Standard normal draw by inversion of [`open_unit`].
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    normal_quantile(open_unit(rng))
}
