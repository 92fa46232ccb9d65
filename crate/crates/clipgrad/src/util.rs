//! Small numeric helpers shared across modules.

/// Euclidean norm of a slice.
pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn sub_scaled(x: &[f64], scale: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a - scale * b).collect()
}

pub fn add_scaled(x: &[f64], scale: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + scale * b).collect()
}

/// `n` evenly spaced points on [a, b], endpoints included. `n >= 2`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { b } else { a + step * i as f64 })
        .collect()
}

/// SplitMix64 step, used to derive independent rng seeds from composite keys.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a (seed, run, step) triple into a single 64-bit stream key.
pub fn mix_stream_key(seed: u64, run: u64, step: u64) -> u64 {
    let a = splitmix64(seed ^ 0xa076_1d64_78bd_642f);
    let b = splitmix64(a ^ run);
    splitmix64(b ^ step.wrapping_mul(0xe703_7ed1_a0b4_28db))
}
