#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specedge::profiles::{Kernel, StepProfile};
use specedge::ProfileSpec;

/// Symmetric step profile with 1..=4 blocks and breakpoints at least 0.05
/// apart.
pub fn step_profile() -> impl Strategy<Value = StepProfile> {
    (1usize..=4).prop_flat_map(|m| {
        (
            prop::collection::vec(0.05f64..1.0, m),
            prop::collection::vec(0.0f64..=1.0, m * m),
        )
            .prop_map(move |(gaps, raw)| {
                let total: f64 = gaps.iter().sum();
                let mut b = vec![0.0];
                let mut acc = 0.0;
                for g in &gaps[..m - 1] {
                    acc += g / total;
                    b.push(acc);
                }
                b.push(1.0);
                let sigma = (0..m)
                    .map(|p| (0..m).map(|q| raw[p.min(q) * m + p.max(q)]).collect())
                    .collect();
                StepProfile::new(b, sigma).expect("valid step profile")
            })
    })
}

/// Symmetric node grid decreasing in each index: one minus normalized
/// cumulative sums of nonnegative symmetric increments.
pub fn decreasing_grid() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=5).prop_flat_map(|r| {
        prop::collection::vec(0.0f64..1.0, r * r).prop_map(move |raw| {
            let inc = |p: usize, q: usize| raw[p.min(q) * r + p.max(q)];
            let mut cum = vec![vec![0.0; r]; r];
            for p in 0..r {
                for q in 0..r {
                    let up = if p > 0 { cum[p - 1][q] } else { 0.0 };
                    let left = if q > 0 { cum[p][q - 1] } else { 0.0 };
                    let diag = if p > 0 && q > 0 { cum[p - 1][q - 1] } else { 0.0 };
                    cum[p][q] = inc(p, q) + up + left - diag;
                }
            }
            let top = cum[r - 1][r - 1].max(1e-12);
            (0..r)
                .map(|p| (0..r).map(|q| (1.0 - cum[p][q] / top).clamp(0.0, 1.0)).collect())
                .collect()
        })
    })
}

pub fn lipschitz_kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        Just(Kernel::OneMinusMax),
        Just(Kernel::Product),
        Just(Kernel::Min),
        (0.2f64..0.8, 0.2f64..0.6).prop_map(|(center, width)| Kernel::GaussianBump { center, width }),
    ]
}

pub fn symmetric_profile() -> impl Strategy<Value = ProfileSpec> {
    prop_oneof![
        step_profile().prop_map(ProfileSpec::Step),
        (0.05f64..=1.0).prop_map(ProfileSpec::band),
        lipschitz_kernel().prop_map(|kernel| ProfileSpec::Continuous { kernel }),
    ]
}

pub fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let x: f64 = rng.random_range(-1.0..1.0);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    a
}

pub fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
}

/// Largest `|eigenvalue|` from nalgebra's symmetric eigensolver.
pub fn dense_norm(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}
