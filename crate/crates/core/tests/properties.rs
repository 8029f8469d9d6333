mod common;

use common::*;
use proptest::prelude::*;
use specedge::checkers::{check_doubling, interior_points, PartitionFamily};
use specedge::graphon::l1_distance;
use specedge::moments::{hom_density_grid, m_exact, xi_bound};
use specedge::profiles::{symmetrize_profile, Kernel, RectProfile};
use specedge::sampler::{sample_from_variances, sample_rectangular_with, sample_symmetric_with, symmetrize, truncate_split, Centering};
use specedge::spectra::{esd_pushforward_check, gram_norm, operator_norm};
use specedge::trees::{enumerate_trees, OrderedTree};
use specedge::{EntryDistribution, Exec, Graphon, ProfileSpec, StepGraphon};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variances_in_unit_interval_and_symmetric(profile in symmetric_profile(), n in 1usize..40) {
        let v = profile.variance_matrix(n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let s = profile.variance_at(n, i, j).unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(s, v.get(i, j));
                prop_assert_eq!(s, profile.variance_at(n, j, i).unwrap());
            }
        }
    }

    #[test]
    fn band_l1_distance_nonincreasing_under_doubling(p in 0.05f64..=1.0, n0 in 3usize..24) {
        let profile = ProfileSpec::band(p);
        let limit = profile.limit_graphon().unwrap();
        let d: Vec<f64> = [n0, 2 * n0, 4 * n0]
            .iter()
            .map(|&n| l1_distance(&Graphon::Step(profile.graphon_of(n).unwrap()), &limit))
            .collect();
        prop_assert!(d[1] <= d[0] + 1e-12, "{:?}", d);
        prop_assert!(d[2] <= d[1] + 1e-12, "{:?}", d);
    }

    // Plain monotonicity fails for step profiles (see the pinned case below);
    // what the boundary-cell count gives is an envelope: each of the m - 1
    // interior breakpoints misplaces at most 1/(2N) of either axis.
    #[test]
    fn step_l1_distance_within_boundary_envelope(sp in step_profile(), n0 in 3usize..24) {
        let m = sp.sigma.len();
        let top = sp.sigma.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        let profile = ProfileSpec::Step(sp);
        let limit = profile.limit_graphon().unwrap();
        for n in [n0, 2 * n0, 4 * n0] {
            let d = l1_distance(&Graphon::Step(profile.graphon_of(n).unwrap()), &limit);
            let envelope = (m - 1) as f64 * top / n as f64;
            prop_assert!(d <= envelope + 1e-12, "n = {n}: {d} > {envelope}");
        }
    }

    #[test]
    fn discretized_continuous_limit_converges(kernel in lipschitz_kernel(), n in 4usize..32) {
        let limit = ProfileSpec::Continuous { kernel }.limit_graphon().unwrap();
        let a = l1_distance(&Graphon::Step(limit.discretize(n)), &limit);
        let b = l1_distance(&Graphon::Step(limit.discretize(2 * n)), &limit);
        prop_assert!(b <= a + 1e-12, "{a} -> {b}");
    }

    #[test]
    fn symmetrized_profile_has_zero_diagonal_blocks(m in 1usize..8, extra in 0usize..8, c in 0.0f64..=1.0) {
        let n = m + extra;
        let rect = ProfileSpec::Gram {
            c: m as f64 / n as f64,
            rect: RectProfile::Continuous { kernel: Kernel::GaussianBump { center: c, width: 0.5 } },
        };
        let sym = symmetrize_profile(&rect, m, n).unwrap();
        let v = sym.variance_matrix(m + n).unwrap();
        for i in 0..m + n {
            for j in 0..m + n {
                if (i < m) == (j < m) {
                    prop_assert_eq!(v.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn hom_density_is_multilinear(step in step_profile(), k in 1u32..=6, lambda in 0.0f64..3.0, pick in any::<prop::sample::Index>()) {
        let g = Graphon::Step(ProfileSpec::Step(step).limit_graphon().unwrap().discretize(5));
        let grid = match &g { Graphon::Step(s) => s.clone(), _ => unreachable!() };
        let trees: Vec<OrderedTree> = enumerate_trees(k).unwrap().collect();
        let t = &trees[pick.index(trees.len())];
        let scaled: StepGraphon = grid.scaled(lambda).unwrap();
        let base = hom_density_grid(t, &grid);
        let lhs = hom_density_grid(t, &scaled);
        let rhs = lambda.powi(k as i32) * base;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn injective_sum_below_xi(step in step_profile(), n in 2usize..=6, k in 1u32..=3) {
        let profile = ProfileSpec::Step(step);
        let s = profile.variance_matrix(n).unwrap();
        let m = m_exact(k, &s).unwrap();
        let xi = xi_bound(k, n, &profile).unwrap();
        prop_assert!(m / (n as f64).powi(k as i32 + 1) <= xi * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn doubling_profiles_obey_bracket_bound(grid in decreasing_grid(), n in 2usize..=6, k in 1u32..=3) {
        let profile = ProfileSpec::Continuous { kernel: Kernel::MonotoneGrid { values: grid } };
        prop_assume!(check_doubling(&profile, n).unwrap().holds);
        let s = profile.variance_matrix(n).unwrap();
        let v0 = profile.limit_graphon().unwrap().sup();
        let bracket = 2.0 * v0.sqrt();
        let m = m_exact(k, &s).unwrap();
        prop_assert!(m <= (n as f64).powi(k as i32 + 1) * bracket.powi(2 * k as i32) * (1.0 + 1e-12));
    }

    #[test]
    fn samples_reproducible_across_exec(profile in symmetric_profile(), n in 1usize..24, seed in any::<u64>()) {
        let d = EntryDistribution::StudentT { df: 6.0 };
        let a = sample_symmetric_with(&profile, n, &d, seed, Exec::Sequential).unwrap();
        let b = sample_symmetric_with(&profile, n, &d, seed, Exec::Parallel).unwrap();
        let c = sample_symmetric_with(&profile, n, &d, seed, Exec::Parallel).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&b, &c);
    }

    #[test]
    fn sample_is_hadamard_product(profile in symmetric_profile(), n in 1usize..24, seed in any::<u64>()) {
        let d = EntryDistribution::Gaussian;
        let a = sample_symmetric_with(&profile, n, &d, seed, Exec::Parallel).unwrap();
        let ones = sample_symmetric_with(&ProfileSpec::wigner(), n, &d, seed, Exec::Parallel).unwrap();
        let sigma = profile.variance_matrix(n).unwrap().sigma();
        prop_assert_eq!(a, ones.component_mul(&sigma));
    }

    #[test]
    fn symmetrization_squares_the_norm(c in 0.05f64..=1.0, n in 2usize..40, seed in any::<u64>()) {
        let profile = ProfileSpec::marchenko_pastur(c);
        let a = sample_rectangular_with(&profile, n, &EntryDistribution::Rademacher, seed, Exec::Parallel).unwrap();
        let s = operator_norm(&symmetrize(&a)).unwrap();
        let g = gram_norm(&a).unwrap();
        prop_assert!((s * s - g).abs() <= 1e-9 * g.max(1e-300), "{} vs {}", s * s, g);
    }

    #[test]
    fn truncation_split_is_exact(n in 1usize..30, seed in any::<u64>(), eta in 0.01f64..0.12) {
        let s = ProfileSpec::band(0.5).variance_matrix(n).unwrap();
        let d = EntryDistribution::SymmetricPareto { alpha: 3.0 };
        let a = sample_from_variances(&s, &d, seed, Exec::Parallel).unwrap();
        let split = truncate_split(&a, eta, Centering::None, None).unwrap();
        prop_assert_eq!(&split.le_uncentered + &split.gt, a);
    }

    #[test]
    fn norm_bounded_by_n_times_max_entry(n in 1usize..60, seed in any::<u64>()) {
        let a = random_symmetric(n, seed);
        let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(operator_norm(&a).unwrap() <= n as f64 * amax * (1.0 + 1e-12));
    }

    #[test]
    fn norm_invariant_under_permutation(n in 2usize..50, seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let a = random_symmetric(n, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let b = nalgebra::DMatrix::from_fn(n, n, |i, j| a[(perm[i], perm[j])]);
        let (x, y) = (operator_norm(&a).unwrap(), operator_norm(&b).unwrap());
        prop_assert!((x - y).abs() <= 1e-10 * x.max(1.0));
    }

    #[test]
    fn pushforward_identity(n in 1usize..=12, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let m = ((frac * n as f64).ceil() as usize).clamp(1, n);
        let r = esd_pushforward_check(&random_matrix(m, n, seed)).unwrap();
        prop_assert!(r.passes, "{:?}", r);
    }

    #[test]
    fn interior_masks_nest(p in 0.1f64..0.9, n in 6usize..30) {
        for family in [PartitionFamily::Band { p }, PartitionFamily::TriangularSym] {
            let n = if matches!(family, PartitionFamily::TriangularSym) { 2 * (n / 2) } else { n };
            let small = interior_points(&family.build(n).unwrap());
            let big = interior_points(&family.build(2 * n).unwrap());
            for i in 0..n {
                for j in 0..n {
                    if small.contains(i, j) {
                        prop_assert!(big.contains(2 * i + 1, 2 * j + 1));
                    }
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn decreasing_profiles_satisfy_doubling(grid in decreasing_grid(), n in 1usize..24) {
        let profile = ProfileSpec::Continuous { kernel: Kernel::MonotoneGrid { values: grid } };
        let r = check_doubling(&profile, n).unwrap();
        prop_assert!(r.holds, "{:?}", r.witnesses);
    }
}

#[test]
fn step_l1_distance_can_rise_under_doubling() {
    // the short first block is empty at N = 4 and overshoots by a full cell at N = 8
    let sp = specedge::StepProfile::new(vec![0.0, 0.07643153321706943, 1.0], vec![vec![0.9529737805474147, 0.0], vec![0.0, 0.0]])
        .unwrap();
    let profile = ProfileSpec::Step(sp);
    let limit = profile.limit_graphon().unwrap();
    let d = |n| l1_distance(&Graphon::Step(profile.graphon_of(n).unwrap()), &limit);
    assert!(d(8) > d(4));
    assert!(d(16) < d(8));
}
