mod common;

use common::{
    check_against_oracle, partition_invariants_hold, random_components, random_mask,
    voronoi_tie_sets,
};
use lesionwise::{
    label_components, voronoi_partition, voronoi_partition_bruteforce, DistanceMetric, Error,
    Shape, Spacing,
};
use proptest::prelude::*;

#[test]
fn voxel_metric_matches_oracle_and_lowest_id_policy() {
    for seed in 0..12u64 {
        let shape = Shape::new(12, 10, 7).unwrap();
        let (_, lab) = random_components(shape, Spacing::unit(), 1 + (seed % 5) as usize, 4, seed);
        let part = voronoi_partition(&lab, DistanceMetric::VoxelIndex).unwrap();
        let oracle = voronoi_tie_sets(&lab, None);
        let (_, bad) = check_against_oracle(&part, &oracle);
        assert_eq!(bad, 0, "seed {seed}");
        // Integer distances: ties are exact, so the policy is checkable.
        for (i, (set, d2)) in oracle.iter().enumerate() {
            assert_eq!(part.region_of().data()[i], set[0], "seed {seed} voxel {i}");
            assert_eq!(part.distances().data()[i], d2.sqrt());
        }
        assert!(partition_invariants_hold(&lab, &part));
    }
}

#[test]
fn physical_metric_matches_oracle() {
    let spacings = [(0.7, 1.0, 2.5), (1.0, 0.4, 0.9), (3.0, 1.0, 1.0)];
    for seed in 0..12u64 {
        let (sx, sy, sz) = spacings[seed as usize % spacings.len()];
        let spacing = Spacing::new(sx, sy, sz).unwrap();
        let (_, lab) = random_components(
            Shape::new(11, 9, 8).unwrap(),
            spacing,
            1 + (seed % 5) as usize,
            4,
            100 + seed,
        );
        let part = voronoi_partition(&lab, DistanceMetric::Physical(spacing)).unwrap();
        let oracle = voronoi_tie_sets(&lab, Some([sx, sy, sz]));
        assert_eq!(check_against_oracle(&part, &oracle).1, 0, "seed {seed}");
        for (i, (_, d2)) in oracle.iter().enumerate() {
            assert!((part.distances().data()[i] - d2.sqrt()).abs() <= 1e-9 * d2.sqrt().max(1.0));
        }
        assert!(partition_invariants_hold(&lab, &part));
    }
}

#[test]
fn fast_equals_library_bruteforce_on_dense_masks() {
    // Arbitrary (non-separated) masks with many components.
    for seed in 0..6u64 {
        let mask = random_mask(Shape::new(9, 8, 6).unwrap(), 0.04, seed);
        let lab = label_components(&mask);
        if lab.count() == 0 {
            continue;
        }
        for metric in [
            DistanceMetric::VoxelIndex,
            DistanceMetric::Physical(Spacing::new(1.0, 1.5, 0.5).unwrap()),
        ] {
            let fast = voronoi_partition(&lab, metric).unwrap();
            let brute = voronoi_partition_bruteforce(&lab, metric).unwrap();
            let s = match metric {
                DistanceMetric::VoxelIndex => None,
                DistanceMetric::Physical(s) => Some(s.as_array()),
            };
            let oracle = voronoi_tie_sets(&lab, s);
            assert_eq!(check_against_oracle(&fast, &oracle).1, 0);
            assert_eq!(check_against_oracle(&brute, &oracle).1, 0);
            if matches!(metric, DistanceMetric::VoxelIndex) {
                assert_eq!(fast.region_of().data(), brute.region_of().data());
            }
        }
    }
}

#[test]
fn isotropic_physical_equals_voxel_partition() {
    let (_, lab) = random_components(Shape::new(14, 14, 6).unwrap(), Spacing::unit(), 4, 4, 9);
    let s = Spacing::new(0.8, 0.8, 0.8).unwrap();
    let voxel = voronoi_partition(&lab, DistanceMetric::VoxelIndex).unwrap();
    let phys = voronoi_partition(&lab, DistanceMetric::Physical(s)).unwrap();
    assert_eq!(voxel.region_of().data(), phys.region_of().data());
    for (a, b) in voxel.distances().data().iter().zip(phys.distances().data()) {
        assert!((a * 0.8 - b).abs() < 1e-12);
    }
}

#[test]
fn no_components_is_an_error() {
    let lab = label_components(&random_mask(Shape::new(4, 4, 4).unwrap(), 0.0, 0));
    assert!(matches!(
        voronoi_partition(&lab, DistanceMetric::VoxelIndex),
        Err(Error::EmptyGroundTruth)
    ));
    assert!(matches!(
        voronoi_partition_bruteforce(&lab, DistanceMetric::VoxelIndex),
        Err(Error::EmptyGroundTruth)
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_invariants_on_arbitrary_masks(
        (nx, ny, nz) in (1usize..9, 1usize..9, 1usize..5),
        density in 0.01f64..0.3,
        seed in any::<u64>(),
        aniso in prop::bool::ANY,
    ) {
        let mask = random_mask(Shape::new(nx, ny, nz).unwrap(), density, seed);
        let lab = label_components(&mask);
        prop_assume!(lab.count() > 0);
        let metric = if aniso {
            DistanceMetric::Physical(Spacing::new(0.5, 1.25, 2.0).unwrap())
        } else {
            DistanceMetric::VoxelIndex
        };
        let part = voronoi_partition(&lab, metric).unwrap();
        prop_assert!(partition_invariants_hold(&lab, &part));
        let s = if aniso { Some([0.5, 1.25, 2.0]) } else { None };
        prop_assert_eq!(check_against_oracle(&part, &voronoi_tie_sets(&lab, s)).1, 0);
    }
}
