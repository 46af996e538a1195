//! Deterministic synthetic volumes: generic box/ball phantoms, seeded random
//! phantoms, and two fixed scenarios used throughout the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::components::{label_components, ComponentLabeling};
use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, LogitVolume, Shape, Spacing, LOGIT_CLAMP};

/// Minimum Chebyshev distance between voxels of different components, i.e.
/// at least two background voxels in between.
pub const MIN_SEPARATION: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ShapeKind {
    /// Axis-aligned box of `size` voxels, starting at `center - size / 2`.
    Box { size: [usize; 3] },
    /// Voxels whose index distance to the center is at most `radius`.
    Ball { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub center: [usize; 3],
    pub kind: ShapeKind,
}

impl ComponentSpec {
    pub fn cube(center: [usize; 3], side: usize) -> Self {
        ComponentSpec {
            center,
            kind: ShapeKind::Box { size: [side; 3] },
        }
    }

    fn voxels(&self) -> Vec<[i64; 3]> {
        let c = self.center.map(|v| v as i64);
        let mut out = Vec::new();
        match self.kind {
            ShapeKind::Box { size } => {
                let lo = [0, 1, 2].map(|k| c[k] - size[k] as i64 / 2);
                for z in 0..size[2] as i64 {
                    for y in 0..size[1] as i64 {
                        for x in 0..size[0] as i64 {
                            out.push([lo[0] + x, lo[1] + y, lo[2] + z]);
                        }
                    }
                }
            }
            ShapeKind::Ball { radius } => {
                let r = radius.floor() as i64;
                let r2 = radius * radius;
                for dz in -r..=r {
                    for dy in -r..=r {
                        for dx in -r..=r {
                            if ((dx * dx + dy * dy + dz * dz) as f64) <= r2 {
                                out.push([c[0] + dx, c[1] + dy, c[2] + dz]);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: Shape,
    pub spacing: Spacing,
    pub components: Vec<ComponentSpec>,
    pub seed: u64,
}

/// Rasterise `spec`. Fails if a component leaves the grid, is empty, or
/// comes closer than [`MIN_SEPARATION`] to another component.
pub fn build_phantom(spec: &PhantomSpec) -> Result<(BinaryMask, ComponentLabeling)> {
    let shape = spec.shape;
    let mut owner = vec![0u32; shape.len()];
    for (k, comp) in spec.components.iter().enumerate() {
        let tag = k as u32 + 1;
        let voxels = comp.voxels();
        if voxels.is_empty() {
            return Err(Error::invalid(format!("component {k} is empty")));
        }
        for [x, y, z] in voxels {
            if !shape.contains(x, y, z) {
                return Err(Error::invalid(format!(
                    "component {k} leaves the {shape} grid at ({x}, {y}, {z})"
                )));
            }
            let reach = MIN_SEPARATION as i64 - 1;
            for dz in -reach..=reach {
                for dy in -reach..=reach {
                    for dx in -reach..=reach {
                        let (qx, qy, qz) = (x + dx, y + dy, z + dz);
                        if !shape.contains(qx, qy, qz) {
                            continue;
                        }
                        let other = owner[shape.index(qx as usize, qy as usize, qz as usize)];
                        if other != 0 && other != tag {
                            return Err(Error::invalid(format!(
                                "components {} and {k} are closer than {MIN_SEPARATION} voxels",
                                other - 1
                            )));
                        }
                    }
                }
            }
            owner[shape.index(x as usize, y as usize, z as usize)] = tag;
        }
    }
    let mask = Grid::new(shape, spec.spacing, owner.iter().map(|&o| o != 0).collect())?;
    let lab = label_components(&mask);
    debug_assert_eq!(lab.count(), spec.components.len());
    Ok((mask, lab))
}

/// A seeded phantom with `n` boxes or balls, placed by rejection sampling.
pub fn random_phantom(
    shape: Shape,
    spacing: Spacing,
    n: usize,
    max_size: usize,
    seed: u64,
) -> Result<PhantomSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_size = max_size.max(1);
    let mut spec = PhantomSpec {
        shape,
        spacing,
        components: Vec::with_capacity(n),
        seed,
    };
    let mut attempts = 0;
    while spec.components.len() < n {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::invalid(format!(
                "could not place {n} separated components in {shape}"
            )));
        }
        let kind = if rng.gen_bool(0.5) {
            ShapeKind::Box {
                size: [0; 3].map(|_| rng.gen_range(1..=max_size)),
            }
        } else {
            ShapeKind::Ball {
                radius: rng.gen_range(0.0..=(max_size as f64 / 2.0)),
            }
        };
        let center = shape.dims().map(|d| rng.gen_range(0..d));
        spec.components.push(ComponentSpec { center, kind });
        if build_phantom(&spec).is_err() {
            spec.components.pop();
        }
    }
    Ok(spec)
}

/// Sixteen lesions on a 4×4 grid; the partial prediction finds only the
/// three large ones.
#[derive(Clone, Debug)]
pub struct Figure1 {
    pub gt: BinaryMask,
    pub lab: ComponentLabeling,
    pub pred_perfect: LogitVolume,
    pub pred_partial: LogitVolume,
    /// Components segmented by `pred_partial`.
    pub detected: Vec<u32>,
}

const FIG1_CELL: usize = 12;
const FIG1_LARGE: [usize; 3] = [7, 7, 6];
const FIG1_SMALL: [usize; 3] = [3, 3, 1];
const FIG1_LARGE_CELLS: [usize; 3] = [0, 5, 10];

pub fn figure1_spec() -> PhantomSpec {
    let shape = Shape::new(4 * FIG1_CELL, 4 * FIG1_CELL, 8).expect("valid");
    let components = (0..16)
        .map(|cell| {
            let center = [
                FIG1_CELL * (cell % 4) + FIG1_CELL / 2,
                FIG1_CELL * (cell / 4) + FIG1_CELL / 2,
                4,
            ];
            let size = if FIG1_LARGE_CELLS.contains(&cell) {
                FIG1_LARGE
            } else {
                FIG1_SMALL
            };
            ComponentSpec {
                center,
                kind: ShapeKind::Box { size },
            }
        })
        .collect();
    PhantomSpec {
        shape,
        spacing: Spacing::unit(),
        components,
        seed: 0,
    }
}

pub fn figure1_scenario() -> Figure1 {
    let (gt, lab) = build_phantom(&figure1_spec()).expect("fixed layout is valid");
    let large = FIG1_LARGE.iter().product::<usize>();
    let detected: Vec<u32> = lab
        .ids()
        .filter(|&id| lab.volume_vox(id).unwrap() == large)
        .collect();
    let partial = lab.labels().map(|l| *l != 0 && detected.contains(l));
    Figure1 {
        pred_perfect: LogitVolume::from_mask(&gt, LOGIT_CLAMP, -LOGIT_CLAMP),
        pred_partial: LogitVolume::from_mask(&partial, LOGIT_CLAMP, -LOGIT_CLAMP),
        gt,
        lab,
        detected,
    }
}

/// Two lesions of unequal size. The prediction misses the small one
/// entirely, misses one column of the large one, and adds a false-positive
/// blob next to the large one.
#[derive(Clone, Debug)]
pub struct Figure2 {
    pub gt: BinaryMask,
    pub lab: ComponentLabeling,
    pub logits: LogitVolume,
    pub large_id: u32,
    pub small_id: u32,
    /// Linear indices of the false-positive blob.
    pub fp_blob: Vec<usize>,
    /// Linear indices of the missed part of the large lesion.
    pub missed_large: Vec<usize>,
}

pub const FIG2_CONFIDENCE: f64 = 3.0;

pub fn figure2_scenario() -> Figure2 {
    let shape = Shape::new(40, 24, 1).expect("valid");
    let spec = PhantomSpec {
        shape,
        spacing: Spacing::unit(),
        components: vec![
            ComponentSpec {
                center: [9, 9, 0],
                kind: ShapeKind::Box { size: [10, 10, 1] },
            },
            ComponentSpec {
                center: [35, 20, 0],
                kind: ShapeKind::Box { size: [2, 2, 1] },
            },
        ],
        seed: 0,
    };
    let (gt, lab) = build_phantom(&spec).expect("fixed layout is valid");
    let large_id = *lab.labels().get(9, 9, 0);
    let small_id = *lab.labels().get(35, 20, 0);

    let mut fp_blob = Vec::new();
    for y in 6..9 {
        for x in 20..23 {
            fp_blob.push(shape.index(x, y, 0));
        }
    }
    fp_blob.sort_unstable();
    let missed_large: Vec<usize> = lab
        .voxels(large_id)
        .unwrap()
        .iter()
        .copied()
        .filter(|&i| shape.coords(i)[0] == 13)
        .collect();

    let mut pred = lab.labels().map(|&l| l == large_id);
    for &i in &missed_large {
        pred.data_mut()[i] = false;
    }
    for &i in &fp_blob {
        pred.data_mut()[i] = true;
    }
    Figure2 {
        logits: LogitVolume::from_mask(&pred, FIG2_CONFIDENCE, -FIG2_CONFIDENCE),
        gt,
        lab,
        large_id,
        small_id,
        fp_blob,
        missed_large,
    }
}
