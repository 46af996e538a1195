//! 26-connected component labeling.
//!
//! Two raster passes with a union-find over provisional labels. Final IDs are
//! assigned in the order components are first met by an x-fastest scan, which
//! is the same as ordering them by their smallest linear voxel index.

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid};

/// Neighbors of a voxel that precede it in x-fastest scan order.
const BACKWARD_26: [(i64, i64, i64); 13] = [
    (-1, -1, -1),
    (0, -1, -1),
    (1, -1, -1),
    (-1, 0, -1),
    (0, 0, -1),
    (1, 0, -1),
    (-1, 1, -1),
    (0, 1, -1),
    (1, 1, -1),
    (-1, -1, 0),
    (0, -1, 0),
    (1, -1, 0),
    (-1, 0, 0),
];

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let grand = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = grand;
            a = grand;
        }
        a
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Connected components of a mask.
///
/// Label 0 is background; components are numbered `1..=count`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentLabeling {
    labels: Grid<u32>,
    voxel_lists: Vec<Vec<usize>>,
    volumes_mm3: Vec<f64>,
}

impl ComponentLabeling {
    pub fn labels(&self) -> &Grid<u32> {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.voxel_lists.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> {
        1..=self.count() as u32
    }

    fn slot(&self, id: u32) -> Result<usize> {
        if id == 0 || id as usize > self.count() {
            return Err(Error::invalid(format!(
                "component id {id} out of range 1..={}",
                self.count()
            )));
        }
        Ok(id as usize - 1)
    }

    /// Linear indices of a component's voxels, ascending.
    pub fn voxels(&self, id: u32) -> Result<&[usize]> {
        Ok(&self.voxel_lists[self.slot(id)?])
    }

    pub fn voxel_lists(&self) -> &[Vec<usize>] {
        &self.voxel_lists
    }

    pub fn voxel_coords(&self, id: u32) -> Result<Vec<[usize; 3]>> {
        let shape = self.labels.shape();
        Ok(self.voxels(id)?.iter().map(|&i| shape.coords(i)).collect())
    }

    pub fn volume_vox(&self, id: u32) -> Result<usize> {
        Ok(self.voxel_lists[self.slot(id)?].len())
    }

    pub fn volumes_vox(&self) -> Vec<usize> {
        self.voxel_lists.iter().map(Vec::len).collect()
    }

    pub fn volume_mm3(&self, id: u32) -> Result<f64> {
        Ok(self.volumes_mm3[self.slot(id)?])
    }

    pub fn volumes_mm3(&self) -> &[f64] {
        &self.volumes_mm3
    }

    /// Mask that is set exactly on component `id`.
    pub fn component_mask(&self, id: u32) -> Result<BinaryMask> {
        self.slot(id)?;
        Ok(self.labels.map(|&l| l == id))
    }

    pub fn foreground(&self) -> BinaryMask {
        self.labels.map(|&l| l != 0)
    }
}

/// Label the 26-connected components of `mask`.
pub fn label_components(mask: &BinaryMask) -> ComponentLabeling {
    let shape = mask.shape();
    let [nx, ny, nz] = shape.dims();
    let fg = mask.data();
    let mut provisional = vec![u32::MAX; shape.len()];
    let mut uf = UnionFind::new();

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = shape.index(x, y, z);
                if !fg[i] {
                    continue;
                }
                let mut current: Option<u32> = None;
                for &(dx, dy, dz) in &BACKWARD_26 {
                    let (qx, qy, qz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if !shape.contains(qx, qy, qz) {
                        continue;
                    }
                    let j = shape.index(qx as usize, qy as usize, qz as usize);
                    if !fg[j] {
                        continue;
                    }
                    let nl = provisional[j];
                    current = Some(match current {
                        None => nl,
                        Some(c) => uf.union(c, nl),
                    });
                }
                provisional[i] = current.unwrap_or_else(|| uf.make());
            }
        }
    }

    let mut root_to_id = vec![0u32; uf.parent.len()];
    let mut voxel_lists: Vec<Vec<usize>> = Vec::new();
    let mut labels = vec![0u32; shape.len()];
    for (i, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = uf.find(p) as usize;
        if root_to_id[root] == 0 {
            voxel_lists.push(Vec::new());
            root_to_id[root] = voxel_lists.len() as u32;
        }
        let id = root_to_id[root];
        labels[i] = id;
        voxel_lists[id as usize - 1].push(i);
    }

    let voxel_volume = mask.spacing().voxel_volume();
    let volumes_mm3 = voxel_lists
        .iter()
        .map(|v| v.len() as f64 * voxel_volume)
        .collect();
    ComponentLabeling {
        labels: Grid::new(shape, mask.spacing(), labels).expect("same shape"),
        voxel_lists,
        volumes_mm3,
    }
}
