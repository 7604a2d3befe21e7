use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of coordinate blocks to cores.
///
/// In shared mode there is one block covering every coordinate and every
/// core updates it; in partitioned mode the blocks are disjoint, cover
/// `0..n`, and each core owns at least one block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    dim: usize,
    blocks: Vec<Vec<usize>>,
    core_blocks: Vec<Vec<usize>>,
    shared: bool,
}

impl BlockPartition {
    /// Every core updates the full vector.
    pub fn shared(dim: usize, cores: usize) -> Result<Self> {
        if dim == 0 || cores == 0 {
            return Err(Error::Config("partition needs n >= 1 and at least one core".into()));
        }
        Ok(Self {
            dim,
            blocks: vec![(0..dim).collect()],
            core_blocks: vec![vec![0]; cores],
            shared: true,
        })
    }

    /// Disjoint blocks with `owner[b]` the core id of block `b`.
    pub fn partitioned(dim: usize, blocks: Vec<Vec<usize>>, owner: &[usize], cores: usize) -> Result<Self> {
        if blocks.len() != owner.len() {
            return Err(Error::Config("one owner per block required".into()));
        }
        let mut seen = vec![false; dim];
        for block in &blocks {
            if block.is_empty() {
                return Err(Error::Config("blocks must be nonempty".into()));
            }
            for &j in block {
                if j >= dim {
                    return Err(Error::Config(format!("component {j} out of range for n = {dim}")));
                }
                if seen[j] {
                    return Err(Error::Config(format!("component {j} appears in two blocks")));
                }
                seen[j] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Config(format!("component {missing} is in no block")));
        }
        let mut core_blocks = vec![Vec::new(); cores];
        for (b, &c) in owner.iter().enumerate() {
            if c >= cores {
                return Err(Error::Config(format!("owner core {c} out of range")));
            }
            core_blocks[c].push(b);
        }
        if let Some(idle) = core_blocks.iter().position(|b| b.is_empty()) {
            return Err(Error::Config(format!("core {idle} owns no block")));
        }
        Ok(Self {
            dim,
            blocks,
            core_blocks,
            shared: false,
        })
    }

    /// Deal `blocks` to cores round robin.
    pub fn deal(dim: usize, blocks: Vec<Vec<usize>>, cores: usize) -> Result<Self> {
        let owner: Vec<usize> = (0..blocks.len()).map(|b| b % cores.max(1)).collect();
        Self::partitioned(dim, blocks, &owner, cores)
    }

    /// Contiguous near-equal coordinate ranges, one block per core.
    pub fn contiguous(dim: usize, cores: usize) -> Result<Self> {
        if cores == 0 || cores > dim {
            return Err(Error::Config(format!("cannot split {dim} coordinates over {cores} cores")));
        }
        let blocks = (0..cores)
            .map(|c| (c * dim / cores..(c + 1) * dim / cores).collect())
            .collect();
        let owner: Vec<usize> = (0..cores).collect();
        Self::partitioned(dim, blocks, &owner, cores)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cores(&self) -> usize {
        self.core_blocks.len()
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, b: usize) -> &[usize] {
        &self.blocks[b]
    }

    /// Block ids selectable by core `c`.
    pub fn core_blocks(&self, c: usize) -> &[usize] {
        &self.core_blocks[c]
    }

    /// Core that owns block `b`, or `None` in shared mode.
    pub fn owner(&self, b: usize) -> Option<usize> {
        if self.shared {
            return None;
        }
        self.core_blocks.iter().position(|bs| bs.contains(&b))
    }
}
