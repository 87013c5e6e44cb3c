//! Named parameter blocks, gradient buffers and the checkpoint archive.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which training task a block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OwnerTag {
    Time,
    Mark,
    Shared,
}

impl OwnerTag {
    pub fn as_str(self) -> &'static str {
        match self {
            OwnerTag::Time => "time",
            OwnerTag::Mark => "mark",
            OwnerTag::Shared => "shared",
        }
    }

    fn code(self) -> u8 {
        match self {
            OwnerTag::Time => 0,
            OwnerTag::Mark => 1,
            OwnerTag::Shared => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(OwnerTag::Time),
            1 => Ok(OwnerTag::Mark),
            2 => Ok(OwnerTag::Shared),
            _ => Err(Error::Checkpoint(format!("bad owner tag {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

/// How a freshly created block is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// Uniform in ±sqrt(6 / (rows + cols)).
    Glorot,
    Uniform(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
    pub owner: OwnerTag,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    blocks: Vec<ParamBlock>,
    index: HashMap<String, BlockId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        owner: OwnerTag,
        init: Init,
        rng: &mut R,
    ) -> Result<BlockId> {
        if self.index.contains_key(name) {
            return Err(Error::DuplicateBlock(name.to_string()));
        }
        let n = rows * cols;
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Constant(c) => vec![c; n],
            Init::Glorot => {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            }
            Init::Uniform(lo, hi) => (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
        };
        self.push(ParamBlock {
            name: name.to_string(),
            rows,
            cols,
            grad: vec![0.0; n],
            values,
            trainable: true,
            owner,
        })
    }

    fn push(&mut self, block: ParamBlock) -> Result<BlockId> {
        if self.index.contains_key(&block.name) {
            return Err(Error::DuplicateBlock(block.name));
        }
        let id = BlockId(self.blocks.len());
        self.index.insert(block.name.clone(), id);
        self.blocks.push(block);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, id: BlockId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn block_mut(&mut self, id: BlockId) -> &mut ParamBlock {
        &mut self.blocks[id.0]
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn ids(&self) -> impl Iterator<Item = BlockId> {
        (0..self.blocks.len()).map(BlockId)
    }

    pub fn id_of(&self, name: &str) -> Result<BlockId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownBlock(name.to_string()))
    }

    pub fn zero_grads(&mut self) {
        for b in &mut self.blocks {
            b.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Copies a gradient buffer into the grad slots.
    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        if grads.blocks.len() != self.blocks.len() {
            return Err(Error::ShapeMismatch {
                op: "set_grads",
                detail: format!(
                    "{} buffers for {} blocks",
                    grads.blocks.len(),
                    self.blocks.len()
                ),
            });
        }
        for (b, g) in self.blocks.iter_mut().zip(&grads.blocks) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(b.name.clone()));
            }
            b.grad.copy_from_slice(g);
        }
        Ok(())
    }

    pub fn grads(&self) -> Gradients {
        Gradients {
            blocks: self.blocks.iter().map(|b| b.grad.clone()).collect(),
        }
    }

    pub fn set_trainable_by_owner(&mut self, owner: OwnerTag, trainable: bool) {
        for b in &mut self.blocks {
            if b.owner == owner {
                b.trainable = trainable;
            }
        }
    }

    /// Total scalar count over blocks whose owner tag is in `filter`.
    pub fn param_count(&self, filter: &[OwnerTag]) -> usize {
        self.blocks
            .iter()
            .filter(|b| filter.contains(&b.owner))
            .map(|b| b.len())
            .sum()
    }

    pub fn total_params(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    /// Copies values of every block whose owner is in `owners` from `other`.
    pub fn copy_values_from(&mut self, other: &ParamStore, owners: &[OwnerTag]) {
        for (dst, src) in self.blocks.iter_mut().zip(&other.blocks) {
            if owners.contains(&dst.owner) {
                dst.values.copy_from_slice(&src.values);
            }
        }
    }

    /// `values -= lr * grad` on trainable blocks.
    pub fn sgd_step(&mut self, lr: f64) {
        for b in self.blocks.iter_mut().filter(|b| b.trainable) {
            for (v, g) in b.values.iter_mut().zip(&b.grad) {
                *v -= lr * g;
            }
        }
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Checkpoint layout (all integers little-endian):
    ///
    /// ```text
    /// b"MTPPCKPT" | u32 version (=1) | u32 block count
    /// per block: u32 name length | name (UTF-8) | u8 owner (0 time, 1 mark, 2 shared)
    ///            | u8 trainable | u32 rows | u32 cols | rows*cols f64 row-major
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKPT_MAGIC);
        out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u32).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(b.owner.code());
            out.push(u8::from(b.trainable));
            out.extend_from_slice(&(b.rows as u32).to_le_bytes());
            out.extend_from_slice(&(b.cols as u32).to_le_bytes());
            for v in &b.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != CKPT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CKPT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| Error::Checkpoint(e.to_string()))?
                .to_string();
            let owner = OwnerTag::from_code(r.u8()?)?;
            let trainable = r.u8()? != 0;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let raw: [u8; 8] = r.take(8)?.try_into().expect("8 bytes");
                values.push(f64::from_le_bytes(raw));
            }
            store.push(ParamBlock {
                name,
                rows,
                cols,
                grad: vec![0.0; values.len()],
                values,
                trainable,
                owner,
            })?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(store)
    }

    /// Overwrites values from a checkpointed store with identical layout.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.blocks.len() != self.blocks.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} blocks, model has {}",
                other.blocks.len(),
                self.blocks.len()
            )));
        }
        for (dst, src) in self.blocks.iter_mut().zip(&other.blocks) {
            if dst.name != src.name || dst.rows != src.rows || dst.cols != src.cols {
                return Err(Error::Checkpoint(format!(
                    "block {} ({}x{}) does not match {} ({}x{})",
                    src.name, src.rows, src.cols, dst.name, dst.rows, dst.cols
                )));
            }
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }
}

const CKPT_MAGIC: &[u8; 8] = b"MTPPCKPT";
const CKPT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated archive".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Per-block gradient buffers laid out like a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            blocks: store.blocks.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn block(&self, id: BlockId) -> &[f64] {
        &self.blocks[id.0]
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.blocks {
            b.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn sum(&self, other: &Gradients) -> Gradients {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn dot(&self, other: &Gradients) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Flattened concatenation of the selected blocks.
    pub fn flatten(&self, ids: &[BlockId]) -> Vec<f64> {
        ids.iter()
            .flat_map(|id| self.blocks[id.0].iter().copied())
            .collect()
    }

    pub fn first_non_finite(&self) -> Option<BlockId> {
        self.blocks
            .iter()
            .position(|b| b.iter().any(|v| !v.is_finite()))
            .map(BlockId)
    }
}
