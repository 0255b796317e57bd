//! Flat binary checkpoints.
//!
//! Layout (little-endian): 8-byte magic, u32 version, u64 step, u64 feature
//! seed, u32 vocab size, u32 feature dim, then `V * d` f64 head weights in
//! row-major order. A plain-text export exists for debugging.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;

const MAGIC: &[u8; 8] = b"RLVRCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub feature_seed: u64,
    pub weights: Mat,
}

impl Checkpoint {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&self.step.to_le_bytes())?;
        f.write_all(&self.feature_seed.to_le_bytes())?;
        f.write_all(&(self.weights.rows() as u32).to_le_bytes())?;
        f.write_all(&(self.weights.cols() as u32).to_le_bytes())?;
        for w in self.weights.as_slice() {
            f.write_all(&w.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Mismatch(format!("{}: not a checkpoint file", path.display())));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        f.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != VERSION {
            return Err(Error::Mismatch(format!(
                "checkpoint version {version} (expected {VERSION})"
            )));
        }
        f.read_exact(&mut u64buf)?;
        let step = u64::from_le_bytes(u64buf);
        f.read_exact(&mut u64buf)?;
        let feature_seed = u64::from_le_bytes(u64buf);
        f.read_exact(&mut u32buf)?;
        let rows = u32::from_le_bytes(u32buf) as usize;
        f.read_exact(&mut u32buf)?;
        let cols = u32::from_le_bytes(u32buf) as usize;
        let mut data = vec![0.0f64; rows * cols];
        for v in data.iter_mut() {
            f.read_exact(&mut u64buf)?;
            *v = f64::from_le_bytes(u64buf);
        }
        let mut rest = Vec::new();
        f.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Mismatch(format!(
                "checkpoint has {} trailing bytes",
                rest.len()
            )));
        }
        let weights = Mat::from_fn(rows, cols, |r, c| data[r * cols + c]);
        Ok(Checkpoint { step, feature_seed, weights })
    }

    /// Human-readable dump: header plus one row of weights per line.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "# checkpoint v{VERSION}");
        let _ = writeln!(s, "step {}", self.step);
        let _ = writeln!(s, "feature_seed {}", self.feature_seed);
        let _ = writeln!(s, "shape {} {}", self.weights.rows(), self.weights.cols());
        for r in 0..self.weights.rows() {
            let row: Vec<String> =
                self.weights.row(r).iter().map(|w| format!("{w:.17e}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}
