//! EMB1: little-endian embedding file.
//!
//! ```text
//! header  "EMB1" | version u16 = 1 | dim u32 | num_tasks u32 | step u32 | count u64
//! record  task u16 (1-based) | label u32 (global, 0-based) | split u8 (0 train, 1 test)
//!         | dim × f32
//! ```
//!
//! No padding; bytes after the last record are an error. Records are written
//! task by task, train split before test split.

use std::fs;
use std::path::Path;

use crate::data::{LabeledExample, TaskData, TaskStream};
use crate::error::{invalid, Error, Result};
use crate::head::TaskLayout;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4 + 8;

const SPLIT_TRAIN: u8 = 0;
const SPLIT_TEST: u8 = 1;

pub fn record_len(dim: usize) -> usize {
    2 + 4 + 1 + 4 * dim
}

pub fn encode(stream: &TaskStream) -> Result<Vec<u8>> {
    let dim = stream.dim();
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    let layout = stream.layout();
    let as_u32 = |v: usize, field| u32::try_from(v).map_err(|_| invalid(field, "exceeds u32"));
    if layout.num_tasks() > u16::MAX as usize {
        return Err(invalid("num_tasks", "exceeds u16 task field"));
    }
    let count = stream.num_examples();
    let mut out = Vec::with_capacity(HEADER_LEN + count * record_len(dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&as_u32(dim, "dim")?.to_le_bytes());
    out.extend_from_slice(&as_u32(layout.num_tasks(), "num_tasks")?.to_le_bytes());
    out.extend_from_slice(&as_u32(layout.step(), "step")?.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());

    for task in stream.tasks() {
        for (split, examples) in [(SPLIT_TRAIN, &task.train), (SPLIT_TEST, &task.test)] {
            for ex in examples {
                out.extend_from_slice(&(ex.task as u16).to_le_bytes());
                out.extend_from_slice(&as_u32(ex.label, "label")?.to_le_bytes());
                out.push(split);
                for &v in &ex.feature {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn write_embeddings(stream: &TaskStream, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(stream)?;
    fs::write(path, bytes)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TaskStream> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < MAGIC.len() || &r.array::<4>()? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = r.u32()? as usize;
    let num_tasks = r.u32()? as usize;
    let step = r.u32()? as usize;
    let count = r.u64()?;
    if dim == 0 {
        return Err(invalid("dim", "must be at least 1"));
    }
    let layout = TaskLayout::new(num_tasks, step)?;
    if count == 0 {
        return Err(Error::NoExamples);
    }

    let mut tasks = vec![TaskData::default(); num_tasks];
    for _ in 0..count {
        let task = r.u16()? as usize;
        let label = r.u32()? as usize;
        let split = r.u8()?;
        let mut feature = Vec::with_capacity(dim);
        for _ in 0..dim {
            feature.push(r.f32()? as f64);
        }
        layout.check_label(task, label)?;
        let ex = LabeledExample {
            feature,
            label,
            task,
        };
        match split {
            SPLIT_TRAIN => tasks[task - 1].train.push(ex),
            SPLIT_TEST => tasks[task - 1].test.push(ex),
            other => return Err(invalid("split", format!("unknown split tag {other}"))),
        }
    }
    let trailing = bytes.len() - r.pos;
    if trailing != 0 {
        return Err(Error::TrailingBytes(trailing));
    }
    TaskStream::new(layout, dim, tasks)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<TaskStream> {
    decode(&fs::read(path)?)
}
