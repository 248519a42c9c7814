//! Round snapshot directory: one binary file per round plus the validation
//! set and a JSON metadata file, enough to re-value a run without retraining.
//!
//! Binary files start with an 8-byte magic and a little-endian `u32` version.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::engine::{ParticipantUpdate, RoundRecord, ValuationStrategy};
use super::{Layout, Metric, ModelParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::valuation::{Coalition, ParticipantId};

pub const SNAPSHOT_VERSION: u32 = 1;
const ROUND_MAGIC: &[u8; 8] = b"FSVROUND";
const DATA_MAGIC: &[u8; 8] = b"FSVDATA\0";
const META_FILE: &str = "meta.json";
const VALIDATION_FILE: &str = "validation.fsd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotMeta {
    pub format_version: u32,
    pub participants: usize,
    pub rounds: usize,
    pub metric: Metric,
    pub master_seed: u64,
    /// Rule the run was valued with; replays default to it.
    #[serde(default)]
    pub strategy: Option<ValuationStrategy>,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub rounds: Vec<RoundRecord>,
    pub validation: Dataset,
}

fn round_file(t: usize) -> String {
    format!("round-{t:05}.fsr")
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Snapshot(msg.into())
}

fn write_magic<W: Write>(w: &mut W, magic: &[u8; 8]) -> Result<()> {
    w.write_all(magic)?;
    w.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
    Ok(())
}

fn read_magic<R: Read>(r: &mut R, magic: &[u8; 8], what: &str) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(corrupt(format!("{what}: bad magic header")));
    }
    let v = r.read_u32::<LittleEndian>()?;
    if v != SNAPSHOT_VERSION {
        return Err(corrupt(format!("{what}: unsupported version {v}")));
    }
    Ok(())
}

fn write_layout<W: Write>(w: &mut W, layout: &Layout) -> Result<()> {
    let (tag, dims) = match *layout {
        Layout::Logistic { inputs, classes } => (0u8, [inputs, 0, classes]),
        Layout::Mlp { inputs, hidden, classes } => (1u8, [inputs, hidden, classes]),
    };
    w.write_u8(tag)?;
    for d in dims {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    Ok(())
}

fn read_layout<R: Read>(r: &mut R) -> Result<Layout> {
    let tag = r.read_u8()?;
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.read_u64::<LittleEndian>()? as usize;
    }
    match tag {
        0 => Ok(Layout::Logistic { inputs: dims[0], classes: dims[2] }),
        1 => Ok(Layout::Mlp { inputs: dims[0], hidden: dims[1], classes: dims[2] }),
        _ => Err(corrupt(format!("unknown layout tag {tag}"))),
    }
}

fn write_vec<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    w.write_u64::<LittleEndian>(v.len() as u64)?;
    for &x in v {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vec<R: Read>(r: &mut R, limit: usize) -> Result<Vec<f64>> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    if n > limit {
        return Err(corrupt(format!("vector of {n} entries exceeds {limit}")));
    }
    (0..n).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
}

fn read_params<R: Read>(r: &mut R, layout: Layout) -> Result<ModelParams> {
    let theta = read_vec(r, layout.param_count())?;
    ModelParams::new(layout, theta)
}

pub fn write_round_file(dir: &Path, record: &RoundRecord) -> Result<()> {
    let mut w = BufWriter::new(File::create(dir.join(round_file(record.round)))?);
    write_magic(&mut w, ROUND_MAGIC)?;
    w.write_u64::<LittleEndian>(record.round as u64)?;
    write_layout(&mut w, &record.global_before.layout)?;
    w.write_u32::<LittleEndian>(record.selected.len() as u32)?;
    for id in record.selected.ids() {
        w.write_u32::<LittleEndian>(id.0)?;
    }
    write_vec(&mut w, &record.global_before.theta)?;
    for u in &record.updates {
        w.write_u32::<LittleEndian>(u.participant.0)?;
        write_vec(&mut w, &u.params.theta)?;
    }
    write_vec(&mut w, &record.global_after.theta)?;
    w.flush()?;
    Ok(())
}

fn read_round_file(path: &Path) -> Result<RoundRecord> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, ROUND_MAGIC, &path.display().to_string())?;
    let round = r.read_u64::<LittleEndian>()? as usize;
    let layout = read_layout(&mut r)?;
    let count = r.read_u32::<LittleEndian>()? as usize;
    let ids = (0..count).map(|_| Ok(ParticipantId(r.read_u32::<LittleEndian>()?))).collect::<Result<Vec<_>>>()?;
    let selected = Coalition::new(ids)?;
    let global_before = read_params(&mut r, layout)?;
    let mut updates = Vec::with_capacity(count);
    for expected in selected.ids() {
        let id = ParticipantId(r.read_u32::<LittleEndian>()?);
        if id != *expected {
            return Err(corrupt(format!("round {round}: update for {id}, expected {expected}")));
        }
        updates.push(ParticipantUpdate { participant: id, round, params: read_params(&mut r, layout)? });
    }
    let global_after = read_params(&mut r, layout)?;
    Ok(RoundRecord { round, global_before, selected, updates, global_after })
}

fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, DATA_MAGIC)?;
    for v in [ds.len(), ds.dim(), ds.class_count()] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    for i in 0..ds.len() {
        for &x in ds.row(i) {
            w.write_f64::<LittleEndian>(x)?;
        }
    }
    for &l in ds.labels() {
        w.write_u64::<LittleEndian>(l as u64)?;
    }
    w.flush()?;
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, DATA_MAGIC, &path.display().to_string())?;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let dim = r.read_u64::<LittleEndian>()? as usize;
    let classes = r.read_u64::<LittleEndian>()? as usize;
    let size = fs::metadata(path)?.len() as usize;
    if n.checked_mul(dim + 1).and_then(|c| c.checked_mul(8)).is_none_or(|b| b > size) {
        return Err(corrupt("validation set header exceeds file size"));
    }
    let features = (0..n * dim).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect::<Result<Vec<_>>>()?;
    let labels = (0..n).map(|_| Ok(r.read_u64::<LittleEndian>()? as usize)).collect::<Result<Vec<_>>>()?;
    Dataset::new(features, dim, labels, classes)
}

/// Writes metadata, the validation set and every round. `dir` is created if needed.
pub fn write_snapshot_dir(dir: &Path, meta: &SnapshotMeta, rounds: &[RoundRecord], validation: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in rounds {
        write_round_file(dir, r)?;
    }
    write_snapshot_meta(dir, meta, validation)
}

/// Writes the validation set and metadata; round files are written
/// separately as the rounds complete.
pub fn write_snapshot_meta(dir: &Path, meta: &SnapshotMeta, validation: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_dataset(&dir.join(VALIDATION_FILE), validation)?;
    let mut f = File::create(dir.join(META_FILE))?;
    serde_json::to_writer_pretty(&mut f, meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_snapshot_dir(dir: &Path) -> Result<Snapshot> {
    if !dir.is_dir() {
        return Err(corrupt(format!("snapshot directory {} does not exist", dir.display())));
    }
    let meta: SnapshotMeta = serde_json::from_reader(BufReader::new(File::open(dir.join(META_FILE))?))?;
    if meta.format_version != SNAPSHOT_VERSION {
        return Err(corrupt(format!("unsupported snapshot version {}", meta.format_version)));
    }
    let validation = read_dataset(&dir.join(VALIDATION_FILE))?;
    let rounds = (0..meta.rounds)
        .map(|t| {
            let r = read_round_file(&dir.join(round_file(t)))?;
            if r.round != t {
                return Err(corrupt(format!("file for round {t} holds round {}", r.round)));
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Snapshot { meta, rounds, validation })
}
