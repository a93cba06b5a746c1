//! Packet-record and manifest file parsing, and labeled dataset assembly.
//!
//! Packet-record CSV: header `flow_id,direction,ts,size`; direction is `u`
//! or `d`, `ts` is decimal seconds, `size` integer bytes. Manifest CSV:
//! header `entry_flow_id,exit_flow_id`. Both UTF-8, comma-separated, LF.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flowdata::{Direction, Flow, FlowError, PacketRecord};

pub const PACKET_HEADER: &str = "flow_id,direction,ts,size";
pub const MANIFEST_HEADER: &str = "entry_flow_id,exit_flow_id";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad header at line 1: expected '{expected}', found '{found}'")]
    BadHeader { expected: String, found: String },
    #[error("missing field '{field}' at line {line}")]
    MissingField { line: usize, field: &'static str },
    #[error("unknown direction '{token}' at line {line}")]
    UnknownDirection { line: usize, token: String },
    #[error("invalid {field} '{value}' at line {line}")]
    InvalidNumber {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("invalid packet at line {line}: {source}")]
    InvalidPacket {
        line: usize,
        #[source]
        source: FlowError,
    },
    #[error("manifest references missing flow id '{0}'")]
    MissingFlow(String),
    #[error("flow id '{0}' appears in more than one association")]
    DuplicateAssociation(String),
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("split fraction must be in (0, 1), got {0}")]
    BadSplitFraction(f64),
}

impl IngestError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Ground-truth associations between entry and exit flow ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairManifest {
    pub entries: Vec<(String, String)>,
}

impl PairManifest {
    /// Validates that no flow id takes part in more than one association.
    pub fn new(entries: Vec<(String, String)>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for (a, b) in &entries {
            for id in [a, b] {
                if !seen.insert(id.clone()) {
                    return Err(IngestError::DuplicateAssociation(id.clone()));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Which partition of a corpus a dataset represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    /// An unsplit corpus (e.g. freshly generated).
    Full,
}

/// Flows plus the manifest that labels them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub flows: HashMap<String, Flow>,
    pub manifest: PairManifest,
    pub split: Split,
}

impl Dataset {
    /// Checks that every manifest reference resolves to a flow.
    pub fn validate(&self) -> Result<(), IngestError> {
        for (a, b) in &self.manifest.entries {
            for id in [a, b] {
                if !self.flows.contains_key(id) {
                    return Err(IngestError::MissingFlow(id.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn associations(&self) -> usize {
        self.manifest.len()
    }
}

/// Parses a packet-record file into flows, grouped by flow id and sorted by
/// timestamp.
pub fn parse_packet_file(path: &Path) -> Result<HashMap<String, Flow>, IngestError> {
    let file = fs::File::open(path).map_err(|e| IngestError::io(path, e))?;
    parse_packet_reader(BufReader::new(file), path)
}

fn parse_packet_reader<R: Read>(
    reader: BufReader<R>,
    path: &Path,
) -> Result<HashMap<String, Flow>, IngestError> {
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(header))) if header.trim_end() == PACKET_HEADER => {}
        Some((_, Ok(header))) => {
            return Err(IngestError::BadHeader {
                expected: PACKET_HEADER.into(),
                found: header,
            })
        }
        Some((_, Err(e))) => return Err(IngestError::io(path, e)),
        None => {
            return Err(IngestError::BadHeader {
                expected: PACKET_HEADER.into(),
                found: String::new(),
            })
        }
    }

    let mut grouped: HashMap<String, Vec<PacketRecord>> = HashMap::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| IngestError::io(path, e))?;
        let lineno = idx + 1; // 1-based, including the header line
        if line.is_empty() {
            continue;
        }
        let mut fields = line.splitn(4, ',');
        let flow_id = next_field(&mut fields, lineno, "flow_id")?;
        let dir_token = next_field(&mut fields, lineno, "direction")?;
        let ts_token = next_field(&mut fields, lineno, "ts")?;
        let size_token = next_field(&mut fields, lineno, "size")?;

        let direction = match dir_token {
            "u" => Direction::Upstream,
            "d" => Direction::Downstream,
            other => {
                return Err(IngestError::UnknownDirection {
                    line: lineno,
                    token: other.to_string(),
                })
            }
        };
        let ts: f64 = ts_token.parse().map_err(|_| IngestError::InvalidNumber {
            line: lineno,
            field: "ts",
            value: ts_token.to_string(),
        })?;
        let size: u32 = size_token.parse().map_err(|_| IngestError::InvalidNumber {
            line: lineno,
            field: "size",
            value: size_token.to_string(),
        })?;
        let packet = PacketRecord::new(ts, size, direction)
            .map_err(|source| IngestError::InvalidPacket { line: lineno, source })?;
        grouped.entry(flow_id.to_string()).or_default().push(packet);
    }

    grouped
        .into_iter()
        .map(|(id, packets)| {
            Flow::new(id.clone(), packets)
                .map(|f| (id, f))
                .map_err(|source| IngestError::InvalidPacket { line: 0, source })
        })
        .collect()
}

fn next_field<'a>(
    fields: &mut impl Iterator<Item = &'a str>,
    line: usize,
    field: &'static str,
) -> Result<&'a str, IngestError> {
    match fields.next() {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(IngestError::MissingField { line, field }),
    }
}

/// Writes flows back to the packet-record format. Flow ids are emitted in
/// sorted order and packets in stored (timestamp) order, so output bytes are
/// deterministic for a given corpus.
pub fn write_packet_file(path: &Path, flows: &HashMap<String, Flow>) -> Result<(), IngestError> {
    let mut ids: Vec<&String> = flows.keys().collect();
    ids.sort();
    let mut out = String::new();
    out.push_str(PACKET_HEADER);
    out.push('\n');
    for id in ids {
        for p in flows[id].packets() {
            let d = match p.direction {
                Direction::Upstream => 'u',
                Direction::Downstream => 'd',
            };
            writeln!(out, "{},{},{},{}", id, d, p.timestamp, p.size).expect("string write");
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Parses a manifest file of ground-truth associations.
pub fn parse_manifest_file(path: &Path) -> Result<PairManifest, IngestError> {
    let content = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == MANIFEST_HEADER => {}
        Some((_, header)) => {
            return Err(IngestError::BadHeader {
                expected: MANIFEST_HEADER.into(),
                found: header.to_string(),
            })
        }
        None => {
            return Err(IngestError::BadHeader {
                expected: MANIFEST_HEADER.into(),
                found: String::new(),
            })
        }
    }
    let mut entries = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut fields = line.splitn(2, ',');
        let entry = next_field(&mut fields, lineno, "entry_flow_id")?;
        let exit = next_field(&mut fields, lineno, "exit_flow_id")?;
        entries.push((entry.to_string(), exit.to_string()));
    }
    PairManifest::new(entries)
}

/// Writes a manifest in entry order.
pub fn write_manifest_file(path: &Path, manifest: &PairManifest) -> Result<(), IngestError> {
    let mut out = String::new();
    out.push_str(MANIFEST_HEADER);
    out.push('\n');
    for (a, b) in &manifest.entries {
        writeln!(out, "{},{}", a, b).expect("string write");
    }
    atomic_write(path, out.as_bytes())
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let mut f = fs::File::create(path).map_err(|e| IngestError::io(path, e))?;
    f.write_all(bytes).map_err(|e| IngestError::io(path, e))
}

/// Loads a corpus directory containing `packets.csv` and `manifest.csv`.
pub fn load_corpus(dir: &Path) -> Result<Dataset, IngestError> {
    let flows = parse_packet_file(&dir.join("packets.csv"))?;
    let manifest = parse_manifest_file(&dir.join("manifest.csv"))?;
    let ds = Dataset {
        flows,
        manifest,
        split: Split::Full,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes a corpus directory (`packets.csv` + `manifest.csv`).
pub fn write_corpus(dir: &Path, dataset: &Dataset) -> Result<(), IngestError> {
    fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
    write_packet_file(&dir.join("packets.csv"), &dataset.flows)?;
    write_manifest_file(&dir.join("manifest.csv"), &dataset.manifest)
}

/// Splits a corpus into train and test datasets by association, so the two
/// segments of one connection always land in the same split.
///
/// Associations are shuffled deterministically by `seed`; the first
/// floor(n * split_fraction) go to train, the rest to test.
pub fn assemble_dataset(
    flows: &HashMap<String, Flow>,
    manifest: &PairManifest,
    split_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), IngestError> {
    if manifest.is_empty() {
        return Err(IngestError::EmptyManifest);
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(IngestError::BadSplitFraction(split_fraction));
    }
    for (a, b) in &manifest.entries {
        for id in [a, b] {
            if !flows.contains_key(id) {
                return Err(IngestError::MissingFlow(id.clone()));
            }
        }
    }

    let mut order: Vec<usize> = (0..manifest.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (manifest.len() as f64 * split_fraction).floor() as usize;

    let build = |indices: &[usize], split: Split| -> Dataset {
        let mut idx: Vec<usize> = indices.to_vec();
        idx.sort_unstable(); // keep manifest order within each split
        let entries: Vec<(String, String)> =
            idx.iter().map(|&i| manifest.entries[i].clone()).collect();
        let mut subset = HashMap::new();
        for (a, b) in &entries {
            for id in [a, b] {
                subset.insert(id.clone(), flows[id].clone());
            }
        }
        Dataset {
            flows: subset,
            manifest: PairManifest { entries },
            split,
        }
    };

    Ok((
        build(&order[..n_train], Split::Train),
        build(&order[n_train..], Split::Test),
    ))
}
