//! Complete-data interpretations: parsing, writing and forward sampling.
//!
//! Block format: one `atom.` (true) or `\+atom.` (false) per line, records
//! separated by a line containing exactly `---`. Lines starting with `%` or
//! `#` are comments. CSV format: a header row of atom names followed by 0/1
//! rows.

use std::collections::HashMap;

use bitvec::prelude::*;
use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Exec;
use crate::ground::{AtomId, GroundProgram};
use crate::parser::parse_ground_atom;

/// Identifier of the sampling algorithm, written into sample headers.
pub const GENERATOR_ID: &str = "chacha8-stream-per-record-v1";

/// One total truth assignment, indexed by ground atom id.
pub type Record = BitVec<u64, Lsb0>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DataError {
    #[error("unknown atom `{atom}` in record {record}")]
    UnknownAtom { atom: String, record: usize },
    #[error("atom `{atom}` assigned twice in record {record}")]
    DuplicateAtom { atom: String, record: usize },
    #[error("incomplete interpretation: {atom} unassigned in record {record}")]
    Incomplete { atom: String, record: usize },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("expected {expected} parameters, got {found}")]
    ParamLength { expected: usize, found: usize },
    #[error("parameter {index} = {value} outside [0,1]")]
    ParamRange { index: usize, value: f64 },
}

/// Deduplicated records with positive integer weights, in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpretationSet {
    n_atoms: usize,
    records: IndexMap<Record, u64>,
}

impl InterpretationSet {
    pub fn new(n_atoms: usize) -> Self {
        InterpretationSet {
            n_atoms,
            records: IndexMap::new(),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn push(&mut self, record: Record) {
        self.push_weighted(record, 1);
    }

    pub fn push_weighted(&mut self, record: Record, weight: u64) {
        assert_eq!(record.len(), self.n_atoms, "record length");
        if weight > 0 {
            *self.records.entry(record).or_insert(0) += weight;
        }
    }

    /// Number of distinct records.
    pub fn distinct(&self) -> usize {
        self.records.len()
    }

    pub fn total_weight(&self) -> u64 {
        self.records.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Record, u64)> {
        self.records.iter().map(|(r, &w)| (r, w))
    }

    /// Records and weights as a slice-friendly vector, for chunked folds.
    pub fn entries(&self) -> Vec<(&Record, u64)> {
        self.iter().collect()
    }

    pub fn extend(&mut self, other: &InterpretationSet) {
        for (r, w) in other.iter() {
            self.push_weighted(r.clone(), w);
        }
    }

    /// Keeps the distinct records for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(&Record) -> bool) {
        self.records.retain(|r, _| keep(r));
    }
}

fn first_significant_line(text: &str) -> Option<&str> {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('%') && !l.starts_with('#'))
}

/// Parses block or CSV text, chosen by the shape of the first significant line.
pub fn parse_interpretations(text: &str, gp: &GroundProgram) -> Result<InterpretationSet, DataError> {
    match first_significant_line(text) {
        Some(l) if l != "---" && !l.ends_with('.') => parse_csv(text, gp),
        _ => parse_blocks(text, gp),
    }
}

fn finish_record(
    assigned: &mut [Option<bool>],
    gp: &GroundProgram,
    record: usize,
) -> Result<Record, DataError> {
    let mut bits = bitvec![u64, Lsb0; 0; assigned.len()];
    for (i, v) in assigned.iter_mut().enumerate() {
        match v.take() {
            Some(b) => bits.set(i, b),
            None => {
                return Err(DataError::Incomplete {
                    atom: gp.atoms[i].to_string(),
                    record,
                })
            }
        }
    }
    Ok(bits)
}

pub fn parse_blocks(text: &str, gp: &GroundProgram) -> Result<InterpretationSet, DataError> {
    let mut set = InterpretationSet::new(gp.num_atoms());
    let mut assigned: Vec<Option<bool>> = vec![None; gp.num_atoms()];
    let mut open = false;
    let mut record = 1;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') || line.starts_with('#') {
            continue;
        }
        if line == "---" {
            if open {
                set.push(finish_record(&mut assigned, gp, record)?);
                record += 1;
                open = false;
            }
            continue;
        }
        let (negated, rest) = match line.strip_prefix("\\+") {
            Some(r) => (true, r.trim_start()),
            None => (false, line),
        };
        let atom_text = rest.strip_suffix('.').ok_or_else(|| DataError::Syntax {
            line: lineno + 1,
            message: format!("expected `atom.` or `\\+atom.`, found `{line}`"),
        })?;
        let atom = parse_ground_atom(atom_text.trim()).map_err(|e| DataError::Syntax {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let gatom = crate::ground::GroundAtom {
            predicate: atom.predicate,
            args: atom.args.iter().map(|t| t.to_string()).collect(),
        };
        let id = gp.atom_id(&gatom).ok_or_else(|| DataError::UnknownAtom {
            atom: gatom.to_string(),
            record,
        })?;
        if assigned[id].is_some() {
            return Err(DataError::DuplicateAtom {
                atom: gatom.to_string(),
                record,
            });
        }
        assigned[id] = Some(!negated);
        open = true;
    }
    if open {
        set.push(finish_record(&mut assigned, gp, record)?);
    }
    Ok(set)
}

pub fn parse_csv(text: &str, gp: &GroundProgram) -> Result<InterpretationSet, DataError> {
    let body: String = text
        .lines()
        .filter(|l| {
            let t = l.trim();
            !t.starts_with('%') && !t.starts_with('#')
        })
        .collect::<Vec<_>>()
        .join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    let mut columns: Vec<AtomId> = Vec::with_capacity(headers.len());
    for h in headers.iter() {
        let atom = parse_ground_atom(h).map_err(|e| DataError::Csv(format!("header `{h}`: {e}")))?;
        let gatom = crate::ground::GroundAtom {
            predicate: atom.predicate,
            args: atom.args.iter().map(|t| t.to_string()).collect(),
        };
        let id = gp.atom_id(&gatom).ok_or_else(|| DataError::UnknownAtom {
            atom: gatom.to_string(),
            record: 0,
        })?;
        if columns.contains(&id) {
            return Err(DataError::DuplicateAtom {
                atom: gatom.to_string(),
                record: 0,
            });
        }
        columns.push(id);
    }

    let mut set = InterpretationSet::new(gp.num_atoms());
    let mut assigned: Vec<Option<bool>> = vec![None; gp.num_atoms()];
    for (row, result) in reader.records().enumerate() {
        let rec = result.map_err(|e| DataError::Csv(e.to_string()))?;
        for (&id, field) in columns.iter().zip(rec.iter()) {
            assigned[id] = Some(match field {
                "1" => true,
                "0" => false,
                other => {
                    return Err(DataError::Csv(format!(
                        "row {}: expected 0 or 1, found `{other}`",
                        row + 1
                    )))
                }
            });
        }
        set.push(finish_record(&mut assigned, gp, row + 1)?);
    }
    Ok(set)
}

/// Writes records in block format, expanding weights, with an optional `#` header line.
pub fn write_blocks(data: &InterpretationSet, gp: &GroundProgram, header: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    let mut block = String::new();
    for (record, weight) in data.iter() {
        block.clear();
        for (i, atom) in gp.atoms.iter().enumerate() {
            if !record[i] {
                block.push_str("\\+");
            }
            block.push_str(&atom.to_string());
            block.push_str(".\n");
        }
        block.push_str("---\n");
        for _ in 0..weight {
            out.push_str(&block);
        }
    }
    out
}

/// Header line for sampled datasets.
pub fn sample_header(seed: u64) -> String {
    format!("seed={seed} generator={GENERATOR_ID}")
}

/// Draws `n` records by forward sampling in topological order. Record `i`
/// uses its own ChaCha8 stream, so output is independent of `exec`.
pub fn forward_sample(
    gp: &GroundProgram,
    theta: &[f64],
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<InterpretationSet, DataError> {
    if theta.len() != gp.num_params() {
        return Err(DataError::ParamLength {
            expected: gp.num_params(),
            found: theta.len(),
        });
    }
    if let Some((index, &value)) = theta.iter().enumerate().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
        return Err(DataError::ParamRange { index, value });
    }
    let by_head = gp.clauses_by_head();
    let probs: Vec<f64> = gp.clauses.iter().map(|c| c.label.probability(theta)).collect();

    let draw = |i: usize| -> Record {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut bits = bitvec![u64, Lsb0; 0; gp.num_atoms()];
        for &atom in &gp.topo_order {
            let value = by_head[atom].iter().any(|&ci| {
                let c = &gp.clauses[ci];
                c.body.iter().all(|l| l.holds(bits[l.atom])) && {
                    let p = probs[ci];
                    p >= 1.0 || (p > 0.0 && rng.gen_bool(p))
                }
            });
            bits.set(atom, value);
        }
        bits
    };

    let mut set = InterpretationSet::new(gp.num_atoms());
    for record in exec.map_range(n, draw) {
        set.push(record);
    }
    Ok(set)
}

/// Builds a map from atom text to id, for tests and tools.
pub fn atom_lookup(gp: &GroundProgram) -> HashMap<String, AtomId> {
    gp.atoms
        .iter()
        .enumerate()
        .map(|(i, a)| (a.to_string(), i))
        .collect()
}
