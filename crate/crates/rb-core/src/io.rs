//! Binary artifact container for the offline/online split.  Everything the
//! online phase needs — reduced bases, projected models, stability states,
//! cached truth solves — is stored in one self-describing file so an online
//! run never touches mesh assembly or truth solves.
//!
//! The format is deliberately small: a magic tag, a version, and a sorted
//! sequence of named records.  Each record is a column-major matrix of
//! `f64`/complex values, a list of integers, or a UTF-8 string.  Sorting by
//! name makes the byte stream independent of insertion order, so identical
//! contents always produce identical files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::basis::{BasisBlock, ReducedBasis, SnapshotLabel};
use crate::error::{Error, Result};
use crate::greedy::TrainingSolves;
use crate::param::SampleSet;
use crate::reduced::{GramRed, ReducedModel};
use crate::scalar::Scalar;
use crate::scm::{ScmConfig, ScmConstraint, ScmHistoryEntry, ScmMode, ScmState};
use crate::truth::{TruthModel, XGram};

const MAGIC: &[u8; 4] = b"RBMX";
const VERSION: u32 = 1;

const KIND_REAL: u8 = 0;
const KIND_COMPLEX: u8 = 1;
const KIND_INT: u8 = 2;
const KIND_TEXT: u8 = 3;

/// Hard cap on entries per record; rejects nonsense sizes from corrupt
/// headers before any allocation is attempted.
const MAX_ENTRIES: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq)]
enum Record {
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex<f64>>),
    Int(Vec<i64>),
    Text(String),
}

impl Record {
    fn kind_name(&self) -> &'static str {
        match self {
            Record::Real(_) => "real matrix",
            Record::Complex(_) => "complex matrix",
            Record::Int(_) => "integer list",
            Record::Text(_) => "text",
        }
    }
}

/// Named collection of numeric records with a deterministic byte encoding.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    records: BTreeMap<String, Record>,
}

fn corrupt(detail: impl Into<String>) -> Error {
    Error::Container(detail.into())
}

fn read_err(e: std::io::Error) -> Error {
    corrupt(format!("truncated or unreadable container: {e}"))
}

fn key(prefix: &str, field: &str) -> String {
    format!("{prefix}/{field}")
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.records.contains_key(name)
    }

    /// Record names in encoding (lexicographic) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn get(&self, name: &str) -> Result<&Record> {
        self.records
            .get(name)
            .ok_or_else(|| corrupt(format!("missing record '{name}'")))
    }

    pub fn put_matrix<T: Scalar>(&mut self, name: &str, m: &DMatrix<T>) {
        let rec = if T::IS_COMPLEX {
            Record::Complex(DMatrix::from_iterator(
                m.nrows(),
                m.ncols(),
                m.iter().map(|&x| Complex::new(x.re_f64(), x.im_f64())),
            ))
        } else {
            Record::Real(DMatrix::from_iterator(
                m.nrows(),
                m.ncols(),
                m.iter().map(|&x| x.re_f64()),
            ))
        };
        self.records.insert(name.to_string(), rec);
    }

    /// Reads a matrix record.  Real records widen into any scalar type;
    /// complex records require a complex scalar type.
    pub fn get_matrix<T: Scalar>(&self, name: &str) -> Result<DMatrix<T>> {
        match self.get(name)? {
            Record::Real(m) => Ok(DMatrix::from_iterator(
                m.nrows(),
                m.ncols(),
                m.iter().map(|&x| T::from_re(x)),
            )),
            Record::Complex(m) => {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                for (o, z) in out.iter_mut().zip(m.iter()) {
                    *o = T::try_from_parts(z.re, z.im).ok_or_else(|| {
                        corrupt(format!(
                            "record '{name}' holds complex values; a real scalar type cannot receive it"
                        ))
                    })?;
                }
                Ok(out)
            }
            other => Err(corrupt(format!(
                "record '{name}' is a {}, not a matrix",
                other.kind_name()
            ))),
        }
    }

    pub fn put_vector<T: Scalar>(&mut self, name: &str, v: &DVector<T>) {
        let m = DMatrix::from_iterator(v.len(), 1, v.iter().copied());
        self.put_matrix(name, &m);
    }

    pub fn get_vector<T: Scalar>(&self, name: &str) -> Result<DVector<T>> {
        let m = self.get_matrix::<T>(name)?;
        if m.ncols() != 1 {
            return Err(corrupt(format!(
                "record '{name}' has {} columns, expected a single-column vector",
                m.ncols()
            )));
        }
        Ok(DVector::from_column_slice(m.as_slice()))
    }

    pub fn put_reals(&mut self, name: &str, vals: &[f64]) {
        self.records.insert(
            name.to_string(),
            Record::Real(DMatrix::from_column_slice(vals.len(), 1, vals)),
        );
    }

    pub fn get_reals(&self, name: &str) -> Result<Vec<f64>> {
        let m = self.get_matrix::<f64>(name)?;
        if m.ncols() > 1 {
            return Err(corrupt(format!(
                "record '{name}' has {} columns, expected a single-column list",
                m.ncols()
            )));
        }
        Ok(m.as_slice().to_vec())
    }

    pub fn put_ints(&mut self, name: &str, vals: &[i64]) {
        self.records.insert(name.to_string(), Record::Int(vals.to_vec()));
    }

    pub fn get_ints(&self, name: &str) -> Result<&[i64]> {
        match self.get(name)? {
            Record::Int(v) => Ok(v),
            other => Err(corrupt(format!(
                "record '{name}' is a {}, not an integer list",
                other.kind_name()
            ))),
        }
    }

    pub fn put_text(&mut self, name: &str, text: &str) {
        self.records.insert(name.to_string(), Record::Text(text.to_string()));
    }

    pub fn get_text(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            Record::Text(s) => Ok(s),
            other => Err(corrupt(format!(
                "record '{name}' is a {}, not text",
                other.kind_name()
            ))),
        }
    }

    /// Encodes every record into `w`; the stream depends only on the stored
    /// contents, never on insertion order.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(self.records.len() as u64)?;
        for (name, rec) in &self.records {
            let bytes = name.as_bytes();
            if bytes.len() > u16::MAX as usize {
                return Err(Error::InvalidConfig(format!(
                    "record name of {} bytes exceeds the format limit",
                    bytes.len()
                )));
            }
            w.write_u16::<LittleEndian>(bytes.len() as u16)?;
            w.write_all(bytes)?;
            match rec {
                Record::Real(m) => {
                    w.write_u8(KIND_REAL)?;
                    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
                    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
                    for x in m.iter() {
                        w.write_f64::<LittleEndian>(*x)?;
                    }
                }
                Record::Complex(m) => {
                    w.write_u8(KIND_COMPLEX)?;
                    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
                    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
                    for z in m.iter() {
                        w.write_f64::<LittleEndian>(z.re)?;
                        w.write_f64::<LittleEndian>(z.im)?;
                    }
                }
                Record::Int(v) => {
                    w.write_u8(KIND_INT)?;
                    w.write_u64::<LittleEndian>(v.len() as u64)?;
                    w.write_u64::<LittleEndian>(1)?;
                    for x in v {
                        w.write_i64::<LittleEndian>(*x)?;
                    }
                }
                Record::Text(s) => {
                    w.write_u8(KIND_TEXT)?;
                    w.write_u64::<LittleEndian>(s.len() as u64)?;
                    w.write_u64::<LittleEndian>(1)?;
                    w.write_all(s.as_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Decodes a container; any malformed content — wrong magic, unknown
    /// version or kind, truncated payload — reports [`Error::Container`].
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(read_err)?;
        if &magic != MAGIC {
            return Err(corrupt(format!("bad magic {magic:?}, not an artifact container")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(read_err)?;
        if version != VERSION {
            return Err(corrupt(format!(
                "container version {version} is not supported (expected {VERSION})"
            )));
        }
        let count = r.read_u64::<LittleEndian>().map_err(read_err)?;
        let mut records = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.read_u16::<LittleEndian>().map_err(read_err)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes).map_err(read_err)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| corrupt("record name is not valid UTF-8"))?;
            let kind = r.read_u8().map_err(read_err)?;
            let rows = r.read_u64::<LittleEndian>().map_err(read_err)?;
            let cols = r.read_u64::<LittleEndian>().map_err(read_err)?;
            let entries = rows
                .checked_mul(cols)
                .filter(|&n| n <= MAX_ENTRIES)
                .ok_or_else(|| {
                    corrupt(format!("record '{name}' claims an implausible {rows}×{cols} shape"))
                })?;
            let rec = match kind {
                KIND_REAL => {
                    let mut data = Vec::with_capacity(entries as usize);
                    for _ in 0..entries {
                        data.push(r.read_f64::<LittleEndian>().map_err(read_err)?);
                    }
                    Record::Real(DMatrix::from_vec(rows as usize, cols as usize, data))
                }
                KIND_COMPLEX => {
                    let mut data = Vec::with_capacity(entries as usize);
                    for _ in 0..entries {
                        let re = r.read_f64::<LittleEndian>().map_err(read_err)?;
                        let im = r.read_f64::<LittleEndian>().map_err(read_err)?;
                        data.push(Complex::new(re, im));
                    }
                    Record::Complex(DMatrix::from_vec(rows as usize, cols as usize, data))
                }
                KIND_INT => {
                    if cols != 1 {
                        return Err(corrupt(format!(
                            "integer record '{name}' must have one column, found {cols}"
                        )));
                    }
                    let mut data = Vec::with_capacity(entries as usize);
                    for _ in 0..entries {
                        data.push(r.read_i64::<LittleEndian>().map_err(read_err)?);
                    }
                    Record::Int(data)
                }
                KIND_TEXT => {
                    if cols != 1 {
                        return Err(corrupt(format!(
                            "text record '{name}' must have one column, found {cols}"
                        )));
                    }
                    let mut bytes = vec![0u8; entries as usize];
                    r.read_exact(&mut bytes).map_err(read_err)?;
                    Record::Text(
                        String::from_utf8(bytes)
                            .map_err(|_| corrupt(format!("record '{name}' is not valid UTF-8")))?,
                    )
                }
                other => {
                    return Err(corrupt(format!("record '{name}' has unknown kind {other}")))
                }
            };
            records.insert(name, rec);
        }
        Ok(Self { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let c = Self::read_from(&mut r)?;
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing) {
            Ok(0) => Ok(c),
            Ok(_) => Err(corrupt("trailing bytes after the last record")),
            Err(e) => Err(read_err(e)),
        }
    }
}

// ---------------------------------------------------------------------------
// Snapshot-label codec: one row per label, columns [kind, direction, order,
// μ_1, …, μ_P].  Small integers pass through f64 exactly.
// ---------------------------------------------------------------------------

const LABEL_LAGRANGE: f64 = 0.0;
const LABEL_TAYLOR: f64 = 1.0;

fn encode_labels(blocks: &[BasisBlock]) -> Result<DMatrix<f64>> {
    let labels: Vec<&SnapshotLabel> = blocks.iter().flat_map(|b| &b.labels).collect();
    let p = labels.first().map_or(0, |l| l.mu().len());
    if labels.iter().any(|l| l.mu().len() != p) {
        return Err(Error::InvalidConfig(
            "snapshot labels carry parameter vectors of unequal length".into(),
        ));
    }
    let mut m = DMatrix::zeros(labels.len(), 3 + p);
    for (i, label) in labels.iter().enumerate() {
        let (kind, direction, order) = match label {
            SnapshotLabel::Lagrange { .. } => (LABEL_LAGRANGE, 0.0, 0.0),
            SnapshotLabel::Taylor { direction, order, .. } => {
                (LABEL_TAYLOR, *direction as f64, f64::from(*order))
            }
        };
        m[(i, 0)] = kind;
        m[(i, 1)] = direction;
        m[(i, 2)] = order;
        for (j, x) in label.mu().iter().enumerate() {
            m[(i, 3 + j)] = *x;
        }
    }
    Ok(m)
}

fn decode_label(row: &[f64]) -> Result<SnapshotLabel> {
    if row.len() < 3 {
        return Err(corrupt("snapshot label row is too short"));
    }
    let mu = row[3..].to_vec();
    if row[0] == LABEL_LAGRANGE {
        Ok(SnapshotLabel::Lagrange { mu })
    } else if row[0] == LABEL_TAYLOR {
        Ok(SnapshotLabel::Taylor { mu, direction: row[1] as usize, order: row[2] as u32 })
    } else {
        Err(corrupt(format!("unknown snapshot label kind {}", row[0])))
    }
}

fn matrix_row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    (0..m.ncols()).map(|j| m[(i, j)]).collect()
}

fn usize_from(name: &str, x: i64) -> Result<usize> {
    usize::try_from(x).map_err(|_| corrupt(format!("record '{name}' holds a negative count {x}")))
}

// ---------------------------------------------------------------------------
// Artifact codecs
// ---------------------------------------------------------------------------

impl Container {
    /// Stores a reduced basis under `prefix`: the basis matrix plus the block
    /// bookkeeping (surviving columns and snapshot labels per extension).
    pub fn put_basis<T: Scalar>(&mut self, prefix: &str, basis: &ReducedBasis<T>) -> Result<()> {
        self.put_matrix(&key(prefix, "xi"), basis.matrix());
        let blocks = basis.blocks();
        let columns: Vec<i64> = blocks.iter().map(|b| b.columns as i64).collect();
        let label_counts: Vec<i64> = blocks.iter().map(|b| b.labels.len() as i64).collect();
        self.put_ints(&key(prefix, "block_columns"), &columns);
        self.put_ints(&key(prefix, "block_labels"), &label_counts);
        let labels = encode_labels(blocks)?;
        self.records.insert(key(prefix, "labels"), Record::Real(labels));
        Ok(())
    }

    pub fn get_basis<T: Scalar>(&self, prefix: &str) -> Result<ReducedBasis<T>> {
        let xi = self.get_matrix::<T>(&key(prefix, "xi"))?;
        let columns = self.get_ints(&key(prefix, "block_columns"))?;
        let label_counts = self.get_ints(&key(prefix, "block_labels"))?;
        if columns.len() != label_counts.len() {
            return Err(corrupt(format!(
                "basis '{prefix}' records {} column counts but {} label counts",
                columns.len(),
                label_counts.len()
            )));
        }
        let label_rows = self.get_matrix::<f64>(&key(prefix, "labels"))?;
        let total: usize = label_counts
            .iter()
            .map(|&c| usize_from("block_labels", c))
            .sum::<Result<usize>>()?;
        if total != label_rows.nrows() {
            return Err(corrupt(format!(
                "basis '{prefix}' bookkeeping expects {total} labels, found {}",
                label_rows.nrows()
            )));
        }
        let mut blocks = Vec::with_capacity(columns.len());
        let mut next = 0usize;
        for (&cols, &nlabels) in columns.iter().zip(label_counts) {
            let nlabels = usize_from("block_labels", nlabels)?;
            let labels = (next..next + nlabels)
                .map(|i| decode_label(&matrix_row(&label_rows, i)))
                .collect::<Result<Vec<_>>>()?;
            next += nlabels;
            blocks.push(BasisBlock { labels, columns: usize_from("block_columns", cols)? });
        }
        ReducedBasis::from_parts(xi, blocks)
    }

    /// Stores the numeric blocks of a projected model.  The parameter
    /// coefficients are functional and are reattached from the truth model on
    /// load.
    pub fn put_reduced<T: Scalar>(&mut self, prefix: &str, rm: &ReducedModel<T>) {
        let (gram_kind, gram_terms): (i64, usize) = match rm.gram_red() {
            GramRed::Fixed(_) => (0, 1),
            GramRed::Affine { terms, .. } => (1, terms.len()),
        };
        self.put_ints(
            &key(prefix, "meta"),
            &[rm.q_a() as i64, rm.q_f() as i64, gram_kind, gram_terms as i64],
        );
        for (q, a) in rm.a_red().iter().enumerate() {
            self.put_matrix(&key(prefix, &format!("a/{q}")), a);
        }
        for (q, f) in rm.f_red().iter().enumerate() {
            self.put_vector(&key(prefix, &format!("f/{q}")), f);
        }
        match rm.gram_red() {
            GramRed::Fixed(g) => self.put_matrix(&key(prefix, "gram/0"), g),
            GramRed::Affine { terms, .. } => {
                for (r, g) in terms.iter().enumerate() {
                    self.put_matrix(&key(prefix, &format!("gram/{r}")), g);
                }
            }
        }
    }

    /// Restores a projected model; `model` supplies the coefficient
    /// functions and must describe the same problem the blocks came from.
    pub fn get_reduced<T: Scalar>(
        &self,
        prefix: &str,
        model: &TruthModel<T>,
    ) -> Result<ReducedModel<T>> {
        let meta = self.get_ints(&key(prefix, "meta"))?;
        if meta.len() != 4 {
            return Err(corrupt(format!("reduced model '{prefix}' has a malformed meta record")));
        }
        let (q_a, q_f) = (usize_from("meta", meta[0])?, usize_from("meta", meta[1])?);
        let gram_terms = usize_from("meta", meta[3])?;
        if q_a != model.q_a() || q_f != model.q_f() {
            return Err(corrupt(format!(
                "reduced model '{prefix}' has {q_a}/{q_f} operator/load terms, the truth model {}/{}",
                model.q_a(),
                model.q_f()
            )));
        }
        let a_red = (0..q_a)
            .map(|q| self.get_matrix::<T>(&key(prefix, &format!("a/{q}"))))
            .collect::<Result<Vec<_>>>()?;
        let f_red = (0..q_f)
            .map(|q| self.get_vector::<T>(&key(prefix, &format!("f/{q}"))))
            .collect::<Result<Vec<_>>>()?;
        let gram_red = match (meta[2], model.x_gram()) {
            (0, XGram::Fixed(_)) => GramRed::Fixed(self.get_matrix::<T>(&key(prefix, "gram/0"))?),
            (1, XGram::Affine { sigma, .. }) => {
                if gram_terms != sigma.len() {
                    return Err(corrupt(format!(
                        "reduced model '{prefix}' stores {gram_terms} inner-product terms, the truth model has {}",
                        sigma.len()
                    )));
                }
                GramRed::Affine {
                    terms: (0..gram_terms)
                        .map(|r| self.get_matrix::<T>(&key(prefix, &format!("gram/{r}"))))
                        .collect::<Result<Vec<_>>>()?,
                    sigma: sigma.clone(),
                }
            }
            _ => {
                return Err(corrupt(format!(
                    "reduced model '{prefix}' and the truth model disagree on the inner-product kind"
                )))
            }
        };
        ReducedModel::from_parts(
            a_red,
            f_red,
            gram_red,
            model.theta_a().to_vec(),
            model.theta_f().to_vec(),
        )
    }

    /// Stores a stability-bound state: box bounds, constraint set, training
    /// points, greedy history, and configuration.
    pub fn put_scm<T: Scalar>(&mut self, prefix: &str, state: &ScmState<T>) {
        let cfg = state.config();
        let mode = match state.mode() {
            ScmMode::Coercive => 0i64,
            ScmMode::InfSupSquared => 1,
        };
        self.put_ints(
            &key(prefix, "meta"),
            &[
                mode,
                cfg.m_alpha as i64,
                cfg.m_plus as i64,
                cfg.k_max as i64,
                i64::from(state.converged()),
            ],
        );
        self.put_reals(&key(prefix, "gap_tol"), &[cfg.gap_tol]);
        let (lower, upper) = state.box_bounds();
        self.put_reals(&key(prefix, "box_lower"), lower);
        self.put_reals(&key(prefix, "box_upper"), upper);
        self.put_samples(&key(prefix, "train"), state.train());

        let constraints = state.constraints();
        let j = constraints.first().map_or(0, |c| c.y.len());
        let p = constraints.first().map_or(0, |c| c.mu.len());
        let mut mu_m = DMatrix::zeros(constraints.len(), p);
        let mut y_m = DMatrix::zeros(constraints.len(), j);
        let mut values = Vec::with_capacity(constraints.len());
        for (i, c) in constraints.iter().enumerate() {
            for (jj, x) in c.mu.iter().enumerate() {
                mu_m[(i, jj)] = *x;
            }
            for (jj, x) in c.y.iter().enumerate() {
                y_m[(i, jj)] = *x;
            }
            values.push(c.value);
        }
        self.records.insert(key(prefix, "constraint_mu"), Record::Real(mu_m));
        self.records.insert(key(prefix, "constraint_y"), Record::Real(y_m));
        self.put_reals(&key(prefix, "constraint_value"), &values);

        let history = state.history();
        let hp = history.first().map_or(0, |h| h.mu.len());
        let mut hmu = DMatrix::zeros(history.len(), hp);
        let mut hk = Vec::with_capacity(history.len());
        let mut hgap = Vec::with_capacity(history.len());
        for (i, h) in history.iter().enumerate() {
            for (jj, x) in h.mu.iter().enumerate() {
                hmu[(i, jj)] = *x;
            }
            hk.push(h.k as i64);
            hgap.push(h.gap);
        }
        self.records.insert(key(prefix, "history_mu"), Record::Real(hmu));
        self.put_ints(&key(prefix, "history_k"), &hk);
        self.put_reals(&key(prefix, "history_gap"), &hgap);
    }

    /// Restores a stability-bound state; `model` supplies the coefficient
    /// functions.
    pub fn get_scm<T: Scalar>(&self, prefix: &str, model: &TruthModel<T>) -> Result<ScmState<T>> {
        let meta = self.get_ints(&key(prefix, "meta"))?;
        if meta.len() != 5 {
            return Err(corrupt(format!("stability state '{prefix}' has a malformed meta record")));
        }
        let mode = match meta[0] {
            0 => ScmMode::Coercive,
            1 => ScmMode::InfSupSquared,
            other => return Err(corrupt(format!("unknown stability mode tag {other}"))),
        };
        let gap_tol_rec = self.get_reals(&key(prefix, "gap_tol"))?;
        let gap_tol = *gap_tol_rec
            .first()
            .ok_or_else(|| corrupt(format!("stability state '{prefix}' lacks a gap tolerance")))?;
        let config = ScmConfig {
            mode,
            m_alpha: usize_from("meta", meta[1])?,
            m_plus: usize_from("meta", meta[2])?,
            k_max: usize_from("meta", meta[3])?,
            gap_tol,
        };
        let box_lower = self.get_reals(&key(prefix, "box_lower"))?;
        let box_upper = self.get_reals(&key(prefix, "box_upper"))?;
        let train = self.get_samples(&key(prefix, "train"))?;

        let mu_m = self.get_matrix::<f64>(&key(prefix, "constraint_mu"))?;
        let y_m = self.get_matrix::<f64>(&key(prefix, "constraint_y"))?;
        let values = self.get_reals(&key(prefix, "constraint_value"))?;
        if mu_m.nrows() != values.len() || y_m.nrows() != values.len() {
            return Err(corrupt(format!(
                "stability state '{prefix}' constraint records disagree on the constraint count"
            )));
        }
        let constraints = (0..values.len())
            .map(|i| ScmConstraint {
                mu: matrix_row(&mu_m, i),
                value: values[i],
                y: matrix_row(&y_m, i),
            })
            .collect();

        let hmu = self.get_matrix::<f64>(&key(prefix, "history_mu"))?;
        let hk = self.get_ints(&key(prefix, "history_k"))?;
        let hgap = self.get_reals(&key(prefix, "history_gap"))?;
        if hmu.nrows() != hk.len() || hgap.len() != hk.len() {
            return Err(corrupt(format!(
                "stability state '{prefix}' history records disagree on the entry count"
            )));
        }
        let history = (0..hk.len())
            .map(|i| {
                Ok(ScmHistoryEntry {
                    k: usize_from("history_k", hk[i])?,
                    mu: matrix_row(&hmu, i),
                    gap: hgap[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(ScmState::from_parts(
            mode,
            model.theta_a().to_vec(),
            box_lower,
            box_upper,
            constraints,
            train,
            history,
            meta[4] != 0,
            config,
        ))
    }

    /// Stores cached truth solves as one dense matrix, one solve per column.
    pub fn put_solves<T: Scalar>(&mut self, prefix: &str, solves: &TrainingSolves<T>) {
        let dofs = solves.all().first().map_or(0, nalgebra::DVector::len);
        let mut m = DMatrix::zeros(dofs, solves.len());
        for (j, u) in solves.all().iter().enumerate() {
            m.set_column(j, u);
        }
        self.put_matrix(&key(prefix, "u"), &m);
    }

    pub fn get_solves<T: Scalar>(&self, prefix: &str) -> Result<TrainingSolves<T>> {
        let m = self.get_matrix::<T>(&key(prefix, "u"))?;
        let solutions = (0..m.ncols()).map(|j| m.column(j).into_owned()).collect();
        Ok(TrainingSolves::from_vectors(solutions))
    }

    /// Stores a sample set as one matrix, one parameter point per row.
    pub fn put_samples(&mut self, name: &str, samples: &SampleSet) {
        let p = samples.points().first().map_or(0, Vec::len);
        let mut m = DMatrix::zeros(samples.len(), p);
        for (i, mu) in samples.points().iter().enumerate() {
            for (j, x) in mu.iter().enumerate() {
                m[(i, j)] = *x;
            }
        }
        self.records.insert(name.to_string(), Record::Real(m));
    }

    pub fn get_samples(&self, name: &str) -> Result<SampleSet> {
        let m = self.get_matrix::<f64>(name)?;
        Ok(SampleSet::explicit((0..m.nrows()).map(|i| matrix_row(&m, i)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    use crate::basis::OrthoFrame;
    use crate::param::{tensor_grid, ParameterDomain};
    use crate::problems::{
        build_helmholtz_1d, build_thermal_block, HelmholtzConfig, ThermalBlockConfig,
    };
    use crate::taylor::{append_derivative_order, DerivativeChains};

    fn round_trip(c: &Container) -> Container {
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();
        Container::read_from(&mut bytes.as_slice()).unwrap()
    }

    #[test]
    fn records_survive_a_byte_round_trip() {
        let mut c = Container::new();
        c.put_matrix("m", &dmatrix![1.0, 2.0; 3.0, 4.5]);
        c.put_matrix(
            "z",
            &DMatrix::from_row_slice(1, 2, &[Complex::new(1.0, -2.0), Complex::new(0.5, 3.0)]),
        );
        c.put_ints("counts", &[3, -1, 0]);
        c.put_text("note", "reduced artifacts");
        c.put_reals("vals", &[0.25, -1.5]);

        let back = round_trip(&c);
        assert_eq!(back, c);
        assert_eq!(back.get_text("note").unwrap(), "reduced artifacts");
        assert_eq!(back.get_ints("counts").unwrap(), &[3, -1, 0]);
        assert_eq!(back.get_reals("vals").unwrap(), vec![0.25, -1.5]);
        let z: DMatrix<Complex<f64>> = back.get_matrix("z").unwrap();
        assert_eq!(z[(0, 1)], Complex::new(0.5, 3.0));
    }

    #[test]
    fn encoding_is_independent_of_insertion_order() {
        let mut a = Container::new();
        a.put_reals("alpha", &[1.0]);
        a.put_ints("beta", &[2]);
        a.put_text("gamma", "x");

        let mut b = Container::new();
        b.put_text("gamma", "x");
        b.put_reals("alpha", &[1.0]);
        b.put_ints("beta", &[2]);

        let mut ba = Vec::new();
        let mut bb = Vec::new();
        a.write_to(&mut ba).unwrap();
        b.write_to(&mut bb).unwrap();
        assert_eq!(ba, bb, "byte stream must not depend on insertion order");
    }

    #[test]
    fn complex_records_refuse_real_scalars() {
        let mut c = Container::new();
        c.put_matrix("z", &DMatrix::from_element(2, 2, Complex::new(0.0, 1.0)));
        let err = c.get_matrix::<f64>("z").unwrap_err();
        assert!(matches!(err, Error::Container(_)), "got {err:?}");
        // real records widen into complex scalars without loss
        c.put_matrix("m", &dmatrix![2.0, 0.5]);
        let z: DMatrix<Complex<f64>> = c.get_matrix("m").unwrap();
        assert_eq!(z[(0, 0)], Complex::new(2.0, 0.0));
    }

    #[test]
    fn missing_records_and_kind_mismatches_are_reported() {
        let mut c = Container::new();
        c.put_ints("counts", &[1]);
        assert!(matches!(c.get_matrix::<f64>("absent"), Err(Error::Container(_))));
        assert!(matches!(c.get_text("counts"), Err(Error::Container(_))));
        assert!(matches!(c.get_matrix::<f64>("counts"), Err(Error::Container(_))));
    }

    #[test]
    fn corrupted_streams_are_rejected() {
        let mut c = Container::new();
        c.put_reals("x", &[1.0, 2.0, 3.0]);
        let mut bytes = Vec::new();
        c.write_to(&mut bytes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'Q';
        assert!(matches!(
            Container::read_from(&mut bad_magic.as_slice()),
            Err(Error::Container(_))
        ));

        let truncated = &bytes[..bytes.len() - 7];
        assert!(matches!(
            Container::read_from(&mut &truncated[..]),
            Err(Error::Container(_))
        ));

        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        assert!(matches!(
            Container::read_from(&mut bad_version.as_slice()),
            Err(Error::Container(_))
        ));
    }

    fn thermal_fixture() -> (TruthModel<f64>, OrthoFrame<f64>) {
        let model = build_thermal_block::<f64>(&ThermalBlockConfig::new(6).unwrap()).unwrap();
        let frame = OrthoFrame::new(&model, None).unwrap();
        (model, frame)
    }

    fn small_basis(model: &TruthModel<f64>, frame: &OrthoFrame<f64>) -> ReducedBasis<f64> {
        let mut basis = ReducedBasis::empty(model.dofs());
        for mu in [[0.3, 0.9], [0.8, 0.2]] {
            let u = model.truth_solve(&mu).unwrap();
            basis
                .extend_pod(
                    frame,
                    &[u],
                    vec![SnapshotLabel::Lagrange { mu: mu.to_vec() }],
                    1e-12,
                )
                .unwrap();
        }
        let mut chains = DerivativeChains::new(model, &[0.3, 0.9]).unwrap();
        append_derivative_order(model, frame, &mut basis, &mut chains, 1, 1e-12).unwrap();
        basis
    }

    #[test]
    fn basis_round_trip_preserves_matrix_and_labels() {
        let (model, frame) = thermal_fixture();
        let basis = small_basis(&model, &frame);

        let mut c = Container::new();
        c.put_basis("basis", &basis).unwrap();
        let back: ReducedBasis<f64> = round_trip(&c).get_basis("basis").unwrap();

        assert_eq!(back.matrix(), basis.matrix(), "basis matrix must round-trip bit-exactly");
        assert_eq!(back.blocks().len(), basis.blocks().len());
        for (a, b) in back.blocks().iter().zip(basis.blocks()) {
            assert_eq!(a.columns, b.columns);
            assert_eq!(a.labels, b.labels);
        }
    }

    #[test]
    fn reduced_model_round_trip_solves_identically() {
        let (model, frame) = thermal_fixture();
        let basis = small_basis(&model, &frame);
        let rm = ReducedModel::project(&model, &basis).unwrap();

        let mut c = Container::new();
        c.put_reduced("rm", &rm);
        let back = round_trip(&c).get_reduced("rm", &model).unwrap();

        let mu = [0.55, 0.45];
        let a = rm.solve(&mu, rm.dim()).unwrap();
        let b = back.solve(&mu, back.dim()).unwrap();
        assert_eq!(a, b, "identical blocks and coefficients must give identical solves");
    }

    #[test]
    fn scm_state_round_trip_preserves_bounds() {
        let (model, frame) = thermal_fixture();
        let dom = ParameterDomain::new(vec![0.1, 0.1], vec![1.0, 1.0]).unwrap();
        let train = tensor_grid(&dom, &[5, 5]).unwrap();
        let cfg = crate::scm::ScmConfig::new(ScmMode::Coercive);
        let state = crate::scm::scm_offline(&model, &frame, &train, &cfg).unwrap();

        let mut c = Container::new();
        c.put_scm("scm", &state);
        let back = round_trip(&c).get_scm("scm", &model).unwrap();

        assert_eq!(back.converged(), state.converged());
        assert_eq!(back.constraints().len(), state.constraints().len());
        assert_eq!(back.history().len(), state.history().len());
        for mu in [[0.2, 0.7], [0.95, 0.15], [0.5, 0.5]] {
            assert_eq!(back.lower_bound(&mu), state.lower_bound(&mu));
            assert_eq!(back.upper_bound(&mu), state.upper_bound(&mu));
        }
    }

    #[test]
    fn solves_and_samples_round_trip() {
        let (model, _) = thermal_fixture();
        let dom = ParameterDomain::new(vec![0.5, 0.5], vec![1.0, 1.0]).unwrap();
        let train = tensor_grid(&dom, &[2, 2]).unwrap();
        let solves = TrainingSolves::compute(&model, &train).unwrap();

        let mut c = Container::new();
        c.put_solves("solves", &solves);
        c.put_samples("train", &train);
        let back = round_trip(&c);

        let s: TrainingSolves<f64> = back.get_solves("solves").unwrap();
        assert_eq!(s.len(), solves.len());
        for (a, b) in s.all().iter().zip(solves.all()) {
            assert_eq!(a, b);
        }
        assert_eq!(back.get_samples("train").unwrap().points(), train.points());
    }

    #[test]
    fn complex_artifacts_round_trip() {
        let cfg = HelmholtzConfig::new(12, 3).unwrap();
        let model = build_helmholtz_1d::<Complex<f64>>(&cfg).unwrap();
        let frame = OrthoFrame::new(&model, Some(&[3.0])).unwrap();
        let mut basis = ReducedBasis::empty(model.dofs());
        for mu in [[2.5], [3.5]] {
            let u = model.truth_solve(&mu).unwrap();
            basis
                .extend_pod(
                    &frame,
                    &[u],
                    vec![SnapshotLabel::Lagrange { mu: mu.to_vec() }],
                    1e-12,
                )
                .unwrap();
        }
        let rm = ReducedModel::project(&model, &basis).unwrap();

        let mut c = Container::new();
        c.put_basis("basis", &basis).unwrap();
        c.put_reduced("rm", &rm);
        let back = round_trip(&c);
        let basis2: ReducedBasis<Complex<f64>> = back.get_basis("basis").unwrap();
        assert_eq!(basis2.matrix(), basis.matrix());
        let rm2 = back.get_reduced("rm", &model).unwrap();
        assert_eq!(
            rm2.solve(&[2.8], rm2.dim()).unwrap(),
            rm.solve(&[2.8], rm.dim()).unwrap()
        );
    }

    #[test]
    fn files_round_trip_and_reject_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifacts.rbx");
        let mut c = Container::new();
        c.put_reals("x", &[1.0, 2.0]);
        c.put_text("tag", "experiment");
        c.save(&path).unwrap();
        let back = Container::load(&path).unwrap();
        assert_eq!(back, c);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(Container::load(&path), Err(Error::Container(_))));
    }
}
