//! Binary-attribute, binary-class datasets.
//!
//! A [`Dataset`] is an ordered list of [`Instance`]s over an
//! [`AttributeSchema`]. Every operation that changes a dataset returns a new
//! value; synthetic rows are always appended after the existing ones so that
//! outputs are deterministic.
//!
//! The CSV form has a header naming the attributes followed by a `class`
//! column and, optionally, a trailing `_prov` provenance column:
//!
//! ```text
//! x,y,class,_prov
//! 1,0,p,orig
//! 0,0,n,swap
//! ```

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::NodeStats;

/// Name of the class column in CSV files.
pub const CLASS_COLUMN: &str = "class";
/// Name of the optional provenance column in CSV files.
pub const PROVENANCE_COLUMN: &str = "_prov";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("non-binary value at line {line}")]
    NonBinaryValue { line: u64 },
    #[error("unknown class token {token:?} at line {line}")]
    UnknownClass { line: u64, token: String },
    #[error("unknown provenance token {token:?} at line {line}")]
    UnknownProvenance { line: u64, token: String },
    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow { line: u64, expected: usize, found: usize },
    #[error("instance {index} has an unspecified value; export requires allow_partial")]
    UnspecifiedValue { index: usize },
    #[error("instance index {index} out of range (dataset has {len} instances)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("attribute index {index} out of range (schema has {len} attributes)")]
    AttributeOutOfRange { index: usize, len: usize },
    #[error("invalid attribute name: {0}")]
    InvalidAttribute(String),
    #[error("instance has {found} values but the schema has {expected} attributes")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Class label. `P` is the positive class, `N` the negative one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "p")]
    P,
    #[serde(rename = "n")]
    N,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::P => Label::N,
            Label::N => Label::P,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Label::P => "p",
            Label::N => "n",
        }
    }

    pub fn parse(token: &str) -> Option<Label> {
        match token {
            "p" => Some(Label::P),
            "n" => Some(Label::N),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Where an instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    /// Label flipped by a swap; `original` is the label before the first swap.
    Swapped { original: Label },
    Synthetic,
}

impl Provenance {
    pub fn token(self) -> &'static str {
        match self {
            Provenance::Original => "orig",
            Provenance::Swapped { .. } => "swap",
            Provenance::Synthetic => "synth",
        }
    }
}

/// One row. `None` marks an attribute value not yet specified (only
/// synthetic instances carry those).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub values: Vec<Option<bool>>,
    pub label: Label,
    pub provenance: Provenance,
}

impl Instance {
    pub fn original(values: Vec<bool>, label: Label) -> Self {
        Instance {
            values: values.into_iter().map(Some).collect(),
            label,
            provenance: Provenance::Original,
        }
    }

    pub fn is_fully_specified(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn value(&self, attribute: usize) -> Option<bool> {
        self.values.get(attribute).copied().flatten()
    }

    /// True when the instance agrees with every `(attribute, value)` pair.
    /// Unspecified values never match.
    pub fn matches(&self, conditions: &[(usize, bool)]) -> bool {
        conditions
            .iter()
            .all(|&(attribute, value)| self.value(attribute) == Some(value))
    }
}

/// Ordered, unique attribute names. Every attribute is binary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct AttributeSchema {
    names: Vec<String>,
}

impl AttributeSchema {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, DatasetError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(DatasetError::InvalidAttribute("empty attribute name".into()));
            }
            if name == CLASS_COLUMN || name == PROVENANCE_COLUMN {
                return Err(DatasetError::InvalidAttribute(format!("reserved name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(DatasetError::InvalidAttribute(format!("duplicate name {name:?}")));
            }
        }
        Ok(AttributeSchema { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for AttributeSchema {
    type Error = DatasetError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        AttributeSchema::new(names)
    }
}

impl From<AttributeSchema> for Vec<String> {
    fn from(schema: AttributeSchema) -> Self {
        schema.names
    }
}

/// Options for [`Dataset::write_csv`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvExport {
    /// Append a trailing `_prov` column.
    pub include_provenance: bool,
    /// Write unspecified values as `?` instead of failing.
    pub allow_partial: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    schema: AttributeSchema,
    instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(schema: AttributeSchema, instances: Vec<Instance>) -> Result<Self, DatasetError> {
        for instance in &instances {
            if instance.values.len() != schema.len() {
                return Err(DatasetError::SchemaMismatch {
                    expected: schema.len(),
                    found: instance.values.len(),
                });
            }
        }
        Ok(Dataset { schema, instances })
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn into_instances(self) -> Vec<Instance> {
        self.instances
    }

    pub fn is_fully_specified(&self) -> bool {
        self.instances.iter().all(Instance::is_fully_specified)
    }

    /// Parses the CSV form. Every row gets provenance `Original` unless the
    /// file carries a `_prov` column.
    pub fn load_csv<R: Read>(source: R) -> Result<Dataset, DatasetError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(source);
        let mut records = reader.records();

        let header = match records.next() {
            Some(record) => record?,
            None => return Err(DatasetError::MalformedHeader("missing header row".into())),
        };
        let cells: Vec<&str> = header.iter().map(str::trim).collect();
        let with_provenance = cells.last() == Some(&PROVENANCE_COLUMN);
        let attribute_end = cells.len() - usize::from(with_provenance);
        if attribute_end == 0 || cells[attribute_end - 1] != CLASS_COLUMN {
            return Err(DatasetError::MalformedHeader(format!(
                "last column must be {CLASS_COLUMN:?}"
            )));
        }
        let schema = AttributeSchema::new(cells[..attribute_end - 1].iter().copied())
            .map_err(|e| DatasetError::MalformedHeader(e.to_string()))?;
        let width = cells.len();

        let mut instances = Vec::new();
        for record in records {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != width {
                return Err(DatasetError::RaggedRow {
                    line,
                    expected: width,
                    found: record.len(),
                });
            }
            let mut values = Vec::with_capacity(schema.len());
            for cell in record.iter().take(schema.len()) {
                values.push(match cell.trim() {
                    "0" => Some(false),
                    "1" => Some(true),
                    _ => return Err(DatasetError::NonBinaryValue { line }),
                });
            }
            let token = record[schema.len()].trim();
            let label = Label::parse(token).ok_or_else(|| DatasetError::UnknownClass {
                line,
                token: token.to_string(),
            })?;
            let provenance = if with_provenance {
                match record[width - 1].trim() {
                    "orig" => Provenance::Original,
                    "swap" => Provenance::Swapped { original: label.flipped() },
                    "synth" => Provenance::Synthetic,
                    other => {
                        return Err(DatasetError::UnknownProvenance {
                            line,
                            token: other.to_string(),
                        })
                    }
                }
            } else {
                Provenance::Original
            };
            instances.push(Instance { values, label, provenance });
        }
        Ok(Dataset { schema, instances })
    }

    pub fn write_csv<W: Write>(&self, sink: W, options: CsvExport) -> Result<(), DatasetError> {
        if !options.allow_partial {
            if let Some(index) = self.instances.iter().position(|i| !i.is_fully_specified()) {
                return Err(DatasetError::UnspecifiedValue { index });
            }
        }
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);

        let mut header: Vec<&str> = self.schema.names().iter().map(String::as_str).collect();
        header.push(CLASS_COLUMN);
        if options.include_provenance {
            header.push(PROVENANCE_COLUMN);
        }
        writer.write_record(&header)?;

        let mut row: Vec<&str> = Vec::with_capacity(header.len());
        for instance in &self.instances {
            row.clear();
            row.extend(instance.values.iter().map(|v| match v {
                Some(false) => "0",
                Some(true) => "1",
                None => "?",
            }));
            row.push(instance.label.token());
            if options.include_provenance {
                row.push(instance.provenance.token());
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Convenience wrapper around [`Dataset::write_csv`] returning the bytes.
    pub fn to_csv_bytes(&self, options: CsvExport) -> Result<Vec<u8>, DatasetError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, options)?;
        Ok(buf)
    }

    /// Flips the label of every selected instance. Original rows become
    /// `Swapped`, keeping the label they had before their first swap;
    /// synthetic rows stay synthetic.
    pub fn swap_class(&self, selector: &[usize]) -> Result<Dataset, DatasetError> {
        let mut instances = self.instances.clone();
        for &index in selector {
            let len = instances.len();
            let instance = instances
                .get_mut(index)
                .ok_or(DatasetError::IndexOutOfRange { index, len })?;
            instance.provenance = match instance.provenance {
                Provenance::Original => Provenance::Swapped { original: instance.label },
                other => other,
            };
            instance.label = instance.label.flipped();
        }
        Ok(Dataset { schema: self.schema.clone(), instances })
    }

    /// Appends `count_p` positive and `count_n` negative synthetic instances
    /// whose values are fixed by `fixed` and unspecified elsewhere.
    pub fn add_partial_instances(
        &self,
        count_p: u64,
        count_n: u64,
        fixed: &[(usize, bool)],
    ) -> Result<Dataset, DatasetError> {
        let mut template = vec![None; self.schema.len()];
        for &(attribute, value) in fixed {
            let slot = template.get_mut(attribute).ok_or(DatasetError::AttributeOutOfRange {
                index: attribute,
                len: self.schema.len(),
            })?;
            *slot = Some(value);
        }
        let mut instances = self.instances.clone();
        let total = usize::try_from(count_p + count_n).expect("instance count fits in memory");
        instances.reserve(total);
        for (label, count) in [(Label::P, count_p), (Label::N, count_n)] {
            for _ in 0..count {
                instances.push(Instance {
                    values: template.clone(),
                    label,
                    provenance: Provenance::Synthetic,
                });
            }
        }
        Ok(Dataset { schema: self.schema.clone(), instances })
    }

    pub fn class_counts<F>(&self, filter: F) -> NodeStats
    where
        F: Fn(&Instance) -> bool,
    {
        self.instances
            .iter()
            .filter(|i| filter(i))
            .fold(NodeStats::default(), |acc, i| acc + NodeStats::of(i.label))
    }

    pub fn provenance_counts(&self) -> ProvenanceCounts {
        let mut counts = ProvenanceCounts::default();
        for instance in &self.instances {
            match instance.provenance {
                Provenance::Original => counts.original += 1,
                Provenance::Swapped { .. } => counts.swapped += 1,
                Provenance::Synthetic => counts.synthetic += 1,
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub original: usize,
    pub swapped: usize,
    pub synthetic: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<Dataset, DatasetError> {
        Dataset::load_csv(text.as_bytes())
    }

    fn subset(p: usize, n: usize) -> Dataset {
        let schema = AttributeSchema::new(["a", "b"]).unwrap();
        let mut rows = Vec::new();
        rows.extend((0..p).map(|_| Instance::original(vec![true, false], Label::P)));
        rows.extend((0..n).map(|_| Instance::original(vec![false, true], Label::N)));
        Dataset::new(schema, rows).unwrap()
    }

    #[test]
    fn loads_single_row() {
        let ds = load("x,y,class\n1,0,p\n").unwrap();
        assert_eq!(ds.schema().names(), ["x", "y"]);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.instances()[0].values, vec![Some(true), Some(false)]);
        assert_eq!(ds.instances()[0].label, Label::P);
        assert_eq!(ds.instances()[0].provenance, Provenance::Original);
    }

    #[test]
    fn empty_body_keeps_schema() {
        let ds = load("x,y,class\n").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.schema().len(), 2);
    }

    #[test]
    fn rejects_non_binary_cell_with_line_number() {
        let err = load("x,y,class\n1,2,p\n").unwrap_err();
        assert_eq!(err.to_string(), "non-binary value at line 2");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(load(""), Err(DatasetError::MalformedHeader(_))));
        assert!(matches!(load("x,y\n1,0\n"), Err(DatasetError::MalformedHeader(_))));
        assert!(matches!(load("x,x,class\n"), Err(DatasetError::MalformedHeader(_))));
        assert!(matches!(
            load("x,class\n1,q\n"),
            Err(DatasetError::UnknownClass { line: 2, .. })
        ));
        assert!(matches!(
            load("x,y,class\n1,0,p\n1,p\n"),
            Err(DatasetError::RaggedRow { line: 3, expected: 3, found: 2 })
        ));
    }

    #[test]
    fn single_instance_writes_two_lines() {
        let ds = load("x,y,class\n1,0,p\n").unwrap();
        let out = ds.to_csv_bytes(CsvExport::default()).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "x,y,class\n1,0,p\n");
    }

    #[test]
    fn provenance_column_round_trips() {
        let ds = subset(2, 1).swap_class(&[0]).unwrap();
        let ds = ds.add_partial_instances(0, 1, &[(0, true), (1, true)]).unwrap();
        let opts = CsvExport { include_provenance: true, allow_partial: false };
        let text = String::from_utf8(ds.to_csv_bytes(opts).unwrap()).unwrap();
        assert_eq!(text, "a,b,class,_prov\n1,0,n,swap\n1,0,p,orig\n0,1,n,orig\n1,1,n,synth\n");
        let back = load(&text).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn partial_export_needs_permission() {
        let ds = subset(1, 0).add_partial_instances(1, 0, &[(0, true)]).unwrap();
        assert!(matches!(
            ds.to_csv_bytes(CsvExport::default()),
            Err(DatasetError::UnspecifiedValue { index: 1 })
        ));
        let opts = CsvExport { allow_partial: true, ..CsvExport::default() };
        let text = String::from_utf8(ds.to_csv_bytes(opts).unwrap()).unwrap();
        assert_eq!(text.lines().last(), Some("1,?,p"));
    }

    #[test]
    fn swapping_nine_positives() {
        let ds = subset(58, 37);
        let swapped = ds.swap_class(&(0..9).collect::<Vec<_>>()).unwrap();
        assert_eq!(swapped.class_counts(|_| true), NodeStats::new(49, 46));
        assert_eq!(
            swapped.instances()[0].provenance,
            Provenance::Swapped { original: Label::P }
        );
    }

    #[test]
    fn swapping_five_negatives() {
        let ds = subset(120, 50);
        let swapped = ds.swap_class(&(120..125).collect::<Vec<_>>()).unwrap();
        assert_eq!(swapped.class_counts(|_| true), NodeStats::new(125, 45));
    }

    #[test]
    fn empty_swap_is_identity() {
        let ds = subset(3, 4);
        assert_eq!(ds.swap_class(&[]).unwrap(), ds);
        assert!(matches!(
            ds.swap_class(&[7]),
            Err(DatasetError::IndexOutOfRange { index: 7, len: 7 })
        ));
    }

    #[test]
    fn adds_partial_batches() {
        let ds = subset(58, 37);
        let grown = ds.add_partial_instances(67, 28, &[(0, true)]).unwrap();
        assert_eq!(grown.len(), 95 + 95);
        assert!(grown.instances()[95..]
            .iter()
            .all(|i| i.values == vec![Some(true), None] && i.provenance == Provenance::Synthetic));
        assert_eq!(grown.class_counts(|_| true), NodeStats::new(58 + 67, 37 + 28));

        assert_eq!(ds.add_partial_instances(0, 0, &[]).unwrap(), ds);
        let only_n = ds.add_partial_instances(0, 100, &[]).unwrap();
        assert!(only_n.instances()[95..].iter().all(|i| i.label == Label::N));
        assert!(ds.add_partial_instances(1, 0, &[(5, true)]).is_err());
    }

    #[test]
    fn class_counts_by_filter() {
        let ds = load("a,b,class\n1,0,p\n1,1,n\n0,1,p\n1,1,p\n").unwrap();
        // rows with a=1: (p), (n), (p) -> 2p 1n
        assert_eq!(ds.class_counts(|i| i.value(0) == Some(true)), NodeStats::new(2, 1));
        assert_eq!(ds.class_counts(|_| false), NodeStats::new(0, 0));
        assert_eq!(ds.class_counts(|_| true), NodeStats::new(3, 1));
    }
}
