//! CSV layouts for problem data: a header row, one sample per row, label
//! column last.
//!
//! * group fused lasso: `f0,...,f{d-1},segment`, one row per time point
//! * multiclass SVM: `f0,...,f{d-1},label`
//! * chain SVM: `seq,f0,...,f{d-1},label`, one row per position, rows of a
//!   sequence contiguous

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problems::gfl::GflProblem;
use crate::problems::svm::{LabelKind, StructSvm, SvmExample};

fn header(prefix: &[&str], d: usize, last: &str) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..d).map(|k| format!("f{k}")))
        .chain(std::iter::once(last.to_string()))
        .collect()
}

pub fn write_gfl_csv<W: Write>(p: &GflProblem, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let y = p.observations();
    w.write_record(header(&[], y.nrows(), "segment"))?;
    for t in 0..y.ncols() {
        let mut row: Vec<String> = y.column(t).iter().map(|v| format!("{v:e}")).collect();
        row.push(p.segments.as_ref().map(|s| s[t].to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn parse(field: &str, row: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Data(format!("row {row}: cannot parse {field:?}")))
}

fn parse_label(field: &str, row: usize) -> Result<usize> {
    field.trim().parse().map_err(|_| Error::Data(format!("row {row}: bad label {field:?}")))
}

/// Reads an observation matrix; the segment column may be empty.
pub fn read_gfl_csv<R: Read>(input: R, lambda: f64) -> Result<GflProblem> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width < 2 {
        return Err(Error::Data("need at least one feature and the segment column".into()));
    }
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let feats = (0..width - 1).map(|k| parse(&rec[k], row)).collect::<Result<Vec<_>>>()?;
        cols.push(feats);
        let last = rec[width - 1].trim();
        labels.push(if last.is_empty() { None } else { Some(parse_label(last, row)?) });
    }
    let d = width - 1;
    let y = DMatrix::from_fn(d, cols.len(), |r, t| cols[t][r]);
    let mut p = GflProblem::new(y, lambda)?;
    p.segments = labels.into_iter().collect();
    Ok(p)
}

pub fn write_svm_csv<W: Write>(p: &StructSvm, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = p.feature_dim();
    let chain = matches!(p.kind(), LabelKind::Chain { .. });
    w.write_record(header(if chain { &["seq"] } else { &[] }, d, "label"))?;
    for (i, ex) in p.examples().iter().enumerate() {
        for (x, y) in ex.features.iter().zip(&ex.label) {
            let mut row = Vec::with_capacity(d + 2);
            if chain {
                row.push(i.to_string());
            }
            row.extend(x.iter().map(|v| format!("{v:e}")));
            row.push(y.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads multiclass data; the class count is one more than the largest label
/// unless given.
pub fn read_svm_multiclass_csv<R: Read>(input: R, classes: Option<usize>, lambda: f64) -> Result<StructSvm> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width < 2 {
        return Err(Error::Data("need at least one feature and the label column".into()));
    }
    let mut examples = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let x = (0..width - 1).map(|k| parse(&rec[k], row)).collect::<Result<Vec<_>>>()?;
        examples.push(SvmExample { features: vec![x], label: vec![parse_label(&rec[width - 1], row)?] });
    }
    let k = classes.unwrap_or_else(|| examples.iter().map(|e| e.label[0] + 1).max().unwrap_or(0));
    StructSvm::new(examples, LabelKind::Multiclass { classes: k }, lambda)
}

/// Reads chain data grouped by the `seq` column.
pub fn read_svm_chain_csv<R: Read>(input: R, states: Option<usize>, lambda: f64) -> Result<StructSvm> {
    let mut r = csv::Reader::from_reader(input);
    let width = r.headers()?.len();
    if width < 3 {
        return Err(Error::Data("need seq, at least one feature and the label column".into()));
    }
    let mut examples: Vec<SvmExample> = Vec::new();
    let mut current: Option<String> = None;
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let seq = rec[0].trim().to_string();
        let x = (1..width - 1).map(|k| parse(&rec[k], row)).collect::<Result<Vec<_>>>()?;
        let y = parse_label(&rec[width - 1], row)?;
        if current.as_deref() != Some(seq.as_str()) {
            examples.push(SvmExample { features: Vec::new(), label: Vec::new() });
            current = Some(seq);
        }
        let ex = examples.last_mut().unwrap();
        ex.features.push(x);
        ex.label.push(y);
    }
    let k = states.unwrap_or_else(|| examples.iter().flat_map(|e| e.label.iter()).map(|y| y + 1).max().unwrap_or(0));
    StructSvm::new(examples, LabelKind::Chain { states: k }, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::gfl::gfl_synthetic;
    use crate::problems::svm::{svm_synthetic_chain, svm_synthetic_multiclass};

    #[test]
    fn gfl_round_trip() {
        let p = gfl_synthetic(3, 12, 3, 0.2, 0.1, 5).unwrap();
        let mut buf = Vec::new();
        write_gfl_csv(&p, &mut buf).unwrap();
        let q = read_gfl_csv(buf.as_slice(), 0.1).unwrap();
        assert_eq!(p.observations(), q.observations());
        assert_eq!(p.segments, q.segments);
    }

    #[test]
    fn svm_round_trips() {
        let p = svm_synthetic_multiclass(7, 3, 4, 0.1, 1).unwrap();
        let mut buf = Vec::new();
        write_svm_csv(&p, &mut buf).unwrap();
        let q = read_svm_multiclass_csv(buf.as_slice(), Some(3), 0.1).unwrap();
        assert_eq!(p.examples(), q.examples());
        let c = svm_synthetic_chain(4, 3, 2, 3, 0.2, 0.1, 2).unwrap();
        let mut buf = Vec::new();
        write_svm_csv(&c, &mut buf).unwrap();
        let q = read_svm_chain_csv(buf.as_slice(), Some(2), 0.1).unwrap();
        assert_eq!(c.examples(), q.examples());
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let bad = "f0,label\nabc,1\n";
        assert!(matches!(read_svm_multiclass_csv(bad.as_bytes(), None, 0.1), Err(Error::Data(_))));
    }
}
