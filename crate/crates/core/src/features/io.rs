//! CSV readers and writers for transactions, surveys and labels.
//!
//! Every file may start with `#` comment lines (provenance); readers skip
//! them.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{check_answers, Category, ConsumerId, TransactionRecord, NUM_CLASSES, SURVEY_QUESTIONS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurveyRecord {
    pub consumer_id: ConsumerId,
    pub answers: Vec<u8>,
    pub label: Option<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelRecord {
    pub consumer_id: ConsumerId,
    pub label: u8,
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn writer(path: &Path, provenance: Option<&str>) -> Result<csv::Writer<File>> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    if let Some(p) = provenance {
        writeln!(file, "# {p}").map_err(|e| Error::io(path, e))?;
    }
    Ok(csv::Writer::from_writer(file))
}

fn expect_header(path: &Path, found: &csv::StringRecord, expected: &[String]) -> Result<()> {
    if found.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Data(format!(
            "{}: header {:?} does not match expected {:?}",
            path.display(),
            found.iter().collect::<Vec<_>>(),
            expected
        )));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Data(format!("{} line {line}: bad {name} value {v:?}", path.display())))
}

fn parse_label(path: &Path, line: u64, v: &str) -> Result<Option<u8>> {
    if v.is_empty() {
        return Ok(None);
    }
    let l: u8 = parse_field(path, line, "frt_label", v)?;
    if usize::from(l) >= NUM_CLASSES {
        return Err(Error::Data(format!(
            "{} line {line}: label {l} outside 0..{NUM_CLASSES}",
            path.display()
        )));
    }
    Ok(Some(l))
}

fn transactions_header() -> Vec<String> {
    ["consumer_id", "category", "amount"].map(String::from).to_vec()
}

fn survey_header() -> Vec<String> {
    let mut h = vec!["consumer_id".to_string()];
    h.extend((1..=SURVEY_QUESTIONS).map(|q| format!("q{q}")));
    h.push("frt_label".into());
    h
}

pub fn read_transactions(path: &Path) -> Result<Vec<TransactionRecord>> {
    let mut rdr = reader(path)?;
    expect_header(path, rdr.headers()?, &transactions_header())?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = parse_field(path, line, "consumer_id", &rec[0])?;
        let category: Category = rec[1].parse()?;
        let amount: f64 = parse_field(path, line, "amount", &rec[2])?;
        out.push(TransactionRecord::new(id, category, amount)?);
    }
    Ok(out)
}

pub fn write_transactions(path: &Path, records: &[TransactionRecord], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(path, provenance)?;
    w.write_record(transactions_header())?;
    for r in records {
        w.write_record([
            r.consumer_id.to_string(),
            r.category.label().to_string(),
            format!("{:.2}", r.amount),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_surveys(path: &Path) -> Result<Vec<SurveyRecord>> {
    let mut rdr = reader(path)?;
    expect_header(path, rdr.headers()?, &survey_header())?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = parse_field(path, line, "consumer_id", &rec[0])?;
        let answers = (1..=SURVEY_QUESTIONS)
            .map(|q| parse_field::<u8>(path, line, "answer", &rec[q]))
            .collect::<Result<Vec<_>>>()?;
        check_answers(&answers).map_err(|e| Error::Data(format!("{} line {line}: {e}", path.display())))?;
        let label = parse_label(path, line, &rec[SURVEY_QUESTIONS + 1])?;
        out.push(SurveyRecord {
            consumer_id: id,
            answers,
            label,
        });
    }
    Ok(out)
}

pub fn write_surveys(path: &Path, records: &[SurveyRecord], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(path, provenance)?;
    w.write_record(survey_header())?;
    for r in records {
        let mut row = vec![r.consumer_id.to_string()];
        row.extend(r.answers.iter().map(u8::to_string));
        row.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Labels of consumers, including those without a survey.
pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let mut rdr = reader(path)?;
    expect_header(path, rdr.headers()?, &["consumer_id".into(), "frt_label".into()])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = parse_field(path, line, "consumer_id", &rec[0])?;
        let label = parse_label(path, line, &rec[1])?
            .ok_or_else(|| Error::Data(format!("{} line {line}: empty label", path.display())))?;
        out.push(LabelRecord { consumer_id: id, label });
    }
    Ok(out)
}

pub fn write_labels(path: &Path, records: &[LabelRecord], provenance: Option<&str>) -> Result<()> {
    let mut w = writer(path, provenance)?;
    w.write_record(["consumer_id", "frt_label"])?;
    for r in records {
        w.write_record([r.consumer_id.to_string(), r.label.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survey_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let recs = vec![
            SurveyRecord {
                consumer_id: 4,
                answers: (0..SURVEY_QUESTIONS).map(|i| (i % 7 + 1) as u8).collect(),
                label: Some(3),
            },
            SurveyRecord {
                consumer_id: 9,
                answers: vec![7; SURVEY_QUESTIONS],
                label: None,
            },
        ];
        write_surveys(&path, &recs, Some("seed=1")).unwrap();
        assert_eq!(read_surveys(&path).unwrap(), recs);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# seed=1\nconsumer_id,q1,q2,"));
    }

    #[test]
    fn transactions_reject_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "consumer_id,category,amount\n1,BASIC,3.5\n2,TRAVEL,1\n").unwrap();
        assert_eq!(read_transactions(&path).unwrap().len(), 2);
        std::fs::write(&path, "consumer_id,category,amount\n1,PETS,3.5\n").unwrap();
        assert!(read_transactions(&path).is_err());
        std::fs::write(&path, "consumer_id,category,amount\n1,BASIC,-3\n").unwrap();
        assert!(read_transactions(&path).is_err());
        std::fs::write(&path, "id,category,amount\n1,BASIC,3\n").unwrap();
        assert!(read_transactions(&path).is_err());
    }

    #[test]
    fn survey_answers_validated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut rec = SurveyRecord {
            consumer_id: 1,
            answers: vec![4; SURVEY_QUESTIONS],
            label: Some(1),
        };
        rec.answers[3] = 8;
        write_surveys(&path, &[rec], None).unwrap();
        assert!(matches!(read_surveys(&path), Err(Error::Data(_))));
    }
}
