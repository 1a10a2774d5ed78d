//! CSV and JSON readers for response sheets, keys and factor files.

use std::collections::HashSet;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{
    AnswerKey, Choice, Demographics, Factor, FactorSpec, Gender, Grade, ItemId, ItemKey, RawCell,
    RawRecord, RawResponseTable, ScoredMatrix,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Prescored when every answer cell is 0 or 1, raw otherwise.
    #[default]
    Auto,
    Raw,
    Prescored,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Raw(RawResponseTable),
    Scored(ScoredMatrix),
}

const FIXED_COLUMNS: [&str; 3] = ["student_id", "grade", "gender"];

fn parse_grade(s: &str) -> Option<Grade> {
    match s.trim().to_ascii_lowercase().as_str() {
        "3" => Some(Grade::G3),
        "4" => Some(Grade::G4),
        "mixed" => Some(Grade::Mixed),
        _ => None,
    }
}

fn parse_gender(s: &str) -> Option<Gender> {
    match s.trim().to_ascii_lowercase().as_str() {
        "f" => Some(Gender::F),
        "m" => Some(Gender::M),
        "na" => Some(Gender::Undisclosed),
        _ => None,
    }
}

pub(crate) fn grade_label(g: Grade) -> &'static str {
    match g {
        Grade::G3 => "3",
        Grade::G4 => "4",
        Grade::Mixed => "mixed",
    }
}

pub(crate) fn gender_label(g: Gender) -> &'static str {
    match g {
        Gender::F => "f",
        Gender::M => "m",
        Gender::Undisclosed => "na",
    }
}

fn parse_item_header(h: &str, line: usize) -> Result<ItemId> {
    let t = h.trim();
    t.strip_prefix('q')
        .or_else(|| t.strip_prefix('Q'))
        .and_then(|n| n.parse::<ItemId>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::parse(line, t, "item columns must be named q1, q2, ..."))
}

struct Row {
    line: usize,
    id: String,
    demo: Demographics,
    cells: Vec<String>,
}

/// Reads `student_id,grade,gender,q1,...,qJ`.
pub fn parse_responses<R: Read>(input: R, mode: ParseMode) -> Result<Parsed> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() < FIXED_COLUMNS.len() + 1 {
        return Err(Error::parse(1, "header", "expected student_id,grade,gender,q1,..."));
    }
    for (i, want) in FIXED_COLUMNS.iter().enumerate() {
        if !headers[i].eq_ignore_ascii_case(want) {
            return Err(Error::parse(1, &headers[i], format!("expected column `{want}`")));
        }
    }
    let item_ids = headers
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|h| parse_item_header(h, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut uniq = HashSet::new();
    if let Some(d) = item_ids.iter().find(|i| !uniq.insert(**i)) {
        return Err(Error::parse(1, format!("q{d}"), "duplicate item column"));
    }
    let width = headers.len();

    let mut rows = Vec::new();
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::parse(
                line,
                "row",
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(line, "student_id", "empty student id"));
        }
        if !ids.insert(id.clone()) {
            return Err(Error::parse(line, "student_id", format!("duplicate student id `{id}`")));
        }
        let grade = parse_grade(&rec[1])
            .ok_or_else(|| Error::parse(line, "grade", format!("`{}` is not one of 3, 4, mixed", &rec[1])))?;
        let gender = parse_gender(&rec[2])
            .ok_or_else(|| Error::parse(line, "gender", format!("`{}` is not one of f, m, na", &rec[2])))?;
        rows.push(Row {
            line,
            id,
            demo: Demographics { grade, gender },
            cells: rec.iter().skip(FIXED_COLUMNS.len()).map(str::to_string).collect(),
        });
    }

    let all_binary = || rows.iter().all(|r| r.cells.iter().all(|c| c == "0" || c == "1"));
    let prescored = match mode {
        ParseMode::Prescored => true,
        ParseMode::Raw => false,
        ParseMode::Auto => !rows.is_empty() && all_binary(),
    };

    if prescored {
        let mut data = Vec::with_capacity(rows.len() * item_ids.len());
        for r in &rows {
            for (c, cell) in r.cells.iter().enumerate() {
                let v = match cell.as_str() {
                    "0" => 0,
                    "1" => 1,
                    _ => {
                        return Err(Error::parse(
                            r.line,
                            format!("q{}", item_ids[c]),
                            format!("`{cell}` is not 0 or 1"),
                        ))
                    }
                };
                data.push(v);
            }
        }
        let m = ScoredMatrix::new(
            rows.iter().map(|r| r.id.clone()).collect(),
            rows.iter().map(|r| r.demo).collect(),
            item_ids,
            data,
        )?;
        return Ok(Parsed::Scored(m));
    }

    let records = rows
        .into_iter()
        .map(|r| {
            let answers = r
                .cells
                .iter()
                .enumerate()
                .map(|(c, cell)| {
                    RawCell::parse(cell).ok_or_else(|| {
                        Error::parse(
                            r.line,
                            format!("q{}", item_ids[c]),
                            format!("`{cell}` is not one of A, B, C, D, IDK, BLANK, MULTI"),
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RawRecord {
                student_id: r.id,
                demographics: r.demo,
                answers,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Parsed::Raw(RawResponseTable { item_ids, records }))
}

/// Reads `item,correct,profile_a,profile_b,profile_c,profile_d`.
pub fn parse_answer_key<R: Read>(input: R) -> Result<AnswerKey> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let expected = ["item", "correct", "profile_a", "profile_b", "profile_c", "profile_d"];
    let headers = rdr.headers()?.clone();
    if headers.len() != expected.len()
        || headers.iter().zip(expected).any(|(h, e)| !h.eq_ignore_ascii_case(e))
    {
        return Err(Error::parse(1, "header", format!("expected {}", expected.join(","))));
    }
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let item: ItemId = rec[0]
            .parse()
            .map_err(|_| Error::parse(line, "item", format!("`{}` is not an item number", &rec[0])))?;
        let correct = Choice::parse(&rec[1])
            .ok_or_else(|| Error::parse(line, "correct", format!("`{}` is not A-D", &rec[1])))?;
        let mut profiles = [0u8; 4];
        for (k, p) in profiles.iter_mut().enumerate() {
            *p = rec[2 + k]
                .parse()
                .map_err(|_| Error::parse(line, expected[2 + k], format!("`{}` is not 1-4", &rec[2 + k])))?;
        }
        if items.iter().any(|k: &ItemKey| k.item == item) {
            return Err(Error::parse(line, "item", format!("duplicate item {item}")));
        }
        items.push(ItemKey::new(item, correct, profiles)?);
    }
    Ok(AnswerKey { items })
}

/// Reads a JSON object mapping factor name to item ids; key order is kept.
pub fn parse_factor_spec<R: Read>(input: R) -> Result<FactorSpec> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_reader(input)?;
    let factors = map
        .into_iter()
        .map(|(name, v)| {
            let items: Vec<ItemId> = serde_json::from_value(v)
                .map_err(|e| Error::Config(format!("factor {name}: {e}")))?;
            Ok(Factor { name, items })
        })
        .collect::<Result<Vec<_>>>()?;
    FactorSpec::new(factors)
}

/// Writes raw sheets in the format read by [`parse_responses`].
pub fn write_raw<W: std::io::Write>(t: &RawResponseTable, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(t.item_ids.iter().map(|i| format!("q{i}")));
    wtr.write_record(&header)?;
    for rec in &t.records {
        let mut row = vec![
            rec.student_id.clone(),
            grade_label(rec.demographics.grade).to_string(),
            gender_label(rec.demographics.gender).to_string(),
        ];
        row.extend(rec.answers.iter().map(|c| match c {
            RawCell::Blank => String::new(),
            other => other.to_string(),
        }));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub(crate) fn write_scored<W: std::io::Write>(m: &ScoredMatrix, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(m.item_ids().iter().map(|i| format!("q{i}")));
    wtr.write_record(&header)?;
    for r in 0..m.n() {
        let d = m.demographics()[r];
        let mut rec = vec![
            m.student_ids()[r].clone(),
            grade_label(d.grade).to_string(),
            gender_label(d.gender).to_string(),
        ];
        rec.extend(m.row(r).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

impl FactorSpec {
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for f in &self.factors {
            map.insert(f.name.clone(), serde_json::json!(f.items));
        }
        serde_json::Value::Object(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, cctt_answer_key, cctt_factor_spec};

    fn header(j: usize) -> String {
        let mut h = "student_id,grade,gender".to_string();
        for i in 1..=j {
            h.push_str(&format!(",q{i}"));
        }
        h
    }

    #[test]
    fn two_raw_rows() {
        let row_a = vec!["B"; 25].join(",");
        let row_b = vec!["IDK"; 25].join(",");
        let text = format!("{}\ns1,3,f,{row_a}\ns2,mixed,na,{row_b}\n", header(25));
        match parse_responses(text.as_bytes(), ParseMode::Auto).unwrap() {
            Parsed::Raw(t) => {
                assert_eq!(t.n(), 2);
                assert_eq!(t.item_ids.len(), 25);
                assert_eq!(t.records[1].demographics.grade, Grade::Mixed);
                assert_eq!(t.records[1].answers[0], RawCell::Idk);
            }
            other => panic!("expected raw table, got {other:?}"),
        }
    }

    #[test]
    fn prescored_out_of_alphabet_names_cell() {
        let text = format!("{}\ns1,3,f,1,0,2\n", header(3));
        let err = parse_responses(text.as_bytes(), ParseMode::Prescored).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, "q3");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn empty_after_header() {
        let text = format!("{}\n", header(25));
        match parse_responses(text.as_bytes(), ParseMode::Auto).unwrap() {
            Parsed::Raw(t) => assert_eq!(t.n(), 0),
            other => panic!("{other:?}"),
        }
        match parse_responses(text.as_bytes(), ParseMode::Prescored).unwrap() {
            Parsed::Scored(m) => assert_eq!(m.n(), 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_and_duplicate_rows_rejected() {
        let ragged = format!("{}\ns1,3,f,1,0\n", header(3));
        assert!(matches!(
            parse_responses(ragged.as_bytes(), ParseMode::Auto),
            Err(Error::Parse { line: 2, .. })
        ));
        let dup = format!("{}\ns1,3,f,1,0,1\ns1,4,m,0,0,1\n", header(3));
        assert!(matches!(
            parse_responses(dup.as_bytes(), ParseMode::Auto),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn auto_detects_prescored_and_mode_overrides() {
        let text = format!("{}\ns1,3,f,1,0,1\ns2,4,m,0,0,1\n", header(3));
        assert!(matches!(parse_responses(text.as_bytes(), ParseMode::Auto).unwrap(), Parsed::Scored(_)));
        // as raw options "1"/"0" are out of alphabet
        assert!(parse_responses(text.as_bytes(), ParseMode::Raw).is_err());
    }

    #[test]
    fn scoring_is_idempotent_through_prescored_csv() {
        let key = cctt_answer_key();
        let spec = cctt_factor_spec();
        let cells = ["A", "B", "C", "D", "IDK", "MULTI", ""];
        let mut text = header(25);
        for s in 0..7 {
            let row: Vec<&str> = (0..25).map(|i| cells[(i * 3 + s) % cells.len()]).collect();
            text.push_str(&format!("\nst{s},{},m,{}", if s % 2 == 0 { 3 } else { 4 }, row.join(",")));
        }
        let Parsed::Raw(raw) = parse_responses(text.as_bytes(), ParseMode::Auto).unwrap() else {
            panic!("expected raw")
        };
        let scored = build_dataset(&raw, &key, &spec).unwrap();
        let mut buf = Vec::new();
        scored.write_csv(&mut buf).unwrap();
        let again = parse_responses(buf.as_slice(), ParseMode::Auto)
            .unwrap()
            .into_scored(&key, &spec)
            .unwrap();
        assert_eq!(again, scored);
    }

    #[test]
    fn key_and_factor_files() {
        let key_csv = "item,correct,profile_a,profile_b,profile_c,profile_d\n1,B,3,4,2,1\n2,D,2,3,1,4\n";
        let key = parse_answer_key(key_csv.as_bytes()).unwrap();
        assert_eq!(key.items.len(), 2);
        let bad = "item,correct,profile_a,profile_b,profile_c,profile_d\n1,A,3,4,2,1\n";
        assert!(parse_answer_key(bad.as_bytes()).is_err());

        let json = r#"{"zeta": [3, 4], "alpha": [1, 2]}"#;
        let spec = parse_factor_spec(json.as_bytes()).unwrap();
        assert_eq!(spec.factors[0].name, "zeta");
        assert_eq!(spec.items(), vec![3, 4, 1, 2]);
        let round = parse_factor_spec(spec.to_json().to_string().as_bytes()).unwrap();
        assert_eq!(round, spec);
    }
}
