//! Response sheets, answer keys, factor structure and the scored 0/1 matrix
//! every analysis consumes.

mod builtin;
mod io;

pub use builtin::{cctt_answer_key, cctt_factor_spec, cctt_layout_blocks};
pub use io::{parse_answer_key, parse_factor_spec, parse_responses, write_raw, ParseMode, Parsed};

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Question number, 1-based as printed on the test sheet.
pub type ItemId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grade {
    G3,
    G4,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    F,
    M,
    Undisclosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub grade: Grade,
    pub gender: Gender,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    C,
    D,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::C, Choice::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Choice> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Some(Choice::A),
            "B" => Some(Choice::B),
            "C" => Some(Choice::C),
            "D" => Some(Choice::D),
            _ => None,
        }
    }
}

/// One answer cell on a raw response sheet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RawCell {
    Choice(Choice),
    Idk,
    Blank,
    Multi,
}

impl RawCell {
    pub fn parse(s: &str) -> Option<RawCell> {
        let t = s.trim();
        if t.is_empty() {
            return Some(RawCell::Blank);
        }
        if let Some(c) = Choice::parse(t) {
            return Some(RawCell::Choice(c));
        }
        match t.to_ascii_uppercase().as_str() {
            "IDK" => Some(RawCell::Idk),
            "BLANK" => Some(RawCell::Blank),
            "MULTI" => Some(RawCell::Multi),
            _ => None,
        }
    }
}

impl fmt::Display for RawCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawCell::Choice(c) => write!(f, "{c:?}"),
            RawCell::Idk => f.write_str("IDK"),
            RawCell::Blank => f.write_str("BLANK"),
            RawCell::Multi => f.write_str("MULTI"),
        }
    }
}

/// 1 iff the cell is exactly the keyed option. "I don't know", blank and
/// multiple marks all score 0.
pub fn score_cell(cell: RawCell, correct: Choice) -> u8 {
    match cell {
        RawCell::Choice(c) if c == correct => 1,
        _ => 0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub student_id: String,
    pub demographics: Demographics,
    pub answers: Vec<RawCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawResponseTable {
    pub item_ids: Vec<ItemId>,
    pub records: Vec<RawRecord>,
}

impl RawResponseTable {
    pub fn n(&self) -> usize {
        self.records.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemKey {
    pub item: ItemId,
    pub correct: Choice,
    /// Error profile (1..=4) of options A, B, C, D; profile 4 is the correct answer.
    pub profiles: [u8; 4],
}

impl ItemKey {
    pub fn new(item: ItemId, correct: Choice, profiles: [u8; 4]) -> Result<Self> {
        let mut seen = [false; 4];
        for &p in &profiles {
            if !(1..=4).contains(&p) || seen[(p - 1) as usize] {
                return Err(Error::Config(format!(
                    "item {item}: profiles {profiles:?} are not a permutation of 1..4"
                )));
            }
            seen[(p - 1) as usize] = true;
        }
        if profiles[correct.index()] != 4 {
            return Err(Error::Config(format!(
                "item {item}: keyed option {correct:?} does not carry profile 4"
            )));
        }
        Ok(ItemKey {
            item,
            correct,
            profiles,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub items: Vec<ItemKey>,
}

impl AnswerKey {
    pub fn get(&self, item: ItemId) -> Option<&ItemKey> {
        self.items.iter().find(|k| k.item == item)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub items: Vec<ItemId>,
}

/// Ordered partition of items into latent-factor blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub factors: Vec<Factor>,
}

impl FactorSpec {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &factors {
            if f.items.is_empty() {
                return Err(Error::Config(format!("factor {} has no items", f.name)));
            }
            for &it in &f.items {
                if !seen.insert(it) {
                    return Err(Error::Config(format!("item {it} appears in more than one factor")));
                }
            }
        }
        Ok(FactorSpec { factors })
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    /// All items in factor order.
    pub fn items(&self) -> Vec<ItemId> {
        self.factors.iter().flat_map(|f| f.items.iter().copied()).collect()
    }

    pub fn factor_of(&self, item: ItemId) -> Option<usize> {
        self.factors.iter().position(|f| f.items.contains(&item))
    }

    /// Checks that the factors partition exactly `items`.
    pub fn check_partition(&self, items: &[ItemId]) -> Result<()> {
        let mine: HashSet<ItemId> = self.items().into_iter().collect();
        let theirs: HashSet<ItemId> = items.iter().copied().collect();
        let mut orphan: Vec<_> = theirs.difference(&mine).copied().collect();
        let mut unknown: Vec<_> = mine.difference(&theirs).copied().collect();
        orphan.sort_unstable();
        unknown.sort_unstable();
        if !orphan.is_empty() || !unknown.is_empty() {
            return Err(Error::Config(format!(
                "factor spec does not partition the item set (unassigned items {orphan:?}, unknown items {unknown:?})"
            )));
        }
        Ok(())
    }

    /// Removes `items`; factors left empty are dropped.
    pub fn without(&self, items: &[ItemId]) -> FactorSpec {
        FactorSpec {
            factors: self
                .factors
                .iter()
                .map(|f| Factor {
                    name: f.name.clone(),
                    items: f.items.iter().copied().filter(|i| !items.contains(i)).collect(),
                })
                .filter(|f| !f.items.is_empty())
                .collect(),
        }
    }
}

/// N×J binary response matrix after scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMatrix {
    student_ids: Vec<String>,
    demographics: Vec<Demographics>,
    item_ids: Vec<ItemId>,
    /// Row-major, one row per respondent.
    data: Vec<u8>,
    factors: Option<FactorSpec>,
}

impl ScoredMatrix {
    pub fn new(
        student_ids: Vec<String>,
        demographics: Vec<Demographics>,
        item_ids: Vec<ItemId>,
        data: Vec<u8>,
    ) -> Result<Self> {
        let n = student_ids.len();
        if demographics.len() != n || data.len() != n * item_ids.len() {
            return Err(Error::InvalidArgument(
                "scored matrix dimensions are inconsistent".into(),
            ));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("non-binary entry {bad}")));
        }
        let mut ids = HashSet::new();
        if let Some(dup) = student_ids.iter().find(|s| !ids.insert(s.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate student id {dup}")));
        }
        Ok(ScoredMatrix {
            student_ids,
            demographics,
            item_ids,
            data,
            factors: None,
        })
    }

    /// Builds a matrix from rows of 0/1 with anonymous respondents of
    /// undisclosed demographics. Mostly useful for tests and simulation.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let j = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != j) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let demo = Demographics {
            grade: Grade::Mixed,
            gender: Gender::Undisclosed,
        };
        ScoredMatrix::new(
            (0..rows.len()).map(|i| format!("s{}", i + 1)).collect(),
            vec![demo; rows.len()],
            (1..=j as ItemId).collect(),
            rows.concat(),
        )
    }

    pub fn with_factors(mut self, spec: FactorSpec) -> Result<Self> {
        spec.check_partition(&self.item_ids)?;
        self.factors = Some(spec);
        Ok(self)
    }

    pub fn with_demographics(mut self, demographics: Vec<Demographics>) -> Result<Self> {
        if demographics.len() != self.n() {
            return Err(Error::InvalidArgument("demographics length mismatch".into()));
        }
        self.demographics = demographics;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.student_ids.len()
    }

    pub fn j(&self) -> usize {
        self.item_ids.len()
    }

    pub fn item_ids(&self) -> &[ItemId] {
        &self.item_ids
    }

    pub fn student_ids(&self) -> &[String] {
        &self.student_ids
    }

    pub fn demographics(&self) -> &[Demographics] {
        &self.demographics
    }

    pub fn factors(&self) -> Option<&FactorSpec> {
        self.factors.as_ref()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.j() + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        let j = self.j();
        &self.data[row * j..(row + 1) * j]
    }

    pub fn column_index(&self, item: ItemId) -> Option<usize> {
        self.item_ids.iter().position(|&i| i == item)
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n()).map(|r| self.get(r, col) as f64).collect()
    }

    /// Number correct per respondent.
    pub fn totals(&self) -> Vec<f64> {
        (0..self.n())
            .map(|r| self.row(r).iter().map(|&v| v as u32).sum::<u32>() as f64)
            .collect()
    }

    /// Keeps rows satisfying `keep`. Fails when fewer than two remain.
    pub fn subset<F>(&self, keep: F) -> Result<ScoredMatrix>
    where
        F: Fn(&Demographics) -> bool,
    {
        let rows: Vec<usize> = (0..self.n()).filter(|&r| keep(&self.demographics[r])).collect();
        if rows.len() < 2 {
            return Err(Error::SubsetTooSmall { n: rows.len() });
        }
        Ok(self.take_rows(&rows))
    }

    /// Rows by index, in the given order (duplicates allowed, ids suffixed).
    pub fn take_rows(&self, rows: &[usize]) -> ScoredMatrix {
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let student_ids = rows
            .iter()
            .map(|&r| {
                let c = seen.entry(r).or_insert(0);
                *c += 1;
                if *c == 1 {
                    self.student_ids[r].clone()
                } else {
                    format!("{}#{}", self.student_ids[r], c)
                }
            })
            .collect();
        ScoredMatrix {
            student_ids,
            demographics: rows.iter().map(|&r| self.demographics[r]).collect(),
            item_ids: self.item_ids.clone(),
            data: rows.iter().flat_map(|&r| self.row(r).iter().copied()).collect(),
            factors: self.factors.clone(),
        }
    }

    /// Restricts to `items` (in the given order). The factor spec, if any, is
    /// reduced accordingly.
    pub fn select_items(&self, items: &[ItemId]) -> Result<ScoredMatrix> {
        let cols = items
            .iter()
            .map(|&it| {
                self.column_index(it)
                    .ok_or_else(|| Error::Config(format!("item {it} not in data")))
            })
            .collect::<Result<Vec<_>>>()?;
        let data = (0..self.n())
            .flat_map(|r| cols.iter().map(move |&c| (r, c)))
            .map(|(r, c)| self.get(r, c))
            .collect();
        let removed: Vec<ItemId> = self
            .item_ids
            .iter()
            .copied()
            .filter(|i| !items.contains(i))
            .collect();
        Ok(ScoredMatrix {
            student_ids: self.student_ids.clone(),
            demographics: self.demographics.clone(),
            item_ids: items.to_vec(),
            data,
            factors: self.factors.as_ref().map(|f| f.without(&removed)),
        })
    }

    /// Writes the matrix as a prescored responses CSV.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        io::write_scored(self, w)
    }
}

/// Standard subset filters. Mixed-grade classrooms only enter `All`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetName {
    All,
    G3,
    G4,
}

impl SubsetName {
    pub fn parse(s: &str) -> Option<SubsetName> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" | "full" => Some(SubsetName::All),
            "g3" | "grade3" => Some(SubsetName::G3),
            "g4" | "grade4" => Some(SubsetName::G4),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SubsetName::All => "all",
            SubsetName::G3 => "g3",
            SubsetName::G4 => "g4",
        }
    }

    pub fn keeps(self, d: &Demographics) -> bool {
        match self {
            SubsetName::All => true,
            SubsetName::G3 => d.grade == Grade::G3,
            SubsetName::G4 => d.grade == Grade::G4,
        }
    }

    pub fn apply(self, ds: &ScoredMatrix) -> Result<ScoredMatrix> {
        ds.subset(|d| self.keeps(d))
    }
}

/// Applies the scoring rule to every cell and attaches the factor structure.
pub fn build_dataset(raw: &RawResponseTable, key: &AnswerKey, spec: &FactorSpec) -> Result<ScoredMatrix> {
    let mut missing = Vec::new();
    let correct: Vec<Choice> = raw
        .item_ids
        .iter()
        .map(|&it| match key.get(it) {
            Some(k) => k.correct,
            None => {
                missing.push(it);
                Choice::A
            }
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::Config(format!("answer key has no entry for items {missing:?}")));
    }
    spec.check_partition(&raw.item_ids)?;
    let data = raw
        .records
        .iter()
        .flat_map(|rec| rec.answers.iter().zip(&correct).map(|(&c, &k)| score_cell(c, k)))
        .collect();
    ScoredMatrix::new(
        raw.records.iter().map(|r| r.student_id.clone()).collect(),
        raw.records.iter().map(|r| r.demographics).collect(),
        raw.item_ids.clone(),
        data,
    )?
    .with_factors(spec.clone())
}

impl Parsed {
    /// Scores raw sheets; prescored input passes through unchanged apart
    /// from attaching `spec`.
    pub fn into_scored(self, key: &AnswerKey, spec: &FactorSpec) -> Result<ScoredMatrix> {
        match self {
            Parsed::Raw(raw) => build_dataset(&raw, key, spec),
            Parsed::Scored(m) => m.with_factors(spec.clone()),
        }
    }
}

/// Per-item tally of chosen error profiles plus the non-answer categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCounts {
    pub item: ItemId,
    /// Counts for profiles 1..=4 (index 0 is profile 1).
    pub profiles: [usize; 4],
    pub idk: usize,
    pub blank: usize,
    pub multi: usize,
}

impl ProfileCounts {
    pub fn total(&self) -> usize {
        self.profiles.iter().sum::<usize>() + self.idk + self.blank + self.multi
    }
}

pub fn profile_distribution(raw: &RawResponseTable, key: &AnswerKey) -> Result<Vec<ProfileCounts>> {
    raw.item_ids
        .iter()
        .enumerate()
        .map(|(col, &item)| {
            let k = key
                .get(item)
                .ok_or_else(|| Error::Config(format!("answer key has no entry for item {item}")))?;
            let mut pc = ProfileCounts {
                item,
                profiles: [0; 4],
                idk: 0,
                blank: 0,
                multi: 0,
            };
            for rec in &raw.records {
                match rec.answers[col] {
                    RawCell::Choice(c) => pc.profiles[(k.profiles[c.index()] - 1) as usize] += 1,
                    RawCell::Idk => pc.idk += 1,
                    RawCell::Blank => pc.blank += 1,
                    RawCell::Multi => pc.multi += 1,
                }
            }
            Ok(pc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo(grade: Grade) -> Demographics {
        Demographics {
            grade,
            gender: Gender::F,
        }
    }

    fn raw_table(cells: &[&[RawCell]], grades: &[Grade]) -> RawResponseTable {
        RawResponseTable {
            item_ids: (1..=cells[0].len() as ItemId).collect(),
            records: cells
                .iter()
                .zip(grades)
                .enumerate()
                .map(|(i, (c, &g))| RawRecord {
                    student_id: format!("id{i}"),
                    demographics: demo(g),
                    answers: c.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn scoring_rule() {
        assert_eq!(score_cell(RawCell::Choice(Choice::B), Choice::B), 1);
        assert_eq!(score_cell(RawCell::Choice(Choice::A), Choice::B), 0);
        assert_eq!(score_cell(RawCell::Idk, Choice::B), 0);
        assert_eq!(score_cell(RawCell::Multi, Choice::A), 0);
        assert_eq!(score_cell(RawCell::Blank, Choice::C), 0);
    }

    #[test]
    fn keyed_answers_score_all_ones_and_blanks_all_zeros() {
        let key = cctt_answer_key();
        let spec = cctt_factor_spec();
        let keyed: Vec<RawCell> = key.items.iter().map(|k| RawCell::Choice(k.correct)).collect();
        let blank = vec![RawCell::Blank; 25];
        let raw = raw_table(&[&keyed, &keyed, &blank], &[Grade::G3, Grade::G4, Grade::G3]);
        let m = build_dataset(&raw, &key, &spec).unwrap();
        assert_eq!(m.n(), 3);
        assert!(m.row(0).iter().all(|&v| v == 1));
        assert!(m.row(1).iter().all(|&v| v == 1));
        assert!(m.row(2).iter().all(|&v| v == 0));
        assert_eq!(m.factors(), Some(&spec));
    }

    #[test]
    fn key_mismatch_is_config_error() {
        let mut key = cctt_answer_key();
        key.items.pop();
        let raw = raw_table(&[&[RawCell::Blank; 25]], &[Grade::G3]);
        assert!(matches!(
            build_dataset(&raw, &key, &cctt_factor_spec()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn item_key_invariants() {
        assert!(ItemKey::new(1, Choice::B, [3, 4, 2, 1]).is_ok());
        assert!(ItemKey::new(1, Choice::A, [3, 4, 2, 1]).is_err());
        assert!(ItemKey::new(1, Choice::B, [4, 4, 2, 1]).is_err());
    }

    #[test]
    fn factor_spec_partition_checks() {
        let spec = cctt_factor_spec();
        assert!(spec.check_partition(&(1..=25).collect::<Vec<_>>()).is_ok());
        assert!(spec.check_partition(&(1..=24).collect::<Vec<_>>()).is_err());
        let dup = FactorSpec::new(vec![
            Factor { name: "a".into(), items: vec![1, 2] },
            Factor { name: "b".into(), items: vec![2, 3] },
        ]);
        assert!(dup.is_err());
        let reduced = spec.without(&[24, 25]);
        assert_eq!(reduced.k(), 5);
    }

    #[test]
    fn subsets_partition_rows_and_reject_tiny_results() {
        let rows = vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![0, 0], vec![1, 0]];
        let grades = [Grade::G3, Grade::G4, Grade::Mixed, Grade::G3, Grade::G4];
        let m = ScoredMatrix::from_rows(&rows)
            .unwrap()
            .with_demographics(grades.iter().map(|&g| demo(g)).collect())
            .unwrap();
        let g3 = SubsetName::G3.apply(&m).unwrap();
        let g4 = SubsetName::G4.apply(&m).unwrap();
        assert_eq!(g3.n() + g4.n() + 1, m.n());
        assert_eq!(SubsetName::All.apply(&m).unwrap(), m);
        assert!(matches!(m.subset(|_| false), Err(Error::SubsetTooSmall { n: 0 })));
        assert!(m.subset(|d| d.grade == Grade::Mixed).is_err());
    }

    #[test]
    fn profile_tally() {
        let key = cctt_answer_key();
        let mut row = vec![RawCell::Choice(key.items[0].correct); 25];
        row[2] = RawCell::Blank;
        let raw = raw_table(&[&row, &row], &[Grade::G3, Grade::G3]);
        let counts = profile_distribution(&raw, &key).unwrap();
        assert_eq!(counts[0].profiles[3], 2);
        assert_eq!(counts[2].blank, 2);
        assert!(counts.iter().all(|c| c.total() == 2));
    }

    #[test]
    fn select_items_drops_empty_factors() {
        let rows = vec![vec![1u8; 25], vec![0u8; 25]];
        let m = ScoredMatrix::from_rows(&rows)
            .unwrap()
            .with_factors(cctt_factor_spec())
            .unwrap();
        let keep: Vec<ItemId> = (1..=23).collect();
        let s = m.select_items(&keep).unwrap();
        assert_eq!(s.j(), 23);
        assert_eq!(s.factors().unwrap().k(), 5);
    }
}
