//! The 25-item instrument's answer key and block structure.

use super::{AnswerKey, Choice, Factor, FactorSpec, ItemKey};

/// Error profile of options A..D for Q1..Q25; the option with profile 4 is keyed.
const PROFILES: [[u8; 4]; 25] = [
    [3, 4, 2, 1],
    [2, 3, 1, 4],
    [4, 1, 3, 2],
    [1, 2, 4, 3],
    [1, 3, 4, 2],
    [4, 2, 3, 1],
    [3, 1, 2, 4],
    [2, 4, 1, 3],
    [3, 4, 2, 1],
    [1, 2, 4, 3],
    [4, 2, 1, 3],
    [4, 3, 2, 1],
    [2, 1, 3, 4],
    [1, 3, 4, 2],
    [2, 1, 3, 4],
    [2, 3, 1, 4],
    [1, 2, 4, 3],
    [3, 4, 2, 1],
    [4, 1, 3, 2],
    [1, 2, 4, 3],
    [3, 4, 2, 1],
    [2, 3, 1, 4],
    [4, 1, 3, 2],
    [1, 2, 3, 4],
    [3, 1, 4, 2],
];

pub fn cctt_answer_key() -> AnswerKey {
    AnswerKey {
        items: PROFILES
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let correct = Choice::ALL[p.iter().position(|&x| x == 4).unwrap()];
                ItemKey::new(i as u32 + 1, correct, *p).expect("built-in key is valid")
            })
            .collect(),
    }
}

/// Six concept blocks. Q15 sits with the complex loops and Q23 with the
/// while statements, following the loading table rather than the test
/// layout table (the two disagree on these two questions).
pub fn cctt_factor_spec() -> FactorSpec {
    spec_from_ranges([
        ("sequences", 1..=4),
        ("simple_loops", 5..=8),
        ("complex_loops", 9..=15),
        ("conditionals", 16..=19),
        ("while", 20..=23),
        ("combinations", 24..=25),
    ])
}

/// Blocks as laid out in the printed test; used for block-wise alphas.
pub fn cctt_layout_blocks() -> FactorSpec {
    spec_from_ranges([
        ("sequences", 1..=4),
        ("simple_loops", 5..=8),
        ("complex_loops", 9..=14),
        ("conditionals", 15..=18),
        ("while", 19..=22),
        ("combinations", 23..=25),
    ])
}

fn spec_from_ranges(blocks: [(&str, std::ops::RangeInclusive<u32>); 6]) -> FactorSpec {
    FactorSpec::new(
        blocks
            .into_iter()
            .map(|(name, r)| Factor {
                name: name.to_string(),
                items: r.collect(),
            })
            .collect(),
    )
    .expect("built-in factor spec is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_matches_profile_table() {
        let key = cctt_answer_key();
        assert_eq!(key.items.len(), 25);
        assert_eq!(key.items[0].correct, Choice::B);
        assert_eq!(key.items[1].correct, Choice::D);
        assert_eq!(key.items[23].correct, Choice::D);
        assert_eq!(key.items[24].correct, Choice::C);
    }

    #[test]
    fn blocks_cover_all_items() {
        let spec = cctt_factor_spec();
        assert_eq!(spec.k(), 6);
        assert_eq!(spec.items(), (1..=25).collect::<Vec<_>>());
        assert_eq!(spec.factor_of(15), Some(2));
        assert_eq!(spec.factor_of(23), Some(4));
    }
}
