use serde::{Deserialize, Serialize};

use super::InteractionEvent;

/// Typing and pointing effort spent on a session, against the length of the
/// prompt it produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortReport {
    pub typed_keystrokes: u64,
    pub pointer_actions: u64,
    pub prompt_chars: u64,
    /// `(prompt_chars - typed_keystrokes) / prompt_chars`, floored at 0;
    /// 0 when there is no prompt yet.
    pub savings_ratio: f64,
}

impl EffortReport {
    pub fn from_events(events: &[InteractionEvent], prompt_chars: u64) -> Self {
        let typed_keystrokes = events.iter().map(|e| u64::from(e.keystroke_count)).sum();
        let pointer_actions = events.iter().map(|e| u64::from(e.pointer_actions)).sum();
        Self {
            typed_keystrokes,
            pointer_actions,
            prompt_chars,
            savings_ratio: savings_ratio(prompt_chars, typed_keystrokes),
        }
    }
}

pub fn savings_ratio(prompt_chars: u64, typed_keystrokes: u64) -> f64 {
    if prompt_chars == 0 || typed_keystrokes >= prompt_chars {
        return 0.0;
    }
    (prompt_chars - typed_keystrokes) as f64 / prompt_chars as f64
}

/// Characters of `edited` that are not part of a longest common subsequence
/// with `original`, i.e. the characters a user had to type to turn one into
/// the other.
pub fn inserted_chars(original: &str, edited: &str) -> u32 {
    let a: Vec<char> = original.chars().collect();
    let b: Vec<char> = edited.chars().collect();
    let mut prev = vec![0u32; b.len() + 1];
    let mut row = vec![0u32; b.len() + 1];
    for ca in &a {
        for (j, cb) in b.iter().enumerate() {
            row[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    b.len() as u32 - prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(savings_ratio(100, 10), 0.9);
        assert_eq!(savings_ratio(100, 0), 1.0);
        assert_eq!(savings_ratio(100, 100), 0.0);
        assert_eq!(savings_ratio(10, 400), 0.0);
        assert_eq!(savings_ratio(0, 0), 0.0);
    }

    #[test]
    fn inserted_chars_examples() {
        assert_eq!(inserted_chars("tree", "tree"), 0);
        assert_eq!(inserted_chars("tree", "trees"), 1);
        assert_eq!(inserted_chars("a small tree", "a tree"), 0);
        assert_eq!(inserted_chars("blue", "green"), 4);
        assert_eq!(inserted_chars("", "park"), 4);
    }

    // brute force over all subsequences of the shorter side
    fn lcs_brute(a: &[char], b: &[char]) -> usize {
        fn is_subsequence(s: &[char], of: &[char]) -> bool {
            let mut it = of.iter();
            s.iter().all(|c| it.any(|d| d == c))
        }
        let n = a.len();
        (0u32..(1 << n))
            .filter_map(|mask| {
                let sub: Vec<char> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
                is_subsequence(&sub, b).then_some(sub.len())
            })
            .max()
            .unwrap_or(0)
    }

    proptest! {
        #[test]
        fn matches_brute_force_lcs(a in "[abc]{0,8}", b in "[abc]{0,10}") {
            let ac: Vec<char> = a.chars().collect();
            let bc: Vec<char> = b.chars().collect();
            let expected = bc.len() - lcs_brute(&ac, &bc);
            prop_assert_eq!(inserted_chars(&a, &b) as usize, expected);
        }
    }
}
