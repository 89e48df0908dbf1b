//! Pre-tokenization: split text into the units BPE merges operate within.
//!
//! Follows the GPT-2 splitting convention: contraction suffixes, letter runs,
//! digit runs, symbol runs (each with one optional leading space), and
//! whitespace runs that leave their final character to attach to the next
//! word. Character classes are Unicode (`char::is_alphabetic`,
//! `char::is_numeric`, `char::is_whitespace`).
//!
//! Merges never cross pre-token boundaries, so frequency counting over these
//! units with multiplicities is equivalent to counting over the raw stream.

/// Contraction suffixes recognized as standalone pre-tokens (lowercase only).
const CONTRACTIONS: [&str; 7] = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];

/// Split `text` into pre-token units. Concatenating the units yields `text`.
pub fn pretokenize(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let len = next_unit_len(rest);
        debug_assert!(len > 0 && len <= rest.len());
        out.push(&rest[..len]);
        rest = &rest[len..];
    }
    out
}

/// Length in bytes of the pre-token starting at the beginning of `s`.
fn next_unit_len(s: &str) -> usize {
    if let Some(c) = contraction_len(s) {
        return c;
    }

    let mut chars = s.char_indices();
    let (_, first) = chars.next().expect("non-empty");

    // One optional leading ASCII space joins the run that follows it.
    let (run_start, run_first) = if first == ' ' {
        match chars.next() {
            Some((i, c)) => (i, c),
            None => return whitespace_unit_len(s),
        }
    } else {
        (0, first)
    };

    let class = CharClass::of(run_first);
    if class == CharClass::Whitespace {
        // The optional-space alternatives need a non-space run; fall through
        // to the whitespace rules starting at the first character.
        return whitespace_unit_len(s);
    }

    let mut end = s.len();
    for (i, c) in s[run_start..].char_indices() {
        if CharClass::of(c) != class {
            end = run_start + i;
            break;
        }
    }
    end
}

fn contraction_len(s: &str) -> Option<usize> {
    CONTRACTIONS
        .iter()
        .find(|c| s.starts_with(**c))
        .map(|c| c.len())
}

/// Whitespace handling: a run keeps all but its last character when followed
/// by a non-space (the survivor attaches to the next unit); a run at the end
/// of input is taken whole; a single whitespace character followed by
/// non-space stands alone.
fn whitespace_unit_len(s: &str) -> usize {
    let mut last_start = 0;
    let mut end = s.len();
    let mut n_chars = 0;
    for (i, c) in s.char_indices() {
        if !c.is_whitespace() {
            end = i;
            break;
        }
        last_start = i;
        n_chars += 1;
    }
    debug_assert!(n_chars >= 1);
    if end == s.len() || n_chars == 1 {
        // Trailing whitespace, or a lone whitespace char before a word:
        // the whole run is one unit.
        end
    } else {
        last_start // leave the final char for the next unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Digit,
    Symbol,
    Whitespace,
}

impl CharClass {
    fn of(c: char) -> Self {
        if c.is_whitespace() {
            CharClass::Whitespace
        } else if c.is_alphabetic() {
            CharClass::Letter
        } else if c.is_numeric() {
            CharClass::Digit
        } else {
            CharClass::Symbol
        }
    }
}
