use serde::{Deserialize, Serialize};

const FATHA: char = '\u{064E}';
const DAMMA: char = '\u{064F}';
const KASRA: char = '\u{0650}';
const FATHATAN: char = '\u{064B}';
const DAMMATAN: char = '\u{064C}';
const KASRATAN: char = '\u{064D}';
const SHADDA: char = '\u{0651}';
const SUKUN: char = '\u{0652}';
const DAGGER_ALEF: char = '\u{0670}';

const ALEF: char = '\u{0627}';
const ALEF_MADDA: char = '\u{0622}';
const ALEF_MAKSURA: char = '\u{0649}';
const WAW: char = '\u{0648}';
const YEH: char = '\u{064A}';
const TATWEEL: char = '\u{0640}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyllableCount {
    pub count: u32,
    /// False when the word carries no diacritics at all, in which case `count`
    /// is a guess from the long-vowel letters.
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Vowel {
    A,
    U,
    I,
}

fn is_mark(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{065F}' | DAGGER_ALEF)
}

fn is_vowel_mark(c: char) -> bool {
    matches!(
        c,
        FATHA | DAMMA | KASRA | FATHATAN | DAMMATAN | KASRATAN | SHADDA | SUKUN | DAGGER_ALEF
    )
}

fn long_vowel_of(c: char) -> Option<Vowel> {
    match c {
        ALEF | ALEF_MAKSURA => Some(Vowel::A),
        WAW => Some(Vowel::U),
        YEH => Some(Vowel::I),
        _ => None,
    }
}

/// Counts vowel nuclei in a diacritized Arabic word.
///
/// Each short vowel or tanwin opens a nucleus. A bare alef/alef maksura after
/// fatha, waw after damma and yeh after kasra lengthen the preceding nucleus
/// instead of opening a new one. Alef madda and a dagger alef on an otherwise
/// unvowelled letter each carry their own long vowel.
pub fn count_syllables(word: &str) -> SyllableCount {
    let has_letters = word.chars().any(|c| c.is_alphabetic() && !is_mark(c));
    if !has_letters {
        return SyllableCount {
            count: 0,
            reliable: true,
        };
    }
    if !word.chars().any(is_vowel_mark) {
        let long = word
            .chars()
            .filter(|c| long_vowel_of(*c).is_some() || *c == ALEF_MADDA)
            .count() as u32;
        return SyllableCount {
            count: long.max(1),
            reliable: false,
        };
    }

    // Group every base letter with the marks that follow it.
    let mut groups: Vec<(char, Vec<char>)> = Vec::new();
    for c in word.chars() {
        if is_mark(c) {
            if let Some(last) = groups.last_mut() {
                last.1.push(c);
            }
        } else if c != TATWEEL {
            groups.push((c, Vec::new()));
        }
    }

    let mut count = 0;
    let mut previous: Option<Vowel> = None;
    for (base, marks) in &groups {
        let vowel = marks.iter().find_map(|m| match *m {
            FATHA | FATHATAN => Some(Vowel::A),
            DAMMA | DAMMATAN => Some(Vowel::U),
            KASRA | KASRATAN => Some(Vowel::I),
            _ => None,
        });
        let lengthens = vowel.is_none()
            && !marks.contains(&SHADDA)
            && previous.is_some()
            && long_vowel_of(*base) == previous;
        if lengthens {
            previous = None;
            continue;
        }
        if vowel.is_some() || *base == ALEF_MADDA || marks.contains(&DAGGER_ALEF) {
            count += 1;
        }
        previous = if marks.contains(&DAGGER_ALEF) {
            None
        } else {
            vowel
        };
    }
    SyllableCount {
        count,
        reliable: true,
    }
}
