/// Arabic and general punctuation that is split off as its own token, on top of
/// ASCII punctuation.
const EXTRA_PUNCTUATION: &[char] = &[
    '\u{060C}', // arabic comma
    '\u{061B}', // arabic semicolon
    '\u{061F}', // arabic question mark
    '\u{066A}', // arabic percent
    '\u{066B}', '\u{066C}', '\u{06D4}', '\u{00AB}', '\u{00BB}', '\u{2026}', '\u{2013}', '\u{2014}',
    '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{00A1}', '\u{00BF}',
];

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCTUATION.contains(&c)
}

/// Folds alef variants to bare alef and teh marbuta to heh.
pub fn normalize_arabic(word: &str) -> String {
    word.chars()
        .map(|c| match c {
            '\u{0622}' | '\u{0623}' | '\u{0625}' | '\u{0671}' => '\u{0627}',
            '\u{0629}' => '\u{0647}',
            other => other,
        })
        .collect()
}

/// Splits `text` on whitespace and detaches every punctuation character as a
/// separate token. With `normalize` set, word tokens are passed through
/// [`normalize_arabic`].
pub fn tokenize(text: &str, normalize: bool) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_punctuation(c) {
                flush(&mut word, &mut tokens, normalize);
                tokens.push(c.to_string());
            } else {
                word.push(c);
            }
        }
        flush(&mut word, &mut tokens, normalize);
    }
    tokens
}

fn flush(word: &mut String, tokens: &mut Vec<String>, normalize: bool) {
    if word.is_empty() {
        return;
    }
    let w = std::mem::take(word);
    tokens.push(if normalize { normalize_arabic(&w) } else { w });
}
