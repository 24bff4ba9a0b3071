//! Text canonicalization shared by scoring, rare-word matching, and dataset
//! construction.
//!
//! `compat_fold` is a compatibility folding pass over the script repertoire
//! this toolkit scores: fullwidth ASCII forms, halfwidth katakana (with
//! voiced/semi-voiced mark composition), ideographic space, and a handful of
//! common compatibility characters. It is idempotent and covers what NFKC
//! does for English and Japanese ASR transcripts in practice; exotic
//! compatibility ranges outside these scripts pass through unchanged.

/// Fold compatibility characters to their canonical forms.
pub fn compat_fold(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let chars: Vec<char> = input.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        // Halfwidth katakana may carry a combining voiced/semi-voiced mark.
        if let Some(base) = halfwidth_kana(c) {
            let next = chars.get(i + 1).copied();
            if next == Some('\u{FF9E}') || next == Some('\u{3099}') {
                if let Some(v) = voiced(base) {
                    out.push(v);
                    i += 2;
                    continue;
                }
            }
            if next == Some('\u{FF9F}') || next == Some('\u{309A}') {
                if let Some(v) = semi_voiced(base) {
                    out.push(v);
                    i += 2;
                    continue;
                }
            }
            out.push(base);
            i += 1;
            continue;
        }
        // Fullwidth kana followed by a combining voicing mark composes too.
        if matches!(chars.get(i + 1), Some('\u{3099}')) {
            if let Some(v) = voiced(c) {
                out.push(v);
                i += 2;
                continue;
            }
        }
        if matches!(chars.get(i + 1), Some('\u{309A}')) {
            if let Some(v) = semi_voiced(c) {
                out.push(v);
                i += 2;
                continue;
            }
        }
        out.push(fold_char(c));
        i += 1;
    }
    out
}

fn fold_char(c: char) -> char {
    match c {
        // Fullwidth ASCII block -> ASCII.
        '\u{FF01}'..='\u{FF5E}' => char::from_u32(c as u32 - 0xFF01 + 0x21).unwrap(),
        '\u{3000}' => ' ',          // ideographic space
        '\u{FF61}' => '。',         // halfwidth ideographic full stop
        '\u{FF64}' => '、',         // halfwidth ideographic comma
        '\u{FF62}' => '「',
        '\u{FF63}' => '」',
        '\u{FF70}' => 'ー',         // halfwidth prolonged sound mark
        '\u{FF9E}' => '\u{309B}',   // stray voicing marks
        '\u{FF9F}' => '\u{309C}',
        '\u{2018}' | '\u{2019}' => '\'',
        '\u{201C}' | '\u{201D}' => '"',
        '\u{00A0}' => ' ',          // no-break space
        _ => c,
    }
}

fn halfwidth_kana(c: char) -> Option<char> {
    Some(match c {
        '\u{FF66}' => 'ヲ',
        '\u{FF67}' => 'ァ',
        '\u{FF68}' => 'ィ',
        '\u{FF69}' => 'ゥ',
        '\u{FF6A}' => 'ェ',
        '\u{FF6B}' => 'ォ',
        '\u{FF6C}' => 'ャ',
        '\u{FF6D}' => 'ュ',
        '\u{FF6E}' => 'ョ',
        '\u{FF6F}' => 'ッ',
        '\u{FF71}' => 'ア',
        '\u{FF72}' => 'イ',
        '\u{FF73}' => 'ウ',
        '\u{FF74}' => 'エ',
        '\u{FF75}' => 'オ',
        '\u{FF76}' => 'カ',
        '\u{FF77}' => 'キ',
        '\u{FF78}' => 'ク',
        '\u{FF79}' => 'ケ',
        '\u{FF7A}' => 'コ',
        '\u{FF7B}' => 'サ',
        '\u{FF7C}' => 'シ',
        '\u{FF7D}' => 'ス',
        '\u{FF7E}' => 'セ',
        '\u{FF7F}' => 'ソ',
        '\u{FF80}' => 'タ',
        '\u{FF81}' => 'チ',
        '\u{FF82}' => 'ツ',
        '\u{FF83}' => 'テ',
        '\u{FF84}' => 'ト',
        '\u{FF85}' => 'ナ',
        '\u{FF86}' => 'ニ',
        '\u{FF87}' => 'ヌ',
        '\u{FF88}' => 'ネ',
        '\u{FF89}' => 'ノ',
        '\u{FF8A}' => 'ハ',
        '\u{FF8B}' => 'ヒ',
        '\u{FF8C}' => 'フ',
        '\u{FF8D}' => 'ヘ',
        '\u{FF8E}' => 'ホ',
        '\u{FF8F}' => 'マ',
        '\u{FF90}' => 'ミ',
        '\u{FF91}' => 'ム',
        '\u{FF92}' => 'メ',
        '\u{FF93}' => 'モ',
        '\u{FF94}' => 'ヤ',
        '\u{FF95}' => 'ユ',
        '\u{FF96}' => 'ヨ',
        '\u{FF97}' => 'ラ',
        '\u{FF98}' => 'リ',
        '\u{FF99}' => 'ル',
        '\u{FF9A}' => 'レ',
        '\u{FF9B}' => 'ロ',
        '\u{FF9C}' => 'ワ',
        '\u{FF9D}' => 'ン',
        _ => return None,
    })
}

fn voiced(c: char) -> Option<char> {
    Some(match c {
        'カ' => 'ガ', 'キ' => 'ギ', 'ク' => 'グ', 'ケ' => 'ゲ', 'コ' => 'ゴ',
        'サ' => 'ザ', 'シ' => 'ジ', 'ス' => 'ズ', 'セ' => 'ゼ', 'ソ' => 'ゾ',
        'タ' => 'ダ', 'チ' => 'ヂ', 'ツ' => 'ヅ', 'テ' => 'デ', 'ト' => 'ド',
        'ハ' => 'バ', 'ヒ' => 'ビ', 'フ' => 'ブ', 'ヘ' => 'ベ', 'ホ' => 'ボ',
        'ウ' => 'ヴ',
        'か' => 'が', 'き' => 'ぎ', 'く' => 'ぐ', 'け' => 'げ', 'こ' => 'ご',
        'さ' => 'ざ', 'し' => 'じ', 'す' => 'ず', 'せ' => 'ぜ', 'そ' => 'ぞ',
        'た' => 'だ', 'ち' => 'ぢ', 'つ' => 'づ', 'て' => 'で', 'と' => 'ど',
        'は' => 'ば', 'ひ' => 'び', 'ふ' => 'ぶ', 'へ' => 'べ', 'ほ' => 'ぼ',
        _ => return None,
    })
}

fn semi_voiced(c: char) -> Option<char> {
    Some(match c {
        'ハ' => 'パ', 'ヒ' => 'ピ', 'フ' => 'プ', 'ヘ' => 'ペ', 'ホ' => 'ポ',
        'は' => 'ぱ', 'ひ' => 'ぴ', 'ふ' => 'ぷ', 'へ' => 'ぺ', 'ほ' => 'ぽ',
        _ => return None,
    })
}

/// Lowercase fold. `char::to_lowercase` is sufficient casefolding for the
/// transcript text this toolkit handles.
pub fn casefold(input: &str) -> String {
    input.to_lowercase()
}

/// True for characters treated as punctuation when stripping token edges.
pub fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Strip leading/trailing punctuation, keeping interior marks ("it's", "HbA1c").
pub fn strip_outer_punct(token: &str) -> &str {
    token.trim_matches(is_punct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn folds_fullwidth_ascii() {
        assert_eq!(compat_fold("ＡＢＣ１２３"), "ABC123");
        assert_eq!(compat_fold("ｈｅｌｌｏ！"), "hello!");
    }

    #[test]
    fn folds_ideographic_space() {
        assert_eq!(compat_fold("あ　い"), "あ い");
    }

    #[test]
    fn composes_halfwidth_katakana() {
        assert_eq!(compat_fold("ｶﾞｷﾞﾅﾊﾟ"), "ガギナパ");
        assert_eq!(compat_fold("ﾗｰﾒﾝ"), "ラーメン");
    }

    #[test]
    fn composes_combining_voicing_marks() {
        // か + U+3099 composes to が
        assert_eq!(compat_fold("か\u{3099}"), "が");
        assert_eq!(compat_fold("は\u{309A}"), "ぱ");
    }

    #[test]
    fn strips_outer_punct_only() {
        assert_eq!(strip_outer_punct("(anemia),"), "anemia");
        assert_eq!(strip_outer_punct("it's"), "it's");
        assert_eq!(strip_outer_punct("..."), "");
    }

    proptest! {
        #[test]
        fn fold_is_idempotent(s in "\\PC{0,40}") {
            let once = compat_fold(&s);
            prop_assert_eq!(compat_fold(&once), once);
        }

        #[test]
        fn casefold_is_idempotent(s in "\\PC{0,40}") {
            let once = casefold(&s);
            prop_assert_eq!(casefold(&once), once);
        }
    }
}
