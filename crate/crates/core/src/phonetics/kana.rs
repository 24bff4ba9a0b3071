//! Rule-based kana-to-romaji conversion (Hepburn-style) used as the fallback
//! when a reading is not in the Japanese lexicon.
//!
//! Handles both scripts, yoon digraphs, sokuon gemination, the prolonged
//! sound mark (vowel repetition), and syllabic ん. Characters outside the
//! kana tables pass through unchanged.

fn base_syllable(c: char) -> Option<&'static str> {
    Some(match c {
        'あ' => "a", 'い' => "i", 'う' => "u", 'え' => "e", 'お' => "o",
        'か' => "ka", 'き' => "ki", 'く' => "ku", 'け' => "ke", 'こ' => "ko",
        'が' => "ga", 'ぎ' => "gi", 'ぐ' => "gu", 'げ' => "ge", 'ご' => "go",
        'さ' => "sa", 'し' => "shi", 'す' => "su", 'せ' => "se", 'そ' => "so",
        'ざ' => "za", 'じ' => "ji", 'ず' => "zu", 'ぜ' => "ze", 'ぞ' => "zo",
        'た' => "ta", 'ち' => "chi", 'つ' => "tsu", 'て' => "te", 'と' => "to",
        'だ' => "da", 'ぢ' => "ji", 'づ' => "zu", 'で' => "de", 'ど' => "do",
        'な' => "na", 'に' => "ni", 'ぬ' => "nu", 'ね' => "ne", 'の' => "no",
        'は' => "ha", 'ひ' => "hi", 'ふ' => "fu", 'へ' => "he", 'ほ' => "ho",
        'ば' => "ba", 'び' => "bi", 'ぶ' => "bu", 'べ' => "be", 'ぼ' => "bo",
        'ぱ' => "pa", 'ぴ' => "pi", 'ぷ' => "pu", 'ぺ' => "pe", 'ぽ' => "po",
        'ま' => "ma", 'み' => "mi", 'む' => "mu", 'め' => "me", 'も' => "mo",
        'や' => "ya", 'ゆ' => "yu", 'よ' => "yo",
        'ら' => "ra", 'り' => "ri", 'る' => "ru", 'れ' => "re", 'ろ' => "ro",
        'わ' => "wa", 'ゐ' => "wi", 'ゑ' => "we", 'を' => "o",
        'ゔ' => "vu",
        'ぁ' => "a", 'ぃ' => "i", 'ぅ' => "u", 'ぇ' => "e", 'ぉ' => "o",
        _ => return None,
    })
}

/// Map katakana into the hiragana block so one table serves both scripts.
fn to_hiragana(c: char) -> char {
    match c {
        '\u{30A1}'..='\u{30F6}' => char::from_u32(c as u32 - 0x60).unwrap(),
        _ => c,
    }
}

fn small_yoon(c: char) -> Option<char> {
    match c {
        'ゃ' => Some('a'),
        'ゅ' => Some('u'),
        'ょ' => Some('o'),
        _ => None,
    }
}

/// Combine a base syllable with a small ya/yu/yo.
fn yoon(base: &str, vowel: char) -> String {
    let stem = base.strip_suffix('i').unwrap_or(base);
    if stem.ends_with("sh") || stem.ends_with("ch") || stem.ends_with('j') {
        format!("{stem}{vowel}")
    } else {
        format!("{stem}y{vowel}")
    }
}

/// Convert a kana string to romaji. Non-kana characters pass through.
pub fn to_romaji(text: &str) -> String {
    let chars: Vec<char> = text.chars().map(to_hiragana).collect();
    let mut out = String::with_capacity(text.len());
    let mut geminate = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == 'っ' {
            geminate = true;
            i += 1;
            continue;
        }
        if c == 'ん' {
            out.push('n');
            geminate = false;
            i += 1;
            continue;
        }
        if c == 'ー' {
            if let Some(last) = out.chars().last() {
                if "aiueo".contains(last) {
                    out.push(last);
                }
            }
            geminate = false;
            i += 1;
            continue;
        }
        let syllable = match base_syllable(c) {
            Some(base) => {
                if let Some(vowel) = chars.get(i + 1).copied().and_then(small_yoon) {
                    i += 1;
                    yoon(base, vowel)
                } else {
                    base.to_string()
                }
            }
            None => {
                out.push(c);
                geminate = false;
                i += 1;
                continue;
            }
        };
        if geminate {
            // Hepburn: っち -> tch, otherwise double the leading consonant.
            if syllable.starts_with("ch") {
                out.push('t');
            } else if let Some(first) = syllable.chars().next() {
                if !"aiueo".contains(first) {
                    out.push(first);
                }
            }
            geminate = false;
        }
        out.push_str(&syllable);
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_syllables() {
        assert_eq!(to_romaji("こんにちは"), "konnichiha");
        assert_eq!(to_romaji("さくら"), "sakura");
    }

    #[test]
    fn katakana_shares_the_table() {
        assert_eq!(to_romaji("サクラ"), "sakura");
        assert_eq!(to_romaji("ラーメン"), "raamen");
    }

    #[test]
    fn yoon_digraphs() {
        assert_eq!(to_romaji("きょうと"), "kyouto");
        assert_eq!(to_romaji("しゃしん"), "shashin");
        assert_eq!(to_romaji("ちゅうい"), "chuui");
        assert_eq!(to_romaji("じゅく"), "juku");
    }

    #[test]
    fn sokuon_gemination() {
        assert_eq!(to_romaji("がっこう"), "gakkou");
        assert_eq!(to_romaji("まっちゃ"), "matcha");
        assert_eq!(to_romaji("ニッポン"), "nippon");
    }

    #[test]
    fn unknown_characters_pass_through() {
        assert_eq!(to_romaji("東京タワー"), "東京tawaa");
    }
}
