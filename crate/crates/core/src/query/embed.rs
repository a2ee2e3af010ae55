use crate::error::{Error, Result};
use crate::hash::fnv1a64;

pub const MIN_BUILTIN_DIM: usize = 8;

/// Deterministic character-trigram hashing embedder.
///
/// The trimmed, lowercased text is wrapped as `^text$`; every window of three
/// code points is hashed with FNV-1a over its UTF-8 bytes. The hash picks the
/// bucket (`h mod dim`) and the sign (bit 63). The result is L2-normalized.
pub fn embed_text_builtin(text: &str, dim: usize) -> Result<Vec<f32>> {
    if dim < MIN_BUILTIN_DIM {
        return Err(Error::InvalidDim(format!(
            "builtin embedder needs dim ≥ {MIN_BUILTIN_DIM}, got {dim}"
        )));
    }
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let padded: Vec<char> = std::iter::once('^')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once('$'))
        .collect();

    let mut acc = vec![0i64; dim];
    let mut buf = String::with_capacity(12);
    for w in padded.windows(3) {
        buf.clear();
        buf.extend(w);
        let h = fnv1a64(buf.as_bytes());
        let bucket = (h % dim as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1 } else { -1 };
    }
    let norm = acc.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateQuery);
    }
    Ok(acc.iter().map(|&v| (v as f64 / norm) as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit_length() {
        let a = embed_text_builtin("aa", 64).unwrap();
        assert_eq!(a, embed_text_builtin("aa", 64).unwrap());
        let n: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn case_and_outer_whitespace_are_ignored() {
        assert_eq!(
            embed_text_builtin("  Hello World ", 32).unwrap(),
            embed_text_builtin("hello world", 32).unwrap()
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(embed_text_builtin("   ", 64), Err(Error::EmptyQuery)));
        assert!(matches!(embed_text_builtin("abc", 7), Err(Error::InvalidDim(_))));
    }

    #[test]
    fn single_character_has_one_trigram() {
        let v = embed_text_builtin("x", 16).unwrap();
        assert_eq!(v.iter().filter(|x| **x != 0.0).count(), 1);
    }
}
