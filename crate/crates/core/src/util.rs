use std::io::{self, BufRead};

/// 64-bit FNV-1a. Used wherever a hash must be stable across platforms and runs.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Mixes a base seed with a string key into an independent substream seed.
pub(crate) fn derive_seed(seed: u64, key: &str) -> u64 {
    splitmix(seed ^ fnv1a(key.as_bytes()))
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Iterates over the data lines of a tab-separated file: comment lines
/// (leading `#`) and blank lines are skipped, the first remaining line is
/// treated as the column header and checked against `expected`.
pub(crate) fn tsv_rows<R: BufRead>(
    reader: R,
    expected: &[&str],
) -> io::Result<Vec<(usize, Vec<String>)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<String> = trimmed.split('\t').map(str::to_owned).collect();
        if !header_seen {
            header_seen = true;
            if cols.iter().map(String::as_str).ne(expected.iter().copied()) {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!(
                        "line {}: expected header {:?}, found {:?}",
                        i + 1,
                        expected,
                        cols
                    ),
                ));
            }
            continue;
        }
        if cols.len() != expected.len() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "line {}: expected {} columns, found {}",
                    i + 1,
                    expected.len(),
                    cols.len()
                ),
            ));
        }
        rows.push((i + 1, cols));
    }
    Ok(rows)
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    line: usize,
    name: &str,
    raw: &str,
) -> io::Result<T> {
    raw.parse().map_err(|_| {
        io::Error::new(
            io::ErrorKind::InvalidData,
            format!("line {line}: cannot parse {name} from {raw:?}"),
        )
    })
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub(crate) fn l2_normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_vector() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn tsv_rows_skips_comments_and_checks_header() {
        let text = "# stage=x\na\tb\n1\t2\n\n3\t4\n";
        let rows = tsv_rows(text.as_bytes(), &["a", "b"]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].1, vec!["3", "4"]);
        assert!(tsv_rows(text.as_bytes(), &["a", "c"]).is_err());
    }

    #[test]
    fn cosine_of_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
    }
}
