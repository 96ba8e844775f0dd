//! Embedding matrix and model files.
//!
//! Text matrices are tab-separated: a `#dim=<d>` line, then one line per
//! document with the id followed by `d` decimal values. Binary matrices start
//! with the magic `CMEM`, a little-endian u32 version, u32 dimension and u64
//! row count; each row is a u32 length-prefixed UTF-8 id followed by `d`
//! little-endian f32 values.

use std::io::{self, BufRead, Read, Write};

use super::{EmbedError, EmbeddingMatrix, EmbeddingModel};

const MAGIC: &[u8; 4] = b"CMEM";
const VERSION: u32 = 1;

pub fn write_matrix_tsv<W: Write>(m: &EmbeddingMatrix, mut w: W) -> io::Result<()> {
    writeln!(w, "#dim={}", m.dim())?;
    for (id, row) in m.rows() {
        w.write_all(id.as_bytes())?;
        for x in row {
            write!(w, "\t{x}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_matrix_tsv<R: BufRead>(r: R) -> Result<EmbeddingMatrix, EmbedError> {
    let mut dim: Option<usize> = None;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if let Some(d) = line.strip_prefix("#dim=") {
            dim = Some(
                d.trim()
                    .parse()
                    .map_err(|_| EmbedError::Format(format!("line {}: bad dim", i + 1)))?,
            );
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let d = dim.ok_or_else(|| EmbedError::Format("missing #dim header".into()))?;
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default().to_owned();
        let before = data.len();
        for c in cols {
            data.push(
                c.parse::<f64>()
                    .map_err(|_| EmbedError::Format(format!("line {}: bad value {c:?}", i + 1)))?,
            );
        }
        if data.len() - before != d {
            return Err(EmbedError::Format(format!(
                "line {}: expected {d} values, found {}",
                i + 1,
                data.len() - before
            )));
        }
        ids.push(id);
    }
    let dim = dim.ok_or_else(|| EmbedError::Format("missing #dim header".into()))?;
    EmbeddingMatrix::new(ids, dim, data)
}

pub fn write_matrix_bin<W: Write>(m: &EmbeddingMatrix, mut w: W) -> io::Result<()> {
    let dim = u32::try_from(m.dim())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&dim.to_le_bytes())?;
    w.write_all(&(m.len() as u64).to_le_bytes())?;
    for (id, row) in m.rows() {
        let len = u32::try_from(id.len())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "id too long"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for x in row {
            w.write_all(&(*x as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_matrix_bin<R: Read>(mut r: R) -> Result<EmbeddingMatrix, EmbedError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(EmbedError::Format("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(EmbedError::Format(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    let mut ids = Vec::with_capacity(rows.min(1 << 20));
    let mut data = Vec::with_capacity((rows * dim).min(1 << 24));
    for _ in 0..rows {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        ids.push(String::from_utf8(buf).map_err(|_| EmbedError::Format("id is not UTF-8".into()))?);
        for _ in 0..dim {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4)?;
            data.push(f64::from(f32::from_le_bytes(b4)));
        }
    }
    EmbeddingMatrix::new(ids, dim, data)
}

pub fn write_model<W: Write>(m: &EmbeddingModel, w: W) -> io::Result<()> {
    serde_json::to_writer(w, m).map_err(io::Error::from)
}

pub fn read_model<R: Read>(r: R) -> Result<EmbeddingModel, EmbedError> {
    let m: EmbeddingModel =
        serde_json::from_reader(r).map_err(|e| EmbedError::Format(e.to_string()))?;
    EmbeddingModel::new(m.base, m.dim_out, m.projection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedder::BaseEncoderConfig;
    use proptest::prelude::*;

    fn f32_matrix(rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
        let dim = rows.first().map_or(0, Vec::len);
        EmbeddingMatrix::from_rows(
            rows.into_iter()
                .enumerate()
                .map(|(i, r)| (format!("doc-{i}"), r.into_iter().map(f64::from).collect()))
                .collect(),
            dim,
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn both_formats_round_trip(rows in prop::collection::vec(
            prop::collection::vec(-1e6f32..1e6, 3), 0..20)) {
            let m = f32_matrix(rows);
            let mut t = Vec::new();
            write_matrix_tsv(&m, &mut t).unwrap();
            prop_assert_eq!(&read_matrix_tsv(t.as_slice()).unwrap(), &m);
            let mut b = Vec::new();
            write_matrix_bin(&m, &mut b).unwrap();
            prop_assert_eq!(&read_matrix_bin(b.as_slice()).unwrap(), &m);
        }
    }

    #[test]
    fn binary_header_layout() {
        let m = f32_matrix(vec![vec![1.0, 2.0]]);
        let mut b = Vec::new();
        write_matrix_bin(&m, &mut b).unwrap();
        assert_eq!(&b[..4], b"CMEM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 1);
        assert_eq!(b.len(), 20 + 4 + 5 + 8);
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(read_matrix_bin(bad.as_slice()).is_err());
    }

    #[test]
    fn tsv_requires_dim_header() {
        assert!(read_matrix_tsv("a\t1\n".as_bytes()).is_err());
        assert!(read_matrix_tsv("#dim=2\na\t1\n".as_bytes()).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let m = EmbeddingModel::random(
            BaseEncoderConfig {
                dim_base: 5,
                ..BaseEncoderConfig::default()
            },
            3,
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert_eq!(read_model(buf.as_slice()).unwrap(), m);
    }
}
