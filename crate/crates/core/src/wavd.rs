//! WAVD sequence container.
//!
//! Layout (little-endian throughout):
//!   magic  "WAVD" (4 bytes)
//!   version u16        (currently 1)
//!   T, H, W u32
//!   T*H*W  f32 values in [t][i][j] row-major order
//!
//! Values are converted from the internal f64 representation by
//! round-to-nearest on write and widened exactly on read.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::wave::Sequence;

pub const WAVD_MAGIC: &[u8; 4] = b"WAVD";
pub const WAVD_VERSION: u16 = 1;

pub fn write_sequence<W: Write>(mut out: W, seq: &Sequence) -> Result<()> {
    out.write_all(WAVD_MAGIC)?;
    out.write_all(&WAVD_VERSION.to_le_bytes())?;
    for dim in [seq.t, seq.h, seq.w] {
        let v = u32::try_from(dim)
            .map_err(|_| Error::Format(format!("dimension {dim} exceeds u32")))?;
        out.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(seq.values.len() * 4);
    for v in &seq.values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_sequence<R: Read>(mut input: R) -> Result<Sequence> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != WAVD_MAGIC {
        return Err(Error::Format(format!(
            "bad WAVD magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut v2 = [0u8; 2];
    input.read_exact(&mut v2)?;
    let version = u16::from_le_bytes(v2);
    if version != WAVD_VERSION {
        return Err(Error::Format(format!("unsupported WAVD version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut v4 = [0u8; 4];
        input.read_exact(&mut v4)?;
        *d = u32::from_le_bytes(v4) as usize;
    }
    let [t, h, w] = dims;
    let n = t
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .ok_or_else(|| Error::Format("WAVD dimensions overflow".into()))?;
    let mut raw = vec![0u8; n * 4];
    input.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect::<Vec<f64>>();
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::Format("WAVD contains non-finite values".into()));
    }
    Ok(Sequence { t, h, w, values })
}

pub fn write_sequence_file<P: AsRef<Path>>(path: P, seq: &Sequence) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_sequence(std::io::BufWriter::new(file), seq)
}

pub fn read_sequence_file<P: AsRef<Path>>(path: P) -> Result<Sequence> {
    let file = std::fs::File::open(path)?;
    read_sequence(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let seq = Sequence {
            t: 1,
            h: 1,
            w: 2,
            values: vec![1.0, -0.5],
        };
        let mut buf = Vec::new();
        write_sequence(&mut buf, &seq).unwrap();
        assert_eq!(&buf[0..4], b"WAVD");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..10], &1u32.to_le_bytes());
        assert_eq!(&buf[10..14], &1u32.to_le_bytes());
        assert_eq!(&buf[14..18], &2u32.to_le_bytes());
        assert_eq!(&buf[18..22], &1.0f32.to_le_bytes());
        assert_eq!(&buf[22..26], &(-0.5f32).to_le_bytes());
        assert_eq!(buf.len(), 26);
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut buf = Vec::new();
        write_sequence(
            &mut buf,
            &Sequence {
                t: 1,
                h: 1,
                w: 1,
                values: vec![0.0],
            },
        )
        .unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_sequence(&bad[..]).is_err());
        let mut badv = buf;
        badv[4] = 9;
        assert!(read_sequence(&badv[..]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_preserves_f32_rounded_values(
            t in 1usize..4, h in 1usize..5, w in 1usize..5,
            seed in any::<u64>(),
        ) {
            let n = t * h * w;
            let mut state = seed;
            let values: Vec<f64> = (0..n).map(|_| {
                state = crate::rng::splitmix64(state);
                (state as f64 / u64::MAX as f64) * 2.0 - 1.0
            }).collect();
            let seq = Sequence { t, h, w, values };
            let mut buf = Vec::new();
            write_sequence(&mut buf, &seq).unwrap();
            let back = read_sequence(&buf[..]).unwrap();
            prop_assert_eq!((back.t, back.h, back.w), (t, h, w));
            for (orig, got) in seq.values.iter().zip(&back.values) {
                prop_assert_eq!(*orig as f32, *got as f32);
                prop_assert_eq!(*got, (*orig as f32) as f64);
            }
        }
    }
}
