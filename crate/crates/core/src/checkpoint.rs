//! CKPT model container.
//!
//! Layout (little-endian throughout):
//!   magic   "CKPT" (4 bytes)
//!   version u16          (currently 1)
//!   id_len  u16, then the model-id string (UTF-8)
//!   n_cfg   u16, then n_cfg structural integers as u32 each
//!   n_par   u64, then the flat parameter vector as f64 each
//!
//! Parameter order per family:
//!   distana:  W_pre row-major, LSTM gates input/forget/cell/output each
//!             row-major (columns: preprocessing units then hidden), W_post
//!             row-major. Config ints: [lstm_cells].
//!   convlstm: per layer one gate kernel [4*hid, in+hid, 3, 3] row-major,
//!             gate blocks ordered input/forget/cell/output. Config ints:
//!             hidden channels per layer.
//!   tcn:      per layer, per temporal tap (increasing lag) one kernel
//!             [out, in, 3, 3] row-major. Config ints: [mid_channels].
//!
//! Weights are grid-size independent; the loader binds them to a grid.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{convlstm, distana, tcn, Model};

pub const CKPT_MAGIC: &[u8; 4] = b"CKPT";
pub const CKPT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(mut out: W, model: &dyn Model) -> Result<()> {
    out.write_all(CKPT_MAGIC)?;
    out.write_all(&CKPT_VERSION.to_le_bytes())?;
    let id = model.model_id().as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| Error::Format("model id too long".into()))?;
    out.write_all(&id_len.to_le_bytes())?;
    out.write_all(id)?;
    let cfg = model.config_ints();
    out.write_all(&(cfg.len() as u16).to_le_bytes())?;
    for v in &cfg {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&(model.params().len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(model.params().len() * 8);
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn write_checkpoint_file<P: AsRef<Path>>(path: P, model: &dyn Model) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), model)
}

/// Reads a checkpoint and binds the weights to an `height x width` grid.
pub fn read_checkpoint<R: Read>(mut input: R, height: usize, width: usize) -> Result<Box<dyn Model>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format("bad CKPT magic".into()));
    }
    let version = read_u16(&mut input)?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported CKPT version {version}")));
    }
    let id_len = read_u16(&mut input)? as usize;
    let mut id_bytes = vec![0u8; id_len];
    input.read_exact(&mut id_bytes)?;
    let id = String::from_utf8(id_bytes).map_err(|_| Error::Format("model id not UTF-8".into()))?;
    let n_cfg = read_u16(&mut input)? as usize;
    let mut cfg = Vec::with_capacity(n_cfg);
    for _ in 0..n_cfg {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        cfg.push(u32::from_le_bytes(b));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let n_params = u64::from_le_bytes(b8) as usize;
    let mut raw = vec![0u8; n_params * 8];
    input.read_exact(&mut raw)?;
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut model: Box<dyn Model> = if id.starts_with("distana") {
        let [m] = cfg.as_slice() else {
            return Err(Error::Format("distana checkpoint needs 1 config int".into()));
        };
        Box::new(distana::Distana::new(
            distana::PkConfig::new(*m as usize),
            height,
            width,
            0,
        )?)
    } else if id.starts_with("convlstm") {
        let hidden: Vec<usize> = cfg.iter().map(|&v| v as usize).collect();
        Box::new(convlstm::ConvLstm::new(
            convlstm::ConvLstmConfig::new(hidden),
            height,
            width,
            0,
        )?)
    } else if id.starts_with("tcn") {
        let [mid] = cfg.as_slice() else {
            return Err(Error::Format("tcn checkpoint needs 1 config int".into()));
        };
        Box::new(tcn::Tcn::new(tcn::TcnConfig::new(*mid as usize), height, width, 0)?)
    } else {
        return Err(Error::Format(format!("unknown model family in id `{id}`")));
    };

    if model.model_id() != id {
        return Err(Error::Format(format!(
            "checkpoint id `{id}` does not match config-derived id `{}`",
            model.model_id()
        )));
    }
    if model.params().len() != params.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} parameters, model `{id}` needs {}",
            params.len(),
            model.params().len()
        )));
    }
    model.params_mut().copy_from_slice(&params);
    Ok(model)
}

pub fn read_checkpoint_file<P: AsRef<Path>>(
    path: P,
    height: usize,
    width: usize,
) -> Result<Box<dyn Model>> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file), height, width)
}

fn read_u16<R: Read>(input: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    input.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    #[test]
    fn roundtrip_every_model_family() {
        for kind in ModelKind::ALL {
            let model = kind.build(5, 4, 31).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, model.as_ref()).unwrap();
            let back = read_checkpoint(&buf[..], 5, 4).unwrap();
            assert_eq!(back.model_id(), model.model_id());
            assert_eq!(back.params(), model.params());
            assert_eq!(back.config_ints(), model.config_ints());
        }
    }

    #[test]
    fn header_is_bit_exact() {
        let model = ModelKind::Distana4.build(2, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, model.as_ref()).unwrap();
        assert_eq!(&buf[0..4], b"CKPT");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..8], &8u16.to_le_bytes()); // "distana4"
        assert_eq!(&buf[8..16], b"distana4");
        assert_eq!(&buf[16..18], &1u16.to_le_bytes());
        assert_eq!(&buf[18..22], &4u32.to_le_bytes());
        assert_eq!(&buf[22..30], &200u64.to_le_bytes());
        assert_eq!(buf.len(), 30 + 200 * 8);
    }

    #[test]
    fn grid_rebinding_is_allowed() {
        let model = ModelKind::Distana4.build(16, 16, 9).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, model.as_ref()).unwrap();
        let back = read_checkpoint(&buf[..], 8, 8).unwrap();
        assert_eq!(back.grid(), (8, 8));
        assert_eq!(back.params(), model.params());
    }

    #[test]
    fn corrupted_containers_are_rejected() {
        let model = ModelKind::Tcn121.build(4, 4, 2).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, model.as_ref()).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_checkpoint(&bad_magic[..], 4, 4).is_err());
        let mut truncated = buf.clone();
        truncated.truncate(buf.len() - 9);
        assert!(read_checkpoint(&truncated[..], 4, 4).is_err());
        let mut wrong_id = buf;
        wrong_id[8] = b'x'; // "xcn121" is no family
        assert!(read_checkpoint(&wrong_id[..], 4, 4).is_err());
    }
}
