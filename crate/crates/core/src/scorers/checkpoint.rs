//! Binary model checkpoints: a fixed header followed by dense little-endian
//! f64 parameter blocks. Round trips are bit-exact; the derived graph
//! encoder is not serialized (it is rebuilt from the train split on load).

use super::mlp::{Dense, MlpParams};
use super::{MarginParams, ModelKind, ModelState};
use crate::error::DataError;
use crate::matrix::Matrix;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"UIBCKPT1";

const FLAG_MARGINS: u8 = 1;
const FLAG_BOUNDARY: u8 = 2;

fn kind_code(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Mf => 0,
        ModelKind::Mlp => 1,
        ModelKind::Metric => 2,
        ModelKind::Gcn => 3,
    }
}

fn kind_from_code(code: u8) -> Option<ModelKind> {
    match code {
        0 => Some(ModelKind::Mf),
        1 => Some(ModelKind::Mlp),
        2 => Some(ModelKind::Metric),
        3 => Some(ModelKind::Gcn),
        _ => None,
    }
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    for &x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> std::io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl ModelState {
    pub fn save_to(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut w = BufWriter::new(f);
        (|| -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_all(&[kind_code(self.kind)])?;
            let mut flags = 0u8;
            if self.margins.is_some() {
                flags |= FLAG_MARGINS;
            }
            if self.boundary_active {
                flags |= FLAG_BOUNDARY;
            }
            w.write_all(&[flags])?;
            w.write_all(&(self.d as u32).to_le_bytes())?;
            w.write_all(&(self.k_layers as u32).to_le_bytes())?;
            w.write_all(&(self.user_count() as u64).to_le_bytes())?;
            w.write_all(&(self.item_count() as u64).to_le_bytes())?;
            w.write_all(&self.seed.to_le_bytes())?;
            write_f64s(&mut w, self.p.as_slice())?;
            write_f64s(&mut w, self.q.as_slice())?;
            write_f64s(&mut w, &self.w)?;
            if let Some(mlp) = &self.mlp {
                w.write_all(&(mlp.layers.len() as u32).to_le_bytes())?;
                for layer in &mlp.layers {
                    w.write_all(&(layer.w.rows() as u32).to_le_bytes())?;
                    w.write_all(&(layer.w.cols() as u32).to_le_bytes())?;
                    write_f64s(&mut w, layer.w.as_slice())?;
                    write_f64s(&mut w, &layer.b)?;
                }
            }
            if let Some(m) = &self.margins {
                write_f64s(&mut w, &m.m)?;
                write_f64s(&mut w, &m.n)?;
                write_f64s(&mut w, &[m.max])?;
            }
            w.flush()
        })()
        .map_err(|e| DataError::io(path, e))
    }

    /// Load a checkpoint. GCN states come back without their graph encoder;
    /// call [`ModelState::ensure_graph`] with the train split before scoring.
    pub fn load_from(path: &Path) -> Result<ModelState, DataError> {
        let bad = |msg: String| DataError::BadCheckpoint { path: path.into(), msg };
        let f = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
        let mut r = BufReader::new(f);
        let ioe = |e: std::io::Error| DataError::io(path, e);

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(ioe)?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let mut b = [0u8; 2];
        r.read_exact(&mut b).map_err(ioe)?;
        let kind = kind_from_code(b[0]).ok_or_else(|| bad(format!("unknown kind {}", b[0])))?;
        let flags = b[1];
        let d = read_u32(&mut r).map_err(ioe)? as usize;
        let k_layers = read_u32(&mut r).map_err(ioe)? as usize;
        let user_count = read_u64(&mut r).map_err(ioe)? as usize;
        let item_count = read_u64(&mut r).map_err(ioe)? as usize;
        let seed = read_u64(&mut r).map_err(ioe)?;
        if d == 0 || user_count == 0 || item_count == 0 {
            return Err(bad("degenerate shape in header".into()));
        }

        let p = Matrix::from_vec(user_count, d, read_f64s(&mut r, user_count * d).map_err(ioe)?);
        let q = Matrix::from_vec(item_count, d, read_f64s(&mut r, item_count * d).map_err(ioe)?);
        let w = read_f64s(&mut r, d).map_err(ioe)?;
        let mlp = if kind == ModelKind::Mlp {
            let n_layers = read_u32(&mut r).map_err(ioe)? as usize;
            if n_layers == 0 || n_layers > 64 {
                return Err(bad(format!("implausible layer count {n_layers}")));
            }
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let rows = read_u32(&mut r).map_err(ioe)? as usize;
                let cols = read_u32(&mut r).map_err(ioe)? as usize;
                let wm = Matrix::from_vec(rows, cols, read_f64s(&mut r, rows * cols).map_err(ioe)?);
                let bv = read_f64s(&mut r, rows).map_err(ioe)?;
                layers.push(Dense { w: wm, b: bv });
            }
            Some(MlpParams { layers })
        } else {
            None
        };
        let margins = if flags & FLAG_MARGINS != 0 {
            let m = read_f64s(&mut r, user_count).map_err(ioe)?;
            let n = read_f64s(&mut r, user_count).map_err(ioe)?;
            let max = read_f64s(&mut r, 1).map_err(ioe)?[0];
            Some(MarginParams { m, n, max })
        } else {
            None
        };
        let mut trailing = [0u8; 1];
        match r.read(&mut trailing).map_err(ioe)? {
            0 => {}
            _ => return Err(bad("trailing bytes after parameter blocks".into())),
        }
        Ok(ModelState {
            kind,
            d,
            k_layers,
            seed,
            p,
            q,
            w,
            boundary_active: flags & FLAG_BOUNDARY != 0,
            mlp,
            margins,
            graph: None,
        })
    }
}
