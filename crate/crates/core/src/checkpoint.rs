//! Binary checkpoints.
//!
//! Layout: the magic `HESSCKPT`, a little-endian `u32` version and section
//! count, then per section a 4-byte tag, a `u64` payload length, the payload
//! and its SHA-256. Floats are stored as raw little-endian bits.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};
use crate::evolution::{DiagRow, Diagnostics, EvolutionOptions, EvolutionState, SourceSpec, StateField};
use crate::grid::{BoundaryCondition, Field2D, Grid2D};
use crate::spectral::SpectralField;
use crate::variational::{NehariClass, NehariTag};

pub const MAGIC: &[u8; 8] = b"HESSCKPT";
pub const VERSION: u32 = 1;

pub type Section = ([u8; 4], Vec<u8>);

pub fn write_container(sections: &[Section]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (tag, payload) in sections {
        out.extend_from_slice(tag);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
        out.extend_from_slice(&Sha256::digest(payload));
    }
    out
}

pub fn read_container(bytes: &[u8], path: &Path) -> Result<Vec<Section>> {
    let fail = |reason: String| LabError::Checkpoint { path: path.to_path_buf(), reason };
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(8).map_err(|_| fail("shorter than the header".into()))?;
    if magic != MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = r.u32().map_err(|_| fail("truncated header".into()))?;
    if version != VERSION {
        return Err(fail(format!("version {version}, expected {VERSION}")));
    }
    let count = r.u32().map_err(|_| fail("truncated header".into()))?;
    let mut out = Vec::with_capacity(count as usize);
    for k in 0..count {
        let trunc = |_| fail(format!("truncated in section {k}"));
        let tag: [u8; 4] = r.take(4).map_err(trunc)?.try_into().unwrap();
        let len = r.u64().map_err(trunc)? as usize;
        let payload = r.take(len).map_err(trunc)?.to_vec();
        let sum = r.take(32).map_err(trunc)?;
        if Sha256::digest(&payload).as_slice() != sum {
            return Err(fail(format!("checksum mismatch in section {}", String::from_utf8_lossy(&tag))));
        }
        out.push((tag, payload));
    }
    if r.pos != bytes.len() {
        return Err(fail("trailing bytes after the last section".into()));
    }
    Ok(out)
}

/// Writes through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A resumable run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Rendered configuration of the run that wrote it.
    pub config: String,
    pub label: String,
    pub source: SourceSpec,
    pub opts: EvolutionOptions,
    pub state: EvolutionState,
    pub diag: Diagnostics,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut stat = Writer::default();
        let s = &self.state;
        for v in [s.t, s.dt, s.lambda, s.cum_grad] {
            stat.f64(v);
        }
        stat.u64(s.steps);
        stat.u64(s.quiet_run);
        for v in s.initial {
            stat.f64(v);
        }
        let mut field = Writer::default();
        field.state_field(&s.u);
        let mut hist = Writer::default();
        hist.u64(s.history.len() as u64);
        for h in &s.history {
            hist.state_field(h);
        }
        let mut diag = Writer::default();
        diag.u8(self.diag.collapsed as u8);
        diag.f64(self.diag.h);
        diag.u64(self.diag.rows.len() as u64);
        for r in &self.diag.rows {
            diag.row(r);
        }
        Ok(write_container(&[
            (*b"CONF", self.config.as_bytes().to_vec()),
            (*b"LABL", self.label.as_bytes().to_vec()),
            (*b"SRCE", self.source.to_string().into_bytes()),
            (*b"OPTS", serde_json::to_vec(&self.opts)?),
            (*b"STAT", stat.0),
            (*b"FELD", field.0),
            (*b"HIST", hist.0),
            (*b"DIAG", diag.0),
        ]))
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |reason: String| LabError::Checkpoint { path: path.to_path_buf(), reason };
        let sections = read_container(bytes, path)?;
        let get = |tag: &[u8; 4]| {
            sections
                .iter()
                .find(|(t, _)| t == tag)
                .map(|(_, p)| p.as_slice())
                .ok_or_else(|| fail(format!("missing section {}", String::from_utf8_lossy(tag))))
        };
        let text = |tag: &[u8; 4]| -> Result<String> {
            String::from_utf8(get(tag)?.to_vec()).map_err(|_| fail("section is not UTF-8".into()))
        };
        let config = text(b"CONF")?;
        let label = text(b"LABL")?;
        let source: SourceSpec = text(b"SRCE")?.parse().map_err(fail)?;
        let opts: EvolutionOptions = serde_json::from_slice(get(b"OPTS")?)?;
        let bad = |what: &str| fail(format!("malformed {what} section"));
        let mut r = Reader::new(get(b"STAT")?);
        let (t, dt, lambda, cum_grad) = (r.f64(), r.f64(), r.f64(), r.f64());
        let (steps, quiet_run) = (r.u64(), r.u64());
        let initial = [r.f64(), r.f64(), r.f64()];
        let (Ok(t), Ok(dt), Ok(lambda), Ok(cum_grad), Ok(steps), Ok(quiet_run), [Ok(i0), Ok(i1), Ok(i2)]) =
            (t, dt, lambda, cum_grad, steps, quiet_run, initial)
        else {
            return Err(bad("STAT"));
        };
        r.finish().map_err(|_| bad("STAT"))?;
        let mut r = Reader::new(get(b"FELD")?);
        let u = r.state_field().map_err(|_| bad("FELD"))?;
        r.finish().map_err(|_| bad("FELD"))?;
        let mut r = Reader::new(get(b"HIST")?);
        let count = r.u64().map_err(|_| bad("HIST"))?;
        let history = (0..count).map(|_| r.state_field()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad("HIST"))?;
        r.finish().map_err(|_| bad("HIST"))?;
        let mut r = Reader::new(get(b"DIAG")?);
        let diag = (|| -> std::result::Result<Diagnostics, ()> {
            let collapsed = r.u8()? != 0;
            let h = r.f64()?;
            let n = r.u64()?;
            let rows = (0..n).map(|_| r.row()).collect::<std::result::Result<Vec<_>, _>>()?;
            r.finish()?;
            Ok(Diagnostics { rows, collapsed, h })
        })()
        .map_err(|_| bad("DIAG"))?;
        Ok(Self {
            config,
            label,
            source,
            opts,
            state: EvolutionState { t, dt, u, lambda, steps, cum_grad, quiet_run, initial: [i0, i1, i2], history },
            diag,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?, path)
    }
}

/// Single-field file in the checkpoint container.
pub fn save_field(path: &Path, u: &Field2D) -> Result<()> {
    let mut w = Writer::default();
    w.state_field(&StateField::Grid(u.clone()));
    write_atomic(path, &write_container(&[(*b"FELD", w.0)]))
}

pub fn load_field(path: &Path) -> Result<Field2D> {
    let bytes = fs::read(path)?;
    let sections = read_container(&bytes, path)?;
    let fail = |reason: &str| LabError::Checkpoint { path: path.to_path_buf(), reason: reason.into() };
    let (_, payload) = sections.iter().find(|(t, _)| t == b"FELD").ok_or_else(|| fail("missing section FELD"))?;
    let mut r = Reader::new(payload);
    match r.state_field() {
        Ok(StateField::Grid(f)) if r.finish().is_ok() => Ok(f),
        _ => Err(fail("malformed FELD section")),
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    fn state_field(&mut self, s: &StateField) {
        match s {
            StateField::Grid(f) => {
                self.u8(0);
                self.u64(f.n() as u64);
                self.u8(match f.grid().bc() {
                    BoundaryCondition::Dirichlet => 0,
                    BoundaryCondition::Navier => 1,
                });
                self.f64s(f.values());
            }
            StateField::Spectral(c) => {
                self.u8(1);
                self.u64(c.modes() as u64);
                self.f64s(c.coeffs());
            }
        }
    }

    fn row(&mut self, r: &DiagRow) {
        for v in [r.t, r.dt, r.l2, r.h2, r.energy, r.i, r.w14_4] {
            self.f64(v);
        }
        self.u8(match r.nehari.tag {
            NehariTag::Zero => 0,
            NehariTag::NPlus => 1,
            NehariTag::OnN => 2,
            NehariTag::NMinus => 3,
        });
        self.f64(r.nehari.margin);
        for v in [r.ut_l2, r.cum_grad, r.linf, r.bilap_l2, r.source_l2] {
            self.f64(v);
        }
        self.f64s(&r.lag_dist_sq);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

type R<T> = std::result::Result<T, ()>;

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, k: usize) -> R<&'a [u8]> {
        let end = self.pos.checked_add(k).ok_or(())?;
        let s = self.buf.get(self.pos..end).ok_or(())?;
        self.pos = end;
        Ok(s)
    }

    fn finish(&self) -> R<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(())
        }
    }

    fn u8(&mut self) -> R<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> R<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> R<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> R<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> R<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(());
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn state_field(&mut self) -> R<StateField> {
        match self.u8()? {
            0 => {
                let n = self.u64()? as usize;
                let bc = match self.u8()? {
                    0 => BoundaryCondition::Dirichlet,
                    1 => BoundaryCondition::Navier,
                    _ => return Err(()),
                };
                let grid = Grid2D::new(n, bc).map_err(|_| ())?;
                let values = self.f64s()?;
                Ok(StateField::Grid(Field2D::from_values(grid, values).map_err(|_| ())?))
            }
            1 => {
                let modes = self.u64()? as usize;
                let coeffs = self.f64s()?;
                Ok(StateField::Spectral(SpectralField::from_coeffs(modes, coeffs).map_err(|_| ())?))
            }
            _ => Err(()),
        }
    }

    fn row(&mut self) -> R<DiagRow> {
        let (t, dt, l2, h2, energy, i, w14_4) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        let tag = match self.u8()? {
            0 => NehariTag::Zero,
            1 => NehariTag::NPlus,
            2 => NehariTag::OnN,
            3 => NehariTag::NMinus,
            _ => return Err(()),
        };
        let margin = self.f64()?;
        let (ut_l2, cum_grad, linf, bilap_l2, source_l2) = (self.f64()?, self.f64()?, self.f64()?, self.f64()?, self.f64()?);
        let lag_dist_sq = self.f64s()?;
        Ok(DiagRow {
            t,
            dt,
            l2,
            h2,
            energy,
            i,
            w14_4,
            nehari: NehariClass { tag, margin },
            ut_l2,
            cum_grad,
            linf,
            bilap_l2,
            source_l2,
            lag_dist_sq,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_rejects_damage() {
        let p = Path::new("mem");
        let bytes = write_container(&[(*b"ABCD", vec![1, 2, 3]), (*b"EFGH", vec![])]);
        assert_eq!(read_container(&bytes, p).unwrap().len(), 2);
        for cut in [0, 7, 12, 20, bytes.len() - 1] {
            assert!(read_container(&bytes[..cut], p).is_err(), "cut {cut}");
        }
        let mut flipped = bytes.clone();
        flipped[28] ^= 1;
        assert!(read_container(&flipped, p).is_err());
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(matches!(read_container(&ver, p), Err(LabError::Checkpoint { reason, .. }) if reason.contains("version")));
    }
}
