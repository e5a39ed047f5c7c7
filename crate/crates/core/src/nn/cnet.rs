//! `CNET` model files.
//!
//! Layout (little endian): magic `CNET`, `u32` version, `u32` tensor count,
//! then per tensor a `u16` name length, the UTF-8 name, a `u8` rank, `u32`
//! dims and `f32` values. A footer follows: `u8` path count, one `u8`
//! representation code per path, `f32` dropout rate and the `u32` input
//! height and width.

use std::path::Path;

use super::model::Model;
use super::tensor::Tensor;
use crate::chip::{ReprSet, Representation};
use crate::error::{AtrError, Result};
use crate::io::{read_file, write_atomic};

const MAGIC: &[u8; 4] = b"CNET";
const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| AtrError::format("CNET file", format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Model<f32> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params().len() as u32).to_le_bytes());
        for (name, t) in self.names().iter().zip(self.params()) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims().len() as u8);
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.push(self.reprs().len() as u8);
        out.extend(self.reprs().as_slice().iter().map(|r| r.code()));
        out.extend_from_slice(&(self.dropout_rate() as f32).to_le_bytes());
        out.extend_from_slice(&(self.input_hw().0 as u32).to_le_bytes());
        out.extend_from_slice(&(self.input_hw().1 as u32).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(AtrError::format("CNET file", "missing CNET magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(AtrError::format("CNET file", format!("unsupported version {version}")));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| AtrError::format("CNET file", "tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u8()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| AtrError::format("CNET file", "tensor too large"))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let t = Tensor::new(dims, data).map_err(|e| AtrError::format("CNET file", format!("{name}: {e}")))?;
            tensors.push((name, t));
        }
        let n_paths = r.u8()? as usize;
        let codes = (0..n_paths)
            .map(|_| r.u8().and_then(Representation::from_code))
            .collect::<Result<Vec<_>>>()?;
        let dropout = r.f32()? as f64;
        let input_hw = (r.u32()? as usize, r.u32()? as usize);
        if r.pos != bytes.len() {
            return Err(AtrError::format("CNET file", format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let reprs = ReprSet::new(codes)?;
        let expected = super::model::layout(&reprs, input_hw)?;
        for ((want, _), (got, _)) in expected.iter().zip(&tensors) {
            if want != got {
                return Err(AtrError::format("CNET file", format!("expected tensor {want}, found {got}")));
            }
        }
        let params = tensors.into_iter().map(|(_, t)| t).collect();
        Model::from_parts(reprs, input_hw, dropout, params).map_err(|e| AtrError::format("CNET file", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn round_trip_is_bit_exact(mask in 1u8..8, seed in any::<u64>(), drop in 0.0f64..0.95, hw in 16usize..40) {
            let reprs = ReprSet::new(
                [Representation::Magnitude, Representation::Phase, Representation::Psd]
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, r)| r),
            ).unwrap();
            let mut m = Model::<f32>::build(&reprs, (hw, hw + 3), drop as f32 as f64, seed).unwrap();
            // perturb biases too so zeros are not the only values tested
            let mut rng = SplitMix64::new(seed);
            for t in m.params_mut() {
                for v in t.data_mut() {
                    *v += rng.uniform_in(-1e-3, 1e-3) as f32;
                }
            }
            let bytes = m.to_bytes();
            let back = Model::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            for (a, b) in back.params().iter().zip(m.params()) {
                prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert_eq!(back.reprs(), m.reprs());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = Model::<f32>::build(&ReprSet::single(Representation::Magnitude), (16, 16), 0.5, 1).unwrap();
        let bytes = m.to_bytes();
        assert!(Model::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Model::from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Model::from_bytes(&bad).is_err());
        let mut nan = bytes;
        // first value of the first tensor
        let off = 4 + 4 + 4 + 2 + "mag.conv1.kernel".len() + 1 + 16;
        nan[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(Model::from_bytes(&nan).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.cnet");
        let m = Model::<f32>::build(&ReprSet::single(Representation::Psd), (64, 64), 0.75, 2).unwrap();
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap(), m);
    }
}
