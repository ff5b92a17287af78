use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::agent::DqnNetwork;
use crate::branch::AttentionBranch;
use crate::error::{Error, Result};
use crate::nn::{Parameterized, Tensor};

const MAGIC: &[u8; 8] = b"NAVATTN\0";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_FROZEN: u32 = 1;
pub const TRUNK_PREFIX: &str = "dqn.";
pub const BRANCH_PREFIX: &str = "branch.";

/// Named parameter tensors plus the trunk's frozen flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub frozen: bool,
    pub params: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn from_models(trunk: &DqnNetwork<f32>, branch: Option<&AttentionBranch<f32>>) -> Self {
        let mut params: Vec<(String, Tensor<f32>)> = trunk
            .named_params()
            .into_iter()
            .map(|(n, t)| (format!("{TRUNK_PREFIX}{n}"), t.clone()))
            .collect();
        if let Some(b) = branch {
            params.extend(
                b.named_params()
                    .into_iter()
                    .map(|(n, t)| (format!("{BRANCH_PREFIX}{n}"), t.clone())),
            );
        }
        Self {
            frozen: trunk.is_frozen(),
            params,
        }
    }

    pub fn has_branch(&self) -> bool {
        self.params.iter().any(|(n, _)| n.starts_with(BRANCH_PREFIX))
    }

    fn fill<M: Parameterized<f32>>(&self, model: &mut M, prefix: &str) -> Result<()> {
        let mut missing = Vec::new();
        for (name, dst) in model.named_params_mut() {
            let full = format!("{prefix}{name}");
            match self.params.iter().find(|(n, _)| *n == full) {
                Some((_, src)) if src.shape() == dst.shape() => dst.data_mut().copy_from_slice(src.data()),
                Some((_, src)) => {
                    return Err(Error::Checkpoint(format!(
                        "{full}: stored shape {:?}, model expects {:?}",
                        src.shape(),
                        dst.shape()
                    )))
                }
                None => missing.push(full),
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingParameters(missing))
        }
    }

    /// Rebuilds the trunk; the stored frozen flag is applied.
    pub fn trunk(&self) -> Result<DqnNetwork<f32>> {
        let mut net = DqnNetwork::zeroed();
        self.fill(&mut net, TRUNK_PREFIX)?;
        net.set_frozen(self.frozen);
        Ok(net)
    }

    pub fn branch(&self) -> Result<AttentionBranch<f32>> {
        let mut b = AttentionBranch::zeroed();
        self.fill(&mut b, BRANCH_PREFIX)?;
        Ok(b)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(if self.frozen { FLAG_FROZEN } else { 0 }).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for (_, t) in &self.params {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 {
            return Err(Error::ChecksumMismatch);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::ChecksumMismatch);
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unknown format version {version}")));
        }
        let flags = r.u32()?;
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            manifest.push((name, shape));
        }
        let mut params = Vec::with_capacity(count);
        for (name, shape) in manifest {
            let n: usize = shape.iter().product();
            let data = r
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::from_vec(&shape, data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            params.push((name, t));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after payload".into()));
        }
        Ok(Self {
            frozen: flags & FLAG_FROZEN != 0,
            params,
        })
    }

    /// Writes to a temporary file in the target directory, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("payload shorter than manifest".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Atomic whole-file write.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// SHA-256 over names, shapes and little-endian values, as lowercase hex.
pub fn params_digest<M: Parameterized<f32>>(model: &M) -> String {
    let mut h = Sha256::new();
    for (name, t) in model.named_params() {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u32).to_le_bytes());
        }
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn trunk() -> DqnNetwork<f32> {
        DqnNetwork::new(&mut rng::stream(5, "init.dqn"))
    }

    #[test]
    fn bytes_round_trip() {
        let mut net = trunk();
        net.freeze();
        let ck = Checkpoint::from_models(&net, None);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let restored = back.trunk().unwrap();
        assert!(restored.is_frozen());
        assert_eq!(params_digest(&restored), params_digest(&net));
    }

    #[test]
    fn truncation_fails_checksum() {
        let bytes = Checkpoint::from_models(&trunk(), None).to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 100]),
            Err(Error::ChecksumMismatch)
        ));
    }

    #[test]
    fn trunk_only_checkpoint_lacks_branch() {
        let ck = Checkpoint::from_models(&trunk(), None);
        match ck.branch() {
            Err(Error::MissingParameters(names)) => {
                assert!(names.contains(&"branch.conv.weight".to_string()));
                assert!(names.iter().all(|n| n.starts_with("branch.")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
