//! Versioned little-endian binary containers: `SNB1` datasets, `SNM1`
//! models, `SNC1` correction matrices. Tensors and parameters are stored as
//! f32 (compute stays f64); the correction matrix keeps full f64 so its
//! idempotence survives the round trip. Readers reject unknown magics and
//! newer major versions, and report truncation as such rather than crashing.

use smallnet::evaluation::{Dataset, Example, ExampleOrigin};
use smallnet::features::{GRID_COLS, GRID_ROWS, N_BINS};
use smallnet::ica::CorrectionMatrix;
use smallnet::network::{ArchVariant, Architecture, ModelParams};
use smallnet::signal::N_EEG_CHANNELS;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected}")]
    BadMagic { found: [u8; 4], expected: &'static str },
    #[error("unsupported major version {found} (reader supports <= {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },
    #[error("truncated file: needed {needed} more byte(s) for {what}")]
    Truncated { what: &'static str, needed: usize },
    #[error("corrupt file: {0}")]
    Corrupt(String),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(FormatError::Truncated {
                what,
                needed: self.pos + n - self.buf.len(),
            });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize, what: &'static str) -> Result<Vec<f32>, FormatError> {
        let bytes = self.take(n * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn expect_end(&self) -> Result<(), FormatError> {
        if self.pos != self.buf.len() {
            return Err(FormatError::Corrupt(format!(
                "{} trailing byte(s)",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn check_header(r: &mut Reader<'_>, magic: &'static str) -> Result<(), FormatError> {
    let found: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if found != magic.as_bytes() {
        return Err(FormatError::BadMagic {
            found,
            expected: magic,
        });
    }
    let major = r.u16("major version")?;
    let _minor = r.u16("minor version")?;
    if major > FORMAT_MAJOR {
        return Err(FormatError::UnsupportedVersion {
            found: major,
            supported: FORMAT_MAJOR,
        });
    }
    Ok(())
}

fn write_header(out: &mut Vec<u8>, magic: &str) {
    out.extend_from_slice(magic.as_bytes());
    out.extend_from_slice(&FORMAT_MAJOR.to_le_bytes());
    out.extend_from_slice(&FORMAT_MINOR.to_le_bytes());
}

// -- SNB1: dataset ----------------------------------------------------------

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), FormatError> {
    let dims = (N_BINS, GRID_ROWS, GRID_COLS);
    let record_len = dims.0 * dims.1 * dims.2;
    let mut out = Vec::with_capacity(32 + dataset.len() * (10 + record_len * 4));
    write_header(&mut out, "SNB1");
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    for d in [dims.0, dims.1, dims.2] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(dataset.task_names.len() as u16).to_le_bytes());
    for name in &dataset.task_names {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    for e in &dataset.examples {
        if e.values.len() != record_len {
            return Err(FormatError::Corrupt(format!(
                "example has {} values, dims say {record_len}",
                e.values.len()
            )));
        }
        out.push(e.label);
        out.push(e.origin.as_u8());
        out.extend_from_slice(&e.timestamp_s.to_le_bytes());
        for v in &e.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    atomic_write(path, &out)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, FormatError> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    check_header(&mut r, "SNB1")?;
    let count = r.u64("example count")? as usize;
    let d0 = r.u32("dim 0")? as usize;
    let d1 = r.u32("dim 1")? as usize;
    let d2 = r.u32("dim 2")? as usize;
    if (d0, d1, d2) != (N_BINS, GRID_ROWS, GRID_COLS) {
        return Err(FormatError::Corrupt(format!(
            "dims ({d0},{d1},{d2}) do not match ({N_BINS},{GRID_ROWS},{GRID_COLS})"
        )));
    }
    let n_tasks = r.u16("task count")? as usize;
    let mut task_names = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let len = r.u16("task name length")? as usize;
        let bytes = r.take(len, "task name")?;
        task_names.push(
            String::from_utf8(bytes.to_vec())
                .map_err(|_| FormatError::Corrupt("task name not UTF-8".into()))?,
        );
    }
    let record_len = d0 * d1 * d2;
    let mut examples = Vec::with_capacity(count);
    for _ in 0..count {
        let label = r.u8("label")?;
        let origin = r.u8("origin")?;
        let origin = ExampleOrigin::from_u8(origin)
            .ok_or_else(|| FormatError::Corrupt(format!("bad origin byte {origin}")))?;
        let timestamp_s = r.f64("timestamp")?;
        let values = r.f32_vec(record_len, "tensor values")?;
        examples.push(Example {
            values,
            label,
            timestamp_s,
            origin,
        });
    }
    r.expect_end()?;
    Ok(Dataset {
        examples,
        task_names,
    })
}

// -- SNM1: model --------------------------------------------------------------

fn variant_id(v: ArchVariant) -> u8 {
    match v {
        ArchVariant::SmallNet => 0,
        ArchVariant::SmallNetPlus1Cl => 1,
        ArchVariant::SmallNetPlus1Fc => 2,
        ArchVariant::SmallNet3d => 3,
    }
}

fn variant_from_id(id: u8) -> Option<ArchVariant> {
    match id {
        0 => Some(ArchVariant::SmallNet),
        1 => Some(ArchVariant::SmallNetPlus1Cl),
        2 => Some(ArchVariant::SmallNetPlus1Fc),
        3 => Some(ArchVariant::SmallNet3d),
        _ => None,
    }
}

pub fn save_model(
    params: &ModelParams,
    correction: &CorrectionMatrix,
    path: &Path,
) -> Result<(), FormatError> {
    let arch = &params.arch;
    let mut out = Vec::new();
    write_header(&mut out, "SNM1");
    out.push(variant_id(arch.variant));
    for d in [arch.input_shape.0, arch.input_shape.1, arch.input_shape.2] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for d in [
        arch.conv_maps,
        arch.conv_kernel.0,
        arch.conv_kernel.1,
        arch.conv3d_maps,
        arch.conv3d_kernel.0,
        arch.conv3d_kernel.1,
        arch.conv3d_kernel.2,
        arch.fc_width,
        arch.n_classes,
    ] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.push(arch.input_norm as u8);
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.flat() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let c = correction.matrix();
    out.extend_from_slice(&(c.nrows() as u32).to_le_bytes());
    for v in c.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &out)
}

pub fn load_model(path: &Path) -> Result<(ModelParams, CorrectionMatrix), FormatError> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    check_header(&mut r, "SNM1")?;
    let variant = variant_from_id(r.u8("variant id")?)
        .ok_or_else(|| FormatError::Corrupt("unknown architecture variant id".into()))?;
    let mut arch = Architecture::new(variant);
    arch.input_shape = (
        r.u32("input dim 0")? as usize,
        r.u32("input dim 1")? as usize,
        r.u32("input dim 2")? as usize,
    );
    arch.conv_maps = r.u32("conv maps")? as usize;
    arch.conv_kernel = (r.u32("conv kh")? as usize, r.u32("conv kw")? as usize);
    arch.conv3d_maps = r.u32("conv3d maps")? as usize;
    arch.conv3d_kernel = (
        r.u32("conv3d kd")? as usize,
        r.u32("conv3d kh")? as usize,
        r.u32("conv3d kw")? as usize,
    );
    arch.fc_width = r.u32("fc width")? as usize;
    arch.n_classes = r.u32("n classes")? as usize;
    arch.input_norm = r.u8("input norm flag")? != 0;
    let seed = r.u64("init seed")?;
    let count = r.u64("param count")? as usize;
    if count != arch.param_count() {
        return Err(FormatError::Corrupt(format!(
            "param count {count} does not match geometry ({})",
            arch.param_count()
        )));
    }
    let flat: Vec<f64> = r
        .f32_vec(count, "parameters")?
        .into_iter()
        .map(|v| v as f64)
        .collect();
    let n = r.u32("correction size")? as usize;
    if n != N_EEG_CHANNELS {
        return Err(FormatError::Corrupt(format!(
            "correction matrix is {n}×{n}, expected {N_EEG_CHANNELS}"
        )));
    }
    let mut c = ndarray::Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            c[[i, j]] = r.f64("correction entry")?;
        }
    }
    r.expect_end()?;
    let params = ModelParams::from_flat(arch, flat, seed)
        .map_err(|e| FormatError::Corrupt(e.to_string()))?;
    Ok((params, CorrectionMatrix::from_matrix(c)))
}

// -- SNC1: correction matrix --------------------------------------------------

pub fn save_correction(
    correction: &CorrectionMatrix,
    flagged: &[usize],
    path: &Path,
) -> Result<(), FormatError> {
    let c = correction.matrix();
    let mut out = Vec::with_capacity(16 + c.len() * 8);
    write_header(&mut out, "SNC1");
    out.extend_from_slice(&(c.nrows() as u32).to_le_bytes());
    for v in c.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(flagged.len() as u16).to_le_bytes());
    for &k in flagged {
        out.extend_from_slice(&(k as u16).to_le_bytes());
    }
    atomic_write(path, &out)
}

pub fn load_correction(path: &Path) -> Result<(CorrectionMatrix, Vec<usize>), FormatError> {
    let buf = std::fs::read(path)?;
    let mut r = Reader::new(&buf);
    check_header(&mut r, "SNC1")?;
    let n = r.u32("matrix size")? as usize;
    if n != N_EEG_CHANNELS {
        return Err(FormatError::Corrupt(format!(
            "correction matrix is {n}×{n}, expected {N_EEG_CHANNELS}"
        )));
    }
    let mut c = ndarray::Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            c[[i, j]] = r.f64("matrix entry")?;
        }
    }
    let n_flagged = r.u16("flag count")? as usize;
    let mut flagged = Vec::with_capacity(n_flagged);
    for _ in 0..n_flagged {
        flagged.push(r.u16("flagged index")? as usize);
    }
    r.expect_end()?;
    Ok((CorrectionMatrix::from_matrix(c), flagged))
}

/// Write via a temp file + rename so failures never leave partial artifacts.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads just enough to classify a file (used by error reporting).
pub fn sniff_magic(path: &Path) -> Result<[u8; 4], FormatError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    Ok(magic)
}
