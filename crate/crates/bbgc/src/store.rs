//! Binary sample store.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header   magic "BBGC" | version u32 | latent_dim u32 | embed_dim u32 | count u64 | seed u64
//! record   latent f32 x L | embedding f32 x D | image_ref_len u32 | image_ref bytes
//! ```
//!
//! Writers stream records into a temporary file whose header count is
//! [`UNFINISHED`], patch the count on [`StoreWriter::finish`] and atomically
//! rename the file into place. An interrupted write therefore never replaces
//! the target, and its temporary file reads back as truncated. The same
//! framing carries generator requests and responses over pipes and HTTP.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use bbgc_core::{normalize, LatentCode, Latents, Sample, SampleSet};
use tempfile::NamedTempFile;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"BBGC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
/// Header count of a store whose writer never finished.
pub const UNFINISHED: u64 = u64::MAX;
/// Allowed deviation from unit norm of a decoded 32-bit embedding.
pub const STORED_NORM_TOL: f64 = 1e-4;

const COUNT_OFFSET: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreHeader {
    pub version: u32,
    pub latent_dim: u32,
    pub embed_dim: u32,
    pub count: u64,
    pub seed: u64,
}

impl StoreHeader {
    pub fn new(latent_dim: usize, embed_dim: usize, count: u64, seed: u64) -> Result<Self> {
        let dim = |d: usize| {
            u32::try_from(d).map_err(|_| Error::format("store header", format!("dimension {d} does not fit in u32")))
        };
        Ok(Self { version: VERSION, latent_dim: dim(latent_dim)?, embed_dim: dim(embed_dim)?, count, seed })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim as usize
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim as usize
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&MAGIC);
        buf[4..8].copy_from_slice(&self.version.to_le_bytes());
        buf[8..12].copy_from_slice(&self.latent_dim.to_le_bytes());
        buf[12..16].copy_from_slice(&self.embed_dim.to_le_bytes());
        buf[16..24].copy_from_slice(&self.count.to_le_bytes());
        buf[24..32].copy_from_slice(&self.seed.to_le_bytes());
        w.write_all(&buf)
    }

    /// `Ok(None)` on a clean end of stream before the first byte.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>> {
        let mut buf = [0u8; HEADER_LEN];
        match read_full(r, &mut buf).map_err(|e| Error::io("<stream>", e))? {
            0 => return Ok(None),
            HEADER_LEN => {}
            n => return Err(Error::format("store header", format!("only {n} of {HEADER_LEN} bytes"))),
        }
        let found: [u8; 4] = buf[0..4].try_into().expect("4 bytes");
        if found != MAGIC {
            return Err(Error::BadMagic { found });
        }
        let u32_at = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().expect("4 bytes"));
        let u64_at = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
        let version = u32_at(4);
        if version != VERSION {
            return Err(Error::VersionMismatch { found: version, expected: VERSION });
        }
        Ok(Some(Self { version, latent_dim: u32_at(8), embed_dim: u32_at(12), count: u64_at(16), seed: u64_at(24) }))
    }
}

/// Reads until `buf` is full or the stream ends; returns the bytes read.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// A record exactly as stored, widened to 64 bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub latent: Vec<f64>,
    pub embedding: Vec<f64>,
    pub image_ref: Option<Vec<u8>>,
}

impl RawRecord {
    /// Validates the record and renormalizes the embedding in 64 bits.
    pub fn into_sample(self) -> Result<Sample> {
        let latent = LatentCode::new(self.latent)?;
        let norm = self.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(bbgc_core::Error::NonFinite.into());
        }
        if (norm - 1.0).abs() > STORED_NORM_TOL {
            return Err(bbgc_core::Error::NotUnitNorm { norm }.into());
        }
        let embedding = normalize(&self.embedding)?;
        Ok(Sample { latent, embedding, image_ref: self.image_ref })
    }
}

pub fn write_record<W: Write>(
    w: &mut W,
    latent: &[f64],
    embedding: &[f64],
    image_ref: Option<&[u8]>,
) -> io::Result<()> {
    let mut buf = Vec::with_capacity(4 * (latent.len() + embedding.len() + 1));
    for &x in latent.iter().chain(embedding) {
        buf.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let r = image_ref.unwrap_or_default();
    let len = u32::try_from(r.len()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "image_ref too long"))?;
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(r);
    w.write_all(&buf)
}

/// `Ok(None)` on a clean end of stream at a record boundary, an
/// `UnexpectedEof` error inside a record.
pub fn read_record<R: Read>(r: &mut R, header: &StoreHeader) -> io::Result<Option<RawRecord>> {
    let floats = header.latent_dim() + header.embed_dim();
    let mut buf = vec![0u8; 4 * floats + 4];
    match read_full(r, &mut buf)? {
        0 => return Ok(None),
        n if n < buf.len() => return Err(io::ErrorKind::UnexpectedEof.into()),
        _ => {}
    }
    let mut values = buf[..4 * floats]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect::<Vec<_>>();
    let embedding = values.split_off(header.latent_dim());
    let ref_len = u32::from_le_bytes(buf[4 * floats..].try_into().expect("4 bytes")) as usize;
    let image_ref = if ref_len == 0 {
        None
    } else {
        let mut bytes = vec![0u8; ref_len];
        r.read_exact(&mut bytes)?;
        Some(bytes)
    };
    Ok(Some(RawRecord { latent: values, embedding, image_ref }))
}

/// Streams records of a store without loading the whole file.
#[derive(Debug)]
pub struct StoreReader<R> {
    inner: R,
    header: StoreHeader,
    path: PathBuf,
    read: u64,
    done: bool,
}

impl StoreReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = Self::new(BufReader::new(file))?;
        reader.path = path.to_path_buf();
        Ok(reader)
    }
}

impl<R: Read> StoreReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let header = StoreHeader::read_from(&mut inner)?
            .ok_or_else(|| Error::format("store header", "empty stream"))?;
        Ok(Self { inner, header, path: PathBuf::from("<stream>"), read: 0, done: false })
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    /// Records read so far.
    pub fn position(&self) -> u64 {
        self.read
    }

    pub fn next_raw(&mut self) -> Result<Option<RawRecord>> {
        if self.done {
            return Ok(None);
        }
        if self.read == self.header.count {
            self.done = true;
            let mut rest = Vec::new();
            let extra = self.inner.read_to_end(&mut rest).map_err(|e| Error::io(&self.path, e))?;
            if extra > 0 {
                return Err(Error::TrailingData(extra as u64));
            }
            return Ok(None);
        }
        let truncated = Error::TruncatedStore { expected: self.header.count, complete: self.read };
        match read_record(&mut self.inner, &self.header) {
            Ok(Some(rec)) => {
                self.read += 1;
                Ok(Some(rec))
            }
            Ok(None) => {
                self.done = true;
                Err(truncated)
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                self.done = true;
                Err(truncated)
            }
            Err(e) => Err(Error::io(&self.path, e)),
        }
    }
}

impl<R: Read> Iterator for StoreReader<R> {
    type Item = Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_raw().transpose().map(|r| r.and_then(RawRecord::into_sample))
    }
}

/// Reads a whole store; any defect is an error.
pub fn read_store(path: impl AsRef<Path>) -> Result<(StoreHeader, SampleSet)> {
    let mut reader = StoreReader::open(path)?;
    let header = *reader.header();
    let mut set = SampleSet::new(header.latent_dim(), header.embed_dim());
    for s in &mut reader {
        set.push(s?)?;
    }
    Ok((header, set))
}

/// Result of reading a possibly damaged store.
#[derive(Debug)]
pub struct Recovered {
    pub header: StoreHeader,
    pub samples: SampleSet,
    /// The truncation that stopped reading, if any.
    pub truncation: Option<Error>,
}

/// Reads every complete record; truncation is reported instead of failing.
pub fn read_store_recovering(path: impl AsRef<Path>) -> Result<Recovered> {
    let mut reader = StoreReader::open(path)?;
    let header = *reader.header();
    let mut samples = SampleSet::new(header.latent_dim(), header.embed_dim());
    let mut truncation = None;
    for s in &mut reader {
        match s {
            Ok(s) => samples.push(s)?,
            Err(e @ Error::TruncatedStore { .. }) => truncation = Some(e),
            Err(e) => return Err(e),
        }
    }
    Ok(Recovered { header, samples, truncation })
}

/// Writes a store through a temporary file renamed into place on finish.
#[derive(Debug)]
pub struct StoreWriter {
    out: BufWriter<NamedTempFile>,
    target: PathBuf,
    header: StoreHeader,
    written: u64,
}

impl StoreWriter {
    pub fn create(path: impl AsRef<Path>, latent_dim: usize, embed_dim: usize, seed: u64) -> Result<Self> {
        let target = path.as_ref().to_path_buf();
        let dir = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let tmp = NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
        let header = StoreHeader::new(latent_dim, embed_dim, UNFINISHED, seed)?;
        let mut out = BufWriter::new(tmp);
        header.write_to(&mut out).map_err(|e| Error::io(&target, e))?;
        Ok(Self { out, target, header, written: 0 })
    }

    pub fn push(&mut self, sample: &Sample) -> Result<()> {
        self.push_parts(sample.latent.as_slice(), sample.embedding.as_slice(), sample.image_ref.as_deref())
    }

    pub fn push_parts(&mut self, latent: &[f64], embedding: &[f64], image_ref: Option<&[u8]>) -> Result<()> {
        if latent.len() != self.header.latent_dim() {
            return Err(bbgc_core::Error::DimensionMismatch { expected: self.header.latent_dim(), found: latent.len() }.into());
        }
        if embedding.len() != self.header.embed_dim() {
            return Err(bbgc_core::Error::DimensionMismatch { expected: self.header.embed_dim(), found: embedding.len() }.into());
        }
        write_record(&mut self.out, latent, embedding, image_ref).map_err(|e| Error::io(&self.target, e))?;
        self.written += 1;
        Ok(())
    }

    pub fn push_set(&mut self, set: &SampleSet) -> Result<()> {
        for i in 0..set.len() {
            self.push_parts(set.latents().row(i), set.embeddings().row(i), set.image_ref(i))?;
        }
        Ok(())
    }

    /// Patches the record count and moves the file into place.
    pub fn finish(self) -> Result<u64> {
        let target = self.target;
        let io_err = |e| Error::io(&target, e);
        let mut tmp = self.out.into_inner().map_err(|e| io_err(e.into_error()))?;
        tmp.seek(SeekFrom::Start(COUNT_OFFSET)).map_err(io_err)?;
        tmp.write_all(&self.written.to_le_bytes()).map_err(io_err)?;
        tmp.as_file().sync_all().map_err(io_err)?;
        tmp.persist(&target).map_err(|e| io_err(e.error))?;
        Ok(self.written)
    }
}

/// Writes `samples` as a complete store at `path`.
pub fn write_store(path: impl AsRef<Path>, seed: u64, samples: &SampleSet) -> Result<u64> {
    let mut w = StoreWriter::create(path, samples.latent_dim(), samples.embed_dim(), seed)?;
    w.push_set(samples)?;
    w.finish()
}

/// One framed batch: a header with the record count followed by the records.
/// Requests carry latents only (`embed_dim = 0`).
pub fn encode_batch(latents: &Latents, embeddings: Option<&bbgc_core::Embeddings>, seed: u64) -> Result<Vec<u8>> {
    let embed_dim = embeddings.map_or(0, |e| e.dim());
    let header = StoreHeader::new(latents.dim(), embed_dim, latents.len() as u64, seed)?;
    let mut buf = Vec::with_capacity(HEADER_LEN + latents.len() * 4 * (latents.dim() + embed_dim + 1));
    header.write_to(&mut buf).expect("writing to memory");
    for i in 0..latents.len() {
        let e = embeddings.map_or(&[][..], |e| e.row(i));
        write_record(&mut buf, latents.row(i), e, None).expect("writing to memory");
    }
    Ok(buf)
}

/// Reads one framed batch; `Ok(None)` when the stream ends cleanly first.
pub fn read_batch<R: Read>(r: &mut R) -> Result<Option<(StoreHeader, Vec<RawRecord>)>> {
    let Some(header) = StoreHeader::read_from(r)? else {
        return Ok(None);
    };
    if header.count == UNFINISHED {
        return Err(Error::format("batch", "unterminated batch header"));
    }
    let mut records = Vec::with_capacity(header.count.min(1 << 16) as usize);
    for i in 0..header.count {
        match read_record(r, &header) {
            Ok(Some(rec)) => records.push(rec),
            Ok(None) => return Err(Error::TruncatedStore { expected: header.count, complete: i }),
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(Error::TruncatedStore { expected: header.count, complete: i })
            }
            Err(e) => return Err(Error::io("<stream>", e)),
        }
    }
    Ok(Some((header, records)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let h = StoreHeader::new(512, 128, 10_000, 42).unwrap();
        let mut buf = Vec::new();
        h.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN);
        assert_eq!(&buf[..4], b"BBGC");
        assert_eq!(StoreHeader::read_from(&mut buf.as_slice()).unwrap(), Some(h));
    }

    #[test]
    fn short_header_rejected() {
        let err = StoreHeader::read_from(&mut &b"BBGC\x01\0"[..]).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn record_round_trip_is_f32() {
        let h = StoreHeader::new(2, 2, 1, 0).unwrap();
        let mut buf = Vec::new();
        write_record(&mut buf, &[0.1, -2.5], &[0.6, 0.8], Some(b"img/1.png")).unwrap();
        let rec = read_record(&mut buf.as_slice(), &h).unwrap().unwrap();
        assert_eq!(rec.latent, vec![0.1f32 as f64, -2.5]);
        assert_eq!(rec.embedding, vec![0.6f32 as f64, 0.8f32 as f64]);
        assert_eq!(rec.image_ref.as_deref(), Some(&b"img/1.png"[..]));
    }
}
