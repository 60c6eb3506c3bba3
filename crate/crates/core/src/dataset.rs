//! Image files (8-bit PGM/PPM), manifests, and directory ingestion.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{reject, Error, Result};
use crate::image_data::{Extents, Image};
use crate::synth::{CorpusRequest, SampleKind};

pub const MANIFEST_HEADER: &str = "# npae-manifest v1";

/// `p in [0, 255]` maps to `p / 127.5 - 1`.
pub fn from_byte(p: u8) -> f32 {
    (p as f64 / 127.5 - 1.0) as f32
}

pub fn to_byte(v: f32) -> u8 {
    ((v as f64 + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Binary PGM (1 channel) or PPM (3 channels).
pub fn encode_pnm(image: &Image<f32>) -> Result<Vec<u8>> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        c => return reject(format!("cannot store {c}-channel image as PNM")),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", image.width, image.height).into_bytes();
    for y in 0..image.height {
        for x in 0..image.width {
            for c in 0..image.channels {
                out.push(to_byte(image.get(c, y, x)));
            }
        }
    }
    Ok(out)
}

pub fn decode_pnm(id: &str, bytes: &[u8]) -> Result<Image<f32>> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return reject(format!("{id}: truncated PNM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let channels = match token()?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return reject(format!("{id}: unsupported PNM magic {m:?}")),
    };
    let num = |s: String| s.parse::<usize>().map_err(|_| Error::RejectedInput(format!("{id}: bad PNM header")));
    let width = num(token()?)?;
    let height = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval != 255 {
        return reject(format!("{id}: only 8-bit PNM supported"));
    }
    let start = pos + 1;
    let need = width * height * channels;
    if bytes.len() < start + need {
        return reject(format!("{id}: truncated PNM pixel data"));
    }
    let px = &bytes[start..start + need];
    let mut img = Image::filled(id, Extents::new(height, width, channels), 0.0f32);
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                img.set(c, y, x, from_byte(px[(y * width + x) * channels + c]));
            }
        }
    }
    Ok(img)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Holdout,
    Probe,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Holdout => "holdout",
            Split::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "holdout" => Ok(Split::Holdout),
            "probe" => Ok(Split::Probe),
            _ => reject(format!("unknown split {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub path: String,
    pub split: Split,
    pub kind: SampleKind,
    pub attributes: Vec<String>,
    pub seed: u64,
}

impl ManifestRecord {
    pub fn has_attribute(&self, name: &str) -> bool {
        self.attributes.iter().any(|a| a == name)
    }
}

impl fmt::Display for ManifestRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let attrs = if self.attributes.is_empty() { "-".to_string() } else { self.attributes.join(",") };
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.id,
            self.path,
            self.split.as_str(),
            self.kind.as_str(),
            attrs,
            self.seed
        )
    }
}

/// Tab-separated image list; paths are relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.id.is_empty() || r.id.contains(['\t', '\n', ',']) {
                return reject(format!("invalid image id {:?}", r.id));
            }
            if !seen.insert(r.id.as_str()) {
                return reject(format!("duplicate image id {}", r.id));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(MANIFEST_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return reject("manifest header missing or wrong version");
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            let [id, path, split, kind, attrs, seed] = f.as_slice() else {
                return reject(format!("manifest line {}: expected 6 fields", n + 2));
            };
            records.push(ManifestRecord {
                id: id.to_string(),
                path: path.to_string(),
                split: Split::parse(split)?,
                kind: SampleKind::parse(kind)?,
                attributes: if *attrs == "-" { Vec::new() } else { attrs.split(',').map(String::from).collect() },
                seed: seed.parse().map_err(|_| Error::RejectedInput(format!("manifest line {}: bad seed", n + 2)))?,
            });
        }
        let m = Self { records };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn select(&self, pred: impl Fn(&ManifestRecord) -> bool) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| pred(r)).collect()
    }

    /// Decode the images of `records`, resolving paths against `root`.
    pub fn load_images(root: &Path, records: &[&ManifestRecord]) -> Result<Vec<Image<f32>>> {
        use rayon::prelude::*;
        records
            .par_iter()
            .map(|r| {
                let bytes = fs::read(root.join(&r.path))?;
                decode_pnm(&r.id, &bytes)
            })
            .collect()
    }
}

/// Generate `req` into `dir/images/` and return its manifest records.
pub fn write_corpus(dir: &Path, req: &CorpusRequest, split: Split) -> Result<Vec<ManifestRecord>> {
    let samples = crate::synth::generate_corpus(req)?;
    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    let ext = if req.extents.channels == 1 { "pgm" } else { "ppm" };
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        let rel = format!("images/{}.{ext}", s.image.id);
        write_atomic(&dir.join(&rel), &encode_pnm(&s.image)?)?;
        let mut attributes = Vec::new();
        if req.glasses {
            attributes.push("glasses".to_string());
        }
        if let Some((kind, _)) = s.anomaly {
            attributes.push(kind.as_str().to_string());
        }
        records.push(ManifestRecord { id: s.image.id.clone(), path: rel, split, kind: req.kind, attributes, seed: s.seed });
    }
    Ok(records)
}

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Color handling for [`load_directory`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorMode {
    Grayscale,
    Rgb,
}

/// Result of ingesting a directory: decoded images, their manifest, and one
/// warning per skipped file.
#[derive(Debug)]
pub struct LoadedDirectory {
    pub manifest: Manifest,
    pub images: Vec<Image<f32>>,
    pub warnings: Vec<String>,
}

/// Decode every supported image in `dir` (sorted by file name), convert to
/// the requested color mode and resize to `extents`. Records are assigned
/// the given split and kind.
pub fn load_directory(dir: &Path, height: usize, width: usize, color: ColorMode, split: Split, kind: SampleKind) -> Result<LoadedDirectory> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyManifest(format!("no files in {}", dir.display())));
    }
    let mut images = Vec::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for path in &paths {
        let decoded = match ::image::open(path) {
            Ok(d) => d,
            Err(e) => {
                warnings.push(format!("skipping {}: {e}", path.display()));
                continue;
            }
        };
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let id = id.replace(['\t', ',', '\n'], "_");
        let filter = ::image::imageops::FilterType::Triangle;
        let image = match color {
            ColorMode::Grayscale => {
                let g = decoded.to_luma8();
                let g = if g.dimensions() == (width as u32, height as u32) {
                    g
                } else {
                    ::image::imageops::resize(&g, width as u32, height as u32, filter)
                };
                Image::new(id.clone(), Extents::new(height, width, 1), g.pixels().map(|p| from_byte(p.0[0])).collect())?
            }
            ColorMode::Rgb => {
                let c = decoded.to_rgb8();
                let c = if c.dimensions() == (width as u32, height as u32) {
                    c
                } else {
                    ::image::imageops::resize(&c, width as u32, height as u32, filter)
                };
                let mut img = Image::filled(id.clone(), Extents::new(height, width, 3), 0.0f32);
                for (x, y, p) in c.enumerate_pixels() {
                    for ch in 0..3 {
                        img.set(ch, y as usize, x as usize, from_byte(p.0[ch]));
                    }
                }
                img
            }
        };
        let rel = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        records.push(ManifestRecord { id, path: rel, split, kind, attributes: Vec::new(), seed: 0 });
        images.push(image);
    }
    if images.is_empty() {
        return Err(Error::EmptyManifest(format!("none of {} files in {} could be decoded", paths.len(), dir.display())));
    }
    let manifest = Manifest { records };
    manifest.validate()?;
    Ok(LoadedDirectory { manifest, images, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image<f32> {
        let e = Extents::new(5, 7, 1);
        Image::new("s", e, (0..35).map(|i| (i as f32 / 17.0) - 1.0).collect()).unwrap()
    }

    #[test]
    fn pnm_round_trip_within_quantization() {
        let img = sample();
        let back = decode_pnm("s", &encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back.extents(), img.extents());
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn byte_mapping_endpoints() {
        assert_eq!(from_byte(0), -1.0);
        assert_eq!(from_byte(255), 1.0);
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = Manifest {
            records: vec![
                ManifestRecord { id: "a".into(), path: "images/a.pgm".into(), split: Split::Train, kind: SampleKind::Typical, attributes: vec![], seed: 1 },
                ManifestRecord { id: "b".into(), path: "images/b.pgm".into(), split: Split::Probe, kind: SampleKind::Anomaly, attributes: vec!["glasses".into(), "x".into()], seed: 2 },
            ],
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_header() {
        let dup = format!("{MANIFEST_HEADER}\na\tp\ttrain\ttypical\t-\t0\na\tq\ttrain\ttypical\t-\t0\n");
        assert!(Manifest::parse(&dup).is_err());
        assert!(Manifest::parse("a\tp\ttrain\ttypical\t-\t0\n").is_err());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_directory(dir.path(), 8, 8, ColorMode::Grayscale, Split::Holdout, SampleKind::Typical).unwrap_err();
        assert!(matches!(err, Error::EmptyManifest(_)));
    }

    #[test]
    fn undecodable_files_are_skipped_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.png"), b"not an image").unwrap();
        let err = load_directory(dir.path(), 8, 8, ColorMode::Grayscale, Split::Holdout, SampleKind::Typical).unwrap_err();
        assert!(matches!(err, Error::EmptyManifest(_)));
        fs::write(dir.path().join("good.pgm"), encode_pnm(&sample()).unwrap()).unwrap();
        let loaded = load_directory(dir.path(), 5, 7, ColorMode::Grayscale, Split::Holdout, SampleKind::Typical).unwrap();
        assert_eq!(loaded.images.len(), 1);
        assert_eq!(loaded.warnings.len(), 1);
    }
}
