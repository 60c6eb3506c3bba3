//! Per-box residual features and the two autoencoder baselines.

use rayon::prelude::*;

use crate::autoencoder::Autoencoder;
use crate::error::{reject, Error, Result};
use crate::image_data::Image;
use crate::masking::{BoxGrid, GridSpec, PixelBox};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// Mean absolute residual inside each grid box, with that box concealed.
    InpaintResidual,
    /// Same reduction over the unmasked reconstruction residual.
    RawResidual,
    /// The encoder output.
    Code,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::InpaintResidual, FeatureKind::RawResidual, FeatureKind::Code];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureKind::InpaintResidual => "inpaint-residual",
            FeatureKind::RawResidual => "raw-residual",
            FeatureKind::Code => "code",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| Error::RejectedInput(format!("unknown feature kind {s:?}")))
    }

    /// Residual kinds are nonnegative and indexed by grid box.
    pub fn is_residual(&self) -> bool {
        !matches!(self, FeatureKind::Code)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub values: Vec<f64>,
    pub grid: Option<GridSpec>,
}

/// Absolute residual of one (image, box) pair, averaged over channels.
/// Zero outside the box.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMap {
    pub region: PixelBox,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl ResidualMap {
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_grid<T: Scalar>(image: &Image<T>, grid: &BoxGrid) -> Result<()> {
    if grid.spec.image_height != image.height || grid.spec.image_width != image.width {
        return reject(format!(
            "grid built for {}x{} but image {} is {}x{}",
            grid.spec.image_height, grid.spec.image_width, image.id, image.height, image.width
        ));
    }
    Ok(())
}

/// Mean over in-box pixels and channels of `|prediction - truth|`.
fn box_mean_abs<T: Scalar>(prediction: &Image<T>, truth: &Image<T>, b: PixelBox) -> f64 {
    let mut acc = 0.0;
    for c in 0..truth.channels {
        for y in b.top..b.bottom() {
            for x in b.left..b.right() {
                acc += (prediction.get(c, y, x).as_f64() - truth.get(c, y, x).as_f64()).abs();
            }
        }
    }
    acc / (b.area() * truth.channels) as f64
}

pub fn inpaint_residual_features<T: Scalar>(model: &Autoencoder<T>, image: &Image<T>, grid: &BoxGrid) -> Result<FeatureVector> {
    check_grid(image, grid)?;
    let preds = model.inpaint_many(image, &grid.boxes)?;
    let values = grid.boxes.iter().zip(&preds).map(|(&b, p)| box_mean_abs(p, image, b)).collect();
    Ok(FeatureVector { kind: FeatureKind::InpaintResidual, values, grid: Some(grid.spec) })
}

pub fn raw_residual_features<T: Scalar>(model: &Autoencoder<T>, image: &Image<T>, grid: &BoxGrid) -> Result<FeatureVector> {
    check_grid(image, grid)?;
    let recon = model.reconstruct(image)?;
    let values = grid.boxes.iter().map(|&b| box_mean_abs(&recon, image, b)).collect();
    Ok(FeatureVector { kind: FeatureKind::RawResidual, values, grid: Some(grid.spec) })
}

pub fn code_features<T: Scalar>(model: &Autoencoder<T>, image: &Image<T>) -> Result<FeatureVector> {
    let code = model.encode(image)?;
    Ok(FeatureVector { kind: FeatureKind::Code, values: code.0.iter().map(|v| v.as_f64()).collect(), grid: None })
}

/// Complement-masked absolute residual of the inpainting of `b`.
pub fn residual_map<T: Scalar>(model: &Autoencoder<T>, image: &Image<T>, b: PixelBox) -> Result<ResidualMap> {
    let pred = model.inpaint(image, b)?;
    let mut values = vec![0.0; image.height * image.width];
    for y in b.top..b.bottom() {
        for x in b.left..b.right() {
            let s: f64 = (0..image.channels).map(|c| (pred.get(c, y, x).as_f64() - image.get(c, y, x).as_f64()).abs()).sum();
            values[y * image.width + x] = s / image.channels as f64;
        }
    }
    Ok(ResidualMap { region: b, height: image.height, width: image.width, values })
}

/// Features of one kind for many images, in input order.
pub fn extract<T: Scalar>(model: &Autoencoder<T>, images: &[Image<T>], kind: FeatureKind, grid: &BoxGrid) -> Result<Vec<FeatureVector>> {
    images
        .par_iter()
        .map(|im| match kind {
            FeatureKind::InpaintResidual => inpaint_residual_features(model, im, grid),
            FeatureKind::RawResidual => raw_residual_features(model, im, grid),
            FeatureKind::Code => code_features(model, im),
        })
        .collect()
}

pub const FEATURE_HEADER: &str = "# npae-features v1";

/// Feature matrix with image ids, as stored on disk.
///
/// Text form: a header line naming kind, grid and dimension, then one
/// `id,v1,v2,...` line per image with nine significant digits.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub kind: FeatureKind,
    pub grid: Option<GridSpec>,
    pub dim: usize,
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(ids: Vec<String>, vectors: Vec<FeatureVector>) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return reject("feature table needs at least one row");
        };
        if ids.len() != vectors.len() {
            return reject("feature table ids and rows differ in count");
        }
        let (kind, grid, dim) = (first.kind, first.grid, first.values.len());
        if vectors.iter().any(|v| v.kind != kind || v.grid != grid || v.values.len() != dim) {
            return reject("feature table rows must share kind, grid and dimension");
        }
        Ok(Self { kind, grid, dim, ids, rows: vectors.into_iter().map(|v| v.values).collect() })
    }

    pub fn vector(&self, i: usize) -> FeatureVector {
        FeatureVector { kind: self.kind, values: self.rows[i].clone(), grid: self.grid }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn to_text(&self) -> String {
        let grid = self.grid.map_or_else(|| "none".to_string(), |g| g.label());
        let mut s = format!("{FEATURE_HEADER} kind={} grid={grid} dim={}\n", self.kind.as_str(), self.dim);
        for (id, row) in self.ids.iter().zip(&self.rows) {
            s.push_str(id);
            for v in row {
                s.push_str(&format!(",{v:.8e}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let rest = header.strip_prefix(FEATURE_HEADER).ok_or_else(|| Error::RejectedInput("feature file header missing".into()))?;
        let (mut kind, mut grid, mut dim) = (None, None, None);
        for field in rest.split_whitespace() {
            match field.split_once('=') {
                Some(("kind", v)) => kind = Some(FeatureKind::parse(v)?),
                Some(("grid", "none")) => grid = Some(None),
                Some(("grid", v)) => grid = Some(Some(GridSpec::parse_label(v)?)),
                Some(("dim", v)) => dim = v.parse::<usize>().ok(),
                _ => return reject(format!("unexpected feature header field {field:?}")),
            }
        }
        let (Some(kind), Some(grid), Some(dim)) = (kind, grid, dim) else {
            return reject("feature header must name kind, grid and dim");
        };
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let mut parts = line.split(',');
            let id = parts.next().unwrap_or_default().to_string();
            let row = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::RejectedInput(format!("feature line {}: bad number", n + 2)))?;
            if row.len() != dim {
                return reject(format!("feature line {}: expected {dim} values, got {}", n + 2, row.len()));
            }
            ids.push(id);
            rows.push(row);
        }
        Ok(Self { kind, grid, dim, ids, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::ArchConfig;
    use crate::image_data::Extents;
    use crate::masking::grid_boxes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Autoencoder<f64>, Image<f64>, BoxGrid) {
        let model = Autoencoder::init(ArchConfig::compact(32, 32, 1), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Image::new("q", Extents::new(32, 32, 1), (0..1024).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let grid = grid_boxes(GridSpec { image_height: 32, image_width: 32, box_height: 8, box_width: 8, stride: 8, edge_exclusion: 8 }).unwrap();
        (model, img, grid)
    }

    #[test]
    fn feature_lengths_follow_grid_and_code() {
        let (m, q, g) = setup();
        assert_eq!(g.len(), 4);
        let a = inpaint_residual_features(&m, &q, &g).unwrap();
        let b = raw_residual_features(&m, &q, &g).unwrap();
        let c = code_features(&m, &q).unwrap();
        assert_eq!(a.values.len(), 4);
        assert_eq!(b.values.len(), 4);
        assert_eq!(c.values.len(), 32);
        assert!(a.values.iter().chain(&b.values).all(|&v| v >= 0.0));
        assert_eq!(c, code_features(&m, &q).unwrap());
    }

    #[test]
    fn residual_map_is_supported_in_box_and_matches_feature() {
        let (m, q, g) = setup();
        let f = inpaint_residual_features(&m, &q, &g).unwrap();
        for (i, &b) in g.boxes.iter().enumerate() {
            let map = residual_map(&m, &q, b).unwrap();
            for y in 0..32 {
                for x in 0..32 {
                    let v = map.get(y, x);
                    assert!(v >= 0.0);
                    if !b.contains(y, x) {
                        assert_eq!(v, 0.0);
                    }
                }
            }
            assert!((map.sum() / b.area() as f64 - f.values[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_mismatch_rejected() {
        let (m, _, g) = setup();
        let small = Image::<f64>::filled("s", Extents::new(16, 16, 1), 0.0);
        assert!(inpaint_residual_features(&m, &small, &g).is_err());
    }

    #[test]
    fn table_text_round_trip_keeps_nine_digits() {
        let (m, q, g) = setup();
        let v = inpaint_residual_features(&m, &q, &g).unwrap();
        let t = FeatureTable::new(vec!["q".into()], vec![v.clone()]).unwrap();
        let back = FeatureTable::parse(&t.to_text()).unwrap();
        assert_eq!(back.kind, t.kind);
        assert_eq!(back.grid, t.grid);
        for (a, b) in back.rows[0].iter().zip(&v.values) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
        let code = FeatureTable::new(vec!["q".into()], vec![code_features(&m, &q).unwrap()]).unwrap();
        assert_eq!(FeatureTable::parse(&code.to_text()).unwrap().grid, None);
    }
}
