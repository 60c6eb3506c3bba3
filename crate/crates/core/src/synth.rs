//! Procedural face-like images: a typical population, a spectacles attribute,
//! and pixel-level anomaly injection.
//!
//! Geometry is specified on a 64-pixel reference canvas and scaled to the
//! requested extents.

use rand::Rng;

use crate::error::{reject, Result};
use crate::image_data::{Extents, Image};
use crate::masking::PixelBox;
use crate::seeding::indexed_rng;

const REF: f64 = 64.0;

/// Sampling interval of one face parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..self.1)
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.0..=self.1).contains(&v)
    }
}

/// Typical sampling intervals (reference-canvas units, intensities in [-1, 1]).
pub mod typical {
    use super::Interval;
    pub const BACKGROUND: Interval = Interval(-0.9, -0.5);
    pub const HEAD_CX: Interval = Interval(30.0, 34.0);
    pub const HEAD_CY: Interval = Interval(30.0, 34.0);
    pub const HEAD_AX: Interval = Interval(17.0, 21.0);
    pub const HEAD_AY: Interval = Interval(21.0, 25.0);
    pub const SKIN: Interval = Interval(0.1, 0.5);
    pub const EYE_RISE: Interval = Interval(5.0, 8.0);
    pub const EYE_SPREAD: Interval = Interval(8.0, 11.0);
    pub const EYE_RADIUS: Interval = Interval(2.5, 3.5);
    pub const PUPIL: Interval = Interval(-0.9, -0.6);
    pub const NOSE_LEN: Interval = Interval(4.0, 7.0);
    pub const MOUTH_DROP: Interval = Interval(9.0, 12.0);
    pub const MOUTH_HALF_WIDTH: Interval = Interval(5.0, 8.0);
    pub const MOUTH_CURVE: Interval = Interval(-2.0, 3.0);
    pub const MOUTH_SHADE: Interval = Interval(-0.7, -0.4);
    pub const ILLUMINATION: Interval = Interval(-0.15, 0.15);
    /// How much darker than the skin a spectacle frame is drawn.
    pub const FRAME_CONTRAST: Interval = Interval(0.3, 0.5);
}

/// Parameters of one rendered face, in reference-canvas units.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceParams {
    pub background: f64,
    pub head_center: (f64, f64),
    pub head_axes: (f64, f64),
    pub skin: f64,
    pub eye_rise: f64,
    pub eye_spread: f64,
    pub eye_radius: f64,
    pub pupil: f64,
    pub nose_len: f64,
    pub mouth_drop: f64,
    pub mouth_half_width: f64,
    pub mouth_curve: f64,
    pub mouth_shade: f64,
    /// Left-to-right intensity ramp added to the whole canvas.
    pub illumination: f64,
    pub frame_contrast: f64,
    pub glasses: bool,
}

impl FaceParams {
    pub fn sample_typical(rng: &mut impl Rng) -> Self {
        use typical::*;
        Self {
            background: BACKGROUND.sample(rng),
            head_center: (HEAD_CX.sample(rng), HEAD_CY.sample(rng)),
            head_axes: (HEAD_AX.sample(rng), HEAD_AY.sample(rng)),
            skin: SKIN.sample(rng),
            eye_rise: EYE_RISE.sample(rng),
            eye_spread: EYE_SPREAD.sample(rng),
            eye_radius: EYE_RADIUS.sample(rng),
            pupil: PUPIL.sample(rng),
            nose_len: NOSE_LEN.sample(rng),
            mouth_drop: MOUTH_DROP.sample(rng),
            mouth_half_width: MOUTH_HALF_WIDTH.sample(rng),
            mouth_curve: MOUTH_CURVE.sample(rng),
            mouth_shade: MOUTH_SHADE.sample(rng),
            illumination: ILLUMINATION.sample(rng),
            frame_contrast: FRAME_CONTRAST.sample(rng),
            glasses: false,
        }
    }

    pub fn is_typical(&self) -> bool {
        use typical::*;
        BACKGROUND.contains(self.background)
            && HEAD_CX.contains(self.head_center.0)
            && HEAD_CY.contains(self.head_center.1)
            && HEAD_AX.contains(self.head_axes.0)
            && HEAD_AY.contains(self.head_axes.1)
            && SKIN.contains(self.skin)
            && EYE_RISE.contains(self.eye_rise)
            && EYE_SPREAD.contains(self.eye_spread)
            && EYE_RADIUS.contains(self.eye_radius)
            && PUPIL.contains(self.pupil)
            && NOSE_LEN.contains(self.nose_len)
            && MOUTH_DROP.contains(self.mouth_drop)
            && MOUTH_HALF_WIDTH.contains(self.mouth_half_width)
            && MOUTH_CURVE.contains(self.mouth_curve)
            && MOUTH_SHADE.contains(self.mouth_shade)
            && ILLUMINATION.contains(self.illumination)
            && FRAME_CONTRAST.contains(self.frame_contrast)
    }

    fn eye_centers(&self) -> [(f64, f64); 2] {
        let (cx, cy) = self.head_center;
        let y = cy - self.eye_rise;
        [(cx - self.eye_spread, y), (cx + self.eye_spread, y)]
    }

    fn lens_radius(&self) -> f64 {
        self.eye_radius * 1.6 + 1.8
    }

    /// Reference-canvas rectangle containing everything the spectacles draw.
    fn eye_region_ref(&self) -> (f64, f64, f64, f64) {
        let [(lx, y), (rx, _)] = self.eye_centers();
        let r = self.lens_radius() + 1.5;
        (y - r, lx - r, y + r, rx + r)
    }

    /// Pixel rectangle covering the spectacles on a canvas of `extents`.
    pub fn eye_region(&self, extents: Extents) -> PixelBox {
        let s = extents.width as f64 / REF;
        let (t, l, b, r) = self.eye_region_ref();
        ref_box(t * s, l * s, b * s, r * s, extents)
    }

    /// Shade of the reference-canvas point `(x, y)` before illumination.
    fn shade(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.head_center;
        let (ax, ay) = self.head_axes;
        if ((x - cx) / ax).powi(2) + ((y - cy) / ay).powi(2) > 1.0 {
            return self.background;
        }
        let mut v = self.skin;
        for (ex, ey) in self.eye_centers() {
            let (dx, dy) = (x - ex, y - ey);
            if (dx / (1.6 * self.eye_radius)).powi(2) + (dy / self.eye_radius).powi(2) <= 1.0 {
                v = 0.85;
                if dx * dx + dy * dy <= (0.7 * self.eye_radius).powi(2) {
                    v = self.pupil;
                }
            }
        }
        if (x - cx).abs() <= 0.8 && y >= cy - 2.0 && y <= cy - 2.0 + self.nose_len {
            v = self.skin - 0.35;
        }
        let my = cy + self.mouth_drop;
        let u = (x - cx) / self.mouth_half_width;
        if u.abs() <= 1.0 {
            // Parabolic arc; positive curvature lifts the corners (smile).
            let arc = my - self.mouth_curve * u * u;
            if (y - arc).abs() <= 0.9 {
                v = self.mouth_shade;
            }
        }
        if self.glasses {
            let lens = self.lens_radius();
            let frame = self.skin - self.frame_contrast;
            let [(lx, ey), (rx, _)] = self.eye_centers();
            for ex in [lx, rx] {
                let d = ((x - ex).powi(2) + (y - ey).powi(2)).sqrt();
                if (d - lens).abs() <= 0.5 {
                    v = frame;
                }
            }
            if (y - ey).abs() <= 0.5 && x > lx + lens && x < rx - lens {
                v = frame;
            }
        }
        v
    }

    /// Render with 2x2 supersampling.
    pub fn render(&self, id: impl Into<String>, extents: Extents) -> Image<f32> {
        let s = REF / extents.width as f64;
        let sy = REF / extents.height as f64;
        let mut img = Image::filled(id, extents, 0.0f32);
        for y in 0..extents.height {
            for x in 0..extents.width {
                let mut acc = 0.0;
                for (oy, ox) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                    acc += self.shade((x as f64 + ox) * s, (y as f64 + oy) * sy);
                }
                let ramp = self.illumination * ((x as f64 + 0.5) * s / REF - 0.5) * 2.0;
                let v = (acc / 4.0 + ramp).clamp(-1.0, 1.0) as f32;
                for c in 0..extents.channels {
                    img.set(c, y, x, v);
                }
            }
        }
        img
    }
}

fn ref_box(top: f64, left: f64, bottom: f64, right: f64, extents: Extents) -> PixelBox {
    let t = top.floor().max(0.0) as usize;
    let l = left.floor().max(0.0) as usize;
    let b = (bottom.ceil().max(0.0) as usize).min(extents.height).max(t + 1);
    let r = (right.ceil().max(0.0) as usize).min(extents.width).max(l + 1);
    PixelBox::new(t, l, b - t, r - l)
}

/// Which population an image is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleKind {
    Typical,
    Anomaly,
    ControlTypical,
}

impl SampleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleKind::Typical => "typical",
            SampleKind::Anomaly => "anomaly",
            SampleKind::ControlTypical => "control-typical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "typical" => Ok(SampleKind::Typical),
            "anomaly" => Ok(SampleKind::Anomaly),
            "control-typical" => Ok(SampleKind::ControlTypical),
            _ => reject(format!("unknown sample kind {s:?}")),
        }
    }

    fn stream(&self) -> &'static str {
        match self {
            SampleKind::Typical => "face/typical",
            SampleKind::Anomaly => "face/anomaly",
            SampleKind::ControlTypical => "face/control",
        }
    }
}

/// One generated image with the information needed to regenerate it.
#[derive(Clone, Debug)]
pub struct SynthSample {
    pub image: Image<f32>,
    pub params: FaceParams,
    pub seed: u64,
    pub anomaly: Option<(AnomalyKind, PixelBox)>,
}

/// Request for a batch of generated images.
#[derive(Clone, Debug)]
pub struct CorpusRequest {
    pub count: usize,
    pub seed: u64,
    pub kind: SampleKind,
    pub glasses: bool,
    pub id_prefix: String,
    pub extents: Extents,
}

/// Image `index` of a request. A pure function of `(seed, kind, index)`;
/// the spectacles flag leaves the underlying face unchanged.
pub fn generate_one(req: &CorpusRequest, index: usize) -> Result<SynthSample> {
    let mut rng = indexed_rng(req.seed, req.kind.stream(), index as u64);
    let face_seed: u64 = rng.random();
    let mut params = FaceParams::sample_typical(&mut rng);
    params.glasses = req.glasses;
    // A seed-derived lead tag keeps id order unrelated to the population prefix.
    let id = format!("{:04x}-{}-{index:05}", face_seed >> 48, req.id_prefix);
    let mut image = params.render(id, req.extents);
    let mut anomaly = None;
    if req.kind == SampleKind::Anomaly {
        let kind = AnomalyKind::ALL[rng.random_range(0..AnomalyKind::ALL.len())];
        let injected = inject_anomaly(&image, kind, rng.random())?;
        image = injected.image;
        anomaly = Some((kind, injected.region));
    }
    Ok(SynthSample { image, params, seed: face_seed, anomaly })
}

pub fn generate_corpus(req: &CorpusRequest) -> Result<Vec<SynthSample>> {
    if req.count == 0 {
        return reject("corpus count must be at least 1");
    }
    use rayon::prelude::*;
    (0..req.count).into_par_iter().map(|i| generate_one(req, i)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnomalyKind {
    DisplacedMouth,
    OversizedEye,
    OccludingBlock,
    TextureSwap,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 4] =
        [AnomalyKind::DisplacedMouth, AnomalyKind::OversizedEye, AnomalyKind::OccludingBlock, AnomalyKind::TextureSwap];

    pub fn as_str(&self) -> &'static str {
        match self {
            AnomalyKind::DisplacedMouth => "displaced-mouth",
            AnomalyKind::OversizedEye => "oversized-eye",
            AnomalyKind::OccludingBlock => "occluding-block",
            AnomalyKind::TextureSwap => "texture-swap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .map_or_else(|| reject(format!("unknown anomaly kind {s:?}")), Ok)
    }
}

/// Concrete anomaly parameters (reference-canvas units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Anomaly {
    /// Move the mouth area by `(dy, dx)`.
    DisplacedMouth { dy: f64, dx: f64 },
    /// Draw an eye of `radius` over the left (`false`) or right eye position.
    OversizedEye { right: bool, radius: f64 },
    OccludingBlock { top: f64, left: f64, size: f64, shade: f64 },
    TextureSwap { top: f64, left: f64, size: f64, period: usize },
}

/// Injected image plus the only region whose pixels changed.
#[derive(Clone, Debug)]
pub struct Injected {
    pub image: Image<f32>,
    pub region: PixelBox,
}

impl Anomaly {
    /// Parameters outside the typical intervals, drawn from `rng`.
    pub fn sample(kind: AnomalyKind, rng: &mut impl Rng) -> Self {
        let sign = |rng: &mut dyn rand::RngCore| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        match kind {
            AnomalyKind::DisplacedMouth => {
                let dy = sign(rng) * rng.random_range(6.0..9.0);
                let dx = sign(rng) * rng.random_range(4.0..8.0);
                Anomaly::DisplacedMouth { dy, dx }
            }
            AnomalyKind::OversizedEye => Anomaly::OversizedEye { right: rng.random_bool(0.5), radius: rng.random_range(5.5..7.5) },
            AnomalyKind::OccludingBlock => {
                let size = rng.random_range(10.0..16.0);
                Anomaly::OccludingBlock {
                    top: rng.random_range(14.0..50.0 - size),
                    left: rng.random_range(14.0..50.0 - size),
                    size,
                    shade: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                }
            }
            AnomalyKind::TextureSwap => {
                let size = rng.random_range(12.0..18.0);
                Anomaly::TextureSwap {
                    top: rng.random_range(14.0..50.0 - size),
                    left: rng.random_range(14.0..50.0 - size),
                    size,
                    period: rng.random_range(2..=3),
                }
            }
        }
    }

    pub fn apply(&self, image: &Image<f32>) -> Result<Injected> {
        let e = image.extents();
        let s = e.width as f64 / REF;
        let sy = e.height as f64 / REF;
        let mut out = image.clone();
        let region = match *self {
            Anomaly::DisplacedMouth { dy, dx } => {
                let src = ref_box(35.0 * sy, 21.0 * s, 50.0 * sy, 43.0 * s, e);
                let (dy, dx) = ((dy * sy).round() as isize, (dx * s).round() as isize);
                let fill: Vec<f32> = (0..e.channels).map(|c| image.get(c, src.top, src.left)).collect();
                for c in 0..e.channels {
                    for y in src.top..src.bottom() {
                        for x in src.left..src.right() {
                            out.set(c, y, x, fill[c]);
                        }
                    }
                }
                let (mut t, mut l, mut b, mut r) = (src.top, src.left, src.bottom(), src.right());
                for c in 0..e.channels {
                    for y in src.top..src.bottom() {
                        for x in src.left..src.right() {
                            let (ty, tx) = (y as isize + dy, x as isize + dx);
                            if ty < 0 || tx < 0 || ty >= e.height as isize || tx >= e.width as isize {
                                continue;
                            }
                            let (ty, tx) = (ty as usize, tx as usize);
                            out.set(c, ty, tx, image.get(c, y, x));
                            t = t.min(ty);
                            l = l.min(tx);
                            b = b.max(ty + 1);
                            r = r.max(tx + 1);
                        }
                    }
                }
                PixelBox::new(t, l, b - t, r - l)
            }
            Anomaly::OversizedEye { right, radius } => {
                let (ex, ey) = (if right { 41.5 } else { 22.5 }, 25.5);
                let rx = 1.6 * radius;
                let region = ref_box((ey - radius) * sy, (ex - rx) * s, (ey + radius) * sy, (ex + rx) * s, e);
                for y in region.top..region.bottom() {
                    for x in region.left..region.right() {
                        let (px, py) = ((x as f64 + 0.5) / s, (y as f64 + 0.5) / sy);
                        let (dx, dy) = (px - ex, py - ey);
                        if (dx / rx).powi(2) + (dy / radius).powi(2) <= 1.0 {
                            let v = if dx * dx + dy * dy <= (0.7 * radius).powi(2) { -0.85 } else { 0.9 };
                            for c in 0..e.channels {
                                out.set(c, y, x, v);
                            }
                        }
                    }
                }
                region
            }
            Anomaly::OccludingBlock { top, left, size, shade } => {
                let region = ref_box(top * sy, left * s, (top + size) * sy, (left + size) * s, e);
                for c in 0..e.channels {
                    for y in region.top..region.bottom() {
                        for x in region.left..region.right() {
                            out.set(c, y, x, shade as f32);
                        }
                    }
                }
                region
            }
            Anomaly::TextureSwap { top, left, size, period } => {
                let region = ref_box(top * sy, left * s, (top + size) * sy, (left + size) * s, e);
                let p = period.max(1);
                for c in 0..e.channels {
                    for y in region.top..region.bottom() {
                        for x in region.left..region.right() {
                            let v = if (y / p + x / p) % 2 == 0 { 0.8 } else { -0.8 };
                            out.set(c, y, x, v);
                        }
                    }
                }
                region
            }
        };
        Ok(Injected { image: out, region })
    }
}

/// Apply an anomaly of `kind` with parameters drawn from `seed`.
pub fn inject_anomaly(image: &Image<f32>, kind: AnomalyKind, seed: u64) -> Result<Injected> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Anomaly::sample(kind, &mut rng).apply(image)
}
