//! Deterministic synthetic corpora whose classes are distinct texture and
//! shape families, for exercising the pipeline without a real dataset.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt::write_atomic;
use crate::error::{Error, Result};
use crate::imgio::{encode_pgm, GrayImage, PgmEncoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    /// A 3x3 grid of isotropic Gaussian blobs.
    BlobGrid,
    /// A grid of short elongated bars.
    Stripe,
    /// A grid of small annuli.
    Ring,
    /// A checkerboard patch.
    Checker,
}

pub const ALL_KINDS: [GeneratorKind; 4] =
    [GeneratorKind::BlobGrid, GeneratorKind::Stripe, GeneratorKind::Ring, GeneratorKind::Checker];

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::BlobGrid => "blob-grid",
            GeneratorKind::Stripe => "stripe",
            GeneratorKind::Ring => "ring",
            GeneratorKind::Checker => "checker",
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ALL_KINDS
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown generator kind {s:?}")))
    }
}

/// One class: a generator family plus a variant that fixes its scale,
/// polarity and arrangement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    pub kind: GeneratorKind,
    pub variant: usize,
}

impl ClassSpec {
    /// Feature scale multiplier: 1.0, 0.8 or 1.25.
    fn scale(&self) -> f64 {
        [1.0, 0.8, 1.25][self.variant % 3]
    }
    /// Bright structures on a dark ground (+1) or the reverse (-1).
    fn polarity(&self) -> f64 {
        if (self.variant / 3).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
    /// Swaps the roles of x and y.
    fn transposed(&self) -> bool {
        (self.variant / 6) % 2 == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub classes: Vec<ClassSpec>,
    pub images_per_class: usize,
    /// Square image side in pixels.
    pub size: usize,
    /// Standard deviation of additive Gaussian noise, in intensity units.
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    /// `n_classes` classes cycling through the four families; later cycles
    /// use further scale, polarity and arrangement variants.
    pub fn standard(n_classes: usize, images_per_class: usize, size: usize, seed: u64) -> Self {
        let classes = (0..n_classes)
            .map(|i| {
                let kind = ALL_KINDS[i % 4];
                let variant = i / 4;
                let name = if variant == 0 { kind.name().to_string() } else { format!("{}-{variant}", kind.name()) };
                ClassSpec { name, kind, variant }
            })
            .collect();
        SyntheticCorpusSpec { classes, images_per_class, size, noise: 0.02, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("a synthetic corpus needs at least 2 classes".into()));
        }
        if self.images_per_class < 4 {
            return Err(Error::Config("a synthetic corpus needs at least 4 images per class".into()));
        }
        if self.size < 64 {
            return Err(Error::Config(format!("image size {} below the 64 pixel minimum", self.size)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::Config(format!("noise {} must be non-negative", self.noise)));
        }
        let mut names: Vec<&str> = self.classes.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("class names must be unique".into()));
        }
        if let Some(bad) = names.iter().find(|n| n.is_empty() || n.contains(['/', '\\']) || n.starts_with('.')) {
            return Err(Error::Config(format!("class name {bad:?} is not a plain directory name")));
        }
        Ok(())
    }
}

/// A Gaussian blob placed by the generator: centre and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub class: String,
    pub index: usize,
    pub image: GrayImage,
    /// Blob centres; only filled for the blob-grid family.
    pub blobs: Vec<BlobInfo>,
}

impl SyntheticImage {
    /// `<class>/<nnnn>.pgm`
    pub fn relative_path(&self) -> PathBuf {
        Path::new(&self.class).join(format!("{:04}.pgm", self.index))
    }
}

/// Shape placement shared by the grid families: centres of an `n x n`
/// grid with the given spacing, shifted by a global and a per-cell jitter.
fn grid_centres(rng: &mut ChaCha8Rng, size: usize, n: usize, spacing: f64, jitter: f64) -> Vec<(f64, f64)> {
    let c = (size as f64 - 1.0) / 2.0;
    let (ox, oy) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let half = (n as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = c + ox + (i as f64 - half) * spacing + rng.random_range(-jitter..=jitter);
            let y = c + oy + (j as f64 - half) * spacing + rng.random_range(-jitter..=jitter);
            out.push((x, y));
        }
    }
    out
}

/// Renders image `index` of `class`. Each image draws from its own random
/// stream, so images are independent of generation order.
pub fn generate_image(spec: &SyntheticCorpusSpec, class_idx: usize, index: usize) -> Result<SyntheticImage> {
    let class = spec.classes.get(class_idx).ok_or_else(|| Error::Config(format!("no class {class_idx}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(((class_idx as u64) << 32) | index as u64);

    let size = spec.size;
    let s = class.scale();
    let pol = class.polarity();
    let amplitude = rng.random_range(0.35..0.5);
    let ground = 0.5 - pol * rng.random_range(0.15..0.2);
    let mut blobs = Vec::new();

    // intensity offset from the ground, as a function of (x, y)
    let pattern: Box<dyn Fn(f64, f64) -> f64 + Sync> = match class.kind {
        GeneratorKind::BlobGrid => {
            let sigma = 3.5 * s * rng.random_range(0.95..1.05);
            let centres = grid_centres(&mut rng, size, 3, 22.0 * s, 1.5);
            blobs = centres.iter().map(|&(x, y)| BlobInfo { x, y, sigma }).collect();
            Box::new(move |x, y| {
                centres.iter().map(|&(cx, cy)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()).sum()
            })
        }
        GeneratorKind::Stripe => {
            let (long, short) = (5.0 * s, 1.6 * s);
            let centres = grid_centres(&mut rng, size, 3, 20.0 * s, 1.0);
            Box::new(move |x, y| {
                centres
                    .iter()
                    .map(|&(cx, cy)| (-((x - cx) / long).powi(2) / 2.0 - ((y - cy) / short).powi(2) / 2.0).exp())
                    .sum()
            })
        }
        GeneratorKind::Ring => {
            let (radius, width) = (4.5 * s, 1.3 * s);
            let centres = grid_centres(&mut rng, size, 3, 22.0 * s, 1.0);
            Box::new(move |x, y| {
                centres
                    .iter()
                    .map(|&(cx, cy)| {
                        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                        (-((r - radius) / width).powi(2) / 2.0).exp()
                    })
                    .sum()
            })
        }
        GeneratorKind::Checker => {
            let cell = 7.0 * s;
            let c = (size as f64 - 1.0) / 2.0;
            let (cx, cy) = (c + rng.random_range(-2.0..2.0), c + rng.random_range(-2.0..2.0));
            let extent = 3.0 * cell;
            let wave = move |t: f64| (3.0 * (std::f64::consts::PI * t / cell).sin()).tanh();
            let window = move |t: f64| 1.0 / (1.0 + ((t.abs() - extent) / 1.5).exp());
            Box::new(move |x, y| 0.5 * (1.0 + wave(x - cx) * wave(y - cy)) * window(x - cx) * window(y - cy))
        }
    };

    let transposed = class.transposed();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut noise_rng = rng.clone();
    let image = GrayImage::from_fn(size, size, |x, y| {
        let (px, py) = if transposed { (y as f64, x as f64) } else { (x as f64, y as f64) };
        ground + pol * amplitude * pattern(px, py) + noise.sample(&mut noise_rng)
    })?;
    if transposed {
        blobs.iter_mut().for_each(|b| std::mem::swap(&mut b.x, &mut b.y));
    }
    Ok(SyntheticImage { class: class.name.clone(), index, image, blobs })
}

/// Every image of the corpus, class by class.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Vec<SyntheticImage>> {
    spec.validate()?;
    (0..spec.classes.len())
        .flat_map(|c| (0..spec.images_per_class).map(move |i| (c, i)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(c, i)| generate_image(spec, c, i))
        .collect()
}

/// Writes the corpus as binary PGM files under `root/<class>/<nnnn>.pgm`
/// and returns the written paths in corpus order.
pub fn write_corpus(spec: &SyntheticCorpusSpec, root: &Path) -> Result<Vec<PathBuf>> {
    let images = generate_corpus(spec)?;
    for c in &spec.classes {
        fs::create_dir_all(root.join(&c.name))?;
    }
    images
        .par_iter()
        .map(|img| {
            let path = root.join(img.relative_path());
            write_atomic(&path, &encode_pgm(&img.image, PgmEncoding::Binary))?;
            Ok(path)
        })
        .collect()
}
