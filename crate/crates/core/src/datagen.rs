//! Class-per-directory corpora, stratified splits and a procedural texture
//! generator that stands in for real skin photographs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{sample_augmentation, AugmentConfig, AugmentDraw, Interpolation};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::{Sample, PATCH_SIZE};
use crate::numerics::{derive_seed, Exec, Rng};

/// Name of the optional class-order file at the corpus root.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Side length of a composed scene, in pixels.
pub const SCENE_SIZE: usize = 500;
/// Tiles per scene row and column.
pub const SCENE_TILES: usize = SCENE_SIZE / PATCH_SIZE;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Per-class split: each class with `n >= 2` members gets
/// `round(n * fraction)` training members, clamped to `[1, n - 1]`.
/// Both lists come back sorted.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Configuration(format!(
            "train fraction {fraction} outside (0, 1)"
        )));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut split = Split::default();
    for class in 0..classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        Rng::new(derive_seed(seed, class as u64)).shuffle(&mut members);
        let n = members.len();
        let n_train = if n == 1 {
            1
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        };
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub image: Image,
    pub label: usize,
    pub source: String,
}

/// Converts patches to training samples.
pub fn to_samples(patches: &[LabeledPatch]) -> Vec<Sample> {
    patches
        .iter()
        .map(|p| Sample {
            input: p.image.to_tensor(),
            label: p.label,
        })
        .collect()
}

/// Procedural texture: a jittered base colour with pixel noise, optional
/// sinusoidal stripes and a random number of soft round blobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub base: [f64; 3],
    /// Per-patch uniform offset applied to all channels of the base.
    pub base_jitter: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    /// Inclusive range of blobs per patch.
    pub blob_count: (usize, usize),
    /// Radius range in pixels.
    pub blob_radius: (f64, f64),
    pub blob_color: [f64; 3],
    /// Opacity at the blob centre.
    pub blob_contrast: f64,
    pub stripe_period: f64,
    pub stripe_amplitude: f64,
}

impl TextureParams {
    fn plain(base: [f64; 3]) -> Self {
        Self {
            base,
            base_jitter: 0.04,
            noise: 0.025,
            blob_count: (0, 0),
            blob_radius: (0.0, 0.0),
            blob_color: base,
            blob_contrast: 0.0,
            stripe_period: 0.0,
            stripe_amplitude: 0.0,
        }
    }

    fn blobs(
        mut self,
        count: (usize, usize),
        radius: (f64, f64),
        color: [f64; 3],
        contrast: f64,
    ) -> Self {
        self.blob_count = count;
        self.blob_radius = radius;
        self.blob_color = color;
        self.blob_contrast = contrast;
        self
    }

    fn stripes(mut self, period: f64, amplitude: f64) -> Self {
        self.stripe_period = period;
        self.stripe_amplitude = amplitude;
        self
    }

    fn validate(&self) -> Result<()> {
        let finite = self
            .base
            .iter()
            .chain(&self.blob_color)
            .chain(&[
                self.base_jitter,
                self.noise,
                self.blob_radius.0,
                self.blob_radius.1,
                self.blob_contrast,
                self.stripe_period,
                self.stripe_amplitude,
            ])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Configuration(
                "texture parameters must be finite".into(),
            ));
        }
        if self.blob_count.0 > self.blob_count.1 || self.blob_radius.0 > self.blob_radius.1 {
            return Err(Error::Configuration("blob ranges must be ordered".into()));
        }
        if self.blob_count.1 > 0 && self.blob_radius.0 <= 0.0 {
            return Err(Error::Configuration("blob radius must be positive".into()));
        }
        if self.noise < 0.0 || self.base_jitter < 0.0 || !(0.0..=1.0).contains(&self.blob_contrast)
        {
            return Err(Error::Configuration(
                "noise and jitter must be non-negative and contrast in [0, 1]".into(),
            ));
        }
        if self.stripe_amplitude != 0.0 && self.stripe_period <= 0.0 {
            return Err(Error::Configuration(
                "stripes need a positive period".into(),
            ));
        }
        Ok(())
    }

    /// Renders one `size × size` RGB patch, quantized to 8-bit levels.
    pub fn render(&self, size: usize, rng: &mut Rng) -> Image {
        let jitter = rng.uniform(-self.base_jitter, self.base_jitter);
        let base = self.base.map(|c| c + jitter);
        let (sin_a, cos_a) = rng.uniform(0.0, std::f64::consts::PI).sin_cos();
        let phase = rng.uniform(0.0, std::f64::consts::TAU);
        let n_blobs = if self.blob_count.1 == 0 {
            0
        } else {
            self.blob_count.0 + rng.below(self.blob_count.1 - self.blob_count.0 + 1)
        };
        let blobs: Vec<(f64, f64, f64)> = (0..n_blobs)
            .map(|_| {
                let r = rng.uniform(self.blob_radius.0, self.blob_radius.1);
                (
                    rng.uniform(0.0, size as f64),
                    rng.uniform(0.0, size as f64),
                    r,
                )
            })
            .collect();

        let mut data = Vec::with_capacity(size * size * 3);
        for row in 0..size {
            for col in 0..size {
                let (y, x) = (row as f64 + 0.5, col as f64 + 0.5);
                let stripe = if self.stripe_amplitude == 0.0 {
                    0.0
                } else {
                    let u = y * cos_a + x * sin_a;
                    self.stripe_amplitude
                        * (std::f64::consts::TAU * u / self.stripe_period + phase).sin()
                };
                let mut alpha: f64 = 0.0;
                for &(by, bx, r) in &blobs {
                    let d2 = ((y - by).powi(2) + (x - bx).powi(2)) / (r * r);
                    if d2 < 1.0 {
                        alpha = alpha.max(self.blob_contrast * (1.0 - d2).sqrt());
                    }
                }
                for (b, blob) in base.iter().zip(&self.blob_color) {
                    let v = (1.0 - alpha) * (b + stripe) + alpha * blob + self.noise * rng.normal();
                    data.push(v.clamp(0.0, 1.0));
                }
            }
        }
        Image::new(size, size, 3, data)
            .expect("rendered patch has valid geometry")
            .quantized()
    }
}

const SKIN: [f64; 3] = [0.86, 0.66, 0.56];

/// Seven acne textures in class-index order: papule, cyst, blackhead,
/// normal skin, pustule, whitehead, nodule.
pub fn acne_textures() -> Vec<(&'static str, TextureParams)> {
    let skin = TextureParams::plain(SKIN);
    vec![
        (
            "papule",
            skin.clone()
                .blobs((4, 7), (3.0, 5.0), [0.80, 0.20, 0.20], 0.9),
        ),
        (
            "cyst",
            skin.clone()
                .blobs((1, 2), (11.0, 15.0), [0.40, 0.12, 0.42], 0.95),
        ),
        (
            "blackhead",
            skin.clone()
                .blobs((12, 18), (1.0, 2.0), [0.10, 0.08, 0.06], 1.0),
        ),
        ("normal", skin.clone()),
        (
            "pustule",
            skin.clone()
                .blobs((3, 6), (3.5, 5.5), [0.98, 0.92, 0.45], 0.95),
        ),
        (
            "whitehead",
            skin.clone()
                .blobs((12, 18), (1.0, 2.0), [1.0, 1.0, 1.0], 1.0),
        ),
        (
            "nodule",
            skin.blobs((2, 4), (6.0, 9.0), [0.55, 0.33, 0.12], 0.9),
        ),
    ]
}

/// Non-skin textures: dark hair, blue-grey background, green fabric.
pub fn nonskin_textures() -> Vec<(&'static str, TextureParams)> {
    vec![
        (
            "hair",
            TextureParams::plain([0.16, 0.12, 0.10]).stripes(4.0, 0.08),
        ),
        ("background", TextureParams::plain([0.45, 0.50, 0.60])),
        (
            "fabric",
            TextureParams::plain([0.30, 0.50, 0.36]).stripes(6.0, 0.05),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClass {
    pub name: String,
    /// Each patch of the class uses one of these, chosen at random.
    pub variants: Vec<TextureParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    pub per_class: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Skin (every acne texture) versus non-skin.
    pub fn default_2class(per_class: usize, seed: u64) -> Self {
        Self {
            classes: vec![
                SynthClass {
                    name: "c0_skin".into(),
                    variants: acne_textures().into_iter().map(|(_, t)| t).collect(),
                },
                SynthClass {
                    name: "c1_nonskin".into(),
                    variants: nonskin_textures().into_iter().map(|(_, t)| t).collect(),
                },
            ],
            per_class,
            seed,
        }
    }

    pub fn default_7class(per_class: usize, seed: u64) -> Self {
        Self {
            classes: acne_textures()
                .into_iter()
                .enumerate()
                .map(|(i, (name, t))| SynthClass {
                    name: format!("c{i}_{name}"),
                    variants: vec![t],
                })
                .collect(),
            per_class,
            seed,
        }
    }

    /// The default spec for 2 or 7 classes.
    pub fn default_for(classes: usize, per_class: usize, seed: u64) -> Result<Self> {
        match classes {
            2 => Ok(Self::default_2class(per_class, seed)),
            7 => Ok(Self::default_7class(per_class, seed)),
            n => Err(Error::Configuration(format!(
                "class count must be 2 or 7, got {n}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Configuration(
                "a synthetic corpus needs at least two classes".into(),
            ));
        }
        if self.per_class == 0 {
            return Err(Error::Configuration(
                "samples per class must be positive".into(),
            ));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.variants.is_empty() {
                return Err(Error::Configuration(format!(
                    "class {} has no texture variants",
                    c.name
                )));
            }
            for v in &c.variants {
                v.validate()?;
            }
            for other in &self.classes[..i] {
                if other.variants == c.variants {
                    return Err(Error::Configuration(format!(
                        "classes {} and {} have identical texture parameters",
                        other.name, c.name
                    )));
                }
                if other.name == c.name {
                    return Err(Error::Configuration(format!(
                        "duplicate class name {}",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }
}

fn render_class(class: &SynthClass, seed: u64) -> Image {
    let mut rng = Rng::new(seed);
    let variant = &class.variants[rng.below(class.variants.len())];
    variant.render(PATCH_SIZE, &mut rng)
}

/// Generates `per_class` patches per class, class-major. Every patch has its
/// own seed derived from `(spec.seed, class, index)`.
pub fn synthesize(spec: &SynthSpec, exec: Exec) -> Result<Vec<LabeledPatch>> {
    spec.validate()?;
    let n = spec.per_class;
    Ok(exec.map_range(spec.classes.len() * n, |k| {
        let (label, i) = (k / n, k % n);
        let class = &spec.classes[label];
        let seed = derive_seed(derive_seed(spec.seed, label as u64), i as u64);
        LabeledPatch {
            image: render_class(class, seed),
            label,
            source: format!("{}/{}_{i:05}.ppm", class.name, class.name),
        }
    }))
}

/// Writes `patches` as `<dir>/<source>`.
pub fn write_corpus(patches: &[LabeledPatch], dir: &Path) -> Result<()> {
    for p in patches {
        let path = dir.join(&p.source);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        p.image.write_pnm(&path)?;
    }
    Ok(())
}

/// A composed scene and its per-tile ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Image,
    /// `None` marks a non-skin tile; `Some(k)` a skin tile of class `k`.
    pub layout: Vec<Vec<Option<usize>>>,
}

impl Scene {
    /// Row-major skin flags.
    pub fn skin_truth(&self) -> Vec<bool> {
        self.layout.iter().flatten().map(Option::is_some).collect()
    }

    pub fn skin_count(&self) -> usize {
        self.layout.iter().flatten().filter(|t| t.is_some()).count()
    }

    /// Class proportions over skin tiles; all zero when there are none.
    pub fn proportions(&self, classes: usize) -> Vec<f64> {
        let mut counts = vec![0usize; classes];
        for k in self.layout.iter().flatten().flatten() {
            counts[*k] += 1;
        }
        let total = self.skin_count();
        counts
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    c as f64 / total as f64
                }
            })
            .collect()
    }
}

/// Fills a 500×500 canvas tile by tile: `Some(k)` tiles draw a fresh patch
/// of `skin.classes[k]`, `None` tiles draw from `nonskin`.
pub fn compose_scene(
    skin: &SynthSpec,
    nonskin: &SynthClass,
    layout: &[Vec<Option<usize>>],
    seed: u64,
) -> Result<Scene> {
    skin.validate()?;
    if nonskin.variants.is_empty() {
        return Err(Error::Configuration(
            "non-skin class has no texture variants".into(),
        ));
    }
    if layout.len() != SCENE_TILES || layout.iter().any(|r| r.len() != SCENE_TILES) {
        return Err(Error::Geometry(format!(
            "scene layout must be {SCENE_TILES}x{SCENE_TILES} tiles"
        )));
    }
    if let Some(k) = layout
        .iter()
        .flatten()
        .flatten()
        .find(|&&k| k >= skin.classes.len())
    {
        return Err(Error::Data(format!("layout class {k} out of range")));
    }
    let mut canvas = Image::filled(SCENE_SIZE, SCENE_SIZE, 3, 0.0)?;
    for (r, row) in layout.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let tile_seed = derive_seed(seed, (r * SCENE_TILES + c) as u64);
            let class = cell.map_or(nonskin, |k| &skin.classes[k]);
            canvas.paste(
                &render_class(class, tile_seed),
                r * PATCH_SIZE,
                c * PATCH_SIZE,
            )?;
        }
    }
    Ok(Scene {
        image: canvas,
        layout: layout.to_vec(),
    })
}

/// The non-skin class used by [`compose_scene`] defaults.
pub fn default_nonskin_class() -> SynthClass {
    SynthClass {
        name: "nonskin".into(),
        variants: nonskin_textures().into_iter().map(|(_, t)| t).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub classes: Vec<String>,
    pub counts: Vec<usize>,
    pub seed: u64,
    /// Source ids of training members.
    pub train: Vec<String>,
    pub val: Vec<String>,
}

impl CorpusManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub patches: Vec<LabeledPatch>,
    pub split: Split,
    /// One entry per rejected or unreadable file.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub train_fraction: f64,
    pub seed: u64,
    /// Overrides the lexicographic directory order (and any manifest file).
    pub class_order: Option<Vec<String>>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            seed: crate::numerics::DEFAULT_SEED,
            class_order: None,
        }
    }
}

fn sorted_entries(dir: &Path, want_dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if !hidden && path.is_dir() == want_dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a class-per-directory corpus of 50×50 RGB PPM files.
///
/// Class order is `opts.class_order`, else the `classes` list of a
/// `manifest.json` at the root, else the sorted directory names.
pub fn ingest(root: &Path, opts: &IngestOptions, exec: Exec) -> Result<Corpus> {
    let dirs = sorted_entries(root, true)?;
    let manifest_path = root.join(MANIFEST_FILE);
    let order = match &opts.class_order {
        Some(o) => o.clone(),
        None if manifest_path.is_file() => {
            let text =
                fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            CorpusManifest::from_json(&text)?.classes
        }
        None => dirs.iter().map(|d| file_name(d)).collect(),
    };
    if order.is_empty() {
        return Err(Error::Data(format!(
            "no class directories under {}",
            root.display()
        )));
    }

    let mut jobs = Vec::new();
    for (label, class) in order.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            return Err(Error::Data(format!(
                "class directory {} is missing",
                dir.display()
            )));
        }
        for path in sorted_entries(&dir, false)? {
            jobs.push((label, format!("{class}/{}", file_name(&path)), path));
        }
    }
    let loaded = exec.map(&jobs, |(_, _, path)| Image::read_pnm(path));

    let mut patches = Vec::new();
    let mut warnings = Vec::new();
    for ((label, source, _), result) in jobs.into_iter().zip(loaded) {
        match result {
            Ok(img)
                if img.height() == PATCH_SIZE
                    && img.width() == PATCH_SIZE
                    && img.channels() == 3 =>
            {
                patches.push(LabeledPatch {
                    image: img,
                    label,
                    source,
                })
            }
            Ok(img) => warnings.push(format!(
                "{source}: expected {PATCH_SIZE}x{PATCH_SIZE}x3, got {}x{}x{}",
                img.height(),
                img.width(),
                img.channels()
            )),
            Err(e) => warnings.push(format!("{source}: {e}")),
        }
    }

    let mut counts = vec![0usize; order.len()];
    for p in &patches {
        counts[p.label] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Data(format!(
            "class {} has no usable images",
            order[empty]
        )));
    }
    let labels: Vec<usize> = patches.iter().map(|p| p.label).collect();
    let split = stratified_split(&labels, opts.train_fraction, opts.seed)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| patches[i].source.clone()).collect();
    let manifest = CorpusManifest {
        classes: order,
        counts,
        seed: opts.seed,
        train: ids(&split.train),
        val: ids(&split.val),
    };
    Ok(Corpus {
        manifest,
        patches,
        split,
        warnings,
    })
}

/// Appends `copies` augmented versions of every training member and returns
/// the grown patch list with a split that puts them all on the train side.
/// Validation members are never augmented.
pub fn augment_training(
    patches: &[LabeledPatch],
    split: &Split,
    copies: usize,
    cfg: &AugmentConfig,
    seed: u64,
    exec: Exec,
) -> Result<(Vec<LabeledPatch>, Split)> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = split
        .train
        .iter()
        .flat_map(|&i| (0..copies).map(move |k| (i, k)))
        .collect();
    let made = exec.map(&jobs, |&(i, k)| -> Result<LabeledPatch> {
        let src = &patches[i];
        let mut rng = Rng::new(derive_seed(derive_seed(seed, i as u64), k as u64));
        let draw: AugmentDraw = sample_augmentation(cfg, &mut rng)?;
        Ok(LabeledPatch {
            image: draw.apply(&src.image, Interpolation::Nearest, 0.0)?,
            label: src.label,
            source: format!("{}#aug{k}", src.source),
        })
    });
    let mut all = patches.to_vec();
    let mut grown = split.clone();
    for p in made {
        grown.train.push(all.len());
        all.push(p?);
    }
    Ok((all, grown))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts_and_disjointness() {
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let s = stratified_split(&labels, 0.7, 5).unwrap();
        assert_eq!(s.train.len(), 14);
        assert_eq!(s.val.len(), 6);
        for c in 0..2 {
            assert_eq!(s.train.iter().filter(|&&i| labels[i] == c).count(), 7);
        }
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(s, stratified_split(&labels, 0.7, 5).unwrap());
        assert_ne!(s, stratified_split(&labels, 0.7, 6).unwrap());
    }

    #[test]
    fn tiny_classes_keep_one_each_side() {
        let s = stratified_split(&[0, 0, 1], 0.9, 1).unwrap();
        assert_eq!(s.train.len() + s.val.len(), 3);
        assert_eq!(s.val.len(), 1);
        assert!(s.train.contains(&2));
    }

    #[test]
    fn synthesize_is_deterministic_and_quantized() {
        let spec = SynthSpec::default_7class(3, 11);
        let a = synthesize(&spec, Exec::Parallel).unwrap();
        let b = synthesize(&spec, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 21);
        assert_eq!(a[4].label, 1);
        assert_eq!(a[4].source, "c1_cyst/c1_cyst_00001.ppm");
        let img = &a[0].image;
        assert_eq!((img.height(), img.width(), img.channels()), (50, 50, 3));
        assert_eq!(img, &img.quantized());
        let c = synthesize(&SynthSpec::default_7class(3, 12), Exec::Sequential).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn identical_classes_are_rejected() {
        let mut spec = SynthSpec::default_7class(2, 1);
        spec.classes[1].variants = spec.classes[0].variants.clone();
        assert!(matches!(
            synthesize(&spec, Exec::Sequential),
            Err(Error::Configuration(_))
        ));
        assert!(SynthSpec::default_for(3, 1, 1).is_err());
    }

    #[test]
    fn class_names_sort_in_index_order() {
        for spec in [
            SynthSpec::default_2class(1, 0),
            SynthSpec::default_7class(1, 0),
        ] {
            let names = spec.class_names();
            let mut sorted = names.clone();
            sorted.sort();
            assert_eq!(names, sorted);
        }
    }

    #[test]
    fn pixel_mean_rule_separates_skin() {
        let patches = synthesize(&SynthSpec::default_2class(200, 3), Exec::Parallel).unwrap();
        let correct = patches
            .iter()
            .filter(|p| {
                let px = p.image.data();
                let n = (px.len() / 3) as f64;
                let r: f64 = px.iter().step_by(3).sum::<f64>() / n;
                let b: f64 = px.iter().skip(2).step_by(3).sum::<f64>() / n;
                let predicted = if r - b > 0.15 { 0 } else { 1 };
                predicted == p.label
            })
            .count();
        let acc = correct as f64 / patches.len() as f64;
        assert!(acc > 0.9, "{acc}");
    }

    fn checkerboard() -> Vec<Vec<Option<usize>>> {
        (0..10)
            .map(|r| (0..10).map(|c| ((r + c) % 2 == 0).then_some(3)).collect())
            .collect()
    }

    #[test]
    fn scene_ground_truth() {
        let spec = SynthSpec::default_7class(1, 2);
        let scene = compose_scene(&spec, &default_nonskin_class(), &checkerboard(), 9).unwrap();
        assert_eq!(scene.skin_count(), 50);
        assert_eq!(
            scene.proportions(7),
            vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(scene.image.height(), 500);
        let again = compose_scene(&spec, &default_nonskin_class(), &checkerboard(), 9).unwrap();
        assert_eq!(scene, again);
        let uniform = vec![vec![Some(3); 10]; 10];
        let s = compose_scene(&spec, &default_nonskin_class(), &uniform, 1).unwrap();
        assert_eq!(s.proportions(7)[3], 1.0);
        let bad = vec![vec![None; 10]; 9];
        assert!(matches!(
            compose_scene(&spec, &default_nonskin_class(), &bad, 1),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn augmentation_touches_train_only() {
        let patches = synthesize(&SynthSpec::default_2class(5, 1), Exec::Sequential).unwrap();
        let labels: Vec<usize> = patches.iter().map(|p| p.label).collect();
        let split = stratified_split(&labels, 0.6, 2).unwrap();
        let cfg = AugmentConfig::default_for(50, 50);
        let (all, grown) = augment_training(&patches, &split, 2, &cfg, 4, Exec::Parallel).unwrap();
        assert_eq!(all.len(), 10 + 2 * split.train.len());
        assert_eq!(grown.val, split.val);
        assert_eq!(grown.train.len(), 3 * split.train.len());
        assert!(all[10..].iter().all(|p| p.source.contains("#aug")));
        let again = augment_training(&patches, &split, 2, &cfg, 4, Exec::Sequential).unwrap();
        assert_eq!(all, again.0);
    }
}
