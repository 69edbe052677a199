//! Two-stage tile diagnosis: a binary skin gate over a sliding-window grid,
//! then a seven-way lesion classifier on the skin tiles.

use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::{extract_features, ArchId, Model, PATCH_SIZE};
use crate::numerics::{Exec, Tensor};

/// Fallback skin threshold when no evaluation record is available.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Papule,
    Cyst,
    Blackhead,
    NormalSkin,
    Pustule,
    Whitehead,
    Nodule,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 7] = [
        ClassLabel::Papule,
        ClassLabel::Cyst,
        ClassLabel::Blackhead,
        ClassLabel::NormalSkin,
        ClassLabel::Pustule,
        ClassLabel::Whitehead,
        ClassLabel::Nodule,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Papule => "papule",
            ClassLabel::Cyst => "cyst",
            ClassLabel::Blackhead => "blackhead",
            ClassLabel::NormalSkin => "normal skin",
            ClassLabel::Pustule => "pustule",
            ClassLabel::Whitehead => "whitehead",
            ClassLabel::Nodule => "nodule",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub height: usize,
    pub width: usize,
    pub window: usize,
    pub stride: usize,
    /// `(row, col)` origins, row-major.
    pub origins: Vec<(usize, usize)>,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn rows(&self) -> usize {
        (self.height - self.window) / self.stride + 1
    }

    pub fn cols(&self) -> usize {
        (self.width - self.window) / self.stride + 1
    }
}

/// Origins at `0, stride, 2·stride, …` while the window still fits; the
/// ragged margin is dropped.
pub fn tile(img: &Image, window: usize, stride: usize) -> Result<TileGrid> {
    if window == 0 || stride == 0 {
        return Err(Error::Configuration(
            "window and stride must be positive".into(),
        ));
    }
    let (h, w) = (img.height(), img.width());
    if window > h.min(w) {
        return Err(Error::Geometry(format!(
            "window {window} does not fit a {h}x{w} image"
        )));
    }
    let rows: Vec<usize> = (0..=h - window).step_by(stride).collect();
    let cols: Vec<usize> = (0..=w - window).step_by(stride).collect();
    let origins = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    Ok(TileGrid {
        height: h,
        width: w,
        window,
        stride,
        origins,
    })
}

/// A patch classifier: either a model applied directly to the patch, or a
/// frozen feature extractor followed by a head.
#[derive(Debug, Clone, Copy)]
pub struct Classifier<'a> {
    extractor: Option<&'a Model>,
    head: &'a Model,
}

impl<'a> Classifier<'a> {
    pub fn new(extractor: Option<&'a Model>, head: &'a Model) -> Result<Self> {
        if head.num_classes().is_none() {
            return Err(Error::Configuration(format!(
                "{} is not a classifier",
                head.arch()
            )));
        }
        match extractor {
            Some(ex) => {
                if ex.arch() != ArchId::Vgg16Headless {
                    return Err(Error::Configuration(format!(
                        "extractor must be vgg16_headless, got {}",
                        ex.arch()
                    )));
                }
                if ex.output_shape() != head.input_shape() {
                    return Err(Error::dim(
                        "extractor output vs head input",
                        ex.output_shape(),
                        head.input_shape(),
                    ));
                }
            }
            None => {
                if head.input_shape() != [PATCH_SIZE, PATCH_SIZE, 3] {
                    return Err(Error::Configuration(format!(
                        "{} needs a feature extractor",
                        head.arch()
                    )));
                }
            }
        }
        Ok(Self { extractor, head })
    }

    pub fn classes(&self) -> usize {
        self.head.num_classes().unwrap_or(0)
    }

    pub fn extractor(&self) -> Option<&'a Model> {
        self.extractor
    }

    /// The tensor the head consumes for `patch`.
    pub fn head_input(&self, patch: &Image) -> Result<Tensor> {
        match self.extractor {
            Some(ex) => Ok(extract_features(ex, patch)?.to_tensor()),
            None => Ok(patch.to_tensor()),
        }
    }

    pub fn probabilities(&self, patch: &Image) -> Result<Vec<f64>> {
        self.head_probabilities(&self.head_input(patch)?)
    }

    pub fn head_probabilities(&self, input: &Tensor) -> Result<Vec<f64>> {
        Ok(self.head.infer(input)?.into_data())
    }

    fn same_extractor(&self, other: &Classifier<'_>) -> bool {
        match (self.extractor, other.extractor) {
            (Some(a), Some(b)) => std::ptr::eq(a, b),
            (None, None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinMask {
    pub grid: TileGrid,
    /// Row-major, parallel to `grid.origins`.
    pub skin: Vec<bool>,
    pub p_skin: Vec<f64>,
    pub threshold: f64,
}

impl SkinMask {
    pub fn skin_count(&self) -> usize {
        self.skin.iter().filter(|&&s| s).count()
    }

    /// `row,col,p_skin,skin` with one line per tile.
    pub fn tiles_csv(&self) -> String {
        let mut s = String::from("row,col,p_skin,skin\n");
        for ((&(r, c), p), k) in self.grid.origins.iter().zip(&self.p_skin).zip(&self.skin) {
            let _ = writeln!(s, "{r},{c},{p},{}", u8::from(*k));
        }
        s
    }

    /// Single-channel mask: 1 inside skin tiles, 0 elsewhere.
    pub fn to_gray(&self) -> Image {
        let mut gray =
            Image::filled(self.grid.height, self.grid.width, 1, 0.0).expect("grid has valid size");
        let w = self.grid.window;
        for (&(r0, c0), _) in self.grid.origins.iter().zip(&self.skin).filter(|(_, &s)| s) {
            for r in r0..r0 + w {
                for c in c0..c0 + w {
                    gray.set(r, c, 0, 1.0);
                }
            }
        }
        gray
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::Configuration(format!(
            "threshold {threshold} outside (0, 1]"
        )))
    }
}

fn tile_inputs(
    img: &Image,
    grid: &TileGrid,
    clf: &Classifier<'_>,
    exec: Exec,
) -> Result<Vec<Tensor>> {
    let w = grid.window;
    if w != PATCH_SIZE {
        return Err(Error::Configuration(format!(
            "classifier tiles must be {PATCH_SIZE} pixels, got window {w}"
        )));
    }
    exec.map(&grid.origins, |&(r, c)| {
        clf.head_input(&img.crop(r, c, w, w)?)
    })
    .into_iter()
    .collect()
}

fn skin_from_inputs(
    grid: TileGrid,
    inputs: &[Tensor],
    gate: &Classifier<'_>,
    threshold: f64,
    exec: Exec,
) -> Result<SkinMask> {
    let p_skin = exec
        .map(inputs, |x| gate.head_probabilities(x).map(|p| p[0]))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    Ok(SkinMask {
        grid,
        skin: p_skin.iter().map(|&p| p >= threshold).collect(),
        p_skin,
        threshold,
    })
}

/// Marks a tile as skin iff the gate's class-0 probability is at least
/// `threshold`.
pub fn detect_skin(
    img: &Image,
    gate: &Classifier<'_>,
    threshold: f64,
    window: usize,
    stride: usize,
    exec: Exec,
) -> Result<SkinMask> {
    check_threshold(threshold)?;
    if gate.classes() != 2 {
        return Err(Error::Configuration(format!(
            "skin gate must have 2 classes, got {}",
            gate.classes()
        )));
    }
    let grid = tile(img, window, stride)?;
    let inputs = tile_inputs(img, &grid, gate, exec)?;
    skin_from_inputs(grid, &inputs, gate, threshold, exec)
}

/// Blacks out every non-skin tile.
pub fn render_mask(img: &Image, mask: &SkinMask) -> Result<Image> {
    let g = &mask.grid;
    if g.height != img.height() || g.width != img.width() || mask.skin.len() != g.origins.len() {
        return Err(Error::Geometry(format!(
            "mask grid {}x{} does not match image {}x{}",
            g.height,
            g.width,
            img.height(),
            img.width()
        )));
    }
    let mut out = img.clone();
    for (&(r0, c0), _) in g.origins.iter().zip(&mask.skin).filter(|(_, &s)| !s) {
        for r in r0..r0 + g.window {
            for c in c0..c0 + g.window {
                for ch in 0..img.channels() {
                    out.set(r, c, ch, 0.0);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileResult {
    pub row: usize,
    pub col: usize,
    pub p_skin: f64,
    pub skin: bool,
    /// Lesion class for skin tiles.
    pub class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub class_names: Vec<String>,
    pub proportions: Vec<f64>,
    pub skin_tile_count: usize,
    pub total_tile_count: usize,
    /// Set when no tile passed the skin gate.
    pub empty: bool,
    pub threshold: f64,
    pub per_tile: Vec<TileResult>,
}

impl DiagnosisReport {
    pub fn from_tiles(per_tile: Vec<TileResult>, threshold: f64) -> Result<Self> {
        let mut counts = [0usize; 7];
        for t in &per_tile {
            if let Some(k) = t.class {
                *counts
                    .get_mut(k)
                    .ok_or_else(|| Error::Data(format!("class {k} out of range")))? += 1;
            }
        }
        let skin = counts.iter().sum::<usize>();
        let proportions = counts
            .iter()
            .map(|&c| {
                if skin == 0 {
                    0.0
                } else {
                    c as f64 / skin as f64
                }
            })
            .collect();
        Ok(Self {
            class_names: ClassLabel::names(),
            proportions,
            skin_tile_count: skin,
            total_tile_count: per_tile.len(),
            empty: skin == 0,
            threshold,
            per_tile,
        })
    }

    /// Proportions as a bracketed row, zeros written as `0`.
    pub fn format_row(&self) -> String {
        format_proportions(&self.proportions)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `class,name,proportion` with classes in index order.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("class,name,proportion\n");
        for (i, (name, p)) in self.class_names.iter().zip(&self.proportions).enumerate() {
            let _ = writeln!(s, "c{i},{name},{p}");
        }
        s
    }
}

/// `[0, 0, 0.01, 0.97, 0, 0.02, 0]`
pub fn format_proportions(p: &[f64]) -> String {
    let cells: Vec<String> = p
        .iter()
        .map(|&v| {
            if v == 0.0 {
                "0".to_string()
            } else {
                format!("{v:.2}")
            }
        })
        .collect();
    format!("[{}]", cells.join(", "))
}

/// Skin gate, then seven-way classification of every skin tile.
pub fn diagnose(
    img: &Image,
    gate: &Classifier<'_>,
    lesion: &Classifier<'_>,
    threshold: f64,
    window: usize,
    stride: usize,
    exec: Exec,
) -> Result<(DiagnosisReport, SkinMask)> {
    check_threshold(threshold)?;
    if lesion.classes() != ClassLabel::ALL.len() {
        return Err(Error::Configuration(format!(
            "lesion classifier must have 7 classes, got {}",
            lesion.classes()
        )));
    }
    if gate.classes() != 2 {
        return Err(Error::Configuration(format!(
            "skin gate must have 2 classes, got {}",
            gate.classes()
        )));
    }
    let grid = tile(img, window, stride)?;
    let gate_inputs = tile_inputs(img, &grid, gate, exec)?;
    let mask = skin_from_inputs(grid.clone(), &gate_inputs, gate, threshold, exec)?;

    let skin_idx: Vec<usize> = (0..grid.len()).filter(|&i| mask.skin[i]).collect();
    let classes = exec
        .map(&skin_idx, |&i| -> Result<usize> {
            let probs = if gate.same_extractor(lesion) {
                lesion.head_probabilities(&gate_inputs[i])?
            } else {
                let (r, c) = grid.origins[i];
                lesion.probabilities(&img.crop(r, c, window, window)?)?
            };
            Ok(crate::numerics::argmax(&probs))
        })
        .into_iter()
        .collect::<Result<Vec<usize>>>()?;

    let mut per_tile: Vec<TileResult> = grid
        .origins
        .iter()
        .enumerate()
        .map(|(i, &(row, col))| TileResult {
            row,
            col,
            p_skin: mask.p_skin[i],
            skin: mask.skin[i],
            class: None,
        })
        .collect();
    for (&i, &k) in skin_idx.iter().zip(&classes) {
        per_tile[i].class = Some(k);
    }
    Ok((DiagnosisReport::from_tiles(per_tile, threshold)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_architecture;

    fn img(h: usize, w: usize) -> Image {
        Image::filled(h, w, 3, 0.5).unwrap()
    }

    /// Head whose output is softmax of a constant bias vector.
    fn rigged_head(arch: ArchId, logits: &[f64]) -> Model {
        let mut m = build_architecture(arch).unwrap();
        let n = m.parameters().len();
        for i in 0..n {
            let shape = m.parameters()[i].1.shape().to_vec();
            let value = if i == n - 1 {
                Tensor::new(shape, logits.to_vec()).unwrap()
            } else {
                Tensor::zeros(&shape)
            };
            m.set_parameter(i, value).unwrap();
        }
        m
    }

    #[test]
    fn tiling_counts() {
        assert_eq!(tile(&img(500, 500), 50, 50).unwrap().len(), 100);
        let one = tile(&img(50, 50), 50, 50).unwrap();
        assert_eq!(one.origins, vec![(0, 0)]);
        let g = tile(&img(120, 70), 50, 50).unwrap();
        assert_eq!(g.origins, vec![(0, 0), (50, 0)]);
        assert_eq!((g.rows(), g.cols()), (2, 1));
        assert!(matches!(
            tile(&img(40, 60), 50, 50),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn aligned_tiling_partitions_pixels() {
        let g = tile(&img(150, 100), 50, 50).unwrap();
        let mut hits = vec![0u32; 150 * 100];
        for &(r0, c0) in &g.origins {
            for r in r0..r0 + 50 {
                for c in c0..c0 + 50 {
                    hits[r * 100 + c] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn class_labels_round_trip() {
        for (i, c) in ClassLabel::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(ClassLabel::from_index(i), Some(*c));
            assert_eq!(ClassLabel::from_name(c.name()), Some(*c));
        }
        assert_eq!(ClassLabel::from_index(7), None);
        assert_eq!(ClassLabel::NormalSkin.name(), "normal skin");
    }

    #[test]
    fn table_row_format() {
        assert_eq!(
            format_proportions(&[0.0, 0.0, 0.01, 0.97, 0.0, 0.02, 0.0]),
            "[0, 0, 0.01, 0.97, 0, 0.02, 0]"
        );
    }

    #[test]
    fn rigged_gate_all_skin_and_constant_class() {
        let vgg = build_architecture(ArchId::Vgg16Headless).unwrap();
        let h2 = rigged_head(ArchId::ClassifierHead2, &[50.0, -50.0]);
        let h7 = rigged_head(
            ArchId::ClassifierHead7,
            &[0.0, 0.0, 0.0, 9.0, 0.0, 0.0, 0.0],
        );
        let gate = Classifier::new(Some(&vgg), &h2).unwrap();
        let lesion = Classifier::new(Some(&vgg), &h7).unwrap();
        let image = img(100, 150);
        let (report, mask) = diagnose(&image, &gate, &lesion, 0.5, 50, 50, Exec::Parallel).unwrap();
        assert_eq!(mask.skin_count(), 6);
        assert_eq!(report.proportions, vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(report.total_tile_count, 6);
        assert!(!report.empty);
        assert_eq!(render_mask(&image, &mask).unwrap(), image);
    }

    #[test]
    fn rigged_gate_no_skin() {
        let vgg = build_architecture(ArchId::Vgg16Headless).unwrap();
        let h2 = rigged_head(ArchId::ClassifierHead2, &[-50.0, 50.0]);
        let h7 = rigged_head(ArchId::ClassifierHead7, &[0.0; 7]);
        let gate = Classifier::new(Some(&vgg), &h2).unwrap();
        let lesion = Classifier::new(Some(&vgg), &h7).unwrap();
        let image = img(100, 100);
        let (report, mask) =
            diagnose(&image, &gate, &lesion, 0.5, 50, 50, Exec::Sequential).unwrap();
        assert!(report.empty);
        assert_eq!(report.skin_tile_count, 0);
        assert!(report.proportions.iter().all(|&p| p == 0.0));
        let black = render_mask(&image, &mask).unwrap();
        assert!(black.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_monotone_and_single_tile_mask() {
        let tiny = build_architecture(ArchId::TinyCnn).unwrap();
        let gate = Classifier::new(None, &tiny).unwrap();
        let image = img(100, 100);
        let lo = detect_skin(&image, &gate, 0.3, 50, 50, Exec::Parallel).unwrap();
        let hi = detect_skin(&image, &gate, 0.7, 50, 50, Exec::Parallel).unwrap();
        for (a, b) in lo.skin.iter().zip(&hi.skin) {
            assert!(*a || !*b);
        }
        let mut mask = lo.clone();
        mask.skin = vec![true, false, true, true];
        let out = render_mask(&image, &mask).unwrap();
        let changed = image
            .data()
            .chunks(3)
            .zip(out.data().chunks(3))
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 2500);
        assert!(detect_skin(&image, &gate, 0.0, 50, 50, Exec::Parallel).is_err());
    }

    #[test]
    fn classifier_validation() {
        let vgg = build_architecture(ArchId::Vgg16Headless).unwrap();
        let h2 = build_architecture(ArchId::ClassifierHead2).unwrap();
        let tiny = build_architecture(ArchId::TinyCnn).unwrap();
        assert!(Classifier::new(None, &h2).is_err());
        assert!(Classifier::new(Some(&vgg), &tiny).is_err());
        assert!(Classifier::new(None, &vgg).is_err());
        assert!(Classifier::new(Some(&vgg), &h2).is_ok());
    }

    #[test]
    fn report_proportions_sum_to_one() {
        let tiles = (0..10)
            .map(|i| TileResult {
                row: i,
                col: 0,
                p_skin: 1.0,
                skin: i != 0,
                class: (i != 0).then_some(i % 7),
            })
            .collect();
        let r = DiagnosisReport::from_tiles(tiles, 0.5).unwrap();
        assert_eq!(r.skin_tile_count, 9);
        assert!((r.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.histogram_csv().lines().count(), 8);
    }
}
