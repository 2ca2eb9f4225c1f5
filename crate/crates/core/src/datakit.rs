//! Dataset manifests, feature files, image ingestion and a synthetic
//! subclass-structured generator.
//!
//! A manifest is a CSV file with the header
//! `id,subject_id,class,ethnicity,gender,tool,source_kind,source_path`.
//! Feature sources are written `<file>#<column>`, naming a column of an
//! S3AF feature file relative to the manifest's directory. Image sources
//! are PNG or BMP paths, also relative to the manifest.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::codec::{dim_u32, element_count, put_f64s, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};
use crate::partition::{build_partition, GroupPartition};

pub const MANIFEST_HEADER: [&str; 8] = [
    "id",
    "subject_id",
    "class",
    "ethnicity",
    "gender",
    "tool",
    "source_kind",
    "source_path",
];

pub const FEATURE_MAGIC: &[u8; 4] = b"S3AF";
pub const FEATURE_FORMAT_VERSION: u32 = 1;
/// Side length images are resized to.
pub const IMAGE_SIDE: usize = 256;
/// Feature file named by manifests from [`generate_synthetic`].
pub const SYNTH_FEATURE_FILE: &str = "features.s3af";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassLabel {
    Original,
    Retouched,
}

impl ClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Original => "ORIGINAL",
            ClassLabel::Retouched => "RETOUCHED",
        }
    }

    /// Index on the class axis of the partition.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Original => 0,
            ClassLabel::Retouched => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "FEMALE",
            Gender::Male => "MALE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Tool {
    Tool1,
    Tool2,
}

impl Tool {
    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Tool1 => "TOOL1",
            Tool::Tool2 => "TOOL2",
        }
    }

    /// Canonical tags plus the retouching apps they stand for.
    pub fn parse(tag: &str) -> Option<Tool> {
        match tag {
            "TOOL1" | "BP" | "BeautyPlus" | "MakeupPlus" => Some(Tool::Tool1),
            "TOOL2" | "PP" | "PortraitPro" | "PotraitPro" => Some(Tool::Tool2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Feature,
    Image,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Feature => "feature",
            SourceKind::Image => "image",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubclassScheme {
    #[default]
    Ethnicity,
    Gender,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub id: String,
    pub subject_id: String,
    pub class_label: ClassLabel,
    pub ethnicity: String,
    pub gender: Gender,
    pub tool: Option<Tool>,
    pub source_kind: SourceKind,
    pub source_path: String,
}

impl SampleRecord {
    /// File and column of a feature source.
    pub fn feature_ref(&self) -> Option<(&str, usize)> {
        if self.source_kind != SourceKind::Feature {
            return None;
        }
        split_feature_ref(&self.source_path)
    }
}

fn split_feature_ref(path: &str) -> Option<(&str, usize)> {
    let (file, col) = path.rsplit_once('#')?;
    if file.is_empty() || col.is_empty() || !col.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((file, col.parse().ok()?))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    pub subclass_scheme: SubclassScheme,
}

impl DatasetManifest {
    pub fn new(records: Vec<SampleRecord>, subclass_scheme: SubclassScheme) -> Result<Self> {
        let m = Self {
            records,
            subclass_scheme,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let mut seen = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let line = i as u64 + 2;
            check_record(r, line)?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }

    /// Records matching `keep`, in their original order.
    pub fn filter(&self, keep: impl Fn(&SampleRecord) -> bool) -> DatasetManifest {
        DatasetManifest {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            subclass_scheme: self.subclass_scheme,
        }
    }

    pub fn select(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            subclass_scheme: self.subclass_scheme,
        }
    }

    pub fn ethnicities(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.ethnicity.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn class_labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.class_label.index()).collect()
    }

    /// Subclass index of every record under the manifest's scheme, with the
    /// sorted tag vocabulary the indices refer to.
    pub fn subclass_labels(&self) -> (Vec<usize>, Vec<String>) {
        let tag = |r: &SampleRecord| match self.subclass_scheme {
            SubclassScheme::Ethnicity => r.ethnicity.clone(),
            SubclassScheme::Gender => r.gender.as_str().to_owned(),
        };
        let vocab: Vec<String> = self
            .records
            .iter()
            .map(tag)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let labels = self
            .records
            .iter()
            .map(|r| vocab.binary_search(&tag(r)).expect("tag in vocabulary"))
            .collect();
        (labels, vocab)
    }

    pub fn partition(&self) -> Result<GroupPartition> {
        build_partition(&self.class_labels(), &self.subclass_labels().0)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(MANIFEST_HEADER).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.id.as_str(),
                &r.subject_id,
                r.class_label.as_str(),
                &r.ethnicity,
                r.gender.as_str(),
                r.tool.map_or("", Tool::as_str),
                r.source_kind.as_str(),
                &r.source_path,
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

fn check_record(r: &SampleRecord, line: u64) -> Result<()> {
    let invariant = |message: String| Error::RecordInvariant { line, message };
    for (name, value) in [("id", &r.id), ("subject_id", &r.subject_id), ("ethnicity", &r.ethnicity)] {
        if !is_identifier(value) {
            return Err(invariant(format!("{name} `{value}` is not an identifier")));
        }
    }
    match (r.class_label, r.tool) {
        (ClassLabel::Original, Some(t)) => {
            return Err(invariant(format!("ORIGINAL record `{}` carries tool {}", r.id, t.as_str())))
        }
        (ClassLabel::Retouched, None) => {
            return Err(invariant(format!("RETOUCHED record `{}` has no tool", r.id)))
        }
        _ => {}
    }
    if r.source_path.is_empty() || r.source_path.contains([',', '"', '\n', '\r']) {
        return Err(invariant(format!("bad source_path `{}`", r.source_path)));
    }
    if r.source_kind == SourceKind::Feature && r.feature_ref().is_none() {
        return Err(invariant(format!(
            "feature source `{}` is not of the form <file>#<column>",
            r.source_path
        )));
    }
    Ok(())
}

/// Parses manifest CSV text. Line numbers in errors are 1-based and count
/// the header.
pub fn parse_manifest(bytes: &[u8]) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(bytes);
    let mut rows = reader.records();
    let line_of = |e: &csv::Error| e.position().map_or(0, |p| p.line());
    let header = match rows.next() {
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
        Some(h) => h.map_err(|e| Error::Parse {
            line: line_of(&e).max(1),
            message: e.to_string(),
        })?,
    };
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must be `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rows {
        let row = row.map_err(|e| Error::Parse {
            line: line_of(&e),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        for f in row.iter() {
            if f.contains([',', '"', '\n', '\r']) {
                return Err(Error::Parse {
                    line,
                    message: format!("field `{f}` holds a separator or quote"),
                });
            }
        }
        let unknown = |field: &'static str, value: &str| Error::UnknownTag {
            line,
            field,
            value: value.to_owned(),
        };
        let class_label = match field(2) {
            "ORIGINAL" => ClassLabel::Original,
            "RETOUCHED" => ClassLabel::Retouched,
            v => return Err(unknown("class", v)),
        };
        let gender = match field(4) {
            "FEMALE" => Gender::Female,
            "MALE" => Gender::Male,
            v => return Err(unknown("gender", v)),
        };
        let tool = match field(5) {
            "" => None,
            v => Some(Tool::parse(v).ok_or_else(|| unknown("tool", v))?),
        };
        let source_kind = match field(6) {
            "feature" => SourceKind::Feature,
            "image" => SourceKind::Image,
            v => return Err(unknown("source_kind", v)),
        };
        let record = SampleRecord {
            id: field(0).to_owned(),
            subject_id: field(1).to_owned(),
            class_label,
            ethnicity: field(3).to_owned(),
            gender,
            tool,
            source_kind,
            source_path: field(7).to_owned(),
        };
        check_record(&record, line)?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId(record.id));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyManifest);
    }
    Ok(DatasetManifest {
        records,
        subclass_scheme: SubclassScheme::default(),
    })
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&bytes)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    std::fs::write(path, manifest.to_csv_string()?).map_err(|e| Error::io(path, e))
}

/// S3AF bytes: magic, version, rows, cols (u32 LE), then the values
/// row-major as f64 LE.
pub fn encode_features(m: &Matrix) -> Result<Vec<u8>> {
    let (rows, cols) = dim_u32(m.rows(), m.cols())?;
    let mut out = Vec::with_capacity(16 + m.data().len() * 8);
    out.extend_from_slice(FEATURE_MAGIC);
    put_u32(&mut out, FEATURE_FORMAT_VERSION);
    put_u32(&mut out, rows);
    put_u32(&mut out, cols);
    put_f64s(&mut out, m.data());
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Matrix> {
    let mut r = ByteReader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    let version = r.u32()?;
    if version != FEATURE_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let rows = r.u32()?;
    let cols = r.u32()?;
    let n = element_count(rows, cols)?;
    let data = r.f64s(n)?;
    r.finish()?;
    Matrix::from_vec(rows as usize, cols as usize, data)
}

pub fn save_features(path: &Path, m: &Matrix) -> Result<()> {
    std::fs::write(path, encode_features(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

/// Bilinear resize of a row-major `width × height` plane with half-pixel
/// centres and edge clamping.
pub fn resize_bilinear(
    src: &[f64],
    width: usize,
    height: usize,
    target_w: usize,
    target_h: usize,
) -> Result<Vec<f64>> {
    if width == 0 || height == 0 || target_w == 0 || target_h == 0 {
        return Err(Error::ZeroAreaImage);
    }
    if src.len() != width * height {
        return Err(Error::Shape(format!(
            "{} pixels for a {width}x{height} image",
            src.len()
        )));
    }
    let axis = |i: usize, from: usize, to: usize| {
        let s = ((i as f64 + 0.5) * from as f64 / to as f64 - 0.5).clamp(0.0, (from - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(from - 1);
        (lo, hi, s - lo as f64)
    };
    let xs: Vec<_> = (0..target_w).map(|x| axis(x, width, target_w)).collect();
    let mut out = Vec::with_capacity(target_w * target_h);
    for y in 0..target_h {
        let (y0, y1, fy) = axis(y, height, target_h);
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * width + x0] * (1.0 - fx) + src[y0 * width + x1] * fx;
            let bottom = src[y1 * width + x0] * (1.0 - fx) + src[y1 * width + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

/// Luminance in `[0, 1]` of an 8-bit image, row-major.
pub fn luminance(img: &image::DynamicImage) -> (usize, usize, Vec<f64>) {
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let values = rgb
        .pixels()
        .map(|p| {
            (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
        })
        .collect();
    (w as usize, h as usize, values)
}

/// Reads an image, converts it to luminance and resizes it to
/// `side × side`, flattened row-major.
pub fn vectorize_image(path: &Path, side: usize) -> Result<Vec<f64>> {
    let unreadable = |message: String| Error::UnreadableImage {
        path: path.to_owned(),
        message,
    };
    let format = image::ImageFormat::from_path(path).map_err(|e| unreadable(e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Bmp) {
        return Err(unreadable(format!("unsupported format {format:?}")));
    }
    let img = image::open(path).map_err(|e| unreadable(e.to_string()))?;
    let (w, h, values) = luminance(&img);
    resize_bilinear(&values, w, h, side, side)
}

/// Averages non-overlapping `factor × factor` blocks of every column, each
/// column holding a `side × side` image row-major.
pub fn average_pool(m: &Matrix, side: usize, factor: usize) -> Result<Matrix> {
    if factor == 0 || side == 0 || !side.is_multiple_of(factor) {
        return Err(Error::InvalidConfig(format!(
            "pool factor {factor} does not divide side {side}"
        )));
    }
    if m.rows() != side * side {
        return Err(Error::Shape(format!(
            "{} rows are not a {side}x{side} image",
            m.rows()
        )));
    }
    let out_side = side / factor;
    let norm = (factor * factor) as f64;
    Ok(Matrix::from_fn(out_side * out_side, m.cols(), |r, c| {
        let (by, bx) = (r / out_side, r % out_side);
        let mut acc = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                acc += m.get((by * factor + dy) * side + bx * factor + dx, c);
            }
        }
        acc / norm
    }))
}

/// Side length of a square image stored in `rows` values.
pub fn square_side(rows: usize) -> Option<usize> {
    let s = (rows as f64).sqrt().round() as usize;
    (s * s == rows).then_some(s)
}

/// Feature column for every record, in manifest order. Feature files and
/// image paths are resolved relative to `base_dir`.
pub fn resolve_features(manifest: &DatasetManifest, base_dir: &Path) -> Result<Matrix> {
    let mut files: BTreeMap<&str, Matrix> = BTreeMap::new();
    let mut columns = Vec::with_capacity(manifest.len());
    for r in &manifest.records {
        let col = match r.source_kind {
            SourceKind::Feature => {
                let (file, c) = r.feature_ref().ok_or_else(|| Error::RecordInvariant {
                    line: 0,
                    message: format!("bad feature source `{}`", r.source_path),
                })?;
                if !files.contains_key(file) {
                    files.insert(file, load_features(&base_dir.join(file))?);
                }
                let m = &files[file];
                if c >= m.cols() {
                    return Err(Error::Index { index: c, cols: m.cols() });
                }
                m.column(c)
            }
            SourceKind::Image => vectorize_image(&base_dir.join(&r.source_path), IMAGE_SIDE)?,
        };
        columns.push(col);
    }
    Matrix::from_columns(&columns)
}

/// Directory that relative manifest sources are resolved against.
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Per-feature training mean, subtracted from every later input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    pub mean: Vec<f64>,
}

impl Centering {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.cols() == 0 {
            return Err(Error::EmptyBatch);
        }
        let n = x.cols() as f64;
        let mean = (0..x.rows())
            .map(|r| x.row(r).iter().fold(0.0, |a, v| a + v) / n)
            .collect();
        Ok(Self { mean })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.mean.len() {
            return Err(Error::Shape(format!(
                "{} features, centering fitted on {}",
                x.rows(),
                self.mean.len()
            )));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |r, c| x.get(r, c) - self.mean[r]))
    }
}

/// Two classes, each split into `subclasses_per_class` Gaussian subclasses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub input_dim: usize,
    pub subclasses_per_class: usize,
    pub samples_per_group: usize,
    pub class_shift: f64,
    pub subclass_shift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            subclasses_per_class: 2,
            samples_per_group: 50,
            class_shift: 1.0,
            subclass_shift: 3.0,
            noise_sigma: 0.01,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.subclasses_per_class == 0 || self.samples_per_group == 0 {
            return bad("counts must be at least 1");
        }
        if self.input_dim < self.subclasses_per_class + 1 {
            return bad("input_dim must exceed subclasses_per_class");
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be positive");
        }
        if !self.class_shift.is_finite() || !self.subclass_shift.is_finite() {
            return bad("shifts must be finite");
        }
        Ok(())
    }

    /// Mean of group `(class, subclass)` given the generator's directions.
    pub fn group_mean(&self, directions: &[Vec<f64>], class: usize, subclass: usize) -> Vec<f64> {
        let cs = (class as f64 - 0.5) * self.class_shift;
        (0..self.input_dim)
            .map(|i| cs * directions[0][i] + self.subclass_shift * directions[1 + subclass][i])
            .collect()
    }
}

/// Orthonormal directions: the class axis followed by one axis per
/// subclass, drawn from the generator stream.
pub fn synth_directions(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(cfg.subclasses_per_class + 1);
    while dirs.len() < cfg.subclasses_per_class + 1 {
        let mut v: Vec<f64> = (0..cfg.input_dim).map(|_| StandardNormal.sample(rng)).collect();
        for u in &dirs {
            let p = dot(&v, u);
            for (a, b) in v.iter_mut().zip(u) {
                *a -= p * b;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            dirs.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    dirs
}

/// Samples `N(μ_class + μ_subclass, σ²I)`. Class means sit at `∓class_shift/2`
/// along the class direction and subclass `j` adds `subclass_shift` along its
/// own orthogonal direction. Each synthetic subject contributes one original
/// and one retouched sample of its subclass (ethnicity tag `E<j>`); gender
/// and tool alternate over subjects so that every combination occurs.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<(Matrix, DatasetManifest)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs = synth_directions(cfg, &mut rng);
    let n = 2 * cfg.subclasses_per_class * cfg.samples_per_group;
    let mut columns = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for j in 0..cfg.subclasses_per_class {
        let means = [cfg.group_mean(&dirs, 0, j), cfg.group_mean(&dirs, 1, j)];
        for k in 0..cfg.samples_per_group {
            let subject = format!("s{j}_{k:05}");
            let gender = if k % 2 == 0 { Gender::Female } else { Gender::Male };
            let tool = if (k / 2) % 2 == 0 { Tool::Tool1 } else { Tool::Tool2 };
            for class in [ClassLabel::Original, ClassLabel::Retouched] {
                let mean = &means[class.index()];
                let col: Vec<f64> = mean
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + cfg.noise_sigma * z
                    })
                    .collect();
                let suffix = match class {
                    ClassLabel::Original => "o",
                    ClassLabel::Retouched => "r",
                };
                records.push(SampleRecord {
                    id: format!("{subject}_{suffix}"),
                    subject_id: subject.clone(),
                    class_label: class,
                    ethnicity: format!("E{j}"),
                    gender,
                    tool: (class == ClassLabel::Retouched).then_some(tool),
                    source_kind: SourceKind::Feature,
                    source_path: format!("{SYNTH_FEATURE_FILE}#{}", columns.len()),
                });
                columns.push(col);
            }
        }
    }
    let manifest = DatasetManifest::new(records, SubclassScheme::Ethnicity)?;
    Ok((Matrix::from_columns(&columns)?, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "\
id,subject_id,class,ethnicity,gender,tool,source_kind,source_path
a1,s1,ORIGINAL,ASIAN,FEMALE,,feature,f.s3af#0
a2,s1,RETOUCHED,ASIAN,FEMALE,TOOL1,feature,f.s3af#1
b1,s2,RETOUCHED,AFRICAN,MALE,TOOL2,image,img/b1.png
b2,s2,ORIGINAL,AFRICAN,MALE,,image,img/b2.bmp
c1,s3,RETOUCHED,CAUCASIAN,MALE,TOOL1,feature,f.s3af#2
c2,s3,RETOUCHED,CAUCASIAN,MALE,TOOL2,feature,f.s3af#3
";

    #[test]
    fn fixture_round_trips() {
        let m = parse_manifest(FIXTURE.as_bytes()).unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m.to_csv_string().unwrap(), FIXTURE);
        assert_eq!(m.records[1].feature_ref(), Some(("f.s3af", 1)));
        assert_eq!(m.records[2].feature_ref(), None);
    }

    #[test]
    fn manifest_errors() {
        let header = MANIFEST_HEADER.join(",") + "\n";
        assert!(matches!(parse_manifest(header.as_bytes()), Err(Error::EmptyManifest)));
        let bp = format!("{header}x,s,ORIGINAL,E,MALE,BP,feature,f#0\n");
        assert!(matches!(
            parse_manifest(bp.as_bytes()),
            Err(Error::RecordInvariant { line: 2, .. })
        ));
        let dup = format!("{header}x,s,ORIGINAL,E,MALE,,feature,f#0\nx,s,ORIGINAL,E,MALE,,feature,f#1\n");
        assert!(matches!(parse_manifest(dup.as_bytes()), Err(Error::DuplicateId(_))));
        let tag = format!("{header}x,s,ORIGINAL,E,OTHER,,feature,f#0\n");
        assert!(matches!(
            parse_manifest(tag.as_bytes()),
            Err(Error::UnknownTag { line: 2, field: "gender", .. })
        ));
        let short = format!("{header}x,s,ORIGINAL,E,MALE,,feature,f#0\ny,s,ORIGINAL\n");
        assert!(matches!(parse_manifest(short.as_bytes()), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_manifest(b"id,oops\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tool_aliases_normalise() {
        let header = MANIFEST_HEADER.join(",") + "\n";
        let text = format!(
            "{header}x,s,RETOUCHED,E,MALE,BeautyPlus,feature,f#0\ny,s,RETOUCHED,E,MALE,PortraitPro,feature,f#1\n"
        );
        let m = parse_manifest(text.as_bytes()).unwrap();
        assert_eq!(m.records[0].tool, Some(Tool::Tool1));
        assert_eq!(m.records[1].tool, Some(Tool::Tool2));
    }

    #[test]
    fn filter_preserves_order() {
        let m = parse_manifest(FIXTURE.as_bytes()).unwrap();
        let males = m.filter(|r| r.gender == Gender::Male);
        let ids: Vec<_> = males.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["b1", "b2", "c1", "c2"]);
    }

    #[test]
    fn features_round_trip_and_errors() {
        let m = Matrix::from_fn(10, 7, |r, c| (r as f64 - 3.3) * (c as f64 + 0.7).sin());
        let bytes = encode_features(&m).unwrap();
        assert_eq!(bytes.len(), 16 + 70 * 8);
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back.data(), m.data());
        assert_eq!(encode_features(&back).unwrap(), bytes);

        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(decode_features(&wrong), Err(Error::BadMagic { .. })));
        // Cut 3 bytes into the 6th value: the 6th value starts at 16 + 5·8.
        let cut = &bytes[..16 + 5 * 8 + 3];
        assert!(matches!(
            decode_features(cut),
            Err(Error::TruncatedFile { offset: 56, .. })
        ));
        let mut huge = bytes[..16].to_vec();
        huge[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(
            decode_features(&huge),
            Err(Error::DimOverflow { .. }) | Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn checkerboard_upsample_matches_hand_values() {
        let src = [0.0, 1.0, 1.0, 0.0];
        let out = resize_bilinear(&src, 2, 2, 4, 4).unwrap();
        // Source coordinates per axis are -0.25, 0.25, 0.75, 1.25, clamped to
        // [0, 1], giving fractions 0, 0.25, 0.75, 1 and value fx + fy − 2fx·fy.
        let expected = [
            0.0, 0.25, 0.75, 1.0, //
            0.25, 0.375, 0.625, 0.75, //
            0.75, 0.625, 0.375, 0.25, //
            1.0, 0.75, 0.25, 0.0,
        ];
        for (a, e) in out.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn same_size_resize_is_identity() {
        let src: Vec<f64> = (0..IMAGE_SIDE * IMAGE_SIDE).map(|i| ((i * 37) % 255) as f64 / 255.0).collect();
        let out = resize_bilinear(&src, IMAGE_SIDE, IMAGE_SIDE, IMAGE_SIDE, IMAGE_SIDE).unwrap();
        for (a, b) in out.iter().zip(&src) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(resize_bilinear(&[], 0, 3, 4, 4), Err(Error::ZeroAreaImage)));
    }

    #[test]
    fn average_pool_blocks() {
        let m = Matrix::from_fn(16, 1, |r, _| r as f64);
        let p = average_pool(&m, 4, 2).unwrap();
        assert_eq!(p.column(0), vec![2.5, 4.5, 10.5, 12.5]);
        assert!(average_pool(&m, 4, 3).is_err());
    }

    #[test]
    fn centering_uses_training_mean() {
        let x = Matrix::from_rows(&[[1.0, 3.0], [10.0, 20.0]]);
        let c = Centering::fit(&x).unwrap();
        assert_eq!(c.mean, vec![2.0, 15.0]);
        let y = c.apply(&Matrix::from_rows(&[[2.0], [0.0]])).unwrap();
        assert_eq!(y.column(0), vec![0.0, -15.0]);
    }

    #[test]
    fn synthetic_shape_and_determinism() {
        let cfg = SynthConfig::default();
        let (x, m) = generate_synthetic(&cfg).unwrap();
        assert_eq!(x.shape(), (16, 200));
        assert_eq!(m.len(), 200);
        let (y, _) = generate_synthetic(&cfg).unwrap();
        assert_eq!(x.data(), y.data());
        let p = m.partition().unwrap();
        assert_eq!(p.group_count(), 4);
        assert!(generate_synthetic(&SynthConfig { noise_sigma: 0.0, ..cfg }).is_err());
    }
}
