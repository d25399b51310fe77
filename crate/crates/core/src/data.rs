//! Datasets: the spiral toy problem, label noise, MNIST IDX files,
//! evaluation grids and CSV import/export.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Inputs `(N × feature shape)` with integer labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor<f32>,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor<f32>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if inputs.shape()[0] != labels.len() {
            return Err(Error::shape("dataset", inputs.shape(), &[labels.len()]));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self { inputs, labels, classes })
    }

    pub fn inputs(&self) -> &Tensor<f32> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature shape of one example.
    pub fn feature_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// The first `n` examples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Same inputs with other labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(self.inputs.clone(), labels, self.classes)
    }

    /// Writes `x, y, label` rows for two-dimensional data.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        if self.feature_shape() != [2] {
            return Err(Error::InvalidArgument(format!(
                "CSV export supports 2-d points, dataset has feature shape {:?}",
                self.feature_shape()
            )));
        }
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "y", "label"])?;
        for (i, &label) in self.labels.iter().enumerate() {
            let p = self.inputs.row(i);
            out.write_record([p[0].to_string(), p[1].to_string(), label.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format written by [`Dataset::write_csv`]; lines starting
    /// with `#` are skipped.
    pub fn read_csv(r: impl Read, classes: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y", "label"] {
            return Err(Error::InvalidArgument(format!("expected header x,y,label, found {:?}", headers)));
        }
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for row in reader.deserialize() {
            let (x, y, label): (f32, f32, usize) = row?;
            data.extend([x, y]);
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset("CSV has no rows".into()));
        }
        let n = labels.len();
        Self::new(Tensor::new(vec![n, 2], data)?, labels, classes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralConfig {
    #[serde(default = "default_per_class")]
    pub n_per_class: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_turns")]
    pub turns: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
}

fn default_per_class() -> usize {
    100
}
fn default_classes() -> usize {
    3
}
fn default_turns() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.2
}

impl Default for SpiralConfig {
    fn default() -> Self {
        Self { n_per_class: 100, classes: 3, turns: 1.0, noise_std: 0.2 }
    }
}

impl SpiralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 || self.classes < 2 {
            return Err(Error::InvalidArgument("spiral needs n_per_class ≥ 1 and classes ≥ 2".into()));
        }
        if !(self.noise_std >= 0.0) || !self.turns.is_finite() {
            return Err(Error::InvalidArgument("spiral noise_std must be ≥ 0 and turns finite".into()));
        }
        Ok(())
    }
}

/// Interleaved spiral arms. Class `j` point: `t ~ U[0, 1]`, `r = t`,
/// `θ = 2πj/K + 2π·turns·t + N(0, noise_std)`, point `(r sin θ, r cos θ)`.
/// Points are ordered class by class.
pub fn spiral_generate(cfg: &SpiralConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = rng::stream(seed, Stream::Data);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let k = cfg.classes as f64;
    let tau = std::f64::consts::TAU;
    let mut data = Vec::with_capacity(cfg.classes * cfg.n_per_class * 2);
    let mut labels = Vec::with_capacity(cfg.classes * cfg.n_per_class);
    for j in 0..cfg.classes {
        for _ in 0..cfg.n_per_class {
            let t: f64 = rng.gen();
            let angle = j as f64 * tau / k + t * tau * cfg.turns + noise.sample(&mut rng);
            data.extend([(t * angle.sin()) as f32, (t * angle.cos()) as f32]);
            labels.push(j);
        }
    }
    Dataset::new(Tensor::new(vec![labels.len(), 2], data)?, labels, cfg.classes)
}

/// Relabels exactly `round(fraction·N)` distinct examples with uniformly
/// random labels (which may equal the original).
pub fn inject_label_noise(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("noise fraction must lie in [0, 1], got {fraction}")));
    }
    let mut rng = rng::stream(seed, Stream::LabelNoise);
    let count = (fraction * ds.len() as f64).round() as usize;
    let mut chosen = index::sample(&mut rng, ds.len(), count).into_vec();
    chosen.sort_unstable();
    let mut labels = ds.labels.clone();
    for &i in &chosen {
        labels[i] = rng.gen_range(0..ds.classes);
    }
    Ok((ds.with_labels(labels)?, chosen))
}

/// SHA-256 digests of the canonical uncompressed MNIST files.
pub const MNIST_SHA256: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte", "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"),
    ("train-labels-idx1-ubyte", "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"),
    ("t10k-images-idx3-ubyte", "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"),
    ("t10k-labels-idx1-ubyte", "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"),
];

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData {
            path: path.to_path_buf(),
            hint: "place the four MNIST IDX files (optionally .gz) in this directory".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(BufReader::new(file)).read_to_end(&mut bytes)?;
    } else {
        BufReader::new(file).read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn parse_header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let header = 4 + 4 * dims;
    if bytes.len() < header {
        return Err(Error::IdxTruncated { path: path.to_path_buf(), expected: header, found: bytes.len() });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::IdxMagic { path: path.to_path_buf(), expected: magic, found });
    }
    let shape: Vec<usize> = (0..dims).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect();
    let expected = header + shape.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::IdxTruncated { path: path.to_path_buf(), expected, found: bytes.len() });
    }
    Ok(shape)
}

/// Parses an IDX image/label file pair. Pixels are scaled to `[0, 1]`;
/// inputs have shape `(N, 1, rows, cols)`.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = read_maybe_gz(ip)?;
    let labels = read_maybe_gz(lp)?;
    let ishape = parse_header(ip, &images, IMAGES_MAGIC, 3)?;
    let lshape = parse_header(lp, &labels, LABELS_MAGIC, 1)?;
    if ishape[0] != lshape[0] {
        return Err(Error::IdxCountMismatch { images: ishape[0], labels: lshape[0] });
    }
    let n = ishape[0];
    if n == 0 {
        return Err(Error::EmptyDataset(format!("{} holds no images", ip.display())));
    }
    let pixels = n * ishape[1] * ishape[2];
    let data = images[16..16 + pixels].iter().map(|&b| b as f32 / 255.0).collect();
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&b| b as usize).collect();
    Dataset::new(Tensor::new(vec![n, 1, ishape[1], ishape[2]], data)?, labels, 10)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistSplit {
    Train,
    Test,
}

impl MnistSplit {
    fn prefix(self) -> &'static str {
        match self {
            MnistSplit::Train => "train",
            MnistSplit::Test => "t10k",
        }
    }
}

/// Finds `name` or `name.gz` in `dir`.
fn locate(dir: &Path, name: &str) -> Result<PathBuf> {
    for candidate in [dir.join(name), dir.join(format!("{name}.gz"))] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::MissingData {
        path: dir.join(name),
        hint: format!(
            "download the MNIST IDX files and place {name} (or {name}.gz) in {}; no download is attempted",
            dir.display()
        ),
    })
}

/// Loads a split from a directory holding the standard file names.
pub fn load_mnist(dir: impl AsRef<Path>, split: MnistSplit) -> Result<Dataset> {
    let dir = dir.as_ref();
    let p = split.prefix();
    load_mnist_idx(locate(dir, &format!("{p}-images-idx3-ubyte"))?, locate(dir, &format!("{p}-labels-idx1-ubyte"))?)
}

/// Checks the (decompressed) contents of all four files against [`MNIST_SHA256`].
pub fn verify_mnist(dir: impl AsRef<Path>) -> Result<()> {
    for (name, want) in MNIST_SHA256 {
        let path = locate(dir.as_ref(), name)?;
        let got = sha256_hex(&read_maybe_gz(&path)?);
        if got != want {
            return Err(Error::ChecksumMismatch { path, expected: want.into(), found: got });
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Square evaluation lattice over `x_range × y_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid2D {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub resolution: usize,
}

impl Default for Grid2D {
    fn default() -> Self {
        Self { x_range: [-1.5, 1.5], y_range: [-1.5, 1.5], resolution: 300 }
    }
}

impl Grid2D {
    pub fn square(lo: f64, hi: f64, resolution: usize) -> Self {
        Self { x_range: [lo, hi], y_range: [lo, hi], resolution }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::InvalidArgument(format!("grid resolution must be at least 2, got {}", self.resolution)));
        }
        for r in [self.x_range, self.y_range] {
            if !(r[0] < r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::InvalidArgument(format!("grid range {r:?} is not an increasing interval")));
            }
        }
        Ok(())
    }

    fn axis(range: [f64; 2], n: usize) -> Vec<f64> {
        (0..n).map(|i| range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64).collect()
    }
}

/// Row-major lattice of `resolution²` points: `y` is the outer loop
/// (ascending), `x` the inner one. Both range ends are included.
pub fn make_grid(grid: &Grid2D) -> Result<Tensor<f32>> {
    grid.validate()?;
    let xs = Grid2D::axis(grid.x_range, grid.resolution);
    let ys = Grid2D::axis(grid.y_range, grid.resolution);
    let mut data = Vec::with_capacity(2 * xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            data.extend([x as f32, y as f32]);
        }
    }
    Tensor::new(vec![xs.len() * ys.len(), 2], data)
}

/// Default far-away probe for spiral experiments.
pub const FAR_PROBE: [f32; 2] = [-1.25, 1.25];

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn spiral_defaults() {
        let ds = spiral_generate(&SpiralConfig::default(), 0).unwrap();
        assert_eq!(ds.len(), 300);
        assert_eq!(ds.inputs().shape(), &[300, 2]);
        for j in 0..3 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == j).count(), 100);
        }
        assert_eq!(ds, spiral_generate(&SpiralConfig::default(), 0).unwrap());
        assert_ne!(ds, spiral_generate(&SpiralConfig::default(), 1).unwrap());
    }

    #[test]
    fn spiral_points_stay_within_noise_bound() {
        let cfg = SpiralConfig { n_per_class: 3334, ..Default::default() };
        let ds = spiral_generate(&cfg, 4).unwrap();
        assert!(ds.len() >= 10_000);
        // r = t ≤ 1 regardless of the angle noise
        for i in 0..ds.len() {
            let p = ds.inputs().row(i);
            assert!((p[0].hypot(p[1]) as f64) <= 1.0 + 3.0 * cfg.noise_std);
        }
    }

    #[test]
    fn noiseless_spiral_classes_are_interleaved() {
        let cfg = SpiralConfig { noise_std: 0.0, n_per_class: 200, ..Default::default() };
        let ds = spiral_generate(&cfg, 2).unwrap();
        // class arms are rotations of each other by 2π/K: the angle offset
        // from the class's own arm is zero and from the others is not
        for i in 0..ds.len() {
            let p = ds.inputs().row(i);
            let r = (p[0] as f64).hypot(p[1] as f64);
            if r < 1e-3 {
                continue;
            }
            let theta = (p[0] as f64).atan2(p[1] as f64);
            for j in 0..3 {
                let arm = j as f64 * std::f64::consts::TAU / 3.0 + r * std::f64::consts::TAU;
                let diff = (theta - arm).rem_euclid(std::f64::consts::TAU);
                let on_arm = diff.min(std::f64::consts::TAU - diff) < 1e-3;
                assert_eq!(on_arm, j == ds.labels()[i], "point {i} class {j}");
            }
        }
    }

    #[test]
    fn label_noise_selects_exact_count() {
        let ds = spiral_generate(&SpiralConfig::default(), 0).unwrap();
        let (same, idx) = inject_label_noise(&ds, 0.0, 3).unwrap();
        assert_eq!(same, ds);
        assert!(idx.is_empty());
        let (noisy, idx) = inject_label_noise(&ds, 0.10, 3).unwrap();
        assert_eq!(idx.len(), 30);
        let changed = (0..300).filter(|&i| noisy.labels()[i] != ds.labels()[i]).count();
        assert!(changed <= 30);
        assert!((0..300).filter(|i| !idx.contains(i)).all(|i| noisy.labels()[i] == ds.labels()[i]));
        assert_eq!(noisy, inject_label_noise(&ds, 0.10, 3).unwrap().0);
        assert!(inject_label_noise(&ds, 1.5, 3).is_err());
    }

    #[test]
    fn full_label_noise_keeps_about_a_third() {
        let ds = spiral_generate(&SpiralConfig { n_per_class: 1000, ..Default::default() }, 0).unwrap();
        let mut kept = 0usize;
        for seed in 0..10 {
            let (noisy, _) = inject_label_noise(&ds, 1.0, seed).unwrap();
            kept += (0..ds.len()).filter(|&i| noisy.labels()[i] == ds.labels()[i]).count();
        }
        let frac = kept as f64 / (10 * ds.len()) as f64;
        assert!((frac - 1.0 / 3.0).abs() < 0.01, "{frac}");
    }

    #[test]
    fn grid_layout() {
        let g = make_grid(&Grid2D::square(0.0, 1.0, 2)).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let g = make_grid(&Grid2D::default()).unwrap();
        assert_eq!(g.shape(), &[90_000, 2]);
        assert_eq!(g.row(299 * 300), &[-1.5, 1.5]);
        assert!(make_grid(&Grid2D::square(0.0, 1.0, 1)).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let ds = spiral_generate(&SpiralConfig::default(), 7).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,label\n"));
        assert_eq!(text.lines().count(), 301);
        let back = Dataset::read_csv(buf.as_slice(), 3).unwrap();
        assert_eq!(back, ds);
    }

    fn idx_bytes(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    #[test]
    fn idx_parsing_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        std::fs::write(&img, idx_bytes(0x803, &[2, 2, 2], &[0, 255, 51, 102, 1, 2, 3, 4])).unwrap();
        std::fs::write(&lbl, idx_bytes(0x801, &[2], &[7, 3])).unwrap();
        let ds = load_mnist_idx(&img, &lbl).unwrap();
        assert_eq!(ds.inputs().shape(), &[2, 1, 2, 2]);
        assert_eq!(ds.labels(), &[7, 3]);
        assert_eq!(ds.inputs().data()[1], 1.0);
        assert_eq!(ds.inputs().data()[2], 0.2);

        std::fs::write(&lbl, idx_bytes(0x803, &[2], &[7, 3])).unwrap();
        assert!(matches!(load_mnist_idx(&img, &lbl), Err(Error::IdxMagic { found: 0x803, .. })));
        std::fs::write(&lbl, idx_bytes(0x801, &[3], &[7, 3])).unwrap();
        assert!(matches!(load_mnist_idx(&img, &lbl), Err(Error::IdxTruncated { .. })));
        std::fs::write(&lbl, idx_bytes(0x801, &[1], &[7])).unwrap();
        assert!(matches!(load_mnist_idx(&img, &lbl), Err(Error::IdxCountMismatch { images: 2, labels: 1 })));
        assert!(matches!(load_mnist_idx(dir.path().join("nope"), &lbl), Err(Error::MissingData { .. })));
    }

    #[test]
    fn gzipped_idx_is_supported() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let gz = |name: &str, bytes: Vec<u8>| {
            let mut e = GzEncoder::new(File::create(dir.path().join(name)).unwrap(), flate2::Compression::fast());
            e.write_all(&bytes).unwrap();
            e.finish().unwrap();
        };
        gz("t10k-images-idx3-ubyte.gz", idx_bytes(0x803, &[1, 1, 1], &[255]));
        gz("t10k-labels-idx1-ubyte.gz", idx_bytes(0x801, &[1], &[4]));
        let ds = load_mnist(dir.path(), MnistSplit::Test).unwrap();
        assert_eq!(ds.labels(), &[4]);
        let err = load_mnist(dir.path(), MnistSplit::Train).unwrap_err();
        assert!(err.to_string().contains("train-images-idx3-ubyte"), "{err}");
    }

    proptest! {
        #[test]
        fn spiral_sizes_and_balance(n in 1usize..40, k in 2usize..6, seed in 0u64..1000) {
            let cfg = SpiralConfig { n_per_class: n, classes: k, ..Default::default() };
            let ds = spiral_generate(&cfg, seed).unwrap();
            prop_assert_eq!(ds.len(), n * k);
            for j in 0..k {
                prop_assert_eq!(ds.labels().iter().filter(|&&l| l == j).count(), n);
            }
        }

        #[test]
        fn grid_has_resolution_squared_points(res in 2usize..40) {
            let g = make_grid(&Grid2D::square(-1.0, 2.0, res)).unwrap();
            prop_assert_eq!(g.shape()[0], res * res);
            prop_assert_eq!(g.row(0), &[-1.0f32, -1.0][..]);
            prop_assert_eq!(g.row(res * res - 1), &[2.0f32, 2.0][..]);
        }
    }
}
