//! Point-cloud data types, XYZ/OFF file ingestion, and the synthetic
//! shape dataset used for desk-scale experiments.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected 3 coordinates, found {found}")]
    BadArity { path: PathBuf, line: usize, found: usize },
    #[error("{path}:{line}: cannot parse float: {token}")]
    BadFloat { path: PathBuf, line: usize, token: String },
    #[error("{path}:{line}: non-finite coordinate")]
    NonFinite { path: PathBuf, line: usize },
    #[error("{path}: file contains no points")]
    Empty { path: PathBuf },
    #[error("{path}: malformed OFF header: {detail}")]
    BadOffHeader { path: PathBuf, detail: String },
    #[error("{path}: face references vertex {index} but mesh has {n_vertices} vertices")]
    FaceIndexOutOfRange { path: PathBuf, index: usize, n_vertices: usize },
    #[error("{path}: mesh has zero total surface area")]
    ZeroArea { path: PathBuf },
    #[error("cannot normalize: all points identical")]
    ZeroScale,
    #[error("manifest {path}:{line}: {detail}")]
    BadManifest { path: PathBuf, line: usize, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, PointCloudError>;

/// A cloud of N 3D points with optional label and identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// N x 3 coordinate matrix, one point per row.
    pub points: Array2<f64>,
    pub label: Option<usize>,
    pub name: Option<String>,
}

impl PointCloud {
    pub fn new(points: Array2<f64>) -> Self {
        assert_eq!(points.ncols(), 3, "points must be N x 3");
        PointCloud { points, label: None, name: None }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|v| v.is_finite())
    }

    /// Centroid of the cloud as a length-3 vector.
    pub fn centroid(&self) -> Array1<f64> {
        self.points.mean_axis(Axis(0)).expect("non-empty cloud")
    }

    /// Center the centroid at the origin and scale so the farthest point has
    /// norm 1. Errors when all points coincide.
    pub fn normalize(&self) -> Result<PointCloud> {
        let c = self.centroid();
        let mut pts = self.points.clone();
        for mut row in pts.rows_mut() {
            row -= &c;
        }
        let max_norm = pts
            .rows()
            .into_iter()
            .map(|r| r.dot(&r).sqrt())
            .fold(0.0f64, f64::max);
        if max_norm <= 0.0 {
            return Err(PointCloudError::ZeroScale);
        }
        pts /= max_norm;
        Ok(PointCloud { points: pts, label: self.label, name: self.name.clone() })
    }
}

/// Dataset split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Labeled clouds with per-cloud split tags.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub clouds: Vec<PointCloud>,
    pub class_names: Vec<String>,
    /// splits[i] tags clouds[i].
    pub splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    fn subset(&self, split: Split) -> LabeledDataset {
        let mut clouds = Vec::new();
        for (c, s) in self.clouds.iter().zip(&self.splits) {
            if *s == split {
                clouds.push(c.clone());
            }
        }
        let splits = vec![split; clouds.len()];
        LabeledDataset { clouds, class_names: self.class_names.clone(), splits }
    }

    pub fn train_set(&self) -> LabeledDataset {
        self.subset(Split::Train)
    }

    pub fn test_set(&self) -> LabeledDataset {
        self.subset(Split::Test)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PointCloudError {
    PointCloudError::Io { path: path.to_path_buf(), source }
}

/// Parse XYZ text: one point per line, 3 whitespace-separated floats.
/// Blank lines and lines starting with '#' are skipped.
pub fn parse_xyz(text: &str, path: &Path) -> Result<PointCloud> {
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(PointCloudError::BadArity {
                path: path.to_path_buf(),
                line: lineno + 1,
                found: tokens.len(),
            });
        }
        let mut p = [0.0f64; 3];
        for (i, tok) in tokens.iter().enumerate() {
            p[i] = tok.parse::<f64>().map_err(|_| PointCloudError::BadFloat {
                path: path.to_path_buf(),
                line: lineno + 1,
                token: tok.to_string(),
            })?;
            if !p[i].is_finite() {
                return Err(PointCloudError::NonFinite {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                });
            }
        }
        rows.push(p);
    }
    if rows.is_empty() {
        return Err(PointCloudError::Empty { path: path.to_path_buf() });
    }
    let mut pts = Array2::zeros((rows.len(), 3));
    for (i, p) in rows.iter().enumerate() {
        pts[[i, 0]] = p[0];
        pts[[i, 1]] = p[1];
        pts[[i, 2]] = p[2];
    }
    Ok(PointCloud::new(pts))
}

pub fn load_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut cloud = parse_xyz(&text, path)?;
    cloud.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(cloud)
}

/// Write XYZ text. Coordinates use Rust's shortest round-trip decimal form,
/// which preserves all 17 significant digits of an f64.
pub fn save_xyz(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for row in cloud.points.rows() {
        writeln!(w, "{} {} {}", row[0], row[1], row[2]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub struct OffMesh {
    pub vertices: Vec<[f64; 3]>,
    /// Triangles after fan-triangulation of polygon faces.
    pub triangles: Vec<[usize; 3]>,
}

/// Parse an ASCII OFF mesh. Polygon faces are fan-triangulated.
pub fn parse_off(text: &str, path: &Path) -> Result<OffMesh> {
    let bad = |detail: &str| PointCloudError::BadOffHeader {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    // Token stream over non-comment lines; the OFF keyword may share a line
    // with the counts ("OFF 8 6 12").
    let mut tokens: Vec<String> = Vec::new();
    for line in text.lines() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        };
        tokens.extend(line.split_whitespace().map(|s| s.to_string()));
    }
    let mut it = tokens.into_iter();
    match it.next() {
        Some(t) if t == "OFF" => {}
        Some(t) => return Err(bad(&format!("expected OFF keyword, found {t:?}"))),
        None => return Err(bad("empty file")),
    }
    let mut next_usize = |what: &str| -> Result<usize> {
        it.next()
            .ok_or_else(|| bad(&format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|_| bad(&format!("cannot parse {what}")))
    };
    let n_vertices = next_usize("vertex count")?;
    let n_faces = next_usize("face count")?;
    let _n_edges = next_usize("edge count")?;
    if n_vertices == 0 {
        return Err(bad("zero vertices"));
    }
    let mut next_f64 = |what: &str| -> Result<f64> {
        let t = it.next().ok_or_else(|| bad(&format!("missing {what}")))?;
        let v = t
            .parse::<f64>()
            .map_err(|_| bad(&format!("cannot parse {what}: {t:?}")))?;
        if !v.is_finite() {
            return Err(bad(&format!("non-finite {what}")));
        }
        Ok(v)
    };
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let x = next_f64("vertex coordinate")?;
        let y = next_f64("vertex coordinate")?;
        let z = next_f64("vertex coordinate")?;
        vertices.push([x, y, z]);
    }
    let mut triangles = Vec::new();
    let mut next_usize = |what: &str| -> Result<usize> {
        it.next()
            .ok_or_else(|| bad(&format!("missing {what}")))?
            .parse::<usize>()
            .map_err(|_| bad(&format!("cannot parse {what}")))
    };
    for _ in 0..n_faces {
        let arity = next_usize("face vertex count")?;
        if arity < 3 {
            return Err(bad(&format!("face with {arity} vertices")));
        }
        let mut idx = Vec::with_capacity(arity);
        for _ in 0..arity {
            let i = next_usize("face vertex index")?;
            if i >= n_vertices {
                return Err(PointCloudError::FaceIndexOutOfRange {
                    path: path.to_path_buf(),
                    index: i,
                    n_vertices,
                });
            }
            idx.push(i);
        }
        for t in 1..arity - 1 {
            triangles.push([idx[0], idx[t], idx[t + 1]]);
        }
    }
    Ok(OffMesh { vertices, triangles })
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Sample `n_points` points uniformly by surface area from an OFF mesh, then
/// normalize to the unit sphere. Deterministic given `seed`.
pub fn load_off_and_sample(
    path: impl AsRef<Path>,
    n_points: usize,
    seed: u64,
) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mesh = parse_off(&text, path)?;
    if n_points == 0 {
        return Err(PointCloudError::InvalidArgument("n_points must be >= 1".into()));
    }
    // Cumulative triangle areas for area-proportional selection.
    let mut cum_areas = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0f64;
    for tri in &mesh.triangles {
        let a = mesh.vertices[tri[0]];
        let b = mesh.vertices[tri[1]];
        let c = mesh.vertices[tri[2]];
        let area = 0.5 * norm3(cross3(sub3(b, a), sub3(c, a)));
        total += area;
        cum_areas.push(total);
    }
    if total <= 0.0 {
        return Err(PointCloudError::ZeroArea { path: path.to_path_buf() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Array2::zeros((n_points, 3));
    for i in 0..n_points {
        let r = rng.gen::<f64>() * total;
        let t = cum_areas.partition_point(|&c| c <= r).min(mesh.triangles.len() - 1);
        let tri = mesh.triangles[t];
        let a = mesh.vertices[tri[0]];
        let b = mesh.vertices[tri[1]];
        let c = mesh.vertices[tri[2]];
        let mut u = rng.gen::<f64>();
        let mut v = rng.gen::<f64>();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        for d in 0..3 {
            pts[[i, d]] = a[d] + u * (b[d] - a[d]) + v * (c[d] - a[d]);
        }
    }
    let mut cloud = PointCloud::new(pts).normalize()?;
    cloud.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    Ok(cloud)
}

/// The five parametric surface classes of the synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
}

pub const SHAPE_CLASSES: [ShapeClass; 5] = [
    ShapeClass::Sphere,
    ShapeClass::Cube,
    ShapeClass::Cylinder,
    ShapeClass::Cone,
    ShapeClass::Torus,
];

impl ShapeClass {
    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cube => "cube",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Cone => "cone",
            ShapeClass::Torus => "torus",
        }
    }
}

/// Uniform-by-area sample of one shape surface, before rotation/scale/jitter.
pub(crate) fn sample_shape(class: ShapeClass, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut pts = Array2::zeros((n, 3));
    match class {
        ShapeClass::Sphere => {
            for i in 0..n {
                let p = random_unit_vector(rng);
                pts[[i, 0]] = p[0];
                pts[[i, 1]] = p[1];
                pts[[i, 2]] = p[2];
            }
        }
        ShapeClass::Cube => {
            // Unit cube surface [-1,1]^3, six equal-area faces.
            for i in 0..n {
                let face = rng.gen_range(0..6u32);
                let u = rng.gen_range(-1.0..1.0);
                let v = rng.gen_range(-1.0..1.0);
                let axis = (face / 2) as usize;
                let sign = if face % 2 == 0 { 1.0 } else { -1.0 };
                pts[[i, axis]] = sign;
                pts[[i, (axis + 1) % 3]] = u;
                pts[[i, (axis + 2) % 3]] = v;
            }
        }
        ShapeClass::Cylinder => {
            // Radius 0.5, height 2, capped. Areas: lateral 2*pi*r*h, caps pi*r^2 each.
            let r = 0.5;
            let h = 2.0;
            let lateral = 2.0 * std::f64::consts::PI * r * h;
            let cap = std::f64::consts::PI * r * r;
            let total = lateral + 2.0 * cap;
            for i in 0..n {
                let pick = rng.gen::<f64>() * total;
                let theta = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                if pick < lateral {
                    let z = rng.gen_range(-h / 2.0..h / 2.0);
                    pts[[i, 0]] = r * theta.cos();
                    pts[[i, 1]] = r * theta.sin();
                    pts[[i, 2]] = z;
                } else {
                    let z = if pick < lateral + cap { h / 2.0 } else { -h / 2.0 };
                    let rho = r * rng.gen::<f64>().sqrt();
                    pts[[i, 0]] = rho * theta.cos();
                    pts[[i, 1]] = rho * theta.sin();
                    pts[[i, 2]] = z;
                }
            }
        }
        ShapeClass::Cone => {
            // Base radius 1 at z=0, apex at z=2. Lateral area pi*r*slant, base pi*r^2.
            let r: f64 = 1.0;
            let h: f64 = 2.0;
            let slant = (r * r + h * h).sqrt();
            let lateral = std::f64::consts::PI * r * slant;
            let base = std::f64::consts::PI * r * r;
            let total = lateral + base;
            for i in 0..n {
                let pick = rng.gen::<f64>() * total;
                let theta = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                if pick < lateral {
                    // Uniform on the lateral surface: radial density ~ rho.
                    let rho = r * rng.gen::<f64>().sqrt();
                    let z = h * (1.0 - rho / r);
                    pts[[i, 0]] = rho * theta.cos();
                    pts[[i, 1]] = rho * theta.sin();
                    pts[[i, 2]] = z;
                } else {
                    let rho = r * rng.gen::<f64>().sqrt();
                    pts[[i, 0]] = rho * theta.cos();
                    pts[[i, 1]] = rho * theta.sin();
                    pts[[i, 2]] = 0.0;
                }
            }
        }
        ShapeClass::Torus => {
            // Major radius 1, tube radius 0.35. Rejection on the tube angle
            // corrects for the metric factor (R + r cos phi).
            let big_r = 1.0;
            let small_r = 0.35;
            for i in 0..n {
                let theta = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                let phi = loop {
                    let phi = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
                    let accept = (big_r + small_r * phi.cos()) / (big_r + small_r);
                    if rng.gen::<f64>() < accept {
                        break phi;
                    }
                };
                let w = big_r + small_r * phi.cos();
                pts[[i, 0]] = w * theta.cos();
                pts[[i, 1]] = w * theta.sin();
                pts[[i, 2]] = small_r * phi.sin();
            }
        }
    }
    pts
}

fn random_unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    use rand_distr::StandardNormal;
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let n = norm3(v);
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Uniform random rotation matrix from a random unit quaternion.
fn random_rotation(rng: &mut ChaCha8Rng) -> Array2<f64> {
    use rand_distr::StandardNormal;
    let q: [f64; 4] = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    ndarray::arr2(&[
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ])
}

/// Generate the 5-class synthetic dataset: per instance, uniform surface
/// sampling, random rotation, per-axis scale in [0.8, 1.2], Gaussian jitter
/// sigma = 0.005, unit-sphere normalization. 80/20 stratified split.
pub fn generate_shape_dataset(
    n_per_class: usize,
    n_points: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    use rand_distr::{Distribution, Normal};
    if n_per_class < 1 {
        return Err(PointCloudError::InvalidArgument("n_per_class must be >= 1".into()));
    }
    if n_points < 8 {
        return Err(PointCloudError::InvalidArgument("n_points must be >= 8".into()));
    }
    let jitter = Normal::new(0.0, 0.005).unwrap();
    let mut clouds = Vec::new();
    let mut splits = Vec::new();
    let n_train = (n_per_class * 4) / 5;
    for (label, class) in SHAPE_CLASSES.iter().enumerate() {
        for inst in 0..n_per_class {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ (label as u64) << 32 ^ inst as u64);
            let mut pts = sample_shape(*class, n_points, &mut rng);
            let rot = random_rotation(&mut rng);
            pts = pts.dot(&rot.t());
            for axis in 0..3 {
                let s = rng.gen_range(0.8..1.2);
                pts.column_mut(axis).mapv_inplace(|v| v * s);
            }
            for v in pts.iter_mut() {
                *v += jitter.sample(&mut rng);
            }
            let cloud = PointCloud::new(pts)
                .normalize()?
                .with_label(label)
                .with_name(format!("{}_{:04}", class.name(), inst));
            clouds.push(cloud);
            splits.push(if inst < n_train { Split::Train } else { Split::Test });
        }
    }
    Ok(LabeledDataset {
        clouds,
        class_names: SHAPE_CLASSES.iter().map(|c| c.name().to_string()).collect(),
        splits,
    })
}

/// Write a dataset as XYZ files plus a `manifest.csv` (`path,label,split`)
/// in `dir`. Paths in the manifest are relative to the manifest location.
pub fn save_dataset(dataset: &LabeledDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let file = File::create(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "path,label,split").map_err(|e| io_err(&manifest_path, e))?;
    for (i, (cloud, split)) in dataset.clouds.iter().zip(&dataset.splits).enumerate() {
        let stem = cloud
            .name
            .clone()
            .unwrap_or_else(|| format!("cloud_{i:05}"));
        let rel = format!("{stem}.xyz");
        save_xyz(cloud, dir.join(&rel))?;
        let label = cloud.label.ok_or_else(|| {
            PointCloudError::InvalidArgument(format!("cloud {stem} has no label"))
        })?;
        writeln!(w, "{rel},{label},{split}").map_err(|e| io_err(&manifest_path, e))?;
    }
    w.flush().map_err(|e| io_err(&manifest_path, e))?;
    Ok(manifest_path)
}

/// One manifest entry: relative cloud path, class label, split assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub path: String,
    pub label: usize,
    pub split: Split,
}

/// Parse a `path,label,split` manifest CSV. An optional header line is
/// skipped; blank lines are ignored.
pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ManifestRow>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == "path,label,split") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(PointCloudError::BadManifest {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let label: usize = fields[1].parse().map_err(|_| PointCloudError::BadManifest {
            path: path.to_path_buf(),
            line: lineno + 1,
            detail: format!("bad label {:?}", fields[1]),
        })?;
        let split = match fields[2] {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(PointCloudError::BadManifest {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    detail: format!("bad split {other:?}"),
                })
            }
        };
        rows.push(ManifestRow { path: fields[0].to_string(), label, split });
    }
    if rows.is_empty() {
        return Err(PointCloudError::Empty { path: path.to_path_buf() });
    }
    Ok(rows)
}

/// Load a dataset from a `path,label,split` manifest CSV.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let manifest_path = manifest_path.as_ref();
    let text =
        std::fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let rows = parse_manifest(&text, manifest_path)?;
    let mut clouds = Vec::new();
    let mut splits = Vec::new();
    let mut max_label = 0usize;
    for row in rows {
        let cloud = load_xyz(base.join(&row.path))?.with_label(row.label);
        max_label = max_label.max(row.label);
        clouds.push(cloud);
        splits.push(row.split);
    }
    let class_names = (0..=max_label).map(|i| format!("class_{i}")).collect();
    Ok(LabeledDataset { clouds, class_names, splits })
}
