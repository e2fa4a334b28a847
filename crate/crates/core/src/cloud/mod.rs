//! Point-cloud value types, rigid transforms, bounding cubes and file I/O.

mod bounds;
pub mod ply;
mod transform;
pub mod xyz;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

pub use bounds::{bounding_cube, BoundingCube};
pub use transform::RigidTransform;

/// A point in meters.
pub type Point3<T> = nalgebra::Point3<T>;

#[derive(Debug, thiserror::Error)]
pub enum CloudError {
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("attribute `{attr}` has {found} entries, cloud has {expected} points")]
    AttributeLength {
        attr: String,
        expected: usize,
        found: usize,
    },
    #[error("cannot bound an empty cloud")]
    Empty,
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header at line {line}: {msg}")]
    Header {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {location}: {msg}")]
    Parse {
        path: PathBuf,
        location: Location,
        msg: String,
    },
    #[error("{path}: header declares {expected} vertices but {found} were read ({location})")]
    VertexCount {
        path: PathBuf,
        expected: usize,
        found: usize,
        location: Location,
    },
}

/// Position of a parse failure inside a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(u64),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

/// Per-point change state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum ChangeLabel {
    Unchanged = 0,
    Changed = 1,
    /// Material present only in the later epoch.
    Added = 2,
    Unknown = 255,
}

impl ChangeLabel {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Self {
        match code {
            0 => ChangeLabel::Unchanged,
            1 => ChangeLabel::Changed,
            2 => ChangeLabel::Added,
            _ => ChangeLabel::Unknown,
        }
    }

    /// True for any label denoting a change, regardless of direction.
    pub fn is_change(self) -> bool {
        matches!(self, ChangeLabel::Changed | ChangeLabel::Added)
    }
}

/// On-disk scalar type of a PLY property.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

/// A per-vertex scalar property with no dedicated slot, carried through I/O untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraProperty {
    pub name: String,
    pub kind: ScalarKind,
    pub values: Vec<f64>,
}

/// Ordered set of 3D points with optional per-point attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Real> {
    points: Vec<Point3<T>>,
    colors: Option<Vec<[u8; 3]>>,
    epochs: Option<Vec<u32>>,
    labels: Option<Vec<ChangeLabel>>,
    extras: Vec<ExtraProperty>,
}

impl<T: Real> Default for PointCloud<T> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<T: Real> PointCloud<T> {
    pub fn empty() -> Self {
        PointCloud {
            points: Vec::new(),
            colors: None,
            epochs: None,
            labels: None,
            extras: Vec::new(),
        }
    }

    /// Builds a cloud, rejecting non-finite coordinates.
    pub fn new(points: Vec<Point3<T>>) -> Result<Self, CloudError> {
        if let Some(index) = points
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(CloudError::NonFinite { index });
        }
        Ok(PointCloud {
            points,
            ..Self::empty()
        })
    }

    fn check_len(&self, attr: &str, found: usize) -> Result<(), CloudError> {
        if found != self.points.len() {
            return Err(CloudError::AttributeLength {
                attr: attr.to_string(),
                expected: self.points.len(),
                found,
            });
        }
        Ok(())
    }

    pub fn with_colors(mut self, colors: Vec<[u8; 3]>) -> Result<Self, CloudError> {
        self.check_len("color", colors.len())?;
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn with_epochs(mut self, epochs: Vec<u32>) -> Result<Self, CloudError> {
        self.check_len("epoch", epochs.len())?;
        self.epochs = Some(epochs);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<ChangeLabel>) -> Result<Self, CloudError> {
        self.check_len("change_label", labels.len())?;
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_extra(mut self, extra: ExtraProperty) -> Result<Self, CloudError> {
        self.check_len(&extra.name, extra.values.len())?;
        self.extras.retain(|e| e.name != extra.name);
        self.extras.push(extra);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point3<T> {
        &self.points[i]
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn epochs(&self) -> Option<&[u32]> {
        self.epochs.as_deref()
    }

    pub fn labels(&self) -> Option<&[ChangeLabel]> {
        self.labels.as_deref()
    }

    pub fn extras(&self) -> &[ExtraProperty] {
        &self.extras
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3<T>> {
        self.points.iter()
    }

    /// Subset in the order of `indices`, attributes carried along.
    pub fn select(&self, indices: &[usize]) -> Self {
        fn pick<A: Copy>(v: &Option<Vec<A>>, idx: &[usize]) -> Option<Vec<A>> {
            v.as_ref().map(|v| idx.iter().map(|&i| v[i]).collect())
        }
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: pick(&self.colors, indices),
            epochs: pick(&self.epochs, indices),
            labels: pick(&self.labels, indices),
            extras: self
                .extras
                .iter()
                .map(|e| ExtraProperty {
                    name: e.name.clone(),
                    kind: e.kind,
                    values: indices.iter().map(|&i| e.values[i]).collect(),
                })
                .collect(),
        }
    }

    /// Appends `other`. Attributes present on only one side are dropped, except
    /// labels, which default to `Unknown` for the side lacking them.
    pub fn concat(&self, other: &Self) -> Self {
        fn join<A: Copy>(a: &Option<Vec<A>>, b: &Option<Vec<A>>) -> Option<Vec<A>> {
            match (a, b) {
                (Some(a), Some(b)) => Some(a.iter().chain(b.iter()).copied().collect()),
                _ => None,
            }
        }
        let labels = match (&self.labels, &other.labels) {
            (None, None) => None,
            (a, b) => {
                let fill = |l: &Option<Vec<ChangeLabel>>, n: usize| {
                    l.clone().unwrap_or_else(|| vec![ChangeLabel::Unknown; n])
                };
                let mut v = fill(a, self.len());
                v.extend(fill(b, other.len()));
                Some(v)
            }
        };
        let extras = self
            .extras
            .iter()
            .filter_map(|e| {
                other.extras.iter().find(|o| o.name == e.name).map(|o| ExtraProperty {
                    name: e.name.clone(),
                    kind: e.kind,
                    values: e.values.iter().chain(o.values.iter()).copied().collect(),
                })
            })
            .collect();
        PointCloud {
            points: self.points.iter().chain(other.points.iter()).copied().collect(),
            colors: join(&self.colors, &other.colors),
            epochs: join(&self.epochs, &other.epochs),
            labels,
            extras,
        }
    }

    /// Maps coordinates through `f`, leaving attributes untouched.
    pub fn map_points(&self, f: impl FnMut(&Point3<T>) -> Point3<T>) -> Self {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            ..self.clone()
        }
    }

    /// Converts coordinates to another scalar type.
    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| Point3::new(U::lit(p.x.as_f64()), U::lit(p.y.as_f64()), U::lit(p.z.as_f64())))
                .collect(),
            colors: self.colors.clone(),
            epochs: self.epochs.clone(),
            labels: self.labels.clone(),
            extras: self.extras.clone(),
        }
    }
}

/// Supported on-disk formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    XyzText,
}

impl CloudFormat {
    /// Guesses from the extension; `.ply` files are sniffed on load anyway.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::PlyBinaryLe),
            "xyz" | "txt" | "pts" => Some(CloudFormat::XyzText),
            _ => None,
        }
    }
}

pub fn load_cloud<T: Real>(path: &Path, format: CloudFormat) -> Result<PointCloud<T>, CloudError> {
    match format {
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => ply::read_ply(path),
        CloudFormat::XyzText => xyz::read_xyz(path),
    }
}

pub fn save_cloud<T: Real>(
    cloud: &PointCloud<T>,
    path: &Path,
    format: CloudFormat,
) -> Result<(), CloudError> {
    match format {
        CloudFormat::PlyAscii => ply::write_ply(cloud, path, ply::Encoding::Ascii),
        CloudFormat::PlyBinaryLe => ply::write_ply(cloud, path, ply::Encoding::BinaryLittleEndian),
        CloudFormat::XyzText => xyz::write_xyz(cloud, path),
    }
}

/// Maps each point through `transform`.
pub fn apply_transform<T: Real>(cloud: &PointCloud<T>, transform: &RigidTransform<T>) -> PointCloud<T> {
    cloud.map_points(|p| transform.apply(p))
}
