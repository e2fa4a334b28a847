//! Whitespace-delimited text: `x y z` or `x y z r g b` per line, `#` comments.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{CloudError, Location, Point3, PointCloud};
use crate::scalar::Real;

pub fn read_xyz<T: Real>(path: &Path) -> Result<PointCloud<T>, CloudError> {
    let text = fs::read_to_string(path).map_err(|source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let perr = |line: usize, msg: String| CloudError::Parse {
        path: path.to_path_buf(),
        location: Location::Line(line),
        msg,
    };
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut width = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
        if vals.len() != 3 && vals.len() != 6 {
            return Err(perr(line_no, format!("expected 3 or 6 columns, found {}", vals.len())));
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(perr(line_no, "column count changes mid-file".into()));
        }
        let mut xyz = [0.0f64; 3];
        for a in 0..3 {
            xyz[a] = vals[a]
                .parse()
                .map_err(|_| perr(line_no, format!("cannot parse `{}`", vals[a])))?;
            if !xyz[a].is_finite() {
                return Err(perr(line_no, "non-finite coordinate".into()));
            }
        }
        points.push(Point3::new(T::lit(xyz[0]), T::lit(xyz[1]), T::lit(xyz[2])));
        if vals.len() == 6 {
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                rgb[c] = vals[3 + c]
                    .parse()
                    .map_err(|_| perr(line_no, format!("cannot parse color `{}`", vals[3 + c])))?;
            }
            colors.push(rgb);
        }
    }
    let cloud = PointCloud::new(points)?;
    if width == Some(6) {
        cloud.with_colors(colors)
    } else {
        Ok(cloud)
    }
}

pub fn write_xyz<T: Real>(cloud: &PointCloud<T>, path: &Path) -> Result<(), CloudError> {
    let io = |source| CloudError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for (i, p) in cloud.iter().enumerate() {
        write!(w, "{} {} {}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64()).map_err(io)?;
        if let Some(c) = cloud.colors() {
            write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2]).map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
