use std::fmt::Write as _;
use std::path::Path;

use super::HarnessError;
use crate::geometry::{Point3, PointCloud};

/// Parses `x y z` rows separated by whitespace and/or commas. Blank lines
/// and lines starting with `#` are skipped.
pub fn parse_xyz(text: &str, source_name: &str) -> Result<PointCloud, HarnessError> {
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| HarnessError::Parse {
            source_name: source_name.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 coordinates, found {}",
                fields.len()
            )));
        }
        let mut xyz = [0.0; 3];
        for (slot, f) in xyz.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| err(format!("not a number: {f:?}")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite coordinate: {f:?}")));
            }
        }
        pts.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    PointCloud::new(pts).map_err(|_| HarnessError::Parse {
        source_name: source_name.to_string(),
        line: text.lines().count(),
        message: "no points".into(),
    })
}

pub fn read_xyz(path: &Path) -> Result<PointCloud, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_xyz(&text, &path.display().to_string())
}

pub fn write_xyz(path: &Path, points: &[Point3]) -> Result<(), HarnessError> {
    let mut s = String::with_capacity(points.len() * 40);
    for p in points {
        writeln!(s, "{} {} {}", p.x, p.y, p.z).expect("writing to a String");
    }
    std::fs::write(path, s).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_separators_and_comments() {
        let c = parse_xyz("# header\n1 2 3\n\n4,5,6\n 7 ,\t8, 9 \n", "t").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points()[2], Point3::new(7.0, 8.0, 9.0));
    }

    #[test]
    fn bad_rows_name_the_line() {
        match parse_xyz("1 2 3\n1 2\n", "cloud.xyz") {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_xyz("1 2 3\n4 five 6\n", "cloud.xyz") {
            Err(HarnessError::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("five"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_xyz("# nothing\n", "e").is_err());
        assert!(parse_xyz("1 2 inf\n", "e").is_err());
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.xyz");
        let pts = vec![Point3::new(0.1, -0.25, 3.0), Point3::new(1e-9, 2.5, -7.125)];
        write_xyz(&path, &pts).unwrap();
        assert_eq!(read_xyz(&path).unwrap().points(), &pts[..]);
    }
}
