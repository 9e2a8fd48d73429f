use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};

use super::{read_bytes, IoError};
use crate::cloud::PointCloud;
use crate::geometry::{CameraIntrinsics, Pose, Vec3, QUATERNION_NORM_TOLERANCE};

/// One registered image of a COLMAP model.
#[derive(Debug, Clone, PartialEq)]
pub struct ColmapImage {
    pub image_id: u32,
    pub camera_id: u32,
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world.
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapModel {
    /// Sorted by image id.
    pub images: Vec<ColmapImage>,
    pub cloud: PointCloud,
}

struct Lines {
    path: PathBuf,
    text: String,
}

impl Lines {
    fn read(dir: &Path, name: &str) -> Result<Self, IoError> {
        let path = dir.join(name);
        let text = String::from_utf8(read_bytes(&path)?).map_err(|_| IoError::format(&path, "not UTF-8"))?;
        Ok(Self { path, text })
    }

    /// `(1-based line number, line)`, comments removed.
    fn entries(&self) -> impl Iterator<Item = (usize, &str)> {
        self.text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.starts_with('#'))
    }

    fn err(&self, line: usize, message: impl Into<String>) -> IoError {
        IoError::Colmap {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }
}

fn num<T: std::str::FromStr>(f: &Lines, line: usize, tok: Option<&str>, what: &str) -> Result<T, IoError> {
    let tok = tok.ok_or_else(|| f.err(line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| f.err(line, format!("bad {what} {tok:?}")))
}

fn parse_cameras(f: &Lines) -> Result<BTreeMap<u32, CameraIntrinsics>, IoError> {
    let mut cams = BTreeMap::new();
    for (n, line) in f.entries().filter(|(_, l)| !l.is_empty()) {
        let mut t = line.split_whitespace();
        let id: u32 = num(f, n, t.next(), "camera id")?;
        let model = t.next().ok_or_else(|| f.err(n, "missing camera model"))?;
        let w: u32 = num(f, n, t.next(), "width")?;
        let h: u32 = num(f, n, t.next(), "height")?;
        let params: Vec<f64> = t
            .map(|s| num(f, n, Some(s), "parameter"))
            .collect::<Result<_, _>>()?;
        let (fx, fy, cx, cy) = match (model, params.as_slice()) {
            ("PINHOLE", [fx, fy, cx, cy]) => (*fx, *fy, *cx, *cy),
            ("SIMPLE_PINHOLE", [f0, cx, cy]) => (*f0, *f0, *cx, *cy),
            ("PINHOLE" | "SIMPLE_PINHOLE", p) => {
                return Err(f.err(
                    n,
                    format!(
                        "{model} expects {} parameters, got {}",
                        if model == "PINHOLE" { 4 } else { 3 },
                        p.len()
                    ),
                ))
            }
            (other, _) => {
                return Err(f.err(
                    n,
                    format!("unsupported camera model {other}; only PINHOLE and SIMPLE_PINHOLE are accepted"),
                ))
            }
        };
        // COLMAP puts pixel centers at half-integers, this crate at integers.
        let k =
            CameraIntrinsics::new(fx, fy, cx - 0.5, cy - 0.5, w, h).map_err(|e| f.err(n, e.to_string()))?;
        if cams.insert(id, k).is_some() {
            return Err(f.err(n, format!("duplicate camera id {id}")));
        }
    }
    Ok(cams)
}

fn parse_images(f: &Lines, cams: &BTreeMap<u32, CameraIntrinsics>) -> Result<Vec<ColmapImage>, IoError> {
    let lines: Vec<(usize, &str)> = f.entries().collect();
    let mut images = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (n, line) = lines[i];
        if line.is_empty() {
            i += 1;
            continue;
        }
        let mut t = line.split_whitespace();
        let image_id: u32 = num(f, n, t.next(), "image id")?;
        let q: [f64; 4] = [
            num(f, n, t.next(), "QW")?,
            num(f, n, t.next(), "QX")?,
            num(f, n, t.next(), "QY")?,
            num(f, n, t.next(), "QZ")?,
        ];
        let tr = Vec3::new(
            num(f, n, t.next(), "TX")?,
            num(f, n, t.next(), "TY")?,
            num(f, n, t.next(), "TZ")?,
        );
        let camera_id: u32 = num(f, n, t.next(), "camera id")?;
        let name = t.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(f.err(n, "missing image name"));
        }
        let intrinsics = *cams.get(&camera_id).ok_or_else(|| {
            f.err(
                n,
                format!("image {image_id} references unknown camera {camera_id}"),
            )
        })?;
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= QUATERNION_NORM_TOLERANCE) {
            return Err(f.err(n, format!("quaternion norm {norm} is not 1")));
        }
        let world_to_cam = Pose::new(
            UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3])),
            tr,
        );
        images.push(ColmapImage {
            image_id,
            camera_id,
            name,
            intrinsics,
            pose: world_to_cam.inverse(),
        });
        // the following line lists 2D observations, possibly empty
        i += 2;
    }
    images.sort_by_key(|im| im.image_id);
    if let Some(w) = images.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(f.err(0, format!("duplicate image id {}", w[0].image_id)));
    }
    Ok(images)
}

fn parse_points(f: &Lines) -> Result<PointCloud, IoError> {
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for (n, line) in f.entries().filter(|(_, l)| !l.is_empty()) {
        let mut t = line.split_whitespace();
        let _id: u64 = num(f, n, t.next(), "point id")?;
        let p = Vec3::new(
            num(f, n, t.next(), "X")?,
            num(f, n, t.next(), "Y")?,
            num(f, n, t.next(), "Z")?,
        );
        let rgb: [u8; 3] = [
            num(f, n, t.next(), "R")?,
            num(f, n, t.next(), "G")?,
            num(f, n, t.next(), "B")?,
        ];
        positions.push(p);
        colors.push(rgb.map(|v| v as f64 / 255.0));
    }
    if positions.is_empty() {
        log::warn!("{}: no 3D points", f.path.display());
    }
    PointCloud::new(positions, Some(colors)).map_err(|e| f.err(0, e.to_string()))
}

/// Reads `cameras.txt`, `images.txt` and `points3D.txt` from `dir`.
pub fn import_colmap_text(dir: &Path) -> Result<ColmapModel, IoError> {
    let cameras = Lines::read(dir, "cameras.txt")?;
    let images = Lines::read(dir, "images.txt")?;
    let points = Lines::read(dir, "points3D.txt")?;
    let cams = parse_cameras(&cameras)?;
    Ok(ColmapModel {
        images: parse_images(&images, &cams)?,
        cloud: parse_points(&points)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(dir: &Path, cameras: &str, images: &str, points: &str) {
        std::fs::write(dir.join("cameras.txt"), cameras).unwrap();
        std::fs::write(dir.join("images.txt"), images).unwrap();
        std::fs::write(dir.join("points3D.txt"), points).unwrap();
    }

    const CAMS: &str = "# Camera list\n1 PINHOLE 640 480 500 510 320 240\n2 SIMPLE_PINHOLE 100 80 90 50 40\n";

    #[test]
    fn identity_pose_and_intrinsics() {
        let dir = tempfile::tempdir().unwrap();
        model(dir.path(), CAMS, "# header\n1 1 0 0 0 0 0 0 1 a.png\n\n", "");
        let m = import_colmap_text(dir.path()).unwrap();
        assert_eq!(m.images.len(), 1);
        let im = &m.images[0];
        assert_eq!(im.name, "a.png");
        assert_eq!(im.pose, Pose::identity());
        assert_eq!(
            (
                im.intrinsics.fx,
                im.intrinsics.fy,
                im.intrinsics.cx,
                im.intrinsics.cy
            ),
            (500.0, 510.0, 319.5, 239.5)
        );
        assert!(m.cloud.is_empty());
    }

    #[test]
    fn single_image_matches_hand_inverse() {
        // rotation of 90° about z: q = (cos45, 0, 0, sin45); R maps x→y
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let dir = tempfile::tempdir().unwrap();
        model(
            dir.path(),
            CAMS,
            &format!("1 {h} 0 0 {h} 1 2 3 2 img one.jpg\n10 20 -1\n"),
            "7 0.5 0.25 2 255 0 128 0.1 1 0\n",
        );
        let m = import_colmap_text(dir.path()).unwrap();
        let im = &m.images[0];
        assert_eq!(im.name, "img one.jpg");
        assert_eq!((im.intrinsics.fx, im.intrinsics.cx), (90.0, 49.5));
        // c2w rotation is Rᵀ (maps y→x), center is −Rᵀ t = −(2, −1, 3)
        let r = im.pose.rotation_matrix();
        let want = nalgebra::Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((r - want).norm() < 1e-12);
        assert!((im.pose.translation - Vec3::new(-2.0, 1.0, -3.0)).norm() < 1e-12);
        assert_eq!(m.cloud.positions, vec![Vec3::new(0.5, 0.25, 2.0)]);
        assert_eq!(m.cloud.colors.as_ref().unwrap()[0], [1.0, 0.0, 128.0 / 255.0]);
    }

    #[test]
    fn errors() {
        let dir = tempfile::tempdir().unwrap();
        model(dir.path(), "1 OPENCV 10 10 1 1 5 5 0 0 0 0\n", "", "");
        let e = import_colmap_text(dir.path()).unwrap_err().to_string();
        assert!(e.contains("unsupported camera model OPENCV"), "{e}");
        model(dir.path(), CAMS, "1 1 0 0 0 0 0 0 9 a.png\n\n", "");
        assert!(import_colmap_text(dir.path())
            .unwrap_err()
            .to_string()
            .contains("unknown camera 9"));
        model(dir.path(), CAMS, "1 2 0 0 0 0 0 0 1 a.png\n\n", "");
        assert!(import_colmap_text(dir.path()).is_err());
        model(dir.path(), CAMS, "", "1 x 0 0 1 2 3 0\n");
        assert!(import_colmap_text(dir.path()).is_err());
        std::fs::remove_file(dir.path().join("points3D.txt")).unwrap();
        assert!(import_colmap_text(dir.path()).is_err());
    }
}
