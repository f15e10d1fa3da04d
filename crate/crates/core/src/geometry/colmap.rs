//! COLMAP text export (`cameras.txt` / `images.txt`) and the line-oriented
//! pose file.
//!
//! COLMAP stores world-to-camera rotations as quaternions `(qw, qx, qy, qz)`
//! plus a translation `t`. We convert to camera-to-world: `R_c2w = Rᵀ`,
//! `center = -Rᵀ t`. Only `SIMPLE_PINHOLE` and `PINHOLE` cameras are
//! accepted.
//!
//! Pose file: one record per line,
//! `id qw qx qy qz cx cy cz fx fy px py w h`, where the quaternion is the
//! camera-to-world rotation and `(cx, cy, cz)` the camera center.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::camera::{Intrinsics, Pose};
use super::linalg::{Mat3, Vec3};
use super::GeometryError;
use crate::num::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ColmapView<T> {
    pub image_id: u32,
    pub camera_id: u32,
    pub name: String,
    pub intrinsics: Intrinsics<T>,
    pub pose: Pose<T>,
}

fn parse_err(file: &'static str, line: usize, msg: impl Into<String>) -> GeometryError {
    GeometryError::Parse {
        file,
        line,
        message: msg.into(),
    }
}

fn field<V: std::str::FromStr>(tok: Option<&str>, file: &'static str, line: usize, what: &str) -> Result<V, GeometryError> {
    let tok = tok.ok_or_else(|| parse_err(file, line, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| parse_err(file, line, format!("bad {what}: {tok:?}")))
}

fn parse_cameras<T: Real>(text: &str) -> Result<BTreeMap<u32, Intrinsics<T>>, GeometryError> {
    const FILE: &str = "cameras.txt";
    let mut cams = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id: u32 = field(toks.next(), FILE, lineno, "camera id")?;
        let model = toks
            .next()
            .ok_or_else(|| parse_err(FILE, lineno, "missing camera model"))?;
        let width: usize = field(toks.next(), FILE, lineno, "width")?;
        let height: usize = field(toks.next(), FILE, lineno, "height")?;
        let params: Vec<f64> = toks
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(FILE, lineno, format!("bad parameter {t:?}"))))
            .collect::<Result<_, _>>()?;
        let (fx, fy, cx, cy) = match model {
            "SIMPLE_PINHOLE" if params.len() == 3 => (params[0], params[0], params[1], params[2]),
            "PINHOLE" if params.len() == 4 => (params[0], params[1], params[2], params[3]),
            "SIMPLE_PINHOLE" | "PINHOLE" => {
                return Err(parse_err(FILE, lineno, format!("{model} with {} parameters", params.len())))
            }
            other => return Err(GeometryError::UnsupportedCameraModel(other.to_string())),
        };
        let intr = Intrinsics::new(T::lit(fx), T::lit(fy), T::lit(cx), T::lit(cy), width, height)
            .map_err(|e| parse_err(FILE, lineno, e.to_string()))?;
        cams.insert(id, intr);
    }
    Ok(cams)
}

/// Parses a COLMAP text model into posed views ordered by image id.
pub fn parse_colmap_text<T: Real>(cameras_text: &[u8], images_text: &[u8]) -> Result<Vec<ColmapView<T>>, GeometryError> {
    const FILE: &str = "images.txt";
    let cameras_text = std::str::from_utf8(cameras_text).map_err(|_| parse_err("cameras.txt", 0, "not UTF-8"))?;
    let images_text = std::str::from_utf8(images_text).map_err(|_| parse_err(FILE, 0, "not UTF-8"))?;
    let cams = parse_cameras::<T>(cameras_text)?;

    let mut views = Vec::new();
    // Every image record is followed by one (possibly empty) 2D-point line.
    let mut expect_points = false;
    for (idx, raw) in images_text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if expect_points {
            expect_points = false;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let image_id: u32 = field(toks.next(), FILE, lineno, "image id")?;
        let mut q = [0.0f64; 4];
        for (k, name) in ["qw", "qx", "qy", "qz"].iter().enumerate() {
            q[k] = field(toks.next(), FILE, lineno, name)?;
        }
        let mut t = [0.0f64; 3];
        for (k, name) in ["tx", "ty", "tz"].iter().enumerate() {
            t[k] = field(toks.next(), FILE, lineno, name)?;
        }
        let camera_id: u32 = field(toks.next(), FILE, lineno, "camera id")?;
        let name = toks.collect::<Vec<_>>().join(" ");
        if name.is_empty() {
            return Err(parse_err(FILE, lineno, "missing image name"));
        }
        let qn = (q.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if !(qn > 0.0) {
            return Err(parse_err(FILE, lineno, "zero quaternion"));
        }
        let intrinsics = *cams
            .get(&camera_id)
            .ok_or_else(|| parse_err(FILE, lineno, format!("unknown camera id {camera_id}")))?;
        let r_w2c = Mat3::<T>::from_quaternion(T::lit(q[0]), T::lit(q[1]), T::lit(q[2]), T::lit(q[3]));
        let rotation = r_w2c.transpose();
        let center = -rotation.mul_vec(Vec3::from_f64(t));
        let pose = Pose::new(rotation, center).map_err(|e| parse_err(FILE, lineno, e.to_string()))?;
        views.push(ColmapView {
            image_id,
            camera_id,
            name,
            intrinsics,
            pose,
        });
        expect_points = true;
    }
    views.sort_by_key(|v| v.image_id);
    Ok(views)
}

/// Writes views back to COLMAP text. Every view gets its own `PINHOLE`
/// camera unless two views share `camera_id`.
pub fn serialize_colmap_text<T: Real>(views: &[ColmapView<T>]) -> (String, String) {
    let mut cameras = String::from("# Camera list with one line of data per camera:\n#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n");
    let mut seen = BTreeMap::new();
    for v in views {
        seen.entry(v.camera_id).or_insert(v.intrinsics);
    }
    for (id, c) in &seen {
        let _ = writeln!(
            cameras,
            "{id} PINHOLE {} {} {:?} {:?} {:?} {:?}",
            c.width,
            c.height,
            c.fx.as_f64(),
            c.fy.as_f64(),
            c.cx.as_f64(),
            c.cy.as_f64()
        );
    }
    let mut images = String::from("# Image list with two lines of data per image:\n#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n#   POINTS2D[] as (X, Y, POINT3D_ID)\n");
    for v in views {
        let r_w2c = v.pose.rotation.transpose();
        let q = r_w2c.to_quaternion();
        let t = -r_w2c.mul_vec(v.pose.center);
        let _ = writeln!(
            images,
            "{} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {} {}",
            v.image_id,
            q[0].as_f64(),
            q[1].as_f64(),
            q[2].as_f64(),
            q[3].as_f64(),
            t.x.as_f64(),
            t.y.as_f64(),
            t.z.as_f64(),
            v.camera_id,
            v.name
        );
        images.push('\n');
    }
    (cameras, images)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord<T> {
    pub id: u32,
    pub intrinsics: Intrinsics<T>,
    pub pose: Pose<T>,
}

pub fn write_pose_file<T: Real>(records: &[PoseRecord<T>]) -> String {
    let mut out = String::new();
    for r in records {
        let q = r.pose.rotation.to_quaternion();
        let c = r.pose.center;
        let k = &r.intrinsics;
        let _ = writeln!(
            out,
            "{} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {} {}",
            r.id,
            q[0].as_f64(),
            q[1].as_f64(),
            q[2].as_f64(),
            q[3].as_f64(),
            c.x.as_f64(),
            c.y.as_f64(),
            c.z.as_f64(),
            k.fx.as_f64(),
            k.fy.as_f64(),
            k.cx.as_f64(),
            k.cy.as_f64(),
            k.width,
            k.height
        );
    }
    out
}

pub fn read_pose_file<T: Real>(text: &str) -> Result<Vec<PoseRecord<T>>, GeometryError> {
    const FILE: &str = "poses";
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 14 {
            return Err(parse_err(FILE, lineno, format!("expected 14 fields, found {}", toks.len())));
        }
        let id: u32 = field(Some(toks[0]), FILE, lineno, "id")?;
        let mut v = [0.0f64; 11];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = field(Some(toks[k + 1]), FILE, lineno, "number")?;
        }
        let width: usize = field(Some(toks[12]), FILE, lineno, "width")?;
        let height: usize = field(Some(toks[13]), FILE, lineno, "height")?;
        let rot = Mat3::from_quaternion(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]), T::lit(v[3]));
        let pose = Pose::new(rot, Vec3::from_f64([v[4], v[5], v[6]]))
            .map_err(|e| parse_err(FILE, lineno, e.to_string()))?;
        let intrinsics = Intrinsics::new(T::lit(v[7]), T::lit(v[8]), T::lit(v[9]), T::lit(v[10]), width, height)
            .map_err(|e| parse_err(FILE, lineno, e.to_string()))?;
        out.push(PoseRecord { id, intrinsics, pose });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const CAMS: &str = "# Camera list\n1 PINHOLE 640 480 500 500 320 240\n2 SIMPLE_PINHOLE 100 80 90 50 40\n";

    #[test]
    fn pinhole_camera_line() {
        let imgs = "1 1 0 0 0 0 0 0 1 a.png\n\n";
        let v = parse_colmap_text::<f64>(CAMS.as_bytes(), imgs.as_bytes()).unwrap();
        let k = v[0].intrinsics;
        assert_eq!((k.fx, k.fy, k.cx, k.cy, k.width, k.height), (500.0, 500.0, 320.0, 240.0, 640, 480));
        assert_eq!(v[0].pose, Pose::identity());
    }

    #[test]
    fn simple_pinhole_shares_focal() {
        let imgs = "7 1 0 0 0 0 0 0 2 b.png\n10.0 20.0 -1 11.0 21.0 3\n";
        let v = parse_colmap_text::<f64>(CAMS.as_bytes(), imgs.as_bytes()).unwrap();
        assert_eq!(v[0].intrinsics.fx, 90.0);
        assert_eq!(v[0].intrinsics.fy, 90.0);
        assert_eq!(v[0].image_id, 7);
    }

    /// Quaternion (cos 45°, 0, sin 45°, 0) is a quarter turn about +y.
    #[test]
    fn quaternion_quarter_turn_about_y() {
        let imgs = "1 0.7071068 0 0.7071068 0 0 0 0 1 c.png\n\n";
        let v = parse_colmap_text::<f64>(CAMS.as_bytes(), imgs.as_bytes()).unwrap();
        // Independent oracle: R_y(90°) = [[0,0,1],[0,1,0],[-1,0,0]].
        let expected = [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]];
        let w2c = v[0].pose.rotation.transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(w2c.m[i][j], expected[i][j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn translation_becomes_center() {
        // Identity rotation with t = (1,2,3) puts the camera at (-1,-2,-3).
        let imgs = "1 1 0 0 0 1 2 3 1 d.png\n\n";
        let v = parse_colmap_text::<f64>(CAMS.as_bytes(), imgs.as_bytes()).unwrap();
        assert_eq!(v[0].pose.center, Vec3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn distortion_models_rejected() {
        let cams = "1 OPENCV 640 480 500 500 320 240 0.1 0 0 0\n";
        let err = parse_colmap_text::<f64>(cams.as_bytes(), b"").unwrap_err();
        assert!(matches!(err, GeometryError::UnsupportedCameraModel(m) if m == "OPENCV"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let imgs = "# header\n1 1 0 zero 0 0 0 0 1 a.png\n\n";
        let err = parse_colmap_text::<f64>(CAMS.as_bytes(), imgs.as_bytes()).unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn points_line_never_parsed_as_image() {
        // The 2D-point line has a numeric layout that would parse as garbage.
        let imgs = "1 1 0 0 0 0 0 0 1 a.png\n1 2 3 4 5 6 7 8 1 x\n2 1 0 0 0 0 0 1 1 b.png\n\n";
        let v = parse_colmap_text::<f64>(CAMS.as_bytes(), imgs.as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[1].image_id, 2);
    }

    fn arb_view() -> impl Strategy<Value = ColmapView<f64>> {
        (1u32..1000, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0, -3.0f64..3.0, -5.0f64..5.0, 10.0f64..900.0)
            .prop_map(|(id, ax, ay, az, angle, c, f)| {
                let rot = Mat3::from_axis_angle(Vec3::new(ax, ay, az), angle);
                ColmapView {
                    image_id: id,
                    camera_id: id,
                    name: format!("img_{id}.png"),
                    intrinsics: Intrinsics::new(f, f * 1.01, 31.5, 20.25, 64, 48).unwrap(),
                    pose: Pose::new(rot, Vec3::new(c, -c * 0.5, 2.0)).unwrap(),
                }
            })
    }

    proptest! {
        #[test]
        fn colmap_round_trip(view in arb_view()) {
            let (cams, imgs) = serialize_colmap_text(std::slice::from_ref(&view));
            let back = parse_colmap_text::<f64>(cams.as_bytes(), imgs.as_bytes()).unwrap();
            prop_assert_eq!(back.len(), 1);
            let b = &back[0];
            prop_assert_eq!(&b.name, &view.name);
            prop_assert_eq!(b.intrinsics, view.intrinsics);
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((b.pose.rotation.m[i][j] - view.pose.rotation.m[i][j]).abs() < 1e-12);
                }
            }
            prop_assert!((b.pose.center - view.pose.center).norm() < 1e-12);
        }

        #[test]
        fn pose_file_round_trip(view in arb_view()) {
            let rec = PoseRecord { id: view.image_id, intrinsics: view.intrinsics, pose: view.pose };
            let text = write_pose_file(std::slice::from_ref(&rec));
            let back = read_pose_file::<f64>(&text).unwrap();
            prop_assert_eq!(back[0].id, rec.id);
            prop_assert_eq!(back[0].intrinsics, rec.intrinsics);
            prop_assert!((back[0].pose.center - rec.pose.center).norm() < 1e-12);
        }
    }
}
