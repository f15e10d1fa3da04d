//! Quick invariant checks that need no input data.

use nsf_core::diff::{fd_check_significant, Objective};
use nsf_core::eval::{bad_tau, EvalMask, Region};
use nsf_core::factory::{decode_pfm, encode_pfm};
use nsf_core::field::{hash_index, ConstantField, DEFAULT_PRIMES};
use nsf_core::geometry::{parse_colmap_text, project, virtual_stereo_poses, Intrinsics, Pose, Ray, StereoRig, Vec3};
use nsf_core::nsloss::{ssim_map, warp_horizontal, LossConfig, NsObjective, Side};
use nsf_core::render::render_ray;
use nsf_core::{Image, Mask};

type Check = (&'static str, fn() -> Result<(), String>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn quadrature_closed_form() -> Result<(), String> {
    let field = ConstantField::new(1.0f64, [1.0, 1.0, 1.0]);
    let ray = Ray::new(Vec3::new(0.5, 0.5, 0.0), Vec3::new(0.0, 0.0, 1.0), 0.0, 1.0).map_err(|e| e.to_string())?;
    let c = render_ray(&field, &ray, 256);
    let expect = 1.0 - (-1.0f64).exp();
    ensure((c.ao - expect).abs() < 1e-3 && (c.color[0] - expect).abs() < 1e-3, || format!("ao {} vs {expect}", c.ao))
}

fn telescoping() -> Result<(), String> {
    for sigma in [0.1f64, 3.0, 40.0] {
        let field = ConstantField::new(sigma, [0.2, 0.4, 0.6]);
        let ray = Ray::new(Vec3::new(0.1, 0.2, 0.0), Vec3::new(0.3, 0.1, 1.0).normalized(), 0.0, 1.2).map_err(|e| e.to_string())?;
        let c = render_ray(&field, &ray, 64);
        ensure((c.ao + c.transmittance - 1.0).abs() < 1e-12, || format!("ao + T = {}", c.ao + c.transmittance))?;
    }
    Ok(())
}

fn rectification() -> Result<(), String> {
    let intr = Intrinsics::centered(64.0f64, 64, 64).map_err(|e| e.to_string())?;
    let pose = Pose::look_at(Vec3::new(0.5, 0.5, -1.5), Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.0, 1.0, 0.0)).map_err(|e| e.to_string())?;
    let rig = StereoRig::new(0.5).map_err(|e| e.to_string())?;
    let (_, rp) = virtual_stereo_poses(&pose, &rig);
    let p = Vec3::new(0.3, 0.7, 0.4);
    let ((uc, vc), z) = project(p, &intr, &pose).map_err(|e| e.to_string())?;
    let ((ur, vr), _) = project(p, &intr, &rp).map_err(|e| e.to_string())?;
    ensure((vc - vr).abs() < 1e-9 && (uc - ur - 64.0 * 0.5 / z).abs() < 1e-9, || format!("rows {vc}/{vr}, d {}", uc - ur))
}

fn pfm_round_trip() -> Result<(), String> {
    let img = Image::from_fn(5, 3, 1, |x, y, _| (x as f32 - 1.5) * (y as f32 + 0.25));
    let back = decode_pfm(&encode_pfm(&img).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(back == img, || "PFM round trip changed values".into())
}

fn pfm_header_bytes() -> Result<(), String> {
    let bytes = encode_pfm(&Image::filled(1, 1, 1, 3.5f32)).map_err(|e| e.to_string())?;
    let mut expect = b"Pf\n1 1\n-1.0\n".to_vec();
    expect.extend_from_slice(&3.5f32.to_le_bytes());
    ensure(bytes == expect, || format!("{bytes:?}"))
}

fn colmap_identity() -> Result<(), String> {
    let cams = "1 PINHOLE 64 64 64 64 32 32\n";
    let imgs = "1 1 0 0 0 0 0 0 1 a.png\n\n";
    let v = parse_colmap_text::<f64>(cams.as_bytes(), imgs.as_bytes()).map_err(|e| e.to_string())?;
    ensure(v.len() == 1 && v[0].pose == Pose::identity(), || format!("{:?}", v.first().map(|x| x.pose)))
}

fn hash_regression() -> Result<(), String> {
    let h = hash_index([1, 1, 1], &DEFAULT_PRIMES, 1 << 14);
    ensure(h == 11813, || format!("hash(1,1,1) = {h}"))
}

fn bad_tau_example() -> Result<(), String> {
    let gt = Image::from_vec(3, 1, 1, vec![1.0f64, 2.0, 3.0]);
    let pred = Image::from_vec(3, 1, 1, vec![1.0f64, 2.0, 10.0]);
    let b = bad_tau(&pred, &gt, 2.0, &EvalMask::all_valid(Mask::new(3, 1, true)), Region::All).map_err(|e| e.to_string())?;
    ensure(format!("{b:.2}") == "33.33", || format!("{b}"))
}

fn warp_and_ssim_identity() -> Result<(), String> {
    let img = Image::from_fn(9, 4, 3, |x, y, c| ((x * 7 + y * 3 + c) % 5) as f64 * 0.2);
    let (w, m) = warp_horizontal(&img, &Image::zeros(9, 4, 1), Side::Right);
    let s = ssim_map(&img, &img, 3);
    ensure(w == img && m.count() == 36 && s.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-12), || "identity warp/SSIM".into())
}

fn ns_gradient() -> Result<(), String> {
    use nsf_core::factory::{Triplet, TripletMeta};
    let (w, h) = (10, 6);
    let base = |o: usize| Image::from_fn(w, h, 3, move |x, y, c| (((x + o) * 13 + y * 7 + c * 3) % 11) as f64 / 10.0);
    let t = Triplet {
        left: base(0),
        center: base(2),
        right: base(4),
        disparity: Image::filled(w, h, 1, 2.0),
        depth: Image::filled(w, h, 1, 1.0),
        ao: Image::from_fn(w, h, 1, |x, _, _| x as f64 / w as f64),
        valid: Mask::new(w, h, true),
        meta: TripletMeta::default(),
    };
    let d = Image::from_fn(w, h, 1, |x, y, _| 1.3 + 0.07 * x as f64 + 0.05 * y as f64);
    let obj = NsObjective { triplet: &t, config: LossConfig::default() };
    let params = NsObjective::params_for(&d);
    ensure(obj.value(&params).is_finite(), || "non-finite loss".into())?;
    let r = fd_check_significant(&obj, &params, 20, 1e-5, 1e-6, 1);
    ensure(r.max_relative_error < 1e-4, || format!("max relative error {}", r.max_relative_error))
}

pub const CHECKS: &[Check] = &[
    ("quadrature matches closed form", quadrature_closed_form),
    ("AO + transmittance = 1", telescoping),
    ("rectified rows and disparity", rectification),
    ("PFM round trip", pfm_round_trip),
    ("PFM header bytes", pfm_header_bytes),
    ("COLMAP identity pose", colmap_identity),
    ("hash index regression", hash_regression),
    ("bad-tau example", bad_tau_example),
    ("identity warp and SSIM", warp_and_ssim_identity),
    ("NS loss gradient", ns_gradient),
];

/// Runs every check, printing one line each; returns the failure count.
pub fn run() -> usize {
    let mut failed = 0;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => println!("PASS  {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e}");
            }
        }
    }
    failed
}
