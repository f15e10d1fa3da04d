//! Disparity error rates over all / non-occluded pixels and report output.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, Mask};
use crate::num::Real;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation region is empty")]
    EmptyRegion,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error("nothing to report")]
    NoRecords,
    #[error("csv error")]
    Csv(#[from] csv::Error),
    #[error("I/O error")]
    Io(#[from] std::io::Error),
}

/// Conventional thresholds: KITTI-style 3 px, Middlebury-style 2 px,
/// ETH3D-style 1 px.
pub const TAU_KITTI: f64 = 3.0;
pub const TAU_MIDDLEBURY: f64 = 2.0;
pub const TAU_ETH3D: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalMask {
    /// Ground truth present.
    pub valid: Mask,
    /// Non-occluded; always a subset of `valid`.
    pub noc: Mask,
}

impl EvalMask {
    /// Intersects `noc` with `valid` to maintain the subset invariant.
    pub fn new(valid: Mask, noc: &Mask) -> Self {
        let noc = noc.and(&valid);
        Self { valid, noc }
    }

    pub fn all_valid(valid: Mask) -> Self {
        Self {
            noc: valid.clone(),
            valid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    All,
    Noc,
}

/// Percentage of region pixels with `|pred − gt| > τ` (strict).
pub fn bad_tau<T: Real>(pred: &Image<T>, gt: &Image<T>, tau: f64, mask: &EvalMask, region: Region) -> Result<f64, EvalError> {
    if !(tau > 0.0) {
        return Err(EvalError::BadThreshold(tau));
    }
    if !pred.same_shape(gt) || pred.channels() != 1 || (mask.valid.width(), mask.valid.height()) != (gt.width(), gt.height()) {
        return Err(EvalError::ShapeMismatch("bad_tau"));
    }
    let m = match region {
        Region::All => &mask.valid,
        Region::Noc => &mask.noc,
    };
    let (mut bad, mut n) = (0usize, 0usize);
    for ((&p, &g), &on) in pred.as_slice().iter().zip(gt.as_slice()).zip(m.as_slice()) {
        if on {
            n += 1;
            if (p - g).abs().as_f64() > tau {
                bad += 1;
            }
        }
    }
    if n == 0 {
        return Err(EvalError::EmptyRegion);
    }
    Ok(100.0 * bad as f64 / n as f64)
}

/// Left-right consistency of a GT pair: `p` is non-occluded iff
/// `|gt_left(x,y) − gt_right(x − gt_left(x,y), y)| ≤ 1` with a linear
/// lookup along the row; lookups outside the image count as occluded.
pub fn occlusion_mask<T: Real>(gt_left: &Image<T>, gt_right: &Image<T>) -> Mask {
    assert!(gt_left.same_shape(gt_right) && gt_left.channels() == 1, "occlusion_mask shapes");
    let w = gt_left.width();
    Mask::from_fn(w, gt_left.height(), |x, y| {
        let d = gt_left.at(x, y).as_f64();
        let xs = x as f64 - d;
        if !(xs >= 0.0 && xs <= (w - 1) as f64) {
            return false;
        }
        let x0 = (xs.floor() as usize).min(w.saturating_sub(2));
        let x1 = (x0 + 1).min(w - 1);
        let f = xs - x0 as f64;
        let r = (1.0 - f) * gt_right.at(x0, y).as_f64() + f * gt_right.at(x1, y).as_f64();
        (d - r).abs() <= 1.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub tau: f64,
    pub bad_all: f64,
    pub bad_noc: f64,
    pub n_all: usize,
    pub n_noc: usize,
}

/// Evaluates both regions. An empty non-occluded region reports 0 %.
pub fn evaluate<T: Real>(dataset: &str, pred: &Image<T>, gt: &Image<T>, tau: f64, mask: &EvalMask) -> Result<EvalRecord, EvalError> {
    let bad_all = bad_tau(pred, gt, tau, mask, Region::All)?;
    let bad_noc = match bad_tau(pred, gt, tau, mask, Region::Noc) {
        Err(EvalError::EmptyRegion) => 0.0,
        r => r?,
    };
    Ok(EvalRecord {
        dataset: dataset.to_owned(),
        tau,
        bad_all,
        bad_noc,
        n_all: mask.valid.count(),
        n_noc: mask.noc.count(),
    })
}

/// Aligned plain-text table, percentages with two decimals.
pub fn format_table(records: &[EvalRecord]) -> Result<String, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let name_w = records.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max("dataset".len());
    let mut out = format!(
        "{:<name_w$}  {:>5}  {:>8}  {:>8}  {:>8}  {:>8}\n",
        "dataset", "tau", "bad_all", "bad_noc", "n_all", "n_noc"
    );
    for r in records {
        out.push_str(&format!(
            "{:<name_w$}  {:>5}  {:>8.2}  {:>8.2}  {:>8}  {:>8}\n",
            r.dataset, r.tau, r.bad_all, r.bad_noc, r.n_all, r.n_noc
        ));
    }
    Ok(out)
}

pub fn write_csv<W: Write>(records: &[EvalRecord], w: W) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<EvalRecord>, EvalError> {
    let mut rd = csv::Reader::from_reader(r);
    Ok(rd.deserialize().collect::<Result<_, _>>()?)
}

/// Writes the text table to `text` and the CSV to `csv_out`.
pub fn report<W1: Write, W2: Write>(records: &[EvalRecord], mut text: W1, csv_out: W2) -> Result<(), EvalError> {
    text.write_all(format_table(records)?.as_bytes())?;
    write_csv(records, csv_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Image<f64> {
        Image::from_vec(v.len(), 1, 1, v.to_vec())
    }

    #[test]
    fn one_in_three() {
        let m = EvalMask::all_valid(Mask::new(3, 1, true));
        let b = bad_tau(&row(&[1.0, 2.0, 10.0]), &row(&[1.0, 2.0, 3.0]), 2.0, &m, Region::All).unwrap();
        assert!((b - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(format!("{b:.2}"), "33.33");
    }

    #[test]
    fn exact_prediction_and_strictness() {
        let m = EvalMask::all_valid(Mask::new(2, 1, true));
        assert_eq!(bad_tau(&row(&[4.0, 5.0]), &row(&[4.0, 5.0]), 1.0, &m, Region::All).unwrap(), 0.0);
        assert_eq!(bad_tau(&row(&[6.0, 5.0]), &row(&[4.0, 5.0]), 2.0, &m, Region::All).unwrap(), 0.0);
    }

    #[test]
    fn empty_region_and_bad_tau() {
        let m = EvalMask::all_valid(Mask::new(2, 1, false));
        assert!(matches!(bad_tau(&row(&[0.0, 0.0]), &row(&[0.0, 0.0]), 2.0, &m, Region::All), Err(EvalError::EmptyRegion)));
        let m = EvalMask::all_valid(Mask::new(2, 1, true));
        assert!(matches!(bad_tau(&row(&[0.0, 0.0]), &row(&[0.0, 0.0]), 0.0, &m, Region::All), Err(EvalError::BadThreshold(_))));
    }

    #[test]
    fn errors_only_in_occlusions() {
        let valid = Mask::new(4, 1, true);
        let noc = Mask::from_vec(4, 1, vec![true, true, false, true]);
        let m = EvalMask::new(valid, &noc);
        let gt = row(&[1.0; 4]);
        let pred = row(&[1.0, 1.0, 9.0, 1.0]);
        assert_eq!(bad_tau(&pred, &gt, 2.0, &m, Region::Noc).unwrap(), 0.0);
        assert_eq!(bad_tau(&pred, &gt, 2.0, &m, Region::All).unwrap(), 25.0);
    }

    #[test]
    fn constant_pair_is_non_occluded_inside() {
        let d = Image::filled(10, 2, 1, 3.0);
        let noc = occlusion_mask(&d, &d);
        for x in 0..10 {
            assert_eq!(noc.get(x, 0), x >= 3);
        }
    }

    #[test]
    fn step_edge_occlusion_band() {
        // Foreground (d=6) right of x=15 over background (d=2). In the right
        // view the foreground starts at 9, so background pixels 11..14 of
        // the center view land under it: a band as wide as 6 − 2.
        let w = 30;
        let left = Image::from_fn(w, 1, 1, |x, _, _| if x >= 15 { 6.0 } else { 2.0 });
        let right = Image::from_fn(w, 1, 1, |x, _, _| if x >= 9 { 6.0 } else { 2.0 });
        let noc = occlusion_mask(&left, &right);
        let occluded: Vec<usize> = (2..w).filter(|&x| !noc.get(x, 0)).collect();
        assert_eq!(occluded, vec![11, 12, 13, 14]);
    }

    #[test]
    fn report_outputs() {
        let rec = EvalRecord {
            dataset: "plane".into(),
            tau: 2.0,
            bad_all: 12.3456,
            bad_noc: 1.0,
            n_all: 100,
            n_noc: 90,
        };
        let (mut text, mut csv_buf) = (Vec::new(), Vec::new());
        report(std::slice::from_ref(&rec), &mut text, &mut csv_buf).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("12.35"));
        assert_eq!(String::from_utf8(csv_buf.clone()).unwrap().lines().count(), 2);
        assert_eq!(read_csv(csv_buf.as_slice()).unwrap(), vec![rec]);
        assert!(matches!(format_table(&[]), Err(EvalError::NoRecords)));
    }

    proptest! {
        #[test]
        fn non_increasing_in_tau(vals in proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0), 1..40), t1 in 0.1f64..5.0, dt in 0.0f64..5.0) {
            let n = vals.len();
            let pred = Image::from_vec(n, 1, 1, vals.iter().map(|v| v.0).collect());
            let gt = Image::from_vec(n, 1, 1, vals.iter().map(|v| v.1).collect());
            let m = EvalMask::all_valid(Mask::new(n, 1, true));
            let a = bad_tau(&pred, &gt, t1, &m, Region::All).unwrap();
            let b = bad_tau(&pred, &gt, t1 + dt, &m, Region::All).unwrap();
            prop_assert!(b <= a);
            prop_assert!((0.0..=100.0).contains(&a));
        }
    }
}
