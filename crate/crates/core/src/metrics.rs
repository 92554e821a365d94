//! Pixel confusion counts and the six segmentation scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{load_mask, BinaryMask};
use crate::par::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Se,
    Sp,
    Pr,
    Acc,
    F1,
    Iou,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub se: f64,
    pub sp: f64,
    pub pr: f64,
    pub acc: f64,
    pub f1: f64,
    pub iou: f64,
    /// Scores whose denominator was zero and were set to 0.
    pub undefined: Vec<Metric>,
}

/// Count over pixels inside `fov` (or all pixels); 1 is the positive class.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask, fov: Option<&BinaryMask>) -> Result<ConfusionCounts> {
    let dims = (pred.width(), pred.height());
    if (gt.width(), gt.height()) != dims || fov.is_some_and(|f| (f.width(), f.height()) != dims) {
        return Err(Error::InvalidInput("prediction, ground truth and FOV masks must share one size".into()));
    }
    let mut c = ConfusionCounts::default();
    let fov_data = fov.map(|f| f.data());
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if fov_data.is_some_and(|f| f[i] == 0) {
            continue;
        }
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn score(c: &ConfusionCounts) -> MetricsRecord {
    let mut undefined = Vec::new();
    let mut ratio = |num: u64, den: u64, m: Metric| {
        if den == 0 {
            undefined.push(m);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let se = ratio(c.tp, c.tp + c.fn_, Metric::Se);
    let sp = ratio(c.tn, c.tn + c.fp, Metric::Sp);
    let pr = ratio(c.tp, c.tp + c.fp, Metric::Pr);
    let acc = ratio(c.tp + c.tn, c.total(), Metric::Acc);
    // 2·PR·SE/(PR+SE) reduced to counts: one rounding, no 0/0 when only PR is undefined
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, Metric::F1);
    let iou = ratio(c.tp, c.tp + c.fp + c.fn_, Metric::Iou);
    MetricsRecord {
        se,
        sp,
        pr,
        acc,
        f1,
        iou,
        undefined,
    }
}

/// Unweighted mean of per-image records.
pub fn mean_record(records: &[MetricsRecord]) -> MetricsRecord {
    if records.is_empty() {
        return MetricsRecord {
            undefined: vec![Metric::Se, Metric::Sp, Metric::Pr, Metric::Acc, Metric::F1, Metric::Iou],
            ..Default::default()
        };
    }
    let n = records.len() as f64;
    let avg = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let mut undefined: Vec<Metric> = records.iter().flat_map(|r| r.undefined.iter().copied()).collect();
    undefined.sort();
    undefined.dedup();
    MetricsRecord {
        se: avg(|r| r.se),
        sp: avg(|r| r.sp),
        pr: avg(|r| r.pr),
        acc: avg(|r| r.acc),
        f1: avg(|r| r.f1),
        iou: avg(|r| r.iou),
        undefined,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<(String, MetricsRecord)>,
    pub mean: MetricsRecord,
    /// Stems present in one directory but lacking a counterpart.
    pub missing: Vec<String>,
}

impl EvaluationReport {
    pub fn from_rows(rows: Vec<(String, MetricsRecord)>, missing: Vec<String>) -> Self {
        let records: Vec<MetricsRecord> = rows.iter().map(|(_, r)| r.clone()).collect();
        Self {
            mean: mean_record(&records),
            rows,
            missing,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("stem,iou,f1,acc,se,sp,pr\n");
        let mut row = |stem: &str, r: &MetricsRecord| {
            let _ = writeln!(s, "{stem},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}", r.iou, r.f1, r.acc, r.se, r.sp, r.pr);
        };
        for (stem, r) in &self.rows {
            row(stem, r);
        }
        row("MEAN", &self.mean);
        s
    }

    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(s, _)| s.len())
            .chain(std::iter::once(4))
            .max()
            .unwrap_or(4);
        let mut s = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "stem", "IoU", "F1", "ACC", "SE", "SP", "PR"
        );
        let mut row = |stem: &str, r: &MetricsRecord| {
            let flag = if r.undefined.is_empty() { "" } else { "  *" };
            let _ = writeln!(
                s,
                "{stem:<width$}  {:>8.6}  {:>8.6}  {:>8.6}  {:>8.6}  {:>8.6}  {:>8.6}{flag}",
                r.iou, r.f1, r.acc, r.se, r.sp, r.pr
            );
        };
        for (stem, r) in &self.rows {
            row(stem, r);
        }
        row("MEAN", &self.mean);
        if self.rows.iter().any(|(_, r)| !r.undefined.is_empty()) {
            s.push_str("* some scores had a zero denominator and were set to 0\n");
        }
        s
    }
}

const RASTER_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "pnm"];

/// Raster files of a directory keyed by stem, with a trailing `_pred`
/// removed so `<stem>_pred.png` pairs with `<stem>.png`.
fn index_dir(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !ext_ok || !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let key = stem.strip_suffix("_pred").unwrap_or(stem).to_string();
        out.insert(key, path);
    }
    Ok(out)
}

pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path, fov_dir: Option<&Path>) -> Result<EvaluationReport> {
    evaluate_dataset_with(pred_dir, gt_dir, fov_dir, Execution::default())
}

pub fn evaluate_dataset_with(
    pred_dir: &Path,
    gt_dir: &Path,
    fov_dir: Option<&Path>,
    exec: Execution,
) -> Result<EvaluationReport> {
    let preds = index_dir(pred_dir)?;
    let gts = index_dir(gt_dir)?;
    let fovs = fov_dir.map(index_dir).transpose()?;

    let mut missing = Vec::new();
    let mut jobs = Vec::new();
    for (stem, pred) in &preds {
        let gt = gts.get(stem);
        let fov = fovs.as_ref().map(|f| f.get(stem));
        match (gt, fov) {
            (Some(gt), None) => jobs.push((stem.clone(), pred.clone(), gt.clone(), None)),
            (Some(gt), Some(Some(fov))) => jobs.push((stem.clone(), pred.clone(), gt.clone(), Some(fov.clone()))),
            _ => missing.push(stem.clone()),
        }
    }
    missing.extend(gts.keys().filter(|k| !preds.contains_key(*k)).cloned());
    missing.sort();
    missing.dedup();

    let rows = par::map_ordered(exec, &jobs, |_, (stem, pred, gt, fov)| -> Result<(String, MetricsRecord)> {
        let p = load_mask(pred)?;
        let g = load_mask(gt)?;
        let f = fov.as_ref().map(load_mask).transpose()?;
        let c = confusion(&p, &g, f.as_ref()).map_err(|e| Error::InvalidInput(format!("{stem}: {e}")))?;
        Ok((stem.clone(), score(&c)))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::from_rows(rows, missing))
}
