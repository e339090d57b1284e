//! Pixel-level confusion counts and the accuracy / precision / recall / F-measure
//! family derived from them. Lane is the positive class.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mask::Mask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
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

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts> {
    if pred.h != gt.h || pred.w != gt.w {
        return Err(Error::usage(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.h, pred.w, gt.h, gt.w
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p == 1, g == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub beta: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Zero denominators give 0.
pub fn metrics(c: &ConfusionCounts, beta: f64) -> MetricsReport {
    let accuracy = ratio(c.tp + c.tn, c.total());
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    MetricsReport {
        accuracy,
        precision,
        recall,
        f_measure: f_beta(precision, recall, beta),
        beta,
    }
}

pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

/// Evaluation over a set of images: pooled counts plus the per-image average.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub images: usize,
    pub counts: ConfusionCounts,
    pub pooled: MetricsReport,
    pub per_image_mean: MetricsReport,
}

impl EvalReport {
    pub fn from_pairs<'a>(
        name: &str,
        pairs: impl IntoIterator<Item = (&'a Mask, &'a Mask)>,
        beta: f64,
    ) -> Result<Self> {
        let mut counts = ConfusionCounts::default();
        let mut sums = [0.0f64; 4];
        let mut images = 0usize;
        for (pred, gt) in pairs {
            let c = confusion(pred, gt)?;
            counts.merge(&c);
            let m = metrics(&c, beta);
            for (s, v) in sums.iter_mut().zip([m.accuracy, m.precision, m.recall, m.f_measure]) {
                *s += v;
            }
            images += 1;
        }
        let mean = |i: usize| if images == 0 { 0.0 } else { sums[i] / images as f64 };
        Ok(EvalReport {
            name: name.to_string(),
            images,
            counts,
            pooled: metrics(&counts, beta),
            per_image_mean: MetricsReport {
                accuracy: mean(0),
                precision: mean(1),
                recall: mean(2),
                f_measure: mean(3),
                beta,
            },
        })
    }

    /// `key = value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "set = {}", self.name);
        let _ = writeln!(s, "images = {}", self.images);
        let _ = writeln!(s, "beta = {}", self.pooled.beta);
        let c = &self.counts;
        let _ = writeln!(s, "tp = {}\nfp = {}\nfn = {}\ntn = {}", c.tp, c.fp, c.fn_, c.tn);
        for (prefix, m) in [("pooled", &self.pooled), ("per_image", &self.per_image_mean)] {
            let _ = writeln!(s, "{prefix}.accuracy = {:.6}", m.accuracy);
            let _ = writeln!(s, "{prefix}.precision = {:.6}", m.precision);
            let _ = writeln!(s, "{prefix}.recall = {:.6}", m.recall);
            let _ = writeln!(s, "{prefix}.f_measure = {:.6}", m.f_measure);
        }
        s
    }

    pub const ROW_HEADER: &'static str =
        "set,images,tp,fp,fn,tn,accuracy,precision,recall,f_measure,mean_accuracy,mean_precision,mean_recall,mean_f_measure";

    pub fn to_row(&self) -> String {
        let (c, p, m) = (&self.counts, &self.pooled, &self.per_image_mean);
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.name,
            self.images,
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            p.accuracy,
            p.precision,
            p.recall,
            p.f_measure,
            m.accuracy,
            m.precision,
            m.recall,
            m.f_measure
        )
    }
}
