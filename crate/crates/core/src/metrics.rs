//! Segmentation metrics: confusion matrix, per-class IoU and mIoU.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{LabelMap, Tensor};

/// K x K confusion counts, rows = ground truth, cols = prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

/// mIoU plus the information needed to interpret it honestly.
#[derive(Clone, Debug, PartialEq)]
pub struct MiouReport {
    pub miou: f64,
    pub per_class: Vec<Option<f64>>,
    /// Classes with a non-empty union (prediction or ground truth present).
    pub classes_seen: usize,
    /// Set when no class had any pixels; the mIoU is reported as 0 then.
    pub empty: bool,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::config("confusion matrix needs at least one class"));
        }
        Ok(ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        })
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Tally one prediction/target pair. Target pixels equal to
    /// `ignore_index` are skipped; any other out-of-range value is an error.
    pub fn accumulate(&mut self, pred: &LabelMap, target: &LabelMap, ignore_index: i32) -> Result<()> {
        if (pred.n, pred.h, pred.w) != (target.n, target.h, target.w) {
            return Err(Error::usage(format!(
                "prediction ({},{},{}) does not match target ({},{},{})",
                pred.n, pred.h, pred.w, target.n, target.h, target.w
            )));
        }
        let k = self.num_classes as i32;
        for (&p, &t) in pred.data.iter().zip(target.data.iter()) {
            if t == ignore_index {
                continue;
            }
            if t < 0 || t >= k {
                return Err(Error::data(format!("target label {t} outside 0..{k}")));
            }
            if p < 0 || p >= k {
                return Err(Error::data(format!("predicted label {p} outside 0..{k}")));
            }
            self.counts[(t as usize) * self.num_classes + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.num_classes != other.num_classes {
            return Err(Error::usage("cannot merge confusion matrices of different sizes"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// IoU per class; `None` where the union is empty (class absent from both
    /// ground truth and predictions).
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let tp = self.count(c, c);
                let row: u64 = (0..k).map(|j| self.count(c, j)).sum();
                let col: u64 = (0..k).map(|i| self.count(i, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    /// Mean IoU over classes with a non-empty union.
    pub fn miou(&self) -> MiouReport {
        let per_class = self.per_class_iou();
        let seen: Vec<f64> = per_class.iter().filter_map(|v| *v).collect();
        let empty = seen.is_empty();
        MiouReport {
            miou: if empty {
                0.0
            } else {
                seen.iter().sum::<f64>() / seen.len() as f64
            },
            classes_seen: seen.len(),
            per_class,
            empty,
        }
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..self.num_classes).map(|c| self.count(c, c)).sum();
        correct as f64 / total as f64
    }
}

/// Channel-axis argmax of logits into a label map. Ties resolve to the lowest
/// class index.
pub fn argmax_predictions<S: Scalar>(logits: &Tensor<S>) -> LabelMap {
    let s = logits.shape();
    let data = logits.data();
    let mut out = Vec::with_capacity(s.n * s.h * s.w);
    for n in 0..s.n {
        for h in 0..s.h {
            for w in 0..s.w {
                let mut best = 0usize;
                let mut best_v = data[s.idx(n, 0, h, w)];
                for c in 1..s.c {
                    let v = data[s.idx(n, c, h, w)];
                    if v > best_v {
                        best_v = v;
                        best = c;
                    }
                }
                out.push(best as i32);
            }
        }
    }
    LabelMap::new(s.n, s.h, s.w, out).expect("shape-consistent by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn perfect_prediction_is_miou_one() {
        let mut cm = ConfusionMatrix::new(3).unwrap();
        let t = LabelMap::new(1, 2, 2, vec![0, 1, 2, 1]).unwrap();
        cm.accumulate(&t, &t, 255).unwrap();
        let r = cm.miou();
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.classes_seen, 3);
    }

    #[test]
    fn hand_computed_miou() {
        let mut cm = ConfusionMatrix::new(2).unwrap();
        let pred = LabelMap::new(1, 2, 2, vec![0, 0, 1, 1]).unwrap();
        let target = LabelMap::new(1, 2, 2, vec![0, 1, 1, 1]).unwrap();
        cm.accumulate(&pred, &target, 255).unwrap();
        // class 0: tp=1 union=2 -> 0.5; class 1: tp=2 union=3 -> 2/3
        let r = cm.miou();
        assert!((r.miou - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((cm.pixel_accuracy() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn absent_classes_excluded() {
        let mut cm = ConfusionMatrix::new(4).unwrap();
        let t = LabelMap::new(1, 1, 2, vec![0, 1]).unwrap();
        cm.accumulate(&t, &t, 255).unwrap();
        let r = cm.miou();
        assert_eq!(r.classes_seen, 2);
        assert_eq!(r.per_class[2], None);
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn ignore_and_out_of_range() {
        let mut cm = ConfusionMatrix::new(2).unwrap();
        let pred = LabelMap::new(1, 1, 2, vec![0, 1]).unwrap();
        let target = LabelMap::new(1, 1, 2, vec![255, 1]).unwrap();
        cm.accumulate(&pred, &target, 255).unwrap();
        assert_eq!(cm.total(), 1);
        let bad = LabelMap::new(1, 1, 2, vec![0, 7]).unwrap();
        assert!(cm.accumulate(&pred, &bad, 255).is_err());
    }

    #[test]
    fn empty_matrix_flags() {
        let cm = ConfusionMatrix::new(3).unwrap();
        let r = cm.miou();
        assert!(r.empty);
        assert_eq!(r.miou, 0.0);
    }

    #[test]
    fn merge_equals_joint_accumulation() {
        let pred = LabelMap::new(1, 1, 4, vec![0, 1, 1, 0]).unwrap();
        let target = LabelMap::new(1, 1, 4, vec![0, 1, 0, 1]).unwrap();
        let mut a = ConfusionMatrix::new(2).unwrap();
        a.accumulate(&pred, &target, 255).unwrap();
        let mut b = ConfusionMatrix::new(2).unwrap();
        b.accumulate(&pred, &target, 255).unwrap();
        let mut joint = ConfusionMatrix::new(2).unwrap();
        joint.accumulate(&pred, &target, 255).unwrap();
        joint.accumulate(&pred, &target, 255).unwrap();
        a.merge(&b).unwrap();
        assert_eq!(a, joint);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let logits =
            Tensor::<f32>::from_vec(Shape::new(1, 3, 1, 2), vec![1.0, 0.0, 1.0, 2.0, 0.5, 0.0])
                .unwrap();
        let p = argmax_predictions(&logits);
        assert_eq!(p.data, vec![0, 1]);
    }
}
