use serde::{Deserialize, Serialize};

use super::model::Network;
use super::scene::SyntheticScene;
use crate::error::{Error, Result};

/// `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn add(&mut self, truth: &[usize], pred: &[usize]) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let k = self.num_classes;
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= k || p >= k {
                return Err(Error::InvalidInput(format!(
                    "class index out of range for {k} classes"
                )));
            }
            self.counts[t * k + p] += 1;
        }
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn metrics(&self) -> Result<Metrics> {
        let k = self.num_classes;
        if self.total() == 0 {
            return Err(Error::InvalidInput("no pixels were evaluated".into()));
        }
        let mut per_class = Vec::with_capacity(k);
        for c in 0..k {
            let tp = self.get(c, c);
            let gt: u64 = (0..k).map(|p| self.get(c, p)).sum();
            let pred: u64 = (0..k).map(|t| self.get(t, c)).sum();
            per_class.push(if gt == 0 {
                None
            } else {
                Some(tp as f64 / (gt + pred - tp) as f64)
            });
        }
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let miou = present.iter().sum::<f64>() / present.len() as f64;
        let pixel_accuracy =
            (0..k).map(|c| self.get(c, c)).sum::<u64>() as f64 / self.total() as f64;
        Ok(Metrics {
            per_class_iou: per_class,
            miou,
            pixel_accuracy,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    /// `null` for classes absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean over classes present in the ground truth.
    pub miou: f64,
    pub pixel_accuracy: f64,
}

pub fn evaluate_miou(net: &Network, scenes: &[SyntheticScene]) -> Result<Metrics> {
    if scenes.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut cm = ConfusionMatrix::new(net.config().num_classes);
    for s in scenes {
        cm.add(&s.labels, &net.predict(s.image.as_feature_map())?)?;
    }
    cm.metrics()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let mut cm = ConfusionMatrix::new(3);
        let t = [0, 1, 2, 2, 1];
        cm.add(&t, &t).unwrap();
        let m = cm.metrics().unwrap();
        assert_eq!(m.miou, 1.0);
        assert_eq!(m.pixel_accuracy, 1.0);
    }

    #[test]
    fn constant_wrong_class() {
        let mut cm = ConfusionMatrix::new(3);
        cm.add(&[1; 6], &[2; 6]).unwrap();
        let m = cm.metrics().unwrap();
        assert_eq!(m.per_class_iou, vec![None, Some(0.0), None]);
        assert_eq!(m.miou, 0.0);
    }

    #[test]
    fn four_by_four_count() {
        let truth = [0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3];
        let pred = [0, 1, 1, 1, 0, 0, 1, 0, 2, 3, 3, 3, 2, 2, 3, 1];
        let mut cm = ConfusionMatrix::new(4);
        cm.add(&truth, &pred).unwrap();
        let m = cm.metrics().unwrap();
        // class 0: tp 3, gt 4, pred 4 -> 3/5; class 1: tp 3, gt 4, pred 5 -> 3/6
        // class 2: tp 3, gt 4, pred 3 -> 3/4; class 3: tp 3, gt 4, pred 4 -> 3/5
        let expect = [0.6, 0.5, 0.75, 0.6];
        for (got, want) in m.per_class_iou.iter().zip(expect) {
            assert!((got.unwrap() - want).abs() < 1e-15);
        }
        assert!((m.miou - 2.45 / 4.0).abs() < 1e-15);
        assert_eq!(m.pixel_accuracy, 12.0 / 16.0);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(ConfusionMatrix::new(2).metrics().is_err());
    }
}
