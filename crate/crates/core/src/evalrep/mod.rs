//! Average precision, confusion statistics, report tables and heatmaps.

mod heatmap;

pub use heatmap::render_heatmap;

use crate::error::{Error, Result};

/// Area under the monotone precision envelope. Score ties rank positives
/// after negatives.
pub fn average_precision(scores: &[f64], is_positive: &[bool]) -> Result<f64> {
    if scores.len() != is_positive.len() {
        return Err(Error::arg(format!(
            "{} scores but {} labels",
            scores.len(),
            is_positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::arg("NaN score"));
    }
    let n_pos = is_positive.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return Err(Error::arg("average precision is undefined without positives"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(is_positive[a].cmp(&is_positive[b]))
            .then(a.cmp(&b))
    });
    let mut precisions = Vec::with_capacity(n_pos);
    let mut hits = 0usize;
    for (rank, &i) in order.iter().enumerate() {
        if is_positive[i] {
            hits += 1;
            precisions.push(hits as f64 / (rank + 1) as f64);
        }
    }
    // running max from the right
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    Ok(precisions.iter().sum::<f64>() / n_pos as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<u32>,
    /// None for classes without positives in the evaluated set.
    pub ap: Vec<Option<f64>>,
    pub map: f64,
    pub recognition_rate: f64,
    /// Row = true class, column = predicted class, both in `classes` order.
    pub confusion: Vec<Vec<u64>>,
    /// (true, predicted, count), largest off-diagonal counts first.
    pub confused_pairs: Vec<(u32, u32, u64)>,
}

/// `scores[i][c]` is the score of image i for `classes[c]`.
pub fn evaluate(classes: &[u32], scores: &[Vec<f64>], truths: &[u32]) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::arg("no predictions to evaluate"));
    }
    if scores.len() != truths.len() {
        return Err(Error::arg(format!("{} predictions but {} truths", scores.len(), truths.len())));
    }
    if classes.is_empty() || classes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::arg("class list must be non-empty, unique and sorted"));
    }
    let k = classes.len();
    if let Some(i) = scores.iter().position(|s| s.len() != k) {
        return Err(Error::arg(format!("prediction {i} has {} scores for {k} classes", scores[i].len())));
    }
    let index = |c: u32| classes.binary_search(&c).ok();
    let truth_idx: Vec<usize> = truths
        .iter()
        .map(|&t| index(t).ok_or_else(|| Error::arg(format!("true class {t} is not a model class"))))
        .collect::<Result<_>>()?;

    let mut confusion = vec![vec![0u64; k]; k];
    let mut correct = 0usize;
    for (s, &t) in scores.iter().zip(&truth_idx) {
        let pred = (0..k).fold(0, |b, c| if s[c] > s[b] { c } else { b });
        confusion[t][pred] += 1;
        if pred == t {
            correct += 1;
        }
    }

    let mut ap = Vec::with_capacity(k);
    for c in 0..k {
        let col: Vec<f64> = scores.iter().map(|s| s[c]).collect();
        let pos: Vec<bool> = truth_idx.iter().map(|&t| t == c).collect();
        if pos.contains(&true) {
            ap.push(Some(average_precision(&col, &pos)?));
        } else {
            log::warn!("class {} has no positives in this split, excluded from mAP", classes[c]);
            ap.push(None);
        }
    }
    let defined: Vec<f64> = ap.iter().flatten().copied().collect();
    let map = defined.iter().sum::<f64>() / defined.len() as f64;

    let mut confused_pairs = Vec::new();
    for (t, row) in confusion.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            if t != p && n > 0 {
                confused_pairs.push((classes[t], classes[p], n));
            }
        }
    }
    confused_pairs.sort_by(|a, b| b.2.cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));

    Ok(EvalReport {
        classes: classes.to_vec(),
        ap,
        map,
        recognition_rate: correct as f64 / scores.len() as f64,
        confusion,
        confused_pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportTables {
    pub top: String,
    pub bottom: String,
    pub confused: String,
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
}

/// Top-k and bottom-k classes by AP (ties by class id) and the k most
/// confused pairs.
pub fn report_tables(report: &EvalReport, k: usize) -> ReportTables {
    let mut ranked: Vec<(u32, f64)> = report
        .classes
        .iter()
        .zip(&report.ap)
        .filter_map(|(&c, ap)| ap.map(|a| (c, a)))
        .collect();
    let table = |rows: &[(u32, f64)]| {
        let body: Vec<Vec<String>> = rows
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &(c, a))| vec![(i + 1).to_string(), c.to_string(), format!("{a:.6}")])
            .collect();
        csv_string(&["rank", "class", "ap"], &body)
    };
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let top = table(&ranked);
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let bottom = table(&ranked);
    let pairs: Vec<Vec<String>> = report
        .confused_pairs
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &(t, p, n))| vec![(i + 1).to_string(), t.to_string(), p.to_string(), n.to_string()])
        .collect();
    ReportTables {
        top,
        bottom,
        confused: csv_string(&["rank", "true_class", "predicted_class", "count"], &pairs),
    }
}

impl EvalReport {
    /// key=value summary: map, recognition_rate, then ap.<class> per class.
    pub fn summary(&self) -> String {
        let mut s = format!("map={}\nrecognition_rate={}\n", self.map, self.recognition_rate);
        for (c, ap) in self.classes.iter().zip(&self.ap) {
            match ap {
                Some(a) => s.push_str(&format!("ap.{c}={a}\n")),
                None => s.push_str(&format!("ap.{c}=undefined\n")),
            }
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut header = vec!["true\\pred".to_string()];
        header.extend(self.classes.iter().map(|c| c.to_string()));
        let rows: Vec<Vec<String>> = self
            .classes
            .iter()
            .zip(&self.confusion)
            .map(|(c, row)| std::iter::once(c.to_string()).chain(row.iter().map(|n| n.to_string())).collect())
            .collect();
        let h: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        csv_string(&h, &rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_ap() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert!((average_precision(&[0.9, 0.1], &[false, true]).unwrap() - 0.5).abs() < 1e-12);
        let ap = average_precision(&[4.0, 3.0, 2.0, 1.0], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn ties_are_pessimistic() {
        assert!((average_precision(&[1.0, 1.0], &[true, false]).unwrap() - 0.5).abs() < 1e-12);
        assert!(average_precision(&[1.0], &[false]).is_err());
    }

    #[test]
    fn perfect_classifier() {
        let r = evaluate(&[1, 2, 3], &[vec![3.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, -1.0, 2.0]], &[1, 2, 3]).unwrap();
        assert_eq!(r.map, 1.0);
        assert_eq!(r.recognition_rate, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert!(r.confused_pairs.is_empty());
    }

    #[test]
    fn single_example() {
        let r = evaluate(&[0, 1, 2], &[vec![0.0, 1.0, 0.5]], &[2]).unwrap();
        assert_eq!(r.recognition_rate, 0.0);
        assert_eq!(r.confusion[2], vec![0, 1, 0]);
        assert_eq!(r.ap, vec![None, None, Some(1.0)]);
        assert!(evaluate(&[0, 1], &[], &[]).is_err());
    }

    #[test]
    fn random_scores_concentrate_near_prevalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 1000;
        let mut mean = 0.0;
        for _ in 0..trials {
            let labels: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
            let scores: Vec<f64> = (0..100).map(|_| rng.gen()).collect();
            mean += average_precision(&scores, &labels).unwrap() / trials as f64;
        }
        assert!((mean - 0.5).abs() <= 0.1, "{mean}");
    }

    proptest! {
        #[test]
        fn ap_invariant_under_monotone_transform(scores in proptest::collection::vec(-5.0f64..5.0, 1..30), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pos: Vec<bool> = scores.iter().map(|_| rng.gen_bool(0.4)).collect();
            pos[0] = true;
            let squashed: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            let a = average_precision(&scores, &pos).unwrap();
            let b = average_precision(&squashed, &pos).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn evaluation_ignores_image_order(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(3..20);
            let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0..5) as f64).collect()).collect();
            let truths: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let a = evaluate(&[0, 1, 2], &scores, &truths).unwrap();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.reverse();
            let b = evaluate(
                &[0, 1, 2],
                &idx.iter().map(|&i| scores[i].clone()).collect::<Vec<_>>(),
                &idx.iter().map(|&i| truths[i]).collect::<Vec<_>>(),
            ).unwrap();
            prop_assert_eq!(&a.confusion, &b.confusion);
            for (x, y) in a.ap.iter().zip(&b.ap) {
                prop_assert_eq!(x.map(|v| (v * 1e12).round()), y.map(|v| (v * 1e12).round()));
            }
            for (c, row) in a.confusion.iter().enumerate() {
                prop_assert_eq!(row.iter().sum::<u64>(), truths.iter().filter(|&&t| t == c as u32).count() as u64);
            }
        }
    }
}
