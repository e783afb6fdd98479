use serde::{Deserialize, Serialize};

use super::DeriveError;
use crate::signal_model::{BoxRect, ImageDims, IndividualRecord, MacroMapping, Value, VECTOR_SUM_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryClass {
    Negative,
    Positive,
}

/// Positive iff `p >= t`.
pub fn classify_binary(p: f64, t: f64) -> Result<BinaryClass, DeriveError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DeriveError::OutOfRange { what: "probability", value: p });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(DeriveError::OutOfRange { what: "threshold", value: t });
    }
    Ok(if p >= t {
        BinaryClass::Positive
    } else {
        BinaryClass::Negative
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgmaxOutcome {
    pub index: usize,
    /// More than one entry reached the maximum; the lowest index won.
    pub tie: bool,
}

/// Index of maximum activation.
pub fn classify_argmax(v: &[f64]) -> Result<ArgmaxOutcome, DeriveError> {
    if v.is_empty() {
        return Err(DeriveError::EmptyVector);
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > VECTOR_SUM_TOLERANCE {
        return Err(DeriveError::OutOfRange { what: "probability vector sum", value: sum });
    }
    Ok(argmax_unchecked(v))
}

/// Argmax without the sum-to-one precondition.
pub(crate) fn argmax_unchecked(v: &[f64]) -> ArgmaxOutcome {
    let mut index = 0;
    let mut tie = false;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[index] {
            index = i;
            tie = false;
        } else if x == v[index] {
            tie = true;
        }
    }
    ArgmaxOutcome { index, tie }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCounts {
    pub overall: u64,
    /// One count per class, in class order, when requested.
    pub per_class: Option<Vec<u64>>,
}

/// Counts individuals of a sample carrying `attribute`. With `classes`, also
/// tallies how many carry each class label.
pub fn count_instances(individuals: &[IndividualRecord], attribute: &str, classes: Option<&[String]>) -> InstanceCounts {
    let carriers = individuals.iter().filter_map(|i| i.get(attribute));
    let mut overall = 0;
    let mut per_class = classes.map(|c| vec![0u64; c.len()]);
    for v in carriers {
        overall += 1;
        if let (Some(counts), Some(classes), Some(label)) = (per_class.as_mut(), classes, v.as_label()) {
            if let Some(k) = classes.iter().position(|c| c == label) {
                counts[k] += 1;
            }
        }
    }
    InstanceCounts { overall, per_class }
}

/// Population standard deviation; `None` without values.
pub fn per_sample_std(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn relative_area(bbox: &BoxRect, dims: ImageDims) -> Result<f64, DeriveError> {
    if bbox.is_degenerate() {
        return Err(DeriveError::DegenerateBox);
    }
    if !bbox.fits_within(dims) {
        return Err(DeriveError::BoxOutOfBounds);
    }
    Ok(bbox.area() / dims.pixel_count() as f64)
}

pub fn map_macro<'m>(class: &str, mapping: &'m MacroMapping, level: usize) -> Result<&'m str, DeriveError> {
    mapping.lookup(class, level).ok_or_else(|| DeriveError::Unmapped {
        label: class.to_string(),
        mapping: mapping.name.clone(),
    })
}

/// Numeric reading of a value for spread statistics: numbers as-is, labels
/// by their position in `classes`.
pub(crate) fn ordinal(value: &Value, classes: &[String]) -> Option<f64> {
    match value {
        Value::Number(v) => Some(*v),
        Value::Label(l) => classes.iter().position(|c| c == l).map(|i| i as f64),
        Value::Vector(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_boundaries() {
        assert_eq!(classify_binary(0.35, 0.3).unwrap(), BinaryClass::Positive);
        assert_eq!(classify_binary(0.3, 0.3).unwrap(), BinaryClass::Positive);
        assert_eq!(classify_binary(0.0, 0.0).unwrap(), BinaryClass::Positive);
        assert_eq!(classify_binary(0.29, 0.3).unwrap(), BinaryClass::Negative);
        assert!(classify_binary(1.2, 0.3).is_err());
        assert!(classify_binary(0.2, -0.1).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(classify_argmax(&[0.1, 0.7, 0.2]).unwrap(), ArgmaxOutcome { index: 1, tie: false });
        assert_eq!(classify_argmax(&[0.5, 0.5]).unwrap(), ArgmaxOutcome { index: 0, tie: true });
        assert_eq!(classify_argmax(&[0.2, 0.4, 0.4]).unwrap(), ArgmaxOutcome { index: 1, tie: true });
        assert_eq!(classify_argmax(&[0.4, 0.4, 0.2]).unwrap().tie, true);
        // a tie below the maximum is not a tie
        assert_eq!(classify_argmax(&[0.2, 0.2, 0.6]).unwrap(), ArgmaxOutcome { index: 2, tie: false });
        assert_eq!(classify_argmax(&[]), Err(DeriveError::EmptyVector));
    }

    #[test]
    fn std_examples() {
        assert_eq!(per_sample_std(&[8.0, 12.0]), Some(2.0));
        assert_eq!(per_sample_std(&[7.0]), Some(0.0));
        assert_eq!(per_sample_std(&[]), None);
        // direct formula: mean 14, squared deviations 36 + 1 + 1 + 36 = 74, /4 = 18.5
        let v = per_sample_std(&[8.0, 13.0, 15.0, 20.0]).unwrap();
        assert!((v - 18.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn area_examples() {
        let d = ImageDims { width: 100, height: 100 };
        assert_eq!(relative_area(&BoxRect::new(0.0, 0.0, 50.0, 50.0), d).unwrap(), 0.25);
        assert_eq!(relative_area(&BoxRect::new(0.0, 0.0, 100.0, 100.0), d).unwrap(), 1.0);
        assert_eq!(relative_area(&BoxRect::new(0.0, 0.0, 0.0, 10.0), d), Err(DeriveError::DegenerateBox));
    }

    #[test]
    fn macro_examples() {
        let coco = MacroMapping::from_toml(crate::signal_model::builtin::COCO_MACRO_TOML).unwrap();
        assert_eq!(map_macro("teddy bear", &coco, 1).unwrap(), "indoor");
        let classes: Vec<String> = vec!["a".into(), "b".into()];
        let id = MacroMapping::identity("id", &classes);
        assert_eq!(map_macro("b", &id, 1).unwrap(), "b");
        let err = map_macro("unicorn", &coco, 1).unwrap_err();
        assert!(err.to_string().contains("unicorn"));
    }

    fn linear_scan(v: &[f64]) -> usize {
        let mut best = 0;
        for i in 0..v.len() {
            if v[i] > v[best] {
                best = i;
            }
        }
        best
    }

    fn tally(labels: &[Option<usize>], n_c: usize) -> (u64, Vec<u64>) {
        let mut per = vec![0; n_c];
        let mut all = 0;
        for l in labels.iter().flatten() {
            all += 1;
            per[*l] += 1;
        }
        (all, per)
    }

    proptest! {
        #[test]
        fn argmax_matches_scan_and_is_scale_invariant(raw in prop::collection::vec(0.0f64..1.0, 1..12), scale in 0.01f64..100.0) {
            let sum: f64 = raw.iter().sum();
            prop_assume!(sum > 0.0);
            let v: Vec<f64> = raw.iter().map(|x| x / sum).collect();
            let a = argmax_unchecked(&v);
            prop_assert_eq!(a.index, linear_scan(&v));
            let scaled: Vec<f64> = raw.iter().map(|x| x * scale).collect();
            prop_assert_eq!(argmax_unchecked(&scaled).index, argmax_unchecked(&raw).index);
        }

        #[test]
        fn threshold_monotone(p in 0.0f64..=1.0, t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if classify_binary(p, hi).unwrap() == BinaryClass::Positive {
                prop_assert_eq!(classify_binary(p, lo).unwrap(), BinaryClass::Positive);
            }
        }

        #[test]
        fn counts_match_tally(labels in prop::collection::vec(prop::option::of(0usize..4), 0..20)) {
            let classes: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
            let inds: Vec<IndividualRecord> = labels.iter().enumerate().map(|(i, l)| {
                let mut r = IndividualRecord::new(i as u32);
                if let Some(l) = l {
                    r.signal_values.insert("obj".into(), Value::Label(classes[*l].clone()));
                }
                r
            }).collect();
            let c = count_instances(&inds, "obj", Some(&classes));
            let (all, per) = tally(&labels, 4);
            prop_assert_eq!(c.overall, all);
            prop_assert_eq!(c.per_class.clone().unwrap(), per);
            prop_assert_eq!(c.per_class.unwrap().iter().sum::<u64>(), c.overall);
        }

        #[test]
        fn std_translation_and_scale(v in prop::collection::vec(-100.0f64..100.0, 1..10), shift in -50.0f64..50.0, k in 0.1f64..10.0) {
            let base = per_sample_std(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            prop_assert!((per_sample_std(&shifted).unwrap() - base).abs() < 1e-8);
            prop_assert!((per_sample_std(&scaled).unwrap() - k * base).abs() < 1e-8 * (1.0 + k * base));
        }

        #[test]
        fn relative_area_matches_arithmetic((w, h, x, y, bw, bh) in (1u32..400, 1u32..400).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), 0..w, 0..h).prop_flat_map(|(w, h, x, y)| (Just(w), Just(h), Just(x), Just(y), 1..=w - x, 1..=h - y))
        })) {
            let dims = ImageDims { width: w, height: h };
            let r = relative_area(&BoxRect::new(x as f64, y as f64, bw as f64, bh as f64), dims).unwrap();
            let oracle = (bw as f64 / w as f64) * (bh as f64 / h as f64);
            prop_assert!((r - oracle).abs() < 1e-12);
        }
    }
}
