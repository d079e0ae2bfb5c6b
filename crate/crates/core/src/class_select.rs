//! Choosing which classes compete in the lens.
//!
//! Ties between equal logits are always broken towards the lower class
//! index. Class order within the result is cosmetic: the lens is
//! permutation-equivariant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::check_distinct;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionStrategy {
    Predefined {
        classes: Vec<usize>,
    },
    TopK {
        k: usize,
        #[serde(default)]
        include_lowest: bool,
    },
    BestVsWorst,
}

impl SelectionStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            SelectionStrategy::Predefined { classes } => {
                if classes.len() < 2 {
                    return Err(Error::Config(format!(
                        "predefined class set needs at least 2 ids, got {}",
                        classes.len()
                    )));
                }
                check_distinct(classes).map_err(Error::Config)
            }
            SelectionStrategy::TopK { k, .. } if *k == 0 => {
                Err(Error::Config("top-k needs k >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Class indices sorted by descending logit, lower index first on ties.
fn ranked<T: Scalar>(logits: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| {
        logits[b]
            .partial_cmp(&logits[a])
            .expect("finite logits")
            .then(a.cmp(&b))
    });
    idx
}

fn argmin<T: Scalar>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v < logits[best] {
            best = i;
        }
    }
    best
}

pub fn select_classes<T: Scalar>(logits: &[T], strategy: &SelectionStrategy) -> Result<Vec<usize>> {
    strategy.validate()?;
    let n = logits.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 logits, got {n}"
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("logits must be finite".into()));
    }
    let selected = match strategy {
        SelectionStrategy::Predefined { classes } => {
            if let Some(bad) = classes.iter().find(|&&c| c >= n) {
                return Err(Error::Config(format!(
                    "class id {bad} out of range for {n} classes"
                )));
            }
            classes.clone()
        }
        SelectionStrategy::TopK { k, include_lowest } => {
            let mut out: Vec<usize> = ranked(logits).into_iter().take(*k).collect();
            let low = argmin(logits);
            if *include_lowest && !out.contains(&low) {
                out.push(low);
            }
            out
        }
        SelectionStrategy::BestVsWorst => {
            let best = ranked(logits)[0];
            let worst = argmin(logits);
            if best == worst {
                vec![best]
            } else {
                vec![best, worst]
            }
        }
    };
    if selected.len() < 2 {
        return Err(Error::Selection(format!(
            "strategy {strategy:?} yields fewer than 2 distinct classes"
        )));
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn top_k_with_lowest() {
        let logits = [2.0, -1.0, 0.5];
        let s = SelectionStrategy::TopK {
            k: 2,
            include_lowest: true,
        };
        assert_eq!(select_classes(&logits, &s).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn best_vs_worst() {
        assert_eq!(
            select_classes(&[2.0, -1.0, 0.5], &SelectionStrategy::BestVsWorst).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let s = SelectionStrategy::TopK {
            k: 1,
            include_lowest: true,
        };
        assert_eq!(select_classes(&[1.0, 1.0, 0.0], &s).unwrap(), vec![0, 2]);
        let s = SelectionStrategy::TopK {
            k: 2,
            include_lowest: false,
        };
        assert_eq!(
            select_classes(&[0.0, 3.0, 3.0, 3.0], &s).unwrap(),
            vec![1, 2]
        );
    }

    #[test]
    fn predefined_verbatim_and_validated() {
        let s = SelectionStrategy::Predefined {
            classes: vec![3, 0, 2],
        };
        assert_eq!(select_classes(&[0.0; 4], &s).unwrap(), vec![3, 0, 2]);
        let dup = SelectionStrategy::Predefined {
            classes: vec![1, 1],
        };
        assert!(matches!(
            select_classes(&[0.0; 4], &dup),
            Err(Error::Config(_))
        ));
        let range = SelectionStrategy::Predefined {
            classes: vec![1, 9],
        };
        assert!(matches!(
            select_classes(&[0.0; 4], &range),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn collapsing_selection_fails() {
        let s = SelectionStrategy::TopK {
            k: 1,
            include_lowest: false,
        };
        assert!(matches!(
            select_classes(&[1.0, 0.0], &s),
            Err(Error::Selection(_))
        ));
        // k >= C: every class is already present, the lowest adds nothing.
        let s = SelectionStrategy::TopK {
            k: 5,
            include_lowest: true,
        };
        assert_eq!(select_classes(&[1.0, 0.0], &s).unwrap(), vec![0, 1]);
        assert!(matches!(
            select_classes(&[1.0, 1.0], &SelectionStrategy::BestVsWorst),
            Err(Error::Selection(_))
        ));
    }

    #[test]
    fn strategy_json_shape() {
        let s: SelectionStrategy = serde_json::from_str(r#"{"kind":"top_k","k":2}"#).unwrap();
        assert_eq!(
            s,
            SelectionStrategy::TopK {
                k: 2,
                include_lowest: false
            }
        );
        assert!(
            serde_json::from_str::<SelectionStrategy>(r#"{"kind":"top_k","k":2,"extra":1}"#)
                .is_err()
        );
    }

    fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 2..12)
    }

    proptest! {
        #[test]
        fn monotone_invariance(logits in logits_strategy(), k in 1usize..6, low in any::<bool>()) {
            let mapped: Vec<f64> = logits.iter().map(|&v| (0.7 * v).exp() + v * v * v).collect();
            for s in [
                SelectionStrategy::TopK { k, include_lowest: low },
                SelectionStrategy::BestVsWorst,
            ] {
                let a = select_classes(&logits, &s);
                let b = select_classes(&mapped, &s);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "outcome differs"),
                }
            }
        }

        #[test]
        fn best_vs_worst_within_top_k(logits in logits_strategy()) {
            if let Ok(bw) = select_classes(&logits, &SelectionStrategy::BestVsWorst) {
                let tk = select_classes(&logits, &SelectionStrategy::TopK { k: logits.len() - 1, include_lowest: true }).unwrap();
                prop_assert!(bw.iter().all(|c| tk.contains(c)));
            }
        }

        #[test]
        fn output_distinct_and_large_enough(logits in logits_strategy(), k in 1usize..6, low in any::<bool>()) {
            if let Ok(sel) = select_classes(&logits, &SelectionStrategy::TopK { k, include_lowest: low }) {
                prop_assert!(sel.len() >= 2);
                let mut s = sel.clone();
                s.sort_unstable();
                s.dedup();
                prop_assert_eq!(s.len(), sel.len());
            }
        }
    }
}
