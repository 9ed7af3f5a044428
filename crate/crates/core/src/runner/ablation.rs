use std::fmt::Write as _;
use std::path::Path;

use super::{train, TrainConfig};
use crate::data::Dataset;
use crate::error::Result;

const K_SWEEP: [usize; 4] = [1, 2, 4, 16];
/// Stands in for a sweep value that equals the base K.
const K_REPLACEMENT: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct AblationResult {
    pub variant: String,
    pub error_rate: f64,
}

/// The ablation variants, each differing from `base` in one setting: a K
/// sweep and six switches.
pub fn ablation_variants(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut out = Vec::new();
    for k in K_SWEEP {
        let k = if k == base.k { K_REPLACEMENT } else { k };
        let mut c = base.clone();
        c.k = k;
        out.push((format!("k={k}"), c));
    }
    let flags: [(&str, fn(&mut TrainConfig)); 6] = [
        ("no_rotation", |c| c.no_rotation = true),
        ("no_premixup", |c| c.no_premixup = true),
        ("no_align", |c| c.no_align = true),
        ("l2_unlabeled", |c| c.l2_unlabeled = true),
        ("no_strong_aug", |c| c.no_strong_aug = true),
        ("no_weak_aug", |c| c.no_weak_aug = true),
    ];
    for (name, set) in flags {
        let mut c = base.clone();
        set(&mut c);
        out.push((name.to_string(), c));
    }
    out
}

/// Trains the base configuration and every variant. With `out`, each run
/// writes into its own subdirectory.
pub fn run_ablation_suite(
    base: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    out: Option<&Path>,
) -> Result<Vec<AblationResult>> {
    let mut runs = vec![("baseline".to_string(), base.clone())];
    runs.extend(ablation_variants(base));
    runs.into_iter()
        .map(|(variant, cfg)| {
            let dir = out.map(|d| d.join(&variant));
            let outcome = train(&cfg, train_set, test_set, dir.as_deref())?;
            Ok(AblationResult { variant, error_rate: outcome.final_error })
        })
        .collect()
}

pub fn format_ablation_table(results: &[AblationResult]) -> String {
    let mut s = String::from("variant,error_rate\n");
    for r in results {
        let _ = writeln!(s, "{},{:.4}", r.variant, r.error_rate);
    }
    s
}
