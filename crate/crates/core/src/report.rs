//! CSV tables for the evaluation protocols, locale-free with 9 significant
//! digits per float.

use crate::eval::{
    CurveMode, CurveRow, LocalizationReport, LocalizationRow, RandomizationReport, Variant,
};

/// Formats like C's `%.9g`.
pub fn fmt_sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{v:.*}", (8 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Relative change from `vanilla` to `lens` in whole percent, signed so that
/// positive means better. Equal values give `+0%`; a zero reference with a
/// different value gives `n/a`.
pub fn improvement(vanilla: f64, lens: f64, higher_is_better: bool) -> String {
    if vanilla == lens {
        return "+0%".into();
    }
    if vanilla == 0.0 || !vanilla.is_finite() || !lens.is_finite() {
        return "n/a".into();
    }
    let gain = if higher_is_better {
        lens - vanilla
    } else {
        vanilla - lens
    };
    let pct = (gain / vanilla.abs() * 100.0).round();
    if pct >= 0.0 {
        format!("+{}%", pct.abs() as i64)
    } else {
        format!("-{}%", pct.abs() as i64)
    }
}

fn to_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// One row per (sample, quadrant) with vanilla, lens and improvement
/// columns for each localization metric.
pub fn localization_csv(method: &str, rows: &[LocalizationRow]) -> String {
    let mut header = vec![
        "sample".to_string(),
        "quadrant".into(),
        "class".into(),
        "method".into(),
    ];
    for (name, _) in LocalizationReport::METRICS {
        header.extend([
            format!("{name}_vanilla"),
            format!("{name}_lens"),
            format!("{name}_improvement"),
        ]);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    to_csv(
        &header,
        rows.iter().map(|r| {
            let mut out = vec![
                r.sample.to_string(),
                r.quadrant.to_string(),
                r.class.to_string(),
                method.to_string(),
            ];
            for (_, get) in LocalizationReport::METRICS {
                let (a, b) = (get(&r.vanilla), get(&r.lens));
                out.extend([fmt_sig9(a), fmt_sig9(b), improvement(a, b, true)]);
            }
            out
        }),
    )
}

pub fn curve_csv(method: &str, mode: CurveMode, rows: &[CurveRow]) -> String {
    to_csv(
        &[
            "sample",
            "quadrant",
            "class",
            "method",
            "mode",
            "auc_vanilla",
            "auc_lens",
            "auc_improvement",
        ],
        rows.iter().map(|r| {
            vec![
                r.sample.to_string(),
                r.quadrant.to_string(),
                r.class.to_string(),
                method.to_string(),
                mode.name().to_string(),
                fmt_sig9(r.vanilla_auc),
                fmt_sig9(r.lens_auc),
                improvement(r.vanilla_auc, r.lens_auc, mode.higher_is_better()),
            ]
        }),
    )
}

/// One row per image × fraction × method × variant.
pub fn sanity_csv(report: &RandomizationReport) -> String {
    let mode = serde_json::to_value(report.similarity_mode).expect("enum serializes");
    let mode = mode.as_str().unwrap_or_default().to_string();
    to_csv(
        &[
            "image",
            "fraction",
            "groups_randomized",
            "groups_total",
            "method",
            "variant",
            "target",
            "pearson",
            "spearman",
            "cosine",
            "degenerate",
            "similarity_mode",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.image.to_string(),
                fmt_sig9(r.fraction),
                r.groups_randomized.to_string(),
                report.groups_total.to_string(),
                r.method.clone(),
                r.variant.name().to_string(),
                r.target.to_string(),
                fmt_sig9(r.similarity.pearson),
                fmt_sig9(r.similarity.spearman),
                fmt_sig9(r.similarity.cosine),
                r.similarity.degenerate.to_string(),
                mode.clone(),
            ]
        }),
    )
}

/// Batch means per fraction and method with the two variants side by side.
/// Lower similarity after randomization counts as an improvement.
pub fn sanity_summary_csv(report: &RandomizationReport) -> String {
    let mut header = vec!["fraction", "groups_randomized", "method", "images"];
    header.extend([
        "pearson_vanilla",
        "pearson_lens",
        "pearson_improvement",
        "spearman_vanilla",
        "spearman_lens",
        "spearman_improvement",
        "cosine_vanilla",
        "cosine_lens",
        "cosine_improvement",
    ]);
    let pairs = report.summary.chunks(2).map(|pair| {
        let (v, l) = (&pair[0], &pair[1]);
        debug_assert!(v.variant == Variant::Vanilla && l.variant == Variant::Lens);
        let mut out = vec![
            fmt_sig9(v.fraction),
            v.groups_randomized.to_string(),
            v.method.clone(),
            v.images.to_string(),
        ];
        for (a, b) in [
            (v.pearson, l.pearson),
            (v.spearman, l.spearman),
            (v.cosine, l.cosine),
        ] {
            out.extend([
                fmt_sig9(a),
                fmt_sig9(b),
                improvement(a.abs(), b.abs(), false),
            ]);
        }
        out
    });
    to_csv(&header, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_matches_printf() {
        // Reference strings from C printf("%.9g").
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.1, "0.1"),
            (1.0 / 3.0, "0.333333333"),
            (2.0 / 3.0, "0.666666667"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
            (999999999.5, "1e+09"),
            (0.908121909235, "0.908121909"),
        ];
        for (v, want) in cases {
            assert_eq!(fmt_sig9(v), want, "{v}");
        }
    }

    #[test]
    fn improvement_strings() {
        assert_eq!(improvement(0.4, 0.5, true), "+25%");
        assert_eq!(improvement(0.5, 0.5, true), "+0%");
        assert_eq!(improvement(0.5, 0.4, true), "-20%");
        assert_eq!(improvement(0.5, 0.4, false), "+20%");
        assert_eq!(improvement(0.0, 0.4, true), "n/a");
        assert_eq!(improvement(0.0, 0.0, true), "+0%");
        assert_eq!(improvement(1.0, 1.000001, true), "+0%");
    }

    #[test]
    fn empty_tables_have_headers_only() {
        let csv = curve_csv("gradient", CurveMode::Insertion, &[]);
        assert_eq!(
            csv,
            "sample,quadrant,class,method,mode,auc_vanilla,auc_lens,auc_improvement\n"
        );
        assert_eq!(localization_csv("gradient", &[]).lines().count(), 1);
    }
}
