use std::collections::BTreeSet;

use proptest::prelude::*;
use zhcurate::corpus::{read_all, write_jsonl};
use zhcurate::dedup::{estimate_jaccard, exact_jaccard, minhash_signature, shingle, HashFamily, ShingleUnit};
use zhcurate::filter::CharCensus;
use zhcurate::mixture::solve_epochs;
use zhcurate::normalize::{s2t_convert, to_fullwidth_punct, ConversionDict, PunctMap};
use zhcurate::pipeline::{run_stages, PipelineConfig, Prepared};
use zhcurate::Document;

fn doc_strategy() -> impl Strategy<Value = Document> {
    (
        "[a-z0-9]{1,8}",
        prop::sample::select(vec!["gigaword5-cna", "asbc", "cc100-zht", "xp3-zht"]),
        "[台北市天氣很好，。,.!#@ a-z\n]{0,60}",
        prop::collection::btree_map("[a-z]{1,4}", "[a-z字]{0,4}", 0..3),
    )
        .prop_map(|(id, source, text, meta)| {
            let mut d = Document::new(id, source, text);
            d.meta = meta;
            d
        })
}

fn no_ppl_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::from_toml(
        r#"
seed = 7
inputs = ["unused.jsonl"]
output_dir = "unused"
stages = ["content", "extract", "dedup", "quality", "repetition", "punct", "s2t"]
[dedup]
drop = true
[quality]
min_chinese_chars = 5
"#,
    )
    .unwrap();
    cfg.workers = Some(1);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_round_trip(docs in prop::collection::vec(doc_strategy(), 0..8)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        prop_assert_eq!(write_jsonl(&docs, &path).unwrap(), docs.len());
        prop_assert_eq!(read_all(&path).unwrap(), docs);
    }

    #[test]
    fn census_is_bounded(text in "\\PC{0,80}") {
        let c = CharCensus::of(&text);
        prop_assert!(c.chinese + c.symbols <= c.non_whitespace);
        let r = c.symbol_ratio();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn punct_mapping_keeps_length(text in "[a-z字,.!?;: ]{0,40}") {
        let map = PunctMap::new([(',', '，'), ('.', '。'), ('!', '！')]).unwrap();
        let out = to_fullwidth_punct(&text, &map);
        prop_assert_eq!(out.chars().count(), text.chars().count());
        prop_assert!(!out.contains(',') && !out.contains('.') && !out.contains('!'));
        prop_assert_eq!(to_fullwidth_punct(&out, &map), out);
    }

    #[test]
    fn s2t_leaves_unlisted_text(text in "[a-z0-9 ]{0,40}") {
        prop_assert_eq!(s2t_convert(&text, &ConversionDict::shipped()), text);
    }

    #[test]
    fn jaccard_bounds(a in "[甲乙丙丁戊己庚辛]{0,12}", b in "[甲乙丙丁戊己庚辛]{0,12}", seed in any::<u64>()) {
        let sa = shingle(&a, ShingleUnit::CharUnigram, None).unwrap();
        let sb = shingle(&b, ShingleUnit::CharUnigram, None).unwrap();
        let j = exact_jaccard(&sa, &sb).unwrap();
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, exact_jaccard(&sb, &sa).unwrap());
        if !sa.is_empty() && !sb.is_empty() {
            let fam = HashFamily::new(32, seed);
            let ga = minhash_signature(&sa, &fam).unwrap();
            let gb = minhash_signature(&sb, &fam).unwrap();
            let est = estimate_jaccard(&ga, &gb).unwrap();
            prop_assert!((0.0..=1.0).contains(&est));
            if j == 1.0 {
                prop_assert_eq!(est, 1.0);
            }
            if j == 0.0 {
                prop_assert_eq!(est, 0.0);
            }
        }
    }

    #[test]
    fn epochs_spend_the_budget(raw in prop::collection::vec((1e6f64..1e10, 0.01f64..1.0), 1..8),
                               budget in 1e8f64..1e11) {
        let total: f64 = raw.iter().map(|r| r.1).sum();
        let subsets: Vec<(f64, f64)> = raw.iter().map(|&(s, p)| (s, p / total)).collect();
        let epochs = solve_epochs(&subsets, budget).unwrap();
        let spent: f64 = epochs.iter().zip(&subsets).map(|(e, (s, _))| e * s).sum();
        prop_assert!((spent - budget).abs() <= budget * 1e-9);
    }

    #[test]
    fn pipeline_conserves_documents(docs in prop::collection::vec(doc_strategy(), 0..20)) {
        let mut seen = BTreeSet::new();
        let docs: Vec<Document> = docs.into_iter().filter(|d| seen.insert(d.id.clone())).collect();
        let cfg = no_ppl_config();
        let prep = Prepared::new(&cfg).unwrap();
        let out = run_stages(docs.clone(), &cfg, &prep).unwrap();
        prop_assert_eq!(out.kept.len() + out.dropped.len(), docs.len());
        prop_assert_eq!(out.report.input_docs, docs.len());
        let mut ids: Vec<&str> = out.kept.iter().chain(&out.dropped).map(|d| d.id.as_str()).collect();
        ids.sort_unstable();
        let mut want: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
        want.sort_unstable();
        prop_assert_eq!(ids, want);
        for s in &out.report.stages {
            prop_assert_eq!(s.kept + s.dropped, s.input_docs);
        }
        prop_assert!(out.dropped.iter().all(|d| d.is_dropped()));
        prop_assert!(out.kept.iter().all(|d| !d.is_dropped()));
    }
}
