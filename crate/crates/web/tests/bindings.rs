use serde_json::Value;
use zhcurate_web::{minhash_json, mixture_json, quality_json};

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn default_mixture_rows() {
    let v = parse(mixture_json("", "1b").unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for r in rows {
        let stated = r["stated"].as_f64().unwrap();
        assert!((r["epochs"].as_f64().unwrap() - stated).abs() <= 0.15, "{r}");
    }
    let v = parse(mixture_json("", "3b").unwrap());
    assert_eq!(v["budget_tokens"].as_f64().unwrap(), 13e9);
    assert!(v["rows"][0]["stated"].is_null());
}

#[test]
fn bad_mixture_input() {
    assert!(mixture_json("not toml [", "").is_err());
    assert!(mixture_json("", "lots").is_err());
}

#[test]
fn minhash_identical_and_disjoint() {
    let v = parse(minhash_json("台灣天氣", "台灣天氣", 64, 1).unwrap());
    assert_eq!(v["exact"].as_f64(), Some(1.0));
    assert_eq!(v["estimate"].as_f64(), Some(1.0));
    let v = parse(minhash_json("甲乙丙", "丁戊己", 64, 1).unwrap());
    assert_eq!(v["exact"].as_f64(), Some(0.0));
    assert_eq!(v["estimate"].as_f64(), Some(0.0));
    assert!(minhash_json("a", "b", 0, 1).is_err());
}

#[test]
fn quality_gate() {
    let text: String = "天".repeat(150);
    let v = parse(quality_json(&text, 150, 0.4).unwrap());
    assert_eq!(v["verdict"], "kept");
    let v = parse(quality_json(&text[3..], 150, 0.4).unwrap());
    assert_eq!(v["reason"], "min_chinese_chars");
    assert!(quality_json("x", 1, 1.5).is_err());
}
