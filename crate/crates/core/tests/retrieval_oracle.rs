use std::collections::{BTreeMap, BTreeSet};

use orbitpool::retrieval::{evaluate_map, GroundTruth, ManifestImage};
use orbitpool::{
    average_precision, mean_average_precision, rank, recall4_times4, DatasetManifest, Descriptor, Error, Protocol,
    Query, RankedList, Role, SearchIndex,
};
use proptest::prelude::*;

fn img(id: &str, role: Role) -> ManifestImage {
    ManifestImage { id: id.into(), path: format!("{id}.jpg"), role }
}

fn ids(list: &RankedList) -> Vec<&str> {
    list.ids().collect()
}

/// Sort positions, then average precision at each relevant position.
fn oracle_ap(scores: &[(String, f64)], relevant: &BTreeSet<String>, junk: &BTreeSet<String>) -> f64 {
    let mut order: Vec<&(String, f64)> = scores.iter().filter(|(id, _)| !junk.contains(id)).collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut found = 0.0;
    let mut ap = 0.0;
    for (pos, (id, _)) in order.iter().enumerate() {
        if relevant.contains(id) {
            found += 1.0;
            ap += found / (pos as f64 + 1.0);
        }
    }
    ap / relevant.len() as f64
}

fn float_index(vectors: &[(&str, Vec<f32>)]) -> SearchIndex {
    SearchIndex::float(vectors.iter().map(|(id, v)| (id.to_string(), Descriptor::new(v.clone(), "t"))).collect())
        .unwrap()
}

#[test]
fn hand_example_five_sixths() {
    let index = float_index(&[("A", vec![1.0, 0.0]), ("X", vec![0.8, 0.6]), ("B", vec![0.0, 1.0])]);
    let q = Descriptor::new(vec![1.0, 0.1], "t");
    let list = rank("q", Query::Float(&q), &index, Protocol::Standard, &BTreeSet::new()).unwrap();
    assert_eq!(ids(&list), ["A", "X", "B"]);
    let relevant = BTreeSet::from(["A".to_string(), "B".to_string()]);
    assert!((average_precision(&list, &relevant).unwrap() - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn ties_break_by_id_and_standard_protocol_drops_the_query() {
    let index = float_index(&[("q", vec![1.0]), ("b", vec![2.0]), ("a", vec![3.0])]);
    let q = Descriptor::new(vec![1.0], "t");
    let list = rank("q", Query::Float(&q), &index, Protocol::Standard, &BTreeSet::new()).unwrap();
    assert_eq!(ids(&list), ["a", "b"]);
    let list = rank("q", Query::Float(&q), &index, Protocol::Ukb, &BTreeSet::new()).unwrap();
    assert_eq!(ids(&list), ["a", "b", "q"]);
}

#[test]
fn junk_is_removed_before_ranking() {
    let index = float_index(&[("j", vec![1.0, 0.0]), ("r", vec![0.9, 0.1]), ("x", vec![0.0, 1.0])]);
    let q = Descriptor::new(vec![1.0, 0.0], "t");
    let junk = BTreeSet::from(["j".to_string()]);
    let list = rank("q", Query::Float(&q), &index, Protocol::Standard, &junk).unwrap();
    assert_eq!(ids(&list), ["r", "x"]);
    assert_eq!(average_precision(&list, &BTreeSet::from(["r".to_string()])).unwrap(), 1.0);
}

#[test]
fn hash_and_float_indexes_refuse_each_other() {
    let index = float_index(&[("a", vec![1.0])]);
    let h = orbitpool::BinaryHash::zeros(1);
    assert!(matches!(
        rank("q", Query::Hash(&h), &index, Protocol::Standard, &BTreeSet::new()),
        Err(Error::TypeMismatch(_))
    ));
}

#[test]
fn ukb_perfect_groups_score_four() {
    let mut images = Vec::new();
    let mut ground_truth = BTreeMap::new();
    let mut vectors = Vec::new();
    for g in 0..3 {
        let group: Vec<String> = (0..4).map(|k| format!("{g}{k}")).collect();
        for (k, id) in group.iter().enumerate() {
            images.push(img(id, Role::Both));
            ground_truth.insert(id.clone(), GroundTruth { relevant: group.clone(), junk: vec![] });
            let mut v = vec![0.0f32; 7];
            v[g] = 1.0;
            v[3 + k] = 0.01;
            vectors.push((id.clone(), Descriptor::new(v, "t")));
        }
    }
    let manifest = DatasetManifest { protocol: Protocol::Ukb, images, ground_truth };
    manifest.validate().unwrap();
    let index = SearchIndex::float(vectors.clone()).unwrap();
    let lists: Vec<RankedList> = vectors
        .iter()
        .map(|(id, d)| rank(id, Query::Float(d), &index, Protocol::Ukb, &BTreeSet::new()).unwrap())
        .collect();
    assert!(lists.iter().all(|l| l.entries[0].id == l.query_id));
    assert_eq!(recall4_times4(&lists, &manifest).unwrap(), 4.0);
    assert!(matches!(mean_average_precision(&lists, &manifest), Ok(v) if v == 1.0));

    let standard = DatasetManifest { protocol: Protocol::Standard, ..manifest.clone() };
    assert!(recall4_times4(&lists, &standard).is_err());
}

#[test]
fn manifest_validation() {
    let ok = r#"{"protocol":"standard","images":[
        {"id":"q","path":"q.jpg","role":"query"},{"id":"d","path":"d.jpg","role":"database"}],
        "ground_truth":{"q":{"relevant":["d"]}}}"#;
    let m = DatasetManifest::from_json(ok).unwrap();
    assert_eq!(m.query_ids().collect::<Vec<_>>(), ["q"]);
    assert!(m.junk("q").is_empty());
    assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);

    for bad in [
        ok.replace(r#""relevant":["d"]"#, r#""relevant":["q"]"#),
        ok.replace(r#""relevant":["d"]"#, r#""relevant":["zz"]"#),
        ok.replace(r#""relevant":["d"]"#, r#""relevant":["d"],"junk":["d"]"#),
        ok.replace(r#""id":"d""#, r#""id":"q""#),
        ok.replace("standard", "ukb"),
    ] {
        assert!(DatasetManifest::from_json(&bad).is_err(), "{bad}");
    }
}

fn instance() -> impl Strategy<Value = (Vec<(String, f64)>, BTreeSet<String>, BTreeSet<String>)> {
    (2usize..=20).prop_flat_map(|n| {
        let names: Vec<String> = (0..n).map(|i| format!("i{i:02}")).collect();
        (
            prop::collection::vec(0u8..6, n),
            prop::sample::subsequence(names.clone(), 1..=n.min(5)),
            prop::collection::vec(prop::bool::weighted(0.15), n),
        )
            .prop_map(move |(dist, rel, junk_flags)| {
                let scores: Vec<(String, f64)> = names.iter().cloned().zip(dist.into_iter().map(f64::from)).collect();
                let relevant: BTreeSet<String> = rel.into_iter().collect();
                let junk = names
                    .iter()
                    .zip(junk_flags)
                    .filter(|(id, j)| *j && !relevant.contains(*id))
                    .map(|(id, _)| id.clone())
                    .collect();
                (scores, relevant, junk)
            })
    })
}

fn index_of(scores: &[(String, f64)]) -> SearchIndex {
    // one dimension: descriptor [1, d] normalizes to a monotone function of d
    SearchIndex::float(scores.iter().map(|(id, d)| (id.clone(), Descriptor::new(vec![1.0, *d as f32], "t"))).collect())
        .unwrap()
}

fn ranked(scores: &[(String, f64)], junk: &BTreeSet<String>) -> RankedList {
    let q = Descriptor::new(vec![1.0, 0.0], "t");
    rank("query", Query::Float(&q), &index_of(scores), Protocol::Standard, junk).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ap_matches_oracle_through_rank((scores, relevant, junk) in instance()) {
        let list = ranked(&scores, &junk);
        let got = average_precision(&list, &relevant).unwrap();
        prop_assert!((got - oracle_ap(&scores, &relevant, &junk)).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn ap_is_invariant_under_monotone_distance_maps((scores, relevant, _j) in instance()) {
        let stretched: Vec<(String, f64)> = scores.iter().map(|(id, d)| (id.clone(), d * 3.0 + 1.0)).collect();
        let none = BTreeSet::new();
        prop_assert_eq!(
            average_precision(&ranked(&scores, &none), &relevant).unwrap(),
            average_precision(&ranked(&stretched, &none), &relevant).unwrap()
        );
    }

    #[test]
    fn removing_junk_never_lowers_ap((scores, relevant, junk) in instance()) {
        let with_junk = average_precision(&ranked(&scores, &BTreeSet::new()), &relevant).unwrap();
        let without = average_precision(&ranked(&scores, &junk), &relevant).unwrap();
        prop_assert!(without >= with_junk - 1e-12);
    }

    #[test]
    fn map_is_the_mean_of_per_query_ap(instances in prop::collection::vec(instance(), 1..4)) {
        let mut images = Vec::new();
        let mut gt = BTreeMap::new();
        let mut lists = Vec::new();
        let mut oracle = 0.0;
        let db: BTreeSet<&String> = instances.iter().flat_map(|(s, _, _)| s.iter().map(|(id, _)| id)).collect();
        for id in &db {
            images.push(img(id, Role::Database));
        }
        for (k, (scores, relevant, junk)) in instances.iter().enumerate() {
            let qid = format!("q{k}");
            images.push(img(&qid, Role::Query));
            gt.insert(qid.clone(), GroundTruth {
                relevant: relevant.iter().cloned().collect(),
                junk: junk.iter().cloned().collect(),
            });
            let mut list = ranked(scores, junk);
            list.query_id = qid;
            lists.push(list);
            oracle += oracle_ap(scores, relevant, junk);
        }
        let manifest = DatasetManifest { protocol: Protocol::Standard, images, ground_truth: gt };
        let scores = evaluate_map(&lists, &manifest).unwrap();
        prop_assert!((scores.value - oracle / instances.len() as f64).abs() <= 1e-9);
        prop_assert_eq!(scores.per_query.len(), instances.len());
    }
}
