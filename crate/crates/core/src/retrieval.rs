//! Dataset manifests, ranking, and retrieval metrics.
//!
//! Average precision is non-interpolated over the full ranking, with junk
//! ids removed before ranking (the Oxford convention).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::HashIndex;
use crate::pooling::{apply_sequence, PoolingSequence};
use crate::types::{
    euclidean_distance, hamming_distance, l2_normalize, squared_distance, BinaryHash, Descriptor, FeatureOrbitTensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Query,
    Database,
    Both,
}

impl Role {
    pub fn is_query(self) -> bool {
        matches!(self, Role::Query | Role::Both)
    }

    pub fn is_database(self) -> bool {
        matches!(self, Role::Database | Role::Both)
    }
}

/// `Standard` drops the query from its own ranking; `Ukb` keeps the
/// self-match and counts the query among its four relevant images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Standard,
    Ukb,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub id: String,
    pub path: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroundTruth {
    pub relevant: Vec<String>,
    #[serde(default)]
    pub junk: Vec<String>,
}

/// Images, roles and relevance judgements of one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub protocol: Protocol,
    pub images: Vec<ManifestImage>,
    pub ground_truth: BTreeMap<String, GroundTruth>,
}

impl DatasetManifest {
    /// Parses and validates manifest JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGroundTruth(msg));
        let mut roles = BTreeMap::new();
        for img in &self.images {
            if roles.insert(img.id.as_str(), img.role).is_some() {
                return bad(format!("duplicate image id `{}`", img.id));
            }
        }
        for (qid, gt) in &self.ground_truth {
            match roles.get(qid.as_str()) {
                Some(role) if role.is_query() => {}
                Some(_) => return bad(format!("ground-truth key `{qid}` is not a query image")),
                None => return bad(format!("ground-truth key `{qid}` is not in the image list")),
            }
            if gt.relevant.is_empty() {
                return bad(format!("query `{qid}` has no relevant images"));
            }
            for id in gt.relevant.iter().chain(&gt.junk) {
                if !roles.get(id.as_str()).is_some_and(|r| r.is_database()) {
                    return bad(format!("query `{qid}` references `{id}`, which is not a database image"));
                }
            }
            let relevant: HashSet<&String> = gt.relevant.iter().collect();
            if let Some(id) = gt.junk.iter().find(|id| relevant.contains(id)) {
                return bad(format!("query `{qid}` lists `{id}` as both relevant and junk"));
            }
            match self.protocol {
                Protocol::Ukb => {
                    if relevant.len() != 4 || !relevant.contains(qid) {
                        return bad(format!("ukb query `{qid}` needs exactly 4 relevant images including itself"));
                    }
                }
                Protocol::Standard => {
                    if relevant.contains(qid) {
                        return bad(format!("standard-protocol query `{qid}` lists itself as relevant"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Query ids in sorted order.
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.ground_truth.keys().map(String::as_str)
    }

    pub fn database_images(&self) -> impl Iterator<Item = &ManifestImage> {
        self.images.iter().filter(|i| i.role.is_database())
    }

    pub fn image(&self, id: &str) -> Option<&ManifestImage> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn relevant(&self, qid: &str) -> Result<BTreeSet<String>> {
        self.ground_truth
            .get(qid)
            .map(|gt| gt.relevant.iter().cloned().collect())
            .ok_or_else(|| Error::InvalidGroundTruth(format!("no ground truth for query `{qid}`")))
    }

    pub fn junk(&self, qid: &str) -> BTreeSet<String> {
        self.ground_truth.get(qid).map(|gt| gt.junk.iter().cloned().collect()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub id: String,
    pub distance: f64,
}

/// Database ids by ascending distance, ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Sorts `(id, distance)` pairs into ranking order.
    pub fn from_unsorted(query_id: impl Into<String>, mut entries: Vec<RankedEntry>) -> Self {
        entries.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
        Self { query_id: query_id.into(), entries }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }
}

/// Database side of a search: unit-normalized float descriptors, or hashes.
#[derive(Debug, Clone)]
pub enum SearchIndex {
    Float(Vec<(String, Descriptor)>),
    Hash(HashIndex),
}

impl SearchIndex {
    /// L2-normalizes every descriptor up front.
    pub fn float(entries: Vec<(String, Descriptor)>) -> Result<Self> {
        if let Some((_, first)) = entries.first() {
            if let Some((_, d)) = entries.iter().find(|(_, d)| d.dims() != first.dims()) {
                return Err(Error::DimensionMismatch { left: first.dims(), right: d.dims() });
            }
        }
        Ok(Self::Float(entries.into_iter().map(|(id, d)| (id, l2_normalize(&d))).collect()))
    }

    pub fn hash(index: HashIndex) -> Self {
        Self::Hash(index)
    }

    pub fn len(&self) -> usize {
        match self {
            SearchIndex::Float(e) => e.len(),
            SearchIndex::Hash(h) => h.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn distance_name(&self) -> &'static str {
        match self {
            SearchIndex::Float(_) => "euclidean_l2_normalized",
            SearchIndex::Hash(_) => "hamming",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Query<'a> {
    Float(&'a Descriptor),
    Hash(&'a BinaryHash),
}

/// Ranks the index against one query. Under [`Protocol::Standard`] the
/// query's own id is dropped; junk ids are always dropped.
pub fn rank(
    query_id: &str,
    query: Query<'_>,
    index: &SearchIndex,
    protocol: Protocol,
    junk: &BTreeSet<String>,
) -> Result<RankedList> {
    let keep = |id: &str| !junk.contains(id) && (protocol == Protocol::Ukb || id != query_id);
    let entries = match (query, index) {
        (Query::Float(q), SearchIndex::Float(entries)) => {
            let q = l2_normalize(q);
            let mut out = Vec::with_capacity(entries.len());
            for (id, d) in entries.iter().filter(|(id, _)| keep(id)) {
                if d.dims() != q.dims() {
                    return Err(Error::DimensionMismatch { left: q.dims(), right: d.dims() });
                }
                out.push(RankedEntry { id: id.clone(), distance: squared_distance(q.values(), d.values()).sqrt() });
            }
            out
        }
        (Query::Hash(q), SearchIndex::Hash(index)) => index
            .entries()
            .iter()
            .filter(|(id, _)| keep(id))
            .map(|(id, h)| Ok(RankedEntry { id: id.clone(), distance: hamming_distance(q, h)? as f64 }))
            .collect::<Result<_>>()?,
        (Query::Float(_), SearchIndex::Hash(_)) => {
            return Err(Error::TypeMismatch("float query against a hash index".into()))
        }
        (Query::Hash(_), SearchIndex::Float(_)) => {
            return Err(Error::TypeMismatch("hash query against a float index".into()))
        }
    };
    Ok(RankedList::from_unsorted(query_id, entries))
}

/// Ranks every manifest query in parallel; output is sorted by query id.
pub fn rank_all<'a, F>(manifest: &DatasetManifest, index: &SearchIndex, query_of: F) -> Result<Vec<RankedList>>
where
    F: Fn(&str) -> Option<Query<'a>> + Sync,
{
    let ids: Vec<&str> = manifest.query_ids().collect();
    ids.par_iter()
        .map(|qid| {
            let q =
                query_of(qid).ok_or_else(|| Error::InvalidGroundTruth(format!("no descriptor for query `{qid}`")))?;
            rank(qid, q, index, manifest.protocol, &manifest.junk(qid))
        })
        .collect()
}

/// Non-interpolated AP: mean of precision@k over the ranks k of relevant
/// hits; relevant ids missing from the ranking contribute 0.
pub fn average_precision(r: &RankedList, relevant: &BTreeSet<String>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::InvalidGroundTruth(format!("query `{}` has no relevant ids", r.query_id)));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in r.ids().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Per-query scores plus their unweighted mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricScores {
    pub value: f64,
    pub per_query: BTreeMap<String, f64>,
}

fn per_query_scores<F>(lists: &[RankedList], manifest: &DatasetManifest, score: F) -> Result<MetricScores>
where
    F: Fn(&RankedList, &BTreeSet<String>) -> Result<f64> + Sync,
{
    if lists.is_empty() {
        return Err(Error::InvalidGroundTruth("no ranked lists to evaluate".into()));
    }
    let scored: Vec<(String, f64)> = lists
        .par_iter()
        .map(|l| Ok((l.query_id.clone(), score(l, &manifest.relevant(&l.query_id)?)?)))
        .collect::<Result<_>>()?;
    let per_query: BTreeMap<String, f64> = scored.into_iter().collect();
    if per_query.len() != lists.len() {
        return Err(Error::InvalidGroundTruth("duplicate ranked list for one query".into()));
    }
    // summed in query-id order for a reproducible value
    let value = per_query.values().sum::<f64>() / per_query.len() as f64;
    Ok(MetricScores { value, per_query })
}

pub fn evaluate_map(lists: &[RankedList], manifest: &DatasetManifest) -> Result<MetricScores> {
    per_query_scores(lists, manifest, average_precision)
}

/// Unweighted mean of per-query AP.
pub fn mean_average_precision(lists: &[RankedList], manifest: &DatasetManifest) -> Result<f64> {
    Ok(evaluate_map(lists, manifest)?.value)
}

pub fn evaluate_recall4x4(lists: &[RankedList], manifest: &DatasetManifest) -> Result<MetricScores> {
    if manifest.protocol != Protocol::Ukb {
        return Err(Error::ProtocolMismatch("4xRecall@4 requires the ukb protocol".into()));
    }
    per_query_scores(lists, manifest, |l, relevant| {
        Ok(l.ids().take(4).filter(|id| relevant.contains(*id)).count() as f64)
    })
}

/// Mean count of relevant ids in the top 4, in `[0, 4]`.
pub fn recall4_times4(lists: &[RankedList], manifest: &DatasetManifest) -> Result<f64> {
    Ok(evaluate_recall4x4(lists, manifest)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "map")]
    Map,
    #[serde(rename = "recall4x4")]
    Recall4x4,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Map => "map",
            Metric::Recall4x4 => "recall4x4",
        }
    }

    pub fn evaluate(self, lists: &[RankedList], manifest: &DatasetManifest) -> Result<MetricScores> {
        match self {
            Metric::Map => evaluate_map(lists, manifest),
            Metric::Recall4x4 => evaluate_recall4x4(lists, manifest),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(Metric::Map),
            "recall4x4" => Ok(Metric::Recall4x4),
            other => Err(Error::Config(format!("unknown metric `{other}` (expected map or recall4x4)"))),
        }
    }
}

/// The evaluation output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub per_query: BTreeMap<String, f64>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceRow {
    pub pair_id: String,
    pub sequence: String,
    pub distance: f64,
}

/// Distance between the L2-normalized descriptors of two orbits, one row
/// per sequence.
pub fn pairwise_distance_report(
    pair_id: &str,
    pair: (&FeatureOrbitTensor, &FeatureOrbitTensor),
    sequences: &[PoolingSequence],
) -> Result<Vec<DistanceRow>> {
    sequences
        .iter()
        .map(|seq| {
            let a = l2_normalize(&apply_sequence(pair.0, seq)?);
            let b = l2_normalize(&apply_sequence(pair.1, seq)?);
            Ok(DistanceRow {
                pair_id: pair_id.to_string(),
                sequence: if seq.is_empty() { "raw".into() } else { seq.to_string() },
                distance: euclidean_distance(&a, &b)?,
            })
        })
        .collect()
}

/// CSV with header `pair_id,sequence,distance`.
pub fn write_distance_csv<W: Write>(rows: &[DistanceRow], mut out: W) -> Result<()> {
    writeln!(out, "pair_id,sequence,distance")?;
    for row in rows {
        writeln!(out, "{},{},{}", csv_field(&row.pair_id), csv_field(&row.sequence), row.distance)?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(ids: &[&str]) -> RankedList {
        RankedList {
            query_id: "q".into(),
            entries: ids
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry { id: id.to_string(), distance: i as f64 })
                .collect(),
        }
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn img(id: &str, role: Role) -> ManifestImage {
        ManifestImage { id: id.into(), path: format!("{id}.jpg"), role }
    }

    fn desc(v: &[f32]) -> Descriptor {
        Descriptor::new(v.to_vec(), "t")
    }

    #[test]
    fn ap_examples() {
        assert!((average_precision(&list(&["A", "X", "B"]), &set(&["A", "B"])).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(average_precision(&list(&["A", "B", "X"]), &set(&["A", "B"])).unwrap(), 1.0);
        assert_eq!(average_precision(&list(&["X", "Y"]), &set(&["A"])).unwrap(), 0.0);
        // a relevant id absent from the ranking still counts in the denominator
        assert_eq!(average_precision(&list(&["A"]), &set(&["A", "Z"])).unwrap(), 0.5);
        assert!(average_precision(&list(&["A"]), &set(&[])).is_err());
    }

    #[test]
    fn rank_orders_by_distance_then_id() {
        let mut index = HashIndex::new(4);
        index.push("b", BinaryHash::from_bits([true, false, false, false])).unwrap();
        index.push("a", BinaryHash::from_bits([false, true, false, false])).unwrap();
        index.push("c", BinaryHash::from_bits([true, true, true, true])).unwrap();
        let q = BinaryHash::zeros(4);
        let r = rank("q", Query::Hash(&q), &SearchIndex::hash(index), Protocol::Standard, &BTreeSet::new()).unwrap();
        assert_eq!(r.ids().collect::<Vec<_>>(), ["a", "b", "c"]);

        let entries = vec![
            RankedEntry { id: "A".into(), distance: 0.1 },
            RankedEntry { id: "B".into(), distance: 0.3 },
            RankedEntry { id: "C".into(), distance: 0.2 },
        ];
        assert_eq!(RankedList::from_unsorted("q", entries).ids().collect::<Vec<_>>(), ["A", "C", "B"]);
    }

    #[test]
    fn rank_protocol_and_junk() {
        let index = SearchIndex::float(vec![
            ("q".into(), desc(&[1.0, 0.0])),
            ("near".into(), desc(&[1.0, 0.1])),
            ("junk".into(), desc(&[1.0, 0.05])),
            ("far".into(), desc(&[0.0, 1.0])),
        ])
        .unwrap();
        let q = desc(&[2.0, 0.0]);
        let junk = set(&["junk"]);
        let standard = rank("q", Query::Float(&q), &index, Protocol::Standard, &junk).unwrap();
        assert_eq!(standard.ids().collect::<Vec<_>>(), ["near", "far"]);
        let ukb = rank("q", Query::Float(&q), &index, Protocol::Ukb, &BTreeSet::new()).unwrap();
        assert_eq!(ukb.entries[0].id, "q");
        assert_eq!(ukb.entries[0].distance, 0.0);
    }

    #[test]
    fn rank_type_mismatch() {
        let index = SearchIndex::float(vec![("a".into(), desc(&[1.0]))]).unwrap();
        let h = BinaryHash::zeros(1);
        assert!(matches!(
            rank("q", Query::Hash(&h), &index, Protocol::Standard, &BTreeSet::new()),
            Err(Error::TypeMismatch(_))
        ));
        let bad = desc(&[1.0, 2.0]);
        assert!(rank("q", Query::Float(&bad), &index, Protocol::Standard, &BTreeSet::new()).is_err());
    }

    fn standard_manifest() -> DatasetManifest {
        let mut gt = BTreeMap::new();
        gt.insert("q1".to_string(), GroundTruth { relevant: vec!["a".into()], junk: vec![] });
        gt.insert("q2".to_string(), GroundTruth { relevant: vec!["b".into()], junk: vec!["a".into()] });
        DatasetManifest {
            protocol: Protocol::Standard,
            images: vec![
                img("q1", Role::Query),
                img("q2", Role::Query),
                img("a", Role::Database),
                img("b", Role::Database),
            ],
            ground_truth: gt,
        }
    }

    #[test]
    fn map_means_per_query_ap() {
        let m = standard_manifest();
        let mut l1 = list(&["a", "b"]);
        l1.query_id = "q1".into();
        let mut l2 = list(&["x", "y"]);
        l2.query_id = "q2".into();
        assert_eq!(mean_average_precision(std::slice::from_ref(&l1), &m).unwrap(), 1.0);
        let scores = evaluate_map(&[l2, l1], &m).unwrap();
        assert_eq!(scores.value, 0.5);
        assert_eq!(scores.per_query["q1"], 1.0);
        assert!(recall4_times4(&[], &m).is_err());
    }

    #[test]
    fn manifest_validation() {
        assert!(standard_manifest().validate().is_ok());

        let mut m = standard_manifest();
        m.ground_truth.get_mut("q1").unwrap().relevant.push("missing".into());
        assert!(m.validate().is_err());

        let mut m = standard_manifest();
        m.ground_truth.get_mut("q2").unwrap().junk = vec!["b".into()];
        assert!(m.validate().is_err());

        let mut m = standard_manifest();
        m.ground_truth.get_mut("q1").unwrap().relevant = vec!["q2".into()];
        assert!(m.validate().is_err(), "q2 is query-only");

        let mut m = standard_manifest();
        m.protocol = Protocol::Ukb;
        assert!(m.validate().is_err());
    }

    #[test]
    fn manifest_json_schema() {
        let text = r#"{
            "protocol": "ukb",
            "images": [
                {"id": "0", "path": "0.jpg", "role": "both"},
                {"id": "1", "path": "1.jpg", "role": "both"},
                {"id": "2", "path": "2.jpg", "role": "both"},
                {"id": "3", "path": "3.jpg", "role": "both"}
            ],
            "ground_truth": {"0": {"relevant": ["0", "1", "2", "3"], "junk": []}}
        }"#;
        let m = DatasetManifest::from_json(text).unwrap();
        assert_eq!(m.protocol, Protocol::Ukb);
        assert_eq!(DatasetManifest::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn recall4x4_examples() {
        let ids = ["0", "1", "2", "3", "4", "5"];
        let mut gt = BTreeMap::new();
        gt.insert(
            "0".to_string(),
            GroundTruth { relevant: vec!["0".into(), "1".into(), "2".into(), "3".into()], junk: vec![] },
        );
        let m = DatasetManifest {
            protocol: Protocol::Ukb,
            images: ids.iter().map(|i| img(i, Role::Both)).collect(),
            ground_truth: gt,
        };
        m.validate().unwrap();
        let mut perfect = list(&["0", "2", "1", "3", "4"]);
        perfect.query_id = "0".into();
        assert_eq!(recall4_times4(&[perfect], &m).unwrap(), 4.0);
        let mut partial = list(&["0", "4", "1", "5", "2"]);
        partial.query_id = "0".into();
        assert_eq!(recall4_times4(&[partial], &m).unwrap(), 2.0);
        assert!(matches!(recall4_times4(&[], &standard_manifest()), Err(Error::ProtocolMismatch(_))));
    }

    #[test]
    fn csv_output() {
        let rows = vec![
            DistanceRow { pair_id: "p1".into(), sequence: "A:scale,M:rot".into(), distance: 0.25 },
            DistanceRow { pair_id: "p1".into(), sequence: "raw".into(), distance: 1.0 },
        ];
        let mut buf = Vec::new();
        write_distance_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "pair_id,sequence,distance\np1,\"A:scale,M:rot\",0.25\np1,raw,1\n");
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("map".parse::<Metric>().unwrap(), Metric::Map);
        assert_eq!("recall4x4".parse::<Metric>().unwrap(), Metric::Recall4x4);
        assert!("ndcg".parse::<Metric>().is_err());
        assert_eq!(serde_json::to_string(&Metric::Recall4x4).unwrap(), "\"recall4x4\"");
    }
}
