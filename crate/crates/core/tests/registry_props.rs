use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use skillforge::mockenv::{fixture_catalog, synthetic_catalog};
use skillforge::registry::{LoadedContext, Registry, SearchRequest, ToolSchema};

fn words(text: &str) -> Vec<String> {
    let lower: String = text
        .to_lowercase()
        .chars()
        .filter(|c| *c != '\'' && *c != '\u{2019}')
        .collect();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Brute-force TF-IDF cosine over the whole catalog, written against plain
/// hash maps.
fn oracle_scores(catalog: &[ToolSchema], query: &str) -> HashMap<String, f64> {
    let docs: Vec<(String, Vec<String>)> = catalog
        .iter()
        .map(|t| {
            (
                t.name.clone(),
                words(&format!("{} {}", t.name, t.description)),
            )
        })
        .collect();
    let n = docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for (_, ws) in &docs {
        for w in ws.iter().collect::<BTreeSet<_>>() {
            *df.entry(w.as_str()).or_default() += 1.0;
        }
    }
    let idf = |w: &str| ((n + 1.0) / (df.get(w).copied().unwrap_or(0.0) + 1.0)).ln() + 1.0;
    let vector = |ws: &[String]| {
        let mut v: HashMap<String, f64> = HashMap::new();
        for w in ws {
            *v.entry(w.clone()).or_default() += 1.0;
        }
        for (w, x) in v.iter_mut() {
            *x *= idf(w);
        }
        v
    };
    let q = vector(&words(query));
    let qn = q.values().map(|x| x * x).sum::<f64>().sqrt();
    docs.iter()
        .map(|(name, ws)| {
            let d = vector(ws);
            let dn = d.values().map(|x| x * x).sum::<f64>().sqrt();
            let dot: f64 = q
                .iter()
                .map(|(w, x)| x * d.get(w).copied().unwrap_or(0.0))
                .sum();
            let s = if qn == 0.0 || dn == 0.0 {
                0.0
            } else {
                dot / (qn * dn)
            };
            (name.clone(), s.clamp(0.0, 1.0))
        })
        .collect()
}

fn vocabulary(catalog: &[ToolSchema]) -> Vec<String> {
    let mut v: BTreeSet<String> = catalog
        .iter()
        .flat_map(|t| words(&format!("{} {}", t.name, t.description)))
        .collect();
    v.extend(["fetch", "xyzzy", "invoice"].map(String::from));
    v.into_iter().collect()
}

fn query(vocab: Vec<String>) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vocab), 1..5).prop_map(|ws| ws.join(" "))
}

fn catalogs() -> [Vec<ToolSchema>; 2] {
    [fixture_catalog(), synthetic_catalog()]
}

const EPS: f64 = 1e-9;

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn top_k_is_sound_against_brute_force(
        (which, q, k) in (0usize..2).prop_flat_map(|i| (Just(i), query(vocabulary(&catalogs()[i])), 1usize..8))
    ) {
        let catalog = catalogs()[which].clone();
        let registry = Registry::index_catalog(catalog.clone()).unwrap();
        let response = registry.search_functions(&[SearchRequest::new(q.clone()).top(k)]).unwrap();
        let results = &response[0].results;
        let oracle = oracle_scores(&catalog, &q);
        prop_assert!(results.len() <= k);
        let returned: BTreeSet<&str> = results.iter().map(|r| r.name.as_str()).collect();
        for r in results {
            prop_assert!((r.score - oracle[&r.name]).abs() < EPS, "{} {} vs {}", r.name, r.score, oracle[&r.name]);
        }
        let floor = results.iter().map(|r| oracle[&r.name]).fold(f64::INFINITY, f64::min);
        for (name, s) in &oracle {
            if !returned.contains(name.as_str()) {
                if results.len() == k {
                    prop_assert!(*s <= floor + EPS, "{name} ({s}) beats the returned floor {floor}");
                } else {
                    prop_assert!(*s < EPS, "{name} scored {s} but was left out of a short list");
                }
            }
        }
    }

    #[test]
    fn results_do_not_depend_on_ingestion_order(
        shuffled in Just(synthetic_catalog()).prop_shuffle(),
        q in query(vocabulary(&synthetic_catalog())),
    ) {
        let a = Registry::index_catalog(synthetic_catalog()).unwrap();
        let b = Registry::index_catalog(shuffled).unwrap();
        let requests = [SearchRequest::new(q.clone()), SearchRequest::new(q).in_app("outlook").top(7)];
        let ra = serde_json::to_string(&a.search_functions(&requests).unwrap()).unwrap();
        let rb = serde_json::to_string(&b.search_functions(&requests).unwrap()).unwrap();
        prop_assert_eq!(ra, rb);
    }

    #[test]
    fn app_scope_filters_results(
        app in prop::sample::select(Registry::index_catalog(synthetic_catalog()).unwrap().list_apps()),
        q in query(vocabulary(&synthetic_catalog())),
    ) {
        let registry = Registry::index_catalog(synthetic_catalog()).unwrap();
        let response = registry.search_functions(&[SearchRequest::new(q).in_app(app.clone()).top(10)]).unwrap();
        let prefix = format!("{app}__");
        for r in &response[0].results {
            prop_assert!(r.name.starts_with(&prefix));
        }
    }

    #[test]
    fn context_bytes_match_the_loaded_schemas(
        batches in prop::collection::vec(
            prop::collection::vec(prop::sample::select(synthetic_catalog().into_iter().map(|t| t.name).collect::<Vec<_>>()), 0..6),
            1..6,
        )
    ) {
        let registry = Registry::index_catalog(synthetic_catalog()).unwrap();
        let mut ctx = LoadedContext::with_budget(usize::MAX);
        for names in &batches {
            let next = registry.load_functions(&ctx, names).unwrap();
            prop_assert_eq!(&registry.load_functions(&next, names).unwrap(), &next);
            ctx = next;
        }
        let loaded: BTreeSet<&String> = batches.iter().flatten().collect();
        let expected: usize = loaded
            .iter()
            .map(|n| serde_json::to_vec(registry.schema(n).unwrap()).unwrap().len())
            .sum();
        prop_assert_eq!(ctx.schema_bytes(), expected);
        prop_assert_eq!(ctx.len(), loaded.len());
    }
}
