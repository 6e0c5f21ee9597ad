//! Dictionary matching.

use hdgmm::io;
use hdgmm::matching::{
    query_noise_variance, svd_compress, svd_match_all, FullMatcher, HdgmmMatcher, MatchResult, RouteDistance,
};
use serde_json::json;

use crate::data::load_dict;
use crate::error::{CliError, CliResult};
use crate::output::{read_results_csv, write_results_csv, Distance, MatchMethod, Run};
use crate::MatchArgs;

pub fn matching(run: &mut Run, a: MatchArgs) -> CliResult<()> {
    let s = &mut run.settings;
    let dict_path = s.path("dict", a.dict)?;
    let queries_path = s.path("queries", a.queries)?;
    let method = s.get("method", a.method, MatchMethod::Full)?;
    let out = s.path_opt("out", a.out)?;
    let reference = s.path_opt("reference", a.reference)?;
    let (compressed, d, top_n, distance, query_snr) = match method {
        MatchMethod::Full => (None, None, None, None, None),
        MatchMethod::Svd => (None, Some(s.get("d", a.d, 10)?), None, None, None),
        MatchMethod::Hdgmm => (
            Some(s.path("compressed", a.compressed)?),
            None,
            Some(s.get("top-n", a.top_n, 1)?),
            Some(s.get("distance", a.distance, Distance::Coords)?),
            s.get_opt("query-snr", a.query_snr)?,
        ),
    };
    run.echo_config()?;

    let dict = load_dict(&dict_path)?;
    let queries = load_dict(&queries_path)?.into_parts().0;
    let results: Vec<MatchResult> = match method {
        MatchMethod::Full => FullMatcher::new(&dict)?.best_all(&queries)?,
        MatchMethod::Svd => {
            let sc = svd_compress(&dict, d.unwrap_or(10))?;
            svd_match_all(&sc, dict.labels(), &queries)?
        }
        MatchMethod::Hdgmm => {
            let path = compressed.expect("resolved above");
            let cds = io::read_compressed(&path).map_err(CliError::at(&path))?;
            let route = match distance.unwrap_or(Distance::Coords) {
                Distance::Coords => RouteDistance::Coordinates,
                Distance::Recon => RouteDistance::Reconstruction,
            };
            let variance = query_snr.map_or(0.0, |snr| query_noise_variance(snr, cds.model().m()));
            let matcher = HdgmmMatcher::new(&cds, dict.labels())?.with_distance(route).with_query_noise(variance)?;
            matcher.best_all(&queries, top_n.unwrap_or(1))?
        }
    };
    if let Some(p) = &out {
        write_results_csv(p, dict.label_names(), &results)?;
    }
    println!("queries {}", results.len());
    let mut summary = json!({ "method": method.to_string(), "queries": results.len() });
    if let Some(p) = &reference {
        let r = read_results_csv(p)?;
        if r.index.len() != results.len() || r.label_names != dict.label_names() {
            return Err(CliError::Usage(format!(
                "reference {} has {} rows and labels [{}]; expected {} rows and [{}]",
                p.display(),
                r.index.len(),
                r.label_names.join(","),
                results.len(),
                dict.label_names().join(",")
            )));
        }
        let q = results.len().max(1) as f64;
        let agree = results.iter().zip(&r.index).filter(|(x, i)| x.index == **i).count() as f64 / q;
        println!("agreement {agree}");
        let mut maes = serde_json::Map::new();
        for (j, name) in r.label_names.iter().enumerate() {
            let mae = results.iter().zip(&r.params).map(|(x, p)| (x.params[j] - p[j]).abs()).sum::<f64>() / q;
            println!("mae_{name} {mae}");
            maes.insert(name.clone(), json!(mae));
        }
        summary["agreement"] = json!(agree);
        summary["param_mae"] = serde_json::Value::Object(maes);
    }
    summary["wall_time_s"] = json!(run.elapsed());
    run.emit("result", summary)
}
