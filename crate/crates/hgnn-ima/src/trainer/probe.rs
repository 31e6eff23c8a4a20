//! Empirical complexity probe: per-iteration forward+backward time across
//! synthetic graphs of varying edge count and modality count.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::synth::{generate_synthetic_mmhn, SyntheticSpec};
use crate::error::Result;
use crate::model::{forward_full, ForwardOptions, GraphPrep, Mode, ParameterSet};
use crate::trainer::RunConfig;

#[derive(Clone, Debug)]
pub struct ProbePoint {
    pub nodes: usize,
    pub edges: usize,
    pub modalities: usize,
    pub secs_per_iter: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ProbeReport {
    pub points: Vec<ProbePoint>,
}

impl ProbeReport {
    /// Least-squares slope of log(time) vs log(edges) across points sharing
    /// the dominant modality count. Needs two or more distinct edge counts.
    pub fn edge_exponent(&self) -> Option<f64> {
        let m = self.points.iter().map(|p| p.modalities).min()?;
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.modalities == m && p.edges > 0)
            .map(|p| ((p.edges as f64).ln(), p.secs_per_iter.ln()))
            .collect();
        if pts.len() < 2 || pts.iter().all(|(x, _)| *x == pts[0].0) {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|(x, _)| x).sum();
        let sy: f64 = pts.iter().map(|(_, y)| y).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    }

    /// Time ratio when the modality count rises from `from` to `to`, taken
    /// at the pair of points with the closest matching edge counts.
    pub fn modality_ratio(&self, from: usize, to: usize) -> Option<f64> {
        let bigger = self.points.iter().find(|p| p.modalities == to)?;
        let base = self
            .points
            .iter()
            .filter(|p| p.modalities == from)
            .min_by_key(|p| p.edges.abs_diff(bigger.edges))?;
        Some(bigger.secs_per_iter / base.secs_per_iter)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("nodes\tedges\tmodalities\tsecs_per_iter\n");
        for p in &self.points {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.6}\n",
                p.nodes, p.edges, p.modalities, p.secs_per_iter
            ));
        }
        if let Some(e) = self.edge_exponent() {
            out.push_str(&format!("# edge exponent: {e:.3}\n"));
        }
        if let Some(r) = self.modality_ratio(2, 3) {
            out.push_str(&format!("# modality ratio 2->3: {r:.3}\n"));
        }
        out
    }
}

/// Measures the median per-iteration time of one forward+backward pass on
/// each generated graph.
pub fn complexity_probe(
    specs: &[(SyntheticSpec, u64)],
    run: &RunConfig,
    iters: usize,
) -> Result<ProbeReport> {
    let cfg = run.model_config();
    let mut report = ProbeReport::default();
    for (spec, seed) in specs {
        let ds = generate_synthetic_mmhn(spec, *seed)?;
        let prep = GraphPrep::new(&ds, &cfg)?;
        let params = ParameterSet::init(
            &ds.schema,
            ds.graph.node_type_names(),
            ds.graph.edge_type_names(),
            &cfg,
            *seed,
        )?;
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        let mut times = Vec::with_capacity(iters);
        // One warmup iteration, then timed ones.
        for i in 0..=iters.max(1) {
            let started = Instant::now();
            let out = forward_full(
                &prep,
                &ds.features,
                &params,
                &cfg,
                ForwardOptions {
                    mode: Mode::Train,
                    rng: Some(&mut rng),
                    loss_ids: &ds.split.train_ids,
                    labels: &ds.split.labels,
                    capture_attention: false,
                },
            )?;
            let _ = out.backward(&params)?;
            if i > 0 {
                times.push(started.elapsed().as_secs_f64());
            }
        }
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = times[times.len() / 2];
        report.points.push(ProbePoint {
            nodes: ds.graph.node_count(),
            edges: ds.graph.edges().len(),
            modalities: ds.schema.modality_names.len(),
            secs_per_iter: median,
        });
    }
    Ok(report)
}

/// The canonical probe suite: edge scaling at two modalities plus a
/// three-modality point at the middle size.
pub fn standard_probe_specs(scale: f64) -> Vec<(SyntheticSpec, u64)> {
    let base = |degree: f64, extra: usize| {
        let mut s = SyntheticSpec::sized(
            (200.0 * scale) as usize,
            (100.0 * scale) as usize,
            degree,
        );
        s.extra_modalities = extra;
        s
    };
    vec![
        (base(4.0, 0), 1),
        (base(8.0, 0), 1),
        (base(16.0, 0), 1),
        (base(8.0, 1), 1),
    ]
}
