//! The subcommands. Each stage writes its artifacts under the output
//! directory and records itself in the manifest, successful or not.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context as _, Result};
use magspec::acceptance::{Session, CRITERIA};
use magspec::chern_rr::{fhs_chern, riemann_roch_count};
use magspec::eigensolver::{lowest_spectrum, EigenSystem};
use magspec::geometry::GeometryField;
use magspec::intervals::{Interval, IntervalUnion};
use magspec::lattice::{assemble_laplacian, build_gauge};
use magspec::model_spectrum::{cluster_bundle, sigma_y, write_weyl_csv};
use magspec::spectral_analysis::{
    cluster_tolerance, counting_vs_rr, detect_clusters, functional_calculus_diag, gaussian_profile_fit, global_weyl,
    local_weyl, projector_kernel_slice,
};
use magspec::symbol_calculus::model_projector_kernel;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, REPORT_VERSION};
use crate::manifest::{RunManifest, StageRecord, StageStatus};
use crate::reports::*;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Model,
    Spectrum,
    Clusters,
    Weyl,
    Kernel,
    Chern,
    Accept,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Model => "model",
            Stage::Spectrum => "spectrum",
            Stage::Clusters => "clusters",
            Stage::Weyl => "weyl",
            Stage::Kernel => "kernel",
            Stage::Chern => "chern",
            Stage::Accept => "accept",
        }
    }
}

#[derive(Default)]
struct StageOutput {
    artifacts: Vec<String>,
    cache_hits: Vec<u32>,
    /// Acceptance failures are reported after the manifest is written.
    failed_criteria: usize,
}

pub struct Runner {
    pub config: RunConfig,
    pub out: PathBuf,
    geom: GeometryField,
    /// Envelope below the cutoff.
    sigma: IntervalUnion,
    manifest: RunManifest,
    spectra: BTreeMap<u32, Arc<EigenSystem>>,
    /// Criteria run by `accept`; all when empty.
    pub criteria: Vec<u8>,
}

impl Runner {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        let (geom, sigma) = config.preflight()?;
        let out = config.output.clone();
        std::fs::create_dir_all(out.join("cache")).map_err(|e| CliError::Io(out.clone(), e))?;
        let manifest = RunManifest::open(&out, &config);
        Ok(Runner {
            config,
            out,
            geom,
            sigma,
            manifest,
            spectra: BTreeMap::new(),
            criteria: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn run(&mut self, stage: Stage) -> Result<(), CliError> {
        let start = Instant::now();
        let result = match stage {
            Stage::Model => self.model(),
            Stage::Spectrum => self.spectrum(),
            Stage::Clusters => self.clusters(),
            Stage::Weyl => self.weyl(),
            Stage::Kernel => self.kernel(),
            Stage::Chern => self.chern(),
            Stage::Accept => self.accept(),
        };
        let seconds = start.elapsed().as_secs_f64();
        let record = match &result {
            Ok(o) => StageRecord {
                status: if o.failed_criteria == 0 { StageStatus::Ok } else { StageStatus::Failed },
                seconds,
                artifacts: o.artifacts.clone(),
                cache_hits: o.cache_hits.clone(),
                error: None,
            },
            Err(e) => StageRecord {
                status: StageStatus::Failed,
                seconds,
                artifacts: Vec::new(),
                cache_hits: Vec::new(),
                error: Some(format!("{e:#}")),
            },
        };
        self.manifest.record(stage.name(), record);
        self.manifest.save(&self.out)?;
        match result {
            Ok(o) if o.failed_criteria > 0 => Err(CliError::AcceptanceFailed {
                failed: o.failed_criteria,
            }),
            Ok(_) => Ok(()),
            Err(source) => Err(CliError::Stage {
                stage: stage.name(),
                source,
            }),
        }
    }

    fn header(&self) -> Header {
        Header {
            config_hash: self.manifest.config_hash.clone(),
            report_version: REPORT_VERSION,
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<String> {
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), value)?;
        Ok(name.to_string())
    }

    fn csv_writer(&self, name: &str) -> Result<csv::Writer<File>> {
        let path = self.out.join(name);
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
    }

    fn sites(&self) -> Result<Vec<usize>> {
        let grid = self.geom.grid;
        if self.config.analysis.sites.is_empty() {
            return Ok(vec![grid.site(&vec![grid.n / 2; grid.dim()])]);
        }
        self.config
            .analysis
            .sites
            .iter()
            .map(|m| {
                if m.len() != grid.dim() || m.iter().any(|&i| i >= grid.n) {
                    bail!("site {m:?} is not a point of the {}-dimensional grid of size {}", grid.dim(), grid.n);
                }
                Ok(grid.site(m))
            })
            .collect()
    }

    /// Configured intervals, or one isolating interval per envelope component.
    fn windows(&self) -> Vec<Interval> {
        if !self.config.intervals.is_empty() {
            return self.config.intervals.clone();
        }
        (0..self.sigma.len())
            .map(|i| self.sigma.isolating_interval(i, self.config.cutoff))
            .collect()
    }

    fn cache_path(&self, k: u32) -> PathBuf {
        self.out.join("cache").join(format!("k{k}.bin"))
    }

    /// Eigen-data for every `k`, read from the cache when the stored hash
    /// matches and computed (in parallel over `k`) otherwise.
    fn ensure_spectra(&mut self) -> Result<Vec<u32>> {
        let hash = self.config.hash();
        let grid = self.geom.grid.n as u32;
        let missing: Vec<u32> = self
            .config
            .ks
            .iter()
            .copied()
            .filter(|k| !self.spectra.contains_key(k))
            .collect();
        let loaded: Vec<(u32, EigenSystem, bool)> = missing
            .par_iter()
            .map(|&k| -> Result<(u32, EigenSystem, bool)> {
                let path = self.cache_path(k);
                if let Some(es) = read_cached(&path, &hash, grid, k) {
                    return Ok((k, es, true));
                }
                let gauge = build_gauge(&self.geom, k).with_context(|| format!("gauge at k = {k}"))?;
                let h = assemble_laplacian(&gauge, &self.geom, self.config.perturbation())
                    .with_context(|| format!("assembly at k = {k}"))?;
                let es = lowest_spectrum(
                    &h,
                    k,
                    self.config.cutoff,
                    self.config.solver.dense_cap,
                    &self.config.solver.lanczos(),
                )
                .with_context(|| format!("eigen-solve at k = {k}"))?;
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                es.write_cache(BufWriter::new(file), &hash, grid, true)?;
                Ok((k, es, false))
            })
            .collect::<Result<_>>()?;
        let mut hits = Vec::new();
        for (k, es, hit) in loaded {
            if hit {
                hits.push(k);
            }
            self.spectra.insert(k, Arc::new(es));
        }
        Ok(hits)
    }

    fn spectra(&self) -> Vec<(u32, Arc<EigenSystem>)> {
        self.config.ks.iter().map(|k| (*k, self.spectra[k].clone())).collect()
    }

    fn model(&mut self) -> Result<StageOutput> {
        let cutoff = self.config.cutoff;
        let mut artifacts = Vec::new();
        self.sigma.write_csv(File::create(self.out.join("sigma.csv"))?)?;
        artifacts.push("sigma.csv".to_string());
        let n = self.config.analysis.weyl_samples.max(2);
        let energies: Vec<f64> = (0..n).map(|i| cutoff * i as f64 / (n - 1) as f64).collect();
        write_weyl_csv(&self.geom, &energies, File::create(self.out.join("weyl_density.csv"))?)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        artifacts.push("weyl_density.csv".to_string());
        let mut spots = Vec::new();
        for site in self.sites()? {
            let frame = self.geom.frame_at(site)?;
            spots.push(SpotReport {
                site,
                coords: self.geom.grid.coords(site),
                intensities: frame.b.clone(),
                potential_eigenvalues: frame.v_eigenvalues.clone(),
                levels: sigma_y(&frame, cutoff),
            });
        }
        let report = ModelReport {
            header: self.header(),
            cutoff,
            gaps: self.sigma.gaps_below(cutoff),
            sigma: self.sigma.clone(),
            spots,
        };
        artifacts.push(self.write_json("model.json", &report)?);
        Ok(StageOutput {
            artifacts,
            ..StageOutput::default()
        })
    }

    fn spectrum(&mut self) -> Result<StageOutput> {
        let cache_hits = self.ensure_spectra()?;
        let mut artifacts = Vec::new();
        let mut runs = Vec::new();
        for (k, es) in self.spectra() {
            let name = format!("eigenvalues_k{k}.csv");
            let mut w = self.csv_writer(&name)?;
            w.write_record(["index", "eigenvalue", "residual"])?;
            for (i, (e, r)) in es.eigenvalues.iter().zip(&es.residuals).enumerate() {
                w.write_record([i.to_string(), format!("{e:.15e}"), format!("{r:.3e}")])?;
            }
            w.flush()?;
            artifacts.push(name);
            let cache_file = format!("cache/k{k}.bin");
            artifacts.push(cache_file.clone());
            runs.push(SpectrumRun {
                k,
                method: es.info.method,
                count: es.len(),
                lowest: es.eigenvalues.first().copied(),
                max_residual: es.residuals.iter().copied().fold(0.0, f64::max),
                orthonormality_defect: es.orthonormality_defect(),
                from_cache: cache_hits.contains(&k),
                cache_file,
            });
        }
        let report = SpectrumReport {
            header: self.header(),
            cutoff: self.config.cutoff,
            runs,
        };
        artifacts.push(self.write_json("spectrum.json", &report)?);
        Ok(StageOutput {
            artifacts,
            cache_hits,
            ..StageOutput::default()
        })
    }

    fn clusters(&mut self) -> Result<StageOutput> {
        let cache_hits = self.ensure_spectra()?;
        let cutoff = self.config.cutoff;
        let max_b = self.geom.max_intensity()?;
        let mut widths: Vec<f64> = self.sigma.gaps_below(cutoff).iter().map(|g| g.width()).collect();
        if let Some(last) = self.sigma.components.last() {
            widths.push(2.0 * (cutoff - last.hi));
        }
        let min_gap = widths.into_iter().fold(f64::INFINITY, f64::min);
        // Chern numbers do not depend on k; compute them once per component.
        let bundles: Vec<Option<(usize, i64)>> = if self.geom.half_dim() == 1 {
            (0..self.sigma.len())
                .map(|i| -> Result<Option<(usize, i64)>> {
                    let window = self.sigma.isolating_interval(i, cutoff);
                    let field = cluster_bundle(&self.geom, window, None)
                        .with_context(|| format!("cluster bundle over [{}, {}]", window.lo, window.hi))?;
                    Ok(Some((field.rank, fhs_chern(&field)?.c1)))
                })
                .collect::<Result<_>>()?
        } else {
            vec![None; self.sigma.len()]
        };
        let degree = if self.geom.half_dim() == 1 { self.geom.degree(0, 1) } else { 0 };
        let mut runs = Vec::new();
        let mut w = self.csv_writer("clusters.csv")?;
        w.write_record(["k", "component_lo", "component_hi", "count", "predicted", "pass", "max_distance"])?;
        for (k, es) in self.spectra() {
            let tol = cluster_tolerance(self.geom.spacing(), k, max_b, min_gap);
            let mut report = detect_clusters(&es.eigenvalues, k, &self.sigma, cutoff, tol)?;
            let predicted: Vec<Option<i64>> = bundles
                .iter()
                .map(|b| b.map(|(rank, c1)| riemann_roch_count(k, degree, rank, c1)))
                .collect();
            for (rec, p) in report.clusters.iter_mut().zip(&predicted) {
                rec.predicted = *p;
            }
            let checks = counting_vs_rr(&report, &predicted);
            for (rec, check) in report.clusters.iter().zip(&checks) {
                w.write_record([
                    k.to_string(),
                    format!("{:.12e}", rec.component.lo),
                    format!("{:.12e}", rec.component.hi),
                    rec.count.to_string(),
                    rec.predicted.map(|p| p.to_string()).unwrap_or_default(),
                    check.pass.to_string(),
                    format!("{:.3e}", rec.max_distance),
                ])?;
            }
            runs.push(ClusterRun {
                k,
                report,
                riemann_roch: checks,
            });
        }
        w.flush()?;
        let report = ClustersReport {
            header: self.header(),
            runs,
        };
        let artifacts = vec!["clusters.csv".to_string(), self.write_json("clusters.json", &report)?];
        Ok(StageOutput {
            artifacts,
            cache_hits,
            ..StageOutput::default()
        })
    }

    fn weyl(&mut self) -> Result<StageOutput> {
        let cache_hits = self.ensure_spectra()?;
        let cutoff = self.config.cutoff;
        let toggles = self.config.analysis.clone();
        let sites = self.sites()?;
        let windows = self.windows();
        let n = self.geom.half_dim();
        let mut lambdas: Vec<f64> = self.sigma.gaps_below(cutoff).iter().map(|g| g.midpoint()).collect();
        lambdas.push(cutoff);
        let mut global = Vec::new();
        let mut local = Vec::new();
        let mut heat_trace = Vec::new();
        for (k, es) in self.spectra() {
            if toggles.global_weyl {
                for &l in &lambdas {
                    global.push(GlobalWeylRow::new(k, &global_weyl(&es.eigenvalues, k, &self.geom, &self.sigma, l)?));
                }
            }
            for &site in &sites {
                if toggles.local_weyl {
                    for &w in &windows {
                        let lw = local_weyl(&es, &self.geom, site, w)
                            .with_context(|| format!("local density at site {site}, k = {k}"))?;
                        local.push(LocalWeylRow {
                            k,
                            site,
                            window: w,
                            value: lw.value,
                            normalized: lw.normalized(k, n),
                            multiplicity: lw.multiplicity,
                        });
                    }
                }
                if toggles.functional_calculus {
                    let result = functional_calculus_diag(&es, &self.geom, &|t| (-t).exp(), cutoff, site)?;
                    heat_trace.push(FunctionalRow {
                        k,
                        support: cutoff,
                        result,
                    });
                }
            }
        }
        let mut artifacts = Vec::new();
        let mut w = self.csv_writer("weyl_global.csv")?;
        w.write_record(["k", "lambda", "count", "predicted", "ratio"])?;
        for r in &global {
            w.write_record([
                r.k.to_string(),
                format!("{:.12e}", r.lambda),
                r.count.to_string(),
                format!("{:.12e}", r.predicted),
                r.ratio.map(|x| format!("{x:.12e}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        artifacts.push("weyl_global.csv".to_string());
        let mut w = self.csv_writer("weyl_local.csv")?;
        w.write_record(["k", "site", "window_lo", "window_hi", "value", "normalized", "multiplicity"])?;
        for r in &local {
            w.write_record([
                r.k.to_string(),
                r.site.to_string(),
                format!("{:.12e}", r.window.lo),
                format!("{:.12e}", r.window.hi),
                format!("{:.12e}", r.value),
                format!("{:.12e}", r.normalized),
                r.multiplicity.to_string(),
            ])?;
        }
        w.flush()?;
        artifacts.push("weyl_local.csv".to_string());
        let report = WeylReport {
            header: self.header(),
            global,
            local,
            heat_trace,
        };
        artifacts.push(self.write_json("weyl.json", &report)?);
        Ok(StageOutput {
            artifacts,
            cache_hits,
            ..StageOutput::default()
        })
    }

    fn kernel(&mut self) -> Result<StageOutput> {
        let cache_hits = self.ensure_spectra()?;
        let site = self.sites()?[0];
        let frame = self.geom.frame_at(site)?;
        let dim = self.geom.grid.dim();
        let n = self.geom.half_dim();
        let mut dirs: Vec<Vec<i64>> = (0..dim)
            .map(|a| (0..dim).map(|b| (a == b) as i64).collect())
            .collect();
        let mut diagonal = vec![0; dim];
        diagonal[0] = 1;
        diagonal[1] = 1;
        dirs.push(diagonal.clone());
        diagonal[1] = -1;
        dirs.push(diagonal);
        let b_max = frame.b.iter().copied().fold(0.0, f64::max);
        let mut artifacts = Vec::new();
        let mut runs = Vec::new();
        for (k, es) in self.spectra() {
            let radius = self.config.analysis.kernel_radius / (k as f64 * b_max).sqrt();
            for (wi, &window) in self.windows().iter().enumerate() {
                let samples = projector_kernel_slice(&es, &self.geom, window, site, &dirs, radius)?;
                let name = format!("kernel_k{k}_w{wi}.csv");
                let mut w = self.csv_writer(&name)?;
                let mut head = vec!["direction".to_string(), "steps".to_string()];
                head.extend((0..dim).map(|a| format!("xi_{a}")));
                head.extend(["norm_sq".to_string(), "value".to_string()]);
                w.write_record(&head)?;
                for s in &samples {
                    let mut row = vec![s.direction.to_string(), s.steps.to_string()];
                    row.extend(s.xi.iter().map(|x| format!("{x:.12e}")));
                    row.extend([format!("{:.12e}", s.norm_sq), format!("{:.12e}", s.value)]);
                    w.write_record(&row)?;
                }
                w.flush()?;
                artifacts.push(name.clone());
                let (fit, fit_error) = match gaussian_profile_fit(&samples, k) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                let origin = vec![0.0; dim];
                let model_peak = (2.0 * PI).powi(n as i32)
                    * model_projector_kernel(&frame, window, &origin, &origin)?.norm();
                runs.push(KernelRun {
                    k,
                    window,
                    site,
                    radius,
                    samples: samples.len(),
                    samples_file: name,
                    peak_normalized: samples[0].value * (2.0 * PI / k as f64).powi(n as i32),
                    model_peak,
                    fit,
                    fit_error,
                });
            }
        }
        let report = KernelReport {
            header: self.header(),
            runs,
        };
        artifacts.push(self.write_json("kernel.json", &report)?);
        Ok(StageOutput {
            artifacts,
            cache_hits,
            ..StageOutput::default()
        })
    }

    fn chern(&mut self) -> Result<StageOutput> {
        if self.geom.half_dim() != 1 {
            bail!("Chern numbers need a two-dimensional torus");
        }
        let degree = self.geom.degree(0, 1);
        let mut artifacts = Vec::new();
        let mut bundles = Vec::new();
        for (i, window) in self.windows().into_iter().enumerate() {
            let field = cluster_bundle(&self.geom, window, None)
                .with_context(|| format!("cluster bundle over [{}, {}]", window.lo, window.hi))?;
            let data = fhs_chern(&field)?;
            let name = format!("chern_w{i}.csv");
            data.write_curvature_csv(File::create(self.out.join(&name))?)?;
            artifacts.push(name.clone());
            bundles.push(ChernRow {
                window,
                rank: field.rank,
                c1: data.c1,
                raw: data.raw,
                curvature_file: name,
                riemann_roch: self
                    .config
                    .ks
                    .iter()
                    .map(|&k| (k, riemann_roch_count(k, degree, field.rank, data.c1)))
                    .collect(),
            });
        }
        let report = ChernReport {
            header: self.header(),
            degree,
            bundles,
        };
        artifacts.push(self.write_json("chern.json", &report)?);
        Ok(StageOutput {
            artifacts,
            ..StageOutput::default()
        })
    }

    fn accept(&mut self) -> Result<StageOutput> {
        let ids: Vec<u8> = if self.criteria.is_empty() {
            CRITERIA.iter().map(|c| c.0).collect()
        } else {
            self.criteria.clone()
        };
        if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
            bail!("unknown criterion {bad}");
        }
        let mut session = Session::new(self.config.acceptance.clone());
        let mut outcomes = Vec::new();
        for id in ids {
            let outcome = session.run(id);
            println!("{}", outcome.line());
            outcomes.push(outcome);
        }
        let failed = outcomes.iter().filter(|o| !o.pass).count();
        let report = AcceptReport {
            header: self.header(),
            passed: outcomes.len() - failed,
            failed,
            outcomes,
        };
        println!("acceptance: {} passed, {} failed", report.passed, report.failed);
        Ok(StageOutput {
            artifacts: vec![self.write_json("accept.json", &report)?],
            failed_criteria: failed,
            ..StageOutput::default()
        })
    }
}

/// Cached eigen-data for `k` if the file exists and was written for the same
/// configuration hash and grid.
fn read_cached(path: &Path, hash: &[u8; 32], grid: u32, k: u32) -> Option<EigenSystem> {
    let file = File::open(path).ok()?;
    let (es, stored, g) = EigenSystem::read_cache(BufReader::new(file)).ok()?;
    (stored == *hash && g == grid && es.k == k && es.vectors.len() == es.len()).then_some(es)
}
