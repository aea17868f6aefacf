//! Experiment registry: each key builds one results table.

use std::path::{Path, PathBuf};

use qbypass::data::{data_dir, load_dataset, Dataset, PartitionMode};
use qbypass::models::{ArchitectureSpec, HybridModel};
use qbypass::privacy::{federated_privacy, privacy_suite, PrivacyRow, SeedPrivacy};
use qbypass::seeds;
use qbypass::train::{cross_validate, mean_std, run_federated, DpConfig, FedConfig, FederatedSetup, TrainConfig};
use qbypass::Error;

use crate::config::ExperimentConfig;
use crate::table::{Cell, Column, ColumnKind, ResultsTable};

pub const EXPERIMENTS: [&str; 7] = ["table1", "table2", "table3", "table4", "table5", "table6", "ablation"];

const ALL_DATASETS: [&str; 4] = ["wine", "breast_cancer", "fashion_mnist", "covtype"];

/// A dataset loaded and ready for model construction.
pub struct Loaded {
    pub name: String,
    pub raw: Dataset,
    /// Feature width after preprocessing.
    pub dim: usize,
}

pub struct Runner<'a> {
    pub cfg: &'a ExperimentConfig,
    pub data_root: PathBuf,
    notes: Vec<String>,
    params: Vec<(String, usize)>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        let fallback = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let data_root = cfg.data_dir.clone().unwrap_or_else(|| data_dir(fallback));
        Self { cfg, data_root, notes: Vec::new(), params: Vec::new() }
    }

    pub fn load(&self, name: &str) -> qbypass::Result<Loaded> {
        let dc = self.cfg.dataset_config(name)?;
        let raw = load_dataset(&dc, &self.data_root)?;
        let dim = dc.pca_dim.unwrap_or(raw.dim());
        Ok(Loaded { name: name.to_string(), raw, dim })
    }

    /// Datasets named in the config, or `defaults` restricted to those whose
    /// files are present.
    fn datasets(&mut self, defaults: &[&str]) -> qbypass::Result<Vec<Loaded>> {
        if !self.cfg.datasets.is_empty() {
            return self.cfg.datasets.iter().map(|d| self.load(d)).collect();
        }
        let mut out = Vec::new();
        for d in defaults {
            match self.load(d) {
                Ok(l) => out.push(l),
                Err(Error::Data(msg)) if msg.contains("not found") => self.notes.push(format!("skipped {d}: {msg}")),
                Err(e) => return Err(e),
            }
        }
        if out.is_empty() {
            return Err(Error::Data(format!("no datasets available under {}", self.data_root.display())));
        }
        Ok(out)
    }

    fn models(&self, defaults: &[&str]) -> Vec<String> {
        if self.cfg.models.is_empty() {
            defaults.iter().map(|s| s.to_string()).collect()
        } else {
            self.cfg.models.clone()
        }
    }

    pub fn arch(&mut self, model: &str, ds: &Loaded) -> qbypass::Result<ArchitectureSpec> {
        let spec = ArchitectureSpec::named(model, ds.dim, ds.raw.n_classes(), self.cfg.head_widths(&ds.name))?;
        self.note_params(&format!("{}/{model}", ds.name), spec.param_count());
        Ok(spec)
    }

    fn note_params(&mut self, key: &str, count: usize) {
        if !self.params.iter().any(|(k, _)| k == key) {
            self.params.push((key.to_string(), count));
        }
    }

    /// Mean k-fold accuracy per seed.
    pub fn cv_accuracies(&self, spec: &ArchitectureSpec, ds: &Loaded) -> qbypass::Result<Vec<f64>> {
        self.cfg
            .seeds
            .iter()
            .map(|&seed| {
                let folds = cross_validate(spec, &ds.raw, self.cfg.folds, &TrainConfig { seed, ..self.cfg.train.clone() })?;
                Ok(folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64)
            })
            .collect()
    }

    /// Final global accuracy and rounds-to-90%-of-peak per seed, plus the
    /// communication total (identical across seeds).
    pub fn fed_runs(&self, spec: &ArchitectureSpec, ds: &Loaded, fed: &FedConfig) -> qbypass::Result<(Vec<f64>, Vec<f64>, f64)> {
        let mut acc = Vec::new();
        let mut rounds = Vec::new();
        let mut mb = 0.0;
        for &seed in &self.cfg.seeds {
            let setup = FederatedSetup::new(&ds.raw, fed, seed)?;
            let out = run_federated(spec, &setup, fed, &TrainConfig { seed, ..self.cfg.train.clone() })?;
            acc.push(out.log.final_accuracy());
            rounds.push(out.log.rounds_to_fraction_of_peak(0.9).unwrap_or(fed.rounds) as f64);
            mb = out.ledger.total_mb();
        }
        Ok((acc, rounds, mb))
    }

    fn stat_pct(values: &[f64]) -> Cell {
        let (m, s) = mean_std(values);
        Cell::percent_stat(m, s, values.len())
    }

    fn stat_real(values: &[f64]) -> Cell {
        let (m, s) = mean_std(values);
        Cell::real_stat(m, s, values.len())
    }

    fn finish(&mut self, mut table: ResultsTable) -> ResultsTable {
        table.provenance.seeds = self.cfg.seeds.clone();
        table.provenance.param_counts = std::mem::take(&mut self.params);
        table.provenance.notes = std::mem::take(&mut self.notes);
        table
    }

    fn iid(&self) -> FedConfig {
        FedConfig { partition: PartitionMode::Iid, dp: None, ..self.cfg.fed.clone() }
    }

    fn non_iid(&self) -> FedConfig {
        FedConfig { partition: self.cfg.non_iid, dp: None, ..self.cfg.fed.clone() }
    }

    pub fn run(&mut self) -> qbypass::Result<ResultsTable> {
        match self.cfg.experiment.as_str() {
            "table1" => self.table1(),
            "table2" => self.table2(),
            "table3" => self.table3(),
            "table4" => self.table4(),
            "table5" => self.table5(),
            "table6" => self.table6(),
            "ablation" => self.ablation(),
            other => Err(Error::Config(format!("unknown experiment '{other}'"))),
        }
    }

    /// Classical vs pure quantum, centralized k-fold and federated.
    fn table1(&mut self) -> qbypass::Result<ResultsTable> {
        let datasets = self.datasets(&ALL_DATASETS)?;
        let mut columns = vec![Column::new("method", ColumnKind::Text)];
        for d in &datasets {
            columns.push(Column::new(&d.name, ColumnKind::PercentStat));
            columns.push(Column::new(&format!("{}_params", d.name), ColumnKind::Integer));
        }
        let mut table = ResultsTable::new("Centralized and federated accuracy", columns);
        let rows: [(&str, &str, Option<bool>); 6] = [
            ("Classical Centralized", "classical", None),
            ("Quantum Centralized", "pure_quantum", None),
            ("Classical FL (IID)", "classical", Some(true)),
            ("Classical FL (Non-IID)", "classical", Some(false)),
            ("Quantum FL (IID)", "pure_quantum", Some(true)),
            ("Quantum FL (Non-IID)", "pure_quantum", Some(false)),
        ];
        for (label, model, fed) in rows {
            let mut row = vec![Cell::text(label)];
            for d in &datasets {
                let spec = self.arch(model, d)?;
                let acc = match fed {
                    None => self.cv_accuracies(&spec, d)?,
                    Some(iid) => self.fed_runs(&spec, d, &if iid { self.iid() } else { self.non_iid() })?.0,
                };
                row.push(Self::stat_pct(&acc));
                row.push(Cell::Integer(spec.param_count() as i64));
            }
            table.push(row).expect("row width");
        }
        Ok(self.finish(table))
    }

    /// All model rows on one dataset.
    fn table2(&mut self) -> qbypass::Result<ResultsTable> {
        let ds = self.datasets(&["wine"])?.remove(0);
        let models = self.models(&["classical", "pure_quantum", "original_hybrid", "residual_6q", "residual_multi", "residual_8q", "residual_deep"]);
        let mut table = ResultsTable::new(
            &format!("Performance across models ({})", ds.name),
            vec![
                Column::new("model", ColumnKind::Text),
                Column::new("accuracy", ColumnKind::PercentStat),
                Column::new("parameters", ColumnKind::Integer),
            ],
        );
        for m in models {
            let spec = self.arch(&m, &ds)?;
            let acc = self.cv_accuracies(&spec, &ds)?;
            table.push(vec![Cell::text(spec.label()), Self::stat_pct(&acc), Cell::Integer(spec.param_count() as i64)]).expect("row width");
        }
        Ok(self.finish(table))
    }

    /// Model rows across datasets.
    fn table3(&mut self) -> qbypass::Result<ResultsTable> {
        let datasets = self.datasets(&ALL_DATASETS)?;
        let models = self.models(&["classical", "pure_quantum", "original_hybrid", "residual_6q", "residual_deep"]);
        let mut columns = vec![Column::new("dataset", ColumnKind::Text)];
        for m in &models {
            columns.push(Column::new(m, ColumnKind::PercentStat));
            columns.push(Column::new(&format!("{m}_params"), ColumnKind::Integer));
        }
        let mut table = ResultsTable::new("Performance across models and datasets", columns);
        for d in &datasets {
            let mut row = vec![Cell::text(&d.name)];
            for m in &models {
                let spec = self.arch(m, d)?;
                row.push(Self::stat_pct(&self.cv_accuracies(&spec, d)?));
                row.push(Cell::Integer(spec.param_count() as i64));
            }
            table.push(row).expect("row width");
        }
        Ok(self.finish(table))
    }

    fn privacy_cells(row: &[SeedPrivacy]) -> Vec<Cell> {
        let col = |f: &dyn Fn(&SeedPrivacy) -> Option<f64>| -> Cell {
            let v: Option<Vec<f64>> = row.iter().map(f).collect();
            v.map_or(Cell::Missing, |v| Self::stat_real(&v))
        };
        vec![
            Self::stat_pct(&row.iter().map(|s| s.accuracy).collect::<Vec<_>>()),
            col(&|s| Some(s.threshold_auc)),
            col(&|s| s.recon_mse),
            col(&|s| s.psnr),
        ]
    }

    /// Federated privacy on one dataset: classical, quantum and DP-FL rows.
    fn table4(&mut self) -> qbypass::Result<ResultsTable> {
        let ds = self.datasets(&["wine"])?.remove(0);
        let pcfg = self.cfg.privacy_config();
        let mut table = ResultsTable::new(
            &format!("Federated privacy evaluation ({})", ds.name),
            vec![
                Column::new("model", ColumnKind::Text),
                Column::new("test_accuracy", ColumnKind::PercentStat),
                Column::new("mia_auc", ColumnKind::RealStat),
                Column::new("recon_mse", ColumnKind::RealStat),
                Column::new("psnr_db", ColumnKind::RealStat),
                Column::new("parameters", ColumnKind::Integer),
            ],
        );
        let mut rows: Vec<(String, &str, Option<DpConfig>)> =
            vec![("Classical".into(), "classical", None), ("Quantum (a)".into(), "pure_quantum", None)];
        for &eps in &self.cfg.privacy.dp_epsilons {
            let dp = DpConfig { epsilon: eps, ..self.cfg.fed.dp.unwrap_or(DpConfig::new(eps)) };
            rows.push((format!("DP (epsilon={eps})"), "classical", Some(dp)));
        }
        for (label, model, dp) in rows {
            let spec = self.arch(model, &ds)?;
            let fed = FedConfig { dp, ..self.iid() };
            let per_seed: Vec<SeedPrivacy> =
                self.cfg.seeds.iter().map(|&s| federated_privacy(&spec, &ds.raw, &fed, &pcfg, s)).collect::<qbypass::Result<_>>()?;
            let mut row = vec![Cell::text(label)];
            row.extend(Self::privacy_cells(&per_seed));
            row.push(Cell::Integer(spec.param_count() as i64));
            table.push(row).expect("row width");
        }
        Ok(self.finish(table))
    }

    /// Membership-inference AUC grid, threshold and shadow attacks.
    fn table5(&mut self) -> qbypass::Result<ResultsTable> {
        let datasets = self.datasets(&ALL_DATASETS)?;
        let models = self.models(&["classical", "pure_quantum", "original_hybrid", "residual_6q", "residual_deep"]);
        let mut columns = vec![Column::new("model", ColumnKind::Text), Column::new("attack", ColumnKind::Text)];
        for d in &datasets {
            columns.push(Column::new(&d.name, ColumnKind::RealStat));
        }
        let mut table = ResultsTable::new("MIA AUC across models and datasets", columns);
        let pcfg = qbypass::privacy::PrivacyConfig { inversion_samples: 0, ..self.cfg.privacy_config() };
        let mut grid: Vec<(String, Vec<PrivacyRow>)> = Vec::new();
        for m in &models {
            let mut cells = Vec::new();
            for d in &datasets {
                let spec = self.arch(m, d)?;
                cells.push(privacy_suite(&spec, &d.raw, &self.cfg.seeds, &pcfg)?);
            }
            let label = ArchitectureSpec::named(m, datasets[0].dim, datasets[0].raw.n_classes(), self.cfg.head_widths(&datasets[0].name))?.label();
            grid.push((label, cells));
        }
        for (label, cells) in &grid {
            let mut row = vec![Cell::text(label), Cell::text("threshold")];
            row.extend(cells.iter().map(|r| {
                let (m, s) = r.threshold_auc();
                Cell::real_stat(m, s, r.per_seed.len())
            }));
            table.push(row).expect("row width");
            if pcfg.run_shadow {
                let mut row = vec![Cell::text(label), Cell::text("shadow")];
                row.extend(cells.iter().map(|r| r.shadow_auc().map_or(Cell::Missing, |(m, s)| Cell::real_stat(m, s, r.per_seed.len()))));
                table.push(row).expect("row width");
            }
        }
        Ok(self.finish(table))
    }

    /// Federated accuracy and communication, IID vs non-IID.
    fn table6(&mut self) -> qbypass::Result<ResultsTable> {
        let datasets = self.datasets(&ALL_DATASETS)?;
        let models = self.models(&["classical", "residual_6q"]);
        let mut table = ResultsTable::new(
            &format!("Federated learning ({} clients, {} rounds)", self.cfg.fed.clients, self.cfg.fed.rounds),
            vec![
                Column::new("dataset", ColumnKind::Text),
                Column::new("model", ColumnKind::Text),
                Column::new("distribution", ColumnKind::Text),
                Column::new("accuracy", ColumnKind::PercentStat),
                Column::new("comm_mb", ColumnKind::Real),
                Column::new("rounds_to_90pct_peak", ColumnKind::RealStat),
                Column::new("parameters", ColumnKind::Integer),
            ],
        );
        for d in &datasets {
            for m in &models {
                let spec = self.arch(m, d)?;
                for (dist, fed) in [("IID", self.iid()), ("Non-IID", self.non_iid())] {
                    let (acc, rounds, mb) = self.fed_runs(&spec, d, &fed)?;
                    table
                        .push(vec![
                            Cell::text(&d.name),
                            Cell::text(spec.label()),
                            Cell::text(dist),
                            Self::stat_pct(&acc),
                            Cell::real(mb),
                            Self::stat_real(&rounds),
                            Cell::Integer(spec.param_count() as i64),
                        ])
                        .expect("row width");
                }
            }
        }
        Ok(self.finish(table))
    }

    /// Residual model against the same model with the bypass removed.
    fn ablation(&mut self) -> qbypass::Result<ResultsTable> {
        let ds = self.datasets(&["wine"])?.remove(0);
        let mut table = ResultsTable::new(
            &format!("Bypass ablation ({})", ds.name),
            vec![
                Column::new("model", ColumnKind::Text),
                Column::new("accuracy", ColumnKind::PercentStat),
                Column::new("parameters", ColumnKind::Integer),
            ],
        );
        let residual = self.arch("residual_6q", &ds)?;
        let ablated = HybridModel::build(&residual, &mut seeds::rng(0, &[]))?.ablate_bypass(&mut seeds::rng(0, &[]))?.spec().clone();
        self.note_params(&format!("{}/residual_6q_no_bypass", ds.name), ablated.param_count());
        let original = self.arch("original_hybrid", &ds)?;
        for (label, spec) in
            [(residual.label(), &residual), ("Residual Hybrid 6q, bypass removed".to_string(), &ablated), (original.label(), &original)]
        {
            let acc = self.cv_accuracies(spec, &ds)?;
            table.push(vec![Cell::text(label), Self::stat_pct(&acc), Cell::Integer(spec.param_count() as i64)]).expect("row width");
        }
        Ok(self.finish(table))
    }
}
