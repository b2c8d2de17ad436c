//! Sweep expansion, per-trial simulation and per-variant aggregation.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::channel::{generate_channel, mean_delay, noise_variance, receive, LtvChannel, UserLink};
use crate::error::{Result, SyncError};
use crate::frame::{build_allocation, otfs_modulate, AllocationPair, FrameParams, Scheme};
use crate::harness::aggregate;
use crate::harness::config::{CfoDraw, CfoVariant, ExperimentConfig, TimingDraw, TimingVariant};
use crate::numerics::{ComplexMatrix, LeastSquares, C64};
use crate::pilots::{embed_pilots, layout_mu_pcp, layout_su_pcp, PilotLayout, PilotPower, Structure};
use crate::sync_freq::{
    absorbed_cfo_baseline, build_g, cpf_basis, estimate_channel, extract_pilot_region, ml_cfo_estimate, nmse,
    pilot_signal, true_compound_channel, BemBasis,
};
use crate::sync_time::{
    detect_first_major_peak, detect_highest_peak, threshold_range_normalized, user_timing_metric, wrapped_error,
};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "OTFS_SYNC_THREADS";

/// One row of output: a sweep point under one estimator variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub experiment_id: String,
    pub variant: String,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub scheme: Scheme,
    pub pilot_structure: Structure,
    pub snr_db: Option<f64>,
    pub kappa_max: f64,
    /// Fixed CFO of the point, if the config sweeps CFO.
    pub cfo_point: Option<f64>,
    pub trials: usize,
    /// Mean of `|θ̂ − θ|` over trials and users.
    pub to_err_mean: f64,
    /// Variance of the signed error `θ̂ − θ`.
    pub to_err_var: f64,
    /// Mean of the signed error.
    pub to_err_bias: f64,
    pub cfo_mse: Option<f64>,
    pub nmse: Option<f64>,
    pub nmse_db: Option<f64>,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// Coordinates of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub users: usize,
    pub kappa_max: f64,
    pub snr_db: Option<f64>,
    pub cfo: Option<f64>,
}

/// Expands the config into points ordered by users, κ_max, SNR, then CFO.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &users in &cfg.users {
        for &kappa_max in &cfg.kappa_max {
            for &snr_db in &cfg.snr_db {
                for cfo in cfg.cfo_points() {
                    out.push(SweepPoint { index: out.len(), users, kappa_max, snr_db, cfo });
                }
            }
        }
    }
    out
}

/// RNG of one trial: the master seed with stream `(point << 32) | trial`.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 32) | trial as u64);
    rng
}

/// State shared by all trials of a point.
pub struct PreparedPoint {
    pub point: SweepPoint,
    pub params: FrameParams,
    pub layout: PilotLayout,
    pub beta: usize,
    pub allocations: Vec<AllocationPair>,
    pub thresholds: Vec<Option<f64>>,
    pilots: Vec<Vec<C64>>,
    estimators: Vec<OnceLock<std::result::Result<Arc<(LeastSquares, BemBasis)>, SyncError>>>,
}

fn allocation_sizes(scheme: Scheme, m: usize, n: usize, q: usize) -> Result<(usize, usize)> {
    match scheme {
        Scheme::GbbmaDelay => Ok((m, n / q)),
        Scheme::GbbmaDoppler => Ok((m / q, n)),
        Scheme::Itfma | Scheme::Iddma => Ok((m / q, n / q)),
        Scheme::Genma => Err(SyncError::Config("the harness needs a structured allocation scheme".into())),
    }
}

impl PreparedPoint {
    pub fn new(cfg: &ExperimentConfig, point: SweepPoint) -> Result<Self> {
        let params = FrameParams::new(cfg.m, cfg.n, point.users, cfg.delta_tau, cfg.l_cp())?;
        let beta = cfg.beta_for(point.kappa_max);
        let half_len = cfg.half_len_for(point.kappa_max);
        let power = PilotPower { root: cfg.pilot.root, sigma_p2: cfg.pilot.sigma_p2 };
        let layout = match cfg.pilot.structure {
            Structure::SuPcp => layout_su_pcp(&params, half_len, cfg.pilot.guard, point.kappa_max, power)?,
            Structure::MuPcp => {
                layout_mu_pcp(&params, half_len, cfg.pilot.alpha, point.kappa_max, cfg.pilot.anchor, power)?
            }
        };
        if half_len < cfg.l_ch {
            return Err(SyncError::Config(format!("pilot length {half_len} shorter than L_ch = {}", cfg.l_ch)));
        }
        let (m_q, n_q) = allocation_sizes(cfg.scheme, cfg.m, cfg.n, point.users)?;
        let allocations = (0..point.users)
            .map(|q| build_allocation(cfg.scheme, q, &params, m_q, n_q))
            .collect::<Result<Vec<_>>>()?;
        let default_threshold = threshold_range_normalized(half_len, 1.0, cfg.pilot.sigma_p2.sqrt())?.midpoint();
        let thresholds = cfg
            .variants
            .timing
            .iter()
            .map(|v| match v {
                TimingVariant::FirstPeak { threshold } => Some(threshold.unwrap_or(default_threshold)),
                _ => None,
            })
            .collect();
        let pilots = (0..point.users).map(|q| pilot_signal(&layout, q, &params)).collect::<Result<Vec<_>>>()?;
        let estimators = (0..point.users * cfg.m).map(|_| OnceLock::new()).collect();
        Ok(Self {
            point,
            params,
            layout,
            beta,
            allocations,
            thresholds,
            pilots,
            estimators,
        })
    }

    /// QR of `G` and the basis for user `q` at offset `θ̂`; built once and
    /// shared across trials since neither depends on the random draw.
    fn estimator(&self, q: usize, theta_hat: usize, obs: &crate::sync_freq::PilotRegionObservation) -> Result<Arc<(LeastSquares, BemBasis)>> {
        self.estimators[q * self.params.m + theta_hat]
            .get_or_init(|| {
                let basis = cpf_basis(self.params.n_s(), &obs.kappas, self.beta)?;
                let g = build_g(obs, &self.pilots[q], &basis)?;
                Ok(Arc::new((LeastSquares::new(&g)?, basis)))
            })
            .clone()
    }
}

/// Per-user results of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct UserOutcome {
    pub theta: usize,
    pub epsilon: f64,
    /// Signed timing error per timing variant.
    pub to_err: Vec<i64>,
    /// `(ε̂ − ε, NMSE)` per timing variant then CFO variant.
    pub freq: Vec<Vec<(f64, f64)>>,
}

/// Simulates one trial of a prepared point.
pub fn run_trial(cfg: &ExperimentConfig, prep: &PreparedPoint, trial: usize) -> Result<Vec<UserOutcome>> {
    let point = prep.point;
    let params = &prep.params;
    let mut rng = trial_rng(cfg.seed, point.index, trial);
    let mut channels: Vec<LtvChannel> = Vec::with_capacity(point.users);
    let mut thetas = Vec::with_capacity(point.users);
    let mut epsilons = Vec::with_capacity(point.users);
    let mut signals = Vec::with_capacity(point.users);
    for q in 0..point.users {
        channels.push(generate_channel(
            &cfg.channel,
            point.kappa_max,
            cfg.l_ch,
            params,
            cfg.same_bin_paths,
            q,
            &mut rng,
        )?);
        thetas.push(match cfg.timing_offsets {
            TimingDraw::Uniform => rng.random_range(0..=cfg.theta_max),
            TimingDraw::Fixed { value } => value,
        });
        epsilons.push(match (point.cfo, &cfg.cfo) {
            (Some(e), _) => e,
            (None, CfoDraw::Uniform { min, max }) => rng.random_range(*min..=*max),
            (None, CfoDraw::Fixed { values }) => values[0],
        });
        let mut grid = ComplexMatrix::zeros(params.m, params.n);
        for (l, k) in prep.allocations[q].cells() {
            if !prep.layout.is_reserved(l, k) {
                grid[(l, k)] = cfg.qam.random_symbol(&mut rng);
            }
        }
        let grid = embed_pilots(&grid, &prep.layout, &[q])?;
        signals.push(otfs_modulate(&grid, params)?.with_cp);
    }
    let links: Vec<UserLink<'_>> = (0..point.users)
        .map(|q| UserLink { signal: &signals[q], channel: &channels[q], theta: thetas[q], epsilon: epsilons[q] })
        .collect();
    let noise_var = point.snr_db.map(noise_variance).unwrap_or(0.0);
    let r = receive(&links, noise_var, params.l_cp, &mut rng)?;

    let l_ref = prep.layout.timing_reference();
    let l_pilot = prep.layout.pilot_len();
    let n_s = params.n_s();
    let mut out = Vec::with_capacity(point.users);
    for q in 0..point.users {
        let metric = user_timing_metric(&r, &prep.layout, q, point.users, cfg.metric_slide)?;
        let mut to_err = Vec::with_capacity(cfg.variants.timing.len());
        let mut estimates = Vec::with_capacity(cfg.variants.timing.len());
        for (v, variant) in cfg.variants.timing.iter().enumerate() {
            let theta_hat = match variant {
                TimingVariant::FirstPeak { .. } => {
                    detect_first_major_peak(&metric, prep.thresholds[v].unwrap_or(0.5), l_ref, params.l_cp, params.m)?
                }
                TimingVariant::HighestPeak => {
                    detect_highest_peak(&metric, mean_delay(&channels[q]), l_ref, params.l_cp, l_pilot, params.m)
                }
                TimingVariant::Genie => thetas[q],
            };
            to_err.push(wrapped_error(theta_hat, thetas[q], params.m));
            estimates.push(theta_hat);
        }
        let mut freq = Vec::with_capacity(estimates.len());
        let mut memo: HashMap<usize, Vec<(f64, f64)>> = HashMap::new();
        if !cfg.variants.cfo.is_empty() {
            for &theta_hat in &estimates {
                if let Some(done) = memo.get(&theta_hat) {
                    freq.push(done.clone());
                    continue;
                }
                let obs = extract_pilot_region(&r, theta_hat, &prep.layout, q, params)?;
                let est = prep.estimator(q, theta_hat, &obs)?;
                let (ls, basis) = (&est.0, &est.1);
                let truth = true_compound_channel(&channels[q], epsilons[q], &obs.kappas, l_pilot, n_s);
                let mut row = Vec::with_capacity(cfg.variants.cfo.len());
                for cv in &cfg.variants.cfo {
                    let ch = match cv {
                        CfoVariant::Ml => {
                            let e = ml_cfo_estimate(&obs, ls, &cfg.cfo_search, n_s)?;
                            estimate_channel(&obs, ls, e.epsilon, basis, n_s)
                        }
                        CfoVariant::Absorbed => absorbed_cfo_baseline(&obs, ls, basis, n_s),
                    };
                    let err = nmse(&ch.compound(&obs.kappas, n_s), &truth)?;
                    row.push((ch.epsilon - epsilons[q], err));
                }
                memo.insert(theta_hat, row.clone());
                freq.push(row);
            }
        }
        out.push(UserOutcome { theta: thetas[q], epsilon: epsilons[q], to_err, freq });
    }
    Ok(out)
}

/// Worker count from `OTFS_SYNC_THREADS`, if set to a positive integer.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(SyncError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs every trial of a point; results are ordered by trial index.
pub fn run_point(cfg: &ExperimentConfig, prep: &PreparedPoint) -> Result<Vec<Vec<UserOutcome>>> {
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, prep, t)).collect()
}

fn variant_name(t: &TimingVariant, explicit: bool, threshold: Option<f64>, c: Option<CfoVariant>) -> String {
    let base = match t {
        TimingVariant::FirstPeak { .. } if explicit => format!("first-peak@{}", threshold.unwrap_or(0.0)),
        TimingVariant::FirstPeak { .. } => "first-peak".to_string(),
        TimingVariant::HighestPeak => "highest-peak".to_string(),
        TimingVariant::Genie => "genie".to_string(),
    };
    match c {
        Some(CfoVariant::Ml) => format!("{base}/ml"),
        Some(CfoVariant::Absorbed) => format!("{base}/absorbed"),
        None => base,
    }
}

/// Turns per-trial outcomes of one point into records, one per variant.
pub fn summarize(cfg: &ExperimentConfig, prep: &PreparedPoint, trials: &[Vec<UserOutcome>], wall: f64) -> Result<Vec<ResultRecord>> {
    let mut records = Vec::new();
    let cfo_variants: Vec<Option<CfoVariant>> = if cfg.variants.cfo.is_empty() {
        vec![None]
    } else {
        cfg.variants.cfo.iter().map(|&c| Some(c)).collect()
    };
    for (v, tv) in cfg.variants.timing.iter().enumerate() {
        let signed: Vec<f64> = trials.iter().flatten().map(|u| u.to_err[v] as f64).collect();
        let abs: Vec<f64> = signed.iter().map(|x| x.abs()).collect();
        let s = aggregate(&signed).ok_or(SyncError::EmptyInput)?;
        let a = aggregate(&abs).ok_or(SyncError::EmptyInput)?;
        for (c, cv) in cfo_variants.iter().enumerate() {
            let (cfo_mse, nmse_lin) = match cv {
                Some(_) => {
                    let errs: Vec<f64> = trials.iter().flatten().map(|u| u.freq[v][c].0).collect();
                    let nm: Vec<f64> = trials.iter().flatten().map(|u| u.freq[v][c].1).collect();
                    (aggregate(&errs).map(|x| x.mean_square), aggregate(&nm).map(|x| x.mean))
                }
                None => (None, None),
            };
            let explicit = matches!(tv, TimingVariant::FirstPeak { threshold: Some(_) });
            let rec = ResultRecord {
                experiment_id: cfg.experiment_id.clone(),
                variant: variant_name(tv, explicit, prep.thresholds[v], *cv),
                m: cfg.m,
                n: cfg.n,
                q: prep.point.users,
                scheme: cfg.scheme,
                pilot_structure: cfg.pilot.structure,
                snr_db: prep.point.snr_db,
                kappa_max: prep.point.kappa_max,
                cfo_point: prep.point.cfo,
                trials: cfg.trials,
                to_err_mean: a.mean,
                to_err_var: s.variance,
                to_err_bias: s.mean,
                cfo_mse,
                nmse: nmse_lin,
                nmse_db: nmse_lin.map(|x| 10.0 * x.log10()),
                seed: cfg.seed,
                wall_seconds: if cfg.record_wall_time { wall } else { 0.0 },
            };
            let finite = [Some(rec.to_err_mean), Some(rec.to_err_var), rec.cfo_mse, rec.nmse]
                .iter()
                .flatten()
                .all(|x| x.is_finite());
            if !finite {
                return Err(SyncError::Numerical(format!("non-finite metric for variant {}", rec.variant)));
            }
            records.push(rec);
        }
    }
    Ok(records)
}

/// Runs the whole sweep. Capacity and layout problems surface before any
/// trial is simulated.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let prepared = sweep_points(cfg)
        .into_iter()
        .map(|p| PreparedPoint::new(cfg, p))
        .collect::<Result<Vec<_>>>()?;
    let work = || -> Result<Vec<ResultRecord>> {
        let mut out = Vec::new();
        for prep in &prepared {
            let start = Instant::now();
            let trials = run_point(cfg, prep)?;
            out.extend(summarize(cfg, prep, &trials, start.elapsed().as_secs_f64())?);
        }
        Ok(out)
    };
    match thread_limit()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SyncError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}
