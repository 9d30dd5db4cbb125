use serde::Serialize;

use qcluster_core::adiabatic::{
    build_clusterfind_hamiltonian, build_seed_hamiltonian, clusterfind_warning, collapse_orbits, default_kappa,
    run_adiabatic, sample_solution, uniform_start, AdiabaticProblem, DistanceMatrix, DistanceSource, GapTrace,
    Normalization, RankedTuple, Schedule,
};
use qcluster_core::classical::{
    brute_force_cluster_set, brute_force_seed_set, exact_distance, kmeans_lloyd, kmeanspp_seeds, mean_vector,
    TupleOptimum,
};
use qcluster_core::distance::{
    assign_two_class, distance_to_centroid, nonlinear_expectation, quadratic_form, Class, Estimate, EstimatorOptions,
    Mode, NonlinearMetricSpec,
};
use qcluster_core::qkmeans::{run_qkmeans, CentroidMode, CopyBudget, IterationRecord, QkmeansOptions, QkmeansReport};
use qcluster_core::state_prep::{encode_vector, load_csv, subnorm_reads_per_encode, DataSet, QueryLedger, QueryReport};
use qcluster_core::{Error, Result, SimRng};

use crate::config::{
    Annealing, ClassifyArgs, ClusterFindArgs, Command, DistanceArgs, KmeansArgs, ModeArg, NonlinearArgs,
    ObservableArg, QkmeansArgs, QueriesArgs, RunConfig, Sampling, SeedsArgs,
};

/// Longest ranked list written to a report.
const RANKED_LIMIT: usize = 20;

/// A finished run: JSON body plus named CSV side files.
pub struct Output {
    pub json: String,
    pub traces: Vec<(String, String)>,
}

fn finish<T: Serialize>(report: &T, traces: Vec<(String, String)>) -> Result<Output> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    json.push('\n');
    Ok(Output { json, traces })
}

fn estimator(s: &Sampling, t: Option<f64>) -> EstimatorOptions {
    EstimatorOptions {
        mode: match s.mode {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Sampled => Mode::Sampled,
        },
        shots: s.shots,
        time: t,
        ..EstimatorOptions::default()
    }
}

fn schedule(a: &Annealing, interpolation: crate::config::InterpolationArg) -> Result<Schedule> {
    Schedule::with_interpolation(a.tau, a.steps as usize, interpolation.into())
}

pub fn run(command: &Command, config: &RunConfig) -> Result<Output> {
    let mut rng = SimRng::new(config.seed);
    match command {
        Command::Distance(a) => distance(a, config, &mut rng),
        Command::Classify(a) => classify(a, config, &mut rng),
        Command::Seeds(a) => seeds(a, config, &mut rng),
        Command::ClusterFind(a) => cluster_find(a, config, &mut rng),
        Command::Qkmeans(a) => qkmeans(a, config, &mut rng),
        Command::Kmeans(a) => kmeans(a, config, &mut rng),
        Command::Nonlinear(a) => nonlinear(a, config, &mut rng),
        Command::Queries(a) => queries(a, config),
    }
}

#[derive(Serialize)]
struct DistanceReport<'a> {
    config: &'a RunConfig,
    distance: Estimate,
    classical_distance: f64,
    queries: QueryReport,
}

fn distance(a: &DistanceArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let ledger = QueryLedger::for_data(&data);
    let u = data.vector(a.u_row)?.to_vec();
    let est = distance_to_centroid(&u, &data, &a.rows.0, &estimator(&a.sampling, a.t), &ledger, rng)?;
    let classical = exact_distance(&u, &mean_vector(&data, &a.rows.0)?)?;
    finish(
        &DistanceReport {
            config,
            distance: est,
            classical_distance: classical,
            queries: ledger.report(),
        },
        vec![],
    )
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    config: &'a RunConfig,
    class: Class,
    tie: bool,
    distance_v: Estimate,
    distance_w: Estimate,
    classical_distance_v: f64,
    classical_distance_w: f64,
    queries: QueryReport,
}

fn classify(a: &ClassifyArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let ledger = QueryLedger::for_data(&data);
    let u = data.vector(a.u_row)?.to_vec();
    let out = assign_two_class(&u, &data, &a.v_rows.0, &a.w_rows.0, &estimator(&a.sampling, a.t), &ledger, rng)?;
    finish(
        &ClassifyReport {
            config,
            class: out.class,
            tie: out.tie,
            distance_v: out.distance_v,
            distance_w: out.distance_w,
            classical_distance_v: exact_distance(&u, &mean_vector(&data, &a.v_rows.0)?)?,
            classical_distance_w: exact_distance(&u, &mean_vector(&data, &a.w_rows.0)?)?,
            queries: ledger.report(),
        },
        vec![],
    )
}

fn distance_matrix(data: &DataSet, s: &Sampling, rng: &mut SimRng) -> Result<(DistanceMatrix, QueryReport)> {
    let ledger = QueryLedger::for_data(data);
    let d = match s.mode {
        ModeArg::Exact => DistanceMatrix::from_data(data)?,
        ModeArg::Sampled => DistanceMatrix::estimated(data, &estimator(s, None), &ledger, rng)?,
    };
    Ok((d, ledger.report()))
}

#[derive(Serialize)]
struct TupleReport<'a> {
    config: &'a RunConfig,
    distance_source: DistanceSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    warnings: Vec<String>,
    ranked: Vec<RankedTuple>,
    orbits: Vec<RankedTuple>,
    min_gap: f64,
    final_ground_overlap: f64,
    brute_force: Option<TupleOptimum>,
    queries: QueryReport,
}

fn anneal_tuples(
    hf: qcluster_core::HermitianOperator,
    len: usize,
    m: usize,
    sch: &Schedule,
    shots: u64,
    rng: &mut SimRng,
) -> Result<(Vec<RankedTuple>, Vec<RankedTuple>, GapTrace)> {
    let problem = AdiabaticProblem::from_start(uniform_start(len, m)?, hf)?.normalized(Normalization::UnitSpread)?;
    let (state, trace) = run_adiabatic(&problem, sch)?;
    let mut ranked = sample_solution(&state, shots, rng)?;
    let mut orbits = collapse_orbits(&ranked);
    ranked.truncate(RANKED_LIMIT);
    orbits.truncate(RANKED_LIMIT);
    Ok((ranked, orbits, trace))
}

fn seeds(a: &SeedsArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let (d, queries) = distance_matrix(&data, &a.sampling, rng)?;
    let k = a.k as usize;
    let hf = build_seed_hamiltonian(&d, k)?;
    let sch = schedule(&a.annealing, a.interpolation)?;
    let (ranked, orbits, trace) = anneal_tuples(hf, k, d.len(), &sch, a.sampling.shots, rng)?;
    let report = TupleReport {
        config,
        distance_source: d.source(),
        kappa: None,
        warnings: vec![],
        ranked,
        orbits,
        min_gap: trace.min_gap(),
        final_ground_overlap: trace.final_overlap(),
        brute_force: brute_force_seed_set(&d, k).ok(),
        queries,
    };
    finish(&report, vec![("gap".into(), trace.to_csv())])
}

fn cluster_find(a: &ClusterFindArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let (d, queries) = distance_matrix(&data, &a.sampling, rng)?;
    let r = a.r as usize;
    let kappa = a.kappa.unwrap_or_else(|| default_kappa(&d));
    let hf = build_clusterfind_hamiltonian(&d, r, kappa)?;
    let sch = schedule(&a.annealing, a.interpolation)?;
    let (ranked, orbits, trace) = anneal_tuples(hf, r, d.len(), &sch, a.sampling.shots, rng)?;
    let report = TupleReport {
        config,
        distance_source: d.source(),
        kappa: Some(kappa),
        warnings: clusterfind_warning(d.len(), r).into_iter().collect(),
        ranked,
        orbits,
        min_gap: trace.min_gap(),
        final_ground_overlap: trace.final_overlap(),
        brute_force: brute_force_cluster_set(&d, r, kappa).ok(),
        queries,
    };
    finish(&report, vec![("gap".into(), trace.to_csv())])
}

fn pick_seeds(data: &DataSet, k: usize, given: Option<&crate::config::Rows>, rng: &mut SimRng) -> Result<Vec<usize>> {
    match given {
        Some(rows) if rows.0.len() != k => Err(Error::InvalidInput(format!(
            "--seeds lists {} rows but --k is {k}",
            rows.0.len()
        ))),
        Some(rows) => Ok(rows.0.clone()),
        None => kmeanspp_seeds(data, k, rng),
    }
}

#[derive(Serialize)]
struct QkmeansOutput<'a> {
    config: &'a RunConfig,
    seeds: Vec<usize>,
    #[serde(flatten)]
    report: QkmeansReport,
    copy_regime_usable: bool,
    history: Vec<IterationRecord>,
}

fn qkmeans(a: &QkmeansArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let seeds = pick_seeds(&data, a.k as usize, a.seeds.as_ref(), rng)?;
    let budget = CopyBudget::new(a.d as usize, a.delta)?;
    let opts = QkmeansOptions {
        schedule: schedule(&a.annealing, a.interpolation)?,
        shots: a.shots,
        budget,
        centroid_mode: if a.noisy { CentroidMode::Noisy } else { CentroidMode::Exact },
        max_iter: a.max_iter as usize,
        ..QkmeansOptions::default()
    };
    let run = run_qkmeans(&data, &seeds, &opts, rng)?;
    let traces = run
        .traces
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("gap.iter{}", i + 1), t.to_csv()))
        .collect();
    finish(
        &QkmeansOutput {
            config,
            seeds,
            report: run.report(),
            copy_regime_usable: budget.usable(),
            history: run.history,
        },
        traces,
    )
}

#[derive(Serialize)]
struct KmeansReport<'a> {
    config: &'a RunConfig,
    seeds: Vec<usize>,
    iterations: usize,
    assignments: Vec<usize>,
    wcss: f64,
    converged: bool,
    history: Vec<Vec<usize>>,
    wcss_history: Vec<f64>,
}

fn kmeans(a: &KmeansArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let k = a.k as usize;
    let seeds = pick_seeds(&data, k, a.seeds.as_ref(), rng)?;
    let run = kmeans_lloyd(&data, k, &seeds, a.max_iter as usize)?;
    finish(
        &KmeansReport {
            config,
            seeds,
            iterations: run.iterations(),
            assignments: run.assignment.labels,
            wcss: run.assignment.wcss,
            converged: run.converged,
            history: run.history,
            wcss_history: run.wcss_history,
        },
        vec![],
    )
}

#[derive(Serialize)]
struct NonlinearReport<'a> {
    config: &'a RunConfig,
    value: Estimate,
    exact_value: f64,
    imaginary_residue: f64,
    queries: QueryReport,
}

fn nonlinear(a: &NonlinearArgs, config: &RunConfig, rng: &mut SimRng) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let ledger = QueryLedger::for_data(&data);
    let u = encode_vector(&data, a.u_row, &ledger)?;
    let v = encode_vector(&data, a.v_row, &ledger)?;
    let q = a.q as usize;
    let spec = match a.observable {
        ObservableArg::Swap => NonlinearMetricSpec::swap(q, data.dim())?,
        ObservableArg::Identity => NonlinearMetricSpec::identity(q, data.dim())?,
    };
    let exact = quadratic_form(&u, &v, &spec)?;
    let value = nonlinear_expectation(&u, &v, &spec, &estimator(&a.sampling, None), rng)?;
    finish(
        &NonlinearReport {
            config,
            value,
            exact_value: exact.re,
            imaginary_residue: exact.im,
            queries: ledger.report(),
        },
        vec![],
    )
}

#[derive(Serialize)]
struct QueriesReport<'a> {
    config: &'a RunConfig,
    encodes: usize,
    subnorm_reads_per_encode: u64,
    amplitude_reads_per_encode: u64,
    queries: QueryReport,
    total_reads: u64,
}

fn queries(a: &QueriesArgs, config: &RunConfig) -> Result<Output> {
    let data = load_csv(&a.common.input)?;
    let ledger = QueryLedger::for_data(&data);
    let rows = a.rows.as_ref().map_or_else(|| (0..data.len()).collect(), |r| r.0.clone());
    for &j in &rows {
        encode_vector(&data, j, &ledger)?;
    }
    let report = ledger.report();
    finish(
        &QueriesReport {
            config,
            encodes: rows.len(),
            subnorm_reads_per_encode: subnorm_reads_per_encode(data.qubits()),
            amplitude_reads_per_encode: data.qubits() as u64,
            queries: report,
            total_reads: report.total_reads(),
        },
        vec![],
    )
}
