// Command-line front end: synthetic data generation, batch robust fits with
// regularization paths, rank-controlled fits with the convex oracle and
// optimality certificate, online subspace tracking, and kernelized fits
// with spectral-clustering output. Every command is reproducible from its
// flags plus --seed, and emits a machine-readable JSON report on request.
//
// Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "robsub/robsub.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace robsub;

namespace {

// ---------------------------------------------------------------------------
// Reports

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

/// Structural schema check mirroring docs/report.schema.json: required keys
/// with their JSON types. Reports failing this are never written.
void validate_report(const json& report) {
  const std::vector<std::pair<std::string, std::string>> required = {
      {"command", "string"},   {"config", "object"},        {"seed", "number"},
      {"metrics", "object"},   {"outlier_norms", "array"},  {"timing_sec", "number"}};
  for (const auto& [key, type] : required) {
    if (!report.contains(key))
      throw std::logic_error("report schema violation: missing key '" + key + "'");
    const auto& value = report.at(key);
    const bool ok = (type == "string" && value.is_string()) ||
                    (type == "object" && value.is_object()) ||
                    (type == "array" && value.is_array()) ||
                    (type == "number" && value.is_number());
    if (!ok)
      throw std::logic_error("report schema violation: key '" + key + "' must be " + type);
  }
  for (const auto& [name, value] : report.at("metrics").items())
    if (!value.is_number() && !value.is_boolean())
      throw std::logic_error("report schema violation: metric '" + name + "' must be numeric");
}

void ensure_writable(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw IoError(path + ": exists (pass --force to overwrite)");
}

void write_report(const std::string& path, json report, bool force) {
  validate_report(report);
  ensure_writable(path, force);
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << report.dump(2) << '\n';
  if (!out) throw IoError(path + ": write failed");
}

json norms_to_json(const Vector& norms) {
  json arr = json::array();
  for (Index i = 0; i < norms.size(); ++i) arr.push_back(norms(i));
  return arr;
}

std::string echo_command(int argc, char** argv) {
  std::ostringstream os;
  for (int i = 0; i < argc; ++i) os << (i ? " " : "") << argv[i];
  return os.str();
}

void save_matrix_checked(const std::string& path, const Matrix& m, bool binary, bool force) {
  ensure_writable(path, force);
  save_matrix(path, m, binary);
}

void write_meta(const std::string& path, const json& meta, bool force) {
  ensure_writable(path, force);
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << meta.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Selector flag: count:K | noise:sigma2=V | noise:cov=FILE

struct SelectorSpec {
  enum class Kind { None, Count, NoiseSigma, NoiseCovFile } kind = Kind::None;
  Index count = 0;
  double sigma2 = 0.0;
  std::string cov_file;
};

SelectorSpec parse_selector(const std::string& text) {
  SelectorSpec spec;
  if (text.empty()) return spec;
  if (text.rfind("count:", 0) == 0) {
    spec.kind = SelectorSpec::Kind::Count;
    spec.count = std::stol(text.substr(6));
    return spec;
  }
  if (text.rfind("noise:sigma2=", 0) == 0) {
    spec.kind = SelectorSpec::Kind::NoiseSigma;
    spec.sigma2 = std::stod(text.substr(13));
    if (!(spec.sigma2 > 0)) throw CLI::ValidationError("--select", "sigma2 must be > 0");
    return spec;
  }
  if (text.rfind("noise:cov=", 0) == 0) {
    spec.kind = SelectorSpec::Kind::NoiseCovFile;
    spec.cov_file = text.substr(10);
    return spec;
  }
  throw CLI::ValidationError("--select", "expected count:K, noise:sigma2=V or noise:cov=FILE");
}

std::vector<Index> parse_row_range(const std::string& text) {
  // "a:b" inclusive, 1-based (matching row numbering in the protocol docs)
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw CLI::ValidationError("--aberrant", "expected FIRST:LAST (1-based, inclusive)");
  const long first = std::stol(text.substr(0, colon));
  const long last = std::stol(text.substr(colon + 1));
  if (first < 1 || last < first)
    throw CLI::ValidationError("--aberrant", "bad row range");
  std::vector<Index> rows;
  for (long r = first; r <= last; ++r) rows.push_back(static_cast<Index>(r - 1));
  return rows;
}

// ---------------------------------------------------------------------------
// gen

struct GenCommon {
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool force = false;
  bool binary = false;

  std::string path(const std::string& name) const {
    return (fs::path(out_dir) / name).string();
  }
  void prepare() const { fs::create_directories(out_dir); }
};

int run_gen_lowrank(const GenCommon& common, const SynthSpec& spec) {
  common.prepare();
  const LowRankData data = gen_lowrank_outliers(spec);
  const std::string ext = common.binary ? ".bin" : ".csv";
  save_matrix_checked(common.path("X" + ext), data.x, common.binary, common.force);
  save_matrix_checked(common.path("L" + ext), data.l, common.binary, common.force);
  save_matrix_checked(common.path("O" + ext), data.o, common.binary, common.force);
  save_matrix_checked(common.path("U" + ext), data.u, common.binary, common.force);
  save_matrix_checked(common.path("S" + ext), data.s, common.binary, common.force);
  save_matrix_checked(common.path("E" + ext), data.e, common.binary, common.force);
  json meta = {{"generator", "lowrank"},
               {"seed", spec.seed},
               {"n", spec.n_rows},
               {"p", spec.n_cols},
               {"q", spec.q},
               {"rho", spec.rho_p},
               {"sigma2", spec.sigma_e2},
               {"outlier_range", {spec.outlier_lo, spec.outlier_hi}}};
  write_meta(common.path("meta.json"), meta, common.force);
  std::cout << "wrote X/L/O/U/S/E" + ext + " and meta.json to " << common.out_dir << "\n";
  return 0;
}

int run_gen_circles(const GenCommon& common, const std::vector<Index>& counts,
                    const std::vector<double>& radii, double noise_var, Index n_outliers,
                    double box) {
  common.prepare();
  const ConcentricData data =
      gen_concentric(counts, radii, noise_var, n_outliers, box, common.seed);
  const std::string ext = common.binary ? ".bin" : ".csv";
  save_matrix_checked(common.path("X" + ext), data.x, common.binary, common.force);
  Matrix labels(static_cast<Index>(data.labels.size()), 1);
  for (std::size_t i = 0; i < data.labels.size(); ++i)
    labels(static_cast<Index>(i), 0) = data.labels[i];
  save_matrix_checked(common.path("labels" + ext), labels, common.binary, common.force);
  json meta = {{"generator", "circles"}, {"seed", common.seed},
               {"counts", counts},       {"radii", radii},
               {"noise_var", noise_var}, {"n_outliers", n_outliers},
               {"box", box}};
  write_meta(common.path("meta.json"), meta, common.force);
  std::cout << "wrote X" + ext + ", labels" + ext + " and meta.json to " << common.out_dir
            << "\n";
  return 0;
}

int run_gen_irt(const GenCommon& common, Index n, Index p, Index q,
                const std::string& aberrant, double rate) {
  common.prepare();
  const IrtData data = gen_irt_2plm(n, p, q, common.seed);
  Matrix corrupted = data.responses;
  std::vector<Index> rows;
  if (!aberrant.empty()) {
    rows = parse_row_range(aberrant);
    corrupted = inject_random_responders(data.responses, rows, rate, common.seed + 1);
  }
  const std::string ext = common.binary ? ".bin" : ".csv";
  save_matrix_checked(common.path("X" + ext), corrupted, common.binary, common.force);
  save_matrix_checked(common.path("Y" + ext), data.responses, common.binary, common.force);
  json meta = {{"generator", "irt"},
               {"seed", common.seed},
               {"n", n},
               {"p", p},
               {"q", q},
               {"aberrant", aberrant},
               {"rate", rate}};
  write_meta(common.path("meta.json"), meta, common.force);
  std::cout << "wrote X" + ext + " (corrupted), Y" + ext + " (clean) and meta.json to "
            << common.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit

int run_fit(const std::string& in_path, Index q, std::optional<double> lambda2, bool use_path,
            int grid_size, double grid_eps, const std::string& lmax_text,
            const std::string& reg_text, const std::string& select_text, int refine_rounds,
            double delta, std::optional<double> lambda0, const std::string& truth_l_path,
            const std::string& report_path, const std::string& path_out,
            const std::string& norms_out, int max_iters, double rel_tol, std::uint64_t seed,
            bool force, bool cold_parallel, const std::string& command) {
  Stopwatch watch;
  const DataMatrix data{load_matrix_any(in_path)};
  const RegularizerKind kind =
      reg_text == "entry" ? RegularizerKind::EntryL1 : RegularizerKind::RowL2;
  SolverOptions opts;
  opts.max_iters = max_iters;
  opts.rel_tol = rel_tol;
  opts.seed = seed;

  json config = {{"in", in_path},   {"q", q},
                 {"reg", reg_text}, {"refine", refine_rounds},
                 {"delta", delta},  {"max_iters", max_iters},
                 {"rel_tol", rel_tol}};
  json metrics;
  BatchFit fit;
  double chosen_lambda2 = 0.0;

  if (use_path) {
    double lmax;
    if (lmax_text == "auto") {
      lmax = estimate_lambda_max(data, q);
      if (!(lmax > 0)) throw NumericalError("fit: degenerate data, lambda_max is zero");
    } else {
      lmax = std::stod(lmax_text);
    }
    const auto grid = lambda_grid(lmax, grid_eps, grid_size);
    const PathResult path = compute_path(data, q, grid, kind, opts, !cold_parallel);
    config["path"] = {{"grid", grid_size}, {"eps", grid_eps}, {"lambda_max", lmax},
                      {"warm", !cold_parallel}};
    if (!path_out.empty()) {
      ensure_writable(path_out, force);
      std::ofstream os(path_out);
      if (!os) throw IoError(path_out + ": cannot open for writing");
      write_path_table(os, path);
    }

    const SelectorSpec selector = parse_selector(select_text);
    switch (selector.kind) {
      case SelectorSpec::Kind::Count: {
        const auto pick = select_by_count(path, selector.count);
        chosen_lambda2 = pick.lambda2;
        fit = path.fits[static_cast<std::size_t>(pick.index)];
        metrics["select_exact"] = pick.exact;
        config["select"] = select_text;
        break;
      }
      case SelectorSpec::Kind::NoiseSigma:
      case SelectorSpec::Kind::NoiseCovFile: {
        const Matrix sigma_e =
            selector.kind == SelectorSpec::Kind::NoiseSigma
                ? Matrix(selector.sigma2 * Matrix::Identity(data.cols(), data.cols()))
                : load_matrix_any(selector.cov_file);
        const auto pick = select_by_noise_cov(path, data, sigma_e);
        chosen_lambda2 = pick.lambda2;
        fit = path.fits[static_cast<std::size_t>(pick.index)];
        metrics["select_criterion"] = pick.criterion[static_cast<std::size_t>(pick.index)];
        config["select"] = select_text;
        break;
      }
      case SelectorSpec::Kind::None:
        throw CLI::ValidationError("--path", "path mode needs --select (or use --lambda2)");
    }
  } else {
    if (!lambda2) throw CLI::ValidationError("fit", "need --lambda2 or --path");
    chosen_lambda2 = *lambda2;
    fit = fit_batch(data, q, chosen_lambda2, kind, opts);
  }

  if (refine_rounds > 0) {
    const double l0 = lambda0 ? *lambda0 : chosen_lambda2 * delta;
    config["lambda0"] = l0;
    fit = refine_reweighted(data, fit, l0, delta, refine_rounds);
  }

  const Vector norms = fit.outliers.row_norms();
  metrics["lambda2"] = chosen_lambda2;
  metrics["objective"] = fit.objective();
  metrics["iterations"] = fit.iters;
  metrics["converged"] = fit.converged;
  metrics["support_count"] = fit.outliers.support_count();
  if (!truth_l_path.empty()) {
    const Matrix truth_l = load_matrix_any(truth_l_path);
    const Matrix fitted_l = fit.model.reconstruct();
    metrics["err_l"] = (truth_l - fitted_l).norm() / static_cast<double>(data.rows());
  }
  if (!norms_out.empty()) {
    ensure_writable(norms_out, force);
    save_matrix(norms_out, norms);
  }

  json report = {{"command", command}, {"config", config},
                 {"seed", seed},       {"metrics", metrics},
                 {"outlier_norms", norms_to_json(norms)},
                 {"timing_sec", watch.seconds()}};
  if (!report_path.empty()) write_report(report_path, report, force);
  std::cout << "lambda2=" << chosen_lambda2 << " objective=" << fit.objective()
            << " support=" << fit.outliers.support_count() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// rank

int run_rank(const std::string& in_path, Index q_bar, double lambda_star, double lambda2,
             const std::string& reg_text, bool certify, bool oracle_spcp, bool no_mean,
             int spcp_iters, const std::string& report_path, int max_iters, double rel_tol,
             std::uint64_t seed, bool force, const std::string& command) {
  Stopwatch watch;
  const DataMatrix data{load_matrix_any(in_path)};
  const RegularizerKind kind =
      reg_text == "entry" ? RegularizerKind::EntryL1 : RegularizerKind::RowL2;
  SolverOptions opts;
  opts.max_iters = max_iters;
  opts.rel_tol = rel_tol;
  opts.seed = seed;

  const RankFit fit =
      fit_rank(data, q_bar, lambda_star, lambda2, kind, opts, /*fit_mean=*/!no_mean);
  if (!fit.converged)
    std::cerr << "warning: rank fit hit the iteration cap without converging\n";

  json config = {{"in", in_path},         {"qbar", q_bar},
                 {"lstar", lambda_star},  {"lambda2", lambda2},
                 {"reg", reg_text},       {"fit_mean", !no_mean},
                 {"max_iters", max_iters}, {"rel_tol", rel_tol}};
  json metrics;
  metrics["objective"] = fit.objective();
  metrics["iterations"] = fit.iters;
  metrics["converged"] = fit.converged;
  metrics["support_count"] = fit.outliers.support_count();

  if (certify) {
    const Certificate cert = check_certificate(data, fit, lambda_star);
    metrics["certificate_holds"] = cert.holds;
    metrics["certificate_gap"] = cert.gap;
    metrics["residual_spectral_norm"] = cert.spectral_norm;
  }
  if (oracle_spcp) {
    SolverOptions oracle_opts = opts;
    oracle_opts.max_iters = spcp_iters;
    const SpcpSolution spcp =
        spcp_reference(data, lambda_star, lambda2, kind, oracle_opts, false, 1e-9);
    if (!spcp.converged)
      throw NumericalError("spcp oracle did not reach its fixed-point tolerance");
    metrics["spcp_objective"] = spcp.objective;
    metrics["spcp_dual_residual"] = spcp.dual_residual;
    metrics["spcp_rel_objective_gap"] =
        std::abs(fit.objective() - spcp.objective) / std::max(1e-300, spcp.objective);
    metrics["spcp_lowrank_diff_per_n"] =
        (spcp.l - fit.low_rank()).norm() / static_cast<double>(data.rows());
  }

  json report = {{"command", command}, {"config", config},
                 {"seed", seed},       {"metrics", metrics},
                 {"outlier_norms", norms_to_json(fit.outliers.row_norms())},
                 {"timing_sec", watch.seconds()}};
  if (!report_path.empty()) write_report(report_path, report, force);
  std::cout << "objective=" << fit.objective()
            << " support=" << fit.outliers.support_count();
  if (certify) std::cout << " certificate_gap=" << metrics["certificate_gap"].dump();
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// track

void write_metrics_csv(const std::string& path, const std::vector<StreamMetricRow>& rows,
                       bool force) {
  ensure_writable(path, force);
  std::ofstream os(path);
  if (!os) throw IoError(path + ": cannot open for writing");
  os << std::setprecision(17);
  for (const auto& row : rows)
    os << row.n << ',' << row.outlier_norm << ',' << row.angle << ','
       << row.reconstruction_error << '\n';
}

int run_track(const std::string& in_path, Index q, Index n0, double beta,
              const std::string& lambda2_text, const std::string& select_text,
              const std::string& truth_path, const std::string& metrics_path,
              bool ablate_nonrobust, int reorth_every, const std::string& report_path,
              int max_iters, double rel_tol, std::uint64_t seed, bool force,
              const std::string& command) {
  Stopwatch watch;
  const Matrix stream = load_matrix_any(in_path);
  if (stream.rows() <= n0)
    throw CLI::ValidationError("--init", "initialization block consumes the whole stream");
  const DataMatrix init_block{Matrix(stream.topRows(n0))};
  const DataMatrix rest{Matrix(stream.bottomRows(stream.rows() - n0))};

  SolverOptions opts;
  opts.max_iters = max_iters;
  opts.rel_tol = rel_tol;
  opts.seed = seed;

  TrackerInitConfig config;
  config.beta = beta;
  config.reorthonormalize_every = reorth_every;
  if (lambda2_text != "auto") {
    config.lambda2 = std::stod(lambda2_text);
  } else {
    const SelectorSpec selector = parse_selector(select_text);
    if (selector.kind == SelectorSpec::Kind::Count)
      config.outlier_count = selector.count;
    else if (selector.kind == SelectorSpec::Kind::NoiseSigma)
      config.noise_cov = selector.sigma2 * Matrix::Identity(stream.cols(), stream.cols());
    else if (selector.kind == SelectorSpec::Kind::NoiseCovFile)
      config.noise_cov = load_matrix_any(selector.cov_file);
    else
      throw CLI::ValidationError("--lambda2", "auto mode needs --select");
  }

  std::optional<Matrix> truth;
  if (!truth_path.empty()) {
    // Accept any basis of the true subspace; the angle metric needs an
    // orthonormal one.
    Matrix basis = load_matrix_any(truth_path);
    Eigen::HouseholderQR<Matrix> qr(basis);
    truth = qr.householderQ() * Matrix::Identity(basis.rows(), basis.cols());
  }

  auto [state, lambda2] = init_tracker(init_block, q, opts, config);
  const TrackerState init_state = state;
  const auto metrics_rows = run_stream(state, rest, truth ? &*truth : nullptr);
  if (!metrics_path.empty()) write_metrics_csv(metrics_path, metrics_rows, force);

  auto angle_stats = [](const std::vector<StreamMetricRow>& rows) {
    json out;
    if (rows.empty() || std::isnan(rows.back().angle)) return out;
    out["final_angle"] = rows.back().angle;
    std::vector<double> tail;
    for (std::size_t i = rows.size() - std::min<std::size_t>(rows.size(), 100); i < rows.size();
         ++i)
      tail.push_back(rows[i].angle);
    std::sort(tail.begin(), tail.end());
    out["median_angle_last_100"] = tail[tail.size() / 2];
    return out;
  };

  json metrics;
  metrics["lambda2"] = lambda2;
  metrics["steps"] = static_cast<long>(metrics_rows.size());
  Index flagged = 0;
  for (const auto& row : metrics_rows)
    if (row.outlier_norm > 0) ++flagged;
  metrics["outliers_flagged"] = flagged;
  const json robust_stats = angle_stats(metrics_rows);
  for (const auto& [key, value] : robust_stats.items()) metrics[key] = value;

  if (ablate_nonrobust) {
    TrackerState twin = init_state;
    twin.lambda2 = std::numeric_limits<double>::infinity();
    const auto ablation_rows = run_stream(twin, rest, truth ? &*truth : nullptr);
    if (!metrics_path.empty())
      write_metrics_csv(metrics_path + ".ablation.csv", ablation_rows, force);
    const json ablation_stats = angle_stats(ablation_rows);
    for (const auto& [key, value] : ablation_stats.items())
      metrics["ablation_" + key] = value;
  }

  Vector final_norms(static_cast<Index>(metrics_rows.size()));
  for (std::size_t i = 0; i < metrics_rows.size(); ++i)
    final_norms(static_cast<Index>(i)) = metrics_rows[i].outlier_norm;

  json report = {{"command", command},
                 {"config",
                  {{"in", in_path},
                   {"q", q},
                   {"init", n0},
                   {"beta", beta},
                   {"lambda2", lambda2_text},
                   {"select", select_text},
                   {"reorth_every", reorth_every},
                   {"max_iters", max_iters},
                   {"rel_tol", rel_tol}}},
                 {"seed", seed},
                 {"metrics", metrics},
                 {"outlier_norms", norms_to_json(final_norms)},
                 {"timing_sec", watch.seconds()}};
  if (!report_path.empty()) write_report(report_path, report, force);
  std::cout << "lambda2=" << lambda2 << " steps=" << metrics_rows.size()
            << " flagged=" << flagged;
  if (metrics.contains("final_angle"))
    std::cout << " final_angle=" << metrics["final_angle"].dump();
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// kpca

GramMatrix build_gram(const std::string& gram_text, const std::string& in_path,
                      const std::string& edges_path) {
  if (gram_text.rfind("rbf:c=", 0) == 0) {
    if (in_path.empty()) throw CLI::ValidationError("--gram", "rbf mode needs --in");
    const double c = std::stod(gram_text.substr(6));
    return rbf_gram(DataMatrix{load_matrix_any(in_path)}, c);
  }
  if (gram_text.rfind("graph:", 0) == 0) {
    if (edges_path.empty()) throw CLI::ValidationError("--gram", "graph mode needs --edges");
    const Matrix adjacency = load_edge_list(edges_path);
    const std::string arg = gram_text.substr(6);
    if (arg == "auto") return graph_gram(adjacency);
    if (arg.rfind("zeta=", 0) == 0) return graph_gram(adjacency, std::stod(arg.substr(5)));
    throw CLI::ValidationError("--gram", "graph mode takes auto or zeta=V");
  }
  if (gram_text.rfind("file:", 0) == 0) {
    GramMatrix gram;
    gram.k = load_matrix_any(gram_text.substr(5));
    if (gram.k.rows() != gram.k.cols())
      throw IoError("gram file must contain a square matrix");
    return gram;
  }
  throw CLI::ValidationError("--gram", "expected rbf:c=V, graph:auto, graph:zeta=V or file:PATH");
}

int run_kpca(const std::string& gram_text, const std::string& in_path,
             const std::string& edges_path, Index q_bar, double lambda_star, double lambda2,
             int cluster_k, bool keep_outliers, const std::string& ari_path,
             const std::string& labels_out, const std::string& gram_out,
             const std::string& report_path, int max_iters, double rel_tol,
             std::uint64_t seed, bool force, const std::string& command) {
  Stopwatch watch;
  const GramMatrix gram = build_gram(gram_text, in_path, edges_path);
  if (!gram_out.empty()) {
    ensure_writable(gram_out, force);
    save_matrix(gram_out, gram.k);
  }

  SolverOptions opts;
  opts.max_iters = max_iters;
  opts.rel_tol = rel_tol;
  opts.seed = seed;
  const KernelModel model = fit_kpca(gram, q_bar, lambda_star, lambda2, opts);
  const Vector norms = outlier_norms(model, gram);

  json metrics;
  metrics["objective"] = model.objective();
  metrics["iterations"] = model.iters;
  metrics["converged"] = model.converged;
  Index support = 0;
  for (Index i = 0; i < norms.size(); ++i)
    if (norms(i) > kSupportTol) ++support;
  metrics["support_count"] = support;
  metrics["psd_shift"] = gram.psd_shift;

  if (cluster_k > 0) {
    const ClusterResult clusters =
        embed_and_cluster(model, gram, cluster_k, !keep_outliers, seed);
    if (!labels_out.empty()) {
      Matrix labels(static_cast<Index>(clusters.labels.size()), 1);
      for (std::size_t i = 0; i < clusters.labels.size(); ++i)
        labels(static_cast<Index>(i), 0) = clusters.labels[i];
      ensure_writable(labels_out, force);
      save_matrix(labels_out, labels);
    }
    metrics["excluded_rows"] = static_cast<long>(clusters.excluded.size());
    if (!ari_path.empty()) {
      const Matrix truth = load_matrix_any(ari_path);
      if (truth.rows() != gram.size())
        throw IoError("--ari file must have one label per Gram row");
      std::vector<int> got, want;
      for (Index i = 0; i < gram.size(); ++i) {
        if (clusters.labels[static_cast<std::size_t>(i)] < 0) continue;  // excluded
        if (truth(i, 0) < 0) continue;  // rows the truth marks as outliers
        got.push_back(clusters.labels[static_cast<std::size_t>(i)]);
        want.push_back(static_cast<int>(truth(i, 0)));
      }
      metrics["ari"] = adjusted_rand_index(got, want);
    }
  }

  json report = {{"command", command},
                 {"config",
                  {{"gram", gram_text},
                   {"in", in_path},
                   {"edges", edges_path},
                   {"qbar", q_bar},
                   {"lstar", lambda_star},
                   {"lambda2", lambda2},
                   {"cluster", cluster_k},
                   {"exclude_outliers", !keep_outliers},
                   {"max_iters", max_iters},
                   {"rel_tol", rel_tol}}},
                 {"seed", seed},
                 {"metrics", metrics},
                 {"outlier_norms", norms_to_json(norms)},
                 {"timing_sec", watch.seconds()}};
  if (!report_path.empty()) write_report(report_path, report, force);
  std::cout << "objective=" << model.objective() << " support=" << support;
  if (metrics.contains("ari")) std::cout << " ari=" << metrics["ari"].dump();
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"robust subspace toolkit"};
  app.require_subcommand(1);
  const std::string command = echo_command(argc, argv);

  // --- gen ----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "generate synthetic datasets");
  gen->require_subcommand(1);
  GenCommon gen_common;

  auto add_gen_common = [&](CLI::App* sub) {
    sub->add_option("--out", gen_common.out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", gen_common.seed, "random seed")->capture_default_str();
    sub->add_flag("--force", gen_common.force, "overwrite existing files");
    sub->add_flag("--binary", gen_common.binary, "write binary matrices");
  };

  SynthSpec synth;
  auto* gen_lowrank = gen->add_subcommand("lowrank", "low-rank + noise + sparse outliers");
  add_gen_common(gen_lowrank);
  gen_lowrank->add_option("--n", synth.n_rows)->capture_default_str();
  gen_lowrank->add_option("--p", synth.n_cols)->capture_default_str();
  gen_lowrank->add_option("--q", synth.q)->capture_default_str();
  gen_lowrank->add_option("--rho", synth.rho_p)->capture_default_str();
  gen_lowrank->add_option("--sigma2", synth.sigma_e2)->capture_default_str();
  gen_lowrank->add_option("--omin", synth.outlier_lo)->capture_default_str();
  gen_lowrank->add_option("--omax", synth.outlier_hi)->capture_default_str();

  std::vector<Index> circle_counts{150, 150, 150};
  std::vector<double> circle_radii{1.0, 2.8, 5.0};
  double circle_noise_var = 0.15;
  Index circle_outliers = 5;
  double circle_box = 7.0;
  auto* gen_circles = gen->add_subcommand("circles", "concentric rings + box outliers");
  add_gen_common(gen_circles);
  gen_circles->add_option("--counts", circle_counts, "points per ring")->expected(-1);
  gen_circles->add_option("--radii", circle_radii, "ring radii")->expected(-1);
  gen_circles->add_option("--noise-var", circle_noise_var)->capture_default_str();
  gen_circles->add_option("--outliers", circle_outliers)->capture_default_str();
  gen_circles->add_option("--box", circle_box)->capture_default_str();

  Index irt_n = 1000, irt_p = 200, irt_q = 5;
  std::string irt_aberrant;
  double irt_rate = 0.5;
  auto* gen_irt = gen->add_subcommand("irt", "binary logistic item responses");
  add_gen_common(gen_irt);
  gen_irt->add_option("--n", irt_n)->capture_default_str();
  gen_irt->add_option("--p", irt_p)->capture_default_str();
  gen_irt->add_option("--q", irt_q)->capture_default_str();
  gen_irt->add_option("--aberrant", irt_aberrant, "1-based row range FIRST:LAST to corrupt");
  gen_irt->add_option("--rate", irt_rate, "random-responding rate")->capture_default_str();

  // --- fit ----------------------------------------------------------------
  std::string fit_in, fit_reg = "row", fit_select, fit_lmax = "auto";
  std::string fit_report, fit_path_out, fit_norms_out, fit_truth_l;
  Index fit_q = 1;
  double fit_lambda2_value = 0.0, fit_eps = 1e-2, fit_delta = 1e-5;
  double fit_rel_tol = 1e-7, fit_lambda0_value = 0.0;
  int fit_grid = 200, fit_refine = 0, fit_max_iters = 100;
  std::uint64_t fit_seed = 0;
  bool fit_force = false, fit_use_path = false, fit_cold = false;
  auto* fit_cmd = app.add_subcommand("fit", "batch robust fit (fixed lambda2 or path)");
  fit_cmd->add_option("--in", fit_in, "input matrix")->required();
  fit_cmd->add_option("--q", fit_q, "subspace dimension")->required();
  auto* fit_l2_opt = fit_cmd->add_option("--lambda2", fit_lambda2_value, "fixed lambda2");
  fit_cmd->add_flag("--path", fit_use_path, "sweep a lambda2 grid with warm starts");
  fit_cmd->add_flag("--cold-parallel", fit_cold, "cold-start grid points (parallel)");
  fit_cmd->add_option("--grid", fit_grid, "grid size")->capture_default_str();
  fit_cmd->add_option("--eps", fit_eps, "lambda_min / lambda_max")->capture_default_str();
  fit_cmd->add_option("--lmax", fit_lmax, "lambda_max or 'auto'")->capture_default_str();
  fit_cmd->add_option("--reg", fit_reg, "row|entry")->check(CLI::IsMember({"row", "entry"}));
  fit_cmd->add_option("--select", fit_select, "count:K | noise:sigma2=V | noise:cov=FILE");
  fit_cmd->add_option("--refine", fit_refine, "reweighted refinement rounds")
      ->capture_default_str();
  fit_cmd->add_option("--delta", fit_delta, "refinement stabilizer")->capture_default_str();
  auto* fit_l0_opt = fit_cmd->add_option("--lambda0", fit_lambda0_value,
                                         "refinement penalty level (default lambda2*delta)");
  fit_cmd->add_option("--truth-l", fit_truth_l, "true low-rank matrix for err metric");
  fit_cmd->add_option("--report", fit_report, "write JSON report here");
  fit_cmd->add_option("--path-out", fit_path_out, "write the path table here");
  fit_cmd->add_option("--norms-out", fit_norms_out, "write outlier norms here");
  fit_cmd->add_option("--max-iters", fit_max_iters)->capture_default_str();
  fit_cmd->add_option("--tol", fit_rel_tol)->capture_default_str();
  fit_cmd->add_option("--seed", fit_seed)->capture_default_str();
  fit_cmd->add_flag("--force", fit_force, "overwrite outputs");

  // --- rank ---------------------------------------------------------------
  std::string rank_in, rank_reg = "row", rank_report;
  Index rank_qbar = 1;
  double rank_lstar = 1.0, rank_lambda2 = 1.0, rank_rel_tol = 1e-9;
  int rank_max_iters = 500, rank_spcp_iters = 50000;
  std::uint64_t rank_seed = 0;
  bool rank_certify = false, rank_oracle = false, rank_no_mean = false, rank_force = false;
  auto* rank_cmd = app.add_subcommand("rank", "Frobenius-regularized fit with rank control");
  rank_cmd->add_option("--in", rank_in)->required();
  rank_cmd->add_option("--qbar", rank_qbar, "factor width upper bound")->required();
  rank_cmd->add_option("--lstar", rank_lstar, "nuclear-surrogate weight")->required();
  rank_cmd->add_option("--lambda2", rank_lambda2)->required();
  rank_cmd->add_option("--reg", rank_reg, "row|entry")->check(CLI::IsMember({"row", "entry"}));
  rank_cmd->add_flag("--certify", rank_certify, "check the optimality certificate");
  rank_cmd->add_flag("--oracle-spcp", rank_oracle, "cross-check against the convex oracle");
  rank_cmd->add_flag("--no-mean", rank_no_mean, "pin the mean to zero");
  rank_cmd->add_option("--spcp-iters", rank_spcp_iters)->capture_default_str();
  rank_cmd->add_option("--report", rank_report);
  rank_cmd->add_option("--max-iters", rank_max_iters)->capture_default_str();
  rank_cmd->add_option("--tol", rank_rel_tol)->capture_default_str();
  rank_cmd->add_option("--seed", rank_seed)->capture_default_str();
  rank_cmd->add_flag("--force", rank_force);

  // --- track --------------------------------------------------------------
  std::string track_in, track_lambda2 = "auto", track_select, track_truth, track_metrics;
  std::string track_report;
  Index track_q = 1, track_n0 = 100;
  double track_beta = 0.99, track_rel_tol = 1e-9;
  int track_max_iters = 300, track_reorth = 0;
  std::uint64_t track_seed = 0;
  bool track_ablate = false, track_force = false;
  auto* track_cmd = app.add_subcommand("track", "online robust subspace tracking");
  track_cmd->add_option("--in", track_in, "stream matrix, one observation per row")
      ->required();
  track_cmd->add_option("--q", track_q)->required();
  track_cmd->add_option("--init", track_n0, "initialization rows")->capture_default_str();
  track_cmd->add_option("--beta", track_beta, "forgetting factor")->capture_default_str();
  track_cmd->add_option("--lambda2", track_lambda2, "value or 'auto'")->capture_default_str();
  track_cmd->add_option("--select", track_select, "selector for auto mode");
  track_cmd->add_option("--truth", track_truth, "true subspace for angle metrics");
  track_cmd->add_option("--metrics", track_metrics, "per-step metrics CSV");
  track_cmd->add_flag("--ablate-nonrobust", track_ablate, "also run the lambda2=inf twin");
  track_cmd->add_option("--reorth-every", track_reorth)->capture_default_str();
  track_cmd->add_option("--report", track_report);
  track_cmd->add_option("--max-iters", track_max_iters)->capture_default_str();
  track_cmd->add_option("--tol", track_rel_tol)->capture_default_str();
  track_cmd->add_option("--seed", track_seed)->capture_default_str();
  track_cmd->add_flag("--force", track_force);

  // --- kpca ---------------------------------------------------------------
  std::string kpca_gram, kpca_in, kpca_edges, kpca_ari, kpca_labels_out, kpca_gram_out;
  std::string kpca_report;
  Index kpca_qbar = 2;
  double kpca_lstar = 1.0, kpca_lambda2 = 1.0, kpca_rel_tol = 1e-9;
  int kpca_cluster = 0, kpca_max_iters = 300;
  std::uint64_t kpca_seed = 0;
  bool kpca_keep_outliers = false, kpca_force = false;
  auto* kpca_cmd = app.add_subcommand("kpca", "kernelized robust fit and clustering");
  kpca_cmd->add_option("--gram", kpca_gram, "rbf:c=V | graph:auto | graph:zeta=V | file:PATH")
      ->required();
  kpca_cmd->add_option("--in", kpca_in, "input points (rbf mode)");
  kpca_cmd->add_option("--edges", kpca_edges, "edge-pair file (graph mode)");
  kpca_cmd->add_option("--qbar", kpca_qbar)->required();
  kpca_cmd->add_option("--lstar", kpca_lstar)->required();
  kpca_cmd->add_option("--lambda2", kpca_lambda2)->required();
  kpca_cmd->add_option("--cluster", kpca_cluster, "k-means cluster count (0 = off)")
      ->capture_default_str();
  kpca_cmd->add_flag("--keep-outliers", kpca_keep_outliers,
                     "keep flagged rows in the clustering");
  kpca_cmd->add_option("--ari", kpca_ari, "true labels (one per row, -1 for outliers)");
  kpca_cmd->add_option("--labels-out", kpca_labels_out);
  kpca_cmd->add_option("--gram-out", kpca_gram_out, "export the built Gram matrix");
  kpca_cmd->add_option("--report", kpca_report);
  kpca_cmd->add_option("--max-iters", kpca_max_iters)->capture_default_str();
  kpca_cmd->add_option("--tol", kpca_rel_tol)->capture_default_str();
  kpca_cmd->add_option("--seed", kpca_seed)->capture_default_str();
  kpca_cmd->add_flag("--force", kpca_force);

  try {
    app.parse(argc, argv);

    if (gen_lowrank->parsed()) {
      synth.seed = gen_common.seed;
      return run_gen_lowrank(gen_common, synth);
    }
    if (gen_circles->parsed())
      return run_gen_circles(gen_common, circle_counts, circle_radii, circle_noise_var,
                             circle_outliers, circle_box);
    if (gen_irt->parsed())
      return run_gen_irt(gen_common, irt_n, irt_p, irt_q, irt_aberrant, irt_rate);

    if (fit_cmd->parsed()) {
      std::optional<double> l2;
      if (fit_l2_opt->count() > 0) l2 = fit_lambda2_value;
      std::optional<double> l0;
      if (fit_l0_opt->count() > 0) l0 = fit_lambda0_value;
      return run_fit(fit_in, fit_q, l2, fit_use_path, fit_grid, fit_eps, fit_lmax, fit_reg,
                     fit_select, fit_refine, fit_delta, l0, fit_truth_l, fit_report,
                     fit_path_out, fit_norms_out, fit_max_iters, fit_rel_tol, fit_seed,
                     fit_force, fit_cold, command);
    }
    if (rank_cmd->parsed())
      return run_rank(rank_in, rank_qbar, rank_lstar, rank_lambda2, rank_reg, rank_certify,
                      rank_oracle, rank_no_mean, rank_spcp_iters, rank_report,
                      rank_max_iters, rank_rel_tol, rank_seed, rank_force, command);
    if (track_cmd->parsed())
      return run_track(track_in, track_q, track_n0, track_beta, track_lambda2, track_select,
                       track_truth, track_metrics, track_ablate, track_reorth, track_report,
                       track_max_iters, track_rel_tol, track_seed, track_force, command);
    if (kpca_cmd->parsed())
      return run_kpca(kpca_gram, kpca_in, kpca_edges, kpca_qbar, kpca_lstar, kpca_lambda2,
                      kpca_cluster, kpca_keep_outliers, kpca_ari, kpca_labels_out,
                      kpca_gram_out, kpca_report, kpca_max_iters, kpca_rel_tol, kpca_seed,
                      kpca_force, command);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::logic_error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
