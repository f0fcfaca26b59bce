/// gmje-cli: experiment harness for the GMJE library.
///
/// Subcommands: gen-data, fit, predict, sample, smc-sim, diagnostics.
/// Every run is deterministic given its flags/config file and writes its
/// fully-resolved configuration alongside the outputs. Exit codes: 0 success,
/// 1 usage error, 2 contract failure (library invariant violated).

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gmje/gaussian.hpp"
#include "gmje/gje.hpp"
#include "gmje/gng.hpp"
#include "gmje/mixture.hpp"
#include "gmje/neural.hpp"
#include "gmje/rng.hpp"
#include "gmje/serialize.hpp"
#include "gmje/smc.hpp"
#include "gmje/synthdata.hpp"

namespace fs = std::filesystem;
using namespace gmje;

namespace {

// ---------------------------------------------------------------- utilities

void write_resolved_config(CLI::App* sub, const std::string& out_dir) {
  std::ofstream out(out_dir + "/resolved_config.ini");
  out << sub->config_to_str(/*default_also=*/true, /*write_description=*/false);
}

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << std::setprecision(17);
  return out;
}

SyntheticDataset::Kind parse_kind(const std::string& name) {
  if (name == "a" || name == "A") return SyntheticDataset::Kind::A;
  if (name == "b" || name == "B") return SyntheticDataset::Kind::B;
  throw CLI::ValidationError("dataset must be 'a' or 'b'");
}

/// Loads a gen-data output directory (dataset.csv + metadata.json).
SyntheticDataset load_dataset(const std::string& data_dir) {
  json meta = read_json(data_dir + "/metadata.json");
  SyntheticDataset::Kind kind = parse_kind(meta.at("dataset").get<std::string>());
  return read_dataset_csv(data_dir + "/dataset.csv", kind, meta.at("noise").get<double>(),
                          meta.at("seed").get<std::uint64_t>());
}

/// Conditional mixture parameters flattened for CSV output.
struct GridRow {
  double x;
  std::vector<double> gamma, mu, sigma;
  double mean_total, var_within, var_between, var_total;
};

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows, int k) {
  std::ofstream out = open_csv(path);
  out << "x";
  for (int j = 0; j < k; ++j) out << ",gamma_" << j;
  for (int j = 0; j < k; ++j) out << ",mu_" << j;
  for (int j = 0; j < k; ++j) out << ",sigma_" << j;
  out << ",mean_total,var_within,var_between,var_total\n";
  for (const GridRow& r : rows) {
    out << r.x;
    for (double v : r.gamma) out << "," << v;
    for (double v : r.mu) out << "," << v;
    for (double v : r.sigma) out << "," << v;
    out << "," << r.mean_total << "," << r.var_within << "," << r.var_between << ","
        << r.var_total << "\n";
  }
}

GridRow collapse_conditional(double x, const ConditionalMixture& cm) {
  GridRow row;
  row.x = x;
  auto [mu_total, cov_total] = total_variance(cm);
  row.mean_total = mu_total(0);
  row.var_total = cov_total(0, 0);
  row.var_within = 0.0;
  for (int j = 0; j < cm.k(); ++j) {
    row.gamma.push_back(cm.responsibilities(j));
    row.mu.push_back(cm.cond_means[j](0));
    row.sigma.push_back(std::sqrt(cm.cond_covs[j](0, 0)));
    row.var_within += cm.responsibilities(j) * cm.cond_covs[j](0, 0);
  }
  row.var_between = row.var_total - row.var_within;
  return row;
}

/// Shared covariance for a prototype graph from responsibility-weighted
/// residuals: hard-assignment residual covariance, then three soft passes.
JointMixture mixture_from_prototypes(const MatrixXd& protos, const MatrixXd& data, int d_c) {
  const Eigen::Index k = protos.rows(), n = data.rows(), d = data.cols();
  MatrixXd cov = MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    double best_d2 = (data.row(i) - protos.row(0)).squaredNorm();
    for (Eigen::Index j = 1; j < k; ++j) {
      double d2 = (data.row(i) - protos.row(j)).squaredNorm();
      if (d2 < best_d2) best_d2 = d2, best = j;
    }
    VectorXd resid = (data.row(i) - protos.row(best)).transpose();
    cov += resid * resid.transpose();
  }
  cov = cov / double(n) + 1e-6 * MatrixXd::Identity(d, d);
  VectorXd weights = VectorXd::Constant(k, 1.0 / double(k));

  for (int pass = 0; pass < 3; ++pass) {
    Eigen::LLT<MatrixXd> llt = chol_auto(cov);
    MatrixXd resp(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      VectorXd logits(k);
      for (Eigen::Index j = 0; j < k; ++j) {
        VectorXd diff = (data.row(i) - protos.row(j)).transpose();
        logits(j) = std::log(weights(j)) - 0.5 * llt.solve(diff).dot(diff);
      }
      double mx = logits.maxCoeff();
      VectorXd p = (logits.array() - mx).exp();
      resp.row(i) = (p / p.sum()).transpose();
    }
    weights = resp.colwise().mean().transpose();
    MatrixXd acc = MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        VectorXd resid = (data.row(i) - protos.row(j)).transpose();
        acc += resp(i, j) * (resid * resid.transpose());
      }
    }
    cov = acc / double(n) + 1e-6 * MatrixXd::Identity(d, d);
  }

  std::vector<JointGaussian> comps;
  for (Eigen::Index j = 0; j < k; ++j) {
    VectorXd mean = protos.row(j).transpose();
    comps.emplace_back(mean.head(d_c), mean.tail(d - d_c), cov.topLeftCorner(d_c, d_c),
                       cov.topRightCorner(d_c, d - d_c), cov.bottomLeftCorner(d - d_c, d_c),
                       cov.bottomRightCorner(d - d_c, d - d_c));
  }
  return JointMixture(weights, comps);
}

// --------------------------------------------------------------- subcommands

struct GenDataArgs {
  std::string dataset = "a";
  int n = 3000;
  double noise = 0.05;
  std::uint64_t seed = 111;
  std::string out = "out/gen-data";
};

int cmd_gen_data(const GenDataArgs& a, CLI::App* sub) {
  fs::create_directories(a.out);
  CounterRng rng(a.seed);
  SyntheticDataset::Kind kind = parse_kind(a.dataset);
  SyntheticDataset data = (kind == SyntheticDataset::Kind::A)
                              ? gen_dataset_a(a.n, a.noise, rng)
                              : gen_dataset_b(a.n, a.noise, rng);
  write_dataset_csv(data, a.out + "/dataset.csv");
  json meta = {{"dataset", a.dataset}, {"n", a.n}, {"noise", a.noise}, {"seed", a.seed}};
  write_json(meta, a.out + "/metadata.json");
  write_resolved_config(sub, a.out);
  std::cout << "wrote " << a.out << "/dataset.csv (" << a.n << " rows)\n";
  return 0;
}

struct FitArgs {
  std::string model;
  std::string data = "out/gen-data";
  std::string out = "out/fit";
  std::uint64_t seed = 111;
  int epochs = 1200;
  double lr = 1e-2;
  int hidden = 64;
  int k = 3;
  double sigma_floor = 1e-5;
  double length_scale = 0.5;
  double noise_level = 0.1;
  int em_max_iters = 200;
  double em_tol = 1e-7;
  int gng_steps = 30000;
};

void write_curve(const std::string& path, const char* value_name,
                 const std::vector<double>& trace) {
  std::ofstream out = open_csv(path);
  out << "iteration," << value_name << "\n";
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << "," << trace[i] << "\n";
}

int cmd_fit(const FitArgs& a, CLI::App* sub) {
  fs::create_directories(a.out);
  SyntheticDataset data = load_dataset(a.data);
  json model_file;
  model_file["variant"] = a.model;

  if (a.model == "jepa-mse") {
    TrainConfig cfg{a.epochs, a.lr, a.seed, a.hidden};
    std::vector<double> trace;
    Mlp net = jepa_mse_train(data.x_c, data.x_t, cfg, &trace);
    model_file["mlp"] = mlp_to_json(net);
    write_curve(a.out + "/training_curve.csv", "mse", trace);
  } else if (a.model == "gje-dual-rbf") {
    BatchEmbeddings batch(data.x_c, data.x_t);
    KernelSpec kernel = KernelSpec::rbf(a.length_scale, a.noise_level);
    double nll = dual_nll(batch, kernel, 1e-8);
    model_file["length_scale"] = a.length_scale;
    model_file["noise_level"] = a.noise_level;
    model_file["x_c"] = vector_to_json(data.x_c);
    model_file["x_t"] = vector_to_json(data.x_t);
    write_curve(a.out + "/training_curve.csv", "dual_nll", {nll});
  } else if (a.model == "gmje-em-1" || a.model == "gmje-em-3") {
    int k = (a.model == "gmje-em-1") ? 1 : a.k;
    MatrixXd joint(data.n(), 2);
    joint.col(0) = data.x_c;
    joint.col(1) = data.x_t;
    CounterRng rng(a.seed);
    std::vector<double> trace;
    JointMixture mix = em_fit_with_trace(joint, k, a.em_max_iters, a.em_tol, rng, 1, &trace);
    model_file["mixture"] = mixture_to_json(mix);
    write_curve(a.out + "/training_curve.csv", "avg_loglik", trace);
    double cov_trace = 0.0;
    for (const auto& c : mix.components) cov_trace += c.full_cov().trace();
    std::cout << "fitted K=" << k << ", mean covariance trace "
              << cov_trace / mix.k() << "\n";
  } else if (a.model == "gmje-gng") {
    CounterRng rng(a.seed);
    MatrixXd joint(data.n(), 2);
    joint.col(0) = data.x_c;
    joint.col(1) = data.x_t;
    Eigen::Index second = 1;
    while ((joint.row(second) - joint.row(0)).norm() == 0.0) ++second;
    GngGraph graph = GngGraph::init(joint.row(0).transpose(), joint.row(second).transpose());
    GngConfig cfg;  // experiment defaults
    std::vector<double> trace;
    double ema_qe = 0.0;
    for (int t = 0; t < a.gng_steps; ++t) {
      Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_index(joint.rows()));
      graph.step(joint.row(i).transpose(), cfg);
      ema_qe = (t == 0) ? graph.last_quantization_error()
                        : 0.99 * ema_qe + 0.01 * graph.last_quantization_error();
      if ((t + 1) % 100 == 0) trace.push_back(ema_qe);
    }
    JointMixture mix = mixture_from_prototypes(graph.extract_prototypes(), joint, 1);
    model_file["graph"] = gng_to_json(graph);
    model_file["mixture"] = mixture_to_json(mix);
    write_curve(a.out + "/training_curve.csv", "ema_quantization_error", trace);
  } else if (a.model == "gmje-mdn") {
    CounterRng rng(a.seed);
    MdnModel model = MdnModel::init(1, 1, a.hidden, a.k, a.sigma_floor, rng);
    TrainConfig cfg{a.epochs, a.lr, a.seed, a.hidden};
    std::vector<double> trace;
    mdn_train(model, data.x_c, data.x_t, cfg, MarginalMode::objective, &trace);
    model_file["mdn"] = mdn_to_json(model);
    write_curve(a.out + "/training_curve.csv", "objective", trace);
  } else {
    throw CLI::ValidationError("unknown model variant: " + a.model);
  }

  write_json(model_file, a.out + "/model.json");
  write_resolved_config(sub, a.out);
  std::cout << "wrote " << a.out << "/model.json\n";
  return 0;
}

struct PredictArgs {
  std::string model_file = "out/fit/model.json";
  int grid = 300;
  std::string out = "out/predict";
};

int cmd_predict(const PredictArgs& a, CLI::App* sub) {
  fs::create_directories(a.out);
  json model = read_json(a.model_file);
  std::string variant = model.at("variant").get<std::string>();
  VectorXd grid = eval_grid(a.grid);

  if (variant == "jepa-mse") {
    Mlp net = mlp_from_json(model.at("mlp"));
    auto [pred, cache] = mlp_forward(net, MatrixXd(grid));
    std::ofstream out = open_csv(a.out + "/predictions.csv");
    out << "x,mean\n";
    for (Eigen::Index i = 0; i < grid.size(); ++i) out << grid(i) << "," << pred(i, 0) << "\n";
  } else if (variant == "gje-dual-rbf") {
    VectorXd x_c = vector_from_json(model.at("x_c"));
    VectorXd x_t = vector_from_json(model.at("x_t"));
    KernelSpec kernel = KernelSpec::rbf(model.at("length_scale").get<double>(),
                                        model.at("noise_level").get<double>());
    // One factorization of the training Gram, reused across the grid.
    MatrixXd x_mat(x_c.size(), 1);
    x_mat.col(0) = x_c;
    MatrixXd k_train = gram(x_mat, x_mat, kernel);
    k_train.diagonal().array() += kernel.noise + 1e-8;
    Eigen::LLT<MatrixXd> llt = chol_auto(k_train);
    VectorXd alpha = llt.solve(x_t);
    std::ofstream out = open_csv(a.out + "/predictions.csv");
    out << "x,mean,std\n";
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      VectorXd star = VectorXd::Constant(1, grid(i));
      VectorXd k_star(x_c.size());
      for (Eigen::Index j = 0; j < x_c.size(); ++j) {
        k_star(j) = kernel_eval(star, x_mat.row(j).transpose(), kernel);
      }
      double mean = k_star.dot(alpha);
      double var = kernel_eval(star, star, kernel) - k_star.dot(llt.solve(k_star));
      out << grid(i) << "," << mean << "," << std::sqrt(std::max(0.0, var)) << "\n";
    }
  } else if (variant == "gmje-em-1" || variant == "gmje-em-3" || variant == "gmje-gng") {
    JointMixture mix = mixture_from_json(model.at("mixture"));
    std::vector<GridRow> rows;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      ConditionalMixture cm = conditional_mixture(mix, VectorXd::Constant(1, grid(i)));
      rows.push_back(collapse_conditional(grid(i), cm));
    }
    write_grid_csv(a.out + "/predictions.csv", rows, mix.k());
  } else if (variant == "gmje-mdn") {
    MdnModel mdn = mdn_from_json(model.at("mdn"));
    MdnParams params = mdn_forward(mdn.trunk, mdn.head, MatrixXd(grid));
    int k = mdn.head.component_count;
    std::vector<GridRow> rows;
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
      ConditionalMixture cm;
      cm.responsibilities = params.alpha.row(i).transpose();
      for (int j = 0; j < k; ++j) {
        cm.cond_means.push_back(VectorXd::Constant(1, params.mu(i, j)));
        cm.cond_covs.push_back(
            MatrixXd::Constant(1, 1, params.sigma(i, j) * params.sigma(i, j)));
      }
      rows.push_back(collapse_conditional(grid(i), cm));
    }
    write_grid_csv(a.out + "/predictions.csv", rows, k);
  } else {
    throw CLI::ValidationError("model file has unknown variant: " + variant);
  }

  write_resolved_config(sub, a.out);
  std::cout << "wrote " << a.out << "/predictions.csv (" << a.grid << " rows)\n";
  return 0;
}

struct SampleArgs {
  std::string model_file = "out/fit/model.json";
  int n = 5000;
  std::uint64_t seed = 111;
  std::string out = "out/sample";
};

int cmd_sample(const SampleArgs& a, CLI::App* sub) {
  fs::create_directories(a.out);
  json model = read_json(a.model_file);
  std::string variant = model.at("variant").get<std::string>();
  if (!model.contains("mixture")) {
    throw CLI::ValidationError("sample requires a mixture-based model (gmje-em-1, gmje-em-3, "
                               "gmje-gng); got variant: " + variant);
  }
  JointMixture mix = mixture_from_json(model.at("mixture"));
  std::vector<Gaussian> joints;
  for (const auto& c : mix.components) joints.emplace_back(c.full_mean(), c.full_cov());
  CounterRng rng(a.seed);
  auto [labels, points] = sample_mixture_labeled(mix.weights, joints, a.n, rng);

  std::ofstream out = open_csv(a.out + "/samples.csv");
  out << "x_c,x_t,component\n";
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = 0; j < points.cols(); ++j) out << points(i, j) << ",";
    out << labels[i] << "\n";
  }
  write_resolved_config(sub, a.out);
  std::cout << "wrote " << a.out << "/samples.csv (" << a.n << " rows)\n";
  return 0;
}

struct SmcSimArgs {
  int classes = 10;
  int dim = 16;
  double rare_freq = 0.01;
  double cluster_sigma = 0.1;
  double query_sigma = 0.1;
  int batch = 32;
  int steps = 50000;
  int m = 256;
  double tau = 0.1;
  std::string scheme = "systematic";
  std::uint64_t seed = 111;
  std::string out = "out/smc-sim";
};

int cmd_smc_sim(const SmcSimArgs& a, CLI::App* sub) {
  fs::create_directories(a.out);
  StreamConfig stream;
  stream.n_classes = a.classes;
  stream.dim = a.dim;
  stream.rare_freq = a.rare_freq;
  stream.cluster_sigma = a.cluster_sigma;
  stream.query_sigma = a.query_sigma;
  stream.batch = a.batch;
  stream.steps = a.steps;
  BankConfig bank;
  bank.m = a.m;
  bank.tau = a.tau;
  if (a.scheme == "systematic") {
    bank.scheme = ResampleScheme::systematic;
  } else if (a.scheme == "multinomial") {
    bank.scheme = ResampleScheme::multinomial;
  } else {
    throw CLI::ValidationError("scheme must be systematic or multinomial");
  }

  CounterRng rng(a.seed);
  std::vector<SmcStepMetrics> metrics = smc_simulation(stream, bank, rng);

  std::ofstream out = open_csv(a.out + "/metrics.csv");
  out << "step,smc_ess_pool,smc_ess_post,smc_rare_count,fifo_rare_count";
  for (int c = 0; c < a.classes; ++c) out << ",smc_class_" << c;
  for (int c = 0; c < a.classes; ++c) out << ",fifo_class_" << c;
  out << "\n";
  double smc_rare_avg = 0.0, fifo_rare_avg = 0.0;
  for (const auto& row : metrics) {
    out << row.step << "," << row.smc_ess_pool << "," << row.smc_ess_post << ","
        << row.smc_rare_count << "," << row.fifo_rare_count;
    for (int c : row.smc_class_counts) out << "," << c;
    for (int c : row.fifo_class_counts) out << "," << c;
    out << "\n";
    smc_rare_avg += row.smc_rare_count;
    fifo_rare_avg += row.fifo_rare_count;
  }
  smc_rare_avg /= double(metrics.size()) * a.m;
  fifo_rare_avg /= double(metrics.size()) * a.m;
  json summary = {{"smc_rare_occupancy", smc_rare_avg},
                  {"fifo_rare_occupancy", fifo_rare_avg},
                  {"steps", a.steps}};
  write_json(summary, a.out + "/summary.json");
  write_resolved_config(sub, a.out);
  std::cout << "time-averaged rare-class occupancy: smc " << smc_rare_avg << ", fifo "
            << fifo_rare_avg << "\n";
  return 0;
}

struct DiagArgs {
  std::string out = "out/diagnostics";
  std::uint64_t seed = 2026;
};

int cmd_diagnostics(const DiagArgs& a, CLI::App* sub) {
  fs::create_directories(a.out);
  CounterRng rng(a.seed);
  json report;
  bool all_pass = true;
  auto record = [&](const char* name, double value, double threshold) {
    bool pass = value <= threshold;
    report[name] = {{"value", value}, {"threshold", threshold}, {"pass", pass}};
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << value
              << " (threshold " << threshold << ")\n";
    all_pass = all_pass && pass;
  };
  auto random_batch = [&](int n, int d) {
    MatrixXd z(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) z(i, j) = rng.normal();
    return z;
  };

  // Data-fit degeneracy: the Mahalanobis term against the batch's own
  // covariance is the constant d/2.
  double trap_resid = 0.0;
  for (int t = 0; t < 20; ++t) {
    BatchEmbeddings batch(random_batch(64, 4), random_batch(64, 4));
    trap_resid = std::max(trap_resid, std::abs(trace_trap_datafit(batch) - 4.0));
  }
  record("trace_trap_residual", trap_resid, 1e-8);

  // Primal-dual equivalence of the linear-kernel objective.
  double pd_resid = 0.0;
  for (int t = 0; t < 20; ++t) {
    BatchEmbeddings batch(random_batch(64, 4), random_batch(64, 4));
    pd_resid = std::max(pd_resid, primal_dual_residual(batch, 1e-3));
  }
  record("primal_dual_residual", pd_resid, 1e-6);

  // Woodbury / log-det identities against a dense N x N evaluation.
  double rff_resid = 0.0;
  for (auto [n, d_feat] : {std::pair{64, 16}, std::pair{256, 32}}) {
    MatrixXd zc = random_batch(n, 2), zt = random_batch(n, 3);
    RffProjection proj = RffProjection::make(2, d_feat, 1.0, rng);
    MatrixXd psi = rff_features(zc, proj);
    double eps = 1e-2;
    MatrixXd k_dense = psi * psi.transpose() + eps * MatrixXd::Identity(n, n);
    Eigen::LLT<MatrixXd> llt(k_dense);
    double dense = 0.5 * (zt.transpose() * llt.solve(zt)).trace();
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    dense += 0.5 * zt.cols() * logdet;
    rff_resid = std::max(rff_resid, std::abs(rff_dual_nll(psi, zt, eps) - dense));
  }
  record("rff_identity_residual", rff_resid, 1e-8);

  // Memory-bank conditional NLL vs the contrastive value: their difference
  // must be a constant across pairs.
  {
    int d = 32, m = 16;
    double tau = 0.01;
    std::vector<double> gaps;
    for (int t = 0; t < 50; ++t) {
      MatrixXd bank(m, d);
      for (int i = 0; i < m; ++i) {
        VectorXd v(d);
        for (int j = 0; j < d; ++j) v(j) = rng.normal();
        bank.row(i) = v.normalized().transpose();
      }
      VectorXd zc(d);
      for (int j = 0; j < d; ++j) zc(j) = rng.normal();
      zc.normalize();
      VectorXd zt = bank.row(0).transpose();
      VectorXd c = bank * zc, tt = bank * zt;
      auto lse = [](const VectorXd& v) {
        double mx = v.maxCoeff();
        return mx + std::log((v.array() - mx).exp().sum());
      };
      double exact = -lse((c + tt) / tau) + lse(c / tau) + 1.0 / tau +
                     0.5 * d * std::log(2.0 * M_PI * tau);
      gaps.push_back(exact - dam_conditional_nll(zc, zt, bank, tau));
    }
    double lo = gaps[0], hi = gaps[0];
    for (double g : gaps) lo = std::min(lo, g), hi = std::max(hi, g);
    record("infonce_bridge_spread", hi - lo, 1e-6);
  }

  // Analytic vs central finite-difference gradients on a small MDN.
  {
    CounterRng nrng(a.seed + 1);
    MdnModel model = MdnModel::init(2, 1, 8, 2, 1e-5, nrng);
    MatrixXd zc = random_batch(16, 2), zt = random_batch(16, 1);
    EmaCovariance ema{MatrixXd::Identity(2, 2), 0.99};
    auto [trunk_g, head_g] = mdn_loss_grads(model, zc, zt);
    double max_rel = 0.0, h = 1e-5;
    auto probe = [&](Mlp& net, const MlpGrads& grads) {
      for (std::size_t l = 0; l < net.weights.size(); ++l) {
        for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
          for (Eigen::Index cc = 0; cc < net.weights[l].cols(); ++cc) {
            double saved = net.weights[l](r, cc);
            net.weights[l](r, cc) = saved + h;
            double up = gmje_mdn_loss(model, zc, zt, ema);
            net.weights[l](r, cc) = saved - h;
            double dn = gmje_mdn_loss(model, zc, zt, ema);
            net.weights[l](r, cc) = saved;
            double fd = (up - dn) / (2.0 * h);
            double an = grads.d_weights[l](r, cc);
            max_rel = std::max(max_rel,
                               std::abs(fd - an) / std::max(1e-6, std::abs(fd)));
          }
        }
      }
    };
    probe(model.trunk, trunk_g);
    probe(model.head.linear, head_g);
    record("mdn_gradient_max_rel_error", max_rel, 1e-4);
  }

  // Error-path check: an indefinite covariance must surface
  // NotPositiveDefinite with context.
  {
    bool surfaced = false;
    std::string message;
    try {
      MatrixXd bad(2, 2);
      bad << 1.0, 2.0, 2.0, 1.0;
      chol_auto(bad);
    } catch (const NotPositiveDefinite& e) {
      surfaced = true;
      message = e.what();
    }
    report["not_positive_definite_surfaced"] = {{"pass", surfaced}, {"message", message}};
    std::cout << (surfaced ? "PASS " : "FAIL ") << "not_positive_definite_surfaced\n";
    all_pass = all_pass && surfaced;
  }

  report["all_pass"] = all_pass;
  write_json(report, a.out + "/report.json");
  write_resolved_config(sub, a.out);
  return all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GMJE experiment harness: synthetic multi-modal alignment, kernel/feature "
               "identities, mixture fitting, and particle-bank simulation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenDataArgs gen;
  CLI::App* gen_sub = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_sub->set_config("--config");
  gen_sub->add_option("--dataset", gen.dataset, "Dataset kind: a (separated) or b (intersecting)")
      ->check(CLI::IsMember({"a", "b"}));
  gen_sub->add_option("--n", gen.n, "Number of (x_c, x_t) pairs")->check(CLI::PositiveNumber);
  gen_sub->add_option("--noise", gen.noise, "Target observation noise sigma")
      ->check(CLI::NonNegativeNumber);
  gen_sub->add_option("--seed", gen.seed, "RNG seed");
  gen_sub->add_option("--out", gen.out, "Output directory");

  FitArgs fit;
  CLI::App* fit_sub = app.add_subcommand("fit", "Fit one model variant to a dataset");
  fit_sub->set_config("--config");
  fit_sub->add_option("--model", fit.model, "Variant")
      ->required()
      ->check(CLI::IsMember(
          {"jepa-mse", "gje-dual-rbf", "gmje-em-1", "gmje-em-3", "gmje-gng", "gmje-mdn"}));
  fit_sub->add_option("--data", fit.data, "gen-data output directory");
  fit_sub->add_option("--out", fit.out, "Output directory");
  fit_sub->add_option("--seed", fit.seed, "RNG seed");
  fit_sub->add_option("--epochs", fit.epochs, "Training epochs (neural variants)");
  fit_sub->add_option("--lr", fit.lr, "Adam learning rate");
  fit_sub->add_option("--hidden", fit.hidden, "Hidden width");
  fit_sub->add_option("--k", fit.k, "Mixture components (em-3 / mdn)");
  fit_sub->add_option("--sigma-floor", fit.sigma_floor, "MDN standard-deviation floor");
  fit_sub->add_option("--length-scale", fit.length_scale, "RBF length scale (dual baseline)");
  fit_sub->add_option("--noise-level", fit.noise_level, "RBF noise level (dual baseline)");
  fit_sub->add_option("--em-max-iters", fit.em_max_iters, "EM iteration cap");
  fit_sub->add_option("--em-tol", fit.em_tol, "EM relative log-likelihood tolerance");
  fit_sub->add_option("--gng-steps", fit.gng_steps, "Online adaptation steps");

  PredictArgs pred;
  CLI::App* pred_sub = app.add_subcommand("predict", "Evaluate a fitted model on the grid");
  pred_sub->set_config("--config");
  pred_sub->add_option("--model-file", pred.model_file, "Fitted model JSON");
  pred_sub->add_option("--grid", pred.grid, "Grid point count on [-1, 1]")
      ->check(CLI::Range(2, 1000000));
  pred_sub->add_option("--out", pred.out, "Output directory");

  SampleArgs samp;
  CLI::App* samp_sub = app.add_subcommand("sample", "Draw from a fitted joint mixture");
  samp_sub->set_config("--config");
  samp_sub->add_option("--model-file", samp.model_file, "Fitted model JSON");
  samp_sub->add_option("--n", samp.n, "Sample count")->check(CLI::PositiveNumber);
  samp_sub->add_option("--seed", samp.seed, "RNG seed");
  samp_sub->add_option("--out", samp.out, "Output directory");

  SmcSimArgs smc;
  CLI::App* smc_sub =
      app.add_subcommand("smc-sim", "Paired particle-bank vs FIFO stream simulation");
  smc_sub->set_config("--config");
  smc_sub->add_option("--classes", smc.classes, "Stream class count");
  smc_sub->add_option("--dim", smc.dim, "Embedding dimension");
  smc_sub->add_option("--rare-freq", smc.rare_freq, "Frequency of class 0");
  smc_sub->add_option("--cluster-sigma", smc.cluster_sigma, "Class cluster spread");
  smc_sub->add_option("--query-sigma", smc.query_sigma, "Query augmentation noise");
  smc_sub->add_option("--batch", smc.batch, "Incoming batch size per step");
  smc_sub->add_option("--steps", smc.steps, "Stream length");
  smc_sub->add_option("--m", smc.m, "Bank size");
  smc_sub->add_option("--tau", smc.tau, "Importance-weight temperature");
  smc_sub->add_option("--scheme", smc.scheme, "Resampling scheme")
      ->check(CLI::IsMember({"systematic", "multinomial"}));
  smc_sub->add_option("--seed", smc.seed, "RNG seed");
  smc_sub->add_option("--out", smc.out, "Output directory");

  DiagArgs diag;
  CLI::App* diag_sub =
      app.add_subcommand("diagnostics", "Run the library's self-check battery");
  diag_sub->set_config("--config");
  diag_sub->add_option("--out", diag.out, "Output directory");
  diag_sub->add_option("--seed", diag.seed, "RNG seed for the random instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen_sub->parsed()) return cmd_gen_data(gen, gen_sub);
    if (fit_sub->parsed()) return cmd_fit(fit, fit_sub);
    if (pred_sub->parsed()) return cmd_predict(pred, pred_sub);
    if (samp_sub->parsed()) return cmd_sample(samp, samp_sub);
    if (smc_sub->parsed()) return cmd_smc_sim(smc, smc_sub);
    if (diag_sub->parsed()) return cmd_diagnostics(diag, diag_sub);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
