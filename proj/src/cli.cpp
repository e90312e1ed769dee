#include "svar/cli.hpp"

#include "svar/em.hpp"
#include "svar/error.hpp"
#include "svar/eval.hpp"
#include "svar/sampling.hpp"
#include "svar/selection.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace svar::cli {

namespace {

MatrixXd mat2(double a, double b, double c, double d) {
  return (MatrixXd(2, 2) << a, b, c, d).finished();
}

std::string format_matrix(const MatrixXd& M, const std::string& indent = "  ") {
  std::string s;
  char buf[64];
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    s += indent + "[";
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
      const double v = std::abs(M(r, c)) < 5e-13 ? 0.0 : M(r, c);
      std::snprintf(buf, sizeof buf, "%s%10.6g", c ? ", " : "", v);
      s += buf;
    }
    s += "]\n";
  }
  return s;
}

std::vector<std::string> string_list(const json& j) {
  if (j.is_string()) return {j.get<std::string>()};
  return j.get<std::vector<std::string>>();
}

std::vector<int> int_list(const json& j) {
  if (j.is_number_integer()) return {j.get<int>()};
  return j.get<std::vector<int>>();
}

std::vector<std::uint64_t> seed_list(const json& config) {
  if (!config.contains("seeds")) return {1};
  const json& j = config.at("seeds");
  if (j.is_number_integer()) return {j.get<std::uint64_t>()};
  auto v = j.get<std::vector<std::uint64_t>>();
  if (v.empty()) throw ArgumentError("seed list must not be empty");
  return v;
}

fs::path out_dir(const json& config) {
  const fs::path dir = config.value("out", std::string("."));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

SvarModel load_model_spec(const json& spec) {
  if (spec.is_object()) return model_from_json(spec);
  const std::string s = spec.get<std::string>();
  try {
    return preset_model(s);
  } catch (const ArgumentError&) {
    return model_from_json(read_json(s));
  }
}

SamplingScheme scheme_from_config(const json& config, int p) {
  if (config.contains("rates")) {
    const auto rates = int_list(config.at("rates"));
    if (static_cast<int>(rates.size()) != p) throw ArgumentError("rates must list one rate per series");
    return mixed_scheme(rates);
  }
  if (config.contains("scheme")) {
    const json& sc = config.at("scheme");
    if (sc.contains("rates")) return scheme_from_config(json{{"rates", sc.at("rates")}}, p);
    return uniform_scheme(p, sc.value("k", 1));
  }
  return uniform_scheme(p, config.value("sampling_k", 1));
}

EmConfig em_config(const json& config) {
  EmConfig c;
  const json em = config.value("em", json::object());
  auto get = [&](const char* key, auto fallback) {
    if (config.contains(key)) return config.at(key).get<decltype(fallback)>();
    return em.value(key, fallback);
  };
  c.max_iterations = get("max_iterations", c.max_iterations);
  c.tolerance = get("tolerance", c.tolerance);
  c.restarts = get("restarts", c.restarts);
  c.components = get("components", c.components);
  c.overrelax = get("overrelax", c.overrelax);
  c.eta_growth = get("eta_growth", c.eta_growth);
  c.eta_max = get("eta_max", c.eta_max);
  c.newton_tolerance = get("newton_tolerance", c.newton_tolerance);
  c.newton_max_steps = get("newton_max_steps", c.newton_max_steps);
  c.inner_cycles = get("inner_cycles", c.inner_cycles);
  c.inner_tolerance = get("inner_tolerance", c.inner_tolerance);
  c.variance_floor = get("variance_floor", c.variance_floor);
  c.assignment_budget = get("assignment_budget", c.assignment_budget);
  c.seed = get("seed", c.seed);
  c.threads = get("threads", 0);
  c.check();
  return c;
}

std::vector<std::string> data_paths(const json& config) {
  if (!config.contains("data")) throw ArgumentError("no data file given (use --data or \"data\")");
  return string_list(config.at("data"));
}

ObservationSet load_observations(const std::string& path) {
  const MaskedSeries series = series_from_csv(read_text(path));
  return decompose(series);
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

}  // namespace

SvarModel preset_model(const std::string& name) {
  const MatrixXd A1 = mat2(0.98, 0.0, 0.2, 0.98);
  const MatrixXd A2 = mat2(0.98, 0.31, -0.31, 0.98);
  const MatrixXd C1 = MatrixXd::Identity(2, 2);
  const MatrixXd C2 = mat2(1.0, 0.0, -0.2, 1.0);
  const std::vector<MixtureSpec> skewed{asymmetric_shock(1.0), asymmetric_shock(-1.0)};
  if (name == "example1")
    return {mat2(0.8, 0.5, 0.0, -0.8), C1, {standard_normal_shock(), standard_normal_shock()}};
  if (name == "a1_c1") return {A1, C1, skewed};
  if (name == "a1_c2") return {A1, C2, skewed};
  if (name == "a2_c1") return {A2, C1, skewed};
  if (name == "a2_c2") return {A2, C2, skewed};
  throw ArgumentError("unknown preset model: " + name);
}

ConfoundDemo demo_confound(int k) {
  ConfoundDemo d;
  const SvarModel model = preset_model("example1");
  d.k = k;
  d.A = model.A;
  d.A_k = matrix_power(model.A, k);
  d.L = build_subsampled_repr(model, k).L;
  d.covariance = subsampled_error_covariance(model, k);
  d.cholesky = d.covariance.llt().matrixL();

  std::ostringstream os;
  os << "True transition A (x2 drives x1 at lag one; C = I, no instantaneous effects):\n"
     << format_matrix(d.A) << "\nSubsampled transition A^" << k << ":\n"
     << format_matrix(d.A_k) << "\nStacked shock loading L = (C, AC, ...):\n"
     << format_matrix(d.L) << "\nSubsampled error covariance L (I kron Lambda) L^T:\n"
     << format_matrix(d.covariance) << "\nLower Cholesky factor of the error covariance:\n"
     << format_matrix(d.cholesky) << '\n';
  const bool lag_gone = std::abs(d.A_k(0, 1)) < 1e-12 && std::abs(d.A_k(1, 0)) < 1e-12;
  os << "Apparent structure at k = " << k << ": "
     << (lag_gone ? "no lagged cross effect" : "lagged cross effects remain")
     << "; instantaneous coupling " << (std::abs(d.cholesky(1, 0)) > 1e-12 ? "present" : "absent")
     << " (Cholesky (2,1) = " << d.cholesky(1, 0) << ").\n"
     << "True structure: lagged effect x2 -> x1, no instantaneous effects.\n";
  d.text = os.str();
  return d;
}

int cmd_demo_confound(std::ostream& out) {
  out << demo_confound(2).text;
  return kOk;
}

int cmd_simulate(const json& config, std::ostream& out) {
  if (!config.contains("model")) throw ArgumentError("simulate needs a model (file, preset or inline)");
  SvarModel model = load_model_spec(config.at("model"));
  const int T = config.value("T", 805);
  if (T < 1) throw ArgumentError("T must be positive");
  const int burn_in = config.value("burn_in", 200);
  double scale = 1.0;
  const bool scaled = config.contains("max_eigenvalue");
  if (scaled) scale = scale_to_spectral_radius(model, config.at("max_eigenvalue").get<double>());
  const SamplingScheme scheme = scheme_from_config(config, model.p());
  const auto seeds = seed_list(config);
  const fs::path dir = out_dir(config);

  const ValidationReport report = validate_model(model);
  for (const auto& v : report.violations) out << "warning: " << v << '\n';

  json files = json::array();
  for (auto seed : seeds) {
    const Trajectory traj = simulate_stationary(model, T, seed, burn_in);
    const MaskedSeries series = observe(scheme, traj);
    const fs::path file = dir / ("data_seed" + std::to_string(seed) + ".csv");
    write_text(file.string(), series_to_csv(series));
    files.push_back(file.filename().string());
    out << "wrote " << file.string() << '\n';
  }
  json meta = {{"T", T},
               {"burn_in", burn_in},
               {"seeds", seeds},
               {"scheme", {{"kind", to_string(scheme.kind)}, {"rates", scheme.rates}}},
               {"k_star", k_star(scheme)},
               {"spectral_radius", spectral_radius(model.A)},
               {"files", files}};
  if (scaled) {
    meta["max_eigenvalue"] = config.at("max_eigenvalue");
    meta["eigen_scale"] = scale;
  }
  write_json((dir / "truth.json").string(), {{"model", model_to_json(model)}, {"metadata", meta}});
  return kOk;
}

int cmd_fit(const json& config, std::ostream& out) {
  EmConfig em = em_config(config);
  const int k = config.contains("k") ? int_list(config.at("k")).front() : 1;
  const fs::path dir = out_dir(config);
  bool all_converged = true;
  for (const auto& path : data_paths(config)) {
    ObservationSet obs = load_observations(path);
    const ModelVariant variant = parse_variant(config.value("variant", std::string("free")), obs.p, k,
                                               em.components);
    if (k > 1) obs = decompose(refine(obs.record, k));
    em.constraint = variant.constraint;
    const FitResult fit = multi_start_fit(obs, em);
    json j = fit_to_json(fit);
    j["variant"] = variant.name;
    j["k"] = k;
    const std::string base = "fit_" + stem(path);
    write_json((dir / (base + ".json")).string(), j);
    write_json((dir / (base + ".timings.json")).string(), fit_timings_json(fit));
    out << path << ": loglik " << format_double(fit.loglik) << " after " << fit.iterations
        << " iterations (restart " << fit.restart << ")" << (fit.converged ? "" : ", NOT converged")
        << '\n';
    all_converged = all_converged && fit.converged;
  }
  return all_converged ? kOk : kNotConverged;
}

int cmd_select(const json& config, std::ostream& out) {
  EmConfig em = em_config(config);
  const std::vector<int> ks = config.contains("k") ? int_list(config.at("k")) : std::vector<int>{1};
  const std::vector<std::string> names = config.contains("variants")
                                             ? string_list(config.at("variants"))
                                             : config.contains("variant")
                                                   ? string_list(config.at("variant"))
                                                   : std::vector<std::string>{"identity", "free"};
  const fs::path dir = out_dir(config);
  bool all_converged = true;
  for (const auto& path : data_paths(config)) {
    const ObservationSet obs = load_observations(path);
    std::vector<ModelVariant> variants;
    for (const auto& nm : names)
      for (int k : ks) variants.push_back(parse_variant(nm, obs.p, k, em.components));
    const auto scored = select(obs, variants, em);
    const std::string table = format_selection_table(scored);
    const std::string base = "selection_" + stem(path);
    write_text((dir / (base + ".txt")).string(), table);
    write_json((dir / (base + ".json")).string(), selection_to_json(scored));
    out << path << ":\n" << table;
    for (const auto& s : scored) all_converged = all_converged && s.fit.converged;
  }
  return all_converged ? kOk : kNotConverged;
}

int cmd_eval(const json& config, std::ostream& out) {
  json groups = json::array();
  if (config.contains("groups")) {
    groups = config.at("groups");
  } else {
    if (!config.contains("truth")) throw ArgumentError("eval needs a truth file");
    groups.push_back({{"truth", config.at("truth")}, {"fits", config.value("fits", json::array())}});
  }
  const bool symmetric = config.value("symmetric", false);
  const fs::path dir = out_dir(config);

  std::string sweep = "label,max_eigenvalue,runs,mean_abs_error_A,se_A,mean_abs_error_C,se_C\n";
  int gi = 0;
  for (const auto& g : groups) {
    ++gi;
    const json truth_doc = read_json(g.at("truth").get<std::string>());
    const SvarModel truth = model_from_json(truth_doc.contains("model") ? truth_doc.at("model") : truth_doc);
    const json meta = truth_doc.value("metadata", json::object());
    const auto fit_files = string_list(g.at("fits"));
    if (fit_files.empty()) throw ArgumentError("eval needs at least one fit file");

    std::vector<RunErrors> runs;
    std::vector<Theta> raw;
    for (const auto& f : fit_files) {
      const FitResult fit = fit_from_json(read_json(f));
      raw.push_back(fit.theta);
      runs.push_back(param_errors(fit.theta, truth, symmetric));
    }
    RunSummary s = summarize(runs, truth);
    s.T = meta.value("T", 0);
    s.k = meta.value("k_star", 1);
    s.max_eigenvalue = meta.value("max_eigenvalue", spectral_radius(truth.A));
    s.eigen_scale = meta.value("eigen_scale", 1.0);

    const std::string label = g.value("label", groups.size() == 1 ? std::string() : std::to_string(gi));
    const std::string suffix = label.empty() ? "" : "_" + label;
    write_text((dir / ("errors" + suffix + ".csv")).string(), errors_csv(runs, raw, truth));
    write_text((dir / ("summary" + suffix + ".csv")).string(), summary_csv(s));

    auto run_mean_se = [&](bool isA) {
      std::vector<double> per_run;
      for (const auto& r : runs) per_run.push_back(isA ? r.A_err.mean() : r.C_err.mean());
      const double n = static_cast<double>(per_run.size());
      const double mean = std::accumulate(per_run.begin(), per_run.end(), 0.0) / n;
      double ss = 0.0;
      for (double x : per_run) ss += (x - mean) * (x - mean);
      return std::pair<double, double>{mean, n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0};
    };
    const auto [ma, sa] = run_mean_se(true);
    const auto [mc, sc] = run_mean_se(false);
    sweep += label + ',' + format_double(s.max_eigenvalue) + ',' + std::to_string(runs.size()) + ',' +
             format_double(ma) + ',' + format_double(sa) + ',' + format_double(mc) + ',' +
             format_double(sc) + '\n';
    out << (label.empty() ? "" : label + ": ") << runs.size() << " runs, mean |A error| "
        << format_double(ma) << ", mean |C error| " << format_double(mc) << '\n';
  }
  write_text((dir / "sweep.csv").string(), sweep);
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structural VAR estimation from subsampled and mixed-frequency data"};
  app.require_subcommand(1);

  std::string config_path, out_path, variant, model, truth;
  std::uint64_t seed = 0;
  int restarts = 0, threads = 0, T = 0, components = 0, max_iterations = 0;
  double max_eig = 0.0;
  std::vector<int> ks, rates;
  std::vector<std::string> data, fits;
  std::vector<std::uint64_t> seeds;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--out", out_path, "Output directory");
    sub->add_option("--seed", seed, "Root seed");
    sub->add_option("--threads", threads, "Worker threads (0 = all available)");
  };
  auto fitting = [&](CLI::App* sub) {
    sub->add_option("--restarts", restarts, "Random restarts");
    sub->add_option("--k", ks, "Latent steps per record step (comma list)")->delimiter(',');
    sub->add_option("--variant", variant, "Structural variant(s), comma separated");
    sub->add_option("--data", data, "Data CSV file(s)")->delimiter(',');
    sub->add_option("--components", components, "Mixture components per series");
    sub->add_option("--max-iterations", max_iterations, "EM iteration limit");
  };

  CLI::App* sim = app.add_subcommand("simulate", "Simulate datasets and write the truth model");
  common(sim);
  sim->add_option("--model", model, "Model JSON file or preset name");
  sim->add_option("--T", T, "Series length");
  sim->add_option("--seeds", seeds, "Simulation seeds (comma list)")->delimiter(',');
  sim->add_option("--rates", rates, "Per-series sampling rates (comma list)")->delimiter(',');
  sim->add_option("--k", ks, "Uniform sampling rate");
  sim->add_option("--max-eigenvalue", max_eig, "Rescale A to this spectral radius");

  CLI::App* fit = app.add_subcommand("fit", "Fit by multi-start EM");
  common(fit);
  fitting(fit);
  CLI::App* sel = app.add_subcommand("select", "BIC selection over variants and k");
  common(sel);
  fitting(sel);
  CLI::App* ev = app.add_subcommand("eval", "Compare fits to the truth");
  common(ev);
  ev->add_option("--truth", truth, "Truth JSON written by simulate");
  ev->add_option("--fits", fits, "Fit JSON files (comma list)")->delimiter(',');
  CLI::App* demo = app.add_subcommand("demo-confound", "Print the subsampling confound example");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (demo->parsed()) return cmd_demo_confound(out);
    CLI::App* sub = app.get_subcommands().front();
    json config = config_path.empty() ? json::object() : read_json(config_path);
    if (!config.is_object()) throw IoError("configuration must be a JSON object");
    auto given = [&](const char* flag) { return sub->count(flag) > 0; };
    if (given("--out")) config["out"] = out_path;
    if (given("--seed")) config["seed"] = seed;
    if (given("--threads")) config["threads"] = threads;
    if (sub == sim) {
      if (given("--model")) config["model"] = model;
      if (given("--T")) config["T"] = T;
      if (given("--seeds")) config["seeds"] = seeds;
      if (given("--rates")) config["rates"] = rates;
      if (given("--k")) config["scheme"] = {{"k", ks.front()}};
      if (given("--max-eigenvalue")) config["max_eigenvalue"] = max_eig;
      return cmd_simulate(config, out);
    }
    if (sub == ev) {
      if (given("--truth")) config["truth"] = truth;
      if (given("--fits")) config["fits"] = fits;
      return cmd_eval(config, out);
    }
    if (given("--restarts")) config["restarts"] = restarts;
    if (given("--k")) config["k"] = ks;
    if (given("--data")) config["data"] = data;
    if (given("--components")) config["components"] = components;
    if (given("--max-iterations")) config["max_iterations"] = max_iterations;
    if (given("--variant")) {
      std::vector<std::string> names;
      std::stringstream ss(variant);
      for (std::string item; std::getline(ss, item, ',');) names.push_back(item);
      if (sub == fit) config["variant"] = names.front();
      else config["variants"] = names;
    }
    return sub == fit ? cmd_fit(config, out) : cmd_select(config, out);
  } catch (const json::exception& e) {
    err << "error: bad configuration: " << e.what() << '\n';
    return kInputError;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace svar::cli
