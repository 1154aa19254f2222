// Command-line harness: single runs, seed ensembles, epsilon sweeps and
// oracle audits on the built-in problems.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>
#include <toml.hpp>

#include "sdfl/report.hpp"
#include "sdfl/sdfl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Config {
  std::string problem = "sphere";
  std::string noise = "none";
  std::size_t dim = 2;
  double kappa = 10.0;
  std::optional<sdfl::Point> x0;
  std::vector<std::uint64_t> seeds{1};
  fs::path out = "sdfl_out";
  bool out_given = false;
  unsigned workers = 1;
  sdfl::AlgoParams params;
  std::vector<double> epsilons{0.4, 0.2, 0.1, 0.05};
  std::vector<double> deltas{1.0, 0.5, 0.25};
  std::int64_t trials = 10'000;
};

/// Error raised for malformed configuration that is not a parameter range issue.
class ConfigError : public sdfl::Error {
public:
  explicit ConfigError(const std::string& what) : sdfl::Error("ConfigError", what) {}
};

class OutputError : public sdfl::Error {
public:
  explicit OutputError(const std::string& what) : sdfl::Error("OutputError", what) {}
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) return {std::stoull(text)};
    const std::uint64_t lo = std::stoull(text.substr(0, dots));
    const std::uint64_t hi = std::stoull(text.substr(dots + 2));
    if (hi < lo) throw sdfl::InvalidParam("seeds", "N..M with N <= M");
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  } catch (const std::logic_error&) {
    throw sdfl::InvalidParam("seeds", "N or N..M with non-negative integers");
  }
}

std::vector<double> parse_list(const std::string& text, const std::string& name) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw sdfl::InvalidParam(name, "comma-separated numbers");
    }
  }
  return out;
}

// ---- TOML -------------------------------------------------------------

std::vector<double> toml_numbers(const toml::node& node, const std::string& key) {
  const toml::array* arr = node.as_array();
  if (!arr) throw ConfigError("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& el : *arr) {
    auto v = el.value<double>();
    if (!v) throw ConfigError("'" + key + "' must be an array of numbers");
    out.push_back(*v);
  }
  return out;
}

template <class T>
T toml_get(const toml::node& node, const std::string& key) {
  auto v = node.value<T>();
  if (!v) throw ConfigError("'" + key + "' has the wrong type");
  return *v;
}

void apply_params_table(sdfl::AlgoParams& p, const toml::table& t) {
  for (const auto& [k, node] : t) {
    const std::string key(k.str());
    if (key == "theta") p.theta = toml_get<double>(node, key);
    else if (key == "gamma") p.gamma = toml_get<double>(node, key);
    else if (key == "c") p.c = toml_get<double>(node, key);
    else if (key == "eps_f") p.eps_f = toml_get<double>(node, key);
    else if (key == "eta") p.eta = toml_get<double>(node, key);
    else if (key == "beta") p.beta = toml_get<double>(node, key);
    else if (key == "nu") p.nu = toml_get<double>(node, key);
    else if (key == "max_iters") p.max_iters = toml_get<std::int64_t>(node, key);
    else if (key == "max_evals") p.max_evals = toml_get<std::int64_t>(node, key);
    else if (key == "delta_tol") p.delta_tol = toml_get<double>(node, key);
    else if (key == "max_doublings") p.max_doublings = static_cast<int>(toml_get<std::int64_t>(node, key));
    else if (key == "p_max") p.p_max = toml_get<std::int64_t>(node, key);
    else if (key == "strict_beta") p.strict_beta = toml_get<bool>(node, key);
    else throw ConfigError("unknown key params." + key);
  }
}

void apply_config_file(Config& c, const fs::path& path) {
  toml::table t;
  try {
    t = toml::parse_file(path.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ": " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(msg.str());
  }
  for (const auto& [k, node] : t) {
    const std::string key(k.str());
    if (key == "problem") c.problem = toml_get<std::string>(node, key);
    else if (key == "noise") c.noise = toml_get<std::string>(node, key);
    else if (key == "dim") c.dim = static_cast<std::size_t>(toml_get<std::int64_t>(node, key));
    else if (key == "kappa") c.kappa = toml_get<double>(node, key);
    else if (key == "x0") c.x0 = toml_numbers(node, key);
    else if (key == "seed") c.seeds = {static_cast<std::uint64_t>(toml_get<std::int64_t>(node, key))};
    else if (key == "seeds") {
      if (node.is_string()) {
        c.seeds = parse_seeds(toml_get<std::string>(node, key));
      } else {
        c.seeds.clear();
        for (double s : toml_numbers(node, key)) c.seeds.push_back(static_cast<std::uint64_t>(s));
      }
    } else if (key == "horizon") c.params.max_iters = toml_get<std::int64_t>(node, key);
    else if (key == "out") {
      c.out = toml_get<std::string>(node, key);
      c.out_given = true;
    } else if (key == "workers") c.workers = static_cast<unsigned>(toml_get<std::int64_t>(node, key));
    else if (key == "epsilons") c.epsilons = toml_numbers(node, key);
    else if (key == "deltas") c.deltas = toml_numbers(node, key);
    else if (key == "trials") c.trials = toml_get<std::int64_t>(node, key);
    else if (key == "params") {
      const toml::table* p = node.as_table();
      if (!p) throw ConfigError("'params' must be a table");
      apply_params_table(c.params, *p);
    } else {
      throw ConfigError("unknown key " + key);
    }
  }
}

// ---- flags ------------------------------------------------------------

/// Options registered on one subcommand. Values are applied on top of the
/// config file only when the flag was given.
class Flags {
public:
  explicit Flags(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "TOML configuration file")->check(CLI::ExistingFile);
    option<std::string>("--problem", "Problem name (sphere, quadratic, rosenbrock)",
                        [](Config& c, const std::string& v) { c.problem = v; });
    option<std::string>("--noise", "Noise model KIND:PARAM (none, gaussian:V, uniform:A, multiplicative:V)",
                        [](Config& c, const std::string& v) { c.noise = v; });
    option<std::size_t>("--dim", "Problem dimension", [](Config& c, std::size_t v) { c.dim = v; });
    option<double>("--kappa", "Condition number of the quadratic", [](Config& c, double v) { c.kappa = v; });
    option<std::string>("--x0", "Starting point, comma separated",
                        [](Config& c, const std::string& v) { c.x0 = parse_list(v, "x0"); });
    option<std::uint64_t>("--seed", "Single seed", [](Config& c, std::uint64_t v) { c.seeds = {v}; });
    option<std::string>("--seeds", "Seed range N..M (inclusive)",
                        [](Config& c, const std::string& v) { c.seeds = parse_seeds(v); });
    option<std::string>("--out", "Output directory", [](Config& c, const std::string& v) {
      c.out = v;
      c.out_given = true;
    });
    option<unsigned>("--workers", "Parallel ensemble workers (0 = hardware threads)",
                     [](Config& c, unsigned v) { c.workers = v; });
    option<std::int64_t>("--horizon,--max-iters", "Iteration limit",
                         [](Config& c, std::int64_t v) { c.params.max_iters = v; });
    option<double>("--theta", "Stepsize reduction factor", [](Config& c, double v) { c.params.theta = v; });
    option<double>("--gamma", "Sufficient decrease factor", [](Config& c, double v) { c.params.gamma = v; });
    option<double>("--c", "Accuracy constant c", [](Config& c, double v) { c.params.c = v; });
    option<double>("--eps-f", "Accuracy scale eps_f", [](Config& c, double v) { c.params.eps_f = v; });
    option<double>("--eta", "Working stepsize floor factor", [](Config& c, double v) { c.params.eta = v; });
    option<double>("--beta", "Accuracy probability", [](Config& c, double v) { c.params.beta = v; });
    option<double>("--nu", "Improvement function weight", [](Config& c, double v) { c.params.nu = v; });
    option<std::int64_t>("--max-evals", "Estimate budget", [](Config& c, std::int64_t v) { c.params.max_evals = v; });
    option<double>("--delta-tol", "Stop when Delta falls to this value",
                   [](Config& c, double v) { c.params.delta_tol = v; });
    option<int>("--max-doublings", "Expansion safeguard", [](Config& c, int v) { c.params.max_doublings = v; });
    option<std::int64_t>("--p-max", "Sample count cap", [](Config& c, std::int64_t v) { c.params.p_max = v; });
    auto* strict = app_->add_flag("--strict-beta", "Reject beta below the computed lower bound");
    entries_.push_back({strict, [](Config& c) { c.params.strict_beta = true; }});
  }

  template <class T, class Apply>
  void option(const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(name, *value, help);
    entries_.push_back({opt, [value, apply](Config& c) { apply(c, *value); }});
  }

  Config resolve() const {
    Config c;
    if (!config_path_.empty()) apply_config_file(c, config_path_);
    for (const auto& e : entries_)
      if (e.opt->count() > 0) e.apply(c);
    if (c.seeds.empty()) throw sdfl::InvalidParam("seeds", "at least one seed");
    if (c.workers == 0) c.workers = std::max(1u, std::thread::hardware_concurrency());
    return c;
  }

  CLI::App* app() const { return app_; }

private:
  struct Entry {
    CLI::Option* opt;
    std::function<void(Config&)> apply;
  };
  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

// ---- helpers ----------------------------------------------------------

sdfl::NoisyProblem build_problem(const Config& c) {
  sdfl::ProblemOptions opt;
  opt.dim = c.x0 ? c.x0->size() : c.dim;
  opt.kappa = c.kappa;
  opt.noise = sdfl::NoiseModel::parse(c.noise);
  auto p = sdfl::make_problem(c.problem, opt);
  if (c.x0) p.with_x0(*c.x0);
  if (p.assumption_local_only()) spdlog::warn("{}: smoothness assumptions hold only locally", p.name());
  if (p.variance_bound_approximate())
    spdlog::warn("{}: variance bound for {} is approximate", p.name(), c.noise);
  return p;
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw OutputError("cannot create " + dir.string() + ": " + ec.message());
  const fs::path probe = dir / ".sdfl_write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw OutputError(dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw OutputError("cannot write " + path.string());
  f << content;
  if (!f) throw OutputError("write failed for " + path.string());
}

std::string trace_name(std::uint64_t seed) { return "trace_seed" + std::to_string(seed) + ".csv"; }

json config_json(const Config& c, const sdfl::NoisyProblem& p) {
  return {{"problem", p.name()},
          {"noise", c.noise},
          {"dim", p.dim()},
          {"kappa", c.kappa},
          {"x0", p.x0()},
          {"params", sdfl::to_json(c.params)}};
}

void check_params(const Config& c, std::size_t n) {
  const auto report = sdfl::validate_params(c.params, n);
  report.throw_if_invalid();
  for (const auto& w : report.warnings()) spdlog::warn("{}", w);
}

std::vector<sdfl::RunResult> run_seeds(const Config& c, const sdfl::NoisyProblem& p) {
  auto setup = sdfl::setup_for(p);
  spdlog::info("running {} seed(s) of {} (n = {}, noise {}) on {} worker(s)", c.seeds.size(), p.name(), p.dim(),
               c.noise, c.workers);
  auto runs = sdfl::run_ensemble(p, setup, c.params, c.seeds, c.workers);
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto& r = runs[s];
    spdlog::info("seed {}: {} iterations, nF {}, stop {}", c.seeds[s], r.iterations, r.nF_total,
                 sdfl::to_string(r.stop_reason));
    if (r.clamped_iterations > 0)
      spdlog::warn("seed {}: sample count clamped at p_max in {} iterations", c.seeds[s], r.clamped_iterations);
    if (r.safeguard_hits > 0) spdlog::warn("seed {}: expansion safeguard hit {} times", c.seeds[s], r.safeguard_hits);
  }
  return runs;
}

// ---- commands ---------------------------------------------------------

int cmd_run(const Config& c) {
  const auto p = build_problem(c);
  check_params(c, p.dim());
  prepare_out(c.out);
  const auto runs = run_seeds(c, p);

  json summaries = json::array();
  for (std::size_t s = 0; s < runs.size(); ++s) {
    std::ostringstream csv;
    sdfl::write_trace_csv(csv, runs[s]);
    write_file(c.out / trace_name(c.seeds[s]), csv.str());
    summaries.push_back(sdfl::run_summary_json(runs[s], c.seeds[s]));
  }

  json j = config_json(c, p);
  if (runs.size() == 1) {
    j.update(summaries[0]);
  } else {
    std::vector<double> grad, nF;
    for (const auto& r : runs) {
      if (r.final_truth) grad.push_back(r.final_truth->grad_norm);
      nF.push_back(static_cast<double>(r.nF_total));
    }
    const auto g = sdfl::detail::mean_se(grad);
    j["seeds"] = c.seeds;
    j["mean_final_grad_norm"] = g.mean;
    j["se_final_grad_norm"] = g.se;
    j["mean_nF"] = sdfl::detail::mean_se(nF).mean;
    j["runs"] = summaries;
  }
  write_file(c.out / "summary.json", j.dump(2) + "\n");

  for (std::size_t s = 0; s < runs.size(); ++s) {
    const auto& r = runs[s];
    std::cout << "seed " << c.seeds[s] << ": iterations " << r.iterations << ", nF " << r.nF_total << ", stop "
              << sdfl::to_string(r.stop_reason);
    if (r.final_truth) std::cout << ", |grad f| " << sdfl::format_number(r.final_truth->grad_norm);
    std::cout << '\n';
  }
  std::cout << "wrote " << runs.size() << " trace(s) and summary.json to " << c.out.string() << '\n';
  return 0;
}

int cmd_sweep(const Config& c) {
  if (c.epsilons.size() < 3) throw sdfl::InvalidParam("epsilons", "at least 3 epsilon values");
  for (double e : c.epsilons)
    if (!(e > 0.0)) throw sdfl::InvalidParam("epsilon", "epsilon > 0");
  const auto p = build_problem(c);
  check_params(c, p.dim());
  prepare_out(c.out);
  const auto runs = run_seeds(c, p);
  const auto horizon = static_cast<std::size_t>(c.params.max_iters);
  const auto curve = sdfl::ensemble_gradient_curve(runs, horizon);
  const auto sweep = sdfl::epsilon_sweep(curve, c.epsilons);

  json j = config_json(c, p);
  j["seeds"] = c.seeds;
  j["sweep"] = sdfl::to_json(sweep);
  j["initial_mean_grad_norm"] = curve.mean.empty() ? curve.final_mean : curve.mean.front();
  j["final_mean_grad_norm"] = curve.final_mean;
  write_file(c.out / "sweep.json", j.dump(2) + "\n");

  std::cout << "epsilon,K_eps,saturated\n";
  for (const auto& r : sweep.rows)
    std::cout << sdfl::format_number(r.epsilon) << ',' << r.K_eps << ',' << (r.saturated ? 1 : 0) << '\n';
  if (sweep.slope)
    std::cout << "slope " << sdfl::format_number(*sweep.slope) << '\n';
  else
    std::cout << "slope undefined (fewer than two epsilon values with K_eps > 0)\n";
  return 0;
}

int cmd_audit_oracle(const Config& c) {
  if (c.deltas.empty()) throw sdfl::InvalidParam("deltas", "at least one delta");
  if (c.trials < 1) throw sdfl::InvalidParam("trials", "trials >= 1");
  const auto p = build_problem(c);
  if (!p.has_truth()) throw sdfl::TruthUnavailable(p.name() + " exposes no ground truth");
  check_params(c, p.dim());
  prepare_out(c.out);
  const double V = p.variance_bound();
  const sdfl::Point& x = p.x0();
  const sdfl::Stream root(sdfl::combine_seed(c.seeds.front(), 0xA0D17));

  std::ostringstream csv;
  csv << "delta,required_samples,unclamped,clamped,rate,beta,meets_beta\n";
  json rows = json::array();
  bool all_meet = true;
  for (std::size_t i = 0; i < c.deltas.size(); ++i) {
    const double delta = c.deltas[i];
    const auto req = sdfl::required_samples(V, c.params.c, c.params.eps_f, c.params.beta, delta, c.params.p_max);
    if (req.clamped) spdlog::warn("delta {}: sample count clamped at {}", delta, req.count);
    const double rate = sdfl::empirical_accuracy_rate(p, x, c.params.c, c.params.eps_f, delta, req.count, c.trials,
                                                      root.child(i));
    const bool meets = rate >= c.params.beta;
    all_meet = all_meet && meets;
    csv << sdfl::format_number(delta) << ',' << req.count << ',' << sdfl::format_number(req.unclamped) << ','
        << (req.clamped ? 1 : 0) << ',' << sdfl::format_number(rate) << ',' << sdfl::format_number(c.params.beta)
        << ',' << (meets ? 1 : 0) << '\n';
    rows.push_back({{"delta", delta},
                    {"required_samples", req.count},
                    {"unclamped", req.unclamped},
                    {"clamped", req.clamped},
                    {"rate", rate},
                    {"meets_beta", meets}});
  }
  json j = config_json(c, p);
  j["variance_bound"] = V;
  j["trials"] = c.trials;
  j["seed"] = c.seeds.front();
  j["rows"] = rows;
  j["all_meet_beta"] = all_meet;
  write_file(c.out / "audit_oracle.csv", csv.str());
  write_file(c.out / "audit_oracle.json", j.dump(2) + "\n");
  std::cout << csv.str();
  return 0;
}

int cmd_validate(const Config& c) {
  const auto report = sdfl::validate_params(c.params, c.x0 ? c.x0->size() : c.dim);
  const json j = sdfl::to_json(report);
  if (c.out_given) {
    prepare_out(c.out);
    write_file(c.out / "validation.json", j.dump(2) + "\n");
  }
  std::cout << j.dump(2) << '\n';
  report.throw_if_invalid();
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("sdfl");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  const char* env = std::getenv("SDFL_LOG");
  if (!env || !*env) return;
  const std::string wanted(env);
  const auto level = spdlog::level::from_str(wanted);
  if (level == spdlog::level::off && wanted != "off") {
    spdlog::warn("SDFL_LOG={} not recognised; using warn", wanted);
    return;
  }
  spdlog::set_level(level);
}

int fail(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Stochastic derivative-free linesearch experiments"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run one seed or an ensemble and write traces");
  auto* sweep = app.add_subcommand("sweep", "Count K_eps over an epsilon grid and fit the log-log slope");
  auto* audit = app.add_subcommand("audit-oracle", "Measure estimate accuracy rates over a delta grid");
  auto* validate = app.add_subcommand("validate-params", "Check parameters and print derived bounds");

  Flags run_flags(run), sweep_flags(sweep), audit_flags(audit), validate_flags(validate);
  sweep_flags.option<std::string>("--epsilons", "Comma-separated epsilon values",
                                  [](Config& c, const std::string& v) { c.epsilons = parse_list(v, "epsilons"); });
  audit_flags.option<std::string>("--deltas", "Comma-separated delta values",
                                  [](Config& c, const std::string& v) { c.deltas = parse_list(v, "deltas"); });
  audit_flags.option<std::int64_t>("--trials", "Trials per delta", [](Config& c, std::int64_t v) { c.trials = v; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("UsageError", e.what());
  }

  try {
    if (run->parsed()) return cmd_run(run_flags.resolve());
    if (sweep->parsed()) return cmd_sweep(sweep_flags.resolve());
    if (audit->parsed()) return cmd_audit_oracle(audit_flags.resolve());
    if (validate->parsed()) return cmd_validate(validate_flags.resolve());
  } catch (const sdfl::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("Error", e.what());
  }
  return fail("UsageError", "no command given");
}
