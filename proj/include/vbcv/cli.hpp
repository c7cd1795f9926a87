#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "vbcv/benchmark.hpp"
#include "vbcv/estimators.hpp"
#include "vbcv/optimizer.hpp"
#include "vbcv/quadrature.hpp"
#include "vbcv/report.hpp"
#include "vbcv/selftest.hpp"
#include "vbcv/targets.hpp"

namespace vbcv::cli {

enum class Command { benchmark, estimate, ground_truth, fit, selftest };
enum class Format { csv, json, table };

/// Bad command line; main() reports it with exit code 2.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& flag, const std::string& msg)
      : std::runtime_error(flag + ": " + msg), flag_(flag) {}
  const std::string& flag() const noexcept { return flag_; }

 private:
  std::string flag_;
};

struct RunConfig {
  Command command = Command::benchmark;
  BenchmarkSpec bench;
  // single (mu, sigma2) for estimate / ground-truth / fit
  Setting point{0.0, 2.0};
  EstimatorId fit_estimator = EstimatorId::cv_regression;
  SgdSchedule schedule;
  Format format = Format::table;
  std::optional<std::string> output_path;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double to_double(const std::string& flag, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError(flag, "expected a number, got '" + s + "'");
  }
}

inline std::size_t to_count(const std::string& flag, const std::string& s) {
  const double v = to_double(flag, s);
  if (v < 0 || v != std::floor(v)) throw UsageError(flag, "expected a non-negative integer, got '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline std::vector<Setting> parse_settings(const std::string& s) {
  std::vector<Setting> out;
  for (const auto& item : split_list(s, ',')) {
    const auto parts = split_list(item, ':');
    if (parts.size() != 2 || item.find(':') == 0)
      throw UsageError("--settings", "expected MU:SIGMA2, got '" + item + "'");
    Setting st{to_double("--settings", parts[0]), to_double("--settings", parts[1])};
    if (!(st.sigma2 > 0)) throw UsageError("--settings", "variance must be > 0 in '" + item + "'");
    out.push_back(st);
  }
  if (out.empty()) throw UsageError("--settings", "no settings given");
  return out;
}

inline std::vector<EstimatorId> parse_estimators(const std::string& s) {
  if (s == "all") return {kAllEstimators.begin(), kAllEstimators.end()};
  std::vector<EstimatorId> out;
  for (const auto& name : split_list(s, ',')) {
    const auto id = parse_estimator(name);
    if (!id) throw UsageError("--estimators", "unknown estimator id '" + name + "'");
    out.push_back(*id);
  }
  if (out.empty()) throw UsageError("--estimators", "no estimators given");
  return out;
}

// JSON config values are normalised to the string form the flags take.
inline std::string json_to_flag_string(const std::string& key, const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  if (v.is_array()) {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ',';
      if (item.is_array() && item.size() == 2)
        out += item[0].dump() + ":" + item[1].dump();
      else
        out += item.is_string() ? item.get<std::string>() : item.dump();
    }
    return out;
  }
  throw UsageError("--config", "unsupported value for key '" + key + "'");
}

}  // namespace detail

/// Parses argv into a validated RunConfig. Throws UsageError for bad input,
/// and CLI::CallForHelp / CLI::CallForVersion when help is requested.
inline RunConfig parse_args(int argc, const char* const* argv) {
  CLI::App app{"Variance-reduced gradient estimators for Gaussian variational Bayes", "vbcv"};
  std::string command;
  app.add_option("command", command, "benchmark | estimate | ground-truth | fit | selftest")
      ->required();

  // raw values; a flag given on the command line wins over the config file
  std::map<std::string, std::string> raw;
  std::map<std::string, CLI::Option*> opts;
  auto add = [&](const std::string& name, const std::string& help) {
    opts[name] = app.add_option("--" + name, raw[name], help);
  };
  add("mu", "mean of q for estimate / ground-truth / fit");
  add("sigma2", "variance of q for estimate / ground-truth / fit");
  add("settings", "comma list of MU:SIGMA2 benchmark settings");
  add("target", "logistic | gaussian:MU:SIGMA2");
  add("estimators", "comma list of estimator ids, or 'all'");
  add("samples", "draws per gradient estimate");
  add("split", "fraction of draws used to fit control-variate coefficients");
  add("reps", "benchmark replications per cell");
  add("seed", "base random seed");
  add("threads", "worker threads (0 = all cores); output does not depend on it");
  add("format", "csv | json | table");
  add("out", "output file (default stdout)");
  add("metric", "squared-error weighting: precision | eta | eta1 | eta2");
  add("jitter", "ridge added to near-singular 2x2 solves");
  add("step0", "fit: initial step size");
  add("decay", "fit: step-size decay exponent in (0.5, 1]");
  add("iters", "fit: iterations");
  add("record-every", "fit: trajectory stride");
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with the same fields as the flags");
  bool paired = false, natural = false, kingma_total = false, delta_unit = false;
  auto* paired_opt = app.add_flag("--paired", paired, "share draws across estimators");
  auto* natural_opt = app.add_flag("--natural-gradient", natural, "fit: precondition with C^-1");
  auto* kingma_opt =
      app.add_flag("--kingma-total", kingma_total, "kingma-reparam: total eta-derivative");
  auto* delta_opt =
      app.add_flag("--delta-unit", delta_unit, "delta-method: unit coefficient, single batch");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw;
  } catch (const CLI::ParseError& e) {
    throw UsageError("argv", e.what());
  }

  RunConfig cfg;
  if (command == "benchmark") cfg.command = Command::benchmark;
  else if (command == "estimate") cfg.command = Command::estimate;
  else if (command == "ground-truth") cfg.command = Command::ground_truth;
  else if (command == "fit") cfg.command = Command::fit;
  else if (command == "selftest") cfg.command = Command::selftest;
  else throw UsageError("command", "unknown command '" + command + "'");

  auto given = [&](const std::string& name) { return opts.at(name)->count() > 0; };
  std::map<std::string, bool> set;
  for (const auto& [name, opt] : opts) set[name] = opt->count() > 0;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw UsageError("--config", "cannot read '" + config_path + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw UsageError("--config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw UsageError("--config", "top level must be an object");
    for (const auto& [key, value] : j.items()) {
      auto flag_bool = [&](CLI::Option* o, bool& target) {
        if (!value.is_boolean()) throw UsageError("--config", "'" + key + "' must be true or false");
        if (o->count() == 0) target = value.get<bool>();
      };
      if (key == "paired") flag_bool(paired_opt, paired);
      else if (key == "natural-gradient") flag_bool(natural_opt, natural);
      else if (key == "kingma-total") flag_bool(kingma_opt, kingma_total);
      else if (key == "delta-unit") flag_bool(delta_opt, delta_unit);
      else if (opts.count(key)) {
        if (!given(key)) {
          raw[key] = detail::json_to_flag_string(key, value);
          set[key] = true;
        }
      } else {
        throw UsageError("--config", "unknown key '" + key + "'");
      }
    }
  }

  auto& b = cfg.bench;
  if (set["settings"]) b.settings = detail::parse_settings(raw["settings"]);
  if (set["target"]) {
    try {
      parse_target(raw["target"]);
    } catch (const std::exception& e) {
      throw UsageError("--target", e.what());
    }
    b.target = raw["target"];
  }
  if (set["estimators"]) b.estimators = detail::parse_estimators(raw["estimators"]);
  if (set["samples"]) b.samples = detail::to_count("--samples", raw["samples"]);
  if (set["split"]) b.cv_split = detail::to_double("--split", raw["split"]);
  if (set["reps"]) b.replications = detail::to_count("--reps", raw["reps"]);
  if (set["seed"]) b.base_seed = detail::to_count("--seed", raw["seed"]);
  if (set["threads"]) b.threads = static_cast<unsigned>(detail::to_count("--threads", raw["threads"]));
  if (set["metric"]) {
    const auto m = parse_metric(raw["metric"]);
    if (!m) throw UsageError("--metric", "unknown metric '" + raw["metric"] + "'");
    b.metric = *m;
  }
  if (set["jitter"]) {
    b.estimator_options.jitter = detail::to_double("--jitter", raw["jitter"]);
    if (!(b.estimator_options.jitter >= 0)) throw UsageError("--jitter", "must be >= 0");
  }
  b.paired = paired;
  b.estimator_options.kingma_total_derivative = kingma_total;
  b.estimator_options.delta_unit_coefficient = delta_unit;
  if (set["format"]) {
    const auto& f = raw["format"];
    if (f == "csv") cfg.format = Format::csv;
    else if (f == "json") cfg.format = Format::json;
    else if (f == "table") cfg.format = Format::table;
    else throw UsageError("--format", "expected csv, json or table, got '" + f + "'");
  }
  if (set["out"]) cfg.output_path = raw["out"];

  if (cfg.command == Command::fit) cfg.point = {0.0, 1.0};
  if (set["mu"]) cfg.point.mu = detail::to_double("--mu", raw["mu"]);
  if (set["sigma2"]) cfg.point.sigma2 = detail::to_double("--sigma2", raw["sigma2"]);
  if (!(cfg.point.sigma2 > 0)) throw UsageError("--sigma2", "variance must be > 0");

  if (b.replications < 1) throw UsageError("--reps", "must be >= 1");
  if (!(b.cv_split > 0 && b.cv_split < 1)) throw UsageError("--split", "must lie strictly in (0, 1)");

  if (cfg.command == Command::fit) {
    if (set["estimators"]) {
      if (b.estimators.size() != 1) throw UsageError("--estimators", "fit takes exactly one estimator");
      cfg.fit_estimator = b.estimators.front();
    }
    if (!is_unbiased(cfg.fit_estimator))
      throw UsageError("--estimators", std::string(to_string(cfg.fit_estimator)) +
                                           " is biased and cannot drive stochastic gradient descent");
    auto& s = cfg.schedule;
    if (set["step0"]) s.step0 = detail::to_double("--step0", raw["step0"]);
    if (set["decay"]) s.decay = detail::to_double("--decay", raw["decay"]);
    if (set["iters"]) s.iterations = detail::to_count("--iters", raw["iters"]);
    if (set["record-every"]) s.record_every = detail::to_count("--record-every", raw["record-every"]);
    s.samples_per_step = b.samples;
    s.cv_split = b.cv_split;
    s.natural_gradient = natural;
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      const std::string flag = msg.rfind("step0", 0) == 0   ? "--step0"
                               : msg.rfind("decay", 0) == 0 ? "--decay"
                               : msg.rfind("iter", 0) == 0  ? "--iters"
                                                            : "--record-every";
      throw UsageError(flag, msg);
    }
  }

  // the estimators a command will run must fit the sample budget
  std::vector<EstimatorId> used = b.estimators;
  if (cfg.command == Command::fit) used = {cfg.fit_estimator};
  if (cfg.command == Command::benchmark || cfg.command == Command::estimate ||
      cfg.command == Command::fit) {
    const auto ec = b.estimator_config();
    for (auto id : used) {
      try {
        ec.validate(id);
      } catch (const std::invalid_argument& e) {
        throw UsageError("--samples", e.what());
      }
    }
  }
  return cfg;
}

namespace detail {

inline void emit_string(const std::string& text, const RunConfig& cfg, std::ostream& out) {
  if (!cfg.output_path) {
    out << text;
    return;
  }
  std::ofstream f(*cfg.output_path, std::ios::binary);
  if (!f) throw std::ios_base::failure("cannot open '" + *cfg.output_path + "' for writing");
  f << text;
  f.close();
  if (!f) throw std::ios_base::failure("failed writing '" + *cfg.output_path + "'");
}

}  // namespace detail

/// Renders a benchmark result in the requested format.
inline std::string render(const MseTable& table, Format format) {
  std::ostringstream os;
  switch (format) {
    case Format::csv: write_csv(os, table); break;
    case Format::json: os << to_json(table).dump(2) << '\n'; break;
    case Format::table: write_table(os, table); break;
  }
  return os.str();
}

/// Writes `text` to cfg.output_path, or to `out` when no path is set.
/// Throws std::ios_base::failure if the file can't be written.
inline void emit(const std::string& text, const RunConfig& cfg, std::ostream& out) {
  detail::emit_string(text, cfg, out);
}

/// Executes a parsed command. Returns the process exit code.
inline int run(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    const Target target = parse_target(cfg.bench.target);
    std::ostringstream os;
    switch (cfg.command) {
      case Command::benchmark: {
        emit(render(run_benchmark(cfg.bench), cfg.format), cfg, out);
        return 0;
      }
      case Command::estimate: {
        const auto q = GaussianQ::from_moments(cfg.point.mu, cfg.point.sigma2);
        const auto ec = cfg.bench.estimator_config();
        auto arr = nlohmann::json::array();
        if (cfg.format == Format::csv) os << "estimator,mu,sigma2,g1,g2\n";
        for (auto id : cfg.bench.estimators) {
          const auto seed = replication_seed(cfg.bench.base_seed, index_of(id), 0, 0, cfg.bench.paired);
          const auto e = estimate(id, q, target, ec, seed);
          if (cfg.format == Format::json) {
            auto j = to_json(e);
            j["mu"] = q.mu();
            j["sigma2"] = q.sigma2();
            arr.push_back(j);
          } else if (cfg.format == Format::csv) {
            os << to_string(id) << ',' << format_double(q.mu()) << ',' << format_double(q.sigma2())
               << ',' << format_double(e.value(0)) << ',' << format_double(e.value(1)) << '\n';
          } else {
            os << to_string(id) << ": (" << format_double(e.value(0)) << ", "
               << format_double(e.value(1)) << ")\n";
          }
        }
        if (cfg.format == Format::json) os << arr.dump(2) << '\n';
        emit(os.str(), cfg, out);
        return 0;
      }
      case Command::ground_truth: {
        const auto q = GaussianQ::from_moments(cfg.point.mu, cfg.point.sigma2);
        const Vec2 g = ground_truth_gradient(q, target);
        if (cfg.format == Format::json)
          os << nlohmann::json{{"mu", q.mu()}, {"sigma2", q.sigma2()}, {"target", target.name},
                               {"gradient", {g(0), g(1)}}}
                    .dump(2)
             << '\n';
        else if (cfg.format == Format::csv)
          os << "mu,sigma2,gt1,gt2\n"
             << format_double(q.mu()) << ',' << format_double(q.sigma2()) << ','
             << format_double(g(0)) << ',' << format_double(g(1)) << '\n';
        else
          os << format_double(g(0)) << ' ' << format_double(g(1)) << '\n';
        emit(os.str(), cfg, out);
        return 0;
      }
      case Command::fit: {
        const auto q0 = GaussianQ::from_moments(cfg.point.mu, cfg.point.sigma2);
        const auto res = fit(q0, target, cfg.fit_estimator, cfg.schedule, cfg.bench.base_seed);
        if (cfg.format == Format::json)
          os << to_json(res).dump(2) << '\n';
        else if (cfg.format == Format::csv)
          write_trajectory_csv(os, res);
        else
          os << "estimator " << to_string(cfg.fit_estimator) << ", " << cfg.schedule.iterations
             << " iterations\nfinal mu = " << format_double(res.final_q.mu())
             << "\nfinal sigma2 = " << format_double(res.final_q.sigma2())
             << "\nfinal KL = " << format_double(res.trajectory.back().kl) << '\n';
        emit(os.str(), cfg, out);
        return 0;
      }
      case Command::selftest: {
        bool ok = true;
        for (const auto& s : selftest::run_all()) {
          os << (s.passed ? "PASS  " : "FAIL  ") << s.name << "  (worst error "
             << format_double(s.worst) << ")\n";
          ok &= s.passed;
        }
        emit(os.str(), cfg, out);
        return ok ? 0 : 1;
      }
    }
  } catch (const std::ios_base::failure& e) {
    err << "vbcv: I/O error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "vbcv: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

/// Full entry point: parse, run, map errors to exit codes.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout,
                std::ostream& err = std::cerr) {
  RunConfig cfg;
  try {
    cfg = parse_args(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << "usage: vbcv <benchmark|estimate|ground-truth|fit|selftest> [flags]\n"
           "flags: --mu --sigma2 --settings --target --estimators --samples --split --reps\n"
           "       --seed --threads --format --out --metric --jitter --config --paired\n"
           "       --step0 --decay --iters --record-every --natural-gradient\n"
           "       --kingma-total --delta-unit\n";
    return 0;
  } catch (const UsageError& e) {
    err << "vbcv: usage error: " << e.what() << '\n';
    return 2;
  }
  return run(cfg, out, err);
}

}  // namespace vbcv::cli
