#pragma once

#include <charconv>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vbcv/benchmark.hpp"
#include "vbcv/estimators.hpp"
#include "vbcv/optimizer.hpp"

namespace vbcv {

/// Shortest decimal that round-trips, so CSV output is exact and reproducible.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline constexpr const char* kMseCsvHeader =
    "estimator,mu,sigma2,mse,mse_stderr,bias1,bias2,gt1,gt2,replications";

inline void write_csv(std::ostream& os, const MseTable& table) {
  os << kMseCsvHeader << '\n';
  for (const auto& r : table.rows) {
    os << to_string(r.estimator) << ',' << format_double(r.setting.mu) << ','
       << format_double(r.setting.sigma2) << ',';
    if (r.unavailable) {
      os << "n/a,n/a,n/a,n/a,";
    } else {
      os << format_double(r.mse) << ',' << format_double(r.mse_stderr) << ','
         << format_double(r.mean_bias(0)) << ',' << format_double(r.mean_bias(1)) << ',';
    }
    os << format_double(r.ground_truth(0)) << ',' << format_double(r.ground_truth(1)) << ','
       << r.replications << '\n';
  }
}

inline nlohmann::json to_json(const MseTable& table) {
  auto rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    nlohmann::json j;
    j["estimator"] = std::string(to_string(r.estimator));
    j["mu"] = r.setting.mu;
    j["sigma2"] = r.setting.sigma2;
    if (r.unavailable) {
      for (const char* k : {"mse", "mse_stderr", "bias1", "bias2"}) j[k] = nullptr;
    } else {
      j["mse"] = r.mse;
      j["mse_stderr"] = r.mse_stderr;
      j["bias1"] = r.mean_bias(0);
      j["bias2"] = r.mean_bias(1);
    }
    j["gt1"] = r.ground_truth(0);
    j["gt2"] = r.ground_truth(1);
    j["replications"] = r.replications;
    rows.push_back(std::move(j));
  }
  return rows;
}

/// Estimators as rows and settings as columns, in the order requested.
inline void write_table(std::ostream& os, const MseTable& table) {
  std::vector<std::string> header{"method"};
  for (const auto& s : table.settings) {
    std::ostringstream h;
    h << "mu=" << s.mu << ",sigma2=" << s.sigma2;
    header.push_back(h.str());
  }
  std::vector<std::vector<std::string>> cells{header};
  for (auto id : table.estimators) {
    std::vector<std::string> line{std::string(to_string(id))};
    for (const auto& s : table.settings) {
      const MseRow* r = table.find(id, s);
      if (!r || r->unavailable) {
        line.emplace_back("n/a");
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", r->mse);
        line.emplace_back(buf);
      }
    }
    cells.push_back(std::move(line));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  for (std::size_t l = 0; l < cells.size(); ++l) {
    for (std::size_t c = 0; c < cells[l].size(); ++c) {
      if (c == 0)
        os << std::left << std::setw(static_cast<int>(width[c])) << cells[l][c];
      else
        os << "  " << std::right << std::setw(static_cast<int>(width[c])) << cells[l][c];
    }
    os << '\n';
    if (l == 0) {
      std::size_t total = width[0];
      for (std::size_t c = 1; c < width.size(); ++c) total += 2 + width[c];
      os << std::string(total, '-') << '\n';
    }
  }
}

inline void write_trajectory_csv(std::ostream& os, const FitResult& fit) {
  os << "iteration,mu,sigma2,kl,step\n";
  for (const auto& p : fit.trajectory)
    os << p.iteration << ',' << format_double(p.mu) << ',' << format_double(p.sigma2) << ','
       << format_double(p.kl) << ',' << format_double(p.step) << '\n';
}

inline nlohmann::json to_json(const FitResult& fit) {
  auto traj = nlohmann::json::array();
  for (const auto& p : fit.trajectory)
    traj.push_back({{"iteration", p.iteration},
                    {"mu", p.mu},
                    {"sigma2", p.sigma2},
                    {"kl", p.kl},
                    {"step", p.step}});
  return {{"trajectory", traj},
          {"final", {{"mu", fit.final_q.mu()}, {"sigma2", fit.final_q.sigma2()}}}};
}

inline nlohmann::json to_json(const GradEstimate& e) {
  nlohmann::json j{{"estimator", std::string(to_string(e.id))},
                   {"value", {e.value(0), e.value(1)}},
                   {"samples_used", e.samples_used},
                   {"regularized", e.aux.regularized}};
  if (e.aux.g_nat) j["g_nat"] = {(*e.aux.g_nat)(0), (*e.aux.g_nat)(1)};
  if (e.aux.alpha) {
    const Mat2& a = *e.aux.alpha;
    j["alpha"] = {{a(0, 0), a(0, 1)}, {a(1, 0), a(1, 1)}};
  }
  return j;
}

}  // namespace vbcv
