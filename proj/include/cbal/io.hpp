#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "cbal/estimate.hpp"
#include "cbal/simulate.hpp"

namespace cbal {

namespace jsonio {

// %.17g keeps every double round-trippable and the byte stream stable.
inline std::string fmt(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(Index v) { return std::to_string(v); }
inline std::string fmt(int v) { return std::to_string(v); }
inline std::string fmt(bool v) { return v ? "true" : "false"; }

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
  return out;
}

}  // namespace jsonio

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_cell(const std::string& raw, Index row, const std::string& column) {
  const std::string s = trim(raw);
  if (s.empty()) {
    throw ParseError("missing value at row " + std::to_string(row) +
                     ", column '" + column + "'");
  }
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ParseError("non-numeric value '" + s + "' at row " +
                     std::to_string(row) + ", column '" + column + "'");
  }
  return v;
}

}  // namespace detail

// CSV schema: header row; a column named T with values in {0, 1}, a numeric
// column named Y, every other column a numeric covariate. The intercept is
// prepended; covariate order follows the file.
inline Dataset ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("ingest_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError("ingest_csv: empty file '" + path + "'");
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);

  std::unordered_set<std::string> seen;
  for (const auto& h : header) {
    if (!seen.insert(h).second) {
      throw Error("ingest_csv: duplicate column name '" + h + "'");
    }
  }
  Index t_col = -1, y_col = -1;
  std::vector<Index> cov_cols;
  for (Index j = 0; j < static_cast<Index>(header.size()); ++j) {
    if (header[static_cast<std::size_t>(j)] == "T") {
      t_col = j;
    } else if (header[static_cast<std::size_t>(j)] == "Y") {
      y_col = j;
    } else {
      cov_cols.push_back(j);
    }
  }
  if (t_col < 0) throw Error("ingest_csv: no column named 'T'");
  if (y_col < 0) throw Error("ingest_csv: no column named 'Y'");

  std::vector<std::vector<double>> rows;
  Index row_number = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row_number;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ParseError("row " + std::to_string(row_number) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    std::vector<double> vals(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      vals[j] = detail::parse_cell(fields[j], row_number, header[j]);
    }
    const double t = vals[static_cast<std::size_t>(t_col)];
    if (t != 0.0 && t != 1.0) {
      throw ParseError("treatment value " + std::to_string(t) + " at row " +
                       std::to_string(row_number) + " is not 0/1");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError("ingest_csv: no data rows in '" + path + "'");

  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(cov_cols.size()) + 1;
  Dataset data;
  data.X.resize(n, d);
  data.X.col(0).setOnes();
  data.T.resize(n);
  data.Y.resize(n);
  data.names.resize(static_cast<std::size_t>(d));
  data.names[0] = "(Intercept)";
  for (std::size_t k = 0; k < cov_cols.size(); ++k) {
    data.names[k + 1] = header[static_cast<std::size_t>(cov_cols[k])];
  }
  for (Index i = 0; i < n; ++i) {
    const auto& vals = rows[static_cast<std::size_t>(i)];
    data.T(i) = vals[static_cast<std::size_t>(t_col)];
    data.Y(i) = vals[static_cast<std::size_t>(y_col)];
    for (std::size_t k = 0; k < cov_cols.size(); ++k) {
      data.X(i, static_cast<Index>(k) + 1) = vals[static_cast<std::size_t>(cov_cols[k])];
    }
  }
  data.validate();
  return data;
}

// Writes covariates, then T and Y, with round-trippable numbers; re-ingesting
// reproduces the Dataset bit for bit.
inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("write_dataset_csv: cannot open '" + path + "'");
  for (Index j = 1; j < data.d(); ++j) {
    out << (data.names.empty() ? "X" + std::to_string(j)
                               : data.names[static_cast<std::size_t>(j)])
        << ',';
  }
  out << "T,Y\n";
  for (Index i = 0; i < data.n(); ++i) {
    for (Index j = 1; j < data.d(); ++j) {
      out << jsonio::fmt(data.X(i, j)) << ',';
    }
    out << (data.T(i) == 1.0 ? '1' : '0') << ',' << jsonio::fmt(data.Y(i)) << '\n';
  }
}

inline std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::both_correct: return "both-correct";
    case Scenario::ps_misspecified: return "ps-misspecified";
    case Scenario::outcome_misspecified: return "outcome-misspecified";
    case Scenario::both_misspecified: return "both-misspecified";
  }
  return "?";
}

inline std::string outcome_kind_name(OutcomeKind k) {
  return k == OutcomeKind::linear ? "linear" : "binomial-logistic";
}

// JSON document for an estimate run. Keys and nesting are fixed; per-arm
// diagnostics carry the mu1 arm at the top level with the mu0 arm nested
// under "arm0"; min/max propensities and sample boundedness summarize both
// arms.
inline std::string effect_to_json(const EffectEstimate& est) {
  using jsonio::fmt;
  const ArmEstimate& a1 = est.arm1;
  std::ostringstream out;
  out << "{\"mu1\":" << fmt(est.mu1_hat) << ",\"mu0\":" << fmt(est.mu0_hat)
      << ",\"ate\":" << fmt(est.ate_hat) << ",\"variance\":" << fmt(est.v_ate)
      << ",\"ci\":[" << fmt(est.ci.lo) << "," << fmt(est.ci.hi) << "]"
      << ",\"level\":" << fmt(est.level) << ",\"diagnostics\":{";
  const bool two_arm = est.arm0.has_value();
  const double min_pi = two_arm ? std::min(a1.min_pi, est.arm0->min_pi) : a1.min_pi;
  const double max_pi = two_arm ? std::max(a1.max_pi, est.arm0->max_pi) : a1.max_pi;
  const bool bounded = two_arm ? (a1.sample_bounded && est.arm0->sample_bounded)
                               : a1.sample_bounded;
  out << "\"support_size\":" << fmt(a1.support.size())
      << ",\"balance_residual_inf_norm\":" << fmt(a1.balance_residual_inf)
      << ",\"min_pi\":" << fmt(min_pi) << ",\"max_pi\":" << fmt(max_pi)
      << ",\"sample_bounded\":" << fmt(bounded)
      << ",\"lambda_ps\":" << fmt(a1.propensity.lambda_used)
      << ",\"lambda_outcome\":" << fmt(a1.outcome.lambda_used)
      << ",\"calibration_converged\":" << fmt(a1.calibration.converged);
  if (two_arm) {
    const ArmEstimate& a0 = *est.arm0;
    out << ",\"arm0\":{\"support_size\":" << fmt(a0.support.size())
        << ",\"balance_residual_inf_norm\":" << fmt(a0.balance_residual_inf)
        << ",\"lambda_ps\":" << fmt(a0.propensity.lambda_used)
        << ",\"lambda_outcome\":" << fmt(a0.outcome.lambda_used)
        << ",\"calibration_converged\":" << fmt(a0.calibration.converged) << "}";
  }
  out << "}}";
  return out.str();
}

inline std::string report_to_json(const SimulationReport& rep) {
  using jsonio::fmt;
  std::ostringstream out;
  out << "{\"scenario\":" << jsonio::quote(scenario_name(rep.spec.scenario))
      << ",\"n\":" << fmt(rep.spec.n) << ",\"d\":" << fmt(rep.spec.d)
      << ",\"rho\":" << fmt(rep.spec.rho)
      << ",\"replications\":" << fmt(rep.spec.replications)
      << ",\"outcome_kind\":" << jsonio::quote(outcome_kind_name(rep.spec.outcome_kind))
      << ",\"master_seed\":" << std::to_string(rep.spec.master_seed)
      << ",\"truth\":{\"mu1\":" << fmt(rep.truth.mu1)
      << ",\"mu0\":" << fmt(rep.truth.mu0) << ",\"ate\":" << fmt(rep.truth.ate)
      << ",\"mc_se\":" << fmt(rep.truth.mc_se) << "}"
      << ",\"completed\":" << fmt(rep.completed) << ",\"failed\":" << fmt(rep.failed)
      << ",\"metrics\":{\"bias\":" << fmt(rep.bias)
      << ",\"std_err\":" << fmt(rep.std_err) << ",\"rmse\":" << fmt(rep.rmse)
      << ",\"coverage\":" << fmt(rep.coverage)
      << ",\"mean_ci_length\":" << fmt(rep.mean_ci_length)
      << ",\"mean_se_hat\":" << fmt(rep.mean_se_hat)
      << ",\"mc_variance\":" << fmt(rep.mc_variance)
      << ",\"mean_vhat_over_n\":" << fmt(rep.mean_vhat_over_n) << "}"
      << ",\"diagnostics\":{\"max_kkt\":" << fmt(rep.max_kkt)
      << ",\"max_balance_residual_inf\":" << fmt(rep.max_balance_inf)
      << ",\"max_normalization\":" << fmt(rep.max_normalization)
      << ",\"max_ht_hajek_gap\":" << fmt(rep.max_ht_hajek_gap)
      << ",\"max_ht_aipw_gap\":" << fmt(rep.max_ht_aipw_gap)
      << ",\"calibration_converged\":" << fmt(rep.calibration_converged_count)
      << ",\"bounded_given_converged\":" << fmt(rep.bounded_given_converged_count)
      << "},\"records\":[";
  for (std::size_t i = 0; i < rep.records.size(); ++i) {
    const RepRecord& r = rep.records[i];
    if (i) out << ",";
    out << "{\"rep\":" << fmt(r.rep) << ",\"failed\":" << fmt(r.failed);
    if (r.failed) {
      out << ",\"error\":" << jsonio::quote(r.error);
    } else {
      out << ",\"ate\":" << fmt(r.ate) << ",\"mu1\":" << fmt(r.mu1)
          << ",\"mu0\":" << fmt(r.mu0) << ",\"se\":" << fmt(r.se)
          << ",\"ci\":[" << fmt(r.ci.lo) << "," << fmt(r.ci.hi) << "]"
          << ",\"covered\":" << fmt(r.covered);
    }
    out << "}";
  }
  out << "]}";
  return out.str();
}

inline std::string report_to_csv(const SimulationReport& rep) {
  using jsonio::fmt;
  std::ostringstream out;
  out << "scenario,n,d,rho,replications,outcome_kind,master_seed,truth_ate,"
         "bias,std_err,rmse,coverage,mean_ci_length,mean_se_hat,completed,failed\n";
  out << scenario_name(rep.spec.scenario) << ',' << rep.spec.n << ','
      << rep.spec.d << ',' << fmt(rep.spec.rho) << ',' << rep.spec.replications
      << ',' << outcome_kind_name(rep.spec.outcome_kind) << ','
      << rep.spec.master_seed << ',' << fmt(rep.truth.ate) << ','
      << fmt(rep.bias) << ',' << fmt(rep.std_err) << ',' << fmt(rep.rmse) << ','
      << fmt(rep.coverage) << ',' << fmt(rep.mean_ci_length) << ','
      << fmt(rep.mean_se_hat) << ',' << rep.completed << ',' << rep.failed
      << '\n';
  return out.str();
}

inline std::string error_to_json(const std::string& type, const std::string& message) {
  return "{\"error\":{\"type\":" + jsonio::quote(type) +
         ",\"message\":" + jsonio::quote(message) + "}}";
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << content;
}

}  // namespace cbal
