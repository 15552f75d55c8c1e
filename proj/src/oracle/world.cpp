#include <cmath>
#include <fstream>
#include <sstream>

#include "flip/oracle.hpp"
#include "flip/util/error.hpp"
#include "flip/util/text.hpp"

namespace flip::oracle {

namespace {

std::vector<double> parse_numbers(const std::string& s, const std::string& ctx) {
  std::vector<double> out;
  for (const auto& tok : text::split_ws(s)) {
    double v = 0.0;
    if (!text::parse_double(tok, v))
      throw ValidationError(ctx + ": '" + tok + "' is not a number");
    out.push_back(v);
  }
  return out;
}

// Table rows are separated by '|'.
std::vector<std::vector<double>> parse_rows(const std::string& s,
                                            const std::string& ctx) {
  std::vector<std::vector<double>> rows;
  for (const auto& part : text::split(s, '|'))
    rows.push_back(parse_numbers(part, ctx));
  return rows;
}

void check_simplex(const std::vector<double>& row, const std::string& ctx) {
  double total = 0.0;
  for (double v : row) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError(ctx + ": probability outside [0,1]");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw ValidationError(ctx + ": probabilities sum to " +
                          text::format_double(total) + ", expected 1");
}

}  // namespace

DiscreteWorld DiscreteWorld::parse_text(const std::string& content,
                                        const std::string& origin) {
  const auto kv = text::KeyValueFile::parse_text(content, origin);
  DiscreteWorld w;
  w.horizon = static_cast<int>(kv.get_int("horizon"));
  if (w.horizon < 1) throw ValidationError(origin + ": horizon must be >= 1");
  w.noise_sd = kv.has("noise_sd") ? kv.get_double("noise_sd") : 0.0;
  if (w.noise_sd < 0.0) throw ValidationError(origin + ": noise_sd must be >= 0");

  w.supports.resize(static_cast<std::size_t>(w.horizon));
  for (int t = 1; t <= w.horizon; ++t) {
    const std::string key = "support " + std::to_string(t);
    w.supports[static_cast<std::size_t>(t - 1)] = parse_numbers(kv.get(key), origin + ": " + key);
    if (w.supports[static_cast<std::size_t>(t - 1)].empty())
      throw ValidationError(origin + ": empty " + key);
  }
  w.x1_dist = parse_numbers(kv.get("x1_dist"), origin + ": x1_dist");

  w.transitions.resize(static_cast<std::size_t>(std::max(0, w.horizon - 1)));
  for (int t = 2; t <= w.horizon; ++t) {
    const std::string key = "transition " + std::to_string(t);
    w.transitions[static_cast<std::size_t>(t - 2)] = parse_rows(kv.get(key), origin + ": " + key);
  }
  w.propensities.resize(static_cast<std::size_t>(w.horizon));
  for (int t = 1; t <= w.horizon; ++t) {
    const std::string key = "propensity " + std::to_string(t);
    w.propensities[static_cast<std::size_t>(t - 1)] =
        parse_numbers(kv.get(key), origin + ": " + key);
  }
  w.outcome_mean = parse_numbers(kv.get("outcome"), origin + ": outcome");
  w.validate();
  return w;
}

DiscreteWorld DiscreteWorld::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open world file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

void DiscreteWorld::validate() const {
  if (x1_dist.size() != support_size(1))
    throw ValidationError("x1_dist length does not match support 1");
  check_simplex(x1_dist, "x1_dist");

  std::size_t rows_after_b = 1;  // count of (x_1,a_1,...,x_{t-1},a_{t-1}) rows
  for (int t = 1; t <= horizon; ++t) {
    if (t >= 2) {
      const auto& trans = transitions[static_cast<std::size_t>(t - 2)];
      if (trans.size() != rows_after_b)
        throw ValidationError("transition " + std::to_string(t) + " has " +
                              std::to_string(trans.size()) + " rows, expected " +
                              std::to_string(rows_after_b));
      for (const auto& row : trans) {
        if (row.size() != support_size(t))
          throw ValidationError("transition " + std::to_string(t) +
                                " row width does not match support " +
                                std::to_string(t));
        check_simplex(row, "transition " + std::to_string(t));
      }
    }
    const std::size_t rows_after_x = rows_after_b * support_size(t);
    const auto& pi = propensities[static_cast<std::size_t>(t - 1)];
    if (pi.size() != rows_after_x)
      throw ValidationError("propensity " + std::to_string(t) + " has " +
                            std::to_string(pi.size()) + " values, expected " +
                            std::to_string(rows_after_x));
    for (double p : pi)
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError("propensity " + std::to_string(t) +
                              " outside [0,1]");
    rows_after_b = rows_after_x * 2;
  }
  if (outcome_mean.size() != rows_after_b)
    throw ValidationError("outcome table has " +
                          std::to_string(outcome_mean.size()) +
                          " entries, expected " + std::to_string(rows_after_b));
  for (double v : outcome_mean)
    if (!std::isfinite(v)) throw ValidationError("non-finite outcome mean");
}

double DiscreteWorld::term_count() const {
  double terms = 1.0;
  for (int t = 1; t <= horizon; ++t)
    terms *= 2.0 * static_cast<double>(support_size(t));
  return terms;
}

int DiscreteWorld::support_index(int t, double value) const {
  const auto& sup = supports[static_cast<std::size_t>(t - 1)];
  for (std::size_t i = 0; i < sup.size(); ++i)
    if (std::fabs(sup[i] - value) <= 1e-9) return static_cast<int>(i);
  throw ValidationError("covariate value " + text::format_double(value) +
                        " is not in the world's support at t=" + std::to_string(t));
}

OracleWeight OracleWeight::hard_trim(double eps) {
  // eps > 1 is a degenerate never-flip weight; allowed for completeness.
  if (!(eps >= 0.0)) throw ConfigError("trim threshold must be nonnegative");
  OracleWeight w;
  w.kind = Kind::hard_trim;
  w.trim_eps = eps;
  return w;
}

double OracleWeight::value(double p) const {
  switch (kind) {
    case Kind::smooth:
      return weight_value(smooth, p);
    case Kind::hard_trim:
      return p >= trim_eps ? 1.0 : 0.0;
    case Kind::matching:
      return std::min(p, 1.0 - p);
  }
  throw Error("unreachable oracle weight kind");
}

bool OracleWeight::condition1() const {
  switch (kind) {
    case Kind::smooth:
      return check_identification(smooth) == IdentificationCondition::condition1;
    case Kind::hard_trim:
      return trim_eps > 0.0;
    case Kind::matching:
      return true;
  }
  throw Error("unreachable oracle weight kind");
}

std::string OracleWeight::name() const {
  switch (kind) {
    case Kind::smooth:
      return smooth.name();
    case Kind::hard_trim:
      return "trim:" + text::format_double(trim_eps);
    case Kind::matching:
      return "matching";
  }
  return "?";
}

OracleWeight OracleWeight::parse(std::string_view t) {
  if (t == "matching") return matching();
  if (t.rfind("trim", 0) == 0 && (t.size() == 4 || t[4] == ':')) {
    double eps = 0.1;
    if (t.size() > 4) {
      if (!text::parse_double(t.substr(5), eps))
        throw ConfigError("trim weight expects trim:<eps>");
    }
    return hard_trim(eps);
  }
  return wrap(SmoothWeight::parse(t));
}

}  // namespace flip::oracle
