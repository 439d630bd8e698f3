#include "mc/evalstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mc/error.hpp"

namespace mc::evalstats {

namespace {

std::vector<double> as_doubles(std::span<const int> values) { return {values.begin(), values.end()}; }

// Continued fraction for I_x(a,b) (modified Lentz), valid for x < (a+1)/(a+b+2).
double beta_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  constexpr int kMaxIter = 100000;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h;
}

// I_x(a,b) with y = 1 - x supplied by the caller to avoid cancellation.
double ibeta(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_fraction(b, a, y) / b;
}

// P(|T| >= |t|) for Student t with df degrees of freedom.
double two_sided_tail(double t, double df) {
  if (t == 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  return std::clamp(ibeta(0.5 * df, 0.5, x, y), 0.0, 1.0);
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string drop_leading_zero(std::string s) {
  if (s.rfind("0.", 0) == 0) return s.substr(1);
  if (s.rfind("-0.", 0) == 0) return "-" + s.substr(2);
  return s;
}

std::string pad(std::string s, std::size_t width) {
  // Width counts code points so the ± column lines up.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  if (cps < width) s.append(width - cps, ' ');
  return s;
}

}  // namespace

void SurveyResponse::validate() const {
  if (session_number < 1 || session_number > 3) {
    throw ValidationError("session_number must be 1, 2 or 3");
  }
  for (const auto& st : kStatements) {
    const auto it = ratings.find(std::string(st.id));
    if (it == ratings.end()) throw ValidationError("missing rating for " + std::string(st.id));
    if (it->second < 1 || it->second > 5) {
      throw ValidationError("rating for " + std::string(st.id) + " must be an integer in [1,5]");
    }
  }
  if (ratings.size() != kStatements.size()) throw ValidationError("ratings contain unknown statement ids");
}

Json to_json(const SurveyResponse& r) {
  Json ratings = Json::object();
  for (const auto& st : kStatements) {
    const auto it = r.ratings.find(std::string(st.id));
    if (it != r.ratings.end()) ratings[std::string(st.id)] = it->second;
  }
  return Json{{"session_id", r.session_id},
              {"participant_id", r.participant_id},
              {"session_number", r.session_number},
              {"ratings", std::move(ratings)}};
}

SurveyResponse survey_response_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("survey response must be a JSON object");
  SurveyResponse r;
  auto text = [&](const char* key) {
    if (!j.contains(key)) return std::string();
    if (!j.at(key).is_string()) throw ValidationError(std::string(key) + " must be a string");
    return j.at(key).get<std::string>();
  };
  r.session_id = text("session_id");
  r.participant_id = text("participant_id");
  if (!j.contains("session_number") || !j.at("session_number").is_number_integer()) {
    throw ValidationError("session_number must be an integer");
  }
  r.session_number = j.at("session_number").get<int>();
  if (!j.contains("ratings") || !j.at("ratings").is_object()) throw ValidationError("ratings must be an object");
  for (const auto& [key, value] : j.at("ratings").items()) {
    if (!value.is_number_integer()) throw ValidationError("rating for " + key + " must be an integer in [1,5]");
    const auto v = value.get<long long>();
    if (v < 1 || v > 5) throw ValidationError("rating for " + key + " must be an integer in [1,5]");
    r.ratings[key] = static_cast<int>(v);
  }
  r.validate();
  return r;
}

std::vector<SurveyResponse> load_responses_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open survey responses " + path.string());
  std::vector<SurveyResponse> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(survey_response_from_json(Json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

double mode(std::span<const int> values) {
  if (values.empty()) throw ContractViolation("mode of an empty sample");
  std::map<int, std::size_t> counts;
  for (int v : values) counts[v]++;
  int best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [v, c] : counts) {
    if (c > best_count) {
      best = v;
      best_count = c;
    }
  }
  return best;
}

double median_tie_avg(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("median of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

double median_tie_avg(std::span<const int> values) {
  const auto d = as_doubles(values);
  return median_tie_avg(std::span<const double>(d));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ContractViolation("mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
  if (values.size() < 2) throw ContractViolation("sample standard deviation needs n >= 2");
  const double m = mean(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw ContractViolation("incomplete_beta needs a, b > 0");
  if (x < 0 || x > 1) throw ContractViolation("incomplete_beta needs x in [0,1]");
  return ibeta(a, b, x, 1.0 - x);
}

double t_cdf(double t, double df) {
  if (!(df >= 1)) throw ContractViolation("t_cdf needs df >= 1");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (t == 0.0) return 0.5;
  const double tail = 0.5 * two_sided_tail(t, df);
  return t > 0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double df) {
  if (!(p > 0 && p < 1)) throw ContractViolation("t_quantile needs p in (0,1)");
  double lo = -1.0;
  double hi = 1.0;
  while (t_cdf(lo, df) > p) lo *= 2.0;
  while (t_cdf(hi, df) < p) hi *= 2.0;
  for (int i = 0; i < 400 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (t_cdf(mid, df) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TTest one_sample_t(std::span<const double> values, double mu0) {
  if (values.size() < 2) throw ContractViolation("one-sample t-test needs n >= 2");
  // Work on deviations from mu0 so shifting values and mu0 together is exact.
  std::vector<double> d(values.begin(), values.end());
  for (auto& v : d) v -= mu0;
  const double m = mean(d);
  const double s = sample_sd(d);
  const double df = static_cast<double>(values.size() - 1);
  TTest out;
  if (s == 0.0) {
    out.degenerate = true;
    if (m == 0.0) {
      out.t = 0.0;
      out.p = 1.0;
    } else {
      out.t = m > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
    }
    return out;
  }
  out.t = m / (s / std::sqrt(static_cast<double>(values.size())));
  out.p = two_sided_tail(out.t, df);
  return out;
}

MeanCi mean_ci95(std::span<const double> values) {
  if (values.size() < 2) throw ContractViolation("confidence interval needs n >= 2");
  MeanCi out;
  out.mean = mean(values);
  const double s = sample_sd(values);
  if (s == 0.0) return out;
  const double crit = t_quantile(0.975, static_cast<double>(values.size() - 1));
  out.halfwidth = crit * s / std::sqrt(static_cast<double>(values.size()));
  return out;
}

std::vector<SurveyStats> summarize_survey(std::span<const SurveyResponse> responses) {
  std::map<std::pair<std::size_t, int>, std::vector<int>> groups;
  for (const auto& r : responses) {
    r.validate();
    for (std::size_t k = 0; k < kStatements.size(); ++k) {
      groups[{k, r.session_number}].push_back(r.ratings.at(std::string(kStatements[k].id)));
    }
  }
  std::vector<SurveyStats> out;
  for (const auto& [key, ints] : groups) {
    SurveyStats s;
    s.statement_id = std::string(kStatements[key.first].id);
    s.session_number = key.second;
    s.n = ints.size();
    const auto values = as_doubles(ints);
    s.mode = mode(ints);
    s.median = median_tie_avg(std::span<const double>(values));
    s.mean = mean(values);
    if (values.size() >= 2) {
      s.ci95_halfwidth = mean_ci95(values).halfwidth;
      const auto tt = one_sample_t(values, kLikertMidpoint);
      s.t = tt.t;
      s.p = tt.p;
      s.degenerate = tt.degenerate;
    } else {
      s.degenerate = true;
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_ci(double mean, double halfwidth) {
  return fixed1(mean) + " ± " + drop_leading_zero(fixed1(halfwidth));
}

std::string format_p(double p) {
  // Truncation; the epsilon keeps 0.29 (stored as 0.28999...) at .29.
  const double cents = std::floor(std::clamp(p, 0.0, 1.0) * 100.0 + 1e-9);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", cents / 100.0);
  return drop_leading_zero(buf);
}

std::string format_mode(double m) {
  if (m == std::floor(m)) return std::to_string(static_cast<long long>(m));
  return fixed1(m);
}

std::string format_median(double median) { return fixed1(median); }

namespace {

const SurveyStats* find_stats(std::span<const SurveyStats> stats, std::string_view id, int session) {
  for (const auto& s : stats) {
    if (s.statement_id == id && s.session_number == session) return &s;
  }
  return nullptr;
}

struct Cells {
  std::string mode = "-";
  std::string median = "-";
  std::string ci = "-";
  std::string p = "-";
};

Cells cells_for(const SurveyStats* s) {
  Cells c;
  if (s == nullptr) return c;
  c.mode = format_mode(s->mode);
  c.median = format_median(s->median);
  if (s->ci95_halfwidth) c.ci = format_ci(s->mean, *s->ci95_halfwidth);
  if (s->p) c.p = format_p(*s->p);
  return c;
}

}  // namespace

std::string render_table(std::span<const SurveyStats> stats) {
  constexpr int kSessions = 3;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Statement"};
  for (auto group : {"Mode", "Median", "95% C.I.", "p"}) {
    for (int s = 1; s <= kSessions; ++s) header.push_back(std::string(group) + " " + std::to_string(s));
  }
  rows.push_back(header);
  if (!stats.empty()) {
    for (const auto& st : kStatements) {
      std::vector<std::string> row{std::string(st.id) + ": " + std::string(st.text)};
      std::array<Cells, kSessions> cells;
      for (int s = 1; s <= kSessions; ++s) cells[s - 1] = cells_for(find_stats(stats, st.id, s));
      for (const auto& c : cells) row.push_back(c.mode);
      for (const auto& c : cells) row.push_back(c.median);
      for (const auto& c : cells) row.push_back(c.ci);
      for (const auto& c : cells) row.push_back(c.p);
      rows.push_back(std::move(row));
    }
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::size_t cps = 0;
      for (unsigned char ch : row[c]) cps += (ch & 0xC0) != 0x80;
      width[c] = std::max(width[c], cps);
    }
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += " | ";
      line += pad(row[c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

std::string render_tsv(std::span<const SurveyStats> stats) {
  std::string out =
      "statement\tsession\tn\tmode\tmedian\tmean\tci95_halfwidth\tt\tp\tdegenerate\tci_display\tp_display\n";
  auto num = [](std::optional<double> v) { return v ? Json(*v).dump() : std::string(); };
  for (const auto& s : stats) {
    const auto c = cells_for(&s);
    out += s.statement_id + "\t" + std::to_string(s.session_number) + "\t" + std::to_string(s.n) + "\t" +
           format_mode(s.mode) + "\t" + format_median(s.median) + "\t" + Json(s.mean).dump() + "\t" +
           num(s.ci95_halfwidth) + "\t" + num(s.t) + "\t" + num(s.p) + "\t" + (s.degenerate ? "1" : "0") + "\t" +
           c.ci + "\t" + c.p + "\n";
  }
  return out;
}

Json to_json(const SurveyStats& s) {
  auto opt = [](std::optional<double> v) -> Json {
    if (!v) return nullptr;
    if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
    return *v;
  };
  return Json{{"statement_id", s.statement_id},
              {"session_number", s.session_number},
              {"n", s.n},
              {"mode", s.mode},
              {"median", s.median},
              {"mean", s.mean},
              {"ci95_halfwidth", opt(s.ci95_halfwidth)},
              {"t", opt(s.t)},
              {"p", opt(s.p)},
              {"degenerate", s.degenerate}};
}

Json summary_json(std::span<const SurveyStats> stats) {
  Json rows = Json::array();
  for (const auto& s : stats) rows.push_back(to_json(s));
  return Json{{"rows", std::move(rows)}, {"table", render_table(stats)}};
}

}  // namespace mc::evalstats
