#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mc/util.hpp"

// Post-session Likert survey and its summary statistics: mode, median,
// 95% confidence interval and a two-sided one-sample t-test against the
// scale midpoint.
namespace mc::evalstats {

struct Statement {
  std::string_view id;
  std::string_view text;
};

inline constexpr std::array<Statement, 9> kStatements{{
    {"S1", "I found Grace easy to understand."},
    {"S2", "I knew what I could say or do at each point of the dialogue."},
    {"S3", "The system worked the way I expected."},
    {"S4", "I would like to use this system regularly."},
    {"S5", "I like interacting with Grace."},
    {"S6", "Grace seems smart."},
    {"S7", "Grace's dialogue seems natural."},
    {"S8", "Grace asked interesting questions about the text we were discussing."},
    {"S9", "It made sense for Grace to ask the questions we discussed."},
}};

inline constexpr double kLikertMidpoint = 3.0;

struct SurveyResponse {
  std::string session_id;
  std::string participant_id;
  int session_number = 1;  // 1..3
  std::map<std::string, int> ratings;  // S1..S9 -> 1..5

  // Throws ValidationError naming the first problem.
  void validate() const;
  bool operator==(const SurveyResponse&) const = default;
};

Json to_json(const SurveyResponse& r);
SurveyResponse survey_response_from_json(const Json& j);
std::vector<SurveyResponse> load_responses_jsonl(const std::filesystem::path& path);

// Most frequent value; the smallest one on a frequency tie.
double mode(std::span<const int> values);
// Middle value, or the mean of the two middle values for even n.
double median_tie_avg(std::span<const double> values);
double median_tie_avg(std::span<const int> values);
double mean(std::span<const double> values);
// Sample standard deviation (n - 1 denominator).
double sample_sd(std::span<const double> values);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);
// Student t CDF with df degrees of freedom.
double t_cdf(double t, double df);
// Inverse of t_cdf by bisection, to 1e-9.
double t_quantile(double p, double df);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;
};

// Two-sided; zero variance gives t = 0, p = 1 when the mean equals mu0 and
// t = +/-inf, p = 0 otherwise.
TTest one_sample_t(std::span<const double> values, double mu0 = kLikertMidpoint);

struct MeanCi {
  double mean = 0.0;
  double halfwidth = 0.0;
};

MeanCi mean_ci95(std::span<const double> values);

struct SurveyStats {
  std::string statement_id;
  int session_number = 1;
  std::size_t n = 0;
  double mode = 0.0;
  double median = 0.0;
  double mean = 0.0;
  std::optional<double> ci95_halfwidth;
  std::optional<double> t;
  std::optional<double> p;
  bool degenerate = false;

  bool operator==(const SurveyStats&) const = default;
};

// One row per (statement, session) group, ordered by statement then session.
std::vector<SurveyStats> summarize_survey(std::span<const SurveyResponse> responses);

// "3.9 ± .3": one decimal, leading zero dropped on the half-width.
std::string format_ci(double mean, double halfwidth);
// Truncated to two decimals with the leading zero dropped: ".00", ".04".
std::string format_p(double p);
std::string format_mode(double mode);
std::string format_median(double median);

// Statements x sessions x {mode, median, CI, p}; missing cells render "-".
std::string render_table(std::span<const SurveyStats> stats);
std::string render_tsv(std::span<const SurveyStats> stats);
Json to_json(const SurveyStats& s);
Json summary_json(std::span<const SurveyStats> stats);

}  // namespace mc::evalstats
