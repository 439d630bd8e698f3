#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "mc/error.hpp"
#include "mc/evalstats.hpp"
#include "oracles/stats_oracle.hpp"

using namespace mc;
using namespace mc::evalstats;

namespace {

std::vector<int> likert_sample(Rng& rng, std::size_t n) {
  std::vector<int> v(n);
  for (auto& x : v) x = 1 + static_cast<int>(rng.below(5));
  return v;
}

std::vector<double> doubles(const std::vector<int>& v) { return {v.begin(), v.end()}; }

SurveyResponse response(Rng& rng, int session, const std::string& id) {
  SurveyResponse r;
  r.session_id = id;
  r.participant_id = "p-" + id;
  r.session_number = session;
  for (const auto& st : kStatements) r.ratings[std::string(st.id)] = 1 + static_cast<int>(rng.below(5));
  return r;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto bar = line.find(" | ", start);
    out.push_back(std::string(trim(line.substr(start, bar - start))));
    if (bar == std::string::npos) break;
    start = bar + 3;
  }
  return out;
}

}  // namespace

TEST_CASE("worked examples") {
  const std::vector<double> v{4, 4, 4, 4, 5, 5, 3, 3};
  const auto tt = one_sample_t(v, 3.0);
  CHECK(tt.t == doctest::Approx(3.7417).epsilon(1e-4));
  CHECK(tt.p == doctest::Approx(0.0072).epsilon(0.02));
  CHECK_FALSE(tt.degenerate);

  CHECK(t_cdf(2.0, 10) == doctest::Approx(0.963306).epsilon(1e-5));
  CHECK(t_cdf(50.0, 10) >= 1.0 - 1e-9);
  CHECK(std::abs(t_quantile(0.975, 25) - 2.0595) <= 5e-4);

  // n = 26 at the critical value sits at p = .05.
  std::vector<double> sample(26, 0.0);
  Rng rng(3);
  for (auto& x : sample) x = rng.uniform(-1, 1);
  const double m = mean(sample);
  const double s = sample_sd(sample);
  const double mu0 = m - 2.0595 * s / std::sqrt(26.0);
  CHECK(one_sample_t(sample, mu0).p == doctest::Approx(0.05).epsilon(1e-3));
}

TEST_CASE("mode and median conventions") {
  const std::vector<int> tie{5, 2, 5, 2, 3};
  CHECK(mode(tie) == 2);
  const std::vector<int> single{4};
  CHECK(mode(single) == 4);
  CHECK(median_tie_avg(std::vector<int>{1, 2, 4, 5}) == 3.0);
  CHECK(median_tie_avg(std::vector<int>{1, 2, 5}) == 2.0);
  CHECK(median_tie_avg(std::vector<int>{2, 3}) == 2.5);
  CHECK_THROWS_AS(mode(std::vector<int>{}), ContractViolation);
  CHECK_THROWS_AS(median_tie_avg(std::vector<double>{}), ContractViolation);
  CHECK_THROWS_AS(mean(std::vector<double>{}), ContractViolation);
  CHECK_THROWS_AS(sample_sd(std::vector<double>{1.0}), ContractViolation);
  CHECK_THROWS_AS(one_sample_t(std::vector<double>{1.0}), ContractViolation);
  CHECK_THROWS_AS(mean_ci95(std::vector<double>{1.0}), ContractViolation);
}

TEST_CASE("zero variance") {
  const std::vector<double> at_mid{3, 3, 3};
  auto tt = one_sample_t(at_mid, 3.0);
  CHECK(tt.t == 0.0);
  CHECK(tt.p == 1.0);
  CHECK(tt.degenerate);
  tt = one_sample_t(std::vector<double>{4, 4, 4}, 3.0);
  CHECK(std::isinf(tt.t));
  CHECK(tt.t > 0);
  CHECK(tt.p == 0.0);
  CHECK(mean_ci95(at_mid).halfwidth == 0.0);
}

TEST_CASE("statistics agree with the brute-force oracle on random samples") {
  Rng rng(2024);
  double worst_stat = 0;
  double worst_p = 0;
  std::map<std::size_t, double> crit;  // the oracle quantile is slow; one per df
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(39);
    const auto ints = likert_sample(rng, n);
    const auto v = doubles(ints);
    CAPTURE(trial);
    CHECK(mode(ints) == oracle::mode(ints));
    CHECK(median_tie_avg(ints) == oracle::median(v));
    worst_stat = std::max(worst_stat, std::abs(mean(v) - oracle::mean(v)));
    worst_stat = std::max(worst_stat, std::abs(sample_sd(v) - oracle::sd(v)));

    const double sd = oracle::sd(v);
    const auto ci = mean_ci95(v);
    if (!crit.count(n)) crit[n] = oracle::t_quantile(0.975, double(n - 1));
    const double expected_hw = sd == 0 ? 0.0 : crit[n] * sd / std::sqrt(double(n));
    worst_stat = std::max(worst_stat, std::abs(ci.halfwidth - expected_hw));

    const auto tt = one_sample_t(v, 3.0);
    if (sd > 0) {
      const double t = (oracle::mean(v) - 3.0) / (sd / std::sqrt(double(n)));
      worst_stat = std::max(worst_stat, std::abs(tt.t - t) / std::max(1.0, std::abs(t)));
      worst_p = std::max(worst_p, std::abs(tt.p - oracle::two_sided_p(t, double(n - 1))));
    }
    CHECK(tt.p >= 0.0);
    CHECK(tt.p <= 1.0);
  }
  CHECK(worst_stat <= 1e-6);
  CHECK(worst_p <= 1e-4);
}

TEST_CASE("t distribution properties") {
  for (double df : {1.0, 2.0, 5.0, 17.0, 60.0}) {
    double prev = 0;
    for (double t = -30; t <= 30; t += 0.25) {
      const double c = t_cdf(t, df);
      CHECK(c >= prev);
      prev = c;
      CHECK(std::abs(t_cdf(-t, df) + t_cdf(t, df) - 1.0) <= 1e-9);
    }
    for (double t : {0.1, 0.7, 1.5, 3.0, 8.0}) {
      CHECK(t_cdf(t, df) == doctest::Approx(oracle::t_cdf(t, df)).epsilon(1e-8));
    }
    for (double p : {0.6, 0.9, 0.975, 0.995}) {
      CHECK(t_cdf(t_quantile(p, df), df) == doctest::Approx(p).epsilon(1e-8));
    }
  }
  CHECK(t_cdf(0.0, 4) == 0.5);
  CHECK_THROWS_AS(t_cdf(1.0, 0.5), ContractViolation);
  CHECK_THROWS_AS(t_quantile(1.0, 5), ContractViolation);
  CHECK(incomplete_beta(2, 3, 0) == 0.0);
  CHECK(incomplete_beta(2, 3, 1) == 1.0);
  // I_x(1,1) is the identity.
  CHECK(incomplete_beta(1, 1, 0.37) == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("invariances") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    auto ints = likert_sample(rng, 2 + rng.below(20));
    auto v = doubles(ints);
    const auto before_mode = mode(ints);
    const auto before_median = median_tie_avg(ints);
    rng.shuffle(ints);
    CHECK(mode(ints) == before_mode);
    CHECK(median_tie_avg(ints) == before_median);

    const double c = static_cast<double>(static_cast<int>(rng.below(9)) - 4);
    auto shifted = v;
    for (auto& x : shifted) x += c;
    const auto a = mean_ci95(v);
    const auto b = mean_ci95(shifted);
    CHECK(b.mean == doctest::Approx(a.mean + c).epsilon(1e-12));
    CHECK(b.halfwidth == doctest::Approx(a.halfwidth).epsilon(1e-12));
    CHECK(sample_sd(shifted) == doctest::Approx(sample_sd(v)).epsilon(1e-12));
    const auto t0 = one_sample_t(v, 3.0);
    const auto t1 = one_sample_t(shifted, 3.0 + c);
    CHECK(t0.t == t1.t);
    CHECK(t0.p == t1.p);
    if (oracle::mean(v) > 3.0) CHECK(t0.t > 0);
  }
}

TEST_CASE("display formats") {
  CHECK(format_ci(3.94, 0.31) == "3.9 ± .3");
  CHECK(format_ci(4.0, 1.26) == "4.0 ± 1.3");
  CHECK(format_p(0.0) == ".00");
  CHECK(format_p(0.0449) == ".04");
  CHECK(format_p(0.049999) == ".04");
  CHECK(format_p(0.29) == ".29");
  CHECK(format_p(1.0) == "1.00");
  CHECK(format_mode(4) == "4");
  CHECK(format_median(3.5) == "3.5");
  CHECK(format_median(4) == "4.0");
}

TEST_CASE("cohort summary table") {
  Rng rng(9);
  std::vector<SurveyResponse> rs;
  const std::array<int, 3> cohort{26, 18, 7};
  for (int s = 1; s <= 3; ++s) {
    for (int i = 0; i < cohort[s - 1]; ++i) rs.push_back(response(rng, s, std::to_string(s) + "-" + std::to_string(i)));
  }
  const auto stats = summarize_survey(rs);
  REQUIRE(stats.size() == 27);
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const auto& st = stats[k];
    CHECK(st.statement_id == kStatements[k / 3].id);
    CHECK(st.session_number == int(k % 3) + 1);
    CHECK(st.n == std::size_t(cohort[k % 3]));
    std::vector<int> col;
    for (const auto& r : rs) {
      if (r.session_number == st.session_number) col.push_back(r.ratings.at(st.statement_id));
    }
    const auto v = doubles(col);
    CHECK(st.mode == oracle::mode(col));
    CHECK(st.median == oracle::median(v));
    CHECK(st.mean == doctest::Approx(oracle::mean(v)).epsilon(1e-12));
    REQUIRE(st.p.has_value());
    const double t = (oracle::mean(v) - 3.0) / (oracle::sd(v) / std::sqrt(double(v.size())));
    CHECK(*st.p == doctest::Approx(oracle::two_sided_p(t, double(v.size() - 1))).epsilon(1e-6));
  }

  const auto table = render_table(stats);
  const auto lines = split(table, '\n');
  REQUIRE(lines.size() >= 10);
  const auto header = split_cells(lines[0]);
  REQUIRE(header.size() == 13);
  CHECK(header[1] == "Mode 1");
  CHECK(header[12] == "p 3");
  for (std::size_t row = 1; row <= 9; ++row) {
    const auto cells = split_cells(lines[row]);
    REQUIRE(cells.size() == 13);
    CHECK(cells[0].rfind(std::string(kStatements[row - 1].id) + ": ", 0) == 0);
    for (std::size_t c = 1; c < 13; ++c) CHECK(cells[c] != "-");
    for (std::size_t c = 7; c < 10; ++c) CHECK(cells[c].find(" ± ") != std::string::npos);
  }
  const auto j = summary_json(stats);
  CHECK(j["rows"].size() == 27);
  CHECK(j["table"] == table);
  const auto tsv = split(render_tsv(stats), '\n');
  CHECK(tsv.size() >= 28);
}

TEST_CASE("single response is degenerate") {
  Rng rng(1);
  const std::vector<SurveyResponse> rs{response(rng, 2, "only")};
  const auto stats = summarize_survey(rs);
  REQUIRE(stats.size() == 9);
  for (const auto& s : stats) {
    CHECK(s.n == 1);
    CHECK(s.session_number == 2);
    CHECK(s.degenerate);
    CHECK_FALSE(s.t.has_value());
    CHECK_FALSE(s.p.has_value());
    CHECK_FALSE(s.ci95_halfwidth.has_value());
    CHECK(s.mode == s.median);
  }
  const auto table = render_table(stats);
  const auto row = split_cells(split(table, '\n')[1]);
  CHECK(row[1] == "-");  // session 1 empty
  CHECK(row[2] != "-");
  CHECK(row[8] == "-");  // no CI for n = 1
  CHECK(row[11] == "-");
  CHECK(to_json(stats[0])["t"].is_null());
}

TEST_CASE("survey response validation") {
  Rng rng(4);
  auto r = response(rng, 1, "a");
  CHECK_NOTHROW(r.validate());
  CHECK(survey_response_from_json(to_json(r)) == r);

  auto j = to_json(r);
  j["ratings"]["S3"] = 6;
  CHECK_THROWS_AS(survey_response_from_json(j), ValidationError);
  j = to_json(r);
  j["ratings"]["S3"] = 2.5;
  CHECK_THROWS_AS(survey_response_from_json(j), ValidationError);
  j = to_json(r);
  j["ratings"].erase("S9");
  CHECK_THROWS_AS(survey_response_from_json(j), ValidationError);
  j = to_json(r);
  j["ratings"]["S10"] = 3;
  CHECK_THROWS_AS(survey_response_from_json(j), ValidationError);
  j = to_json(r);
  j["session_number"] = 4;
  CHECK_THROWS_AS(survey_response_from_json(j), ValidationError);
  CHECK_THROWS_AS(survey_response_from_json(Json::array()), ValidationError);

  const auto dir = std::filesystem::temp_directory_path() / "mc_evalstats_test";
  std::filesystem::create_directories(dir);
  const auto good = dir / "good.jsonl";
  {
    std::ofstream out(good);
    out << to_json(r).dump() << "\n\n" << to_json(response(rng, 3, "b")).dump() << "\n";
  }
  CHECK(load_responses_jsonl(good).size() == 2);
  const auto bad = dir / "bad.jsonl";
  {
    std::ofstream out(bad);
    out << to_json(r).dump() << "\n{not json\n";
  }
  try {
    load_responses_jsonl(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  CHECK_THROWS_AS(load_responses_jsonl(dir / "missing.jsonl"), ConfigError);
  std::filesystem::remove_all(dir);
}
