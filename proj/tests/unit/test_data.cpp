#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "hinet/cohort_io.hpp"
#include "hinet/data.hpp"
#include "hinet/synth.hpp"
#include "oracles.hpp"

using namespace hinet;

namespace {

SurgeryRecord single_channel(const std::vector<double>& values, const std::vector<int>& observed) {
  SurgeryRecord r("x", 1, values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    r.values[t] = values[t];
    r.observed[t] = static_cast<std::uint8_t>(observed[t]);
  }
  return r;
}

std::vector<double> random_trace(Rng& rng, std::size_t n) {
  std::vector<double> s(n);
  // Sticky low/high regime so runs of every length appear.
  bool low = false;
  for (auto& v : s) {
    if (rng.uniform() < 0.25) low = !low;
    v = low ? 80.0 + static_cast<double>(rng.below(11)) : 91.0 + static_cast<double>(rng.below(9));
  }
  return s;
}

std::vector<oracle::Interval> as_oracle(const std::vector<EventInterval>& e) {
  std::vector<oracle::Interval> out;
  for (const auto& i : e) out.push_back({i.start, i.end});
  return out;
}

PreparedSurgery prepared_from_spo2(const std::vector<double>& spo2, std::size_t channels = 2) {
  SurgeryRecord r("p", channels, spo2.size());
  for (std::size_t t = 0; t < spo2.size(); ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      r.at(c, t) = c == 1 ? spo2[t] : static_cast<double>(t);
      r.observed[c * spo2.size() + t] = 1;
    }
  }
  PipelineConfig pc;
  pc.spo2_channel = 1;
  return prepare_surgery(r, Normalizer{std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)}, pc);
}

}  // namespace

TEST_CASE("carry-forward imputation boundary at 20 minutes") {
  std::vector<double> v(40, 0.0);
  std::vector<int> o(40, 0);
  v[10] = 97.0;
  o[10] = 1;
  const SurgeryRecord r = impute(single_channel(v, o), 5);
  for (std::size_t t = 0; t < 10; ++t) {
    CHECK(r.values[t] == 0.0);
    CHECK_FALSE(r.available[t]);
  }
  for (std::size_t t = 10; t <= 30; ++t) {
    CHECK(r.values[t] == 97.0);
    CHECK(r.available[t]);
  }
  for (std::size_t t = 31; t < 40; ++t) {
    CHECK(r.values[t] == 0.0);
    CHECK_FALSE(r.available[t]);
  }
}

TEST_CASE("imputation of never-observed and fully observed channels") {
  const SurgeryRecord never = impute(single_channel({5, 6, 7}, {0, 0, 0}), 5);
  for (double x : never.values) CHECK(x == 0.0);
  const std::vector<double> vals{1.5, 2.5, -3.0};
  const SurgeryRecord full = impute(single_channel(vals, {1, 1, 1}), 5);
  CHECK(full.values == vals);
}

TEST_CASE("aberrant SpO2 is treated as missing") {
  const SurgeryRecord r = impute(single_channel({97, 45, 59.9, 60, 95}, {1, 1, 1, 1, 1}), 0);
  CHECK(r.values == std::vector<double>{97, 97, 97, 60, 95});
  CHECK_FALSE(r.observed[1]);
  CHECK(r.observed[3]);
}

TEST_CASE("normaliser statistics") {
  Rng rng(1);
  std::vector<SurgeryRecord> train;
  for (int i = 0; i < 3; ++i) {
    SurgeryRecord r("t" + std::to_string(i), 3, 25);
    for (std::size_t t = 0; t < 25; ++t) {
      r.at(0, t) = 4.0;
      r.at(1, t) = rng.normal(12.0, 3.0);
      r.at(2, t) = rng.normal(-2.0, 0.5);
      for (std::size_t c = 0; c < 3; ++c) r.observed[c * 25 + t] = rng.uniform() < 0.9 ? 1 : 0;
    }
    train.push_back(impute(r, 99));
  }
  const Normalizer n = fit_normalizer(train);
  CHECK(n.stddev[0] == kStdFloor);
  for (std::size_t c = 1; c < 3; ++c) {
    double s = 0.0, sq = 0.0, cnt = 0.0;
    for (const auto& r : train) {
      const SurgeryRecord z = apply_normalizer(n, r);
      for (std::size_t t = 0; t < 25; ++t)
        if (r.is_available(c, t)) {
          s += z.at(c, t);
          sq += z.at(c, t) * z.at(c, t);
          cnt += 1.0;
        }
    }
    CHECK(std::abs(s / cnt) < 1e-9);
    CHECK(std::abs(sq / cnt - 1.0) < 1e-9);
  }
  for (const auto& r : train) {
    const SurgeryRecord z = apply_normalizer(n, r);
    for (std::size_t t = 0; t < 25; ++t)
      if (r.is_available(0, t)) CHECK(z.at(0, t) == 0.0);
  }

  SurgeryRecord unit("u", 1, 2);
  unit.values = {-1.0, 1.0};
  unit.observed = {1, 1};
  const auto ui = impute(unit, 9);
  const SurgeryRecord same = apply_normalizer(fit_normalizer(std::vector<SurgeryRecord>{ui}), ui);
  CHECK(std::abs(same.values[0] + 1.0) < 1e-9);
  CHECK(std::abs(same.values[1] - 1.0) < 1e-9);

  CHECK_THROWS_AS(fit_normalizer(std::vector<SurgeryRecord>{}), DataError);
}

TEST_CASE("event labelling examples") {
  const std::vector<double> a{95, 95, 89, 95};
  CHECK(label_events(a, Outcome::general) == std::vector<EventInterval>{{2, 2}});
  CHECK(label_events(a, Outcome::persistent).empty());
  const std::vector<double> b{95, 89, 89, 89, 89, 89, 95};
  CHECK(label_events(b, Outcome::general) == std::vector<EventInterval>{{1, 5}});
  CHECK(label_events(b, Outcome::persistent) == std::vector<EventInterval>{{1, 5}});
  const std::vector<double> c{90, std::nan(""), 90};
  CHECK(label_events(c, Outcome::general) == std::vector<EventInterval>{{0, 0}, {2, 2}});
}

TEST_CASE("labels and mask examples") {
  const std::vector<EventInterval> e{{20, 24}};
  const auto l = assign_labels_and_mask(e, 30, 5);
  for (std::size_t t = 0; t < 30; ++t) {
    CHECK(l.y[t] == (t >= 15 && t <= 19 ? 1 : 0));
    CHECK(l.m[t] == (t >= 20 && t <= 24 ? 0 : 1));
  }
  const auto none = assign_labels_and_mask({}, 12, 5);
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(none.y[t] == 0);
    CHECK(none.m[t] == 1);
  }
  // Three healthy minutes between back-to-back events are all positive.
  const std::vector<EventInterval> pair{{10, 14}, {18, 19}};
  const auto lp = assign_labels_and_mask(pair, 25, 5);
  for (std::size_t t = 15; t <= 17; ++t) {
    CHECK(lp.y[t] == 1);
    CHECK(lp.m[t] == 1);
  }
  CHECK(lp.y[12] == 0);
  CHECK(lp.m[12] == 0);
}

TEST_CASE("labelling matches run-length and brute-force oracles on random traces") {
  Rng rng(2);
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = random_trace(rng, 1 + rng.below(120));
    for (Outcome o : {Outcome::general, Outcome::persistent}) {
      const auto events = label_events(s, o);
      const auto ref = oracle::run_length_events(s, o == Outcome::general ? 1 : 5);
      CHECK(as_oracle(events) == ref);
      const auto l = assign_labels_and_mask(events, s.size(), 5);
      std::vector<std::uint8_t> y, m;
      oracle::brute_force_labels(ref, s.size(), 5, y, m);
      CHECK(l.y == y);
      CHECK(l.m == m);
      CHECK(assign_labels_and_mask(label_events(s, o), s.size(), 5).y == l.y);
    }
    // Every persistent event is contained in a general event.
    const auto g = label_events(s, Outcome::general);
    for (const auto& p : label_events(s, Outcome::persistent))
      CHECK(std::find(g.begin(), g.end(), p) != g.end());
  }
}

TEST_CASE("window extraction padding, count and alignment") {
  std::vector<double> spo2(40, 97.0);
  const std::size_t tau = 25;
  spo2[tau] = 88.0;
  const PreparedSurgery s = prepared_from_spo2(spo2);
  const WindowConfig wc{16, 6};
  const auto w = extract_windows(s, wc);
  CHECK(w.size() == 40);
  // t = 3: 12 leading zero columns, then minutes 0..3.
  for (std::size_t k = 0; k < 16; ++k) CHECK(w[3].x[k] == (k < 12 ? 0.0 : static_cast<double>(k - 12)));
  for (std::size_t t = 0; t < 40; ++t) {
    for (std::size_t k = 0; k < 16; ++k) {
      const long minute = static_cast<long>(t) - 16 + 1 + static_cast<long>(k) + 6;
      CHECK(w[t].u[k] == (minute == static_cast<long>(tau) ? 1 : 0));
    }
    CHECK(w[t].future_truncated == (t + 6 >= 40));
    CHECK(w[t].minute == t);
  }
  // Re-assembling the thresholded trace from the stored targets.
  std::vector<int> rebuilt(40, -1);
  for (std::size_t t = 0; t < 40; ++t)
    for (std::size_t k = 0; k < 16; ++k) {
      const long minute = static_cast<long>(t) - 15 + static_cast<long>(k) + 6;
      if (minute >= 0 && minute < 40) rebuilt[static_cast<std::size_t>(minute)] = w[t].u[k];
    }
  for (std::size_t t = 0; t < 40; ++t) CHECK(rebuilt[t] == s.low_spo2[t]);

  const PreparedSurgery one = prepared_from_spo2({97.0});
  const auto w1 = extract_windows(one, wc);
  REQUIRE(w1.size() == 1);
  for (std::size_t k = 0; k < 15; ++k) CHECK(w1[0].x[k] == 0.0);
}

TEST_CASE("prepared labels satisfy the outcome invariants") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spo2 = random_trace(rng, 60);
    const PreparedSurgery s = prepared_from_spo2(spo2);
    for (std::size_t t = 0; t < s.minutes; ++t) {
      bool inside = false, upcoming = false;
      for (const auto& e : s.events) {
        inside = inside || (t >= e.start && t <= e.end);
        upcoming = upcoming || (e.start > t && e.start <= t + 5);
      }
      if (!s.labels.m[t]) CHECK(inside);
      if (s.labels.m[t] && s.labels.y[t]) CHECK(upcoming);
    }
  }
}

TEST_CASE("cohort split") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));
  const auto s = split_cohort(ids, 1);
  CHECK(s.train.size() == 7);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 2);
  const auto again = split_cohort(ids, 1);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK_THROWS_AS(split_cohort(std::vector<std::string>(ids.begin(), ids.begin() + 9), 1), DataError);

  std::vector<std::string> many;
  for (int i = 0; i < 137; ++i) many.push_back("c" + std::to_string(i));
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto sp = split_cohort(many, seed);
    std::set<std::string> all;
    for (const auto* part : {&sp.train, &sp.validation, &sp.test}) all.insert(part->begin(), part->end());
    CHECK(all.size() == many.size());
    CHECK(sp.train.size() + sp.validation.size() + sp.test.size() == many.size());
  }
}

TEST_CASE("synthetic cohort hits incidence targets") {
  SynthSpec spec;
  spec.surgeries = 2000;
  const auto recs = synth_generate(spec);
  const auto rep = measure_incidence(recs);
  CHECK(std::abs(rep.general_incidence - 0.24) <= 0.03);
  CHECK(std::abs(rep.persistent_incidence - 0.019) <= 0.01);
  const double mean_minutes = static_cast<double>(rep.minutes) / 2000.0;
  CHECK(mean_minutes == doctest::Approx(89.0).epsilon(0.1));
  for (const auto& r : recs) CHECK(r.channels == kDefaultChannels);
}

TEST_CASE("synthetic generator determinism, missingness and validation") {
  SynthSpec spec;
  spec.surgeries = 20;
  spec.missing_rate = 0.0;
  spec.aberrant_rate = 0.0;
  const auto a = synth_generate(spec);
  for (const auto& r : a)
    for (auto o : r.observed) CHECK(o == 1);
  const auto b = synth_generate(spec);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(surgery_to_csv(a[i]) == surgery_to_csv(b[i]));

  SynthSpec bad = spec;
  bad.persistent_incidence = 0.5;
  bad.general_incidence = 0.2;
  CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
  bad = spec;
  bad.general_incidence = 1.0;
  CHECK_THROWS_AS(synth_generate(bad), std::invalid_argument);
}

TEST_CASE("cohort csv round trip and diagnostics") {
  SynthSpec spec;
  spec.surgeries = 12;
  const auto recs = synth_generate(spec);
  const auto dir = std::filesystem::temp_directory_path() / "hinet_cohort_test";
  std::filesystem::remove_all(dir);
  write_cohort(dir, recs);
  const auto back = load_cohort(dir);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].id == recs[i].id);
    CHECK(back[i].observed == recs[i].observed);
    for (std::size_t j = 0; j < recs[i].values.size(); ++j)
      if (recs[i].observed[j]) CHECK(back[i].values[j] == doctest::Approx(recs[i].values[j]).epsilon(1e-9));
  }
  std::filesystem::remove_all(dir);

  std::string header = "minute";
  for (const auto& n : default_channel_names()) header += "," + n;
  const std::string row_ok = "0" + std::string(18, ',');
  CHECK(surgery_from_csv(header + "\n" + row_ok + "\n", "ok").minutes == 1);
  try {
    surgery_from_csv(header + "\n" + row_ok + "\n1,abc" + std::string(17, ',') + "\n", "bad");
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 3") != std::string::npos);
    CHECK(msg.find("ibp_diastolic") != std::string::npos);
  }
  CHECK_THROWS_AS(surgery_from_csv(header + "\n0,1\n", "short"), DataError);
}
