#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <sstream>

#include "sts/config.hpp"
#include "sts/data_io.hpp"
#include "sts/errors.hpp"
#include "support.hpp"

namespace sts {
namespace {

// ---- metrics ---------------------------------------------------------------

TEST(Metrics, HandExample) {
  const std::vector<double> truth{0, 2}, pred{0, 1};
  const MetricsReport m = compute_metrics(truth, pred);
  EXPECT_DOUBLE_EQ(m.mae, 0.5);
  EXPECT_NEAR(m.rmse, 0.7071, 1e-4);
  EXPECT_DOUBLE_EQ(m.mae_star.value(), 1.0);
  EXPECT_DOUBLE_EQ(m.rmse_star.value(), 1.0);
  EXPECT_EQ(m.n_samples, 2u);
  EXPECT_EQ(m.n_nonzero, 1u);
  EXPECT_DOUBLE_EQ(m.zero_ratio, 0.5);
  EXPECT_EQ(m.to_text(),
            "mae=0.5000\nrmse=0.7071\nmae_star=1.0000\nrmse_star=1.0000\nzero_ratio=0.5000\n"
            "n_samples=2\nn_nonzero=1\n");
  EXPECT_EQ(m.csv_row(), "0.5000,0.7071,1.0000,1.0000,0.5000,2,1");
}

TEST(Metrics, AllZeroTruthHasNoStarredMetrics) {
  const std::vector<double> truth{0, 0, 0}, pred{1, 0, 2};
  const MetricsReport m = compute_metrics(truth, pred);
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_FALSE(m.mae_star.has_value());
  EXPECT_NE(m.to_text().find("mae_star=NA"), std::string::npos);
  EXPECT_THROW(MetricsAccumulator{}.report(), ContractError);
  EXPECT_THROW(compute_metrics(truth, std::vector<double>{1.0}), DimensionError);
}

TEST(Metrics, IdentitiesOnRandomSamples) {
  test::Rng rng(80);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    std::vector<double> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = rng.uniform() < 0.6 ? 0.0 : std::floor(rng.uniform(1, 6));
      pred[i] = rng.uniform(0, 4);
    }
    const MetricsReport m = compute_metrics(truth, pred);
    double abs_all = 0, sq_all = 0, abs_nz = 0, sq_nz = 0, abs_z = 0, sq_z = 0;
    std::size_t nz = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = truth[i] - pred[i];
      abs_all += std::abs(e);
      sq_all += e * e;
      if (truth[i] != 0) {
        ++nz;
        abs_nz += std::abs(e);
        sq_nz += e * e;
      } else {
        abs_z += std::abs(e);
        sq_z += e * e;
      }
    }
    EXPECT_NEAR(m.mae, abs_all / n, 1e-12);
    EXPECT_NEAR(m.rmse, std::sqrt(sq_all / n), 1e-12);
    EXPECT_LE(m.mae, m.rmse + 1e-12);
    EXPECT_EQ(m.n_nonzero, nz);
    if (nz == 0) {
      EXPECT_FALSE(m.mae_star);
      continue;
    }
    EXPECT_NEAR(*m.mae_star, abs_nz / nz, 1e-12);
    EXPECT_NEAR(*m.rmse_star, std::sqrt(sq_nz / nz), 1e-12);
    EXPECT_LE(*m.mae_star, *m.rmse_star + 1e-12);
    EXPECT_NEAR(m.mae * n, *m.mae_star * nz + abs_z, 1e-9);
    EXPECT_NEAR(m.rmse * m.rmse * n, *m.rmse_star * *m.rmse_star * nz + sq_z, 1e-9);
  }
}

TEST(Metrics, AccumulatorMatchesOneShot) {
  test::Rng rng(81);
  std::vector<double> truth(40), pred(40);
  for (std::size_t i = 0; i < 40; ++i) {
    truth[i] = std::floor(rng.uniform(0, 3));
    pred[i] = rng.uniform(0, 3);
  }
  MetricsAccumulator acc;
  for (std::size_t k = 0; k < 40; k += 8)
    acc.add(std::span(truth).subspan(k, 8), std::span(pred).subspan(k, 8));
  const MetricsReport a = acc.report(), b = compute_metrics(truth, pred);
  EXPECT_EQ(a.mae, b.mae);
  EXPECT_EQ(a.rmse_star, b.rmse_star);
}

// ---- timestamps ------------------------------------------------------------

std::int64_t utc(int y, int mo, int d, int h = 0, int mi = 0, int s = 0) {
  std::tm tm{};
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<std::int64_t>(timegm(&tm));
}

TEST(Timestamp, ParsesSupportedForms) {
  EXPECT_EQ(parse_timestamp("2014-01-01").seconds, utc(2014, 1, 1));
  EXPECT_EQ(parse_timestamp("2014-01-01T00:00:00").seconds, 1388534400);
  EXPECT_EQ(parse_timestamp("2014-03-05 13:14:15").seconds, utc(2014, 3, 5, 13, 14, 15));
  EXPECT_EQ(parse_timestamp("2014-03-05T13:14:15Z").seconds, utc(2014, 3, 5, 13, 14, 15));
  EXPECT_EQ(parse_timestamp("2014-01-01T00:00:00+01:00").seconds, utc(2013, 12, 31, 23));
  EXPECT_EQ(parse_timestamp("2014-01-01T00:00:00-05:30").seconds, utc(2014, 1, 1, 5, 30));
  const Timestamp f = parse_timestamp("2016-02-29T12:00:00.250");
  EXPECT_EQ(f.seconds, utc(2016, 2, 29, 12));
  EXPECT_DOUBLE_EQ(f.fraction, 0.25);
  EXPECT_EQ(parse_timestamp("1969-12-31T23:59:59Z").seconds, -1);
}

TEST(Timestamp, RejectsMalformedText) {
  for (const char* bad : {"", "2014", "2014-13-01", "2015-02-29", "2014-01-01T24:00:00", "2014-01-01T00:00",
                          "2014-01-01X00:00:00", "2014-01-01T00:00:00.", "2014-01-01T00:00:00+0100", "yesterday"}) {
    EXPECT_THROW(parse_timestamp(bad), DataError) << bad;
  }
}

TEST(Timestamp, FormatMatchesTheSystemCalendar) {
  EXPECT_EQ(format_timestamp(1388534400), "2014-01-01T00:00:00Z");
  EXPECT_EQ(format_timestamp(-1), "1969-12-31T23:59:59Z");
  test::Rng rng(82);
  for (int k = 0; k < 500; ++k) {
    const auto s = static_cast<std::int64_t>(rng.uniform(-2e9, 4e9));
    const std::time_t tt = static_cast<std::time_t>(s);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    EXPECT_EQ(format_timestamp(s), buf);
    EXPECT_EQ(parse_timestamp(format_timestamp(s)).seconds, s);
  }
}

// ---- synthetic generator ---------------------------------------------------

SynthConfig grid_synth(std::size_t rows, std::size_t cols, std::size_t slots) {
  SynthConfig s;
  s.grid_rows = rows;
  s.grid_cols = cols;
  s.n_slots = slots;
  return s;
}

TEST(Generate, OpenGatesGivePoissonCounts) {
  SynthConfig s = grid_synth(4, 4, 500);
  s.base_rate = {1.5, 0.4};
  s.autoregression = 0.0;
  s.spatial_diffusion = 0.0;
  s.semantic_coupling = {0.0};
  s.region_heterogeneity = 0.0;
  s.target_zero_ratio = 0.001;
  const GenerateResult r = generate(s, build_grid_graph(4, 4));
  ASSERT_TRUE(r.warning.has_value());
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0.0, zeros = 0.0;
    const double n = 16.0 * 500.0;
    for (std::size_t reg = 0; reg < 16; ++reg)
      for (std::size_t t = 0; t < 500; ++t) {
        sum += r.data.at(reg, t, c);
        zeros += r.data.at(reg, t, c) == 0.0;
      }
    const double lambda = s.base_rate[c];
    EXPECT_NEAR(sum / n, lambda, 3.0 * std::sqrt(lambda / n)) << c;
    const double p0 = std::exp(-lambda);
    EXPECT_NEAR(zeros / n, p0, 3.0 * std::sqrt(p0 * (1 - p0) / n)) << c;
  }
  for (double v : r.data.values) EXPECT_EQ(v, std::floor(v));
}

TEST(Generate, CalibratesTheZeroRatio) {
  for (double target : {0.727, 0.887}) {
    SynthConfig s = grid_synth(4, 4, 400);
    s.target_zero_ratio = target;
    const GenerateResult r = generate(s, build_grid_graph(4, 4));
    EXPECT_FALSE(r.warning.has_value());
    std::size_t zeros = 0;
    for (double v : r.data.values) zeros += v == 0.0;
    const double ratio = static_cast<double>(zeros) / static_cast<double>(r.data.values.size());
    EXPECT_EQ(ratio, r.achieved_zero_ratio);
    EXPECT_NEAR(ratio, target, 0.005) << target;
    EXPECT_NO_THROW(r.data.validate());
  }
}

TEST(Generate, IsDeterministicPerSeed) {
  SynthConfig s = grid_synth(3, 3, 60);
  const RegionGraph g = build_grid_graph(3, 3);
  const auto a = generate(s, g).data.values;
  EXPECT_EQ(generate(s, g).data.values, a);
  s.seed += 1;
  EXPECT_NE(generate(s, g).data.values, a);
  EXPECT_THROW(generate(s, build_grid_graph(2, 2)), ConfigError);
}

TEST(Generate, LabelsTimeAndCategories) {
  SynthConfig s = grid_synth(2, 2, 10);
  DataConfig d;
  d.categories = {"noise", "parking"};
  d.start_time = "2015-06-01";
  d.slot_seconds = 3600;
  const AnomalyTensor x = generate(s, build_grid_graph(2, 2), d).data;
  EXPECT_EQ(x.category_names, d.categories);
  EXPECT_EQ(x.t0, utc(2015, 6, 1));
  EXPECT_EQ(x.slot_seconds, 3600);
}

double neighbour_lag_correlation(double diffusion) {
  SynthConfig s = grid_synth(5, 5, 400);
  s.n_categories = 1;
  s.spatial_diffusion = diffusion;
  s.autoregression = 0.0;
  s.region_heterogeneity = 0.0;
  s.target_zero_ratio = 0.5;
  const RegionGraph g = build_grid_graph(5, 5);
  const AnomalyTensor x = generate(s, g).data;
  std::vector<double> own, nb;
  for (std::size_t r = 0; r < 25; ++r)
    for (std::size_t t = 1; t < 400; ++t) {
      own.push_back(x.at(r, t, 0));
      double sum = 0;
      for (std::size_t j : g.neighbors(r)) sum += x.at(j, t - 1, 0);
      nb.push_back(sum);
    }
  const double n = static_cast<double>(own.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < own.size(); ++i) {
    ma += own[i] / n;
    mb += nb[i] / n;
  }
  double cab = 0, caa = 0, cbb = 0;
  for (std::size_t i = 0; i < own.size(); ++i) {
    cab += (own[i] - ma) * (nb[i] - mb);
    caa += (own[i] - ma) * (own[i] - ma);
    cbb += (nb[i] - mb) * (nb[i] - mb);
  }
  return cab / std::sqrt(caa * cbb);
}

TEST(Generate, DiffusionCouplesNeighbours) {
  const double off = neighbour_lag_correlation(0.0);
  const double on = neighbour_lag_correlation(0.3);
  EXPECT_LT(std::abs(off), 0.05);
  EXPECT_GT(on, off + 0.05);
}

// ---- event logs ------------------------------------------------------------

IngestOptions hourly(std::size_t slots) {
  IngestOptions o;
  o.categories = {"noise", "parking"};
  o.t0 = utc(2014, 1, 1);
  o.slot_seconds = 3600;
  o.n_slots = slots;
  return o;
}

TEST(Ingest, AccumulatesAndAssignsBoundariesToTheLaterSlot) {
  std::istringstream in(
      "timestamp,region_id,category,value\n"
      "2014-01-01T00:10:00,0,noise,1\n"
      "2014-01-01T00:20:00,0,noise,2\n"
      "2014-01-01T00:59:59.999,0,noise,3\n"
      "2014-01-01T01:00:00,1,parking,1\n"
      "\n"
      "2014-01-01T02:30:00Z,2,parking,0.5\n"
      "2013-12-31T23:59:59,1,noise,1\n"
      "2014-01-01T03:00:00,1,noise,1\n");
  const IngestResult r = ingest_events(in, build_grid_graph(2, 2), hourly(3));
  EXPECT_EQ(r.records, 7u);
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.dropped_out_of_range, 2u);
  EXPECT_EQ(r.data.at(0, 0, 0), 6.0);
  EXPECT_EQ(r.data.at(1, 0, 1), 0.0);
  EXPECT_EQ(r.data.at(1, 1, 1), 1.0);
  EXPECT_EQ(r.data.at(2, 2, 1), 0.5);
  double total = 0;
  for (double v : r.data.values) total += v;
  EXPECT_EQ(total, 7.5);
  EXPECT_EQ(r.data.category_names, (std::vector<std::string>{"noise", "parking"}));
}

TEST(Ingest, ReportsBadRecordsUnderTheThreshold) {
  std::string text = "timestamp,region_id,category,value\n";
  for (int k = 0; k < 199; ++k) text += "2014-01-01T00:00:00,0,noise,1\n";
  text += "2014-01-01T00:00:00,9,noise,1\n";
  std::istringstream in(text);
  const IngestResult r = ingest_events(in, build_grid_graph(2, 2), hourly(1));
  ASSERT_EQ(r.errors.size(), 1u);
  EXPECT_EQ(r.errors[0].rfind("line 201:", 0), 0u) << r.errors[0];
  EXPECT_EQ(r.data.at(0, 0, 0), 199.0);
}

TEST(Ingest, AbortsAboveTheThreshold) {
  std::string text = "timestamp,region_id,category,value\n";
  for (int k = 0; k < 97; ++k) text += "2014-01-01T00:00:00,0,noise,1\n";
  text += "2014-01-01T00:00:00,0,smoke,1\n";
  text += "2014-01-01T00:00:00,0,noise,-1\n";
  text += "not-a-time,0,noise,1\n";
  std::istringstream in(text);
  try {
    ingest_events(in, build_grid_graph(2, 2), hourly(1));
    FAIL() << "expected a data error";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3 of 100"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 99"), std::string::npos) << msg;
  }
  std::istringstream no_header("2014-01-01,0,noise,1\n");
  EXPECT_THROW(ingest_events(no_header, build_grid_graph(2, 2), hourly(1)), DataError);
}

TEST(Ingest, RoundTripsExportedEvents) {
  test::Rng rng(83);
  AnomalyTensor x = AnomalyTensor::zeros(4, 6, 2);
  x.t0 = utc(2014, 1, 1);
  x.slot_seconds = 3600;
  x.category_names = {"noise", "parking"};
  for (double& v : x.values) {
    v = rng.uniform() < 0.5 ? 0.0 : std::floor(rng.uniform(1, 5));
    if (rng.uniform() < 0.1) v += 0.25;
  }
  std::ostringstream out;
  export_events(out, x);
  const std::string csv = out.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), count_events(x) + 1);
  std::istringstream in(csv);
  const IngestResult r = ingest_events(in, build_grid_graph(2, 2), hourly(6));
  EXPECT_EQ(r.data.values, x.values);
  EXPECT_EQ(r.records, count_events(x));
}

// ---- sparsity --------------------------------------------------------------

TEST(Rebin, SumsRunsAndDropsTheRemainder) {
  AnomalyTensor x = AnomalyTensor::zeros(1, 5, 1);
  x.values = {1, 0, 2, 0, 0};
  x.slot_seconds = 600;
  const RebinResult r = rebin(x, 2);
  EXPECT_EQ(r.data.values, (std::vector<double>{1, 2}));
  EXPECT_EQ(r.dropped_slots, 1u);
  EXPECT_EQ(r.data.slot_seconds, 1200);
  EXPECT_EQ(rebin(x, 1).data.values, x.values);
  EXPECT_EQ(rebin(x, 5).data.values, (std::vector<double>{3}));
  EXPECT_THROW(rebin(x, 0), ArgumentError);
  EXPECT_THROW(rebin(x, 6), ArgumentError);
}

TEST(Rebin, CoarserSlotsAreNeverSparser) {
  test::Rng rng(84);
  for (int trial = 0; trial < 20; ++trial) {
    AnomalyTensor x = AnomalyTensor::zeros(3, 64, 2);
    for (double& v : x.values) v = rng.uniform() < 0.85 ? 0.0 : 1.0;
    double prev = x.zero_ratio();
    for (std::size_t f : {2, 4, 8, 16}) {
      const AnomalyTensor y = rebin(x, f).data;
      EXPECT_LE(y.zero_ratio(), prev);
      prev = y.zero_ratio();
      double a = 0, b = 0;
      for (double v : x.values) a += v;
      for (double v : y.values) b += v;
      EXPECT_EQ(a, b);
    }
  }
}

}  // namespace
}  // namespace sts
