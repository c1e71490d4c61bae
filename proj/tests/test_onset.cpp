#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lorats/onset.hpp"

namespace lorats {
namespace {

const PhyParams kPhy{};

struct Scenario {
  IQTrace trace;
  std::size_t onset = 0;
};

// Frame with random bias and phase, `lead` noise-only samples in front and a noise tail.
Scenario noisy_frame(double snr_db, std::uint64_t seed, std::size_t lead = 6000, double phase = -1.0) {
  std::mt19937_64 rng(seed);
  TxParams tx;
  tx.fb = std::uniform_real_distribution<double>(-20e3, 20e3)(rng);
  tx.phase = phase >= 0.0 ? phase : std::uniform_real_distribution<double>(0.0, kTwoPi)(rng);
  const std::vector<int> payload(8, 11);
  const auto f = gen_frame(kPhy, tx, {}, payload);
  return {add_awgn(pad(f, lead, 3000), snr_db, seed + 1000), lead};
}

double err(const OnsetResult& r, std::size_t truth) {
  return static_cast<double>(r.onset_sample) - static_cast<double>(truth);
}

TEST(DetectEnv, StepAtChunkBoundary) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  const auto t = pad(c, 2000, 0);
  const auto r = detect_env(t);
  EXPECT_EQ(r.detector, Detector::Env);
  EXPECT_NEAR(static_cast<double>(r.onset_sample), 2000.0, 200.0);
  EXPECT_EQ(r.onset_sample, 2000u);
}

TEST(DetectEnv, AllZeroTraceHasNoOnset) {
  IQTrace t;
  t.samples.assign(4000, Sample{});
  EXPECT_THROW(detect_env(t), NoOnsetError);
}

TEST(DetectEnv, RequiresTwoChunks) {
  IQTrace t;
  t.samples.assign(399, Sample(1.0, 0.0));
  EXPECT_THROW(detect_env(t), InvalidArgument);
  EXPECT_THROW(detect_env(t, 0), InvalidArgument);
}

TEST(DetectEnv, TenDbWithinOneChunkOverFiftySeeds) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto sc = noisy_frame(10.0, s, 6000 + 37 * s);
    const auto r = detect_env(sc.trace);
    ASSERT_LE(std::abs(err(r, sc.onset)), 200.0) << "seed " << s;
  }
}

TEST(DetectEnv, OnsetTimeFollowsTraceClock) {
  auto sc = noisy_frame(10.0, 3);
  sc.trace.t0_ns = 1'000'000'000;
  const auto r = detect_env(sc.trace);
  EXPECT_EQ(r.onset_time_ns, sc.trace.time_ns(r.onset_sample));
}

TEST(DetectCorr, IdealFrameWithinOneHop) {
  for (double fb : {0.0, -20e3, 12e3}) {
    TxParams tx;
    tx.fb = fb;
    const std::vector<int> payload(4, 0);
    const auto t = pad(gen_frame(kPhy, tx, {}, payload), 4321, 2000);
    const auto r = detect_corr(t, kPhy);
    EXPECT_LE(std::abs(err(r, 4321)), 112.0) << "fb " << fb;
    EXPECT_GT(r.score, 0.9);
  }
}

TEST(DetectCorr, PreambleWithoutSfdHasNoOnset) {
  const std::vector<ChirpSegment> segs(10, ChirpSegment{ChirpKind::Up, 0, 1.0});
  const auto pre = pad(synthesize(segs, kPhy, {}, {}, kDefaultSampleRate), 3000, 3000);
  EXPECT_THROW(detect_corr(pre, kPhy), NoOnsetError);
}

TEST(DetectCorr, ZeroDbWithinOneColumnOverFiftySeeds) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto sc = noisy_frame(0.0, 100 + s, 5000 + 53 * s);
    const auto r = detect_corr(sc.trace, kPhy);
    ASSERT_LE(std::abs(err(r, sc.onset)), 112.0) << "seed " << s;
  }
}

TEST(DetectCorr, ShortTraceRejected) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  EXPECT_THROW(detect_corr(c, kPhy), InvalidArgument);
}

TEST(DetectAic, HighSnrOnsetAtThousand) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto sc = noisy_frame(30.0, 200 + s, 1000);
    const auto r = detect_aic(sc.trace);
    EXPECT_GE(r.onset_sample, 996u) << "seed " << s;
    EXPECT_LE(r.onset_sample, 1004u) << "seed " << s;
  }
}

TEST(DetectAic, ConstantTraceHasNoOnset) {
  IQTrace t;
  t.samples.assign(3000, Sample(0.5, -0.5));
  EXPECT_THROW(detect_aic(t), NoOnsetError);
  t.samples.assign(3000, Sample{});
  EXPECT_THROW(detect_aic(t), NoOnsetError);
}

TEST(DetectAic, RejectsShortTraceAndBadOrder) {
  IQTrace t;
  t.samples.assign(511, Sample(1.0, 0.0));
  EXPECT_THROW(detect_aic(t), InvalidArgument);
  t.samples.assign(2000, Sample(1.0, 0.0));
  AicConfig cfg;
  cfg.order = -1;
  EXPECT_THROW(detect_aic(t, cfg), InvalidArgument);
}

// Direct least-squares oracle: stack real and imaginary rows and solve the normal equations
// for each segment from scratch.
double oracle_residual(const std::vector<Sample>& x, int p, std::size_t lo, std::size_t hi) {
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (std::size_t m = lo; m < hi; ++m) {
    std::vector<double> re, im;
    for (int i = 1; i <= p; ++i) {
      re.push_back(x[m - i].real());
      im.push_back(x[m - i].imag());
    }
    rows.push_back(re);
    y.push_back(x[m].real());
    rows.push_back(im);
    y.push_back(x[m].imag());
  }
  std::vector<double> ata(p * p, 0.0), aty(p, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int i = 0; i < p; ++i) {
      aty[i] += rows[r][i] * y[r];
      for (int j = 0; j < p; ++j) ata[i * p + j] += rows[r][i] * rows[r][j];
    }
  std::vector<double> coef;
  EXPECT_TRUE(detail::solve_small(ata, aty, p, coef));
  double rss = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double pred = 0.0;
    for (int i = 0; i < p; ++i) pred += coef[i] * rows[r][i];
    rss += (y[r] - pred) * (y[r] - pred);
  }
  return rss / static_cast<double>(hi - lo);
}

TEST(DetectAic, CurveMatchesDirectRegression) {
  const auto sc = noisy_frame(5.0, 7, 800);
  IQTrace t = sc.trace;
  t.samples.resize(3000);
  for (int p : {0, 1, 2, 4}) {
    AicConfig cfg;
    cfg.order = p;
    const auto curve = aic_curve(t, cfg).aic;
    ASSERT_EQ(curve.size(), 3000u - 2 * 256 + 1);
    for (std::size_t k : {256u, 700u, 801u, 1500u, 2744u}) {
      const auto up = static_cast<std::size_t>(p);
      const double v1 = oracle_residual(t.samples, p, up, k);
      const double v2 = oracle_residual(t.samples, p, k + up, t.size());
      const double expect = static_cast<double>(k - up) * std::log(v1) +
                            static_cast<double>(t.size() - k - up) * std::log(v2);
      EXPECT_NEAR(curve[k - 256], expect, 1e-6 * std::abs(expect)) << "p=" << p << " k=" << k;
    }
  }
}

TEST(DetectAic, PhaseIndependence) {
  std::vector<std::size_t> picks;
  for (int i = 0; i < 8; ++i) {
    const auto sc = noisy_frame(10.0, 55, 6000, i * kTwoPi / 8.0);  // same noise realization
    picks.push_back(detect_aic(sc.trace).onset_sample);
  }
  const auto [mn, mx] = std::minmax_element(picks.begin(), picks.end());
  EXPECT_LE(*mx - *mn, 8u);
}

TEST(Detectors, TranslationEquivariance) {
  const auto sc = noisy_frame(10.0, 77, 5000);
  IQTrace shifted = sc.trace;
  const std::size_t k = 1234;
  const auto extra = add_awgn(IQTrace{std::vector<Sample>(k, Sample{}), kDefaultSampleRate, 0, kDefaultCenterFreq}, 0.0, 1);
  // Draw the prefix with the same noise power as the trace's noise-only lead.
  const double pn = mean_power(sc.trace.samples, {0, 4000});
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, std::sqrt(pn / 2.0));
  std::vector<Sample> prefix(k);
  for (auto& v : prefix) v = Sample(g(rng), g(rng));
  shifted.samples.insert(shifted.samples.begin(), prefix.begin(), prefix.end());
  (void)extra;

  const auto e0 = detect_env(sc.trace), e1 = detect_env(shifted);
  EXPECT_NEAR(static_cast<double>(e1.onset_sample) - static_cast<double>(e0.onset_sample), k, 200.0);
  const auto c0 = detect_corr(sc.trace, kPhy), c1 = detect_corr(shifted, kPhy);
  EXPECT_NEAR(static_cast<double>(c1.onset_sample) - static_cast<double>(c0.onset_sample), k, 112.0);
  const auto a0 = detect_aic(sc.trace), a1 = detect_aic(shifted);
  EXPECT_NEAR(static_cast<double>(a1.onset_sample) - static_cast<double>(a0.onset_sample), k, 4.0);
}

TEST(Detectors, AicBeatsCorrBeatsEnv) {
  double se = 0, sc2 = 0, sa = 0;
  const int n = 30;
  for (int s = 0; s < n; ++s) {
    const auto sc = noisy_frame(10.0, 300 + s, 5000 + 17 * s);
    se += std::pow(err(detect_env(sc.trace), sc.onset), 2);
    sc2 += std::pow(err(detect_corr(sc.trace, kPhy), sc.onset), 2);
    sa += std::pow(err(detect_aic(sc.trace), sc.onset), 2);
  }
  EXPECT_LT(sa, sc2);
  EXPECT_LT(sc2, se);
}

TEST(RmsdRoundtrip, ZerosGiveZero) {
  const std::vector<double> d(10, 0.0);
  EXPECT_EQ(rmsd_roundtrip(d), 0.0);
}

TEST(RmsdRoundtrip, RejectsTooFewAndNonFinite) {
  const std::vector<double> one{1e-6};
  EXPECT_THROW(rmsd_roundtrip(one), InvalidArgument);
  const std::vector<double> bad{1e-6, std::nan("")};
  EXPECT_THROW(rmsd_roundtrip(bad), InvalidArgument);
}

TEST(RmsdRoundtrip, RecoversPerEventSigma) {
  const double sigma = 2e-6;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> d(100000);
  for (auto& v : d) v = g(rng) - g(rng) + g(rng) - g(rng);
  EXPECT_NEAR(rmsd_roundtrip(d), sigma, 0.02 * sigma);
}

TEST(RmsdRoundtrip, MicrosecondScaleSanity) {
  const std::vector<double> d{0.66e-6, -0.66e-6, 0.66e-6, -0.66e-6};
  EXPECT_NEAR(rmsd_roundtrip(d), 0.33e-6, 1e-15);
}

TEST(Detector, StringRoundTrip) {
  for (auto d : {Detector::Env, Detector::Corr, Detector::Aic}) EXPECT_EQ(detector_from_string(to_string(d)), d);
  EXPECT_THROW(detector_from_string("xcorr"), InvalidArgument);
}

}  // namespace
}  // namespace lorats
