#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorats/signal.hpp"

namespace lorats {
namespace {

const PhyParams kPhy{};  // S=7, W=125 kHz

std::vector<double> unwrapped_phase(const std::vector<Sample>& x) {
  std::vector<double> ph(x.size());
  double k = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::arg(x[i]);
    if (i > 0) {
      const double prev = std::arg(x[i - 1]);
      if (a - prev > std::numbers::pi) k -= 1.0;
      if (a - prev < -std::numbers::pi) k += 1.0;
    }
    ph[i] = a + kTwoPi * k;
  }
  return ph;
}

// Brute-force dechirped DFT at full sample rate over signed bins; test-only oracle.
int brute_force_symbol(const IQTrace& chirp, const PhyParams& phy) {
  const int chips = phy.chips();
  double best = -1.0;
  int best_k = 0;
  for (int k = -chips; k < chips; ++k) {
    Sample acc{};
    for (std::size_t n = 0; n < chirp.size(); ++n) {
      const double t = static_cast<double>(n) / chirp.sample_rate;
      const double ref = std::numbers::pi * phy.bandwidth * phy.bandwidth / chips * t * t -
                         std::numbers::pi * phy.bandwidth * t;
      acc += chirp.samples[n] * std::polar(1.0, -ref - kTwoPi * k * phy.bin_width() * t);
    }
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      best_k = k;
    }
  }
  return ((best_k % chips) + chips) % chips;
}

TEST(PhyParams, ChirpTimeAndValidation) {
  EXPECT_NEAR(kPhy.chirp_time(), 1.024e-3, 1e-15);
  EXPECT_NEAR(kPhy.bin_width(), 976.5625, 1e-9);
  PhyParams bad = kPhy;
  bad.spreading_factor = 13;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = kPhy;
  bad.bandwidth = 200e3;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(UpChirp, DurationAndSampleCount) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  EXPECT_EQ(c.size(), 2458u);  // round(2.4e6 * 1.024e-3)
  EXPECT_NEAR(c.duration(), 1.024e-3, 0.5 / 2.4e6);
}

TEST(UpChirp, RejectsAliasingRateAndBadParams) {
  EXPECT_THROW(gen_up_chirp(kPhy, {}, {}, 200e3), InvalidArgument);
  TxParams tx;
  tx.fb = std::nan("");
  EXPECT_THROW(gen_up_chirp(kPhy, tx, {}), InvalidArgument);
  tx = {};
  tx.phase = 7.0;
  EXPECT_THROW(gen_up_chirp(kPhy, tx, {}), InvalidArgument);
}

TEST(UpChirp, SymmetricAboutMidpointWithoutBias) {
  const auto c = gen_up_chirp(kPhy, {}, {}, 2.56e6);  // 2621.44 samples -> use exact time check below
  // I(t) is symmetric about 2^(S-1)/W: compare I at mirrored times using the analytic model.
  const double mid = kPhy.chirp_time() / 2.0;
  const double fs = c.sample_rate;
  for (std::size_t n = 0; n < c.size(); n += 37) {
    const double t = static_cast<double>(n) / fs;
    const double tm = 2.0 * mid - t;
    const double theta = std::numbers::pi * kPhy.chirp_rate() * tm * tm - std::numbers::pi * kPhy.bandwidth * tm;
    EXPECT_NEAR(c.samples[n].real(), std::cos(theta), 1e-9);
  }
  // The vertex of the unwrapped phase sits at the midpoint.
  const auto c2 = gen_up_chirp(kPhy, {}, {});
  const auto ph = unwrapped_phase(c2.samples);
  const auto vertex = std::min_element(ph.begin(), ph.end()) - ph.begin();
  EXPECT_NEAR(static_cast<double>(vertex) / c2.sample_rate, 0.512e-3, 1.0 / c2.sample_rate);
}

TEST(UpChirp, NegativeBiasShiftsSymmetryAxisRight) {
  TxParams tx;
  tx.fb = -20e3;
  const auto c = gen_up_chirp(kPhy, tx, {});
  const double expected = 0.512e-3 + 20e3 * kPhy.chips() / (kPhy.bandwidth * kPhy.bandwidth);
  EXPECT_NEAR(expected, 0.67584e-3, 1e-12);
  const auto ph = unwrapped_phase(c.samples);
  const auto vertex = std::min_element(ph.begin(), ph.end()) - ph.begin();
  EXPECT_NEAR(static_cast<double>(vertex) / c.sample_rate, expected, 1.0 / c.sample_rate);

  tx.fb = 15e3;  // positive bias: left shift
  const auto c2 = gen_up_chirp(kPhy, tx, {});
  const auto ph2 = unwrapped_phase(c2.samples);
  const auto v2 = std::min_element(ph2.begin(), ph2.end()) - ph2.begin();
  EXPECT_LT(static_cast<double>(v2) / c2.sample_rate, 0.512e-3);
}

TEST(UpChirp, InstantaneousFrequencySweep) {
  TxParams tx;
  tx.fb = 3000.0;
  const auto c = gen_up_chirp(kPhy, tx, {});
  const auto ph = unwrapped_phase(c.samples);
  const double fs = c.sample_rate;
  const double f_start = (ph[1] - ph[0]) * fs / kTwoPi;
  const double f_end = (ph[ph.size() - 1] - ph[ph.size() - 2]) * fs / kTwoPi;
  EXPECT_NEAR(f_start, -62.5e3 + 3000.0, 60.0);
  EXPECT_NEAR(f_end, 62.5e3 + 3000.0, 60.0);
}

TEST(UpChirp, MagnitudeIndependentOfPhaseDifference) {
  for (int i = 0; i < 8; ++i) {
    TxParams tx;
    tx.phase = i * kTwoPi / 8.0;
    tx.fb = -7000.0;
    RxParams rx;
    rx.phase = 1.3;
    const auto c = gen_up_chirp(kPhy, tx, rx);
    for (const auto& s : c.samples) ASSERT_NEAR(std::abs(s), tx.amplitude / 2.0, 1e-12);
  }
}

TEST(DownChirp, ConjugateOfUpChirpAtZeroPhaseAndBias) {
  const auto up = gen_up_chirp(kPhy, {}, {});
  const auto down = gen_down_chirp(kPhy, {}, {});
  ASSERT_EQ(up.size(), down.size());
  EXPECT_NEAR(down.duration(), 1.024e-3, 0.5 / 2.4e6);
  for (std::size_t i = 0; i < up.size(); ++i) {
    EXPECT_NEAR(down.samples[i].real(), std::conj(up.samples[i]).real(), 1e-12);
    EXPECT_NEAR(down.samples[i].imag(), std::conj(up.samples[i]).imag(), 1e-12);
  }
}

TEST(DownChirp, ProductWithUpChirpHasConstantFrequency) {
  TxParams tx;
  tx.fb = 1500.0;
  const auto up = gen_up_chirp(kPhy, tx, {});
  const auto down = gen_down_chirp(kPhy, tx, {});
  std::vector<Sample> prod(up.size());
  for (std::size_t i = 0; i < up.size(); ++i) prod[i] = up.samples[i] * down.samples[i];
  const auto ph = unwrapped_phase(prod);
  const double fs = up.sample_rate;
  for (std::size_t i = 1; i < ph.size(); ++i) {
    const double f = (ph[i] - ph[i - 1]) * fs / kTwoPi;
    ASSERT_NEAR(f, 3000.0, 1e-3);  // 2 * delta
  }
}

TEST(Frame, DurationArithmetic) {
  const double tc = kPhy.chirp_time();
  const auto empty = gen_frame(kPhy, {}, {}, {});
  EXPECT_EQ(empty.size(), static_cast<std::size_t>(std::llround(2.4e6 * 10.25 * tc)));
  std::vector<int> payload{1, 2, 3, 4, 5};
  const auto f = gen_frame(kPhy, {}, {}, payload);
  EXPECT_EQ(f.size(), static_cast<std::size_t>(std::llround(2.4e6 * 15.25 * tc)));
}

TEST(Frame, RejectsOutOfRangeSymbols) {
  std::vector<int> payload{0, 128};
  EXPECT_THROW(gen_frame(kPhy, {}, {}, payload), InvalidArgument);
  payload = {-1};
  EXPECT_THROW(gen_frame(kPhy, {}, {}, payload), InvalidArgument);
}

TEST(Frame, PhaseIsContinuousAcrossChirpBoundaries) {
  TxParams tx;
  tx.fb = -12e3;
  std::vector<int> payload{17, 0, 101};
  const auto f = gen_frame(kPhy, tx, {}, payload);
  for (std::size_t i = 1; i < f.size(); ++i) {
    // Max inst. frequency |W/2| + |delta| -> max phase step per sample.
    const double step = std::abs(std::arg(f.samples[i] * std::conj(f.samples[i - 1])));
    ASSERT_LT(step, kTwoPi * (62.5e3 + 12e3) / 2.4e6 + 1e-9) << "jump at sample " << i;
  }
}

TEST(Frame, SymbolZeroPayloadMatchesPreambleChirp) {
  const ChirpSegment up{ChirpKind::Up, 0, 1.0};
  const ChirpSegment sym0{ChirpKind::Up, 0, 1.0};
  const auto a = synthesize(std::span(&up, 1), kPhy, {}, {}, 2.4e6);
  const auto b = synthesize(std::span(&sym0, 1), kPhy, {}, {}, 2.4e6);
  EXPECT_EQ(a.samples, b.samples);

  std::vector<int> payload{0};
  const auto f = gen_frame(kPhy, {}, {}, payload);
  const auto n = chirp_samples(kPhy, 2.4e6);
  const auto start = static_cast<std::size_t>(std::llround(10.25 * kPhy.chirp_time() * 2.4e6));
  Sample corr{};
  double ea = 0, eb = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    corr += f.samples[i] * std::conj(f.samples[start + i]);
    ea += std::norm(f.samples[i]);
    eb += std::norm(f.samples[start + i]);
  }
  EXPECT_GT(std::abs(corr) / std::sqrt(ea * eb), 0.99);
}

TEST(Frame, SymbolKDechirpsToBinK) {
  for (int k = 0; k < kPhy.chips(); ++k) {
    const ChirpSegment seg{ChirpKind::Up, k, 1.0};
    const auto c = synthesize(std::span(&seg, 1), kPhy, {}, {}, 2.4e6);
    const auto p = dechirp_spectrum(c.samples, kPhy, c.sample_rate);
    const auto peak = std::max_element(p.begin(), p.end()) - p.begin();
    ASSERT_EQ(peak, k) << "symbol " << k;
    if (k % 16 == 5) {
      EXPECT_EQ(brute_force_symbol(c, kPhy), k);
    }
  }
}

TEST(Awgn, InfiniteSnrIsIdentity) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  const auto n = add_awgn(c, std::numeric_limits<double>::infinity(), 9);
  EXPECT_EQ(n.samples, c.samples);
}

TEST(Awgn, DeterministicPerSeed) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  EXPECT_EQ(add_awgn(c, 3.0, 42).samples, add_awgn(c, 3.0, 42).samples);
  EXPECT_NE(add_awgn(c, 3.0, 42).samples, add_awgn(c, 3.0, 43).samples);
}

double realized_snr_db(const IQTrace& clean, const IQTrace& noisy) {
  double pn = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) pn += std::norm(noisy.samples[i] - clean.samples[i]);
  pn /= static_cast<double>(clean.size());
  return 10.0 * std::log10(active_power(clean.samples) / pn);
}

TEST(Awgn, MinusEighteenDbOnUnitPowerFrame) {
  TxParams tx;
  tx.amplitude = 2.0;  // unit power
  std::vector<int> payload(6, 3);
  const auto f = gen_frame(kPhy, tx, {}, payload);
  ASSERT_GE(f.size(), 128u * 16u);
  const auto noisy = add_awgn(f, -18.0, 7);
  const double snr = realized_snr_db(f, noisy);
  EXPECT_GE(snr, -18.1);
  EXPECT_LE(snr, -17.9);
}

TEST(Awgn, MeanOverSeedsIsCalibrated) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  double acc = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) acc += realized_snr_db(c, add_awgn(c, -6.0, 1000 + s));
  EXPECT_NEAR(acc / 100.0, -6.0, 0.05);
}

TEST(MeasureSnr, TenTimesNoisePower) {
  IQTrace t;
  t.samples.assign(2000, Sample(1.0, 0.0));
  for (std::size_t i = 1000; i < 2000; ++i) t.samples[i] = Sample(0.0, std::sqrt(10.0));
  const auto snr = measure_snr(t, {0, 1000}, {1000, 2000});
  ASSERT_TRUE(snr.has_value());
  EXPECT_NEAR(*snr, 10.0 * std::log10(9.0), 1e-12);
  EXPECT_NEAR(*snr, 9.54, 0.005);
}

TEST(MeasureSnr, PureNoiseIsBelowFloor) {
  IQTrace t;
  t.samples.assign(2000, Sample(0.5, 0.5));
  EXPECT_FALSE(measure_snr(t, {0, 1000}, {1000, 2000}).has_value());
}

TEST(MeasureSnr, RejectsOverlapAndEmpty) {
  IQTrace t;
  t.samples.assign(100, Sample(1.0, 0.0));
  EXPECT_THROW(measure_snr(t, {0, 50}, {40, 100}), InvalidArgument);
  EXPECT_THROW(measure_snr(t, {0, 0}, {40, 100}), InvalidArgument);
}

TEST(MeasureSnr, ChirpScaledToZeroDb) {
  // Noise segment followed by chirp + noise with equal expected powers.
  std::vector<int> payload(20, 0);
  auto f = gen_frame(kPhy, {}, {}, payload);
  const std::size_t lead = 40000;
  auto padded = pad(f, lead, 0);
  auto noisy = add_awgn(padded, 0.0, 5);
  const auto snr = measure_snr(noisy, {0, lead}, {lead, noisy.size()});
  ASSERT_TRUE(snr.has_value());
  EXPECT_NEAR(*snr, 0.0, 0.2);
}

TEST(Spectrogram, ColumnCountFollowsWindowAndHop) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  const auto sg = spectrogram(c, kPhy);
  EXPECT_EQ(sg.window_len, 128u);
  EXPECT_EQ(sg.hop(), 112u);
  // (2458 - 128) / 112 + 1 full windows inside one chirp time at 2.4 Msps.
  EXPECT_EQ(sg.columns(), 21u);
}

TEST(Spectrogram, RejectsShortTrace) {
  IQTrace t;
  t.samples.assign(100, Sample{});
  EXPECT_THROW(spectrogram(t, kPhy), InvalidArgument);
  SpectrogramConfig cfg;
  cfg.overlap = 128;
  EXPECT_THROW(spectrogram(gen_up_chirp(kPhy, {}, {}), kPhy, cfg), InvalidArgument);
}

TEST(Spectrogram, UpChirpRidgeIsMonotoneWithChirpSlope) {
  const auto c = gen_up_chirp(kPhy, {}, {});
  SpectrogramConfig cfg;
  cfg.nfft = 1024;
  const auto sg = spectrogram(c, kPhy, cfg);
  for (std::size_t k = 1; k < sg.columns(); ++k) ASSERT_GE(sg.ridge(k), sg.ridge(k - 1));
  const double bin_hz = sg.sample_rate / static_cast<double>(sg.nfft);
  const double hop_s = static_cast<double>(sg.hop()) / sg.sample_rate;
  const double expected_bins_per_col = kPhy.chirp_rate() * hop_s / bin_hz;
  for (std::size_t k = 1; k < sg.columns(); ++k) {
    const double step = static_cast<double>(sg.ridge(k)) - static_cast<double>(sg.ridge(k - 1));
    EXPECT_NEAR(step, expected_bins_per_col, 1.0);
  }
}

TEST(Spectrogram, ConstantToneGivesFlatRidge) {
  IQTrace t;
  const double f = 20e3;
  for (int n = 0; n < 4000; ++n) t.samples.push_back(std::polar(1.0, kTwoPi * f * n / t.sample_rate));
  const auto sg = spectrogram(t, kPhy);
  for (std::size_t k = 0; k < sg.columns(); ++k) EXPECT_EQ(sg.ridge(k), sg.bin_of(f));
}

}  // namespace
}  // namespace lorats
