// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"

#include "singflow/plugins.hpp"
#include "singflow/signal.hpp"

#include <algorithm>
#include <fstream>

using namespace singflow;
using namespace singflow::testing;

TEST_SUITE("signal") {
  TEST_CASE("frame count is ceil(len / hop)") {
    CHECK(frame_count(0, 64) == 0);
    CHECK(frame_count(1, 64) == 1);
    CHECK(frame_count(64, 64) == 1);
    CHECK(frame_count(65, 64) == 2);
  }

  TEST_CASE("1 kHz tone peaks in the HTK channel whose triangle covers it most") {
    // Reduced config: 8 kHz, 256-point FFT, 16 channels. The triangle oracle
    // (computed offline from the HTK formula) gives 0.917 for channel 7.
    const MelConfig cfg = reduced_mel_config();
    const MelSpectrogram m = mel_spectrogram(sine(1000.0, 1.0, 8000), cfg);
    REQUIRE(m.num_channels() == 16);
    Eigen::Index best = 0;
    m.frames.row(m.num_frames() / 2).maxCoeff(&best);
    CHECK(best == 7);
    MelFilterbank fb(cfg);
    CHECK(fb.center_frequencies()[7] == doctest::Approx(1015.0).epsilon(1e-3));
  }

  TEST_CASE("stft/istft reconstructs the interior") {
    Rng rng(3);
    std::vector<double> x(2000);
    for (auto& v : x) v = rng.normal();
    const ComplexFrames f = stft(x, 256, 64, frame_count(x.size(), 64));
    const std::vector<double> y = istft(f, 256, 64, x.size());
    double worst = 0.0;
    for (std::size_t i = 256; i + 256 < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
    CHECK(worst < 1e-9);
  }

  TEST_CASE("WAV round trip") {
    TempDir dir;
    const Waveform w = sine(440.0, 0.25, 8000, 0.8);
    save_wav(w, dir.path() / "f.wav", WavEncoding::kFloat32);
    save_wav(w, dir.path() / "i.wav", WavEncoding::kPcm16);
    const Waveform f = load_wav(dir.path() / "f.wav");
    const Waveform i = load_wav(dir.path() / "i.wav");
    CHECK(f.samples == w.samples);
    CHECK(f.sample_rate == 8000);
    REQUIRE(i.size() == w.size());
    for (std::size_t k = 0; k < w.size(); ++k) CHECK(std::abs(i.samples[k] - w.samples[k]) <= 1.0F / 32767.0F);
  }

  TEST_CASE("malformed WAV is a data error") {
    TempDir dir;
    std::ofstream(dir.path() / "bad.wav") << "RIFF????WAVEjunk";
    CHECK_THROWS_AS(load_wav(dir.path() / "bad.wav"), DataError);
    CHECK_THROWS_AS(load_wav(dir.path() / "missing.wav"), DataError);
  }

  TEST_CASE("YIN tracks a steady tone within 1 %") {
    for (double hz : {110.0, 220.0, 440.0}) {
      const F0Contour c = extract_f0(sine(hz, 0.5, 8000), 50.0, 1100.0, 64);
      std::vector<double> voiced;
      for (std::size_t i = 2; i + 2 < c.size(); ++i) {
        if (c.voiced[i]) voiced.push_back(c.f0_hz[i]);
      }
      REQUIRE(voiced.size() > c.size() / 2);
      std::nth_element(voiced.begin(), voiced.begin() + voiced.size() / 2, voiced.end());
      CHECK(voiced[voiced.size() / 2] == doctest::Approx(hz).epsilon(0.01));
    }
  }

  TEST_CASE("silence is unvoiced") {
    Waveform w{std::vector<float>(4000, 0.0F), 8000};
    const F0Contour c = extract_f0(w, 50.0, 1100.0, 64);
    CHECK(c.voiced_count() == 0);
  }

  TEST_CASE("transpose leaves unvoiced frames at zero") {
    F0Contour c;
    c.f0_hz = {0.0, 100.0, 200.0};
    c.voiced = {false, true, true};
    const F0Contour t = transpose_f0(c, -12.0);
    CHECK(t.f0_hz[0] == 0.0);
    CHECK(t.f0_hz[1] == 50.0);
    CHECK(t.f0_hz[2] == 100.0);
  }

  TEST_CASE("mix_tracks zero pads the shorter track") {
    Waveform a{{1.0F, 2.0F, 3.0F}, 8000};
    Waveform b{{1.0F}, 8000};
    const Waveform m = mix_tracks(a, b, 0.5);
    CHECK(m.samples == std::vector<float>{1.5F, 2.0F, 3.0F});
    const Waveform m2 = mix_tracks(b, a, 1.0);
    CHECK(m2.samples == std::vector<float>{2.0F, 2.0F, 3.0F});
  }

  TEST_CASE("Griffin-Lim output length follows the frame grid and keeps the pitch") {
    const MelConfig cfg = reduced_mel_config();
    const Waveform w = sine(300.0, 0.5, 8000);
    const MelSpectrogram m = mel_spectrogram(w, cfg);
    const Waveform y = invert_mel(m, cfg, 16, 1);
    CHECK(y.sample_rate == 8000);
    CHECK(frame_count(y.size(), cfg.hop) == static_cast<std::size_t>(m.num_frames()));
    CHECK(rms(y) > 0.01);
    // Phase is only approximate after a few iterations, so look at the
    // dominant bin rather than a pitch tracker.
    const std::vector<double> x(y.samples.begin(), y.samples.end());
    const ComplexFrames s = stft(x, cfg.n_fft, cfg.hop, static_cast<std::size_t>(m.num_frames()));
    Eigen::Index peak = 0;
    s.cwiseAbs().colwise().sum().maxCoeff(&peak);
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.n_fft;
    CHECK(std::abs(static_cast<double>(peak) * bin_hz - 300.0) <= bin_hz);
  }
}
