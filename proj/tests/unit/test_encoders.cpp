// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "helpers.hpp"

#include "singflow/adaptor.hpp"
#include "singflow/corpus.hpp"
#include "singflow/encoders.hpp"

#include <algorithm>

using namespace singflow;
using namespace singflow::testing;

namespace {

double median_f0(const Waveform& w) {
  const F0Contour c = extract_f0(w, 50.0, 1100.0, 64);
  std::vector<double> v;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c.voiced[i]) v.push_back(c.f0_hz[i]);
  }
  REQUIRE(!v.empty());
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_SUITE("encoders") {
  TEST_CASE("f0 buckets are semitones above f_min") {
    const F0EmbedConfig cfg;
    CHECK(f0_bucket(50.0, cfg) == 0);
    CHECK(f0_bucket(100.0, cfg) == 12);
    CHECK(f0_bucket(200.0, cfg) == 24);
    CHECK(f0_bucket(50.0 * std::pow(2.0, 5.4 / 12.0), cfg) == 5);
    CHECK(f0_bucket(20.0, cfg) == 0);
    CHECK(f0_bucket(5000.0, cfg) == cfg.bins - 1);
    CHECK(f0_bucket(0.0, cfg) == cfg.bins);
  }

  TEST_CASE("f0 embedding rows are one-hot") {
    F0Contour c;
    c.f0_hz = {0.0, 100.0, 440.0};
    c.voiced = {false, true, true};
    const F0Embedding e = embed_f0(c, F0EmbedConfig{});
    REQUIRE(e.frames.rows() == 3);
    CHECK(e.frames.cols() == 55);
    for (int i = 0; i < 3; ++i) CHECK(e.frames.row(i).sum() == 1.0);
    CHECK(e.frames(0, 54) == 1.0);
    CHECK(e.frames(1, 12) == 1.0);
    CHECK(e.buckets == std::vector<int>{54, 12, f0_bucket(440.0, F0EmbedConfig{})});
  }

  TEST_CASE("content encoder is deterministic in its seed") {
    Rng rng(1);
    const Mat mel = random_mat(20, 16, rng);
    const ContentEncoder a(16, 8, 5), b(16, 8, 5), c(16, 8, 6);
    CHECK(bit_equal(a.encode_frames(mel), b.encode_frames(mel)));
    CHECK(!bit_equal(a.encode_frames(mel), c.encode_frames(mel)));
    CHECK(a.encode_frames(mel).rows() == 20);
    CHECK(a.encode_frames(mel).cols() == 8);
  }

  TEST_CASE("timbre embedding is unit norm and needs half a second") {
    const TimbreEncoder enc(reduced_mel_config(), 8, 3);
    const Waveform w = synth_phrase({60, 62}, 0.4, 0, 8000, 1);
    CHECK(enc.encode(w).vector.norm() == doctest::Approx(1.0));
    CHECK_THROWS_AS(enc.encode(sine(200.0, 0.3, 8000)), DataError);
  }

  TEST_CASE("timbre embedding separates synthetic speakers") {
    const TimbreEncoder enc(reduced_mel_config(), 16, 3);
    const Vec a1 = enc.encode(synth_phrase({60, 64, 62}, 0.4, 0, 8000, 1)).vector;
    const Vec a2 = enc.encode(synth_phrase({62, 59, 60}, 0.4, 0, 8000, 2)).vector;
    const Vec b = enc.encode(synth_phrase({60, 64, 62}, 0.4, 4, 8000, 1)).vector;
    CHECK(a1.dot(a2) > a1.dot(b));
  }

  TEST_CASE("formant warp keeps F0 and moves the envelope") {
    const Waveform w = synth_phrase({57, 57}, 0.5, 2, 8000, 4);
    const FormantWarpShifter shifter;
    const Waveform s = shifter.shift(w, shifter.num_speakers() - 1);
    CHECK(s.size() == w.size());
    CHECK(median_f0(s) == doctest::Approx(median_f0(w)).epsilon(0.02));
    const Mat mw = mel_spectrogram(w, reduced_mel_config()).frames;
    const Mat ms = mel_spectrogram(s, reduced_mel_config()).frames;
    CHECK((mw - ms).cwiseAbs().mean() > 0.1);
  }

  TEST_CASE("identity shifter and missing shifter") {
    const Waveform w = sine(200.0, 0.2, 8000);
    const IdentityShifter id;
    Rng rng(1);
    CHECK(shift_timbre(w, &id, rng).samples == w.samples);
    CHECK_THROWS_AS(shift_timbre(w, nullptr, rng), PluginError);
  }

  TEST_CASE("nearest-neighbour alignment rounds ties to even") {
    Mat f(2, 1);
    f << 10, 20;
    const Mat up = nn_interp(f, 4);  // sources 0, .5, 1, 1.5 -> 0, 0, 1, 1 (clamped)
    CHECK(up(0, 0) == 10);
    CHECK(up(1, 0) == 10);
    CHECK(up(2, 0) == 20);
    CHECK(up(3, 0) == 20);
    Mat g(3, 1);
    g << 1, 2, 3;
    const Mat down = nn_interp(g, 2);  // sources 0, 1.5 -> 0, 2
    CHECK(down(0, 0) == 1);
    CHECK(down(1, 0) == 3);
    CHECK(bit_equal(nn_interp(g, 3), g));
  }
}

TEST_SUITE("adaptor") {
  TEST_CASE("fresh adaptor reproduces the static embedding") {
    const TimbreAdaptor a(AdaptorConfig{4, 6, 0, 0.5});
    Rng rng(2);
    const Vec e = random_vec(4, rng);
    const Mat hf = random_mat(7, 6, rng);
    const Mat h = a.forward(a.init_params(1), e, hf);
    for (int i = 0; i < 7; ++i) CHECK((h.row(i).transpose() - e).norm() == 0.0);
  }

  TEST_CASE("alpha_tau scales the residual") {
    Rng rng(3);
    const Vec e = random_vec(3, rng);
    const Mat hf = random_mat(5, 2, rng);
    const TimbreAdaptor half(AdaptorConfig{3, 2, 0, 0.5});
    const TimbreAdaptor zero(AdaptorConfig{3, 2, 0, 0.0});
    const Vec phi = random_vec(half.num_params(), rng);
    const Mat res = half.residual(phi, e, hf);
    const Mat out = half.forward(phi, e, hf);
    CHECK((out - (e.transpose().replicate(5, 1) + 0.5 * res)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((zero.forward(phi, e, hf) - e.transpose().replicate(5, 1)).cwiseAbs().maxCoeff() == 0.0);
  }
}
