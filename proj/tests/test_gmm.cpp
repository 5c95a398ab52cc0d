#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "droneguard/gmm.hpp"

using namespace droneguard;

namespace {

Matrix gaussian_blob(std::size_t n, std::size_t dim, double mean, double stddev,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> dist(mean, stddev);
  Matrix m(n, dim);
  for (auto& v : m.data) v = dist(rng);
  return m;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

FeatureMatrix as_mfcc(const Matrix& frames) {
  FeatureMatrix fm;
  fm.kind = FeatureKind::kMfcc;
  fm.frames = frames;
  fm.frame_spec.hop_ms = 20.0;
  fm.frame_times = frame_start_times(frames.rows, fm.frame_spec);
  return fm;
}

}  // namespace

TEST_CASE("K=1 fit is the sample mean and variance") {
  std::mt19937_64 rng(2);
  const Matrix data = gaussian_blob(500, 4, 1.5, 0.7, rng);
  const GaussianMixture g = fit_em(data, 1, 0);
  REQUIRE(g.components() == 1);
  CHECK(g.weights[0] == Catch::Approx(1.0));
  for (std::size_t d = 0; d < 4; ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < data.rows; ++t) mean += data.at(t, d);
    mean /= data.rows;
    double var = 0.0;
    for (std::size_t t = 0; t < data.rows; ++t) {
      const double diff = data.at(t, d) - mean;
      var += diff * diff;
    }
    var /= data.rows;
    CHECK(g.means.at(0, d) == Catch::Approx(mean).margin(1e-9));
    CHECK(g.variances.at(0, d) == Catch::Approx(var).epsilon(1e-6));
  }
}

TEST_CASE("two separated clusters are recovered") {
  std::mt19937_64 rng(3);
  const Matrix a = gaussian_blob(600, 3, -4.0, 0.4, rng);
  const Matrix b = gaussian_blob(400, 3, 4.0, 0.4, rng);
  const GaussianMixture g = fit_em(vstack(a, b), 2, 1);
  REQUIRE(g.components() == 2);
  const bool first_is_low = g.means.at(0, 0) < 0.0;
  const std::size_t lo = first_is_low ? 0 : 1, hi = first_is_low ? 1 : 0;
  for (std::size_t d = 0; d < 3; ++d) {
    CHECK(g.means.at(lo, d) == Catch::Approx(-4.0).margin(0.05));
    CHECK(g.means.at(hi, d) == Catch::Approx(4.0).margin(0.05));
  }
  CHECK(g.weights[lo] == Catch::Approx(0.6).margin(0.05));
  CHECK(g.weights[hi] == Catch::Approx(0.4).margin(0.05));
}

TEST_CASE("refit with the same seed is bitwise identical") {
  std::mt19937_64 rng(4);
  const Matrix data = gaussian_blob(300, 5, 0.0, 1.0, rng);
  const GaussianMixture g1 = fit_em(data, 3, 42);
  const GaussianMixture g2 = fit_em(data, 3, 42);
  REQUIRE(g1.weights == g2.weights);
  REQUIRE(g1.means.data == g2.means.data);
  REQUIRE(g1.variances.data == g2.variances.data);
}

TEST_CASE("insufficient data raises") {
  Matrix tiny(2, 3);
  CHECK_THROWS_AS(fit_em(tiny, 5, 0), InsufficientDataError);
}

TEST_CASE("log-likelihood closed form, additivity, and brute-force oracle") {
  GaussianMixture std20;
  std20.weights = {1.0};
  std20.means = Matrix(1, 20);
  std20.variances = Matrix(1, 20);
  for (int d = 0; d < 20; ++d) std20.variances.at(0, d) = 1.0;
  Matrix origin(1, 20);
  CHECK(log_likelihood(std20, origin) == Catch::Approx(-10.0 * std::log(2.0 * M_PI)));

  std::mt19937_64 rng(6);
  const Matrix frames = gaussian_blob(50, 20, 0.3, 1.2, rng);
  const double once = log_likelihood(std20, frames);
  Matrix doubled = vstack(frames, frames);
  CHECK(log_likelihood(std20, doubled) == Catch::Approx(2.0 * once));

  // random 3-component mixture vs naive per-point density summation
  GaussianMixture g;
  g.weights = {0.5, 0.3, 0.2};
  g.means = gaussian_blob(3, 4, 0.0, 2.0, rng);
  g.variances = Matrix(3, 4);
  std::uniform_real_distribution<double> vdist(0.2, 2.0);
  for (auto& v : g.variances.data) v = vdist(rng);
  const Matrix pts = gaussian_blob(40, 4, 0.0, 2.0, rng);
  double expected = 0.0;
  for (std::size_t t = 0; t < pts.rows; ++t) {
    double density = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      double q = 1.0;
      for (std::size_t d = 0; d < 4; ++d) {
        const double var = g.variances.at(k, d);
        const double diff = pts.at(t, d) - g.means.at(k, d);
        q *= std::exp(-diff * diff / (2.0 * var)) / std::sqrt(2.0 * M_PI * var);
      }
      density += g.weights[k] * q;
    }
    expected += std::log(density);
  }
  CHECK(log_likelihood(g, pts) == Catch::Approx(expected).margin(1e-9));

  Matrix wrong_dim(2, 7);
  CHECK_THROWS_AS(log_likelihood(g, wrong_dim), ShapeError);
}

TEST_CASE("EM monotonicity property over random fits") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t K = 1 + rng() % 5;
    const std::size_t dim = 1 + rng() % 4;
    const Matrix data = gaussian_blob(40 + K + rng() % 200, dim, 0.0, 1.0 + (trial % 3), rng);
    GmmFitReport rep;
    fit_em(data, K, rng(), {}, &rep);
    REQUIRE(rep.reseed_iterations.empty());
    for (std::size_t i = 1; i < rep.avg_log_likelihood.size(); ++i)
      REQUIRE(rep.avg_log_likelihood[i] >= rep.avg_log_likelihood[i - 1] - 1e-9);
  }
}

TEST_CASE("mixture density integrates to one (2-D Monte Carlo)") {
  std::mt19937_64 rng(10);
  const Matrix a = gaussian_blob(200, 2, -1.0, 0.5, rng);
  const Matrix b = gaussian_blob(200, 2, 1.0, 0.5, rng);
  const GaussianMixture g = fit_em(vstack(a, b), 2, 3);

  // uniform box [-6, 6]^2 comfortably contains the mass
  const double lo = -6.0, hi = 6.0;
  std::uniform_real_distribution<double> u(lo, hi);
  const std::size_t n = 200000;
  double acc = 0.0;
  Matrix pt(1, 2);
  for (std::size_t i = 0; i < n; ++i) {
    pt.at(0, 0) = u(rng);
    pt.at(0, 1) = u(rng);
    acc += std::exp(log_likelihood(g, pt));
  }
  const double integral = acc / n * (hi - lo) * (hi - lo);
  CHECK(integral == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("collapsed components get reseeded and the fit stays sane") {
  // 100 copies of two distinct points cannot support three components.
  Matrix data(100, 2);
  for (std::size_t i = 0; i < 100; ++i) {
    data.at(i, 0) = i < 50 ? 0.0 : 10.0;
    data.at(i, 1) = i < 50 ? 0.0 : 10.0;
  }
  GmmFitReport rep;
  const GaussianMixture g = fit_em(data, 3, 5, {}, &rep);
  double wsum = 0.0;
  for (double w : g.weights) wsum += w;
  CHECK(wsum == Catch::Approx(1.0).margin(1e-9));
  for (double v : g.variances.data) CHECK(v > 0.0);
  for (double v : g.means.data) CHECK(std::isfinite(v));
}

TEST_CASE("classification rule and strict threshold") {
  // Two unit-variance 1-D mixtures centered at +2 and -2: the score at x
  // is (x-(-2))^2/2 - (x-2)^2/2 = 4x... sign of x decides.
  GaussianMixture pos, neg;
  pos.weights = neg.weights = {1.0};
  pos.means = Matrix(1, 1);
  pos.means.at(0, 0) = 2.0;
  neg.means = Matrix(1, 1);
  neg.means.at(0, 0) = -2.0;
  pos.variances = Matrix(1, 1);
  pos.variances.at(0, 0) = 1.0;
  neg.variances = pos.variances;
  GmmDetector det{pos, neg, 0.0, 1};

  Matrix frames(3, 1);
  frames.at(0, 0) = 0.5;   // score +2 -> positive
  frames.at(1, 0) = -0.5;  // score -2 -> negative
  frames.at(2, 0) = 0.0;   // score exactly theta -> negative (strict >)
  const DetectionTimeline tl = classify(det, as_mfcc(frames));
  const std::vector<int> labels = frame_labels(tl, 0.02, 0.06);
  CHECK(labels == std::vector<int>{1, 0, 0});

  const std::vector<double> scores = gmm_scores(det, as_mfcc(frames));
  CHECK(scores[0] == Catch::Approx(2.0));
  CHECK(scores[1] == Catch::Approx(-2.0));
  CHECK(scores[2] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("decision invariance under shared density scaling") {
  std::mt19937_64 rng(14);
  const Matrix a = gaussian_blob(200, 2, -1.5, 0.6, rng);
  const Matrix b = gaussian_blob(200, 2, 1.5, 0.6, rng);
  GmmDetector det;
  det.positive = fit_em(b, 2, 0);
  det.negative = fit_em(a, 2, 0);
  det.smoothing_window = 1;
  const Matrix probe = gaussian_blob(60, 2, 0.0, 2.0, rng);
  const std::vector<double> base = gmm_scores(det, as_mfcc(probe));

  // Scaling both densities by the same constant shifts both L1 and L2 by
  // log c, leaving every label unchanged for the same theta.
  const double log_c = 3.21;
  std::vector<int> labels_base(base.size()), labels_shift(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    labels_base[i] = base[i] > det.theta ? 1 : 0;
    labels_shift[i] = (base[i] + log_c) - log_c > det.theta ? 1 : 0;
  }
  CHECK(labels_base == labels_shift);
}

TEST_CASE("frames from the positive mixture classify >= 95% positive") {
  std::mt19937_64 rng(18);
  const Matrix pos_train = gaussian_blob(800, 4, 3.0, 0.5, rng);
  const Matrix neg_train = gaussian_blob(800, 4, -3.0, 0.5, rng);
  GmmDetector det;
  det.positive = fit_em(pos_train, 3, 1);
  det.negative = fit_em(neg_train, 3, 1);
  det.smoothing_window = 1;

  const Matrix probe = gaussian_blob(500, 4, 3.0, 0.5, rng);
  const std::vector<double> scores = gmm_scores(det, as_mfcc(probe));
  std::size_t positive = 0;
  for (double s : scores) positive += s > 0.0;
  CHECK(static_cast<double>(positive) / scores.size() >= 0.95);
}

TEST_CASE("majority smoothing") {
  CHECK(smooth({1, 0, 1, 1, 1}, 3) == std::vector<int>{1, 1, 1, 1, 1});
  CHECK(smooth({1, 1, 1, 1}, 3) == std::vector<int>{1, 1, 1, 1});
  CHECK(smooth({0, 0, 0}, 5) == std::vector<int>{0, 0, 0});
  const std::vector<int> any{1, 0, 0, 1, 0, 1};
  CHECK(smooth(any, 1) == any);
  CHECK_THROWS_AS(smooth(any, 4), ConfigError);

  // never creates a label absent from the window; idempotent on long runs
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> labels(40);
    for (auto& l : labels) l = rng() % 2;
    const int window = 1 + 2 * static_cast<int>(rng() % 4);
    const std::vector<int> out = smooth(labels, window);
    const int h = window / 2;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const int hi = std::min<int>({h, static_cast<int>(i), static_cast<int>(labels.size() - 1 - i)});
      bool found = false;
      for (int j = -hi; j <= hi; ++j) found = found || labels[i + j] == out[i];
      REQUIRE(found);
    }
  }
  const std::vector<int> runs{1, 1, 1, 1, 0, 0, 0, 0, 0};
  CHECK(smooth(smooth(runs, 3), 3) == smooth(runs, 3));
}

TEST_CASE("theta calibration maximizes F on validation scores") {
  const std::vector<double> scores{-3.0, -2.0, -1.0, 1.0, 2.0, 3.0};
  const std::vector<int> truth{0, 0, 0, 1, 1, 1};
  const double theta = calibrate_theta(scores, truth);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int pred = scores[i] > theta ? 1 : 0;
    tp += pred && truth[i];
    fp += pred && !truth[i];
    fn += !pred && truth[i];
  }
  CHECK(tp == 3);
  CHECK(fp == 0);
  CHECK(fn == 0);
}

TEST_CASE("model container roundtrip and json export") {
  std::mt19937_64 rng(30);
  const Matrix a = gaussian_blob(100, 3, -1.0, 0.8, rng);
  const Matrix b = gaussian_blob(100, 3, 1.0, 0.8, rng);
  GmmDetector det;
  det.positive = fit_em(b, 2, 9);
  det.negative = fit_em(a, 2, 9);
  det.theta = 0.37;
  det.smoothing_window = 7;

  const auto path = std::filesystem::temp_directory_path() / "droneguard_gmm.model";
  save_gmm(det, path.string(), "sample_rate_hz=24000\n");
  std::string echo;
  const GmmDetector back = load_gmm(path.string(), &echo);
  CHECK(echo == "sample_rate_hz=24000\n");
  CHECK(back.theta == det.theta);
  CHECK(back.smoothing_window == 7);
  CHECK(back.positive.weights == det.positive.weights);
  CHECK(back.positive.means.data == det.positive.means.data);
  CHECK(back.negative.variances.data == det.negative.variances.data);

  const nlohmann::json j = gmm_to_json(det);
  CHECK(j["positive"]["components"] == 2);
  CHECK(j["theta"] == 0.37);
}
