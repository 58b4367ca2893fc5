// Copyright 2026 The flowfill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flowfill/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace flowfill {
namespace {

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Array& a) {
  Mat m(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) m(r, c) = a.at(r, c);
  }
  return m;
}

// Square root of a symmetric PSD matrix; tiny negative eigenvalues are clipped.
Mat psd_sqrt(const Mat& m, const char* what) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  Eigen::VectorXd values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < -1e-9 * scale) {
      throw std::domain_error(std::string("frechet_gaussian: ") + what +
                              " is not positive semidefinite");
    }
    values(i) = std::sqrt(std::max(values(i), 0.0));
  }
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

void require_same_layout(const char* op, std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw std::invalid_argument(std::string(op) + ": utterance counts differ");
}

}  // namespace

GaussianFit fit_gaussian(const std::vector<std::vector<double>>& samples, double ridge) {
  if (samples.size() < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
  const std::size_t d = samples.front().size();
  GaussianFit fit;
  fit.count = samples.size();
  fit.mean.assign(d, 0.0);
  for (const auto& s : samples) {
    if (s.size() != d) throw std::invalid_argument("fit_gaussian: ragged samples");
    for (std::size_t i = 0; i < d; ++i) fit.mean[i] += s[i];
  }
  for (double& m : fit.mean) m /= static_cast<double>(samples.size());
  fit.covariance = Array(Shape{d, d});
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        fit.covariance.at(i, j) += (s[i] - fit.mean[i]) * (s[j] - fit.mean[j]);
      }
    }
  }
  for (double& v : fit.covariance.data()) v /= static_cast<double>(samples.size());
  for (std::size_t i = 0; i < d; ++i) fit.covariance.at(i, i) += ridge;
  return fit;
}

double frechet_gaussian(const GaussianFit& a, const GaussianFit& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("frechet_gaussian: dimensions " + std::to_string(a.dim()) +
                                " and " + std::to_string(b.dim()) + " differ");
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  }
  const Mat sa = to_eigen(a.covariance), sb = to_eigen(b.covariance);
  const Mat root_a = psd_sqrt(sa, "first covariance");
  psd_sqrt(sb, "second covariance");
  const Mat cross = psd_sqrt(root_a * sb * root_a, "cross term");
  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross.trace();
  return std::max(value, 0.0);
}

std::vector<double> fsd_feature(const Array& x) {
  if (x.rank() != 2 || x.rows() == 0) throw ShapeError("fsd_feature", "need [N, F] with N > 0");
  const std::size_t n = x.rows(), f = x.cols();
  std::vector<double> out(2 * f, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) out[c] += x.at(r, c);
  }
  for (std::size_t c = 0; c < f; ++c) out[c] /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      const double d = x.at(r, c) - out[c];
      out[f + c] += d * d;
    }
  }
  for (std::size_t c = 0; c < f; ++c) out[f + c] = std::sqrt(out[f + c] / static_cast<double>(n));
  return out;
}

double fsd_analog(std::span<const Array> generated, std::span<const Array> reference) {
  constexpr std::size_t kMinSet = 32;
  if (generated.size() < kMinSet || reference.size() < kMinSet) {
    throw std::invalid_argument("fsd_analog: each set needs at least 32 utterances (got " +
                                std::to_string(generated.size()) + " and " +
                                std::to_string(reference.size()) + ")");
  }
  auto features = [](std::span<const Array> set) {
    std::vector<std::vector<double>> out;
    for (const Array& x : set) out.push_back(fsd_feature(x));
    return out;
  };
  constexpr double kRidge = 1e-6;
  return frechet_gaussian(fit_gaussian(features(generated), kRidge),
                          fit_gaussian(features(reference), kRidge));
}

double fdd(std::span<const double> sampled, std::span<const double> reference) {
  if (sampled.size() < 2 || reference.size() < 2) {
    throw std::invalid_argument("fdd: each multiset needs at least 2 values");
  }
  const double mu = mean_of(sampled), mu_ref = mean_of(reference);
  const double s = population_variance(sampled), s_ref = population_variance(reference);
  return std::max((mu - mu_ref) * (mu - mu_ref) + s + s_ref - 2.0 * std::sqrt(s * s_ref), 0.0);
}

double ms_mae(const std::vector<std::vector<double>>& predictions,
              const std::vector<std::vector<int>>& targets,
              const std::vector<std::vector<std::uint8_t>>& masks) {
  require_same_layout("ms_mae", predictions.size(), targets.size(), masks.size());
  double err = 0.0, masked = 0.0;
  for (std::size_t u = 0; u < predictions.size(); ++u) {
    if (predictions[u].size() != targets[u].size() || masks[u].size() != targets[u].size()) {
      throw std::invalid_argument("ms_mae: lengths differ in utterance " + std::to_string(u));
    }
    for (std::size_t j = 0; j < masks[u].size(); ++j) {
      if (!masks[u][j]) continue;
      err += std::abs(targets[u][j] - predictions[u][j]);
      masked += 1.0;
    }
  }
  if (masked == 0.0) throw std::invalid_argument("ms_mae: no masked phones");
  // The common 1/U factors of both expectations cancel.
  return err / masked;
}

std::optional<double> ms_corr(const std::vector<std::vector<double>>& predictions,
                              const std::vector<std::vector<int>>& contexts,
                              const std::vector<std::vector<std::uint8_t>>& masks) {
  require_same_layout("ms_corr", predictions.size(), contexts.size(), masks.size());
  std::vector<double> pred_means, ctx_means;
  for (std::size_t u = 0; u < predictions.size(); ++u) {
    if (predictions[u].size() != masks[u].size() || contexts[u].size() != masks[u].size()) {
      throw std::invalid_argument("ms_corr: lengths differ in utterance " + std::to_string(u));
    }
    double ps = 0, pn = 0, cs = 0, cn = 0;
    for (std::size_t j = 0; j < masks[u].size(); ++j) {
      if (masks[u][j]) {
        ps += predictions[u][j];
        pn += 1;
      } else {
        cs += contexts[u][j];
        cn += 1;
      }
    }
    if (pn == 0 || cn == 0) continue;
    pred_means.push_back(ps / pn);
    ctx_means.push_back(cs / cn);
  }
  if (pred_means.size() < 3) {
    throw std::invalid_argument("ms_corr: need 3 utterances with masked and unmasked phones");
  }
  const double mp = mean_of(pred_means), mc = mean_of(ctx_means);
  double cov = 0, vp = 0, vc = 0;
  for (std::size_t i = 0; i < pred_means.size(); ++i) {
    cov += (pred_means[i] - mp) * (ctx_means[i] - mc);
    vp += (pred_means[i] - mp) * (pred_means[i] - mp);
    vc += (ctx_means[i] - mc) * (ctx_means[i] - mc);
  }
  if (vp <= 0.0 || vc <= 0.0) return std::nullopt;
  return std::clamp(cov / std::sqrt(vp * vc), -1.0, 1.0);
}

PhoneClassifier::PhoneClassifier(const ToyProcess& process, const Normalization& normalization)
    : inventory_(process.inventory()) {
  for (std::size_t k = 0; k < process.class_count(); ++k) {
    std::vector<double> m = process.class_mean(k);
    for (double& v : m) v = (v - normalization.mean) / normalization.std;
    means_.push_back(std::move(m));
  }
}

std::size_t PhoneClassifier::classify_frame(std::span<const double> frame) const {
  if (frame.size() != means_.front().size()) {
    throw ShapeError("PhoneClassifier", "frame width " + std::to_string(frame.size()) +
                                            " vs " + std::to_string(means_.front().size()));
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means_.size(); ++k) {
    double d = 0.0;
    for (std::size_t c = 0; c < frame.size(); ++c) {
      d += (frame[c] - means_[k][c]) * (frame[c] - means_[k][c]);
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<std::size_t> PhoneClassifier::classify(const Array& x) const {
  std::vector<std::size_t> out;
  out.reserve(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) out.push_back(classify_frame(x.row(r)));
  return out;
}

double phone_error_rate(const PhoneClassifier& classifier, const Array& x,
                        std::span<const int> z) {
  if (x.rank() != 2 || x.rows() != z.size()) {
    throw ShapeError("phone_error_rate", std::to_string(z.size()) + " labels for frames " +
                                             shape_string(x.shape()));
  }
  if (z.empty()) throw std::invalid_argument("phone_error_rate: empty sequence");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const std::size_t expected = classifier.inventory().acoustic_class(z[i]);
    errors += classifier.classify_frame(x.row(i)) != expected;
  }
  return static_cast<double>(errors) / static_cast<double>(z.size());
}

std::vector<double> StyleEmbedder::embed(const Array& x) const {
  if (x.rank() != 2 || x.rows() == 0) throw ShapeError("StyleEmbedder", "need [N, F], N > 0");
  std::vector<double> e(x.cols(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto& mu = classifier_->normalized_mean(classifier_->classify_frame(x.row(r)));
    for (std::size_t c = 0; c < x.cols(); ++c) e[c] += x.at(r, c) - mu[c];
  }
  const double n = std::sqrt(std::inner_product(e.begin(), e.end(), e.begin(), 0.0));
  if (n > 0.0) {
    for (double& v : e) v /= n;
  }
  return e;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: widths differ");
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

double style_similarity(const StyleEmbedder& embedder, const Array& a, const Array& b) {
  return cosine(embedder.embed(a), embedder.embed(b));
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << kMetricCsvHeader << '\n';
  for (const MetricRow& r : rows) {
    out << r.metric << ',' << r.split << ',' << r.value << ',' << r.n << '\n';
  }
}

}  // namespace flowfill
