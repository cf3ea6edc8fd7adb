/* Copyright 2026 The AtlasFuse Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef ATLASFUSE_TESTS_ORACLES_HPP_
#define ATLASFUSE_TESTS_ORACLES_HPP_

// Plain-loop reference implementations used to cross-check the library.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;

inline Mat random_matrix(std::mt19937_64& rng, int rows, int cols, double lo = -1.0,
                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

inline Mat pearson(const Mat& x) {
  const int n = static_cast<int>(x.rows());
  const int t = static_cast<int>(x.cols());
  std::vector<double> mean(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < t; ++k) mean[i] += x(i, k);
    mean[i] /= t;
  }
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double cov = 0, vi = 0, vj = 0;
      for (int k = 0; k < t; ++k) {
        const double a = x(i, k) - mean[i];
        const double b = x(j, k) - mean[j];
        cov += a * b;
        vi += a * a;
        vj += b * b;
      }
      out(i, j) = cov / std::sqrt(vi * vj);
    }
  }
  return out;
}

inline Mat topk(const Mat& x, double keep) {
  const int n = static_cast<int>(x.rows());
  std::vector<std::tuple<double, int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) edges.emplace_back(-x(i, j), i, j);
  }
  std::sort(edges.begin(), edges.end());
  const int total = n * (n - 1) / 2;
  const int count = static_cast<int>(std::ceil(keep * total - 1e-9));
  Mat a = Mat::Zero(n, n);
  for (int e = 0; e < count; ++e) {
    const auto [v, i, j] = edges[static_cast<std::size_t>(e)];
    a(i, j) = a(j, i) = 1.0;
  }
  return a;
}

// Directed kNN between the two point sets, laid out as one (na+nb) square.
inline Mat knn(const Mat& a, const Mat& b, int k) {
  const int na = static_cast<int>(a.rows());
  const int nb = static_cast<int>(b.rows());
  Mat r = Mat::Zero(na + nb, na + nb);
  auto link = [&](const Mat& from, const Mat& to, int row_off, int col_off) {
    for (int u = 0; u < from.rows(); ++u) {
      std::vector<std::pair<double, int>> d;
      for (int v = 0; v < to.rows(); ++v) {
        double s = 0;
        for (int c = 0; c < 3; ++c) s += (from(u, c) - to(v, c)) * (from(u, c) - to(v, c));
        d.emplace_back(s, v);
      }
      std::sort(d.begin(), d.end());
      for (int q = 0; q < k; ++q) r(row_off + u, col_off + d[q].second) = 1.0;
    }
  };
  link(a, b, 0, na);
  link(b, a, na, 0);
  return r;
}

inline Mat sym_normalize(const Mat& adj) {
  const int n = static_cast<int>(adj.rows());
  std::vector<double> deg(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) deg[i] += adj(i, j);
  }
  Mat out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out(i, j) = adj(i, j) / std::sqrt(deg[i] * deg[j]);
  }
  return out;
}

// Hard-assignment pooling: row c sums the rows of z assigned to cluster c.
inline Mat group_sum(const std::vector<int>& cluster, const Mat& z, int clusters) {
  Mat out = Mat::Zero(clusters, z.cols());
  for (int i = 0; i < z.rows(); ++i) {
    for (int c = 0; c < z.cols(); ++c) out(cluster[i], c) += z(i, c);
  }
  return out;
}

inline double cosine(const Mat& a, int ra, const Mat& b, int rb) {
  double dot = 0, na = 0, nb = 0;
  for (int c = 0; c < a.cols(); ++c) {
    dot += a(ra, c) * b(rb, c);
    na += a(ra, c) * a(ra, c);
    nb += b(rb, c) * b(rb, c);
  }
  return dot / std::sqrt(na * nb);
}

inline double orthogonal(const Mat& a, const Mat& b) {
  double s = 0;
  for (int i = 0; i < a.rows(); ++i) s += std::fabs(cosine(a, i, b, i));
  return s / a.rows();
}

inline double entropy(const Mat& sa, const Mat& sb, int clusters) {
  double h = 0;
  for (const Mat* s : {&sa, &sb}) {
    for (int i = 0; i < s->rows(); ++i) {
      for (int j = 0; j < s->cols(); ++j) {
        const double p = (*s)(i, j);
        if (p > 0) h -= p * std::log(p);
      }
    }
  }
  return h / clusters;
}

inline double matrix_sim(const Mat& a, const Mat& b) {
  double s = 0;
  for (int i = 0; i < a.rows(); ++i) s += cosine(a, i, b, i);
  return s / a.rows();
}

inline double contrastive(const std::vector<Mat>& a, const std::vector<Mat>& b, double tau) {
  double pos = 0, neg = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double e = std::exp(matrix_sim(a[i], b[j]) / tau);
      (i == j ? pos : neg) += e;
    }
  }
  return -std::log(pos / neg);
}

inline double population(const std::vector<Mat>& ma, const std::vector<Mat>& mb) {
  const int bz = static_cast<int>(ma.size());
  double s = 0;
  for (int i = 0; i < bz; ++i) {
    for (int j = 0; j < bz; ++j) {
      const double d = cosine(ma[i], 0, ma[j], 0) - cosine(mb[i], 0, mb[j], 0);
      s += d * d;
    }
  }
  return s / bz;
}

inline double cross_entropy(const std::vector<Mat>& logits, const std::vector<int>& labels) {
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double z = 0;
    for (int c = 0; c < logits[i].cols(); ++c) z += std::exp(logits[i](0, c));
    s += -(logits[i](0, labels[i]) - std::log(z));
  }
  return s / logits.size();
}

struct Metrics {
  double accuracy, precision, recall, micro_f1, roc_auc;
};

// Area under the ROC curve by trapezoids over distinct score thresholds.
inline double trapezoid_auc(const std::vector<double>& score, const std::vector<int>& pos) {
  std::vector<double> thresholds(score);
  std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double p = 0, n = 0;
  for (int v : pos) (v ? p : n) += 1;
  if (p == 0 || n == 0) return 0.5;
  double area = 0, prev_tpr = 0, prev_fpr = 0;
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < score.size(); ++i) {
      if (score[i] >= t) (pos[i] ? tp : fp) += 1;
    }
    const double tpr = tp / p, fpr = fp / n;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2;
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  return area;
}

inline Metrics binary_metrics(const std::vector<int>& pred, const std::vector<double>& score1,
                              const std::vector<int>& label) {
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    correct += pred[i] == label[i];
    if (pred[i] == 1 && label[i] == 1) tp += 1;
    if (pred[i] == 1 && label[i] == 0) fp += 1;
    if (pred[i] == 0 && label[i] == 1) fn += 1;
  }
  Metrics m{};
  m.accuracy = correct / pred.size();
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.micro_f1 = m.accuracy;
  m.roc_auc = trapezoid_auc(score1, label);
  return m;
}

}  // namespace oracle

#endif  // ATLASFUSE_TESTS_ORACLES_HPP_
