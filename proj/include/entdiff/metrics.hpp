#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "entdiff/linalg.hpp"
#include "entdiff/samplers.hpp"

namespace entdiff {

struct Moments {
  DenseVector mean;
  DenseMatrix cov;
};

// Sample mean and covariance (1/(n-1)), symmetrized and nudged by 1e-10 on
// the diagonal so degenerate point clouds stay factorable.
inline Moments sample_moments(const std::vector<DenseVector>& points) {
  if (points.size() < 2)
    throw std::invalid_argument("sample_moments: need at least 2 points");
  const std::size_t d = points.front().size();
  Moments m;
  m.mean.assign(d, 0.0);
  for (const auto& p : points) {
    require_size(p, d, "sample_moments");
    axpy(1.0, p, m.mean);
  }
  scale_in_place(m.mean, 1.0 / static_cast<double>(points.size()));

  m.cov = DenseMatrix(d, d, 0.0);
  DenseVector centered(d);
  for (const auto& p : points) {
    for (std::size_t i = 0; i < d; ++i) centered[i] = p[i] - m.mean[i];
    add_outer(m.cov, centered, centered);
  }
  const double inv = 1.0 / static_cast<double>(points.size() - 1);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = r; c < d; ++c) {
      const double v = 0.5 * (m.cov(r, c) + m.cov(c, r)) * inv;
      m.cov(r, c) = v;
      m.cov(c, r) = v;
    }
  for (std::size_t i = 0; i < d; ++i) m.cov(i, i) += 1e-10;
  return m;
}

namespace detail {

// Cyclic Jacobi eigendecomposition for small symmetric matrices. Returns
// eigenvalues in `evals`; columns of `q` are the matching eigenvectors.
inline void jacobi_eigen(DenseMatrix a, DenseVector& evals, DenseMatrix& q) {
  if (a.rows != a.cols) throw std::invalid_argument("jacobi_eigen: matrix must be square");
  const std::size_t n = a.rows;
  q = DenseMatrix(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) q(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = r + 1; c < n; ++c) off += a(r, c) * a(r, c);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double apr = a(p, r);
        if (std::abs(apr) < 1e-30) continue;
        const double theta = (a(r, r) - a(p, p)) / (2.0 * apr);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akr = a(k, r);
          a(k, p) = c * akp - s * akr;
          a(k, r) = s * akp + c * akr;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double ark = a(r, k);
          a(p, k) = c * apk - s * ark;
          a(r, k) = s * apk + c * ark;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = q(k, p);
          const double qkr = q(k, r);
          q(k, p) = c * qkp - s * qkr;
          q(k, r) = s * qkp + c * qkr;
        }
      }
    }
  }
  evals.resize(n);
  for (std::size_t i = 0; i < n; ++i) evals[i] = a(i, i);
}

// Tr((S1 S2)^{1/2}) for symmetric PSD inputs, via M = sqrt(S1) S2 sqrt(S1)
// which shares the spectrum of S1 S2 but stays symmetric. Eigenvalues are
// clamped at zero before each square root.
inline double trace_sqrt_product(const DenseMatrix& s1, const DenseMatrix& s2) {
  DenseVector evals;
  DenseMatrix q;
  jacobi_eigen(s1, evals, q);
  DenseMatrix root(s1.rows, s1.cols, 0.0);
  for (std::size_t k = 0; k < evals.size(); ++k) {
    const double lam = std::sqrt(std::max(0.0, evals[k]));
    for (std::size_t r = 0; r < s1.rows; ++r)
      for (std::size_t c = 0; c < s1.cols; ++c) root(r, c) += lam * q(r, k) * q(c, k);
  }
  const DenseMatrix m = matmul(matmul(root, s2), root);
  jacobi_eigen(m, evals, q);
  double acc = 0.0;
  for (double lam : evals) acc += std::sqrt(std::max(0.0, lam));
  return acc;
}

inline double det2(const DenseMatrix& s) { return s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0); }

}  // namespace detail

// Frechet distance between Gaussians fitted to two point clouds:
// |mu1 - mu2|^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). The 2x2 case uses the
// closed form Tr((S1 S2)^{1/2}) = sqrt(tr(S1 S2) + 2 sqrt(det S1 det S2)).
inline double frechet_from_moments(const Moments& a, const Moments& b) {
  if (a.mean.size() != b.mean.size())
    throw std::invalid_argument("frechet: dimension mismatch");
  const std::size_t d = a.mean.size();
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  double tr_sqrt;
  if (d == 2) {
    const double tr_prod = trace(matmul(a.cov, b.cov));
    const double det_prod = std::max(0.0, detail::det2(a.cov) * detail::det2(b.cov));
    tr_sqrt = std::sqrt(std::max(0.0, tr_prod + 2.0 * std::sqrt(det_prod)));
  } else {
    tr_sqrt = detail::trace_sqrt_product(a.cov, b.cov);
  }
  return mean_term + trace(a.cov) + trace(b.cov) - 2.0 * tr_sqrt;
}

inline double frechet_distance(const std::vector<DenseVector>& real,
                               const std::vector<DenseVector>& gen) {
  if (real.empty() || gen.empty())
    throw std::invalid_argument("frechet_distance: empty point set");
  const std::size_t d = real.front().size();
  if (real.size() < d + 1 || gen.size() < d + 1)
    throw std::invalid_argument("frechet_distance: need at least dim+1 points per set");
  return frechet_from_moments(sample_moments(real), sample_moments(gen));
}

namespace detail {

inline double squared_dist(const DenseVector& a, const DenseVector& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

// Squared distance to the k-th nearest neighbor within the same set, self
// excluded. Ties sort by (distance, index) so the radius is reproducible.
inline std::vector<double> knn_radii_sq(const std::vector<DenseVector>& pts,
                                        std::size_t k) {
  if (pts.size() <= k)
    throw std::invalid_argument("knn_radii: need more points than neighbors");
  std::vector<double> radii(pts.size());
  std::vector<std::pair<double, std::size_t>> dists;
  dists.reserve(pts.size() - 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    dists.clear();
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) dists.emplace_back(squared_dist(pts[i], pts[j]), j);
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     dists.end());
    radii[i] = dists[k - 1].first;
  }
  return radii;
}

inline double manifold_fraction(const std::vector<DenseVector>& queries,
                                const std::vector<DenseVector>& support,
                                const std::vector<double>& radii_sq) {
  std::size_t hits = 0;
  for (const auto& q : queries) {
    for (std::size_t j = 0; j < support.size(); ++j) {
      if (squared_dist(q, support[j]) <= radii_sq[j]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

}  // namespace detail

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// Manifold precision/recall with k-NN membership: a query counts as covered
// when it lands inside any support ball whose radius is that point's k-th
// neighbor distance. Brute force; the sets here are a few thousand points.
inline PrecisionRecall precision_recall(const std::vector<DenseVector>& real,
                                        const std::vector<DenseVector>& gen,
                                        std::size_t k = 3) {
  if (real.empty() || gen.empty())
    throw std::invalid_argument("precision_recall: empty point set");
  if (k == 0) throw std::invalid_argument("precision_recall: k must be positive");
  const std::vector<double> real_radii = detail::knn_radii_sq(real, k);
  const std::vector<double> gen_radii = detail::knn_radii_sq(gen, k);
  PrecisionRecall pr;
  pr.precision = detail::manifold_fraction(gen, real, real_radii);
  pr.recall = detail::manifold_fraction(real, gen, gen_radii);
  return pr;
}

// Fraction of generated samples whose nearest mixture-component mean matches
// the label they were conditioned on. Distance ties pick the lower class
// index.
inline double conditional_accuracy(const std::vector<DenseVector>& gen,
                                   const std::vector<std::size_t>& gen_labels,
                                   const std::vector<DenseVector>& means) {
  if (gen.size() != gen_labels.size())
    throw std::invalid_argument("conditional_accuracy: points/labels size mismatch");
  if (gen.empty()) throw std::invalid_argument("conditional_accuracy: empty set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    std::size_t best = 0;
    double best_d = detail::squared_dist(gen[i], means[0]);
    for (std::size_t k = 1; k < means.size(); ++k) {
      const double d = detail::squared_dist(gen[i], means[k]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (best == gen_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(gen.size());
}

struct MetricsReport {
  double frechet = 0.0;
  std::vector<double> per_class_frechet;
  double mean_per_class_frechet = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double conditional_accuracy = 0.0;
  std::size_t n_real = 0;
  std::size_t n_gen = 0;
};

inline MetricsReport compute_metrics(const std::vector<DenseVector>& real,
                                     const std::vector<std::size_t>& real_labels,
                                     const std::vector<DenseVector>& gen,
                                     const std::vector<std::size_t>& gen_labels,
                                     const std::vector<DenseVector>& component_means,
                                     std::size_t k_nn = 3) {
  if (real.size() != real_labels.size() || gen.size() != gen_labels.size())
    throw std::invalid_argument("compute_metrics: points/labels size mismatch");
  const std::size_t num_classes = component_means.size();
  for (std::size_t l : real_labels)
    if (l >= num_classes) throw std::invalid_argument("compute_metrics: real label out of range");
  for (std::size_t l : gen_labels)
    if (l >= num_classes) throw std::invalid_argument("compute_metrics: generated label out of range");

  MetricsReport rep;
  rep.n_real = real.size();
  rep.n_gen = gen.size();
  rep.frechet = frechet_distance(real, gen);

  rep.per_class_frechet.resize(num_classes, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::vector<DenseVector> rk, gk;
    for (std::size_t i = 0; i < real.size(); ++i)
      if (real_labels[i] == k) rk.push_back(real[i]);
    for (std::size_t i = 0; i < gen.size(); ++i)
      if (gen_labels[i] == k) gk.push_back(gen[i]);
    rep.per_class_frechet[k] = frechet_distance(rk, gk);
    rep.mean_per_class_frechet += rep.per_class_frechet[k];
  }
  rep.mean_per_class_frechet /= static_cast<double>(num_classes);

  const PrecisionRecall pr = precision_recall(real, gen, k_nn);
  rep.precision = pr.precision;
  rep.recall = pr.recall;
  rep.conditional_accuracy = conditional_accuracy(gen, gen_labels, component_means);
  return rep;
}

// Per-trajectory entropy-collapse times plus a crossing-time histogram and
// binned entropy/gradient curves. Crossing time 0 marks "never crossed"
// (real timesteps start at 1); summary stats cover the crossed trajectories.
struct VanishingAnalysis {
  double threshold = 0.0;
  std::vector<std::size_t> crossing_times;
  std::size_t crossed_count = 0;
  double mean_crossing_t = 0.0;
  double crossing_variance = 0.0;
  std::vector<std::size_t> crossing_hist;  // bins over [1, T]; sums to crossed_count
  std::vector<double> mean_entropy_by_bin;
  std::vector<double> mean_grad_norm_by_bin;
  std::vector<std::size_t> bin_counts;
};

// Crossing time of one trajectory. Sustained mode reports the largest t such
// that every record from t down to the end stays below the threshold; first
// touch reports the first record (highest t) that dips below it. 0 means the
// trajectory never crossed.
inline std::size_t crossing_time(const Trajectory& traj, double threshold,
                                 bool sustained) {
  if (!sustained) {
    for (const auto& r : traj.records)
      if (r.entropy < threshold) return r.t;
    return 0;
  }
  std::size_t cross = 0;
  for (auto it = traj.records.rbegin(); it != traj.records.rend(); ++it) {
    if (it->entropy < threshold)
      cross = it->t;
    else
      break;
  }
  return cross;
}

inline VanishingAnalysis vanishing_analysis(const std::vector<Trajectory>& trajs,
                                            double threshold_fraction,
                                            std::size_t num_classes,
                                            std::size_t t_steps, std::size_t bins,
                                            bool sustained = true) {
  if (trajs.empty()) throw std::invalid_argument("vanishing_analysis: no trajectories");
  if (bins == 0) throw std::invalid_argument("vanishing_analysis: bins must be positive");
  if (num_classes < 2)
    throw std::invalid_argument("vanishing_analysis: need at least 2 classes");

  VanishingAnalysis va;
  va.threshold = threshold_fraction * std::log(static_cast<double>(num_classes));
  va.crossing_hist.assign(bins, 0);
  va.mean_entropy_by_bin.assign(bins, 0.0);
  va.mean_grad_norm_by_bin.assign(bins, 0.0);
  va.bin_counts.assign(bins, 0);

  for (const auto& traj : trajs) {
    const std::size_t cross = crossing_time(traj, va.threshold, sustained);
    va.crossing_times.push_back(cross);
    if (cross >= 1 && cross <= t_steps) {
      ++va.crossed_count;
      ++va.crossing_hist[(cross - 1) * bins / t_steps];
    }
    for (const auto& r : traj.records) {
      if (r.t < 1 || r.t > t_steps) continue;
      const std::size_t b = (r.t - 1) * bins / t_steps;
      va.mean_entropy_by_bin[b] += r.entropy;
      va.mean_grad_norm_by_bin[b] += r.grad_norm;
      ++va.bin_counts[b];
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (va.bin_counts[b] == 0) continue;
    va.mean_entropy_by_bin[b] /= static_cast<double>(va.bin_counts[b]);
    va.mean_grad_norm_by_bin[b] /= static_cast<double>(va.bin_counts[b]);
  }

  if (va.crossed_count > 0) {
    const double n = static_cast<double>(va.crossed_count);
    for (std::size_t c : va.crossing_times)
      if (c > 0) va.mean_crossing_t += static_cast<double>(c);
    va.mean_crossing_t /= n;
    for (std::size_t c : va.crossing_times) {
      if (c == 0) continue;
      const double d = static_cast<double>(c) - va.mean_crossing_t;
      va.crossing_variance += d * d;
    }
    va.crossing_variance /= n;
  }
  return va;
}

}  // namespace entdiff
