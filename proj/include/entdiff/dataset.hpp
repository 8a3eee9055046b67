#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include "entdiff/linalg.hpp"
#include "entdiff/rng.hpp"

namespace entdiff {

// Class-conditional Gaussian mixture. By default the K component means sit
// evenly spaced on a circle of the given radius.
struct MixtureSpec {
  std::size_t num_classes = 8;
  std::size_t dim = 2;
  double radius = 6.0;
  double std_dev = 0.3;
  std::size_t per_class = 1000;
  std::uint64_t seed = 7;
  std::optional<std::vector<DenseVector>> means;
};

struct LabeledDataset {
  std::vector<DenseVector> points;
  std::vector<std::size_t> labels;

  std::size_t size() const { return points.size(); }
};

inline std::vector<DenseVector> mixture_means(const MixtureSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("mixture: need at least 2 classes");
  if (spec.means) {
    if (spec.means->size() != spec.num_classes)
      throw std::invalid_argument("mixture: means count must match num_classes");
    for (const auto& m : *spec.means)
      if (m.size() != spec.dim)
        throw std::invalid_argument("mixture: mean dim mismatch");
    return *spec.means;
  }
  if (spec.dim < 2)
    throw std::invalid_argument("mixture: circle means need dim >= 2");
  std::vector<DenseVector> means(spec.num_classes, DenseVector(spec.dim, 0.0));
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    const double ang = 2.0 * 3.14159265358979323846 * static_cast<double>(k) /
                       static_cast<double>(spec.num_classes);
    means[k][0] = spec.radius * std::cos(ang);
    means[k][1] = spec.radius * std::sin(ang);
  }
  return means;
}

// Deterministic generation: one stream per class, points drawn in order, all
// coordinates of a point before the next point. Labels come out class-major.
inline LabeledDataset make_mixture(const MixtureSpec& spec) {
  if (spec.num_classes < 2) throw std::invalid_argument("mixture: need at least 2 classes");
  if (spec.per_class == 0) throw std::invalid_argument("mixture: per_class must be positive");
  if (!(spec.std_dev > 0.0)) throw std::invalid_argument("mixture: std_dev must be positive");
  const auto means = mixture_means(spec);

  LabeledDataset ds;
  ds.points.reserve(spec.num_classes * spec.per_class);
  ds.labels.reserve(spec.num_classes * spec.per_class);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    RngStream rng(spec.seed, k);
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      DenseVector p(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d)
        p[d] = means[k][d] + spec.std_dev * rng.next_gaussian();
      ds.points.push_back(std::move(p));
      ds.labels.push_back(k);
    }
  }
  return ds;
}

}  // namespace entdiff
