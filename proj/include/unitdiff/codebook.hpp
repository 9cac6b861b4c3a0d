#pragma once

#include "unitdiff/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace unitdiff {

// Reference scale of a speech-unit K-means space (768-dim HuBERT features,
// 1000 clusters). Desk defaults below are much smaller.
inline constexpr int kReferenceDim = 768;
inline constexpr int kReferenceUnits = 1000;

inline constexpr int kDefaultClasses = 10;
inline constexpr int kDefaultPerClass = 10;
inline constexpr int kDefaultDim = 16;
inline constexpr double kDefaultMetaScale = 10.0;
inline constexpr double kDefaultIntraScale = 1.0;

// K centroids in R^D with optional semantic class labels. Realizes the
// unit -> vector map (embed) and its nearest-neighbour inverse (quantize).
// Immutable after construction.
class Codebook {
 public:
  // Throws std::invalid_argument if centroids are empty, non-finite or not
  // pairwise distinct, or if meta_labels do not cover [0, C) contiguously.
  explicit Codebook(Matrix centroids, std::optional<std::vector<int>> meta_labels = std::nullopt);

  int size() const { return static_cast<int>(centroids_.rows()); }
  int dim() const { return static_cast<int>(centroids_.cols()); }
  const Matrix& centroids() const { return centroids_; }

  bool has_meta_labels() const { return meta_labels_.has_value(); }
  const std::vector<int>& meta_labels() const;
  int meta_label(int unit) const;
  int num_classes() const { return num_classes_; }

  double min_centroid_gap() const { return min_gap_; }

  // Index of the L2-nearest centroid; ties go to the lowest index.
  int nearest(const double* row) const;

  // Units sorted by distance to `unit`'s centroid (itself first), truncated to k.
  std::vector<int> neighbours(int unit, int k) const;

 private:
  Matrix centroids_;
  std::optional<std::vector<int>> meta_labels_;
  int num_classes_ = 0;
  double min_gap_ = 0.0;
};

struct KMeansStats {
  // Within-cluster sum of squares after each Lloyd iteration.
  std::vector<double> objective;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded to
// the point farthest from its assigned centroid.
Codebook fit_kmeans(const Matrix& points, int k, int max_iters, std::uint64_t seed,
                    KMeansStats* stats = nullptr);

// g: row i is the centroid of x[i].
ContinuousSequence embed(const Codebook& cb, const UnitSequence& x);

// g^-1: nearest centroid per row, exhaustive search in double precision.
UnitSequence quantize(const Codebook& cb, const ContinuousSequence& v);

// Replace each unit by a uniform draw from its k nearest centroids.
UnitSequence knn_perturb(const Codebook& cb, const UnitSequence& x, int k, std::uint64_t seed);

// C class means ~ N(0, s_meta^2 I), per_class centroids ~ N(mean, s_intra^2 I)
// around each, then every centroid is rescaled to the common norm
// s_meta * sqrt(D). Unit u belongs to class u / per_class.
Codebook make_structured_codebook(int classes, int per_class, int dim, double s_meta, double s_intra,
                                  std::uint64_t seed);

// {"version":1,"K":..,"D":..,"centroids":[[..]..],"meta_labels":[..]|null}
std::string codebook_to_json(const Codebook& cb);
Codebook codebook_from_json(const std::string& text);
void save_codebook(const Codebook& cb, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);

// Collapses runs of identical meta-labels: the class sequence a unit
// sequence "says".
std::vector<int> meta_collapse(const Codebook& cb, const UnitSequence& x);

}  // namespace unitdiff
