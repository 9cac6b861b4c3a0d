#include "unitdiff/codebook.hpp"

#include "unitdiff/io.hpp"
#include "unitdiff/seed.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace unitdiff {

namespace {

double squared_distance(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite values");
}

}  // namespace

Codebook::Codebook(Matrix centroids, std::optional<std::vector<int>> meta_labels)
    : centroids_(std::move(centroids)), meta_labels_(std::move(meta_labels)) {
  if (centroids_.rows() < 1 || centroids_.cols() < 1)
    throw std::invalid_argument("Codebook: need at least one centroid of dimension >= 1");
  check_finite(centroids_, "Codebook");

  const int k = size();
  const int d = dim();
  double min_sq = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      min_sq = std::min(min_sq, squared_distance(centroids_.row(a).data(), centroids_.row(b).data(), d));
  if (k > 1 && !(min_sq > 0.0)) throw std::invalid_argument("Codebook: centroids are not pairwise distinct");
  min_gap_ = k > 1 ? std::sqrt(min_sq) : std::numeric_limits<double>::infinity();

  if (meta_labels_) {
    const auto& labels = *meta_labels_;
    if (static_cast<int>(labels.size()) != k)
      throw std::invalid_argument("Codebook: meta_labels size must equal K");
    const int max_label = *std::max_element(labels.begin(), labels.end());
    if (*std::min_element(labels.begin(), labels.end()) < 0)
      throw std::invalid_argument("Codebook: negative meta label");
    std::vector<int> count(max_label + 1, 0);
    for (int l : labels) ++count[l];
    if (std::find(count.begin(), count.end(), 0) != count.end())
      throw std::invalid_argument("Codebook: every meta class needs at least one unit");
    num_classes_ = max_label + 1;
  }
}

const std::vector<int>& Codebook::meta_labels() const {
  if (!meta_labels_) throw std::invalid_argument("Codebook has no meta labels");
  return *meta_labels_;
}

int Codebook::meta_label(int unit) const {
  const auto& labels = meta_labels();
  if (unit < 0 || unit >= size()) throw std::invalid_argument("meta_label: unit out of range");
  return labels[unit];
}

int Codebook::nearest(const double* row) const {
  const int d = dim();
  int best = 0;
  double best_sq = squared_distance(row, centroids_.row(0).data(), d);
  for (int u = 1; u < size(); ++u) {
    const double sq = squared_distance(row, centroids_.row(u).data(), d);
    if (sq < best_sq) {
      best_sq = sq;
      best = u;
    }
  }
  return best;
}

std::vector<int> Codebook::neighbours(int unit, int k) const {
  if (unit < 0 || unit >= size()) throw std::invalid_argument("neighbours: unit out of range");
  if (k < 1 || k > size()) throw std::invalid_argument("neighbours: k out of range");
  std::vector<double> dist(size());
  for (int u = 0; u < size(); ++u)
    dist[u] = squared_distance(centroids_.row(unit).data(), centroids_.row(u).data(), dim());
  std::vector<int> order(size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] < dist[b]; });
  order.resize(k);
  return order;
}

Codebook fit_kmeans(const Matrix& points, int k, int max_iters, std::uint64_t seed, KMeansStats* stats) {
  const int m = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  if (k < 1 || m < k) throw std::invalid_argument("fit_kmeans: need 1 <= K <= number of points");
  if (max_iters < 1) throw std::invalid_argument("fit_kmeans: max_iters must be >= 1");
  if (d < 1) throw std::invalid_argument("fit_kmeans: points need at least one column");
  check_finite(points, "fit_kmeans");

  Rng rng(derive_seed(seed, "kmeans++"));
  Matrix centroids(k, d);

  // k-means++ seeding.
  std::vector<double> closest(m, std::numeric_limits<double>::infinity());
  int first = std::uniform_int_distribution<int>(0, m - 1)(rng);
  centroids.row(0) = points.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
      closest[i] = std::min(closest[i], squared_distance(points.row(i).data(), centroids.row(c - 1).data(), d));
      total += closest[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = m - 1;
      for (int i = 0; i < m; ++i) {
        r -= closest[i];
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      // Every point coincides with a chosen centroid.
      pick = std::uniform_int_distribution<int>(0, m - 1)(rng);
    }
    centroids.row(c) = points.row(pick);
  }

  std::vector<int> assign(m, 0);
  std::vector<double> dist(m, 0.0);
  KMeansStats local;
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = iter == 0;
    for (int i = 0; i < m; ++i) {
      int best = 0;
      double best_sq = squared_distance(points.row(i).data(), centroids.row(0).data(), d);
      for (int c = 1; c < k; ++c) {
        const double sq = squared_distance(points.row(i).data(), centroids.row(c).data(), d);
        if (sq < best_sq) {
          best_sq = sq;
          best = c;
        }
      }
      if (best != assign[i]) changed = true;
      assign[i] = best;
      dist[i] = best_sq;
    }

    Matrix sums = Matrix::Zero(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < m; ++i) {
      sums.row(assign[i]) += points.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids.row(c) = sums.row(c) / counts[c];
        continue;
      }
      // Re-seed an empty cluster at the point farthest from its centroid.
      const int far = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      centroids.row(c) = points.row(far);
      dist[far] = 0.0;
      assign[far] = c;
      changed = true;
    }

    // WCSS after the update step; the next assignment step cannot raise it.
    double updated = 0.0;
    for (int i = 0; i < m; ++i) updated += squared_distance(points.row(i).data(), centroids.row(assign[i]).data(), d);
    local.objective.push_back(updated);
    local.iterations = iter + 1;
    if (!changed) break;
  }
  if (stats) *stats = std::move(local);
  return Codebook(std::move(centroids));
}

ContinuousSequence embed(const Codebook& cb, const UnitSequence& x) {
  ContinuousSequence v(static_cast<Eigen::Index>(x.size()), cb.dim());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= cb.size()) throw std::invalid_argument("embed: unit out of range");
    v.row(static_cast<Eigen::Index>(i)) = cb.centroids().row(x[i]);
  }
  return v;
}

UnitSequence quantize(const Codebook& cb, const ContinuousSequence& v) {
  if (v.cols() != cb.dim()) throw std::invalid_argument("quantize: column count does not match codebook dimension");
  UnitSequence x(static_cast<std::size_t>(v.rows()));
  for (Eigen::Index i = 0; i < v.rows(); ++i) x[static_cast<std::size_t>(i)] = cb.nearest(v.row(i).data());
  return x;
}

UnitSequence knn_perturb(const Codebook& cb, const UnitSequence& x, int k, std::uint64_t seed) {
  if (k < 1 || k > cb.size()) throw std::invalid_argument("knn_perturb: k must be in [1, K]");
  std::vector<std::vector<int>> cache(cb.size());
  Rng rng(derive_seed(seed, "knn_perturb"));
  std::uniform_int_distribution<int> pick(0, k - 1);
  UnitSequence out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < 0 || x[i] >= cb.size()) throw std::invalid_argument("knn_perturb: unit out of range");
    auto& nn = cache[x[i]];
    if (nn.empty()) nn = cb.neighbours(x[i], k);
    out[i] = nn[pick(rng)];
  }
  return out;
}

Codebook make_structured_codebook(int classes, int per_class, int dim, double s_meta, double s_intra,
                                  std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("make_structured_codebook: need at least 2 classes");
  if (per_class < 1 || dim < 1) throw std::invalid_argument("make_structured_codebook: per_class and dim must be >= 1");
  if (!(s_meta > 0.0) || !(s_intra > 0.0)) throw std::invalid_argument("make_structured_codebook: scales must be positive");
  if (!(s_meta > s_intra)) throw std::invalid_argument("make_structured_codebook: need s_meta > s_intra");

  const double radius = s_meta * std::sqrt(static_cast<double>(dim));
  std::vector<int> labels(static_cast<std::size_t>(classes) * per_class);
  for (std::size_t u = 0; u < labels.size(); ++u) labels[u] = static_cast<int>(u) / per_class;

  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(derive_seed(seed, "structured_codebook"), attempt));
    const Matrix means = standard_normal(classes, dim, rng) * s_meta;
    Matrix centroids = standard_normal(classes * per_class, dim, rng) * s_intra;
    for (int c = 0; c < classes; ++c)
      for (int j = 0; j < per_class; ++j) centroids.row(c * per_class + j) += means.row(c);
    for (Eigen::Index u = 0; u < centroids.rows(); ++u) centroids.row(u) *= radius / centroids.row(u).norm();
    try {
      return Codebook(std::move(centroids), labels);
    } catch (const std::invalid_argument&) {
      if (attempt >= 16) throw;
    }
  }
}

std::string codebook_to_json(const Codebook& cb) {
  std::ostringstream out;
  out << "{\"version\":1,\"K\":" << cb.size() << ",\"D\":" << cb.dim() << ",\"centroids\":[";
  for (int u = 0; u < cb.size(); ++u) {
    out << (u ? ",[" : "[");
    for (int j = 0; j < cb.dim(); ++j) out << (j ? "," : "") << io::format_double(cb.centroids()(u, j));
    out << "]";
  }
  out << "],\"meta_labels\":";
  if (cb.has_meta_labels()) {
    out << "[";
    const auto& labels = cb.meta_labels();
    for (std::size_t u = 0; u < labels.size(); ++u) out << (u ? "," : "") << labels[u];
    out << "]";
  } else {
    out << "null";
  }
  out << "}\n";
  return out.str();
}

Codebook codebook_from_json(const std::string& text) {
  const auto doc = nlohmann::json::parse(text);
  if (doc.at("version").get<int>() != 1) throw std::invalid_argument("codebook: unsupported version");
  const int k = doc.at("K").get<int>();
  const int d = doc.at("D").get<int>();
  const auto& rows = doc.at("centroids");
  if (k < 1 || d < 1 || static_cast<int>(rows.size()) != k) throw std::invalid_argument("codebook: K does not match centroid rows");
  Matrix centroids(k, d);
  for (int u = 0; u < k; ++u) {
    if (static_cast<int>(rows[u].size()) != d) throw std::invalid_argument("codebook: row width does not match D");
    for (int j = 0; j < d; ++j) centroids(u, j) = rows[u][j].get<double>();
  }
  std::optional<std::vector<int>> labels;
  if (!doc.at("meta_labels").is_null()) labels = doc.at("meta_labels").get<std::vector<int>>();
  return Codebook(std::move(centroids), std::move(labels));
}

void save_codebook(const Codebook& cb, const std::filesystem::path& path) {
  io::write_file(path, codebook_to_json(cb));
}

Codebook load_codebook(const std::filesystem::path& path) { return codebook_from_json(io::read_file(path)); }

std::vector<int> meta_collapse(const Codebook& cb, const UnitSequence& x) {
  std::vector<int> out;
  for (int u : x) {
    const int label = cb.meta_label(u);
    if (out.empty() || out.back() != label) out.push_back(label);
  }
  return out;
}

}  // namespace unitdiff
