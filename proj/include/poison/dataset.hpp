#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace poison {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

enum class InputDomain { Reals, UnitInterval, NonnegInteger };

std::string to_string(InputDomain domain);
InputDomain parse_domain(const std::string& name);

/// True when x satisfies the domain rule (finite, box, integrality).
bool in_domain(InputDomain domain, const Eigen::Ref<const Vector>& x);

struct LabeledPoint {
  Vector x;
  int y = 1;
  double w = 1.0;
};

/// Weighted multiset of labeled points sharing one dimension and input domain.
/// Weights stand in for (possibly fractional) repeated copies.
class Dataset {
 public:
  explicit Dataset(Index dim = 0, InputDomain domain = InputDomain::Reals);

  static Dataset from_points(Index dim, InputDomain domain, const std::vector<LabeledPoint>& points);

  /// Appends a point. Labels must be -1 or +1 and weights non-negative.
  void add(const Eigen::Ref<const Vector>& x, int y, double w = 1.0);
  void reserve(Index n);

  Index size() const { return n_; }
  bool empty() const { return n_ == 0; }
  Index dim() const { return d_; }
  InputDomain domain() const { return domain_; }
  double total_weight() const { return total_weight_; }

  auto features() const { return X_.topRows(n_); }
  auto labels() const { return y_.head(n_); }
  auto weights() const { return w_.head(n_); }

  /// Row view of point i (a row vector; transpose before mixing with column vectors).
  auto x(Index i) const { return X_.row(i); }
  int y(Index i) const { return y_[i] > 0 ? 1 : -1; }
  double w(Index i) const { return w_[i]; }
  LabeledPoint point(Index i) const;

  void set_weight(Index i, double w);
  void set_domain(InputDomain domain) { domain_ = domain; }

  double class_weight(int y) const;
  Index class_count(int y) const;
  bool has_both_classes() const;

  /// Points at the given indices, in that order.
  Dataset subset(const std::vector<Index>& indices) const;
  /// Copy with every weight multiplied by factor.
  Dataset scaled(double factor) const;

  /// Throws ValidationError naming the first point that breaks the domain rule.
  void validate() const;

  friend bool operator==(const Dataset& a, const Dataset& b);
  friend Dataset combine(const Dataset& a, const Dataset& b);

 private:
  Index d_;
  Index n_ = 0;
  InputDomain domain_;
  double total_weight_ = 0.0;
  RowMatrix X_;
  Vector y_;
  Vector w_;
};

/// Weighted multiset union: a's points followed by b's. Total weight is a's plus b's.
Dataset combine(const Dataset& a, const Dataset& b);

enum class DataFormat { SparseText, DenseCsv };

DataFormat parse_format(const std::string& name);

/// Loads a dataset with unit weights. A JSON sidecar at `<path>.json` holding
/// {"d": ..., "domain": ...} fixes the dimension and domain when present; otherwise the
/// dimension is inferred and `domain` is used.
Dataset load_dataset(const std::filesystem::path& path, DataFormat format, InputDomain domain);
Dataset load_dataset(const std::filesystem::path& path, DataFormat format);

/// Writes features and labels (weights are not part of either text format) plus the sidecar.
void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format);

/// Two isotropic unit-variance Gaussian classes with means +-(separation/2) e_1.
/// Train and test sets both hold n points drawn from disjoint parts of the stream.
std::pair<Dataset, Dataset> synth_gaussians(std::uint64_t seed, Index n, Index d,
                                            double mean_separation, double class_balance);

}  // namespace poison
