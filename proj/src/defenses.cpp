#include "poison/defenses.hpp"

#include "poison/error.hpp"
#include "poison/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace poison {

std::string to_string(DefenseKind kind) {
  switch (kind) {
    case DefenseKind::L2: return "l2";
    case DefenseKind::Slab: return "slab";
    case DefenseKind::Loss: return "loss";
    case DefenseKind::Svd: return "svd";
    case DefenseKind::Knn: return "knn";
  }
  return "l2";
}

DefenseKind parse_defense(const std::string& name) {
  for (DefenseKind kind : all_defenses())
    if (to_string(kind) == name) return kind;
  throw ValidationError("unknown defense '" + name + "'");
}

const std::vector<DefenseKind>& all_defenses() {
  static const std::vector<DefenseKind> kinds{DefenseKind::L2, DefenseKind::Slab, DefenseKind::Loss, DefenseKind::Svd,
                                              DefenseKind::Knn};
  return kinds;
}

std::pair<Vector, Vector> class_centroids(const Dataset& data) {
  Vector plus = Vector::Zero(data.dim());
  Vector minus = Vector::Zero(data.dim());
  double wp = 0.0, wm = 0.0;
  for (Index i = 0; i < data.size(); ++i) {
    if (data.y(i) > 0) {
      plus += data.w(i) * data.x(i).transpose();
      wp += data.w(i);
    } else {
      minus += data.w(i) * data.x(i).transpose();
      wm += data.w(i);
    }
  }
  if (wp <= 0.0 || wm <= 0.0) throw ValidationError("centroids need both classes with positive weight");
  return {plus / wp, minus / wm};
}

namespace {

Eigen::MatrixXd svd_basis(const Dataset& data, double frob_target) {
  if (!(frob_target > 0.0 && frob_target < 1.0)) throw ValidationError("SVD target must lie in (0, 1)");
  Eigen::MatrixXd X(data.size(), data.dim());
  for (Index i = 0; i < data.size(); ++i) X.row(i) = std::sqrt(data.w(i)) * data.x(i);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  Vector s2 = svd.singularValues().array().square();
  double total = s2.sum();
  if (!(total > 0.0)) throw SolverError("SVD defense cannot be fitted on an all-zero data matrix");
  double tail = total;
  Index rank = 0;
  while (rank < s2.size() && tail / total > frob_target) {
    tail -= s2[rank];
    ++rank;
  }
  rank = std::max<Index>(rank, 1);
  return svd.matrixV().leftCols(rank);
}

// Smallest radius whose ball holds at least k units of weight.
double kth_distance(std::vector<std::pair<double, double>>& dist_weight, double k) {
  if (dist_weight.empty()) return 0.0;
  std::sort(dist_weight.begin(), dist_weight.end());
  double acc = 0.0;
  for (const auto& [dist, w] : dist_weight) {
    acc += w;
    if (acc >= k * (1.0 - 1e-12)) return dist;
  }
  return dist_weight.back().first;
}

double knn_score(const DetectorParams& beta, const Eigen::Ref<const Vector>& x, Index self) {
  const Dataset& ref = beta.reference;
  std::vector<std::pair<double, double>> dw;
  dw.reserve(static_cast<std::size_t>(ref.size()));
  for (Index j = 0; j < ref.size(); ++j) {
    double w = ref.w(j);
    if (j == self) w -= 1.0;
    if (w <= 0.0) continue;
    dw.emplace_back((ref.x(j).transpose() - x).norm(), w);
  }
  return kth_distance(dw, beta.k);
}

}  // namespace

DetectorParams fit_detector(const DefenseSpec& spec, const Dataset& data) {
  if (data.empty()) throw ValidationError("cannot fit a detector on an empty dataset");
  DetectorParams beta;
  beta.kind = spec.kind;
  switch (spec.kind) {
    case DefenseKind::L2:
    case DefenseKind::Slab: {
      auto [plus, minus] = class_centroids(data);
      beta.mu_plus = std::move(plus);
      beta.mu_minus = std::move(minus);
      break;
    }
    case DefenseKind::Loss: beta.model = train(data, spec.loss, spec.train); break;
    case DefenseKind::Svd: beta.basis = svd_basis(data, spec.frob_target); break;
    case DefenseKind::Knn:
      if (spec.k < 1) throw ValidationError("k-NN defense needs k >= 1");
      beta.reference = data;
      beta.k = spec.k;
      break;
  }
  return beta;
}

double score(const DetectorParams& beta, const Eigen::Ref<const Vector>& x, int y) {
  switch (beta.kind) {
    case DefenseKind::L2: return (x - beta.centroid(y)).norm();
    case DefenseKind::Slab: return std::abs((beta.mu_plus - beta.mu_minus).dot(x - beta.centroid(y)));
    case DefenseKind::Loss: return loss_point(beta.model.loss, beta.model.theta, x, y);
    case DefenseKind::Svd: return (x - beta.basis * (beta.basis.transpose() * x)).norm();
    case DefenseKind::Knn: return knn_score(beta, x, -1);
  }
  return 0.0;
}

Vector score_all(const DetectorParams& beta, const Dataset& data, bool data_is_reference) {
  Vector out(data.size());
  if (beta.kind == DefenseKind::Knn) {
    if (data_is_reference && data.size() != beta.reference.size())
      throw ValidationError("k-NN scoring of the reference set needs the reference set itself");
    parallel_for(static_cast<std::size_t>(data.size()), [&](std::size_t i) {
      Index idx = static_cast<Index>(i);
      out[idx] = knn_score(beta, data.x(idx).transpose(), data_is_reference ? idx : -1);
    });
    return out;
  }
  for (Index i = 0; i < data.size(); ++i) out[i] = score(beta, data.x(i).transpose(), data.y(i));
  return out;
}

Thresholds thresholds_from_scores(const Vector& scores, const Dataset& data, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("removal fraction p must lie in (0, 1)");
  auto for_class = [&](int y) {
    std::vector<std::pair<double, double>> sw;
    double total = 0.0;
    for (Index i = 0; i < data.size(); ++i) {
      if (data.y(i) != y) continue;
      sw.emplace_back(scores[i], data.w(i));
      total += data.w(i);
    }
    if (sw.empty()) throw ValidationError("cannot fit a threshold for an absent class");
    std::sort(sw.begin(), sw.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double budget = p * total * (1.0 + 1e-12);
    double tau = std::nextafter(sw.front().first, INFINITY);
    double tail = 0.0;
    std::size_t i = 0;
    while (i < sw.size()) {
      std::size_t j = i;
      double value = sw[i].first;
      while (j < sw.size() && sw[j].first == value) tail += sw[j++].second;
      if (tail > budget) break;
      tau = value;
      i = j;
    }
    return tau;
  };
  Thresholds tau;
  tau.minus = for_class(-1);
  tau.plus = for_class(1);
  return tau;
}

Thresholds fit_thresholds(const DetectorParams& beta, const Dataset& data, double p) {
  return thresholds_from_scores(score_all(beta, data, beta.kind == DefenseKind::Knn), data, p);
}

std::vector<Index> kept_indices(const Vector& scores, const Dataset& data, const Thresholds& tau) {
  std::vector<Index> kept;
  for (Index i = 0; i < data.size(); ++i)
    if (scores[i] < tau[data.y(i)]) kept.push_back(i);
  return kept;
}

Dataset sanitize(const Dataset& data, const DetectorParams& beta, const Thresholds& tau) {
  return data.subset(kept_indices(score_all(beta, data, beta.kind == DefenseKind::Knn), data, tau));
}

DefenseOutcome defend_and_train(const Dataset& clean, const Dataset& poison, const DefenseSpec& spec, double p,
                                const LossSpec& loss, const TrainConfig& config) {
  Dataset all = combine(clean, poison);
  DefenseSpec detector = spec;
  detector.loss = loss;
  detector.train = config;
  if (std::holds_alternative<SgdSinglePass>(detector.train.optimizer)) detector.train.optimizer = BatchExact{};
  DetectorParams beta = fit_detector(detector, all);
  Vector scores = score_all(beta, all, spec.kind == DefenseKind::Knn);
  DefenseOutcome out;
  out.kind = spec.kind;
  out.p = p;
  out.tau = thresholds_from_scores(scores, all, p);
  std::vector<Index> kept = kept_indices(scores, all, out.tau);
  Index kept_clean = std::count_if(kept.begin(), kept.end(), [&](Index i) { return i < clean.size(); });
  out.removed_clean = clean.size() - kept_clean;
  out.removed_poison = poison.size() - (static_cast<Index>(kept.size()) - kept_clean);
  Dataset sanitized = all.subset(kept);
  if (!sanitized.has_both_classes()) throw ValidationError("sanitized training set lacks one of the classes");
  out.model = train(sanitized, loss, config);
  return out;
}

}  // namespace poison
