#pragma once

#include "poison/dataset.hpp"
#include "poison/linear_model.hpp"

#include <string>
#include <vector>

namespace poison {

enum class DefenseKind { L2, Slab, Loss, Svd, Knn };

std::string to_string(DefenseKind kind);
DefenseKind parse_defense(const std::string& name);
const std::vector<DefenseKind>& all_defenses();

struct DefenseSpec {
  DefenseKind kind = DefenseKind::L2;
  double frob_target = 0.05;  ///< Svd: allowed normalized squared residual
  int k = 5;                  ///< Knn: neighbor rank
  // Loss: detector model settings (the pipeline overrides these with the defender's).
  LossSpec loss;
  TrainConfig train;

  static DefenseSpec of(DefenseKind kind) {
    DefenseSpec spec;
    spec.kind = kind;
    return spec;
  }
};

/// Fitted anomaly-detector statistics.
struct DetectorParams {
  DefenseKind kind = DefenseKind::L2;
  Vector mu_plus;
  Vector mu_minus;
  ModelParams model;      ///< Loss
  Eigen::MatrixXd basis;  ///< Svd: orthonormal columns
  Dataset reference;      ///< Knn
  int k = 5;

  const Vector& centroid(int y) const { return y > 0 ? mu_plus : mu_minus; }
};

/// Weighted class means. Throws when a class is absent.
std::pair<Vector, Vector> class_centroids(const Dataset& data);

DetectorParams fit_detector(const DefenseSpec& spec, const Dataset& data);

/// Anomaly score of one point against the detector (larger is more anomalous).
double score(const DetectorParams& beta, const Eigen::Ref<const Vector>& x, int y);

/// Scores every point of `data`. When `data_is_reference` is set, `data` must be the
/// k-NN reference set itself and each point's own unit of weight is left out of its query.
Vector score_all(const DetectorParams& beta, const Dataset& data, bool data_is_reference);

struct Thresholds {
  double minus = 0.0;
  double plus = 0.0;
  double operator[](int y) const { return y > 0 ? plus : minus; }
};

/// Per-class nearest-rank threshold: the smallest score value whose upper tail weighs at
/// most p times the class weight; if no such value exists every point is kept.
Thresholds thresholds_from_scores(const Vector& scores, const Dataset& data, double p);
/// Thresholds on the data the detector was fitted on.
Thresholds fit_thresholds(const DetectorParams& beta, const Dataset& data, double p);

/// Indices of points with score strictly below their class threshold.
std::vector<Index> kept_indices(const Vector& scores, const Dataset& data, const Thresholds& tau);
/// Keeps points of the detector's own fitting data that score strictly below threshold.
Dataset sanitize(const Dataset& data, const DetectorParams& beta, const Thresholds& tau);

struct DefenseOutcome {
  DefenseKind kind = DefenseKind::L2;
  double p = 0.0;
  Thresholds tau;
  ModelParams model;
  Index removed_clean = 0;
  Index removed_poison = 0;
};

/// Fits the detector and thresholds on D_c and D_p together, sanitizes, and trains.
/// The Loss detector trains with the defender's loss and config.
DefenseOutcome defend_and_train(const Dataset& clean, const Dataset& poison, const DefenseSpec& spec, double p,
                                const LossSpec& loss, const TrainConfig& config);

}  // namespace poison
